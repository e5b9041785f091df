//! Flows of polynomial vector fields by fixed-step RK4, their Jacobians via
//! the variational equation, and executable flow programs.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vecfield::{VectorField, VectorFieldSystem};

pub const DEFAULT_STEP: f64 = 1e-2;
pub const BLOWUP_LIMIT: f64 = 1e12;

/// Reusable RK4 buffers so the hot loops do not allocate per call.
#[derive(Clone, Debug)]
pub struct FlowScratch {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl FlowScratch {
    pub fn new(dim: usize) -> Self {
        FlowScratch {
            k1: vec![0.0; dim],
            k2: vec![0.0; dim],
            k3: vec![0.0; dim],
            k4: vec![0.0; dim],
            tmp: vec![0.0; dim],
        }
    }
}

fn substep_count(t: f64, step: f64) -> usize {
    if t == 0.0 {
        0
    } else {
        (t.abs() / step).ceil() as usize
    }
}

/// Advances `state` along the flow of `field` for (signed) time `t` with
/// ceil(|t|/step) uniform RK4 steps. No finiteness checks; callers that can
/// leave compact sets must inspect the result.
pub fn flow_in_place(
    field: &VectorField,
    state: &mut [f64],
    t: f64,
    step: f64,
    scratch: &mut FlowScratch,
) {
    let steps = substep_count(t, step);
    if steps == 0 {
        return;
    }
    let dt = t / steps as f64;
    let n = state.len();
    for _ in 0..steps {
        field.eval_into(state, &mut scratch.k1);
        for i in 0..n {
            scratch.tmp[i] = state[i] + 0.5 * dt * scratch.k1[i];
        }
        field.eval_into(&scratch.tmp, &mut scratch.k2);
        for i in 0..n {
            scratch.tmp[i] = state[i] + 0.5 * dt * scratch.k2[i];
        }
        field.eval_into(&scratch.tmp, &mut scratch.k3);
        for i in 0..n {
            scratch.tmp[i] = state[i] + dt * scratch.k3[i];
        }
        field.eval_into(&scratch.tmp, &mut scratch.k4);
        for i in 0..n {
            state[i] +=
                dt / 6.0 * (scratch.k1[i] + 2.0 * scratch.k2[i] + 2.0 * scratch.k3[i] + scratch.k4[i]);
        }
    }
}

fn check_state(state: &[f64], stage: usize) -> Result<()> {
    for &v in state {
        if !v.is_finite() || v.abs() > BLOWUP_LIMIT {
            return Err(Error::BlowUp {
                stage,
                limit: BLOWUP_LIMIT,
            });
        }
    }
    Ok(())
}

/// Point of the flow of `field` through `x` at time `t`.
pub fn flow(field: &VectorField, x: &[f64], t: f64, step: f64) -> Result<Vec<f64>> {
    if step <= 0.0 {
        return Err(Error::InvalidParam("integration step must be positive".into()));
    }
    if x.len() != field.dim() {
        return Err(Error::DimensionMismatch {
            expected: field.dim(),
            got: x.len(),
        });
    }
    let mut state = x.to_vec();
    let mut scratch = FlowScratch::new(x.len());
    flow_in_place(field, &mut state, t, step, &mut scratch);
    check_state(&state, 0)?;
    Ok(state)
}

/// Flow Jacobian DΦ^X_t(x) and its determinant, from RK4 on the system
/// coupled with its variational equation J' = DX(γ) J.
pub fn flow_jacobian(
    field: &VectorField,
    x: &[f64],
    t: f64,
    step: f64,
) -> Result<(DMatrix<f64>, f64)> {
    if step <= 0.0 {
        return Err(Error::InvalidParam("integration step must be positive".into()));
    }
    let n = field.dim();
    if x.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: x.len(),
        });
    }
    let partials = field.partial_matrix();
    // state layout: n point coordinates, then the Jacobian in row-major order
    let dim = n + n * n;
    let mut state = vec![0.0; dim];
    state[..n].copy_from_slice(x);
    for i in 0..n {
        state[n + i * n + i] = 1.0;
    }
    let rhs = |s: &[f64], out: &mut [f64]| {
        let (pt, jac) = s.split_at(n);
        for i in 0..n {
            out[i] = field.component(i).eval(pt);
        }
        for i in 0..n {
            for j in 0..n {
                let mut acc = 0.0;
                for l in 0..n {
                    acc += partials[i][l].eval(pt) * jac[l * n + j];
                }
                out[n + i * n + j] = acc;
            }
        }
    };
    let steps = substep_count(t, step);
    let dt = if steps == 0 { 0.0 } else { t / steps as f64 };
    let mut k1 = vec![0.0; dim];
    let mut k2 = vec![0.0; dim];
    let mut k3 = vec![0.0; dim];
    let mut k4 = vec![0.0; dim];
    let mut tmp = vec![0.0; dim];
    for _ in 0..steps {
        rhs(&state, &mut k1);
        for i in 0..dim {
            tmp[i] = state[i] + 0.5 * dt * k1[i];
        }
        rhs(&tmp, &mut k2);
        for i in 0..dim {
            tmp[i] = state[i] + 0.5 * dt * k2[i];
        }
        rhs(&tmp, &mut k3);
        for i in 0..dim {
            tmp[i] = state[i] + dt * k3[i];
        }
        rhs(&tmp, &mut k4);
        for i in 0..dim {
            state[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        check_state(&state, 0)?;
    }
    let jac = DMatrix::from_fn(n, n, |i, j| state[n + i * n + j]);
    let det = jac.clone().lu().determinant();
    Ok((jac, det))
}

/// One elementary leg of a flow program: the flow of `sign * X_field` for
/// duration `t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowStep {
    pub field: usize,
    pub sign: i8,
    pub t: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<FlowStep>")]
#[serde(into = "Vec<FlowStep>")]
pub struct FlowProgram {
    steps: Vec<FlowStep>,
}

impl FlowProgram {
    pub fn new(steps: Vec<FlowStep>) -> Result<Self> {
        for s in &steps {
            if s.sign != 1 && s.sign != -1 {
                return Err(Error::InvalidParam(format!("step sign must be ±1, got {}", s.sign)));
            }
            if !s.t.is_finite() || s.t < 0.0 {
                return Err(Error::InvalidParam(format!(
                    "step duration must be finite and non-negative, got {}",
                    s.t
                )));
            }
            if s.field == 0 {
                return Err(Error::IndexOutOfRange { index: 0, len: 0 });
            }
        }
        Ok(FlowProgram { steps })
    }

    pub fn empty() -> Self {
        FlowProgram { steps: Vec::new() }
    }

    pub fn steps(&self) -> &[FlowStep] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// The program undoing this one: reversed order, flipped signs.
    pub fn inverse(&self) -> Self {
        FlowProgram {
            steps: self
                .steps
                .iter()
                .rev()
                .map(|s| FlowStep {
                    field: s.field,
                    sign: -s.sign,
                    t: s.t,
                })
                .collect(),
        }
    }
}

impl TryFrom<Vec<FlowStep>> for FlowProgram {
    type Error = Error;
    fn try_from(steps: Vec<FlowStep>) -> Result<Self> {
        FlowProgram::new(steps)
    }
}

impl From<FlowProgram> for Vec<FlowStep> {
    fn from(p: FlowProgram) -> Self {
        p.steps
    }
}

/// Runs the program legs in listed order. A failure carries the 1-based
/// index of the leg that blew up.
pub fn run_program(
    system: &VectorFieldSystem,
    program: &FlowProgram,
    x: &[f64],
    step: f64,
) -> Result<Vec<f64>> {
    if step <= 0.0 {
        return Err(Error::InvalidParam("integration step must be positive".into()));
    }
    if x.len() != system.dim() {
        return Err(Error::DimensionMismatch {
            expected: system.dim(),
            got: x.len(),
        });
    }
    let mut state = x.to_vec();
    let mut scratch = FlowScratch::new(x.len());
    for (idx, s) in program.steps().iter().enumerate() {
        let field = system.field(s.field)?;
        let t = f64::from(s.sign) * s.t;
        flow_in_place(field, &mut state, t, step, &mut scratch);
        check_state(&state, idx + 1)?;
    }
    Ok(state)
}
