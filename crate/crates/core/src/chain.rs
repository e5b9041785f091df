//! Approximate exponentials of commutators, built from one step-table
//! generator: a degree-d basis element unfolds into a group-commutator
//! cycle of elementary flows, and the chain map, its unfolding into slot
//! coordinates, and the slot-coordinate flow all read the same table.

use crate::basis::{degree_root, CommutatorBasis, MultiIndex};
use crate::error::{Error, Result};
use crate::flow::{run_program, FlowProgram, FlowStep};

/// Number of elementary steps in the degree-d cycle: 2^d - 2 + 2^(d-1).
pub fn chain_length(d: u32) -> usize {
    assert!(d >= 1, "degree must be positive");
    (1usize << d) - 2 + (1usize << (d - 1))
}

/// Upper bound on total slot count for any multi-index of a basis with
/// spanning step r in dimension n: 2n(2^(r+1) - 2 + 2^(r-1)).
pub fn length_cap(n: usize, r: usize) -> usize {
    assert!(r >= 1, "spanning step must be positive");
    2 * n * ((1usize << (r + 1)) - 2 + (1usize << (r - 1)))
}

fn negate(steps: &mut [(usize, i8)]) {
    for s in steps.iter_mut() {
        s.1 = -s.1;
    }
}

/// Elementary steps realizing the group commutator of the right-nested
/// bracket over `word`, in execution order (first entry runs first). The
/// recursion on word = (f, tail): run f forward, the tail cycle, f
/// backward, then the tail cycle inverted.
pub fn commutator_steps(word: &[usize]) -> Vec<(usize, i8)> {
    match word {
        [] => panic!("empty source word"),
        [f] => vec![(*f, 1)],
        [f, tail @ ..] => {
            let inner = commutator_steps(tail);
            let mut steps = Vec::with_capacity(2 * inner.len() + 2);
            steps.push((*f, 1));
            steps.extend_from_slice(&inner);
            steps.push((*f, -1));
            let mut undo = inner;
            undo.reverse();
            negate(&mut undo);
            steps.extend(undo);
            steps
        }
    }
}

/// The expanded program of one approximate exponential e^(h Y_k).
#[derive(Clone, Debug, PartialEq)]
pub struct ApproxExpSpec {
    element: usize,
    displacement: f64,
    program: FlowProgram,
    length: usize,
}

impl ApproxExpSpec {
    pub fn element(&self) -> usize {
        self.element
    }

    pub fn displacement(&self) -> f64 {
        self.displacement
    }

    pub fn program(&self) -> &FlowProgram {
        &self.program
    }

    pub fn length(&self) -> usize {
        self.length
    }
}

/// Expands e^(h Y_k) into elementary steps of common duration |h|^(1/d_k).
/// Negative h runs the reversed program with flipped signs.
pub fn approx_exp_program(basis: &CommutatorBasis, k: usize, h: f64) -> Result<ApproxExpSpec> {
    if !h.is_finite() {
        return Err(Error::NonFinite);
    }
    let d = basis.degree(k)?;
    let word = basis.source(k)?;
    let mut steps = commutator_steps(word);
    if h < 0.0 {
        steps.reverse();
        negate(&mut steps);
    }
    let tau = degree_root(h, d);
    let program = FlowProgram::new(
        steps
            .into_iter()
            .map(|(field, sign)| FlowStep { field, sign, t: tau })
            .collect(),
    )?;
    let length = program.len();
    debug_assert_eq!(length, chain_length(d));
    Ok(ApproxExpSpec {
        element: k,
        displacement: h,
        program,
        length,
    })
}

/// Composition of the approximate exponentials e^(h_k Y_{i_k}) applied to
/// x, block k = 1 first.
pub fn exp_chain(
    basis: &CommutatorBasis,
    index: &MultiIndex,
    x: &[f64],
    h: &[f64],
    step: f64,
) -> Result<Vec<f64>> {
    if h.len() != index.entries().len() {
        return Err(Error::DimensionMismatch {
            expected: index.entries().len(),
            got: h.len(),
        });
    }
    let mut state = x.to_vec();
    for (&k, &hk) in index.entries().iter().zip(h) {
        let spec = approx_exp_program(basis, k, hk)?;
        state = run_program(basis.system(), spec.program(), &state, step)?;
    }
    Ok(state)
}

/// Slot coordinates for the unfolded flow: per block k, first the forward
/// group (one slot per elementary step), then the backward group of the
/// same width.
#[derive(Clone, Debug, PartialEq)]
pub struct UnfoldedCoordinates {
    index: MultiIndex,
    w: Vec<f64>,
}

impl UnfoldedCoordinates {
    pub fn new(index: MultiIndex, w: Vec<f64>) -> Result<Self> {
        let expected: usize = index
            .entry_degrees()
            .iter()
            .map(|&d| 2 * chain_length(d))
            .sum();
        if w.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                got: w.len(),
            });
        }
        Ok(UnfoldedCoordinates { index, w })
    }

    pub fn index(&self) -> &MultiIndex {
        &self.index
    }

    pub fn w(&self) -> &[f64] {
        &self.w
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    /// Max norm over all slots.
    pub fn norm(&self) -> f64 {
        self.w.iter().fold(0.0, |m, &v| m.max(v.abs()))
    }
}

/// Unfolds a displacement h into slot coordinates: for h_k >= 0 the forward
/// group carries the signed step durations and the backward group is zero;
/// for h_k < 0 the backward group carries the inverted program.
pub fn unfold(basis: &CommutatorBasis, index: &MultiIndex, h: &[f64]) -> Result<UnfoldedCoordinates> {
    if h.len() != index.entries().len() {
        return Err(Error::DimensionMismatch {
            expected: index.entries().len(),
            got: h.len(),
        });
    }
    let mut w = Vec::new();
    for (&k, &hk) in index.entries().iter().zip(h) {
        if !hk.is_finite() {
            return Err(Error::NonFinite);
        }
        let d = basis.degree(k)?;
        let steps = commutator_steps(basis.source(k)?);
        let nk = steps.len();
        debug_assert_eq!(nk, chain_length(d));
        let tau = degree_root(hk, d);
        if hk >= 0.0 {
            for &(_, sign) in &steps {
                w.push(f64::from(sign) * tau);
            }
            w.extend(std::iter::repeat(0.0).take(nk));
        } else {
            w.extend(std::iter::repeat(0.0).take(nk));
            for s in 1..=nk {
                w.push(-f64::from(steps[nk - s].1) * tau);
            }
        }
    }
    UnfoldedCoordinates::new(index.clone(), w)
}

/// Runs the slot-coordinate flow: per block k, the forward group drives
/// field table entries 1..N_k in order, then the backward group drives the
/// table reversed, each slot contributing its signed duration.
pub fn unfolded_flow(
    basis: &CommutatorBasis,
    x: &[f64],
    coords: &UnfoldedCoordinates,
    step: f64,
) -> Result<Vec<f64>> {
    let mut program_steps = Vec::with_capacity(coords.len());
    let mut offset = 0;
    for &k in coords.index().entries() {
        let steps = commutator_steps(basis.source(k)?);
        let nk = steps.len();
        for s in 0..nk {
            let v = coords.w()[offset + s];
            program_steps.push(FlowStep {
                field: steps[s].0,
                sign: if v < 0.0 { -1 } else { 1 },
                t: v.abs(),
            });
        }
        for s in 0..nk {
            let v = coords.w()[offset + nk + s];
            program_steps.push(FlowStep {
                field: steps[nk - 1 - s].0,
                sign: if v < 0.0 { -1 } else { 1 },
                t: v.abs(),
            });
        }
        offset += 2 * nk;
    }
    let program = FlowProgram::new(program_steps)?;
    run_program(basis.system(), &program, x, step)
}

/// Per-element cycle lengths, their doubled sum (the slot count), and the
/// basis-wide cap.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LengthProfile {
    pub per_element: Vec<usize>,
    pub total: usize,
    pub cap: usize,
}

pub fn length_profile(basis: &CommutatorBasis, index: &MultiIndex) -> LengthProfile {
    let per_element: Vec<usize> = index
        .entry_degrees()
        .iter()
        .map(|&d| chain_length(d))
        .collect();
    let total = 2 * per_element.iter().sum::<usize>();
    let cap = length_cap(basis.dim(), basis.spanning_step());
    assert!(total <= cap);
    LengthProfile {
        per_element,
        total,
        cap,
    }
}
