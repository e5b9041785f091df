//! Grid-backed upper bounds on control distances: breadth-first expansion
//! of constant-control flow moves from an origin, with first-touch cell
//! marking. Every move costs its duration, so the search is uniform-cost
//! and each cell keeps the cheapest representative endpoint.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{flow_in_place, FlowScratch, DEFAULT_STEP};
use crate::grid::GridSpec;
use crate::vecfield::{VectorField, VectorFieldSystem};

const UNREACHED: u32 = u32::MAX;

/// Which constant controls generate the moves.
///
/// `Signed` flows sum_j e_j X_j over all nonzero sign patterns e in
/// {-1,0,1}^m; these are admissible curves for the simultaneous-control
/// distance, so values upper-bound it. `Axis` flows single fields ±X_j
/// only, the piecewise-one-field curve class, so values upper-bound the
/// (larger) piecewise metric.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MoveSet {
    Signed,
    Axis,
}

/// Search parameters. Refine tau and the grid cell size together: a move
/// only spawns new representatives when its trajectory escapes the current
/// cell, so tau times the local field speed should stay at or above the
/// cell size.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FieldParams {
    /// Duration (and cost) of one move.
    pub tau: f64,
    /// Total cost budget; cells beyond it stay unreached.
    pub budget: f64,
    /// RK4 step for each move's integration.
    pub step: f64,
    pub moves: MoveSet,
    /// Each control pattern also runs for the fractions j/splits of tau,
    /// all at the full move cost. Idling is an admissible control, so a
    /// point reached in less than tau is reachable at cost tau; the extra
    /// durations densify the explored trajectory tree without changing
    /// what the values mean.
    pub splits: u32,
}

impl Default for FieldParams {
    fn default() -> Self {
        FieldParams {
            tau: 0.05,
            budget: 2.0,
            step: DEFAULT_STEP,
            moves: MoveSet::Signed,
            splits: 2,
        }
    }
}

fn move_fields(system: &VectorFieldSystem, moves: MoveSet) -> Result<Vec<VectorField>> {
    let m = system.num_fields();
    match moves {
        MoveSet::Axis => {
            let mut out = Vec::with_capacity(2 * m);
            for j in 1..=m {
                let f = system.field(j)?;
                out.push(f.clone());
                out.push(f.scale(-1.0));
            }
            Ok(out)
        }
        MoveSet::Signed => {
            let mut out = Vec::with_capacity(3usize.pow(m as u32) - 1);
            let mut eps = vec![-1.0f64; m];
            loop {
                if eps.iter().any(|&e| e != 0.0) {
                    out.push(system.combination(&eps)?);
                }
                let mut i = m;
                loop {
                    if i == 0 {
                        return Ok(out);
                    }
                    i -= 1;
                    eps[i] += 1.0;
                    if eps[i] <= 1.0 {
                        break;
                    }
                    eps[i] = -1.0;
                }
            }
        }
    }
}

/// Move-count field from a uniform-cost search over flow moves. Each move
/// integrates one constant control for time tau; every grid cell the
/// trajectory sweeps through is claimed at the move's arrival cost, and the
/// sweep point inside a newly claimed cell is kept as that cell's
/// representative for further expansion. A cell's value is (move count) x
/// tau, an upper bound on the control distance from the origin to the
/// representative that tightens as tau and the cell size shrink.
#[derive(Clone, Debug)]
pub struct DistanceField {
    system: VectorFieldSystem,
    origin: Vec<f64>,
    params: FieldParams,
    grid: GridSpec,
    values: Vec<u32>,
    reached: usize,
}

impl DistanceField {
    pub fn build(
        system: &VectorFieldSystem,
        origin: &[f64],
        params: FieldParams,
        grid: GridSpec,
    ) -> Result<Self> {
        if !(params.tau > 0.0) || !params.tau.is_finite() {
            return Err(Error::InvalidParam("move duration must be positive".into()));
        }
        if !(params.step > 0.0) || !params.step.is_finite() {
            return Err(Error::InvalidParam("integration step must be positive".into()));
        }
        if !(params.budget >= 0.0) || !params.budget.is_finite() {
            return Err(Error::InvalidParam("budget must be non-negative".into()));
        }
        if grid.dim() != system.dim() {
            return Err(Error::DimensionMismatch {
                expected: system.dim(),
                got: grid.dim(),
            });
        }
        if params.splits == 0 {
            return Err(Error::InvalidParam("splits must be at least 1".into()));
        }
        let origin_cell = grid.cell_index(origin).ok_or(Error::OutOfBox)?;
        let n = system.dim();
        let moves = move_fields(system, params.moves)?;
        let durations: Vec<f64> = (1..=params.splits)
            .map(|j| params.tau * j as f64 / params.splits as f64)
            .collect();
        let mut values = vec![UNREACHED; grid.num_cells()];
        values[origin_cell] = 0;
        let mut reached = 1usize;
        let max_moves = (params.budget / params.tau + 1e-9).floor() as u32;
        let mut level: Vec<f64> = origin.to_vec();
        let mut next: Vec<f64> = Vec::new();
        let mut scratch = FlowScratch::new(n);
        let mut prev = vec![0.0; n];
        let mut cur = vec![0.0; n];
        for cost in 1..=max_moves {
            next.clear();
            for p in level.chunks_exact(n) {
                for f in &moves {
                    for &duration in &durations {
                        let substeps = (duration / params.step).ceil().max(1.0) as usize;
                        let dt = duration / substeps as f64;
                        prev.copy_from_slice(p);
                        for _ in 0..substeps {
                            cur.copy_from_slice(&prev);
                            flow_in_place(f, &mut cur, dt, dt, &mut scratch);
                            if cur.iter().any(|v| !v.is_finite()) {
                                break;
                            }
                            grid.segment_cells(&prev, &cur, |flat, lo, hi| {
                                if values[flat] == UNREACHED {
                                    values[flat] = cost;
                                    reached += 1;
                                    let tm = 0.5 * (lo + hi);
                                    for i in 0..n {
                                        next.push(prev[i] + tm * (cur[i] - prev[i]));
                                    }
                                }
                            });
                            prev.copy_from_slice(&cur);
                        }
                    }
                }
            }
            std::mem::swap(&mut level, &mut next);
            if level.is_empty() {
                break;
            }
        }
        Ok(DistanceField {
            system: system.clone(),
            origin: origin.to_vec(),
            params,
            grid,
            values,
            reached,
        })
    }

    pub fn system(&self) -> &VectorFieldSystem {
        &self.system
    }

    pub fn origin(&self) -> &[f64] {
        &self.origin
    }

    pub fn params(&self) -> &FieldParams {
        &self.params
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn reached_count(&self) -> usize {
        self.reached
    }

    /// Distance upper bound for the cell containing y: +inf if the search
    /// never reached it, an error only for points outside the grid box.
    pub fn rho_upper(&self, y: &[f64]) -> Result<f64> {
        let cell = self.grid.cell_index(y).ok_or(Error::OutOfBox)?;
        Ok(self.cell_value(cell))
    }

    /// Value of a flat cell index (+inf if unreached).
    pub fn cell_value(&self, flat: usize) -> f64 {
        let v = self.values[flat];
        if v == UNREACHED {
            f64::INFINITY
        } else {
            f64::from(v) * self.params.tau
        }
    }

    /// Flat indices and values of all reached cells.
    pub fn iter_reached(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.values.iter().enumerate().filter_map(|(i, &v)| {
            (v != UNREACHED).then(|| (i, f64::from(v) * self.params.tau))
        })
    }

    /// Tight axis-aligned box around all reached cells. Every point with a
    /// finite rho_upper lies in it, whatever the radius.
    pub fn reached_bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        self.sublevel_bounding_box(f64::INFINITY)
            .expect("a built field has at least the origin cell")
    }

    /// Tight axis-aligned box around the cells with value < r, or None when
    /// no cell qualifies. Every point with rho_upper < r lies in it.
    pub fn sublevel_bounding_box(&self, r: f64) -> Option<(Vec<f64>, Vec<f64>)> {
        let n = self.grid.dim();
        let mut lo = vec![f64::INFINITY; n];
        let mut hi = vec![f64::NEG_INFINITY; n];
        let mut any = false;
        for (flat, value) in self.iter_reached() {
            if value >= r {
                continue;
            }
            any = true;
            let center = self.grid.cell_center(flat);
            for i in 0..n {
                let half = self.grid.cell()[i] * 0.5;
                lo[i] = lo[i].min(center[i] - half);
                hi[i] = hi[i].max(center[i] + half);
            }
        }
        if !any {
            return None;
        }
        for i in 0..n {
            lo[i] = lo[i].max(self.grid.min()[i]);
            hi[i] = hi[i].min(self.grid.max()[i]);
        }
        Some((lo, hi))
    }
}
