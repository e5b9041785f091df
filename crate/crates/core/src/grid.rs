//! Axis-aligned sampling grids: a bounding box partitioned into cells,
//! with flat cell indexing.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest number of cells a grid may hold.
pub const MAX_CELLS: usize = 1 << 28;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGridSpec")]
#[serde(into = "RawGridSpec")]
pub struct GridSpec {
    min: Vec<f64>,
    max: Vec<f64>,
    cell: Vec<f64>,
    counts: Vec<usize>,
}

#[derive(Clone, Serialize, Deserialize)]
struct RawGridSpec {
    min: Vec<f64>,
    max: Vec<f64>,
    cell: Vec<f64>,
}

impl TryFrom<RawGridSpec> for GridSpec {
    type Error = Error;
    fn try_from(raw: RawGridSpec) -> Result<Self> {
        GridSpec::new(raw.min, raw.max, raw.cell)
    }
}

impl From<GridSpec> for RawGridSpec {
    fn from(g: GridSpec) -> Self {
        RawGridSpec {
            min: g.min,
            max: g.max,
            cell: g.cell,
        }
    }
}

impl GridSpec {
    /// Box with per-axis cell sizes.
    pub fn new(min: Vec<f64>, max: Vec<f64>, cell: Vec<f64>) -> Result<Self> {
        if min.len() != max.len() || min.len() != cell.len() {
            return Err(Error::DimensionMismatch {
                expected: min.len(),
                got: if max.len() != min.len() { max.len() } else { cell.len() },
            });
        }
        if min.is_empty() {
            return Err(Error::InvalidParam("grid needs at least one axis".into()));
        }
        for i in 0..min.len() {
            if !min[i].is_finite() || !max[i].is_finite() || min[i] >= max[i] {
                return Err(Error::InvalidParam(format!(
                    "axis {i}: box bounds must be finite with min < max"
                )));
            }
            if !(cell[i] > 0.0) || !cell[i].is_finite() {
                return Err(Error::InvalidParam(format!(
                    "axis {i}: cell size must be positive and finite"
                )));
            }
        }
        let mut counts = Vec::with_capacity(min.len());
        let mut total: usize = 1;
        for i in 0..min.len() {
            let k = ((max[i] - min[i]) / cell[i]).ceil() as usize;
            let k = k.max(1);
            counts.push(k);
            total = total.checked_mul(k).filter(|&t| t <= MAX_CELLS).ok_or_else(|| {
                Error::InvalidParam(format!("grid exceeds {MAX_CELLS} cells"))
            })?;
        }
        Ok(GridSpec { min, max, cell, counts })
    }

    /// Box with one cell size on every axis.
    pub fn uniform(min: Vec<f64>, max: Vec<f64>, c: f64) -> Result<Self> {
        let n = min.len();
        GridSpec::new(min, max, vec![c; n])
    }

    /// The default working box [-2,2]^n with cell size 0.02.
    pub fn default_box(n: usize) -> Self {
        GridSpec::uniform(vec![-2.0; n], vec![2.0; n], 0.02).expect("valid default")
    }

    pub fn dim(&self) -> usize {
        self.min.len()
    }

    pub fn min(&self) -> &[f64] {
        &self.min
    }

    pub fn max(&self) -> &[f64] {
        &self.max
    }

    pub fn cell(&self) -> &[f64] {
        &self.cell
    }

    pub fn cell_counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn num_cells(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn volume(&self) -> f64 {
        self.min
            .iter()
            .zip(&self.max)
            .map(|(lo, hi)| hi - lo)
            .product()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.min.iter().zip(&self.max))
                .all(|(&v, (&lo, &hi))| v >= lo && v <= hi)
    }

    /// Flat index of the cell containing x, None outside the box. Points on
    /// the upper face count toward the last cell.
    pub fn cell_index(&self, x: &[f64]) -> Option<usize> {
        if !self.contains(x) {
            return None;
        }
        let mut flat = 0usize;
        for i in 0..self.dim() {
            let mut k = ((x[i] - self.min[i]) / self.cell[i]) as usize;
            if k >= self.counts[i] {
                k = self.counts[i] - 1;
            }
            flat = flat * self.counts[i] + k;
        }
        Some(flat)
    }

    /// Center point of a flat cell index.
    pub fn cell_center(&self, flat: usize) -> Vec<f64> {
        let mut rem = flat;
        let n = self.dim();
        let mut idx = vec![0usize; n];
        for i in (0..n).rev() {
            idx[i] = rem % self.counts[i];
            rem /= self.counts[i];
        }
        (0..n)
            .map(|i| self.min[i] + (idx[i] as f64 + 0.5) * self.cell[i])
            .collect()
    }

    /// Per-axis integer coordinates of a flat index.
    pub fn cell_coords(&self, flat: usize) -> Vec<usize> {
        let mut rem = flat;
        let n = self.dim();
        let mut idx = vec![0usize; n];
        for i in (0..n).rev() {
            idx[i] = rem % self.counts[i];
            rem /= self.counts[i];
        }
        idx
    }

    /// Visit every cell the segment from a to b passes through, in order
    /// along the segment and clipped to the box. The callback gets the flat
    /// cell index and the parameter interval [t_in, t_out] spent inside;
    /// parameters are relative to the full segment (0 at a, 1 at b).
    /// Segments touching the box nowhere, or with non-finite endpoints,
    /// visit nothing. A boundary crossing within a rounding margin of the
    /// far endpoint still counts, so a segment ending on a cell face visits
    /// both sides regardless of how the arithmetic rounds.
    pub fn segment_cells<F: FnMut(usize, f64, f64)>(&self, a: &[f64], b: &[f64], mut visit: F) {
        let n = self.dim();
        debug_assert_eq!(a.len(), n);
        debug_assert_eq!(b.len(), n);
        if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return;
        }
        let mut t0 = 0.0f64;
        let mut t1 = 1.0f64;
        for i in 0..n {
            let d = b[i] - a[i];
            if d == 0.0 {
                if a[i] < self.min[i] || a[i] > self.max[i] {
                    return;
                }
            } else {
                let mut lo = (self.min[i] - a[i]) / d;
                let mut hi = (self.max[i] - a[i]) / d;
                if lo > hi {
                    std::mem::swap(&mut lo, &mut hi);
                }
                t0 = t0.max(lo);
                t1 = t1.min(hi);
                if t0 > t1 {
                    return;
                }
            }
        }
        let mut idx = vec![0usize; n];
        let mut t_max = vec![f64::INFINITY; n];
        let mut t_delta = vec![f64::INFINITY; n];
        let mut step = vec![0isize; n];
        for i in 0..n {
            let d = b[i] - a[i];
            let p = a[i] + t0 * d;
            let k = ((p - self.min[i]) / self.cell[i]).floor().max(0.0) as usize;
            idx[i] = k.min(self.counts[i] - 1);
            if d > 0.0 {
                step[i] = 1;
                let boundary = self.min[i] + (idx[i] + 1) as f64 * self.cell[i];
                t_max[i] = (boundary - a[i]) / d;
                t_delta[i] = self.cell[i] / d;
            } else if d < 0.0 {
                step[i] = -1;
                let boundary = self.min[i] + idx[i] as f64 * self.cell[i];
                t_max[i] = (boundary - a[i]) / d;
                t_delta[i] = self.cell[i] / (-d);
            }
        }
        const WALK_EPS: f64 = 1e-12;
        let mut t = t0;
        loop {
            let mut flat = 0usize;
            for i in 0..n {
                flat = flat * self.counts[i] + idx[i];
            }
            let mut axis = 0usize;
            let mut t_next = f64::INFINITY;
            for i in 0..n {
                if t_max[i] < t_next {
                    t_next = t_max[i];
                    axis = i;
                }
            }
            if t_next >= t1 + WALK_EPS {
                visit(flat, t.min(t1), t1);
                return;
            }
            visit(flat, t.min(t1), t_next.min(t1));
            t = t_next;
            let moved = idx[axis] as isize + step[axis];
            if moved < 0 || moved as usize >= self.counts[axis] {
                return;
            }
            idx[axis] = moved as usize;
            t_max[axis] += t_delta[axis];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_counts_and_volume() {
        let g = GridSpec::uniform(vec![-1.0, -1.0], vec![1.0, 1.0], 0.5).unwrap();
        assert_eq!(g.cell_counts(), &[4, 4]);
        assert_eq!(g.num_cells(), 16);
        assert_eq!(g.volume(), 4.0);
    }

    #[test]
    fn indexing_roundtrip() {
        let g = GridSpec::new(vec![0.0, -1.0], vec![1.0, 1.0], vec![0.25, 0.5]).unwrap();
        for flat in 0..g.num_cells() {
            let c = g.cell_center(flat);
            assert_eq!(g.cell_index(&c), Some(flat));
        }
    }

    #[test]
    fn boundary_points() {
        let g = GridSpec::uniform(vec![0.0], vec![1.0], 0.25).unwrap();
        assert_eq!(g.cell_index(&[0.0]), Some(0));
        assert_eq!(g.cell_index(&[1.0]), Some(3));
        assert_eq!(g.cell_index(&[1.0 + 1e-9]), None);
        assert_eq!(g.cell_index(&[f64::NAN]), None);
    }

    #[test]
    fn rejects_bad_boxes() {
        assert!(GridSpec::uniform(vec![0.0], vec![0.0], 0.1).is_err());
        assert!(GridSpec::uniform(vec![0.0], vec![1.0], 0.0).is_err());
        assert!(GridSpec::uniform(vec![0.0], vec![1.0], -0.5).is_err());
        assert!(GridSpec::new(vec![0.0], vec![1.0], vec![0.1, 0.1]).is_err());
        assert!(GridSpec::uniform(vec![0.0, 0.0], vec![1e6, 1e6], 1e-4).is_err());
    }

    #[test]
    fn default_box_shape() {
        let g = GridSpec::default_box(3);
        assert_eq!(g.dim(), 3);
        assert!(g.contains(&[0.0, 0.0, 0.0]));
        assert!(g.contains(&[2.0, -2.0, 1.5]));
        assert!(!g.contains(&[2.1, 0.0, 0.0]));
        assert_eq!(g.cell_counts(), &[200, 200, 200]);
    }

    #[test]
    fn segment_walk_covers_a_row() {
        let g = GridSpec::uniform(vec![0.0, 0.0], vec![1.0, 1.0], 0.25).unwrap();
        let mut cells = Vec::new();
        g.segment_cells(&[0.05, 0.6], &[0.95, 0.6], |flat, lo, hi| {
            assert!(lo <= hi + 1e-12);
            cells.push(flat);
        });
        // y = 0.6 sits in row 2; x sweeps all four columns
        let expected: Vec<usize> = (0..4).map(|i| i * 4 + 2).collect();
        assert_eq!(cells, expected);
    }

    #[test]
    fn segment_walk_diagonal_is_connected() {
        let g = GridSpec::uniform(vec![0.0, 0.0], vec![1.0, 1.0], 0.25).unwrap();
        let mut coords = Vec::new();
        g.segment_cells(&[0.1, 0.1], &[0.9, 0.9], |flat, _, _| {
            coords.push(g.cell_coords(flat));
        });
        assert_eq!(coords.first().unwrap(), &vec![0, 0]);
        assert_eq!(coords.last().unwrap(), &vec![3, 3]);
        for w in coords.windows(2) {
            let dist: usize = (0..2).map(|i| w[1][i].abs_diff(w[0][i])).sum();
            assert_eq!(dist, 1, "steps one face at a time");
        }
    }

    #[test]
    fn segment_walk_clips_to_the_box() {
        let g = GridSpec::uniform(vec![0.0], vec![1.0], 0.5).unwrap();
        let mut cells = Vec::new();
        g.segment_cells(&[-1.0], &[0.4], |flat, lo, hi| cells.push((flat, lo, hi)));
        assert_eq!(cells.len(), 1);
        assert_eq!(cells[0].0, 0);
        assert!((cells[0].1 - 1.0 / 1.4).abs() < 1e-12);
        assert_eq!(cells[0].2, 1.0);

        let mut outside = 0;
        g.segment_cells(&[2.0], &[3.0], |_, _, _| outside += 1);
        assert_eq!(outside, 0);
        g.segment_cells(&[f64::NAN], &[0.5], |_, _, _| outside += 1);
        assert_eq!(outside, 0);
    }

    #[test]
    fn segment_walk_handles_a_point() {
        let g = GridSpec::uniform(vec![0.0, 0.0], vec![1.0, 1.0], 0.5).unwrap();
        let mut visits = Vec::new();
        g.segment_cells(&[0.3, 0.8], &[0.3, 0.8], |flat, lo, hi| visits.push((flat, lo, hi)));
        assert_eq!(visits, vec![(g.cell_index(&[0.3, 0.8]).unwrap(), 0.0, 1.0)]);
    }

    #[test]
    fn json_roundtrip() {
        let g = GridSpec::new(vec![-1.0, 0.0], vec![1.0, 2.0], vec![0.1, 0.2]).unwrap();
        let json = serde_json::to_string(&g).unwrap();
        let back: GridSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back, g);
        assert!(serde_json::from_str::<GridSpec>(
            r#"{"min":[0.0],"max":[1.0],"cell":[-0.1]}"#
        )
        .is_err());
    }
}
