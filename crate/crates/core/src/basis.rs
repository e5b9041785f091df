//! Spanning bases of iterated commutators and the pointwise quantities
//! attached to them: the determinants lambda_I, the anisotropic norm
//! `‖h‖_I`, the volume sum Lambda(x, delta), and the multi-index selection
//! rule used by the ball and distance machinery.

use std::collections::HashMap;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::vecfield::{VectorField, VectorFieldSystem};

/// Relative singular-value cutoff for rank decisions.
pub const RANK_TOLERANCE: f64 = 1e-8;

/// `|v|^(1/d)` with the low degrees special-cased so that the same bit
/// pattern is produced wherever the root appears.
pub fn degree_root(v: f64, d: u32) -> f64 {
    match d {
        0 => panic!("degree must be positive"),
        1 => v.abs(),
        2 => v.abs().sqrt(),
        _ => v.abs().powf(1.0 / d as f64),
    }
}

/// Index words of lengths 1..=r over {1..m}, in (length, lexicographic)
/// order. Words whose two innermost entries do not increase are omitted:
/// swapping the innermost pair only negates the bracket, and an equal pair
/// kills it, so one representative per pair is enough.
fn index_words(m: usize, r: usize) -> Vec<Vec<usize>> {
    let mut words = Vec::new();
    for len in 1..=r {
        let mut w = vec![1usize; len];
        loop {
            if len < 2 || w[len - 2] < w[len - 1] {
                words.push(w.clone());
            }
            let mut k = len;
            loop {
                if k == 0 {
                    break;
                }
                k -= 1;
                w[k] += 1;
                if w[k] <= m {
                    break;
                }
                w[k] = 1;
            }
            if w.iter().all(|&s| s == 1) {
                break;
            }
        }
    }
    words
}

fn rank_at(fields: &[VectorField], x: &[f64]) -> usize {
    let n = x.len();
    if fields.is_empty() {
        return 0;
    }
    let cols: Vec<Vec<f64>> = fields.iter().map(|f| f.eval(x)).collect();
    let mat = DMatrix::from_fn(n, cols.len(), |i, j| cols[j][i]);
    let sv = mat.singular_values();
    let top = sv.max();
    if top <= 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > RANK_TOLERANCE * top).count()
}

/// Smallest r' <= r_max such that the iterated commutators of lengths up to
/// r' span R^n at `x`.
pub fn hormander_step(system: &VectorFieldSystem, x: &[f64], r_max: usize) -> Result<usize> {
    if r_max == 0 {
        return Err(Error::InvalidParam("r_max must be at least 1".into()));
    }
    if x.len() != system.dim() {
        return Err(Error::DimensionMismatch {
            expected: system.dim(),
            got: x.len(),
        });
    }
    let n = system.dim();
    let mut fields = Vec::new();
    let mut last_rank = 0;
    for step in 1..=r_max {
        for w in index_words(system.num_fields(), step) {
            if w.len() == step {
                fields.push(system.nested_commutator(&w)?);
            }
        }
        last_rank = rank_at(&fields, x);
        if last_rank == n {
            return Ok(step);
        }
    }
    Err(Error::SpanningFailure {
        point: x.to_vec(),
        rank: last_rank,
        dim: n,
        step: r_max as u32,
    })
}

/// An enumerated family Y_1..Y_q of iterated commutators together with
/// their formal degrees and source words.
#[derive(Clone, Debug)]
pub struct CommutatorBasis {
    system: VectorFieldSystem,
    elements: Vec<VectorField>,
    degrees: Vec<u32>,
    sources: Vec<Vec<usize>>,
    zero_sources: Vec<Vec<usize>>,
    spanning_step: usize,
    dim: usize,
}

/// Enumerates right-nested commutators of lengths 1..=r in (length,
/// lexicographic) order, dropping identically-zero brackets, and verifies
/// that the result spans R^n at every sample point.
pub fn spanning_basis(
    system: &VectorFieldSystem,
    sample_points: &[Vec<f64>],
    r: usize,
) -> Result<CommutatorBasis> {
    if r == 0 {
        return Err(Error::InvalidParam("spanning step must be at least 1".into()));
    }
    let mut elements = Vec::new();
    let mut degrees = Vec::new();
    let mut sources = Vec::new();
    let mut zero_sources = Vec::new();
    for w in index_words(system.num_fields(), r) {
        let f = system.nested_commutator(&w)?;
        if f.is_zero() {
            zero_sources.push(w);
        } else {
            degrees.push(w.len() as u32);
            sources.push(w);
            elements.push(f);
        }
    }
    let basis = CommutatorBasis {
        system: system.clone(),
        elements,
        degrees,
        sources,
        zero_sources,
        spanning_step: r,
        dim: system.dim(),
    };
    for p in sample_points {
        if p.len() != system.dim() {
            return Err(Error::DimensionMismatch {
                expected: system.dim(),
                got: p.len(),
            });
        }
        let rank = rank_at(&basis.elements, p);
        if rank != system.dim() {
            return Err(Error::SpanningFailure {
                point: p.clone(),
                rank,
                dim: system.dim(),
                step: r as u32,
            });
        }
    }
    Ok(basis)
}

/// An n-tuple of (1-based) basis indices with the degree data needed by the
/// norm and volume formulas.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MultiIndex {
    entries: Vec<usize>,
    entry_degrees: Vec<u32>,
    total_degree: u32,
}

impl MultiIndex {
    pub fn entries(&self) -> &[usize] {
        &self.entries
    }

    pub fn entry_degrees(&self) -> &[u32] {
        &self.entry_degrees
    }

    pub fn total_degree(&self) -> u32 {
        self.total_degree
    }

    /// Anisotropic norm `max_j |h_j|^(1/d_j)` with d_j the degree of the
    /// j-th selected basis element.
    pub fn box_norm(&self, h: &[f64]) -> Result<f64> {
        if h.len() != self.entries.len() {
            return Err(Error::DimensionMismatch {
                expected: self.entries.len(),
                got: h.len(),
            });
        }
        Ok(h.iter()
            .zip(&self.entry_degrees)
            .map(|(&v, &d)| degree_root(v, d))
            .fold(0.0, f64::max))
    }
}

/// Determinant by cofactor expansion along the first row, with a fixed
/// recursion so equal matrices always produce identical bit patterns.
fn det_cofactor(cols: &[Vec<f64>]) -> f64 {
    let n = cols.len();
    fn go(cols: &[Vec<f64>], active: &mut Vec<usize>, row: usize, n: usize) -> f64 {
        if row == n {
            return 1.0;
        }
        if active.len() == 1 {
            return cols[active[0]][row];
        }
        let mut acc = 0.0;
        for k in 0..active.len() {
            let c = active.remove(k);
            let head = cols[c][row];
            if head != 0.0 {
                let minor = go(cols, active, row + 1, n);
                let signed = if k % 2 == 0 { head * minor } else { -(head * minor) };
                acc += signed;
            }
            active.insert(k, c);
        }
        acc
    }
    let mut active: Vec<usize> = (0..n).collect();
    go(cols, &mut active, 0, n)
}

fn permutation_parity(entries: &[usize]) -> i32 {
    let mut order: Vec<usize> = (0..entries.len()).collect();
    order.sort_by_key(|&j| entries[j]);
    let mut seen = vec![false; order.len()];
    let mut parity = 0;
    for start in 0..order.len() {
        if seen[start] {
            continue;
        }
        let mut len = 0;
        let mut j = start;
        while !seen[j] {
            seen[j] = true;
            j = order[j];
            len += 1;
        }
        parity += len - 1;
    }
    if parity % 2 == 0 {
        1
    } else {
        -1
    }
}

impl CommutatorBasis {
    /// The generating system X_1..X_m the basis was built from.
    pub fn system(&self) -> &VectorFieldSystem {
        &self.system
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn elements(&self) -> &[VectorField] {
        &self.elements
    }

    /// 1-based element access: `element(1)` is Y_1.
    pub fn element(&self, i: usize) -> Result<&VectorField> {
        if i == 0 || i > self.elements.len() {
            return Err(Error::IndexOutOfRange {
                index: i,
                len: self.elements.len(),
            });
        }
        Ok(&self.elements[i - 1])
    }

    pub fn degrees(&self) -> &[u32] {
        &self.degrees
    }

    pub fn degree(&self, i: usize) -> Result<u32> {
        self.element(i)?;
        Ok(self.degrees[i - 1])
    }

    pub fn max_degree(&self) -> u32 {
        self.degrees.iter().copied().max().unwrap_or(0)
    }

    pub fn sources(&self) -> &[Vec<usize>] {
        &self.sources
    }

    pub fn source(&self, i: usize) -> Result<&[usize]> {
        self.element(i)?;
        Ok(&self.sources[i - 1])
    }

    /// Source words whose brackets vanished identically and were therefore
    /// not given a basis slot.
    pub fn zero_sources(&self) -> &[Vec<usize>] {
        &self.zero_sources
    }

    pub fn spanning_step(&self) -> usize {
        self.spanning_step
    }

    pub fn multi_index(&self, entries: &[usize]) -> Result<MultiIndex> {
        if entries.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: entries.len(),
            });
        }
        let mut entry_degrees = Vec::with_capacity(entries.len());
        for &i in entries {
            entry_degrees.push(self.degree(i)?);
        }
        let total_degree = entry_degrees.iter().sum();
        Ok(MultiIndex {
            entries: entries.to_vec(),
            entry_degrees,
            total_degree,
        })
    }

    /// det[Y_{i_1}(x), ..., Y_{i_n}(x)]. Repeated entries give exactly 0,
    /// and permuted entries give exactly the signed value of the sorted
    /// tuple, because the determinant is evaluated on sorted columns and
    /// then given the permutation sign.
    pub fn lambda(&self, index: &MultiIndex, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        let mut sorted = index.entries.to_vec();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Ok(0.0);
        }
        let cols: Vec<Vec<f64>> = sorted
            .iter()
            .map(|&i| Ok(self.element(i)?.eval(x)))
            .collect::<Result<_>>()?;
        let det = det_cofactor(&cols);
        Ok(permutation_parity(index.entries()) as f64 * det)
    }

    /// Lambda(x, delta): the sum of |lambda_I(x)| delta^d(I) over every
    /// multi-index I in {1..q}^n, where repeated-entry tuples contribute 0
    /// and are skipped outright.
    pub fn capital_lambda(&self, x: &[f64], delta: f64) -> Result<f64> {
        if delta <= 0.0 {
            return Err(Error::InvalidParam("delta must be positive".into()));
        }
        let mut acc = 0.0;
        self.scan_distinct(x, |_entries, abs_det, total_degree| {
            acc += abs_det * delta.powi(total_degree as i32);
        })?;
        Ok(acc)
    }

    /// The multi-index maximizing |lambda_I(x)| delta^d(I), ties broken by
    /// lexicographic order of I.
    pub fn select_multi_index(&self, x: &[f64], delta: f64) -> Result<MultiIndex> {
        if delta <= 0.0 {
            return Err(Error::InvalidParam("delta must be positive".into()));
        }
        let mut best: Option<(Vec<usize>, f64)> = None;
        self.scan_distinct(x, |entries, abs_det, total_degree| {
            let value = abs_det * delta.powi(total_degree as i32);
            match &best {
                Some((_, bv)) if *bv >= value => {}
                _ => best = Some((entries.to_vec(), value)),
            }
        })?;
        match best {
            Some((entries, value)) if value > 0.0 => self.multi_index(&entries),
            _ => Err(Error::Degenerate(format!(
                "every basis determinant vanishes at {x:?}"
            ))),
        }
    }

    /// Visits all distinct-entry tuples in {1..q}^n in lexicographic order,
    /// passing |det| of the tuple's columns and its total degree. Dets are
    /// computed once per underlying sorted tuple.
    fn scan_distinct<F: FnMut(&[usize], f64, u32)>(&self, x: &[f64], mut visit: F) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        let n = self.dim;
        let q = self.elements.len();
        if q < n {
            return Ok(());
        }
        let values: Vec<Vec<f64>> = self.elements.iter().map(|f| f.eval(x)).collect();
        let mut det_cache: HashMap<Vec<usize>, f64> = HashMap::new();
        let mut entries = vec![1usize; n];
        loop {
            let mut sorted = entries.clone();
            sorted.sort_unstable();
            if sorted.windows(2).all(|w| w[0] != w[1]) {
                let abs_det = *det_cache.entry(sorted.clone()).or_insert_with(|| {
                    let cols: Vec<Vec<f64>> =
                        sorted.iter().map(|&i| values[i - 1].clone()).collect();
                    det_cofactor(&cols).abs()
                });
                let total: u32 = entries.iter().map(|&i| self.degrees[i - 1]).sum();
                visit(&entries, abs_det, total);
            }
            let mut k = n;
            loop {
                if k == 0 {
                    return Ok(());
                }
                k -= 1;
                entries[k] += 1;
                if entries[k] <= q {
                    break;
                }
                entries[k] = 1;
            }
            if entries.iter().all(|&i| i == 1) {
                return Ok(());
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn basis_of(name: &str, r: usize) -> CommutatorBasis {
        let sys = VectorFieldSystem::builtin(name).unwrap();
        let origin = vec![0.0; sys.dim()];
        spanning_basis(&sys, &[origin], r).unwrap()
    }

    #[test]
    fn word_enumeration_order() {
        assert_eq!(
            index_words(2, 3),
            vec![
                vec![1],
                vec![2],
                vec![1, 2],
                vec![1, 1, 2],
                vec![2, 1, 2],
            ]
        );
    }

    #[test]
    fn hormander_step_examples() {
        let h = VectorFieldSystem::builtin("heisenberg1").unwrap();
        assert_eq!(hormander_step(&h, &[0.0, 0.0, 0.0], 4).unwrap(), 2);
        let g = VectorFieldSystem::builtin("grushin").unwrap();
        assert_eq!(hormander_step(&g, &[1.0, 0.0], 4).unwrap(), 1);
        assert_eq!(hormander_step(&g, &[0.0, 0.0], 4).unwrap(), 2);
        let e = VectorFieldSystem::builtin("euclidean2").unwrap();
        assert_eq!(hormander_step(&e, &[0.3, -0.7], 4).unwrap(), 1);
    }

    #[test]
    fn spanning_failure_reports_rank() {
        let sys = VectorFieldSystem::new(
            2,
            vec![VectorFieldSystem::builtin("euclidean2")
                .unwrap()
                .field(1)
                .unwrap()
                .clone()],
        )
        .unwrap();
        match hormander_step(&sys, &[0.0, 0.0], 3) {
            Err(Error::SpanningFailure { rank, dim, step, .. }) => {
                assert_eq!((rank, dim, step), (1, 2, 3));
            }
            other => panic!("expected spanning failure, got {other:?}"),
        }
    }

    #[test]
    fn heisenberg_basis_shape() {
        let b = basis_of("heisenberg1", 2);
        assert_eq!(b.len(), 3);
        assert_eq!(b.degrees(), &[1, 1, 2]);
        assert_eq!(b.sources(), &[vec![1], vec![2], vec![1, 2]]);
        assert!(b.zero_sources().is_empty());
    }

    #[test]
    fn grushin_basis_shape() {
        let b = basis_of("grushin", 2);
        assert_eq!(b.len(), 3);
        assert_eq!(b.degrees(), &[1, 1, 2]);
    }

    #[test]
    fn euclidean_basis_is_the_frame() {
        let b = basis_of("euclidean2", 1);
        assert_eq!(b.len(), 2);
        assert_eq!(b.degrees(), &[1, 1]);
    }

    #[test]
    fn engel_basis_records_dead_word() {
        let b = basis_of("engel", 3);
        assert_eq!(b.len(), 4);
        assert_eq!(b.degrees(), &[1, 1, 2, 3]);
        assert_eq!(b.zero_sources(), &[vec![2, 1, 2]]);
    }

    #[test]
    fn lambda_examples() {
        let h = basis_of("heisenberg1", 2);
        let i123 = h.multi_index(&[1, 2, 3]).unwrap();
        assert_eq!(h.lambda(&i123, &[0.0, 0.0, 0.0]).unwrap(), 1.0);
        let rep = h.multi_index(&[1, 1, 2]).unwrap();
        assert_eq!(h.lambda(&rep, &[0.4, -0.3, 0.9]).unwrap(), 0.0);

        let g = basis_of("grushin", 2);
        let i12 = g.multi_index(&[1, 2]).unwrap();
        let i13 = g.multi_index(&[1, 3]).unwrap();
        assert_eq!(g.lambda(&i12, &[2.0, 5.0]).unwrap(), 2.0);
        assert_eq!(g.lambda(&i13, &[2.0, 5.0]).unwrap(), 1.0);
    }

    #[test]
    fn lambda_swap_negates_exactly() {
        let h = basis_of("heisenberg1", 2);
        let x = [0.37, -1.22, 0.05];
        let a = h.lambda(&h.multi_index(&[1, 2, 3]).unwrap(), &x).unwrap();
        let b = h.lambda(&h.multi_index(&[2, 1, 3]).unwrap(), &x).unwrap();
        assert_eq!(a, -b);
    }

    #[test]
    fn box_norm_examples() {
        let h = basis_of("heisenberg1", 2);
        let i = h.multi_index(&[1, 2, 3]).unwrap();
        assert_eq!(i.box_norm(&[0.04, -0.09, 0.0016]).unwrap(), 0.09);
        assert_eq!(i.box_norm(&[0.0, 0.0, 0.0]).unwrap(), 0.0);
        let e = basis_of("euclidean2", 1);
        let j = e.multi_index(&[1, 2]).unwrap();
        assert_eq!(j.box_norm(&[-0.3, 0.2]).unwrap(), 0.3);
    }

    #[test]
    fn capital_lambda_examples() {
        let g = basis_of("grushin", 2);
        for delta in [0.1, 0.5, 1.3] {
            assert_relative_eq!(
                g.capital_lambda(&[0.0, 0.0], delta).unwrap(),
                2.0 * delta.powi(3),
                max_relative = 1e-14
            );
            assert_relative_eq!(
                g.capital_lambda(&[1.0, 0.0], delta).unwrap(),
                2.0 * delta.powi(2) + 2.0 * delta.powi(3),
                max_relative = 1e-14
            );
        }
        let h = basis_of("heisenberg1", 2);
        for delta in [0.2, 1.0, 2.5] {
            assert_relative_eq!(
                h.capital_lambda(&[0.8, -0.1, 3.0], delta).unwrap(),
                6.0 * delta.powi(4),
                max_relative = 1e-14
            );
        }
    }

    #[test]
    fn select_examples() {
        let g = basis_of("grushin", 2);
        let sel = g.select_multi_index(&[1.0, 0.0], 0.1).unwrap();
        assert_eq!(sel.entries(), &[1, 2]);
        let sel0 = g.select_multi_index(&[0.0, 0.0], 0.7).unwrap();
        assert_eq!(sel0.entries(), &[1, 3]);
        let h = basis_of("heisenberg1", 2);
        let selh = h.select_multi_index(&[0.4, 9.0, -2.0], 0.3).unwrap();
        assert_eq!(selh.entries(), &[1, 2, 3]);
    }

    #[test]
    fn select_attains_the_max() {
        let g = basis_of("grushin", 2);
        for (x, delta) in [([0.7, -0.4], 0.25), ([0.0, 2.0], 1.0), ([-3.0, 1.0], 0.05)] {
            let sel = g.select_multi_index(&x, delta).unwrap();
            let picked =
                g.lambda(&sel, &x).unwrap().abs() * delta.powi(sel.total_degree() as i32);
            let mut max = 0.0f64;
            for a in 1..=3usize {
                for b in 1..=3usize {
                    if a == b {
                        continue;
                    }
                    let i = g.multi_index(&[a, b]).unwrap();
                    let v =
                        g.lambda(&i, &x).unwrap().abs() * delta.powi(i.total_degree() as i32);
                    max = max.max(v);
                }
            }
            assert_eq!(picked, max);
        }
    }

    #[test]
    fn degenerate_system_select_fails() {
        let one_field = VectorFieldSystem::new(
            2,
            vec![VectorFieldSystem::builtin("euclidean2")
                .unwrap()
                .field(1)
                .unwrap()
                .clone()],
        )
        .unwrap();
        let b = CommutatorBasis {
            system: one_field.clone(),
            elements: one_field.fields().to_vec(),
            degrees: vec![1],
            sources: vec![vec![1]],
            zero_sources: vec![],
            spanning_step: 1,
            dim: 2,
        };
        assert!(matches!(
            b.select_multi_index(&[0.0, 0.0], 0.5),
            Err(Error::Degenerate(_))
        ));
    }
}
