//! Distance-estimate comparison between two generating families on the
//! same grid. The main check swaps the first field for the sum of the
//! first two and verifies that the estimate changes by at most a bounded
//! factor at caller-supplied point pairs.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{DistanceField, FieldParams};
use crate::grid::GridSpec;
use crate::vecfield::VectorFieldSystem;

/// Accepted band for the estimate ratio: the analytic factor 4 widened for
/// grid and move-count quantization on both sides of the quotient.
pub const RATIO_LOW: f64 = 0.2;
pub const RATIO_HIGH: f64 = 5.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairRatio {
    pub from: Vec<f64>,
    pub to: Vec<f64>,
    pub base: f64,
    pub modified: f64,
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub pairs: Vec<PairRatio>,
    pub min_ratio: f64,
    pub max_ratio: f64,
    pub ratio_low: f64,
    pub ratio_high: f64,
    pub all_within: bool,
    pub note: String,
}

/// The comparison family: the first field replaced by the sum of the first
/// two, every other field kept.
pub fn modified_family(system: &VectorFieldSystem) -> Result<VectorFieldSystem> {
    if system.num_fields() < 2 {
        return Err(Error::InvalidParam(
            "modified family needs at least two fields to form the sum".into(),
        ));
    }
    let mut fields = system.fields().to_vec();
    fields[0] = fields[0].add(&fields[1])?;
    VectorFieldSystem::new(system.dim(), fields)
}

/// Estimate ratios other/base at each pair, building one field per family
/// per distinct first point. Pairs sharing a first point share the builds.
pub fn family_ratio_pairs(
    base: &VectorFieldSystem,
    other: &VectorFieldSystem,
    pairs: &[(Vec<f64>, Vec<f64>)],
    params: &FieldParams,
    grid: &GridSpec,
) -> Result<Vec<PairRatio>> {
    if base.dim() != other.dim() {
        return Err(Error::DimensionMismatch { expected: base.dim(), got: other.dim() });
    }
    if pairs.is_empty() {
        return Err(Error::InvalidParam("need at least one point pair".into()));
    }
    let mut groups: BTreeMap<Vec<u64>, Vec<usize>> = BTreeMap::new();
    for (k, (from, _)) in pairs.iter().enumerate() {
        let key = from.iter().map(|v| v.to_bits()).collect();
        groups.entry(key).or_default().push(k);
    }
    let mut out = vec![None; pairs.len()];
    for members in groups.values() {
        let origin = &pairs[members[0]].0;
        let base_field = DistanceField::build(base, origin, params.clone(), grid.clone())?;
        let other_field = DistanceField::build(other, origin, params.clone(), grid.clone())?;
        for &k in members {
            let to = &pairs[k].1;
            let a = base_field.rho_upper(to)?;
            let b = other_field.rho_upper(to)?;
            if !a.is_finite() || !b.is_finite() {
                return Err(Error::Unreached { index: k });
            }
            let ratio = if a == 0.0 && b == 0.0 { 1.0 } else { b / a };
            out[k] = Some(PairRatio {
                from: pairs[k].0.clone(),
                to: to.clone(),
                base: a,
                modified: b,
                ratio,
            });
        }
    }
    Ok(out.into_iter().map(|p| p.expect("every pair visited")).collect())
}

/// Builds the modified family and checks every pair's estimate ratio
/// against the accepted band. Both columns of the report are upper
/// estimates of their family's path distance, so the check compares
/// estimator to estimator; it cannot order the underlying exact distances.
pub fn distance_equivalence_check(
    system: &VectorFieldSystem,
    pairs: &[(Vec<f64>, Vec<f64>)],
    params: &FieldParams,
    grid: &GridSpec,
) -> Result<EquivalenceReport> {
    let modified = modified_family(system)?;
    let ratios = family_ratio_pairs(system, &modified, pairs, params, grid)?;
    let min_ratio = ratios.iter().map(|p| p.ratio).fold(f64::INFINITY, f64::min);
    let max_ratio = ratios.iter().map(|p| p.ratio).fold(f64::NEG_INFINITY, f64::max);
    let all_within = ratios.iter().all(|p| p.ratio >= RATIO_LOW && p.ratio <= RATIO_HIGH);
    Ok(EquivalenceReport {
        pairs: ratios,
        min_ratio,
        max_ratio,
        ratio_low: RATIO_LOW,
        ratio_high: RATIO_HIGH,
        all_within,
        note: "both columns are grid-restricted upper estimates of their family's \
               path distance; ratios compare the estimators, not the exact distances"
            .into(),
    })
}
