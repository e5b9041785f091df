//! Empirical inequality checks over distance-field balls: the doubling
//! lower-bound recursion, sup/mean and difference-quotient ratios, and
//! their stability under grid refinement. Every check reports its data and
//! a verdict; constants are measured, never assumed.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::basis::CommutatorBasis;
use crate::chain::length_cap;
use crate::convexity::ScalarFunction;
use crate::error::{Error, Result};
use crate::field::{DistanceField, FieldParams};
use crate::grid::GridSpec;
use crate::volume::ball_sample;

/// Relative change in an empirical constant tolerated under refinement.
pub const REFINEMENT_DRIFT: f64 = 0.25;

/// Monte Carlo noise allowance for monotonicity across the factor grid.
pub const FAMILY_NOISE: f64 = 0.10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EstimateId {
    #[serde(rename = "supestCC")]
    SupMean,
    #[serde(rename = "gradestCC")]
    Gradient,
    #[serde(rename = "estlamb")]
    LambdaFamily,
    #[serde(rename = "NxB")]
    LowerBound,
    #[serde(rename = "moser-ratio")]
    MoserRatio,
    #[serde(rename = "sublap")]
    SubLaplacian,
    #[serde(rename = "lipschitz")]
    Lipschitz,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateRow {
    pub point: Vec<f64>,
    pub scale: f64,
    pub quantity: String,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub id: EstimateId,
    pub label: String,
    pub constant: f64,
    pub parameters: BTreeMap<String, f64>,
    pub rows: Vec<EstimateRow>,
    pub pass: bool,
    pub detail: String,
}

/// 2^n u0 - (2^n - 1) m, the closed form of the doubling recursion.
pub fn doubling_lower_bound_closed(n: u32, u0: f64, m: f64) -> f64 {
    let p = f64::from(n).exp2();
    p * u0 - (p - 1.0) * m
}

/// The recursion mu_j = 2 mu_{j-1} - m run for n steps from u0.
pub fn doubling_lower_bound_iterated(n: u32, u0: f64, m: f64) -> f64 {
    let mut mu = u0;
    for _ in 0..n {
        mu = 2.0 * mu - m;
    }
    mu
}

/// Case bound for the infimum over the inner ball given u0 at the center
/// and the supremum m over the outer ball. Every case is implied by the
/// closed form at n_bar, with equality in the middle case.
pub fn three_case_bound(n_bar: u32, u0: f64, m: f64) -> f64 {
    let p = f64::from(n_bar).exp2();
    if u0 >= 0.0 {
        2.0 * u0 - (p - 1.0) * m
    } else if m >= 0.0 {
        doubling_lower_bound_closed(n_bar, u0, m)
    } else {
        p * u0 - m
    }
}

fn sup_over_ball(
    u: &ScalarFunction,
    field: &DistanceField,
    r: f64,
    samples: usize,
    seed: u64,
    absolute: bool,
) -> Result<f64> {
    let pts = ball_sample(field, r, samples, seed)?;
    let mut sup = f64::NEG_INFINITY;
    for p in &pts {
        let v = u.eval(p)?;
        sup = sup.max(if absolute { v.abs() } else { v });
    }
    Ok(sup)
}

fn inf_over_ball(
    u: &ScalarFunction,
    field: &DistanceField,
    r: f64,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    let pts = ball_sample(field, r, samples, seed)?;
    let mut inf = f64::INFINITY;
    for p in &pts {
        inf = inf.min(u.eval(p)?);
    }
    Ok(inf)
}

fn mean_abs_over_ball(
    u: &ScalarFunction,
    field: &DistanceField,
    r: f64,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    let pts = ball_sample(field, r, samples, seed)?;
    let mut sum = 0.0;
    for p in &pts {
        sum += u.eval(p)?.abs();
    }
    Ok(sum / pts.len() as f64)
}

/// Same system, origin and box at half the move cost, half the integrator
/// step and half the cell size.
fn refine_field(field: &DistanceField) -> Result<DistanceField> {
    let p = field.params();
    let params = FieldParams {
        tau: p.tau / 2.0,
        budget: p.budget,
        step: p.step / 2.0,
        moves: p.moves,
        splits: p.splits,
    };
    let grid = field.grid();
    let cell = grid.cell().iter().map(|c| c / 2.0).collect();
    let refined = GridSpec::new(grid.min().to_vec(), grid.max().to_vec(), cell)?;
    DistanceField::build(field.system(), field.origin(), params, refined)
}

fn pair_distance(field: &DistanceField, from: &[f64], to: &[f64]) -> Result<f64> {
    let aux =
        DistanceField::build(field.system(), from, field.params().clone(), field.grid().clone())?;
    aux.rho_upper(to)
}

struct PairScan {
    constant: f64,
    values: Vec<(usize, f64)>,
    skipped: usize,
}

fn pair_ratio_scan(
    u: &ScalarFunction,
    field: &DistanceField,
    pairs: &[(Vec<f64>, Vec<f64>)],
    r: f64,
    norm: f64,
) -> Result<PairScan> {
    let mut values = Vec::new();
    let mut constant = 0.0f64;
    let mut skipped = 0usize;
    for (k, (y, z)) in pairs.iter().enumerate() {
        let d = pair_distance(field, y, z)?;
        if !d.is_finite() {
            return Err(Error::Unreached { index: k });
        }
        if d == 0.0 {
            skipped += 1;
            continue;
        }
        let v = (u.eval(y)? - u.eval(z)?).abs() * r / (d * norm);
        constant = constant.max(v);
        values.push((k, v));
    }
    if values.is_empty() {
        return Err(Error::Degenerate("every pair had zero estimated distance".into()));
    }
    Ok(PairScan { constant, values, skipped })
}

fn stable_under(c_coarse: f64, c_fine: f64) -> bool {
    if c_coarse == 0.0 {
        c_fine == 0.0
    } else {
        ((c_fine - c_coarse) / c_coarse).abs() <= REFINEMENT_DRIFT
    }
}

fn pair_report(
    id: EstimateId,
    u: &ScalarFunction,
    field: &DistanceField,
    pairs: &[(Vec<f64>, Vec<f64>)],
    r: f64,
    samples: usize,
    seed: u64,
    norm_of: impl Fn(&DistanceField) -> Result<f64>,
    detail: &str,
) -> Result<EstimateReport> {
    if pairs.is_empty() {
        return Err(Error::InvalidParam("need at least one point pair".into()));
    }
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::InvalidParam("radius must be positive and finite".into()));
    }
    let norm = norm_of(field)?;
    if norm == 0.0 {
        return Err(Error::Degenerate("u vanishes on the normalizing ball".into()));
    }
    let coarse = pair_ratio_scan(u, field, pairs, r, norm)?;

    let fine_field = refine_field(field)?;
    let fine_norm = norm_of(&fine_field)?;
    if fine_norm == 0.0 {
        return Err(Error::Degenerate("u vanishes on the refined normalizing ball".into()));
    }
    let fine = pair_ratio_scan(u, &fine_field, pairs, r, fine_norm)?;

    let mut rows: Vec<EstimateRow> = coarse
        .values
        .iter()
        .map(|&(k, v)| EstimateRow {
            point: pairs[k].0.clone(),
            scale: r,
            quantity: "pair_ratio".into(),
            value: v,
        })
        .collect();
    rows.push(EstimateRow {
        point: field.origin().to_vec(),
        scale: r,
        quantity: "refined_constant".into(),
        value: fine.constant,
    });

    let pass = coarse.constant.is_finite() && stable_under(coarse.constant, fine.constant);
    let mut parameters = BTreeMap::new();
    parameters.insert("r".into(), r);
    parameters.insert("samples".into(), samples as f64);
    parameters.insert("seed".into(), seed as f64);
    parameters.insert("tau".into(), field.params().tau);
    parameters.insert("refined_tau".into(), field.params().tau / 2.0);
    parameters.insert("skipped_pairs".into(), coarse.skipped as f64);
    Ok(EstimateReport {
        id,
        label: u.label.clone(),
        constant: coarse.constant,
        parameters,
        rows,
        pass,
        detail: detail.into(),
    })
}

/// Empirical difference-quotient constant normalized by the sup of |u|
/// over the r-ball; the verdict needs stability under refinement.
pub fn lipschitz_ratio(
    u: &ScalarFunction,
    field: &DistanceField,
    pairs: &[(Vec<f64>, Vec<f64>)],
    r: f64,
    samples: usize,
    seed: u64,
) -> Result<EstimateReport> {
    pair_report(
        EstimateId::Lipschitz,
        u,
        field,
        pairs,
        r,
        samples,
        seed,
        |f| sup_over_ball(u, f, r, samples, seed, true),
        "max over pairs of |u(y)-u(z)| * r / (distance estimate * sup of |u| over \
         the r-ball); pass needs the constant stable under refinement",
    )
}

/// Empirical difference-quotient constant normalized by the mean of |u|
/// over the doubled ball; the verdict needs stability under refinement.
pub fn gradient_ratio(
    u: &ScalarFunction,
    field: &DistanceField,
    pairs: &[(Vec<f64>, Vec<f64>)],
    r: f64,
    samples: usize,
    seed: u64,
) -> Result<EstimateReport> {
    pair_report(
        EstimateId::Gradient,
        u,
        field,
        pairs,
        r,
        samples,
        seed,
        |f| mean_abs_over_ball(u, f, 2.0 * r, samples, seed.wrapping_add(1)),
        "max over pairs of |u(y)-u(z)| * r / (distance estimate * mean of |u| over \
         the 2r-ball); pass needs the constant stable under refinement",
    )
}

/// sup of |u| over the r-ball divided by the mean of |u| over the 2r-ball.
pub fn sup_mean_ratio(
    u: &ScalarFunction,
    field: &DistanceField,
    r: f64,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    let sup = sup_over_ball(u, field, r, samples, seed, true)?;
    let mean = mean_abs_over_ball(u, field, 2.0 * r, samples, seed.wrapping_add(1))?;
    if mean == 0.0 {
        return Err(Error::Degenerate("u vanishes on the doubled ball".into()));
    }
    Ok(sup / mean)
}

/// sup_mean_ratio across a radius grid with shared sample seeds; pass
/// needs every ratio below `bound` and max/min below `spread_limit`.
#[allow(clippy::too_many_arguments)]
pub fn sup_mean_scan(
    u: &ScalarFunction,
    field: &DistanceField,
    radii: &[f64],
    bound: f64,
    spread_limit: f64,
    samples: usize,
    seed: u64,
) -> Result<EstimateReport> {
    if radii.is_empty() {
        return Err(Error::InvalidParam("need at least one radius".into()));
    }
    let mut rows = Vec::with_capacity(3 * radii.len());
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for &r in radii {
        let sup = sup_over_ball(u, field, r, samples, seed, true)?;
        let mean = mean_abs_over_ball(u, field, 2.0 * r, samples, seed.wrapping_add(1))?;
        if mean == 0.0 {
            return Err(Error::Degenerate("u vanishes on the doubled ball".into()));
        }
        let ratio = sup / mean;
        min = min.min(ratio);
        max = max.max(ratio);
        let origin = field.origin().to_vec();
        rows.push(EstimateRow {
            point: origin.clone(),
            scale: r,
            quantity: "sup_abs".into(),
            value: sup,
        });
        rows.push(EstimateRow {
            point: origin.clone(),
            scale: 2.0 * r,
            quantity: "mean_abs".into(),
            value: mean,
        });
        rows.push(EstimateRow {
            point: origin,
            scale: r,
            quantity: "sup_mean_ratio".into(),
            value: ratio,
        });
    }
    let spread = if min > 0.0 { max / min } else { f64::INFINITY };
    let pass = max.is_finite() && max <= bound && spread < spread_limit;
    let mut parameters = BTreeMap::new();
    parameters.insert("bound".into(), bound);
    parameters.insert("spread_limit".into(), spread_limit);
    parameters.insert("spread".into(), spread);
    parameters.insert("samples".into(), samples as f64);
    parameters.insert("seed".into(), seed as f64);
    Ok(EstimateReport {
        id: EstimateId::SupMean,
        label: u.label.clone(),
        constant: max,
        parameters,
        rows,
        pass,
        detail: "sup/mean ratios across the radius grid; pass needs the maximum below \
                 the bound and the max/min spread below the limit"
            .into(),
    })
}

/// Ratios sup over the r-ball to mean over the factor*r-ball for each
/// factor; pass needs the ratio non-increasing in the factor up to noise.
#[allow(clippy::too_many_arguments)]
pub fn lambda_ratio(
    u: &ScalarFunction,
    field: &DistanceField,
    r: f64,
    factors: &[f64],
    samples: usize,
    seed: u64,
) -> Result<EstimateReport> {
    if factors.is_empty() {
        return Err(Error::InvalidParam("need at least one factor".into()));
    }
    if factors.iter().any(|&l| !(l > 1.0) || !l.is_finite()) {
        return Err(Error::InvalidParam("every factor must exceed 1".into()));
    }
    if factors.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParam("factors must be strictly increasing".into()));
    }
    let sup = sup_over_ball(u, field, r, samples, seed, true)?;
    let mut rows = Vec::with_capacity(factors.len());
    let mut ratios = Vec::with_capacity(factors.len());
    for &l in factors {
        let mean = mean_abs_over_ball(u, field, l * r, samples, seed.wrapping_add(1))?;
        if mean == 0.0 {
            return Err(Error::Degenerate("u vanishes on an outer ball".into()));
        }
        let ratio = sup / mean;
        ratios.push(ratio);
        rows.push(EstimateRow {
            point: field.origin().to_vec(),
            scale: l,
            quantity: "sup_mean_ratio".into(),
            value: ratio,
        });
    }
    let monotone = ratios.windows(2).all(|w| w[1] <= w[0] * (1.0 + FAMILY_NOISE));
    let constant = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut parameters = BTreeMap::new();
    parameters.insert("r".into(), r);
    parameters.insert("noise".into(), FAMILY_NOISE);
    parameters.insert("samples".into(), samples as f64);
    parameters.insert("seed".into(), seed as f64);
    Ok(EstimateReport {
        id: EstimateId::LambdaFamily,
        label: u.label.clone(),
        constant,
        parameters,
        rows,
        pass: constant.is_finite() && monotone,
        detail: "sup over the r-ball to mean over the scaled ball for each factor; \
                 pass needs the ratio non-increasing in the factor up to noise"
            .into(),
    })
}

/// Signed sup of u over the half ball divided by the mean of |u| over the
/// full ball.
pub fn moser_ratio(
    u: &ScalarFunction,
    field: &DistanceField,
    r: f64,
    samples: usize,
    seed: u64,
) -> Result<EstimateReport> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::InvalidParam("radius must be positive and finite".into()));
    }
    let sup = sup_over_ball(u, field, 0.5 * r, samples, seed, false)?;
    let mean = mean_abs_over_ball(u, field, r, samples, seed.wrapping_add(1))?;
    if mean == 0.0 {
        return Err(Error::Degenerate("u vanishes on the full ball".into()));
    }
    let constant = sup / mean;
    let mut parameters = BTreeMap::new();
    parameters.insert("r".into(), r);
    parameters.insert("samples".into(), samples as f64);
    parameters.insert("seed".into(), seed as f64);
    Ok(EstimateReport {
        id: EstimateId::MoserRatio,
        label: u.label.clone(),
        constant,
        parameters,
        rows: vec![
            EstimateRow {
                point: field.origin().to_vec(),
                scale: 0.5 * r,
                quantity: "sup_u".into(),
                value: sup,
            },
            EstimateRow {
                point: field.origin().to_vec(),
                scale: r,
                quantity: "mean_abs_u".into(),
                value: mean,
            },
        ],
        pass: constant.is_finite(),
        detail: "signed sup of u over the half ball to mean of |u| over the full ball".into(),
    })
}

/// Finds the smallest doubling depth whose closed-form bound clears the
/// sampled infimum over the inner ball, and checks the case bound at the
/// full depth. The field must be centered at the point under test.
#[allow(clippy::too_many_arguments)]
pub fn lower_bound_check(
    basis: &CommutatorBasis,
    u: &ScalarFunction,
    field: &DistanceField,
    delta: f64,
    b_hat: f64,
    samples: usize,
    seed: u64,
) -> Result<EstimateReport> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::InvalidParam("delta must be positive and finite".into()));
    }
    if !(b_hat > 0.0 && b_hat <= 1.0) {
        return Err(Error::InvalidParam("b_hat must lie in (0, 1]".into()));
    }
    let cap = length_cap(basis.system().dim(), basis.spanning_step());
    let outer = cap as f64 * delta;
    if outer > field.params().budget {
        return Err(Error::InvalidParam(format!(
            "outer radius {outer} exceeds the field budget {}; shrink delta",
            field.params().budget
        )));
    }
    let x = field.origin();
    let u_x = u.eval(x)?;
    let m = sup_over_ball(u, field, outer, samples, seed, false)?;
    let inf = inf_over_ball(u, field, b_hat * delta, samples, seed.wrapping_add(1))?;
    let tol = 1e-9 * [1.0, u_x.abs(), m.abs(), inf.abs()].into_iter().fold(0.0, f64::max);

    let mut found = 0usize;
    for n in 1..=cap {
        if doubling_lower_bound_closed(n as u32, u_x, m) <= inf + tol {
            found = n;
            break;
        }
    }
    let case_bound = three_case_bound(cap as u32, u_x, m);
    let case_ok = case_bound <= inf + tol;
    let pass = found > 0 && case_ok;

    let mut parameters = BTreeMap::new();
    parameters.insert("delta".into(), delta);
    parameters.insert("b_hat".into(), b_hat);
    parameters.insert("depth_cap".into(), cap as f64);
    parameters.insert("samples".into(), samples as f64);
    parameters.insert("seed".into(), seed as f64);
    parameters.insert("tolerance".into(), tol);
    Ok(EstimateReport {
        id: EstimateId::LowerBound,
        label: u.label.clone(),
        constant: found as f64,
        parameters,
        rows: vec![
            EstimateRow {
                point: x.to_vec(),
                scale: outer,
                quantity: "sup_u".into(),
                value: m,
            },
            EstimateRow {
                point: x.to_vec(),
                scale: b_hat * delta,
                quantity: "inf_u".into(),
                value: inf,
            },
            EstimateRow {
                point: x.to_vec(),
                scale: delta,
                quantity: "case_bound".into(),
                value: case_bound,
            },
        ],
        pass,
        detail: "smallest doubling depth whose closed-form bound clears the sampled \
                 infimum over the inner ball; the case bound at the full depth must \
                 clear it too"
            .into(),
    })
}
