//! Convexity of a scalar observable along horizontal flows: second
//! differences, a randomized pass/fail test with witnesses, the pointed
//! family at a base point, and a flow-based sign check for the associated
//! sum-of-squares operator.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::estimates::{EstimateId, EstimateReport, EstimateRow};
use crate::expr::Expression;
use crate::flow::{flow, DEFAULT_STEP};
use crate::vecfield::VectorFieldSystem;

/// A field counts as vanishing at the base point below this norm.
pub const POINTING_THRESHOLD: f64 = 1e-10;

/// The sign check averages second differences over this many nested
/// halvings of the probe scale, so a kink in a non-smooth observable
/// cannot hide behind one lucky scale.
const SIGN_CHECK_SCALES: u32 = 5;

const SIGN_CHECK_TOL: f64 = 1e-6;

/// Cap on stored failure witnesses; the total count is still reported.
const MAX_WITNESSES: usize = 32;

/// Scalar observable with a display label.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalarFunction {
    pub label: String,
    pub expression: Expression,
}

impl ScalarFunction {
    pub fn new(label: impl Into<String>, expression: Expression) -> Self {
        ScalarFunction { label: label.into(), expression }
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        self.expression.eval(x)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvexityWitness {
    pub x: Vec<f64>,
    pub alpha: Vec<f64>,
    pub t: f64,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvexityReport {
    pub label: String,
    pub pass: bool,
    /// Failing samples, capped at a fixed count; `failures` is the total.
    pub witnesses: Vec<ConvexityWitness>,
    pub failures: usize,
    pub samples: usize,
    pub skipped: usize,
    pub tolerance: f64,
    pub seed: u64,
}

/// u(gamma(t)) - 2 u(gamma(0)) + u(gamma(-t)) along the flow gamma of
/// sum_i alpha_i X_i through x. Non-negative for every x, alpha, t exactly
/// when u is convex along horizontal curves.
pub fn horizontal_second_difference(
    system: &VectorFieldSystem,
    u: &ScalarFunction,
    x: &[f64],
    alpha: &[f64],
    t: f64,
    step: f64,
) -> Result<f64> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::InvalidParam("probe time must be positive and finite".into()));
    }
    let dir = system.combination(alpha)?;
    let forward = flow(&dir, x, t, step)?;
    let backward = flow(&dir, x, -t, step)?;
    Ok(u.eval(&forward)? - 2.0 * u.eval(x)? + u.eval(&backward)?)
}

fn max_sphere_direction(rng: &mut ChaCha8Rng, m: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
        let peak = v.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
        if peak > 1e-6 {
            return v.iter().map(|c| c / peak).collect();
        }
    }
}

/// Samples base points in the box, directions on the unit max-sphere and
/// probe times from `t_list`; fails on any second difference below
/// -tol * max(1, |u(x)|). Sampling can refute convexity, never prove it.
#[allow(clippy::too_many_arguments)]
pub fn xconvexity_test(
    system: &VectorFieldSystem,
    u: &ScalarFunction,
    lo: &[f64],
    hi: &[f64],
    n_points: usize,
    n_dirs: usize,
    t_list: &[f64],
    seed: u64,
    tol: f64,
) -> Result<ConvexityReport> {
    let n = system.dim();
    if lo.len() != n || hi.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: lo.len().max(hi.len()) });
    }
    if lo.iter().zip(hi).any(|(a, b)| !(a < b)) {
        return Err(Error::InvalidParam("box must have positive extent on every axis".into()));
    }
    if n_points == 0 || n_dirs == 0 || t_list.is_empty() {
        return Err(Error::InvalidParam("need positive sample counts and probe times".into()));
    }
    if t_list.iter().any(|&t| !(t > 0.0) || !t.is_finite()) {
        return Err(Error::InvalidParam("probe times must be positive and finite".into()));
    }
    if !(tol >= 0.0) {
        return Err(Error::InvalidParam("tolerance must be non-negative".into()));
    }

    let m = system.num_fields();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut witnesses = Vec::new();
    let mut failures = 0usize;
    let mut skipped = 0usize;
    let samples = n_points * n_dirs * t_list.len();
    for _ in 0..n_points {
        let x: Vec<f64> = (0..n).map(|i| rng.random_range(lo[i]..hi[i])).collect();
        let threshold = match u.eval(&x) {
            Ok(v) => tol * v.abs().max(1.0),
            Err(_) => {
                skipped += n_dirs * t_list.len();
                continue;
            }
        };
        for _ in 0..n_dirs {
            let alpha = max_sphere_direction(&mut rng, m);
            for &t in t_list {
                match horizontal_second_difference(system, u, &x, &alpha, t, DEFAULT_STEP) {
                    Ok(value) if value < -threshold => {
                        failures += 1;
                        if witnesses.len() < MAX_WITNESSES {
                            witnesses.push(ConvexityWitness {
                                x: x.clone(),
                                alpha: alpha.clone(),
                                t,
                                value,
                            });
                        }
                    }
                    Ok(_) => {}
                    Err(_) => skipped += 1,
                }
            }
        }
    }
    Ok(ConvexityReport {
        label: u.label.clone(),
        pass: failures == 0,
        witnesses,
        failures,
        samples,
        skipped,
        tolerance: tol,
        seed,
    })
}

/// Replaces every field vanishing at the base point by its sum with the
/// first non-vanishing one, so each returned field is non-zero at x0.
pub fn pointed_fields(system: &VectorFieldSystem, x0: &[f64]) -> Result<VectorFieldSystem> {
    if x0.len() != system.dim() {
        return Err(Error::DimensionMismatch { expected: system.dim(), got: x0.len() });
    }
    let m = system.num_fields();
    let anchor = (1..=m)
        .find(|&i| system.field(i).expect("index in range").norm_at(x0) > POINTING_THRESHOLD)
        .ok_or_else(|| {
            Error::Degenerate("every field vanishes at the base point".into())
        })?;
    let anchor_field = system.field(anchor)?.clone();
    let mut fields = Vec::with_capacity(m);
    for i in 1..=m {
        let f = system.field(i)?;
        if f.norm_at(x0) > POINTING_THRESHOLD {
            fields.push(f.clone());
        } else {
            fields.push(f.add(&anchor_field)?);
        }
    }
    VectorFieldSystem::new(system.dim(), fields)
}

fn euclidean_ball_point(rng: &mut ChaCha8Rng, center: &[f64], radius: f64) -> Vec<f64> {
    let n = center.len();
    loop {
        let offset: Vec<f64> = (0..n).map(|_| rng.random_range(-radius..radius)).collect();
        if offset.iter().map(|c| c * c).sum::<f64>() <= radius * radius {
            return center.iter().zip(&offset).map(|(c, o)| c + o).collect();
        }
    }
}

/// Flow-based sign check for the sum of second derivatives along the
/// pointed fields: at sampled points near x0 the summed second differences
/// (averaged over nested probe scales) must not be negative. Also records
/// the sup/mean ratio of u between the half and full sampling balls.
#[allow(clippy::too_many_arguments)]
pub fn sublaplacian_check(
    system: &VectorFieldSystem,
    u: &ScalarFunction,
    x0: &[f64],
    delta: f64,
    n_points: usize,
    t: f64,
    seed: u64,
) -> Result<EstimateReport> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::InvalidParam("sampling radius must be positive and finite".into()));
    }
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::InvalidParam("probe time must be positive and finite".into()));
    }
    if n_points == 0 {
        return Err(Error::InvalidParam("need at least one sample point".into()));
    }
    let pointed = pointed_fields(system, x0)?;
    let m = pointed.num_fields();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(n_points);
    let mut worst = f64::INFINITY;
    for _ in 0..n_points {
        let p = euclidean_ball_point(&mut rng, x0, delta);
        let u_p = u.eval(&p)?;
        let mut acc = 0.0;
        for level in 0..SIGN_CHECK_SCALES {
            let tj = t / f64::from(1u32 << level);
            let mut sum = 0.0;
            for i in 1..=m {
                let f = pointed.field(i)?;
                let forward = u.eval(&flow(f, &p, tj, DEFAULT_STEP)?)?;
                let backward = u.eval(&flow(f, &p, -tj, DEFAULT_STEP)?)?;
                sum += forward - 2.0 * u_p + backward;
            }
            acc += sum / (tj * tj);
        }
        let value = acc / f64::from(SIGN_CHECK_SCALES);
        worst = worst.min(value);
        rows.push(EstimateRow {
            point: p,
            scale: t,
            quantity: "second_difference_sum".into(),
            value,
        });
    }

    let mut sup_rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    let mut mean_rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(2));
    let mut sup_half = f64::NEG_INFINITY;
    let mut mean_abs = 0.0;
    for _ in 0..n_points {
        let half = euclidean_ball_point(&mut sup_rng, x0, 0.5 * delta);
        sup_half = sup_half.max(u.eval(&half)?);
        let full = euclidean_ball_point(&mut mean_rng, x0, delta);
        mean_abs += u.eval(&full)?.abs();
    }
    mean_abs /= n_points as f64;
    if mean_abs == 0.0 {
        return Err(Error::Degenerate("u vanishes on all sampled points".into()));
    }

    let scale = u.eval(x0)?.abs().max(1.0);
    let pass = worst >= -SIGN_CHECK_TOL * scale;
    let mut parameters = BTreeMap::new();
    parameters.insert("delta".into(), delta);
    parameters.insert("n_points".into(), n_points as f64);
    parameters.insert("t".into(), t);
    parameters.insert("seed".into(), seed as f64);
    parameters.insert("tolerance".into(), SIGN_CHECK_TOL * scale);
    parameters.insert("sup_mean_half_ball".into(), sup_half / mean_abs);
    Ok(EstimateReport {
        id: EstimateId::SubLaplacian,
        label: u.label.clone(),
        constant: worst,
        parameters,
        rows,
        pass,
        detail: "minimum over sampled points of the summed flow second differences \
                 of u along the pointed fields, averaged over nested probe scales"
            .into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quadratic() -> ScalarFunction {
        ScalarFunction::new(
            "x^2+y^2",
            Expression::coord(0).pow(2).add(Expression::coord(1).pow(2)),
        )
    }

    fn negative_square() -> ScalarFunction {
        ScalarFunction::new(
            "-x^2",
            Expression::constant(0.0).sub(Expression::coord(0).pow(2)),
        )
    }

    #[test]
    fn second_difference_matches_the_quadratic_formula() {
        let sys = VectorFieldSystem::builtin("heisenberg1").unwrap();
        let u = quadratic();
        let x = [0.3, -0.2, 0.5];
        for alpha in [[1.0, 0.25], [-0.4, 1.0], [1.0, -1.0]] {
            for t in [0.05, 0.2, 0.7] {
                let got =
                    horizontal_second_difference(&sys, &u, &x, &alpha, t, DEFAULT_STEP).unwrap();
                let want = 2.0 * (alpha[0] * alpha[0] + alpha[1] * alpha[1]) * t * t;
                assert!((got - want).abs() < 1e-8, "alpha {alpha:?} t {t}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn second_difference_of_a_linear_observable_vanishes() {
        let sys = VectorFieldSystem::builtin("heisenberg1").unwrap();
        let u = ScalarFunction::new("x", Expression::coord(0));
        let got = horizontal_second_difference(
            &sys,
            &u,
            &[0.1, 0.2, -0.3],
            &[0.8, -1.0],
            0.3,
            DEFAULT_STEP,
        )
        .unwrap();
        assert!(got.abs() < 1e-12, "{got}");
    }

    #[test]
    fn negative_direction_gives_the_negated_square() {
        let sys = VectorFieldSystem::builtin("heisenberg1").unwrap();
        let got = horizontal_second_difference(
            &sys,
            &negative_square(),
            &[0.0, 0.0, 0.0],
            &[1.0, 0.0],
            0.2,
            DEFAULT_STEP,
        )
        .unwrap();
        assert!((got + 2.0 * 0.04).abs() < 1e-10, "{got}");
    }

    #[test]
    fn convexity_verdicts_on_the_standard_examples() {
        let sys = VectorFieldSystem::builtin("heisenberg1").unwrap();
        let lo = [-1.0, -1.0, -1.0];
        let hi = [1.0, 1.0, 1.0];
        let ts = [0.05, 0.15, 0.4];
        let pass =
            xconvexity_test(&sys, &quadratic(), &lo, &hi, 40, 6, &ts, 7, 1e-7).unwrap();
        assert!(pass.pass, "witnesses {:?}", pass.witnesses);
        assert_eq!(pass.failures, 0);

        let abs = ScalarFunction::new("|x|", Expression::coord(0).abs());
        let abs_report = xconvexity_test(&sys, &abs, &lo, &hi, 40, 6, &ts, 7, 1e-7).unwrap();
        assert!(abs_report.pass, "witnesses {:?}", abs_report.witnesses);

        let fail =
            xconvexity_test(&sys, &negative_square(), &lo, &hi, 40, 6, &ts, 7, 1e-7).unwrap();
        assert!(!fail.pass);
        assert!(!fail.witnesses.is_empty());
        assert!(fail.witnesses.iter().all(|w| w.value < 0.0));
    }

    #[test]
    fn verdicts_survive_affine_rescaling() {
        let sys = VectorFieldSystem::builtin("heisenberg1").unwrap();
        let lo = [-1.0, -1.0, -1.0];
        let hi = [1.0, 1.0, 1.0];
        let ts = [0.1, 0.3];
        for (base, want) in [(quadratic(), true), (negative_square(), false)] {
            for (a, b) in [(0.5, -2.0), (3.0, 7.0)] {
                let scaled = ScalarFunction::new(
                    "scaled",
                    base.expression
                        .clone()
                        .mul(Expression::constant(a))
                        .add(Expression::constant(b)),
                );
                let report =
                    xconvexity_test(&sys, &scaled, &lo, &hi, 25, 5, &ts, 11, 1e-7).unwrap();
                assert_eq!(report.pass, want, "a {a} b {b}");
            }
        }
    }

    #[test]
    fn pointed_fields_fixes_the_vanishing_field() {
        let sys = VectorFieldSystem::builtin("grushin").unwrap();
        let pointed = pointed_fields(&sys, &[0.0, 0.0]).unwrap();
        assert_eq!(pointed.field(1).unwrap().eval(&[0.0, 0.0]), vec![1.0, 0.0]);
        assert_eq!(pointed.field(2).unwrap().eval(&[0.7, 0.0]), vec![1.0, 0.7]);

        let away = pointed_fields(&sys, &[1.0, 0.0]).unwrap();
        for i in 1..=2 {
            assert_eq!(
                away.field(i).unwrap().eval(&[1.0, 0.3]),
                sys.field(i).unwrap().eval(&[1.0, 0.3])
            );
        }

        let heis = VectorFieldSystem::builtin("heisenberg1").unwrap();
        let same = pointed_fields(&heis, &[0.0, 0.0, 0.0]).unwrap();
        for i in 1..=2 {
            assert_eq!(
                same.field(i).unwrap().eval(&[0.2, 0.1, 0.4]),
                heis.field(i).unwrap().eval(&[0.2, 0.1, 0.4])
            );
        }
    }

    #[test]
    fn all_vanishing_fields_are_degenerate() {
        let zero = crate::vecfield::VectorField::new(vec![
            crate::poly::Polynomial::coordinate(1, 0).unwrap(),
        ])
        .unwrap();
        let sys = VectorFieldSystem::new(1, vec![zero]).unwrap();
        assert!(matches!(pointed_fields(&sys, &[0.0]), Err(Error::Degenerate(_))));
    }

    #[test]
    fn sign_check_measures_the_quadratics() {
        let sys = VectorFieldSystem::builtin("heisenberg1").unwrap();
        let report = sublaplacian_check(
            &sys,
            &quadratic(),
            &[0.0, 0.0, 0.0],
            0.3,
            60,
            1e-3,
            13,
        )
        .unwrap();
        assert!(report.pass);
        assert!((report.constant - 4.0).abs() < 1e-3, "{}", report.constant);

        let bad = sublaplacian_check(
            &sys,
            &negative_square(),
            &[0.0, 0.0, 0.0],
            0.3,
            60,
            1e-3,
            13,
        )
        .unwrap();
        assert!(!bad.pass);
        assert!((bad.constant + 2.0).abs() < 1e-3, "{}", bad.constant);

        let linear = ScalarFunction::new("x", Expression::coord(0));
        let flat = sublaplacian_check(&sys, &linear, &[0.0, 0.0, 0.0], 0.3, 60, 1e-3, 13)
            .unwrap();
        assert!(flat.pass);
        assert!(flat.constant.abs() < 1e-6, "{}", flat.constant);
    }
}
