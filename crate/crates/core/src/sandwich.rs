//! Two-sided inclusion check between metric balls and the image of the
//! approximate-exponential map at a selected multi-index: image points must
//! stay inside an enlarged ball (outer), and a small ball must be covered
//! by image points at finite resolution (inner).

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::basis::{CommutatorBasis, MultiIndex};
use crate::chain::{exp_chain, length_cap};
use crate::error::{Error, Result};
use crate::field::DistanceField;
use crate::volume::ball_sample;

const OUTER_SLACK: f64 = 0.05;
const INNER_SHRINK: f64 = 0.85;
const INNER_FLOOR_FRACTION: f64 = 0.01;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SandwichReport {
    pub x: Vec<f64>,
    pub delta: f64,
    /// Displacement scale for image sampling: |h_k| < (scale_a * delta)^d_k.
    pub scale_a: f64,
    /// Distance bound the image points must satisfy.
    pub outer_bound: f64,
    pub image_samples: usize,
    pub outer_failures: usize,
    pub outer_ok: bool,
    /// Ball radius fractions tried for the inner inclusion, descending.
    pub inner_candidates: Vec<f64>,
    /// Largest fraction b with B(x, b*delta) covered by image points at
    /// resolution epsilon; 0 when none passed.
    pub inner_b: f64,
    pub epsilon: f64,
    pub seed: u64,
}

fn random_displacement(
    index: &MultiIndex,
    scale: f64,
    rng: &mut ChaCha8Rng,
    out: &mut Vec<f64>,
) {
    out.clear();
    for &d in index.entry_degrees() {
        let bound = scale.powi(d as i32);
        out.push(rng.random_range(-bound..bound));
    }
}

fn nearest_distance(point: &[f64], cloud: &[Vec<f64>]) -> f64 {
    cloud
        .iter()
        .map(|q| {
            point
                .iter()
                .zip(q)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
        })
        .fold(f64::INFINITY, f64::min)
}

/// Samples the image of the approximate exponential over displacements with
/// norm below delta and checks both inclusions against the distance field.
/// The outer check requires every image point to have a distance value at
/// most (length cap)·delta·(1+5%). The inner check descends a geometric
/// grid of fractions b from b_start, sampling B(x, b·delta) and requiring
/// every sample to lie within epsilon of an image point drawn at the
/// matching scale; the first passing b is reported. A ball too small for
/// the grid to sample stops the descent.
#[allow(clippy::too_many_arguments)]
pub fn sandwich_check(
    basis: &CommutatorBasis,
    field: &DistanceField,
    index: &MultiIndex,
    x: &[f64],
    delta: f64,
    image_samples: usize,
    b_start: f64,
    epsilon: f64,
    seed: u64,
) -> Result<SandwichReport> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::InvalidParam("delta must be positive and finite".into()));
    }
    if delta > field.params().budget {
        return Err(Error::InvalidParam(format!(
            "delta {delta} exceeds the field budget {}; enlarge the field",
            field.params().budget
        )));
    }
    if !(b_start > 0.0 && b_start <= 1.0) {
        return Err(Error::InvalidParam("b_start must lie in (0, 1]".into()));
    }
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::InvalidParam("epsilon must be positive and finite".into()));
    }
    if image_samples == 0 {
        return Err(Error::InvalidParam("need at least one image sample".into()));
    }
    let scale_a = 1.0;
    let step = field.params().step;
    let cap = length_cap(basis.system().dim(), basis.spanning_step());
    let outer_bound = cap as f64 * delta * (1.0 + OUTER_SLACK);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut h = Vec::new();
    let mut outer_failures = 0usize;
    for s in 0..image_samples {
        if s == 0 {
            h.clear();
            h.resize(index.entries().len(), 0.0);
        } else {
            random_displacement(index, scale_a * delta, &mut rng, &mut h);
        }
        let y = exp_chain(basis, index, x, &h, step)?;
        let inside = match field.rho_upper(&y) {
            Ok(v) => v <= outer_bound,
            Err(Error::OutOfBox) => false,
            Err(e) => return Err(e),
        };
        if !inside {
            outer_failures += 1;
        }
    }

    let mut inner_candidates = Vec::new();
    let mut b = b_start;
    while b >= b_start * INNER_FLOOR_FRACTION {
        inner_candidates.push(b);
        b *= INNER_SHRINK;
    }
    let mut inner_b = 0.0;
    let mut image_rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    let mut cloud = Vec::with_capacity(image_samples);
    for &b in &inner_candidates {
        let ball = match ball_sample(field, b * delta, image_samples, seed.wrapping_add(2)) {
            Ok(pts) => pts,
            Err(Error::SamplingExceeded { .. }) => break,
            Err(e) => return Err(e),
        };
        let scale = (2.0 * b * delta).min(delta);
        cloud.clear();
        for _ in 0..image_samples {
            random_displacement(index, scale, &mut image_rng, &mut h);
            cloud.push(exp_chain(basis, index, x, &h, step)?);
        }
        if ball.iter().all(|p| nearest_distance(p, &cloud) <= epsilon) {
            inner_b = b;
            break;
        }
    }

    Ok(SandwichReport {
        x: x.to_vec(),
        delta,
        scale_a,
        outer_bound,
        image_samples,
        outer_failures,
        outer_ok: outer_failures == 0,
        inner_candidates,
        inner_b,
        epsilon,
        seed,
    })
}
