//! Monte Carlo ball volumes over a distance field: sampling is confined to
//! the bounding box of the field's reached cells, which contains every
//! finite sublevel set, so one fixed-seed sample stream serves any radius
//! and estimates at different radii stay comparable.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::basis::CommutatorBasis;
use crate::error::{Error, Result};
use crate::field::DistanceField;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BallEstimate {
    pub center: Vec<f64>,
    pub radius: f64,
    pub volume: f64,
    pub samples: usize,
    pub seed: u64,
    pub hits: usize,
}

fn check_radius(field: &DistanceField, r: f64) -> Result<()> {
    if !(r >= 0.0) || !r.is_finite() {
        return Err(Error::InvalidParam("radius must be finite and non-negative".into()));
    }
    if r > field.params().budget {
        return Err(Error::InvalidParam(format!(
            "radius {r} exceeds the field budget {}",
            field.params().budget
        )));
    }
    Ok(())
}

/// Volume estimates for several radii from one sample stream. The stream
/// depends only on the seed and the field, not on the radii, so estimates
/// are monotone in the radius even across separate calls.
pub fn ball_volumes(
    field: &DistanceField,
    radii: &[f64],
    samples: usize,
    seed: u64,
) -> Result<Vec<BallEstimate>> {
    for &r in radii {
        check_radius(field, r)?;
    }
    if samples == 0 {
        return Err(Error::InvalidParam("sample count must be positive".into()));
    }
    let (lo, hi) = field.reached_bounding_box();
    let n = lo.len();
    let box_volume: f64 = lo.iter().zip(&hi).map(|(a, b)| b - a).product();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hits = vec![0usize; radii.len()];
    let mut x = vec![0.0; n];
    for _ in 0..samples {
        for i in 0..n {
            x[i] = rng.random_range(lo[i]..hi[i]);
        }
        let rho = field.rho_upper(&x).unwrap_or(f64::INFINITY);
        for (h, &r) in hits.iter_mut().zip(radii) {
            if rho < r {
                *h += 1;
            }
        }
    }
    Ok(radii
        .iter()
        .zip(&hits)
        .map(|(&r, &h)| BallEstimate {
            center: field.origin().to_vec(),
            radius: r,
            volume: box_volume * h as f64 / samples as f64,
            samples,
            seed,
            hits: h,
        })
        .collect())
}

pub fn ball_volume(
    field: &DistanceField,
    r: f64,
    samples: usize,
    seed: u64,
) -> Result<BallEstimate> {
    Ok(ball_volumes(field, &[r], samples, seed)?.pop().expect("one radius"))
}

/// Exactly `count` points with rho_upper < r, by rejection from the
/// bounding box of the qualifying cells. Gives up after 10_000 attempts
/// per requested point, or immediately when no cell qualifies.
pub fn ball_sample(
    field: &DistanceField,
    r: f64,
    count: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    check_radius(field, r)?;
    let Some((lo, hi)) = field.sublevel_bounding_box(r) else {
        return Err(Error::SamplingExceeded { attempts: 0, accepted: 0, requested: count });
    };
    let n = lo.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    let cap = count.saturating_mul(10_000) as u64;
    let mut attempts = 0u64;
    let mut x = vec![0.0; n];
    while out.len() < count {
        if attempts >= cap {
            return Err(Error::SamplingExceeded {
                attempts,
                accepted: out.len(),
                requested: count,
            });
        }
        attempts += 1;
        for i in 0..n {
            x[i] = rng.random_range(lo[i]..hi[i]);
        }
        if field.rho_upper(&x).unwrap_or(f64::INFINITY) < r {
            out.push(x.clone());
        }
    }
    Ok(out)
}

/// volume(B(x, 2r)) / volume(B(x, r)) from one shared sample stream.
pub fn doubling_ratio(field: &DistanceField, r: f64, samples: usize, seed: u64) -> Result<f64> {
    let est = ball_volumes(field, &[r, 2.0 * r], samples, seed)?;
    if est[0].volume == 0.0 {
        return Err(Error::Degenerate(format!(
            "ball volume at radius {r} is zero; nothing to compare"
        )));
    }
    Ok(est[1].volume / est[0].volume)
}

/// volume(B(x, delta)) divided by the basis volume polynomial at (x, delta).
pub fn lambda_volume_ratio(
    basis: &CommutatorBasis,
    field: &DistanceField,
    x: &[f64],
    delta: f64,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    let lam = basis.capital_lambda(x, delta)?;
    if lam <= 0.0 {
        return Err(Error::Degenerate(format!(
            "basis volume polynomial vanishes at {x:?}"
        )));
    }
    let est = ball_volume(field, delta, samples, seed)?;
    Ok(est.volume / lam)
}
