//! Experiment blocks: per-command parameter schemas, the engine that
//! shares a commutator basis and cached distance fields across blocks,
//! and the run driver that writes reports plus the manifest.

use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use std::collections::HashMap;
use std::fs;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, OnceLock};
use std::time::Instant;

use ccgeo::chain::length_profile;
use ccgeo::flow::DEFAULT_STEP;
use ccgeo::{
    approx_exp_program, ball_volumes, distance_equivalence_check, doubling_ratio, exp_chain,
    gradient_ratio, hormander_step, lambda_ratio, lipschitz_ratio, lower_bound_check, run_program,
    sandwich_check, spanning_basis, sublaplacian_check, sup_mean_scan, unfold, unfolded_flow,
    xconvexity_test, CommutatorBasis, DistanceField, EstimateReport, ScalarFunction,
    VectorFieldSystem,
};

use crate::config::{CommandKind, Config, ExperimentBlock, DEFAULT_SEED};
use crate::report::{
    fmt_f64, write_atomic, write_json, BlockRecord, BlockReport, CsvTable, RunManifest,
};
use crate::CliError;

/// Everything a finished block hands back to the driver. `parameters` is
/// the resolved echo (defaults filled in), not the raw request.
pub struct BlockOutcome {
    pub parameters: Value,
    pub payload: Value,
    pub pass: bool,
    pub csv: Option<CsvTable>,
    pub cache_hit: bool,
}

/// Shared state for one run: the resolved system, the lazily built
/// commutator basis and a cache of distance fields keyed by their build
/// inputs, so blocks probing the same origin reuse one wavefront sweep.
pub struct Engine {
    system: VectorFieldSystem,
    r_max: usize,
    probes: Vec<Vec<f64>>,
    distance: crate::config::DistanceConfig,
    basis: OnceLock<Result<CommutatorBasis, String>>,
    fields: Mutex<HashMap<String, Arc<DistanceField>>>,
}

impl Engine {
    pub fn new(cfg: &Config) -> Result<Self, CliError> {
        let system = cfg.resolve_system()?;
        let n = system.dim();
        if cfg.basis.r_max == 0 {
            return Err(CliError::Config("basis.r_max must be at least 1".into()));
        }
        for (i, p) in cfg.basis.probes.iter().enumerate() {
            if p.len() != n {
                return Err(CliError::Config(format!(
                    "basis.probes[{i}] has {} coordinates, system dimension is {n}",
                    p.len()
                )));
            }
        }
        let probes = if cfg.basis.probes.is_empty() {
            vec![vec![0.0; n]]
        } else {
            cfg.basis.probes.clone()
        };
        Ok(Engine {
            system,
            r_max: cfg.basis.r_max,
            probes,
            distance: cfg.distance.clone(),
            basis: OnceLock::new(),
            fields: Mutex::new(HashMap::new()),
        })
    }

    pub fn system(&self) -> &VectorFieldSystem {
        &self.system
    }

    /// Built at the smallest commutator length that spans at every probe,
    /// so the length cap reflects the system rather than the search limit.
    pub fn basis(&self) -> Result<&CommutatorBasis, CliError> {
        let slot = self.basis.get_or_init(|| {
            let mut step = 1;
            for p in &self.probes {
                step = step.max(hormander_step(&self.system, p, self.r_max).map_err(|e| e.to_string())?);
            }
            spanning_basis(&self.system, &self.probes, step).map_err(|e| e.to_string())
        });
        match slot {
            Ok(b) => Ok(b),
            Err(msg) => Err(CliError::Runtime(format!("building the basis: {msg}"))),
        }
    }

    /// Fetches or builds the distance field centered at `origin`; the
    /// second value records whether the cache already held it.
    pub fn field(&self, origin: &[f64]) -> Result<(Arc<DistanceField>, bool), CliError> {
        let params = self.distance.field_params();
        let grid = self.distance.grid(self.system.dim())?;
        let key = serde_json::to_string(&(origin, &params, &grid))
            .map_err(|e| CliError::Runtime(format!("field cache key: {e}")))?;
        if let Some(f) = self.fields.lock().expect("field cache lock").get(&key) {
            return Ok((Arc::clone(f), true));
        }
        let built = Arc::new(DistanceField::build(&self.system, origin, params, grid)?);
        let mut map = self.fields.lock().expect("field cache lock");
        let entry = map.entry(key).or_insert_with(|| Arc::clone(&built));
        Ok((Arc::clone(entry), false))
    }

    fn point_or_origin(&self, x: Option<Vec<f64>>) -> Result<Vec<f64>, CliError> {
        let n = self.system.dim();
        match x {
            None => Ok(vec![0.0; n]),
            Some(v) if v.len() == n => Ok(v),
            Some(v) => Err(CliError::Config(format!(
                "point has {} coordinates, system dimension is {n}",
                v.len()
            ))),
        }
    }

    pub fn run_block(&self, block: &ExperimentBlock, seed: u64) -> Result<BlockOutcome, CliError> {
        match block.command {
            CommandKind::HormanderCheck => self.run_hormander(&block.parameters),
            CommandKind::Basis => self.run_basis(&block.parameters),
            CommandKind::Lambda => self.run_lambda(&block.parameters),
            CommandKind::ApproxExp => self.run_approx_exp(&block.parameters),
            CommandKind::DistanceField => self.run_distance_field(&block.parameters),
            CommandKind::Ball => self.run_ball(&block.parameters, seed),
            CommandKind::Doubling => self.run_doubling(&block.parameters, seed),
            CommandKind::Sandwich => self.run_sandwich(&block.parameters, seed),
            CommandKind::Convexity => self.run_convexity(&block.parameters, seed),
            CommandKind::LowerBound => self.run_lower_bound(&block.parameters, seed),
            CommandKind::Lipschitz => self.run_lipschitz(&block.parameters, seed),
            CommandKind::Estimates => self.run_estimates(&block.parameters, seed),
            CommandKind::Sublaplacian => self.run_sublaplacian(&block.parameters, seed),
        }
    }

    fn run_hormander(&self, raw: &Value) -> Result<BlockOutcome, CliError> {
        let p: HormanderParams = parse_params("hormander-check", raw)?;
        let x = self.point_or_origin(p.x.clone())?;
        let r_max = p.r_max.unwrap_or(self.r_max);
        let resolved = json!({ "x": x, "r_max": r_max });
        match hormander_step(&self.system, &x, r_max) {
            Ok(step) => Ok(BlockOutcome {
                parameters: resolved,
                payload: json!({ "x": x, "r_max": r_max, "step": step, "spans": true }),
                pass: true,
                csv: None,
                cache_hit: false,
            }),
            Err(ccgeo::Error::SpanningFailure { point, rank, dim, step }) => Ok(BlockOutcome {
                parameters: resolved,
                payload: json!({
                    "x": point, "r_max": r_max, "rank": rank, "dim": dim,
                    "step": step, "spans": false,
                }),
                pass: false,
                csv: None,
                cache_hit: false,
            }),
            Err(e) => Err(e.into()),
        }
    }

    fn run_basis(&self, raw: &Value) -> Result<BlockOutcome, CliError> {
        let _: EmptyParams = parse_params("basis", raw)?;
        let basis = self.basis()?;
        let payload = json!({
            "q": basis.len(),
            "dim": basis.dim(),
            "spanning_step": basis.spanning_step(),
            "max_degree": basis.max_degree(),
            "degrees": basis.degrees(),
            "sources": basis.sources(),
            "zero_sources": basis.zero_sources(),
        });
        Ok(BlockOutcome {
            parameters: json!({}),
            payload,
            pass: true,
            csv: None,
            cache_hit: false,
        })
    }

    fn run_lambda(&self, raw: &Value) -> Result<BlockOutcome, CliError> {
        let p: LambdaParams = parse_params("lambda", raw)?;
        let x = self.point_or_origin(p.x.clone())?;
        let basis = self.basis()?;
        let capital = basis.capital_lambda(&x, p.delta)?;
        let selected = basis.select_multi_index(&x, p.delta)?;
        let value = basis.lambda(&selected, &x)?;
        Ok(BlockOutcome {
            parameters: json!({ "x": x, "delta": p.delta }),
            payload: json!({
                "x": x,
                "delta": p.delta,
                "capital_lambda": capital,
                "selected": {
                    "entries": selected.entries(),
                    "entry_degrees": selected.entry_degrees(),
                    "total_degree": selected.total_degree(),
                    "lambda": value,
                },
            }),
            pass: true,
            csv: None,
            cache_hit: false,
        })
    }

    fn run_approx_exp(&self, raw: &Value) -> Result<BlockOutcome, CliError> {
        let p: ApproxExpParams = parse_params("approx-exp", raw)?;
        let x = self.point_or_origin(p.x.clone())?;
        let basis = self.basis()?;
        if let Some(entries) = &p.entries {
            let index = basis.multi_index(entries)?;
            let h = p.displacements.clone().ok_or_else(|| {
                CliError::Config("approx-exp: entries given without displacements".into())
            })?;
            let end = exp_chain(basis, &index, &x, &h, p.step)?;
            let coords = unfold(basis, &index, &h)?;
            let unfolded_end = unfolded_flow(basis, &x, &coords, p.step)?;
            let agreement = end
                .iter()
                .zip(&unfolded_end)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            let profile = length_profile(basis, &index);
            let resolved = json!({
                "entries": entries, "displacements": h, "x": x, "step": p.step,
            });
            return Ok(BlockOutcome {
                parameters: resolved,
                payload: json!({
                    "x": x,
                    "entries": entries,
                    "displacements": h,
                    "endpoint": end,
                    "unfolded_endpoint": unfolded_end,
                    "factorization_gap": agreement,
                    "box_norm": index.box_norm(&h)?,
                    "slot_count": coords.len(),
                    "leg_count": profile.total,
                    "leg_cap": profile.cap,
                }),
                pass: end.iter().all(|v| v.is_finite()),
                csv: None,
                cache_hit: false,
            });
        }
        let k = match p.element {
            Some(k) => k,
            None => {
                let degrees = basis.degrees();
                let max = basis.max_degree();
                1 + degrees.iter().position(|&d| d == max).unwrap_or(0)
            }
        };
        let spec = approx_exp_program(basis, k, p.h)?;
        let end = run_program(&self.system, spec.program(), &x, p.step)?;
        Ok(BlockOutcome {
            parameters: json!({ "element": k, "h": p.h, "x": x, "step": p.step }),
            payload: json!({
                "element": k,
                "degree": basis.degree(k)?,
                "source": basis.source(k)?,
                "h": p.h,
                "leg_time": spec.displacement(),
                "leg_count": spec.length(),
                "program": spec.program(),
                "x": x,
                "endpoint": end,
            }),
            pass: end.iter().all(|v| v.is_finite()),
            csv: None,
            cache_hit: false,
        })
    }

    fn run_distance_field(&self, raw: &Value) -> Result<BlockOutcome, CliError> {
        let p: OriginParams = parse_params("distance-field", raw)?;
        let origin = self.point_or_origin(p.origin.clone())?;
        let (field, cache_hit) = self.field(&origin)?;
        let grid = field.grid();
        let n = grid.dim();
        let mut table = CsvTable { header: coord_header(n), rows: Vec::new() };
        table.header.push("value".into());
        for (flat, value) in field.iter_reached() {
            let center = grid.cell_center(flat);
            let mut row: Vec<String> = center.iter().map(|&v| fmt_f64(v)).collect();
            row.push(fmt_f64(value));
            table.rows.push(row);
        }
        let payload = json!({
            "origin": origin,
            "params": field.params(),
            "grid": { "min": grid.min(), "max": grid.max(), "cell": grid.cell(),
                      "cells": grid.num_cells() },
            "reached": field.reached_count(),
            "coverage": field.reached_count() as f64 / grid.num_cells() as f64,
        });
        Ok(BlockOutcome {
            parameters: json!({ "origin": origin }),
            payload,
            pass: field.reached_count() > 0,
            csv: Some(table),
            cache_hit,
        })
    }

    fn run_ball(&self, raw: &Value, seed: u64) -> Result<BlockOutcome, CliError> {
        let p: BallParams = parse_params("ball", raw)?;
        let origin = self.point_or_origin(p.origin.clone())?;
        let (field, cache_hit) = self.field(&origin)?;
        let estimates = ball_volumes(&field, &p.radii, p.samples, seed)?;
        let mut table = CsvTable {
            header: vec!["r".into(), "volume".into(), "hits".into(), "samples".into()],
            rows: Vec::new(),
        };
        for b in &estimates {
            table.rows.push(vec![
                fmt_f64(b.radius),
                fmt_f64(b.volume),
                b.hits.to_string(),
                b.samples.to_string(),
            ]);
        }
        Ok(BlockOutcome {
            parameters: json!({ "origin": origin, "radii": p.radii, "samples": p.samples }),
            payload: json!({ "origin": origin, "seed": seed, "estimates": estimates }),
            pass: true,
            csv: Some(table),
            cache_hit,
        })
    }

    fn run_doubling(&self, raw: &Value, seed: u64) -> Result<BlockOutcome, CliError> {
        let p: DoublingParams = parse_params("doubling", raw)?;
        let origin = self.point_or_origin(p.origin.clone())?;
        let (field, cache_hit) = self.field(&origin)?;
        let ratio = doubling_ratio(&field, p.r, p.samples, seed)?;
        let pass = match p.band {
            Some([lo, hi]) => ratio >= lo && ratio <= hi,
            None => true,
        };
        Ok(BlockOutcome {
            parameters: json!({
                "origin": origin, "r": p.r, "samples": p.samples, "band": p.band,
            }),
            payload: json!({
                "origin": origin, "r": p.r, "samples": p.samples, "seed": seed,
                "ratio": ratio, "band": p.band,
            }),
            pass,
            csv: None,
            cache_hit,
        })
    }

    fn run_sandwich(&self, raw: &Value, seed: u64) -> Result<BlockOutcome, CliError> {
        let p: SandwichParams = parse_params("sandwich", raw)?;
        let x = self.point_or_origin(p.x.clone())?;
        let epsilon = p.epsilon.unwrap_or(p.delta / 20.0);
        let basis = self.basis()?;
        let index = basis.select_multi_index(&x, p.delta)?;
        let (field, cache_hit) = self.field(&x)?;
        let report = sandwich_check(
            basis,
            &field,
            &index,
            &x,
            p.delta,
            p.image_samples,
            p.b_start,
            epsilon,
            seed,
        )?;
        let pass = report.outer_ok && report.inner_b > 0.0;
        Ok(BlockOutcome {
            parameters: json!({
                "x": x, "delta": p.delta, "image_samples": p.image_samples,
                "b_start": p.b_start, "epsilon": epsilon,
            }),
            payload: json!({ "entries": index.entries(), "report": report }),
            pass,
            csv: None,
            cache_hit,
        })
    }

    fn run_convexity(&self, raw: &Value, seed: u64) -> Result<BlockOutcome, CliError> {
        let p: ConvexityParams = parse_params("convexity", raw)?;
        let n = self.system.dim();
        let lo = match p.lo {
            Some(v) => v,
            None => vec![-1.0; n],
        };
        let hi = match p.hi {
            Some(v) => v,
            None => vec![1.0; n],
        };
        let report = xconvexity_test(
            &self.system,
            &p.u,
            &lo,
            &hi,
            p.n_points,
            p.n_dirs,
            &p.times,
            seed,
            p.tol,
        )?;
        let m = self.system.num_fields();
        let mut header = coord_header(n);
        header.extend((1..=m).map(|i| format!("a{i}")));
        header.push("t".into());
        header.push("value".into());
        let mut table = CsvTable { header, rows: Vec::new() };
        for w in &report.witnesses {
            let mut row: Vec<String> = w.x.iter().map(|&v| fmt_f64(v)).collect();
            row.extend(w.alpha.iter().map(|&v| fmt_f64(v)));
            row.push(fmt_f64(w.t));
            row.push(fmt_f64(w.value));
            table.rows.push(row);
        }
        let pass = report.pass;
        Ok(BlockOutcome {
            parameters: json!({
                "u": p.u, "lo": lo, "hi": hi, "n_points": p.n_points,
                "n_dirs": p.n_dirs, "times": p.times, "tol": p.tol,
            }),
            payload: serde_json::to_value(&report)
                .map_err(|e| CliError::Runtime(format!("serializing the report: {e}")))?,
            pass,
            csv: Some(table),
            cache_hit: false,
        })
    }

    fn run_lower_bound(&self, raw: &Value, seed: u64) -> Result<BlockOutcome, CliError> {
        let p: LowerBoundParams = parse_params("lower-bound", raw)?;
        let x = self.point_or_origin(p.x.clone())?;
        let basis = self.basis()?;
        let (field, cache_hit) = self.field(&x)?;
        let report = lower_bound_check(basis, &p.u, &field, p.delta, p.b_hat, p.samples, seed)?;
        let table = estimate_csv(&report);
        let pass = report.pass;
        Ok(BlockOutcome {
            parameters: json!({
                "u": p.u, "x": x, "delta": p.delta, "b_hat": p.b_hat, "samples": p.samples,
            }),
            payload: serde_json::to_value(&report)
                .map_err(|e| CliError::Runtime(format!("serializing the report: {e}")))?,
            pass,
            csv: Some(table),
            cache_hit,
        })
    }

    fn run_lipschitz(&self, raw: &Value, seed: u64) -> Result<BlockOutcome, CliError> {
        let p: LipschitzParams = parse_params("lipschitz", raw)?;
        let origin = self.point_or_origin(p.origin.clone())?;
        let (field, cache_hit) = self.field(&origin)?;
        let pairs = match p.pairs.clone() {
            Some(pairs) => pairs,
            None => random_pairs(self.system.dim(), p.random_pairs, p.pair_radius, seed),
        };
        let report = lipschitz_ratio(&p.u, &field, &pairs, p.r, p.samples, seed)?;
        let table = estimate_csv(&report);
        let pass = report.pass;
        Ok(BlockOutcome {
            parameters: json!({
                "u": p.u, "origin": origin, "pairs": pairs, "r": p.r, "samples": p.samples,
            }),
            payload: serde_json::to_value(&report)
                .map_err(|e| CliError::Runtime(format!("serializing the report: {e}")))?,
            pass,
            csv: Some(table),
            cache_hit,
        })
    }

    fn run_estimates(&self, raw: &Value, seed: u64) -> Result<BlockOutcome, CliError> {
        let p: EstimatesParams = parse_params("estimates", raw)?;
        let origin = self.point_or_origin(p.origin.clone())?;
        let (field, cache_hit) = self.field(&origin)?;
        let scan = sup_mean_scan(
            &p.u,
            &field,
            &p.radii,
            p.bound,
            p.spread_limit,
            p.samples,
            seed,
        )?;
        let pairs = random_pairs(self.system.dim(), p.random_pairs, p.pair_radius, seed);
        let gradient = gradient_ratio(&p.u, &field, &pairs, p.gradient_r, p.samples, seed)?;
        let lambda = lambda_ratio(&p.u, &field, p.lambda_r, &p.factors, p.samples, seed)?;
        let table = sup_mean_pivot(&scan);
        let pass = scan.pass && gradient.pass && lambda.pass;
        Ok(BlockOutcome {
            parameters: json!({
                "u": p.u, "origin": origin, "radii": p.radii, "bound": p.bound,
                "spread_limit": p.spread_limit, "pairs": pairs,
                "gradient_r": p.gradient_r, "lambda_r": p.lambda_r,
                "factors": p.factors, "samples": p.samples,
            }),
            payload: json!({
                "sup_mean": scan, "gradient": gradient, "lambda": lambda,
            }),
            pass,
            csv: Some(table),
            cache_hit,
        })
    }

    fn run_sublaplacian(&self, raw: &Value, seed: u64) -> Result<BlockOutcome, CliError> {
        let p: SublaplacianParams = parse_params("sublaplacian", raw)?;
        let x = self.point_or_origin(p.x.clone())?;
        let report =
            sublaplacian_check(&self.system, &p.u, &x, p.delta, p.n_points, p.t, seed)?;
        let table = estimate_csv(&report);
        let pass = report.pass;
        Ok(BlockOutcome {
            parameters: json!({
                "u": p.u, "x": x, "delta": p.delta, "n_points": p.n_points, "t": p.t,
            }),
            payload: serde_json::to_value(&report)
                .map_err(|e| CliError::Runtime(format!("serializing the report: {e}")))?,
            pass,
            csv: Some(table),
            cache_hit: false,
        })
    }
}

/// Compares the base family's distance estimates with the modified
/// family's over the given pairs; exposed for tests and the library API
/// rather than a config block, since it builds its own fields.
pub fn run_equivalence(
    cfg: &Config,
    pairs: &[(Vec<f64>, Vec<f64>)],
) -> Result<ccgeo::EquivalenceReport, CliError> {
    let system = cfg.resolve_system()?;
    let params = cfg.distance.field_params();
    let grid = cfg.distance.grid(system.dim())?;
    Ok(distance_equivalence_check(&system, pairs, &params, &grid)?)
}

fn coord_header(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("x{i}")).collect()
}

/// Generic table for estimate rows: point coordinates, scale, quantity,
/// value.
fn estimate_csv(report: &EstimateReport) -> CsvTable {
    let n = report.rows.first().map_or(0, |r| r.point.len());
    let mut header = coord_header(n);
    header.push("scale".into());
    header.push("quantity".into());
    header.push("value".into());
    let mut table = CsvTable { header, rows: Vec::new() };
    for row in &report.rows {
        let mut cells: Vec<String> = row.point.iter().map(|&v| fmt_f64(v)).collect();
        cells.push(fmt_f64(row.scale));
        cells.push(row.quantity.clone());
        cells.push(fmt_f64(row.value));
        table.rows.push(cells);
    }
    table
}

/// The scan emits rows in (sup_abs, mean_abs, sup_mean_ratio) triples per
/// radius; pivot them into one row per radius.
fn sup_mean_pivot(report: &EstimateReport) -> CsvTable {
    let mut table = CsvTable {
        header: vec!["r".into(), "sup".into(), "mean".into(), "ratio".into()],
        rows: Vec::new(),
    };
    for triple in report.rows.chunks_exact(3) {
        table.rows.push(vec![
            fmt_f64(triple[0].scale),
            fmt_f64(triple[0].value),
            fmt_f64(triple[1].value),
            fmt_f64(triple[2].value),
        ]);
    }
    table
}

fn random_pairs(n: usize, count: usize, radius: f64, seed: u64) -> Vec<(Vec<f64>, Vec<f64>)> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed.wrapping_add(7));
    (0..count)
        .map(|_| {
            let a: Vec<f64> = (0..n).map(|_| rng.random_range(-radius..radius)).collect();
            let b: Vec<f64> = (0..n).map(|_| rng.random_range(-radius..radius)).collect();
            (a, b)
        })
        .collect()
}

fn parse_params<T: DeserializeOwned>(command: &str, raw: &Value) -> Result<T, CliError> {
    serde_path_to_error::deserialize(raw.clone()).map_err(|e| {
        CliError::Config(format!("{command} parameters: {}: {}", e.path(), e.inner()))
    })
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct EmptyParams {}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct HormanderParams {
    x: Option<Vec<f64>>,
    r_max: Option<usize>,
}

impl Default for HormanderParams {
    fn default() -> Self {
        HormanderParams { x: None, r_max: None }
    }
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct LambdaParams {
    x: Option<Vec<f64>>,
    delta: f64,
}

impl Default for LambdaParams {
    fn default() -> Self {
        LambdaParams { x: None, delta: 0.2 }
    }
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ApproxExpParams {
    element: Option<usize>,
    h: f64,
    x: Option<Vec<f64>>,
    step: f64,
    entries: Option<Vec<usize>>,
    displacements: Option<Vec<f64>>,
}

impl Default for ApproxExpParams {
    fn default() -> Self {
        ApproxExpParams {
            element: None,
            h: 0.1,
            x: None,
            step: DEFAULT_STEP,
            entries: None,
            displacements: None,
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct OriginParams {
    origin: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct BallParams {
    origin: Option<Vec<f64>>,
    radii: Vec<f64>,
    samples: usize,
}

impl Default for BallParams {
    fn default() -> Self {
        BallParams { origin: None, radii: vec![0.1, 0.2, 0.3, 0.4], samples: 100_000 }
    }
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct DoublingParams {
    origin: Option<Vec<f64>>,
    r: f64,
    samples: usize,
    band: Option<[f64; 2]>,
}

impl Default for DoublingParams {
    fn default() -> Self {
        DoublingParams { origin: None, r: 0.2, samples: 100_000, band: None }
    }
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SandwichParams {
    x: Option<Vec<f64>>,
    delta: f64,
    image_samples: usize,
    b_start: f64,
    epsilon: Option<f64>,
}

impl Default for SandwichParams {
    fn default() -> Self {
        SandwichParams {
            x: None,
            delta: 0.2,
            image_samples: 500,
            b_start: 0.5,
            epsilon: None,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConvexityParams {
    u: ScalarFunction,
    #[serde(default)]
    lo: Option<Vec<f64>>,
    #[serde(default)]
    hi: Option<Vec<f64>>,
    #[serde(default = "default_n_points")]
    n_points: usize,
    #[serde(default = "default_n_dirs")]
    n_dirs: usize,
    #[serde(default = "default_times")]
    times: Vec<f64>,
    #[serde(default = "default_tol")]
    tol: f64,
}

fn default_n_points() -> usize {
    200
}

fn default_n_dirs() -> usize {
    8
}

fn default_times() -> Vec<f64> {
    vec![0.05, 0.15, 0.4]
}

fn default_tol() -> f64 {
    1e-7
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LowerBoundParams {
    u: ScalarFunction,
    #[serde(default)]
    x: Option<Vec<f64>>,
    #[serde(default = "default_lb_delta")]
    delta: f64,
    #[serde(default = "default_b_hat")]
    b_hat: f64,
    #[serde(default = "default_samples")]
    samples: usize,
}

fn default_lb_delta() -> f64 {
    0.05
}

fn default_b_hat() -> f64 {
    0.5
}

fn default_samples() -> usize {
    2000
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LipschitzParams {
    u: ScalarFunction,
    #[serde(default)]
    origin: Option<Vec<f64>>,
    #[serde(default)]
    pairs: Option<Vec<(Vec<f64>, Vec<f64>)>>,
    #[serde(default = "default_random_pairs")]
    random_pairs: usize,
    #[serde(default = "default_pair_radius")]
    pair_radius: f64,
    #[serde(default = "default_lip_r")]
    r: f64,
    #[serde(default = "default_samples")]
    samples: usize,
}

fn default_random_pairs() -> usize {
    12
}

fn default_pair_radius() -> f64 {
    0.3
}

fn default_lip_r() -> f64 {
    0.5
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct EstimatesParams {
    u: ScalarFunction,
    #[serde(default)]
    origin: Option<Vec<f64>>,
    #[serde(default = "default_scan_radii")]
    radii: Vec<f64>,
    #[serde(default = "default_bound")]
    bound: f64,
    #[serde(default = "default_spread")]
    spread_limit: f64,
    #[serde(default = "default_est_pairs")]
    random_pairs: usize,
    #[serde(default = "default_est_pair_radius")]
    pair_radius: f64,
    #[serde(default = "default_gradient_r")]
    gradient_r: f64,
    #[serde(default = "default_lambda_r")]
    lambda_r: f64,
    #[serde(default = "default_factors")]
    factors: Vec<f64>,
    #[serde(default = "default_samples")]
    samples: usize,
}

fn default_scan_radii() -> Vec<f64> {
    vec![0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4]
}

fn default_bound() -> f64 {
    10.0
}

fn default_spread() -> f64 {
    3.0
}

fn default_est_pairs() -> usize {
    8
}

fn default_est_pair_radius() -> f64 {
    0.25
}

fn default_gradient_r() -> f64 {
    0.2
}

fn default_lambda_r() -> f64 {
    0.1
}

fn default_factors() -> Vec<f64> {
    vec![1.5, 2.0, 3.0, 4.0]
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SublaplacianParams {
    u: ScalarFunction,
    #[serde(default)]
    x: Option<Vec<f64>>,
    #[serde(default = "default_sub_delta")]
    delta: f64,
    #[serde(default = "default_sub_points")]
    n_points: usize,
    #[serde(default = "default_sub_t")]
    t: f64,
}

fn default_sub_delta() -> f64 {
    0.3
}

fn default_sub_points() -> usize {
    60
}

fn default_sub_t() -> f64 {
    1e-3
}

/// Knobs the binary passes through from flags; `config_text` is the raw
/// file contents, hashed into the manifest.
pub struct RunOptions {
    pub out_dir: PathBuf,
    pub fail_fast: bool,
    pub parallel: bool,
    pub seed_override: Option<u64>,
    pub config_text: String,
}

pub struct RunOutcome {
    pub manifest: RunManifest,
    pub manifest_path: PathBuf,
    pub exit: i32,
}

enum BlockError {
    Config(String),
    Runtime(String),
}

impl From<CliError> for BlockError {
    fn from(e: CliError) -> Self {
        match e {
            CliError::Config(m) => BlockError::Config(m),
            CliError::Runtime(m) => BlockError::Runtime(m),
            CliError::Io(e) => BlockError::Runtime(e.to_string()),
        }
    }
}

/// Runs every block of `cfg`, writing per-block reports, optional CSV
/// tables, a resolved config echo and the manifest into `out_dir`.
/// Blocks run in config order; `--parallel` runs them concurrently and
/// joins in order, so reports are identical either way. Exit code: 2 if
/// any block hit a configuration error, else 3 for a runtime error, else
/// 1 for a verdict failure, else 0.
pub fn run_config(cfg: &Config, opts: &RunOptions) -> Result<RunOutcome, CliError> {
    let start = Instant::now();
    fs::create_dir_all(&opts.out_dir)?;

    let mut resolved = cfg.clone();
    if let Some(seed) = opts.seed_override {
        for block in &mut resolved.experiments {
            block.seed = Some(seed);
        }
    }
    for block in &mut resolved.experiments {
        block.seed.get_or_insert(DEFAULT_SEED);
    }

    let echo_path = opts.out_dir.join("config_echo.json");
    write_json(&echo_path, &resolved)?;
    let mut outputs = vec!["config_echo.json".to_string()];

    let engine = Engine::new(&resolved)?;
    let blocks = &resolved.experiments;

    type Slot = Option<(u64, Result<BlockOutcome, BlockError>)>;
    let results: Vec<Slot> = if opts.parallel {
        std::thread::scope(|scope| {
            let handles: Vec<_> = blocks
                .iter()
                .map(|block| {
                    let engine = &engine;
                    scope.spawn(move || {
                        let t = Instant::now();
                        let r = engine
                            .run_block(block, block.seed.expect("seed filled"))
                            .map_err(BlockError::from);
                        (t.elapsed().as_millis() as u64, r)
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| Some(h.join().expect("block thread panicked")))
                .collect()
        })
    } else {
        let mut out: Vec<Slot> = Vec::with_capacity(blocks.len());
        let mut stopped = false;
        for block in blocks {
            if stopped {
                out.push(None);
                continue;
            }
            let t = Instant::now();
            let r = engine
                .run_block(block, block.seed.expect("seed filled"))
                .map_err(BlockError::from);
            let ok = matches!(&r, Ok(o) if o.pass);
            out.push(Some((t.elapsed().as_millis() as u64, r)));
            if opts.fail_fast && !ok {
                stopped = true;
            }
        }
        out
    };

    let mut records = Vec::with_capacity(blocks.len());
    let mut any_config = false;
    let mut any_runtime = false;
    let mut any_fail = false;

    for (i, (block, slot)) in blocks.iter().zip(results).enumerate() {
        let command = block.command.name();
        let seed = block.seed.expect("seed filled");
        let Some((wall_ms, result)) = slot else {
            records.push(BlockRecord {
                index: i,
                command: command.into(),
                seed,
                status: "skipped".into(),
                error: None,
                report_path: None,
                csv_path: None,
                cache_hit: false,
                wall_ms: 0,
            });
            continue;
        };
        let stem = format!("block_{i:02}_{command}");
        let report_name = format!("{stem}.json");
        let report_path = opts.out_dir.join(&report_name);
        match result {
            Ok(outcome) => {
                let report = BlockReport {
                    command,
                    seed,
                    parameters: outcome.parameters,
                    payload: outcome.payload,
                    pass: outcome.pass,
                    error: None,
                };
                write_json(&report_path, &report)?;
                outputs.push(report_name.clone());
                let csv_name = match outcome.csv {
                    Some(table) => {
                        let name = format!("{stem}.csv");
                        write_atomic(&opts.out_dir.join(&name), table.render().as_bytes())?;
                        outputs.push(name.clone());
                        Some(name)
                    }
                    None => None,
                };
                if !outcome.pass {
                    any_fail = true;
                }
                records.push(BlockRecord {
                    index: i,
                    command: command.into(),
                    seed,
                    status: if outcome.pass { "pass" } else { "fail" }.into(),
                    error: None,
                    report_path: Some(report_name),
                    csv_path: csv_name,
                    cache_hit: outcome.cache_hit,
                    wall_ms,
                });
            }
            Err(e) => {
                let (kind, message) = match e {
                    BlockError::Config(m) => {
                        any_config = true;
                        ("configuration", m)
                    }
                    BlockError::Runtime(m) => {
                        any_runtime = true;
                        ("runtime", m)
                    }
                };
                let message = format!("{kind} error: {message}");
                let report = BlockReport {
                    command,
                    seed,
                    parameters: block.parameters.clone(),
                    payload: Value::Null,
                    pass: false,
                    error: Some(message.clone()),
                };
                write_json(&report_path, &report)?;
                outputs.push(report_name.clone());
                records.push(BlockRecord {
                    index: i,
                    command: command.into(),
                    seed,
                    status: "error".into(),
                    error: Some(message),
                    report_path: Some(report_name),
                    csv_path: None,
                    cache_hit: false,
                    wall_ms,
                });
            }
        }
    }

    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config_sha256: hex_digest(opts.config_text.as_bytes()),
        blocks: records,
        outputs,
        total_wall_ms: start.elapsed().as_millis() as u64,
    };
    let manifest_path = opts.out_dir.join("manifest.json");
    write_json(&manifest_path, &manifest)?;

    let exit = if any_config {
        2
    } else if any_runtime {
        3
    } else if any_fail {
        1
    } else {
        0
    };
    Ok(RunOutcome { manifest, manifest_path, exit })
}

fn hex_digest(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}
