//! Run configuration: one system, shared basis and distance parameters,
//! and an ordered list of experiment blocks.

use serde::{Deserialize, Serialize};
use std::path::PathBuf;

use ccgeo::field::{FieldParams, MoveSet};
use ccgeo::grid::GridSpec;
use ccgeo::vecfield::VectorFieldSystem;

use crate::CliError;

/// Seed used for any block that does not state one. Always echoed back.
pub const DEFAULT_SEED: u64 = 42;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SystemSource {
    Builtin(String),
    Inline(VectorFieldSystem),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BasisConfig {
    /// Largest commutator length tried when spanning.
    pub r_max: usize,
    /// Points where the spanning rank is certified; the origin if empty.
    pub probes: Vec<Vec<f64>>,
}

impl Default for BasisConfig {
    fn default() -> Self {
        BasisConfig { r_max: 4, probes: Vec::new() }
    }
}

/// Shared distance-field parameters. The box is the hypercube of the
/// given half width unless explicit bounds are set; the cell edge is
/// uniform unless per-axis sizes are set.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DistanceConfig {
    pub tau: f64,
    pub cell: f64,
    pub budget: f64,
    pub step: f64,
    pub moves: MoveSet,
    pub splits: u32,
    pub box_half_width: f64,
    pub box_min: Option<Vec<f64>>,
    pub box_max: Option<Vec<f64>>,
    pub cells: Option<Vec<f64>>,
}

impl Default for DistanceConfig {
    fn default() -> Self {
        let p = FieldParams::default();
        DistanceConfig {
            tau: p.tau,
            cell: 0.02,
            budget: p.budget,
            step: p.step,
            moves: p.moves,
            splits: p.splits,
            box_half_width: 2.0,
            box_min: None,
            box_max: None,
            cells: None,
        }
    }
}

impl DistanceConfig {
    pub fn field_params(&self) -> FieldParams {
        FieldParams {
            tau: self.tau,
            budget: self.budget,
            step: self.step,
            moves: self.moves,
            splits: self.splits,
        }
    }

    pub fn grid(&self, n: usize) -> Result<GridSpec, CliError> {
        let min = self
            .box_min
            .clone()
            .unwrap_or_else(|| vec![-self.box_half_width; n]);
        let max = self
            .box_max
            .clone()
            .unwrap_or_else(|| vec![self.box_half_width; n]);
        let cell = self.cells.clone().unwrap_or_else(|| vec![self.cell; n]);
        GridSpec::new(min, max, cell)
            .map_err(|e| CliError::Config(format!("distance: {e}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CommandKind {
    HormanderCheck,
    Basis,
    Lambda,
    ApproxExp,
    DistanceField,
    Ball,
    Doubling,
    Sandwich,
    Convexity,
    LowerBound,
    Lipschitz,
    Estimates,
    Sublaplacian,
}

impl CommandKind {
    pub fn name(self) -> &'static str {
        match self {
            CommandKind::HormanderCheck => "hormander-check",
            CommandKind::Basis => "basis",
            CommandKind::Lambda => "lambda",
            CommandKind::ApproxExp => "approx-exp",
            CommandKind::DistanceField => "distance-field",
            CommandKind::Ball => "ball",
            CommandKind::Doubling => "doubling",
            CommandKind::Sandwich => "sandwich",
            CommandKind::Convexity => "convexity",
            CommandKind::LowerBound => "lower-bound",
            CommandKind::Lipschitz => "lipschitz",
            CommandKind::Estimates => "estimates",
            CommandKind::Sublaplacian => "sublaplacian",
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentBlock {
    pub command: CommandKind,
    #[serde(default = "empty_object")]
    pub parameters: serde_json::Value,
    pub seed: Option<u64>,
}

fn empty_object() -> serde_json::Value {
    serde_json::Value::Object(serde_json::Map::new())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub system: SystemSource,
    #[serde(default)]
    pub basis: BasisConfig,
    #[serde(default)]
    pub distance: DistanceConfig,
    #[serde(default)]
    pub experiments: Vec<ExperimentBlock>,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

impl Config {
    pub fn resolve_system(&self) -> Result<VectorFieldSystem, CliError> {
        match &self.system {
            SystemSource::Builtin(name) => VectorFieldSystem::builtin(name)
                .map_err(|_| CliError::Config(format!("system: unknown builtin \"{name}\""))),
            SystemSource::Inline(sys) => Ok(sys.clone()),
        }
    }
}

/// Parses, validates and normalizes a config: schema errors carry the
/// JSON path of the offending field, missing block seeds are filled with
/// the default so the echoed config is fully explicit.
pub fn parse_config(text: &str) -> Result<Config, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let mut cfg: Config = serde_path_to_error::deserialize(de)
        .map_err(|e| CliError::Config(format!("{}: {}", e.path(), e.inner())))?;
    cfg.resolve_system()?;
    for block in &mut cfg.experiments {
        block.seed.get_or_insert(DEFAULT_SEED);
    }
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_resolves_the_preset() {
        let cfg = parse_config(r#"{"system":"heisenberg1","experiments":[]}"#).unwrap();
        let sys = cfg.resolve_system().unwrap();
        assert_eq!(sys.dim(), 3);
        assert_eq!(sys.num_fields(), 2);
        assert!(cfg.experiments.is_empty());
    }

    #[test]
    fn unknown_builtin_names_the_field() {
        let err = parse_config(r#"{"system":"no_such"}"#).unwrap_err();
        assert!(err.to_string().contains("system"), "{err}");
        assert!(err.to_string().contains("no_such"), "{err}");
    }

    #[test]
    fn missing_seed_is_filled_with_the_default() {
        let cfg = parse_config(
            r#"{"system":"grushin","experiments":[{"command":"basis"}]}"#,
        )
        .unwrap();
        assert_eq!(cfg.experiments[0].seed, Some(DEFAULT_SEED));
    }

    #[test]
    fn schema_errors_carry_the_json_path() {
        let err = parse_config(
            r#"{"system":"grushin","distance":{"tau":"fast"}}"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("distance.tau"), "{err}");
    }

    #[test]
    fn inline_systems_parse() {
        let cfg = parse_config(
            r#"{"system":{"n":2,"fields":[[[{"c":1.0,"e":[0,0]}],[]],[[],[{"c":1.0,"e":[1,0]}]]]}}"#,
        )
        .unwrap();
        let sys = cfg.resolve_system().unwrap();
        assert_eq!(sys.dim(), 2);
        assert_eq!(sys.field(2).unwrap().eval(&[0.7, 0.0]), vec![0.0, 0.7]);
    }

    #[test]
    fn default_distance_box_is_the_spec_box() {
        let cfg = parse_config(r#"{"system":"heisenberg1"}"#).unwrap();
        let grid = cfg.distance.grid(3).unwrap();
        assert_eq!(grid.min(), &[-2.0, -2.0, -2.0]);
        assert_eq!(grid.max(), &[2.0, 2.0, 2.0]);
        let p = cfg.distance.field_params();
        assert_eq!(p.tau, 0.05);
        assert_eq!(p.budget, 2.0);
    }
}
