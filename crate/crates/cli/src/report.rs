//! Output plumbing: per-block JSON reports, CSV tables, the run manifest,
//! and atomic file writes. Reports carry no timestamps, so identical
//! configs reproduce them byte for byte; wall-clock times live only here
//! in the manifest.

use serde::Serialize;
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::CliError;

/// Columnar payload rendered as UTF-8 CSV: header row, '.' decimals,
/// '\n' newlines. An empty table renders as the header line alone.
#[derive(Clone, Debug, Default)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn render(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// Shortest round-trip decimal form; integers keep a bare form.
pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

#[derive(Clone, Debug, Serialize)]
pub struct BlockReport<'a> {
    pub command: &'a str,
    pub seed: u64,
    pub parameters: serde_json::Value,
    pub payload: serde_json::Value,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct BlockRecord {
    pub index: usize,
    pub command: String,
    pub seed: u64,
    /// "pass", "fail", "error" or "skipped" (fail-fast aborted the run).
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report_path: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub csv_path: Option<String>,
    pub cache_hit: bool,
    pub wall_ms: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub config_sha256: String,
    pub blocks: Vec<BlockRecord>,
    pub outputs: Vec<String>,
    pub total_wall_ms: u64,
}

/// Writes through a temporary sibling and renames, so a crash never
/// leaves a half-written report behind.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut bytes = serde_json::to_vec_pretty(value)
        .map_err(|e| CliError::Runtime(format!("serializing {}: {e}", path.display())))?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_table_is_header_only() {
        let t = CsvTable { header: vec!["r".into(), "value".into()], rows: vec![] };
        assert_eq!(t.render(), "r,value\n");
    }

    #[test]
    fn floats_render_with_dot_decimals() {
        assert_eq!(fmt_f64(0.25), "0.25");
        assert_eq!(fmt_f64(-3.0), "-3");
        assert_eq!(fmt_f64(1e-9), "0.000000001");
    }
}
