//! Run directories, the metrics CSV, and model dumps.
//!
//! Layout: `<root>/<run-id>/{config.resolved.json, metrics.csv, traces/,
//! models/, summary.json}`. The output root is the `--out` flag when given,
//! else `$AIRFED_OUT`, else `./out`. Run ids are deterministic in the
//! config, so re-running a config overwrites its directory.

use crate::error::Result;
use crate::harness::config::ExperimentConfig;
use serde::Serialize;
use std::io::Write;
use std::path::{Path, PathBuf};

pub const OUT_ENV_VAR: &str = "AIRFED_OUT";

/// Columns of metrics.csv, one row per round, in order.
pub const METRICS_COLUMNS: [&str; 13] = [
    "round",
    "global_loss",
    "global_acc",
    "personal_acc_mean",
    "personal_acc_std",
    "personal_loss_mean",
    "personal_grad_norm_mean",
    "agg_mse",
    "imag_residual",
    "skipped_users",
    "mean_tau",
    "max_tx_power",
    "beta_t",
];

/// One metrics.csv row.
#[derive(Debug, Clone, Serialize)]
pub struct MetricsRow {
    pub round: u64,
    pub global_loss: f64,
    pub global_acc: f64,
    pub personal_acc_mean: f64,
    pub personal_acc_std: f64,
    pub personal_loss_mean: f64,
    pub personal_grad_norm_mean: f64,
    pub agg_mse: f64,
    pub imag_residual: f64,
    pub skipped_users: usize,
    pub mean_tau: f64,
    pub max_tx_power: f64,
    pub beta_t: f64,
}

impl MetricsRow {
    fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.round,
            self.global_loss,
            self.global_acc,
            self.personal_acc_mean,
            self.personal_acc_std,
            self.personal_loss_mean,
            self.personal_grad_norm_mean,
            self.agg_mse,
            self.imag_residual,
            self.skipped_users,
            self.mean_tau,
            self.max_tx_power,
            self.beta_t,
        )
    }
}

pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut out = METRICS_COLUMNS.join(",");
    out.push('\n');
    for row in rows {
        out.push_str(&row.to_csv_line());
        out.push('\n');
    }
    out
}

/// FNV-1a over arbitrary bytes; used for run ids and replay checksums.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

pub fn digest_f64s(values: &[f64]) -> u64 {
    let mut bytes = Vec::with_capacity(values.len() * 8);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fnv1a64(&bytes)
}

/// Deterministic run id: mode, seed, and a short config digest. The thread
/// count is excluded; it never changes results.
pub fn run_id(cfg: &ExperimentConfig) -> String {
    let mut keyed = cfg.clone();
    keyed.threads = 0;
    let json = serde_json::to_string(&keyed).expect("config serializes");
    format!("{}-seed{}-{:08x}", cfg.mode.as_str(), cfg.seed, fnv1a64(json.as_bytes()) as u32)
}

pub fn resolve_out_root(flag: Option<&Path>) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    if let Ok(env) = std::env::var(OUT_ENV_VAR) {
        if !env.is_empty() {
            return PathBuf::from(env);
        }
    }
    PathBuf::from("out")
}

/// A run's directory on disk.
pub struct RunDir {
    pub path: PathBuf,
}

impl RunDir {
    pub fn create(root: &Path, cfg: &ExperimentConfig) -> Result<Self> {
        let path = root.join(run_id(cfg));
        std::fs::create_dir_all(path.join("traces"))?;
        std::fs::create_dir_all(path.join("models"))?;
        let resolved = serde_json::to_string_pretty(cfg)?;
        std::fs::write(path.join("config.resolved.json"), resolved)?;
        Ok(RunDir { path })
    }

    pub fn write_metrics(&self, rows: &[MetricsRow]) -> Result<()> {
        std::fs::write(self.path.join("metrics.csv"), metrics_csv(rows))?;
        Ok(())
    }

    pub fn write_summary<S: Serialize>(&self, summary: &S) -> Result<()> {
        let mut f = std::fs::File::create(self.path.join("summary.json"))?;
        f.write_all(serde_json::to_string_pretty(summary)?.as_bytes())?;
        Ok(())
    }

    pub fn write_models<S: Serialize>(&self, models: &S) -> Result<()> {
        let mut f = std::fs::File::create(self.path.join("models").join("models.json"))?;
        f.write_all(serde_json::to_string(models)?.as_bytes())?;
        Ok(())
    }

    pub fn write_trace(&self, round: u64, json: &str) -> Result<()> {
        std::fs::write(self.path.join("traces").join(format!("round_{round:05}.json")), json)?;
        Ok(())
    }
}
