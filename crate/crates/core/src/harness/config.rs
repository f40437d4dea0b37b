//! Experiment configuration: one JSON file fully determines a run.
//!
//! Unknown keys are rejected; every field has a default, and deserializing
//! then re-serializing echoes the defaults, so the dumped resolved config
//! reproduces the run byte-for-byte.

use crate::error::{Error, Result};
use crate::fl::model::Activation;
use crate::power::PowerNorm;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Protocol variant for a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Full pipeline: per-user surfaces, imperfect CSI, noisy uplink.
    ProarPfed,
    /// Full pipeline with exact channel estimates.
    PerfectCsi,
    /// Direct links only.
    NoRis,
    /// One shared surface with m*N elements, phases designed for one user
    /// per round (round-robin).
    CentralRis,
    /// Noiseless unit channels: exact weighted federated averaging.
    IdealFedavg,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::ProarPfed => "proar_pfed",
            Mode::PerfectCsi => "perfect_csi",
            Mode::NoRis => "no_ris",
            Mode::CentralRis => "central_ris",
            Mode::IdealFedavg => "ideal_fedavg",
        }
    }
}

/// A scalar that can be a preset keyword or an explicit number.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaSchedule {
    /// `beta_t = T` for every round.
    Rounds,
    #[serde(untagged)]
    Constant(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EtaSchedule {
    /// `eta = 1/T` for every round.
    InvRounds,
    #[serde(untagged)]
    Constant(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradBound {
    /// Calibrate as twice the max stochastic-gradient norm over a 100-step
    /// dry run at initialization.
    Auto,
    #[serde(untagged)]
    Value(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaStep {
    /// Per-instance descent-safe bound (default).
    Auto,
    /// `2 ||g||^2`, twice the top eigenvalue of the quadratic term.
    Curvature,
    #[serde(untagged)]
    Fixed(f64),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeometryConfig {
    pub ps_position: [f64; 3],
    pub user_area_x: [f64; 2],
    pub user_area_y: [f64; 2],
    pub ris_height: f64,
    pub central_ris_position: [f64; 3],
}

impl Default for GeometryConfig {
    fn default() -> Self {
        GeometryConfig {
            ps_position: [-50.0, 0.0, 10.0],
            user_area_x: [-20.0, 0.0],
            user_area_y: [-30.0, 30.0],
            ris_height: 2.0,
            central_ris_position: [0.0, 0.0, 10.0],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathLossConfig {
    pub g_ps_dbi: f64,
    pub g_u_dbi: f64,
    pub g_ris_dbi: f64,
    pub f_c_hz: f64,
    pub exponent: f64,
    /// Express gains relative to the direct-link path loss at the field
    /// center. Keeps effective channels at order one, which is the scale
    /// the transmit-SNR noise mapping assumes; absolute physical gains are
    /// `false`.
    pub normalize_gains: bool,
}

impl Default for PathLossConfig {
    fn default() -> Self {
        PathLossConfig {
            g_ps_dbi: 5.0,
            g_u_dbi: 0.0,
            g_ris_dbi: 5.0,
            f_c_hz: 915.0e6,
            exponent: 4.0,
            normalize_gains: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PowerConfig {
    /// Per-user transmit budget in watts.
    pub budget: f64,
    /// Whether the budget caps the whole vector or each symbol.
    pub norm: PowerNorm,
    pub tau_max: u32,
    /// Deep-fade floor for channel inversion.
    pub h_floor: f64,
    pub g_bound: GradBound,
}

impl Default for PowerConfig {
    fn default() -> Self {
        PowerConfig {
            budget: 1.0,
            norm: PowerNorm::Total,
            tau_max: 3,
            h_floor: 1e-6,
            g_bound: GradBound::Auto,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleConfig {
    pub beta_t: BetaSchedule,
    pub eta: EtaSchedule,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        ScheduleConfig { beta_t: BetaSchedule::Rounds, eta: EtaSchedule::Constant(0.01) }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScaConfig {
    /// Inner gradient iterations per round (J).
    pub iters: usize,
    pub step: ScaStep,
}

impl Default for ScaConfig {
    fn default() -> Self {
        ScaConfig { iters: 10, step: ScaStep::Auto }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PersonalConfig {
    pub lambda: f64,
    pub tau_v: u32,
    pub eta_v: f64,
}

impl Default for PersonalConfig {
    fn default() -> Self {
        PersonalConfig { lambda: 0.1, tau_v: 3, eta_v: 0.01 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub dims: usize,
    pub train_per_class: usize,
    pub test_per_class: usize,
    /// Expected distance between class means, against unit per-feature
    /// within-class noise.
    pub separation: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec { classes: 10, dims: 32, train_per_class: 400, test_per_class: 100, separation: 3.0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdxPaths {
    pub train_images: PathBuf,
    pub train_labels: PathBuf,
    pub test_images: PathBuf,
    pub test_labels: PathBuf,
    #[serde(default = "default_classes")]
    pub classes: usize,
}

fn default_classes() -> usize {
    10
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Synthetic(SyntheticSpec),
    Idx(IdxPaths),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub source: DataSource,
    pub dirichlet_gamma: f64,
    pub batch_size: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            source: DataSource::Synthetic(SyntheticSpec::default()),
            dirichlet_gamma: 0.5,
            batch_size: 64,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelSpec {
    Softmax,
    Mlp { hidden: usize, activation: Activation },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Fixed test subsample used for the per-round global accuracy column;
    /// 0 means the full test set every round. The final round always uses
    /// the full sets.
    pub global_subsample: usize,
    /// Cap on each user's personalized evaluation set per round.
    pub personal_cap: usize,
    /// Per-user sample size for the gradient-norm diagnostic.
    pub diag_subsample: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { global_subsample: 2048, personal_cap: 512, diag_subsample: 128 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceMode {
    None,
    /// Per-user scalars each round.
    Summary,
    /// Summary plus full pre/post state; enough to replay bit-exactly.
    Full,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub save_models: bool,
    pub trace_mode: TraceMode,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { save_models: true, trace_mode: TraceMode::Summary }
    }
}

/// Everything a run needs. See the module docs for the echo guarantee.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub mode: Mode,
    /// Global rounds (T).
    pub rounds: u64,
    /// Number of users (m).
    pub users: usize,
    /// Elements per personal surface (N).
    pub ris_elements: usize,
    pub geometry: GeometryConfig,
    pub path_loss: PathLossConfig,
    /// Transmit SNR in dB; noise variance is
    /// `mean power budget / 10^(snr_db/10)`.
    pub snr_db: f64,
    /// Force exactly zero receiver noise (overrides snr_db).
    pub noiseless: bool,
    /// CSI error variance as a fraction of the noise variance.
    pub csi_error_scale: f64,
    pub power: PowerConfig,
    pub schedule: ScheduleConfig,
    pub sca: ScaConfig,
    pub personal: PersonalConfig,
    pub data: DataConfig,
    pub model: ModelSpec,
    pub eval: EvalConfig,
    pub output: OutputConfig,
    /// Worker threads for per-user pipelines; 0 = all cores. Results are
    /// identical for any value.
    pub threads: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 1,
            mode: Mode::ProarPfed,
            rounds: 150,
            users: 10,
            ris_elements: 10,
            geometry: GeometryConfig::default(),
            path_loss: PathLossConfig::default(),
            snr_db: 20.0,
            noiseless: false,
            csi_error_scale: 0.1,
            power: PowerConfig::default(),
            schedule: ScheduleConfig::default(),
            sca: ScaConfig::default(),
            personal: PersonalConfig::default(),
            data: DataConfig::default(),
            model: ModelSpec::Mlp { hidden: 64, activation: Activation::Relu },
            eval: EvalConfig::default(),
            output: OutputConfig::default(),
            threads: 1,
        }
    }
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks every field and reports all problems at once.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.users == 0 {
            problems.push("users must be at least 1".to_string());
        }
        if self.ris_elements == 0 {
            problems.push("ris_elements must be at least 1".to_string());
        }
        if !(self.path_loss.f_c_hz > 0.0) {
            problems.push("path_loss.f_c_hz must be positive".to_string());
        }
        if self.path_loss.exponent < 2.0 {
            problems.push("path_loss.exponent must be at least 2".to_string());
        }
        if !(self.power.budget > 0.0) {
            problems.push("power.budget must be positive".to_string());
        }
        if self.power.tau_max == 0 {
            problems.push("power.tau_max must be at least 1".to_string());
        }
        if self.power.h_floor < 0.0 {
            problems.push("power.h_floor must be non-negative".to_string());
        }
        if let GradBound::Value(g) = self.power.g_bound {
            if !(g > 0.0) {
                problems.push("power.g_bound must be positive".to_string());
            }
        }
        if let BetaSchedule::Constant(b) = self.schedule.beta_t {
            if !(b > 0.0) {
                problems.push("schedule.beta_t must be positive".to_string());
            }
        }
        if let EtaSchedule::Constant(e) = self.schedule.eta {
            if !(e >= 0.0) {
                problems.push("schedule.eta must be non-negative".to_string());
            }
        }
        if self.sca.iters == 0 {
            problems.push("sca.iters must be at least 1".to_string());
        }
        if let ScaStep::Fixed(s) = self.sca.step {
            if !(s > 0.0) {
                problems.push("sca.step must be positive".to_string());
            }
        }
        if self.personal.lambda < 0.0 {
            problems.push("personal.lambda must be non-negative".to_string());
        }
        if self.personal.tau_v == 0 {
            problems.push("personal.tau_v must be at least 1".to_string());
        }
        if !(self.personal.eta_v > 0.0) {
            problems.push("personal.eta_v must be positive".to_string());
        }
        if !(self.data.dirichlet_gamma > 0.0) {
            problems.push("data.dirichlet_gamma must be positive".to_string());
        }
        if self.data.batch_size == 0 {
            problems.push("data.batch_size must be at least 1".to_string());
        }
        if let DataSource::Synthetic(spec) = &self.data.source {
            if spec.classes < 2 {
                problems.push("synthetic.classes must be at least 2".to_string());
            }
            if spec.dims == 0 {
                problems.push("synthetic.dims must be at least 1".to_string());
            }
            if spec.train_per_class == 0 {
                problems.push("synthetic.train_per_class must be at least 1".to_string());
            }
            if !(spec.separation > 0.0) {
                problems.push("synthetic.separation must be positive".to_string());
            }
        }
        if let DataSource::Idx(paths) = &self.data.source {
            for (label, p) in [
                ("train_images", &paths.train_images),
                ("train_labels", &paths.train_labels),
                ("test_images", &paths.test_images),
                ("test_labels", &paths.test_labels),
            ] {
                if !p.exists() {
                    problems.push(format!("data.{label}: {} does not exist", p.display()));
                }
            }
        }
        if let ModelSpec::Mlp { hidden, .. } = self.model {
            if hidden == 0 {
                problems.push("model.mlp.hidden must be at least 1".to_string());
            }
        }
        if !self.snr_db.is_finite() {
            problems.push("snr_db must be finite".to_string());
        }
        if self.csi_error_scale < 0.0 {
            problems.push("csi_error_scale must be non-negative".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }

    /// Noise standard deviation from the transmit SNR.
    pub fn sigma_c(&self) -> f64 {
        if self.noiseless {
            return 0.0;
        }
        match self.mode {
            Mode::IdealFedavg => 0.0,
            _ => (self.power.budget / 10f64.powf(self.snr_db / 10.0)).sqrt(),
        }
    }

    /// CSI error variance per complex sample.
    pub fn csi_error_var(&self) -> f64 {
        match self.mode {
            Mode::PerfectCsi | Mode::IdealFedavg => 0.0,
            _ => self.csi_error_scale * self.sigma_c().powi(2),
        }
    }

    pub fn beta_t(&self) -> f64 {
        match self.schedule.beta_t {
            BetaSchedule::Rounds => (self.rounds.max(1)) as f64,
            BetaSchedule::Constant(b) => b,
        }
    }

    pub fn eta(&self) -> f64 {
        match self.schedule.eta {
            EtaSchedule::InvRounds => 1.0 / (self.rounds.max(1)) as f64,
            EtaSchedule::Constant(e) => e,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        ExperimentConfig::default().validate().unwrap();
    }

    #[test]
    fn round_trips_through_json_identically() {
        let cfg = ExperimentConfig::default();
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
        let again = serde_json::to_string_pretty(&back).unwrap();
        assert_eq!(text, again);
    }

    #[test]
    fn unknown_keys_rejected() {
        let r: std::result::Result<ExperimentConfig, _> =
            serde_json::from_str(r#"{"seed": 1, "bogus_field": 3}"#);
        assert!(r.is_err());
    }

    #[test]
    fn preset_keywords_parse() {
        let cfg: ExperimentConfig = serde_json::from_str(
            r#"{"schedule": {"beta_t": "rounds", "eta": "inv_rounds"}, "rounds": 50}"#,
        )
        .unwrap();
        assert_eq!(cfg.beta_t(), 50.0);
        assert_eq!(cfg.eta(), 0.02);

        let cfg: ExperimentConfig =
            serde_json::from_str(r#"{"schedule": {"beta_t": 7.5, "eta": 0.1}}"#).unwrap();
        assert_eq!(cfg.beta_t(), 7.5);
        assert_eq!(cfg.eta(), 0.1);
    }

    #[test]
    fn validation_reports_all_problems() {
        let mut cfg = ExperimentConfig::default();
        cfg.users = 0;
        cfg.power.budget = -1.0;
        cfg.data.batch_size = 0;
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("users"));
        assert!(err.contains("budget"));
        assert!(err.contains("batch_size"));
    }

    #[test]
    fn snr_mapping() {
        let mut cfg = ExperimentConfig::default();
        cfg.power.budget = 1.0;
        cfg.snr_db = 20.0;
        assert!((cfg.sigma_c() - 0.1).abs() < 1e-12);
        assert!((cfg.csi_error_var() - 0.001).abs() < 1e-15);
        cfg.mode = Mode::PerfectCsi;
        assert_eq!(cfg.csi_error_var(), 0.0);
        cfg.mode = Mode::IdealFedavg;
        assert_eq!(cfg.sigma_c(), 0.0);
    }
}
