//! Per-round traces: always enough scalars to audit a round, and in full
//! mode enough state to replay it bit-exactly.

use crate::error::{Error, Result};
use crate::harness::config::ExperimentConfig;
use crate::harness::output::digest_f64s;
use crate::protocol::experiment::{Engine, GlobalState};
use crate::ris::PhaseConfig;
use crate::Cx;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// One user's scalars for one round.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UserRoundRecord {
    pub user: usize,
    /// Why the user sat the round out, if it did.
    pub skip: Option<String>,
    pub tau: u32,
    pub beta_i: Cx,
    pub tx_power: f64,
    pub backstop_scale: f64,
    /// True direct-link gain.
    pub h_ub: Cx,
    /// True overall gain with the designed phases.
    pub eff_true: Cx,
    /// Estimated overall gain the device acted on.
    pub eff_est: Cx,
    /// Phase-design objective before/after the round's iterations.
    pub sca_initial: f64,
    pub sca_final: f64,
    /// Whether the estimated gain reached the power-control level.
    pub target_feasible: bool,
}

impl UserRoundRecord {
    pub fn empty(user: usize) -> Self {
        UserRoundRecord {
            user,
            skip: None,
            tau: 0,
            beta_i: Cx::new(0.0, 0.0),
            tx_power: 0.0,
            backstop_scale: 1.0,
            h_ub: Cx::new(0.0, 0.0),
            eff_true: Cx::new(0.0, 0.0),
            eff_est: Cx::new(0.0, 0.0),
            sca_initial: 0.0,
            sca_final: 0.0,
            target_feasible: false,
        }
    }
}

/// Pre-round state captured for full traces.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FullState {
    pub w_pre: Vec<f64>,
    pub v_pre: Vec<Vec<f64>>,
    pub phases_pre: Vec<Vec<f64>>,
}

impl FullState {
    pub fn capture(state: &GlobalState) -> Self {
        FullState {
            w_pre: state.w.values.clone(),
            v_pre: state.personal.iter().map(|p| p.v.values.clone()).collect(),
            phases_pre: state.phases.iter().map(|p| p.angles().to_vec()).collect(),
        }
    }

    pub fn into_full_trace(self, engine: &Engine, post: &GlobalState) -> FullTrace {
        FullTrace {
            config: engine.cfg.clone(),
            pre: self,
            post_w: post.w.values.clone(),
        }
    }
}

/// Everything a bit-exact replay needs, embedded in the trace file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FullTrace {
    pub config: ExperimentConfig,
    pub pre: FullState,
    pub post_w: Vec<f64>,
}

/// One round's audit record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RoundTrace {
    pub round: u64,
    pub users: Vec<UserRoundRecord>,
    pub all_skipped: bool,
    pub skipped: usize,
    pub mean_tau: f64,
    pub max_tx_power: f64,
    pub agg_mse: f64,
    pub imag_residual: f64,
    pub personal_grad_norm_mean: f64,
    pub post_w_digest: u64,
    /// Present only in full trace mode.
    pub full: Option<Box<FullTrace>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReplayReport {
    pub round: u64,
    pub matched: bool,
    pub expected_digest: u64,
    pub replayed_digest: u64,
}

/// Re-execute a full-trace round from its stored pre-state and compare the
/// post-round global model bit for bit.
pub fn replay_trace(path: &Path) -> Result<ReplayReport> {
    let text = std::fs::read_to_string(path)?;
    let trace: RoundTrace = serde_json::from_str(&text)?;
    let full = trace.full.as_ref().ok_or_else(|| {
        Error::Config(format!(
            "{}: trace has no full state; record it with trace_mode = \"full\"",
            path.display()
        ))
    })?;

    let engine = Engine::new(full.config.clone())?;
    let mut state = state_from_trace(&engine, &trace, full);
    engine.run_round(&mut state)?;

    let replayed_digest = digest_f64s(&state.w.values);
    let matched = state.w.values == full.post_w && replayed_digest == trace.post_w_digest;
    Ok(ReplayReport {
        round: trace.round,
        matched,
        expected_digest: trace.post_w_digest,
        replayed_digest,
    })
}

fn state_from_trace(engine: &Engine, trace: &RoundTrace, full: &FullTrace) -> GlobalState {
    let mut state = engine.initial_state();
    state.round = trace.round;
    state.w.values = full.pre.w_pre.clone();
    for (p, v) in state.personal.iter_mut().zip(&full.pre.v_pre) {
        p.v.values = v.clone();
    }
    state.phases =
        full.pre.phases_pre.iter().map(|a| PhaseConfig::from_angles(a.clone())).collect();
    state
}
