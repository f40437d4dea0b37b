//! Experiment setup and the per-round state machine.
//!
//! A round runs in the published order: channel draw and per-user CSI
//! estimation, surface phase design against the estimate, broadcast, local
//! step selection under the power budget, local SGD and transmit encoding,
//! personalized steps against the broadcast model, then analog aggregation
//! and the global update. True gains (with the designed phases) act on the
//! air; estimated gains drive every device-side decision.

use crate::channel::{effective_gain, estimate_csi, ChannelSim, CsiEstimate, Geometry, LinkGains, PathLossParams};
use crate::error::{Error, Result};
use crate::fl::data::{shard_weights, Dataset};
use crate::fl::model::{evaluate, loss_grad, Architecture, ModelParams};
use crate::fl::partition::{dirichlet_proportions, partition_by_proportions};
use crate::fl::train::{local_sgd, personal_grad_norm, personalized_steps, PersonalState};
use crate::harness::config::{
    DataSource, ExperimentConfig, GradBound, Mode, ModelSpec, ScaStep, TraceMode,
};
use crate::harness::idx::load_idx_dataset;
use crate::harness::output::{digest_f64s, MetricsRow, RunDir};
use crate::harness::synth::synthesize_dataset;
use crate::power::{encode_transmit, power_factor, select_local_steps};
use crate::protocol::round::superimpose;
use crate::protocol::trace::{FullState, RoundTrace, UserRoundRecord};
use crate::ris::{phase_target, power_target_level, PhaseConfig, SurrogateProblem};
use crate::seed::{SeedTree, StreamPurpose, NO_USER};
use crate::Cx;
use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

// Setup-stream tags.
const TAG_DATA: u64 = 1;
const TAG_GEOMETRY: u64 = 2;
const TAG_PARTITION: u64 = 3;
const TAG_INIT: u64 = 4;
const TAG_GCAL: u64 = 5;
const TAG_EVAL: u64 = 6;

/// Mutable cross-round state.
#[derive(Debug, Clone)]
pub struct GlobalState {
    pub w: ModelParams,
    pub personal: Vec<PersonalState>,
    /// Warm-start phases: one vector per user, or a single shared vector in
    /// central-surface mode, or empty without surfaces.
    pub phases: Vec<PhaseConfig>,
    pub round: u64,
}

/// Fully resolved experiment, ready to run rounds.
pub struct Engine {
    pub cfg: ExperimentConfig,
    pub seeds: SeedTree,
    pub arch: Architecture,
    pub train: Dataset,
    pub test: Dataset,
    pub shards: Vec<Vec<usize>>,
    pub test_shards: Vec<Vec<usize>>,
    pub alphas: Vec<f64>,
    channel: Option<ChannelSim>,
    sigma_c: f64,
    csi_err_var: f64,
    pub g_bound: f64,
    beta_t: f64,
    eta: f64,
    eval_global_idx: Vec<usize>,
}

/// Per-user outcome of the parallel section of a round.
struct UserOutcome {
    record: UserRoundRecord,
    signal: Option<Vec<Cx>>,
    delta: Option<Vec<f64>>,
    tau: u32,
    personal: PersonalState,
    phases: Option<PhaseConfig>,
    personal_grad_norm: f64,
}

/// Everything a finished run hands back.
pub struct RunOutput {
    pub metrics: Vec<MetricsRow>,
    pub summary: RunSummary,
    pub final_state: GlobalState,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub run_id: String,
    pub mode: String,
    pub rounds: u64,
    pub g_bound: f64,
    pub beta_t: f64,
    pub eta: f64,
    pub sigma_c: f64,
    pub csi_error_var: f64,
    /// Final-round metrics on the full test sets.
    pub final_global_loss: f64,
    pub final_global_acc: f64,
    pub final_personal_acc_mean: f64,
    pub final_personal_acc_std: f64,
    pub final_personal_accs: Vec<f64>,
    pub total_skipped: u64,
    pub rounds_all_skipped: u64,
}

impl Engine {
    pub fn new(cfg: ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let seeds = SeedTree::new(cfg.seed);

        let (train, test) = load_data(&cfg, &seeds)?;
        let arch = match cfg.model {
            ModelSpec::Softmax => {
                Architecture::Softmax { input: train.feature_dim(), classes: train.classes }
            }
            ModelSpec::Mlp { hidden, activation } => Architecture::Mlp {
                input: train.feature_dim(),
                hidden,
                classes: train.classes,
                activation,
            },
        };

        let (shards, test_shards) = partition_data(&cfg, &train, &test, &seeds)?;
        let alphas = shard_weights(&shards);

        let channel = match cfg.mode {
            Mode::IdealFedavg => None,
            _ => Some(build_channel(&cfg, &seeds)?),
        };

        let sigma_c = cfg.sigma_c();
        let csi_err_var = cfg.csi_error_var();
        let beta_t = cfg.beta_t();
        let eta = cfg.eta();

        let w0 = ModelParams::init(arch, &mut seeds.setup_stream(TAG_INIT));
        let g_bound = match cfg.power.g_bound {
            GradBound::Value(g) => g,
            GradBound::Auto => calibrate_g_bound(&cfg, &train, &shards, &w0, &seeds)?,
        };

        let eval_global_idx = {
            let n = test.len();
            let k = cfg.eval.global_subsample;
            if k == 0 || k >= n {
                (0..n).collect()
            } else {
                let mut rng = seeds.setup_stream(TAG_EVAL);
                let mut idx: Vec<usize> = sample_indices(&mut rng, n, k).into_vec();
                idx.sort_unstable();
                idx
            }
        };

        Ok(Engine {
            cfg,
            seeds,
            arch,
            train,
            test,
            shards,
            test_shards,
            alphas,
            channel,
            sigma_c,
            csi_err_var,
            g_bound,
            beta_t,
            eta,
            eval_global_idx,
        })
    }

    pub fn sigma_c(&self) -> f64 {
        self.sigma_c
    }

    pub fn beta_t(&self) -> f64 {
        self.beta_t
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn initial_state(&self) -> GlobalState {
        let w = ModelParams::init(self.arch, &mut self.seeds.setup_stream(TAG_INIT));
        let personal: Vec<PersonalState> = (0..self.cfg.users)
            .map(|_| PersonalState {
                v: w.clone(),
                eta_v: self.cfg.personal.eta_v,
                lambda: self.cfg.personal.lambda,
                tau_v: self.cfg.personal.tau_v,
            })
            .collect();
        let phases = match self.cfg.mode {
            Mode::ProarPfed | Mode::PerfectCsi => {
                vec![PhaseConfig::zeros(self.cfg.ris_elements); self.cfg.users]
            }
            Mode::CentralRis => {
                vec![PhaseConfig::zeros(self.cfg.ris_elements * self.cfg.users)]
            }
            Mode::NoRis | Mode::IdealFedavg => Vec::new(),
        };
        GlobalState { w, personal, phases, round: 0 }
    }

    /// Execute one round in place; returns the round's trace.
    pub fn run_round(&self, state: &mut GlobalState) -> Result<RoundTrace> {
        let t = state.round;
        let w_broadcast = state.w.clone();
        let m = self.cfg.users;

        // Channel realization and device-side estimates.
        let (gains, estimates): (Vec<LinkGains>, Vec<CsiEstimate>) = match self.cfg.mode {
            Mode::IdealFedavg => (Vec::new(), Vec::new()),
            Mode::CentralRis => {
                let sim = self.channel.as_ref().expect("channel");
                let gains = sim.sample_round_central(
                    self.cfg.geometry.central_ris_position,
                    self.cfg.ris_elements * m,
                    t,
                    &self.seeds,
                )?;
                let estimates = self.estimate_all(&gains, t)?;
                (gains, estimates)
            }
            _ => {
                let sim = self.channel.as_ref().expect("channel");
                let gains = sim.sample_round(t, &self.seeds);
                let estimates = self.estimate_all(&gains, t)?;
                (gains, estimates)
            }
        };

        // Central-surface phase design is shared and sequential: the
        // round-robin user of the round drives it.
        let mut shared_phase_record: Option<(usize, f64, f64)> = None;
        if self.cfg.mode == Mode::CentralRis {
            let selected = (t % m as u64) as usize;
            let est = &estimates[selected];
            let target = phase_target(
                self.eta,
                self.beta_t,
                self.alphas[selected],
                self.g_bound,
                self.cfg.power.budget,
                est.h_ub,
            );
            let step = self.resolve_sca_step(&est.cascaded, target);
            let prob = SurrogateProblem::new(est.cascaded.clone(), target, step);
            let before = prob.objective(&state.phases[0]);
            state.phases[0] = prob.optimize(&state.phases[0], self.cfg.sca.iters)?;
            let after = prob.objective(&state.phases[0]);
            shared_phase_record = Some((selected, before, after));
        }

        let shared_phases = match self.cfg.mode {
            Mode::CentralRis => state.phases.first().cloned(),
            _ => None,
        };
        let outcomes: Vec<UserOutcome> = (0..m)
            .into_par_iter()
            .map(|i| {
                self.run_user(
                    i,
                    t,
                    &w_broadcast,
                    state,
                    &gains,
                    &estimates,
                    shared_phases.as_ref(),
                )
            })
            .collect::<Result<Vec<_>>>()?;

        // Fold per-user results back into the state sequentially.
        let mut signals = Vec::with_capacity(m);
        let mut true_gains = Vec::with_capacity(m);
        let mut ideal_update = vec![0.0; state.w.dim()];
        let mut records = Vec::with_capacity(m);
        let mut skipped = 0usize;
        let mut tau_sum = 0u64;
        let mut participants = 0usize;
        let mut max_tx_power: f64 = 0.0;
        let mut grad_norm_sum = 0.0;
        for (i, outcome) in outcomes.into_iter().enumerate() {
            state.personal[i] = outcome.personal;
            if let Some(phases) = outcome.phases {
                state.phases[i] = phases;
            }
            if let Some(delta) = &outcome.delta {
                for (acc, &d) in ideal_update.iter_mut().zip(delta) {
                    *acc += self.alphas[i] / outcome.tau as f64 * d;
                }
                participants += 1;
                tau_sum += outcome.tau as u64;
            } else {
                skipped += 1;
            }
            max_tx_power = max_tx_power.max(outcome.record.tx_power);
            grad_norm_sum += outcome.personal_grad_norm;
            true_gains.push(outcome.record.eff_true);
            signals.push(outcome.signal);
            records.push(outcome.record);
        }

        // Aggregation barrier.
        let all_skipped = participants == 0;
        let (agg_mse, imag_residual) = if self.cfg.mode == Mode::IdealFedavg {
            for (wv, &u) in state.w.values.iter_mut().zip(&ideal_update) {
                *wv += u;
            }
            (0.0, 0.0)
        } else if all_skipped {
            // Nothing was transmitted; the server applies no update.
            (0.0, 0.0)
        } else {
            let mut noise_rng = self.seeds.stream(t, NO_USER, StreamPurpose::RxNoise);
            let result = superimpose(
                &signals,
                &true_gains,
                self.sigma_c,
                self.beta_t,
                state.w.dim(),
                &mut noise_rng,
            );
            let mut mse = 0.0;
            for k in 0..state.w.dim() {
                let err = result.update[k] - ideal_update[k];
                mse += err * err;
                state.w.values[k] += result.update[k];
            }
            (mse, result.imag_residual)
        };
        state.w.check_finite()?;

        if let Some((selected, before, after)) = shared_phase_record {
            if let Some(rec) = records.get_mut(selected) {
                rec.sca_initial = before;
                rec.sca_final = after;
            }
        }

        state.round = t + 1;
        Ok(RoundTrace {
            round: t,
            users: records,
            all_skipped,
            skipped,
            mean_tau: if participants > 0 { tau_sum as f64 / participants as f64 } else { 0.0 },
            max_tx_power,
            agg_mse,
            imag_residual,
            personal_grad_norm_mean: grad_norm_sum / m as f64,
            post_w_digest: digest_f64s(&state.w.values),
            full: None,
        })
    }

    fn estimate_all(&self, gains: &[LinkGains], t: u64) -> Result<Vec<CsiEstimate>> {
        gains
            .iter()
            .enumerate()
            .map(|(i, g)| {
                let mut rng = self.seeds.stream(t, i as u64, StreamPurpose::CsiError);
                estimate_csi(g, self.csi_err_var, &mut rng)
            })
            .collect()
    }

    fn resolve_sca_step(&self, g_hat: &[Cx], target: Cx) -> f64 {
        match self.cfg.sca.step {
            ScaStep::Fixed(s) => s,
            ScaStep::Curvature => SurrogateProblem::curvature_step(g_hat).max(1e-300),
            ScaStep::Auto => SurrogateProblem::descent_safe_step(g_hat, target),
        }
    }

    /// The per-user pipeline: phase design, step selection, local training,
    /// encoding, personalization, diagnostics.
    #[allow(clippy::too_many_arguments)]
    fn run_user(
        &self,
        i: usize,
        t: u64,
        w_broadcast: &ModelParams,
        state: &GlobalState,
        gains: &[LinkGains],
        estimates: &[CsiEstimate],
        shared_phases: Option<&PhaseConfig>,
    ) -> Result<UserOutcome> {
        let mut record = UserRoundRecord::empty(i);
        let mut new_phases = None;

        // Personalization always runs; it only needs the broadcast model.
        let mut personal = state.personal[i].clone();
        personalized_steps(
            &mut personal,
            w_broadcast,
            &self.train,
            &self.shards[i],
            self.cfg.data.batch_size,
            &mut self.seeds.stream(t, i as u64, StreamPurpose::PersonalBatch),
        )?;
        let diag = self.diag_indices(i, t);
        let grad_norm =
            personal_grad_norm(&personal.v, w_broadcast, personal.lambda, &self.train, &diag)?;

        if self.cfg.mode == Mode::IdealFedavg {
            let tau = self.cfg.power.tau_max;
            let (_, delta) = local_sgd(
                w_broadcast,
                &self.train,
                &self.shards[i],
                tau,
                self.eta,
                self.cfg.data.batch_size,
                &mut self.seeds.stream(t, i as u64, StreamPurpose::LocalBatch),
            )?;
            record.tau = tau;
            record.eff_true = Cx::new(1.0, 0.0);
            record.eff_est = Cx::new(1.0, 0.0);
            return Ok(UserOutcome {
                record,
                signal: None,
                delta: Some(delta),
                tau,
                personal,
                phases: None,
                personal_grad_norm: grad_norm,
            });
        }

        let truth = &gains[i];
        let est = &estimates[i];
        record.h_ub = truth.h_ub;

        // Surface phase design against the estimate.
        let (eff_true, eff_est) = match self.cfg.mode {
            Mode::NoRis => (truth.h_ub, est.h_ub),
            Mode::CentralRis => {
                let theta = shared_phases.expect("central mode keeps one shared phase vector");
                (
                    effective_gain(truth.h_ub, &truth.cascaded, theta)?,
                    effective_gain(est.h_ub, &est.cascaded, theta)?,
                )
            }
            _ => {
                let target = phase_target(
                    self.eta,
                    self.beta_t,
                    self.alphas[i],
                    self.g_bound,
                    self.cfg.power.budget,
                    est.h_ub,
                );
                let step = self.resolve_sca_step(&est.cascaded, target);
                let prob = SurrogateProblem::new(est.cascaded.clone(), target, step);
                record.sca_initial = prob.objective(&state.phases[i]);
                let phases = prob.optimize(&state.phases[i], self.cfg.sca.iters)?;
                record.sca_final = prob.objective(&phases);
                let pair = (
                    effective_gain(truth.h_ub, &truth.cascaded, &phases)?,
                    effective_gain(est.h_ub, &est.cascaded, &phases)?,
                );
                new_phases = Some(phases);
                pair
            }
        };
        record.eff_true = eff_true;
        record.eff_est = eff_est;
        record.target_feasible = eff_est.re
            >= power_target_level(
                self.eta,
                self.beta_t,
                self.alphas[i],
                self.g_bound,
                self.cfg.power.budget,
            );

        // Power control; a deep fade or an infeasible budget skips the user.
        let tau = match select_local_steps(
            self.cfg.power.budget,
            self.beta_t,
            self.alphas[i],
            eff_est,
            self.eta,
            self.g_bound,
            self.cfg.power.tau_max,
            self.cfg.power.h_floor,
        ) {
            Ok(tau) => tau,
            Err(e) if e.is_round_skip() => {
                record.skip = Some(e.to_string());
                return Ok(UserOutcome {
                    record,
                    signal: None,
                    delta: None,
                    tau: 0,
                    personal,
                    phases: new_phases,
                    personal_grad_norm: grad_norm,
                });
            }
            Err(e) => return Err(e),
        };
        record.tau = tau;

        let (_, delta) = local_sgd(
            w_broadcast,
            &self.train,
            &self.shards[i],
            tau,
            self.eta,
            self.cfg.data.batch_size,
            &mut self.seeds.stream(t, i as u64, StreamPurpose::LocalBatch),
        )?;
        let beta_i =
            power_factor(self.beta_t, self.alphas[i], tau, eff_est, self.cfg.power.h_floor)?;
        record.beta_i = beta_i;
        let signal = encode_transmit(&delta, beta_i, self.cfg.power.budget, self.cfg.power.norm);
        record.tx_power = signal.power;
        record.backstop_scale = signal.scale;

        Ok(UserOutcome {
            record,
            signal: Some(signal.symbols),
            delta: Some(delta),
            tau,
            personal,
            phases: new_phases,
            personal_grad_norm: grad_norm,
        })
    }

    fn diag_indices(&self, i: usize, t: u64) -> Vec<usize> {
        let shard = &self.shards[i];
        let k = self.cfg.eval.diag_subsample.min(shard.len()).max(1);
        if k >= shard.len() {
            return shard.clone();
        }
        let mut rng = self.seeds.stream(t, i as u64, StreamPurpose::Diagnostics);
        sample_indices(&mut rng, shard.len(), k).into_iter().map(|j| shard[j]).collect()
    }

    /// Global-model metrics on the fixed evaluation subsample.
    fn eval_global(&self, w: &ModelParams) -> Result<(f64, f64)> {
        let (x, y) = self.test.gather(&self.eval_global_idx);
        evaluate(w, x.view(), &y)
    }

    /// Personalized metrics per user on (capped) matching test shards.
    fn eval_personal(&self, state: &GlobalState, cap: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut accs = Vec::with_capacity(self.cfg.users);
        let mut losses = Vec::with_capacity(self.cfg.users);
        for i in 0..self.cfg.users {
            let shard = &self.test_shards[i];
            let idx: Vec<usize> = if cap > 0 && shard.len() > cap {
                shard[..cap].to_vec()
            } else {
                shard.clone()
            };
            let (x, y) = self.test.gather(&idx);
            let (loss, acc) = evaluate(&state.personal[i].v, x.view(), &y)?;
            accs.push(acc);
            losses.push(loss);
        }
        Ok((accs, losses))
    }

    fn metrics_row(&self, trace: &RoundTrace, state: &GlobalState) -> Result<MetricsRow> {
        let (global_loss, global_acc) = self.eval_global(&state.w)?;
        let (accs, losses) = self.eval_personal(state, self.cfg.eval.personal_cap)?;
        let (acc_mean, acc_std) = mean_std(&accs);
        let loss_mean = losses.iter().sum::<f64>() / losses.len() as f64;
        Ok(MetricsRow {
            round: trace.round,
            global_loss,
            global_acc,
            personal_acc_mean: acc_mean,
            personal_acc_std: acc_std,
            personal_loss_mean: loss_mean,
            personal_grad_norm_mean: trace.personal_grad_norm_mean,
            agg_mse: trace.agg_mse,
            imag_residual: trace.imag_residual,
            skipped_users: trace.skipped,
            mean_tau: trace.mean_tau,
            max_tx_power: trace.max_tx_power,
            beta_t: self.beta_t,
        })
    }

    /// Run all rounds, optionally writing outputs as they are produced.
    pub fn run(&self, run_dir: Option<&RunDir>) -> Result<RunOutput> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.cfg.threads)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        pool.install(|| self.run_inner(run_dir))
    }

    fn run_inner(&self, run_dir: Option<&RunDir>) -> Result<RunOutput> {
        let mut state = self.initial_state();
        let mut metrics = Vec::new();
        let mut total_skipped = 0u64;
        let mut rounds_all_skipped = 0u64;
        for _ in 0..self.cfg.rounds {
            let pre = match self.cfg.output.trace_mode {
                TraceMode::Full => Some(FullState::capture(&state)),
                _ => None,
            };
            let mut trace = self.run_round(&mut state)?;
            total_skipped += trace.skipped as u64;
            rounds_all_skipped += trace.all_skipped as u64;
            metrics.push(self.metrics_row(&trace, &state)?);
            if let Some(dir) = run_dir {
                match self.cfg.output.trace_mode {
                    TraceMode::None => {}
                    TraceMode::Summary => {
                        dir.write_trace(trace.round, &serde_json::to_string(&trace)?)?;
                    }
                    TraceMode::Full => {
                        trace.full = Some(Box::new(
                            pre.expect("captured above").into_full_trace(self, &state),
                        ));
                        dir.write_trace(trace.round, &serde_json::to_string(&trace)?)?;
                    }
                }
            }
        }

        // Final metrics on the full test sets.
        let (x, y) = self.test.gather(&(0..self.test.len()).collect::<Vec<_>>());
        let (final_global_loss, final_global_acc) = evaluate(&state.w, x.view(), &y)?;
        let (final_accs, _) = self.eval_personal(&state, 0)?;
        let (fp_mean, fp_std) = mean_std(&final_accs);

        let summary = RunSummary {
            run_id: crate::harness::output::run_id(&self.cfg),
            mode: self.cfg.mode.as_str().to_string(),
            rounds: self.cfg.rounds,
            g_bound: self.g_bound,
            beta_t: self.beta_t,
            eta: self.eta,
            sigma_c: self.sigma_c,
            csi_error_var: self.csi_err_var,
            final_global_loss,
            final_global_acc,
            final_personal_acc_mean: fp_mean,
            final_personal_acc_std: fp_std,
            final_personal_accs: final_accs,
            total_skipped,
            rounds_all_skipped,
        };

        if let Some(dir) = run_dir {
            dir.write_metrics(&metrics)?;
            dir.write_summary(&summary)?;
            if self.cfg.output.save_models {
                let dump = ModelDump {
                    version: 1,
                    arch: self.arch,
                    global: state.w.values.clone(),
                    personal: state.personal.iter().map(|p| p.v.values.clone()).collect(),
                };
                dir.write_models(&dump)?;
            }
        }

        Ok(RunOutput { metrics, summary, final_state: state })
    }
}

/// Versioned final-model dump.
#[derive(Debug, Serialize, Deserialize)]
pub struct ModelDump {
    pub version: u32,
    pub arch: Architecture,
    pub global: Vec<f64>,
    pub personal: Vec<Vec<f64>>,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn load_data(cfg: &ExperimentConfig, seeds: &SeedTree) -> Result<(Dataset, Dataset)> {
    match &cfg.data.source {
        DataSource::Synthetic(spec) => {
            let mut rng = seeds.setup_stream(TAG_DATA);
            let train = synthesize_dataset(
                spec.classes,
                spec.dims,
                spec.train_per_class,
                spec.separation,
                &mut rng,
            )?;
            let test = split_off_test(&train, spec, &mut rng)?;
            Ok((train, test))
        }
        DataSource::Idx(paths) => {
            let train = load_idx_dataset(&paths.train_images, &paths.train_labels, paths.classes)?;
            let test = load_idx_dataset(&paths.test_images, &paths.test_labels, paths.classes)?;
            if train.feature_dim() != test.feature_dim() {
                return Err(Error::Config("train/test feature widths differ".into()));
            }
            Ok((train, test))
        }
    }
}

/// Synthetic test set: fresh points around the train blobs' empirical
/// class means.
fn split_off_test(
    train: &Dataset,
    spec: &crate::harness::config::SyntheticSpec,
    rng: &mut impl Rng,
) -> Result<Dataset> {
    use rand_distr::StandardNormal;
    let dims = spec.dims;
    let mut means = vec![vec![0.0; dims]; spec.classes];
    let mut counts = vec![0usize; spec.classes];
    for (row, &label) in train.features.rows().into_iter().zip(&train.labels) {
        counts[label] += 1;
        for (j, &v) in row.iter().enumerate() {
            means[label][j] += v;
        }
    }
    for c in 0..spec.classes {
        for j in 0..dims {
            means[c][j] /= counts[c].max(1) as f64;
        }
    }
    let n = spec.classes * spec.test_per_class;
    let mut features = ndarray::Array2::zeros((n, dims));
    let mut labels = Vec::with_capacity(n);
    for c in 0..spec.classes {
        for k in 0..spec.test_per_class {
            let row = c * spec.test_per_class + k;
            for j in 0..dims {
                features[[row, j]] = means[c][j] + rng.sample::<f64, _>(StandardNormal);
            }
            labels.push(c);
        }
    }
    Dataset::new(features, labels, spec.classes)
}

/// Draw the class proportions once and partition train and test with them,
/// redrawing if any user ends up without train or test data.
fn partition_data(
    cfg: &ExperimentConfig,
    train: &Dataset,
    test: &Dataset,
    seeds: &SeedTree,
) -> Result<(Vec<Vec<usize>>, Vec<Vec<usize>>)> {
    if train.len() < cfg.users {
        return Err(Error::Config(format!(
            "{} train examples cannot cover {} users",
            train.len(),
            cfg.users
        )));
    }
    let mut rng = seeds.setup_stream(TAG_PARTITION);
    const MAX_TRIES: usize = 1000;
    for _ in 0..MAX_TRIES {
        let props =
            dirichlet_proportions(train.classes, cfg.data.dirichlet_gamma, cfg.users, &mut rng)?;
        let mut shards = partition_by_proportions(&train.labels, train.classes, &props, &mut rng)?;
        let mut test_shards =
            partition_by_proportions(&test.labels, test.classes, &props, &mut rng)?;
        if shards.iter().all(|s| !s.is_empty()) && test_shards.iter().all(|s| !s.is_empty()) {
            // Shards come out class-blocked; shuffle so that capped
            // evaluation prefixes are unbiased samples of the shard.
            use rand::seq::SliceRandom;
            for s in shards.iter_mut().chain(test_shards.iter_mut()) {
                s.shuffle(&mut rng);
            }
            return Ok((shards, test_shards));
        }
    }
    Err(Error::Config("could not draw a partition giving every user data".into()))
}

fn build_channel(cfg: &ExperimentConfig, seeds: &SeedTree) -> Result<ChannelSim> {
    let params = PathLossParams {
        g_ps_dbi: cfg.path_loss.g_ps_dbi,
        g_u_dbi: cfg.path_loss.g_u_dbi,
        g_ris_dbi: cfg.path_loss.g_ris_dbi,
        f_c_hz: cfg.path_loss.f_c_hz,
        pl_exponent: cfg.path_loss.exponent,
        n_elements: cfg.ris_elements,
    };
    let mut rng = seeds.setup_stream(TAG_GEOMETRY);
    let geometry = Geometry::sample(
        cfg.geometry.ps_position,
        cfg.geometry.user_area_x,
        cfg.geometry.user_area_y,
        cfg.geometry.ris_height,
        cfg.users,
        &mut rng,
    )?;
    let gain_scale = if cfg.path_loss.normalize_gains {
        let center = [
            0.5 * (cfg.geometry.user_area_x[0] + cfg.geometry.user_area_x[1]),
            0.5 * (cfg.geometry.user_area_y[0] + cfg.geometry.user_area_y[1]),
            0.0,
        ];
        let d_ref: f64 = (0..3)
            .map(|k| (center[k] - cfg.geometry.ps_position[k]).powi(2))
            .sum::<f64>()
            .sqrt();
        let reference = crate::channel::path_loss_direct(d_ref, &params)?;
        1.0 / reference.sqrt()
    } else {
        1.0
    };
    ChannelSim::new(geometry, params, gain_scale)
}

/// Twice the largest stochastic-gradient norm seen in a 100-step dry run at
/// the initial model, cycling through the users' shards.
fn calibrate_g_bound(
    cfg: &ExperimentConfig,
    train: &Dataset,
    shards: &[Vec<usize>],
    w0: &ModelParams,
    seeds: &SeedTree,
) -> Result<f64> {
    let mut rng = seeds.setup_stream(TAG_GCAL);
    let mut max_norm: f64 = 0.0;
    for step in 0..100 {
        let shard = &shards[step % shards.len()];
        let batch: Vec<usize> = (0..cfg.data.batch_size.min(shard.len()))
            .map(|_| shard[rng.random_range(0..shard.len())])
            .collect();
        let (x, y) = train.gather(&batch);
        let (_, grad) = loss_grad(w0, x.view(), &y)?;
        max_norm = max_norm.max(grad.iter().map(|g| g * g).sum::<f64>().sqrt());
    }
    Ok((2.0 * max_norm).max(1e-9))
}
