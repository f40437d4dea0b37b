//! Local SGD for the global task and the regularized personalized update.

use crate::error::Result;
use crate::fl::data::Dataset;
use crate::fl::model::{loss_grad, ModelParams};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Draw a with-replacement mini-batch of indices from a shard.
fn sample_batch(shard: &[usize], batch_size: usize, rng: &mut impl Rng) -> Vec<usize> {
    let take = batch_size.min(shard.len()).max(1);
    (0..take).map(|_| shard[rng.random_range(0..shard.len())]).collect()
}

/// Run `tau` sequential mini-batch SGD steps from `w0` on the user's shard.
/// Returns the final parameters and the update `w_tau - w0`.
pub fn local_sgd(
    w0: &ModelParams,
    data: &Dataset,
    shard: &[usize],
    tau: u32,
    eta: f64,
    batch_size: usize,
    rng: &mut impl Rng,
) -> Result<(ModelParams, Vec<f64>)> {
    let mut w = w0.clone();
    for _ in 0..tau {
        let batch = sample_batch(shard, batch_size, rng);
        let (x, y) = data.gather(&batch);
        let (_, grad) = loss_grad(&w, x.view(), &y)?;
        for (wv, g) in w.values.iter_mut().zip(&grad) {
            *wv -= eta * g;
        }
    }
    let delta: Vec<f64> = w.values.iter().zip(&w0.values).map(|(a, b)| a - b).collect();
    Ok((w, delta))
}

/// Per-user personalized model and its update hyperparameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PersonalState {
    pub v: ModelParams,
    pub eta_v: f64,
    pub lambda: f64,
    pub tau_v: u32,
}

/// One proximal SGD step `v <- v - eta_v (grad + lambda (v - w_ref))`,
/// shared by the personalized update and its tests.
pub fn regularized_step(v: &mut [f64], grad: &[f64], w_ref: &[f64], eta_v: f64, lambda: f64) {
    for k in 0..v.len() {
        v[k] -= eta_v * (grad[k] + lambda * (v[k] - w_ref[k]));
    }
}

/// Run `tau_v` personalized steps against the fixed global reference `w_t`.
pub fn personalized_steps(
    state: &mut PersonalState,
    w_t: &ModelParams,
    data: &Dataset,
    shard: &[usize],
    batch_size: usize,
    rng: &mut impl Rng,
) -> Result<()> {
    for _ in 0..state.tau_v {
        let batch = sample_batch(shard, batch_size, rng);
        let (x, y) = data.gather(&batch);
        let (_, grad) = loss_grad(&state.v, x.view(), &y)?;
        regularized_step(&mut state.v.values, &grad, &w_t.values, state.eta_v, state.lambda);
    }
    Ok(())
}

/// Squared norm of the regularized personal objective's gradient,
/// `|| grad F_i(v) + lambda (v - w_ref) ||^2`, over the given index set.
pub fn personal_grad_norm(
    v: &ModelParams,
    w_ref: &ModelParams,
    lambda: f64,
    data: &Dataset,
    indices: &[usize],
) -> Result<f64> {
    let (x, y) = data.gather(indices);
    let (_, grad) = loss_grad(v, x.view(), &y)?;
    let mut acc = 0.0;
    for k in 0..grad.len() {
        let g = grad[k] + lambda * (v.values[k] - w_ref.values[k]);
        acc += g * g;
    }
    Ok(acc)
}
