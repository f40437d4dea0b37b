//! The receiver side of one round: superposition of the analog uplink
//! signals plus AWGN, scaled back into a model update.

use crate::Cx;
use rand::Rng;
use rand_distr::StandardNormal;

/// Output of [`superimpose`].
#[derive(Debug, Clone)]
pub struct SuperimposeResult {
    /// `Re(y) / beta_t`: the additive model update the server applies.
    pub update: Vec<f64>,
    /// `|| Im(y) / beta_t ||^2`: misalignment/noise artifact, logged only.
    pub imag_residual: f64,
}

/// Superimpose the users' transmit vectors through their true effective
/// gains, add receiver noise of variance `sigma_c^2` per complex symbol, and
/// scale by the server factor. Skipped users pass `None` and contribute
/// nothing. Summation runs in user order, so the result does not depend on
/// scheduling.
pub fn superimpose(
    signals: &[Option<Vec<Cx>>],
    true_effective_gains: &[Cx],
    sigma_c: f64,
    beta_t: f64,
    dim: usize,
    rng: &mut impl Rng,
) -> SuperimposeResult {
    let mut received = vec![Cx::new(0.0, 0.0); dim];
    for (signal, &gain) in signals.iter().zip(true_effective_gains) {
        if let Some(symbols) = signal {
            debug_assert_eq!(symbols.len(), dim);
            for (acc, &x) in received.iter_mut().zip(symbols) {
                *acc += gain * x;
            }
        }
    }
    if sigma_c > 0.0 {
        let component_std = sigma_c / std::f64::consts::SQRT_2;
        for acc in received.iter_mut() {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            *acc += Cx::new(re * component_std, im * component_std);
        }
    }
    let mut update = Vec::with_capacity(dim);
    let mut imag_residual = 0.0;
    for y in &received {
        update.push(y.re / beta_t);
        let im = y.im / beta_t;
        imag_residual += im * im;
    }
    SuperimposeResult { update, imag_residual }
}
