//! Per-user dynamic power control: channel-inversion transmit factors,
//! budget-driven local step counts, and transmit-signal encoding with a
//! realized-norm backstop.

use crate::error::{Error, Result};
use crate::Cx;
use serde::{Deserialize, Serialize};

/// Default floor below which the estimated channel is treated as a deep
/// fade; the user skips the round instead of inverting it.
pub const DEFAULT_H_FLOOR: f64 = 1e-6;

/// How the budget is applied to an encoded vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PowerNorm {
    /// `||x||^2 <= P`: the whole d-symbol vector shares the budget.
    #[default]
    Total,
    /// `||x||^2 <= P * d`: the budget is per symbol.
    PerSymbol,
}

/// One user's power-control outcome for one round.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PowerPlan {
    pub beta_t: f64,
    pub beta_i: Cx,
    pub tau_i: u32,
    pub p_budget: f64,
    pub g_bound: f64,
}

/// Channel-inversion factor `beta_t * alpha_i / (tau_i * h_hat)`.
///
/// Fails with a deep-fade error when `|h_hat| <= h_floor`; the caller skips
/// the user for the round.
pub fn power_factor(
    beta_t: f64,
    alpha_i: f64,
    tau_i: u32,
    h_hat: Cx,
    h_floor: f64,
) -> Result<Cx> {
    if tau_i == 0 {
        return Err(Error::domain("local step count must be at least 1"));
    }
    let magnitude = h_hat.norm();
    if magnitude <= h_floor {
        return Err(Error::DeepFade { magnitude, floor: h_floor });
    }
    Ok(Cx::new(beta_t * alpha_i / tau_i as f64, 0.0) / h_hat)
}

/// Picks the local step count under the power budget.
///
/// The worst-case transmit power `|beta_i(tau)|^2 (eta tau G)^2` does not
/// depend on tau (the inversion factor carries 1/tau), so the budget check
/// is a single feasibility test: if it passes, the user runs `tau_max`
/// steps and the realized norm is additionally capped at encode time; if it
/// fails even once, the round is infeasible for this user.
#[allow(clippy::too_many_arguments)]
pub fn select_local_steps(
    p_budget: f64,
    beta_t: f64,
    alpha_i: f64,
    h_hat: Cx,
    eta: f64,
    g_bound: f64,
    tau_max: u32,
    h_floor: f64,
) -> Result<u32> {
    if tau_max == 0 {
        return Err(Error::domain("tau_max must be at least 1"));
    }
    if p_budget <= 0.0 {
        return Err(Error::domain("power budget must be positive"));
    }
    // beta_i at tau = 1; the tau in the numerator of the worst-case norm
    // cancels it for every other tau.
    let beta_one = power_factor(beta_t, alpha_i, 1, h_hat, h_floor)?;
    let worst_case = beta_one.norm_sqr() * (eta * g_bound).powi(2);
    if worst_case > p_budget {
        return Err(Error::PowerInfeasible { required: worst_case, budget: p_budget });
    }
    Ok(tau_max)
}

/// Encoded uplink signal with its realized power accounting.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransmitSignal {
    /// Complex symbols, one per model coordinate.
    pub symbols: Vec<Cx>,
    /// `||x||^2` actually emitted (after any backstop scaling).
    pub power: f64,
    /// Amplitude factor applied by the backstop; 1 when within budget.
    pub scale: f64,
}

/// `x = beta_i * delta_w`, scaled down to the budget if the realized norm
/// exceeds it.
pub fn encode_transmit(
    delta_w: &[f64],
    beta_i: Cx,
    p_budget: f64,
    norm: PowerNorm,
) -> TransmitSignal {
    let mut symbols: Vec<Cx> = delta_w.iter().map(|&w| beta_i * w).collect();
    let raw_power: f64 = symbols.iter().map(|x| x.norm_sqr()).sum();
    let limit = match norm {
        PowerNorm::Total => p_budget,
        PowerNorm::PerSymbol => p_budget * delta_w.len() as f64,
    };
    if raw_power > limit && raw_power > 0.0 {
        let scale = (limit / raw_power).sqrt();
        for x in &mut symbols {
            *x *= scale;
        }
        TransmitSignal { symbols, power: limit, scale }
    } else {
        TransmitSignal { symbols, power: raw_power, scale: 1.0 }
    }
}
