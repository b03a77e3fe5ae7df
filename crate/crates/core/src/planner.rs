//! Staleness/compression planning.
//!
//! The convergence penalty of compressing delayed gradients is
//! `phi = (1 - delta) / (delta * (1 - delta/2)^tau)`; in high-heterogeneity
//! settings the relevant factor carries `delta^2` instead. DeCo restricts
//! the search to bubble-free pipelines (`t_avg = T_comp`) and scans the
//! finite range `ceil(b / T_comp) ..= ceil((b + S_g / a) / T_comp)`.
//!
//! At staleness `tau` every `delta <= delta*(tau)` is bubble-free. For small
//! `tau` the factor falls monotonically in `delta`, so `delta*(tau)` is the
//! best choice. From `tau = 6` (`tau = 9` for `phi'`) the factor has an
//! interior local minimum; when that point lies below `delta*(tau)` it is
//! evaluated as a second candidate.

use serde::{Deserialize, Serialize};

use crate::compressor::CompressionRatio;
use crate::error::{invalid, Error, Result};
use crate::scalar::Scalar;
use crate::timing::{delta_star, delta_star_unclamped, t_avg_closed_form, TimingParams};

/// Largest staleness DeCo will enumerate.
pub const MAX_TAU: usize = 1 << 20;

/// Which convergence factor the planner minimizes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConvergenceRegime {
    /// `phi`: low data heterogeneity, noisy gradients.
    #[default]
    Standard,
    /// `phi'`: federated or small-model settings.
    HighHeterogeneity,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Plan<S> {
    pub tau: usize,
    pub delta: CompressionRatio<S>,
    /// Value of the regime's factor at `(tau, delta)`.
    pub phi: S,
    /// `delta*(tau)` fell below the floor and was raised to it.
    pub clamped: bool,
}

fn check_delta<S: Scalar>(delta: &S) -> Result<()> {
    if !delta.is_finite_value() || *delta <= S::zero() || *delta > S::one() {
        return Err(Error::InvalidRatio(delta.to_string()));
    }
    Ok(())
}

pub fn phi<S: Scalar>(delta: &S, tau: usize) -> Result<S> {
    check_delta(delta)?;
    if delta.is_one() {
        return Ok(S::zero());
    }
    let two = S::one() + S::one();
    let decay = S::one() - delta.clone() / two;
    let tau = u32::try_from(tau).map_err(|_| invalid("tau", "too large"))?;
    Ok((S::one() - delta.clone()) / delta.clone() * decay.recip_powi(tau))
}

pub fn phi_prime<S: Scalar>(delta: &S, tau: usize) -> Result<S> {
    Ok(phi(delta, tau)? / delta.clone())
}

pub fn convergence_factor<S: Scalar>(regime: ConvergenceRegime, delta: &S, tau: usize) -> Result<S> {
    match regime {
        ConvergenceRegime::Standard => phi(delta, tau),
        ConvergenceRegime::HighHeterogeneity => phi_prime(delta, tau),
    }
}

/// Inclusive staleness range DeCo scans.
pub fn tau_search_range<S: Scalar>(p: &TimingParams<S>) -> Result<(usize, usize)> {
    let to_tau = |x: S| {
        x.ceil_snap()
            .to_usize()
            .filter(|&t| t <= MAX_TAU)
            .ok_or_else(|| invalid("tau", format!("search range exceeds {MAX_TAU}")))
    };
    let lo = to_tau(p.latency().clone() / p.t_comp().clone())?;
    let hi = to_tau((p.latency().clone() + p.full_transmit_time()) / p.t_comp().clone())?;
    Ok((lo, hi))
}

/// Interior local minimum of the factor in `delta` at fixed `tau`, if any.
///
/// It is the smaller root of `A d^2 - B d + C = 0` with `(A, B, C)` equal to
/// `(tau, tau + 1, 2)` for `phi` and `(tau + 1, tau + 4, 4)` for `phi'`.
pub fn interior_minimum(regime: ConvergenceRegime, tau: usize) -> Option<f64> {
    let t = tau as f64;
    let (a, b, c) = match regime {
        ConvergenceRegime::Standard => (t, t + 1.0, 2.0),
        ConvergenceRegime::HighHeterogeneity => (t + 1.0, t + 4.0, 4.0),
    };
    let disc = b * b - 4.0 * a * c;
    if a == 0.0 || disc <= 0.0 {
        return None;
    }
    Some(2.0 * c / (b + disc.sqrt()))
}

/// DeCo: minimizes the convergence factor over bubble-free `(tau, delta)`.
///
/// Ties on the factor go to the smaller `tau`.
pub fn deco_plan<S: Scalar>(
    p: &TimingParams<S>,
    regime: ConvergenceRegime,
    floor: &CompressionRatio<S>,
) -> Result<Plan<S>> {
    let (lo, hi) = tau_search_range(p)?;
    let mut best: Option<Plan<S>> = None;
    for tau in lo..=hi {
        let delta = delta_star(tau, p, floor);
        let clamped = delta_star_unclamped(tau, p) < *floor.value();
        let mut candidate = Plan {
            tau,
            phi: convergence_factor(regime, delta.value(), tau)?,
            delta,
            clamped,
        };
        let interior = interior_minimum(regime, tau).and_then(S::from_f64);
        if let Some(d) = interior.filter(|d| !clamped && d >= floor.value() && d < candidate.delta.value()) {
            let factor = convergence_factor(regime, &d, tau)?;
            if factor < candidate.phi {
                candidate.delta = CompressionRatio::new(d)?;
                candidate.phi = factor;
            }
        }
        if best.as_ref().is_none_or(|b| candidate.phi < b.phi) {
            best = Some(candidate);
        }
    }
    Ok(best.expect("search range is never empty"))
}

/// Exhaustive search over `0..=tau_max` x `delta_grid` restricted to
/// `t_avg <= T_comp * (1 + tol)`. Verification oracle for [`deco_plan`].
pub fn brute_force_plan<S: Scalar>(
    p: &TimingParams<S>,
    tau_max: usize,
    delta_grid: &[S],
    tol: &S,
    regime: ConvergenceRegime,
) -> Result<Plan<S>> {
    let budget = p.t_comp().clone() * (S::one() + tol.clone());
    let mut best: Option<Plan<S>> = None;
    for tau in 0..=tau_max {
        for d in delta_grid {
            let delta = CompressionRatio::new(d.clone())?;
            if t_avg_closed_form(p, &delta, tau) > budget {
                continue;
            }
            let factor = convergence_factor(regime, d, tau)?;
            if best.as_ref().is_none_or(|b| factor < b.phi) {
                best = Some(Plan {
                    tau,
                    delta,
                    phi: factor,
                    clamped: false,
                });
            }
        }
    }
    best.ok_or(Error::Infeasible)
}

/// Largest stepsize satisfying `gamma <= min{1/(4L), 1/(4L sqrt(tau)), 1/(4L sqrt(phi/delta))}`.
///
/// Terms that vanish (`tau = 0`, `delta = 1`) impose no constraint.
pub fn stepsize_advisory(smoothness: f64, delta: f64, tau: usize) -> Result<f64> {
    if !(smoothness.is_finite() && smoothness > 0.0) {
        return Err(invalid("smoothness", "must be finite and > 0"));
    }
    let base = 1.0 / (4.0 * smoothness);
    let staleness = (tau as f64).sqrt().max(1.0);
    let compression = (phi(&delta, tau)? / delta).sqrt().max(1.0);
    Ok(base / staleness.max(compression))
}
