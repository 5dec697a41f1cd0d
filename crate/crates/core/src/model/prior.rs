use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::hyper::{Hyperparams, ModelKind};
use super::state::ModelState;
use crate::error::{Error, Result};

/// Log prior density split by block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogPrior {
    pub phi: f64,
    pub theta: f64,
    pub chi: f64,
    /// Zero for DiSC.
    pub sigma: f64,
    pub total: f64,
}

fn normal_log_density(x: f64, mean: f64, var: f64) -> f64 {
    let z = x - mean;
    -0.5 * (2.0 * PI * var).ln() - z * z / (2.0 * var)
}

/// Log density of the AR(1) transitions touching `cur`: its own transition
/// (stationary when `prev` is `None`) plus the transition into `next`.
pub(crate) fn ar1_log_density_at(
    prev: Option<&[f64]>,
    cur: &[f64],
    next: Option<&[f64]>,
    alpha: f64,
    kappa: f64,
) -> f64 {
    let mut lp = match prev {
        None => {
            let var = kappa / (1.0 - alpha * alpha);
            cur.iter().map(|&x| normal_log_density(x, 0.0, var)).sum()
        }
        Some(p) => cur
            .iter()
            .zip(p)
            .map(|(&x, &xp)| normal_log_density(x, alpha * xp, kappa))
            .sum(),
    };
    if let Some(n) = next {
        lp += n
            .iter()
            .zip(cur)
            .map(|(&xn, &x)| normal_log_density(xn, alpha * x, kappa))
            .sum::<f64>();
    }
    lp
}

/// Adds the gradient of [`ar1_log_density_at`] with respect to `cur`.
pub(crate) fn ar1_grad(
    prev: Option<&[f64]>,
    cur: &[f64],
    next: Option<&[f64]>,
    alpha: f64,
    kappa: f64,
    out: &mut [f64],
) {
    for j in 0..cur.len() {
        let own = match prev {
            None => -cur[j] * (1.0 - alpha * alpha) / kappa,
            Some(p) => -(cur[j] - alpha * p[j]) / kappa,
        };
        let fwd = next.map_or(0.0, |n| alpha * (n[j] - alpha * cur[j]) / kappa);
        out[j] += own + fwd;
    }
}

fn ar1_series_log_density(block: &[f64], offsets: &[usize], width: usize, alpha: f64, kappa: f64) -> f64 {
    offsets
        .iter()
        .enumerate()
        .map(|(t, &o)| {
            let prev = (t > 0).then(|| &block[offsets[t - 1]..offsets[t - 1] + width]);
            ar1_log_density_at(prev, &block[o..o + width], None, alpha, kappa)
        })
        .sum()
}

/// Full log prior density (normalizing constants included).
pub fn log_prior(state: &ModelState, hp: &Hyperparams) -> Result<LogPrior> {
    hp.validate()?;
    if state.kind != hp.kind {
        return Err(Error::param(format!(
            "state is {} but hyperparameters are {}",
            state.kind, hp.kind
        )));
    }
    let d = state.dims;
    let phi = (0..d.genres)
        .map(|g| {
            let offsets: Vec<usize> = (0..d.times).map(|t| d.phi_offset(g, t)).collect();
            ar1_series_log_density(&state.phi, &offsets, d.senses, hp.alpha_phi, hp.kappa_phi)
        })
        .sum();
    let offsets: Vec<usize> = (0..d.times).map(|t| t * d.param).collect();
    let theta = ar1_series_log_density(&state.theta, &offsets, d.param, hp.alpha_theta, hp.kappa_theta);
    let chi = state
        .chi
        .iter()
        .map(|&x| normal_log_density(x, 0.0, hp.kappa_chi))
        .sum();
    let sigma = match hp.kind {
        ModelKind::Edisc => state
            .sigma
            .iter()
            .map(|&x| normal_log_density(x, 0.0, hp.kappa_sigma))
            .sum(),
        ModelKind::Disc => 0.0,
    };
    Ok(LogPrior {
        phi,
        theta,
        chi,
        sigma,
        total: phi + theta + chi + sigma,
    })
}

pub(crate) fn chi_log_density(chi: &[f64], hp: &Hyperparams) -> f64 {
    chi.iter().map(|&x| normal_log_density(x, 0.0, hp.kappa_chi)).sum()
}

pub(crate) fn sigma_log_density(sigma: &[f64], hp: &Hyperparams) -> f64 {
    sigma.iter().map(|&x| normal_log_density(x, 0.0, hp.kappa_sigma)).sum()
}
