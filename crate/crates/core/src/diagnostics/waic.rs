use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::log_sum_exp;
use crate::samplers::Chain;

/// Per-snippet variances above this make the WAIC estimate unreliable.
pub const WAIC_VARIANCE_LIMIT: f64 = 0.4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Waic {
    pub waic: f64,
    /// Estimated log pointwise predictive density.
    pub lpd: f64,
    /// Estimated effective number of parameters.
    pub p_waic: f64,
    /// Sample variance of each snippet's log-likelihood over draws.
    pub variances: Vec<f64>,
    /// Snippets whose variance exceeds [`WAIC_VARIANCE_LIMIT`].
    pub high_variance: usize,
}

/// WAIC from a draws x snippets log-likelihood matrix (row-major).
pub fn waic_from_matrix(loglik: &[f64], draws: usize, snippets: usize) -> Result<Waic> {
    if draws < 2 {
        return Err(Error::TooFewDraws { needed: 2, have: draws });
    }
    if loglik.len() != draws * snippets {
        return Err(Error::Dimension {
            block: "log-likelihood matrix",
            expected: draws * snippets,
            found: loglik.len(),
        });
    }
    let mut lpd = 0.0;
    let mut p_waic = 0.0;
    let mut variances = Vec::with_capacity(snippets);
    let mut column = vec![0.0; draws];
    for d in 0..snippets {
        for s in 0..draws {
            column[s] = loglik[s * snippets + d];
        }
        let mean = column.iter().sum::<f64>() / draws as f64;
        let var = column.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (draws - 1) as f64;
        lpd += log_sum_exp(&column) - (draws as f64).ln();
        p_waic += var;
        variances.push(var);
    }
    Ok(Waic {
        waic: -2.0 * (lpd - p_waic),
        lpd,
        p_waic,
        high_variance: variances.iter().filter(|&&v| v > WAIC_VARIANCE_LIMIT).count(),
        variances,
    })
}

/// `-2 (lpd - p_waic)` over the chain's stored log-likelihoods.
pub fn waic(chain: &Chain) -> Result<Waic> {
    if !chain.has_psi() {
        return Err(Error::param("labelled chains carry no log-likelihoods"));
    }
    waic_from_matrix(&chain.loglik, chain.draws(), chain.meta.snippets)
}
