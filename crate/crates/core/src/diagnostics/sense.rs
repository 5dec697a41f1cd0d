use serde::{Deserialize, Serialize};

use crate::corpus::SnippetDataset;
use crate::error::{Error, Result};
use crate::model::{log_softmax_in_place, Dims};
use crate::samplers::Chain;

/// Posterior sense probabilities `p(z_d = k)` averaged over draws, `D x K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensePosterior {
    pub senses: usize,
    pub values: Vec<f64>,
}

impl SensePosterior {
    /// Wraps a row-major `D x K` matrix; rows must be probability vectors.
    pub fn new(senses: usize, values: Vec<f64>) -> Result<Self> {
        if senses == 0 || !values.len().is_multiple_of(senses) {
            return Err(Error::param("sense probabilities must form a D x K matrix"));
        }
        for (d, row) in values.chunks(senses).enumerate() {
            let total: f64 = row.iter().sum();
            if row.iter().any(|p| !(0.0..=1.0).contains(p)) || (total - 1.0).abs() > 1e-9 {
                return Err(Error::param(format!("row {d} is not a probability vector")));
            }
        }
        Ok(SensePosterior { senses, values })
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.senses
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn row(&self, d: usize) -> &[f64] {
        &self.values[d * self.senses..(d + 1) * self.senses]
    }
}

fn check_chain(chain: &Chain, data: &SnippetDataset) -> Result<Dims> {
    let d = chain.dims();
    if !chain.has_psi() {
        return Err(Error::param("sense probabilities need psi draws"));
    }
    if chain.draws() == 0 {
        return Err(Error::TooFewDraws { needed: 1, have: 0 });
    }
    if d.genres != data.genres || d.times != data.times || d.vocab != data.vocab_size() {
        return Err(Error::param("chain and dataset dimensions differ"));
    }
    Ok(d)
}

/// Averages `p(z_d = k | phi, psi)` over the draws in `range`.
pub(crate) fn sense_probabilities_over(
    chain: &Chain,
    data: &SnippetDataset,
    range: std::ops::Range<usize>,
) -> Result<SensePosterior> {
    let dims = check_chain(chain, data)?;
    let k_n = dims.senses;
    let mut out = vec![0.0; data.len() * k_n];
    let mut logp = vec![0.0; k_n];
    let n = range.len();
    if n == 0 {
        return Err(Error::TooFewDraws { needed: 1, have: 0 });
    }
    for s in range {
        let phi = chain.phi_draw(s);
        let psi = chain.psi_draw(s);
        for (d, snip) in data.snippets.iter().enumerate() {
            let po = dims.phi_offset(snip.genre, snip.time);
            for k in 0..k_n {
                let lp = &psi[dims.psi_offset(k, snip.time)..][..dims.vocab];
                logp[k] = phi[po + k].ln() + snip.words.iter().map(|&w| lp[w as usize].ln()).sum::<f64>();
            }
            log_softmax_in_place(&mut logp);
            for k in 0..k_n {
                out[d * k_n + k] += logp[k].exp();
            }
        }
    }
    out.iter_mut().for_each(|p| *p /= n as f64);
    Ok(SensePosterior { senses: k_n, values: out })
}

/// Posterior sense probabilities of every snippet, averaged over all draws.
pub fn sense_probabilities(chain: &Chain, data: &SnippetDataset) -> Result<SensePosterior> {
    sense_probabilities_over(chain, data, 0..chain.draws())
}

/// How model senses map onto true senses.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum SenseMapping {
    Identity,
    /// `map[k]` is the true sense of model sense `k`.
    Given(Vec<usize>),
    /// Minimize over every surjection.
    Search,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BrierScore {
    pub score: f64,
    /// Mapping used (the minimizer for [`SenseMapping::Search`]).
    pub mapping: Vec<usize>,
    /// Number of collocate snippets scored.
    pub scored: usize,
}

/// Every surjection from `k` model senses onto `k_true` true senses, in
/// lexicographic order.
pub fn surjections(k: usize, k_true: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if k_true == 0 || k < k_true {
        return out;
    }
    let mut map = vec![0usize; k];
    loop {
        let mut hit = vec![false; k_true];
        map.iter().for_each(|&m| hit[m] = true);
        if hit.iter().all(|&h| h) {
            out.push(map.clone());
        }
        let mut i = k;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            map[i] += 1;
            if map[i] < k_true {
                break;
            }
            map[i] = 0;
        }
    }
}

fn score_with(p: &SensePosterior, labelled: &[(usize, usize)], map: &[usize], k_true: usize) -> f64 {
    let mut total = 0.0;
    let mut mapped = vec![0.0; k_true];
    for &(d, o) in labelled {
        mapped.iter_mut().for_each(|x| *x = 0.0);
        for (k, &pk) in p.row(d).iter().enumerate() {
            mapped[map[k]] += pk;
        }
        total += mapped
            .iter()
            .enumerate()
            .map(|(k, &m)| (m - if k == o { 1.0 } else { 0.0 }).powi(2))
            .sum::<f64>();
    }
    total / labelled.len() as f64
}

/// Multi-category Brier score over the collocate snippets of `data`.
pub fn brier_score(p: &SensePosterior, data: &SnippetDataset, mapping: &SenseMapping) -> Result<BrierScore> {
    let k = p.senses;
    let k_true = data.true_senses;
    if p.len() != data.len() {
        return Err(Error::param("sense probabilities and dataset have different lengths"));
    }
    if k < k_true {
        return Err(Error::param(format!("K = {k} model senses cannot cover K' = {k_true} true senses")));
    }
    let labelled: Vec<(usize, usize)> = data
        .snippets
        .iter()
        .enumerate()
        .filter(|(_, s)| s.collocate)
        .filter_map(|(d, s)| s.true_sense.map(|o| (d, o)))
        .collect();
    if labelled.is_empty() {
        return Err(Error::param("no labelled collocate snippets to score"));
    }
    let candidates = match mapping {
        SenseMapping::Identity => {
            if k != k_true {
                return Err(Error::param("identity mapping needs K = K'"));
            }
            vec![(0..k).collect()]
        }
        SenseMapping::Given(map) => {
            if map.len() != k || map.iter().any(|&m| m >= k_true) {
                return Err(Error::param(format!("mapping {map:?} is not a map from {k} onto {k_true} senses")));
            }
            vec![map.clone()]
        }
        SenseMapping::Search => surjections(k, k_true),
    };
    let mut best: Option<BrierScore> = None;
    for map in candidates {
        let score = score_with(p, &labelled, &map, k_true);
        if best.as_ref().is_none_or(|b| score < b.score) {
            best = Some(BrierScore {
                score,
                mapping: map,
                scored: labelled.len(),
            });
        }
    }
    Ok(best.expect("at least one mapping"))
}

/// Brier score of uniform predictions over `k_true` senses:
/// `(1 - 1/K')^2 + (K' - 1) / K'^2`.
pub fn uniform_brier(k_true: usize) -> f64 {
    let k = k_true as f64;
    (1.0 - 1.0 / k).powi(2) + (k - 1.0) / (k * k)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn surjection_counts() {
        assert_eq!(surjections(3, 2).len(), 6);
        assert_eq!(surjections(4, 3).len(), 36);
        assert_eq!(surjections(2, 2), vec![vec![0, 1], vec![1, 0]]);
        assert!(surjections(1, 2).is_empty());
    }

    #[test]
    fn uniform_values() {
        assert!((uniform_brier(2) - 0.5).abs() < 1e-15);
        assert!((uniform_brier(3) - 2.0 / 3.0).abs() < 1e-15);
    }
}
