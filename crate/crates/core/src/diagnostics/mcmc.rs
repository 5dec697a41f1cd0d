use serde::{Deserialize, Serialize};

use super::sense::{brier_score, sense_probabilities_over, SenseMapping};
use crate::corpus::SnippetDataset;
use crate::error::{Error, Result};
use crate::samplers::Chain;

/// Minimum series length for ESS.
pub const MIN_ESS_DRAWS: usize = 200;
/// Split-R-hat above this flags a parameter.
pub const RHAT_LIMIT: f64 = 1.05;
/// Draws per window in convergence trajectories.
pub const WINDOW: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ess {
    pub ess: f64,
    /// Constant series: ESS is reported as 1.
    pub degenerate: bool,
}

/// Effective sample size with Geyer's initial monotone sequence estimator.
pub fn ess(series: &[f64]) -> Result<Ess> {
    let n = series.len();
    if n < MIN_ESS_DRAWS {
        return Err(Error::TooFewDraws {
            needed: MIN_ESS_DRAWS,
            have: n,
        });
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let centred: Vec<f64> = series.iter().map(|x| x - mean).collect();
    let acov = |lag: usize| -> f64 { centred[..n - lag].iter().zip(&centred[lag..]).map(|(a, b)| a * b).sum::<f64>() / n as f64 };
    let c0 = acov(0);
    if c0 <= f64::MIN_POSITIVE * n as f64 || series.iter().all(|&x| x == series[0]) {
        return Ok(Ess { ess: 1.0, degenerate: true });
    }
    let mut tau = -1.0;
    let mut prev_pair = f64::INFINITY;
    let mut m = 0;
    while 2 * m + 1 < n {
        let pair = (acov(2 * m) + acov(2 * m + 1)) / c0;
        if pair <= 0.0 {
            break;
        }
        let pair = pair.min(prev_pair);
        tau += 2.0 * pair;
        prev_pair = pair;
        m += 1;
    }
    Ok(Ess {
        ess: n as f64 / tau,
        degenerate: false,
    })
}

/// Median and interquartile range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spread {
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
}

impl Spread {
    /// Linear-interpolation quartiles of `values`.
    pub fn of(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::TooFewDraws { needed: 1, have: 0 });
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let q = |p: f64| {
            let h = p * (v.len() - 1) as f64;
            let lo = h.floor() as usize;
            let hi = h.ceil() as usize;
            v[lo] + (h - lo as f64) * (v[hi] - v[lo])
        };
        Ok(Spread {
            median: q(0.5),
            q1: q(0.25),
            q3: q(0.75),
        })
    }

    pub fn iqr(&self) -> f64 {
        self.q3 - self.q1
    }
}

/// ESS and ESS per hour over the `phi~` parameters and over the `psi~`
/// parameters of each sense's top 20 words.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EssSummary {
    pub phi: Spread,
    pub phi_per_hour: Spread,
    pub psi: Option<Spread>,
    pub psi_per_hour: Option<Spread>,
    pub degenerate: usize,
    pub wall_seconds: f64,
}

/// Words tracked per sense in [`ess_summary`].
pub const TOP_WORDS_TRACKED: usize = 20;

pub fn ess_summary(chain: &Chain) -> Result<EssSummary> {
    let d = chain.dims();
    let hours = chain.meta.wall_seconds / 3600.0;
    let mut degenerate = 0;
    let mut phi = Vec::with_capacity(d.phi_len());
    for g in 0..d.genres {
        for t in 0..d.times {
            for k in 0..d.senses {
                let e = ess(&chain.phi_trace(g, t, k))?;
                degenerate += e.degenerate as usize;
                phi.push(e.ess);
            }
        }
    }
    let mut psi = Vec::new();
    if chain.has_psi() {
        for k in 0..d.senses {
            for (v, _) in top_word_ids(chain, k, TOP_WORDS_TRACKED)? {
                for t in 0..d.times {
                    let e = ess(&chain.psi_trace(k, t, v))?;
                    degenerate += e.degenerate as usize;
                    psi.push(e.ess);
                }
            }
        }
    }
    let per_hour = |v: &[f64]| -> Vec<f64> { v.iter().map(|e| e / hours).collect() };
    Ok(EssSummary {
        phi: Spread::of(&phi)?,
        phi_per_hour: Spread::of(&per_hour(&phi))?,
        psi: (!psi.is_empty()).then(|| Spread::of(&psi)).transpose()?,
        psi_per_hour: (!psi.is_empty()).then(|| Spread::of(&per_hour(&psi))).transpose()?,
        degenerate,
        wall_seconds: chain.meta.wall_seconds,
    })
}

/// Split-R-hat of equal-length chains of one scalar.
///
/// Each chain is halved (the middle draw of odd lengths dropped). Returns 1
/// when every half is the same constant and infinity when the halves are
/// constant but different.
pub fn split_rhat(chains: &[Vec<f64>]) -> Result<f64> {
    let n = chains.first().map_or(0, Vec::len);
    if chains.is_empty() || chains.iter().any(|c| c.len() != n) {
        return Err(Error::param("split-R-hat needs equal-length chains"));
    }
    if n < 4 {
        return Err(Error::TooFewDraws { needed: 4, have: n });
    }
    let half = n / 2;
    let halves: Vec<&[f64]> = chains
        .iter()
        .flat_map(|c| [&c[..half], &c[n - half..]])
        .collect();
    let m = halves.len() as f64;
    let len = half as f64;
    let means: Vec<f64> = halves.iter().map(|h| h.iter().sum::<f64>() / len).collect();
    let grand = means.iter().sum::<f64>() / m;
    let b = len / (m - 1.0) * means.iter().map(|x| (x - grand).powi(2)).sum::<f64>();
    let w = halves
        .iter()
        .zip(&means)
        .map(|(h, mu)| h.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (len - 1.0))
        .sum::<f64>()
        / m;
    if w == 0.0 {
        return Ok(if b == 0.0 { 1.0 } else { f64::INFINITY });
    }
    let var_plus = (len - 1.0) / len * w + b / len;
    Ok((var_plus / w).sqrt())
}

fn permutations(k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(k - 1) {
        for i in 0..=p.len() {
            let mut q = p.clone();
            q.insert(i, k - 1);
            out.push(q);
        }
    }
    out.sort();
    out
}

fn check_compatible(chains: &[Chain]) -> Result<()> {
    let first = chains.first().ok_or_else(|| Error::param("no chains given"))?;
    for c in chains {
        let (a, b) = (&c.meta, &first.meta);
        if a.dims != b.dims || a.kind != b.kind || a.draws != b.draws || a.labelled != b.labelled || a.snippets != b.snippets {
            return Err(Error::param(format!(
                "chain {} does not match chain {} in dims, kind or draw count",
                a.chain, b.chain
            )));
        }
    }
    Ok(())
}

/// Relabels the senses of every chain to best match chain 0, comparing
/// posterior means of `psi~` (or `phi~` for labelled chains) in squared
/// distance over all permutations. Returns the permutation applied to each.
pub fn align_chains(chains: &mut [Chain]) -> Result<Vec<Vec<usize>>> {
    check_compatible(chains)?;
    let k = chains[0].dims().senses;
    let reference = |c: &Chain| if c.has_psi() { c.psi_mean() } else { c.phi_mean() };
    let target = reference(&chains[0]);
    let perms = permutations(k);
    let mut applied = vec![(0..k).collect::<Vec<_>>()];
    for c in chains.iter_mut().skip(1) {
        let mean = reference(c);
        let d = c.dims();
        let cost = |p: &[usize]| -> f64 {
            let mut total = 0.0;
            for (new, &old) in p.iter().enumerate() {
                if c.has_psi() {
                    let block = d.times * d.vocab;
                    total += (0..block)
                        .map(|i| (mean[old * block + i] - target[new * block + i]).powi(2))
                        .sum::<f64>();
                } else {
                    total += (0..d.cells())
                        .map(|cell| (mean[cell * k + old] - target[cell * k + new]).powi(2))
                        .sum::<f64>();
                }
            }
            total
        };
        let best = perms
            .iter()
            .min_by(|a, b| cost(a).total_cmp(&cost(b)))
            .expect("k! >= 1")
            .clone();
        c.permute_senses(&best)?;
        applied.push(best);
    }
    Ok(applied)
}

/// Statistics of one chain over a window of consecutive draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowStat {
    pub chain: usize,
    pub start: usize,
    /// Mean total log-likelihood per draw.
    pub mean_loglik: f64,
    /// Brier score on the window's draws, when the data carry labels.
    pub brier: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    /// Split-R-hat of each `phi~[g, t, k]`, layout `[g][t][k]`.
    pub rhat: Vec<f64>,
    /// Indices into `rhat` above [`RHAT_LIMIT`].
    pub flagged: Vec<usize>,
    pub windows: Vec<WindowStat>,
}

impl ConvergenceReport {
    pub fn max_rhat(&self) -> f64 {
        self.rhat.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Split-R-hat on `phi~` plus per-chain trajectories over 100-draw windows.
/// Chains should be label-aligned first (see [`align_chains`]).
pub fn convergence_report(chains: &[Chain], data: Option<&SnippetDataset>) -> Result<ConvergenceReport> {
    check_compatible(chains)?;
    if chains.len() < 2 {
        return Err(Error::param("convergence report needs at least two chains"));
    }
    let d = chains[0].dims();
    let mut rhat = Vec::with_capacity(d.phi_len());
    for g in 0..d.genres {
        for t in 0..d.times {
            for k in 0..d.senses {
                let traces: Vec<Vec<f64>> = chains.iter().map(|c| c.phi_trace(g, t, k)).collect();
                rhat.push(split_rhat(&traces)?);
            }
        }
    }
    let flagged = rhat
        .iter()
        .enumerate()
        .filter(|(_, &r)| !(r <= RHAT_LIMIT))
        .map(|(i, _)| i)
        .collect();
    let mut windows = Vec::new();
    for c in chains {
        if !c.has_psi() {
            continue;
        }
        let labelled = data.filter(|x| x.true_senses > 0 && x.snippets.iter().any(|s| s.collocate));
        let mut start = 0;
        while start + WINDOW <= c.draws() {
            let range = start..start + WINDOW;
            let mean_loglik = range.clone().map(|s| c.loglik_row(s).iter().sum::<f64>()).sum::<f64>() / WINDOW as f64;
            let brier = match labelled {
                Some(data) if data.true_senses <= d.senses => {
                    let p = sense_probabilities_over(c, data, range)?;
                    Some(brier_score(&p, data, &SenseMapping::Search)?.score)
                }
                _ => None,
            };
            windows.push(WindowStat {
                chain: c.meta.chain,
                start,
                mean_loglik,
                brier,
            });
            start += WINDOW;
        }
    }
    Ok(ConvergenceReport { rhat, flagged, windows })
}

fn top_word_ids(chain: &Chain, sense: usize, n: usize) -> Result<Vec<(usize, f64)>> {
    let d = chain.dims();
    if sense >= d.senses {
        return Err(Error::param(format!("sense {} out of range 1..={}", sense + 1, d.senses)));
    }
    if !chain.has_psi() {
        return Err(Error::param("labelled chains carry no psi draws"));
    }
    let mean = chain.psi_mean();
    let mut scores: Vec<(usize, f64)> = (0..d.vocab)
        .map(|v| {
            let p = (0..d.times).map(|t| mean[d.psi_offset(sense, t) + v]).sum::<f64>() / d.times as f64;
            (v, p)
        })
        .collect();
    scores.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scores.truncate(n);
    Ok(scores)
}

/// Most probable context words of a sense, marginally over time:
/// `(1/T) sum_t psi~[k, t, v]` at the posterior mean, ties by word id.
pub fn top_words(chain: &Chain, vocab: &crate::corpus::Vocabulary, sense: usize, n: usize) -> Result<Vec<(String, f64)>> {
    if vocab.len() != chain.dims().vocab {
        return Err(Error::param("vocabulary size differs from the chain's"));
    }
    Ok(top_word_ids(chain, sense, n)?
        .into_iter()
        .map(|(v, p)| (vocab.lemma(v).to_string(), p))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn permutation_count() {
        assert_eq!(permutations(3).len(), 6);
        assert_eq!(permutations(1), vec![vec![0]]);
    }

    #[test]
    fn constant_series_is_degenerate() {
        let e = ess(&[2.0; 300]).unwrap();
        assert!(e.degenerate);
        assert!(ess(&[2.0; 10]).is_err());
    }

    #[test]
    fn separated_chains_flagged() {
        let a: Vec<f64> = (0..200).map(|i| (i % 7) as f64 * 0.01).collect();
        let b: Vec<f64> = a.iter().map(|x| x + 5.0).collect();
        assert!(split_rhat(&[a, b]).unwrap() > 1.05);
    }
}
