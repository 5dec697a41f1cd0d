use serde::{Deserialize, Serialize};

use super::hyper::{Hyperparams, ModelKind};
use super::prior::log_prior;
use super::state::{Dims, ModelState};
use crate::corpus::SnippetDataset;
use crate::embeddings::EmbeddingMatrix;
use crate::error::{Error, Result};

fn check_finite(x: &[f64]) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite("softmax input".into()))
    }
}

/// Max-shifted softmax.
pub fn softmax(x: &[f64]) -> Result<Vec<f64>> {
    check_finite(x)?;
    let mut out = x.to_vec();
    log_softmax_in_place(&mut out);
    out.iter_mut().for_each(|v| *v = v.exp());
    Ok(out)
}

/// `x - logsumexp(x)`.
pub fn log_softmax(x: &[f64]) -> Result<Vec<f64>> {
    check_finite(x)?;
    let mut out = x.to_vec();
    log_softmax_in_place(&mut out);
    Ok(out)
}

pub(crate) fn log_sum_exp(x: &[f64]) -> f64 {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + x.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Turns `logits` into log-probabilities and writes the probabilities to
/// `probs`, with one `exp` per entry.
fn normalize_pair(logits: &mut [f64], probs: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (p, l) in probs.iter_mut().zip(logits.iter()) {
        *p = (l - max).exp();
        sum += *p;
    }
    let shift = max + sum.ln();
    let inv = 1.0 / sum;
    for (p, l) in probs.iter_mut().zip(logits.iter_mut()) {
        *p *= inv;
        *l -= shift;
    }
}

pub(crate) fn log_softmax_in_place(x: &mut [f64]) {
    let lse = log_sum_exp(x);
    x.iter_mut().for_each(|v| *v -= lse);
}

/// Sense prevalence `phi~[g][t][k]` and sense distributions `psi~[k][t][v]`,
/// with their logarithms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityTables {
    pub dims: Dims,
    pub phi: Vec<f64>,
    pub psi: Vec<f64>,
    pub log_phi: Vec<f64>,
    pub log_psi: Vec<f64>,
}

impl ProbabilityTables {
    fn empty(dims: Dims) -> Self {
        ProbabilityTables {
            dims,
            phi: vec![0.0; dims.phi_len()],
            psi: vec![0.0; dims.psi_len()],
            log_phi: vec![0.0; dims.phi_len()],
            log_psi: vec![0.0; dims.psi_len()],
        }
    }

    pub fn phi_tilde(&self, genre: usize, time: usize) -> &[f64] {
        let o = self.dims.phi_offset(genre, time);
        &self.phi[o..o + self.dims.senses]
    }

    pub fn psi_tilde(&self, sense: usize, time: usize) -> &[f64] {
        let o = self.dims.psi_offset(sense, time);
        &self.psi[o..o + self.dims.vocab]
    }

    pub fn log_psi_tilde(&self, sense: usize, time: usize) -> &[f64] {
        let o = self.dims.psi_offset(sense, time);
        &self.log_psi[o..o + self.dims.vocab]
    }
}

/// Total and per-snippet log-likelihood.
#[derive(Debug, Clone, PartialEq)]
pub struct LogLikelihood {
    pub total: f64,
    pub per_snippet: Vec<f64>,
}

/// Cached quantities for one state: tables plus, per snippet and sense, the
/// summed log word probabilities `sum_i log psi~[k, t_d, w_di]`.
#[derive(Debug, Clone)]
pub(crate) struct Workspace {
    pub tables: ProbabilityTables,
    pub word_logp: Vec<f64>,
}

/// Data, embeddings and hyperparameters bound together: everything the
/// posterior needs apart from the state.
#[derive(Debug, Clone)]
pub struct Model<'a> {
    data: &'a SnippetDataset,
    rho: Option<&'a EmbeddingMatrix>,
    hp: Hyperparams,
    dims: Dims,
    all: Vec<usize>,
    by_time: Vec<Vec<usize>>,
    by_cell: Vec<Vec<usize>>,
    /// `sum_i rho[w_di]` per snippet, `D x M` (EDiSC only).
    rho_sums: Vec<f64>,
    /// Embeddings stored column by column, `M x V` (EDiSC only).
    rho_cols: Vec<f64>,
    /// Number of occurrences of each word across all snippets.
    word_totals: Vec<f64>,
}

impl<'a> Model<'a> {
    /// `rho` must be given for EDiSC (rows aligned to the data vocabulary)
    /// and omitted for DiSC.
    pub fn new(data: &'a SnippetDataset, rho: Option<&'a EmbeddingMatrix>, hp: &Hyperparams) -> Result<Self> {
        hp.validate()?;
        let v = data.vocab_size();
        let embed = match (hp.kind, rho) {
            (ModelKind::Edisc, Some(r)) => {
                if r.rows() != v {
                    return Err(Error::Dimension {
                        block: "embedding rows",
                        expected: v,
                        found: r.rows(),
                    });
                }
                if r.dim() != hp.embed_dim {
                    return Err(Error::Dimension {
                        block: "embedding dimension",
                        expected: hp.embed_dim,
                        found: r.dim(),
                    });
                }
                r.dim()
            }
            (ModelKind::Edisc, None) => return Err(Error::param("EDiSC requires embeddings")),
            (ModelKind::Disc, Some(_)) => return Err(Error::param("DiSC does not take embeddings")),
            (ModelKind::Disc, None) => 0,
        };
        let dims = Dims::new(hp.kind, data.genres, data.times, hp.senses, v, embed);
        let mut by_time = vec![Vec::new(); dims.times];
        let mut by_cell = vec![Vec::new(); dims.cells()];
        let mut word_totals = vec![0.0; v];
        for (d, s) in data.snippets.iter().enumerate() {
            if s.genre >= dims.genres || s.time >= dims.times {
                return Err(Error::InvalidSnippet {
                    index: d,
                    field: "genre/time",
                    message: format!("({}, {}) outside declared dimensions", s.genre + 1, s.time + 1),
                });
            }
            for &w in &s.words {
                if w as usize >= v {
                    return Err(Error::InvalidSnippet {
                        index: d,
                        field: "words",
                        message: format!("word id {w} >= V = {v}"),
                    });
                }
                word_totals[w as usize] += 1.0;
            }
            by_time[s.time].push(d);
            by_cell[s.genre * dims.times + s.time].push(d);
        }
        let mut rho_sums = Vec::new();
        let mut rho_cols = Vec::new();
        if let Some(r) = rho {
            rho_cols = vec![0.0; embed * v];
            for w in 0..v {
                for (j, x) in r.row(w).iter().enumerate() {
                    rho_cols[j * v + w] = *x;
                }
            }
            rho_sums = vec![0.0; data.len() * embed];
            for (d, s) in data.snippets.iter().enumerate() {
                let out = &mut rho_sums[d * embed..(d + 1) * embed];
                for &w in &s.words {
                    for (o, x) in out.iter_mut().zip(r.row(w as usize)) {
                        *o += x;
                    }
                }
            }
        }
        Ok(Model {
            data,
            rho,
            hp: *hp,
            dims,
            all: (0..data.len()).collect(),
            by_time,
            by_cell,
            rho_sums,
            rho_cols,
            word_totals,
        })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn hyperparams(&self) -> &Hyperparams {
        &self.hp
    }

    pub fn kind(&self) -> ModelKind {
        self.hp.kind
    }

    pub fn data(&self) -> &'a SnippetDataset {
        self.data
    }

    pub fn embeddings(&self) -> Option<&'a EmbeddingMatrix> {
        self.rho
    }

    pub(crate) fn all_snippets(&self) -> &[usize] {
        &self.all
    }

    pub(crate) fn snippets_at_time(&self, time: usize) -> &[usize] {
        &self.by_time[time]
    }

    pub(crate) fn snippets_in_cell(&self, genre: usize, time: usize) -> &[usize] {
        &self.by_cell[genre * self.dims.times + time]
    }

    pub(crate) fn rho_sum(&self, d: usize) -> &[f64] {
        let m = self.dims.param;
        &self.rho_sums[d * m..(d + 1) * m]
    }

    /// Column `j` of the embeddings, a `V`-vector.
    pub(crate) fn rho_col(&self, j: usize) -> &[f64] {
        let v = self.dims.vocab;
        &self.rho_cols[j * v..(j + 1) * v]
    }

    pub(crate) fn word_totals(&self) -> &[f64] {
        &self.word_totals
    }

    /// Draws an initial state from the prior with `sigma = 0`.
    pub fn sample_initial_state<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> ModelState {
        ModelState::sample_prior(&self.hp, self.dims, false, rng)
    }

    /// Recomputes `psi~` for one time period, or all of them.
    pub(crate) fn fill_psi(&self, state: &ModelState, tables: &mut ProbabilityTables, time: Option<usize>) {
        let d = self.dims;
        let times = match time {
            Some(t) => t..t + 1,
            None => 0..d.times,
        };
        let mut xi = vec![0.0; d.param];
        for t in times {
            for k in 0..d.senses {
                let o = d.psi_offset(k, t);
                let logits = &mut tables.log_psi[o..o + d.vocab];
                let chi = state.chi_at(k);
                let theta = state.theta_at(t);
                if self.rho.is_some() {
                    for j in 0..d.param {
                        xi[j] = chi[j] + theta[j];
                    }
                    logits.copy_from_slice(&state.sigma);
                    for (j, col) in self.rho_cols.chunks_exact(d.vocab).enumerate() {
                        let x = xi[j];
                        for (l, r) in logits.iter_mut().zip(col) {
                            *l += r * x;
                        }
                    }
                } else {
                    for ((l, c), th) in logits.iter_mut().zip(chi).zip(theta) {
                        *l = c + th;
                    }
                }
                normalize_pair(logits, &mut tables.psi[o..o + d.vocab]);
            }
        }
    }

    /// Recomputes `phi~` for one (genre, time) cell, or all of them.
    pub(crate) fn fill_phi(&self, state: &ModelState, tables: &mut ProbabilityTables, cell: Option<(usize, usize)>) {
        let d = self.dims;
        let cells: Vec<(usize, usize)> = match cell {
            Some(c) => vec![c],
            None => (0..d.genres).flat_map(|g| (0..d.times).map(move |t| (g, t))).collect(),
        };
        for (g, t) in cells {
            let o = d.phi_offset(g, t);
            let lp = &mut tables.log_phi[o..o + d.senses];
            lp.copy_from_slice(state.phi_at(g, t));
            log_softmax_in_place(lp);
            for k in 0..d.senses {
                tables.phi[o + k] = tables.log_phi[o + k].exp();
            }
        }
    }

    fn check_state(&self, state: &ModelState) -> Result<()> {
        if state.kind != self.hp.kind {
            return Err(Error::param(format!(
                "state is {} but the model is {}",
                state.kind, self.hp.kind
            )));
        }
        state.check(self.dims)
    }

    pub fn tables(&self, state: &ModelState) -> Result<ProbabilityTables> {
        self.check_state(state)?;
        let mut tables = ProbabilityTables::empty(self.dims);
        self.fill_phi(state, &mut tables, None);
        self.fill_psi(state, &mut tables, None);
        Ok(tables)
    }

    pub(crate) fn fill_word_logp(&self, tables: &ProbabilityTables, word_logp: &mut [f64], snippets: &[usize]) {
        let k_n = self.dims.senses;
        for &d in snippets {
            let s = &self.data.snippets[d];
            for k in 0..k_n {
                let lp = tables.log_psi_tilde(k, s.time);
                word_logp[d * k_n + k] = s.words.iter().map(|&w| lp[w as usize]).sum();
            }
        }
    }

    pub(crate) fn workspace(&self, state: &ModelState) -> Result<Workspace> {
        let tables = self.tables(state)?;
        let mut word_logp = vec![0.0; self.data.len() * self.dims.senses];
        self.fill_word_logp(&tables, &mut word_logp, &self.all);
        Ok(Workspace { tables, word_logp })
    }

    /// `log sum_k phi~_k prod_w psi~_{k,w}` for snippet `d`; writes the
    /// normalized responsibilities into `resp` when given.
    pub(crate) fn snippet_loglik(&self, ws: &Workspace, d: usize, resp: Option<&mut [f64]>) -> f64 {
        let s = &self.data.snippets[d];
        let k_n = self.dims.senses;
        let lphi = &ws.tables.log_phi[self.dims.phi_offset(s.genre, s.time)..][..k_n];
        let a = &ws.word_logp[d * k_n..(d + 1) * k_n];
        let mut max = f64::NEG_INFINITY;
        for k in 0..k_n {
            max = max.max(lphi[k] + a[k]);
        }
        let mut sum = 0.0;
        match resp {
            Some(r) => {
                for k in 0..k_n {
                    r[k] = (lphi[k] + a[k] - max).exp();
                    sum += r[k];
                }
                r.iter_mut().for_each(|x| *x /= sum);
            }
            None => {
                for k in 0..k_n {
                    sum += (lphi[k] + a[k] - max).exp();
                }
            }
        }
        max + sum.ln()
    }

    /// Sum of snippet log-likelihoods over `snippets`, filling the `D x K`
    /// responsibility matrix rows for those snippets.
    pub(crate) fn sum_loglik(&self, ws: &Workspace, snippets: &[usize], resp: &mut [f64]) -> f64 {
        let k_n = self.dims.senses;
        snippets
            .iter()
            .map(|&d| self.snippet_loglik(ws, d, Some(&mut resp[d * k_n..(d + 1) * k_n])))
            .sum()
    }

    /// Log-likelihood of the data given probability tables, marginalizing
    /// the sense of every snippet.
    pub fn log_likelihood(&self, tables: &ProbabilityTables) -> Result<LogLikelihood> {
        if tables.dims != self.dims {
            return Err(Error::param("tables do not match the model dimensions"));
        }
        let mut word_logp = vec![0.0; self.data.len() * self.dims.senses];
        self.fill_word_logp(tables, &mut word_logp, &self.all);
        let ws = Workspace {
            tables: tables.clone(),
            word_logp,
        };
        let per_snippet: Vec<f64> = (0..self.data.len()).map(|d| self.snippet_loglik(&ws, d, None)).collect();
        Ok(LogLikelihood {
            total: per_snippet.iter().sum(),
            per_snippet,
        })
    }

    /// `log prior + lambda * log likelihood`, up to the evidence.
    pub fn log_posterior(&self, state: &ModelState, lambda: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::param(format!("inverse temperature {lambda} outside [0, 1]")));
        }
        let prior = log_prior(state, &self.hp)?.total;
        let ll = self.log_likelihood(&self.tables(state)?)?.total;
        Ok(prior + lambda * ll)
    }
}
