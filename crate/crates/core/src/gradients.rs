//! Analytic gradients of the tempered log-posterior, block by block.
//!
//! Every likelihood gradient is a sum over snippets weighted by the
//! responsibilities `r[d, k]`, the posterior probability of sense `k` for
//! snippet `d` at the current parameters. They are computed once per
//! evaluation and shared by the block being differentiated.
//!
//! The inverse temperature `lambda` multiplies the likelihood part only.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ar1_grad, ar1_log_density_at, Model, ModelKind, ModelState, Workspace};
use crate::model::{chi_log_density, sigma_log_density};

/// One Gibbs block of the sampler.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Block {
    Chi,
    Theta(usize),
    Phi(usize, usize),
    Sigma,
}

impl std::fmt::Display for Block {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Block::Chi => write!(f, "chi"),
            Block::Theta(t) => write!(f, "theta[{}]", t + 1),
            Block::Phi(g, t) => write!(f, "phi[{},{}]", g + 1, t + 1),
            Block::Sigma => write!(f, "sigma"),
        }
    }
}

impl Block {
    pub(crate) fn range(&self, state: &ModelState) -> std::ops::Range<usize> {
        let d = state.dims;
        match *self {
            Block::Chi => 0..state.chi.len(),
            Block::Theta(t) => t * d.param..(t + 1) * d.param,
            Block::Phi(g, t) => {
                let o = d.phi_offset(g, t);
                o..o + d.senses
            }
            Block::Sigma => 0..state.sigma.len(),
        }
    }

    pub fn values<'s>(&self, state: &'s ModelState) -> &'s [f64] {
        let r = self.range(state);
        match self {
            Block::Chi => &state.chi[r],
            Block::Theta(_) => &state.theta[r],
            Block::Phi(..) => &state.phi[r],
            Block::Sigma => &state.sigma[r],
        }
    }

    pub fn values_mut<'s>(&self, state: &'s mut ModelState) -> &'s mut [f64] {
        let r = self.range(state);
        match self {
            Block::Chi => &mut state.chi[r],
            Block::Theta(_) => &mut state.theta[r],
            Block::Phi(..) => &mut state.phi[r],
            Block::Sigma => &mut state.sigma[r],
        }
    }

    fn check(&self, model: &Model<'_>) -> Result<()> {
        let d = model.dims();
        let ok = match *self {
            Block::Chi => true,
            Block::Theta(t) => t < d.times,
            Block::Phi(g, t) => g < d.genres && t < d.times,
            Block::Sigma => model.kind() == ModelKind::Edisc,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::param(format!("block {self} does not exist for this model")))
        }
    }
}

/// All blocks of a model in sampler order, time running forward.
pub fn blocks(model: &Model<'_>) -> Vec<Block> {
    let d = model.dims();
    let mut out = vec![Block::Chi];
    out.extend((0..d.times).map(Block::Theta));
    for t in 0..d.times {
        for g in 0..d.genres {
            out.push(Block::Phi(g, t));
        }
    }
    if model.kind() == ModelKind::Edisc {
        out.push(Block::Sigma);
    }
    out
}

/// Gradient of one block, same shape as the block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradBlock {
    pub block: Block,
    pub values: Vec<f64>,
}

/// `D x K` matrix of per-snippet sense posteriors at fixed parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Responsibilities {
    senses: usize,
    values: Vec<f64>,
}

impl Responsibilities {
    pub fn row(&self, d: usize) -> &[f64] {
        &self.values[d * self.senses..(d + 1) * self.senses]
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.senses
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

pub fn responsibilities(model: &Model<'_>, state: &ModelState) -> Result<Responsibilities> {
    let ws = model.workspace(state)?;
    let k = model.dims().senses;
    let mut values = vec![0.0; model.data().len() * k];
    model.sum_loglik(&ws, model.all_snippets(), &mut values);
    Ok(Responsibilities { senses: k, values })
}

/// Reusable buffers for block evaluations.
#[derive(Debug, Clone)]
pub(crate) struct Scratch {
    resp: Vec<f64>,
    /// `rho^T psi~[k, t]`, laid out `[k][t][j]`.
    proj: Vec<f64>,
}

impl Scratch {
    pub(crate) fn new(model: &Model<'_>) -> Self {
        let d = model.dims();
        Scratch {
            resp: vec![0.0; model.data().len() * d.senses],
            proj: vec![0.0; d.senses * d.times * d.param],
        }
    }
}

/// Brings the workspace up to date after `block` changed in `state`.
pub(crate) fn refresh(model: &Model<'_>, state: &ModelState, ws: &mut Workspace, block: Block) {
    match block {
        Block::Chi | Block::Sigma => {
            model.fill_psi(state, &mut ws.tables, None);
            model.fill_word_logp(&ws.tables, &mut ws.word_logp, model.all_snippets());
        }
        Block::Theta(t) => {
            model.fill_psi(state, &mut ws.tables, Some(t));
            model.fill_word_logp(&ws.tables, &mut ws.word_logp, model.snippets_at_time(t));
        }
        Block::Phi(g, t) => model.fill_phi(state, &mut ws.tables, Some((g, t))),
    }
}

fn block_prior(model: &Model<'_>, state: &ModelState, block: Block, grad: Option<&mut [f64]>) -> f64 {
    let hp = model.hyperparams();
    let d = state.dims;
    match block {
        Block::Chi => {
            if let Some(g) = grad {
                for (g, x) in g.iter_mut().zip(&state.chi) {
                    *g -= x / hp.kappa_chi;
                }
            }
            chi_log_density(&state.chi, hp)
        }
        Block::Sigma => {
            if let Some(g) = grad {
                for (g, x) in g.iter_mut().zip(&state.sigma) {
                    *g -= x / hp.kappa_sigma;
                }
            }
            sigma_log_density(&state.sigma, hp)
        }
        Block::Theta(t) => {
            let prev = (t > 0).then(|| state.theta_at(t - 1));
            let next = (t + 1 < d.times).then(|| state.theta_at(t + 1));
            let cur = state.theta_at(t);
            if let Some(g) = grad {
                ar1_grad(prev, cur, next, hp.alpha_theta, hp.kappa_theta, g);
            }
            ar1_log_density_at(prev, cur, next, hp.alpha_theta, hp.kappa_theta)
        }
        Block::Phi(g, t) => {
            let prev = (t > 0).then(|| state.phi_at(g, t - 1));
            let next = (t + 1 < d.times).then(|| state.phi_at(g, t + 1));
            let cur = state.phi_at(g, t);
            if let Some(out) = grad {
                ar1_grad(prev, cur, next, hp.alpha_phi, hp.kappa_phi, out);
            }
            ar1_log_density_at(prev, cur, next, hp.alpha_phi, hp.kappa_phi)
        }
    }
}

/// Fills `proj[k][t]` with `rho^T psi~[k, t]` for the given times.
fn project(model: &Model<'_>, ws: &Workspace, proj: &mut [f64], times: std::ops::Range<usize>) {
    let d = model.dims();
    for k in 0..d.senses {
        for t in times.clone() {
            let psi = ws.tables.psi_tilde(k, t);
            let out = &mut proj[(k * d.times + t) * d.param..][..d.param];
            for (j, o) in out.iter_mut().enumerate() {
                *o = model.rho_col(j).iter().zip(psi).map(|(r, p)| r * p).sum();
            }
        }
    }
}

/// Log conditional density of `block` (up to terms not involving it) at the
/// workspace's state, adding its gradient into `grad` when given.
///
/// The workspace must already reflect `state`.
pub(crate) fn eval_block(
    model: &Model<'_>,
    state: &ModelState,
    ws: &Workspace,
    scratch: &mut Scratch,
    block: Block,
    lambda: f64,
    mut grad: Option<&mut [f64]>,
) -> f64 {
    let dims = model.dims();
    let k_n = dims.senses;
    let p = dims.param;
    let snippets = match block {
        Block::Chi | Block::Sigma => model.all_snippets(),
        Block::Theta(t) => model.snippets_at_time(t),
        Block::Phi(g, t) => model.snippets_in_cell(g, t),
    };
    let ll = model.sum_loglik(ws, snippets, &mut scratch.resp);
    let prior = block_prior(model, state, block, grad.as_deref_mut());
    let Some(grad) = grad else {
        return prior + lambda * ll;
    };
    let data = &model.data().snippets;
    let resp = &scratch.resp;
    match (block, model.kind()) {
        (Block::Phi(g, t), _) => {
            let phi = ws.tables.phi_tilde(g, t);
            for &d in snippets {
                for k in 0..k_n {
                    grad[k] += lambda * (resp[d * k_n + k] - phi[k]);
                }
            }
        }
        (Block::Chi, ModelKind::Edisc) => {
            project(model, ws, &mut scratch.proj, 0..dims.times);
            for &d in snippets {
                let s = model.rho_sum(d);
                let len = data[d].words.len() as f64;
                let t = data[d].time;
                for k in 0..k_n {
                    let r = lambda * resp[d * k_n + k];
                    let u = &scratch.proj[(k * dims.times + t) * p..][..p];
                    let out = &mut grad[k * p..(k + 1) * p];
                    for j in 0..p {
                        out[j] += r * (s[j] - len * u[j]);
                    }
                }
            }
        }
        (Block::Theta(t), ModelKind::Edisc) => {
            project(model, ws, &mut scratch.proj, t..t + 1);
            for &d in snippets {
                let s = model.rho_sum(d);
                let len = data[d].words.len() as f64;
                for j in 0..p {
                    let mut mix = 0.0;
                    for k in 0..k_n {
                        mix += resp[d * k_n + k] * scratch.proj[(k * dims.times + t) * p + j];
                    }
                    grad[j] += lambda * (s[j] - len * mix);
                }
            }
        }
        (Block::Sigma, _) => {
            // Word counts minus expected counts, weights pooled per (k, t).
            let mut weight = vec![0.0; k_n * dims.times];
            for &d in snippets {
                let len = data[d].words.len() as f64;
                for k in 0..k_n {
                    weight[k * dims.times + data[d].time] += len * resp[d * k_n + k];
                }
            }
            for (g, n) in grad.iter_mut().zip(model.word_totals()) {
                *g += lambda * n;
            }
            for k in 0..k_n {
                for t in 0..dims.times {
                    let w = lambda * weight[k * dims.times + t];
                    for (g, psi) in grad.iter_mut().zip(ws.tables.psi_tilde(k, t)) {
                        *g -= w * psi;
                    }
                }
            }
        }
        (Block::Chi, ModelKind::Disc) => {
            for &d in snippets {
                let t = data[d].time;
                let len = data[d].words.len() as f64;
                for k in 0..k_n {
                    let r = lambda * resp[d * k_n + k];
                    disc_snippet_term(&data[d].words, len, ws.tables.psi_tilde(k, t), r, &mut grad[k * p..(k + 1) * p]);
                }
            }
        }
        (Block::Theta(t), ModelKind::Disc) => {
            for &d in snippets {
                let len = data[d].words.len() as f64;
                for k in 0..k_n {
                    let r = lambda * resp[d * k_n + k];
                    disc_snippet_term(&data[d].words, len, ws.tables.psi_tilde(k, t), r, grad);
                }
            }
        }
    }
    prior + lambda * ll
}

/// `out += r * (count_d - L_d psi~)` for one snippet and sense.
fn disc_snippet_term(words: &[u32], len: f64, psi: &[f64], r: f64, out: &mut [f64]) {
    for &w in words {
        out[w as usize] += r;
    }
    let scale = r * len;
    for (o, p) in out.iter_mut().zip(psi) {
        *o -= scale * p;
    }
}

/// Gradient of `log prior + lambda * log likelihood` with respect to `block`.
pub fn gradient(model: &Model<'_>, state: &ModelState, block: Block, lambda: f64) -> Result<GradBlock> {
    block.check(model)?;
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::param(format!("inverse temperature {lambda} outside [0, 1]")));
    }
    let ws = model.workspace(state)?;
    let mut scratch = Scratch::new(model);
    let mut values = vec![0.0; block.range(state).len()];
    eval_block(model, state, &ws, &mut scratch, block, lambda, Some(&mut values));
    if values.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite(format!("gradient of {block}")));
    }
    Ok(GradBlock { block, values })
}

fn require(model: &Model<'_>, kind: ModelKind) -> Result<()> {
    if model.kind() == kind {
        Ok(())
    } else {
        Err(Error::param(format!("gradient defined for {kind}, model is {}", model.kind())))
    }
}

/// `K x M` gradient for EDiSC's `chi`.
pub fn grad_chi(model: &Model<'_>, state: &ModelState, lambda: f64) -> Result<Vec<f64>> {
    require(model, ModelKind::Edisc)?;
    Ok(gradient(model, state, Block::Chi, lambda)?.values)
}

/// `M`-vector gradient for EDiSC's `theta[t]`.
pub fn grad_theta(model: &Model<'_>, state: &ModelState, lambda: f64, time: usize) -> Result<Vec<f64>> {
    require(model, ModelKind::Edisc)?;
    Ok(gradient(model, state, Block::Theta(time), lambda)?.values)
}

/// `V`-vector gradient for EDiSC's bias `sigma`.
pub fn grad_sigma_corr(model: &Model<'_>, state: &ModelState, lambda: f64) -> Result<Vec<f64>> {
    require(model, ModelKind::Edisc)?;
    Ok(gradient(model, state, Block::Sigma, lambda)?.values)
}

/// `K`-vector gradient for `phi[g, t]` (either model kind).
pub fn grad_phi(model: &Model<'_>, state: &ModelState, lambda: f64, genre: usize, time: usize) -> Result<Vec<f64>> {
    Ok(gradient(model, state, Block::Phi(genre, time), lambda)?.values)
}

/// `K x V` gradient for DiSC's `chi`.
pub fn grad_chi_disc(model: &Model<'_>, state: &ModelState, lambda: f64) -> Result<Vec<f64>> {
    require(model, ModelKind::Disc)?;
    Ok(gradient(model, state, Block::Chi, lambda)?.values)
}

/// `V`-vector gradient for DiSC's `theta[t]`.
pub fn grad_theta_disc(model: &Model<'_>, state: &ModelState, lambda: f64, time: usize) -> Result<Vec<f64>> {
    require(model, ModelKind::Disc)?;
    Ok(gradient(model, state, Block::Theta(time), lambda)?.values)
}

/// Outcome of comparing an analytic gradient with finite differences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteDiffReport {
    pub max_rel_error: f64,
    /// Coordinate where the maximum is attained.
    pub worst: usize,
    pub numeric: Vec<f64>,
}

/// Floor on the denominator of the relative error.
pub const REL_ERROR_FLOOR: f64 = 1e-8;

/// Compares `grad` with central differences of `f` around `point`.
///
/// Each coordinate uses Richardson extrapolation of the central difference at
/// `step` and `step / 2`, which cancels the `O(h^2)` term. The relative error
/// is `|g - fd| / max(|g|, |fd|, 1e-8)`.
pub fn finite_diff_check<F>(mut f: F, grad: &[f64], point: &[f64], step: f64) -> Result<FiniteDiffReport>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::param(format!("finite-difference step must be positive, got {step}")));
    }
    if grad.len() != point.len() {
        return Err(Error::Dimension {
            block: "gradient",
            expected: point.len(),
            found: grad.len(),
        });
    }
    let mut x = point.to_vec();
    let mut eval = |x: &[f64]| -> Result<f64> {
        let v = f(x)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFinite("finite-difference objective".into()))
        }
    };
    let mut numeric = Vec::with_capacity(point.len());
    let mut report = FiniteDiffReport {
        max_rel_error: 0.0,
        worst: 0,
        numeric: Vec::new(),
    };
    for j in 0..point.len() {
        let mut central = |h: f64| -> Result<f64> {
            x[j] = point[j] + h;
            let up = eval(&x)?;
            x[j] = point[j] - h;
            let down = eval(&x)?;
            x[j] = point[j];
            Ok((up - down) / (2.0 * h))
        };
        let coarse = central(step)?;
        let fine = central(step / 2.0)?;
        let fd = (4.0 * fine - coarse) / 3.0;
        let err = (grad[j] - fd).abs() / grad[j].abs().max(fd.abs()).max(REL_ERROR_FLOOR);
        if err > report.max_rel_error {
            report.max_rel_error = err;
            report.worst = j;
        }
        numeric.push(fd);
    }
    report.numeric = numeric;
    Ok(report)
}

/// Finite-difference check of one block against the full log-posterior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockCheck {
    pub block: Block,
    pub lambda: f64,
    pub max_rel_error: f64,
}

/// Checks every block of the model at `state` against central differences of
/// [`Model::log_posterior`].
pub fn check_gradients(model: &Model<'_>, state: &ModelState, lambda: f64, step: f64) -> Result<Vec<BlockCheck>> {
    let mut out = Vec::new();
    for block in blocks(model) {
        let analytic = gradient(model, state, block, lambda)?;
        let mut probe = state.clone();
        let point = block.values(state).to_vec();
        let report = finite_diff_check(
            |x| {
                block.values_mut(&mut probe).copy_from_slice(x);
                model.log_posterior(&probe, lambda)
            },
            &analytic.values,
            &point,
            step,
        )?;
        out.push(BlockCheck {
            block,
            lambda,
            max_rel_error: report.max_rel_error,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_is_exact() {
        let point = [0.3, -1.2, 2.0];
        let f = |x: &[f64]| Ok(x[0] * x[0] + 3.0 * x[1] * x[1] - x[0] * x[2] + 0.5 * x[2] * x[2]);
        let grad = [2.0 * 0.3 - 2.0, 6.0 * -1.2, -0.3 + 2.0];
        let r = finite_diff_check(f, &grad, &point, 1e-3).unwrap();
        assert!(r.max_rel_error < 1e-9, "{}", r.max_rel_error);
    }

    #[test]
    fn corrupted_gradient_flagged() {
        let point = [0.3, -1.2];
        let f = |x: &[f64]| Ok(x[0] * x[0] + x[1] * x[1]);
        let grad = [2.0 * 0.3 * 2.0, -2.4];
        let r = finite_diff_check(f, &grad, &point, 1e-3).unwrap();
        assert!(r.max_rel_error > 0.4);
        assert_eq!(r.worst, 0);
    }

    #[test]
    fn nonfinite_objective_errors() {
        let f = |x: &[f64]| Ok(if x[0] > 0.0 { f64::NAN } else { 0.0 });
        assert!(finite_diff_check(f, &[0.0], &[0.0], 1e-3).is_err());
        assert!(finite_diff_check(|_: &[f64]| Ok(0.0), &[0.0], &[0.0], 0.0).is_err());
    }
}
