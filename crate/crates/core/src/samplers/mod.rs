//! Metropolis-within-Gibbs HMC and MALA over the blocks `chi`, `theta[t]`,
//! `phi[g, t]` and `sigma`, with a tempered burn-in and adaptive step sizes.
//!
//! Each iteration updates `chi`, then every `theta[t]`, then every
//! `phi[g, t]`, then `sigma` (EDiSC only). Time runs forward on odd
//! iterations and backward on even ones. A block update is a full HMC
//! transition targeting the block's conditional posterior; MALA is the
//! one-leapfrog-step special case.

mod chain;

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::corpus::SnippetDataset;
use crate::error::{Error, Result};
use crate::gradients::{eval_block, refresh, Block, Scratch};
use crate::model::{ar1_grad, ar1_log_density_at, log_softmax_in_place, Dims, Hyperparams, Model, ModelKind, ModelState, Workspace};

pub use chain::{BlockStats, Chain, ChainMeta};

/// Target acceptance rate for HMC.
pub const HMC_ALPHA_OPT: f64 = 0.651;
/// Target acceptance rate for MALA.
pub const MALA_ALPHA_OPT: f64 = 0.574;

/// Leapfrog steps per block kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Leapfrog {
    pub chi: usize,
    pub theta: usize,
    pub phi: usize,
    pub sigma: usize,
}

impl Leapfrog {
    pub fn uniform(steps: usize) -> Self {
        Leapfrog {
            chi: steps,
            theta: steps,
            phi: steps,
            sigma: steps,
        }
    }

    pub fn for_block(&self, block: Block) -> usize {
        match block {
            Block::Chi => self.chi,
            Block::Theta(_) => self.theta,
            Block::Phi(..) => self.phi,
            Block::Sigma => self.sigma,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    /// Total iterations `N`.
    pub iterations: usize,
    /// Tempering horizon `N_temp`; 0 disables tempering.
    pub temper_iterations: usize,
    pub lambda_min: f64,
    pub beta: f64,
    pub leapfrog: Leapfrog,
    /// Window `N_tune` for the running acceptance rate.
    pub tune_window: usize,
    /// Last tuning iteration `N_stop`.
    pub tune_stop: usize,
    pub alpha_opt: f64,
    pub thin: usize,
    pub seed: u64,
    pub temper_phi: bool,
    pub temper_chi: bool,
}

impl SamplerConfig {
    /// HMC defaults: 10 leapfrog steps for `chi`, 5 elsewhere, tuning until
    /// `N/2`, target acceptance 0.651.
    pub fn hmc(iterations: usize, seed: u64) -> Self {
        SamplerConfig {
            iterations,
            temper_iterations: 0,
            lambda_min: 0.1,
            beta: 1.0 / 3.0,
            leapfrog: Leapfrog {
                chi: 10,
                theta: 5,
                phi: 5,
                sigma: 5,
            },
            tune_window: 10,
            tune_stop: iterations / 2,
            alpha_opt: HMC_ALPHA_OPT,
            thin: 1,
            seed,
            temper_phi: true,
            temper_chi: true,
        }
    }

    /// MALA defaults: one leapfrog step everywhere, target acceptance 0.574.
    pub fn mala(iterations: usize, seed: u64) -> Self {
        SamplerConfig {
            leapfrog: Leapfrog::uniform(1),
            alpha_opt: MALA_ALPHA_OPT,
            ..SamplerConfig::hmc(iterations, seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_min > 0.0 && self.lambda_min <= 1.0) {
            return Err(Error::param(format!("lambda_min must lie in (0, 1], got {}", self.lambda_min)));
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(Error::param(format!("beta must lie in (0, 1], got {}", self.beta)));
        }
        if self.temper_iterations > self.iterations {
            return Err(Error::param("N_temp must not exceed N"));
        }
        if self.thin == 0 {
            return Err(Error::param("thin must be >= 1"));
        }
        if self.tune_window == 0 {
            return Err(Error::param("N_tune must be >= 1"));
        }
        let lf = self.leapfrog;
        if [lf.chi, lf.theta, lf.phi, lf.sigma].contains(&0) {
            return Err(Error::param("leapfrog steps must be >= 1"));
        }
        if !(self.alpha_opt > 0.0 && self.alpha_opt < 1.0) {
            return Err(Error::param("alpha_opt must lie in (0, 1)"));
        }
        Ok(())
    }

    /// Iterations discarded before storing draws: `max(N_temp, N_stop)`.
    pub fn burn_in(&self) -> usize {
        self.temper_iterations.max(self.tune_stop).min(self.iterations)
    }

    /// Number of stored draws, `floor((N - burn) / thin)`.
    pub fn stored_draws(&self) -> usize {
        (self.iterations - self.burn_in()) / self.thin
    }

    fn tempers(&self, block: Block) -> bool {
        match block {
            Block::Chi => self.temper_chi,
            Block::Phi(..) => self.temper_phi,
            _ => false,
        }
    }
}

/// Inverse temperature `lambda_min + (1 - lambda_min) (n / N_temp)^beta`
/// for `n <= N_temp`, and 1 afterwards.
pub fn tempering_lambda(n: usize, cfg: &SamplerConfig) -> f64 {
    if n >= cfg.temper_iterations {
        return 1.0;
    }
    let frac = n as f64 / cfg.temper_iterations as f64;
    cfg.lambda_min + (1.0 - cfg.lambda_min) * frac.powf(cfg.beta)
}

/// Result of one HMC transition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HmcOutcome {
    pub accepted: bool,
    /// `min(1, exp(H0 - H1))`, 0 when an energy was not finite.
    pub accept_prob: f64,
    /// `H1 - H0`.
    pub energy_error: f64,
    pub nonfinite: bool,
}

/// One HMC transition on `x` with step `sqrt(sigma2)` and `leapfrog` steps.
///
/// `target(x, grad)` returns `log pi(x)` and overwrites `grad` with its
/// gradient. On rejection `x` is restored. The momentum is drawn before any
/// other random number, and the accept uniform after the trajectory.
pub fn hmc_step<R, F>(x: &mut [f64], mut target: F, sigma2: f64, leapfrog: usize, rng: &mut R) -> HmcOutcome
where
    R: Rng + ?Sized,
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let eps = sigma2.sqrt();
    let n = x.len();
    let x0 = x.to_vec();
    let mut q: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let mut grad = vec![0.0; n];
    let lp0 = target(x, &mut grad);
    let h0 = -lp0 + 0.5 * q.iter().map(|v| v * v).sum::<f64>();
    for (qi, gi) in q.iter_mut().zip(&grad) {
        *qi += 0.5 * eps * gi;
    }
    let mut lp1 = lp0;
    for l in 1..=leapfrog {
        for (xi, qi) in x.iter_mut().zip(&q) {
            *xi += eps * qi;
        }
        lp1 = target(x, &mut grad);
        if l != leapfrog {
            for (qi, gi) in q.iter_mut().zip(&grad) {
                *qi += eps * gi;
            }
        }
    }
    for (qi, gi) in q.iter_mut().zip(&grad) {
        *qi += 0.5 * eps * gi;
    }
    let h1 = -lp1 + 0.5 * q.iter().map(|v| v * v).sum::<f64>();
    let u: f64 = rng.random();
    let finite = h0.is_finite() && h1.is_finite() && grad.iter().all(|g| g.is_finite());
    let accept_prob = if finite { (h0 - h1).exp().min(1.0) } else { 0.0 };
    let accepted = finite && u < accept_prob;
    if !accepted {
        x.copy_from_slice(&x0);
    }
    HmcOutcome {
        accepted,
        accept_prob,
        energy_error: h1 - h0,
        nonfinite: !finite,
    }
}

/// Initial `sigma^2` for a block: `2.4^2 / (size * LF)` with size `K` for
/// `phi`, `(PK)^2` for `chi`, `P^2` for `theta` and `V` for `sigma`, where
/// `P` is the dimension of `chi[k]`.
pub fn initial_scale(block: Block, dims: Dims, leapfrog: usize) -> f64 {
    let p = dims.param as f64;
    let size = match block {
        Block::Phi(..) => dims.senses as f64,
        Block::Chi => (p * dims.senses as f64).powi(2),
        Block::Theta(_) => p * p,
        Block::Sigma => dims.vocab as f64,
    };
    2.4 * 2.4 / (size * leapfrog as f64)
}

/// Starting point of a chain.
#[derive(Debug, Clone)]
pub enum Init {
    /// Draw `phi`, `theta`, `chi` from the prior with `sigma = 0`.
    Prior,
    State(ModelState),
}

/// Step-size adaptation and acceptance bookkeeping for one block.
#[derive(Debug, Clone)]
struct Tuner {
    log_scale: f64,
    recent: Vec<bool>,
    stats: BlockStats,
}

impl Tuner {
    fn new(block: Block, scale: f64, window: usize) -> Self {
        Tuner {
            log_scale: scale.ln(),
            recent: Vec::with_capacity(window),
            stats: BlockStats {
                block,
                scale,
                proposals: 0,
                accepted: 0,
                nonfinite: 0,
                proposals_after_tuning: 0,
                accepted_after_tuning: 0,
            },
        }
    }

    fn record(&mut self, n: usize, out: &HmcOutcome, cfg: &SamplerConfig) {
        let s = &mut self.stats;
        s.proposals += 1;
        s.accepted += out.accepted as u64;
        s.nonfinite += out.nonfinite as u64;
        if n > cfg.tune_stop {
            s.proposals_after_tuning += 1;
            s.accepted_after_tuning += out.accepted as u64;
        }
        if self.recent.len() == cfg.tune_window {
            self.recent.remove(0);
        }
        self.recent.push(out.accepted);
        if n >= cfg.tune_window && n <= cfg.tune_stop {
            let rate = self.recent.iter().filter(|&&a| a).count() as f64 / cfg.tune_window as f64;
            let c = ((n + 1) as f64 / cfg.tune_window as f64).powf(-0.8);
            self.log_scale += c * (rate - cfg.alpha_opt);
            s.scale = self.log_scale.exp();
        }
    }
}

fn chain_rng(seed: u64, chain: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chain as u64);
    rng
}

fn initial_state(model: &Model<'_>, init: &Init, rng: &mut ChaCha8Rng) -> Result<ModelState> {
    match init {
        Init::State(s) => {
            let lp = model.log_posterior(s, 1.0)?;
            if !lp.is_finite() {
                return Err(Error::NonFinite("log-posterior at the provided initial state".into()));
            }
            Ok(s.clone())
        }
        Init::Prior => {
            for _ in 0..100 {
                let s = model.sample_initial_state(rng);
                if model.log_posterior(&s, 1.0)?.is_finite() {
                    return Ok(s);
                }
            }
            Err(Error::NonFinite(
                "log-posterior at 100 consecutive prior draws; check the data and hyperparameters".into(),
            ))
        }
    }
}

/// Order of blocks in iteration `n` (1-based).
fn iteration_blocks(dims: Dims, kind: ModelKind, n: usize) -> Vec<Block> {
    let times: Vec<usize> = if n % 2 == 1 {
        (0..dims.times).collect()
    } else {
        (0..dims.times).rev().collect()
    };
    let mut out = vec![Block::Chi];
    out.extend(times.iter().map(|&t| Block::Theta(t)));
    for &t in &times {
        out.extend((0..dims.genres).map(|g| Block::Phi(g, t)));
    }
    if kind == ModelKind::Edisc {
        out.push(Block::Sigma);
    }
    out
}

impl Workspace {
    fn copy_from(&mut self, other: &Workspace) {
        self.tables.phi.copy_from_slice(&other.tables.phi);
        self.tables.log_phi.copy_from_slice(&other.tables.log_phi);
        self.tables.psi.copy_from_slice(&other.tables.psi);
        self.tables.log_psi.copy_from_slice(&other.tables.log_psi);
        self.word_logp.copy_from_slice(&other.word_logp);
    }

    /// Copies from `other` only the parts that a proposal for `block` can
    /// change.
    fn copy_block_from(&mut self, other: &Workspace, model: &Model<'_>, block: Block) {
        let d = model.dims();
        match block {
            Block::Chi | Block::Sigma => self.copy_from(other),
            Block::Theta(t) => {
                for k in 0..d.senses {
                    let r = d.psi_offset(k, t)..d.psi_offset(k, t) + d.vocab;
                    self.tables.psi[r.clone()].copy_from_slice(&other.tables.psi[r.clone()]);
                    self.tables.log_psi[r.clone()].copy_from_slice(&other.tables.log_psi[r]);
                }
                let k_n = d.senses;
                for &i in model.snippets_at_time(t) {
                    let r = i * k_n..(i + 1) * k_n;
                    self.word_logp[r.clone()].copy_from_slice(&other.word_logp[r]);
                }
            }
            Block::Phi(g, t) => {
                let r = d.phi_offset(g, t)..d.phi_offset(g, t) + d.senses;
                self.tables.phi[r.clone()].copy_from_slice(&other.tables.phi[r.clone()]);
                self.tables.log_phi[r.clone()].copy_from_slice(&other.tables.log_phi[r]);
            }
        }
    }
}

/// Runs one chain of the block sampler. `chain` selects an independent
/// random stream of `cfg.seed`.
pub fn run_chain(model: &Model<'_>, cfg: &SamplerConfig, init: &Init, chain: usize) -> Result<Chain> {
    cfg.validate()?;
    let start = Instant::now();
    let dims = model.dims();
    let kind = model.kind();
    let mut rng = chain_rng(cfg.seed, chain);
    let mut state = initial_state(model, init, &mut rng)?;
    let mut ws = model.workspace(&state)?;
    let mut backup = ws.clone();
    let mut scratch = Scratch::new(model);

    let mut tuners: Vec<Tuner> = crate::gradients::blocks(model)
        .into_iter()
        .map(|b| {
            let scale = initial_scale(b, dims, cfg.leapfrog.for_block(b));
            Tuner::new(b, scale, cfg.tune_window)
        })
        .collect();
    let tuner_index = |b: Block| -> usize {
        match b {
            Block::Chi => 0,
            Block::Theta(t) => 1 + t,
            Block::Phi(g, t) => 1 + dims.times + t * dims.genres + g,
            Block::Sigma => 1 + dims.times + dims.cells(),
        }
    };

    let d_n = model.data().len();
    let n_draws = cfg.stored_draws();
    let burn = cfg.burn_in();
    let mut phi_draws = Vec::with_capacity(n_draws * dims.phi_len());
    let mut psi_draws = Vec::with_capacity(n_draws * dims.psi_len());
    let mut loglik = Vec::with_capacity(n_draws * d_n);

    for n in 1..=cfg.iterations {
        for block in iteration_blocks(dims, kind, n) {
            let lambda = if cfg.tempers(block) { tempering_lambda(n, cfg) } else { 1.0 };
            let tuner = &mut tuners[tuner_index(block)];
            backup.copy_block_from(&ws, model, block);
            let mut x = block.values(&state).to_vec();
            let mut current = true;
            let outcome = hmc_step(
                &mut x,
                |x, grad| {
                    if !current {
                        block.values_mut(&mut state).copy_from_slice(x);
                        refresh(model, &state, &mut ws, block);
                    }
                    current = false;
                    grad.iter_mut().for_each(|g| *g = 0.0);
                    eval_block(model, &state, &ws, &mut scratch, block, lambda, Some(grad))
                },
                tuner.stats.scale,
                cfg.leapfrog.for_block(block),
                &mut rng,
            );
            block.values_mut(&mut state).copy_from_slice(&x);
            if !outcome.accepted {
                ws.copy_block_from(&backup, model, block);
            }
            tuner.record(n, &outcome, cfg);
        }
        if n > burn && (n - burn).is_multiple_of(cfg.thin) {
            phi_draws.extend_from_slice(&ws.tables.phi);
            psi_draws.extend_from_slice(&ws.tables.psi);
            loglik.extend((0..d_n).map(|d| model.snippet_loglik(&ws, d, None)));
        }
    }

    Ok(Chain {
        meta: ChainMeta {
            kind,
            dims,
            hyperparams: *model.hyperparams(),
            config: cfg.clone(),
            chain,
            labelled: false,
            snippets: d_n,
            draws: n_draws,
            blocks: tuners.into_iter().map(|t| t.stats).collect(),
            wall_seconds: start.elapsed().as_secs_f64(),
            config_hash: None,
        },
        phi: phi_draws,
        psi: psi_draws,
        loglik,
        final_state: state,
    })
}

/// HMC with the given config (leapfrog counts as configured).
pub fn run_hmc(model: &Model<'_>, cfg: &SamplerConfig, init: &Init) -> Result<Chain> {
    run_chain(model, cfg, init, 0)
}

/// MALA: the config with one leapfrog step for every block and target
/// acceptance 0.574.
pub fn run_mala(model: &Model<'_>, cfg: &SamplerConfig, init: &Init) -> Result<Chain> {
    let cfg = SamplerConfig {
        leapfrog: Leapfrog::uniform(1),
        alpha_opt: MALA_ALPHA_OPT,
        ..cfg.clone()
    };
    run_chain(model, &cfg, init, 0)
}

/// Several independent chains, each from its own prior draw. Chains run on
/// scoped threads when `parallel` is set; results do not depend on it.
pub fn run_chains(model: &Model<'_>, cfg: &SamplerConfig, chains: usize, parallel: bool) -> Result<Vec<Chain>> {
    if chains == 0 {
        return Err(Error::param("need at least one chain"));
    }
    if parallel {
        std::thread::scope(|s| {
            let handles: Vec<_> = (0..chains)
                .map(|c| s.spawn(move || run_chain(model, cfg, &Init::Prior, c)))
                .collect();
            handles.into_iter().map(|h| h.join().expect("chain thread panicked")).collect()
        })
    } else {
        (0..chains).map(|c| run_chain(model, cfg, &Init::Prior, c)).collect()
    }
}

/// Samples `phi` given the observed sense labels: the likelihood is
/// `prod_d phi~[o_d]` at each snippet's (genre, time). The number of senses
/// is the dataset's `K'`; the `phi` hyperparameters come from `hp`.
pub fn run_labelled(data: &SnippetDataset, hp: &Hyperparams, cfg: &SamplerConfig) -> Result<Chain> {
    cfg.validate()?;
    let start = Instant::now();
    let k_n = data.true_senses;
    if k_n == 0 {
        return Err(Error::param("labelled fit needs K' >= 1"));
    }
    let hp = Hyperparams { senses: k_n, ..*hp };
    hp.validate()?;
    let dims = Dims::new(hp.kind, data.genres, data.times, k_n, data.vocab_size(), hp.embed_dim);
    let mut counts = vec![0.0; dims.phi_len()];
    for (index, s) in data.snippets.iter().enumerate() {
        let k = s.true_sense.ok_or(Error::InvalidSnippet {
            index,
            field: "true_sense",
            message: "labelled fit needs every snippet labelled".into(),
        })?;
        if k >= k_n || s.genre >= dims.genres || s.time >= dims.times {
            return Err(Error::InvalidSnippet {
                index,
                field: "true_sense",
                message: "label or cell outside declared dimensions".into(),
            });
        }
        counts[dims.phi_offset(s.genre, s.time) + k] += 1.0;
    }

    let mut rng = chain_rng(cfg.seed, 0);
    // Only phi is drawn, so the random stream does not depend on the word blocks.
    let phi_dims = Dims::new(ModelKind::Disc, dims.genres, dims.times, k_n, 0, 0);
    let mut state = ModelState::zeros(hp.kind, dims);
    state.phi = ModelState::sample_prior(&hp, phi_dims, false, &mut rng).phi;
    let mut tuners: Vec<Tuner> = (0..dims.times)
        .flat_map(|t| (0..dims.genres).map(move |g| Block::Phi(g, t)))
        .map(|b| Tuner::new(b, initial_scale(b, dims, cfg.leapfrog.phi), cfg.tune_window))
        .collect();
    let n_draws = cfg.stored_draws();
    let burn = cfg.burn_in();
    let mut phi_draws = Vec::with_capacity(n_draws * dims.phi_len());
    let mut probs = vec![0.0; k_n];

    for n in 1..=cfg.iterations {
        let times: Vec<usize> = if n % 2 == 1 {
            (0..dims.times).collect()
        } else {
            (0..dims.times).rev().collect()
        };
        for &t in &times {
            for g in 0..dims.genres {
                let lambda = if cfg.temper_phi { tempering_lambda(n, cfg) } else { 1.0 };
                let o = dims.phi_offset(g, t);
                let cell = &counts[o..o + k_n];
                let total: f64 = cell.iter().sum();
                let prev = (t > 0).then(|| state.phi_at(g, t - 1).to_vec());
                let next = (t + 1 < dims.times).then(|| state.phi_at(g, t + 1).to_vec());
                let mut x = state.phi_at(g, t).to_vec();
                let tuner = &mut tuners[t * dims.genres + g];
                let outcome = hmc_step(
                    &mut x,
                    |x, grad| {
                        probs.copy_from_slice(x);
                        log_softmax_in_place(&mut probs);
                        let ll: f64 = cell.iter().zip(&probs).map(|(c, lp)| c * lp).sum();
                        for k in 0..k_n {
                            grad[k] = lambda * (cell[k] - total * probs[k].exp());
                        }
                        ar1_grad(prev.as_deref(), x, next.as_deref(), hp.alpha_phi, hp.kappa_phi, grad);
                        lambda * ll + ar1_log_density_at(prev.as_deref(), x, next.as_deref(), hp.alpha_phi, hp.kappa_phi)
                    },
                    tuner.stats.scale,
                    cfg.leapfrog.phi,
                    &mut rng,
                );
                state.phi[o..o + k_n].copy_from_slice(&x);
                tuner.record(n, &outcome, cfg);
            }
        }
        if n > burn && (n - burn).is_multiple_of(cfg.thin) {
            for g in 0..dims.genres {
                for t in 0..dims.times {
                    probs.copy_from_slice(state.phi_at(g, t));
                    log_softmax_in_place(&mut probs);
                    phi_draws.extend(probs.iter().map(|lp| lp.exp()));
                }
            }
        }
    }

    Ok(Chain {
        meta: ChainMeta {
            kind: hp.kind,
            dims,
            hyperparams: hp,
            config: cfg.clone(),
            chain: 0,
            labelled: true,
            snippets: data.len(),
            draws: n_draws,
            blocks: tuners.into_iter().map(|t| t.stats).collect(),
            wall_seconds: start.elapsed().as_secs_f64(),
            config_hash: None,
        },
        phi: phi_draws,
        psi: Vec::new(),
        loglik: Vec::new(),
        final_state: state,
    })
}
