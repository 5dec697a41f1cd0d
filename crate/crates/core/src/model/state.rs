use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::hyper::{Hyperparams, ModelKind};
use crate::error::{Error, Result};

const STATE_FORMAT: &str = "edisc-state";
const STATE_VERSION: u32 = 1;

/// Array extents shared by a state, its tables and the data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub genres: usize,
    pub times: usize,
    pub senses: usize,
    pub vocab: usize,
    /// Dimension of `chi[k]` and `theta[t]`: `M` for EDiSC, `V` for DiSC.
    pub param: usize,
}

impl Dims {
    pub fn new(kind: ModelKind, genres: usize, times: usize, senses: usize, vocab: usize, embed: usize) -> Self {
        let param = match kind {
            ModelKind::Edisc => embed,
            ModelKind::Disc => vocab,
        };
        Dims {
            genres,
            times,
            senses,
            vocab,
            param,
        }
    }

    pub fn cells(&self) -> usize {
        self.genres * self.times
    }

    pub fn phi_len(&self) -> usize {
        self.genres * self.times * self.senses
    }

    pub fn psi_len(&self) -> usize {
        self.senses * self.times * self.vocab
    }

    /// Offset of `phi[g, t, 0]`.
    pub fn phi_offset(&self, genre: usize, time: usize) -> usize {
        (genre * self.times + time) * self.senses
    }

    /// Offset of `psi[k, t, 0]`.
    pub fn psi_offset(&self, sense: usize, time: usize) -> usize {
        (sense * self.times + time) * self.vocab
    }
}

/// Real-valued parameter blocks.
///
/// Layouts: `phi[g][t][k]`, `theta[t][j]`, `chi[k][j]`, `sigma[v]`. `sigma`
/// stays at zero for DiSC.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelState {
    pub kind: ModelKind,
    pub dims: Dims,
    pub phi: Vec<f64>,
    pub theta: Vec<f64>,
    pub chi: Vec<f64>,
    pub sigma: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct StateFile {
    format: String,
    version: u32,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    hyperparams: Option<Hyperparams>,
    state: ModelState,
}

impl ModelState {
    pub fn zeros(kind: ModelKind, dims: Dims) -> Self {
        ModelState {
            kind,
            dims,
            phi: vec![0.0; dims.phi_len()],
            theta: vec![0.0; dims.times * dims.param],
            chi: vec![0.0; dims.senses * dims.param],
            sigma: vec![0.0; dims.vocab],
        }
    }

    /// Draws `phi`, `theta` and `chi` from the prior. `sigma` is drawn too
    /// when `with_sigma` is set and the model is EDiSC, otherwise it is zero.
    pub fn sample_prior<R: Rng + ?Sized>(hp: &Hyperparams, dims: Dims, with_sigma: bool, rng: &mut R) -> Self {
        let mut s = ModelState::zeros(hp.kind, dims);
        if with_sigma && hp.kind == ModelKind::Edisc {
            let sd = hp.kappa_sigma.sqrt();
            for x in &mut s.sigma {
                *x = sd * rng.sample::<f64, _>(StandardNormal);
            }
        }
        for g in 0..dims.genres {
            let series: Vec<usize> = (0..dims.times).map(|t| dims.phi_offset(g, t)).collect();
            sample_ar1(&mut s.phi, &series, dims.senses, hp.alpha_phi, hp.kappa_phi, rng);
        }
        let series: Vec<usize> = (0..dims.times).map(|t| t * dims.param).collect();
        sample_ar1(&mut s.theta, &series, dims.param, hp.alpha_theta, hp.kappa_theta, rng);
        let sd = hp.kappa_chi.sqrt();
        for x in &mut s.chi {
            *x = sd * rng.sample::<f64, _>(StandardNormal);
        }
        s
    }

    pub fn check(&self, expected: Dims) -> Result<()> {
        let d = self.dims;
        if d != expected {
            return Err(Error::param(format!("state dims {d:?} do not match {expected:?}")));
        }
        let blocks: [(&'static str, usize, usize); 4] = [
            ("phi", d.phi_len(), self.phi.len()),
            ("theta", d.times * d.param, self.theta.len()),
            ("chi", d.senses * d.param, self.chi.len()),
            ("sigma", d.vocab, self.sigma.len()),
        ];
        for (block, expected, found) in blocks {
            if expected != found {
                return Err(Error::Dimension {
                    block,
                    expected,
                    found,
                });
            }
        }
        for (name, block) in [("phi", &self.phi), ("theta", &self.theta), ("chi", &self.chi), ("sigma", &self.sigma)] {
            if block.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite(format!("state block {name}")));
            }
        }
        Ok(())
    }

    pub fn theta_at(&self, time: usize) -> &[f64] {
        &self.theta[time * self.dims.param..(time + 1) * self.dims.param]
    }

    pub fn chi_at(&self, sense: usize) -> &[f64] {
        &self.chi[sense * self.dims.param..(sense + 1) * self.dims.param]
    }

    pub fn phi_at(&self, genre: usize, time: usize) -> &[f64] {
        let o = self.dims.phi_offset(genre, time);
        &self.phi[o..o + self.dims.senses]
    }

    /// Saves the state (and optionally its hyperparameters) as versioned JSON.
    pub fn save(&self, path: &Path, hp: Option<&Hyperparams>) -> Result<()> {
        let file = StateFile {
            format: STATE_FORMAT.into(),
            version: STATE_VERSION,
            hyperparams: hp.copied(),
            state: self.clone(),
        };
        std::fs::write(path, serde_json::to_vec(&file)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<(ModelState, Option<Hyperparams>)> {
        let file: StateFile = serde_json::from_slice(&std::fs::read(path)?)?;
        if file.format != STATE_FORMAT || file.version != STATE_VERSION {
            return Err(Error::Format(format!("{} v{}", file.format, file.version)));
        }
        Ok((file.state, file.hyperparams))
    }
}

/// Fills an AR(1) series with stationary start. `offsets[t]` is where the
/// `width`-wide vector for time `t` starts in `out`.
fn sample_ar1<R: Rng + ?Sized>(out: &mut [f64], offsets: &[usize], width: usize, alpha: f64, kappa: f64, rng: &mut R) {
    let stationary_sd = (kappa / (1.0 - alpha * alpha)).sqrt();
    let sd = kappa.sqrt();
    for (t, &o) in offsets.iter().enumerate() {
        for j in 0..width {
            let z: f64 = rng.sample(StandardNormal);
            out[o + j] = if t == 0 {
                stationary_sd * z
            } else {
                alpha * out[offsets[t - 1] + j] + sd * z
            };
        }
    }
}
