use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Edisc,
    Disc,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Edisc => "edisc",
            ModelKind::Disc => "disc",
        })
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "edisc" => Ok(ModelKind::Edisc),
            "disc" => Ok(ModelKind::Disc),
            other => Err(Error::param(format!("unknown model kind `{other}`"))),
        }
    }
}

/// Prior hyperparameters shared by both model kinds.
///
/// `alpha_*` are AR(1) coefficients over time, `kappa_*` innovation (or
/// marginal, for `chi` and `sigma`) variances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub kind: ModelKind,
    pub senses: usize,
    /// Embedding dimension `M`; ignored for DiSC.
    pub embed_dim: usize,
    pub alpha_phi: f64,
    pub alpha_theta: f64,
    pub kappa_phi: f64,
    pub kappa_theta: f64,
    pub kappa_chi: f64,
    pub kappa_sigma: f64,
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        if self.senses == 0 {
            return Err(Error::param("K must be >= 1"));
        }
        if self.kind == ModelKind::Edisc && self.embed_dim == 0 {
            return Err(Error::param("M must be >= 1 for EDiSC"));
        }
        for (name, a) in [("alpha_phi", self.alpha_phi), ("alpha_theta", self.alpha_theta)] {
            if !(a.abs() < 1.0) {
                return Err(Error::param(format!("|{name}| must be < 1, got {a}")));
            }
        }
        let mut kappas = vec![
            ("kappa_phi", self.kappa_phi),
            ("kappa_theta", self.kappa_theta),
            ("kappa_chi", self.kappa_chi),
        ];
        if self.kind == ModelKind::Edisc {
            kappas.push(("kappa_sigma", self.kappa_sigma));
        }
        for (name, k) in kappas {
            if !(k > 0.0 && k.is_finite()) {
                return Err(Error::param(format!("{name} must be positive, got {k}")));
            }
        }
        Ok(())
    }
}

/// `(log(1000) / 3)^2`: the variance making a thousand-fold gap in context
/// word probabilities a three-sigma event.
fn extreme_variance() -> f64 {
    (1000f64.ln() / 3.0).powi(2)
}

/// Rounded default hyperparameters.
///
/// EDiSC needs the median squared embedding distance `c`; its `kappa_chi`
/// and `kappa_theta` are `2.5/c` and `0.5/c`.
pub fn default_hyperparams(
    kind: ModelKind,
    senses: usize,
    embed_dim: usize,
    c: Option<f64>,
) -> Result<Hyperparams> {
    let (kappa_chi, kappa_theta, kappa_sigma) = match kind {
        ModelKind::Edisc => {
            let c = positive_scale(c)?;
            (2.5 / c, 0.5 / c, 0.25)
        }
        ModelKind::Disc => (1.25, 0.25, 0.25),
    };
    let hp = Hyperparams {
        kind,
        senses,
        embed_dim,
        alpha_phi: 0.9,
        alpha_theta: 0.9,
        kappa_phi: 0.25,
        kappa_theta,
        kappa_chi,
        kappa_sigma,
    };
    hp.validate()?;
    Ok(hp)
}

fn positive_scale(c: Option<f64>) -> Result<f64> {
    match c {
        Some(c) if c > 0.0 && c.is_finite() => Ok(c),
        Some(c) => Err(Error::param(format!("embedding scale c must be positive, got {c}"))),
        None => Err(Error::param("EDiSC hyperparameters need the embedding scale c")),
    }
}

/// Un-rounded EDiSC hyperparameters with a custom split `a_chi + a_theta = 1`
/// of the sense-time variance between `chi` and `theta`.
pub fn elicited_hyperparams(
    senses: usize,
    embed_dim: usize,
    c: f64,
    a_chi: f64,
) -> Result<Hyperparams> {
    let c = positive_scale(Some(c))?;
    if !(0.0..=1.0).contains(&a_chi) || a_chi == 0.0 || a_chi == 1.0 {
        return Err(Error::param(format!("a_chi must lie in (0, 1), got {a_chi}")));
    }
    let alpha = 0.9f64;
    let kappa_phi = (1.0 - alpha * alpha) / 2.0 * (100f64.ln() / 3.0).powi(2);
    let kappa_sigma = 0.5 * (10f64.ln() / 3.0).powi(2);
    let budget = (extreme_variance() - 2.0 * kappa_sigma) / c;
    let hp = Hyperparams {
        kind: ModelKind::Edisc,
        senses,
        embed_dim,
        alpha_phi: alpha,
        alpha_theta: alpha,
        kappa_phi,
        kappa_theta: (1.0 - a_chi) * (1.0 - alpha * alpha) * budget,
        kappa_chi: a_chi * budget,
        kappa_sigma,
    };
    hp.validate()?;
    Ok(hp)
}
