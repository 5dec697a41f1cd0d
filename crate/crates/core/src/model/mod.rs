//! EDiSC and DiSC: parameter layout, priors, likelihood and the generative
//! simulator.
//!
//! Both models share the observation model. Each snippet `d` draws a sense
//! from `softmax(phi[genre, time])` and then its context words i.i.d. from
//! `softmax(psi[sense, time])`. They differ in how `psi` is built:
//!
//! * EDiSC: `psi[k, t] = rho (chi[k] + theta[t]) + sigma`, with `chi` and
//!   `theta` living in the `M`-dimensional embedding space;
//! * DiSC: `psi[k, t] = chi[k] + theta[t]`, with `chi` and `theta` in `V`
//!   dimensions and no bias term.

mod hyper;
mod likelihood;
mod prior;
mod simulate;
mod state;

pub use hyper::{default_hyperparams, elicited_hyperparams, Hyperparams, ModelKind};
pub use likelihood::{log_softmax, softmax, LogLikelihood, Model, ProbabilityTables};
pub use prior::{log_prior, LogPrior};
pub use simulate::{simulate, SimulationSpec};
pub use state::{Dims, ModelState};

pub(crate) use likelihood::{log_softmax_in_place, log_sum_exp, Workspace};
pub(crate) use prior::{ar1_grad, ar1_log_density_at, chi_log_density, sigma_log_density};
