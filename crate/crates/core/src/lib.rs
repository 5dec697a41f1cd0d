//! Embedded diachronic sense change (EDiSC) and its predecessor DiSC.
//!
//! A target word's occurrences are cut into bags of context words
//! ([`corpus`]). Each bag has one latent sense; sense prevalence varies over
//! genres and time, and each sense's context-word distribution drifts over
//! time. EDiSC parameterizes those distributions through pre-trained word
//! embeddings ([`embeddings`]), which cuts the parameter count from `O(V)` to
//! `O(M)` per sense and time.
//!
//! [`model`] holds priors, likelihood and the simulator, [`gradients`] the
//! block gradients, [`samplers`] the HMC/MALA Gibbs sampler and
//! [`diagnostics`] everything computed from chains.

pub mod bench;
pub mod corpus;
pub mod diagnostics;
pub mod embeddings;
pub mod error;
pub mod gradients;
pub mod model;
pub mod samplers;

pub use error::{Error, Result};

#[cfg(doctest)]
pub mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub mod introduction {}
    #[doc = include_str!("../../../book/src/data.md")]
    pub mod data {}
    #[doc = include_str!("../../../book/src/embeddings.md")]
    pub mod embeddings {}
    #[doc = include_str!("../../../book/src/model.md")]
    pub mod model {}
    #[doc = include_str!("../../../book/src/sampling.md")]
    pub mod sampling {}
    #[doc = include_str!("../../../book/src/diagnostics.md")]
    pub mod diagnostics {}
    #[doc = include_str!("../../../book/src/cli.md")]
    pub mod cli {}
}
