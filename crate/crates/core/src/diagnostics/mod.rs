//! Summaries of fitted chains: sense prediction and Brier scores, WAIC, HPD
//! intervals and regions, Savage-Dickey Bayes factors, effective sample
//! sizes and convergence checks.

mod hpd;
mod mcmc;
mod sense;
mod waic;

pub use hpd::{
    bayes_factor, hpd_interval, BayesFactor, HpdSet, KdeRegion, PriorSimulations, Region, DEFAULT_PRIOR_SIMS,
    MAX_REFERENCE_POINTS, MIN_HPD_DRAWS,
};
pub use mcmc::{
    align_chains, convergence_report, ess, ess_summary, split_rhat, top_words, ConvergenceReport, Ess, EssSummary,
    Spread, WindowStat, MIN_ESS_DRAWS, RHAT_LIMIT, TOP_WORDS_TRACKED, WINDOW,
};
pub use sense::{brier_score, sense_probabilities, surjections, uniform_brier, BrierScore, SenseMapping, SensePosterior};
pub use waic::{waic, waic_from_matrix, Waic, WAIC_VARIANCE_LIMIT};
