//! Particle-marginal Metropolis-Hastings.
//!
//! The chain moves in transformed coordinates (log for variances, scaled
//! logit for bounded parameters) with a Gaussian random walk whose
//! covariance adapts to the chain history inside a fixed window. Each
//! iteration averages the likelihoods of several independent RBPF replicas.

mod adapt;
mod chain;
mod layout;
mod summary;

pub use adapt::{adapt_covariance, AdaptSchedule, AdaptiveCovariance};
pub use chain::{
    averaged_log_likelihood, pmmh_run, prior_draw_start, replica_seed, ChainState, Decoded, MslTarget, PmmhConfig,
    PseudoMarginalTarget,
};
pub use layout::{Bijection, ParamLayout, ParamTransform, Slot};
pub use summary::{batch_means_mcse, quantile_sorted, summarize_chain, write_summary, SummaryRow};
