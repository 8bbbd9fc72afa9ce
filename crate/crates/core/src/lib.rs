//! Markov-switching panic-regime factor stochastic volatility.
//!
//! Returns follow a one-factor-per-column stochastic volatility model with a
//! second "panic" factor that loads only on a random subset of at most `K`
//! assets. The subset is driven by a symmetric finite-state Markov chain, so
//! conditional on the log-volatility path the regime posterior is an exact
//! hidden Markov model filter. This crate provides:
//!
//! * [`selector`]: the regime state space and its transition kernel,
//! * [`model`]: parameters, priors, the simulator, observation densities and
//!   the scale/permutation/sign reparameterizations,
//! * [`hmm`]: exact forward filtering of the regime chain,
//! * [`filter`]: the Rao-Blackwellized particle filter and a plain SISR
//!   reference filter,
//! * [`pmmh`]: adaptive particle-marginal Metropolis-Hastings,
//! * [`oracles`]: brute-force likelihood and posterior references,
//! * [`forecast`]: forecast moments, minimum-variance portfolios, VaR and
//!   coverage backtests,
//! * [`io`]: CSV/TOML persistence used by the `msl` command-line tool.
//!
//! Replica-level work (averaging several filters per MCMC iteration, seed
//! replication, grid quadrature) runs on rayon when the `parallel` feature is
//! enabled and sequentially otherwise; results are identical either way.

// `!(x > 0.0)` is used deliberately so NaN fails domain checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod filter;
pub mod forecast;
pub mod hmm;
pub mod io;
pub mod linalg;
pub mod model;
pub mod oracles;
pub mod parallel;
pub mod pmmh;
pub mod rng;
pub mod selector;

pub use error::{Error, Result};
pub use filter::{rbpf_run, sisr_run, FilterConfig, FilterOutput, ParticleCloud, Rbpf};
pub use model::{MslParams, PreparedModel, PriorSpec};
pub use selector::{RegimeTransition, SelectorSpace};
