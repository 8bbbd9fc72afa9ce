//! Particle filters over the log-volatility state.
//!
//! [`Rbpf`] samples only log-volatilities and carries an exact regime belief
//! per particle; [`Sisr`] samples regimes too and exists as a reference for
//! variance comparisons. Both resample multinomially and draw every random
//! number from a `(seed, step, particle)` stream.

mod cloud;
mod rbpf;
mod resample;
mod sisr;

pub use cloud::{filtered_expectation, ParticleCloud};
pub use rbpf::{rbpf_run, rbpf_run_with, BootstrapProposal, LogVolProposal, Rbpf};
pub use resample::multinomial_ancestors;
pub use sisr::{sisr_run, Sisr};

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// When to resample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Resampling {
    /// Multinomial resampling after every observation.
    EveryStep,
    /// Resample only when the effective sample size falls below this fraction of `n`.
    EssBelow(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterConfig {
    pub n_particles: usize,
    pub seed: u64,
    pub resampling: Resampling,
}

impl FilterConfig {
    pub fn new(n_particles: usize, seed: u64) -> Self {
        Self {
            n_particles,
            seed,
            resampling: Resampling::EveryStep,
        }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.n_particles == 0 {
            return Err(Error::Config("a filter needs at least one particle".into()));
        }
        if let Resampling::EssBelow(f) = self.resampling {
            if !(f > 0.0 && f <= 1.0) {
                return Err(Error::Config(format!("ESS threshold {f} must lie in (0, 1]")));
            }
        }
        Ok(())
    }
}

/// Per-step filter summary, computed before resampling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSummary {
    /// `log p~(y_t | y_{1:t-1})`.
    pub log_likelihood_increment: f64,
    /// Filtered probability that some asset is in a contained panic.
    pub panic_probability: f64,
    pub ess: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FilterOutput {
    pub increments: Vec<f64>,
    pub panic_probabilities: Vec<f64>,
    pub ess: Vec<f64>,
    pub log_likelihood: f64,
}

impl FilterOutput {
    pub(crate) fn push(&mut self, s: StepSummary) {
        self.increments.push(s.log_likelihood_increment);
        self.panic_probabilities.push(s.panic_probability);
        self.ess.push(s.ess);
        self.log_likelihood += s.log_likelihood_increment;
    }

    /// CSV trace with columns `t,loglik_increment,panic_probability,ess` (t is 1-based).
    pub fn write_trace<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "loglik_increment", "panic_probability", "ess"])?;
        for (t, ((inc, pp), ess)) in self
            .increments
            .iter()
            .zip(&self.panic_probabilities)
            .zip(&self.ess)
            .enumerate()
        {
            w.write_record([(t + 1).to_string(), inc.to_string(), pp.to_string(), ess.to_string()])?;
        }
        w.flush().map_err(|e| Error::io("trace", e))?;
        Ok(())
    }
}
