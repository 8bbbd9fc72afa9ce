//! Exact forward filtering of the regime chain given a log-volatility path.
//!
//! Conditional on log-volatility the regime process is a finite hidden Markov
//! model, so its filtering distribution and the conditional likelihood
//! increment are available in closed form. All accumulation is in log space.

use crate::error::{Error, Result};
use crate::model::{DensityWorkspace, PreparedModel};
use crate::selector::RegimeTransition;

/// Filtered regime probabilities for one particle.
#[derive(Debug, Clone, PartialEq)]
pub struct RegimeBelief {
    pub probs: Vec<f64>,
    /// Log normalizer of the most recent update.
    pub log_norm: f64,
}

/// Bayes update of a predictive regime distribution with per-regime
/// log-densities. On return `probs` holds the posterior and the log normalizer
/// is returned. If every regime has zero density `probs` is left as the
/// predictive and `-inf` is returned.
#[inline]
pub(crate) fn update_in_place(probs: &mut [f64], log_dens: &[f64]) -> f64 {
    let mut max = f64::NEG_INFINITY;
    for (&p, &l) in probs.iter().zip(log_dens) {
        if p > 0.0 && l > max {
            max = l;
        }
    }
    if !max.is_finite() {
        return f64::NEG_INFINITY;
    }
    let mut total = 0.0;
    for (p, &l) in probs.iter_mut().zip(log_dens) {
        *p *= (l - max).exp();
        total += *p;
    }
    if !(total > 0.0) {
        return f64::NEG_INFINITY;
    }
    let inv = 1.0 / total;
    probs.iter_mut().for_each(|p| *p *= inv);
    max + total.ln()
}

fn finish(mut probs: Vec<f64>, log_dens: &[f64]) -> Result<(RegimeBelief, f64)> {
    let log_norm = update_in_place(&mut probs, log_dens);
    if !log_norm.is_finite() {
        return Err(Error::FilterDivergence);
    }
    Ok((RegimeBelief { probs, log_norm }, log_norm))
}

/// First filtering step from the uniform (stationary) regime law. Returns the
/// posterior belief and `log p(y_1 | x_1)` with regimes integrated out.
pub fn hmm_init(model: &PreparedModel, logvol: &[f64], y: &[f64]) -> Result<(RegimeBelief, f64)> {
    let n = model.n_regimes();
    let mut ws = model.workspace();
    let mut log_dens = vec![0.0; n];
    model.regime_log_densities(logvol, y, &mut log_dens, &mut ws)?;
    finish(vec![1.0 / n as f64; n], &log_dens)
}

/// One predict/update step. Returns the new belief and
/// `log p(y_t | y_{1:t-1}, x_{1:t})`.
pub fn hmm_step(belief: &RegimeBelief, model: &PreparedModel, logvol: &[f64], y: &[f64]) -> Result<(RegimeBelief, f64)> {
    let mut ws = model.workspace();
    hmm_step_with(belief, model, logvol, y, &mut ws)
}

pub(crate) fn hmm_step_with(
    belief: &RegimeBelief,
    model: &PreparedModel,
    logvol: &[f64],
    y: &[f64],
    ws: &mut DensityWorkspace,
) -> Result<(RegimeBelief, f64)> {
    let n = model.n_regimes();
    let mut log_dens = vec![0.0; n];
    model.regime_log_densities(logvol, y, &mut log_dens, ws)?;
    finish(regime_predictive(belief, model.transition()), &log_dens)
}

/// One-step-ahead regime distribution `Pi' probs`.
pub fn regime_predictive(belief: &RegimeBelief, transition: &RegimeTransition) -> Vec<f64> {
    let mut out = vec![0.0; belief.probs.len()];
    transition.predict_into(&belief.probs, &mut out);
    out
}

/// Exact log-likelihood of `ys` given a complete log-volatility path, by one
/// forward pass.
pub fn forward_log_likelihood(model: &PreparedModel, logvol_path: &[Vec<f64>], ys: &[Vec<f64>]) -> Result<f64> {
    if logvol_path.len() != ys.len() || ys.is_empty() {
        return Err(Error::Config(
            "log-volatility path and data must have equal, non-zero length".into(),
        ));
    }
    let mut ws = model.workspace();
    let (mut belief, mut total) = hmm_init(model, &logvol_path[0], &ys[0])?;
    for (x, y) in logvol_path.iter().zip(ys).skip(1) {
        let (next, inc) = hmm_step_with(&belief, model, x, y, &mut ws)?;
        belief = next;
        total += inc;
    }
    Ok(total)
}
