//! One-step-ahead forecasts and the out-of-sample portfolio backtest.
//!
//! The forecast mean is `B lambda` at every step. The forecast covariance
//! averages, over particles, the expected conditional covariance of the next
//! observation given each particle's log-volatility and regime belief.

mod backtest;
mod coverage;

pub use backtest::{run_backtest, BacktestConfig, BacktestReport, StartMode, VarMode, WeekRecord};
pub use coverage::{coverage_tests, CoverageReport};

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::filter::ParticleCloud;
use crate::model::PreparedModel;

/// Mean and covariance of the next observation.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastMoments {
    pub mean: Vec<f64>,
    pub cov: DMatrix<f64>,
}

/// `P[a][b] = sum_j pi[j] d_j[a] d_j[b]`: probability that assets `a` and `b`
/// both load on the panic factor.
fn inclusion_matrix(model: &PreparedModel, probs: &[f64]) -> DMatrix<f64> {
    let d_y = model.d_y();
    let mut p = DMatrix::zeros(d_y, d_y);
    for (&mask, &pi) in model.space().masks().iter().zip(probs) {
        if mask == 0 || pi == 0.0 {
            continue;
        }
        for a in (0..d_y).filter(|a| (mask >> a) & 1 == 1) {
            for b in (0..d_y).filter(|b| (mask >> b) & 1 == 1) {
                p[(a, b)] += pi;
            }
        }
    }
    p
}

/// Assemble `sum_k m_k B_k B_k' + sum_k n_k (P o B_k B_k') + R` from the
/// expected factor variances `m` (market) and `n` (panic).
fn assemble(model: &PreparedModel, market: &[f64], panic: &[f64], inclusion: &DMatrix<f64>) -> DMatrix<f64> {
    let d_y = model.d_y();
    let mut cov = DMatrix::from_diagonal(&DVector::from_column_slice(&model.theta().idio_var));
    for k in 0..model.d_f() {
        let outer = model.outer(k);
        for a in 0..d_y {
            for b in 0..d_y {
                let o = outer[a * d_y + b];
                cov[(a, b)] += market[k] * o + panic[k] * inclusion[(a, b)] * o;
            }
        }
    }
    cov
}

/// `E[exp(x_{t+1,k}) | x_t]` for each log-volatility component.
fn expected_scales(model: &PreparedModel, logvol: &[f64]) -> Vec<f64> {
    let theta = model.theta();
    logvol
        .iter()
        .enumerate()
        .map(|(k, &x)| {
            let mu = theta.logvol_mean[k];
            (mu + theta.persistence[k] * (x - mu) + 0.5 * theta.innovation_var[k]).exp()
        })
        .collect()
}

/// Predicted regime distribution for the next step from a filtered belief.
fn predicted(model: &PreparedModel, belief: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; belief.len()];
    model.transition().predict_into(belief, &mut out);
    out
}

/// Forecast covariance of `y_{t+1}` implied by one particle.
pub fn particle_forecast_cov(model: &PreparedModel, logvol: &[f64], belief: &[f64]) -> DMatrix<f64> {
    let d_f = model.d_f();
    let scales = expected_scales(model, logvol);
    let inclusion = inclusion_matrix(model, &predicted(model, belief));
    assemble(model, &scales[..d_f], &scales[d_f..], &inclusion)
}

/// Forecast covariance of `y_{t+1}` from the weighted cloud at time `t`.
pub fn forecast_cov(cloud: &ParticleCloud, model: &PreparedModel) -> DMatrix<f64> {
    let d_y = model.d_y();
    let mut cov = DMatrix::zeros(d_y, d_y);
    for (i, &w) in cloud.weights().iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        cov += particle_forecast_cov(model, cloud.logvol(i), cloud.belief(i)) * w;
    }
    // exact symmetry regardless of summation order
    (&cov + cov.transpose()) * 0.5
}

/// Forecast covariance of the first observation, before any data: log-volatilities
/// at their stationary law, regimes uniform.
pub fn prior_forecast_cov(model: &PreparedModel) -> DMatrix<f64> {
    let theta = model.theta();
    let d_f = model.d_f();
    let scales: Vec<f64> = (0..2 * d_f)
        .map(|k| (theta.logvol_mean[k] + 0.5 * theta.stationary_var(k)).exp())
        .collect();
    let uniform = vec![1.0 / model.n_regimes() as f64; model.n_regimes()];
    assemble(model, &scales[..d_f], &scales[d_f..], &inclusion_matrix(model, &uniform))
}

pub fn forecast_moments(cloud: &ParticleCloud, model: &PreparedModel) -> ForecastMoments {
    ForecastMoments {
        mean: model.mean().to_vec(),
        cov: forecast_cov(cloud, model),
    }
}

/// Weights minimizing `w' cov w` subject to summing to one (short positions allowed).
pub fn min_variance_weights(cov: &DMatrix<f64>) -> Result<Vec<f64>> {
    let n = cov.nrows();
    let chol = cov
        .clone()
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite("forecast covariance".into()))?;
    let x = chol.solve(&DVector::from_element(n, 1.0));
    let total = x.sum();
    if !(total.is_finite() && total != 0.0) {
        return Err(Error::Numerical("minimum-variance weights are undefined".into()));
    }
    Ok(x.iter().map(|v| v / total).collect())
}

fn standard_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

/// Lower `alpha` quantile of the Gaussian portfolio return `w' y`.
pub fn var_quantile(mean: &[f64], cov: &DMatrix<f64>, w: &[f64], alpha: f64) -> f64 {
    let wv = DVector::from_column_slice(w);
    let mu: f64 = w.iter().zip(mean).map(|(a, b)| a * b).sum();
    let var = (wv.transpose() * cov * &wv)[(0, 0)];
    let z = standard_normal().inverse_cdf(1.0 - alpha);
    mu - z * var.max(0.0).sqrt()
}

/// Lower `alpha` quantile of `w' y` under the mixture over particles and
/// predicted regimes, each component Gaussian with moment-matched variance.
pub fn mixture_var_quantile(cloud: &ParticleCloud, model: &PreparedModel, w: &[f64], alpha: f64) -> f64 {
    let d_f = model.d_f();
    let wv = DVector::from_column_slice(w);
    let mu: f64 = w.iter().zip(model.mean()).map(|(a, b)| a * b).sum();
    let mut comps: Vec<(f64, f64)> = Vec::new();
    for (i, &pw) in cloud.weights().iter().enumerate() {
        if pw == 0.0 {
            continue;
        }
        let scales = expected_scales(model, cloud.logvol(i));
        for (j, &pj) in predicted(model, cloud.belief(i)).iter().enumerate() {
            if pj == 0.0 {
                continue;
            }
            let mut one = vec![0.0; model.n_regimes()];
            one[j] = 1.0;
            let cov = assemble(model, &scales[..d_f], &scales[d_f..], &inclusion_matrix(model, &one));
            let sd = (wv.transpose() * cov * &wv)[(0, 0)].max(0.0).sqrt();
            comps.push((pw * pj, sd));
        }
    }
    let phi = standard_normal();
    let cdf = |q: f64| comps.iter().map(|&(c, sd)| c * phi.cdf((q - mu) / sd)).sum::<f64>();
    let spread = comps.iter().map(|c| c.1).fold(0.0, f64::max);
    let (mut lo, mut hi) = (mu - 40.0 * spread, mu);
    if alpha >= 0.5 {
        hi = mu + 40.0 * spread;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if cdf(mid) < alpha {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}
