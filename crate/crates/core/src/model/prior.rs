use rand::Rng;
use rand_distr::{Distribution, Gamma, Normal, Uniform};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::linalg::LN_2PI;
use crate::model::MslParams;

/// Independent priors for every parameter block.
///
/// Normal priors are parameterized by mean and variance, inverse-gamma
/// priors by shape and scale, uniform priors by their bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorSpec {
    /// Free (below-diagonal) loadings: normal (mean, variance).
    pub loading: (f64, f64),
    /// AR coefficients: uniform bounds.
    pub persistence: (f64, f64),
    /// Market risk premia: uniform bounds.
    pub risk_premium: (f64, f64),
    /// Idiosyncratic variances: inverse-gamma (shape, scale).
    pub idio_var: (f64, f64),
    /// Log-volatility means: normal (mean, variance).
    pub logvol_mean: (f64, f64),
    /// Log-volatility innovation variances: inverse-gamma (shape, scale).
    pub innovation_var: (f64, f64),
    /// Regime persistence: uniform bounds.
    pub stay: (f64, f64),
}

impl Default for PriorSpec {
    fn default() -> Self {
        Self {
            loading: (1.0, 0.125),
            persistence: (0.4, 0.9),
            risk_premium: (1.5e-4, 2.708178e-3),
            idio_var: (0.001, 0.001),
            logvol_mean: (0.0, 1.0),
            innovation_var: (1.0, 1.0),
            stay: (0.0, 1.0),
        }
    }
}

impl PriorSpec {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.loading,
            self.persistence,
            self.risk_premium,
            self.idio_var,
            self.logvol_mean,
            self.innovation_var,
            self.stay,
        ]
        .iter()
        .all(|(a, b)| a.is_finite() && b.is_finite());
        if !finite {
            return Err(Error::Config("prior hyperparameters must be finite".into()));
        }
        for (name, (lo, hi)) in [
            ("persistence", self.persistence),
            ("risk_premium", self.risk_premium),
            ("stay", self.stay),
        ] {
            if !(lo < hi) {
                return Err(Error::Config(format!("{name} prior bounds must satisfy lo < hi")));
            }
        }
        if self.stay.0 < 0.0 || self.stay.1 > 1.0 {
            return Err(Error::Config("stay prior must lie within [0, 1]".into()));
        }
        if self.persistence.0 <= -1.0 || self.persistence.1 >= 1.0 {
            return Err(Error::Config("persistence prior must lie within (-1, 1)".into()));
        }
        for (name, (a, b)) in [
            ("loading", self.loading),
            ("logvol_mean", self.logvol_mean),
            ("idio_var", self.idio_var),
            ("innovation_var", self.innovation_var),
        ] {
            let ok = if name.ends_with("var") { a > 0.0 && b > 0.0 } else { b > 0.0 };
            if !ok {
                return Err(Error::Config(format!("{name} prior has a non-positive scale")));
            }
        }
        Ok(())
    }
}

pub fn normal_logpdf(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * (LN_2PI + var.ln() + (x - mean).powi(2) / var)
}

pub fn inv_gamma_logpdf(x: f64, shape: f64, scale: f64) -> f64 {
    if !(x > 0.0) || !x.is_finite() {
        return f64::NEG_INFINITY;
    }
    shape * scale.ln() - ln_gamma(shape) - (shape + 1.0) * x.ln() - scale / x
}

/// Log-density of the uniform law on the open interval `(lo, hi)`.
pub fn uniform_logpdf(x: f64, lo: f64, hi: f64) -> f64 {
    if x > lo && x < hi {
        -(hi - lo).ln()
    } else {
        f64::NEG_INFINITY
    }
}

/// Joint log prior density. Values outside a bounded support give `-inf`.
pub fn log_prior(theta: &MslParams, prior: &PriorSpec) -> f64 {
    let (d_y, d_f) = (theta.d_y(), theta.d_f());
    let mut total = 0.0;
    for i in 0..d_y {
        for j in 0..d_f.min(i) {
            total += normal_logpdf(theta.loadings[(i, j)], prior.loading.0, prior.loading.1);
        }
    }
    for &phi in &theta.persistence {
        total += uniform_logpdf(phi, prior.persistence.0, prior.persistence.1);
    }
    for &mu in &theta.logvol_mean {
        total += normal_logpdf(mu, prior.logvol_mean.0, prior.logvol_mean.1);
    }
    for &q in &theta.innovation_var {
        total += inv_gamma_logpdf(q, prior.innovation_var.0, prior.innovation_var.1);
    }
    for &r in &theta.idio_var {
        total += inv_gamma_logpdf(r, prior.idio_var.0, prior.idio_var.1);
    }
    for &lambda in &theta.risk_premia {
        total += uniform_logpdf(lambda, prior.risk_premium.0, prior.risk_premium.1);
    }
    total += uniform_logpdf(theta.regime_stay, prior.stay.0, prior.stay.1);
    if total.is_nan() {
        f64::NEG_INFINITY
    } else {
        total
    }
}

fn inv_gamma_draw<R: Rng + ?Sized>(shape: f64, scale: f64, rng: &mut R) -> f64 {
    // 1 / Gamma(shape, rate = scale). With shape near zero the gamma draw
    // underflows to 0 routinely, so redraw until the result is representable.
    let g = Gamma::new(shape, 1.0 / scale).expect("validated inverse-gamma hyperparameters");
    loop {
        let v = 1.0 / g.sample(rng);
        if v.is_finite() && v > 0.0 {
            break v;
        }
    }
}

/// Draw an identified parameter set from the prior.
pub fn sample_prior<R: Rng + ?Sized>(prior: &PriorSpec, d_y: usize, d_f: usize, rng: &mut R) -> Result<MslParams> {
    prior.validate()?;
    let loading = Normal::new(prior.loading.0, prior.loading.1.sqrt()).map_err(|e| Error::Config(e.to_string()))?;
    let mu = Normal::new(prior.logvol_mean.0, prior.logvol_mean.1.sqrt()).map_err(|e| Error::Config(e.to_string()))?;
    let open_uniform = |(lo, hi): (f64, f64), rng: &mut R| loop {
        let u = Uniform::new(lo, hi).expect("validated bounds").sample(rng);
        if u > lo {
            break u;
        }
    };
    let mut loadings = nalgebra::DMatrix::zeros(d_y, d_f);
    for i in 0..d_y {
        for j in 0..d_f.min(i + 1) {
            loadings[(i, j)] = if i == j { 1.0 } else { loading.sample(rng) };
        }
    }
    Ok(MslParams {
        loadings,
        idio_var: (0..d_y)
            .map(|_| inv_gamma_draw(prior.idio_var.0, prior.idio_var.1, rng))
            .collect(),
        logvol_mean: (0..2 * d_f).map(|_| mu.sample(rng)).collect(),
        persistence: (0..2 * d_f).map(|_| open_uniform(prior.persistence, rng)).collect(),
        innovation_var: (0..2 * d_f)
            .map(|_| inv_gamma_draw(prior.innovation_var.0, prior.innovation_var.1, rng))
            .collect(),
        risk_premia: (0..d_f).map(|_| open_uniform(prior.risk_premium, rng)).collect(),
        regime_stay: open_uniform(prior.stay, rng),
    })
}
