use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{cholesky_in_place, gaussian_logpdf_chol};
use crate::model::MslParams;
use crate::selector::{RegimeTransition, SelectorSpace};

/// A parameter set bound to a regime space with everything that depends only
/// on `theta` precomputed: the regime kernel, the observation mean `B lambda`,
/// per-factor outer products `B_k B_k'`, and log-volatility AR constants.
///
/// Immutable once built; shared read-only by concurrent filter replicas.
#[derive(Debug, Clone)]
pub struct PreparedModel {
    theta: MslParams,
    space: SelectorSpace,
    transition: RegimeTransition,
    mean: Vec<f64>,
    outer: Vec<f64>,
    stationary_sd: Vec<f64>,
    innovation_sd: Vec<f64>,
}

/// Scratch buffers for repeated density evaluation.
#[derive(Debug, Clone)]
pub struct DensityWorkspace {
    base: Vec<f64>,
    cov: Vec<f64>,
    resid: Vec<f64>,
    scratch: Vec<f64>,
    scales: Vec<f64>,
}

impl DensityWorkspace {
    pub fn new(d_y: usize, d_f: usize) -> Self {
        Self {
            base: vec![0.0; d_y * d_y],
            cov: vec![0.0; d_y * d_y],
            resid: vec![0.0; d_y],
            scratch: vec![0.0; d_y],
            scales: vec![0.0; 2 * d_f],
        }
    }
}

impl PreparedModel {
    pub fn new(theta: &MslParams, space: &SelectorSpace) -> Result<Self> {
        theta.validate()?;
        if space.d_y() != theta.d_y() {
            return Err(Error::Config(format!(
                "regime space has {} assets but the loadings have {} rows",
                space.d_y(),
                theta.d_y()
            )));
        }
        let (d_y, d_f) = (theta.d_y(), theta.d_f());
        let transition = RegimeTransition::new(theta.regime_stay, space.len())?;
        let lambda = nalgebra::DVector::from_column_slice(&theta.risk_premia);
        let mean = (&theta.loadings * lambda).iter().copied().collect();
        let mut outer = vec![0.0; d_f * d_y * d_y];
        for k in 0..d_f {
            for a in 0..d_y {
                for b in 0..d_y {
                    outer[k * d_y * d_y + a * d_y + b] = theta.loadings[(a, k)] * theta.loadings[(b, k)];
                }
            }
        }
        let stationary_sd = (0..2 * d_f).map(|k| theta.stationary_var(k).sqrt()).collect();
        let innovation_sd = theta.innovation_var.iter().map(|q| q.sqrt()).collect();
        Ok(Self {
            theta: theta.clone(),
            space: space.clone(),
            transition,
            mean,
            outer,
            stationary_sd,
            innovation_sd,
        })
    }

    pub fn theta(&self) -> &MslParams {
        &self.theta
    }

    pub fn space(&self) -> &SelectorSpace {
        &self.space
    }

    pub fn transition(&self) -> &RegimeTransition {
        &self.transition
    }

    pub fn d_y(&self) -> usize {
        self.theta.d_y()
    }

    pub fn d_f(&self) -> usize {
        self.theta.d_f()
    }

    /// Length of the log-volatility state, `2 d_f`.
    pub fn logvol_dim(&self) -> usize {
        2 * self.theta.d_f()
    }

    pub fn n_regimes(&self) -> usize {
        self.space.len()
    }

    /// Observation mean `B lambda`.
    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// Row-major `B_k B_k'` for factor `k`.
    pub fn outer(&self, k: usize) -> &[f64] {
        let n = self.d_y() * self.d_y();
        &self.outer[k * n..(k + 1) * n]
    }

    pub fn workspace(&self) -> DensityWorkspace {
        DensityWorkspace::new(self.d_y(), self.d_f())
    }

    fn fill_base(&self, logvol: &[f64], ws: &mut DensityWorkspace) {
        let (d_y, d_f) = (self.d_y(), self.d_f());
        for (s, &x) in ws.scales.iter_mut().zip(logvol) {
            *s = x.exp();
        }
        ws.base.iter_mut().for_each(|v| *v = 0.0);
        for k in 0..d_f {
            let scale = ws.scales[k];
            for (dst, &o) in ws.base.iter_mut().zip(self.outer(k)) {
                *dst += scale * o;
            }
        }
        for a in 0..d_y {
            ws.base[a * d_y + a] += self.theta.idio_var[a];
        }
    }

    fn fill_regime_cov(&self, mask: u64, ws: &mut DensityWorkspace) {
        let (d_y, d_f) = (self.d_y(), self.d_f());
        ws.cov.copy_from_slice(&ws.base);
        if mask == 0 {
            return;
        }
        for k in 0..d_f {
            let scale = ws.scales[d_f + k];
            let outer = self.outer(k);
            for a in (0..d_y).filter(|a| (mask >> a) & 1 == 1) {
                for b in (0..d_y).filter(|b| (mask >> b) & 1 == 1) {
                    ws.cov[a * d_y + b] += scale * outer[a * d_y + b];
                }
            }
        }
    }

    /// Log-density of `y` under every regime at log-volatility `logvol`.
    pub fn regime_log_densities(&self, logvol: &[f64], y: &[f64], out: &mut [f64], ws: &mut DensityWorkspace) -> Result<()> {
        let d_y = self.d_y();
        debug_assert_eq!(out.len(), self.n_regimes());
        self.fill_base(logvol, ws);
        for (r, (&yi, &m)) in ws.resid.iter_mut().zip(y.iter().zip(&self.mean)) {
            *r = yi - m;
        }
        for (j, dst) in out.iter_mut().enumerate() {
            self.fill_regime_cov(self.space.mask(j), ws);
            if !cholesky_in_place(&mut ws.cov, d_y) {
                return Err(Error::NotPositiveDefinite(format!("regime {} at log-vol {logvol:?}", j + 1)));
            }
            *dst = gaussian_logpdf_chol(&ws.cov, d_y, &ws.resid, &mut ws.scratch);
        }
        Ok(())
    }

    /// Log-density of `y` under 0-based regime `idx`.
    pub fn log_density(&self, idx: usize, logvol: &[f64], y: &[f64], ws: &mut DensityWorkspace) -> Result<f64> {
        let d_y = self.d_y();
        self.fill_base(logvol, ws);
        for (r, (&yi, &m)) in ws.resid.iter_mut().zip(y.iter().zip(&self.mean)) {
            *r = yi - m;
        }
        self.fill_regime_cov(self.space.mask(idx), ws);
        if !cholesky_in_place(&mut ws.cov, d_y) {
            return Err(Error::NotPositiveDefinite(format!(
                "regime {} at log-vol {logvol:?}",
                idx + 1
            )));
        }
        Ok(gaussian_logpdf_chol(&ws.cov, d_y, &ws.resid, &mut ws.scratch))
    }

    /// Conditional covariance of `y_t` given 0-based regime `idx` and log-volatility.
    pub fn covariance(&self, idx: usize, logvol: &[f64]) -> DMatrix<f64> {
        let d_y = self.d_y();
        let mut ws = self.workspace();
        self.fill_base(logvol, &mut ws);
        self.fill_regime_cov(self.space.mask(idx), &mut ws);
        DMatrix::from_row_slice(d_y, d_y, &ws.cov)
    }

    /// Draw the first log-volatility vector from its stationary law.
    pub fn sample_initial_logvol<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        for (k, x) in out.iter_mut().enumerate() {
            let z: f64 = rng.sample(StandardNormal);
            *x = self.theta.logvol_mean[k] + self.stationary_sd[k] * z;
        }
    }

    /// Draw `x_t` given `x_{t-1}` from the AR(1) transition.
    pub fn sample_next_logvol<R: Rng + ?Sized>(&self, prev: &[f64], rng: &mut R, out: &mut [f64]) {
        for (k, x) in out.iter_mut().enumerate() {
            let z: f64 = rng.sample(StandardNormal);
            let mu = self.theta.logvol_mean[k];
            *x = mu + self.theta.persistence[k] * (prev[k] - mu) + self.innovation_sd[k] * z;
        }
    }

    /// Stationary standard deviation of log-volatility component `k`.
    pub fn stationary_sd(&self, k: usize) -> f64 {
        self.stationary_sd[k]
    }

    pub fn innovation_sd(&self, k: usize) -> f64 {
        self.innovation_sd[k]
    }
}

/// Log-density of `y` given a 1-based regime and a log-volatility vector.
pub fn conditional_obs_logdensity(
    theta: &MslParams,
    space: &SelectorSpace,
    regime: usize,
    logvol: &[f64],
    y: &[f64],
) -> Result<f64> {
    if regime == 0 || regime > space.len() {
        return Err(Error::Index {
            index: regime,
            len: space.len(),
        });
    }
    let model = PreparedModel::new(theta, space)?;
    if logvol.len() != model.logvol_dim() || y.len() != model.d_y() {
        return Err(Error::Config("log-volatility or observation has the wrong length".into()));
    }
    if logvol.iter().any(|x| !x.is_finite()) {
        return Err(Error::Domain("log-volatility must be finite".into()));
    }
    let mut ws = model.workspace();
    model.log_density(regime - 1, logvol, y, &mut ws)
}
