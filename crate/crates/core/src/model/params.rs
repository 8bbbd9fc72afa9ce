use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::PriorSpec;

/// Full parameter set of the panic-regime factor model.
///
/// Log-volatility vectors have length `2 * d_f`: the first `d_f` entries drive
/// the market factors, the last `d_f` the panic factors.
#[derive(Debug, Clone, PartialEq)]
pub struct MslParams {
    /// `d_y x d_f` loadings. Identified models have a unit diagonal and zeros above it.
    pub loadings: DMatrix<f64>,
    /// Idiosyncratic variances (diagonal of the observation noise covariance).
    pub idio_var: Vec<f64>,
    pub logvol_mean: Vec<f64>,
    /// AR(1) coefficients of the log-volatilities.
    pub persistence: Vec<f64>,
    /// Innovation variances of the log-volatilities. Zero gives a deterministic path.
    pub innovation_var: Vec<f64>,
    /// Risk premia of the market factors.
    pub risk_premia: Vec<f64>,
    /// Probability that the regime chain stays put.
    pub regime_stay: f64,
}

impl MslParams {
    pub fn d_y(&self) -> usize {
        self.loadings.nrows()
    }

    pub fn d_f(&self) -> usize {
        self.loadings.ncols()
    }

    /// Checks dimensions and parameter domains. Loadings structure is not
    /// checked here; see [`MslParams::check_identified`].
    pub fn validate(&self) -> Result<()> {
        let (d_y, d_f) = (self.d_y(), self.d_f());
        if d_y == 0 || d_f == 0 {
            return Err(Error::Config("loadings must be non-empty".into()));
        }
        let dims = [
            ("idio_var", self.idio_var.len(), d_y),
            ("logvol_mean", self.logvol_mean.len(), 2 * d_f),
            ("persistence", self.persistence.len(), 2 * d_f),
            ("innovation_var", self.innovation_var.len(), 2 * d_f),
            ("risk_premia", self.risk_premia.len(), d_f),
        ];
        for (name, got, want) in dims {
            if got != want {
                return Err(Error::Config(format!("{name} has length {got}, expected {want}")));
            }
        }
        if self.loadings.iter().any(|b| !b.is_finite()) {
            return Err(Error::Domain("loadings must be finite".into()));
        }
        if let Some(r) = self.idio_var.iter().find(|&&r| !(r > 0.0 && r.is_finite())) {
            return Err(Error::Domain(format!("idiosyncratic variance {r} must be positive")));
        }
        if let Some(q) = self.innovation_var.iter().find(|&&q| !(q >= 0.0 && q.is_finite())) {
            return Err(Error::Domain(format!("innovation variance {q} must be non-negative")));
        }
        if let Some(phi) = self.persistence.iter().find(|&&phi| !(phi.abs() < 1.0)) {
            return Err(Error::Domain(format!("AR coefficient {phi} must satisfy |phi| < 1")));
        }
        if self.logvol_mean.iter().chain(&self.risk_premia).any(|v| !v.is_finite()) {
            return Err(Error::Domain("log-volatility means and risk premia must be finite".into()));
        }
        if !(self.regime_stay > 0.0 && self.regime_stay < 1.0) {
            return Err(Error::Domain(format!(
                "regime persistence p={} must lie in (0, 1)",
                self.regime_stay
            )));
        }
        Ok(())
    }

    /// Unit diagonal and zero upper triangle in the loadings.
    pub fn check_identified(&self) -> Result<()> {
        let (d_y, d_f) = (self.d_y(), self.d_f());
        if d_f > d_y {
            return Err(Error::Config(format!("d_f={d_f} exceeds d_y={d_y}")));
        }
        for i in 0..d_y {
            for j in 0..d_f {
                let b = self.loadings[(i, j)];
                if i == j && b != 1.0 {
                    return Err(Error::Domain(format!("loading ({}, {}) must be 1", i + 1, j + 1)));
                }
                if j > i && b != 0.0 {
                    return Err(Error::Domain(format!("loading ({}, {}) must be 0", i + 1, j + 1)));
                }
            }
        }
        Ok(())
    }

    /// Whether the no-panic covariance `B diag(e^x) B' + R` has fewer free
    /// parameters than an unrestricted `d_y x d_y` covariance.
    pub fn has_parsimonious_factor_count(d_y: usize, d_f: usize) -> bool {
        if d_f > d_y {
            return false;
        }
        let free = d_y * d_f - d_f * (d_f.saturating_sub(1)) / 2 + d_y;
        free < d_y + d_y * (d_y - 1) / 2
    }

    /// Stationary variance `q / (1 - phi^2)` of log-volatility component `k`.
    pub fn stationary_var(&self, k: usize) -> f64 {
        self.innovation_var[k] / (1.0 - self.persistence[k] * self.persistence[k])
    }

    /// An identified starting point derived from sample moments of `returns`.
    ///
    /// Loadings start at one, log-volatility means split the average sample
    /// variance between factor and idiosyncratic parts, and bounded
    /// parameters start at the centre of their prior support.
    pub fn moment_start(returns: &[Vec<f64>], d_f: usize, prior: &PriorSpec) -> Result<Self> {
        let d_y = returns.first().map(Vec::len).unwrap_or(0);
        if returns.len() < 2 || d_y == 0 {
            return Err(Error::Config(
                "need at least two observations to form a starting point".into(),
            ));
        }
        let n = returns.len() as f64;
        let var: Vec<f64> = (0..d_y)
            .map(|a| {
                let mean = returns.iter().map(|r| r[a]).sum::<f64>() / n;
                let v = returns.iter().map(|r| (r[a] - mean).powi(2)).sum::<f64>() / (n - 1.0);
                v.max(1e-8)
            })
            .collect();
        let avg_var = var.iter().sum::<f64>() / d_y as f64;
        let loadings = DMatrix::from_fn(d_y, d_f, |i, j| if j > i { 0.0 } else { 1.0 });
        let market = (0.5 * avg_var / d_f as f64).ln();
        let mut logvol_mean = vec![market; d_f];
        logvol_mean.extend(std::iter::repeat_n(market - 1.0, d_f));
        let (lo, hi) = prior.persistence;
        let (llo, lhi) = prior.risk_premium;
        let (plo, phi) = prior.stay;
        Ok(Self {
            loadings,
            idio_var: var.iter().map(|v| 0.5 * v).collect(),
            logvol_mean,
            persistence: vec![0.5 * (lo + hi); 2 * d_f],
            innovation_var: vec![0.3; 2 * d_f],
            risk_premia: vec![0.5 * (llo + lhi); d_f],
            regime_stay: 0.5 * (plo + phi),
        })
    }
}

#[cfg(test)]
pub(crate) fn toy_params(d_y: usize) -> MslParams {
    let loadings = DMatrix::from_fn(d_y, 1, |i, _| if i == 0 { 1.0 } else { 0.8 + 0.1 * i as f64 });
    MslParams {
        loadings,
        idio_var: (0..d_y).map(|i| 0.5 + 0.1 * i as f64).collect(),
        logvol_mean: vec![0.5, 0.2],
        persistence: vec![0.6, 0.7],
        innovation_var: vec![0.3, 0.4],
        risk_premia: vec![0.1],
        regime_stay: 0.85,
    }
}
