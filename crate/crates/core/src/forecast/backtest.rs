use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::{FilterConfig, Rbpf, Resampling};
use crate::forecast::{
    coverage_tests, forecast_cov, min_variance_weights, mixture_var_quantile, prior_forecast_cov, var_quantile, CoverageReport,
};
use crate::model::PreparedModel;

/// How the VaR is read off the forecast distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarMode {
    /// Gaussian quantile from the forecast mean and covariance.
    #[default]
    Gaussian,
    /// Quantile of the particle/regime Gaussian mixture.
    Mixture,
}

/// Where the out-of-sample filter starts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StartMode {
    /// New filter at the first out-of-sample week.
    #[default]
    Fresh,
    /// Filter runs through the training data first.
    WarmStart,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BacktestConfig {
    pub n_particles: usize,
    pub alpha: f64,
    pub seed: u64,
    /// Multiplier turning a return as stored into a simple return (0.01 for percent).
    pub unit_scale: f64,
    pub var_mode: VarMode,
    pub start: StartMode,
}

impl BacktestConfig {
    pub fn new(n_particles: usize, alpha: f64, seed: u64, unit_scale: f64) -> Self {
        Self {
            n_particles,
            alpha,
            seed,
            unit_scale,
            var_mode: VarMode::Gaussian,
            start: StartMode::Fresh,
        }
    }
}

/// One out-of-sample week. Weights and VaR are formed before the week's return is seen.
#[derive(Debug, Clone, PartialEq)]
pub struct WeekRecord {
    pub weights: Vec<f64>,
    pub portfolio_return: f64,
    pub var: f64,
    pub exceedance: bool,
    /// Filtered probability of a contained panic after seeing the week.
    pub panic_probability: f64,
    pub wealth: f64,
    pub benchmark_return: f64,
    pub benchmark_wealth: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BacktestReport {
    pub alpha: f64,
    pub start: StartMode,
    pub var_mode: VarMode,
    pub weeks: Vec<WeekRecord>,
    /// Present when there are at least two weeks.
    pub coverage: Option<CoverageReport>,
}

impl BacktestReport {
    pub fn exceedances(&self) -> usize {
        self.weeks.iter().filter(|w| w.exceedance).count()
    }

    pub fn terminal_wealth(&self) -> f64 {
        self.weeks.last().map_or(1.0, |w| w.wealth)
    }

    pub fn terminal_benchmark_wealth(&self) -> f64 {
        self.weeks.last().map_or(1.0, |w| w.benchmark_wealth)
    }

    /// Plain-text block with counts, test statistics and terminal wealth.
    pub fn summary_text(&self) -> String {
        let mut s = format!(
            "start: {}\nvar_mode: {}\nalpha: {}\nweeks: {}\nexceedances: {}\n",
            match self.start {
                StartMode::Fresh => "fresh",
                StartMode::WarmStart => "warm_start",
            },
            match self.var_mode {
                VarMode::Gaussian => "gaussian",
                VarMode::Mixture => "mixture",
            },
            self.alpha,
            self.weeks.len(),
            self.exceedances()
        );
        if let Some(c) = &self.coverage {
            s += &format!(
                "exceedance_rate: {:.6}\nlr_uc: {:.6}\np_uc: {:.6}\nlr_ind: {:.6}\nlr_cc: {:.6}\np_cc: {:.6}\ndegenerate_counts: {}\n",
                c.exceedances as f64 / c.n as f64,
                c.lr_uc,
                c.p_uc,
                c.lr_ind,
                c.lr_cc,
                c.p_cc,
                c.degenerate
            );
        }
        s += &format!(
            "terminal_wealth: {:.6}\nterminal_wealth_equal_weight: {:.6}\n",
            self.terminal_wealth(),
            self.terminal_benchmark_wealth()
        );
        s
    }
}

/// Filter the out-of-sample returns, forming minimum-variance weights and a
/// VaR from each one-step forecast before the week's return is assimilated.
///
/// `training` is only used with [`StartMode::WarmStart`].
pub fn run_backtest(
    model: &PreparedModel,
    training: &[Vec<f64>],
    oos: &[Vec<f64>],
    config: &BacktestConfig,
) -> Result<BacktestReport> {
    if !(config.alpha > 0.0 && config.alpha < 1.0) {
        return Err(Error::Config(format!("VaR level {} must lie in (0, 1)", config.alpha)));
    }
    let filter_config = FilterConfig {
        n_particles: config.n_particles,
        seed: config.seed,
        resampling: Resampling::EveryStep,
    };
    let mut filter = Rbpf::new(model, filter_config)?;
    if config.start == StartMode::WarmStart {
        for y in training {
            filter.assimilate(y)?;
        }
    }
    let mean = model.mean().to_vec();
    let d_y = model.d_y() as f64;
    let (mut wealth, mut bench) = (1.0, 1.0);
    let mut weeks = Vec::with_capacity(oos.len());
    for (week, y) in oos.iter().enumerate() {
        let cov = if filter.steps() == 0 {
            prior_forecast_cov(model)
        } else {
            forecast_cov(filter.cloud(), model)
        };
        let weights = min_variance_weights(&cov)?;
        let var = match (config.var_mode, filter.steps()) {
            (VarMode::Mixture, s) if s > 0 => mixture_var_quantile(filter.cloud(), model, &weights, config.alpha),
            _ => var_quantile(&mean, &cov, &weights, config.alpha),
        };
        let summary = filter.assimilate(y).map_err(|e| match e {
            Error::FilterDegeneracy { .. } => {
                Error::Numerical(format!("particle filter degenerated at out-of-sample week {}", week + 1))
            }
            other => other,
        })?;
        let portfolio_return: f64 = weights.iter().zip(y).map(|(w, r)| w * r).sum();
        let benchmark_return = y.iter().sum::<f64>() / d_y;
        wealth *= 1.0 + config.unit_scale * portfolio_return;
        bench *= 1.0 + config.unit_scale * benchmark_return;
        weeks.push(WeekRecord {
            weights,
            portfolio_return,
            var,
            exceedance: portfolio_return < var,
            panic_probability: summary.panic_probability,
            wealth,
            benchmark_return,
            benchmark_wealth: bench,
        });
    }
    let coverage = if weeks.len() >= 2 {
        let flags: Vec<bool> = weeks.iter().map(|w| w.exceedance).collect();
        Some(coverage_tests(&flags, config.alpha)?)
    } else {
        None
    };
    Ok(BacktestReport {
        alpha: config.alpha,
        start: config.start,
        var_mode: config.var_mode,
        weeks,
        coverage,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{simulate, MslParams};
    use crate::selector::SelectorSpace;
    use nalgebra::DMatrix;

    fn setup() -> (PreparedModel, Vec<Vec<f64>>) {
        let theta = MslParams {
            loadings: DMatrix::from_column_slice(3, 1, &[1.0, 0.8, 1.2]),
            idio_var: vec![0.5, 0.6, 0.7],
            logvol_mean: vec![0.3, 0.1],
            persistence: vec![0.6, 0.7],
            innovation_var: vec![0.3, 0.4],
            risk_premia: vec![0.002],
            regime_stay: 0.85,
        };
        let space = SelectorSpace::enumerate(3, 1).unwrap();
        let sim = simulate(&theta, &space, 120, 2).unwrap();
        (PreparedModel::new(&theta, &space).unwrap(), sim.returns)
    }

    #[test]
    fn empty_horizon_gives_empty_report() {
        let (model, _) = setup();
        let r = run_backtest(&model, &[], &[], &BacktestConfig::new(50, 0.05, 1, 0.01)).unwrap();
        assert!(r.weeks.is_empty() && r.coverage.is_none());
        assert_eq!(r.terminal_wealth(), 1.0);
    }

    #[test]
    fn report_is_self_consistent() {
        let (model, ys) = setup();
        let r = run_backtest(&model, &[], &ys, &BacktestConfig::new(100, 0.05, 3, 0.01)).unwrap();
        assert_eq!(r.weeks.len(), ys.len());
        let mut bench = 1.0;
        for (w, y) in r.weeks.iter().zip(&ys) {
            assert!((w.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let ret: f64 = w.weights.iter().zip(y).map(|(a, b)| a * b).sum();
            assert_eq!(w.exceedance, ret < w.var);
            bench *= 1.0 + 0.01 * y.iter().sum::<f64>() / 3.0;
            assert!((w.benchmark_wealth - bench).abs() < 1e-12);
            assert!(w.wealth > 0.0);
        }
        assert_eq!(r.coverage.unwrap().exceedances, r.exceedances());
        assert!(r.summary_text().contains("exceedances: "));
    }

    #[test]
    fn warm_start_and_mixture_modes_run() {
        let (model, ys) = setup();
        let mut config = BacktestConfig::new(50, 0.05, 3, 0.01);
        config.start = StartMode::WarmStart;
        config.var_mode = VarMode::Mixture;
        let r = run_backtest(&model, &ys[..60], &ys[60..], &config).unwrap();
        assert_eq!(r.weeks.len(), 60);
        assert!(r.weeks.iter().all(|w| w.var.is_finite()));
        let fresh = run_backtest(&model, &ys[..60], &ys[60..], &BacktestConfig::new(50, 0.05, 3, 0.01)).unwrap();
        assert_ne!(fresh.weeks[0].weights, r.weeks[0].weights);
    }
}
