use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forecast::{StartMode, VarMode};
use crate::io::Units;
use crate::model::PriorSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    /// Number of market factors `d_f`.
    pub factors: usize,
    /// Largest number of assets that can panic together, `K`.
    pub max_panic: usize,
    /// Parameter file used by `simulate`, `filter` and `backtest`.
    pub theta: Option<PathBuf>,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            factors: 1,
            max_panic: 1,
            theta: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    pub periods: usize,
    pub seed: Option<u64>,
    pub units: Units,
    pub start_date: NaiveDate,
    /// Days between consecutive observations.
    pub step_days: u32,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self {
            periods: 150,
            seed: None,
            units: Units::Percent,
            start_date: NaiveDate::from_ymd_opt(2005, 12, 30).expect("valid date"),
            step_days: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub returns: Option<PathBuf>,
    pub train_start: Option<NaiveDate>,
    pub train_end: Option<NaiveDate>,
    pub test_start: Option<NaiveDate>,
    pub test_end: Option<NaiveDate>,
}

/// Starting point of the sampler.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    /// Identified start built from sample moments of the training data.
    #[default]
    Moment,
    /// Prior draws, retried until the filter returns a finite likelihood.
    PriorDraw,
    /// The parameter file named in `[model] theta`.
    Theta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PmmhSection {
    pub iterations: usize,
    /// Likelihood replicas per iteration; defaults to the worker count.
    pub replicas: Option<usize>,
    pub particles: usize,
    pub adapt_start: usize,
    pub adapt_stop: usize,
    pub ridge: f64,
    /// Initial proposal covariance is `sigma0_scale^2 I` in transformed coordinates.
    pub sigma0_scale: f64,
    pub seed: Option<u64>,
    pub init: InitMode,
    /// Parameters to sample; all others stay at their starting values. Empty means all.
    pub free: Vec<String>,
}

impl Default for PmmhSection {
    fn default() -> Self {
        Self {
            iterations: 5000,
            replicas: None,
            particles: 50,
            adapt_start: 150,
            adapt_stop: 1000,
            ridge: 1e-8,
            sigma0_scale: 0.05,
            seed: None,
            init: InitMode::Moment,
            free: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterSection {
    pub particles: usize,
    pub seed: Option<u64>,
    /// Resample only when the ESS falls below this fraction; every step when absent.
    pub ess_threshold: Option<f64>,
}

impl Default for FilterSection {
    fn default() -> Self {
        Self {
            particles: 100,
            seed: None,
            ess_threshold: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BacktestSection {
    pub alpha: f64,
    pub particles: usize,
    pub seed: Option<u64>,
    pub start: StartMode,
    pub var_mode: VarMode,
    /// Parameter file for the backtest; falls back to `[model] theta`.
    pub theta: Option<PathBuf>,
}

impl Default for BacktestSection {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            particles: 100,
            seed: None,
            start: StartMode::Fresh,
            var_mode: VarMode::Gaussian,
            theta: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SummarizeSection {
    pub chain: Option<PathBuf>,
    pub burn_in: usize,
}

/// Settings of one `msl` run, read from a TOML file.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSection,
    pub prior: PriorSpec,
    pub simulate: SimulateSection,
    pub data: DataSection,
    pub pmmh: PmmhSection,
    pub filter: FilterSection,
    pub backtest: BacktestSection,
    pub summarize: SummarizeSection,
}

fn absolutize(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(path) = p {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
}

impl RunConfig {
    /// Parse, resolve relative paths against the file's directory and validate.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = Self::parse(&text)?;
        let dir = match path.parent() {
            Some(p) if !p.as_os_str().is_empty() => p,
            _ => Path::new("."),
        }
        .canonicalize()
        .map_err(|e| Error::io(path, e))?;
        config.resolve_paths(&dir);
        Ok(config)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.message().to_owned()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn resolve_paths(&mut self, dir: &Path) {
        absolutize(dir, &mut self.model.theta);
        absolutize(dir, &mut self.data.returns);
        absolutize(dir, &mut self.backtest.theta);
        absolutize(dir, &mut self.summarize.chain);
    }

    pub fn validate(&self) -> Result<()> {
        self.prior.validate()?;
        if self.model.factors == 0 {
            return Err(Error::Config("[model] factors must be at least 1".into()));
        }
        let p = &self.pmmh;
        if p.iterations == 0 || p.particles == 0 || p.replicas == Some(0) {
            return Err(Error::Config(
                "[pmmh] iterations, particles and replicas must be positive".into(),
            ));
        }
        if !(p.adapt_start > 0 && p.adapt_start < p.adapt_stop) {
            return Err(Error::Config("[pmmh] needs 0 < adapt_start < adapt_stop".into()));
        }
        if !(p.ridge >= 0.0 && p.sigma0_scale > 0.0) {
            return Err(Error::Config("[pmmh] ridge must be >= 0 and sigma0_scale > 0".into()));
        }
        if self.filter.particles == 0 || self.backtest.particles == 0 {
            return Err(Error::Config("particle counts must be positive".into()));
        }
        if !(self.backtest.alpha > 0.0 && self.backtest.alpha < 1.0) {
            return Err(Error::Config("[backtest] alpha must lie in (0, 1)".into()));
        }
        if self.simulate.periods == 0 || self.simulate.step_days == 0 {
            return Err(Error::Config("[simulate] periods and step_days must be positive".into()));
        }
        let d = &self.data;
        for (a, b, what) in [
            (d.train_start, d.train_end, "train_start after train_end"),
            (d.test_start, d.test_end, "test_start after test_end"),
        ] {
            if let (Some(a), Some(b)) = (a, b) {
                if a > b {
                    return Err(Error::Config(format!("[data] {what}")));
                }
            }
        }
        if let (Some(a), Some(b)) = (d.train_end, d.test_start) {
            if a >= b {
                return Err(Error::Config("[data] training and test periods overlap".into()));
            }
        }
        Ok(())
    }

    /// Fill every unset seed from `entropy`, in a fixed order. Seeds are
    /// truncated to 63 bits because TOML integers are signed.
    pub fn resolve_seeds(&mut self, mut entropy: impl FnMut() -> u64) {
        for seed in [
            &mut self.simulate.seed,
            &mut self.pmmh.seed,
            &mut self.filter.seed,
            &mut self.backtest.seed,
        ] {
            if seed.is_none() {
                *seed = Some(entropy() & i64::MAX as u64);
            }
        }
    }

    /// TOML rendering of the fully resolved configuration.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c = RunConfig::parse("").unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(c.pmmh.particles, 50);
        assert_eq!((c.pmmh.adapt_start, c.pmmh.adapt_stop), (150, 1000));
    }

    #[test]
    fn parses_sections() {
        let c = RunConfig::parse(
            r#"
            [model]
            factors = 1
            max_panic = 2
            theta = "theta.csv"
            [prior]
            persistence = [0.3, 0.95]
            [data]
            returns = "r.csv"
            train_end = "2007-11-23"
            test_start = "2007-11-30"
            [pmmh]
            iterations = 10
            init = "prior_draw"
            free = ["p"]
            [backtest]
            start = "warm_start"
            "#,
        )
        .unwrap();
        assert_eq!(c.model.max_panic, 2);
        assert_eq!(c.prior.persistence, (0.3, 0.95));
        assert_eq!(c.pmmh.init, InitMode::PriorDraw);
        assert_eq!(c.backtest.start, StartMode::WarmStart);
        let mut c2 = c.clone();
        c2.resolve_paths(Path::new("/data"));
        assert_eq!(c2.model.theta.as_deref(), Some(Path::new("/data/theta.csv")));
    }

    #[test]
    fn rejects_invalid() {
        for bad in [
            "[pmmh]\nadapt_start = 2000",
            "[backtest]\nalpha = 1.5",
            "[model]\nfactor = 1",
            "[data]\ntrain_end = \"2007-11-30\"\ntest_start = \"2007-11-23\"",
            "[prior]\npersistence = [0.9, 0.4]",
        ] {
            assert!(matches!(RunConfig::parse(bad), Err(Error::Config(_))), "{bad}");
        }
    }

    #[test]
    fn echo_round_trips() {
        let mut c = RunConfig::default();
        let mut n = 0;
        c.resolve_seeds(|| {
            n += 1;
            n
        });
        c.model.theta = Some("/abs/theta.csv".into());
        let back = RunConfig::parse(&c.to_toml().unwrap()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.filter.seed, Some(3));
    }
}
