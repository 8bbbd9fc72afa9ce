use rand::Rng;

use crate::error::{Error, Result};
use crate::filter::{multinomial_ancestors, FilterConfig, FilterOutput, StepSummary};
use crate::linalg::log_sum_exp;
use crate::model::{DensityWorkspace, PreparedModel};
use crate::rng::{stream, RESAMPLE_LANE};

/// Sequential importance sampling with resampling that samples both the
/// regime and the log-volatility from their dynamics. Resampling is
/// multinomial at every step; there is no ESS mode.
pub struct Sisr<'m> {
    model: &'m PreparedModel,
    config: FilterConfig,
    regimes: Vec<usize>,
    logvols: Vec<f64>,
    log_weights: Vec<f64>,
    weights: Vec<f64>,
    step: usize,
    ws: DensityWorkspace,
    ancestors: Vec<usize>,
}

impl<'m> Sisr<'m> {
    pub fn new(model: &'m PreparedModel, config: FilterConfig) -> Result<Self> {
        config.validate()?;
        let n = config.n_particles;
        Ok(Self {
            model,
            config,
            regimes: vec![0; n],
            logvols: vec![0.0; n * model.logvol_dim()],
            log_weights: vec![0.0; n],
            weights: vec![1.0 / n as f64; n],
            step: 0,
            ws: model.workspace(),
            ancestors: Vec::with_capacity(n),
        })
    }

    pub fn assimilate(&mut self, y: &[f64]) -> Result<StepSummary> {
        let (n, dim) = (self.config.n_particles, self.model.logvol_dim());
        let t = self.step;
        if t > 0 {
            let mut rng = stream(self.config.seed, t as u64, RESAMPLE_LANE);
            multinomial_ancestors(&self.weights, n, &mut rng, &mut self.ancestors);
            let old_logvols = self.logvols.clone();
            let old_regimes = self.regimes.clone();
            for (i, &a) in self.ancestors.iter().enumerate() {
                self.regimes[i] = old_regimes[a];
                self.logvols[i * dim..(i + 1) * dim].copy_from_slice(&old_logvols[a * dim..(a + 1) * dim]);
            }
        }
        let lw0 = -(n as f64).ln();
        let transition = *self.model.transition();
        let mut prev = vec![0.0; dim];
        for i in 0..n {
            let mut rng = stream(self.config.seed, t as u64, i as u64);
            let x = &mut self.logvols[i * dim..(i + 1) * dim];
            if t == 0 {
                self.model.sample_initial_logvol(&mut rng, x);
                self.regimes[i] = rng.random_range(0..self.model.n_regimes());
            } else {
                prev.copy_from_slice(x);
                self.model.sample_next_logvol(&prev, &mut rng, x);
                self.regimes[i] = transition.sample_next(self.regimes[i], &mut rng);
            }
            let g = self
                .model
                .log_density(self.regimes[i], &self.logvols[i * dim..(i + 1) * dim], y, &mut self.ws)
                .unwrap_or(f64::NEG_INFINITY);
            self.log_weights[i] = lw0 + if g.is_nan() { f64::NEG_INFINITY } else { g };
        }
        let increment = log_sum_exp(&self.log_weights);
        self.step += 1;
        if !increment.is_finite() {
            return Err(Error::FilterDegeneracy { step: t + 1 });
        }
        for (w, lw) in self.weights.iter_mut().zip(&self.log_weights) {
            *w = (lw - increment).exp();
        }
        let panic = self
            .weights
            .iter()
            .zip(&self.regimes)
            .filter(|(_, &r)| r != 0)
            .map(|(w, _)| w)
            .sum::<f64>();
        Ok(StepSummary {
            log_likelihood_increment: increment,
            panic_probability: panic.clamp(0.0, 1.0),
            ess: 1.0 / self.weights.iter().map(|w| w * w).sum::<f64>(),
        })
    }
}

/// Run the SISR reference filter through `ys`.
pub fn sisr_run(model: &PreparedModel, ys: &[Vec<f64>], config: FilterConfig) -> Result<FilterOutput> {
    if ys.is_empty() {
        return Err(Error::Config("cannot filter an empty series".into()));
    }
    let mut filter = Sisr::new(model, config)?;
    let mut out = FilterOutput::default();
    for y in ys {
        out.push(filter.assimilate(y)?);
    }
    Ok(out)
}
