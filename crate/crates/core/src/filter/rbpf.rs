use crate::error::{Error, Result};
use crate::filter::{multinomial_ancestors, FilterConfig, FilterOutput, ParticleCloud, Resampling, StepSummary};
use crate::hmm::update_in_place;
use crate::model::{DensityWorkspace, PreparedModel};
use crate::rng::{stream, StreamRng, RESAMPLE_LANE};

/// Proposal for the sampled log-volatility component.
///
/// Each method writes the draw to `out` and returns the log importance
/// correction `log f(x) - log q(x)` (zero for the bootstrap proposal).
pub trait LogVolProposal: Sync {
    fn initial(&self, model: &PreparedModel, y: &[f64], rng: &mut StreamRng, out: &mut [f64]) -> f64;
    fn next(&self, model: &PreparedModel, prev: &[f64], y: &[f64], rng: &mut StreamRng, out: &mut [f64]) -> f64;
}

/// Propose from the state dynamics: stationary law at `t = 1`, AR(1) afterwards.
#[derive(Debug, Clone, Copy, Default)]
pub struct BootstrapProposal;

impl LogVolProposal for BootstrapProposal {
    fn initial(&self, model: &PreparedModel, _y: &[f64], rng: &mut StreamRng, out: &mut [f64]) -> f64 {
        model.sample_initial_logvol(rng, out);
        0.0
    }

    fn next(&self, model: &PreparedModel, prev: &[f64], _y: &[f64], rng: &mut StreamRng, out: &mut [f64]) -> f64 {
        model.sample_next_logvol(prev, rng, out);
        0.0
    }
}

/// Rao-Blackwellized particle filter.
///
/// Resampling for step `t` is deferred to the start of step `t + 1`, so after
/// [`Rbpf::assimilate`] returns, [`Rbpf::cloud`] holds the weighted,
/// pre-resampling particles that filtered expectations should use.
pub struct Rbpf<'m, P: LogVolProposal = BootstrapProposal> {
    model: &'m PreparedModel,
    config: FilterConfig,
    proposal: P,
    cloud: ParticleCloud,
    spare: ParticleCloud,
    step: usize,
    resample_pending: bool,
    ws: DensityWorkspace,
    log_dens: Vec<f64>,
    prev: Vec<f64>,
    pred: Vec<f64>,
    ancestors: Vec<usize>,
}

impl<'m> Rbpf<'m, BootstrapProposal> {
    pub fn new(model: &'m PreparedModel, config: FilterConfig) -> Result<Self> {
        Self::with_proposal(model, config, BootstrapProposal)
    }
}

impl<'m, P: LogVolProposal> Rbpf<'m, P> {
    pub fn with_proposal(model: &'m PreparedModel, config: FilterConfig, proposal: P) -> Result<Self> {
        config.validate()?;
        let (n, dim, s) = (config.n_particles, model.logvol_dim(), model.n_regimes());
        Ok(Self {
            model,
            config,
            proposal,
            cloud: ParticleCloud::new(n, dim, s),
            spare: ParticleCloud::new(n, dim, s),
            step: 0,
            resample_pending: false,
            ws: model.workspace(),
            log_dens: vec![0.0; s],
            prev: vec![0.0; dim],
            pred: vec![0.0; s],
            ancestors: Vec::with_capacity(n),
        })
    }

    /// Number of observations assimilated so far.
    pub fn steps(&self) -> usize {
        self.step
    }

    pub fn cloud(&self) -> &ParticleCloud {
        &self.cloud
    }

    pub fn model(&self) -> &PreparedModel {
        self.model
    }

    fn resample(&mut self) {
        let mut rng = stream(self.config.seed, self.step as u64, RESAMPLE_LANE);
        multinomial_ancestors(self.cloud.weights(), self.config.n_particles, &mut rng, &mut self.ancestors);
        self.spare.gather_from(&self.cloud, &self.ancestors);
        std::mem::swap(&mut self.cloud, &mut self.spare);
    }

    /// Propagate, reweight and summarize one observation.
    pub fn assimilate(&mut self, y: &[f64]) -> Result<StepSummary> {
        if y.len() != self.model.d_y() {
            return Err(Error::Config(format!(
                "observation has {} entries, expected {}",
                y.len(),
                self.model.d_y()
            )));
        }
        let t = self.step;
        if t > 0 && self.resample_pending {
            self.resample();
        }
        let n = self.config.n_particles;
        let transition = *self.model.transition();
        for i in 0..n {
            let mut rng = stream(self.config.seed, t as u64, i as u64);
            let correction = if t == 0 {
                self.proposal.initial(self.model, y, &mut rng, self.cloud.logvol_mut(i))
            } else {
                self.prev.copy_from_slice(self.cloud.logvol(i));
                self.proposal
                    .next(self.model, &self.prev, y, &mut rng, self.cloud.logvol_mut(i))
            };
            let belief = self.cloud.belief_mut(i);
            if t == 0 {
                let u = 1.0 / belief.len() as f64;
                belief.iter_mut().for_each(|p| *p = u);
            } else {
                transition.predict_into(belief, &mut self.pred);
                belief.copy_from_slice(&self.pred);
            }
            let cond = match self
                .model
                .regime_log_densities(self.cloud.logvol(i), y, &mut self.log_dens, &mut self.ws)
            {
                Ok(()) => update_in_place(self.cloud.belief_mut(i), &self.log_dens),
                Err(_) => f64::NEG_INFINITY,
            };
            let incr = cond + correction;
            self.cloud.log_weights[i] += if incr.is_nan() { f64::NEG_INFINITY } else { incr };
        }
        let increment = self.cloud.normalize();
        self.step += 1;
        if !increment.is_finite() {
            return Err(Error::FilterDegeneracy { step: t + 1 });
        }
        let ess = self.cloud.ess();
        self.resample_pending = match self.config.resampling {
            Resampling::EveryStep => true,
            Resampling::EssBelow(frac) => ess < frac * n as f64,
        };
        Ok(StepSummary {
            log_likelihood_increment: increment,
            panic_probability: self.cloud.panic_probability(),
            ess,
        })
    }
}

/// Run the bootstrap RBPF through `ys`.
pub fn rbpf_run(model: &PreparedModel, ys: &[Vec<f64>], config: FilterConfig) -> Result<FilterOutput> {
    rbpf_run_with(model, ys, config, BootstrapProposal, |_, _| {})
}

/// Run an RBPF with a custom proposal, calling `observer(t, cloud)` (1-based
/// `t`) after each observation with the weighted, pre-resampling cloud.
pub fn rbpf_run_with<P, F>(
    model: &PreparedModel,
    ys: &[Vec<f64>],
    config: FilterConfig,
    proposal: P,
    mut observer: F,
) -> Result<FilterOutput>
where
    P: LogVolProposal,
    F: FnMut(usize, &ParticleCloud),
{
    if ys.is_empty() {
        return Err(Error::Config("cannot filter an empty series".into()));
    }
    let mut filter = Rbpf::with_proposal(model, config, proposal)?;
    let mut out = FilterOutput::default();
    for (t, y) in ys.iter().enumerate() {
        out.push(filter.assimilate(y)?);
        observer(t + 1, filter.cloud());
    }
    Ok(out)
}
