use std::sync::Arc;

use log::warn;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::filter::{rbpf_run, FilterConfig, Resampling};
use crate::linalg::log_mean_exp;
use crate::model::{sample_prior, MslParams, PreparedModel, PriorSpec};
use crate::parallel::{map_indexed, Execution};
use crate::pmmh::{AdaptSchedule, AdaptiveCovariance, ParamTransform};
use crate::rng::{derive_seed, stream, CHAIN_LANE};
use crate::selector::SelectorSpace;

/// A point of the transformed space mapped back to the model.
#[derive(Debug, Clone)]
pub struct Decoded<S> {
    pub state: S,
    pub log_prior: f64,
    /// `log |d theta / d z|`.
    pub log_jacobian: f64,
}

/// A posterior known up to an unbiased, non-negative likelihood estimator.
pub trait PseudoMarginalTarget: Sync {
    type State: Clone + Send + Sync;

    fn dim(&self) -> usize;

    /// Map transformed coordinates to a model state. `log_prior` is `-inf`
    /// outside the support.
    fn decode(&self, z: &[f64]) -> Decoded<Self::State>;

    /// One draw of the log of the likelihood estimator, fully determined by `seed`.
    fn log_likelihood_estimate(&self, state: &Self::State, seed: u64) -> Result<f64>;
}

#[derive(Debug, Clone)]
pub struct PmmhConfig {
    pub n_iters: usize,
    /// Independent likelihood estimates averaged per iteration.
    pub n_replicas: usize,
    pub schedule: AdaptSchedule,
    pub seed: u64,
    pub execution: Execution,
}

/// One iteration of the chain (the incumbent after the accept/reject step).
#[derive(Debug, Clone)]
pub struct ChainState<S> {
    pub z: Vec<f64>,
    pub state: S,
    pub log_prior: f64,
    pub log_jacobian: f64,
    /// Log of the replica-averaged likelihood estimate.
    pub avg_loglik: f64,
    pub accepted: bool,
    /// Proposal covariance in force at this iteration.
    pub proposal_cov: Arc<DMatrix<f64>>,
}

impl<S> ChainState<S> {
    fn log_target(&self) -> f64 {
        self.log_prior + self.avg_loglik + self.log_jacobian
    }
}

/// Seed of replica `r` at iteration `i`.
pub fn replica_seed(seed: u64, iteration: usize, replica: usize) -> u64 {
    derive_seed(derive_seed(seed, iteration as u64), replica as u64)
}

/// Log of the average of `n_replicas` likelihood estimates. Replicas that
/// fail numerically contribute a zero likelihood.
pub fn averaged_log_likelihood<T: PseudoMarginalTarget>(
    target: &T,
    state: &T::State,
    seed: u64,
    iteration: usize,
    n_replicas: usize,
    execution: Execution,
) -> Result<f64> {
    let estimates = map_indexed(n_replicas, execution, |r| {
        target.log_likelihood_estimate(state, replica_seed(seed, iteration, r))
    });
    let mut logs = Vec::with_capacity(n_replicas);
    for e in estimates {
        match e {
            Ok(v) if !v.is_nan() => logs.push(v),
            Ok(_) => logs.push(f64::NEG_INFINITY),
            Err(e) if e.is_numerical() => {
                warn!("iteration {iteration}: likelihood replica failed ({e}); counted as zero");
                logs.push(f64::NEG_INFINITY);
            }
            Err(e) => return Err(e),
        }
    }
    Ok(log_mean_exp(&logs))
}

/// Adaptive particle-marginal Metropolis-Hastings.
///
/// Iteration 1 is the initial state. `progress(&state, i)` is called after
/// every iteration. The output depends only on `(target, init_z, config)`,
/// not on how replicas are scheduled.
pub fn pmmh_run<T, F>(target: &T, init_z: &[f64], config: &PmmhConfig, mut progress: F) -> Result<Vec<ChainState<T::State>>>
where
    T: PseudoMarginalTarget,
    F: FnMut(&ChainState<T::State>, usize),
{
    let d = target.dim();
    if init_z.len() != d || config.schedule.dim() != d {
        return Err(Error::Config(format!(
            "initial point has {} coordinates and the proposal {}, expected {d}",
            init_z.len(),
            config.schedule.dim()
        )));
    }
    if config.n_iters == 0 || config.n_replicas == 0 {
        return Err(Error::Config("need at least one iteration and one replica".into()));
    }
    config.schedule.validate()?;

    let mut adapt = AdaptiveCovariance::new(config.schedule.clone());
    let init = target.decode(init_z);
    if !(init.log_prior.is_finite() && init.log_jacobian.is_finite()) {
        return Err(Error::Startup("initial parameters lie outside the prior support".into()));
    }
    let avg = averaged_log_likelihood(target, &init.state, config.seed, 1, config.n_replicas, config.execution)
        .map_err(|e| Error::Startup(e.to_string()))?;
    if !avg.is_finite() {
        return Err(Error::Startup(
            "every likelihood replica degenerated at the initial parameters".into(),
        ));
    }
    let mut current = ChainState {
        z: init_z.to_vec(),
        state: init.state,
        log_prior: init.log_prior,
        log_jacobian: init.log_jacobian,
        avg_loglik: avg,
        accepted: true,
        proposal_cov: adapt.proposal_for(1),
    };
    let mut chain = Vec::with_capacity(config.n_iters);
    adapt.observe(&current.z);
    progress(&current, 1);
    chain.push(current.clone());

    let mut factor: Option<(Arc<DMatrix<f64>>, DMatrix<f64>)> = None;
    for i in 2..=config.n_iters {
        let cov = adapt.proposal_for(i);
        let chol = match &factor {
            Some((c, l)) if Arc::ptr_eq(c, &cov) => l.clone(),
            _ => {
                let l = cov
                    .as_ref()
                    .clone()
                    .cholesky()
                    .ok_or_else(|| Error::NotPositiveDefinite(format!("proposal covariance at iteration {i}")))?
                    .l();
                factor = Some((Arc::clone(&cov), l.clone()));
                l
            }
        };
        let mut rng = stream(config.seed, i as u64, CHAIN_LANE);
        let xi = DVector::from_iterator(d, (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let step = chol * xi;
        let z_new: Vec<f64> = current.z.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
        let u: f64 = rng.random();

        let proposal = target.decode(&z_new);
        let mut accepted = false;
        if proposal.log_prior.is_finite() && proposal.log_jacobian.is_finite() {
            let avg = averaged_log_likelihood(target, &proposal.state, config.seed, i, config.n_replicas, config.execution)?;
            if avg.is_finite() {
                let delta = proposal.log_prior + avg + proposal.log_jacobian - current.log_target();
                if u.ln() < delta {
                    current = ChainState {
                        z: z_new,
                        state: proposal.state,
                        log_prior: proposal.log_prior,
                        log_jacobian: proposal.log_jacobian,
                        avg_loglik: avg,
                        accepted: true,
                        proposal_cov: Arc::clone(&cov),
                    };
                    accepted = true;
                }
            } else {
                warn!("iteration {i}: every likelihood replica degenerated; proposal rejected");
            }
        }
        if !accepted {
            current.accepted = false;
            current.proposal_cov = cov;
        }
        adapt.observe(&current.z);
        progress(&current, i);
        chain.push(current.clone());
    }
    Ok(chain)
}

/// Posterior of the model parameters listed in a [`ParamTransform`], with
/// the likelihood estimated by a bootstrap RBPF.
#[derive(Debug, Clone)]
pub struct MslTarget {
    pub ys: Vec<Vec<f64>>,
    pub space: SelectorSpace,
    pub prior: PriorSpec,
    pub transform: ParamTransform,
    pub n_particles: usize,
    pub resampling: Resampling,
}

impl MslTarget {
    pub fn new(ys: Vec<Vec<f64>>, space: SelectorSpace, prior: PriorSpec, transform: ParamTransform, n_particles: usize) -> Self {
        Self {
            ys,
            space,
            prior,
            transform,
            n_particles,
            resampling: Resampling::EveryStep,
        }
    }
}

impl PseudoMarginalTarget for MslTarget {
    type State = MslParams;

    fn dim(&self) -> usize {
        self.transform.dim()
    }

    fn decode(&self, z: &[f64]) -> Decoded<MslParams> {
        let theta = self.transform.to_natural(z);
        let log_prior = if theta.validate().is_ok() {
            self.transform.layout().log_prior(&theta, &self.prior)
        } else {
            f64::NEG_INFINITY
        };
        Decoded {
            state: theta,
            log_prior,
            log_jacobian: self.transform.log_abs_jacobian(z),
        }
    }

    fn log_likelihood_estimate(&self, theta: &MslParams, seed: u64) -> Result<f64> {
        let model = PreparedModel::new(theta, &self.space)?;
        let config = FilterConfig {
            n_particles: self.n_particles,
            seed,
            resampling: self.resampling,
        };
        match rbpf_run(&model, &self.ys, config) {
            Ok(out) => Ok(out.log_likelihood),
            Err(Error::FilterDegeneracy { .. }) => Ok(f64::NEG_INFINITY),
            Err(e) => Err(e),
        }
    }
}

/// Draw starting parameters from the prior, keeping the fixed values of the
/// transform's base, until one yields a finite likelihood estimate.
pub fn prior_draw_start(target: &MslTarget, seed: u64, max_tries: usize) -> Result<Vec<f64>> {
    let base = target.transform.base();
    for attempt in 0..max_tries {
        let mut rng = stream(seed, attempt as u64, CHAIN_LANE);
        let draw = sample_prior(&target.prior, base.d_y(), base.d_f(), &mut rng)?;
        let values = target.transform.layout().values(&draw);
        let theta = target.transform.layout().apply(base, &values);
        let Ok(z) = target.transform.from_natural(&theta) else {
            continue;
        };
        let decoded = target.decode(&z);
        if !decoded.log_prior.is_finite() {
            continue;
        }
        if let Ok(ll) = target.log_likelihood_estimate(&decoded.state, derive_seed(seed, attempt as u64)) {
            if ll.is_finite() {
                return Ok(z);
            }
        }
    }
    Err(Error::Startup(format!(
        "no prior draw gave a finite likelihood in {max_tries} attempts"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pmmh::ParamLayout;
    use statrs::distribution::{ContinuousCDF, Normal};

    /// Uniform box prior on `[0, 1]^d`, likelihood identically one.
    struct FlatBox {
        dim: usize,
    }

    impl PseudoMarginalTarget for FlatBox {
        type State = Vec<f64>;
        fn dim(&self) -> usize {
            self.dim
        }
        fn decode(&self, z: &[f64]) -> Decoded<Vec<f64>> {
            let inside = z.iter().all(|&v| v > 0.0 && v < 1.0);
            Decoded {
                state: z.to_vec(),
                log_prior: if inside { 0.0 } else { f64::NEG_INFINITY },
                log_jacobian: 0.0,
            }
        }
        fn log_likelihood_estimate(&self, _: &Vec<f64>, _: u64) -> Result<f64> {
            Ok(0.0)
        }
    }

    fn fixed_schedule(dim: usize, scale: f64, n: usize) -> AdaptSchedule {
        let mut s = AdaptSchedule::isotropic(dim, scale);
        s.start = n + 1;
        s.stop = n + 2;
        s
    }

    #[test]
    fn single_iteration_returns_initial_state() {
        let target = FlatBox { dim: 2 };
        let config = PmmhConfig {
            n_iters: 1,
            n_replicas: 3,
            schedule: AdaptSchedule::isotropic(2, 0.1),
            seed: 1,
            execution: Execution::Sequential,
        };
        let chain = pmmh_run(&target, &[0.3, 0.4], &config, |_, _| {}).unwrap();
        assert_eq!(chain.len(), 1);
        assert_eq!(chain[0].z, vec![0.3, 0.4]);
        assert_eq!(chain[0].avg_loglik, 0.0);
    }

    #[test]
    fn flat_box_acceptance_and_mean() {
        let n = 10_000;
        let sigma = 0.3;
        let target = FlatBox { dim: 1 };
        let config = PmmhConfig {
            n_iters: n,
            n_replicas: 1,
            schedule: fixed_schedule(1, sigma, n),
            seed: 11,
            execution: Execution::Sequential,
        };
        let chain = pmmh_run(&target, &[0.5], &config, |_, _| {}).unwrap();
        let rate = chain[1..].iter().filter(|c| c.accepted).count() as f64 / (n - 1) as f64;
        // P(z + sigma e in (0,1)) averaged over z ~ U(0,1), by midpoint quadrature
        let phi = Normal::new(0.0, 1.0).unwrap();
        let m = 20_000;
        let theory: f64 = (0..m)
            .map(|k| {
                let z = (k as f64 + 0.5) / m as f64;
                phi.cdf((1.0 - z) / sigma) - phi.cdf(-z / sigma)
            })
            .sum::<f64>()
            / m as f64;
        assert!((rate - theory).abs() < 0.02, "rate {rate} vs {theory}");
        let mean = chain.iter().map(|c| c.z[0]).sum::<f64>() / n as f64;
        assert!((mean - 0.5).abs() < 0.03, "mean {mean}");
    }

    #[test]
    fn rejected_iterations_keep_the_incumbent_estimate() {
        let target = FlatBox { dim: 2 };
        let config = PmmhConfig {
            n_iters: 200,
            n_replicas: 1,
            schedule: AdaptSchedule::isotropic(2, 2.0),
            seed: 5,
            execution: Execution::Sequential,
        };
        let chain = pmmh_run(&target, &[0.5, 0.5], &config, |_, _| {}).unwrap();
        for w in chain.windows(2) {
            if !w[1].accepted {
                assert_eq!(w[0].z, w[1].z);
                assert_eq!(w[0].avg_loglik, w[1].avg_loglik);
            }
        }
        assert!(chain.iter().any(|c| !c.accepted));
    }

    #[test]
    fn startup_errors() {
        let target = FlatBox { dim: 1 };
        let config = PmmhConfig {
            n_iters: 10,
            n_replicas: 1,
            schedule: AdaptSchedule::isotropic(1, 0.1),
            seed: 5,
            execution: Execution::Sequential,
        };
        assert!(matches!(
            pmmh_run(&target, &[2.0], &config, |_, _| {}),
            Err(Error::Startup(_))
        ));
        assert!(pmmh_run(&target, &[0.5, 0.5], &config, |_, _| {}).is_err());
    }

    fn small_target() -> (MslTarget, Vec<f64>) {
        let prior = PriorSpec::default();
        let space = SelectorSpace::enumerate(2, 1).unwrap();
        let theta = MslParams {
            loadings: DMatrix::from_column_slice(2, 1, &[1.0, 0.9]),
            idio_var: vec![0.4, 0.6],
            logvol_mean: vec![0.1, -0.5],
            persistence: vec![0.7, 0.6],
            innovation_var: vec![0.2, 0.3],
            risk_premia: vec![0.001],
            regime_stay: 0.8,
        };
        let sim = crate::model::simulate(&theta, &space, 30, 3).unwrap();
        let transform = ParamTransform::new(ParamLayout::full(2, 1), theta.clone(), &prior);
        let z = transform.from_natural(&theta).unwrap();
        (MslTarget::new(sim.returns, space, prior, transform, 20), z)
    }

    #[test]
    fn chain_is_independent_of_scheduling() {
        let (target, z) = small_target();
        let mut config = PmmhConfig {
            n_iters: 30,
            n_replicas: 3,
            schedule: AdaptSchedule::isotropic(target.dim(), 0.05),
            seed: 9,
            execution: Execution::Sequential,
        };
        config.schedule.start = 10;
        config.schedule.stop = 20;
        let a = pmmh_run(&target, &z, &config, |_, _| {}).unwrap();
        config.execution = Execution::Parallel;
        let b = pmmh_run(&target, &z, &config, |_, _| {}).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.z, y.z);
            assert_eq!(x.avg_loglik.to_bits(), y.avg_loglik.to_bits());
            assert_eq!(x.proposal_cov, y.proposal_cov);
        }
    }

    #[test]
    fn averaging_is_a_mean_of_likelihoods() {
        let (target, z) = small_target();
        let theta = target.decode(&z).state;
        let singles: Vec<f64> = (0..4)
            .map(|r| target.log_likelihood_estimate(&theta, replica_seed(1, 7, r)).unwrap())
            .collect();
        let avg = averaged_log_likelihood(&target, &theta, 1, 7, 4, Execution::Sequential).unwrap();
        let direct = (singles.iter().map(|l| l.exp()).sum::<f64>() / 4.0).ln();
        assert!((avg - direct).abs() < 1e-9);
    }

    #[test]
    fn prior_draw_start_finds_a_finite_point() {
        let (target, _) = small_target();
        let z = prior_draw_start(&target, 4, 200).unwrap();
        assert!(target.decode(&z).log_prior.is_finite());
    }
}
