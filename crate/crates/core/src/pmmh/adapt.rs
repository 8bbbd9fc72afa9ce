use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Adaptive random-walk schedule.
///
/// Iterations are 1-based; iteration `i` proposes from `Sigma_i`, which is
/// `sigma0` for `i <= start`, `(2.4^2 / d) (S_{i-1} + ridge I)` for
/// `start < i <= stop` where `S_{i-1}` is the sample covariance of the first
/// `i - 1` states, and `Sigma_stop` afterwards.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptSchedule {
    pub start: usize,
    pub stop: usize,
    pub ridge: f64,
    pub sigma0: DMatrix<f64>,
}

impl AdaptSchedule {
    pub fn new(sigma0: DMatrix<f64>) -> Self {
        Self {
            start: 150,
            stop: 1000,
            ridge: 1e-8,
            sigma0,
        }
    }

    /// Default schedule with `sigma0 = scale^2 I`.
    pub fn isotropic(dim: usize, scale: f64) -> Self {
        Self::new(DMatrix::identity(dim, dim) * (scale * scale))
    }

    pub fn dim(&self) -> usize {
        self.sigma0.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.start > 0 && self.start < self.stop) {
            return Err(Error::Config(format!(
                "adaptation window needs 0 < start < stop, got {} and {}",
                self.start, self.stop
            )));
        }
        if !(self.ridge >= 0.0) {
            return Err(Error::Config("ridge must be non-negative".into()));
        }
        if self.sigma0.nrows() != self.sigma0.ncols() || self.sigma0.clone().cholesky().is_none() {
            return Err(Error::Config(
                "initial proposal covariance must be symmetric positive definite".into(),
            ));
        }
        Ok(())
    }

    fn scaled(&self, sample_cov: &DMatrix<f64>) -> DMatrix<f64> {
        let d = self.dim();
        let mut m = sample_cov.clone();
        for k in 0..d {
            m[(k, k)] += self.ridge;
        }
        m * (2.4 * 2.4 / d as f64)
    }
}

/// Proposal covariance for iteration `i` from the full `history` of states
/// (at least `i - 1` entries are used), recomputed in batch.
pub fn adapt_covariance(history: &[Vec<f64>], schedule: &AdaptSchedule, i: usize) -> DMatrix<f64> {
    if i <= schedule.start {
        return schedule.sigma0.clone();
    }
    let n = i.min(schedule.stop) - 1;
    let d = schedule.dim();
    let rows = &history[..n];
    let mean = rows
        .iter()
        .fold(DVector::zeros(d), |acc, z| acc + DVector::from_column_slice(z))
        / n as f64;
    let mut cov = DMatrix::zeros(d, d);
    for z in rows {
        let c = DVector::from_column_slice(z) - &mean;
        cov += &c * c.transpose();
    }
    schedule.scaled(&(cov / (n as f64 - 1.0)))
}

/// Running (Welford) sample covariance and the proposal covariance it implies.
#[derive(Debug, Clone)]
pub struct AdaptiveCovariance {
    schedule: AdaptSchedule,
    n: usize,
    mean: DVector<f64>,
    scatter: DMatrix<f64>,
    current: Arc<DMatrix<f64>>,
}

impl AdaptiveCovariance {
    pub fn new(schedule: AdaptSchedule) -> Self {
        let d = schedule.dim();
        let current = Arc::new(schedule.sigma0.clone());
        Self {
            schedule,
            n: 0,
            mean: DVector::zeros(d),
            scatter: DMatrix::zeros(d, d),
            current,
        }
    }

    /// Record the state of the next iteration.
    pub fn observe(&mut self, z: &[f64]) {
        self.n += 1;
        let x = DVector::from_column_slice(z);
        let delta = &x - &self.mean;
        self.mean += &delta / self.n as f64;
        let delta2 = &x - &self.mean;
        self.scatter += &delta * delta2.transpose();
    }

    /// Number of states observed.
    pub fn count(&self) -> usize {
        self.n
    }

    /// Sample covariance of the observed states (denominator `n - 1`).
    pub fn sample_covariance(&self) -> DMatrix<f64> {
        &self.scatter / (self.n as f64 - 1.0)
    }

    /// Proposal covariance for iteration `i`. Requires exactly `i - 1`
    /// observed states while adapting; after `stop` the matrix is shared
    /// unchanged.
    pub fn proposal_for(&mut self, i: usize) -> Arc<DMatrix<f64>> {
        let s = &self.schedule;
        if i > s.start && i <= s.stop {
            debug_assert_eq!(self.n, i - 1);
            let mut cov = self.sample_covariance();
            // symmetrize away round-off from the rank-one updates
            cov = (&cov + cov.transpose()) * 0.5;
            self.current = Arc::new(s.scaled(&cov));
        }
        Arc::clone(&self.current)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    fn history(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|k| {
                (0..d)
                    .map(|j| {
                        let e: f64 = StandardNormal.sample(&mut rng);
                        e * (1.0 + j as f64) + 0.01 * k as f64
                    })
                    .collect()
            })
            .collect()
    }

    #[test]
    fn batch_follows_the_schedule() {
        let s = AdaptSchedule::isotropic(3, 0.1);
        let h = history(1200, 3, 1);
        assert_eq!(adapt_covariance(&h, &s, 1), s.sigma0);
        assert_eq!(adapt_covariance(&h, &s, 150), s.sigma0);
        assert_ne!(adapt_covariance(&h, &s, 151), s.sigma0);
        assert_eq!(adapt_covariance(&h, &s, 1200), adapt_covariance(&h, &s, 1000));
    }

    #[test]
    fn running_matches_batch() {
        let s = AdaptSchedule::isotropic(4, 0.2);
        let h = history(1100, 4, 2);
        let mut run = AdaptiveCovariance::new(s.clone());
        let mut frozen = None;
        for i in 1..=1100 {
            let cov = run.proposal_for(i);
            let batch = adapt_covariance(&h, &s, i);
            let err = (&*cov - &batch).abs().max();
            assert!(err <= 1e-10 * batch.abs().max(), "i={i} err={err}");
            if i == 1000 {
                frozen = Some(Arc::clone(&cov));
            }
            if i > 1000 {
                assert!(Arc::ptr_eq(frozen.as_ref().unwrap(), &cov));
            }
            run.observe(&h[i - 1]);
        }
    }

    #[test]
    fn invalid_schedules() {
        let mut s = AdaptSchedule::isotropic(2, 0.1);
        s.start = 1000;
        assert!(s.validate().is_err());
        let s = AdaptSchedule::new(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]));
        assert!(s.validate().is_err());
    }
}
