/// Weighted particles, each a log-volatility sample paired with its regime
/// belief. Weights are normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleCloud {
    dim: usize,
    n_regimes: usize,
    pub(crate) logvols: Vec<f64>,
    pub(crate) beliefs: Vec<f64>,
    pub(crate) log_weights: Vec<f64>,
    pub(crate) weights: Vec<f64>,
}

impl ParticleCloud {
    pub(crate) fn new(n: usize, dim: usize, n_regimes: usize) -> Self {
        let lw = -(n as f64).ln();
        Self {
            dim,
            n_regimes,
            logvols: vec![0.0; n * dim],
            beliefs: vec![1.0 / n_regimes as f64; n * n_regimes],
            log_weights: vec![lw; n],
            weights: vec![1.0 / n as f64; n],
        }
    }

    pub fn len(&self) -> usize {
        self.log_weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_weights.is_empty()
    }

    pub fn logvol_dim(&self) -> usize {
        self.dim
    }

    pub fn n_regimes(&self) -> usize {
        self.n_regimes
    }

    pub fn logvol(&self, i: usize) -> &[f64] {
        &self.logvols[i * self.dim..(i + 1) * self.dim]
    }

    pub(crate) fn logvol_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.logvols[i * self.dim..(i + 1) * self.dim]
    }

    /// Filtered regime probabilities of particle `i` (0-based regimes).
    pub fn belief(&self, i: usize) -> &[f64] {
        &self.beliefs[i * self.n_regimes..(i + 1) * self.n_regimes]
    }

    pub(crate) fn belief_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.beliefs[i * self.n_regimes..(i + 1) * self.n_regimes]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    pub fn ess(&self) -> f64 {
        1.0 / self.weights.iter().map(|w| w * w).sum::<f64>()
    }

    /// `sum_i w_i (1 - belief_i[regime 1])`.
    pub fn panic_probability(&self) -> f64 {
        let p: f64 = (0..self.len()).map(|i| self.weights[i] * (1.0 - self.belief(i)[0])).sum();
        p.clamp(0.0, 1.0)
    }

    /// Normalize `log_weights` in place and refresh the linear weights.
    /// Returns the log of the pre-normalization sum.
    pub(crate) fn normalize(&mut self) -> f64 {
        let log_total = crate::linalg::log_sum_exp(&self.log_weights);
        if log_total.is_finite() {
            for (lw, w) in self.log_weights.iter_mut().zip(self.weights.iter_mut()) {
                *lw -= log_total;
                *w = lw.exp();
            }
        }
        log_total
    }

    pub(crate) fn set_uniform(&mut self) {
        let n = self.len();
        let lw = -(n as f64).ln();
        self.log_weights.iter_mut().for_each(|w| *w = lw);
        self.weights.iter_mut().for_each(|w| *w = 1.0 / n as f64);
    }

    /// Replace `self` by the particles of `src` selected by `ancestors`.
    pub(crate) fn gather_from(&mut self, src: &ParticleCloud, ancestors: &[usize]) {
        for (i, &a) in ancestors.iter().enumerate() {
            self.logvol_mut(i).copy_from_slice(src.logvol(a));
            self.belief_mut(i).copy_from_slice(src.belief(a));
        }
        self.set_uniform();
    }
}

/// `sum_i w_i E[h(regime, x_i) | belief_i]` with the inner expectation taken
/// exactly over each particle's regime belief. `h` receives 1-based regimes.
pub fn filtered_expectation<H>(cloud: &ParticleCloud, h: H) -> f64
where
    H: Fn(usize, &[f64]) -> f64,
{
    (0..cloud.len())
        .map(|i| {
            let x = cloud.logvol(i);
            let inner: f64 = cloud
                .belief(i)
                .iter()
                .enumerate()
                .filter(|(_, &p)| p > 0.0)
                .map(|(j, &p)| p * h(j + 1, x))
                .sum();
            cloud.weights()[i] * inner
        })
        .sum()
}
