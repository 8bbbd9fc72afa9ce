//! Brute-force references for the filters and the sampler.
//!
//! These routines are written to be obviously correct rather than fast. They
//! share nothing with [`crate::hmm`] or [`crate::filter`]; observation
//! densities are evaluated from a dense covariance assembled by
//! [`PreparedModel::covariance`] and factorized with `nalgebra`.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{log_sum_exp, LN_2PI};
use crate::model::{MslParams, PreparedModel};
use crate::parallel::{map_indexed, Execution};
use crate::selector::SelectorSpace;

/// Dense tensor grid over the log-volatility state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Nodes per log-volatility dimension (at least 3).
    pub nodes: usize,
    /// Grid covers the stationary mean plus or minus this many stationary standard deviations.
    pub half_width_sd: f64,
    /// Upper bound on the work estimate of a grid evaluation.
    pub budget: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            nodes: 41,
            half_width_sd: 6.0,
            budget: 5e9,
        }
    }
}

impl GridSpec {
    pub fn with_nodes(nodes: usize) -> Self {
        Self {
            nodes,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.nodes < 3 {
            return Err(Error::Config("a grid needs at least 3 nodes per dimension".into()));
        }
        if !(self.half_width_sd > 0.0) {
            return Err(Error::Config("grid half-width must be positive".into()));
        }
        Ok(())
    }
}

fn dense_logpdf(model: &PreparedModel, idx: usize, logvol: &[f64], y: &[f64]) -> f64 {
    let cov = model.covariance(idx, logvol);
    let n = y.len();
    let chol = match cov.cholesky() {
        Some(c) => c,
        None => return f64::NEG_INFINITY,
    };
    let resid = DVector::from_iterator(n, y.iter().zip(model.mean()).map(|(a, b)| a - b));
    let z = chol.l().solve_lower_triangular(&resid).expect("non-singular factor");
    let log_det: f64 = chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>() * 2.0;
    -0.5 * (n as f64 * LN_2PI + log_det + z.norm_squared())
}

fn check_path(theta: &MslParams, logvol_path: &[Vec<f64>], ys: &[Vec<f64>]) -> Result<()> {
    if ys.is_empty() || logvol_path.len() != ys.len() {
        return Err(Error::Config(
            "log-volatility path and data must have equal, non-zero length".into(),
        ));
    }
    if logvol_path.iter().any(|x| x.len() != 2 * theta.d_f()) || ys.iter().any(|y| y.len() != theta.d_y()) {
        return Err(Error::Config("inconsistent dimensions".into()));
    }
    Ok(())
}

/// Exact log-likelihood given a log-volatility path: forward algorithm over
/// regimes with a dense transition matrix.
pub fn exact_hmm_likelihood(theta: &MslParams, space: &SelectorSpace, logvol_path: &[Vec<f64>], ys: &[Vec<f64>]) -> Result<f64> {
    check_path(theta, logvol_path, ys)?;
    let model = PreparedModel::new(theta, space)?;
    let s = space.len();
    let log_pi = model.transition().matrix().map(f64::ln);
    let mut alpha: Vec<f64> = (0..s)
        .map(|j| -(s as f64).ln() + dense_logpdf(&model, j, &logvol_path[0], &ys[0]))
        .collect();
    for (x, y) in logvol_path.iter().zip(ys).skip(1) {
        alpha = (0..s)
            .map(|to| {
                let terms: Vec<f64> = (0..s).map(|from| alpha[from] + log_pi[(from, to)]).collect();
                log_sum_exp(&terms) + dense_logpdf(&model, to, x, y)
            })
            .collect();
    }
    Ok(log_sum_exp(&alpha))
}

/// Same quantity as [`exact_hmm_likelihood`] by summing over all `S_K^T`
/// regime paths. Fails if there are more than `max_paths` paths.
pub fn enumerated_hmm_likelihood(
    theta: &MslParams,
    space: &SelectorSpace,
    logvol_path: &[Vec<f64>],
    ys: &[Vec<f64>],
    max_paths: f64,
) -> Result<f64> {
    check_path(theta, logvol_path, ys)?;
    let model = PreparedModel::new(theta, space)?;
    let (s, t) = (space.len(), ys.len());
    let paths = (s as f64).powi(t as i32);
    if paths > max_paths {
        return Err(Error::BudgetExceeded {
            required: paths,
            budget: max_paths,
        });
    }
    let log_g: Vec<Vec<f64>> = logvol_path
        .iter()
        .zip(ys)
        .map(|(x, y)| (0..s).map(|j| dense_logpdf(&model, j, x, y)).collect())
        .collect();
    let log_pi = model.transition().matrix().map(f64::ln);
    let mut terms = Vec::with_capacity(paths as usize);
    let mut path = vec![0usize; t];
    loop {
        let mut lp = -(s as f64).ln() + log_g[0][path[0]];
        for k in 1..t {
            lp += log_pi[(path[k - 1], path[k])] + log_g[k][path[k]];
        }
        terms.push(lp);
        // odometer increment
        let mut k = t;
        loop {
            if k == 0 {
                return Ok(log_sum_exp(&terms));
            }
            k -= 1;
            path[k] += 1;
            if path[k] < s {
                break;
            }
            path[k] = 0;
        }
    }
}

/// Nodes, trapezoid weights and initial/transition densities of one
/// log-volatility coordinate.
struct Axis {
    nodes: Vec<f64>,
    /// `w(x_0) p_0(x_0)`
    initial: Vec<f64>,
    /// Row-major `K[a][b] = f(x_a | x_b) w(x_a)`
    kernel: Vec<f64>,
}

fn normal_pdf(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    (-0.5 * z * z).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt())
}

fn build_axis(theta: &MslParams, k: usize, grid: &GridSpec) -> Axis {
    let mu = theta.logvol_mean[k];
    let phi = theta.persistence[k];
    let q = theta.innovation_var[k];
    let sd = theta.stationary_var(k).sqrt();
    if !(sd > 0.0) {
        return Axis {
            nodes: vec![mu],
            initial: vec![1.0],
            kernel: vec![1.0],
        };
    }
    let n = grid.nodes;
    let lo = mu - grid.half_width_sd * sd;
    let h = 2.0 * grid.half_width_sd * sd / (n - 1) as f64;
    let nodes: Vec<f64> = (0..n).map(|a| lo + h * a as f64).collect();
    let weight = |a: usize| if a == 0 || a == n - 1 { 0.5 * h } else { h };
    let initial = (0..n).map(|a| weight(a) * normal_pdf(nodes[a], mu, sd)).collect();
    let step_sd = q.sqrt();
    let mut kernel = vec![0.0; n * n];
    for a in 0..n {
        for b in 0..n {
            kernel[a * n + b] = weight(a) * normal_pdf(nodes[a], mu + phi * (nodes[b] - mu), step_sd);
        }
    }
    Axis { nodes, initial, kernel }
}

fn build_axes(theta: &MslParams, grid: &GridSpec) -> Vec<Axis> {
    (0..2 * theta.d_f()).map(|k| build_axis(theta, k, grid)).collect()
}

fn multi_index(mut flat: usize, axes: &[Axis], out: &mut [f64]) {
    for d in (0..axes.len()).rev() {
        let n = axes[d].nodes.len();
        out[d] = axes[d].nodes[flat % n];
        flat /= n;
    }
}

/// Contract `tensor` with each axis kernel in turn.
fn apply_kernels(tensor: &[f64], axes: &[Axis]) -> Vec<f64> {
    let mut cur = tensor.to_vec();
    let mut next = vec![0.0; cur.len()];
    let total = cur.len();
    for (d, axis) in axes.iter().enumerate() {
        let n = axis.nodes.len();
        if n == 1 {
            continue;
        }
        let stride: usize = axes[d + 1..].iter().map(|a| a.nodes.len()).product();
        let block = n * stride;
        for outer in (0..total).step_by(block) {
            for inner in 0..stride {
                let base = outer + inner;
                for a in 0..n {
                    let row = &axis.kernel[a * n..(a + 1) * n];
                    let mut s = 0.0;
                    for (b, k) in row.iter().enumerate() {
                        s += k * cur[base + b * stride];
                    }
                    next[base + a * stride] = s;
                }
            }
        }
        std::mem::swap(&mut cur, &mut next);
    }
    cur
}

/// Log-densities `log g(y | x, j)` for every grid point `x` (outer) and regime `j` (inner).
fn emission_table(model: &PreparedModel, axes: &[Axis], y: &[f64]) -> Vec<Vec<f64>> {
    let m: usize = axes.iter().map(|a| a.nodes.len()).product();
    let s = model.n_regimes();
    map_indexed(m, Execution::Parallel, |flat| {
        let mut x = vec![0.0; axes.len()];
        multi_index(flat, axes, &mut x);
        (0..s).map(|j| dense_logpdf(model, j, &x, y)).collect()
    })
}

/// Log-likelihood by trapezoid quadrature over the log-volatility
/// trajectory on a dense tensor grid, with regimes summed exactly.
///
/// The sum over all grid paths is organized time step by time step, which
/// yields the same value as enumerating every path (see
/// [`grid_likelihood_enumerated`]) at a cost linear in `T`.
pub fn grid_likelihood(theta: &MslParams, space: &SelectorSpace, ys: &[Vec<f64>], grid: &GridSpec) -> Result<f64> {
    grid.validate()?;
    if ys.is_empty() {
        return Err(Error::Config("cannot integrate an empty series".into()));
    }
    let model = PreparedModel::new(theta, space)?;
    let axes = build_axes(theta, grid);
    let m: usize = axes.iter().map(|a| a.nodes.len()).product();
    let s = space.len();
    let per_axis: usize = axes.iter().map(|a| a.nodes.len()).sum();
    let work = m as f64 * s as f64 * ys.len() as f64 * per_axis as f64;
    if work > grid.budget {
        return Err(Error::BudgetExceeded {
            required: work,
            budget: grid.budget,
        });
    }
    let (stay, move_) = (model.transition().diagonal(), model.transition().off_diagonal());

    let mut log_total = 0.0;
    let mut alpha: Vec<Vec<f64>> = vec![vec![0.0; m]; s];
    for (t, y) in ys.iter().enumerate() {
        let log_g = emission_table(&model, &axes, y);
        let g_max = log_g.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
        if !g_max.is_finite() {
            return Err(Error::Numerical("observation density vanishes on the whole grid".into()));
        }
        if t == 0 {
            let mut x_idx = vec![0usize; axes.len()];
            for flat in 0..m {
                let mut rest = flat;
                for d in (0..axes.len()).rev() {
                    x_idx[d] = rest % axes[d].nodes.len();
                    rest /= axes[d].nodes.len();
                }
                let prior: f64 = x_idx.iter().zip(&axes).map(|(&i, a)| a.initial[i]).product();
                for j in 0..s {
                    alpha[j][flat] = prior / s as f64 * (log_g[flat][j] - g_max).exp();
                }
            }
        } else {
            let propagated: Vec<Vec<f64>> = alpha.iter().map(|a| apply_kernels(a, &axes)).collect();
            for flat in 0..m {
                let total: f64 = propagated.iter().map(|p| p[flat]).sum();
                for j in 0..s {
                    let mixed = stay * propagated[j][flat] + move_ * (total - propagated[j][flat]);
                    alpha[j][flat] = mixed * (log_g[flat][j] - g_max).exp();
                }
            }
        }
        let norm: f64 = alpha.iter().flatten().sum();
        if !(norm > 0.0) {
            return Err(Error::Numerical("grid mass vanished".into()));
        }
        alpha.iter_mut().flatten().for_each(|a| *a /= norm);
        log_total += g_max + norm.ln();
    }
    Ok(log_total)
}

/// Naive form of [`grid_likelihood`]: enumerate every grid trajectory,
/// weight it by its quadrature weight and prior density, and add its exact
/// regime-marginal likelihood. Only feasible for tiny grids.
pub fn grid_likelihood_enumerated(theta: &MslParams, space: &SelectorSpace, ys: &[Vec<f64>], grid: &GridSpec) -> Result<f64> {
    grid.validate()?;
    let axes = build_axes(theta, grid);
    let m: usize = axes.iter().map(|a| a.nodes.len()).product();
    let t = ys.len();
    let paths = (m as f64).powi(t as i32) * (space.len() as f64).powi(t as i32);
    if paths > grid.budget {
        return Err(Error::BudgetExceeded {
            required: paths,
            budget: grid.budget,
        });
    }
    let dims = axes.len();
    let index_of = |flat: usize| -> Vec<usize> {
        let mut rest = flat;
        let mut idx = vec![0; dims];
        for d in (0..dims).rev() {
            idx[d] = rest % axes[d].nodes.len();
            rest /= axes[d].nodes.len();
        }
        idx
    };
    let mut terms = Vec::new();
    let mut path = vec![0usize; t];
    loop {
        let idx: Vec<Vec<usize>> = path.iter().map(|&f| index_of(f)).collect();
        let mut log_w = 0.0;
        for d in 0..dims {
            log_w += axes[d].initial[idx[0][d]].ln();
            let n = axes[d].nodes.len();
            for k in 1..t {
                log_w += axes[d].kernel[idx[k][d] * n + idx[k - 1][d]].ln();
            }
        }
        if log_w.is_finite() {
            let logvol: Vec<Vec<f64>> = idx
                .iter()
                .map(|i| i.iter().zip(&axes).map(|(&a, ax)| ax.nodes[a]).collect())
                .collect();
            terms.push(log_w + exact_hmm_likelihood(theta, space, &logvol, ys)?);
        }
        let mut k = t;
        loop {
            if k == 0 {
                return Ok(log_sum_exp(&terms));
            }
            k -= 1;
            path[k] += 1;
            if path[k] < m {
                break;
            }
            path[k] = 0;
        }
    }
}

/// Normalized posterior density of a scalar tabulated on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Posterior1d {
    pub values: Vec<f64>,
    pub density: Vec<f64>,
    pub cdf: Vec<f64>,
}

impl Posterior1d {
    /// Build from unnormalized log-density values on increasing `values`.
    pub fn from_log_density(values: Vec<f64>, log_density: &[f64]) -> Result<Self> {
        if values.len() < 2 || values.len() != log_density.len() {
            return Err(Error::Config("need at least two grid values with matching densities".into()));
        }
        if values.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Config("grid values must be strictly increasing".into()));
        }
        let max = log_density.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(Error::Numerical("posterior vanishes on the whole grid".into()));
        }
        let mut density: Vec<f64> = log_density.iter().map(|l| (l - max).exp()).collect();
        let mut cdf = vec![0.0; values.len()];
        for k in 1..values.len() {
            cdf[k] = cdf[k - 1] + 0.5 * (density[k] + density[k - 1]) * (values[k] - values[k - 1]);
        }
        let total = *cdf.last().unwrap();
        density.iter_mut().for_each(|d| *d /= total);
        cdf.iter_mut().for_each(|c| *c /= total);
        Ok(Self { values, density, cdf })
    }

    /// Trapezoid integral of the density (one by construction).
    pub fn integral(&self) -> f64 {
        self.values
            .windows(2)
            .zip(self.density.windows(2))
            .map(|(v, d)| 0.5 * (d[0] + d[1]) * (v[1] - v[0]))
            .sum()
    }

    pub fn mean(&self) -> f64 {
        self.values
            .windows(2)
            .zip(self.density.windows(2))
            .map(|(v, d)| 0.5 * (v[0] * d[0] + v[1] * d[1]) * (v[1] - v[0]))
            .sum()
    }

    /// CDF at `x`, linear between grid values.
    pub fn cdf_at(&self, x: f64) -> f64 {
        let v = &self.values;
        if x <= v[0] {
            return 0.0;
        }
        if x >= v[v.len() - 1] {
            return 1.0;
        }
        let k = v.partition_point(|&a| a <= x);
        let w = (x - v[k - 1]) / (v[k] - v[k - 1]);
        self.cdf[k - 1] + w * (self.cdf[k] - self.cdf[k - 1])
    }
}

/// Posterior of one scalar parameter with every other parameter fixed:
/// `prior x grid_likelihood` on `values`, normalized by the trapezoid rule.
/// `theta_at(v)` must return the full parameter set with the scalar set to `v`.
pub fn grid_posterior_1d<F, P>(
    space: &SelectorSpace,
    ys: &[Vec<f64>],
    values: &[f64],
    theta_at: F,
    log_prior: P,
    grid: &GridSpec,
) -> Result<Posterior1d>
where
    F: Fn(f64) -> MslParams + Sync,
    P: Fn(f64) -> f64 + Sync,
{
    let log_post: Vec<f64> = map_indexed(values.len(), Execution::Parallel, |k| {
        let v = values[k];
        let lp = log_prior(v);
        if lp == f64::NEG_INFINITY {
            return Ok(f64::NEG_INFINITY);
        }
        Ok(lp + grid_likelihood(&theta_at(v), space, ys, grid)?)
    })
    .into_iter()
    .collect::<Result<_>>()?;
    Posterior1d::from_log_density(values.to_vec(), &log_post)
}

/// Kolmogorov-Smirnov distance between the empirical law of `samples` and `cdf`.
pub fn ks_distance<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::conditional_obs_logdensity;
    use nalgebra::DMatrix;

    fn small_theta() -> MslParams {
        MslParams {
            loadings: DMatrix::from_column_slice(2, 1, &[1.0, 0.8]),
            idio_var: vec![0.5, 0.7],
            logvol_mean: vec![0.2, -0.1],
            persistence: vec![0.6, 0.5],
            innovation_var: vec![0.3, 0.4],
            risk_premia: vec![0.1],
            regime_stay: 0.8,
        }
    }

    #[test]
    fn single_regime_is_product_of_densities() {
        let theta = small_theta();
        let space = SelectorSpace::enumerate(2, 0).unwrap();
        let xs = vec![vec![0.1, 0.3], vec![-0.4, 0.0]];
        let ys = vec![vec![0.5, -0.3], vec![1.1, 0.9]];
        let direct: f64 = xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| conditional_obs_logdensity(&theta, &space, 1, x, y).unwrap())
            .sum();
        assert!((exact_hmm_likelihood(&theta, &space, &xs, &ys).unwrap() - direct).abs() < 1e-12);
    }

    #[test]
    fn forward_and_enumeration_agree() {
        let theta = small_theta();
        let space = SelectorSpace::enumerate(2, 1).unwrap();
        let xs = vec![vec![0.1, 0.3], vec![-0.4, 1.0], vec![0.2, 0.5]];
        let ys = vec![vec![0.5, -0.3], vec![1.1, 2.9], vec![-0.3, 0.2]];
        let a = exact_hmm_likelihood(&theta, &space, &xs, &ys).unwrap();
        let b = enumerated_hmm_likelihood(&theta, &space, &xs, &ys, 1e6).unwrap();
        assert!((a - b).abs() < 1e-10 * a.abs());
        assert!(enumerated_hmm_likelihood(&theta, &space, &xs, &ys, 10.0).is_err());
    }

    #[test]
    fn degenerate_logvol_collapses_grid() {
        let mut theta = small_theta();
        theta.innovation_var = vec![0.0, 0.0];
        let space = SelectorSpace::enumerate(2, 1).unwrap();
        let ys = vec![vec![0.5, -0.3], vec![1.1, 2.9]];
        let xs = vec![theta.logvol_mean.clone(); 2];
        let grid = grid_likelihood(&theta, &space, &ys, &GridSpec::default()).unwrap();
        let exact = exact_hmm_likelihood(&theta, &space, &xs, &ys).unwrap();
        assert!((grid - exact).abs() < 1e-12);
    }

    #[test]
    fn tensor_recursion_equals_path_enumeration() {
        let theta = small_theta();
        let space = SelectorSpace::enumerate(2, 1).unwrap();
        let ys = vec![vec![0.5, -0.3], vec![1.1, 2.9]];
        let grid = GridSpec {
            nodes: 5,
            half_width_sd: 3.0,
            budget: 1e7,
        };
        let a = grid_likelihood(&theta, &space, &ys, &grid).unwrap();
        let b = grid_likelihood_enumerated(&theta, &space, &ys, &grid).unwrap();
        assert!((a - b).abs() < 1e-10 * a.abs(), "{a} vs {b}");
    }

    #[test]
    fn refinement_converges() {
        let theta = small_theta();
        let space = SelectorSpace::enumerate(2, 1).unwrap();
        let ys = vec![vec![0.5, -0.3], vec![1.1, 2.9], vec![-2.0, -1.5]];
        let coarse = grid_likelihood(&theta, &space, &ys, &GridSpec::with_nodes(11)).unwrap();
        let mid = grid_likelihood(&theta, &space, &ys, &GridSpec::with_nodes(21)).unwrap();
        let fine = grid_likelihood(&theta, &space, &ys, &GridSpec::with_nodes(41)).unwrap();
        assert!((fine - mid).abs() <= (mid - coarse).abs());
        assert!(((fine - mid).exp() - 1.0).abs() < 1e-3);
    }

    #[test]
    fn budget_is_enforced() {
        let theta = small_theta();
        let space = SelectorSpace::enumerate(2, 1).unwrap();
        let ys = vec![vec![0.5, -0.3]];
        let grid = GridSpec {
            budget: 10.0,
            ..GridSpec::default()
        };
        assert!(matches!(
            grid_likelihood(&theta, &space, &ys, &grid),
            Err(Error::BudgetExceeded { .. })
        ));
        assert!(grid_likelihood(&theta, &space, &ys, &GridSpec::with_nodes(2)).is_err());
    }

    #[test]
    fn flat_likelihood_returns_prior() {
        let values: Vec<f64> = (0..=400).map(|k| -4.0 + 0.02 * k as f64).collect();
        let log_prior: Vec<f64> = values.iter().map(|v| -0.5 * v * v).collect();
        let post = Posterior1d::from_log_density(values.clone(), &log_prior).unwrap();
        assert!((post.integral() - 1.0).abs() < 1e-12);
        let normal = statrs::distribution::Normal::new(0.0, 1.0).unwrap();
        use statrs::distribution::ContinuousCDF;
        for &x in &[-1.0, 0.0, 0.5, 2.0] {
            assert!((post.cdf_at(x) - normal.cdf(x)).abs() < 1e-3);
        }
    }

    #[test]
    fn ks_distance_of_exact_quantiles_is_small() {
        let n = 1000;
        let samples: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        assert!(ks_distance(&samples, |x| x.clamp(0.0, 1.0)) <= 0.5 / n as f64 + 1e-12);
        assert!((ks_distance(&samples, |_| 0.0) - 1.0).abs() < 1e-12);
    }
}
