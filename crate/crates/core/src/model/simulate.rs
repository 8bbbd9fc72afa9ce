use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::model::{MslParams, PreparedModel};
use crate::rng::stream;
use crate::selector::SelectorSpace;

/// Latent trajectory behind a simulated return series.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentPath {
    /// 1-based regime per time step.
    pub regimes: Vec<usize>,
    /// `2 d_f` log-volatilities per time step (market block, then panic block).
    pub logvol: Vec<Vec<f64>>,
    /// `2 d_f` factor draws per time step.
    pub factors: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub returns: Vec<Vec<f64>>,
    pub truth: LatentPath,
}

/// Simulate `t` observations.
///
/// The regime starts from the uniform law and follows the symmetric kernel;
/// log-volatilities start from their stationary normal law and follow AR(1).
pub fn simulate(theta: &MslParams, space: &SelectorSpace, t: usize, seed: u64) -> Result<Simulation> {
    if t == 0 {
        return Err(Error::Config("simulation length must be at least 1".into()));
    }
    let model = PreparedModel::new(theta, space)?;
    let (d_y, d_f) = (theta.d_y(), theta.d_f());
    let mut rng = stream(seed, 0, 0);
    let n_regimes = space.len();

    let mut regimes = Vec::with_capacity(t);
    let mut logvol = Vec::with_capacity(t);
    let mut factors = Vec::with_capacity(t);
    let mut returns = Vec::with_capacity(t);

    let mut regime = rng.random_range(0..n_regimes);
    let mut x = vec![0.0; 2 * d_f];
    model.sample_initial_logvol(&mut rng, &mut x);
    for step in 0..t {
        if step > 0 {
            regime = model.transition().sample_next(regime, &mut rng);
            let prev = x.clone();
            model.sample_next_logvol(&prev, &mut rng, &mut x);
        }
        let f: Vec<f64> = (0..2 * d_f)
            .map(|k| {
                let z: f64 = rng.sample(StandardNormal);
                let premium = if k < d_f { theta.risk_premia[k] } else { 0.0 };
                premium + (0.5 * x[k]).exp() * z
            })
            .collect();
        let mask = space.mask(regime);
        let y: Vec<f64> = (0..d_y)
            .map(|a| {
                let selected = (mask >> a) & 1 == 1;
                let mut v = 0.0;
                for k in 0..d_f {
                    let b = theta.loadings[(a, k)];
                    v += b * f[k];
                    if selected {
                        v += b * f[d_f + k];
                    }
                }
                let noise: f64 = rng.sample(StandardNormal);
                v + theta.idio_var[a].sqrt() * noise
            })
            .collect();
        regimes.push(regime + 1);
        logvol.push(x.clone());
        factors.push(f);
        returns.push(y);
    }
    Ok(Simulation {
        returns,
        truth: LatentPath {
            regimes,
            logvol,
            factors,
        },
    })
}
