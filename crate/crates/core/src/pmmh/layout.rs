use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{inv_gamma_logpdf, normal_logpdf, uniform_logpdf, MslParams, PriorSpec};

/// Location of one scalar inside [`MslParams`]. Indices are 0-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Slot {
    Loading(usize, usize),
    Persistence(usize),
    LogvolMean(usize),
    InnovationVar(usize),
    IdioVar(usize),
    RiskPremium(usize),
    Stay,
}

impl Slot {
    pub fn get(self, theta: &MslParams) -> f64 {
        match self {
            Slot::Loading(i, j) => theta.loadings[(i, j)],
            Slot::Persistence(k) => theta.persistence[k],
            Slot::LogvolMean(k) => theta.logvol_mean[k],
            Slot::InnovationVar(k) => theta.innovation_var[k],
            Slot::IdioVar(i) => theta.idio_var[i],
            Slot::RiskPremium(k) => theta.risk_premia[k],
            Slot::Stay => theta.regime_stay,
        }
    }

    pub fn set(self, theta: &mut MslParams, v: f64) {
        match self {
            Slot::Loading(i, j) => theta.loadings[(i, j)] = v,
            Slot::Persistence(k) => theta.persistence[k] = v,
            Slot::LogvolMean(k) => theta.logvol_mean[k] = v,
            Slot::InnovationVar(k) => theta.innovation_var[k] = v,
            Slot::IdioVar(i) => theta.idio_var[i] = v,
            Slot::RiskPremium(k) => theta.risk_premia[k] = v,
            Slot::Stay => theta.regime_stay = v,
        }
    }

    /// Marginal prior log-density of this scalar.
    pub fn log_prior(self, v: f64, prior: &PriorSpec) -> f64 {
        let lp = match self {
            Slot::Loading(..) => normal_logpdf(v, prior.loading.0, prior.loading.1),
            Slot::Persistence(_) => uniform_logpdf(v, prior.persistence.0, prior.persistence.1),
            Slot::LogvolMean(_) => normal_logpdf(v, prior.logvol_mean.0, prior.logvol_mean.1),
            Slot::InnovationVar(_) => inv_gamma_logpdf(v, prior.innovation_var.0, prior.innovation_var.1),
            Slot::IdioVar(_) => inv_gamma_logpdf(v, prior.idio_var.0, prior.idio_var.1),
            Slot::RiskPremium(_) => uniform_logpdf(v, prior.risk_premium.0, prior.risk_premium.1),
            Slot::Stay => uniform_logpdf(v, prior.stay.0, prior.stay.1),
        };
        if lp.is_nan() {
            f64::NEG_INFINITY
        } else {
            lp
        }
    }

    /// Map to the unconstrained sampling coordinate implied by the prior support.
    pub fn bijection(self, prior: &PriorSpec) -> Bijection {
        match self {
            Slot::Loading(..) | Slot::LogvolMean(_) => Bijection::Identity,
            Slot::InnovationVar(_) | Slot::IdioVar(_) => Bijection::Log,
            Slot::Persistence(_) => Bijection::ScaledLogit {
                lo: prior.persistence.0,
                hi: prior.persistence.1,
            },
            Slot::RiskPremium(_) => Bijection::ScaledLogit {
                lo: prior.risk_premium.0,
                hi: prior.risk_premium.1,
            },
            Slot::Stay => Bijection::ScaledLogit {
                lo: prior.stay.0,
                hi: prior.stay.1,
            },
        }
    }
}

/// Named, ordered list of parameter slots.
///
/// [`ParamLayout::full`] lists every non-structural parameter in the order
/// loadings, AR coefficients, log-volatility means, innovation variances,
/// idiosyncratic variances, risk premia, regime persistence.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamLayout {
    names: Vec<String>,
    slots: Vec<Slot>,
}

impl ParamLayout {
    pub fn full(d_y: usize, d_f: usize) -> Self {
        let mut out = Self {
            names: Vec::new(),
            slots: Vec::new(),
        };
        for j in 0..d_f {
            for i in j + 1..d_y {
                let name = if d_f == 1 {
                    format!("beta{}", i + 1)
                } else {
                    format!("beta{}_{}", i + 1, j + 1)
                };
                out.push(name, Slot::Loading(i, j));
            }
        }
        for k in 0..2 * d_f {
            out.push(format!("phi{}", k + 1), Slot::Persistence(k));
        }
        for k in 0..2 * d_f {
            out.push(format!("mu{}", k + 1), Slot::LogvolMean(k));
        }
        for k in 0..2 * d_f {
            out.push(format!("ss{}", k + 1), Slot::InnovationVar(k));
        }
        for i in 0..d_y {
            out.push(format!("R{}", i + 1), Slot::IdioVar(i));
        }
        for k in 0..d_f {
            out.push(format!("lambda{}", k + 1), Slot::RiskPremium(k));
        }
        out.push("p".into(), Slot::Stay);
        out
    }

    fn push(&mut self, name: String, slot: Slot) {
        self.names.push(name);
        self.slots.push(slot);
    }

    /// Keep only the named parameters, in layout order.
    pub fn restrict<S: AsRef<str>>(&self, keep: &[S]) -> Result<Self> {
        for k in keep {
            if !self.names.iter().any(|n| n == k.as_ref()) {
                return Err(Error::Config(format!("unknown parameter '{}'", k.as_ref())));
            }
        }
        let mut out = Self {
            names: Vec::new(),
            slots: Vec::new(),
        };
        for (n, s) in self.names.iter().zip(&self.slots) {
            if keep.iter().any(|k| k.as_ref() == n) {
                out.push(n.clone(), *s);
            }
        }
        Ok(out)
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn slots(&self) -> &[Slot] {
        &self.slots
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn values(&self, theta: &MslParams) -> Vec<f64> {
        self.slots.iter().map(|s| s.get(theta)).collect()
    }

    /// Write `values` (in layout order) into a copy of `base`.
    pub fn apply(&self, base: &MslParams, values: &[f64]) -> MslParams {
        let mut theta = base.clone();
        for (s, &v) in self.slots.iter().zip(values) {
            s.set(&mut theta, v);
        }
        theta
    }

    /// Sum of marginal prior log-densities of the listed parameters.
    pub fn log_prior(&self, theta: &MslParams, prior: &PriorSpec) -> f64 {
        self.slots.iter().map(|s| s.log_prior(s.get(theta), prior)).sum()
    }
}

/// Monotone map from an unconstrained coordinate `z` to a natural value `x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bijection {
    Identity,
    /// `x = exp(z)`
    Log,
    /// `x = lo + (hi - lo) / (1 + exp(-z))`
    ScaledLogit {
        lo: f64,
        hi: f64,
    },
}

fn log_sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        -(-z).exp().ln_1p()
    } else {
        z - z.exp().ln_1p()
    }
}

impl Bijection {
    pub fn to_natural(self, z: f64) -> f64 {
        match self {
            Bijection::Identity => z,
            Bijection::Log => z.exp(),
            Bijection::ScaledLogit { lo, hi } => {
                let s = if z >= 0.0 {
                    1.0 / (1.0 + (-z).exp())
                } else {
                    let e = z.exp();
                    e / (1.0 + e)
                };
                lo + (hi - lo) * s
            }
        }
    }

    /// Inverse map; values outside the support give non-finite output.
    pub fn from_natural(self, x: f64) -> f64 {
        match self {
            Bijection::Identity => x,
            Bijection::Log => x.ln(),
            Bijection::ScaledLogit { lo, hi } => ((x - lo) / (hi - x)).ln(),
        }
    }

    /// `log |dx / dz|`.
    pub fn log_abs_jacobian(self, z: f64) -> f64 {
        match self {
            Bijection::Identity => 0.0,
            Bijection::Log => z,
            Bijection::ScaledLogit { lo, hi } => (hi - lo).ln() + log_sigmoid(z) + log_sigmoid(-z),
        }
    }
}

/// Transformed coordinates of the free parameters, on top of a base
/// parameter set that supplies every fixed value.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamTransform {
    layout: ParamLayout,
    bijections: Vec<Bijection>,
    base: MslParams,
}

impl ParamTransform {
    pub fn new(layout: ParamLayout, base: MslParams, prior: &PriorSpec) -> Self {
        let bijections = layout.slots().iter().map(|s| s.bijection(prior)).collect();
        Self {
            layout,
            bijections,
            base,
        }
    }

    pub fn dim(&self) -> usize {
        self.layout.len()
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn bijections(&self) -> &[Bijection] {
        &self.bijections
    }

    pub fn base(&self) -> &MslParams {
        &self.base
    }

    pub fn to_natural(&self, z: &[f64]) -> MslParams {
        let values: Vec<f64> = self.bijections.iter().zip(z).map(|(b, &z)| b.to_natural(z)).collect();
        self.layout.apply(&self.base, &values)
    }

    /// Transformed coordinates of `theta`; fails if a free value lies outside its support.
    pub fn from_natural(&self, theta: &MslParams) -> Result<Vec<f64>> {
        self.layout
            .values(theta)
            .iter()
            .zip(&self.bijections)
            .zip(self.layout.names())
            .map(|((&x, b), name)| {
                let z = b.from_natural(x);
                if z.is_finite() {
                    Ok(z)
                } else {
                    Err(Error::Domain(format!("{name}={x} lies outside the support of its prior")))
                }
            })
            .collect()
    }

    pub fn log_abs_jacobian(&self, z: &[f64]) -> f64 {
        self.bijections.iter().zip(z).map(|(b, &z)| b.log_abs_jacobian(z)).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{log_prior, params::toy_params};
    use proptest::prelude::*;

    #[test]
    fn one_factor_names_follow_table_order() {
        let l = ParamLayout::full(3, 1);
        let expected = [
            "beta2", "beta3", "phi1", "phi2", "mu1", "mu2", "ss1", "ss2", "R1", "R2", "R3", "lambda1", "p",
        ];
        assert_eq!(l.names(), expected);
        let l2 = ParamLayout::full(3, 2);
        assert_eq!(&l2.names()[..3], ["beta2_1", "beta3_1", "beta3_2"]);
        assert_eq!(l2.len(), 3 + 12 + 3 + 2 + 1);
    }

    #[test]
    fn full_layout_prior_matches_joint_prior() {
        let prior = PriorSpec::default();
        let mut theta = toy_params(3);
        theta.persistence = vec![0.6, 0.7];
        theta.risk_premia = vec![0.001];
        let l = ParamLayout::full(3, 1);
        let a = l.log_prior(&theta, &prior);
        let b = log_prior(&theta, &prior);
        assert!((a - b).abs() < 1e-10, "{a} vs {b}");
    }

    #[test]
    fn restrict_keeps_order_and_rejects_unknown() {
        let l = ParamLayout::full(3, 1);
        let r = l.restrict(&["p", "lambda1"]).unwrap();
        assert_eq!(r.names(), ["lambda1", "p"]);
        assert!(l.restrict(&["gamma"]).is_err());
    }

    #[test]
    fn jacobian_matches_finite_difference() {
        let maps = [
            Bijection::Identity,
            Bijection::Log,
            Bijection::ScaledLogit { lo: 0.4, hi: 0.9 },
            Bijection::ScaledLogit {
                lo: 1.5e-4,
                hi: 2.708178e-3,
            },
        ];
        for b in maps {
            for z in [-3.0, -0.2, 0.0, 1.7] {
                let h = 1e-6;
                let fd = (b.to_natural(z + h) - b.to_natural(z - h)) / (2.0 * h);
                assert!((fd.ln() - b.log_abs_jacobian(z)).abs() < 1e-6);
            }
        }
    }

    proptest! {
        #[test]
        fn round_trip(phi in 0.41f64..0.89, lambda in 2e-4f64..2.6e-3, p in 0.01f64..0.99,
                      r in 0.01f64..20.0, mu in -3.0f64..3.0, b in -2.0f64..2.0) {
            let prior = PriorSpec::default();
            let mut theta = toy_params(3);
            theta.persistence[1] = phi;
            theta.risk_premia[0] = lambda;
            theta.regime_stay = p;
            theta.idio_var[2] = r;
            theta.logvol_mean[0] = mu;
            theta.loadings[(1, 0)] = b;
            theta.persistence[0] = 0.5;
            let t = ParamTransform::new(ParamLayout::full(3, 1), theta.clone(), &prior);
            let z = t.from_natural(&theta).unwrap();
            let back = t.to_natural(&z);
            for (x, y) in ParamLayout::full(3, 1).values(&theta).iter().zip(ParamLayout::full(3, 1).values(&back)) {
                prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
            }
            prop_assert!(t.log_abs_jacobian(&z).is_finite());
        }
    }

    #[test]
    fn out_of_support_values_are_rejected() {
        let prior = PriorSpec::default();
        let theta = toy_params(3);
        // toy persistence 0.6/0.7 is fine; risk premium 0.1 is outside its box
        let t = ParamTransform::new(ParamLayout::full(3, 1), theta.clone(), &prior);
        assert!(t.from_natural(&theta).is_err());
    }
}
