use log::warn;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};

/// Unconditional (Kupiec) and conditional (Christoffersen) coverage tests of
/// a VaR exceedance sequence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoverageReport {
    pub n: usize,
    pub exceedances: usize,
    pub lr_uc: f64,
    pub p_uc: f64,
    pub lr_ind: f64,
    pub lr_cc: f64,
    pub p_cc: f64,
    /// Some count was zero, so a `0 log 0 = 0` term entered the statistics.
    pub degenerate: bool,
}

/// `k log p`, with `0 log 0 = 0`.
fn xlogy(k: usize, p: f64) -> f64 {
    if k == 0 {
        0.0
    } else {
        k as f64 * p.ln()
    }
}

fn bernoulli_loglik(zeros: usize, ones: usize, p: f64) -> f64 {
    xlogy(zeros, 1.0 - p) + xlogy(ones, p)
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn coverage_tests(flags: &[bool], alpha: f64) -> Result<CoverageReport> {
    if flags.len() < 2 {
        return Err(Error::Config("coverage tests need at least two weeks".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Config(format!("coverage level {alpha} must lie in (0, 1)")));
    }
    let n = flags.len();
    let x = flags.iter().filter(|&&f| f).count();
    let pi = x as f64 / n as f64;
    let lr_uc = -2.0 * (bernoulli_loglik(n - x, x, alpha) - bernoulli_loglik(n - x, x, pi));

    let mut counts = [[0usize; 2]; 2];
    for w in flags.windows(2) {
        counts[usize::from(w[0])][usize::from(w[1])] += 1;
    }
    let [[n00, n01], [n10, n11]] = counts;
    let pi01 = ratio(n01, n00 + n01);
    let pi11 = ratio(n11, n10 + n11);
    let pi2 = ratio(n01 + n11, n - 1);
    let restricted = bernoulli_loglik(n00 + n10, n01 + n11, pi2);
    let markov = bernoulli_loglik(n00, n01, pi01) + bernoulli_loglik(n10, n11, pi11);
    let lr_ind = (-2.0 * (restricted - markov)).max(0.0);
    let lr_cc = lr_uc + lr_ind;

    let degenerate = x == 0 || x == n || counts.iter().flatten().any(|&c| c == 0);
    if degenerate {
        warn!("coverage tests: degenerate exceedance counts (x={x}, n={n}); 0 log 0 taken as 0");
    }
    let chi1 = ChiSquared::new(1.0).expect("1 dof");
    let chi2 = ChiSquared::new(2.0).expect("2 dof");
    Ok(CoverageReport {
        n,
        exceedances: x,
        lr_uc,
        p_uc: chi1.sf(lr_uc),
        lr_ind,
        lr_cc,
        p_cc: chi2.sf(lr_cc),
        degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{Binomial, Discrete};

    fn spaced(n: usize, x: usize) -> Vec<bool> {
        let mut f = vec![false; n];
        for k in 0..x {
            f[k * n / x] = true;
        }
        f
    }

    #[test]
    fn exact_rate_gives_zero_unconditional_statistic() {
        let r = coverage_tests(&spaced(100, 5), 0.05).unwrap();
        assert!(r.lr_uc.abs() < 1e-12);
        assert!((r.p_uc - 1.0).abs() < 1e-9);
    }

    #[test]
    fn unconditional_statistic_matches_binomial_ratio() {
        let (n, x) = (336u64, 22u64);
        let flags = spaced(n as usize, x as usize);
        let r = coverage_tests(&flags, 0.05).unwrap();
        let fit = Binomial::new(x as f64 / n as f64, n).unwrap().ln_pmf(x);
        let null = Binomial::new(0.05, n).unwrap().ln_pmf(x);
        assert!((r.lr_uc - 2.0 * (fit - null)).abs() < 1e-9);
        assert!((r.lr_uc - 1.55).abs() < 0.01, "{}", r.lr_uc);
        assert!(r.p_uc > 0.05 && r.p_cc > 0.05);
    }

    #[test]
    fn clustered_exceedances_reject_conditional_coverage() {
        let mut flags = vec![false; 300];
        flags[100..115].iter_mut().for_each(|f| *f = true);
        let r = coverage_tests(&flags, 0.05).unwrap();
        assert!(r.p_cc < 1e-6, "{}", r.p_cc);
        assert!(r.lr_ind > 30.0);
    }

    #[test]
    fn degenerate_sequences_are_flagged() {
        let r = coverage_tests(&[false; 50], 0.05).unwrap();
        assert!(r.degenerate && r.lr_uc.is_finite() && r.lr_cc.is_finite());
        assert_eq!(r.exceedances, 0);
        let r = coverage_tests(&[true; 50], 0.05).unwrap();
        assert!(r.degenerate && r.lr_uc > 100.0);
        assert!(coverage_tests(&[true], 0.05).is_err());
    }
}
