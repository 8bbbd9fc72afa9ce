//! Reparameterizations of the factor columns that leave the likelihood
//! unchanged. Outputs generally break the identified loadings structure and
//! exist to check likelihood invariance.

use crate::error::{Error, Result};
use crate::model::MslParams;

/// Rescale factor columns by positive `scales` (the diagonal of `P`).
///
/// Gives `B P`, `P^-1 lambda` and shifts both log-volatility blocks by
/// `2 log(1 / P_kk)`, so every factor-driven covariance term is unchanged.
pub fn rescale_factors(theta: &MslParams, scales: &[f64]) -> Result<MslParams> {
    let d_f = theta.d_f();
    if scales.len() != d_f {
        return Err(Error::Config(format!("expected {d_f} scales, got {}", scales.len())));
    }
    if let Some(s) = scales.iter().find(|&&s| !(s > 0.0 && s.is_finite())) {
        return Err(Error::Domain(format!("scale {s} must be positive")));
    }
    let mut out = theta.clone();
    for (k, &s) in scales.iter().enumerate() {
        out.loadings.column_mut(k).scale_mut(s);
        out.risk_premia[k] /= s;
        let shift = 2.0 * (1.0 / s).ln();
        out.logvol_mean[k] += shift;
        out.logvol_mean[d_f + k] += shift;
    }
    Ok(out)
}

/// Relabel factors: new factor `j` is old factor `perm[j]`, applied to the
/// loadings columns, the risk premia, and both log-volatility blocks alike.
pub fn permute_factors(theta: &MslParams, perm: &[usize]) -> Result<MslParams> {
    let d_f = theta.d_f();
    let mut seen = vec![false; d_f];
    if perm.len() != d_f {
        return Err(Error::Config(format!("expected a permutation of {d_f} factors")));
    }
    for &p in perm {
        if p >= d_f || seen[p] {
            return Err(Error::Domain(format!("{perm:?} is not a permutation of 0..{d_f}")));
        }
        seen[p] = true;
    }
    let mut out = theta.clone();
    for (j, &src) in perm.iter().enumerate() {
        out.loadings.set_column(j, &theta.loadings.column(src));
        out.risk_premia[j] = theta.risk_premia[src];
        for block in [0, d_f] {
            out.logvol_mean[block + j] = theta.logvol_mean[block + src];
            out.persistence[block + j] = theta.persistence[block + src];
            out.innovation_var[block + j] = theta.innovation_var[block + src];
        }
    }
    Ok(out)
}

/// Flip the sign of factor columns by `signs` (each `+1` or `-1`).
///
/// The risk premia flip with the columns so that the mean `B lambda` is kept.
pub fn flip_factor_signs(theta: &MslParams, signs: &[f64]) -> Result<MslParams> {
    let d_f = theta.d_f();
    if signs.len() != d_f {
        return Err(Error::Config(format!("expected {d_f} signs, got {}", signs.len())));
    }
    if let Some(s) = signs.iter().find(|&&s| s != 1.0 && s != -1.0) {
        return Err(Error::Domain(format!("sign {s} must be +1 or -1")));
    }
    let mut out = theta.clone();
    for (k, &s) in signs.iter().enumerate() {
        out.loadings.column_mut(k).scale_mut(s);
        out.risk_premia[k] *= s;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::params::toy_params;
    use nalgebra::DMatrix;

    fn two_factor() -> MslParams {
        MslParams {
            loadings: DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.7, 1.0, -0.4, 0.9]),
            idio_var: vec![0.6, 0.8, 1.1],
            logvol_mean: vec![0.1, -0.3, 0.2, 0.0],
            persistence: vec![0.5, 0.6, 0.7, 0.8],
            innovation_var: vec![0.2, 0.3, 0.4, 0.5],
            risk_premia: vec![0.3, -0.1],
            regime_stay: 0.9,
        }
    }

    #[test]
    fn identity_transforms_are_no_ops() {
        let theta = two_factor();
        assert_eq!(rescale_factors(&theta, &[1.0, 1.0]).unwrap(), theta);
        assert_eq!(permute_factors(&theta, &[0, 1]).unwrap(), theta);
        assert_eq!(flip_factor_signs(&theta, &[1.0, 1.0]).unwrap(), theta);
    }

    #[test]
    fn doubling_one_factor() {
        let theta = toy_params(3);
        let out = rescale_factors(&theta, &[2.0]).unwrap();
        assert_eq!(out.loadings, &theta.loadings * 2.0);
        assert!((out.logvol_mean[0] - (theta.logvol_mean[0] + 2.0 * 0.5f64.ln())).abs() < 1e-15);
        assert!((out.logvol_mean[1] - (theta.logvol_mean[1] + 2.0 * 0.5f64.ln())).abs() < 1e-15);
        assert_eq!(out.risk_premia[0], theta.risk_premia[0] / 2.0);
        assert!(rescale_factors(&theta, &[0.0]).is_err());
        assert!(rescale_factors(&theta, &[1.0, 1.0]).is_err());
    }

    #[test]
    fn swapping_two_factors() {
        let theta = two_factor();
        let out = permute_factors(&theta, &[1, 0]).unwrap();
        assert_eq!(out.loadings.column(0), theta.loadings.column(1));
        assert_eq!(out.loadings.column(1), theta.loadings.column(0));
        assert_eq!(out.logvol_mean, vec![-0.3, 0.1, 0.0, 0.2]);
        assert_eq!(out.persistence, vec![0.6, 0.5, 0.8, 0.7]);
        assert_eq!(out.innovation_var, vec![0.3, 0.2, 0.5, 0.4]);
        assert_eq!(out.risk_premia, vec![-0.1, 0.3]);
        assert!(permute_factors(&theta, &[0, 0]).is_err());
        assert!(permute_factors(&theta, &[0, 2]).is_err());
    }

    #[test]
    fn sign_flip_keeps_mean() {
        let theta = two_factor();
        let out = flip_factor_signs(&theta, &[-1.0, 1.0]).unwrap();
        let mean = |t: &MslParams| &t.loadings * nalgebra::DVector::from_column_slice(&t.risk_premia);
        assert!((mean(&out) - mean(&theta)).abs().max() < 1e-15);
        assert!(flip_factor_signs(&theta, &[0.5, 1.0]).is_err());
    }
}
