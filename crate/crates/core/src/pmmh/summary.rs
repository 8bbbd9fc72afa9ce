use std::io::Write;

use crate::error::{Error, Result};

/// Posterior summary of one parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub name: String,
    pub mean: f64,
    pub mcse: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Linear-interpolation sample quantile of sorted data (`R` type 7).
pub fn quantile_sorted(sorted: &[f64], prob: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * prob;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Monte Carlo standard error of the mean by non-overlapping batch means
/// with `floor(sqrt(n))` draws per batch.
pub fn batch_means_mcse(xs: &[f64]) -> f64 {
    let n = xs.len();
    let b = (n as f64).sqrt().floor() as usize;
    let a = n.checked_div(b).unwrap_or(0);
    if a < 2 {
        return f64::NAN;
    }
    let used = &xs[n - a * b..];
    let means: Vec<f64> = used.chunks(b).map(|c| c.iter().sum::<f64>() / b as f64).collect();
    let grand = means.iter().sum::<f64>() / a as f64;
    let var_batch = means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / (a as f64 - 1.0);
    (b as f64 * var_batch / (a * b) as f64).sqrt()
}

/// Posterior mean, batch-means MCSE and equal-tailed 95% interval of each
/// column of `draws` (one row per iteration), discarding the first `burn_in` rows.
pub fn summarize_chain(names: &[String], draws: &[Vec<f64>], burn_in: usize) -> Result<Vec<SummaryRow>> {
    if burn_in >= draws.len() {
        return Err(Error::Config(format!(
            "burn-in {burn_in} leaves no draws out of {}",
            draws.len()
        )));
    }
    let kept = &draws[burn_in..];
    if kept.iter().any(|r| r.len() != names.len()) {
        return Err(Error::Config("draw width does not match parameter names".into()));
    }
    Ok(names
        .iter()
        .enumerate()
        .map(|(k, name)| {
            let mut col: Vec<f64> = kept.iter().map(|r| r[k]).collect();
            let mean = col.iter().sum::<f64>() / col.len() as f64;
            let mcse = batch_means_mcse(&col);
            col.sort_by(|a, b| a.total_cmp(b));
            SummaryRow {
                name: name.clone(),
                mean,
                mcse,
                lower: quantile_sorted(&col, 0.025),
                upper: quantile_sorted(&col, 0.975),
            }
        })
        .collect())
}

/// Write a summary as CSV with header `,est,mcse,95.credible.lower,95.credible.upper`.
pub fn write_summary<W: Write>(rows: &[SummaryRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["", "est", "mcse", "95.credible.lower", "95.credible.upper"])?;
    for r in rows {
        w.write_record([
            r.name.clone(),
            r.mean.to_string(),
            r.mcse.to_string(),
            r.lower.to_string(),
            r.upper.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("summary", e))?;
    Ok(())
}
