use std::fs;
use std::io::Write;
use std::path::Path;

use chrono::NaiveDate;
use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::forecast::BacktestReport;
use crate::model::{LatentPath, MslParams};
use crate::pmmh::{ChainState, ParamLayout};
use crate::selector::SelectorSpace;

fn create(path: &Path) -> Result<fs::File> {
    fs::File::create(path).map_err(|e| Error::io(path, e))
}

fn flush<W: Write>(mut w: csv::Writer<W>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

/// Write `parameter,value` rows for every non-structural parameter.
pub fn write_theta(theta: &MslParams, path: &Path) -> Result<()> {
    let layout = ParamLayout::full(theta.d_y(), theta.d_f());
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["parameter", "value"])?;
    for (name, v) in layout.names().iter().zip(layout.values(theta)) {
        w.write_record([name.clone(), v.to_string()])?;
    }
    flush(w, path)
}

/// Read a parameter file written by [`write_theta`]. Dimensions are taken
/// from the `R*` and `lambda*` rows; loadings get a unit diagonal and zeros above it.
pub fn read_theta(path: &Path) -> Result<MslParams> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_theta(&text)
}

pub fn parse_theta(text: &str) -> Result<MslParams> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let mut rows: Vec<(String, f64)> = Vec::new();
    for (k, rec) in reader.records().enumerate() {
        let line = k + 2;
        let rec = rec.map_err(|e| Error::data(line, None, e.to_string()))?;
        if rec.len() != 2 {
            return Err(Error::data(line, None, "expected 'parameter,value'"));
        }
        let v: f64 = rec[1]
            .parse()
            .map_err(|_| Error::data(line, Some("value"), format!("'{}' is not a number", &rec[1])))?;
        if rows.iter().any(|(n, _)| n == &rec[0]) {
            return Err(Error::data(
                line,
                Some("parameter"),
                format!("duplicate parameter '{}'", &rec[0]),
            ));
        }
        rows.push((rec[0].to_owned(), v));
    }
    theta_from_pairs(&rows)
}

/// Build parameters from `(name, value)` pairs covering the full layout.
pub fn theta_from_pairs(rows: &[(String, f64)]) -> Result<MslParams> {
    let count = |prefix: &str| {
        rows.iter()
            .filter(|(n, _)| {
                n.strip_prefix(prefix)
                    .is_some_and(|r| !r.is_empty() && r.chars().all(|c| c.is_ascii_digit()))
            })
            .count()
    };
    let (d_y, d_f) = (count("R"), count("lambda"));
    if d_y == 0 || d_f == 0 {
        return Err(Error::Config("parameter list needs R1.. and lambda1.. entries".into()));
    }
    let layout = ParamLayout::full(d_y, d_f);
    if rows.len() != layout.len() {
        return Err(Error::Config(format!(
            "parameter list has {} entries, expected {} for d_y={d_y}, d_f={d_f}",
            rows.len(),
            layout.len()
        )));
    }
    let mut values = vec![f64::NAN; layout.len()];
    for (name, v) in rows {
        let pos = layout
            .position(name)
            .ok_or_else(|| Error::Config(format!("unknown parameter '{name}'")))?;
        values[pos] = *v;
    }
    let base = MslParams {
        loadings: DMatrix::from_fn(d_y, d_f, |i, j| if i == j { 1.0 } else { 0.0 }),
        idio_var: vec![0.0; d_y],
        logvol_mean: vec![0.0; 2 * d_f],
        persistence: vec![0.0; 2 * d_f],
        innovation_var: vec![0.0; 2 * d_f],
        risk_premia: vec![0.0; d_f],
        regime_stay: 0.0,
    };
    let theta = layout.apply(&base, &values);
    theta.validate()?;
    Ok(theta)
}

/// Chain CSV: `iter`, every layout parameter on the natural scale,
/// `log_prior`, `avg_loglik`, `accepted` (0/1). Iterations are 1-based.
pub fn write_chain(chain: &[ChainState<MslParams>], layout: &ParamLayout, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let mut header = vec!["iter".to_owned()];
    header.extend(layout.names().iter().cloned());
    header.extend(["log_prior", "avg_loglik", "accepted"].map(str::to_owned));
    w.write_record(&header)?;
    for (i, s) in chain.iter().enumerate() {
        let mut rec = vec![(i + 1).to_string()];
        rec.extend(layout.values(&s.state).iter().map(|v| v.to_string()));
        rec.push(s.log_prior.to_string());
        rec.push(s.avg_loglik.to_string());
        rec.push(u8::from(s.accepted).to_string());
        w.write_record(&rec)?;
    }
    flush(w, path)
}

/// Parameter draws of a chain file.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainTable {
    pub names: Vec<String>,
    pub draws: Vec<Vec<f64>>,
    pub accepted: Vec<bool>,
}

pub fn read_chain(path: &Path) -> Result<ChainTable> {
    let mut reader = csv::Reader::from_path(path)?;
    let header = reader.headers()?.clone();
    let n = header.len();
    if n < 5 || &header[0] != "iter" || &header[n - 3] != "log_prior" || &header[n - 1] != "accepted" {
        return Err(Error::data(1, None, "not a chain file"));
    }
    let names: Vec<String> = header.iter().skip(1).take(n - 4).map(str::to_owned).collect();
    let mut draws = Vec::new();
    let mut accepted = Vec::new();
    for (k, rec) in reader.records().enumerate() {
        let line = k + 2;
        let rec = rec?;
        let row = rec
            .iter()
            .skip(1)
            .take(n - 4)
            .zip(&names)
            .map(|(c, name)| {
                c.parse::<f64>()
                    .map_err(|_| Error::data(line, Some(name), format!("'{c}' is not a number")))
            })
            .collect::<Result<Vec<f64>>>()?;
        draws.push(row);
        accepted.push(&rec[n - 1] == "1");
    }
    Ok(ChainTable { names, draws, accepted })
}

/// Latent path CSV: `date,regime,panic_assets,x1..x{2d_f},f1..f{2d_f}`.
pub fn write_truth(truth: &LatentPath, space: &SelectorSpace, dates: &[NaiveDate], path: &Path) -> Result<()> {
    let dim = truth.logvol.first().map_or(0, Vec::len);
    let mut w = csv::Writer::from_writer(create(path)?);
    let mut header = vec!["date".to_owned(), "regime".into(), "panic_assets".into()];
    header.extend((1..=dim).map(|k| format!("x{k}")));
    header.extend((1..=dim).map(|k| format!("f{k}")));
    w.write_record(&header)?;
    for (t, date) in dates.iter().enumerate() {
        let r = truth.regimes[t];
        let mut rec = vec![date.format("%Y-%m-%d").to_string(), r.to_string(), space.bit_string(r - 1)];
        rec.extend(truth.logvol[t].iter().map(|v| v.to_string()));
        rec.extend(truth.factors[t].iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    flush(w, path)
}

/// Per-week backtest table, one row per out-of-sample week.
pub fn write_backtest(report: &BacktestReport, dates: &[NaiveDate], assets: &[String], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let mut header = vec!["date".to_owned()];
    header.extend(assets.iter().map(|a| format!("w_{a}")));
    header.extend(
        [
            "portfolio_return",
            "var",
            "exceedance",
            "panic_probability",
            "wealth",
            "equal_weight_return",
            "equal_weight_wealth",
        ]
        .map(str::to_owned),
    );
    w.write_record(&header)?;
    for (week, date) in report.weeks.iter().zip(dates) {
        let mut rec = vec![date.format("%Y-%m-%d").to_string()];
        rec.extend(week.weights.iter().map(|v| v.to_string()));
        rec.extend([
            week.portfolio_return.to_string(),
            week.var.to_string(),
            u8::from(week.exceedance).to_string(),
            week.panic_probability.to_string(),
            week.wealth.to_string(),
            week.benchmark_return.to_string(),
            week.benchmark_wealth.to_string(),
        ]);
        w.write_record(&rec)?;
    }
    flush(w, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::params::toy_params;
    use crate::pmmh::{AdaptSchedule, ParamLayout};
    use std::sync::Arc;

    #[test]
    fn theta_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("theta.csv");
        let mut theta = toy_params(4);
        theta.regime_stay = 1.0 / 3.0;
        write_theta(&theta, &path).unwrap();
        assert_eq!(read_theta(&path).unwrap(), theta);
    }

    #[test]
    fn theta_errors() {
        assert!(parse_theta("parameter,value\nR1,1\n").is_err());
        assert!(parse_theta("parameter,value\nR1,x\n").is_err());
        let mut text = String::from("parameter,value\n");
        for (n, v) in ParamLayout::full(2, 1)
            .names()
            .iter()
            .zip([0.9, 0.5, 0.5, 0.0, 0.0, 0.1, 0.1, 1.0, 1.0, 0.001, 0.9])
        {
            text += &format!("{n},{v}\n");
        }
        let theta = parse_theta(&text).unwrap();
        assert_eq!(theta.loadings[(1, 0)], 0.9);
        assert!(parse_theta(&text.replace("p,0.9", "p,1.5")).is_err());
        assert!(parse_theta(&text.replace("p,0.9", "q,0.9")).is_err());
    }

    #[test]
    fn chain_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("chain.csv");
        let theta = toy_params(3);
        let layout = ParamLayout::full(3, 1);
        let cov = Arc::new(AdaptSchedule::isotropic(layout.len(), 0.1).sigma0);
        let chain: Vec<ChainState<MslParams>> = (0..3)
            .map(|k| {
                let mut t = theta.clone();
                t.regime_stay = 0.5 + 0.1 * k as f64;
                ChainState {
                    z: vec![0.0; layout.len()],
                    state: t,
                    log_prior: -1.0,
                    log_jacobian: 0.0,
                    avg_loglik: -10.5,
                    accepted: k != 1,
                    proposal_cov: Arc::clone(&cov),
                }
            })
            .collect();
        write_chain(&chain, &layout, &path).unwrap();
        let table = read_chain(&path).unwrap();
        assert_eq!(table.names, layout.names());
        assert_eq!(table.draws[2][layout.position("p").unwrap()], 0.5 + 0.2);
        assert_eq!(table.accepted, vec![true, false, true]);
    }
}
