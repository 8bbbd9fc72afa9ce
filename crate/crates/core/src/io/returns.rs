use std::fs;
use std::io::Write;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Scale in which returns are stored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Units {
    Percent,
    Decimal,
}

impl Units {
    /// Multiplier that turns a stored return into a simple return.
    pub fn scale(self) -> f64 {
        match self {
            Units::Percent => 0.01,
            Units::Decimal => 1.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Units::Percent => "percent",
            Units::Decimal => "decimal",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "percent" => Some(Units::Percent),
            "decimal" => Some(Units::Decimal),
            _ => None,
        }
    }
}

/// Dated multivariate return series.
///
/// On disk: a `# units: percent|decimal` line, a `date,<asset>...` header,
/// then one row per period with ISO dates in strictly increasing order.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnsSeries {
    pub units: Units,
    pub assets: Vec<String>,
    pub dates: Vec<NaiveDate>,
    pub values: Vec<Vec<f64>>,
}

const UNITS_PREFIX: &str = "# units:";

impl ReturnsSeries {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn d_y(&self) -> usize {
        self.assets.len()
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Parse the on-disk format. Row numbers in errors are file line numbers.
    pub fn parse(text: &str) -> Result<Self> {
        let (first, rest) = text.split_once('\n').unwrap_or((text, ""));
        let units = first
            .trim()
            .strip_prefix(UNITS_PREFIX)
            .and_then(Units::parse)
            .ok_or_else(|| Error::data(1, None, "first line must declare '# units: percent' or '# units: decimal'"))?;
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(rest.as_bytes());
        let header = reader.headers().map_err(|e| Error::data(2, None, e.to_string()))?.clone();
        if header.len() < 2 || &header[0] != "date" {
            return Err(Error::data(2, None, "header must be 'date' followed by asset names"));
        }
        let assets: Vec<String> = header.iter().skip(1).map(str::to_owned).collect();
        let mut dates: Vec<NaiveDate> = Vec::new();
        let mut values = Vec::new();
        for (k, record) in reader.records().enumerate() {
            let line = k + 3;
            let record = record.map_err(|e| Error::data(line, None, e.to_string()))?;
            if record.len() != header.len() {
                return Err(Error::data(
                    line,
                    None,
                    format!("expected {} fields, found {}", header.len(), record.len()),
                ));
            }
            let date = NaiveDate::parse_from_str(&record[0], "%Y-%m-%d")
                .map_err(|e| Error::data(line, Some("date"), format!("'{}': {e}", &record[0])))?;
            if let Some(prev) = dates.last() {
                if date == *prev {
                    return Err(Error::data(line, Some("date"), format!("duplicate date {date}")));
                }
                if date < *prev {
                    return Err(Error::data(line, Some("date"), format!("{date} is earlier than {prev}")));
                }
            }
            let row = record
                .iter()
                .skip(1)
                .zip(&assets)
                .map(|(cell, asset)| {
                    if cell.is_empty() {
                        return Err(Error::data(line, Some(asset), "missing value"));
                    }
                    let v: f64 = cell
                        .parse()
                        .map_err(|_| Error::data(line, Some(asset), format!("'{cell}' is not a number")))?;
                    if !v.is_finite() {
                        return Err(Error::data(line, Some(asset), format!("non-finite value '{cell}'")));
                    }
                    Ok(v)
                })
                .collect::<Result<Vec<f64>>>()?;
            dates.push(date);
            values.push(row);
        }
        Ok(Self {
            units,
            assets,
            dates,
            values,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_to(&mut file).map_err(|e| match e {
            Error::Io { source, .. } => Error::io(path, source),
            other => other,
        })
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{UNITS_PREFIX} {}", self.units.as_str()).map_err(|e| Error::io("returns", e))?;
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["date".to_owned()];
        header.extend(self.assets.iter().cloned());
        w.write_record(&header)?;
        for (d, row) in self.dates.iter().zip(&self.values) {
            let mut rec = vec![d.format("%Y-%m-%d").to_string()];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("returns", e))?;
        Ok(())
    }

    /// Rows with `start <= date <= end`; open ends when `None`.
    pub fn slice(&self, start: Option<NaiveDate>, end: Option<NaiveDate>) -> Self {
        let keep: Vec<usize> = (0..self.len())
            .filter(|&k| start.is_none_or(|s| self.dates[k] >= s) && end.is_none_or(|e| self.dates[k] <= e))
            .collect();
        Self {
            units: self.units,
            assets: self.assets.clone(),
            dates: keep.iter().map(|&k| self.dates[k]).collect(),
            values: keep.iter().map(|&k| self.values[k].clone()).collect(),
        }
    }
}
