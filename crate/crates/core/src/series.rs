//! Indexed series of exact or float values, the trend convention used for
//! finite-n limit verdicts, and CSV serialization.

use std::fmt;
use std::path::Path;

use crate::error::{Error, Result};
use crate::real::Real;

#[derive(Clone, Debug, PartialEq)]
pub struct SeriesPoint {
    pub n: usize,
    pub mu: Real,
    pub values: Vec<Real>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub name: String,
    pub columns: Vec<String>,
    pub points: Vec<SeriesPoint>,
}

impl Series {
    pub fn new(name: impl Into<String>, columns: &[&str]) -> Self {
        Series { name: name.into(), columns: columns.iter().map(|c| c.to_string()).collect(), points: Vec::new() }
    }

    pub fn push(&mut self, n: usize, mu: Real, values: Vec<Real>) {
        debug_assert_eq!(values.len(), self.columns.len());
        self.points.push(SeriesPoint { n, mu, values });
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn column_index(&self, column: usize) -> usize {
        assert!(column < self.columns.len(), "column {column} out of range in {}", self.name);
        column
    }

    pub fn column(&self, column: usize) -> impl Iterator<Item = &Real> {
        let c = self.column_index(column);
        self.points.iter().map(move |p| &p.values[c])
    }

    /// First column of the last point.
    pub fn last_value(&self) -> Option<&Real> {
        self.points.last().map(|p| &p.values[0])
    }

    pub fn value_at(&self, n: usize) -> Option<&Real> {
        self.points.iter().find(|p| p.n == n).map(|p| &p.values[0])
    }

    pub fn is_exact(&self) -> bool {
        self.points.iter().all(|p| p.mu.is_exact() && p.values.iter().all(Real::is_exact))
    }

    /// Points with index in `⌊3L/4⌋..L` of the stored order.
    pub fn last_quartile(&self) -> &[SeriesPoint] {
        &self.points[self.points.len() * 3 / 4..]
    }

    /// Mean of `|value - target|` over the last quartile.
    pub fn tail_deviation(&self, column: usize, target: &Real) -> Real {
        let c = self.column_index(column);
        let tail = self.last_quartile();
        if tail.is_empty() {
            return Real::zero();
        }
        let sum: Real = tail.iter().map(|p| (&p.values[c] - target).abs()).sum();
        sum / Real::int(tail.len() as i64)
    }

    /// Mean of the column over the last quartile.
    pub fn tail_mean(&self, column: usize) -> Real {
        let c = self.column_index(column);
        let tail = self.last_quartile();
        if tail.is_empty() {
            return Real::zero();
        }
        let sum: Real = tail.iter().map(|p| p.values[c].clone()).sum();
        sum / Real::int(tail.len() as i64)
    }

    pub fn to_csv_string(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["n".to_string(), "mu".to_string()];
        header.extend(self.columns.iter().cloned());
        w.write_record(&header).expect("in-memory write");
        for p in &self.points {
            let mut row = vec![p.n.to_string(), p.mu.to_string()];
            row.extend(p.values.iter().map(|v| v.to_string()));
            w.write_record(&row).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf8 csv")
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv_string())?;
        Ok(())
    }

    pub fn read_csv(name: impl Into<String>, path: &Path) -> Result<Series> {
        let mut r = csv::Reader::from_path(path)?;
        let header = r.headers()?.clone();
        if header.len() < 3 || &header[0] != "n" || &header[1] != "mu" {
            return Err(Error::input(format!("{} is not a series file", path.display())));
        }
        let columns: Vec<&str> = header.iter().skip(2).collect();
        let mut series = Series::new(name, &columns);
        for rec in r.records() {
            let rec = rec?;
            let parse =
                |s: &str| parse_cell(s).ok_or_else(|| Error::input(format!("{}: bad cell `{s}`", path.display())));
            let n = rec[0].parse::<usize>().map_err(|e| Error::input(format!("{}: {e}", path.display())))?;
            let mu = parse(&rec[1])?;
            let values = rec.iter().skip(2).map(parse).collect::<Result<Vec<_>>>()?;
            series.push(n, mu, values);
        }
        Ok(series)
    }
}

/// Exact cells are `p/q` or integers; anything else is a float written in
/// shortest round-trip form.
fn parse_cell(s: &str) -> Option<Real> {
    if s.contains('/') || s.bytes().all(|b| b.is_ascii_digit() || b == b'-') {
        s.parse().ok()
    } else {
        s.parse::<f64>().ok().map(Real::float)
    }
}

/// The finite-n stand-in for a limit: a series "tends to" a target when the
/// mean of `|value - target|` over its last-quartile points is below `tau`
/// (or exactly zero).
#[derive(Clone, Debug, PartialEq)]
pub struct Trend {
    pub tau: Real,
}

impl Default for Trend {
    fn default() -> Self {
        Trend { tau: Real::ratio(1, 100) }
    }
}

impl Trend {
    pub fn new(tau: Real) -> Self {
        Trend { tau }
    }

    /// `10 × rate`, for series with a known decay rate at the final index.
    pub fn from_rate(rate: Real) -> Self {
        Trend { tau: rate * Real::int(10) }
    }

    pub fn evaluate(&self, series: &Series, column: usize, target: &Real) -> TrendOutcome {
        let tail = series.tail_deviation(column, target);
        let passed = !series.is_empty() && (tail < self.tau || tail.is_zero());
        TrendOutcome { passed, tail, tau: self.tau.clone() }
    }

    pub fn to_zero(&self, series: &Series, column: usize) -> TrendOutcome {
        self.evaluate(series, column, &Real::zero())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrendOutcome {
    pub passed: bool,
    pub tail: Real,
    pub tau: Real,
}

impl fmt::Display for TrendOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let word = if self.passed { "PASS-TREND" } else { "NO-TREND" };
        write!(f, "{word} (tail {} vs τ {})", self.tail.to_f64(), self.tau.to_f64())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

impl Verdict {
    pub fn from_bool(pass: bool) -> Verdict {
        if pass {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
            Verdict::Inconclusive => "INCONCLUSIVE",
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_roundtrip_keeps_exact_and_float_values() {
        let mut s = Series::new("demo", &["value", "other"]);
        s.push(1, Real::int(3), vec![Real::ratio(1, 3), Real::float(0.1)]);
        s.push(2, Real::int(5), vec![Real::zero(), Real::float(-2.5e-7)]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("demo.csv");
        s.write_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "n,mu,value,other\n1,3,1/3,0.1\n2,5,0,-2.5e-7\n");
        let back = Series::read_csv("demo", &path).unwrap();
        assert_eq!(back.to_csv_string(), text);
        assert_eq!(back.points[0].values[0], Real::ratio(1, 3));
    }

    #[test]
    fn trend_uses_last_quartile() {
        let mut s = Series::new("t", &["value"]);
        for n in 1..=8 {
            let v = if n <= 6 { Real::one() } else { Real::ratio(1, 1000) };
            s.push(n, Real::int(n as i64), vec![v]);
        }
        assert_eq!(s.last_quartile().len(), 2);
        assert!(Trend::default().to_zero(&s, 0).passed);
        assert!(!Trend::default().evaluate(&s, 0, &Real::one()).passed);
        assert_eq!(s.tail_mean(0), Real::ratio(1, 1000));
    }

    #[test]
    fn empty_series_never_passes() {
        let s = Series::new("e", &["value"]);
        assert!(!Trend::default().to_zero(&s, 0).passed);
    }
}
