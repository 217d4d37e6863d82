//! Run reports: series files, a verdict table and a human-readable summary.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Duration;

use crate::error::Result;
use crate::mixing::HypothesisCheck;
use crate::series::Series;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
    /// Series file the verdict was read from.
    pub series: Option<String>,
}

#[derive(Clone, Debug, Default)]
pub struct RunReport {
    pub id: String,
    pub kind: String,
    pub seed: Option<u64>,
    pub expected_fail: bool,
    pub hypotheses: Vec<HypothesisCheck>,
    pub checks: Vec<Check>,
    /// `(file name, series)`, written in order.
    pub series: Vec<(String, Series)>,
    pub notes: Vec<String>,
}

impl RunReport {
    pub fn new(id: impl Into<String>, kind: impl Into<String>) -> Self {
        RunReport { id: id.into(), kind: kind.into(), ..Default::default() }
    }

    /// Adds a series under a file name and returns that name.
    pub fn add_series(&mut self, file: impl Into<String>, series: Series) -> String {
        let file = file.into();
        self.series.push((file.clone(), series));
        file
    }

    pub fn check(&mut self, name: impl Into<String>, passed: bool, detail: impl Into<String>, series: Option<&str>) {
        self.checks.push(Check {
            name: name.into(),
            passed,
            detail: detail.into(),
            series: series.map(str::to_string),
        });
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn is_exact(&self) -> bool {
        self.series.iter().all(|(_, s)| s.is_exact())
    }

    /// 0 when the outcome matches the declared expectation, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match (self.expected_fail, self.all_passed()) {
            (false, true) | (true, false) => 0,
            _ => 1,
        }
    }

    pub fn verdicts_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["check", "verdict", "detail", "series"]).expect("in-memory write");
        for c in &self.checks {
            let v = if c.passed { "PASS" } else { "FAIL" };
            w.write_record([c.name.as_str(), v, c.detail.as_str(), c.series.as_deref().unwrap_or("")])
                .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf8 csv")
    }

    pub fn summary(&self, wall_clock: Option<Duration>) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "experiment: {} ({})", self.id, self.kind);
        let seed = self.seed.map(|v| v.to_string()).unwrap_or_else(|| "none".into());
        let _ = writeln!(s, "seed: {seed}");
        let _ = writeln!(s, "arithmetic: {}", if self.is_exact() { "exact" } else { "float" });
        if !self.hypotheses.is_empty() {
            let _ = writeln!(s, "hypotheses:");
            for h in &self.hypotheses {
                let _ = writeln!(s, "  {h}");
            }
        }
        let _ = writeln!(s, "checks:");
        for c in &self.checks {
            let v = if c.passed { "PASS" } else { "FAIL" };
            let file = c.series.as_deref().map(|f| format!(" [{f}]")).unwrap_or_default();
            let _ = writeln!(s, "  {v} {}: {}{file}", c.name, c.detail);
        }
        for n in &self.notes {
            let _ = writeln!(s, "note: {n}");
        }
        let overall = match (self.expected_fail, self.all_passed()) {
            (false, true) => "PASS",
            (true, false) => "EXPECTED-FAIL",
            (true, true) => "UNEXPECTED-PASS",
            (false, false) => "FAIL",
        };
        let _ = writeln!(s, "overall: {overall}");
        if let Some(t) = wall_clock {
            let _ = writeln!(s, "wall clock: {:.3} s", t.as_secs_f64());
        }
        s
    }

    /// Writes every series, `verdicts.csv` and `summary.txt` under `dir`.
    pub fn write(&self, dir: &Path, wall_clock: Option<Duration>) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        for (file, series) in &self.series {
            let path = dir.join(file);
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent)?;
            }
            series.write_csv(&path)?;
            written.push(path);
        }
        let v = dir.join("verdicts.csv");
        std::fs::write(&v, self.verdicts_csv())?;
        written.push(v);
        let s = dir.join("summary.txt");
        std::fs::write(&s, self.summary(wall_clock))?;
        written.push(s);
        Ok(written)
    }
}

/// File-name friendly form of a label.
pub fn slug(s: &str) -> String {
    let mut out = String::new();
    for c in s.chars() {
        if c.is_ascii_alphanumeric() {
            out.push(c.to_ascii_lowercase());
        } else if c == '-' {
            out.push('m');
        } else if !out.ends_with('_') && !out.is_empty() {
            out.push('_');
        }
    }
    out.trim_end_matches('_').to_string()
}
