//! Experiment output: a table of rows plus pass/fail verdicts.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

/// One recorded value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Row {
    /// Scale multiplier or sample size.
    pub x: f64,
    pub statistic: String,
    pub value: f64,
    /// Numerical or Monte Carlo error estimate; zero when exact.
    pub err: f64,
    /// How the value was computed: `closed-form`, `quadrature`,
    /// `monte-carlo`, `laplace` or `simulation`.
    pub method: String,
}

/// Outcome of one claim, computed from recorded rows only.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub claim: String,
    pub pass: bool,
    pub detail: String,
}

/// Rows and verdicts of one experiment run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentResult {
    pub name: String,
    pub seed: u64,
    pub rows: Vec<Row>,
    pub verdicts: Vec<Verdict>,
}

impl ExperimentResult {
    pub fn new(name: &str, seed: u64) -> Self {
        ExperimentResult { name: name.into(), seed, rows: Vec::new(), verdicts: Vec::new() }
    }

    /// Record a closed-form value.
    pub fn push(&mut self, x: f64, statistic: impl Into<String>, value: f64, err: f64) {
        self.push_with(x, statistic, value, err, "closed-form");
    }

    /// Record a value together with the method that produced it.
    pub fn push_with(
        &mut self,
        x: f64,
        statistic: impl Into<String>,
        value: f64,
        err: f64,
        method: &str,
    ) {
        self.rows.push(Row { x, statistic: statistic.into(), value, err, method: method.into() });
    }

    pub fn verdict(&mut self, claim: impl Into<String>, pass: bool, detail: impl Into<String>) {
        self.verdicts.push(Verdict { claim: claim.into(), pass, detail: detail.into() });
    }

    /// True when every verdict passed.
    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass)
    }

    /// `(x, value)` pairs of one statistic in recording order.
    pub fn series(&self, statistic: &str) -> Vec<(f64, f64)> {
        self.rows.iter().filter(|r| r.statistic == statistic).map(|r| (r.x, r.value)).collect()
    }

    /// Value of `statistic` at `x`, if recorded.
    pub fn value_at(&self, statistic: &str, x: f64) -> Option<f64> {
        self.rows.iter().find(|r| r.statistic == statistic && r.x == x).map(|r| r.value)
    }

    /// Write the rows as CSV with columns `x, statistic, value, err, method`.
    pub fn write_csv(&self, path: &Path) -> std::io::Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()
    }

    /// Verdict document: name, seed, overall status and per-claim verdicts.
    pub fn verdict_json(&self) -> serde_json::Value {
        serde_json::json!({
            "name": self.name,
            "seed": self.seed,
            "pass": self.passed(),
            "verdicts": self.verdicts,
        })
    }

    /// Write [`Self::verdict_json`] pretty-printed.
    pub fn write_verdict_json(&self, path: &Path) -> std::io::Result<()> {
        let mut f = File::create(path)?;
        let text = serde_json::to_string_pretty(&self.verdict_json())?;
        f.write_all(text.as_bytes())?;
        f.write_all(b"\n")
    }
}
