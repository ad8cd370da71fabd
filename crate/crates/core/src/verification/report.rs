//! Structured experiment reports.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::rng::RNG_ALGORITHM;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assertion {
    pub description: String,
    pub threshold: f64,
    pub measured: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    /// Measurements too noisy to judge; not counted as a failure.
    Inconclusive,
}

/// Non-finite numbers serialize as JSON `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub experiment: String,
    pub params: serde_json::Value,
    pub assertions: Vec<Assertion>,
    pub series: BTreeMap<String, Vec<f64>>,
    pub measured: BTreeMap<String, f64>,
    pub seeds: BTreeMap<String, u64>,
    pub rng: String,
    pub started_at: String,
    pub wall_ms: f64,
    pub status: Status,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl VerifyReport {
    pub fn pass(&self) -> bool {
        self.status != Status::Fail
    }

    pub fn assertion(&self, prefix: &str) -> Option<&Assertion> {
        self.assertions.iter().find(|a| a.description.starts_with(prefix))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Same report with timing fields cleared, for reproducibility checks.
    pub fn without_timing(&self) -> VerifyReport {
        let mut r = self.clone();
        r.started_at.clear();
        r.wall_ms = 0.0;
        r
    }

    /// Writes `<experiment>.json` into `dir`.
    pub fn write_json(&self, dir: &Path) -> std::io::Result<PathBuf> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join(format!("{}.json", self.experiment));
        std::fs::write(&path, self.to_json())?;
        Ok(path)
    }

    /// Writes one `<experiment>.<series>.csv` per series with columns
    /// `index,<series>`.
    pub fn write_series_csv(&self, dir: &Path) -> Result<Vec<PathBuf>, csv::Error> {
        std::fs::create_dir_all(dir)?;
        let mut out = Vec::new();
        for (name, values) in &self.series {
            let path = dir.join(format!("{}.{}.csv", self.experiment, name));
            let mut w = csv::Writer::from_path(&path)?;
            w.write_record(["index", name.as_str()])?;
            for (i, v) in values.iter().enumerate() {
                w.write_record([i.to_string(), v.to_string()])?;
            }
            w.flush()?;
            out.push(path);
        }
        Ok(out)
    }

    /// Writes the named equal-length series side by side into one CSV.
    pub fn write_table_csv(&self, path: &Path, columns: &[&str]) -> Result<(), csv::Error> {
        let cols: Vec<&Vec<f64>> = columns
            .iter()
            .map(|c| self.series.get(*c).ok_or_else(|| missing(c)))
            .collect::<Result<_, _>>()?;
        let rows = cols.iter().map(|c| c.len()).min().unwrap_or(0);
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(columns)?;
        for r in 0..rows {
            w.write_record(cols.iter().map(|c| c[r].to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

fn missing(name: &str) -> csv::Error {
    std::io::Error::new(std::io::ErrorKind::NotFound, format!("no series named {name}")).into()
}

/// Incrementally assembles a [`VerifyReport`].
pub struct ReportBuilder {
    report: VerifyReport,
    clock: Instant,
}

impl ReportBuilder {
    pub fn new(experiment: &str, params: impl Serialize) -> Self {
        ReportBuilder {
            report: VerifyReport {
                experiment: experiment.to_string(),
                params: serde_json::to_value(params).unwrap_or(serde_json::Value::Null),
                assertions: Vec::new(),
                series: BTreeMap::new(),
                measured: BTreeMap::new(),
                seeds: BTreeMap::new(),
                rng: RNG_ALGORITHM.to_string(),
                started_at: chrono::Utc::now().to_rfc3339(),
                wall_ms: 0.0,
                status: Status::Pass,
                warnings: Vec::new(),
            },
            clock: Instant::now(),
        }
    }

    /// Records an assertion and returns its outcome.
    pub fn check(&mut self, description: impl Into<String>, threshold: f64, measured: f64, pass: bool) -> bool {
        self.report.assertions.push(Assertion {
            description: description.into(),
            threshold,
            measured,
            pass,
        });
        pass
    }

    /// `measured ≤ threshold`.
    pub fn check_le(&mut self, description: impl Into<String>, measured: f64, threshold: f64) -> bool {
        self.check(description, threshold, measured, measured <= threshold)
    }

    /// `measured ≥ threshold`.
    pub fn check_ge(&mut self, description: impl Into<String>, measured: f64, threshold: f64) -> bool {
        self.check(description, threshold, measured, measured >= threshold)
    }

    pub fn measure(&mut self, name: impl Into<String>, value: f64) {
        self.report.measured.insert(name.into(), value);
    }

    pub fn series(&mut self, name: impl Into<String>, values: Vec<f64>) {
        self.report.series.insert(name.into(), values);
    }

    pub fn seed(&mut self, name: impl Into<String>, seed: u64) {
        self.report.seeds.insert(name.into(), seed);
    }

    pub fn warn(&mut self, msg: impl Into<String>) {
        self.report.warnings.push(msg.into());
    }

    pub fn inconclusive(&mut self, msg: impl Into<String>) {
        self.report.warnings.push(msg.into());
        self.report.status = Status::Inconclusive;
    }

    pub fn finish(mut self) -> VerifyReport {
        self.report.wall_ms = self.clock.elapsed().as_secs_f64() * 1e3;
        if self.report.assertions.iter().any(|a| !a.pass) && self.report.status != Status::Inconclusive {
            self.report.status = Status::Fail;
        }
        self.report
    }
}
