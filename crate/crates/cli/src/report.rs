use std::fmt::Write as _;

use dilatron_core::CheckReport;
use serde::Serialize;
use serde_json::Value;

/// One named check: measured deviation against a threshold.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Record {
    pub name: String,
    pub deviation: f64,
    pub threshold: f64,
    pub checked: usize,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Settings {
    pub seed: u64,
    pub window: Option<usize>,
    pub horizon: Option<usize>,
    pub replicas: u64,
    pub decomposer: String,
    pub tolerance: Option<f64>,
    pub size_cap: u128,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InputInfo {
    pub path: String,
    pub sha256: String,
    pub states: usize,
    pub matrices: usize,
    pub homogeneous: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Timing {
    pub step: String,
    pub millis: f64,
}

/// Output of one command run. Field order is the serialisation order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub command: String,
    pub input: InputInfo,
    pub settings: Settings,
    pub records: Vec<Record>,
    pub pass: bool,
    pub details: Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timings: Option<Vec<Timing>>,
    #[serde(skip)]
    pub notes: Vec<String>,
}

impl Report {
    pub fn new(command: &str, input: InputInfo, settings: Settings) -> Self {
        Report {
            command: command.to_string(),
            input,
            settings,
            records: Vec::new(),
            pass: true,
            details: Value::Null,
            timings: None,
            notes: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, deviation: f64, threshold: f64, checked: usize) {
        let deviation = if deviation.is_nan() { f64::INFINITY } else { deviation };
        let pass = deviation <= threshold;
        self.pass &= pass;
        self.records.push(Record { name: name.into(), deviation, threshold, checked, pass });
    }

    /// Adds a module report, optionally with its threshold replaced.
    pub fn push_check(&mut self, name: impl Into<String>, check: &CheckReport, tolerance: Option<f64>) {
        self.push(name, check.max_abs_deviation, tolerance.unwrap_or(check.tolerance), check.checked);
    }

    pub fn structured(&self) -> String {
        let mut out = serde_json::to_string_pretty(self).expect("report serialises");
        out.push('\n');
        out
    }

    pub fn table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "dilatron {}  input={}  seed={}", self.command, self.input.path, self.settings.seed);
        for note in &self.notes {
            let _ = writeln!(out, "{note}");
        }
        if !self.notes.is_empty() {
            out.push('\n');
        }
        let width = self.records.iter().map(|r| r.name.len()).max().unwrap_or(5).max(5);
        let _ = writeln!(out, "{:<width$}  {:>12}  {:>12}  {:>8}  result", "check", "deviation", "threshold", "checked");
        for r in &self.records {
            let _ = writeln!(
                out,
                "{:<width$}  {:>12.3e}  {:>12.3e}  {:>8}  {}",
                r.name,
                r.deviation,
                r.threshold,
                r.checked,
                if r.pass { "ok" } else { "FAIL" }
            );
        }
        if let Some(timings) = &self.timings {
            out.push('\n');
            for t in timings {
                let _ = writeln!(out, "{:<width$}  {:>10.2} ms", t.step, t.millis);
            }
        }
        let _ = writeln!(out, "\noverall: {}", if self.pass { "PASS" } else { "FAIL" });
        out
    }
}
