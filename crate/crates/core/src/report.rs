//! Verification reports: one entry per check, violations listed with the
//! offending state.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::numerics::Vector;

/// Violations kept verbatim per check; the count covers all of them.
pub const MAX_LISTED_VIOLATIONS: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub point: Vec<f64>,
    pub value: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    /// Simulation-based falsifiers rather than exact conditions.
    pub heuristic: bool,
    pub checked: usize,
    pub violation_count: usize,
    /// Worst value of the checked quantity, when meaningful.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub worst: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    pub violations: Vec<Violation>,
}

impl CheckResult {
    pub fn new(name: impl Into<String>) -> Self {
        CheckResult {
            name: name.into(),
            passed: true,
            heuristic: false,
            checked: 0,
            violation_count: 0,
            worst: None,
            note: None,
            violations: Vec::new(),
        }
    }

    pub fn heuristic(mut self) -> Self {
        self.heuristic = true;
        self
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }

    pub fn observe(&mut self, value: f64) {
        self.checked += 1;
        self.worst = Some(match self.worst {
            Some(w) if w >= value => w,
            _ => value,
        });
    }

    pub fn violate(&mut self, x: &Vector, value: f64, detail: impl Into<String>) {
        self.passed = false;
        self.violation_count += 1;
        if self.violations.len() < MAX_LISTED_VIOLATIONS {
            self.violations.push(Violation {
                point: x.iter().copied().collect(),
                value,
                detail: detail.into(),
            });
        }
    }

    pub fn fail(&mut self, detail: impl Into<String>) {
        self.violate(&Vector::zeros(0), f64::NAN, detail);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub design: String,
    pub passed: bool,
    pub violation_count: usize,
    pub checks: Vec<CheckResult>,
}

impl Report {
    pub fn new(design: impl Into<String>) -> Self {
        Report {
            design: design.into(),
            passed: true,
            violation_count: 0,
            checks: Vec::new(),
        }
    }

    pub fn push(&mut self, check: CheckResult) {
        self.passed &= check.passed;
        self.violation_count += check.violation_count;
        self.checks.push(check);
    }

    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(&sanitize(self)).map_err(|e| Error::Config(e.to_string()))
    }
}

// TOML has no NaN literal for all readers; encode non-finite numbers as strings.
fn sanitize(report: &Report) -> toml::Value {
    fn fix(v: toml::Value) -> toml::Value {
        match v {
            toml::Value::Float(f) if !f.is_finite() => toml::Value::String(format!("{f}")),
            toml::Value::Array(a) => toml::Value::Array(a.into_iter().map(fix).collect()),
            toml::Value::Table(t) => toml::Value::Table(t.into_iter().map(|(k, v)| (k, fix(v))).collect()),
            other => other,
        }
    }
    fix(toml::Value::try_from(report).expect("report is always representable"))
}
