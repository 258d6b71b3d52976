//! Report containers: every reported number carries an uncertainty or is
//! flagged exact, and reports serialize to JSON plus plot-ready CSV rows.

use serde::{Deserialize, Serialize};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Estimate {
    pub name: String,
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub se: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ci: Option<(f64, f64)>,
    /// True for oracle/deterministic quantities that carry no uncertainty.
    pub exact: bool,
}

impl Estimate {
    pub fn exact(name: &str, value: f64) -> Self {
        Estimate { name: name.into(), value, se: None, ci: None, exact: true }
    }

    pub fn with_se(name: &str, value: f64, se: f64) -> Self {
        Estimate { name: name.into(), value, se: Some(se), ci: None, exact: false }
    }

    pub fn with_ci(name: &str, value: f64, se: f64, ci: (f64, f64)) -> Self {
        Estimate { name: name.into(), value, se: Some(se), ci: Some(ci), exact: false }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: &str, passed: bool, detail: String) -> Self {
        Check { name: name.into(), passed, detail }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub id: String,
    pub kind: String,
    pub params: serde_json::Value,
    pub estimates: Vec<Estimate>,
    pub checks: Vec<Check>,
    /// Pointers (paths/hashes) to the input ensembles, when persisted.
    pub inputs: Vec<String>,
    pub notes: Vec<String>,
    /// Plot-ready rows: one Vec per CSV line, columns per `csv_columns`.
    pub csv_columns: Vec<String>,
    pub csv_rows: Vec<Vec<f64>>,
}

impl ExperimentReport {
    pub fn new(kind: &str, params: serde_json::Value) -> Self {
        ExperimentReport {
            schema_version: REPORT_SCHEMA_VERSION,
            id: format!("{kind}"),
            kind: kind.into(),
            params,
            estimates: Vec::new(),
            checks: Vec::new(),
            inputs: Vec::new(),
            notes: Vec::new(),
            csv_columns: Vec::new(),
            csv_rows: Vec::new(),
        }
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn estimate(&self, name: &str) -> Option<&Estimate> {
        self.estimates.iter().find(|e| e.name == name)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.csv_columns.join(",");
        out.push('\n');
        for row in &self.csv_rows {
            let line: Vec<String> = row.iter().map(|v| format!("{v:.12e}")).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }
}
