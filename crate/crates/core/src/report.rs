//! Verification report types shared by the assumption validator and the
//! Monte Carlo battery.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckRole {
    Primary,
    /// A check that a healthy implementation is expected to fail.
    NegativeControl,
}

/// One numerical comparison: `estimate` against `threshold` under `rule`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub label: String,
    pub estimate: f64,
    /// Standard error for Monte Carlo checks, residual size for analytic ones.
    pub standard_error: Option<f64>,
    pub threshold: f64,
    pub rule: String,
    pub passed: bool,
    pub role: CheckRole,
}

impl Check {
    fn new(
        label: impl Into<String>,
        estimate: f64,
        se: Option<f64>,
        threshold: f64,
        rule: String,
        passed: bool,
    ) -> Self {
        Self {
            label: label.into(),
            estimate,
            standard_error: se,
            threshold,
            rule,
            passed,
            role: CheckRole::Primary,
        }
    }

    /// Passes when `|estimate - target| <= threshold`.
    pub fn within(label: impl Into<String>, estimate: f64, target: f64, threshold: f64) -> Self {
        let passed = (estimate - target).abs() <= threshold;
        Self::new(
            label,
            estimate,
            None,
            threshold,
            format!("|x - {target}| <= threshold"),
            passed,
        )
    }

    /// Passes when `|estimate - target| <= k * se`.
    pub fn within_se(
        label: impl Into<String>,
        estimate: f64,
        target: f64,
        se: f64,
        k: f64,
    ) -> Self {
        let threshold = k * se;
        let passed = (estimate - target).abs() <= threshold;
        Self::new(
            label,
            estimate,
            Some(se),
            threshold,
            format!("|x - {target}| <= {k} se"),
            passed,
        )
    }

    /// Passes when `estimate < threshold`.
    pub fn below(label: impl Into<String>, estimate: f64, threshold: f64) -> Self {
        let passed = estimate < threshold;
        Self::new(
            label,
            estimate,
            None,
            threshold,
            "x < threshold".into(),
            passed,
        )
    }

    /// Passes when `estimate <= threshold`.
    pub fn at_most(label: impl Into<String>, estimate: f64, threshold: f64) -> Self {
        let passed = estimate <= threshold;
        Self::new(
            label,
            estimate,
            None,
            threshold,
            "x <= threshold".into(),
            passed,
        )
    }

    /// Passes when `estimate > threshold`.
    pub fn above(label: impl Into<String>, estimate: f64, threshold: f64) -> Self {
        let passed = estimate > threshold;
        Self::new(
            label,
            estimate,
            None,
            threshold,
            "x > threshold".into(),
            passed,
        )
    }

    /// Passes when `estimate >= threshold`.
    pub fn at_least(label: impl Into<String>, estimate: f64, threshold: f64) -> Self {
        let passed = estimate >= threshold;
        Self::new(
            label,
            estimate,
            None,
            threshold,
            "x >= threshold".into(),
            passed,
        )
    }

    /// A yes/no condition recorded as estimate 1 (true) or 0 (false).
    pub fn flag(label: impl Into<String>, ok: bool) -> Self {
        Self::new(
            label,
            if ok { 1.0 } else { 0.0 },
            None,
            1.0,
            "x == 1".into(),
            ok,
        )
    }

    pub fn with_se(mut self, se: f64) -> Self {
        self.standard_error = Some(se);
        self
    }

    pub fn as_control(mut self) -> Self {
        self.role = CheckRole::NegativeControl;
        self
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: Option<u64>,
    pub config_hash: Option<String>,
    pub n_paths: Option<usize>,
    pub n_steps: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportEntry {
    pub name: String,
    pub passed: bool,
    pub checks: Vec<Check>,
    pub provenance: Provenance,
    pub warnings: Vec<String>,
}

impl ReportEntry {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed: true,
            checks: Vec::new(),
            provenance: Provenance::default(),
            warnings: Vec::new(),
        }
    }

    pub fn push(&mut self, check: Check) {
        self.checks.push(check);
        self.passed = self.evaluate();
    }

    pub fn warn(&mut self, message: impl Into<String>) {
        self.warnings.push(message.into());
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }

    /// Primary checks must all pass; if controls exist, at least one must fail.
    fn evaluate(&self) -> bool {
        let primary_ok = self
            .checks
            .iter()
            .filter(|c| c.role == CheckRole::Primary)
            .all(|c| c.passed);
        let mut controls = self
            .checks
            .iter()
            .filter(|c| c.role == CheckRole::NegativeControl)
            .peekable();
        let controls_ok = controls.peek().is_none() || controls.any(|c| !c.passed);
        primary_ok && controls_ok
    }

    pub fn check(&self, label: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.label == label)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub entries: Vec<ReportEntry>,
    pub overall: bool,
}

impl VerificationReport {
    pub fn new(entries: Vec<ReportEntry>) -> Self {
        let overall = entries.iter().all(|e| e.passed);
        Self { entries, overall }
    }

    pub fn push(&mut self, entry: ReportEntry) {
        self.entries.push(entry);
        self.overall = self.entries.iter().all(|e| e.passed);
    }

    pub fn entry(&self, name: &str) -> Option<&ReportEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    /// Plain-text table, one line per check.
    pub fn table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<20} {:<44} {:>14} {:>12} {:>12}  {}",
            "test", "check", "estimate", "se", "threshold", "result"
        );
        for e in &self.entries {
            for c in &e.checks {
                let se = c
                    .standard_error
                    .map(|s| format!("{s:.4e}"))
                    .unwrap_or_else(|| "-".into());
                let status = match (c.role, c.passed) {
                    (CheckRole::Primary, true) => "pass",
                    (CheckRole::Primary, false) => "FAIL",
                    (CheckRole::NegativeControl, false) => "fails (control)",
                    (CheckRole::NegativeControl, true) => "passes (control)",
                };
                let _ = writeln!(
                    out,
                    "{:<20} {:<44} {:>14.6e} {:>12} {:>12.4e}  {}",
                    e.name, c.label, c.estimate, se, c.threshold, status
                );
            }
            for w in &e.warnings {
                let _ = writeln!(out, "{:<20} warning: {w}", e.name);
            }
            let _ = writeln!(
                out,
                "{:<20} => {}",
                e.name,
                if e.passed { "PASS" } else { "FAIL" }
            );
        }
        let _ = writeln!(
            out,
            "overall: {}",
            if self.overall { "PASS" } else { "FAIL" }
        );
        out
    }
}
