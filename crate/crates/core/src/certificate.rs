use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    Pass,
    Fail,
    Inconclusive,
}

impl Outcome {
    pub fn from_bool(ok: bool) -> Self {
        if ok {
            Outcome::Pass
        } else {
            Outcome::Fail
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Outcome::Pass => "pass",
            Outcome::Fail => "fail",
            Outcome::Inconclusive => "inconclusive",
        })
    }
}

/// One named numeric check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    pub name: String,
    pub outcome: Outcome,
    pub detail: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub values: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    /// Column labels for `table`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub columns: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub table: Vec<Vec<f64>>,
}

impl Evidence {
    pub fn new(name: impl Into<String>, outcome: Outcome, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            outcome,
            detail: detail.into(),
            values: BTreeMap::new(),
            tolerance: None,
            columns: Vec::new(),
            table: Vec::new(),
        }
    }

    pub fn value(mut self, key: &str, v: f64) -> Self {
        self.values.insert(key.to_string(), v);
        self
    }

    pub fn tolerance(mut self, tol: f64) -> Self {
        self.tolerance = Some(tol);
        self
    }

    pub fn table(mut self, columns: &[&str], rows: Vec<Vec<f64>>) -> Self {
        self.columns = columns.iter().map(|c| c.to_string()).collect();
        self.table = rows;
        self
    }

    pub fn passed(&self) -> bool {
        self.outcome == Outcome::Pass
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    TraceClass,
    GeometricallyErgodic,
    NotApplicable,
    Inconclusive,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::TraceClass => "TraceClass",
            Verdict::GeometricallyErgodic => "GeometricallyErgodic",
            Verdict::NotApplicable => "NotApplicable",
            Verdict::Inconclusive => "Inconclusive",
        })
    }
}

/// Which sufficient condition produced the verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConditionPath {
    /// `h` vanishes near the origin.
    ZeroNearOrigin,
    /// Monotone ratio against `g_{ρ,τ}`.
    MonotoneRatio,
    /// Nested-integral condition with `g = h`.
    NestedIntegral,
    /// Origin-class criterion for geometric ergodicity.
    OriginPower,
    /// Divergent nested integral; trace-class tools do not apply.
    EqFail,
    None,
}

impl fmt::Display for ConditionPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ConditionPath::ZeroNearOrigin => "zero near origin",
            ConditionPath::MonotoneRatio => "monotone ratio",
            ConditionPath::NestedIntegral => "nested integral",
            ConditionPath::OriginPower => "origin power comparison",
            ConditionPath::EqFail => "nested integral diverges",
            ConditionPath::None => "none",
        })
    }
}

/// Structured verdict of the trace-class checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub verdict: Verdict,
    pub path: ConditionPath,
    pub mixing: String,
    pub evidence: Vec<Evidence>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace_bound: Option<f64>,
}

impl Certificate {
    pub fn report(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "mixing density: {}", self.mixing);
        let _ = writeln!(s, "verdict: {}", self.verdict);
        let _ = writeln!(s, "condition: {}", self.path);
        if let Some(b) = self.trace_bound {
            let _ = writeln!(s, "trace bound: {b:.16e}");
        }
        s.push_str(&render_evidence(&self.evidence));
        s
    }
}

pub(crate) fn render_evidence(evidence: &[Evidence]) -> String {
    let mut s = String::new();
    for e in evidence {
        let _ = writeln!(s, "- [{}] {}: {}", e.outcome, e.name, e.detail);
        for (k, v) in &e.values {
            let _ = writeln!(s, "    {k} = {v:.16e}");
        }
        if let Some(t) = e.tolerance {
            let _ = writeln!(s, "    tolerance = {t:e}");
        }
        if !e.table.is_empty() {
            let _ = writeln!(s, "    {}", e.columns.join("\t"));
            for row in &e.table {
                let cells: Vec<String> = row.iter().map(|v| format!("{v:.6e}")).collect();
                let _ = writeln!(s, "    {}", cells.join("\t"));
            }
        }
    }
    s
}
