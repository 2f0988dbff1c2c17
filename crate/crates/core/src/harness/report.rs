//! Acceptance rows and their JSON and CSV forms.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// How a row decides pass or fail. `d = |estimate - target|`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Check {
    /// `d <= tolerance + z se`.
    Within,
    /// `d <= max(tolerance, z se)`.
    WithinMax,
    /// `estimate <= target + tolerance + z se`.
    AtMost,
    /// `estimate >= target - tolerance - z se`.
    AtLeast,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriterionRow {
    pub criterion: u32,
    pub name: String,
    pub n: Option<usize>,
    pub estimate: f64,
    pub se: f64,
    pub target: f64,
    pub tolerance: f64,
    pub z: f64,
    pub check: Check,
    pub pass: bool,
}

impl CriterionRow {
    pub fn new(criterion: u32, name: impl Into<String>, estimate: f64, se: f64, target: f64, tolerance: f64, check: Check) -> Self {
        let mut r = Self {
            criterion,
            name: name.into(),
            n: None,
            estimate,
            se,
            target,
            tolerance,
            z: 3.0,
            check,
            pass: false,
        };
        r.pass = r.evaluate();
        r
    }

    pub fn at(mut self, n: usize) -> Self {
        self.n = Some(n);
        self
    }

    pub fn with_z(mut self, z: f64) -> Self {
        self.z = z;
        self.pass = self.evaluate();
        self
    }

    /// A boolean outcome recorded as `estimate = 1` for true against target 1.
    pub fn flag(criterion: u32, name: impl Into<String>, ok: bool) -> Self {
        Self::new(criterion, name, if ok { 1.0 } else { 0.0 }, 0.0, 1.0, 0.0, Check::Within)
    }

    fn evaluate(&self) -> bool {
        let (e, t, tol, zse) = (self.estimate, self.target, self.tolerance, self.z * self.se);
        if !e.is_finite() || !self.se.is_finite() {
            return false;
        }
        match self.check {
            Check::Within => (e - t).abs() <= tol + zse,
            Check::WithinMax => (e - t).abs() <= tol.max(zse),
            Check::AtMost => e <= t + tol + zse,
            Check::AtLeast => e >= t - tol - zse,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceReport {
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub versions: BTreeMap<String, String>,
    pub rows: Vec<CriterionRow>,
    /// Wall-clock seconds per criterion. Excluded from determinism checks.
    pub runtime_s: BTreeMap<u32, f64>,
}

impl AcceptanceReport {
    pub fn new(command: &str, config_hash: String, seed: u64) -> Self {
        let mut versions = BTreeMap::new();
        versions.insert("polymerlab".to_string(), env!("CARGO_PKG_VERSION").to_string());
        versions.insert("parallel".to_string(), cfg!(feature = "parallel").to_string());
        Self { command: command.into(), config_hash, seed, versions, rows: Vec::new(), runtime_s: BTreeMap::new() }
    }

    pub fn pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    /// Criteria in order with their aggregate outcome.
    pub fn criteria(&self) -> Vec<(u32, bool)> {
        let mut m: BTreeMap<u32, bool> = BTreeMap::new();
        for r in &self.rows {
            *m.entry(r.criterion).or_insert(true) &= r.pass;
        }
        m.into_iter().collect()
    }

    /// The report without runtime fields.
    pub fn deterministic_json(&self) -> Result<String> {
        let mut c = self.clone();
        c.runtime_s.clear();
        Ok(serde_json::to_string_pretty(&c)?)
    }

    pub fn write_json(&self, w: impl std::io::Write) -> Result<()> {
        serde_json::to_writer_pretty(w, self)?;
        Ok(())
    }

    /// Columns `criterion, N, estimate, se, target, tolerance, pass`, plus the row name.
    pub fn write_csv(&self, w: impl std::io::Write) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["criterion", "N", "estimate", "se", "target", "tolerance", "pass", "name"])?;
        for r in &self.rows {
            wr.write_record([
                r.criterion.to_string(),
                r.n.map(|n| n.to_string()).unwrap_or_default(),
                format!("{:e}", r.estimate),
                format!("{:e}", r.se),
                format!("{:e}", r.target),
                format!("{:e}", r.tolerance),
                r.pass.to_string(),
                r.name.clone(),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }
}
