//! Experiment configuration. Unset fields fall back to per-criterion defaults.

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::env_field::EnvironmentSpec;
use crate::error::{Error, Result};
use crate::she_oracle::TestFunction;
use crate::walk::WalkKernel;

/// Tolerance names accepted under `tolerances`.
pub const TOLERANCE_KEYS: &[&str] = &[
    "propagator",
    "slab",
    "mass_slope",
    "ttc_slope",
    "fer_slope",
    "window",
    "moment_relative",
    "drift_relative",
    "invariance_relative",
    "envelope_ratio",
];

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleCounts {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub walks: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tuples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub environments: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub brownian: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mesh: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Named environment: `white`, `default`, `mirror`, `sheared`, `spatial` or `zero`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    /// Inline environment, exclusive with `preset`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub environment: Option<EnvironmentSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<WalkKernel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi: Option<TestFunction>,
    #[serde(default)]
    pub samples: SampleCounts,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub tolerances: BTreeMap<String, f64>,
}

impl ExperimentConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            preset: None,
            environment: None,
            kernel: None,
            n: None,
            t: None,
            k: None,
            y: None,
            phi: None,
            samples: SampleCounts::default(),
            seed,
            out: None,
            tolerances: BTreeMap::new(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Collects every problem rather than stopping at the first.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.preset.is_some() && self.environment.is_some() {
            problems.push("`preset` and `environment` are mutually exclusive".to_string());
        }
        if let Some(p) = &self.preset {
            if let Err(e) = EnvironmentSpec::preset(p) {
                problems.push(e.to_string());
            }
        }
        if let Some(ns) = &self.n {
            if ns.is_empty() {
                problems.push("`n` must not be empty".into());
            } else if ns.windows(2).any(|w| w[0] >= w[1]) || ns[0] == 0 {
                problems.push(format!("`n` must be positive and strictly ascending, got {ns:?}"));
            }
        }
        if let Some(t) = self.t {
            if !(t > 0.0 && t.is_finite()) {
                problems.push(format!("`t` must be positive, got {t}"));
            }
        }
        if let Some(k) = self.k {
            if !(1..=4).contains(&k) {
                problems.push(format!("`k` must lie in 1..=4, got {k}"));
            }
        }
        if let (Some(y), Some(k)) = (&self.y, self.k) {
            if y.len() != k {
                problems.push(format!("`y` has {} entries but k = {k}", y.len()));
            }
        }
        if let Some(phi) = &self.phi {
            if let Err(e) = phi.validate() {
                problems.push(e.to_string());
            }
        }
        for (key, v) in &self.tolerances {
            if !TOLERANCE_KEYS.contains(&key.as_str()) {
                problems.push(format!("unknown tolerance `{key}` (expected one of {})", TOLERANCE_KEYS.join(", ")));
            } else if !(*v >= 0.0) {
                problems.push(format!("tolerance `{key}` must be nonnegative"));
            }
        }
        let s = &self.samples;
        for (name, v) in [("walks", s.walks), ("tuples", s.tuples), ("environments", s.environments), ("brownian", s.brownian), ("mesh", s.mesh)] {
            if v == Some(0) {
                problems.push(format!("`samples.{name}` must be positive"));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }

    /// The configured environment, or `fallback` when none is set.
    pub fn spec_or(&self, fallback: &str) -> Result<EnvironmentSpec> {
        match (&self.preset, &self.environment) {
            (_, Some(e)) => Ok(e.clone()),
            (Some(p), None) => EnvironmentSpec::preset(p),
            (None, None) => EnvironmentSpec::preset(fallback),
        }
    }

    pub fn kernel(&self) -> WalkKernel {
        self.kernel.clone().unwrap_or_else(WalkKernel::default_kernel)
    }

    pub fn ns_or(&self, fallback: &[usize]) -> Vec<usize> {
        self.n.clone().unwrap_or_else(|| fallback.to_vec())
    }

    pub fn tolerance_or(&self, key: &str, fallback: f64) -> f64 {
        debug_assert!(TOLERANCE_KEYS.contains(&key));
        self.tolerances.get(key).copied().unwrap_or(fallback)
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config() {
        let c = ExperimentConfig::from_json(r#"{"seed": 3}"#).unwrap();
        assert_eq!(c, ExperimentConfig::with_seed(3));
        assert_eq!(c.spec_or("sheared").unwrap(), EnvironmentSpec::sheared());
    }

    #[test]
    fn errors_are_collected() {
        let e = ExperimentConfig::from_json(r#"{"seed": 1, "n": [], "k": 9, "preset": "nope"}"#).unwrap_err();
        let msg = e.to_string();
        assert!(msg.contains("`n` must not be empty"), "{msg}");
        assert!(msg.contains("`k` must lie"), "{msg}");
        assert!(msg.contains("unknown environment preset"), "{msg}");
    }

    #[test]
    fn unknown_keys_and_missing_seed_rejected() {
        assert!(ExperimentConfig::from_json(r#"{"seed": 1, "bogus": 2}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"n": [64]}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"seed": 1, "samples": {"walk": 3}}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"seed": 1, "tolerances": {"fudge": 1.0}}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"seed": 1, "n": [256, 64]}"#).is_err());
    }

    #[test]
    fn inline_environment_round_trips() {
        let text = r#"{"seed": 5, "environment": {"kernel": [[0, 0, 1.0]], "innovation": {"plus_value": 1.0, "minus_value": -1.0, "plus_prob": 0.5}}}"#;
        let c = ExperimentConfig::from_json(text).unwrap();
        assert_eq!(c.spec_or("default").unwrap(), EnvironmentSpec::white());
        let again = ExperimentConfig::from_json(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(c.hash(), again.hash());
    }
}
