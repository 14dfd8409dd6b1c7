//! Experiment configuration: one TOML file, unknown keys rejected.
//!
//! The top-level `sigma` is the noise scale of the whole pipeline. When
//! `[deen]` or `[train]` omit their own `sigma` they inherit it; when they
//! set it, it must agree.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::dataset::DatasetSpec;
use crate::adversarial::{AttackSpec, TrainConfig};
use crate::energy::DeenConfig;
use crate::sampler::WalkJumpConfig;
use crate::stats::ConfidenceSpec;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    /// Trained energy checkpoint.
    Learned,
    /// Exact estimator of the analytic dataset model.
    #[default]
    ClosedForm,
    /// `x̂` is the identity: vanilla smoothing.
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseKind {
    /// Soft classifier checkpoint.
    #[default]
    Trained,
    /// Labeling hyperplane of a Gaussian dataset.
    Hyperplane,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineSpec {
    pub estimator: EstimatorKind,
    pub base: BaseKind,
    /// Energy checkpoint at `sigma`; defaults to `<output_dir>/energy.ckpt`.
    pub energy: Option<PathBuf>,
    /// Energy checkpoint at `sigma_prime` for walk-jump; closed form when absent.
    pub fine_energy: Option<PathBuf>,
    /// Classifier checkpoint; defaults to `<output_dir>/classifier.ckpt`.
    pub classifier: Option<PathBuf>,
    pub radii: Vec<f64>,
    pub max_test_points: Option<usize>,
    /// Dump the walk of test point 0.
    pub trajectory: bool,
}

impl Default for PipelineSpec {
    fn default() -> Self {
        Self {
            estimator: EstimatorKind::default(),
            base: BaseKind::default(),
            energy: None,
            fine_energy: None,
            classifier: None,
            radii: vec![0.0, 0.5, 1.0, 1.5, 2.0],
            max_test_points: None,
            trajectory: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub sigma: f64,
    pub output_dir: PathBuf,
    /// Worker threads; 0 uses the library default.
    pub workers: usize,
    pub dataset: DatasetSpec,
    pub confidence: ConfidenceSpec,
    pub attack: AttackSpec,
    pub train: TrainConfig,
    pub deen: DeenConfig,
    pub walk_jump: WalkJumpConfig,
    pub pipeline: PipelineSpec,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            sigma: 0.3,
            output_dir: PathBuf::from("out"),
            workers: 0,
            dataset: DatasetSpec::default(),
            confidence: ConfidenceSpec::default(),
            attack: AttackSpec::default(),
            train: TrainConfig::default(),
            deen: DeenConfig::default(),
            walk_jump: WalkJumpConfig::default(),
            pipeline: PipelineSpec::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::config("sigma must be positive"));
        }
        for (name, s) in [("deen.sigma", self.deen.sigma), ("train.sigma", self.train.sigma)] {
            if s != self.sigma {
                return Err(Error::config(format!("{name} = {s} disagrees with sigma = {}", self.sigma)));
            }
        }
        self.dataset.validate()?;
        self.confidence.validate().map_err(|e| Error::config(e.to_string()))?;
        self.attack.validate()?;
        self.train.validate()?;
        self.deen.validate()?;
        self.walk_jump.validate()?;
        if self.pipeline.radii.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
            return Err(Error::config("pipeline.radii must be finite and non-negative"));
        }
        Ok(())
    }

    pub fn energy_path(&self) -> PathBuf {
        self.pipeline.energy.clone().unwrap_or_else(|| self.output_dir.join("energy.ckpt"))
    }

    pub fn classifier_path(&self) -> PathBuf {
        self.pipeline.classifier.clone().unwrap_or_else(|| self.output_dir.join("classifier.ckpt"))
    }

    /// Canonical JSON of the effective config, hashed into manifests.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}

/// Parse `raw` as a TOML value, falling back to a bare string.
fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// Set the dotted `key` (e.g. `confidence.nc`) in `table`.
pub fn apply_override(table: &mut toml::Table, key: &str, raw: &str) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::config(format!("bad override key {key:?}")));
    }
    let (last, parents) = parts.split_last().expect("nonempty");
    let mut t = table;
    for p in parents {
        let entry = t.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        t = entry
            .as_table_mut()
            .ok_or_else(|| Error::config(format!("override {key:?}: {p} is not a table")))?;
    }
    t.insert(last.to_string(), parse_value(raw));
    Ok(())
}

fn inherit_sigma(table: &mut toml::Table) {
    let Some(sigma) = table.get("sigma").cloned() else { return };
    for section in ["deen", "train"] {
        let entry = table.entry(section).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        if let Some(t) = entry.as_table_mut() {
            t.entry("sigma").or_insert(sigma.clone());
        }
    }
}

/// Parse config text, apply `key=value` overrides, validate.
pub fn parse_config(text: &str, overrides: &[(String, String)]) -> Result<ExperimentConfig> {
    let mut table: toml::Table = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
    for (k, v) in overrides {
        apply_override(&mut table, k, v)?;
    }
    inherit_sigma(&mut table);
    let cfg: ExperimentConfig = table.try_into().map_err(|e: toml::de::Error| Error::config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path, overrides: &[(String, String)]) -> Result<ExperimentConfig> {
    if !path.exists() {
        return Err(Error::Missing(path.to_path_buf()));
    }
    parse_config(&std::fs::read_to_string(path)?, overrides)
}
