use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::embed::{DocEmbedConfig, TransEConfig};
use crate::error::{Error, Result};
use crate::ppr::Transition;
use crate::train::{AdamConfig, Fusion, ModelConfig, TrainConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    /// `ratings.txt` and `trust.txt` in the FilmTrust text format.
    Filmtrust,
    /// CSV bundle with comments and object-entity alignment.
    Siot,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub kind: DatasetKind,
    pub path: PathBuf,
    /// Label used in output rows; defaults to the directory name.
    pub name: Option<String>,
    pub min_user_comments: usize,
    pub min_object_comments: usize,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            kind: DatasetKind::Filmtrust,
            path: PathBuf::from("data/filmtrust"),
            name: None,
            min_user_comments: 15,
            min_object_comments: 10,
        }
    }
}

impl DatasetConfig {
    pub fn label(&self) -> String {
        self.name.clone().unwrap_or_else(|| {
            self.path
                .file_name()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "dataset".into())
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PprConfig {
    pub enabled: bool,
    pub k: usize,
    pub lambda: f64,
    pub epsilon: f64,
    /// Weight augmented edges by their PPR score instead of 1.
    pub weighted: bool,
    pub transition: Transition,
}

impl Default for PprConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            k: 10,
            lambda: 0.15,
            epsilon: 1e-6,
            weighted: false,
            transition: Transition::Walk,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RolesConfig {
    pub trustor_enabled: bool,
    pub trustee_enabled: bool,
}

impl Default for RolesConfig {
    fn default() -> Self {
        Self {
            trustor_enabled: true,
            trustee_enabled: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TriplesConfig {
    pub enabled: bool,
    /// Defaults to `triples.csv` inside the dataset directory.
    pub path: Option<PathBuf>,
    /// Train on every triple instead of only those headed by an object.
    pub full_kg: bool,
    pub transe: TransEConfig,
}

impl Default for TriplesConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            path: None,
            full_kg: false,
            transe: TransEConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    pub train_ratio: f64,
    /// Master seed; per-run seeds are derived from it.
    pub seed: u64,
    /// Number of seeds averaged.
    pub runs: usize,
    /// Initial feature dimension of users and objects.
    pub input_dim: usize,
    pub latent_dim: usize,
    pub num_layers: usize,
    pub ppr: PprConfig,
    pub roles: RolesConfig,
    pub fusion: Fusion,
    pub triples: TriplesConfig,
    pub doc: DocEmbedConfig,
    /// Precomputed user vectors (`user_id v1 ... vd` per line).
    pub user_vectors: Option<PathBuf>,
    /// Train the initial features; unset means "only when the dataset has
    /// no side information".
    pub learn_inputs: Option<bool>,
    pub predictor_depth: usize,
    pub optimizer: AdamConfig,
    pub epochs: usize,
    pub dropout: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetConfig::default(),
            train_ratio: 0.9,
            seed: 0,
            runs: 10,
            input_dim: 64,
            latent_dim: 64,
            num_layers: 2,
            ppr: PprConfig::default(),
            roles: RolesConfig::default(),
            fusion: Fusion::Gate,
            triples: TriplesConfig::default(),
            doc: DocEmbedConfig::default(),
            user_vectors: None,
            learn_inputs: None,
            predictor_depth: 1,
            optimizer: AdamConfig::default(),
            epochs: 200,
            dropout: 0.0,
        }
    }
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| config_err(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Sets a field by dotted path, e.g. `ppr.k=20` or `fusion=concat`.
    /// The value is parsed as JSON, falling back to a plain string.
    pub fn set(&mut self, path: &str, raw: &str) -> Result<()> {
        let mut root = serde_json::to_value(&*self).expect("config serializes");
        let mut slot = &mut root;
        for key in path.split('.') {
            slot = slot
                .as_object_mut()
                .and_then(|o| o.get_mut(key))
                .ok_or_else(|| config_err(format!("unknown setting {path:?}")))?;
        }
        *slot = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        *self = serde_json::from_value(root).map_err(|e| config_err(format!("{path}={raw}: {e}")))?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.train_ratio > 0.0 && self.train_ratio < 1.0) {
            return Err(config_err(format!(
                "train_ratio must lie in (0, 1), got {}",
                self.train_ratio
            )));
        }
        if self.runs == 0 {
            return Err(config_err("runs must be at least 1"));
        }
        if self.input_dim == 0 || self.latent_dim == 0 {
            return Err(config_err("dimensions must be positive"));
        }
        if self.ppr.enabled {
            if self.ppr.k == 0 {
                return Err(config_err("ppr.k must be at least 1"));
            }
            if !(self.ppr.lambda > 0.0 && self.ppr.lambda < 1.0) {
                return Err(config_err(format!(
                    "ppr.lambda must lie in (0, 1), got {}",
                    self.ppr.lambda
                )));
            }
            if !(self.ppr.epsilon > 0.0) {
                return Err(config_err(format!(
                    "ppr.epsilon must be positive, got {}",
                    self.ppr.epsilon
                )));
            }
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(config_err(format!("dropout must lie in [0, 1), got {}", self.dropout)));
        }
        if self.triples.enabled && self.dataset.kind != DatasetKind::Siot {
            return Err(config_err("triples require a siot dataset"));
        }
        if self.triples.enabled && self.triples.transe.dim != self.input_dim {
            return Err(config_err(format!(
                "triples.transe.dim ({}) must equal input_dim ({})",
                self.triples.transe.dim, self.input_dim
            )));
        }
        if self.doc.dim != self.input_dim && self.dataset.kind == DatasetKind::Siot && self.user_vectors.is_none() {
            return Err(config_err(format!(
                "doc.dim ({}) must equal input_dim ({})",
                self.doc.dim, self.input_dim
            )));
        }
        self.model().validate()
    }

    pub fn triples_path(&self) -> PathBuf {
        self.triples
            .path
            .clone()
            .unwrap_or_else(|| self.dataset.path.join("triples.csv"))
    }

    pub fn model(&self) -> ModelConfig {
        ModelConfig {
            latent_dim: self.latent_dim,
            num_layers: self.num_layers,
            trustor: self.roles.trustor_enabled,
            trustee: self.roles.trustee_enabled,
            fusion: self.fusion,
            predictor_depth: self.predictor_depth,
            learn_inputs: self.learn_inputs.unwrap_or(self.dataset.kind == DatasetKind::Filmtrust),
        }
    }

    pub fn train(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            adam: self.optimizer.clone(),
            dropout: self.dropout,
        }
    }
}

/// Dotted paths of the leaves where two configs differ.
pub fn config_diff(a: &ExperimentConfig, b: &ExperimentConfig) -> Vec<String> {
    fn walk(prefix: &str, a: &Value, b: &Value, out: &mut Vec<String>) {
        match (a, b) {
            (Value::Object(x), Value::Object(y)) => {
                let keys: std::collections::BTreeSet<&String> = x.keys().chain(y.keys()).collect();
                for k in keys {
                    let p = if prefix.is_empty() {
                        k.clone()
                    } else {
                        format!("{prefix}.{k}")
                    };
                    walk(
                        &p,
                        x.get(k).unwrap_or(&Value::Null),
                        y.get(k).unwrap_or(&Value::Null),
                        out,
                    );
                }
            }
            _ if a != b => out.push(prefix.to_string()),
            _ => {}
        }
    }
    let mut out = Vec::new();
    walk(
        "",
        &serde_json::to_value(a).expect("config serializes"),
        &serde_json::to_value(b).expect("config serializes"),
        &mut out,
    );
    out
}
