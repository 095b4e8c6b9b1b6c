use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::decoders::DecoderKind;
use crate::error::{Error, Result};
use crate::graph::HeteroGraph;
use crate::models::{ModelKind, Task};
use crate::preprocess::FeatureMode;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelConfig {
    pub kind: ModelKind,
    /// Shared input dimension d0 and the default per-layer hidden dim.
    #[serde(default = "default_dim")]
    pub dim: usize,
    /// Explicit per-layer dims; overrides `layers` x `dim` when present.
    /// For node classification the class count is appended as the final
    /// layer automatically.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layer_dims: Option<Vec<usize>>,
    #[serde(default = "default_layers")]
    pub layers: usize,
    #[serde(default = "default_heads")]
    pub heads: usize,
    #[serde(default = "default_dim")]
    pub edge_dim: usize,
    #[serde(default)]
    pub beta: f64,
    #[serde(default = "default_slope")]
    pub slope: f64,
    #[serde(default = "default_dropout")]
    pub dropout: f64,
    /// Feature mode: 0 all given, 1 target types only, 2 all one-hot.
    #[serde(default)]
    pub feat: u8,
    /// Node-type names whose raw features are kept under feat = 1; falls
    /// back to the dataset's target node type when empty.
    #[serde(default)]
    pub target_feat_types: Vec<String>,
    #[serde(default = "default_decoder")]
    pub decoder: DecoderKind,
    #[serde(default = "default_true")]
    pub l2_output: bool,
    #[serde(default = "default_true")]
    pub node_residual: bool,
    #[serde(default = "default_true")]
    pub type_embedding: bool,
}

fn default_dim() -> usize {
    64
}
fn default_layers() -> usize {
    3
}
fn default_heads() -> usize {
    8
}
fn default_slope() -> f64 {
    0.05
}
fn default_dropout() -> f64 {
    0.5
}
fn default_decoder() -> DecoderKind {
    DecoderKind::Distmult
}
fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub lr: f64,
    #[serde(default)]
    pub weight_decay: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainingConfig {
    #[serde(default = "default_patience")]
    pub patience: usize,
    #[serde(default = "default_max_epochs")]
    pub max_epochs: usize,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Seed for splits and fixed evaluation negatives, shared across the
    /// per-run seeds so every seed sees identical data.
    #[serde(default = "default_split_seed")]
    pub split_seed: u64,
    /// Minibatch size for BPR triples (recommendation only).
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    /// Fraction of training interactions held out as the recommendation
    /// validation slice (the protocol defines no separate validation set).
    #[serde(default = "default_rec_valid")]
    pub rec_valid_fraction: f64,
}

fn default_patience() -> usize {
    30
}
fn default_max_epochs() -> usize {
    1000
}
fn default_seeds() -> Vec<u64> {
    vec![0, 1, 2, 3, 4]
}
fn default_split_seed() -> u64 {
    1
}
fn default_batch() -> usize {
    1024
}
fn default_rec_valid() -> f64 {
    0.1
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            patience: default_patience(),
            max_epochs: default_max_epochs(),
            seeds: default_seeds(),
            split_seed: default_split_seed(),
            batch_size: default_batch(),
            rec_valid_fraction: default_rec_valid(),
        }
    }
}

/// BPR-MF pretraining settings for the recommendation bias term.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PretrainConfig {
    #[serde(default = "default_dim")]
    pub dim: usize,
    #[serde(default = "default_mf_epochs")]
    pub epochs: usize,
    #[serde(default = "default_mf_lr")]
    pub lr: f64,
    #[serde(default = "default_mf_reg")]
    pub reg: f64,
    /// Load embeddings from this file instead of pretraining.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

fn default_mf_epochs() -> usize {
    50
}
fn default_mf_lr() -> f64 {
    0.05
}
fn default_mf_reg() -> f64 {
    1e-4
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            dim: default_dim(),
            epochs: default_mf_epochs(),
            lr: default_mf_lr(),
            reg: default_mf_reg(),
            path: None,
        }
    }
}

/// One experiment: task, dataset, model, optimizer, and protocol knobs.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunConfig {
    pub task: Task,
    pub dataset: PathBuf,
    pub model: ModelConfig,
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub training: TrainingConfig,
    #[serde(default)]
    pub pretrain: PretrainConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_file(path: impl AsRef<Path>) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| Error::Dataset {
            path: path.as_ref().display().to_string(),
            msg: format!("cannot read config: {e}"),
        })?;
        let cfg: RunConfig = serde_json::from_str(&text).map_err(|e| Error::Dataset {
            path: path.as_ref().display().to_string(),
            msg: format!("invalid config: {e}"),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_value(value: serde_json::Value) -> Result<RunConfig> {
        let cfg: RunConfig = serde_json::from_value(value)
            .map_err(|e| Error::contract(format!("invalid config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.model.beta) {
            return Err(Error::contract(format!(
                "beta must lie in [0,1], got {}",
                self.model.beta
            )));
        }
        if self.optimizer.lr <= 0.0 {
            return Err(Error::contract("learning rate must be positive"));
        }
        if self.training.seeds.is_empty() {
            return Err(Error::contract("seeds list must be non-empty"));
        }
        if self.model.layers == 0 {
            return Err(Error::contract("model needs at least one layer"));
        }
        if self.model.feat > 2 {
            return Err(Error::contract(format!(
                "feat must be 0, 1, or 2, got {}",
                self.model.feat
            )));
        }
        Ok(())
    }

    /// Resolve the feature mode against a loaded dataset.
    pub fn feature_mode(&self, graph: &HeteroGraph) -> Result<FeatureMode> {
        let targets: BTreeSet<usize> = if self.model.feat == 1 {
            let names: Vec<String> = if self.model.target_feat_types.is_empty() {
                graph
                    .task()
                    .and_then(|t| t.target_node_type.clone())
                    .into_iter()
                    .collect()
            } else {
                self.model.target_feat_types.clone()
            };
            if names.is_empty() {
                return Err(Error::contract(
                    "feat=1 needs target_feat_types or a dataset target node type",
                ));
            }
            names
                .iter()
                .map(|n| {
                    graph
                        .node_type_id(n)
                        .ok_or_else(|| Error::contract(format!("unknown node type '{n}'")))
                })
                .collect::<Result<_>>()?
        } else {
            BTreeSet::new()
        };
        FeatureMode::from_code(self.model.feat, targets)
    }

    /// Per-layer output dims for the encoder. Node classification always
    /// ends in the class count.
    pub fn layer_dims(&self, classes: Option<usize>) -> Result<Vec<usize>> {
        let base: Vec<usize> = match (&self.model.layer_dims, self.task) {
            (Some(dims), Task::Node) => dims.clone(),
            (Some(dims), _) => return Ok(dims.clone()),
            (None, Task::Node) => vec![self.model.dim; self.model.layers.saturating_sub(1)],
            (None, _) => vec![self.model.dim; self.model.layers],
        };
        match (self.task, classes) {
            (Task::Node, Some(c)) => {
                let mut dims = base;
                dims.push(c);
                Ok(dims)
            }
            (Task::Node, None) => Err(Error::contract(
                "node task needs labels to size the final layer",
            )),
            _ => Ok(base),
        }
    }

    /// Key=value overrides with dotted paths, e.g. `model.beta=0.1` or
    /// `training.seeds=[1,2]`. Values parse as JSON with a string fallback.
    pub fn apply_overrides(value: &mut serde_json::Value, sets: &[(String, String)]) -> Result<()> {
        for (key, raw) in sets {
            let parsed: serde_json::Value = serde_json::from_str(raw)
                .unwrap_or_else(|_| serde_json::Value::String(raw.clone()));
            let parts: Vec<&str> = key.split('.').collect();
            let (last, path) = parts.split_last().expect("split always yields one part");
            let mut cursor = &mut *value;
            for part in path {
                let obj = cursor.as_object_mut().ok_or_else(|| {
                    Error::contract(format!("override '{key}': '{part}' is not an object"))
                })?;
                cursor = obj
                    .entry(part.to_string())
                    .or_insert_with(|| serde_json::json!({}));
            }
            let obj = cursor.as_object_mut().ok_or_else(|| {
                Error::contract(format!("override '{key}': parent is not an object"))
            })?;
            obj.insert(last.to_string(), parsed);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_json() -> serde_json::Value {
        serde_json::json!({
            "task": "node",
            "dataset": "fixtures/toy-node",
            "model": {"kind": "simple-hgn"},
            "optimizer": {"lr": 5e-4, "weight_decay": 1e-4}
        })
    }

    #[test]
    fn defaults_fill_in() {
        let cfg = RunConfig::from_value(base_json()).unwrap();
        assert_eq!(cfg.model.dim, 64);
        assert_eq!(cfg.model.heads, 8);
        assert_eq!(cfg.training.seeds, vec![0, 1, 2, 3, 4]);
        assert!(cfg.model.l2_output);
    }

    #[test]
    fn overrides_apply_and_typecheck() {
        let mut v = base_json();
        RunConfig::apply_overrides(
            &mut v,
            &[
                ("model.beta".into(), "0.05".into()),
                ("training.seeds".into(), "[7,8]".into()),
            ],
        )
        .unwrap();
        let cfg = RunConfig::from_value(v).unwrap();
        assert_eq!(cfg.model.beta, 0.05);
        assert_eq!(cfg.training.seeds, vec![7, 8]);
    }

    #[test]
    fn bad_override_type_is_rejected() {
        let mut v = base_json();
        RunConfig::apply_overrides(&mut v, &[("model.beta".into(), "\"high\"".into())]).unwrap();
        assert!(RunConfig::from_value(v).is_err());
    }

    #[test]
    fn beta_out_of_range_rejected() {
        let mut v = base_json();
        RunConfig::apply_overrides(&mut v, &[("model.beta".into(), "1.5".into())]).unwrap();
        assert!(RunConfig::from_value(v).is_err());
    }

    #[test]
    fn node_dims_end_in_classes() {
        let cfg = RunConfig::from_value(base_json()).unwrap();
        let dims = cfg.layer_dims(Some(4)).unwrap();
        assert_eq!(dims, vec![64, 64, 4]);
    }
}
