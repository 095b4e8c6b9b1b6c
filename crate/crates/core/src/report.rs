//! Per-seed and aggregated metric results, serialized as JSON.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct MetricSummary {
    pub per_seed: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

/// Results of one benchmark run. `runtime_s` is the designated
/// non-deterministic field; everything else is a pure function of config
/// and seeds.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: String,
    pub dataset: String,
    pub model: String,
    pub seeds: Vec<u64>,
    pub metrics: BTreeMap<String, MetricSummary>,
    /// Convention used for `std` (sample standard deviation, n-1).
    pub std_convention: String,
    /// Full resolved configuration for audit.
    pub config: serde_json::Value,
    pub runtime_s: f64,
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<EvalReport> {
        Ok(serde_json::from_str(text)?)
    }

    /// The report minus its designated timestamp field, for byte-level
    /// determinism comparisons.
    pub fn deterministic_view(&self) -> Result<String> {
        let mut v = serde_json::to_value(self)?;
        v.as_object_mut()
            .expect("report is a JSON object")
            .remove("runtime_s");
        Ok(serde_json::to_string_pretty(&v)?)
    }
}

/// Aggregate per-seed metric maps into mean and sample standard deviation
/// (n-1; zero for a single seed).
pub fn aggregate(
    task: &str,
    dataset: &str,
    model: &str,
    seeds: &[u64],
    per_seed: &[BTreeMap<String, f64>],
    config: serde_json::Value,
    runtime_s: f64,
) -> Result<EvalReport> {
    if seeds.is_empty() || seeds.len() != per_seed.len() {
        return Err(Error::contract(format!(
            "aggregate: got {} seeds and {} metric maps",
            seeds.len(),
            per_seed.len()
        )));
    }
    let names: Vec<String> = per_seed[0].keys().cloned().collect();
    let mut metrics = BTreeMap::new();
    for name in names {
        let values: Vec<f64> = per_seed
            .iter()
            .map(|m| {
                m.get(&name).copied().ok_or_else(|| {
                    Error::contract(format!("aggregate: metric '{name}' missing for some seed"))
                })
            })
            .collect::<Result<_>>()?;
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let std = if values.len() < 2 {
            0.0
        } else {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>()
                / (values.len() - 1) as f64;
            var.sqrt()
        };
        metrics.insert(name, MetricSummary {
            per_seed: values,
            mean,
            std,
        });
    }
    Ok(EvalReport {
        task: task.to_string(),
        dataset: dataset.to_string(),
        model: model.to_string(),
        seeds: seeds.to_vec(),
        metrics,
        std_convention: "sample (n-1)".to_string(),
        config,
        runtime_s,
    })
}
