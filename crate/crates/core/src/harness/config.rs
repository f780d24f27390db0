use std::path::Path;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::episodes::{Subtask, TaskFamily};
use crate::inference::InferenceConfig;
use crate::surprise::ClassifierWeights;

/// Minimum pairwise accuracy for one report row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Threshold {
    pub family: TaskFamily,
    /// `None` targets the family row.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subtask: Option<Subtask>,
    pub min_accuracy: f64,
}

pub fn default_thresholds() -> Vec<Threshold> {
    let row = |family, subtask, min_accuracy| Threshold {
        family,
        subtask,
        min_accuracy,
    };
    vec![
        row(TaskFamily::Efficiency, None, 0.90),
        row(TaskFamily::Preference, None, 0.95),
        row(TaskFamily::MultiAgent, None, 0.95),
        row(TaskFamily::InaccessibleGoal, None, 0.95),
        row(TaskFamily::Instrumental, Some(Subtask::BlockingBarrier), 0.95),
    ]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub inference: InferenceConfig,
    pub weights: ClassifierWeights,
    /// Upper bound applied to the log-likelihood metric before rating it.
    pub loglik_clamp: Option<f64>,
    /// Worker threads for parallel evaluation; `None` uses all cores.
    pub workers: Option<usize>,
    pub thresholds: Vec<Threshold>,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            inference: InferenceConfig::default(),
            weights: ClassifierWeights::default(),
            loglik_clamp: None,
            workers: None,
            thresholds: default_thresholds(),
        }
    }
}

/// Reads a JSON document, reporting the failing field path on error.
pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut de = serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(&mut de).map_err(|e| HarnessError::Config {
        path: path.to_path_buf(),
        message: format!("at `{}`: {}", e.path(), e.inner()),
    })
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        read_json(path)
    }
}

pub fn load_weights(path: &Path) -> Result<ClassifierWeights, HarnessError> {
    read_json(path)
}
