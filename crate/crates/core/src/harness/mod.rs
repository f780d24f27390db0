//! Episode scoring, pairwise evaluation, classifier tuning and episode I/O.

mod config;
mod eval;
mod parallel;
mod score;
mod tune;

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::episodes::{parse_episode, write_episode, Episode, EpisodeError};
use crate::inference::InferenceError;

pub use config::{default_thresholds, load_weights, Config, Threshold};
pub use eval::{evaluate_pairs, AccuracyRow, EpisodeResult, EvalResult, PairResult, ThresholdFailure};
pub use parallel::{map_items, Execution};
pub use score::{score_episode, score_episode_traced, write_trace_csv};
pub use tune::{
    collect_metrics, fit_logistic, gradient, objective, tune_classifiers, FitResult, LabeledMetrics, Sample,
    TuningConfig, TuningResult,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("episode `{episode_id}`: {source}")]
    Inference {
        episode_id: String,
        #[source]
        source: InferenceError,
    },
    #[error("`{}`: {source}", path.display())]
    Episode {
        path: PathBuf,
        #[source]
        source: EpisodeError,
    },
    #[error("`{}`: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("`{}`: {message}", path.display())]
    Config { path: PathBuf, message: String },
    #[error("episode or pair `{0}` has no matching partner")]
    Unpaired(String),
    #[error("tuning data contains a single class")]
    DegenerateDataset,
    #[error("worker pool: {0}")]
    Pool(String),
}

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn load_episode(path: &Path) -> Result<Episode, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(io_error(path))?;
    parse_episode(&text).map_err(|source| HarnessError::Episode {
        path: path.to_path_buf(),
        source,
    })
}

/// Episode files named by `source`: every `*.json` in a directory (sorted), or
/// the paths listed one per line in a manifest file, relative to the manifest.
/// Blank lines and lines starting with `#` are ignored.
pub fn episode_paths(source: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    if source.is_dir() {
        let mut paths = Vec::new();
        for entry in std::fs::read_dir(source).map_err(io_error(source))? {
            let path = entry.map_err(io_error(source))?.path();
            if path.extension().is_some_and(|e| e == "json") {
                paths.push(path);
            }
        }
        paths.sort();
        return Ok(paths);
    }
    let text = std::fs::read_to_string(source).map_err(io_error(source))?;
    let base = source.parent().unwrap_or(Path::new("."));
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| base.join(l))
        .collect())
}

pub fn load_episodes(source: &Path) -> Result<Vec<Episode>, HarnessError> {
    episode_paths(source)?.iter().map(|p| load_episode(p)).collect()
}

/// Writes each episode to `<dir>/<episode_id>.json`.
pub fn save_episodes(dir: &Path, episodes: &[Episode]) -> Result<Vec<PathBuf>, HarnessError> {
    std::fs::create_dir_all(dir).map_err(io_error(dir))?;
    episodes
        .iter()
        .map(|e| {
            let path = dir.join(format!("{}.json", e.episode_id));
            std::fs::write(&path, write_episode(e) + "\n").map_err(io_error(&path))?;
            Ok(path)
        })
        .collect()
}
