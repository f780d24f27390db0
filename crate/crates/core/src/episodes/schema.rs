//! Episode JSON document, version 1.
//!
//! ```text
//! {
//!   "version": 1,
//!   "episode_id": "preference-7-plausible",
//!   "task_family": "preference",            // efficiency | preference | multi-agent
//!                                           // | inaccessible-goal | instrumental
//!   "subtask": "path-control",              // optional
//!   "pair_id": "preference-7",              // optional
//!   "expected_label": "plausible",          // optional: plausible | implausible
//!   "grid": {"width": 10, "height": 10, "walls": [[x,y],...],
//!            "barrier": [[x,y],...], "key": [x,y], "lock": [x,y]},
//!   "trials": [                             // exactly 9: 8 familiarization + test
//!     {"agent_id": "agent-1",
//!      "grid": {...},                       // optional per-trial override
//!      "objects": {"a": [x,y], "b": [x,y]},
//!      "initial_agent": [x,y],
//!      "actions": ["NE", "E", "pick-up", "use-key", ...]}
//!   ]
//! }
//! ```
//!
//! Cells are `[x, y]` with the origin at the bottom-left. Intermediate states
//! are not stored; they are rebuilt by replaying the actions.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{AgentId, Episode, EpisodeError, Label, Subtask, TaskFamily, TrialRecord, FAMILIARIZATION_TRIALS};
use crate::gridworld::{Action, Cell, GoalId, GridSpec, GridState};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpisodeDoc {
    pub version: u32,
    pub episode_id: String,
    pub task_family: TaskFamily,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subtask: Option<Subtask>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pair_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_label: Option<Label>,
    pub grid: GridDoc,
    pub trials: Vec<TrialDoc>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridDoc {
    pub width: i32,
    pub height: i32,
    #[serde(default)]
    pub walls: Vec<Cell>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub barrier: Vec<Cell>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub key: Option<Cell>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lock: Option<Cell>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrialDoc {
    pub agent_id: AgentId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridDoc>,
    pub objects: BTreeMap<GoalId, Cell>,
    pub initial_agent: Cell,
    pub actions: Vec<Action>,
}

impl GridDoc {
    fn build(&self, path: &str) -> Result<GridSpec, EpisodeError> {
        GridSpec::new(
            self.width,
            self.height,
            self.walls.iter().copied(),
            self.barrier.iter().copied(),
            self.key,
            self.lock,
        )
        .map_err(|e| schema(path, e.to_string()))
    }

    fn from_spec(spec: &GridSpec) -> Self {
        GridDoc {
            width: spec.width(),
            height: spec.height(),
            walls: spec.walls().iter().copied().collect(),
            barrier: spec.barrier().iter().copied().collect(),
            key: spec.key(),
            lock: spec.lock(),
        }
    }
}

fn schema(path: impl Into<String>, message: impl Into<String>) -> EpisodeError {
    EpisodeError::Schema {
        path: path.into(),
        message: message.into(),
    }
}

impl EpisodeDoc {
    /// Validates the document and replays every trial.
    pub fn into_episode(self) -> Result<Episode, EpisodeError> {
        if self.version != SCHEMA_VERSION {
            return Err(schema(
                "version",
                format!("unsupported version {}, expected {SCHEMA_VERSION}", self.version),
            ));
        }
        if self.trials.len() != FAMILIARIZATION_TRIALS + 1 {
            return Err(schema(
                "trials",
                format!(
                    "expected {} trials ({FAMILIARIZATION_TRIALS} familiarization + 1 test), found {}",
                    FAMILIARIZATION_TRIALS + 1,
                    self.trials.len()
                ),
            ));
        }
        if let Some(sub) = self.subtask {
            if sub.family() != self.task_family {
                return Err(schema(
                    "subtask",
                    format!("subtask `{sub}` does not belong to family `{}`", self.task_family),
                ));
            }
        }
        let shared = Arc::new(self.grid.build("grid")?);
        let mut trials = Vec::with_capacity(self.trials.len());
        for (i, trial) in self.trials.into_iter().enumerate() {
            let spec = match &trial.grid {
                Some(doc) => {
                    let spec = doc.build(&format!("trials[{i}].grid"))?;
                    if spec == *shared {
                        Arc::clone(&shared)
                    } else {
                        Arc::new(spec)
                    }
                }
                None => Arc::clone(&shared),
            };
            let initial = GridState::new(spec, Arc::new(trial.objects), trial.initial_agent)
                .map_err(|e| schema(format!("trials[{i}]"), e.to_string()))?;
            let record = TrialRecord::replay(trial.agent_id, initial, &trial.actions, i)
                .map_err(|e| match e {
                    EpisodeError::EmptyTrial => schema(format!("trials[{i}].actions"), "no actions"),
                    other => other,
                })?;
            trials.push(record);
        }
        let test = trials.pop().expect("length checked above");
        Ok(Episode {
            episode_id: self.episode_id,
            task_family: self.task_family,
            subtask: self.subtask,
            familiarization: trials,
            test,
            expected_label: self.expected_label,
            pair_id: self.pair_id,
        })
    }

    pub fn from_episode(episode: &Episode) -> Self {
        let shared = episode.familiarization.first().unwrap_or(&episode.test).grid();
        let trials = episode
            .trials()
            .map(|t| TrialDoc {
                agent_id: t.agent_id.clone(),
                grid: (t.grid() != shared).then(|| GridDoc::from_spec(t.grid())),
                objects: (**t.initial.objects()).clone(),
                initial_agent: t.initial.agent_cell(),
                actions: t.actions().collect(),
            })
            .collect();
        EpisodeDoc {
            version: SCHEMA_VERSION,
            episode_id: episode.episode_id.clone(),
            task_family: episode.task_family,
            subtask: episode.subtask,
            pair_id: episode.pair_id.clone(),
            expected_label: episode.expected_label,
            grid: GridDoc::from_spec(shared),
            trials,
        }
    }
}

/// Parses and validates an episode document.
pub fn parse_episode(text: &str) -> Result<Episode, EpisodeError> {
    let mut de = serde_json::Deserializer::from_str(text);
    let doc: EpisodeDoc = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        schema(path, e.into_inner().to_string())
    })?;
    doc.into_episode()
}

pub fn write_episode(episode: &Episode) -> String {
    serde_json::to_string_pretty(&EpisodeDoc::from_episode(episode))
        .expect("episode documents always serialize")
}
