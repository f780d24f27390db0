//! Episode data model, the JSON document format, trajectory preprocessing and
//! the synthetic paired-episode generator.

mod generate;
mod preprocess;
mod schema;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gridworld::{apply_action, Action, Cell, GridError, GridSpec, GridState};

pub use generate::{generate_pair, generate_pairs, GeneratorError};
pub use preprocess::{
    discretize, drop_dissolve_frames, moves_from_cells, path_cost, smooth_zigzag, RawSample,
    RawTrajectory,
};
pub use schema::{parse_episode, write_episode, EpisodeDoc, GridDoc, TrialDoc, SCHEMA_VERSION};

/// Familiarization trials per episode.
pub const FAMILIARIZATION_TRIALS: usize = 8;

#[derive(Debug, Error)]
pub enum EpisodeError {
    #[error("schema violation at `{path}`: {message}")]
    Schema { path: String, message: String },
    #[error("replay mismatch in trial {trial}, step {step}: {source}")]
    ReplayMismatch {
        trial: usize,
        step: usize,
        #[source]
        source: GridError,
    },
    #[error("trial has no steps")]
    EmptyTrial,
    #[error("sample {index} at ({x}, {y}) lies outside the grid")]
    OutOfBounds { index: usize, x: f64, y: f64 },
    #[error("sample timestamps must be non-decreasing (sample {0})")]
    NonMonotoneTime(usize),
    #[error("cells {from} and {to} are not 8-adjacent")]
    NotAdjacent { from: Cell, to: Cell },
}

/// Identifier of an observed agent.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AgentId(pub String);

impl AgentId {
    pub fn new(id: impl Into<String>) -> Self {
        AgentId(id.into())
    }
}

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskFamily {
    Efficiency,
    Preference,
    MultiAgent,
    InaccessibleGoal,
    Instrumental,
}

impl TaskFamily {
    pub const ALL: [TaskFamily; 5] = [
        TaskFamily::Efficiency,
        TaskFamily::Preference,
        TaskFamily::MultiAgent,
        TaskFamily::InaccessibleGoal,
        TaskFamily::Instrumental,
    ];

    pub const fn slug(self) -> &'static str {
        match self {
            TaskFamily::Efficiency => "efficiency",
            TaskFamily::Preference => "preference",
            TaskFamily::MultiAgent => "multi-agent",
            TaskFamily::InaccessibleGoal => "inaccessible-goal",
            TaskFamily::Instrumental => "instrumental",
        }
    }

    /// Row label used in accuracy reports.
    pub const fn title(self) -> &'static str {
        match self {
            TaskFamily::Efficiency => "Efficiency",
            TaskFamily::Preference => "Preference",
            TaskFamily::MultiAgent => "Multi-Agent",
            TaskFamily::InaccessibleGoal => "Inaccessible Goals",
            TaskFamily::Instrumental => "Instrumental Actions",
        }
    }

    pub fn subtasks(self) -> &'static [Subtask] {
        match self {
            TaskFamily::Efficiency => &[Subtask::PathControl, Subtask::TimeControl, Subtask::Irrational],
            TaskFamily::Instrumental => &[
                Subtask::NoBarrier,
                Subtask::InconsequentialBarrier,
                Subtask::BlockingBarrier,
            ],
            _ => &[],
        }
    }
}

impl fmt::Display for TaskFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.slug())
    }
}

impl FromStr for TaskFamily {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TaskFamily::ALL
            .into_iter()
            .find(|f| f.slug() == s)
            .ok_or_else(|| format!("unknown task family `{s}`"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Subtask {
    PathControl,
    TimeControl,
    Irrational,
    NoBarrier,
    InconsequentialBarrier,
    BlockingBarrier,
}

impl Subtask {
    pub const fn family(self) -> TaskFamily {
        match self {
            Subtask::PathControl | Subtask::TimeControl | Subtask::Irrational => {
                TaskFamily::Efficiency
            }
            _ => TaskFamily::Instrumental,
        }
    }

    pub const fn slug(self) -> &'static str {
        match self {
            Subtask::PathControl => "path-control",
            Subtask::TimeControl => "time-control",
            Subtask::Irrational => "irrational",
            Subtask::NoBarrier => "no-barrier",
            Subtask::InconsequentialBarrier => "inconsequential-barrier",
            Subtask::BlockingBarrier => "blocking-barrier",
        }
    }

    pub const fn title(self) -> &'static str {
        match self {
            Subtask::PathControl => "Path Control",
            Subtask::TimeControl => "Time Control",
            Subtask::Irrational => "Irrational",
            Subtask::NoBarrier => "No Barrier",
            Subtask::InconsequentialBarrier => "Inconsequential",
            Subtask::BlockingBarrier => "Blocking Barrier",
        }
    }
}

impl fmt::Display for Subtask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.slug())
    }
}

impl FromStr for Subtask {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TaskFamily::ALL
            .iter()
            .flat_map(|f| f.subtasks())
            .copied()
            .find(|t| t.slug() == s)
            .ok_or_else(|| format!("unknown subtask `{s}`"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Label {
    Plausible,
    Implausible,
}

/// One observed trial: an agent acting from an initial state.
#[derive(Clone, Debug, PartialEq)]
pub struct TrialRecord {
    pub agent_id: AgentId,
    pub initial: GridState,
    /// Each action with the state it produced.
    pub steps: Vec<(Action, GridState)>,
}

impl TrialRecord {
    /// Replays `actions` from `initial`. Step numbers in errors are 1-based.
    pub fn replay(
        agent_id: AgentId,
        initial: GridState,
        actions: &[Action],
        trial: usize,
    ) -> Result<Self, EpisodeError> {
        if actions.is_empty() {
            return Err(EpisodeError::EmptyTrial);
        }
        let mut steps = Vec::with_capacity(actions.len());
        let mut cur = initial.clone();
        for (i, &a) in actions.iter().enumerate() {
            cur = apply_action(&cur, a).map_err(|source| EpisodeError::ReplayMismatch {
                trial,
                step: i + 1,
                source,
            })?;
            steps.push((a, cur.clone()));
        }
        Ok(TrialRecord {
            agent_id,
            initial,
            steps,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        self.initial.spec()
    }

    pub fn actions(&self) -> impl Iterator<Item = Action> + '_ {
        self.steps.iter().map(|(a, _)| *a)
    }

    /// `(state before, action)` pairs.
    pub fn transitions(&self) -> impl Iterator<Item = (&GridState, Action)> + '_ {
        std::iter::once(&self.initial)
            .chain(self.steps.iter().map(|(_, s)| s))
            .zip(self.steps.iter().map(|(a, _)| *a))
    }

    pub fn final_state(&self) -> &GridState {
        self.steps.last().map_or(&self.initial, |(_, s)| s)
    }

    pub fn cells(&self) -> Vec<Cell> {
        std::iter::once(self.initial.agent_cell())
            .chain(self.steps.iter().map(|(_, s)| s.agent_cell()))
            .collect()
    }

    pub fn cost(&self) -> f64 {
        self.actions().map(crate::gridworld::step_cost).sum()
    }
}

/// Eight familiarization trials and one test trial.
#[derive(Clone, Debug, PartialEq)]
pub struct Episode {
    pub episode_id: String,
    pub task_family: TaskFamily,
    pub subtask: Option<Subtask>,
    pub familiarization: Vec<TrialRecord>,
    pub test: TrialRecord,
    pub expected_label: Option<Label>,
    pub pair_id: Option<String>,
}

impl Episode {
    /// All trials in presentation order.
    pub fn trials(&self) -> impl Iterator<Item = &TrialRecord> + '_ {
        self.familiarization.iter().chain(std::iter::once(&self.test))
    }
}
