use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::parallel::{map_items, Execution};
use super::{score_episode, Config, HarnessError, Threshold};
use crate::episodes::{Episode, Label, Subtask, TaskFamily};
use crate::surprise::PlausibilityReport;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub episode_id: String,
    pub pair_id: String,
    pub label: Label,
    pub report: PlausibilityReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairResult {
    pub pair_id: String,
    pub family: TaskFamily,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subtask: Option<Subtask>,
    pub p_plausible: f64,
    pub p_implausible: f64,
    /// Strictly higher plausibility for the plausible member; ties are incorrect.
    pub correct: bool,
}

/// One row of the accuracy table: a family, or a subtask within it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRow {
    pub task: String,
    pub family: TaskFamily,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subtask: Option<Subtask>,
    pub pairs: usize,
    pub correct: usize,
    pub accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    /// Sorted by episode id.
    pub episodes: Vec<EpisodeResult>,
    /// Sorted by pair id.
    pub pairs: Vec<PairResult>,
    /// Family rows in canonical order, each followed by its subtask rows.
    /// Families without pairs are absent.
    pub table: Vec<AccuracyRow>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdFailure {
    pub task: String,
    pub accuracy: f64,
    pub min_accuracy: f64,
}

impl EvalResult {
    pub fn row(&self, family: TaskFamily, subtask: Option<Subtask>) -> Option<&AccuracyRow> {
        self.table
            .iter()
            .find(|r| r.family == family && r.subtask == subtask)
    }

    /// Rows below their threshold. Thresholds for absent rows are skipped.
    pub fn failures(&self, thresholds: &[Threshold]) -> Vec<ThresholdFailure> {
        thresholds
            .iter()
            .filter_map(|t| {
                let row = self.row(t.family, t.subtask)?;
                (row.accuracy < t.min_accuracy).then(|| ThresholdFailure {
                    task: row.task.clone(),
                    accuracy: row.accuracy,
                    min_accuracy: t.min_accuracy,
                })
            })
            .collect()
    }

    /// Fixed-width text rendering of the accuracy table.
    pub fn render_table(&self) -> String {
        let mut out = format!("{:<28} {:>6} {:>9}\n", "Task", "Pairs", "Accuracy");
        for r in &self.table {
            let name = match r.subtask {
                Some(_) => format!("  {}", r.task),
                None => r.task.clone(),
            };
            out.push_str(&format!("{:<28} {:>6} {:>8.1}%\n", name, r.pairs, 100.0 * r.accuracy));
        }
        out
    }
}

fn accuracy_row(task: String, family: TaskFamily, subtask: Option<Subtask>, pairs: &[&PairResult]) -> AccuracyRow {
    let correct = pairs.iter().filter(|p| p.correct).count();
    AccuracyRow {
        task,
        family,
        subtask,
        pairs: pairs.len(),
        correct,
        accuracy: correct as f64 / pairs.len() as f64,
    }
}

fn build_table(pairs: &[PairResult]) -> Vec<AccuracyRow> {
    let mut table = Vec::new();
    for family in TaskFamily::ALL {
        let members: Vec<&PairResult> = pairs.iter().filter(|p| p.family == family).collect();
        if members.is_empty() {
            continue;
        }
        table.push(accuracy_row(family.title().into(), family, None, &members));
        for &sub in family.subtasks() {
            let sub_members: Vec<&PairResult> = members.iter().copied().filter(|p| p.subtask == Some(sub)).collect();
            if !sub_members.is_empty() {
                table.push(accuracy_row(sub.title().into(), family, Some(sub), &sub_members));
            }
        }
    }
    table
}

/// Groups episodes into plausible/implausible pairs by `pair_id`.
fn pair_up(episodes: &[Episode]) -> Result<BTreeMap<&str, [&Episode; 2]>, HarnessError> {
    let mut groups: BTreeMap<&str, (Vec<&Episode>, Vec<&Episode>)> = BTreeMap::new();
    for e in episodes {
        let (Some(pair), Some(label)) = (e.pair_id.as_deref(), e.expected_label) else {
            return Err(HarnessError::Unpaired(e.episode_id.clone()));
        };
        let g = groups.entry(pair).or_default();
        match label {
            Label::Plausible => g.0.push(e),
            Label::Implausible => g.1.push(e),
        }
    }
    groups
        .into_iter()
        .map(|(id, (p, i))| match (p.as_slice(), i.as_slice()) {
            ([p], [i]) => Ok((id, [*p, *i])),
            _ => Err(HarnessError::Unpaired(id.to_string())),
        })
        .collect()
}

/// Scores every episode and compares the members of each pair.
pub fn evaluate_pairs(episodes: &[Episode], config: &Config, execution: Execution) -> Result<EvalResult, HarnessError> {
    let pairs = pair_up(episodes)?;
    let reports = map_items(episodes, execution, config.workers, |e| score_episode(e, config))?
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    let by_id: BTreeMap<&str, &PlausibilityReport> = episodes
        .iter()
        .zip(&reports)
        .map(|(e, r)| (e.episode_id.as_str(), r))
        .collect();

    let pair_results: Vec<PairResult> = pairs
        .iter()
        .map(|(id, [p, i])| {
            let pp = by_id[p.episode_id.as_str()].p;
            let pi = by_id[i.episode_id.as_str()].p;
            PairResult {
                pair_id: id.to_string(),
                family: p.task_family,
                subtask: p.subtask,
                p_plausible: pp,
                p_implausible: pi,
                correct: pp > pi,
            }
        })
        .collect();

    let mut episode_results: Vec<EpisodeResult> = episodes
        .iter()
        .zip(reports)
        .map(|(e, report)| EpisodeResult {
            episode_id: e.episode_id.clone(),
            pair_id: e.pair_id.clone().expect("checked when pairing"),
            label: e.expected_label.expect("checked when pairing"),
            report,
        })
        .collect();
    episode_results.sort_by(|a, b| a.episode_id.cmp(&b.episode_id));

    Ok(EvalResult {
        table: build_table(&pair_results),
        episodes: episode_results,
        pairs: pair_results,
    })
}
