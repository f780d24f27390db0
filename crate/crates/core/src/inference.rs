//! Hierarchical Bayesian filtering over agent goals and efficiency.
//!
//! Per agent, goal preferences are Dirichlet distributed and marginalized out
//! analytically: the observer only tracks pseudo-counts, and the prior over the
//! goal of a new trial is the Dirichlet-categorical predictive. Efficiency lives
//! on a small fixed grid of inverse temperatures. Within a trial the observer
//! keeps the exact joint posterior over `(goal, efficiency)` and updates it with
//! the Boltzmann likelihood of each observed action. At the end of a trial the
//! goal posterior is folded into the pseudo-counts (soft counts) and the
//! efficiency posterior becomes the agent's efficiency prior for its next trial.
//!
//! Agents are independent: a trial only reads and writes its own agent's belief.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, InverseGamma};
use thiserror::Error;

use crate::episodes::{AgentId, Episode};
use crate::gridworld::{accessible, goal_reached, Action, GoalId, GridError, GridState};
use crate::planner::{ActionDistribution, PlanError, Planner};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InferenceError {
    #[error("at least one goal is required")]
    EmptyGoals,
    #[error("no goal is accessible from the initial state")]
    AllGoalsInaccessible,
    #[error("every hypothesis assigns zero probability to step {step}")]
    ZeroLikelihood { step: usize },
    #[error("invalid efficiency grid: {0}")]
    InvalidGrid(String),
    #[error("distribution has {got} entries, expected {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Plan(#[from] PlanError),
}

/// Default efficiency values: `{0.2, 0.2√2, 0.4, 0.4√2, 0.8}`.
pub fn default_efficiency_values() -> Vec<f64> {
    let r2 = std::f64::consts::SQRT_2;
    vec![0.2, 0.2 * r2, 0.4, 0.4 * r2, 0.8]
}

/// Discrete support for the efficiency (inverse temperature) with prior weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "EfficiencyGridDoc", into = "EfficiencyGridDoc")]
pub struct EfficiencyGrid {
    values: Vec<f64>,
    prior_weights: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct EfficiencyGridDoc {
    values: Vec<f64>,
    prior_weights: Vec<f64>,
}

impl TryFrom<EfficiencyGridDoc> for EfficiencyGrid {
    type Error = InferenceError;

    fn try_from(doc: EfficiencyGridDoc) -> Result<Self, Self::Error> {
        EfficiencyGrid::new(doc.values, doc.prior_weights)
    }
}

impl From<EfficiencyGrid> for EfficiencyGridDoc {
    fn from(g: EfficiencyGrid) -> Self {
        EfficiencyGridDoc {
            values: g.values,
            prior_weights: g.prior_weights,
        }
    }
}

impl EfficiencyGrid {
    /// Weights are renormalized; values must be positive and strictly increasing.
    pub fn new(values: Vec<f64>, prior_weights: Vec<f64>) -> Result<Self, InferenceError> {
        if values.is_empty() {
            return Err(InferenceError::InvalidGrid("no values".into()));
        }
        if values.len() != prior_weights.len() {
            return Err(InferenceError::LengthMismatch {
                expected: values.len(),
                got: prior_weights.len(),
            });
        }
        if !values.iter().all(|v| v.is_finite() && *v > 0.0)
            || values.windows(2).any(|w| w[1] <= w[0])
        {
            return Err(InferenceError::InvalidGrid(
                "values must be positive and strictly increasing".into(),
            ));
        }
        if !prior_weights.iter().all(|w| w.is_finite() && *w >= 0.0) {
            return Err(InferenceError::InvalidGrid("weights must be non-negative".into()));
        }
        let total: f64 = prior_weights.iter().sum();
        if total <= 0.0 {
            return Err(InferenceError::InvalidGrid("weights sum to zero".into()));
        }
        let prior_weights = if (total - 1.0).abs() <= 1e-12 {
            prior_weights
        } else {
            prior_weights.iter().map(|w| w / total).collect()
        };
        Ok(EfficiencyGrid {
            values,
            prior_weights,
        })
    }

    /// Weights proportional to the Inv-Gamma(`shape`, `scale`) density at each value.
    pub fn inverse_gamma(values: Vec<f64>, shape: f64, scale: f64) -> Result<Self, InferenceError> {
        let dist = InverseGamma::new(shape, scale)
            .map_err(|e| InferenceError::InvalidGrid(e.to_string()))?;
        let weights = values.iter().map(|&v| dist.pdf(v)).collect();
        EfficiencyGrid::new(values, weights)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn prior_weights(&self) -> &[f64] {
        &self.prior_weights
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

impl Default for EfficiencyGrid {
    fn default() -> Self {
        EfficiencyGrid::inverse_gamma(default_efficiency_values(), 1.0, 1.0)
            .expect("default grid is valid")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InferenceConfig {
    pub efficiency: EfficiencyGrid,
    /// Symmetric Dirichlet concentration `α` of the preference prior.
    pub goal_concentration: f64,
    /// Per-hypothesis floor on action log-probabilities; `None` disables it.
    pub loglik_floor: Option<f64>,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        InferenceConfig {
            efficiency: EfficiencyGrid::default(),
            goal_concentration: 1.0,
            loglik_floor: Some(-50.0),
        }
    }
}

/// Per-agent posterior carried across trials.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AgentBelief {
    pub agent_id: AgentId,
    pub goals: Vec<GoalId>,
    pub pseudocounts: Vec<f64>,
    pub efficiency_values: Vec<f64>,
    pub efficiency_posterior: Vec<f64>,
}

impl AgentBelief {
    /// Flat Dirichlet(1, …, 1) preferences and the grid's efficiency prior.
    pub fn new(
        agent_id: AgentId,
        goals: Vec<GoalId>,
        grid: &EfficiencyGrid,
    ) -> Result<Self, InferenceError> {
        AgentBelief::with_concentration(agent_id, goals, grid, 1.0)
    }

    pub fn with_concentration(
        agent_id: AgentId,
        goals: Vec<GoalId>,
        grid: &EfficiencyGrid,
        alpha: f64,
    ) -> Result<Self, InferenceError> {
        if goals.is_empty() {
            return Err(InferenceError::EmptyGoals);
        }
        Ok(AgentBelief {
            agent_id,
            pseudocounts: vec![alpha; goals.len()],
            goals,
            efficiency_values: grid.values().to_vec(),
            efficiency_posterior: grid.prior_weights().to_vec(),
        })
    }

    /// Dirichlet-categorical posterior predictive over the next goal.
    pub fn goal_predictive(&self) -> Vec<f64> {
        let total: f64 = self.pseudocounts.iter().sum();
        self.pseudocounts.iter().map(|c| c / total).collect()
    }

    /// Folds a finished trial into the belief: soft goal counts, and the
    /// trial's final efficiency marginal as the new efficiency prior.
    pub fn end_trial(&self, trial: &TrialPosterior) -> AgentBelief {
        let goal = trial.goal_marginal();
        let mut next = self.clone();
        for (c, p) in next.pseudocounts.iter_mut().zip(goal) {
            *c += p;
        }
        next.efficiency_posterior = trial.efficiency_marginal();
        next
    }
}

/// Zeroes inaccessible goals and renormalizes. Goals missing from the scene
/// count as inaccessible.
pub fn feasibilize(
    goals: &[GoalId],
    dist: &[f64],
    state: &GridState,
) -> Result<Vec<f64>, InferenceError> {
    if goals.len() != dist.len() {
        return Err(InferenceError::LengthMismatch {
            expected: goals.len(),
            got: dist.len(),
        });
    }
    let mut out = Vec::with_capacity(dist.len());
    for (goal, &p) in goals.iter().zip(dist) {
        let ok = p > 0.0 && state.objects().contains_key(goal) && accessible(state, goal)?;
        out.push(if ok { p } else { 0.0 });
    }
    let total: f64 = out.iter().sum();
    if total <= 0.0 {
        return Err(InferenceError::AllGoalsInaccessible);
    }
    out.iter_mut().for_each(|p| *p /= total);
    Ok(out)
}

/// Posterior snapshot after one observation.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceRow {
    /// 1-based observation index within the trial.
    pub t: usize,
    pub goal_marginal: Vec<f64>,
    pub efficiency_marginal: Vec<f64>,
    /// Log marginal likelihood of this observation given everything before it.
    pub step_loglik: f64,
    /// Row produced by the end-of-trial termination observation rather than an action.
    pub terminal: bool,
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

fn normalized(mut xs: Vec<f64>) -> Vec<f64> {
    let total: f64 = xs.iter().sum();
    xs.iter_mut().for_each(|x| *x /= total);
    xs
}

/// Joint posterior over `(goal, efficiency)` for one trial, plus its history.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrialPosterior {
    goals: Vec<GoalId>,
    betas: Vec<f64>,
    /// Row-major `goals × betas`, normalized so that `log Σ exp = 0`.
    log_joint: Vec<f64>,
    goal_prior: Vec<f64>,
    efficiency_prior: Vec<f64>,
    rows: Vec<TraceRow>,
}

impl TrialPosterior {
    /// Trial-start posterior: feasibilized goal predictive times the carried
    /// efficiency posterior.
    pub fn begin(belief: &AgentBelief, initial: &GridState) -> Result<Self, InferenceError> {
        let goal_prior = feasibilize(&belief.goals, &belief.goal_predictive(), initial)?;
        Ok(TrialPosterior::from_priors(
            belief.goals.clone(),
            belief.efficiency_values.clone(),
            goal_prior,
            belief.efficiency_posterior.clone(),
        ))
    }

    /// Independent priors; both must already be normalized.
    pub fn from_priors(
        goals: Vec<GoalId>,
        betas: Vec<f64>,
        goal_prior: Vec<f64>,
        efficiency_prior: Vec<f64>,
    ) -> Self {
        let log_joint = goal_prior
            .iter()
            .flat_map(|pg| efficiency_prior.iter().map(move |pb| (pg * pb).ln()))
            .collect();
        TrialPosterior {
            goals,
            betas,
            log_joint,
            goal_prior,
            efficiency_prior,
            rows: Vec::new(),
        }
    }

    pub fn goals(&self) -> &[GoalId] {
        &self.goals
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn goal_prior(&self) -> &[f64] {
        &self.goal_prior
    }

    pub fn efficiency_prior(&self) -> &[f64] {
        &self.efficiency_prior
    }

    pub fn rows(&self) -> &[TraceRow] {
        &self.rows
    }

    pub fn step_logliks(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.step_loglik).collect()
    }

    /// `P(g, β | observations)` row-major over goals × betas.
    pub fn joint(&self) -> Vec<f64> {
        self.log_joint.iter().map(|l| l.exp()).collect()
    }

    /// Renormalized so that a goal holding all the mass gets exactly 1.
    pub fn goal_marginal(&self) -> Vec<f64> {
        let k = self.betas.len();
        normalized(self.joint().chunks(k).map(|row| row.iter().sum()).collect())
    }

    pub fn efficiency_marginal(&self) -> Vec<f64> {
        let k = self.betas.len();
        let joint = self.joint();
        normalized(
            (0..k)
                .map(|j| joint.iter().skip(j).step_by(k).sum())
                .collect(),
        )
    }

    fn push_row(&mut self, step_loglik: f64, terminal: bool) {
        let row = TraceRow {
            t: self.rows.len() + 1,
            goal_marginal: self.goal_marginal(),
            efficiency_marginal: self.efficiency_marginal(),
            step_loglik,
            terminal,
        };
        self.rows.push(row);
    }

    #[cfg(test)]
    pub(crate) fn push_synthetic_row(&mut self, goal: Vec<f64>, efficiency: Vec<f64>, step_loglik: f64) {
        self.rows.push(TraceRow {
            t: self.rows.len() + 1,
            goal_marginal: goal,
            efficiency_marginal: efficiency,
            step_loglik,
            terminal: false,
        });
    }

    /// Log-probability of `action` for every hypothesis, row-major; `-∞` where
    /// the hypothesis has no weight and is skipped.
    fn action_logliks(
        &self,
        planner: &mut Planner,
        state: &GridState,
        action: Action,
        floor: Option<f64>,
    ) -> Result<Vec<f64>, InferenceError> {
        let k = self.betas.len();
        let mut out = vec![f64::NEG_INFINITY; self.log_joint.len()];
        for (gi, goal) in self.goals.iter().enumerate() {
            let row = gi * k..(gi + 1) * k;
            if self.log_joint[row.clone()].iter().all(|l| *l == f64::NEG_INFINITY) {
                continue;
            }
            // An agent already touching its goal would have stopped; a goal
            // absent from the scene cannot be pursued.
            let q = match state.objects().contains_key(goal) {
                true if !goal_reached(state, goal)? => Some(planner.q_values(state, goal)?),
                _ => None,
            };
            for (j, &beta) in self.betas.iter().enumerate() {
                let lp = q
                    .as_deref()
                    .and_then(|q| ActionDistribution::boltzmann(q, beta))
                    .map_or(f64::NEG_INFINITY, |pi| pi.log_prob(action));
                out[row.start + j] = match floor {
                    Some(f) => lp.max(f),
                    None => lp,
                };
            }
        }
        Ok(out)
    }

    /// Conditions on one observed action taken in `state`. Actions outside the
    /// legal set have probability zero under every hypothesis (subject to the floor).
    pub fn filter_step(
        mut self,
        planner: &mut Planner,
        state: &GridState,
        action: Action,
        floor: Option<f64>,
    ) -> Result<Self, InferenceError> {
        let lik = self.action_logliks(planner, state, action, floor)?;
        let updated: Vec<f64> = self.log_joint.iter().zip(&lik).map(|(a, b)| a + b).collect();
        let evidence = log_sum_exp(&updated);
        if !evidence.is_finite() {
            return Err(InferenceError::ZeroLikelihood {
                step: self.rows.len() + 1,
            });
        }
        self.log_joint = updated.into_iter().map(|l| l - evidence).collect();
        self.push_row(evidence, false);
        Ok(self)
    }

    /// Conditions on the trial having ended in `final_state`: trials end when
    /// the agent reaches its goal, so goals not touched there are ruled out.
    /// Leaves the posterior unchanged when no remaining goal is touched.
    pub fn observe_termination(mut self, final_state: &GridState) -> Self {
        let k = self.betas.len();
        let touched: Vec<bool> = self
            .goals
            .iter()
            .map(|g| goal_reached(final_state, g).unwrap_or(false))
            .collect();
        let updated: Vec<f64> = self
            .log_joint
            .iter()
            .enumerate()
            .map(|(i, &l)| if touched[i / k] { l } else { f64::NEG_INFINITY })
            .collect();
        let evidence = log_sum_exp(&updated);
        if !evidence.is_finite() {
            return self;
        }
        self.log_joint = updated.into_iter().map(|l| l - evidence).collect();
        self.push_row(evidence, true);
        self
    }
}

/// Result of filtering every trial of an episode.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpisodeInference {
    pub goals: Vec<GoalId>,
    /// One posterior per trial, in presentation order (test trial last).
    pub trials: Vec<TrialPosterior>,
    /// Final belief per agent.
    pub beliefs: BTreeMap<AgentId, AgentBelief>,
}

impl EpisodeInference {
    pub fn test_trial(&self) -> &TrialPosterior {
        self.trials.last().expect("episodes have a test trial")
    }
}

/// Filters every trial of `episode` in order, one belief per agent.
pub fn run_episode_inference(
    episode: &Episode,
    config: &InferenceConfig,
    planner: &mut Planner,
) -> Result<EpisodeInference, InferenceError> {
    let goals: Vec<GoalId> = episode
        .trials()
        .flat_map(|t| t.initial.objects().keys().cloned())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut beliefs: BTreeMap<AgentId, AgentBelief> = BTreeMap::new();
    let mut trials = Vec::with_capacity(episode.familiarization.len() + 1);
    for trial in episode.trials() {
        let belief = match beliefs.get(&trial.agent_id) {
            Some(b) => b.clone(),
            None => AgentBelief::with_concentration(
                trial.agent_id.clone(),
                goals.clone(),
                &config.efficiency,
                config.goal_concentration,
            )?,
        };
        let mut tp = TrialPosterior::begin(&belief, &trial.initial)?;
        for (state, action) in trial.transitions() {
            tp = tp.filter_step(planner, state, action, config.loglik_floor)?;
        }
        tp = tp.observe_termination(trial.final_state());
        beliefs.insert(trial.agent_id.clone(), belief.end_trial(&tp));
        trials.push(tp);
    }
    Ok(EpisodeInference {
        goals,
        trials,
        beliefs,
    })
}
