//! L2-regularized logistic fits of the per-metric plausibility classifiers.

use serde::{Deserialize, Serialize};

use super::parallel::{map_items, Execution};
use super::{score_episode, Config, HarnessError};
use crate::episodes::{Episode, Label};
use crate::surprise::{logistic_rating, ClassifierWeights, LogisticWeights, SurpriseMetrics};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuningConfig {
    pub lambda: f64,
    pub max_iters: usize,
    /// Stop once the gradient norm falls below this.
    pub tolerance: f64,
    /// Also fit the log-likelihood classifier instead of keeping it fixed.
    pub fit_loglik: bool,
}

impl Default for TuningConfig {
    fn default() -> Self {
        TuningConfig {
            lambda: 1e-4,
            max_iters: 5000,
            tolerance: 1e-8,
            fit_loglik: false,
        }
    }
}

/// One training example: a metric value and whether the episode was plausible.
pub type Sample = (f64, bool);

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// `Σ CE(y, σ(w·x + b)) + λ(w² + b²)` with `y = 1` for plausible samples.
pub fn objective(samples: &[Sample], weights: LogisticWeights, lambda: f64) -> f64 {
    let ce: f64 = samples
        .iter()
        .map(|&(x, y)| {
            let z = weights.w * x + weights.b;
            if y {
                softplus(-z)
            } else {
                softplus(z)
            }
        })
        .sum();
    ce + lambda * (weights.w * weights.w + weights.b * weights.b)
}

/// Analytic gradient of [`objective`] with respect to `(w, b)`.
pub fn gradient(samples: &[Sample], weights: LogisticWeights, lambda: f64) -> [f64; 2] {
    let mut g = [2.0 * lambda * weights.w, 2.0 * lambda * weights.b];
    for &(x, y) in samples {
        let r = logistic_rating(x, weights.w, weights.b) - if y { 1.0 } else { 0.0 };
        g[0] += r * x;
        g[1] += r;
    }
    g
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub weights: LogisticWeights,
    /// Objective value at the start and after every accepted step.
    pub objective_trace: Vec<f64>,
    pub converged: bool,
}

/// Gradient descent with Armijo backtracking from `init`.
pub fn fit_logistic(samples: &[Sample], init: LogisticWeights, config: &TuningConfig) -> FitResult {
    const ARMIJO: f64 = 1e-4;
    let mut cur = init;
    let mut f = objective(samples, cur, config.lambda);
    let mut trace = vec![f];
    let mut step = 1.0;
    let mut converged = false;
    for _ in 0..config.max_iters {
        let g = gradient(samples, cur, config.lambda);
        let norm2 = g[0] * g[0] + g[1] * g[1];
        if norm2.sqrt() < config.tolerance {
            converged = true;
            break;
        }
        let mut accepted = None;
        while step > 1e-16 {
            let cand = LogisticWeights::new(cur.w - step * g[0], cur.b - step * g[1]);
            let fc = objective(samples, cand, config.lambda);
            if fc <= f - ARMIJO * step * norm2 {
                accepted = Some((cand, fc));
                break;
            }
            step *= 0.5;
        }
        let Some((cand, fc)) = accepted else {
            converged = true;
            break;
        };
        cur = cand;
        f = fc;
        trace.push(f);
        step *= 2.0;
    }
    FitResult {
        weights: cur,
        objective_trace: trace,
        converged,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledMetrics {
    pub metrics: SurpriseMetrics,
    pub plausible: bool,
}

/// Scores labeled episodes; episodes without a label are skipped.
pub fn collect_metrics(
    episodes: &[Episode],
    config: &Config,
    execution: Execution,
) -> Result<Vec<LabeledMetrics>, HarnessError> {
    let labeled: Vec<&Episode> = episodes.iter().filter(|e| e.expected_label.is_some()).collect();
    map_items(&labeled, execution, config.workers, |e| {
        score_episode(e, config).map(|r| LabeledMetrics {
            metrics: r.metrics,
            plausible: e.expected_label == Some(Label::Plausible),
        })
    })?
    .into_iter()
    .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuningResult {
    pub weights: ClassifierWeights,
    pub goal: FitResult,
    pub efficiency: FitResult,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loglik: Option<FitResult>,
}

/// Fits the goal and efficiency classifiers, starting from `base`. The
/// log-likelihood classifier keeps `base` unless `fit_loglik` is set.
pub fn tune_classifiers(
    data: &[LabeledMetrics],
    base: &ClassifierWeights,
    config: &TuningConfig,
) -> Result<TuningResult, HarnessError> {
    let positives = data.iter().filter(|d| d.plausible).count();
    if positives == 0 || positives == data.len() {
        return Err(HarnessError::DegenerateDataset);
    }
    let samples = |f: fn(&SurpriseMetrics) -> f64| -> Vec<Sample> {
        data.iter().map(|d| (f(&d.metrics), d.plausible)).collect()
    };
    let goal = fit_logistic(&samples(|m| m.goal_tv), base.goal, config);
    let efficiency = fit_logistic(&samples(|m| m.efficiency_tv), base.efficiency, config);
    let loglik = config
        .fit_loglik
        .then(|| fit_logistic(&samples(|m| m.loglik_change), base.loglik, config));
    Ok(TuningResult {
        weights: ClassifierWeights {
            goal: goal.weights,
            efficiency: efficiency.weights,
            loglik: loglik.as_ref().map_or(base.loglik, |r| r.weights),
        },
        goal,
        efficiency,
        loglik,
    })
}
