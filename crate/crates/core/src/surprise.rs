//! Surprise metrics over a test-trial posterior trace and the logistic
//! plausibility ratings built from them.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::inference::TrialPosterior;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("distributions have different supports ({left} vs {right} entries)")]
pub struct SupportMismatch {
    pub left: usize,
    pub right: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurpriseMetrics {
    pub goal_tv: f64,
    pub efficiency_tv: f64,
    pub loglik_change: f64,
}

impl SurpriseMetrics {
    /// Stand-in for a test trial the model cannot explain at all.
    pub const MAXIMAL: SurpriseMetrics = SurpriseMetrics {
        goal_tv: 1.0,
        efficiency_tv: 1.0,
        loglik_change: f64::MAX,
    };

    pub fn from_trace(trace: &TrialPosterior) -> Self {
        SurpriseMetrics {
            goal_tv: goal_surprise(trace),
            efficiency_tv: efficiency_surprise(trace),
            loglik_change: loglik_surprise(trace),
        }
    }
}

/// Classifier `σ(w·x + b)` for one metric.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogisticWeights {
    pub w: f64,
    pub b: f64,
}

impl LogisticWeights {
    pub const fn new(w: f64, b: f64) -> Self {
        LogisticWeights { w, b }
    }

    pub fn rate(self, x: f64) -> f64 {
        logistic_rating(x, self.w, self.b)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierWeights {
    pub goal: LogisticWeights,
    pub efficiency: LogisticWeights,
    pub loglik: LogisticWeights,
}

impl Default for ClassifierWeights {
    fn default() -> Self {
        ClassifierWeights {
            goal: LogisticWeights::new(-11.81, 5.96),
            efficiency: LogisticWeights::new(-9.42, 5.90),
            loglik: LogisticWeights::new(-0.2, 2.0),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlausibilityReport {
    pub metrics: SurpriseMetrics,
    pub p_goal: f64,
    pub p_eff: f64,
    pub p_obs: f64,
    pub p: f64,
}

/// Half the L1 distance.
pub fn tv_distance(p: &[f64], q: &[f64]) -> Result<f64, SupportMismatch> {
    if p.len() != q.len() {
        return Err(SupportMismatch {
            left: p.len(),
            right: q.len(),
        });
    }
    Ok(0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

fn max_tv<'a>(prior: &[f64], marginals: impl Iterator<Item = &'a Vec<f64>>) -> f64 {
    marginals
        .map(|m| tv_distance(m, prior).expect("trace marginals share the prior's support"))
        .fold(0.0, f64::max)
}

/// `max_t TV(P_t(g), P_0(g))` over the trace.
pub fn goal_surprise(trace: &TrialPosterior) -> f64 {
    max_tv(trace.goal_prior(), trace.rows().iter().map(|r| &r.goal_marginal))
}

/// `max_t TV(P_t(β), P_0(β))` over the trace.
pub fn efficiency_surprise(trace: &TrialPosterior) -> f64 {
    max_tv(
        trace.efficiency_prior(),
        trace.rows().iter().map(|r| &r.efficiency_marginal),
    )
}

/// `max_t (L_1 − L_t)` where `L_t` is the marginal log-likelihood of step `t`.
pub fn loglik_surprise(trace: &TrialPosterior) -> f64 {
    let logliks = trace.step_logliks();
    let Some(&first) = logliks.first() else {
        return 0.0;
    };
    logliks.iter().map(|l| first - l).fold(0.0, f64::max)
}

/// `1 / (1 + exp(−(w·x + b)))`.
pub fn logistic_rating(x: f64, w: f64, b: f64) -> f64 {
    let z = w * x + b;
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Product of the three sub-ratings. `loglik_clamp` caps the likelihood
/// metric before rating it.
pub fn plausibility(
    metrics: SurpriseMetrics,
    weights: &ClassifierWeights,
    loglik_clamp: Option<f64>,
) -> PlausibilityReport {
    let loglik = match loglik_clamp {
        Some(c) => metrics.loglik_change.min(c),
        None => metrics.loglik_change,
    };
    let p_goal = weights.goal.rate(metrics.goal_tv);
    let p_eff = weights.efficiency.rate(metrics.efficiency_tv);
    let p_obs = weights.loglik.rate(loglik);
    PlausibilityReport {
        metrics,
        p_goal,
        p_eff,
        p_obs,
        p: p_goal * p_eff * p_obs,
    }
}
