use std::io::Write;

use super::{Config, HarnessError};
use crate::episodes::Episode;
use crate::inference::{run_episode_inference, EpisodeInference, InferenceError};
use crate::planner::Planner;
use crate::surprise::{plausibility, PlausibilityReport, SurpriseMetrics};

/// Scores the test trial of `episode`. Returns the inference trace unless the
/// model assigned zero likelihood somewhere, which rates as maximal surprise.
pub fn score_episode_traced(
    episode: &Episode,
    config: &Config,
) -> Result<(PlausibilityReport, Option<EpisodeInference>), HarnessError> {
    let mut planner = Planner::new();
    let (metrics, inference) = match run_episode_inference(episode, &config.inference, &mut planner) {
        Ok(inf) => (SurpriseMetrics::from_trace(inf.test_trial()), Some(inf)),
        Err(InferenceError::ZeroLikelihood { .. }) => (SurpriseMetrics::MAXIMAL, None),
        Err(source) => {
            return Err(HarnessError::Inference {
                episode_id: episode.episode_id.clone(),
                source,
            })
        }
    };
    Ok((plausibility(metrics, &config.weights, config.loglik_clamp), inference))
}

pub fn score_episode(episode: &Episode, config: &Config) -> Result<PlausibilityReport, HarnessError> {
    score_episode_traced(episode, config).map(|(report, _)| report)
}

/// Writes one CSV row per trial start and per observation:
/// `trial,t,goal:<id>…,beta:<value>…,step_loglik`. Trial-start rows have `t = 0`
/// and an empty likelihood.
pub fn write_trace_csv<W: Write>(inference: &EpisodeInference, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let Some(first) = inference.trials.first() else {
        return w.flush().map_err(Into::into);
    };
    let mut header = vec!["trial".to_string(), "t".to_string()];
    header.extend(first.goals().iter().map(|g| format!("goal:{g}")));
    header.extend(first.betas().iter().map(|b| format!("beta:{b}")));
    header.push("step_loglik".into());
    w.write_record(&header)?;
    let fmt = |xs: &[f64]| xs.iter().map(|x| x.to_string()).collect::<Vec<_>>();
    for (i, trial) in inference.trials.iter().enumerate() {
        let mut row = vec![i.to_string(), "0".into()];
        row.extend(fmt(trial.goal_prior()));
        row.extend(fmt(trial.efficiency_prior()));
        row.push(String::new());
        w.write_record(&row)?;
        for r in trial.rows() {
            let mut row = vec![i.to_string(), r.t.to_string()];
            row.extend(fmt(&r.goal_marginal));
            row.extend(fmt(&r.efficiency_marginal));
            row.push(r.step_loglik.to_string());
            w.write_record(&row)?;
        }
    }
    w.flush().map_err(Into::into)
}
