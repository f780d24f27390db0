//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on failure.

mod common;

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};

use hbtom::episodes::{generate_pairs, AgentId, moves_from_cells, path_cost, smooth_zigzag, Episode, Subtask, TaskFamily};
use hbtom::gridworld::{accessible, goal_reached, Action, Cell, Direction, GoalId, GridSpec, GridState};
use hbtom::harness::{
    collect_metrics, evaluate_pairs, gradient, objective, tune_classifiers, Config, Execution,
    TuningConfig,
};
use hbtom::inference::{run_episode_inference, AgentBelief, EfficiencyGrid, TrialPosterior};
use hbtom::planner::Planner;
use hbtom::surprise::{goal_surprise, logistic_rating, plausibility, ClassifierWeights, LogisticWeights, SurpriseMetrics};

use common::{boltzmann_log_prob, brute_force_trial_loglik, random_path, random_scene, reachable_states, value_iteration};

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn check(pass: bool, detail: impl Into<String>) -> Self {
        Outcome {
            pass,
            detail: detail.into(),
        }
    }
}

fn flatten(pairs: Vec<(Episode, Episode)>) -> Vec<Episode> {
    pairs.into_iter().flat_map(|(p, i)| [p, i]).collect()
}

fn planner_matches_value_iteration() -> Outcome {
    const GRIDS: usize = 60;
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut grids, mut keyed, mut states, mut worst) = (0, 0, 0usize, 0.0f64);
    while grids < GRIDS {
        let with_key = grids % 2 == 1;
        let Some(scene) = random_scene(&mut rng, 1, with_key) else {
            continue;
        };
        let goal = GoalId::new("g0");
        if !accessible(&scene, &goal).unwrap() {
            continue;
        }
        let cell = scene.goal_cell(&goal).unwrap();
        let oracle = value_iteration(scene.spec(), cell);
        let mut planner = Planner::new();
        for s in reachable_states(scene.spec(), scene.agent_state()) {
            let v = planner.value_at(scene.spec(), s, cell);
            let expected = oracle[scene.spec().state_index(s).unwrap()];
            worst = worst.max((v - expected).abs());
            states += 1;
        }
        grids += 1;
        keyed += usize::from(with_key);
    }
    let elapsed = start.elapsed();
    Outcome::check(
        worst <= 1e-9 && elapsed <= Duration::from_secs(60),
        format!("{grids} grids ({keyed} with key/lock), {states} states, max |ΔV| = {worst:.2e}, {elapsed:.1?}"),
    )
}

fn dirichlet_predictive_conjugacy() -> Outcome {
    const SAMPLES: usize = 1_000_000;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let grid = EfficiencyGrid::default();
    let (mut closed_worst, mut worst_z) = (0.0f64, 0.0f64);
    for _ in 0..20 {
        let k = rng.random_range(2..=5);
        let counts: Vec<usize> = (0..k).map(|_| rng.random_range(0..=10)).collect();
        let goals: Vec<GoalId> = (0..k).map(|i| GoalId::new(format!("g{i}"))).collect();
        let mut belief = AgentBelief::new(AgentId::new("agent"), goals.clone(), &grid).unwrap();
        for (i, &n) in counts.iter().enumerate() {
            let mut one_hot = vec![0.0; k];
            one_hot[i] = 1.0;
            for _ in 0..n {
                let trial = TrialPosterior::from_priors(
                    goals.clone(),
                    grid.values().to_vec(),
                    one_hot.clone(),
                    grid.prior_weights().to_vec(),
                );
                belief = belief.end_trial(&trial);
            }
        }
        let predictive = belief.goal_predictive();
        let total: usize = counts.iter().sum();
        for (i, &n) in counts.iter().enumerate() {
            let closed = (1.0 + n as f64) / (k as f64 + total as f64);
            closed_worst = closed_worst.max((predictive[i] - closed).abs());
        }

        let gammas: Vec<Gamma<f64>> = counts.iter().map(|&n| Gamma::new(1.0 + n as f64, 1.0).unwrap()).collect();
        let (mut sum, mut sum_sq) = (vec![0.0; k], vec![0.0; k]);
        let mut draw = vec![0.0; k];
        for _ in 0..SAMPLES {
            for (d, g) in draw.iter_mut().zip(&gammas) {
                *d = g.sample(&mut rng);
            }
            let z: f64 = draw.iter().sum();
            for i in 0..k {
                let theta = draw[i] / z;
                sum[i] += theta;
                sum_sq[i] += theta * theta;
            }
        }
        let n = SAMPLES as f64;
        for i in 0..k {
            let mean = sum[i] / n;
            let se = ((sum_sq[i] / n - mean * mean) / n).sqrt();
            worst_z = worst_z.max((mean - predictive[i]).abs() / se);
        }
    }
    Outcome::check(
        closed_worst <= 1e-12 && worst_z <= 3.0,
        format!("closed form max error {closed_worst:.1e}; Monte Carlo max deviation {worst_z:.2} SE over 20 count vectors"),
    )
}

/// Samples a trajectory of at most `max_steps` from a Boltzmann agent.
fn sample_trajectory(rng: &mut ChaCha8Rng, scene: &GridState, goal: &GoalId, beta: f64, max_steps: usize) -> Vec<Action> {
    let spec = scene.spec();
    let cell = scene.goal_cell(goal).unwrap();
    let v = value_iteration(spec, cell);
    let mut s = scene.agent_state();
    let mut actions = Vec::new();
    while actions.len() < max_steps && !s.cell.touches(cell) {
        let mut options = Vec::new();
        spec.for_each_transition(s, |a, next| options.push((a, next)));
        let mut r: f64 = rng.random();
        let mut pick = options[0];
        for &(a, next) in &options {
            let p = boltzmann_log_prob(spec, &v, cell, s, a, beta).exp();
            pick = (a, next);
            if r < p {
                break;
            }
            r -= p;
        }
        actions.push(pick.0);
        s = pick.1;
    }
    actions
}

fn filter_matches_brute_force() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let grid = EfficiencyGrid::default();
    let (mut trials, mut steps, mut worst) = (0, 0, 0.0f64);
    while trials < 100 {
        let n_goals = rng.random_range(2..=3);
        let Some(scene) = random_scene(&mut rng, n_goals, trials % 3 == 0) else {
            continue;
        };
        let goals: Vec<GoalId> = scene.objects().keys().cloned().collect();
        if !goals.iter().all(|g| accessible(&scene, g).unwrap()) {
            continue;
        }
        let raw: Vec<f64> = (0..n_goals).map(|_| rng.random_range(0.1..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let goal_prior: Vec<f64> = raw.iter().map(|p| p / total).collect();
        let target = &goals[rng.random_range(0..n_goals)];
        let beta = grid.values()[rng.random_range(0..grid.len())];
        let actions = sample_trajectory(&mut rng, &scene, target, beta, 15);

        let mut planner = Planner::new();
        let mut post = TrialPosterior::from_priors(
            goals.clone(),
            grid.values().to_vec(),
            goal_prior.clone(),
            grid.prior_weights().to_vec(),
        );
        let mut state = scene.clone();
        for &a in &actions {
            post = post.filter_step(&mut planner, &state, a, None).unwrap();
            state = hbtom::gridworld::apply_action(&state, a).unwrap();
        }
        let filtered: f64 = post.step_logliks().iter().sum();
        let brute = brute_force_trial_loglik(&scene, &actions, &goals, &goal_prior, grid.values(), grid.prior_weights());
        worst = worst.max((filtered - brute).abs());
        trials += 1;
        steps += actions.len();
    }
    Outcome::check(
        worst <= 1e-8,
        format!("{trials} trials, {steps} steps, max |Σ step loglik − brute force| = {worst:.2e}"),
    )
}

fn benchmark_accuracy() -> Outcome {
    const PAIRS: usize = 50;
    let start = Instant::now();
    let mut episodes = Vec::new();
    for family in TaskFamily::ALL {
        // The instrumental threshold concerns the blocking-barrier subtask.
        let subtask = (family == TaskFamily::Instrumental).then_some(Subtask::BlockingBarrier);
        episodes.extend(flatten(generate_pairs(family, subtask, PAIRS, 1000).unwrap()));
    }
    let config = Config::default();
    let result = evaluate_pairs(&episodes, &config, Execution::Parallel).unwrap();
    let elapsed = start.elapsed();
    let failures = result.failures(&config.thresholds);
    let summary: Vec<String> = config
        .thresholds
        .iter()
        .filter_map(|t| result.row(t.family, t.subtask))
        .map(|r| format!("{} {:.1}%", r.task, 100.0 * r.accuracy))
        .collect();
    let irrational = result
        .row(TaskFamily::Efficiency, Some(Subtask::Irrational))
        .map_or(0.0, |r| r.accuracy);
    Outcome::check(
        failures.is_empty() && elapsed <= Duration::from_secs(600),
        format!(
            "{}; irrational {:.1}%; {elapsed:.1?}",
            summary.join(", "),
            100.0 * irrational
        ),
    )
}

fn habituation() -> Outcome {
    let config = Config::default();
    let mut planner = Planner::new();
    let (pref, _) = hbtom::episodes::generate_pair(TaskFamily::Preference, None, 11).unwrap();
    let inf = run_episode_inference(&pref, &config.inference, &mut planner).unwrap();
    let p0 = inf.test_trial().goal_prior()[0];

    let (multi, _) = hbtom::episodes::generate_pair(TaskFamily::MultiAgent, None, 11).unwrap();
    let inf_multi = run_episode_inference(&multi, &config.inference, &mut planner).unwrap();
    let fresh = inf_multi.test_trial().goal_prior().to_vec();

    let (inacc, _) = hbtom::episodes::generate_pair(TaskFamily::InaccessibleGoal, None, 11).unwrap();
    let inf_inacc = run_episode_inference(&inacc, &config.inference, &mut planner).unwrap();
    let test = inf_inacc.test_trial();
    let reached_dispreferred = goal_reached(inacc.test.final_state(), &GoalId::new("b")).unwrap();
    let surprise = goal_surprise(test);

    Outcome::check(
        p0 == 0.9 && fresh == [0.5, 0.5] && reached_dispreferred && surprise == 0.0,
        format!("habituated P0 = {p0:.15}; new agent P0 = {fresh:?}; dispreferred-only goal surprise = {surprise}"),
    )
}

fn classifier_sanity() -> Outcome {
    let cases = [(0.0, -11.81, 5.96, 0.99743), (1.0, -11.81, 5.96, 0.00287), (0.0, -0.2, 2.0, 0.8808)];
    let worst = cases
        .iter()
        .map(|&(x, w, b, want)| (logistic_rating(x, w, b) - want).abs())
        .fold(0.0, f64::max);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let weights = ClassifierWeights::default();
    let mut violations = 0;
    for _ in 0..1000 {
        let m = SurpriseMetrics {
            goal_tv: rng.random(),
            efficiency_tv: rng.random(),
            loglik_change: rng.random_range(0.0..50.0),
        };
        let base = plausibility(m, &weights, None).p;
        let bumped = [
            SurpriseMetrics {
                goal_tv: (m.goal_tv + rng.random::<f64>() * 0.5).min(1.0),
                ..m
            },
            SurpriseMetrics {
                efficiency_tv: (m.efficiency_tv + rng.random::<f64>() * 0.5).min(1.0),
                ..m
            },
            SurpriseMetrics {
                loglik_change: m.loglik_change + rng.random_range(0.0..10.0),
                ..m
            },
        ];
        violations += bumped.iter().filter(|b| plausibility(**b, &weights, None).p > base).count();
    }
    Outcome::check(
        worst <= 1e-4 && violations == 0,
        format!("max logistic error {worst:.1e}; {violations} monotonicity violations in 1000 triples"),
    )
}

fn tuning() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let samples: Vec<(f64, bool)> = (0..60).map(|_| (rng.random::<f64>(), rng.random_bool(0.5))).collect();
    let mut worst_rel = 0.0f64;
    for _ in 0..20 {
        let w = LogisticWeights::new(rng.random_range(-15.0..15.0), rng.random_range(-10.0..10.0));
        let g = gradient(&samples, w, 1e-4);
        let h = 1e-5;
        let fd = [
            (objective(&samples, LogisticWeights::new(w.w + h, w.b), 1e-4)
                - objective(&samples, LogisticWeights::new(w.w - h, w.b), 1e-4))
                / (2.0 * h),
            (objective(&samples, LogisticWeights::new(w.w, w.b + h), 1e-4)
                - objective(&samples, LogisticWeights::new(w.w, w.b - h), 1e-4))
                / (2.0 * h),
        ];
        for i in 0..2 {
            worst_rel = worst_rel.max((g[i] - fd[i]).abs() / fd[i].abs().max(1.0));
        }
    }

    // 22 pairs per family = 220 episodes for fitting; disjoint seeds held out.
    let train: Vec<Episode> = TaskFamily::ALL
        .into_iter()
        .flat_map(|f| flatten(generate_pairs(f, None, 22, 50_000).unwrap()))
        .collect();
    let held_out: Vec<Episode> = TaskFamily::ALL
        .into_iter()
        .flat_map(|f| flatten(generate_pairs(f, None, 10, 60_000).unwrap()))
        .collect();
    let default = Config::default();
    let data = collect_metrics(&train, &default, Execution::Parallel).unwrap();
    let tuned = tune_classifiers(&data, &default.weights, &TuningConfig::default()).unwrap();
    let tuned_config = Config {
        weights: tuned.weights,
        ..Config::default()
    };
    let accuracy = |config: &Config| {
        let r = evaluate_pairs(&held_out, config, Execution::Parallel).unwrap();
        r.pairs.iter().filter(|p| p.correct).count() as f64 / r.pairs.len() as f64
    };
    let (acc_default, acc_tuned) = (accuracy(&default), accuracy(&tuned_config));
    let w = tuned.weights;
    Outcome::check(
        worst_rel <= 1e-6 && w.goal.w < 0.0 && w.efficiency.w < 0.0 && acc_tuned >= acc_default,
        format!(
            "gradient max rel error {worst_rel:.1e}; {} episodes, tuned goal w = {:.2}, efficiency w = {:.2}; held-out accuracy tuned {:.1}% vs default {:.1}%",
            train.len(),
            w.goal.w,
            w.efficiency.w,
            100.0 * acc_tuned,
            100.0 * acc_default
        ),
    )
}

fn preprocessing() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut bad = 0;
    let mut paths = 0;
    while paths < 1000 {
        let Some(scene) = random_scene(&mut rng, 0, false) else {
            continue;
        };
        let len = rng.random_range(1..=30);
        let cells = random_path(&mut rng, scene.spec(), scene.agent_cell(), len);
        let smooth = smooth_zigzag(&cells, scene.spec());
        let valid = moves_from_cells(&smooth).is_ok()
            && smooth
                .windows(2)
                .all(|w| scene.spec().can_move(w[0], w[0].direction_to(w[1]).unwrap(), false));
        let ok = smooth_zigzag(&smooth, scene.spec()) == smooth
            && smooth.first() == cells.first()
            && smooth.last() == cells.last()
            && path_cost(&smooth) <= path_cost(&cells) + 1e-12
            && valid;
        bad += usize::from(!ok);
        paths += 1;
    }
    let open = GridSpec::open(5, 5).unwrap();
    let zigzag = [(0, 0), (1, 0), (1, 1), (2, 1), (2, 2)].map(Cell::from);
    let moves = moves_from_cells(&smooth_zigzag(&zigzag, &open)).unwrap();
    let ne = Action::Move(Direction::NorthEast);
    Outcome::check(
        bad == 0 && moves == [ne, ne],
        format!("{bad} of {paths} random paths violate idempotence/endpoints/cost; E,N,E,N smooths to {moves:?}"),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("planner equals value iteration", planner_matches_value_iteration),
        ("Dirichlet predictive conjugacy", dirichlet_predictive_conjugacy),
        ("filter equals brute-force likelihood", filter_matches_brute_force),
        ("synthetic pairwise accuracy", benchmark_accuracy),
        ("habituation", habituation),
        ("classifier sanity", classifier_sanity),
        ("classifier tuning", tuning),
        ("path smoothing", preprocessing),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        failed += usize::from(!outcome.pass);
        println!(
            "{} criterion {} ({name}): {} [{:.1?}]",
            if outcome.pass { "PASS" } else { "FAIL" },
            i + 1,
            outcome.detail,
            start.elapsed()
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
