//! Independent reference implementations used by the integration tests.
//!
//! The oracles reuse only the gridworld's transition relation and step costs,
//! which define the model; values, policies and likelihoods are recomputed here
//! from scratch.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use hbtom::gridworld::{step_cost, Action, AgentState, Cell, Direction, GoalId, GridSpec, GridState};
use hbtom::planner::UNREACHABLE_VALUE;

/// Optimal values toward the object at `goal` for every dynamic state, indexed
/// by `GridSpec::state_index`, by Bellman iteration to a fixed point.
/// Unreachable states get [`UNREACHABLE_VALUE`].
pub fn value_iteration(spec: &GridSpec, goal: Cell) -> Vec<f64> {
    let n = spec.state_space_size();
    let mut v = vec![f64::NEG_INFINITY; n];
    let mut terminal = vec![false; n];
    for (i, t) in terminal.iter_mut().enumerate() {
        let s = spec.state_at(i);
        if spec.is_passable(s.cell, s.barrier_removed) && s.cell.touches(goal) {
            *t = true;
            v[i] = 0.0;
        }
    }
    loop {
        let mut changed = false;
        for i in 0..n {
            if terminal[i] {
                continue;
            }
            let s = spec.state_at(i);
            if !spec.is_passable(s.cell, s.barrier_removed) {
                continue;
            }
            let mut best = f64::NEG_INFINITY;
            spec.for_each_transition(s, |a, next| {
                let j = spec.state_index(next).expect("successors are in bounds");
                best = best.max(v[j] - step_cost(a));
            });
            if best > v[i] + 1e-12 {
                v[i] = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    v.into_iter()
        .map(|x| if x.is_finite() { x } else { UNREACHABLE_VALUE })
        .collect()
}

/// Dynamic states reachable from `start`.
pub fn reachable_states(spec: &GridSpec, start: AgentState) -> Vec<AgentState> {
    let mut seen = BTreeSet::from([start]);
    let mut queue = VecDeque::from([start]);
    while let Some(s) = queue.pop_front() {
        spec.for_each_transition(s, |_, next| {
            if seen.insert(next) {
                queue.push_back(next);
            }
        });
    }
    seen.into_iter().collect()
}

/// `log π(a | s)` for a Boltzmann agent with values `v`; `-∞` when the agent
/// already touches its goal or `a` is outside the support.
pub fn boltzmann_log_prob(spec: &GridSpec, v: &[f64], goal: Cell, s: AgentState, a: Action, beta: f64) -> f64 {
    if s.cell.touches(goal) {
        return f64::NEG_INFINITY;
    }
    let mut logits = Vec::new();
    let mut chosen = None;
    spec.for_each_transition(s, |b, next| {
        let vn = v[spec.state_index(next).unwrap()];
        if vn > UNREACHABLE_VALUE {
            let l = beta * (vn - step_cost(b));
            if b == a {
                chosen = Some(l);
            }
            logits.push(l);
        }
    });
    match chosen {
        Some(l) => l - log_sum_exp(&logits),
        None => f64::NEG_INFINITY,
    }
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// `log Σ_{g,β} P0(g) P0(β) Π_t π_{g,β}(a_t | s_t)` by direct enumeration.
pub fn brute_force_trial_loglik(
    initial: &GridState,
    actions: &[Action],
    goals: &[GoalId],
    goal_prior: &[f64],
    betas: &[f64],
    eff_prior: &[f64],
) -> f64 {
    let spec = initial.spec();
    let mut states = vec![initial.agent_state()];
    for &a in actions {
        let next = spec.successor(*states.last().unwrap(), a).expect("legal trajectory");
        states.push(next);
    }
    let mut terms = Vec::new();
    for (g, &pg) in goals.iter().zip(goal_prior) {
        if pg == 0.0 {
            continue;
        }
        let cell = initial.goal_cell(g).unwrap();
        let v = value_iteration(spec, cell);
        for (&beta, &pb) in betas.iter().zip(eff_prior) {
            let lp: f64 = actions
                .iter()
                .zip(&states)
                .map(|(&a, &s)| boltzmann_log_prob(spec, &v, cell, s, a, beta))
                .sum();
            terms.push(pg.ln() + pb.ln() + lp);
        }
    }
    log_sum_exp(&terms)
}

fn random_free_cell(rng: &mut ChaCha8Rng, spec: &GridSpec, taken: &BTreeSet<Cell>) -> Option<Cell> {
    for _ in 0..200 {
        let c = Cell::new(rng.random_range(0..spec.width()), rng.random_range(0..spec.height()));
        if spec.is_passable(c, false) && !taken.contains(&c) && spec.key() != Some(c) {
            return Some(c);
        }
    }
    None
}

/// Random 8×8 to 10×10 scene with `n_goals` objects, optionally with a key,
/// a lock and a barrier segment. The agent does not start touching any object.
/// Returns `None` for unusable draws.
pub fn random_scene(rng: &mut ChaCha8Rng, n_goals: usize, with_key: bool) -> Option<GridState> {
    let w = rng.random_range(8..=10);
    let h = rng.random_range(8..=10);
    let mut occupied = BTreeSet::new();
    let mut walls = BTreeSet::new();
    for x in 0..w {
        for y in 0..h {
            if rng.random_bool(0.18) {
                walls.insert(Cell::new(x, y));
                occupied.insert(Cell::new(x, y));
            }
        }
    }
    let (mut barrier, mut key, mut lock) = (Vec::new(), None, None);
    if with_key {
        let bx = rng.random_range(2..w - 2);
        let y0 = rng.random_range(0..h - 3);
        for y in y0..y0 + 3 {
            let c = Cell::new(bx, y);
            walls.remove(&c);
            barrier.push(c);
            occupied.insert(c);
        }
        let mut pick = || Cell::new(rng.random_range(0..w), rng.random_range(0..h));
        let k = pick();
        let l = pick();
        if occupied.contains(&k) || occupied.contains(&l) || k == l {
            return None;
        }
        occupied.insert(k);
        occupied.insert(l);
        key = Some(k);
        lock = Some(l);
    }
    let spec = GridSpec::new(w, h, walls, barrier, key, lock).ok()?;
    let mut taken = BTreeSet::new();
    let mut objects = BTreeMap::new();
    for i in 0..n_goals {
        let c = random_free_cell(rng, &spec, &taken)?;
        taken.insert(c);
        objects.insert(GoalId::new(format!("g{i}")), c);
    }
    let start = random_free_cell(rng, &spec, &taken)?;
    if objects.values().any(|&c| start.touches(c)) {
        return None;
    }
    GridState::new(Arc::new(spec), Arc::new(objects), start).ok()
}

/// Random legal path of `len` moves (fewer if the walk gets stuck), as cells.
pub fn random_path(rng: &mut ChaCha8Rng, spec: &GridSpec, start: Cell, len: usize) -> Vec<Cell> {
    let mut cells = vec![start];
    for _ in 0..len {
        let cur = *cells.last().unwrap();
        let options: Vec<Direction> = Direction::ALL
            .into_iter()
            .filter(|&d| spec.can_move(cur, d, false))
            .collect();
        if options.is_empty() {
            break;
        }
        cells.push(cur.step(options[rng.random_range(0..options.len())]));
    }
    cells
}
