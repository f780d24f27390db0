//! Seeded generator of paired plausible/implausible episodes for every task family.
//!
//! All scenes are 10×10. Goals are named `a` (the demonstrated goal) and `b`.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::{AgentId, Episode, EpisodeError, Label, Subtask, TaskFamily, TrialRecord, FAMILIARIZATION_TRIALS};
use crate::gridworld::{apply_action, goal_reached, Action, Cell, Direction, GoalId, GridError, GridSpec, GridState};
use crate::planner::{astar, PlanError, Planner};

const SIZE: i32 = 10;
const MAX_ATTEMPTS: usize = 10_000;
/// Efficiency of the sampled irrational agent.
const IRRATIONAL_BETA: f64 = 0.1;
const MAX_WALK: usize = 200;

#[derive(Debug, Error)]
pub enum GeneratorError {
    #[error("subtask `{subtask}` does not belong to family `{family}`")]
    UnknownSubtask { family: TaskFamily, subtask: Subtask },
    #[error("no valid scene found after {MAX_ATTEMPTS} attempts")]
    Exhausted,
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Episode(#[from] EpisodeError),
}

type Pair = (Episode, Episode);

fn goal_a() -> GoalId {
    GoalId::new("a")
}

fn goal_b() -> GoalId {
    GoalId::new("b")
}

fn agent(n: u32) -> AgentId {
    AgentId::new(format!("agent-{n}"))
}

fn scene(spec: &Arc<GridSpec>, objects: &[(GoalId, Cell)], start: Cell) -> Result<GridState, GeneratorError> {
    let objects: BTreeMap<GoalId, Cell> = objects.iter().cloned().collect();
    Ok(GridState::new(Arc::clone(spec), Arc::new(objects), start)?)
}

fn plan(state: &GridState, goal: &GoalId) -> Result<Vec<Action>, GeneratorError> {
    Ok(astar(state, goal)?.actions)
}

fn record(agent_id: AgentId, initial: GridState, actions: &[Action], index: usize) -> Result<TrialRecord, GeneratorError> {
    Ok(TrialRecord::replay(agent_id, initial, actions, index)?)
}

/// Whether `actions` from `state` ever touch `other` (including the final state).
fn touches_along(state: &GridState, actions: &[Action], other: &GoalId) -> Result<bool, GeneratorError> {
    let mut cur = state.clone();
    for &a in actions {
        cur = apply_action(&cur, a)?;
        if goal_reached(&cur, other)? {
            return Ok(true);
        }
    }
    Ok(false)
}

fn random_cell(rng: &mut ChaCha8Rng, xs: std::ops::RangeInclusive<i32>, ys: std::ops::RangeInclusive<i32>) -> Cell {
    Cell::new(rng.random_range(xs), rng.random_range(ys))
}

fn open_spec() -> Arc<GridSpec> {
    Arc::new(GridSpec::open(SIZE, SIZE).expect("arena size is valid"))
}

/// Agent plus two goals, pairwise at least three cells apart.
fn two_goal_layout(rng: &mut ChaCha8Rng) -> (Cell, Cell, Cell) {
    loop {
        let full = 0..=SIZE - 1;
        let s = random_cell(rng, full.clone(), full.clone());
        let a = random_cell(rng, full.clone(), full.clone());
        let b = random_cell(rng, full.clone(), full);
        if s.chebyshev(a) >= 3 && s.chebyshev(b) >= 3 && a.chebyshev(b) >= 3 {
            return (s, a, b);
        }
    }
}

/// A trial in an open scene walking straight to `target`, never touching the other goal.
fn two_goal_trial(
    rng: &mut ChaCha8Rng,
    spec: &Arc<GridSpec>,
    agent_id: AgentId,
    target: &GoalId,
    index: usize,
) -> Result<TrialRecord, GeneratorError> {
    let other = if *target == goal_a() { goal_b() } else { goal_a() };
    for _ in 0..MAX_ATTEMPTS {
        let (s, a, b) = two_goal_layout(rng);
        let state = scene(spec, &[(goal_a(), a), (goal_b(), b)], s)?;
        let actions = plan(&state, target)?;
        if !touches_along(&state, &actions, &other)? {
            return record(agent_id, state, &actions, index);
        }
    }
    Err(GeneratorError::Exhausted)
}

/// Test scene from which both goals can be reached without touching the other.
fn two_goal_test(
    rng: &mut ChaCha8Rng,
    spec: &Arc<GridSpec>,
) -> Result<(GridState, Vec<Action>, Vec<Action>), GeneratorError> {
    for _ in 0..MAX_ATTEMPTS {
        let (s, a, b) = two_goal_layout(rng);
        let state = scene(spec, &[(goal_a(), a), (goal_b(), b)], s)?;
        let to_a = plan(&state, &goal_a())?;
        let to_b = plan(&state, &goal_b())?;
        if !touches_along(&state, &to_a, &goal_b())? && !touches_along(&state, &to_b, &goal_a())? {
            return Ok((state, to_a, to_b));
        }
    }
    Err(GeneratorError::Exhausted)
}

fn preference_familiarization(rng: &mut ChaCha8Rng, spec: &Arc<GridSpec>) -> Result<Vec<TrialRecord>, GeneratorError> {
    (0..FAMILIARIZATION_TRIALS)
        .map(|i| two_goal_trial(rng, spec, agent(1), &goal_a(), i))
        .collect()
}

fn preference(rng: &mut ChaCha8Rng) -> Result<(Vec<TrialRecord>, TrialRecord, Vec<TrialRecord>, TrialRecord), GeneratorError> {
    let spec = open_spec();
    let fam = preference_familiarization(rng, &spec)?;
    let (state, to_a, to_b) = two_goal_test(rng, &spec)?;
    let plausible = record(agent(1), state.clone(), &to_a, FAMILIARIZATION_TRIALS)?;
    let implausible = record(agent(1), state, &to_b, FAMILIARIZATION_TRIALS)?;
    Ok((fam.clone(), plausible, fam, implausible))
}

fn multi_agent(rng: &mut ChaCha8Rng) -> Result<(Vec<TrialRecord>, TrialRecord, Vec<TrialRecord>, TrialRecord), GeneratorError> {
    let spec = open_spec();
    let fam = preference_familiarization(rng, &spec)?;
    let (state, _, to_b) = two_goal_test(rng, &spec)?;
    let plausible = record(agent(2), state.clone(), &to_b, FAMILIARIZATION_TRIALS)?;
    let implausible = record(agent(1), state, &to_b, FAMILIARIZATION_TRIALS)?;
    Ok((fam.clone(), plausible, fam, implausible))
}

/// The eight cells around `c` that lie inside the arena.
fn ring(c: Cell) -> Vec<Cell> {
    Direction::ALL
        .iter()
        .map(|&d| c.step(d))
        .filter(|n| (0..SIZE).contains(&n.x) && (0..SIZE).contains(&n.y))
        .collect()
}

fn inaccessible_goal(rng: &mut ChaCha8Rng) -> Result<(Vec<TrialRecord>, TrialRecord, Vec<TrialRecord>, TrialRecord), GeneratorError> {
    let open = open_spec();
    let fam = preference_familiarization(rng, &open)?;
    for _ in 0..MAX_ATTEMPTS {
        let (s, a, b) = two_goal_layout(rng);
        let walls = ring(a);
        if walls.contains(&s) || walls.iter().any(|w| w.chebyshev(b) <= 1) {
            continue;
        }
        let walled = Arc::new(GridSpec::new(SIZE, SIZE, walls, [], None, None)?);
        let objects = [(goal_a(), a), (goal_b(), b)];
        let blocked = scene(&walled, &objects, s)?;
        let reachable = scene(&open, &objects, s)?;
        let to_b_blocked = plan(&blocked, &goal_b())?;
        let to_b_open = plan(&reachable, &goal_b())?;
        if touches_along(&reachable, &to_b_open, &goal_a())? {
            continue;
        }
        let plausible = record(agent(1), blocked, &to_b_blocked, FAMILIARIZATION_TRIALS)?;
        let implausible = record(agent(1), reachable, &to_b_open, FAMILIARIZATION_TRIALS)?;
        return Ok((fam.clone(), plausible, fam, implausible));
    }
    Err(GeneratorError::Exhausted)
}

/// Single-goal scene crossing the arena, with a vertical wall between agent and goal.
struct Crossing {
    start: Cell,
    goal: Cell,
    wall: Vec<Cell>,
}

impl Crossing {
    fn sample(rng: &mut ChaCha8Rng) -> Self {
        let y0 = rng.random_range(2..=7);
        let half = 4;
        let wall_x = rng.random_range(3..=6);
        let wall = (y0 - half..=y0 + half)
            .filter(|y| (0..SIZE).contains(y))
            .map(|y| Cell::new(wall_x, y))
            .collect();
        Crossing {
            start: Cell::new(1, y0),
            goal: Cell::new(8, y0),
            wall,
        }
    }

    fn walled(&self) -> Result<GridState, GeneratorError> {
        let spec = Arc::new(GridSpec::new(SIZE, SIZE, self.wall.iter().copied(), [], None, None)?);
        scene(&spec, &[(goal_a(), self.goal)], self.start)
    }

    fn open(&self) -> Result<GridState, GeneratorError> {
        scene(&open_spec(), &[(goal_a(), self.goal)], self.start)
    }
}

fn cost(actions: &[Action]) -> f64 {
    actions.iter().copied().map(crate::gridworld::step_cost).sum()
}

/// Detour around the wall, replayed in the open scene, costing at least 4 more than the straight path.
fn crossing_with_detour(rng: &mut ChaCha8Rng) -> Result<(Crossing, Vec<Action>, Vec<Action>), GeneratorError> {
    for _ in 0..MAX_ATTEMPTS {
        let c = Crossing::sample(rng);
        let detour = plan(&c.walled()?, &goal_a())?;
        let straight = plan(&c.open()?, &goal_a())?;
        if cost(&detour) >= cost(&straight) + 4.0 - 1e-9 {
            return Ok((c, detour, straight));
        }
    }
    Err(GeneratorError::Exhausted)
}

/// Efficient trials around a wall.
fn obstacle_familiarization(rng: &mut ChaCha8Rng) -> Result<Vec<TrialRecord>, GeneratorError> {
    (0..FAMILIARIZATION_TRIALS)
        .map(|i| {
            let c = Crossing::sample(rng);
            let state = c.walled()?;
            let actions = plan(&state, &goal_a())?;
            record(agent(1), state, &actions, i)
        })
        .collect()
}

/// Path of a low-efficiency Boltzmann agent toward goal `a`, resampled until
/// it arrives within [`MAX_WALK`] steps.
fn meandering_walk(rng: &mut ChaCha8Rng, planner: &mut Planner, state: &GridState) -> Result<Vec<Action>, GeneratorError> {
    let goal = goal_a();
    'attempt: for _ in 0..MAX_ATTEMPTS {
        let mut cur = state.clone();
        let mut actions = Vec::new();
        while !goal_reached(&cur, &goal)? {
            if actions.len() == MAX_WALK {
                continue 'attempt;
            }
            let pi = planner.boltzmann_policy(&cur, &goal, IRRATIONAL_BETA)?;
            let mut r: f64 = rng.random();
            let mut chosen = None;
            for (a, p) in pi.iter() {
                chosen = Some(a);
                if r < p {
                    break;
                }
                r -= p;
            }
            let a = chosen.expect("policy has support away from the goal");
            cur = apply_action(&cur, a)?;
            actions.push(a);
        }
        return Ok(actions);
    }
    Err(GeneratorError::Exhausted)
}

/// Inserts an out-and-back excursion of two cells in the middle of a path.
fn with_spike(state: &GridState, actions: &[Action]) -> Result<Vec<Action>, GeneratorError> {
    let k = actions.len() / 2;
    let mut cur = state.clone();
    for &a in &actions[..k] {
        cur = apply_action(&cur, a)?;
    }
    let dir = if cur.agent_cell().y + 2 < SIZE {
        Direction::North
    } else {
        Direction::South
    };
    let spike = [dir, dir, dir.opposite(), dir.opposite()].map(Action::Move);
    let mut out = actions[..k].to_vec();
    out.extend(spike);
    out.extend_from_slice(&actions[k..]);
    Ok(out)
}

fn efficiency(rng: &mut ChaCha8Rng, subtask: Subtask) -> Result<(Vec<TrialRecord>, TrialRecord, Vec<TrialRecord>, TrialRecord), GeneratorError> {
    match subtask {
        Subtask::PathControl => {
            let fam = obstacle_familiarization(rng)?;
            let (c, detour, straight) = crossing_with_detour(rng)?;
            let plausible = record(agent(1), c.open()?, &straight, FAMILIARIZATION_TRIALS)?;
            let implausible = record(agent(1), c.open()?, &detour, FAMILIARIZATION_TRIALS)?;
            Ok((fam.clone(), plausible, fam, implausible))
        }
        Subtask::TimeControl => {
            let fam = obstacle_familiarization(rng)?;
            let c = Crossing::sample(rng);
            let state = c.open()?;
            let straight = plan(&state, &goal_a())?;
            let slow = with_spike(&state, &straight)?;
            let plausible = record(agent(1), state.clone(), &straight, FAMILIARIZATION_TRIALS)?;
            let implausible = record(agent(1), state, &slow, FAMILIARIZATION_TRIALS)?;
            Ok((fam.clone(), plausible, fam, implausible))
        }
        Subtask::Irrational => {
            // Both members share the meandering test; they differ in whether the
            // agent meandered during familiarization.
            let mut planner = Planner::new();
            let mut irrational = Vec::with_capacity(FAMILIARIZATION_TRIALS);
            let mut efficient = Vec::with_capacity(FAMILIARIZATION_TRIALS);
            for i in 0..FAMILIARIZATION_TRIALS {
                let state = Crossing::sample(rng).open()?;
                let walk = meandering_walk(rng, &mut planner, &state)?;
                irrational.push(record(agent(1), state.clone(), &walk, i)?);
                efficient.push(record(agent(1), state.clone(), &plan(&state, &goal_a())?, i)?);
            }
            // The test must visibly meander, and only after an optimal opening step.
            for _ in 0..MAX_ATTEMPTS {
                let state = Crossing::sample(rng).open()?;
                let walk = meandering_walk(rng, &mut planner, &state)?;
                if cost(&walk) < cost(&plan(&state, &goal_a())?) + 4.0
                    || !matches!(first_suboptimal_step(&state, &walk)?, Some(i) if i >= 1)
                {
                    continue;
                }
                let test = record(agent(1), state, &walk, FAMILIARIZATION_TRIALS)?;
                return Ok((irrational, test.clone(), efficient, test));
            }
            Err(GeneratorError::Exhausted)
        }
        other => Err(GeneratorError::UnknownSubtask {
            family: TaskFamily::Efficiency,
            subtask: other,
        }),
    }
}

/// Walled enclosure on the east side, closed on the west by a removable barrier.
struct Enclosure {
    start: Cell,
    key: Cell,
    lock: Cell,
}

const ENCLOSURE_GOAL: Cell = Cell::new(9, 5);

impl Enclosure {
    fn sample(rng: &mut ChaCha8Rng) -> Self {
        loop {
            let start = random_cell(rng, 0..=3, 0..=SIZE - 1);
            let key = random_cell(rng, 0..=3, 0..=SIZE - 1);
            let lock = Cell::new(6, [0, 1, 8, 9][rng.random_range(0..4)]);
            if start.chebyshev(key) >= 2 {
                return Enclosure { start, key, lock };
            }
        }
    }

    fn top_wall() -> impl Iterator<Item = Cell> {
        (7..=9).map(|x| Cell::new(x, 7))
    }

    fn bottom_wall() -> impl Iterator<Item = Cell> {
        (7..=9).map(|x| Cell::new(x, 3))
    }

    fn barrier() -> impl Iterator<Item = Cell> {
        (4..=6).map(|y| Cell::new(7, y))
    }

    fn state(&self, bottom_closed: bool, barrier: bool) -> Result<GridState, GeneratorError> {
        let mut walls: BTreeSet<Cell> = Self::top_wall().collect();
        if bottom_closed {
            walls.extend(Self::bottom_wall());
        }
        let barrier: Vec<Cell> = if barrier { Self::barrier().collect() } else { Vec::new() };
        let spec = Arc::new(GridSpec::new(SIZE, SIZE, walls, barrier, Some(self.key), Some(self.lock))?);
        scene(&spec, &[(goal_a(), ENCLOSURE_GOAL)], self.start)
    }

    /// Fetch key, unlock, enter.
    fn ritual(&self) -> Result<Vec<Action>, GeneratorError> {
        plan(&self.state(true, true)?, &goal_a())
    }
}

fn uses_key(actions: &[Action]) -> bool {
    actions.iter().any(|a| matches!(a, Action::PickUp | Action::UseKey))
}

/// Prefix of `actions` that stays legal from `state`.
fn legal_prefix(state: &GridState, actions: &[Action]) -> Vec<Action> {
    let mut cur = state.clone();
    let mut out = Vec::new();
    for &a in actions {
        match apply_action(&cur, a) {
            Ok(next) => {
                cur = next;
                out.push(a);
            }
            Err(_) => break,
        }
    }
    out
}

/// Index of the first action of the path that loses value toward goal `a` in
/// its own scene.
fn first_suboptimal_step(state: &GridState, actions: &[Action]) -> Result<Option<usize>, GeneratorError> {
    let mut planner = Planner::new();
    let mut cur = state.clone();
    for (i, &a) in actions.iter().enumerate() {
        let q = planner.q_values(&cur, &goal_a())?;
        let best = q.iter().map(|(_, v)| *v).fold(f64::NEG_INFINITY, f64::max);
        if q.iter().any(|&(b, v)| b == a && v < best - 1e-9) {
            return Ok(Some(i));
        }
        cur = apply_action(&cur, a)?;
    }
    Ok(None)
}

fn instrumental(rng: &mut ChaCha8Rng, subtask: Subtask) -> Result<(Vec<TrialRecord>, TrialRecord, Vec<TrialRecord>, TrialRecord), GeneratorError> {
    if subtask.family() != TaskFamily::Instrumental {
        return Err(GeneratorError::UnknownSubtask {
            family: TaskFamily::Instrumental,
            subtask,
        });
    }
    let fam = (0..FAMILIARIZATION_TRIALS)
        .map(|i| {
            let e = Enclosure::sample(rng);
            record(agent(1), e.state(true, true)?, &e.ritual()?, i)
        })
        .collect::<Result<Vec<_>, _>>()?;
    for _ in 0..MAX_ATTEMPTS {
        let e = Enclosure::sample(rng);
        let ritual = e.ritual()?;
        let (test, plausible, implausible) = match subtask {
            Subtask::NoBarrier | Subtask::InconsequentialBarrier => {
                let test = match subtask {
                    Subtask::NoBarrier => e.state(true, false)?,
                    _ => e.state(false, true)?,
                };
                let direct = plan(&test, &goal_a())?;
                if uses_key(&direct) {
                    continue;
                }
                (test, direct, ritual)
            }
            _ => {
                let test = e.state(true, true)?;
                let straight = plan(&e.state(true, false)?, &goal_a())?;
                let stopped = legal_prefix(&test, &straight);
                // Heading for the goal must visibly differ from heading for the
                // key, but only after an opening step both intents share.
                if !matches!(first_suboptimal_step(&test, &stopped)?, Some(i) if i >= 1) {
                    continue;
                }
                (test, ritual, stopped)
            }
        };
        let plausible = record(agent(1), test.clone(), &plausible, FAMILIARIZATION_TRIALS)?;
        let implausible = record(agent(1), test, &implausible, FAMILIARIZATION_TRIALS)?;
        return Ok((fam.clone(), plausible, fam, implausible));
    }
    Err(GeneratorError::Exhausted)
}

fn family_index(family: TaskFamily) -> u64 {
    TaskFamily::ALL.iter().position(|&f| f == family).expect("listed") as u64
}

fn subtask_index(family: TaskFamily, subtask: Option<Subtask>) -> u64 {
    subtask.and_then(|s| family.subtasks().iter().position(|&t| t == s)).map_or(0, |i| i as u64 + 1)
}

/// Pair identifier: `family[-subtask]-seed`.
pub fn pair_id(family: TaskFamily, subtask: Option<Subtask>, seed: u64) -> String {
    match subtask {
        Some(s) => format!("{family}-{s}-{seed}"),
        None => format!("{family}-{seed}"),
    }
}

/// Generates one `(plausible, implausible)` pair; deterministic in its arguments.
/// Families with subtasks default to their first subtask.
pub fn generate_pair(family: TaskFamily, subtask: Option<Subtask>, seed: u64) -> Result<Pair, GeneratorError> {
    if let Some(s) = subtask {
        if s.family() != family {
            return Err(GeneratorError::UnknownSubtask { family, subtask: s });
        }
    }
    let subtask = subtask.or_else(|| family.subtasks().first().copied());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(family_index(family) * 8 + subtask_index(family, subtask));
    let (fam_p, test_p, fam_i, test_i) = match family {
        TaskFamily::Preference => preference(&mut rng)?,
        TaskFamily::MultiAgent => multi_agent(&mut rng)?,
        TaskFamily::InaccessibleGoal => inaccessible_goal(&mut rng)?,
        TaskFamily::Efficiency => efficiency(&mut rng, subtask.expect("efficiency has subtasks"))?,
        TaskFamily::Instrumental => instrumental(&mut rng, subtask.expect("instrumental has subtasks"))?,
    };
    let id = pair_id(family, subtask, seed);
    let episode = |label: Label, familiarization, test| Episode {
        episode_id: format!(
            "{id}-{}",
            match label {
                Label::Plausible => "plausible",
                Label::Implausible => "implausible",
            }
        ),
        task_family: family,
        subtask,
        familiarization,
        test,
        expected_label: Some(label),
        pair_id: Some(id.clone()),
    };
    Ok((
        episode(Label::Plausible, fam_p, test_p),
        episode(Label::Implausible, fam_i, test_i),
    ))
}

/// `n` pairs with seeds `seed..seed + n`. Without an explicit subtask, the
/// family's subtasks are used round-robin.
pub fn generate_pairs(
    family: TaskFamily,
    subtask: Option<Subtask>,
    n: usize,
    seed: u64,
) -> Result<Vec<Pair>, GeneratorError> {
    let subtasks = family.subtasks();
    (0..n)
        .map(|i| {
            let sub = subtask.or_else(|| (!subtasks.is_empty()).then(|| subtasks[i % subtasks.len()]));
            generate_pair(family, sub, seed + i as u64)
        })
        .collect()
}
