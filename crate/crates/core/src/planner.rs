//! Optimal plan costs, lazily cached value and Q functions, and Boltzmann policies.
//!
//! Values are computed on demand with A* from each queried state rather than by
//! sweeping the whole state space. Every A* call also fills the cache for the
//! states along the plan it returns (suffixes of an optimal plan are optimal),
//! and an exhausted search marks every state it closed as unreachable.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::sync::Arc;

use thiserror::Error;

use crate::gridworld::{step_cost, Action, AgentState, Cell, GoalId, GridError, GridSpec, GridState};

/// Finite stand-in for `-∞` so that log-space softmax stays well defined.
pub const UNREACHABLE_VALUE: f64 = -1.0e6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("goal `{0}` cannot be reached from the current state")]
    Unreachable(GoalId),
    #[error("no action with a finite Q-value at {0}")]
    Degenerate(Cell),
    #[error("efficiency must be finite and non-negative, got {0}")]
    InvalidBeta(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlanResult {
    pub actions: Vec<Action>,
    pub total_cost: f64,
    pub optimal: bool,
}

/// Euclidean distance to the goal minus the radius of the touching region, clipped at 0.
///
/// Any cell touching the goal is at most `√2` away from it, so this never
/// exceeds the true cost under unit/`√2` step costs; it is also consistent.
pub fn heuristic(cell: Cell, goal: Cell) -> f64 {
    (cell.euclidean(goal) - std::f64::consts::SQRT_2).max(0.0)
}

#[derive(Clone, Copy, Debug)]
struct OpenEntry {
    f: f64,
    h: f64,
    seq: u64,
    index: usize,
}

impl PartialEq for OpenEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for OpenEntry {}

impl PartialOrd for OpenEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OpenEntry {
    // Reversed so that `BinaryHeap` pops the lowest (f, h, seq).
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .f
            .total_cmp(&self.f)
            .then_with(|| other.h.total_cmp(&self.h))
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

enum SearchOutcome {
    Found {
        states: Vec<AgentState>,
        actions: Vec<Action>,
    },
    Exhausted {
        closed: Vec<AgentState>,
    },
}

/// A* over `(cell, holding_key, barrier_removed)` to any state touching `goal`.
fn search(spec: &GridSpec, start: AgentState, goal: Cell) -> SearchOutcome {
    let n = spec.state_space_size();
    let mut best = vec![f64::INFINITY; n];
    let mut parent: Vec<Option<(usize, Action)>> = vec![None; n];
    let mut closed = vec![false; n];
    let mut open = BinaryHeap::new();
    let mut seq = 0u64;

    let start_idx = spec.state_index(start).expect("start state is in bounds");
    best[start_idx] = 0.0;
    let h0 = heuristic(start.cell, goal);
    open.push(OpenEntry {
        f: h0,
        h: h0,
        seq,
        index: start_idx,
    });

    while let Some(entry) = open.pop() {
        let idx = entry.index;
        if closed[idx] {
            continue;
        }
        closed[idx] = true;
        let state = spec.state_at(idx);
        if state.cell.touches(goal) {
            let mut states = vec![state];
            let mut actions = Vec::new();
            let mut cur = idx;
            while let Some((prev, action)) = parent[cur] {
                actions.push(action);
                states.push(spec.state_at(prev));
                cur = prev;
            }
            states.reverse();
            actions.reverse();
            return SearchOutcome::Found { states, actions };
        }
        let g = best[idx];
        spec.for_each_transition(state, |action, next| {
            let nidx = spec.state_index(next).expect("successors are in bounds");
            if closed[nidx] {
                return;
            }
            let tentative = g + step_cost(action);
            if tentative < best[nidx] {
                best[nidx] = tentative;
                parent[nidx] = Some((idx, action));
                let h = heuristic(next.cell, goal);
                seq += 1;
                open.push(OpenEntry {
                    f: tentative + h,
                    h,
                    seq,
                    index: nidx,
                });
            }
        });
    }

    let closed = closed
        .iter()
        .enumerate()
        .filter(|(_, &c)| c)
        .map(|(i, _)| spec.state_at(i))
        .collect();
    SearchOutcome::Exhausted { closed }
}

/// Minimum-cost plan from `state` to any state touching `goal`.
pub fn astar(state: &GridState, goal: &GoalId) -> Result<PlanResult, PlanError> {
    let goal_cell = state.goal_cell(goal)?;
    match search(state.spec(), state.agent_state(), goal_cell) {
        SearchOutcome::Found { actions, .. } => {
            let total_cost = actions.iter().map(|&a| step_cost(a)).sum();
            Ok(PlanResult {
                actions,
                total_cost,
                optimal: true,
            })
        }
        SearchOutcome::Exhausted { .. } => Err(PlanError::Unreachable(goal.clone())),
    }
}

struct SceneCache {
    spec: Arc<GridSpec>,
    values: HashMap<(Cell, AgentState), f64>,
}

/// Value/Q-function cache scoped to one episode. Not shared between threads:
/// each concurrent evaluation owns its planner.
#[derive(Default)]
pub struct Planner {
    scenes: Vec<SceneCache>,
    searches: usize,
}

impl Planner {
    pub fn new() -> Self {
        Planner::default()
    }

    /// Number of A* searches run so far (cache misses).
    pub fn searches(&self) -> usize {
        self.searches
    }

    pub fn clear(&mut self) {
        self.scenes.clear();
    }

    fn scene(&mut self, spec: &Arc<GridSpec>) -> usize {
        if let Some(i) = self
            .scenes
            .iter()
            .position(|s| Arc::ptr_eq(&s.spec, spec) || *s.spec == **spec)
        {
            return i;
        }
        self.scenes.push(SceneCache {
            spec: Arc::clone(spec),
            values: HashMap::new(),
        });
        self.scenes.len() - 1
    }

    /// Value of a dynamic state in a scene for the goal object at `goal`.
    pub fn value_at(&mut self, spec: &Arc<GridSpec>, state: AgentState, goal: Cell) -> f64 {
        if state.cell.touches(goal) {
            return 0.0;
        }
        let scene = self.scene(spec);
        if let Some(&v) = self.scenes[scene].values.get(&(goal, state)) {
            return v;
        }
        self.searches += 1;
        let cache = &mut self.scenes[scene];
        match search(&cache.spec, state, goal) {
            SearchOutcome::Found { states, actions } => {
                // Suffix sums so each cached value is the cost of its own optimal plan.
                let mut remaining = 0.0;
                for (s, a) in states.iter().zip(&actions).rev() {
                    remaining += step_cost(*a);
                    cache.values.insert((goal, *s), -remaining);
                }
                cache.values[&(goal, state)]
            }
            SearchOutcome::Exhausted { closed } => {
                for s in closed {
                    cache.values.insert((goal, s), UNREACHABLE_VALUE);
                }
                UNREACHABLE_VALUE
            }
        }
    }

    /// `V(s)`: minus the optimal plan cost, 0 at the goal, [`UNREACHABLE_VALUE`] if unreachable.
    pub fn value_of(&mut self, state: &GridState, goal: &GoalId) -> Result<f64, PlanError> {
        let goal_cell = state.goal_cell(goal)?;
        Ok(self.value_at(state.spec(), state.agent_state(), goal_cell))
    }

    /// `Q(s,a) = −cost(a) + V(s')` for every legal action, in canonical action order.
    /// Actions whose successor cannot reach the goal get [`UNREACHABLE_VALUE`].
    pub fn q_values(
        &mut self,
        state: &GridState,
        goal: &GoalId,
    ) -> Result<Vec<(Action, f64)>, PlanError> {
        let goal_cell = state.goal_cell(goal)?;
        let spec = Arc::clone(state.spec());
        let mut transitions = Vec::with_capacity(10);
        spec.for_each_transition(state.agent_state(), |a, next| transitions.push((a, next)));
        Ok(transitions
            .into_iter()
            .map(|(a, next)| {
                let v = self.value_at(&spec, next, goal_cell);
                let q = if v <= UNREACHABLE_VALUE {
                    UNREACHABLE_VALUE
                } else {
                    v - step_cost(a)
                };
                (a, q)
            })
            .collect())
    }

    pub fn boltzmann_policy(
        &mut self,
        state: &GridState,
        goal: &GoalId,
        beta: f64,
    ) -> Result<ActionDistribution, PlanError> {
        if !(beta.is_finite() && beta >= 0.0) {
            return Err(PlanError::InvalidBeta(beta));
        }
        let q = self.q_values(state, goal)?;
        ActionDistribution::boltzmann(&q, beta).ok_or(PlanError::Degenerate(state.agent_cell()))
    }
}

/// Distribution over actions, stored as log-probabilities.
#[derive(Clone, Debug, PartialEq)]
pub struct ActionDistribution {
    entries: Vec<(Action, f64)>,
}

impl ActionDistribution {
    /// Softmax of `β·Q` over the actions with finite Q. Returns `None` when no
    /// action has a finite Q or `beta` is invalid.
    pub fn boltzmann(q_values: &[(Action, f64)], beta: f64) -> Option<Self> {
        if !(beta.is_finite() && beta >= 0.0) {
            return None;
        }
        let support: Vec<(Action, f64)> = q_values
            .iter()
            .filter(|(_, q)| *q > UNREACHABLE_VALUE)
            .map(|&(a, q)| (a, beta * q))
            .collect();
        let max = support
            .iter()
            .map(|(_, l)| *l)
            .fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return None;
        }
        let log_norm = max + support.iter().map(|(_, l)| (l - max).exp()).sum::<f64>().ln();
        Some(ActionDistribution {
            entries: support
                .into_iter()
                .map(|(a, l)| (a, l - log_norm))
                .collect(),
        })
    }

    /// `log π(a)`; `-∞` outside the support.
    pub fn log_prob(&self, action: Action) -> f64 {
        self.entries
            .iter()
            .find(|(a, _)| *a == action)
            .map_or(f64::NEG_INFINITY, |(_, l)| *l)
    }

    pub fn prob(&self, action: Action) -> f64 {
        self.log_prob(action).exp()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Action, f64)> + '_ {
        self.entries.iter().map(|&(a, l)| (a, l.exp()))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridworld::{apply_action, legal_actions, Direction};
    use std::collections::BTreeMap;

    fn state(spec: GridSpec, goal: (i32, i32), agent: (i32, i32)) -> GridState {
        let objects: BTreeMap<_, _> = [(GoalId::new("g"), Cell::from(goal))].into_iter().collect();
        GridState::new(Arc::new(spec), Arc::new(objects), agent.into()).unwrap()
    }

    fn g() -> GoalId {
        GoalId::new("g")
    }

    #[test]
    fn straight_line_cost() {
        let s = state(GridSpec::open(6, 6).unwrap(), (0, 3), (0, 0));
        let plan = astar(&s, &g()).unwrap();
        assert_eq!(plan.total_cost, 2.0);
        assert_eq!(plan.actions.len(), 2);
    }

    #[test]
    fn diagonal_cost() {
        let s = state(GridSpec::open(6, 6).unwrap(), (3, 3), (0, 0));
        let plan = astar(&s, &g()).unwrap();
        assert!((plan.total_cost - 2.0 * std::f64::consts::SQRT_2).abs() < 1e-12);
        assert_eq!(plan.actions, vec![Action::Move(Direction::NorthEast); 2]);
    }

    #[test]
    fn plan_replays_to_goal() {
        let walls = (0..5).map(|y| Cell::new(3, y));
        let s = state(GridSpec::new(8, 8, walls, [], None, None).unwrap(), (6, 1), (0, 1));
        let plan = astar(&s, &g()).unwrap();
        let mut cur = s.clone();
        for &a in &plan.actions {
            cur = apply_action(&cur, a).unwrap();
        }
        assert!(crate::gridworld::goal_reached(&cur, &g()).unwrap());
        let summed: f64 = plan.actions.iter().map(|&a| step_cost(a)).sum();
        assert_eq!(summed, plan.total_cost);
    }

    #[test]
    fn walled_off_goal_is_unreachable() {
        let walls = [Cell::new(3, 0), Cell::new(3, 1), Cell::new(3, 2)];
        let s = state(GridSpec::new(6, 3, walls, [], None, None).unwrap(), (5, 1), (0, 1));
        assert_eq!(astar(&s, &g()), Err(PlanError::Unreachable(g())));
        let mut planner = Planner::new();
        assert_eq!(planner.value_of(&s, &g()).unwrap(), UNREACHABLE_VALUE);
    }

    #[test]
    fn values() {
        let mut planner = Planner::new();
        let at = state(GridSpec::open(6, 6).unwrap(), (3, 3), (3, 3));
        assert_eq!(planner.value_of(&at, &g()).unwrap(), 0.0);
        let one = state(GridSpec::open(6, 6).unwrap(), (3, 3), (3, 1));
        assert_eq!(planner.value_of(&one, &g()).unwrap(), -1.0);
    }

    #[test]
    fn corridor_q_values() {
        // 1-wide corridor, goal at x=6, adjacency starts at x=5; agent at x=2 is 3 steps out.
        let s = state(GridSpec::open(8, 1).unwrap(), (6, 0), (3, 0));
        let mut planner = Planner::new();
        let q: BTreeMap<_, _> = planner.q_values(&s, &g()).unwrap().into_iter().collect();
        assert_eq!(q[&Action::Move(Direction::East)], -2.0);
        assert_eq!(q[&Action::Move(Direction::West)], -4.0);
        // terminal successor
        let s = state(GridSpec::open(8, 1).unwrap(), (6, 0), (4, 0));
        let q: BTreeMap<_, _> = planner.q_values(&s, &g()).unwrap().into_iter().collect();
        assert_eq!(q[&Action::Move(Direction::East)], -1.0);
    }

    #[test]
    fn boltzmann_two_actions() {
        let q = [(Action::Move(Direction::East), -1.0), (Action::Move(Direction::West), -2.0)];
        let pi = ActionDistribution::boltzmann(&q, 0.4).unwrap();
        assert!((pi.prob(Action::Move(Direction::East)) - 0.598_687_660).abs() < 1e-6);
        assert!((pi.prob(Action::Move(Direction::West)) - 0.401_312_339).abs() < 1e-6);
    }

    #[test]
    fn boltzmann_beta_zero_is_uniform() {
        let s = state(GridSpec::open(7, 7).unwrap(), (6, 6), (3, 3));
        let mut planner = Planner::new();
        let pi = planner.boltzmann_policy(&s, &g(), 0.0).unwrap();
        assert_eq!(pi.len(), legal_actions(&s).len());
        for (_, p) in pi.iter() {
            assert!((p - 1.0 / 8.0).abs() < 1e-15);
        }
    }

    #[test]
    fn boltzmann_large_beta_concentrates() {
        let s = state(GridSpec::open(7, 7).unwrap(), (6, 6), (1, 1));
        let mut planner = Planner::new();
        let pi = planner.boltzmann_policy(&s, &g(), 1e3).unwrap();
        assert!(pi.prob(Action::Move(Direction::NorthEast)) >= 1.0 - 1e-6);
    }

    #[test]
    fn sentinel_actions_excluded() {
        let q = [
            (Action::Move(Direction::East), UNREACHABLE_VALUE),
            (Action::Move(Direction::West), -3.0),
        ];
        let pi = ActionDistribution::boltzmann(&q, 0.5).unwrap();
        assert_eq!(pi.prob(Action::Move(Direction::East)), 0.0);
        assert_eq!(pi.prob(Action::Move(Direction::West)), 1.0);
        let all = [(Action::Move(Direction::East), UNREACHABLE_VALUE)];
        assert!(ActionDistribution::boltzmann(&all, 0.5).is_none());
    }

    #[test]
    fn degenerate_state_errors() {
        let walls = [Cell::new(3, 0), Cell::new(3, 1), Cell::new(3, 2)];
        let s = state(GridSpec::new(6, 3, walls, [], None, None).unwrap(), (5, 1), (0, 1));
        let mut planner = Planner::new();
        assert!(matches!(
            planner.boltzmann_policy(&s, &g(), 0.5),
            Err(PlanError::Degenerate(_))
        ));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn policy_normalised_and_monotone_in_beta(
                ax in 0i32..8, ay in 0i32..8, gx in 0i32..8, gy in 0i32..8,
                b1 in 0.0f64..3.0, b2 in 0.0f64..3.0,
            ) {
                prop_assume!(Cell::new(ax, ay).chebyshev(Cell::new(gx, gy)) > 1);
                let s = state(GridSpec::open(8, 8).unwrap(), (gx, gy), (ax, ay));
                let mut planner = Planner::new();
                let q = planner.q_values(&s, &g()).unwrap();
                let best = q.iter().cloned().fold((Action::NoOp, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
                let (lo, hi) = if b1 <= b2 { (b1, b2) } else { (b2, b1) };
                let p_lo = ActionDistribution::boltzmann(&q, lo).unwrap();
                let p_hi = ActionDistribution::boltzmann(&q, hi).unwrap();
                let total: f64 = p_lo.iter().map(|(_, p)| p).sum();
                prop_assert!((total - 1.0).abs() < 1e-12);
                prop_assert!(p_hi.prob(best.0) >= p_lo.prob(best.0) - 1e-15);
            }

            #[test]
            fn heuristic_admissible_on_open_grids(
                ax in 0i32..10, ay in 0i32..10, gx in 0i32..10, gy in 0i32..10,
            ) {
                let s = state(GridSpec::open(10, 10).unwrap(), (gx, gy), (ax, ay));
                let plan = astar(&s, &g()).unwrap();
                prop_assert!(heuristic(Cell::new(ax, ay), Cell::new(gx, gy)) <= plan.total_cost + 1e-12);
            }
        }
    }
}
