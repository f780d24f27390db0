//! Deterministic discretized gridworld.
//!
//! Coordinates are `(x, y)` with `x` growing rightward, `y` growing upward and
//! the origin at the bottom-left cell. The agent moves in the 8-neighbourhood,
//! may pick up the (single) key when it is within one cell, and may use a held
//! key on the lock when within one cell, which removes every barrier cell at
//! once.
//!
//! Static scene data ([`GridSpec`] and the goal objects) is shared through
//! `Arc`s; the dynamic part of a state is the small `Copy` value
//! [`AgentState`], which is what planners hash and index.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("cell {cell} lies outside the {width}x{height} grid ({what})")]
    OutOfBounds {
        cell: Cell,
        width: i32,
        height: i32,
        what: &'static str,
    },
    #[error("grid dimensions must be positive, got {width}x{height}")]
    EmptyGrid { width: i32, height: i32 },
    #[error("cell {cell} is used by both {first} and {second}")]
    Overlap {
        cell: Cell,
        first: &'static str,
        second: &'static str,
    },
    #[error("agent cell {0} is blocked")]
    AgentBlocked(Cell),
    #[error("object {goal} placed on blocked cell {cell}")]
    ObjectBlocked { goal: GoalId, cell: Cell },
    #[error("unknown goal `{0}`")]
    UnknownGoal(GoalId),
    #[error("action {action} is not legal with the agent at {cell}")]
    IllegalAction { action: Action, cell: Cell },
}

/// A grid cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "(i32, i32)", into = "(i32, i32)")]
pub struct Cell {
    pub x: i32,
    pub y: i32,
}

impl Cell {
    pub const fn new(x: i32, y: i32) -> Self {
        Cell { x, y }
    }

    pub fn step(self, dir: Direction) -> Cell {
        let (dx, dy) = dir.delta();
        Cell::new(self.x + dx, self.y + dy)
    }

    pub fn chebyshev(self, other: Cell) -> i32 {
        (self.x - other.x).abs().max((self.y - other.y).abs())
    }

    /// Same cell or one of the 8 neighbours.
    pub fn touches(self, other: Cell) -> bool {
        self.chebyshev(other) <= 1
    }

    pub fn euclidean(self, other: Cell) -> f64 {
        let dx = f64::from(self.x - other.x);
        let dy = f64::from(self.y - other.y);
        dx.hypot(dy)
    }

    /// Direction of a single 8-neighbourhood step from `self` to `to`.
    pub fn direction_to(self, to: Cell) -> Option<Direction> {
        Direction::from_delta(to.x - self.x, to.y - self.y)
    }
}

impl From<(i32, i32)> for Cell {
    fn from((x, y): (i32, i32)) -> Self {
        Cell::new(x, y)
    }
}

impl From<Cell> for (i32, i32) {
    fn from(c: Cell) -> Self {
        (c.x, c.y)
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.x, self.y)
    }
}

/// Identifier of a goal object.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GoalId(pub String);

impl GoalId {
    pub fn new(id: impl Into<String>) -> Self {
        GoalId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for GoalId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for GoalId {
    fn from(s: &str) -> Self {
        GoalId(s.to_owned())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Direction {
    North,
    NorthEast,
    East,
    SouthEast,
    South,
    SouthWest,
    West,
    NorthWest,
}

impl Direction {
    pub const ALL: [Direction; 8] = [
        Direction::North,
        Direction::NorthEast,
        Direction::East,
        Direction::SouthEast,
        Direction::South,
        Direction::SouthWest,
        Direction::West,
        Direction::NorthWest,
    ];

    pub const fn delta(self) -> (i32, i32) {
        match self {
            Direction::North => (0, 1),
            Direction::NorthEast => (1, 1),
            Direction::East => (1, 0),
            Direction::SouthEast => (1, -1),
            Direction::South => (0, -1),
            Direction::SouthWest => (-1, -1),
            Direction::West => (-1, 0),
            Direction::NorthWest => (-1, 1),
        }
    }

    pub fn from_delta(dx: i32, dy: i32) -> Option<Direction> {
        Direction::ALL.into_iter().find(|d| d.delta() == (dx, dy))
    }

    pub const fn is_diagonal(self) -> bool {
        let (dx, dy) = self.delta();
        dx != 0 && dy != 0
    }

    pub fn opposite(self) -> Direction {
        let (dx, dy) = self.delta();
        Direction::from_delta(-dx, -dy).expect("8-neighbourhood is closed under negation")
    }

    pub const fn label(self) -> &'static str {
        match self {
            Direction::North => "N",
            Direction::NorthEast => "NE",
            Direction::East => "E",
            Direction::SouthEast => "SE",
            Direction::South => "S",
            Direction::SouthWest => "SW",
            Direction::West => "W",
            Direction::NorthWest => "NW",
        }
    }
}

/// Agent action. Serialized as `"N"`, `"NE"`, ..., `"pick-up"`, `"use-key"`, `"no-op"`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Action {
    Move(Direction),
    PickUp,
    UseKey,
    /// Representable in documents but never legal: agents in this model always act.
    NoOp,
}

impl Action {
    pub const fn is_diagonal_move(self) -> bool {
        matches!(self, Action::Move(d) if d.is_diagonal())
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::Move(d) => f.write_str(d.label()),
            Action::PickUp => f.write_str("pick-up"),
            Action::UseKey => f.write_str("use-key"),
            Action::NoOp => f.write_str("no-op"),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("unrecognised action `{0}`")]
pub struct ParseActionError(pub String);

impl FromStr for Action {
    type Err = ParseActionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pick-up" => Ok(Action::PickUp),
            "use-key" => Ok(Action::UseKey),
            "no-op" => Ok(Action::NoOp),
            _ => Direction::ALL
                .into_iter()
                .find(|d| d.label() == s)
                .map(Action::Move)
                .ok_or_else(|| ParseActionError(s.to_owned())),
        }
    }
}

impl TryFrom<String> for Action {
    type Error = ParseActionError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Action> for String {
    fn from(a: Action) -> Self {
        a.to_string()
    }
}

/// Cost of an action in grid units: `√2` for diagonal moves, `1` otherwise.
pub fn step_cost(action: Action) -> f64 {
    if action.is_diagonal_move() {
        std::f64::consts::SQRT_2
    } else {
        1.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Tile {
    Free,
    Wall,
    Barrier,
    Lock,
}

/// Static scene geometry.
#[derive(Clone, Debug)]
pub struct GridSpec {
    width: i32,
    height: i32,
    walls: BTreeSet<Cell>,
    barrier: BTreeSet<Cell>,
    key: Option<Cell>,
    lock: Option<Cell>,
    tiles: Vec<Tile>,
}

impl PartialEq for GridSpec {
    fn eq(&self, other: &Self) -> bool {
        self.width == other.width
            && self.height == other.height
            && self.walls == other.walls
            && self.barrier == other.barrier
            && self.key == other.key
            && self.lock == other.lock
    }
}

impl Eq for GridSpec {}

impl GridSpec {
    pub fn new(
        width: i32,
        height: i32,
        walls: impl IntoIterator<Item = Cell>,
        barrier: impl IntoIterator<Item = Cell>,
        key: Option<Cell>,
        lock: Option<Cell>,
    ) -> Result<Self, GridError> {
        if width <= 0 || height <= 0 {
            return Err(GridError::EmptyGrid { width, height });
        }
        let walls: BTreeSet<Cell> = walls.into_iter().collect();
        let barrier: BTreeSet<Cell> = barrier.into_iter().collect();
        let mut tiles = vec![Tile::Free; (width * height) as usize];
        let mut owner: BTreeMap<Cell, &'static str> = BTreeMap::new();
        let in_bounds = |cell: Cell, what: &'static str| {
            if cell.x < 0 || cell.y < 0 || cell.x >= width || cell.y >= height {
                Err(GridError::OutOfBounds {
                    cell,
                    width,
                    height,
                    what,
                })
            } else {
                Ok(())
            }
        };
        let mut claim = |cell: Cell, what: &'static str| -> Result<(), GridError> {
            in_bounds(cell, what)?;
            if let Some(first) = owner.insert(cell, what) {
                return Err(GridError::Overlap {
                    cell,
                    first,
                    second: what,
                });
            }
            Ok(())
        };
        for &c in &walls {
            claim(c, "wall")?;
        }
        for &c in &barrier {
            claim(c, "barrier")?;
        }
        if let Some(c) = key {
            claim(c, "key")?;
        }
        if let Some(c) = lock {
            claim(c, "lock")?;
        }
        for (&cell, &what) in &owner {
            let tile = match what {
                "wall" => Tile::Wall,
                "barrier" => Tile::Barrier,
                "lock" => Tile::Lock,
                _ => Tile::Free,
            };
            tiles[(cell.y * width + cell.x) as usize] = tile;
        }
        Ok(GridSpec {
            width,
            height,
            walls,
            barrier,
            key,
            lock,
            tiles,
        })
    }

    /// An empty `width × height` grid.
    pub fn open(width: i32, height: i32) -> Result<Self, GridError> {
        GridSpec::new(width, height, [], [], None, None)
    }

    pub fn width(&self) -> i32 {
        self.width
    }

    pub fn height(&self) -> i32 {
        self.height
    }

    pub fn walls(&self) -> &BTreeSet<Cell> {
        &self.walls
    }

    pub fn barrier(&self) -> &BTreeSet<Cell> {
        &self.barrier
    }

    pub fn key(&self) -> Option<Cell> {
        self.key
    }

    pub fn lock(&self) -> Option<Cell> {
        self.lock
    }

    pub fn cell_count(&self) -> usize {
        (self.width * self.height) as usize
    }

    pub fn contains(&self, cell: Cell) -> bool {
        cell.x >= 0 && cell.y >= 0 && cell.x < self.width && cell.y < self.height
    }

    pub fn index_of(&self, cell: Cell) -> Option<usize> {
        self.contains(cell)
            .then(|| (cell.y * self.width + cell.x) as usize)
    }

    pub fn cell_at(&self, index: usize) -> Cell {
        let i = index as i32;
        Cell::new(i % self.width, i / self.width)
    }

    /// Whether the agent can occupy `cell`. The key cell is walkable; the lock is not.
    pub fn is_passable(&self, cell: Cell, barrier_removed: bool) -> bool {
        match self.index_of(cell).map(|i| self.tiles[i]) {
            None | Some(Tile::Wall) | Some(Tile::Lock) => false,
            Some(Tile::Barrier) => barrier_removed,
            Some(Tile::Free) => true,
        }
    }

    /// Move legality including the corner-cutting rule: a diagonal is refused
    /// only when both orthogonal cells flanking it are blocked.
    pub fn can_move(&self, from: Cell, dir: Direction, barrier_removed: bool) -> bool {
        let to = from.step(dir);
        if !self.is_passable(to, barrier_removed) {
            return false;
        }
        if dir.is_diagonal() {
            let (dx, dy) = dir.delta();
            let side_a = Cell::new(from.x + dx, from.y);
            let side_b = Cell::new(from.x, from.y + dy);
            if !self.is_passable(side_a, barrier_removed) && !self.is_passable(side_b, barrier_removed)
            {
                return false;
            }
        }
        true
    }

    /// Successor of `state` under `action`, or `None` when the action is illegal.
    pub fn successor(&self, state: AgentState, action: Action) -> Option<AgentState> {
        match action {
            Action::Move(dir) => self
                .can_move(state.cell, dir, state.barrier_removed)
                .then(|| AgentState {
                    cell: state.cell.step(dir),
                    ..state
                }),
            Action::PickUp => match self.key {
                Some(k) if !state.holding_key && state.cell.touches(k) => Some(AgentState {
                    holding_key: true,
                    ..state
                }),
                _ => None,
            },
            Action::UseKey => match self.lock {
                Some(l) if state.holding_key && !state.barrier_removed && state.cell.touches(l) => {
                    Some(AgentState {
                        barrier_removed: true,
                        ..state
                    })
                }
                _ => None,
            },
            Action::NoOp => None,
        }
    }

    /// Calls `f` for every legal action in canonical order (moves N..NW, pick-up, use-key).
    pub fn for_each_transition(&self, state: AgentState, mut f: impl FnMut(Action, AgentState)) {
        for dir in Direction::ALL {
            let action = Action::Move(dir);
            if let Some(next) = self.successor(state, action) {
                f(action, next);
            }
        }
        for action in [Action::PickUp, Action::UseKey] {
            if let Some(next) = self.successor(state, action) {
                f(action, next);
            }
        }
    }

    /// Dense index over `(cell, holding_key, barrier_removed)`.
    pub fn state_index(&self, state: AgentState) -> Option<usize> {
        self.index_of(state.cell).map(|i| {
            i * 4 + usize::from(state.holding_key) * 2 + usize::from(state.barrier_removed)
        })
    }

    pub fn state_at(&self, index: usize) -> AgentState {
        AgentState {
            cell: self.cell_at(index / 4),
            holding_key: index & 2 != 0,
            barrier_removed: index & 1 != 0,
        }
    }

    pub fn state_space_size(&self) -> usize {
        self.cell_count() * 4
    }

    /// Whether any state touching `target` is reachable from `start`.
    pub fn can_reach(&self, start: AgentState, target: Cell) -> bool {
        let Some(start_idx) = self.state_index(start) else {
            return false;
        };
        let mut seen = vec![false; self.state_space_size()];
        let mut queue = VecDeque::from([start]);
        seen[start_idx] = true;
        while let Some(s) = queue.pop_front() {
            if s.cell.touches(target) {
                return true;
            }
            self.for_each_transition(s, |_, next| {
                let idx = self.state_index(next).expect("successors are in bounds");
                if !seen[idx] {
                    seen[idx] = true;
                    queue.push_back(next);
                }
            });
        }
        false
    }
}

/// Dynamic part of a state.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AgentState {
    pub cell: Cell,
    pub holding_key: bool,
    pub barrier_removed: bool,
}

impl AgentState {
    pub const fn at(cell: Cell) -> Self {
        AgentState {
            cell,
            holding_key: false,
            barrier_removed: false,
        }
    }
}

/// Full symbolic scene snapshot.
#[derive(Clone, Debug)]
pub struct GridState {
    spec: Arc<GridSpec>,
    objects: Arc<BTreeMap<GoalId, Cell>>,
    agent: AgentState,
}

impl PartialEq for GridState {
    fn eq(&self, other: &Self) -> bool {
        self.agent == other.agent
            && (Arc::ptr_eq(&self.spec, &other.spec) || self.spec == other.spec)
            && (Arc::ptr_eq(&self.objects, &other.objects) || self.objects == other.objects)
    }
}

impl Eq for GridState {}

impl GridState {
    /// Initial state: agent at `agent`, key not held, barrier in place.
    pub fn new(
        spec: Arc<GridSpec>,
        objects: Arc<BTreeMap<GoalId, Cell>>,
        agent: Cell,
    ) -> Result<Self, GridError> {
        GridState::with_agent_state(spec, objects, AgentState::at(agent))
    }

    pub fn with_agent_state(
        spec: Arc<GridSpec>,
        objects: Arc<BTreeMap<GoalId, Cell>>,
        agent: AgentState,
    ) -> Result<Self, GridError> {
        if !spec.contains(agent.cell) {
            return Err(GridError::OutOfBounds {
                cell: agent.cell,
                width: spec.width,
                height: spec.height,
                what: "agent",
            });
        }
        if !spec.is_passable(agent.cell, agent.barrier_removed) {
            return Err(GridError::AgentBlocked(agent.cell));
        }
        for (goal, &cell) in objects.iter() {
            if !spec.contains(cell) {
                return Err(GridError::OutOfBounds {
                    cell,
                    width: spec.width,
                    height: spec.height,
                    what: "object",
                });
            }
            if spec.walls.contains(&cell) || spec.lock == Some(cell) {
                return Err(GridError::ObjectBlocked {
                    goal: goal.clone(),
                    cell,
                });
            }
        }
        Ok(GridState {
            spec,
            objects,
            agent,
        })
    }

    pub fn spec(&self) -> &Arc<GridSpec> {
        &self.spec
    }

    pub fn objects(&self) -> &Arc<BTreeMap<GoalId, Cell>> {
        &self.objects
    }

    pub fn agent_state(&self) -> AgentState {
        self.agent
    }

    pub fn agent_cell(&self) -> Cell {
        self.agent.cell
    }

    pub fn holding_key(&self) -> bool {
        self.agent.holding_key
    }

    pub fn barrier_removed(&self) -> bool {
        self.agent.barrier_removed
    }

    pub fn goal_cell(&self, goal: &GoalId) -> Result<Cell, GridError> {
        self.objects
            .get(goal)
            .copied()
            .ok_or_else(|| GridError::UnknownGoal(goal.clone()))
    }

    /// Same scene with a different dynamic state.
    pub fn with_agent(&self, agent: AgentState) -> GridState {
        GridState {
            spec: Arc::clone(&self.spec),
            objects: Arc::clone(&self.objects),
            agent,
        }
    }
}

pub fn legal_actions(state: &GridState) -> Vec<Action> {
    let mut out = Vec::with_capacity(10);
    state
        .spec
        .for_each_transition(state.agent, |action, _| out.push(action));
    out
}

pub fn apply_action(state: &GridState, action: Action) -> Result<GridState, GridError> {
    state
        .spec
        .successor(state.agent, action)
        .map(|next| state.with_agent(next))
        .ok_or(GridError::IllegalAction {
            action,
            cell: state.agent.cell,
        })
}

/// The agent is on, or 8-adjacent to, the goal object.
pub fn goal_reached(state: &GridState, goal: &GoalId) -> Result<bool, GridError> {
    Ok(state.agent.cell.touches(state.goal_cell(goal)?))
}

/// Whether some finite-cost plan (possibly through key and lock) reaches the goal.
pub fn accessible(state: &GridState, goal: &GoalId) -> Result<bool, GridError> {
    let target = state.goal_cell(goal)?;
    Ok(state.spec.can_reach(state.agent, target))
}
