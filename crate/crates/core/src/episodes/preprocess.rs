//! Turning raw (continuous or fine-grained) agent paths into grid trajectories.

use serde::{Deserialize, Serialize};

use super::EpisodeError;
use crate::gridworld::{Action, Cell, Direction, GridSpec};

/// One raw observation frame. Cell `(x, y)` has its centre at `(x, y)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawSample {
    pub time: f64,
    pub x: f64,
    pub y: f64,
    /// Barrier opacity in `[0, 1]`; `None` when the scene has no barrier.
    #[serde(default)]
    pub barrier_opacity: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RawTrajectory {
    pub samples: Vec<RawSample>,
}

impl RawTrajectory {
    pub fn validate(&self) -> Result<(), EpisodeError> {
        for (i, w) in self.samples.windows(2).enumerate() {
            if !(w[1].time >= w[0].time) {
                return Err(EpisodeError::NonMonotoneTime(i + 1));
            }
        }
        Ok(())
    }
}

/// Removes frames captured while the barrier is fading out (`0 < opacity < 1`).
pub fn drop_dissolve_frames(raw: &RawTrajectory) -> RawTrajectory {
    RawTrajectory {
        samples: raw
            .samples
            .iter()
            .filter(|s| !matches!(s.barrier_opacity, Some(o) if o > 0.0 && o < 1.0))
            .copied()
            .collect(),
    }
}

fn signum_step(from: Cell, to: Cell) -> Cell {
    Cell::new(
        from.x + (to.x - from.x).signum(),
        from.y + (to.y - from.y).signum(),
    )
}

/// Nearest-cell quantization with duplicates collapsed; gaps larger than one
/// cell are filled by stepping diagonally, then straight, toward the next cell.
pub fn discretize(raw: &RawTrajectory, grid: &GridSpec) -> Result<Vec<Cell>, EpisodeError> {
    raw.validate()?;
    let mut cells: Vec<Cell> = Vec::new();
    for (index, s) in raw.samples.iter().enumerate() {
        let cell = Cell::new(s.x.round() as i32, s.y.round() as i32);
        if !s.x.is_finite() || !s.y.is_finite() || !grid.contains(cell) {
            return Err(EpisodeError::OutOfBounds {
                index,
                x: s.x,
                y: s.y,
            });
        }
        match cells.last().copied() {
            None => cells.push(cell),
            Some(mut last) => {
                while last != cell {
                    last = signum_step(last, cell);
                    cells.push(last);
                }
            }
        }
    }
    Ok(cells)
}

/// Total move cost of a cell path (1 per orthogonal step, √2 per diagonal).
pub fn path_cost(cells: &[Cell]) -> f64 {
    cells.windows(2).map(|w| w[0].euclidean(w[1])).sum()
}

/// Move actions that walk the given 8-connected path.
pub fn moves_from_cells(cells: &[Cell]) -> Result<Vec<Action>, EpisodeError> {
    cells
        .windows(2)
        .map(|w| {
            w[0].direction_to(w[1])
                .map(Action::Move)
                .ok_or(EpisodeError::NotAdjacent {
                    from: w[0],
                    to: w[1],
                })
        })
        .collect()
}

/// Replaces perpendicular orthogonal step pairs (e.g. E then N) by the single
/// diagonal step, when that diagonal is legal with the barrier in place.
/// Greedy left to right, repeated until nothing changes.
pub fn smooth_zigzag(cells: &[Cell], grid: &GridSpec) -> Vec<Cell> {
    let mut out = cells.to_vec();
    loop {
        let mut changed = false;
        let mut i = 0;
        while i + 2 < out.len() {
            let merged = match (out[i].direction_to(out[i + 1]), out[i + 1].direction_to(out[i + 2])) {
                (Some(a), Some(b)) if !a.is_diagonal() && !b.is_diagonal() => {
                    let (ax, ay) = a.delta();
                    let (bx, by) = b.delta();
                    Direction::from_delta(ax + bx, ay + by).filter(|d| d.is_diagonal())
                }
                _ => None,
            };
            match merged {
                Some(diag) if grid.can_move(out[i], diag, false) => {
                    out.remove(i + 1);
                    changed = true;
                    i += 1;
                }
                _ => i += 1,
            }
        }
        if !changed {
            return out;
        }
    }
}
