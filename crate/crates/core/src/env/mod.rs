//! Deterministic desk-scale worlds.

pub mod checkerboard;
pub mod four_rooms;
pub mod gripper;
pub mod graph;
pub mod pendulum;
pub mod terrain;

use serde::{Deserialize, Serialize};

use crate::model::{canonical_encode, QuantizationSpec, StateId};

/// Integer grid cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GridPos {
    pub x: i32,
    pub y: i32,
}

impl GridPos {
    pub const fn new(x: i32, y: i32) -> Self {
        Self { x, y }
    }

    pub fn offset(self, dx: i32, dy: i32) -> Self {
        Self::new(self.x + dx, self.y + dy)
    }

    pub fn chebyshev(self, other: GridPos) -> i32 {
        (self.x - other.x).abs().max((self.y - other.y).abs())
    }

    pub fn manhattan(self, other: GridPos) -> i32 {
        (self.x - other.x).abs() + (self.y - other.y).abs()
    }

    pub fn encode(self) -> StateId {
        canonical_encode(&[self.x as f64, self.y as f64], &QuantizationSpec::grid(2)).expect("two coordinates")
    }

    /// Inverse of [`GridPos::encode`].
    pub fn decode(id: &StateId) -> Option<GridPos> {
        let b = id.as_bytes();
        if b.len() < 8 {
            return None;
        }
        let x = i32::from_le_bytes(b[0..4].try_into().ok()?);
        let y = i32::from_le_bytes(b[4..8].try_into().ok()?);
        Some(GridPos::new(x, y))
    }
}

/// The four grid moves, indexed as primitive actions 0..4.
pub const MOVES: [(i32, i32); 4] = [(-1, 0), (1, 0), (0, -1), (0, 1)];
pub const MOVE_LABELS: [&str; 4] = ["left", "right", "down", "up"];
