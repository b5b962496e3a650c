//! Checkerboard grids with per-cell entry rewards.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{GridPos, MOVES};
use crate::model::{Outcome, PrimitiveAction, StateId, WorldModel};
use crate::search::RewardRegime;

/// `width x height` grid, 4-connected. Entering cell `c` earns
/// `rewards[c]`; moves off the board are not allowed.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkerboard {
    pub width: i32,
    pub height: i32,
    pub rewards: Vec<f64>,
    pub start: GridPos,
    pub goal: GridPos,
    pub regime: RewardRegime,
}

impl Checkerboard {
    pub fn new(width: i32, height: i32, rewards: Vec<f64>, start: GridPos, goal: GridPos, regime: RewardRegime) -> Self {
        assert_eq!(rewards.len(), (width * height) as usize, "one reward per cell");
        Self { width, height, rewards, start, goal, regime }
    }

    pub fn contains(&self, p: GridPos) -> bool {
        (0..self.width).contains(&p.x) && (0..self.height).contains(&p.y)
    }

    pub fn reward_at(&self, p: GridPos) -> f64 {
        self.rewards[(p.y * self.width + p.x) as usize]
    }

    pub fn cells(&self) -> impl Iterator<Item = GridPos> + '_ {
        (0..self.height).flat_map(move |y| (0..self.width).map(move |x| GridPos::new(x, y)))
    }
}

/// Seeded square board.
///
/// `AllNegative` boards draw each cell reward from `-(1 + k) / 256` with
/// `k` uniform in `0..256`; the values are dyadic so path sums are exact.
/// Start is `(0, 0)` and the goal the opposite corner.
///
/// `Mixed` boards pay `+1` per step, so the best plan is the longest
/// loop-free one. The goal sits at `(0, size - 1)`, a corner of the other
/// colour, so a path through every cell exists for even sizes.
pub fn make_checkerboard(seed: u64, size: i32, regime: RewardRegime) -> Checkerboard {
    assert!(size >= 2, "board needs at least 2x2 cells");
    let n = (size * size) as usize;
    match regime {
        RewardRegime::AllNegative => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let rewards = (0..n).map(|_| -(1.0 + rng.random_range(0..256) as f64) / 256.0).collect();
            Checkerboard::new(size, size, rewards, GridPos::new(0, 0), GridPos::new(size - 1, size - 1), regime)
        }
        RewardRegime::Mixed => {
            Checkerboard::new(size, size, vec![1.0; n], GridPos::new(0, 0), GridPos::new(0, size - 1), regime)
        }
    }
}

impl WorldModel for Checkerboard {
    type State = GridPos;

    fn action_count(&self) -> usize {
        4
    }

    fn allowed(&self, s: &GridPos) -> Vec<PrimitiveAction> {
        (0..4).filter(|&a| self.contains(s.offset(MOVES[a].0, MOVES[a].1))).map(PrimitiveAction).collect()
    }

    fn transition(&self, action: PrimitiveAction, s: &GridPos) -> Outcome<GridPos> {
        let (dx, dy) = MOVES[action.0];
        let next = s.offset(dx, dy);
        if !self.contains(next) {
            return Outcome::Forbidden;
        }
        Outcome::Next { state: next, reward: self.reward_at(next) }
    }

    fn is_goal(&self, s: &GridPos) -> bool {
        *s == self.goal
    }

    fn encode(&self, s: &GridPos) -> StateId {
        s.encode()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_rewards() {
        let a = make_checkerboard(9, 8, RewardRegime::AllNegative);
        let b = make_checkerboard(9, 8, RewardRegime::AllNegative);
        assert_eq!(a, b);
        assert_ne!(a, make_checkerboard(10, 8, RewardRegime::AllNegative));
        assert!(a.rewards.iter().all(|&r| r < 0.0 && r >= -1.0));
        assert_eq!(a.cells().count(), 64);
    }

    #[test]
    fn corner_allows_two_moves() {
        let b = make_checkerboard(0, 4, RewardRegime::AllNegative);
        assert_eq!(b.allowed(&GridPos::new(0, 0)), vec![PrimitiveAction(1), PrimitiveAction(3)]);
        assert_eq!(b.transition(PrimitiveAction(0), &GridPos::new(0, 0)), Outcome::Forbidden);
    }
}
