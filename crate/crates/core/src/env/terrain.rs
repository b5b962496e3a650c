//! Terrain follow: move a block across a side-view heightfield from the
//! left-most to the right-most column. Every step costs more the higher it
//! ends, so the best path hugs the ground.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{GridPos, MOVES};
use crate::model::{Outcome, PrimitiveAction, StateId, WorldModel};

pub const WIDTH: i32 = 16;
pub const HEIGHT: i32 = 10;
pub const GOAL_REWARD: f64 = 1.0;

/// Column `x` is solid below `ground[x]`. Entering a free cell at height
/// `y` earns `-(base + slope * y) / scale`; entering the goal earns
/// `GOAL_REWARD` instead.
#[derive(Debug, Clone, PartialEq)]
pub struct Terrain {
    pub ground: Vec<i32>,
    pub height: i32,
    pub base: f64,
    pub slope: f64,
    pub scale: f64,
    pub start: GridPos,
    pub goal: GridPos,
}

impl Terrain {
    pub fn new(ground: Vec<i32>, height: i32) -> Self {
        let w = ground.len() as i32;
        assert!(w >= 2 && ground.iter().all(|&g| (0..height).contains(&g)), "ground must fit the grid");
        let start = GridPos::new(0, ground[0]);
        let goal = GridPos::new(w - 1, ground[w as usize - 1]);
        Self { ground, height, base: 2.0, slope: 1.0, scale: 128.0, start, goal }
    }

    pub fn width(&self) -> i32 {
        self.ground.len() as i32
    }

    pub fn is_free(&self, p: GridPos) -> bool {
        (0..self.width()).contains(&p.x) && p.y < self.height && p.y >= self.ground[p.x as usize]
    }

    pub fn step_reward(&self, p: GridPos) -> f64 {
        -(self.base + self.slope * p.y as f64) / self.scale
    }

    /// Same geometry with every step reward zero.
    pub fn feasible(&self) -> Self {
        Self { base: 0.0, slope: 0.0, ..self.clone() }
    }

    /// Cumulative reward of a cell sequence under this terrain's rewards.
    pub fn score(&self, cells: &[GridPos]) -> f64 {
        cells.iter().map(|&p| if p == self.goal { GOAL_REWARD } else { self.step_reward(p) }).sum()
    }

    pub fn ruggedness(&self) -> i32 {
        self.ground.windows(2).map(|w| (w[1] - w[0]).abs()).sum()
    }
}

/// Seeded heightfield: a random walk with steps in `-2..=2`, clamped to
/// `0..=6`.
pub fn make_terrain(seed: u64) -> Terrain {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5445_5252);
    let mut ground = Vec::with_capacity(WIDTH as usize);
    let mut g: i32 = rng.random_range(0..3);
    for _ in 0..WIDTH {
        ground.push(g);
        g = (g + rng.random_range(-2..=2)).clamp(0, 6);
    }
    Terrain::new(ground, HEIGHT)
}

impl WorldModel for Terrain {
    type State = GridPos;

    fn action_count(&self) -> usize {
        4
    }

    fn allowed(&self, s: &GridPos) -> Vec<PrimitiveAction> {
        (0..4)
            .filter(|&a| {
                let p = s.offset(MOVES[a].0, MOVES[a].1);
                (0..self.width()).contains(&p.x) && (0..self.height).contains(&p.y)
            })
            .map(PrimitiveAction)
            .collect()
    }

    fn transition(&self, action: PrimitiveAction, s: &GridPos) -> Outcome<GridPos> {
        let Some(&(dx, dy)) = MOVES.get(action.0) else { return Outcome::Forbidden };
        let next = s.offset(dx, dy);
        if !self.is_free(next) {
            return Outcome::Forbidden;
        }
        let reward = if next == self.goal { GOAL_REWARD } else { self.step_reward(next) };
        Outcome::Next { state: next, reward }
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
    use crate::flat::{exhaustive_oracle, tp_plan};
    use crate::policy::uniform_policy;
    use crate::search::{PlannerConfig, RewardRegime};

    fn optimal_cells(t: &Terrain) -> (Vec<GridPos>, f64) {
        let r = tp_plan(t, &t.start, &uniform_policy(4).unwrap(), &PlannerConfig::optimal()).unwrap();
        let plan = r.best_plan().unwrap();
        (plan.steps.iter().map(|s| s.state).collect(), plan.cumulative_reward)
    }

    #[test]
    fn seeded_and_solid_ground_is_forbidden() {
        assert_eq!(make_terrain(3), make_terrain(3));
        let t = Terrain::new(vec![0, 3, 0], 5);
        assert_eq!(t.transition(PrimitiveAction(1), &GridPos::new(0, 0)), Outcome::Forbidden);
        assert!(matches!(t.transition(PrimitiveAction(3), &GridPos::new(0, 0)), Outcome::Next { .. }));
    }

    #[test]
    fn optimum_matches_dp_oracle() {
        for seed in 0..5 {
            let t = make_terrain(seed);
            let oracle = exhaustive_oracle(&t, &t.start, RewardRegime::AllNegative, usize::MAX, 1_000_000).unwrap();
            let (_, r) = optimal_cells(&t);
            assert_eq!(oracle[&t.goal.encode()].1, r, "seed {seed}");
        }
    }

    #[test]
    fn flat_terrain_gives_the_shortest_path() {
        let t = Terrain::new(vec![2; 8], 6);
        let (cells, r) = optimal_cells(&t);
        assert_eq!(cells.len(), 7);
        assert!(cells.iter().all(|p| p.y == 2));
        assert_eq!(r, t.score(&cells));
    }

    #[test]
    fn ramp_path_hugs_the_ground() {
        let ground: Vec<i32> = (0..10).map(|x| (x / 2).min(4)).collect();
        let t = Terrain::new(ground.clone(), 8);
        let (cells, _) = optimal_cells(&t);
        // Climbing happens at the foot of each step, never higher.
        let hug = |p: &GridPos| p.y <= ground[p.x as usize].max(ground[(p.x as usize + 1).min(9)]);
        assert!(cells.iter().all(hug), "{cells:?}");
        assert_eq!(cells.len(), 9 + 4);
    }
}
