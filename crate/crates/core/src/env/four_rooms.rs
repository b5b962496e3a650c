//! Four rooms: an 11x11 grid split by a wall cross with four doorways, and
//! a three-level hierarchy of goal-reaching actions.
//!
//! Level 0 actions `reach1(d)` move to the cell at offset `d` (Chebyshev
//! distance up to 2) from where they are invoked, using primitive moves.
//! Level 1 actions `reach2(d)` move to an even offset up to distance 4
//! using `reach1`. The top level chains `reach2` actions plus a goal slot
//! that targets the global goal directly once it is within reach.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{GridPos, MOVES};
use crate::hier::{rootless, ActionRef, GeneralizedAction, Hierarchy, RootedNetwork, SharedGaPolicy};
use crate::learn::{Head, Mlp, MlpSpec};
use crate::plp::{PlpDomain, PolicySet};
use crate::model::{Outcome, PrimitiveAction, Problem, ProblemClass, StateId, WorldModel};
use crate::policy::{uniform_policy, RandomOrderPolicy};
use crate::search::{Mode, PlannerConfig};

pub const SIZE: i32 = 11;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Barrier {
    Original,
    Alt1,
    Alt2,
}

impl Barrier {
    pub const ALL: [Barrier; 3] = [Barrier::Original, Barrier::Alt1, Barrier::Alt2];

    /// Doorways in the wall cross at `x = 5` and `y = 5`.
    pub fn doors(self) -> [GridPos; 4] {
        let p = GridPos::new;
        match self {
            Barrier::Original => [p(5, 2), p(5, 8), p(2, 5), p(8, 5)],
            Barrier::Alt1 => [p(5, 1), p(5, 6), p(3, 5), p(9, 5)],
            Barrier::Alt2 => [p(5, 4), p(5, 9), p(1, 5), p(7, 5)],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Barrier::Original => "original",
            Barrier::Alt1 => "alt1",
            Barrier::Alt2 => "alt2",
        }
    }
}

impl fmt::Display for Barrier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown barrier layout {0:?} (expected original, alt1 or alt2)")]
pub struct UnknownBarrier(pub String);

impl FromStr for Barrier {
    type Err = UnknownBarrier;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Barrier::ALL.into_iter().find(|b| b.name() == s).ok_or_else(|| UnknownBarrier(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FourRooms {
    pub size: i32,
    pub barrier: Barrier,
    walls: Vec<bool>,
    pub goal: GridPos,
    /// Reward for every move: 0 for the feasible variant, negative for the
    /// shortest-path variant.
    pub step_reward: f64,
}

impl FourRooms {
    pub fn new(barrier: Barrier, goal: GridPos, step_reward: f64) -> Self {
        let size = SIZE;
        let mut walls = vec![false; (size * size) as usize];
        let doors = barrier.doors();
        for i in 0..size {
            for p in [GridPos::new(5, i), GridPos::new(i, 5)] {
                if !doors.contains(&p) {
                    walls[(p.y * size + p.x) as usize] = true;
                }
            }
        }
        Self { size, barrier, walls, goal, step_reward }
    }

    pub fn contains(&self, p: GridPos) -> bool {
        (0..self.size).contains(&p.x) && (0..self.size).contains(&p.y)
    }

    pub fn is_wall(&self, p: GridPos) -> bool {
        self.contains(p) && self.walls[(p.y * self.size + p.x) as usize]
    }

    /// Off the grid or a wall.
    pub fn blocked(&self, p: GridPos) -> bool {
        !self.contains(p) || self.is_wall(p)
    }

    pub fn free_cells(&self) -> Vec<GridPos> {
        (0..self.size)
            .flat_map(|y| (0..self.size).map(move |x| GridPos::new(x, y)))
            .filter(|&p| !self.is_wall(p))
            .collect()
    }

    pub fn with_goal(&self, goal: GridPos) -> Self {
        Self { goal, ..self.clone() }
    }

    /// `(2r+1)^2` window of blocked flags centred on `p`, row by row.
    pub fn window(&self, p: GridPos, r: i32) -> Vec<f64> {
        let mut out = Vec::with_capacity(((2 * r + 1) * (2 * r + 1)) as usize);
        for dy in -r..=r {
            for dx in -r..=r {
                out.push(if self.blocked(p.offset(dx, dy)) { 1.0 } else { 0.0 });
            }
        }
        out
    }

    /// Shortest move count between free cells (breadth-first).
    pub fn distance(&self, a: GridPos, b: GridPos) -> Option<usize> {
        let n = (self.size * self.size) as usize;
        let idx = |p: GridPos| (p.y * self.size + p.x) as usize;
        let mut dist = vec![usize::MAX; n];
        let mut queue = std::collections::VecDeque::from([a]);
        dist[idx(a)] = 0;
        while let Some(p) = queue.pop_front() {
            if p == b {
                return Some(dist[idx(p)]);
            }
            for (dx, dy) in MOVES {
                let q = p.offset(dx, dy);
                if !self.blocked(q) && dist[idx(q)] == usize::MAX {
                    dist[idx(q)] = dist[idx(p)] + 1;
                    queue.push_back(q);
                }
            }
        }
        None
    }
}

impl WorldModel for FourRooms {
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
        if self.blocked(next) {
            return Outcome::Forbidden;
        }
        Outcome::Next { state: next, reward: self.step_reward }
    }

    fn is_goal(&self, s: &GridPos) -> bool {
        *s == self.goal
    }

    fn encode(&self, s: &GridPos) -> StateId {
        s.encode()
    }
}

/// Seeded start/goal pairs on one barrier layout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FourRoomsClass {
    pub barrier: Barrier,
    pub step_reward: f64,
}

impl FourRoomsClass {
    pub fn feasible(barrier: Barrier) -> Self {
        Self { barrier, step_reward: 0.0 }
    }

    /// Every move costs `1/16`.
    pub fn shortest(barrier: Barrier) -> Self {
        Self { barrier, step_reward: -1.0 / 16.0 }
    }
}

impl ProblemClass for FourRoomsClass {
    type World = FourRooms;

    fn name(&self) -> String {
        format!("four-rooms:{}", self.barrier)
    }

    /// Start and goal drawn from the free cells, at least 6 moves apart.
    fn example(&self, index: u64) -> Problem<FourRooms> {
        let base = FourRooms::new(self.barrier, GridPos::new(0, 0), self.step_reward);
        let cells = base.free_cells();
        let mut rng = ChaCha8Rng::seed_from_u64(index ^ 0x4652_4f4f_4d53);
        loop {
            let s = cells[rng.random_range(0..cells.len())];
            let g = cells[rng.random_range(0..cells.len())];
            if base.distance(s, g).is_some_and(|d| d >= 6) {
                return Problem { world: base.with_goal(g), start: s };
            }
        }
    }
}

/// Learned networks per level; `None` falls back to the baseline order.
#[derive(Debug, Clone, Default)]
pub struct FourRoomsPolicies {
    pub reach1: Option<Arc<Mlp>>,
    pub reach2: Option<Arc<Mlp>>,
    pub top: Option<Arc<Mlp>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FourRoomsConfig {
    pub mode: Mode,
    pub reach1_budget: usize,
    pub reach2_budget: usize,
    pub top_budget: usize,
    /// Seeded pseudo-random order for levels without a network; uniform
    /// (breadth-like) order when absent.
    pub random_order: Option<u64>,
    /// Argmax rollouts instead of search at every level.
    pub greedy_only: bool,
}

impl Default for FourRoomsConfig {
    fn default() -> Self {
        Self { mode: Mode::Feasible, reach1_budget: 40, reach2_budget: 80, top_budget: 400, random_order: None, greedy_only: false }
    }
}

pub const REACH1_FEATURES: usize = 6;
pub const REACH2_FEATURES: usize = 27;
pub const TOP_FEATURES: usize = 29;

pub fn reach1_offsets() -> Vec<(i32, i32)> {
    (-2..=2).flat_map(|dy| (-2..=2).map(move |dx| (dx, dy))).filter(|&d| d != (0, 0)).collect()
}

pub fn reach2_offsets() -> Vec<(i32, i32)> {
    (-2..=2).flat_map(|dy| (-2..=2).map(move |dx| (2 * dx, 2 * dy))).filter(|&d| d != (0, 0)).collect()
}

/// Target offset scaled by 1/2, then blocked flags of the 4 neighbours.
pub fn reach1_features(world: &FourRooms, target: GridPos, s: GridPos) -> Vec<f64> {
    let mut f = vec![(target.x - s.x) as f64 / 2.0, (target.y - s.y) as f64 / 2.0];
    f.extend(MOVES.iter().map(|&(dx, dy)| if world.blocked(s.offset(dx, dy)) { 1.0 } else { 0.0 }));
    f
}

/// Target offset scaled by 1/4, then the 5x5 blocked window.
pub fn reach2_features(world: &FourRooms, target: GridPos, s: GridPos) -> Vec<f64> {
    let mut f = vec![(target.x - s.x) as f64 / 4.0, (target.y - s.y) as f64 / 4.0];
    f.extend(world.window(s, 2));
    f
}

/// Goal offset and position scaled by 1/10, then the 5x5 blocked window.
pub fn top_features(world: &FourRooms, s: GridPos) -> Vec<f64> {
    let g = world.goal;
    let mut f = vec![(g.x - s.x) as f64 / 10.0, (g.y - s.y) as f64 / 10.0, s.x as f64 / 10.0, s.y as f64 / 10.0];
    f.extend(world.window(s, 2));
    f
}

fn baseline(n: usize, cfg: &FourRoomsConfig, salt: u64) -> SharedGaPolicy<GridPos> {
    match cfg.random_order {
        Some(seed) => rootless(RandomOrderPolicy::new(n, seed ^ salt, |s: &GridPos| s.encode().0)),
        None => rootless(uniform_policy(n).expect("nonempty action set")),
    }
}

fn params(mode: Mode, budget: usize, depth: usize) -> PlannerConfig {
    let base = match mode {
        Mode::Feasible => PlannerConfig::feasible(),
        Mode::Optimal => PlannerConfig::optimal(),
    };
    base.with_budget(budget).with_depth(depth)
}

/// Three-level hierarchy for one problem (the goal slot depends on the
/// world's goal). The top action is the root.
pub fn four_rooms_hierarchy(world: &FourRooms, policies: &FourRoomsPolicies, cfg: &FourRoomsConfig) -> Hierarchy<GridPos> {
    let w = Arc::new(world.clone());
    let mut gas = Vec::new();
    let prims: Vec<ActionRef> = (0..4).map(|a| ActionRef::Primitive(PrimitiveAction(a))).collect();

    let r1 = reach1_offsets();
    for &(dx, dy) in &r1 {
        let target = move |root: &GridPos| root.offset(dx, dy);
        let policy = match &policies.reach1 {
            Some(net) => {
                let w = w.clone();
                Arc::new(RootedNetwork { net: net.clone(), features: Arc::new(move |r: &GridPos, s: &GridPos| reach1_features(&w, target(r), *s)) })
                    as SharedGaPolicy<GridPos>
            }
            None => baseline(4, cfg, 1),
        };
        let mut ga = GeneralizedAction::new(
            format!("reach1({dx},{dy})"),
            "reach1",
            prims.clone(),
            Arc::new(move |r: &GridPos, s: &GridPos| (*s == target(r)).then_some(0)),
            policy,
            params(cfg.mode, cfg.reach1_budget, 8),
        );
        let wa = w.clone();
        ga.available = Some(Arc::new(move |s: &GridPos| !wa.blocked(target(s))));
        let wf = w.clone();
        ga.features = Some(Arc::new(move |r: &GridPos, s: &GridPos| reach1_features(&wf, target(r), *s)));
        ga.greedy_only = cfg.greedy_only;
        gas.push(ga);
    }

    let r1_slots: Vec<ActionRef> = (0..r1.len()).map(ActionRef::General).collect();
    let reach2 = |gas: &mut Vec<GeneralizedAction<GridPos>>, id: String, target: Arc<dyn Fn(&GridPos) -> GridPos + Send + Sync>, available: Arc<dyn Fn(&GridPos) -> bool + Send + Sync>| {
        let policy = match &policies.reach2 {
            Some(net) => {
                let (w, t) = (w.clone(), target.clone());
                Arc::new(RootedNetwork { net: net.clone(), features: Arc::new(move |r: &GridPos, s: &GridPos| reach2_features(&w, t(r), *s)) })
                    as SharedGaPolicy<GridPos>
            }
            None => baseline(r1.len(), cfg, 2),
        };
        let t = target.clone();
        let mut ga = GeneralizedAction::new(
            id,
            "reach2",
            r1_slots.clone(),
            Arc::new(move |r: &GridPos, s: &GridPos| (*s == t(r)).then_some(0)),
            policy,
            params(cfg.mode, cfg.reach2_budget, 10),
        );
        ga.available = Some(available);
        let (wf, t) = (w.clone(), target);
        ga.features = Some(Arc::new(move |r: &GridPos, s: &GridPos| reach2_features(&wf, t(r), *s)));
        ga.greedy_only = cfg.greedy_only;
        gas.push(ga);
    };
    let r2 = reach2_offsets();
    for &(dx, dy) in &r2 {
        let wa = w.clone();
        reach2(
            &mut gas,
            format!("reach2({dx},{dy})"),
            Arc::new(move |r: &GridPos| r.offset(dx, dy)),
            Arc::new(move |s: &GridPos| !wa.blocked(s.offset(dx, dy))),
        );
    }
    let goal = world.goal;
    reach2(
        &mut gas,
        "reach2(goal)".into(),
        Arc::new(move |_: &GridPos| goal),
        Arc::new(move |s: &GridPos| *s != goal && s.chebyshev(goal) <= 4),
    );

    let top_slots: Vec<ActionRef> = (r1.len()..r1.len() + r2.len() + 1).map(ActionRef::General).collect();
    let policy = match &policies.top {
        Some(net) => {
            let w = w.clone();
            Arc::new(RootedNetwork { net: net.clone(), features: Arc::new(move |_: &GridPos, s: &GridPos| top_features(&w, *s)) })
                as SharedGaPolicy<GridPos>
        }
        None => baseline(top_slots.len(), cfg, 3),
    };
    let mut top = GeneralizedAction::new(
        "four_rooms",
        "top",
        top_slots,
        Arc::new(|_: &GridPos, _: &GridPos| None),
        policy,
        params(cfg.mode, cfg.top_budget, 40),
    );
    let wf = w.clone();
    top.features = Some(Arc::new(move |_: &GridPos, s: &GridPos| top_features(&wf, *s)));
    top.greedy_only = cfg.greedy_only;
    let root = gas.len();
    gas.push(top);
    Hierarchy::new(gas, root)
}

impl FourRoomsPolicies {
    pub fn from_set(set: &PolicySet) -> Self {
        Self { reach1: set.get("reach1").cloned(), reach2: set.get("reach2").cloned(), top: set.get("top").cloned() }
    }
}

/// Four rooms as a plan-learn-plan domain.
#[derive(Debug, Clone, PartialEq)]
pub struct FourRoomsPlp {
    pub class: FourRoomsClass,
    pub config: FourRoomsConfig,
}

impl PlpDomain for FourRoomsPlp {
    type World = FourRooms;

    fn name(&self) -> String {
        self.class.name()
    }

    fn example(&self, index: u64) -> Problem<FourRooms> {
        self.class.example(index)
    }

    fn hierarchy(&self, world: &FourRooms, policies: &PolicySet, greedy: bool) -> Hierarchy<GridPos> {
        let cfg = FourRoomsConfig { greedy_only: greedy || self.config.greedy_only, ..self.config.clone() };
        four_rooms_hierarchy(world, &FourRoomsPolicies::from_set(policies), &cfg)
    }

    fn spec(&self, family: &str, width: usize, seed: u64) -> Option<MlpSpec> {
        let (hidden, outputs) = match family {
            "reach1" => (16, 4),
            "reach2" => (32, reach1_offsets().len()),
            "top" => (32, reach2_offsets().len() + 1),
            _ => return None,
        };
        Some(MlpSpec::new(vec![width, hidden, outputs], Head::Softmax1d, seed))
    }
}
