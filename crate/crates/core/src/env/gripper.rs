//! Gripper grid: a gripper moving over a `W x H` side view, picking up
//! objects from above and dropping them under gravity.
//!
//! A held object hangs in the cell below the gripper and moves with it.
//! `close` grabs the object directly below the gripper; `open` drops the
//! held object until it rests on the floor, an obstacle or another object.

use std::collections::{HashSet, VecDeque};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{GridPos, MOVES};
use crate::hier::{rootless, ActionRef, GeneralizedAction, Hierarchy, RootedNetwork, SharedGaPolicy};
use crate::learn::{Head, Mlp, MlpSpec};
use crate::model::{canonical_encode, Outcome, PrimitiveAction, Problem, QuantizationSpec, StateId, WorldModel};
use crate::plp::{PlpDomain, PolicySet};
use crate::policy::{apply_prefilter, uniform_policy, PreFilter, RandomOrderPolicy, Scene};
use crate::search::PlannerConfig;

pub const LEFT: PrimitiveAction = PrimitiveAction(0);
pub const RIGHT: PrimitiveAction = PrimitiveAction(1);
pub const DOWN: PrimitiveAction = PrimitiveAction(2);
pub const UP: PrimitiveAction = PrimitiveAction(3);
pub const CLOSE: PrimitiveAction = PrimitiveAction(4);
pub const OPEN: PrimitiveAction = PrimitiveAction(5);
pub const ACTION_LABELS: [&str; 6] = ["left", "right", "down", "up", "close", "open"];

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GripperState {
    pub gripper: GridPos,
    pub held: Option<usize>,
    pub objects: Vec<GridPos>,
}

impl GripperState {
    pub fn object_at(&self, p: GridPos) -> Option<usize> {
        self.objects.iter().enumerate().find(|&(i, &o)| o == p && Some(i) != self.held).map(|(i, _)| i)
    }
}

impl Scene for GripperState {
    fn gripper(&self) -> (i64, i64) {
        (self.gripper.x as i64, self.gripper.y as i64)
    }
    fn object(&self, n: usize) -> Option<(i64, i64)> {
        self.objects.get(n).map(|p| (p.x as i64, p.y as i64))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GripperGoal {
    /// Every listed object rests inside the box.
    InBox(Vec<usize>),
    /// Objects stacked bottom to top in one column inside the box.
    Stack(Vec<usize>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Constraints {
    /// Gripper may not enter a cell holding an object it does not carry.
    pub no_touch: bool,
    /// Releasing outside the box is forbidden.
    pub no_drop_outside_box: bool,
}

impl Default for Constraints {
    fn default() -> Self {
        Self { no_touch: true, no_drop_outside_box: true }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GripperWorld {
    pub width: i32,
    pub height: i32,
    /// Inclusive column range of the box.
    pub box_cols: (i32, i32),
    /// Number of objects in every state of this world.
    pub objects: usize,
    obstacles: Vec<bool>,
    pub constraints: Constraints,
    pub goal: GripperGoal,
    pub step_reward: f64,
}

impl GripperWorld {
    pub fn new(width: i32, height: i32, box_cols: (i32, i32), objects: usize, obstacles: &[GridPos], constraints: Constraints, goal: GripperGoal) -> Self {
        let mut grid = vec![false; (width * height) as usize];
        for p in obstacles {
            grid[(p.y * width + p.x) as usize] = true;
        }
        Self { width, height, box_cols, objects, obstacles: grid, constraints, goal, step_reward: 0.0 }
    }

    pub fn contains(&self, p: GridPos) -> bool {
        (0..self.width).contains(&p.x) && (0..self.height).contains(&p.y)
    }

    pub fn is_obstacle(&self, p: GridPos) -> bool {
        self.contains(p) && self.obstacles[(p.y * self.width + p.x) as usize]
    }

    pub fn obstacles(&self) -> Vec<GridPos> {
        (0..self.height)
            .flat_map(|y| (0..self.width).map(move |x| GridPos::new(x, y)))
            .filter(|&p| self.is_obstacle(p))
            .collect()
    }

    pub fn in_box(&self, p: GridPos) -> bool {
        (self.box_cols.0..=self.box_cols.1).contains(&p.x)
    }

    pub fn box_centre(&self) -> f64 {
        (self.box_cols.0 + self.box_cols.1) as f64 / 2.0
    }

    /// Where an object released at `p` comes to rest.
    pub fn drop_from(&self, s: &GripperState, p: GridPos) -> GridPos {
        let mut q = p;
        loop {
            let below = q.offset(0, -1);
            if below.y < 0 || self.is_obstacle(below) || s.object_at(below).is_some() {
                return q;
            }
            q = below;
        }
    }

    pub fn resting(&self, s: &GripperState, n: usize) -> bool {
        s.held != Some(n) && self.drop_from(s, s.objects[n]) == s.objects[n]
    }

    /// Object `n` is free and directly on top of object `m`.
    pub fn on_top_of(&self, s: &GripperState, n: usize, m: usize) -> bool {
        s.held != Some(n) && s.held != Some(m) && s.objects[n] == s.objects[m].offset(0, 1)
    }

    fn graspable(&self, s: &GripperState) -> Option<usize> {
        if s.held.is_some() {
            return None;
        }
        let o = s.object_at(s.gripper.offset(0, -1))?;
        (s.object_at(s.gripper).is_none()).then_some(o)
    }

    fn move_allowed(&self, s: &GripperState, d: (i32, i32)) -> bool {
        let g = s.gripper.offset(d.0, d.1);
        self.contains(g) && (s.held.is_none() || g.y >= 1)
    }

    /// Breadth-first count of reachable states, stopping at `cap`.
    pub fn reachable_count(&self, start: &GripperState, cap: usize) -> usize {
        let mut seen = HashSet::from([start.clone()]);
        let mut queue = VecDeque::from([start.clone()]);
        while let Some(s) = queue.pop_front() {
            for a in self.allowed(&s) {
                if let Outcome::Next { state, .. } = self.transition(a, &s) {
                    if seen.len() >= cap {
                        return cap;
                    }
                    if seen.insert(state.clone()) {
                        queue.push_back(state);
                    }
                }
            }
        }
        seen.len()
    }
}

impl WorldModel for GripperWorld {
    type State = GripperState;

    fn action_count(&self) -> usize {
        6
    }

    fn allowed(&self, s: &GripperState) -> Vec<PrimitiveAction> {
        let mut out: Vec<PrimitiveAction> = (0..4).filter(|&a| self.move_allowed(s, MOVES[a])).map(PrimitiveAction).collect();
        if self.graspable(s).is_some() {
            out.push(CLOSE);
        }
        if s.held.is_some() {
            out.push(OPEN);
        }
        out
    }

    fn transition(&self, action: PrimitiveAction, s: &GripperState) -> Outcome<GripperState> {
        let step = |next: GripperState| Outcome::Next { state: next, reward: self.step_reward };
        match action.0 {
            a @ 0..=3 => {
                let d = MOVES[a];
                if !self.move_allowed(s, d) {
                    return Outcome::Forbidden;
                }
                let g = s.gripper.offset(d.0, d.1);
                if self.is_obstacle(g) || (self.constraints.no_touch && s.object_at(g).is_some()) {
                    return Outcome::Forbidden;
                }
                let mut next = s.clone();
                next.gripper = g;
                if let Some(h) = s.held {
                    let hp = g.offset(0, -1);
                    if self.is_obstacle(hp) || s.object_at(hp).is_some() {
                        return Outcome::Forbidden;
                    }
                    next.objects[h] = hp;
                }
                step(next)
            }
            4 => match self.graspable(s) {
                Some(o) => {
                    let mut next = s.clone();
                    next.held = Some(o);
                    step(next)
                }
                None => Outcome::Forbidden,
            },
            5 => match s.held {
                Some(h) => {
                    let mut next = s.clone();
                    next.held = None;
                    let rest = self.drop_from(&next, s.objects[h]);
                    if self.constraints.no_drop_outside_box && !self.in_box(rest) {
                        return Outcome::Forbidden;
                    }
                    next.objects[h] = rest;
                    step(next)
                }
                None => Outcome::Forbidden,
            },
            _ => Outcome::Forbidden,
        }
    }

    fn is_goal(&self, s: &GripperState) -> bool {
        match &self.goal {
            GripperGoal::InBox(objs) => objs.iter().all(|&n| self.resting(s, n) && self.in_box(s.objects[n])),
            GripperGoal::Stack(order) => {
                let Some(&base) = order.first() else { return true };
                self.resting(s, base)
                    && self.in_box(s.objects[base])
                    && order.windows(2).all(|w| self.on_top_of(s, w[1], w[0]))
            }
        }
    }

    fn encode(&self, s: &GripperState) -> StateId {
        let mut coords = vec![s.gripper.x as f64, s.gripper.y as f64, s.held.map_or(-1.0, |h| h as f64)];
        for o in &s.objects {
            coords.push(o.x as f64);
            coords.push(o.y as f64);
        }
        canonical_encode(&coords, &QuantizationSpec::grid(coords.len())).expect("matching dimensions")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScenarioError {
    #[error("scenario not found: {0}")]
    NotFound(String),
    #[error("scenario needs at least {min} objects, got {got}")]
    TooFewObjects { min: usize, got: usize },
    #[error("{0}")]
    Invalid(String),
}

pub const WIDTH: i32 = 20;
pub const HEIGHT: i32 = 10;
pub const BOX: (i32, i32) = (16, 19);

/// Built-in gripper scenarios.
pub const SCENARIOS: [&str; 4] = ["pick-place", "covered-pick-place", "place-obstacle", "stack"];

/// A gripper problem: world, start state and the target object.
#[derive(Debug, Clone, PartialEq)]
pub struct GripperProblem {
    pub world: GripperWorld,
    pub start: GripperState,
    pub scenario: String,
}

/// Distinct floor columns left of the box, drawn without replacement.
fn floor_columns(rng: &mut ChaCha8Rng, n: usize, lo: i32, hi: i32) -> Vec<i32> {
    let mut cols: Vec<i32> = (lo..hi).collect();
    cols.shuffle(rng);
    cols.truncate(n);
    cols
}

/// Seeded instance of a built-in scenario.
///
/// * `pick-place`: objects on the floor, put object 0 in the box.
/// * `covered-pick-place`: object 0 lies under objects 1 and 2; both covers
///   have to go into the box first.
/// * `place-obstacle`: the gripper starts holding object 0 and a wall
///   stands between it and the box.
/// * `stack`: stack all objects in index order inside the box.
pub fn make_gripper_world(scenario: &str, n_objects: usize, obstacles: bool, seed: u64) -> Result<GripperProblem, ScenarioError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x4752_4950);
    let gripper = GridPos::new(rng.random_range(0..4), HEIGHT - 2);
    let mut obstacle_cells = Vec::new();
    if obstacles {
        let x = rng.random_range(10..14);
        let h = rng.random_range(3..6);
        obstacle_cells.extend((0..h).map(|y| GridPos::new(x, y)));
    }
    let free_cols = |rng: &mut ChaCha8Rng, n: usize| {
        let blocked: HashSet<i32> = obstacle_cells.iter().map(|p| p.x).collect();
        floor_columns(rng, n + blocked.len(), 0, BOX.0).into_iter().filter(|c| !blocked.contains(c)).take(n).collect::<Vec<_>>()
    };
    let constraints = Constraints::default();
    let (objects, goal, held) = match scenario {
        "pick-place" => {
            if n_objects < 1 {
                return Err(ScenarioError::TooFewObjects { min: 1, got: n_objects });
            }
            let cols = free_cols(&mut rng, n_objects);
            (cols.iter().map(|&x| GridPos::new(x, 0)).collect::<Vec<_>>(), GripperGoal::InBox(vec![0]), None)
        }
        "covered-pick-place" => {
            if n_objects < 3 {
                return Err(ScenarioError::TooFewObjects { min: 3, got: n_objects });
            }
            let target = rng.random_range(0..6);
            let mut cols = free_cols(&mut rng, n_objects - 1);
            cols.retain(|&c| c != target);
            let mut objs = vec![GridPos::new(target, 0), GridPos::new(target, 1), GridPos::new(target, 2)];
            objs.extend(cols[..n_objects - 3].iter().map(|&x| GridPos::new(x, 0)));
            (objs, GripperGoal::InBox(vec![0]), None)
        }
        "place-obstacle" => {
            if n_objects < 1 {
                return Err(ScenarioError::TooFewObjects { min: 1, got: n_objects });
            }
            let cols = free_cols(&mut rng, n_objects);
            let mut objs: Vec<GridPos> = cols.iter().map(|&x| GridPos::new(x, 0)).collect();
            objs[0] = gripper.offset(0, -1);
            (objs, GripperGoal::InBox(vec![0]), Some(0))
        }
        "stack" => {
            if n_objects < 2 {
                return Err(ScenarioError::TooFewObjects { min: 2, got: n_objects });
            }
            let cols = free_cols(&mut rng, n_objects);
            (cols.iter().map(|&x| GridPos::new(x, 0)).collect(), GripperGoal::Stack((0..n_objects).collect()), None)
        }
        other => return Err(ScenarioError::NotFound(other.to_string())),
    };
    let world = GripperWorld::new(WIDTH, HEIGHT, BOX, objects.len(), &obstacle_cells, constraints, goal);
    let start = GripperState { gripper, held, objects };
    Ok(GripperProblem { world, start, scenario: scenario.to_string() })
}

/// Learned networks per family.
#[derive(Debug, Clone, Default)]
pub struct GripperPolicies {
    pub grab: Option<Arc<Mlp>>,
    pub place: Option<Arc<Mlp>>,
    pub place_on: Option<Arc<Mlp>>,
}

impl GripperPolicies {
    pub fn from_set(set: &PolicySet) -> Self {
        Self { grab: set.get("grab").cloned(), place: set.get("place").cloned(), place_on: set.get("place_on").cloned() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GripperConfig {
    pub grab: PlannerConfig,
    pub place: PlannerConfig,
    pub top: PlannerConfig,
    pub random_order: Option<u64>,
    /// Sub-planners run argmax rollouts and return their crash states.
    pub greedy_subplanners: bool,
    /// Also offer the primitive actions at the top level.
    pub top_primitives: bool,
    /// Argmax rollouts at every level.
    pub greedy_only: bool,
}

impl Default for GripperConfig {
    fn default() -> Self {
        let sub = PlannerConfig::feasible().with_budget(1_500).with_depth(80);
        Self { grab: sub.clone(), place: sub, top: PlannerConfig::feasible().with_budget(200).with_depth(12), random_order: None, greedy_subplanners: false, top_primitives: false, greedy_only: false }
    }
}

const MOVE_SLOTS: [PrimitiveAction; 4] = [LEFT, RIGHT, DOWN, UP];

/// Blocked flags (off-grid, obstacle, object) in the 5x5 window around the
/// gripper.
pub fn gripper_window(world: &GripperWorld, s: &GripperState) -> Vec<f64> {
    let mut out = Vec::with_capacity(25);
    for dy in -2..=2 {
        for dx in -2..=2 {
            let p = s.gripper.offset(dx, dy);
            let blocked = !world.contains(p) || world.is_obstacle(p) || s.object_at(p).is_some();
            out.push(if blocked { 1.0 } else { 0.0 });
        }
    }
    out
}

/// Relative pre-filter to object `n` (scaled by 1/10), then the window.
pub fn grab_features(world: &GripperWorld, n: usize, s: &GripperState) -> Vec<f64> {
    let rel = apply_prefilter(PreFilter::Relative, n, s).unwrap_or_else(|_| vec![0.0, 0.0]);
    let mut f: Vec<f64> = rel.into_iter().map(|v| v / 10.0).collect();
    f.extend(gripper_window(world, s));
    f
}

/// Offset to the box centre at floor level (scaled by 1/10), then the
/// window.
pub fn place_features(world: &GripperWorld, s: &GripperState) -> Vec<f64> {
    let mut f = vec![(world.box_centre() - s.gripper.x as f64) / 10.0, -s.gripper.y as f64 / 10.0];
    f.extend(gripper_window(world, s));
    f
}

pub const GRAB_FEATURES: usize = 27;
pub const PLACE_FEATURES: usize = 27;

fn baseline(n: usize, cfg: &GripperConfig, salt: u64, world: &GripperWorld) -> SharedGaPolicy<GripperState> {
    let w = world.clone();
    match cfg.random_order {
        Some(seed) => rootless(RandomOrderPolicy::new(n, seed ^ salt, move |s: &GripperState| w.encode(s).0)),
        None => rootless(uniform_policy(n).expect("nonempty action set")),
    }
}

/// Two-level hierarchy: `grab(n)` for every object, `place()` into the box
/// and `place_on(m)` onto object `m`, under a top-level planner whose goal
/// is the world's goal.
pub fn gripper_hierarchy(world: &GripperWorld, policies: &GripperPolicies, cfg: &GripperConfig) -> Hierarchy<GripperState> {
    let n_objects = world.objects;
    let w = Arc::new(world.clone());
    let mut gas = Vec::new();
    let grab_slots: Vec<ActionRef> = MOVE_SLOTS.iter().chain([&CLOSE]).map(|&a| ActionRef::Primitive(a)).collect();
    let place_slots: Vec<ActionRef> = MOVE_SLOTS.iter().chain([&OPEN]).map(|&a| ActionRef::Primitive(a)).collect();

    for n in 0..n_objects {
        let policy = match &policies.grab {
            Some(net) => {
                let w = w.clone();
                Arc::new(RootedNetwork { net: net.clone(), features: Arc::new(move |_: &GripperState, s: &GripperState| grab_features(&w, n, s)) })
                    as SharedGaPolicy<GripperState>
            }
            None => baseline(5, cfg, 11 + n as u64, world),
        };
        let mut ga = GeneralizedAction::new(
            format!("grab({n})"),
            "grab",
            grab_slots.clone(),
            Arc::new(move |_: &GripperState, s: &GripperState| (s.held == Some(n)).then_some(0)),
            policy,
            cfg.grab.clone(),
        );
        ga.available = Some(Arc::new(|s: &GripperState| s.held.is_none()));
        let wf = w.clone();
        ga.features = Some(Arc::new(move |_: &GripperState, s: &GripperState| grab_features(&wf, n, s)));
        ga.greedy_only = cfg.greedy_subplanners || cfg.greedy_only;
        ga.return_boundary_states = cfg.greedy_subplanners;
        gas.push(ga);
    }

    let policy = match &policies.place {
        Some(net) => {
            let w = w.clone();
            Arc::new(RootedNetwork { net: net.clone(), features: Arc::new(move |_: &GripperState, s: &GripperState| place_features(&w, s)) })
                as SharedGaPolicy<GripperState>
        }
        None => baseline(5, cfg, 7, world),
    };
    let wp = w.clone();
    let mut place = GeneralizedAction::new(
        "place()",
        "place",
        place_slots.clone(),
        Arc::new(move |root: &GripperState, s: &GripperState| {
            let h = root.held?;
            (s.held.is_none() && wp.resting(s, h) && wp.in_box(s.objects[h])).then_some(0)
        }),
        policy,
        cfg.place.clone(),
    );
    place.available = Some(Arc::new(|s: &GripperState| s.held.is_some()));
    let wf = w.clone();
    place.features = Some(Arc::new(move |_: &GripperState, s: &GripperState| place_features(&wf, s)));
    place.greedy_only = cfg.greedy_subplanners || cfg.greedy_only;
    place.return_boundary_states = cfg.greedy_subplanners;
    let place_id = gas.len();
    gas.push(place);

    for m in 0..n_objects {
        let policy = match &policies.place_on {
            Some(net) => {
                let w = w.clone();
                Arc::new(RootedNetwork { net: net.clone(), features: Arc::new(move |_: &GripperState, s: &GripperState| grab_features(&w, m, s)) })
                    as SharedGaPolicy<GripperState>
            }
            None => baseline(5, cfg, 31 + m as u64, world),
        };
        let wp = w.clone();
        let mut ga = GeneralizedAction::new(
            format!("place_on({m})"),
            "place_on",
            place_slots.clone(),
            Arc::new(move |root: &GripperState, s: &GripperState| {
                let h = root.held?;
                (s.held.is_none() && wp.on_top_of(s, h, m)).then_some(0)
            }),
            policy,
            cfg.place.clone(),
        );
        ga.available = Some(Arc::new(move |s: &GripperState| s.held.is_some_and(|h| h != m)));
        let wf = w.clone();
        ga.features = Some(Arc::new(move |_: &GripperState, s: &GripperState| grab_features(&wf, m, s)));
        ga.greedy_only = cfg.greedy_subplanners || cfg.greedy_only;
        gas.push(ga);
    }

    let mut top_slots: Vec<ActionRef> = (0..n_objects).map(ActionRef::General).collect();
    top_slots.push(ActionRef::General(place_id));
    if matches!(world.goal, GripperGoal::Stack(_)) {
        top_slots.extend((0..n_objects).map(|m| ActionRef::General(place_id + 1 + m)));
    }
    if cfg.top_primitives {
        top_slots.extend((0..6).map(|a| ActionRef::Primitive(PrimitiveAction(a))));
    }
    let n_top = top_slots.len();
    let mut top = GeneralizedAction::new(
        "gripper",
        "top",
        top_slots,
        Arc::new(|_: &GripperState, _: &GripperState| None),
        baseline(n_top, cfg, 3, world),
        cfg.top.clone(),
    );
    top.greedy_only = cfg.greedy_only;
    let root = gas.len();
    gas.push(top);
    Hierarchy::new(gas, root)
}

/// Gripper scenarios as a plan-learn-plan domain. Example `i` has
/// `objects.0 + i % (objects.1 - objects.0 + 1)` objects.
#[derive(Debug, Clone, PartialEq)]
pub struct GripperPlp {
    pub scenario: String,
    pub objects: (usize, usize),
    pub obstacles: bool,
    pub config: GripperConfig,
}

impl PlpDomain for GripperPlp {
    type World = GripperWorld;

    fn name(&self) -> String {
        format!("gripper/{}", self.scenario)
    }

    fn example(&self, index: u64) -> Problem<GripperWorld> {
        let (lo, hi) = self.objects;
        let n = lo + (index % (hi.saturating_sub(lo) as u64 + 1)) as usize;
        let p = make_gripper_world(&self.scenario, n, self.obstacles, index).expect("valid gripper scenario");
        Problem { world: p.world, start: p.start }
    }

    fn hierarchy(&self, world: &GripperWorld, policies: &PolicySet, greedy: bool) -> Hierarchy<GripperState> {
        let cfg = GripperConfig { greedy_only: greedy || self.config.greedy_only, ..self.config.clone() };
        gripper_hierarchy(world, &GripperPolicies::from_set(policies), &cfg)
    }

    fn spec(&self, family: &str, width: usize, seed: u64) -> Option<MlpSpec> {
        matches!(family, "grab" | "place" | "place_on").then(|| MlpSpec::new(vec![width, 32, 5], Head::Softmax1d, seed))
    }
}
