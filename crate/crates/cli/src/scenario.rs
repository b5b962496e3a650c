//! Scenario names accepted on the command line and the planner runs behind
//! them.

use std::f64::consts::TAU;

use rtp_core::env::checkerboard::make_checkerboard;
use rtp_core::env::four_rooms::{four_rooms_hierarchy, Barrier, FourRoomsClass, FourRoomsConfig, FourRoomsPolicies, SIZE};
use rtp_core::env::gripper::{self, gripper_hierarchy, make_gripper_world, GripperConfig, GripperPolicies, ScenarioError};
use rtp_core::env::pendulum::{make_pendulum, pendulum_hierarchy, Pendulum, PendulumConfig, PendulumPlanner, SubGoalMode};
use rtp_core::env::terrain::make_terrain;
use rtp_core::env::GridPos;
use rtp_core::plp::PolicySet;
use rtp_core::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::{ModeArg, TraceLevel};
use crate::error::CliError;
use crate::render::{Cell, Drawing, GridDrawing, PhaseDrawing};

/// What the user asked for, as recorded in artifact headers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRef {
    pub name: String,
    pub objects: Option<usize>,
    pub obstacles: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Scenario {
    Checkerboard { size: i32, regime: RewardRegime },
    FourRooms { barrier: Barrier },
    Terrain,
    Gripper { scenario: String, objects: usize, obstacles: bool },
    Pendulum { mode: SubGoalMode },
}

pub fn parse_scenario(r: &ScenarioRef) -> Result<Scenario, CliError> {
    let not_found = || CliError::ScenarioNotFound(r.name.clone());
    let name = r.name.as_str();
    if let Some(rest) = name.strip_prefix("checkerboard-") {
        let (dims, sign) = rest.split_once('-').ok_or_else(not_found)?;
        let (w, h) = dims.split_once('x').ok_or_else(not_found)?;
        let (w, h): (i32, i32) = (w.parse().map_err(|_| not_found())?, h.parse().map_err(|_| not_found())?);
        if w != h || !(2..=16).contains(&w) {
            return Err(CliError::Usage(format!("checkerboards are square with 2..=16 cells a side, got {dims}")));
        }
        let regime = match sign {
            "neg" => RewardRegime::AllNegative,
            "pos" => RewardRegime::Mixed,
            _ => return Err(not_found()),
        };
        return Ok(Scenario::Checkerboard { size: w, regime });
    }
    if name == "four-rooms" {
        return Ok(Scenario::FourRooms { barrier: Barrier::Original });
    }
    if let Some(b) = name.strip_prefix("four-rooms:") {
        return Ok(Scenario::FourRooms { barrier: b.parse().map_err(|_| not_found())? });
    }
    if name == "terrain" {
        return Ok(Scenario::Terrain);
    }
    if let Some(s) = name.strip_prefix("gripper:") {
        if !gripper::SCENARIOS.contains(&s) {
            return Err(not_found());
        }
        let objects = r.objects.unwrap_or(if s == "covered-pick-place" { 6 } else { 3 });
        return Ok(Scenario::Gripper { scenario: s.to_string(), objects, obstacles: r.obstacles });
    }
    match name {
        "pendulum" | "pendulum:multiple" => Ok(Scenario::Pendulum { mode: SubGoalMode::Multiple }),
        "pendulum:single" => Ok(Scenario::Pendulum { mode: SubGoalMode::Single }),
        _ => Err(not_found()),
    }
}

pub struct PlanOptions {
    pub seed: u64,
    pub mode: Option<ModeArg>,
    pub levels: Option<usize>,
    pub budget: Option<usize>,
    pub policies: PolicySet,
    pub trace: TraceLevel,
}

/// Result of one `plan` invocation.
#[derive(Debug, Clone, Default, Serialize)]
pub struct PlanRun {
    pub solved: bool,
    pub error: Option<String>,
    pub stats: SearchStats,
    /// Counters per hierarchy level; one entry for flat runs.
    pub level_stats: Vec<SearchStats>,
    /// Levels in the returned plan (1 for flat runs).
    pub plan_levels: usize,
    pub plan_length: usize,
    pub reward: Option<f64>,
    pub actions: Vec<usize>,
    /// Coordinates of the start and every visited state.
    pub path: Vec<Vec<f64>>,
    #[serde(skip)]
    pub trace: Vec<Value>,
}

fn run_flat<W, P>(world: &W, start: &W::State, policy: &P, mut cfg: PlannerConfig, trace: TraceLevel, coords: impl Fn(&W::State) -> Vec<f64>) -> PlanRun
where
    W: WorldModel,
    P: StochasticPolicy<W::State>,
{
    cfg.trace = trace == TraceLevel::Full;
    let (result, error) = match tp_plan(world, start, policy, &cfg) {
        Ok(r) => (r, None),
        Err(e) => {
            let msg = e.to_string();
            (e.partial().clone(), Some(msg))
        }
    };
    let mut run = PlanRun { stats: result.stats.clone(), level_stats: vec![result.stats.clone()], plan_levels: 1, error, ..PlanRun::default() };
    run.trace = result.trace.iter().map(|t| json!({ "kind": "expansion", "record": t })).collect();
    if let Some(plan) = result.best_plan() {
        if replay(plan, world, start).is_valid() {
            fill_plan(&mut run, plan, start, &coords);
        } else {
            run.error = Some("plan does not replay".into());
        }
    } else if run.error.is_none() {
        run.error = Some("no goal reached".into());
    }
    run
}

fn run_hier<W: WorldModel>(world: &W, mut h: Hierarchy<W::State>, start: &W::State, trace: TraceLevel, coords: impl Fn(&W::State) -> Vec<f64>) -> PlanRun {
    h.trace = trace == TraceLevel::Full;
    match rtp_solve(world, &h, start) {
        Ok(sol) => {
            let mut run = PlanRun { stats: sol.stats.clone(), level_stats: sol.levels.clone(), plan_levels: sol.plan.depth(), ..PlanRun::default() };
            run.trace = sol.result.trace.iter().map(|t| json!({ "kind": "call", "record": t })).collect();
            if replay(&sol.flat, world, start).is_valid() {
                fill_plan(&mut run, &sol.flat, start, &coords);
                run.reward = Some(sol.reward);
            } else {
                run.error = Some("plan does not replay".into());
            }
            run
        }
        Err(e) => {
            let mut run = PlanRun { error: Some(e.to_string()), ..PlanRun::default() };
            if let Some(p) = e.partial() {
                run.stats = p.stats.clone();
                run.level_stats = p.levels.clone();
                run.trace = p.trace.iter().map(|t| json!({ "kind": "call", "record": t })).collect();
            }
            run
        }
    }
}

fn fill_plan<S: Clone>(run: &mut PlanRun, plan: &Plan<S>, start: &S, coords: &impl Fn(&S) -> Vec<f64>) {
    run.solved = true;
    run.plan_length = plan.len();
    run.reward = Some(plan.cumulative_reward);
    run.actions = plan.steps.iter().map(|s| s.action.0).collect();
    run.path = std::iter::once(coords(start)).chain(plan.steps.iter().map(|s| coords(&s.state))).collect();
}

fn grid(p: &GridPos) -> Vec<f64> {
    vec![p.x as f64, p.y as f64]
}

fn four_rooms_class(barrier: Barrier, mode: Option<ModeArg>) -> FourRoomsClass {
    match mode {
        Some(ModeArg::Optimal) => FourRoomsClass::shortest(barrier),
        _ => FourRoomsClass::feasible(barrier),
    }
}

fn gripper_problem(scenario: &str, objects: usize, obstacles: bool, seed: u64) -> Result<gripper::GripperProblem, CliError> {
    make_gripper_world(scenario, objects, obstacles, seed).map_err(|e| match e {
        ScenarioError::NotFound(s) => CliError::ScenarioNotFound(s),
        other => CliError::Usage(other.to_string()),
    })
}

fn pendulum() -> Pendulum {
    make_pendulum(PendulumConfig::default()).expect("default pendulum is valid")
}

fn levels(opts: &PlanOptions, allowed: &[usize], default: usize) -> Result<usize, CliError> {
    let l = opts.levels.unwrap_or(default);
    if allowed.contains(&l) {
        Ok(l)
    } else {
        Err(CliError::Usage(format!("this scenario supports levels {allowed:?}, got {l}")))
    }
}

fn set_root_budget<S>(h: &mut Hierarchy<S>, budget: Option<usize>) {
    if let Some(b) = budget {
        let root = h.root;
        h.gas[root].params.max_tree_size = b;
    }
}

pub fn run_plan(scenario: &Scenario, opts: &PlanOptions) -> Result<PlanRun, CliError> {
    let seed = opts.seed;
    Ok(match scenario {
        Scenario::Checkerboard { size, regime } => {
            levels(opts, &[1], 1)?;
            let world = make_checkerboard(seed, *size, *regime);
            let mut cfg = match opts.mode {
                Some(ModeArg::Feasible) => PlannerConfig::feasible(),
                _ => PlannerConfig::optimal(),
            }
            .with_regime(*regime);
            if *regime == RewardRegime::Mixed {
                cfg = cfg.with_depth((size * size) as usize);
            }
            if let Some(b) = opts.budget {
                cfg = cfg.with_budget(b);
            }
            run_flat(&world, &world.start, &uniform_policy(4).expect("four moves"), cfg, opts.trace, grid)
        }
        Scenario::FourRooms { barrier } => {
            let problem = four_rooms_class(*barrier, opts.mode).example(seed);
            match levels(opts, &[1, 3], 3)? {
                1 => {
                    let cfg = match opts.mode {
                        Some(ModeArg::Optimal) => PlannerConfig::optimal(),
                        _ => PlannerConfig::feasible(),
                    }
                    .with_budget(opts.budget.unwrap_or(100_000));
                    run_flat(&problem.world, &problem.start, &uniform_policy(4).expect("four moves"), cfg, opts.trace, grid)
                }
                _ => {
                    let mode = match opts.mode {
                        Some(ModeArg::Optimal) => Mode::Optimal,
                        _ => Mode::Feasible,
                    };
                    let cfg = FourRoomsConfig { mode, random_order: Some(seed), ..FourRoomsConfig::default() };
                    let mut h = four_rooms_hierarchy(&problem.world, &FourRoomsPolicies::from_set(&opts.policies), &cfg);
                    set_root_budget(&mut h, opts.budget);
                    run_hier(&problem.world, h, &problem.start, opts.trace, grid)
                }
            }
        }
        Scenario::Terrain => {
            levels(opts, &[1], 1)?;
            let terrain = make_terrain(seed);
            let (world, cfg) = match opts.mode {
                Some(ModeArg::Feasible) => (terrain.feasible(), PlannerConfig::feasible()),
                _ => (terrain, PlannerConfig::optimal()),
            };
            let cfg = opts.budget.map_or(cfg.clone(), |b| cfg.with_budget(b));
            run_flat(&world, &world.start, &uniform_policy(4).expect("four moves"), cfg, opts.trace, grid)
        }
        Scenario::Gripper { scenario, objects, obstacles } => {
            let p = gripper_problem(scenario, *objects, *obstacles, seed)?;
            let coords = |s: &gripper::GripperState| grid(&s.gripper);
            match levels(opts, &[1, 2], 2)? {
                1 => {
                    let cfg = PlannerConfig::feasible().with_budget(opts.budget.unwrap_or(50_000));
                    run_flat(&p.world, &p.start, &uniform_policy(6).expect("six actions"), cfg, opts.trace, coords)
                }
                _ => {
                    let cfg = GripperConfig { random_order: Some(seed), ..GripperConfig::default() };
                    let mut h = gripper_hierarchy(&p.world, &GripperPolicies::from_set(&opts.policies), &cfg);
                    set_root_budget(&mut h, opts.budget);
                    run_hier(&p.world, h, &p.start, opts.trace, coords)
                }
            }
        }
        Scenario::Pendulum { mode } => {
            levels(opts, &[2], 2)?;
            let world = pendulum();
            let mut h = pendulum_hierarchy(&world, &PendulumPlanner { mode: *mode, ..PendulumPlanner::default() });
            set_root_budget(&mut h, opts.budget);
            run_hier(&world, h, &world.start(seed), opts.trace, |s| vec![s.theta, s.omega])
        }
    })
}

/// Per-state comparison of a full optimal search against the exhaustive
/// oracle. Returns `(matched, checked_states)`.
pub fn oracle_check(scenario: &Scenario, seed: u64) -> Result<(bool, usize), CliError> {
    fn compare<W: WorldModel>(world: &W, start: &W::State, regime: RewardRegime, depth: usize) -> Result<(bool, usize), CliError> {
        let oracle = exhaustive_oracle(world, start, regime, depth, 100_000_000).map_err(|e| CliError::Planner(e.to_string()))?;
        let cfg = PlannerConfig::optimal().with_regime(regime).with_depth(depth);
        let result = tp_plan(world, start, &uniform_policy(world.action_count()).expect("nonempty action set"), &cfg)
            .map_err(|e| CliError::Planner(e.to_string()))?;
        let matched = match regime {
            RewardRegime::AllNegative => {
                result.state_rewards.len() == oracle.len()
                    && result.state_rewards.iter().all(|(s, r)| oracle.get(&world.encode(s)).is_some_and(|o| o.1 == *r))
            }
            // Without the all-negative guarantee only the goal value is
            // comparable.
            RewardRegime::Mixed => {
                let best = result.best_plan().map(|p| p.cumulative_reward);
                let goal = oracle.iter().filter(|(_, (s, _))| world.is_goal(s)).map(|(_, (_, r))| *r).fold(None, |a: Option<f64>, r| Some(a.map_or(r, |a| a.max(r))));
                best == goal
            }
        };
        Ok((matched, oracle.len()))
    }
    match scenario {
        Scenario::Checkerboard { size, regime } => {
            let world = make_checkerboard(seed, *size, *regime);
            let depth = if *regime == RewardRegime::Mixed { (size * size) as usize } else { usize::MAX };
            compare(&world, &world.start, *regime, depth)
        }
        Scenario::Terrain => {
            let world = make_terrain(seed);
            compare(&world, &world.start, RewardRegime::AllNegative, usize::MAX)
        }
        Scenario::FourRooms { barrier } => {
            let p = FourRoomsClass::shortest(*barrier).example(seed);
            compare(&p.world, &p.start, RewardRegime::AllNegative, usize::MAX)
        }
        _ => Err(CliError::Usage("oracle supports checkerboard, terrain and four-rooms scenarios".into())),
    }
}

/// Background geometry of a scenario instance, with `path` overlaid.
pub fn drawing(scenario: &Scenario, seed: u64, mode: Option<ModeArg>, path: &[Vec<f64>]) -> Result<Drawing, CliError> {
    let pts: Vec<(f64, f64)> = path.iter().filter(|p| p.len() >= 2).map(|p| (p[0], p[1])).collect();
    let cells_of = |w: i32, h: i32, f: &dyn Fn(GridPos) -> Cell| -> Vec<Cell> {
        (0..h).flat_map(|y| (0..w).map(move |x| GridPos::new(x, y))).map(f).collect()
    };
    Ok(match scenario {
        Scenario::Checkerboard { size, regime } => {
            let b = make_checkerboard(seed, *size, *regime);
            let cells = cells_of(*size, *size, &|p| match regime {
                RewardRegime::AllNegative => Cell::Shade(-b.reward_at(p)),
                RewardRegime::Mixed => Cell::Free,
            });
            Drawing::Grid(GridDrawing {
                width: *size,
                height: *size,
                cells,
                start: (b.start.x, b.start.y),
                goal: Some((b.goal.x, b.goal.y)),
                markers: vec![],
                path: pts,
            })
        }
        Scenario::FourRooms { barrier } => {
            let p = four_rooms_class(*barrier, mode).example(seed);
            let cells = cells_of(SIZE, SIZE, &|c| if p.world.blocked(c) { Cell::Blocked } else { Cell::Free });
            Drawing::Grid(GridDrawing {
                width: SIZE,
                height: SIZE,
                cells,
                start: (p.start.x, p.start.y),
                goal: Some((p.world.goal.x, p.world.goal.y)),
                markers: vec![],
                path: pts,
            })
        }
        Scenario::Terrain => {
            let t = make_terrain(seed);
            let cells = cells_of(t.width(), t.height, &|c| if t.is_free(c) { Cell::Free } else { Cell::Blocked });
            Drawing::Grid(GridDrawing {
                width: t.width(),
                height: t.height,
                cells,
                start: (t.start.x, t.start.y),
                goal: Some((t.goal.x, t.goal.y)),
                markers: vec![],
                path: pts,
            })
        }
        Scenario::Gripper { scenario, objects, obstacles } => {
            let p = gripper_problem(scenario, *objects, *obstacles, seed)?;
            let w = &p.world;
            let cells = cells_of(w.width, w.height, &|c| {
                if w.is_obstacle(c) {
                    Cell::Blocked
                } else if w.in_box(c) {
                    Cell::Zone
                } else {
                    Cell::Free
                }
            });
            Drawing::Grid(GridDrawing {
                width: w.width,
                height: w.height,
                cells,
                start: (p.start.gripper.x, p.start.gripper.y),
                goal: None,
                markers: p.start.objects.iter().map(|o| (o.x, o.y)).collect(),
                path: pts,
            })
        }
        Scenario::Pendulum { .. } => {
            let c = pendulum().config;
            let pi = std::f64::consts::PI;
            Drawing::Phase(PhaseDrawing {
                x: (0.0, TAU),
                y: (-c.max_omega, c.max_omega),
                goal: ((pi - c.goal_theta, -c.goal_omega), (pi + c.goal_theta, c.goal_omega)),
                path: pts,
                x_label: "theta".into(),
                y_label: "omega".into(),
            })
        }
    })
}
