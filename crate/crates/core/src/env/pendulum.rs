//! Torque-limited pendulum with continuous state `(theta, omega)` and binned
//! torques.
//!
//! `theta` is measured from the hanging position and kept in `[0, 2pi)`, so
//! upright is `theta = pi`. The torque limit is well below `m g l`, so the
//! pendulum has to swing back and forth to gain energy before it can rise.

use std::f64::consts::{PI, TAU};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hier::{bin_actions, rootless, ActionRef, GeneralizedAction, Hierarchy, SharedGaPolicy};
use crate::model::{canonical_encode, ActionTable, Outcome, PrimitiveAction, QuantizationSpec, StateId, WorldModel};
use crate::policy::{uniform_policy, RandomOrderPolicy};
use crate::search::PlannerConfig;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PendulumState {
    pub theta: f64,
    pub omega: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PendulumConfig {
    pub mass: f64,
    pub length: f64,
    pub gravity: f64,
    pub max_torque: f64,
    pub dt: f64,
    /// Euler steps per primitive action, torque held constant.
    pub substeps: usize,
    pub torque_bins: usize,
    pub max_omega: f64,
    /// Two states are equal when both coordinates differ by less than this
    /// fraction of their range.
    pub equals_fraction: f64,
    pub goal_theta: f64,
    pub goal_omega: f64,
    pub step_reward: f64,
    /// Sub-goal lattice over `(theta, omega)`.
    pub boxes: (usize, usize),
}

impl Default for PendulumConfig {
    fn default() -> Self {
        Self {
            mass: 1.0,
            length: 1.0,
            gravity: 9.81,
            max_torque: 4.0,
            dt: 0.05,
            substeps: 2,
            torque_bins: 21,
            max_omega: 8.0,
            equals_fraction: 1.0 / 150.0,
            goal_theta: 0.25,
            goal_omega: 1.5,
            step_reward: -1.0 / 64.0,
            boxes: (12, 8),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PendulumError {
    #[error("dt must lie in (0, 0.1], got {0}")]
    BadStep(f64),
    #[error("invalid pendulum config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pendulum {
    pub config: PendulumConfig,
    pub torques: ActionTable,
}

pub fn make_pendulum(config: PendulumConfig) -> Result<Pendulum, PendulumError> {
    if !(config.dt > 0.0 && config.dt <= 0.1) {
        return Err(PendulumError::BadStep(config.dt));
    }
    if config.substeps == 0 {
        return Err(PendulumError::Invalid("substeps must be at least 1".into()));
    }
    if !(config.mass > 0.0 && config.length > 0.0 && config.max_omega > 0.0 && config.equals_fraction > 0.0) {
        return Err(PendulumError::Invalid("mass, length, max_omega and equals_fraction must be positive".into()));
    }
    if config.boxes.0 < 3 || config.boxes.1 < 2 {
        return Err(PendulumError::Invalid(format!("sub-goal lattice {:?} too coarse", config.boxes)));
    }
    let torques = bin_actions(-config.max_torque, config.max_torque, config.torque_bins).map_err(|e| PendulumError::Invalid(e.to_string()))?;
    Ok(Pendulum { config, torques })
}

impl Pendulum {
    pub fn torque(&self, a: PrimitiveAction) -> f64 {
        self.torques.param(a)[0]
    }

    /// One semi-implicit Euler step.
    pub fn step(&self, s: &PendulumState, torque: f64) -> PendulumState {
        let c = &self.config;
        let inertia = c.mass * c.length * c.length;
        let alpha = (torque - c.mass * c.gravity * c.length * s.theta.sin()) / inertia;
        let omega = (s.omega + c.dt * alpha).clamp(-c.max_omega, c.max_omega);
        let theta = (s.theta + c.dt * omega).rem_euclid(TAU);
        PendulumState { theta, omega }
    }

    /// Kinetic plus potential energy, zero at rest hanging down.
    pub fn energy(&self, s: &PendulumState) -> f64 {
        let c = &self.config;
        0.5 * c.mass * c.length * c.length * s.omega * s.omega + c.mass * c.gravity * c.length * (1.0 - s.theta.cos())
    }

    fn tolerances(&self) -> (f64, f64) {
        (TAU * self.config.equals_fraction, 2.0 * self.config.max_omega * self.config.equals_fraction)
    }

    /// Lattice box of a state.
    pub fn box_of(&self, s: &PendulumState) -> (usize, usize) {
        let (nt, nw) = self.config.boxes;
        let bt = ((s.theta / TAU * nt as f64) as usize).min(nt - 1);
        let bw = (((s.omega + self.config.max_omega) / (2.0 * self.config.max_omega) * nw as f64) as usize).min(nw - 1);
        (bt, bw)
    }

    /// Box reached by stepping `d` from `b`, wrapping in theta.
    pub fn neighbour(&self, b: (usize, usize), d: (i32, i32)) -> Option<(usize, usize)> {
        let (nt, nw) = self.config.boxes;
        let w = b.1 as i32 + d.1;
        (0..nw as i32).contains(&w).then(|| (((b.0 as i32 + d.0).rem_euclid(nt as i32)) as usize, w as usize))
    }

    pub fn box_key(&self, b: (usize, usize)) -> u64 {
        (b.0 * self.config.boxes.1 + b.1) as u64
    }

    /// Seeded start near the bottom, nearly at rest.
    pub fn start(&self, seed: u64) -> PendulumState {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5045_4e44);
        let theta = rng.random_range(-0.3..0.3f64).rem_euclid(TAU);
        PendulumState { theta, omega: rng.random_range(-0.5..0.5) }
    }
}

impl WorldModel for Pendulum {
    type State = PendulumState;

    fn action_count(&self) -> usize {
        self.torques.len()
    }

    fn transition(&self, action: PrimitiveAction, s: &PendulumState) -> Outcome<PendulumState> {
        if action.0 >= self.torques.len() {
            return Outcome::Forbidden;
        }
        let torque = self.torque(action);
        let mut next = *s;
        for _ in 0..self.config.substeps {
            next = self.step(&next, torque);
        }
        Outcome::Next { state: next, reward: self.config.step_reward }
    }

    fn is_goal(&self, s: &PendulumState) -> bool {
        (s.theta - PI).abs() <= self.config.goal_theta && s.omega.abs() <= self.config.goal_omega
    }

    fn encode(&self, s: &PendulumState) -> StateId {
        canonical_encode(&[s.theta, s.omega], &QuantizationSpec::exact(2)).expect("two coordinates")
    }

    fn is_continuous(&self) -> bool {
        true
    }

    /// Theta differences are taken without wrapping: states on either side
    /// of the hanging position are distinct samples.
    fn equals(&self, a: &PendulumState, b: &PendulumState) -> bool {
        let (tt, tw) = self.tolerances();
        (a.theta - b.theta).abs() < tt && (a.omega - b.omega).abs() < tw
    }

    fn equality_cell(&self, s: &PendulumState) -> Option<Vec<i64>> {
        let (tt, tw) = self.tolerances();
        Some(vec![(s.theta / tt).floor() as i64, ((s.omega + self.config.max_omega) / tw).floor() as i64])
    }
}

/// The eight lattice directions.
pub const DIRECTIONS: [(i32, i32); 8] = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubGoalMode {
    /// One generalized action per neighbour box, each returning one state.
    Single,
    /// One generalized action returning every neighbour box it reaches.
    Multiple,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PendulumPlanner {
    pub mode: SubGoalMode,
    pub sub: PlannerConfig,
    pub top: PlannerConfig,
    pub random_order: Option<u64>,
}

impl Default for PendulumPlanner {
    fn default() -> Self {
        let base = PlannerConfig { stop_on_first_goal: true, ..PlannerConfig::optimal() };
        Self { mode: SubGoalMode::Multiple, sub: base.clone().with_budget(400).with_depth(20), top: base.with_budget(3_000).with_depth(60), random_order: None }
    }
}

fn order(n: usize, planner: &PendulumPlanner, salt: u64) -> SharedGaPolicy<PendulumState> {
    match planner.random_order {
        Some(seed) => rootless(RandomOrderPolicy::new(n, seed ^ salt, |s: &PendulumState| {
            let mut k = s.theta.to_bits().to_le_bytes().to_vec();
            k.extend_from_slice(&s.omega.to_bits().to_le_bytes());
            k
        })),
        None => rootless(uniform_policy(n).expect("nonempty action set")),
    }
}

/// Two-level hierarchy: level-1 actions drive the pendulum into a
/// neighbouring lattice box using binned torques; the top level chains them
/// until the upright goal is reached.
pub fn pendulum_hierarchy(world: &Pendulum, planner: &PendulumPlanner) -> Hierarchy<PendulumState> {
    let w = Arc::new(world.clone());
    let torques: Vec<ActionRef> = (0..world.action_count()).map(|a| ActionRef::Primitive(PrimitiveAction(a))).collect();
    let mut gas = Vec::new();
    match planner.mode {
        SubGoalMode::Single => {
            for (i, &d) in DIRECTIONS.iter().enumerate() {
                let (wg, wa) = (w.clone(), w.clone());
                let mut ga = GeneralizedAction::new(
                    format!("box{:+}{:+}", d.0, d.1),
                    "box",
                    torques.clone(),
                    Arc::new(move |root: &PendulumState, s: &PendulumState| {
                        let target = wg.neighbour(wg.box_of(root), d)?;
                        (wg.box_of(s) == target).then(|| wg.box_key(target))
                    }),
                    order(torques.len(), planner, 100 + i as u64),
                    planner.sub.clone(),
                );
                ga.available = Some(Arc::new(move |s: &PendulumState| wa.neighbour(wa.box_of(s), d).is_some()));
                gas.push(ga);
            }
        }
        SubGoalMode::Multiple => {
            let wg = w.clone();
            let mut ga = GeneralizedAction::new(
                "boxes",
                "box",
                torques.clone(),
                Arc::new(move |root: &PendulumState, s: &PendulumState| {
                    let (from, to) = (wg.box_of(root), wg.box_of(s));
                    DIRECTIONS.iter().any(|&d| wg.neighbour(from, d) == Some(to)).then(|| wg.box_key(to))
                }),
                order(torques.len(), planner, 100),
                planner.sub.clone(),
            );
            ga.return_multiple_subgoals = true;
            ga.terminate_at_subgoals = Some(true);
            gas.push(ga);
        }
    }
    let slots: Vec<ActionRef> = (0..gas.len()).map(ActionRef::General).collect();
    let n = slots.len();
    let top = GeneralizedAction::new("pendulum", "top", slots, Arc::new(|_: &PendulumState, _: &PendulumState| None), order(n, planner, 7), planner.top.clone());
    let root = gas.len();
    gas.push(top);
    Hierarchy::new(gas, root)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn world() -> Pendulum {
        make_pendulum(PendulumConfig::default()).unwrap()
    }

    #[test]
    fn config_is_checked() {
        assert_eq!(make_pendulum(PendulumConfig { dt: 0.2, ..Default::default() }), Err(PendulumError::BadStep(0.2)));
        assert!(make_pendulum(PendulumConfig { torque_bins: 1, ..Default::default() }).is_err());
        assert_eq!(world().action_count(), 21);
        assert_eq!(world().torque(PrimitiveAction(10)), 0.0);
    }

    #[test]
    fn torque_limit_cannot_hold_horizontal() {
        let c = PendulumConfig::default();
        assert!(c.max_torque < c.mass * c.gravity * c.length);
        // Full torque from rest settles below 30 degrees.
        let p = world();
        let mut s = PendulumState { theta: 0.0, omega: 0.0 };
        let mut peak: f64 = 0.0;
        for _ in 0..200 {
            s = p.step(&s, c.max_torque);
            peak = peak.max(s.theta.min(TAU - s.theta));
        }
        assert!(peak < 1.0, "{peak}");
    }

    #[test]
    fn energy_drift_is_bounded_without_torque() {
        let p = world();
        let mut s = PendulumState { theta: 1.0, omega: 0.0 };
        let e0 = p.energy(&s);
        let mut worst: f64 = 0.0;
        for _ in 0..400 {
            let next = p.step(&s, 0.0);
            worst = worst.max((p.energy(&next) - p.energy(&s)).abs());
            s = next;
        }
        // Semi-implicit Euler oscillates around the true energy instead of
        // drifting away.
        assert!(worst <= 0.5 * p.config.dt * e0.max(1.0), "{worst}");
        assert!((p.energy(&s) - e0).abs() < 0.1 * e0);
    }

    #[test]
    fn equality_cells_cover_equals() {
        let p = world();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..2000 {
            let a = PendulumState { theta: rng.random_range(0.0..TAU), omega: rng.random_range(-8.0..8.0) };
            let b = PendulumState { theta: (a.theta + rng.random_range(-0.05..0.05f64)).clamp(0.0, TAU - 1e-9), omega: a.omega + rng.random_range(-0.12..0.12) };
            assert!(p.equals(&a, &a));
            assert_eq!(p.equals(&a, &b), p.equals(&b, &a));
            if p.equals(&a, &b) {
                let (ca, cb) = (p.equality_cell(&a).unwrap(), p.equality_cell(&b).unwrap());
                assert!(ca.iter().zip(&cb).all(|(x, y)| (x - y).abs() <= 1));
            }
        }
    }

    #[test]
    fn lattice_wraps_in_theta_only() {
        let p = world();
        assert_eq!(p.neighbour((0, 3), (-1, 1)), Some((11, 4)));
        assert_eq!(p.neighbour((11, 7), (1, 1)), None);
        assert_eq!(p.box_of(&PendulumState { theta: TAU - 1e-12, omega: 8.0 }), (11, 7));
    }
}
