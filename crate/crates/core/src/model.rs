//! Problem-formulation abstractions shared by planners, learners and worlds.
//!
//! A [`WorldModel`] bundles the state space, the allowed-action oracle, the
//! deterministic transition function with its reward, the goal predicate and
//! the equals function. Planners only ever see worlds through this trait.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Canonical byte encoding of a state.
///
/// Two discrete states are the same state iff their encodings are byte-equal.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StateId(pub Vec<u8>);

impl StateId {
    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        self.0.iter().map(|b| format!("{b:02x}")).collect()
    }
}

impl fmt::Debug for StateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "StateId({})", self.to_hex())
    }
}

/// Index into a world's primitive action table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PrimitiveAction(pub usize);

/// Table of primitive actions. Binned continuous actions carry their
/// parameter vector here; purely discrete worlds only use the labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionTable {
    pub labels: Vec<String>,
    pub params: Vec<Vec<f64>>,
}

impl ActionTable {
    pub fn discrete<S: AsRef<str>>(labels: &[S]) -> Self {
        Self {
            labels: labels.iter().map(|l| l.as_ref().to_string()).collect(),
            params: vec![Vec::new(); labels.len()],
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn actions(&self) -> impl Iterator<Item = PrimitiveAction> {
        (0..self.len()).map(PrimitiveAction)
    }

    pub fn param(&self, action: PrimitiveAction) -> &[f64] {
        &self.params[action.0]
    }
}

/// Result of applying a primitive action.
#[derive(Debug, Clone, PartialEq)]
pub enum Outcome<S> {
    Next { state: S, reward: f64 },
    /// The action would enter a forbidden state. The state it was attempted
    /// from is a boundary-state candidate.
    Forbidden,
}

impl<S> Outcome<S> {
    pub fn is_forbidden(&self) -> bool {
        matches!(self, Outcome::Forbidden)
    }
}

/// Deterministic world: state space, dynamics, rewards, goals and equality.
///
/// Implementations must be pure functions of their inputs so a single world
/// can be shared by concurrent searches.
pub trait WorldModel: Send + Sync {
    type State: Clone + fmt::Debug + Send + Sync;

    /// Size of the primitive action table.
    fn action_count(&self) -> usize;

    /// Allowed actions `U(s)`, in ascending index order.
    fn allowed(&self, _state: &Self::State) -> Vec<PrimitiveAction> {
        (0..self.action_count()).map(PrimitiveAction).collect()
    }

    fn transition(&self, action: PrimitiveAction, state: &Self::State) -> Outcome<Self::State>;

    /// Reward for taking `action` in `state`; `None` when forbidden.
    fn reward(&self, action: PrimitiveAction, state: &Self::State) -> Option<f64> {
        match self.transition(action, state) {
            Outcome::Next { reward, .. } => Some(reward),
            Outcome::Forbidden => None,
        }
    }

    fn is_goal(&self, state: &Self::State) -> bool;

    /// Canonical encoding. Discrete worlds use it for identity.
    fn encode(&self, state: &Self::State) -> StateId;

    fn is_continuous(&self) -> bool {
        false
    }

    /// Equals function `e(s, s')`. Must be reflexive and symmetric.
    fn equals(&self, a: &Self::State, b: &Self::State) -> bool {
        self.encode(a) == self.encode(b)
    }

    /// Lookup cell for continuous worlds. Any two states with `equals` true
    /// must have cells differing by at most one in every coordinate.
    fn equality_cell(&self, _state: &Self::State) -> Option<Vec<i64>> {
        None
    }
}

impl<W: WorldModel + ?Sized> WorldModel for &W {
    type State = W::State;

    fn action_count(&self) -> usize {
        (**self).action_count()
    }
    fn allowed(&self, state: &Self::State) -> Vec<PrimitiveAction> {
        (**self).allowed(state)
    }
    fn transition(&self, action: PrimitiveAction, state: &Self::State) -> Outcome<Self::State> {
        (**self).transition(action, state)
    }
    fn reward(&self, action: PrimitiveAction, state: &Self::State) -> Option<f64> {
        (**self).reward(action, state)
    }
    fn is_goal(&self, state: &Self::State) -> bool {
        (**self).is_goal(state)
    }
    fn encode(&self, state: &Self::State) -> StateId {
        (**self).encode(state)
    }
    fn is_continuous(&self) -> bool {
        (**self).is_continuous()
    }
    fn equals(&self, a: &Self::State, b: &Self::State) -> bool {
        (**self).equals(a, b)
    }
    fn equality_cell(&self, state: &Self::State) -> Option<Vec<i64>> {
        (**self).equality_cell(state)
    }
}

/// A problem instance: a world (which fixes rewards and goals) plus `s_I`.
#[derive(Debug, Clone)]
pub struct Problem<W: WorldModel> {
    pub world: W,
    pub start: W::State,
}

/// A class of problems sharing dynamics, rewards and goal structure, with a
/// seeded example generator.
pub trait ProblemClass: Send + Sync {
    type World: WorldModel;

    fn name(&self) -> String;

    /// The `index`-th example. Same index, same problem.
    fn example(&self, index: u64) -> Problem<Self::World>;
}

/// One plan step: the action taken and the state it produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanStep<S> {
    pub action: PrimitiveAction,
    pub state: S,
    pub reward: f64,
}

/// Linked action-state sequence with its cumulative reward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan<S> {
    pub steps: Vec<PlanStep<S>>,
    pub cumulative_reward: f64,
}

impl<S> Default for Plan<S> {
    fn default() -> Self {
        Self { steps: Vec::new(), cumulative_reward: 0.0 }
    }
}

impl<S: Clone> Plan<S> {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn final_state<'a>(&'a self, start: &'a S) -> &'a S {
        self.steps.last().map(|s| &s.state).unwrap_or(start)
    }

    /// `(action, state acted from)` pairs, the form used as training data.
    pub fn action_state_pairs(&self, start: &S) -> Vec<(PrimitiveAction, S)> {
        let mut prev = start.clone();
        let mut out = Vec::with_capacity(self.steps.len());
        for step in &self.steps {
            out.push((step.action, prev));
            prev = step.state.clone();
        }
        out
    }

    /// Append another plan that starts where this one ends.
    pub fn extend(&mut self, other: &Plan<S>) {
        self.steps.extend(other.steps.iter().cloned());
        self.cumulative_reward = self.steps.iter().fold(0.0, |acc, s| acc + s.reward);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Replay<S> {
    Valid { final_state: S, reward: f64 },
    /// First step whose stored state, reward or legality diverges from the
    /// world. An index equal to the plan length flags a bad cumulative reward.
    Invalid { step: usize },
}

impl<S> Replay<S> {
    pub fn is_valid(&self) -> bool {
        matches!(self, Replay::Valid { .. })
    }
}

const REPLAY_TOLERANCE: f64 = 1e-9;

/// Re-simulate `plan` from `start` and check every link.
pub fn replay<W: WorldModel>(plan: &Plan<W::State>, world: &W, start: &W::State) -> Replay<W::State> {
    let mut current = start.clone();
    let mut total = 0.0;
    for (i, step) in plan.steps.iter().enumerate() {
        match world.transition(step.action, &current) {
            Outcome::Forbidden => return Replay::Invalid { step: i },
            Outcome::Next { state, reward } => {
                if !world.equals(&state, &step.state) || (reward - step.reward).abs() > REPLAY_TOLERANCE {
                    return Replay::Invalid { step: i };
                }
                total += reward;
                current = state;
            }
        }
    }
    if (total - plan.cumulative_reward).abs() > REPLAY_TOLERANCE {
        return Replay::Invalid { step: plan.steps.len() };
    }
    Replay::Valid { final_state: current, reward: total }
}

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("state has {got} coordinates but the quantization spec declares {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("coordinate {axis} ({value}) does not fit the quantized range")]
    OutOfRange { axis: usize, value: f64 },
}

/// How one coordinate is written into a [`StateId`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum AxisEncoding {
    /// `round(x * scale)` as a little-endian `i32`.
    Quantized { scale: f64 },
    /// The IEEE-754 bit pattern, with `-0.0` folded onto `0.0`.
    Exact,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizationSpec {
    pub axes: Vec<AxisEncoding>,
}

impl QuantizationSpec {
    pub fn grid(dims: usize) -> Self {
        Self { axes: vec![AxisEncoding::Quantized { scale: 1.0 }; dims] }
    }

    pub fn exact(dims: usize) -> Self {
        Self { axes: vec![AxisEncoding::Exact; dims] }
    }
}

pub fn canonical_encode(coords: &[f64], spec: &QuantizationSpec) -> Result<StateId, ModelError> {
    if coords.len() != spec.axes.len() {
        return Err(ModelError::DimensionMismatch { expected: spec.axes.len(), got: coords.len() });
    }
    let mut bytes = Vec::with_capacity(coords.len() * 8);
    for (axis, (&x, enc)) in coords.iter().zip(&spec.axes).enumerate() {
        match *enc {
            AxisEncoding::Quantized { scale } => {
                let q = (x * scale).round();
                if !q.is_finite() || q < i32::MIN as f64 || q > i32::MAX as f64 {
                    return Err(ModelError::OutOfRange { axis, value: x });
                }
                bytes.extend_from_slice(&(q as i32).to_le_bytes());
            }
            AxisEncoding::Exact => {
                let v = if x == 0.0 { 0.0f64 } else { x };
                bytes.extend_from_slice(&v.to_bits().to_le_bytes());
            }
        }
    }
    Ok(StateId(bytes))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Line world 0..=4, action 0 moves right (reward -1), action 1 is
    /// always forbidden.
    struct Line;

    impl WorldModel for Line {
        type State = i32;
        fn action_count(&self) -> usize {
            2
        }
        fn transition(&self, action: PrimitiveAction, state: &i32) -> Outcome<i32> {
            if action.0 == 0 && *state < 4 {
                Outcome::Next { state: state + 1, reward: -1.0 }
            } else {
                Outcome::Forbidden
            }
        }
        fn is_goal(&self, state: &i32) -> bool {
            *state == 4
        }
        fn encode(&self, state: &i32) -> StateId {
            StateId(state.to_le_bytes().to_vec())
        }
    }

    fn walk(n: usize) -> Plan<i32> {
        let steps: Vec<_> = (1..=n as i32)
            .map(|s| PlanStep { action: PrimitiveAction(0), state: s, reward: -1.0 })
            .collect();
        Plan { cumulative_reward: -(n as f64), steps }
    }

    #[test]
    fn empty_plan_replays_to_start() {
        assert_eq!(replay(&Plan::default(), &Line, &2), Replay::Valid { final_state: 2, reward: 0.0 });
    }

    #[test]
    fn corrupted_third_state_is_flagged() {
        let mut plan = walk(4);
        plan.steps[2].state = 1;
        assert_eq!(replay(&plan, &Line, &0), Replay::Invalid { step: 2 });
    }

    #[test]
    fn forbidden_step_and_bad_total_are_flagged() {
        let mut plan = walk(2);
        plan.steps[1].action = PrimitiveAction(1);
        assert_eq!(replay(&plan, &Line, &0), Replay::Invalid { step: 1 });

        let mut plan = walk(3);
        plan.cumulative_reward = -2.0;
        assert_eq!(replay(&plan, &Line, &0), Replay::Invalid { step: 3 });
    }

    #[test]
    fn grid_cell_encoding_is_eight_stable_bytes() {
        let spec = QuantizationSpec::grid(2);
        let a = canonical_encode(&[3.0, 5.0], &spec).unwrap();
        let b = canonical_encode(&[3.0, 5.0], &spec).unwrap();
        assert_eq!(a.as_bytes().len(), 8);
        assert_eq!(a, b);
        assert_eq!(a.as_bytes(), &[3, 0, 0, 0, 5, 0, 0, 0]);
    }

    #[test]
    fn continuous_encoding_is_deterministic() {
        let spec = QuantizationSpec::exact(2);
        let s = [0.123456789, -3.5];
        assert_eq!(canonical_encode(&s, &spec).unwrap(), canonical_encode(&s, &spec).unwrap());
        assert_eq!(
            canonical_encode(&[0.0, 1.0], &spec).unwrap(),
            canonical_encode(&[-0.0, 1.0], &spec).unwrap()
        );
    }

    #[test]
    fn all_cells_of_an_8x8_grid_encode_distinctly() {
        let spec = QuantizationSpec::grid(2);
        let mut seen = std::collections::HashSet::new();
        for x in 0..8 {
            for y in 0..8 {
                assert!(seen.insert(canonical_encode(&[x as f64, y as f64], &spec).unwrap()));
            }
        }
        assert_eq!(seen.len(), 64);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        assert_eq!(
            canonical_encode(&[1.0], &QuantizationSpec::grid(2)),
            Err(ModelError::DimensionMismatch { expected: 2, got: 1 })
        );
    }
}
