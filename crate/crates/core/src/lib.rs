//! Policy-guided tree planning, recursive hierarchical planning and the
//! plan-learn-plan loop, with the desk-scale worlds used to exercise them.

pub mod env;
pub mod flat;
pub mod hier;
pub mod learn;
pub mod model;
pub mod plp;
pub mod policy;
pub mod search;
pub mod tree;

pub use flat::{exhaustive_oracle, select_expansion, tp_plan, OracleError, TpError, TpResult};
pub use hier::{
    bin_actions, collect_boundary_states, rtp_plan, rtp_solve, ActionRef, GaId, GaOutcome, GaResult, GeneralizedAction, HierPlan,
    HierStep, Hierarchy, ResultTag, RtpError, RtpSolution,
};
pub use model::{
    canonical_encode, replay, ActionTable, AxisEncoding, ModelError, Outcome, Plan, PlanStep, PrimitiveAction, Problem,
    ProblemClass, QuantizationSpec, Replay, StateId, WorldModel,
};
pub use policy::{combine_split, uniform_policy, PolicyError, RandomOrderPolicy, StochasticPolicy, UniformPolicy};
pub use search::{Mode, PlannerConfig, ReplaceEvent, RewardEvent, RewardRegime, SearchStats, TraceRecord};
pub use tree::{NodeId, SearchTree};
