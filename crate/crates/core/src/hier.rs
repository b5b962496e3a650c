//! Recursive tree planner: search trees whose edges may be calls to
//! sub-planners (generalized actions) returning sets of states.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ActionTable, Outcome, Plan, PlanStep, PrimitiveAction, StateId, WorldModel};
use crate::learn::Mlp;
use crate::policy::StochasticPolicy;
use crate::search::{run_search, Child, Domain, Expanded, PlannerConfig, ReplaceEvent, SearchStats, TraceRecord};
use crate::tree::{NodeId, SearchTree};

pub type GaId = usize;

/// Sub-goal descriptor. A generalized action returns at most one state per
/// descriptor.
pub type SubGoalKey = u64;

/// Entry of a generalized action's action set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ActionRef {
    Primitive(PrimitiveAction),
    General(GaId),
}

/// Root-relative sub-goal test: `(invocation state, state) -> descriptor`.
pub type SubGoalFn<S> = Arc<dyn Fn(&S, &S) -> Option<SubGoalKey> + Send + Sync>;
pub type StateFn<S, T> = Arc<dyn Fn(&S) -> T + Send + Sync>;
/// Function of `(invocation state, state)`.
pub type RootedFn<S, T> = Arc<dyn Fn(&S, &S) -> T + Send + Sync>;

/// Slot scores of a generalized action. Receives the invocation state so
/// that sub-goals defined relative to it can be featurized.
pub trait GaPolicy<S>: Send + Sync {
    fn scores(&self, root: &S, state: &S, slots: &[usize]) -> Vec<f64>;

    /// Best slot, first on ties.
    fn greedy(&self, root: &S, state: &S, slots: &[usize]) -> Option<usize> {
        let scores = self.scores(root, state, slots);
        let mut best: Option<(usize, f64)> = None;
        for (&a, &p) in slots.iter().zip(&scores) {
            if best.is_none_or(|(_, b)| p > b) {
                best = Some((a, p));
            }
        }
        best.map(|(a, _)| a)
    }
}

pub type SharedGaPolicy<S> = Arc<dyn GaPolicy<S>>;

/// A state policy that ignores the invocation state.
pub struct Rootless<P>(pub P);

impl<S, P: StochasticPolicy<S>> GaPolicy<S> for Rootless<P> {
    fn scores(&self, _: &S, state: &S, slots: &[usize]) -> Vec<f64> {
        self.0.scores(state, slots)
    }
}

pub fn rootless<S: 'static, P: StochasticPolicy<S> + 'static>(p: P) -> SharedGaPolicy<S> {
    Arc::new(Rootless(p))
}

/// Network over rooted features; the distribution over all outputs is
/// indexed by slot.
pub struct RootedNetwork<S> {
    pub net: Arc<Mlp>,
    pub features: RootedFn<S, Vec<f64>>,
}

impl<S> GaPolicy<S> for RootedNetwork<S> {
    fn scores(&self, root: &S, state: &S, slots: &[usize]) -> Vec<f64> {
        let d = self.net.forward(&(self.features)(root, state));
        slots.iter().map(|&a| d.get(a).copied().unwrap_or(0.0)).collect()
    }
}

/// A sub-planner descriptor: action set, sub-goals, policy, optional
/// initializer and planner parameters.
#[derive(Clone)]
pub struct GeneralizedAction<S> {
    pub id: String,
    /// Instances of one family share a policy network and training batch.
    pub family: String,
    pub actions: Vec<ActionRef>,
    pub sub_goal: SubGoalFn<S>,
    /// Scores over slots of `actions` (or of the initializer's list).
    pub policy: SharedGaPolicy<S>,
    /// Replaces the action list for one invocation.
    pub initializer: Option<StateFn<S, Vec<ActionRef>>>,
    /// Whether a parent may invoke this action from a state.
    pub available: Option<StateFn<S, bool>>,
    /// Policy input features, used to build training batches.
    pub features: Option<RootedFn<S, Vec<f64>>>,
    pub params: PlannerConfig,
    pub return_multiple_subgoals: bool,
    pub return_boundary_states: bool,
    pub greedy_only: bool,
    /// Overrides the default (terminate unless returning multiple sub-goals).
    pub terminate_at_subgoals: Option<bool>,
}

impl<S> fmt::Debug for GeneralizedAction<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GeneralizedAction")
            .field("id", &self.id)
            .field("family", &self.family)
            .field("actions", &self.actions.len())
            .field("params", &self.params)
            .finish_non_exhaustive()
    }
}

impl<S> GeneralizedAction<S> {
    pub fn new(
        id: impl Into<String>,
        family: impl Into<String>,
        actions: Vec<ActionRef>,
        sub_goal: SubGoalFn<S>,
        policy: SharedGaPolicy<S>,
        params: PlannerConfig,
    ) -> Self {
        Self {
            id: id.into(),
            family: family.into(),
            actions,
            sub_goal,
            policy,
            initializer: None,
            available: None,
            features: None,
            params,
            return_multiple_subgoals: false,
            return_boundary_states: false,
            greedy_only: false,
            terminate_at_subgoals: None,
        }
    }

    pub fn terminates_at_subgoals(&self) -> bool {
        self.terminate_at_subgoals.unwrap_or(!self.return_multiple_subgoals)
    }

    fn action_list(&self, state: &S) -> Vec<ActionRef> {
        match &self.initializer {
            Some(init) => init(state),
            None => self.actions.clone(),
        }
    }
}

/// Generalized actions of one problem, `root` being the top-level task.
#[derive(Clone, Debug)]
pub struct Hierarchy<S> {
    pub gas: Vec<GeneralizedAction<S>>,
    pub root: GaId,
    pub max_levels: usize,
    /// Record one trace record per sub-planner call.
    pub trace: bool,
    /// After every continuous search, count node pairs that satisfy equals.
    pub audit: bool,
}

impl<S> Hierarchy<S> {
    pub fn new(gas: Vec<GeneralizedAction<S>>, root: GaId) -> Self {
        Self { gas, root, max_levels: 4, trace: false, audit: false }
    }

    pub fn find(&self, id: &str) -> Option<GaId> {
        self.gas.iter().position(|g| g.id == id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ResultTag {
    SubGoal(SubGoalKey),
    GlobalGoal,
    Boundary,
}

/// Plan produced by one generalized action, nesting its sub-plans.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HierPlan<S> {
    pub ga: GaId,
    pub start: S,
    pub steps: Vec<HierStep<S>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HierStep<S> {
    /// Slot in the invoking action list.
    pub slot: usize,
    pub action: ActionRef,
    pub to: S,
    pub reward: f64,
    pub sub: Option<Arc<HierPlan<S>>>,
}

impl<S: Clone> HierPlan<S> {
    pub fn reward(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }

    /// Concatenate sub-plans down to primitive actions.
    pub fn flatten(&self) -> Plan<S> {
        let mut plan = Plan::default();
        self.flatten_into(&mut plan);
        plan.cumulative_reward = plan.steps.iter().fold(0.0, |acc, s| acc + s.reward);
        plan
    }

    fn flatten_into(&self, plan: &mut Plan<S>) {
        for step in &self.steps {
            match (&step.action, &step.sub) {
                (ActionRef::Primitive(a), _) => plan.steps.push(PlanStep { action: *a, state: step.to.clone(), reward: step.reward }),
                (ActionRef::General(_), Some(sub)) => sub.flatten_into(plan),
                (ActionRef::General(_), None) => unreachable!("generalized step without a sub-plan"),
            }
        }
    }

    /// Number of levels, counting this one.
    pub fn depth(&self) -> usize {
        1 + self.steps.iter().filter_map(|s| s.sub.as_ref().map(|p| p.depth())).max().unwrap_or(0)
    }

    /// Visit this plan and every nested sub-plan with its level.
    pub fn visit<'a>(&'a self, level: usize, f: &mut impl FnMut(usize, &'a HierPlan<S>)) {
        f(level, self);
        for step in &self.steps {
            if let Some(sub) = &step.sub {
                sub.visit(level + 1, f);
            }
        }
    }
}

/// A state returned by a generalized action.
#[derive(Debug, Clone)]
pub struct GaOutcome<S> {
    pub state: S,
    pub reward: f64,
    pub tag: ResultTag,
    pub plan: Arc<HierPlan<S>>,
}

/// One sub-planner call in a traced run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HierTraceRecord {
    pub level: usize,
    pub ga: String,
    pub root: String,
    pub results: Vec<ResultTag>,
    pub stats: SearchStats,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct GaResult<S> {
    pub next_states: Vec<GaOutcome<S>>,
    /// Counters summed over this call and all nested calls.
    pub stats: SearchStats,
    /// Counters per level below this call (index 0 is this call's own).
    pub levels: Vec<SearchStats>,
    pub replace_log: Vec<ReplaceEvent>,
    /// Node pairs satisfying equals after a continuous search (audit mode).
    pub spacing_violations: u64,
    pub trace: Vec<HierTraceRecord>,
    /// Flat expansion trace of the top-level search, when its config traces.
    pub top_trace: Vec<TraceRecord>,
}

impl<S> GaResult<S> {
    fn empty() -> Self {
        Self {
            next_states: Vec::new(),
            stats: SearchStats::default(),
            levels: vec![SearchStats::default()],
            replace_log: Vec::new(),
            spacing_violations: 0,
            trace: Vec::new(),
            top_trace: Vec::new(),
        }
    }

    fn absorb_child(&mut self, child: &GaResult<S>) {
        for (i, lvl) in child.levels.iter().enumerate() {
            if self.levels.len() <= i + 1 {
                self.levels.push(SearchStats::default());
            }
            self.levels[i + 1].absorb(lvl);
        }
        self.replace_log.extend_from_slice(&child.replace_log);
        self.spacing_violations += child.spacing_violations;
    }

    fn absorb_trace(&mut self, child: GaResult<S>) {
        self.trace.extend(child.trace);
    }
}

#[derive(Debug, Error)]
pub enum RtpError<S: fmt::Debug> {
    #[error("no sub-goal or goal reachable")]
    NoSolution(Box<GaResult<S>>),
    #[error("tree size budget of {limit} exceeded without a result")]
    BudgetExceeded { limit: usize, partial: Box<GaResult<S>> },
    #[error("generalized action {ga} would call itself (call chain {chain:?})")]
    RecursionGuard { ga: String, chain: Vec<String> },
    #[error("hierarchy deeper than {0} levels")]
    DepthLimit(usize),
}

impl<S: fmt::Debug> RtpError<S> {
    pub fn partial(&self) -> Option<&GaResult<S>> {
        match self {
            RtpError::NoSolution(r) => Some(r),
            RtpError::BudgetExceeded { partial, .. } => Some(partial),
            _ => None,
        }
    }
}

type Payload<S> = Option<Arc<HierPlan<S>>>;

struct GaDomain<'a, W: WorldModel> {
    world: &'a W,
    hierarchy: &'a Hierarchy<W::State>,
    ga_id: GaId,
    root: W::State,
    chain: Vec<GaId>,
    level: usize,
    actions: Vec<ActionRef>,
    acc: GaResult<W::State>,
    cache: HashMap<(StateId, usize), Vec<GaOutcome<W::State>>>,
    error: Option<RtpError<W::State>>,
}

impl<W: WorldModel> GaDomain<'_, W> {
    fn ga(&self) -> &GeneralizedAction<W::State> {
        &self.hierarchy.gas[self.ga_id]
    }

    fn sub_goal(&self, s: &W::State) -> Option<SubGoalKey> {
        (self.ga().sub_goal)(&self.root, s)
    }

    fn slots(&self, state: &W::State) -> Vec<usize> {
        let allowed = self.world.allowed(state);
        self.actions
            .iter()
            .enumerate()
            .filter(|(_, a)| match a {
                ActionRef::Primitive(p) => allowed.contains(p),
                ActionRef::General(g) => self.hierarchy.gas[*g].available.as_ref().is_none_or(|f| f(state)),
            })
            .map(|(i, _)| i)
            .collect()
    }

    fn invoke(&mut self, g: GaId, state: &W::State, stats: &mut SearchStats) -> Result<Vec<GaOutcome<W::State>>, ()> {
        let mut chain = self.chain.clone();
        chain.push(self.ga_id);
        stats.sub_invocations += 1;
        match plan_ga(self.world, self.hierarchy, g, state, &chain, self.level + 1) {
            Ok(res) => {
                self.acc.absorb_child(&res);
                let out = res.next_states.clone();
                self.acc.absorb_trace(res);
                Ok(out)
            }
            Err(RtpError::NoSolution(res)) => {
                self.acc.absorb_child(&res);
                self.acc.absorb_trace(*res);
                Ok(Vec::new())
            }
            Err(RtpError::BudgetExceeded { partial, .. }) => {
                self.acc.absorb_child(&partial);
                self.acc.absorb_trace(*partial);
                Ok(Vec::new())
            }
            Err(e) => {
                self.error.get_or_insert(e);
                Err(())
            }
        }
    }
}

impl<W: WorldModel> Domain for GaDomain<'_, W> {
    type World = W;
    type Action = usize;
    type Payload = Payload<W::State>;

    fn world(&self) -> &W {
        self.world
    }

    fn candidates(&mut self, state: &W::State) -> Vec<(usize, f64)> {
        let slots = self.slots(state);
        let scores = self.ga().policy.scores(&self.root, state, &slots);
        slots.into_iter().zip(scores).collect()
    }

    fn expand(&mut self, state: &W::State, slot: usize, stats: &mut SearchStats) -> Expanded<W::State, Payload<W::State>> {
        if self.error.is_some() {
            return Expanded::Children(Vec::new());
        }
        match self.actions[slot] {
            ActionRef::Primitive(a) => {
                stats.transitions += 1;
                match self.world.transition(a, state) {
                    Outcome::Forbidden => Expanded::Forbidden,
                    Outcome::Next { state, reward } => Expanded::Children(vec![Child { state, reward, payload: None, terminal: false }]),
                }
            }
            ActionRef::General(g) => {
                let key = (self.world.encode(state), slot);
                let outcomes = match self.cache.get(&key) {
                    Some(o) => o.clone(),
                    None => match self.invoke(g, state, stats) {
                        Ok(o) => {
                            self.cache.insert(key, o.clone());
                            o
                        }
                        Err(()) => Vec::new(),
                    },
                };
                Expanded::Children(
                    outcomes
                        .into_iter()
                        .map(|o| Child {
                            state: o.state,
                            reward: o.reward,
                            terminal: o.tag == ResultTag::GlobalGoal,
                            payload: Some(o.plan),
                        })
                        .collect(),
                )
            }
        }
    }

    fn is_terminal(&self, state: &W::State) -> bool {
        self.world.is_goal(state) || (self.ga().terminates_at_subgoals() && self.sub_goal(state).is_some())
    }

    fn stops_search(&self, state: &W::State) -> bool {
        self.world.is_goal(state) || (!self.ga().return_multiple_subgoals && self.sub_goal(state).is_some())
    }
}

fn backtrack_hier<S: Clone>(
    tree: &SearchTree<S, usize, Payload<S>>,
    id: NodeId,
    ga: GaId,
    actions: &[ActionRef],
) -> HierPlan<S> {
    let path = tree.path(id);
    let start = tree.node(path[0]).state.clone();
    let steps = path[1..]
        .iter()
        .map(|&n| {
            let node = tree.node(n);
            let edge = node.incoming.as_ref().unwrap();
            HierStep { slot: edge.action, action: actions[edge.action], to: node.state.clone(), reward: edge.reward, sub: edge.payload.clone() }
        })
        .collect();
    HierPlan { ga, start, steps }
}

/// Invoke generalized action `ga` from `start` and return its next states.
pub fn rtp_plan<W: WorldModel>(
    world: &W,
    hierarchy: &Hierarchy<W::State>,
    ga: GaId,
    start: &W::State,
) -> Result<GaResult<W::State>, RtpError<W::State>> {
    plan_ga(world, hierarchy, ga, start, &[], 0)
}

fn plan_ga<W: WorldModel>(
    world: &W,
    hierarchy: &Hierarchy<W::State>,
    ga_id: GaId,
    start: &W::State,
    chain: &[GaId],
    level: usize,
) -> Result<GaResult<W::State>, RtpError<W::State>> {
    let ga = &hierarchy.gas[ga_id];
    if level >= hierarchy.max_levels {
        return Err(RtpError::DepthLimit(hierarchy.max_levels));
    }
    let actions = ga.action_list(start);
    let names = |ids: &[GaId]| ids.iter().map(|&g| hierarchy.gas[g].id.clone()).collect::<Vec<_>>();
    if chain.contains(&ga_id) {
        return Err(RtpError::RecursionGuard { ga: ga.id.clone(), chain: names(chain) });
    }
    for a in &actions {
        if let ActionRef::General(g) = a {
            if *g == ga_id || chain.contains(g) {
                let mut full = chain.to_vec();
                full.push(ga_id);
                return Err(RtpError::RecursionGuard { ga: hierarchy.gas[*g].id.clone(), chain: names(&full) });
            }
        }
    }

    let mut trivial = GaResult::empty();
    if world.is_goal(start) || (ga.sub_goal)(start, start).is_some() {
        let tag = if world.is_goal(start) { ResultTag::GlobalGoal } else { ResultTag::SubGoal((ga.sub_goal)(start, start).unwrap()) };
        let plan = Arc::new(HierPlan { ga: ga_id, start: start.clone(), steps: Vec::new() });
        trivial.next_states.push(GaOutcome { state: start.clone(), reward: 0.0, tag, plan });
        return Ok(trivial);
    }

    if ga.greedy_only {
        return greedy_rollout(world, hierarchy, ga_id, start, chain, level);
    }

    let mut domain = GaDomain {
        world,
        hierarchy,
        ga_id,
        root: start.clone(),
        chain: chain.to_vec(),
        level,
        actions,
        acc: GaResult::empty(),
        cache: HashMap::new(),
        error: None,
    };
    let out = run_search(&mut domain, start.clone(), &ga.params);
    if let Some(e) = domain.error.take() {
        return Err(e);
    }
    let mut result = domain.acc;
    result.levels[0] = out.stats.clone();
    result.replace_log.extend_from_slice(&out.replace_log);
    result.top_trace = out.trace;
    if hierarchy.audit && out.tree.is_continuous() {
        for (id, node) in out.tree.nodes() {
            result.spacing_violations += out.tree.find(world, &node.state).iter().filter(|&&m| m != id).count() as u64;
        }
        result.spacing_violations += out.replace_log.iter().filter(|e| !(e.new > e.old)).count() as u64;
    }
    let tree = &out.tree;

    // Best node per descriptor.
    let mut best: BTreeMap<ResultTag, NodeId> = BTreeMap::new();
    for (id, node) in tree.nodes() {
        if id == SearchTree::<(), (), ()>::ROOT {
            continue;
        }
        let tag = if world.is_goal(&node.state) {
            ResultTag::GlobalGoal
        } else if let Some(k) = (ga.sub_goal)(start, &node.state) {
            ResultTag::SubGoal(k)
        } else {
            continue;
        };
        if best.get(&tag).is_none_or(|&b| node.reward > tree.node(b).reward) {
            best.insert(tag, id);
        }
    }
    if !ga.return_multiple_subgoals {
        // Keep global goals and the single best sub-goal.
        let top = best
            .iter()
            .filter(|(t, _)| matches!(t, ResultTag::SubGoal(_)))
            .max_by(|a, b| tree.node(*a.1).reward.total_cmp(&tree.node(*b.1).reward).then(b.1.cmp(a.1)))
            .map(|(t, _)| *t);
        best.retain(|t, _| *t == ResultTag::GlobalGoal || Some(*t) == top);
    }
    let mut picked: Vec<(ResultTag, NodeId)> = best.into_iter().collect();
    if ga.return_boundary_states {
        for &n in &out.boundary {
            if n != SearchTree::<(), (), ()>::ROOT && tree.contains(n) && !picked.iter().any(|&(_, p)| p == n) {
                picked.push((ResultTag::Boundary, n));
            }
        }
    }
    for (tag, id) in picked {
        let plan = Arc::new(backtrack_hier(tree, id, ga_id, &domain.actions));
        let node = tree.node(id);
        result.next_states.push(GaOutcome { state: node.state.clone(), reward: node.reward, tag, plan });
    }
    result.stats = sum_levels(&result.levels, out.stats.tree_size);
    if hierarchy.trace {
        result.trace.push(HierTraceRecord {
            level,
            ga: ga.id.clone(),
            root: world.encode(start).to_hex(),
            results: result.next_states.iter().map(|o| o.tag).collect(),
            stats: out.stats.clone(),
            error: None,
        });
    }
    let has_goal_or_sub = result.next_states.iter().any(|o| o.tag != ResultTag::Boundary);
    if out.budget_exceeded && !has_goal_or_sub {
        return Err(RtpError::BudgetExceeded { limit: ga.params.max_tree_size, partial: Box::new(result) });
    }
    if result.next_states.is_empty() {
        return Err(RtpError::NoSolution(Box::new(result)));
    }
    Ok(result)
}

fn sum_levels(levels: &[SearchStats], tree_size: u64) -> SearchStats {
    let mut total = SearchStats::default();
    for l in levels {
        total.absorb(l);
    }
    total.tree_size = tree_size;
    total
}

/// Argmax rollout of the action's policy, no branching. Stops at a
/// sub-goal, a global goal, a repeated state, a crash or the depth cap.
fn greedy_rollout<W: WorldModel>(
    world: &W,
    hierarchy: &Hierarchy<W::State>,
    ga_id: GaId,
    start: &W::State,
    chain: &[GaId],
    level: usize,
) -> Result<GaResult<W::State>, RtpError<W::State>> {
    let ga = &hierarchy.gas[ga_id];
    let mut domain = GaDomain {
        world,
        hierarchy,
        ga_id,
        root: start.clone(),
        chain: chain.to_vec(),
        level,
        actions: ga.action_list(start),
        acc: GaResult::empty(),
        cache: HashMap::new(),
        error: None,
    };
    let mut stats = SearchStats::default();
    let mut steps: Vec<HierStep<W::State>> = Vec::new();
    let mut state = start.clone();
    let mut visited = std::collections::HashSet::from([world.encode(start)]);
    let limit = ga.params.max_depth.min(ga.params.max_tree_size);
    let mut crashed = false;
    let mut tag = None;
    for _ in 0..limit {
        let slots = domain.slots(&state);
        let Some(slot) = ga.policy.greedy(start, &state, &slots) else { break };
        stats.frontier_pops += 1;
        stats.nodes_expanded += 1;
        let next = match domain.expand(&state, slot, &mut stats) {
            Expanded::Forbidden => {
                stats.forbidden += 1;
                crashed = true;
                break;
            }
            Expanded::Children(children) => {
                // Prefer a goal, then a sub-goal, then the best reward.
                children.into_iter().max_by(|a, b| {
                    let rank = |c: &Child<W::State, Payload<W::State>>| {
                        (world.is_goal(&c.state) as u8, domain.sub_goal(&c.state).is_some() as u8)
                    };
                    rank(a).cmp(&rank(b)).then(a.reward.total_cmp(&b.reward))
                })
            }
        };
        if let Some(e) = domain.error.take() {
            return Err(e);
        }
        let Some(child) = next else { break };
        if !visited.insert(world.encode(&child.state)) {
            break;
        }
        steps.push(HierStep { slot, action: domain.actions[slot], to: child.state.clone(), reward: child.reward, sub: child.payload });
        state = child.state;
        stats.nodes_created += 1;
        if world.is_goal(&state) {
            tag = Some(ResultTag::GlobalGoal);
            break;
        }
        if let Some(k) = domain.sub_goal(&state) {
            tag = Some(ResultTag::SubGoal(k));
            break;
        }
    }
    let mut result = domain.acc;
    stats.tree_size = steps.len() as u64 + 1;
    result.levels[0] = stats.clone();
    result.stats = sum_levels(&result.levels, stats.tree_size);
    let tag = match tag {
        Some(t) => Some(t),
        None if crashed && ga.return_boundary_states && !steps.is_empty() => Some(ResultTag::Boundary),
        None => None,
    };
    if hierarchy.trace {
        result.trace.push(HierTraceRecord {
            level,
            ga: ga.id.clone(),
            root: world.encode(start).to_hex(),
            results: tag.into_iter().collect(),
            stats,
            error: None,
        });
    }
    match tag {
        Some(tag) => {
            let reward = steps.iter().map(|s| s.reward).sum();
            let plan = Arc::new(HierPlan { ga: ga_id, start: start.clone(), steps });
            result.next_states.push(GaOutcome { state, reward, tag, plan });
            Ok(result)
        }
        None => Err(RtpError::NoSolution(Box::new(result))),
    }
}

/// A solved top-level problem.
#[derive(Debug, Clone)]
pub struct RtpSolution<S> {
    pub plan: Arc<HierPlan<S>>,
    pub flat: Plan<S>,
    pub reward: f64,
    pub stats: SearchStats,
    pub levels: Vec<SearchStats>,
    pub result: GaResult<S>,
}

/// Run the root action and return the best plan to a global goal.
pub fn rtp_solve<W: WorldModel>(
    world: &W,
    hierarchy: &Hierarchy<W::State>,
    start: &W::State,
) -> Result<RtpSolution<W::State>, RtpError<W::State>> {
    let result = rtp_plan(world, hierarchy, hierarchy.root, start)?;
    let best = result
        .next_states
        .iter()
        .filter(|o| o.tag == ResultTag::GlobalGoal)
        .max_by(|a, b| a.reward.total_cmp(&b.reward))
        .cloned();
    match best {
        Some(goal) => Ok(RtpSolution {
            flat: goal.plan.flatten(),
            plan: goal.plan,
            reward: goal.reward,
            stats: result.stats.clone(),
            levels: result.levels.clone(),
            result,
        }),
        None => Err(RtpError::NoSolution(Box::new(result))),
    }
}

/// Distinct states (by encoding) from which a traced expansion hit a
/// Forbidden outcome, in discovery order.
pub fn collect_boundary_states(trace: &[TraceRecord]) -> Vec<String> {
    let mut seen = std::collections::HashSet::new();
    trace
        .iter()
        .filter(|t| t.outcome.iter().any(|o| o == "forbidden"))
        .filter(|t| seen.insert(t.state.clone()))
        .map(|t| t.state.clone())
        .collect()
}

#[derive(Debug, Error, PartialEq)]
pub enum BinError {
    #[error("range [{0}, {1}] is degenerate")]
    DegenerateRange(f64, f64),
    #[error("need at least 2 bins, got {0}")]
    TooFewBins(usize),
}

/// Uniform bin centres spanning `[lo, hi]` inclusive.
pub fn bin_actions(lo: f64, hi: f64, n_bins: usize) -> Result<ActionTable, BinError> {
    if n_bins < 2 {
        return Err(BinError::TooFewBins(n_bins));
    }
    if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
        return Err(BinError::DegenerateRange(lo, hi));
    }
    let step = (hi - lo) / (n_bins - 1) as f64;
    let centres: Vec<f64> = (0..n_bins)
        .map(|i| if i + 1 == n_bins { hi } else { lo + i as f64 * step })
        .map(|c| (c * 1e12).round() / 1e12)
        .collect();
    Ok(ActionTable { labels: centres.iter().map(|c| format!("{c}")).collect(), params: centres.into_iter().map(|c| vec![c]).collect() })
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::graph::GraphWorld;
    use crate::model::replay;
    use crate::policy::uniform_policy;

    /// Line 0..=9 with moves left/right, reward -1 per step, goal 9.
    /// Level 1: hop(k) reaches k from anywhere within 3 cells.
    fn line_world() -> GraphWorld {
        let adjacency = (0..10usize)
            .map(|i| {
                let mut v = Vec::new();
                v.push((i.saturating_sub(1), -1.0));
                v.push(((i + 1).min(9), -1.0));
                v
            })
            .collect();
        GraphWorld::new(adjacency, vec![9])
    }

    fn line_hierarchy(multi: bool) -> Hierarchy<usize> {
        let prims = vec![ActionRef::Primitive(PrimitiveAction(0)), ActionRef::Primitive(PrimitiveAction(1))];
        let mut gas = Vec::new();
        for k in 0..10usize {
            let mut ga = GeneralizedAction::new(
                format!("hop({k})"),
                "hop",
                prims.clone(),
                Arc::new(move |_: &usize, s: &usize| (*s == k).then_some(0)),
                rootless(uniform_policy(2).unwrap()),
                PlannerConfig::optimal().with_budget(50),
            );
            ga.available = Some(Arc::new(move |s: &usize| s.abs_diff(k) <= 3 && *s != k));
            ga.features = Some(Arc::new(move |_: &usize, s: &usize| vec![*s as f64 - k as f64]));
            gas.push(ga);
        }
        let hops: Vec<ActionRef> = (0..10).map(ActionRef::General).collect();
        let mut top = GeneralizedAction::new(
            "top",
            "top",
            hops,
            Arc::new(|_: &usize, _: &usize| None),
            rootless(uniform_policy(10).unwrap()),
            PlannerConfig::optimal(),
        );
        top.return_multiple_subgoals = multi;
        gas.push(top);
        Hierarchy::new(gas, 10)
    }

    #[test]
    fn two_level_line_reaches_goal_and_replays() {
        let world = line_world();
        let h = line_hierarchy(false);
        let sol = rtp_solve(&world, &h, &0).unwrap();
        assert_eq!(sol.reward, -9.0);
        assert!(replay(&sol.flat, &world, &0).is_valid());
        assert_eq!(sol.plan.depth(), 2);
        assert!(sol.levels.len() == 2 && sol.levels[1].nodes_expanded > 0);
    }

    #[test]
    fn subgoal_at_start_returns_trivial_result() {
        let world = line_world();
        let h = line_hierarchy(false);
        let r = rtp_plan(&world, &h, 4, &4).unwrap();
        assert_eq!(r.next_states.len(), 1);
        assert_eq!(r.next_states[0].state, 4);
        assert_eq!(r.next_states[0].reward, 0.0);
        assert_eq!(r.next_states[0].tag, ResultTag::SubGoal(0));
        assert!(r.next_states[0].plan.steps.is_empty());
    }

    #[test]
    fn self_reference_is_a_recursion_error() {
        let world = line_world();
        let mut h = line_hierarchy(false);
        h.gas[3].actions.push(ActionRef::General(3));
        assert!(matches!(rtp_plan(&world, &h, 3, &0), Err(RtpError::RecursionGuard { .. })));
        let mut h = line_hierarchy(false);
        h.gas[3].actions.push(ActionRef::General(10));
        assert!(matches!(rtp_solve(&world, &h, &0), Err(RtpError::RecursionGuard { .. })));
    }

    #[test]
    fn failing_subplanner_marks_pair_exhausted() {
        let world = line_world();
        let mut h = line_hierarchy(false);
        h.gas[5].params = PlannerConfig::optimal().with_budget(1);
        let sol = rtp_solve(&world, &h, &0).unwrap();
        assert!(sol.levels[0].exhausted_actions > 0);
        assert!(replay(&sol.flat, &world, &0).is_valid());
    }

    #[test]
    fn bins_span_the_range() {
        let t = bin_actions(-1.0, 1.0, 21).unwrap();
        let c: Vec<f64> = t.params.iter().map(|p| p[0]).collect();
        assert_eq!(c.len(), 21);
        assert_eq!(c[0], -1.0);
        assert_eq!(c[1], -0.9);
        assert_eq!(c[10], 0.0);
        assert_eq!(c[20], 1.0);
        let t = bin_actions(-2.0, 2.0, 5).unwrap();
        assert_eq!(t.params, vec![vec![-2.0], vec![-1.0], vec![0.0], vec![1.0], vec![2.0]]);
        assert_eq!(bin_actions(0.0, 0.0, 5), Err(BinError::DegenerateRange(0.0, 0.0)));
        assert_eq!(bin_actions(0.0, 1.0, 1), Err(BinError::TooFewBins(1)));
    }

    #[test]
    fn boundary_collection_dedups() {
        let rec = |s: &str, o: &str| TraceRecord {
            pop: 0,
            state: s.into(),
            action: "a".into(),
            score: 1.0,
            outcome: vec![o.into()],
            tree_size: 1,
        };
        let trace = vec![rec("aa", "added"), rec("bb", "forbidden"), rec("bb", "forbidden"), rec("cc", "forbidden")];
        assert_eq!(collect_boundary_states(&trace), vec!["bb".to_string(), "cc".to_string()]);
        assert!(collect_boundary_states(&trace[..1]).is_empty());
    }
}
