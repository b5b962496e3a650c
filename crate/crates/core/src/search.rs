//! Policy-ordered forward search over a [`SearchTree`].
//!
//! One engine drives both planners. A [`Domain`] supplies scored candidate
//! actions and expands `(state, action)` pairs into zero or more children;
//! the engine owns the frontier loop, child integration, subtree
//! reattachment, continuous replacement, budgets and bookkeeping.

use std::collections::HashSet;
use std::fmt::Debug;

use serde::{Deserialize, Serialize};

use crate::model::{StateId, WorldModel};
use crate::tree::{Incoming, NodeId, SearchTree};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Keep improving paths to every state by reattachment.
    Optimal,
    /// Stop at the first goal and never reattach.
    Feasible,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardRegime {
    /// Every transition reward is strictly negative (goal entry excepted).
    /// Reattachment can never form a loop; the engine only audits it.
    AllNegative,
    /// Rewards of either sign. Reattaching an ancestor is refused.
    Mixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlannerConfig {
    pub max_tree_size: usize,
    pub max_depth: usize,
    pub mode: Mode,
    pub reward_regime: RewardRegime,
    pub stop_on_first_goal: bool,
    /// Path predecessors added to each boundary state.
    pub boundary_predecessors: usize,
    /// Record per-expansion trace records and every `R` update.
    pub trace: bool,
    /// Check frontier and reward invariants after every expansion.
    pub check_invariants: bool,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            max_tree_size: 100_000,
            max_depth: usize::MAX,
            mode: Mode::Optimal,
            reward_regime: RewardRegime::AllNegative,
            stop_on_first_goal: false,
            boundary_predecessors: 0,
            trace: false,
            check_invariants: false,
        }
    }
}

impl PlannerConfig {
    pub fn optimal() -> Self {
        Self::default()
    }

    pub fn feasible() -> Self {
        Self { mode: Mode::Feasible, stop_on_first_goal: true, ..Self::default() }
    }

    pub fn with_budget(mut self, max_tree_size: usize) -> Self {
        self.max_tree_size = max_tree_size;
        self
    }

    pub fn with_depth(mut self, max_depth: usize) -> Self {
        self.max_depth = max_depth;
        self
    }

    pub fn with_regime(mut self, regime: RewardRegime) -> Self {
        self.reward_regime = regime;
        self
    }

    pub fn traced(mut self) -> Self {
        self.trace = true;
        self
    }

    pub(crate) fn stops_early(&self) -> bool {
        self.stop_on_first_goal || self.mode == Mode::Feasible
    }
}

/// Operation counters. Hierarchical searches sum these across levels.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchStats {
    pub frontier_pops: u64,
    pub nodes_expanded: u64,
    /// Primitive transition function calls.
    pub transitions: u64,
    pub tree_size: u64,
    pub nodes_created: u64,
    pub reattachments: u64,
    pub replacements: u64,
    pub rejected_children: u64,
    pub guard_rejections: u64,
    /// Reattachments that would have closed a loop in the all-negative
    /// regime. Always zero when rewards really are negative.
    pub loop_violations: u64,
    pub depth_rejections: u64,
    pub ancestor_matches: u64,
    pub forbidden: u64,
    pub exhausted_actions: u64,
    pub sub_invocations: u64,
}

impl SearchStats {
    /// Add another search's counters. `tree_size` keeps this search's value.
    pub fn absorb(&mut self, other: &SearchStats) {
        self.frontier_pops += other.frontier_pops;
        self.nodes_expanded += other.nodes_expanded;
        self.transitions += other.transitions;
        self.nodes_created += other.nodes_created;
        self.reattachments += other.reattachments;
        self.replacements += other.replacements;
        self.rejected_children += other.rejected_children;
        self.guard_rejections += other.guard_rejections;
        self.loop_violations += other.loop_violations;
        self.depth_rejections += other.depth_rejections;
        self.ancestor_matches += other.ancestor_matches;
        self.forbidden += other.forbidden;
        self.exhausted_actions += other.exhausted_actions;
        self.sub_invocations += other.sub_invocations;
    }
}

/// Change of the best-known `R` of a state. `old` is `None` on insertion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardEvent {
    pub state: StateId,
    pub old: Option<f64>,
    pub new: f64,
}

/// A continuous replacement: `R` of the removed node and of its replacement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplaceEvent {
    pub old: f64,
    pub new: f64,
}

/// One expansion in a traced search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub pop: u64,
    pub state: String,
    pub action: String,
    pub score: f64,
    pub outcome: Vec<String>,
    pub tree_size: usize,
}

pub(crate) struct Child<S, P> {
    pub state: S,
    pub reward: f64,
    pub payload: P,
    /// Never expand this child, whatever the domain's default.
    pub terminal: bool,
}

pub(crate) enum Expanded<S, P> {
    Forbidden,
    Children(Vec<Child<S, P>>),
}

pub(crate) trait Domain {
    type World: WorldModel;
    type Action: Copy + PartialEq + Debug;
    type Payload: Clone;

    fn world(&self) -> &Self::World;

    /// Scored `U(s)` in a fixed order.
    fn candidates(&mut self, state: &<Self::World as WorldModel>::State) -> Vec<(Self::Action, f64)>;

    fn expand(
        &mut self,
        state: &<Self::World as WorldModel>::State,
        action: Self::Action,
        stats: &mut SearchStats,
    ) -> Expanded<<Self::World as WorldModel>::State, Self::Payload>;

    /// Nodes for which no action is ever expanded.
    fn is_terminal(&self, state: &<Self::World as WorldModel>::State) -> bool;

    /// Reaching this state ends an early-stopping search.
    fn stops_search(&self, state: &<Self::World as WorldModel>::State) -> bool;
}

pub(crate) type DomainTree<D> =
    SearchTree<<<D as Domain>::World as WorldModel>::State, <D as Domain>::Action, <D as Domain>::Payload>;

pub(crate) struct SearchOutcome<D: Domain> {
    pub tree: DomainTree<D>,
    pub stats: SearchStats,
    /// Nodes an action was Forbidden from, plus their configured
    /// predecessors, in discovery order. May name removed nodes.
    pub boundary: Vec<NodeId>,
    pub budget_exceeded: bool,
    pub stopped_at: Option<NodeId>,
    pub reward_log: Vec<RewardEvent>,
    pub replace_log: Vec<ReplaceEvent>,
    pub trace: Vec<TraceRecord>,
}

enum Step {
    Continue,
    Stop(NodeId),
    Budget,
}

struct Engine<'a, D: Domain> {
    domain: &'a mut D,
    cfg: &'a PlannerConfig,
    out: SearchOutcome<D>,
    boundary_seen: HashSet<NodeId>,
}

pub(crate) fn run_search<D: Domain>(
    domain: &mut D,
    root: <D::World as WorldModel>::State,
    cfg: &PlannerConfig,
) -> SearchOutcome<D> {
    let mut tree = SearchTree::new(domain.world(), root.clone(), cfg.max_depth);
    if domain.is_terminal(&root) {
        tree.set_terminal(SearchTree::<(), (), ()>::ROOT, true);
    } else {
        let cands = domain.candidates(&root);
        tree.set_candidates(0, cands);
    }
    let mut engine = Engine {
        cfg,
        out: SearchOutcome {
            tree,
            stats: SearchStats { tree_size: 1, nodes_created: 1, ..Default::default() },
            boundary: Vec::new(),
            budget_exceeded: false,
            stopped_at: None,
            reward_log: Vec::new(),
            replace_log: Vec::new(),
            trace: Vec::new(),
        },
        domain,
        boundary_seen: HashSet::new(),
    };
    if cfg.trace {
        let id = engine.domain.world().encode(&root);
        engine.out.reward_log.push(RewardEvent { state: id, old: None, new: 0.0 });
    }
    engine.run();
    let mut out = engine.out;
    out.stats.tree_size = out.tree.len() as u64;
    out
}

impl<D: Domain> Engine<'_, D> {
    fn run(&mut self) {
        while let Some(exp) = self.out.tree.pop() {
            self.out.stats.frontier_pops += 1;
            let node = self.out.tree.node(exp.node);
            if node.depth >= self.cfg.max_depth {
                continue;
            }
            let state = node.state.clone();
            self.out.stats.nodes_expanded += 1;
            let mut outcomes = Vec::new();
            let step = match self.domain.expand(&state, exp.action, &mut self.out.stats) {
                Expanded::Forbidden => {
                    self.out.stats.forbidden += 1;
                    self.record_boundary(exp.node);
                    outcomes.push("forbidden");
                    Step::Continue
                }
                Expanded::Children(children) if children.is_empty() => {
                    self.out.tree.mark_exhausted(exp.node, exp.action);
                    self.out.stats.exhausted_actions += 1;
                    outcomes.push("exhausted");
                    Step::Continue
                }
                Expanded::Children(children) => {
                    let mut step = Step::Continue;
                    for child in children {
                        step = self.integrate(exp.node, exp.action, child, &mut outcomes);
                        if !matches!(step, Step::Continue) {
                            break;
                        }
                    }
                    step
                }
            };
            if self.cfg.trace {
                let world = self.domain.world();
                self.out.trace.push(TraceRecord {
                    pop: self.out.stats.frontier_pops,
                    state: world.encode(&state).to_hex(),
                    action: format!("{:?}", exp.action),
                    score: exp.score,
                    outcome: outcomes.iter().map(|s| s.to_string()).collect(),
                    tree_size: self.out.tree.len(),
                });
            }
            if self.cfg.check_invariants {
                if let Err(e) = self.out.tree.check_invariants() {
                    panic!("search tree invariant broken after pop {}: {e}", self.out.stats.frontier_pops);
                }
            }
            match step {
                Step::Continue => {}
                Step::Stop(id) => {
                    self.out.stopped_at = Some(id);
                    break;
                }
                Step::Budget => {
                    self.out.budget_exceeded = true;
                    break;
                }
            }
        }
    }

    fn record_boundary(&mut self, id: NodeId) {
        let mut cur = Some(id);
        for _ in 0..=self.cfg.boundary_predecessors {
            let Some(n) = cur else { break };
            if self.boundary_seen.insert(n) {
                self.out.boundary.push(n);
            }
            cur = self.out.tree.node(n).parent;
        }
    }

    fn integrate(
        &mut self,
        parent: NodeId,
        action: D::Action,
        child: Child<<D::World as WorldModel>::State, D::Payload>,
        outcomes: &mut Vec<&'static str>,
    ) -> Step {
        let tree = &self.out.tree;
        let world = self.domain.world();
        let r_new = tree.node(parent).reward + child.reward;
        let matches = tree.find(world, &child.state);
        if matches.is_empty() {
            return self.add(parent, action, child, outcomes);
        }
        let feasible = self.cfg.mode == Mode::Feasible;
        if !tree.is_continuous() {
            let m = matches[0];
            let old = tree.node(m).reward;
            if feasible || r_new <= old {
                self.out.stats.rejected_children += 1;
                outcomes.push("rejected");
                return Step::Continue;
            }
            if tree.is_ancestor(m, parent) {
                match self.cfg.reward_regime {
                    RewardRegime::Mixed => self.out.stats.guard_rejections += 1,
                    RewardRegime::AllNegative => self.out.stats.loop_violations += 1,
                }
                outcomes.push("ancestor");
                return Step::Continue;
            }
            let new_depth = tree.node(parent).depth + 1;
            if tree.subtree_max_depth_at(m, new_depth) > self.cfg.max_depth {
                self.out.stats.depth_rejections += 1;
                outcomes.push("too_deep");
                return Step::Continue;
            }
            let report = self.out.tree.reattach(m, parent, Incoming { action, reward: child.reward, payload: child.payload });
            self.out.stats.reattachments += 1;
            outcomes.push("reattached");
            if self.cfg.trace {
                let world = self.domain.world();
                for u in report.updates {
                    let state = world.encode(&self.out.tree.node(u.node).state);
                    self.out.reward_log.push(RewardEvent { state, old: Some(u.old), new: u.new });
                }
            }
            return Step::Continue;
        }

        if feasible || matches.iter().any(|&m| tree.node(m).reward >= r_new) {
            self.out.stats.rejected_children += 1;
            outcomes.push("rejected");
            return Step::Continue;
        }
        if matches.iter().any(|&m| tree.is_ancestor(m, parent)) {
            self.out.stats.ancestor_matches += 1;
            outcomes.push("ancestor");
            return Step::Continue;
        }
        let mut old_best = f64::NEG_INFINITY;
        for m in matches {
            if self.out.tree.contains(m) {
                let old = self.out.tree.node(m).reward;
                old_best = old_best.max(old);
                self.out.replace_log.push(ReplaceEvent { old, new: r_new });
                self.out.tree.remove_subtree(m);
            }
        }
        self.out.stats.replacements += 1;
        outcomes.push("replaced");
        if self.cfg.trace {
            let state = self.domain.world().encode(&child.state);
            self.out.reward_log.push(RewardEvent { state, old: Some(old_best), new: r_new });
        }
        self.add(parent, action, child, outcomes)
    }

    fn add(
        &mut self,
        parent: NodeId,
        action: D::Action,
        child: Child<<D::World as WorldModel>::State, D::Payload>,
        outcomes: &mut Vec<&'static str>,
    ) -> Step {
        if self.out.tree.len() >= self.cfg.max_tree_size {
            outcomes.push("budget");
            return Step::Budget;
        }
        let world = self.domain.world();
        let terminal = child.terminal || self.domain.is_terminal(&child.state);
        let stops = self.cfg.stops_early() && self.domain.stops_search(&child.state);
        let state = child.state.clone();
        let id = self.out.tree.add_child(world, parent, child.state, Incoming { action, reward: child.reward, payload: child.payload });
        self.out.stats.nodes_created += 1;
        if self.cfg.trace {
            let encoded = world.encode(&state);
            self.out.reward_log.push(RewardEvent { state: encoded, old: None, new: self.out.tree.node(id).reward });
        }
        if terminal {
            self.out.tree.set_terminal(id, true);
        } else {
            let cands = self.domain.candidates(&state);
            self.out.tree.set_candidates(id, cands);
        }
        outcomes.push("added");
        if stops {
            Step::Stop(id)
        } else {
            Step::Continue
        }
    }
}
