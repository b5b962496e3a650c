//! Non-hierarchical tree planner and its exhaustive oracle.

use std::collections::{HashMap, HashSet};

use thiserror::Error;

use crate::model::{Outcome, Plan, PlanStep, PrimitiveAction, StateId, WorldModel};
use crate::policy::StochasticPolicy;
use crate::search::{
    run_search, Child, Domain, Expanded, PlannerConfig, ReplaceEvent, RewardEvent, RewardRegime, SearchStats,
    TraceRecord,
};
use crate::tree::{Expansion, NodeId, SearchTree};

/// Result of a flat search.
#[derive(Debug, Clone)]
pub struct TpResult<S> {
    /// Goal states in the final tree with their `R`.
    pub goal_leaves: Vec<(S, f64)>,
    /// Backtracked plan per goal leaf, same order.
    pub plans: Vec<Plan<S>>,
    pub boundary_states: Vec<S>,
    /// Every state in the final tree with its `R`.
    pub state_rewards: Vec<(S, f64)>,
    pub stats: SearchStats,
    pub reward_log: Vec<RewardEvent>,
    pub replace_log: Vec<ReplaceEvent>,
    pub trace: Vec<TraceRecord>,
}

impl<S: Clone> TpResult<S> {
    /// Highest-reward goal plan; the first found on ties.
    pub fn best_plan(&self) -> Option<&Plan<S>> {
        let mut best: Option<&Plan<S>> = None;
        for p in &self.plans {
            if best.is_none_or(|b| p.cumulative_reward > b.cumulative_reward) {
                best = Some(p);
            }
        }
        best
    }
}

#[derive(Debug, Error)]
pub enum TpError<S: std::fmt::Debug> {
    #[error("frontier exhausted without reaching a goal")]
    NoSolution(Box<TpResult<S>>),
    #[error("tree size budget of {limit} exceeded")]
    BudgetExceeded { limit: usize, partial: Box<TpResult<S>> },
}

impl<S: std::fmt::Debug> TpError<S> {
    pub fn partial(&self) -> &TpResult<S> {
        match self {
            TpError::NoSolution(r) => r,
            TpError::BudgetExceeded { partial, .. } => partial,
        }
    }
}

struct FlatDomain<'a, W, P> {
    world: &'a W,
    policy: &'a P,
}

impl<W: WorldModel, P: StochasticPolicy<W::State>> Domain for FlatDomain<'_, W, P> {
    type World = W;
    type Action = PrimitiveAction;
    type Payload = ();

    fn world(&self) -> &W {
        self.world
    }

    fn candidates(&mut self, state: &W::State) -> Vec<(PrimitiveAction, f64)> {
        let allowed = self.world.allowed(state);
        let idx: Vec<usize> = allowed.iter().map(|a| a.0).collect();
        let scores = self.policy.scores(state, &idx);
        allowed.into_iter().zip(scores).collect()
    }

    fn expand(&mut self, state: &W::State, action: PrimitiveAction, stats: &mut SearchStats) -> Expanded<W::State, ()> {
        stats.transitions += 1;
        match self.world.transition(action, state) {
            Outcome::Forbidden => Expanded::Forbidden,
            Outcome::Next { state, reward } => {
                Expanded::Children(vec![Child { state, reward, payload: (), terminal: false }])
            }
        }
    }

    fn is_terminal(&self, state: &W::State) -> bool {
        self.world.is_goal(state)
    }

    fn stops_search(&self, state: &W::State) -> bool {
        self.world.is_goal(state)
    }
}

/// Backtrack the primitive plan from the root to `id`.
pub(crate) fn backtrack<S: Clone, P: Clone>(tree: &SearchTree<S, PrimitiveAction, P>, id: NodeId) -> Plan<S> {
    let mut plan = Plan::default();
    for n in tree.path(id).into_iter().skip(1) {
        let node = tree.node(n);
        let edge = node.incoming.as_ref().expect("non-root node has an edge");
        plan.steps.push(PlanStep { action: edge.action, state: node.state.clone(), reward: edge.reward });
        plan.cumulative_reward += edge.reward;
    }
    plan
}

/// Pop the frontier pair maximizing the policy score.
pub fn select_expansion<S: Clone, A: Copy + PartialEq, P: Clone>(tree: &mut SearchTree<S, A, P>) -> Option<Expansion<A>> {
    tree.pop()
}

/// Plan from `start` with policy-ordered expansion.
pub fn tp_plan<W, P>(world: &W, start: &W::State, policy: &P, config: &PlannerConfig) -> Result<TpResult<W::State>, TpError<W::State>>
where
    W: WorldModel,
    P: StochasticPolicy<W::State>,
{
    let mut domain = FlatDomain { world, policy };
    let out = run_search(&mut domain, start.clone(), config);
    let tree = &out.tree;
    let mut result = TpResult {
        goal_leaves: Vec::new(),
        plans: Vec::new(),
        boundary_states: out.boundary.iter().filter(|&&n| tree.contains(n)).map(|&n| tree.node(n).state.clone()).collect(),
        state_rewards: tree.nodes().map(|(_, n)| (n.state.clone(), n.reward)).collect(),
        stats: out.stats.clone(),
        reward_log: out.reward_log.clone(),
        replace_log: out.replace_log.clone(),
        trace: out.trace.clone(),
    };
    for (id, node) in tree.nodes() {
        if world.is_goal(&node.state) {
            result.goal_leaves.push((node.state.clone(), node.reward));
            result.plans.push(backtrack(tree, id));
        }
    }
    if out.budget_exceeded {
        return Err(TpError::BudgetExceeded { limit: config.max_tree_size, partial: Box::new(result) });
    }
    if result.plans.is_empty() {
        return Err(TpError::NoSolution(Box::new(result)));
    }
    Ok(result)
}

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("exhaustive enumeration exceeded {0} path extensions")]
    BudgetExceeded(u64),
}

/// Optimal `R` for every reachable state, computed without the planner.
///
/// All-negative worlds use Bellman-Ford relaxation in layers of path length.
/// Mixed worlds enumerate every loop-free path up to `max_depth` edges.
/// Goal states are never expanded, matching the planner.
pub fn exhaustive_oracle<W: WorldModel>(
    world: &W,
    start: &W::State,
    regime: RewardRegime,
    max_depth: usize,
    max_work: u64,
) -> Result<HashMap<StateId, (W::State, f64)>, OracleError> {
    match regime {
        RewardRegime::AllNegative => bellman_ford(world, start, max_depth, max_work),
        RewardRegime::Mixed => enumerate_paths(world, start, max_depth, max_work),
    }
}

fn successors<W: WorldModel>(world: &W, s: &W::State) -> Vec<(W::State, f64)> {
    if world.is_goal(s) {
        return Vec::new();
    }
    world
        .allowed(s)
        .into_iter()
        .filter_map(|a| match world.transition(a, s) {
            Outcome::Next { state, reward } => Some((state, reward)),
            Outcome::Forbidden => None,
        })
        .collect()
}

fn bellman_ford<W: WorldModel>(
    world: &W,
    start: &W::State,
    max_depth: usize,
    max_work: u64,
) -> Result<HashMap<StateId, (W::State, f64)>, OracleError> {
    let mut best: HashMap<StateId, (W::State, f64)> = HashMap::new();
    best.insert(world.encode(start), (start.clone(), 0.0));
    let mut changed: Vec<StateId> = vec![world.encode(start)];
    let mut work = 0u64;
    let mut layer = 0usize;
    while !changed.is_empty() && layer < max_depth {
        layer += 1;
        let mut next: Vec<StateId> = Vec::new();
        let mut next_seen = HashSet::new();
        let mut updates: Vec<(StateId, W::State, f64)> = Vec::new();
        for id in &changed {
            let (s, r) = best[id].clone();
            for (t, reward) in successors(world, &s) {
                work += 1;
                if work > max_work {
                    return Err(OracleError::BudgetExceeded(max_work));
                }
                updates.push((world.encode(&t), t, r + reward));
            }
        }
        for (tid, t, r) in updates {
            let better = best.get(&tid).is_none_or(|(_, old)| r > *old);
            if better {
                best.insert(tid.clone(), (t, r));
                if next_seen.insert(tid.clone()) {
                    next.push(tid);
                }
            }
        }
        changed = next;
    }
    Ok(best)
}

fn enumerate_paths<W: WorldModel>(
    world: &W,
    start: &W::State,
    max_depth: usize,
    max_work: u64,
) -> Result<HashMap<StateId, (W::State, f64)>, OracleError> {
    struct Walk<'a, W: WorldModel> {
        world: &'a W,
        best: HashMap<StateId, (W::State, f64)>,
        on_path: HashSet<StateId>,
        work: u64,
        max_work: u64,
        max_depth: usize,
    }
    impl<W: WorldModel> Walk<'_, W> {
        fn visit(&mut self, s: &W::State, r: f64, depth: usize) -> Result<(), OracleError> {
            if depth >= self.max_depth {
                return Ok(());
            }
            for (t, reward) in successors(self.world, s) {
                self.work += 1;
                if self.work > self.max_work {
                    return Err(OracleError::BudgetExceeded(self.max_work));
                }
                let tid = self.world.encode(&t);
                if self.on_path.contains(&tid) {
                    continue;
                }
                let rt = r + reward;
                if self.best.get(&tid).is_none_or(|(_, old)| rt > *old) {
                    self.best.insert(tid.clone(), (t.clone(), rt));
                }
                self.on_path.insert(tid.clone());
                self.visit(&t, rt, depth + 1)?;
                self.on_path.remove(&tid);
            }
            Ok(())
        }
    }
    let sid = world.encode(start);
    let mut walk = Walk {
        world,
        best: HashMap::from([(sid.clone(), (start.clone(), 0.0))]),
        on_path: HashSet::from([sid]),
        work: 0,
        max_work,
        max_depth,
    };
    walk.visit(start, 0.0, 0)?;
    Ok(walk.best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::checkerboard::{make_checkerboard, Checkerboard};
    use crate::env::graph::GraphWorld;
    use crate::env::GridPos;
    use crate::model::{replay, Replay};
    use crate::policy::{uniform_policy, FnPolicy, RandomOrderPolicy};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn assert_matches_oracle<W: WorldModel>(world: &W, start: &W::State, result: &TpResult<W::State>) {
        let oracle = exhaustive_oracle(world, start, RewardRegime::AllNegative, usize::MAX, 10_000_000).unwrap();
        assert_eq!(result.state_rewards.len(), oracle.len());
        for (s, r) in &result.state_rewards {
            assert_eq!(oracle[&world.encode(s)].1, *r, "state {s:?}");
        }
    }

    #[test]
    fn full_search_on_8x8_checkerboard_matches_oracle() {
        let world = make_checkerboard(0, 8, RewardRegime::AllNegative);
        let policy = uniform_policy(4).unwrap();
        let cfg = PlannerConfig { check_invariants: true, ..PlannerConfig::optimal() };
        let result = tp_plan(&world, &world.start, &policy, &cfg).unwrap();
        assert_eq!(result.stats.tree_size, 64);
        assert_matches_oracle(&world, &world.start, &result);
        let plan = &result.plans[0];
        assert_eq!(replay(plan, &world, &world.start), Replay::Valid { final_state: world.goal, reward: plan.cumulative_reward });
    }

    #[test]
    fn start_at_goal_returns_empty_plan() {
        let world = make_checkerboard(1, 4, RewardRegime::AllNegative);
        let result = tp_plan(&world, &world.goal, &uniform_policy(4).unwrap(), &PlannerConfig::optimal()).unwrap();
        assert_eq!(result.plans, vec![Plan::default()]);
        assert_eq!(result.goal_leaves, vec![(world.goal, 0.0)]);
    }

    /// 5x5 grid with rewards in [-1, 0), checked against value iteration
    /// over the 25 states under several expansion orders.
    #[test]
    fn five_by_five_matches_value_iteration() {
        for seed in 0..20u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
            let rewards: Vec<f64> = (0..25).map(|_| -rng.random_range(1..=1024) as f64 / 1024.0).collect();
            let world = Checkerboard::new(5, 5, rewards.clone(), GridPos::new(0, 0), GridPos::new(4, 4), RewardRegime::AllNegative);

            // Value iteration: V(s) = max over predecessors of V(p) + r(s).
            let mut v = vec![f64::NEG_INFINITY; 25];
            v[0] = 0.0;
            for _ in 0..25 {
                let prev = v.clone();
                for i in 0..25 {
                    let (x, y) = ((i % 5) as i32, (i / 5) as i32);
                    if (x, y) == (4, 4) || prev[i] == f64::NEG_INFINITY {
                        continue;
                    }
                    for (dx, dy) in [(-1, 0), (1, 0), (0, -1), (0, 1)] {
                        let (nx, ny) = (x + dx, y + dy);
                        if (0..5).contains(&nx) && (0..5).contains(&ny) {
                            let j = (ny * 5 + nx) as usize;
                            v[j] = v[j].max(prev[i] + rewards[j]);
                        }
                    }
                }
            }
            for order in 0..3u64 {
                let key = |s: &GridPos| vec![s.x as u8, s.y as u8];
                let result = if order == 0 {
                    tp_plan(&world, &world.start, &uniform_policy(4).unwrap(), &PlannerConfig::optimal()).unwrap()
                } else {
                    let p = RandomOrderPolicy::new(4, seed * 31 + order, key);
                    tp_plan(&world, &world.start, &p, &PlannerConfig::optimal()).unwrap()
                };
                for (s, r) in &result.state_rewards {
                    let i = (s.y * 5 + s.x) as usize;
                    assert!((v[i] - r).abs() < 1e-12, "seed {seed} order {order} cell {s:?}: {r} vs {}", v[i]);
                }
                assert_eq!(result.state_rewards.len(), 25);
            }
        }
    }

    #[test]
    fn diamond_moves_subtree_by_exact_delta() {
        // a=0 -> b=1 -> d=3 -> e=4, a -> c=2 -> d; the c path is better but
        // b is expanded first.
        let world = GraphWorld::new(
            vec![vec![(1, -1.0), (2, -2.0)], vec![(3, -8.0)], vec![(3, -1.0)], vec![(4, -1.0)], vec![]],
            vec![4],
        );
        let policy = FnPolicy::new(2, |s: &usize| if *s == 0 { vec![0.9, 0.1] } else { vec![0.5, 0.5] });
        let result = tp_plan(&world, &0, &policy, &PlannerConfig::optimal().traced()).unwrap();
        assert_eq!(result.stats.reattachments, 1);
        let r: HashMap<usize, f64> = result.state_rewards.iter().copied().collect();
        assert_eq!(r[&3], -3.0);
        assert_eq!(r[&4], -4.0);
        let moved: Vec<_> = result.reward_log.iter().filter(|e| e.old.is_some()).collect();
        assert_eq!(moved.len(), 2);
        for e in moved {
            assert_eq!(e.new - e.old.unwrap(), 6.0);
        }
        assert_eq!(result.plans[0].steps.iter().map(|s| s.state).collect::<Vec<_>>(), vec![2, 3, 4]);
    }

    #[test]
    fn rejected_action_is_retried_after_reattachment() {
        // 0 -a-> 1 -> 3 (bad), 0 -> 2 -> 3 (good). From 3, the edge to 4
        // is first rejected (4 was reached cheaply via 5), then retried
        // once 3 improves.
        let world = GraphWorld::new(
            vec![
                vec![(1, -1.0), (2, -4.0), (5, -1.0)],
                vec![(3, -10.0)],
                vec![(3, -1.0)],
                vec![(4, -1.0)],
                vec![],
                vec![(4, -10.0)],
            ],
            vec![4],
        );
        let policy = FnPolicy::new(3, |s: &usize| match s {
            0 => vec![0.5, 0.1, 0.4],
            _ => vec![1.0 / 3.0; 3],
        });
        let result = tp_plan(&world, &0, &policy, &PlannerConfig { check_invariants: true, ..PlannerConfig::optimal() }).unwrap();
        assert_matches_oracle(&world, &0, &result);
        assert_eq!(result.goal_leaves, vec![(4, -6.0)]);
    }

    #[test]
    fn peaked_policy_pops_the_greedy_chain_first() {
        let world = make_checkerboard(3, 8, RewardRegime::AllNegative);
        // Prefer "right" everywhere: the greedy chain runs along y = 0.
        let policy = FnPolicy::new(4, |_: &GridPos| vec![0.02, 0.9, 0.03, 0.05]);
        let mut cfg = PlannerConfig::optimal().traced();
        cfg.max_tree_size = 64;
        let result = tp_plan(&world, &world.start, &policy, &cfg).unwrap();
        let first: Vec<_> = result.trace.iter().take(5).map(|t| (t.state.clone(), t.action.clone())).collect();
        let expected: Vec<_> = (0..5).map(|x| (world.encode(&GridPos::new(x, 0)).to_hex(), "PrimitiveAction(1)".to_string())).collect();
        assert_eq!(first, expected);
    }

    #[test]
    fn higher_score_pops_first() {
        let world = GraphWorld::new(vec![vec![(1, -1.0), (2, -1.0)], vec![], vec![]], vec![1, 2]);
        let policy = FnPolicy::new(2, |_: &usize| vec![0.4, 0.6]);
        let result = tp_plan(&world, &0, &policy, &PlannerConfig::optimal().traced()).unwrap();
        assert_eq!(result.trace[0].action, "PrimitiveAction(1)");
    }

    #[test]
    fn uniform_policy_gives_breadth_order_on_3x3() {
        let world = Checkerboard::new(3, 3, vec![-1.0; 9], GridPos::new(0, 0), GridPos::new(2, 2), RewardRegime::AllNegative);
        let result = tp_plan(&world, &world.start, &uniform_policy(4).unwrap(), &PlannerConfig::optimal().traced()).unwrap();
        let depths: Vec<usize> = result
            .trace
            .iter()
            .map(|t| {
                let s = result.state_rewards.iter().find(|(s, _)| world.encode(s).to_hex() == t.state).unwrap();
                (s.0.x + s.0.y) as usize
            })
            .collect();
        assert!(depths.windows(2).all(|w| w[0] <= w[1]), "{depths:?}");
    }

    #[test]
    fn feasible_mode_returns_the_first_goal() {
        let world = make_checkerboard(5, 8, RewardRegime::AllNegative);
        let result = tp_plan(&world, &world.start, &uniform_policy(4).unwrap(), &PlannerConfig::feasible()).unwrap();
        assert_eq!(result.stats.reattachments, 0);
        assert_eq!(result.plans.len(), 1);
        assert!(replay(&result.plans[0], &world, &world.start).is_valid());
    }

    #[test]
    fn budget_returns_partial_result() {
        let world = make_checkerboard(2, 8, RewardRegime::AllNegative);
        let err = tp_plan(&world, &world.start, &uniform_policy(4).unwrap(), &PlannerConfig::optimal().with_budget(10)).unwrap_err();
        match err {
            TpError::BudgetExceeded { limit, partial } => {
                assert_eq!(limit, 10);
                assert_eq!(partial.stats.tree_size, 10);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unreachable_goal_is_no_solution() {
        let world = GraphWorld::new(vec![vec![(1, -1.0)], vec![], vec![]], vec![2]);
        assert!(matches!(tp_plan(&world, &0, &uniform_policy(1).unwrap(), &PlannerConfig::optimal()), Err(TpError::NoSolution(_))));
    }

    #[test]
    fn oracle_on_single_state_world() {
        let world = GraphWorld::new(vec![vec![]], vec![]);
        let oracle = exhaustive_oracle(&world, &0, RewardRegime::AllNegative, usize::MAX, 10).unwrap();
        assert_eq!(oracle.len(), 1);
        assert_eq!(oracle[&world.encode(&0)].1, 0.0);
    }

    #[test]
    fn two_by_two_positive_longest_path_visits_every_cell() {
        let world = make_checkerboard(0, 2, RewardRegime::Mixed);
        let oracle = exhaustive_oracle(&world, &world.start, RewardRegime::Mixed, 16, 1_000_000).unwrap();
        assert_eq!(oracle[&world.encode(&world.goal)].1, 3.0);
        let cfg = PlannerConfig::optimal().with_regime(RewardRegime::Mixed).with_depth(16);
        let result = tp_plan(&world, &world.start, &uniform_policy(4).unwrap(), &cfg).unwrap();
        assert_eq!(result.goal_leaves[0].1, 3.0);
    }

    #[test]
    fn boundary_states_record_forbidden_origins() {
        let world = GraphWorld::new(vec![vec![(1, -1.0)], vec![(3, 0.0), (2, -1.0)], vec![], vec![]], vec![2]).with_forbidden(&[3]);
        let result = tp_plan(&world, &0, &uniform_policy(2).unwrap(), &PlannerConfig::optimal()).unwrap();
        assert_eq!(result.boundary_states, vec![1]);

        let world = make_checkerboard(0, 3, RewardRegime::AllNegative);
        let result = tp_plan(&world, &world.start, &uniform_policy(4).unwrap(), &PlannerConfig::optimal()).unwrap();
        assert!(result.boundary_states.is_empty());
    }
}
