//! Search tree shared by the flat and recursive planners.
//!
//! The tree keeps at most one node per state, the per-node set of actions
//! still available for expansion (`V(s)`), and a global frontier over all
//! available `(node, action)` pairs ordered by cached policy score. Edges are
//! stored on the child as its incoming action, so a single action may own
//! several children (generalized actions return state sets).

use std::cmp::Ordering;
use std::collections::{BTreeSet, VecDeque};

use rustc_hash::FxHashMap;

use crate::model::{StateId, WorldModel};

pub type NodeId = usize;

/// Incoming edge of a non-root node.
#[derive(Debug, Clone)]
pub struct Incoming<A, P> {
    pub action: A,
    pub reward: f64,
    pub payload: P,
}

#[derive(Debug, Clone)]
struct Candidate<A> {
    action: A,
    score: f64,
    order: u32,
    /// Insertion sequence while the pair is in the frontier.
    queued: Option<u64>,
    exhausted: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
enum IndexKey {
    Exact(StateId),
    Cell(Vec<i64>),
}

#[derive(Debug, Clone)]
pub struct Node<S, A, P> {
    pub state: S,
    pub parent: Option<NodeId>,
    pub incoming: Option<Incoming<A, P>>,
    /// Cumulative reward from the root, `R(s)`.
    pub reward: f64,
    pub depth: usize,
    pub children: Vec<NodeId>,
    /// Terminal nodes (goals, terminating sub-goals) are never expanded.
    pub terminal: bool,
    candidates: Vec<Candidate<A>>,
    key: IndexKey,
}

impl<S, A: Copy + PartialEq, P> Node<S, A, P> {
    /// Actions currently in `V(s)`.
    pub fn available(&self) -> Vec<A> {
        self.candidates.iter().filter(|c| c.queued.is_some()).map(|c| c.action).collect()
    }

    pub fn candidate_actions(&self) -> Vec<A> {
        self.candidates.iter().map(|c| c.action).collect()
    }
}

/// Frontier entry. Ordered so that the first element is the pair with the
/// highest score, then the lowest insertion sequence, then the lowest action
/// order.
#[derive(Debug, Clone, Copy)]
struct Entry {
    score: f64,
    seq: u64,
    order: u32,
    node: NodeId,
    cand: u32,
}

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Entry {}
impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .score
            .total_cmp(&self.score)
            .then(self.seq.cmp(&other.seq))
            .then(self.order.cmp(&other.order))
            .then(self.node.cmp(&other.node))
            .then(self.cand.cmp(&other.cand))
    }
}

/// A popped frontier pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Expansion<A> {
    pub node: NodeId,
    pub action: A,
    pub score: f64,
}

/// Per-node R change caused by a reattachment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardUpdate {
    pub node: NodeId,
    pub old: f64,
    pub new: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReattachReport {
    pub delta: f64,
    pub moved: usize,
    pub revived: usize,
    pub updates: Vec<RewardUpdate>,
}

#[derive(Debug, Clone)]
pub struct SearchTree<S, A, P> {
    nodes: Vec<Option<Node<S, A, P>>>,
    index: FxHashMap<IndexKey, Vec<NodeId>>,
    frontier: BTreeSet<Entry>,
    seq: u64,
    live: usize,
    continuous: bool,
    max_depth: usize,
}

impl<S: Clone, A: Copy + PartialEq, P: Clone> SearchTree<S, A, P> {
    pub fn new<W: WorldModel<State = S>>(world: &W, root: S, max_depth: usize) -> Self {
        let continuous = world.is_continuous();
        let key = index_key(world, &root);
        let mut index = FxHashMap::default();
        index.insert(key.clone(), vec![0]);
        let node = Node {
            state: root,
            parent: None,
            incoming: None,
            reward: 0.0,
            depth: 0,
            children: Vec::new(),
            terminal: false,
            candidates: Vec::new(),
            key,
        };
        Self {
            nodes: vec![Some(node)],
            index,
            frontier: BTreeSet::new(),
            seq: 0,
            live: 1,
            continuous,
            max_depth,
        }
    }

    pub const ROOT: NodeId = 0;

    pub fn len(&self) -> usize {
        self.live
    }

    pub fn is_empty(&self) -> bool {
        self.live == 0
    }

    pub fn node(&self, id: NodeId) -> &Node<S, A, P> {
        self.nodes[id].as_ref().expect("node was removed")
    }

    fn node_mut(&mut self, id: NodeId) -> &mut Node<S, A, P> {
        self.nodes[id].as_mut().expect("node was removed")
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.nodes.get(id).is_some_and(|n| n.is_some())
    }

    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes.iter().enumerate().filter(|(_, n)| n.is_some()).map(|(i, _)| i)
    }

    pub fn nodes(&self) -> impl Iterator<Item = (NodeId, &Node<S, A, P>)> + '_ {
        self.nodes.iter().enumerate().filter_map(|(i, n)| n.as_ref().map(|n| (i, n)))
    }

    pub fn frontier_len(&self) -> usize {
        self.frontier.len()
    }

    pub fn max_depth(&self) -> usize {
        self.max_depth
    }

    /// Install `U(s)` with cached scores and queue them. Candidate order is
    /// the position in `scored`.
    pub fn set_candidates(&mut self, id: NodeId, scored: Vec<(A, f64)>) {
        self.dequeue_all(id);
        let node = self.node_mut(id);
        node.candidates = scored
            .into_iter()
            .enumerate()
            .map(|(i, (action, score))| Candidate { action, score, order: i as u32, queued: None, exhausted: false })
            .collect();
        self.refresh_available(id);
    }

    pub fn set_terminal(&mut self, id: NodeId, terminal: bool) {
        self.node_mut(id).terminal = terminal;
        if terminal {
            self.dequeue_all(id);
        }
    }

    /// Pop the pair maximizing the policy score. The action leaves `V(s)`.
    pub fn pop(&mut self) -> Option<Expansion<A>> {
        let entry = self.frontier.pop_first()?;
        let node = self.node_mut(entry.node);
        let cand = &mut node.candidates[entry.cand as usize];
        cand.queued = None;
        Some(Expansion { node: entry.node, action: cand.action, score: entry.score })
    }

    /// Peek at the best pair without removing it.
    pub fn peek(&self) -> Option<Expansion<A>> {
        let entry = self.frontier.first()?;
        let cand = &self.node(entry.node).candidates[entry.cand as usize];
        Some(Expansion { node: entry.node, action: cand.action, score: entry.score })
    }

    /// Never re-queue `action` from `id` (a generalized action that returned
    /// nothing; deterministic dynamics make a retry pointless).
    pub fn mark_exhausted(&mut self, id: NodeId, action: A) {
        let node = self.node_mut(id);
        if let Some(i) = node.candidates.iter().position(|c| c.action == action) {
            node.candidates[i].exhausted = true;
            if let Some(seq) = node.candidates[i].queued.take() {
                let c = &node.candidates[i];
                let entry = Entry { score: c.score, seq, order: c.order, node: id, cand: i as u32 };
                self.frontier.remove(&entry);
            }
        }
    }

    /// All live nodes whose state equals `state`.
    pub fn find<W: WorldModel<State = S>>(&self, world: &W, state: &S) -> Vec<NodeId> {
        match index_key(world, state) {
            key @ IndexKey::Exact(_) => self.index.get(&key).cloned().unwrap_or_default(),
            IndexKey::Cell(cell) => {
                let mut out = Vec::new();
                let mut probe = IndexKey::Cell(cell.clone());
                for k in 0..3usize.pow(cell.len() as u32) {
                    if let IndexKey::Cell(p) = &mut probe {
                        neighbour_cell(&cell, k, p);
                    }
                    if let Some(ids) = self.index.get(&probe) {
                        for &id in ids {
                            if world.equals(&self.node(id).state, state) {
                                out.push(id);
                            }
                        }
                    }
                }
                out.sort_unstable();
                out
            }
        }
    }

    pub fn add_child<W: WorldModel<State = S>>(
        &mut self,
        world: &W,
        parent: NodeId,
        state: S,
        incoming: Incoming<A, P>,
    ) -> NodeId {
        let id = self.nodes.len();
        let key = index_key(world, &state);
        let (reward, depth) = {
            let p = self.node(parent);
            (p.reward + incoming.reward, p.depth + 1)
        };
        self.index.entry(key.clone()).or_default().push(id);
        self.nodes.push(Some(Node {
            state,
            parent: Some(parent),
            incoming: Some(incoming),
            reward,
            depth,
            children: Vec::new(),
            terminal: false,
            candidates: Vec::new(),
            key,
        }));
        self.node_mut(parent).children.push(id);
        self.live += 1;
        id
    }

    /// True when `ancestor` lies on the root path of `node` (or is `node`).
    pub fn is_ancestor(&self, ancestor: NodeId, node: NodeId) -> bool {
        let mut cur = Some(node);
        while let Some(id) = cur {
            if id == ancestor {
                return true;
            }
            cur = self.node(id).parent;
        }
        false
    }

    /// Root-to-node id path.
    pub fn path(&self, id: NodeId) -> Vec<NodeId> {
        let mut out = vec![id];
        let mut cur = self.node(id).parent;
        while let Some(p) = cur {
            out.push(p);
            cur = self.node(p).parent;
        }
        out.reverse();
        out
    }

    /// Ids of `id` and all its descendants, parents before children.
    pub fn subtree(&self, id: NodeId) -> Vec<NodeId> {
        let mut out = Vec::new();
        let mut queue = VecDeque::from([id]);
        while let Some(n) = queue.pop_front() {
            out.push(n);
            queue.extend(self.node(n).children.iter().copied());
        }
        out
    }

    /// Deepest depth in the subtree of `id` if `id` were placed at `new_depth`.
    pub fn subtree_max_depth_at(&self, id: NodeId, new_depth: usize) -> usize {
        let base = self.node(id).depth;
        self.subtree(id).into_iter().map(|n| self.node(n).depth - base + new_depth).max().unwrap_or(new_depth)
    }

    /// Move `id` and its subtree under `new_parent`. The caller has checked
    /// the improvement and loop conditions. Rewards below `id` are recomputed
    /// top-down from edge rewards, and every action that does not own an edge
    /// is made available again across the moved subtree.
    pub fn reattach(&mut self, id: NodeId, new_parent: NodeId, incoming: Incoming<A, P>) -> ReattachReport {
        debug_assert!(!self.is_ancestor(id, new_parent), "reattachment would create a loop");
        let old_parent = self.node(id).parent.expect("root cannot be reattached");
        let old_action = self.node(id).incoming.as_ref().map(|e| e.action).expect("non-root has an edge");
        self.node_mut(old_parent).children.retain(|&c| c != id);
        let still_owned = self
            .node(old_parent)
            .children
            .iter()
            .any(|&c| self.node(c).incoming.as_ref().is_some_and(|e| e.action == old_action));
        if !still_owned {
            self.revive_action(old_parent, old_action);
        }

        let old_reward = self.node(id).reward;
        self.node_mut(id).parent = Some(new_parent);
        self.node_mut(id).incoming = Some(incoming);
        self.node_mut(new_parent).children.push(id);

        let mut updates = Vec::new();
        let mut revived = 0;
        let moved = self.subtree(id);
        for &n in &moved {
            let (parent_reward, parent_depth) = {
                let p = self.node(self.node(n).parent.unwrap());
                (p.reward, p.depth)
            };
            let node = self.node_mut(n);
            let old = node.reward;
            node.reward = parent_reward + node.incoming.as_ref().unwrap().reward;
            node.depth = parent_depth + 1;
            updates.push(RewardUpdate { node: n, old, new: node.reward });
            revived += self.refresh_available(n);
        }
        ReattachReport { delta: self.node(id).reward - old_reward, moved: moved.len(), revived, updates }
    }

    /// Delete `id` and its whole subtree, purging their frontier entries.
    /// Returns the number of removed nodes.
    pub fn remove_subtree(&mut self, id: NodeId) -> usize {
        assert_ne!(id, Self::ROOT, "cannot remove the root");
        let parent = self.node(id).parent.unwrap();
        self.node_mut(parent).children.retain(|&c| c != id);
        let doomed = self.subtree(id);
        for &n in &doomed {
            self.dequeue_all(n);
            let key = self.node(n).key.clone();
            if let Some(ids) = self.index.get_mut(&key) {
                ids.retain(|&x| x != n);
                if ids.is_empty() {
                    self.index.remove(&key);
                }
            }
            self.nodes[n] = None;
        }
        self.live -= doomed.len();
        doomed.len()
    }

    /// Queue every candidate of `id` that is not queued, not exhausted and
    /// not owning an edge. Returns how many were queued.
    pub fn refresh_available(&mut self, id: NodeId) -> usize {
        let node = self.node(id);
        if node.terminal || node.depth >= self.max_depth {
            return 0;
        }
        let owned: Vec<A> = node.children.iter().filter_map(|&c| self.node(c).incoming.as_ref().map(|e| e.action)).collect();
        let todo: Vec<usize> = node
            .candidates
            .iter()
            .enumerate()
            .filter(|(_, c)| c.queued.is_none() && !c.exhausted && !owned.contains(&c.action))
            .map(|(i, _)| i)
            .collect();
        if todo.is_empty() {
            return 0;
        }
        let seq = self.next_seq();
        for &i in &todo {
            let c = &self.node(id).candidates[i];
            self.frontier.insert(Entry { score: c.score, seq, order: c.order, node: id, cand: i as u32 });
            self.node_mut(id).candidates[i].queued = Some(seq);
        }
        todo.len()
    }

    fn revive_action(&mut self, id: NodeId, action: A) {
        let node = self.node(id);
        if node.terminal || node.depth >= self.max_depth {
            return;
        }
        if let Some(i) = node.candidates.iter().position(|c| c.action == action && c.queued.is_none() && !c.exhausted) {
            let seq = self.next_seq();
            let c = &self.node(id).candidates[i];
            self.frontier.insert(Entry { score: c.score, seq, order: c.order, node: id, cand: i as u32 });
            self.node_mut(id).candidates[i].queued = Some(seq);
        }
    }

    fn dequeue_all(&mut self, id: NodeId) {
        let node = self.nodes[id].as_mut().expect("node was removed");
        for (i, c) in node.candidates.iter_mut().enumerate() {
            if let Some(seq) = c.queued.take() {
                self.frontier.remove(&Entry { score: c.score, seq, order: c.order, node: id, cand: i as u32 });
            }
        }
    }

    fn next_seq(&mut self) -> u64 {
        self.seq += 1;
        self.seq
    }

    /// Frontier completeness: the frontier holds exactly the pairs in the
    /// union of `V(s)`, and every node's `R` equals parent `R` plus edge
    /// reward. Returns a description of the first violation.
    pub fn check_invariants(&self) -> Result<(), String> {
        let mut queued = 0usize;
        for (id, node) in self.nodes() {
            for (i, c) in node.candidates.iter().enumerate() {
                if let Some(seq) = c.queued {
                    queued += 1;
                    let e = Entry { score: c.score, seq, order: c.order, node: id, cand: i as u32 };
                    if !self.frontier.contains(&e) {
                        return Err(format!("node {id} candidate {i} queued but missing from frontier"));
                    }
                }
            }
            match (node.parent, &node.incoming) {
                (None, _) => {
                    if node.reward != 0.0 {
                        return Err("root reward is not zero".into());
                    }
                }
                (Some(p), Some(e)) => {
                    let parent = self.node(p);
                    if parent.reward + e.reward != node.reward {
                        return Err(format!("node {id} reward is not parent reward plus edge reward"));
                    }
                    if !parent.children.contains(&id) {
                        return Err(format!("node {id} missing from its parent's children"));
                    }
                }
                (Some(_), None) => return Err(format!("node {id} has a parent but no edge")),
            }
        }
        if queued != self.frontier.len() {
            return Err(format!("frontier has {} entries but {} pairs are available", self.frontier.len(), queued));
        }
        Ok(())
    }

    /// No two live nodes are equal under the index (one node per state).
    pub fn check_unique_states<W: WorldModel<State = S>>(&self, world: &W) -> Result<(), String> {
        for (id, node) in self.nodes() {
            let matches = self.find(world, &node.state);
            if matches != [id] {
                return Err(format!("node {id} shares its state with {matches:?}"));
            }
        }
        Ok(())
    }

    pub fn is_continuous(&self) -> bool {
        self.continuous
    }
}

fn index_key<W: WorldModel>(world: &W, state: &W::State) -> IndexKey {
    if world.is_continuous() {
        IndexKey::Cell(world.equality_cell(state).unwrap_or_default())
    } else {
        IndexKey::Exact(world.encode(state))
    }
}

/// The `k`-th of the `3^d` cells around `cell`, written into `out`.
fn neighbour_cell(cell: &[i64], mut k: usize, out: &mut [i64]) {
    for (o, &c) in out.iter_mut().zip(cell) {
        *o = c + (k % 3) as i64 - 1;
        k /= 3;
    }
}
