//! Explicit directed graphs with edge rewards.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::model::{Outcome, PrimitiveAction, StateId, WorldModel};

/// Node `s` has outgoing edges `adjacency[s]`; action `i` follows the
/// `i`-th edge. Entering a forbidden node is Forbidden.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphWorld {
    pub adjacency: Vec<Vec<(usize, f64)>>,
    pub goals: Vec<usize>,
    pub forbidden: HashSet<usize>,
}

impl GraphWorld {
    pub fn new(adjacency: Vec<Vec<(usize, f64)>>, goals: Vec<usize>) -> Self {
        Self { adjacency, goals, forbidden: HashSet::new() }
    }

    pub fn with_forbidden(mut self, nodes: &[usize]) -> Self {
        self.forbidden.extend(nodes.iter().copied());
        self
    }

    pub fn len(&self) -> usize {
        self.adjacency.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adjacency.is_empty()
    }
}

/// Random digraph on `n` nodes with out-degree in `1..=max_degree` and
/// strictly negative dyadic rewards. Node 0 is the start, node `n - 1` the
/// goal. Cycles are common.
pub fn random_negative_graph(seed: u64, n: usize, max_degree: usize) -> GraphWorld {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let adjacency = (0..n)
        .map(|_| {
            let degree = rng.random_range(1..=max_degree);
            (0..degree).map(|_| (rng.random_range(0..n), -(1.0 + rng.random_range(0..64) as f64) / 64.0)).collect()
        })
        .collect();
    GraphWorld::new(adjacency, vec![n - 1])
}

impl WorldModel for GraphWorld {
    type State = usize;

    fn action_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).max().unwrap_or(0)
    }

    fn allowed(&self, s: &usize) -> Vec<PrimitiveAction> {
        (0..self.adjacency[*s].len()).map(PrimitiveAction).collect()
    }

    fn transition(&self, action: PrimitiveAction, s: &usize) -> Outcome<usize> {
        match self.adjacency[*s].get(action.0) {
            Some(&(t, _)) if self.forbidden.contains(&t) => Outcome::Forbidden,
            Some(&(t, r)) => Outcome::Next { state: t, reward: r },
            None => Outcome::Forbidden,
        }
    }

    fn is_goal(&self, s: &usize) -> bool {
        self.goals.contains(s)
    }

    fn encode(&self, s: &usize) -> StateId {
        StateId((*s as u64).to_le_bytes().to_vec())
    }
}
