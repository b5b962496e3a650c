//! Stochastic policies `p(a|s)` over a fixed action index set.
//!
//! Planners only use policy scores for ordering the frontier, so every
//! policy here is a pure function of the state.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::learn::mlp::{softmax, Head, Mlp, MlpSpec};
use crate::learn::LearnError;

#[derive(Debug, Error, PartialEq)]
pub enum PolicyError {
    #[error("action set is empty")]
    EmptyActionSet,
    #[error("task set is empty")]
    EmptyTaskSet,
    #[error("expected {expected} sub-task vectors, got {got}")]
    SubTaskCount { expected: usize, got: usize },
    #[error("sub-task vector for task {task} is empty")]
    EmptySubTasks { task: usize },
    #[error("object {0} is not in the scene")]
    MissingObject(usize),
    #[error("input has shape {got:?}, network expects {expected:?}")]
    ShapeMismatch { expected: (usize, usize), got: (usize, usize) },
}

/// A probability distribution over `0..action_count()` for every state.
pub trait StochasticPolicy<S>: Send + Sync {
    fn action_count(&self) -> usize;

    /// Full distribution. Sums to one.
    fn distribution(&self, state: &S) -> Vec<f64>;

    /// Scores of a subset of actions, in the order given. Not renormalized.
    fn scores(&self, state: &S, actions: &[usize]) -> Vec<f64> {
        let d = self.distribution(state);
        actions.iter().map(|&a| d[a]).collect()
    }

    /// Highest-scoring action among `actions`, first index on ties.
    fn greedy(&self, state: &S, actions: &[usize]) -> Option<usize> {
        let scores = self.scores(state, actions);
        let mut best: Option<(usize, f64)> = None;
        for (&a, &p) in actions.iter().zip(&scores) {
            if best.is_none_or(|(_, b)| p > b) {
                best = Some((a, p));
            }
        }
        best.map(|(a, _)| a)
    }
}

impl<S, P: StochasticPolicy<S> + ?Sized> StochasticPolicy<S> for Arc<P> {
    fn action_count(&self) -> usize {
        (**self).action_count()
    }
    fn distribution(&self, state: &S) -> Vec<f64> {
        (**self).distribution(state)
    }
    fn scores(&self, state: &S, actions: &[usize]) -> Vec<f64> {
        (**self).scores(state, actions)
    }
}

impl<S, P: StochasticPolicy<S> + ?Sized> StochasticPolicy<S> for &P {
    fn action_count(&self) -> usize {
        (**self).action_count()
    }
    fn distribution(&self, state: &S) -> Vec<f64> {
        (**self).distribution(state)
    }
    fn scores(&self, state: &S, actions: &[usize]) -> Vec<f64> {
        (**self).scores(state, actions)
    }
}

pub type SharedPolicy<S> = Arc<dyn StochasticPolicy<S>>;

/// Constant `1/|A|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformPolicy {
    n: usize,
}

pub fn uniform_policy(action_count: usize) -> Result<UniformPolicy, PolicyError> {
    if action_count == 0 {
        return Err(PolicyError::EmptyActionSet);
    }
    Ok(UniformPolicy { n: action_count })
}

impl<S> StochasticPolicy<S> for UniformPolicy {
    fn action_count(&self) -> usize {
        self.n
    }
    fn distribution(&self, _: &S) -> Vec<f64> {
        vec![1.0 / self.n as f64; self.n]
    }
    fn scores(&self, _: &S, actions: &[usize]) -> Vec<f64> {
        vec![1.0 / self.n as f64; actions.len()]
    }
}

/// Pseudo-random but pure policy: each `(state, action)` gets a fixed score
/// derived from the seed and the state key. Different seeds give different
/// expansion orders.
#[derive(Clone)]
pub struct RandomOrderPolicy<S> {
    n: usize,
    seed: u64,
    key: Arc<dyn Fn(&S) -> Vec<u8> + Send + Sync>,
}

impl<S> RandomOrderPolicy<S> {
    pub fn new(action_count: usize, seed: u64, key: impl Fn(&S) -> Vec<u8> + Send + Sync + 'static) -> Self {
        Self { n: action_count, seed, key: Arc::new(key) }
    }

    fn raw(&self, bytes: &[u8], action: usize) -> f64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ self.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15);
        for &b in bytes {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        let v = splitmix64(h ^ (action as u64).wrapping_mul(0xbf58_476d_1ce4_e5b9));
        // 53-bit mantissa in (0, 1].
        ((v >> 11) as f64 + 1.0) / (1u64 << 53) as f64
    }
}

impl<S> StochasticPolicy<S> for RandomOrderPolicy<S> {
    fn action_count(&self) -> usize {
        self.n
    }
    fn distribution(&self, state: &S) -> Vec<f64> {
        let bytes = (self.key)(state);
        let raw: Vec<f64> = (0..self.n).map(|a| self.raw(&bytes, a)).collect();
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|r| r / total).collect()
    }
}

pub(crate) fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Policy backed by a closure returning a distribution.
pub struct FnPolicy<S> {
    n: usize,
    f: Box<dyn Fn(&S) -> Vec<f64> + Send + Sync>,
}

impl<S> FnPolicy<S> {
    pub fn new(action_count: usize, f: impl Fn(&S) -> Vec<f64> + Send + Sync + 'static) -> Self {
        Self { n: action_count, f: Box::new(f) }
    }
}

impl<S> StochasticPolicy<S> for FnPolicy<S> {
    fn action_count(&self) -> usize {
        self.n
    }
    fn distribution(&self, state: &S) -> Vec<f64> {
        (self.f)(state)
    }
}

/// Combine a task policy with per-task sub-task policies.
///
/// The score of sub-task `k` of task `j` is `p(j) * p_j(k) * N(j)` with
/// `N(j) = 1 / max_k p_j(k)`, so the best sub-task of every task scores
/// exactly `p(j)`. The result is laid out task by task and is not a
/// probability vector unless `renormalize` is set.
pub fn combine_split(task_scores: &[f64], subtask_scores: &[Vec<f64>], renormalize: bool) -> Result<Vec<f64>, PolicyError> {
    if task_scores.is_empty() {
        return Err(PolicyError::EmptyTaskSet);
    }
    if subtask_scores.len() != task_scores.len() {
        return Err(PolicyError::SubTaskCount { expected: task_scores.len(), got: subtask_scores.len() });
    }
    let mut out = Vec::new();
    for (j, (&pj, sub)) in task_scores.iter().zip(subtask_scores).enumerate() {
        if sub.is_empty() {
            return Err(PolicyError::EmptySubTasks { task: j });
        }
        let max = sub.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let norm = 1.0 / max;
        out.extend(sub.iter().map(|&pk| pj * pk * norm));
    }
    if renormalize {
        let total: f64 = out.iter().sum();
        if total > 0.0 {
            out.iter_mut().for_each(|x| *x /= total);
        }
    }
    Ok(out)
}

/// Split policy: a task policy plus one sub-task policy per task, combined
/// with [`combine_split`].
pub struct SplitPolicy<S> {
    pub task: SharedPolicy<S>,
    pub subtasks: Vec<SharedPolicy<S>>,
    pub renormalize: bool,
}

impl<S> StochasticPolicy<S> for SplitPolicy<S> {
    fn action_count(&self) -> usize {
        self.subtasks.iter().map(|p| p.action_count()).sum()
    }
    fn distribution(&self, state: &S) -> Vec<f64> {
        let task = self.task.distribution(state);
        let sub: Vec<Vec<f64>> = self.subtasks.iter().map(|p| p.distribution(state)).collect();
        combine_split(&task, &sub, self.renormalize).expect("split policy shapes are fixed at construction")
    }
}

/// Policy reading a small network on state features.
#[derive(Clone)]
pub struct NetworkPolicy<S> {
    pub net: Arc<Mlp>,
    features: Arc<dyn Fn(&S) -> Vec<f64> + Send + Sync>,
}

impl<S> NetworkPolicy<S> {
    pub fn new(net: Arc<Mlp>, features: impl Fn(&S) -> Vec<f64> + Send + Sync + 'static) -> Self {
        Self { net, features: Arc::new(features) }
    }
}

impl<S> StochasticPolicy<S> for NetworkPolicy<S> {
    fn action_count(&self) -> usize {
        self.net.outputs()
    }
    fn distribution(&self, state: &S) -> Vec<f64> {
        self.net.forward(&(self.features)(state))
    }
}

/// Object scene on an integer grid, as seen by the pre-filters.
pub trait Scene {
    fn gripper(&self) -> (i64, i64);
    fn object(&self, n: usize) -> Option<(i64, i64)>;
}

/// Lossy, unlearned feature maps `f(s, n)` keyed by an object label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PreFilter {
    /// `(x_g, y_g, x_n, y_n)`: shifts with the scene.
    GripperObject,
    /// `(x_n - x_g, y_n - y_g)`: unchanged by a scene shift.
    Relative,
}

impl PreFilter {
    pub fn width(self) -> usize {
        match self {
            PreFilter::GripperObject => 4,
            PreFilter::Relative => 2,
        }
    }

    pub fn id(self) -> &'static str {
        match self {
            PreFilter::GripperObject => "gripper_object",
            PreFilter::Relative => "relative",
        }
    }
}

pub fn apply_prefilter<T: Scene + ?Sized>(filter: PreFilter, n: usize, scene: &T) -> Result<Vec<f64>, PolicyError> {
    let (gx, gy) = scene.gripper();
    let (x, y) = scene.object(n).ok_or(PolicyError::MissingObject(n))?;
    Ok(match filter {
        PreFilter::GripperObject => vec![gx as f64, gy as f64, x as f64, y as f64],
        PreFilter::Relative => vec![(x - gx) as f64, (y - gy) as f64],
    })
}

/// `p(x, y | s)` over a `width x height` grid, row-major by `y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPolicyMap {
    pub width: usize,
    pub height: usize,
    pub probs: Vec<f64>,
}

impl GridPolicyMap {
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.probs[y * self.width + x]
    }

    /// Most probable cell, lowest index on ties.
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = i;
            }
        }
        (best % self.width, best / self.width)
    }
}

/// Channels-first image, `channels x height x width`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridImage {
    pub channels: usize,
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl GridImage {
    pub fn zeros(channels: usize, width: usize, height: usize) -> Self {
        Self { channels, width, height, data: vec![0.0; channels * width * height] }
    }

    pub fn get(&self, c: usize, x: i64, y: i64) -> f64 {
        if x < 0 || y < 0 || x as usize >= self.width || y as usize >= self.height {
            return 0.0;
        }
        self.data[(c * self.height + y as usize) * self.width + x as usize]
    }

    pub fn set(&mut self, c: usize, x: usize, y: usize, v: f64) {
        self.data[(c * self.height + y) * self.width + x] = v;
    }
}

/// One shared network scoring every cell from the zero-padded
/// `(2r+1) x (2r+1)` window around it; a 2d softmax over the scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalGridNet {
    pub channels: usize,
    pub radius: usize,
    pub net: Mlp,
}

impl LocalGridNet {
    pub fn window_width(channels: usize, radius: usize) -> usize {
        channels * (2 * radius + 1) * (2 * radius + 1)
    }

    pub fn new(channels: usize, radius: usize, hidden: &[usize], seed: u64) -> Result<Self, LearnError> {
        let mut layers = vec![Self::window_width(channels, radius)];
        layers.extend_from_slice(hidden);
        layers.push(1);
        let net = Mlp::new(MlpSpec::new(layers, Head::Softmax1d, seed))?;
        Ok(Self { channels, radius, net })
    }

    pub fn window(&self, image: &GridImage, x: usize, y: usize) -> Vec<f64> {
        let r = self.radius as i64;
        let mut out = Vec::with_capacity(Self::window_width(self.channels, self.radius));
        for c in 0..self.channels {
            for dy in -r..=r {
                for dx in -r..=r {
                    out.push(image.get(c, x as i64 + dx, y as i64 + dy));
                }
            }
        }
        out
    }

    pub fn logits(&self, image: &GridImage) -> Result<Vec<f64>, PolicyError> {
        if image.channels != self.channels || image.data.len() != image.channels * image.width * image.height {
            return Err(PolicyError::ShapeMismatch { expected: (self.channels, 0), got: (image.channels, image.data.len()) });
        }
        let mut z = Vec::with_capacity(image.width * image.height);
        for y in 0..image.height {
            for x in 0..image.width {
                z.push(self.net.logits(&self.window(image, x, y))[0]);
            }
        }
        Ok(z)
    }
}

/// Evaluate a flat network on a flattened image and reshape its softmax
/// into a map.
pub fn grid_policy_eval(net: &Mlp, image: &GridImage) -> Result<GridPolicyMap, PolicyError> {
    let cells = image.width * image.height;
    if net.inputs() != image.data.len() || net.outputs() != cells {
        return Err(PolicyError::ShapeMismatch { expected: (net.inputs(), net.outputs()), got: (image.data.len(), cells) });
    }
    Ok(GridPolicyMap { width: image.width, height: image.height, probs: softmax(&net.logits(&image.data), 1.0) })
}

/// 2d policy map from a weight-shared local network.
pub fn local_grid_eval(net: &LocalGridNet, image: &GridImage) -> Result<GridPolicyMap, PolicyError> {
    Ok(GridPolicyMap { width: image.width, height: image.height, probs: softmax(&net.logits(image)?, 1.0) })
}

type CellFn<S> = Arc<dyn Fn(&S, usize) -> Option<(usize, usize)> + Send + Sync>;

/// Scores action slots by the grid map value of the cell each slot
/// targets, so the action list may change size between scenes.
#[derive(Clone)]
pub struct GridSlotPolicy<S> {
    pub net: Arc<LocalGridNet>,
    pub slots: usize,
    image: Arc<dyn Fn(&S) -> GridImage + Send + Sync>,
    cell: CellFn<S>,
}

impl<S> GridSlotPolicy<S> {
    pub fn new(
        net: Arc<LocalGridNet>,
        slots: usize,
        image: impl Fn(&S) -> GridImage + Send + Sync + 'static,
        cell: impl Fn(&S, usize) -> Option<(usize, usize)> + Send + Sync + 'static,
    ) -> Self {
        Self { net, slots, image: Arc::new(image), cell: Arc::new(cell) }
    }

    pub fn map(&self, state: &S) -> GridPolicyMap {
        local_grid_eval(&self.net, &(self.image)(state)).expect("image shape fixed by the environment")
    }
}

impl<S> StochasticPolicy<S> for GridSlotPolicy<S> {
    fn action_count(&self) -> usize {
        self.slots
    }
    fn distribution(&self, state: &S) -> Vec<f64> {
        let all: Vec<usize> = (0..self.slots).collect();
        let raw = self.scores(state, &all);
        let total: f64 = raw.iter().sum();
        if total > 0.0 {
            raw.into_iter().map(|r| r / total).collect()
        } else {
            vec![1.0 / self.slots as f64; self.slots]
        }
    }
    fn scores(&self, state: &S, actions: &[usize]) -> Vec<f64> {
        let map = self.map(state);
        actions.iter().map(|&a| (self.cell)(state, a).map_or(0.0, |(x, y)| map.at(x, y))).collect()
    }
}


#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn uniform_over_four_and_one() {
        let p = uniform_policy(4).unwrap();
        assert_eq!(StochasticPolicy::<()>::distribution(&p, &()), vec![0.25; 4]);
        let p = uniform_policy(1).unwrap();
        assert_eq!(StochasticPolicy::<()>::distribution(&p, &()), vec![1.0]);
        assert_eq!(uniform_policy(0), Err(PolicyError::EmptyActionSet));
    }

    #[test]
    fn split_identity_for_equal_subtasks() {
        let combined = combine_split(&[0.5, 0.5], &[vec![0.2; 5], vec![1.0]], false).unwrap();
        assert_eq!(combined, vec![0.5; 6]);
        assert_eq!(0.5 * 0.2 * (1.0 / 0.2), 0.5);
    }

    #[test]
    fn split_single_task_single_subtask() {
        assert_eq!(combine_split(&[1.0], &[vec![1.0]], false).unwrap(), vec![1.0]);
    }

    #[test]
    fn split_skewed_subtasks() {
        let combined = combine_split(&[0.5, 0.5], &[vec![0.8, 0.2], vec![1.0]], false).unwrap();
        let n0 = 1.0 / 0.8;
        assert_eq!(n0, 1.25);
        assert_eq!(combined, vec![0.5 * 0.8 * n0, 0.5 * 0.2 * n0, 0.5]);
        assert_eq!(combined[..2], [0.5, 0.125]);
        let renorm = combine_split(&[0.5, 0.5], &[vec![0.8, 0.2], vec![1.0]], true).unwrap();
        assert!((renorm.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn split_rejects_bad_shapes() {
        assert_eq!(combine_split(&[], &[], false), Err(PolicyError::EmptyTaskSet));
        assert_eq!(combine_split(&[1.0], &[], false), Err(PolicyError::SubTaskCount { expected: 1, got: 0 }));
        assert_eq!(combine_split(&[1.0], &[vec![]], false), Err(PolicyError::EmptySubTasks { task: 0 }));
    }

    #[test]
    fn random_order_policy_is_pure_and_normalized() {
        let p = RandomOrderPolicy::new(4, 7, |s: &u32| s.to_le_bytes().to_vec());
        let a = p.distribution(&3);
        assert_eq!(a, p.distribution(&3));
        assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_ne!(a, p.distribution(&4));
        let q = RandomOrderPolicy::new(4, 8, |s: &u32| s.to_le_bytes().to_vec());
        assert_ne!(a, q.distribution(&3));
    }

    #[test]
    fn greedy_picks_first_maximum() {
        let p = FnPolicy::new(3, |_: &()| vec![0.4, 0.2, 0.4]);
        assert_eq!(p.greedy(&(), &[0, 1, 2]), Some(0));
        assert_eq!(p.greedy(&(), &[1, 2]), Some(2));
        assert_eq!(p.greedy(&(), &[]), None);
    }

    struct Toy {
        gripper: (i64, i64),
        objects: Vec<(i64, i64)>,
    }

    impl Scene for Toy {
        fn gripper(&self) -> (i64, i64) {
            self.gripper
        }
        fn object(&self, n: usize) -> Option<(i64, i64)> {
            self.objects.get(n).copied()
        }
    }

    #[test]
    fn prefilter_ignores_other_objects() {
        let scene = Toy { gripper: (2, 3), objects: vec![(0, 0), (7, 1), (4, 4), (5, 5), (6, 6), (9, 9)] };
        assert_eq!(apply_prefilter(PreFilter::GripperObject, 1, &scene).unwrap(), vec![2.0, 3.0, 7.0, 1.0]);
        let fewer = Toy { gripper: (2, 3), objects: vec![(3, 3), (7, 1)] };
        assert_eq!(apply_prefilter(PreFilter::GripperObject, 1, &fewer).unwrap(), vec![2.0, 3.0, 7.0, 1.0]);
        assert_eq!(apply_prefilter(PreFilter::Relative, 9, &scene), Err(PolicyError::MissingObject(9)));
    }

    proptest! {
        #[test]
        fn prefilter_label_swap_and_shift(
            objs in prop::collection::vec((0i64..20, 0i64..10), 2..6),
            g in (0i64..20, 0i64..10),
            dx in -5i64..5,
            dy in -5i64..5,
            pick in 0usize..100,
        ) {
            let n = pick % objs.len();
            let m = (n + 1) % objs.len();
            let scene = Toy { gripper: g, objects: objs.clone() };
            let mut swapped = objs.clone();
            swapped.swap(n, m);
            let swapped = Toy { gripper: g, objects: swapped };
            for f in [PreFilter::GripperObject, PreFilter::Relative] {
                prop_assert_eq!(apply_prefilter(f, n, &scene).unwrap(), apply_prefilter(f, m, &swapped).unwrap());
            }
            let shifted = Toy { gripper: (g.0 + dx, g.1 + dy), objects: objs.iter().map(|&(x, y)| (x + dx, y + dy)).collect() };
            let a = apply_prefilter(PreFilter::GripperObject, n, &scene).unwrap();
            let b = apply_prefilter(PreFilter::GripperObject, n, &shifted).unwrap();
            prop_assert_eq!(b, vec![a[0] + dx as f64, a[1] + dy as f64, a[2] + dx as f64, a[3] + dy as f64]);
            prop_assert_eq!(apply_prefilter(PreFilter::Relative, n, &scene).unwrap(), apply_prefilter(PreFilter::Relative, n, &shifted).unwrap());
        }

        #[test]
        fn local_grid_argmax_translates(seed in 0u64..50, x in 2usize..6, y in 2usize..6, dx in 0usize..4, dy in 0usize..3) {
            let net = LocalGridNet::new(2, 1, &[6], seed).unwrap();
            let mut a = GridImage::zeros(2, 12, 10);
            let mut b = GridImage::zeros(2, 12, 10);
            for (c, ox, oy) in [(0, 0, 0), (1, 1, 0), (0, 0, 1)] {
                a.set(c, x + ox, y + oy, 1.0);
                b.set(c, x + ox + dx, y + oy + dy, 1.0);
            }
            let ma = local_grid_eval(&net, &a).unwrap();
            let mb = local_grid_eval(&net, &b).unwrap();
            prop_assert!((ma.probs.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            // Cells far from every object see an all-zero window and share one
            // score, so compare the object neighbourhood only.
            let z = net.logits(&a).unwrap();
            let zb = net.logits(&b).unwrap();
            for yy in y - 1..=y + 2 {
                for xx in x - 1..=x + 2 {
                    prop_assert_eq!(z[yy * 12 + xx].to_bits(), zb[(yy + dy) * 12 + xx + dx].to_bits());
                }
            }
            let (ax, ay) = ma.argmax();
            let (bx, by) = mb.argmax();
            let near = |px: usize, py: usize, cx: usize, cy: usize| px + 1 >= cx && px <= cx + 2 && py + 1 >= cy && py <= cy + 2;
            if near(ax, ay, x, y) {
                prop_assert_eq!((ax + dx, ay + dy), (bx, by));
            }
        }
    }

    #[test]
    fn grid_maps_normalize_and_check_shapes() {
        let net = Mlp::new(MlpSpec::new(vec![2 * 4 * 3, 8, 12], Head::Softmax2d { width: 4, height: 3 }, 0)).unwrap();
        let map = grid_policy_eval(&net, &GridImage::zeros(2, 4, 3)).unwrap();
        assert!((map.probs.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        assert!(grid_policy_eval(&net, &GridImage::zeros(2, 5, 3)).is_err());
        let local = LocalGridNet::new(2, 1, &[4], 0).unwrap();
        assert!(local_grid_eval(&local, &GridImage::zeros(3, 4, 3)).is_err());
        let map = local_grid_eval(&local, &GridImage::zeros(2, 4, 3)).unwrap();
        assert!(map.probs.iter().all(|&p| (p - 1.0 / 12.0).abs() < 1e-12));
    }

    #[test]
    fn network_policy_sums_to_one() {
        let net = Arc::new(Mlp::new(MlpSpec::new(vec![2, 5, 4], Head::Softmax1d, 3)).unwrap());
        let p = NetworkPolicy::new(net, |s: &(f64, f64)| vec![s.0, s.1]);
        let d = p.distribution(&(0.3, -2.0));
        assert_eq!(d.len(), 4);
        assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        assert_eq!(p.scores(&(0.3, -2.0), &[2, 0]), vec![d[2], d[0]]);
    }
}
