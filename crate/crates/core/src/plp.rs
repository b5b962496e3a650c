//! Plan-learn-plan: plan a batch of seeded examples, learn policies from
//! the solved ones, plan again with the new policies.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hier::{rtp_solve, Hierarchy};
use crate::learn::{extract_batches, fit_cross_entropy, load_weights, save_weights, BatchArchive, LearnError, Mlp, MlpSpec, PlanBatch, TrainConfig};
use crate::model::{replay, Problem, WorldModel};

/// Trained networks keyed by generalized-action family.
pub type PolicySet = BTreeMap<String, Arc<Mlp>>;

/// A problem class together with the hierarchy its examples are planned
/// with.
pub trait PlpDomain: Sync {
    type World: WorldModel;

    fn name(&self) -> String;

    fn example(&self, index: u64) -> Problem<Self::World>;

    /// Hierarchy for one problem. Families absent from `policies` use the
    /// domain's baseline order. `greedy` turns every level into an argmax
    /// rollout.
    fn hierarchy(&self, world: &Self::World, policies: &PolicySet, greedy: bool) -> Hierarchy<<Self::World as WorldModel>::State>;

    /// Network shape for a family's batch, `None` for families that are
    /// not learned.
    fn spec(&self, family: &str, width: usize, seed: u64) -> Option<MlpSpec>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleOutcome {
    pub index: u64,
    pub solved: bool,
    pub nodes_expanded: u64,
    pub transitions: u64,
    pub sub_invocations: u64,
    pub tree_size: u64,
    pub plan_length: usize,
    pub reward: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeSummary {
    pub attempted: usize,
    pub solved: usize,
    pub accuracy: f64,
    pub median_nodes_expanded: u64,
}

impl OutcomeSummary {
    pub fn of(outcomes: &[ExampleOutcome]) -> Self {
        let solved = outcomes.iter().filter(|o| o.solved).count();
        let mut nodes: Vec<u64> = outcomes.iter().map(|o| o.nodes_expanded).collect();
        nodes.sort_unstable();
        Self {
            attempted: outcomes.len(),
            solved,
            accuracy: if outcomes.is_empty() { 0.0 } else { solved as f64 / outcomes.len() as f64 },
            median_nodes_expanded: median(&nodes),
        }
    }
}

/// Upper median of a sorted slice; 0 when empty.
pub fn median(sorted: &[u64]) -> u64 {
    sorted.get(sorted.len() / 2).copied().unwrap_or(0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlpIterationReport {
    pub class: String,
    pub iteration: usize,
    pub seed: u64,
    /// Training examples planned with the policies of this iteration.
    pub training: Vec<ExampleOutcome>,
    pub training_summary: OutcomeSummary,
    /// Held-out examples planned with the policies learned here (or the
    /// current ones when nothing was learned).
    pub evaluation: Vec<ExampleOutcome>,
    pub evaluation_summary: OutcomeSummary,
    pub checksums_before: BTreeMap<String, u64>,
    pub checksums_after: BTreeMap<String, u64>,
    pub batch_sizes: BTreeMap<String, usize>,
    pub mechanism: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlpConfig {
    pub train: Range<u64>,
    pub eval: Range<u64>,
    pub iterations: usize,
    pub training: TrainConfig,
    /// Learn from every solved plan so far rather than the newest only.
    pub cumulative: bool,
    /// Start each retraining from the previous weights.
    pub fine_tune: bool,
    pub seed: u64,
}

impl Default for PlpConfig {
    fn default() -> Self {
        Self {
            train: 0..10,
            eval: 1_000_000..1_000_050,
            iterations: 1,
            training: TrainConfig::default(),
            cumulative: true,
            fine_tune: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Error)]
pub enum PlpError {
    #[error("no training example was solved in iteration {0}; nothing to learn from")]
    NothingSolved(usize),
    #[error("training and evaluation seed ranges overlap: {train:?} and {eval:?}")]
    OverlappingSeeds { train: Range<u64>, eval: Range<u64> },
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("policy for family {0} not found")]
    MissingPolicy(String),
}

fn plan_one<D: PlpDomain>(domain: &D, index: u64, policies: &PolicySet, greedy: bool) -> (ExampleOutcome, Option<Arc<crate::hier::HierPlan<<D::World as WorldModel>::State>>>) {
    let problem = domain.example(index);
    let h = domain.hierarchy(&problem.world, policies, greedy);
    match rtp_solve(&problem.world, &h, &problem.start) {
        Ok(sol) => {
            let valid = replay(&sol.flat, &problem.world, &problem.start).is_valid();
            let outcome = ExampleOutcome {
                index,
                solved: valid,
                nodes_expanded: sol.stats.nodes_expanded,
                transitions: sol.stats.transitions,
                sub_invocations: sol.stats.sub_invocations,
                tree_size: sol.stats.tree_size,
                plan_length: sol.flat.len(),
                reward: Some(sol.reward),
                error: (!valid).then(|| "plan does not replay".to_string()),
            };
            (outcome, valid.then_some(sol.plan))
        }
        Err(e) => {
            let stats = e.partial().map(|p| p.stats.clone()).unwrap_or_default();
            let outcome = ExampleOutcome {
                index,
                solved: false,
                nodes_expanded: stats.nodes_expanded,
                transitions: stats.transitions,
                sub_invocations: stats.sub_invocations,
                tree_size: stats.tree_size,
                plan_length: 0,
                reward: None,
                error: Some(e.to_string()),
            };
            (outcome, None)
        }
    }
}

/// Plan every example in `indices` and report outcomes in index order.
pub fn evaluate<D: PlpDomain>(domain: &D, policies: &PolicySet, indices: Range<u64>, greedy: bool) -> Vec<ExampleOutcome> {
    indices.map(|i| plan_one(domain, i, policies, greedy).0).collect()
}

/// Fraction of examples solved by argmax rollouts at every level.
pub fn evaluate_greedy<D: PlpDomain>(domain: &D, policies: &PolicySet, indices: Range<u64>) -> f64 {
    OutcomeSummary::of(&evaluate(domain, policies, indices, true)).accuracy
}

/// Train or fine-tune one network per family present in `batches`.
pub fn train_policies<D: PlpDomain>(
    domain: &D,
    previous: &PolicySet,
    batches: &BTreeMap<String, PlanBatch>,
    cfg: &TrainConfig,
    fine_tune: bool,
    seed: u64,
) -> Result<PolicySet, PlpError> {
    let mut out = previous.clone();
    for (i, (family, batch)) in batches.iter().enumerate() {
        if batch.is_empty() {
            continue;
        }
        let Some(spec) = domain.spec(family, batch.width, seed.wrapping_add(i as u64)) else { continue };
        let mut net = match previous.get(family) {
            Some(prev) if fine_tune && prev.spec.layers == spec.layers => (**prev).clone(),
            _ => Mlp::new(spec)?,
        };
        let cfg = TrainConfig { seed: cfg.seed.wrapping_add(seed).wrapping_add(i as u64), ..cfg.clone() };
        fit_cross_entropy(&mut net, &batch.samples(), &cfg)?;
        out.insert(family.clone(), Arc::new(net));
    }
    Ok(out)
}

pub fn checksums(policies: &PolicySet) -> BTreeMap<String, u64> {
    policies.iter().map(|(k, v)| (k.clone(), v.checksum())).collect()
}

/// Run-directory layout: `config.json`, `batches/iter-K.jsonl`,
/// `policies/iter-K/FAMILY.rtpw`, `reports.jsonl`.
#[derive(Debug, Clone)]
pub struct RunDir {
    pub root: PathBuf,
}

impl RunDir {
    pub fn create(root: impl AsRef<Path>) -> std::io::Result<Self> {
        let root = root.as_ref().to_path_buf();
        fs::create_dir_all(root.join("batches"))?;
        fs::create_dir_all(root.join("policies"))?;
        Ok(Self { root })
    }

    pub fn policy_dir(&self, iteration: usize) -> PathBuf {
        self.root.join("policies").join(format!("iter-{iteration}"))
    }

    pub fn write_config<T: Serialize>(&self, config: &T) -> std::io::Result<()> {
        fs::write(self.root.join("config.json"), serde_json::to_string_pretty(config).map_err(std::io::Error::other)?)
    }

    pub fn append_report(&self, report: &PlpIterationReport) -> std::io::Result<()> {
        let mut f = fs::OpenOptions::new().create(true).append(true).open(self.root.join("reports.jsonl"))?;
        writeln!(f, "{}", serde_json::to_string(report).map_err(std::io::Error::other)?)
    }
}

pub fn save_policies(dir: &Path, policies: &PolicySet, filter: &str) -> Result<(), PlpError> {
    fs::create_dir_all(dir)?;
    for (family, net) in policies {
        save_weights(&dir.join(format!("{family}.rtpw")), net, family, filter)?;
    }
    Ok(())
}

/// Load the named families from `dir`.
pub fn load_policies(dir: &Path, families: &[String]) -> Result<PolicySet, PlpError> {
    let mut out = PolicySet::new();
    for family in families {
        let path = dir.join(format!("{family}.rtpw"));
        if !path.exists() {
            return Err(PlpError::MissingPolicy(family.clone()));
        }
        let (net, _) = load_weights(&path)?;
        out.insert(family.clone(), Arc::new(net));
    }
    Ok(out)
}

fn overlaps(a: &Range<u64>, b: &Range<u64>) -> bool {
    a.start < b.end && b.start < a.end
}

/// Iteration `k` plans the training examples with `P^(k)`, learns
/// `P^(k+1)` from the solved plans and evaluates it on the held-out
/// examples. With zero iterations one report of the baseline is produced.
/// Failed training examples are retried in every iteration.
pub fn run_plp<D: PlpDomain>(domain: &D, cfg: &PlpConfig, run_dir: Option<&RunDir>) -> Result<(Vec<PlpIterationReport>, PolicySet), PlpError> {
    if overlaps(&cfg.train, &cfg.eval) {
        return Err(PlpError::OverlappingSeeds { train: cfg.train.clone(), eval: cfg.eval.clone() });
    }
    if let Some(dir) = run_dir {
        dir.write_config(cfg)?;
    }
    let mut policies = PolicySet::new();
    let mut batches: BTreeMap<String, PlanBatch> = BTreeMap::new();
    let mut reports = Vec::new();
    for iteration in 0..cfg.iterations.max(1) {
        let mut training = Vec::new();
        let mut plans = Vec::new();
        for i in cfg.train.clone() {
            let (outcome, plan) = plan_one(domain, i, &policies, false);
            training.push(outcome);
            if let Some(p) = plan {
                plans.push((i, p));
            }
        }
        let before = checksums(&policies);
        let mut batch_sizes = BTreeMap::new();
        if cfg.iterations > 0 {
            if plans.is_empty() {
                return Err(PlpError::NothingSolved(iteration));
            }
            let per_plan: Vec<_> = plans
                .iter()
                .map(|(i, p)| {
                    let world = domain.example(*i).world;
                    let hi = domain.hierarchy(&world, &policies, false);
                    extract_batches(&hi, &[(*i, p.as_ref())])
                })
                .collect::<Result<_, _>>()?;
            let mut new: BTreeMap<String, PlanBatch> = BTreeMap::new();
            for b in per_plan {
                for (family, batch) in b {
                    new.entry(family).or_default().merge(batch)?;
                }
            }
            if let Some(dir) = run_dir {
                let mut archive = BatchArchive::open(dir.root.join("batches").join(format!("iter-{iteration}.jsonl")))?;
                for b in new.values() {
                    archive.append(b)?;
                }
            }
            if cfg.cumulative {
                for (family, batch) in new {
                    batches.entry(family).or_default().merge(batch)?;
                }
            } else {
                batches = new;
            }
            batch_sizes = batches.iter().map(|(k, v)| (k.clone(), v.len())).collect();
            policies = train_policies(domain, &policies, &batches, &cfg.training, cfg.fine_tune, cfg.seed.wrapping_add(iteration as u64))?;
            if let Some(dir) = run_dir {
                save_policies(&dir.policy_dir(iteration + 1), &policies, &domain.name())?;
            }
        }
        let evaluation = evaluate(domain, &policies, cfg.eval.clone(), false);
        let report = PlpIterationReport {
            class: domain.name(),
            iteration,
            seed: cfg.seed,
            training_summary: OutcomeSummary::of(&training),
            training,
            evaluation_summary: OutcomeSummary::of(&evaluation),
            evaluation,
            checksums_before: before,
            checksums_after: checksums(&policies),
            batch_sizes,
            mechanism: None,
        };
        if let Some(dir) = run_dir {
            dir.append_report(&report)?;
        }
        reports.push(report);
    }
    Ok((reports, policies))
}

/// How source policies are applied to the target class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransferMechanism {
    /// Near-greedy search at every level with the carried policies.
    NearGreedy,
    /// Argmax rollouts only.
    Greedy,
    /// Baseline order everywhere (ablation).
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransferSpec {
    pub source: String,
    pub target: String,
    /// Families carried over from the source policies.
    pub families: Vec<String>,
    pub retrain: bool,
    pub mechanism: TransferMechanism,
    pub examples: Range<u64>,
}

/// Evaluate carried-over policies on the target class without retraining
/// (retraining, when requested, runs one PLP iteration on the target first).
pub fn run_transfer<D: PlpDomain>(target: &D, source: &PolicySet, spec: &TransferSpec, plp: &PlpConfig) -> Result<PlpIterationReport, PlpError> {
    let mut policies = PolicySet::new();
    for family in &spec.families {
        let net = source.get(family).ok_or_else(|| PlpError::MissingPolicy(family.clone()))?;
        policies.insert(family.clone(), net.clone());
    }
    if spec.mechanism == TransferMechanism::Uniform {
        policies.clear();
    }
    let before = checksums(&policies);
    if spec.retrain {
        let mut plans = Vec::new();
        for i in plp.train.clone() {
            if let (_, Some(p)) = plan_one(target, i, &policies, false) {
                plans.push((i, p));
            }
        }
        let mut batches: BTreeMap<String, PlanBatch> = BTreeMap::new();
        for (i, p) in &plans {
            let world = target.example(*i).world;
            let h = target.hierarchy(&world, &policies, false);
            for (family, batch) in extract_batches(&h, &[(*i, p.as_ref())])? {
                batches.entry(family).or_default().merge(batch)?;
            }
        }
        policies = train_policies(target, &policies, &batches, &plp.training, true, plp.seed)?;
    }
    let greedy = spec.mechanism == TransferMechanism::Greedy;
    let evaluation = evaluate(target, &policies, spec.examples.clone(), greedy);
    Ok(PlpIterationReport {
        class: target.name(),
        iteration: 0,
        seed: plp.seed,
        training: Vec::new(),
        training_summary: OutcomeSummary::of(&[]),
        evaluation_summary: OutcomeSummary::of(&evaluation),
        evaluation,
        checksums_before: before,
        checksums_after: checksums(&policies),
        batch_sizes: BTreeMap::new(),
        mechanism: Some(format!("{:?} from {}", spec.mechanism, spec.source)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_counts() {
        let o = |solved, n| ExampleOutcome {
            index: 0,
            solved,
            nodes_expanded: n,
            transitions: 0,
            sub_invocations: 0,
            tree_size: 0,
            plan_length: 0,
            reward: None,
            error: None,
        };
        let s = OutcomeSummary::of(&[o(true, 5), o(false, 1), o(true, 9), o(true, 3)]);
        assert_eq!((s.attempted, s.solved), (4, 3));
        assert_eq!(s.accuracy, 0.75);
        assert_eq!(s.median_nodes_expanded, 5);
        assert_eq!(OutcomeSummary::of(&[]).accuracy, 0.0);
    }

    #[test]
    fn seed_ranges_must_be_disjoint() {
        assert!(overlaps(&(0..10), &(5..20)));
        assert!(!overlaps(&(0..10), &(10..20)));
    }
}
