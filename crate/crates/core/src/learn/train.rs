//! Supervised training: cross-entropy, Gumbel-softmax regression and
//! sub-goal classification, all with plain minibatch gradient descent.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::mlp::{sigmoid, softmax, Gradients, Head, Mlp, MlpSpec};
use super::LearnError;

/// One supervised example: features and the demonstrated action index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub features: Vec<f64>,
    pub target: usize,
    pub weight: f64,
}

impl Sample {
    pub fn new(features: Vec<f64>, target: usize) -> Self {
        Self { features, target, weight: 1.0 }
    }
}

/// Gumbel temperature per epoch: `max(end, start * decay^epoch)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TemperatureSchedule {
    pub start: f64,
    pub end: f64,
    pub decay: f64,
}

impl TemperatureSchedule {
    pub fn constant(t: f64) -> Self {
        Self { start: t, end: t, decay: 1.0 }
    }

    /// Geometric decay from `start` to `end` over `epochs`.
    pub fn annealed(start: f64, end: f64, epochs: usize) -> Self {
        let decay = (end / start).powf(1.0 / epochs.saturating_sub(1).max(1) as f64);
        Self { start, end, decay }
    }

    pub fn at(&self, epoch: usize) -> f64 {
        (self.start * self.decay.powi(epoch as i32)).max(self.end)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub temperature: TemperatureSchedule,
    /// Fraction of samples held out for a validation loss.
    pub validation_split: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.5,
            epochs: 200,
            batch_size: 16,
            temperature: TemperatureSchedule::annealed(5.0, 0.1, 200),
            validation_split: 0.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epoch_losses: Vec<f64>,
    pub best_loss: f64,
    pub final_loss: f64,
    pub validation_loss: Option<f64>,
    pub samples: usize,
    pub checksum: u64,
    pub warnings: Vec<String>,
}

/// Per-sample loss with its gradient on the logits.
#[derive(Debug, Clone, PartialEq)]
pub enum Loss {
    CrossEntropy,
    /// `(a - M . softmax((z + noise) / temperature))^2`, `M = [0, 1, ..]`.
    GumbelMse { noise: Vec<f64>, temperature: f64 },
    /// Binary cross-entropy on a single sigmoid output.
    Bce,
}

impl Loss {
    pub fn eval(&self, logits: &[f64], target: usize) -> (f64, Vec<f64>) {
        match self {
            Loss::CrossEntropy => {
                let p = softmax(logits, 1.0);
                let loss = -p[target].max(1e-300).ln();
                let mut d = p;
                d[target] -= 1.0;
                (loss, d)
            }
            Loss::GumbelMse { noise, temperature } => {
                let shifted: Vec<f64> = logits.iter().zip(noise).map(|(z, g)| z + g).collect();
                let y = softmax(&shifted, *temperature);
                let m: f64 = y.iter().enumerate().map(|(k, yk)| k as f64 * yk).sum();
                let err = target as f64 - m;
                let dy: Vec<f64> = (0..y.len()).map(|k| -2.0 * err * k as f64).collect();
                let dot: f64 = y.iter().zip(&dy).map(|(a, b)| a * b).sum();
                let d = y.iter().zip(&dy).map(|(yj, dyj)| yj * (dyj - dot) / temperature).collect();
                (err * err, d)
            }
            Loss::Bce => {
                let p = sigmoid(logits[0]);
                let y = target as f64;
                let loss = -(y * p.max(1e-300).ln() + (1.0 - y) * (1.0 - p).max(1e-300).ln());
                (loss, vec![p - y])
            }
        }
    }
}

/// Standard Gumbel noise `-ln(-ln u)`.
pub fn gumbel_noise(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let u: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
            -(-u.ln()).ln()
        })
        .collect()
}

/// Draw an action from a Gumbel-softmax head: the argmax of the noisy,
/// tempered softmax, which is distributed as `softmax(z)`.
pub fn gumbel_sample(net: &Mlp, x: &[f64], temperature: f64, rng: &mut impl Rng) -> usize {
    let z = net.logits(x);
    let g = gumbel_noise(rng, z.len());
    let shifted: Vec<f64> = z.iter().zip(&g).map(|(a, b)| a + b).collect();
    let y = softmax(&shifted, temperature);
    argmax(&y)
}

pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

fn check_samples(net: &Mlp, samples: &[Sample]) -> Result<(), LearnError> {
    if samples.is_empty() {
        return Err(LearnError::EmptyBatch);
    }
    for s in samples {
        if s.features.len() != net.inputs() {
            return Err(LearnError::WidthMismatch { expected: net.inputs(), got: s.features.len() });
        }
        let limit = if net.spec.head == Head::Sigmoid { 2 } else { net.outputs() };
        if s.target >= limit {
            return Err(LearnError::TargetOutOfRange { target: s.target, outputs: limit });
        }
    }
    Ok(())
}

enum Objective {
    CrossEntropy,
    Gumbel,
    Bce,
}

fn fit(net: &mut Mlp, samples: &[Sample], cfg: &TrainConfig, objective: Objective) -> Result<TrainReport, LearnError> {
    check_samples(net, samples)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let held = ((samples.len() as f64) * cfg.validation_split).floor() as usize;
    let (train_idx, val_idx) = if held > 0 && held < samples.len() {
        order.shuffle(&mut rng);
        let (t, v) = order.split_at(samples.len() - held);
        (t.to_vec(), v.to_vec())
    } else {
        (order, Vec::new())
    };
    let batch_size = cfg.batch_size.max(1);
    let mut idx = train_idx.clone();
    let mut report = TrainReport {
        epoch_losses: Vec::with_capacity(cfg.epochs),
        best_loss: f64::INFINITY,
        final_loss: f64::NAN,
        validation_loss: None,
        samples: samples.len(),
        checksum: 0,
        warnings: Vec::new(),
    };
    let mut grads = Gradients::zeros(net);
    for epoch in 0..cfg.epochs {
        let temperature = cfg.temperature.at(epoch);
        idx.shuffle(&mut rng);
        let mut total = 0.0;
        let mut weight_total = 0.0;
        for chunk in idx.chunks(batch_size) {
            grads.weights.iter_mut().for_each(|g| g.iter_mut().for_each(|v| *v = 0.0));
            grads.bias.iter_mut().for_each(|g| g.iter_mut().for_each(|v| *v = 0.0));
            let mut chunk_weight = 0.0;
            for &i in chunk {
                let s = &samples[i];
                let cache = net.forward_cache(&s.features);
                let loss = match objective {
                    Objective::CrossEntropy => Loss::CrossEntropy,
                    Objective::Gumbel => Loss::GumbelMse { noise: gumbel_noise(&mut rng, net.outputs()), temperature },
                    Objective::Bce => Loss::Bce,
                };
                let (l, mut d) = loss.eval(cache.logits(), s.target);
                d.iter_mut().for_each(|v| *v *= s.weight);
                net.backward(&cache, &d, &mut grads);
                total += l * s.weight;
                weight_total += s.weight;
                chunk_weight += s.weight;
            }
            if chunk_weight > 0.0 {
                // A short final chunk takes a proportionally shorter step.
                let nominal = chunk_weight / chunk.len() as f64 * batch_size as f64;
                net.apply(&grads, cfg.learning_rate, 1.0 / nominal);
            }
        }
        let mean = total / weight_total;
        if !mean.is_finite() {
            return Err(LearnError::Diverged { epoch, loss: mean });
        }
        report.best_loss = report.best_loss.min(mean);
        report.epoch_losses.push(mean);
    }
    report.final_loss = report.epoch_losses.last().copied().unwrap_or(f64::NAN);
    if !val_idx.is_empty() {
        let temperature = cfg.temperature.at(cfg.epochs.saturating_sub(1));
        let mut total = 0.0;
        for &i in &val_idx {
            let s = &samples[i];
            let loss = match objective {
                Objective::CrossEntropy => Loss::CrossEntropy,
                Objective::Gumbel => Loss::GumbelMse { noise: vec![0.0; net.outputs()], temperature },
                Objective::Bce => Loss::Bce,
            };
            total += loss.eval(&net.logits(&s.features), s.target).0;
        }
        report.validation_loss = Some(total / val_idx.len() as f64);
    }
    report.checksum = net.checksum();
    Ok(report)
}

/// Fine-tune `net` on `samples` with the cross-entropy loss.
pub fn fit_cross_entropy(net: &mut Mlp, samples: &[Sample], cfg: &TrainConfig) -> Result<TrainReport, LearnError> {
    fit(net, samples, cfg, Objective::CrossEntropy)
}

/// Fresh network trained with the cross-entropy loss.
pub fn train_cross_entropy(samples: &[Sample], spec: &MlpSpec, cfg: &TrainConfig) -> Result<(Mlp, TrainReport), LearnError> {
    let mut net = Mlp::new(spec.clone())?;
    let report = fit_cross_entropy(&mut net, samples, cfg)?;
    Ok((net, report))
}

/// Fresh network trained by regressing the action index on a
/// Gumbel-softmax output. Noise is drawn from the seeded generator.
pub fn train_gumbel_mse(samples: &[Sample], spec: &MlpSpec, cfg: &TrainConfig) -> Result<(Mlp, TrainReport), LearnError> {
    if spec.head != Head::GumbelSoftmax {
        return Err(LearnError::BadSpec("Gumbel training needs a GumbelSoftmax head".into()));
    }
    let mut net = Mlp::new(spec.clone())?;
    let report = fit(&mut net, samples, cfg, Objective::Gumbel)?;
    Ok((net, report))
}

/// Learned sub-goal predicate: sigmoid output thresholded at 0.5.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgoalClassifier {
    pub net: Mlp,
}

impl SubgoalClassifier {
    pub fn probability(&self, features: &[f64]) -> f64 {
        self.net.forward(features)[0]
    }

    pub fn predict(&self, features: &[f64]) -> bool {
        self.probability(features) >= 0.5
    }

    pub fn accuracy(&self, positives: &[Vec<f64>], negatives: &[Vec<f64>]) -> f64 {
        let right = positives.iter().filter(|x| self.predict(x)).count() + negatives.iter().filter(|x| !self.predict(x)).count();
        right as f64 / (positives.len() + negatives.len()) as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierReport {
    pub train: TrainReport,
    pub training_accuracy: f64,
    /// Feature vectors present in both classes; no classifier can get
    /// these all right.
    pub conflicting: usize,
    pub reweighted: bool,
}

/// Train a sub-goal classifier. Above 100:1 class imbalance the minority
/// class is reweighted to balance the loss and a warning is recorded.
pub fn train_subgoal_classifier(
    positives: &[Vec<f64>],
    negatives: &[Vec<f64>],
    spec: &MlpSpec,
    cfg: &TrainConfig,
) -> Result<(SubgoalClassifier, ClassifierReport), LearnError> {
    if positives.is_empty() {
        return Err(LearnError::EmptyClass("positive"));
    }
    if negatives.is_empty() {
        return Err(LearnError::EmptyClass("negative"));
    }
    if spec.head != Head::Sigmoid || spec.outputs() != 1 {
        return Err(LearnError::BadSpec("classifier needs a single sigmoid output".into()));
    }
    let (np, nn) = (positives.len() as f64, negatives.len() as f64);
    let ratio = np.max(nn) / np.min(nn);
    let reweighted = ratio > 100.0;
    let (wp, wn) = if reweighted { ((np + nn) / (2.0 * np), (np + nn) / (2.0 * nn)) } else { (1.0, 1.0) };
    let samples: Vec<Sample> = positives
        .iter()
        .map(|x| Sample { features: x.clone(), target: 1, weight: wp })
        .chain(negatives.iter().map(|x| Sample { features: x.clone(), target: 0, weight: wn }))
        .collect();
    let mut net = Mlp::new(spec.clone())?;
    let mut train = fit(&mut net, &samples, cfg, Objective::Bce)?;
    if reweighted {
        train.warnings.push(format!("class imbalance {ratio:.0}:1, reweighted"));
    }
    let neg_keys: std::collections::HashSet<Vec<u64>> =
        negatives.iter().map(|x| x.iter().map(|v| v.to_bits()).collect()).collect();
    let conflicting = positives.iter().filter(|x| neg_keys.contains(&x.iter().map(|v| v.to_bits()).collect::<Vec<_>>())).count();
    if conflicting > 0 {
        train.warnings.push(format!("{conflicting} feature vectors occur in both classes (irreducible error)"));
    }
    let classifier = SubgoalClassifier { net };
    let training_accuracy = classifier.accuracy(positives, negatives);
    Ok((classifier, ClassifierReport { train, training_accuracy, conflicting, reweighted }))
}

/// Largest relative error between analytic and central-difference
/// parameter gradients of `loss` at `(x, target)`.
pub fn gradient_check(net: &Mlp, x: &[f64], target: usize, loss: &Loss, eps: f64) -> f64 {
    let cache = net.forward_cache(x);
    let (_, d) = loss.eval(cache.logits(), target);
    let mut grads = Gradients::zeros(net);
    net.backward(&cache, &d, &mut grads);
    let analytic = grads.flat();
    let mut probe = net.clone();
    let mut worst: f64 = 0.0;
    for (i, &a) in analytic.iter().enumerate() {
        let original = *probe.parameters_mut().nth(i).unwrap();
        *probe.parameters_mut().nth(i).unwrap() = original + eps;
        let up = loss.eval(&probe.logits(x), target).0;
        *probe.parameters_mut().nth(i).unwrap() = original - eps;
        let down = loss.eval(&probe.logits(x), target).0;
        *probe.parameters_mut().nth(i).unwrap() = original;
        let numeric = (up - down) / (2.0 * eps);
        let scale = a.abs().max(numeric.abs()).max(1e-8);
        worst = worst.max((a - numeric).abs() / scale);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frequencies(samples: usize, zeros: usize) -> Vec<Sample> {
        (0..samples).map(|i| Sample::new(vec![1.0, 0.5], if i < zeros { 0 } else { 1 })).collect()
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for seed in 0..5 {
            let net = Mlp::new(MlpSpec::new(vec![3, 5, 4, 4], Head::Softmax1d, seed)).unwrap();
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            assert!(gradient_check(&net, &x, 2, &Loss::CrossEntropy, 1e-6) < 1e-4);
            let noise = gumbel_noise(&mut rng, 4);
            assert!(gradient_check(&net, &x, 3, &Loss::GumbelMse { noise, temperature: 0.7 }, 1e-6) < 1e-4);
            let net = Mlp::new(MlpSpec::new(vec![3, 5, 1], Head::Sigmoid, seed)).unwrap();
            assert!(gradient_check(&net, &x, 1, &Loss::Bce, 1e-6) < 1e-4);
        }
    }

    #[test]
    fn relu_gradients_match_finite_differences() {
        let mut spec = MlpSpec::new(vec![4, 6, 3], Head::Softmax1d, 9);
        spec.activation = super::super::mlp::Activation::Relu;
        let net = Mlp::new(spec).unwrap();
        assert!(gradient_check(&net, &[0.3, -0.2, 0.9, 0.1], 0, &Loss::CrossEntropy, 1e-6) < 1e-4);
    }

    #[test]
    fn cross_entropy_recovers_seventy_thirty() {
        let spec = MlpSpec::new(vec![2, 4, 2], Head::Softmax1d, 1);
        let (net, report) = train_cross_entropy(&frequencies(100, 70), &spec, &TrainConfig::default()).unwrap();
        let p = net.forward(&[1.0, 0.5]);
        assert!((p[0] - 0.7).abs() <= 0.05, "{p:?}");
        assert!(report.best_loss <= report.epoch_losses[0]);
    }

    #[test]
    fn single_pair_goes_to_certainty() {
        let spec = MlpSpec::new(vec![2, 4, 3], Head::Softmax1d, 1);
        let samples = vec![Sample::new(vec![0.2, -0.4], 2); 10];
        let cfg = TrainConfig { epochs: 400, ..TrainConfig::default() };
        let (net, _) = train_cross_entropy(&samples, &spec, &cfg).unwrap();
        assert!(net.forward(&[0.2, -0.4])[2] > 0.99);
    }

    #[test]
    fn training_is_bit_reproducible() {
        let spec = MlpSpec::new(vec![2, 4, 2], Head::Softmax1d, 5);
        let cfg = TrainConfig { epochs: 20, ..TrainConfig::default() };
        let (a, ra) = train_cross_entropy(&frequencies(50, 20), &spec, &cfg).unwrap();
        let (b, rb) = train_cross_entropy(&frequencies(50, 20), &spec, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(ra.checksum, rb.checksum);
    }

    #[test]
    fn gumbel_matches_cross_entropy_on_deterministic_data() {
        let samples: Vec<Sample> = (0..40).map(|i| Sample::new(vec![(i % 2) as f64, 1.0 - (i % 2) as f64], i % 2)).collect();
        let ce = train_cross_entropy(&samples, &MlpSpec::new(vec![2, 4, 2], Head::Softmax1d, 2), &TrainConfig::default()).unwrap().0;
        let (gs, _) = train_gumbel_mse(&samples, &MlpSpec::new(vec![2, 4, 2], Head::GumbelSoftmax, 2), &TrainConfig::default()).unwrap();
        for s in &samples {
            assert_eq!(argmax(&ce.forward(&s.features)), argmax(&gs.forward(&s.features)));
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            let g = gumbel_noise(&mut rng, 2);
            let z: Vec<f64> = gs.logits(&s.features).iter().zip(&g).map(|(a, b)| a + b).collect();
            assert!(softmax(&z, 0.1).iter().copied().fold(0.0, f64::max) >= 0.9);
        }
    }

    fn gumbel_sampled_frequency(net: &Mlp) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let draws = 20_000;
        let zeros = (0..draws).filter(|_| gumbel_sample(net, &[1.0, 0.5], 1.0, &mut rng) == 0).count();
        zeros as f64 / draws as f64
    }

    /// Frequency of action 0 at the minimizer of the expected Gumbel MSE for
    /// a two-action state with `P(a = 1) = q`, by quadrature over the
    /// logistic difference of two Gumbel variables.
    fn gumbel_mse_optimum(q: f64, temperature: f64) -> f64 {
        let n = 20_000;
        let l: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).map(|u| (u / (1.0 - u)).ln()).collect();
        let loss = |d: f64| {
            l.iter()
                .map(|&x| {
                    let y = sigmoid((d + x) / temperature);
                    (1.0 - q) * y * y + q * (1.0 - y) * (1.0 - y)
                })
                .sum::<f64>()
                / n as f64
        };
        let (mut lo, mut hi) = (-10.0f64, 10.0f64);
        for _ in 0..100 {
            let m1 = lo + (hi - lo) / 3.0;
            let m2 = hi - (hi - lo) / 3.0;
            if loss(m1) < loss(m2) {
                hi = m2;
            } else {
                lo = m1;
            }
        }
        let d = 0.5 * (lo + hi);
        l.iter().filter(|&&x| d + x < 0.0).count() as f64 / n as f64
    }

    #[test]
    fn gumbel_training_reaches_the_mse_optimum() {
        let spec = MlpSpec::new(vec![2, 4, 2], Head::GumbelSoftmax, 4);
        let cfg = TrainConfig { temperature: TemperatureSchedule::constant(1.0), epochs: 300, ..TrainConfig::default() };
        let (net, _) = train_gumbel_mse(&frequencies(100, 70), &spec, &cfg).unwrap();
        let oracle = gumbel_mse_optimum(0.3, 1.0);
        let f = gumbel_sampled_frequency(&net);
        assert!((f - oracle).abs() <= 0.03, "sampled {f}, optimum {oracle}");
    }

    #[test]
    #[ignore = "the expected-MSE optimum samples action 0 about 90% of the time, not 70%"]
    fn gumbel_samples_follow_seventy_thirty() {
        let spec = MlpSpec::new(vec![2, 4, 2], Head::GumbelSoftmax, 4);
        let cfg = TrainConfig { temperature: TemperatureSchedule::constant(1.0), epochs: 300, ..TrainConfig::default() };
        let (net, _) = train_gumbel_mse(&frequencies(100, 70), &spec, &cfg).unwrap();
        let f = gumbel_sampled_frequency(&net);
        assert!((f - 0.7).abs() <= 0.1, "sampled frequency {f}");
    }

    #[test]
    fn classifier_separates_and_reports_conflicts() {
        let pos: Vec<Vec<f64>> = (0..30).map(|i| vec![1.0 + i as f64 * 0.01, 0.5]).collect();
        let neg: Vec<Vec<f64>> = (0..30).map(|i| vec![-1.0 - i as f64 * 0.01, 0.5]).collect();
        let spec = MlpSpec::new(vec![2, 4, 1], Head::Sigmoid, 0);
        let (c, report) = train_subgoal_classifier(&pos, &neg, &spec, &TrainConfig::default()).unwrap();
        assert!(report.training_accuracy >= 0.95);
        assert!(c.predict(&[1.2, 0.5]));
        assert_eq!(report.conflicting, 0);

        let mut neg2 = neg.clone();
        neg2.push(pos[0].clone());
        let (_, report) = train_subgoal_classifier(&pos, &neg2, &spec, &TrainConfig::default()).unwrap();
        assert_eq!(report.conflicting, 1);
        assert!(!report.train.warnings.is_empty());

        assert_eq!(train_subgoal_classifier(&pos, &[], &spec, &TrainConfig::default()).unwrap_err(), LearnError::EmptyClass("negative"));
    }

    #[test]
    fn heavy_imbalance_is_reweighted() {
        let pos = vec![vec![1.0]; 2];
        let neg = vec![vec![-1.0]; 300];
        let spec = MlpSpec::new(vec![1, 2, 1], Head::Sigmoid, 0);
        let (c, report) = train_subgoal_classifier(&pos, &neg, &spec, &TrainConfig::default()).unwrap();
        assert!(report.reweighted);
        assert!(c.predict(&[1.0]));
    }

    #[test]
    fn temperature_schedule_anneals_to_end() {
        let t = TemperatureSchedule::annealed(5.0, 0.1, 200);
        assert_eq!(t.at(0), 5.0);
        assert!((t.at(199) - 0.1).abs() < 1e-9);
        assert_eq!(t.at(500), 0.1);
    }
}
