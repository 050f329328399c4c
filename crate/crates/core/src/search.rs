//! Base search methods: uniform single-path sampling (RSPS) and first-order
//! DARTS, plus architecture derivation from a trained store.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::data::{epoch_batches, Dataset};
use crate::error::{Error, Result};
use crate::gm::{GmAggregation, Similarity};
use crate::math;
use crate::optim::{sgd_step, OptimizerConfig};
use crate::rng::{derive_seed, rng_from_seed, Rng};
use crate::supernet::{
    backward_child, backward_mixture, evaluate_child, evaluate_mix, touched_slots, AllowedOps,
    Architecture, CellGraph, EdgeMix, SharedWeights,
};

/// Which base method trains the (sub-)supernets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchMethod {
    Rsps,
    Darts1,
}

/// Everything the pipeline needs to train, split and search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub method: SearchMethod,
    pub epochs: usize,
    pub optimizer: OptimizerConfig,
    pub arch_lr: f64,
    pub seed: u64,
    pub warmup_epochs: usize,
    pub num_splits: usize,
    pub branch_factors: Vec<usize>,
    pub gm_batches: usize,
    pub similarity: Similarity,
    pub gm_aggregation: GmAggregation,
    /// Reinitialize leaves after the final split.
    pub restart: bool,
    /// Most children evaluated when deriving from an RSPS-trained store.
    pub derive_cap: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            method: SearchMethod::Rsps,
            epochs: 30,
            optimizer: OptimizerConfig::default(),
            arch_lr: 0.05,
            seed: 0,
            warmup_epochs: 5,
            num_splits: 0,
            branch_factors: Vec::new(),
            gm_batches: 8,
            similarity: Similarity::Cosine,
            gm_aggregation: GmAggregation::AverageThenScore,
            restart: true,
            derive_cap: 256,
        }
    }
}

impl SearchConfig {
    /// Checks the config against a space and a training split size.
    pub fn validate(&self, graph: &CellGraph, train_size: usize) -> Result<()> {
        self.optimizer.validate(train_size)?;
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be positive".into()));
        }
        if self.method == SearchMethod::Darts1 && !(self.arch_lr > 0.0) {
            return Err(Error::InvalidConfig(
                "arch_lr must be positive for darts1".into(),
            ));
        }
        if self.branch_factors.len() != self.num_splits {
            return Err(Error::InvalidConfig(format!(
                "branch_factors has {} entries but num_splits = {}",
                self.branch_factors.len(),
                self.num_splits
            )));
        }
        let min_ops = graph.min_op_set_size();
        for (t, &b) in self.branch_factors.iter().enumerate() {
            if b < 2 || b > min_ops {
                return Err(Error::InvalidConfig(format!(
                    "branch_factors[{t}] = {b} must lie in 2..={min_ops}"
                )));
            }
        }
        if self.num_splits > graph.num_edges() {
            return Err(Error::InvalidConfig(format!(
                "num_splits = {} exceeds the {} edges of the space",
                self.num_splits,
                graph.num_edges()
            )));
        }
        if self.gm_batches == 0 {
            return Err(Error::InvalidConfig("gm_batches must be positive".into()));
        }
        if self.derive_cap == 0 {
            return Err(Error::InvalidConfig("derive_cap must be positive".into()));
        }
        Ok(())
    }
}

/// Per-epoch training record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_loss: f64,
    pub valid_accuracy: f64,
}

/// Outcome of training one (sub-)supernet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedSupernet {
    pub label: String,
    pub method: SearchMethod,
    pub final_train_loss: f64,
    pub final_valid_loss: f64,
    pub valid_accuracy: f64,
    pub epoch_log: Vec<EpochRecord>,
}

/// Children used to score a store: all of them, or a seeded uniform sample
/// of `cap` when there are more. Sorted lexicographically.
pub fn eval_children(allowed: &AllowedOps, cap: usize, seed: u64) -> Vec<Architecture> {
    let all = allowed.enumerate();
    if all.len() <= cap {
        return all;
    }
    let mut rng = rng_from_seed(derive_seed(seed, "eval-children"));
    let mut picked: Vec<usize> = index::sample(&mut rng, all.len(), cap).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|i| all[i].clone()).collect()
}

/// One SGD epoch where `choose` picks the child for each minibatch.
/// Returns the mean minibatch loss.
#[allow(clippy::too_many_arguments)]
fn sgd_epoch(
    graph: &CellGraph,
    weights: &mut SharedWeights,
    data: &Dataset,
    opt: &OptimizerConfig,
    rng: &mut Rng,
    epoch: usize,
    horizon: usize,
    choose: &mut dyn FnMut(&mut Rng) -> Architecture,
) -> Result<f64> {
    let batches = epoch_batches(&data.train, opt.batch_size, rng);
    let nb = batches.len();
    let mut total = 0.0;
    for (i, idx) in batches.iter().enumerate() {
        let arch = choose(rng);
        let batch = data.batch(idx);
        let loss = backward_child(weights, graph, &arch, &batch)?;
        if !loss.is_finite() {
            return Err(Error::NonFinite("training loss"));
        }
        total += loss;
        let slots = touched_slots(graph, &arch);
        let t = (epoch as f64 + i as f64 / nb as f64) / horizon.max(1) as f64;
        sgd_step(weights.params_for_mut(&slots), opt, t);
    }
    Ok(total / nb as f64)
}

/// Mean valid loss and accuracy over a fixed set of children.
pub fn evaluate_children(
    graph: &CellGraph,
    weights: &SharedWeights,
    data: &Dataset,
    children: &[Architecture],
) -> Result<(f64, f64)> {
    let batch = data.valid_batch();
    let mut loss = 0.0;
    let mut acc = 0.0;
    for arch in children {
        let (l, a) = evaluate_child(weights, graph, arch, &batch)?;
        loss += l;
        acc += a;
    }
    let n = children.len() as f64;
    Ok((loss / n, acc / n))
}

fn mean_train_loss(
    graph: &CellGraph,
    weights: &SharedWeights,
    data: &Dataset,
    children: &[Architecture],
) -> Result<f64> {
    let batch = data.batch(&data.train);
    let mut loss = 0.0;
    for arch in children {
        loss += evaluate_child(weights, graph, arch, &batch)?.0;
    }
    Ok(loss / children.len() as f64)
}

/// Uniform single-path training: each minibatch samples one child of the
/// store's allowed space and steps only the parameters it touches.
#[allow(clippy::too_many_arguments)]
pub fn rsps_train(
    graph: &CellGraph,
    weights: &mut SharedWeights,
    data: &Dataset,
    epochs: usize,
    opt: &OptimizerConfig,
    seed: u64,
    eval_cap: usize,
    label: &str,
) -> Result<TrainedSupernet> {
    let allowed = weights.allowed().clone();
    let children = eval_children(&allowed, eval_cap, seed);
    let mut rng = rng_from_seed(seed);
    let mut log = Vec::with_capacity(epochs);
    for epoch in 0..epochs {
        let train_loss = sgd_epoch(
            graph,
            weights,
            data,
            opt,
            &mut rng,
            epoch,
            epochs,
            &mut |r| allowed.sample(r),
        )?;
        let (valid_loss, valid_accuracy) = evaluate_children(graph, weights, data, &children)?;
        log.push(EpochRecord {
            epoch: epoch + 1,
            train_loss,
            valid_loss,
            valid_accuracy,
        });
    }
    finish(
        graph,
        weights,
        data,
        &children,
        log,
        SearchMethod::Rsps,
        label,
    )
}

fn finish(
    graph: &CellGraph,
    weights: &SharedWeights,
    data: &Dataset,
    children: &[Architecture],
    log: Vec<EpochRecord>,
    method: SearchMethod,
    label: &str,
) -> Result<TrainedSupernet> {
    let (final_train_loss, final_valid_loss, valid_accuracy) = match log.last() {
        Some(r) => (r.train_loss, r.valid_loss, r.valid_accuracy),
        None => {
            let (vl, va) = match method {
                SearchMethod::Rsps => evaluate_children(graph, weights, data, children)?,
                SearchMethod::Darts1 => evaluate_mix(
                    weights,
                    graph,
                    &EdgeMix::softmax(weights),
                    &data.valid_batch(),
                )?,
            };
            let tl = match method {
                SearchMethod::Rsps => mean_train_loss(graph, weights, data, children)?,
                SearchMethod::Darts1 => {
                    evaluate_mix(
                        weights,
                        graph,
                        &EdgeMix::softmax(weights),
                        &data.batch(&data.train),
                    )?
                    .0
                }
            };
            (tl, vl, va)
        }
    };
    Ok(TrainedSupernet {
        label: label.into(),
        method,
        final_train_loss,
        final_valid_loss,
        valid_accuracy,
        epoch_log: log,
    })
}

/// First-order DARTS: each step updates the architecture logits on a valid
/// minibatch, then the weights on a train minibatch, both through the
/// softmax mixture.
#[allow(clippy::too_many_arguments)]
pub fn darts1_train(
    graph: &CellGraph,
    weights: &mut SharedWeights,
    data: &Dataset,
    epochs: usize,
    opt: &OptimizerConfig,
    arch_lr: f64,
    seed: u64,
    label: &str,
) -> Result<TrainedSupernet> {
    let mut rng = rng_from_seed(seed);
    let mut log = Vec::with_capacity(epochs);
    for epoch in 0..epochs {
        let batches = epoch_batches(&data.train, opt.batch_size, &mut rng);
        let valid_batches = epoch_batches(&data.valid, opt.batch_size, &mut rng);
        let nb = batches.len();
        let mut total = 0.0;
        for (i, idx) in batches.iter().enumerate() {
            let vb = data.batch(&valid_batches[i % valid_batches.len()]);
            let (_, alpha_grad) = backward_mixture(weights, graph, &vb)?;
            for (alpha, g) in weights.arch_params.iter_mut().zip(&alpha_grad) {
                for (a, gi) in alpha.iter_mut().zip(g) {
                    *a -= arch_lr * gi;
                }
            }
            let (loss, _) = backward_mixture(weights, graph, &data.batch(idx))?;
            if !loss.is_finite() {
                return Err(Error::NonFinite("training loss"));
            }
            total += loss;
            let t = (epoch as f64 + i as f64 / nb as f64) / epochs as f64;
            sgd_step(weights.all_params_mut(), opt, t);
        }
        let (valid_loss, valid_accuracy) = evaluate_mix(
            weights,
            graph,
            &EdgeMix::softmax(weights),
            &data.valid_batch(),
        )?;
        log.push(EpochRecord {
            epoch: epoch + 1,
            train_loss: total / nb as f64,
            valid_loss,
            valid_accuracy,
        });
    }
    finish(graph, weights, data, &[], log, SearchMethod::Darts1, label)
}

/// Shared-weight valid accuracy of each architecture.
pub fn score_children(
    graph: &CellGraph,
    weights: &SharedWeights,
    data: &Dataset,
    archs: &[Architecture],
) -> Result<Vec<(f64, f64)>> {
    let batch = data.valid_batch();
    archs
        .iter()
        .map(|a| evaluate_child(weights, graph, a, &batch))
        .collect()
}

/// Picks the best child of a trained store.
///
/// DARTS: per-edge argmax of the logits (lowest op index on ties). RSPS: the
/// child with the highest shared-weight valid accuracy among
/// [`eval_children`] (lexicographically first on ties).
pub fn derive_architecture(
    graph: &CellGraph,
    weights: &SharedWeights,
    data: &Dataset,
    method: SearchMethod,
    cap: usize,
    seed: u64,
) -> Result<Architecture> {
    match method {
        SearchMethod::Darts1 => {
            let choice = weights
                .allowed()
                .sets()
                .iter()
                .zip(&weights.arch_params)
                .map(|(ops, alpha)| {
                    let mut best = 0;
                    for (i, &a) in alpha.iter().enumerate() {
                        if a > alpha[best] {
                            best = i;
                        }
                    }
                    ops[best]
                })
                .collect();
            Ok(Architecture::new(choice))
        }
        SearchMethod::Rsps => {
            let children = eval_children(weights.allowed(), cap, seed);
            let scores = score_children(graph, weights, data, &children)?;
            let mut best = 0;
            for (i, s) in scores.iter().enumerate() {
                if s.1 > scores[best].1 {
                    best = i;
                }
            }
            Ok(children[best].clone())
        }
    }
}

/// Standalone training of one child, one epoch at a time.
///
/// Uses exactly the minibatch stream [`rsps_train`] would use with the same
/// seed on a singleton store, so the two trajectories coincide.
#[derive(Debug, Clone)]
pub struct ChildTrainer {
    pub arch: Architecture,
    pub weights: SharedWeights,
    rng: Rng,
    epoch: usize,
    horizon: usize,
    opt: OptimizerConfig,
    last_train_loss: f64,
}

impl ChildTrainer {
    /// Fresh child with weights drawn from `init_seed` and batches from `seed`.
    /// `horizon` is the epoch count the learning-rate schedule spans.
    pub fn new(
        graph: &CellGraph,
        arch: Architecture,
        opt: OptimizerConfig,
        init_seed: u64,
        seed: u64,
        horizon: usize,
    ) -> Self {
        let weights = SharedWeights::init(graph, &AllowedOps::singleton(&arch), init_seed);
        ChildTrainer {
            arch,
            weights,
            rng: rng_from_seed(seed),
            epoch: 0,
            horizon,
            opt,
            last_train_loss: f64::NAN,
        }
    }

    pub fn epochs_trained(&self) -> usize {
        self.epoch
    }

    pub fn train_epoch(&mut self, graph: &CellGraph, data: &Dataset) -> Result<f64> {
        let arch = self.arch.clone();
        let loss = sgd_epoch(
            graph,
            &mut self.weights,
            data,
            &self.opt,
            &mut self.rng,
            self.epoch,
            self.horizon,
            &mut |_| arch.clone(),
        )?;
        self.epoch += 1;
        self.last_train_loss = loss;
        Ok(loss)
    }

    /// Mean minibatch loss of the last epoch (NaN before any training).
    pub fn last_train_loss(&self) -> f64 {
        self.last_train_loss
    }

    /// Valid loss and accuracy.
    pub fn evaluate(&self, graph: &CellGraph, data: &Dataset) -> Result<(f64, f64)> {
        evaluate_child(&self.weights, graph, &self.arch, &data.valid_batch())
    }
}

/// Seed pair for standalone training of `arch` under a root seed: weights and
/// batches get separate streams, both keyed by the architecture.
pub fn child_seeds(graph: &CellGraph, arch: &Architecture, seed: u64) -> (u64, u64) {
    let key = arch.encode(graph);
    (
        derive_seed(seed, &format!("init:{key}")),
        derive_seed(seed, &format!("train:{key}")),
    )
}

/// Trains `arch` standalone for `epochs`; returns (valid accuracy, final train loss).
pub fn train_standalone(
    graph: &CellGraph,
    arch: &Architecture,
    data: &Dataset,
    opt: &OptimizerConfig,
    epochs: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let (init_seed, batch_seed) = child_seeds(graph, arch, seed);
    let mut t = ChildTrainer::new(
        graph,
        arch.clone(),
        opt.clone(),
        init_seed,
        batch_seed,
        epochs,
    );
    for _ in 0..epochs {
        t.train_epoch(graph, data)?;
    }
    let (_, acc) = t.evaluate(graph, data)?;
    let train_loss = if epochs == 0 {
        evaluate_child(&t.weights, graph, arch, &data.batch(&data.train))?.0
    } else {
        t.last_train_loss()
    };
    Ok((acc, train_loss))
}

/// Mean of the valid-accuracy column of a log, for quick summaries.
pub fn mean_valid_accuracy(log: &[EpochRecord]) -> f64 {
    let v: Vec<f64> = log.iter().map(|r| r.valid_accuracy).collect();
    math::mean(&v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::make_spiral_dataset;
    use crate::ops::OpKind;
    use alloc::vec;

    fn setup() -> (CellGraph, Dataset, OptimizerConfig) {
        let g = CellGraph::toy();
        let d = make_spiral_dataset(7, 40, 3, 0.1).unwrap();
        let opt = OptimizerConfig {
            batch_size: 16,
            ..OptimizerConfig::default()
        };
        (g, d, opt)
    }

    #[test]
    fn zero_epochs_leave_weights_untouched() {
        let (g, d, opt) = setup();
        let w0 = SharedWeights::init(&g, &AllowedOps::full(&g), 1);
        let mut w = w0.clone();
        let r = rsps_train(&g, &mut w, &d, 0, &opt, 3, 256, "r").unwrap();
        assert_eq!(w, w0);
        assert!(r.epoch_log.is_empty());
        assert!(r.final_valid_loss.is_finite() && r.final_train_loss.is_finite());
    }

    #[test]
    fn singleton_store_matches_standalone_child() {
        let (g, d, opt) = setup();
        let arch = Architecture::new(vec![2, 1, 3]);
        let allowed = AllowedOps::singleton(&arch);
        let mut w = SharedWeights::init(&g, &allowed, 11);
        rsps_train(&g, &mut w, &d, 3, &opt, 12, 256, "r").unwrap();
        let mut t = ChildTrainer::new(&g, arch, opt.clone(), 11, 12, 3);
        for _ in 0..3 {
            t.train_epoch(&g, &d).unwrap();
        }
        assert_eq!(w, t.weights);
    }

    #[test]
    fn rsps_step_leaves_untouched_bundles_bitwise_equal() {
        let (g, d, mut opt) = setup();
        opt.batch_size = d.train.len();
        let w0 = SharedWeights::init(&g, &AllowedOps::full(&g), 5);
        let mut w = w0.clone();
        // a full-batch epoch is a single step with a single sampled child
        let mut rng = rng_from_seed(21);
        let allowed = w.allowed().clone();
        let mut sampled = None;
        sgd_epoch(&g, &mut w, &d, &opt, &mut rng, 0, 1, &mut |r| {
            let a = allowed.sample(r);
            sampled = Some(a.clone());
            a
        })
        .unwrap();
        let touched = touched_slots(&g, &sampled.unwrap());
        for ((key, after), (_, before)) in w.bundles().zip(w0.bundles()) {
            if !touched.contains(key) {
                assert_eq!(after.weight.value, before.weight.value);
                assert_eq!(after.bias.value, before.bias.value);
            }
        }
    }

    #[test]
    fn rsps_is_deterministic() {
        let (g, d, opt) = setup();
        let mut a = SharedWeights::init(&g, &AllowedOps::full(&g), 5);
        let mut b = a.clone();
        let ra = rsps_train(&g, &mut a, &d, 2, &opt, 9, 256, "r").unwrap();
        let rb = rsps_train(&g, &mut b, &d, 2, &opt, 9, 256, "r").unwrap();
        assert_eq!(a, b);
        assert_eq!(ra, rb);
    }

    #[test]
    fn darts_zero_arch_lr_keeps_logits() {
        let (g, d, opt) = setup();
        let mut w = SharedWeights::init(&g, &AllowedOps::full(&g), 5);
        darts1_train(&g, &mut w, &d, 1, &opt, 0.0, 3, "r").unwrap();
        assert!(w.arch_params.iter().flatten().all(|&a| a == 0.0));
    }

    #[test]
    fn darts_single_op_edges_is_plain_training() {
        let (g, d, opt) = setup();
        let arch = Architecture::new(vec![2, 1, 3]);
        let allowed = AllowedOps::singleton(&arch);
        let mut w = SharedWeights::init(&g, &allowed, 5);
        let r = darts1_train(&g, &mut w, &d, 2, &opt, 0.5, 3, "r").unwrap();
        // singleton softmax has zero logit gradient
        assert!(w.arch_params.iter().flatten().all(|&a| a == 0.0));
        assert_eq!(r.epoch_log.len(), 2);
    }

    #[test]
    fn darts_derivation_ties_and_shift_invariance() {
        let (g, d, _) = setup();
        let mut w = SharedWeights::init(&g, &AllowedOps::full(&g), 5);
        let a = derive_architecture(&g, &w, &d, SearchMethod::Darts1, 256, 0).unwrap();
        assert_eq!(a.choice, vec![0, 0, 0]);
        w.arch_params = vec![
            vec![0.1, 0.5, 0.2, 0.5],
            vec![1.0, 0.0, 0.0, 0.0],
            vec![0.0, 0.0, 0.0, 0.3],
        ];
        let a = derive_architecture(&g, &w, &d, SearchMethod::Darts1, 256, 0).unwrap();
        assert_eq!(a.choice, vec![1, 0, 3]);
        for row in &mut w.arch_params {
            row.iter_mut().for_each(|v| *v += 7.5);
        }
        assert_eq!(
            derive_architecture(&g, &w, &d, SearchMethod::Darts1, 256, 0).unwrap(),
            a
        );
    }

    #[test]
    fn rsps_derivation_rejects_all_zero_child() {
        let g = CellGraph::uniform(2, &[(0, 1)], &[OpKind::Zero, OpKind::Skip], 8, 3).unwrap();
        let d = make_spiral_dataset(7, 40, 3, 0.1).unwrap();
        let opt = OptimizerConfig {
            batch_size: 16,
            ..OptimizerConfig::default()
        };
        let mut w = SharedWeights::init(&g, &AllowedOps::full(&g), 2);
        rsps_train(&g, &mut w, &d, 5, &opt, 1, 256, "r").unwrap();
        let a = derive_architecture(&g, &w, &d, SearchMethod::Rsps, 256, 0).unwrap();
        assert_eq!(a.choice, vec![1]);
        assert_eq!(
            derive_architecture(&g, &w, &d, SearchMethod::Rsps, 256, 0).unwrap(),
            a
        );
    }

    #[test]
    fn eval_children_caps_with_sorted_sample() {
        let g = CellGraph::large();
        let kids = eval_children(&AllowedOps::full(&g), 256, 3);
        assert_eq!(kids.len(), 256);
        assert!(kids.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(
            eval_children(&AllowedOps::full(&CellGraph::toy()), 256, 3).len(),
            64
        );
    }

    #[test]
    fn config_validation() {
        let g = CellGraph::toy();
        let mut c = SearchConfig {
            num_splits: 2,
            branch_factors: vec![2, 3],
            ..SearchConfig::default()
        };
        assert!(c.validate(&g, 240).is_ok());
        c.num_splits = 3;
        assert!(c.validate(&g, 240).is_err());
        c.branch_factors = vec![2, 2, 5];
        assert!(c.validate(&g, 240).is_err());
    }
}
