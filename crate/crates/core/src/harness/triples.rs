//! Does sharing weights with a gradient-aligned partner help?
//!
//! For a sampled architecture `A`, partners are built by changing the op on
//! one edge. A partner's similarity is the cosine between `A`'s and the
//! partner's gradients on the weights both use, measured after a short joint
//! warmup. `A` is then trained jointly with a similar and with a dissimilar
//! partner from the same initialization and batch stream, and its losses are
//! compared.

use alloc::collections::btree_map::Entry;
use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::{epoch_batches, sample_batches, Dataset};
use crate::error::{Error, Result};
use crate::math;
use crate::optim::{sgd_step, OptimizerConfig};
use crate::rng::{derive_seed, rng_from_seed};
use crate::supernet::{
    backward_child, evaluate_child, touched_slots, AllowedOps, Architecture, CellGraph,
    SharedWeights,
};

/// Parameters of the triple experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripleConfig {
    pub n_triples: usize,
    pub tau_sim: f64,
    pub tau_dissim: f64,
    /// Joint epochs before similarity is measured.
    pub warmup_epochs: usize,
    /// Minibatches the measured gradients are averaged over.
    pub gm_batches: usize,
    /// Joint epochs whose losses are compared.
    pub joint_epochs: usize,
    /// Fresh `A` samples tried at each threshold level.
    pub max_retries: usize,
    /// Threshold relaxation per level.
    pub relax_step: f64,
    pub max_relax_steps: usize,
    pub optimizer: OptimizerConfig,
    pub seed: u64,
}

impl Default for TripleConfig {
    fn default() -> Self {
        TripleConfig {
            n_triples: 20,
            tau_sim: 0.7,
            tau_dissim: 0.3,
            warmup_epochs: 2,
            gm_batches: 16,
            joint_epochs: 20,
            max_retries: 10,
            relax_step: 0.05,
            max_relax_steps: 3,
            optimizer: OptimizerConfig::default(),
            seed: 0,
        }
    }
}

impl TripleConfig {
    pub fn validate(&self, train_size: usize) -> Result<()> {
        self.optimizer.validate(train_size)?;
        if !(self.tau_sim > self.tau_dissim) {
            return Err(Error::InvalidConfig(
                "tau_sim must exceed tau_dissim".into(),
            ));
        }
        if self.n_triples == 0
            || self.gm_batches == 0
            || self.max_retries == 0
            || self.joint_epochs == 0
        {
            return Err(Error::InvalidConfig(
                "n_triples, gm_batches, max_retries and joint_epochs must be positive".into(),
            ));
        }
        if !(self.relax_step >= 0.0) {
            return Err(Error::InvalidConfig(
                "relax_step must be non-negative".into(),
            ));
        }
        Ok(())
    }

    fn thresholds(&self, level: usize) -> (f64, f64) {
        let r = self.relax_step * level as f64;
        (self.tau_sim - r, self.tau_dissim + r)
    }
}

/// `A`'s losses during joint training with one partner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairLosses {
    /// Per epoch: mean loss over `A`'s minibatches.
    pub train_loss: Vec<f64>,
    /// Per epoch: loss on the validation split.
    pub valid_loss: Vec<f64>,
    pub final_train_loss: f64,
    pub final_valid_loss: f64,
}

/// One `(A, A_sim, A_dissim)` triple.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripleRecord {
    pub a: Architecture,
    pub a_sim: Architecture,
    pub a_dissim: Architecture,
    pub sim_similarity: f64,
    pub dissim_similarity: f64,
    pub tau_sim: f64,
    pub tau_dissim: f64,
    pub with_sim: PairLosses,
    pub with_dissim: PairLosses,
}

/// Mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(xs: &[f64]) -> Self {
        MeanStd {
            mean: math::mean(xs),
            std: math::std_dev(xs),
        }
    }
}

/// All triples and their aggregates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripleExperimentReport {
    pub config: TripleConfig,
    pub triples: Vec<TripleRecord>,
    pub sim_similarity: MeanStd,
    pub dissim_similarity: MeanStd,
    pub sim_train_loss: MeanStd,
    pub dissim_train_loss: MeanStd,
    pub sim_valid_loss: MeanStd,
    pub dissim_valid_loss: MeanStd,
    /// Threshold relaxations and other notes.
    pub notes: Vec<String>,
}

fn pair_allowed(a: &Architecture, b: &Architecture) -> AllowedOps {
    AllowedOps::from_sets(
        a.choice
            .iter()
            .zip(&b.choice)
            .map(|(&x, &y)| {
                if x == y {
                    alloc::vec![x]
                } else {
                    alloc::vec![x.min(y), x.max(y)]
                }
            })
            .collect(),
    )
}

/// Store for a pair, cut from a full store so `A`'s initial weights do not
/// depend on the partner.
fn pair_store(
    graph: &CellGraph,
    a: &Architecture,
    b: &Architecture,
    init_seed: u64,
) -> Result<SharedWeights> {
    SharedWeights::init(graph, &AllowedOps::full(graph), init_seed).restrict(&pair_allowed(a, b))
}

/// Alternates one minibatch of `a`, one of `b`, ... for `epochs`, stepping
/// only the parameters each member touches. Records `a`'s losses.
#[allow(clippy::too_many_arguments)]
pub fn joint_train_pair(
    graph: &CellGraph,
    weights: &mut SharedWeights,
    data: &Dataset,
    a: &Architecture,
    b: &Architecture,
    epochs: usize,
    opt: &OptimizerConfig,
    seed: u64,
) -> Result<PairLosses> {
    let mut rng = rng_from_seed(seed);
    let (slots_a, slots_b) = (touched_slots(graph, a), touched_slots(graph, b));
    let valid = data.valid_batch();
    let mut out = PairLosses {
        train_loss: Vec::with_capacity(epochs),
        valid_loss: Vec::with_capacity(epochs),
        final_train_loss: f64::NAN,
        final_valid_loss: f64::NAN,
    };
    for epoch in 0..epochs {
        let batches = epoch_batches(&data.train, opt.batch_size, &mut rng);
        let nb = batches.len();
        let (mut total, mut count) = (0.0, 0usize);
        for (i, idx) in batches.iter().enumerate() {
            let (arch, slots) = if i % 2 == 0 {
                (a, &slots_a)
            } else {
                (b, &slots_b)
            };
            let loss = backward_child(weights, graph, arch, &data.batch(idx))?;
            if !loss.is_finite() {
                return Err(Error::NonFinite("joint training loss"));
            }
            if i % 2 == 0 {
                total += loss;
                count += 1;
            }
            let t = (epoch as f64 + i as f64 / nb as f64) / epochs as f64;
            sgd_step(weights.params_for_mut(slots), opt, t);
        }
        out.train_loss.push(total / count as f64);
        out.valid_loss
            .push(evaluate_child(weights, graph, a, &valid)?.0);
    }
    if let (Some(&t), Some(&v)) = (out.train_loss.last(), out.valid_loss.last()) {
        out.final_train_loss = t;
        out.final_valid_loss = v;
    } else {
        out.final_train_loss = evaluate_child(weights, graph, a, &data.batch(&data.train))?.0;
        out.final_valid_loss = evaluate_child(weights, graph, a, &valid)?.0;
    }
    Ok(out)
}

/// Gradient of `arch` on the given bundles plus the head, averaged over batches.
fn shared_gradient(
    graph: &CellGraph,
    weights: &mut SharedWeights,
    data: &Dataset,
    arch: &Architecture,
    shared: &[(usize, usize)],
    batches: &[Vec<usize>],
) -> Result<Vec<f64>> {
    let mut acc: Vec<f64> = Vec::new();
    for idx in batches {
        backward_child(weights, graph, arch, &data.batch(idx))?;
        let mut flat = Vec::new();
        for &(e, o) in shared {
            let b = weights
                .bundle(e, o)
                .ok_or(Error::UnknownOp { edge: e, op: o })?;
            flat.extend_from_slice(b.weight.grad.data());
            flat.extend_from_slice(b.bias.grad.data());
        }
        flat.extend_from_slice(weights.head.weight.grad.data());
        flat.extend_from_slice(weights.head.bias.grad.data());
        if acc.is_empty() {
            acc = flat;
        } else {
            acc.iter_mut().zip(&flat).for_each(|(x, y)| *x += y);
        }
    }
    let m = batches.len() as f64;
    acc.iter_mut().for_each(|x| *x /= m);
    Ok(acc)
}

/// Cosine between `a`'s and `b`'s gradients on their shared weights after
/// `warmup_epochs` of joint training from `init_seed`.
#[allow(clippy::too_many_arguments)]
pub fn pair_similarity(
    graph: &CellGraph,
    data: &Dataset,
    a: &Architecture,
    b: &Architecture,
    warmup_epochs: usize,
    gm_batches: usize,
    opt: &OptimizerConfig,
    seed: u64,
) -> Result<f64> {
    let mut w = pair_store(graph, a, b, derive_seed(seed, "init"))?;
    joint_train_pair(
        graph,
        &mut w,
        data,
        a,
        b,
        warmup_epochs,
        opt,
        derive_seed(seed, "warmup"),
    )?;
    let slots_b = touched_slots(graph, b);
    let shared: Vec<(usize, usize)> = touched_slots(graph, a)
        .into_iter()
        .filter(|s| slots_b.contains(s))
        .collect();
    let mut rng = rng_from_seed(derive_seed(seed, "measure"));
    let batches = sample_batches(&data.train, gm_batches, opt.batch_size, &mut rng);
    let ga = shared_gradient(graph, &mut w, data, a, &shared, &batches)?;
    let gb = shared_gradient(graph, &mut w, data, b, &shared, &batches)?;
    let (na, nb) = (math::norm(&ga), math::norm(&gb));
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroNorm);
    }
    Ok((math::dot(&ga, &gb) / (na * nb)).clamp(-1.0, 1.0))
}

/// Every single-edge change of `a`.
fn neighbours(graph: &CellGraph, a: &Architecture) -> Vec<Architecture> {
    let mut out = Vec::new();
    for e in 0..graph.num_edges() {
        for o in 0..graph.op_set(e).len() {
            if o != a.choice[e] {
                let mut c = a.choice.clone();
                c[e] = o;
                out.push(Architecture::new(c));
            }
        }
    }
    out
}

struct Candidate {
    a: Architecture,
    partners: Vec<(Architecture, f64)>,
}

fn measure_candidate(
    graph: &CellGraph,
    data: &Dataset,
    cfg: &TripleConfig,
    seed: u64,
) -> Result<Candidate> {
    let mut rng = rng_from_seed(seed);
    let a = AllowedOps::full(graph).sample(&mut rng);
    let mut partners = neighbours(graph, &a);
    partners.shuffle(&mut rng);
    let mut measured = Vec::with_capacity(partners.len());
    for p in partners {
        match pair_similarity(
            graph,
            data,
            &a,
            &p,
            cfg.warmup_epochs,
            cfg.gm_batches,
            &cfg.optimizer,
            seed,
        ) {
            Ok(s) => measured.push((p, s)),
            Err(Error::ZeroNorm) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(Candidate {
        a,
        partners: measured,
    })
}

/// Samples `n_triples` triples and trains `A` with each partner.
pub fn triple_experiment(
    graph: &CellGraph,
    data: &Dataset,
    cfg: &TripleConfig,
) -> Result<TripleExperimentReport> {
    cfg.validate(data.train.len())?;
    if graph.num_edges() == 0 || graph.min_op_set_size() < 2 {
        return Err(Error::InvalidConfig(
            "triples need an edge with at least two ops".into(),
        ));
    }
    let mut notes = Vec::new();
    let mut triples = Vec::with_capacity(cfg.n_triples);
    for k in 0..cfg.n_triples {
        let mut cache: BTreeMap<usize, Candidate> = BTreeMap::new();
        let mut found = None;
        'levels: for level in 0..=cfg.max_relax_steps {
            let (ts, td) = cfg.thresholds(level);
            if ts <= td {
                break;
            }
            if level > 0 {
                notes.push(format!(
                    "triple {k}: relaxed thresholds to sim > {ts:.2}, dissim < {td:.2}"
                ));
            }
            for attempt in 0..cfg.max_retries {
                if let Entry::Vacant(slot) = cache.entry(attempt) {
                    let seed = derive_seed(cfg.seed, &format!("triple:{k}:{attempt}"));
                    slot.insert(measure_candidate(graph, data, cfg, seed)?);
                }
                let c = &cache[&attempt];
                let sim = c.partners.iter().find(|p| p.1 > ts);
                let dis = c.partners.iter().find(|p| p.1 < td);
                if let (Some(s), Some(d)) = (sim, dis) {
                    found = Some((c.a.clone(), s.clone(), d.clone(), ts, td, attempt));
                    break 'levels;
                }
            }
        }
        let Some((a, (a_sim, s_sim), (a_dis, s_dis), ts, td, attempt)) = found else {
            let best = cache.values().flat_map(|c| c.partners.iter().map(|p| p.1));
            let hi = best.clone().fold(f64::NEG_INFINITY, f64::max);
            let lo = best.fold(f64::INFINITY, f64::min);
            return Err(Error::NoQualifyingTriple(format!(
                "triple {k}: measured similarities span [{lo:.3}, {hi:.3}] over {} samples; no pair met the relaxed thresholds",
                cache.len()
            )));
        };
        let seed = derive_seed(cfg.seed, &format!("triple:{k}:{attempt}:joint"));
        let run = |partner: &Architecture| -> Result<PairLosses> {
            let mut w = pair_store(graph, &a, partner, derive_seed(seed, "init"))?;
            joint_train_pair(
                graph,
                &mut w,
                data,
                &a,
                partner,
                cfg.joint_epochs,
                &cfg.optimizer,
                derive_seed(seed, "train"),
            )
        };
        let with_sim = run(&a_sim)?;
        let with_dissim = run(&a_dis)?;
        triples.push(TripleRecord {
            a,
            a_sim,
            a_dissim: a_dis,
            sim_similarity: s_sim,
            dissim_similarity: s_dis,
            tau_sim: ts,
            tau_dissim: td,
            with_sim,
            with_dissim,
        });
    }
    let col =
        |f: &dyn Fn(&TripleRecord) -> f64| MeanStd::of(&triples.iter().map(f).collect::<Vec<_>>());
    Ok(TripleExperimentReport {
        config: cfg.clone(),
        sim_similarity: col(&|t| t.sim_similarity),
        dissim_similarity: col(&|t| t.dissim_similarity),
        sim_train_loss: col(&|t| t.with_sim.final_train_loss),
        dissim_train_loss: col(&|t| t.with_dissim.final_train_loss),
        sim_valid_loss: col(&|t| t.with_sim.final_valid_loss),
        dissim_valid_loss: col(&|t| t.with_dissim.final_valid_loss),
        triples,
        notes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::make_spiral_dataset;
    use crate::search::ChildTrainer;
    use alloc::vec;

    fn opt() -> OptimizerConfig {
        OptimizerConfig {
            batch_size: 16,
            ..OptimizerConfig::default()
        }
    }

    #[test]
    fn self_pairing_has_unit_similarity() {
        let g = CellGraph::toy();
        let data = make_spiral_dataset(1, 40, 3, 0.1).unwrap();
        let a = Architecture::new(vec![2, 1, 3]);
        let s = pair_similarity(&g, &data, &a, &a, 1, 3, &opt(), 5).unwrap();
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn self_pairing_matches_training_alone() {
        let g = CellGraph::toy();
        let data = make_spiral_dataset(1, 40, 3, 0.1).unwrap();
        let a = Architecture::new(vec![3, 2, 1]);
        let mut w = pair_store(&g, &a, &a, 9).unwrap();
        let joint = joint_train_pair(&g, &mut w, &data, &a, &a, 3, &opt(), 4).unwrap();
        let mut alone = ChildTrainer::new(&g, a.clone(), opt(), 9, 4, 3);
        alone.weights = SharedWeights::init(&g, &AllowedOps::full(&g), 9)
            .restrict(&AllowedOps::singleton(&a))
            .unwrap();
        for _ in 0..3 {
            alone.train_epoch(&g, &data).unwrap();
        }
        assert_eq!(w.head, alone.weights.head);
        assert_eq!(joint.final_valid_loss, alone.evaluate(&g, &data).unwrap().0);
    }

    #[test]
    fn joint_training_is_deterministic() {
        let g = CellGraph::toy();
        let data = make_spiral_dataset(1, 40, 3, 0.1).unwrap();
        let a = Architecture::new(vec![2, 1, 3]);
        let b = Architecture::new(vec![2, 0, 3]);
        let run = || {
            let mut w = pair_store(&g, &a, &b, 3).unwrap();
            joint_train_pair(&g, &mut w, &data, &a, &b, 2, &opt(), 8).unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn neighbours_change_one_edge() {
        let g = CellGraph::toy();
        let a = Architecture::new(vec![0, 1, 2]);
        let n = neighbours(&g, &a);
        assert_eq!(n.len(), 9);
        for b in n {
            assert_eq!(
                a.choice
                    .iter()
                    .zip(&b.choice)
                    .filter(|(x, y)| x != y)
                    .count(),
                1
            );
        }
    }
}
