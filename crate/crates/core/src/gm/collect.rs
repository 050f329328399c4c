//! Shared-weight gradient collection.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{gm_score, GMMatrix, GmAggregation, Similarity};
use crate::data::{sample_batches, Dataset};
use crate::error::{Error, Result};
use crate::loss::cross_entropy;
use crate::math;
use crate::rng::Rng;
use crate::supernet::{backward_mix, forward_mix, Bundle, CellGraph, EdgeMix, SharedWeights, Slot};

/// One parameter bundle's span inside a [`FlatGradient`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub slot: Slot,
    pub start: usize,
    pub len: usize,
}

impl Segment {
    pub fn range(&self) -> core::ops::Range<usize> {
        self.start..self.start + self.len
    }
}

/// Gradient over the shared weights, flattened in `(edge, op, role)` order
/// with the head last.
#[derive(Debug, Clone, PartialEq)]
pub struct FlatGradient {
    pub values: Vec<f64>,
    pub segments: Vec<Segment>,
}

impl FlatGradient {
    pub fn norm(&self) -> f64 {
        math::norm(&self.values)
    }

    fn push_bundle(&mut self, slot: Slot, b: &Bundle) {
        let start = self.values.len();
        self.values.extend_from_slice(b.weight.grad.data());
        self.values.extend_from_slice(b.bias.grad.data());
        self.segments.push(Segment {
            slot,
            start,
            len: self.values.len() - start,
        });
    }
}

/// The fixed minibatches reused for every op of every edge in one scoring round.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GmBatches(pub Vec<Vec<usize>>);

/// Draws `m` train minibatches of `batch_size` indices.
pub fn sample_gm_batches(data: &Dataset, m: usize, batch_size: usize, rng: &mut Rng) -> GmBatches {
    GmBatches(sample_batches(&data.train, m, batch_size, rng))
}

/// Gradient of the shared weights on one batch with `edge` pinned to `op`
/// and every other edge at the uniform mean of its allowed ops.
fn single_batch_gradient(
    graph: &CellGraph,
    scratch: &mut SharedWeights,
    data: &Dataset,
    edge: usize,
    op: usize,
    indices: &[usize],
) -> Result<FlatGradient> {
    let mix = EdgeMix::uniform_with_fixed(scratch.allowed(), edge, op);
    let batch = data.batch(indices);
    scratch.zero_grads();
    let (logits, trace) = forward_mix(scratch, graph, &mix, &batch.x)?;
    let (_, dlogits) = cross_entropy(&logits, &batch.labels)?;
    backward_mix(scratch, graph, &mix, &trace, &dlogits)?;
    let mut flat = FlatGradient {
        values: Vec::new(),
        segments: Vec::new(),
    };
    for (&(e, o), b) in scratch.bundles() {
        if e != edge {
            flat.push_bundle(Slot::Edge { edge: e, op: o }, b);
        }
    }
    flat.push_bundle(Slot::Head, &scratch.head);
    Ok(flat)
}

fn check_op(weights: &SharedWeights, edge: usize, op: usize) -> Result<()> {
    if edge >= weights.allowed().num_edges() {
        return Err(Error::UnknownEdge(edge));
    }
    if !weights.allowed().contains(edge, op) {
        return Err(Error::UnknownOp { edge, op });
    }
    Ok(())
}

fn per_batch(
    graph: &CellGraph,
    scratch: &mut SharedWeights,
    data: &Dataset,
    edge: usize,
    op: usize,
    batches: &GmBatches,
) -> Result<Vec<FlatGradient>> {
    batches
        .0
        .iter()
        .map(|idx| single_batch_gradient(graph, scratch, data, edge, op, idx))
        .collect()
}

fn average(grads: &[FlatGradient]) -> FlatGradient {
    let mut out = grads[0].clone();
    for g in &grads[1..] {
        for (a, b) in out.values.iter_mut().zip(&g.values) {
            *a += b;
        }
    }
    let m = grads.len() as f64;
    out.values.iter_mut().for_each(|v| *v /= m);
    out
}

/// Gradient of the shared weights with `edge` pinned to `op`, averaged over
/// the given minibatches. The store itself is not modified.
pub fn collect_op_gradient(
    graph: &CellGraph,
    weights: &SharedWeights,
    data: &Dataset,
    edge: usize,
    op: usize,
    batches: &GmBatches,
) -> Result<FlatGradient> {
    check_op(weights, edge, op)?;
    if batches.0.is_empty() {
        return Err(Error::InvalidConfig(
            "gradient collection needs at least one minibatch".into(),
        ));
    }
    let mut scratch = weights.clone();
    let grads = per_batch(graph, &mut scratch, data, edge, op, batches)?;
    let avg = average(&grads);
    if avg.norm() == 0.0 {
        return Err(Error::DegenerateGradient { edge, op });
    }
    Ok(avg)
}

/// Pairwise scores of every allowed op on `edge`.
pub fn build_gm_matrix(
    graph: &CellGraph,
    weights: &SharedWeights,
    data: &Dataset,
    edge: usize,
    batches: &GmBatches,
    measure: Similarity,
    aggregation: GmAggregation,
) -> Result<GMMatrix> {
    if edge >= weights.allowed().num_edges() {
        return Err(Error::UnknownEdge(edge));
    }
    let ops = weights.allowed().edge(edge).to_vec();
    let n = ops.len();
    let diag = match measure {
        Similarity::NegL2 => 0.0,
        _ => 1.0,
    };
    let mut scores = vec![vec![diag; n]; n];
    match aggregation {
        GmAggregation::AverageThenScore => {
            let grads = ops
                .iter()
                .map(|&o| collect_op_gradient(graph, weights, data, edge, o, batches))
                .collect::<Result<Vec<_>>>()?;
            for i in 0..n {
                for j in i + 1..n {
                    let s = gm_score(&grads[i], &grads[j], measure)?;
                    scores[i][j] = s;
                    scores[j][i] = s;
                }
            }
        }
        GmAggregation::ScorePerBatch => {
            let mut scratch = weights.clone();
            let mut grads = Vec::with_capacity(n);
            for &o in &ops {
                check_op(weights, edge, o)?;
                let g = per_batch(graph, &mut scratch, data, edge, o, batches)?;
                if g.iter().any(|gb| gb.norm() == 0.0) {
                    return Err(Error::DegenerateGradient { edge, op: o });
                }
                grads.push(g);
            }
            let m = batches.0.len() as f64;
            for i in 0..n {
                for j in i + 1..n {
                    let mut total = 0.0;
                    for (gi, gj) in grads[i].iter().zip(&grads[j]) {
                        total += gm_score(gi, gj, measure)?;
                    }
                    let mean = total / m;
                    let s = match measure {
                        Similarity::NegL2 => mean.min(0.0),
                        _ => mean.clamp(-1.0, 1.0),
                    };
                    scores[i][j] = s;
                    scores[j][i] = s;
                }
            }
        }
    }
    GMMatrix::new(edge, ops, scores, measure, batches.0.len())
}
