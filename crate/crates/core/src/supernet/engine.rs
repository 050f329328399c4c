//! Forward and backward passes through the cell.
//!
//! Single paths, softmax mixtures and the uniform mixtures used for gradient
//! collection are all special cases of an [`EdgeMix`]: per edge, a list of
//! `(op, coefficient)` terms whose outputs are summed.

use alloc::vec;
use alloc::vec::Vec;

use super::graph::{AllowedOps, Architecture, CellGraph};
use super::weights::SharedWeights;
use crate::data::Batch;
use crate::error::{Error, Result};
use crate::loss::{argmax_rows, cross_entropy, softmax_in_place};
use crate::ops::{op_backward, op_forward, OpKind};
use crate::tensor::Tensor;

/// Weighted op terms per edge.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeMix {
    terms: Vec<Vec<(usize, f64)>>,
}

impl EdgeMix {
    /// The single path of `arch`.
    pub fn child(arch: &Architecture) -> Self {
        EdgeMix {
            terms: arch.choice.iter().map(|&o| vec![(o, 1.0)]).collect(),
        }
    }

    /// Softmax of the store's architecture logits over each edge's allowed ops.
    pub fn softmax(weights: &SharedWeights) -> Self {
        let terms = weights
            .allowed()
            .sets()
            .iter()
            .zip(&weights.arch_params)
            .map(|(ops, alpha)| {
                let mut p = alpha.clone();
                softmax_in_place(&mut p);
                ops.iter().copied().zip(p).collect()
            })
            .collect();
        EdgeMix { terms }
    }

    /// Equal-weight mean over the allowed ops of every edge.
    pub fn uniform(allowed: &AllowedOps) -> Self {
        let terms = allowed
            .sets()
            .iter()
            .map(|ops| {
                let w = 1.0 / ops.len() as f64;
                ops.iter().map(|&o| (o, w)).collect()
            })
            .collect();
        EdgeMix { terms }
    }

    /// Uniform mean everywhere except `edge`, which is pinned to `op`.
    pub fn uniform_with_fixed(allowed: &AllowedOps, edge: usize, op: usize) -> Self {
        let mut mix = Self::uniform(allowed);
        mix.terms[edge] = vec![(op, 1.0)];
        mix
    }

    pub fn terms(&self, edge: usize) -> &[(usize, f64)] {
        &self.terms[edge]
    }
}

/// Activations cached by a forward pass.
#[derive(Debug, Clone)]
pub struct Trace {
    /// Node values, node 0 being the input batch.
    pub nodes: Vec<Tensor>,
    /// Per edge, the raw output of each mix term (before its coefficient).
    pub outputs: Vec<Vec<Tensor>>,
}

fn op_on_edge(
    weights: &SharedWeights,
    graph: &CellGraph,
    edge: usize,
    op: usize,
    x: &Tensor,
) -> Result<Tensor> {
    let kind = graph.op_kind(edge, op);
    let params = if kind.is_parametric() {
        Some(
            weights
                .bundle(edge, op)
                .ok_or(Error::UnknownOp { edge, op })?
                .params(),
        )
    } else {
        None
    };
    op_forward(kind, params, x).map_err(|e| e.at_edge(edge, kind))
}

/// Runs the cell and the head under `mix`.
pub fn forward_mix(
    weights: &SharedWeights,
    graph: &CellGraph,
    mix: &EdgeMix,
    x: &Tensor,
) -> Result<(Tensor, Trace)> {
    let d = graph.feature_dim();
    if x.shape().len() != 2 || x.cols() != d {
        return Err(Error::ShapeMismatch {
            context: "cell input",
            expected: vec![x.rows(), d],
            found: x.shape().to_vec(),
        });
    }
    let b = x.rows();
    let mut nodes = Vec::with_capacity(graph.num_nodes());
    nodes.push(x.clone());
    let mut outputs: Vec<Vec<Tensor>> = vec![Vec::new(); graph.num_edges()];
    for j in 1..graph.num_nodes() {
        let mut acc = Tensor::zeros(&[b, d]);
        for &e in graph.incoming(j) {
            let from = graph.edges()[e].from;
            for &(op, coeff) in mix.terms(e) {
                let out = op_on_edge(weights, graph, e, op, &nodes[from])?;
                acc.add_scaled(&out, coeff)?;
                outputs[e].push(out);
            }
        }
        nodes.push(acc);
    }
    let last = nodes.last().expect("at least two nodes");
    let mut logits = last.matmul(&weights.head.weight.value)?;
    logits.add_row_vector(&weights.head.bias.value)?;
    if !logits.is_finite() {
        return Err(Error::NonFinite("logits"));
    }
    Ok((logits, Trace { nodes, outputs }))
}

/// Back-propagates `dlogits`, accumulating into the store's gradient buffers.
///
/// Returns, per edge and mix term, the derivative of the loss with respect
/// to that term's coefficient.
pub fn backward_mix(
    weights: &mut SharedWeights,
    graph: &CellGraph,
    mix: &EdgeMix,
    trace: &Trace,
    dlogits: &Tensor,
) -> Result<Vec<Vec<f64>>> {
    let last = trace.nodes.last().expect("at least two nodes");
    let dw = last.transposed_matmul(dlogits)?;
    weights.head.weight.grad.add_scaled(&dw, 1.0)?;
    weights
        .head
        .bias
        .grad
        .add_scaled(&dlogits.sum_rows(), 1.0)?;

    let n = graph.num_nodes();
    let mut node_grads: Vec<Tensor> = trace
        .nodes
        .iter()
        .map(|t| Tensor::zeros(t.shape()))
        .collect();
    node_grads[n - 1] = dlogits.matmul_transposed(&weights.head.weight.value)?;
    let mut coeff_grads: Vec<Vec<f64>> = (0..graph.num_edges())
        .map(|e| vec![0.0; mix.terms(e).len()])
        .collect();

    for j in (1..n).rev() {
        let gj = node_grads[j].clone();
        for &e in graph.incoming(j) {
            let from = graph.edges()[e].from;
            for (t, &(op, coeff)) in mix.terms(e).iter().enumerate() {
                coeff_grads[e][t] = gj.dot(&trace.outputs[e][t])?;
                let kind = graph.op_kind(e, op);
                if coeff == 0.0 || kind == OpKind::Zero {
                    continue;
                }
                let upstream = gj.scaled(coeff);
                let params = if kind.is_parametric() {
                    Some(
                        weights
                            .bundle(e, op)
                            .ok_or(Error::UnknownOp { edge: e, op })?
                            .params(),
                    )
                } else {
                    None
                };
                let (dx, pg) = op_backward(kind, params, &trace.nodes[from], &upstream)
                    .map_err(|err| err.at_edge(e, kind))?;
                node_grads[from].add_scaled(&dx, 1.0)?;
                if let Some(pg) = pg {
                    let bundle = weights.bundle_mut(e, op).expect("bundle checked above");
                    bundle.weight.grad.add_scaled(&pg.weight, 1.0)?;
                    bundle.bias.grad.add_scaled(&pg.bias, 1.0)?;
                }
            }
        }
    }
    Ok(coeff_grads)
}

fn check_admitted(weights: &SharedWeights, graph: &CellGraph, arch: &Architecture) -> Result<()> {
    arch.validate(graph)?;
    for (edge, &op) in arch.choice.iter().enumerate() {
        if !weights.allowed().contains(edge, op) {
            return Err(Error::UnknownOp { edge, op });
        }
    }
    Ok(())
}

/// Logits of one child under the shared weights.
pub fn forward_child(
    weights: &SharedWeights,
    graph: &CellGraph,
    arch: &Architecture,
    x: &Tensor,
) -> Result<(Tensor, Trace)> {
    check_admitted(weights, graph, arch)?;
    forward_mix(weights, graph, &EdgeMix::child(arch), x)
}

/// Zeroes all gradients, then fills those of the parameters `arch` touches.
/// Returns the batch loss.
pub fn backward_child(
    weights: &mut SharedWeights,
    graph: &CellGraph,
    arch: &Architecture,
    batch: &Batch,
) -> Result<f64> {
    weights.zero_grads();
    let mix = EdgeMix::child(arch);
    check_admitted(weights, graph, arch)?;
    let (logits, trace) = forward_mix(weights, graph, &mix, &batch.x)?;
    let (loss, dlogits) = cross_entropy(&logits, &batch.labels)?;
    backward_mix(weights, graph, &mix, &trace, &dlogits)?;
    Ok(loss)
}

/// The parametric `(edge, op)` bundles a child uses.
pub fn touched_slots(graph: &CellGraph, arch: &Architecture) -> Vec<(usize, usize)> {
    arch.choice
        .iter()
        .enumerate()
        .filter(|(e, &o)| graph.op_kind(*e, o).is_parametric())
        .map(|(e, &o)| (e, o))
        .collect()
}

/// Softmax-weighted mixture over each edge's allowed ops.
pub fn mixture_forward(weights: &SharedWeights, graph: &CellGraph, x: &Tensor) -> Result<Tensor> {
    Ok(forward_mix(weights, graph, &EdgeMix::softmax(weights), x)?.0)
}

/// Zeroes gradients, then back-propagates the mixture loss into the weight
/// gradients. Returns the loss and its gradient with respect to the
/// architecture logits.
pub fn backward_mixture(
    weights: &mut SharedWeights,
    graph: &CellGraph,
    batch: &Batch,
) -> Result<(f64, Vec<Vec<f64>>)> {
    weights.zero_grads();
    let mix = EdgeMix::softmax(weights);
    let (logits, trace) = forward_mix(weights, graph, &mix, &batch.x)?;
    let (loss, dlogits) = cross_entropy(&logits, &batch.labels)?;
    let coeff_grads = backward_mix(weights, graph, &mix, &trace, &dlogits)?;
    let alpha_grads = coeff_grads
        .iter()
        .enumerate()
        .map(|(e, gw)| {
            let p: Vec<f64> = mix.terms(e).iter().map(|&(_, w)| w).collect();
            let avg: f64 = p.iter().zip(gw).map(|(pi, gi)| pi * gi).sum();
            p.iter().zip(gw).map(|(pi, gi)| pi * (gi - avg)).collect()
        })
        .collect();
    Ok((loss, alpha_grads))
}

/// Loss and accuracy of `mix` on a batch.
pub fn evaluate_mix(
    weights: &SharedWeights,
    graph: &CellGraph,
    mix: &EdgeMix,
    batch: &Batch,
) -> Result<(f64, f64)> {
    let (logits, _) = forward_mix(weights, graph, mix, &batch.x)?;
    let (loss, _) = cross_entropy(&logits, &batch.labels)?;
    let correct = argmax_rows(&logits)
        .iter()
        .zip(&batch.labels)
        .filter(|(p, l)| p == l)
        .count();
    Ok((loss, correct as f64 / batch.labels.len() as f64))
}

/// Loss and accuracy of one child on a batch.
pub fn evaluate_child(
    weights: &SharedWeights,
    graph: &CellGraph,
    arch: &Architecture,
    batch: &Batch,
) -> Result<(f64, f64)> {
    check_admitted(weights, graph, arch)?;
    evaluate_mix(weights, graph, &EdgeMix::child(arch), batch)
}
