//! Gradient-matching scores and balanced min-cut splitting.
//!
//! For one target edge of a sub-supernet, every allowed op `o` induces a
//! gradient on the weights shared by all children (the bundles on other
//! edges and the classifier head) when the edge is pinned to `o`. Ops whose
//! gradients point the same way can keep sharing weights; ops whose
//! gradients disagree should be separated. Pairwise scores form a dense
//! similarity graph over the ops, and the split is the balanced partition
//! with the smallest total similarity across groups. That minimal cut cost
//! also ranks edges: the edge whose best cut is cheapest is split first.

mod collect;
mod mincut;

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

pub use collect::{
    build_gm_matrix, collect_op_gradient, sample_gm_batches, FlatGradient, GmBatches, Segment,
};
pub use mincut::{balanced_min_cut, balanced_partitions, cut_cost, exhaustive_split, random_split};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::math;
use crate::partition::SubSupernet;
use crate::rng::Rng;
use crate::search::SearchConfig;
use crate::supernet::CellGraph;

/// Similarity measure between two gradients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Similarity {
    /// Cosine of the flattened vectors.
    Cosine,
    /// Mean cosine over parameter bundles.
    PerFilterCosine,
    /// Negative Euclidean distance.
    NegL2,
}

/// Order of averaging and scoring over the M minibatches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GmAggregation {
    /// Average gradients over all batches, then score once.
    AverageThenScore,
    /// Score each batch's gradients, then average the scores.
    ScorePerBatch,
}

/// Pairwise similarity of the ops on one edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GMMatrix {
    pub edge: usize,
    /// Op indices (into the edge's full op set), in matrix order.
    pub ops: Vec<usize>,
    pub scores: Vec<Vec<f64>>,
    pub measure: Similarity,
    pub num_batches: usize,
}

impl GMMatrix {
    /// Builds a matrix and checks the symmetry/diagonal/range invariants.
    pub fn new(
        edge: usize,
        ops: Vec<usize>,
        scores: Vec<Vec<f64>>,
        measure: Similarity,
        num_batches: usize,
    ) -> Result<Self> {
        let m = GMMatrix {
            edge,
            ops,
            scores,
            measure,
            num_batches,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn size(&self) -> usize {
        self.ops.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.scores[i][j]
    }

    /// Matrix position of a full-set op index.
    pub fn position(&self, op: usize) -> Option<usize> {
        self.ops.iter().position(|&o| o == op)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.ops.len();
        let bad = |m: &str| {
            Err(Error::InvalidConfig(format!(
                "GM matrix for edge {}: {m}",
                self.edge
            )))
        };
        if self.scores.len() != n || self.scores.iter().any(|r| r.len() != n) {
            return bad("not square over its ops");
        }
        for i in 0..n {
            for j in 0..n {
                let v = self.scores[i][j];
                if !v.is_finite() || v != self.scores[j][i] {
                    return bad("not symmetric and finite");
                }
                match self.measure {
                    Similarity::Cosine | Similarity::PerFilterCosine => {
                        if !(-1.0..=1.0).contains(&v) || (i == j && v != 1.0) {
                            return bad("cosine entries must lie in [-1, 1] with unit diagonal");
                        }
                    }
                    Similarity::NegL2 => {
                        if v > 0.0 || (i == j && v != 0.0) {
                            return bad("neg_l2 entries must be <= 0 with zero diagonal");
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// A partition of one edge's ops into balanced groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitDecision {
    pub edge: usize,
    /// Groups of full-set op indices; each sorted, ordered by smallest member.
    pub groups: Vec<Vec<usize>>,
    /// Total similarity across groups, when a matrix was available.
    pub cut_cost: Option<f64>,
    pub gm: Option<GMMatrix>,
}

impl SplitDecision {
    pub fn branches(&self) -> usize {
        self.groups.len()
    }
}

/// Score between two gradients.
pub fn gm_score(a: &FlatGradient, b: &FlatGradient, measure: Similarity) -> Result<f64> {
    if a.values.len() != b.values.len() {
        return Err(Error::ShapeMismatch {
            context: "gm_score",
            expected: alloc::vec![a.values.len()],
            found: alloc::vec![b.values.len()],
        });
    }
    match measure {
        Similarity::Cosine => cosine(&a.values, &b.values),
        Similarity::NegL2 => {
            let d2: f64 = a
                .values
                .iter()
                .zip(&b.values)
                .map(|(x, y)| (x - y) * (x - y))
                .sum();
            Ok(-math::sqrt(d2))
        }
        Similarity::PerFilterCosine => {
            if a.segments != b.segments {
                return Err(Error::InvalidConfig(
                    "per-filter cosine needs identical bundle layouts".into(),
                ));
            }
            let mut total = 0.0;
            let mut used = 0usize;
            for s in &a.segments {
                let (x, y) = (&a.values[s.range()], &b.values[s.range()]);
                if math::norm(x) == 0.0 || math::norm(y) == 0.0 {
                    continue;
                }
                total += cosine(x, y)?;
                used += 1;
            }
            if used == 0 {
                return Err(Error::ZeroNorm);
            }
            Ok((total / used as f64).clamp(-1.0, 1.0))
        }
    }
}

fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    let (na, nb) = (math::norm(a), math::norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroNorm);
    }
    Ok((math::dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

/// Decisions for every candidate edge and the one chosen to split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeScores {
    pub decisions: Vec<SplitDecision>,
    /// Index into `decisions` of the cheapest cut.
    pub selected: usize,
}

impl EdgeScores {
    pub fn selected_decision(&self) -> &SplitDecision {
        &self.decisions[self.selected]
    }
}

/// Min-cuts each supplied matrix and selects the edge with the lowest cut
/// cost (lowest edge id on ties).
pub fn select_edge(matrices: Vec<GMMatrix>, branches: usize) -> Result<EdgeScores> {
    if matrices.is_empty() {
        return Err(Error::NothingToSplit { branches });
    }
    let decisions = matrices
        .into_iter()
        .map(|m| balanced_min_cut(&m, branches))
        .collect::<Result<Vec<_>>>()?;
    let mut selected = 0;
    for (i, d) in decisions.iter().enumerate() {
        let (ci, cs) = (
            d.cut_cost.unwrap_or(f64::INFINITY),
            decisions[selected].cut_cost.unwrap_or(f64::INFINITY),
        );
        if ci < cs || (ci == cs && d.edge < decisions[selected].edge) {
            selected = i;
        }
    }
    Ok(EdgeScores {
        decisions,
        selected,
    })
}

/// Edges of a sub-supernet that are still unsplit and have at least
/// `branches` allowed ops.
pub fn splittable_edges(sub: &SubSupernet, branches: usize) -> Vec<usize> {
    let allowed = sub.weights.allowed();
    (0..allowed.num_edges())
        .filter(|&e| !sub.partition.contains_edge(e) && allowed.edge(e).len() >= branches.max(2))
        .collect()
}

/// Builds GM matrices for every unsplit edge of `sub` (sharing one set of
/// minibatches) and selects the edge with the cheapest balanced cut.
pub fn score_edges(
    graph: &CellGraph,
    sub: &SubSupernet,
    data: &Dataset,
    cfg: &SearchConfig,
    branches: usize,
    rng: &mut Rng,
) -> Result<EdgeScores> {
    let edges = splittable_edges(sub, branches);
    if edges.is_empty() {
        return Err(Error::NothingToSplit { branches });
    }
    let batches = sample_gm_batches(data, cfg.gm_batches, cfg.optimizer.batch_size, rng);
    let matrices = edges
        .iter()
        .map(|&e| {
            build_gm_matrix(
                graph,
                &sub.weights,
                data,
                e,
                &batches,
                cfg.similarity,
                cfg.gm_aggregation,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    select_edge(matrices, branches)
}

#[cfg(test)]
mod tests;
