//! Shared parameter stores.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::graph::{AllowedOps, CellGraph};
use crate::error::{Error, Result};
use crate::math;
use crate::ops::LinearParams;
use crate::rng::rng_from_seed;
use crate::tensor::Tensor;

/// Which bundle a parameter belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Slot {
    /// The bundle of op `op` (index into the full op set) on edge `edge`.
    Edge { edge: usize, op: usize },
    /// The classifier head.
    Head,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Weight,
    Bias,
}

/// Stable identifier of one parameter tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ParamId {
    pub slot: Slot,
    pub role: Role,
}

/// A trainable tensor with its gradient and momentum buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub id: ParamId,
    pub value: Tensor,
    pub grad: Tensor,
    pub momentum: Tensor,
}

impl Parameter {
    pub fn new(id: ParamId, value: Tensor) -> Self {
        let grad = Tensor::zeros(value.shape());
        let momentum = Tensor::zeros(value.shape());
        Parameter {
            id,
            value,
            grad,
            momentum,
        }
    }
}

/// Weight and bias of one affine map.
#[derive(Debug, Clone, PartialEq)]
pub struct Bundle {
    pub weight: Parameter,
    pub bias: Parameter,
}

impl Bundle {
    fn init(slot: Slot, fan_in: usize, fan_out: usize, rng: &mut crate::rng::Rng) -> Self {
        let bound = 1.0 / math::sqrt(fan_in as f64);
        let w: Vec<f64> = (0..fan_in * fan_out)
            .map(|_| rng.random_range(-bound..bound))
            .collect();
        Bundle {
            weight: Parameter::new(
                ParamId {
                    slot,
                    role: Role::Weight,
                },
                Tensor::matrix(fan_in, fan_out, w).expect("shape matches data"),
            ),
            bias: Parameter::new(
                ParamId {
                    slot,
                    role: Role::Bias,
                },
                Tensor::zeros(&[fan_out]),
            ),
        }
    }

    pub fn params(&self) -> LinearParams<'_> {
        LinearParams {
            weight: &self.weight.value,
            bias: &self.bias.value,
        }
    }

    pub fn zero_grad(&mut self) {
        self.weight.grad.fill(0.0);
        self.bias.grad.fill(0.0);
    }

    pub fn zero_momentum(&mut self) {
        self.weight.momentum.fill(0.0);
        self.bias.momentum.fill(0.0);
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter> {
        [&mut self.weight, &mut self.bias].into_iter()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter> {
        [&self.weight, &self.bias].into_iter()
    }
}

/// The parameters of one (sub-)supernet.
///
/// Holds exactly one bundle per parametric `(edge, op)` pair in the allowed
/// op sets, the classifier head, and one architecture logit per allowed op.
#[derive(Debug, Clone, PartialEq)]
pub struct SharedWeights {
    allowed: AllowedOps,
    bundles: BTreeMap<(usize, usize), Bundle>,
    pub head: Bundle,
    /// Per edge, one logit per allowed op (same order as `allowed`).
    pub arch_params: Vec<Vec<f64>>,
}

impl SharedWeights {
    /// Fresh seeded initialization: linear weights uniform in `±1/√d`, biases
    /// and architecture logits zero. Draw order is edge, op, then head.
    pub fn init(graph: &CellGraph, allowed: &AllowedOps, seed: u64) -> Self {
        let d = graph.feature_dim();
        let mut rng = rng_from_seed(seed);
        let mut bundles = BTreeMap::new();
        for e in 0..graph.num_edges() {
            for &o in allowed.edge(e) {
                if graph.op_kind(e, o).is_parametric() {
                    bundles.insert(
                        (e, o),
                        Bundle::init(Slot::Edge { edge: e, op: o }, d, d, &mut rng),
                    );
                }
            }
        }
        let head = Bundle::init(Slot::Head, d, graph.num_classes(), &mut rng);
        let arch_params = allowed.sets().iter().map(|s| vec![0.0; s.len()]).collect();
        SharedWeights {
            allowed: allowed.clone(),
            bundles,
            head,
            arch_params,
        }
    }

    pub fn allowed(&self) -> &AllowedOps {
        &self.allowed
    }

    pub fn bundle(&self, edge: usize, op: usize) -> Option<&Bundle> {
        self.bundles.get(&(edge, op))
    }

    pub fn bundle_mut(&mut self, edge: usize, op: usize) -> Option<&mut Bundle> {
        self.bundles.get_mut(&(edge, op))
    }

    /// Edge bundles in `(edge, op)` order.
    pub fn bundles(&self) -> impl Iterator<Item = (&(usize, usize), &Bundle)> {
        self.bundles.iter()
    }

    pub fn num_bundles(&self) -> usize {
        self.bundles.len()
    }

    /// Every parameter id in the store, edge bundles first, head last.
    pub fn param_ids(&self) -> Vec<ParamId> {
        self.bundles
            .values()
            .chain(core::iter::once(&self.head))
            .flat_map(|b| [b.weight.id, b.bias.id])
            .collect()
    }

    pub fn zero_grads(&mut self) {
        self.bundles.values_mut().for_each(Bundle::zero_grad);
        self.head.zero_grad();
    }

    pub fn zero_momentum(&mut self) {
        self.bundles.values_mut().for_each(Bundle::zero_momentum);
        self.head.zero_momentum();
    }

    /// Mutable parameters of the given edge bundles plus the head.
    pub fn params_for_mut<'a>(
        &'a mut self,
        slots: &'a [(usize, usize)],
    ) -> impl Iterator<Item = &'a mut Parameter> + 'a {
        self.bundles
            .iter_mut()
            .filter(move |(k, _)| slots.contains(k))
            .flat_map(|(_, b)| b.iter_mut())
            .chain(self.head.iter_mut())
    }

    /// Every parameter, mutable.
    pub fn all_params_mut(&mut self) -> impl Iterator<Item = &mut Parameter> {
        self.bundles
            .values_mut()
            .flat_map(Bundle::iter_mut)
            .chain(self.head.iter_mut())
    }

    /// A copy narrowed to `allowed`: bundles of excluded ops are dropped and
    /// architecture logits re-sliced.
    pub fn restrict(&self, allowed: &AllowedOps) -> Result<Self> {
        if allowed.num_edges() != self.allowed.num_edges() {
            return Err(Error::InvalidConfig(
                "restriction edge count mismatch".into(),
            ));
        }
        let mut arch_params = Vec::with_capacity(allowed.num_edges());
        for e in 0..allowed.num_edges() {
            let mut row = Vec::with_capacity(allowed.edge(e).len());
            for &o in allowed.edge(e) {
                let pos = self
                    .allowed
                    .edge(e)
                    .iter()
                    .position(|&x| x == o)
                    .ok_or(Error::UnknownOp { edge: e, op: o })?;
                row.push(self.arch_params[e][pos]);
            }
            arch_params.push(row);
        }
        let bundles = self
            .bundles
            .iter()
            .filter(|((e, o), _)| allowed.contains(*e, *o))
            .map(|(k, b)| (*k, b.clone()))
            .collect();
        Ok(SharedWeights {
            allowed: allowed.clone(),
            bundles,
            head: self.head.clone(),
            arch_params,
        })
    }

    /// Position of op `op` within edge `edge`'s allowed list.
    pub fn allowed_position(&self, edge: usize, op: usize) -> Option<usize> {
        self.allowed.edge(edge).iter().position(|&x| x == op)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_bundle_per_parametric_pair() {
        let g = CellGraph::toy();
        let w = SharedWeights::init(&g, &AllowedOps::full(&g), 3);
        // two parametric ops on each of 3 edges
        assert_eq!(w.num_bundles(), 6);
        let ids = w.param_ids();
        let mut sorted = ids.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), ids.len());
        assert!(w
            .arch_params
            .iter()
            .all(|a| a.len() == 4 && a.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let g = CellGraph::toy();
        let a = SharedWeights::init(&g, &AllowedOps::full(&g), 5);
        assert_eq!(a, SharedWeights::init(&g, &AllowedOps::full(&g), 5));
        assert_ne!(a, SharedWeights::init(&g, &AllowedOps::full(&g), 6));
        let bound = 1.0 / (8.0f64).sqrt();
        for (_, b) in a.bundles() {
            assert!(b.weight.value.data().iter().all(|v| v.abs() <= bound));
            assert!(b.bias.value.data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn restrict_drops_excluded_bundles() {
        let g = CellGraph::toy();
        let mut w = SharedWeights::init(&g, &AllowedOps::full(&g), 3);
        w.arch_params[0] = vec![0.1, 0.2, 0.3, 0.4];
        let narrowed = AllowedOps::from_sets(vec![vec![1, 2], vec![0, 1, 2, 3], vec![0, 1, 2, 3]]);
        let r = w.restrict(&narrowed).unwrap();
        assert_eq!(r.num_bundles(), 5);
        assert!(r.bundle(0, 3).is_none());
        assert_eq!(r.bundle(0, 2), w.bundle(0, 2));
        assert_eq!(r.arch_params[0], vec![0.2, 0.3]);
    }
}
