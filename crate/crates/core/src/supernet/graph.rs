//! Cell graphs, architectures and child enumeration.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ops::OpKind;
use crate::partition::PartitionSet;
use crate::rng::Rng;

/// A directed edge of the cell; `id` is its position in the edge list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub id: usize,
    pub from: usize,
    pub to: usize,
}

/// Plain description of a search space, as stored in configs and manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceDescription {
    pub num_nodes: usize,
    pub edges: Vec<(usize, usize)>,
    pub op_sets: Vec<Vec<OpKind>>,
    pub feature_dim: usize,
    pub num_classes: usize,
}

/// The supernet cell: a DAG whose edges carry candidate operation sets.
///
/// Node 0 is the input, the last node feeds the classifier head, and each
/// node sums the outputs of its incoming edges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SpaceDescription", into = "SpaceDescription")]
pub struct CellGraph {
    num_nodes: usize,
    edges: Vec<Edge>,
    op_sets: Vec<Vec<OpKind>>,
    feature_dim: usize,
    num_classes: usize,
    incoming: Vec<Vec<usize>>,
}

impl TryFrom<SpaceDescription> for CellGraph {
    type Error = Error;

    fn try_from(desc: SpaceDescription) -> Result<Self> {
        CellGraph::new(desc)
    }
}

impl From<CellGraph> for SpaceDescription {
    fn from(g: CellGraph) -> Self {
        g.description()
    }
}

impl CellGraph {
    /// Validates a description and builds the graph.
    pub fn new(desc: SpaceDescription) -> Result<Self> {
        let g = Self::build(desc);
        g.validate()?;
        Ok(g)
    }

    fn build(desc: SpaceDescription) -> Self {
        let edges: Vec<Edge> = desc
            .edges
            .iter()
            .enumerate()
            .map(|(id, &(from, to))| Edge { id, from, to })
            .collect();
        let mut incoming = vec![Vec::new(); desc.num_nodes.max(1)];
        for e in &edges {
            if e.to < incoming.len() {
                incoming[e.to].push(e.id);
            }
        }
        CellGraph {
            num_nodes: desc.num_nodes,
            edges,
            op_sets: desc.op_sets,
            feature_dim: desc.feature_dim,
            num_classes: desc.num_classes,
            incoming,
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.num_nodes < 2 {
            return bad("space needs at least 2 nodes".into());
        }
        if self.edges.is_empty() {
            return bad("space needs at least one edge".into());
        }
        if self.op_sets.len() != self.edges.len() {
            return bad(format!(
                "{} op sets for {} edges",
                self.op_sets.len(),
                self.edges.len()
            ));
        }
        for e in &self.edges {
            if e.from >= e.to || e.to >= self.num_nodes {
                return bad(format!(
                    "edge {} ({} -> {}) must go forward within the cell",
                    e.id, e.from, e.to
                ));
            }
        }
        for (pos, a) in self.edges.iter().enumerate() {
            if self.edges[..pos]
                .iter()
                .any(|b| (b.from, b.to) == (a.from, a.to))
            {
                return bad(format!("edge {} duplicates an earlier edge", a.id));
            }
        }
        for (id, ops) in self.op_sets.iter().enumerate() {
            if ops.is_empty() {
                return bad(format!("edge {id} has an empty op set"));
            }
            for (i, op) in ops.iter().enumerate() {
                if ops[..i].contains(op) {
                    return bad(format!("edge {id} lists {op} twice"));
                }
            }
        }
        if self.feature_dim == 0 {
            return bad("feature_dim must be positive".into());
        }
        if self.num_classes < 2 {
            return bad("num_classes must be at least 2".into());
        }
        Ok(())
    }

    /// Skips the duplicate-op check; only for rigs that need two identical ops.
    #[cfg(test)]
    pub(crate) fn new_unchecked(desc: SpaceDescription) -> Self {
        Self::build(desc)
    }

    /// The default desk-scale space: 3 nodes, 3 edges, 4 ops per edge (64 children).
    pub fn toy() -> Self {
        Self::uniform(
            3,
            &[(0, 1), (0, 2), (1, 2)],
            &[
                OpKind::Zero,
                OpKind::Skip,
                OpKind::LinearTanh,
                OpKind::LinearRelu,
            ],
            crate::data::DEFAULT_FEATURE_DIM,
            3,
        )
        .expect("toy space is valid")
    }

    /// The larger space: 4 nodes, 6 edges, all 5 ops (15625 children).
    pub fn large() -> Self {
        Self::uniform(
            4,
            &[(0, 1), (0, 2), (1, 2), (0, 3), (1, 3), (2, 3)],
            &OpKind::ALL,
            crate::data::DEFAULT_FEATURE_DIM,
            3,
        )
        .expect("large space is valid")
    }

    /// Every edge gets the same op list.
    pub fn uniform(
        num_nodes: usize,
        edges: &[(usize, usize)],
        ops: &[OpKind],
        feature_dim: usize,
        num_classes: usize,
    ) -> Result<Self> {
        Self::new(SpaceDescription {
            num_nodes,
            edges: edges.to_vec(),
            op_sets: vec![ops.to_vec(); edges.len()],
            feature_dim,
            num_classes,
        })
    }

    pub fn description(&self) -> SpaceDescription {
        SpaceDescription {
            num_nodes: self.num_nodes,
            edges: self.edges.iter().map(|e| (e.from, e.to)).collect(),
            op_sets: self.op_sets.clone(),
            feature_dim: self.feature_dim,
            num_classes: self.num_classes,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn op_set(&self, edge: usize) -> &[OpKind] {
        &self.op_sets[edge]
    }

    pub fn op_kind(&self, edge: usize, op: usize) -> OpKind {
        self.op_sets[edge][op]
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// Edge ids entering `node`.
    pub fn incoming(&self, node: usize) -> &[usize] {
        &self.incoming[node]
    }

    pub fn min_op_set_size(&self) -> usize {
        self.op_sets.iter().map(Vec::len).min().unwrap_or(0)
    }

    /// Total number of children, `Π |O^(e)|`.
    pub fn num_children(&self) -> usize {
        self.op_sets.iter().map(Vec::len).product()
    }

    /// Stable 64-bit fingerprint of the space description, as hex.
    pub fn fingerprint(&self) -> String {
        let mut text = format!(
            "n={};d={};c={}",
            self.num_nodes, self.feature_dim, self.num_classes
        );
        for (e, ops) in self.edges.iter().zip(&self.op_sets) {
            text.push_str(&format!(";{}>{}:", e.from, e.to));
            for op in ops {
                text.push_str(op.name());
                text.push(',');
            }
        }
        format!("{:016x}", crate::rng::fnv1a(text.as_bytes()))
    }
}

/// Allowed op indices per edge (indices into the edge's full op set), sorted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AllowedOps(Vec<Vec<usize>>);

impl AllowedOps {
    /// Every op on every edge.
    pub fn full(graph: &CellGraph) -> Self {
        AllowedOps(
            (0..graph.num_edges())
                .map(|e| (0..graph.op_set(e).len()).collect())
                .collect(),
        )
    }

    /// Full op sets narrowed by a partition set's entries.
    pub fn restricted(graph: &CellGraph, partition: &PartitionSet) -> Result<Self> {
        let mut allowed = Self::full(graph);
        for (edge, subset) in partition.entries() {
            let edge = *edge;
            if edge >= graph.num_edges() {
                return Err(Error::UnknownEdge(edge));
            }
            if subset.is_empty() {
                return Err(Error::InvalidConfig(format!(
                    "empty op subset on edge {edge}"
                )));
            }
            for &op in subset {
                if !allowed.0[edge].contains(&op) {
                    return Err(Error::UnknownOp { edge, op });
                }
            }
            let mut s = subset.clone();
            s.sort_unstable();
            s.dedup();
            allowed.0[edge] = s;
        }
        Ok(allowed)
    }

    /// Exactly the ops an architecture selects.
    pub fn singleton(arch: &Architecture) -> Self {
        AllowedOps(arch.choice.iter().map(|&o| vec![o]).collect())
    }

    pub fn from_sets(sets: Vec<Vec<usize>>) -> Self {
        AllowedOps(sets)
    }

    pub fn edge(&self, edge: usize) -> &[usize] {
        &self.0[edge]
    }

    pub fn num_edges(&self) -> usize {
        self.0.len()
    }

    pub fn sets(&self) -> &[Vec<usize>] {
        &self.0
    }

    pub fn contains(&self, edge: usize, op: usize) -> bool {
        self.0.get(edge).is_some_and(|s| s.contains(&op))
    }

    pub fn admits(&self, arch: &Architecture) -> bool {
        arch.choice.len() == self.0.len()
            && arch
                .choice
                .iter()
                .enumerate()
                .all(|(e, &o)| self.contains(e, o))
    }

    pub fn count(&self) -> usize {
        self.0.iter().map(Vec::len).product()
    }

    /// Cartesian product in lexicographic order (edge 0 most significant).
    pub fn enumerate(&self) -> Vec<Architecture> {
        let mut out = Vec::with_capacity(self.count());
        let mut cursor = vec![0usize; self.0.len()];
        loop {
            out.push(Architecture {
                choice: cursor
                    .iter()
                    .enumerate()
                    .map(|(e, &i)| self.0[e][i])
                    .collect(),
            });
            let mut e = self.0.len();
            loop {
                if e == 0 {
                    return out;
                }
                e -= 1;
                cursor[e] += 1;
                if cursor[e] < self.0[e].len() {
                    break;
                }
                cursor[e] = 0;
            }
        }
    }

    /// Independent uniform choice per edge. Singleton edges draw nothing
    /// from `rng`.
    pub fn sample(&self, rng: &mut Rng) -> Architecture {
        Architecture {
            choice: self
                .0
                .iter()
                .map(|s| {
                    if s.len() == 1 {
                        s[0]
                    } else {
                        s[crate::data::uniform_index(rng, s.len())]
                    }
                })
                .collect(),
        }
    }
}

/// One op choice per edge, as indices into each edge's full op set.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Architecture {
    pub choice: Vec<usize>,
}

impl Architecture {
    pub fn new(choice: Vec<usize>) -> Self {
        Architecture { choice }
    }

    pub fn validate(&self, graph: &CellGraph) -> Result<()> {
        if self.choice.len() != graph.num_edges() {
            return Err(Error::InvalidConfig(format!(
                "architecture has {} choices for {} edges",
                self.choice.len(),
                graph.num_edges()
            )));
        }
        for (edge, &op) in self.choice.iter().enumerate() {
            if op >= graph.op_set(edge).len() {
                return Err(Error::UnknownOp { edge, op });
            }
        }
        Ok(())
    }

    /// `op|op|op` using op names, one per edge.
    pub fn encode(&self, graph: &CellGraph) -> String {
        let names: Vec<&str> = self
            .choice
            .iter()
            .enumerate()
            .map(|(e, &o)| graph.op_kind(e, o).name())
            .collect();
        names.join("|")
    }

    pub fn decode(graph: &CellGraph, text: &str) -> Result<Self> {
        let parts: Vec<&str> = text.split('|').collect();
        if parts.len() != graph.num_edges() {
            return Err(Error::InvalidConfig(format!(
                "cannot decode architecture `{text}`"
            )));
        }
        let mut choice = Vec::with_capacity(parts.len());
        for (e, p) in parts.iter().enumerate() {
            let idx = graph
                .op_set(e)
                .iter()
                .position(|k| k.name() == *p)
                .ok_or_else(|| Error::InvalidConfig(format!("op `{p}` not on edge {e}")))?;
            choice.push(idx);
        }
        Ok(Architecture { choice })
    }
}

/// All children of the graph allowed by `restriction`, in lexicographic order.
pub fn enumerate_children(
    graph: &CellGraph,
    restriction: Option<&PartitionSet>,
) -> Result<Vec<Architecture>> {
    let allowed = match restriction {
        Some(p) => AllowedOps::restricted(graph, p)?,
        None => AllowedOps::full(graph),
    };
    Ok(allowed.enumerate())
}

/// Uniformly samples a child of the (restricted) graph.
pub fn sample_uniform_arch(
    graph: &CellGraph,
    restriction: Option<&PartitionSet>,
    rng: &mut Rng,
) -> Result<Architecture> {
    let allowed = match restriction {
        Some(p) => AllowedOps::restricted(graph, p)?,
        None => AllowedOps::full(graph),
    };
    Ok(allowed.sample(rng))
}
