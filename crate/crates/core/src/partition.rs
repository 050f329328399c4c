//! Partition sets, sub-supernets and the split pipeline.
//!
//! A sub-supernet is identified by its partition set: the ordered list of
//! `(edge, allowed op subset)` pairs produced by the splits along its path
//! from the root. Its children are the Cartesian product of those subsets
//! on split edges and the full op sets elsewhere, so the leaves of a split
//! tree tile the root's space.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::gm::{
    exhaustive_split, random_split, score_edges, splittable_edges, EdgeScores, SplitDecision,
};
use crate::rng::{derive_seed, rng_from_seed};
use crate::search::{
    darts1_train, derive_architecture, rsps_train, SearchConfig, SearchMethod, TrainedSupernet,
};
use crate::supernet::{AllowedOps, Architecture, CellGraph, SharedWeights};

/// Label of the root sub-supernet; children append `.b` for branch `b`.
pub const ROOT_LABEL: &str = "r";

/// Ordered `(edge, op subset)` restrictions.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionSet {
    entries: Vec<(usize, Vec<usize>)>,
}

impl PartitionSet {
    pub fn empty() -> Self {
        PartitionSet::default()
    }

    pub fn from_entries(entries: Vec<(usize, Vec<usize>)>) -> Self {
        PartitionSet { entries }
    }

    /// Entries in split order.
    pub fn entries(&self) -> &[(usize, Vec<usize>)] {
        &self.entries
    }

    pub fn contains_edge(&self, edge: usize) -> bool {
        self.entries.iter().any(|(e, _)| *e == edge)
    }

    /// Split edges, in split order.
    pub fn split_edges(&self) -> Vec<usize> {
        self.entries.iter().map(|(e, _)| *e).collect()
    }

    /// A copy with one more restriction appended.
    pub fn extended(&self, edge: usize, subset: Vec<usize>) -> Self {
        let mut entries = self.entries.clone();
        entries.push((edge, subset));
        PartitionSet { entries }
    }
}

/// A supernet restricted by a partition set, with its own weight store.
#[derive(Debug, Clone, PartialEq)]
pub struct SubSupernet {
    pub label: String,
    pub parent: Option<String>,
    pub partition: PartitionSet,
    pub weights: SharedWeights,
}

impl SubSupernet {
    /// The unrestricted supernet with fresh weights.
    pub fn root(graph: &CellGraph, seed: u64) -> Self {
        SubSupernet {
            label: ROOT_LABEL.into(),
            parent: None,
            partition: PartitionSet::empty(),
            weights: SharedWeights::init(graph, &AllowedOps::full(graph), seed),
        }
    }

    pub fn allowed(&self) -> &AllowedOps {
        self.weights.allowed()
    }

    pub fn children(&self) -> Vec<Architecture> {
        self.allowed().enumerate()
    }
}

/// Splits `parent` on `decision.edge`: one child per group, each holding a
/// copy of the parent's weights narrowed to its ops.
pub fn instantiate_children(
    graph: &CellGraph,
    parent: &SubSupernet,
    decision: &SplitDecision,
) -> Result<Vec<SubSupernet>> {
    let edge = decision.edge;
    if edge >= graph.num_edges() {
        return Err(Error::UnknownEdge(edge));
    }
    if parent.partition.contains_edge(edge) {
        return Err(Error::InvalidConfig(format!(
            "edge {edge} is already split in {}",
            parent.label
        )));
    }
    let parent_ops = parent.allowed().edge(edge);
    let mut covered: Vec<usize> = decision.groups.iter().flatten().copied().collect();
    covered.sort_unstable();
    if decision.groups.iter().any(Vec::is_empty) || covered != parent_ops {
        return Err(Error::InvalidConfig(format!(
            "split groups on edge {edge} must partition the parent's ops {parent_ops:?}"
        )));
    }
    decision
        .groups
        .iter()
        .enumerate()
        .map(|(b, group)| {
            let mut group = group.clone();
            group.sort_unstable();
            let partition = parent.partition.extended(edge, group);
            let allowed = AllowedOps::restricted(graph, &partition)?;
            Ok(SubSupernet {
                label: format!("{}.{b}", parent.label),
                parent: Some(parent.label.clone()),
                partition,
                weights: parent.weights.restrict(&allowed)?,
            })
        })
        .collect()
}

/// How split edges and groups are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitSchema {
    /// Gradient matching: cheapest balanced cut, edge chosen by cut cost.
    Gm,
    /// One sub-supernet per op on a randomly chosen edge.
    Exhaustive,
    /// Random balanced groups on a randomly chosen edge.
    Random,
}

impl SplitSchema {
    pub fn name(self) -> &'static str {
        match self {
            SplitSchema::Gm => "gm",
            SplitSchema::Exhaustive => "exhaustive",
            SplitSchema::Random => "random",
        }
    }
}

/// A node of the split tree (weights are not retained for inner nodes).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    pub label: String,
    pub parent: Option<String>,
    pub partition: PartitionSet,
    pub depth: usize,
    pub num_children: usize,
}

/// One split performed at one level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSplit {
    pub parent: String,
    pub warmup: TrainedSupernet,
    pub decision: SplitDecision,
    /// Every candidate edge's decision, for the gradient-matching schema.
    pub scores: Option<EdgeScores>,
    pub children: Vec<String>,
}

/// History of all splits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionTree {
    pub schema: SplitSchema,
    pub nodes: Vec<TreeNode>,
    pub levels: Vec<Vec<LevelSplit>>,
    pub leaves: Vec<String>,
}

impl PartitionTree {
    pub fn leaf_count(&self) -> usize {
        self.leaves.len()
    }

    pub fn node(&self, label: &str) -> Option<&TreeNode> {
        self.nodes.iter().find(|n| n.label == label)
    }
}

/// A trained leaf and the architecture derived from it.
#[derive(Debug, Clone, PartialEq)]
pub struct LeafOutcome {
    pub sub: SubSupernet,
    pub trained: TrainedSupernet,
    pub derived: Architecture,
}

impl LeafOutcome {
    /// The leaf without its weights.
    pub fn summary(&self) -> LeafSummary {
        LeafSummary {
            label: self.sub.label.clone(),
            partition: self.sub.partition.clone(),
            trained: self.trained.clone(),
            derived: self.derived.clone(),
        }
    }
}

/// What a run keeps about a leaf once its weights are dropped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeafSummary {
    pub label: String,
    pub partition: PartitionSet,
    pub trained: TrainedSupernet,
    pub derived: Architecture,
}

/// Everything [`run_pipeline`] produces.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineResult {
    pub tree: PartitionTree,
    pub leaves: Vec<LeafOutcome>,
    pub warnings: Vec<String>,
}

/// Reinitializes every leaf from its derived seed; momentum starts at zero.
pub fn restart(graph: &CellGraph, leaves: &mut [SubSupernet], seed: u64) -> Result<()> {
    for leaf in leaves.iter_mut() {
        leaf.weights = SharedWeights::init(
            graph,
            &AllowedOps::restricted(graph, &leaf.partition)?,
            restart_seed(seed, &leaf.label),
        );
    }
    Ok(())
}

/// Seed used by [`restart`] for the leaf labelled `label`.
pub fn restart_seed(seed: u64, label: &str) -> u64 {
    derive_seed(seed, &format!("restart:{label}"))
}

fn check_feasible(graph: &CellGraph, cfg: &SearchConfig, schema: SplitSchema) -> Result<()> {
    // each split consumes one edge; the edge must admit the branching factor
    let mut sizes: Vec<usize> = (0..graph.num_edges())
        .map(|e| graph.op_set(e).len())
        .collect();
    sizes.sort_unstable_by(|a, b| b.cmp(a));
    for (t, &b) in cfg.branch_factors.iter().enumerate() {
        let need = if schema == SplitSchema::Exhaustive {
            2
        } else {
            b
        };
        let available = sizes.iter().filter(|&&s| s >= need).count();
        if available <= t {
            return Err(Error::NothingToSplit { branches: b });
        }
    }
    Ok(())
}

struct SplitOutcome {
    record: LevelSplit,
    children: Vec<SubSupernet>,
}

fn warm_and_split(
    graph: &CellGraph,
    data: &Dataset,
    cfg: &SearchConfig,
    schema: SplitSchema,
    branches: usize,
    mut leaf: SubSupernet,
) -> Result<SplitOutcome> {
    let label = leaf.label.clone();
    let warmup = rsps_train(
        graph,
        &mut leaf.weights,
        data,
        cfg.warmup_epochs,
        &cfg.optimizer,
        derive_seed(cfg.seed, &format!("warmup:{label}")),
        cfg.derive_cap,
        &label,
    )?;
    let mut rng = rng_from_seed(derive_seed(cfg.seed, &format!("split:{label}")));
    let (decision, scores) = match schema {
        SplitSchema::Gm => {
            let scores = score_edges(graph, &leaf, data, cfg, branches, &mut rng)?;
            (scores.selected_decision().clone(), Some(scores))
        }
        SplitSchema::Exhaustive | SplitSchema::Random => {
            let need = if schema == SplitSchema::Exhaustive {
                2
            } else {
                branches
            };
            let edges = splittable_edges(&leaf, need);
            if edges.is_empty() {
                return Err(Error::NothingToSplit { branches: need });
            }
            let edge = edges[crate::data::uniform_index(&mut rng, edges.len())];
            let ops = leaf.allowed().edge(edge).to_vec();
            let d = if schema == SplitSchema::Exhaustive {
                exhaustive_split(edge, &ops, None)
            } else {
                random_split(edge, &ops, branches, &mut rng, None)?
            };
            (d, None)
        }
    };
    let children = instantiate_children(graph, &leaf, &decision)?;
    Ok(SplitOutcome {
        record: LevelSplit {
            parent: label,
            warmup,
            decision,
            scores,
            children: children.iter().map(|c| c.label.clone()).collect(),
        },
        children,
    })
}

fn search_leaf(
    graph: &CellGraph,
    data: &Dataset,
    cfg: &SearchConfig,
    mut sub: SubSupernet,
) -> Result<LeafOutcome> {
    let seed = derive_seed(cfg.seed, &format!("search:{}", sub.label));
    let label = sub.label.clone();
    let trained = match cfg.method {
        SearchMethod::Rsps => rsps_train(
            graph,
            &mut sub.weights,
            data,
            cfg.epochs,
            &cfg.optimizer,
            seed,
            cfg.derive_cap,
            &label,
        )?,
        SearchMethod::Darts1 => darts1_train(
            graph,
            &mut sub.weights,
            data,
            cfg.epochs,
            &cfg.optimizer,
            cfg.arch_lr,
            seed,
            &label,
        )?,
    };
    let derived = derive_architecture(graph, &sub.weights, data, cfg.method, cfg.derive_cap, seed)?;
    Ok(LeafOutcome {
        sub,
        trained,
        derived,
    })
}

/// Warmup → split, level by level; then restart and search every leaf.
pub fn run_pipeline<E: Executor>(
    graph: &CellGraph,
    data: &Dataset,
    cfg: &SearchConfig,
    schema: SplitSchema,
    exec: &E,
) -> Result<PipelineResult> {
    cfg.validate(graph, data.train.len())?;
    check_feasible(graph, cfg, schema)?;
    let mut warnings = Vec::new();
    if schema == SplitSchema::Gm && cfg.num_splits > 0 && cfg.warmup_epochs == 0 {
        warnings.push(String::from(
            "warmup_epochs = 0: gradient-matching scores are computed at initialization and are noisy",
        ));
    }

    let root = SubSupernet::root(graph, derive_seed(cfg.seed, &format!("init:{ROOT_LABEL}")));
    let mut nodes = alloc::vec![TreeNode {
        label: root.label.clone(),
        parent: None,
        partition: root.partition.clone(),
        depth: 0,
        num_children: root.allowed().count(),
    }];
    let mut levels = Vec::with_capacity(cfg.num_splits);
    let mut leaves = alloc::vec![root];

    for (t, &branches) in cfg.branch_factors.iter().enumerate() {
        let outcomes = exec.map(leaves, |leaf| {
            warm_and_split(graph, data, cfg, schema, branches, leaf)
        });
        let mut next = Vec::new();
        let mut level = Vec::new();
        for outcome in outcomes {
            let SplitOutcome { record, children } = outcome?;
            for c in &children {
                nodes.push(TreeNode {
                    label: c.label.clone(),
                    parent: c.parent.clone(),
                    partition: c.partition.clone(),
                    depth: t + 1,
                    num_children: c.allowed().count(),
                });
            }
            level.push(record);
            next.extend(children);
        }
        levels.push(level);
        leaves = next;
    }

    if cfg.num_splits > 0 && cfg.restart {
        restart(graph, &mut leaves, cfg.seed)?;
    }

    let leaf_labels = leaves.iter().map(|l| l.label.clone()).collect();
    let outcomes = exec
        .map(leaves, |sub| search_leaf(graph, data, cfg, sub))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(PipelineResult {
        tree: PartitionTree {
            schema,
            nodes,
            levels,
            leaves: leaf_labels,
        },
        leaves: outcomes,
        warnings,
    })
}

/// Index of the leaf whose space contains `arch`.
pub fn owning_leaf(leaves: &[LeafOutcome], arch: &Architecture) -> Option<usize> {
    leaves.iter().position(|l| l.sub.allowed().admits(arch))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gm::GMMatrix;
    use crate::gm::Similarity;
    use alloc::vec;

    #[test]
    fn children_of_a_two_way_split_have_32_archs_each() {
        let g = CellGraph::toy();
        let root = SubSupernet::root(&g, 1);
        let d = SplitDecision {
            edge: 0,
            groups: vec![vec![0, 1], vec![2, 3]],
            cut_cost: None,
            gm: None,
        };
        let kids = instantiate_children(&g, &root, &d).unwrap();
        assert_eq!(kids.len(), 2);
        for k in &kids {
            assert_eq!(k.children().len(), 32);
            assert_eq!(k.parent.as_deref(), Some("r"));
        }
        assert_eq!(kids[1].label, "r.1");
        assert!(kids[0].weights.bundle(0, 2).is_none());
        assert_eq!(kids[1].weights.bundle(0, 2), root.weights.bundle(0, 2));
    }

    #[test]
    fn rejects_inconsistent_decisions() {
        let g = CellGraph::toy();
        let root = SubSupernet::root(&g, 1);
        let bad = SplitDecision {
            edge: 0,
            groups: vec![vec![0, 1], vec![2]],
            cut_cost: None,
            gm: None,
        };
        assert!(instantiate_children(&g, &root, &bad).is_err());
        let ok = SplitDecision {
            edge: 0,
            groups: vec![vec![0, 1], vec![2, 3]],
            cut_cost: None,
            gm: None,
        };
        let kid = instantiate_children(&g, &root, &ok).unwrap().remove(0);
        let again = SplitDecision {
            edge: 0,
            groups: vec![vec![0], vec![1]],
            cut_cost: None,
            gm: None,
        };
        assert!(instantiate_children(&g, &kid, &again).is_err());
    }

    #[test]
    fn restart_is_init_equivalent() {
        let g = CellGraph::toy();
        let root = SubSupernet::root(&g, 1);
        let d = SplitDecision {
            edge: 1,
            groups: vec![vec![0, 3], vec![1, 2]],
            cut_cost: None,
            gm: None,
        };
        let mut a = instantiate_children(&g, &root, &d).unwrap();
        let mut b = a.clone();
        restart(&g, &mut a, 5).unwrap();
        restart(&g, &mut b, 5).unwrap();
        assert_eq!(a, b);
        let fresh = SharedWeights::init(
            &g,
            &AllowedOps::restricted(&g, &a[0].partition).unwrap(),
            restart_seed(5, "r.0"),
        );
        assert_eq!(a[0].weights, fresh);
    }

    #[test]
    fn gm_decision_round_trips_through_children() {
        let g = CellGraph::toy();
        let root = SubSupernet::root(&g, 1);
        let m = GMMatrix::new(
            2,
            vec![0, 1, 2, 3],
            vec![
                vec![1.0, 0.2, 0.1, 0.1],
                vec![0.2, 1.0, 0.1, 0.1],
                vec![0.1, 0.1, 1.0, 0.9],
                vec![0.1, 0.1, 0.9, 1.0],
            ],
            Similarity::Cosine,
            1,
        )
        .unwrap();
        let d = crate::gm::balanced_min_cut(&m, 2).unwrap();
        let kids = instantiate_children(&g, &root, &d).unwrap();
        assert_eq!(kids[0].partition.entries(), &[(2, vec![0, 1])]);
        assert_eq!(kids[1].partition.entries(), &[(2, vec![2, 3])]);
    }
}
