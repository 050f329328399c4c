//! Pipeline-level experiments scored against an oracle.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{spearman, OracleTable};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::math;
use crate::optim::OptimizerConfig;
use crate::partition::{owning_leaf, run_pipeline, LeafOutcome, PartitionTree, SplitSchema};
use crate::rng::derive_seed;
use crate::search::SearchConfig;
use crate::selection::{
    best_of_all, select_by_valid_loss, successive_halving, SHSchedule, SelectionCriterion,
    SelectionReport,
};
use crate::supernet::{evaluate_child, Architecture, CellGraph};

/// Oracle-rank fractions at which correlation is measured (top 10/25/50% and all).
pub const DEFAULT_CUTS: [f64; 4] = [0.10, 0.25, 0.50, 1.0];

/// How the final architecture is picked from the leaves' derived ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionSetup {
    pub criterion: SelectionCriterion,
    pub schedule: SHSchedule,
    /// Epochs per candidate for best-of-all.
    pub final_epochs: usize,
    pub optimizer: OptimizerConfig,
}

impl Default for SelectionSetup {
    fn default() -> Self {
        SelectionSetup {
            criterion: SelectionCriterion::Sh,
            schedule: SHSchedule::default(),
            final_epochs: 40,
            optimizer: OptimizerConfig::default(),
        }
    }
}

/// Spearman correlation over the oracle's top fraction `cut`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutRho {
    pub cut: f64,
    /// Architectures in the cut.
    pub k: usize,
    /// `None` when a side has no rank variance.
    pub rho: Option<f64>,
}

/// One pipeline run scored against the oracle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub seed: u64,
    pub tree: PartitionTree,
    pub derived: Vec<Architecture>,
    pub selection: SelectionReport,
    pub selected_oracle_acc: f64,
    /// Shared-weight valid accuracy of every oracle entry, in oracle order.
    pub estimates: Vec<f64>,
    pub rho: Vec<CutRho>,
    pub warnings: Vec<String>,
}

fn check_oracle(graph: &CellGraph, oracle: &OracleTable) -> Result<()> {
    if oracle.space_fingerprint != graph.fingerprint() {
        return Err(Error::InvalidConfig(format!(
            "oracle was built for space {} but the configured space is {}",
            oracle.space_fingerprint,
            graph.fingerprint()
        )));
    }
    if oracle.len() < 2 {
        return Err(Error::InvalidConfig(
            "oracle needs at least two entries".into(),
        ));
    }
    Ok(())
}

/// Correlations of `estimates` (aligned with oracle entries) at each cut.
pub fn cut_correlations(
    oracle: &OracleTable,
    estimates: &[f64],
    cuts: &[f64],
) -> Result<Vec<CutRho>> {
    let ranked = oracle.ranked();
    cuts.iter()
        .map(|&cut| {
            let k = (math::ceil(cut * oracle.len() as f64) as usize).clamp(1, oracle.len());
            let top = &ranked[..k];
            let xs: Vec<f64> = top.iter().map(|&i| estimates[i]).collect();
            let ys: Vec<f64> = top
                .iter()
                .map(|&i| oracle.entries[i].mean_valid_acc)
                .collect();
            let rho = match spearman(&xs, &ys) {
                Ok(r) => Some(r),
                Err(Error::ZeroVariance) => None,
                Err(Error::InvalidConfig(_)) if k < 2 => None,
                Err(e) => return Err(e),
            };
            Ok(CutRho { cut, k, rho })
        })
        .collect()
}

/// Runs the pipeline once, picks an architecture and scores everything
/// against the oracle.
#[allow(clippy::too_many_arguments)]
pub fn pipeline_trial<E: Executor>(
    graph: &CellGraph,
    data: &Dataset,
    cfg: &SearchConfig,
    schema: SplitSchema,
    sel: &SelectionSetup,
    oracle: &OracleTable,
    cuts: &[f64],
    exec: &E,
) -> Result<TrialOutcome> {
    check_oracle(graph, oracle)?;
    let result = run_pipeline(graph, data, cfg, schema, exec)?;
    let derived: Vec<Architecture> = result.leaves.iter().map(|l| l.derived.clone()).collect();
    let select_seed = derive_seed(cfg.seed, "select");
    let selection = match sel.criterion {
        SelectionCriterion::Sh => successive_halving(
            graph,
            &derived,
            data,
            &sel.optimizer,
            &sel.schedule,
            select_seed,
            exec,
        )?,
        SelectionCriterion::ValidLoss => select_by_valid_loss(
            &result
                .leaves
                .iter()
                .map(LeafOutcome::summary)
                .collect::<Vec<_>>(),
        )?,
        SelectionCriterion::BestOfAll => best_of_all(
            graph,
            &derived,
            data,
            &sel.optimizer,
            sel.final_epochs,
            select_seed,
            exec,
        )?,
    };
    let selected_oracle_acc = oracle.accuracy(&selection.selected)?;
    let valid = data.valid_batch();
    let estimates = oracle
        .entries
        .iter()
        .map(|e| {
            let leaf = owning_leaf(&result.leaves, &e.arch).ok_or_else(|| {
                Error::InvalidConfig(format!(
                    "architecture {:?} has no owning leaf",
                    e.arch.choice
                ))
            })?;
            Ok(evaluate_child(&result.leaves[leaf].sub.weights, graph, &e.arch, &valid)?.1)
        })
        .collect::<Result<Vec<_>>>()?;
    let rho = cut_correlations(oracle, &estimates, cuts)?;
    Ok(TrialOutcome {
        seed: cfg.seed,
        tree: result.tree,
        derived,
        selection,
        selected_oracle_acc,
        estimates,
        rho,
        warnings: result.warnings,
    })
}

/// Splitting regime compared in the ranking experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankSchema {
    /// A single supernet, no splits.
    Oneshot,
    Exhaustive,
    Random,
    Gm,
}

impl RankSchema {
    pub fn split_schema(self) -> SplitSchema {
        match self {
            RankSchema::Oneshot | RankSchema::Gm => SplitSchema::Gm,
            RankSchema::Exhaustive => SplitSchema::Exhaustive,
            RankSchema::Random => SplitSchema::Random,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            RankSchema::Oneshot => "oneshot",
            RankSchema::Exhaustive => "exhaustive",
            RankSchema::Random => "random",
            RankSchema::Gm => "gm",
        }
    }
}

/// Branching factors giving the most leaves within `budget`: one split per
/// op for exhaustive, binary splits for gm and random.
pub fn plan_for_budget(graph: &CellGraph, schema: RankSchema, budget: usize) -> Result<Vec<usize>> {
    if budget == 0 {
        return Err(Error::InvalidConfig("leaf budget must be positive".into()));
    }
    let width = match schema {
        RankSchema::Oneshot => return Ok(Vec::new()),
        // every edge may be picked, so plan for the widest
        RankSchema::Exhaustive => (0..graph.num_edges())
            .map(|e| graph.op_set(e).len())
            .max()
            .unwrap_or(0),
        RankSchema::Gm | RankSchema::Random => 2,
    };
    let mut factors = Vec::new();
    let mut leaves = 1;
    while width >= 2 && factors.len() < graph.num_edges() && leaves * width <= budget {
        leaves *= width;
        factors.push(width);
    }
    if factors.is_empty() {
        return Err(Error::InvalidConfig(format!(
            "a budget of {budget} leaves cannot fit one {} split",
            schema.name()
        )));
    }
    if schema == RankSchema::Exhaustive
        && (0..graph.num_edges()).any(|e| graph.op_set(e).len() != width)
    {
        return Err(Error::InvalidConfig(
            "exhaustive budgets need equal op-set sizes on every edge".into(),
        ));
    }
    Ok(factors)
}

/// Ranking quality of one schema at a leaf budget, over several seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingReport {
    pub schema: RankSchema,
    pub branch_factors: Vec<usize>,
    pub leaf_count: usize,
    pub seeds: Vec<u64>,
    pub trials: Vec<TrialOutcome>,
    /// Mean over seeds with a defined correlation.
    pub mean_rho: Vec<CutRho>,
    pub mean_selected_oracle_acc: f64,
    pub oracle_best_acc: f64,
}

impl RankingReport {
    pub fn mean_rho_at(&self, cut: f64) -> Option<f64> {
        self.mean_rho
            .iter()
            .find(|c| c.cut == cut)
            .and_then(|c| c.rho)
    }
}

fn with_splits(base: &SearchConfig, factors: Vec<usize>, seed: u64) -> SearchConfig {
    SearchConfig {
        num_splits: factors.len(),
        branch_factors: factors,
        seed,
        ..base.clone()
    }
}

/// Runs the schema at the largest split plan within `budget` for each seed.
#[allow(clippy::too_many_arguments)]
pub fn ranking_experiment<E: Executor>(
    graph: &CellGraph,
    data: &Dataset,
    base: &SearchConfig,
    schema: RankSchema,
    budget: usize,
    seeds: &[u64],
    sel: &SelectionSetup,
    oracle: &OracleTable,
    cuts: &[f64],
    exec: &E,
) -> Result<RankingReport> {
    check_oracle(graph, oracle)?;
    if seeds.is_empty() {
        return Err(Error::InvalidConfig(
            "ranking needs at least one seed".into(),
        ));
    }
    let factors = plan_for_budget(graph, schema, budget)?;
    let trials = seeds
        .iter()
        .map(|&s| {
            pipeline_trial(
                graph,
                data,
                &with_splits(base, factors.clone(), s),
                schema.split_schema(),
                sel,
                oracle,
                cuts,
                exec,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let mean_rho = cuts
        .iter()
        .enumerate()
        .map(|(i, &cut)| {
            let vals: Vec<f64> = trials.iter().filter_map(|t| t.rho[i].rho).collect();
            CutRho {
                cut,
                k: trials[0].rho[i].k,
                rho: (!vals.is_empty()).then(|| math::mean(&vals)),
            }
        })
        .collect();
    let accs: Vec<f64> = trials.iter().map(|t| t.selected_oracle_acc).collect();
    Ok(RankingReport {
        schema,
        leaf_count: factors.iter().product(),
        branch_factors: factors,
        seeds: seeds.to_vec(),
        mean_rho,
        mean_selected_oracle_acc: math::mean(&accs),
        oracle_best_acc: oracle.best().map_or(f64::NAN, |b| b.mean_valid_acc),
        trials,
    })
}

/// Selected-architecture quality for one number of splits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub num_splits: usize,
    pub selected: Vec<Architecture>,
    pub selected_oracle_acc: Vec<f64>,
    pub mean_oracle_acc: f64,
    /// Oracle best minus the mean selected accuracy.
    pub regret: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub branch_factor: usize,
    pub seeds: Vec<u64>,
    pub oracle_best_acc: f64,
    pub rows: Vec<SweepRow>,
}

fn selected_accuracies<E: Executor>(
    graph: &CellGraph,
    data: &Dataset,
    cfgs: impl Iterator<Item = SearchConfig>,
    sel: &SelectionSetup,
    oracle: &OracleTable,
    exec: &E,
) -> Result<(Vec<Architecture>, Vec<f64>)> {
    let mut archs = Vec::new();
    let mut accs = Vec::new();
    for cfg in cfgs {
        let t = pipeline_trial(graph, data, &cfg, SplitSchema::Gm, sel, oracle, &[], exec)?;
        accs.push(t.selected_oracle_acc);
        archs.push(t.selection.selected);
    }
    Ok((archs, accs))
}

/// Gradient-matching pipeline for each number of splits (0 always included)
/// with a fixed branching factor.
#[allow(clippy::too_many_arguments)]
pub fn split_count_sweep<E: Executor>(
    graph: &CellGraph,
    data: &Dataset,
    base: &SearchConfig,
    splits: &[usize],
    branch_factor: usize,
    seeds: &[u64],
    sel: &SelectionSetup,
    oracle: &OracleTable,
    exec: &E,
) -> Result<SweepReport> {
    check_oracle(graph, oracle)?;
    if seeds.is_empty() {
        return Err(Error::InvalidConfig(
            "the sweep needs at least one seed".into(),
        ));
    }
    let mut ts: Vec<usize> = core::iter::once(0).chain(splits.iter().copied()).collect();
    ts.sort_unstable();
    ts.dedup();
    let best = oracle.best().map_or(f64::NAN, |b| b.mean_valid_acc);
    let rows = ts
        .into_iter()
        .map(|t| {
            let cfgs = seeds
                .iter()
                .map(|&s| with_splits(base, alloc::vec![branch_factor; t], s));
            let (selected, accs) = selected_accuracies(graph, data, cfgs, sel, oracle, exec)?;
            let mean = math::mean(&accs);
            Ok(SweepRow {
                num_splits: t,
                selected,
                selected_oracle_acc: accs,
                mean_oracle_acc: mean,
                regret: best - mean,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepReport {
        branch_factor,
        seeds: seeds.to_vec(),
        oracle_best_acc: best,
        rows,
    })
}

/// Gradient-matching pipeline with and without reinitializing the leaves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub seeds: Vec<u64>,
    pub with_restart: Vec<f64>,
    pub without_restart: Vec<f64>,
    pub mean_with_restart: f64,
    pub mean_without_restart: f64,
}

/// Runs `base` (which must split at least once) with `restart` on and off.
#[allow(clippy::too_many_arguments)]
pub fn restart_ablation<E: Executor>(
    graph: &CellGraph,
    data: &Dataset,
    base: &SearchConfig,
    seeds: &[u64],
    sel: &SelectionSetup,
    oracle: &OracleTable,
    exec: &E,
) -> Result<AblationReport> {
    check_oracle(graph, oracle)?;
    if base.num_splits == 0 || seeds.is_empty() {
        return Err(Error::InvalidConfig(
            "the restart ablation needs at least one split and one seed".into(),
        ));
    }
    let variant = |restart: bool| {
        let cfgs = seeds.iter().map(move |&seed| SearchConfig {
            restart,
            seed,
            ..base.clone()
        });
        selected_accuracies(graph, data, cfgs, sel, oracle, exec).map(|r| r.1)
    };
    let with_restart = variant(true)?;
    let without_restart = variant(false)?;
    Ok(AblationReport {
        seeds: seeds.to_vec(),
        mean_with_restart: math::mean(&with_restart),
        mean_without_restart: math::mean(&without_restart),
        with_restart,
        without_restart,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn budgets_match_leaf_counts() {
        let toy = CellGraph::toy();
        assert_eq!(
            plan_for_budget(&toy, RankSchema::Exhaustive, 4).unwrap(),
            vec![4]
        );
        assert_eq!(
            plan_for_budget(&toy, RankSchema::Gm, 4).unwrap(),
            vec![2, 2]
        );
        assert_eq!(
            plan_for_budget(&toy, RankSchema::Random, 4).unwrap(),
            vec![2, 2]
        );
        assert_eq!(
            plan_for_budget(&toy, RankSchema::Oneshot, 4).unwrap(),
            Vec::<usize>::new()
        );
        assert!(plan_for_budget(&toy, RankSchema::Exhaustive, 3).is_err());
        let large = CellGraph::large();
        assert_eq!(
            plan_for_budget(&large, RankSchema::Exhaustive, 5).unwrap(),
            vec![5]
        );
        assert_eq!(
            plan_for_budget(&large, RankSchema::Gm, 5).unwrap(),
            vec![2, 2]
        );
    }
}
