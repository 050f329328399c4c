//! Ground truth and evaluation experiments.
//!
//! The oracle trains every child of a small space standalone; the
//! experiments compare split schemas against it.

mod experiments;
mod triples;

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

pub use experiments::{
    cut_correlations, pipeline_trial, plan_for_budget, ranking_experiment, restart_ablation,
    split_count_sweep, AblationReport, CutRho, RankSchema, RankingReport, SelectionSetup,
    SweepReport, SweepRow, TrialOutcome, DEFAULT_CUTS,
};
pub use triples::{
    joint_train_pair, pair_similarity, triple_experiment, MeanStd, PairLosses, TripleConfig,
    TripleExperimentReport, TripleRecord,
};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::math;
use crate::optim::OptimizerConfig;
use crate::rng::{derive_seed, rng_from_seed};
use crate::search::train_standalone;
use crate::supernet::{AllowedOps, Architecture, CellGraph};

/// One standalone training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleRun {
    pub seed: u64,
    pub valid_acc: f64,
    pub train_loss: f64,
}

/// Ground truth for one architecture, averaged over seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleEntry {
    pub arch: Architecture,
    pub runs: Vec<OracleRun>,
    pub mean_valid_acc: f64,
    pub mean_train_loss: f64,
}

impl OracleEntry {
    pub fn from_runs(arch: Architecture, runs: Vec<OracleRun>) -> Self {
        let accs: Vec<f64> = runs.iter().map(|r| r.valid_acc).collect();
        let losses: Vec<f64> = runs.iter().map(|r| r.train_loss).collect();
        OracleEntry {
            arch,
            mean_valid_acc: math::mean(&accs),
            mean_train_loss: math::mean(&losses),
            runs,
        }
    }
}

/// Standalone accuracies of the children of one space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleTable {
    pub space_fingerprint: alloc::string::String,
    pub dataset_seed: u64,
    pub epochs: usize,
    pub seeds: Vec<u64>,
    /// Sorted by architecture.
    pub entries: Vec<OracleEntry>,
}

impl OracleTable {
    /// Builds a table from entries in any order.
    pub fn new(
        space_fingerprint: alloc::string::String,
        dataset_seed: u64,
        epochs: usize,
        seeds: Vec<u64>,
        mut entries: Vec<OracleEntry>,
    ) -> Self {
        entries.sort_by(|a, b| a.arch.cmp(&b.arch));
        OracleTable {
            space_fingerprint,
            dataset_seed,
            epochs,
            seeds,
            entries,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, arch: &Architecture) -> Option<&OracleEntry> {
        self.entries
            .binary_search_by(|e| e.arch.cmp(arch))
            .ok()
            .map(|i| &self.entries[i])
    }

    /// Oracle accuracy of `arch`, or an error naming it.
    pub fn accuracy(&self, arch: &Architecture) -> Result<f64> {
        self.get(arch).map(|e| e.mean_valid_acc).ok_or_else(|| {
            Error::InvalidConfig(alloc::format!(
                "architecture {:?} is not in the oracle",
                arch.choice
            ))
        })
    }

    /// Highest mean accuracy (ties: smaller architecture).
    pub fn best(&self) -> Option<&OracleEntry> {
        let mut best: Option<&OracleEntry> = None;
        for e in &self.entries {
            if best.is_none_or(|b| e.mean_valid_acc > b.mean_valid_acc) {
                best = Some(e);
            }
        }
        best
    }

    /// max - min of the mean accuracies.
    pub fn spread(&self) -> f64 {
        let accs = self.entries.iter().map(|e| e.mean_valid_acc);
        let max = accs.clone().fold(f64::NEG_INFINITY, f64::max);
        let min = accs.fold(f64::INFINITY, f64::min);
        max - min
    }

    /// Entry indices ordered best first (ties: smaller architecture).
    pub fn ranked(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.entries.len()).collect();
        idx.sort_by(|&a, &b| {
            self.entries[b]
                .mean_valid_acc
                .total_cmp(&self.entries[a].mean_valid_acc)
                .then(self.entries[a].arch.cmp(&self.entries[b].arch))
        });
        idx
    }
}

/// Which children an oracle covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OracleCoverage {
    /// Every child (spaces up to 4096 children).
    All,
    /// A seeded uniform sample of this many children.
    Sample(usize),
}

/// Largest space the oracle enumerates in full.
pub const MAX_ENUMERATED_CHILDREN: usize = 4096;

/// Trains the covered children standalone for `epochs` under each seed.
///
/// Every architecture derives its own seeds from its encoding, so entries do
/// not depend on enumeration order or on the executor.
#[allow(clippy::too_many_arguments)]
pub fn build_oracle<E: Executor>(
    graph: &CellGraph,
    data: &Dataset,
    opt: &OptimizerConfig,
    epochs: usize,
    seeds: &[u64],
    coverage: OracleCoverage,
    sample_seed: u64,
    exec: &E,
) -> Result<OracleTable> {
    if seeds.is_empty() {
        return Err(Error::InvalidConfig(
            "oracle needs at least one seed".into(),
        ));
    }
    opt.validate(data.train.len())?;
    let all = AllowedOps::full(graph);
    let archs = match coverage {
        OracleCoverage::All => {
            if all.count() > MAX_ENUMERATED_CHILDREN {
                return Err(Error::InvalidConfig(alloc::format!(
                    "{} children exceed the {MAX_ENUMERATED_CHILDREN} an oracle enumerates; use a sample",
                    all.count()
                )));
            }
            all.enumerate()
        }
        OracleCoverage::Sample(n) => {
            let mut rng = rng_from_seed(derive_seed(sample_seed, "oracle-sample"));
            let mut picked = Vec::new();
            let target = n.min(all.count());
            while picked.len() < target {
                let a = all.sample(&mut rng);
                if let Err(pos) = picked.binary_search(&a) {
                    picked.insert(pos, a);
                }
            }
            picked
        }
    };
    let entries = exec
        .map(archs, |arch| -> Result<OracleEntry> {
            let runs = seeds
                .iter()
                .map(|&seed| {
                    let (valid_acc, train_loss) =
                        train_standalone(graph, &arch, data, opt, epochs, seed)?;
                    Ok(OracleRun {
                        seed,
                        valid_acc,
                        train_loss,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(OracleEntry::from_runs(arch, runs))
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(OracleTable::new(
        graph.fingerprint(),
        data.seed,
        epochs,
        seeds.to_vec(),
        entries,
    ))
}

/// Average (fractional) ranks, 1-based; tied values share the mean rank.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = alloc::vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Pearson correlation; zero variance in either input is an error.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    let (mx, my) = (math::mean(xs), math::mean(ys));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::ZeroVariance);
    }
    Ok((sxy / math::sqrt(sxx * syy)).clamp(-1.0, 1.0))
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::InvalidConfig(alloc::format!(
            "spearman needs two equal-length inputs of at least 2 values, got {} and {}",
            xs.len(),
            ys.len()
        )));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("spearman input"));
    }
    pearson(&average_ranks(xs), &average_ranks(ys))
}
