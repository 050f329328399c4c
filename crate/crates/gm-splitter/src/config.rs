//! Run configuration.
//!
//! A TOML file with up to four sections, `[space]`, `[train]`, `[split]` and
//! `[experiment]`. Every key is optional; unknown keys are errors, and each
//! omitted key is logged with the default it took.

use serde::{Deserialize, Serialize};

use gm_splitter_core::data::{Dataset, SpiralConfig};
use gm_splitter_core::gm::{GmAggregation, Similarity};
use gm_splitter_core::harness::{SelectionSetup, TripleConfig, DEFAULT_CUTS};
use gm_splitter_core::ops::OpKind;
use gm_splitter_core::optim::{OptimizerConfig, Schedule};
use gm_splitter_core::partition::SplitSchema;
use gm_splitter_core::search::{SearchConfig, SearchMethod};
use gm_splitter_core::selection::{SHSchedule, SelectionCriterion};
use gm_splitter_core::supernet::{CellGraph, SpaceDescription};

use crate::error::{CliError, CliResult};

macro_rules! section {
    ($raw:ident, $res:ident, $name:literal {
        $( $(#[$meta:meta])* $field:ident : $ty:ty = $default:expr ),* $(,)?
    }) => {
        #[derive(Debug, Default, Deserialize)]
        #[serde(deny_unknown_fields)]
        struct $raw {
            $( $field: Option<$ty>, )*
        }

        #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
        #[serde(deny_unknown_fields)]
        pub struct $res {
            $( $(#[$meta])* pub $field: $ty, )*
        }

        impl $raw {
            fn resolve(self, defaulted: &mut Vec<String>) -> $res {
                $res {
                    $( $field: self.$field.unwrap_or_else(|| {
                        let d: $ty = $default;
                        defaulted.push(format!(
                            "{}.{} = {}",
                            $name,
                            stringify!($field),
                            serde_json::to_string(&d).unwrap_or_default()
                        ));
                        d
                    }), )*
                }
            }
        }

        impl Default for $res {
            fn default() -> Self {
                $raw::default().resolve(&mut Vec::new())
            }
        }
    };
}

fn search_default() -> SearchConfig {
    SearchConfig::default()
}

fn opt_default() -> OptimizerConfig {
    OptimizerConfig::default()
}

fn spiral_default() -> SpiralConfig {
    SpiralConfig::default()
}

fn triple_default() -> TripleConfig {
    TripleConfig::default()
}

section!(RawSpace, SpaceSection, "space" {
    num_nodes: usize = 3,
    /// `[from, to]` pairs; node 0 is the input.
    edges: Vec<[usize; 2]> = vec![[0, 1], [0, 2], [1, 2]],
    /// Candidate ops, the same on every edge.
    ops: Vec<OpKind> = vec![OpKind::Zero, OpKind::Skip, OpKind::LinearTanh, OpKind::LinearRelu],
    feature_dim: usize = spiral_default().feature_dim,
    num_classes: usize = spiral_default().classes,
});

section!(RawTrain, TrainSection, "train" {
    seed: u64 = 0,
    method: SearchMethod = search_default().method,
    epochs: usize = search_default().epochs,
    learning_rate: f64 = opt_default().learning_rate,
    momentum: f64 = opt_default().momentum,
    weight_decay: f64 = opt_default().weight_decay,
    batch_size: usize = opt_default().batch_size,
    lr_schedule: Schedule = opt_default().schedule,
    arch_lr: f64 = search_default().arch_lr,
    derive_cap: usize = search_default().derive_cap,
    data_seed: u64 = spiral_default().seed,
    n_per_class: usize = spiral_default().n_per_class,
    noise_std: f64 = spiral_default().noise_std,
});

section!(RawSplit, SplitSection, "split" {
    schema: SplitSchema = SplitSchema::Gm,
    num_splits: usize = 0,
    branch_factors: Vec<usize> = Vec::new(),
    warmup_epochs: usize = search_default().warmup_epochs,
    gm_batches: usize = search_default().gm_batches,
    similarity: Similarity = search_default().similarity,
    aggregation: GmAggregation = search_default().gm_aggregation,
    restart: bool = search_default().restart,
});

section!(RawExperiment, ExperimentSection, "experiment" {
    selection: SelectionCriterion = SelectionCriterion::Sh,
    sh_checkpoints: Vec<usize> = SHSchedule::default().checkpoints().to_vec(),
    /// Epochs per candidate for `best_of_all`.
    final_epochs: usize = SelectionSetup::default().final_epochs,
    oracle_epochs: usize = 40,
    oracle_seeds: Vec<u64> = vec![0, 1],
    /// Children sampled for the oracle; 0 trains all of them.
    oracle_sample: usize = 0,
    /// Runs per experiment, seeded `seed, seed + 1, ...`.
    num_seeds: usize = 5,
    /// Leaf supernets each schema may use in `rank`.
    budget: usize = 4,
    cuts: Vec<f64> = DEFAULT_CUTS.to_vec(),
    sweep_splits: Vec<usize> = vec![1, 2, 3],
    sweep_branch_factor: usize = 2,
    n_triples: usize = triple_default().n_triples,
    tau_sim: f64 = triple_default().tau_sim,
    tau_dissim: f64 = triple_default().tau_dissim,
    triple_warmup_epochs: usize = triple_default().warmup_epochs,
    triple_gm_batches: usize = triple_default().gm_batches,
    joint_epochs: usize = triple_default().joint_epochs,
    max_retries: usize = triple_default().max_retries,
    relax_step: f64 = triple_default().relax_step,
    max_relax_steps: usize = triple_default().max_relax_steps,
});

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    space: Option<RawSpace>,
    train: Option<RawTrain>,
    split: Option<RawSplit>,
    experiment: Option<RawExperiment>,
}

/// A fully resolved, validated configuration.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub space: SpaceSection,
    pub train: TrainSection,
    pub split: SplitSection,
    pub experiment: ExperimentSection,
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn bad(path: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{path}: {msg}"))
}

fn strip_core_prefix(e: gm_splitter_core::Error) -> String {
    let s = e.to_string();
    s.strip_prefix("invalid configuration: ")
        .map(str::to_owned)
        .unwrap_or(s)
}

impl Config {
    /// Parses and validates TOML text. Returns the config and the
    /// `section.key = default` entries that were filled in.
    pub fn parse(text: &str) -> CliResult<(Config, Vec<String>)> {
        let raw: RawConfig =
            toml::from_str(text).map_err(|e| CliError::Config(one_line(&e.to_string())))?;
        let mut defaulted = Vec::new();
        let cfg = Config {
            space: raw.space.unwrap_or_default().resolve(&mut defaulted),
            train: raw.train.unwrap_or_default().resolve(&mut defaulted),
            split: raw.split.unwrap_or_default().resolve(&mut defaulted),
            experiment: raw.experiment.unwrap_or_default().resolve(&mut defaulted),
        };
        cfg.validate()?;
        Ok((cfg, defaulted))
    }

    /// Reads `path`, logging every default.
    pub fn load(path: &std::path::Path) -> CliResult<Config> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let (cfg, defaulted) = Config::parse(&text)?;
        for d in defaulted {
            log::info!("config default: {d}");
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    pub fn validate(&self) -> CliResult<()> {
        let graph = self.graph()?;
        let data = self.dataset()?;
        let s = &self.split;
        if s.branch_factors.len() != s.num_splits {
            return Err(bad(
                "split.branch_factors",
                format!(
                    "has {} entries but split.num_splits = {}",
                    s.branch_factors.len(),
                    s.num_splits
                ),
            ));
        }
        let min_ops = graph.min_op_set_size();
        for (t, &b) in s.branch_factors.iter().enumerate() {
            if b < 2 || b > min_ops {
                return Err(bad(
                    &format!("split.branch_factors[{t}]"),
                    format!("{b} must lie in 2..={min_ops}"),
                ));
            }
        }
        if s.num_splits > graph.num_edges() {
            return Err(bad(
                "split.num_splits",
                format!(
                    "{} exceeds the {} edges of the space",
                    s.num_splits,
                    graph.num_edges()
                ),
            ));
        }
        if s.gm_batches == 0 {
            return Err(bad("split.gm_batches", "must be positive"));
        }
        self.search_config()
            .validate(&graph, data.train.len())
            .map_err(|e| bad("train", strip_core_prefix(e)))?;

        let x = &self.experiment;
        SHSchedule::new(x.sh_checkpoints.clone())
            .map_err(|e| bad("experiment.sh_checkpoints", strip_core_prefix(e)))?;
        if x.final_epochs == 0 {
            return Err(bad("experiment.final_epochs", "must be positive"));
        }
        if x.oracle_epochs == 0 {
            return Err(bad("experiment.oracle_epochs", "must be positive"));
        }
        if x.oracle_seeds.is_empty() {
            return Err(bad("experiment.oracle_seeds", "needs at least one seed"));
        }
        if x.num_seeds == 0 {
            return Err(bad("experiment.num_seeds", "must be positive"));
        }
        if x.budget == 0 {
            return Err(bad("experiment.budget", "must be positive"));
        }
        if x.cuts.is_empty() || x.cuts.iter().any(|c| !(*c > 0.0 && *c <= 1.0)) {
            return Err(bad("experiment.cuts", "needs fractions in (0, 1]"));
        }
        if x.sweep_branch_factor < 2 || x.sweep_branch_factor > min_ops {
            return Err(bad(
                "experiment.sweep_branch_factor",
                format!("must lie in 2..={min_ops}"),
            ));
        }
        if let Some(&t) = x.sweep_splits.iter().find(|&&t| t > graph.num_edges()) {
            return Err(bad(
                "experiment.sweep_splits",
                format!("{t} exceeds the {} edges", graph.num_edges()),
            ));
        }
        self.triple_config()
            .validate(data.train.len())
            .map_err(|e| bad("experiment", strip_core_prefix(e)))?;
        Ok(())
    }

    pub fn space_description(&self) -> SpaceDescription {
        let s = &self.space;
        SpaceDescription {
            num_nodes: s.num_nodes,
            edges: s.edges.iter().map(|e| (e[0], e[1])).collect(),
            op_sets: vec![s.ops.clone(); s.edges.len()],
            feature_dim: s.feature_dim,
            num_classes: s.num_classes,
        }
    }

    pub fn graph(&self) -> CliResult<CellGraph> {
        CellGraph::new(self.space_description()).map_err(|e| bad("space", strip_core_prefix(e)))
    }

    pub fn spiral(&self) -> SpiralConfig {
        SpiralConfig {
            seed: self.train.data_seed,
            n_per_class: self.train.n_per_class,
            classes: self.space.num_classes,
            noise_std: self.train.noise_std,
            feature_dim: self.space.feature_dim,
        }
    }

    pub fn dataset(&self) -> CliResult<Dataset> {
        self.spiral()
            .build()
            .map_err(|e| bad("train", strip_core_prefix(e)))
    }

    pub fn optimizer(&self) -> OptimizerConfig {
        let t = &self.train;
        OptimizerConfig {
            learning_rate: t.learning_rate,
            momentum: t.momentum,
            weight_decay: t.weight_decay,
            batch_size: t.batch_size,
            schedule: t.lr_schedule,
        }
    }

    pub fn search_config(&self) -> SearchConfig {
        let (t, s) = (&self.train, &self.split);
        SearchConfig {
            method: t.method,
            epochs: t.epochs,
            optimizer: self.optimizer(),
            arch_lr: t.arch_lr,
            seed: t.seed,
            warmup_epochs: s.warmup_epochs,
            num_splits: s.num_splits,
            branch_factors: s.branch_factors.clone(),
            gm_batches: s.gm_batches,
            similarity: s.similarity,
            gm_aggregation: s.aggregation,
            restart: s.restart,
            derive_cap: t.derive_cap,
        }
    }

    pub fn selection_setup(&self) -> SelectionSetup {
        let x = &self.experiment;
        SelectionSetup {
            criterion: x.selection,
            schedule: SHSchedule::new(x.sh_checkpoints.clone()).expect("validated"),
            final_epochs: x.final_epochs,
            optimizer: self.optimizer(),
        }
    }

    pub fn triple_config(&self) -> TripleConfig {
        let x = &self.experiment;
        TripleConfig {
            n_triples: x.n_triples,
            tau_sim: x.tau_sim,
            tau_dissim: x.tau_dissim,
            warmup_epochs: x.triple_warmup_epochs,
            gm_batches: x.triple_gm_batches,
            joint_epochs: x.joint_epochs,
            max_retries: x.max_retries,
            relax_step: x.relax_step,
            max_relax_steps: x.max_relax_steps,
            optimizer: self.optimizer(),
            seed: self.train.seed,
        }
    }

    /// `seed, seed + 1, ...` for `experiment.num_seeds` runs.
    pub fn run_seeds(&self) -> Vec<u64> {
        (0..self.experiment.num_seeds as u64)
            .map(|i| self.train.seed + i)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn err(text: &str) -> String {
        match Config::parse(text) {
            Err(CliError::Config(m)) => m,
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn empty_text_gives_defaults_and_logs_every_key() {
        let (cfg, defaulted) = Config::parse("").unwrap();
        assert_eq!(cfg, Config::default());
        assert!(defaulted
            .iter()
            .any(|d| d.starts_with("split.num_splits = 0")));
        assert!(defaulted
            .iter()
            .any(|d| d == "experiment.selection = \"sh\""));
    }

    #[test]
    fn empty_split_section_is_one_shot() {
        let (cfg, _) = Config::parse("[split]\n").unwrap();
        assert_eq!(cfg.split.num_splits, 0);
        assert!(cfg.split.branch_factors.is_empty());
        assert!(cfg.search_config().branch_factors.is_empty());
    }

    #[test]
    fn branch_factor_arity_is_checked() {
        assert!(Config::parse("[split]\nnum_splits = 2\nbranch_factors = [2, 3]\n").is_ok());
        let m = err("[split]\nnum_splits = 3\nbranch_factors = [2, 3]\n");
        assert!(m.starts_with("split.branch_factors:"), "{m}");
    }

    #[test]
    fn branch_factor_above_op_count_names_the_key() {
        let m = err("[split]\nnum_splits = 1\nbranch_factors = [5]\n");
        assert!(m.starts_with("split.branch_factors[0]:"), "{m}");
    }

    #[test]
    fn unknown_keys_and_sections_are_errors() {
        assert!(err("[split]\nnum_split = 1\n").contains("num_split"));
        assert!(err("[splits]\n").contains("splits"));
    }

    #[test]
    fn type_mismatch_is_a_config_error() {
        let m = err("[train]\nepochs = \"many\"\n");
        assert!(m.contains("epochs"), "{m}");
        assert!(!m.contains('\n'));
    }

    #[test]
    fn selection_key_takes_the_three_criteria() {
        for (text, c) in [
            ("sh", SelectionCriterion::Sh),
            ("valid_loss", SelectionCriterion::ValidLoss),
            ("best_of_all", SelectionCriterion::BestOfAll),
        ] {
            let (cfg, _) =
                Config::parse(&format!("[experiment]\nselection = \"{text}\"\n")).unwrap();
            assert_eq!(cfg.experiment.selection, c);
        }
        assert!(Config::parse("[experiment]\nselection = \"vote\"\n").is_err());
    }

    #[test]
    fn resolved_config_round_trips_through_toml() {
        let (cfg, _) = Config::parse(
            "[split]\nnum_splits = 2\nbranch_factors = [2, 2]\n[train]\nlearning_rate = 0.05\n",
        )
        .unwrap();
        let (again, defaulted) = Config::parse(&cfg.to_toml()).unwrap();
        assert_eq!(again, cfg);
        assert!(defaulted.is_empty());
    }

    #[test]
    fn large_space_and_bad_space() {
        let (cfg, _) = Config::parse(
            "[space]\nnum_nodes = 4\nedges = [[0,1],[0,2],[1,2],[0,3],[1,3],[2,3]]\nops = [\"zero\",\"skip\",\"linear_tanh\",\"linear_relu\",\"featavg\"]\n",
        )
        .unwrap();
        assert_eq!(cfg.graph().unwrap().num_children(), 15625);
        assert!(err("[space]\nedges = [[1, 0]]\n").starts_with("space:"));
    }
}
