//! The subcommands. Each resolves its inputs, runs the core, and hands
//! every artifact to one [`OutputDir`].

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use gm_splitter_core::data::Dataset;
use gm_splitter_core::harness::{
    build_oracle, ranking_experiment, restart_ablation, split_count_sweep, triple_experiment,
    AblationReport, OracleCoverage, OracleTable, RankSchema, RankingReport, SweepReport,
    TripleExperimentReport,
};
use gm_splitter_core::partition::{run_pipeline, LeafSummary, PartitionTree};
use gm_splitter_core::rng::derive_seed;
use gm_splitter_core::selection::{
    best_of_all, select_by_valid_loss, successive_halving, SelectionCriterion, SelectionReport,
};
use gm_splitter_core::supernet::{Architecture, CellGraph};

use crate::config::Config;
use crate::error::{CliError, CliResult};
use crate::manifest::{Clock, Manifest, OutputDir, SeedProvenance};
use crate::oracle_io::{self, OracleSidecar, ORACLE_CSV, ORACLE_JSON};
use crate::pool::Threaded;
use crate::report;

pub const SPLIT_MANIFEST: &str = "split.json";
pub const SELECT_MANIFEST: &str = "select.json";
pub const RANK_MANIFEST: &str = "rank.json";
pub const SWEEP_MANIFEST: &str = "sweep_t.json";
pub const TRIPLES_MANIFEST: &str = "triples.json";
pub const ABLATION_MANIFEST: &str = "restart_ablation.json";

/// Resolved inputs shared by every command.
pub struct Context {
    pub config: Config,
    pub graph: CellGraph,
    pub data: Dataset,
    pub exec: Threaded,
    pub out: OutputDir,
}

impl Context {
    pub fn new(config: Config, jobs: usize, out: PathBuf) -> CliResult<Self> {
        let graph = config.graph()?;
        let data = config.dataset()?;
        Ok(Context {
            config,
            graph,
            data,
            exec: Threaded::new(jobs),
            out: OutputDir::create(out)?,
        })
    }

    fn seeds(&self, run_seeds: Vec<u64>) -> SeedProvenance {
        SeedProvenance {
            root_seed: self.config.train.seed,
            data_seed: self.config.train.data_seed,
            run_seeds,
        }
    }

    fn enc(&self, a: &Architecture) -> String {
        a.encode(&self.graph)
    }
}

fn csv_bytes<R: Serialize>(rows: &[R]) -> CliResult<Vec<u8>> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner()
        .map_err(|e| CliError::Runtime(format!("csv: {e}")))
}

fn groups_text(graph: &CellGraph, edge: usize, groups: &[Vec<usize>]) -> String {
    groups
        .iter()
        .map(|g| {
            g.iter()
                .map(|&o| graph.op_kind(edge, o).name())
                .collect::<Vec<_>>()
                .join("+")
        })
        .collect::<Vec<_>>()
        .join(" | ")
}

fn partition_text(graph: &CellGraph, leaf: &LeafSummary) -> String {
    let parts: Vec<String> = leaf
        .partition
        .entries()
        .iter()
        .map(|(e, ops)| format!("e{e}={}", groups_text(graph, *e, std::slice::from_ref(ops))))
        .collect();
    if parts.is_empty() {
        "all".into()
    } else {
        parts.join(";")
    }
}

// ---- split ----

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPayload {
    pub tree: PartitionTree,
    pub leaves: Vec<LeafSummary>,
    /// Derived architectures, one per leaf, as `op|op|...`.
    pub derived: Vec<String>,
    pub warnings: Vec<String>,
}

#[derive(Serialize)]
struct SplitRow {
    level: usize,
    parent: String,
    edge: usize,
    groups: String,
    cut_cost: Option<f64>,
}

#[derive(Serialize)]
struct LeafRow {
    label: String,
    partition: String,
    final_train_loss: f64,
    final_valid_loss: f64,
    valid_accuracy: f64,
    derived: String,
}

pub fn split(ctx: &mut Context) -> CliResult<Manifest<SplitPayload>> {
    let clock = Clock::start();
    let cfg = ctx.config.search_config();
    let result = run_pipeline(
        &ctx.graph,
        &ctx.data,
        &cfg,
        ctx.config.split.schema,
        &ctx.exec,
    )?;
    for w in &result.warnings {
        log::warn!("{w}");
    }
    let leaves: Vec<LeafSummary> = result.leaves.iter().map(|l| l.summary()).collect();
    let payload = SplitPayload {
        derived: leaves.iter().map(|l| ctx.enc(&l.derived)).collect(),
        tree: result.tree,
        leaves,
        warnings: result.warnings,
    };
    let graph = &ctx.graph;
    let splits: Vec<SplitRow> = payload
        .tree
        .levels
        .iter()
        .enumerate()
        .flat_map(|(t, level)| {
            level.iter().map(move |s| SplitRow {
                level: t,
                parent: s.parent.clone(),
                edge: s.decision.edge,
                groups: groups_text(graph, s.decision.edge, &s.decision.groups),
                cut_cost: s.decision.cut_cost,
            })
        })
        .collect();
    let leaf_rows: Vec<LeafRow> = payload
        .leaves
        .iter()
        .map(|l| LeafRow {
            label: l.label.clone(),
            partition: partition_text(&ctx.graph, l),
            final_train_loss: l.trained.final_train_loss,
            final_valid_loss: l.trained.final_valid_loss,
            valid_accuracy: l.trained.valid_accuracy,
            derived: ctx.enc(&l.derived),
        })
        .collect();
    let m = Manifest::new(
        "split",
        &ctx.config,
        ctx.seeds(vec![cfg.seed]),
        payload,
        clock.finish(ctx.exec.jobs()),
    )?;
    ctx.out.write("splits.csv", &csv_bytes(&splits)?)?;
    ctx.out.write("leaves.csv", &csv_bytes(&leaf_rows)?)?;
    ctx.out.write_json(SPLIT_MANIFEST, &m)?;
    Ok(m)
}

// ---- select ----

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectPayload {
    pub source_hash: String,
    pub report: SelectionReport,
    pub selected: String,
}

#[derive(Serialize)]
struct TraceRow {
    arch: String,
    epoch: usize,
    valid_accuracy: f64,
    train_loss: f64,
    dropped_at: Option<usize>,
}

/// Runs the configured criterion over the leaves of the split manifest in `run`.
pub fn select(ctx: &mut Context, run: &Path) -> CliResult<Manifest<SelectPayload>> {
    let clock = Clock::start();
    let path = run.join(SPLIT_MANIFEST);
    if !path.exists() {
        return Err(CliError::MissingDependency(format!(
            "no {SPLIT_MANIFEST} in {}; run `gm-splitter split` first",
            run.display()
        )));
    }
    let source: Manifest<SplitPayload> = Manifest::load(&path, "split")?;
    if source.space != ctx.config.space_description() {
        return Err(CliError::Config(format!(
            "space: differs from the space of {}",
            path.display()
        )));
    }
    let archs: Vec<Architecture> = source
        .payload
        .leaves
        .iter()
        .map(|l| l.derived.clone())
        .collect();
    let sel = ctx.config.selection_setup();
    let seed = derive_seed(source.config.train.seed, "select");
    let report = match sel.criterion {
        SelectionCriterion::Sh => successive_halving(
            &ctx.graph,
            &archs,
            &ctx.data,
            &sel.optimizer,
            &sel.schedule,
            seed,
            &ctx.exec,
        )?,
        SelectionCriterion::ValidLoss => select_by_valid_loss(&source.payload.leaves)?,
        SelectionCriterion::BestOfAll => best_of_all(
            &ctx.graph,
            &archs,
            &ctx.data,
            &sel.optimizer,
            sel.final_epochs,
            seed,
            &ctx.exec,
        )?,
    };
    let graph = &ctx.graph;
    let rows: Vec<TraceRow> = report
        .trace
        .iter()
        .flat_map(|t| {
            t.scores.iter().map(move |s| TraceRow {
                arch: t.arch.encode(graph),
                epoch: s.epoch,
                valid_accuracy: s.valid_accuracy,
                train_loss: s.train_loss,
                dropped_at: t.dropped_at,
            })
        })
        .collect();
    let payload = SelectPayload {
        source_hash: source.determinism_hash.clone(),
        selected: ctx.enc(&report.selected),
        report,
    };
    let m = Manifest::new(
        "select",
        &ctx.config,
        ctx.seeds(source.seeds.run_seeds.clone()),
        payload,
        clock.finish(ctx.exec.jobs()),
    )?;
    ctx.out.write("selection.csv", &csv_bytes(&rows)?)?;
    ctx.out.write_json(SELECT_MANIFEST, &m)?;
    Ok(m)
}

// ---- oracle ----

pub fn oracle(ctx: &mut Context) -> CliResult<(OracleTable, Manifest<OracleSidecar>)> {
    let clock = Clock::start();
    let x = &ctx.config.experiment;
    let coverage = if x.oracle_sample == 0 {
        OracleCoverage::All
    } else {
        OracleCoverage::Sample(x.oracle_sample)
    };
    log::info!(
        "training {} children standalone",
        if x.oracle_sample == 0 {
            ctx.graph.num_children()
        } else {
            x.oracle_sample
        }
    );
    let table = build_oracle(
        &ctx.graph,
        &ctx.data,
        &ctx.config.optimizer(),
        x.oracle_epochs,
        &x.oracle_seeds,
        coverage,
        ctx.config.train.seed,
        &ctx.exec,
    )?;
    let bytes = oracle_io::oracle_csv(&ctx.graph, &table)?;
    let side = oracle_io::sidecar(&ctx.graph, &ctx.config.spiral(), &table, &bytes);
    let m = Manifest::new(
        "oracle",
        &ctx.config,
        ctx.seeds(x.oracle_seeds.clone()),
        side,
        clock.finish(ctx.exec.jobs()),
    )?;
    ctx.out.write(ORACLE_CSV, &bytes)?;
    ctx.out.write_json(ORACLE_JSON, &m)?;
    Ok((table, m))
}

fn load_oracle(ctx: &Context, dir: &Path) -> CliResult<(OracleTable, String)> {
    let table = oracle_io::load_oracle(dir, &ctx.graph, &ctx.config.spiral())?;
    let header: crate::manifest::Header =
        serde_json::from_slice(&std::fs::read(dir.join(ORACLE_JSON))?)?;
    if table.epochs != ctx.config.experiment.oracle_epochs {
        log::warn!(
            "oracle was trained for {} epochs, config says {}",
            table.epochs,
            ctx.config.experiment.oracle_epochs
        );
    }
    Ok((table, header.determinism_hash))
}

// ---- rank ----

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankPayload {
    pub oracle_hash: String,
    pub budget: usize,
    pub cuts: Vec<f64>,
    pub reports: Vec<RankingReport>,
}

#[derive(Serialize)]
struct RankRow {
    schema: String,
    leaves: usize,
    cut: f64,
    k: usize,
    mean_rho: Option<f64>,
    mean_selected_oracle_acc: f64,
}

#[derive(Serialize)]
struct TrialRow {
    schema: String,
    seed: u64,
    selected: String,
    selected_oracle_acc: f64,
    cut: f64,
    rho: Option<f64>,
}

pub const RANK_SCHEMAS: [RankSchema; 4] = [
    RankSchema::Oneshot,
    RankSchema::Exhaustive,
    RankSchema::Random,
    RankSchema::Gm,
];

pub fn rank(ctx: &mut Context, oracle_dir: &Path) -> CliResult<Manifest<RankPayload>> {
    let clock = Clock::start();
    let (table, oracle_hash) = load_oracle(ctx, oracle_dir)?;
    let x = &ctx.config.experiment;
    let seeds = ctx.config.run_seeds();
    let base = ctx.config.search_config();
    let sel = ctx.config.selection_setup();
    let mut reports = Vec::new();
    for schema in RANK_SCHEMAS {
        log::info!("ranking with schema {}", schema.name());
        let r = ranking_experiment(
            &ctx.graph, &ctx.data, &base, schema, x.budget, &seeds, &sel, &table, &x.cuts,
            &ctx.exec,
        );
        match r {
            Ok(r) => reports.push(r),
            Err(e @ gm_splitter_core::Error::InvalidConfig(_))
                if schema == RankSchema::Exhaustive =>
            {
                log::warn!("skipping exhaustive: {e}");
            }
            Err(e) => return Err(e.into()),
        }
    }
    let mut rows = Vec::new();
    let mut trials = Vec::new();
    for r in &reports {
        for c in &r.mean_rho {
            rows.push(RankRow {
                schema: r.schema.name().into(),
                leaves: r.leaf_count,
                cut: c.cut,
                k: c.k,
                mean_rho: c.rho,
                mean_selected_oracle_acc: r.mean_selected_oracle_acc,
            });
        }
        for t in &r.trials {
            for c in &t.rho {
                trials.push(TrialRow {
                    schema: r.schema.name().into(),
                    seed: t.seed,
                    selected: ctx.enc(&t.selection.selected),
                    selected_oracle_acc: t.selected_oracle_acc,
                    cut: c.cut,
                    rho: c.rho,
                });
            }
        }
    }
    let payload = RankPayload {
        oracle_hash,
        budget: x.budget,
        cuts: x.cuts.clone(),
        reports,
    };
    let m = Manifest::new(
        "rank",
        &ctx.config,
        ctx.seeds(seeds),
        payload,
        clock.finish(ctx.exec.jobs()),
    )?;
    ctx.out.write("rank.csv", &csv_bytes(&rows)?)?;
    ctx.out.write("rank_trials.csv", &csv_bytes(&trials)?)?;
    ctx.out.write_json(RANK_MANIFEST, &m)?;
    Ok(m)
}

// ---- sweep-t ----

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPayload {
    pub oracle_hash: String,
    pub report: SweepReport,
}

#[derive(Serialize)]
struct SweepCsvRow {
    num_splits: usize,
    leaves: usize,
    mean_oracle_acc: f64,
    regret: f64,
}

pub fn sweep_t(ctx: &mut Context, oracle_dir: &Path) -> CliResult<Manifest<SweepPayload>> {
    let clock = Clock::start();
    let (table, oracle_hash) = load_oracle(ctx, oracle_dir)?;
    let x = &ctx.config.experiment;
    let seeds = ctx.config.run_seeds();
    let report = split_count_sweep(
        &ctx.graph,
        &ctx.data,
        &ctx.config.search_config(),
        &x.sweep_splits,
        x.sweep_branch_factor,
        &seeds,
        &ctx.config.selection_setup(),
        &table,
        &ctx.exec,
    )?;
    let rows: Vec<SweepCsvRow> = report
        .rows
        .iter()
        .map(|r| SweepCsvRow {
            num_splits: r.num_splits,
            leaves: report.branch_factor.pow(r.num_splits as u32),
            mean_oracle_acc: r.mean_oracle_acc,
            regret: r.regret,
        })
        .collect();
    let m = Manifest::new(
        "sweep_t",
        &ctx.config,
        ctx.seeds(seeds),
        SweepPayload {
            oracle_hash,
            report,
        },
        clock.finish(ctx.exec.jobs()),
    )?;
    ctx.out.write("sweep_t.csv", &csv_bytes(&rows)?)?;
    ctx.out.write_json(SWEEP_MANIFEST, &m)?;
    Ok(m)
}

// ---- restart ablation ----

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationPayload {
    pub oracle_hash: String,
    pub report: AblationReport,
}

pub fn restart_ablation_cmd(
    ctx: &mut Context,
    oracle_dir: &Path,
) -> CliResult<Manifest<AblationPayload>> {
    let clock = Clock::start();
    let (table, oracle_hash) = load_oracle(ctx, oracle_dir)?;
    let seeds = ctx.config.run_seeds();
    let base = ctx.config.search_config();
    if base.num_splits == 0 {
        return Err(CliError::Config(
            "split.num_splits: the restart ablation needs at least one split".into(),
        ));
    }
    let report = restart_ablation(
        &ctx.graph,
        &ctx.data,
        &base,
        &seeds,
        &ctx.config.selection_setup(),
        &table,
        &ctx.exec,
    )?;
    let m = Manifest::new(
        "restart_ablation",
        &ctx.config,
        ctx.seeds(seeds),
        AblationPayload {
            oracle_hash,
            report,
        },
        clock.finish(ctx.exec.jobs()),
    )?;
    ctx.out.write_json(ABLATION_MANIFEST, &m)?;
    Ok(m)
}

// ---- triples ----

#[derive(Serialize)]
struct TripleRow {
    a: String,
    a_sim: String,
    a_dissim: String,
    sim_similarity: f64,
    dissim_similarity: f64,
    tau_sim: f64,
    tau_dissim: f64,
    valid_loss_with_sim: f64,
    valid_loss_with_dissim: f64,
    train_loss_with_sim: f64,
    train_loss_with_dissim: f64,
}

pub fn triples(ctx: &mut Context) -> CliResult<Manifest<TripleExperimentReport>> {
    let clock = Clock::start();
    let cfg = ctx.config.triple_config();
    let report = triple_experiment(&ctx.graph, &ctx.data, &cfg)?;
    for n in &report.notes {
        log::warn!("{n}");
    }
    let rows: Vec<TripleRow> = report
        .triples
        .iter()
        .map(|t| TripleRow {
            a: ctx.enc(&t.a),
            a_sim: ctx.enc(&t.a_sim),
            a_dissim: ctx.enc(&t.a_dissim),
            sim_similarity: t.sim_similarity,
            dissim_similarity: t.dissim_similarity,
            tau_sim: t.tau_sim,
            tau_dissim: t.tau_dissim,
            valid_loss_with_sim: t.with_sim.final_valid_loss,
            valid_loss_with_dissim: t.with_dissim.final_valid_loss,
            train_loss_with_sim: t.with_sim.final_train_loss,
            train_loss_with_dissim: t.with_dissim.final_train_loss,
        })
        .collect();
    let m = Manifest::new(
        "triples",
        &ctx.config,
        ctx.seeds(vec![cfg.seed]),
        report,
        clock.finish(ctx.exec.jobs()),
    )?;
    ctx.out.write("triples.csv", &csv_bytes(&rows)?)?;
    ctx.out.write_json(TRIPLES_MANIFEST, &m)?;
    Ok(m)
}

// ---- report ----

/// Renders every manifest found in `dirs` to text and SVG under `out`.
/// Returns the summary text.
pub fn report_dirs(dirs: &[PathBuf], out: &mut OutputDir) -> CliResult<String> {
    let mut text = String::new();
    let mut found = false;
    for dir in dirs {
        let r = report::render_dir(dir)?;
        if r.sections == 0 {
            continue;
        }
        found = true;
        text.push_str(&r.text);
        for (name, svg) in r.plots {
            out.write(&name, svg.as_bytes())?;
        }
    }
    if !found {
        return Err(CliError::MissingDependency(format!(
            "no manifests found in {}",
            dirs.iter()
                .map(|d| d.display().to_string())
                .collect::<Vec<_>>()
                .join(", ")
        )));
    }
    out.write("summary.txt", text.as_bytes())?;
    Ok(text)
}
