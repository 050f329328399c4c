//! Argument parsing and dispatch.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::commands::{self, Context};
use crate::config::Config;
use crate::error::{CliError, CliResult};
use crate::manifest::OutputDir;

/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "GM_SPLITTER_OUT";

#[derive(Debug, Parser)]
#[command(
    name = "gm-splitter",
    version,
    about = "Supernet splitting by gradient matching, with a desk-scale evaluation harness"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// TOML config; every key has a default.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Overrides `train.seed`.
    #[arg(long, value_name = "U64")]
    pub seed: Option<u64>,
    /// Output directory [default: $GM_SPLITTER_OUT/<command>].
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Concurrent work items [default: available cores].
    #[arg(long, value_name = "N")]
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct OracleArg {
    /// Directory holding oracle.csv and oracle.json [default: the output directory].
    #[arg(long, value_name = "DIR")]
    pub oracle: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the split pipeline and write the tree and derived architectures.
    Split(Common),
    /// Train every child standalone and write the oracle table.
    Oracle(Common),
    /// Compare split schemas against the oracle at a matched leaf budget.
    Rank {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        oracle: OracleArg,
    },
    /// Joint-train similar and dissimilar architecture pairs.
    Triples(Common),
    /// Selected-architecture quality against the number of splits.
    SweepT {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        oracle: OracleArg,
    },
    /// The gradient-matching pipeline with and without reinitializing leaves.
    RestartAblation {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        oracle: OracleArg,
    },
    /// Pick one architecture from the leaves of a split run.
    Select {
        #[command(flatten)]
        common: Common,
        /// Directory of the split run [default: the output directory].
        #[arg(long, value_name = "DIR")]
        run: Option<PathBuf>,
    },
    /// Render tables and plots from the manifests in one or more run directories.
    Report {
        #[arg(required = true, value_name = "DIR")]
        dirs: Vec<PathBuf>,
        /// Where to write summary.txt and plots [default: the first DIR].
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Split(_) => "split",
            Command::Oracle(_) => "oracle",
            Command::Rank { .. } => "rank",
            Command::Triples(_) => "triples",
            Command::SweepT { .. } => "sweep-t",
            Command::RestartAblation { .. } => "restart-ablation",
            Command::Select { .. } => "select",
            Command::Report { .. } => "report",
        }
    }
}

fn resolve_out(cmd: &str, out: Option<PathBuf>) -> CliResult<PathBuf> {
    if let Some(o) = out {
        return Ok(o);
    }
    match std::env::var_os(OUT_ENV) {
        Some(root) if !root.is_empty() => Ok(PathBuf::from(root).join(cmd)),
        _ => Err(CliError::Usage(format!(
            "no output directory: pass --out or set {OUT_ENV}"
        ))),
    }
}

fn context(cmd: &str, c: Common) -> CliResult<Context> {
    let mut config = match &c.config {
        Some(p) => Config::load(p)?,
        None => {
            log::info!("no --config given, using defaults for every key");
            Config::default()
        }
    };
    if let Some(s) = c.seed {
        config.train.seed = s;
    }
    config.validate()?;
    let jobs = match c.jobs {
        Some(0) => return Err(CliError::Usage("--jobs must be at least 1".into())),
        Some(j) => j,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    Context::new(config, jobs, resolve_out(cmd, c.out)?)
}

fn execute(cli: Cli) -> CliResult<()> {
    let name = cli.command.name();
    let written = match cli.command {
        Command::Split(c) => {
            let mut ctx = context(name, c)?;
            let m = commands::split(&mut ctx)?;
            println!(
                "split: {} leaves, derived {}",
                m.payload.tree.leaf_count(),
                m.payload.derived.join(", ")
            );
            println!("determinism_hash {}", m.determinism_hash);
            ctx.out.written().to_vec()
        }
        Command::Oracle(c) => {
            let mut ctx = context(name, c)?;
            let (table, m) = commands::oracle(&mut ctx)?;
            println!(
                "oracle: {} architectures, spread {}",
                table.len(),
                crate::report::num(table.spread())
            );
            println!("determinism_hash {}", m.determinism_hash);
            ctx.out.written().to_vec()
        }
        Command::Rank { common, oracle } => {
            let mut ctx = context(name, common)?;
            let dir = oracle
                .oracle
                .unwrap_or_else(|| ctx.out.root().to_path_buf());
            let m = commands::rank(&mut ctx, &dir)?;
            for r in &m.payload.reports {
                println!(
                    "{}: leaves {}, rho {:?}, selected oracle accuracy {}",
                    r.schema.name(),
                    r.leaf_count,
                    r.mean_rho.iter().map(|c| c.rho).collect::<Vec<_>>(),
                    crate::report::num(r.mean_selected_oracle_acc)
                );
            }
            ctx.out.written().to_vec()
        }
        Command::Triples(c) => {
            let mut ctx = context(name, c)?;
            let m = commands::triples(&mut ctx)?;
            let p = &m.payload;
            println!(
                "triples: similarity {} vs {}, valid loss {} vs {}",
                crate::report::num(p.sim_similarity.mean),
                crate::report::num(p.dissim_similarity.mean),
                crate::report::num(p.sim_valid_loss.mean),
                crate::report::num(p.dissim_valid_loss.mean)
            );
            ctx.out.written().to_vec()
        }
        Command::SweepT { common, oracle } => {
            let mut ctx = context(name, common)?;
            let dir = oracle
                .oracle
                .unwrap_or_else(|| ctx.out.root().to_path_buf());
            let m = commands::sweep_t(&mut ctx, &dir)?;
            for r in &m.payload.report.rows {
                println!(
                    "T={}: mean oracle accuracy {}, regret {}",
                    r.num_splits,
                    crate::report::num(r.mean_oracle_acc),
                    crate::report::num(r.regret)
                );
            }
            ctx.out.written().to_vec()
        }
        Command::RestartAblation { common, oracle } => {
            let mut ctx = context(name, common)?;
            let dir = oracle
                .oracle
                .unwrap_or_else(|| ctx.out.root().to_path_buf());
            let m = commands::restart_ablation_cmd(&mut ctx, &dir)?;
            let r = &m.payload.report;
            println!(
                "restart {} vs no restart {}",
                crate::report::num(r.mean_with_restart),
                crate::report::num(r.mean_without_restart)
            );
            ctx.out.written().to_vec()
        }
        Command::Select { common, run } => {
            let mut ctx = context(name, common)?;
            let run = run.unwrap_or_else(|| ctx.out.root().to_path_buf());
            let m = commands::select(&mut ctx, &run)?;
            println!(
                "selected {} ({} epochs)",
                m.payload.selected, m.payload.report.total_epochs
            );
            ctx.out.written().to_vec()
        }
        Command::Report { dirs, out } => {
            let root = out.unwrap_or_else(|| dirs[0].clone());
            let mut w = OutputDir::create(root)?;
            let text = commands::report_dirs(&dirs, &mut w)?;
            print!("{text}");
            w.written().to_vec()
        }
    };
    for p in written {
        log::info!("wrote {}", p.display());
    }
    Ok(())
}

/// Parses `args` and runs the command; returns the process exit code.
/// Failures print one JSON line to stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(
                e.kind(),
                ErrorKind::DisplayHelp
                    | ErrorKind::DisplayVersion
                    | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand
            ) {
                let _ = e.print();
                return if e.kind() == ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand {
                    1
                } else {
                    0
                };
            }
            let first = e
                .to_string()
                .lines()
                .next()
                .unwrap_or("")
                .trim_start_matches("error: ")
                .to_owned();
            let err = CliError::Usage(first);
            eprintln!("{}", err.to_line());
            return err.code();
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", e.to_line());
            e.code()
        }
    }
}
