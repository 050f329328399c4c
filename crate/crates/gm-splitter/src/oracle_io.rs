//! Oracle tables on disk: `oracle.csv` (one row per run) and an
//! `oracle.json` manifest sidecar carrying the space hash.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use gm_splitter_core::data::SpiralConfig;
use gm_splitter_core::harness::{OracleEntry, OracleRun, OracleTable};
use gm_splitter_core::supernet::{Architecture, CellGraph, SpaceDescription};

use crate::error::{CliError, CliResult};
use crate::manifest::{sha256_hex, Manifest};

pub const ORACLE_CSV: &str = "oracle.csv";
pub const ORACLE_JSON: &str = "oracle.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Row {
    arch: String,
    seed: u64,
    valid_acc: f64,
    train_loss: f64,
}

/// Sidecar payload describing the CSV next to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleSidecar {
    pub space_fingerprint: String,
    /// sha256 of the space description's JSON.
    pub space_hash: String,
    pub dataset: SpiralConfig,
    pub epochs: usize,
    pub seeds: Vec<u64>,
    pub num_archs: usize,
    pub best_arch: Option<String>,
    pub best_acc: Option<f64>,
    pub spread: f64,
    pub csv_sha256: String,
}

pub fn space_hash(space: &SpaceDescription) -> String {
    sha256_hex(&serde_json::to_vec(space).expect("space description serializes"))
}

/// CSV bytes for `table`, rows in table order then seed order.
pub fn oracle_csv(graph: &CellGraph, table: &OracleTable) -> CliResult<Vec<u8>> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    for e in &table.entries {
        for r in &e.runs {
            w.serialize(Row {
                arch: e.arch.encode(graph),
                seed: r.seed,
                valid_acc: r.valid_acc,
                train_loss: r.train_loss,
            })?;
        }
    }
    w.into_inner()
        .map_err(|e| CliError::Runtime(format!("csv: {e}")))
}

pub fn sidecar(
    graph: &CellGraph,
    dataset: &SpiralConfig,
    table: &OracleTable,
    csv_bytes: &[u8],
) -> OracleSidecar {
    let best = table.best();
    OracleSidecar {
        space_fingerprint: table.space_fingerprint.clone(),
        space_hash: space_hash(&graph.description()),
        dataset: dataset.clone(),
        epochs: table.epochs,
        seeds: table.seeds.clone(),
        num_archs: table.len(),
        best_arch: best.map(|b| b.arch.encode(graph)),
        best_acc: best.map(|b| b.mean_valid_acc),
        spread: table.spread(),
        csv_sha256: sha256_hex(csv_bytes),
    }
}

fn parse_csv(graph: &CellGraph, bytes: &[u8]) -> CliResult<Vec<OracleEntry>> {
    let mut by_arch: BTreeMap<Architecture, Vec<OracleRun>> = BTreeMap::new();
    let mut r = csv::Reader::from_reader(bytes);
    for row in r.deserialize() {
        let row: Row = row?;
        let arch = Architecture::decode(graph, &row.arch)
            .map_err(|e| CliError::Runtime(format!("oracle csv: {e}")))?;
        by_arch.entry(arch).or_default().push(OracleRun {
            seed: row.seed,
            valid_acc: row.valid_acc,
            train_loss: row.train_loss,
        });
    }
    Ok(by_arch
        .into_iter()
        .map(|(a, runs)| OracleEntry::from_runs(a, runs))
        .collect())
}

/// Loads the oracle in `dir` and checks it was built for `graph` and `dataset`.
pub fn load_oracle(
    dir: &Path,
    graph: &CellGraph,
    dataset: &SpiralConfig,
) -> CliResult<OracleTable> {
    let (csv_path, json_path) = (dir.join(ORACLE_CSV), dir.join(ORACLE_JSON));
    if !csv_path.exists() || !json_path.exists() {
        return Err(CliError::MissingDependency(format!(
            "no oracle in {}; run `gm-splitter oracle` first",
            dir.display()
        )));
    }
    let side: Manifest<OracleSidecar> = Manifest::load(&json_path, "oracle")?;
    let bytes = std::fs::read(&csv_path)?;
    if sha256_hex(&bytes) != side.payload.csv_sha256 {
        return Err(CliError::Runtime(format!(
            "{} does not match the hash in its sidecar",
            csv_path.display()
        )));
    }
    if side.payload.space_hash != space_hash(&graph.description()) {
        return Err(CliError::MissingDependency(format!(
            "the oracle in {} was built for space {}, not the configured {}",
            dir.display(),
            side.payload.space_fingerprint,
            graph.fingerprint()
        )));
    }
    if &side.payload.dataset != dataset {
        return Err(CliError::MissingDependency(format!(
            "the oracle in {} was built on a different dataset ({:?})",
            dir.display(),
            side.payload.dataset
        )));
    }
    let entries = parse_csv(graph, &bytes)?;
    Ok(OracleTable::new(
        side.payload.space_fingerprint,
        side.payload.dataset.seed,
        side.payload.epochs,
        side.payload.seeds,
        entries,
    ))
}
