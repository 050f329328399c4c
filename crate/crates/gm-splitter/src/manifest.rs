//! Run manifests: versioned JSON envelopes with a determinism hash.
//!
//! The hash covers the schema version, kind, config, space, seeds and
//! payload. Wall-clock data lives in `timing`, outside the hash, so two runs
//! of the same config and seed hash identically.

use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use gm_splitter_core::supernet::SpaceDescription;

use crate::config::Config;
use crate::error::{CliError, CliResult};

pub const SCHEMA_VERSION: u32 = 1;

/// Seeds a run used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedProvenance {
    pub root_seed: u64,
    pub data_seed: u64,
    /// Seeds of the individual runs, for multi-seed experiments.
    pub run_seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub started_unix_ms: u64,
    pub finished_unix_ms: u64,
    pub wall_clock_secs: f64,
    pub jobs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest<T> {
    pub schema_version: u32,
    pub kind: String,
    pub tool_version: String,
    pub config: Config,
    pub space: SpaceDescription,
    pub seeds: SeedProvenance,
    pub payload: T,
    pub determinism_hash: String,
    pub timing: Timing,
}

#[derive(Serialize)]
struct Hashed<'a, T> {
    schema_version: u32,
    kind: &'a str,
    config: &'a Config,
    space: &'a SpaceDescription,
    seeds: &'a SeedProvenance,
    payload: &'a T,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn unix_ms(t: SystemTime) -> u64 {
    t.duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

/// Wall-clock bookkeeping started when a command begins.
#[derive(Debug)]
pub struct Clock {
    started: SystemTime,
    instant: Instant,
}

impl Clock {
    pub fn start() -> Self {
        Clock {
            started: SystemTime::now(),
            instant: Instant::now(),
        }
    }

    pub fn finish(&self, jobs: usize) -> Timing {
        Timing {
            started_unix_ms: unix_ms(self.started),
            finished_unix_ms: unix_ms(SystemTime::now()),
            wall_clock_secs: self.instant.elapsed().as_secs_f64(),
            jobs,
        }
    }
}

impl<T: Serialize> Manifest<T> {
    pub fn new(
        kind: &str,
        config: &Config,
        seeds: SeedProvenance,
        payload: T,
        timing: Timing,
    ) -> CliResult<Self> {
        let mut m = Manifest {
            schema_version: SCHEMA_VERSION,
            kind: kind.to_owned(),
            tool_version: env!("CARGO_PKG_VERSION").to_owned(),
            config: config.clone(),
            space: config.space_description(),
            seeds,
            payload,
            determinism_hash: String::new(),
            timing,
        };
        m.determinism_hash = m.compute_hash()?;
        Ok(m)
    }

    pub fn compute_hash(&self) -> CliResult<String> {
        let bytes = serde_json::to_vec(&Hashed {
            schema_version: self.schema_version,
            kind: &self.kind,
            config: &self.config,
            space: &self.space,
            seeds: &self.seeds,
            payload: &self.payload,
        })?;
        Ok(sha256_hex(&bytes))
    }
}

impl<T: DeserializeOwned + Serialize> Manifest<T> {
    /// Loads a manifest and checks kind, version and hash.
    pub fn load(path: &Path, kind: &str) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::MissingDependency(format!("cannot read {}: {e}", path.display()))
        })?;
        let m: Manifest<T> = serde_json::from_str(&text).map_err(|e| {
            CliError::Runtime(format!("{} is not a {kind} manifest: {e}", path.display()))
        })?;
        if m.kind != kind {
            return Err(CliError::Runtime(format!(
                "{} holds a {} manifest, expected {kind}",
                path.display(),
                m.kind
            )));
        }
        if m.schema_version != SCHEMA_VERSION {
            return Err(CliError::Runtime(format!(
                "{} has schema version {}, this build reads {SCHEMA_VERSION}",
                path.display(),
                m.schema_version
            )));
        }
        if m.compute_hash()? != m.determinism_hash {
            return Err(CliError::Runtime(format!(
                "{}: determinism hash does not match its contents",
                path.display()
            )));
        }
        Ok(m)
    }
}

/// Just the envelope fields, for reading any manifest without its payload type.
#[derive(Debug, Clone, Deserialize)]
pub struct Header {
    pub schema_version: u32,
    pub kind: String,
    pub determinism_hash: String,
}

/// The one place files are written. Commands hand finished artifacts here
/// from the coordinating thread.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    written: Vec<PathBuf>,
}

impl OutputDir {
    pub fn create(root: PathBuf) -> CliResult<Self> {
        std::fs::create_dir_all(&root).map_err(|e| {
            CliError::Runtime(format!(
                "cannot create output directory {}: {e}",
                root.display()
            ))
        })?;
        Ok(OutputDir {
            root,
            written: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write(&mut self, name: &str, contents: &[u8]) -> CliResult<PathBuf> {
        let path = self.root.join(name);
        std::fs::write(&path, contents)
            .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
        self.written.push(path.clone());
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> CliResult<PathBuf> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }
}
