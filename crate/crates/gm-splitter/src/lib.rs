//! Command line, configuration files, run manifests and reports for
//! [`gm_splitter_core`].
//!
//! Every command writes under one output directory: a JSON manifest whose
//! determinism hash covers the config, seeds and results (not timestamps),
//! plus CSV tables. `report` turns manifests into text tables and SVG plots.

pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;
pub mod oracle_io;
pub mod pool;
pub mod report;
pub mod svg;
