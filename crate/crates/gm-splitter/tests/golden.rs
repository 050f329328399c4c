//! First split of the shipped toy config at seed 0, pinned as a regression.
//! Set `UPDATE_GOLDEN=1` to rewrite the file after an intended change.

use std::path::Path;

use serde::{Deserialize, Serialize};

use gm_splitter::config::Config;
use gm_splitter_core::exec::Sequential;
use gm_splitter_core::partition::run_pipeline;

#[derive(Debug, Serialize, Deserialize, PartialEq)]
struct FirstSplit {
    edge: usize,
    groups: Vec<Vec<String>>,
    cut_cost: f64,
    matrix: Vec<Vec<f64>>,
}

#[test]
fn toy_seed0_first_split_matches_golden() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR"));
    let (cfg, _) =
        Config::parse(&std::fs::read_to_string(root.join("../../configs/toy.toml")).unwrap())
            .unwrap();
    let g = cfg.graph().unwrap();
    let data = cfg.dataset().unwrap();
    let mut search = cfg.search_config();
    search.seed = 0;
    let r = run_pipeline(&g, &data, &search, cfg.split.schema, &Sequential).unwrap();
    let d = &r.tree.levels[0][0].decision;
    let got = FirstSplit {
        edge: d.edge,
        groups: d
            .groups
            .iter()
            .map(|gr| {
                gr.iter()
                    .map(|&o| g.op_kind(d.edge, o).name().to_string())
                    .collect()
            })
            .collect(),
        cut_cost: d.cut_cost.unwrap(),
        matrix: d.gm.as_ref().unwrap().scores.clone(),
    };
    let path = root.join("tests/golden/toy_seed0_first_split.json");
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, serde_json::to_string_pretty(&got).unwrap() + "\n").unwrap();
    }
    let want: FirstSplit = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(got.edge, want.edge);
    assert_eq!(got.groups, want.groups);
    assert!((got.cut_cost - want.cut_cost).abs() < 1e-9);
    for (a, b) in got
        .matrix
        .iter()
        .flatten()
        .zip(want.matrix.iter().flatten())
    {
        assert!((a - b).abs() < 1e-9, "{a} vs {b}");
    }
}
