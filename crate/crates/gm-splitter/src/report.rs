//! Plain-text tables and SVG plots from stored manifests.
//!
//! Numbers are printed with the same shortest round-trip formatting the
//! manifests use, so every printed value appears verbatim in its source.

use std::fmt::Write;
use std::path::Path;

use gm_splitter_core::harness::TripleExperimentReport;
use gm_splitter_core::supernet::CellGraph;

use crate::commands::{
    AblationPayload, RankPayload, SelectPayload, SplitPayload, SweepPayload, ABLATION_MANIFEST,
    RANK_MANIFEST, SELECT_MANIFEST, SPLIT_MANIFEST, SWEEP_MANIFEST, TRIPLES_MANIFEST,
};
use crate::error::{CliError, CliResult};
use crate::manifest::Manifest;
use crate::oracle_io::{OracleSidecar, ORACLE_JSON};
use crate::svg;

/// A number as the manifests store it; `-` for a missing value.
pub fn num(v: f64) -> String {
    serde_json::to_string(&v).unwrap_or_else(|_| "-".into())
}

pub fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), num)
}

/// Left-aligned columns separated by two spaces.
pub fn table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |cells: Vec<&str>| {
        let mut s = String::new();
        for (i, (c, w)) in cells.iter().zip(&widths).enumerate() {
            if i + 1 == cells.len() {
                s.push_str(c);
            } else {
                let _ = write!(s, "{c:<w$}  ");
            }
        }
        s.trim_end().to_owned() + "\n"
    };
    let mut out = line(header.to_vec());
    for r in rows {
        out.push_str(&line(r.iter().map(String::as_str).collect()));
    }
    out
}

/// Everything rendered from one directory.
#[derive(Debug, Default)]
pub struct Rendered {
    pub text: String,
    /// `(file name, svg)` pairs.
    pub plots: Vec<(String, String)>,
    pub sections: usize,
}

fn graph_of<T>(m: &Manifest<T>) -> CliResult<CellGraph> {
    CellGraph::new(m.space.clone()).map_err(|e| CliError::Runtime(format!("manifest space: {e}")))
}

fn heading(out: &mut String, kind: &str, dir: &Path, hash: &str) {
    let _ = writeln!(out, "== {kind}  {}  hash {hash}", dir.display());
}

fn render_split(m: &Manifest<SplitPayload>, dir: &Path, r: &mut Rendered) -> CliResult<()> {
    let g = graph_of(m)?;
    let p = &m.payload;
    let out = &mut r.text;
    heading(out, "split", dir, &m.determinism_hash);
    let _ = writeln!(
        out,
        "schema {}  splits {}  leaves {}",
        p.tree.schema.name(),
        p.tree.levels.len(),
        p.tree.leaf_count()
    );
    let _ = writeln!(out, "\nleaf counts by level");
    let mut rows = vec![vec!["0".into(), "1".into()]];
    let mut count = 1;
    for (t, level) in p.tree.levels.iter().enumerate() {
        count = level.iter().map(|s| s.children.len()).sum::<usize>() + (count - level.len());
        rows.push(vec![(t + 1).to_string(), count.to_string()]);
    }
    out.push_str(&table(&["level", "sub_supernets"], &rows));

    let _ = writeln!(out, "\nsplits");
    let mut rows = Vec::new();
    let mut edge_rows = Vec::new();
    for (t, level) in p.tree.levels.iter().enumerate() {
        for s in level {
            let d = &s.decision;
            let groups = d
                .groups
                .iter()
                .map(|gr| {
                    gr.iter()
                        .map(|&o| g.op_kind(d.edge, o).name())
                        .collect::<Vec<_>>()
                        .join("+")
                })
                .collect::<Vec<_>>()
                .join(" | ");
            rows.push(vec![
                t.to_string(),
                s.parent.clone(),
                d.edge.to_string(),
                groups,
                opt(d.cut_cost),
            ]);
            if let Some(scores) = &s.scores {
                for (i, c) in scores.decisions.iter().enumerate() {
                    edge_rows.push(vec![
                        t.to_string(),
                        s.parent.clone(),
                        c.edge.to_string(),
                        opt(c.cut_cost),
                        if i == scores.selected {
                            "*".into()
                        } else {
                            String::new()
                        },
                    ]);
                }
            }
        }
    }
    out.push_str(&table(
        &["level", "parent", "edge", "groups", "cut_cost"],
        &rows,
    ));
    if !edge_rows.is_empty() {
        let _ = writeln!(out, "\ncandidate edge cut costs");
        out.push_str(&table(
            &["level", "parent", "edge", "cut_cost", "chosen"],
            &edge_rows,
        ));
    }

    let _ = writeln!(out, "\nleaves");
    let rows: Vec<Vec<String>> = p
        .leaves
        .iter()
        .map(|l| {
            vec![
                l.label.clone(),
                num(l.trained.valid_accuracy),
                num(l.trained.final_valid_loss),
                l.derived.encode(&g),
            ]
        })
        .collect();
    out.push_str(&table(
        &["leaf", "valid_accuracy", "final_valid_loss", "derived"],
        &rows,
    ));
    for w in &p.warnings {
        let _ = writeln!(out, "warning: {w}");
    }
    out.push('\n');

    let series: Vec<(String, Vec<(f64, f64)>)> = p
        .leaves
        .iter()
        .map(|l| {
            (
                l.label.clone(),
                l.trained
                    .epoch_log
                    .iter()
                    .map(|e| (e.epoch as f64, e.valid_accuracy))
                    .collect(),
            )
        })
        .collect();
    r.plots.push((
        "split_leaf_accuracy.svg".into(),
        svg::line_chart(
            "Leaf supernet validation accuracy",
            "epoch",
            "mean child accuracy",
            &series,
        ),
    ));
    Ok(())
}

fn render_select(m: &Manifest<SelectPayload>, dir: &Path, r: &mut Rendered) -> CliResult<()> {
    let g = graph_of(m)?;
    let rep = &m.payload.report;
    let out = &mut r.text;
    heading(out, "select", dir, &m.determinism_hash);
    let _ = writeln!(
        out,
        "criterion {}  selected {}  total_epochs {}  source {}",
        serde_json::to_value(rep.criterion)?
            .as_str()
            .unwrap_or_default(),
        m.payload.selected,
        rep.total_epochs,
        m.payload.source_hash
    );
    let rows: Vec<Vec<String>> = rep
        .trace
        .iter()
        .flat_map(|t| {
            let g = &g;
            t.scores.iter().map(move |s| {
                vec![
                    t.arch.encode(g),
                    s.epoch.to_string(),
                    num(s.valid_accuracy),
                    num(s.train_loss),
                    t.dropped_at.map_or_else(String::new, |d| d.to_string()),
                ]
            })
        })
        .collect();
    out.push_str(&table(
        &[
            "arch",
            "epoch",
            "valid_accuracy",
            "train_loss",
            "dropped_at",
        ],
        &rows,
    ));
    out.push('\n');
    Ok(())
}

fn render_oracle(m: &Manifest<OracleSidecar>, dir: &Path, r: &mut Rendered) -> CliResult<()> {
    let p = &m.payload;
    let out = &mut r.text;
    heading(out, "oracle", dir, &m.determinism_hash);
    let rows = vec![vec![
        p.num_archs.to_string(),
        p.epochs.to_string(),
        format!("{:?}", p.seeds),
        p.best_arch.clone().unwrap_or_default(),
        opt(p.best_acc),
        num(p.spread),
    ]];
    out.push_str(&table(
        &["archs", "epochs", "seeds", "best", "best_acc", "spread"],
        &rows,
    ));
    out.push('\n');
    Ok(())
}

fn render_rank(m: &Manifest<RankPayload>, dir: &Path, r: &mut Rendered) -> CliResult<()> {
    let p = &m.payload;
    let out = &mut r.text;
    heading(out, "rank", dir, &m.determinism_hash);
    let _ = writeln!(
        out,
        "budget {}  seeds {:?}  oracle {}",
        p.budget, m.seeds.run_seeds, p.oracle_hash
    );
    let mut header = vec!["schema".to_string(), "leaves".into()];
    header.extend(p.cuts.iter().map(|c| format!("rho@{}", num(*c))));
    header.push("selected_oracle_acc".into());
    let rows: Vec<Vec<String>> = p
        .reports
        .iter()
        .map(|rep| {
            let mut row = vec![rep.schema.name().to_string(), rep.leaf_count.to_string()];
            row.extend(rep.mean_rho.iter().map(|c| opt(c.rho)));
            row.push(num(rep.mean_selected_oracle_acc));
            row
        })
        .collect();
    let h: Vec<&str> = header.iter().map(String::as_str).collect();
    out.push_str(&table(&h, &rows));
    out.push('\n');
    let cats: Vec<String> = p
        .cuts
        .iter()
        .map(|c| format!("top {}%", num(c * 100.0)))
        .collect();
    let series: Vec<(String, Vec<Option<f64>>)> = p
        .reports
        .iter()
        .map(|rep| {
            (
                rep.schema.name().to_string(),
                rep.mean_rho.iter().map(|c| c.rho).collect(),
            )
        })
        .collect();
    r.plots.push((
        "rank_rho.svg".into(),
        svg::bar_chart(
            "Spearman rho against the oracle",
            "mean rho",
            &cats,
            &series,
        ),
    ));
    let acc: Vec<(String, Vec<Option<f64>>)> = p
        .reports
        .iter()
        .map(|rep| {
            (
                rep.schema.name().to_string(),
                vec![Some(rep.mean_selected_oracle_acc)],
            )
        })
        .collect();
    r.plots.push((
        "rank_selected_accuracy.svg".into(),
        svg::bar_chart(
            "Oracle accuracy of the selected architecture",
            "accuracy",
            &["selected".into()],
            &acc,
        ),
    ));
    Ok(())
}

fn render_sweep(m: &Manifest<SweepPayload>, dir: &Path, r: &mut Rendered) -> CliResult<()> {
    let rep = &m.payload.report;
    let out = &mut r.text;
    heading(out, "sweep_t", dir, &m.determinism_hash);
    let _ = writeln!(
        out,
        "branch_factor {}  oracle_best_acc {}",
        rep.branch_factor,
        num(rep.oracle_best_acc)
    );
    let rows: Vec<Vec<String>> = rep
        .rows
        .iter()
        .map(|row| {
            vec![
                row.num_splits.to_string(),
                num(row.mean_oracle_acc),
                num(row.regret),
            ]
        })
        .collect();
    out.push_str(&table(&["num_splits", "mean_oracle_acc", "regret"], &rows));
    out.push('\n');
    let series = vec![(
        "regret".to_string(),
        rep.rows
            .iter()
            .map(|row| (row.num_splits as f64, row.regret))
            .collect(),
    )];
    r.plots.push((
        "sweep_t_regret.svg".into(),
        svg::line_chart("Regret by number of splits", "splits", "regret", &series),
    ));
    Ok(())
}

fn render_ablation(m: &Manifest<AblationPayload>, dir: &Path, r: &mut Rendered) -> CliResult<()> {
    let rep = &m.payload.report;
    let out = &mut r.text;
    heading(out, "restart_ablation", dir, &m.determinism_hash);
    let mut rows: Vec<Vec<String>> = rep
        .seeds
        .iter()
        .zip(rep.with_restart.iter().zip(&rep.without_restart))
        .map(|(s, (a, b))| vec![s.to_string(), num(*a), num(*b)])
        .collect();
    rows.push(vec![
        "mean".into(),
        num(rep.mean_with_restart),
        num(rep.mean_without_restart),
    ]);
    out.push_str(&table(&["seed", "with_restart", "without_restart"], &rows));
    out.push('\n');
    Ok(())
}

fn render_triples(
    m: &Manifest<TripleExperimentReport>,
    dir: &Path,
    r: &mut Rendered,
) -> CliResult<()> {
    let p = &m.payload;
    let out = &mut r.text;
    heading(out, "triples", dir, &m.determinism_hash);
    let rows = vec![
        vec![
            "similarity".into(),
            num(p.sim_similarity.mean),
            num(p.sim_similarity.std),
            num(p.dissim_similarity.mean),
            num(p.dissim_similarity.std),
        ],
        vec![
            "train_loss".into(),
            num(p.sim_train_loss.mean),
            num(p.sim_train_loss.std),
            num(p.dissim_train_loss.mean),
            num(p.dissim_train_loss.std),
        ],
        vec![
            "valid_loss".into(),
            num(p.sim_valid_loss.mean),
            num(p.sim_valid_loss.std),
            num(p.dissim_valid_loss.mean),
            num(p.dissim_valid_loss.std),
        ],
    ];
    let _ = writeln!(out, "triples {}", p.triples.len());
    out.push_str(&table(
        &[
            "quantity",
            "with_sim_mean",
            "with_sim_std",
            "with_dissim_mean",
            "with_dissim_std",
        ],
        &rows,
    ));
    for n in &p.notes {
        let _ = writeln!(out, "note: {n}");
    }
    out.push('\n');
    Ok(())
}

/// Renders each manifest present in `dir`.
pub fn render_dir(dir: &Path) -> CliResult<Rendered> {
    let mut r = Rendered::default();
    macro_rules! each {
        ($file:expr, $kind:literal, $ty:ty, $render:expr) => {
            let path = dir.join($file);
            if path.exists() {
                let m: Manifest<$ty> = Manifest::load(&path, $kind)?;
                $render(&m, dir, &mut r)?;
                r.sections += 1;
            }
        };
    }
    each!(ORACLE_JSON, "oracle", OracleSidecar, render_oracle);
    each!(SPLIT_MANIFEST, "split", SplitPayload, render_split);
    each!(SELECT_MANIFEST, "select", SelectPayload, render_select);
    each!(RANK_MANIFEST, "rank", RankPayload, render_rank);
    each!(SWEEP_MANIFEST, "sweep_t", SweepPayload, render_sweep);
    each!(
        ABLATION_MANIFEST,
        "restart_ablation",
        AblationPayload,
        render_ablation
    );
    each!(
        TRIPLES_MANIFEST,
        "triples",
        TripleExperimentReport,
        render_triples
    );
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_match_json() {
        assert_eq!(num(0.1), "0.1");
        assert_eq!(num(1.0), "1.0");
        assert_eq!(num(1e-7), serde_json::to_string(&1e-7).unwrap());
        assert_eq!(opt(None), "-");
    }

    #[test]
    fn table_aligns_columns() {
        let t = table(&["a", "bb"], &[vec!["ccc".into(), "d".into()]]);
        assert_eq!(t, "a    bb\nccc  d\n");
    }
}
