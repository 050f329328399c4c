//! Brute-force balanced min-cut over an edge's op set.
//!
//! Op sets are tiny (at most eight ops), so every balanced partition is
//! enumerated. Partitions are represented as restricted growth strings:
//! `assign[i]` is the group of op position `i`, with groups numbered in
//! order of first appearance. Enumeration runs in lexicographic order of
//! that string, which makes "first strict minimum" the tie-break.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use super::{GMMatrix, SplitDecision};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Every partition of `n` positions into exactly `b` groups whose sizes
/// differ by at most one, as canonical assignments in lexicographic order.
pub fn balanced_partitions(n: usize, b: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if b == 0 || b > n {
        return out;
    }
    let max_size = n.div_ceil(b);
    let min_size = n / b;
    let mut assign = vec![0usize; n];
    let mut sizes = vec![0usize; b];
    fn rec(
        i: usize,
        used: usize,
        assign: &mut [usize],
        sizes: &mut [usize],
        min_size: usize,
        max_size: usize,
        out: &mut Vec<Vec<usize>>,
    ) {
        let (n, b) = (assign.len(), sizes.len());
        if i == n {
            if used == b && sizes.iter().all(|&s| s >= min_size) {
                out.push(assign.to_vec());
            }
            return;
        }
        // every group still empty needs at least one of the remaining slots
        if b - used > n - i {
            return;
        }
        for g in 0..=used.min(b - 1) {
            if sizes[g] == max_size {
                continue;
            }
            assign[i] = g;
            sizes[g] += 1;
            rec(
                i + 1,
                used.max(g + 1),
                assign,
                sizes,
                min_size,
                max_size,
                out,
            );
            sizes[g] -= 1;
        }
    }
    rec(0, 0, &mut assign, &mut sizes, min_size, max_size, &mut out);
    out
}

/// Sum of scores over all cross-group pairs `i < j`, in row-major order.
pub fn cut_cost(gm: &GMMatrix, assign: &[usize]) -> f64 {
    let mut cost = 0.0;
    for i in 0..assign.len() {
        for j in i + 1..assign.len() {
            if assign[i] != assign[j] {
                cost += gm.scores[i][j];
            }
        }
    }
    cost
}

fn groups_from_assignment(ops: &[usize], assign: &[usize]) -> Vec<Vec<usize>> {
    let b = assign.iter().max().map_or(0, |m| m + 1);
    let mut groups = vec![Vec::new(); b];
    for (&op, &g) in ops.iter().zip(assign) {
        groups[g].push(op);
    }
    groups
}

fn assignment_from_groups(ops: &[usize], groups: &[Vec<usize>]) -> Option<Vec<usize>> {
    ops.iter()
        .map(|op| groups.iter().position(|g| g.contains(op)))
        .collect()
}

/// Balanced partition of the matrix's ops into `branches` groups that
/// minimizes the total cross-group score.
pub fn balanced_min_cut(gm: &GMMatrix, branches: usize) -> Result<SplitDecision> {
    let n = gm.size();
    if branches < 2 || branches > n {
        return Err(Error::InvalidConfig(format!(
            "cannot cut {n} ops on edge {} into {branches} groups",
            gm.edge
        )));
    }
    let mut best: Option<(f64, Vec<usize>)> = None;
    for assign in balanced_partitions(n, branches) {
        let c = cut_cost(gm, &assign);
        if best.as_ref().is_none_or(|(bc, _)| c < *bc) {
            best = Some((c, assign));
        }
    }
    let (cost, assign) = best.expect("2 <= branches <= n admits a balanced partition");
    Ok(SplitDecision {
        edge: gm.edge,
        groups: groups_from_assignment(&gm.ops, &assign),
        cut_cost: Some(cost),
        gm: Some(gm.clone()),
    })
}

fn cost_if_available(gm: Option<&GMMatrix>, groups: &[Vec<usize>]) -> Option<f64> {
    let gm = gm?;
    assignment_from_groups(&gm.ops, groups).map(|a| cut_cost(gm, &a))
}

/// One singleton group per op.
pub fn exhaustive_split(edge: usize, ops: &[usize], gm: Option<&GMMatrix>) -> SplitDecision {
    let groups: Vec<Vec<usize>> = ops.iter().map(|&o| vec![o]).collect();
    SplitDecision {
        edge,
        cut_cost: cost_if_available(gm, &groups),
        groups,
        gm: gm.cloned(),
    }
}

/// Seeded uniformly random balanced partition into `branches` groups.
pub fn random_split(
    edge: usize,
    ops: &[usize],
    branches: usize,
    rng: &mut Rng,
    gm: Option<&GMMatrix>,
) -> Result<SplitDecision> {
    let n = ops.len();
    if branches < 2 || branches > n {
        return Err(Error::InvalidConfig(format!(
            "cannot split {n} ops on edge {edge} into {branches} groups"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    // first n % b groups take the larger size
    let mut assign = vec![0usize; n];
    let mut at = 0;
    for g in 0..branches {
        let size = n / branches + usize::from(g < n % branches);
        for &pos in &order[at..at + size] {
            assign[pos] = g;
        }
        at += size;
    }
    let mut groups = groups_from_assignment(ops, &assign);
    groups.iter_mut().for_each(|g| g.sort_unstable());
    groups.sort();
    Ok(SplitDecision {
        edge,
        cut_cost: cost_if_available(gm, &groups),
        groups,
        gm: gm.cloned(),
    })
}
