//! Picking the final architecture among per-leaf candidates.
//!
//! Successive halving trains every candidate standalone and, at each
//! checkpoint, discards the worse half of the pool by valid accuracy. A
//! checkpoint at epoch `e` fires once each survivor has trained `e` epochs
//! in total. The drop removes `floor(|P| / 2)` candidates, so odd pools keep
//! the larger half and the pool after `k` checkpoints has `ceil(N / 2^k)`
//! members.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::optim::OptimizerConfig;
use crate::partition::LeafSummary;
use crate::search::{child_seeds, ChildTrainer};
use crate::supernet::{Architecture, CellGraph};

/// Which rule picks the final architecture.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionCriterion {
    /// Successive halving over standalone trainings.
    Sh,
    /// The derived architecture of the leaf with the lowest valid loss.
    ValidLoss,
    /// Train every candidate fully and keep the best.
    BestOfAll,
}

/// Strictly increasing checkpoint epochs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SHSchedule {
    checkpoints: Vec<usize>,
}

impl SHSchedule {
    pub fn new(checkpoints: Vec<usize>) -> Result<Self> {
        if checkpoints.is_empty()
            || checkpoints[0] == 0
            || checkpoints.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(Error::InvalidConfig(format!(
                "checkpoints {checkpoints:?} must be positive and strictly increasing"
            )));
        }
        Ok(SHSchedule { checkpoints })
    }

    pub fn checkpoints(&self) -> &[usize] {
        &self.checkpoints
    }

    /// Checks there are enough checkpoints to halve `n` candidates down to one.
    pub fn validate_for(&self, n: usize) -> Result<()> {
        if n == 0 {
            return Err(Error::InvalidConfig(
                "successive halving needs at least one candidate".into(),
            ));
        }
        let needed = halving_rounds(n);
        if self.checkpoints.len() < needed {
            return Err(Error::InvalidConfig(format!(
                "{n} candidates need {needed} checkpoints, schedule has {}",
                self.checkpoints.len()
            )));
        }
        Ok(())
    }
}

impl Default for SHSchedule {
    fn default() -> Self {
        SHSchedule {
            checkpoints: vec![5, 15, 40],
        }
    }
}

/// `ceil(log2 n)`: checkpoints needed to reach a single survivor.
pub fn halving_rounds(n: usize) -> usize {
    let mut rounds = 0;
    let mut pool = n;
    while pool > 1 {
        pool -= pool / 2;
        rounds += 1;
    }
    rounds
}

/// Total epochs successive halving spends on `n` candidates:
/// `sum_k (epo_k - epo_{k-1}) * ceil(n / 2^(k-1))` over the rounds it needs,
/// or `epo_1` for a single candidate.
pub fn closed_form_epochs(n: usize, schedule: &SHSchedule) -> usize {
    let c = schedule.checkpoints();
    if n == 1 {
        return c[0];
    }
    let mut total = 0;
    let mut prev = 0;
    for (k, &e) in c.iter().enumerate().take(halving_rounds(n)) {
        total += (e - prev) * n.div_ceil(1 << k);
        prev = e;
    }
    total
}

/// Supplies training and scoring for successive halving.
pub trait CandidateTrainer {
    /// Trains each listed candidate for `epochs` more epochs.
    fn advance(&mut self, candidates: &[usize], epochs: usize) -> Result<()>;
    /// (valid accuracy, train loss) of a candidate at its current epoch.
    fn score(&self, candidate: usize) -> Result<(f64, f64)>;
}

/// Standalone training of architectures, parallel over candidates.
pub struct StandaloneCandidates<'a, E: Executor> {
    graph: &'a CellGraph,
    data: &'a Dataset,
    exec: &'a E,
    trainers: Vec<Option<ChildTrainer>>,
}

impl<'a, E: Executor> StandaloneCandidates<'a, E> {
    /// One fresh trainer per architecture; the learning-rate schedule spans `horizon` epochs.
    pub fn new(
        graph: &'a CellGraph,
        data: &'a Dataset,
        archs: &[Architecture],
        opt: &OptimizerConfig,
        horizon: usize,
        seed: u64,
        exec: &'a E,
    ) -> Self {
        let trainers = archs
            .iter()
            .map(|a| {
                let (init, batches) = child_seeds(graph, a, seed);
                Some(ChildTrainer::new(
                    graph,
                    a.clone(),
                    opt.clone(),
                    init,
                    batches,
                    horizon,
                ))
            })
            .collect();
        StandaloneCandidates {
            graph,
            data,
            exec,
            trainers,
        }
    }
}

impl<E: Executor> CandidateTrainer for StandaloneCandidates<'_, E> {
    fn advance(&mut self, candidates: &[usize], epochs: usize) -> Result<()> {
        let taken: Vec<ChildTrainer> = candidates
            .iter()
            .map(|&i| self.trainers[i].take().expect("candidate trainer present"))
            .collect();
        let (graph, data) = (self.graph, self.data);
        let results = self.exec.map(taken, |mut t| {
            let r = (0..epochs).try_for_each(|_| t.train_epoch(graph, data).map(drop));
            (t, r)
        });
        let mut first_err = None;
        for (&i, (t, r)) in candidates.iter().zip(results) {
            self.trainers[i] = Some(t);
            if let (Err(e), None) = (r, &first_err) {
                first_err = Some(e);
            }
        }
        first_err.map_or(Ok(()), Err)
    }

    fn score(&self, candidate: usize) -> Result<(f64, f64)> {
        let t = self.trainers[candidate]
            .as_ref()
            .expect("candidate trainer present");
        let (_, acc) = t.evaluate(self.graph, self.data)?;
        Ok((acc, t.last_train_loss()))
    }
}

/// Trainer that only counts epochs and reports scripted scores; used for
/// dry runs of a schedule.
pub struct ScriptedCandidates<F: Fn(usize, usize) -> (f64, f64)> {
    epochs: Vec<usize>,
    script: F,
}

impl<F: Fn(usize, usize) -> (f64, f64)> ScriptedCandidates<F> {
    /// `script(candidate, epochs_trained)` gives (valid accuracy, train loss).
    pub fn new(n: usize, script: F) -> Self {
        ScriptedCandidates {
            epochs: vec![0; n],
            script,
        }
    }

    pub fn epochs(&self) -> &[usize] {
        &self.epochs
    }
}

impl<F: Fn(usize, usize) -> (f64, f64)> CandidateTrainer for ScriptedCandidates<F> {
    fn advance(&mut self, candidates: &[usize], epochs: usize) -> Result<()> {
        candidates.iter().for_each(|&i| self.epochs[i] += epochs);
        Ok(())
    }

    fn score(&self, candidate: usize) -> Result<(f64, f64)> {
        Ok((self.script)(candidate, self.epochs[candidate]))
    }
}

/// Score of one candidate at one checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointScore {
    pub epoch: usize,
    pub valid_accuracy: f64,
    pub train_loss: f64,
}

/// Everything recorded about one candidate during selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateTrace {
    pub arch: Architecture,
    pub scores: Vec<CheckpointScore>,
    pub epochs_trained: usize,
    /// Checkpoint epoch at which the candidate was discarded.
    pub dropped_at: Option<usize>,
}

/// Outcome of a selection criterion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub criterion: SelectionCriterion,
    pub trace: Vec<CandidateTrace>,
    /// Index into `trace` of the selected candidate.
    pub survivor: usize,
    pub selected: Architecture,
    /// Leaf that produced the selection, for the valid-loss criterion.
    pub selected_leaf: Option<String>,
    pub total_epochs: usize,
}

/// Higher accuracy first, then lower train loss, then smaller architecture.
fn rank_order(a: (f64, f64, &Architecture), b: (f64, f64, &Architecture)) -> Ordering {
    b.0.total_cmp(&a.0)
        .then(a.1.total_cmp(&b.1))
        .then(a.2.cmp(b.2))
}

/// Successive halving over `archs` with any [`CandidateTrainer`].
pub fn successive_halving_with<T: CandidateTrainer>(
    archs: &[Architecture],
    schedule: &SHSchedule,
    trainer: &mut T,
) -> Result<SelectionReport> {
    schedule.validate_for(archs.len())?;
    let mut trace: Vec<CandidateTrace> = archs
        .iter()
        .map(|a| CandidateTrace {
            arch: a.clone(),
            scores: Vec::new(),
            epochs_trained: 0,
            dropped_at: None,
        })
        .collect();
    let mut pool: Vec<usize> = (0..archs.len()).collect();
    let mut prev = 0;
    let mut total = 0;
    for &epoch in schedule.checkpoints() {
        let step = epoch - prev;
        trainer.advance(&pool, step)?;
        total += step * pool.len();
        prev = epoch;
        let mut scored = Vec::with_capacity(pool.len());
        for &i in &pool {
            let (acc, loss) = trainer.score(i)?;
            trace[i].epochs_trained = epoch;
            trace[i].scores.push(CheckpointScore {
                epoch,
                valid_accuracy: acc,
                train_loss: loss,
            });
            scored.push((i, acc, loss));
        }
        if pool.len() == 1 {
            break;
        }
        scored.sort_by(|x, y| rank_order((x.1, x.2, &archs[x.0]), (y.1, y.2, &archs[y.0])));
        let keep = pool.len() - pool.len() / 2;
        for &(i, _, _) in &scored[keep..] {
            trace[i].dropped_at = Some(epoch);
        }
        pool = scored[..keep].iter().map(|s| s.0).collect();
        pool.sort_unstable();
        if pool.len() == 1 {
            break;
        }
    }
    let survivor = pool[0];
    Ok(SelectionReport {
        criterion: SelectionCriterion::Sh,
        selected: archs[survivor].clone(),
        trace,
        survivor,
        selected_leaf: None,
        total_epochs: total,
    })
}

/// Successive halving with standalone training of each candidate.
#[allow(clippy::too_many_arguments)]
pub fn successive_halving<E: Executor>(
    graph: &CellGraph,
    archs: &[Architecture],
    data: &Dataset,
    opt: &OptimizerConfig,
    schedule: &SHSchedule,
    seed: u64,
    exec: &E,
) -> Result<SelectionReport> {
    schedule.validate_for(archs.len())?;
    let horizon = *schedule
        .checkpoints()
        .last()
        .expect("schedule is non-empty");
    let mut trainer = StandaloneCandidates::new(graph, data, archs, opt, horizon, seed, exec);
    successive_halving_with(archs, schedule, &mut trainer)
}

/// Picks the derived architecture of the leaf with the lowest final valid
/// loss (ties: smaller label).
pub fn select_by_valid_loss(leaves: &[LeafSummary]) -> Result<SelectionReport> {
    if leaves.is_empty() {
        return Err(Error::InvalidConfig("no leaves to select from".into()));
    }
    let mut best = 0;
    for (i, l) in leaves.iter().enumerate().skip(1) {
        let (lb, bb) = (
            l.trained.final_valid_loss,
            leaves[best].trained.final_valid_loss,
        );
        if lb < bb || (lb == bb && l.label < leaves[best].label) {
            best = i;
        }
    }
    let trace = leaves
        .iter()
        .map(|l| CandidateTrace {
            arch: l.derived.clone(),
            scores: vec![CheckpointScore {
                epoch: l.trained.epoch_log.len(),
                valid_accuracy: l.trained.valid_accuracy,
                train_loss: l.trained.final_train_loss,
            }],
            epochs_trained: 0,
            dropped_at: None,
        })
        .collect();
    Ok(SelectionReport {
        criterion: SelectionCriterion::ValidLoss,
        trace,
        survivor: best,
        selected: leaves[best].derived.clone(),
        selected_leaf: Some(leaves[best].label.clone()),
        total_epochs: 0,
    })
}

/// Trains every candidate for `epochs` and keeps the best valid accuracy
/// (ties: lower train loss, then smaller architecture).
pub fn best_of_all<E: Executor>(
    graph: &CellGraph,
    archs: &[Architecture],
    data: &Dataset,
    opt: &OptimizerConfig,
    epochs: usize,
    seed: u64,
    exec: &E,
) -> Result<SelectionReport> {
    if archs.is_empty() {
        return Err(Error::InvalidConfig("no candidates to select from".into()));
    }
    let mut trainer = StandaloneCandidates::new(graph, data, archs, opt, epochs, seed, exec);
    let all: Vec<usize> = (0..archs.len()).collect();
    trainer.advance(&all, epochs)?;
    let mut trace = Vec::with_capacity(archs.len());
    let mut best = 0;
    let mut best_score = (f64::NEG_INFINITY, f64::INFINITY);
    for (i, a) in archs.iter().enumerate() {
        let (acc, loss) = trainer.score(i)?;
        if i == 0
            || rank_order((acc, loss, a), (best_score.0, best_score.1, &archs[best]))
                == Ordering::Less
        {
            best = i;
            best_score = (acc, loss);
        }
        trace.push(CandidateTrace {
            arch: a.clone(),
            scores: vec![CheckpointScore {
                epoch: epochs,
                valid_accuracy: acc,
                train_loss: loss,
            }],
            epochs_trained: epochs,
            dropped_at: None,
        });
    }
    Ok(SelectionReport {
        criterion: SelectionCriterion::BestOfAll,
        trace,
        survivor: best,
        selected: archs[best].clone(),
        selected_leaf: None,
        total_epochs: epochs * archs.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn archs(n: usize) -> Vec<Architecture> {
        (0..n).map(|i| Architecture::new(vec![i])).collect()
    }

    #[test]
    fn schedule_validation() {
        assert!(SHSchedule::new(vec![]).is_err());
        assert!(SHSchedule::new(vec![0, 3]).is_err());
        assert!(SHSchedule::new(vec![3, 3]).is_err());
        let s = SHSchedule::new(vec![1, 2]).unwrap();
        assert!(s.validate_for(4).is_ok());
        assert!(s.validate_for(5).is_err());
        assert!(s.validate_for(0).is_err());
    }

    #[test]
    fn halving_rounds_is_ceil_log2() {
        let expect = [0, 0, 1, 2, 2, 3, 3, 3, 3, 4];
        for (n, &e) in expect.iter().enumerate().skip(1) {
            assert_eq!(halving_rounds(n), e, "n={n}");
        }
    }

    #[test]
    fn single_candidate_trains_to_first_checkpoint() {
        let s = SHSchedule::new(vec![4, 9]).unwrap();
        let mut t = ScriptedCandidates::new(1, |_, _| (0.5, 1.0));
        let r = successive_halving_with(&archs(1), &s, &mut t).unwrap();
        assert_eq!(r.survivor, 0);
        assert_eq!(r.total_epochs, 4);
        assert_eq!(closed_form_epochs(1, &s), 4);
    }

    #[test]
    fn monotone_scores_keep_the_best() {
        let s = SHSchedule::new(vec![1, 3, 4, 8]).unwrap();
        for n in 1..=16 {
            let mut t = ScriptedCandidates::new(n, |i, _| (1.0 - i as f64 / 100.0, 0.0));
            let r = successive_halving_with(&archs(n), &s, &mut t).unwrap();
            assert_eq!(r.survivor, 0);
        }
    }

    #[test]
    fn ties_fall_back_to_loss_then_arch() {
        let s = SHSchedule::new(vec![1]).unwrap();
        let mut t = ScriptedCandidates::new(2, |i, _| (0.5, if i == 0 { 0.9 } else { 0.1 }));
        assert_eq!(
            successive_halving_with(&archs(2), &s, &mut t)
                .unwrap()
                .survivor,
            1
        );
        let mut t = ScriptedCandidates::new(2, |_, _| (0.5, 0.1));
        assert_eq!(
            successive_halving_with(&archs(2), &s, &mut t)
                .unwrap()
                .survivor,
            0
        );
    }
}
