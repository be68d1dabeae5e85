//! All-ranking top-K metrics and the temperature sweep.

use std::cmp::Ordering;

use rayon::prelude::*;

use crate::dataset::{Interactions, PopularityGrouping, SplitPair};
use crate::embedding::{dot, EmbeddingTable};
use crate::error::{Error, Result};
use crate::trainer::{train, Strategy, TrainConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub k: usize,
    pub recall: f64,
    pub ndcg: f64,
    /// `None` for groups without test items among evaluated users.
    pub per_group_recall: Vec<Option<f64>>,
    pub n_evaluated_users: usize,
}

/// Worker count from `ADAPTAU_THREADS`, defaulting to the available parallelism.
pub fn worker_count() -> usize {
    std::env::var("ADAPTAU_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn pool() -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(worker_count())
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

/// Score order: descending score, ascending index on ties.
fn by_score(scores: &[f64]) -> impl Fn(&usize, &usize) -> Ordering + '_ {
    move |&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b))
}

fn user_scores(rows: &crate::embedding::ScoringRows, u: usize, m: usize) -> Vec<f64> {
    let x = rows.user_row(u);
    (0..m).map(|i| dot(x, rows.item_row(i))).collect()
}

/// Full ranking of the catalog for `u` under the table's scoring mode, with
/// `u`'s training positives removed.
pub fn rank_items(table: &EmbeddingTable, train: &Interactions, u: usize) -> Result<Vec<usize>> {
    let rows = table.scoring_rows()?;
    let scores = user_scores(&rows, u, table.m());
    let mut items: Vec<usize> = (0..table.m()).filter(|&i| !train.contains(u, i)).collect();
    items.sort_by(by_score(&scores));
    Ok(items)
}

/// First `k` entries of [`rank_items`] without sorting the whole catalog.
pub fn top_k(scores: &[f64], exclude: &[usize], k: usize) -> Vec<usize> {
    let mut items: Vec<usize> = (0..scores.len()).filter(|i| exclude.binary_search(i).is_err()).collect();
    let cmp = by_score(scores);
    if k < items.len() {
        items.select_nth_unstable_by(k, &cmp);
        items.truncate(k);
    }
    items.sort_by(cmp);
    items
}

/// Top-`k` lists for every user (training positives masked).
pub fn rankings(table: &EmbeddingTable, train: &Interactions, k: usize) -> Result<Vec<Vec<usize>>> {
    let rows = table.scoring_rows()?;
    let m = table.m();
    let compute = || {
        (0..table.n())
            .into_par_iter()
            .map(|u| top_k(&user_scores(&rows, u, m), train.user_items(u), k))
            .collect()
    };
    Ok(pool()?.install(compute))
}

fn ndcg_one(top: &[usize], truth: &[usize], k: usize) -> f64 {
    let dcg: f64 = top
        .iter()
        .take(k)
        .enumerate()
        .filter(|(_, i)| truth.binary_search(i).is_ok())
        .map(|(r, _)| 1.0 / ((r + 2) as f64).log2())
        .sum();
    let idcg: f64 = (0..k.min(truth.len())).map(|r| 1.0 / ((r + 2) as f64).log2()).sum();
    dcg / idcg
}

fn hits(top: &[usize], truth: &[usize], k: usize) -> usize {
    top.iter().take(k).filter(|i| truth.binary_search(i).is_ok()).count()
}

/// Mean recall@k and NDCG@k over users with a non-empty test set.
pub fn recall_ndcg_at_k(rankings: &[Vec<usize>], test: &Interactions, k: usize) -> Result<EvalReport> {
    if k == 0 {
        return Err(Error::invalid("k must be >= 1"));
    }
    let (mut recall, mut ndcg, mut users) = (0.0, 0.0, 0usize);
    for (u, top) in rankings.iter().enumerate() {
        let truth = test.user_items(u);
        if truth.is_empty() {
            continue;
        }
        recall += hits(top, truth, k) as f64 / truth.len() as f64;
        ndcg += ndcg_one(top, truth, k);
        users += 1;
    }
    let denom = users.max(1) as f64;
    Ok(EvalReport {
        k,
        recall: recall / denom,
        ndcg: ndcg / denom,
        per_group_recall: Vec::new(),
        n_evaluated_users: users,
    })
}

/// Recall restricted to each popularity group's test items.
pub fn groupwise_recall(
    rankings: &[Vec<usize>],
    test: &Interactions,
    grouping: &PopularityGrouping,
    k: usize,
) -> Vec<Option<f64>> {
    let g = grouping.groups();
    let mut sums = vec![0.0; g];
    let mut counts = vec![0usize; g];
    let mut truth_by_group: Vec<Vec<usize>> = vec![Vec::new(); g];
    for (u, top) in rankings.iter().enumerate() {
        truth_by_group.iter_mut().for_each(Vec::clear);
        for &i in test.user_items(u) {
            truth_by_group[grouping.group_of(i)].push(i);
        }
        for (grp, truth) in truth_by_group.iter().enumerate() {
            if truth.is_empty() {
                continue;
            }
            sums[grp] += hits(top, truth, k) as f64 / truth.len() as f64;
            counts[grp] += 1;
        }
    }
    sums.iter()
        .zip(&counts)
        .map(|(&s, &c)| (c > 0).then(|| s / c as f64))
        .collect()
}

pub fn evaluate(
    table: &EmbeddingTable,
    train: &Interactions,
    test: &Interactions,
    k: usize,
    grouping: Option<&PopularityGrouping>,
) -> Result<EvalReport> {
    let ranks = rankings(table, train, k)?;
    let mut report = recall_ndcg_at_k(&ranks, test, k)?;
    if let Some(grouping) = grouping {
        report.per_group_recall = groupwise_recall(&ranks, test, grouping, k);
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub tau: f64,
    pub recall: f64,
    pub ndcg: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    /// Index of the row with the highest recall (first on ties).
    pub best: usize,
}

impl SweepResult {
    pub fn best_row(&self) -> &SweepRow {
        &self.rows[self.best]
    }

    /// Recall divided by the sweep maximum.
    pub fn relative_recall(&self) -> Vec<f64> {
        let max = self.best_row().recall;
        self.rows.iter().map(|r| if max > 0.0 { r.recall / max } else { 0.0 }).collect()
    }

    /// `(max - min) / max` of recall over the grid.
    pub fn relative_spread(&self) -> f64 {
        let rel = self.relative_recall();
        1.0 - rel.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Default desk-scale grid `{0.05, 0.10, ..., 1.00}`.
pub fn default_tau_grid() -> Vec<f64> {
    (1..=20).map(|k| k as f64 * 0.05).collect()
}

/// Full grid `{0.02, 0.04, ..., 1.00}`.
pub fn fine_tau_grid() -> Vec<f64> {
    (1..=50).map(|k| k as f64 * 0.02).collect()
}

/// Trains one fixed-temperature model per grid point (same seed and
/// initialization) and reports the best-epoch metrics of each.
pub fn tau_sensitivity_sweep(split: &SplitPair, config: &TrainConfig, grid: &[f64]) -> Result<SweepResult> {
    if grid.is_empty() {
        return Err(Error::invalid("tau grid is empty"));
    }
    let run = |&tau: &f64| -> Result<SweepRow> {
        let cfg = TrainConfig {
            strategy: Strategy::FixedTau(tau),
            ..config.clone()
        };
        let report = train(split, &cfg)?
            .report
            .ok_or_else(|| Error::invalid("sweep runs need at least one epoch"))?;
        Ok(SweepRow {
            tau,
            recall: report.recall,
            ndcg: report.ndcg,
        })
    };
    let rows = pool()?.install(|| grid.par_iter().map(run).collect::<Result<Vec<_>>>())?;
    let best = rows
        .iter()
        .enumerate()
        .fold(0, |best, (idx, r)| if r.recall > rows[best].recall { idx } else { best });
    Ok(SweepResult { rows, best })
}
