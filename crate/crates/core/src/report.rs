//! CSV and plain-text artifacts written into run directories.

use std::fmt::Display;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use crate::error::Result;
use crate::evaluation::{EvalReport, SweepResult};
use crate::loss::GradSweepRow;
use crate::oracles::OracleReport;
use crate::temperature::TemperatureState;
use crate::trainer::{EpochStats, HistoryRow};

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |v| v.to_string())
}

/// Writes `header` then one line per row.
pub fn write_csv<R>(path: impl AsRef<Path>, header: &str, rows: impl IntoIterator<Item = R>) -> Result<()>
where
    R: Display,
{
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "{header}")?;
    for r in rows {
        writeln!(out, "{r}")?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_history(path: impl AsRef<Path>, history: &[HistoryRow]) -> Result<()> {
    write_csv(
        path,
        "epoch,mean_loss,tau0,recall@20,ndcg@20,seconds",
        history.iter().map(|h| {
            format!(
                "{},{},{},{},{},{}",
                h.epoch,
                h.mean_loss,
                h.tau0,
                opt(h.recall),
                opt(h.ndcg),
                h.seconds
            )
        }),
    )
}

pub fn write_temperature_log(path: impl AsRef<Path>, epochs: &[EpochStats]) -> Result<()> {
    write_csv(
        path,
        "epoch,tau0,mu_plus,mu,sigma2_plus,sigma2,m_u,min_tau_u,mean_tau_u,max_tau_u",
        epochs.iter().map(|e| {
            let c = e.cosine.unwrap_or_default();
            let nan_blank = |v: f64| if e.cosine.is_none() || v.is_nan() { String::new() } else { v.to_string() };
            format!(
                "{},{},{},{},{},{},{},{},{},{}",
                e.epoch,
                e.tau0,
                nan_blank(c.mu_plus),
                nan_blank(c.mu),
                nan_blank(c.sigma2_plus),
                nan_blank(c.sigma2),
                opt(e.m_u),
                e.tau_min,
                e.tau_mean,
                e.tau_max
            )
        }),
    )
}

/// `user,group,tau_u,loss_u`; `groups` may be empty when no grouping applies.
pub fn write_user_taus(path: impl AsRef<Path>, state: &TemperatureState, groups: &[usize]) -> Result<()> {
    write_csv(
        path,
        "user,group,tau_u,loss_u",
        state.tau_user.iter().enumerate().map(|(u, tau)| {
            let g = groups.get(u).map_or_else(String::new, |g| g.to_string());
            format!("{u},{g},{tau},{}", opt(state.user_loss[u]))
        }),
    )
}

pub fn write_grad_sweep(path: impl AsRef<Path>, rows: &[GradSweepRow]) -> Result<()> {
    write_csv(
        path,
        "tau,mean_expected_grad_magnitude",
        rows.iter().map(|r| format!("{},{}", r.tau, r.mean_expected_grad_magnitude)),
    )
}

pub fn write_metrics(path: impl AsRef<Path>, report: &EvalReport) -> Result<()> {
    let k = report.k;
    write_csv(
        path,
        "metric,value",
        [
            format!("recall@{k},{}", report.recall),
            format!("ndcg@{k},{}", report.ndcg),
            format!("users,{}", report.n_evaluated_users),
        ],
    )
}

pub fn write_group_recall(path: impl AsRef<Path>, report: &EvalReport) -> Result<()> {
    write_csv(
        path,
        "group,recall",
        report
            .per_group_recall
            .iter()
            .enumerate()
            .map(|(g, r)| format!("{g},{}", r.map_or_else(|| "NaN".to_string(), |v| v.to_string()))),
    )
}

pub fn write_oracles(path: impl AsRef<Path>, reports: &[OracleReport]) -> Result<()> {
    write_csv(
        path,
        "oracle,max_abs_err,max_rel_err,cases,pass",
        reports
            .iter()
            .map(|r| format!("{},{},{},{},{}", r.name, r.max_abs_err, r.max_rel_err, r.cases, r.pass)),
    )
}

pub fn write_sweep(path: impl AsRef<Path>, sweep: &SweepResult) -> Result<()> {
    let rel = sweep.relative_recall();
    write_csv(
        path,
        "tau,recall@20,ndcg@20,relative_recall",
        sweep
            .rows
            .iter()
            .zip(rel)
            .map(|(r, rel)| format!("{},{},{},{}", r.tau, r.recall, r.ndcg, rel)),
    )
}

/// Flat `{ "key": value, ... }` summary; values are written verbatim when they
/// parse as numbers or booleans, quoted otherwise.
pub fn write_summary(path: impl AsRef<Path>, entries: &[(String, String)]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "{{")?;
    for (idx, (k, v)) in entries.iter().enumerate() {
        let bare = v.parse::<f64>().is_ok_and(f64::is_finite) || v == "true" || v == "false";
        let value = if bare { v.clone() } else { format!("{v:?}") };
        let comma = if idx + 1 < entries.len() { "," } else { "" };
        writeln!(out, "  {k:?}: {value}{comma}")?;
    }
    writeln!(out, "}}")?;
    out.flush()?;
    Ok(())
}

/// Creates `<root>/<prefix>-<unix seconds>[-k]`, never reusing an existing directory.
pub fn create_run_dir(root: impl AsRef<Path>, prefix: &str) -> Result<PathBuf> {
    let root = root.as_ref();
    fs::create_dir_all(root)?;
    let stamp = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let mut candidate = root.join(format!("{prefix}-{stamp}"));
    let mut k = 1;
    while candidate.exists() {
        candidate = root.join(format!("{prefix}-{stamp}-{k}"));
        k += 1;
    }
    fs::create_dir(&candidate)?;
    Ok(candidate)
}
