//! Multi-stage navigation metrics.
//!
//! Per-task subtask counts `N_j` may differ; every aggregate averages per-task
//! terms over tasks. The predecessor of a task's first subtask counts as
//! successful, so a fully successful task scores exactly 1 on CSR and CGT.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::world::SUCCESS_RADIUS;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("no episodes to evaluate")]
    Empty,
    #[error("episode {0:?} has no subtasks")]
    NoSubtasks(String),
    #[error("episode {task:?} subtask {index}: ground-truth length {gt} must be positive")]
    NonPositiveGt { task: String, index: usize, gt: f64 },
    #[error("navigation error {0} must be nonnegative")]
    NegativeNe(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubtaskRecord {
    pub success: bool,
    /// Geodesic distance to the target when the subtask ended, meters.
    pub ne: f64,
    /// Ground-truth path length at subtask start, meters.
    pub gt: f64,
    pub steps: usize,
    pub path_taken: f64,
    /// Success predicate held at some step of the subtask.
    pub oracle_hit: bool,
    /// Budget ran out before the policy stopped.
    pub truncated: bool,
}

impl SubtaskRecord {
    /// A minimal record; used by tests and synthetic result sets.
    pub fn outcome(success: bool, gt: f64) -> Self {
        Self {
            success,
            ne: if success { 0.0 } else { 2.0 * SUCCESS_RADIUS },
            gt,
            steps: 0,
            path_taken: gt,
            oracle_hit: success,
            truncated: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub task_id: String,
    /// Navigation subtasks only, in task order.
    pub records: Vec<SubtaskRecord>,
}

impl EpisodeResult {
    pub fn n(&self) -> usize {
        self.records.len()
    }

    pub fn successes(&self) -> impl Iterator<Item = bool> + '_ {
        self.records.iter().map(|r| r.success)
    }

    pub fn shortest(&self) -> f64 {
        self.records.iter().map(|r| r.gt).sum()
    }

    pub fn taken(&self) -> f64 {
        self.records.iter().map(|r| r.path_taken).sum()
    }
}

fn check(results: &[EpisodeResult]) -> Result<(), MetricsError> {
    if results.is_empty() {
        return Err(MetricsError::Empty);
    }
    for r in results {
        if r.records.is_empty() {
            return Err(MetricsError::NoSubtasks(r.task_id.clone()));
        }
    }
    Ok(())
}

fn mean_over_tasks(results: &[EpisodeResult], term: impl Fn(&EpisodeResult) -> f64) -> Result<f64, MetricsError> {
    check(results)?;
    Ok(results.iter().map(term).sum::<f64>() / results.len() as f64)
}

fn b(x: bool) -> f64 {
    if x {
        1.0
    } else {
        0.0
    }
}

/// Conditional success terms `s_i (1 + (N-1) s_{i-1})` with `s_{-1} = 1`.
fn conditional_terms(ep: &EpisodeResult) -> impl Iterator<Item = f64> + '_ {
    let n = ep.n() as f64;
    let s: Vec<bool> = ep.successes().collect();
    (0..s.len()).map(move |i| {
        let prev = if i == 0 { true } else { s[i - 1] };
        b(s[i]) * (1.0 + (n - 1.0) * b(prev))
    })
}

/// Independent success rate: mean per-task fraction of successful subtasks.
pub fn isr(results: &[EpisodeResult]) -> Result<f64, MetricsError> {
    mean_over_tasks(results, |ep| ep.successes().map(b).sum::<f64>() / ep.n() as f64)
}

/// Conditional success rate.
pub fn csr(results: &[EpisodeResult]) -> Result<f64, MetricsError> {
    mean_over_tasks(results, csr_term)
}

pub fn csr_term(ep: &EpisodeResult) -> f64 {
    let n = ep.n() as f64;
    conditional_terms(ep).sum::<f64>() / (n * n)
}

/// Conditional success weighted by each subtask's share of the task's
/// ground-truth path length.
pub fn cgt(results: &[EpisodeResult]) -> Result<f64, MetricsError> {
    check(results)?;
    for ep in results {
        for (index, r) in ep.records.iter().enumerate() {
            if !(r.gt > 0.0) {
                return Err(MetricsError::NonPositiveGt {
                    task: ep.task_id.clone(),
                    index,
                    gt: r.gt,
                });
            }
        }
    }
    mean_over_tasks(results, |ep| {
        let n = ep.n() as f64;
        let p = ep.shortest();
        conditional_terms(ep)
            .zip(&ep.records)
            .map(|(t, r)| (r.gt / p) * t / n)
            .sum()
    })
}

/// Target approach rate for one subtask.
pub fn tar(ne: f64, gt: f64, d_s: f64) -> Result<f64, MetricsError> {
    if !(ne >= 0.0) {
        return Err(MetricsError::NegativeNe(ne));
    }
    if !(gt > 0.0) {
        return Err(MetricsError::NonPositiveGt {
            task: String::new(),
            index: 0,
            gt,
        });
    }
    Ok(1.0 - (ne - d_s).max(0.0) / ne.max(gt))
}

/// Full-task success: every subtask succeeded.
pub fn task_sr(results: &[EpisodeResult]) -> Result<f64, MetricsError> {
    mean_over_tasks(results, |ep| b(ep.successes().all(|s| s)))
}

/// Oracle success: every subtask's predicate held within its own window.
pub fn osr(results: &[EpisodeResult]) -> Result<f64, MetricsError> {
    mean_over_tasks(results, |ep| b(ep.records.iter().all(|r| r.oracle_hit)))
}

/// Success weighted by path length, with the shortest path being the sum of
/// subtask ground-truth lengths.
pub fn spl(results: &[EpisodeResult]) -> Result<f64, MetricsError> {
    mean_over_tasks(results, |ep| {
        let shortest = ep.shortest();
        b(ep.successes().all(|s| s)) * shortest / ep.taken().max(shortest)
    })
}

/// How truncated subtasks enter the navigation error average.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NeMode {
    /// Truncated subtasks count with the error at their final pose.
    #[default]
    ForcedStop,
    /// Only subtasks the policy stopped itself count.
    Literal,
}

/// Mean navigation error over subtasks; `None` if nothing qualifies.
pub fn mean_ne(results: &[EpisodeResult], mode: NeMode) -> Result<Option<f64>, MetricsError> {
    check(results)?;
    let values: Vec<f64> = results
        .iter()
        .flat_map(|ep| ep.records.iter())
        .filter(|r| mode == NeMode::ForcedStop || !r.truncated)
        .map(|r| r.ne)
        .collect();
    if values.is_empty() {
        return Ok(None);
    }
    Ok(Some(values.iter().sum::<f64>() / values.len() as f64))
}

/// Mean per-subtask target approach rate.
pub fn mean_tar(results: &[EpisodeResult]) -> Result<f64, MetricsError> {
    check(results)?;
    let mut total = 0.0;
    let mut count = 0usize;
    for ep in results {
        for r in &ep.records {
            total += tar(r.ne, r.gt, SUCCESS_RADIUS)?;
            count += 1;
        }
    }
    Ok(total / count as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub episodes: usize,
    pub subtasks: usize,
    pub sr: f64,
    pub osr: f64,
    pub spl: f64,
    pub ne: Option<f64>,
    pub isr: f64,
    pub csr: f64,
    pub cgt: f64,
    pub tar: f64,
}

impl MetricReport {
    /// Evaluates every metric. Episodes are sorted by task id first so the
    /// result does not depend on input order.
    pub fn evaluate(results: &[EpisodeResult], ne_mode: NeMode) -> Result<Self, MetricsError> {
        let mut sorted = results.to_vec();
        sorted.sort_by(|a, b| a.task_id.cmp(&b.task_id));
        let results = &sorted[..];
        Ok(Self {
            episodes: results.len(),
            subtasks: results.iter().map(EpisodeResult::n).sum(),
            sr: task_sr(results)?,
            osr: osr(results)?,
            spl: spl(results)?,
            ne: mean_ne(results, ne_mode)?,
            isr: isr(results)?,
            csr: csr(results)?,
            cgt: cgt(results)?,
            tar: mean_tar(results)?,
        })
    }

    /// Fixed-order plain-text table.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let ne = self.ne.map_or_else(|| "n/a".to_string(), |v| format!("{v:.4}"));
        let rows: [(&str, String); 10] = [
            ("episodes", self.episodes.to_string()),
            ("subtasks", self.subtasks.to_string()),
            ("SR", format!("{:.4}", self.sr)),
            ("OSR", format!("{:.4}", self.osr)),
            ("SPL", format!("{:.4}", self.spl)),
            ("NE", ne),
            ("ISR", format!("{:.4}", self.isr)),
            ("CSR", format!("{:.4}", self.csr)),
            ("CGT", format!("{:.4}", self.cgt)),
            ("TAR", format!("{:.4}", self.tar)),
        ];
        let _ = writeln!(s, "{:<10} {:>10}", "metric", "value");
        for (k, v) in rows {
            let _ = writeln!(s, "{k:<10} {v:>10}");
        }
        s
    }
}
