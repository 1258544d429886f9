use std::collections::{HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::tasks::TaskRecord;
use crate::error::EvalError;
use crate::geometry::{iou, BBox};

pub const DEFAULT_THRESHOLDS: [f64; 2] = [0.5, 0.7];

/// One line of a grounding run's output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub task_id: String,
    pub bbox: Option<BBox>,
    /// A provenance name, or `error` for a task that failed outright.
    pub provenance: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iou: Option<f64>,
    pub trace_digest: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub fn parse_results(text: &str, path: &Path) -> Result<Vec<ResultRecord>, EvalError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| EvalError::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn load_results(path: &Path) -> Result<Vec<ResultRecord>, EvalError> {
    let text = std::fs::read_to_string(path).map_err(|source| EvalError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_results(&text, path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskScore {
    pub task_id: String,
    pub iou: f64,
    pub provenance: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccAt {
    pub threshold: f64,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n_tasks: usize,
    /// Tasks that had a predicted box to score.
    pub n_scored: usize,
    pub miou: f64,
    pub acc_at: Vec<AccAt>,
    pub per_task: Vec<TaskScore>,
}

impl MetricsReport {
    pub fn acc(&self, threshold: f64) -> Option<f64> {
        self.acc_at.iter().find(|a| a.threshold == threshold).map(|a| a.fraction)
    }

    pub fn summary_line(&self) -> String {
        let mut s = format!("miou {:.4}", self.miou);
        for a in &self.acc_at {
            s.push_str(&format!(" acc{} {:.4}", threshold_label(a.threshold), a.fraction));
        }
        s
    }
}

/// `0.5` -> `50`, `0.75` -> `75`.
pub fn threshold_label(t: f64) -> String {
    let pct = format!("{:.4}", t * 100.0);
    pct.trim_end_matches('0').trim_end_matches('.').to_string()
}

/// Sum in a fixed pairwise tree order so the result does not depend on how
/// work was split.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        n => pairwise_sum(&xs[..n / 2]) + pairwise_sum(&xs[n / 2..]),
    }
}

/// One prediction/truth pair with its bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredPair {
    pub task_id: String,
    pub predicted: Option<BBox>,
    pub truth: BBox,
    pub provenance: Option<String>,
}

pub fn validate_thresholds(thresholds: &[f64]) -> Result<(), EvalError> {
    match thresholds.iter().find(|t| !(**t > 0.0 && **t < 1.0)) {
        Some(t) => Err(EvalError::Threshold(*t)),
        None => Ok(()),
    }
}

pub fn score_pairs(pairs: &[ScoredPair], thresholds: &[f64]) -> Result<MetricsReport, EvalError> {
    validate_thresholds(thresholds)?;
    if pairs.is_empty() {
        return Err(EvalError::NoPairs);
    }
    let per_task: Vec<TaskScore> = pairs
        .iter()
        .map(|p| TaskScore {
            task_id: p.task_id.clone(),
            iou: p.predicted.map_or(0.0, |b| iou(&b, &p.truth)),
            provenance: p.provenance.clone(),
        })
        .collect();
    let ious: Vec<f64> = per_task.iter().map(|t| t.iou).collect();
    let n = pairs.len() as f64;
    let acc_at = thresholds
        .iter()
        .map(|&t| AccAt {
            threshold: t,
            fraction: ious.iter().filter(|&&v| v > t).count() as f64 / n,
        })
        .collect();
    Ok(MetricsReport {
        n_tasks: pairs.len(),
        n_scored: pairs.iter().filter(|p| p.predicted.is_some()).count(),
        miou: pairwise_sum(&ious) / n,
        acc_at,
        per_task,
    })
}

/// mIoU and Acc@t over `(prediction, truth)` pairs; a missing prediction scores 0
/// and Acc counts only IoU strictly above each threshold.
pub fn compute_metrics(pairs: &[(Option<BBox>, BBox)], thresholds: &[f64]) -> Result<MetricsReport, EvalError> {
    let pairs: Vec<ScoredPair> = pairs
        .iter()
        .enumerate()
        .map(|(i, (p, t))| ScoredPair {
            task_id: i.to_string(),
            predicted: *p,
            truth: *t,
            provenance: None,
        })
        .collect();
    score_pairs(&pairs, thresholds)
}

/// Scores results against every task. Tasks with no result line count as
/// "no box"; a result naming an unknown task is an error.
pub fn evaluate_results(
    results: &[ResultRecord],
    tasks: &[TaskRecord],
    thresholds: &[f64],
) -> Result<MetricsReport, EvalError> {
    let known: HashSet<&str> = tasks.iter().map(|t| t.task_id.as_str()).collect();
    let mut by_id: HashMap<&str, &ResultRecord> = HashMap::new();
    for r in results {
        if !known.contains(r.task_id.as_str()) {
            return Err(EvalError::UnknownTask(r.task_id.clone()));
        }
        by_id.insert(r.task_id.as_str(), r);
    }
    let pairs: Vec<ScoredPair> = tasks
        .iter()
        .map(|t| {
            let r = by_id.get(t.task_id.as_str());
            ScoredPair {
                task_id: t.task_id.clone(),
                predicted: r.and_then(|r| r.bbox),
                truth: t.truth_box,
                provenance: r.map(|r| r.provenance.clone()),
            }
        })
        .collect();
    score_pairs(&pairs, thresholds)
}
