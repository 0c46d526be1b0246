//! Accuracy records and their CSV form.
//!
//! One row per (seed, method, scenario, checkpoint, evaluated task). The
//! headline statistic is the end-average: the mean over per-task
//! accuracies at the final checkpoint, reported as mean ± std across
//! seeds.

use crate::scenarios::Scenario;

pub const CSV_HEADER: &str = "seed,method,scenario,checkpoint,task,accuracy";

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub seed: u64,
    pub method: String,
    pub scenario: Scenario,
    /// 1-based index of the last completed task.
    pub checkpoint: usize,
    /// 1-based index of the evaluated task, <= checkpoint.
    pub task: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, Default)]
pub struct MetricsTable {
    pub rows: Vec<MetricsRow>,
    /// Seeds whose runs aborted, with the error text.
    pub failures: Vec<(u64, String)>,
}

impl MetricsTable {
    pub fn from_rows(rows: Vec<MetricsRow>) -> MetricsTable {
        MetricsTable {
            rows,
            failures: Vec::new(),
        }
    }

    pub fn merge(&mut self, other: MetricsTable) {
        self.rows.extend(other.rows);
        self.failures.extend(other.failures);
    }

    pub fn accuracy(&self, seed: u64, checkpoint: usize, task: usize) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.seed == seed && r.checkpoint == checkpoint && r.task == task)
            .map(|r| r.accuracy)
    }

    pub fn seeds(&self) -> Vec<u64> {
        let mut seeds: Vec<u64> = Vec::new();
        for r in &self.rows {
            if !seeds.contains(&r.seed) {
                seeds.push(r.seed);
            }
        }
        seeds
    }

    pub fn final_checkpoint(&self) -> usize {
        self.rows.iter().map(|r| r.checkpoint).max().unwrap_or(0)
    }

    /// Mean over per-task accuracies at the final checkpoint for one seed.
    pub fn end_average(&self, seed: u64) -> Option<f64> {
        let last = self.final_checkpoint();
        let accs: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.seed == seed && r.checkpoint == last)
            .map(|r| r.accuracy)
            .collect();
        if accs.is_empty() {
            None
        } else {
            Some(accs.iter().sum::<f64>() / accs.len() as f64)
        }
    }

    /// (mean, sample std) of the end-average across seeds.
    pub fn end_average_stats(&self) -> Option<(f64, f64)> {
        let per_seed: Vec<f64> = self
            .seeds()
            .into_iter()
            .filter_map(|s| self.end_average(s))
            .collect();
        if per_seed.is_empty() {
            return None;
        }
        let n = per_seed.len() as f64;
        let mean = per_seed.iter().sum::<f64>() / n;
        let std = if per_seed.len() > 1 {
            (per_seed
                .iter()
                .map(|v| (v - mean) * (v - mean))
                .sum::<f64>()
                / (n - 1.0))
                .sqrt()
        } else {
            0.0
        };
        Some((mean, std))
    }

    /// Accuracy of `task` at the final checkpoint, averaged across seeds.
    pub fn final_task_accuracy_mean(&self, task: usize) -> Option<f64> {
        let last = self.final_checkpoint();
        let accs: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.checkpoint == last && r.task == task)
            .map(|r| r.accuracy)
            .collect();
        if accs.is_empty() {
            None
        } else {
            Some(accs.iter().sum::<f64>() / accs.len() as f64)
        }
    }

    /// Accuracy of `task` at checkpoint `task` (right after it trained),
    /// averaged across seeds.
    pub fn post_task_accuracy_mean(&self, task: usize) -> Option<f64> {
        let accs: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.checkpoint == task && r.task == task)
            .map(|r| r.accuracy)
            .collect();
        if accs.is_empty() {
            None
        } else {
            Some(accs.iter().sum::<f64>() / accs.len() as f64)
        }
    }

    /// Stable CSV rendering: fixed header, rows in stored order.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{:.6}\n",
                r.seed,
                r.method,
                r.scenario.name(),
                r.checkpoint,
                r.task,
                r.accuracy
            ));
        }
        out
    }
}
