//! Aggregation of per-item, per-seed metric scores into a report.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// Scores for one evaluation run (one seed): item id → metric → score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunScores {
    pub seed: u64,
    pub per_item: BTreeMap<String, BTreeMap<String, f64>>,
}

impl RunScores {
    pub fn new(seed: u64) -> Self {
        RunScores {
            seed,
            per_item: BTreeMap::new(),
        }
    }

    pub fn record(&mut self, item_id: &str, metric: &str, score: f64) {
        self.per_item
            .entry(item_id.to_string())
            .or_default()
            .insert(metric.to_string(), score);
    }

    /// Mean of one metric over this run's items.
    pub fn metric_mean(&self, metric: &str) -> Option<f64> {
        let scores: Vec<f64> = self
            .per_item
            .values()
            .filter_map(|m| m.get(metric).copied())
            .collect();
        if scores.is_empty() {
            None
        } else {
            Some(scores.iter().sum::<f64>() / scores.len() as f64)
        }
    }
}

/// Mean ± standard deviation of run-level means across seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricAggregate {
    pub mean: f64,
    pub std_dev: f64,
    pub runs: usize,
}

/// Per-item scores plus cross-seed aggregates, recomputable from the raw
/// scores it carries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub runs: Vec<RunScores>,
    pub aggregates: BTreeMap<String, MetricAggregate>,
    /// Reserved: perplexity needs token log-probabilities the providers do
    /// not guarantee, so it is never populated.
    pub ppl: Option<MetricAggregate>,
}

impl MetricReport {
    pub fn from_runs(runs: Vec<RunScores>) -> Self {
        let mut metric_names: Vec<String> = runs
            .iter()
            .flat_map(|r| r.per_item.values())
            .flat_map(|m| m.keys().cloned())
            .collect();
        metric_names.sort();
        metric_names.dedup();

        let mut aggregates = BTreeMap::new();
        for metric in metric_names {
            let means: Vec<f64> = runs.iter().filter_map(|r| r.metric_mean(&metric)).collect();
            if means.is_empty() {
                continue;
            }
            let mean = means.iter().sum::<f64>() / means.len() as f64;
            let std_dev = if means.len() > 1 {
                let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>()
                    / (means.len() - 1) as f64;
                var.sqrt()
            } else {
                0.0
            };
            aggregates.insert(
                metric,
                MetricAggregate {
                    mean,
                    std_dev,
                    runs: means.len(),
                },
            );
        }
        MetricReport {
            runs,
            aggregates,
            ppl: None,
        }
    }

    /// Plain-text table, one metric per row.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("{:<12} {:>10} {:>10} {:>6}\n", "metric", "mean", "std", "runs"));
        for (name, agg) in &self.aggregates {
            out.push_str(&format!(
                "{:<12} {:>10.4} {:>10.4} {:>6}\n",
                name, agg.mean, agg.std_dev, agg.runs
            ));
        }
        out.push_str("ppl          unavailable (needs token log-probabilities)\n");
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aggregates_are_recomputable_from_per_item_scores() {
        let mut r1 = RunScores::new(1);
        r1.record("q1", "em", 1.0);
        r1.record("q2", "em", 0.0);
        r1.record("q1", "pcr", 1.0);
        r1.record("q2", "pcr", 1.0);
        let mut r2 = RunScores::new(2);
        r2.record("q1", "em", 0.0);
        r2.record("q2", "em", 0.0);
        r2.record("q1", "pcr", 1.0);
        r2.record("q2", "pcr", 0.0);

        let report = MetricReport::from_runs(vec![r1.clone(), r2.clone()]);

        // Direct recomputation.
        let run_means = [0.5, 0.0];
        let mean: f64 = run_means.iter().sum::<f64>() / 2.0;
        let var = run_means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / 1.0;
        let em = &report.aggregates["em"];
        assert!((em.mean - mean).abs() < 1e-12);
        assert!((em.std_dev - var.sqrt()).abs() < 1e-12);
        assert_eq!(em.runs, 2);

        assert!(report.ppl.is_none());
        assert!(report.render_table().contains("unavailable"));
    }

    #[test]
    fn single_run_has_zero_std() {
        let mut r = RunScores::new(7);
        r.record("q1", "em", 1.0);
        let report = MetricReport::from_runs(vec![r]);
        assert_eq!(report.aggregates["em"].std_dev, 0.0);
    }
}
