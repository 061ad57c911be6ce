use serde::{Deserialize, Serialize};

use super::MetricSet;

/// Mean and population standard deviation of each metric across seeds.
/// Metric order follows [`super::METRIC_NAMES`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderboardRow {
    pub model: String,
    pub seeds: usize,
    pub mean: [Option<f64>; 6],
    pub std: [Option<f64>; 6],
}

/// One row per model, in order of first appearance. A metric that is
/// undefined for some seed is aggregated over the remaining seeds.
pub fn leaderboard<'a>(runs: impl IntoIterator<Item = (&'a str, &'a MetricSet)>) -> Vec<LeaderboardRow> {
    let mut groups: Vec<(&str, Vec<&MetricSet>)> = Vec::new();
    for (model, m) in runs {
        match groups.iter_mut().find(|(g, _)| *g == model) {
            Some((_, v)) => v.push(m),
            None => groups.push((model, vec![m])),
        }
    }
    groups
        .into_iter()
        .map(|(model, sets)| {
            let mut mean = [None; 6];
            let mut std = [None; 6];
            for k in 0..6 {
                let xs: Vec<f64> = sets.iter().filter_map(|m| m.values()[k]).collect();
                if xs.is_empty() {
                    continue;
                }
                let n = xs.len() as f64;
                let mu = xs.iter().sum::<f64>() / n;
                mean[k] = Some(mu);
                std[k] = Some((xs.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / n).sqrt());
            }
            LeaderboardRow { model: model.to_string(), seeds: sets.len(), mean, std }
        })
        .collect()
}
