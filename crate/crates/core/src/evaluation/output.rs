//! CSV tables and SVG plots of evaluation results.

use std::path::{Path, PathBuf};

use super::plot::{bar_chart, line_chart, Series};
use super::{CategoryReport, EvalError, HorizonReport, LeaderboardRow, MetricSet, CATEGORY_PAIRS, METRIC_NAMES};

fn cell(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| x.to_string())
}

fn metric_fields(m: Option<&MetricSet>) -> Vec<String> {
    match m {
        Some(m) => {
            let mut out: Vec<String> = m.values().iter().map(|v| cell(*v)).collect();
            out.push(m.mape_excluded.to_string());
            out
        }
        None => vec![String::new(); 7],
    }
}

fn metric_header() -> impl Iterator<Item = &'static str> {
    METRIC_NAMES.into_iter().chain(["mape_excluded"])
}

/// `model,seeds,<metric>_mean,<metric>_std,...`. Undefined values are blank.
pub fn write_leaderboard_csv(path: &Path, rows: &[LeaderboardRow]) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["model".to_string(), "seeds".to_string()];
    for name in METRIC_NAMES {
        header.push(format!("{name}_mean"));
        header.push(format!("{name}_std"));
    }
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![r.model.clone(), r.seeds.to_string()];
        for k in 0..6 {
            rec.push(cell(r.mean[k]));
            rec.push(cell(r.std[k]));
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// One row per run: `model,seed,n,<metrics>,mape_excluded`.
pub fn write_runs_csv<'a>(
    path: &Path,
    runs: impl IntoIterator<Item = (&'a str, u64, &'a MetricSet)>,
) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_path(path)?;
    let header: Vec<&str> = ["model", "seed", "n"].into_iter().chain(metric_header()).collect();
    w.write_record(&header)?;
    for (model, seed, m) in runs {
        let mut rec = vec![model.to_string(), seed.to_string(), m.n.to_string()];
        rec.extend(metric_fields(Some(m)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// `model,d,n,<metrics>,mape_excluded`; empty cells have blank metrics.
pub fn write_horizon_csv(path: &Path, report: &HorizonReport) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_path(path)?;
    let header: Vec<&str> = ["model", "d", "n"].into_iter().chain(metric_header()).collect();
    w.write_record(&header)?;
    for c in &report.cells {
        let mut rec = vec![c.model.clone(), c.d.to_string(), c.n.to_string()];
        rec.extend(metric_fields(c.metrics.as_ref()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// `model,pair,tag,n,<metrics>,mape_excluded`.
pub fn write_categories_csv(path: &Path, report: &CategoryReport) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_path(path)?;
    let header: Vec<&str> = ["model", "pair", "tag", "n"].into_iter().chain(metric_header()).collect();
    w.write_record(&header)?;
    for c in &report.cells {
        let mut rec = vec![c.model.clone(), c.pair.clone(), c.tag.clone(), c.n.to_string()];
        rec.extend(metric_fields(c.metrics.as_ref()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn models_in<'a>(names: impl Iterator<Item = &'a str>) -> Vec<&'a str> {
    let mut out: Vec<&str> = Vec::new();
    for n in names {
        if !out.contains(&n) {
            out.push(n);
        }
    }
    out
}

/// `horizon_mae.svg` and `horizon_r2.svg` in `dir`.
pub fn write_horizon_plots(dir: &Path, report: &HorizonReport) -> Result<Vec<PathBuf>, EvalError> {
    let models = models_in(report.cells.iter().map(|c| c.model.as_str()));
    let mut paths = Vec::new();
    for (metric, label, get) in [
        ("mae", "MAE (PLF points)", (|m: &MetricSet| Some(m.mae)) as fn(&MetricSet) -> Option<f64>),
        ("r2", "R²", |m: &MetricSet| m.r2),
    ] {
        let series: Vec<Series> = models
            .iter()
            .map(|&model| Series {
                name: model.to_string(),
                points: report.model(model).map(|c| (c.d as f64, c.metrics.as_ref().and_then(get))).collect(),
            })
            .collect();
        let svg = line_chart(&format!("{} by days before departure", metric.to_uppercase()), "days before departure", label, &series);
        let path = dir.join(format!("horizon_{metric}.svg"));
        std::fs::write(&path, svg)?;
        paths.push(path);
    }
    Ok(paths)
}

/// `categories_<pair>_<metric>.svg` for MAE and MAPE of every pair.
pub fn write_category_plots(dir: &Path, report: &CategoryReport) -> Result<Vec<PathBuf>, EvalError> {
    let models = models_in(report.cells.iter().map(|c| c.model.as_str()));
    let mut paths = Vec::new();
    for pair in CATEGORY_PAIRS {
        let mut tags: Vec<String> = Vec::new();
        for c in report.cells.iter().filter(|c| c.pair == pair) {
            if !tags.contains(&c.tag) {
                tags.push(c.tag.clone());
            }
        }
        for (metric, get) in [
            ("mae", (|m: &MetricSet| Some(m.mae)) as fn(&MetricSet) -> Option<f64>),
            ("mape", |m: &MetricSet| m.mape),
        ] {
            let series: Vec<(String, Vec<Option<f64>>)> = models
                .iter()
                .map(|&model| {
                    let values = tags
                        .iter()
                        .map(|t| report.cell(model, pair, t).and_then(|c| c.metrics.as_ref()).and_then(get))
                        .collect();
                    (model.to_string(), values)
                })
                .collect();
            let svg = bar_chart(&format!("{} by {pair}", metric.to_uppercase()), &metric.to_uppercase(), &tags, &series);
            let path = dir.join(format!("categories_{pair}_{metric}.svg"));
            std::fs::write(&path, svg)?;
            paths.push(path);
        }
    }
    Ok(paths)
}
