use chrono::{Days, NaiveDate};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::featsel::ForestConfig;
use crate::features::{build_feature_rows, FeatureConfig};
use crate::ingest::{generate_synthetic, GeneratorConfig, Reach, RouteMeta};
use crate::neural::{Tensor, Variant};
use crate::sequences::{assemble_samples, chronological_split, FeatureSet, SequenceSample, WindowConfig, DEFAULT_RATIOS};

/// Straightforward re-derivation of the six metrics, one loop each.
struct Oracle {
    mae: f64,
    mape: Option<f64>,
    excluded: usize,
    mse: f64,
    rmse: f64,
    mase: Option<f64>,
    r2: Option<f64>,
}

fn oracle(pred: &[f64], actual: &[f64], naive: &[f64]) -> Oracle {
    let n = actual.len() as f64;
    let mut abs_err = 0.0;
    let mut sq_err = 0.0;
    let mut naive_err = 0.0;
    for i in 0..actual.len() {
        abs_err += (actual[i] - pred[i]).abs();
        sq_err += (actual[i] - pred[i]).powi(2);
        naive_err += (actual[i] - naive[i]).abs();
    }
    let mut pct = Vec::new();
    for i in 0..actual.len() {
        if actual[i].abs() > 1e-6 {
            pct.push((actual[i] - pred[i]).abs() / actual[i].abs());
        }
    }
    let mean_actual = actual.iter().sum::<f64>() / n;
    let mut sst = 0.0;
    for a in actual {
        sst += (a - mean_actual).powi(2);
    }
    Oracle {
        mae: abs_err / n,
        mape: if pct.is_empty() { None } else { Some(pct.iter().sum::<f64>() / pct.len() as f64) },
        excluded: actual.len() - pct.len(),
        mse: sq_err / n,
        rmse: (sq_err / n).sqrt(),
        mase: if naive_err == 0.0 { None } else { Some(abs_err / naive_err) },
        r2: if sst == 0.0 { None } else { Some(1.0 - sq_err / sst) },
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * b.abs().max(1.0)
}

fn close_opt(a: Option<f64>, b: Option<f64>) -> bool {
    match (a, b) {
        (Some(x), Some(y)) => close(x, y),
        (None, None) => true,
        _ => false,
    }
}

#[test]
fn metrics_match_independent_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for case in 0..1000 {
        let n = 100;
        let actual: Vec<f64> = (0..n)
            .map(|_| if rng.random::<f64>() < 0.05 { 0.0 } else { rng.random_range(-20.0..120.0) })
            .collect();
        let pred: Vec<f64> = actual.iter().map(|a| a + rng.random_range(-10.0..10.0)).collect();
        let naive: Vec<f64> = actual.iter().map(|a| a + rng.random_range(-15.0..15.0)).collect();
        let got = compute_metrics(&pred, &actual, &naive).unwrap();
        let want = oracle(&pred, &actual, &naive);
        assert!(close(got.mae, want.mae), "case {case} mae");
        assert!(close_opt(got.mape, want.mape), "case {case} mape");
        assert_eq!(got.mape_excluded, want.excluded);
        assert!(close(got.mse, want.mse), "case {case} mse");
        assert!(close(got.rmse, want.rmse), "case {case} rmse");
        assert!(close_opt(got.mase, want.mase), "case {case} mase");
        assert!(close_opt(got.r2, want.r2), "case {case} r2");
        assert_eq!(got.n, n);
    }
}

#[test]
fn perfect_forecast() {
    let a = [50.0, 70.0, 81.5];
    let m = compute_metrics(&a, &a, &[40.0, 60.0, 80.0]).unwrap();
    assert_eq!((m.mae, m.mape, m.mse, m.rmse, m.r2), (0.0, Some(0.0), 0.0, 0.0, Some(1.0)));
    assert_eq!(m.mase, Some(0.0));
}

#[test]
fn naive_forecast_has_unit_mase() {
    let a = [50.0, 70.0, 81.5, 12.0];
    let naive = [45.0, 71.0, 80.0, 30.0];
    assert_eq!(compute_metrics(&naive, &a, &naive).unwrap().mase, Some(1.0));
}

#[test]
fn mean_forecast_has_zero_r2() {
    let a = [50.0, 70.0, 81.5, 12.0, 33.0];
    let mean = a.iter().sum::<f64>() / 5.0;
    let r2 = compute_metrics(&[mean; 5], &a, &[0.0; 5]).unwrap().r2.unwrap();
    assert!(r2.abs() < 1e-12, "{r2}");
}

#[test]
fn undefined_markers() {
    let a = [10.0, 20.0];
    assert!(matches!(mase(&[11.0, 19.0], &a, &a), Err(EvalError::ZeroNaive)));
    let m = compute_metrics(&[11.0, 19.0], &a, &a).unwrap();
    assert_eq!(m.mase, None);
    let flat = compute_metrics(&[1.0, 2.0], &[3.0, 3.0], &[0.0, 0.0]).unwrap();
    assert_eq!(flat.r2, None);
    let zeros = compute_metrics(&[1.0, 2.0], &[0.0, 1e-7], &[1.0, 1.0]).unwrap();
    assert_eq!((zeros.mape, zeros.mape_excluded), (None, 2));
    assert!(matches!(compute_metrics(&[], &[], &[]), Err(EvalError::Empty)));
    assert!(matches!(compute_metrics(&[1.0], &[1.0, 2.0], &[1.0, 2.0]), Err(EvalError::LengthMismatch { .. })));
}

proptest! {
    #[test]
    fn metrics_are_permutation_invariant(
        rows in proptest::collection::vec((-50.0f64..150.0, -50.0f64..150.0, -50.0f64..150.0), 2..60),
        seed in any::<u64>(),
    ) {
        let mut shuffled = rows.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let split = |r: &[(f64, f64, f64)]| {
            (r.iter().map(|x| x.0).collect::<Vec<_>>(), r.iter().map(|x| x.1).collect::<Vec<_>>(), r.iter().map(|x| x.2).collect::<Vec<_>>())
        };
        let (p, a, n) = split(&rows);
        let (ps, as_, ns) = split(&shuffled);
        let x = compute_metrics(&p, &a, &n).unwrap();
        let y = compute_metrics(&ps, &as_, &ns).unwrap();
        let tol = |u: f64, v: f64| (u - v).abs() <= 1e-9 * u.abs().max(1.0);
        for (u, v) in x.values().iter().zip(y.values()) {
            match (u, v) {
                (Some(u), Some(v)) => prop_assert!(tol(*u, v)),
                (None, None) => {}
                _ => prop_assert!(false, "definedness changed"),
            }
        }
        prop_assert_eq!(x.mape_excluded, y.mape_excluded);
    }

    #[test]
    fn metric_set_invariants(
        rows in proptest::collection::vec((-50.0f64..150.0, -50.0f64..150.0, -50.0f64..150.0), 1..60),
    ) {
        let p: Vec<f64> = rows.iter().map(|x| x.0).collect();
        let a: Vec<f64> = rows.iter().map(|x| x.1).collect();
        let n: Vec<f64> = rows.iter().map(|x| x.2).collect();
        let m = compute_metrics(&p, &a, &n).unwrap();
        prop_assert!((m.rmse - m.mse.sqrt()).abs() <= 1e-12);
        prop_assert!(m.mase.is_none_or(|v| v >= 0.0));
        prop_assert!(m.r2.is_none_or(|v| v <= 1.0));
    }
}

fn date(s: &str) -> NaiveDate {
    s.parse().unwrap()
}

/// Samples with `3 x 8` / `3 x 9` windows filled by `fill`.
fn samples(n: usize, seed: u64, fill: impl Fn(&[f64], &[f64], &mut ChaCha8Rng) -> f64) -> Vec<SequenceSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let h: Vec<f64> = (0..24).map(|_| rng.random_range(-2.0..2.0)).collect();
            let v: Vec<f64> = (0..27).map(|_| rng.random_range(-2.0..2.0)).collect();
            let target = fill(&h, &v, &mut rng);
            SequenceSample {
                route_id: ["A", "B"][i % 2].into(),
                flight_date: date("2024-01-01") + Days::new(i as u64),
                days_before_departure: (i % 5) as u32,
                horizontal: Tensor::from_vec(&[3, 8], h).unwrap(),
                vertical: Tensor::from_vec(&[3, 9], v).unwrap(),
                target_plf: target,
                naive_plf: target + rng.random_range(-5.0..5.0),
            }
        })
        .collect()
}

#[test]
fn flattened_width_is_fifty_one() {
    let s = samples(1, 0, |_, _, _| 0.0);
    let f = flatten(&s[0]);
    assert_eq!(f.len(), 3 * 8 + 3 * 9);
    assert_eq!(f[24], s[0].vertical.data()[0]);
}

#[test]
fn linear_fits_realizable_target() {
    let lin = |h: &[f64], v: &[f64], _: &mut ChaCha8Rng| 60.0 + 3.0 * h[0] - 2.0 * h[23] + 1.5 * v[5] + 0.25 * v[26];
    let train = samples(400, 1, lin);
    let test = samples(100, 2, lin);
    let out = baseline_fit_predict(BaselineKind::Linear, &train, &test, &BaselineConfig::default()).unwrap();
    assert!(out.metrics.r2.unwrap() > 0.999);
    assert!(out.warnings.is_empty());
    let ridge = baseline_fit_predict(BaselineKind::Ridge, &train, &test, &BaselineConfig::default()).unwrap();
    assert!(ridge.metrics.r2.unwrap() > 0.99);
}

#[test]
fn collinear_linear_falls_back_to_ridge() {
    let mut train = samples(200, 3, |h, _, _| 50.0 + h[0]);
    for s in &mut train {
        let x = s.horizontal.data()[0];
        s.horizontal.data_mut()[1] = 2.0 * x;
    }
    let test = samples(50, 4, |h, _, _| 50.0 + h[0]);
    let out = baseline_fit_predict(BaselineKind::Linear, &train, &test, &BaselineConfig::default()).unwrap();
    assert_eq!(out.warnings.len(), 1);
    assert!(out.warnings[0].contains("singular"));
}

#[test]
fn naive_baseline_has_unit_mase() {
    let s = samples(50, 5, |h, _, _| 50.0 + h[0]);
    let out = baseline_fit_predict(BaselineKind::Naive, &s, &s, &BaselineConfig::default()).unwrap();
    assert_eq!(out.metrics.mase, Some(1.0));
}

#[test]
fn forest_beats_linear_on_planted_nonlinearity() {
    let train = planted_nonlinearity(3000, 1);
    let test = planted_nonlinearity(1000, 2);
    let cfg = BaselineConfig { forest: ForestConfig { n_trees: 60, ..Default::default() }, ..Default::default() };
    let lin = baseline_fit_predict(BaselineKind::Linear, &train, &test, &cfg).unwrap().metrics.r2.unwrap();
    let rf = baseline_fit_predict(BaselineKind::RandomForest, &train, &test, &cfg).unwrap().metrics.r2.unwrap();
    assert!(rf - lin > 0.2, "linear {lin} forest {rf}");
}

fn preds(samples: &[SequenceSample], name: &str, shift: f64) -> ModelPredictions {
    ModelPredictions { model: name.into(), predictions: samples.iter().map(|s| s.target_plf + shift * (s.days_before_departure as f64 - 1.5)).collect() }
}

#[test]
fn horizon_cells_partition_and_match_slices() {
    let s = samples(200, 6, |h, _, _| 60.0 + 5.0 * h[0]);
    let models = [preds(&s, "m1", 1.0), preds(&s, "m2", -0.5)];
    let report = horizon_analysis(&models, &eval_records(&s), &(0..=21).collect::<Vec<_>>()).unwrap();
    assert_eq!(report.cells.len(), 2 * 22);
    for m in ["m1", "m2"] {
        assert_eq!(report.model(m).map(|c| c.n).sum::<usize>(), s.len());
        assert!(report.model(m).filter(|c| c.d >= 5).all(|c| c.metrics.is_none() && c.n == 0));
    }
    let single = horizon_analysis(&models[..1], &eval_records(&s), &[3]).unwrap();
    assert_eq!(single.cells.len(), 1);
    let slice: Vec<usize> = (0..s.len()).filter(|&i| s[i].days_before_departure == 3).collect();
    let pick = |v: Vec<f64>| slice.iter().map(|&i| v[i]).collect::<Vec<_>>();
    let direct = compute_metrics(
        &pick(models[0].predictions.clone()),
        &pick(s.iter().map(|x| x.target_plf).collect()),
        &pick(s.iter().map(|x| x.naive_plf).collect()),
    )
    .unwrap();
    assert_eq!(single.cells[0].metrics, Some(direct));
    let early = report.mean_mae("m1", 0..=1).unwrap();
    assert!((early - 1.0).abs() < 1e-9, "{early}");
}

fn route(id: &str, reach: Reach) -> RouteMeta {
    let c = generate_synthetic(&GeneratorConfig { routes: 1, flights_per_route: 2, ..Default::default() }, 0).unwrap();
    let mut r = c.routes[0].clone();
    r.route_id = id.into();
    r.tags.reach = reach;
    r
}

#[test]
fn category_cells_partition_each_pair() {
    let s = samples(120, 7, |h, _, _| 60.0 + 5.0 * h[0]);
    let models = [preds(&s, "m", 1.0)];
    let routes = [route("A", Reach::Domestic), route("B", Reach::Domestic)];
    let report = category_report(&models, &eval_records(&s), &routes).unwrap();
    for pair in CATEGORY_PAIRS {
        let total: usize = report.cells.iter().filter(|c| c.pair == pair).map(|c| c.n).sum();
        assert_eq!(total, s.len(), "{pair}");
    }
    let intl = report.cell("m", "reach", "international").unwrap();
    assert_eq!((intl.n, intl.metrics), (0, None));
    assert_eq!(report.cell("m", "reach", "domestic").unwrap().n, 120);
    assert!(matches!(category_report(&models, &eval_records(&s), &routes[..1]), Err(EvalError::UnknownRoute(r)) if r == "B"));
}

fn metric_with(mae: f64, mase: Option<f64>) -> MetricSet {
    MetricSet { n: 10, mae, mape: Some(mae / 100.0), mape_excluded: 0, mse: mae * mae, rmse: mae, mase, r2: Some(0.5) }
}

#[test]
fn leaderboard_aggregates_across_seeds() {
    let a = [metric_with(2.0, Some(0.5)), metric_with(4.0, None), metric_with(3.0, Some(0.7))];
    let b = [metric_with(1.0, Some(0.2))];
    let runs: Vec<(&str, &MetricSet)> =
        vec![("A", &a[0]), ("B", &b[0]), ("A", &a[1]), ("A", &a[2])];
    let rows = leaderboard(runs);
    assert_eq!(rows.iter().map(|r| r.model.as_str()).collect::<Vec<_>>(), ["A", "B"]);
    assert_eq!(rows[0].seeds, 3);
    assert!((rows[0].mean[0].unwrap() - 3.0).abs() < 1e-15);
    assert!((rows[0].std[0].unwrap() - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
    // undefined MASE on one seed: the other two are aggregated
    assert!((rows[0].mean[4].unwrap() - 0.6).abs() < 1e-15);
    assert!(rows[1].std.iter().all(|s| *s == Some(0.0)));
}

fn small_corpus() -> crate::sequences::SplitCorpus {
    let g = GeneratorConfig { routes: 2, flights_per_route: 40, ..Default::default() };
    let c = generate_synthetic(&g, 9).unwrap();
    let rows = build_feature_rows(&c.snapshots, &c.routes, &c.holidays, &FeatureConfig::default()).unwrap();
    let w = WindowConfig { d_range: vec![0, 3, 7], ..Default::default() };
    let a = assemble_samples(&rows, &w, &FeatureSet::table()).unwrap();
    chronological_split(a.samples, DEFAULT_RATIOS, FeatureSet::table(), w).unwrap()
}

#[test]
fn parallel_slots_do_not_change_results() {
    let corpus = small_corpus();
    let plan = RunPlan {
        models: vec![ModelKind::Neural(Variant::SlstmH), ModelKind::Baseline(BaselineKind::RandomForest)],
        seeds: vec![0, 1],
        max_epochs: Some(2),
        jobs: 1,
        baseline: BaselineConfig { forest: ForestConfig { n_trees: 10, max_depth: 5, ..Default::default() }, ..Default::default() },
    };
    let serial = run_models(&corpus, &plan).unwrap();
    let parallel = run_models(&corpus, &RunPlan { jobs: 3, ..plan.clone() }).unwrap();
    let key = |r: &RunOutcome| (r.model.name(), r.seed, r.predictions.clone());
    assert_eq!(serial.iter().map(key).collect::<Vec<_>>(), parallel.iter().map(key).collect::<Vec<_>>());
    assert_eq!(serial[0].seed, 0);
    assert_eq!(serial[1].model, ModelKind::Neural(Variant::SlstmH));
    // different seeds give different fits
    assert_ne!(serial[0].predictions, serial[1].predictions);
    assert_ne!(serial[2].predictions, serial[3].predictions);
}

#[test]
fn model_names_parse() {
    assert_eq!("DLSTM-HA".parse::<ModelKind>().unwrap(), ModelKind::Neural(Variant::DlstmHa));
    assert_eq!("random-forest".parse::<ModelKind>().unwrap(), ModelKind::Baseline(BaselineKind::RandomForest));
    assert!("xgboost".parse::<ModelKind>().is_err());
}

#[test]
fn outputs_are_written() {
    let s = samples(60, 10, |h, _, _| 60.0 + 5.0 * h[0]);
    let models = [preds(&s, "m1", 1.0), preds(&s, "m2", 2.0)];
    let dir = tempfile::tempdir().unwrap();
    let horizon = horizon_analysis(&models, &eval_records(&s), &(0..=6).collect::<Vec<_>>()).unwrap();
    write_horizon_csv(&dir.path().join("horizon.csv"), &horizon).unwrap();
    let plots = write_horizon_plots(dir.path(), &horizon).unwrap();
    assert_eq!(plots.len(), 2);
    let svg = std::fs::read_to_string(&plots[0]).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("<metadata>") && svg.contains("m2,3,"));
    let text = std::fs::read_to_string(dir.path().join("horizon.csv")).unwrap();
    assert!(text.starts_with("model,d,n,mae,mape,mse,rmse,mase,r2,mape_excluded\n"));
    // d = 5 and 6 are empty cells with blank metrics
    assert!(text.contains("m1,6,0,,,,,,,\n"));

    let routes = [route("A", Reach::Domestic), route("B", Reach::International)];
    let cats = category_report(&models, &eval_records(&s), &routes).unwrap();
    write_categories_csv(&dir.path().join("categories.csv"), &cats).unwrap();
    assert_eq!(write_category_plots(dir.path(), &cats).unwrap().len(), 8);

    let m: Vec<MetricSet> = models
        .iter()
        .map(|p| compute_metrics(&p.predictions, &s.iter().map(|x| x.target_plf).collect::<Vec<_>>(), &s.iter().map(|x| x.naive_plf).collect::<Vec<_>>()).unwrap())
        .collect();
    let rows = leaderboard([("m1", &m[0]), ("m2", &m[1])]);
    write_leaderboard_csv(&dir.path().join("leaderboard.csv"), &rows).unwrap();
    let lb = std::fs::read_to_string(dir.path().join("leaderboard.csv")).unwrap();
    assert!(lb.starts_with("model,seeds,mae_mean,mae_std,"));
    assert_eq!(lb.lines().count(), 3);
}
