use chrono::{Datelike, Days, NaiveDate};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::features::roster::idx;
use crate::features::{build_feature_rows, FeatureConfig, HistoryTier, FEATURE_COUNT};
use crate::ingest::{generate_synthetic, GeneratorConfig};
use crate::neural::Variant;

const KEY_COL: usize = 3; // plf_historical carries the flight's day number in these fixtures
const D_COL: usize = 4;

fn fake(route: &str, fd: NaiveDate, d: u32, plf: f64) -> FeatureRow {
    let mut values = [0.0; FEATURE_COUNT];
    values[idx::PLF] = plf;
    values[idx::PLF_HISTORICAL] = fd.num_days_from_ce() as f64;
    values[idx::DAYS_BEFORE_DEPARTURE] = d as f64;
    FeatureRow {
        route_id: route.into(),
        flight_date: fd,
        record_date: fd - Days::new(d as u64),
        days_before_departure: d,
        values,
        history_tier: HistoryTier::RouteDay,
    }
}

fn date(s: &str) -> NaiveDate {
    s.parse().unwrap()
}

/// A route with one flight per day and every `d` in `0..=max_d`.
fn daily(route: &str, start: NaiveDate, flights: u64, max_d: u32) -> Vec<FeatureRow> {
    let mut rows = Vec::new();
    for f in 0..flights {
        let fd = start + Days::new(f);
        for d in 0..=max_d {
            rows.push(fake(route, fd, d, 10.0 + f as f64 + d as f64 / 100.0));
        }
    }
    rows
}

fn table_cols() -> (Vec<usize>, Vec<usize>) {
    FeatureSet::table().resolve().unwrap()
}

#[test]
fn horizontal_window_runs_oldest_to_newest() {
    let rows = daily("R", date("2024-01-01"), 3, 10);
    let index = FeatureIndex::new(&rows);
    let (h, _) = table_cols();
    let t = build_horizontal(&index, "R", date("2024-01-02"), 5, 3, &h).unwrap();
    let ds: Vec<f64> = (0..3).map(|r| t.row(r)[D_COL]).collect();
    assert_eq!(ds, vec![7.0, 6.0, 5.0]);
    assert_eq!(t.shape(), &[3, 8]);
    let one = build_horizontal(&index, "R", date("2024-01-02"), 5, 1, &h).unwrap();
    assert_eq!(one.shape(), &[1, 8]);
    assert_eq!(one.row(0)[D_COL], 5.0);
}

#[test]
fn horizontal_gap_is_insufficient_history() {
    let mut rows = daily("R", date("2024-01-01"), 1, 10);
    rows.retain(|r| r.days_before_departure != 6);
    let index = FeatureIndex::new(&rows);
    let (h, _) = table_cols();
    let err = build_horizontal(&index, "R", date("2024-01-01"), 5, 3, &h);
    assert!(matches!(err, Err(SequenceError::InsufficientHistory { .. })));
}

#[test]
fn vertical_window_takes_most_recent_flights() {
    let rows = daily("R", date("2024-03-01"), 11, 5);
    let t = date("2024-03-11");
    let index = FeatureIndex::new(&rows);
    let (_, v) = table_cols();
    let day = |back: u64| (t - Days::new(back)).num_days_from_ce() as f64;
    let w = build_vertical(&index, "R", t, 4, 3, 1, &v).unwrap();
    assert_eq!(w.shape(), &[3, 9]);
    assert_eq!((0..3).map(|r| w.row(r)[KEY_COL]).collect::<Vec<_>>(), vec![day(3), day(2), day(1)]);
    let s2 = build_vertical(&index, "R", t, 4, 3, 2, &v).unwrap();
    assert_eq!((0..3).map(|r| s2.row(r)[KEY_COL]).collect::<Vec<_>>(), vec![day(5), day(3), day(1)]);
    for r in 0..3 {
        assert_eq!(w.row(r)[D_COL], 4.0);
    }
}

#[test]
fn vertical_with_exactly_enough_flights() {
    let rows = daily("R", date("2024-03-01"), 4, 2);
    let index = FeatureIndex::new(&rows);
    let (_, v) = table_cols();
    let t = date("2024-03-04");
    let w = build_vertical(&index, "R", t, 1, 3, 1, &v).unwrap();
    let days: Vec<f64> = (0..3).map(|r| w.row(r)[KEY_COL]).collect();
    let want: Vec<f64> = (1..=3).rev().map(|b| (t - Days::new(b)).num_days_from_ce() as f64).collect();
    assert_eq!(days, want);
    assert!(build_vertical(&index, "R", t, 1, 4, 1, &v).is_err());
    assert!(build_vertical(&index, "R", t, 1, 2, 3, &v).is_err());
}

/// Random sparse corpus: flights on random days, each missing some `d` rows.
fn sparse_corpus(rng: &mut ChaCha8Rng, flights: usize) -> Vec<FeatureRow> {
    let mut rows = Vec::new();
    let mut fd = date("2023-06-01");
    for f in 0..flights {
        fd = fd + Days::new(rng.random_range(1..4));
        let route = if f % 3 == 0 { "A" } else { "B" };
        for d in 0..=8 {
            if rng.random::<f64>() < 0.8 {
                rows.push(fake(route, fd, d, rng.random_range(0.0..100.0)));
            }
        }
    }
    rows
}

/// Scans every row of the route for the vertical selection.
fn brute_vertical(rows: &[FeatureRow], route: &str, t: NaiveDate, d: u32, v: usize, s: usize) -> Option<Vec<f64>> {
    let mut dates: Vec<NaiveDate> = rows
        .iter()
        .filter(|r| r.route_id == route && r.flight_date < t && r.days_before_departure == d)
        .map(|r| r.flight_date)
        .collect();
    dates.sort();
    dates.reverse();
    let picked: Vec<NaiveDate> = dates.iter().step_by(s).take(v).copied().collect();
    if picked.len() < v || dates.len() < (v - 1) * s + 1 {
        return None;
    }
    Some(picked.iter().rev().map(|x| x.num_days_from_ce() as f64).collect())
}

#[test]
fn vertical_matches_brute_force_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let (_, vcols) = table_cols();
    let mut checked = 0;
    for _ in 0..10 {
        let flights = rng.random_range(20..200);
        let rows = sparse_corpus(&mut rng, flights);
        let index = FeatureIndex::new(&rows);
        for _ in 0..100 {
            let r = &rows[rng.random_range(0..rows.len())];
            let d = rng.random_range(0..9);
            let v = rng.random_range(1..5);
            let s = if rng.random::<bool>() { 1 } else { rng.random_range(1..4) };
            let got = build_vertical(&index, &r.route_id, r.flight_date, d, v, s, &vcols).ok();
            let got_keys = got.as_ref().map(|t| (0..v).map(|i| t.row(i)[KEY_COL]).collect::<Vec<_>>());
            assert_eq!(got_keys, brute_vertical(&rows, &r.route_id, r.flight_date, d, v, s));
            if let Some(t) = got {
                assert!((0..v).all(|i| t.row(i)[D_COL] == d as f64));
            }
            checked += 1;
        }
    }
    assert_eq!(checked, 1000);
}

fn enumerate_oracle(rows: &[FeatureRow], w: &WindowConfig) -> usize {
    let mut n = 0;
    let has = |route: &str, fd: NaiveDate, d: u32| {
        rows.iter().any(|r| r.route_id == route && r.flight_date == fd && r.days_before_departure == d)
    };
    let mut flights: Vec<(String, NaiveDate)> = rows.iter().map(|r| (r.route_id.clone(), r.flight_date)).collect();
    flights.sort();
    flights.dedup();
    for (route, fd) in &flights {
        for &d in &w.d_range {
            let ok = has(route, *fd, d)
                && has(route, *fd, 0)
                && (0..w.horizontal as u32).all(|k| has(route, *fd, d + k))
                && brute_vertical(rows, route, *fd, d, w.vertical, w.stride).is_some();
            n += ok as usize;
        }
    }
    n
}

#[test]
fn sample_count_matches_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let rows = sparse_corpus(&mut rng, 60);
    for stride in [1, 2] {
        let w = WindowConfig { horizontal: 3, vertical: 3, stride, d_range: (0..=6).collect() };
        let a = assemble_samples(&rows, &w, &FeatureSet::table()).unwrap();
        assert_eq!(a.samples.len(), enumerate_oracle(&rows, &w));
        let candidates = rows.iter().filter(|r| r.days_before_departure <= 6).count();
        assert_eq!(a.samples.len() + a.skipped.total(), candidates);
    }
}

#[test]
fn samples_on_generated_corpus_match_enumeration() {
    let cfg = GeneratorConfig { routes: 2, flights_per_route: 12, ..Default::default() };
    let c = generate_synthetic(&cfg, 5).unwrap();
    let rows = build_feature_rows(&c.snapshots, &c.routes, &c.holidays, &FeatureConfig::default()).unwrap();
    let w = WindowConfig::default();
    let a = assemble_samples(&rows, &w, &FeatureSet::table()).unwrap();
    assert_eq!(a.samples.len(), enumerate_oracle(&rows, &w));
    assert_eq!(a.skipped.insufficient_vertical, 2 * 3 * 22);
    for s in &a.samples {
        let final_row = rows
            .iter()
            .find(|r| r.route_id == s.route_id && r.flight_date == s.flight_date && r.days_before_departure == 0)
            .unwrap();
        assert_eq!(s.target_plf, final_row.plf());
    }
}

#[test]
fn flights_without_history_are_skipped_and_counted() {
    let rows = daily("R", date("2024-01-01"), 2, 4);
    let w = WindowConfig { horizontal: 2, vertical: 3, stride: 1, d_range: vec![0, 1] };
    let a = assemble_samples(&rows, &w, &FeatureSet::table()).unwrap();
    assert!(a.samples.is_empty());
    assert_eq!(a.skipped.insufficient_vertical, 4);
}

#[test]
fn departure_only_range_gives_one_sample_per_flight() {
    let rows = daily("R", date("2024-01-01"), 10, 4);
    let w = WindowConfig { horizontal: 3, vertical: 3, stride: 1, d_range: vec![0] };
    let a = assemble_samples(&rows, &w, &FeatureSet::table()).unwrap();
    assert_eq!(a.samples.len(), 7);
    assert!(a.samples.iter().all(|s| s.days_before_departure == 0 && s.naive_plf == s.target_plf));
}

#[test]
fn missing_departure_row_counts_as_missing_target() {
    let mut rows = daily("R", date("2024-01-01"), 6, 5);
    let last = date("2024-01-06");
    rows.retain(|r| !(r.flight_date == last && r.days_before_departure == 0));
    let w = WindowConfig { horizontal: 2, vertical: 2, stride: 1, d_range: vec![1, 2] };
    let a = assemble_samples(&rows, &w, &FeatureSet::table()).unwrap();
    assert_eq!(a.skipped.missing_target, 2);
}

fn dated_samples(days: &[u64]) -> Vec<SequenceSample> {
    days.iter()
        .enumerate()
        .map(|(i, &k)| {
            let x = i as f64;
            SequenceSample {
                route_id: "R".into(),
                flight_date: date("2024-01-01") + Days::new(k),
                days_before_departure: 0,
                horizontal: Tensor::from_vec(&[2, 2], vec![x, 2.0 * x + 1.0, x * x, 5.0]).unwrap(),
                vertical: Tensor::from_vec(&[1, 3], vec![-x, x / 3.0, 7.0]).unwrap(),
                target_plf: 50.0 + x,
                naive_plf: 40.0,
            }
        })
        .collect()
}

fn split(samples: Vec<SequenceSample>) -> Result<SplitCorpus, SequenceError> {
    chronological_split(samples, DEFAULT_RATIOS, FeatureSet::table(), WindowConfig::default())
}

#[test]
fn clean_split_is_seventy_fifteen_fifteen() {
    let c = split(dated_samples(&(0..100).collect::<Vec<_>>())).unwrap();
    assert_eq!((c.train.len(), c.validation.len(), c.test.len()), (70, 15, 15));
}

#[test]
fn single_date_is_an_empty_partition() {
    let err = split(dated_samples(&[3; 40]));
    assert!(matches!(err, Err(SequenceError::EmptyPartition(_))));
}

#[test]
fn boundary_ties_go_to_the_earlier_partition() {
    // 10 dates with 10 samples each; 70 falls exactly on a date edge, and 85
    // falls inside date 8, which must stay in validation
    let days: Vec<u64> = (0..100).map(|i| i / 10).collect();
    let c = split(dated_samples(&days)).unwrap();
    assert_eq!((c.train.len(), c.validation.len(), c.test.len()), (70, 20, 10));
    let max_train = c.train.iter().map(|s| s.flight_date).max().unwrap();
    let min_val = c.validation.iter().map(|s| s.flight_date).min().unwrap();
    let max_val = c.validation.iter().map(|s| s.flight_date).max().unwrap();
    let min_test = c.test.iter().map(|s| s.flight_date).min().unwrap();
    assert!(max_train < min_val && max_val < min_test);
}

#[test]
fn train_statistics_only() {
    let raw = dated_samples(&(0..100).collect::<Vec<_>>());
    let c = split(raw.clone()).unwrap();
    let fh = 2;
    for j in 0..fh {
        let col: Vec<f64> = c.train.iter().flat_map(|s| (0..2).map(move |r| s.horizontal.row(r)[j])).collect();
        let n = col.len() as f64;
        let mean = col.iter().sum::<f64>() / n;
        let std = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        assert!(mean.abs() < 1e-9 && (std - 1.0).abs() < 1e-9, "column {j}: {mean} {std}");
    }
    // the constant column keeps unit scale
    assert_eq!(c.scaler.vertical.std[2], 1.0);
    // test features are transformed with training statistics, not re-centred
    let test_mean: f64 = c.test.iter().map(|s| s.horizontal.row(0)[0]).sum::<f64>() / c.test.len() as f64;
    assert!(test_mean.abs() > 0.1, "{test_mean}");
    let raw_test = &raw[85];
    let expected = (raw_test.horizontal.row(0)[0] - c.scaler.horizontal.mean[0]) / c.scaler.horizontal.std[0];
    assert_eq!(c.test[0].horizontal.row(0)[0], expected);
    assert_eq!(c.test[0].target_plf, raw_test.target_plf);
}

proptest! {
    #[test]
    fn standardisation_is_invertible(values in proptest::collection::vec(-1e4f64..1e4, 12..60)) {
        let n = values.len() / 6;
        let samples: Vec<SequenceSample> = (0..n).map(|i| SequenceSample {
            route_id: "R".into(),
            flight_date: date("2024-01-01") + Days::new(i as u64),
            days_before_departure: 0,
            horizontal: Tensor::from_vec(&[1, 3], values[i * 6..i * 6 + 3].to_vec()).unwrap(),
            vertical: Tensor::from_vec(&[1, 3], values[i * 6 + 3..i * 6 + 6].to_vec()).unwrap(),
            target_plf: values[i * 6],
            naive_plf: 0.0,
        }).collect();
        let scaler = Scaler::fit(&samples);
        for s in &samples {
            let mut x = s.clone();
            scaler.scale_sample(&mut x);
            scaler.unscale_sample(&mut x);
            for (a, b) in x.horizontal.data().iter().chain(x.vertical.data()).zip(s.horizontal.data().iter().chain(s.vertical.data())) {
                prop_assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0));
            }
            prop_assert!((scaler.unscale_target(scaler.scale_target(s.target_plf)) - s.target_plf).abs() < 1e-9);
        }
    }
}

#[test]
fn generated_split_is_leakage_free() {
    let cfg = GeneratorConfig { routes: 3, flights_per_route: 60, ..Default::default() };
    let c = generate_synthetic(&cfg, 11).unwrap();
    let rows = build_feature_rows(&c.snapshots, &c.routes, &c.holidays, &FeatureConfig::default()).unwrap();
    let a = assemble_samples(&rows, &WindowConfig::default(), &FeatureSet::table()).unwrap();
    let n = a.samples.len();
    let corpus = chronological_split(a.samples, DEFAULT_RATIOS, FeatureSet::table(), WindowConfig::default()).unwrap();
    let max_train = corpus.train.iter().map(|s| s.flight_date).max().unwrap();
    assert!(corpus.validation.iter().chain(&corpus.test).all(|s| s.flight_date > max_train));
    let max_val = corpus.validation.iter().map(|s| s.flight_date).max().unwrap();
    assert!(corpus.test.iter().all(|s| s.flight_date > max_val));
    let share = corpus.train.len() as f64 / n as f64;
    assert!((share - 0.70).abs() < 0.03, "{share}");
}

#[test]
fn cache_round_trip_is_exact() {
    let rows = daily("R1", date("2024-02-01"), 8, 6);
    let a = assemble_samples(&rows, &WindowConfig { d_range: vec![0, 2], ..Default::default() }, &FeatureSet::table())
        .unwrap();
    assert!(!a.samples.is_empty());
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("samples.bin");
    write_sample_cache(&p, &a.samples, &FeatureSet::table()).unwrap();
    let (fs, back) = read_sample_cache(&p).unwrap();
    assert_eq!(fs, FeatureSet::table());
    assert_eq!(back, a.samples);
    let mut bytes = std::fs::read(&p).unwrap();
    bytes.truncate(bytes.len() - 3);
    std::fs::write(&p, bytes).unwrap();
    assert!(read_sample_cache(&p).is_err());
}

#[test]
fn manifest_lists_partitions_and_skips() {
    let c = split(dated_samples(&(0..20).collect::<Vec<_>>())).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("manifest.csv");
    let skips = SkipCounts { missing_target: 1, insufficient_horizontal: 2, insufficient_vertical: 3 };
    write_manifest(&p, &c, &skips).unwrap();
    let text = std::fs::read_to_string(&p).unwrap();
    assert!(text.starts_with("# skipped_missing_target=1\n"));
    assert!(text.contains("# skipped_insufficient_vertical=3"));
    assert_eq!(text.lines().filter(|l| l.contains(",train,")).count(), 14);
    assert_eq!(text.lines().filter(|l| l.contains(",test,")).count(), 3);
}

#[test]
fn unknown_feature_is_rejected() {
    let fs = FeatureSet { horizontal: vec!["plf".into(), "nope".into()], vertical: vec!["plf".into()] };
    assert!(matches!(fs.resolve(), Err(SequenceError::UnknownFeature(n)) if n == "nope"));
}

#[test]
fn sweep_enumerates_symmetric_pairs() {
    let cfg = GeneratorConfig { routes: 2, flights_per_route: 40, ..Default::default() };
    let c = generate_synthetic(&cfg, 2).unwrap();
    let rows = build_feature_rows(&c.snapshots, &c.routes, &c.holidays, &FeatureConfig::default()).unwrap();
    let mut sc = SweepConfig { sizes: vec![3, 6], max_epochs: 1, d_range: vec![0, 5, 10], ..Default::default() };
    sc.variants = vec![Variant::SlstmV];
    let table = window_sweep(&rows, &FeatureSet::table(), &sc).unwrap();
    assert_eq!(table.len(), 2);
    assert!(table.iter().all(|r| r.horizontal == r.vertical && r.val_loss.is_finite()));
    assert!(table[0].val_loss <= table[1].val_loss);
}
