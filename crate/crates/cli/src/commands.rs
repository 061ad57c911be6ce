use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use log::{info, warn};
use serde::{Deserialize, Serialize};

use loadcast::evaluation::{
    category_report, horizon_analysis, leaderboard, run_models, write_categories_csv, write_category_plots,
    write_horizon_csv, write_horizon_plots, write_leaderboard_csv, write_runs_csv, BaselineConfig, EvalRecord,
    ModelKind, ModelPredictions, RunPlan,
};
use loadcast::featsel::{select_features, SelectionConfig};
use loadcast::features::{build_feature_rows, read_features_csv, write_features_csv, FeatureConfig, FeatureRow};
use loadcast::ingest::{
    aggregate_legs, generate_synthetic, load_airports, load_holidays, load_reservations, load_routes, write_airports,
    write_holidays, write_reservations, write_routes, BookingSnapshot, GeneratorConfig, HolidayCalendar, RouteMeta,
};
use loadcast::neural::{load_checkpoint, save_checkpoint, InputDims, Model, ModelSpec};
use loadcast::sequences::{
    assemble_samples, chronological_split, read_sample_cache, window_sweep, write_manifest, write_sample_cache,
    write_sweep_csv, FeatureSet, Scaler, SequenceSample, SplitCorpus, SweepConfig, WindowConfig, DEFAULT_RATIOS,
};
use loadcast::training::{checkpoint_path, fit, predict_plf, TrainConfig, TrainLog};

use crate::failure::{require, Failure};
use crate::manifest::record_stage;
use crate::{
    CategoriesArgs, Cli, Command, EvaluateArgs, FeaturesArgs, GenerateArgs, HorizonArgs, IngestArgs, Partition,
    PredictArgs, SelectArgs, SequencesArgs, SweepArgs, TableArgs, TrainArgs,
};

const SAMPLES_FILE: &str = "samples.bin";
const WINDOW_FILE: &str = "window.json";
const SAMPLES_MANIFEST: &str = "samples_manifest.csv";

/// Files a stage read and wrote, for the manifest.
struct Io {
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
}

pub fn run(cli: &Cli) -> Result<(), Failure> {
    let seed = cli.seed;
    let (stage, config, io) = match &cli.command {
        Command::Generate(a) => ("generate", to_json(a)?, generate(a, seed)?),
        Command::Ingest(a) => ("ingest", to_json(a)?, ingest(a)?),
        Command::Features(a) => ("features", to_json(a)?, features(a)?),
        Command::Select(a) => ("select", to_json(a)?, select(a, seed)?),
        Command::Sequences(a) => ("sequences", to_json(a)?, sequences(a)?),
        Command::Train(a) => ("train", to_json(a)?, train(a, seed)?),
        Command::Evaluate(a) => ("evaluate", to_json(a)?, evaluate(a, seed)?),
        Command::Horizon(a) => ("horizon", to_json(a)?, horizon(a)?),
        Command::Categories(a) => ("categories", to_json(a)?, categories(a)?),
        Command::Sweep(a) => ("sweep", to_json(a)?, sweep(a, seed)?),
        Command::Predict(a) => ("predict", to_json(a)?, predict(a)?),
    };
    record_stage(&cli.manifest, stage, seed, &config, &io.inputs, &io.outputs)
}

fn to_json<T: Serialize>(args: &T) -> Result<serde_json::Value, Failure> {
    Ok(serde_json::to_value(args)?)
}

fn ensure_parent(path: &Path) -> Result<(), Failure> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    Ok(())
}

fn read_toml<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, Failure> {
    toml::from_str(&fs::read_to_string(path)?).map_err(|e| Failure::Args(format!("{}: {e}", path.display())))
}

fn generate(a: &GenerateArgs, seed: u64) -> Result<Io, Failure> {
    let mut inputs = Vec::new();
    let mut cfg = match &a.config {
        Some(p) => {
            require([p.as_path()])?;
            inputs.push(p.clone());
            GeneratorConfig::from_toml(&fs::read_to_string(p)?)?
        }
        None => GeneratorConfig::default(),
    };
    if let Some(r) = a.routes {
        cfg.routes = r;
    }
    if let Some(f) = a.flights_per_route {
        cfg.flights_per_route = f;
    }
    let corpus = generate_synthetic(&cfg, seed)?;
    fs::create_dir_all(&a.out_dir)?;
    let out = |name: &str| a.out_dir.join(name);
    write_reservations(&out("reservations.csv"), &corpus.snapshots)?;
    write_airports(&out("airports.csv"), &corpus.airports)?;
    write_routes(&out("routes.csv"), &corpus.routes)?;
    write_holidays(&out("holidays.csv"), &corpus.holidays)?;
    fs::write(out("generator.toml"), cfg.to_toml())?;
    info!("generated {} snapshots on {} routes", corpus.snapshots.len(), corpus.routes.len());
    let outputs = ["reservations.csv", "airports.csv", "routes.csv", "holidays.csv", "generator.toml"]
        .into_iter()
        .map(out)
        .collect();
    Ok(Io { inputs, outputs })
}

struct Tables {
    snapshots: Vec<BookingSnapshot>,
    routes: Vec<RouteMeta>,
    holidays: HolidayCalendar,
}

fn load_tables(t: &TableArgs) -> Result<Tables, Failure> {
    require([t.reservations.as_path(), t.airports.as_path(), t.routes.as_path(), t.holidays.as_path()])?;
    let airports = load_airports(&t.airports)?;
    let routes = load_routes(&t.routes, &airports)?;
    let holidays = load_holidays(&t.holidays)?;
    let snapshots = load_reservations(&t.reservations)?;
    Ok(Tables { snapshots, routes, holidays })
}

fn table_inputs(t: &TableArgs) -> Vec<PathBuf> {
    vec![t.reservations.clone(), t.airports.clone(), t.routes.clone(), t.holidays.clone()]
}

fn ingest(a: &IngestArgs) -> Result<Io, Failure> {
    let tables = load_tables(&a.tables)?;
    let known: HashSet<&str> = tables.routes.iter().map(|r| r.route_id.as_str()).collect();
    if let Some(s) = tables.snapshots.iter().find(|s| !known.contains(s.route_id.as_str())) {
        return Err(Failure::Other(format!("reservation references unknown route `{}`", s.route_id)));
    }
    let flights = aggregate_legs(&tables.snapshots, a.strict)?;
    ensure_parent(&a.out)?;
    write_reservations(&a.out, &flights)?;
    info!("{} snapshots aggregated into {} flight records", tables.snapshots.len(), flights.len());
    Ok(Io { inputs: table_inputs(&a.tables), outputs: vec![a.out.clone()] })
}

fn features(a: &FeaturesArgs) -> Result<Io, Failure> {
    let mut inputs = table_inputs(&a.tables);
    let cfg: FeatureConfig = match &a.config {
        Some(p) => {
            require([p.as_path()])?;
            inputs.push(p.clone());
            read_toml(p)?
        }
        None => FeatureConfig::default(),
    };
    let tables = load_tables(&a.tables)?;
    let flights = aggregate_legs(&tables.snapshots, false)?;
    let rows = build_feature_rows(&flights, &tables.routes, &tables.holidays, &cfg)?;
    ensure_parent(&a.out)?;
    write_features_csv(&a.out, &rows)?;
    info!("{} feature rows", rows.len());
    Ok(Io { inputs, outputs: vec![a.out.clone()] })
}

fn select(a: &SelectArgs, seed: u64) -> Result<Io, Failure> {
    require([a.features.as_path()])?;
    let mut inputs = vec![a.features.clone()];
    let mut cfg: SelectionConfig = match &a.config {
        Some(p) => {
            require([p.as_path()])?;
            inputs.push(p.clone());
            read_toml(p)?
        }
        None => SelectionConfig::default(),
    };
    cfg.forest.seed = seed;
    if let Some(k) = a.stage {
        cfg.last_stage = k;
    }
    let rows = read_features_csv(&a.features)?;
    let report = select_features(&rows, &cfg)?;
    for w in &report.warnings {
        warn!("{w}");
    }
    ensure_parent(&a.out)?;
    report.write_json(&a.out)?;
    let mut outputs = vec![a.out.clone()];
    if let Some(path) = &a.feature_set_out {
        match report.feature_set() {
            Some(fs) => {
                ensure_parent(path)?;
                fs::write(path, serde_json::to_string_pretty(&fs)? + "\n")?;
                outputs.push(path.clone());
            }
            None => warn!("stages stopped at {}; no feature set written", cfg.last_stage),
        }
    }
    info!("horizontal: {}", report.final_horizontal.join(", "));
    info!("vertical: {}", report.final_vertical.join(", "));
    Ok(Io { inputs, outputs })
}

fn feature_set(path: Option<&PathBuf>, inputs: &mut Vec<PathBuf>) -> Result<FeatureSet, Failure> {
    match path {
        Some(p) => {
            require([p.as_path()])?;
            inputs.push(p.clone());
            Ok(serde_json::from_str(&fs::read_to_string(p)?)?)
        }
        None => Ok(FeatureSet::table()),
    }
}

fn sequences(a: &SequencesArgs) -> Result<Io, Failure> {
    require([a.features.as_path()])?;
    let mut inputs = vec![a.features.clone()];
    let fs_cols = feature_set(a.feature_set.as_ref(), &mut inputs)?;
    let window = WindowConfig {
        horizontal: a.horizontal,
        vertical: a.vertical,
        stride: a.stride,
        d_range: (0..=a.d_max).collect(),
    };
    let rows = read_features_csv(&a.features)?;
    let assembly = assemble_samples(&rows, &window, &fs_cols)?;
    fs::create_dir_all(&a.out_dir)?;
    let out = |name: &str| a.out_dir.join(name);
    write_sample_cache(&out(SAMPLES_FILE), &assembly.samples, &fs_cols)?;
    fs::write(out(WINDOW_FILE), serde_json::to_string_pretty(&window)? + "\n")?;
    let corpus = chronological_split(assembly.samples, DEFAULT_RATIOS, fs_cols, window)?;
    write_manifest(&out(SAMPLES_MANIFEST), &corpus, &assembly.skipped)?;
    info!(
        "{} train, {} validation, {} test samples; {} candidates skipped",
        corpus.train.len(),
        corpus.validation.len(),
        corpus.test.len(),
        assembly.skipped.total()
    );
    Ok(Io { inputs, outputs: [SAMPLES_FILE, WINDOW_FILE, SAMPLES_MANIFEST].into_iter().map(out).collect() })
}

/// Raw samples, feature set and window of a `sequences` directory.
fn read_sequences(dir: &Path) -> Result<(Vec<SequenceSample>, FeatureSet, WindowConfig, Vec<PathBuf>), Failure> {
    let files = vec![dir.join(SAMPLES_FILE), dir.join(WINDOW_FILE)];
    require(files.iter().map(PathBuf::as_path))?;
    let (fs_cols, samples) = read_sample_cache(&files[0])?;
    let window: WindowConfig = serde_json::from_str(&fs::read_to_string(&files[1])?)?;
    Ok((samples, fs_cols, window, files))
}

fn load_corpus(dir: &Path) -> Result<(SplitCorpus, Vec<PathBuf>), Failure> {
    let (samples, fs_cols, window, files) = read_sequences(dir)?;
    Ok((chronological_split(samples, DEFAULT_RATIOS, fs_cols, window)?, files))
}

fn checkpoint_metadata(corpus: &SplitCorpus, seed: u64) -> Result<serde_json::Value, Failure> {
    Ok(serde_json::json!({
        "scaler": corpus.scaler,
        "features": corpus.features,
        "window": corpus.window,
        "seed": seed,
    }))
}

fn save_run(root: &Path, corpus: &SplitCorpus, model: &Model, log: &TrainLog, seed: u64) -> Result<Vec<PathBuf>, Failure> {
    let ckpt = checkpoint_path(root, model.spec(), seed);
    save_checkpoint(&ckpt, model, &checkpoint_metadata(corpus, seed)?)?;
    let log_path = ckpt.with_file_name("train_log.csv");
    log.write_csv(&log_path)?;
    Ok(vec![ckpt, log_path])
}

fn input_dims(corpus: &SplitCorpus) -> Result<InputDims, Failure> {
    Ok(loadcast::evaluation::input_dims(corpus)?)
}

fn train(a: &TrainArgs, seed: u64) -> Result<Io, Failure> {
    let (corpus, inputs) = load_corpus(&a.sequences)?;
    let spec = ModelSpec::preset(a.variant, input_dims(&corpus)?);
    let mut cfg = TrainConfig::for_spec(&spec, seed);
    if let Some(e) = a.epochs {
        cfg.max_epochs = e;
    }
    let (model, log) = fit(&spec, &corpus, &cfg)?;
    info!(
        "{}: best validation loss {:.6} at epoch {} of {}",
        a.variant, log.best_val_loss, log.best_epoch, log.stopped_epoch
    );
    let outputs = save_run(&a.runs_dir, &corpus, &model, &log, seed)?;
    Ok(Io { inputs, outputs })
}

/// One row of `predictions.csv`.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct PredictionRow {
    model: String,
    seed: u64,
    route_id: String,
    flight_date: NaiveDate,
    days_before_departure: u32,
    actual_plf: f64,
    naive_plf: f64,
    predicted_plf: f64,
}

fn evaluate(a: &EvaluateArgs, seed: u64) -> Result<Io, Failure> {
    if a.runs == 0 || a.jobs == 0 {
        return Err(Failure::Args("--runs and --jobs must be at least 1".into()));
    }
    let (corpus, inputs) = load_corpus(&a.sequences)?;
    let mut plan = RunPlan {
        seeds: (seed..seed + a.runs).collect(),
        max_epochs: a.epochs,
        jobs: a.jobs,
        baseline: BaselineConfig::default(),
        ..RunPlan::default()
    };
    plan.baseline.forest.n_trees = a.forest_trees;
    if !a.models.is_empty() {
        plan.models = a.models.iter().map(|m| m.parse::<ModelKind>()).collect::<Result<_, _>>()?;
    }
    let outcomes = run_models(&corpus, &plan)?;
    fs::create_dir_all(&a.out_dir)?;
    let out = |name: &str| a.out_dir.join(name);

    let mut wtr = csv::Writer::from_path(out("predictions.csv"))?;
    for o in &outcomes {
        for w in &o.warnings {
            warn!("{} seed {}: {w}", o.model, o.seed);
        }
        for (s, &p) in corpus.test.iter().zip(&o.predictions) {
            wtr.serialize(PredictionRow {
                model: o.model.name().to_string(),
                seed: o.seed,
                route_id: s.route_id.clone(),
                flight_date: s.flight_date,
                days_before_departure: s.days_before_departure,
                actual_plf: s.target_plf,
                naive_plf: s.naive_plf,
                predicted_plf: p,
            })?;
        }
    }
    wtr.flush()?;
    write_runs_csv(&out("runs.csv"), outcomes.iter().map(|o| (o.model.name(), o.seed, &o.metrics)))?;
    let rows = leaderboard(outcomes.iter().map(|o| (o.model.name(), &o.metrics)));
    write_leaderboard_csv(&out("leaderboard.csv"), &rows)?;
    for r in &rows {
        info!(
            "{:<14} mae {:>8} r2 {:>8}",
            r.model,
            r.mean[0].map_or("-".into(), |v| format!("{v:.4}")),
            r.mean[5].map_or("-".into(), |v| format!("{v:.4}"))
        );
    }
    let mut outputs: Vec<PathBuf> = ["predictions.csv", "runs.csv", "leaderboard.csv"].into_iter().map(out).collect();
    if let Some(root) = &a.runs_dir {
        for o in &outcomes {
            if let (Some(model), Some(log)) = (&o.network, &o.log) {
                outputs.extend(save_run(root, &corpus, model, log, o.seed)?);
            }
        }
    }
    Ok(Io { inputs, outputs })
}

/// Predictions of one seed, grouped per model, with the shared sample records.
fn read_predictions(path: &Path, run_seed: Option<u64>) -> Result<(Vec<ModelPredictions>, Vec<EvalRecord>), Failure> {
    require([path])?;
    let mut rdr = csv::Reader::from_path(path)?;
    let rows: Vec<PredictionRow> = rdr.deserialize().collect::<Result<_, _>>()?;
    let seed = match run_seed.or_else(|| rows.iter().map(|r| r.seed).min()) {
        Some(s) => s,
        None => return Err(Failure::Other(format!("{}: no predictions", path.display()))),
    };
    let rows: Vec<&PredictionRow> = rows.iter().filter(|r| r.seed == seed).collect();
    if rows.is_empty() {
        return Err(Failure::Args(format!("no predictions for seed {seed}")));
    }
    let mut models: Vec<ModelPredictions> = Vec::new();
    let mut records: Vec<EvalRecord> = Vec::new();
    let mut keys: Vec<Vec<(String, NaiveDate, u32)>> = Vec::new();
    for r in rows {
        let idx = match models.iter().position(|m| m.model == r.model) {
            Some(i) => i,
            None => {
                models.push(ModelPredictions { model: r.model.clone(), predictions: Vec::new() });
                keys.push(Vec::new());
                models.len() - 1
            }
        };
        if idx == 0 {
            records.push(EvalRecord {
                route_id: r.route_id.clone(),
                flight_date: r.flight_date,
                days_before_departure: r.days_before_departure,
                actual_plf: r.actual_plf,
                naive_plf: r.naive_plf,
            });
        }
        models[idx].predictions.push(r.predicted_plf);
        keys[idx].push((r.route_id.clone(), r.flight_date, r.days_before_departure));
    }
    if keys.iter().any(|k| *k != keys[0]) {
        return Err(Failure::Other(format!("{}: models were scored on different samples", path.display())));
    }
    info!("analysing seed {seed}: {} models, {} samples", models.len(), records.len());
    Ok((models, records))
}

fn horizon(a: &HorizonArgs) -> Result<Io, Failure> {
    let (models, records) = read_predictions(&a.predictions, a.run_seed)?;
    let d_range: Vec<u32> = (0..=a.d_max).collect();
    let report = horizon_analysis(&models, &records, &d_range)?;
    fs::create_dir_all(&a.out_dir)?;
    let csv_path = a.out_dir.join("horizon.csv");
    write_horizon_csv(&csv_path, &report)?;
    let mut outputs = vec![csv_path];
    outputs.extend(write_horizon_plots(&a.out_dir, &report)?);
    Ok(Io { inputs: vec![a.predictions.clone()], outputs })
}

fn categories(a: &CategoriesArgs) -> Result<Io, Failure> {
    require([a.routes.as_path(), a.airports.as_path()])?;
    let (models, records) = read_predictions(&a.predictions, a.run_seed)?;
    let airports = load_airports(&a.airports)?;
    let routes = load_routes(&a.routes, &airports)?;
    let report = category_report(&models, &records, &routes)?;
    fs::create_dir_all(&a.out_dir)?;
    let csv_path = a.out_dir.join("categories.csv");
    write_categories_csv(&csv_path, &report)?;
    let mut outputs = vec![csv_path];
    outputs.extend(write_category_plots(&a.out_dir, &report)?);
    Ok(Io { inputs: vec![a.predictions.clone(), a.routes.clone(), a.airports.clone()], outputs })
}

fn sweep(a: &SweepArgs, seed: u64) -> Result<Io, Failure> {
    if a.jobs == 0 {
        return Err(Failure::Args("--jobs must be at least 1".into()));
    }
    require([a.features.as_path()])?;
    let mut inputs = vec![a.features.clone()];
    let fs_cols = feature_set(a.feature_set.as_ref(), &mut inputs)?;
    let rows: Vec<FeatureRow> = read_features_csv(&a.features)?;
    let defaults = SweepConfig::default();
    let cfg = SweepConfig {
        sizes: if a.sizes.is_empty() { defaults.sizes.clone() } else { a.sizes.clone() },
        variants: if a.variants.is_empty() { defaults.variants.clone() } else { a.variants.clone() },
        max_epochs: a.epochs,
        seed,
        d_range: (0..=a.d_max).collect(),
        ..defaults
    };
    let per_variant: Vec<SweepConfig> =
        cfg.variants.iter().map(|&v| SweepConfig { variants: vec![v], ..cfg.clone() }).collect();
    let mut results = Vec::with_capacity(per_variant.len());
    for chunk in per_variant.chunks(a.jobs) {
        let chunk_results: Vec<_> = std::thread::scope(|s| {
            let handles: Vec<_> =
                chunk.iter().map(|c| s.spawn(|| window_sweep(&rows, &fs_cols, c))).collect();
            handles.into_iter().map(|h| h.join().expect("sweep worker panicked")).collect()
        });
        results.extend(chunk_results);
    }
    let mut table = Vec::new();
    for r in results {
        table.extend(r?);
    }
    ensure_parent(&a.out)?;
    write_sweep_csv(&a.out, &table)?;
    Ok(Io { inputs, outputs: vec![a.out.clone()] })
}

#[derive(Debug, Serialize)]
struct ForecastRow {
    route_id: String,
    flight_date: NaiveDate,
    days_before_departure: u32,
    predicted_plf: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    predicted_passengers: Option<i64>,
}

/// Passenger count recovered from a PLF forecast in percentage points.
pub fn passengers(plf: f64, capacity: u32) -> i64 {
    (plf / 100.0 * capacity as f64).round() as i64
}

fn predict(a: &PredictArgs) -> Result<Io, Failure> {
    require([a.checkpoint.as_path()])?;
    let (model, meta) = load_checkpoint(&a.checkpoint)?;
    let scaler: Scaler = serde_json::from_value(meta["scaler"].clone())
        .map_err(|e| Failure::Other(format!("checkpoint metadata lacks a scaler: {e}")))?;
    let ckpt_features: FeatureSet = serde_json::from_value(meta["features"].clone())
        .map_err(|e| Failure::Other(format!("checkpoint metadata lacks a feature set: {e}")))?;
    let (samples, fs_cols, window, mut inputs) = read_sequences(&a.sequences)?;
    if fs_cols != ckpt_features {
        return Err(Failure::Args("sequence features differ from the checkpoint's".into()));
    }
    let mut chosen: Vec<SequenceSample> = match a.partition {
        Partition::All => samples,
        Partition::Test => {
            let corpus = chronological_split(samples.clone(), DEFAULT_RATIOS, fs_cols, window)?;
            let keys: HashSet<(&str, NaiveDate, u32)> =
                corpus.test.iter().map(|s| (s.route_id.as_str(), s.flight_date, s.days_before_departure)).collect();
            samples
                .into_iter()
                .filter(|s| keys.contains(&(s.route_id.as_str(), s.flight_date, s.days_before_departure)))
                .collect()
        }
    };
    for s in &mut chosen {
        scaler.scale_sample(s);
    }
    let plf = predict_plf(&model, &chosen, &scaler)?;
    ensure_parent(&a.out)?;
    let mut wtr = csv::Writer::from_path(&a.out)?;
    for (s, &p) in chosen.iter().zip(&plf) {
        wtr.serialize(ForecastRow {
            route_id: s.route_id.clone(),
            flight_date: s.flight_date,
            days_before_departure: s.days_before_departure,
            predicted_plf: p,
            predicted_passengers: a.capacity.map(|c| passengers(p, c)),
        })?;
    }
    wtr.flush()?;
    info!("{} forecasts written", plf.len());
    inputs.insert(0, a.checkpoint.clone());
    Ok(Io { inputs, outputs: vec![a.out.clone()] })
}
