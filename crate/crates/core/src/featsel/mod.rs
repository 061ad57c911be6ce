//! Seven-stage feature selection, run separately on the horizontal and
//! vertical streams.
//!
//! Each stream is turned into a lagged design: every eligible feature
//! appears once per window offset as `name_H<k>` (k-th most recent snapshot
//! of the flight, `k = 1` at the prediction day) or `name_V<k>` (k-th most
//! recent earlier flight at the same days-before-departure). The target is
//! the departure-day PLF. Stages:
//!
//! Stages 1-5 run per stream, 6 and 7 on the survivors of both:
//!
//! 1. Pearson prune at |r| > 0.90, lower domain priority dropped.
//! 2. Binned mutual information with the target (scores only).
//! 3. Random-forest impurity importance (scores only).
//! 4. Ridge forward selection on a chronological holdout, at most 20. The
//!    stage keeps every feature picked by at least one method: the MI top
//!    list, the RF top list or forward selection.
//! 5. Variance inflation factors (reported, nothing dropped).
//! 6. Suffix deduplication over both streams. A variant's frequency is the
//!    number of methods that picked it.
//! 7. Borda aggregation over MI, RF and selection order, then the top 8
//!    horizontal and top 9 vertical features. Shared features of the
//!    default selection may enter both lists; any other feature goes to
//!    the stream of its kept variant.

mod forest;
mod stages;


use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::features::roster::{eligibility, TABLE_HORIZONTAL, TABLE_VERTICAL};
use crate::features::{feature_index, FeatureRow, FEATURE_COUNT, ROSTER};
use crate::sequences::{
    assemble_samples, chronological_split, FeatureSet, SequenceError, SequenceSample, WindowConfig, DEFAULT_RATIOS,
};

pub use forest::{ForestConfig, MaxFeatures, RandomForest, RegressionTree};
pub use stages::{
    borda_order, borda_points, discrete_mutual_information, equal_frequency_bins, parse_suffix, pearson,
    stage1_pearson_prune, stage2_mutual_information, stage4_sfs, stage5_vif, stage6_dedup, stage7_final_split,
    DedupEntry, DropRecord, FinalSplit, PoolEntry, PruneOutcome, SfsConfig, SfsStep, VIF_CAP, VIF_RIDGE,
};

#[derive(Debug, thiserror::Error)]
pub enum FeatselError {
    #[error("need at least {needed} rows, got {got}")]
    TooFewRows { needed: usize, got: usize },
    #[error("invalid selection config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Sequence(#[from] SequenceError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stream {
    Horizontal,
    Vertical,
}

impl Stream {
    pub fn suffix(self) -> char {
        match self {
            Stream::Horizontal => 'H',
            Stream::Vertical => 'V',
        }
    }

    /// Roster features this stream may use, in roster order.
    pub fn eligible(self) -> Vec<&'static str> {
        ROSTER
            .iter()
            .filter(|(_, e)| match self {
                Stream::Horizontal => e.horizontal(),
                Stream::Vertical => e.vertical(),
            })
            .map(|(n, _)| *n)
            .collect()
    }
}

/// Column-major design matrix with its target.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    pub names: Vec<String>,
    pub columns: Vec<Vec<f64>>,
    pub target: Vec<f64>,
}

impl Design {
    pub fn rows(&self) -> usize {
        self.target.len()
    }

    pub fn push_column(&mut self, name: impl Into<String>, column: Vec<f64>) {
        assert_eq!(column.len(), self.rows(), "column length");
        self.names.push(name.into());
        self.columns.push(column);
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.names.iter().position(|n| n == name).map(|i| self.columns[i].as_slice())
    }

    fn select(&self, idx: &[usize]) -> Design {
        Design {
            names: idx.iter().map(|&i| self.names[i].clone()).collect(),
            columns: idx.iter().map(|&i| self.columns[i].clone()).collect(),
            target: self.target.clone(),
        }
    }

    /// At most `max_rows` evenly spaced rows.
    pub fn thin(&self, max_rows: usize) -> Design {
        let n = self.rows();
        if n <= max_rows {
            return self.clone();
        }
        let rows: Vec<usize> = (0..max_rows).map(|i| i * n / max_rows).collect();
        Design {
            names: self.names.clone(),
            columns: self.columns.iter().map(|c| rows.iter().map(|&r| c[r]).collect()).collect(),
            target: rows.iter().map(|&r| self.target[r]).collect(),
        }
    }

    /// Flattens one stream of the samples: column `name_<S>k` holds the
    /// value `k - 1` steps back from the newest window row.
    pub fn from_samples(samples: &[SequenceSample], features: &[String], stream: Stream) -> Design {
        let steps = samples.first().map_or(0, |s| match stream {
            Stream::Horizontal => s.horizontal.rows(),
            Stream::Vertical => s.vertical.rows(),
        });
        let mut names = Vec::new();
        let mut columns = Vec::new();
        for (f, name) in features.iter().enumerate() {
            for k in 1..=steps {
                names.push(format!("{name}_{}{k}", stream.suffix()));
                columns.push(
                    samples
                        .iter()
                        .map(|s| {
                            let t = match stream {
                                Stream::Horizontal => &s.horizontal,
                                Stream::Vertical => &s.vertical,
                            };
                            t.row(steps - k)[f]
                        })
                        .collect(),
                );
            }
        }
        Design { names, columns, target: samples.iter().map(|s| s.target_plf).collect() }
    }
}

/// Training and holdout designs of one stream.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamData {
    pub train: Design,
    pub validation: Design,
}

/// Builds the lagged designs of both streams from the training and
/// validation partitions of the chronological split.
pub fn lagged_designs(rows: &[FeatureRow], cfg: &SelectionConfig) -> Result<(StreamData, StreamData), FeatselError> {
    let features = FeatureSet {
        horizontal: Stream::Horizontal.eligible().into_iter().map(String::from).collect(),
        vertical: Stream::Vertical.eligible().into_iter().map(String::from).collect(),
    };
    let window = WindowConfig { horizontal: cfg.horizontal_lags, vertical: cfg.vertical_lags, ..Default::default() };
    let assembly = assemble_samples(rows, &window, &features)?;
    let corpus = chronological_split(assembly.samples, DEFAULT_RATIOS, features.clone(), window)?;
    let build = |names: &[String], stream| StreamData {
        train: Design::from_samples(&corpus.train, names, stream).thin(cfg.max_rows),
        validation: Design::from_samples(&corpus.validation, names, stream).thin(cfg.max_validation_rows),
    };
    Ok((build(&features.horizontal, Stream::Horizontal), build(&features.vertical, Stream::Vertical)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionConfig {
    pub horizontal_lags: usize,
    pub vertical_lags: usize,
    pub pearson_threshold: f64,
    /// Exempt pairs of default-selection features from the Pearson prune.
    pub protect_table_features: bool,
    pub mi_bins: usize,
    /// Size of the MI and RF top lists counted as selections in stage 6.
    pub vote_top: usize,
    pub forest: ForestConfig,
    pub sfs: SfsConfig,
    /// Training rows kept for stages 1-5 (evenly spaced).
    pub max_rows: usize,
    pub max_validation_rows: usize,
    pub horizontal_target: usize,
    pub vertical_target: usize,
    /// Run stages `1..=last_stage` only.
    pub last_stage: u8,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            horizontal_lags: 3,
            vertical_lags: 3,
            pearson_threshold: 0.90,
            protect_table_features: true,
            mi_bins: 16,
            vote_top: 20,
            forest: ForestConfig::default(),
            sfs: SfsConfig::default(),
            max_rows: 6000,
            max_validation_rows: 3000,
            horizontal_target: 8,
            vertical_target: 9,
            last_stage: 7,
        }
    }
}

impl SelectionConfig {
    pub fn validate(&self) -> Result<(), FeatselError> {
        let bad = |m: &str| Err(FeatselError::InvalidConfig(m.into()));
        if self.horizontal_lags == 0 || self.vertical_lags == 0 {
            return bad("lag counts must be positive");
        }
        if !(0.0..=1.0).contains(&self.pearson_threshold) {
            return bad("pearson_threshold must lie in [0, 1]");
        }
        if self.mi_bins < 2 || self.forest.n_trees == 0 || self.sfs.max_k == 0 {
            return bad("mi_bins >= 2, forest.n_trees >= 1 and sfs.max_k >= 1 required");
        }
        if self.sfs.lambda <= 0.0 {
            return bad("sfs.lambda must be positive");
        }
        if !(1..=7).contains(&self.last_stage) {
            return bad("last_stage must lie in 1..=7");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: u8,
    pub name: String,
    pub input: Vec<String>,
    pub output: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PearsonMatrix {
    pub names: Vec<String>,
    pub values: Vec<Vec<Option<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SfsEntry {
    pub feature: String,
    pub val_r2: f64,
    pub gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedBase {
    pub base: String,
    pub variant: String,
    pub borda_points: f64,
}

/// Stages 1-5 of one stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamReport {
    pub stream: Stream,
    pub train_rows: usize,
    pub validation_rows: usize,
    pub stages: Vec<StageRecord>,
    pub dropped: Vec<DropRecord>,
    pub pearson_matrix: PearsonMatrix,
    pub mi_scores: BTreeMap<String, f64>,
    pub rf_importances: BTreeMap<String, f64>,
    pub sfs_order: Vec<SfsEntry>,
    pub vif_values: BTreeMap<String, f64>,
    /// How many of MI, RF and forward selection picked each surviving variant.
    pub votes: BTreeMap<String, usize>,
}

impl StreamReport {
    /// Output of the last executed stage.
    pub fn output(&self) -> &[String] {
        self.stages.last().map_or(&[], |s| s.output.as_slice())
    }
}

/// Stages 6 and 7, run on the variants of both streams together.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PooledReport {
    pub stages: Vec<StageRecord>,
    pub dropped: Vec<DropRecord>,
    pub dedup: Vec<DedupEntry>,
    /// Deduplicated pool in Borda order.
    pub ranking: Vec<RankedBase>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub config: SelectionConfig,
    pub horizontal: StreamReport,
    pub vertical: StreamReport,
    pub pooled: PooledReport,
    pub final_horizontal: Vec<String>,
    pub final_vertical: Vec<String>,
    pub warnings: Vec<String>,
}

impl SelectionReport {
    /// The selected columns, once all seven stages have run.
    pub fn feature_set(&self) -> Option<FeatureSet> {
        (self.config.last_stage == 7 && !self.final_horizontal.is_empty() && !self.final_vertical.is_empty())
            .then(|| FeatureSet { horizontal: self.final_horizontal.clone(), vertical: self.final_vertical.clone() })
    }

    pub fn write_json(&self, path: &Path) -> Result<(), FeatselError> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn read_json(path: &Path) -> Result<Self, FeatselError> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// Features of the default selection; pairs of them are exempt from the
/// correlation prune when protection is on.
fn table_feature(base: &str) -> bool {
    TABLE_HORIZONTAL.contains(&base) || TABLE_VERTICAL.contains(&base) || base == "flight_date_week"
}

/// Shared-stream features of the default selection.
pub fn shared_features() -> Vec<&'static str> {
    TABLE_HORIZONTAL.iter().copied().filter(|n| TABLE_VERTICAL.contains(n)).collect()
}

/// Domain priority of a design column: roster position, then offset.
/// Names outside the roster rank last.
fn priority(name: &str) -> usize {
    let (base, suffix) = parse_suffix(name);
    let k = suffix.map_or(0, |(_, k)| k as usize).min(999);
    feature_index(base).unwrap_or(FEATURE_COUNT) * 1000 + k
}

fn top_names(names: &[String], scores: &[f64], k: usize) -> Vec<String> {
    let mut order: Vec<usize> = (0..names.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order.into_iter().take(k).map(|i| names[i].clone()).collect()
}

/// Stages 1-5 on one stream.
pub fn run_stream(data: &StreamData, stream: Stream, cfg: &SelectionConfig) -> Result<StreamReport, FeatselError> {
    cfg.validate()?;
    let train = &data.train;
    let mut report = StreamReport {
        stream,
        train_rows: train.rows(),
        validation_rows: data.validation.rows(),
        stages: Vec::new(),
        dropped: Vec::new(),
        pearson_matrix: PearsonMatrix { names: train.names.clone(), values: Vec::new() },
        mi_scores: BTreeMap::new(),
        rf_importances: BTreeMap::new(),
        sfs_order: Vec::new(),
        vif_values: BTreeMap::new(),
        votes: BTreeMap::new(),
    };
    let record = |report: &mut StreamReport, stage: u8, name: &str, input: &[String], output: Vec<String>| {
        report.stages.push(StageRecord { stage, name: name.into(), input: input.to_vec(), output });
    };

    // 1
    let rank: Vec<usize> = train.names.iter().map(|n| priority(n)).collect();
    let protected: Vec<bool> =
        train.names.iter().map(|n| cfg.protect_table_features && table_feature(parse_suffix(n).0)).collect();
    let prune = stage1_pearson_prune(&train.names, &train.columns, cfg.pearson_threshold, &rank, &protected)?;
    report.pearson_matrix.values = prune.matrix;
    report.dropped.extend(prune.dropped);
    let p1 = train.select(&prune.kept);
    record(&mut report, 1, "pearson_prune", &train.names, p1.names.clone());
    if cfg.last_stage == 1 {
        return Ok(report);
    }

    // 2
    let mi = stage2_mutual_information(&p1.columns, &p1.target, cfg.mi_bins);
    report.mi_scores = p1.names.iter().cloned().zip(mi.iter().copied()).collect();
    record(&mut report, 2, "mutual_information", &p1.names, p1.names.clone());
    if cfg.last_stage == 2 {
        return Ok(report);
    }

    // 3
    let forest = RandomForest::fit(&p1.columns, &p1.target, &cfg.forest);
    let rf = forest.importances().to_vec();
    report.rf_importances = p1.names.iter().cloned().zip(rf.iter().copied()).collect();
    record(&mut report, 3, "random_forest_importance", &p1.names, p1.names.clone());
    if cfg.last_stage == 3 {
        return Ok(report);
    }

    // 4
    let val_cols: Vec<Vec<f64>> = prune.kept.iter().map(|&i| data.validation.columns[i].clone()).collect();
    let steps = stage4_sfs(&p1.columns, &p1.target, &val_cols, &data.validation.target, &cfg.sfs);
    report.sfs_order = steps
        .iter()
        .map(|s| SfsEntry { feature: p1.names[s.feature].clone(), val_r2: s.val_r2, gain: s.gain })
        .collect();
    // the selection phase ends here: a feature stays when MI, RF or forward
    // selection picked it
    let mi_top = top_names(&p1.names, &mi, cfg.vote_top);
    let rf_top = top_names(&p1.names, &rf, cfg.vote_top);
    let sfs_names: Vec<String> = report.sfs_order.iter().map(|e| e.feature.clone()).collect();
    let mut picked = Vec::new();
    for (i, n) in p1.names.iter().enumerate() {
        let votes = usize::from(mi_top.contains(n)) + usize::from(rf_top.contains(n)) + usize::from(sfs_names.contains(n));
        if votes > 0 {
            picked.push(i);
            report.votes.insert(n.clone(), votes);
        } else {
            report.dropped.push(DropRecord {
                feature: n.clone(),
                stage: 4,
                rule: format!("outside the MI and RF top {} and not picked by forward selection", cfg.vote_top),
            });
        }
    }
    let p4 = p1.select(&picked);
    record(&mut report, 4, "selection_union", &p1.names, p4.names.clone());
    if cfg.last_stage == 4 {
        return Ok(report);
    }

    // 5
    if !p4.names.is_empty() {
        let vif = stage5_vif(&p4.columns)?;
        report.vif_values = p4.names.iter().cloned().zip(vif).collect();
    }
    record(&mut report, 5, "variance_inflation", &p4.names, p4.names.clone());
    Ok(report)
}

/// Stages 6 and 7 over the stage-5 survivors of both streams.
fn pool_streams(
    h: &StreamReport,
    v: &StreamReport,
    cfg: &SelectionConfig,
) -> (PooledReport, Vec<String>, Vec<String>, Vec<String>) {
    let mut pooled = PooledReport::default();
    let input: Vec<String> = h.output().iter().chain(v.output()).cloned().collect();

    // 6
    let mut votes = Vec::new();
    for n in &input {
        let count = h.votes.get(n).or_else(|| v.votes.get(n)).copied().unwrap_or(1);
        votes.extend(std::iter::repeat_n(n.clone(), count));
    }
    pooled.dedup = stage6_dedup(&votes);
    for n in &input {
        if let Some(e) = pooled.dedup.iter().find(|e| e.base == parse_suffix(n).0 && &e.variant != n) {
            pooled.dropped.push(DropRecord {
                feature: n.clone(),
                stage: 6,
                rule: format!("collapsed onto the more frequent variant {}", e.variant),
            });
        }
    }
    let bases: Vec<String> = pooled.dedup.iter().map(|e| e.base.clone()).collect();
    pooled.stages.push(StageRecord { stage: 6, name: "deduplication".into(), input, output: bases.clone() });
    if cfg.last_stage == 6 {
        return (pooled, Vec::new(), Vec::new(), Vec::new());
    }

    // 7: Borda over the stage-1 variants of each base in both streams: best
    // MI, summed forest importance (additive, and near-identical lags split
    // it), earliest forward pick
    let sfs_score = |r: &StreamReport, name: &str| {
        r.sfs_order.iter().position(|s| s.feature == name).map_or(0.0, |pos| (cfg.sfs.max_k - pos) as f64)
    };
    let mut rankings = vec![Vec::new(), Vec::new(), Vec::new()];
    for e in &pooled.dedup {
        let (mut mi, mut rf, mut sfs) = (0.0f64, 0.0, 0.0f64);
        for r in [h, v] {
            for (n, &score) in r.mi_scores.iter().filter(|(n, _)| parse_suffix(n).0 == e.base) {
                mi = mi.max(score);
                rf += r.rf_importances.get(n).copied().unwrap_or(0.0);
                sfs = sfs.max(sfs_score(r, n));
            }
        }
        rankings[0].push(mi);
        rankings[1].push(rf);
        rankings[2].push(sfs);
    }
    let points = borda_points(&rankings);
    pooled.ranking = borda_order(&rankings)
        .into_iter()
        .map(|i| RankedBase {
            base: pooled.dedup[i].base.clone(),
            variant: pooled.dedup[i].variant.clone(),
            borda_points: points[i],
        })
        .collect();

    let shared = shared_features();
    let entries: Vec<PoolEntry> = pooled
        .ranking
        .iter()
        .map(|r| {
            let (horizontal, vertical) = if shared.contains(&r.base.as_str()) {
                (true, true)
            } else {
                match parse_suffix(&r.variant).1 {
                    Some((s, _)) => (s == 'H', s == 'V'),
                    None => match feature_index(&r.base).map(eligibility) {
                        Some(e) => (e.horizontal(), !e.horizontal()),
                        None => (true, false),
                    },
                }
            };
            PoolEntry { base: r.base.clone(), horizontal, vertical }
        })
        .collect();
    let split = stage7_final_split(&entries, cfg.horizontal_target, cfg.vertical_target);
    for w in &split.warnings {
        log::warn!("{w}");
    }
    for e in &entries {
        if !split.horizontal.contains(&e.base) && !split.vertical.contains(&e.base) {
            pooled.dropped.push(DropRecord {
                feature: e.base.clone(),
                stage: 7,
                rule: "ranked below the stream targets".into(),
            });
        }
    }
    let mut output = split.horizontal.clone();
    output.extend(split.vertical.iter().filter(|b| !split.horizontal.contains(b)).cloned());
    pooled.stages.push(StageRecord { stage: 7, name: "final_split".into(), input: bases, output });
    (pooled, split.horizontal, split.vertical, split.warnings)
}

/// Runs the pipeline on prepared designs.
pub fn select_from_designs(
    horizontal: &StreamData,
    vertical: &StreamData,
    cfg: &SelectionConfig,
) -> Result<SelectionReport, FeatselError> {
    let h = run_stream(horizontal, Stream::Horizontal, cfg)?;
    let v = run_stream(vertical, Stream::Vertical, cfg)?;
    let (pooled, final_horizontal, final_vertical, warnings) =
        if cfg.last_stage >= 6 { pool_streams(&h, &v, cfg) } else { Default::default() };
    Ok(SelectionReport {
        config: cfg.clone(),
        horizontal: h,
        vertical: v,
        pooled,
        final_horizontal,
        final_vertical,
        warnings,
    })
}

/// Runs the full pipeline on a feature table.
pub fn select_features(rows: &[FeatureRow], cfg: &SelectionConfig) -> Result<SelectionReport, FeatselError> {
    cfg.validate()?;
    let (h, v) = lagged_designs(rows, cfg)?;
    select_from_designs(&h, &v, cfg)
}
