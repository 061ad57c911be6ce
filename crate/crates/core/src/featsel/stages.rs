//! The seven selection stages as standalone functions over column-major data.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::FeatselError;
use crate::linalg::{r_squared, ridge_fit, solve_spd};

/// Pearson correlation, `None` when either column is constant.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Why a feature left the pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DropRecord {
    pub feature: String,
    pub stage: u8,
    pub rule: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PruneOutcome {
    /// Surviving column indices, in input order.
    pub kept: Vec<usize>,
    pub dropped: Vec<DropRecord>,
    /// Full correlation matrix over the input; `None` for constant columns.
    pub matrix: Vec<Vec<Option<f64>>>,
}

/// Stage 1. Features are visited from highest to lowest priority (`rank`,
/// smaller first); one is kept unless it correlates above `threshold` in
/// absolute value with an already kept feature. Pairs where both features
/// are `protected` are exempt. Constant columns are always dropped.
pub fn stage1_pearson_prune(
    names: &[String],
    columns: &[Vec<f64>],
    threshold: f64,
    rank: &[usize],
    protected: &[bool],
) -> Result<PruneOutcome, FeatselError> {
    let f = columns.len();
    if columns.first().is_none_or(|c| c.len() < 2) {
        return Err(FeatselError::TooFewRows { needed: 2, got: columns.first().map_or(0, Vec::len) });
    }
    let mut matrix = vec![vec![None; f]; f];
    for i in 0..f {
        for j in i..f {
            let r = if i == j { pearson(&columns[i], &columns[i]) } else { pearson(&columns[i], &columns[j]) };
            matrix[i][j] = r;
            matrix[j][i] = r;
        }
    }
    let mut order: Vec<usize> = (0..f).collect();
    order.sort_by_key(|&i| (rank[i], i));
    let mut kept: Vec<usize> = Vec::new();
    let mut dropped = Vec::new();
    for &i in &order {
        if matrix[i][i].is_none() {
            dropped.push(DropRecord {
                feature: names[i].clone(),
                stage: 1,
                rule: "constant column, correlation undefined".into(),
            });
            continue;
        }
        let clash = kept.iter().find_map(|&k| {
            let r = matrix[i][k]?;
            (r.abs() > threshold && !(protected[i] && protected[k])).then_some((k, r))
        });
        match clash {
            Some((k, r)) => dropped.push(DropRecord {
                feature: names[i].clone(),
                stage: 1,
                rule: format!("|r| = {:.4} > {threshold} with higher-priority {}", r.abs(), names[k]),
            }),
            None => kept.push(i),
        }
    }
    kept.sort_unstable();
    Ok(PruneOutcome { kept, dropped, matrix })
}

/// Equal-frequency bin labels. Tied values share the bin of their first rank,
/// so a constant column falls into a single bin.
pub fn equal_frequency_bins(x: &[f64], bins: usize) -> Vec<usize> {
    let n = x.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut out = vec![0; n];
    let mut first = 0;
    for r in 0..n {
        if r > 0 && x[order[r]] != x[order[r - 1]] {
            first = r;
        }
        out[order[r]] = first * bins / n;
    }
    out
}

/// Plug-in mutual information (nats) between two discrete label vectors.
pub fn discrete_mutual_information(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len() as f64;
    let ka = a.iter().max().map_or(0, |m| m + 1);
    let kb = b.iter().max().map_or(0, |m| m + 1);
    let mut joint = vec![0usize; ka * kb];
    let mut pa = vec![0usize; ka];
    let mut pb = vec![0usize; kb];
    for (&i, &j) in a.iter().zip(b) {
        joint[i * kb + j] += 1;
        pa[i] += 1;
        pb[j] += 1;
    }
    let mut mi = 0.0;
    for i in 0..ka {
        for j in 0..kb {
            let c = joint[i * kb + j];
            if c > 0 {
                let c = c as f64;
                mi += c / n * (c * n / (pa[i] as f64 * pb[j] as f64)).ln();
            }
        }
    }
    mi.max(0.0)
}

/// Stage 2. Binned mutual information of each column with the target.
pub fn stage2_mutual_information(columns: &[Vec<f64>], target: &[f64], bins: usize) -> Vec<f64> {
    let tb = equal_frequency_bins(target, bins);
    columns.iter().map(|c| discrete_mutual_information(&equal_frequency_bins(c, bins), &tb)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SfsConfig {
    pub max_k: usize,
    pub lambda: f64,
    /// Selection stops once the best candidate improves validation R² by less.
    pub min_gain: f64,
}

impl Default for SfsConfig {
    fn default() -> Self {
        Self { max_k: 20, lambda: 1.0, min_gain: 1e-4 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SfsStep {
    pub feature: usize,
    pub val_r2: f64,
    pub gain: f64,
}

fn column_stats(c: &[f64]) -> (f64, f64) {
    let n = c.len() as f64;
    let mean = c.iter().sum::<f64>() / n;
    let var = c.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt();
    (mean, if sd > 0.0 { sd } else { 1.0 })
}

/// Stage 4. Greedy forward selection for a ridge regressor fitted on the
/// training rows and scored by R² on the validation rows. Columns are
/// standardised with training statistics.
pub fn stage4_sfs(
    train: &[Vec<f64>],
    train_y: &[f64],
    val: &[Vec<f64>],
    val_y: &[f64],
    cfg: &SfsConfig,
) -> Vec<SfsStep> {
    let f = train.len();
    let n = train_y.len();
    let stats: Vec<(f64, f64)> = train.iter().map(|c| column_stats(c)).collect();
    let z = |c: &[f64], (m, s): (f64, f64)| -> Vec<f64> { c.iter().map(|v| (v - m) / s).collect() };
    let zt: Vec<Vec<f64>> = train.iter().zip(&stats).map(|(c, &s)| z(c, s)).collect();
    let zv: Vec<Vec<f64>> = val.iter().zip(&stats).map(|(c, &s)| z(c, s)).collect();
    let y_mean = train_y.iter().sum::<f64>() / n as f64;
    // training columns have zero mean after standardisation
    let mut gram = vec![0.0; f * f];
    for i in 0..f {
        for j in i..f {
            let g: f64 = zt[i].iter().zip(&zt[j]).map(|(a, b)| a * b).sum();
            gram[i * f + j] = g;
            gram[j * f + i] = g;
        }
    }
    let xty: Vec<f64> = zt.iter().map(|c| c.iter().zip(train_y).map(|(a, y)| a * (y - y_mean)).sum()).collect();

    let score = |set: &[usize]| -> f64 {
        let k = set.len();
        let mut a = vec![0.0; k * k];
        for (p, &i) in set.iter().enumerate() {
            for (q, &j) in set.iter().enumerate() {
                a[p * k + q] = gram[i * f + j];
            }
            a[p * k + p] += cfg.lambda;
        }
        let b: Vec<f64> = set.iter().map(|&i| xty[i]).collect();
        let Some(coef) = solve_spd(&a, &b, k) else { return f64::NEG_INFINITY };
        let pred: Vec<f64> = (0..val_y.len())
            .map(|r| y_mean + set.iter().zip(&coef).map(|(&i, c)| c * zv[i][r]).sum::<f64>())
            .collect();
        r_squared(&pred, val_y).unwrap_or(f64::NEG_INFINITY)
    };

    let mut selected: Vec<usize> = Vec::new();
    let mut steps = Vec::new();
    let mut current = score(&[]);
    while selected.len() < cfg.max_k.min(f) {
        let mut best: Option<(usize, f64)> = None;
        for c in (0..f).filter(|c| !selected.contains(c)) {
            let mut trial = selected.clone();
            trial.push(c);
            let s = score(&trial);
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((c, s));
            }
        }
        let Some((c, s)) = best else { break };
        let gain = s - current;
        if !(gain >= cfg.min_gain) {
            break;
        }
        selected.push(c);
        steps.push(SfsStep { feature: c, val_r2: s, gain });
        current = s;
    }
    steps
}

pub const VIF_CAP: f64 = 1e6;
pub const VIF_RIDGE: f64 = 1e-8;

/// Stage 5. Variance inflation factor of each column against all others.
pub fn stage5_vif(columns: &[Vec<f64>]) -> Result<Vec<f64>, FeatselError> {
    let f = columns.len();
    let n = columns.first().map_or(0, Vec::len);
    if n < f + 1 {
        return Err(FeatselError::TooFewRows { needed: f + 1, got: n });
    }
    let stats: Vec<(f64, f64)> = columns.iter().map(|c| column_stats(c)).collect();
    let z: Vec<Vec<f64>> =
        columns.iter().zip(&stats).map(|(c, &(m, s))| c.iter().map(|v| (v - m) / s).collect()).collect();
    let mut out = Vec::with_capacity(f);
    for j in 0..f {
        if f == 1 {
            out.push(1.0);
            continue;
        }
        let rows: Vec<Vec<f64>> =
            (0..n).map(|r| (0..f).filter(|&k| k != j).map(|k| z[k][r]).collect()).collect();
        let r2 = match ridge_fit(&rows, &z[j], VIF_RIDGE) {
            Some(fit) => {
                let pred: Vec<f64> = rows.iter().map(|r| fit.predict_row(r)).collect();
                r_squared(&pred, &z[j]).unwrap_or(0.0)
            }
            None => 1.0,
        };
        out.push(if r2 >= 1.0 - 1e-6 { VIF_CAP } else { (1.0 / (1.0 - r2)).clamp(1.0, VIF_CAP) });
    }
    Ok(out)
}

/// Splits `name_H3` into `("name", Some(('H', 3)))`.
pub fn parse_suffix(name: &str) -> (&str, Option<(char, u32)>) {
    if let Some(pos) = name.rfind('_') {
        let tail = &name[pos + 1..];
        let mut chars = tail.chars();
        if let Some(s @ ('H' | 'V')) = chars.next() {
            let digits = chars.as_str();
            if !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit()) {
                if let Ok(k) = digits.parse() {
                    return (&name[..pos], Some((s, k)));
                }
            }
        }
    }
    (name, None)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DedupEntry {
    pub base: String,
    /// The kept temporal variant (the full name).
    pub variant: String,
    /// How often the kept variant occurred.
    pub count: usize,
}

/// Stage 6. Collapses temporal variants onto their base feature, keeping the
/// most frequent variant; ties go to the smaller offset, then `H` before `V`.
/// Bases come out in order of first appearance.
pub fn stage6_dedup(names: &[String]) -> Vec<DedupEntry> {
    let mut bases: Vec<&str> = Vec::new();
    let mut counts: Vec<(&str, usize)> = Vec::new();
    for n in names {
        let (base, _) = parse_suffix(n);
        if !bases.contains(&base) {
            bases.push(base);
        }
        match counts.iter_mut().find(|(v, _)| v == n) {
            Some((_, c)) => *c += 1,
            None => counts.push((n, 1)),
        }
    }
    let key = |v: &str| match parse_suffix(v).1 {
        Some((s, k)) => (k, s == 'V'),
        None => (0, false),
    };
    bases
        .into_iter()
        .map(|base| {
            let (variant, count) = counts
                .iter()
                .filter(|(v, _)| parse_suffix(v).0 == base)
                .min_by(|a, b| b.1.cmp(&a.1).then_with(|| key(a.0).cmp(&key(b.0))))
                .copied()
                .expect("base has a variant");
            DedupEntry { base: base.to_string(), variant: variant.to_string(), count }
        })
        .collect()
}

/// Borda points of each item over several score rankings (higher score is
/// better). An item earns one point per item it beats and half per tie.
pub fn borda_points(rankings: &[Vec<f64>]) -> Vec<f64> {
    let m = rankings.first().map_or(0, Vec::len);
    let mut points = vec![0.0; m];
    for scores in rankings {
        assert_eq!(scores.len(), m, "rankings must cover the same items");
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
        let mut r = 0;
        while r < m {
            let mut end = r + 1;
            while end < m && scores[order[end]].total_cmp(&scores[order[r]]) == Ordering::Equal {
                end += 1;
            }
            // items below the tie group are beaten; the rest of the group ties
            let p = r as f64 + 0.5 * (end - r - 1) as f64;
            for &i in &order[r..end] {
                points[i] += p;
            }
            r = end;
        }
    }
    points
}

/// Item indices by descending Borda points, ties by index.
pub fn borda_order(rankings: &[Vec<f64>]) -> Vec<usize> {
    let points = borda_points(rankings);
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| points[b].total_cmp(&points[a]).then(a.cmp(&b)));
    order
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalSplit {
    pub horizontal: Vec<String>,
    pub vertical: Vec<String>,
    pub warnings: Vec<String>,
}

/// A ranked base feature and the streams it may enter.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolEntry {
    pub base: String,
    pub horizontal: bool,
    pub vertical: bool,
}

/// Stage 7. Takes the first `h_target` horizontal-eligible and `v_target`
/// vertical-eligible entries of the ranked pool.
pub fn stage7_final_split(ranked: &[PoolEntry], h_target: usize, v_target: usize) -> FinalSplit {
    let mut warnings = Vec::new();
    let mut take = |keep: fn(&PoolEntry) -> bool, target: usize, stream: &str| {
        let pool: Vec<String> = ranked.iter().filter(|e| keep(e)).map(|e| e.base.clone()).collect();
        if pool.len() < target {
            warnings.push(format!("{stream} pool has {} features, fewer than the target {target}; taking all", pool.len()));
        }
        pool.into_iter().take(target).collect::<Vec<_>>()
    };
    let horizontal = take(|e| e.horizontal, h_target, "horizontal");
    let vertical = take(|e| e.vertical, v_target, "vertical");
    FinalSplit { horizontal, vertical, warnings }
}
