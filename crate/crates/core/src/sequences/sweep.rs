use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{assemble_samples, chronological_split, FeatureSet, WindowConfig, DEFAULT_RATIOS};
use crate::features::FeatureRow;
use crate::neural::{InputDims, ModelSpec, Variant};
use crate::training::{fit, TrainConfig, TrainError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub sizes: Vec<usize>,
    /// Only pairs with `H == V`.
    pub symmetric: bool,
    pub variants: Vec<Variant>,
    pub max_epochs: usize,
    pub seed: u64,
    pub stride: usize,
    pub d_range: Vec<u32>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            sizes: (3..=18).collect(),
            symmetric: true,
            variants: vec![Variant::SlstmH, Variant::SlstmV, Variant::Dlstm],
            max_epochs: 10,
            seed: 0,
            stride: 1,
            d_range: (0..=21).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub variant: Variant,
    pub horizontal: usize,
    pub vertical: usize,
    pub samples: usize,
    pub val_loss: f64,
}

/// Trains every variant on every `(H, V)` pair with a fixed epoch budget.
/// Rows come back grouped by variant, best validation loss first.
pub fn window_sweep(rows: &[FeatureRow], features: &FeatureSet, cfg: &SweepConfig) -> Result<Vec<SweepRow>, TrainError> {
    let mut pairs = Vec::new();
    for &h in &cfg.sizes {
        for &v in &cfg.sizes {
            if !cfg.symmetric || h == v {
                pairs.push((h, v));
            }
        }
    }
    let mut out = Vec::new();
    for &variant in &cfg.variants {
        let mut group = Vec::new();
        for &(h, v) in &pairs {
            let window = WindowConfig { horizontal: h, vertical: v, stride: cfg.stride, d_range: cfg.d_range.clone() };
            let assembly = assemble_samples(rows, &window, features)?;
            let n = assembly.samples.len();
            let corpus = chronological_split(assembly.samples, DEFAULT_RATIOS, features.clone(), window)?;
            let dims = InputDims {
                horizontal_steps: h,
                horizontal_features: features.horizontal.len(),
                vertical_steps: v,
                vertical_features: features.vertical.len(),
            };
            let spec = ModelSpec::preset(variant, dims);
            let train = TrainConfig { max_epochs: cfg.max_epochs, ..TrainConfig::for_spec(&spec, cfg.seed) };
            let (_, log) = fit(&spec, &corpus, &train)?;
            group.push(SweepRow { variant, horizontal: h, vertical: v, samples: n, val_loss: log.best_val_loss });
        }
        group.sort_by(|a, b| a.val_loss.total_cmp(&b.val_loss));
        out.extend(group);
    }
    Ok(out)
}

pub fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<(), TrainError> {
    let mut s = String::from("variant,horizontal,vertical,samples,val_loss,rank\n");
    let mut rank = 0;
    let mut prev = None;
    for r in rows {
        rank = if prev == Some(r.variant) { rank + 1 } else { 1 };
        prev = Some(r.variant);
        s.push_str(&format!("{},{},{},{},{},{}\n", r.variant, r.horizontal, r.vertical, r.samples, r.val_loss, rank));
    }
    std::fs::write(path, s)?;
    Ok(())
}
