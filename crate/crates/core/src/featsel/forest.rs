//! CART regression forest with variance impurity and mean-decrease-in-impurity
//! importances. Shared by feature selection and the forest baseline.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    Sqrt,
    All,
    Count(usize),
}

impl MaxFeatures {
    fn resolve(self, f: usize) -> usize {
        let k = match self {
            MaxFeatures::Sqrt => (f as f64).sqrt().round() as usize,
            MaxFeatures::All => f,
            MaxFeatures::Count(k) => k,
        };
        k.clamp(1, f.max(1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestConfig {
    pub n_trees: usize,
    /// Depth 0 grows single-leaf trees.
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub max_features: MaxFeatures,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self { n_trees: 100, max_depth: 12, min_samples_leaf: 1, max_features: MaxFeatures::Sqrt, bootstrap: true, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Leaf(f64),
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionTree {
    nodes: Vec<Node>,
}

impl RegressionTree {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf(v) => return v,
                Node::Split { feature, threshold, left, right } => {
                    i = if row[feature] <= threshold { left } else { right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf(_) => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

struct Grower<'a> {
    columns: &'a [Vec<f64>],
    y: &'a [f64],
    cfg: &'a ForestConfig,
    mtry: usize,
    nodes: Vec<Node>,
    /// Raw total SSE decrease per feature.
    decrease: Vec<f64>,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    gain: f64,
    /// Position in the feature-sorted index list where the right child starts.
    cut: usize,
    order: Vec<usize>,
}

impl Grower<'_> {
    fn grow(&mut self, idx: Vec<usize>, depth: usize, rng: &mut ChaCha8Rng) -> usize {
        let n = idx.len() as f64;
        let sum: f64 = idx.iter().map(|&i| self.y[i]).sum();
        let mean = sum / n;
        let slot = self.nodes.len();
        self.nodes.push(Node::Leaf(mean));
        if depth >= self.cfg.max_depth || idx.len() < 2 * self.cfg.min_samples_leaf.max(1) {
            return slot;
        }
        let Some(best) = self.best_split(&idx, sum, rng) else { return slot };
        self.decrease[best.feature] += best.gain;
        let (l, r) = best.order.split_at(best.cut);
        let left = self.grow(l.to_vec(), depth + 1, rng);
        let right = self.grow(r.to_vec(), depth + 1, rng);
        self.nodes[slot] = Node::Split { feature: best.feature, threshold: best.threshold, left, right };
        slot
    }

    fn best_split(&self, idx: &[usize], sum: f64, rng: &mut ChaCha8Rng) -> Option<BestSplit> {
        let n = idx.len();
        let min_leaf = self.cfg.min_samples_leaf.max(1);
        let parent = sum * sum / n as f64;
        let mut best: Option<BestSplit> = None;
        if self.columns.is_empty() {
            return None;
        }
        for f in sample(rng, self.columns.len(), self.mtry).into_iter() {
            let x = &self.columns[f];
            let mut order = idx.to_vec();
            order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
            let mut left_sum = 0.0;
            let mut found: Option<(f64, usize)> = None;
            for cut in 1..n {
                left_sum += self.y[order[cut - 1]];
                if cut < min_leaf || n - cut < min_leaf || x[order[cut - 1]] == x[order[cut]] {
                    continue;
                }
                let right_sum = sum - left_sum;
                let gain = left_sum * left_sum / cut as f64 + right_sum * right_sum / (n - cut) as f64 - parent;
                if found.is_none_or(|(g, _)| gain > g) {
                    found = Some((gain, cut));
                }
            }
            let Some((gain, cut)) = found else { continue };
            if gain > 1e-12 * parent.abs().max(1.0) && best.as_ref().is_none_or(|b| gain > b.gain) {
                let threshold = 0.5 * (x[order[cut - 1]] + x[order[cut]]);
                best = Some(BestSplit { feature: f, threshold, gain, cut, order });
            }
        }
        best
    }
}

/// Fits one tree on `rows` (indices into the columns, repeats allowed).
/// Returns the tree and its raw per-feature SSE decrease.
fn fit_tree(
    columns: &[Vec<f64>],
    y: &[f64],
    rows: Vec<usize>,
    cfg: &ForestConfig,
    rng: &mut ChaCha8Rng,
) -> (RegressionTree, Vec<f64>) {
    let mut g = Grower {
        columns,
        y,
        cfg,
        mtry: cfg.max_features.resolve(columns.len()),
        nodes: Vec::new(),
        decrease: vec![0.0; columns.len()],
    };
    g.grow(rows, 0, rng);
    (RegressionTree { nodes: g.nodes }, g.decrease)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RandomForest {
    trees: Vec<RegressionTree>,
    importances: Vec<f64>,
}

fn tree_seed(seed: u64, t: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(t as u64)
}

impl RandomForest {
    /// Fits on column-major data. Trees are grown on worker threads; each has
    /// its own seeded generator, so the result does not depend on scheduling.
    pub fn fit(columns: &[Vec<f64>], y: &[f64], cfg: &ForestConfig) -> Self {
        let n = y.len();
        assert!(n > 0, "empty training set");
        assert!(columns.iter().all(|c| c.len() == n), "ragged columns");
        let workers = std::thread::available_parallelism().map_or(1, |p| p.get()).min(cfg.n_trees.max(1));
        let mut slots: Vec<Option<(RegressionTree, Vec<f64>)>> = vec![None; cfg.n_trees];
        let chunk = cfg.n_trees.div_ceil(workers.max(1)).max(1);
        std::thread::scope(|s| {
            for (c, out) in slots.chunks_mut(chunk).enumerate() {
                s.spawn(move || {
                    for (j, slot) in out.iter_mut().enumerate() {
                        let t = c * chunk + j;
                        let mut rng = ChaCha8Rng::seed_from_u64(tree_seed(cfg.seed, t));
                        let rows: Vec<usize> =
                            if cfg.bootstrap { (0..n).map(|_| rng.random_range(0..n)).collect() } else { (0..n).collect() };
                        *slot = Some(fit_tree(columns, y, rows, cfg, &mut rng));
                    }
                });
            }
        });
        let mut trees = Vec::with_capacity(cfg.n_trees);
        let mut importances = vec![0.0; columns.len()];
        for (tree, dec) in slots.into_iter().map(|s| s.expect("tree grown")) {
            let total: f64 = dec.iter().sum();
            if total > 0.0 {
                for (imp, d) in importances.iter_mut().zip(&dec) {
                    *imp += d / total;
                }
            }
            trees.push(tree);
        }
        let total: f64 = importances.iter().sum();
        if total > 0.0 {
            importances.iter_mut().for_each(|v| *v /= total);
        }
        Self { trees, importances }
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict_row(row)).sum::<f64>() / self.trees.len() as f64
    }

    /// Predictions for column-major data.
    pub fn predict(&self, columns: &[Vec<f64>]) -> Vec<f64> {
        let n = columns.first().map_or(0, Vec::len);
        let mut row = vec![0.0; columns.len()];
        (0..n)
            .map(|i| {
                for (r, c) in row.iter_mut().zip(columns) {
                    *r = c[i];
                }
                self.predict_row(&row)
            })
            .collect()
    }

    /// Mean impurity decrease per feature, summing to 1 unless no tree split.
    pub fn importances(&self) -> &[f64] {
        &self.importances
    }

    pub fn trees(&self) -> &[RegressionTree] {
        &self.trees
    }
}
