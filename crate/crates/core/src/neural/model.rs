use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::attention::BatchedAttention;
use super::dense::{dropout, relu_backward, relu_in_place, DenseLayer, Mode};
use super::fusion::{GateCache, GateLayer};
use super::lstm::{LstmCache, LstmLayer, SeqBatch};
use super::{NeuralError, Params, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "SLSTM-H")]
    SlstmH,
    #[serde(rename = "SLSTM-V")]
    SlstmV,
    #[serde(rename = "SLSTM-C")]
    SlstmC,
    #[serde(rename = "DLSTM")]
    Dlstm,
    #[serde(rename = "DLSTM-SA")]
    DlstmSa,
    #[serde(rename = "DLSTM-CA")]
    DlstmCa,
    #[serde(rename = "DLSTM-HA")]
    DlstmHa,
    #[serde(rename = "DLSTM-HAGF")]
    DlstmHagf,
    #[serde(rename = "DLSTM-HARF")]
    DlstmHarf,
    #[serde(rename = "DLSTM-HAGFRF")]
    DlstmHagfrf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Attention {
    None,
    SelfOnly,
    Cross,
    Hierarchical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Fusion {
    Concat,
    Residual,
    Gated,
    GatedResidual,
}

impl Variant {
    pub const ALL: [Variant; 10] = [
        Variant::SlstmH,
        Variant::SlstmV,
        Variant::SlstmC,
        Variant::Dlstm,
        Variant::DlstmSa,
        Variant::DlstmCa,
        Variant::DlstmHa,
        Variant::DlstmHagf,
        Variant::DlstmHarf,
        Variant::DlstmHagfrf,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::SlstmH => "SLSTM-H",
            Variant::SlstmV => "SLSTM-V",
            Variant::SlstmC => "SLSTM-C",
            Variant::Dlstm => "DLSTM",
            Variant::DlstmSa => "DLSTM-SA",
            Variant::DlstmCa => "DLSTM-CA",
            Variant::DlstmHa => "DLSTM-HA",
            Variant::DlstmHagf => "DLSTM-HAGF",
            Variant::DlstmHarf => "DLSTM-HARF",
            Variant::DlstmHagfrf => "DLSTM-HAGFRF",
        }
    }

    pub fn is_dual(self) -> bool {
        !matches!(self, Variant::SlstmH | Variant::SlstmV | Variant::SlstmC)
    }

    pub fn has_attention(self) -> bool {
        self.attention() != Attention::None
    }

    fn attention(self) -> Attention {
        match self {
            Variant::DlstmSa => Attention::SelfOnly,
            Variant::DlstmCa => Attention::Cross,
            Variant::DlstmHa | Variant::DlstmHagf | Variant::DlstmHarf | Variant::DlstmHagfrf => Attention::Hierarchical,
            _ => Attention::None,
        }
    }

    fn fusion(self) -> Fusion {
        match self {
            Variant::DlstmHarf => Fusion::Residual,
            Variant::DlstmHagf => Fusion::Gated,
            Variant::DlstmHagfrf => Fusion::GatedResidual,
            _ => Fusion::Concat,
        }
    }

    fn streams(self) -> &'static [Stream] {
        match self {
            Variant::SlstmH => &[Stream::Horizontal],
            Variant::SlstmV => &[Stream::Vertical],
            Variant::SlstmC => &[Stream::Concat],
            _ => &[Stream::Horizontal, Stream::Vertical],
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = NeuralError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_uppercase().replace('_', "-");
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == norm)
            .ok_or_else(|| NeuralError::IllegalSpec(format!("unknown variant {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Adam,
    Rmsprop,
}

impl OptimizerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            OptimizerKind::Adam => "adam",
            OptimizerKind::Rmsprop => "rmsprop",
        }
    }
}

/// Window lengths and feature widths of the two input streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDims {
    pub horizontal_steps: usize,
    pub horizontal_features: usize,
    pub vertical_steps: usize,
    pub vertical_features: usize,
}

impl Default for InputDims {
    fn default() -> Self {
        Self { horizontal_steps: 3, horizontal_features: 8, vertical_steps: 3, vertical_features: 9 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub variant: Variant,
    pub input: InputDims,
    /// LSTM stack of every branch, first layer first.
    pub lstm_units: Vec<usize>,
    pub dropout: f64,
    /// Hidden dense layers before the scalar output.
    pub dense_units: Vec<usize>,
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
}

pub const ADAM_RATE: f64 = 0.004337;
pub const RMSPROP_RATE: f64 = 0.001318;

impl ModelSpec {
    /// Tuned configuration for each variant. Attention and fusion variants
    /// share the dual-branch base with 64-unit branches, dropout 0.3 and a
    /// `{128, 32}` head.
    pub fn preset(variant: Variant, input: InputDims) -> Self {
        let (lstm_units, dropout, dense_units, optimizer, learning_rate) = match variant {
            Variant::SlstmH => (vec![96, 96], 0.1, vec![32], OptimizerKind::Adam, ADAM_RATE),
            Variant::SlstmV | Variant::SlstmC => (vec![128], 0.1, vec![32], OptimizerKind::Rmsprop, RMSPROP_RATE),
            Variant::Dlstm => (vec![96, 32], 0.1, vec![32], OptimizerKind::Adam, ADAM_RATE),
            _ => (vec![64, 64], 0.3, vec![128, 32], OptimizerKind::Adam, ADAM_RATE),
        };
        Self { variant, input, lstm_units, dropout, dense_units, optimizer, learning_rate }
    }

    pub fn validate(&self) -> Result<(), NeuralError> {
        let bad = |m: String| Err(NeuralError::IllegalSpec(m));
        let i = &self.input;
        if [i.horizontal_steps, i.horizontal_features, i.vertical_steps, i.vertical_features].contains(&0) {
            return bad(format!("input dimensions must be positive: {i:?}"));
        }
        if self.lstm_units.is_empty() || self.lstm_units.contains(&0) {
            return bad(format!("lstm units must be a non-empty list of positive sizes: {:?}", self.lstm_units));
        }
        if self.dense_units.contains(&0) {
            return bad(format!("dense units must be positive: {:?}", self.dense_units));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad(format!("learning rate {} must be positive", self.learning_rate));
        }
        Ok(())
    }

    fn branch_input(&self, stream: Stream) -> usize {
        match stream {
            Stream::Horizontal => self.input.horizontal_features,
            Stream::Vertical => self.input.vertical_features,
            Stream::Concat => self.input.horizontal_features + self.input.vertical_features,
        }
    }

    fn branch_width(&self) -> usize {
        *self.lstm_units.last().expect("validated")
    }

    /// Width of the vector entering dropout and the dense head.
    pub fn fused_width(&self) -> usize {
        let d = self.branch_width();
        match (self.variant.is_dual(), self.variant.fusion()) {
            (false, _) => d,
            (true, Fusion::Gated | Fusion::GatedResidual) => d,
            (true, _) => 2 * d,
        }
    }

    /// Closed-form parameter count:
    /// each LSTM layer `4h(i + h + 1)`, each dense layer `o(i + 1)`,
    /// the fusion gate `D(2D + 1)`.
    pub fn param_count(&self) -> usize {
        let mut n = 0;
        for &stream in self.variant.streams() {
            let mut input = self.branch_input(stream);
            for &h in &self.lstm_units {
                n += LstmLayer::param_count(input, h);
                input = h;
            }
        }
        if matches!(self.variant.fusion(), Fusion::Gated | Fusion::GatedResidual) {
            n += GateLayer::param_count(self.branch_width());
        }
        let mut input = self.fused_width();
        for &o in self.dense_units.iter().chain(&[1]) {
            n += DenseLayer::param_count(input, o);
            input = o;
        }
        n
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Stream {
    Horizontal,
    Vertical,
    Concat,
}

impl Stream {
    fn name(self) -> &'static str {
        match self {
            Stream::Horizontal => "horizontal",
            Stream::Vertical => "vertical",
            Stream::Concat => "concat",
        }
    }
}

#[derive(Debug, Clone)]
struct Branch {
    stream: Stream,
    layers: Vec<LstmLayer>,
}

/// Stacked LSTM over one sample `[T, F]`. Returns `[T, H]` when
/// `return_sequence` is set, else the last hidden state `[1, H]`.
pub fn lstm_forward(seq: &Tensor, layers: &[LstmLayer], params: &Params, return_sequence: bool) -> Result<Tensor, NeuralError> {
    let first = layers.first().ok_or_else(|| NeuralError::IllegalSpec("empty LSTM stack".into()))?;
    if seq.shape().len() != 2 || seq.cols() != first.input || seq.rows() == 0 {
        return Err(NeuralError::ShapeMismatch(format!("sequence {:?} for input width {}", seq.shape(), first.input)));
    }
    let mut x = SeqBatch::from_samples(&[seq]);
    for l in layers {
        if l.input != x.width {
            return Err(NeuralError::ShapeMismatch(format!("layer expects {} inputs, got {}", l.input, x.width)));
        }
        x = l.forward(params, &x).0;
    }
    let width = x.width;
    if return_sequence {
        Tensor::from_vec(&[x.len(), width], x.steps.concat())
    } else {
        Tensor::from_vec(&[1, width], x.steps.pop().expect("non-empty"))
    }
}

/// A batch of paired input windows in time-major layout.
#[derive(Debug, Clone)]
pub struct Batch {
    pub horizontal: SeqBatch,
    pub vertical: SeqBatch,
}

impl Batch {
    pub fn new(horizontal: &[&Tensor], vertical: &[&Tensor]) -> Result<Self, NeuralError> {
        if horizontal.is_empty() || horizontal.len() != vertical.len() {
            return Err(NeuralError::ShapeMismatch("batch streams must be non-empty and equally long".into()));
        }
        for set in [horizontal, vertical] {
            if set.iter().any(|t| t.shape() != set[0].shape() || t.shape().len() != 2) {
                return Err(NeuralError::ShapeMismatch("inconsistent sample shapes in batch".into()));
            }
        }
        Ok(Self { horizontal: SeqBatch::from_samples(horizontal), vertical: SeqBatch::from_samples(vertical) })
    }

    pub fn len(&self) -> usize {
        self.horizontal.batch
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone)]
struct AttnCache {
    th: usize,
    tv: usize,
    sh: Vec<f64>,
    sv: Vec<f64>,
    pre: Option<(BatchedAttention, BatchedAttention)>,
    /// Inputs to the final attention stage.
    lh: Vec<f64>,
    lv: Vec<f64>,
    att_h: BatchedAttention,
    att_v: BatchedAttention,
    gate: Option<GateCache>,
}

#[derive(Debug, Clone)]
enum FuseCache {
    Last,
    Attention(Box<AttnCache>),
}

/// Everything the backward pass needs from one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    batch: usize,
    branches: Vec<(Vec<LstmCache>, usize)>,
    fuse: FuseCache,
    mask: Vec<f64>,
    /// Input to each head layer; the last entry is the prediction.
    acts: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct Model {
    spec: ModelSpec,
    params: Params,
    branches: Vec<Branch>,
    gate: Option<GateLayer>,
    head: Vec<DenseLayer>,
}

fn mean_time(x: &[f64], batch: usize, len: usize, d: usize) -> Vec<f64> {
    let mut out = vec![0.0; batch * d];
    for b in 0..batch {
        for t in 0..len {
            let src = &x[(b * len + t) * d..(b * len + t + 1) * d];
            for (o, v) in out[b * d..(b + 1) * d].iter_mut().zip(src) {
                *o += v;
            }
        }
    }
    out.iter_mut().for_each(|v| *v /= len as f64);
    out
}

fn mean_time_backward(dm: &[f64], acc: &mut [f64], batch: usize, len: usize, d: usize) {
    let s = 1.0 / len as f64;
    for b in 0..batch {
        for t in 0..len {
            let dst = &mut acc[(b * len + t) * d..(b * len + t + 1) * d];
            for (o, v) in dst.iter_mut().zip(&dm[b * d..(b + 1) * d]) {
                *o += v * s;
            }
        }
    }
}

fn add_into(acc: &mut [f64], x: &[f64]) {
    acc.iter_mut().zip(x).for_each(|(a, v)| *a += v);
}

fn split_cols(x: &[f64], batch: usize, left: usize, right: usize) -> (Vec<f64>, Vec<f64>) {
    let w = left + right;
    let mut a = Vec::with_capacity(batch * left);
    let mut b = Vec::with_capacity(batch * right);
    for row in x.chunks(w).take(batch) {
        a.extend_from_slice(&row[..left]);
        b.extend_from_slice(&row[left..]);
    }
    (a, b)
}

fn join_cols(a: &[f64], b: &[f64], batch: usize, left: usize, right: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(batch * (left + right));
    for i in 0..batch {
        out.extend_from_slice(&a[i * left..(i + 1) * left]);
        out.extend_from_slice(&b[i * right..(i + 1) * right]);
    }
    out
}

/// Aligns the streams on their newest step and concatenates feature axes;
/// the shorter stream is zero-filled at the oldest positions.
fn concat_streams(h: &SeqBatch, v: &SeqBatch) -> SeqBatch {
    let len = h.len().max(v.len());
    let (oh, ov) = (len - h.len(), len - v.len());
    let width = h.width + v.width;
    let mut out = SeqBatch::zeros(h.batch, width, len);
    for (t, step) in out.steps.iter_mut().enumerate() {
        for b in 0..h.batch {
            let row = &mut step[b * width..(b + 1) * width];
            if t >= oh {
                row[..h.width].copy_from_slice(&h.steps[t - oh][b * h.width..(b + 1) * h.width]);
            }
            if t >= ov {
                row[h.width..].copy_from_slice(&v.steps[t - ov][b * v.width..(b + 1) * v.width]);
            }
        }
    }
    out
}

fn attn_backward(att: &BatchedAttention, q: &[f64], kv: &[f64], dout: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut dq = vec![0.0; q.len()];
    let mut dkv = vec![0.0; kv.len()];
    att.backward(q, kv, dout, &mut dq, &mut dkv);
    (dq, dkv)
}

impl Model {
    pub fn new(spec: ModelSpec, seed: u64) -> Result<Self, NeuralError> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Params::new();
        let mut branches = Vec::new();
        for &stream in spec.variant.streams() {
            let mut input = spec.branch_input(stream);
            let mut layers = Vec::new();
            for (k, &h) in spec.lstm_units.iter().enumerate() {
                layers.push(LstmLayer::new(&mut params, &format!("{}.lstm{k}", stream.name()), input, h, &mut rng));
                input = h;
            }
            branches.push(Branch { stream, layers });
        }
        let gate = matches!(spec.variant.fusion(), Fusion::Gated | Fusion::GatedResidual)
            .then(|| GateLayer::new(&mut params, "fusion.gate", spec.branch_width(), &mut rng));
        let mut head = Vec::new();
        let mut input = spec.fused_width();
        for (k, &o) in spec.dense_units.iter().enumerate() {
            head.push(DenseLayer::new(&mut params, &format!("head.dense{k}"), input, o, &mut rng));
            input = o;
        }
        head.push(DenseLayer::new(&mut params, "head.out", input, 1, &mut rng));
        debug_assert_eq!(params.scalar_count(), spec.param_count());
        Ok(Self { spec, params, branches, gate, head })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut Params {
        &mut self.params
    }

    /// The layers of each branch, horizontal first.
    pub fn branch_layers(&self) -> Vec<&[LstmLayer]> {
        self.branches.iter().map(|b| b.layers.as_slice()).collect()
    }

    fn check_batch(&self, batch: &Batch) -> Result<(), NeuralError> {
        let i = &self.spec.input;
        let ok = batch.horizontal.len() == i.horizontal_steps
            && batch.horizontal.width == i.horizontal_features
            && batch.vertical.len() == i.vertical_steps
            && batch.vertical.width == i.vertical_features
            && batch.horizontal.batch == batch.vertical.batch
            && batch.len() > 0;
        if ok {
            Ok(())
        } else {
            Err(NeuralError::ShapeMismatch(format!(
                "batch ({}x{}, {}x{}) does not match spec {i:?}",
                batch.horizontal.len(),
                batch.horizontal.width,
                batch.vertical.len(),
                batch.vertical.width
            )))
        }
    }

    /// Forward pass. `rng` draws dropout masks in training mode only.
    pub fn forward(&self, batch: &Batch, mode: Mode, rng: &mut ChaCha8Rng) -> Result<(Vec<f64>, ForwardCache), NeuralError> {
        self.check_batch(batch)?;
        let bsz = batch.len();
        let mut caches = Vec::with_capacity(self.branches.len());
        let mut outs = Vec::with_capacity(self.branches.len());
        for br in &self.branches {
            let mut x = match br.stream {
                Stream::Horizontal => batch.horizontal.clone(),
                Stream::Vertical => batch.vertical.clone(),
                Stream::Concat => concat_streams(&batch.horizontal, &batch.vertical),
            };
            let mut layer_caches = Vec::with_capacity(br.layers.len());
            for l in &br.layers {
                let (y, c) = l.forward(&self.params, &x);
                layer_caches.push(c);
                x = y;
            }
            caches.push((layer_caches, x.len()));
            outs.push(x);
        }
        let (fused, fuse) = self.fuse_forward(&outs, bsz);
        let (mut x, mask) = dropout(&fused, self.spec.dropout, mode, rng);
        let mut acts = Vec::with_capacity(self.head.len() + 1);
        for (k, layer) in self.head.iter().enumerate() {
            let mut y = layer.forward(&self.params, &x, bsz);
            if k + 1 < self.head.len() {
                relu_in_place(&mut y);
            }
            acts.push(std::mem::replace(&mut x, y));
        }
        acts.push(x.clone());
        if !x.iter().all(|v| v.is_finite()) {
            return Err(NeuralError::NonFinite);
        }
        Ok((x, ForwardCache { batch: bsz, branches: caches, fuse, mask, acts }))
    }

    /// Inference-mode predictions.
    pub fn predict(&self, batch: &Batch) -> Result<Vec<f64>, NeuralError> {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        Ok(self.forward(batch, Mode::Infer, &mut rng)?.0)
    }

    fn fuse_forward(&self, outs: &[SeqBatch], bsz: usize) -> (Vec<f64>, FuseCache) {
        let attention = self.spec.variant.attention();
        if attention == Attention::None {
            let last: Vec<&[f64]> = outs.iter().map(|o| o.steps.last().expect("T >= 1").as_slice()).collect();
            let fused = match last.as_slice() {
                [one] => one.to_vec(),
                [h, v] => join_cols(h, v, bsz, outs[0].width, outs[1].width),
                _ => unreachable!("at most two branches"),
            };
            return (fused, FuseCache::Last);
        }
        let d = outs[0].width;
        let (th, tv) = (outs[0].len(), outs[1].len());
        let sh = outs[0].to_sample_major();
        let sv = outs[1].to_sample_major();
        let (pre, lh, lv) = if attention == Attention::Hierarchical {
            let (eh, ph) = BatchedAttention::forward(&sh, &sh, bsz, th, th, d);
            let (ev, pv) = BatchedAttention::forward(&sv, &sv, bsz, tv, tv, d);
            (Some((ph, pv)), eh, ev)
        } else {
            (None, sh.clone(), sv.clone())
        };
        let ((ah, att_h), (av, att_v)) = if attention == Attention::SelfOnly {
            (BatchedAttention::forward(&lh, &lh, bsz, th, th, d), BatchedAttention::forward(&lv, &lv, bsz, tv, tv, d))
        } else {
            (BatchedAttention::forward(&lh, &lv, bsz, th, tv, d), BatchedAttention::forward(&lv, &lh, bsz, tv, th, d))
        };
        let mh = mean_time(&ah, bsz, th, d);
        let mv = mean_time(&av, bsz, tv, d);
        let mut gate_cache = None;
        let fused = match self.spec.variant.fusion() {
            Fusion::Concat => join_cols(&mh, &mv, bsz, d, d),
            Fusion::Residual => {
                let rh: Vec<f64> = mh.iter().zip(mean_time(&sh, bsz, th, d)).map(|(a, o)| a + o).collect();
                let rv: Vec<f64> = mv.iter().zip(mean_time(&sv, bsz, tv, d)).map(|(a, o)| a + o).collect();
                join_cols(&rh, &rv, bsz, d, d)
            }
            Fusion::Gated | Fusion::GatedResidual => {
                let gate = self.gate.as_ref().expect("gated variant has a gate");
                let (mut g, c) = gate.forward(&self.params, &mh, &mv, bsz);
                gate_cache = Some(c);
                if self.spec.variant.fusion() == Fusion::GatedResidual {
                    add_into(&mut g, &mean_time(&sh, bsz, th, d));
                    add_into(&mut g, &mean_time(&sv, bsz, tv, d));
                }
                g
            }
        };
        let cache = AttnCache { th, tv, sh, sv, pre, lh, lv, att_h, att_v, gate: gate_cache };
        (fused, FuseCache::Attention(Box::new(cache)))
    }

    /// Gradients of `sum(dpred * pred)` with respect to every parameter.
    pub fn backward(&self, cache: &ForwardCache, dpred: &[f64]) -> Params {
        let bsz = cache.batch;
        let mut grads = self.params.zeros_like();
        let mut dy = dpred.to_vec();
        for (k, layer) in self.head.iter().enumerate().rev() {
            if k + 1 < self.head.len() {
                relu_backward(&cache.acts[k + 1], &mut dy);
            }
            dy = layer.backward(&self.params, &cache.acts[k], &dy, bsz, &mut grads);
        }
        dy.iter_mut().zip(&cache.mask).for_each(|(g, m)| *g *= m);
        let douts = self.fuse_backward(&cache.fuse, &dy, bsz, &mut grads);
        for ((br, (layer_caches, _)), mut dh) in self.branches.iter().zip(&cache.branches).zip(douts) {
            for (l, c) in br.layers.iter().zip(layer_caches).rev() {
                dh = l.backward(&self.params, c, &dh, &mut grads);
            }
        }
        grads
    }

    fn fuse_backward(&self, fuse: &FuseCache, dfused: &[f64], bsz: usize, grads: &mut Params) -> Vec<SeqBatch> {
        let d = self.spec.branch_width();
        let c = match fuse {
            FuseCache::Last => {
                let parts: Vec<Vec<f64>> = if self.branches.len() == 1 {
                    vec![dfused.to_vec()]
                } else {
                    let (a, b) = split_cols(dfused, bsz, d, d);
                    vec![a, b]
                };
                let i = &self.spec.input;
                return self
                    .branches
                    .iter()
                    .zip(parts)
                    .map(|(br, p)| {
                        let len = match br.stream {
                            Stream::Horizontal => i.horizontal_steps,
                            Stream::Vertical => i.vertical_steps,
                            Stream::Concat => i.horizontal_steps.max(i.vertical_steps),
                        };
                        let mut g = SeqBatch::zeros(bsz, d, len);
                        *g.steps.last_mut().expect("T >= 1") = p;
                        g
                    })
                    .collect();
            }
            FuseCache::Attention(c) => c,
        };
        let (th, tv) = (c.th, c.tv);
        let mut dsh = vec![0.0; c.sh.len()];
        let mut dsv = vec![0.0; c.sv.len()];
        let (dmh, dmv) = match self.spec.variant.fusion() {
            Fusion::Concat => split_cols(dfused, bsz, d, d),
            Fusion::Residual => {
                let (a, b) = split_cols(dfused, bsz, d, d);
                mean_time_backward(&a, &mut dsh, bsz, th, d);
                mean_time_backward(&b, &mut dsv, bsz, tv, d);
                (a, b)
            }
            Fusion::Gated | Fusion::GatedResidual => {
                let gate = self.gate.as_ref().expect("gated variant has a gate");
                if self.spec.variant.fusion() == Fusion::GatedResidual {
                    mean_time_backward(dfused, &mut dsh, bsz, th, d);
                    mean_time_backward(dfused, &mut dsv, bsz, tv, d);
                }
                gate.backward(&self.params, c.gate.as_ref().expect("gate cache"), dfused, bsz, grads)
            }
        };
        let mut dah = vec![0.0; bsz * th * d];
        let mut dav = vec![0.0; bsz * tv * d];
        mean_time_backward(&dmh, &mut dah, bsz, th, d);
        mean_time_backward(&dmv, &mut dav, bsz, tv, d);
        let mut dlh = vec![0.0; c.lh.len()];
        let mut dlv = vec![0.0; c.lv.len()];
        if self.spec.variant.attention() == Attention::SelfOnly {
            let (q, kv) = attn_backward(&c.att_h, &c.lh, &c.lh, &dah);
            add_into(&mut dlh, &q);
            add_into(&mut dlh, &kv);
            let (q, kv) = attn_backward(&c.att_v, &c.lv, &c.lv, &dav);
            add_into(&mut dlv, &q);
            add_into(&mut dlv, &kv);
        } else {
            let (q, kv) = attn_backward(&c.att_h, &c.lh, &c.lv, &dah);
            add_into(&mut dlh, &q);
            add_into(&mut dlv, &kv);
            let (q, kv) = attn_backward(&c.att_v, &c.lv, &c.lh, &dav);
            add_into(&mut dlv, &q);
            add_into(&mut dlh, &kv);
        }
        match &c.pre {
            Some((ph, pv)) => {
                let (q, kv) = attn_backward(ph, &c.sh, &c.sh, &dlh);
                add_into(&mut dsh, &q);
                add_into(&mut dsh, &kv);
                let (q, kv) = attn_backward(pv, &c.sv, &c.sv, &dlv);
                add_into(&mut dsv, &q);
                add_into(&mut dsv, &kv);
            }
            None => {
                add_into(&mut dsh, &dlh);
                add_into(&mut dsv, &dlv);
            }
        }
        vec![SeqBatch::from_sample_major(&dsh, bsz, th, d), SeqBatch::from_sample_major(&dsv, bsz, tv, d)]
    }

    /// Attention weights of the final attention stage for one batch, as
    /// `(horizontal, vertical)` flattened `batch x Tq x Tk` buffers.
    pub fn attention_weights(&self, batch: &Batch) -> Result<Option<(Vec<f64>, Vec<f64>)>, NeuralError> {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (_, cache) = self.forward(batch, Mode::Infer, &mut rng)?;
        Ok(match cache.fuse {
            FuseCache::Last => None,
            FuseCache::Attention(c) => Some((c.att_h.weights, c.att_v.weights)),
        })
    }
}
