use super::tensor::gemm;
use super::{NeuralError, Tensor};

/// Single-head scaled dot-product attention without projections.
/// `q: [Tq, D]`, `k, v: [Tk, D]`; returns the output `[Tq, D]` and the
/// row-stochastic weights `[Tq, Tk]`.
pub fn scaled_dot_attention(q: &Tensor, k: &Tensor, v: &Tensor) -> Result<(Tensor, Tensor), NeuralError> {
    let d = q.cols();
    if k.cols() != d || v.cols() != d || k.rows() != v.rows() {
        return Err(NeuralError::ShapeMismatch(format!(
            "attention q {:?}, k {:?}, v {:?}",
            q.shape(),
            k.shape(),
            v.shape()
        )));
    }
    let (tq, tk) = (q.rows(), k.rows());
    let mut out = vec![0.0; tq * d];
    let mut weights = vec![0.0; tq * tk];
    attend(q.data(), k.data(), v.data(), tq, tk, d, &mut out, &mut weights);
    Ok((Tensor::from_vec(&[tq, d], out)?, Tensor::from_vec(&[tq, tk], weights)?))
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn attend(q: &[f64], k: &[f64], v: &[f64], tq: usize, tk: usize, d: usize, out: &mut [f64], weights: &mut [f64]) {
    let scale = 1.0 / (d as f64).sqrt();
    gemm(tq, d, tk, scale, q, false, k, true, 0.0, weights);
    for row in weights.chunks_mut(tk) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for x in row.iter_mut() {
            *x = (*x - max).exp();
            sum += *x;
        }
        row.iter_mut().for_each(|x| *x /= sum);
    }
    gemm(tq, tk, d, 1.0, weights, false, v, false, 0.0, out);
}

/// Accumulates gradients of one attention call into `dq`, `dk`, `dv`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn attend_backward(
    q: &[f64],
    k: &[f64],
    v: &[f64],
    weights: &[f64],
    dout: &[f64],
    tq: usize,
    tk: usize,
    d: usize,
    dq: &mut [f64],
    dk: &mut [f64],
    dv: &mut [f64],
) {
    let scale = 1.0 / (d as f64).sqrt();
    let mut dw = vec![0.0; tq * tk];
    gemm(tq, d, tk, 1.0, dout, false, v, true, 0.0, &mut dw);
    gemm(tk, tq, d, 1.0, weights, true, dout, false, 1.0, dv);
    for (wr, dr) in weights.chunks(tk).zip(dw.chunks_mut(tk)) {
        let dot: f64 = wr.iter().zip(dr.iter()).map(|(a, b)| a * b).sum();
        for (x, w) in dr.iter_mut().zip(wr) {
            *x = w * (*x - dot);
        }
    }
    gemm(tq, tk, d, scale, &dw, false, k, false, 1.0, dq);
    gemm(tk, tq, d, scale, &dw, true, q, false, 1.0, dk);
}

/// Attention applied independently to each sample of sample-major buffers
/// (`batch x T x D`).
#[derive(Debug, Clone)]
pub struct BatchedAttention {
    pub batch: usize,
    pub tq: usize,
    pub tk: usize,
    pub d: usize,
    pub weights: Vec<f64>,
}

impl BatchedAttention {
    pub fn forward(q: &[f64], kv: &[f64], batch: usize, tq: usize, tk: usize, d: usize) -> (Vec<f64>, Self) {
        let mut out = vec![0.0; batch * tq * d];
        let mut weights = vec![0.0; batch * tq * tk];
        for b in 0..batch {
            let qs = &q[b * tq * d..(b + 1) * tq * d];
            let ks = &kv[b * tk * d..(b + 1) * tk * d];
            attend(
                qs,
                ks,
                ks,
                tq,
                tk,
                d,
                &mut out[b * tq * d..(b + 1) * tq * d],
                &mut weights[b * tq * tk..(b + 1) * tq * tk],
            );
        }
        (out, Self { batch, tq, tk, d, weights })
    }

    /// Gradients for the query stream and the shared key/value stream.
    pub fn backward(&self, q: &[f64], kv: &[f64], dout: &[f64], dq: &mut [f64], dkv: &mut [f64]) {
        let (tq, tk, d) = (self.tq, self.tk, self.d);
        let mut dk = vec![0.0; tk * d];
        let mut dv = vec![0.0; tk * d];
        for b in 0..self.batch {
            dk.iter_mut().for_each(|x| *x = 0.0);
            dv.iter_mut().for_each(|x| *x = 0.0);
            let qr = b * tq * d..(b + 1) * tq * d;
            let kr = b * tk * d..(b + 1) * tk * d;
            attend_backward(
                &q[qr.clone()],
                &kv[kr.clone()],
                &kv[kr.clone()],
                &self.weights[b * tq * tk..(b + 1) * tq * tk],
                &dout[qr.clone()],
                tq,
                tk,
                d,
                &mut dq[qr],
                &mut dk,
                &mut dv,
            );
            for ((x, a), c) in dkv[kr].iter_mut().zip(&dk).zip(&dv) {
                *x += a + c;
            }
        }
    }
}
