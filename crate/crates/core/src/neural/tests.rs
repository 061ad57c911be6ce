use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::attention::BatchedAttention;
use super::*;

fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn zero_cell(input: usize, hidden: usize) -> (Tensor, Tensor, Tensor) {
    (Tensor::zeros(&[4 * hidden, input]), Tensor::zeros(&[4 * hidden, hidden]), Tensor::zeros(&[4 * hidden]))
}

#[test]
fn dead_cell_stays_at_zero() {
    let (w, u, b) = zero_cell(3, 2);
    let (h, c) = lstm_cell(&[0.3, -1.0, 2.0], &[0.0, 0.0], &[0.0, 0.0], &w, &u, &b);
    assert_eq!(h, vec![0.0, 0.0]);
    assert_eq!(c, vec![0.0, 0.0]);
}

#[test]
fn saturated_gates_give_perfect_memory() {
    let (w, u, mut b) = zero_cell(1, 2);
    let bd = b.data_mut();
    bd[0..2].copy_from_slice(&[-60.0, -60.0]);
    bd[2..4].copy_from_slice(&[60.0, 60.0]);
    let (_, c) = lstm_cell(&[5.0], &[0.2, 0.1], &[0.7, -1.3], &w, &u, &b);
    assert!((c[0] - 0.7).abs() < 1e-12 && (c[1] + 1.3).abs() < 1e-12);
}

#[test]
fn two_unit_cell_matches_hand_computation() {
    let w = Tensor::from_vec(&[8, 1], vec![0.1, -0.2, 0.3, 0.4, -0.5, 0.6, 0.7, -0.8]).unwrap();
    let u = Tensor::from_vec(
        &[8, 2],
        vec![0.2, -0.1, 0.05, 0.3, -0.3, 0.2, 0.1, 0.1, 0.4, -0.2, -0.1, 0.25, 0.3, 0.35, -0.45, 0.15],
    )
    .unwrap();
    let b = Tensor::from_vec(&[8], vec![0.01, -0.02, 1.0, 1.0, 0.03, -0.04, 0.05, -0.06]).unwrap();
    let (h, c) = lstm_cell(&[0.5], &[0.1, -0.2], &[0.3, -0.4], &w, &u, &b);
    let want_h = [0.178_754_465_405_622_3, -0.266_856_145_810_483_6];
    let want_c = [0.405_178_378_148_091_5, -0.529_945_564_900_994_3];
    for j in 0..2 {
        assert!((h[j] - want_h[j]).abs() < 1e-12);
        assert!((c[j] - want_c[j]).abs() < 1e-12);
    }
}

fn stack(params: &mut Params, input: usize, units: &[usize], seed: u64) -> Vec<LstmLayer> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layers = Vec::new();
    let mut i = input;
    for (k, &h) in units.iter().enumerate() {
        layers.push(LstmLayer::new(params, &format!("l{k}"), i, h, &mut rng));
        i = h;
    }
    layers
}

#[test]
fn single_step_forward_equals_one_cell() {
    let mut params = Params::new();
    let layers = stack(&mut params, 4, &[5], 1);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = random_tensor(&mut rng, &[1, 4]);
    let out = lstm_forward(&x, &layers, &params, false).unwrap();
    let (w, u, b) = layers[0].weights(&params);
    let (h, _) = lstm_cell(x.row(0), &[0.0; 5], &[0.0; 5], w, u, b);
    for (a, e) in out.data().iter().zip(&h) {
        assert!((a - e).abs() < 1e-15);
    }
}

#[test]
fn stacked_output_has_last_layer_width() {
    let mut params = Params::new();
    let layers = stack(&mut params, 8, &[96, 32], 3);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = random_tensor(&mut rng, &[3, 8]);
    assert_eq!(lstm_forward(&x, &layers, &params, false).unwrap().shape(), &[1, 32]);
    assert_eq!(lstm_forward(&x, &layers, &params, true).unwrap().shape(), &[3, 32]);
}

#[test]
fn sequence_forward_matches_unrolled_cells() {
    let mut params = Params::new();
    let layers = stack(&mut params, 3, &[4, 2], 5);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let x = random_tensor(&mut rng, &[3, 3]);
    let mut seq: Vec<Vec<f64>> = (0..3).map(|t| x.row(t).to_vec()).collect();
    for l in &layers {
        let (w, u, b) = l.weights(&params);
        let (mut h, mut c) = (vec![0.0; l.hidden], vec![0.0; l.hidden]);
        let mut next = Vec::new();
        for xt in &seq {
            (h, c) = lstm_cell(xt, &h, &c, w, u, b);
            next.push(h.clone());
        }
        seq = next;
    }
    let out = lstm_forward(&x, &layers, &params, true).unwrap();
    for t in 0..3 {
        for (a, e) in out.row(t).iter().zip(&seq[t]) {
            assert!((a - e).abs() < 1e-15, "{a} vs {e}");
        }
    }
}

#[test]
fn single_key_attention_returns_that_value() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let q = random_tensor(&mut rng, &[3, 4]);
    let k = random_tensor(&mut rng, &[1, 4]);
    let v = random_tensor(&mut rng, &[1, 4]);
    let (out, _) = scaled_dot_attention(&q, &k, &v).unwrap();
    for t in 0..3 {
        assert_eq!(out.row(t), v.row(0));
    }
}

#[test]
fn attention_matches_naive_two_loop_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let q = random_tensor(&mut rng, &[3, 4]);
    let k = random_tensor(&mut rng, &[5, 4]);
    let v = random_tensor(&mut rng, &[5, 4]);
    let (out, w) = scaled_dot_attention(&q, &k, &v).unwrap();
    for i in 0..3 {
        let scores: Vec<f64> =
            (0..5).map(|j| (0..4).map(|c| q.row(i)[c] * k.row(j)[c]).sum::<f64>() / 2.0).collect();
        let z: f64 = scores.iter().map(|s| s.exp()).sum();
        let weights: Vec<f64> = scores.iter().map(|s| s.exp() / z).collect();
        assert!((w.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for c in 0..4 {
            let want: f64 = (0..5).map(|j| weights[j] * v.row(j)[c]).sum();
            assert!((out.row(i)[c] - want).abs() < 1e-12);
        }
    }
}

#[test]
fn self_attention_on_one_step_is_identity() {
    let x = Tensor::from_vec(&[1, 3], vec![0.4, -2.0, 9.0]).unwrap();
    assert_eq!(scaled_dot_attention(&x, &x, &x).unwrap().0, x);
}

#[test]
fn cross_attention_with_itself_equals_self_attention() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let x = random_tensor(&mut rng, &[2 * 3 * 4]).into_data();
    let (a, _) = BatchedAttention::forward(&x, &x, 2, 3, 3, 4);
    let (b, _) = BatchedAttention::forward(&x, &x.clone(), 2, 3, 3, 4);
    assert_eq!(a, b);
    for s in 0..2 {
        let t = Tensor::from_vec(&[3, 4], x[s * 12..(s + 1) * 12].to_vec()).unwrap();
        let (o, _) = scaled_dot_attention(&t, &t, &t).unwrap();
        for (p, q) in a[s * 12..(s + 1) * 12].iter().zip(o.data()) {
            assert!((p - q).abs() < 1e-15);
        }
    }
}

#[test]
fn attention_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let (tq, tk, d) = (3, 2, 4);
    let q: Vec<f64> = (0..tq * d).map(|_| rng.random_range(-1.0..1.0)).collect();
    let kv: Vec<f64> = (0..tk * d).map(|_| rng.random_range(-1.0..1.0)).collect();
    let c: Vec<f64> = (0..tq * d).map(|_| rng.random_range(-1.0..1.0)).collect();
    let loss = |q: &[f64], kv: &[f64]| -> f64 {
        let (o, _) = BatchedAttention::forward(q, kv, 1, tq, tk, d);
        o.iter().zip(&c).map(|(a, b)| a * b).sum()
    };
    let (_, att) = BatchedAttention::forward(&q, &kv, 1, tq, tk, d);
    let mut dq = vec![0.0; q.len()];
    let mut dkv = vec![0.0; kv.len()];
    att.backward(&q, &kv, &c, &mut dq, &mut dkv);
    let h = 1e-5;
    for i in 0..q.len() {
        let (mut p, mut m) = (q.clone(), q.clone());
        p[i] += h;
        m[i] -= h;
        let num = (loss(&p, &kv) - loss(&m, &kv)) / (2.0 * h);
        assert!(rel_err(num, dq[i]) < 1e-6);
    }
    for i in 0..kv.len() {
        let (mut p, mut m) = (kv.clone(), kv.clone());
        p[i] += h;
        m[i] -= h;
        let num = (loss(&q, &p) - loss(&q, &m)) / (2.0 * h);
        assert!(rel_err(num, dkv[i]) < 1e-6);
    }
}

fn rel_err(num: f64, ana: f64) -> f64 {
    (num - ana).abs() / (num.abs() + ana.abs()).max(1e-7)
}

#[test]
fn neutral_gate_averages() {
    let w = Tensor::zeros(&[3, 6]);
    let b = Tensor::zeros(&[3]);
    assert_eq!(gated_fuse(&[1.0, 2.0, 3.0], &[3.0, 0.0, -3.0], &w, &b), vec![2.0, 1.0, 0.0]);
}

#[test]
fn gate_weight_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut params = Params::new();
    let gate = GateLayer::new(&mut params, "g", 3, &mut rng);
    let a: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
    let b: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
    let c: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
    let (_, cache) = gate.forward(&params, &a, &b, 1);
    let mut grads = params.zeros_like();
    gate.backward(&params, &cache, &c, 1, &mut grads);
    let h = 1e-5;
    for i in 0..18 {
        let eval = |delta: f64| {
            let mut p = params.clone();
            p.tensors_mut()[0].data_mut()[i] += delta;
            let (w, bias) = gate.weights(&p);
            gated_fuse(&a, &b, w, bias).iter().zip(&c).map(|(x, y)| x * y).sum::<f64>()
        };
        let num = (eval(h) - eval(-h)) / (2.0 * h);
        assert!(rel_err(num, grads.tensors()[0].data()[i]) < 1e-6);
    }
}

fn small_spec(variant: Variant, dropout: f64) -> ModelSpec {
    ModelSpec {
        variant,
        input: InputDims { horizontal_steps: 3, horizontal_features: 2, vertical_steps: 2, vertical_features: 3 },
        lstm_units: vec![3, 2],
        dropout,
        dense_units: vec![4, 3],
        optimizer: OptimizerKind::Adam,
        learning_rate: 0.01,
    }
}

fn random_batch(spec: &ModelSpec, n: usize, seed: u64) -> Batch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let i = spec.input;
    let h: Vec<Tensor> = (0..n).map(|_| random_tensor(&mut rng, &[i.horizontal_steps, i.horizontal_features])).collect();
    let v: Vec<Tensor> = (0..n).map(|_| random_tensor(&mut rng, &[i.vertical_steps, i.vertical_features])).collect();
    Batch::new(&h.iter().collect::<Vec<_>>(), &v.iter().collect::<Vec<_>>()).unwrap()
}

#[test]
fn every_variant_passes_a_full_gradient_check() {
    for variant in Variant::ALL {
        let spec = small_spec(variant, 0.3);
        let mut model = Model::new(spec.clone(), 21).unwrap();
        let batch = random_batch(&spec, 4, 22);
        let c = [0.7, -1.1, 0.4, 0.9];
        let loss = |m: &Model| {
            let mut rng = ChaCha8Rng::seed_from_u64(99);
            let (p, _) = m.forward(&batch, Mode::Train, &mut rng).unwrap();
            p.iter().zip(&c).map(|(a, b)| a * b).sum::<f64>()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let (_, cache) = model.forward(&batch, Mode::Train, &mut rng).unwrap();
        let grads = model.backward(&cache, &c);
        let h = 1e-5;
        let mut worst = 0.0f64;
        for ti in 0..grads.len() {
            for k in 0..grads.tensors()[ti].len() {
                let orig = model.params().tensors()[ti].data()[k];
                model.params_mut().tensors_mut()[ti].data_mut()[k] = orig + h;
                let up = loss(&model);
                model.params_mut().tensors_mut()[ti].data_mut()[k] = orig - h;
                let down = loss(&model);
                model.params_mut().tensors_mut()[ti].data_mut()[k] = orig;
                let num = (up - down) / (2.0 * h);
                worst = worst.max(rel_err(num, grads.tensors()[ti].data()[k]));
            }
        }
        assert!(worst < 1e-4, "{variant}: worst relative error {worst}");
    }
}

#[test]
fn preset_dual_attention_model_gives_finite_scalar() {
    let spec = ModelSpec::preset(Variant::DlstmHa, InputDims::default());
    let model = Model::new(spec.clone(), 1).unwrap();
    let batch = random_batch(&spec, 1, 2);
    let a = model.predict(&batch).unwrap();
    assert_eq!(a.len(), 1);
    assert!(a[0].is_finite());
    assert_eq!(model.predict(&batch).unwrap(), a);
}

#[test]
fn zero_dropout_training_equals_inference() {
    for variant in Variant::ALL {
        let spec = small_spec(variant, 0.0);
        let model = Model::new(spec.clone(), 3).unwrap();
        let batch = random_batch(&spec, 5, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (train, _) = model.forward(&batch, Mode::Train, &mut rng).unwrap();
        assert_eq!(train, model.predict(&batch).unwrap());
    }
}

#[test]
fn attention_rows_are_stochastic_in_every_attention_variant() {
    for variant in Variant::ALL.into_iter().filter(|v| v.has_attention()) {
        let spec = small_spec(variant, 0.3);
        let model = Model::new(spec.clone(), 6).unwrap();
        let batch = random_batch(&spec, 3, 7);
        let (wh, wv) = model.attention_weights(&batch).unwrap().unwrap();
        let tk_h = if variant == Variant::DlstmSa { 3 } else { 2 };
        let tk_v = if variant == Variant::DlstmSa { 2 } else { 3 };
        for (w, tk) in [(wh, tk_h), (wv, tk_v)] {
            for row in w.chunks(tk) {
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn parameter_counts_follow_the_closed_form() {
    let dims = InputDims::default();
    let lstm = |i: usize, h: usize| 4 * h * (i + h + 1);
    let dense = |i: usize, o: usize| o * (i + 1);
    let dual_attention = lstm(8, 64) + lstm(64, 64) + lstm(9, 64) + lstm(64, 64);
    let expected = [
        (Variant::SlstmH, lstm(8, 96) + lstm(96, 96) + dense(96, 32) + dense(32, 1)),
        (Variant::SlstmV, lstm(9, 128) + dense(128, 32) + dense(32, 1)),
        (Variant::SlstmC, lstm(17, 128) + dense(128, 32) + dense(32, 1)),
        (Variant::Dlstm, lstm(8, 96) + lstm(96, 32) + lstm(9, 96) + lstm(96, 32) + dense(64, 32) + dense(32, 1)),
        (Variant::DlstmHa, dual_attention + dense(128, 128) + dense(128, 32) + dense(32, 1)),
        (Variant::DlstmHagf, dual_attention + 64 * 129 + dense(64, 128) + dense(128, 32) + dense(32, 1)),
    ];
    for (variant, n) in expected {
        let spec = ModelSpec::preset(variant, dims);
        assert_eq!(spec.param_count(), n, "{variant}");
        assert_eq!(Model::new(spec, 0).unwrap().params().scalar_count(), n);
    }
    // regression pins
    assert_eq!(ModelSpec::preset(Variant::SlstmH, dims).param_count(), 117_569);
    assert_eq!(ModelSpec::preset(Variant::DlstmHa, dims).param_count(), 124_353);
}

#[test]
fn illegal_specs_are_rejected() {
    let base = ModelSpec::preset(Variant::Dlstm, InputDims::default());
    let mut s = base.clone();
    s.lstm_units.clear();
    assert!(matches!(Model::new(s, 0), Err(NeuralError::IllegalSpec(_))));
    let mut s = base.clone();
    s.dropout = 1.0;
    assert!(Model::new(s, 0).is_err());
    let mut s = base;
    s.input.vertical_features = 0;
    assert!(Model::new(s, 0).is_err());
    assert!("DLSTM-XYZ".parse::<Variant>().is_err());
    assert_eq!("dlstm_hagfrf".parse::<Variant>().unwrap(), Variant::DlstmHagfrf);
}

#[test]
fn mismatched_batch_shape_is_rejected() {
    let spec = small_spec(Variant::Dlstm, 0.0);
    let model = Model::new(spec.clone(), 0).unwrap();
    let mut other = spec;
    other.input.horizontal_features = 5;
    let batch = random_batch(&other, 2, 1);
    assert!(matches!(model.predict(&batch), Err(NeuralError::ShapeMismatch(_))));
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let spec = small_spec(Variant::DlstmHagfrf, 0.3);
    let model = Model::new(spec.clone(), 12).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("runs/m/best.ckpt");
    let meta = serde_json::json!({"note": "x", "scale": [1.5, 2.0]});
    save_checkpoint(&path, &model, &meta).unwrap();
    let (loaded, m2) = load_checkpoint(&path).unwrap();
    assert_eq!(m2, meta);
    assert_eq!(loaded.spec(), model.spec());
    for (a, b) in loaded.params().tensors().iter().zip(model.params().tensors()) {
        let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(a), bits(b));
    }
    let batch = random_batch(&spec, 2, 3);
    assert_eq!(loaded.predict(&batch).unwrap(), model.predict(&batch).unwrap());
    std::fs::write(&path, b"garbage").unwrap();
    assert!(load_checkpoint(&path).is_err());
}
