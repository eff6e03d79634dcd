use super::*;
use crate::numeric::{finite_diff_grad, RngState};

fn tiny_config() -> NetConfig {
    NetConfig {
        depth: 1,
        filters: 2,
        bottleneck: 2,
        residual_every: 1,
        ..NetConfig::default()
    }
}

fn random_batch(b: usize, t: usize, lengths: &[usize], r: &mut RngState) -> SeqBatch {
    let n = b * t;
    let mut mask = vec![0.0; n];
    for (i, &l) in lengths.iter().enumerate() {
        mask[i * t..i * t + l].iter_mut().for_each(|m| *m = 1.0);
    }
    let mut values: Vec<f64> = (0..4 * n).map(|_| r.normal()).collect();
    apply_mask(&mut values, &mask);
    SeqBatch {
        shape: Shape { b, t },
        channels: 4,
        values,
        mask,
    }
}

fn loss_at(net: &InceptionNet, params: &[f64], batch: &SeqBatch, y: &[usize]) -> f64 {
    let mut probe = net.clone();
    probe.params.copy_from_slice(params);
    let (logits, _) = probe.forward(batch, Mode::Train).unwrap();
    cross_entropy(&logits, y, 4).0
}

fn max_relative_error(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1e-6))
        .fold(0.0, f64::max)
}

#[test]
fn one_module_gradients_match_finite_differences() {
    let mut r = RngState::new(17);
    let net = InceptionNet::new(tiny_config(), &mut r).unwrap();
    let batch = random_batch(2, 8, &[8, 6], &mut r);
    let y = [1, 3];
    let (logits, cache) = net.forward(&batch, Mode::Train).unwrap();
    let (_, dl) = cross_entropy(&logits, &y, 4);
    let grads = net.backward(&batch, &cache, &dl);
    let fd = finite_diff_grad(|p| loss_at(&net, p, &batch, &y), &net.params, 1e-5);
    let err = max_relative_error(&grads, &fd);
    assert!(err < 1e-4, "max relative error {err}");
}

#[test]
fn two_residual_blocks_gradients_match() {
    let mut r = RngState::new(5);
    let cfg = NetConfig {
        depth: 4,
        filters: 2,
        bottleneck: 2,
        kernels: vec![3, 5],
        residual_every: 2,
        ..NetConfig::default()
    };
    let net = InceptionNet::new(cfg, &mut r).unwrap();
    let batch = random_batch(3, 6, &[6, 4, 5], &mut r);
    let y = [0, 2, 1];
    let (logits, cache) = net.forward(&batch, Mode::Train).unwrap();
    let (_, dl) = cross_entropy(&logits, &y, 4);
    let grads = net.backward(&batch, &cache, &dl);
    let fd = finite_diff_grad(|p| loss_at(&net, p, &batch, &y), &net.params, 1e-5);
    let err = max_relative_error(&grads, &fd);
    assert!(err < 1e-4, "max relative error {err}");
}

#[test]
fn zero_input_gives_finite_logits() {
    let net = InceptionNet::new(NetConfig::default(), &mut RngState::new(1)).unwrap();
    let batch = SeqBatch {
        shape: Shape { b: 2, t: 12 },
        channels: 4,
        values: vec![0.0; 4 * 24],
        mask: vec![1.0; 24],
    };
    for mode in [Mode::Train, Mode::Eval] {
        let (logits, _) = net.forward(&batch, mode).unwrap();
        assert!(logits.iter().all(|v| v.is_finite()));
        for row in logits.chunks(4) {
            let mut p = row.to_vec();
            crate::numeric::softmax_in_place(&mut p);
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
}

#[test]
fn duplicated_rows_give_duplicated_logits() {
    let mut r = RngState::new(2);
    let net = InceptionNet::new(tiny_config(), &mut r).unwrap();
    let one = random_batch(1, 7, &[5], &mut r);
    let two = SeqBatch {
        shape: Shape { b: 2, t: 7 },
        channels: 4,
        values: (0..4).flat_map(|c| {
            let row = &one.values[c * 7..(c + 1) * 7];
            row.iter().chain(row).copied().collect::<Vec<_>>()
        }).collect(),
        mask: one.mask.iter().chain(&one.mask).copied().collect(),
    };
    let (a, _) = net.forward(&one, Mode::Eval).unwrap();
    let (b, _) = net.forward(&two, Mode::Eval).unwrap();
    assert_eq!(&b[..4], &a[..]);
    assert_eq!(&b[4..], &a[..]);
}

#[test]
fn masked_padding_leaves_logits_unchanged() {
    let mut r = RngState::new(3);
    let net = InceptionNet::new(NetConfig::default(), &mut r).unwrap();
    let short = random_batch(1, 5, &[5], &mut r);
    let t = 11;
    let mut values = vec![0.0; 4 * t];
    for c in 0..4 {
        values[c * t..c * t + 5].copy_from_slice(&short.values[c * 5..(c + 1) * 5]);
    }
    let long = SeqBatch {
        shape: Shape { b: 1, t },
        channels: 4,
        values,
        mask: (0..t).map(|p| if p < 5 { 1.0 } else { 0.0 }).collect(),
    };
    for mode in [Mode::Eval, Mode::Train] {
        let (a, _) = net.forward(&short, mode).unwrap();
        let (b, _) = net.forward(&long, mode).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-9, "{mode:?}: {x} vs {y}");
        }
    }
}

#[test]
fn head_bias_gradient_with_zero_head_is_softmax_minus_onehot() {
    let mut r = RngState::new(4);
    let mut net = InceptionNet::new(tiny_config(), &mut r).unwrap();
    for i in net.head_weight_range().chain(net.head_bias_range()) {
        net.params[i] = 0.0;
    }
    let batch = random_batch(3, 6, &[6, 6, 3], &mut r);
    let y = [0, 0, 2];
    let (logits, cache) = net.forward(&batch, Mode::Train).unwrap();
    assert!(logits.iter().all(|&v| v == 0.0));
    let (loss, dl) = cross_entropy(&logits, &y, 4);
    assert!((loss - 4f64.ln()).abs() < 1e-12);
    let g = net.backward(&batch, &cache, &dl);
    let gb = &g[net.head_bias_range()];
    let want = [(0.25 * 3.0 - 2.0) / 3.0, 0.25, (0.75 - 1.0) / 3.0, 0.25];
    for (a, b) in gb.iter().zip(want) {
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }
}

#[test]
fn initial_loss_is_near_uniform_entropy() {
    let mut r = RngState::new(6);
    let net = InceptionNet::new(NetConfig::default(), &mut r).unwrap();
    let batch = random_batch(8, 16, &[16, 12, 16, 9, 16, 16, 14, 10], &mut r);
    let (logits, _) = net.forward(&batch, Mode::Train).unwrap();
    let (loss, _) = cross_entropy(&logits, &[0, 1, 2, 3, 0, 1, 2, 3], 4);
    assert!((loss - 4f64.ln()).abs() < 0.3, "{loss}");
}

fn toy_set(n: usize, seed: u64) -> (SeqSet, Vec<usize>) {
    let mut r = RngState::new(seed);
    let t = 10;
    let mut values = Vec::new();
    let mut masks = Vec::new();
    let mut labels = Vec::new();
    for i in 0..n {
        let y = i % 2;
        let sign = if y == 0 { 1.0 } else { -1.0 };
        let mut v = vec![0.0; 4 * t];
        for p in 0..t {
            v[p] = sign * (p as f64 / t as f64) + 0.3 * r.normal();
            for c in 1..4 {
                v[c * t + p] = r.normal();
            }
        }
        values.push(v);
        masks.push(vec![1.0; t]);
        labels.push(y);
    }
    (SeqSet { t, values, masks }, labels)
}

fn small_net() -> NetConfig {
    NetConfig {
        depth: 2,
        filters: 4,
        bottleneck: 4,
        kernels: vec![3, 5, 9],
        residual_every: 2,
        ..NetConfig::default()
    }
}

#[test]
fn separable_toy_sequences_are_learned() {
    let (data, y) = toy_set(40, 1);
    let mut net = InceptionNet::new(small_net(), &mut RngState::new(2)).unwrap();
    let cfg = TrainConfig {
        epochs: 50,
        batch_size: 8,
        ..TrainConfig::default()
    };
    let trace = train(&mut net, &data, &y, &cfg, &mut RngState::new(3)).unwrap();
    assert!(trace[0] > *trace.last().unwrap());
    let pred: Vec<usize> = predict_proba(&net, &data)
        .unwrap()
        .iter()
        .map(|p| crate::numeric::argmax(p))
        .collect();
    assert_eq!(pred, y);
}

#[test]
fn training_is_deterministic() {
    let (data, y) = toy_set(20, 4);
    let cfg = TrainConfig {
        epochs: 3,
        batch_size: 8,
        ..TrainConfig::default()
    };
    let run = || {
        let mut net = InceptionNet::new(small_net(), &mut RngState::new(5)).unwrap();
        train(&mut net, &data, &y, &cfg, &mut RngState::new(6)).unwrap();
        net.params
    };
    let (a, b) = (run(), run());
    assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
}

fn samples(n: usize) -> (Vec<crate::data::ScanpathSample>, Vec<usize>) {
    let ds = crate::data::simulate_surrogate(
        &crate::data::SurrogateConfig {
            participants: 4,
            images: n / 4,
            ..Default::default()
        },
        &mut RngState::new(9),
    )
    .unwrap();
    let y = ds.samples.iter().map(|s| s.task.index()).collect();
    (ds.samples, y)
}

#[test]
fn identical_members_reproduce_a_single_member() {
    let (s, y) = samples(16);
    let cfg = EnsembleConfig {
        members: 1,
        net: small_net(),
        train: TrainConfig { epochs: 2, ..TrainConfig::default() },
    };
    let one = fit_ensemble(&s, &y, &cfg, &RngState::new(1)).unwrap();
    let mut five = one.clone();
    five.members = vec![one.members[0].clone(); 5];
    let a = one.predict_proba(&s).unwrap();
    let b = five.predict_proba(&s).unwrap();
    for (p, q) in a.iter().flatten().zip(b.iter().flatten()) {
        assert!((p - q).abs() < 1e-12);
    }
}

#[test]
fn averaging_picks_the_majority_mass() {
    let mut acc = vec![1.0, 0.0, 0.0, 0.0];
    for _ in 0..4 {
        acc[1] += 1.0;
    }
    acc.iter_mut().for_each(|v| *v /= 5.0);
    assert_eq!(crate::numeric::argmax(&acc), 1);
}

#[test]
fn ensemble_round_trips_through_a_file() {
    let (s, y) = samples(16);
    let cfg = EnsembleConfig {
        members: 2,
        net: small_net(),
        train: TrainConfig { epochs: 2, ..TrainConfig::default() },
    };
    let e = fit_ensemble(&s, &y, &cfg, &RngState::new(2)).unwrap();
    assert_eq!(e.loss_traces.len(), 2);
    let mut buf = Vec::new();
    e.save(&mut buf).unwrap();
    let back = InceptionEnsemble::load(buf.as_slice()).unwrap();
    assert_eq!(back.predict_proba(&s).unwrap(), e.predict_proba(&s).unwrap());
    let mut csv = Vec::new();
    e.write_loss_csv(&mut csv).unwrap();
    assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 1 + 2 * 2);
    assert!(InceptionEnsemble::load(&buf[..20]).is_err());
}

#[test]
fn p95_length_uses_nearest_rank() {
    let (mut s, _) = samples(20);
    for (i, x) in s.iter_mut().enumerate() {
        x.fixations.truncate(1 + i % 8);
    }
    // lengths 1..=8 with 1..=4 repeated; rank ceil(0.95·20) = 19 → 8
    assert_eq!(seq_len_p95(&s), 8);
    s.truncate(10);
    // rank ceil(9.5) = 10 of 1..=8,1,2 → 8
    assert_eq!(seq_len_p95(&s), 8);
}
