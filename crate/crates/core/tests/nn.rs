use fudnn::nn::gradcheck::{downscaled_spec, network_objective, relative_error, TapeObjective};
use fudnn::nn::*;
use fudnn::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// Fixed random projection that turns any output into a scalar loss.
fn projection(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn check<F>(leaves: Vec<Tensor<f64>>, build: F) -> f64
where
    F: FnMut(&mut Tape<f64>, &[Var]) -> fudnn::Result<Var>,
{
    let mut obj = TapeObjective::new(leaves, build);
    grad_check(&mut obj, 1e-6).unwrap().max_relative_error
}

fn project(tape: &mut Tape<f64>, y: Var, seed: u64) -> fudnn::Result<Var> {
    let n = tape.value(y).numel();
    tape.sum_weighted(y, projection(n, seed))
}

#[test]
fn conv_gradients() {
    for (xs, ws, stride) in [
        ([2, 2, 3, 12], [3, 2, 2, 4], (1, 1)),
        ([2, 2, 3, 12], [3, 2, 2, 4], (1, 2)),
        ([2, 6, 2, 10], [6, 6, 1, 3], (1, 1)),
    ] {
        let err = check(vec![random(&xs, 1), random(&ws, 2), random(&[ws[0]], 3)], |t, v| {
            let y = t.conv2d(v[0], v[1], Some(v[2]), stride)?;
            project(t, y, 4)
        });
        assert!(err < 1e-4, "{xs:?} {ws:?} {stride:?}: {err}");
    }
}

#[test]
fn batch_norm_gradients() {
    let err = check(vec![random(&[3, 2, 2, 5], 5), random(&[2], 6), random(&[2], 7)], |t, v| {
        let (y, _) = t.batch_norm_train(v[0], v[1], v[2], 1e-5)?;
        project(t, y, 8)
    });
    assert!(err < 1e-4, "train {err}");
    let err = check(vec![random(&[3, 2, 2, 5], 5), random(&[2], 6), random(&[2], 7)], |t, v| {
        let y = t.batch_norm_eval(v[0], v[1], v[2], &[0.1, -0.2], &[0.5, 2.0], 1e-5)?;
        project(t, y, 8)
    });
    assert!(err < 1e-4, "eval {err}");
}

#[test]
fn elu_gradient() {
    // keep every input away from the kink at zero
    let mut x = random(&[4, 30], 9);
    x.data_mut().iter_mut().for_each(|v| *v += 0.05 * v.signum());
    let err = check(vec![x], |t, v| {
        let y = t.elu(v[0])?;
        project(t, y, 10)
    });
    assert!(err < 1e-6, "{err}");
}

#[test]
fn avg_pool_gradient() {
    let err = check(vec![random(&[2, 3, 2, 23], 11)], |t, v| {
        let y = t.avg_pool(v[0], 7, 7)?;
        project(t, y, 12)
    });
    assert!(err < 1e-6, "{err}");
}

#[test]
fn depthwise_gradient() {
    let err = check(vec![random(&[2, 3, 5, 6], 13), random(&[3, 5], 14), random(&[3], 15)], |t, v| {
        let y = t.depthwise(v[0], v[1], Some(v[2]))?;
        project(t, y, 16)
    });
    assert!(err < 1e-4, "{err}");
}

#[test]
fn bilstm_gradient() {
    let (f, h) = (4, 2);
    let leaves = vec![
        random(&[2, 3, f], 17),
        random(&[f, 4 * h], 18),
        random(&[h, 4 * h], 19),
        random(&[4 * h], 20),
        random(&[f, 4 * h], 21),
        random(&[h, 4 * h], 22),
        random(&[4 * h], 23),
    ];
    let err = check(leaves, |t, v| {
        let fwd = LstmVars { w_ih: v[1], w_hh: v[2], bias: v[3] };
        let bwd = LstmVars { w_ih: v[4], w_hh: v[5], bias: v[6] };
        let y = bilstm(t, v[0], fwd, bwd)?;
        assert_eq!(t.shape(y), &[2, 3, 2 * h]);
        project(t, y, 24)
    });
    assert!(err < 1e-4, "{err}");
}

#[test]
fn dense_softmax_gradient() {
    let err = check(vec![random(&[5, 6], 25), random(&[6, 4], 26), random(&[4], 27)], |t, v| {
        let z = t.matmul(v[0], v[1])?;
        let z = t.add_bias(z, v[2])?;
        t.softmax_cross_entropy(z, &[0, 1, 2, 3, 1])
    });
    assert!(err < 1e-6, "{err}");
}

#[test]
fn linear_layer_gradient() {
    let err = check(vec![random(&[3, 5], 28), random(&[5, 2], 29)], |t, v| {
        let z = t.matmul(v[0], v[1])?;
        project(t, z, 30)
    });
    assert!(err < 1e-8, "{err}");
}

#[test]
fn full_stack_gradients() {
    for arch in Architecture::ALL {
        let report = grad_check_network(downscaled_spec(3).with_architecture(arch), 31, 1e-6).unwrap();
        assert!(report.max_relative_error < 1e-4, "{arch:?}: {report:?}");
        assert!(report.n_checked > 0);
    }
}

#[test]
fn corrupted_backward_is_caught() {
    let spec = downscaled_spec(3);
    let inner = network_objective(spec, 4, 32).unwrap();
    // the first parameter block is conv1.bias; scale conv1.weight instead
    let n_bias = inner.network.params()[0].value.numel();
    let n_weight = inner.network.params()[1].value.numel();
    let mut broken = ScaledGradient { inner, range: n_bias..n_bias + n_weight, factor: 1.5 };
    let report = grad_check(&mut broken, 1e-6).unwrap();
    assert!(report.max_relative_error > 1e-2, "{report:?}");
}

#[test]
fn relative_error_is_symmetric_and_floored() {
    assert_eq!(relative_error(1.0, 1.0), 0.0);
    assert_eq!(relative_error(2.0, 1.0), relative_error(1.0, 2.0));
    assert!((relative_error(1e-12, 0.0) - 1e-7).abs() < 1e-19);
}

#[test]
fn dropout_rate_and_identities() {
    let mut tape = Tape::<f64>::new();
    let x = tape.leaf(Tensor::filled([100_000], 1.0), false);
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let y = tape.dropout(x, 0.5, &mut rng).unwrap();
    let data = tape.value(y).data();
    let dropped = data.iter().filter(|&&v| v == 0.0).count() as f64 / data.len() as f64;
    assert!((dropped - 0.5).abs() < 0.01, "{dropped}");
    assert!(data.iter().all(|&v| v == 0.0 || v == 2.0));

    let z = tape.dropout(x, 0.0, &mut rng).unwrap();
    assert_eq!(tape.value(z).data(), tape.value(x).data());
    assert!(matches!(tape.dropout(x, 1.0, &mut rng), Err(Error::Config(_))));
}

#[test]
fn eval_forward_is_pure_and_dropout_free() {
    let spec = downscaled_spec(3);
    let net = Network::<f64>::new(spec, 34).unwrap();
    let before = net.clone();
    let x = random(&[3, 6, 90], 35);
    let a = net.predict_proba(&x).unwrap();
    let b = net.predict_proba(&x).unwrap();
    assert_eq!(a, b);
    assert_eq!(net, before);
}

#[test]
fn batch_norm_standardizes() {
    let mut tape = Tape::<f64>::new();
    let x = random(&[4, 3, 2, 9], 36);
    let xv = tape.leaf(x, false);
    let g = tape.leaf(Tensor::filled([3], 1.0), false);
    let b = tape.leaf(Tensor::zeros([3]), false);
    let (y, stats) = tape.batch_norm_train(xv, g, b, 0.0).unwrap();
    let y = tape.value(y).data().to_vec();
    for m in 0..3 {
        let vals: Vec<f64> =
            (0..4).flat_map(|bi| y[(bi * 3 + m) * 18..(bi * 3 + m + 1) * 18].iter().copied()).collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
        assert!(mean.abs() < 1e-6 && (var - 1.0).abs() < 1e-6, "{mean} {var}");
    }
    assert_eq!(stats.mean.len(), 3);

    // already standardized input passes through
    let ys = Tensor::new([4, 3, 2, 9], y.clone()).unwrap();
    let yv = tape.leaf(ys, false);
    let (z, _) = tape.batch_norm_train(yv, g, b, 1e-12).unwrap();
    for (p, q) in tape.value(z).data().iter().zip(&y) {
        assert!((p - q).abs() < 1e-6);
    }

    let one = tape.leaf(Tensor::zeros([1, 3, 2, 9]), false);
    assert!(matches!(tape.batch_norm_train(one, g, b, 1e-5), Err(Error::Config(_))));
}

#[test]
fn elu_values() {
    let mut tape = Tape::<f64>::new();
    let x = tape.leaf(Tensor::new([3], vec![0.0, -20.0, 2.5]).unwrap(), false);
    let y = tape.elu(x).unwrap();
    let y = tape.value(y).data();
    assert_eq!(y[0], 0.0);
    assert!((y[1] + 1.0).abs() < 1e-8);
    assert_eq!(y[2], 2.5);
}

#[test]
fn softmax_properties() {
    let mut tape = Tape::<f64>::new();
    let z = tape.leaf(Tensor::zeros([2, 4]), false);
    let loss = tape.softmax_cross_entropy(z, &[0, 3]).unwrap();
    assert!((tape.value(loss).data()[0] - 4f64.ln()).abs() < 1e-12);

    let logits = random(&[50, 4], 37).data().iter().map(|v| v * 10.0).collect::<Vec<_>>();
    let p = softmax_rows(&logits, 4);
    for row in p.chunks(4) {
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(row.iter().all(|&v| v > 0.0 && v < 1.0));
    }
    let mut tape = Tape::<f64>::new();
    let z = tape.leaf(Tensor::new([50, 4], logits).unwrap(), false);
    let labels: Vec<usize> = (0..50).map(|i| i % 4).collect();
    let loss = tape.softmax_cross_entropy(z, &labels).unwrap();
    assert!(tape.value(loss).data()[0] >= 0.0);
}

#[test]
fn argmax_prefers_lowest_index() {
    assert_eq!(argmax(&[0.25, 0.25, 0.25, 0.25]), 0);
    assert_eq!(argmax(&[0.1, 0.4, 0.4, 0.1]), 1);
}

fn one_param(values: Vec<f64>) -> Vec<Param<f64>> {
    let n = values.len();
    vec![Param { name: "w".into(), value: Tensor::new([n], values).unwrap(), trainable: true }]
}

#[test]
fn adam_matches_hand_computation() {
    let cfg = AdamConfig::default();
    let mut params = one_param(vec![0.5, -1.0, 2.0]);
    let mut adam = Adam::new(cfg, &params);
    let g1 = vec![0.3, -0.2, 0.0];
    let g2 = vec![-0.1, 0.4, 1e-3];
    adam.step(&mut params, &[Some(g1.clone())]).unwrap();
    adam.step(&mut params, &[Some(g2.clone())]).unwrap();

    for (i, &theta0) in [0.5, -1.0, 2.0].iter().enumerate() {
        let (mut m, mut v, mut theta) = (0.0f64, 0.0f64, theta0);
        for (t, g) in [g1[i], g2[i]].iter().enumerate() {
            let t = t as i32 + 1;
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let mh = m / (1.0 - 0.9f64.powi(t));
            let vh = v / (1.0 - 0.999f64.powi(t));
            theta -= 1e-3 * mh / (vh.sqrt() + 1e-8);
        }
        let got = params[0].value.data()[i];
        assert!((got - theta).abs() < 1e-12, "{i}: {got} vs {theta}");
    }
    // first step moves each coordinate by about lr against the gradient sign
    let mut p = one_param(vec![0.0]);
    let mut a = Adam::new(cfg, &p);
    a.step(&mut p, &[Some(vec![7.0])]).unwrap();
    assert!((p[0].value.data()[0] + 1e-3 * 7.0 / (7.0 + 1e-8)).abs() < 1e-12);
}

#[test]
fn adam_zero_gradient_is_a_no_op() {
    let mut params = one_param(vec![0.5, -1.0]);
    let mut adam = Adam::new(AdamConfig::default(), &params);
    adam.step(&mut params, &[Some(vec![0.0, 0.0])]).unwrap();
    assert_eq!(params[0].value.data(), &[0.5, -1.0]);
}

#[test]
fn table_one_forward_on_zeros() {
    let net = Network::<f32>::new(NetworkSpec::table_one(4), 38).unwrap();
    let x = Tensor::<f32>::zeros([1, 64, 500]);
    let mut tape = Tape::new();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let out = net.forward(&mut tape, &x, Mode::Eval, &mut rng).unwrap();
    let rows: Vec<(String, Vec<usize>)> = out.trace.iter().map(|r| (r.block.clone(), r.output.clone())).collect();
    let want: Vec<(String, Vec<usize>)> = [
        ("conv1", vec![40, 64, 451]),
        ("conv2", vec![80, 64, 402]),
        ("pool1", vec![80, 64, 57]),
        ("depthwise", vec![80, 1, 57]),
        ("pool2", vec![80, 1, 8]),
        ("bilstm", vec![8, 200]),
        ("flatten", vec![1, 1600]),
        ("dense", vec![1, 4]),
    ]
    .into_iter()
    .map(|(b, s)| (b.to_string(), s))
    .collect();
    assert_eq!(rows, want);
    let p = net.predict_proba(&x).unwrap();
    assert!(p.iter().all(|v| v.is_finite()));
    assert!((p.iter().map(|&v| v as f64).sum::<f64>() - 1.0).abs() < 1e-6);
}

#[test]
fn mismatched_input_is_a_shape_error() {
    let net = Network::<f32>::new(downscaled_spec(3), 39).unwrap();
    assert!(matches!(net.predict_proba(&Tensor::zeros([1, 6, 91])), Err(Error::Shape(_))));
}

/// Classes differ by which channel carries a 10 Hz tone.
fn tone_data(n: usize, k: usize, t: usize, seed: u64) -> TrainData {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Vec::with_capacity(n * k * t);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let label = i % 3;
        let phase = rng.random_range(0.0..std::f64::consts::TAU);
        for ch in 0..k {
            for s in 0..t {
                let tone = if ch == label { (std::f64::consts::TAU * 10.0 * s as f64 / 100.0 + phase).sin() } else { 0.0 };
                x.push((tone + 0.3 * rng.random_range(-1.0..1.0)) as f32);
            }
        }
        y.push(label);
    }
    TrainData::new(k, t, x, y).unwrap()
}

fn small_spec() -> NetworkSpec {
    NetworkSpec { lstm_hidden: 4, ..downscaled_spec(3) }.with_input(6, 90)
}

#[test]
fn training_reduces_loss() {
    let data = tone_data(96, 6, 90, 40);
    let cfg = TrainConfig { epochs: 10, batch_size: 16, ..Default::default() };
    let cfg = TrainConfig { adam: AdamConfig { lr: 1e-2, ..cfg.adam }, ..cfg };
    let mut state = TrainState::new(Network::<f32>::new(small_spec(), 41).unwrap(), &cfg, 41);
    let losses: Vec<f64> = (0..cfg.epochs).map(|_| train_epoch(&mut state, &data, &cfg).unwrap().loss).collect();
    assert!(losses[9] < losses[0], "{losses:?}");
    assert!(losses[7..].iter().sum::<f64>() < losses[..3].iter().sum::<f64>(), "{losses:?}");
}

#[test]
fn training_is_deterministic() {
    let data = tone_data(40, 6, 90, 42);
    let cfg = TrainConfig { epochs: 2, batch_size: 8, ..Default::default() };
    let run = || {
        let mut state = TrainState::new(Network::<f32>::new(small_spec(), 43).unwrap(), &cfg, 43);
        for _ in 0..cfg.epochs {
            train_epoch(&mut state, &data, &cfg).unwrap();
        }
        state
    };
    let (a, b) = (run(), run());
    assert_eq!(a.network, b.network);
    assert_eq!(a.adam, b.adam);
    assert_eq!(a.epoch, 2);
}

#[test]
fn checkpoint_round_trip() {
    let data = tone_data(16, 6, 90, 44);
    let cfg = TrainConfig { epochs: 1, batch_size: 8, ..Default::default() };
    let mut state = TrainState::new(Network::<f32>::new(small_spec(), 45).unwrap(), &cfg, 45);
    train_epoch(&mut state, &data, &cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = save_checkpoint(&state.network, 45, 1, dir.path(), "model").unwrap();
    let (net, manifest) = load_checkpoint(&path).unwrap();
    assert_eq!(net, state.network);
    assert_eq!(manifest.format, CHECKPOINT_FORMAT);
    assert_eq!((manifest.seed, manifest.epoch), (45, 1));
    assert_eq!(predict(&net, &data, 8).unwrap(), predict(&state.network, &data, 8).unwrap());
}

#[test]
fn unit_impulse_kernel_copies_input() {
    let mut tape = Tape::<f64>::new();
    let x = random(&[1, 1, 3, 10], 46);
    let mut w = Tensor::zeros([1, 1, 1, 4]);
    w.data_mut()[2] = 1.0;
    let xv = tape.leaf(x.clone(), false);
    let wv = tape.leaf(w, false);
    let y = tape.conv2d(xv, wv, None, (1, 1)).unwrap();
    assert_eq!(tape.shape(y), &[1, 1, 3, 7]);
    for h in 0..3 {
        assert_eq!(&tape.value(y).data()[h * 7..(h + 1) * 7], &x.data()[h * 10 + 2..h * 10 + 9]);
    }
    let big = tape.leaf(Tensor::zeros([1, 1, 1, 11]), false);
    assert!(matches!(tape.conv2d(xv, big, None, (1, 1)), Err(Error::Shape(_))));
}

#[test]
fn one_hot_depthwise_selects_a_channel() {
    let mut tape = Tape::<f64>::new();
    let x = random(&[1, 2, 4, 5], 47);
    let mut w = Tensor::zeros([2, 4]);
    w.data_mut()[2] = 1.0;
    w.data_mut()[4 + 1] = 1.0;
    let xv = tape.leaf(x.clone(), false);
    let wv = tape.leaf(w, false);
    let y = tape.depthwise(xv, wv, None).unwrap();
    assert_eq!(tape.shape(y), &[1, 2, 1, 5]);
    assert_eq!(&tape.value(y).data()[..5], &x.data()[10..15]);
    assert_eq!(&tape.value(y).data()[5..], &x.data()[20 + 5..20 + 10]);
}

#[test]
fn zero_lstm_gives_zero_output() {
    let mut tape = Tape::<f64>::new();
    let x = tape.leaf(random(&[2, 8, 5], 48), false);
    let mut dir = || LstmVars {
        w_ih: tape.leaf(Tensor::zeros([5, 12]), false),
        w_hh: tape.leaf(Tensor::zeros([3, 12]), false),
        bias: tape.leaf(Tensor::zeros([12]), false),
    };
    let (f, b) = (dir(), dir());
    let y = bilstm(&mut tape, x, f, b).unwrap();
    assert_eq!(tape.shape(y), &[2, 8, 6]);
    assert!(tape.value(y).data().iter().all(|&v| v == 0.0));
}
