use std::f64::consts::PI;

use fudnn::connectivity::*;
use fudnn::eeg::{ChannelMatrix, Montage};
use fudnn::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;

/// Direct complex summation of e^{j(φ1 − φ2)} over trials and samples.
fn brute_force_plv(t: &PhaseTensor) -> Vec<f64> {
    let k = t.n_channels();
    let mut out = vec![0.0; k * k];
    for a in 0..k {
        for b in a + 1..k {
            let mut z = Complex64::new(0.0, 0.0);
            for n in 0..t.n_trials() {
                for (pa, pb) in t.series(n, a).iter().zip(t.series(n, b)) {
                    z += Complex64::from_polar(1.0, pa - pb);
                }
            }
            out[a * k + b] = z.norm() / (t.n_trials() * t.n_samples()) as f64;
        }
    }
    out
}

fn random_phases(rng: &mut ChaCha8Rng, n: usize, k: usize, t: usize) -> PhaseTensor {
    let phases = (0..n * k * t).map(|_| PI - rng.random::<f64>() * 2.0 * PI).collect();
    PhaseTensor::new(n, k, t, phases, 250.0, [0.5, 13.0]).unwrap()
}

#[test]
fn plv_matches_complex_sum_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let t = random_phases(&mut rng, 2, 3, 4);
    let got = plv_pairwise(&t).unwrap();
    for (g, w) in got.values().iter().zip(brute_force_plv(&t)) {
        assert!((g - w).abs() < 1e-12, "{g} vs {w}");
    }
}

#[test]
fn plv_oracle_agreement_over_small_shapes() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for k in 2..=4 {
        for n in 1..=3 {
            for t in 1..=8 {
                let tensor = random_phases(&mut rng, n, k, t);
                let got = plv_pairwise(&tensor).unwrap();
                for (g, w) in got.values().iter().zip(brute_force_plv(&tensor)) {
                    assert!((g - w).abs() < 1e-12);
                }
            }
        }
    }
}

#[test]
fn identical_series_lock_perfectly() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let series: Vec<f64> = (0..50).map(|_| PI - rng.random::<f64>() * 2.0 * PI).collect();
    let phases = [series.clone(), series].concat();
    let t = PhaseTensor::new(1, 2, 50, phases, 250.0, [0.5, 13.0]).unwrap();
    assert!((plv_pairwise(&t).unwrap().get(0, 1) - 1.0).abs() < 1e-12);
}

#[test]
fn alternating_difference_cancels() {
    let a = vec![0.0; 8];
    let b: Vec<f64> = (0..8).map(|i| if i % 2 == 0 { 0.0 } else { PI }).collect();
    let t = PhaseTensor::new(1, 2, 8, [a, b].concat(), 250.0, [0.5, 13.0]).unwrap();
    assert!(plv_pairwise(&t).unwrap().get(0, 1).abs() < 1e-12);
}

#[test]
fn random_instances_stay_in_unit_interval() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..1000 {
        let k = rng.random_range(2..6);
        let n = rng.random_range(1..4);
        let t = rng.random_range(1..20);
        let m = plv_pairwise(&random_phases(&mut rng, n, k, t)).unwrap();
        assert!(m.values().iter().all(|v| (0.0..=1.0).contains(v)));
    }
}

#[test]
fn degenerate_channel_is_named() {
    let montage = Montage::new(vec!["Fz".into(), "Cz".into(), "Oz".into()], "").unwrap();
    let rows = vec![
        (0..100).map(|i| (i as f64 * 0.3).sin()).collect(),
        vec![0.0; 100],
        (0..100).map(|i| (i as f64 * 0.3).cos()).collect(),
    ];
    let w = ChannelMatrix::from_rows_f64(&rows).unwrap();
    match fit_weights(&[w.clone()], &montage) {
        Err(Error::InvalidChannel { channel, .. }) => assert_eq!(channel, "Cz"),
        other => panic!("{other:?}"),
    }
    let tensor = extract_phases(&[w], &montage, 250.0, [0.5, 13.0]).unwrap();
    assert!(matches!(plv_pairwise(&tensor), Err(Error::InvalidChannel { channel, .. }) if channel == "Cz"));
}

#[test]
fn streaming_estimate_equals_tensor_path() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let montage = Montage::numbered(5).unwrap();
    let windows: Vec<ChannelMatrix> = (0..37)
        .map(|_| {
            let rows: Vec<Vec<f64>> =
                (0..5).map(|_| (0..64).map(|_| rng.random::<f64>() - 0.5).collect()).collect();
            ChannelMatrix::from_rows_f64(&rows).unwrap()
        })
        .collect();
    let streamed = plv_from_windows(&windows, &montage, &PlvOptions::default()).unwrap();
    let direct = plv_pairwise(&extract_phases(&windows, &montage, 250.0, [0.5, 13.0]).unwrap()).unwrap();
    for (a, b) in streamed.values().iter().zip(direct.values()) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn symmetrize_small_cases() {
    let p = PlvMatrix::new(2, vec![0.0, 0.4, 0.0, 0.0], PlvKind::UpperTriangular).unwrap();
    let s = symmetrize(&p).unwrap();
    assert_eq!((s.get(0, 1), s.get(1, 0)), (0.4, 0.4));
    assert_eq!(row_reduce(&s).unwrap(), vec![0.4, 0.4]);

    let z = symmetrize(&PlvMatrix::zeros(4, PlvKind::UpperTriangular)).unwrap();
    assert!(z.values().iter().all(|&v| v == 0.0));
    assert_eq!(row_reduce(&z).unwrap(), vec![0.0; 4]);

    assert!(matches!(symmetrize(&s), Err(Error::Contract(_))));
    assert!(PlvMatrix::new(2, vec![0.0, 0.0, 0.3, 0.0], PlvKind::UpperTriangular).is_err());
}

fn random_upper(rng: &mut ChaCha8Rng, k: usize) -> PlvMatrix {
    let mut v = vec![0.0; k * k];
    for i in 0..k {
        for j in i + 1..k {
            v[i * k + j] = rng.random::<f64>();
        }
    }
    PlvMatrix::new(k, v, PlvKind::UpperTriangular).unwrap()
}

#[test]
fn symmetric_and_reduced_against_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for k in 2..20 {
        let p = random_upper(&mut rng, k);
        let s = symmetrize(&p).unwrap();
        for i in 0..k {
            for j in 0..k {
                assert_eq!(s.get(i, j) - s.get(j, i), 0.0);
            }
        }
        let sums = row_reduce(&s).unwrap();
        for (col, got) in sums.iter().enumerate() {
            let mut want = 0.0;
            for row in 0..k {
                if row != col {
                    want += if row < col { p.get(row, col) } else { p.get(col, row) };
                }
            }
            assert!((got - want).abs() < 1e-12);
        }
    }
}

#[test]
fn minmax_examples() {
    assert_eq!(minmax_normalize(&[2.0, 4.0, 6.0]).unwrap().as_slice(), &[0.0, 0.5, 1.0]);
    assert_eq!(minmax_normalize(&[3.0; 5]).unwrap().as_slice(), &[1.0; 5]);
    assert!(minmax_normalize(&[1.0]).is_err());
}

fn argsort(v: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]).then(a.cmp(&b)));
    idx
}

#[test]
fn minmax_preserves_order_on_random_vectors() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..10_000 {
        let k = rng.random_range(2..40);
        let v: Vec<f64> = (0..k).map(|_| rng.random::<f64>() * 60.0).collect();
        let w = minmax_normalize(&v).unwrap();
        assert_eq!(argsort(&v), argsort(w.as_slice()));
        assert!(w.as_slice().iter().any(|&x| x == 0.0) && w.as_slice().iter().any(|&x| x == 1.0));
    }
}

#[test]
fn weighting_examples() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let x = ChannelMatrix::new(3, 10, (0..30).map(|_| rng.random::<f32>()).collect()).unwrap();
    assert_eq!(apply_weights(&x, &ChannelWeights::ones(3)).unwrap(), x);

    let w = ChannelWeights::new(vec![0.3, 0.0, 0.9]).unwrap();
    let y = apply_weights(&x, &w).unwrap();
    assert!(y.row(1).iter().all(|&v| v == 0.0));
    for c in 0..3 {
        for t in 0..10 {
            assert_eq!(y.row(c)[t].to_bits(), (x.row(c)[t] * w.as_slice()[c] as f32).to_bits());
        }
    }
    assert!(matches!(apply_weights(&x, &ChannelWeights::ones(4)), Err(Error::Contract(_))));
}

#[test]
fn threshold_examples() {
    let flat = symmetrize(
        &PlvMatrix::new(3, vec![0.0, 0.5, 0.5, 0.0, 0.0, 0.5, 0.0, 0.0, 0.0], PlvKind::UpperTriangular).unwrap(),
    )
    .unwrap();
    assert!(threshold_edges(&flat, 0.9).unwrap().is_empty());

    let one = symmetrize(
        &PlvMatrix::new(3, vec![0.0, 0.5, 0.95, 0.0, 0.0, 0.5, 0.0, 0.0, 0.0], PlvKind::UpperTriangular).unwrap(),
    )
    .unwrap();
    assert_eq!(threshold_edges(&one, 0.9).unwrap(), vec![Edge { k1: 0, k2: 2, value: 0.95 }]);
}

#[test]
fn threshold_matches_brute_force_filter() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..50 {
        let k = rng.random_range(2..15);
        let s = symmetrize(&random_upper(&mut rng, k)).unwrap();
        let th = rng.random::<f64>() * 1.5;
        let mut want = Vec::new();
        for i in 0..k {
            for j in 0..k {
                if i < j && s.get(i, j) > th {
                    want.push((i, j, s.get(i, j)));
                }
            }
        }
        want.sort_by(|a, b| b.2.partial_cmp(&a.2).unwrap().then((a.0, a.1).cmp(&(b.0, b.1))));
        let got: Vec<_> = threshold_edges(&s, th).unwrap().iter().map(|e| (e.k1, e.k2, e.value)).collect();
        assert_eq!(got, want);
    }
}

/// n Σxy − Σx Σy over the root of the product of the centred sums of squares.
fn textbook_pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (sx, sy): (f64, f64) = (x.iter().sum(), y.iter().sum());
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let sxx: f64 = x.iter().map(|a| a * a).sum();
    let syy: f64 = y.iter().map(|b| b * b).sum();
    (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt())
}

#[test]
fn pearson_examples_and_oracle() {
    let a = ChannelWeights::new(vec![0.0, 0.2, 1.0, 0.7]).unwrap();
    assert!((pearson_cc(&a, &a).unwrap() - 1.0).abs() < 1e-15);
    let b = ChannelWeights::new(a.as_slice().iter().map(|v| 1.0 - v).collect()).unwrap();
    assert!((pearson_cc(&a, &b).unwrap() + 1.0).abs() < 1e-15);
    assert!(matches!(
        pearson_cc(&a, &ChannelWeights::ones(4)),
        Err(Error::UndefinedCorrelation(_))
    ));

    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for _ in 0..200 {
        let x: Vec<f64> = (0..64).map(|_| rng.random()).collect();
        let y: Vec<f64> = (0..64).map(|_| rng.random()).collect();
        assert!((pearson(&x, &y).unwrap() - textbook_pearson(&x, &y)).abs() < 1e-12);
    }
}

#[test]
fn weights_json_round_trip() {
    let montage = Montage::default();
    let w = minmax_normalize(&(0..64).map(|i| ((i * 37) % 64) as f64).collect::<Vec<_>>()).unwrap();
    let json = weights_to_json(&w, &montage).unwrap();
    assert_eq!(json["Fz"], serde_json::json!(w.as_slice()[13]));
    assert_eq!(weights_from_json(&json, &montage).unwrap(), w);
}

#[test]
fn edges_csv_uses_labels() {
    let montage = Montage::new(vec!["Fz".into(), "Cz".into(), "Oz".into()], "").unwrap();
    let mut out = Vec::new();
    write_edges_csv(&[Edge { k1: 0, k2: 2, value: 0.95 }], &montage, &mut out).unwrap();
    assert_eq!(String::from_utf8(out).unwrap(), "k1_label,k2_label,value\nFz,Oz,0.95\n");
}

fn phase_vec(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-PI + 1e-9..=PI, len)
}

proptest! {
    #[test]
    fn common_offset_does_not_change_plv(phases in phase_vec(3 * 2 * 6), offset in -3.0f64..3.0) {
        let t = PhaseTensor::new(2, 3, 6, phases.clone(), 250.0, [0.5, 13.0]).unwrap();
        let shifted: Vec<f64> = phases.iter().map(|p| {
            let q = p + offset;
            let w = q - 2.0 * PI * ((q + PI) / (2.0 * PI)).floor();
            if w <= -PI { w + 2.0 * PI } else { w }
        }).collect();
        let u = PhaseTensor::new(2, 3, 6, shifted, 250.0, [0.5, 13.0]).unwrap();
        let (a, b) = (plv_pairwise(&t).unwrap(), plv_pairwise(&u).unwrap());
        for (x, y) in a.values().iter().zip(b.values()) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn trial_order_does_not_change_plv(phases in phase_vec(3 * 2 * 5)) {
        let t = PhaseTensor::new(3, 2, 5, phases.clone(), 250.0, [0.5, 13.0]).unwrap();
        let block = 2 * 5;
        let swapped = [&phases[2 * block..], &phases[block..2 * block], &phases[..block]].concat();
        let u = PhaseTensor::new(3, 2, 5, swapped, 250.0, [0.5, 13.0]).unwrap();
        prop_assert!((plv_pairwise(&t).unwrap().get(0, 1) - plv_pairwise(&u).unwrap().get(0, 1)).abs() < 1e-12);
    }

    #[test]
    fn self_locking_is_one(series in phase_vec(12)) {
        let t = PhaseTensor::new(1, 2, 12, [series.clone(), series].concat(), 250.0, [0.5, 13.0]).unwrap();
        prop_assert!((plv_pairwise(&t).unwrap().get(0, 1) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn weighting_is_linear(data in prop::collection::vec(-100.0f32..100.0, 12), alpha in prop::sample::select(vec![0.5f32, 2.0, -1.0, 4.0])) {
        // power-of-two scalars keep f32 products exact
        let w = ChannelWeights::new(vec![0.25, 0.5, 1.0]).unwrap();
        let x = ChannelMatrix::new(3, 4, data.clone()).unwrap();
        let ax = ChannelMatrix::new(3, 4, data.iter().map(|v| v * alpha).collect()).unwrap();
        let lhs = apply_weights(&ax, &w).unwrap();
        let rhs: Vec<f32> = apply_weights(&x, &w).unwrap().as_slice().iter().map(|v| v * alpha).collect();
        prop_assert_eq!(lhs.as_slice(), &rhs[..]);
    }

    #[test]
    fn minmax_is_within_unit_interval(v in prop::collection::vec(-1e6f64..1e6, 2..50)) {
        let w = minmax_normalize(&v).unwrap();
        prop_assert!(w.as_slice().iter().all(|x| (0.0..=1.0).contains(x)));
    }
}
