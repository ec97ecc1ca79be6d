use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vld_core::numerics::{AdamConfig, AdamState, ParameterStore, Tape, Tensor};
use vld_core::Error;

fn t64(shape: &[usize], data: &[f64]) -> Tensor<f64> {
    Tensor::from_f64(shape, data).unwrap()
}

#[test]
fn matmul_small_cases() {
    let mut tape = Tape::<f64>::new();
    let i = tape.constant(t64(&[2, 2], &[1.0, 0.0, 0.0, 1.0])).unwrap();
    let b = tape.constant(t64(&[2, 2], &[3.0, 4.0, 5.0, 6.0])).unwrap();
    let y = tape.matmul(i, b).unwrap();
    assert_eq!(tape.value(y).data(), &[3.0, 4.0, 5.0, 6.0]);

    let a = tape.constant(t64(&[1, 2], &[1.0, 2.0])).unwrap();
    let c = tape.constant(t64(&[2, 1], &[3.0, 4.0])).unwrap();
    let y = tape.matmul(a, c).unwrap();
    assert_eq!(tape.value(y).data(), &[11.0]);

    assert!(matches!(tape.matmul(a, a), Err(Error::Config(_))));
}

#[test]
fn matmul_matches_triple_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (p, q, r) = (5, 7, 3);
    let a: Vec<f64> = (0..p * q).map(|_| rng.random_range(-1.0..1.0)).collect();
    let b: Vec<f64> = (0..q * r).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut expected = vec![0.0; p * r];
    for i in 0..p {
        for j in 0..r {
            for k in 0..q {
                expected[i * r + j] += a[i * q + k] * b[k * r + j];
            }
        }
    }
    let mut tape = Tape::<f32>::new();
    let va = tape.constant(Tensor::from_f64(&[p, q], &a).unwrap()).unwrap();
    let vb = tape.constant(Tensor::from_f64(&[q, r], &b).unwrap()).unwrap();
    let y = tape.matmul(va, vb).unwrap();
    for (got, want) in tape.value(y).data().iter().zip(&expected) {
        let rel = (f64::from(*got) - want).abs() / want.abs().max(1e-3);
        assert!(rel < 1e-6, "{got} vs {want}");
    }
}

#[test]
fn softmax_cross_entropy_layer_norm_definitions() {
    let mut tape = Tape::<f64>::new();
    let x = tape.constant(t64(&[1, 4], &[0.0; 4])).unwrap();
    let s = tape.softmax(x).unwrap();
    assert_eq!(tape.value(s).data(), &[0.25; 4]);

    // rows sum to one
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let data: Vec<f64> = (0..30).map(|_| rng.random_range(-5.0..5.0)).collect();
    let x = tape.constant(t64(&[5, 6], &data)).unwrap();
    let s = tape.softmax(x).unwrap();
    for row in tape.value(s).data().chunks(6) {
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
    }

    let logits = tape
        .constant(t64(&[2, 3], &[0.0, 800.0, 0.0, 0.0, 0.0, 900.0]))
        .unwrap();
    let ce = tape.cross_entropy(logits, &[1, 2]).unwrap();
    assert!(tape.value(ce).item().abs() < 1e-6);
    assert!(matches!(tape.cross_entropy(logits, &[1, 3]), Err(Error::Data(_))));

    let g = tape.constant(t64(&[6], &[1.0; 6])).unwrap();
    let b = tape.constant(t64(&[6], &[0.0; 6])).unwrap();
    let ln = tape.layer_norm(x, g, b, 0.0).unwrap();
    for row in tape.value(ln).data().chunks(6) {
        let mean = row.iter().sum::<f64>() / 6.0;
        let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 6.0;
        assert!(mean.abs() < 1e-5 && (var - 1.0).abs() < 1e-5);
    }
}

#[test]
fn causal_softmax_masks_future() {
    let mut tape = Tape::<f64>::new();
    let x = tape.constant(t64(&[3, 3], &[1.0; 9])).unwrap();
    let s = tape.causal_softmax(x).unwrap();
    let v = tape.value(s).data();
    assert_eq!(&v[0..3], &[1.0, 0.0, 0.0]);
    assert_eq!(&v[3..6], &[0.5, 0.5, 0.0]);
}

#[test]
fn shared_parameter_gradient_sums_uses() {
    // y = w * (w * x), x = 2, w = 3  =>  dy/dw = 2 w x = 12
    let mut store = ParameterStore::<f64>::new();
    let w = store.register("w", t64(&[1, 1], &[3.0])).unwrap();
    let unused = store.register("u", t64(&[1, 1], &[5.0])).unwrap();
    let mut tape = Tape::new();
    let x = tape.constant(t64(&[1, 1], &[2.0])).unwrap();
    let wv = tape.param(&store, w).unwrap();
    let wx = tape.matmul(wv, x).unwrap();
    let wv2 = tape.param(&store, w).unwrap();
    let y = tape.matmul(wv2, wx).unwrap();
    assert_eq!(tape.value(y).item(), 18.0);
    tape.backward(y, &mut store).unwrap();
    assert_eq!(store.get(w).grad.data(), &[12.0]);
    assert_eq!(store.get(unused).grad.data(), &[0.0]);
}

#[test]
fn backward_requires_scalar_on_this_tape() {
    let mut store = ParameterStore::<f64>::new();
    let mut other = Tape::<f64>::new();
    let mut tape = Tape::<f64>::new();
    let x = tape.constant(t64(&[2], &[1.0, 2.0])).unwrap();
    assert!(matches!(tape.backward(x, &mut store), Err(Error::Usage(_))));
    assert!(matches!(other.backward(x, &mut store), Err(Error::Usage(_))));
}

#[test]
fn non_finite_forward_is_an_error() {
    let mut tape = Tape::<f32>::new();
    let x = tape.constant(Tensor::new(vec![1], vec![f32::MAX]).unwrap()).unwrap();
    assert!(matches!(tape.scale(x, 10.0), Err(Error::NonFinite { .. })));
}

#[test]
fn adam_minimizes_convex_quadratic() {
    // f(w) = sum_i c_i (w_i - t_i)^2, minimum 0 at w = t
    let target = [1.5, -2.0, 0.25];
    let curv = [1.0, 3.0, 0.5];
    let mut store = ParameterStore::<f64>::new();
    let w = store.register("w", t64(&[3], &[0.0; 3])).unwrap();
    let mut adam = AdamState::new(&store, AdamConfig::with_lr(0.1)).unwrap();
    let loss = |s: &ParameterStore<f64>| -> f64 {
        s.value(w)
            .data()
            .iter()
            .zip(target.iter().zip(&curv))
            .map(|(v, (t, c))| c * (v - t).powi(2))
            .sum()
    };
    let start = loss(&store);
    for _ in 0..100 {
        let g: Vec<f64> = store
            .value(w)
            .data()
            .iter()
            .zip(target.iter().zip(&curv))
            .map(|(v, (t, c))| 2.0 * c * (v - t))
            .collect();
        store.get_mut(w).grad.data_mut().copy_from_slice(&g);
        adam.step(&mut store).unwrap();
    }
    assert!(loss(&store) < 1e-3 * start, "{} from {start}", loss(&store));
}
