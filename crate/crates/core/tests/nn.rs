mod common;

use common::*;
use imle_complete::geometry::PointCloud;
use imle_complete::metrics::emd_exact;
use imle_complete::nn::*;
use rand::Rng;

fn random_matrix(rng: &mut rand_chacha::ChaCha8Rng, rows: usize, cols: usize) -> Matrix<f64> {
    Matrix::from_vec(
        rows,
        cols,
        (0..rows * cols)
            .map(|_| rng.random_range(-1.0..1.0))
            .collect(),
    )
    .unwrap()
}

/// Checks input and parameter gradients of `build` (which maps an input node
/// and bound store to an output node) against finite differences of
/// `sum(output * probe)`.
fn check_layer(
    seed: u64,
    input_shape: (usize, usize),
    params: Vec<(&str, (usize, usize))>,
    build: impl Fn(&mut Tape<'_, f64>, NodeId, StoreId, &ParamStore<f64>) -> NodeId,
) {
    let mut rng = rng(seed);
    for _ in 0..20 {
        let x = random_matrix(&mut rng, input_shape.0, input_shape.1);
        let mut store = ParamStore::new();
        for (name, (r, c)) in &params {
            store
                .insert(*name, random_matrix(&mut rng, *r, *c))
                .unwrap();
        }
        let forward = |x: &Matrix<f64>, store: &ParamStore<f64>| -> Matrix<f64> {
            let mut tape = Tape::new();
            let s = tape.bind(store, true);
            let xi = tape.input(x.clone());
            let out = build(&mut tape, xi, s, store);
            tape.value(out).clone()
        };
        let out_shape = forward(&x, &store).shape();
        let probe = random_matrix(&mut rng, out_shape.0, out_shape.1);
        let loss = |m: &Matrix<f64>| {
            m.data()
                .iter()
                .zip(probe.data())
                .map(|(a, b)| a * b)
                .sum::<f64>()
        };

        let mut tape = Tape::new();
        let s = tape.bind(&store, true);
        let xi = tape.input_with_grad(x.clone());
        let out = build(&mut tape, xi, s, &store);
        let back = tape.backward(&[(out, &probe)]).unwrap();

        let fd_x = finite_difference(x.data(), 1e-5, |v| {
            loss(&forward(
                &Matrix::from_vec(x.rows(), x.cols(), v.to_vec()).unwrap(),
                &store,
            ))
        });
        let gx = back.node(xi).unwrap().data().to_vec();
        assert!(
            relative_error(&gx, &fd_x) < 1e-3,
            "input grad {gx:?} vs {fd_x:?}"
        );

        for p in 0..store.len() {
            let fd_p = finite_difference(store.get(p).value.data(), 1e-5, |v| {
                let mut moved = store.clone();
                moved.values_mut(p).copy_from_slice(v);
                loss(&forward(&x, &moved))
            });
            let gp = &back.store(s).arrays[p];
            assert!(
                relative_error(gp, &fd_p) < 1e-3,
                "param {} grad {gp:?} vs {fd_p:?}",
                store.get(p).name
            );
        }
    }
}

#[test]
fn affine_gradients() {
    check_layer(
        10,
        (5, 4),
        vec![("w", (4, 3)), ("b", (1, 3))],
        |t, x, s, _| {
            let (w, b) = (t.param(s, 0), t.param(s, 1));
            t.affine(x, w, b).unwrap()
        },
    );
}

#[test]
fn activation_gradients() {
    for (i, kind) in [Activation::Relu, Activation::LeakyRelu, Activation::Tanh]
        .into_iter()
        .enumerate()
    {
        check_layer(11 + i as u64, (4, 6), vec![], move |t, x, _, _| {
            t.activate(x, kind)
        });
    }
}

#[test]
fn layer_norm_gradients() {
    check_layer(
        14,
        (3, 7),
        vec![("gain", (1, 7)), ("shift", (1, 7))],
        |t, x, s, _| {
            let (g, b) = (t.param(s, 0), t.param(s, 1));
            t.layer_norm(x, g, b).unwrap()
        },
    );
}

#[test]
fn max_pool_gradients() {
    check_layer(15, (6, 5), vec![], |t, x, _, _| t.max_pool_rows(x));
}

#[test]
fn concat_and_reshape_gradients() {
    check_layer(16, (2, 3), vec![("y", (2, 4))], |t, x, s, _| {
        let y = t.param(s, 0);
        let c = t.concat_cols(x, y).unwrap();
        t.reshape(c, 7, 2).unwrap()
    });
}

#[test]
fn linear_weight_gradient_is_outer_product() {
    let x = Matrix::from_vec(1, 2, vec![2.0, -3.0]).unwrap();
    let mut store = ParamStore::new();
    store
        .insert(
            "w",
            Matrix::from_vec(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap(),
        )
        .unwrap();
    store
        .insert("b", Matrix::row_vector(vec![0.0, 0.0]))
        .unwrap();
    let mut tape = Tape::new();
    let s = tape.bind(&store, true);
    let xi = tape.input(x);
    let (w, b) = (tape.param(s, 0), tape.param(s, 1));
    let y = tape.affine(xi, w, b).unwrap();
    let seed = Matrix::row_vector(vec![1.0, 10.0]);
    let back = tape.backward(&[(y, &seed)]).unwrap();
    assert_eq!(back.store(s).arrays[0], vec![2.0, 20.0, -3.0, -30.0]);
    assert_eq!(back.store(s).arrays[1], vec![1.0, 10.0]);
}

#[test]
fn max_pool_routes_gradient_to_argmax_only() {
    let x = Matrix::from_vec(3, 2, vec![1.0, 5.0, 4.0, 2.0, 3.0, 5.0]).unwrap();
    let mut tape = Tape::new();
    let xi = tape.input_with_grad(x);
    let p = tape.max_pool_rows(xi);
    let back = tape
        .backward(&[(p, &Matrix::row_vector(vec![1.0, 1.0]))])
        .unwrap();
    // Column 1 ties between rows 0 and 2; the lower row wins.
    assert_eq!(
        back.node(xi).unwrap().data(),
        &[0.0, 1.0, 1.0, 0.0, 0.0, 0.0]
    );
}

fn small_spec() -> NetworkSpec {
    NetworkSpec {
        latent_dim: 6,
        noise_dim: 3,
        encoder_hidden: vec![5, 7],
        decoder_hidden: vec![9],
        generator_hidden: vec![8, 8],
        ..NetworkSpec::for_clouds(8, 2)
    }
}

#[test]
fn autoencoder_emd_loss_gradient_matches_finite_differences() {
    let spec = small_spec();
    let mut rng = rng(20);
    for case in 0..20 {
        let ae = Autoencoder::<f64>::init(&spec, case).unwrap();
        let cloud = random_cloud(&mut rng, 8, 2);
        let (_, grads) = imle_complete::imle::reconstruction_loss_and_grad(&ae, &cloud).unwrap();
        // Check a slice of every parameter array; the matching is held fixed by
        // the small step.
        for p in 0..ae.params.len() {
            let values = ae.params.get(p).value.data().to_vec();
            let take = values.len().min(6);
            let fd = finite_difference(&values[..take], 1e-5, |v| {
                let mut moved = ae.clone();
                moved.params.values_mut(p)[..take].copy_from_slice(v);
                emd_exact(&cloud, &moved.reconstruct(&cloud).unwrap())
                    .unwrap()
                    .mean_cost()
            });
            let g = &grads.arrays[p][..take];
            let scale = grads.max_abs().max(1e-3);
            let err = g
                .iter()
                .zip(&fd)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
                / scale;
            assert!(
                err < 1e-3,
                "case {case} param {}: {g:?} vs {fd:?}",
                ae.params.get(p).name
            );
        }
    }
}

#[test]
fn generator_gradient_matches_finite_differences() {
    let spec = small_spec();
    let mut rng = rng(21);
    for case in 0..20 {
        let g = Generator::<f64>::init(&spec, case).unwrap();
        let x = LatentCode(
            (0..6)
                .map(|_| rng.random_range(-1.0..1.0))
                .collect::<Vec<f64>>(),
        );
        let z = LatentCode(
            (0..3)
                .map(|_| rng.random_range(-1.0..1.0))
                .collect::<Vec<f64>>(),
        );
        let probe: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let loss = |g: &Generator<f64>| {
            g.generate(&x, &z)
                .unwrap()
                .0
                .iter()
                .zip(&probe)
                .map(|(a, b)| a * b)
                .sum::<f64>()
        };

        let mut tape = Tape::new();
        let s = tape.bind(&g.params, true);
        let xi = tape.input(Matrix::row_vector(x.0.clone()));
        let zi = tape.input(Matrix::row_vector(z.0.clone()));
        let out = g.record(&mut tape, s, xi, Some(zi)).unwrap();
        let back = tape
            .backward(&[(out, &Matrix::row_vector(probe.clone()))])
            .unwrap();
        let analytic = back.store(s).arrays.concat();
        let fd = finite_difference(&g.params.flatten(), 1e-5, |v| {
            let mut moved = g.clone();
            let mut offset = 0;
            for p in 0..moved.params.len() {
                let len = moved.params.get(p).value.data().len();
                moved
                    .params
                    .values_mut(p)
                    .copy_from_slice(&v[offset..offset + len]);
                offset += len;
            }
            loss(&moved)
        });
        assert!(relative_error(&analytic, &fd) < 1e-3, "case {case}");
    }
}

#[test]
fn default_parameter_counts() {
    let spec = NetworkSpec::for_clouds(128, 2);
    let ae = Autoencoder::<f64>::init(&spec, 0).unwrap();
    let encoder: usize = ae
        .params
        .iter()
        .filter(|p| p.name.starts_with("encoder."))
        .map(|p| p.value.data().len())
        .sum();
    let decoder: usize = ae
        .params
        .iter()
        .filter(|p| p.name.starts_with("decoder."))
        .map(|p| p.value.data().len())
        .sum();
    // encoder 2-64-128-128 with layer norm on both hidden layers
    assert_eq!(
        encoder,
        2 * 64 + 64 * 128 + 128 * 128 + (64 + 128 + 128) + 2 * (64 + 128)
    );
    assert_eq!(encoder, 25_408);
    // decoder 128-256-256
    assert_eq!(decoder, 99_328);
    // generator (128 + 32)-256-256-128
    assert_eq!(
        Generator::<f64>::init(&spec, 0)
            .unwrap()
            .params
            .scalar_count(),
        140_928
    );
}

#[test]
fn encoder_is_permutation_invariant_bitwise() {
    let spec = NetworkSpec::for_clouds(16, 3);
    let ae = Autoencoder::<f64>::init(&spec, 3).unwrap();
    let mut rng = rng(22);
    let cloud = random_cloud(&mut rng, 16, 3);
    let reversed: Vec<usize> = (0..16).rev().collect();
    assert_eq!(
        ae.encode(&cloud).unwrap(),
        ae.encode(&cloud.select(&reversed)).unwrap()
    );
}

#[test]
fn initialization_is_seed_deterministic() {
    let spec = NetworkSpec::for_clouds(16, 2);
    assert_eq!(
        Autoencoder::<f64>::init(&spec, 5).unwrap().params,
        Autoencoder::<f64>::init(&spec, 5).unwrap().params
    );
    assert_ne!(
        Autoencoder::<f64>::init(&spec, 5).unwrap().params,
        Autoencoder::<f64>::init(&spec, 6).unwrap().params
    );
}

#[test]
fn frozen_store_receives_no_gradient() {
    let spec = small_spec();
    let ae = Autoencoder::<f64>::init(&spec, 1).unwrap();
    let g = Generator::<f64>::init(&spec, 2).unwrap();
    let mut tape = Tape::new();
    let ae_store = tape.bind(&ae.params, false);
    let g_store = tape.bind(&g.params, true);
    let xi = tape.input(Matrix::row_vector(vec![0.3; 6]));
    let zi = tape.input(Matrix::row_vector(vec![-0.2; 3]));
    let code = g.record(&mut tape, g_store, xi, Some(zi)).unwrap();
    let decoded = ae.record_decoder(&mut tape, ae_store, code).unwrap();
    let seed = Matrix::from_vec(8, 2, vec![1.0; 16]).unwrap();
    let back = tape.backward(&[(decoded, &seed)]).unwrap();
    assert!(back.store(ae_store).is_zero());
    assert!(!back.store(g_store).is_zero());
}

#[test]
fn checkpoint_round_trip_through_disk() {
    let spec = small_spec();
    let ae = Autoencoder::<f64>::init(&spec, 9).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ae.ckpt");
    Checkpoint::from_autoencoder(&ae, 9, 42)
        .save(&path)
        .unwrap();
    let loaded = Checkpoint::<f64>::load(&path).unwrap();
    assert_eq!(loaded.step, 42);
    let back = loaded.into_autoencoder().unwrap();
    let cloud = PointCloud::from_flat(2, (0..16).map(|i| i as f64 / 16.0).collect()).unwrap();
    assert_eq!(
        back.reconstruct(&cloud).unwrap(),
        ae.reconstruct(&cloud).unwrap()
    );
    assert!(Checkpoint::<f64>::load(&path)
        .unwrap()
        .into_generator()
        .is_err());
}
