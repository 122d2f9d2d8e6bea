use imle_complete::eval::*;
use imle_complete::geometry::{make_dataset, DatasetEntry, SyntheticSpec};
use imle_complete::imle::{
    train_autoencoder, train_generator_imle, train_generator_unimodal, AeConfig, ImleConfig,
};
use imle_complete::nn::{Autoencoder, Generator, NetworkSpec};
use imle_complete::Error;

struct Fixture {
    test: Vec<DatasetEntry<f64>>,
    ae: Autoencoder<f64>,
    imle: Generator<f64>,
    baseline: Generator<f64>,
}

fn fixture() -> Fixture {
    let s = SyntheticSpec {
        points_per_cloud: 32,
        ..SyntheticSpec::default()
    };
    let train = make_dataset(&s, 32, 1).unwrap();
    let test = make_dataset(&s, 6, 2).unwrap();
    let spec = NetworkSpec {
        latent_dim: 16,
        encoder_hidden: vec![16, 32],
        decoder_hidden: vec![64],
        generator_hidden: vec![64, 64],
        ..NetworkSpec::for_clouds(32, 2)
    };
    let ae = train_autoencoder(
        &train,
        &spec,
        &AeConfig {
            epochs: 5,
            eta: 2e-3,
            ..AeConfig::default()
        },
        |_, _, _| {},
    )
    .unwrap()
    .0;
    let config = ImleConfig {
        outer_epochs: 3,
        inner_steps: 3,
        batch_size: 16,
        minibatch_size: 8,
        noise_dim: 8,
        ..ImleConfig::default()
    };
    let imle = train_generator_imle(&train, &ae, &config, |_, _| {})
        .unwrap()
        .0;
    let baseline = train_generator_unimodal(&train, &ae, &config.baseline(), |_, _| {})
        .unwrap()
        .0;
    Fixture {
        test,
        ae,
        imle,
        baseline,
    }
}

#[test]
fn zero_sigma_equals_plain_evaluation() {
    let f = fixture();
    let plain = evaluate(&f.ae, &f.imle, &f.test, 4, 11).unwrap();
    let jittered = noise_robustness_eval(
        &f.ae,
        &f.imle,
        &f.test,
        &EvalConfig {
            m: 4,
            seed: 11,
            ..EvalConfig::default()
        },
    )
    .unwrap();
    assert_eq!(plain, jittered);
    assert_eq!(plain.to_json(), jittered.to_json());
    assert_eq!(plain, evaluate(&f.ae, &f.imle, &f.test, 4, 11).unwrap());
}

#[test]
fn report_aggregates_are_recomputable() {
    let f = fixture();
    let r = evaluate(&f.ae, &f.imle, &f.test, 4, 3).unwrap();
    let n = r.entries.len() as f64;
    assert_eq!(r.mean_tmd, r.entries.iter().map(|e| e.tmd).sum::<f64>() / n);
    assert_eq!(
        r.mean_uhd,
        r.entries.iter().map(|e| e.mean_uhd).sum::<f64>() / n
    );
    let full = r
        .entries
        .iter()
        .filter(|e| e.coverage_count == r.mode_count)
        .count() as f64;
    assert_eq!(r.coverage_rate, full / n);
    for e in &r.entries {
        assert!(e.covered_modes.iter().all(|&k| k < r.mode_count));
        assert_eq!(e.sample_modes.len(), 4);
    }
    assert_eq!(EvalReport::from_json(&r.to_json()).unwrap(), r);
    assert_eq!(r.to_csv().lines().count(), f.test.len() + 1);
}

#[test]
fn baseline_has_zero_diversity() {
    let f = fixture();
    let r = evaluate(&f.ae, &f.baseline, &f.test, 5, 3).unwrap();
    assert_eq!(r.mean_tmd, 0.0);
    for e in &r.entries {
        assert_eq!(e.tmd, 0.0);
        assert!(e.coverage_count <= 1);
    }
}

#[test]
fn extreme_jitter_stays_finite() {
    let f = fixture();
    let r = noise_robustness_eval(
        &f.ae,
        &f.imle,
        &f.test,
        &EvalConfig {
            m: 3,
            sigma: 1.0,
            ..EvalConfig::default()
        },
    )
    .unwrap();
    assert!(r.mean_tmd.is_finite() && r.mean_uhd.is_finite());
    assert!(r
        .entries
        .iter()
        .all(|e| e.tmd.is_finite() && e.mean_uhd.is_finite()));
}

#[test]
fn compare_keeps_order_and_checks_test_sets() {
    let f = fixture();
    let a = evaluate(&f.ae, &f.imle, &f.test, 3, 1).unwrap();
    let b = evaluate(&f.ae, &f.baseline, &f.test, 3, 1).unwrap();
    let same = compare(&[("a".into(), &a), ("a2".into(), &a)]).unwrap();
    assert!(same.rows.iter().all(|(_, v)| v[0] == v[1]));
    let three = compare(&[("x".into(), &a), ("y".into(), &b), ("z".into(), &a)]).unwrap();
    assert_eq!(three.names, ["x", "y", "z"]);
    assert!(three.to_csv().starts_with("metric,x,y,z\n"));
    assert_eq!(three.to_csv().lines().count(), 4);

    let other = evaluate(&f.ae, &f.imle, &f.test[..3], 3, 1).unwrap();
    assert!(matches!(
        compare(&[("a".into(), &a), ("o".into(), &other)]),
        Err(Error::MismatchedTestSets(_))
    ));
    assert!(compare(&[("a".into(), &a)]).is_err());
}

#[test]
fn missing_mode_references_are_reported() {
    let f = fixture();
    let mut test = f.test.clone();
    test[2].mode_refs.clear();
    assert!(matches!(
        evaluate(&f.ae, &f.imle, &test, 3, 1),
        Err(Error::MissingModeReferences(2))
    ));
    assert!(evaluate(&f.ae, &f.imle, &f.test, 1, 1).is_err());
}

#[test]
fn mode_assignment_prefers_nearest_reference() {
    let f = fixture();
    let e = &f.test[0];
    for (k, r) in e.mode_refs.iter().enumerate() {
        assert_eq!(assign_mode(r, &e.mode_refs, 2.0).unwrap(), Some(k));
    }
}
