use flair::channel::SystemConfig;
use flair::model::ModelVector;
use flair::seed::rng_for;
use flair::solvers::SolverOptions;
use flair::trainer::*;
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

fn random_dataset(n: usize, d: usize, seed: u64) -> Dataset {
    let mut rng = rng_for(seed, &[0x31]);
    let x: Vec<f64> = (0..n * d).map(|_| rng.sample(StandardNormal)).collect();
    let y: Vec<i32> = (0..n).map(|_| if rng.random_bool(0.5) { 1 } else { -1 }).collect();
    Dataset::new(x, d, y, LabelKind::Binary).unwrap()
}

fn random_model(d: usize, scale: f64, seed: u64) -> ModelVector {
    let mut rng = rng_for(seed, &[0x32]);
    ModelVector::from_weights(1, d, (0..=d).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect())
}

fn all_rows(n: usize) -> Vec<usize> {
    (0..n).collect()
}

fn setup(k: usize, m: usize, noise: f64, rounds: usize, seed: u64) -> FederatedSetup {
    FederatedSetup {
        system: SystemConfig::with_default_geometry(k, 4, m, 0.1, noise, seed),
        solver: SolverOptions::default(),
        learning: LearningParams {
            rounds,
            ..Default::default()
        },
        selection_target: None,
    }
}

fn blobs(k: usize, spec: SyntheticSpec, seed: u64) -> FederatedData {
    let (train, test) = synthetic_blobs(&spec, seed).unwrap();
    let parts = partition(train.len(), k, seed).unwrap();
    FederatedData::new(train, test, parts).unwrap()
}

fn small_spec() -> SyntheticSpec {
    SyntheticSpec {
        features: 10,
        train: 300,
        test: 200,
        margin: 3.0,
    }
}

#[test]
fn zero_model_loss_and_subgradient() {
    let data = random_dataset(40, 5, 1);
    let rows = all_rows(40);
    let (loss, g) = hinge_loss_and_subgradient(&ModelVector::zeros(1, 5), &data, &rows, 0.3).unwrap();
    assert_eq!(loss, 1.0);
    for j in 0..=5 {
        let expect = -rows
            .iter()
            .map(|&i| data.label(i) as f64 * if j < 5 { data.row(i)[j] } else { 1.0 })
            .sum::<f64>()
            / 40.0;
        assert!((g[j] - expect).abs() < 1e-14);
    }
}

#[test]
fn inactive_hinge_leaves_only_the_regularizer() {
    let x = vec![1.0, 0.0, -1.0, 0.5];
    let data = Dataset::new(x, 2, vec![1, -1], LabelKind::Binary).unwrap();
    let w = ModelVector::from_weights(1, 2, vec![5.0, 1.0, 0.0]);
    let lambda = 0.1;
    let (loss, g) = hinge_loss_and_subgradient(&w, &data, &[0, 1], lambda).unwrap();
    assert!((loss - 0.5 * lambda * 26.0).abs() < 1e-14);
    for (gi, wi) in g.iter().zip(w.as_slice()) {
        assert!((gi - lambda * wi).abs() < 1e-15);
    }
}

#[test]
fn empty_batch_is_rejected() {
    let data = random_dataset(3, 2, 0);
    assert_eq!(
        hinge_loss_and_subgradient(&ModelVector::zeros(1, 2), &data, &[], 0.1).unwrap_err(),
        TrainerError::EmptyBatch
    );
}

/// Central differences of the objective; `None` when a margin is within
/// `gap` of the hinge kink.
fn finite_difference(w: &ModelVector, data: &Dataset, rows: &[usize], lambda: f64, gap: f64) -> Option<Vec<f64>> {
    let d = data.dim();
    let near_kink = rows.iter().any(|&i| {
        let x = data.row(i);
        let s: f64 = w.as_slice()[..d].iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + w.as_slice()[d];
        (data.label(i) as f64 * s - 1.0).abs() < gap
    });
    if near_kink {
        return None;
    }
    let h = 1e-6;
    Some(
        (0..=d)
            .map(|j| {
                let mut plus = w.clone();
                plus.as_mut_slice()[j] += h;
                let mut minus = w.clone();
                minus.as_mut_slice()[j] -= h;
                let fp = hinge_loss_and_subgradient(&plus, data, rows, lambda).unwrap().0;
                let fm = hinge_loss_and_subgradient(&minus, data, rows, lambda).unwrap().0;
                (fp - fm) / (2.0 * h)
            })
            .collect(),
    )
}

#[test]
fn subgradient_matches_finite_differences() {
    let mut checked = 0;
    for seed in 0..200u64 {
        if checked == 100 {
            break;
        }
        let data = random_dataset(25, 6, seed);
        let w = random_model(6, 0.5, seed);
        let rows = all_rows(25);
        let Some(fd) = finite_difference(&w, &data, &rows, 0.01, 1e-4) else {
            continue;
        };
        let (_, g) = hinge_loss_and_subgradient(&w, &data, &rows, 0.01).unwrap();
        for (a, b) in fd.iter().zip(&g) {
            assert!((a - b).abs() <= 1e-5 * b.abs().max(1e-3), "seed {seed}: fd {a} vs {b}");
        }
        checked += 1;
    }
    assert_eq!(checked, 100);
}

#[test]
fn local_update_trivial_cases() {
    let data = random_dataset(30, 4, 3);
    let rows = all_rows(30);
    let w = random_model(4, 1.0, 3);
    for (lr, epochs) in [(0.0, 3), (0.1, 0)] {
        let s = LocalSchedule {
            lr,
            epochs,
            batch_size: 8,
            lambda: 0.01,
        };
        let u = local_update(&w, &data, &rows, &s, 1).unwrap();
        assert!(u.delta.iter().all(|&x| x == 0.0));
        assert_eq!(u.sample_count, 30);
    }
}

#[test]
fn full_batch_epoch_is_one_subgradient_step() {
    let data = random_dataset(30, 4, 4);
    let rows: Vec<usize> = (5..25).collect();
    let w = random_model(4, 1.0, 4);
    let s = LocalSchedule {
        lr: 0.2,
        epochs: 1,
        batch_size: 20,
        lambda: 0.01,
    };
    let u = local_update(&w, &data, &rows, &s, 9).unwrap();
    let (_, g) = hinge_loss_and_subgradient(&w, &data, &rows, 0.01).unwrap();
    for (d, gi) in u.delta.iter().zip(&g) {
        assert!((d + 0.2 * gi).abs() < 1e-14);
    }
}

#[test]
fn local_update_is_seeded() {
    let data = random_dataset(50, 3, 5);
    let rows = all_rows(50);
    let w = random_model(3, 1.0, 5);
    let s = LocalSchedule {
        lr: 0.1,
        epochs: 2,
        batch_size: 7,
        lambda: 0.0,
    };
    let a = local_update(&w, &data, &rows, &s, 11).unwrap();
    let b = local_update(&w, &data, &rows, &s, 11).unwrap();
    let c = local_update(&w, &data, &rows, &s, 12).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.delta, c.delta);
}

#[test]
fn evaluate_examples() {
    let data = random_dataset(50, 3, 6);
    let pos = data.labels().iter().filter(|&&y| y == 1).count() as f64 / 50.0;
    assert_eq!(evaluate(&ModelVector::zeros(1, 3), &data).unwrap(), pos);
    let one = Dataset::new(vec![2.0, -1.0], 2, vec![-1], LabelKind::Binary).unwrap();
    let w = ModelVector::from_weights(1, 2, vec![-1.0, 0.0, 0.0]);
    assert_eq!(evaluate(&w, &one).unwrap(), 1.0);
}

#[test]
fn multiclass_uses_argmax_of_heads() {
    let x = vec![1.0, 0.0, 0.0, 1.0, -1.0, -1.0];
    let data = Dataset::new(x, 2, vec![0, 1, 2], LabelKind::Multiclass(3)).unwrap();
    let w = ModelVector::from_weights(3, 2, vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, -0.5, -0.5, 0.1]);
    assert_eq!(evaluate(&w, &data).unwrap(), 1.0);
    let (_, g) = hinge_loss_and_subgradient(&ModelVector::zeros(3, 2), &data, &[0, 1, 2], 0.0).unwrap();
    assert_eq!(g.len(), 9);
}

#[test]
fn separable_data_is_learned() {
    let spec = SyntheticSpec {
        features: 20,
        train: 400,
        test: 400,
        margin: 8.0,
    };
    let data = blobs(5, spec, 3);
    let trace = train_federated(&setup(5, 0, 1e-8, 200, 3), &data, Scenario::Perfect, 3).unwrap();
    let acc = trace.records.last().unwrap().test_accuracy;
    assert!(acc >= 0.95, "accuracy {acc}");
}

#[test]
fn zero_rounds_keep_the_initial_model() {
    let data = blobs(4, small_spec(), 1);
    let trace = train_federated(&setup(4, 0, 1e-8, 0, 1), &data, Scenario::DcNoris, 1).unwrap();
    assert!(trace.records.is_empty());
    assert_eq!(trace.model, ModelVector::zeros(1, 10));
}

fn centralized_step(w: &ModelVector, data: &FederatedData, lr: f64, lambda: f64) -> ModelVector {
    let (_, g) = hinge_loss_and_subgradient(w, &data.train, &data.union(), lambda).unwrap();
    let mut next = w.clone();
    let step: Vec<f64> = g.iter().map(|x| -lr * x).collect();
    next.add_assign(&step);
    next
}

#[test]
fn perfect_full_batch_round_is_centralized_step() {
    for seed in 0..10 {
        let spec = SyntheticSpec {
            train: 203,
            ..small_spec()
        };
        let data = blobs(6, spec, seed);
        let mut s = setup(6, 0, 1e-8, 2, seed);
        s.learning.batch_size = 1000;
        s.learning.epochs = 1;
        let trace = train_federated(&s, &data, Scenario::Perfect, seed).unwrap();
        let lr = s.learning.lr;
        let w1 = centralized_step(&ModelVector::zeros(1, 10), &data, lr, s.learning.lambda);
        let w2 = centralized_step(&w1, &data, lr / 2f64.sqrt(), s.learning.lambda);
        let err: f64 = trace
            .model
            .as_slice()
            .iter()
            .zip(w2.as_slice())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-9, "seed {seed}: {err}");
    }
}

#[test]
fn trace_invariants_and_determinism() {
    let data = blobs(5, small_spec(), 2);
    let s = setup(5, 6, 1e-8, 4, 2);
    for scenario in Scenario::ALL {
        let a = train_federated(&s, &data, scenario, 2).unwrap();
        let b = train_federated(&s, &data, scenario, 2).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.records.len(), 4);
        for (i, r) in a.records.iter().enumerate() {
            assert_eq!(r.round, i + 1);
            assert!(r.train_loss >= 0.0 && (0.0..=1.0).contains(&r.test_accuracy));
            assert_eq!(r.agg_mse == 0.0, scenario == Scenario::Perfect);
        }
    }
}

#[test]
fn selection_stage_runs_when_enabled() {
    let data = blobs(5, small_spec(), 4);
    let mut s = setup(5, 4, 1e-8, 2, 4);
    s.selection_target = Some(f64::MAX);
    let with = train_federated(&s, &data, Scenario::DcRis, 4).unwrap();
    s.selection_target = None;
    let without = train_federated(&s, &data, Scenario::DcRis, 4).unwrap();
    assert_eq!(with.records, without.records);
}

#[test]
fn device_count_mismatch_fails_before_training() {
    let data = blobs(4, small_spec(), 1);
    let err = train_federated(&setup(5, 0, 1e-8, 3, 1), &data, Scenario::Perfect, 1).unwrap_err();
    assert_eq!(err.round, 0);
    assert!(err.trace.records.is_empty());
    assert!(matches!(err.source, TrainerError::InvalidDataset(_)));
}

#[test]
fn empty_local_data_is_rejected() {
    let data = random_dataset(5, 2, 0);
    let s = LocalSchedule {
        lr: 0.1,
        epochs: 1,
        batch_size: 2,
        lambda: 0.0,
    };
    assert_eq!(
        local_update(&ModelVector::zeros(1, 2), &data, &[], &s, 0).unwrap_err(),
        TrainerError::EmptyLocalData
    );
}

#[test]
fn scenario_names_round_trip() {
    for s in Scenario::ALL {
        assert_eq!(s.name().parse::<Scenario>().unwrap(), s);
    }
    assert!("ris".parse::<Scenario>().is_err());
}

#[test]
fn default_setup_has_twenty_devices() {
    assert_eq!(flair::harness::ExperimentConfig::default().devices, 20);
}

#[test]
fn noise_free_is_best_in_median() {
    let seeds = 0..10u64;
    let mut finals = vec![Vec::new(); 4];
    for seed in seeds {
        let data = blobs(6, small_spec(), seed);
        let s = setup(6, 8, 1e-7, 15, seed);
        for (i, sc) in Scenario::ALL.into_iter().enumerate() {
            let t = train_federated(&s, &data, sc, seed).unwrap();
            finals[i].push(t.records.last().unwrap().train_loss);
        }
    }
    let med = |v: &mut Vec<f64>| {
        v.sort_by(f64::total_cmp);
        0.5 * (v[4] + v[5])
    };
    let meds: Vec<f64> = finals.iter_mut().map(med).collect();
    for (sc, m) in Scenario::ALL.iter().zip(&meds).skip(1) {
        assert!(meds[0] <= *m, "perfect {} vs {sc} {m}", meds[0]);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn local_updates_stay_finite(seed in any::<u64>(), lr in 0.0f64..1.0, epochs in 0usize..3, batch in 1usize..40) {
        let data = random_dataset(30, 4, seed);
        let w = random_model(4, 1.0, seed);
        let s = LocalSchedule { lr, epochs, batch_size: batch, lambda: 1e-3 };
        let u = local_update(&w, &data, &all_rows(30), &s, seed).unwrap();
        prop_assert!(u.delta.iter().all(|x| x.is_finite()));
        prop_assert_eq!(u.delta.len(), 5);
    }

    #[test]
    fn loss_is_nonnegative(seed in any::<u64>(), scale in 0.0f64..5.0, lambda in 0.0f64..1.0) {
        let data = random_dataset(20, 3, seed);
        let w = random_model(3, scale, seed);
        let (loss, _) = hinge_loss_and_subgradient(&w, &data, &all_rows(20), lambda).unwrap();
        prop_assert!(loss >= 0.0);
        let acc = evaluate(&w, &data).unwrap();
        prop_assert!((0.0..=1.0).contains(&acc));
    }

    #[test]
    fn partitions_are_disjoint(rows in 1usize..300, devices in 1usize..30, seed in any::<u64>()) {
        prop_assume!(rows >= devices);
        let p = partition(rows, devices, seed).unwrap();
        let mut all: Vec<usize> = p.iter().flatten().copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..rows).collect::<Vec<_>>());
        prop_assert!(p.iter().all(|x| !x.is_empty()));
    }
}
