#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::f64::consts::TAU;
use std::fs;
use std::panic;
use std::time::{Duration, Instant};

use common::*;
use flair::aircomp::*;
use flair::channel::{effective_channel_subset, ChannelSet, PhaseShiftVector};
use flair::harness::{run_experiment, ExperimentConfig, TRACES_FILE};
use flair::model::{sample_weights, weighted_average, LocalUpdate, ModelVector};
use flair::seed::rng_for;
use flair::selection::select_devices;
use flair::solvers::*;
use flair::trainer::*;
use flair::C64;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

type Outcome = (bool, String);

fn budget(noise: f64) -> LinkBudget {
    LinkBudget {
        tx_power: 0.1,
        noise_power: noise,
    }
}

fn random_updates(k: usize, dim: usize, seed: u64) -> Vec<LocalUpdate> {
    let mut rng = rng_for(seed, &[0x77]);
    (0..k)
        .map(|_| LocalUpdate {
            delta: (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect(),
            sample_count: rng.random_range(1..200),
        })
        .collect()
}

fn random_phases(m: usize, seed: u64) -> PhaseShiftVector {
    let mut rng = rng_for(seed, &[0x78]);
    PhaseShiftVector::new((0..m).map(|_| rng.random_range(0.0..TAU)).collect())
}

fn within(elapsed: Duration, limit: f64) -> bool {
    elapsed.as_secs_f64() < limit
}

fn mse_scale_invariance() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for i in 0..1000u64 {
        let k = 1 + (i % 8) as usize;
        let n = 1 + (i % 5) as usize;
        let h = random_channels(k, n, i);
        let m = Beamformer::new(random_vector(n, i + 1_000_000)).unwrap();
        let mut rng = rng_for(i, &[0xC1]);
        let scale = C64::from_polar(10f64.powf(rng.random_range(-3.0..3.0)), rng.random_range(0.0..TAU));
        let a = aggregation_mse(&m, &h, budget(1e-8)).unwrap();
        let b = aggregation_mse(&m.scaled(scale), &h, budget(1e-8)).unwrap();
        worst = worst.max(rel_err(b, a));
    }
    let t = start.elapsed();
    (
        worst <= 1e-12 && within(t, 1.0),
        format!("max relative change {worst:.2e} (tol 1e-12), {:.3}s (limit 1s)", t.as_secs_f64()),
    )
}

fn vector_rel_err(a: &[f64], b: &[f64]) -> f64 {
    let num = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    num / b.iter().map(|y| y * y).sum::<f64>().sqrt()
}

fn noiseless_exactness() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for seed in 0..50u64 {
        let ch = default_channels(20, 4, 30, seed);
        let sel: Vec<usize> = (0..20).collect();
        let m = Beamformer::new(random_vector(4, seed)).unwrap();
        let design = AggregationDesign::new(m, random_phases(30, seed), sel, &ch, budget(0.0)).unwrap();
        let ups = random_updates(20, 61, seed);
        let stats = NormalizationStats::from_updates(&ups).unwrap();
        let got = simulate_round_transmission(&ups, &design, &ch, &stats, budget(0.0), seed).unwrap();
        worst = worst.max(vector_rel_err(&got, &weighted_average(&ups, &sample_weights(&ups))));
    }
    let t = start.elapsed();
    (
        worst <= 1e-9 && within(t, 5.0),
        format!("max relative error {worst:.2e} (tol 1e-9), {:.3}s (limit 5s)", t.as_secs_f64()),
    )
}

fn variance_calibration() -> Outcome {
    let mut ratios = Vec::new();
    for seed in 0..10u64 {
        let ch = default_channels(20, 4, 30, seed);
        let sel: Vec<usize> = (0..20).collect();
        let theta = random_phases(30, seed);
        let m = Beamformer::new(random_vector(4, seed + 7)).unwrap();
        let b = budget(1e-8);
        let design = AggregationDesign::new(m, theta.clone(), sel.clone(), &ch, b).unwrap();
        let eff = effective_channel_subset(&ch, &theta, &sel).unwrap();
        let slots = 10_000;
        let symbols: Vec<Vec<C64>> = (0..20u64)
            .map(|k| {
                let mut rng = rng_for(seed, &[0x99, k]);
                (0..slots).map(|_| cn(&mut rng)).collect()
            })
            .collect();
        let noisy = over_the_air_sum(&symbols, &design, &eff, b, seed).unwrap();
        let var = (0..slots)
            .map(|t| (noisy[t] - symbols.iter().map(|s| s[t]).sum::<C64>()).norm_sqr())
            .sum::<f64>()
            / slots as f64;
        ratios.push(var / design.mse);
    }
    let worst = ratios.iter().map(|r| (r - 1.0).abs()).fold(0.0, f64::max);
    (
        worst <= 0.1,
        format!("empirical/predicted variance worst deviation {:.2}% (tol 10%)", 100.0 * worst),
    )
}

fn beamformer_oracle() -> Outcome {
    let start = Instant::now();
    let opts = SolverOptions::default();
    let rows: Vec<(f64, f64)> = (0..20u64)
        .into_par_iter()
        .map(|seed| {
            let h = random_channels(3, 2, 4000 + seed);
            let oracle = grid_max_min_gain(&h, 1000);
            let dc = dc_beamformer(&h, &opts).unwrap();
            let sdr = sdr_beamformer(&h, &opts, seed).unwrap();
            (dc.min_gain / oracle, sdr.min_gain / oracle)
        })
        .collect();
    let t = start.elapsed();
    let dc = rows.iter().map(|r| r.0).fold(f64::INFINITY, f64::min);
    let sdr = rows.iter().map(|r| r.1).fold(f64::INFINITY, f64::min);
    (
        dc >= 0.95 && sdr >= 0.85 && within(t, 120.0),
        format!(
            "worst objective/oracle: dc {dc:.4} (need 0.95), sdr {sdr:.4} (need 0.85), {:.1}s (limit 120s)",
            t.as_secs_f64()
        ),
    )
}

fn phase_grid(ch: &ChannelSet, sel: &[usize], m: &Beamformer, step: f64) -> f64 {
    let n = (TAU / step).ceil() as usize;
    let mg = m.vector().adjoint() * &ch.ris_to_server;
    let coeffs: Vec<(C64, C64, C64)> = sel
        .iter()
        .map(|&k| {
            (
                m.project(&ch.direct[k]),
                mg[(0, 0)] * ch.device_to_ris[k][0],
                mg[(0, 1)] * ch.device_to_ris[k][1],
            )
        })
        .collect();
    let rot: Vec<C64> = (0..n).map(|i| C64::from_polar(1.0, i as f64 * step)).collect();
    let mut best = 0.0f64;
    for r1 in &rot {
        for r2 in &rot {
            let worst = coeffs
                .iter()
                .map(|(c0, a1, a2)| (c0 + a1 * r1 + a2 * r2).norm_sqr())
                .fold(f64::INFINITY, f64::min);
            best = best.max(worst);
        }
    }
    best
}

fn phase_optimality() -> Outcome {
    let opts = SolverOptions::default();
    let mut single = f64::INFINITY;
    for seed in 0..20u64 {
        let ch = unit_channel_set(1, 3, 1, 5000 + seed);
        let m = Beamformer::new(random_vector(3, seed)).unwrap();
        let c1 = m.project(&ch.direct[0]);
        let a1 = m.project(&ch.ris_to_server.column(0).into_owned()) * ch.device_to_ris[0][0];
        let theta = PhaseShiftVector::new(vec![(c1.arg() - a1.arg()).rem_euclid(TAU)]);
        let closed = phase_objective(&ch, &[0], &m, &theta).unwrap();
        let sol = dc_phase_shifts(&ch, &[0], &m, &PhaseShiftVector::zeros(1), &opts).unwrap();
        single = single.min(sol.min_gain / closed);
    }
    let pair = (0..5u64)
        .into_par_iter()
        .map(|seed| {
            let ch = unit_channel_set(2, 2, 2, 5100 + seed);
            let m = Beamformer::new(random_vector(2, seed)).unwrap();
            let sol = dc_phase_shifts(&ch, &[0, 1], &m, &PhaseShiftVector::zeros(2), &opts).unwrap();
            sol.min_gain / phase_grid(&ch, &[0, 1], &m, 0.01)
        })
        .reduce(|| f64::INFINITY, f64::min);
    (
        single >= 0.95 && pair >= 0.95,
        format!("worst objective/oracle: M=1 closed form {single:.4}, M=2 grid {pair:.4} (need 0.95)"),
    )
}

fn alternating_monotonicity() -> Outcome {
    let opts = SolverOptions::default();
    let sel: Vec<usize> = (0..20).collect();
    let rises: Vec<f64> = (0..100u64)
        .into_par_iter()
        .map(|seed| {
            let ch = default_channels(20, 4, 30, 6000 + seed);
            let out = alternating_optimize(&ch, &sel, budget(1e-8), &opts, BeamformingMethod::Dc, seed).unwrap();
            out.mse_trace.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    let worst = rises.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (worst <= 1e-4, format!("largest per-half-step MSE change {worst:.3e} (tol +1e-4)"))
}

fn paired_designs(seeds: std::ops::Range<u64>, other: fn(&ChannelSet) -> ChannelSet, method: BeamformingMethod) -> Vec<(f64, f64)> {
    let opts = SolverOptions::default();
    let sel: Vec<usize> = (0..20).collect();
    seeds
        .into_par_iter()
        .map(|seed| {
            let ch = default_channels(20, 4, 30, seed);
            let dc = alternating_optimize(&ch, &sel, budget(1e-8), &opts, BeamformingMethod::Dc, seed).unwrap();
            let alt = alternating_optimize(&other(&ch), &sel, budget(1e-8), &opts, method, seed).unwrap();
            (dc.design.mse, alt.design.mse)
        })
        .collect()
}

fn ris_benefit() -> Outcome {
    let pairs = paired_designs(7000..7050, ChannelSet::without_ris, BeamformingMethod::Dc);
    let n = pairs.len() as f64;
    let ris = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let noris = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let db = 10.0 * (noris / ris).log10();
    (
        ris <= noris && db >= 3.0,
        format!("mean MSE with RIS {ris:.4e}, without {noris:.4e}, improvement {db:.2} dB (need 3 dB)"),
    )
}

fn dc_beats_sdr() -> Outcome {
    let pairs = paired_designs(8000..8050, ChannelSet::clone, BeamformingMethod::Sdr);
    let wins = pairs.iter().filter(|(dc, sdr)| dc <= sdr).count();
    (wins >= 40, format!("dc <= sdr on {wins}/50 instances (need 40)"))
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn standard_error(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt()
}

fn learning_curve_ordering() -> Outcome {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::default();
    let summary = run_experiment(&cfg, dir.path()).unwrap();
    let t = start.elapsed();
    let order = [Scenario::Perfect, Scenario::DcRis, Scenario::SdrRis, Scenario::DcNoris];
    let stats: Vec<(f64, f64, f64, f64)> = order
        .iter()
        .map(|&s| {
            let cells: Vec<_> = summary.cells.iter().filter(|c| c.scenario == s).collect();
            let mut loss: Vec<f64> = cells.iter().map(|c| c.final_train_loss.unwrap()).collect();
            let mut acc: Vec<f64> = cells.iter().map(|c| c.final_test_acc.unwrap()).collect();
            let (ls, as_) = (standard_error(&loss), standard_error(&acc));
            (median(&mut loss), ls, median(&mut acc), as_)
        })
        .collect();
    let mut ok = summary.failed_cells == 0 && within(t, 600.0);
    let mut detail = Vec::new();
    for (i, s) in order.iter().enumerate() {
        detail.push(format!("{} loss {:.4} acc {:.4}", s.name(), stats[i].0, stats[i].2));
    }
    for w in 0..3 {
        let (a, b) = (stats[w], stats[w + 1]);
        let loss_tol = (a.1 * a.1 + b.1 * b.1).sqrt();
        let acc_tol = (a.3 * a.3 + b.3 * b.3).sqrt();
        if a.0 > b.0 + loss_tol || a.2 < b.2 - acc_tol {
            ok = false;
            detail.push(format!("order broken between {} and {}", order[w].name(), order[w + 1].name()));
        }
    }
    detail.push(format!("{:.0}s (limit 600s)", t.as_secs_f64()));
    (ok, detail.join("; "))
}

fn random_dataset(n: usize, d: usize, seed: u64) -> Dataset {
    let mut rng = rng_for(seed, &[0x31]);
    let x: Vec<f64> = (0..n * d).map(|_| rng.sample(StandardNormal)).collect();
    let y: Vec<i32> = (0..n).map(|_| if rng.random_bool(0.5) { 1 } else { -1 }).collect();
    Dataset::new(x, d, y, LabelKind::Binary).unwrap()
}

fn centralized_step(w: &ModelVector, data: &FederatedData, lr: f64, lambda: f64) -> ModelVector {
    let (_, g) = hinge_loss_and_subgradient(w, &data.train, &data.union(), lambda).unwrap();
    let mut next = w.clone();
    next.add_assign(&g.iter().map(|x| -lr * x).collect::<Vec<_>>());
    next
}

fn gradient_checks() -> Outcome {
    let mut central = 0.0f64;
    for seed in 0..10u64 {
        let spec = SyntheticSpec {
            features: 10,
            train: 203,
            test: 50,
            margin: 3.0,
        };
        let (train, test) = synthetic_blobs(&spec, seed).unwrap();
        let parts = partition(train.len(), 6, seed).unwrap();
        let data = FederatedData::new(train, test, parts).unwrap();
        let setup = FederatedSetup {
            system: flair::channel::SystemConfig::with_default_geometry(6, 4, 0, 0.1, 1e-8, seed),
            solver: SolverOptions::default(),
            learning: LearningParams {
                rounds: 2,
                epochs: 1,
                batch_size: 1000,
                ..Default::default()
            },
            selection_target: None,
        };
        let trace = train_federated(&setup, &data, Scenario::Perfect, seed).unwrap();
        let lr = setup.learning.lr;
        let w1 = centralized_step(&ModelVector::zeros(1, 10), &data, lr, setup.learning.lambda);
        let w2 = centralized_step(&w1, &data, lr / 2f64.sqrt(), setup.learning.lambda);
        for (a, b) in trace.model.as_slice().iter().zip(w2.as_slice()) {
            central = central.max((a - b).abs());
        }
    }

    let (mut checked, mut fd_worst) = (0, 0.0f64);
    let h = 1e-6;
    for seed in 0..1000u64 {
        if checked == 100 {
            break;
        }
        let data = random_dataset(25, 6, seed);
        let mut rng = rng_for(seed, &[0x32]);
        let w = ModelVector::from_weights(1, 6, (0..7).map(|_| 0.5 * rng.sample::<f64, _>(StandardNormal)).collect());
        let rows: Vec<usize> = (0..25).collect();
        let kink = rows.iter().any(|&i| {
            let s: f64 = w.head(0)[..6].iter().zip(data.row(i)).map(|(a, b)| a * b).sum::<f64>() + w.as_slice()[6];
            (data.label(i) as f64 * s - 1.0).abs() < 1e-4
        });
        if kink {
            continue;
        }
        let (_, g) = hinge_loss_and_subgradient(&w, &data, &rows, 0.01).unwrap();
        for (j, gj) in g.iter().enumerate() {
            let mut plus = w.clone();
            plus.as_mut_slice()[j] += h;
            let mut minus = w.clone();
            minus.as_mut_slice()[j] -= h;
            let fp = hinge_loss_and_subgradient(&plus, &data, &rows, 0.01).unwrap().0;
            let fm = hinge_loss_and_subgradient(&minus, &data, &rows, 0.01).unwrap().0;
            fd_worst = fd_worst.max(((fp - fm) / (2.0 * h) - gj).abs() / gj.abs().max(1e-3));
        }
        checked += 1;
    }
    (
        central <= 1e-9 && checked == 100 && fd_worst <= 1e-5,
        format!("centralized max deviation {central:.2e} (tol 1e-9), finite differences worst {fd_worst:.2e} over {checked} cases (tol 1e-5)"),
    )
}

fn selection_oracle() -> Outcome {
    let opts = SolverOptions::default();
    let b = budget(1e-8);
    let mut shortfalls = Vec::new();
    let mut ok = true;
    for seed in 0..20u64 {
        let ch = default_channels(4, 2, 0, 9000 + seed);
        let oracle = subset_oracle_mse(&ch.direct, 300, b.noise_power, b.tx_power);
        let level = 1 + (seed as u32 % 4);
        let target = 1.01
            * (1..16usize)
                .filter(|m| m.count_ones() == level)
                .map(|m| oracle[m])
                .fold(f64::INFINITY, f64::min);
        let best = (1..16usize)
            .filter(|&m| oracle[m] <= target)
            .map(|m| m.count_ones() as usize)
            .max()
            .unwrap();
        let r = select_devices(&ch, &PhaseShiftVector::zeros(0), target, b, &opts).unwrap();
        let got = r.selected.len();
        ok &= got + 1 >= best;
        if got < best {
            shortfalls.push(format!("seed {seed}: {got} vs {best}"));
        }
    }
    let report = if shortfalls.is_empty() {
        "greedy matched the exhaustive optimum on 20/20".to_string()
    } else {
        format!("{} shortfalls [{}]", shortfalls.len(), shortfalls.join(", "))
    };
    (ok, report)
}

fn reproducibility() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig {
        seeds: vec![0, 1],
        rounds: 5,
        ..Default::default()
    };
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    run_experiment(&cfg, &a).unwrap();
    run_experiment(&cfg, &b).unwrap();
    let x = fs::read(a.join(TRACES_FILE)).unwrap();
    let y = fs::read(b.join(TRACES_FILE)).unwrap();
    (x == y, format!("{} bytes, identical: {}", x.len(), x == y))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 12] = [
        ("MSE scale invariance", mse_scale_invariance),
        ("noiseless exactness", noiseless_exactness),
        ("variance calibration", variance_calibration),
        ("beamformer grid oracle", beamformer_oracle),
        ("phase optimality", phase_optimality),
        ("alternating monotonicity", alternating_monotonicity),
        ("RIS benefit", ris_benefit),
        ("DC vs SDR ordering", dc_beats_sdr),
        ("learning-curve ordering", learning_curve_ordering),
        ("centralized equivalence and gradients", gradient_checks),
        ("device-selection oracle", selection_oracle),
        ("reproducibility", reproducibility),
    ];
    if std::env::args().any(|a| a == "--list") {
        for (i, (name, _)) in criteria.iter().enumerate() {
            println!("criterion {}: {name}: test", i + 1);
        }
        return;
    }
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let id = (i + 1).to_string();
        if !filters.is_empty() && !filters.iter().any(|f| *f == id || name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let (pass, detail) = panic::catch_unwind(run).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            (false, format!("panicked: {msg}"))
        });
        if !pass {
            failed += 1;
        }
        println!(
            "criterion {id:>2} {} {name}: {detail} [{:.1}s]",
            if pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {failed} failed");
    if failed > 0 {
        std::process::exit(1);
    }
}
