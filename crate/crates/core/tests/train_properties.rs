//! Training-level properties checked against exact OT.

use qpwgan::autodiff::MlpNetwork;
use qpwgan::measure::{empirical_measure, sample_gmm, CostSpec, GmmSpec, Point, SourceKind};
use qpwgan::ot::{ot_exact, wasserstein_qp};
use qpwgan::rng::SeededRng;
use qpwgan::train::{
    potential_generator_experiment, train, DatasetSampler, PotentialConfig, SourceSampler,
    TrainConfig,
};

fn gaussian_1d(n: usize, mean: f64, sd: f64, rng: &mut SeededRng) -> Vec<Point> {
    (0..n)
        .map(|_| Point::new(vec![mean + sd * rng.standard_normal()]).unwrap())
        .collect()
}

#[test]
fn one_d_gaussian_map_lands_near_target() {
    let root = SeededRng::new(11);
    let sigma = 0.5;
    let source = gaussian_1d(200, 0.0, 1.0, &mut root.split(1));
    let target = gaussian_1d(200, 2.0, sigma, &mut root.split(2));
    let spec = CostSpec { q: 2.0, p: 2.0 };
    let cfg = PotentialConfig {
        train: TrainConfig {
            batch_size: 200,
            lr: 1e-3,
            critic_lr: None,
            n_critic: 1,
            iterations: 3000,
            eval_every: 0,
            seed: 3,
            ..TrainConfig::mnist_style(spec)
        },
        samples: 200,
    };
    let critic = MlpNetwork::toy(1, 1, &mut root.split(3)).unwrap();
    let out = potential_generator_experiment(
        &cfg,
        &DatasetSampler {
            points: source.clone(),
        },
        &DatasetSampler {
            points: target.clone(),
        },
        critic,
    )
    .unwrap();
    let tgt = empirical_measure(target).unwrap();
    let before = wasserstein_qp(&empirical_measure(source).unwrap(), &tgt, spec).unwrap();
    let after = wasserstein_qp(&empirical_measure(out.mapped).unwrap(), &tgt, spec).unwrap();
    println!(
        "W2 before {before:.4}, after {after:.4}, bound {:.4}",
        0.15 * sigma
    );
    assert!(after <= 0.15 * sigma, "W2 after mapping {after}");
}

fn short_gmm_run(seed: u64) -> qpwgan::train::TrainOutcome {
    let root = SeededRng::new(seed);
    let data = sample_gmm(&GmmSpec::three_clusters(), &mut root.split(1)).unwrap();
    let cfg = TrainConfig {
        iterations: 200,
        eval_every: 1,
        seed,
        ..TrainConfig::toy_gmm(CostSpec { q: 2.0, p: 2.0 })
    };
    train(
        &cfg,
        &DatasetSampler {
            points: data.clone(),
        },
        &SourceSampler {
            kind: SourceKind::Gaussian,
            dim: 2,
        },
        MlpNetwork::toy(2, 2, &mut root.split(2)).unwrap(),
        MlpNetwork::toy(2, 1, &mut root.split(3)).unwrap(),
        Some(&data),
    )
    .unwrap()
}

#[test]
fn dual_estimate_never_exceeds_batch_ot() {
    let out = short_gmm_run(5);
    let mut checked = 0;
    for r in out.trace.evaluated() {
        if r.p1 < 1e-3 && r.p2 < 1e-3 {
            checked += 1;
            let truth = r.true_ot.unwrap();
            assert!(
                r.dual_estimate <= truth + 1e-6,
                "iteration {}: estimate {} above exact {truth}",
                r.iteration,
                r.dual_estimate
            );
        }
    }
    assert!(checked > 100, "only {checked} rows checked");

    let ev: Vec<f64> = out.trace.evaluated().map(|r| r.true_ot.unwrap()).collect();
    let tail = &ev[ev.len() - ev.len() / 5..];
    let tail_mean = tail.iter().sum::<f64>() / tail.len() as f64;
    assert!(
        tail_mean < ev[0],
        "final window {tail_mean} vs initial {}",
        ev[0]
    );
}

#[test]
fn distance_is_root_of_transport_cost() {
    // W is the p-th root of the OT value under cost d^p/p.
    let root = SeededRng::new(1);
    let a = sample_gmm(&GmmSpec::three_clusters(), &mut root.split(1)).unwrap();
    let b = sample_gmm(&GmmSpec::three_clusters(), &mut root.split(2)).unwrap();
    let spec = CostSpec { q: 2.0, p: 2.0 };
    let (plan, _) = ot_exact(
        &empirical_measure(a.clone()).unwrap(),
        &empirical_measure(b.clone()).unwrap(),
        spec,
    )
    .unwrap();
    let w = wasserstein_qp(
        &empirical_measure(a).unwrap(),
        &empirical_measure(b).unwrap(),
        spec,
    )
    .unwrap();
    assert!((w - plan.value.sqrt()).abs() < 1e-12);
}
