use std::time::Instant;

use crate::autodiff::mlp::{points_to_tensor, tensor_to_points};
use crate::autodiff::{adam_step, AdamConfig, AdamState, MlpNetwork, Mode, Tape, Tensor, Var};
use crate::dual::{c_transform_tape, dual_estimate, penalty_p1, penalty_p2, SearchMode};
use crate::error::{Error, Result};
use crate::measure::{empirical_measure, Point};
use crate::ot::ot_exact;
use crate::rng::SeededRng;

use super::potential::estimate_lipschitz;
use super::{l2_norm, Method, Sampler, TraceRow, TrainConfig, TrainTrace};

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub generator: MlpNetwork,
    pub critic: MlpNetwork,
    pub trace: TrainTrace,
}

/// Values from one critic update.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct CriticStats {
    pub objective: f64,
    pub dual: f64,
    pub p1: f64,
    pub p2: f64,
    pub gradient_penalty: f64,
    pub grad_norm: f64,
}

fn adam_cfg(cfg: &TrainConfig) -> AdamConfig {
    AdamConfig::new(cfg.lr, cfg.beta0, cfg.beta1)
}

fn critic_adam_cfg(cfg: &TrainConfig) -> AdamConfig {
    AdamConfig::new(cfg.critic_step_size(), cfg.beta0, cfg.beta1)
}

fn ensure_finite(iteration: usize, what: &str, v: f64, trace: &TrainTrace) -> Result<()> {
    if v.is_finite() {
        return Ok(());
    }
    let tail: Vec<String> = trace
        .rows
        .iter()
        .rev()
        .take(3)
        .map(|r| {
            format!(
                "iter {} dual {} p1 {} p2 {}",
                r.iteration, r.dual_estimate, r.p1, r.p2
            )
        })
        .collect();
    Err(Error::NonFinite {
        iteration,
        detail: format!("{what} = {v}; last rows: [{}]", tail.join("; ")),
    })
}

/// One ascent step on `L = dual − P₁ − P₂`. `bx` plays the role of the
/// potential's support and `by` the c-transform side.
pub(crate) fn qp_critic_step(
    cfg: &TrainConfig,
    critic: &mut MlpNetwork,
    adam: &mut AdamState,
    bx: &[Point],
    by: &[Point],
    rng: &mut SeededRng,
) -> Result<CriticStats> {
    let m = bx.len();
    let mut tape = Tape::new();
    let bound = critic.bind(&mut tape);
    let xv = tape.leaf(points_to_tensor(bx)?);
    let yv = tape.leaf(points_to_tensor(by)?);
    let need_union = cfg.search == SearchMode::BxUnionBy || cfg.penalties.lambda2 > 0.0;

    let (union, phi_u, phi_x) = if need_union {
        let u = tape.concat_rows(xv, yv);
        let phi_u = bound.forward(&mut tape, u, Mode::Train, rng)?;
        let phi_x = tape.gather_rows(phi_u, (0..m).collect());
        (Some(u), Some(phi_u), phi_x)
    } else {
        (None, None, bound.forward(&mut tape, xv, Mode::Train, rng)?)
    };
    let (b, phi_b) = match cfg.search {
        SearchMode::Bx => (xv, phi_x),
        SearchMode::BxUnionBy => (union.expect("union"), phi_u.expect("union potentials")),
    };

    let (psi_y, _) = c_transform_tape(&mut tape, phi_b, b, yv, cfg.cost)?;
    let dual = dual_estimate(&mut tape, phi_x, psi_y)?;
    let mut objective = dual;
    let mut stats = CriticStats {
        dual: tape.scalar(dual),
        ..Default::default()
    };
    if cfg.penalties.lambda1 > 0.0 {
        let p1 = penalty_p1(
            &mut tape,
            xv,
            yv,
            phi_x,
            psi_y,
            cfg.penalties.lambda1,
            cfg.cost,
        )?;
        stats.p1 = tape.scalar(p1);
        objective = tape.sub(objective, p1);
    }
    if cfg.penalties.lambda2 > 0.0 {
        let (u, phi_u) = (union.expect("union"), phi_u.expect("union potentials"));
        let (psi_u, _) = c_transform_tape(&mut tape, phi_b, b, u, cfg.cost)?;
        let p2 = penalty_p2(
            &mut tape,
            u,
            phi_u,
            psi_u,
            cfg.penalties.lambda2,
            cfg.p2_form,
            cfg.cost,
        )?;
        stats.p2 = tape.scalar(p2);
        objective = tape.sub(objective, p2);
    }
    stats.objective = tape.scalar(objective);
    let loss = tape.neg(objective);
    let grads = tape.backward(loss)?;
    let flat = bound.flat_grads(&tape, &grads);
    stats.grad_norm = l2_norm(&flat);
    let mut params = critic.flat_params();
    adam_step(&mut params, &flat, adam, &critic_adam_cfg(cfg))?;
    critic.set_flat_params(&params)?;
    Ok(stats)
}

/// WGAN critic step: ascent on `mean φ(x) − mean φ(y)`, optionally with a
/// gradient penalty on random interpolates.
fn wgan_critic_step(
    cfg: &TrainConfig,
    critic: &mut MlpNetwork,
    adam: &mut AdamState,
    bx: &[Point],
    by: &[Point],
    rng: &mut SeededRng,
) -> Result<CriticStats> {
    let mut tape = Tape::new();
    let bound = critic.bind(&mut tape);
    let xv = tape.leaf(points_to_tensor(bx)?);
    let yv = tape.leaf(points_to_tensor(by)?);
    let phi_x = bound.forward(&mut tape, xv, Mode::Train, rng)?;
    let phi_y = bound.forward(&mut tape, yv, Mode::Train, rng)?;
    let ex = tape.mean(phi_x);
    let ey = tape.mean(phi_y);
    let objective = tape.sub(ex, ey);
    let mut stats = CriticStats {
        objective: tape.scalar(objective),
        ..Default::default()
    };
    let mut loss = tape.neg(objective);
    if let Method::WganGp { lambda_gp } = cfg.method {
        let gp = gradient_penalty(&mut tape, &bound, bx, by, lambda_gp, rng)?;
        stats.gradient_penalty = tape.scalar(gp);
        loss = tape.add(loss, gp);
    }
    let grads = tape.backward(loss)?;
    let flat = bound.flat_grads(&tape, &grads);
    stats.grad_norm = l2_norm(&flat);
    let mut params = critic.flat_params();
    adam_step(&mut params, &flat, adam, &critic_adam_cfg(cfg))?;
    critic.set_flat_params(&params)?;
    if let Method::WganClip { clip } = cfg.method {
        critic.clip_weights(clip);
    }
    Ok(stats)
}

/// `λ · mean_i (‖∇φ(x̂_i)‖₂ − 1)²` with `x̂_i = ε_i x_i + (1 − ε_i) y_i`.
pub(crate) fn gradient_penalty(
    tape: &mut Tape,
    bound: &crate::autodiff::BoundMlp<'_>,
    bx: &[Point],
    by: &[Point],
    lambda: f64,
    rng: &mut SeededRng,
) -> Result<Var> {
    let dim = bx[0].dim();
    let mut data = Vec::with_capacity(bx.len() * dim);
    for (x, y) in bx.iter().zip(by) {
        let e = rng.uniform(0.0, 1.0);
        data.extend(
            x.coords()
                .iter()
                .zip(y.coords())
                .map(|(a, b)| e * a + (1.0 - e) * b),
        );
    }
    let xhat = tape.leaf(Tensor::from_vec(bx.len(), dim, data));
    let out = bound.forward(tape, xhat, Mode::Train, rng)?;
    let total = tape.sum(out);
    let g = tape.grad_graph(total, &[xhat])?[0];
    let sq = tape.square(g);
    let sq = tape.sum_cols(sq);
    let sq = tape.add_scalar(sq, 1e-12);
    let norm = tape.sqrt(sq);
    let dev = tape.add_scalar(norm, -1.0);
    let dev = tape.square(dev);
    let mean = tape.mean(dev);
    Ok(tape.scale(mean, lambda))
}

/// Generator descent on the dual estimate. Returns `(estimate, grad norm)`.
#[allow(clippy::too_many_arguments)]
fn generator_step(
    cfg: &TrainConfig,
    generator: &mut MlpNetwork,
    critic: &MlpNetwork,
    adam: &mut AdamState,
    bx: &[Point],
    z: &[Point],
    y_detached: &[Point],
    rng: &mut SeededRng,
) -> Result<(f64, f64)> {
    let mut tape = Tape::new();
    let bound = generator.bind(&mut tape);
    let zv = tape.leaf(points_to_tensor(z)?);
    let yv = bound.forward(&mut tape, zv, Mode::Train, rng)?;
    let phi_x_vals = critic.eval_points(bx)?;
    let phi_x = tape.leaf(phi_x_vals.clone());

    let estimate = match cfg.method {
        Method::QpWgan => {
            // Points of B and their potentials are constants here; the
            // generator only sees the selected cost term c(x*, y).
            let (b_pts, phi_b_vals) = match cfg.search {
                SearchMode::Bx => (points_to_tensor(bx)?, phi_x_vals),
                SearchMode::BxUnionBy => {
                    let mut all = bx.to_vec();
                    all.extend_from_slice(y_detached);
                    let t = points_to_tensor(&all)?;
                    let phi = critic.eval(&t)?;
                    (t, phi)
                }
            };
            let b = tape.leaf(b_pts);
            let phi_b = tape.leaf(phi_b_vals);
            let (psi_y, _) = c_transform_tape(&mut tape, phi_b, b, yv, cfg.cost)?;
            dual_estimate(&mut tape, phi_x, psi_y)?
        }
        Method::WganClip { .. } | Method::WganGp { .. } => {
            let cb = critic.bind(&mut tape);
            let phi_y = cb.forward(&mut tape, yv, Mode::Eval, rng)?;
            let ex = tape.mean(phi_x);
            let ey = tape.mean(phi_y);
            tape.sub(ex, ey)
        }
    };
    let value = tape.scalar(estimate);
    let grads = tape.backward(estimate)?;
    let flat = bound.flat_grads(&tape, &grads);
    let norm = l2_norm(&flat);
    let mut params = generator.flat_params();
    adam_step(&mut params, &flat, adam, &adam_cfg(cfg))?;
    generator.set_flat_params(&params)?;
    Ok((value, norm))
}

fn generate(generator: &MlpNetwork, z: &[Point]) -> Result<Vec<Point>> {
    tensor_to_points(&generator.eval(&points_to_tensor(z)?)?)
}

/// Runs the configured method. `eval_data`, when given, is compared with
/// exact OT against the generated batch of every `eval_every`-th iteration
/// (and of the final iteration), the same batch the dual estimate is taken
/// on.
pub fn train(
    cfg: &TrainConfig,
    target: &dyn Sampler,
    source: &dyn Sampler,
    generator: MlpNetwork,
    critic: MlpNetwork,
    eval_data: Option<&[Point]>,
) -> Result<TrainOutcome> {
    train_observed(
        cfg,
        target,
        source,
        generator,
        critic,
        eval_data,
        &mut |_, _| Ok(()),
    )
}

/// [`train`] calling `observe(iteration, generator)` after every generator
/// update.
pub fn train_observed(
    cfg: &TrainConfig,
    target: &dyn Sampler,
    source: &dyn Sampler,
    mut generator: MlpNetwork,
    mut critic: MlpNetwork,
    eval_data: Option<&[Point]>,
    observe: &mut dyn FnMut(usize, &MlpNetwork) -> Result<()>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if generator.input_dim() != source.dim() {
        return Err(Error::DimensionMismatch {
            expected: source.dim(),
            got: generator.input_dim(),
        });
    }
    if generator.output_dim() != target.dim() || critic.input_dim() != target.dim() {
        return Err(Error::DimensionMismatch {
            expected: target.dim(),
            got: generator.output_dim(),
        });
    }
    if critic.output_dim() != 1 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            got: critic.output_dim(),
        });
    }

    let start = Instant::now();
    let root = SeededRng::new(cfg.seed);
    let mut data_rng = root.split(1);
    let mut noise_rng = root.split(2);
    let mut dropout_rng = root.split(3);
    let eval_measure = eval_data
        .map(|d| empirical_measure(d.to_vec()))
        .transpose()?;

    let mut critic_adam = AdamState::new(critic.num_params());
    let mut gen_adam = AdamState::new(generator.num_params());
    let mut trace = TrainTrace::default();
    let m = cfg.batch_size;

    for iter in 0..cfg.iterations {
        let bx = target.sample(m, &mut data_rng);
        let z = source.sample(m, &mut noise_rng);
        let y = generate(&generator, &z)?;

        let mut stats = CriticStats::default();
        for _ in 0..cfg.n_critic {
            stats = match cfg.method {
                Method::QpWgan => qp_critic_step(
                    cfg,
                    &mut critic,
                    &mut critic_adam,
                    &bx,
                    &y,
                    &mut dropout_rng,
                )?,
                _ => wgan_critic_step(
                    cfg,
                    &mut critic,
                    &mut critic_adam,
                    &bx,
                    &y,
                    &mut dropout_rng,
                )?,
            };
            ensure_finite(iter, "critic objective", stats.objective, &trace)?;
        }

        let (estimate, gen_norm) = generator_step(
            cfg,
            &mut generator,
            &critic,
            &mut gen_adam,
            &bx,
            &z,
            &y,
            &mut dropout_rng,
        )?;
        ensure_finite(iter, "dual estimate", estimate, &trace)?;
        observe(iter, &generator)?;

        let (lipschitz, renormalized) = match cfg.method {
            Method::QpWgan => (None, None),
            _ => {
                let mut pts = bx.clone();
                pts.extend(y.iter().cloned());
                match estimate_lipschitz(&critic, &pts, cfg.cost.q) {
                    Ok(l) if l > 0.0 => (Some(l), Some(estimate / l)),
                    Ok(l) => (Some(l), None),
                    Err(_) => (None, None),
                }
            }
        };

        let last = iter + 1 == cfg.iterations;
        // Exact OT of the generated batch the estimate was computed on.
        let true_ot = match &eval_measure {
            Some(data) if cfg.eval_every > 0 && (iter % cfg.eval_every == 0 || last) => Some(
                ot_exact(data, &empirical_measure(y.clone())?, cfg.cost)?
                    .0
                    .value,
            ),
            _ => None,
        };

        trace.rows.push(TraceRow {
            iteration: iter,
            dual_estimate: estimate,
            p1: stats.p1,
            p2: stats.p2,
            gradient_penalty: stats.gradient_penalty,
            lipschitz,
            renormalized,
            true_ot,
            critic_grad_norm: stats.grad_norm,
            generator_grad_norm: gen_norm,
        });
    }
    trace.elapsed_secs = start.elapsed().as_secs_f64();
    Ok(TrainOutcome {
        generator,
        critic,
        trace,
    })
}

fn with_method(cfg: &TrainConfig, method: Method) -> TrainConfig {
    TrainConfig {
        method,
        ..cfg.clone()
    }
}

/// (q,p)-WGAN training loop.
pub fn train_qp_wgan(
    cfg: &TrainConfig,
    target: &dyn Sampler,
    source: &dyn Sampler,
    generator: MlpNetwork,
    critic: MlpNetwork,
    eval_data: Option<&[Point]>,
) -> Result<TrainOutcome> {
    train(
        &with_method(cfg, Method::QpWgan),
        target,
        source,
        generator,
        critic,
        eval_data,
    )
}

/// Weight-clipping WGAN baseline.
pub fn train_wgan_clip(
    cfg: &TrainConfig,
    clip: f64,
    target: &dyn Sampler,
    source: &dyn Sampler,
    generator: MlpNetwork,
    critic: MlpNetwork,
    eval_data: Option<&[Point]>,
) -> Result<TrainOutcome> {
    train(
        &with_method(cfg, Method::WganClip { clip }),
        target,
        source,
        generator,
        critic,
        eval_data,
    )
}

/// Gradient-penalty WGAN baseline.
pub fn train_wgan_gp(
    cfg: &TrainConfig,
    lambda_gp: f64,
    target: &dyn Sampler,
    source: &dyn Sampler,
    generator: MlpNetwork,
    critic: MlpNetwork,
    eval_data: Option<&[Point]>,
) -> Result<TrainOutcome> {
    train(
        &with_method(cfg, Method::WganGp { lambda_gp }),
        target,
        source,
        generator,
        critic,
        eval_data,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{Activation, Layer};
    use crate::measure::CostSpec;
    use crate::train::{Sampler, TraceRow};

    fn linear_critic(a: &[f64]) -> MlpNetwork {
        MlpNetwork::from_layers(vec![Layer {
            weight: Tensor::from_vec(a.len(), 1, a.to_vec()),
            bias: Tensor::zeros(1, 1),
            activation: Activation::Identity,
            dropout: 0.0,
        }])
        .unwrap()
    }

    fn gp_of(a: &[f64], lambda: f64) -> f64 {
        let net = linear_critic(a);
        let mut tape = Tape::new();
        let bound = net.bind(&mut tape);
        let mut rng = SeededRng::new(0);
        let pts = |v: &[[f64; 2]]| -> Vec<Point> {
            v.iter().map(|c| Point::new(c.to_vec()).unwrap()).collect()
        };
        let bx = pts(&[[0.0, 1.0], [2.0, -1.0]]);
        let by = pts(&[[1.0, 1.0], [0.5, 0.5]]);
        let gp = gradient_penalty(&mut tape, &bound, &bx, &by, lambda, &mut rng).unwrap();
        tape.scalar(gp)
    }

    #[test]
    fn gradient_penalty_examples() {
        assert!(gp_of(&[0.6, 0.8], 10.0).abs() < 1e-9);
        assert!((gp_of(&[0.0, 2.0], 10.0) - 10.0).abs() < 1e-9);
    }

    #[test]
    fn dimension_checks() {
        let mut rng = SeededRng::new(0);
        let cfg = TrainConfig::toy_gmm(CostSpec::new(2.0, 2.0).unwrap());
        let target = super::super::DatasetSampler {
            points: vec![Point::new(vec![0.0, 0.0]).unwrap()],
        };
        let source = super::super::SourceSampler {
            kind: crate::measure::SourceKind::Gaussian,
            dim: 3,
        };
        let g = MlpNetwork::toy(2, 2, &mut rng).unwrap();
        let c = MlpNetwork::toy(2, 1, &mut rng).unwrap();
        assert!(train(&cfg, &target, &source, g, c, None).is_err());
    }

    fn dataset(xs: &[&[f64]]) -> super::super::DatasetSampler {
        super::super::DatasetSampler {
            points: xs.iter().map(|c| Point::new(c.to_vec()).unwrap()).collect(),
        }
    }

    fn gaussian(dim: usize) -> super::super::SourceSampler {
        super::super::SourceSampler {
            kind: crate::measure::SourceKind::Gaussian,
            dim,
        }
    }

    #[test]
    fn critic_ascent_approaches_batch_ot() {
        let mut rng = SeededRng::new(3);
        let spec = CostSpec::new(2.0, 2.0).unwrap();
        let bx = gaussian(2).sample(64, &mut rng);
        let by: Vec<Point> = gaussian(2)
            .sample(64, &mut rng)
            .into_iter()
            .map(|q| Point::new(q.coords().iter().map(|v| 0.3 * v + 0.5).collect()).unwrap())
            .collect();
        let cfg = TrainConfig {
            lr: 1e-3,
            critic_lr: None,
            ..TrainConfig::toy_gmm(spec)
        };
        let ot = ot_exact(
            &empirical_measure(bx.clone()).unwrap(),
            &empirical_measure(by.clone()).unwrap(),
            spec,
        )
        .unwrap()
        .0
        .value;
        let mut critic = MlpNetwork::toy(2, 1, &mut rng).unwrap();
        let mut adam = AdamState::new(critic.num_params());
        let mut dual = 0.0;
        for _ in 0..1500 {
            dual = qp_critic_step(&cfg, &mut critic, &mut adam, &bx, &by, &mut rng)
                .unwrap()
                .dual;
            assert!(dual <= ot + 1e-9);
        }
        assert!(dual > 0.97 * ot, "{dual} vs {ot}");
    }

    #[test]
    fn generator_reaches_dirac() {
        let mut rng = SeededRng::new(1);
        let target = dataset(&[&[5.0]]);
        let generator = MlpNetwork::from_layers(vec![Layer {
            weight: Tensor::zeros(1, 1),
            bias: Tensor::zeros(1, 1),
            activation: Activation::Identity,
            dropout: 0.0,
        }])
        .unwrap();
        let critic = MlpNetwork::toy(1, 1, &mut rng).unwrap();
        let cfg = TrainConfig {
            batch_size: 32,
            lr: 1e-2,
            critic_lr: Some(1e-3),
            n_critic: 2,
            iterations: 2000,
            eval_every: 0,
            ..TrainConfig::toy_gmm(CostSpec::new(2.0, 2.0).unwrap())
        };
        let out = train(&cfg, &target, &gaussian(1), generator, critic, None).unwrap();
        let z = gaussian(1).sample(50, &mut rng);
        for y in generate(&out.generator, &z).unwrap() {
            assert!((y.coords()[0] - 5.0).abs() < 0.05, "{y:?}");
        }
    }

    #[test]
    fn identity_generator_dual_near_zero() {
        let spec = CostSpec::new(2.0, 2.0).unwrap();
        let generator = MlpNetwork::from_layers(vec![Layer {
            weight: Tensor::from_vec(2, 2, vec![1.0, 0.0, 0.0, 1.0]),
            bias: Tensor::zeros(1, 2),
            activation: Activation::Identity,
            dropout: 0.0,
        }])
        .unwrap();
        let mut rng = SeededRng::new(5);
        let critic = MlpNetwork::toy(2, 1, &mut rng).unwrap();
        let cfg = TrainConfig {
            batch_size: 64,
            lr: 1e-12,
            critic_lr: Some(1e-3),
            iterations: 300,
            eval_every: 0,
            ..TrainConfig::toy_gmm(spec)
        };
        let src = gaussian(2);
        let out = train(&cfg, &src, &src, generator, critic, None).unwrap();
        let tail = &out.trace.rows[200..];
        let mean = tail.iter().map(|r| r.dual_estimate).sum::<f64>() / tail.len() as f64;
        // Sampling noise: OT between two independent batches of the same law.
        let mut noise = 0.0;
        for _ in 0..10 {
            let a = empirical_measure(src.sample(64, &mut rng)).unwrap();
            let b = empirical_measure(src.sample(64, &mut rng)).unwrap();
            noise += ot_exact(&a, &b, spec).unwrap().0.value / 10.0;
        }
        assert!(mean.abs() <= noise, "{mean} vs noise {noise}");
    }

    #[test]
    fn identical_seeds_identical_traces() {
        let mut rng = SeededRng::new(2);
        let target = dataset(&[&[0.0, 0.0], &[1.0, 0.5], &[0.3, 2.0], &[-1.0, 1.0]]);
        let g = MlpNetwork::toy(2, 2, &mut rng).unwrap();
        let c = MlpNetwork::toy(2, 1, &mut rng).unwrap();
        for method in [
            Method::QpWgan,
            Method::WganClip { clip: 0.01 },
            Method::WganGp { lambda_gp: 10.0 },
        ] {
            let cfg = TrainConfig {
                iterations: 20,
                batch_size: 4,
                eval_every: 5,
                method,
                ..TrainConfig::toy_gmm(CostSpec::new(2.0, 1.0).unwrap())
            };
            let pts = target.points.clone();
            let a = train(
                &cfg,
                &target,
                &gaussian(2),
                g.clone(),
                c.clone(),
                Some(&pts),
            )
            .unwrap();
            let b = train(
                &cfg,
                &target,
                &gaussian(2),
                g.clone(),
                c.clone(),
                Some(&pts),
            )
            .unwrap();
            assert_eq!(a.trace.rows, b.trace.rows);
            assert_eq!(a.generator.flat_params(), b.generator.flat_params());
        }
    }

    #[test]
    fn unclipped_critic_lipschitz_grows() {
        let mut rng = SeededRng::new(4);
        let target = dataset(&[&[0.0, 0.0], &[3.0, 0.0], &[0.0, 3.0], &[3.0, 3.0]]);
        let g = MlpNetwork::toy(2, 2, &mut rng).unwrap();
        let c = MlpNetwork::toy(2, 1, &mut rng).unwrap();
        let cfg = TrainConfig {
            iterations: 60,
            batch_size: 4,
            eval_every: 0,
            critic_lr: Some(1e-2),
            method: Method::WganClip { clip: 1e9 },
            ..TrainConfig::toy_gmm(CostSpec::new(2.0, 1.0).unwrap())
        };
        let out = train(&cfg, &target, &gaussian(2), g, c, None).unwrap();
        let lip = |r: &TraceRow| r.lipschitz.unwrap();
        let first = lip(&out.trace.rows[0]);
        let last = lip(out.trace.rows.last().unwrap());
        assert!(last > 5.0 * first && last > 2.0, "{first} -> {last}");
    }
}
