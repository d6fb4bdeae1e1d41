use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::autodiff::{grad_wrt_input, AdamState, MlpNetwork};
use crate::error::{Error, Result};
use crate::measure::{lq_slices, powr, CostSpec, Point};
use crate::rng::SeededRng;

use super::gan::qp_critic_step;
use super::{Method, Sampler, TraceRow, TrainConfig, TrainTrace};

fn check_map_spec(spec: CostSpec) -> Result<f64> {
    spec.validate()?;
    if spec.q != 2.0 {
        return Err(Error::InvalidParameter(format!(
            "transport map needs q = 2, got q = {}",
            spec.q
        )));
    }
    if spec.p <= 1.0 {
        return Err(Error::InvalidParameter(format!(
            "transport map needs p > 1, got p = {}",
            spec.p
        )));
    }
    Ok(spec.p / (spec.p - 1.0))
}

fn map_one(y: &Point, g: &[f64], p_dual: f64) -> Result<Point> {
    let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Ok(y.clone());
    }
    let f = powr(norm, p_dual - 2.0);
    Point::new(y.coords().iter().zip(g).map(|(a, b)| a - f * b).collect())
}

/// `T(y) = y − ‖∇φ(y)‖₂^{p′−2} ∇φ(y)` with `p′ = p/(p−1)`.
pub fn transport_map_apply(critic: &MlpNetwork, y: &Point, spec: CostSpec) -> Result<Point> {
    Ok(transport_map_points(critic, std::slice::from_ref(y), spec)?.remove(0))
}

/// [`transport_map_apply`] over a batch.
pub fn transport_map_points(
    critic: &MlpNetwork,
    ys: &[Point],
    spec: CostSpec,
) -> Result<Vec<Point>> {
    let p_dual = check_map_spec(spec)?;
    let grads = grad_wrt_input(critic, ys)?;
    ys.iter()
        .zip(&grads)
        .map(|(y, g)| map_one(y, g, p_dual))
        .collect()
}

/// Largest difference quotient `|φ(x) − φ(y)| / d_q(x, y)` over distinct pairs.
pub fn estimate_lipschitz(critic: &MlpNetwork, points: &[Point], q: f64) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::InvalidParameter(
            "Lipschitz estimate needs at least 2 points".into(),
        ));
    }
    let vals = critic.eval_points(points)?;
    if vals.cols != 1 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            got: vals.cols,
        });
    }
    let mut best: Option<f64> = None;
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            let d = lq_slices(points[i].coords(), points[j].coords(), q);
            if d > 0.0 {
                let r = (vals.data[i] - vals.data[j]).abs() / d;
                best = Some(best.map_or(r, |b: f64| b.max(r)));
            }
        }
    }
    best.ok_or_else(|| Error::InvalidParameter("all points coincide".into()))
}

/// Euclidean distance from each generated point to its closest training point.
pub fn nearest_training_distance(generated: &[Point], training: &[Point]) -> Result<Vec<f64>> {
    let dim = training.first().ok_or(Error::Empty("training set"))?.dim();
    generated
        .iter()
        .map(|g| {
            if g.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: g.dim(),
                });
            }
            Ok(training
                .iter()
                .map(|t| lq_slices(g.coords(), t.coords(), 2.0))
                .fold(f64::INFINITY, f64::min))
        })
        .collect()
}

/// Critic-only training followed by pushing fresh source samples through
/// the induced transport map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialConfig {
    pub train: TrainConfig,
    /// Number of source samples mapped at the end.
    pub samples: usize,
}

#[derive(Debug, Clone)]
pub struct PotentialOutcome {
    pub critic: MlpNetwork,
    pub source: Vec<Point>,
    pub mapped: Vec<Point>,
    pub trace: TrainTrace,
}

/// Trains `critic` as the potential on the source side against the target
/// (the c-transform lives on the data side), then maps source samples.
/// `cfg.train.iterations × cfg.train.n_critic` critic steps are taken.
pub fn potential_generator_experiment(
    cfg: &PotentialConfig,
    source: &dyn Sampler,
    target: &dyn Sampler,
    mut critic: MlpNetwork,
) -> Result<PotentialOutcome> {
    let tc = &cfg.train;
    tc.validate()?;
    if tc.method != Method::QpWgan {
        return Err(Error::InvalidParameter(
            "potential generator trains a (q,p) critic".into(),
        ));
    }
    check_map_spec(tc.cost)?;
    if source.dim() != target.dim() {
        return Err(Error::DimensionMismatch {
            expected: target.dim(),
            got: source.dim(),
        });
    }
    if critic.input_dim() != target.dim() || critic.output_dim() != 1 {
        return Err(Error::DimensionMismatch {
            expected: target.dim(),
            got: critic.input_dim(),
        });
    }

    let start = Instant::now();
    let root = SeededRng::new(tc.seed);
    let mut src_rng = root.split(1);
    let mut data_rng = root.split(2);
    let mut dropout_rng = root.split(3);
    let mut adam = AdamState::new(critic.num_params());
    let mut trace = TrainTrace::default();

    for iter in 0..tc.iterations {
        let mut last = None;
        for _ in 0..tc.n_critic {
            let bx = source.sample(tc.batch_size, &mut src_rng);
            let by = target.sample(tc.batch_size, &mut data_rng);
            let s = qp_critic_step(tc, &mut critic, &mut adam, &bx, &by, &mut dropout_rng)?;
            if !s.objective.is_finite() {
                return Err(Error::NonFinite {
                    iteration: iter,
                    detail: format!("critic objective = {}", s.objective),
                });
            }
            last = Some(s);
        }
        let s = last.expect("n_critic >= 1");
        trace.rows.push(TraceRow {
            iteration: iter,
            dual_estimate: s.dual,
            p1: s.p1,
            p2: s.p2,
            gradient_penalty: 0.0,
            lipschitz: None,
            renormalized: None,
            true_ot: None,
            critic_grad_norm: s.grad_norm,
            generator_grad_norm: 0.0,
        });
    }
    trace.elapsed_secs = start.elapsed().as_secs_f64();

    let samples = source.sample(cfg.samples, &mut root.split(4));
    let mapped = if samples.is_empty() {
        Vec::new()
    } else {
        transport_map_points(&critic, &samples, tc.cost)?
    };
    Ok(PotentialOutcome {
        critic,
        source: samples,
        mapped,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{Activation, Layer, Tensor};

    fn linear(a: &[f64], b: f64) -> MlpNetwork {
        MlpNetwork::from_layers(vec![Layer {
            weight: Tensor::from_vec(a.len(), 1, a.to_vec()),
            bias: Tensor::filled(1, 1, b),
            activation: Activation::Identity,
            dropout: 0.0,
        }])
        .unwrap()
    }

    fn pt(c: &[f64]) -> Point {
        Point::new(c.to_vec()).unwrap()
    }

    fn spec(q: f64, p: f64) -> CostSpec {
        CostSpec::new(q, p).unwrap()
    }

    #[test]
    fn map_examples() {
        let y = pt(&[1.0, -2.0]);
        let id = transport_map_apply(&linear(&[0.0, 0.0], 3.0), &y, spec(2.0, 2.0)).unwrap();
        assert_eq!(id, y);
        let t = transport_map_apply(&linear(&[0.5, 1.5], 0.0), &y, spec(2.0, 2.0)).unwrap();
        assert!((t.coords()[0] - 0.5).abs() < 1e-12 && (t.coords()[1] + 3.5).abs() < 1e-12);
        assert!(transport_map_apply(&linear(&[1.0, 0.0], 0.0), &y, spec(2.0, 1.0)).is_err());
        assert!(transport_map_apply(&linear(&[1.0, 0.0], 0.0), &y, spec(1.0, 2.0)).is_err());
        // p = 3: p′ = 1.5, zero gradient stays put.
        let z = transport_map_apply(&linear(&[0.0, 0.0], 0.0), &y, spec(2.0, 3.0)).unwrap();
        assert_eq!(z, y);
        // p = 3 with ‖a‖ = 4: factor 4^{-0.5} = 0.5.
        let w = transport_map_apply(&linear(&[4.0, 0.0], 0.0), &y, spec(2.0, 3.0)).unwrap();
        assert!((w.coords()[0] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn lipschitz_examples() {
        let pts = vec![pt(&[0.0, 0.0]), pt(&[1.0, 0.0]), pt(&[0.0, 2.0])];
        let l = estimate_lipschitz(&linear(&[3.0, 4.0], 0.0), &pts, 2.0).unwrap();
        assert!(l <= 5.0 + 1e-12);
        assert!((l - 4.0).abs() < 1e-12);
        assert_eq!(
            estimate_lipschitz(&linear(&[0.0, 0.0], 1.0), &pts, 2.0).unwrap(),
            0.0
        );
        let two = [pt(&[1.0, 1.0]), pt(&[2.0, 3.0])];
        let l2 = estimate_lipschitz(&linear(&[1.0, 1.0], 0.0), &two, 1.0).unwrap();
        assert!((l2 - 1.0).abs() < 1e-12);
        assert!(estimate_lipschitz(&linear(&[1.0, 1.0], 0.0), &[pt(&[1.0, 1.0])], 2.0).is_err());
        let same = [pt(&[1.0, 1.0]), pt(&[1.0, 1.0])];
        assert!(estimate_lipschitz(&linear(&[1.0, 1.0], 0.0), &same, 2.0).is_err());
    }

    #[test]
    fn nearest_distance_examples() {
        let train = vec![pt(&[0.0]), pt(&[10.0])];
        assert_eq!(
            nearest_training_distance(&[pt(&[4.0])], &train).unwrap(),
            vec![4.0]
        );
        assert_eq!(
            nearest_training_distance(&train, &train).unwrap(),
            vec![0.0, 0.0]
        );
        assert!(nearest_training_distance(&[pt(&[4.0])], &[]).is_err());
        assert!(nearest_training_distance(&[], &train).unwrap().is_empty());
    }
}
