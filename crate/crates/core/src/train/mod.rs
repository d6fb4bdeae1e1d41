//! Training loops and their configuration.

mod discrete;
mod gan;
mod potential;

use std::io::Write;

use serde::{Deserialize, Serialize};

pub use discrete::{
    fit_discrete_support, spread, support_gradient, AtomModel, FitConfig, FitResult, FitRow,
};
pub use gan::{train, train_observed, train_qp_wgan, train_wgan_clip, train_wgan_gp, TrainOutcome};
pub use potential::{
    estimate_lipschitz, nearest_training_distance, potential_generator_experiment,
    transport_map_apply, transport_map_points, PotentialConfig, PotentialOutcome,
};

use crate::dual::{P2Form, PenaltyWeights, SearchMode};
use crate::error::{Error, Result};
use crate::measure::{sample_source, CostSpec, Point, SourceKind};
use crate::rng::SeededRng;

/// Training objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Method {
    /// Critic ascent on the c-transform dual with penalties.
    QpWgan,
    /// Weight-clipped WGAN critic.
    WganClip { clip: f64 },
    /// Gradient-penalty WGAN critic.
    WganGp { lambda_gp: f64 },
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::QpWgan => "qp-wgan",
            Method::WganClip { .. } => "wgan-clip",
            Method::WganGp { .. } => "wgan-gp",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr: f64,
    /// Critic step size; `lr` when absent.
    #[serde(default)]
    pub critic_lr: Option<f64>,
    pub beta0: f64,
    pub beta1: f64,
    pub n_critic: usize,
    pub iterations: usize,
    pub cost: CostSpec,
    pub penalties: PenaltyWeights,
    pub search: SearchMode,
    #[serde(default)]
    pub p2_form: P2Form,
    pub method: Method,
    /// Generator iterations between exact-OT evaluations; 0 disables them.
    pub eval_every: usize,
    pub seed: u64,
}

impl TrainConfig {
    /// Batch 64, α = 1e-4, Adam (0.5, 0.999), one critic step, λ₁ = 0.1,
    /// λ₂ = 10, search over `B_x ∪ B_y`.
    pub fn cifar_style(cost: CostSpec) -> Self {
        Self {
            batch_size: 64,
            lr: 1e-4,
            critic_lr: None,
            beta0: 0.5,
            beta1: 0.999,
            n_critic: 1,
            iterations: 50_000,
            cost,
            penalties: PenaltyWeights {
                lambda1: 0.1,
                lambda2: 10.0,
            },
            search: SearchMode::BxUnionBy,
            p2_form: P2Form::Violations,
            method: Method::QpWgan,
            eval_every: 0,
            seed: 0,
        }
    }

    /// As [`TrainConfig::cifar_style`] but without penalties and with the
    /// search space restricted to `B_x`.
    pub fn mnist_style(cost: CostSpec) -> Self {
        Self {
            penalties: PenaltyWeights::NONE,
            search: SearchMode::Bx,
            ..Self::cifar_style(cost)
        }
    }

    /// Desk-scale defaults for the planar Gaussian mixture: every batch is
    /// the whole 140-point dataset, and the critic steps with a larger rate
    /// than the generator so its estimate keeps up.
    pub fn toy_gmm(cost: CostSpec) -> Self {
        Self {
            batch_size: 140,
            lr: 1e-4,
            critic_lr: Some(3e-3),
            n_critic: 5,
            iterations: 1000,
            eval_every: 10,
            ..Self::mnist_style(cost)
        }
    }

    /// Weight-clipping baseline on the `(2, 1)` cost with clip 0.01.
    pub fn wgan_clip() -> Self {
        Self {
            method: Method::WganClip { clip: 0.01 },
            ..Self::toy_gmm(CostSpec { q: 2.0, p: 1.0 })
        }
    }

    /// Gradient-penalty baseline on the `(2, 1)` cost with λ = 10.
    pub fn wgan_gp() -> Self {
        Self {
            method: Method::WganGp { lambda_gp: 10.0 },
            ..Self::toy_gmm(CostSpec { q: 2.0, p: 1.0 })
        }
    }

    pub fn critic_step_size(&self) -> f64 {
        self.critic_lr.unwrap_or(self.lr)
    }

    pub fn validate(&self) -> Result<()> {
        self.cost.validate()?;
        PenaltyWeights::new(self.penalties.lambda1, self.penalties.lambda2)?;
        if self.batch_size == 0 {
            return Err(Error::InvalidParameter("batch_size must be >= 1".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "lr must be > 0, got {}",
                self.lr
            )));
        }
        if !(0.0..1.0).contains(&self.beta0) || !(0.0..1.0).contains(&self.beta1) {
            return Err(Error::InvalidParameter(
                "Adam betas must be in [0, 1)".into(),
            ));
        }
        if let Some(c) = self.critic_lr {
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "critic_lr must be > 0, got {c}"
                )));
            }
        }
        if self.n_critic == 0 {
            return Err(Error::InvalidParameter("n_critic must be >= 1".into()));
        }
        match self.method {
            Method::WganClip { clip } if !(clip > 0.0) => Err(Error::InvalidParameter(format!(
                "clip must be > 0, got {clip}"
            ))),
            Method::WganGp { lambda_gp } if !(lambda_gp >= 0.0) => Err(Error::InvalidParameter(
                format!("lambda_gp must be >= 0, got {lambda_gp}"),
            )),
            _ => Ok(()),
        }
    }
}

/// Source of training batches.
pub trait Sampler {
    fn dim(&self) -> usize;
    fn sample(&self, m: usize, rng: &mut SeededRng) -> Vec<Point>;
}

/// Draws from a fixed point set.
#[derive(Debug, Clone)]
pub struct DatasetSampler {
    pub points: Vec<Point>,
}

impl Sampler for DatasetSampler {
    fn dim(&self) -> usize {
        self.points.first().map_or(0, Point::dim)
    }

    /// Distinct points when `m` does not exceed the dataset size, so a batch
    /// of the full size is one pass over the data; draws with replacement
    /// otherwise.
    fn sample(&self, m: usize, rng: &mut SeededRng) -> Vec<Point> {
        let n = self.points.len();
        if m > n {
            return (0..m).map(|_| self.points[rng.index(n)].clone()).collect();
        }
        let mut idx: Vec<usize> = (0..n).collect();
        for i in 0..m {
            let j = i + rng.index(n - i);
            idx.swap(i, j);
        }
        idx[..m].iter().map(|&i| self.points[i].clone()).collect()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SourceSampler {
    pub kind: SourceKind,
    pub dim: usize,
}

impl Sampler for SourceSampler {
    fn dim(&self) -> usize {
        self.dim
    }

    fn sample(&self, m: usize, rng: &mut SeededRng) -> Vec<Point> {
        sample_source(self.kind, self.dim, m, rng)
    }
}

/// One logged generator iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    /// Dual objective on the batch: `mean φ(x) + mean ψ(y)`, with
    /// `ψ = −φ` for the WGAN baselines.
    pub dual_estimate: f64,
    pub p1: f64,
    pub p2: f64,
    pub gradient_penalty: f64,
    pub lipschitz: Option<f64>,
    /// Dual estimate divided by the Lipschitz estimate.
    pub renormalized: Option<f64>,
    /// Exact OT value between the evaluation data and this iteration's
    /// generated batch.
    pub true_ot: Option<f64>,
    pub critic_grad_norm: f64,
    pub generator_grad_norm: f64,
}

/// Per-iteration training log. Wall-clock time is kept out of the CSV so
/// reruns produce identical files.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub rows: Vec<TraceRow>,
    pub elapsed_secs: f64,
}

/// Column order of [`TrainTrace::write_csv`], version 1.
pub const TRACE_COLUMNS: [&str; 10] = [
    "iteration",
    "dual_estimate",
    "p1",
    "p2",
    "gradient_penalty",
    "lipschitz",
    "renormalized",
    "true_ot",
    "critic_grad_norm",
    "generator_grad_norm",
];

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl TrainTrace {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{}", TRACE_COLUMNS.join(","))?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{}",
                r.iteration,
                r.dual_estimate,
                r.p1,
                r.p2,
                r.gradient_penalty,
                opt(r.lipschitz),
                opt(r.renormalized),
                opt(r.true_ot),
                r.critic_grad_norm,
                r.generator_grad_norm
            )?;
        }
        Ok(())
    }

    /// Rows that carry an exact-OT evaluation.
    pub fn evaluated(&self) -> impl Iterator<Item = &TraceRow> {
        self.rows.iter().filter(|r| r.true_ot.is_some())
    }
}

pub(crate) fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}
