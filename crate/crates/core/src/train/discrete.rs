use serde::{Deserialize, Serialize};

use crate::autodiff::mlp::points_to_tensor;
use crate::autodiff::{adam_step, AdamConfig, AdamState, Tape, Tensor};
use crate::error::{Error, Result};
use crate::measure::{empirical_measure, CostSpec, DiscreteMeasure, Point};
use crate::ot::{ot_exact, TransportPlan};
use crate::rng::SeededRng;

use super::l2_norm;

/// `k` free atoms carrying mass `1/k` each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomModel {
    atoms: Vec<Point>,
}

impl AtomModel {
    pub fn new(atoms: Vec<Point>) -> Result<Self> {
        let first = atoms.first().ok_or(Error::Empty("atom model"))?;
        let dim = first.dim();
        if let Some(p) = atoms.iter().find(|p| p.dim() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: p.dim(),
            });
        }
        Ok(Self { atoms })
    }

    /// Atoms at the origin, each moved by a uniform jitter in `[-jitter, jitter]`.
    pub fn at_origin(k: usize, dim: usize, jitter: f64, rng: &mut SeededRng) -> Result<Self> {
        if k == 0 || dim == 0 {
            return Err(Error::InvalidParameter("k and dim must be >= 1".into()));
        }
        let atoms = (0..k)
            .map(|_| Point::new((0..dim).map(|_| rng.uniform(-jitter, jitter)).collect()))
            .collect::<Result<Vec<_>>>()?;
        Self::new(atoms)
    }

    pub fn atoms(&self) -> &[Point] {
        &self.atoms
    }

    pub fn k(&self) -> usize {
        self.atoms.len()
    }

    pub fn measure(&self) -> Result<DiscreteMeasure> {
        empirical_measure(self.atoms.clone())
    }
}

/// Adam settings for support fitting. Step sizes are relative to the
/// target's spread (root-mean-square coordinate deviation from its weighted
/// mean): the step starts at `lr * spread` and decays geometrically to
/// `lr * lr_final_fraction * spread` over `steps`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    pub k: usize,
    pub cost: CostSpec,
    pub steps: usize,
    pub lr: f64,
    pub lr_final_fraction: f64,
    pub beta0: f64,
    pub beta1: f64,
    pub jitter: f64,
    pub seed: u64,
}

impl FitConfig {
    pub fn new(k: usize, cost: CostSpec) -> Self {
        Self {
            k,
            cost,
            steps: 2000,
            lr: 0.07,
            lr_final_fraction: 1e-3,
            beta0: 0.9,
            beta1: 0.999,
            jitter: 1e-3,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.cost.validate()?;
        if self.k == 0 {
            return Err(Error::InvalidParameter("k must be >= 1".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "lr must be > 0, got {}",
                self.lr
            )));
        }
        if !(self.lr_final_fraction > 0.0 && self.lr_final_fraction <= 1.0) {
            return Err(Error::InvalidParameter(
                "lr_final_fraction must be in (0, 1]".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.beta0) || !(0.0..1.0).contains(&self.beta1) {
            return Err(Error::InvalidParameter(
                "Adam betas must be in [0, 1)".into(),
            ));
        }
        if !(self.jitter >= 0.0 && self.jitter.is_finite()) {
            return Err(Error::InvalidParameter("jitter must be >= 0".into()));
        }
        Ok(())
    }

    fn lr_at(&self, step: usize, spread: f64) -> f64 {
        if self.steps <= 1 {
            return self.lr * spread;
        }
        let t = step as f64 / (self.steps - 1) as f64;
        self.lr * spread * self.lr_final_fraction.powf(t)
    }
}

/// Root-mean-square coordinate deviation of `m` from its weighted mean, or 1
/// for a measure concentrated on one point.
pub fn spread(m: &DiscreteMeasure) -> f64 {
    let dim = m.dim();
    let mut mean = vec![0.0; dim];
    for (p, w) in m.atoms().iter().zip(m.weights()) {
        for (acc, v) in mean.iter_mut().zip(p.coords()) {
            *acc += w * v;
        }
    }
    let var: f64 = m
        .atoms()
        .iter()
        .zip(m.weights())
        .map(|(p, w)| {
            w * p
                .coords()
                .iter()
                .zip(&mean)
                .map(|(v, c)| (v - c) * (v - c))
                .sum::<f64>()
        })
        .sum::<f64>()
        / dim as f64;
    if var > 0.0 {
        var.sqrt()
    } else {
        1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitRow {
    pub step: usize,
    /// Exact OT value of the model before the step.
    pub value: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub model: AtomModel,
    pub trace: Vec<FitRow>,
    /// Atom positions before every step, followed by the final positions.
    pub trails: Vec<Vec<Point>>,
    /// Optimal plan between the final model (rows) and the target.
    pub plan: TransportPlan,
    pub final_value: f64,
}

impl FitResult {
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "step,value,grad_norm")?;
        for r in &self.trace {
            writeln!(w, "{},{},{}", r.step, r.value, r.grad_norm)?;
        }
        Ok(())
    }
}

/// OT value between uniform atoms and `target`, with its gradient in the
/// atom coordinates taken through the fixed optimal plan.
pub fn support_gradient(
    atoms: &[Point],
    target: &DiscreteMeasure,
    spec: CostSpec,
) -> Result<(f64, Vec<Vec<f64>>, TransportPlan)> {
    let model = empirical_measure(atoms.to_vec())?;
    if model.dim() != target.dim() {
        return Err(Error::DimensionMismatch {
            expected: target.dim(),
            got: model.dim(),
        });
    }
    let (plan, _) = ot_exact(&model, target, spec)?;
    let mut tape = Tape::new();
    let theta = tape.leaf(points_to_tensor(atoms)?);
    let x = tape.leaf(points_to_tensor(target.atoms())?);
    let c = tape.pairwise_cost(theta, x, spec);
    let gamma = Tensor::from_vec(plan.rows(), plan.cols(), plan.as_slice().to_vec());
    let weighted = tape.mask_mul(c, gamma);
    let total = tape.sum(weighted);
    let grads = tape.backward(total)?;
    let g = grads.wrt(&tape, theta);
    let rows = (0..g.rows).map(|i| g.row(i).to_vec()).collect();
    Ok((plan.value, rows, plan))
}

/// Adam on the atom positions of a `k`-atom uniform model, starting near
/// the origin.
pub fn fit_discrete_support(target: &DiscreteMeasure, cfg: &FitConfig) -> Result<FitResult> {
    cfg.validate()?;
    let mut rng = SeededRng::new(cfg.seed);
    let model = AtomModel::at_origin(cfg.k, target.dim(), cfg.jitter, &mut rng)?;
    let mut params: Vec<f64> = model
        .atoms
        .iter()
        .flat_map(|p| p.coords().to_vec())
        .collect();
    let dim = target.dim();
    let scale = spread(target);
    let mut state = AdamState::new(params.len());
    let mut trace = Vec::with_capacity(cfg.steps);
    let mut trails = Vec::with_capacity(cfg.steps + 1);

    let to_points = |flat: &[f64]| -> Result<Vec<Point>> {
        flat.chunks(dim).map(|c| Point::new(c.to_vec())).collect()
    };

    for step in 0..cfg.steps {
        let atoms = to_points(&params)?;
        let (value, grads, _) = support_gradient(&atoms, target, cfg.cost)?;
        let flat: Vec<f64> = grads.into_iter().flatten().collect();
        let grad_norm = l2_norm(&flat);
        trace.push(FitRow {
            step,
            value,
            grad_norm,
        });
        trails.push(atoms);
        let adam = AdamConfig::new(cfg.lr_at(step, scale), cfg.beta0, cfg.beta1);
        adam_step(&mut params, &flat, &mut state, &adam)?;
        if let Some(bad) = params.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                iteration: step,
                detail: format!("atom coordinate {bad}"),
            });
        }
    }
    let atoms = to_points(&params)?;
    let (final_value, _, plan) = support_gradient(&atoms, target, cfg.cost)?;
    trails.push(atoms.clone());
    Ok(FitResult {
        model: AtomModel::new(atoms)?,
        trace,
        trails,
        plan,
        final_value,
    })
}
