//! Self-test of the exact solver, the c-transform and the gradients against
//! slower reference computations.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::config::OracleCheckConfig;
use super::io::write_text;
use crate::autodiff::{Activation, Layer, MlpNetwork, Mode, Tape, Tensor};
use crate::dual::c_transform;
use crate::error::Result;
use crate::measure::{cost, empirical_measure, CostSpec, DiscreteMeasure, Point};
use crate::ot::{duality_gap, ot_1d_sorted, ot_bruteforce, ot_exact, CostMatrix};
use crate::rng::SeededRng;
use crate::train::support_gradient;

const MAX_LISTED_FAILURES: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub instance: usize,
    pub detail: String,
    pub inputs: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyResult {
    pub name: String,
    pub tolerance: String,
    pub passed: bool,
    pub checked: usize,
    pub skipped: usize,
    /// Largest observed error.
    pub worst: f64,
    pub failures: Vec<Failure>,
}

impl PropertyResult {
    fn new(name: &str, tolerance: &str) -> Self {
        Self {
            name: name.into(),
            tolerance: tolerance.into(),
            passed: true,
            checked: 0,
            skipped: 0,
            worst: 0.0,
            failures: Vec::new(),
        }
    }

    fn record(
        &mut self,
        instance: usize,
        err: f64,
        ok: bool,
        detail: impl FnOnce() -> (String, serde_json::Value),
    ) {
        self.checked += 1;
        if err.is_nan() {
            self.worst = f64::NAN;
        } else if !self.worst.is_nan() {
            self.worst = self.worst.max(err);
        }
        if !ok {
            self.passed = false;
            if self.failures.len() < MAX_LISTED_FAILURES {
                let (detail, inputs) = detail();
                self.failures.push(Failure {
                    instance,
                    detail,
                    inputs,
                });
            }
        }
    }

    fn error(&mut self, instance: usize, e: crate::error::Error) {
        self.record(instance, f64::NAN, false, || (e.to_string(), json!(null)));
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub passed: bool,
    pub properties: Vec<PropertyResult>,
}

fn random_points(n: usize, dim: usize, rng: &mut SeededRng) -> Vec<Point> {
    (0..n)
        .map(|_| Point::new((0..dim).map(|_| rng.uniform(0.0, 1.0)).collect()).expect("finite"))
        .collect()
}

fn coords(points: &[Point]) -> Vec<Vec<f64>> {
    points.iter().map(|p| p.coords().to_vec()).collect()
}

fn pick<T: Copy>(v: &[T], rng: &mut SeededRng) -> T {
    v[rng.index(v.len())]
}

/// Exact solver against permutation search, plus duality checks on the
/// same instances.
fn exact_and_duality(
    cfg: &OracleCheckConfig,
    rng: &mut SeededRng,
) -> (PropertyResult, PropertyResult) {
    let mut agree = PropertyResult::new("exact-vs-bruteforce", "abs <= 1e-8");
    let mut dual = PropertyResult::new(
        "strong-duality",
        "gap in [-1e-9, 1e-7]; admissibility <= 1e-9; slackness on positive plan entries <= 1e-7",
    );
    for inst in 0..cfg.instances {
        let m = 2 + rng.index(cfg.max_atoms - 1);
        let spec = CostSpec {
            q: pick(&cfg.exponents, rng),
            p: pick(&cfg.exponents, rng),
        };
        let xs = random_points(m, cfg.dim, rng);
        let ys = random_points(m, cfg.dim, rng);
        let inputs = || json!({"q": spec.q, "p": spec.p, "x": coords(&xs), "y": coords(&ys)});
        let run = || -> Result<_> {
            let mu = empirical_measure(xs.clone())?;
            let nu = empirical_measure(ys.clone())?;
            let (plan, mut duals) = ot_exact(&mu, &nu, spec)?;
            let brute = ot_bruteforce(&mu, &nu, spec)?;
            for v in &mut duals.phi {
                *v += cfg.perturb_duals;
            }
            let gap = duality_gap(&plan, &duals, &mu, &nu)?;
            let costs = CostMatrix::between(&mu, &nu, spec)?;
            let slack = plan
                .support(0.0)
                .iter()
                .map(|&(i, j, _)| (costs.get(i, j) - duals.phi[i] - duals.psi[j]).abs())
                .fold(0.0, f64::max);
            Ok((
                plan.value,
                brute.value,
                gap,
                duals.max_violation(&costs),
                slack,
            ))
        };
        match run() {
            Ok((exact, brute, gap, viol, slack)) => {
                let d = (exact - brute).abs();
                agree.record(inst, d, d <= 1e-8, || {
                    (format!("exact {exact} vs brute force {brute}"), inputs())
                });
                let ok = (-1e-9..=1e-7).contains(&gap) && viol <= 1e-9 && slack <= 1e-7;
                let err = gap.abs().max(viol).max(slack);
                dual.record(inst, err, ok, || {
                    (
                        format!("gap {gap}, violation {viol}, slackness {slack}"),
                        inputs(),
                    )
                });
            }
            Err(e) => {
                agree.error(inst, e.clone());
                dual.error(inst, e);
            }
        }
    }
    (agree, dual)
}

fn one_d(cfg: &OracleCheckConfig, rng: &mut SeededRng) -> PropertyResult {
    let mut prop = PropertyResult::new("one-d-sorted-matching", "abs <= 1e-8");
    for inst in 0..cfg.one_d_instances {
        let n = 1 + rng.index(40);
        let spec = CostSpec {
            q: pick(&cfg.exponents, rng),
            p: pick(&cfg.exponents, rng),
        };
        let a: Vec<f64> = (0..n).map(|_| rng.uniform(-2.0, 2.0)).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.uniform(-2.0, 2.0)).collect();
        let run = || -> Result<(f64, f64)> {
            let line = |v: &[f64]| -> Result<DiscreteMeasure> {
                empirical_measure(
                    v.iter()
                        .map(|&x| Point::new(vec![x]))
                        .collect::<Result<_>>()?,
                )
            };
            let exact = ot_exact(&line(&a)?, &line(&b)?, spec)?.0.value;
            Ok((exact, ot_1d_sorted(&a, &b, spec)?))
        };
        match run() {
            Ok((exact, sorted)) => {
                let d = (exact - sorted).abs();
                prop.record(inst, d, d <= 1e-8, || {
                    (
                        format!("exact {exact} vs sorted {sorted}"),
                        json!({"p": spec.p, "a": a, "b": b}),
                    )
                });
            }
            Err(e) => prop.error(inst, e),
        }
    }
    prop
}

fn transform(phi: &[f64], s: &[Point], spec: CostSpec) -> Result<Vec<f64>> {
    s.iter()
        .map(|y| Ok(c_transform(phi, s, y, spec)?.0))
        .collect()
}

fn c_transform_props(
    cfg: &OracleCheckConfig,
    rng: &mut SeededRng,
) -> (PropertyResult, PropertyResult) {
    let mut idem = PropertyResult::new("c-transform-idempotence", "|phi^ccc - phi^c| <= 1e-12");
    let mut adm = PropertyResult::new("xi-nonnegative", "xi >= -1e-12");
    for inst in 0..cfg.c_transform_instances {
        let n = 2 + rng.index(30);
        let spec = CostSpec {
            q: pick(&cfg.exponents, rng),
            p: pick(&cfg.exponents, rng),
        };
        let s = random_points(n, cfg.dim, rng);
        let phi: Vec<f64> = (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let run = || -> Result<(f64, f64)> {
            let c1 = transform(&phi, &s, spec)?;
            let c2 = transform(&c1, &s, spec)?;
            let c3 = transform(&c2, &s, spec)?;
            let d = c1
                .iter()
                .zip(&c3)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            let mut min_xi = f64::INFINITY;
            for (i, x) in s.iter().enumerate() {
                for (j, y) in s.iter().enumerate() {
                    min_xi = min_xi.min(cost(x, y, spec)? - phi[i] - c1[j]);
                }
            }
            Ok((d, min_xi))
        };
        let inputs = || json!({"q": spec.q, "p": spec.p, "points": coords(&s), "phi": phi});
        match run() {
            Ok((d, min_xi)) => {
                idem.record(inst, d, d <= 1e-12, || {
                    (format!("max deviation {d}"), inputs())
                });
                adm.record(inst, (-min_xi).max(0.0), min_xi >= -1e-12, || {
                    (format!("min xi {min_xi}"), inputs())
                });
            }
            Err(e) => {
                idem.error(inst, e.clone());
                adm.error(inst, e);
            }
        }
    }
    (idem, adm)
}

fn random_activation(rng: &mut SeededRng) -> Activation {
    match rng.index(4) {
        0 => Activation::Relu,
        1 => Activation::LeakyRelu { slope: 0.2 },
        2 => Activation::Tanh,
        _ => Activation::Identity,
    }
}

/// A random network with 1 to 3 layers.
pub fn random_mlp(rng: &mut SeededRng) -> Result<MlpNetwork> {
    let depth = 1 + rng.index(3);
    let mut fan_in = 1 + rng.index(4);
    let mut layers = Vec::with_capacity(depth);
    for d in 0..depth {
        let fan_out = if d + 1 == depth {
            1 + rng.index(3)
        } else {
            2 + rng.index(7)
        };
        let weight = Tensor::from_vec(
            fan_in,
            fan_out,
            (0..fan_in * fan_out)
                .map(|_| rng.uniform(-1.0, 1.0))
                .collect(),
        );
        let bias = Tensor::from_vec(
            1,
            fan_out,
            (0..fan_out).map(|_| rng.uniform(-0.5, 0.5)).collect(),
        );
        let activation = if d + 1 == depth && rng.bernoulli(0.5) {
            Activation::Identity
        } else {
            random_activation(rng)
        };
        layers.push(Layer {
            weight,
            bias,
            activation,
            dropout: 0.0,
        });
        fan_in = fan_out;
    }
    MlpNetwork::from_layers(layers)
}

/// Signs of every ReLU-type pre-activation, and the smallest magnitude.
fn kink_pattern(net: &MlpNetwork, x: &Tensor) -> (Vec<bool>, f64) {
    let mut h = x.clone();
    let mut signs = Vec::new();
    let mut closest = f64::INFINITY;
    for l in &net.layers {
        let mut z = h.matmul(&l.weight);
        for i in 0..z.rows {
            for j in 0..z.cols {
                z.data[i * z.cols + j] += l.bias.data[j];
            }
        }
        let kinked = matches!(
            l.activation,
            Activation::Relu | Activation::LeakyRelu { .. }
        );
        if kinked {
            for &v in &z.data {
                signs.push(v > 0.0);
                closest = closest.min(v.abs());
            }
        }
        h = match l.activation {
            Activation::Identity => z,
            Activation::Relu => z.map(|v| v.max(0.0)),
            Activation::LeakyRelu { slope } => z.map(|v| if v > 0.0 { v } else { slope * v }),
            Activation::Tanh => z.map(f64::tanh),
        };
    }
    (signs, closest)
}

fn weighted_loss(net: &MlpNetwork, x: &Tensor, r: &Tensor) -> Result<f64> {
    let out = net.eval(x)?;
    Ok(out.data.iter().zip(&r.data).map(|(a, b)| a * b).sum())
}

fn rel_err(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale < 1e-8 {
        if (a - b).abs() < 1e-10 {
            0.0
        } else {
            (a - b).abs() / 1e-8
        }
    } else {
        (a - b).abs() / scale
    }
}

/// Worst relative error between taped and central-difference gradients
/// for one network, with respect to parameters and inputs. Coordinates whose
/// `±eps` perturbation flips a ReLU pre-activation sign are skipped.
/// Returns `None` when some pre-activation lies within `1e-6` of a kink.
pub fn mlp_gradient_error(
    net: &MlpNetwork,
    x: &Tensor,
    r: &Tensor,
    eps: f64,
) -> Result<Option<(f64, usize)>> {
    let (base, closest) = kink_pattern(net, x);
    if closest < 1e-6 {
        return Ok(None);
    }
    let mut tape = Tape::new();
    let bound = net.bind(&mut tape);
    let xv = tape.leaf(x.clone());
    let out = bound.forward(&mut tape, xv, Mode::Eval, &mut SeededRng::new(0))?;
    let rv = tape.leaf(r.clone());
    let prod = tape.mul(out, rv);
    let loss = tape.sum(prod);
    let grads = tape.backward(loss)?;
    let dparams = bound.flat_grads(&tape, &grads);
    let dx = grads.wrt(&tape, xv);

    let mut worst = 0.0f64;
    let mut skipped = 0;
    let params = net.flat_params();
    let mut probe = net.clone();
    for k in 0..params.len() {
        let mut p = params.clone();
        p[k] = params[k] + eps;
        probe.set_flat_params(&p)?;
        let (sp, _) = kink_pattern(&probe, x);
        let fp = weighted_loss(&probe, x, r)?;
        p[k] = params[k] - eps;
        probe.set_flat_params(&p)?;
        let (sm, _) = kink_pattern(&probe, x);
        let fm = weighted_loss(&probe, x, r)?;
        if sp != base || sm != base {
            skipped += 1;
            continue;
        }
        worst = worst.max(rel_err(dparams[k], (fp - fm) / (2.0 * eps)));
    }
    for k in 0..x.data.len() {
        let mut xp = x.clone();
        xp.data[k] += eps;
        let mut xm = x.clone();
        xm.data[k] -= eps;
        if kink_pattern(net, &xp).0 != base || kink_pattern(net, &xm).0 != base {
            skipped += 1;
            continue;
        }
        let fd = (weighted_loss(net, &xp, r)? - weighted_loss(net, &xm, r)?) / (2.0 * eps);
        worst = worst.max(rel_err(dx.data[k], fd));
    }
    Ok(Some((worst, skipped)))
}

fn gradient_props(cfg: &OracleCheckConfig, rng: &mut SeededRng) -> PropertyResult {
    let mut prop = PropertyResult::new("mlp-gradients", "relative error < 1e-5 at eps = 1e-4");
    let mut inst = 0;
    let mut attempts = 0;
    while inst < cfg.gradient_nets && attempts < 20 * cfg.gradient_nets.max(1) {
        attempts += 1;
        let net = match random_mlp(rng) {
            Ok(n) => n,
            Err(e) => {
                prop.error(inst, e);
                inst += 1;
                continue;
            }
        };
        let batch = 1 + rng.index(3);
        let x = Tensor::from_vec(
            batch,
            net.input_dim(),
            (0..batch * net.input_dim())
                .map(|_| rng.uniform(-1.0, 1.0))
                .collect(),
        );
        let r = Tensor::from_vec(
            batch,
            net.output_dim(),
            (0..batch * net.output_dim())
                .map(|_| rng.uniform(-1.0, 1.0))
                .collect(),
        );
        match mlp_gradient_error(&net, &x, &r, 1e-4) {
            Ok(None) => prop.skipped += 1,
            Ok(Some((err, skipped))) => {
                prop.skipped += skipped;
                prop.record(inst, err, err < 1e-5, || {
                    (
                        format!("relative error {err}"),
                        json!({"network": net, "x": x, "weights": r}),
                    )
                });
                inst += 1;
            }
            Err(e) => {
                prop.error(inst, e);
                inst += 1;
            }
        }
    }
    prop
}

/// Relative error between the envelope gradient and central differences of
/// the exact OT value. `None` for configurations whose optimal plan is not
/// unique up to `1e-6` or whose basis is degenerate.
pub fn envelope_gradient_error(
    atoms: &[Point],
    target: &DiscreteMeasure,
    spec: CostSpec,
    eps: f64,
) -> Result<Option<f64>> {
    let model = empirical_measure(atoms.to_vec())?;
    let (plan, duals) = ot_exact(&model, target, spec)?;
    let costs = CostMatrix::between(&model, target, spec)?;
    let mut positive = 0;
    for i in 0..plan.rows() {
        for j in 0..plan.cols() {
            let g = plan.get(i, j);
            if g > 1e-9 {
                positive += 1;
            } else if g > 0.0 || costs.get(i, j) - duals.phi[i] - duals.psi[j] < 1e-6 {
                return Ok(None);
            }
        }
    }
    if positive != plan.rows() + plan.cols() - 1 {
        return Ok(None);
    }
    let (_, grad, _) = support_gradient(atoms, target, spec)?;
    let value = |pts: &[Point]| -> Result<f64> {
        Ok(ot_exact(&empirical_measure(pts.to_vec())?, target, spec)?
            .0
            .value)
    };
    let mut diff2 = 0.0;
    let mut norm2 = 0.0f64;
    let mut fd_norm2 = 0.0f64;
    for (i, a) in atoms.iter().enumerate() {
        for d in 0..a.dim() {
            let shifted = |delta: f64| -> Result<Vec<Point>> {
                let mut pts = atoms.to_vec();
                let mut c = a.coords().to_vec();
                c[d] += delta;
                pts[i] = Point::new(c)?;
                Ok(pts)
            };
            let fd = (value(&shifted(eps)?)? - value(&shifted(-eps)?)?) / (2.0 * eps);
            diff2 += (fd - grad[i][d]).powi(2);
            norm2 += grad[i][d].powi(2);
            fd_norm2 += fd * fd;
        }
    }
    let scale = norm2.sqrt().max(fd_norm2.sqrt()).max(1e-12);
    Ok(Some(diff2.sqrt() / scale))
}

/// A uniform `k`-atom model against a target with random weights, both in
/// the unit box.
pub fn random_envelope_instance(
    dim: usize,
    rng: &mut SeededRng,
) -> Result<(Vec<Point>, DiscreteMeasure)> {
    let k = 2 + rng.index(6);
    let n = 2 + rng.index(8);
    let atoms = random_points(k, dim, rng);
    let raw: Vec<f64> = (0..n).map(|_| rng.uniform(0.2, 1.0)).collect();
    let total: f64 = raw.iter().sum();
    let mut w: Vec<f64> = raw.iter().map(|v| v / total).collect();
    let drift = 1.0 - w.iter().sum::<f64>();
    w[n - 1] += drift;
    Ok((atoms, DiscreteMeasure::new(random_points(n, dim, rng), w)?))
}

fn envelope_props(cfg: &OracleCheckConfig, rng: &mut SeededRng) -> PropertyResult {
    let mut prop = PropertyResult::new("envelope-gradient", "relative error < 1e-4 at eps = 1e-6");
    let mut inst = 0;
    let mut attempts = 0;
    while inst < cfg.envelope_configs && attempts < 20 * cfg.envelope_configs.max(1) {
        attempts += 1;
        let spec = CostSpec {
            q: pick(&cfg.exponents, rng),
            p: pick(&cfg.exponents, rng),
        };
        let run = |rng: &mut SeededRng| -> Result<_> {
            let (atoms, target) = random_envelope_instance(cfg.dim, rng)?;
            let err = envelope_gradient_error(&atoms, &target, spec, 1e-6)?;
            Ok((atoms, target, err))
        };
        match run(rng) {
            Ok((_, _, None)) => prop.skipped += 1,
            Ok((atoms, target, Some(err))) => {
                prop.record(inst, err, err < 1e-4, || {
                    (
                        format!("relative error {err}"),
                        json!({"q": spec.q, "p": spec.p, "atoms": coords(&atoms), "target": target}),
                    )
                });
                inst += 1;
            }
            Err(e) => {
                prop.error(inst, e);
                inst += 1;
            }
        }
    }
    prop
}

/// Runs every property; a nonzero `perturb_duals` makes the duality
/// property fail.
pub fn check(cfg: &OracleCheckConfig) -> OracleReport {
    let root = SeededRng::new(cfg.seed);
    let (agree, dual) = exact_and_duality(cfg, &mut root.split(1));
    let (idem, adm) = c_transform_props(cfg, &mut root.split(3));
    let properties = vec![
        agree,
        dual,
        one_d(cfg, &mut root.split(2)),
        idem,
        adm,
        gradient_props(cfg, &mut root.split(4)),
        envelope_props(cfg, &mut root.split(5)),
    ];
    OracleReport {
        passed: properties.iter().all(|p| p.passed),
        properties,
    }
}

pub(super) fn run(cfg: &OracleCheckConfig, out: &Path) -> Result<(Vec<String>, OracleReport)> {
    let report = check(cfg);
    write_text(
        &out.join("report.json"),
        &(serde_json::to_string_pretty(&report)? + "\n"),
    )?;
    Ok((vec!["report.json".into()], report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::{ExperimentConfig, ExperimentKind};

    fn small() -> OracleCheckConfig {
        let ExperimentConfig::OracleCheck(mut c) =
            ExperimentConfig::preset(ExperimentKind::OracleCheck)
        else {
            unreachable!()
        };
        c.instances = 30;
        c.one_d_instances = 10;
        c.c_transform_instances = 10;
        c.gradient_nets = 8;
        c.envelope_configs = 8;
        c
    }

    #[test]
    fn clean_build_passes() {
        let r = check(&small());
        for p in &r.properties {
            assert!(p.passed, "{}: {:?}", p.name, p.failures.first());
            assert!(p.checked > 0, "{}", p.name);
        }
        assert!(r.passed);
    }

    #[test]
    fn perturbed_duals_fail() {
        let c = OracleCheckConfig {
            perturb_duals: 1e-3,
            ..small()
        };
        let r = check(&c);
        assert!(!r.passed);
        let d = r
            .properties
            .iter()
            .find(|p| p.name == "strong-duality")
            .unwrap();
        assert!(!d.passed && !d.failures.is_empty());
        let text = serde_json::to_string(&r).unwrap();
        let back: OracleReport = serde_json::from_str(&text).unwrap();
        assert!(!back.passed);
    }
}
