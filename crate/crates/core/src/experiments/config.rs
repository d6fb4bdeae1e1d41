use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::measure::{CostSpec, GmmSpec, Point, SourceKind};
use crate::train::{FitConfig, Method, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    OracleCheck,
    ToyDiscrete,
    ToyGmm,
    PotentialGenerator,
    NnDistance,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::OracleCheck => "oracle-check",
            ExperimentKind::ToyDiscrete => "toy-discrete",
            ExperimentKind::ToyGmm => "toy-gmm",
            ExperimentKind::PotentialGenerator => "potential-generator",
            ExperimentKind::NnDistance => "nn-distance",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleCheckConfig {
    pub seed: u64,
    pub out: PathBuf,
    /// Random instances for the exact-vs-brute-force and duality checks.
    pub instances: usize,
    pub max_atoms: usize,
    pub dim: usize,
    /// Values used for both `q` and `p`.
    pub exponents: Vec<f64>,
    pub one_d_instances: usize,
    pub c_transform_instances: usize,
    pub gradient_nets: usize,
    pub envelope_configs: usize,
    /// Added to every returned dual potential before the duality checks.
    /// Nonzero values exist to exercise the failure path.
    pub perturb_duals: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToyDiscreteConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub plot: bool,
    /// Explicit target atoms; when absent `target_atoms` points are drawn
    /// uniformly in the unit square.
    pub target: Option<Vec<Point>>,
    pub target_atoms: usize,
    /// Optimizer settings; its `seed` is replaced by the run seed.
    pub fit: FitConfig,
}

/// One training run of the mixture experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    pub label: String,
    pub method: Method,
    /// Cost exponent; the WGAN baselines require 1.
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToyGmmConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub plot: bool,
    pub gmm: GmmSpec,
    pub source: SourceKind,
    pub noise_dim: usize,
    /// Ground metric exponent shared by all runs.
    pub q: f64,
    /// Shared training settings; `cost`, `method` and `seed` are set per run.
    pub train: TrainConfig,
    pub runs: Vec<RunSpec>,
    /// Generator iterations at which generated samples are recorded; the
    /// final iteration is always recorded.
    pub snapshots: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialGeneratorConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub plot: bool,
    pub gmm: GmmSpec,
    pub source: SourceKind,
    /// Use the source distribution as the target too.
    pub control: bool,
    /// Critic settings; `seed` is replaced by the run seed.
    pub train: TrainConfig,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NnDistanceConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub plot: bool,
    /// Generator checkpoint.
    pub checkpoint: PathBuf,
    /// CSV of training points with a header row.
    pub training_data: PathBuf,
    pub n: usize,
    pub source: SourceKind,
    pub bin_width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "experiment", rename_all = "kebab-case")]
pub enum ExperimentConfig {
    OracleCheck(OracleCheckConfig),
    ToyDiscrete(ToyDiscreteConfig),
    ToyGmm(ToyGmmConfig),
    PotentialGenerator(PotentialGeneratorConfig),
    NnDistance(NnDistanceConfig),
}

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub p: Option<f64>,
    pub q: Option<f64>,
    pub iterations: Option<usize>,
    pub k: Option<usize>,
    pub n: Option<usize>,
    pub bin_width: Option<f64>,
    pub checkpoint: Option<PathBuf>,
    pub training_data: Option<PathBuf>,
    pub perturb_duals: Option<f64>,
}

fn default_out(kind: ExperimentKind) -> PathBuf {
    Path::new("runs").join(kind.name())
}

fn potential_train() -> TrainConfig {
    TrainConfig {
        batch_size: 140,
        lr: 1e-3,
        critic_lr: None,
        n_critic: 1,
        iterations: 5000,
        eval_every: 0,
        ..TrainConfig::mnist_style(CostSpec { q: 2.0, p: 2.0 })
    }
}

impl ExperimentConfig {
    /// Built-in defaults for each experiment.
    pub fn preset(kind: ExperimentKind) -> Self {
        let out = default_out(kind);
        match kind {
            ExperimentKind::OracleCheck => ExperimentConfig::OracleCheck(OracleCheckConfig {
                seed: 0,
                out,
                instances: 200,
                max_atoms: 7,
                dim: 2,
                exponents: vec![1.0, 1.2, 2.0, 5.0],
                one_d_instances: 100,
                c_transform_instances: 100,
                gradient_nets: 50,
                envelope_configs: 50,
                perturb_duals: 0.0,
            }),
            ExperimentKind::ToyDiscrete => ExperimentConfig::ToyDiscrete(ToyDiscreteConfig {
                seed: 0,
                out,
                plot: true,
                target: None,
                target_atoms: 10,
                fit: FitConfig::new(7, CostSpec { q: 2.0, p: 2.0 }),
            }),
            ExperimentKind::ToyGmm => {
                let qp = |p: f64| RunSpec {
                    label: format!("qp-wgan-p{p}"),
                    method: Method::QpWgan,
                    p,
                };
                ExperimentConfig::ToyGmm(ToyGmmConfig {
                    seed: 0,
                    out,
                    plot: true,
                    gmm: GmmSpec::three_clusters(),
                    source: SourceKind::Gaussian,
                    noise_dim: 2,
                    q: 2.0,
                    train: TrainConfig::toy_gmm(CostSpec { q: 2.0, p: 2.0 }),
                    runs: vec![
                        qp(1.0),
                        qp(2.0),
                        qp(5.0),
                        RunSpec {
                            label: "wgan-clip".into(),
                            method: Method::WganClip { clip: 0.01 },
                            p: 1.0,
                        },
                        RunSpec {
                            label: "wgan-gp".into(),
                            method: Method::WganGp { lambda_gp: 10.0 },
                            p: 1.0,
                        },
                    ],
                    snapshots: vec![100, 500],
                })
            }
            ExperimentKind::PotentialGenerator => {
                ExperimentConfig::PotentialGenerator(PotentialGeneratorConfig {
                    seed: 0,
                    out,
                    plot: true,
                    gmm: GmmSpec::three_clusters(),
                    source: SourceKind::Gaussian,
                    control: false,
                    train: potential_train(),
                    samples: 140,
                })
            }
            ExperimentKind::NnDistance => ExperimentConfig::NnDistance(NnDistanceConfig {
                seed: 0,
                out,
                plot: true,
                checkpoint: default_out(ExperimentKind::ToyGmm).join("generator_qp-wgan-p2.ckpt"),
                training_data: default_out(ExperimentKind::ToyGmm).join("data.csv"),
                n: 5000,
                source: SourceKind::Gaussian,
                bin_width: 0.02,
            }),
        }
    }

    /// Preset, then `file` merged over it, then `flags`. The merged document
    /// is checked against the schema before anything runs.
    pub fn resolve(kind: ExperimentKind, file: Option<&Value>, flags: &Overrides) -> Result<Self> {
        let mut doc = serde_json::to_value(Self::preset(kind))?;
        if let Some(f) = file {
            let obj = f
                .as_object()
                .ok_or_else(|| Error::Config("config file must hold a JSON object".into()))?;
            if let Some(e) = obj.get("experiment") {
                if e.as_str() != Some(kind.name()) {
                    return Err(Error::Config(format!(
                        "config is for experiment {e}, not \"{}\"",
                        kind.name()
                    )));
                }
            }
            merge(&mut doc, f);
        }
        apply_flags(kind, &mut doc, flags)?;
        let cfg: Self = serde_json::from_value(doc).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads and resolves a JSON config file.
    pub fn load(kind: ExperimentKind, path: Option<&Path>, flags: &Overrides) -> Result<Self> {
        let file = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))?;
                Some(
                    serde_json::from_str::<Value>(&text)
                        .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?,
                )
            }
            None => None,
        };
        Self::resolve(kind, file.as_ref(), flags)
    }

    pub fn kind(&self) -> ExperimentKind {
        match self {
            ExperimentConfig::OracleCheck(_) => ExperimentKind::OracleCheck,
            ExperimentConfig::ToyDiscrete(_) => ExperimentKind::ToyDiscrete,
            ExperimentConfig::ToyGmm(_) => ExperimentKind::ToyGmm,
            ExperimentConfig::PotentialGenerator(_) => ExperimentKind::PotentialGenerator,
            ExperimentConfig::NnDistance(_) => ExperimentKind::NnDistance,
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            ExperimentConfig::OracleCheck(c) => c.seed,
            ExperimentConfig::ToyDiscrete(c) => c.seed,
            ExperimentConfig::ToyGmm(c) => c.seed,
            ExperimentConfig::PotentialGenerator(c) => c.seed,
            ExperimentConfig::NnDistance(c) => c.seed,
        }
    }

    pub fn out_dir(&self) -> PathBuf {
        match self {
            ExperimentConfig::OracleCheck(c) => c.out.clone(),
            ExperimentConfig::ToyDiscrete(c) => c.out.clone(),
            ExperimentConfig::ToyGmm(c) => c.out.clone(),
            ExperimentConfig::PotentialGenerator(c) => c.out.clone(),
            ExperimentConfig::NnDistance(c) => c.out.clone(),
        }
    }

    /// Semantic checks beyond the JSON schema.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        match self {
            ExperimentConfig::OracleCheck(c) => {
                if c.max_atoms < 2 || c.max_atoms > crate::ot::BRUTEFORCE_MAX_ATOMS {
                    return bad(format!(
                        "max_atoms must be in 2..={}",
                        crate::ot::BRUTEFORCE_MAX_ATOMS
                    ));
                }
                if c.dim == 0 || c.exponents.is_empty() {
                    return bad("dim and exponents must be nonempty".into());
                }
                for &e in &c.exponents {
                    CostSpec::new(e, e).map_err(|e| Error::Config(e.to_string()))?;
                }
                if !c.perturb_duals.is_finite() {
                    return bad("perturb_duals must be finite".into());
                }
            }
            ExperimentConfig::ToyDiscrete(c) => {
                c.fit.validate().map_err(|e| Error::Config(e.to_string()))?;
                match &c.target {
                    Some(t) if t.is_empty() => return bad("target must be nonempty".into()),
                    Some(t) if t.iter().any(|p| p.dim() != t[0].dim()) => {
                        return bad("target atoms must share a dimension".into())
                    }
                    None if c.target_atoms == 0 => return bad("target_atoms must be >= 1".into()),
                    _ => {}
                }
            }
            ExperimentConfig::ToyGmm(c) => {
                c.gmm.validate().map_err(|e| Error::Config(e.to_string()))?;
                if c.runs.is_empty() {
                    return bad("runs must be nonempty".into());
                }
                if c.noise_dim == 0 {
                    return bad("noise_dim must be >= 1".into());
                }
                let mut labels: Vec<&str> = c.runs.iter().map(|r| r.label.as_str()).collect();
                labels.sort();
                labels.dedup();
                if labels.len() != c.runs.len() {
                    return bad("run labels must be unique".into());
                }
                for r in &c.runs {
                    if r.label.is_empty()
                        || !r
                            .label
                            .chars()
                            .all(|ch| ch.is_ascii_alphanumeric() || "-_.".contains(ch))
                    {
                        return bad(format!("run label {:?} must be [A-Za-z0-9._-]+", r.label));
                    }
                    if r.method != Method::QpWgan && r.p != 1.0 {
                        return bad(format!("run {}: WGAN baselines use p = 1", r.label));
                    }
                    c.run_train(r)
                        .validate()
                        .map_err(|e| Error::Config(format!("run {}: {e}", r.label)))?;
                }
            }
            ExperimentConfig::PotentialGenerator(c) => {
                c.gmm.validate().map_err(|e| Error::Config(e.to_string()))?;
                c.train
                    .validate()
                    .map_err(|e| Error::Config(e.to_string()))?;
                if c.train.method != Method::QpWgan {
                    return bad("potential generator trains a qp-wgan critic".into());
                }
                if c.train.cost.q != 2.0 || c.train.cost.p <= 1.0 {
                    return bad(format!(
                        "transport map needs q = 2 and p > 1, got q = {}, p = {}",
                        c.train.cost.q, c.train.cost.p
                    ));
                }
            }
            ExperimentConfig::NnDistance(c) => {
                if !(c.bin_width > 0.0 && c.bin_width.is_finite()) {
                    return bad(format!("bin_width must be > 0, got {}", c.bin_width));
                }
                if !c.checkpoint.is_file() {
                    return bad(format!("checkpoint {} not found", c.checkpoint.display()));
                }
                if !c.training_data.is_file() {
                    return bad(format!(
                        "training data {} not found",
                        c.training_data.display()
                    ));
                }
            }
        }
        Ok(())
    }
}

impl ToyGmmConfig {
    /// Training settings of one run.
    pub fn run_train(&self, run: &RunSpec) -> TrainConfig {
        TrainConfig {
            cost: CostSpec {
                q: self.q,
                p: run.p,
            },
            method: run.method,
            seed: self.seed,
            ..self.train.clone()
        }
    }
}

/// Objects merge key by key; everything else is replaced.
fn merge(base: &mut Value, over: &Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (b, o) => *b = o.clone(),
    }
}

fn set(doc: &mut Value, path: &[&str], v: Value) -> Result<()> {
    let mut cur = doc;
    for key in &path[..path.len() - 1] {
        cur = cur
            .as_object_mut()
            .ok_or_else(|| Error::Config(format!("{key}: expected an object")))?
            .entry(key.to_string())
            .or_insert_with(|| Value::Object(Map::new()));
    }
    cur.as_object_mut()
        .ok_or_else(|| Error::Config("expected an object".into()))?
        .insert(path[path.len() - 1].to_string(), v);
    Ok(())
}

fn num(v: f64) -> Result<Value> {
    serde_json::Number::from_f64(v)
        .map(Value::Number)
        .ok_or_else(|| Error::Config(format!("non-finite flag value {v}")))
}

fn apply_flags(kind: ExperimentKind, doc: &mut Value, f: &Overrides) -> Result<()> {
    use ExperimentKind::*;
    let unsupported = |flag: &str| {
        Err(Error::Config(format!(
            "--{flag} does not apply to {}",
            kind.name()
        )))
    };
    if let Some(s) = f.seed {
        set(doc, &["seed"], Value::from(s))?;
    }
    if let Some(o) = &f.out {
        set(doc, &["out"], Value::from(o.to_string_lossy().into_owned()))?;
    }
    if let Some(p) = f.p {
        match kind {
            ToyDiscrete => set(doc, &["fit", "cost", "p"], num(p)?)?,
            PotentialGenerator => set(doc, &["train", "cost", "p"], num(p)?)?,
            ToyGmm => {
                let run = RunSpec {
                    label: format!("qp-wgan-p{p}"),
                    method: Method::QpWgan,
                    p,
                };
                set(doc, &["runs"], serde_json::to_value(vec![run])?)?
            }
            _ => return unsupported("p"),
        }
    }
    if let Some(q) = f.q {
        match kind {
            ToyDiscrete => set(doc, &["fit", "cost", "q"], num(q)?)?,
            PotentialGenerator => set(doc, &["train", "cost", "q"], num(q)?)?,
            ToyGmm => set(doc, &["q"], num(q)?)?,
            _ => return unsupported("q"),
        }
    }
    if let Some(it) = f.iterations {
        match kind {
            ToyDiscrete => set(doc, &["fit", "steps"], Value::from(it))?,
            ToyGmm | PotentialGenerator => set(doc, &["train", "iterations"], Value::from(it))?,
            _ => return unsupported("iterations"),
        }
    }
    if let Some(k) = f.k {
        match kind {
            ToyDiscrete => set(doc, &["fit", "k"], Value::from(k))?,
            _ => return unsupported("k"),
        }
    }
    if let Some(n) = f.n {
        match kind {
            NnDistance => set(doc, &["n"], Value::from(n))?,
            PotentialGenerator => set(doc, &["samples"], Value::from(n))?,
            _ => return unsupported("n"),
        }
    }
    if let Some(b) = f.bin_width {
        match kind {
            NnDistance => set(doc, &["bin_width"], num(b)?)?,
            _ => return unsupported("bin-width"),
        }
    }
    for (flag, key, val) in [
        ("checkpoint", "checkpoint", &f.checkpoint),
        ("training-data", "training_data", &f.training_data),
    ] {
        if let Some(v) = val {
            match kind {
                NnDistance => set(doc, &[key], Value::from(v.to_string_lossy().into_owned()))?,
                _ => return unsupported(flag),
            }
        }
    }
    if let Some(x) = f.perturb_duals {
        match kind {
            OracleCheck => set(doc, &["perturb_duals"], num(x)?)?,
            _ => return unsupported("perturb-duals"),
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    const ALL: [ExperimentKind; 5] = [
        ExperimentKind::OracleCheck,
        ExperimentKind::ToyDiscrete,
        ExperimentKind::ToyGmm,
        ExperimentKind::PotentialGenerator,
        ExperimentKind::NnDistance,
    ];

    #[test]
    fn presets_roundtrip() {
        for k in ALL {
            let p = ExperimentConfig::preset(k);
            let v = serde_json::to_value(&p).unwrap();
            assert_eq!(v["experiment"], k.name());
            let back: ExperimentConfig = serde_json::from_value(v).unwrap();
            assert_eq!(back, p);
        }
    }

    #[test]
    fn precedence_flag_over_file_over_preset() {
        let file = json!({"seed": 5, "fit": {"steps": 10, "cost": {"p": 1.0}}});
        let flags = Overrides {
            seed: Some(9),
            ..Default::default()
        };
        let c =
            ExperimentConfig::resolve(ExperimentKind::ToyDiscrete, Some(&file), &flags).unwrap();
        let ExperimentConfig::ToyDiscrete(c) = c else {
            panic!()
        };
        assert_eq!(c.seed, 9);
        assert_eq!(c.fit.steps, 10);
        assert_eq!(c.fit.cost, CostSpec { q: 2.0, p: 1.0 });
        assert_eq!(c.fit.k, 7);
    }

    #[test]
    fn schema_violations_rejected() {
        let k = ExperimentKind::ToyDiscrete;
        let none = Overrides::default();
        for bad in [
            json!({"unknown_key": 1}),
            json!({"fit": {"k": "seven"}}),
            json!({"fit": {"k": 0}}),
            json!({"experiment": "toy-gmm"}),
            json!([1, 2]),
        ] {
            let r = ExperimentConfig::resolve(k, Some(&bad), &none);
            assert!(matches!(r, Err(Error::Config(_))), "{bad}: {r:?}");
        }
        let p1 = Overrides {
            p: Some(1.0),
            ..Default::default()
        };
        assert!(ExperimentConfig::resolve(ExperimentKind::PotentialGenerator, None, &p1).is_err());
        assert!(ExperimentConfig::resolve(ExperimentKind::OracleCheck, None, &p1).is_err());
        let missing = Overrides {
            checkpoint: Some("/nonexistent/g.ckpt".into()),
            ..Default::default()
        };
        assert!(ExperimentConfig::resolve(ExperimentKind::NnDistance, None, &missing).is_err());
    }

    #[test]
    fn hash_ignores_key_order() {
        let a = json!({"seed": 3, "fit": {"steps": 10, "lr": 0.1}});
        let b = json!({"fit": {"lr": 0.1, "steps": 10}, "seed": 3});
        let none = Overrides::default();
        let k = ExperimentKind::ToyDiscrete;
        let ca = ExperimentConfig::resolve(k, Some(&a), &none).unwrap();
        let cb = ExperimentConfig::resolve(k, Some(&b), &none).unwrap();
        assert_eq!(
            super::super::config_hash(&ca).unwrap(),
            super::super::config_hash(&cb).unwrap()
        );
        let cc = ExperimentConfig::resolve(k, None, &none).unwrap();
        assert_ne!(
            super::super::config_hash(&ca).unwrap(),
            super::super::config_hash(&cc).unwrap()
        );
    }

    #[test]
    fn gmm_p_flag_replaces_runs() {
        let flags = Overrides {
            p: Some(2.0),
            ..Default::default()
        };
        let ExperimentConfig::ToyGmm(c) =
            ExperimentConfig::resolve(ExperimentKind::ToyGmm, None, &flags).unwrap()
        else {
            panic!()
        };
        assert_eq!(c.runs.len(), 1);
        assert_eq!(c.run_train(&c.runs[0]).cost, CostSpec { q: 2.0, p: 2.0 });
    }
}
