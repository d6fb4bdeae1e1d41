//! Moving source samples with the transport map induced by a trained
//! critic, with no generator network.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::PotentialGeneratorConfig;
use super::io::{create, write_text, Table};
use super::svg::{self, ScatterLayer};
use crate::autodiff::checkpoint::save_checkpoint;
use crate::autodiff::MlpNetwork;
use crate::error::Result;
use crate::measure::{empirical_measure, sample_gmm, CostSpec, Point};
use crate::ot::wasserstein_qp;
use crate::rng::SeededRng;
use crate::train::{
    potential_generator_experiment, DatasetSampler, PotentialConfig, PotentialOutcome, Sampler,
    SourceSampler, TrainConfig,
};

/// Distances reported in `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialSummary {
    /// W₂ between the raw source samples and the target samples.
    pub w2_source_target: f64,
    pub w2_mapped_target: f64,
    pub mean_displacement: f64,
}

/// Target samples of a config: the mixture data, or source draws in
/// control mode.
pub fn potential_target(c: &PotentialGeneratorConfig) -> Result<Vec<Point>> {
    let mut rng = SeededRng::new(c.seed).split(1);
    if c.control {
        let dim = c.gmm.dim();
        Ok(SourceSampler {
            kind: c.source,
            dim,
        }
        .sample(c.gmm.total_count(), &mut rng))
    } else {
        sample_gmm(&c.gmm, &mut rng)
    }
}

/// Trains the critic and maps `c.samples` source points.
pub fn potential_outcome(c: &PotentialGeneratorConfig) -> Result<(Vec<Point>, PotentialOutcome)> {
    let data = potential_target(c)?;
    let dim = c.gmm.dim();
    let critic = MlpNetwork::toy(dim, 1, &mut SeededRng::new(c.seed).split(5))?;
    let cfg = PotentialConfig {
        train: TrainConfig {
            seed: c.seed,
            ..c.train.clone()
        },
        samples: c.samples,
    };
    let source = SourceSampler {
        kind: c.source,
        dim,
    };
    // In control mode both sides draw fresh samples of the same law.
    let dataset = DatasetSampler {
        points: data.clone(),
    };
    let target: &dyn Sampler = if c.control { &source } else { &dataset };
    let outcome = potential_generator_experiment(&cfg, &source, target, critic)?;
    Ok((data, outcome))
}

fn w2(a: &[Point], b: &[Point]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Ok(f64::NAN);
    }
    wasserstein_qp(
        &empirical_measure(a.to_vec())?,
        &empirical_measure(b.to_vec())?,
        CostSpec { q: 2.0, p: 2.0 },
    )
}

fn summarize(data: &[Point], o: &PotentialOutcome) -> Result<PotentialSummary> {
    let shift: f64 = o
        .source
        .iter()
        .zip(&o.mapped)
        .map(|(a, b)| {
            a.coords()
                .iter()
                .zip(b.coords())
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt()
        })
        .sum();
    Ok(PotentialSummary {
        w2_source_target: w2(&o.source, data)?,
        w2_mapped_target: w2(&o.mapped, data)?,
        mean_displacement: if o.source.is_empty() {
            0.0
        } else {
            shift / o.source.len() as f64
        },
    })
}

pub(super) fn run(c: &PotentialGeneratorConfig, out: &Path) -> Result<Vec<String>> {
    let (data, outcome) = potential_outcome(c)?;

    let dim = c.gmm.dim();
    let header: Vec<String> = (0..dim).map(|i| format!("x{i}")).collect();
    let mut w = create(&out.join("samples.csv"))?;
    writeln!(w, "kind,{}", header.join(","))?;
    for (kind, pts) in [
        ("target", &data),
        ("source", &outcome.source),
        ("mapped", &outcome.mapped),
    ] {
        for p in pts.iter() {
            let row: Vec<String> = p.coords().iter().map(|v| v.to_string()).collect();
            writeln!(w, "{kind},{}", row.join(","))?;
        }
    }
    w.flush()?;

    let mut w = create(&out.join("trace.csv"))?;
    outcome.trace.write_csv(&mut w)?;
    w.flush()?;
    save_checkpoint(&outcome.critic, &out.join("critic.ckpt"))?;
    let summary = summarize(&data, &outcome)?;
    write_text(
        &out.join("summary.json"),
        &(serde_json::to_string_pretty(&summary)? + "\n"),
    )?;

    let mut files: Vec<String> = ["samples.csv", "trace.csv", "critic.ckpt", "summary.json"]
        .map(String::from)
        .into();
    if c.plot {
        plot(out)?;
        files.push("figure_potential.svg".into());
    }
    Ok(files)
}

fn plot(out: &Path) -> Result<()> {
    let t = Table::read(&out.join("samples.csv"))?;
    let (kind, x0) = (t.col("kind")?, t.col("x0")?);
    let x1 = t.col("x1").ok();
    let mut groups: [Vec<(f64, f64)>; 3] = Default::default();
    for r in 0..t.rows.len() {
        let p = (
            t.num(r, x0).unwrap_or(f64::NAN),
            x1.map_or(0.0, |c| t.num(r, c).unwrap_or(f64::NAN)),
        );
        let g = match t.rows[r][kind].as_str() {
            "target" => 0,
            "source" => 1,
            _ => 2,
        };
        groups[g].push(p);
    }
    let segments: Vec<_> = groups[1]
        .iter()
        .zip(&groups[2])
        .map(|(&a, &b)| (a, b, 0.2))
        .collect();
    let layer = |label: &str, color, points: &Vec<(f64, f64)>| ScatterLayer {
        label: label.into(),
        color,
        radius: 2.5,
        cross: false,
        points: points.clone(),
    };
    let panel = svg::scatter(
        "critic transport map",
        &[
            layer("data", svg::GREY, &groups[0]),
            layer("source", svg::BLUE, &groups[1]),
            layer("mapped", svg::RED, &groups[2]),
        ],
        &segments,
        &[],
    );
    write_text(&out.join("figure_potential.svg"), &panel)
}
