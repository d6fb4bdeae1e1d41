//! Generator training on the three-cluster mixture, one run per method.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use super::config::ToyGmmConfig;
use super::io::{create, write_points_csv, write_text, Table};
use super::svg::{self, LineSeries, ScatterLayer};
use crate::autodiff::checkpoint::save_checkpoint;
use crate::autodiff::mlp::{points_to_tensor, tensor_to_points};
use crate::autodiff::MlpNetwork;

// Run label with its (iteration, estimate) and (iteration, exact) series.
type Curve = (String, Vec<(f64, f64)>, Vec<(f64, f64)>);
use crate::error::{Error, Result};
use crate::measure::{sample_gmm, Point};
use crate::rng::SeededRng;
use crate::train::{
    train_observed, DatasetSampler, Sampler, SourceSampler, TrainTrace, TRACE_COLUMNS,
};

/// Stable stream id for a run label, so a run's initialization does not
/// depend on which other runs are configured.
fn label_stream(label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// The shared training set of a config.
pub fn gmm_dataset(c: &ToyGmmConfig) -> Result<Vec<Point>> {
    sample_gmm(&c.gmm, &mut SeededRng::new(c.seed).split(1))
}

fn csv_row(label: &str, iteration: usize, p: &Point) -> String {
    let mut s = format!("{label},{iteration}");
    for v in p.coords() {
        s.push(',');
        s.push_str(&v.to_string());
    }
    s
}

pub(super) fn run(c: &ToyGmmConfig, out: &Path) -> Result<Vec<String>> {
    let root = SeededRng::new(c.seed);
    let data = gmm_dataset(c)?;
    let dim = c.gmm.dim();
    write_points_csv(&out.join("data.csv"), &data)?;
    let target = DatasetSampler {
        points: data.clone(),
    };
    let source = SourceSampler {
        kind: c.source,
        dim: c.noise_dim,
    };
    let snapshot_noise = points_to_tensor(&source.sample(data.len(), &mut root.split(2)))?;

    let mut files = vec![
        "data.csv".to_string(),
        "trace.csv".into(),
        "samples.csv".into(),
    ];
    let coords: Vec<String> = (0..dim).map(|i| format!("x{i}")).collect();
    let mut trace_w = create(&out.join("trace.csv"))?;
    writeln!(trace_w, "run,{}", TRACE_COLUMNS.join(","))?;
    let mut samples_w = create(&out.join("samples.csv"))?;
    writeln!(samples_w, "run,iteration,{}", coords.join(","))?;

    for spec in &c.runs {
        let cfg = c.run_train(spec);
        let init = root.split(label_stream(&spec.label));
        let generator = MlpNetwork::toy(c.noise_dim, dim, &mut init.split(1))?;
        let critic = MlpNetwork::toy(dim, 1, &mut init.split(2))?;

        let mut snap = |iteration: usize, g: &MlpNetwork| -> Result<()> {
            for p in tensor_to_points(&g.eval(&snapshot_noise)?)? {
                writeln!(samples_w, "{}", csv_row(&spec.label, iteration, &p))?;
            }
            Ok(())
        };
        snap(0, &generator)?;
        let outcome = train_observed(
            &cfg,
            &target,
            &source,
            generator,
            critic,
            Some(&data),
            &mut |iter, g| {
                let done = iter + 1;
                if c.snapshots.contains(&done) && done != cfg.iterations {
                    snap(done, g)?;
                }
                Ok(())
            },
        )
        .map_err(|e| match e {
            Error::NonFinite { iteration, detail } => Error::NonFinite {
                iteration,
                detail: format!("run {}: {detail}", spec.label),
            },
            e => e,
        })?;
        snap(cfg.iterations, &outcome.generator)?;
        write_trace(&mut trace_w, &spec.label, &outcome.trace)?;

        let ckpt = format!("generator_{}.ckpt", spec.label);
        save_checkpoint(&outcome.generator, &out.join(&ckpt))?;
        files.push(ckpt);
    }
    trace_w.flush()?;
    samples_w.flush()?;
    drop((trace_w, samples_w));

    if c.plot {
        plot(out)?;
        files.push("figure_snapshots.svg".into());
        files.push("figure_curves.svg".into());
    }
    Ok(files)
}

fn write_trace(w: &mut impl Write, label: &str, trace: &TrainTrace) -> Result<()> {
    let mut buf = Vec::new();
    trace.write_csv(&mut buf)?;
    let text = String::from_utf8(buf).map_err(|e| Error::Io(e.to_string()))?;
    for line in text.lines().skip(1) {
        writeln!(w, "{label},{line}")?;
    }
    Ok(())
}

/// Snapshot and tracking figures, built from `data.csv`, `samples.csv` and
/// `trace.csv`.
fn plot(out: &Path) -> Result<()> {
    let data = Table::read(&out.join("data.csv"))?;
    let pair = |t: &Table, r: usize, a: usize, b: Option<usize>| {
        (
            t.num(r, a).unwrap_or(f64::NAN),
            b.map_or(0.0, |b| t.num(r, b).unwrap_or(f64::NAN)),
        )
    };
    let (dx0, dx1) = (data.col("x0")?, data.col("x1").ok());
    let data_pts: Vec<(f64, f64)> = (0..data.rows.len())
        .map(|r| pair(&data, r, dx0, dx1))
        .collect();

    let samples = Table::read(&out.join("samples.csv"))?;
    let (run, iter, sx0) = (
        samples.col("run")?,
        samples.col("iteration")?,
        samples.col("x0")?,
    );
    let sx1 = samples.col("x1").ok();
    // Keep the run order of the file.
    let mut order: Vec<String> = Vec::new();
    let mut snaps: BTreeMap<(usize, String), Vec<(f64, f64)>> = BTreeMap::new();
    let mut iters_of: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for r in 0..samples.rows.len() {
        let label = samples.rows[r][run].clone();
        if !order.contains(&label) {
            order.push(label.clone());
        }
        let it = samples.rows[r][iter].clone();
        let idx = order.iter().position(|l| *l == label).unwrap_or(0);
        let list = iters_of.entry(label.clone()).or_default();
        if !list.contains(&it) {
            list.push(it.clone());
        }
        snaps
            .entry((idx, it))
            .or_default()
            .push(pair(&samples, r, sx0, sx1));
    }
    let cols = iters_of.values().map(Vec::len).max().unwrap_or(1);
    let mut panels = Vec::new();
    for (idx, label) in order.iter().enumerate() {
        let its = &iters_of[label];
        for k in 0..cols {
            let Some(it) = its.get(k) else {
                panels.push(svg::scatter("", &[], &[], &[]));
                continue;
            };
            panels.push(svg::scatter(
                &format!("{label}, iteration {it}"),
                &[
                    ScatterLayer {
                        label: "data".into(),
                        color: svg::GREY,
                        radius: 2.5,
                        cross: false,
                        points: data_pts.clone(),
                    },
                    ScatterLayer {
                        label: "generated".into(),
                        color: svg::RED,
                        radius: 2.5,
                        cross: false,
                        points: snaps.get(&(idx, it.clone())).cloned().unwrap_or_default(),
                    },
                ],
                &[],
                &[],
            ));
        }
    }
    write_text(&out.join("figure_snapshots.svg"), &svg::grid(&panels, cols))?;

    let trace = Table::read(&out.join("trace.csv"))?;
    let (run, iter) = (trace.col("run")?, trace.col("iteration")?);
    let (dual, renorm, truth) = (
        trace.col("dual_estimate")?,
        trace.col("renormalized")?,
        trace.col("true_ot")?,
    );
    let mut curves: Vec<Curve> = Vec::new();
    for r in 0..trace.rows.len() {
        let label = &trace.rows[r][run];
        if curves.last().is_none_or(|c| c.0 != *label) {
            curves.push((label.clone(), Vec::new(), Vec::new()));
        }
        let c = curves.last_mut().expect("pushed above");
        let Some(x) = trace.num(r, iter) else {
            continue;
        };
        if let Some(y) = trace.num(r, renorm).or_else(|| trace.num(r, dual)) {
            c.1.push((x, y));
        }
        if let Some(y) = trace.num(r, truth) {
            c.2.push((x, y));
        }
    }
    let panels: Vec<String> = curves
        .into_iter()
        .map(|(label, est, truth)| {
            svg::lines(
                &label,
                "iteration",
                "transport cost",
                &[
                    LineSeries {
                        label: "dual estimate".into(),
                        color: svg::BLUE,
                        points: est,
                    },
                    LineSeries {
                        label: "exact OT".into(),
                        color: svg::RED,
                        points: truth,
                    },
                ],
                false,
            )
        })
        .collect();
    write_text(&out.join("figure_curves.svg"), &svg::grid(&panels, 2))
}
