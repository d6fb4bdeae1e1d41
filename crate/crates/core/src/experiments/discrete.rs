//! Fitting a few free atoms to a fixed discrete target.

use std::io::Write;
use std::path::Path;

use super::config::ToyDiscreteConfig;
use super::io::{create, write_text, Table};
use super::svg::{self, LineSeries, ScatterLayer};
use crate::error::{Error, Result};
use crate::measure::{empirical_measure, Point};
use crate::rng::SeededRng;
use crate::train::{fit_discrete_support, FitConfig, FitResult};

/// The configured target, or `target_atoms` seeded points in the unit
/// square.
pub fn discrete_target(c: &ToyDiscreteConfig) -> Result<Vec<Point>> {
    if let Some(t) = &c.target {
        return Ok(t.clone());
    }
    let mut rng = SeededRng::new(c.seed).split(1);
    (0..c.target_atoms)
        .map(|_| Point::new(vec![rng.uniform(0.0, 1.0), rng.uniform(0.0, 1.0)]))
        .collect()
}

fn coords_csv(p: &Point) -> String {
    p.coords()
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn write_outputs(out: &Path, target: &[Point], fit: &FitResult) -> Result<()> {
    let dim = target[0].dim();
    let header: Vec<String> = (0..dim).map(|i| format!("x{i}")).collect();
    let header = header.join(",");

    let mut w = create(&out.join("trace.csv"))?;
    fit.write_csv(&mut w)?;
    w.flush()?;

    let mut w = create(&out.join("samples.csv"))?;
    writeln!(w, "kind,index,{header}")?;
    for (i, p) in target.iter().enumerate() {
        writeln!(w, "target,{i},{}", coords_csv(p))?;
    }
    for (i, p) in fit.model.atoms().iter().enumerate() {
        writeln!(w, "model,{i},{}", coords_csv(p))?;
    }
    w.flush()?;

    let mut w = create(&out.join("trails.csv"))?;
    writeln!(w, "step,atom,{header}")?;
    for (step, snap) in fit.trails.iter().enumerate() {
        for (a, p) in snap.iter().enumerate() {
            writeln!(w, "{step},{a},{}", coords_csv(p))?;
        }
    }
    w.flush()?;

    let mut w = create(&out.join("plan.csv"))?;
    writeln!(w, "model,target,mass")?;
    for (i, j, m) in fit.plan.support(0.0) {
        writeln!(w, "{i},{j},{m}")?;
    }
    w.flush()?;
    Ok(())
}

fn xy(t: &Table, row: usize, x0: usize, x1: Option<usize>) -> (f64, f64) {
    let x = t.num(row, x0).unwrap_or(f64::NAN);
    let y = x1.map_or(0.0, |c| t.num(row, c).unwrap_or(f64::NAN));
    (x, y)
}

/// Builds the four-panel figure from the CSV files in `out`.
fn plot(out: &Path) -> Result<()> {
    let samples = Table::read(&out.join("samples.csv"))?;
    let (kind, x0) = (samples.col("kind")?, samples.col("x0")?);
    let x1 = samples.col("x1").ok();
    let mut target = Vec::new();
    let mut model = Vec::new();
    for r in 0..samples.rows.len() {
        let p = xy(&samples, r, x0, x1);
        match samples.rows[r][kind].as_str() {
            "target" => target.push(p),
            _ => model.push(p),
        }
    }

    let trails_t = Table::read(&out.join("trails.csv"))?;
    let (atom, tx0) = (trails_t.col("atom")?, trails_t.col("x0")?);
    let tx1 = trails_t.col("x1").ok();
    let mut trails = vec![Vec::new(); model.len()];
    for r in 0..trails_t.rows.len() {
        let a: usize = trails_t.rows[r][atom]
            .parse()
            .map_err(|_| Error::Io("trails.csv: bad atom index".into()))?;
        if let Some(t) = trails.get_mut(a) {
            t.push(xy(&trails_t, r, tx0, tx1));
        }
    }

    let plan = Table::read(&out.join("plan.csv"))?;
    let mut segments = Vec::new();
    let max_mass = (0..plan.rows.len())
        .filter_map(|r| plan.num(r, 2))
        .fold(0.0, f64::max);
    for r in 0..plan.rows.len() {
        let (Some(i), Some(j), Some(m)) = (plan.num(r, 0), plan.num(r, 1), plan.num(r, 2)) else {
            continue;
        };
        if let (Some(&a), Some(&b)) = (model.get(i as usize), target.get(j as usize)) {
            segments.push((a, b, 0.15 + 0.85 * m / max_mass.max(f64::MIN_POSITIVE)));
        }
    }

    let layer = |label: &str, color, radius, cross, points: &Vec<(f64, f64)>| ScatterLayer {
        label: label.into(),
        color,
        radius,
        cross,
        points: points.clone(),
    };
    let origin = vec![(0.0, 0.0)];
    let atoms_panel = svg::scatter(
        "support trails",
        &[
            layer("target", svg::BLUE, 4.0, false, &target),
            layer("model", svg::RED, 4.0, false, &model),
            layer("origin", svg::GREY, 5.0, true, &origin),
        ],
        &[],
        &trails,
    );
    let plan_panel = svg::scatter(
        "optimal plan",
        &[
            layer("target", svg::BLUE, 4.0, false, &target),
            layer("model", svg::RED, 4.0, false, &model),
        ],
        &segments,
        &[],
    );

    let trace = Table::read(&out.join("trace.csv"))?;
    let (step, value, gn) = (
        trace.col("step")?,
        trace.col("value")?,
        trace.col("grad_norm")?,
    );
    let series = |col: usize, label: &str, color| LineSeries {
        label: label.into(),
        color,
        points: (0..trace.rows.len())
            .filter_map(|r| Some((trace.num(r, step)?, trace.num(r, col)?)))
            .collect(),
    };
    let value_panel = svg::lines(
        "transport cost",
        "step",
        "W_p^p",
        &[series(value, "value", svg::BLUE)],
        true,
    );
    let grad_panel = svg::lines(
        "gradient norm",
        "step",
        "norm",
        &[series(gn, "gradient", svg::ORANGE)],
        true,
    );
    write_text(
        &out.join("figure_discrete.svg"),
        &svg::grid(&[atoms_panel, plan_panel, value_panel, grad_panel], 2),
    )
}

pub(super) fn run(c: &ToyDiscreteConfig, out: &Path) -> Result<Vec<String>> {
    let target = discrete_target(c)?;
    let measure = empirical_measure(target.clone())?;
    let fit = fit_discrete_support(
        &measure,
        &FitConfig {
            seed: c.seed,
            ..c.fit.clone()
        },
    )?;
    write_outputs(out, &target, &fit)?;
    let mut files: Vec<String> = ["trace.csv", "samples.csv", "trails.csv", "plan.csv"]
        .map(String::from)
        .into();
    if c.plot {
        plot(out)?;
        files.push("figure_discrete.svg".into());
    }
    Ok(files)
}
