//! Distances from generated samples to their closest training points.

use std::io::Write;
use std::path::Path;

use super::config::NnDistanceConfig;
use super::io::{create, read_points_csv, write_text, Table};
use super::svg;
use crate::autodiff::checkpoint::load_checkpoint;
use crate::autodiff::mlp::{points_to_tensor, tensor_to_points};
use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::train::{nearest_training_distance, Sampler, SourceSampler};

/// Bins of width `width` starting at zero and covering every distance.
pub fn bin_distances(distances: &[f64], width: f64) -> Vec<(f64, f64, usize)> {
    let Some(max) = distances.iter().copied().reduce(f64::max) else {
        return Vec::new();
    };
    let n = (max / width).floor() as usize + 1;
    let mut counts = vec![0usize; n];
    for &d in distances {
        counts[((d / width).floor() as usize).min(n - 1)] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(i, c)| (i as f64 * width, (i + 1) as f64 * width, c))
        .collect()
}

/// Nearest-training-point distances of `c.n` fresh generator samples.
pub fn generated_distances(c: &NnDistanceConfig) -> Result<Vec<f64>> {
    let generator = load_checkpoint(&c.checkpoint)?;
    let training = read_points_csv(&c.training_data)?;
    if training.is_empty() {
        return Err(Error::Empty("training data"));
    }
    if generator.output_dim() != training[0].dim() {
        return Err(Error::DimensionMismatch {
            expected: training[0].dim(),
            got: generator.output_dim(),
        });
    }
    if c.n == 0 {
        return Ok(Vec::new());
    }
    let source = SourceSampler {
        kind: c.source,
        dim: generator.input_dim(),
    };
    let noise = source.sample(c.n, &mut SeededRng::new(c.seed).split(1));
    let generated = tensor_to_points(&generator.eval(&points_to_tensor(&noise)?)?)?;
    nearest_training_distance(&generated, &training)
}

pub(super) fn run(c: &NnDistanceConfig, out: &Path) -> Result<Vec<String>> {
    let distances = generated_distances(c)?;
    let mut w = create(&out.join("distances.csv"))?;
    writeln!(w, "index,distance")?;
    for (i, d) in distances.iter().enumerate() {
        writeln!(w, "{i},{d}")?;
    }
    w.flush()?;
    let mut w = create(&out.join("histogram.csv"))?;
    writeln!(w, "bin_lo,bin_hi,count")?;
    for (lo, hi, n) in bin_distances(&distances, c.bin_width) {
        writeln!(w, "{lo},{hi},{n}")?;
    }
    w.flush()?;

    let mut files = vec!["distances.csv".to_string(), "histogram.csv".into()];
    if c.plot {
        let t = Table::read(&out.join("histogram.csv"))?;
        let bins: Vec<(f64, f64, usize)> = (0..t.rows.len())
            .filter_map(|r| Some((t.num(r, 0)?, t.num(r, 1)?, t.num(r, 2)? as usize)))
            .collect();
        write_text(
            &out.join("figure_histogram.svg"),
            &svg::histogram("distance to closest training point", "l2 distance", &bins),
        )?;
        files.push("figure_histogram.svg".into());
    }
    Ok(files)
}
