//! Points, discrete measures, l^q ground metrics and the toy samplers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SeededRng;

/// Tolerance on the total mass of a [`DiscreteMeasure`].
pub const MASS_TOLERANCE: f64 = 1e-12;

/// A point in R^n with finite coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Point(Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::Empty("point coordinates"));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "point has non-finite coordinates: {coords:?}"
            )));
        }
        Ok(Self(coords))
    }

    pub fn origin(dim: usize) -> Self {
        Self(vec![0.0; dim.max(1)])
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl TryFrom<Vec<f64>> for Point {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Point::new(v)
    }
}

impl From<Point> for Vec<f64> {
    fn from(p: Point) -> Self {
        p.0
    }
}

/// The pair `(q, p)`: ground metric `d_q` and cost `c = d_q^p / p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostSpec {
    pub q: f64,
    pub p: f64,
}

impl CostSpec {
    pub fn new(q: f64, p: f64) -> Result<Self> {
        if !(q >= 1.0 && q.is_finite()) {
            return Err(Error::InvalidParameter(format!("q must be >= 1, got {q}")));
        }
        if !(p >= 1.0 && p.is_finite()) {
            return Err(Error::InvalidParameter(format!("p must be >= 1, got {p}")));
        }
        Ok(Self { q, p })
    }

    pub fn validate(&self) -> Result<()> {
        Self::new(self.q, self.p).map(|_| ())
    }

    /// Cost of a given ground distance.
    pub fn cost_of_distance(&self, d: f64) -> f64 {
        powr(d, self.p) / self.p
    }

    /// Unchecked cost between two coordinate slices of equal length.
    pub(crate) fn cost_slices(&self, x: &[f64], y: &[f64]) -> f64 {
        self.cost_of_distance(lq_slices(x, y, self.q))
    }
}

// `powf` with exact shortcuts for the common integer exponents.
pub(crate) fn powr(x: f64, e: f64) -> f64 {
    if e == 1.0 {
        x
    } else if e == 2.0 {
        x * x
    } else {
        x.powf(e)
    }
}

pub(crate) fn lq_slices(x: &[f64], y: &[f64], q: f64) -> f64 {
    if q == 1.0 {
        x.iter().zip(y).map(|(a, b)| (a - b).abs()).sum()
    } else if q == 2.0 {
        x.iter()
            .zip(y)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    } else {
        x.iter()
            .zip(y)
            .map(|(a, b)| (a - b).abs().powf(q))
            .sum::<f64>()
            .powf(1.0 / q)
    }
}

/// l^q distance `(Σ |x_i − y_i|^q)^(1/q)`.
pub fn lq_distance(x: &Point, y: &Point, q: f64) -> Result<f64> {
    if x.dim() != y.dim() {
        return Err(Error::DimensionMismatch {
            expected: x.dim(),
            got: y.dim(),
        });
    }
    if !(q >= 1.0) {
        return Err(Error::InvalidParameter(format!("q must be >= 1, got {q}")));
    }
    Ok(lq_slices(x.coords(), y.coords(), q))
}

/// Transport cost `d_q(x, y)^p / p`.
pub fn cost(x: &Point, y: &Point, spec: CostSpec) -> Result<f64> {
    spec.validate()?;
    Ok(spec.cost_of_distance(lq_distance(x, y, spec.q)?))
}

/// Weighted point cloud whose weights sum to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteMeasure {
    atoms: Vec<Point>,
    weights: Vec<f64>,
}

impl DiscreteMeasure {
    pub fn new(atoms: Vec<Point>, weights: Vec<f64>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::Empty("measure atoms"));
        }
        if atoms.len() != weights.len() {
            return Err(Error::InvalidMeasure(format!(
                "{} atoms but {} weights",
                atoms.len(),
                weights.len()
            )));
        }
        let dim = atoms[0].dim();
        if let Some(bad) = atoms.iter().find(|a| a.dim() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: bad.dim(),
            });
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidMeasure(
                "weights must be finite and >= 0".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::InvalidMeasure(format!(
                "weights sum to {total}, expected 1"
            )));
        }
        Ok(Self { atoms, weights })
    }

    pub fn atoms(&self) -> &[Point] {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.atoms[0].dim()
    }

    /// True when every weight equals `1/len` exactly up to rounding.
    pub fn is_uniform(&self) -> bool {
        let w = 1.0 / self.len() as f64;
        self.weights.iter().all(|x| (x - w).abs() <= 1e-15)
    }

    /// Merges atoms with bitwise-equal coordinates, summing their weights.
    /// Atom order follows first occurrence.
    pub fn merged(&self) -> DiscreteMeasure {
        let mut atoms: Vec<Point> = Vec::new();
        let mut weights: Vec<f64> = Vec::new();
        for (a, w) in self.atoms.iter().zip(&self.weights) {
            match atoms.iter().position(|b| b == a) {
                Some(k) => weights[k] += w,
                None => {
                    atoms.push(a.clone());
                    weights.push(*w);
                }
            }
        }
        DiscreteMeasure { atoms, weights }
    }
}

/// Uniform measure over `points`; duplicates are kept as separate atoms.
pub fn empirical_measure(points: Vec<Point>) -> Result<DiscreteMeasure> {
    if points.is_empty() {
        return Err(Error::Empty("empirical measure points"));
    }
    let w = 1.0 / points.len() as f64;
    let n = points.len();
    let mut weights = vec![w; n];
    // Absorb rounding so the total is 1 within tolerance for any n.
    let drift = 1.0 - weights.iter().sum::<f64>();
    weights[n - 1] += drift;
    DiscreteMeasure::new(points, weights)
}

/// Covariance of one mixture component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Covariance {
    /// Per-axis variances.
    Diagonal(Vec<f64>),
    /// Full symmetric matrix, row major.
    Full(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GmmComponent {
    pub mean: Point,
    pub covariance: Covariance,
    pub count: usize,
}

/// Gaussian mixture with a fixed number of draws per component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GmmSpec {
    pub components: Vec<GmmComponent>,
}

impl GmmSpec {
    /// Three well-separated planar clusters of 60, 30 and 50 points.
    pub fn three_clusters() -> Self {
        let comp = |x: f64, y: f64, var: f64, count| GmmComponent {
            mean: Point(vec![x, y]),
            covariance: Covariance::Diagonal(vec![var, var]),
            count,
        };
        Self {
            components: vec![
                comp(-1.0, 0.0, 0.04, 60),
                comp(1.0, 0.0, 0.04, 30),
                comp(0.0, 1.5, 0.04, 50),
            ],
        }
    }

    pub fn total_count(&self) -> usize {
        self.components.iter().map(|c| c.count).sum()
    }

    pub fn dim(&self) -> usize {
        self.components.first().map_or(0, |c| c.mean.dim())
    }

    pub fn validate(&self) -> Result<()> {
        if self.components.is_empty() {
            return Err(Error::Empty("mixture components"));
        }
        let dim = self.dim();
        for (k, c) in self.components.iter().enumerate() {
            if c.mean.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: c.mean.dim(),
                });
            }
            if c.count == 0 {
                return Err(Error::InvalidParameter(format!(
                    "component {k} has count 0"
                )));
            }
            cholesky(&c.covariance, dim)
                .map_err(|e| Error::InvalidParameter(format!("component {k} covariance: {e}")))?;
        }
        Ok(())
    }
}

/// Lower-triangular Cholesky factor, row major.
fn cholesky(cov: &Covariance, dim: usize) -> Result<Vec<Vec<f64>>> {
    let full = match cov {
        Covariance::Diagonal(d) => {
            if d.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: d.len(),
                });
            }
            (0..dim)
                .map(|i| (0..dim).map(|j| if i == j { d[i] } else { 0.0 }).collect())
                .collect::<Vec<Vec<f64>>>()
        }
        Covariance::Full(m) => {
            if m.len() != dim || m.iter().any(|r| r.len() != dim) {
                return Err(Error::InvalidParameter(format!(
                    "covariance must be {dim}x{dim}"
                )));
            }
            for i in 0..dim {
                for j in 0..i {
                    if (m[i][j] - m[j][i]).abs() > 1e-12 * (1.0 + m[i][j].abs()) {
                        return Err(Error::InvalidParameter("covariance not symmetric".into()));
                    }
                }
            }
            m.clone()
        }
    };
    let mut l = vec![vec![0.0; dim]; dim];
    for i in 0..dim {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                let d = full[i][i] - s;
                if !(d > 0.0 && d.is_finite()) {
                    return Err(Error::InvalidParameter(
                        "covariance not positive definite".into(),
                    ));
                }
                l[i][j] = d.sqrt();
            } else {
                l[i][j] = (full[i][j] - s) / l[j][j];
            }
        }
    }
    Ok(l)
}

/// Draws `count` samples from each component in order.
pub fn sample_gmm(spec: &GmmSpec, rng: &mut SeededRng) -> Result<Vec<Point>> {
    spec.validate()?;
    let dim = spec.dim();
    let mut out = Vec::with_capacity(spec.total_count());
    for c in &spec.components {
        let l = cholesky(&c.covariance, dim)?;
        for _ in 0..c.count {
            let z: Vec<f64> = (0..dim).map(|_| rng.standard_normal()).collect();
            let coords = (0..dim)
                .map(|i| c.mean.coords()[i] + (0..=i).map(|k| l[i][k] * z[k]).sum::<f64>())
                .collect();
            out.push(Point(coords));
        }
    }
    Ok(out)
}

/// Source distribution for generators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SourceKind {
    /// Uniform on `[-1, 1]^dim`.
    UniformCube,
    /// Standard normal.
    Gaussian,
}

pub fn sample_source(kind: SourceKind, dim: usize, m: usize, rng: &mut SeededRng) -> Vec<Point> {
    let dim = dim.max(1);
    (0..m)
        .map(|_| {
            let coords = (0..dim)
                .map(|_| match kind {
                    SourceKind::UniformCube => rng.uniform(-1.0, 1.0),
                    SourceKind::Gaussian => rng.standard_normal(),
                })
                .collect();
            Point(coords)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pt(v: &[f64]) -> Point {
        Point::new(v.to_vec()).unwrap()
    }

    #[test]
    fn lq_examples() {
        let o = pt(&[0.0, 0.0]);
        let x = pt(&[3.0, 4.0]);
        assert_eq!(lq_distance(&o, &x, 2.0).unwrap(), 5.0);
        assert_eq!(lq_distance(&o, &x, 1.0).unwrap(), 7.0);
        assert_eq!(lq_distance(&x, &x, 3.7).unwrap(), 0.0);
    }

    #[test]
    fn lq_errors() {
        let a = pt(&[0.0]);
        let b = pt(&[0.0, 1.0]);
        assert!(matches!(
            lq_distance(&a, &b, 2.0),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(lq_distance(&a, &a, 0.5).is_err());
    }

    #[test]
    fn cost_examples() {
        let o = pt(&[0.0, 0.0]);
        let x = pt(&[3.0, 4.0]);
        assert_eq!(
            cost(&o, &x, CostSpec::new(2.0, 2.0).unwrap()).unwrap(),
            12.5
        );
        assert_eq!(cost(&o, &x, CostSpec::new(2.0, 1.0).unwrap()).unwrap(), 5.0);
        let c = cost(&o, &pt(&[1.0, 1.0]), CostSpec::new(1.0, 3.0).unwrap()).unwrap();
        assert!((c - 8.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn point_rejects_nan() {
        assert!(Point::new(vec![f64::NAN]).is_err());
        assert!(Point::new(vec![1.0, f64::INFINITY]).is_err());
        assert!(serde_json::from_str::<Point>("[]").is_err());
    }

    #[test]
    fn empirical_examples() {
        let a = pt(&[1.0]);
        let b = pt(&[2.0]);
        let m = empirical_measure(vec![a.clone()]).unwrap();
        assert_eq!(m.weights(), &[1.0]);
        let m = empirical_measure(vec![a.clone(), b]).unwrap();
        assert_eq!(m.weights(), &[0.5, 0.5]);
        let m = empirical_measure(vec![a.clone(), a]).unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m.merged().len(), 1);
        assert!(empirical_measure(vec![]).is_err());
    }

    #[test]
    fn measure_validation() {
        let a = pt(&[0.0]);
        assert!(DiscreteMeasure::new(vec![a.clone()], vec![0.9]).is_err());
        assert!(DiscreteMeasure::new(vec![a.clone()], vec![1.0, 0.0]).is_err());
        assert!(DiscreteMeasure::new(vec![a.clone(), a], vec![1.5, -0.5]).is_err());
    }

    #[test]
    fn gmm_counts_and_determinism() {
        let spec = GmmSpec::three_clusters();
        let a = sample_gmm(&spec, &mut SeededRng::new(11)).unwrap();
        let b = sample_gmm(&spec, &mut SeededRng::new(11)).unwrap();
        assert_eq!(a.len(), 140);
        assert_eq!(a, b);
    }

    #[test]
    fn gmm_tiny_covariance_concentrates() {
        let spec = GmmSpec {
            components: vec![GmmComponent {
                mean: pt(&[2.0, -1.0]),
                covariance: Covariance::Full(vec![vec![1e-12, 0.0], vec![0.0, 1e-12]]),
                count: 5,
            }],
        };
        let pts = sample_gmm(&spec, &mut SeededRng::new(0)).unwrap();
        assert_eq!(pts.len(), 5);
        for p in pts {
            assert!(lq_distance(&p, &spec.components[0].mean, 2.0).unwrap() < 1e-4);
        }
    }

    #[test]
    fn gmm_rejects_bad_covariance() {
        let mut spec = GmmSpec::three_clusters();
        spec.components[0].covariance = Covariance::Full(vec![vec![1.0, 2.0], vec![2.0, 1.0]]);
        assert!(spec.validate().is_err());
        spec.components[0].covariance = Covariance::Diagonal(vec![1.0, 0.0]);
        assert!(spec.validate().is_err());
    }

    #[test]
    fn gmm_full_covariance_moments() {
        let cov = vec![vec![1.0, 0.6], vec![0.6, 0.5]];
        let spec = GmmSpec {
            components: vec![GmmComponent {
                mean: pt(&[0.0, 0.0]),
                covariance: Covariance::Full(cov.clone()),
                count: 20000,
            }],
        };
        let pts = sample_gmm(&spec, &mut SeededRng::new(4)).unwrap();
        let n = pts.len() as f64;
        let sxy: f64 = pts
            .iter()
            .map(|p| p.coords()[0] * p.coords()[1])
            .sum::<f64>()
            / n;
        let syy: f64 = pts.iter().map(|p| p.coords()[1].powi(2)).sum::<f64>() / n;
        assert!((sxy - 0.6).abs() < 0.05);
        assert!((syy - 0.5).abs() < 0.05);
    }

    #[test]
    fn source_examples() {
        let g = sample_source(SourceKind::Gaussian, 2, 64, &mut SeededRng::new(1));
        assert_eq!(g.len(), 64);
        assert!(g.iter().all(|p| p.dim() == 2));
        let g2 = sample_source(SourceKind::Gaussian, 2, 64, &mut SeededRng::new(1));
        assert_eq!(g, g2);
        let u = sample_source(SourceKind::UniformCube, 1, 3, &mut SeededRng::new(1));
        assert_eq!(u.len(), 3);
        assert!(u.iter().all(|p| (-1.0..=1.0).contains(&p.coords()[0])));
    }

    fn vec3() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-10.0f64..10.0, 3)
    }

    proptest! {
        #[test]
        fn triangle_inequality(a in vec3(), b in vec3(), c in vec3(), q in 1.0f64..6.0) {
            let (a, b, c) = (pt(&a), pt(&b), pt(&c));
            let ab = lq_distance(&a, &b, q).unwrap();
            let bc = lq_distance(&b, &c, q).unwrap();
            let ac = lq_distance(&a, &c, q).unwrap();
            prop_assert!(ac <= ab + bc + 1e-12);
        }

        #[test]
        fn cost_symmetric(a in vec3(), b in vec3(), q in 1.0f64..6.0, p in 1.0f64..6.0) {
            let spec = CostSpec::new(q, p).unwrap();
            let (a, b) = (pt(&a), pt(&b));
            prop_assert_eq!(cost(&a, &b, spec).unwrap(), cost(&b, &a, spec).unwrap());
        }

        #[test]
        fn lq_monotone_in_q(a in vec3(), b in vec3(), q1 in 1.0f64..6.0, dq in 0.0f64..4.0) {
            let (a, b) = (pt(&a), pt(&b));
            let d1 = lq_distance(&a, &b, q1).unwrap();
            let d2 = lq_distance(&a, &b, q1 + dq).unwrap();
            prop_assert!(d2 <= d1 * (1.0 + 1e-12) + 1e-12);
        }

        #[test]
        fn empirical_is_valid(n in 1usize..300) {
            let pts = (0..n).map(|i| pt(&[i as f64])).collect();
            let m = empirical_measure(pts).unwrap();
            let total: f64 = m.weights().iter().sum();
            prop_assert!((total - 1.0).abs() <= MASS_TOLERANCE);
        }
    }
}
