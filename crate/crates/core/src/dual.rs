//! Dual machinery of the (q,p)-WGAN critic: the discrete c-transform over a
//! search space, the admissibility residual ξ, penalties and the dual
//! objective estimate.
//!
//! Tape variants take column vectors (`n x 1`) of potential values and
//! row-stacked point batches (`n x dim`). The c-transform min is
//! differentiated through its argmin; ties resolve to the first index.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::measure::{CostSpec, Point};

/// Which points the c-transform minimizes over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchMode {
    /// Target batch only.
    Bx,
    /// Target batch followed by the generated batch.
    BxUnionBy,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchSpace {
    pub mode: SearchMode,
    pub points: Vec<Point>,
}

impl SearchSpace {
    /// Resolves `B` for a batch; `B_x` always comes first.
    pub fn resolve(mode: SearchMode, bx: &[Point], by: &[Point]) -> Result<Self> {
        let mut points = bx.to_vec();
        if mode == SearchMode::BxUnionBy {
            points.extend_from_slice(by);
        }
        if points.is_empty() {
            return Err(Error::Empty("search space"));
        }
        Ok(Self { mode, points })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PenaltyWeights {
    pub lambda1: f64,
    pub lambda2: f64,
}

impl PenaltyWeights {
    pub const NONE: Self = Self {
        lambda1: 0.0,
        lambda2: 0.0,
    };

    pub fn new(lambda1: f64, lambda2: f64) -> Result<Self> {
        if !(lambda1 >= 0.0 && lambda2 >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "penalty weights must be >= 0, got ({lambda1}, {lambda2})"
            )));
        }
        Ok(Self { lambda1, lambda2 })
    }
}

/// Form of the admissibility penalty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum P2Form {
    /// `min(ξ, 0)²`: only violations are penalized.
    #[default]
    Violations,
    /// `ξ²` over every pair.
    Squared,
}

/// `min_{x ∈ B} c(x, y) − φ(x)` and the first minimizing index.
pub fn c_transform(
    phi_on_b: &[f64],
    b: &[Point],
    y: &Point,
    spec: CostSpec,
) -> Result<(f64, usize)> {
    if b.is_empty() {
        return Err(Error::Empty("c-transform search space"));
    }
    if phi_on_b.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: b.len(),
            got: phi_on_b.len(),
        });
    }
    spec.validate()?;
    let mut best = (f64::INFINITY, 0);
    for (k, (x, phi)) in b.iter().zip(phi_on_b).enumerate() {
        if x.dim() != y.dim() {
            return Err(Error::DimensionMismatch {
                expected: y.dim(),
                got: x.dim(),
            });
        }
        let v = spec.cost_slices(x.coords(), y.coords()) - phi;
        if v < best.0 {
            best = (v, k);
        }
    }
    Ok(best)
}

/// `ξ(x, y) = c(x, y) − φ(x) − ψ(y)`.
pub fn xi(x: &Point, y: &Point, phi_x: f64, psi_y: f64, spec: CostSpec) -> Result<f64> {
    Ok(crate::measure::cost(x, y, spec)? - phi_x - psi_y)
}

fn check_col(tape: &Tape, v: Var, rows: usize, what: &'static str) -> Result<()> {
    let (r, c) = tape.value(v).shape();
    if c != 1 || r != rows {
        return Err(Error::Autodiff(format!(
            "{what}: expected a {rows} x 1 column, got {r} x {c}"
        )));
    }
    Ok(())
}

/// c-transform of `phi_b` over the rows of `b`, evaluated at each row of
/// `y`. Returns a `rows(y) x 1` column and the argmin row of `b` per `y`.
pub fn c_transform_tape(
    tape: &mut Tape,
    phi_b: Var,
    b: Var,
    y: Var,
    spec: CostSpec,
) -> Result<(Var, Vec<usize>)> {
    let nb = tape.value(b).rows;
    if nb == 0 {
        return Err(Error::Empty("c-transform search space"));
    }
    check_col(tape, phi_b, nb, "c-transform potentials")?;
    let costs = tape.pairwise_cost(b, y, spec);
    let neg_phi = tape.neg(phi_b);
    let shifted = tape.add_col(costs, neg_phi);
    let (row, idx) = tape.col_min(shifted);
    Ok((tape.transpose(row), idx))
}

/// Matrix of `ξ(x_i, y_j)` with `x` along rows and `y` along columns.
pub fn xi_matrix(
    tape: &mut Tape,
    x: Var,
    y: Var,
    phi_x: Var,
    psi_y: Var,
    spec: CostSpec,
) -> Result<Var> {
    let (nx, ny) = (tape.value(x).rows, tape.value(y).rows);
    check_col(tape, phi_x, nx, "phi")?;
    check_col(tape, psi_y, ny, "psi")?;
    let c = tape.pairwise_cost(x, y, spec);
    let neg_phi = tape.neg(phi_x);
    let c = tape.add_col(c, neg_phi);
    let psi_row = tape.transpose(psi_y);
    let neg_psi = tape.neg(psi_row);
    Ok(tape.add_row(c, neg_psi))
}

/// `λ₁ · (1/m²) Σ_{i,j} ξ(x_i, y_j)²`.
pub fn penalty_p1(
    tape: &mut Tape,
    bx: Var,
    by: Var,
    phi_x: Var,
    psi_y: Var,
    lambda1: f64,
    spec: CostSpec,
) -> Result<Var> {
    let (m, my) = (tape.value(bx).rows, tape.value(by).rows);
    if m != my {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: my,
        });
    }
    let xi = xi_matrix(tape, bx, by, phi_x, psi_y, spec)?;
    let sq = tape.square(xi);
    let s = tape.sum(sq);
    Ok(tape.scale(s, lambda1 / (m * m) as f64))
}

/// `λ₂ · (1/(4m²)) Σ_{x,y ∈ B_x ∪ B_y} min(ξ(x, y), 0)²`, or plain `ξ²`
/// with [`P2Form::Squared`]. `union` holds the `2m` points.
pub fn penalty_p2(
    tape: &mut Tape,
    union: Var,
    phi_u: Var,
    psi_u: Var,
    lambda2: f64,
    form: P2Form,
    spec: CostSpec,
) -> Result<Var> {
    let n = tape.value(union).rows;
    if n == 0 || !n.is_multiple_of(2) {
        return Err(Error::InvalidParameter(format!(
            "union of two equal batches expected, got {n} points"
        )));
    }
    let xi = xi_matrix(tape, union, union, phi_u, psi_u, spec)?;
    let r = match form {
        P2Form::Violations => tape.min_zero(xi),
        P2Form::Squared => xi,
    };
    let sq = tape.square(r);
    let s = tape.sum(sq);
    Ok(tape.scale(s, lambda2 / (n * n) as f64))
}

/// `(1/m) Σ_i (φ(x_i) + ψ(y_i))`.
pub fn dual_estimate(tape: &mut Tape, phi_x: Var, psi_y: Var) -> Result<Var> {
    let m = tape.value(phi_x).rows;
    check_col(tape, phi_x, m, "phi")?;
    check_col(tape, psi_y, m, "psi")?;
    let s = tape.add(phi_x, psi_y);
    Ok(tape.mean(s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::mlp::points_to_tensor;
    use crate::autodiff::Tensor;
    use crate::rng::SeededRng;
    use proptest::prelude::*;

    fn p(v: &[f64]) -> Point {
        Point::new(v.to_vec()).unwrap()
    }

    fn spec(q: f64, pp: f64) -> CostSpec {
        CostSpec::new(q, pp).unwrap()
    }

    fn col(tape: &mut Tape, v: &[f64]) -> Var {
        tape.leaf(Tensor::from_vec(v.len(), 1, v.to_vec()))
    }

    #[test]
    fn c_transform_examples() {
        let s = spec(2.0, 2.0);
        let (v, i) = c_transform(&[0.7], &[p(&[1.0, 1.0])], &p(&[0.0, 0.0]), s).unwrap();
        assert!((v - (1.0 - 0.7)).abs() < 1e-15);
        assert_eq!(i, 0);

        let b = vec![p(&[0.0, 0.0]), p(&[3.0, 1.0]), p(&[-1.0, 2.0])];
        let (v, i) = c_transform(&[0.0; 3], &b, &b[1], s).unwrap();
        assert_eq!((v, i), (0.0, 1));

        let b = vec![p(&[0.0]), p(&[2.0])];
        let (v, i) = c_transform(&[0.0, 0.0], &b, &p(&[1.0]), spec(1.0, 1.0)).unwrap();
        assert_eq!((v, i), (1.0, 0));
    }

    #[test]
    fn c_transform_errors() {
        let s = spec(2.0, 1.0);
        assert!(c_transform(&[], &[], &p(&[0.0]), s).is_err());
        assert!(c_transform(&[0.0, 1.0], &[p(&[0.0])], &p(&[0.0]), s).is_err());
    }

    #[test]
    fn xi_examples() {
        let s = spec(2.0, 1.0);
        let (x, y) = (p(&[0.0, 0.0]), p(&[3.0, 4.0]));
        assert_eq!(xi(&x, &y, 2.0, 1.0, s).unwrap(), 2.0);
        assert_eq!(xi(&x, &y, 0.0, 0.0, s).unwrap(), 5.0);
    }

    #[test]
    fn p1_examples() {
        let s = spec(2.0, 1.0);
        let mut tape = Tape::new();
        let bx = tape.leaf(Tensor::from_rows(&[vec![0.0, 0.0]]));
        let by = tape.leaf(Tensor::from_rows(&[vec![3.0, 4.0]]));
        // c = 5, φ = 2, ψ = 1 → ξ = 2.
        let phi = col(&mut tape, &[2.0]);
        let psi = col(&mut tape, &[1.0]);
        let p1 = penalty_p1(&mut tape, bx, by, phi, psi, 0.1, s).unwrap();
        assert!((tape.scalar(p1) - 0.4).abs() < 1e-15);
        let p1 = penalty_p1(&mut tape, bx, by, phi, psi, 0.0, s).unwrap();
        assert_eq!(tape.scalar(p1), 0.0);
        let psi_tight = col(&mut tape, &[3.0]);
        let p1 = penalty_p1(&mut tape, bx, by, phi, psi_tight, 0.1, s).unwrap();
        assert_eq!(tape.scalar(p1), 0.0);

        let by2 = tape.leaf(Tensor::from_rows(&[vec![3.0, 4.0], vec![1.0, 1.0]]));
        assert!(penalty_p1(&mut tape, bx, by2, phi, psi, 0.1, s).is_err());
    }

    #[test]
    fn p2_examples() {
        // 1-D union {0, 1} with c = |x − y|. φ = (1, −1), ψ = (−1, 1) gives
        // ξ = [[0, −1], [3, 0]]: a single violation of size 1.
        let s = spec(1.0, 1.0);
        let mut tape = Tape::new();
        let u = tape.leaf(Tensor::from_rows(&[vec![0.0], vec![1.0]]));
        let phi = col(&mut tape, &[1.0, -1.0]);
        let psi = col(&mut tape, &[-1.0, 1.0]);
        let p2 = penalty_p2(&mut tape, u, phi, psi, 10.0, P2Form::Violations, s).unwrap();
        assert!((tape.scalar(p2) - 2.5).abs() < 1e-15);
        let sq = penalty_p2(&mut tape, u, phi, psi, 10.0, P2Form::Squared, s).unwrap();
        assert!((tape.scalar(sq) - 25.0).abs() < 1e-14);

        let zero = col_zero(&mut tape, 2);
        let p2 = penalty_p2(&mut tape, u, zero, zero, 10.0, P2Form::Violations, s).unwrap();
        assert_eq!(tape.scalar(p2), 0.0);

        let odd = tape.leaf(Tensor::from_rows(&[vec![0.0]]));
        let one = col_zero(&mut tape, 1);
        assert!(penalty_p2(&mut tape, odd, one, one, 1.0, P2Form::Violations, s).is_err());
    }

    fn col_zero(tape: &mut Tape, n: usize) -> Var {
        tape.leaf(Tensor::zeros(n, 1))
    }

    #[test]
    fn p2_vanishes_for_c_transform_over_union() {
        let s = spec(2.0, 2.0);
        let mut rng = SeededRng::new(4);
        let pts: Vec<Point> = (0..6)
            .map(|_| p(&[rng.standard_normal(), rng.standard_normal()]))
            .collect();
        let mut tape = Tape::new();
        let u = tape.leaf(points_to_tensor(&pts).unwrap());
        let phi: Vec<f64> = (0..6).map(|_| rng.standard_normal()).collect();
        let phi = col(&mut tape, &phi);
        let (psi, _) = c_transform_tape(&mut tape, phi, u, u, s).unwrap();
        let p2 = penalty_p2(&mut tape, u, phi, psi, 10.0, P2Form::Violations, s).unwrap();
        assert_eq!(tape.scalar(p2), 0.0);
    }

    #[test]
    fn dual_estimate_examples() {
        let s = spec(2.0, 1.0);
        let bx = vec![p(&[0.0, 0.0]), p(&[1.0, 0.0])];
        let mut tape = Tape::new();
        let b = tape.leaf(points_to_tensor(&bx).unwrap());
        let phi = col_zero(&mut tape, 2);
        let (psi, _) = c_transform_tape(&mut tape, phi, b, b, s).unwrap();
        let d = dual_estimate(&mut tape, phi, psi).unwrap();
        assert_eq!(tape.scalar(d), 0.0);

        let short = col_zero(&mut tape, 3);
        assert!(dual_estimate(&mut tape, phi, short).is_err());
    }

    #[test]
    fn tape_c_transform_matches_scalar_version() {
        let s = spec(1.2, 1.2);
        let mut rng = SeededRng::new(10);
        let b: Vec<Point> = (0..5)
            .map(|_| p(&[rng.standard_normal(), rng.standard_normal()]))
            .collect();
        let ys: Vec<Point> = (0..4)
            .map(|_| p(&[rng.standard_normal(), rng.standard_normal()]))
            .collect();
        let phi: Vec<f64> = (0..5).map(|_| rng.standard_normal()).collect();
        let mut tape = Tape::new();
        let bv = tape.leaf(points_to_tensor(&b).unwrap());
        let yv = tape.leaf(points_to_tensor(&ys).unwrap());
        let pv = col(&mut tape, &phi);
        let (psi, idx) = c_transform_tape(&mut tape, pv, bv, yv, s).unwrap();
        for (j, y) in ys.iter().enumerate() {
            let (v, i) = c_transform(&phi, &b, y, s).unwrap();
            assert_eq!(i, idx[j]);
            assert!((v - tape.value(psi).data[j]).abs() < 1e-12);
        }
    }

    fn arb_instance() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<f64>, f64, f64)> {
        (2usize..8).prop_flat_map(|n| {
            (
                prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 2), n),
                prop::collection::vec(-2.0f64..2.0, n),
                prop::sample::select(vec![1.0, 1.2, 2.0, 5.0]),
                prop::sample::select(vec![1.0, 1.2, 2.0, 5.0]),
            )
        })
    }

    proptest! {
        #[test]
        fn double_transform_properties((pts, phi, q, pp) in arb_instance()) {
            let s = spec(q, pp);
            let b: Vec<Point> = pts.iter().map(|c| p(c)).collect();
            let psi: Vec<f64> = b.iter().map(|y| c_transform(&phi, &b, y, s).unwrap().0).collect();
            let chi: Vec<f64> = b.iter().map(|x| c_transform(&psi, &b, x, s).unwrap().0).collect();
            let psi2: Vec<f64> = b.iter().map(|y| c_transform(&chi, &b, y, s).unwrap().0).collect();
            for k in 0..b.len() {
                prop_assert!(chi[k] >= phi[k] - 1e-12);
                prop_assert!((psi2[k] - psi[k]).abs() <= 1e-12);
            }
            for (i, x) in b.iter().enumerate() {
                for (j, y) in b.iter().enumerate() {
                    prop_assert!(xi(x, y, phi[i], psi[j], s).unwrap() >= -1e-12);
                }
            }
        }

        #[test]
        fn tie_break_is_deterministic((pts, phi, q, pp) in arb_instance()) {
            let s = spec(q, pp);
            let b: Vec<Point> = pts.iter().map(|c| p(c)).collect();
            for y in &b {
                prop_assert_eq!(c_transform(&phi, &b, y, s).unwrap(), c_transform(&phi, &b, y, s).unwrap());
            }
        }
    }
}
