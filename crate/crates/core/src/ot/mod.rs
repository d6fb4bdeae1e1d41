//! Exact optimal transport between discrete measures.
//!
//! [`ot_exact`] is the workhorse: a network simplex that returns the optimal
//! plan together with Kantorovich potentials. [`ot_bruteforce`] and
//! [`ot_1d_sorted`] are independent oracles for small or one-dimensional
//! instances.

mod simplex;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::{CostSpec, DiscreteMeasure};

/// Largest instance [`ot_bruteforce`] accepts.
pub const BRUTEFORCE_MAX_ATOMS: usize = 8;

/// Coupling matrix with the expected cost under it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportPlan {
    rows: usize,
    cols: usize,
    gamma: Vec<f64>,
    pub value: f64,
}

impl TransportPlan {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.gamma[i * self.cols + j]
    }

    /// Row-major entries.
    pub fn as_slice(&self) -> &[f64] {
        &self.gamma
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.gamma
            .chunks(self.cols)
            .map(|r| r.iter().sum())
            .collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        (0..self.cols)
            .map(|j| (0..self.rows).map(|i| self.get(i, j)).sum())
            .collect()
    }

    /// Entries above `threshold` as `(i, j, mass)`.
    pub fn support(&self, threshold: f64) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for i in 0..self.rows {
            for j in 0..self.cols {
                let g = self.get(i, j);
                if g > threshold {
                    out.push((i, j, g));
                }
            }
        }
        out
    }
}

/// Kantorovich potentials, `phi` on the source atoms and `psi` on the target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualPotentials {
    pub phi: Vec<f64>,
    pub psi: Vec<f64>,
}

impl DualPotentials {
    /// `Σ μ_i φ_i + Σ ν_j ψ_j`.
    pub fn value(&self, mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<f64> {
        if self.phi.len() != mu.len() || self.psi.len() != nu.len() {
            return Err(Error::DimensionMismatch {
                expected: mu.len() + nu.len(),
                got: self.phi.len() + self.psi.len(),
            });
        }
        Ok(dot(mu.weights(), &self.phi) + dot(nu.weights(), &self.psi))
    }

    /// Largest violation `max(φ_i + ψ_j − c_ij, 0)`.
    pub fn max_violation(&self, costs: &CostMatrix) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..costs.rows {
            for j in 0..costs.cols {
                worst = worst.max(self.phi[i] + self.psi[j] - costs.get(i, j));
            }
        }
        worst
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Dense `c(x_i, y_j)` matrix, row major.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl CostMatrix {
    pub fn between(mu: &DiscreteMeasure, nu: &DiscreteMeasure, spec: CostSpec) -> Result<Self> {
        spec.validate()?;
        if mu.dim() != nu.dim() {
            return Err(Error::DimensionMismatch {
                expected: mu.dim(),
                got: nu.dim(),
            });
        }
        let mut data = Vec::with_capacity(mu.len() * nu.len());
        for x in mu.atoms() {
            for y in nu.atoms() {
                data.push(spec.cost_slices(x.coords(), y.coords()));
            }
        }
        Ok(Self {
            rows: mu.len(),
            cols: nu.len(),
            data,
        })
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }
}

/// Exhaustive search over permutations for uniform measures of equal size.
pub fn ot_bruteforce(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    spec: CostSpec,
) -> Result<TransportPlan> {
    let m = mu.len();
    if m != nu.len() || m > BRUTEFORCE_MAX_ATOMS || !mu.is_uniform() || !nu.is_uniform() {
        return Err(Error::BruteForceLimit {
            max: BRUTEFORCE_MAX_ATOMS,
        });
    }
    let costs = CostMatrix::between(mu, nu, spec)?;
    let eval = |perm: &[usize]| -> f64 {
        perm.iter()
            .enumerate()
            .map(|(i, &j)| costs.get(i, j))
            .sum::<f64>()
    };

    // Heap's algorithm, iterative.
    let mut perm: Vec<usize> = (0..m).collect();
    let mut best = perm.clone();
    let mut best_sum = eval(&perm);
    let mut c = vec![0usize; m];
    let mut i = 0;
    while i < m {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            let s = eval(&perm);
            if s < best_sum {
                best_sum = s;
                best.clone_from(&perm);
            }
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }

    let w = 1.0 / m as f64;
    let mut gamma = vec![0.0; m * m];
    for (i, &j) in best.iter().enumerate() {
        gamma[i * m + j] = w;
    }
    Ok(TransportPlan {
        rows: m,
        cols: m,
        gamma,
        value: best_sum * w,
    })
}

/// Exact plan and potentials from an arbitrary cost matrix and marginals.
/// Potentials are normalized so that `phi[0] == 0`.
pub fn ot_exact_with_costs(
    a: &[f64],
    b: &[f64],
    costs: &CostMatrix,
) -> Result<(TransportPlan, DualPotentials)> {
    if costs.rows != a.len() || costs.cols != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len() * b.len(),
            got: costs.rows * costs.cols,
        });
    }
    let sol = simplex::solve(a, b, &costs.data)?;
    let value = sol.flow.iter().zip(&costs.data).map(|(g, c)| g * c).sum();
    Ok((
        TransportPlan {
            rows: a.len(),
            cols: b.len(),
            gamma: sol.flow,
            value,
        },
        DualPotentials {
            phi: sol.u,
            psi: sol.v,
        },
    ))
}

/// Exact optimal transport via network simplex.
pub fn ot_exact(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    spec: CostSpec,
) -> Result<(TransportPlan, DualPotentials)> {
    let costs = CostMatrix::between(mu, nu, spec)?;
    ot_exact_with_costs(mu.weights(), nu.weights(), &costs)
}

/// Sorted matching between two equal-length 1-D samples.
pub fn ot_1d_sorted(xs: &[f64], ys: &[f64], spec: CostSpec) -> Result<f64> {
    spec.validate()?;
    if xs.len() != ys.len() {
        return Err(Error::DimensionMismatch {
            expected: xs.len(),
            got: ys.len(),
        });
    }
    if xs.is_empty() {
        return Err(Error::Empty("1-D samples"));
    }
    let mut a = xs.to_vec();
    let mut b = ys.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let total: f64 = a
        .iter()
        .zip(&b)
        .map(|(x, y)| spec.cost_of_distance((x - y).abs()))
        .sum();
    Ok(total / a.len() as f64)
}

/// `W_{q,p} = OT_{d_q^p / p}^{1/p}`. Multiply by `p^{1/p}` for the
/// conventional Wasserstein metric without the `1/p` cost factor.
pub fn wasserstein_qp(mu: &DiscreteMeasure, nu: &DiscreteMeasure, spec: CostSpec) -> Result<f64> {
    let (plan, _) = ot_exact(mu, nu, spec)?;
    Ok(plan.value.max(0.0).powf(1.0 / spec.p))
}

/// Primal value minus dual value.
pub fn duality_gap(
    plan: &TransportPlan,
    duals: &DualPotentials,
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
) -> Result<f64> {
    if plan.rows != mu.len() || plan.cols != nu.len() {
        return Err(Error::DimensionMismatch {
            expected: mu.len() * nu.len(),
            got: plan.rows * plan.cols,
        });
    }
    Ok(plan.value - duals.value(mu, nu)?)
}
