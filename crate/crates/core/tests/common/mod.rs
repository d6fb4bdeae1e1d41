//! Reference implementations that share no code with the library solvers.

#![allow(dead_code)]

use qpwgan::rng::SeededRng;

/// Minimum-cost perfect assignment on a square matrix (Hungarian method with
/// row and column potentials). Returns `(cost, assignment)` where
/// `assignment[i]` is the column of row `i`.
pub fn hungarian(cost: &[Vec<f64>]) -> (f64, Vec<usize>) {
    let n = cost.len();
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=n {
        assignment[p[j] - 1] = j - 1;
    }
    let total = (0..n).map(|i| cost[i][assignment[i]]).sum();
    (total, assignment)
}

/// Brute-force assignment over all permutations, for cross-checking
/// [`hungarian`] on small inputs.
pub fn assignment_bruteforce(cost: &[Vec<f64>]) -> f64 {
    fn rec(cost: &[Vec<f64>], row: usize, used: &mut Vec<bool>, acc: f64, best: &mut f64) {
        if row == cost.len() {
            *best = best.min(acc);
            return;
        }
        for j in 0..cost.len() {
            if !used[j] {
                used[j] = true;
                rec(cost, row + 1, used, acc + cost[row][j], best);
                used[j] = false;
            }
        }
    }
    let mut best = f64::INFINITY;
    rec(cost, 0, &mut vec![false; cost.len()], 0.0, &mut best);
    best
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn half_sq(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>()
}

/// Lloyd's algorithm where every center carries mass `1/k` and every data
/// point mass `1/n`: both sides are replicated to a common count, the
/// assignment step is a balanced matching and the update step moves each
/// center to the mean of its copies. Returns the best objective
/// `Σ mass · ½‖x − c‖²` over `restarts` random initializations.
pub fn balanced_lloyd(data: &[Vec<f64>], k: usize, restarts: usize, seed: u64) -> f64 {
    let n = data.len();
    let l = n / gcd(n, k) * k;
    let (copies_x, copies_c) = (l / n, l / k);
    let dim = data[0].len();
    let mut rng = SeededRng::new(seed);
    let mut best = f64::INFINITY;
    for _ in 0..restarts {
        // Forgy-style start: distinct random data points, slightly perturbed.
        let mut idx: Vec<usize> = (0..n).collect();
        for i in 0..k.min(n) {
            let j = i + rng.index(n - i);
            idx.swap(i, j);
        }
        let mut centers: Vec<Vec<f64>> = (0..k)
            .map(|c| {
                data[idx[c % n]]
                    .iter()
                    .map(|v| v + 1e-3 * rng.standard_normal())
                    .collect()
            })
            .collect();
        let mut prev = f64::INFINITY;
        for _ in 0..200 {
            let cost: Vec<Vec<f64>> = (0..l)
                .map(|r| {
                    let x = &data[r / copies_x];
                    (0..l).map(|s| half_sq(x, &centers[s / copies_c])).collect()
                })
                .collect();
            let (total, assign) = hungarian(&cost);
            let obj = total / l as f64;
            let mut sums = vec![vec![0.0; dim]; k];
            for (r, &s) in assign.iter().enumerate() {
                for (acc, v) in sums[s / copies_c].iter_mut().zip(&data[r / copies_x]) {
                    *acc += v;
                }
            }
            for (c, s) in centers.iter_mut().zip(&sums) {
                for (cv, sv) in c.iter_mut().zip(s) {
                    *cv = sv / copies_c as f64;
                }
            }
            if prev - obj <= 1e-14 {
                break;
            }
            prev = obj;
        }
        // Objective of the final centers.
        let cost: Vec<Vec<f64>> = (0..l)
            .map(|r| {
                let x = &data[r / copies_x];
                (0..l).map(|s| half_sq(x, &centers[s / copies_c])).collect()
            })
            .collect();
        best = best.min(hungarian(&cost).0 / l as f64);
    }
    best
}
