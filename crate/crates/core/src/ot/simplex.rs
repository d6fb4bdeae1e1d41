//! Network simplex on the bipartite transportation polytope.
//!
//! Nodes `0..m` are sources (rows) and `m..m+n` are sinks (columns). A basis
//! is a spanning tree with exactly `m + n - 1` arcs; degenerate zero-flow
//! arcs stay in the tree so it is always connected. Entering arcs are chosen
//! by block pricing over the row-major arc list, and node potentials are
//! recomputed from the root after every pivot so they never drift.

use crate::error::{Error, Result};

pub(crate) struct Solution {
    /// Row-major `m x n` flows.
    pub flow: Vec<f64>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

#[derive(Clone, Copy)]
struct Arc {
    row: usize,
    col: usize,
    flow: f64,
}

struct Tree {
    m: usize,
    n: usize,
    arcs: Vec<Arc>,
    // Arc ids incident to each node.
    adj: Vec<Vec<usize>>,
    parent_arc: Vec<usize>,
    parent: Vec<usize>,
    depth: Vec<usize>,
    pot: Vec<f64>,
}

const NONE: usize = usize::MAX;

impl Tree {
    fn col_node(&self, j: usize) -> usize {
        self.m + j
    }

    fn add_arc(&mut self, row: usize, col: usize, flow: f64) {
        let id = self.arcs.len();
        self.arcs.push(Arc { row, col, flow });
        self.adj[row].push(id);
        let c = self.col_node(col);
        self.adj[c].push(id);
    }

    fn replace_arc(&mut self, id: usize, row: usize, col: usize, flow: f64) {
        let old = self.arcs[id];
        let oc = self.col_node(old.col);
        self.adj[old.row].retain(|&a| a != id);
        self.adj[oc].retain(|&a| a != id);
        self.arcs[id] = Arc { row, col, flow };
        self.adj[row].push(id);
        let c = self.col_node(col);
        self.adj[c].push(id);
    }

    /// Rebuilds parent pointers, depths and potentials with `u_0 = 0`.
    fn relabel(&mut self, cost: &[f64]) {
        let total = self.m + self.n;
        self.parent.iter_mut().for_each(|p| *p = NONE);
        self.parent_arc.iter_mut().for_each(|p| *p = NONE);
        let mut stack = vec![0usize];
        self.parent[0] = 0;
        self.depth[0] = 0;
        self.pot[0] = 0.0;
        let mut seen = 1;
        while let Some(node) = stack.pop() {
            for k in 0..self.adj[node].len() {
                let id = self.adj[node][k];
                if id == self.parent_arc[node] {
                    continue;
                }
                let a = self.arcs[id];
                let c = cost[a.row * self.n + a.col];
                let other = if node < self.m {
                    self.col_node(a.col)
                } else {
                    a.row
                };
                self.parent[other] = node;
                self.parent_arc[other] = id;
                self.depth[other] = self.depth[node] + 1;
                // u_row + v_col = c on every tree arc.
                self.pot[other] = c - self.pot[node];
                stack.push(other);
                seen += 1;
            }
        }
        debug_assert_eq!(seen, total, "basis is not a spanning tree");
    }
}

/// Solves `min <C, γ>` subject to `γ 1 = a`, `γᵀ 1 = b`, `γ ≥ 0`.
pub(crate) fn solve(a: &[f64], b: &[f64], cost: &[f64]) -> Result<Solution> {
    let m = a.len();
    let n = b.len();
    if m == 0 || n == 0 {
        return Err(Error::Empty("transport marginals"));
    }
    if cost.len() != m * n {
        return Err(Error::DimensionMismatch {
            expected: m * n,
            got: cost.len(),
        });
    }
    let sa: f64 = a.iter().sum();
    let sb: f64 = b.iter().sum();
    if (sa - sb).abs() > 1e-9 * sa.abs().max(1.0) {
        return Err(Error::Infeasible(format!(
            "marginal masses differ: {sa} vs {sb}"
        )));
    }

    let mut tree = Tree {
        m,
        n,
        arcs: Vec::with_capacity(m + n - 1),
        adj: vec![Vec::new(); m + n],
        parent_arc: vec![NONE; m + n],
        parent: vec![NONE; m + n],
        depth: vec![0; m + n],
        pot: vec![0.0; m + n],
    };

    // Northwest-corner start; always yields m + n - 1 arcs.
    let mut supply = a.to_vec();
    let mut demand = b.to_vec();
    let (mut i, mut j) = (0, 0);
    loop {
        let f = supply[i].min(demand[j]).max(0.0);
        let f = if i == m - 1 && j == n - 1 {
            supply[i].max(demand[j]).max(0.0)
        } else {
            f
        };
        tree.add_arc(i, j, f);
        supply[i] -= f;
        demand[j] -= f;
        if i == m - 1 && j == n - 1 {
            break;
        }
        if i == m - 1 {
            j += 1;
        } else if j == n - 1 || supply[i] <= demand[j] {
            i += 1;
        } else {
            j += 1;
        }
    }

    let cmax = cost.iter().fold(0.0f64, |acc, c| acc.max(c.abs()));
    let tol = (1e-13 * cmax).max(1e-12);
    let arcs_total = m * n;
    let block = ((arcs_total as f64).sqrt().ceil() as usize)
        .max(10)
        .min(arcs_total);
    let max_iter = 200 * (m + n) * ((m + n) as f64).log2().ceil().max(1.0) as usize + 10_000;

    tree.relabel(cost);
    let mut cursor = 0usize;
    let mut iterations = 0usize;
    loop {
        // Block pricing: scan at most one full sweep of the arcs.
        let mut best = None;
        let mut best_rc = -tol;
        let mut scanned = 0;
        while scanned < arcs_total {
            let end = (scanned + block).min(arcs_total);
            for _ in scanned..end {
                let (r, c) = (cursor / n, cursor % n);
                let rc = cost[cursor] - tree.pot[r] - tree.pot[m + c];
                if rc < best_rc {
                    best_rc = rc;
                    best = Some((r, c));
                }
                cursor += 1;
                if cursor == arcs_total {
                    cursor = 0;
                }
            }
            scanned = end;
            if best.is_some() {
                break;
            }
        }
        let Some((er, ec)) = best else { break };
        iterations += 1;
        if iterations > max_iter {
            return Err(Error::Infeasible(format!(
                "network simplex exceeded {max_iter} pivots"
            )));
        }

        // Cycle: entering arc row->col (+), then col back up to the row
        // through the tree, alternating signs starting with (-).
        let mut x = er;
        let mut y = m + ec;
        let mut from_col = Vec::new();
        let mut from_row = Vec::new();
        while tree.depth[y] > tree.depth[x] {
            from_col.push(tree.parent_arc[y]);
            y = tree.parent[y];
        }
        while tree.depth[x] > tree.depth[y] {
            from_row.push(tree.parent_arc[x]);
            x = tree.parent[x];
        }
        while x != y {
            from_col.push(tree.parent_arc[y]);
            y = tree.parent[y];
            from_row.push(tree.parent_arc[x]);
            x = tree.parent[x];
        }
        let cycle: Vec<usize> = from_col
            .into_iter()
            .chain(from_row.into_iter().rev())
            .collect();

        let mut theta = f64::INFINITY;
        let mut leave = NONE;
        for (k, &id) in cycle.iter().enumerate() {
            if k % 2 == 0 && tree.arcs[id].flow < theta {
                theta = tree.arcs[id].flow;
                leave = id;
            }
        }
        let theta = theta.max(0.0);
        for (k, &id) in cycle.iter().enumerate() {
            if k % 2 == 0 {
                tree.arcs[id].flow = (tree.arcs[id].flow - theta).max(0.0);
            } else {
                tree.arcs[id].flow += theta;
            }
        }
        tree.replace_arc(leave, er, ec, theta);
        tree.relabel(cost);
    }

    let mut flow = vec![0.0; m * n];
    for arc in &tree.arcs {
        flow[arc.row * n + arc.col] += arc.flow;
    }
    Ok(Solution {
        flow,
        u: tree.pot[..m].to_vec(),
        v: tree.pot[m..].to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two() {
        let c = [0.0, 1.0, 1.0, 0.0];
        let s = solve(&[0.5, 0.5], &[0.5, 0.5], &c).unwrap();
        assert_eq!(s.flow, vec![0.5, 0.0, 0.0, 0.5]);
    }

    #[test]
    fn rectangular_with_zero_weight() {
        let c = [1.0, 2.0, 3.0, 4.0, 0.0, 1.0];
        let s = solve(&[0.0, 1.0], &[0.25, 0.25, 0.5], &c).unwrap();
        let value: f64 = s.flow.iter().zip(&c).map(|(f, c)| f * c).sum();
        assert!((value - (0.25 * 4.0 + 0.0 + 0.5)).abs() < 1e-12);
    }

    #[test]
    fn mismatched_mass() {
        assert!(solve(&[1.0], &[0.5], &[0.0]).is_err());
    }
}
