//! Reverse-mode automatic differentiation over matrix-valued nodes.
//!
//! The tape is append-only: every operation pushes a node holding its value
//! and the ids of its operands. [`Tape::backward`] sweeps the nodes in reverse
//! and accumulates numeric gradients. [`Tape::grad_graph`] instead records the
//! gradient computation itself as new nodes, so a penalty on an input
//! gradient can be differentiated a second time.

use crate::autodiff::tensor::Tensor;
use crate::error::{Error, Result};
use crate::measure::CostSpec;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    /// `a (r x c) + b (1 x c)` on every row.
    AddRow(Var, Var),
    /// `a (r x c) + b (r x 1)` on every column.
    AddCol(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Relu(Var),
    LeakyRelu(Var, f64),
    Tanh(Var),
    /// Elementwise product with a constant tensor.
    MaskMul(Var, Tensor),
    Square(Var),
    Sqrt(Var),
    /// `min(a, 0)`.
    MinZero(Var),
    Transpose(Var),
    Sum(Var),
    /// `r x c -> r x 1`.
    SumCols(Var),
    /// `r x c -> 1 x c`.
    SumRows(Var),
    /// `1 x 1 -> r x c`.
    Broadcast(Var),
    ConcatRows(Var, Var),
    /// Column-wise minimum with the first minimizing row per column.
    ColMin(Var, Vec<usize>),
    /// Gathers row `i` of the source for each listed index.
    GatherRows(Var, Vec<usize>),
    /// `c(x_i, y_j)` for rows of `x` and `y`.
    PairwiseCost(Var, Var, CostSpec),
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Numeric gradients indexed by [`Var`].
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient of `v`, zero-filled when the loss does not depend on it.
    pub fn wrt(&self, tape: &Tape, v: Var) -> Tensor {
        self.get(v).cloned().unwrap_or_else(|| {
            let (r, c) = tape.value(v).shape();
            Tensor::zeros(r, c)
        })
    }
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.value(v).item()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul(self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip_map(self.value(b), |x, y| x + y);
        self.push(v, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip_map(self.value(b), |x, y| x - y);
        self.push(v, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip_map(self.value(b), |x, y| x * y);
        self.push(v, Op::Mul(a, b))
    }

    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(row));
        assert!(bv.rows == 1 && bv.cols == av.cols, "add_row shape");
        let mut v = av.clone();
        for chunk in v.data.chunks_mut(av.cols) {
            for (x, b) in chunk.iter_mut().zip(&bv.data) {
                *x += b;
            }
        }
        self.push(v, Op::AddRow(a, row))
    }

    pub fn add_col(&mut self, a: Var, col: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(col));
        assert!(bv.cols == 1 && bv.rows == av.rows, "add_col shape");
        let mut v = av.clone();
        for (chunk, b) in v.data.chunks_mut(av.cols).zip(&bv.data) {
            chunk.iter_mut().for_each(|x| *x += b);
        }
        self.push(v, Op::AddCol(a, col))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let v = self.value(a).map(|x| x * s);
        self.push(v, Op::Scale(a, s))
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -1.0)
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Var {
        let v = self.value(a).map(|x| x + s);
        self.push(v, Op::AddScalar(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| if x > 0.0 { x } else { 0.0 });
        self.push(v, Op::Relu(a))
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        let v = self.value(a).map(|x| if x > 0.0 { x } else { slope * x });
        self.push(v, Op::LeakyRelu(a, slope))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::tanh);
        self.push(v, Op::Tanh(a))
    }

    pub fn mask_mul(&mut self, a: Var, mask: Tensor) -> Var {
        let v = self.value(a).zip_map(&mask, |x, m| x * m);
        self.push(v, Op::MaskMul(a, mask))
    }

    pub fn square(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x * x);
        self.push(v, Op::Square(a))
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::sqrt);
        self.push(v, Op::Sqrt(a))
    }

    pub fn min_zero(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x.min(0.0));
        self.push(v, Op::MinZero(a))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let v = self.value(a).transpose();
        self.push(v, Op::Transpose(a))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let v = Tensor::scalar(self.value(a).sum());
        self.push(v, Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.value(a).len() as f64;
        let s = self.sum(a);
        self.scale(s, 1.0 / n)
    }

    pub fn sum_cols(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let data = av.data.chunks(av.cols).map(|r| r.iter().sum()).collect();
        let v = Tensor::from_vec(av.rows, 1, data);
        self.push(v, Op::SumCols(a))
    }

    pub fn sum_rows(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let mut data = vec![0.0; av.cols];
        for chunk in av.data.chunks(av.cols) {
            for (d, x) in data.iter_mut().zip(chunk) {
                *d += x;
            }
        }
        let v = Tensor::from_vec(1, av.cols, data);
        self.push(v, Op::SumRows(a))
    }

    pub fn broadcast(&mut self, a: Var, rows: usize, cols: usize) -> Var {
        let v = Tensor::filled(rows, cols, self.value(a).item());
        self.push(v, Op::Broadcast(a))
    }

    pub fn concat_rows(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(av.cols, bv.cols, "concat_rows columns");
        let mut data = av.data.clone();
        data.extend_from_slice(&bv.data);
        let v = Tensor::from_vec(av.rows + bv.rows, av.cols, data);
        self.push(v, Op::ConcatRows(a, b))
    }

    /// Minimum of each column; ties go to the lowest row index.
    pub fn col_min(&mut self, a: Var) -> (Var, Vec<usize>) {
        let av = self.value(a);
        assert!(av.rows > 0, "col_min on empty tensor");
        let mut idx = vec![0usize; av.cols];
        let mut data = av.row(0).to_vec();
        for i in 1..av.rows {
            for (j, x) in av.row(i).iter().enumerate() {
                if *x < data[j] {
                    data[j] = *x;
                    idx[j] = i;
                }
            }
        }
        let v = Tensor::from_vec(1, av.cols, data);
        (self.push(v, Op::ColMin(a, idx.clone())), idx)
    }

    pub fn gather_rows(&mut self, a: Var, rows: Vec<usize>) -> Var {
        let av = self.value(a);
        let mut data = Vec::with_capacity(rows.len() * av.cols);
        for &r in &rows {
            data.extend_from_slice(av.row(r));
        }
        let v = Tensor::from_vec(rows.len(), av.cols, data);
        self.push(v, Op::GatherRows(a, rows))
    }

    /// `c(x_i, y_j) = d_q(x_i, y_j)^p / p` for every row pair.
    pub fn pairwise_cost(&mut self, x: Var, y: Var, spec: CostSpec) -> Var {
        let (xv, yv) = (self.value(x), self.value(y));
        assert_eq!(xv.cols, yv.cols, "pairwise_cost dimension");
        let mut data = Vec::with_capacity(xv.rows * yv.rows);
        for i in 0..xv.rows {
            for j in 0..yv.rows {
                data.push(spec.cost_slices(xv.row(i), yv.row(j)));
            }
        }
        let v = Tensor::from_vec(xv.rows, yv.rows, data);
        self.push(v, Op::PairwiseCost(x, y, spec))
    }

    /// Numeric gradients of the scalar `loss` with respect to every node.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(Error::Autodiff(format!(
                "backward needs a scalar loss, got shape {:?}",
                lv.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::scalar(1.0));

        fn acc(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
            match &mut grads[v.0] {
                Some(t) => t.add_assign(&g),
                slot @ None => *slot = Some(g),
            }
        }

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let ga = g.matmul(&self.value(*b).transpose());
                    let gb = self.value(*a).transpose().matmul(&g);
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *a, g.clone());
                    acc(&mut grads, *b, g.clone());
                }
                Op::Sub(a, b) => {
                    acc(&mut grads, *a, g.clone());
                    acc(&mut grads, *b, g.map(|x| -x));
                }
                Op::Mul(a, b) => {
                    acc(&mut grads, *a, g.zip_map(self.value(*b), |x, y| x * y));
                    acc(&mut grads, *b, g.zip_map(self.value(*a), |x, y| x * y));
                }
                Op::AddRow(a, b) => {
                    let mut gb = vec![0.0; g.cols];
                    for chunk in g.data.chunks(g.cols) {
                        for (d, x) in gb.iter_mut().zip(chunk) {
                            *d += x;
                        }
                    }
                    acc(&mut grads, *b, Tensor::from_vec(1, g.cols, gb));
                    acc(&mut grads, *a, g.clone());
                }
                Op::AddCol(a, b) => {
                    let gb = g.data.chunks(g.cols).map(|r| r.iter().sum()).collect();
                    acc(&mut grads, *b, Tensor::from_vec(g.rows, 1, gb));
                    acc(&mut grads, *a, g.clone());
                }
                Op::Scale(a, s) => acc(&mut grads, *a, g.map(|x| x * s)),
                Op::AddScalar(a) => acc(&mut grads, *a, g.clone()),
                Op::Relu(a) => {
                    let ga = g.zip_map(self.value(*a), |x, v| if v > 0.0 { x } else { 0.0 });
                    acc(&mut grads, *a, ga);
                }
                Op::LeakyRelu(a, s) => {
                    let ga = g.zip_map(self.value(*a), |x, v| if v > 0.0 { x } else { s * x });
                    acc(&mut grads, *a, ga);
                }
                Op::Tanh(a) => {
                    let ga = g.zip_map(&node.value, |x, t| x * (1.0 - t * t));
                    acc(&mut grads, *a, ga);
                }
                Op::MaskMul(a, m) => acc(&mut grads, *a, g.zip_map(m, |x, y| x * y)),
                Op::Square(a) => {
                    acc(
                        &mut grads,
                        *a,
                        g.zip_map(self.value(*a), |x, v| 2.0 * v * x),
                    );
                }
                Op::Sqrt(a) => {
                    let ga = g.zip_map(
                        &node.value,
                        |x, s| if s > 0.0 { x / (2.0 * s) } else { 0.0 },
                    );
                    acc(&mut grads, *a, ga);
                }
                Op::MinZero(a) => {
                    let ga = g.zip_map(self.value(*a), |x, v| if v < 0.0 { x } else { 0.0 });
                    acc(&mut grads, *a, ga);
                }
                Op::Transpose(a) => acc(&mut grads, *a, g.transpose()),
                Op::Sum(a) => {
                    let (r, c) = self.value(*a).shape();
                    acc(&mut grads, *a, Tensor::filled(r, c, g.item()));
                }
                Op::SumCols(a) => {
                    let (r, c) = self.value(*a).shape();
                    let mut ga = Tensor::zeros(r, c);
                    for (chunk, x) in ga.data.chunks_mut(c).zip(&g.data) {
                        chunk.iter_mut().for_each(|v| *v = *x);
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::SumRows(a) => {
                    let (r, c) = self.value(*a).shape();
                    let mut ga = Tensor::zeros(r, c);
                    for chunk in ga.data.chunks_mut(c) {
                        chunk.copy_from_slice(&g.data);
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::Broadcast(a) => acc(&mut grads, *a, Tensor::scalar(g.sum())),
                Op::ConcatRows(a, b) => {
                    let ra = self.value(*a).rows;
                    let split = ra * g.cols;
                    acc(
                        &mut grads,
                        *a,
                        Tensor::from_vec(ra, g.cols, g.data[..split].to_vec()),
                    );
                    acc(
                        &mut grads,
                        *b,
                        Tensor::from_vec(g.rows - ra, g.cols, g.data[split..].to_vec()),
                    );
                }
                Op::ColMin(a, idx) => {
                    let (r, c) = self.value(*a).shape();
                    let mut ga = Tensor::zeros(r, c);
                    for (j, &i) in idx.iter().enumerate() {
                        ga.data[i * c + j] = g.data[j];
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::GatherRows(a, rows) => {
                    let (r, c) = self.value(*a).shape();
                    let mut ga = Tensor::zeros(r, c);
                    for (k, &src) in rows.iter().enumerate() {
                        for t in 0..c {
                            ga.data[src * c + t] += g.data[k * c + t];
                        }
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::PairwiseCost(x, y, spec) => {
                    let (gx, gy) = pairwise_cost_grad(self.value(*x), self.value(*y), &g, *spec);
                    acc(&mut grads, *x, gx);
                    acc(&mut grads, *y, gy);
                }
            }
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    /// Records the gradient of scalar `output` with respect to `wrt` as new
    /// nodes on the tape. Supports the operations used by MLP forward passes
    /// and elementwise arithmetic.
    pub fn grad_graph(&mut self, output: Var, wrt: &[Var]) -> Result<Vec<Var>> {
        if self.value(output).len() != 1 {
            return Err(Error::Autodiff("grad_graph needs a scalar output".into()));
        }
        let mut grads: Vec<Option<Var>> = vec![None; output.0 + 1];
        let one = self.leaf(Tensor::scalar(1.0));
        grads[output.0] = Some(one);

        fn acc(tape: &mut Tape, grads: &mut [Option<Var>], v: Var, g: Var) {
            grads[v.0] = Some(match grads[v.0] {
                Some(prev) => tape.add(prev, g),
                None => g,
            });
        }

        for idx in (0..=output.0).rev() {
            let Some(g) = grads[idx] else { continue };
            let op = self.nodes[idx].op.clone();
            match op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let bt = self.transpose(b);
                    let ga = self.matmul(g, bt);
                    let at = self.transpose(a);
                    let gb = self.matmul(at, g);
                    acc(self, &mut grads, a, ga);
                    acc(self, &mut grads, b, gb);
                }
                Op::Add(a, b) => {
                    acc(self, &mut grads, a, g);
                    acc(self, &mut grads, b, g);
                }
                Op::Sub(a, b) => {
                    let ng = self.neg(g);
                    acc(self, &mut grads, a, g);
                    acc(self, &mut grads, b, ng);
                }
                Op::Mul(a, b) => {
                    let ga = self.mul(g, b);
                    let gb = self.mul(g, a);
                    acc(self, &mut grads, a, ga);
                    acc(self, &mut grads, b, gb);
                }
                Op::AddRow(a, b) => {
                    let gb = self.sum_rows(g);
                    acc(self, &mut grads, a, g);
                    acc(self, &mut grads, b, gb);
                }
                Op::Scale(a, s) => {
                    let ga = self.scale(g, s);
                    acc(self, &mut grads, a, ga);
                }
                Op::AddScalar(a) => acc(self, &mut grads, a, g),
                Op::Relu(a) => {
                    let mask = self.value(a).map(|v| if v > 0.0 { 1.0 } else { 0.0 });
                    let ga = self.mask_mul(g, mask);
                    acc(self, &mut grads, a, ga);
                }
                Op::LeakyRelu(a, s) => {
                    let mask = self.value(a).map(|v| if v > 0.0 { 1.0 } else { s });
                    let ga = self.mask_mul(g, mask);
                    acc(self, &mut grads, a, ga);
                }
                Op::Tanh(a) => {
                    let t = Var(idx);
                    let t2 = self.square(t);
                    let neg = self.neg(t2);
                    let d = self.add_scalar(neg, 1.0);
                    let ga = self.mul(g, d);
                    acc(self, &mut grads, a, ga);
                }
                Op::MaskMul(a, m) => {
                    let ga = self.mask_mul(g, m);
                    acc(self, &mut grads, a, ga);
                }
                Op::Square(a) => {
                    let ga = self.mul(g, a);
                    let ga = self.scale(ga, 2.0);
                    acc(self, &mut grads, a, ga);
                }
                Op::Transpose(a) => {
                    let ga = self.transpose(g);
                    acc(self, &mut grads, a, ga);
                }
                Op::Sum(a) => {
                    let (r, c) = self.value(a).shape();
                    let ga = self.broadcast(g, r, c);
                    acc(self, &mut grads, a, ga);
                }
                other => {
                    return Err(Error::Autodiff(format!(
                        "grad_graph does not support {:?}",
                        std::mem::discriminant(&other)
                    )))
                }
            }
        }
        Ok(wrt
            .iter()
            .map(|&v| match grads.get(v.0).copied().flatten() {
                Some(g) => g,
                None => {
                    let (r, c) = self.value(v).shape();
                    self.leaf(Tensor::zeros(r, c))
                }
            })
            .collect())
    }
}

/// Gradients of `Σ_ij g_ij c(x_i, y_j)` with respect to `x` and `y`.
/// At `x_i == y_j` the subgradient 0 is used.
fn pairwise_cost_grad(x: &Tensor, y: &Tensor, g: &Tensor, spec: CostSpec) -> (Tensor, Tensor) {
    let d = x.cols;
    let mut gx = Tensor::zeros(x.rows, d);
    let mut gy = Tensor::zeros(y.rows, d);
    let mut delta = vec![0.0; d];
    for i in 0..x.rows {
        for j in 0..y.rows {
            let w = g.data[i * y.rows + j];
            if w == 0.0 {
                continue;
            }
            let (xi, yj) = (x.row(i), y.row(j));
            for k in 0..d {
                delta[k] = xi[k] - yj[k];
            }
            let dist = crate::measure::lq_slices(xi, yj, spec.q);
            if dist == 0.0 {
                continue;
            }
            // ∂c/∂x_k = d^(p-q) |δ_k|^(q-1) sign(δ_k)
            let outer = w * crate::measure::powr(dist, spec.p - spec.q);
            for k in 0..d {
                let dk = delta[k];
                if dk == 0.0 {
                    continue;
                }
                let inner = if spec.q == 1.0 {
                    dk.signum()
                } else if spec.q == 2.0 {
                    dk
                } else {
                    dk.signum() * dk.abs().powf(spec.q - 1.0)
                };
                gx.data[i * d + k] += outer * inner;
                gy.data[j * d + k] -= outer * inner;
            }
        }
    }
    (gx, gy)
}
