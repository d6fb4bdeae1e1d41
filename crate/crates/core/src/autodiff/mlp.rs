//! Multi-layer perceptrons for critics and generators.

use serde::{Deserialize, Serialize};

use crate::autodiff::tape::{Gradients, Tape, Var};
use crate::autodiff::tensor::Tensor;
use crate::error::{Error, Result};
use crate::measure::Point;
use crate::rng::SeededRng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
    LeakyRelu { slope: f64 },
    Tanh,
}

impl Activation {
    pub fn name(&self) -> String {
        match self {
            Activation::Identity => "identity".into(),
            Activation::Relu => "relu".into(),
            Activation::LeakyRelu { slope } => format!("leaky_relu({slope})"),
            Activation::Tanh => "tanh".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Affine map `x W + b` followed by an activation and optional dropout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    /// `fan_in x fan_out`.
    pub weight: Tensor,
    /// `1 x fan_out`.
    pub bias: Tensor,
    pub activation: Activation,
    pub dropout: f64,
}

impl Layer {
    pub fn fan_in(&self) -> usize {
        self.weight.rows
    }

    pub fn fan_out(&self) -> usize {
        self.weight.cols
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpNetwork {
    pub layers: Vec<Layer>,
}

/// Layer shape used to build a network: `(fan_out, activation, dropout)`.
#[derive(Debug, Clone, Copy)]
pub struct LayerSpec {
    pub width: usize,
    pub activation: Activation,
    pub dropout: f64,
}

impl LayerSpec {
    pub fn new(width: usize, activation: Activation) -> Self {
        Self {
            width,
            activation,
            dropout: 0.0,
        }
    }

    pub fn with_dropout(mut self, rate: f64) -> Self {
        self.dropout = rate;
        self
    }
}

impl MlpNetwork {
    /// Validates a layer list: dimensions must chain and dropout be in `[0, 1)`.
    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Empty("network layers"));
        }
        for (k, l) in layers.iter().enumerate() {
            if l.bias.rows != 1 || l.bias.cols != l.fan_out() {
                return Err(Error::InvalidParameter(format!("layer {k}: bias shape")));
            }
            if !(0.0..1.0).contains(&l.dropout) {
                return Err(Error::InvalidParameter(format!(
                    "layer {k}: dropout {} not in [0, 1)",
                    l.dropout
                )));
            }
            if k > 0 && layers[k - 1].fan_out() != l.fan_in() {
                return Err(Error::DimensionMismatch {
                    expected: layers[k - 1].fan_out(),
                    got: l.fan_in(),
                });
            }
        }
        Ok(Self { layers })
    }

    /// Randomly initialized network. Weights are uniform in
    /// `±sqrt(6 / fan_in)` and biases start at zero.
    pub fn new(input_dim: usize, specs: &[LayerSpec], rng: &mut SeededRng) -> Result<Self> {
        let mut layers = Vec::with_capacity(specs.len());
        let mut fan_in = input_dim;
        for s in specs {
            let bound = (6.0 / fan_in as f64).sqrt();
            let data = (0..fan_in * s.width)
                .map(|_| rng.uniform(-bound, bound))
                .collect();
            layers.push(Layer {
                weight: Tensor::from_vec(fan_in, s.width, data),
                bias: Tensor::zeros(1, s.width),
                activation: s.activation,
                dropout: s.dropout,
            });
            fan_in = s.width;
        }
        Self::from_layers(layers)
    }

    /// Two hidden ReLU layers of 128 units, linear output.
    pub fn toy(input_dim: usize, output_dim: usize, rng: &mut SeededRng) -> Result<Self> {
        Self::new(
            input_dim,
            &[
                LayerSpec::new(128, Activation::Relu),
                LayerSpec::new(128, Activation::Relu),
                LayerSpec::new(output_dim, Activation::Identity),
            ],
            rng,
        )
    }

    /// Image-style critic: 1024, 512, 256 hidden units with LeakyReLU(0.2)
    /// and dropout 0.3, scalar output.
    pub fn mnist_critic(input_dim: usize, rng: &mut SeededRng) -> Result<Self> {
        let lrelu = Activation::LeakyRelu { slope: 0.2 };
        Self::new(
            input_dim,
            &[
                LayerSpec::new(1024, lrelu).with_dropout(0.3),
                LayerSpec::new(512, lrelu).with_dropout(0.3),
                LayerSpec::new(256, lrelu).with_dropout(0.3),
                LayerSpec::new(1, Activation::Identity),
            ],
            rng,
        )
    }

    /// Image-style generator: 256, 512 LeakyReLU(0.2), 1024 Tanh, then the
    /// output layer with LeakyReLU(0.2).
    pub fn mnist_generator(
        noise_dim: usize,
        output_dim: usize,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        let lrelu = Activation::LeakyRelu { slope: 0.2 };
        Self::new(
            noise_dim,
            &[
                LayerSpec::new(256, lrelu),
                LayerSpec::new(512, lrelu),
                LayerSpec::new(1024, Activation::Tanh),
                LayerSpec::new(output_dim, lrelu),
            ],
            rng,
        )
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].fan_out()
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.len() + l.bias.len())
            .sum()
    }

    /// Parameters in order `W_0, b_0, W_1, b_1, ...`, each row major.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend_from_slice(&l.weight.data);
            out.extend_from_slice(&l.bias.data);
        }
        out
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::DimensionMismatch {
                expected: self.num_params(),
                got: flat.len(),
            });
        }
        let mut off = 0;
        for l in &mut self.layers {
            let n = l.weight.len();
            l.weight.data.copy_from_slice(&flat[off..off + n]);
            off += n;
            let n = l.bias.len();
            l.bias.data.copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        Ok(())
    }

    /// Registers the parameters as leaves on `tape`.
    pub fn bind(&self, tape: &mut Tape) -> BoundMlp<'_> {
        let params = self
            .layers
            .iter()
            .map(|l| (tape.leaf(l.weight.clone()), tape.leaf(l.bias.clone())))
            .collect();
        BoundMlp { net: self, params }
    }

    /// Plain evaluation without recording, dropout disabled.
    pub fn eval(&self, x: &Tensor) -> Result<Tensor> {
        if x.cols != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: x.cols,
            });
        }
        let mut h = x.clone();
        for l in &self.layers {
            let mut z = h.matmul(&l.weight);
            for chunk in z.data.chunks_mut(z.cols) {
                for (v, b) in chunk.iter_mut().zip(&l.bias.data) {
                    *v += b;
                }
            }
            h = match l.activation {
                Activation::Identity => z,
                Activation::Relu => z.map(|v| if v > 0.0 { v } else { 0.0 }),
                Activation::LeakyRelu { slope } => z.map(|v| if v > 0.0 { v } else { slope * v }),
                Activation::Tanh => z.map(f64::tanh),
            };
        }
        Ok(h)
    }

    pub fn eval_points(&self, points: &[Point]) -> Result<Tensor> {
        self.eval(&points_to_tensor(points)?)
    }

    /// Clamps every weight and bias to `[-c, c]`.
    pub fn clip_weights(&mut self, c: f64) {
        for l in &mut self.layers {
            for v in l.weight.data.iter_mut().chain(l.bias.data.iter_mut()) {
                *v = v.clamp(-c, c);
            }
        }
    }
}

/// Stacks points into a `len x dim` tensor.
pub fn points_to_tensor(points: &[Point]) -> Result<Tensor> {
    let dim = points.first().map_or(0, Point::dim);
    let mut data = Vec::with_capacity(points.len() * dim);
    for p in points {
        if p.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: p.dim(),
            });
        }
        data.extend_from_slice(p.coords());
    }
    Ok(Tensor::from_vec(points.len(), dim, data))
}

/// Converts each row back into a point.
pub fn tensor_to_points(t: &Tensor) -> Result<Vec<Point>> {
    (0..t.rows).map(|i| Point::new(t.row(i).to_vec())).collect()
}

/// A network whose parameters live on a tape.
pub struct BoundMlp<'a> {
    net: &'a MlpNetwork,
    params: Vec<(Var, Var)>,
}

impl BoundMlp<'_> {
    pub fn params(&self) -> &[(Var, Var)] {
        &self.params
    }

    pub fn forward(&self, tape: &mut Tape, x: Var, mode: Mode, rng: &mut SeededRng) -> Result<Var> {
        let cols = tape.value(x).cols;
        if cols != self.net.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.net.input_dim(),
                got: cols,
            });
        }
        let mut h = x;
        for (layer, &(w, b)) in self.net.layers.iter().zip(&self.params) {
            let z = tape.matmul(h, w);
            let z = tape.add_row(z, b);
            h = match layer.activation {
                Activation::Identity => z,
                Activation::Relu => tape.relu(z),
                Activation::LeakyRelu { slope } => tape.leaky_relu(z, slope),
                Activation::Tanh => tape.tanh(z),
            };
            if mode == Mode::Train && layer.dropout > 0.0 {
                let keep = 1.0 - layer.dropout;
                let (r, c) = tape.value(h).shape();
                let mask = (0..r * c)
                    .map(|_| if rng.bernoulli(keep) { 1.0 / keep } else { 0.0 })
                    .collect();
                h = tape.mask_mul(h, Tensor::from_vec(r, c, mask));
            }
        }
        Ok(h)
    }

    /// Parameter gradients flattened in [`MlpNetwork::flat_params`] order.
    pub fn flat_grads(&self, tape: &Tape, grads: &Gradients) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.net.num_params());
        for &(w, b) in &self.params {
            out.extend_from_slice(&grads.wrt(tape, w).data);
            out.extend_from_slice(&grads.wrt(tape, b).data);
        }
        out
    }
}

/// `∇_x net(x)` for each point, evaluated in eval mode. The network must
/// have a scalar output.
pub fn grad_wrt_input(net: &MlpNetwork, points: &[Point]) -> Result<Vec<Vec<f64>>> {
    if net.output_dim() != 1 {
        return Err(Error::Autodiff(format!(
            "input gradient needs a scalar-output network, got {} outputs",
            net.output_dim()
        )));
    }
    if points.is_empty() {
        return Ok(Vec::new());
    }
    let mut tape = Tape::new();
    let bound = net.bind(&mut tape);
    let x = tape.leaf(points_to_tensor(points)?);
    // Eval mode draws no randomness.
    let mut rng = SeededRng::new(0);
    let out = bound.forward(&mut tape, x, Mode::Eval, &mut rng)?;
    let total = tape.sum(out);
    let grads = tape.backward(total)?;
    let g = grads.wrt(&tape, x);
    Ok((0..g.rows).map(|i| g.row(i).to_vec()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_linear(w: Tensor, b: Tensor) -> MlpNetwork {
        MlpNetwork::from_layers(vec![Layer {
            weight: w,
            bias: b,
            activation: Activation::Identity,
            dropout: 0.0,
        }])
        .unwrap()
    }

    #[test]
    fn zero_net_outputs_zero() {
        let mut net = MlpNetwork::toy(3, 2, &mut SeededRng::new(1)).unwrap();
        let zeros = vec![0.0; net.num_params()];
        net.set_flat_params(&zeros).unwrap();
        let x = Tensor::from_rows(&[vec![1.0, -2.0, 3.0], vec![0.5, 0.5, 0.5]]);
        assert!(net.eval(&x).unwrap().data.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn identity_layer() {
        let net = single_linear(
            Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]),
            Tensor::zeros(1, 2),
        );
        let x = Tensor::from_rows(&[vec![1.5, -2.0], vec![3.0, 4.0]]);
        assert_eq!(net.eval(&x).unwrap(), x);
    }

    #[test]
    fn forward_rejects_bad_dim() {
        let net = MlpNetwork::toy(3, 1, &mut SeededRng::new(1)).unwrap();
        let mut tape = Tape::new();
        let b = net.bind(&mut tape);
        let x = tape.leaf(Tensor::zeros(4, 2));
        assert!(b
            .forward(&mut tape, x, Mode::Eval, &mut SeededRng::new(0))
            .is_err());
        assert!(net.eval(&Tensor::zeros(1, 5)).is_err());
    }

    #[test]
    fn zero_dropout_train_equals_eval() {
        let net = MlpNetwork::toy(2, 1, &mut SeededRng::new(3)).unwrap();
        let x = Tensor::from_rows(&[vec![0.3, -0.2], vec![1.0, 2.0]]);
        let mut tape = Tape::new();
        let b = net.bind(&mut tape);
        let xv = tape.leaf(x.clone());
        let out = b
            .forward(&mut tape, xv, Mode::Train, &mut SeededRng::new(5))
            .unwrap();
        assert_eq!(tape.value(out), &net.eval(&x).unwrap());
    }

    #[test]
    fn dropout_rate_validated() {
        let mut net = MlpNetwork::toy(2, 1, &mut SeededRng::new(3)).unwrap();
        net.layers[0].dropout = 1.0;
        assert!(MlpNetwork::from_layers(net.layers).is_err());
    }

    #[test]
    fn clip_examples() {
        let c = 0.5;
        let mut net = single_linear(
            Tensor::from_rows(&[vec![0.2, 2.0 * c], vec![-3.0 * c, -0.1]]),
            Tensor::from_rows(&[vec![0.5, -0.5]]),
        );
        net.clip_weights(c);
        assert_eq!(net.layers[0].weight.data, vec![0.2, c, -c, -0.1]);
        assert_eq!(net.layers[0].bias.data, vec![0.5, -0.5]);
    }

    #[test]
    fn linear_input_gradient() {
        let net = single_linear(
            Tensor::from_rows(&[vec![2.0], vec![-1.0]]),
            Tensor::scalar(0.3),
        );
        let pts = vec![
            Point::new(vec![0.0, 0.0]).unwrap(),
            Point::new(vec![5.0, -7.0]).unwrap(),
        ];
        let g = grad_wrt_input(&net, &pts).unwrap();
        assert_eq!(g, vec![vec![2.0, -1.0], vec![2.0, -1.0]]);
    }

    #[test]
    fn input_gradient_needs_scalar_output() {
        let net = MlpNetwork::toy(2, 2, &mut SeededRng::new(1)).unwrap();
        assert!(grad_wrt_input(&net, &[Point::new(vec![0.0, 0.0]).unwrap()]).is_err());
    }

    #[test]
    fn mnist_shapes() {
        let mut rng = SeededRng::new(0);
        let c = MlpNetwork::mnist_critic(784, &mut rng).unwrap();
        let g = MlpNetwork::mnist_generator(128, 784, &mut rng).unwrap();
        assert_eq!(c.output_dim(), 1);
        assert_eq!(c.layers[1].fan_in(), 8 * 128);
        assert_eq!(g.layers[2].activation, Activation::Tanh);
        assert_eq!(g.output_dim(), 784);
    }
}
