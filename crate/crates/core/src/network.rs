//! Layered networks `z_j = K_j(θ_j, x_{j−1}) + b_j`, `x_j = g_j(z_j)`.
//!
//! Layer numbers in traces follow the math: `j = 1..=L`, with `x(0)` the
//! input. `Network::layers()` is an ordinary 0-based slice.

use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::activation::{zeta_l_init, Activation};
use crate::error::{Error, Result};
use crate::ops::{BilinearOperator, OpCounter, OperatorKind};
use crate::penalty::ResolvedDirection;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub op: BilinearOperator,
    pub theta: Tensor,
    pub bias: Tensor,
    pub activation: Activation,
}

impl Layer {
    pub fn new(op: BilinearOperator, theta: Tensor, bias: Tensor, activation: Activation) -> Result<Self> {
        if theta.shape() != op.param_shape() {
            return Err(Error::shape("layer parameters", op.param_shape(), theta.shape()));
        }
        if bias.shape() != op.out_shape() {
            return Err(Error::shape("layer bias", op.out_shape(), bias.shape()));
        }
        Ok(Layer { op, theta, bias, activation })
    }

    /// Dense layer from a row-major `[out, in]` weight matrix and zero bias.
    pub fn dense(weights: Tensor, activation: Activation) -> Result<Self> {
        let (m, n) = match *weights.shape() {
            [m, n] => (m, n),
            _ => {
                return Err(Error::InvalidShape {
                    shape: weights.shape().to_vec(),
                    reason: "dense weights must be a matrix".into(),
                })
            }
        };
        Layer::new(BilinearOperator::dense(&[n], m)?, weights, Tensor::zeros(&[m]), activation)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layers: Vec<Layer>,
}

/// Values of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    x: Vec<Tensor>,
    z: Vec<Tensor>,
}

impl ForwardTrace {
    pub fn depth(&self) -> usize {
        self.z.len()
    }

    /// Activation `x_j`, `j = 0..=L`.
    pub fn x(&self, j: usize) -> &Tensor {
        &self.x[j]
    }

    /// Pre-activation `z_j`, `j = 1..=L`.
    pub fn z(&self, j: usize) -> &Tensor {
        &self.z[j - 1]
    }

    pub fn input(&self) -> &Tensor {
        &self.x[0]
    }

    pub fn output(&self) -> &Tensor {
        &self.x[self.z.len()]
    }
}

/// Backward quantities `ξ_j = (D x_L/D x_j)*·v` and `ζ_j = (D x_L/D z_j)*·v`.
#[derive(Debug, Clone, PartialEq)]
pub struct BackwardTrace {
    pub(crate) xi: Vec<Option<Tensor>>,
    pub(crate) zeta: Vec<Tensor>,
    pub(crate) direction: ResolvedDirection,
}

impl BackwardTrace {
    pub fn depth(&self) -> usize {
        self.zeta.len()
    }

    /// `ξ_j`, `j = 0..=L`. `ξ_0` is absent after plain backprop.
    pub fn xi(&self, j: usize) -> Option<&Tensor> {
        self.xi[j].as_ref()
    }

    /// `ζ_j`, `j = 1..=L`.
    pub fn zeta(&self, j: usize) -> &Tensor {
        &self.zeta[j - 1]
    }

    /// The direction `v = ξ_L` the pass was seeded with.
    pub fn direction(&self) -> &ResolvedDirection {
        &self.direction
    }

    /// Number of tensors currently held.
    pub(crate) fn live_tensors(&self) -> usize {
        self.xi.iter().flatten().count() + self.zeta.len()
    }
}

/// Per-layer gradients with respect to `θ_j` and `b_j` (0-based vectors).
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub theta: Vec<Tensor>,
    pub bias: Vec<Tensor>,
}

impl GradientSet {
    pub fn zeros(net: &Network) -> Self {
        GradientSet {
            theta: net.layers.iter().map(|l| Tensor::zeros_like(&l.theta)).collect(),
            bias: net.layers.iter().map(|l| Tensor::zeros_like(&l.bias)).collect(),
        }
    }

    pub fn zeros_like(other: &GradientSet) -> Self {
        other.scale(0.0)
    }

    /// `self += a · other`.
    pub fn axpy(&mut self, a: f64, other: &GradientSet) {
        for (s, o) in self.theta.iter_mut().zip(&other.theta) {
            s.axpy(a, o);
        }
        for (s, o) in self.bias.iter_mut().zip(&other.bias) {
            s.axpy(a, o);
        }
    }

    pub fn scale(&self, a: f64) -> GradientSet {
        GradientSet {
            theta: self.theta.iter().map(|t| t.scale(a)).collect(),
            bias: self.bias.iter().map(|t| t.scale(a)).collect(),
        }
    }

    /// All entries, layer by layer, weights before biases.
    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.theta
            .iter()
            .zip(&self.bias)
            .flat_map(|(t, b)| t.data().iter().chain(b.data()).copied())
    }

    pub fn max_abs(&self) -> f64 {
        self.values().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &GradientSet) -> f64 {
        self.values()
            .zip(other.values())
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn is_zero(&self) -> bool {
        self.values().all(|v| v == 0.0)
    }
}

impl Network {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidNetwork("at least one layer is required".into()));
        }
        for (j, pair) in layers.windows(2).enumerate() {
            if pair[0].op.out_shape() != pair[1].op.in_shape() {
                return Err(Error::shape("layer chaining", pair[0].op.out_shape(), pair[1].op.in_shape())
                    .at_layer(j + 2));
            }
        }
        let last = layers.len() - 1;
        for (j, l) in layers.iter().enumerate() {
            if l.theta.shape() != l.op.param_shape() || l.bias.shape() != l.op.out_shape() {
                return Err(Error::shape("layer parameters", l.op.param_shape(), l.theta.shape()).at_layer(j + 1));
            }
            if l.activation == Activation::Softmax {
                if j != last {
                    return Err(Error::InvalidNetwork(format!(
                        "softmax is only allowed on the output layer (found on layer {})",
                        j + 1
                    )));
                }
                if l.op.out_shape().len() != 1 {
                    return Err(Error::InvalidNetwork("softmax output must be one-dimensional".into()));
                }
            }
        }
        Ok(Network { layers })
    }

    /// Builds and initializes a network from its config.
    ///
    /// Weights are He-uniform for (leaky) ReLU layers and Glorot-uniform
    /// otherwise, drawn from a per-layer stream of the seeded generator.
    /// Biases start at zero.
    pub fn from_config(cfg: &NetworkConfig) -> Result<Self> {
        let mut in_shape = cfg.input.clone();
        let mut layers = Vec::with_capacity(cfg.layers.len());
        for (j, lc) in cfg.layers.iter().enumerate() {
            let (op, activation) = match lc {
                LayerConfig::Dense { out, activation, alpha } => {
                    (BilinearOperator::dense(&in_shape, *out), Activation::from_name(activation, *alpha)?)
                }
                LayerConfig::Conv1d {
                    kernel,
                    channels,
                    activation,
                    alpha,
                } => (
                    BilinearOperator::conv1d(&in_shape, *kernel, *channels),
                    Activation::from_name(activation, *alpha)?,
                ),
            };
            let op = op.map_err(|e| e.at_layer(j + 1))?;
            let theta = init_weights(&op, &activation, cfg.seed, j as u64);
            let bias = Tensor::zeros(op.out_shape());
            in_shape = op.out_shape().to_vec();
            layers.push(Layer { op, theta, bias, activation });
        }
        Network::new(layers)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Number of layers `L`.
    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn input_shape(&self) -> &[usize] {
        self.layers[0].op.in_shape()
    }

    pub fn output_shape(&self) -> &[usize] {
        self.layers[self.layers.len() - 1].op.out_shape()
    }

    /// Output dimension `C`.
    pub fn output_dim(&self) -> usize {
        self.output_shape().iter().product()
    }

    pub fn output_activation(&self) -> Activation {
        self.layers[self.layers.len() - 1].activation
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.theta.len() + l.bias.len()).sum()
    }

    /// Weights of layer `j` (1-based) as a flat mutable slice.
    pub fn theta_mut(&mut self, j: usize) -> &mut [f64] {
        self.layers[j - 1].theta.data_mut()
    }

    /// Bias of layer `j` (1-based) as a flat mutable slice.
    pub fn bias_mut(&mut self, j: usize) -> &mut [f64] {
        self.layers[j - 1].bias.data_mut()
    }

    /// `Θ += a · g`.
    pub fn axpy_params(&mut self, a: f64, g: &GradientSet) {
        for (l, (gt, gb)) in self.layers.iter_mut().zip(g.theta.iter().zip(&g.bias)) {
            l.theta.axpy(a, gt);
            l.bias.axpy(a, gb);
        }
    }

    pub fn forward(&self, x0: &Tensor, counter: &OpCounter) -> Result<ForwardTrace> {
        if x0.shape() != self.input_shape() {
            return Err(Error::shape("network input", self.input_shape(), x0.shape()).at_layer(1));
        }
        let mut x = Vec::with_capacity(self.layers.len() + 1);
        let mut z = Vec::with_capacity(self.layers.len());
        x.push(x0.clone());
        for (j, l) in self.layers.iter().enumerate() {
            let pre = l
                .op
                .forward(&l.theta, &x[j], counter)
                .map_err(|e| e.at_layer(j + 1))?
                .add(&l.bias);
            let act = l.activation.apply(&pre);
            if let Some(index) = act.data().iter().chain(pre.data()).position(|v| !v.is_finite()) {
                return Err(Error::NonFinite { index }.at_layer(j + 1));
            }
            z.push(pre);
            x.push(act);
        }
        Ok(ForwardTrace { x, z })
    }

    /// Runs `ξ_{j−1} = K_jᵀ(θ_j, ζ_j)`, `ζ_{j−1} = G'(z_{j−1})·ξ_{j−1}` down from
    /// a given `ζ_L`. `ξ_0` costs one more transposed application and is
    /// only formed when requested.
    pub(crate) fn backward_from(
        &self,
        trace: &ForwardTrace,
        direction: ResolvedDirection,
        zeta_l: Tensor,
        with_xi0: bool,
        counter: &OpCounter,
    ) -> Result<BackwardTrace> {
        let l_count = self.depth();
        let mut xi: Vec<Option<Tensor>> = vec![None; l_count + 1];
        let mut zeta = vec![Tensor::zeros(&[1]); l_count];
        xi[l_count] = Some(direction.v.clone());
        zeta[l_count - 1] = zeta_l;
        for j in (1..=l_count).rev() {
            if j == 1 && !with_xi0 {
                break;
            }
            let layer = &self.layers[j - 1];
            let x_prev = layer
                .op
                .transposed(&layer.theta, &zeta[j - 1], counter)
                .map_err(|e| e.at_layer(j))?;
            if j > 1 {
                let below = &self.layers[j - 2];
                zeta[j - 2] = below
                    .activation
                    .dapply(trace.z(j - 1), &x_prev)
                    .map_err(|e| e.at_layer(j - 1))?;
            }
            xi[j - 1] = Some(x_prev);
        }
        Ok(BackwardTrace { xi, zeta, direction })
    }

    /// Plain backpropagation seeded with `v = ∇_{x_L} ℓ`:
    /// `∇_{θ_j} ℓ = K_j□(x_{j−1}, ζ_j)` and `∇_{b_j} ℓ = ζ_j`.
    ///
    /// Costs `L − 1` transposed and `L` weight-adjoint applications; the
    /// returned trace keeps `ξ_j, ζ_j` for reuse and has no `ξ_0`.
    pub fn standard_backprop(
        &self,
        trace: &ForwardTrace,
        v: &Tensor,
        counter: &OpCounter,
    ) -> Result<(GradientSet, BackwardTrace)> {
        check_trace(self, trace)?;
        let l_count = self.depth();
        let last = &self.layers[l_count - 1];
        let dir = ResolvedDirection::constant(v.clone());
        let zeta_l = zeta_l_init(&last.activation, trace.z(l_count), trace.output(), &dir)
            .map_err(|e| e.at_layer(l_count))?;
        let bt = self.backward_from(trace, dir, zeta_l, false, counter)?;
        let grads = self.loss_gradients(trace, &bt, counter)?;
        Ok((grads, bt))
    }

    /// `K_j□(x_{j−1}, ζ_j)` and `ζ_j` for every layer.
    pub(crate) fn loss_gradients(
        &self,
        trace: &ForwardTrace,
        bt: &BackwardTrace,
        counter: &OpCounter,
    ) -> Result<GradientSet> {
        let mut theta = Vec::with_capacity(self.depth());
        for (j, l) in self.layers.iter().enumerate() {
            theta.push(
                l.op.weight_adjoint(trace.x(j), bt.zeta(j + 1), counter)
                    .map_err(|e| e.at_layer(j + 1))?,
            );
        }
        Ok(GradientSet {
            theta,
            bias: bt.zeta.clone(),
        })
    }
}

pub(crate) fn check_trace(net: &Network, trace: &ForwardTrace) -> Result<()> {
    if trace.depth() != net.depth() {
        return Err(Error::InvalidNetwork(format!(
            "trace has {} layers, network has {}",
            trace.depth(),
            net.depth()
        )));
    }
    for (j, l) in net.layers.iter().enumerate() {
        if trace.z(j + 1).shape() != l.op.out_shape() {
            return Err(Error::shape("trace", l.op.out_shape(), trace.z(j + 1).shape()).at_layer(j + 1));
        }
    }
    Ok(())
}

fn init_weights(op: &BilinearOperator, activation: &Activation, seed: u64, stream: u64) -> Tensor {
    let (fan_in, fan_out) = match op.kind() {
        OperatorKind::Dense => (op.param_shape()[1], op.param_shape()[0]),
        OperatorKind::Conv1d => {
            let p = op.param_shape();
            (p[0] * p[1], p[0] * p[2])
        }
    };
    let bound = if activation.has_kink() {
        (6.0 / fan_in as f64).sqrt()
    } else {
        (6.0 / (fan_in + fan_out) as f64).sqrt()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
    let mut t = Tensor::zeros(op.param_shape());
    for w in t.data_mut() {
        *w = dist.sample(&mut rng);
    }
    t
}

/// Network description, serialized as
/// `{"input":[..],"seed":s,"layers":[{"kind":"dense","out":n,"activation":"relu"}, ...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub input: Vec<usize>,
    #[serde(default)]
    pub seed: u64,
    pub layers: Vec<LayerConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LayerConfig {
    Dense {
        out: usize,
        activation: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        alpha: Option<f64>,
    },
    Conv1d {
        kernel: usize,
        channels: usize,
        activation: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        alpha: Option<f64>,
    },
}

impl LayerConfig {
    pub fn dense(out: usize, activation: &str) -> Self {
        LayerConfig::Dense {
            out,
            activation: activation.into(),
            alpha: None,
        }
    }

    pub fn conv1d(kernel: usize, channels: usize, activation: &str) -> Self {
        LayerConfig::Conv1d {
            kernel,
            channels,
            activation: activation.into(),
            alpha: None,
        }
    }
}

impl NetworkConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialization")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerParams {
    pub theta: Tensor,
    pub bias: Tensor,
}

/// Config plus trained parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub config: NetworkConfig,
    pub params: Vec<LayerParams>,
}

impl Checkpoint {
    pub fn new(config: NetworkConfig, net: &Network) -> Self {
        let params = net
            .layers
            .iter()
            .map(|l| LayerParams {
                theta: l.theta.clone(),
                bias: l.bias.clone(),
            })
            .collect();
        Checkpoint { config, params }
    }

    pub fn to_network(&self) -> Result<Network> {
        let mut net = Network::from_config(&self.config)?;
        if self.params.len() != net.depth() {
            return Err(Error::InvalidNetwork(format!(
                "checkpoint has {} parameter sets for {} layers",
                self.params.len(),
                net.depth()
            )));
        }
        for (j, (l, p)) in net.layers.iter_mut().zip(&self.params).enumerate() {
            if p.theta.shape() != l.theta.shape() || p.bias.shape() != l.bias.shape() {
                return Err(Error::shape("checkpoint parameters", l.theta.shape(), p.theta.shape()).at_layer(j + 1));
            }
            l.theta = p.theta.clone();
            l.bias = p.bias.clone();
        }
        Ok(net)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serialization")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loss::{loss_and_v, LossKind};

    fn v(d: &[f64]) -> Tensor {
        Tensor::vector(d.to_vec())
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let eye = Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let net = Network::new(vec![Layer::dense(eye, Activation::Identity).unwrap()]).unwrap();
        let c = OpCounter::new();
        let t = net.forward(&v(&[0.3, -4.0]), &c).unwrap();
        assert_eq!(t.output(), &v(&[0.3, -4.0]));
        assert_eq!(c.n_forward(), 1);
    }

    #[test]
    fn zero_weights_give_uniform_softmax() {
        let net = Network::new(vec![
            Layer::dense(Tensor::zeros(&[4, 2]), Activation::Tanh).unwrap(),
            Layer::dense(Tensor::zeros(&[3, 4]), Activation::Softmax).unwrap(),
        ])
        .unwrap();
        let t = net.forward(&v(&[1.0, 2.0]), &OpCounter::new()).unwrap();
        for p in t.output().data() {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn seeded_two_layer_forward_matches_reference() {
        let cfg = NetworkConfig {
            input: vec![3],
            seed: 11,
            layers: vec![LayerConfig::dense(4, "relu"), LayerConfig::dense(2, "identity")],
        };
        let mut net = Network::from_config(&cfg).unwrap();
        net.bias_mut(1).copy_from_slice(&[0.1, -0.2, 0.3, 0.0]);
        let x0 = v(&[0.5, -1.0, 2.0]);
        let c = OpCounter::new();
        let t = net.forward(&x0, &c).unwrap();
        // independent matvec + relu
        let matvec = |w: &Tensor, x: &[f64]| -> Vec<f64> {
            let n = x.len();
            w.data().chunks(n).map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum()).collect()
        };
        let l = net.layers();
        let h: Vec<f64> = matvec(&l[0].theta, x0.data())
            .iter()
            .zip(l[0].bias.data())
            .map(|(a, b)| (a + b).max(0.0))
            .collect();
        let out = matvec(&l[1].theta, &h);
        for (a, b) in t.output().data().iter().zip(&out) {
            assert!((a - b).abs() <= 1e-15);
        }
        assert_eq!(c.n_forward(), 2);
        assert_eq!(net.forward(&x0, &OpCounter::new()).unwrap(), t);
    }

    #[test]
    fn network_validation() {
        let l1 = Layer::dense(Tensor::zeros(&[3, 2]), Activation::Softmax).unwrap();
        let l2 = Layer::dense(Tensor::zeros(&[1, 3]), Activation::Identity).unwrap();
        assert!(matches!(Network::new(vec![l1, l2.clone()]), Err(Error::InvalidNetwork(_))));
        let l3 = Layer::dense(Tensor::zeros(&[3, 4]), Activation::Relu).unwrap();
        assert!(matches!(
            Network::new(vec![l3, l2.clone()]),
            Ok(_)
        ));
        let l4 = Layer::dense(Tensor::zeros(&[3, 5]), Activation::Relu).unwrap();
        let l5 = Layer::dense(Tensor::zeros(&[1, 2]), Activation::Identity).unwrap();
        assert!(matches!(Network::new(vec![l4, l5]), Err(Error::LayerShape { layer: 2, .. })));
        assert!(Network::new(vec![]).is_err());
        let net = Network::new(vec![l2]).unwrap();
        assert!(matches!(
            net.forward(&v(&[1.0]), &OpCounter::new()),
            Err(Error::LayerShape { layer: 1, .. })
        ));
    }

    #[test]
    fn config_json_and_checkpoint() {
        let json = r#"{"input":[1,9],"seed":3,"layers":[
            {"kind":"conv1d","kernel":3,"channels":2,"activation":"tanh"},
            {"kind":"dense","out":4,"activation":"leaky_relu","alpha":0.1},
            {"kind":"dense","out":3,"activation":"softmax"}]}"#;
        let cfg = NetworkConfig::from_json(json).unwrap();
        let net = Network::from_config(&cfg).unwrap();
        assert_eq!(net.layers()[0].op.out_shape(), &[2, 7]);
        assert_eq!(net.layers()[1].op.param_shape(), &[4, 14]);
        assert_eq!(net.layers()[1].activation, Activation::LeakyRelu(0.1));
        assert_eq!(net.output_dim(), 3);
        let ck = Checkpoint::new(cfg.clone(), &net);
        let back = Checkpoint::from_json(&ck.to_json()).unwrap().to_network().unwrap();
        assert_eq!(back, net);
        assert_eq!(NetworkConfig::from_json(&cfg.to_json()).unwrap(), cfg);
        assert!(NetworkConfig::from_json(r#"{"input":[2],"layers":[{"kind":"dense","out":1,"activation":"gelu"}]}"#)
            .and_then(|c| Network::from_config(&c))
            .is_err());
    }

    #[test]
    fn initialization_bounds_and_streams() {
        let cfg = NetworkConfig {
            input: vec![50],
            seed: 0,
            layers: vec![LayerConfig::dense(40, "relu"), LayerConfig::dense(40, "tanh")],
        };
        let net = Network::from_config(&cfg).unwrap();
        let he = (6.0f64 / 50.0).sqrt();
        let glorot = (6.0f64 / 80.0).sqrt();
        assert!(net.layers()[0].theta.max_abs() <= he && net.layers()[0].theta.max_abs() > 0.9 * he);
        assert!(net.layers()[1].theta.max_abs() <= glorot && net.layers()[1].theta.max_abs() > 0.9 * glorot);
        assert_ne!(net.layers()[0].theta.data()[..40], net.layers()[1].theta.data()[..40]);
        assert!(net.layers().iter().all(|l| l.bias.is_zero()));
    }

    #[test]
    fn least_squares_gradient_closed_form() {
        let w = Tensor::matrix(2, 3, vec![0.5, -1.0, 2.0, 0.25, 0.0, -0.75]).unwrap();
        let mut net = Network::new(vec![Layer::dense(w.clone(), Activation::Identity).unwrap()]).unwrap();
        net.bias_mut(1).copy_from_slice(&[0.1, -0.3]);
        let x0 = v(&[1.0, 2.0, -1.0]);
        let y = v(&[0.5, 0.5]);
        let c = OpCounter::new();
        let t = net.forward(&x0, &c).unwrap();
        let (_, g) = loss_and_v(LossKind::Squared, t.output(), &y).unwrap();
        let (grads, _) = net.standard_backprop(&t, &g, &c).unwrap();
        let r: Vec<f64> = (0..2)
            .map(|i| 2.0 * ((0..3).map(|k| w.data()[i * 3 + k] * x0.data()[k]).sum::<f64>() + [0.1, -0.3][i] - 0.5))
            .collect();
        let want: Vec<f64> = r.iter().flat_map(|ri| x0.data().iter().map(move |xk| ri * xk)).collect();
        for (a, b) in grads.theta[0].data().iter().zip(&want) {
            assert!((a - b).abs() < 1e-14);
        }
        assert_eq!(grads.bias[0].data(), &r[..]);
        assert_eq!(c.snapshot().transposed, 0);
        assert_eq!(c.snapshot().weight_adjoint, 1);
    }

    #[test]
    fn zero_seed_gives_zero_gradients() {
        let cfg = NetworkConfig {
            input: vec![3],
            seed: 5,
            layers: vec![LayerConfig::dense(4, "tanh"), LayerConfig::dense(2, "softmax")],
        };
        let net = Network::from_config(&cfg).unwrap();
        let c = OpCounter::new();
        let t = net.forward(&v(&[0.1, 0.2, 0.3]), &c).unwrap();
        let (g, bt) = net.standard_backprop(&t, &Tensor::zeros(&[2]), &c).unwrap();
        assert!(g.is_zero());
        assert!(bt.xi(0).is_none());
        assert_eq!(c.snapshot().transposed, 1);
        assert_eq!(c.snapshot().weight_adjoint, 2);
    }
}
