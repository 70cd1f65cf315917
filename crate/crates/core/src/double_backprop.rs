//! Penalty value and parameter gradients of `ℛ = p((D x_L/D x_0)*·v)`.
//!
//! Three passes over a stored forward trace:
//!
//! 1. [`penalty_backward`]: `ξ_L = v`, `ζ_j = G'(z_j)·ξ_j`,
//!    `ξ_{j−1} = K_jᵀ(θ_j, ζ_j)`, `ℛ = p(ξ_0)`. Costs `L` transposed ops.
//! 2. [`backward_backward`]: `q_0 = ∇p(ξ_0)`, `h_j = K_j(θ_j, q_{j−1})`,
//!    `q_j = G'(z_j)·h_j`. Costs `L` forward ops.
//! 3. [`forward_backward`]: `η_j = g''(z_j) ⊙ h_j ⊙ ξ_j + g'(z_j) ⊙ γ_j`,
//!    `γ_{j−1} = K_jᵀ(θ_j, η_j)`, `∇_{θ_j}ℛ = K_j□(q_{j−1}, ζ_j) + K_j□(x_{j−1}, η_j)`
//!    and `∇_{b_j}ℛ = η_j`. Costs at most `L − 1` transposed ops.
//!
//! Each pass takes only the traces it depends on, so the data flow is
//! enforced by the signatures.

use crate::activation::{eta_l_init, zeta_l_init};
use crate::error::{Error, Result};
use crate::loss::{loss_and_v, LossKind};
use crate::network::{check_trace, BackwardTrace, ForwardTrace, GradientSet, Network};
use crate::ops::{OpCounter, OpCounts};
use crate::penalty::{random_unit, Direction, PenaltyNorm, PenaltySpec, ResolvedDirection};
use crate::tensor::Tensor;

/// `q_j = ∇_{ξ_j}ℛ`, `h_j = ∇_{ζ_j}ℛ`, and after the forward-backward pass
/// `η_j = ∇_{z_j}ℛ`, `γ_j = ∇_{x_j}ℛ`.
#[derive(Debug, Clone, PartialEq)]
pub struct DoubleBackwardTrace {
    q: Vec<Tensor>,
    h: Vec<Tensor>,
    eta: Vec<Tensor>,
    gamma: Vec<Option<Tensor>>,
}

impl DoubleBackwardTrace {
    /// `q_j`, `j = 0..=L`.
    pub fn q(&self, j: usize) -> &Tensor {
        &self.q[j]
    }

    /// `h_j`, `j = 1..=L`.
    pub fn h(&self, j: usize) -> &Tensor {
        &self.h[j - 1]
    }

    /// `η_j`, `j = 1..=L`; `None` before the forward-backward pass.
    pub fn eta(&self, j: usize) -> Option<&Tensor> {
        self.eta.get(j - 1)
    }

    /// `γ_j`, `j = 1..L`. `γ_0` is never formed and `γ_L` is implicit in `η_L`.
    pub fn gamma(&self, j: usize) -> Option<&Tensor> {
        self.gamma.get(j).and_then(Option::as_ref)
    }

    pub(crate) fn live_tensors(&self) -> usize {
        self.q.len() + self.h.len() + self.eta.len() + self.gamma.iter().flatten().count()
    }
}

/// Penalty value and the backward trace for an already resolved direction.
pub fn penalty_backward_resolved(
    net: &Network,
    trace: &ForwardTrace,
    dir: ResolvedDirection,
    p: PenaltyNorm,
    counter: &OpCounter,
) -> Result<(f64, BackwardTrace)> {
    check_trace(net, trace)?;
    let l = net.depth();
    if dir.v.shape() != net.output_shape() {
        return Err(Error::shape("penalty direction", net.output_shape(), dir.v.shape()));
    }
    let zeta_l = zeta_l_init(&net.layers()[l - 1].activation, trace.z(l), trace.output(), &dir)
        .map_err(|e| e.at_layer(l))?;
    let bt = net.backward_from(trace, dir, zeta_l, true, counter)?;
    let xi0 = bt.xi(0).expect("ξ_0 requested");
    Ok((p.value(xi0), bt))
}

/// Resolves `spec.v` at the trace output and runs the penalty pass.
///
/// ```
/// use dbprop::{penalty_backward, Activation, Layer, Network, OpCounter, PenaltySpec, Tensor};
///
/// let eye = Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0])?;
/// let net = Network::new(vec![Layer::dense(eye, Activation::Identity)?])?;
/// let counter = OpCounter::new();
/// let trace = net.forward(&Tensor::vector(vec![0.3, 0.7]), &counter)?;
/// let (r, bt) = penalty_backward(&net, &trace, &PenaltySpec::output_node(1, 1.0), None, &counter)?;
/// assert_eq!(r, 1.0);
/// assert_eq!(bt.xi(0).unwrap().data(), &[1.0, 0.0]);
/// # Ok::<(), dbprop::Error>(())
/// ```
pub fn penalty_backward(
    net: &Network,
    trace: &ForwardTrace,
    spec: &PenaltySpec,
    y: Option<&Tensor>,
    counter: &OpCounter,
) -> Result<(f64, BackwardTrace)> {
    let dir = spec.v.resolve(trace.output(), y)?;
    penalty_backward_resolved(net, trace, dir, spec.p, counter)
}

pub fn backward_backward(
    net: &Network,
    trace: &ForwardTrace,
    bt: &BackwardTrace,
    p: PenaltyNorm,
    counter: &OpCounter,
) -> Result<DoubleBackwardTrace> {
    let xi0 = bt
        .xi(0)
        .ok_or_else(|| Error::Precondition("backward trace has no ξ_0; run penalty_backward".into()))?;
    let l = net.depth();
    let mut q = Vec::with_capacity(l + 1);
    let mut h = Vec::with_capacity(l);
    q.push(p.gradient(xi0)?);
    for (j, layer) in net.layers().iter().enumerate() {
        let hj = layer.op.forward(&layer.theta, &q[j], counter).map_err(|e| e.at_layer(j + 1))?;
        let qj = layer.activation.dapply(trace.z(j + 1), &hj).map_err(|e| e.at_layer(j + 1))?;
        h.push(hj);
        q.push(qj);
    }
    Ok(DoubleBackwardTrace {
        q,
        h,
        eta: Vec::new(),
        gamma: Vec::new(),
    })
}

/// Whether `η_L = 0` and every hidden layer is locally linear, so that all
/// `η_j` and `γ_j` vanish. Decided from the architecture and the direction
/// kind, never from tensor values.
pub fn eta_vanishes(net: &Network, dir: &ResolvedDirection) -> bool {
    let layers = net.layers();
    let (last, hidden) = layers.split_last().expect("non-empty network");
    dir.is_constant()
        && last.activation.is_coordinatewise()
        && last.activation.is_locally_linear()
        && hidden.iter().all(|l| l.activation.is_locally_linear())
}

/// Gradients of `ℛ` with respect to every `θ_j` and `b_j`, plus the completed
/// double-backward trace.
pub fn forward_backward(
    net: &Network,
    trace: &ForwardTrace,
    bt: &BackwardTrace,
    qh: DoubleBackwardTrace,
    counter: &OpCounter,
) -> Result<(GradientSet, DoubleBackwardTrace)> {
    forward_backward_impl(net, trace, bt, qh, counter, false)
}

/// With `force_curvature`, the `g''(z_j) ⊙ h_j ⊙ ξ_j` term is evaluated even
/// for locally linear layers, where it is identically zero.
pub(crate) fn forward_backward_impl(
    net: &Network,
    trace: &ForwardTrace,
    bt: &BackwardTrace,
    mut qh: DoubleBackwardTrace,
    counter: &OpCounter,
    force_curvature: bool,
) -> Result<(GradientSet, DoubleBackwardTrace)> {
    let l = net.depth();
    if qh.q.len() != l + 1 || bt.depth() != l {
        return Err(Error::Precondition("traces do not match the network depth".into()));
    }
    let layers = net.layers();
    let mut theta = vec![Tensor::zeros(&[1]); l];
    let mut bias = vec![Tensor::zeros(&[1]); l];

    if !force_curvature && eta_vanishes(net, bt.direction()) {
        for (j, layer) in layers.iter().enumerate() {
            theta[j] = layer
                .op
                .weight_adjoint(&qh.q[j], bt.zeta(j + 1), counter)
                .map_err(|e| e.at_layer(j + 1))?;
            bias[j] = Tensor::zeros_like(&layer.bias);
        }
        qh.eta = layers.iter().map(|ly| Tensor::zeros_like(&ly.bias)).collect();
        qh.gamma = vec![None; l];
        return Ok((GradientSet { theta, bias }, qh));
    }

    let last = &layers[l - 1];
    let mut eta = vec![Tensor::zeros(&[1]); l];
    let mut gamma: Vec<Option<Tensor>> = vec![None; l];
    eta[l - 1] = eta_l_init(&last.activation, trace.z(l), trace.output(), bt.direction(), qh.h(l))
        .map_err(|e| e.at_layer(l))?;
    for j in (1..=l).rev() {
        let layer = &layers[j - 1];
        let eta_j = &eta[j - 1];
        let mut g = layer
            .op
            .weight_adjoint(&qh.q[j - 1], bt.zeta(j), counter)
            .map_err(|e| e.at_layer(j))?;
        g.axpy(
            1.0,
            &layer.op.weight_adjoint(trace.x(j - 1), eta_j, counter).map_err(|e| e.at_layer(j))?,
        );
        theta[j - 1] = g;
        bias[j - 1] = eta_j.clone();
        if j > 1 {
            let below = &layers[j - 2];
            let gamma_prev = layer.op.transposed(&layer.theta, eta_j, counter).map_err(|e| e.at_layer(j))?;
            let mut eta_prev = below
                .activation
                .dapply(trace.z(j - 1), &gamma_prev)
                .map_err(|e| e.at_layer(j - 1))?;
            if force_curvature || !below.activation.is_locally_linear() {
                let xi = bt.xi(j - 1).expect("hidden ξ present");
                let curv = below
                    .activation
                    .ddapply(trace.z(j - 1), qh.h(j - 1))
                    .map_err(|e| e.at_layer(j - 1))?;
                eta_prev = eta_prev.add(&crate::tensor::hadamard(&curv, xi)?);
            }
            eta[j - 2] = eta_prev;
            gamma[j - 1] = Some(gamma_prev);
        }
    }
    qh.eta = eta;
    qh.gamma = gamma;
    Ok((GradientSet { theta, bias }, qh))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DoubleBackpropResult {
    /// Unscaled penalty `ℛ`.
    pub penalty: f64,
    pub loss: Option<f64>,
    /// `∇ℒ + λ∇ℛ` (just `λ∇ℛ` without a loss).
    pub grads: GradientSet,
    /// Unscaled `∇ℛ`.
    pub penalty_grads: GradientSet,
    pub counts: OpCounts,
}

/// Full training-step gradient for `ℒ + λℛ` on one sample.
///
/// When the penalty direction is the gradient of the same loss that is being
/// trained (classical double backpropagation), the loss gradient reuses the
/// penalty pass's `ζ_j` and costs no extra linear operations, for `4L − 1`
/// in total. Any other penalty with a loss runs a separate backprop pass,
/// for `5L − 2`.
///
/// ```
/// use dbprop::{double_backprop, LayerConfig, LossKind, Network, NetworkConfig, PenaltySpec, Tensor};
///
/// let cfg = NetworkConfig {
///     input: vec![3],
///     seed: 1,
///     layers: vec![
///         LayerConfig::dense(5, "tanh"),
///         LayerConfig::dense(4, "tanh"),
///         LayerConfig::dense(2, "softmax"),
///     ],
/// };
/// let net = Network::from_config(&cfg)?;
/// let x0 = Tensor::vector(vec![0.2, -0.4, 1.0]);
/// let y = Tensor::vector(vec![0.0, 1.0]);
/// let spec = PenaltySpec::classical(LossKind::Nll, 0.1);
/// let out = double_backprop(&net, &x0, Some(&y), &spec, Some(LossKind::Nll))?;
/// assert_eq!(out.counts.linear(), 4 * 3 - 1);
/// # Ok::<(), dbprop::Error>(())
/// ```
pub fn double_backprop(
    net: &Network,
    x0: &Tensor,
    y: Option<&Tensor>,
    spec: &PenaltySpec,
    loss: Option<LossKind>,
) -> Result<DoubleBackpropResult> {
    let counter = OpCounter::new();
    let trace = net.forward(x0, &counter)?;
    let (penalty, bt) = penalty_backward(net, &trace, spec, y, &counter)?;
    let qh = backward_backward(net, &trace, &bt, spec.p, &counter)?;
    let (penalty_grads, _) = forward_backward(net, &trace, &bt, qh, &counter)?;

    let (loss_value, mut grads) = match loss {
        None => (None, GradientSet::zeros(net)),
        Some(kind) => {
            let y = y.ok_or(Error::MissingLabels("the training loss"))?;
            let (value, v) = loss_and_v(kind, trace.output(), y)?;
            let g = if spec.v == Direction::LossGradient(kind) {
                net.loss_gradients(&trace, &bt, &counter)?
            } else {
                net.standard_backprop(&trace, &v, &counter)?.0
            };
            (Some(value), g)
        }
    };
    grads.axpy(spec.lambda, &penalty_grads);
    Ok(DoubleBackpropResult {
        penalty,
        loss: loss_value,
        grads,
        penalty_grads,
        counts: counter.snapshot(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct OperatorNormResult {
    /// `‖(D x_L/D x_0)*·v‖` for the final iterate `v`.
    pub penalty: f64,
    /// Gradient with `v` held constant.
    pub grads: GradientSet,
    pub v: Tensor,
    pub counts: OpCounts,
}

/// Power-iteration estimate of the spectral norm of the input-output Jacobian.
///
/// Starts from a seeded uniformly random unit `v`; each of the
/// `iterations − 1` updates runs a penalty pass and a backward-backward pass
/// with `p = ‖·‖`, whose last output `q_L = J Jᵀv/‖Jᵀv‖` is normalized into
/// the next `v`. The returned penalty never exceeds the true norm.
pub fn operator_norm_penalty(net: &Network, x0: &Tensor, iterations: usize, seed: u64) -> Result<OperatorNormResult> {
    if iterations == 0 {
        return Err(Error::Precondition("at least one power iteration is required".into()));
    }
    let counter = OpCounter::new();
    let trace = net.forward(x0, &counter)?;
    let l = net.depth();
    let mut v = random_unit(net.output_shape(), seed);
    for _ in 1..iterations {
        let (_, bt) = penalty_backward_resolved(net, &trace, ResolvedDirection::constant(v), PenaltyNorm::Norm, &counter)?;
        let qh = backward_backward(net, &trace, &bt, PenaltyNorm::Norm, &counter)?;
        let n = qh.q(l).norm();
        if n == 0.0 {
            return Err(Error::ZeroNormGradient);
        }
        v = qh.q(l).scale(1.0 / n);
    }
    let dir = ResolvedDirection::constant(v.clone());
    let (penalty, bt) = penalty_backward_resolved(net, &trace, dir, PenaltyNorm::Norm, &counter)?;
    let qh = backward_backward(net, &trace, &bt, PenaltyNorm::Norm, &counter)?;
    let (grads, _) = forward_backward(net, &trace, &bt, qh, &counter)?;
    Ok(OperatorNormResult {
        penalty,
        grads,
        v,
        counts: counter.snapshot(),
    })
}
