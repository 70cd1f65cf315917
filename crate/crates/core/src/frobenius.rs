//! Squared Frobenius norm of the input-output Jacobian,
//! `ℛ = ‖D x_L/D x_0‖_F² = Σᵢ ‖(D x_L/D x_0)*·e⁽ⁱ⁾‖²`.
//!
//! [`frobenius_naive`] runs the three double-backprop passes once per output
//! class. [`frobenius_optimized`] exploits locally linear hidden layers:
//! `η_j` is linear in `γ_j` there, so the per-class forward-backward passes
//! collapse into one pass over accumulated `η̂_L`, and the per-class weight
//! terms `K_j□(q_{j−1}, ζ_j)` are summed on the fly.

use crate::activation::{eta_l_init, Activation};
use crate::double_backprop::{backward_backward, forward_backward, penalty_backward_resolved};
use crate::error::{Error, Result};
use crate::loss::{loss_and_v, LossKind};
use crate::network::{GradientSet, Network};
use crate::ops::{OpCounter, OpCounts};
use crate::penalty::{PenaltyNorm, ResolvedDirection};
use crate::tensor::{hadamard, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct FrobeniusResult {
    pub penalty: f64,
    pub penalty_grads: GradientSet,
    pub loss: Option<f64>,
    pub loss_grads: Option<GradientSet>,
    pub counts: OpCounts,
    /// Largest number of temporary tensors held at once, not counting the
    /// forward trace.
    pub peak_live_tensors: usize,
}

impl FrobeniusResult {
    /// `∇ℒ + λ∇ℛ`.
    pub fn total(&self, lambda: f64) -> GradientSet {
        let mut g = match &self.loss_grads {
            Some(l) => l.clone(),
            None => GradientSet::zeros_like(&self.penalty_grads),
        };
        g.axpy(lambda, &self.penalty_grads);
        g
    }

    /// Report row as written by the CLI.
    pub fn report_json(&self) -> serde_json::Value {
        serde_json::json!({
            "R": self.penalty,
            "count_forward": self.counts.forward,
            "count_transposed": self.counts.transposed,
            "count_weight_adjoint": self.counts.weight_adjoint,
            "peak_live_tensors": self.peak_live_tensors,
        })
    }
}

/// Loss used alongside the Frobenius penalty: NLL for a softmax output,
/// squared error otherwise.
pub fn frobenius_loss_kind(net: &Network) -> LossKind {
    if net.output_activation() == Activation::Softmax {
        LossKind::Nll
    } else {
        LossKind::Squared
    }
}

#[derive(Default)]
struct LiveTensors {
    now: usize,
    peak: usize,
}

impl LiveTensors {
    fn hold(&mut self, n: usize) {
        self.now += n;
        self.peak = self.peak.max(self.now);
    }

    fn release(&mut self, n: usize) {
        self.now -= n;
    }
}

fn check_output(net: &Network) -> Result<()> {
    let g = net.output_activation();
    if g == Activation::Softmax || g == Activation::Identity {
        Ok(())
    } else {
        Err(Error::Precondition(format!(
            "Frobenius penalty needs a softmax or identity output, found {}",
            g.name()
        )))
    }
}

fn labels(include_loss: bool, y: Option<&Tensor>) -> Result<Option<&Tensor>> {
    match (include_loss, y) {
        (true, None) => Err(Error::MissingLabels("the training loss")),
        (true, y) => Ok(y),
        (false, _) => Ok(None),
    }
}

/// One full double-backprop round per output class.
///
/// Costs `L + C(3L − 1)` forward and transposed applications, plus `L − 1`
/// for a separate loss backprop when `include_loss` is set.
pub fn frobenius_naive(net: &Network, x0: &Tensor, include_loss: bool, y: Option<&Tensor>) -> Result<FrobeniusResult> {
    check_output(net)?;
    let y = labels(include_loss, y)?;
    let counter = OpCounter::new();
    let trace = net.forward(x0, &counter)?;
    let shape = net.output_shape().to_vec();
    let mut live = LiveTensors::default();
    let mut penalty = 0.0;
    let mut grads = GradientSet::zeros(net);
    live.hold(2 * net.depth());
    for i in 0..net.output_dim() {
        let dir = ResolvedDirection::constant(Tensor::unit(&shape, i));
        let (r, bt) = penalty_backward_resolved(net, &trace, dir, PenaltyNorm::SquaredNorm, &counter)?;
        live.hold(bt.live_tensors());
        let qh = backward_backward(net, &trace, &bt, PenaltyNorm::SquaredNorm, &counter)?;
        let before = qh.live_tensors();
        live.hold(before);
        let (g, qh) = forward_backward(net, &trace, &bt, qh, &counter)?;
        live.hold(qh.live_tensors() - before);
        penalty += r;
        grads.axpy(1.0, &g);
        live.release(bt.live_tensors() + qh.live_tensors());
    }
    let (loss, loss_grads) = match y {
        None => (None, None),
        Some(y) => {
            let (value, v) = loss_and_v(frobenius_loss_kind(net), trace.output(), y)?;
            (Some(value), Some(net.standard_backprop(&trace, &v, &counter)?.0))
        }
    };
    Ok(FrobeniusResult {
        penalty,
        penalty_grads: grads,
        loss,
        loss_grads,
        counts: counter.snapshot(),
        peak_live_tensors: live.peak,
    })
}

/// Frobenius penalty with accumulated forward-backward pass, for networks
/// whose hidden layers are all locally linear.
///
/// Per class `i`: one penalty pass with `v = e⁽ⁱ⁾`, one backward-backward pass,
/// then `θ̂_j += K_j□(q_{j−1}, ζ_j)` and `η̂_L += η_L⁽ⁱ⁾`; the per-class traces
/// are dropped before the next class. One final pass
/// `γ̂_{j−1} = K_jᵀ(θ_j, η̂_j)`, `η̂_{j−1} = g'(z_{j−1}) ⊙ γ̂_{j−1}` yields
/// `∇_{θ_j}ℛ = θ̂_j + K_j□(x_{j−1}, η̂_j)` and `∇_{b_j}ℛ = η̂_j`.
///
/// The loss gradient needs no pass of its own: `ζ_j` is linear in `v`, so
/// the loss seed `v = Σᵢ vⁱ e⁽ⁱ⁾` is assembled from the per-class `ζ_j`.
/// Total cost is `2L − 1 + 2CL` with or without the loss. With an identity
/// output every `η̂_j` vanishes and the final pass is skipped (`L + 2CL`).
pub fn frobenius_optimized(
    net: &Network,
    x0: &Tensor,
    include_loss: bool,
    y: Option<&Tensor>,
) -> Result<FrobeniusResult> {
    check_output(net)?;
    let layers = net.layers();
    let l = net.depth();
    if let Some((j, bad)) = layers[..l - 1]
        .iter()
        .enumerate()
        .find(|(_, ly)| !ly.activation.is_locally_linear())
    {
        return Err(Error::Precondition(format!(
            "optimized Frobenius penalty needs locally linear hidden layers; layer {} is {}",
            j + 1,
            bad.activation.name()
        )));
    }
    let y = labels(include_loss, y)?;
    let counter = OpCounter::new();
    let trace = net.forward(x0, &counter)?;
    let last = &layers[l - 1];
    let softmax_out = last.activation == Activation::Softmax;
    let shape = net.output_shape().to_vec();
    let mut live = LiveTensors::default();

    // a_j = g'(z_j) for the hidden layers
    let slopes: Vec<Tensor> = layers[..l - 1]
        .iter()
        .enumerate()
        .map(|(j, ly)| ly.activation.derivative(trace.z(j + 1)))
        .collect();
    live.hold(slopes.len());

    let loss_seed = match y {
        None => None,
        Some(y) => Some(loss_and_v(frobenius_loss_kind(net), trace.output(), y)?),
    };

    let mut theta_hat: Vec<Tensor> = layers.iter().map(|ly| Tensor::zeros_like(&ly.theta)).collect();
    let mut eta_hat_l = Tensor::zeros_like(&last.bias);
    let mut loss_zeta: Option<Vec<Tensor>> = loss_seed
        .as_ref()
        .map(|_| layers.iter().map(|ly| Tensor::zeros_like(&ly.bias)).collect());
    live.hold(l + 1 + loss_zeta.as_ref().map_or(0, Vec::len));

    let mut penalty = 0.0;
    for i in 0..net.output_dim() {
        let dir = ResolvedDirection::constant(Tensor::unit(&shape, i));
        let (r, bt) = penalty_backward_resolved(net, &trace, dir, PenaltyNorm::SquaredNorm, &counter)?;
        live.hold(bt.live_tensors());
        let qh = backward_backward(net, &trace, &bt, PenaltyNorm::SquaredNorm, &counter)?;
        live.hold(qh.live_tensors());
        penalty += r;
        for (j, ly) in layers.iter().enumerate() {
            let t = ly
                .op
                .weight_adjoint(qh.q(j), bt.zeta(j + 1), &counter)
                .map_err(|e| e.at_layer(j + 1))?;
            theta_hat[j].axpy(1.0, &t);
        }
        if softmax_out {
            let eta = eta_l_init(&last.activation, trace.z(l), trace.output(), bt.direction(), qh.h(l))
                .map_err(|e| e.at_layer(l))?;
            eta_hat_l.axpy(1.0, &eta);
        }
        if let (Some(acc), Some((_, v))) = (loss_zeta.as_mut(), loss_seed.as_ref()) {
            let vi = v.data()[i];
            for (j, a) in acc.iter_mut().enumerate() {
                a.axpy(vi, bt.zeta(j + 1));
            }
        }
        live.release(bt.live_tensors() + qh.live_tensors());
    }

    let mut theta = Vec::with_capacity(l);
    let mut bias = Vec::with_capacity(l);
    if softmax_out {
        let mut eta = eta_hat_l;
        for j in (1..=l).rev() {
            let ly = &layers[j - 1];
            let mut g = std::mem::replace(&mut theta_hat[j - 1], Tensor::zeros(&[1]));
            g.axpy(
                1.0,
                &ly.op.weight_adjoint(trace.x(j - 1), &eta, &counter).map_err(|e| e.at_layer(j))?,
            );
            theta.push(g);
            if j > 1 {
                let gamma = ly.op.transposed(&ly.theta, &eta, &counter).map_err(|e| e.at_layer(j))?;
                live.hold(1);
                let next = hadamard(&slopes[j - 2], &gamma)?;
                live.release(1);
                bias.push(std::mem::replace(&mut eta, next));
            } else {
                bias.push(eta.clone());
            }
        }
        theta.reverse();
        bias.reverse();
    } else {
        theta = theta_hat;
        bias = layers.iter().map(|ly| Tensor::zeros_like(&ly.bias)).collect();
    }

    let (loss, loss_grads) = match (loss_seed, loss_zeta) {
        (Some((value, _)), Some(zetas)) => {
            let mut lt = Vec::with_capacity(l);
            for (j, ly) in layers.iter().enumerate() {
                lt.push(
                    ly.op
                        .weight_adjoint(trace.x(j), &zetas[j], &counter)
                        .map_err(|e| e.at_layer(j + 1))?,
                );
            }
            (Some(value), Some(GradientSet { theta: lt, bias: zetas }))
        }
        _ => (None, None),
    };

    Ok(FrobeniusResult {
        penalty,
        penalty_grads: GradientSet { theta, bias },
        loss,
        loss_grads,
        counts: counter.snapshot(),
        peak_live_tensors: live.peak,
    })
}
