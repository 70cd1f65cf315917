//! Nonlinearities and their derivative actions.
//!
//! Hidden activations are applied coordinate-wise, so `G'(z)·v = g'(z) ⊙ v`
//! and `G''(z)·v = g''(z) ⊙ v` are diagonal (hence self-adjoint) operators.
//! Softmax is the one non-coordinate-wise activation and is only allowed on
//! the output layer; its derivative `diag(x) − x xᵀ` is symmetric.
//!
//! Kinks use `g'(0) = 0` for ReLU, `g'(0) = α` for leaky ReLU and `g'' = 0`
//! everywhere for the piecewise-linear kinds.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::{loss_gradient_jvp, LossKind};
use crate::penalty::{ResolvedDirection, VSource};
use crate::tensor::{dot, hadamard, Tensor};

pub const DEFAULT_LEAKY_ALPHA: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Activation {
    Relu,
    LeakyRelu(f64),
    Tanh,
    Softplus,
    Identity,
    Softmax,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl Activation {
    pub fn name(&self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::LeakyRelu(_) => "leaky_relu",
            Activation::Tanh => "tanh",
            Activation::Softplus => "softplus",
            Activation::Identity => "identity",
            Activation::Softmax => "softmax",
        }
    }

    /// Parses a config name; `alpha` only applies to `"leaky_relu"`.
    pub fn from_name(name: &str, alpha: Option<f64>) -> Result<Self> {
        Ok(match name {
            "relu" => Activation::Relu,
            "leaky_relu" => Activation::LeakyRelu(alpha.unwrap_or(DEFAULT_LEAKY_ALPHA)),
            "tanh" => Activation::Tanh,
            "softplus" => Activation::Softplus,
            "identity" | "id" | "linear" => Activation::Identity,
            "softmax" => Activation::Softmax,
            other => return Err(Error::UnknownActivation(other.to_string())),
        })
    }

    pub fn is_coordinatewise(&self) -> bool {
        !matches!(self, Activation::Softmax)
    }

    /// Piecewise linear, so `g'' ≡ 0` almost everywhere.
    pub fn is_locally_linear(&self) -> bool {
        matches!(self, Activation::Relu | Activation::LeakyRelu(_) | Activation::Identity)
    }

    /// Whether the kind has a kink at zero.
    pub fn has_kink(&self) -> bool {
        matches!(self, Activation::Relu | Activation::LeakyRelu(_))
    }

    fn scalar(&self, z: f64) -> f64 {
        match *self {
            Activation::Relu => z.max(0.0),
            Activation::LeakyRelu(a) => {
                if z > 0.0 {
                    z
                } else {
                    a * z
                }
            }
            Activation::Tanh => z.tanh(),
            Activation::Softplus => z.max(0.0) + (-z.abs()).exp().ln_1p(),
            Activation::Identity => z,
            Activation::Softmax => unreachable!("softmax is not coordinate-wise"),
        }
    }

    fn scalar_d1(&self, z: f64) -> f64 {
        match *self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu(a) => {
                if z > 0.0 {
                    1.0
                } else {
                    a
                }
            }
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
            Activation::Softplus => sigmoid(z),
            Activation::Identity => 1.0,
            Activation::Softmax => unreachable!("softmax is not coordinate-wise"),
        }
    }

    fn scalar_d2(&self, z: f64) -> f64 {
        match *self {
            Activation::Relu | Activation::LeakyRelu(_) | Activation::Identity => 0.0,
            Activation::Tanh => {
                let t = z.tanh();
                -2.0 * t * (1.0 - t * t)
            }
            Activation::Softplus => {
                let s = sigmoid(z);
                s * (1.0 - s)
            }
            Activation::Softmax => unreachable!("softmax is not coordinate-wise"),
        }
    }

    /// `x = g(z)`.
    pub fn apply(&self, z: &Tensor) -> Tensor {
        match self {
            Activation::Softmax => softmax(z),
            g => z.map(|v| g.scalar(v)),
        }
    }

    /// `g'(z)` as a tensor. Panics for softmax.
    pub fn derivative(&self, z: &Tensor) -> Tensor {
        assert!(self.is_coordinatewise(), "softmax has no coordinate-wise derivative");
        z.map(|v| self.scalar_d1(v))
    }

    /// `g''(z)` as a tensor. Panics for softmax.
    pub fn second_derivative(&self, z: &Tensor) -> Tensor {
        assert!(self.is_coordinatewise(), "softmax has no coordinate-wise derivative");
        z.map(|v| self.scalar_d2(v))
    }

    /// `G'(z)·v`. For softmax this is the (symmetric) softmax Jacobian at `z`.
    pub fn dapply(&self, z: &Tensor, v: &Tensor) -> Result<Tensor> {
        match self {
            Activation::Softmax => softmax_vjp(&softmax(z), v),
            g => hadamard(&g.derivative(z), v),
        }
    }

    /// `G''(z)·v = g''(z) ⊙ v`; identically zero for the locally linear kinds.
    pub fn ddapply(&self, z: &Tensor, v: &Tensor) -> Result<Tensor> {
        match self {
            Activation::Softmax => Err(Error::Unsupported(
                "second derivative action of softmax is not coordinate-wise".into(),
            )),
            g => hadamard(&g.second_derivative(z), v),
        }
    }
}

/// Max-shifted softmax over all entries.
pub fn softmax(z: &Tensor) -> Tensor {
    let m = z.data().iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let e = z.map(|v| (v - m).exp());
    let s = e.sum();
    e.scale(1.0 / s)
}

/// `(diag(x) − x xᵀ) v = x ⊙ v − ⟨x, v⟩ x` for a softmax output `x`.
pub fn softmax_vjp(x: &Tensor, v: &Tensor) -> Result<Tensor> {
    let xv = hadamard(x, v)?;
    let s = dot(x.data(), v.data());
    Ok(xv.zip(x, |a, b| a - s * b))
}

/// `ζ_L`: the final-layer backward seed for direction `v`.
///
/// Coordinate-wise output: `g'(z_L) ⊙ v`. Softmax: `softmax_vjp(x_L, v)`,
/// except for softmax with the NLL loss gradient, where `ζ_L = x_L − y`
/// (labels summing to one).
pub fn zeta_l_init(
    activation: &Activation,
    z_l: &Tensor,
    x_l: &Tensor,
    dir: &ResolvedDirection,
) -> Result<Tensor> {
    match (activation, &dir.source) {
        (Activation::Softmax, VSource::Loss { kind: LossKind::Nll, y }) => {
            if let Some(index) = x_l.data().iter().position(|&p| p <= 0.0) {
                return Err(Error::NonPositiveProbability {
                    index,
                    value: x_l.data()[index],
                });
            }
            if x_l.shape() != y.shape() {
                return Err(Error::shape("zeta_l_init", x_l.shape(), y.shape()));
            }
            Ok(x_l.sub(y))
        }
        (Activation::Softmax, _) => softmax_vjp(x_l, &dir.v),
        (g, _) => g.dapply(z_l, &dir.v),
    }
}

/// `η_L = ∇_{z_L} ℛ`, seeded from `h_L = ∇_{ζ_L} ℛ`.
///
/// * coordinate-wise output: `g''(z_L) ⊙ h_L ⊙ v + g'(z_L) ⊙ (D_x v)(g'(z_L) ⊙ h_L)`,
///   which is zero for a locally linear output with constant `v`;
/// * softmax, constant `v`:
///   `x⊙v⊙h − ⟨x,v⟩(x⊙h) − ⟨x,h⟩(x⊙v) − ⟨x,v⊙h⟩x + 2⟨x,v⟩⟨x,h⟩x`;
/// * softmax with NLL loss gradient: `x⊙h − ⟨x,h⟩x`;
/// * softmax with squared loss gradient: `S(u + 2Sh)` where `S = diag(x) − xxᵀ`
///   and `u` is the constant-`v` inner term.
pub fn eta_l_init(
    activation: &Activation,
    z_l: &Tensor,
    x_l: &Tensor,
    dir: &ResolvedDirection,
    h_l: &Tensor,
) -> Result<Tensor> {
    if h_l.shape() != x_l.shape() {
        return Err(Error::shape("eta_l_init", x_l.shape(), h_l.shape()));
    }
    let v = &dir.v;
    match activation {
        Activation::Softmax => match &dir.source {
            VSource::Constant => Ok(softmax_eta_constant(x_l, v, h_l)),
            VSource::Loss { kind: LossKind::Nll, .. } => softmax_vjp(x_l, h_l),
            VSource::Loss { kind, y } => Ok(softmax_eta_general(x_l, v, h_l, |u| {
                loss_gradient_jvp(*kind, x_l, y, u)
            })),
        },
        g => {
            let curvature = hadamard(&g.ddapply(z_l, h_l)?, v)?;
            match &dir.source {
                VSource::Constant => Ok(curvature),
                VSource::Loss { kind, y } => {
                    let q_l = g.dapply(z_l, h_l)?;
                    let gamma_l = loss_gradient_jvp(*kind, x_l, y, &q_l);
                    Ok(curvature.add(&g.dapply(z_l, &gamma_l)?))
                }
            }
        }
    }
}

fn softmax_eta_constant(x: &Tensor, v: &Tensor, h: &Tensor) -> Tensor {
    let xv = dot(x.data(), v.data());
    let xh = dot(x.data(), h.data());
    let vh = v.zip(h, |a, b| a * b);
    let x_vh = dot(x.data(), vh.data());
    let mut out = x.zip(&vh, |a, b| a * b);
    out.axpy(-xv, &x.zip(h, |a, b| a * b));
    out.axpy(-xh, &x.zip(v, |a, b| a * b));
    out.axpy(2.0 * xv * xh - x_vh, x);
    out
}

/// `S(u + V S h)` with `V = D_x v`, for a softmax output whose direction
/// depends on `x` through `V`.
fn softmax_eta_general(x: &Tensor, v: &Tensor, h: &Tensor, jac_v: impl Fn(&Tensor) -> Tensor) -> Tensor {
    let s = |t: &Tensor| softmax_vjp(x, t).expect("shapes checked");
    let xv = dot(x.data(), v.data());
    let xh = dot(x.data(), h.data());
    let mut u = v.zip(h, |a, b| a * b);
    u.axpy(-xv, h);
    u.axpy(-xh, v);
    s(&u.add(&jac_v(&s(h))))
}
