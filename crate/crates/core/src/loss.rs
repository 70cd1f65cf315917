use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Floor applied to probabilities before dividing by them.
pub const NLL_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    /// `−Σ yⁱ log x_Lⁱ`
    Nll,
    /// `‖x_L − y‖²`
    Squared,
}

impl LossKind {
    pub fn name(self) -> &'static str {
        match self {
            LossKind::Nll => "nll",
            LossKind::Squared => "squared",
        }
    }

    pub fn from_name(s: &str) -> Result<Self> {
        match s {
            "nll" => Ok(LossKind::Nll),
            "squared" | "sq" | "mse" => Ok(LossKind::Squared),
            other => Err(Error::InvalidPenalty(format!("unknown loss {other:?}"))),
        }
    }
}

fn check_probabilities(x: &Tensor) -> Result<()> {
    match x.data().iter().position(|&p| p <= 0.0) {
        Some(index) => Err(Error::NonPositiveProbability {
            index,
            value: x.data()[index],
        }),
        None => Ok(()),
    }
}

/// Loss value and its gradient `v = ∇_{x_L} ℓ`.
///
/// Squared: `ℓ = ‖x − y‖²`, `v = 2(x − y)`.
/// NLL: `ℓ = −Σ yⁱ log xⁱ`, `v = −y ⊘ x`; every `xⁱ` must be positive and is
/// floored at [`NLL_CLAMP`] before the division.
pub fn loss_and_v(kind: LossKind, x: &Tensor, y: &Tensor) -> Result<(f64, Tensor)> {
    if x.shape() != y.shape() {
        return Err(Error::shape("loss_and_v", x.shape(), y.shape()));
    }
    match kind {
        LossKind::Squared => {
            let d = x.sub(y);
            Ok((d.norm_sq(), d.scale(2.0)))
        }
        LossKind::Nll => {
            check_probabilities(x)?;
            let loss = -x
                .data()
                .iter()
                .zip(y.data())
                .map(|(&p, &t)| if t == 0.0 { 0.0 } else { t * p.max(NLL_CLAMP).ln() })
                .sum::<f64>();
            Ok((loss, y.zip(x, |t, p| -t / p.max(NLL_CLAMP))))
        }
    }
}

/// `D_x v` applied to `u` (the Jacobian of the loss gradient is symmetric).
pub(crate) fn loss_gradient_jvp(kind: LossKind, x: &Tensor, y: &Tensor, u: &Tensor) -> Tensor {
    match kind {
        LossKind::Squared => u.scale(2.0),
        LossKind::Nll => {
            let mut out = u.clone();
            for ((o, &p), &t) in out.data_mut().iter_mut().zip(x.data()).zip(y.data()) {
                let p = p.max(NLL_CLAMP);
                *o *= t / (p * p);
            }
            out
        }
    }
}
