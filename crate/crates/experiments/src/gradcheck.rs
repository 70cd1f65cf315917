//! Analytic penalty gradients against central finite differences on a fixed
//! grid of seeded networks.

use anyhow::Result;
use dbprop::oracle::{finite_diff_param_grad, max_rel_error, FdConfig};
use dbprop::{double_backprop, penalty_backward, LossKind, Network, OpCounter, PenaltySpec, Tensor};
use serde::Serialize;

use crate::opcount::mlp;

/// Largest accepted relative error.
pub const TOLERANCE: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Case {
    /// Softmax output, NLL loss, penalty on the loss gradient.
    ClassicalNll,
    /// Identity output, squared loss, penalty on output node 1.
    UnitIdentity,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradcheckRow {
    #[serde(rename = "L")]
    pub l: usize,
    pub activation: &'static str,
    pub case: Case,
    /// For `∇ℛ`.
    pub max_rel_err_penalty: f64,
    /// For `∇(ℒ + λℛ)`.
    pub max_rel_err_total: f64,
    pub skipped: usize,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradcheckReport {
    pub seed: u64,
    pub lambda: f64,
    pub rows: Vec<GradcheckRow>,
    pub all_pass: bool,
}

impl GradcheckReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serialization");
        s.push('\n');
        s
    }
}

const LAMBDA: f64 = 0.3;
const CLASSES: usize = 3;

fn objective(net: &Network, x0: &Tensor, y: &Tensor, spec: &PenaltySpec, loss: LossKind, with_loss: bool) -> Result<f64, dbprop::Error> {
    let c = OpCounter::new();
    let t = net.forward(x0, &c)?;
    let (r, _) = penalty_backward(net, &t, spec, Some(y), &c)?;
    if !with_loss {
        return Ok(r);
    }
    let (l, _) = dbprop::loss_and_v(loss, t.output(), y)?;
    Ok(l + spec.lambda * r)
}

pub fn check_one(l: usize, activation: &'static str, case: Case, seed: u64) -> Result<GradcheckRow> {
    let net_seed = seed.wrapping_mul(31).wrapping_add(l as u64 * 7 + (activation.len() as u64));
    let (output, loss, spec) = match case {
        Case::ClassicalNll => ("softmax", LossKind::Nll, PenaltySpec::classical(LossKind::Nll, LAMBDA)),
        Case::UnitIdentity => ("identity", LossKind::Squared, PenaltySpec::output_node(1, LAMBDA)),
    };
    let net = mlp(4, 6, l, CLASSES, activation, output, net_seed)?;
    let x0 = dbprop::penalty::random_unit(&[4], net_seed ^ 0x5eed).scale(1.5);
    let y = match case {
        Case::ClassicalNll => Tensor::unit(&[CLASSES], (seed as usize + l) % CLASSES),
        Case::UnitIdentity => dbprop::penalty::random_unit(&[CLASSES], net_seed ^ 0xfeed),
    };
    let out = double_backprop(&net, &x0, Some(&y), &spec, Some(loss))?;
    let cfg = FdConfig::default();
    let fd_r = finite_diff_param_grad(&net, &x0, Some(&y), |n, x, y| objective(n, x, y.unwrap(), &spec, loss, false), &cfg)?;
    let fd_t = finite_diff_param_grad(&net, &x0, Some(&y), |n, x, y| objective(n, x, y.unwrap(), &spec, loss, true), &cfg)?;
    let max_rel_err_penalty = max_rel_error(&out.penalty_grads, &fd_r.grads, &fd_r.skipped);
    let max_rel_err_total = max_rel_error(&out.grads, &fd_t.grads, &fd_t.skipped);
    Ok(GradcheckRow {
        l,
        activation,
        case,
        max_rel_err_penalty,
        max_rel_err_total,
        skipped: fd_r.skipped.len() + fd_t.skipped.len(),
        pass: max_rel_err_penalty <= TOLERANCE && max_rel_err_total <= TOLERANCE,
    })
}

/// The twelve configurations `L ∈ {2, 3, 4}` × {tanh, softplus} × {classical
/// softmax + NLL, unit-vector penalty on an identity output}.
pub fn gradcheck(seed: u64) -> Result<GradcheckReport> {
    let mut rows = Vec::new();
    for l in [2, 3, 4] {
        for activation in ["tanh", "softplus"] {
            for case in [Case::ClassicalNll, Case::UnitIdentity] {
                rows.push(check_one(l, activation, case, seed)?);
            }
        }
    }
    let all_pass = rows.iter().all(|r| r.pass);
    Ok(GradcheckReport {
        seed,
        lambda: LAMBDA,
        rows,
        all_pass,
    })
}
