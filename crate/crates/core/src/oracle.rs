//! Independent checks: central finite differences, brute-force Jacobians and
//! a dense spectral-norm reference.

use nalgebra::DMatrix;

use crate::activation::Activation;
use crate::double_backprop::penalty_backward_resolved;
use crate::error::{Error, Result};
use crate::network::{ForwardTrace, GradientSet, Network};
use crate::ops::OpCounter;
use crate::penalty::{PenaltyNorm, ResolvedDirection};
use crate::tensor::Tensor;

/// Largest Jacobian side [`brute_force_jacobian`] will assemble.
pub const JACOBIAN_GUARD: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdConfig {
    /// Central-difference step.
    pub epsilon: f64,
    /// Pre-activations of kinked layers closer than this to zero are treated
    /// as sitting on the kink.
    pub skip_kink_radius: f64,
}

impl Default for FdConfig {
    fn default() -> Self {
        FdConfig {
            epsilon: 1e-5,
            skip_kink_radius: 1e-4,
        }
    }
}

/// One scalar parameter: layer `1..=L`, weight or bias, flat index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamIndex {
    pub layer: usize,
    pub bias: bool,
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FdReport {
    pub grads: GradientSet,
    /// Coordinates whose perturbation crossed a kink; their entries in
    /// `grads` are zero and must not be compared.
    pub skipped: Vec<ParamIndex>,
}

/// `(f(θ + εeₖ) − f(θ − εeₖ)) / 2ε` for every coordinate.
///
/// ```
/// let g = dbprop::oracle::central_diff(|t| t[0] * t[0], &[3.0], 1e-5);
/// assert!((g[0] - 6.0).abs() < 1e-9);
/// ```
pub fn central_diff(mut f: impl FnMut(&[f64]) -> f64, theta: &[f64], epsilon: f64) -> Vec<f64> {
    let mut t = theta.to_vec();
    (0..t.len())
        .map(|k| {
            let orig = t[k];
            t[k] = orig + epsilon;
            let fp = f(&t);
            t[k] = orig - epsilon;
            let fm = f(&t);
            t[k] = orig;
            (fp - fm) / (2.0 * epsilon)
        })
        .collect()
}

fn crosses_kink(net: &Network, base: &ForwardTrace, moved: &ForwardTrace, radius: f64) -> bool {
    net.layers().iter().enumerate().any(|(j, l)| {
        matches!(l.activation, Activation::Relu | Activation::LeakyRelu(_))
            && base
                .z(j + 1)
                .data()
                .iter()
                .zip(moved.z(j + 1).data())
                .any(|(&a, &b)| (a > 0.0) != (b > 0.0) || (a.abs() < radius && a != b))
    })
}

/// Central differences of `f(net, x0, y)` with respect to every weight and
/// bias of `net`.
///
/// For networks with kinked activations, a coordinate is skipped when either
/// perturbed network changes the sign of a kinked pre-activation at `x0`, or
/// moves one that lies within `skip_kink_radius` of zero.
pub fn finite_diff_param_grad<F>(
    net: &Network,
    x0: &Tensor,
    y: Option<&Tensor>,
    f: F,
    cfg: &FdConfig,
) -> Result<FdReport>
where
    F: Fn(&Network, &Tensor, Option<&Tensor>) -> Result<f64>,
{
    if !(cfg.epsilon > 0.0) {
        return Err(Error::Precondition("finite-difference step must be positive".into()));
    }
    let scratch = OpCounter::new();
    let kinked = net.layers().iter().any(|l| l.activation.has_kink());
    let base = net.forward(x0, &scratch)?;
    let mut grads = GradientSet::zeros(net);
    let mut skipped = Vec::new();
    let mut work = net.clone();
    for layer in 1..=net.depth() {
        for bias in [false, true] {
            let n = if bias {
                net.layers()[layer - 1].bias.len()
            } else {
                net.layers()[layer - 1].theta.len()
            };
            for index in 0..n {
                let mut eval = |delta: f64| -> Result<(f64, bool)> {
                    let slot = if bias { work.bias_mut(layer) } else { work.theta_mut(layer) };
                    let orig = slot[index];
                    slot[index] = orig + delta;
                    let out = f(&work, x0, y);
                    let flip = kinked
                        && work
                            .forward(x0, &scratch)
                            .map(|t| crosses_kink(&work, &base, &t, cfg.skip_kink_radius))
                            .unwrap_or(true);
                    let slot = if bias { work.bias_mut(layer) } else { work.theta_mut(layer) };
                    slot[index] = orig;
                    Ok((out?, flip))
                };
                let (fp, flip_p) = eval(cfg.epsilon)?;
                let (fm, flip_m) = eval(-cfg.epsilon)?;
                if flip_p || flip_m {
                    skipped.push(ParamIndex { layer, bias, index });
                    continue;
                }
                let g = (fp - fm) / (2.0 * cfg.epsilon);
                let target = if bias {
                    &mut grads.bias[layer - 1]
                } else {
                    &mut grads.theta[layer - 1]
                };
                target.data_mut()[index] = g;
            }
        }
    }
    Ok(FdReport { grads, skipped })
}

/// Entries below this magnitude are compared absolutely rather than
/// relatively.
pub const REL_ERROR_FLOOR: f64 = 1e-8;

/// `max_k |aₖ − fₖ| / max(|aₖ|, |fₖ|, floor)` over all non-skipped coordinates.
pub fn max_rel_error(analytic: &GradientSet, fd: &GradientSet, skipped: &[ParamIndex]) -> f64 {
    let mut worst = 0.0f64;
    for (j, (at, ft)) in analytic.theta.iter().zip(&fd.theta).enumerate() {
        for (bias, a, f) in [(false, at, ft), (true, &analytic.bias[j], &fd.bias[j])] {
            for (index, (&x, &y)) in a.data().iter().zip(f.data()).enumerate() {
                if skipped.contains(&ParamIndex { layer: j + 1, bias, index }) {
                    continue;
                }
                let denom = x.abs().max(y.abs()).max(REL_ERROR_FLOOR);
                worst = worst.max((x - y).abs() / denom);
            }
        }
    }
    worst
}

/// Jacobian `D x_L/D x_0` assembled two independent ways, as `[C, n]`
/// matrices over the flattened output and input.
#[derive(Debug, Clone, PartialEq)]
pub struct JacobianPair {
    /// Row `i` is `ξ_0` of a penalty pass with `v = e⁽ⁱ⁾`.
    pub rows: Tensor,
    /// Column `k` is a central difference of the output along input `k`.
    pub columns: Tensor,
}

impl JacobianPair {
    /// `‖rows − columns‖_F / ‖rows‖_F`.
    pub fn rel_disagreement(&self) -> f64 {
        let n = self.rows.norm();
        let d = self.rows.sub(&self.columns).norm();
        if n == 0.0 {
            d
        } else {
            d / n
        }
    }
}

pub fn brute_force_jacobian(net: &Network, x0: &Tensor) -> Result<JacobianPair> {
    let c = net.output_dim();
    let n = x0.len();
    if c > JACOBIAN_GUARD || n > JACOBIAN_GUARD {
        return Err(Error::DimensionGuard {
            rows: c,
            cols: n,
            limit: JACOBIAN_GUARD,
        });
    }
    let counter = OpCounter::new();
    let trace = net.forward(x0, &counter)?;
    let mut rows = vec![0.0; c * n];
    for i in 0..c {
        let dir = ResolvedDirection::constant(Tensor::unit(net.output_shape(), i));
        let (_, bt) = penalty_backward_resolved(net, &trace, dir, PenaltyNorm::SquaredNorm, &counter)?;
        rows[i * n..(i + 1) * n].copy_from_slice(bt.xi(0).expect("ξ_0").data());
    }
    let eps = FdConfig::default().epsilon;
    let mut cols = vec![0.0; c * n];
    let mut x = x0.clone();
    for k in 0..n {
        let orig = x.data()[k];
        x.data_mut()[k] = orig + eps;
        let fp = net.forward(&x, &counter)?.output().clone();
        x.data_mut()[k] = orig - eps;
        let fm = net.forward(&x, &counter)?.output().clone();
        x.data_mut()[k] = orig;
        for i in 0..c {
            cols[i * n + k] = (fp.data()[i] - fm.data()[i]) / (2.0 * eps);
        }
    }
    Ok(JacobianPair {
        rows: Tensor::from_parts(vec![c, n], rows),
        columns: Tensor::from_parts(vec![c, n], cols),
    })
}

/// Largest singular value of a `[m, n]` matrix, as the square root of the
/// top eigenvalue of `WᵀW` from a symmetric eigendecomposition.
pub fn spectral_norm(w: &Tensor) -> Result<f64> {
    let (m, n) = match *w.shape() {
        [m, n] => (m, n),
        _ => {
            return Err(Error::InvalidShape {
                shape: w.shape().to_vec(),
                reason: "spectral norm needs a matrix".into(),
            })
        }
    };
    let a = DMatrix::from_row_slice(m, n, w.data());
    let gram = a.transpose() * &a;
    let top = gram.symmetric_eigenvalues().iter().cloned().fold(0.0f64, f64::max);
    Ok(top.sqrt())
}
