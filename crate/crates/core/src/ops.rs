//! Bilinear layer operators `K(θ, x)` with their two adjoints.
//!
//! For a bilinear `K: P × X → Y` there are two linear adjoints:
//!
//! * the *transposed* operator `Kᵀ(θ, ·)`, the adjoint of `x ↦ K(θ, x)`,
//!   satisfying `⟨K(θ,x), y⟩ = ⟨x, Kᵀ(θ,y)⟩`;
//! * the *weight-adjoint* `K□(·, y)`, the adjoint of `θ ↦ K(θ, x)`,
//!   satisfying `⟨K(θ,x), y⟩ = ⟨θ, K□(x,y)⟩`.
//!
//! The weight-adjoint of `Kᵀ` is again `K□`, which is what lets the
//! double-backward passes reuse these three kernels for everything.
//!
//! Every application is tallied on an [`OpCounter`] passed in by the caller,
//! so two passes over the same network can be counted independently.

use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{dot, inner_product, Tensor};

/// Exact tally of operator applications.
#[derive(Debug, Default)]
pub struct OpCounter {
    forward: AtomicU64,
    transposed: AtomicU64,
    weight_adjoint: AtomicU64,
}

/// A snapshot of an [`OpCounter`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpCounts {
    pub forward: u64,
    pub transposed: u64,
    pub weight_adjoint: u64,
}

impl OpCounts {
    /// Forward plus transposed applications: the unit of the runtime model.
    /// Weight-adjoints are excluded.
    pub fn linear(&self) -> u64 {
        self.forward + self.transposed
    }

    pub fn total(&self) -> u64 {
        self.forward + self.transposed + self.weight_adjoint
    }
}

impl std::ops::Sub for OpCounts {
    type Output = OpCounts;

    fn sub(self, rhs: OpCounts) -> OpCounts {
        OpCounts {
            forward: self.forward - rhs.forward,
            transposed: self.transposed - rhs.transposed,
            weight_adjoint: self.weight_adjoint - rhs.weight_adjoint,
        }
    }
}

impl OpCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn n_forward(&self) -> u64 {
        self.forward.load(Ordering::Relaxed)
    }

    pub fn n_transposed(&self) -> u64 {
        self.transposed.load(Ordering::Relaxed)
    }

    pub fn n_weight_adjoint(&self) -> u64 {
        self.weight_adjoint.load(Ordering::Relaxed)
    }

    pub fn total(&self) -> u64 {
        self.snapshot().total()
    }

    pub fn snapshot(&self) -> OpCounts {
        OpCounts {
            forward: self.n_forward(),
            transposed: self.n_transposed(),
            weight_adjoint: self.n_weight_adjoint(),
        }
    }

    fn bump_forward(&self) {
        self.forward.fetch_add(1, Ordering::Relaxed);
    }

    fn bump_transposed(&self) {
        self.transposed.fetch_add(1, Ordering::Relaxed);
    }

    fn bump_weight_adjoint(&self) {
        self.weight_adjoint.fetch_add(1, Ordering::Relaxed);
    }
}

fn matrix_dims(w: &Tensor) -> Result<(usize, usize)> {
    match *w.shape() {
        [m, n] => Ok((m, n)),
        _ => Err(Error::InvalidShape {
            shape: w.shape().to_vec(),
            reason: "dense weights must be a matrix".into(),
        }),
    }
}

/// `W x` for `W: [m, n]`; `x` may have any shape with `n` elements.
pub fn dense_forward(w: &Tensor, x: &Tensor, counter: &OpCounter) -> Result<Tensor> {
    let (m, n) = matrix_dims(w)?;
    if x.len() != n {
        return Err(Error::shape("dense_forward", w.shape(), x.shape()));
    }
    let (wd, xd) = (w.data(), x.data());
    let out = (0..m).map(|r| dot(&wd[r * n..(r + 1) * n], xd)).collect();
    counter.bump_forward();
    Ok(Tensor::from_parts(vec![m], out))
}

/// `Wᵀ y`, returned as a flat `[n]` vector.
pub fn dense_transposed(w: &Tensor, y: &Tensor, counter: &OpCounter) -> Result<Tensor> {
    let (m, n) = matrix_dims(w)?;
    if y.len() != m {
        return Err(Error::shape("dense_transposed", w.shape(), y.shape()));
    }
    let (wd, yd) = (w.data(), y.data());
    let mut out = vec![0.0; n];
    for (r, &yr) in yd.iter().enumerate() {
        for (o, &wv) in out.iter_mut().zip(&wd[r * n..(r + 1) * n]) {
            *o += wv * yr;
        }
    }
    counter.bump_transposed();
    Ok(Tensor::from_parts(vec![n], out))
}

/// Outer product `y xᵀ`, the weight-adjoint of `W ↦ W x`.
pub fn dense_weight_adjoint(x: &Tensor, y: &Tensor, counter: &OpCounter) -> Result<Tensor> {
    let (m, n) = (y.len(), x.len());
    let mut out = Vec::with_capacity(m * n);
    for &yr in y.data() {
        out.extend(x.data().iter().map(|&xc| yr * xc));
    }
    counter.bump_weight_adjoint();
    Ok(Tensor::from_parts(vec![m, n], out))
}

fn kernel_dims(w: &Tensor) -> Result<(usize, usize, usize)> {
    match *w.shape() {
        [k, ci, co] => Ok((k, ci, co)),
        _ => Err(Error::InvalidShape {
            shape: w.shape().to_vec(),
            reason: "conv1d kernel must be [k, c_in, c_out]".into(),
        }),
    }
}

/// Channels and length of a signal; a 1-D tensor is a single channel.
fn signal_dims(x: &Tensor) -> Result<(usize, usize)> {
    match *x.shape() {
        [n] => Ok((1, n)),
        [c, n] => Ok((c, n)),
        _ => Err(Error::InvalidShape {
            shape: x.shape().to_vec(),
            reason: "conv1d signals must be [n] or [channels, n]".into(),
        }),
    }
}

/// Valid, stride-1, multi-channel cross-correlation:
/// `out[o, t] = Σ_{s, c} w[s, c, o] · x[c, t + s]`.
pub fn conv1d_forward(w: &Tensor, x: &Tensor, counter: &OpCounter) -> Result<Tensor> {
    let (k, ci, co) = kernel_dims(w)?;
    let (xc, n) = signal_dims(x)?;
    if xc != ci || n < k {
        return Err(Error::shape("conv1d_forward", w.shape(), x.shape()));
    }
    let n_out = n - k + 1;
    let (wd, xd) = (w.data(), x.data());
    let mut out = vec![0.0; co * n_out];
    for s in 0..k {
        for c in 0..ci {
            let xrow = &xd[c * n + s..c * n + s + n_out];
            for o in 0..co {
                let wv = wd[(s * ci + c) * co + o];
                for (acc, &xv) in out[o * n_out..(o + 1) * n_out].iter_mut().zip(xrow) {
                    *acc += wv * xv;
                }
            }
        }
    }
    counter.bump_forward();
    Ok(Tensor::from_parts(vec![co, n_out], out))
}

/// Adjoint of [`conv1d_forward`] in the signal: a full-padded correlation
/// with the spatially flipped kernel and channel roles swapped.
/// Returns `[c_in, n_out + k - 1]`.
pub fn conv1d_transposed(w: &Tensor, y: &Tensor, counter: &OpCounter) -> Result<Tensor> {
    let (k, ci, co) = kernel_dims(w)?;
    let (yc, n_out) = signal_dims(y)?;
    if yc != co {
        return Err(Error::shape("conv1d_transposed", w.shape(), y.shape()));
    }
    let n = n_out + k - 1;
    let (wd, yd) = (w.data(), y.data());
    let mut out = vec![0.0; ci * n];
    for s in 0..k {
        for c in 0..ci {
            let orow = &mut out[c * n + s..c * n + s + n_out];
            for o in 0..co {
                let wv = wd[(s * ci + c) * co + o];
                for (acc, &yv) in orow.iter_mut().zip(&yd[o * n_out..(o + 1) * n_out]) {
                    *acc += wv * yv;
                }
            }
        }
    }
    counter.bump_transposed();
    Ok(Tensor::from_parts(vec![ci, n], out))
}

/// Adjoint of [`conv1d_forward`] in the kernel (the "filter gradient"):
/// `R[s, c, o] = Σ_t x[c, t + s] · y[o, t]`. The kernel width is inferred
/// from the signal lengths.
pub fn conv1d_weight_adjoint(x: &Tensor, y: &Tensor, counter: &OpCounter) -> Result<Tensor> {
    let (ci, n) = signal_dims(x)?;
    let (co, n_out) = signal_dims(y)?;
    if n_out > n {
        return Err(Error::shape("conv1d_weight_adjoint", x.shape(), y.shape()));
    }
    let k = n - n_out + 1;
    let (xd, yd) = (x.data(), y.data());
    let mut out = vec![0.0; k * ci * co];
    for s in 0..k {
        for c in 0..ci {
            let xrow = &xd[c * n + s..c * n + s + n_out];
            for o in 0..co {
                out[(s * ci + c) * co + o] = dot(xrow, &yd[o * n_out..(o + 1) * n_out]);
            }
        }
    }
    counter.bump_weight_adjoint();
    Ok(Tensor::from_parts(vec![k, ci, co], out))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OperatorKind {
    Dense,
    Conv1d,
}

/// Shape-checked descriptor of one layer's bilinear kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct BilinearOperator {
    kind: OperatorKind,
    param_shape: Vec<usize>,
    in_shape: Vec<usize>,
    out_shape: Vec<usize>,
}

impl BilinearOperator {
    /// Dense layer `W x` with `out` outputs; inputs of any shape are flattened.
    pub fn dense(in_shape: &[usize], out: usize) -> Result<Self> {
        let n: usize = in_shape.iter().product();
        if in_shape.is_empty() || n == 0 || out == 0 {
            return Err(Error::InvalidShape {
                shape: in_shape.to_vec(),
                reason: "dense layer needs nonempty input and output".into(),
            });
        }
        Ok(BilinearOperator {
            kind: OperatorKind::Dense,
            param_shape: vec![out, n],
            in_shape: in_shape.to_vec(),
            out_shape: vec![out],
        })
    }

    /// Valid 1-D convolution with `kernel` taps and `channels` output maps.
    /// A 1-D input is a single channel.
    pub fn conv1d(in_shape: &[usize], kernel: usize, channels: usize) -> Result<Self> {
        let (ci, n) = match *in_shape {
            [n] => (1, n),
            [c, n] => (c, n),
            _ => {
                return Err(Error::InvalidShape {
                    shape: in_shape.to_vec(),
                    reason: "conv1d input must be [n] or [channels, n]".into(),
                })
            }
        };
        if kernel == 0 || channels == 0 || ci == 0 || n < kernel {
            return Err(Error::InvalidShape {
                shape: in_shape.to_vec(),
                reason: format!("conv1d kernel {kernel} does not fit the input"),
            });
        }
        Ok(BilinearOperator {
            kind: OperatorKind::Conv1d,
            param_shape: vec![kernel, ci, channels],
            in_shape: in_shape.to_vec(),
            out_shape: vec![channels, n - kernel + 1],
        })
    }

    pub fn kind(&self) -> OperatorKind {
        self.kind
    }

    pub fn param_shape(&self) -> &[usize] {
        &self.param_shape
    }

    pub fn in_shape(&self) -> &[usize] {
        &self.in_shape
    }

    pub fn out_shape(&self) -> &[usize] {
        &self.out_shape
    }

    fn expect(context: &'static str, got: &Tensor, want: &[usize]) -> Result<()> {
        if got.shape() != want {
            return Err(Error::shape(context, want, got.shape()));
        }
        Ok(())
    }

    /// `K(θ, x)`.
    pub fn forward(&self, theta: &Tensor, x: &Tensor, counter: &OpCounter) -> Result<Tensor> {
        Self::expect("forward: parameters", theta, &self.param_shape)?;
        Self::expect("forward: input", x, &self.in_shape)?;
        match self.kind {
            OperatorKind::Dense => dense_forward(theta, x, counter),
            OperatorKind::Conv1d => conv1d_forward(theta, x, counter),
        }
    }

    /// `Kᵀ(θ, y)`, shaped like the operator's input.
    pub fn transposed(&self, theta: &Tensor, y: &Tensor, counter: &OpCounter) -> Result<Tensor> {
        Self::expect("transposed: parameters", theta, &self.param_shape)?;
        Self::expect("transposed: output", y, &self.out_shape)?;
        let out = match self.kind {
            OperatorKind::Dense => dense_transposed(theta, y, counter)?,
            OperatorKind::Conv1d => conv1d_transposed(theta, y, counter)?,
        };
        Ok(Tensor::from_parts(self.in_shape.clone(), out.into_data()))
    }

    /// `K□(x, y)`, shaped like the parameters.
    pub fn weight_adjoint(&self, x: &Tensor, y: &Tensor, counter: &OpCounter) -> Result<Tensor> {
        Self::expect("weight_adjoint: input", x, &self.in_shape)?;
        Self::expect("weight_adjoint: output", y, &self.out_shape)?;
        match self.kind {
            OperatorKind::Dense => dense_weight_adjoint(x, y, counter),
            OperatorKind::Conv1d => conv1d_weight_adjoint(x, y, counter),
        }
    }
}

/// Residuals of the three adjoint identities at `(θ, x, y)`:
///
/// * `r1 = |⟨K(θ,x),y⟩ − ⟨x,Kᵀ(θ,y)⟩|`
/// * `r2 = |⟨K(θ,x),y⟩ − ⟨θ,K□(x,y)⟩|`
/// * `r3 = |⟨Kᵀ(θ,y),x⟩ − ⟨θ,K□(x,y)⟩|`
///
/// The applications made here are not counted anywhere.
pub fn adjoint_residuals(
    op: &BilinearOperator,
    theta: &Tensor,
    x: &Tensor,
    y: &Tensor,
) -> Result<(f64, f64, f64)> {
    let scratch = OpCounter::new();
    let kx = op.forward(theta, x, &scratch)?;
    let kty = op.transposed(theta, y, &scratch)?;
    let kwy = op.weight_adjoint(x, y, &scratch)?;
    let a = inner_product(&kx, y)?;
    let b = inner_product(x, &kty)?;
    let c = inner_product(theta, &kwy)?;
    Ok(((a - b).abs(), (a - c).abs(), (b - c).abs()))
}
