//! Double backpropagation for layered networks built from bilinear operators.
//!
//! Penalties of the form `ℛ = p((D x_L/D x_0)*·v)` and their parameter
//! gradients are computed with three structured passes over the network
//! instead of generic automatic differentiation, with every linear-operator
//! application counted.

pub mod activation;
pub mod double_backprop;
pub mod error;
pub mod frobenius;
pub mod loss;
pub mod network;
pub mod ops;
pub mod oracle;
pub mod penalty;
pub mod tensor;

pub use activation::{eta_l_init, softmax, softmax_vjp, zeta_l_init, Activation};
pub use double_backprop::{
    backward_backward, double_backprop, forward_backward, operator_norm_penalty, penalty_backward,
    DoubleBackpropResult, DoubleBackwardTrace, OperatorNormResult,
};
pub use error::{Error, Result};
pub use frobenius::{frobenius_naive, frobenius_optimized, FrobeniusResult};
pub use loss::{loss_and_v, LossKind};
pub use network::{
    BackwardTrace, Checkpoint, ForwardTrace, GradientSet, Layer, LayerConfig, Network, NetworkConfig,
};
pub use ops::{BilinearOperator, OpCounter, OpCounts, OperatorKind};
pub use penalty::{Direction, PenaltyNorm, PenaltySpec, ResolvedDirection, VSource};
pub use tensor::{hadamard, hadamard_div, inner_product, Tensor};
