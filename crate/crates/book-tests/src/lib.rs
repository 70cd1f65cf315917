//! Runs every Rust listing in the guide as a doc-test, so the book cannot
//! drift from the library.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/bilinear.md")]
pub mod bilinear {}

#[doc = include_str!("../../../book/src/activations.md")]
pub mod activations {}

#[doc = include_str!("../../../book/src/passes.md")]
pub mod passes {}

#[doc = include_str!("../../../book/src/counting.md")]
pub mod counting {}

#[doc = include_str!("../../../book/src/jacobian_penalties.md")]
pub mod jacobian_penalties {}

#[doc = include_str!("../../../book/src/oracles.md")]
pub mod oracles {}

#[doc = include_str!("../../../book/src/experiments.md")]
pub mod experiments {}
