//! Toy experiments on top of `dbprop`: a ReLU fit of `sin` on `[−π, π]`,
//! loss-landscape sweeps of derivative penalties, operation-count reports and
//! a finite-difference gradient check.

pub mod config;
pub mod gradcheck;
pub mod opcount;
pub mod sine;
pub mod sweep;

pub use config::{ExperimentConfig, Target, TrainedModel};
