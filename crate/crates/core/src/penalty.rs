//! Penalty specifications `ℛ = p((D x_L / D x_0)* · v)`.
//!
//! A penalty is fixed by the output-space direction `v` and the scalar map
//! `p` on the input-gradient space. JSON form:
//!
//! ```json
//! {"v": "loss_gradient" | "unit:i" | "random:seed", "p": "sq" | "norm", "lambda": 0.1}
//! ```
//!
//! `"loss_gradient"` takes an optional `"loss": "nll" | "squared"` (default `nll`).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::{loss_and_v, LossKind};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub enum Direction {
    /// `v = ∇_{x_L} ℓ(x_L, y)`: classical double backpropagation.
    LossGradient(LossKind),
    /// `v = e⁽ⁱ⁾`, 1-based.
    UnitVector(usize),
    /// Gaussian sample normalized to the unit sphere.
    RandomUnit(u64),
    Explicit(Tensor),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PenaltyNorm {
    /// `p(u) = ‖u‖²`
    SquaredNorm,
    /// `p(u) = ‖u‖`
    Norm,
}

impl PenaltyNorm {
    pub fn value(self, u: &Tensor) -> f64 {
        match self {
            PenaltyNorm::SquaredNorm => u.norm_sq(),
            PenaltyNorm::Norm => u.norm(),
        }
    }

    /// `∇p(u)`; undefined for the norm at `u = 0`.
    pub fn gradient(self, u: &Tensor) -> Result<Tensor> {
        match self {
            PenaltyNorm::SquaredNorm => Ok(u.scale(2.0)),
            PenaltyNorm::Norm => {
                let n = u.norm();
                if n == 0.0 {
                    return Err(Error::ZeroNormGradient);
                }
                Ok(u.map(|x| x / n))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PenaltySpec {
    pub v: Direction,
    pub p: PenaltyNorm,
    pub lambda: f64,
}

/// How the resolved `v` depends on the network output.
#[derive(Debug, Clone, PartialEq)]
pub enum VSource {
    Constant,
    Loss { kind: LossKind, y: Tensor },
}

/// A direction evaluated at a concrete output `x_L`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedDirection {
    pub v: Tensor,
    pub source: VSource,
}

impl ResolvedDirection {
    pub fn constant(v: Tensor) -> Self {
        ResolvedDirection {
            v,
            source: VSource::Constant,
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self.source, VSource::Constant)
    }
}

/// Gaussian direction normalized to unit length.
pub fn random_unit(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = Tensor::zeros(shape);
    loop {
        for d in t.data_mut() {
            *d = StandardNormal.sample(&mut rng);
        }
        let n = t.norm();
        if n > 0.0 {
            return t.scale(1.0 / n);
        }
    }
}

impl Direction {
    pub fn resolve(&self, x_l: &Tensor, y: Option<&Tensor>) -> Result<ResolvedDirection> {
        let shape = x_l.shape();
        match self {
            Direction::LossGradient(kind) => {
                let y = y.ok_or(Error::MissingLabels("a loss-gradient penalty"))?;
                let (_, v) = loss_and_v(*kind, x_l, y)?;
                Ok(ResolvedDirection {
                    v,
                    source: VSource::Loss {
                        kind: *kind,
                        y: y.clone(),
                    },
                })
            }
            Direction::UnitVector(i) => {
                if *i == 0 || *i > x_l.len() {
                    return Err(Error::UnitIndex {
                        index: *i,
                        dim: x_l.len(),
                    });
                }
                Ok(ResolvedDirection::constant(Tensor::unit(shape, i - 1)))
            }
            Direction::RandomUnit(seed) => Ok(ResolvedDirection::constant(random_unit(shape, *seed))),
            Direction::Explicit(v) => {
                if v.shape() != shape {
                    return Err(Error::shape("explicit direction", v.shape(), shape));
                }
                Ok(ResolvedDirection::constant(v.clone()))
            }
        }
    }
}

impl PenaltySpec {
    pub fn new(v: Direction, p: PenaltyNorm, lambda: f64) -> Self {
        PenaltySpec { v, p, lambda }
    }

    /// Squared norm of the input-gradient of the loss.
    pub fn classical(loss: LossKind, lambda: f64) -> Self {
        PenaltySpec::new(Direction::LossGradient(loss), PenaltyNorm::SquaredNorm, lambda)
    }

    /// Squared norm of the input-gradient of output node `i` (1-based).
    pub fn output_node(i: usize, lambda: f64) -> Self {
        PenaltySpec::new(Direction::UnitVector(i), PenaltyNorm::SquaredNorm, lambda)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&PenaltyJson::from(self)).expect("penalty serialization")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let raw: PenaltyJson = serde_json::from_str(s)?;
        raw.try_into()
    }
}

#[derive(Serialize, Deserialize)]
struct PenaltyJson {
    v: String,
    p: String,
    lambda: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    loss: Option<LossKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    direction: Option<Tensor>,
}

impl From<&PenaltySpec> for PenaltyJson {
    fn from(s: &PenaltySpec) -> Self {
        let (v, loss, direction) = match &s.v {
            Direction::LossGradient(k) => ("loss_gradient".to_string(), Some(*k), None),
            Direction::UnitVector(i) => (format!("unit:{i}"), None, None),
            Direction::RandomUnit(seed) => (format!("random:{seed}"), None, None),
            Direction::Explicit(t) => ("explicit".to_string(), None, Some(t.clone())),
        };
        let p = match s.p {
            PenaltyNorm::SquaredNorm => "sq",
            PenaltyNorm::Norm => "norm",
        };
        PenaltyJson {
            v,
            p: p.into(),
            lambda: s.lambda,
            loss,
            direction,
        }
    }
}

impl TryFrom<PenaltyJson> for PenaltySpec {
    type Error = Error;

    fn try_from(raw: PenaltyJson) -> Result<Self> {
        let bad = |msg: String| Error::InvalidPenalty(msg);
        let v = match raw.v.split_once(':') {
            None if raw.v == "loss_gradient" => Direction::LossGradient(raw.loss.unwrap_or(LossKind::Nll)),
            None if raw.v == "explicit" => {
                Direction::Explicit(raw.direction.ok_or_else(|| bad("explicit v needs \"direction\"".into()))?)
            }
            Some(("unit", i)) => {
                let i: usize = i.parse().map_err(|_| bad(format!("bad unit index {i:?}")))?;
                if i == 0 {
                    return Err(bad("unit indices are 1-based".into()));
                }
                Direction::UnitVector(i)
            }
            Some(("random", s)) => Direction::RandomUnit(s.parse().map_err(|_| bad(format!("bad seed {s:?}")))?),
            _ => return Err(bad(format!("unknown v {:?}", raw.v))),
        };
        let p = match raw.p.as_str() {
            "sq" => PenaltyNorm::SquaredNorm,
            "norm" => PenaltyNorm::Norm,
            other => return Err(bad(format!("unknown p {other:?}"))),
        };
        if !(raw.lambda >= 0.0 && raw.lambda.is_finite()) {
            return Err(bad(format!("lambda must be a finite non-negative number, got {}", raw.lambda)));
        }
        Ok(PenaltySpec { v, p, lambda: raw.lambda })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_forms() {
        let s = PenaltySpec::from_json(r#"{"v":"unit:3","p":"sq","lambda":0.5}"#).unwrap();
        assert_eq!(s, PenaltySpec::output_node(3, 0.5));
        let s = PenaltySpec::from_json(r#"{"v":"loss_gradient","p":"norm","lambda":1}"#).unwrap();
        assert_eq!(s.v, Direction::LossGradient(LossKind::Nll));
        assert_eq!(s.p, PenaltyNorm::Norm);
        let s = PenaltySpec::from_json(r#"{"v":"random:42","p":"sq","lambda":0}"#).unwrap();
        assert_eq!(s.v, Direction::RandomUnit(42));
        for spec in [
            PenaltySpec::classical(LossKind::Squared, 0.25),
            PenaltySpec::new(Direction::RandomUnit(7), PenaltyNorm::Norm, 1.0),
            PenaltySpec::new(Direction::Explicit(Tensor::vector(vec![0.5, -1.0])), PenaltyNorm::SquaredNorm, 2.0),
        ] {
            assert_eq!(PenaltySpec::from_json(&spec.to_json()).unwrap(), spec);
        }
    }

    #[test]
    fn json_rejections() {
        for bad in [
            r#"{"v":"unit:0","p":"sq","lambda":1}"#,
            r#"{"v":"unit:x","p":"sq","lambda":1}"#,
            r#"{"v":"other","p":"sq","lambda":1}"#,
            r#"{"v":"unit:1","p":"l1","lambda":1}"#,
            r#"{"v":"unit:1","p":"sq","lambda":-1}"#,
        ] {
            assert!(PenaltySpec::from_json(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn random_unit_has_unit_norm() {
        for seed in 0..50 {
            let v = random_unit(&[7], seed);
            assert!((v.norm() - 1.0).abs() <= 1e-12);
        }
        assert_eq!(random_unit(&[4], 3), random_unit(&[4], 3));
        assert_ne!(random_unit(&[4], 3), random_unit(&[4], 4));
    }

    #[test]
    fn resolve_unit_and_labels() {
        let x = Tensor::vector(vec![0.25, 0.75]);
        let d = Direction::UnitVector(2).resolve(&x, None).unwrap();
        assert_eq!(d.v, Tensor::vector(vec![0.0, 1.0]));
        assert!(matches!(
            Direction::UnitVector(3).resolve(&x, None),
            Err(Error::UnitIndex { index: 3, dim: 2 })
        ));
        assert!(matches!(
            Direction::LossGradient(LossKind::Nll).resolve(&x, None),
            Err(Error::MissingLabels(_))
        ));
    }

    #[test]
    fn norm_gradient_at_zero_is_an_error() {
        let z = Tensor::zeros(&[3]);
        assert_eq!(PenaltyNorm::Norm.gradient(&z).unwrap_err(), Error::ZeroNormGradient);
        assert!(PenaltyNorm::SquaredNorm.gradient(&z).unwrap().is_zero());
        let u = Tensor::vector(vec![3.0, 4.0]);
        assert_eq!(PenaltyNorm::Norm.value(&u), 5.0);
        assert_eq!(PenaltyNorm::Norm.gradient(&u).unwrap(), Tensor::vector(vec![0.6, 0.8]));
    }
}
