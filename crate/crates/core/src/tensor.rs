//! Dense, row-major `f64` tensors.
//!
//! Shape is metadata only; every operator in this crate works on whole
//! tensors, so there are no views or strides. Constructors reject
//! non-finite data, and the JSON form is `{"shape":[...],"data":[...]}`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTensor")]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Deserialize)]
struct RawTensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl TryFrom<RawTensor> for Tensor {
    type Error = Error;

    fn try_from(raw: RawTensor) -> Result<Self> {
        Tensor::new(raw.shape, raw.data)
    }
}

fn check_shape(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() {
        return Err(Error::InvalidShape {
            shape: shape.to_vec(),
            reason: "at least one extent is required".into(),
        });
    }
    if shape.contains(&0) {
        return Err(Error::InvalidShape {
            shape: shape.to_vec(),
            reason: "extents must be positive".into(),
        });
    }
    Ok(shape.iter().product())
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let len = check_shape(&shape)?;
        if data.len() != len {
            return Err(Error::DataLength {
                shape,
                len: data.len(),
            });
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Tensor { shape, data })
    }

    /// 1-D tensor from a vector.
    ///
    /// Panics on empty or non-finite input; use [`Tensor::new`] for
    /// fallible construction.
    pub fn vector(data: Vec<f64>) -> Self {
        Tensor::new(vec![data.len()], data).expect("invalid vector")
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Tensor::new(vec![rows, cols], data)
    }

    /// Panics if `shape` has no extents or a zero extent.
    pub fn zeros(shape: &[usize]) -> Self {
        let len = check_shape(shape).expect("invalid shape");
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; len],
        }
    }

    pub fn ones(shape: &[usize]) -> Self {
        Tensor::filled(shape, 1.0)
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        assert!(value.is_finite());
        let mut t = Tensor::zeros(shape);
        t.data.fill(value);
        t
    }

    /// Canonical basis tensor with a single one at flat index `index` (0-based).
    pub fn unit(shape: &[usize], index: usize) -> Self {
        let mut t = Tensor::zeros(shape);
        t.data[index] = 1.0;
        t
    }

    pub fn zeros_like(other: &Tensor) -> Self {
        Tensor::zeros(&other.shape)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0)
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        let len = check_shape(shape)?;
        if len != self.data.len() {
            return Err(Error::shape("reshape", &self.shape, shape));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data: self.data.clone(),
        })
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scale(&self, a: f64) -> Tensor {
        self.map(|v| a * v)
    }

    /// Elementwise sum. Panics on shape mismatch.
    pub fn add(&self, other: &Tensor) -> Tensor {
        self.zip(other, |a, b| a + b)
    }

    /// Elementwise difference. Panics on shape mismatch.
    pub fn sub(&self, other: &Tensor) -> Tensor {
        self.zip(other, |a, b| a - b)
    }

    /// `self += a * x`. Panics on shape mismatch.
    pub fn axpy(&mut self, a: f64, x: &Tensor) {
        assert_eq!(self.shape, x.shape, "axpy shape mismatch");
        for (s, v) in self.data.iter_mut().zip(&x.data) {
            *s += a * v;
        }
    }

    pub(crate) fn zip(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
        assert_eq!(self.shape, other.shape, "elementwise shape mismatch");
        Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<f64>) -> Tensor {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Tensor { shape, data }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("tensor serialization is infallible")
    }

    pub fn from_json(s: &str) -> Result<Tensor> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Standard inner product `Σ a_i b_i`.
pub fn inner_product(a: &Tensor, b: &Tensor) -> Result<f64> {
    if a.shape != b.shape {
        return Err(Error::shape("inner_product", &a.shape, &b.shape));
    }
    Ok(dot(&a.data, &b.data))
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Coordinate-wise product `a ⊙ b`.
pub fn hadamard(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.shape != b.shape {
        return Err(Error::shape("hadamard", &a.shape, &b.shape));
    }
    Ok(a.zip(b, |x, y| x * y))
}

/// Coordinate-wise quotient `a ⊘ b`; every divisor must be nonzero.
pub fn hadamard_div(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.shape != b.shape {
        return Err(Error::shape("hadamard_div", &a.shape, &b.shape));
    }
    if let Some(index) = b.data.iter().position(|&v| v == 0.0) {
        return Err(Error::ZeroDivisor { index });
    }
    let out = a.zip(b, |x, y| x / y);
    if let Some(index) = out.data.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { index });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn v(data: &[f64]) -> Tensor {
        Tensor::vector(data.to_vec())
    }

    #[test]
    fn inner_product_examples() {
        assert_eq!(inner_product(&v(&[1.0, 0.0]), &v(&[0.0, 1.0])).unwrap(), 0.0);
        assert_eq!(inner_product(&v(&[3.0, -2.0]), &v(&[3.0, -2.0])).unwrap(), 13.0);
        assert_eq!(inner_product(&v(&[0.0, 0.0]), &v(&[7.0, -1.5])).unwrap(), 0.0);
    }

    #[test]
    fn inner_product_reports_both_shapes() {
        let err = inner_product(&v(&[1.0, 2.0]), &v(&[1.0])).unwrap_err();
        assert_eq!(
            err,
            Error::ShapeMismatch {
                context: "inner_product",
                left: vec![2],
                right: vec![1]
            }
        );
    }

    #[test]
    fn hadamard_examples() {
        assert_eq!(hadamard(&v(&[1.0, 2.0]), &v(&[1.0, 1.0])).unwrap(), v(&[1.0, 2.0]));
        assert_eq!(hadamard(&v(&[2.0, 3.0]), &v(&[4.0, 5.0])).unwrap(), v(&[8.0, 15.0]));
        assert_eq!(hadamard(&v(&[1.0, -1.0]), &v(&[0.0, 0.0])).unwrap().data(), &[0.0, -0.0]);
        assert!(hadamard(&v(&[1.0]), &v(&[1.0, 2.0])).is_err());
    }

    #[test]
    fn hadamard_div_examples() {
        assert_eq!(hadamard_div(&v(&[1.0, 1.0]), &v(&[1.0, 1.0])).unwrap(), v(&[1.0, 1.0]));
        assert_eq!(hadamard_div(&v(&[1.0, 0.0]), &v(&[0.5, 0.25])).unwrap(), v(&[2.0, 0.0]));
        assert_eq!(
            hadamard_div(&v(&[1.0, 1.0]), &v(&[1.0, 0.0])).unwrap_err(),
            Error::ZeroDivisor { index: 1 }
        );
    }

    #[test]
    fn constructor_validation() {
        assert!(matches!(Tensor::new(vec![2, 2], vec![1.0; 3]), Err(Error::DataLength { .. })));
        assert!(matches!(Tensor::new(vec![0], vec![]), Err(Error::InvalidShape { .. })));
        assert!(matches!(Tensor::new(vec![], vec![]), Err(Error::InvalidShape { .. })));
        assert_eq!(
            Tensor::new(vec![2], vec![1.0, f64::NAN]).unwrap_err(),
            Error::NonFinite { index: 1 }
        );
    }

    #[test]
    fn json_round_trip_and_rejection() {
        let t = Tensor::matrix(2, 3, vec![1.0, -2.5, 0.0, 3.25, 1e-300, 7.0]).unwrap();
        let s = t.to_json();
        assert_eq!(s, r#"{"shape":[2,3],"data":[1.0,-2.5,0.0,3.25,1e-300,7.0]}"#);
        assert_eq!(Tensor::from_json(&s).unwrap(), t);
        assert!(Tensor::from_json(r#"{"shape":[2],"data":[1.0]}"#).is_err());
    }

    fn pair(n: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>)> {
        (
            prop::collection::vec(-10.0f64..10.0, n),
            prop::collection::vec(-10.0f64..10.0, n),
            prop::collection::vec(-10.0f64..10.0, n),
        )
    }

    proptest! {
        #[test]
        fn inner_product_symmetric_and_additive((a, b, c) in (1usize..16).prop_flat_map(pair)) {
            let (a, b, c) = (v(&a), v(&b), v(&c));
            prop_assert_eq!(inner_product(&a, &b).unwrap(), inner_product(&b, &a).unwrap());
            let lhs = inner_product(&a.add(&c), &b).unwrap();
            let rhs = inner_product(&a, &b).unwrap() + inner_product(&c, &b).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (a.norm() + c.norm()) * b.norm());
        }

        #[test]
        fn norm_is_positive_definite(a in prop::collection::vec(-10.0f64..10.0, 1..16)) {
            let t = v(&a);
            let n2 = inner_product(&t, &t).unwrap();
            prop_assert!(n2 >= 0.0);
            prop_assert_eq!(n2 == 0.0, t.is_zero());
        }
    }
}
