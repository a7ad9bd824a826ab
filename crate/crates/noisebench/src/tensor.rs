//! Dense row-major n-dimensional arrays.
//!
//! `Tensor<f32>` is the default carrier for weights, activations and
//! gradients. The `f64` instantiation exists for high-precision work such
//! as finite-difference gradient verification.

use std::fmt;

use crate::error::{Error, Result};

/// Element dtypes the weight container can store.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    pub fn byte(self) -> u8 {
        match self {
            Dtype::F32 => 0,
            Dtype::F64 => 1,
        }
    }

    pub fn from_byte(b: u8) -> Option<Self> {
        match b {
            0 => Some(Dtype::F32),
            1 => Some(Dtype::F64),
            _ => None,
        }
    }

    pub fn size(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

/// Floating-point element of a [`Tensor`].
pub trait Scalar:
    Copy
    + PartialOrd
    + fmt::Debug
    + fmt::Display
    + Send
    + Sync
    + 'static
    + std::ops::Add<Output = Self>
    + std::ops::Sub<Output = Self>
    + std::ops::Mul<Output = Self>
    + std::ops::Div<Output = Self>
    + std::ops::Neg<Output = Self>
{
    const DTYPE: Dtype;
    const ZERO: Self;
    const ONE: Self;

    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
    fn is_finite(self) -> bool;
    fn abs(self) -> Self;
    fn max(self, other: Self) -> Self;
    fn write_le(self, out: &mut Vec<u8>);
    fn read_le(bytes: &[u8]) -> Self;
    fn to_bits_u64(self) -> u64;
}

impl Scalar for f32 {
    const DTYPE: Dtype = Dtype::F32;
    const ZERO: Self = 0.0;
    const ONE: Self = 1.0;

    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
    fn is_finite(self) -> bool {
        f32::is_finite(self)
    }
    fn abs(self) -> Self {
        f32::abs(self)
    }
    fn max(self, other: Self) -> Self {
        f32::max(self, other)
    }
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes.try_into().expect("4-byte slice"))
    }
    fn to_bits_u64(self) -> u64 {
        self.to_bits() as u64
    }
}

impl Scalar for f64 {
    const DTYPE: Dtype = Dtype::F64;
    const ZERO: Self = 0.0;
    const ONE: Self = 1.0;

    fn from_f64(v: f64) -> Self {
        v
    }
    fn to_f64(self) -> f64 {
        self
    }
    fn is_finite(self) -> bool {
        f64::is_finite(self)
    }
    fn abs(self) -> Self {
        f64::abs(self)
    }
    fn max(self, other: Self) -> Self {
        f64::max(self, other)
    }
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes.try_into().expect("8-byte slice"))
    }
    fn to_bits_u64(self) -> u64 {
        self.to_bits()
    }
}

/// Dense n-dimensional array in row-major layout.
///
/// Invariant: `shape.iter().product() == data.len()`.
#[derive(Clone)]
pub struct Tensor<S: Scalar = f32> {
    shape: Vec<usize>,
    data: Vec<S>,
    name: Option<String>,
}

impl<S: Scalar> Tensor<S> {
    /// Constant-filled tensor.
    pub fn full(shape: &[usize], value: S) -> Self {
        let n = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: vec![value; n], name: None }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, S::ZERO)
    }

    pub fn ones(shape: &[usize]) -> Self {
        Self::full(shape, S::ONE)
    }

    /// Wraps a row-major buffer. Errors when the element count does not
    /// match the shape.
    pub fn from_vec(shape: &[usize], data: Vec<S>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::invalid(format!(
                "shape {:?} requires {} elements, got {}",
                shape,
                n,
                data.len()
            )));
        }
        Ok(Tensor { shape: shape.to_vec(), data, name: None })
    }

    pub fn from_slice(shape: &[usize], data: &[S]) -> Result<Self> {
        Self::from_vec(shape, data.to_vec())
    }

    /// Internal constructor for kernel-computed buffers whose length is
    /// correct by construction.
    pub(crate) fn assemble(shape: &[usize], data: Vec<S>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Tensor { shape: shape.to_vec(), data, name: None }
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = Some(name.into());
        self
    }

    pub fn name(&self) -> Option<&str> {
        self.name.as_deref()
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<S> {
        self.data
    }

    /// Reinterprets the buffer under a new shape with the same element count.
    pub fn reshaped(&self, shape: &[usize]) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.data.len() {
            return Err(Error::invalid(format!(
                "cannot reshape {:?} ({} elements) to {:?} ({} elements)",
                self.shape,
                self.data.len(),
                shape,
                n
            )));
        }
        Ok(Tensor { shape: shape.to_vec(), data: self.data.clone(), name: self.name.clone() })
    }

    pub fn map(&self, f: impl Fn(S) -> S) -> Self {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
            name: None,
        }
    }

    /// True when the two tensors agree in shape and every element has an
    /// identical bit pattern.
    pub fn bits_eq(&self, other: &Self) -> bool {
        self.shape == other.shape
            && self
                .data
                .iter()
                .zip(other.data.iter())
                .all(|(a, b)| a.to_bits_u64() == b.to_bits_u64())
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

impl<S: Scalar> fmt::Debug for Tensor<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor{:?}", self.shape)?;
        if let Some(n) = &self.name {
            write!(f, " ({n})")?;
        }
        if self.data.len() <= 8 {
            write!(f, " {:?}", self.data)
        } else {
            write!(f, " [{} elements]", self.data.len())
        }
    }
}

/// Population standard deviation (divide by the element count).
///
/// Accumulates in f64 regardless of the element type.
pub fn tensor_std<S: Scalar>(t: &Tensor<S>) -> Result<f64> {
    if t.is_empty() {
        return Err(Error::invalid("tensor_std: tensor has no elements"));
    }
    let n = t.len() as f64;
    let mean: f64 = t.data().iter().map(|v| v.to_f64()).sum::<f64>() / n;
    let var: f64 = t
        .data()
        .iter()
        .map(|v| {
            let d = v.to_f64() - mean;
            d * d
        })
        .sum::<f64>()
        / n;
    Ok(var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn std_constant_tensor_is_zero() {
        let t = Tensor::<f32>::from_slice(&[4], &[2.0, 2.0, 2.0, 2.0]).unwrap();
        assert_eq!(tensor_std(&t).unwrap(), 0.0);
    }

    #[test]
    fn std_symmetric_unit_values() {
        let t = Tensor::<f32>::from_slice(&[4], &[1.0, -1.0, 1.0, -1.0]).unwrap();
        assert_eq!(tensor_std(&t).unwrap(), 1.0);
    }

    #[test]
    fn std_hand_oracle() {
        // sqrt(5/4) for [1,2,3,4]
        let t = Tensor::<f32>::from_slice(&[4], &[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert!((tensor_std(&t).unwrap() - 1.118034).abs() < 1e-6);
    }

    #[test]
    fn std_empty_rejected() {
        let t = Tensor::<f32>::zeros(&[0]);
        assert!(matches!(tensor_std(&t), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn from_vec_shape_mismatch_rejected() {
        assert!(Tensor::<f32>::from_vec(&[2, 3], vec![0.0; 5]).is_err());
    }

    proptest! {
        #[test]
        fn std_translation_invariant(
            vals in proptest::collection::vec(-100.0f64..100.0, 2..64),
            shift in -50.0f64..50.0,
        ) {
            let t = Tensor::<f64>::from_vec(&[vals.len()], vals.clone()).unwrap();
            let shifted = t.map(|v| v + shift);
            let a = tensor_std(&t).unwrap();
            let b = tensor_std(&shifted).unwrap();
            let denom = a.abs().max(1.0);
            prop_assert!((a - b).abs() / denom < 1e-6);
        }

        #[test]
        fn std_scale_equivariant(
            vals in proptest::collection::vec(-100.0f64..100.0, 2..64),
            scale in -8.0f64..8.0,
        ) {
            let t = Tensor::<f64>::from_vec(&[vals.len()], vals.clone()).unwrap();
            let scaled = t.map(|v| v * scale);
            let a = tensor_std(&t).unwrap() * scale.abs();
            let b = tensor_std(&scaled).unwrap();
            let denom = a.abs().max(1e-12);
            prop_assert!((a - b).abs() / denom < 1e-6);
        }
    }
}
