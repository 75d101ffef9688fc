use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Debug;
use core::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

use super::NnError;

/// `(batch, channels, height, width)`
pub type Dims = [usize; 4];

/// Floating-point element type of a tensor.
pub trait Scalar:
    Copy
    + Default
    + PartialOrd
    + Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
    + Send
    + Sync
    + 'static
{
    const ZERO: Self;
    const ONE: Self;
    /// Smallest positive normal value.
    const MIN_POSITIVE: Self;
    /// Largest value below one.
    const BELOW_ONE: Self;
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sqrt(self) -> Self;
    fn is_finite(self) -> bool;
}

impl Scalar for f32 {
    const ZERO: Self = 0.0;
    const ONE: Self = 1.0;
    const MIN_POSITIVE: Self = f32::MIN_POSITIVE;
    const BELOW_ONE: Self = 1.0 - f32::EPSILON / 2.0;
    #[inline]
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    #[inline]
    fn to_f64(self) -> f64 {
        f64::from(self)
    }
    #[inline]
    fn exp(self) -> Self {
        libm::expf(self)
    }
    #[inline]
    fn ln(self) -> Self {
        libm::logf(self)
    }
    #[inline]
    fn sqrt(self) -> Self {
        libm::sqrtf(self)
    }
    #[inline]
    fn is_finite(self) -> bool {
        f32::is_finite(self)
    }
}

impl Scalar for f64 {
    const ZERO: Self = 0.0;
    const ONE: Self = 1.0;
    const MIN_POSITIVE: Self = f64::MIN_POSITIVE;
    const BELOW_ONE: Self = 1.0 - f64::EPSILON / 2.0;
    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self
    }
    #[inline]
    fn exp(self) -> Self {
        libm::exp(self)
    }
    #[inline]
    fn ln(self) -> Self {
        libm::log(self)
    }
    #[inline]
    fn sqrt(self) -> Self {
        libm::sqrt(self)
    }
    #[inline]
    fn is_finite(self) -> bool {
        f64::is_finite(self)
    }
}

/// Dense row-major `(N, C, H, W)` tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    dims: Dims,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(dims: Dims) -> Self {
        Self {
            dims,
            data: vec![T::ZERO; dims.iter().product()],
        }
    }

    pub fn filled(dims: Dims, value: T) -> Self {
        Self {
            dims,
            data: vec![value; dims.iter().product()],
        }
    }

    pub fn from_vec(dims: Dims, data: Vec<T>) -> Result<Self, NnError> {
        if data.len() != dims.iter().product::<usize>() {
            return Err(NnError::DataLength {
                op: "tensor",
                len: data.len(),
                dims,
            });
        }
        Ok(Self { dims, data })
    }

    pub fn scalar(value: T) -> Self {
        Self {
            dims: [1, 1, 1, 1],
            data: vec![value],
        }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn reshape(self, dims: Dims) -> Result<Self, NnError> {
        Self::from_vec(dims, self.data)
    }

    /// Elements per batch item.
    pub fn item_len(&self) -> usize {
        self.dims[1] * self.dims[2] * self.dims[3]
    }

    pub fn item(&self, n: usize) -> &[T] {
        let len = self.item_len();
        &self.data[n * len..(n + 1) * len]
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            dims: self.dims,
            data: self.data.iter().map(|v| U::from_f64(v.to_f64())).collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Stacks single items along the batch axis.
    pub fn stack(items: &[&Tensor<T>]) -> Result<Self, NnError> {
        let first = items.first().ok_or(NnError::InvalidShape {
            op: "stack",
            dims: [0, 0, 0, 0],
        })?;
        let mut dims = first.dims;
        let mut data = Vec::with_capacity(first.len() * items.len());
        for t in items {
            if t.dims[1..] != first.dims[1..] {
                return Err(NnError::ShapeMismatch {
                    op: "stack",
                    left: first.dims,
                    right: t.dims,
                });
            }
            data.extend_from_slice(&t.data);
        }
        dims[0] = items.iter().map(|t| t.dims[0]).sum();
        Ok(Self { dims, data })
    }

    /// Scalar value of a `[1, 1, 1, 1]` tensor.
    pub fn value(&self) -> T {
        self.data[0]
    }

    pub(crate) fn add_assign(&mut self, other: &Tensor<T>) {
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}
