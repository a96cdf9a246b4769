//! Dense 5-D tensors and the handful of differentiable operations the
//! completion networks need: same-padded 3D convolution, ReLU, channel
//! concatenation, softmax, two losses and Adam.
//!
//! Everything is generic over [`Scalar`] so the same code runs in `f32` for
//! training and in `f64` for finite-difference gradient checks.

pub mod adam;
pub mod checkpoint;
pub mod conv;
pub mod loss;
pub mod ops;

use std::fmt::Debug;
use std::ops::AddAssign;

use num_traits::{Float, FromPrimitive, ToPrimitive};

use crate::error::{Error, Result};

pub use adam::{Adam, AdamConfig, LrSchedule};
pub use conv::Conv3d;

/// Floating-point element type with a matching GEMM kernel.
pub trait Scalar: Float + FromPrimitive + ToPrimitive + Default + Debug + AddAssign + Send + Sync + 'static {
    /// `C = alpha * A * B + beta * C` for strided row/column layouts.
    ///
    /// # Safety
    /// The pointers and strides must describe valid `m x k`, `k x n` and
    /// `m x n` matrices, and `c` must not alias `a` or `b`.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );

    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("representable")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("representable")
    }
}

impl Scalar for f32 {
    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: f32,
        a: *const f32,
        rsa: isize,
        csa: isize,
        b: *const f32,
        rsb: isize,
        csb: isize,
        beta: f32,
        c: *mut f32,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

impl Scalar for f64 {
    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: f64,
        a: *const f64,
        rsa: isize,
        csa: isize,
        b: *const f64,
        rsb: isize,
        csb: isize,
        beta: f64,
        c: *mut f64,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

/// Tensor layout: batch, channels, depth (z), height (y), width (x).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Shape5 {
    pub n: usize,
    pub c: usize,
    pub d: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape5 {
    pub fn new(n: usize, c: usize, d: usize, h: usize, w: usize) -> Self {
        Self { n, c, d, h, w }
    }

    pub fn spatial(&self) -> usize {
        self.d * self.h * self.w
    }

    pub fn count(&self) -> usize {
        self.n * self.c * self.spatial()
    }

    pub fn with_channels(&self, c: usize) -> Self {
        Self { c, ..*self }
    }

    pub fn same_spatial(&self, o: &Shape5) -> bool {
        self.n == o.n && self.d == o.d && self.h == o.h && self.w == o.w
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor5<T> {
    shape: Shape5,
    data: Vec<T>,
}

impl<T: Scalar> Tensor5<T> {
    pub fn zeros(shape: Shape5) -> Self {
        Self {
            shape,
            data: vec![T::zero(); shape.count()],
        }
    }

    pub fn filled(shape: Shape5, v: T) -> Self {
        Self {
            shape,
            data: vec![v; shape.count()],
        }
    }

    pub fn from_vec(shape: Shape5, data: Vec<T>) -> Result<Self> {
        if data.len() != shape.count() {
            return Err(Error::DimMismatch(format!("{} values for tensor {:?}", data.len(), shape)));
        }
        Ok(Self { shape, data })
    }

    pub fn shape(&self) -> Shape5 {
        self.shape
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

    /// Contiguous spatial block of one channel of one batch item.
    pub fn channel(&self, n: usize, c: usize) -> &[T] {
        let s = self.shape.spatial();
        let o = (n * self.shape.c + c) * s;
        &self.data[o..o + s]
    }

    pub fn channel_mut(&mut self, n: usize, c: usize) -> &mut [T] {
        let s = self.shape.spatial();
        let o = (n * self.shape.c + c) * s;
        &mut self.data[o..o + s]
    }

    pub fn check_finite(&self, what: &'static str) -> Result<()> {
        if self.data.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite(what))
        }
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn cast<U: Scalar>(&self) -> Tensor5<U> {
        Tensor5 {
            shape: self.shape,
            data: self.data.iter().map(|v| U::of(v.as_f64())).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Tensor5<T>) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::DimMismatch(format!("{:?} + {:?}", self.shape, other.shape)));
        }
        self.data.iter_mut().zip(&other.data).for_each(|(a, &b)| *a += b);
        Ok(())
    }

    /// Copy of the sub-box `[offset, offset + size)` over (d, h, w).
    pub fn crop_spatial(&self, offset: [usize; 3], size: [usize; 3]) -> Result<Self> {
        let s = self.shape;
        if offset[0] + size[0] > s.d || offset[1] + size[1] > s.h || offset[2] + size[2] > s.w {
            return Err(Error::DimMismatch(format!("crop {offset:?}+{size:?} of {s:?}")));
        }
        let out_shape = Shape5::new(s.n, s.c, size[0], size[1], size[2]);
        let mut out = Vec::with_capacity(out_shape.count());
        for n in 0..s.n {
            for c in 0..s.c {
                let ch = self.channel(n, c);
                for z in offset[0]..offset[0] + size[0] {
                    for y in offset[1]..offset[1] + size[1] {
                        let row = (z * s.h + y) * s.w + offset[2];
                        out.extend_from_slice(&ch[row..row + size[2]]);
                    }
                }
            }
        }
        Ok(Self {
            shape: out_shape,
            data: out,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gemm_both_precisions() {
        // [1 2; 3 4] * [5; 6] = [17; 39]
        let a = [1.0f32, 2.0, 3.0, 4.0];
        let b = [5.0f32, 6.0];
        let mut c = [0.0f32; 2];
        unsafe { f32::gemm(2, 2, 1, 1.0, a.as_ptr(), 2, 1, b.as_ptr(), 1, 1, 0.0, c.as_mut_ptr(), 1, 1) };
        assert_eq!(c, [17.0, 39.0]);
        let a = [1.0f64, 3.0, 2.0, 4.0];
        let b = [5.0f64, 6.0];
        let mut c = [1.0f64; 2];
        // column-major A, accumulate into C
        unsafe { f64::gemm(2, 2, 1, 1.0, a.as_ptr(), 1, 2, b.as_ptr(), 1, 1, 1.0, c.as_mut_ptr(), 1, 1) };
        assert_eq!(c, [18.0, 40.0]);
    }

    #[test]
    fn tensor_basics() {
        let s = Shape5::new(2, 3, 2, 2, 2);
        let t = Tensor5::from_vec(s, (0..48).map(|i| i as f64).collect()).unwrap();
        assert_eq!(t.channel(1, 2)[0], 40.0);
        assert!(Tensor5::<f32>::from_vec(s, vec![0.0; 47]).is_err());
        let mut bad = t.clone();
        bad.data_mut()[3] = f64::NAN;
        assert!(bad.check_finite("test").is_err());
        let c = t.crop_spatial([1, 0, 1], [1, 2, 1]).unwrap();
        assert_eq!(c.shape(), Shape5::new(2, 3, 1, 2, 1));
        assert_eq!(c.channel(0, 0), &[5.0, 7.0]);
    }
}
