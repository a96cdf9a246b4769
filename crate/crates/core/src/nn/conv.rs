//! Same-padded, stride-1 3D convolution lowered to GEMM.
//!
//! Kernels of size 3 are unrolled (im2col) slab by slab along depth so the
//! column buffer stays bounded on large scenes; size-1 kernels multiply the
//! input directly.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{Scalar, Shape5, Tensor5};
use crate::error::{Error, Result};

/// Upper bound on column-buffer elements per slab.
const COL_BUDGET: usize = 1 << 22;

#[derive(Clone, Debug, PartialEq)]
pub struct Conv3d<T> {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    /// Layout `(out, in, kz, ky, kx)`.
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> Conv3d<T> {
    pub fn zeros(in_channels: usize, out_channels: usize, kernel: usize) -> Result<Self> {
        if !(kernel == 1 || kernel == 3) {
            return Err(Error::InvalidParam(format!("kernel size {kernel} (expected 1 or 3)")));
        }
        if in_channels == 0 || out_channels == 0 {
            return Err(Error::InvalidParam("convolution needs at least one channel".into()));
        }
        Ok(Self {
            in_channels,
            out_channels,
            kernel,
            weight: vec![T::zero(); out_channels * in_channels * kernel.pow(3)],
            bias: vec![T::zero(); out_channels],
        })
    }

    /// He-normal weights, zero bias.
    pub fn init(in_channels: usize, out_channels: usize, kernel: usize, rng: &mut impl Rng) -> Result<Self> {
        let mut c = Self::zeros(in_channels, out_channels, kernel)?;
        let std = (2.0 / (in_channels * kernel.pow(3)) as f64).sqrt();
        let normal = Normal::new(0.0, std).expect("positive std");
        c.weight.iter_mut().for_each(|w| *w = T::of(normal.sample(rng)));
        Ok(c)
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            weight: vec![T::zero(); self.weight.len()],
            bias: vec![T::zero(); self.bias.len()],
            ..*self
        }
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    fn rows(&self) -> usize {
        self.in_channels * self.kernel.pow(3)
    }

    fn check_input(&self, x: &Tensor5<T>) -> Result<()> {
        if x.shape().c != self.in_channels {
            return Err(Error::DimMismatch(format!(
                "convolution expects {} input channels, got {}",
                self.in_channels,
                x.shape().c
            )));
        }
        Ok(())
    }

    fn slab_depth(&self, s: Shape5) -> usize {
        (COL_BUDGET / (self.rows() * s.h * s.w).max(1)).clamp(1, s.d)
    }

    pub fn forward(&self, x: &Tensor5<T>) -> Result<Tensor5<T>> {
        self.check_input(x)?;
        let s = x.shape();
        let sp = s.spatial();
        let hw = s.h * s.w;
        let mut out = Tensor5::zeros(s.with_channels(self.out_channels));
        let rows = self.rows();
        let slab = self.slab_depth(s);
        let mut col = if self.kernel > 1 { vec![T::zero(); rows * slab * hw] } else { Vec::new() };
        for n in 0..s.n {
            for o in 0..self.out_channels {
                out.channel_mut(n, o).fill(self.bias[o]);
            }
            let xn = &x.data()[n * s.c * sp..(n + 1) * s.c * sp];
            let on = &mut out.data_mut()[n * self.out_channels * sp..(n + 1) * self.out_channels * sp];
            if self.kernel == 1 {
                unsafe {
                    T::gemm(
                        self.out_channels,
                        self.in_channels,
                        sp,
                        T::one(),
                        self.weight.as_ptr(),
                        self.in_channels as isize,
                        1,
                        xn.as_ptr(),
                        sp as isize,
                        1,
                        T::one(),
                        on.as_mut_ptr(),
                        sp as isize,
                        1,
                    )
                };
                continue;
            }
            let mut z0 = 0;
            while z0 < s.d {
                let z1 = (z0 + slab).min(s.d);
                let ss = (z1 - z0) * hw;
                im2col(xn, s, self.kernel, z0, z1, &mut col[..rows * ss]);
                unsafe {
                    T::gemm(
                        self.out_channels,
                        rows,
                        ss,
                        T::one(),
                        self.weight.as_ptr(),
                        rows as isize,
                        1,
                        col.as_ptr(),
                        ss as isize,
                        1,
                        T::one(),
                        on.as_mut_ptr().add(z0 * hw),
                        sp as isize,
                        1,
                    )
                };
                z0 = z1;
            }
        }
        Ok(out)
    }

    /// Accumulates parameter gradients into `grads` and returns the input gradient.
    pub fn backward(&self, x: &Tensor5<T>, grad_out: &Tensor5<T>, grads: &mut Conv3d<T>) -> Result<Tensor5<T>> {
        Ok(self.backward_impl(x, grad_out, grads, true)?.expect("input gradient requested"))
    }

    /// Parameter gradients only, for layers that read network inputs.
    pub fn backward_params(&self, x: &Tensor5<T>, grad_out: &Tensor5<T>, grads: &mut Conv3d<T>) -> Result<()> {
        self.backward_impl(x, grad_out, grads, false).map(|_| ())
    }

    fn backward_impl(&self, x: &Tensor5<T>, grad_out: &Tensor5<T>, grads: &mut Conv3d<T>, want_input: bool) -> Result<Option<Tensor5<T>>> {
        self.check_input(x)?;
        let s = x.shape();
        if grad_out.shape() != s.with_channels(self.out_channels) {
            return Err(Error::DimMismatch(format!(
                "output gradient {:?} does not match forward output {:?}",
                grad_out.shape(),
                s.with_channels(self.out_channels)
            )));
        }
        if grads.weight.len() != self.weight.len() || grads.bias.len() != self.bias.len() {
            return Err(Error::DimMismatch("gradient buffers do not match the layer".into()));
        }
        let sp = s.spatial();
        let hw = s.h * s.w;
        let rows = self.rows();
        let mut gx = Tensor5::zeros(if want_input { s } else { s.with_channels(0) });
        let slab = self.slab_depth(s);
        let mut col = if self.kernel > 1 { vec![T::zero(); rows * slab * hw] } else { Vec::new() };
        for n in 0..s.n {
            for o in 0..self.out_channels {
                let mut acc = T::zero();
                for &g in grad_out.channel(n, o) {
                    acc += g;
                }
                grads.bias[o] += acc;
            }
            let xn = &x.data()[n * s.c * sp..(n + 1) * s.c * sp];
            let gn = &grad_out.data()[n * self.out_channels * sp..(n + 1) * self.out_channels * sp];
            let gxn: &mut [T] = if want_input { &mut gx.data_mut()[n * s.c * sp..(n + 1) * s.c * sp] } else { &mut [] };
            if self.kernel == 1 {
                unsafe {
                    T::gemm(
                        self.out_channels,
                        sp,
                        self.in_channels,
                        T::one(),
                        gn.as_ptr(),
                        sp as isize,
                        1,
                        xn.as_ptr(),
                        1,
                        sp as isize,
                        T::one(),
                        grads.weight.as_mut_ptr(),
                        self.in_channels as isize,
                        1,
                    );
                    if !want_input {
                        continue;
                    }
                    T::gemm(
                        self.in_channels,
                        self.out_channels,
                        sp,
                        T::one(),
                        self.weight.as_ptr(),
                        1,
                        self.in_channels as isize,
                        gn.as_ptr(),
                        sp as isize,
                        1,
                        T::zero(),
                        gxn.as_mut_ptr(),
                        sp as isize,
                        1,
                    );
                }
                continue;
            }
            let mut z0 = 0;
            while z0 < s.d {
                let z1 = (z0 + slab).min(s.d);
                let ss = (z1 - z0) * hw;
                let col = &mut col[..rows * ss];
                im2col(xn, s, self.kernel, z0, z1, col);
                unsafe {
                    T::gemm(
                        self.out_channels,
                        ss,
                        rows,
                        T::one(),
                        gn.as_ptr().add(z0 * hw),
                        sp as isize,
                        1,
                        col.as_ptr(),
                        1,
                        ss as isize,
                        T::one(),
                        grads.weight.as_mut_ptr(),
                        rows as isize,
                        1,
                    );
                    if !want_input {
                        z0 = z1;
                        continue;
                    }
                    // reuse the column buffer for the column-space input gradient
                    T::gemm(
                        rows,
                        self.out_channels,
                        ss,
                        T::one(),
                        self.weight.as_ptr(),
                        1,
                        rows as isize,
                        gn.as_ptr().add(z0 * hw),
                        sp as isize,
                        1,
                        T::zero(),
                        col.as_mut_ptr(),
                        ss as isize,
                        1,
                    );
                }
                col2im(col, s, self.kernel, z0, z1, gxn);
                z0 = z1;
            }
        }
        Ok(want_input.then_some(gx))
    }
}

/// Visits every (column row, destination row segment, source row) triple of
/// the unrolled slab `[z0, z1)`. `f(dst_offset, src_row_offset, dx)` where the
/// source row is `None` when it falls in the zero padding.
#[inline]
fn for_each_row(s: Shape5, k: usize, z0: usize, z1: usize, mut f: impl FnMut(usize, Option<usize>, isize)) {
    let p = (k / 2) as isize;
    let (h, w) = (s.h as isize, s.w as isize);
    let sp = s.spatial();
    let ss = (z1 - z0) * s.h * s.w;
    for ci in 0..s.c {
        for kz in 0..k as isize {
            for ky in 0..k as isize {
                for kx in 0..k as isize {
                    let r = ((ci * k + kz as usize) * k + ky as usize) * k + kx as usize;
                    for z in z0..z1 {
                        let sz = z as isize + kz - p;
                        for y in 0..h {
                            let sy = y + ky - p;
                            let dst = r * ss + ((z - z0) * s.h + y as usize) * s.w;
                            let src = (sz >= 0 && sz < s.d as isize && sy >= 0 && sy < h)
                                .then(|| ci * sp + ((sz * h + sy) * w) as usize);
                            f(dst, src, kx - p);
                        }
                    }
                }
            }
        }
    }
}

/// Valid destination range of a row shifted by `dx`.
#[inline]
fn shifted(w: usize, dx: isize) -> (usize, usize) {
    let lo = (-dx).max(0) as usize;
    let hi = (w as isize - dx).clamp(0, w as isize) as usize;
    (lo, hi.max(lo))
}

fn im2col<T: Scalar>(x: &[T], s: Shape5, k: usize, z0: usize, z1: usize, col: &mut [T]) {
    let w = s.w;
    for_each_row(s, k, z0, z1, |dst, src, dx| {
        let row = &mut col[dst..dst + w];
        match src {
            None => row.fill(T::zero()),
            Some(src) => {
                let (lo, hi) = shifted(w, dx);
                row[..lo].fill(T::zero());
                row[hi..].fill(T::zero());
                let from = (src as isize + lo as isize + dx) as usize;
                row[lo..hi].copy_from_slice(&x[from..from + (hi - lo)]);
            }
        }
    });
}

fn col2im<T: Scalar>(col: &[T], s: Shape5, k: usize, z0: usize, z1: usize, gx: &mut [T]) {
    let w = s.w;
    for_each_row(s, k, z0, z1, |dst, src, dx| {
        if let Some(src) = src {
            let (lo, hi) = shifted(w, dx);
            let from = (src as isize + lo as isize + dx) as usize;
            for (g, &c) in gx[from..from + (hi - lo)].iter_mut().zip(&col[dst + lo..dst + hi]) {
                *g += c;
            }
        }
    });
}
