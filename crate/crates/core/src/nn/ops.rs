//! Element-wise and channel operations with their backward passes.

use super::{Scalar, Shape5, Tensor5};
use crate::error::{Error, Result};

pub fn relu<T: Scalar>(x: &Tensor5<T>) -> Tensor5<T> {
    x.map(|v| v.max(T::zero()))
}

pub fn relu_in_place<T: Scalar>(x: &mut Tensor5<T>) {
    x.data_mut().iter_mut().for_each(|v| *v = v.max(T::zero()));
}

/// Gradient through a ReLU given its output.
pub fn relu_backward<T: Scalar>(y: &Tensor5<T>, dy: &Tensor5<T>) -> Tensor5<T> {
    let mut dx = dy.clone();
    dx.data_mut()
        .iter_mut()
        .zip(y.data())
        .for_each(|(g, &v)| {
            if v <= T::zero() {
                *g = T::zero();
            }
        });
    dx
}

pub fn concat_channels<T: Scalar>(parts: &[&Tensor5<T>]) -> Result<Tensor5<T>> {
    let first = parts.first().ok_or_else(|| Error::InvalidParam("nothing to concatenate".into()))?.shape();
    if parts.iter().any(|p| !p.shape().same_spatial(&first)) {
        return Err(Error::DimMismatch("concatenated tensors differ in batch or spatial size".into()));
    }
    let c: usize = parts.iter().map(|p| p.shape().c).sum();
    let shape = first.with_channels(c);
    let mut data = Vec::with_capacity(shape.count());
    for n in 0..shape.n {
        for p in parts {
            let s = p.shape();
            let per = s.c * s.spatial();
            data.extend_from_slice(&p.data()[n * per..(n + 1) * per]);
        }
    }
    Tensor5::from_vec(shape, data)
}

/// Inverse of [`concat_channels`]: splits along channels into the given sizes.
pub fn split_channels<T: Scalar>(x: &Tensor5<T>, sizes: &[usize]) -> Result<Vec<Tensor5<T>>> {
    let s = x.shape();
    if sizes.iter().sum::<usize>() != s.c {
        return Err(Error::DimMismatch(format!("split sizes {sizes:?} vs {} channels", s.c)));
    }
    let sp = s.spatial();
    let mut out: Vec<Vec<T>> = sizes.iter().map(|&c| Vec::with_capacity(s.n * c * sp)).collect();
    for n in 0..s.n {
        let mut c0 = 0;
        for (i, &c) in sizes.iter().enumerate() {
            let start = (n * s.c + c0) * sp;
            out[i].extend_from_slice(&x.data()[start..start + c * sp]);
            c0 += c;
        }
    }
    sizes
        .iter()
        .zip(out)
        .map(|(&c, d)| Tensor5::from_vec(s.with_channels(c), d))
        .collect()
}

/// Softmax over the channel axis at every voxel.
pub fn softmax_channels<T: Scalar>(logits: &Tensor5<T>) -> Tensor5<T> {
    let s = logits.shape();
    let sp = s.spatial();
    let mut out = Tensor5::zeros(s);
    let mut buf = vec![T::zero(); s.c];
    for n in 0..s.n {
        let base = n * s.c * sp;
        for i in 0..sp {
            let mut m = T::neg_infinity();
            for (c, b) in buf.iter_mut().enumerate() {
                *b = logits.data()[base + c * sp + i];
                m = m.max(*b);
            }
            let mut z = T::zero();
            for b in buf.iter_mut() {
                *b = (*b - m).exp();
                z += *b;
            }
            for (c, b) in buf.iter().enumerate() {
                out.data_mut()[base + c * sp + i] = *b / z;
            }
        }
    }
    out
}

/// Vector-Jacobian product of the channel softmax given its output `p`.
pub fn softmax_backward<T: Scalar>(p: &Tensor5<T>, dp: &Tensor5<T>) -> Tensor5<T> {
    let s: Shape5 = p.shape();
    let sp = s.spatial();
    let mut dx = Tensor5::zeros(s);
    for n in 0..s.n {
        let base = n * s.c * sp;
        for i in 0..sp {
            let mut dot = T::zero();
            for c in 0..s.c {
                let j = base + c * sp + i;
                dot += p.data()[j] * dp.data()[j];
            }
            for c in 0..s.c {
                let j = base + c * sp + i;
                dx.data_mut()[j] = p.data()[j] * (dp.data()[j] - dot);
            }
        }
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, s: Shape5) -> Tensor5<f64> {
        Tensor5::from_vec(s, (0..s.count()).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap()
    }

    #[test]
    fn concat_split_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random(&mut rng, Shape5::new(2, 1, 2, 3, 2));
        let b = random(&mut rng, Shape5::new(2, 3, 2, 3, 2));
        let c = concat_channels(&[&a, &b]).unwrap();
        assert_eq!(c.shape().c, 4);
        assert_eq!(c.channel(1, 0), a.channel(1, 0));
        assert_eq!(c.channel(1, 2), b.channel(1, 1));
        let parts = split_channels(&c, &[1, 3]).unwrap();
        assert_eq!(parts[0], a);
        assert_eq!(parts[1], b);
        assert!(concat_channels(&[&a, &random(&mut rng, Shape5::new(2, 1, 2, 3, 3))]).is_err());
    }

    #[test]
    fn softmax_sums_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = softmax_channels(&random(&mut rng, Shape5::new(2, 5, 2, 2, 3)));
        for n in 0..2 {
            for i in 0..12 {
                let s: f64 = (0..5).map(|c| p.channel(n, c)[i]).sum();
                assert!((s - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn softmax_and_relu_vjp_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = Shape5::new(1, 4, 2, 2, 2);
        let x = random(&mut rng, s);
        let r = random(&mut rng, s);
        let f = |x: &Tensor5<f64>| softmax_channels(x).data().iter().zip(r.data()).map(|(a, b)| a * b).sum::<f64>();
        let g = softmax_backward(&softmax_channels(&x), &r);
        let h = 1e-5;
        for i in 0..s.count() {
            let (mut xp, mut xm) = (x.clone(), x.clone());
            xp.data_mut()[i] += h;
            xm.data_mut()[i] -= h;
            let fd = (f(&xp) - f(&xm)) / (2.0 * h);
            assert!((fd - g.data()[i]).abs() / fd.abs().max(1e-8) < 1e-6);
        }
        let y = relu(&x);
        let d = relu_backward(&y, &r);
        for i in 0..s.count() {
            let expect = if x.data()[i] > 0.0 { r.data()[i] } else { 0.0 };
            assert_eq!(d.data()[i], expect);
        }
    }
}
