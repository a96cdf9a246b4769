//! Masked L1 and weighted softmax cross entropy, each returning the loss and
//! its gradient with respect to the prediction.

use super::ops::softmax_channels;
use super::{Scalar, Tensor5};
use crate::error::{Error, Result};

fn check_lengths(a: usize, b: usize, c: usize) -> Result<()> {
    if a != b || a != c {
        return Err(Error::DimMismatch(format!("loss inputs of lengths {a}, {b}, {c}")));
    }
    Ok(())
}

fn mask_total<T: Scalar>(mask: &[T]) -> Result<T> {
    let mut total = T::zero();
    for &m in mask {
        if m < T::zero() || !m.is_finite() {
            return Err(Error::InvalidParam("loss weights must be finite and nonnegative".into()));
        }
        total += m;
    }
    if total <= T::zero() {
        return Err(Error::EmptyMask);
    }
    Ok(total)
}

/// Weighted mean of `|pred - target|`; `mask` holds per-element weights.
pub fn l1_masked<T: Scalar>(pred: &[T], target: &[T], mask: &[T]) -> Result<(T, Vec<T>)> {
    l1_inner(pred, target, mask, None)
}

/// Like [`l1_masked`], except that targets at or above `truncation` only
/// penalize predictions below it: a truncated target means "at least this far".
pub fn l1_masked_truncated<T: Scalar>(pred: &[T], target: &[T], mask: &[T], truncation: T) -> Result<(T, Vec<T>)> {
    l1_inner(pred, target, mask, Some(truncation))
}

fn l1_inner<T: Scalar>(pred: &[T], target: &[T], mask: &[T], truncation: Option<T>) -> Result<(T, Vec<T>)> {
    check_lengths(pred.len(), target.len(), mask.len())?;
    let total = mask_total(mask)?;
    let mut loss = T::zero();
    let mut grad = vec![T::zero(); pred.len()];
    for i in 0..pred.len() {
        if mask[i] == T::zero() {
            continue;
        }
        let t = match truncation {
            Some(tr) if target[i] >= tr => pred[i].max(tr),
            _ => target[i],
        };
        let d = pred[i] - t;
        loss += mask[i] * d.abs();
        grad[i] = if d > T::zero() {
            mask[i] / total
        } else if d < T::zero() {
            -mask[i] / total
        } else {
            T::zero()
        };
    }
    Ok((loss / total, grad))
}

/// Cross entropy of a per-voxel softmax over channels, weighted per voxel
/// and normalized by the total weight. `labels` and `weights` are indexed
/// like a single-channel tensor of the same batch and spatial size.
pub fn weighted_softmax_ce<T: Scalar>(logits: &Tensor5<T>, labels: &[u8], weights: &[T]) -> Result<(T, Tensor5<T>)> {
    let s = logits.shape();
    let sp = s.spatial();
    check_lengths(s.n * sp, labels.len(), weights.len())?;
    if let Some(&bad) = labels.iter().find(|&&l| l as usize >= s.c) {
        return Err(Error::OutOfRange(format!("label {bad} with {} classes", s.c)));
    }
    let total = mask_total(weights)?;
    let p = softmax_channels(logits);
    let mut grad = p;
    let mut loss = T::zero();
    for n in 0..s.n {
        for i in 0..sp {
            let j = n * sp + i;
            let w = weights[j];
            let scale = w / total;
            for c in 0..s.c {
                let k = (n * s.c + c) * sp + i;
                let pk = grad.data()[k];
                if c == labels[j] as usize {
                    if w > T::zero() {
                        loss += -w * pk.max(T::min_positive_value()).ln();
                    }
                    grad.data_mut()[k] = scale * (pk - T::one());
                } else {
                    grad.data_mut()[k] = scale * pk;
                }
            }
        }
    }
    Ok((loss / total, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Shape5;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn l1_zero_at_target() {
        let p = [0.5f64, 1.0, 2.0];
        let (l, g) = l1_masked(&p, &p, &[1.0, 1.0, 1.0]).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.iter().all(|&x| x == 0.0));
        assert!(matches!(l1_masked(&p, &p, &[0.0; 3]), Err(Error::EmptyMask)));
    }

    #[test]
    fn l1_masks_and_truncates() {
        let (l, _) = l1_masked(&[3.0f64, 1.0], &[0.0, 0.0], &[1.0, 0.0]).unwrap();
        assert_eq!(l, 3.0);
        let (l, g) = l1_masked_truncated(&[3.5f64, 2.0], &[3.0, 3.0], &[1.0, 1.0], 3.0).unwrap();
        assert_eq!(l, 0.5);
        assert_eq!(g, vec![0.0, -0.5]);
    }

    #[test]
    fn uniform_logits_give_log_c() {
        let logits = Tensor5::<f64>::zeros(Shape5::new(1, 12, 2, 2, 2));
        let (l, _) = weighted_softmax_ce(&logits, &[3; 8], &[1.0; 8]).unwrap();
        assert!((l - 12f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn object_voxels_weigh_ten_times() {
        // two voxels, uniform prediction: the unnormalized contributions are w * ln C
        let logits = Tensor5::<f64>::zeros(Shape5::new(1, 4, 1, 1, 2));
        let (l, g) = weighted_softmax_ce(&logits, &[0, 1], &[1.0, 10.0]).unwrap();
        let total = l * 11.0;
        assert!((total - 11.0 * 4f64.ln()).abs() < 1e-12);
        // gradient magnitude at the object voxel is ten times larger
        let g0 = g.channel(0, 0)[0];
        let g1 = g.channel(0, 1)[1];
        assert!((g1 / g0 - 10.0).abs() < 1e-12);
    }

    #[test]
    fn ce_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let s = Shape5::new(2, 5, 2, 2, 2);
        let x = Tensor5::from_vec(s, (0..s.count()).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap();
        let labels: Vec<u8> = (0..16).map(|_| rng.random_range(0..5)).collect();
        let w: Vec<f64> = (0..16).map(|_| if rng.random_bool(0.3) { 10.0 } else { 1.0 }).collect();
        let (_, g) = weighted_softmax_ce(&x, &labels, &w).unwrap();
        let h = 1e-5;
        for i in 0..s.count() {
            let (mut xp, mut xm) = (x.clone(), x.clone());
            xp.data_mut()[i] += h;
            xm.data_mut()[i] -= h;
            let fd = (weighted_softmax_ce(&xp, &labels, &w).unwrap().0 - weighted_softmax_ce(&xm, &labels, &w).unwrap().0) / (2.0 * h);
            let err = (fd - g.data()[i]).abs() / fd.abs().max(g.data()[i].abs()).max(1e-8);
            assert!(err < 1e-6, "{fd} vs {}", g.data()[i]);
        }
    }

    #[test]
    fn l1_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let n = 40;
        // keep predictions away from the kinks
        let t: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..3.0)).collect();
        let p: Vec<f64> = t.iter().map(|&v| v + if rng.random_bool(0.5) { 0.3 } else { -0.3 }).collect();
        let m: Vec<f64> = (0..n).map(|_| if rng.random_bool(0.7) { 1.0 } else { 0.0 }).collect();
        let (_, g) = l1_masked_truncated(&p, &t, &m, 3.0).unwrap();
        let h = 1e-5;
        for i in 0..n {
            let (mut pp, mut pm) = (p.clone(), p.clone());
            pp[i] += h;
            pm[i] -= h;
            let fd = (l1_masked_truncated(&pp, &t, &m, 3.0).unwrap().0 - l1_masked_truncated(&pm, &t, &m, 3.0).unwrap().0) / (2.0 * h);
            assert!((fd - g[i]).abs() <= 1e-6 * fd.abs().max(1e-8) || (fd == 0.0 && g[i] == 0.0));
        }
    }
}
