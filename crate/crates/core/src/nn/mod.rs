//! Dense-network math with hand-written gradients.

mod gradcheck;
mod layer;

pub use gradcheck::{central_difference, finite_diff_check, GradCheck};
pub use layer::{dense_backward, dense_forward, sgd_step, DenseLayer, LayerGrad, SgdMomentum};

use crate::{Error, Result, Scalar};

/// Clamp applied to predictions inside [`bce_loss`].
pub const BCE_EPS: f64 = 1e-7;

pub fn relu<T: Scalar>(v: &[T]) -> Vec<T> {
    v.iter().map(|&x| relu_scalar(x)).collect()
}

#[inline]
pub fn relu_scalar<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        x
    } else {
        T::zero()
    }
}

pub fn relu_in_place<T: Scalar>(v: &mut [T]) {
    for x in v {
        *x = relu_scalar(*x);
    }
}

/// Logistic function, kept inside the open interval (0, 1) even where the
/// exact value rounds to an endpoint.
#[inline]
pub fn sigmoid_scalar<T: Scalar>(x: T) -> T {
    let s = if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    };
    s.max(T::min_positive_value()).min(T::one_below())
}

pub fn sigmoid<T: Scalar>(v: &[T]) -> Vec<T> {
    v.iter().map(|&x| sigmoid_scalar(x)).collect()
}

/// Sum over attributes of binary cross-entropy, predictions clamped to
/// `[BCE_EPS, 1 - BCE_EPS]`.
pub fn bce_loss<T: Scalar>(pred: &[T], label: &[T]) -> Result<T> {
    if pred.len() != label.len() {
        return Err(Error::shape("bce_loss", pred.len(), label.len()));
    }
    Ok(pred
        .iter()
        .zip(label)
        .map(|(&p, &y)| bce_term(p, y))
        .sum())
}

#[inline]
pub(crate) fn bce_term<T: Scalar>(p: T, y: T) -> T {
    let eps = T::lit(BCE_EPS);
    let p = p.max(eps).min(T::one() - eps);
    -(y * p.ln() + (T::one() - y) * (T::one() - p).ln())
}

/// Derivative of the clamped BCE term with respect to the pre-sigmoid logit.
/// Zero where the clamp is active, matching the clamped loss exactly.
#[inline]
pub(crate) fn bce_logit_grad<T: Scalar>(p: T, y: T) -> T {
    let eps = T::lit(BCE_EPS);
    if p < eps || p > T::one() - eps {
        T::zero()
    } else {
        p - y
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn relu_examples() {
        assert_eq!(relu(&[-1.0, 0.0, 2.0]), vec![0.0, 0.0, 2.0]);
        assert_eq!(relu(&[-3.0, -0.5, -1e-9]), vec![0.0; 3]);
        assert_eq!(relu(&[5.0]), vec![5.0]);
    }

    #[test]
    fn sigmoid_examples() {
        assert_eq!(sigmoid(&[0.0f64]), vec![0.5]);
        let s = sigmoid_scalar(40.0f64);
        assert!(s.is_finite() && s < 1.0 && (1.0 - s) < 1e-12);
        let q = sigmoid_scalar(-(3.0f64).ln());
        assert!((q - 0.25).abs() < 1e-15);
        assert!(sigmoid_scalar(-1e4f64) > 0.0);
        assert!(sigmoid_scalar(1e4f32) < 1.0);
    }

    #[test]
    fn bce_examples() {
        let half = vec![0.5f64; 40];
        let ones = vec![1.0f64; 40];
        let l = bce_loss(&half, &ones).unwrap();
        assert!((l - 40.0 * 2f64.ln()).abs() < 1e-12);
        assert!((l - 27.7259).abs() < 1e-4);

        let perfect = bce_loss(&ones, &ones).unwrap();
        assert!(perfect <= 40.0 * -(1.0 - BCE_EPS).ln() + 1e-15);
        assert!(perfect < 1e-5);

        let l = bce_loss(&[0.9, 0.1], &[1.0, 0.0]).unwrap();
        assert!((l - 2.0 * -(0.9f64).ln()).abs() < 1e-12);
        assert!((l - 0.21072).abs() < 1e-5);
    }

    #[test]
    fn bce_length_mismatch() {
        assert!(matches!(bce_loss(&[0.5f64], &[1.0, 0.0]), Err(Error::Shape { .. })));
    }

    proptest! {
        #[test]
        fn relu_nonnegative_and_idempotent(v in prop::collection::vec(-1e6f64..1e6, 0..32)) {
            let r = relu(&v);
            prop_assert!(r.iter().all(|&x| x >= 0.0));
            prop_assert_eq!(relu(&r), r);
        }

        #[test]
        fn sigmoid_open_interval_and_symmetric(x in -1e3f64..1e3) {
            let s = sigmoid_scalar(x);
            prop_assert!(s > 0.0 && s < 1.0);
            prop_assert!((sigmoid_scalar(-x) - (1.0 - s)).abs() < 1e-12);
        }

        #[test]
        fn bce_nonnegative_and_monotone(p in 0.01f64..0.98, step in 0.001f64..0.01) {
            let a = bce_loss(&[p], &[1.0]).unwrap();
            let b = bce_loss(&[p + step], &[1.0]).unwrap();
            prop_assert!(a >= 0.0 && b >= 0.0);
            prop_assert!(b < a);
            let c = bce_loss(&[1.0 - p - step], &[0.0]).unwrap();
            let d = bce_loss(&[1.0 - p], &[0.0]).unwrap();
            prop_assert!(c < d);
        }
    }
}
