use crate::{Error, Result, Scalar};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub worst_index: Option<usize>,
    pub checked: usize,
}

/// `(f(eps) - f(-eps)) / 2eps` for a function of a scalar offset.
pub fn central_difference<T: Scalar>(eps: T, mut f: impl FnMut(T) -> T) -> T {
    (f(eps) - f(-eps)) / (T::lit(2.0) * eps)
}

/// Compares `analytic` against central differences of `loss` around `params`.
///
/// The error per parameter is `|a - n| / max(|a|, |n|, 1e-8)`; the maximum is
/// returned together with the offending index.
pub fn finite_diff_check<T, F>(mut loss: F, params: &[T], analytic: &[T], eps: T) -> Result<GradCheck>
where
    T: Scalar,
    F: FnMut(&[T]) -> Result<T>,
{
    if params.len() != analytic.len() {
        return Err(Error::shape("finite_diff_check", params.len(), analytic.len()));
    }
    if !(eps > T::zero()) {
        return Err(Error::Config("epsilon must be positive".into()));
    }
    let mut probe = params.to_vec();
    let mut report = GradCheck {
        max_rel_error: 0.0,
        worst_index: None,
        checked: 0,
    };
    for i in 0..params.len() {
        probe[i] = params[i] + eps;
        let up = loss(&probe)?;
        probe[i] = params[i] - eps;
        let down = loss(&probe)?;
        probe[i] = params[i];
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::NonFinite(format!("loss at parameter {i}")));
        }
        let numeric = ((up - down) / (T::lit(2.0) * eps)).as_f64();
        let a = analytic[i].as_f64();
        let denom = a.abs().max(numeric.abs()).max(1e-8);
        let err = (a - numeric).abs() / denom;
        if err > report.max_rel_error || report.worst_index.is_none() {
            report.max_rel_error = err;
            report.worst_index = Some(i);
        }
        report.checked += 1;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_is_exact() {
        let params = [1.0f64, -2.0, 0.5];
        let analytic: Vec<f64> = params.iter().map(|p| 2.0 * p).collect();
        let r = finite_diff_check(|p| Ok(p.iter().map(|v| v * v).sum()), &params, &analytic, 1e-4).unwrap();
        assert!(r.max_rel_error < 1e-9);
        assert_eq!(r.checked, 3);
    }

    #[test]
    fn wrong_gradient_is_flagged() {
        let params = [1.0f64, 1.0];
        let r = finite_diff_check(|p| Ok(p[0] * p[1]), &params, &[1.0, 0.0], 1e-4).unwrap();
        assert!(r.max_rel_error > 0.9);
        assert_eq!(r.worst_index, Some(1));
    }

    #[test]
    fn non_finite_loss_errors() {
        let r = finite_diff_check(|p: &[f64]| Ok(p[0].ln()), &[0.0], &[1.0], 1e-4);
        assert!(matches!(r, Err(Error::NonFinite(_))));
    }
}
