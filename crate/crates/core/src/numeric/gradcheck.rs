use crate::error::{Error, Result};

/// Outcome of a finite-difference comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    /// max over coordinates of |analytic - numeric| / max(1, |analytic| + |numeric|)
    pub max_rel_error: f64,
    pub worst_index: Option<usize>,
    pub analytic: f64,
    pub numeric: f64,
}

/// Compares the analytic gradient returned by `loss_fn` against central
/// differences with step `eps`.
///
/// `loss_fn` maps a parameter vector to `(loss, gradient)`. It is evaluated
/// twice at the unperturbed point; any difference between the two calls is
/// reported as a contract violation, since the comparison is meaningless for
/// a stochastic loss.
pub fn grad_check<F>(mut loss_fn: F, params: &[f64], eps: f64) -> Result<GradCheck>
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    if !(eps > 0.0) {
        return Err(Error::Parameter(format!("finite-difference step {eps}")));
    }
    let (l0, analytic) = loss_fn(params);
    let (l1, analytic_again) = loss_fn(params);
    if l0.to_bits() != l1.to_bits() || analytic.iter().zip(&analytic_again).any(|(a, b)| a.to_bits() != b.to_bits()) {
        return Err(Error::Contract("loss function is not deterministic".into()));
    }
    if analytic.len() != params.len() {
        return Err(Error::Dimension(format!(
            "gradient has {} entries for {} parameters",
            analytic.len(),
            params.len()
        )));
    }

    let mut report = GradCheck { max_rel_error: 0.0, worst_index: None, analytic: 0.0, numeric: 0.0 };
    let mut probe = params.to_vec();
    for i in 0..params.len() {
        let orig = probe[i];
        probe[i] = orig + eps;
        let (up, _) = loss_fn(&probe);
        probe[i] = orig - eps;
        let (down, _) = loss_fn(&probe);
        probe[i] = orig;

        let numeric = (up - down) / (2.0 * eps);
        let a = analytic[i];
        let err = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1.0);
        if err > report.max_rel_error || report.worst_index.is_none() {
            report = GradCheck { max_rel_error: err, worst_index: Some(i), analytic: a, numeric };
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::cell::Cell;

    #[test]
    fn quadratic() {
        let r = grad_check(|p| (p[0] * p[0], vec![2.0 * p[0]]), &[3.0], 1e-5).unwrap();
        assert!(r.max_rel_error < 1e-8, "{r:?}");
        assert!((r.analytic - 6.0).abs() < 1e-15);
        assert!((r.numeric - 6.0).abs() < 1e-8);
    }

    #[test]
    fn constant_loss() {
        let r = grad_check(|p| (4.0, vec![0.0; p.len()]), &[1.0, -2.0, 0.5], 1e-5).unwrap();
        assert_eq!(r.max_rel_error, 0.0);
    }

    #[test]
    fn detects_wrong_gradient() {
        let r = grad_check(|p| (p[0].powi(3), vec![2.0 * p[0]]), &[2.0], 1e-5).unwrap();
        assert!(r.max_rel_error > 0.1);
    }

    #[test]
    fn rejects_nondeterministic_loss() {
        let calls = Cell::new(0.0);
        let err = grad_check(
            |p| {
                calls.set(calls.get() + 1.0);
                (p[0] + calls.get(), vec![1.0])
            },
            &[0.0],
            1e-5,
        )
        .unwrap_err();
        assert_eq!(err.category(), "contract");
    }
}
