use crate::error::{Error, Result};

/// Compares an analytic gradient against central finite differences and
/// returns the largest relative error `|a − n| / max(|a|, |n|, 1e-8)` over
/// all coordinates of `x`.
pub fn check_gradients<F, G>(f: F, grad: G, x: &[f64], eps: f64) -> Result<f64>
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> Vec<f64>,
{
    if !(1e-7..=1e-3).contains(&eps) {
        return Err(Error::InvalidArgument(format!(
            "finite-difference step {eps} outside [1e-7, 1e-3]"
        )));
    }
    let analytic = grad(x);
    if analytic.len() != x.len() {
        return Err(Error::shape(&[x.len()], &[analytic.len()]));
    }
    let mut probe = x.to_vec();
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        probe[i] = x[i] + eps;
        let up = f(&probe);
        probe[i] = x[i] - eps;
        let down = f(&probe);
        probe[i] = x[i];
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::NonFinite(format!("objective at coordinate {i}")));
        }
        let numeric = (up - down) / (2.0 * eps);
        let a = analytic[i];
        let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
        worst = worst.max(err);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_at_three() {
        let err = check_gradients(|v| v[0] * v[0], |v| vec![2.0 * v[0]], &[3.0], 1e-5).unwrap();
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn constant_function() {
        let err = check_gradients(|_| 4.2, |v| vec![0.0; v.len()], &[1.0, -2.0], 1e-5).unwrap();
        assert_eq!(err, 0.0);
    }

    #[test]
    fn detects_wrong_gradient() {
        let err = check_gradients(|v| v[0] * v[0], |v| vec![3.0 * v[0]], &[1.0], 1e-5).unwrap();
        assert!(err > 0.1);
    }

    #[test]
    fn rejects_non_finite_and_bad_eps() {
        assert!(matches!(
            check_gradients(|v| v[0].ln(), |_| vec![0.0], &[5e-6], 1e-5),
            Err(Error::NonFinite(_))
        ));
        assert!(check_gradients(|v| v[0], |_| vec![1.0], &[0.0], 1e-2).is_err());
    }
}
