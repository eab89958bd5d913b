use crate::error::{Error, Result};

/// Central-difference gradient of `f` at `w`.
pub fn finite_diff_grad<F>(f: F, w: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> f64,
{
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidArgument(format!("step h = {h} must be positive")));
    }
    let mut x = w.to_vec();
    let mut grad = Vec::with_capacity(w.len());
    for i in 0..w.len() {
        let orig = x[i];
        x[i] = orig + h;
        let fp = f(&x);
        x[i] = orig - h;
        let fm = f(&x);
        x[i] = orig;
        if !fp.is_finite() || !fm.is_finite() {
            return Err(Error::NonFinite(format!("f at coordinate {i}")));
        }
        grad.push((fp - fm) / (2.0 * h));
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_squared_norm() {
        let g = finite_diff_grad(|w| 0.5 * w.iter().map(|x| x * x).sum::<f64>(), &[1.0, 2.0], 1e-5)
            .unwrap();
        assert!((g[0] - 1.0).abs() < 1e-8 && (g[1] - 2.0).abs() < 1e-8);
    }

    #[test]
    fn bilinear() {
        let g = finite_diff_grad(|w| w[0] * w[1], &[3.0, 4.0], 1e-5).unwrap();
        assert!((g[0] - 4.0).abs() < 1e-8 && (g[1] - 3.0).abs() < 1e-8);
    }

    #[test]
    fn rejects_non_finite_values() {
        let r = finite_diff_grad(|w| if w[0] > 0.0 { f64::NAN } else { 0.0 }, &[0.0], 1e-3);
        assert!(matches!(r, Err(Error::NonFinite(_))));
        assert!(finite_diff_grad(|_| 0.0, &[0.0], 0.0).is_err());
    }
}
