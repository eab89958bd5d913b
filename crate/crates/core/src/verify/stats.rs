use crate::error::{Error, Result};

/// Sample mean and (n − 1)-normalised standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn stderr(xs: &[f64]) -> f64 {
    mean_std(xs).1 / (xs.len() as f64).sqrt()
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    match n {
        0 => f64::NAN,
        _ if n % 2 == 1 => v[n / 2],
        _ => 0.5 * (v[n / 2 - 1] + v[n / 2]),
    }
}

/// Least-squares `(intercept, slope)` of `y` on `x`.
fn linear_fit(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::InvalidArgument("fit needs at least two distinct x values".into()));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    Ok((my - slope * mx, slope))
}

/// Slope of `ln y` against `ln x`. Needs at least three positive points.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 3 {
        return Err(Error::InvalidArgument("slope needs at least three points".into()));
    }
    if x.iter().chain(y).any(|v| !(*v > 0.0)) {
        return Err(Error::InvalidArgument("log-log fit needs positive values".into()));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    Ok(linear_fit(&lx, &ly)?.1)
}

/// Fits `y(j) ≈ c · j^(−exponent)` for `j = 1, 2, …` on log-log axes,
/// ignoring zero entries. Returns `(c, exponent)`.
pub fn fit_power_law(y: &[f64]) -> Result<(f64, f64)> {
    let (lx, ly): (Vec<f64>, Vec<f64>) = y
        .iter()
        .enumerate()
        .filter(|(_, v)| **v > 0.0)
        .map(|(j, v)| (((j + 1) as f64).ln(), v.ln()))
        .unzip();
    if lx.len() < 2 {
        return Err(Error::InvalidArgument("power-law fit needs two non-zero values".into()));
    }
    let (a, b) = linear_fit(&lx, &ly)?;
    Ok((a.exp(), -b))
}
