//! Privacy accounting for the Poisson-subsampled Gaussian mechanism.
//!
//! Per-step Rényi DP at integer orders is composed over `T` steps and
//! converted to `(ε, δ)` with `ε = min_α T·ε(α) + ln(1/δ)/(α − 1)`. The noise
//! multiplier `sigma` is always relative to the clipping bound.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Orders 2..=64 plus a few large ones for the high-privacy regime.
pub fn default_orders() -> Vec<u32> {
    (2..=64).chain([80, 128, 256]).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MechanismConfig {
    /// Sampling ratio `|B| / n`.
    pub q: f64,
    pub sigma: f64,
    pub steps: u64,
    pub delta: f64,
}

impl MechanismConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.q >= 0.0 && self.q <= 1.0) {
            return Err(Error::InvalidArgument(format!("q = {} outside [0, 1]", self.q)));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidArgument(format!("sigma = {} must be positive", self.sigma)));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidArgument(format!("delta = {} outside (0, 1)", self.delta)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrivacyLedger {
    pub config: MechanismConfig,
    /// `(α, T·ε(α))` for every tracked order.
    pub rdp_curve: Vec<(u32, f64)>,
    pub epsilon: f64,
    /// Order attaining the minimum; `None` for an empty composition.
    pub chosen_order: Option<u32>,
}

/// Per-step RDP of the subsampled Gaussian mechanism at integer order `alpha`:
/// `(1/(α−1)) ln Σ_j C(α,j) (1−q)^{α−j} q^j exp(j(j−1)/(2σ²))`, evaluated in
/// log space.
pub fn rdp_subsampled_gaussian(q: f64, sigma: f64, alpha: u32) -> Result<f64> {
    if alpha < 2 {
        return Err(Error::InvalidArgument(format!("order {alpha} must be at least 2")));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::InvalidArgument(format!("q = {q} outside [0, 1]")));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidArgument(format!("sigma = {sigma} must be positive")));
    }
    if q == 0.0 {
        return Ok(0.0);
    }
    let a = f64::from(alpha);
    let ln_q = q.ln();
    let ln_1mq = (-q).ln_1p();
    let two_s2 = 2.0 * sigma * sigma;
    let mut ln_binom = 0.0;
    let mut terms = Vec::with_capacity(alpha as usize + 1);
    for j in 0..=alpha {
        let jf = f64::from(j);
        if j > 0 {
            ln_binom += (a - jf + 1.0).ln() - jf.ln();
        }
        let rest = a - jf;
        // (1−q)^0 = 1 even when q = 1.
        let tail = if rest == 0.0 { 0.0 } else { rest * ln_1mq };
        if tail == f64::NEG_INFINITY {
            continue;
        }
        terms.push(ln_binom + tail + jf * ln_q + jf * (jf - 1.0) / two_s2);
    }
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln();
    Ok((lse / (a - 1.0)).max(0.0))
}

/// Composes `config.steps` mechanism runs and converts to `(ε, δ)`.
pub fn compose_and_convert(config: &MechanismConfig, orders: &[u32]) -> Result<PrivacyLedger> {
    config.validate()?;
    if orders.is_empty() {
        return Err(Error::InvalidArgument("no RDP orders given".into()));
    }
    let t = config.steps as f64;
    let mut rdp_curve = Vec::with_capacity(orders.len());
    for &a in orders {
        rdp_curve.push((a, t * rdp_subsampled_gaussian(config.q, config.sigma, a)?));
    }
    if config.steps == 0 {
        return Ok(PrivacyLedger {
            config: *config,
            rdp_curve,
            epsilon: 0.0,
            chosen_order: None,
        });
    }
    let ln_inv_delta = (1.0 / config.delta).ln();
    let (order, epsilon) = rdp_curve
        .iter()
        .map(|&(a, r)| (a, r + ln_inv_delta / (f64::from(a) - 1.0)))
        .fold((orders[0], f64::INFINITY), |best, c| if c.1 < best.1 { c } else { best });
    Ok(PrivacyLedger {
        config: *config,
        rdp_curve,
        epsilon,
        chosen_order: Some(order),
    })
}

pub fn epsilon(q: f64, sigma: f64, steps: u64, delta: f64) -> Result<f64> {
    Ok(compose_and_convert(&MechanismConfig { q, sigma, steps, delta }, &default_orders())?.epsilon)
}

const SIGMA_MIN: f64 = 1e-3;
const SIGMA_MAX: f64 = 1e5;

/// Smallest noise multiplier whose composed ε does not exceed `target_eps`.
///
/// Scans a geometric grid for the first feasible σ, then bisects the bracket
/// down to a relative width of 1e-9.
pub fn calibrate_sigma(target_eps: f64, delta: f64, q: f64, steps: u64) -> Result<f64> {
    if !(target_eps > 0.0 && target_eps.is_finite()) {
        return Err(Error::InvalidArgument(format!("target ε = {target_eps} must be positive")));
    }
    if steps == 0 {
        return Err(Error::InvalidArgument("nothing to calibrate for zero steps".into()));
    }
    let eps_at = |s: f64| epsilon(q, s, steps, delta);
    if eps_at(SIGMA_MIN)? <= target_eps {
        return Err(Error::UnreachableTarget(format!(
            "ε = {target_eps} is already met at σ = {SIGMA_MIN}"
        )));
    }
    let mut lo = SIGMA_MIN;
    let mut hi = lo;
    loop {
        hi *= 1.25;
        if hi > SIGMA_MAX {
            return Err(Error::UnreachableTarget(format!(
                "ε = {target_eps} not reached for σ ≤ {SIGMA_MAX}"
            )));
        }
        if eps_at(hi)? <= target_eps {
            break;
        }
        lo = hi;
    }
    while hi / lo - 1.0 > 1e-9 {
        let mid = 0.5 * (lo + hi);
        if eps_at(mid)? <= target_eps {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// `σ = √(c₂ G² T ln(1/δ)) / (n ε)`.
pub fn closed_form_sigma(eps: f64, delta: f64, steps: u64, n: usize, g: f64, c2: f64) -> Result<f64> {
    if !(eps > 0.0 && delta > 0.0 && delta < 1.0 && steps > 0 && n > 0 && g > 0.0 && c2 > 0.0) {
        return Err(Error::InvalidArgument(
            "closed-form bound needs positive ε, G, T, n, c₂ and δ in (0, 1)".into(),
        ));
    }
    Ok((c2 * g * g * steps as f64 * (1.0 / delta).ln()).sqrt() / (n as f64 * eps))
}

/// Warning text when `ε > c₁ q² T`, the range where the closed form applies.
pub fn closed_form_warning(eps: f64, q: f64, steps: u64, c1: f64) -> Option<String> {
    let limit = c1 * q * q * steps as f64;
    (eps > limit).then(|| format!("ε = {eps} exceeds c₁q²T = {limit}; closed form may not apply"))
}

#[cfg(test)]
mod tests {
    use super::*;

    const MNIST_Q: f64 = 250.0 / 10_000.0;
    const MNIST_T: u64 = 1200;

    #[test]
    fn full_batch_reduces_to_gaussian() {
        assert!((rdp_subsampled_gaussian(1.0, 1.0, 2).unwrap() - 1.0).abs() < 1e-12);
        for a in [2, 5, 17, 64, 256] {
            for s in [0.7, 1.0, 3.0] {
                let g = f64::from(a) / (2.0 * s * s);
                let r = rdp_subsampled_gaussian(1.0, s, a).unwrap();
                assert!((r - g).abs() <= 1e-12 * g, "{a} {s}");
            }
        }
    }

    #[test]
    fn zero_sampling_is_free() {
        for a in [2, 10, 256] {
            assert_eq!(rdp_subsampled_gaussian(0.0, 1.0, a).unwrap(), 0.0);
        }
    }

    #[test]
    fn order_below_two_rejected() {
        assert!(rdp_subsampled_gaussian(0.1, 1.0, 1).is_err());
        assert!(rdp_subsampled_gaussian(0.1, 0.0, 2).is_err());
    }

    #[test]
    fn reference_table_values() {
        for (s, e) in [(4.0, 1.09), (18.0, 0.23)] {
            let eps = epsilon(MNIST_Q, s, MNIST_T, 1e-5).unwrap();
            assert!((eps - e).abs() <= 0.15 * e, "σ={s}: {eps}");
        }
    }

    #[test]
    fn empty_composition() {
        let l = compose_and_convert(
            &MechanismConfig {
                q: MNIST_Q,
                sigma: 4.0,
                steps: 0,
                delta: 1e-5,
            },
            &default_orders(),
        )
        .unwrap();
        assert_eq!(l.epsilon, 0.0);
        assert_eq!(l.chosen_order, None);
    }

    #[test]
    fn single_order_conversion_is_exact() {
        let cfg = MechanismConfig {
            q: 0.01,
            sigma: 1.3,
            steps: 500,
            delta: 1e-6,
        };
        let l = compose_and_convert(&cfg, &[12]).unwrap();
        let expect = 500.0 * rdp_subsampled_gaussian(0.01, 1.3, 12).unwrap() + (1e6f64).ln() / 11.0;
        assert_eq!(l.epsilon, expect);
        assert_eq!(l.chosen_order, Some(12));
    }

    #[test]
    fn calibration_round_trip_and_monotonicity() {
        let s = calibrate_sigma(1.09, 1e-5, MNIST_Q, MNIST_T).unwrap();
        assert!((3.4..=4.6).contains(&s), "{s}");
        let e = epsilon(MNIST_Q, s, MNIST_T, 1e-5).unwrap();
        assert!((e - 1.09).abs() / 1.09 < 0.01);
        let s2 = calibrate_sigma(1.09, 1e-5, MNIST_Q, 2 * MNIST_T).unwrap();
        assert!(s2 > s);
    }

    #[test]
    fn calibration_rejects_unreachable_targets() {
        assert!(matches!(
            calibrate_sigma(1e-9, 1e-5, 0.5, 1000),
            Err(Error::UnreachableTarget(_))
        ));
        assert!(calibrate_sigma(0.0, 1e-5, 0.5, 1000).is_err());
    }

    #[test]
    fn closed_form_scaling() {
        let base = closed_form_sigma(1.09, 1e-5, 1200, 10_000, 1.0, 2.0).unwrap();
        let expect = (2.0 * 1200.0 * (1e5f64).ln()).sqrt() / (10_000.0 * 1.09);
        assert!((base - expect).abs() < 1e-15);
        let half = closed_form_sigma(1.09, 1e-5, 1200, 20_000, 1.0, 2.0).unwrap();
        assert!((half - base / 2.0).abs() < 1e-15);
        let dbl = closed_form_sigma(1.09, 1e-5, 4800, 10_000, 1.0, 2.0).unwrap();
        assert!((dbl - 2.0 * base).abs() < 1e-14);
        assert!(closed_form_warning(10.0, 0.025, 1200, 1.0).is_some());
        assert!(closed_form_warning(0.5, 0.025, 1200, 1.0).is_none());
    }
}
