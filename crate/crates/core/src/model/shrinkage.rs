//! Shrinkage coefficient `kappa = 1 / (1 + lambda^2 sigma_beta^2 / tau)` and related
//! diagnostics.
//!
//! With `lambda ~ St+(tau, 0, 1)` a change of variables gives
//!
//! ```text
//! p(kappa | tau, s) = s^tau kappa^(tau/2 - 1) (1 - kappa)^(-1/2) (1 - kappa + kappa s^2)^(-(tau+1)/2)
//!                     / B(tau/2, 1/2)
//! ```
//!
//! which is Beta(tau/2, 1/2) at `s = 1`. The last factor's exponent and the constant
//! `1 / B(tau/2, 1/2)` are forced by the transformation; a version without the exponent
//! and with an extra `1 / (2 sqrt(pi))` does not integrate to one.

use ndarray::{Array2, Array3};
use statrs::function::beta::ln_beta;

use crate::error::{Error, Result};
use crate::quad;

const TAU_MIN: f64 = 1e-2;
const TAU_MAX: f64 = 1e3;

pub fn kappa(lambda: f64, sigma_beta: f64, tau: f64) -> f64 {
    1.0 / (1.0 + lambda * lambda * sigma_beta * sigma_beta / tau)
}

fn ln_kappa_density(kappa: f64, tau: f64, sigma_beta: f64) -> f64 {
    let s2 = sigma_beta * sigma_beta;
    -ln_beta(0.5 * tau, 0.5) + tau * sigma_beta.ln() + (0.5 * tau - 1.0) * kappa.ln()
        - 0.5 * (1.0 - kappa).ln()
        - 0.5 * (tau + 1.0) * (1.0 - kappa + kappa * s2).ln()
}

/// Prior density of `kappa` given `tau` and `sigma_beta`.
pub fn kappa_density(kappa: f64, tau: f64, sigma_beta: f64) -> Result<f64> {
    if !(kappa > 0.0 && kappa < 1.0) {
        return Err(Error::Domain(format!(
            "kappa must lie in (0, 1), got {kappa}"
        )));
    }
    if !(tau > 0.0 && sigma_beta > 0.0) {
        return Err(Error::Domain("tau and sigma_beta must be positive".into()));
    }
    Ok(ln_kappa_density(kappa, tau, sigma_beta).exp())
}

/// Prior mean of `kappa`, by quadrature of `kappa p(kappa)`.
///
/// Substituting `kappa = v^(2/tau)` removes the `kappa^(tau/2 - 1)` singularity at zero,
/// which matters for small `tau`.
pub fn expected_kappa(tau: f64, sigma_beta: f64) -> Result<f64> {
    if !(tau > 0.0 && sigma_beta > 0.0) {
        return Err(Error::Domain("tau and sigma_beta must be positive".into()));
    }
    let s2 = sigma_beta * sigma_beta;
    let log_const = -ln_beta(0.5 * tau, 0.5) + tau * sigma_beta.ln() + (2.0 / tau).ln();
    let integrand = |v: f64, one_minus_v: f64| {
        if !(v > 0.0 && one_minus_v > 0.0) {
            return 0.0;
        }
        let ln_v = if v < 0.5 {
            v.ln()
        } else {
            (-one_minus_v).ln_1p()
        };
        let k = (2.0 / tau * ln_v).exp();
        let one_minus = -(2.0 / tau * ln_v).exp_m1();
        if one_minus <= 0.0 {
            return 0.0;
        }
        k * (log_const - 0.5 * one_minus.ln() - 0.5 * (tau + 1.0) * (one_minus + k * s2).ln()).exp()
    };
    Ok(quad::integrate_unit(integrand, 1e-12))
}

/// Finds `tau` in `[0.01, 1000]` whose prior mean shrinkage equals `target`.
pub fn calibrate_tau(target: f64, sigma_beta: f64) -> Result<f64> {
    if !(target > 0.0 && target < 1.0) {
        return Err(Error::Domain(format!(
            "target shrinkage must lie in (0, 1), got {target}"
        )));
    }
    let low = expected_kappa(TAU_MIN, sigma_beta)?;
    let high = expected_kappa(TAU_MAX, sigma_beta)?;
    if !(target >= low && target <= high) {
        return Err(Error::Calibration { target, low, high });
    }
    // expected_kappa increases with tau; bisect on log tau
    let (mut lo, mut hi) = (TAU_MIN.ln(), TAU_MAX.ln());
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if expected_kappa(mid.exp(), sigma_beta)? < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 {
            break;
        }
    }
    Ok((0.5 * (lo + hi)).exp())
}

/// Conditional mean of `beta_m` given shrinkage coefficients, the ridge-type quantity
///
/// ```text
/// (sum_t Y_t' S^-1 Y_t + tau^-1 diag(kappa / (1 - kappa)))^-1  sum_t Y_t' S^-1 r_t
/// ```
///
/// with `S = sigma2_m I_N`. The penalty equals the prior precision
/// `1 / (lambda^2 sigma_beta^2)`, so it grows without bound as `kappa -> 1`.
///
/// * `covariates`: shape (N, T, K)
/// * `response`: shape (N, T), the metabolite series regressed on the covariates
/// * `sigma2_m`: marginal variance `sigma_nu2 / (1 - theta^2) + sigma_gamma2`
pub fn conditional_beta_mean(
    covariates: &Array3<f64>,
    response: &Array2<f64>,
    sigma2_m: f64,
    kappa: &[f64],
    tau: f64,
) -> Result<Vec<f64>> {
    let (n, t, k) = covariates.dim();
    if response.dim() != (n, t) || kappa.len() != k {
        return Err(Error::Domain(
            "shape mismatch in conditional_beta_mean".into(),
        ));
    }
    if !(sigma2_m > 0.0 && tau > 0.0) {
        return Err(Error::Domain("variances must be positive".into()));
    }
    let mut lhs = nalgebra::DMatrix::<f64>::zeros(k, k);
    let mut rhs = nalgebra::DVector::<f64>::zeros(k);
    for tt in 0..t {
        for i in 0..n {
            for a in 0..k {
                let ya = covariates[[i, tt, a]] / sigma2_m;
                rhs[a] += ya * response[[i, tt]];
                for b in 0..k {
                    lhs[(a, b)] += ya * covariates[[i, tt, b]];
                }
            }
        }
    }
    for (a, &kap) in kappa.iter().enumerate() {
        if !(kap > 0.0 && kap < 1.0) {
            return Err(Error::Domain(format!(
                "kappa must lie in (0, 1), got {kap}"
            )));
        }
        lhs[(a, a)] += kap / ((1.0 - kap) * tau);
    }
    lhs.cholesky()
        .map(|c| c.solve(&rhs).iter().copied().collect())
        .ok_or_else(|| Error::Numeric("singular ridge system".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kappa_values() {
        assert_eq!(kappa(1.0, 1.0, 1.0), 0.5);
        assert_eq!(kappa(2.0, 0.5, 1.0), 0.5);
        assert!((kappa(1e-9, 1.0, 1.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn density_reduces_to_beta_at_unit_scale() {
        for &tau in &[0.5, 1.0, 3.0] {
            for &k in &[0.05, 0.3, 0.77, 0.99] {
                let beta = ((0.5 * tau - 1.0) * f64::ln(k)
                    - 0.5 * (1.0 - k).ln()
                    - ln_beta(0.5 * tau, 0.5))
                .exp();
                assert!((kappa_density(k, tau, 1.0).unwrap() - beta).abs() < 1e-12 * beta.max(1.0));
            }
        }
        // Beta(1/2, 1/2) at the centre is 2 / pi
        let centre = kappa_density(0.5, 1.0, 1.0).unwrap();
        assert!((centre - 2.0 / std::f64::consts::PI).abs() < 1e-12);
    }

    #[test]
    fn density_domain() {
        assert!(kappa_density(0.0, 1.0, 1.0).is_err());
        assert!(kappa_density(1.0, 1.0, 1.0).is_err());
        assert!(kappa_density(1.5, 1.0, 1.0).is_err());
    }

    #[test]
    fn expected_kappa_beta_means() {
        assert!((expected_kappa(1.0, 1.0).unwrap() - 0.5).abs() < 1e-8);
        assert!((expected_kappa(3.0, 1.0).unwrap() - 0.75).abs() < 1e-8);
    }

    #[test]
    fn calibrate_recovers_tau() {
        let tau = calibrate_tau(0.75, 1.0).unwrap();
        assert!((tau - 3.0).abs() < 1e-3, "{tau}");
    }

    #[test]
    fn calibrate_rejects_unattainable_target() {
        match calibrate_tau(0.999_999, 1.0) {
            Err(Error::Calibration { low, high, .. }) => assert!(low < high),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn expected_kappa_increases_with_tau() {
        for &s in &[0.5, 1.0, 2.0] {
            let grid: Vec<f64> = (0..25).map(|i| 10f64.powf(-1.5 + 0.2 * i as f64)).collect();
            let vals: Vec<f64> = grid
                .iter()
                .map(|&t| expected_kappa(t, s).unwrap())
                .collect();
            for w in vals.windows(2) {
                assert!(w[1] > w[0], "{vals:?}");
            }
        }
    }

    #[test]
    fn ridge_scalar_case() {
        let y = Array3::from_elem((1, 1, 1), 1.0);
        let r = Array2::from_elem((1, 1), 1.0);
        // penalty pi = kappa / ((1 - kappa) tau) = 0.25 / 0.75 = 1/3
        let b = conditional_beta_mean(&y, &r, 1.0, &[0.25], 1.0).unwrap();
        assert!((b[0] - 1.0 / (1.0 + 1.0 / 3.0)).abs() < 1e-14);
    }

    #[test]
    fn ridge_full_shrinkage_limit() {
        let y = Array3::from_shape_fn((3, 2, 2), |(i, t, k)| (i + 2 * t + k) as f64 * 0.3 - 0.5);
        let r = Array2::from_shape_fn((3, 2), |(i, t)| i as f64 - t as f64);
        let b = conditional_beta_mean(&y, &r, 1.0, &[1.0 - 1e-12, 1.0 - 1e-12], 1.0).unwrap();
        assert!(b.iter().all(|v| v.abs() < 1e-9), "{b:?}");
    }
}
