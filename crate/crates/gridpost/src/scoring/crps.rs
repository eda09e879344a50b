//! Continuous ranked probability score: closed form for Gaussian forecasts,
//! exact form for finite ensembles, and a quadrature oracle evaluating the
//! defining integral for arbitrary CDFs.

use serde::{Deserialize, Serialize};

use super::normal::{std_normal_cdf, std_normal_pdf};
use crate::error::{Error, Result};

const INV_SQRT_PI: f64 = 0.564_189_583_547_756_3;

/// Gaussian predictive distribution for one station/date.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianForecast {
    pub mu: f64,
    pub sigma: f64,
}

impl GaussianForecast {
    pub fn new(mu: f64, sigma: f64) -> Result<Self> {
        if !mu.is_finite() || !sigma.is_finite() || sigma <= 0.0 {
            return Err(Error::domain(format!(
                "Gaussian forecast needs finite mu and sigma > 0, got ({mu}, {sigma})"
            )));
        }
        Ok(GaussianForecast { mu, sigma })
    }
}

/// CRPS of a Gaussian forecast against observation `y`:
/// `sigma * (z*(2*Phi(z)-1) + 2*phi(z) - 1/sqrt(pi))` with `z=(y-mu)/sigma`.
pub fn crps_gaussian(forecast: GaussianForecast, y: f64) -> Result<f64> {
    if forecast.sigma <= 0.0 {
        return Err(Error::domain(format!("sigma must be positive, got {}", forecast.sigma)));
    }
    let z = (y - forecast.mu) / forecast.sigma;
    Ok(forecast.sigma * (z * (2.0 * std_normal_cdf(z) - 1.0) + 2.0 * std_normal_pdf(z) - INV_SQRT_PI))
}

/// Analytic gradient of [`crps_gaussian`] with respect to (mu, sigma):
/// `d/dmu = -(2*Phi(z)-1)`, `d/dsigma = 2*phi(z) - 1/sqrt(pi)`.
pub fn crps_gaussian_grad(forecast: GaussianForecast, y: f64) -> Result<(f64, f64)> {
    if forecast.sigma <= 0.0 {
        return Err(Error::domain(format!("sigma must be positive, got {}", forecast.sigma)));
    }
    let z = (y - forecast.mu) / forecast.sigma;
    Ok((-(2.0 * std_normal_cdf(z) - 1.0), 2.0 * std_normal_pdf(z) - INV_SQRT_PI))
}

/// Exact CRPS of an empirical ensemble:
/// `mean|x_i - y| - 0.5 * mean|x_i - x_j|` over all ordered pairs.
pub fn crps_ensemble(members: &[f64], y: f64) -> Result<f64> {
    if members.is_empty() {
        return Err(Error::domain("ensemble CRPS needs at least one member"));
    }
    let m = members.len() as f64;
    let term1 = members.iter().map(|x| (x - y).abs()).sum::<f64>() / m;
    let mut spread = 0.0;
    for (i, xi) in members.iter().enumerate() {
        // Pairs are symmetric; accumulate the upper triangle twice.
        for xj in &members[i + 1..] {
            spread += 2.0 * (xi - xj).abs();
        }
    }
    Ok(term1 - 0.5 * spread / (m * m))
}

/// Quadrature oracle for the defining integral
/// `int_lo^hi (F(z) - 1{y <= z})^2 dz`.
///
/// The integrand jumps at `y`, so the range is split there and each smooth
/// piece is integrated with composite Simpson on roughly `n` total nodes
/// (error O(n^-4) for smooth `F`).
pub fn crps_numeric(cdf: impl Fn(f64) -> f64, y: f64, lo: f64, hi: f64, n: usize) -> Result<f64> {
    if lo >= hi {
        return Err(Error::domain(format!("integration bounds [{lo}, {hi}] are empty")));
    }
    if n < 4 {
        return Err(Error::domain("quadrature needs at least 4 nodes"));
    }
    let split = y.clamp(lo, hi);
    let below = |z: f64| {
        let f = cdf(z);
        f * f
    };
    let above = |z: f64| {
        let f = cdf(z) - 1.0;
        f * f
    };
    let frac = ((split - lo) / (hi - lo)).clamp(0.0, 1.0);
    let n_lo = ((n as f64 * frac) as usize).max(4);
    let n_hi = (n.saturating_sub(n_lo)).max(4);
    let mut total = 0.0;
    if split > lo {
        total += simpson(&below, lo, split, n_lo);
    }
    if hi > split {
        total += simpson(&above, split, hi, n_hi);
    }
    Ok(total)
}

/// Composite Simpson with an even number of panels (at least 2).
fn simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, nodes: usize) -> f64 {
    let panels = (nodes.max(3) - 1).next_multiple_of(2);
    let h = (b - a) / panels as f64;
    let mut acc = f(a) + f(b);
    for i in 1..panels {
        let x = a + h * i as f64;
        acc += f(x) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    acc * h / 3.0
}

/// CRPS skill score `1 - score/reference`; positive is an improvement over
/// the reference.
pub fn crpss(score: f64, reference: f64) -> Result<f64> {
    if reference <= 0.0 || !reference.is_finite() {
        return Err(Error::domain(format!("reference score must be positive, got {reference}")));
    }
    Ok(1.0 - score / reference)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaussian_cdf(mu: f64, sigma: f64) -> impl Fn(f64) -> f64 {
        move |z| std_normal_cdf((z - mu) / sigma)
    }

    #[test]
    fn closed_form_matches_quadrature_oracle() {
        // Frozen values computed with the quadrature oracle on
        // [mu-10sigma, mu+10sigma], n=20001; they agree with the closed form.
        let cases = [
            ((0.0, 1.0, 0.0), 0.233_695_0),
            ((0.0, 1.0, 2.0), 1.452_791_8),
        ];
        for ((mu, sigma, y), expect) in cases {
            let f = GaussianForecast::new(mu, sigma).unwrap();
            let closed = crps_gaussian(f, y).unwrap();
            let numeric =
                crps_numeric(gaussian_cdf(mu, sigma), y, mu - 10.0 * sigma, mu + 10.0 * sigma, 20001)
                    .unwrap();
            assert!((closed - expect).abs() < 1e-6, "closed {closed} vs {expect}");
            assert!((closed - numeric).abs() < 1e-6, "closed {closed} vs numeric {numeric}");
        }
    }

    #[test]
    fn degenerate_forecast_at_truth_scores_zero() {
        let f = GaussianForecast::new(3.0, 1e-9).unwrap();
        assert!(crps_gaussian(f, 3.0).unwrap() < 1e-8);
    }

    #[test]
    fn sigma_must_be_positive() {
        assert!(GaussianForecast::new(0.0, 0.0).is_err());
        assert!(GaussianForecast::new(0.0, -1.0).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let f = GaussianForecast::new(0.0, 1.0).unwrap();
        // Symmetry: at y == mu the mu-gradient vanishes.
        let (dmu, _) = crps_gaussian_grad(f, 0.0).unwrap();
        assert!(dmu.abs() < 1e-15);

        let (dmu, _) = crps_gaussian_grad(f, 2.0).unwrap();
        assert!((dmu + 0.954_50).abs() < 1e-5);

        let eps = 1e-6;
        for &(mu, sigma, y) in &[(0.3, 0.8, -0.4), (-1.0, 2.5, 3.0), (5.0, 0.2, 5.1)] {
            let f = GaussianForecast::new(mu, sigma).unwrap();
            let (dmu, dsigma) = crps_gaussian_grad(f, y).unwrap();
            let num_mu = (crps_gaussian(GaussianForecast::new(mu + eps, sigma).unwrap(), y).unwrap()
                - crps_gaussian(GaussianForecast::new(mu - eps, sigma).unwrap(), y).unwrap())
                / (2.0 * eps);
            let num_sigma = (crps_gaussian(GaussianForecast::new(mu, sigma + eps).unwrap(), y).unwrap()
                - crps_gaussian(GaussianForecast::new(mu, sigma - eps).unwrap(), y).unwrap())
                / (2.0 * eps);
            assert!((dmu - num_mu).abs() / num_mu.abs().max(1.0) < 1e-6);
            assert!((dsigma - num_sigma).abs() / num_sigma.abs().max(1.0) < 1e-6);
        }
    }

    #[test]
    fn ensemble_crps_cases() {
        assert!((crps_ensemble(&[0.0, 1.0], 0.5).unwrap() - 0.25).abs() < 1e-15);
        assert!((crps_ensemble(&[1.7], 0.4).unwrap() - 1.3).abs() < 1e-15);
        assert_eq!(crps_ensemble(&[2.0, 2.0, 2.0], 2.0).unwrap(), 0.0);
        assert!(crps_ensemble(&[], 0.0).is_err());
    }

    #[test]
    fn quadrature_handles_step_and_empirical_cdfs() {
        // Point forecast at x: CRPS reduces to |x - y|.
        let step = |x: f64| move |z: f64| if z >= x { 1.0 } else { 0.0 };
        let v = crps_numeric(step(0.25), 0.75, -1.0, 2.0, 48001).unwrap();
        assert!((v - 0.5).abs() < 1e-3, "step cdf gave {v}");

        // Empirical CDF of {0, 1} matches the exact ensemble formula.
        let emp = |z: f64| {
            let mut c = 0.0;
            if z >= 0.0 {
                c += 0.5;
            }
            if z >= 1.0 {
                c += 0.5;
            }
            c
        };
        let v = crps_numeric(emp, 0.5, -1.0, 2.0, 48001).unwrap();
        assert!((v - 0.25).abs() < 1e-3, "empirical cdf gave {v}");
        assert!((v - crps_ensemble(&[0.0, 1.0], 0.5).unwrap()).abs() < 1e-3);
    }

    #[test]
    fn quadrature_rejects_empty_range() {
        assert!(crps_numeric(|_| 0.5, 0.0, 1.0, 1.0, 100).is_err());
    }

    #[test]
    fn skill_score() {
        assert!((crpss(0.9, 1.0).unwrap() - 0.1).abs() < 1e-15);
        assert_eq!(crpss(1.0, 1.0).unwrap(), 0.0);
        assert_eq!(crpss(2.0, 1.0).unwrap(), -1.0);
        assert!(crpss(1.0, 0.0).is_err());
    }
}
