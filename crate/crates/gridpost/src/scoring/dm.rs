//! Diebold-Mariano test of equal predictive performance.

use serde::{Deserialize, Serialize};

use super::normal::std_normal_cdf;
use crate::error::{Error, Result};

/// Per-date score series of one model at one station.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScoreSeries {
    pub station_id: String,
    pub model_id: String,
    pub values: Vec<f64>,
}

#[derive(Clone, Copy, Debug)]
pub struct DmTest {
    pub statistic: f64,
    pub p_value: f64,
}

/// Two-sided Diebold-Mariano test on paired loss series.
///
/// The statistic is `mean(d) / sqrt(var_hat/n)` for the differential
/// `d_t = a_t - b_t`, with the long-run variance estimated by Newey-West
/// (Bartlett kernel, lag `floor(n^(1/3))`) to absorb serial correlation of
/// forecast errors; the p-value uses the standard normal reference. An
/// identically-zero differential is the defined degenerate case (0, 1).
pub fn dm_test(loss_a: &[f64], loss_b: &[f64]) -> Result<DmTest> {
    if loss_a.len() != loss_b.len() {
        return Err(Error::eval(format!(
            "loss series must be paired: {} vs {} entries",
            loss_a.len(),
            loss_b.len()
        )));
    }
    let n = loss_a.len();
    if n < 10 {
        return Err(Error::eval(format!("DM test needs at least 10 pairs, got {n}")));
    }
    let d: Vec<f64> = loss_a.iter().zip(loss_b).map(|(a, b)| a - b).collect();
    if d.iter().all(|&v| v == 0.0) {
        return Ok(DmTest {
            statistic: 0.0,
            p_value: 1.0,
        });
    }
    let nf = n as f64;
    let mean = d.iter().sum::<f64>() / nf;
    let centered: Vec<f64> = d.iter().map(|v| v - mean).collect();
    let lag = (nf.powf(1.0 / 3.0)).floor() as usize;
    let gamma = |k: usize| -> f64 {
        centered[k..]
            .iter()
            .zip(&centered)
            .map(|(a, b)| a * b)
            .sum::<f64>()
            / nf
    };
    let mut long_run = gamma(0);
    for k in 1..=lag.min(n - 1) {
        let weight = 1.0 - k as f64 / (lag as f64 + 1.0);
        long_run += 2.0 * weight * gamma(k);
    }
    if long_run <= 0.0 || !long_run.is_finite() {
        // Bartlett weights keep the estimate nonnegative; zero means the
        // centered differential is numerically constant.
        let statistic = if mean > 0.0 {
            f64::INFINITY
        } else if mean < 0.0 {
            f64::NEG_INFINITY
        } else {
            0.0
        };
        return Ok(DmTest {
            statistic,
            p_value: if mean == 0.0 { 1.0 } else { 0.0 },
        });
    }
    let statistic = mean / (long_run / nf).sqrt();
    let p_value = 2.0 * std_normal_cdf(-statistic.abs());
    Ok(DmTest {
        statistic,
        p_value: p_value.min(1.0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use rand::Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn identical_series_is_degenerate() {
        let a: Vec<f64> = (0..50).map(|i| (i as f64).sin().abs()).collect();
        let out = dm_test(&a, &a).unwrap();
        assert_eq!(out.statistic, 0.0);
        assert_eq!(out.p_value, 1.0);
    }

    #[test]
    fn constant_dominance_is_significant() {
        let mut rng = stream(5, "dm");
        let b: Vec<f64> = (0..200).map(|_| 1.0 + 1e-6 * rng.sample::<f64, _>(StandardNormal)).collect();
        let a: Vec<f64> = b.iter().map(|v| v + 0.5).collect();
        let out = dm_test(&a, &b).unwrap();
        assert!(out.statistic > 0.0);
        assert!(out.p_value < 1e-10);
    }

    #[test]
    fn antisymmetric_under_swap() {
        let mut rng = stream(6, "dm");
        let a: Vec<f64> = (0..120).map(|_| rng.random_range(0.0..2.0)).collect();
        let b: Vec<f64> = (0..120).map(|_| rng.random_range(0.0..2.0)).collect();
        let ab = dm_test(&a, &b).unwrap();
        let ba = dm_test(&b, &a).unwrap();
        assert!((ab.statistic + ba.statistic).abs() < 1e-12);
        assert!((ab.p_value - ba.p_value).abs() < 1e-12);
    }

    #[test]
    fn rejects_unpaired_or_short_series() {
        assert!(dm_test(&[1.0; 10], &[1.0; 9]).is_err());
        assert!(dm_test(&[1.0; 5], &[1.0; 5]).is_err());
    }

    #[test]
    fn null_rejection_rate_is_calibrated() {
        // i.i.d. N(0,1) differentials: rejection rate at alpha=0.05 should
        // sit near the nominal level. The full 1000-replication calibration
        // run lives in the acceptance suite; this is a faster smoke check.
        let mut rng = stream(99, "dm-null");
        let mut rejections = 0;
        let reps = 300;
        for _ in 0..reps {
            let a: Vec<f64> = (0..365).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let b = vec![0.0; 365];
            if dm_test(&a, &b).unwrap().p_value < 0.05 {
                rejections += 1;
            }
        }
        let rate = rejections as f64 / reps as f64;
        assert!((0.02..=0.09).contains(&rate), "rejection rate {rate}");
    }
}
