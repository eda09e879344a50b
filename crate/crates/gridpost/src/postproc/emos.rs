//! Per-station EMOS: Gaussian predictive distribution with affine mean link
//! `mu = a + b*mean` and positive spread link `sigma = softplus(c + d*sd)`,
//! fitted by full-batch gradient descent on the mean CRPS with a
//! backtracking line search (training CRPS decreases monotonically).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{sigmoid, softplus, softplus_inv};
use crate::dataio::Dataset;
use crate::error::{Error, Result};
use crate::scoring::{crps_gaussian, crps_gaussian_grad, GaussianForecast};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmosParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EmosModel {
    pub target_var: String,
    pub station_params: BTreeMap<String, EmosParams>,
}

const MIN_SAMPLES: usize = 30;
const MAX_ITER: usize = 500;
const SIGMA_FLOOR: f64 = 1e-9;

/// Predictive distribution from fitted coefficients; sigma is strictly
/// positive for any input through the softplus link.
pub fn emos_predict(params: &EmosParams, mean: f64, sd: f64) -> GaussianForecast {
    GaussianForecast {
        mu: params.a + params.b * mean,
        sigma: softplus(params.c + params.d * sd).max(SIGMA_FLOOR),
    }
}

fn mean_crps_and_grad(params: &EmosParams, samples: &[(f64, f64, f64)], freeze_d: bool) -> (f64, [f64; 4]) {
    let n = samples.len() as f64;
    let mut loss = 0.0;
    let mut grad = [0.0f64; 4];
    for &(mean, sd, obs) in samples {
        let raw = params.c + params.d * sd;
        let sigma = softplus(raw).max(SIGMA_FLOOR);
        let f = GaussianForecast {
            mu: params.a + params.b * mean,
            sigma,
        };
        loss += crps_gaussian(f, obs).expect("sigma > 0") / n;
        let (gmu, gsigma) = crps_gaussian_grad(f, obs).expect("sigma > 0");
        let chain = gsigma * sigmoid(raw) / n;
        grad[0] += gmu / n;
        grad[1] += gmu * mean / n;
        grad[2] += chain;
        grad[3] += chain * sd;
    }
    if freeze_d {
        grad[3] = 0.0;
    }
    (loss, grad)
}

/// Fits one station from `(ensemble mean, ensemble sd, observation)` rows.
/// Returns the coefficients and the per-iteration training CRPS.
pub fn emos_fit_station(samples: &[(f64, f64, f64)]) -> Result<(EmosParams, Vec<f64>)> {
    if samples.len() < MIN_SAMPLES {
        return Err(Error::data(format!(
            "EMOS needs at least {MIN_SAMPLES} training samples per station, got {}",
            samples.len()
        )));
    }
    let n = samples.len() as f64;
    // With a constant sd predictor d is unidentifiable; fix it at zero and
    // let c carry the spread.
    let sd_mean = samples.iter().map(|s| s.1).sum::<f64>() / n;
    let sd_var = samples.iter().map(|s| (s.1 - sd_mean).powi(2)).sum::<f64>() / n;
    let freeze_d = sd_var == 0.0;

    let resid_var = samples.iter().map(|&(m, _, y)| (y - m).powi(2)).sum::<f64>() / n;
    let mut params = EmosParams {
        a: 0.0,
        b: 1.0,
        c: softplus_inv(resid_var.sqrt().max(1e-3)),
        d: 0.0,
    };
    let mut history = Vec::new();
    let mut step = 0.5f64;
    for _ in 0..MAX_ITER {
        let (loss, grad) = mean_crps_and_grad(&params, samples, freeze_d);
        history.push(loss);
        let gnorm2: f64 = grad.iter().map(|g| g * g).sum();
        if gnorm2 < 1e-16 {
            break;
        }
        // Backtracking line search (Armijo), warm-started from the last
        // accepted step.
        let mut t = (step * 4.0).min(8.0);
        let mut accepted = false;
        while t > 1e-18 {
            let candidate = EmosParams {
                a: params.a - t * grad[0],
                b: params.b - t * grad[1],
                c: params.c - t * grad[2],
                d: params.d - t * grad[3],
            };
            let (new_loss, _) = mean_crps_and_grad(&candidate, samples, freeze_d);
            if new_loss <= loss - 1e-4 * t * gnorm2 {
                params = candidate;
                step = t;
                accepted = true;
                if loss - new_loss < 1e-12 * loss.abs().max(1.0) {
                    history.push(new_loss);
                    return Ok((params, history));
                }
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    let (final_loss, _) = mean_crps_and_grad(&params, samples, freeze_d);
    history.push(final_loss);
    Ok((params, history))
}

/// Fits EMOS coefficients for every station in the dataset using the target
/// variable's interpolated ensemble mean and sd. Samples are ordered by
/// date per station before fitting, so input order cannot change the fit.
pub fn emos_fit(dataset: &Dataset, target_var: &str) -> Result<EmosModel> {
    let mean_col = predictor_column(dataset, &format!("{target_var}_mean"))?;
    let sd_col = predictor_column(dataset, &format!("{target_var}_sd"))?;
    let mut per_station: BTreeMap<usize, Vec<(chrono::NaiveDate, (f64, f64, f64))>> = BTreeMap::new();
    for sample in &dataset.samples {
        let Some(obs) = sample.observation else {
            continue;
        };
        per_station.entry(sample.station).or_default().push((
            sample.date,
            (sample.predictors[mean_col], sample.predictors[sd_col], obs),
        ));
    }
    let mut station_params = BTreeMap::new();
    for (station, mut rows) in per_station {
        rows.sort_by_key(|r| r.0);
        let triples: Vec<(f64, f64, f64)> = rows.into_iter().map(|r| r.1).collect();
        let (params, _) = emos_fit_station(&triples).map_err(|e| {
            Error::data(format!("station {}: {e}", dataset.stations[station].id))
        })?;
        station_params.insert(dataset.stations[station].id.clone(), params);
    }
    if station_params.is_empty() {
        return Err(Error::data("no stations with observations to fit"));
    }
    Ok(EmosModel {
        target_var: target_var.to_string(),
        station_params,
    })
}

impl EmosModel {
    /// Forecasts for every sample in the dataset (indices into
    /// `dataset.samples` paired with the predictive distribution).
    pub fn forecast(&self, dataset: &Dataset) -> Result<Vec<(usize, GaussianForecast)>> {
        let mean_col = predictor_column(dataset, &format!("{}_mean", self.target_var))?;
        let sd_col = predictor_column(dataset, &format!("{}_sd", self.target_var))?;
        let mut out = Vec::with_capacity(dataset.samples.len());
        for (i, sample) in dataset.samples.iter().enumerate() {
            let id = &dataset.stations[sample.station].id;
            let params = self.station_params.get(id).ok_or_else(|| {
                Error::data(format!("no fitted EMOS coefficients for station {id}"))
            })?;
            out.push((
                i,
                emos_predict(params, sample.predictors[mean_col], sample.predictors[sd_col]),
            ));
        }
        Ok(out)
    }
}

pub(crate) fn predictor_column(dataset: &Dataset, name: &str) -> Result<usize> {
    dataset
        .predictor_names
        .iter()
        .position(|n| n == name)
        .ok_or_else(|| Error::data(format!("predictor column {name} not found")))
}
