//! Synthetic dataset generator.
//!
//! Desk-scale surrogate for the real forecast archive, keeping the same
//! shapes: per day and variable a truth field (Gaussian random field),
//! ensemble member fields (truth + fixed smooth bias + correlated member
//! noise, exported as their mean), interpolated station predictors, and
//! station observations. Observations carry a planted large-scale signal
//! `gamma * <P, truth>` that only spatial inputs can recover, an optional
//! quadratic term in the local truth, a per-station bias and white noise.

use std::collections::BTreeMap;

use chrono::{Days, NaiveDate};
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use super::{bilinear_interpolate, Dataset, GridField, GridSpec, StationMeta, StationSample};
use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::rng::stream;

#[derive(Clone, Debug)]
pub struct SynthConfig {
    /// Grid variables; variable 0 is the forecast target analog.
    pub vars: usize,
    pub stations: usize,
    pub days: usize,
    pub ens_members: usize,
    /// Gaussian smoothing scale of the truth fields, in grid cells.
    pub length_scale: f64,
    /// Amplitude of the fixed smooth ensemble bias field.
    pub bias: f64,
    /// Coefficient of the planted large-scale spatial signal.
    pub gamma: f64,
    /// Coefficient of the quadratic term in the local truth.
    pub quad: f64,
    pub obs_noise: f64,
    pub ens_noise: f64,
    /// Standard deviation of the fixed per-station observation bias.
    pub station_bias_sd: f64,
    /// Smoothing scale of the planted pattern, in grid cells.
    pub pattern_scale: f64,
    /// Extra predictor-only variables filled with white noise.
    pub noise_predictors: usize,
    pub start_date: NaiveDate,
    pub seed: u64,
    /// Retain truth fields, member values and per-day signals for oracles.
    pub keep_internals: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            vars: 4,
            stations: 50,
            days: 1080,
            ens_members: 20,
            length_scale: 6.0,
            bias: 1.0,
            gamma: 0.0,
            quad: 0.0,
            obs_noise: 0.5,
            ens_noise: 0.8,
            station_bias_sd: 0.5,
            pattern_scale: 20.0,
            noise_predictors: 0,
            start_date: NaiveDate::from_ymd_opt(2007, 1, 1).unwrap(),
            seed: 0,
            keep_internals: false,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.stations == 0 {
            return Err(Error::config("at least one station is required"));
        }
        if self.days < 30 {
            return Err(Error::config(format!("need at least 30 days, got {}", self.days)));
        }
        if self.length_scale <= 0.0 || self.pattern_scale <= 0.0 {
            return Err(Error::config("length scales must be positive"));
        }
        if self.vars == 0 {
            return Err(Error::config("at least one grid variable is required"));
        }
        if self.ens_members < 2 {
            return Err(Error::config("ensemble needs at least two members"));
        }
        if self.obs_noise < 0.0 || self.ens_noise < 0.0 || self.station_bias_sd < 0.0 {
            return Err(Error::config("noise amplitudes must be nonnegative"));
        }
        Ok(())
    }

    /// Grid variable names; the first four mirror the operational set.
    pub fn variable_names(&self) -> Vec<String> {
        const NAMED: [&str; 4] = ["t2m", "z500", "u850", "v850"];
        (0..self.vars)
            .map(|i| {
                NAMED
                    .get(i)
                    .map(|s| s.to_string())
                    .unwrap_or_else(|| format!("syn{i}"))
            })
            .collect()
    }
}

#[derive(Debug)]
pub struct SynthOutput {
    pub dataset: Dataset,
    /// Truth fields of variable 0, in date order (with `keep_internals`).
    pub truth: Vec<GridField>,
    /// Zero-mean planted pattern P.
    pub pattern: Tensor<f64>,
    /// Normalization constant of `<P, truth>`.
    pub signal_norm: f64,
    /// Per-day normalized signal `<P, truth_0>/signal_norm` (with `keep_internals`).
    pub signal: Vec<f64>,
    /// Truth of variable 0 interpolated to stations, `[day][station]` (with `keep_internals`).
    pub truth_at_stations: Vec<Vec<f64>>,
    /// Raw member values of variable 0 at stations, `[day][station][member]`
    /// (with `keep_internals`).
    pub members_at_stations: Vec<Vec<Vec<f64>>>,
    pub station_biases: Vec<f64>,
}

/// Deterministically generates the full dataset from `config.seed`.
pub fn synth_generate(config: &SynthConfig) -> Result<SynthOutput> {
    config.validate()?;
    let spec = GridSpec::default_domain();
    let mut rng = stream(config.seed, "data");
    let var_names = config.variable_names();

    // Fixed large-scale pattern, zero-mean so the min-max offset of the
    // normalized fields cancels out of the planted signal.
    let pattern_raw = gaussian_random_field(&spec, config.pattern_scale, &mut rng);
    let mut pattern: Vec<f64> = pattern_raw.iter().map(|&v| f64::from(v)).collect();
    let mean = pattern.iter().sum::<f64>() / pattern.len() as f64;
    for v in &mut pattern {
        *v -= mean;
    }
    let signal_norm = pattern_signal_norm(&pattern, &spec, config.length_scale);

    // Fixed smooth ensemble bias field per variable.
    let bias_fields: Vec<Vec<f32>> = (0..config.vars)
        .map(|_| gaussian_random_field(&spec, config.length_scale, &mut rng))
        .collect();

    // Station metadata: uniform inside the grid with a safety margin.
    let lat_margin = (spec.lat_max() - spec.lat0).min(4.0) * 0.25;
    let lon_margin = (spec.lon_max() - spec.lon0).min(4.0) * 0.25;
    let mut stations = Vec::with_capacity(config.stations);
    let mut station_biases = Vec::with_capacity(config.stations);
    for i in 0..config.stations {
        let lat = rng.random_range(spec.lat0 + lat_margin..spec.lat_max() - lat_margin);
        let lon = rng.random_range(spec.lon0 + lon_margin..spec.lon_max() - lon_margin);
        let altitude = (300.0 + 250.0 * rng.sample::<f64, _>(StandardNormal)).abs();
        let orography = altitude + 50.0 * rng.sample::<f64, _>(StandardNormal);
        stations.push(StationMeta {
            id: format!("S{:03}", i + 1),
            lat,
            lon,
            altitude,
            orography,
        });
        station_biases.push(config.station_bias_sd * rng.sample::<f64, _>(StandardNormal));
    }

    let mut predictor_names = Vec::new();
    for name in &var_names {
        predictor_names.push(format!("{name}_mean"));
        predictor_names.push(format!("{name}_sd"));
    }
    for j in 0..config.noise_predictors {
        predictor_names.push(format!("junk{j}_mean"));
        predictor_names.push(format!("junk{j}_sd"));
    }

    let mut grids: BTreeMap<String, Vec<GridField>> = BTreeMap::new();
    let mut truth_fields = Vec::new();
    let mut signal = Vec::new();
    let mut truth_at_stations = Vec::new();
    let mut members_at_stations = Vec::new();
    let mut samples = Vec::with_capacity(config.days * config.stations);
    let npoints = spec.nlat * spec.nlon;

    for day in 0..config.days {
        let date = config.start_date + Days::new(day as u64);
        let mut day_truth0_at_st: Vec<f64> = Vec::new();
        let mut day_members0: Vec<Vec<f64>> = Vec::new();
        let mut day_signal = 0.0;
        // Per-station predictor values in column order.
        let mut pred = vec![Vec::with_capacity(predictor_names.len()); config.stations];

        for (vi, var) in var_names.iter().enumerate() {
            let truth = gaussian_random_field(&spec, config.length_scale, &mut rng);
            let truth_field = GridField::new(
                spec,
                var.clone(),
                date,
                Tensor::new(vec![spec.nlat, spec.nlon], truth.clone())?,
            )?;
            let truth_at: Vec<f64> = stations
                .iter()
                .map(|s| bilinear_interpolate(&truth_field, s.lat, s.lon))
                .collect::<Result<_>>()?;
            let bias_at: Vec<f64> = {
                let bias_field = GridField::new(
                    spec,
                    var.clone(),
                    date,
                    Tensor::new(vec![spec.nlat, spec.nlon], bias_fields[vi].clone())?,
                )?;
                stations
                    .iter()
                    .map(|s| bilinear_interpolate(&bias_field, s.lat, s.lon))
                    .collect::<Result<_>>()?
            };

            let mut noise_sum = vec![0f32; npoints];
            let mut member_vals = vec![vec![0f64; config.ens_members]; config.stations];
            for m in 0..config.ens_members {
                let eps = gaussian_random_field(&spec, config.length_scale, &mut rng);
                let eps_field = GridField::new(
                    spec,
                    var.clone(),
                    date,
                    Tensor::new(vec![spec.nlat, spec.nlon], eps.clone())?,
                )?;
                for (si, s) in stations.iter().enumerate() {
                    let e = bilinear_interpolate(&eps_field, s.lat, s.lon)?;
                    member_vals[si][m] =
                        truth_at[si] + config.bias * bias_at[si] + config.ens_noise * e;
                }
                for (acc, v) in noise_sum.iter_mut().zip(&eps) {
                    *acc += v;
                }
            }
            let inv_m = 1.0 / config.ens_members as f32;
            let bias_amp = config.bias as f32;
            let noise_amp = config.ens_noise as f32;
            let mean_values: Vec<f32> = truth
                .iter()
                .zip(&bias_fields[vi])
                .zip(&noise_sum)
                .map(|((t, b), n)| t + bias_amp * b + noise_amp * n * inv_m)
                .collect();
            grids.entry(var.clone()).or_default().push(GridField::new(
                spec,
                var.clone(),
                date,
                Tensor::new(vec![spec.nlat, spec.nlon], mean_values)?,
            )?);

            for si in 0..config.stations {
                let vals = &member_vals[si];
                let mean = vals.iter().sum::<f64>() / vals.len() as f64;
                let var_hat = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>()
                    / (vals.len() - 1) as f64;
                pred[si].push(mean);
                pred[si].push(var_hat.sqrt());
            }

            if vi == 0 {
                day_signal = pattern
                    .iter()
                    .zip(truth.iter())
                    .map(|(p, &t)| p * f64::from(t))
                    .sum::<f64>()
                    / signal_norm;
                day_truth0_at_st = truth_at;
                if config.keep_internals {
                    day_members0 = member_vals;
                    truth_fields.push(truth_field);
                }
            }
        }

        for (si, s) in stations.iter().enumerate() {
            let _ = s;
            let local = day_truth0_at_st[si];
            let obs = local
                + station_biases[si]
                + config.quad * (local * local - 1.0)
                + config.gamma * day_signal
                + config.obs_noise * rng.sample::<f64, _>(StandardNormal);
            for _ in 0..config.noise_predictors {
                pred[si].push(rng.sample::<f64, _>(StandardNormal));
                pred[si].push(0.5 + rng.random_range(0.0..1.0));
            }
            samples.push(StationSample {
                station: si,
                date,
                predictors: std::mem::take(&mut pred[si]),
                observation: Some(obs),
            });
        }

        if config.keep_internals {
            signal.push(day_signal);
            truth_at_stations.push(day_truth0_at_st);
            members_at_stations.push(day_members0);
        }
    }

    samples.sort_by_key(|s| (s.date, s.station));
    Ok(SynthOutput {
        dataset: Dataset {
            stations,
            predictor_names,
            samples,
            grids,
        },
        truth: truth_fields,
        pattern: Tensor::new(vec![spec.nlat, spec.nlon], pattern)?,
        signal_norm,
        signal,
        truth_at_stations,
        members_at_stations,
        station_biases,
    })
}

/// Standardized Gaussian random field: white noise convolved with a
/// Gaussian kernel of the given scale (in cells), then rescaled to
/// empirical mean 0 and standard deviation 1.
fn gaussian_random_field(spec: &GridSpec, scale: f64, rng: &mut ChaCha12Rng) -> Vec<f32> {
    let (nlat, nlon) = (spec.nlat, spec.nlon);
    let radius = (2.5 * scale).ceil() as usize;
    let taps = 2 * radius + 1;
    let kernel: Vec<f32> = (0..taps)
        .map(|i| {
            let d = i as f64 - radius as f64;
            (-d * d / (2.0 * scale * scale)).exp() as f32
        })
        .collect();
    let ext_h = nlat + 2 * radius;
    let ext_w = nlon + 2 * radius;
    let noise: Vec<f32> = (0..ext_h * ext_w).map(|_| rng.sample(StandardNormal)).collect();
    // Separable valid convolution: horizontal then vertical.
    let mut tmp = vec![0f32; ext_h * nlon];
    for y in 0..ext_h {
        let row = &noise[y * ext_w..(y + 1) * ext_w];
        let out = &mut tmp[y * nlon..(y + 1) * nlon];
        for (x, o) in out.iter_mut().enumerate() {
            let mut acc = 0f32;
            for (k, w) in kernel.iter().enumerate() {
                acc += w * row[x + k];
            }
            *o = acc;
        }
    }
    let mut field = vec![0f32; nlat * nlon];
    for y in 0..nlat {
        let out = &mut field[y * nlon..(y + 1) * nlon];
        for (k, w) in kernel.iter().enumerate() {
            let row = &tmp[(y + k) * nlon..(y + k + 1) * nlon];
            for (o, v) in out.iter_mut().zip(row) {
                *o += w * v;
            }
        }
    }
    let n = field.len() as f64;
    let mean = field.iter().map(|&v| f64::from(v)).sum::<f64>() / n;
    let var = field.iter().map(|&v| (f64::from(v) - mean).powi(2)).sum::<f64>() / n;
    let inv_sd = (1.0 / var.sqrt().max(1e-12)) as f32;
    let mean = mean as f32;
    for v in &mut field {
        *v = (*v - mean) * inv_sd;
    }
    field
}

/// Normalization constant for `<P, T>` so the per-day signal has roughly
/// unit variance: `sqrt(<P, rho (*) P>)` where `rho` is the field
/// correlation kernel (Gaussian with scale `sqrt(2)*length_scale`).
fn pattern_signal_norm(pattern: &[f64], spec: &GridSpec, length_scale: f64) -> f64 {
    let rho_scale = std::f64::consts::SQRT_2 * length_scale;
    let radius = (2.5 * rho_scale).ceil() as usize;
    let kernel: Vec<f64> = (0..=2 * radius)
        .map(|i| {
            let d = i as f64 - radius as f64;
            (-d * d / (2.0 * rho_scale * rho_scale)).exp()
        })
        .collect();
    let (nlat, nlon) = (spec.nlat, spec.nlon);
    // Same-size separable convolution with zero padding.
    let mut tmp = vec![0f64; nlat * nlon];
    for y in 0..nlat {
        for x in 0..nlon {
            let mut acc = 0.0;
            for (k, w) in kernel.iter().enumerate() {
                let ix = x as isize + k as isize - radius as isize;
                if ix >= 0 && (ix as usize) < nlon {
                    acc += w * pattern[y * nlon + ix as usize];
                }
            }
            tmp[y * nlon + x] = acc;
        }
    }
    let mut smoothed = vec![0f64; nlat * nlon];
    for y in 0..nlat {
        for x in 0..nlon {
            let mut acc = 0.0;
            for (k, w) in kernel.iter().enumerate() {
                let iy = y as isize + k as isize - radius as isize;
                if iy >= 0 && (iy as usize) < nlat {
                    acc += w * tmp[iy as usize * nlon + x];
                }
            }
            smoothed[y * nlon + x] = acc;
        }
    }
    pattern
        .iter()
        .zip(&smoothed)
        .map(|(p, s)| p * s)
        .sum::<f64>()
        .max(1e-12)
        .sqrt()
}
