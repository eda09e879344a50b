//! Distributional regression network: one model fitted jointly over all
//! stations, with a learned station embedding concatenated to the
//! standardized features, two relu hidden layers and a two-unit output head
//! mapped to (mu, sigma) of a Gaussian predictive distribution. Trained by
//! minimizing the mean CRPS; the model estimate is repeated `repetitions`
//! times and predictions aggregate by averaging the distribution parameters.

use serde::{Deserialize, Serialize};

use super::features::{assemble_features, feature_names, FeatureLayout, SpatialMode};
use super::{run_parallel, sigmoid, softplus, LatentCodes};
use crate::dataio::Dataset;
use crate::error::{Error, Result};
use crate::numerics::{
    adam_step, embedding_backward, embedding_forward, AdamConfig, AdamState, Activation,
    LayerSpec, Network, Tensor,
};
use crate::rng::stream;
use crate::scoring::{crps_gaussian, crps_gaussian_grad, GaussianForecast};
use rand::seq::SliceRandom;
use rand::Rng;

const SIGMA_FLOOR: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DrnConfig {
    pub hidden: Vec<usize>,
    pub embedding_dim: usize,
    pub spatial_mode: SpatialMode,
    pub spatial_vars: Vec<String>,
    /// Latent dimension per spatial variable; 0 when spatial_mode is none.
    pub latent_dim: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub repetitions: usize,
    pub seed: u64,
}

impl DrnConfig {
    pub fn baseline(seed: u64) -> Self {
        DrnConfig {
            hidden: vec![100, 100],
            embedding_dim: 15,
            spatial_mode: SpatialMode::None,
            spatial_vars: Vec::new(),
            latent_dim: 0,
            lr: 2e-3,
            batch_size: 1024,
            max_epochs: 100,
            patience: 10,
            repetitions: 10,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.embedding_dim == 0 {
            return Err(Error::config("embedding dimension must be at least 1"));
        }
        if self.repetitions == 0 {
            return Err(Error::config("at least one repetition is required"));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::config("batch size and max epochs must be positive"));
        }
        match self.spatial_mode {
            SpatialMode::None => {
                if !self.spatial_vars.is_empty() || self.latent_dim != 0 {
                    return Err(Error::config(
                        "spatial mode none conflicts with spatial variables or a latent dimension",
                    ));
                }
            }
            _ => {
                if self.spatial_vars.is_empty() || self.latent_dim == 0 {
                    return Err(Error::config(
                        "a spatial mode needs spatial variables and a positive latent dimension",
                    ));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct DrnEpochStats {
    pub epoch: usize,
    pub train_crps: f64,
    pub val_crps: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DrnMember {
    pub seed: u64,
    pub embedding: Tensor<f32>,
    pub net: Network<f32>,
    pub history: Vec<DrnEpochStats>,
    pub best_epoch: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DrnModel {
    pub config: DrnConfig,
    pub layout: FeatureLayout,
    /// Station ids in embedding-row order.
    pub station_ids: Vec<String>,
    /// Standardization constants of the training observations.
    pub target_mean: f64,
    pub target_sd: f64,
    pub members: Vec<DrnMember>,
}

/// Mean CRPS of the Gaussian head on one raw output pair, in standardized
/// target units, with its gradient with respect to the raw outputs:
/// mu = raw0, sigma = softplus(raw1).
pub fn gaussian_crps_loss(raw_mu: f64, raw_sigma: f64, y: f64) -> (f64, f64, f64) {
    let sigma = softplus(raw_sigma).max(SIGMA_FLOOR);
    let f = GaussianForecast { mu: raw_mu, sigma };
    let loss = crps_gaussian(f, y).expect("sigma > 0");
    let (gmu, gsigma) = crps_gaussian_grad(f, y).expect("sigma > 0");
    (loss, gmu, gsigma * sigmoid(raw_sigma))
}

/// Standardized design matrix for one dataset under a fixed layout.
pub struct PreparedFeatures {
    /// Row-major (n x width) standardized features.
    pub features: Vec<f32>,
    pub width: usize,
    /// Embedding row per sample.
    pub station_rows: Vec<usize>,
    /// Standardized observations (NaN where missing).
    pub targets: Vec<f64>,
    /// Index into `dataset.samples` per row.
    pub sample_indices: Vec<usize>,
}

fn station_row_map(station_ids: &[String]) -> std::collections::BTreeMap<&str, usize> {
    station_ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect()
}

fn codes_for<'c>(
    codes: Option<&'c LatentCodes>,
    date: chrono::NaiveDate,
    expected: usize,
) -> Result<Option<&'c [f64]>> {
    match codes {
        None => Ok(None),
        Some(map) => {
            let row = map
                .get(&date)
                .ok_or_else(|| Error::data(format!("no latent codes for date {date}")))?;
            if row.len() != expected {
                return Err(Error::bundle(format!(
                    "latent code width {} does not match expected {expected}",
                    row.len()
                )));
            }
            Ok(Some(row.as_slice()))
        }
    }
}

impl DrnModel {
    /// Standardizes a dataset's samples under this model's frozen layout.
    /// Unknown stations are an error: there is no cold-start embedding.
    pub fn prepare(&self, dataset: &Dataset, codes: Option<&LatentCodes>) -> Result<PreparedFeatures> {
        if (self.config.spatial_mode == SpatialMode::None) != codes.is_none() {
            return Err(Error::config(
                "latent codes must be supplied exactly when the model has a spatial mode",
            ));
        }
        let rows = station_row_map(&self.station_ids);
        let code_width = self.config.latent_dim * self.config.spatial_vars.len();
        let mut prepared = PreparedFeatures {
            features: Vec::with_capacity(dataset.samples.len() * self.layout.width()),
            width: self.layout.width(),
            station_rows: Vec::with_capacity(dataset.samples.len()),
            targets: Vec::with_capacity(dataset.samples.len()),
            sample_indices: Vec::with_capacity(dataset.samples.len()),
        };
        for (i, sample) in dataset.samples.iter().enumerate() {
            let meta = &dataset.stations[sample.station];
            let Some(&row) = rows.get(meta.id.as_str()) else {
                return Err(Error::data(format!(
                    "station {} was not seen in training; no embedding exists",
                    meta.id
                )));
            };
            let code = codes_for(codes, sample.date, code_width)?;
            let raw = assemble_features(sample, meta, code);
            let std = self.layout.standardize(&raw)?;
            prepared.features.extend_from_slice(&std);
            prepared.station_rows.push(row);
            prepared
                .targets
                .push(sample.observation.map_or(f64::NAN, |y| (y - self.target_mean) / self.target_sd));
            prepared.sample_indices.push(i);
        }
        Ok(prepared)
    }

    /// De-standardizes a raw network output pair into a forecast.
    pub fn forecast_from_raw(&self, raw_mu: f32, raw_sigma: f32) -> GaussianForecast {
        GaussianForecast {
            mu: self.target_mean + self.target_sd * f64::from(raw_mu),
            sigma: (self.target_sd * softplus(f64::from(raw_sigma))).max(SIGMA_FLOOR),
        }
    }

    /// Forecasts of a single repetition member on prepared features.
    pub fn member_forecasts(
        &self,
        member: &DrnMember,
        prepared: &PreparedFeatures,
    ) -> Result<Vec<GaussianForecast>> {
        let raw = member_forward(member, prepared, None)?;
        Ok(raw
            .chunks_exact(2)
            .map(|p| self.forecast_from_raw(p[0], p[1]))
            .collect())
    }

    /// Parameter-averaged forecasts over all members, paired with sample
    /// indices into the source dataset.
    pub fn forecast(
        &self,
        dataset: &Dataset,
        codes: Option<&LatentCodes>,
    ) -> Result<Vec<(usize, GaussianForecast)>> {
        let prepared = self.prepare(dataset, codes)?;
        let per_member: Vec<Vec<GaussianForecast>> = self
            .members
            .iter()
            .map(|m| self.member_forecasts(m, &prepared))
            .collect::<Result<_>>()?;
        let aggregated = drn_predict_aggregate(&per_member)?;
        Ok(prepared.sample_indices.into_iter().zip(aggregated).collect())
    }
}

/// Averages distribution parameters across repetition members.
pub fn drn_predict_aggregate(per_member: &[Vec<GaussianForecast>]) -> Result<Vec<GaussianForecast>> {
    let Some(first) = per_member.first() else {
        return Err(Error::bundle("no member models to aggregate"));
    };
    let n = first.len();
    if per_member.iter().any(|m| m.len() != n) {
        return Err(Error::bundle("member forecast lists disagree in length"));
    }
    let scale = 1.0 / per_member.len() as f64;
    Ok((0..n)
        .map(|i| {
            let mut mu = 0.0;
            let mut sigma = 0.0;
            for member in per_member {
                mu += member[i].mu;
                sigma += member[i].sigma;
            }
            GaussianForecast {
                mu: mu * scale,
                sigma: (sigma * scale).max(SIGMA_FLOOR),
            }
        })
        .collect())
}

/// Forward pass of one member over prepared features; returns raw output
/// pairs (2 per sample). `station_override` substitutes the embedding rows
/// (used by permutation importance).
pub fn member_forward(
    member: &DrnMember,
    prepared: &PreparedFeatures,
    station_override: Option<&[usize]>,
) -> Result<Vec<f32>> {
    let stations = station_override.unwrap_or(&prepared.station_rows);
    let n = stations.len();
    if prepared.features.len() != n * prepared.width {
        return Err(Error::shape("prepared feature matrix is ragged"));
    }
    let e = member.embedding.shape()[1];
    let in_width = prepared.width + e;
    if member.net.in_shape() != [in_width] {
        return Err(Error::bundle(format!(
            "member expects input width {:?}, features provide {in_width}",
            member.net.in_shape()
        )));
    }
    let mut out = Vec::with_capacity(n * 2);
    let chunk = 4096usize;
    let mut start = 0;
    while start < n {
        let take = chunk.min(n - start);
        let mut x = Vec::with_capacity(take * in_width);
        for i in start..start + take {
            x.extend_from_slice(&prepared.features[i * prepared.width..(i + 1) * prepared.width]);
            let row = stations[i];
            x.extend_from_slice(
                &member.embedding.data()[row * e..(row + 1) * e],
            );
        }
        let batch = Tensor::new(vec![take, in_width], x)?;
        out.extend_from_slice(member.net.forward(&batch)?.data());
        start += take;
    }
    Ok(out)
}

fn mean_crps_standardized(member: &DrnMember, prepared: &PreparedFeatures) -> Result<f64> {
    let raw = member_forward(member, prepared, None)?;
    let mut total = 0.0;
    let mut count = 0usize;
    for (pair, y) in raw.chunks_exact(2).zip(&prepared.targets) {
        if y.is_nan() {
            continue;
        }
        let (loss, _, _) = gaussian_crps_loss(f64::from(pair[0]), f64::from(pair[1]), *y);
        total += loss;
        count += 1;
    }
    if count == 0 {
        return Err(Error::eval("no observed samples to score"));
    }
    Ok(total / count as f64)
}

/// Trains the full repetition ensemble. Latent codes must cover every date
/// in the train and validation sets when a spatial mode is configured;
/// repetition k derives its randomness from `seed + k`. Repetitions may run
/// on worker threads (capped by `GRIDPOST_THREADS`) without affecting the
/// result.
pub fn drn_train(
    config: &DrnConfig,
    train: &Dataset,
    val: &Dataset,
    codes: Option<&LatentCodes>,
) -> Result<DrnModel> {
    config.validate()?;
    if (config.spatial_mode == SpatialMode::None) != codes.is_none() {
        return Err(Error::config(
            "latent codes must be supplied exactly when a spatial mode is configured",
        ));
    }
    let station_ids: Vec<String> = train.stations.iter().map(|s| s.id.clone()).collect();
    for s in &val.stations {
        let seen = val.samples.iter().any(|x| x.station == val.station_index(&s.id).unwrap_or(usize::MAX));
        if seen && !station_ids.contains(&s.id) {
            return Err(Error::data(format!(
                "validation station {} does not appear in training",
                s.id
            )));
        }
    }

    // Raw training rows with observations.
    let code_width = config.latent_dim * config.spatial_vars.len();
    let mut raw_rows = Vec::new();
    let mut targets = Vec::new();
    for sample in &train.samples {
        let Some(obs) = sample.observation else { continue };
        let code = codes_for(codes, sample.date, code_width)?;
        raw_rows.push(assemble_features(sample, &train.stations[sample.station], code));
        targets.push(obs);
    }
    if raw_rows.is_empty() {
        return Err(Error::data("no observed training samples"));
    }
    let names = feature_names(&train.predictor_names, &config.spatial_vars, config.latent_dim);
    let layout = FeatureLayout::fit(
        &raw_rows,
        names,
        config.spatial_mode,
        config.spatial_vars.clone(),
        config.latent_dim,
    )?;
    let n = targets.len() as f64;
    let target_mean = targets.iter().sum::<f64>() / n;
    let target_sd = (targets.iter().map(|y| (y - target_mean).powi(2)).sum::<f64>() / n)
        .sqrt()
        .max(1e-9);

    let mut model = DrnModel {
        config: config.clone(),
        layout,
        station_ids,
        target_mean,
        target_sd,
        members: Vec::new(),
    };
    let train_prepared = model.prepare(train, codes)?;
    let val_prepared = model.prepare(val, codes)?;

    let jobs: Vec<_> = (0..config.repetitions)
        .map(|k| {
            let seed = config.seed + k as u64;
            let model_ref = &model;
            let train_ref = &train_prepared;
            let val_ref = &val_prepared;
            move || train_member(model_ref, train_ref, val_ref, seed)
        })
        .collect();
    let members = run_parallel(jobs, Some(config.repetitions));
    model.members = members.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(model)
}

fn train_member(
    model: &DrnModel,
    train: &PreparedFeatures,
    val: &PreparedFeatures,
    seed: u64,
) -> Result<DrnMember> {
    let config = &model.config;
    let n_stations = model.station_ids.len();
    let e = config.embedding_dim;
    let width = train.width + e;

    let mut rng = stream(seed, "init");
    let embedding = Tensor::new(
        vec![n_stations, e],
        (0..n_stations * e).map(|_| rng.random_range(-0.05f32..0.05f32)).collect(),
    )?;
    let mut specs: Vec<LayerSpec> = config
        .hidden
        .iter()
        .map(|&units| LayerSpec::Dense {
            units,
            activation: Activation::Relu,
        })
        .collect();
    specs.push(LayerSpec::Dense {
        units: 2,
        activation: Activation::Linear,
    });
    let net = Network::build(&specs, vec![width], &mut rng)?;

    let mut member = DrnMember {
        seed,
        embedding,
        net,
        history: Vec::new(),
        best_epoch: 0,
    };

    // Only observed rows train.
    let observed: Vec<usize> = (0..train.station_rows.len())
        .filter(|&i| !train.targets[i].is_nan())
        .collect();
    let adam_cfg = AdamConfig::with_lr(config.lr);
    let mut adam = {
        let mut params: Vec<&Tensor<f32>> = vec![&member.embedding];
        params.extend(member.net.params());
        AdamState::new(&params)
    };
    let mut shuffle_rng = stream(seed, "shuffle");
    let mut order = observed.clone();

    let mut best_val = f64::INFINITY;
    let mut best: Option<(Tensor<f32>, Vec<Tensor<f32>>)> = None;
    let mut since_improve = 0usize;

    for epoch in 0..config.max_epochs {
        order.shuffle(&mut shuffle_rng);
        let mut train_loss_sum = 0.0;
        let mut train_count = 0usize;
        for (batch_no, chunk) in order.chunks(config.batch_size).enumerate() {
            let b = chunk.len();
            let mut x = Vec::with_capacity(b * width);
            let idx: Vec<usize> = chunk.iter().map(|&i| train.station_rows[i]).collect();
            let emb_rows = embedding_forward(&member.embedding, &idx)?;
            for (j, &i) in chunk.iter().enumerate() {
                x.extend_from_slice(&train.features[i * train.width..(i + 1) * train.width]);
                x.extend_from_slice(&emb_rows.data()[j * e..(j + 1) * e]);
            }
            let batch = Tensor::new(vec![b, width], x)?;
            let trace = member
                .net
                .forward_trace(&batch)
                .map_err(|err| Error::numeric(format!("epoch {epoch} batch {batch_no}: {err}")))?;
            let out = trace.output();
            let mut grad = Tensor::zeros(vec![b, 2])?;
            let scale = 1.0 / b as f64;
            for (j, &i) in chunk.iter().enumerate() {
                let raw_mu = f64::from(out.data()[j * 2]);
                let raw_sigma = f64::from(out.data()[j * 2 + 1]);
                let (loss, gmu, gsigma) = gaussian_crps_loss(raw_mu, raw_sigma, train.targets[i]);
                if !loss.is_finite() {
                    return Err(Error::numeric(format!(
                        "non-finite CRPS loss at epoch {epoch}, batch {batch_no}"
                    )));
                }
                train_loss_sum += loss;
                grad.data_mut()[j * 2] = (gmu * scale) as f32;
                grad.data_mut()[j * 2 + 1] = (gsigma * scale) as f32;
            }
            train_count += b;
            let grads = member.net.backward(&trace, &grad)?;
            let emb_grad = {
                let gi = &grads.grad_input;
                let mut code_grad = Tensor::zeros(vec![b, e])?;
                for j in 0..b {
                    let src = &gi.data()[j * width + train.width..(j + 1) * width];
                    code_grad.data_mut()[j * e..(j + 1) * e].copy_from_slice(src);
                }
                embedding_backward(&code_grad, &idx, n_stations)?
            };
            let mut all_grads: Vec<&Tensor<f32>> = vec![&emb_grad];
            all_grads.extend(grads.flat());
            let mut params: Vec<&mut Tensor<f32>> = vec![&mut member.embedding];
            params.extend(member.net.params_mut());
            adam_step(&mut params, &all_grads, &mut adam, &adam_cfg)?;
        }
        let val_crps = mean_crps_standardized(&member, val)?;
        member.history.push(DrnEpochStats {
            epoch,
            train_crps: train_loss_sum / train_count.max(1) as f64,
            val_crps,
        });
        if val_crps < best_val {
            best_val = val_crps;
            member.best_epoch = epoch;
            since_improve = 0;
            best = Some((
                member.embedding.clone(),
                member.net.params().into_iter().cloned().collect(),
            ));
        } else {
            since_improve += 1;
            if since_improve >= config.patience {
                break;
            }
        }
    }
    if let Some((emb, params)) = best {
        member.embedding = emb;
        for (dst, src) in member.net.params_mut().into_iter().zip(params) {
            *dst = src;
        }
    }
    Ok(member)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::{StationMeta, StationSample};
    use chrono::NaiveDate;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn day(n: u64) -> NaiveDate {
        NaiveDate::from_ymd_opt(2007, 1, 1).unwrap() + chrono::Days::new(n)
    }

    /// Two stations with identical predictors but opposite planted biases.
    fn biased_pair_dataset(days: u64, seed: u64) -> Dataset {
        let mut rng = stream(seed, "drn-test");
        let stations = vec![
            StationMeta { id: "SA".into(), lat: 50.0, lon: 10.0, altitude: 100.0, orography: 90.0 },
            StationMeta { id: "SB".into(), lat: 50.0, lon: 10.0, altitude: 100.0, orography: 90.0 },
        ];
        let mut samples = Vec::new();
        for d in 0..days {
            let x: f64 = rng.sample(StandardNormal);
            for (si, offset) in [(0usize, 1.0f64), (1, -1.0)] {
                let noise: f64 = rng.sample(StandardNormal);
                samples.push(StationSample {
                    station: si,
                    date: day(d),
                    predictors: vec![x, 1.0],
                    observation: Some(x + offset + 0.3 * noise),
                });
            }
        }
        Dataset {
            stations,
            predictor_names: vec!["t2m_mean".into(), "t2m_sd".into()],
            samples,
            grids: Default::default(),
        }
    }

    fn quick_config(seed: u64) -> DrnConfig {
        DrnConfig {
            hidden: vec![16, 16],
            embedding_dim: 4,
            batch_size: 64,
            max_epochs: 40,
            patience: 8,
            repetitions: 1,
            ..DrnConfig::baseline(seed)
        }
    }

    #[test]
    fn config_flag_conflicts_are_rejected() {
        let mut cfg = quick_config(0);
        cfg.spatial_vars = vec!["t2m".into()];
        assert!(cfg.validate().is_err());
        cfg.spatial_vars.clear();
        cfg.latent_dim = 2;
        assert!(cfg.validate().is_err());
        let mut cfg = quick_config(0);
        cfg.spatial_mode = SpatialMode::ConvAe;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn embeddings_learn_per_station_offsets() {
        let data = biased_pair_dataset(400, 4);
        let split = crate::dataio::chronological_split(&data, day(319), day(359)).unwrap();
        let model = drn_train(&quick_config(1), &split.train, &split.validation, None).unwrap();
        // Identical features, different stations: the learned offsets must
        // order the means correctly.
        let prepared = model.prepare(&split.test, None).unwrap();
        let fc = model.member_forecasts(&model.members[0], &prepared).unwrap();
        let mut mu_a = 0.0;
        let mut mu_b = 0.0;
        let mut count = 0.0;
        for (i, f) in fc.iter().enumerate() {
            let s = split.test.samples[prepared.sample_indices[i]].station;
            if s == 0 {
                mu_a += f.mu;
                count += 1.0;
            } else {
                mu_b += f.mu;
            }
        }
        assert!(mu_a / count > mu_b / count + 1.0, "offsets not separated: {} vs {}", mu_a / count, mu_b / count);
        // All predicted sigmas are positive.
        assert!(fc.iter().all(|f| f.sigma > 0.0));
    }

    #[test]
    fn identical_seeds_give_identical_members() {
        let data = biased_pair_dataset(120, 5);
        let split = crate::dataio::chronological_split(&data, day(79), day(99)).unwrap();
        let mut cfg = quick_config(7);
        cfg.max_epochs = 5;
        cfg.repetitions = 2;
        // Repetition seeds are seed+k, so rep 1 of seed 7 == rep 0 of seed 8.
        let a = drn_train(&cfg, &split.train, &split.validation, None).unwrap();
        let mut cfg_b = cfg.clone();
        cfg_b.seed = 8;
        let b = drn_train(&cfg_b, &split.train, &split.validation, None).unwrap();
        assert_eq!(a.members[1].embedding.data(), b.members[0].embedding.data());
        let pa: Vec<&Tensor<f32>> = a.members[1].net.params();
        let pb: Vec<&Tensor<f32>> = b.members[0].net.params();
        for (x, y) in pa.iter().zip(pb) {
            assert_eq!(x.data(), y.data());
        }
    }

    #[test]
    fn aggregate_averages_parameters() {
        let a = vec![GaussianForecast { mu: 1.0, sigma: 1.0 }];
        let b = vec![GaussianForecast { mu: 3.0, sigma: 3.0 }];
        let out = drn_predict_aggregate(&[a.clone(), b]).unwrap();
        assert_eq!(out[0].mu, 2.0);
        assert_eq!(out[0].sigma, 2.0);
        // Single model: identity.
        let out = drn_predict_aggregate(&[a.clone()]).unwrap();
        assert_eq!(out[0].mu, a[0].mu);
        assert!(drn_predict_aggregate(&[]).is_err());
    }

    #[test]
    fn unknown_station_at_prediction_is_an_error() {
        let data = biased_pair_dataset(120, 6);
        let split = crate::dataio::chronological_split(&data, day(79), day(99)).unwrap();
        let mut cfg = quick_config(2);
        cfg.max_epochs = 3;
        let model = drn_train(&cfg, &split.train, &split.validation, None).unwrap();
        let mut foreign = split.test.clone();
        foreign.stations[0].id = "UNSEEN".into();
        assert!(model.prepare(&foreign, None).is_err());
    }

    #[test]
    fn crps_loss_gradient_matches_finite_differences() {
        for &(raw_mu, raw_sigma, y) in
            &[(0.0, 0.0, 0.5), (1.2, -0.7, -0.3), (-2.0, 1.5, -2.5), (0.3, 0.2, 0.3)]
        {
            let (_, gmu, gsigma) = gaussian_crps_loss(raw_mu, raw_sigma, y);
            let eps = 1e-6;
            let num_mu = (gaussian_crps_loss(raw_mu + eps, raw_sigma, y).0
                - gaussian_crps_loss(raw_mu - eps, raw_sigma, y).0)
                / (2.0 * eps);
            let num_sigma = (gaussian_crps_loss(raw_mu, raw_sigma + eps, y).0
                - gaussian_crps_loss(raw_mu, raw_sigma - eps, y).0)
                / (2.0 * eps);
            assert!((gmu - num_mu).abs() < 1e-6, "{gmu} vs {num_mu}");
            assert!((gsigma - num_sigma).abs() < 1e-6, "{gsigma} vs {num_sigma}");
        }
    }

    #[test]
    fn baseline_and_spatial_configs_share_architecture() {
        // The only difference between the plain DRN and the spatial variant
        // is the input width contributed by the latent codes.
        let base = DrnConfig::baseline(3);
        let spatial = DrnConfig {
            spatial_mode: SpatialMode::ConvAe,
            spatial_vars: vec!["t2m".into()],
            latent_dim: 2,
            ..DrnConfig::baseline(3)
        };
        assert_eq!(base.hidden, spatial.hidden);
        assert_eq!(base.embedding_dim, spatial.embedding_dim);
        assert_eq!(base.lr, spatial.lr);
        assert_eq!(base.batch_size, spatial.batch_size);
        assert_eq!(base.max_epochs, spatial.max_epochs);
        assert_eq!(base.patience, spatial.patience);
    }
}
