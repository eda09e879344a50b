//! Experiment-level verification: mean CRPS over a test set, station-wise
//! skill scores with Diebold-Mariano significance, permutation feature
//! importance, reconstruction-error curves over the latent dimension and
//! the embedding-dimension sweep.

use std::collections::BTreeMap;

use chrono::NaiveDate;

use crate::convae::{self, ConvAeModel};
use crate::dataio::{Dataset, DatasetSplit};
use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::pca::{pca_reconstruction_mse, fields_to_matrix, PcaModel};
use crate::postproc::{
    drn_train, member_forward, DrnConfig, DrnModel, LatentCodes, PreparedFeatures, SpatialMode,
};
use crate::rng::stream;
use crate::scoring::{crps_gaussian, crpss, dm_test, GaussianForecast};
use rand::seq::SliceRandom;

#[derive(Clone, Copy, Debug)]
pub struct MeanCrps {
    pub mean: f64,
    pub n_used: usize,
    pub n_skipped: usize,
}

/// Arithmetic mean of the per-pair Gaussian CRPS; missing observations are
/// skipped and counted. Zero valid pairs is an evaluation error.
pub fn mean_crps(forecasts: &[GaussianForecast], observations: &[Option<f64>]) -> Result<MeanCrps> {
    if forecasts.len() != observations.len() {
        return Err(Error::eval(format!(
            "{} forecasts vs {} observations",
            forecasts.len(),
            observations.len()
        )));
    }
    let mut total = 0.0;
    let mut n_used = 0;
    let mut n_skipped = 0;
    for (f, obs) in forecasts.iter().zip(observations) {
        match obs {
            Some(y) => {
                total += crps_gaussian(*f, *y)?;
                n_used += 1;
            }
            None => n_skipped += 1,
        }
    }
    if n_used == 0 {
        return Err(Error::eval("no valid forecast/observation pairs"));
    }
    Ok(MeanCrps {
        mean: total / n_used as f64,
        n_used,
        n_skipped,
    })
}

/// One (station, date) CRPS entry of a scored model.
#[derive(Clone, Debug)]
pub struct ScoredSample {
    pub station_id: String,
    pub date: NaiveDate,
    pub crps: f64,
}

/// Scores indexed forecasts against the dataset's observations, skipping
/// missing observations.
pub fn score_forecasts(
    dataset: &Dataset,
    forecasts: &[(usize, GaussianForecast)],
) -> Result<Vec<ScoredSample>> {
    let mut out = Vec::with_capacity(forecasts.len());
    for &(idx, forecast) in forecasts {
        let sample = dataset
            .samples
            .get(idx)
            .ok_or_else(|| Error::eval(format!("forecast index {idx} out of range")))?;
        if let Some(y) = sample.observation {
            out.push(ScoredSample {
                station_id: dataset.stations[sample.station].id.clone(),
                date: sample.date,
                crps: crps_gaussian(forecast, y)?,
            });
        }
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct StationScore {
    pub station_id: String,
    pub mean_crps: f64,
    pub mean_crps_reference: f64,
    pub crpss: f64,
    pub dm_statistic: f64,
    pub p_value: f64,
    pub significant: bool,
}

/// Per-station CRPSS of `model` against `reference` with a Diebold-Mariano
/// test on the per-date score series (two-sided, alpha = 0.05). Both models
/// must be scored on identical (station, date) pairs.
pub fn station_crpss(model: &[ScoredSample], reference: &[ScoredSample]) -> Result<Vec<StationScore>> {
    let group = |rows: &[ScoredSample]| -> BTreeMap<String, BTreeMap<NaiveDate, f64>> {
        let mut map: BTreeMap<String, BTreeMap<NaiveDate, f64>> = BTreeMap::new();
        for r in rows {
            map.entry(r.station_id.clone()).or_default().insert(r.date, r.crps);
        }
        map
    };
    let by_model = group(model);
    let by_ref = group(reference);
    if by_model.len() != by_ref.len() || by_model.keys().ne(by_ref.keys()) {
        return Err(Error::eval("model and reference cover different station sets"));
    }
    let mut out = Vec::with_capacity(by_model.len());
    for (station, model_series) in &by_model {
        let ref_series = &by_ref[station];
        if model_series.keys().ne(ref_series.keys()) {
            let missing: Vec<String> = model_series
                .keys()
                .filter(|d| !ref_series.contains_key(*d))
                .chain(ref_series.keys().filter(|d| !model_series.contains_key(*d)))
                .map(|d| d.to_string())
                .collect();
            return Err(Error::eval(format!(
                "station {station}: unpaired dates {}",
                missing.join(", ")
            )));
        }
        let a: Vec<f64> = model_series.values().copied().collect();
        let b: Vec<f64> = ref_series.values().copied().collect();
        let mean_a = a.iter().sum::<f64>() / a.len() as f64;
        let mean_b = b.iter().sum::<f64>() / b.len() as f64;
        let dm = dm_test(&a, &b)?;
        out.push(StationScore {
            station_id: station.clone(),
            mean_crps: mean_a,
            mean_crps_reference: mean_b,
            crpss: crpss(mean_a, mean_b)?,
            dm_statistic: dm.statistic,
            p_value: dm.p_value,
            significant: dm.p_value < 0.05,
        });
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct ImportanceRow {
    pub feature: String,
    /// Mean CRPS increase over the unpermuted reference, averaged over the
    /// model repetitions used.
    pub delta_mean: f64,
    /// Spread (standard deviation) of the increase across repetitions.
    pub delta_sd: f64,
}

/// Feature blocks that are permuted jointly: every scalar feature on its
/// own, the latent codes of each spatial variable as one block, and the
/// station embedding as one block.
fn importance_blocks(model: &DrnModel) -> Vec<(String, Vec<usize>)> {
    let layout = &model.layout;
    let scalar_count = layout.width() - layout.spatial_vars.len() * layout.latent_dim;
    let mut blocks: Vec<(String, Vec<usize>)> = layout.names[..scalar_count]
        .iter()
        .enumerate()
        .map(|(i, name)| (name.clone(), vec![i]))
        .collect();
    for (v, var) in layout.spatial_vars.iter().enumerate() {
        let start = scalar_count + v * layout.latent_dim;
        blocks.push((format!("{var}_codes"), (start..start + layout.latent_dim).collect()));
    }
    blocks.push(("embedding".into(), Vec::new()));
    blocks
}

/// Permutation feature importance on the test set.
///
/// Each feature block is shuffled across samples with one seeded
/// permutation (shared by all repetitions, so the reported spread reflects
/// model variability); the CRPS increase against each member's unpermuted
/// reference is averaged over the first `n_models` repetition members.
pub fn permutation_importance(
    model: &DrnModel,
    dataset: &Dataset,
    codes: Option<&LatentCodes>,
    n_models: usize,
    seed: u64,
) -> Result<Vec<ImportanceRow>> {
    let n_models = n_models.min(model.members.len()).max(1);
    let prepared = model.prepare(dataset, codes)?;
    let n = prepared.station_rows.len();
    if n == 0 {
        return Err(Error::eval("empty test set"));
    }
    let observed: Vec<usize> = (0..n).filter(|&i| !prepared.targets[i].is_nan()).collect();
    if observed.is_empty() {
        return Err(Error::eval("no observed samples to score"));
    }

    let member_mean_crps = |member_idx: usize, data: &PreparedFeatures| -> Result<f64> {
        let raw = member_forward(&model.members[member_idx], data, None)?;
        let mut total = 0.0;
        for &i in &observed {
            let f = model.forecast_from_raw(raw[i * 2], raw[i * 2 + 1]);
            total += crps_gaussian(f, model.target_mean + model.target_sd * prepared.targets[i])?;
        }
        Ok(total / observed.len() as f64)
    };

    let references: Vec<f64> = (0..n_models)
        .map(|m| member_mean_crps(m, &prepared))
        .collect::<Result<_>>()?;

    let blocks = importance_blocks(model);
    let mut out = Vec::with_capacity(blocks.len());
    for (block_idx, (name, cols)) in blocks.iter().enumerate() {
        let mut perm: Vec<usize> = (0..n).collect();
        let mut rng = stream(seed.wrapping_add(block_idx as u64), "permutation");
        perm.shuffle(&mut rng);
        let permuted = permute_block(&prepared, cols, &perm);
        let mut deltas = Vec::with_capacity(n_models);
        for m in 0..n_models {
            let scored = member_mean_crps(m, &permuted)?;
            deltas.push(scored - references[m]);
        }
        let mean = deltas.iter().sum::<f64>() / deltas.len() as f64;
        let sd = (deltas.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / deltas.len() as f64).sqrt();
        out.push(ImportanceRow {
            feature: name.clone(),
            delta_mean: mean,
            delta_sd: sd,
        });
    }
    Ok(out)
}

/// Applies a row permutation to a feature block. An empty column list means
/// the embedding block: the station indices are permuted instead.
fn permute_block(
    prepared: &PreparedFeatures,
    cols: &[usize],
    perm: &[usize],
) -> PreparedFeatures {
    let mut features = prepared.features.clone();
    let mut stations = prepared.station_rows.clone();
    if cols.is_empty() {
        for (i, &src) in perm.iter().enumerate() {
            stations[i] = prepared.station_rows[src];
        }
    } else {
        for (i, &src) in perm.iter().enumerate() {
            for &c in cols {
                features[i * prepared.width + c] = prepared.features[src * prepared.width + c];
            }
        }
    }
    PreparedFeatures {
        features,
        width: prepared.width,
        station_rows: stations,
        targets: prepared.targets.clone(),
        sample_indices: prepared.sample_indices.clone(),
    }
}

#[derive(Clone, Debug)]
pub struct ReconRow {
    pub h: usize,
    pub method: String,
    pub split: String,
    pub mse: f64,
}

/// Reconstruction MSE per (method, h) on the train and test splits, on the
/// normalized 0-1 scale.
pub fn recon_curve(
    convae_models: &[&ConvAeModel],
    pca_models: &[(usize, &PcaModel)],
    train01: &[Tensor<f32>],
    test01: &[Tensor<f32>],
) -> Result<Vec<ReconRow>> {
    let mut rows = Vec::new();
    for model in convae_models {
        for (split, fields) in [("train", train01), ("test", test01)] {
            rows.push(ReconRow {
                h: model.latent_dim(),
                method: "convae".into(),
                split: split.into(),
                mse: convae::reconstruction_mse(model, fields)?,
            });
        }
    }
    for &(h, model) in pca_models {
        for (split, fields) in [("train", train01), ("test", test01)] {
            let matrix = fields_to_matrix(fields)?;
            rows.push(ReconRow {
                h,
                method: "pca".into(),
                split: split.into(),
                mse: pca_reconstruction_mse(model, &matrix)?,
            });
        }
    }
    rows.sort_by(|a, b| (a.h, &a.method, &a.split).cmp(&(b.h, &b.method, &b.split)));
    Ok(rows)
}

#[derive(Clone, Debug)]
pub struct SweepRow {
    pub embed_dim: usize,
    pub spatial_mode: SpatialMode,
    pub mean_crps: f64,
}

/// Trains the configured DRN variant at each embedding dimension and
/// reports the test-set mean CRPS.
pub fn embed_sweep(
    base: &DrnConfig,
    dims: &[usize],
    split: &DatasetSplit,
    codes: Option<&LatentCodes>,
) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::with_capacity(dims.len());
    for &dim in dims {
        let config = DrnConfig {
            embedding_dim: dim,
            ..base.clone()
        };
        let model = drn_train(&config, &split.train, &split.validation, codes)?;
        let forecasts = model.forecast(&split.test, codes)?;
        let scored = score_forecasts(&split.test, &forecasts)?;
        let mean = scored.iter().map(|s| s.crps).sum::<f64>() / scored.len().max(1) as f64;
        rows.push(SweepRow {
            embed_dim: dim,
            spatial_mode: config.spatial_mode,
            mean_crps: mean,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_crps_skips_missing_and_averages() {
        let f = GaussianForecast { mu: 0.0, sigma: 1.0 };
        let sharp = GaussianForecast { mu: 5.0, sigma: 1e-9 };
        let out = mean_crps(&[sharp, f, f], &[Some(5.0), None, Some(0.0)]).unwrap();
        assert_eq!(out.n_used, 2);
        assert_eq!(out.n_skipped, 1);
        let per_pair = (crps_gaussian(sharp, 5.0).unwrap() + crps_gaussian(f, 0.0).unwrap()) / 2.0;
        assert!((out.mean - per_pair).abs() < 1e-12);
        assert!(crps_gaussian(sharp, 5.0).unwrap() < 1e-8);

        assert!(mean_crps(&[f], &[None]).is_err());
    }

    #[test]
    fn two_pair_average() {
        // Scores 0.2 and 0.4 average to 0.3; construct via sigma scaling
        // of the standard value at y = mu.
        let c0 = crps_gaussian(GaussianForecast { mu: 0.0, sigma: 1.0 }, 0.0).unwrap();
        let f1 = GaussianForecast { mu: 0.0, sigma: 0.2 / c0 };
        let f2 = GaussianForecast { mu: 0.0, sigma: 0.4 / c0 };
        let out = mean_crps(&[f1, f2], &[Some(0.0), Some(0.0)]).unwrap();
        assert!((out.mean - 0.3).abs() < 1e-12);
    }

    fn scored(station: &str, day: u32, crps: f64) -> ScoredSample {
        ScoredSample {
            station_id: station.into(),
            date: NaiveDate::from_ymd_opt(2016, 1, 1).unwrap() + chrono::Days::new(day as u64),
            crps,
        }
    }

    #[test]
    fn station_crpss_self_comparison_is_null() {
        let rows: Vec<ScoredSample> = (0..40)
            .flat_map(|d| {
                ["S1", "S2"].map(|s| scored(s, d, 0.5 + 0.1 * ((d as f64) * 0.7).sin()))
            })
            .collect();
        let out = station_crpss(&rows, &rows).unwrap();
        assert_eq!(out.len(), 2);
        for s in out {
            assert_eq!(s.crpss, 0.0);
            assert_eq!(s.p_value, 1.0);
            assert!(!s.significant);
        }
    }

    #[test]
    fn station_crpss_sign_convention_and_antisymmetry() {
        let model: Vec<ScoredSample> = (0..60)
            .map(|d| scored("S1", d, 0.9 + 0.01 * ((d * 37 % 11) as f64)))
            .collect();
        let reference: Vec<ScoredSample> = (0..60)
            .map(|d| scored("S1", d, 1.0 + 0.01 * ((d * 17 % 13) as f64)))
            .collect();
        let ab = station_crpss(&model, &reference).unwrap();
        // Roughly 10% improvement.
        assert!(ab[0].crpss > 0.05 && ab[0].crpss < 0.15);
        let ba = station_crpss(&reference, &model).unwrap();
        assert!((ab[0].dm_statistic + ba[0].dm_statistic).abs() < 1e-12);
        assert!((ab[0].p_value - ba[0].p_value).abs() < 1e-12);
    }

    #[test]
    fn pairing_mismatch_lists_dates() {
        let model: Vec<ScoredSample> = (0..12).map(|d| scored("S1", d, 0.5)).collect();
        let reference: Vec<ScoredSample> = (1..13).map(|d| scored("S1", d, 0.5)).collect();
        let err = station_crpss(&model, &reference).unwrap_err();
        assert!(err.to_string().contains("2016-01-01"), "{err}");
    }
}
