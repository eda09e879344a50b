//! Feature assembly for the DRN family: interpolated predictors, station
//! metadata and optional latent codes, standardized by training-set
//! constants. The layout is frozen into the model bundle so prediction-time
//! inputs line up exactly.

use serde::{Deserialize, Serialize};

use crate::dataio::{StationMeta, StationSample};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpatialMode {
    None,
    ConvAe,
    Pca,
}

impl std::fmt::Display for SpatialMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SpatialMode::None => write!(f, "none"),
            SpatialMode::ConvAe => write!(f, "convae"),
            SpatialMode::Pca => write!(f, "pca"),
        }
    }
}

/// Fixed feature ordering (predictors, station meta, latent codes) plus the
/// training-set standardization constants.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureLayout {
    pub names: Vec<String>,
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
    pub spatial_mode: SpatialMode,
    pub spatial_vars: Vec<String>,
    /// Latent dimension per spatial variable (0 when spatial_mode is none).
    pub latent_dim: usize,
}

/// Raw (unstandardized) feature vector for one sample: interpolated
/// predictors, then lat/lon/altitude/orography, then the concatenated
/// latent codes. Codes must be present exactly when a spatial mode is set.
pub fn assemble_features(
    sample: &StationSample,
    meta: &StationMeta,
    codes: Option<&[f64]>,
) -> Vec<f64> {
    let extra = codes.map_or(0, |c| c.len());
    let mut out = Vec::with_capacity(sample.predictors.len() + 4 + extra);
    out.extend_from_slice(&sample.predictors);
    out.extend_from_slice(&[meta.lat, meta.lon, meta.altitude, meta.orography]);
    if let Some(codes) = codes {
        out.extend_from_slice(codes);
    }
    out
}

/// Feature names matching [`assemble_features`] order.
pub fn feature_names(
    predictor_names: &[String],
    spatial_vars: &[String],
    latent_dim: usize,
) -> Vec<String> {
    let mut names: Vec<String> = predictor_names.to_vec();
    names.extend(["lat", "lon", "altitude", "orography"].map(String::from));
    for var in spatial_vars {
        for k in 0..latent_dim {
            names.push(format!("{var}_code{k}"));
        }
    }
    names
}

impl FeatureLayout {
    /// Computes standardization constants from training-set raw features.
    /// Constant columns keep sd 1 so they standardize to exactly zero.
    pub fn fit(
        rows: &[Vec<f64>],
        names: Vec<String>,
        spatial_mode: SpatialMode,
        spatial_vars: Vec<String>,
        latent_dim: usize,
    ) -> Result<Self> {
        let Some(first) = rows.first() else {
            return Err(Error::data("cannot fit a feature layout on zero samples"));
        };
        let width = first.len();
        if width != names.len() {
            return Err(Error::shape(format!(
                "{} feature names for width {width}",
                names.len()
            )));
        }
        let n = rows.len() as f64;
        let mut means = vec![0f64; width];
        for row in rows {
            if row.len() != width {
                return Err(Error::shape("ragged feature rows"));
            }
            for (m, v) in means.iter_mut().zip(row) {
                *m += v;
            }
        }
        for m in &mut means {
            *m /= n;
        }
        let mut sds = vec![0f64; width];
        for row in rows {
            for ((s, v), m) in sds.iter_mut().zip(row).zip(&means) {
                *s += (v - m) * (v - m) / n;
            }
        }
        for s in &mut sds {
            *s = s.sqrt();
            if *s < 1e-12 {
                *s = 1.0;
            }
        }
        Ok(FeatureLayout {
            names,
            means,
            sds,
            spatial_mode,
            spatial_vars,
            latent_dim,
        })
    }

    pub fn width(&self) -> usize {
        self.names.len()
    }

    pub fn standardize(&self, raw: &[f64]) -> Result<Vec<f32>> {
        if raw.len() != self.width() {
            return Err(Error::shape(format!(
                "feature vector width {} does not match layout width {}",
                raw.len(),
                self.width()
            )));
        }
        Ok(raw
            .iter()
            .zip(&self.means)
            .zip(&self.sds)
            .map(|((v, m), s)| ((v - m) / s) as f32)
            .collect())
    }
}
