//! Serialized model container: 4-byte magic "MBD1" followed by a JSON
//! payload holding the model kind, its full configuration snapshot (with
//! any recorded deviations), seeds, parameter blobs, feature layout and
//! standardization constants. Loading validates the kind-specific payload;
//! a reloaded bundle reproduces predictions exactly (f32 parameters
//! round-trip through the shortest-representation JSON encoding).

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::convae::{self, ConvAeModel};
use crate::dataio::{minmax_normalize, Dataset};
use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::pca::{pca_encode, PcaModel};
use crate::postproc::{DrnModel, EmosModel, LatentCodes, SpatialMode};

const MAGIC: &[u8; 4] = b"MBD1";

/// A frozen dimensionality-reduction model for one spatial variable.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum SpatialEncoder {
    ConvAe { variable: String, model: ConvAeModel },
    Pca { variable: String, model: PcaModel },
}

impl SpatialEncoder {
    pub fn variable(&self) -> &str {
        match self {
            SpatialEncoder::ConvAe { variable, .. } | SpatialEncoder::Pca { variable, .. } => variable,
        }
    }

    pub fn latent_dim(&self) -> usize {
        match self {
            SpatialEncoder::ConvAe { model, .. } => model.latent_dim(),
            SpatialEncoder::Pca { model, .. } => model.h,
        }
    }

    pub fn mode(&self) -> SpatialMode {
        match self {
            SpatialEncoder::ConvAe { .. } => SpatialMode::ConvAe,
            SpatialEncoder::Pca { .. } => SpatialMode::Pca,
        }
    }

    /// Encodes one min-max-normalized field.
    pub fn encode_field(&self, field01: &Tensor<f32>) -> Result<Vec<f64>> {
        match self {
            SpatialEncoder::ConvAe { model, .. } => Ok(convae::encode(model, field01)?
                .into_iter()
                .map(f64::from)
                .collect()),
            SpatialEncoder::Pca { model, .. } => {
                let flat: Vec<f64> = field01.data().iter().map(|&v| f64::from(v)).collect();
                pca_encode(model, &flat)
            }
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BundlePayload {
    Emos {
        model: EmosModel,
    },
    Pca {
        variable: String,
        model: PcaModel,
    },
    ConvAe {
        variable: String,
        model: ConvAeModel,
    },
    Drn {
        model: DrnModel,
        /// Frozen encoders consumed at training time, embedded so the
        /// bundle predicts standalone.
        encoders: Vec<SpatialEncoder>,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelBundle {
    pub created_utc: String,
    pub seed: u64,
    /// Configuration notes recorded at training time, including deviations
    /// from the nominal setup (sigma link, pool stride and the like).
    pub notes: Vec<String>,
    /// SHA-256 of the input files the model was trained from.
    pub input_checksums: BTreeMap<String, String>,
    pub payload: BundlePayload,
}

impl ModelBundle {
    pub fn new(seed: u64, payload: BundlePayload) -> Self {
        ModelBundle {
            created_utc: chrono::Utc::now().to_rfc3339(),
            seed,
            notes: Vec::new(),
            input_checksums: BTreeMap::new(),
            payload,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self.payload {
            BundlePayload::Emos { .. } => "emos",
            BundlePayload::Pca { .. } => "pca",
            BundlePayload::ConvAe { .. } => "convae",
            BundlePayload::Drn { .. } => "drn",
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        file.write_all(MAGIC).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer(&mut file, self)
            .map_err(|e| Error::bundle(format!("cannot serialize bundle: {e}")))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut magic = [0u8; 4];
        file.read_exact(&mut magic).map_err(|_| Error::Format {
            offset: 0,
            msg: "bundle too short for magic".into(),
        })?;
        if &magic != MAGIC {
            return Err(Error::Format {
                offset: 0,
                msg: format!("bad magic {magic:?}, expected \"MBD1\""),
            });
        }
        let bundle: ModelBundle = serde_json::from_reader(std::io::BufReader::new(file))
            .map_err(|e| Error::bundle(format!("malformed bundle payload: {e}")))?;
        bundle.validate()?;
        Ok(bundle)
    }

    /// Kind-specific payload validation run on every load.
    pub fn validate(&self) -> Result<()> {
        match &self.payload {
            BundlePayload::Emos { model } => {
                if model.station_params.is_empty() {
                    return Err(Error::bundle("EMOS bundle has no station coefficients"));
                }
                for (id, p) in &model.station_params {
                    if ![p.a, p.b, p.c, p.d].iter().all(|v| v.is_finite()) {
                        return Err(Error::bundle(format!("non-finite EMOS coefficients at {id}")));
                    }
                }
            }
            BundlePayload::Pca { model, .. } => {
                if model.components.len() != model.h * model.dim
                    || model.mean.len() != model.dim
                    || model.eigenvalues.len() != model.h
                {
                    return Err(Error::bundle("PCA payload shapes are inconsistent"));
                }
            }
            BundlePayload::ConvAe { model, .. } => {
                let hw = model.config.input_hw;
                if model.encoder.out_shape() != [model.config.latent_dim]
                    || model.decoder.out_shape() != [1, hw.0, hw.1]
                {
                    return Err(Error::bundle("autoencoder geometry does not close"));
                }
                let finite = model
                    .encoder
                    .params()
                    .into_iter()
                    .chain(model.decoder.params())
                    .all(|p| p.all_finite());
                if !finite {
                    return Err(Error::bundle("autoencoder parameters are not finite"));
                }
            }
            BundlePayload::Drn { model, encoders } => {
                if model.members.is_empty() {
                    return Err(Error::bundle("DRN bundle has no repetition members"));
                }
                let expect_width = model.layout.width() + model.config.embedding_dim;
                for (i, member) in model.members.iter().enumerate() {
                    if member.net.in_shape() != [expect_width] {
                        return Err(Error::bundle(format!(
                            "member {i} input width {:?} does not match layout {expect_width}",
                            member.net.in_shape()
                        )));
                    }
                }
                if encoders.len() != model.config.spatial_vars.len() {
                    return Err(Error::bundle(format!(
                        "{} encoders embedded for {} spatial variables",
                        encoders.len(),
                        model.config.spatial_vars.len()
                    )));
                }
                for (enc, var) in encoders.iter().zip(&model.config.spatial_vars) {
                    if enc.variable() != var {
                        return Err(Error::bundle(format!(
                            "encoder for {} does not match configured variable {var}",
                            enc.variable()
                        )));
                    }
                    if enc.latent_dim() != model.config.latent_dim {
                        return Err(Error::bundle(format!(
                            "encoder for {} has h={}, model expects {}",
                            var,
                            enc.latent_dim(),
                            model.config.latent_dim
                        )));
                    }
                    if enc.mode() != model.config.spatial_mode {
                        return Err(Error::bundle(format!(
                            "encoder method for {} does not match spatial mode {}",
                            var, model.config.spatial_mode
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Normalizes each grid field and encodes it, concatenating the codes of
/// all encoders per date. Every encoder variable must provide a field for
/// every date.
pub fn compute_codes(encoders: &[SpatialEncoder], dataset: &Dataset) -> Result<LatentCodes> {
    let mut codes: LatentCodes = BTreeMap::new();
    if encoders.is_empty() {
        return Ok(codes);
    }
    let reference_dates: Vec<chrono::NaiveDate> = dataset
        .fields(encoders[0].variable())?
        .iter()
        .map(|f| f.valid_date)
        .collect();
    for encoder in encoders {
        let fields = dataset.fields(encoder.variable())?;
        let dates: Vec<chrono::NaiveDate> = fields.iter().map(|f| f.valid_date).collect();
        if dates != reference_dates {
            return Err(Error::data(format!(
                "grid dates of {} do not match {}",
                encoder.variable(),
                encoders[0].variable()
            )));
        }
        for field in fields {
            let (field01, _, _) = minmax_normalize(field)?;
            let code = encoder.encode_field(&field01.values)?;
            codes.entry(field.valid_date).or_default().extend(code);
        }
    }
    Ok(codes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::postproc::EmosParams;

    fn emos_bundle() -> ModelBundle {
        let mut station_params = BTreeMap::new();
        station_params.insert(
            "S001".into(),
            EmosParams { a: 0.1, b: 0.95, c: 0.4, d: 0.2 },
        );
        ModelBundle::new(
            7,
            BundlePayload::Emos {
                model: EmosModel {
                    target_var: "t2m".into(),
                    station_params,
                },
            },
        )
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emos.mbd");
        let bundle = emos_bundle();
        bundle.save(&path).unwrap();
        let back = ModelBundle::load(&path).unwrap();
        assert_eq!(back.kind(), "emos");
        assert_eq!(back.seed, 7);
        match back.payload {
            BundlePayload::Emos { model } => {
                assert_eq!(model.station_params["S001"].b, 0.95);
            }
            _ => panic!("wrong payload kind"),
        }
    }

    #[test]
    fn bad_magic_is_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.mbd");
        std::fs::write(&path, b"JSON{}").unwrap();
        match ModelBundle::load(&path) {
            Err(Error::Format { offset: 0, .. }) => {}
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_payload_is_a_bundle_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.mbd");
        std::fs::write(&path, b"MBD1{\"broken\":").unwrap();
        match ModelBundle::load(&path) {
            Err(Error::Bundle(_)) => {}
            other => panic!("expected bundle error, got {other:?}"),
        }
    }
}
