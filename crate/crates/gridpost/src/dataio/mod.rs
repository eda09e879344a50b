//! Data model and file formats: gridded forecast fields, station tables,
//! min-max normalization, bilinear interpolation, chronological splits and
//! the synthetic dataset generator.

mod gridfile;
mod interp;
mod normalize;
mod split;
mod synth;
mod tables;

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub use gridfile::{read_grid, write_grid};
pub use interp::bilinear_interpolate;
pub use normalize::minmax_normalize;
pub use split::chronological_split;
pub use synth::{synth_generate, SynthConfig, SynthOutput};
pub use tables::{
    read_observations, read_predictors, read_stations, write_observations, write_predictors,
    write_stations,
};

/// Regular lat/lon grid. Rows are stored south to north in memory
/// (row `i` sits at `lat0 + i*dlat`); the binary format is north to south.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lon0: f64,
    pub lat0: f64,
    pub dlon: f64,
    pub dlat: f64,
    pub nlon: usize,
    pub nlat: usize,
}

impl GridSpec {
    /// 81x81 at 0.5 degrees, lon -10..30, lat 30..70.
    pub fn default_domain() -> Self {
        GridSpec {
            lon0: -10.0,
            lat0: 30.0,
            dlon: 0.5,
            dlat: 0.5,
            nlon: 81,
            nlat: 81,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.nlon < 2 || self.nlat < 2 || self.dlon <= 0.0 || self.dlat <= 0.0 {
            return Err(Error::config(format!("invalid grid spec {self:?}")));
        }
        Ok(())
    }

    pub fn lat_max(&self) -> f64 {
        self.lat0 + self.dlat * (self.nlat - 1) as f64
    }

    pub fn lon_max(&self) -> f64 {
        self.lon0 + self.dlon * (self.nlon - 1) as f64
    }

    pub fn contains(&self, lat: f64, lon: f64) -> bool {
        lat >= self.lat0 && lat <= self.lat_max() && lon >= self.lon0 && lon <= self.lon_max()
    }
}

/// One variable's 2-D ensemble-mean forecast field at one valid time.
#[derive(Clone, Debug, PartialEq)]
pub struct GridField {
    pub spec: GridSpec,
    pub variable: String,
    pub valid_date: NaiveDate,
    /// Shape (nlat, nlon), row-major, south-to-north rows.
    pub values: Tensor<f32>,
}

impl GridField {
    pub fn new(spec: GridSpec, variable: String, valid_date: NaiveDate, values: Tensor<f32>) -> Result<Self> {
        spec.validate()?;
        if values.shape() != [spec.nlat, spec.nlon] {
            return Err(Error::shape(format!(
                "field shape {:?} does not match grid {}x{}",
                values.shape(),
                spec.nlat,
                spec.nlon
            )));
        }
        Ok(GridField {
            spec,
            variable,
            valid_date,
            values,
        })
    }
}

/// Station metadata row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StationMeta {
    pub id: String,
    pub lat: f64,
    pub lon: f64,
    pub altitude: f64,
    pub orography: f64,
}

/// One (station, date) row: interpolated predictors plus the observation.
/// `station` indexes into [`Dataset::stations`]; predictor values align with
/// [`Dataset::predictor_names`].
#[derive(Clone, Debug, PartialEq)]
pub struct StationSample {
    pub station: usize,
    pub date: NaiveDate,
    pub predictors: Vec<f64>,
    pub observation: Option<f64>,
}

/// A set of grids, stations and paired station samples.
#[derive(Clone, Debug, Default)]
pub struct Dataset {
    pub stations: Vec<StationMeta>,
    pub predictor_names: Vec<String>,
    /// Sorted by (date, station index).
    pub samples: Vec<StationSample>,
    /// Per variable, sorted by date.
    pub grids: BTreeMap<String, Vec<GridField>>,
}

impl Dataset {
    pub fn station_index(&self, id: &str) -> Option<usize> {
        self.stations.iter().position(|s| s.id == id)
    }

    pub fn grid_variables(&self) -> Vec<String> {
        self.grids.keys().cloned().collect()
    }

    pub fn fields(&self, variable: &str) -> Result<&[GridField]> {
        self.grids
            .get(variable)
            .map(|v| v.as_slice())
            .ok_or_else(|| Error::data(format!("no grid fields for variable {variable}")))
    }

    /// Loads the on-disk layout produced by the data generator: one
    /// `grid_<var>.gfb` per variable plus `stations.csv`,
    /// `observations.csv` and `predictors.csv`.
    pub fn load(dir: &Path) -> Result<Self> {
        let mut grids = BTreeMap::new();
        let mut spec = None;
        let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
        let mut grid_paths: Vec<_> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n.starts_with("grid_") && n.ends_with(".gfb"))
            })
            .collect();
        grid_paths.sort();
        for path in grid_paths {
            for field in read_grid(&path)? {
                spec.get_or_insert(field.spec);
                grids
                    .entry(field.variable.clone())
                    .or_insert_with(Vec::new)
                    .push(field);
            }
        }
        for fields in grids.values_mut() {
            fields.sort_by_key(|f| f.valid_date);
        }
        let spec = spec.ok_or_else(|| Error::data(format!("no grid_*.gfb files in {}", dir.display())))?;
        let stations = read_stations(&dir.join("stations.csv"), &spec)?;
        let observations = read_observations(&dir.join("observations.csv"))?;
        let (predictor_names, predictor_rows) = read_predictors(&dir.join("predictors.csv"))?;

        let station_index: BTreeMap<&str, usize> =
            stations.iter().enumerate().map(|(i, s)| (s.id.as_str(), i)).collect();
        let mut obs_map: BTreeMap<(NaiveDate, usize), f64> = BTreeMap::new();
        for row in &observations {
            let Some(&si) = station_index.get(row.station_id.as_str()) else {
                return Err(Error::data(format!("observation for unknown station {}", row.station_id)));
            };
            if let Some(value) = row.value {
                if obs_map.insert((row.date, si), value).is_some() {
                    return Err(Error::data(format!(
                        "duplicate observation for ({}, {})",
                        row.date, row.station_id
                    )));
                }
            }
        }
        let mut samples = Vec::with_capacity(predictor_rows.len());
        let mut seen = std::collections::BTreeSet::new();
        for row in predictor_rows {
            let Some(&si) = station_index.get(row.station_id.as_str()) else {
                return Err(Error::data(format!("predictors for unknown station {}", row.station_id)));
            };
            if !seen.insert((row.date, si)) {
                return Err(Error::data(format!(
                    "duplicate predictor row for ({}, {})",
                    row.date, row.station_id
                )));
            }
            samples.push(StationSample {
                station: si,
                date: row.date,
                predictors: row.values,
                observation: obs_map.get(&(row.date, si)).copied(),
            });
        }
        samples.sort_by_key(|s| (s.date, s.station));
        Ok(Dataset {
            stations,
            predictor_names,
            samples,
            grids,
        })
    }

    /// Writes the dataset in the generator's on-disk layout and returns the
    /// written file names.
    pub fn write(&self, dir: &Path) -> Result<Vec<String>> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut written = Vec::new();
        for (var, fields) in &self.grids {
            let name = format!("grid_{var}.gfb");
            write_grid(&dir.join(&name), fields)?;
            written.push(name);
        }
        write_stations(&dir.join("stations.csv"), &self.stations)?;
        written.push("stations.csv".into());
        write_observations(&dir.join("observations.csv"), self)?;
        written.push("observations.csv".into());
        write_predictors(&dir.join("predictors.csv"), self)?;
        written.push("predictors.csv".into());
        Ok(written)
    }

    /// Distinct sorted dates present in the samples.
    pub fn dates(&self) -> Vec<NaiveDate> {
        let mut dates: Vec<NaiveDate> = self.samples.iter().map(|s| s.date).collect();
        dates.dedup();
        dates.sort();
        dates.dedup();
        dates
    }
}

/// Chronologically disjoint train/validation/test partitions.
#[derive(Clone, Debug)]
pub struct DatasetSplit {
    pub train: Dataset,
    pub validation: Dataset,
    pub test: Dataset,
}

/// SHA-256 of a file, hex-encoded.
pub fn file_sha256(path: &Path) -> Result<String> {
    use sha2::Digest;
    let mut file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut hasher = sha2::Sha256::new();
    let mut buf = [0u8; 65536];
    loop {
        let n = file.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    let digest = hasher.finalize();
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}
