//! CSV tables for stations, observations and interpolated predictors.
//! UTF-8, `.` decimal, no thousands separators; floats are printed with the
//! shortest representation that round-trips.

use std::fmt::Write as _;
use std::path::Path;

use chrono::NaiveDate;

use super::{Dataset, GridSpec, StationMeta};
use crate::error::{Error, Result};

#[derive(Debug)]
pub struct ObservationRow {
    pub date: NaiveDate,
    pub station_id: String,
    /// `None` marks a missing observation (empty cell).
    pub value: Option<f64>,
}

#[derive(Debug)]
pub struct PredictorRow {
    pub date: NaiveDate,
    pub station_id: String,
    pub values: Vec<f64>,
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let content = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(content.lines().map(str::to_owned).collect())
}

fn parse_f64(field: &str, line_no: usize, path: &Path) -> Result<f64> {
    field.trim().parse::<f64>().map_err(|_| {
        Error::data(format!(
            "{}:{}: cannot parse {field:?} as a number",
            path.display(),
            line_no
        ))
    })
}

fn parse_date(field: &str, line_no: usize, path: &Path) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(field.trim(), "%Y-%m-%d").map_err(|_| {
        Error::data(format!(
            "{}:{}: cannot parse {field:?} as a date",
            path.display(),
            line_no
        ))
    })
}

/// Reads `stations.csv`; stations outside the grid bounds are rejected with
/// their id.
pub fn read_stations(path: &Path, spec: &GridSpec) -> Result<Vec<StationMeta>> {
    let lines = read_lines(path)?;
    expect_header(&lines, "station_id,lat,lon,altitude,orography", path)?;
    let mut stations = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for (i, line) in lines.iter().enumerate().skip(1) {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 5 {
            return Err(Error::data(format!(
                "{}:{line_no}: expected 5 fields, got {}",
                path.display(),
                parts.len()
            )));
        }
        let id = parts[0].trim().to_string();
        if !seen.insert(id.clone()) {
            return Err(Error::data(format!(
                "{}:{line_no}: duplicate station id {id}",
                path.display()
            )));
        }
        let lat = parse_f64(parts[1], line_no, path)?;
        let lon = parse_f64(parts[2], line_no, path)?;
        if !spec.contains(lat, lon) {
            return Err(Error::data(format!(
                "station {id} at ({lat}, {lon}) lies outside the grid"
            )));
        }
        stations.push(StationMeta {
            id,
            lat,
            lon,
            altitude: parse_f64(parts[3], line_no, path)?,
            orography: parse_f64(parts[4], line_no, path)?,
        });
    }
    Ok(stations)
}

/// Reads `observations.csv`; empty observation cells become `None`.
/// Duplicate (station, date) pairs are a data error.
pub fn read_observations(path: &Path) -> Result<Vec<ObservationRow>> {
    let lines = read_lines(path)?;
    expect_header(&lines, "date,station_id,obs", path)?;
    let mut rows = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for (i, line) in lines.iter().enumerate().skip(1) {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 3 {
            return Err(Error::data(format!(
                "{}:{line_no}: expected 3 fields, got {}",
                path.display(),
                parts.len()
            )));
        }
        let date = parse_date(parts[0], line_no, path)?;
        let station_id = parts[1].trim().to_string();
        if !seen.insert((date, station_id.clone())) {
            return Err(Error::data(format!(
                "{}:{line_no}: duplicate observation for ({date}, {station_id})",
                path.display()
            )));
        }
        let value = if parts[2].trim().is_empty() {
            None
        } else {
            Some(parse_f64(parts[2], line_no, path)?)
        };
        rows.push(ObservationRow {
            date,
            station_id,
            value,
        });
    }
    Ok(rows)
}

/// Reads `predictors.csv`; returns the predictor column names (after
/// `date,station_id`) and the rows.
pub fn read_predictors(path: &Path) -> Result<(Vec<String>, Vec<PredictorRow>)> {
    let lines = read_lines(path)?;
    let header = lines
        .first()
        .ok_or_else(|| Error::data(format!("{}: empty file", path.display())))?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < 3 || cols[0] != "date" || cols[1] != "station_id" {
        return Err(Error::data(format!(
            "{}: header must start with date,station_id",
            path.display()
        )));
    }
    let names: Vec<String> = cols[2..].iter().map(|s| s.trim().to_string()).collect();
    let mut rows = Vec::new();
    for (i, line) in lines.iter().enumerate().skip(1) {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 2 + names.len() {
            return Err(Error::data(format!(
                "{}:{line_no}: expected {} fields, got {}",
                path.display(),
                2 + names.len(),
                parts.len()
            )));
        }
        let date = parse_date(parts[0], line_no, path)?;
        let station_id = parts[1].trim().to_string();
        let values = parts[2..]
            .iter()
            .map(|p| parse_f64(p, line_no, path))
            .collect::<Result<Vec<f64>>>()?;
        rows.push(PredictorRow {
            date,
            station_id,
            values,
        });
    }
    Ok((names, rows))
}

fn expect_header(lines: &[String], expected: &str, path: &Path) -> Result<()> {
    match lines.first() {
        Some(h) if h.trim() == expected => Ok(()),
        Some(h) => Err(Error::data(format!(
            "{}: expected header {expected:?}, got {h:?}",
            path.display()
        ))),
        None => Err(Error::data(format!("{}: empty file", path.display()))),
    }
}

fn write_file(path: &Path, content: String) -> Result<()> {
    std::fs::write(path, content).map_err(|e| Error::io(path, e))
}

pub fn write_stations(path: &Path, stations: &[StationMeta]) -> Result<()> {
    let mut out = String::from("station_id,lat,lon,altitude,orography\n");
    for s in stations {
        let _ = writeln!(out, "{},{},{},{},{}", s.id, s.lat, s.lon, s.altitude, s.orography);
    }
    write_file(path, out)
}

pub fn write_observations(path: &Path, dataset: &Dataset) -> Result<()> {
    let mut out = String::from("date,station_id,obs\n");
    for sample in &dataset.samples {
        let id = &dataset.stations[sample.station].id;
        match sample.observation {
            Some(v) => {
                let _ = writeln!(out, "{},{},{}", sample.date.format("%Y-%m-%d"), id, v);
            }
            None => {
                let _ = writeln!(out, "{},{},", sample.date.format("%Y-%m-%d"), id);
            }
        }
    }
    write_file(path, out)
}

pub fn write_predictors(path: &Path, dataset: &Dataset) -> Result<()> {
    let mut out = String::from("date,station_id");
    for name in &dataset.predictor_names {
        let _ = write!(out, ",{name}");
    }
    out.push('\n');
    for sample in &dataset.samples {
        let id = &dataset.stations[sample.station].id;
        let _ = write!(out, "{},{}", sample.date.format("%Y-%m-%d"), id);
        for v in &sample.predictors {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    write_file(path, out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> GridSpec {
        GridSpec::default_domain()
    }

    #[test]
    fn toy_station_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("stations.csv");
        let stations = vec![
            StationMeta { id: "S001".into(), lat: 48.1, lon: 11.5, altitude: 520.0, orography: 480.25 },
            StationMeta { id: "S002".into(), lat: 53.6, lon: 10.0, altitude: 11.0, orography: 8.0 },
            StationMeta { id: "S003".into(), lat: 50.11, lon: 8.68, altitude: 112.0, orography: 100.125 },
        ];
        write_stations(&path, &stations).unwrap();
        let back = read_stations(&path, &spec()).unwrap();
        assert_eq!(back, stations);
    }

    #[test]
    fn station_outside_grid_is_rejected_with_id() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("stations.csv");
        std::fs::write(&path, "station_id,lat,lon,altitude,orography\nSBAD,20.0,0.0,1,1\n").unwrap();
        let err = read_stations(&path, &spec()).unwrap_err();
        assert!(err.to_string().contains("SBAD"), "{err}");
    }

    #[test]
    fn empty_observation_cell_is_missing() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("obs.csv");
        std::fs::write(&path, "date,station_id,obs\n2007-01-03,S001,3.25\n2007-01-04,S001,\n").unwrap();
        let rows = read_observations(&path).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].value, Some(3.25));
        assert_eq!(rows[1].value, None);
    }

    #[test]
    fn duplicate_observation_is_a_data_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("obs.csv");
        std::fs::write(&path, "date,station_id,obs\n2007-01-03,S001,1\n2007-01-03,S001,2\n").unwrap();
        assert!(read_observations(&path).is_err());
    }

    #[test]
    fn unparseable_row_mentions_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("obs.csv");
        std::fs::write(&path, "date,station_id,obs\n2007-01-03,S001,abc\n").unwrap();
        let err = read_observations(&path).unwrap_err();
        assert!(err.to_string().contains(":2:"), "{err}");
    }
}
