//! Bilinear interpolation of grid fields to point locations.

use super::GridField;
use crate::error::{Error, Result};

/// Bilinear weighting of the four grid nodes surrounding `(lat, lon)`.
/// Exact on functions linear in lat and lon; bounded by the surrounding
/// node values. Coordinates outside the grid are a domain error.
pub fn bilinear_interpolate(field: &GridField, lat: f64, lon: f64) -> Result<f64> {
    let spec = &field.spec;
    if !spec.contains(lat, lon) {
        return Err(Error::domain(format!(
            "point ({lat}, {lon}) outside grid lat [{}, {}], lon [{}, {}]",
            spec.lat0,
            spec.lat_max(),
            spec.lon0,
            spec.lon_max()
        )));
    }
    let fy = (lat - spec.lat0) / spec.dlat;
    let fx = (lon - spec.lon0) / spec.dlon;
    let iy = (fy.floor() as usize).min(spec.nlat - 2);
    let ix = (fx.floor() as usize).min(spec.nlon - 2);
    let ty = fy - iy as f64;
    let tx = fx - ix as f64;
    let at = |y: usize, x: usize| f64::from(field.values.data()[y * spec.nlon + x]);
    let v00 = at(iy, ix);
    let v01 = at(iy, ix + 1);
    let v10 = at(iy + 1, ix);
    let v11 = at(iy + 1, ix + 1);
    Ok(v00 * (1.0 - ty) * (1.0 - tx) + v01 * (1.0 - ty) * tx + v10 * ty * (1.0 - tx) + v11 * ty * tx)
}
