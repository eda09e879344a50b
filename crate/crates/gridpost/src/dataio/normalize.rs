//! Per-field min-max normalization.

use super::GridField;
use crate::error::{Error, Result};

/// Rescales one field to [0,1] via `(v - min) / (max - min)`, computed per
/// individual field so the spatial structure is isolated from magnitude.
/// A constant field maps to 0.5 everywhere (the recorded min/max still allow
/// an exact round trip). Returns `(field01, min, max)`.
pub fn minmax_normalize(field: &GridField) -> Result<(GridField, f32, f32)> {
    if !field.values.all_finite() {
        return Err(Error::data(format!(
            "field {} {} contains non-finite values",
            field.variable, field.valid_date
        )));
    }
    let mut min = f32::INFINITY;
    let mut max = f32::NEG_INFINITY;
    for &v in field.values.data() {
        min = min.min(v);
        max = max.max(v);
    }
    let mut out = field.clone();
    if min == max {
        out.values.data_mut().fill(0.5);
    } else {
        let scale = 1.0 / (max - min);
        for v in out.values.data_mut() {
            *v = (*v - min) * scale;
        }
    }
    Ok((out, min, max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::GridSpec;
    use crate::numerics::Tensor;
    use crate::rng::stream;
    use chrono::NaiveDate;
    use rand::Rng;

    fn field(values: Vec<f32>, nlat: usize, nlon: usize) -> GridField {
        let spec = GridSpec {
            nlat,
            nlon,
            ..GridSpec::default_domain()
        };
        GridField::new(
            spec,
            "t2m".into(),
            NaiveDate::from_ymd_opt(2007, 6, 1).unwrap(),
            Tensor::new(vec![nlat, nlon], values).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn midpoint_maps_to_half() {
        let f = field(vec![270.0, 290.0, 280.0, 275.0], 2, 2);
        let (f01, min, max) = minmax_normalize(&f).unwrap();
        assert_eq!((min, max), (270.0, 290.0));
        assert!((f01.values.data()[2] - 0.5).abs() < 1e-6);
    }

    #[test]
    fn constant_field_maps_to_half() {
        let f = field(vec![7.5; 4], 2, 2);
        let (f01, min, max) = minmax_normalize(&f).unwrap();
        assert_eq!((min, max), (7.5, 7.5));
        assert!(f01.values.iter().all(|&v| v == 0.5));
    }

    #[test]
    fn round_trip_recovers_values() {
        let mut rng = stream(4, "norm");
        let values: Vec<f32> = (0..81 * 81).map(|_| rng.random_range(250.0..310.0)).collect();
        let f = field(values.clone(), 81, 81);
        let (f01, min, max) = minmax_normalize(&f).unwrap();
        assert!(f01.values.iter().all(|&v| (0.0..=1.0).contains(&v)));
        for (v01, orig) in f01.values.iter().zip(&values) {
            let back = v01 * (max - min) + min;
            assert!((back - orig).abs() < 1e-3 * orig.abs().max(1.0));
        }
    }

    #[test]
    fn non_finite_is_a_data_error() {
        let f = field(vec![1.0, f32::NAN, 0.0, 2.0], 2, 2);
        assert!(minmax_normalize(&f).is_err());
    }
}
