//! Binary container for gridded fields.
//!
//! Layout (little endian): magic "GFB1", u16 nlat, u16 nlon, u32 record
//! count, f64 lon0/lat0/dlon/dlat, then per record a 10-byte ISO date, an
//! 8-byte space-padded ASCII variable id and nlat*nlon f32 values, row-major
//! with north-to-south rows.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use chrono::NaiveDate;

use super::{GridField, GridSpec};
use crate::error::{Error, Result};
use crate::numerics::Tensor;

const MAGIC: &[u8; 4] = b"GFB1";

pub fn write_grid(path: &Path, fields: &[GridField]) -> Result<()> {
    if fields.is_empty() {
        return Err(Error::data("refusing to write an empty grid file"));
    }
    let spec = fields[0].spec;
    spec.validate()?;
    if spec.nlat > u16::MAX as usize || spec.nlon > u16::MAX as usize {
        return Err(Error::config(format!("grid {}x{} too large for format", spec.nlat, spec.nlon)));
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e: std::io::Error| Error::io(path, e);
    w.write_all(MAGIC).map_err(io_err)?;
    w.write_all(&(spec.nlat as u16).to_le_bytes()).map_err(io_err)?;
    w.write_all(&(spec.nlon as u16).to_le_bytes()).map_err(io_err)?;
    w.write_all(&(fields.len() as u32).to_le_bytes()).map_err(io_err)?;
    for v in [spec.lon0, spec.lat0, spec.dlon, spec.dlat] {
        w.write_all(&v.to_le_bytes()).map_err(io_err)?;
    }
    for field in fields {
        if field.spec != spec {
            return Err(Error::data(format!(
                "field {} {} has a different grid spec",
                field.variable, field.valid_date
            )));
        }
        let date = field.valid_date.format("%Y-%m-%d").to_string();
        w.write_all(date.as_bytes()).map_err(io_err)?;
        let id = field.variable.as_bytes();
        if id.len() > 8 || !field.variable.is_ascii() {
            return Err(Error::data(format!(
                "variable id {:?} must be ASCII with at most 8 bytes",
                field.variable
            )));
        }
        let mut padded = [b' '; 8];
        padded[..id.len()].copy_from_slice(id);
        w.write_all(&padded).map_err(io_err)?;
        // Memory rows run south to north; the format stores north to south.
        let values = field.values.data();
        for row in (0..spec.nlat).rev() {
            for v in &values[row * spec.nlon..(row + 1) * spec.nlon] {
                w.write_all(&v.to_le_bytes()).map_err(io_err)?;
            }
        }
    }
    w.flush().map_err(io_err)
}

pub fn read_grid(path: &Path) -> Result<Vec<GridField>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = Offset {
        inner: BufReader::new(file),
        offset: 0,
    };
    let mut magic = [0u8; 4];
    r.read_exact_at(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format {
            offset: 0,
            msg: format!("bad magic {magic:?}, expected \"GFB1\""),
        });
    }
    let nlat = r.read_u16()? as usize;
    let nlon = r.read_u16()? as usize;
    let count = r.read_u32()? as usize;
    let lon0 = r.read_f64()?;
    let lat0 = r.read_f64()?;
    let dlon = r.read_f64()?;
    let dlat = r.read_f64()?;
    let spec = GridSpec {
        lon0,
        lat0,
        dlon,
        dlat,
        nlon,
        nlat,
    };
    spec.validate().map_err(|e| Error::Format {
        offset: 4,
        msg: e.to_string(),
    })?;
    let mut fields = Vec::with_capacity(count);
    for _ in 0..count {
        let mut date_buf = [0u8; 10];
        r.read_exact_at(&mut date_buf)?;
        let date_str = std::str::from_utf8(&date_buf).map_err(|_| Error::Format {
            offset: r.offset - 10,
            msg: "date is not UTF-8".into(),
        })?;
        let valid_date = NaiveDate::parse_from_str(date_str, "%Y-%m-%d").map_err(|_| Error::Format {
            offset: r.offset - 10,
            msg: format!("invalid date {date_str:?}"),
        })?;
        let mut id_buf = [0u8; 8];
        r.read_exact_at(&mut id_buf)?;
        let variable = std::str::from_utf8(&id_buf)
            .map_err(|_| Error::Format {
                offset: r.offset - 8,
                msg: "variable id is not UTF-8".into(),
            })?
            .trim_end()
            .to_string();
        let mut values = vec![0f32; nlat * nlon];
        let mut buf = vec![0u8; nlon * 4];
        // Invert the north-to-south row order back to memory layout.
        for row in (0..nlat).rev() {
            r.read_exact_at(&mut buf)?;
            for (i, chunk) in buf.chunks_exact(4).enumerate() {
                values[row * nlon + i] = f32::from_le_bytes(chunk.try_into().unwrap());
            }
        }
        fields.push(GridField {
            spec,
            variable,
            valid_date,
            values: Tensor::new(vec![nlat, nlon], values)?,
        });
    }
    Ok(fields)
}

struct Offset<R> {
    inner: R,
    offset: u64,
}

impl<R: Read> Offset<R> {
    fn read_exact_at(&mut self, buf: &mut [u8]) -> Result<()> {
        self.inner.read_exact(buf).map_err(|e| Error::Format {
            offset: self.offset,
            msg: format!("truncated payload: {e}"),
        })?;
        self.offset += buf.len() as u64;
        Ok(())
    }

    fn read_u16(&mut self) -> Result<u16> {
        let mut b = [0u8; 2];
        self.read_exact_at(&mut b)?;
        Ok(u16::from_le_bytes(b))
    }

    fn read_u32(&mut self) -> Result<u32> {
        let mut b = [0u8; 4];
        self.read_exact_at(&mut b)?;
        Ok(u32::from_le_bytes(b))
    }

    fn read_f64(&mut self) -> Result<f64> {
        let mut b = [0u8; 8];
        self.read_exact_at(&mut b)?;
        Ok(f64::from_le_bytes(b))
    }
}
