use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;

use super::field::{ComplexField, ScalarField};
use super::grid::Grid;
use crate::error::{invalid, Result};

/// Payload of a field file.
#[derive(Clone, Debug)]
pub enum FieldData {
    Real(Vec<f64>),
    Complex(Vec<Complex64>),
}

/// Contents of a field file: shape, box lengths and values.
#[derive(Clone, Debug)]
pub struct FieldFile {
    pub shape: Vec<usize>,
    pub lengths: Vec<f64>,
    pub data: FieldData,
}

impl FieldFile {
    /// Centered orthorhombic grid described by the header.
    pub fn grid(&self) -> Result<Arc<Grid>> {
        Grid::centered_box(&self.lengths, self.shape.clone())
    }

    pub fn into_scalar(self, grid: Arc<Grid>) -> Result<ScalarField> {
        match self.data {
            FieldData::Real(v) => ScalarField::new(grid, v),
            FieldData::Complex(_) => invalid("expected a real field, file holds complex values"),
        }
    }

    pub fn into_complex(self, grid: Arc<Grid>) -> Result<ComplexField> {
        match self.data {
            FieldData::Real(v) => ComplexField::new(grid, v.into_iter().map(|x| Complex64::new(x, 0.0)).collect()),
            FieldData::Complex(v) => ComplexField::new(grid, v),
        }
    }
}

fn write_header<W: Write>(w: &mut W, grid: &Grid) -> Result<()> {
    w.write_all(&(grid.dim() as u64).to_le_bytes())?;
    for &n in grid.shape() {
        w.write_all(&(n as u64).to_le_bytes())?;
    }
    for l in grid.lengths() {
        w.write_all(&l.to_le_bytes())?;
    }
    Ok(())
}

/// Little-endian layout: d (u64), n per axis (u64), box lengths (f64), row-major values.
pub fn write_scalar(path: &Path, field: &ScalarField) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_header(&mut w, field.grid())?;
    for v in field.values() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Complex values are stored interleaved (re, im).
pub fn write_complex(path: &Path, field: &ComplexField) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_header(&mut w, field.grid())?;
    for v in field.values() {
        w.write_all(&v.re.to_le_bytes())?;
        w.write_all(&v.im.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_field(path: &Path) -> Result<FieldFile> {
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    let word = |i: usize| -> Result<[u8; 8]> {
        bytes
            .get(8 * i..8 * i + 8)
            .map(|s| s.try_into().unwrap())
            .ok_or_else(|| crate::Error::Invalid("truncated field file".into()))
    };
    let d = u64::from_le_bytes(word(0)?) as usize;
    if !(1..=3).contains(&d) {
        return invalid(format!("field file declares dimension {d}"));
    }
    let shape: Vec<usize> = (0..d).map(|i| word(1 + i).map(|w| u64::from_le_bytes(w) as usize)).collect::<Result<_>>()?;
    let lengths: Vec<f64> = (0..d).map(|i| word(1 + d + i).map(f64::from_le_bytes)).collect::<Result<_>>()?;
    let count: usize = shape.iter().product();
    let start = 1 + 2 * d;
    let words = bytes.len() / 8 - start;
    if bytes.len() % 8 != 0 {
        return invalid("field file length is not a multiple of 8 bytes");
    }
    let data = if words == count {
        FieldData::Real((0..count).map(|i| word(start + i).map(f64::from_le_bytes)).collect::<Result<_>>()?)
    } else if words == 2 * count {
        FieldData::Complex(
            (0..count)
                .map(|i| {
                    Ok(Complex64::new(
                        f64::from_le_bytes(word(start + 2 * i)?),
                        f64::from_le_bytes(word(start + 2 * i + 1)?),
                    ))
                })
                .collect::<Result<_>>()?,
        )
    } else {
        return invalid(format!("field file holds {words} values for {count} grid points"));
    };
    Ok(FieldFile { shape, lengths, data })
}

/// One row per grid point: coordinates then value.
pub fn write_csv(path: &Path, field: &ScalarField) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let grid = field.grid();
    let names = ["x", "y", "z"];
    writeln!(w, "{},value", names[..grid.dim()].join(","))?;
    for (i, v) in field.values().iter().enumerate() {
        let p = grid.point(i);
        let coords: Vec<String> = p[..grid.dim()].iter().map(|c| format!("{c}")).collect();
        writeln!(w, "{},{v}", coords.join(","))?;
    }
    w.flush()?;
    Ok(())
}
