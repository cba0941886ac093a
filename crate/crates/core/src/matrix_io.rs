//! Matrix export formats.
//!
//! JSON: nested row arrays of `[re, im]` pairs.
//!
//! Binary (little-endian): the 8 magic bytes `LOPTMAT1`, `u64` rows, `u64` cols, then
//! `rows * cols` entries in row-major order, each as `f64` real part followed by `f64`
//! imaginary part.

use std::io::{Read, Write};

use crate::{CMatrix, Complex, Error, Result};

pub const MAGIC: &[u8; 8] = b"LOPTMAT1";

pub fn to_json_value(m: &CMatrix) -> serde_json::Value {
    let rows: Vec<Vec<[f64; 2]>> = (0..m.nrows())
        .map(|i| {
            (0..m.ncols())
                .map(|j| [m[(i, j)].re, m[(i, j)].im])
                .collect()
        })
        .collect();
    serde_json::json!(rows)
}

pub fn from_json_value(v: &serde_json::Value) -> Result<CMatrix> {
    let rows: Vec<Vec<[f64; 2]>> = serde_json::from_value(v.clone())?;
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if r == 0 || c == 0 {
        return Err(Error::InvalidArgument("empty matrix".into()));
    }
    if let Some(bad) = rows.iter().find(|row| row.len() != c) {
        return Err(Error::LengthMismatch {
            left: c,
            right: bad.len(),
        });
    }
    Ok(CMatrix::from_fn(r, c, |i, j| {
        Complex::new(rows[i][j][0], rows[i][j][1])
    }))
}

pub fn write_binary<W: Write>(m: &CMatrix, mut w: W) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&(m.nrows() as u64).to_le_bytes())?;
    w.write_all(&(m.ncols() as u64).to_le_bytes())?;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            w.write_all(&m[(i, j)].re.to_le_bytes())?;
            w.write_all(&m[(i, j)].im.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_binary<Rd: Read>(mut r: Rd) -> Result<CMatrix> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::InvalidArgument("bad matrix magic bytes".into()));
    }
    let mut word = [0u8; 8];
    let mut next_u64 = |r: &mut Rd| -> Result<u64> {
        r.read_exact(&mut word)?;
        Ok(u64::from_le_bytes(word))
    };
    let rows = next_u64(&mut r)? as usize;
    let cols = next_u64(&mut r)? as usize;
    let mut data = vec![0f64; 2 * rows * cols];
    for x in data.iter_mut() {
        *x = f64::from_bits(next_u64(&mut r)?);
    }
    Ok(CMatrix::from_fn(rows, cols, |i, j| {
        let k = 2 * (i * cols + j);
        Complex::new(data[k], data[k + 1])
    }))
}
