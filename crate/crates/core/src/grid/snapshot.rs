//! Binary snapshot format shared by every module.
//!
//! Layout, all integers and floats little-endian:
//!
//! | field          | type                | notes                          |
//! |----------------|---------------------|--------------------------------|
//! | magic          | 6 bytes             | `b"WVSIM1"`                    |
//! | axes           | u32                 | 1 or 2                         |
//! | payload        | u32                 | 0 = complex, 1 = real only     |
//! | n_points       | u64 × axes          |                                |
//! | x_min, x_max   | (f64, f64) × axes   |                                |
//! | time_label     | f64                 |                                |
//! | data           | f64 × N (× 2)       | row-major; complex as (re, im) |

use std::io::{Read, Write};

use num_complex::Complex64;

use super::{Axis, SpatialGrid};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 6] = b"WVSIM1";

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Complex(Vec<Complex64>),
    Real(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub grid: SpatialGrid,
    pub time: f64,
    pub payload: Payload,
}

pub fn write_complex<W: Write>(
    w: &mut W,
    grid: &SpatialGrid,
    time: f64,
    data: &[Complex64],
) -> Result<()> {
    write_header(w, grid, time, 0, data.len())?;
    for z in data {
        w.write_all(&z.re.to_le_bytes())?;
        w.write_all(&z.im.to_le_bytes())?;
    }
    Ok(())
}

pub fn write_real<W: Write>(w: &mut W, grid: &SpatialGrid, time: f64, data: &[f64]) -> Result<()> {
    write_header(w, grid, time, 1, data.len())?;
    for v in data {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn write_header<W: Write>(
    w: &mut W,
    grid: &SpatialGrid,
    time: f64,
    payload: u32,
    len: usize,
) -> Result<()> {
    if len != grid.len() {
        return Err(Error::GridMismatch(format!(
            "{len} values for a grid of {}",
            grid.len()
        )));
    }
    w.write_all(MAGIC)?;
    w.write_all(&(grid.ndim() as u32).to_le_bytes())?;
    w.write_all(&payload.to_le_bytes())?;
    for a in grid.axes() {
        w.write_all(&(a.n_points as u64).to_le_bytes())?;
    }
    for a in grid.axes() {
        w.write_all(&a.x_min.to_le_bytes())?;
        w.write_all(&a.x_max.to_le_bytes())?;
    }
    w.write_all(&time.to_le_bytes())?;
    Ok(())
}

fn read_array<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    Ok(f64::from_le_bytes(read_array::<8, _>(r)?))
}

pub fn read<R: Read>(r: &mut R) -> Result<Snapshot> {
    let magic = read_array::<6, _>(r)?;
    if &magic != MAGIC {
        return Err(Error::Format(format!("bad magic {magic:?}")));
    }
    let axes = u32::from_le_bytes(read_array::<4, _>(r)?) as usize;
    if !(1..=2).contains(&axes) {
        return Err(Error::Format(format!("unsupported axis count {axes}")));
    }
    let payload = u32::from_le_bytes(read_array::<4, _>(r)?);
    let mut counts = Vec::with_capacity(axes);
    for _ in 0..axes {
        counts.push(u64::from_le_bytes(read_array::<8, _>(r)?) as usize);
    }
    let mut built = Vec::with_capacity(axes);
    for n in counts {
        let lo = read_f64(r)?;
        let hi = read_f64(r)?;
        built.push(Axis::new(n, lo, hi).map_err(|e| Error::Format(e.to_string()))?);
    }
    let grid = SpatialGrid::new(built)?;
    let time = read_f64(r)?;
    let payload = match payload {
        0 => {
            let mut v = Vec::with_capacity(grid.len());
            for _ in 0..grid.len() {
                let re = read_f64(r)?;
                let im = read_f64(r)?;
                v.push(Complex64::new(re, im));
            }
            Payload::Complex(v)
        }
        1 => Payload::Real((0..grid.len()).map(|_| read_f64(r)).collect::<Result<_>>()?),
        other => return Err(Error::Format(format!("unknown payload kind {other}"))),
    };
    Ok(Snapshot {
        grid,
        time,
        payload,
    })
}
