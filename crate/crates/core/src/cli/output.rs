use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::geometry::Grid;
use crate::regularity::write_pgm;
use crate::tracking::TrackedPaths;
use crate::ulam::SupportVector;

const VECTOR_MAGIC: &[u8; 8] = b"CLVEC01\n";

/// Writes `v` as an 8-bit graymap with one pixel per bin, mapping
/// `[min, max]` of the full-grid values affinely onto `[0, 255]`. Bins off
/// the support take the value 0 before mapping. Top row is the largest `y`.
pub fn render_vector<W: Write>(v: &SupportVector, grid: &Grid, w: W) -> io::Result<()> {
    let (nx, ny) = (grid.nx(), grid.ny());
    let mut full = vec![0.0; nx * ny];
    for (&b, &x) in v.bins.iter().zip(&v.values) {
        full[b] = x;
    }
    let min = full.iter().copied().fold(f64::INFINITY, f64::min);
    let max = full.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let scale = if max > min { 255.0 / (max - min) } else { 0.0 };
    let mut bytes = Vec::with_capacity(nx * ny);
    for j in (0..ny).rev() {
        for i in 0..nx {
            bytes.push(((full[j * nx + i] - min) * scale).round().clamp(0.0, 255.0) as u8);
        }
    }
    write_pgm(w, nx, ny, &bytes)
}

pub fn render_vector_to(v: &SupportVector, grid: &Grid, path: &Path) -> io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    render_vector(v, grid, &mut w)?;
    w.flush()
}

/// Run metadata needed to read back stored vectors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunInfo {
    pub grid: Grid,
    pub p: f64,
    pub times: Vec<i64>,
    pub modes: usize,
}

/// Tracked left and right vectors of one window and slot.
#[derive(Clone, Debug, PartialEq)]
pub struct StoredModes {
    pub left: SupportVector,
    pub right: SupportVector,
}

fn put_u64(w: &mut impl Write, x: u64) -> io::Result<()> {
    w.write_all(&x.to_le_bytes())
}

fn get_u64(r: &mut impl Read) -> io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn put_vector(w: &mut impl Write, v: &SupportVector) -> io::Result<()> {
    put_u64(w, v.bins.len() as u64)?;
    for &b in &v.bins {
        put_u64(w, b as u64)?;
    }
    for &x in &v.values {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

fn get_vector(r: &mut impl Read) -> io::Result<SupportVector> {
    let len = get_u64(r)? as usize;
    let bins = (0..len).map(|_| get_u64(r).map(|b| b as usize)).collect::<io::Result<Vec<_>>>()?;
    let values = (0..len)
        .map(|_| get_u64(r).map(f64::from_bits))
        .collect::<io::Result<Vec<_>>>()?;
    Ok(SupportVector { bins, values })
}

/// Stores every tracked vector: a magic line, then per window and slot the
/// left and right vectors as `len, bins[len], values[len]`, all
/// little-endian 64-bit.
pub fn write_vectors(path: &Path, paths: &TrackedPaths) -> io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(VECTOR_MAGIC)?;
    put_u64(&mut w, paths.len() as u64)?;
    put_u64(&mut w, paths.modes() as u64)?;
    for (left, right) in paths.left.iter().zip(&paths.right) {
        for (l, r) in left.iter().zip(right) {
            put_vector(&mut w, l)?;
            put_vector(&mut w, r)?;
        }
    }
    w.flush()
}

/// Reads the vectors of window index `window` and slot `slot`.
pub fn read_vectors(path: &Path, window: usize, slot: usize) -> io::Result<StoredModes> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != VECTOR_MAGIC {
        return Err(io::Error::new(io::ErrorKind::InvalidData, "not a vector store"));
    }
    let windows = get_u64(&mut r)? as usize;
    let modes = get_u64(&mut r)? as usize;
    if window >= windows || slot >= modes {
        return Err(io::Error::new(
            io::ErrorKind::NotFound,
            format!("no vectors for window {window}, slot {slot}"),
        ));
    }
    for _ in 0..window * modes + slot {
        get_vector(&mut r)?;
        get_vector(&mut r)?;
    }
    Ok(StoredModes {
        left: get_vector(&mut r)?,
        right: get_vector(&mut r)?,
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> io::Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(io::Error::other)?;
    text.push('\n');
    fs::write(path, text)
}
