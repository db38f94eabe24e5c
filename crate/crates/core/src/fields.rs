//! Velocity fields: the forced double-well model and gridded datasets.

use std::f64::consts::PI;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Domain, GeometryError, Vec2};

#[derive(Debug, Error)]
pub enum FieldError {
    #[error("missing or unreadable manifest {path}: {source}")]
    Manifest { path: PathBuf, source: io::Error },
    #[error("malformed manifest: {0}")]
    ManifestFormat(#[from] serde_json::Error),
    #[error("invalid dataset: {0}")]
    Invalid(String),
    #[error("slice {file} has {actual} bytes, expected {expected}")]
    SliceSize {
        file: String,
        expected: usize,
        actual: usize,
    },
    #[error("sample times are not strictly increasing at index {0}")]
    NonMonotoneTimes(usize),
    #[error("non-finite velocity in slice {slice} at value index {index}")]
    NonFinite { slice: usize, index: usize },
    #[error("time {t} outside the sampled range [{first}, {last}]")]
    TimeOutOfRange { t: f64, first: f64, last: f64 },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

/// A time-dependent planar velocity field.
pub trait VelocityField: Sync {
    fn velocity(&self, p: Vec2, t: f64) -> Vec2;

    /// Closed interval of valid times, or `None` when defined for all t.
    fn time_range(&self) -> Option<(f64, f64)> {
        None
    }
}

/// Forcing amplitude of the double well; periodic with period 100.
pub fn forcing_a(t: f64) -> f64 {
    let s = t.rem_euclid(100.0);
    if s <= 10.0 {
        1.0
    } else if s <= 40.0 {
        ((s - 10.0) * PI / 60.0).cos().powi(2)
    } else if s <= 60.0 {
        0.0
    } else if s <= 90.0 {
        ((s - 30.0) * PI / 60.0).cos().powi(2)
    } else {
        1.0
    }
}

/// Velocity of the periodically forced double well at `p`.
pub fn dwp_velocity(p: Vec2, t: f64) -> Vec2 {
    let a = forcing_a(t);
    let half = 0.5 * p.x;
    Vec2::new(p.y, p.x * (half + a) * (a - half))
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct AnalyticDoubleWell;

impl VelocityField for AnalyticDoubleWell {
    fn velocity(&self, p: Vec2, t: f64) -> Vec2 {
        dwp_velocity(p, t)
    }
}

/// Node-sampled velocity snapshots with bilinear-in-space, linear-in-time
/// interpolation.
///
/// Non-periodic axes carry `n` nodes spanning both domain edges; periodic axes
/// carry `n` nodes on `[min, max)`.
#[derive(Clone, Debug, PartialEq)]
pub struct GriddedField {
    domain: Domain,
    nx: usize,
    ny: usize,
    times: Vec<f64>,
    u: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl GriddedField {
    pub fn new(
        domain: Domain,
        nx: usize,
        ny: usize,
        times: Vec<f64>,
        u: Vec<Vec<f64>>,
        v: Vec<Vec<f64>>,
    ) -> Result<Self, FieldError> {
        let domain = domain.validated()?;
        if nx < 2 || ny < 2 {
            return Err(FieldError::Invalid(format!(
                "need at least 2 samples per axis, got {nx}x{ny}"
            )));
        }
        if times.is_empty() {
            return Err(FieldError::Invalid("no sample times".into()));
        }
        if u.len() != times.len() || v.len() != times.len() {
            return Err(FieldError::Invalid(format!(
                "{} times but {} u-slices and {} v-slices",
                times.len(),
                u.len(),
                v.len()
            )));
        }
        for (k, w) in times.windows(2).enumerate() {
            if !(w[1] > w[0]) {
                return Err(FieldError::NonMonotoneTimes(k + 1));
            }
        }
        if let Some(k) = times.iter().position(|t| !t.is_finite()) {
            return Err(FieldError::Invalid(format!("non-finite time at index {k}")));
        }
        let len = nx * ny;
        for (slice, (us, vs)) in u.iter().zip(&v).enumerate() {
            if us.len() != len || vs.len() != len {
                return Err(FieldError::Invalid(format!(
                    "slice {slice} has {}+{} values, expected {len}+{len}",
                    us.len(),
                    vs.len()
                )));
            }
            let bad = us.iter().chain(vs).position(|x| !x.is_finite());
            if let Some(index) = bad {
                return Err(FieldError::NonFinite { slice, index });
            }
        }
        Ok(Self {
            domain,
            nx,
            ny,
            times,
            u,
            v,
        })
    }

    /// Samples `f` on the node lattice at each time.
    pub fn from_fn(
        domain: Domain,
        nx: usize,
        ny: usize,
        times: Vec<f64>,
        f: impl Fn(Vec2, f64) -> Vec2,
    ) -> Result<Self, FieldError> {
        let domain = domain.validated()?;
        let mut u = Vec::with_capacity(times.len());
        let mut v = Vec::with_capacity(times.len());
        for &t in &times {
            let mut us = Vec::with_capacity(nx * ny);
            let mut vs = Vec::with_capacity(nx * ny);
            for j in 0..ny {
                for i in 0..nx {
                    let w = f(node_position(&domain, nx, ny, i, j), t);
                    us.push(w.x);
                    vs.push(w.y);
                }
            }
            u.push(us);
            v.push(vs);
        }
        Self::new(domain, nx, ny, times, u, v)
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn node(&self, i: usize, j: usize) -> Vec2 {
        node_position(&self.domain, self.nx, self.ny, i, j)
    }

    pub fn slice(&self, k: usize) -> (&[f64], &[f64]) {
        (&self.u[k], &self.v[k])
    }

    /// Interpolated velocity; errors when `t` lies outside the sampled times.
    pub fn sample(&self, p: Vec2, t: f64) -> Result<Vec2, FieldError> {
        let first = self.times[0];
        let last = *self.times.last().unwrap();
        let slack = 1e-9 * (1.0 + first.abs().max(last.abs()));
        if self.times.len() > 1 && (t < first - slack || t > last + slack) {
            return Err(FieldError::TimeOutOfRange { t, first, last });
        }
        Ok(self.sample_clamped(p, t))
    }

    fn sample_clamped(&self, p: Vec2, t: f64) -> Vec2 {
        let (ix0, ix1, fx) = axis_stencil(
            p.x,
            self.domain.x_min,
            self.domain.width(),
            self.nx,
            self.domain.periodic_x,
        );
        let (iy0, iy1, fy) = axis_stencil(
            p.y,
            self.domain.y_min,
            self.domain.height(),
            self.ny,
            self.domain.periodic_y,
        );
        let spatial = |k: usize| {
            let at = |data: &[f64]| {
                let c00 = data[iy0 * self.nx + ix0];
                let c10 = data[iy0 * self.nx + ix1];
                let c01 = data[iy1 * self.nx + ix0];
                let c11 = data[iy1 * self.nx + ix1];
                let lo = lerp(c00, c10, fx);
                let hi = lerp(c01, c11, fx);
                lerp(lo, hi, fy)
            };
            Vec2::new(at(&self.u[k]), at(&self.v[k]))
        };

        if self.times.len() == 1 {
            return spatial(0);
        }
        let last = self.times.len() - 1;
        if t <= self.times[0] {
            return spatial(0);
        }
        if t >= self.times[last] {
            return spatial(last);
        }
        let k1 = self.times.partition_point(|&s| s <= t);
        let k0 = k1 - 1;
        let ft = (t - self.times[k0]) / (self.times[k1] - self.times[k0]);
        if ft == 0.0 {
            return spatial(k0);
        }
        let a = spatial(k0);
        let b = spatial(k1);
        Vec2::new(lerp(a.x, b.x, ft), lerp(a.y, b.y, ft))
    }
}

impl VelocityField for GriddedField {
    fn velocity(&self, p: Vec2, t: f64) -> Vec2 {
        self.sample_clamped(p, t)
    }

    fn time_range(&self) -> Option<(f64, f64)> {
        if self.times.len() == 1 {
            None
        } else {
            Some((self.times[0], *self.times.last().unwrap()))
        }
    }
}

fn lerp(a: f64, b: f64, f: f64) -> f64 {
    (1.0 - f) * a + f * b
}

fn node_spacing(len: f64, n: usize, periodic: bool) -> f64 {
    if periodic {
        len / n as f64
    } else {
        len / (n - 1) as f64
    }
}

fn node_position(domain: &Domain, nx: usize, ny: usize, i: usize, j: usize) -> Vec2 {
    let dx = node_spacing(domain.width(), nx, domain.periodic_x);
    let dy = node_spacing(domain.height(), ny, domain.periodic_y);
    Vec2::new(domain.x_min + i as f64 * dx, domain.y_min + j as f64 * dy)
}

/// Lower node, upper node and fractional offset along one axis.
fn axis_stencil(x: f64, min: f64, len: f64, n: usize, periodic: bool) -> (usize, usize, f64) {
    let h = node_spacing(len, n, periodic);
    let mut s = (x - min) / h;
    let r = s.round();
    if (s - r).abs() < 1e-10 {
        s = r;
    }
    if periodic {
        let s = s.rem_euclid(n as f64);
        let i0 = (s.floor() as usize).min(n - 1);
        let f = s - i0 as f64;
        (i0, (i0 + 1) % n, f)
    } else {
        let s = s.clamp(0.0, (n - 1) as f64);
        let i0 = (s.floor() as usize).min(n - 2);
        (i0, i0 + 1, s - i0 as f64)
    }
}

/// On-disk `manifest.json` of a gridded dataset directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub nx: usize,
    pub ny: usize,
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub periodic_x: bool,
    pub periodic_y: bool,
    pub times: Vec<f64>,
    pub slice_files: Vec<String>,
}

/// Loads and validates a dataset directory (manifest plus raw f64 LE slices).
pub fn load_gridded_field(dir: impl AsRef<Path>) -> Result<GriddedField, FieldError> {
    let dir = dir.as_ref();
    let manifest_path = dir.join("manifest.json");
    let text = fs::read_to_string(&manifest_path).map_err(|source| FieldError::Manifest {
        path: manifest_path.clone(),
        source,
    })?;
    let m: Manifest = serde_json::from_str(&text)?;
    if m.slice_files.len() != m.times.len() {
        return Err(FieldError::Invalid(format!(
            "{} times but {} slice files",
            m.times.len(),
            m.slice_files.len()
        )));
    }
    for (k, w) in m.times.windows(2).enumerate() {
        if !(w[1] > w[0]) {
            return Err(FieldError::NonMonotoneTimes(k + 1));
        }
    }
    let domain = Domain {
        x_min: m.x_min,
        x_max: m.x_max,
        y_min: m.y_min,
        y_max: m.y_max,
        periodic_x: m.periodic_x,
        periodic_y: m.periodic_y,
    };
    let len = m.nx * m.ny;
    let expected = 2 * len * 8;
    let mut u = Vec::with_capacity(m.times.len());
    let mut v = Vec::with_capacity(m.times.len());
    for name in &m.slice_files {
        let path = dir.join(name);
        let bytes = fs::read(&path).map_err(|source| FieldError::Io {
            path: path.clone(),
            source,
        })?;
        if bytes.len() != expected {
            return Err(FieldError::SliceSize {
                file: name.clone(),
                expected,
                actual: bytes.len(),
            });
        }
        let values: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let (us, vs) = values.split_at(len);
        u.push(us.to_vec());
        v.push(vs.to_vec());
    }
    GriddedField::new(domain, m.nx, m.ny, m.times, u, v)
}

/// Writes a field in the dataset directory format, creating `dir` if needed.
pub fn write_gridded_field(dir: impl AsRef<Path>, field: &GriddedField) -> Result<(), FieldError> {
    let dir = dir.as_ref();
    let io_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| FieldError::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let slice_files: Vec<String> = (0..field.times.len())
        .map(|k| format!("slice_{k:05}.bin"))
        .collect();
    for (k, name) in slice_files.iter().enumerate() {
        let mut bytes = Vec::with_capacity(16 * field.nx * field.ny);
        for x in field.u[k].iter().chain(&field.v[k]) {
            bytes.extend_from_slice(&x.to_le_bytes());
        }
        let path = dir.join(name);
        fs::write(&path, bytes).map_err(io_err(&path))?;
    }
    let d = field.domain;
    let manifest = Manifest {
        nx: field.nx,
        ny: field.ny,
        x_min: d.x_min,
        x_max: d.x_max,
        y_min: d.y_min,
        y_max: d.y_max,
        periodic_x: d.periodic_x,
        periodic_y: d.periodic_y,
        times: field.times.clone(),
        slice_files,
    };
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest)?;
    fs::write(&path, text).map_err(io_err(&path))?;
    Ok(())
}
