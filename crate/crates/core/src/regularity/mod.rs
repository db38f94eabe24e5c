//! Isoperimetric regularity of tracked singular vectors.
//!
//! A vector is interpolated to bin corners, quantised into four classes, and
//! its extreme classes are split into 8-connected components. A lifespan step
//! is regular when some component's isoperimetric ratio `4πA/L²` exceeds the
//! threshold.

mod contours;
mod isoperimetric;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use contours::{histogram, multilevel_contours, otsu_cuts, select_cells, Contours, HISTOGRAM_BINS};
pub use isoperimetric::{component_ratio, isoperimetric_best, polygon_measures, trace_boundary, write_pgm, Mask};

use crate::geometry::Grid;
use crate::lifespans::{runs, Lifespan};
use crate::tracking::TrackedPaths;
use crate::ulam::SupportVector;

/// Threshold commonly used for regular structures.
pub const DEFAULT_ISO_THRESH: f64 = 0.85;

#[derive(Debug, Error, PartialEq)]
pub enum RegularityError {
    #[error("field is constant; no contour levels exist")]
    NoContour,
    #[error("field contains non-finite values")]
    NonFinite,
}

/// Values at bin corners, `x` fastest.
///
/// A non-periodic axis with `n` bins has `n + 1` corners; a periodic one has
/// `n`, corner `0` sitting between bins `n − 1` and `0`.
#[derive(Clone, Debug, PartialEq)]
pub struct CornerField {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

impl CornerField {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.width + i]
    }
}

/// Bins adjacent to corner `c` along one axis of `n` bins.
fn adjacent(c: usize, n: usize, periodic: bool) -> impl Iterator<Item = usize> {
    let below = if periodic { Some((c + n - 1) % n) } else { c.checked_sub(1) };
    let above = if periodic || c < n { Some(c % n) } else { None };
    below.into_iter().chain(above)
}

/// Embeds `v` in the full grid (zero off support) and averages the bins
/// around each corner.
pub fn interpolate_to_corners(v: &SupportVector, grid: &Grid) -> CornerField {
    let (nx, ny) = (grid.nx(), grid.ny());
    let (px, py) = (grid.domain().periodic_x, grid.domain().periodic_y);
    let mut full = vec![0.0; grid.num_bins()];
    for (&b, &x) in v.bins.iter().zip(&v.values) {
        full[b] = x;
    }
    let width = if px { nx } else { nx + 1 };
    let height = if py { ny } else { ny + 1 };
    let mut values = Vec::with_capacity(width * height);
    for cj in 0..height {
        for ci in 0..width {
            let mut sum = 0.0;
            let mut count = 0usize;
            for j in adjacent(cj, ny, py) {
                for i in adjacent(ci, nx, px) {
                    sum += full[grid.bin_id(i, j)];
                    count += 1;
                }
            }
            values.push(sum / count as f64);
        }
    }
    CornerField { width, height, values }
}

/// Outcome of the regularity test for one vector.
#[derive(Clone, Debug, PartialEq)]
pub struct RegularityCheck {
    pub i_max: f64,
    pub components: usize,
    pub mask: Mask,
}

/// Corner interpolation, contouring, cell selection and component scoring.
/// A constant field yields an empty mask.
pub fn assess_vector(v: &SupportVector, grid: &Grid) -> RegularityCheck {
    let corners = interpolate_to_corners(v, grid);
    let mask = match multilevel_contours(&corners.values) {
        Ok(c) => Mask::new(corners.width, corners.height, select_cells(&corners.values, &c)),
        Err(_) => Mask::empty(corners.width, corners.height),
    };
    let (i_max, components) = isoperimetric_best(&mask);
    RegularityCheck { i_max, components, mask }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRegularity {
    /// Numbered from 1.
    pub mode: usize,
    pub t: i64,
    pub exists: bool,
    pub i_max: f64,
    pub components: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegularSpan {
    /// Numbered from 1.
    pub mode: usize,
    pub birth: i64,
    pub death: i64,
    pub age: usize,
    /// The lifespan this run was cut from.
    pub parent_birth: i64,
    pub parent_death: i64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegularityReport {
    pub iso_thresh: f64,
    pub steps: Vec<StepRegularity>,
    pub spans: Vec<RegularSpan>,
}

/// Tests every step of every lifespan and keeps the runs that pass.
///
/// `lifespans` is indexed by slot as returned by lifespan detection.
pub fn regularize_lifespans(
    lifespans: &[Vec<Lifespan>],
    paths: &TrackedPaths,
    grid: &Grid,
    iso_thresh: f64,
) -> RegularityReport {
    use rayon::prelude::*;
    let t0 = paths.times.first().copied().unwrap_or(0);
    let mut steps = Vec::new();
    let mut spans = Vec::new();
    for l in lifespans.iter().flatten() {
        let checks: Vec<StepRegularity> = (l.birth..=l.death)
            .into_par_iter()
            .map(|t| {
                let check = assess_vector(&paths.right[(t - t0) as usize][l.mode], grid);
                StepRegularity {
                    mode: l.mode + 1,
                    t,
                    exists: check.i_max > iso_thresh,
                    i_max: check.i_max,
                    components: check.components,
                }
            })
            .collect();
        let flags: Vec<bool> = checks.iter().map(|c| c.exists).collect();
        for (a, b) in runs(&flags) {
            spans.push(RegularSpan {
                mode: l.mode + 1,
                birth: l.birth + a as i64,
                death: l.birth + b as i64,
                age: b - a + 1,
                parent_birth: l.birth,
                parent_death: l.death,
            });
        }
        steps.extend(checks);
    }
    steps.sort_by_key(|s| (s.mode, s.t));
    spans.sort_by_key(|s| (s.mode, s.birth));
    RegularityReport { iso_thresh, steps, spans }
}
