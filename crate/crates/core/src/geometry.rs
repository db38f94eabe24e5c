//! Uniform rectangular partitions of a 2-D configuration space.
//!
//! A [`Grid`] splits a [`Domain`] into `2^depth` equal-area bins, numbered
//! row-major with x varying fastest. Bins are half-open cells, closed at the
//! upper domain edge, so every point of a non-periodic domain belongs to
//! exactly one bin.

use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("degenerate domain: [{x_min}, {x_max}] x [{y_min}, {y_max}]")]
    DegenerateDomain {
        x_min: f64,
        x_max: f64,
        y_min: f64,
        y_max: f64,
    },
    #[error("grid depth must be at least 2, got {0}")]
    InvalidDepth(u32),
    #[error("patch semi-axes must be positive, got ({0}, {1})")]
    InvalidPatch(f64, f64),
    #[error("test-point count {0} is not a positive perfect square")]
    NonSquareSeedCount(usize),
    #[error("bin id {0} out of range")]
    BinOutOfRange(usize),
}

/// A point or velocity in the plane.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<Vec2> for f64 {
    type Output = Vec2;
    fn mul(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self * rhs.x, self * rhs.y)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    #[serde(default)]
    pub periodic_x: bool,
    #[serde(default)]
    pub periodic_y: bool,
}

impl Domain {
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Result<Self, GeometryError> {
        Self {
            x_min,
            x_max,
            y_min,
            y_max,
            periodic_x: false,
            periodic_y: false,
        }
        .validated()
    }

    pub fn periodic(mut self, periodic_x: bool, periodic_y: bool) -> Self {
        self.periodic_x = periodic_x;
        self.periodic_y = periodic_y;
        self
    }

    pub fn validated(self) -> Result<Self, GeometryError> {
        let ok = [self.x_min, self.x_max, self.y_min, self.y_max]
            .iter()
            .all(|v| v.is_finite())
            && self.x_min < self.x_max
            && self.y_min < self.y_max;
        if ok {
            Ok(self)
        } else {
            Err(GeometryError::DegenerateDomain {
                x_min: self.x_min,
                x_max: self.x_max,
                y_min: self.y_min,
                y_max: self.y_max,
            })
        }
    }

    /// The closed square `[-4, 4]^2` used for the double-well model.
    pub fn double_well() -> Self {
        Self {
            x_min: -4.0,
            x_max: 4.0,
            y_min: -4.0,
            y_max: 4.0,
            periodic_x: false,
            periodic_y: false,
        }
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn contains(&self, p: Vec2) -> bool {
        (self.periodic_x || (p.x >= self.x_min && p.x <= self.x_max))
            && (self.periodic_y || (p.y >= self.y_min && p.y <= self.y_max))
    }

    /// Wraps periodic coordinates into `[min, max)`; non-periodic ones pass through.
    pub fn wrap(&self, p: Vec2) -> Vec2 {
        let x = if self.periodic_x {
            wrap_coord(p.x, self.x_min, self.width())
        } else {
            p.x
        };
        let y = if self.periodic_y {
            wrap_coord(p.y, self.y_min, self.height())
        } else {
            p.y
        };
        Vec2::new(x, y)
    }
}

fn wrap_coord(v: f64, min: f64, len: f64) -> f64 {
    let w = min + (v - min).rem_euclid(len);
    // rem_euclid can round up to exactly `len`
    if w >= min + len {
        min
    } else {
        w
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    domain: Domain,
    depth: u32,
    nx: usize,
    ny: usize,
    bin_width: f64,
    bin_height: f64,
}

impl Grid {
    /// Splits the domain into `2^ceil(depth/2)` columns and `2^floor(depth/2)` rows.
    pub fn new(domain: Domain, depth: u32) -> Result<Self, GeometryError> {
        let domain = domain.validated()?;
        if !(2..=40).contains(&depth) {
            return Err(GeometryError::InvalidDepth(depth));
        }
        let nx = 1usize << depth.div_ceil(2);
        let ny = 1usize << (depth / 2);
        Ok(Self {
            bin_width: domain.width() / nx as f64,
            bin_height: domain.height() / ny as f64,
            domain,
            depth,
            nx,
            ny,
        })
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn num_bins(&self) -> usize {
        self.nx * self.ny
    }

    pub fn bin_width(&self) -> f64 {
        self.bin_width
    }

    pub fn bin_height(&self) -> f64 {
        self.bin_height
    }

    pub fn bin_area(&self) -> f64 {
        self.bin_width * self.bin_height
    }

    pub fn bin_id(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    /// Column and row of a bin id.
    pub fn bin_coords(&self, id: usize) -> (usize, usize) {
        (id % self.nx, id / self.nx)
    }

    pub fn centre(&self, id: usize) -> Vec2 {
        let (i, j) = self.bin_coords(id);
        Vec2::new(
            self.domain.x_min + (i as f64 + 0.5) * self.bin_width,
            self.domain.y_min + (j as f64 + 0.5) * self.bin_height,
        )
    }

    /// Lower-left corner of a bin.
    pub fn origin(&self, id: usize) -> Vec2 {
        let (i, j) = self.bin_coords(id);
        Vec2::new(
            self.domain.x_min + i as f64 * self.bin_width,
            self.domain.y_min + j as f64 * self.bin_height,
        )
    }

    /// Bin containing `p`, or `None` when `p` lies outside a non-periodic axis.
    pub fn bin_of(&self, p: Vec2) -> Option<usize> {
        if !p.is_finite() {
            return None;
        }
        let p = self.domain.wrap(p);
        let i = axis_index(p.x, self.domain.x_min, self.domain.x_max, self.bin_width, self.nx)?;
        let j = axis_index(p.y, self.domain.y_min, self.domain.y_max, self.bin_height, self.ny)?;
        Some(self.bin_id(i, j))
    }

    /// Ids of all bins whose centres lie inside the patch, ascending.
    pub fn bins_in_patch(&self, patch: &Patch) -> Vec<usize> {
        // Restrict the scan to the patch's bounding box.
        let (a, b) = patch.semi_axes();
        let lo_i = ((patch.centre.x - a - self.domain.x_min) / self.bin_width).floor().max(0.0) as usize;
        let hi_i = (((patch.centre.x + a - self.domain.x_min) / self.bin_width).ceil().max(0.0) as usize)
            .min(self.nx);
        let lo_j = ((patch.centre.y - b - self.domain.y_min) / self.bin_height).floor().max(0.0) as usize;
        let hi_j = (((patch.centre.y + b - self.domain.y_min) / self.bin_height).ceil().max(0.0) as usize)
            .min(self.ny);
        let mut out = Vec::new();
        for j in lo_j..hi_j {
            for i in lo_i..hi_i {
                let id = self.bin_id(i, j);
                if patch.contains(self.centre(id)) {
                    out.push(id);
                }
            }
        }
        out
    }

    /// A centred `sqrt(q) x sqrt(q)` lattice of test points inside a bin, x fastest.
    pub fn seed_points(&self, id: usize, q: usize) -> Result<Vec<Vec2>, GeometryError> {
        if id >= self.num_bins() {
            return Err(GeometryError::BinOutOfRange(id));
        }
        let side = lattice_side(q)?;
        let origin = self.origin(id);
        let mut pts = Vec::with_capacity(q);
        for ky in 0..side {
            let y = origin.y + (ky as f64 + 0.5) / side as f64 * self.bin_height;
            for kx in 0..side {
                let x = origin.x + (kx as f64 + 0.5) / side as f64 * self.bin_width;
                pts.push(Vec2::new(x, y));
            }
        }
        Ok(pts)
    }
}

/// Side length of the seeding lattice for `q` points.
pub fn lattice_side(q: usize) -> Result<usize, GeometryError> {
    let side = (q as f64).sqrt().round() as usize;
    if q == 0 || side * side != q {
        return Err(GeometryError::NonSquareSeedCount(q));
    }
    Ok(side)
}

fn axis_index(v: f64, min: f64, max: f64, width: f64, count: usize) -> Option<usize> {
    if v < min || v > max {
        return None;
    }
    let k = ((v - min) / width).floor() as usize;
    Some(k.min(count - 1))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PatchShape {
    Circle,
    Ellipse,
}

/// The initially seeded region: an axis-aligned ellipse (or circle).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Patch {
    pub shape: PatchShape,
    pub centre: Vec2,
    pub semi_axes: (f64, f64),
}

impl Patch {
    pub fn circle(centre: Vec2, radius: f64) -> Result<Self, GeometryError> {
        Self {
            shape: PatchShape::Circle,
            centre,
            semi_axes: (radius, radius),
        }
        .validated()
    }

    pub fn ellipse(centre: Vec2, a: f64, b: f64) -> Result<Self, GeometryError> {
        Self {
            shape: PatchShape::Ellipse,
            centre,
            semi_axes: (a, b),
        }
        .validated()
    }

    pub fn validated(self) -> Result<Self, GeometryError> {
        let (a, b) = self.semi_axes;
        let ok = a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite();
        let circle_ok = self.shape != PatchShape::Circle || a == b;
        if ok && circle_ok {
            Ok(self)
        } else {
            Err(GeometryError::InvalidPatch(a, b))
        }
    }

    pub fn semi_axes(&self) -> (f64, f64) {
        self.semi_axes
    }

    pub fn contains(&self, p: Vec2) -> bool {
        let (a, b) = self.semi_axes;
        let dx = (p.x - self.centre.x) / a;
        let dy = (p.y - self.centre.y) / b;
        dx * dx + dy * dy <= 1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit() -> Domain {
        Domain::new(0.0, 1.0, 0.0, 1.0).unwrap()
    }

    #[test]
    fn grid_shapes() {
        let g = Grid::new(Domain::double_well(), 12).unwrap();
        assert_eq!((g.nx(), g.ny()), (64, 64));
        assert_eq!(g.bin_width(), 0.125);

        let tau = 2.0 * std::f64::consts::PI;
        let g = Grid::new(Domain::new(0.0, tau, 0.0, tau).unwrap(), 14).unwrap();
        assert_eq!((g.nx(), g.ny()), (128, 128));

        let g = Grid::new(unit(), 3).unwrap();
        assert_eq!((g.nx(), g.ny()), (4, 2));
        assert_eq!(g.num_bins(), 8);
    }

    #[test]
    fn small_grid_centres() {
        let g = Grid::new(unit(), 2).unwrap();
        assert_eq!(g.centre(0), Vec2::new(0.25, 0.25));
        assert_eq!(g.centre(1), Vec2::new(0.75, 0.25));
        assert_eq!(g.centre(2), Vec2::new(0.25, 0.75));
        assert_eq!(g.centre(3), Vec2::new(0.75, 0.75));
    }

    #[test]
    fn rejects_bad_inputs() {
        assert_eq!(Grid::new(unit(), 1).unwrap_err(), GeometryError::InvalidDepth(1));
        assert_eq!(Grid::new(unit(), 0).unwrap_err(), GeometryError::InvalidDepth(0));
        assert!(Domain::new(1.0, 1.0, 0.0, 1.0).is_err());
        assert!(Domain::new(0.0, 1.0, 2.0, 1.0).is_err());
        assert!(Patch::circle(Vec2::default(), 0.0).is_err());
        assert!(Patch::ellipse(Vec2::default(), 1.0, -1.0).is_err());
    }

    #[test]
    fn bin_lookup() {
        let g = Grid::new(unit(), 2).unwrap();
        assert_eq!(g.bin_of(Vec2::new(0.1, 0.1)), Some(0));
        assert_eq!(g.bin_of(Vec2::new(1.5, 0.5)), None);
        assert_eq!(g.bin_of(Vec2::new(0.5, 0.5)), Some(3));
        assert_eq!(g.bin_of(Vec2::new(1.0, 1.0)), Some(3));
        assert_eq!(g.bin_of(Vec2::new(0.0, 0.0)), Some(0));
        assert_eq!(g.bin_of(Vec2::new(f64::NAN, 0.0)), None);

        let tau = 2.0 * std::f64::consts::PI;
        let p = Grid::new(Domain::new(0.0, tau, 0.0, tau).unwrap().periodic(true, true), 6).unwrap();
        assert_eq!(p.bin_of(Vec2::new(tau + 0.1, 0.1)), p.bin_of(Vec2::new(0.1, 0.1)));
        assert_eq!(p.bin_of(Vec2::new(-0.1, -0.1)), p.bin_of(Vec2::new(tau - 0.1, tau - 0.1)));
        assert!(p.bin_of(Vec2::new(tau, 0.0)).is_some());
    }

    #[test]
    fn patch_bins_brute_force() {
        let g = Grid::new(Domain::double_well(), 12).unwrap();
        let patch = Patch::circle(Vec2::new(-2.0, 0.0), 1.0).unwrap();
        let bins = g.bins_in_patch(&patch);
        let brute: Vec<usize> = (0..g.num_bins())
            .filter(|&id| {
                let c = g.centre(id);
                (c.x + 2.0).powi(2) + c.y.powi(2) <= 1.0
            })
            .collect();
        assert_eq!(bins, brute);
        for &id in &bins {
            assert!((g.centre(id) - Vec2::new(-2.0, 0.0)).norm() <= 1.0);
        }
    }

    #[test]
    fn tiny_patch_single_bin() {
        let g = Grid::new(Domain::double_well(), 12).unwrap();
        let c = g.centre(1234);
        let patch = Patch::circle(c, 0.05).unwrap();
        assert_eq!(g.bins_in_patch(&patch), vec![1234]);
    }

    #[test]
    fn seed_lattices() {
        let g = Grid::new(Domain::new(0.0, 2.0, 0.0, 2.0).unwrap(), 2).unwrap();
        let pts = g.seed_points(0, 4).unwrap();
        assert_eq!(
            pts,
            vec![
                Vec2::new(0.25, 0.25),
                Vec2::new(0.75, 0.25),
                Vec2::new(0.25, 0.75),
                Vec2::new(0.75, 0.75)
            ]
        );
        assert_eq!(g.seed_points(3, 1).unwrap(), vec![g.centre(3)]);
        assert_eq!(g.seed_points(0, 100).unwrap().len(), 100);
        assert_eq!(g.seed_points(0, 10).unwrap_err(), GeometryError::NonSquareSeedCount(10));
        assert_eq!(g.seed_points(0, 0).unwrap_err(), GeometryError::NonSquareSeedCount(0));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn interior_points_hit_their_bin(x in -3.999f64..3.999, y in -3.999f64..3.999, depth in 2u32..13) {
                let g = Grid::new(Domain::double_well(), depth).unwrap();
                let id = g.bin_of(Vec2::new(x, y)).unwrap();
                let o = g.origin(id);
                prop_assert!(x >= o.x && x <= o.x + g.bin_width());
                prop_assert!(y >= o.y && y <= o.y + g.bin_height());
                let total = g.bin_area() * g.num_bins() as f64;
                prop_assert!((total - g.domain().area()).abs() <= 1e-12 * g.domain().area());
            }

            #[test]
            fn patch_matches_filter(cx in -3.0f64..3.0, cy in -3.0f64..3.0, a in 0.05f64..1.5, b in 0.05f64..1.5) {
                let g = Grid::new(Domain::double_well(), 10).unwrap();
                let patch = Patch::ellipse(Vec2::new(cx, cy), a, b).unwrap();
                let brute: Vec<usize> = (0..g.num_bins()).filter(|&id| patch.contains(g.centre(id))).collect();
                prop_assert_eq!(g.bins_in_patch(&patch), brute);
            }

            #[test]
            fn seeds_strictly_inside(id in 0usize..4096, side in 1usize..12) {
                let g = Grid::new(Domain::double_well(), 12).unwrap();
                let pts = g.seed_points(id, side * side).unwrap();
                prop_assert_eq!(&pts, &g.seed_points(id, side * side).unwrap());
                let o = g.origin(id);
                for p in pts {
                    prop_assert!(p.x > o.x && p.x < o.x + g.bin_width());
                    prop_assert!(p.y > o.y && p.y < o.y + g.bin_height());
                    prop_assert_eq!(g.bin_of(p), Some(id));
                }
            }
        }
    }
}
