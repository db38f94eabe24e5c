use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use rayon::prelude::*;

use super::matrix::{compose, SupportVector, TransitionMatrix};
use super::svd::{truncated_svd_with, SvdMethod, SvdTriples};
use super::UlamError;
use crate::fields::VelocityField;
use crate::flow::{check_interval, integrate, FlowSpec};
use crate::geometry::{lattice_side, Grid, Patch, Vec2};

/// Destination bins of one bin's seeding lattice and how many points hit each.
type BinImage = Arc<[(usize, u32)]>;

/// Step matrices and their composition for one rolling window.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowOperators {
    pub t: i64,
    pub steps: Vec<TransitionMatrix>,
    pub composed: TransitionMatrix,
}

/// A window's operators together with the leading singular triples of the
/// composed matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct ModeWindow {
    pub t: i64,
    pub steps: Vec<TransitionMatrix>,
    pub composed: TransitionMatrix,
    pub svd: SvdTriples,
}

impl ModeWindow {
    pub fn new(ops: WindowOperators, modes: usize) -> Result<Self, UlamError> {
        Self::with_method(ops, modes, SvdMethod::Auto)
    }

    pub fn with_method(ops: WindowOperators, modes: usize, method: SvdMethod) -> Result<Self, UlamError> {
        let svd = truncated_svd_with(&ops.composed, modes, method)?;
        Ok(Self {
            t: ops.t,
            steps: ops.steps,
            composed: ops.composed,
            svd,
        })
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn modes(&self) -> usize {
        self.svd.len()
    }

    pub fn last_step(&self) -> &TransitionMatrix {
        self.steps.last().expect("window has at least one step")
    }

    /// Right singular vector `k` over the composed matrix's column bins.
    pub fn right_vector(&self, k: usize) -> SupportVector {
        SupportVector::new(self.composed.col_bins().to_vec(), self.svd.v[k].clone())
    }

    /// Left singular vector `k` over the composed matrix's row bins.
    pub fn left_vector(&self, k: usize) -> SupportVector {
        SupportVector::new(self.composed.row_bins().to_vec(), self.svd.u[k].clone())
    }
}

/// The parts of a window that mode tracking needs: the spectrum of the
/// composed matrix and the final step matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowModes {
    pub t: i64,
    pub row_bins: Vec<usize>,
    pub col_bins: Vec<usize>,
    pub last_step: TransitionMatrix,
    pub svd: SvdTriples,
}

impl WindowModes {
    pub fn modes(&self) -> usize {
        self.svd.len()
    }

    pub fn right_vector(&self, k: usize) -> SupportVector {
        SupportVector::new(self.col_bins.clone(), self.svd.v[k].clone())
    }

    pub fn left_vector(&self, k: usize) -> SupportVector {
        SupportVector::new(self.row_bins.clone(), self.svd.u[k].clone())
    }
}

impl From<ModeWindow> for WindowModes {
    fn from(w: ModeWindow) -> Self {
        let row_bins = w.composed.row_bins().to_vec();
        let col_bins = w.composed.col_bins().to_vec();
        let last_step = w.steps.into_iter().last().expect("window has at least one step");
        Self {
            t: w.t,
            row_bins,
            col_bins,
            last_step,
            svd: w.svd,
        }
    }
}

/// Builds windows for one field, grid and seeding density.
///
/// The image of a bin's lattice over the step starting at analysis time `k`
/// does not depend on the window, so images are memoised by `(k, bin)` and
/// shared by overlapping windows.
pub struct UlamBuilder<'a, F: VelocityField + ?Sized> {
    field: &'a F,
    grid: &'a Grid,
    seeds_per_bin: usize,
    offsets: Vec<Vec2>,
    spec: FlowSpec,
    cache: Mutex<HashMap<(i64, usize), BinImage>>,
}

impl<'a, F: VelocityField + ?Sized> UlamBuilder<'a, F> {
    pub fn new(field: &'a F, grid: &'a Grid, seeds_per_bin: usize, spec: FlowSpec) -> Result<Self, UlamError> {
        let spec = spec.validated()?;
        lattice_side(seeds_per_bin)?;
        let origin = grid.origin(0);
        let offsets = grid
            .seed_points(0, seeds_per_bin)?
            .into_iter()
            .map(|p| p - origin)
            .collect();
        Ok(Self {
            field,
            grid,
            seeds_per_bin,
            offsets,
            spec,
            cache: Mutex::new(HashMap::new()),
        })
    }

    pub fn grid(&self) -> &Grid {
        self.grid
    }

    pub fn spec(&self) -> &FlowSpec {
        &self.spec
    }

    fn start_time(&self, k: i64) -> f64 {
        k as f64 * self.spec.tau
    }

    fn compute_image(&self, k: i64, bin: usize) -> Result<BinImage, UlamError> {
        let t0 = self.start_time(k);
        let origin = self.grid.origin(bin);
        let domain = self.grid.domain();
        let mut hits: Vec<usize> = Vec::with_capacity(self.seeds_per_bin);
        for off in &self.offsets {
            let end = integrate(self.field, domain, origin + *off, t0, &self.spec)?;
            if let Some(dest) = self.grid.bin_of(end) {
                hits.push(dest);
            }
        }
        hits.sort_unstable();
        let mut image: Vec<(usize, u32)> = Vec::new();
        for dest in hits {
            match image.last_mut() {
                Some((b, c)) if *b == dest => *c += 1,
                _ => image.push((dest, 1)),
            }
        }
        Ok(image.into())
    }

    /// The conditional Ulam matrix over the step starting at analysis time
    /// `k`, with rows `rows` and columns the ascending set of bins hit.
    pub fn step_matrix(&self, k: i64, rows: &[usize]) -> Result<TransitionMatrix, UlamError> {
        check_interval(self.field, self.start_time(k), &self.spec)?;
        let missing: Vec<usize> = {
            let cache = self.cache.lock().unwrap();
            rows.iter().copied().filter(|b| !cache.contains_key(&(k, *b))).collect()
        };
        let computed: Vec<(usize, BinImage)> = missing
            .par_iter()
            .map(|&b| self.compute_image(k, b).map(|img| (b, img)))
            .collect::<Result<_, _>>()?;
        let images: Vec<BinImage> = {
            let mut cache = self.cache.lock().unwrap();
            for (b, img) in computed {
                cache.insert((k, b), img);
            }
            rows.iter().map(|b| cache[&(k, *b)].clone()).collect()
        };

        let mut cols: Vec<usize> = images.iter().flat_map(|img| img.iter().map(|&(b, _)| b)).collect();
        cols.sort_unstable();
        cols.dedup();
        let q = self.seeds_per_bin as f64;
        let entries = images
            .iter()
            .map(|img| {
                img.iter()
                    .map(|&(b, c)| (cols.binary_search(&b).unwrap(), c as f64 / q))
                    .collect()
            })
            .collect();
        TransitionMatrix::from_rows(rows.to_vec(), cols, entries)
    }

    /// Step matrices and their product for the window starting at `t`.
    pub fn window(&self, seed_bins: &[usize], t: i64, n: usize) -> Result<WindowOperators, UlamError> {
        if seed_bins.is_empty() {
            return Err(UlamError::EmptyPatch);
        }
        if n == 0 {
            return Err(UlamError::EmptyWindow);
        }
        let mut steps = Vec::with_capacity(n);
        let mut rows = seed_bins.to_vec();
        for step in 1..=n {
            let m = self.step_matrix(t + step as i64 - 1, &rows)?;
            if m.ncols() == 0 {
                return Err(UlamError::TotalEscape { t, step });
            }
            rows = m.col_bins().to_vec();
            steps.push(m);
        }
        let composed = compose(&steps)?;
        Ok(WindowOperators { t, steps, composed })
    }

    /// Builds the window starting at `t` and keeps its leading `modes` triples.
    pub fn mode_window(
        &self,
        seed_bins: &[usize],
        t: i64,
        n: usize,
        modes: usize,
        method: SvdMethod,
    ) -> Result<WindowModes, UlamError> {
        let ops = self.window(seed_bins, t, n)?;
        Ok(ModeWindow::with_method(ops, modes, method)?.into())
    }

    /// Drops memoised images for steps starting before `k`.
    pub fn evict_before(&self, k: i64) {
        self.cache.lock().unwrap().retain(|(s, _), _| *s >= k);
    }

    pub fn cached_images(&self) -> usize {
        self.cache.lock().unwrap().len()
    }
}

/// Builds the operators of a single window from scratch.
pub fn build_window<F: VelocityField + ?Sized>(
    field: &F,
    grid: &Grid,
    patch: &Patch,
    t: i64,
    n: usize,
    seeds_per_bin: usize,
    spec: &FlowSpec,
) -> Result<WindowOperators, UlamError> {
    let seeds = grid.bins_in_patch(patch);
    UlamBuilder::new(field, grid, seeds_per_bin, *spec)?.window(&seeds, t, n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::AnalyticDoubleWell;
    use crate::geometry::Domain;
    use std::f64::consts::PI;

    struct Still;
    impl VelocityField for Still {
        fn velocity(&self, _: Vec2, _: f64) -> Vec2 {
            Vec2::default()
        }
    }

    struct Drift(Vec2);
    impl VelocityField for Drift {
        fn velocity(&self, _: Vec2, _: f64) -> Vec2 {
            self.0
        }
    }

    #[test]
    fn zero_field_gives_identity() {
        let grid = Grid::new(Domain::double_well(), 8).unwrap();
        let patch = Patch::circle(Vec2::new(0.3, -0.2), 1.0).unwrap();
        let ops = build_window(&Still, &grid, &patch, 0, 4, 9, &FlowSpec::new(1.0, 5).unwrap()).unwrap();
        let seeds = grid.bins_in_patch(&patch);
        for m in &ops.steps {
            assert_eq!(*m, TransitionMatrix::identity(seeds.clone()));
        }
        assert_eq!(ops.composed, TransitionMatrix::identity(seeds));
        let w = ModeWindow::new(ops, 4).unwrap();
        for s in &w.svd.s {
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn periodic_translation_is_permutation() {
        let tau = 2.0 * PI;
        let domain = Domain::new(0.0, tau, 0.0, tau).unwrap().periodic(true, true);
        let grid = Grid::new(domain, 8).unwrap();
        let field = Drift(Vec2::new(grid.bin_width(), 0.0));
        let patch = Patch::circle(Vec2::new(0.2, 3.0), 0.9).unwrap();
        let ops = build_window(&field, &grid, &patch, 0, 20, 4, &FlowSpec::new(1.0, 3).unwrap()).unwrap();
        for m in &ops.steps {
            for r in 0..m.nrows() {
                let row: Vec<_> = m.row(r).collect();
                assert_eq!(row.len(), 1);
                assert_eq!(row[0].1, 1.0);
                let (i, j) = grid.bin_coords(m.row_bins()[r]);
                assert_eq!(m.col_bins()[row[0].0], grid.bin_id((i + 1) % grid.nx(), j));
            }
        }
        let w = ModeWindow::new(ops, 4).unwrap();
        for s in &w.svd.s {
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn support_chains_and_rows_substochastic() {
        let grid = Grid::new(Domain::double_well(), 10).unwrap();
        let patch = Patch::circle(Vec2::new(-2.0, 0.0), 1.0).unwrap();
        let builder = UlamBuilder::new(&AnalyticDoubleWell, &grid, 16, FlowSpec::double_well()).unwrap();
        let seeds = grid.bins_in_patch(&patch);
        let ops = builder.window(&seeds, 3, 5).unwrap();
        assert_eq!(ops.steps[0].row_bins(), &seeds[..]);
        for pair in ops.steps.windows(2) {
            assert_eq!(pair[0].col_bins(), pair[1].row_bins());
        }
        for m in &ops.steps {
            for s in m.row_sums() {
                assert!((-1e-12..=1.0 + 1e-12).contains(&s));
            }
            // every column is hit
            let mut hit = vec![false; m.ncols()];
            for (_, c, _) in m.triplets() {
                hit[c] = true;
            }
            assert!(hit.iter().all(|&h| h));
        }
    }

    #[test]
    fn memoised_and_fresh_windows_agree() {
        let grid = Grid::new(Domain::double_well(), 10).unwrap();
        let patch = Patch::circle(Vec2::new(0.0, 0.0), 1.0).unwrap();
        let spec = FlowSpec::double_well();
        let builder = UlamBuilder::new(&AnalyticDoubleWell, &grid, 16, spec).unwrap();
        let seeds = grid.bins_in_patch(&patch);
        let _ = builder.window(&seeds, 0, 4).unwrap();
        let shared = builder.window(&seeds, 1, 4).unwrap();
        let fresh = build_window(&AnalyticDoubleWell, &grid, &patch, 1, 4, 16, &spec).unwrap();
        assert_eq!(shared, fresh);
        builder.evict_before(2);
        assert!(builder.cached_images() > 0);
    }

    #[test]
    fn escape_and_empty_patch_errors() {
        let grid = Grid::new(Domain::new(0.0, 1.0, 0.0, 1.0).unwrap(), 4).unwrap();
        let patch = Patch::circle(Vec2::new(0.5, 0.5), 0.3).unwrap();
        let err = build_window(&Drift(Vec2::new(5.0, 0.0)), &grid, &patch, 0, 2, 4, &FlowSpec::new(1.0, 2).unwrap());
        assert!(matches!(err, Err(UlamError::TotalEscape { t: 0, step: 1 })));

        let tiny = Patch::circle(Vec2::new(0.5, 0.5), 0.01).unwrap();
        let err = build_window(&Still, &grid, &tiny, 0, 2, 4, &FlowSpec::new(1.0, 2).unwrap());
        assert!(matches!(err, Err(UlamError::EmptyPatch)));
    }

    #[test]
    fn partial_escape_drops_mass() {
        let grid = Grid::new(Domain::new(0.0, 1.0, 0.0, 1.0).unwrap(), 4).unwrap();
        let patch = Patch::circle(Vec2::new(0.875, 0.5), 0.13).unwrap();
        // a quarter bin width per step to the right
        let field = Drift(Vec2::new(grid.bin_width() / 4.0, 0.0));
        let ops = build_window(&field, &grid, &patch, 0, 1, 16, &FlowSpec::new(1.0, 2).unwrap()).unwrap();
        let sums = ops.steps[0].row_sums();
        assert!(sums.iter().any(|&s| s < 1.0));
        assert!(sums.iter().all(|&s| (0.0..=1.0).contains(&s)));
    }
}
