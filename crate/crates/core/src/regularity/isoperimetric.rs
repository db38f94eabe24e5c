use std::f64::consts::{PI, SQRT_2};
use std::io::{self, Write};

/// A boolean raster, `x` fastest. Pixel `(x, y)` sits at lattice point
/// `(x, y)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

/// Neighbour offsets in cyclic order W, NW, N, NE, E, SE, S, SW.
const RING: [(isize, isize); 8] = [(-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1)];

impl Mask {
    pub fn new(width: usize, height: usize, data: Vec<bool>) -> Self {
        assert_eq!(data.len(), width * height, "mask size mismatch");
        Self { width, height, data }
    }

    pub fn empty(width: usize, height: usize) -> Self {
        Self::new(width, height, vec![false; width * height])
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let data = (0..height).flat_map(|y| (0..width).map(move |x| (x, y))).map(|(x, y)| f(x, y)).collect();
        Self::new(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, x: isize, y: isize) -> bool {
        x >= 0
            && y >= 0
            && (x as usize) < self.width
            && (y as usize) < self.height
            && self.data[y as usize * self.width + x as usize]
    }

    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.data[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }

    /// 8-connected components as pixel lists, each in raster order; components
    /// are ordered by their first pixel.
    pub fn components(&self) -> Vec<Vec<(usize, usize)>> {
        let mut label = vec![usize::MAX; self.data.len()];
        let mut out: Vec<Vec<(usize, usize)>> = Vec::new();
        for start in 0..self.data.len() {
            if !self.data[start] || label[start] != usize::MAX {
                continue;
            }
            let id = out.len();
            let mut pixels = Vec::new();
            let mut stack = vec![start];
            label[start] = id;
            while let Some(k) = stack.pop() {
                let (x, y) = ((k % self.width) as isize, (k / self.width) as isize);
                pixels.push((x as usize, y as usize));
                for (dx, dy) in RING {
                    let (nx, ny) = (x + dx, y + dy);
                    if self.get(nx, ny) {
                        let nk = ny as usize * self.width + nx as usize;
                        if label[nk] == usize::MAX {
                            label[nk] = id;
                            stack.push(nk);
                        }
                    }
                }
            }
            pixels.sort_by_key(|&(x, y)| (y, x));
            out.push(pixels);
        }
        out
    }

    /// Binary portable graymap, set pixels white, top row = largest `y`.
    pub fn write_pgm<W: Write>(&self, w: W) -> io::Result<()> {
        let mut bytes = Vec::with_capacity(self.data.len());
        for y in (0..self.height).rev() {
            for x in 0..self.width {
                bytes.push(if self.data[y * self.width + x] { 255 } else { 0 });
            }
        }
        write_pgm(w, self.width, self.height, &bytes)
    }
}

/// Writes an 8-bit binary PGM from rows listed top to bottom.
pub fn write_pgm<W: Write>(mut w: W, width: usize, height: usize, rows_top_down: &[u8]) -> io::Result<()> {
    assert_eq!(rows_top_down.len(), width * height);
    write!(w, "P5\n{} {}\n255\n", width, height)?;
    w.write_all(rows_top_down)
}

/// Outer boundary of the component containing `start` by Moore-neighbour
/// tracing, stopping once the first move out of `start` repeats.
///
/// `start` must be the component's first pixel in raster order so that its
/// west neighbour is background. Returns the closed vertex cycle without the
/// repeated start.
pub fn trace_boundary(mask: &Mask, start: (usize, usize)) -> Vec<(isize, isize)> {
    let s = (start.0 as isize, start.1 as isize);
    debug_assert!(mask.get(s.0, s.1) && !mask.get(s.0 - 1, s.1));
    let mut path = vec![s];
    let mut p = s;
    // ring index of the backtrack pixel relative to p
    let mut back = 0usize;
    let mut first_move: Option<(isize, isize)> = None;
    let limit = 8 * mask.count() + 16;
    for _ in 0..limit {
        let mut next = None;
        for step in 1..=8 {
            let k = (back + step) % 8;
            let c = (p.0 + RING[k].0, p.1 + RING[k].1);
            if mask.get(c.0, c.1) {
                let b = (back + step - 1) % 8;
                let bpix = (p.0 + RING[b].0, p.1 + RING[b].1);
                next = Some((c, bpix));
                break;
            }
        }
        let Some((c, bpix)) = next else {
            return path;
        };
        if p == s {
            match first_move {
                None => first_move = Some(c),
                Some(f) if f == c => {
                    path.pop();
                    return path;
                }
                _ => {}
            }
        }
        let off = (bpix.0 - c.0, bpix.1 - c.1);
        back = RING.iter().position(|&r| r == off).expect("backtrack is adjacent");
        p = c;
        path.push(p);
    }
    path
}

/// Perimeter and shoelace area of a closed vertex cycle.
pub fn polygon_measures(cycle: &[(isize, isize)]) -> (f64, f64) {
    let n = cycle.len();
    let mut length = 0.0;
    let mut twice_area = 0i64;
    for i in 0..n {
        let (a, b) = (cycle[i], cycle[(i + 1) % n]);
        let diag = a.0 != b.0 && a.1 != b.1;
        length += if diag { SQRT_2 } else { 1.0 };
        twice_area += (a.0 * b.1 - b.0 * a.1) as i64;
    }
    (length, twice_area.unsigned_abs() as f64 / 2.0)
}

/// `4πA/L²` of one component, clamped to `[0, 1]`. A single pixel scores 1
/// and a component enclosing no area scores 0.
pub fn component_ratio(mask: &Mask, pixels: &[(usize, usize)]) -> f64 {
    if pixels.len() == 1 {
        return 1.0;
    }
    let cycle = trace_boundary(mask, pixels[0]);
    let (l, a) = polygon_measures(&cycle);
    if a == 0.0 || l == 0.0 {
        return 0.0;
    }
    (4.0 * PI * a / (l * l)).clamp(0.0, 1.0)
}

/// Largest component ratio (0 for an empty mask) and the component count.
pub fn isoperimetric_best(mask: &Mask) -> (f64, usize) {
    let comps = mask.components();
    let best = comps.iter().map(|c| component_ratio(mask, c)).fold(0.0, f64::max);
    (best, comps.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn block(w: usize, h: usize, pad: usize) -> Mask {
        Mask::from_fn(w + 2 * pad, h + 2 * pad, |x, y| {
            (pad..pad + w).contains(&x) && (pad..pad + h).contains(&y)
        })
    }

    /// Pixels whose centre lies within `r` of the disk centre.
    fn disk(r: f64) -> Mask {
        let n = (2.0 * r) as usize + 6;
        let c = n as f64 / 2.0;
        Mask::from_fn(n, n, |x, y| {
            let (dx, dy) = (x as f64 + 0.5 - c, y as f64 + 0.5 - c);
            dx * dx + dy * dy <= r * r
        })
    }

    /// Boundary pixels (those with a 4-neighbour outside) ordered by angle
    /// about the centroid, with the area from Pick's theorem. Valid for
    /// star-shaped, hole-free components.
    fn star_oracle(mask: &Mask) -> f64 {
        let pts: Vec<(isize, isize)> = (0..mask.height() as isize)
            .flat_map(|y| (0..mask.width() as isize).map(move |x| (x, y)))
            .filter(|&(x, y)| mask.get(x, y))
            .collect();
        let n = pts.len() as f64;
        let cx = pts.iter().map(|p| p.0 as f64).sum::<f64>() / n;
        let cy = pts.iter().map(|p| p.1 as f64).sum::<f64>() / n;
        let mut boundary: Vec<(isize, isize)> = pts
            .iter()
            .copied()
            .filter(|&(x, y)| [(1, 0), (-1, 0), (0, 1), (0, -1)].iter().any(|(dx, dy)| !mask.get(x + dx, y + dy)))
            .collect();
        boundary.sort_by(|a, b| {
            let ta = (a.1 as f64 - cy).atan2(a.0 as f64 - cx);
            let tb = (b.1 as f64 - cy).atan2(b.0 as f64 - cx);
            ta.total_cmp(&tb)
        });
        let m = boundary.len();
        let length: f64 = (0..m)
            .map(|i| {
                let (a, b) = (boundary[i], boundary[(i + 1) % m]);
                (((a.0 - b.0).pow(2) + (a.1 - b.1).pow(2)) as f64).sqrt()
            })
            .sum();
        let area = n - m as f64 / 2.0 - 1.0;
        (4.0 * PI * area / (length * length)).min(1.0)
    }

    #[test]
    fn single_pixel_is_one() {
        let mut m = Mask::empty(5, 5);
        m.set(2, 3, true);
        assert_eq!(isoperimetric_best(&m), (1.0, 1));
    }

    #[test]
    fn empty_mask_scores_zero() {
        assert_eq!(isoperimetric_best(&Mask::empty(4, 4)), (0.0, 0));
    }

    #[test]
    fn square_blocks() {
        let (i, n) = isoperimetric_best(&block(5, 5, 2));
        assert_eq!(n, 1);
        assert!((i - PI / 4.0).abs() < 1e-9);
        for size in [5, 9, 17] {
            let (i, _) = isoperimetric_best(&block(size, size, 1));
            assert!((i - PI / 4.0).abs() < 0.02);
        }
        // flush against the raster edge
        assert!((isoperimetric_best(&block(5, 5, 0)).0 - PI / 4.0).abs() < 1e-9);
    }

    #[test]
    fn strips_have_no_area() {
        assert_eq!(isoperimetric_best(&block(6, 1, 2)).0, 0.0);
        assert_eq!(isoperimetric_best(&block(1, 6, 2)).0, 0.0);
        let diag = Mask::from_fn(8, 8, |x, y| x == y);
        assert_eq!(isoperimetric_best(&diag).0, 0.0);
    }

    #[test]
    fn disks_match_oracle_and_grow_rounder() {
        let mut last = 0.0;
        for r in [5.0, 10.0, 20.0] {
            let m = disk(r);
            let (i, n) = isoperimetric_best(&m);
            assert_eq!(n, 1);
            assert!((i - star_oracle(&m)).abs() < 1e-12, "r={r}: {i} vs {}", star_oracle(&m));
            assert!(i > last);
            last = i;
        }
        assert!(isoperimetric_best(&disk(10.0)).0 > 0.85);
    }

    #[test]
    fn best_component_wins() {
        // a strip along the bottom and a separate 5×5 block
        let m = Mask::from_fn(12, 12, |x, y| (y == 1 && (1..7).contains(&x)) || ((6..11).contains(&x) && (5..10).contains(&y)));
        let (i, n) = isoperimetric_best(&m);
        assert_eq!(n, 2);
        assert!((i - PI / 4.0).abs() < 1e-9);
    }

    #[test]
    fn traces_non_convex_shapes() {
        // an L shape: 3×3 square with its top-right 2×2 removed, scaled up
        let m = Mask::from_fn(10, 10, |x, y| (1..9).contains(&x) && (1..9).contains(&y) && !(x >= 5 && y >= 5));
        let cycle = trace_boundary(&m, m.components()[0][0]);
        let (l, a) = polygon_measures(&cycle);
        // outline through pixel positions: 7×7 square minus a 4×4 corner
        // block, the reflex corner cut by one diagonal step
        assert!((l - (26.0 + SQRT_2)).abs() < 1e-12);
        assert!((a - (49.0 - 16.0 + 0.5)).abs() < 1e-12);
    }

    #[test]
    fn pgm_header_and_orientation() {
        let mut m = Mask::empty(3, 2);
        m.set(0, 1, true);
        let mut out = Vec::new();
        m.write_pgm(&mut out).unwrap();
        assert!(out.starts_with(b"P5\n3 2\n255\n"));
        assert_eq!(&out[out.len() - 6..], &[255, 0, 0, 0, 0, 0]);
    }

    proptest! {
        #[test]
        fn ratio_in_unit_interval(bits in prop::collection::vec(any::<bool>(), 64)) {
            let m = Mask::new(8, 8, bits);
            for c in m.components() {
                let r = component_ratio(&m, &c);
                prop_assert!((0.0..=1.0).contains(&r));
            }
        }

        #[test]
        fn convex_blobs_match_oracle(cx in 8.0f64..12.0, cy in 8.0f64..12.0, a in 3.0f64..7.0, b in 3.0f64..7.0) {
            let m = Mask::from_fn(20, 20, |x, y| {
                let (dx, dy) = ((x as f64 - cx) / a, (y as f64 - cy) / b);
                dx * dx + dy * dy <= 1.0
            });
            prop_assume!(m.components().len() == 1 && m.count() > 4);
            let (i, _) = isoperimetric_best(&m);
            prop_assert!((i - star_oracle(&m)).abs() < 1e-9, "{} vs {}", i, star_oracle(&m));
        }
    }
}
