use super::RegularityError;

/// Histogram resolution for threshold search.
pub const HISTOGRAM_BINS: usize = 64;

/// Three ascending contour levels.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Contours {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
}

impl Contours {
    pub fn as_array(&self) -> [f64; 3] {
        [self.c1, self.c2, self.c3]
    }
}

/// Counts of `values` in [`HISTOGRAM_BINS`] equal-width bins over
/// `[min, max]`, the maximum landing in the last bin.
pub fn histogram(values: &[f64], min: f64, max: f64) -> Vec<u64> {
    let mut counts = vec![0u64; HISTOGRAM_BINS];
    let width = (max - min) / HISTOGRAM_BINS as f64;
    for &v in values {
        let k = ((v - min) / width).floor() as isize;
        counts[k.clamp(0, HISTOGRAM_BINS as isize - 1) as usize] += 1;
    }
    counts
}

/// Bin-index cut points `(k1, k2, k3)` maximising the between-class variance
/// of the four classes `[0,k1) [k1,k2) [k2,k3) [k3,64)` of `counts`.
///
/// Weights and means are taken over bin indices. Cut triples inducing the
/// same partition of the occupied bins score identically; among those the
/// triple with the widest minimum spacing between cuts and histogram ends
/// wins, then the lexicographically first.
pub fn otsu_cuts(counts: &[u64]) -> (usize, usize, usize) {
    let m = counts.len();
    // prefix sums of weight and first moment
    let mut w = vec![0.0; m + 1];
    let mut mu = vec![0.0; m + 1];
    for (i, &c) in counts.iter().enumerate() {
        w[i + 1] = w[i] + c as f64;
        mu[i + 1] = mu[i] + c as f64 * (i as f64 + 0.5);
    }
    let class = |a: usize, b: usize| {
        let wc = w[b] - w[a];
        if wc > 0.0 {
            let s = mu[b] - mu[a];
            s * s / wc
        } else {
            0.0
        }
    };
    let spacing = |k1: usize, k2: usize, k3: usize| k1.min(k2 - k1).min(k3 - k2).min(m - k3);
    let mut best = (f64::NEG_INFINITY, 0, (1, 2, 3));
    for k1 in 1..m - 2 {
        let c1 = class(0, k1);
        for k2 in k1 + 1..m - 1 {
            let c12 = c1 + class(k1, k2);
            for k3 in k2 + 1..m {
                let score = c12 + class(k2, k3) + class(k3, m);
                if score > best.0 || (score == best.0 && spacing(k1, k2, k3) > best.1) {
                    best = (score, spacing(k1, k2, k3), (k1, k2, k3));
                }
            }
        }
    }
    best.2
}

/// Four-class multilevel Otsu thresholds of `values`.
pub fn multilevel_contours(values: &[f64]) -> Result<Contours, RegularityError> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(RegularityError::NonFinite);
    }
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if values.is_empty() || !(max > min) {
        return Err(RegularityError::NoContour);
    }
    let (k1, k2, k3) = otsu_cuts(&histogram(values, min, max));
    let width = (max - min) / HISTOGRAM_BINS as f64;
    Ok(Contours {
        c1: min + k1 as f64 * width,
        c2: min + k2 as f64 * width,
        c3: min + k3 as f64 * width,
    })
}

/// `sign` with `sign(0) = 0`.
fn sign(x: f64) -> i8 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

/// Which values to keep given the contours: both tails when `C1` and `C3`
/// differ in sign, otherwise the side of `C2` away from zero.
pub fn select_cells(values: &[f64], c: &Contours) -> Vec<bool> {
    if sign(c.c1) != sign(c.c3) {
        values.iter().map(|&v| v < c.c1 || v > c.c3).collect()
    } else if sign(c.c3) > 0 {
        values.iter().map(|&v| v > c.c2).collect()
    } else {
        values.iter().map(|&v| v < c.c2).collect()
    }
}
