//! Pairing singular modes across consecutive windows.
//!
//! Right singular vectors of window `t+1` are pushed through the last step of
//! that window so that they live on the same support time as those of window
//! `t`, then compared with a `p` quasi-norm after lifting both to the union of
//! their supports.

use std::cmp::Ordering;
use std::io::{self, Write};

use rayon::prelude::*;
use thiserror::Error;

use crate::lifespans::{detect_lifespans, mismatch_table, Thresholds};
use crate::ulam::{lift, SupportVector, TransitionMatrix, WindowModes};

/// Default quasi-norm candidates: 0.1, 0.2, …, 1 and 2.
pub const DEFAULT_P_CANDIDATES: [f64; 11] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0, 2.0];

/// Mean mismatches closer than this are treated as equal when choosing `p`.
pub const P_SCORE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum TrackingError {
    #[error("quasi-norm exponent must be positive, got {0}")]
    InvalidExponent(f64),
    #[error("vectors differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("no windows to track")]
    NoWindows,
    #[error("window t={t} has {found} modes, expected {expected}")]
    ModeCountMismatch { t: i64, found: usize, expected: usize },
    #[error("window start times are not consecutive at t={0}")]
    NonConsecutive(i64),
    #[error("no quasi-norm candidates given")]
    NoCandidates,
}

/// `(Σ|u_i − v_i|^p)^{1/p}`.
pub fn quasi_norm(u: &[f64], v: &[f64], p: f64) -> Result<f64, TrackingError> {
    if !(p > 0.0) {
        return Err(TrackingError::InvalidExponent(p));
    }
    if u.len() != v.len() {
        return Err(TrackingError::LengthMismatch(u.len(), v.len()));
    }
    Ok(quasi_norm_unchecked(u.iter().zip(v).map(|(a, b)| a - b), p))
}

fn quasi_norm_unchecked(diffs: impl Iterator<Item = f64>, p: f64) -> f64 {
    if p == 2.0 {
        return diffs.map(|d| d * d).sum::<f64>().sqrt();
    }
    if p == 1.0 {
        return diffs.map(f64::abs).sum();
    }
    diffs.map(|d| d.abs().powf(p)).sum::<f64>().powf(1.0 / p)
}

/// `P·v` normalised in the Euclidean norm, over the row bins of `P`.
/// `None` when the image vanishes.
pub fn pushforward(step: &TransitionMatrix, v: &SupportVector) -> Option<SupportVector> {
    assert_eq!(step.col_bins(), &v.bins[..], "vector must live on the step's columns");
    let mut w = step.matvec(&v.values);
    let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(norm > 0.0) || !norm.is_finite() {
        return None;
    }
    w.iter_mut().for_each(|x| *x /= norm);
    Some(SupportVector::new(step.row_bins().to_vec(), w))
}

/// `min_± ‖a ± b‖_p` after lifting both vectors to the union of supports.
pub fn signed_distance(a: &SupportVector, b: &SupportVector, p: f64) -> Result<f64, TrackingError> {
    if !(p > 0.0) {
        return Err(TrackingError::InvalidExponent(p));
    }
    let (_, la, lb) = lift(a, b);
    let minus = quasi_norm_unchecked(la.iter().zip(&lb).map(|(x, y)| x - y), p);
    let plus = quasi_norm_unchecked(la.iter().zip(&lb).map(|(x, y)| x + y), p);
    Ok(minus.min(plus))
}

/// Distance between `v_t` and the normalised image of `v_next` under the last
/// step of the next window. A vanishing image gives `+∞`.
pub fn pushforward_compare(
    v_t: &SupportVector,
    step_next: &TransitionMatrix,
    v_next: &SupportVector,
    p: f64,
) -> Result<f64, TrackingError> {
    if !(p > 0.0) {
        return Err(TrackingError::InvalidExponent(p));
    }
    match pushforward(step_next, v_next) {
        Some(w) => signed_distance(v_t, &w, p),
        None => Ok(f64::INFINITY),
    }
}

/// Greedy pairing on a square distance table: repeatedly take the smallest
/// remaining entry, ties going to the lexicographically smallest `(row, col)`.
/// Returns `pairs[row] = col`.
pub fn greedy_pairing(dist: &[Vec<f64>]) -> Vec<usize> {
    let n = dist.len();
    let mut row_free = vec![true; n];
    let mut col_free = vec![true; n];
    let mut pairs = vec![usize::MAX; n];
    for _ in 0..n {
        let mut best: Option<(f64, usize, usize)> = None;
        for (r, row) in dist.iter().enumerate().filter(|(r, _)| row_free[*r]) {
            for (c, &d) in row.iter().enumerate().filter(|(c, _)| col_free[*c]) {
                let better = match best {
                    None => true,
                    Some((bd, _, _)) => d.total_cmp(&bd) == Ordering::Less,
                };
                if better {
                    best = Some((d, r, c));
                }
            }
        }
        let (_, r, c) = best.expect("a free pair remains");
        row_free[r] = false;
        col_free[c] = false;
        pairs[r] = c;
    }
    pairs
}

/// Singular value paths and vectors re-ordered into tracked slots.
///
/// All tables are indexed `[t][slot]`, with `t` counted from the first window.
#[derive(Clone, Debug, PartialEq)]
pub struct TrackedPaths {
    pub p: f64,
    pub times: Vec<i64>,
    pub values: Vec<Vec<f64>>,
    pub raw_index: Vec<Vec<usize>>,
    pub left: Vec<Vec<SupportVector>>,
    pub right: Vec<Vec<SupportVector>>,
}

impl TrackedPaths {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn modes(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }

    /// Singular values of one slot over time.
    pub fn path(&self, slot: usize) -> Vec<f64> {
        self.values.iter().map(|row| row[slot]).collect()
    }

    pub fn mean(&self, slot: usize) -> f64 {
        self.path(slot).iter().sum::<f64>() / self.len() as f64
    }

    /// `t,mode,singular_value` rows, modes numbered from 1.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "t,mode,singular_value")?;
        for (t, row) in self.times.iter().zip(&self.values) {
            for (j, s) in row.iter().enumerate() {
                writeln!(w, "{},{},{:.17e}", t, j + 1, s)?;
            }
        }
        Ok(())
    }
}

fn check_windows(windows: &[WindowModes]) -> Result<usize, TrackingError> {
    let first = windows.first().ok_or(TrackingError::NoWindows)?;
    let modes = first.modes();
    for (k, w) in windows.iter().enumerate() {
        if w.modes() != modes {
            return Err(TrackingError::ModeCountMismatch {
                t: w.t,
                found: w.modes(),
                expected: modes,
            });
        }
        if k > 0 && w.t != windows[k - 1].t + 1 {
            return Err(TrackingError::NonConsecutive(w.t));
        }
    }
    Ok(modes)
}

/// Distances between raw right vectors of `cur` (rows) and pushed-forward raw
/// right vectors of `next` (columns).
pub fn distance_table(cur: &WindowModes, next: &WindowModes, p: f64) -> Result<Vec<Vec<f64>>, TrackingError> {
    let n = cur.modes();
    let images: Vec<Option<SupportVector>> = (0..next.modes())
        .into_par_iter()
        .map(|k| pushforward(&next.last_step, &next.right_vector(k)))
        .collect();
    (0..n)
        .into_par_iter()
        .map(|j| {
            let v = cur.right_vector(j);
            images
                .iter()
                .map(|img| match img {
                    Some(w) => signed_distance(&v, w, p),
                    None => Ok(f64::INFINITY),
                })
                .collect()
        })
        .collect()
}

/// Tracks modes through consecutive windows.
///
/// Slot `s` starts at raw index `s`. At each step the slot currently holding
/// raw mode `j'` moves to the raw mode `j''` of the next window that the
/// greedy pairing assigns to `j'`. Slots are finally ordered by descending
/// mean singular value.
pub fn track_modes(windows: &[WindowModes], p: f64) -> Result<TrackedPaths, TrackingError> {
    if !(p > 0.0) {
        return Err(TrackingError::InvalidExponent(p));
    }
    let modes = check_windows(windows)?;
    let mut raw: Vec<Vec<usize>> = Vec::with_capacity(windows.len());
    raw.push((0..modes).collect());
    for pair in windows.windows(2) {
        let pairing = greedy_pairing(&distance_table(&pair[0], &pair[1], p)?);
        let prev = raw.last().unwrap();
        raw.push(prev.iter().map(|&j| pairing[j]).collect());
    }

    let means: Vec<f64> = (0..modes)
        .map(|s| {
            windows.iter().zip(&raw).map(|(w, r)| w.svd.s[r[s]]).sum::<f64>() / windows.len() as f64
        })
        .collect();
    let mut order: Vec<usize> = (0..modes).collect();
    order.sort_by(|&a, &b| means[b].total_cmp(&means[a]).then(a.cmp(&b)));

    let raw_index: Vec<Vec<usize>> = raw.iter().map(|r| order.iter().map(|&s| r[s]).collect()).collect();
    let values = windows
        .iter()
        .zip(&raw_index)
        .map(|(w, r)| r.iter().map(|&j| w.svd.s[j]).collect())
        .collect();
    let left = windows
        .iter()
        .zip(&raw_index)
        .map(|(w, r)| r.iter().map(|&j| w.left_vector(j)).collect())
        .collect();
    let right = windows
        .iter()
        .zip(&raw_index)
        .map(|(w, r)| r.iter().map(|&j| w.right_vector(j)).collect())
        .collect();
    Ok(TrackedPaths {
        p,
        times: windows.iter().map(|w| w.t).collect(),
        values,
        raw_index,
        left,
        right,
    })
}

/// Score of one quasi-norm candidate.
#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct PScore {
    pub p: f64,
    /// Mean mismatch over every step of every detected lifespan; absent when
    /// nothing was detected.
    pub mean_mismatch: Option<f64>,
    pub lifespans: usize,
}

#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct PSelection {
    pub selected: Option<f64>,
    pub scores: Vec<PScore>,
}

/// Scores one candidate `p` by tracking, measuring mismatch and detecting
/// lifespans.
pub fn score_p(windows: &[WindowModes], p: f64, thresholds: &Thresholds) -> Result<PScore, TrackingError> {
    let paths = track_modes(windows, p)?;
    let mismatch = mismatch_table(&paths, windows);
    let spans = detect_lifespans(&paths, &mismatch, thresholds);
    let steps: Vec<f64> = spans.iter().flatten().flat_map(|l| l.mismatch.iter().copied()).collect();
    let count = spans.iter().map(Vec::len).sum();
    let mean_mismatch = (!steps.is_empty()).then(|| steps.iter().sum::<f64>() / steps.len() as f64);
    Ok(PScore {
        p,
        mean_mismatch,
        lifespans: count,
    })
}

/// The largest candidate attaining the minimal mean lifespan mismatch.
/// Candidates with no lifespans are excluded; `selected` is `None` when all
/// are.
pub fn select_p(candidates: &[f64], windows: &[WindowModes], thresholds: &Thresholds) -> Result<PSelection, TrackingError> {
    if candidates.is_empty() {
        return Err(TrackingError::NoCandidates);
    }
    let scores = candidates
        .iter()
        .map(|&p| score_p(windows, p, thresholds))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(PSelection {
        selected: choose_p(&scores),
        scores,
    })
}

/// Selection rule on precomputed scores.
pub fn choose_p(scores: &[PScore]) -> Option<f64> {
    let best = scores
        .iter()
        .filter_map(|s| s.mean_mismatch)
        .min_by(f64::total_cmp)?;
    scores
        .iter()
        .filter(|s| s.mean_mismatch.is_some_and(|m| m - best <= P_SCORE_TOLERANCE))
        .map(|s| s.p)
        .max_by(f64::total_cmp)
}
