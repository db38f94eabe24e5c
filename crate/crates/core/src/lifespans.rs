//! Equivariance mismatch, lifespan detection and characteristic lifespans.
//!
//! The mismatch `ς ∈ [0, 1]` compares a tracked right vector with the
//! normalised image of its successor; `0` means the two agree up to sign and
//! `1` that they are orthogonal.

use std::f64::consts::{PI, SQRT_2};
use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tracking::{pushforward, signed_distance, TrackedPaths};
use crate::ulam::{SupportVector, TransitionMatrix, WindowModes};

#[derive(Debug, Error, PartialEq)]
pub enum ThresholdError {
    #[error("thresholds must satisfy 0 < down < conservative < up < 1 and 0 < percent")]
    Ordering,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThresholdMode {
    #[default]
    Conservative,
    Percentage,
}

/// Existence thresholds on the mismatch.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Thresholds {
    pub mode: ThresholdMode,
    /// `√2·sin(π/8)`: the chord of a 45° angle between unit vectors, over √2.
    pub conservative: f64,
    pub up: f64,
    pub down: f64,
    /// Relative change between consecutive mismatches.
    pub percent: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        let down = SQRT_2 * (PI / 32.0).sin();
        Self {
            mode: ThresholdMode::Conservative,
            conservative: SQRT_2 * (PI / 8.0).sin(),
            up: 1.0 - down,
            down,
            percent: 0.95,
        }
    }
}

impl Thresholds {
    pub fn conservative() -> Self {
        Self::default()
    }

    pub fn percentage() -> Self {
        Self {
            mode: ThresholdMode::Percentage,
            ..Self::default()
        }
    }

    pub fn validated(self) -> Result<Self, ThresholdError> {
        let ok = 0.0 < self.down
            && self.down < self.conservative
            && self.conservative < self.up
            && self.up < 1.0
            && self.percent > 0.0;
        if ok {
            Ok(self)
        } else {
            Err(ThresholdError::Ordering)
        }
    }

    /// Whether step `t` exists given `ς_t` and, when available, `ς_{t+1}`.
    pub fn exists(&self, current: f64, next: Option<f64>) -> bool {
        match self.mode {
            ThresholdMode::Conservative => current < self.conservative,
            ThresholdMode::Percentage => {
                if current > self.up {
                    return false;
                }
                match next {
                    Some(next) if current > self.down => relative_change(current, next) <= self.percent,
                    _ => true,
                }
            }
        }
    }
}

/// `|a − b| / min(a, b)`, with `0/0 = 0` and `x/0 = ∞`.
pub fn relative_change(a: f64, b: f64) -> f64 {
    let diff = (a - b).abs();
    if diff == 0.0 {
        0.0
    } else {
        diff / a.min(b)
    }
}

/// `min_± ‖v_t ± P·v_next/‖P·v_next‖₂‖₂ / √2`, clamped to `[0, 1]`.
/// A vanishing image gives `1`.
pub fn equivariance_mismatch(v_t: &SupportVector, step_next: &TransitionMatrix, v_next: &SupportVector) -> f64 {
    match pushforward(step_next, v_next) {
        Some(w) => (signed_distance(v_t, &w, 2.0).expect("p = 2 is valid") / SQRT_2).clamp(0.0, 1.0),
        None => 1.0,
    }
}

/// Mismatch of every tracked slot between consecutive windows.
#[derive(Clone, Debug, PartialEq)]
pub struct MismatchTable {
    /// Start time of the earlier window of each pair.
    pub times: Vec<i64>,
    /// `[t][slot]`.
    pub values: Vec<Vec<f64>>,
}

impl MismatchTable {
    pub fn path(&self, slot: usize) -> Vec<f64> {
        self.values.iter().map(|row| row[slot]).collect()
    }

    /// `t,mode,varsigma` rows, modes numbered from 1.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "t,mode,varsigma")?;
        for (t, row) in self.times.iter().zip(&self.values) {
            for (j, s) in row.iter().enumerate() {
                writeln!(w, "{},{},{:.17e}", t, j + 1, s)?;
            }
        }
        Ok(())
    }
}

/// `windows` must be the windows the paths were tracked from.
pub fn mismatch_table(paths: &TrackedPaths, windows: &[WindowModes]) -> MismatchTable {
    assert_eq!(paths.len(), windows.len(), "paths and windows differ in length");
    let pairs = paths.len().saturating_sub(1);
    let values = (0..pairs)
        .map(|t| {
            (0..paths.modes())
                .map(|j| equivariance_mismatch(&paths.right[t][j], &windows[t + 1].last_step, &paths.right[t + 1][j]))
                .collect()
        })
        .collect();
    MismatchTable {
        times: paths.times[..pairs].to_vec(),
        values,
    }
}

/// A maximal run of existing steps of one mode.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Lifespan {
    /// Slot index, from 0.
    pub mode: usize,
    pub birth: i64,
    pub death: i64,
    pub mismatch: Vec<f64>,
    pub singular_values: Vec<f64>,
}

impl Lifespan {
    pub fn age(&self) -> usize {
        self.mismatch.len()
    }

    pub fn mean_mismatch(&self) -> f64 {
        self.mismatch.iter().sum::<f64>() / self.age() as f64
    }

    /// Sample variance of the singular values; `None` for a single step.
    pub fn sv_variance(&self) -> Option<f64> {
        let n = self.singular_values.len();
        if n < 2 {
            return None;
        }
        let mean = self.singular_values.iter().sum::<f64>() / n as f64;
        Some(self.singular_values.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / (n - 1) as f64)
    }

    pub fn contains(&self, t: i64) -> bool {
        (self.birth..=self.death).contains(&t)
    }
}

/// Existence flag of each step of one mismatch path.
pub fn existence(path: &[f64], thresholds: &Thresholds) -> Vec<bool> {
    (0..path.len())
        .map(|t| thresholds.exists(path[t], path.get(t + 1).copied()))
        .collect()
}

/// Maximal runs of `true` as inclusive index ranges.
pub fn runs(flags: &[bool]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, &f) in flags.iter().enumerate() {
        match (f, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                out.push((s, i - 1));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push((s, flags.len() - 1));
    }
    out
}

/// Lifespans of every tracked slot, indexed by slot.
pub fn detect_lifespans(paths: &TrackedPaths, mismatch: &MismatchTable, thresholds: &Thresholds) -> Vec<Vec<Lifespan>> {
    (0..paths.modes())
        .map(|j| {
            let path = mismatch.path(j);
            runs(&existence(&path, thresholds))
                .into_iter()
                .map(|(a, b)| Lifespan {
                    mode: j,
                    birth: mismatch.times[a],
                    death: mismatch.times[b],
                    mismatch: path[a..=b].to_vec(),
                    singular_values: (a..=b).map(|t| paths.values[t][j]).collect(),
                })
                .collect()
        })
        .collect()
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct CharacteristicLifespans {
    pub eldest: Option<Lifespan>,
    pub min_eq: Option<Lifespan>,
    pub max_var_sv: Option<Lifespan>,
}

/// The longest lifespan, the one with the smallest mean mismatch, and the one
/// with the largest singular value variance. Ties go to the earliest birth,
/// then the lowest mode.
pub fn characteristic_lifespans(lifespans: &[Vec<Lifespan>]) -> CharacteristicLifespans {
    let mut all: Vec<&Lifespan> = lifespans.iter().flatten().collect();
    all.sort_by_key(|l| (l.birth, l.mode));

    let mut out = CharacteristicLifespans::default();
    let mut best_age = 0;
    let mut best_me = f64::INFINITY;
    let mut best_var = f64::NEG_INFINITY;
    for l in all {
        if l.age() > best_age {
            best_age = l.age();
            out.eldest = Some(l.clone());
        }
        let me = l.mean_mismatch();
        if out.min_eq.is_none() || me < best_me {
            best_me = me;
            out.min_eq = Some(l.clone());
        }
        if let Some(var) = l.sv_variance() {
            if var > best_var {
                best_var = var;
                out.max_var_sv = Some(l.clone());
            }
        }
    }
    out
}

/// One lifespan as written to the report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpanSummary {
    /// Numbered from 1.
    pub mode: usize,
    pub birth: i64,
    pub death: i64,
    pub age: usize,
    pub mean_mismatch: f64,
    pub sv_variance: Option<f64>,
}

impl From<&Lifespan> for SpanSummary {
    fn from(l: &Lifespan) -> Self {
        Self {
            mode: l.mode + 1,
            birth: l.birth,
            death: l.death,
            age: l.age(),
            mean_mismatch: l.mean_mismatch(),
            sv_variance: l.sv_variance(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeSpans {
    pub mode: usize,
    pub spans: Vec<SpanSummary>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LifespanReport {
    pub p: f64,
    pub thresholds: Thresholds,
    pub modes: Vec<ModeSpans>,
    pub eldest: Option<SpanSummary>,
    pub min_eq: Option<SpanSummary>,
    pub max_var_sv: Option<SpanSummary>,
}

impl LifespanReport {
    pub fn new(p: f64, thresholds: Thresholds, lifespans: &[Vec<Lifespan>], chars: &CharacteristicLifespans) -> Self {
        Self {
            p,
            thresholds,
            modes: lifespans
                .iter()
                .enumerate()
                .map(|(j, ls)| ModeSpans {
                    mode: j + 1,
                    spans: ls.iter().map(SpanSummary::from).collect(),
                })
                .collect(),
            eldest: chars.eldest.as_ref().map(SpanSummary::from),
            min_eq: chars.min_eq.as_ref().map(SpanSummary::from),
            max_var_sv: chars.max_var_sv.as_ref().map(SpanSummary::from),
        }
    }

    pub fn total_spans(&self) -> usize {
        self.modes.iter().map(|m| m.spans.len()).sum()
    }

    pub fn spans(&self) -> impl Iterator<Item = &SpanSummary> {
        self.modes.iter().flat_map(|m| m.spans.iter())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn paths_from(values: Vec<Vec<f64>>) -> TrackedPaths {
        let t = values.len();
        TrackedPaths {
            p: 1.0,
            times: (0..t as i64).collect(),
            values,
            raw_index: vec![],
            left: vec![],
            right: vec![],
        }
    }

    fn table(values: Vec<Vec<f64>>) -> MismatchTable {
        MismatchTable {
            times: (0..values.len() as i64).collect(),
            values,
        }
    }

    #[test]
    fn threshold_values() {
        let th = Thresholds::default().validated().unwrap();
        assert!((th.conservative - 0.541_196_100_146_197).abs() < 1e-12);
        assert!((th.down - 0.138_617_169_199_091).abs() < 1e-12);
        assert!((th.up - 0.861_382_830_800_909).abs() < 1e-12);
        let bad = Thresholds { up: 0.3, ..th };
        assert_eq!(bad.validated(), Err(ThresholdError::Ordering));
    }

    #[test]
    fn mismatch_examples() {
        let id = TransitionMatrix::identity(vec![0, 1]);
        let a = SupportVector::new(vec![0, 1], vec![1.0, 0.0]);
        let b = SupportVector::new(vec![0, 1], vec![0.0, 1.0]);
        let c = SupportVector::new(vec![0, 1], vec![(PI / 4.0).cos(), (PI / 4.0).sin()]);
        assert!(equivariance_mismatch(&a, &id, &a).abs() < 1e-15);
        assert!((equivariance_mismatch(&a, &id, &b) - 1.0).abs() < 1e-15);
        assert!((equivariance_mismatch(&a, &id, &c) - Thresholds::default().conservative).abs() < 1e-12);
        // disjoint supports are orthogonal
        let far = SupportVector::new(vec![5], vec![1.0]);
        assert!((equivariance_mismatch(&a, &TransitionMatrix::identity(vec![5]), &far) - 1.0).abs() < 1e-15);
        let dead = TransitionMatrix::from_rows(vec![0, 1], vec![0, 1], vec![vec![], vec![]]).unwrap();
        assert_eq!(equivariance_mismatch(&a, &dead, &a), 1.0);
    }

    #[test]
    fn constant_mismatch() {
        let paths = paths_from(vec![vec![0.9, 0.5]; 6]);
        let low = table(vec![vec![0.1, 0.1]; 5]);
        for th in [Thresholds::conservative(), Thresholds::percentage()] {
            let spans = detect_lifespans(&paths, &low, &th);
            for (j, s) in spans.iter().enumerate() {
                assert_eq!(s.len(), 1);
                assert_eq!((s[0].mode, s[0].birth, s[0].death), (j, 0, 4));
            }
        }
        let high = table(vec![vec![0.9, 0.9]; 5]);
        for th in [Thresholds::conservative(), Thresholds::percentage()] {
            assert!(detect_lifespans(&paths, &high, &th).iter().all(Vec::is_empty));
        }
    }

    #[test]
    fn percentage_rule() {
        let th = Thresholds::percentage();
        // 0.2 → 0.5 is a 150% jump
        assert_eq!(existence(&[0.2, 0.5, 0.5], &th), vec![false, true, true]);
        // below the lower bound the jump is ignored
        assert_eq!(existence(&[0.1, 0.5], &th), vec![true, true]);
        // the last step uses the absolute bounds only
        assert_eq!(existence(&[0.5, 0.85], &th), vec![true, true]);
        assert_eq!(existence(&[0.5, 0.87], &th), vec![true, false]);
        assert_eq!(existence(&[0.3, 0.0], &th), vec![false, true]);
        assert_eq!(relative_change(0.0, 0.0), 0.0);
    }

    #[test]
    fn conservative_boundary_is_exclusive() {
        let th = Thresholds::conservative();
        assert!(!th.exists(th.conservative, None));
        assert!(th.exists(th.conservative - 1e-12, None));
    }

    #[test]
    fn runs_of_flags() {
        assert_eq!(runs(&[true, true, false, true, false, false, true]), vec![(0, 1), (3, 3), (6, 6)]);
        assert!(runs(&[]).is_empty());
        assert!(runs(&[false]).is_empty());
    }

    fn span(mode: usize, birth: i64, mismatch: Vec<f64>, sv: Vec<f64>) -> Lifespan {
        Lifespan {
            mode,
            birth,
            death: birth + mismatch.len() as i64 - 1,
            mismatch,
            singular_values: sv,
        }
    }

    #[test]
    fn characteristic_selection() {
        let a = span(0, 0, vec![0.1; 3], vec![0.9, 0.9, 0.9]);
        let b = span(1, 2, vec![0.05; 3], vec![0.2, 0.8, 0.5]);
        let c = span(1, 10, vec![0.3; 5], vec![0.5, 0.51, 0.5, 0.5, 0.5]);
        let chars = characteristic_lifespans(&[vec![a.clone()], vec![b.clone(), c.clone()]]);
        assert_eq!(chars.eldest, Some(c));
        assert_eq!(chars.min_eq, Some(b.clone()));
        assert_eq!(chars.max_var_sv, Some(b));
    }

    #[test]
    fn ties_prefer_early_birth_then_low_mode() {
        let late = span(0, 5, vec![0.1; 2], vec![0.1, 0.3]);
        let early_hi = span(2, 1, vec![0.1; 2], vec![0.1, 0.3]);
        let early_lo = span(1, 1, vec![0.1; 2], vec![0.1, 0.3]);
        let chars = characteristic_lifespans(&[vec![late], vec![early_lo.clone()], vec![early_hi]]);
        assert_eq!(chars.eldest, Some(early_lo.clone()));
        assert_eq!(chars.min_eq, Some(early_lo.clone()));
        assert_eq!(chars.max_var_sv, Some(early_lo));
    }

    #[test]
    fn single_step_lifespan() {
        let one = span(0, 4, vec![0.2], vec![0.7]);
        let chars = characteristic_lifespans(&[vec![one.clone()]]);
        assert_eq!(chars.eldest, Some(one.clone()));
        assert_eq!(chars.min_eq, Some(one));
        assert_eq!(chars.max_var_sv, None);
        assert_eq!(characteristic_lifespans(&[vec![], vec![]]), CharacteristicLifespans::default());
    }

    #[test]
    fn report_round_trip() {
        let a = span(0, 0, vec![0.1; 3], vec![0.9, 0.8, 0.9]);
        let chars = characteristic_lifespans(&[vec![a.clone()]]);
        let report = LifespanReport::new(0.1, Thresholds::default(), &[vec![a]], &chars);
        let text = serde_json::to_string(&report).unwrap();
        let back: LifespanReport = serde_json::from_str(&text).unwrap();
        assert_eq!(back, report);
        assert_eq!(back.eldest.unwrap().mode, 1);
    }

    proptest! {
        #[test]
        fn mismatch_in_unit_interval_and_sign_symmetric(
            a in prop::collection::vec(-1.0f64..1.0, 5),
            b in prop::collection::vec(-1.0f64..1.0, 5),
            shift in 0usize..4,
        ) {
            prop_assume!(a.iter().any(|x| x.abs() > 1e-3) && b.iter().any(|x| x.abs() > 1e-3));
            let unit = |v: &[f64]| {
                let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                v.iter().map(|x| x / n).collect::<Vec<_>>()
            };
            let (a, b) = (unit(&a), unit(&b));
            let va = SupportVector::new((0..5).collect(), a.clone());
            let bins: Vec<usize> = (shift..shift + 5).collect();
            let step = TransitionMatrix::identity(bins.clone());
            let vb = SupportVector::new(bins.clone(), b.clone());
            let m = equivariance_mismatch(&va, &step, &vb);
            prop_assert!((-1e-12..=1.0 + 1e-12).contains(&m));
            let na = SupportVector::new((0..5).collect(), a.iter().map(|x| -x).collect());
            let nb = SupportVector::new(bins, b.iter().map(|x| -x).collect());
            prop_assert!((equivariance_mismatch(&na, &step, &vb) - m).abs() < 1e-12);
            prop_assert!((equivariance_mismatch(&va, &step, &nb) - m).abs() < 1e-12);
        }

        #[test]
        fn raising_conservative_threshold_keeps_steps(
            path in prop::collection::vec(0.0f64..1.0, 1..40),
            lo in 0.15f64..0.8,
            raise in 0.0f64..0.2,
        ) {
            let a = Thresholds { conservative: lo, ..Thresholds::default() };
            let b = Thresholds { conservative: lo + raise, ..Thresholds::default() };
            let ea = existence(&path, &a);
            let eb = existence(&path, &b);
            for (x, y) in ea.iter().zip(&eb) {
                prop_assert!(!x || *y);
            }
        }

        #[test]
        fn characteristic_members_and_eldest_maximal(
            raw in prop::collection::vec(prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 1..30), 1..5),
        ) {
            let th = Thresholds::default();
            let values: Vec<Vec<f64>> = (0..raw.iter().map(Vec::len).min().unwrap())
                .map(|t| raw.iter().map(|m| m[t].1).collect())
                .collect();
            let mism: Vec<Vec<f64>> = (0..values.len())
                .map(|t| raw.iter().map(|m| m[t].0).collect())
                .collect();
            let paths = paths_from(values);
            let spans = detect_lifespans(&paths, &table(mism), &th);
            let chars = characteristic_lifespans(&spans);
            let all: Vec<&Lifespan> = spans.iter().flatten().collect();
            for pick in [&chars.eldest, &chars.min_eq, &chars.max_var_sv].into_iter().flatten() {
                prop_assert!(all.contains(&pick));
            }
            if let Some(e) = &chars.eldest {
                prop_assert!(all.iter().all(|l| l.age() <= e.age()));
            } else {
                prop_assert!(all.is_empty());
            }
        }
    }
}
