//! Construction of paired test/calibration statistics `(T, T⁰)` from repeated
//! measurements.
//!
//! Each unit's observations are split at random into two halves. The sum and
//! difference of the half means share a pooled scale estimate, and both are
//! mapped through the Student-t CDF and the normal quantile. Under a
//! zero-symmetric error law the resulting pair is exchangeable for null units.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::special::t_to_normal_score;

/// Raw repeated measurements for one testing unit.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitObservations {
    pub id: String,
    pub values: Vec<f64>,
}

impl UnitObservations {
    pub fn new(id: impl Into<String>, values: Vec<f64>) -> Self {
        Self {
            id: id.into(),
            values,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn validate(&self, min: usize) -> Result<()> {
        if self.values.len() < min {
            return Err(Error::TooFewObservations {
                unit: self.id.clone(),
                n: self.values.len(),
                min,
            });
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                unit: self.id.clone(),
            });
        }
        Ok(())
    }
}

/// Measurements of one unit under two conditions.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoSampleUnit {
    pub id: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl TwoSampleUnit {
    pub fn new(id: impl Into<String>, x: Vec<f64>, y: Vec<f64>) -> Self {
        Self { id: id.into(), x, y }
    }

    fn validate(&self) -> Result<()> {
        let n = self.x.len().min(self.y.len());
        if n < 4 {
            return Err(Error::TooFewObservations {
                unit: self.id.clone(),
                n,
                min: 4,
            });
        }
        if self.x.iter().chain(&self.y).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                unit: self.id.clone(),
            });
        }
        Ok(())
    }
}

/// A partition of `0..n` into a first half of size `⌈n/2⌉` and the rest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub first: Vec<usize>,
    pub second: Vec<usize>,
}

impl Split {
    /// Deterministic split: first `⌈n/2⌉` indices, then the remainder.
    pub fn contiguous(n: usize) -> Self {
        let k = n.div_ceil(2);
        Self {
            first: (0..k).collect(),
            second: (k..n).collect(),
        }
    }

    /// Same partition with the roles of the halves exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            first: self.second.clone(),
            second: self.first.clone(),
        }
    }
}

/// Draws a uniformly random split of `n` observations (Fisher-Yates shuffle,
/// then prefix/suffix).
pub fn split_unit<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Split> {
    if n < 2 {
        return Err(Error::TooFewObservations {
            unit: String::new(),
            n,
            min: 2,
        });
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let k = n.div_ceil(2);
    let mut first = idx[..k].to_vec();
    let mut second = idx[k..].to_vec();
    first.sort_unstable();
    second.sort_unstable();
    Ok(Split { first, second })
}

/// Sum/difference statistics and their common scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSummary {
    pub v: f64,
    pub v0: f64,
    pub s: f64,
    pub dof: u32,
}

/// The calibrated pair `(T, T⁰)` for one unit. `unit` is the position of the
/// unit in its batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibratedPair {
    pub unit: usize,
    pub t: f64,
    pub t0: f64,
    /// Zero scale estimate; the pair was set to `(0, 0)`.
    pub degenerate: bool,
}

impl CalibratedPair {
    pub fn new(unit: usize, t: f64, t0: f64) -> Self {
        Self {
            unit,
            t,
            t0,
            degenerate: false,
        }
    }

    pub fn swapped(self) -> Self {
        Self {
            t: self.t0,
            t0: self.t,
            ..self
        }
    }
}

struct HalfStats {
    mean: f64,
    var: f64,
    n: usize,
}

fn half_stats(values: &[f64], idx: &[usize]) -> HalfStats {
    let n = idx.len();
    let mean = idx.iter().map(|&j| values[j]).sum::<f64>() / n as f64;
    let var = if n > 1 {
        idx.iter()
            .map(|&j| {
                let d = values[j] - mean;
                d * d
            })
            .sum::<f64>()
            / (n - 1) as f64
    } else {
        0.0
    };
    HalfStats { mean, var, n }
}

fn check_split(split: &Split, n: usize) -> Result<()> {
    let k = n.div_ceil(2);
    let mut seen = vec![false; n];
    let ok = split.first.len() + split.second.len() == n
        && (split.first.len() == k || split.second.len() == k)
        && split
            .first
            .iter()
            .chain(&split.second)
            .all(|&j| j < n && !std::mem::replace(&mut seen[j], true));
    if ok {
        Ok(())
    } else {
        Err(Error::ShapeMismatch(format!(
            "split does not partition {n} observations"
        )))
    }
}

// Pooled within-half variance weighted by the half-mean-difference factor.
fn pooled_scale_sq(h1: &HalfStats, h2: &HalfStats) -> f64 {
    let n = h1.n + h2.n;
    let factor = n as f64 / (h1.n * h2.n) as f64;
    let pooled =
        ((h1.n - 1) as f64 * h1.var + (h2.n - 1) as f64 * h2.var) / (n - 2) as f64;
    factor * pooled
}

/// Computes `V = X̄₁ + X̄₂`, `V⁰ = X̄₁ - X̄₂` and the pooled scale `S` for a
/// one-sample unit with at least four observations.
pub fn summarize_one_sample(obs: &UnitObservations, split: &Split) -> Result<SplitSummary> {
    obs.validate(4)?;
    check_split(split, obs.len())?;
    let h1 = half_stats(&obs.values, &split.first);
    let h2 = half_stats(&obs.values, &split.second);
    let s = pooled_scale_sq(&h1, &h2).sqrt();
    if s <= 0.0 {
        return Err(Error::DegenerateScale {
            unit: obs.id.clone(),
        });
    }
    Ok(SplitSummary {
        v: h1.mean + h2.mean,
        v0: h1.mean - h2.mean,
        s,
        dof: (obs.len() - 2) as u32,
    })
}

/// Maps `(V/S, V⁰/S)` onto the normal scale through the `t_dof` CDF.
pub fn standardize(summary: &SplitSummary) -> Result<(f64, f64)> {
    if !(summary.s > 0.0) {
        return Err(Error::DegenerateScale {
            unit: String::new(),
        });
    }
    let t = t_to_normal_score(summary.v / summary.s, summary.dof)?;
    let t0 = t_to_normal_score(summary.v0 / summary.s, summary.dof)?;
    Ok((t, t0))
}

/// One-sample standardization; see [`standardize`].
pub fn standardize_one_sample(summary: &SplitSummary) -> Result<(f64, f64)> {
    standardize(summary)
}

/// Two-sample standardization with `dof = n_x + n_y - 4`; see [`standardize`].
pub fn standardize_two_sample(summary: &SplitSummary) -> Result<(f64, f64)> {
    standardize(summary)
}

/// Pairs for units with two or three observations.
///
/// With two observations the pair is `((X₁+X₂)/√2, (X₁-X₂)/√2)` with no CDF
/// transform. With three, the scale is the standard deviation of the
/// two-element half and the reference law is `t₁`.
pub fn construct_small_n(obs: &UnitObservations, split: &Split) -> Result<(f64, f64)> {
    obs.validate(2)?;
    check_split(split, obs.len())?;
    match obs.len() {
        2 => {
            let a = obs.values[split.first[0]];
            let b = obs.values[split.second[0]];
            Ok(((a + b) / std::f64::consts::SQRT_2, (a - b) / std::f64::consts::SQRT_2))
        }
        3 => {
            let h1 = half_stats(&obs.values, &split.first);
            let h2 = half_stats(&obs.values, &split.second);
            let s = h1.var.sqrt();
            if s <= 0.0 {
                return Err(Error::DegenerateScale {
                    unit: obs.id.clone(),
                });
            }
            standardize(&SplitSummary {
                v: h1.mean + h2.mean,
                v0: h1.mean - h2.mean,
                s,
                dof: (h1.n - 1) as u32,
            })
        }
        n => Err(Error::UnsupportedSize {
            unit: obs.id.clone(),
            n,
        }),
    }
}

/// Two-sample analogue of [`summarize_one_sample`]: half means are replaced
/// by differences of half means, and the scale combines the pooled
/// within-half variances of both groups.
pub fn summarize_two_sample(
    unit: &TwoSampleUnit,
    split_x: &Split,
    split_y: &Split,
) -> Result<SplitSummary> {
    unit.validate()?;
    check_split(split_x, unit.x.len())?;
    check_split(split_y, unit.y.len())?;
    let x1 = half_stats(&unit.x, &split_x.first);
    let x2 = half_stats(&unit.x, &split_x.second);
    let y1 = half_stats(&unit.y, &split_y.first);
    let y2 = half_stats(&unit.y, &split_y.second);
    let s = (pooled_scale_sq(&x1, &x2) + pooled_scale_sq(&y1, &y2)).sqrt();
    if s <= 0.0 {
        return Err(Error::DegenerateScale {
            unit: unit.id.clone(),
        });
    }
    let d1 = x1.mean - y1.mean;
    let d2 = x2.mean - y2.mean;
    Ok(SplitSummary {
        v: d1 + d2,
        v0: d1 - d2,
        s,
        dof: (unit.x.len() + unit.y.len() - 4) as u32,
    })
}

/// Variant that scales both statistics by the full-sample standard deviation.
/// It breaks the exchangeability of the pair and exists only as a negative
/// control.
pub fn standardize_naive(obs: &UnitObservations, split: &Split) -> Result<(f64, f64)> {
    obs.validate(4)?;
    check_split(split, obs.len())?;
    let n = obs.len();
    let all: Vec<usize> = (0..n).collect();
    let full = half_stats(&obs.values, &all);
    let h1 = half_stats(&obs.values, &split.first);
    let h2 = half_stats(&obs.values, &split.second);
    let factor = n as f64 / (h1.n * h2.n) as f64;
    let s = (factor * full.var).sqrt();
    if s <= 0.0 {
        return Err(Error::DegenerateScale {
            unit: obs.id.clone(),
        });
    }
    standardize(&SplitSummary {
        v: h1.mean + h2.mean,
        v0: h1.mean - h2.mean,
        s,
        dof: (n - 2) as u32,
    })
}

fn pair_or_degenerate(unit: usize, res: Result<(f64, f64)>) -> Result<CalibratedPair> {
    match res {
        Ok((t, t0)) => Ok(CalibratedPair::new(unit, t, t0)),
        Err(Error::DegenerateScale { .. }) => Ok(CalibratedPair {
            unit,
            t: 0.0,
            t0: 0.0,
            degenerate: true,
        }),
        Err(e) => Err(e),
    }
}

/// Builds the pair for a one-sample unit with a given split, routing units
/// with fewer than four observations to [`construct_small_n`]. A zero scale
/// yields a flagged `(0, 0)` pair instead of an error.
pub fn pair_one_sample(unit: usize, obs: &UnitObservations, split: &Split) -> Result<CalibratedPair> {
    let res = if obs.len() >= 4 {
        summarize_one_sample(obs, split).and_then(|s| standardize(&s))
    } else {
        construct_small_n(obs, split)
    };
    pair_or_degenerate(unit, res)
}

/// Builds the pair for a two-sample unit with given splits.
pub fn pair_two_sample(
    unit: usize,
    obs: &TwoSampleUnit,
    split_x: &Split,
    split_y: &Split,
) -> Result<CalibratedPair> {
    pair_or_degenerate(
        unit,
        summarize_two_sample(obs, split_x, split_y).and_then(|s| standardize(&s)),
    )
}

/// Random substream for unit `unit` under run seed `seed`.
pub fn unit_rng(seed: u64, unit: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(unit as u64);
    rng
}

/// Splits every unit independently (one substream per unit) and builds the
/// calibrated pairs.
pub fn construct_one_sample_batch(units: &[UnitObservations], seed: u64) -> Result<Vec<CalibratedPair>> {
    units
        .iter()
        .enumerate()
        .map(|(i, obs)| {
            obs.validate(2).map_err(|e| match e {
                Error::TooFewObservations { n, min, .. } => Error::TooFewObservations {
                    unit: obs.id.clone(),
                    n,
                    min,
                },
                e => e,
            })?;
            let mut rng = unit_rng(seed, i);
            let split = split_unit(obs.len(), &mut rng)?;
            pair_one_sample(i, obs, &split)
        })
        .collect()
}

/// Two-sample analogue of [`construct_one_sample_batch`]. Units with fewer
/// than four observations in either group are rejected.
pub fn construct_two_sample_batch(units: &[TwoSampleUnit], seed: u64) -> Result<Vec<CalibratedPair>> {
    units
        .iter()
        .enumerate()
        .map(|(i, obs)| {
            obs.validate()?;
            let mut rng = unit_rng(seed, i);
            let sx = split_unit(obs.x.len(), &mut rng)?;
            let sy = split_unit(obs.y.len(), &mut rng)?;
            pair_two_sample(i, obs, &sx, &sy)
        })
        .collect()
}

/// Raw input for one analysis, in either design.
#[derive(Debug, Clone, PartialEq)]
pub enum Dataset {
    OneSample(Vec<UnitObservations>),
    TwoSample(Vec<TwoSampleUnit>),
}

impl Dataset {
    pub fn len(&self) -> usize {
        match self {
            Self::OneSample(u) => u.len(),
            Self::TwoSample(u) => u.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn ids(&self) -> Vec<&str> {
        match self {
            Self::OneSample(u) => u.iter().map(|x| x.id.as_str()).collect(),
            Self::TwoSample(u) => u.iter().map(|x| x.id.as_str()).collect(),
        }
    }

    /// Fresh splits of every unit under `seed`.
    pub fn construct(&self, seed: u64) -> Result<Vec<CalibratedPair>> {
        match self {
            Self::OneSample(u) => construct_one_sample_batch(u, seed),
            Self::TwoSample(u) => construct_two_sample_batch(u, seed),
        }
    }
}

/// Paired-design preprocessing: per-unit differences `after - before`,
/// centred by the (lower) median of the per-unit mean differences.
pub fn preprocess_paired(
    before: &[UnitObservations],
    after: &[UnitObservations],
) -> Result<Vec<UnitObservations>> {
    if before.len() != after.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} units before, {} after",
            before.len(),
            after.len()
        )));
    }
    if before.is_empty() {
        return Err(Error::ShapeMismatch("no units".into()));
    }
    let mut diffs = Vec::with_capacity(before.len());
    for (b, a) in before.iter().zip(after) {
        if b.len() != a.len() || b.is_empty() {
            return Err(Error::ShapeMismatch(format!(
                "unit {}: {} before vs {} after",
                b.id,
                b.len(),
                a.len()
            )));
        }
        let d: Vec<f64> = a.values.iter().zip(&b.values).map(|(x, y)| x - y).collect();
        diffs.push(UnitObservations::new(b.id.clone(), d));
    }
    let mut means: Vec<f64> = diffs
        .iter()
        .map(|u| u.values.iter().sum::<f64>() / u.len() as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let median = means[(means.len() - 1) / 2];
    for u in &mut diffs {
        for v in &mut u.values {
            *v -= median;
        }
    }
    Ok(diffs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::{std_normal_quantile, student_t_cdf};

    fn split(first: &[usize], second: &[usize]) -> Split {
        Split {
            first: first.to_vec(),
            second: second.to_vec(),
        }
    }

    #[test]
    fn split_sizes() {
        let mut rng = unit_rng(7, 0);
        for (n, k) in [(2, 1), (4, 2), (5, 3), (9, 5)] {
            let s = split_unit(n, &mut rng).unwrap();
            assert_eq!(s.first.len(), k);
            assert_eq!(s.second.len(), n - k);
            let mut all: Vec<usize> = s.first.iter().chain(&s.second).copied().collect();
            all.sort();
            assert_eq!(all, (0..n).collect::<Vec<_>>());
        }
        assert!(split_unit(1, &mut rng).is_err());
    }

    #[test]
    fn split_is_deterministic_per_seed() {
        let a = split_unit(10, &mut unit_rng(3, 5)).unwrap();
        let b = split_unit(10, &mut unit_rng(3, 5)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn split_is_uniform_over_partitions() {
        // n = 4: six partitions with |first| = 2
        let mut rng = unit_rng(11, 0);
        let mut counts = std::collections::HashMap::new();
        let reps = 60_000;
        for _ in 0..reps {
            let s = split_unit(4, &mut rng).unwrap();
            *counts.entry(s.first).or_insert(0usize) += 1;
        }
        assert_eq!(counts.len(), 6);
        for c in counts.values() {
            let p = *c as f64 / reps as f64;
            assert!((p - 1.0 / 6.0).abs() < 0.01, "{p}");
        }
    }

    #[test]
    fn one_sample_summary_hand_example() {
        let obs = UnitObservations::new("u", vec![1.0, 3.0, 2.0, 0.0]);
        let s = summarize_one_sample(&obs, &split(&[0, 1], &[2, 3])).unwrap();
        assert_eq!(s.v, 3.0);
        assert_eq!(s.v0, 1.0);
        assert!((s.s - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(s.dof, 2);

        let (t, t0) = standardize_one_sample(&s).unwrap();
        let et = std_normal_quantile(student_t_cdf(3.0 / 2f64.sqrt(), 2).unwrap()).unwrap();
        let et0 = std_normal_quantile(student_t_cdf(1.0 / 2f64.sqrt(), 2).unwrap()).unwrap();
        assert!((t - et).abs() < 1e-12);
        assert!((t0 - et0).abs() < 1e-12);
    }

    #[test]
    fn swapping_halves_negates_v0() {
        let obs = UnitObservations::new("u", vec![0.3, -1.2, 2.2, 0.9, 1.7]);
        let sp = split(&[0, 3, 4], &[1, 2]);
        let a = summarize_one_sample(&obs, &sp).unwrap();
        // swapped split has sizes (2,3): first half no longer ⌈n/2⌉, formulas still symmetric
        let b = summarize_one_sample(&obs, &sp.swapped()).unwrap();
        assert_eq!(a.v, b.v);
        assert_eq!(a.v0, -b.v0);
        assert_eq!(a.s, b.s);
    }

    #[test]
    fn constant_unit_is_degenerate() {
        let obs = UnitObservations::new("c", vec![2.5; 4]);
        let sp = Split::contiguous(4);
        assert!(matches!(
            summarize_one_sample(&obs, &sp),
            Err(Error::DegenerateScale { .. })
        ));
        let p = pair_one_sample(0, &obs, &sp).unwrap();
        assert!(p.degenerate);
        assert_eq!((p.t, p.t0), (0.0, 0.0));
    }

    #[test]
    fn zero_ratio_maps_to_zero() {
        let s = SplitSummary {
            v: 0.0,
            v0: 0.0,
            s: 1.3,
            dof: 3,
        };
        assert_eq!(standardize(&s).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn negation_is_exactly_odd() {
        let vals = vec![0.31, -1.7, 2.05, 0.44, 3.3, -0.02, 1.1];
        let neg: Vec<f64> = vals.iter().map(|v| -v).collect();
        let sp = split(&[1, 2, 5, 6], &[0, 3, 4]);
        let a = pair_one_sample(0, &UnitObservations::new("a", vals), &sp).unwrap();
        let b = pair_one_sample(0, &UnitObservations::new("b", neg), &sp).unwrap();
        assert_eq!(a.t, -b.t);
        assert_eq!(a.t0, -b.t0);
    }

    #[test]
    fn small_n_two() {
        let obs = UnitObservations::new("u", vec![1.0, 0.5]);
        let (t, t0) = construct_small_n(&obs, &split(&[0], &[1])).unwrap();
        assert!((t - 1.060_660_171_779_821).abs() < 1e-12);
        assert!((t0 - 0.353_553_390_593_273_8).abs() < 1e-12);

        let c = 1.7;
        let obs = UnitObservations::new("u", vec![c, c]);
        let (t, t0) = construct_small_n(&obs, &split(&[0], &[1])).unwrap();
        assert!((t - c * 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(t0, 0.0);
    }

    #[test]
    fn small_n_three_uses_first_half_sd() {
        let obs = UnitObservations::new("u", vec![1.0, 2.0, 4.0]);
        let sp = split(&[0, 2], &[1]);
        let (t, t0) = construct_small_n(&obs, &sp).unwrap();
        // half 1 = {1, 4}: mean 2.5, sd = 3/√2; half 2 = {2}
        let s = 3.0 / 2f64.sqrt();
        let et = std_normal_quantile(student_t_cdf(4.5 / s, 1).unwrap()).unwrap();
        let et0 = std_normal_quantile(student_t_cdf(0.5 / s, 1).unwrap()).unwrap();
        assert!((t - et).abs() < 1e-12);
        assert!((t0 - et0).abs() < 1e-12);
    }

    #[test]
    fn small_n_rejects_other_sizes() {
        let obs = UnitObservations::new("u", vec![1.0, 2.0, 3.0, 4.0]);
        assert!(matches!(
            construct_small_n(&obs, &Split::contiguous(4)),
            Err(Error::UnsupportedSize { .. })
        ));
    }

    #[test]
    fn two_sample_hand_example() {
        // X halves {3,1} mean 2 and {0,2} mean 1; Y halves mean 0.5 each
        let unit = TwoSampleUnit::new("u", vec![3.0, 1.0, 0.0, 2.0], vec![0.0, 1.0, 1.5, -0.5]);
        let s = summarize_two_sample(&unit, &Split::contiguous(4), &Split::contiguous(4)).unwrap();
        assert_eq!(s.v, 2.0);
        assert_eq!(s.v0, 1.0);
        assert_eq!(s.dof, 4);
        // S² = (4/4)·((2 + 2)/2) + (4/4)·((0.5 + 2)/2)
        assert!((s.s - (2.0f64 + 1.25).sqrt()).abs() < 1e-14);
    }

    #[test]
    fn two_sample_identical_groups_cancel() {
        let v = vec![0.2, 1.4, -0.3, 2.2, 0.8];
        let unit = TwoSampleUnit::new("u", v.clone(), v);
        let sp = Split::contiguous(5);
        let s = summarize_two_sample(&unit, &sp, &sp).unwrap();
        assert_eq!(s.v, 0.0);
        assert_eq!(s.v0, 0.0);
    }

    #[test]
    fn two_sample_swap_halves() {
        let unit = TwoSampleUnit::new(
            "u",
            vec![0.2, 1.4, -0.3, 2.2, 0.8],
            vec![1.0, -1.1, 0.6, 0.45, 0.0, 3.0],
        );
        let sx = split(&[0, 2, 4], &[1, 3]);
        let sy = split(&[1, 2, 5], &[0, 3, 4]);
        let a = summarize_two_sample(&unit, &sx, &sy).unwrap();
        let b = summarize_two_sample(&unit, &sx.swapped(), &sy.swapped()).unwrap();
        assert_eq!(a.v, b.v);
        assert_eq!(a.v0, -b.v0);
        assert_eq!(a.s, b.s);
        assert_eq!(a.dof, 7);
    }

    #[test]
    fn two_sample_floor() {
        let unit = TwoSampleUnit::new("u", vec![1.0, 2.0, 3.0], vec![1.0, 2.0, 3.0, 4.0]);
        assert!(matches!(
            construct_two_sample_batch(&[unit], 1),
            Err(Error::TooFewObservations { min: 4, .. })
        ));
    }

    #[test]
    fn two_sample_sign_flip_is_odd() {
        let unit = TwoSampleUnit::new(
            "u",
            vec![0.2, 1.4, -0.3, 2.2, 0.8],
            vec![1.0, -1.1, 0.6, 0.45, 0.0, 3.0],
        );
        let neg = TwoSampleUnit::new(
            "n",
            unit.x.iter().map(|v| -v).collect(),
            unit.y.iter().map(|v| -v).collect(),
        );
        let a = construct_two_sample_batch(&[unit], 9).unwrap()[0];
        let b = construct_two_sample_batch(&[neg], 9).unwrap()[0];
        assert_eq!(a.t, -b.t);
        assert_eq!(a.t0, -b.t0);
    }

    #[test]
    fn naive_scale_uses_full_sample() {
        let obs = UnitObservations::new("u", vec![1.0, 3.0, 2.0, 0.0]);
        let (t, t0) = standardize_naive(&obs, &split(&[0, 1], &[2, 3])).unwrap();
        // full-sample variance of (1,3,2,0) = 5/3; S* = √(4/4 · 5/3)
        let s = (5.0f64 / 3.0).sqrt();
        let et = std_normal_quantile(student_t_cdf(3.0 / s, 2).unwrap()).unwrap();
        let et0 = std_normal_quantile(student_t_cdf(1.0 / s, 2).unwrap()).unwrap();
        assert!((t - et).abs() < 1e-12);
        assert!((t0 - et0).abs() < 1e-12);
        let c = UnitObservations::new("c", vec![4.0; 4]);
        assert!(standardize_naive(&c, &Split::contiguous(4)).is_err());
    }

    #[test]
    fn batch_routes_small_units() {
        let units = vec![
            UnitObservations::new("a", vec![1.0, 0.5]),
            UnitObservations::new("b", vec![1.0, 0.5, 2.0]),
            UnitObservations::new("c", vec![1.0, 0.5, 2.0, -1.0, 0.3]),
        ];
        let pairs = construct_one_sample_batch(&units, 4).unwrap();
        assert_eq!(pairs.len(), 3);
        assert!(pairs.iter().all(|p| p.t.is_finite() && p.t0.is_finite()));
        let too_small = vec![UnitObservations::new("z", vec![1.0])];
        assert!(construct_one_sample_batch(&too_small, 4).is_err());
    }

    #[test]
    fn preprocess_hand_example() {
        let before: Vec<_> = (0..3)
            .map(|i| UnitObservations::new(format!("g{i}"), vec![0.0, 0.0]))
            .collect();
        let after = vec![
            UnitObservations::new("g0", vec![1.0, 1.0]),
            UnitObservations::new("g1", vec![2.0, 2.0]),
            UnitObservations::new("g2", vec![3.0, 3.0]),
        ];
        let out = preprocess_paired(&before, &after).unwrap();
        let vals: Vec<Vec<f64>> = out.into_iter().map(|u| u.values).collect();
        assert_eq!(vals, vec![vec![-1.0, -1.0], vec![0.0, 0.0], vec![1.0, 1.0]]);
    }

    #[test]
    fn preprocess_absorbs_constant_shift() {
        let before = vec![
            UnitObservations::new("a", vec![0.5, 1.5, 2.0]),
            UnitObservations::new("b", vec![-0.5, 0.25, 3.0]),
            UnitObservations::new("c", vec![1.0, 1.0, 1.0]),
            UnitObservations::new("d", vec![2.0, 0.0, -2.0]),
        ];
        let after = vec![
            UnitObservations::new("a", vec![1.5, 1.0, 2.25]),
            UnitObservations::new("b", vec![0.5, 0.25, 3.5]),
            UnitObservations::new("c", vec![1.0, 2.0, 0.0]),
            UnitObservations::new("d", vec![2.5, 0.5, -1.0]),
        ];
        let shifted: Vec<_> = after
            .iter()
            .map(|u| UnitObservations::new(u.id.clone(), u.values.iter().map(|v| v + 4.0).collect()))
            .collect();
        let a = preprocess_paired(&before, &after).unwrap();
        let b = preprocess_paired(&before, &shifted).unwrap();
        for (x, y) in a.iter().zip(&b) {
            for (p, q) in x.values.iter().zip(&y.values) {
                assert!((p - q).abs() < 1e-12);
            }
        }
        let same = preprocess_paired(&before, &before).unwrap();
        assert!(same.iter().all(|u| u.values.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn preprocess_shape_mismatch() {
        let a = vec![UnitObservations::new("a", vec![1.0, 2.0])];
        let b = vec![UnitObservations::new("a", vec![1.0])];
        assert!(matches!(preprocess_paired(&a, &b), Err(Error::ShapeMismatch(_))));
        assert!(preprocess_paired(&a, &[]).is_err());
    }
}
