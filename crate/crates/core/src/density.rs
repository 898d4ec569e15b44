//! Swap-invariant density estimates for the score function.
//!
//! `f_mix` is a Gaussian kernel estimate on the pooled sample `(T, T⁰)`. The
//! working null `f₀` is either a zero-symmetric kernel estimate on the
//! filtered sample (keep the smaller-magnitude member of each pair) or a
//! Gaussian fitted by the Jin-Cai characteristic-function method.
//!
//! Centers are stored sorted and every sum runs in that order, so evaluations
//! depend only on the pooled multiset: swapping any `T_i` with `T⁰_i` leaves
//! them bit-identical.

use std::f64::consts::PI;

use crate::construct::CalibratedPair;
use crate::error::{Error, Result};
use crate::special::{gaussian_kernel, std_normal_sf};

/// Beyond this many bandwidths `exp(-u²/2)` is exactly `0.0` in `f64`, so
/// skipping those centers does not change any sum.
const KERNEL_CUTOFF: f64 = 38.7;

/// Gaussian kernel density estimate, optionally reflected through zero.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelDensity {
    centers: Vec<f64>,
    bandwidth: f64,
    reflect_through_zero: bool,
}

impl KernelDensity {
    pub fn new(mut centers: Vec<f64>, bandwidth: f64, reflect_through_zero: bool) -> Result<Self> {
        if centers.is_empty() {
            return Err(Error::DegenerateSample("no kernel centers"));
        }
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(Error::Domain {
                what: "bandwidth",
                value: bandwidth,
            });
        }
        centers.sort_by(f64::total_cmp);
        Ok(Self {
            centers,
            bandwidth,
            reflect_through_zero,
        })
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn reflect_through_zero(&self) -> bool {
        self.reflect_through_zero
    }

    // Σ_c K((t - c)/h) over sorted centers, skipping exact-zero terms.
    fn kernel_sum(&self, t: f64) -> f64 {
        let w = KERNEL_CUTOFF * self.bandwidth;
        let lo = self.centers.partition_point(|&c| c < t - w);
        let hi = self.centers.partition_point(|&c| c <= t + w);
        self.centers[lo..hi]
            .iter()
            .map(|&c| gaussian_kernel((t - c) / self.bandwidth))
            .sum()
    }

    pub fn evaluate(&self, t: f64) -> f64 {
        let n = self.centers.len() as f64;
        if self.reflect_through_zero {
            // Σ K((t + c)/h) is the plain sum evaluated at -t.
            (self.kernel_sum(t) + self.kernel_sum(-t)) / (2.0 * n * self.bandwidth)
        } else {
            self.kernel_sum(t) / (n * self.bandwidth)
        }
    }
}

/// Filtered sample: per pair, the member with the smaller magnitude
/// (ties keep `T`).
pub fn filter_pairs(pairs: &[CalibratedPair]) -> Vec<f64> {
    pairs
        .iter()
        .map(|p| if p.t.abs() <= p.t0.abs() { p.t } else { p.t0 })
        .collect()
}

fn sorted(sample: &[f64]) -> Vec<f64> {
    let mut v = sample.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

// Linear-interpolation quantile of a sorted sample.
fn quantile_sorted(x: &[f64], p: f64) -> f64 {
    let pos = p * (x.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    x[lo] + (pos - lo as f64) * (x[hi] - x[lo])
}

/// Silverman's rule of thumb, `0.9 · min(sd, IQR/1.34) · n^{-1/5}`.
///
/// Computed from the sorted sample, so any permutation of the input gives
/// the same bits. A zero IQR falls back to the standard deviation.
pub fn silverman_bandwidth(sample: &[f64]) -> Result<f64> {
    if sample.len() < 2 {
        return Err(Error::DegenerateSample("bandwidth needs two points"));
    }
    let x = sorted(sample);
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    let sd = var.sqrt();
    if !(sd > 0.0 && sd.is_finite()) {
        return Err(Error::DegenerateSample("zero spread"));
    }
    let iqr = quantile_sorted(&x, 0.75) - quantile_sorted(&x, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    Ok(0.9 * spread * n.powf(-0.2))
}

/// Mixture density estimate on the pooled sample `(T, T⁰)`.
pub fn estimate_f_mix(pairs: &[CalibratedPair]) -> Result<KernelDensity> {
    let pooled: Vec<f64> = pairs.iter().flat_map(|p| [p.t, p.t0]).collect();
    let h = silverman_bandwidth(&pooled)?;
    KernelDensity::new(pooled, h, false)
}

/// Zero-symmetric kernel estimate of the null density from the filtered
/// sample. The bandwidth is chosen on the reflected sample `(T̃⁰, -T̃⁰)`.
pub fn estimate_f0_kernel(filtered: &[f64]) -> Result<KernelDensity> {
    let reflected: Vec<f64> = filtered.iter().flat_map(|&v| [v, -v]).collect();
    let h = silverman_bandwidth(&reflected)?;
    KernelDensity::new(filtered.to_vec(), h, true)
}

/// Gaussian empirical null `N(μ̂₀, σ̂₀²)` from the Jin-Cai estimator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JinCaiNull {
    pub mu0: f64,
    pub sigma0: f64,
    pub gamma: f64,
    pub t_hat: f64,
    /// `false` when `|φ|` never reached the target level and `t̂` fell back to
    /// the end of the search interval.
    pub crossing_found: bool,
}

impl JinCaiNull {
    pub fn evaluate(&self, x: f64) -> f64 {
        let z = (x - self.mu0) / self.sigma0;
        gaussian_kernel(z) / self.sigma0
    }
}

/// Empirical characteristic function of a sample and its derivative at `t`.
#[derive(Debug, Clone, Copy)]
pub struct EcfPoint {
    pub re: f64,
    pub im: f64,
    pub d_re: f64,
    pub d_im: f64,
}

impl EcfPoint {
    pub fn modulus(&self) -> f64 {
        self.re.hypot(self.im)
    }
}

pub fn ecf(sample: &[f64], t: f64) -> EcfPoint {
    let n = sample.len() as f64;
    let (mut re, mut im, mut d_re, mut d_im) = (0.0, 0.0, 0.0, 0.0);
    for &x in sample {
        let (s, c) = (t * x).sin_cos();
        re += c;
        im += s;
        d_re -= x * s;
        d_im += x * c;
    }
    EcfPoint {
        re: re / n,
        im: im / n,
        d_re: d_re / n,
        d_im: d_im / n,
    }
}

/// `(σ₀²(t), μ₀(t))` from the characteristic function and its derivative.
pub fn jin_cai_moments(p: &EcfPoint, t: f64) -> (f64, f64) {
    let modulus = p.modulus();
    let d_modulus = (p.re * p.d_re + p.im * p.d_im) / modulus;
    let var = -d_modulus / (t * modulus);
    let mu = (p.re * p.d_im - p.d_re * p.im) / (modulus * modulus);
    (var, mu)
}

const JC_GRID: usize = 2000;
const JC_BISECT: usize = 60;

/// Fits the Jin-Cai Gaussian null to a pooled sample.
///
/// `t̂` is the first point in `[0, ln N]` where `|φ_N(t)| = N^{-γ}`: located on
/// a uniform grid and refined by bisection. Without a crossing, `t̂ = ln N`.
pub fn jin_cai_fit(pooled: &[f64], gamma: f64) -> Result<JinCaiNull> {
    if !(gamma > 0.0 && gamma < 0.5) {
        return Err(Error::Domain {
            what: "Jin-Cai gamma",
            value: gamma,
        });
    }
    if pooled.len() < 10 {
        return Err(Error::DegenerateSample("Jin-Cai needs at least 10 points"));
    }
    let x = sorted(pooled);
    let n = x.len() as f64;
    let target = n.powf(-gamma);
    let t_max = n.ln();
    let step = t_max / (JC_GRID - 1) as f64;

    let mut bracket = None;
    for k in 1..JC_GRID {
        let t = k as f64 * step;
        if ecf(&x, t).modulus() <= target {
            bracket = Some(((k - 1) as f64 * step, t));
            break;
        }
    }
    let (t_hat, crossing_found) = match bracket {
        Some((mut lo, mut hi)) => {
            for _ in 0..JC_BISECT {
                let mid = 0.5 * (lo + hi);
                if ecf(&x, mid).modulus() > target {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            (0.5 * (lo + hi), true)
        }
        None => (t_max, false),
    };
    let (var, mu) = jin_cai_moments(&ecf(&x, t_hat), t_hat);
    if !(var > 0.0 && var.is_finite() && mu.is_finite()) {
        return Err(Error::DegenerateSample("Jin-Cai variance estimate not positive"));
    }
    Ok(JinCaiNull {
        mu0: mu,
        sigma0: var.sqrt(),
        gamma,
        t_hat,
        crossing_found,
    })
}

/// Filtering-bias-corrected null density
/// `f̂₀(x) = f̂(x) / (2 √(1 - 2∫₀^{|x|} f̂))` built on a reflected kernel
/// estimate of the filtered sample.
///
/// The integral of the reflected Gaussian kernel estimate is available in
/// closed form, and `1 - 2∫₀^{|x|} f̂` reduces to an average of normal tail
/// probabilities, so the radicand is evaluated without cancellation.
#[derive(Debug, Clone, PartialEq)]
pub struct BiasCorrectedDensity {
    base: KernelDensity,
}

impl BiasCorrectedDensity {
    pub fn base(&self) -> &KernelDensity {
        &self.base
    }

    /// `1 - 2∫₀^{|x|} f̂(t) dt`.
    pub fn radicand(&self, x: f64) -> f64 {
        let x = x.abs();
        let h = self.base.bandwidth;
        let n = self.base.centers.len() as f64;
        self.base
            .centers
            .iter()
            .map(|&c| std_normal_sf((x - c) / h) + std_normal_sf((x + c) / h))
            .sum::<f64>()
            / n
    }

    pub fn try_evaluate(&self, x: f64) -> Result<f64> {
        let r = self.radicand(x);
        if !(r > 0.0) {
            return Err(Error::Singular { x, radicand: r });
        }
        Ok(self.base.evaluate(x) / (2.0 * r.sqrt()))
    }
}

/// Bias correction of a zero-symmetric kernel estimate of the filtered law.
pub fn bias_correct_f0(filtered_density: KernelDensity) -> Result<BiasCorrectedDensity> {
    if !filtered_density.reflect_through_zero {
        return Err(Error::Config(
            "bias correction needs a zero-symmetric kernel estimate".into(),
        ));
    }
    Ok(BiasCorrectedDensity {
        base: filtered_density,
    })
}

/// The fitted working null used by the score function.
#[derive(Debug, Clone, PartialEq)]
pub enum NullDensity {
    Kernel(KernelDensity),
    JinCai(JinCaiNull),
    BiasCorrected(BiasCorrectedDensity),
}

impl NullDensity {
    /// Density value. In the far tail of the bias-corrected estimate both the
    /// base density and the radicand underflow; the value there is `0`.
    pub fn evaluate(&self, t: f64) -> f64 {
        match self {
            Self::Kernel(k) => k.evaluate(t),
            Self::JinCai(j) => j.evaluate(t),
            Self::BiasCorrected(b) => b.try_evaluate(t).unwrap_or(0.0),
        }
    }
}

/// Which working-null estimator to fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NullEstimator {
    /// Zero-symmetric kernel estimate on the filtered sample.
    Kernel { bias_correct: bool },
    /// Jin-Cai Gaussian fit on the pooled sample.
    JinCai { gamma: f64 },
}

impl Default for NullEstimator {
    fn default() -> Self {
        Self::Kernel {
            bias_correct: false,
        }
    }
}

pub const DEFAULT_JC_GAMMA: f64 = 0.1;

/// Fitted `f_mix` and `f₀` for one set of pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityModel {
    pub f_mix: KernelDensity,
    pub f0: NullDensity,
}

impl DensityModel {
    pub fn fit(pairs: &[CalibratedPair], estimator: NullEstimator) -> Result<Self> {
        let f_mix = estimate_f_mix(pairs)?;
        let f0 = match estimator {
            NullEstimator::Kernel { bias_correct } => {
                let k = estimate_f0_kernel(&filter_pairs(pairs))?;
                if bias_correct {
                    NullDensity::BiasCorrected(bias_correct_f0(k)?)
                } else {
                    NullDensity::Kernel(k)
                }
            }
            NullEstimator::JinCai { gamma } => {
                let pooled: Vec<f64> = pairs.iter().flat_map(|p| [p.t, p.t0]).collect();
                NullDensity::JinCai(jin_cai_fit(&pooled, gamma)?)
            }
        };
        Ok(Self { f_mix, f0 })
    }
}

/// Normal density with mean `mu` and standard deviation `sigma`.
pub fn normal_density(x: f64, mu: f64, sigma: f64) -> f64 {
    let z = (x - mu) / sigma;
    (-0.5 * z * z).exp() / (sigma * (2.0 * PI).sqrt())
}
