//! Mirror thresholding, e-values, e-BH and derandomized aggregation.

use rayon::prelude::*;

use crate::construct::{CalibratedPair, Dataset};
use crate::density::{DensityModel, NullEstimator};
use crate::error::{Error, Result};
use crate::scoring::{mirror_statistics, score, Antisym, ScoreSet};
use crate::seeds::derive_seed;

/// Relative slack for the e-BH comparison `i·e₍ᵢ₎/m ≥ 1/α`. The e-values are
/// quotients `m/(1+k)`, so the product picks up a few rounding errors that
/// would otherwise flip exact ties.
const EBH_SLACK: f64 = 1e-12;

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha <= 1.0 {
        Ok(())
    } else {
        Err(Error::Domain {
            what: "alpha",
            value: alpha,
        })
    }
}

/// `τ = inf{λ ∈ {|Gᵢ|} : (1 + #{G ≤ -λ}) / #{G ≥ λ} ≤ α}`, `∞` if no candidate
/// qualifies. Zero statistics are not candidates and are counted on neither
/// side.
pub fn bc_threshold(g: &[f64], alpha: f64) -> f64 {
    let mut pos: Vec<f64> = g.iter().copied().filter(|&x| x > 0.0).collect();
    let mut neg: Vec<f64> = g.iter().filter(|&&x| x < 0.0).map(|x| -x).collect();
    pos.sort_by(f64::total_cmp);
    neg.sort_by(f64::total_cmp);
    let mut candidates: Vec<f64> = pos.iter().chain(&neg).copied().collect();
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();
    for lambda in candidates {
        let above = pos.len() - pos.partition_point(|&x| x < lambda);
        if above == 0 {
            break;
        }
        let below = neg.len() - neg.partition_point(|&x| x < lambda);
        if (1 + below) as f64 / above as f64 <= alpha {
            return lambda;
        }
    }
    f64::INFINITY
}

/// Indices with `Gᵢ ≥ τ`.
pub fn mirror_rejections(g: &[f64], tau: f64) -> Vec<usize> {
    if tau.is_infinite() {
        return Vec::new();
    }
    (0..g.len()).filter(|&i| g[i] >= tau).collect()
}

/// `eᵢ = m·𝕀(Gᵢ ≥ τ) / (1 + #{G ≤ -τ})`.
pub fn e_values(g: &[f64], tau: f64, m: usize) -> Vec<f64> {
    if tau.is_infinite() {
        return vec![0.0; g.len()];
    }
    let below = g.iter().filter(|&&x| x <= -tau).count();
    let e = m as f64 / (1 + below) as f64;
    g.iter().map(|&x| if x >= tau { e } else { 0.0 }).collect()
}

/// e-BH: with `k̂ = max{i : i·e₍ᵢ₎/m ≥ 1/α}`, reject every unit with
/// `eᵢ ≥ e₍k̂₎`.
pub fn e_bh(e: &[f64], alpha: f64) -> Vec<usize> {
    let m = e.len() as f64;
    let mut sorted: Vec<f64> = e.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let bound = (1.0 / alpha) * (1.0 - EBH_SLACK);
    let k_hat = (1..=sorted.len())
        .rev()
        .find(|&i| sorted[i - 1] > 0.0 && i as f64 * sorted[i - 1] / m >= bound);
    match k_hat {
        None => Vec::new(),
        Some(k) => {
            let cut = sorted[k - 1];
            (0..e.len()).filter(|&i| e[i] >= cut).collect()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RejectionResult {
    pub tau: f64,
    pub rejected: Vec<usize>,
    pub e_values: Vec<f64>,
}

impl RejectionResult {
    pub fn from_mirror(g: &[f64], alpha: f64) -> Self {
        let tau = bc_threshold(g, alpha);
        Self {
            tau,
            rejected: mirror_rejections(g, tau),
            e_values: e_values(g, tau, g.len()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensConfig {
    pub alpha: f64,
    pub null: NullEstimator,
    pub antisym: Antisym,
}

impl Default for SensConfig {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            null: NullEstimator::default(),
            antisym: Antisym::Exponential,
        }
    }
}

/// Everything produced by one SENS run.
#[derive(Debug, Clone)]
pub struct SensRun {
    pub pairs: Vec<CalibratedPair>,
    pub scores: ScoreSet,
    pub g: Vec<f64>,
    pub result: RejectionResult,
}

/// Density fit, scores, mirror statistics and mirror threshold on one set of
/// pairs.
pub fn sens_run(pairs: Vec<CalibratedPair>, config: &SensConfig) -> Result<SensRun> {
    check_alpha(config.alpha)?;
    let model = DensityModel::fit(&pairs, config.null)?;
    let scores = score(&model, &pairs);
    let g = mirror_statistics(&scores, config.antisym);
    let result = RejectionResult::from_mirror(&g, config.alpha);
    Ok(SensRun {
        pairs,
        scores,
        g,
        result,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DerandConfig {
    pub per_run_alpha: Vec<f64>,
    pub target_alpha: f64,
}

impl DerandConfig {
    pub const DEFAULT_RUNS: usize = 10;
    pub const DEFAULT_ALPHA_FRACTION: f64 = 0.5;

    /// `n_runs` runs, each at level `alpha_fraction · target_alpha`.
    pub fn uniform(n_runs: usize, alpha_fraction: f64, target_alpha: f64) -> Result<Self> {
        if n_runs == 0 {
            return Err(Error::Config("derandomization needs at least one run".into()));
        }
        let config = Self {
            per_run_alpha: vec![alpha_fraction * target_alpha; n_runs],
            target_alpha,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn n_runs(&self) -> usize {
        self.per_run_alpha.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.per_run_alpha.is_empty() {
            return Err(Error::Config("derandomization needs at least one run".into()));
        }
        check_alpha(self.target_alpha)?;
        for &a in &self.per_run_alpha {
            if !(a > 0.0 && a < 1.0) {
                return Err(Error::Domain {
                    what: "per-run alpha",
                    value: a,
                });
            }
        }
        Ok(())
    }
}

/// Per-unit mean across runs. Each unit's values are summed in sorted order,
/// so the result does not depend on the order of the runs.
pub fn average_e_values(runs: &[Vec<f64>]) -> Result<Vec<f64>> {
    let Some(first) = runs.first() else {
        return Ok(Vec::new());
    };
    let m = first.len();
    if runs.iter().any(|r| r.len() != m) {
        return Err(Error::ShapeMismatch("e-value runs differ in length".into()));
    }
    let n = runs.len() as f64;
    Ok((0..m)
        .map(|i| {
            let mut col: Vec<f64> = runs.iter().map(|r| r[i]).collect();
            col.sort_by(f64::total_cmp);
            col.iter().sum::<f64>() / n
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct DerandResult {
    pub e_bar: Vec<f64>,
    pub rejected: Vec<usize>,
    pub run_rejections: Vec<usize>,
}

/// Seed of derandomization run `k` under master seed `seed`.
pub fn derand_run_seed(seed: u64, k: usize) -> u64 {
    derive_seed(seed, &[k as u64])
}

/// Runs SENS `N` times on fresh splits, averages the e-values and applies
/// e-BH at the target level. `sens.alpha` is ignored in favour of the
/// per-run levels.
pub fn derandomized_sens(
    data: &Dataset,
    config: &DerandConfig,
    sens: &SensConfig,
    seed: u64,
) -> Result<DerandResult> {
    config.validate()?;
    let runs: Vec<RejectionResult> = config
        .per_run_alpha
        .par_iter()
        .enumerate()
        .map(|(k, &alpha)| {
            let pairs = data.construct(derand_run_seed(seed, k))?;
            let run_config = SensConfig { alpha, ..*sens };
            Ok(sens_run(pairs, &run_config)?.result)
        })
        .collect::<Result<_>>()?;
    let e: Vec<Vec<f64>> = runs.iter().map(|r| r.e_values.clone()).collect();
    let e_bar = average_e_values(&e)?;
    let rejected = e_bh(&e_bar, config.target_alpha);
    Ok(DerandResult {
        e_bar,
        rejected,
        run_rejections: runs.iter().map(|r| r.rejected.len()).collect(),
    })
}

/// Conformal p-values `(1 + #{calib < test}) / (1 + |calib|)`.
pub fn conformal_p_values(test: &[f64], calib: &[f64]) -> Result<Vec<f64>> {
    if calib.is_empty() {
        return Err(Error::DegenerateSample("empty calibration set"));
    }
    let mut c = calib.to_vec();
    c.sort_by(f64::total_cmp);
    let denom = (1 + c.len()) as f64;
    Ok(test
        .iter()
        .map(|&s| (1 + c.partition_point(|&x| x < s)) as f64 / denom)
        .collect())
}
