//! Method registry shared by the simulation harness and the command line.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::baselines::{
    bh_procedure, p_from_null, sf_bh, st_bc, t_statistics, z_values_full_sample, PValueSource,
};
use crate::construct::{CalibratedPair, Dataset};
use crate::density::{jin_cai_fit, DensityModel, NullEstimator, DEFAULT_JC_GAMMA};
use crate::error::{Error, Result};
use crate::fdr::{
    conformal_p_values, derandomized_sens, sens_run, DerandConfig, SensConfig,
};
use crate::scoring::{score, Antisym};
use crate::seeds::{derive_seed, label_hash};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    SensKn,
    SensJc,
    /// Derandomized SENS with the kernel null.
    DsensKn,
    /// Derandomized SENS with the Jin-Cai null.
    DsensJc,
    BhTn,
    BhEen,
    SfBh,
    StBc,
    CfBh,
}

impl Method {
    pub const ALL: [Method; 9] = [
        Method::SensKn,
        Method::SensJc,
        Method::DsensKn,
        Method::DsensJc,
        Method::BhTn,
        Method::BhEen,
        Method::SfBh,
        Method::StBc,
        Method::CfBh,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Method::SensKn => "sens-kn",
            Method::SensJc => "sens-jc",
            Method::DsensKn => "dsens-kn",
            Method::DsensJc => "dsens-jc",
            Method::BhTn => "bh-tn",
            Method::BhEen => "bh-een",
            Method::SfBh => "sfbh",
            Method::StBc => "stbc",
            Method::CfBh => "cfbh",
        }
    }

    /// Whether the output depends on random splits or resamples.
    pub fn is_randomized(self) -> bool {
        !matches!(self, Method::BhTn | Method::BhEen | Method::StBc)
    }

    /// Whether the method can run on ready-made `(T, T⁰)` pairs.
    pub fn runs_on_pairs(self) -> bool {
        matches!(self, Method::SensKn | Method::SensJc | Method::CfBh)
    }

    pub fn valid_ids() -> String {
        Self::ALL.iter().map(|m| m.id()).collect::<Vec<_>>().join(", ")
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.id() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown method {s:?}; valid ids: {}",
                    Self::valid_ids()
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodOptions {
    pub alpha: f64,
    pub jc_gamma: f64,
    pub bias_correct: bool,
    pub antisym: Antisym,
    pub derand_runs: usize,
    pub derand_alpha_fraction: f64,
    pub sfbh_b: usize,
}

impl Default for MethodOptions {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            jc_gamma: DEFAULT_JC_GAMMA,
            bias_correct: false,
            antisym: Antisym::Exponential,
            derand_runs: DerandConfig::DEFAULT_RUNS,
            derand_alpha_fraction: DerandConfig::DEFAULT_ALPHA_FRACTION,
            sfbh_b: 1000,
        }
    }
}

impl MethodOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if !(self.jc_gamma > 0.0 && self.jc_gamma < 0.5) {
            return Err(Error::Config(format!(
                "Jin-Cai gamma must lie in (0, 0.5), got {}",
                self.jc_gamma
            )));
        }
        if self.derand_runs == 0 {
            return Err(Error::Config("derandomization needs at least one run".into()));
        }
        if !(self.derand_alpha_fraction > 0.0 && self.derand_alpha_fraction * self.alpha < 1.0) {
            return Err(Error::Config(format!(
                "invalid derandomization alpha fraction {}",
                self.derand_alpha_fraction
            )));
        }
        if self.sfbh_b == 0 {
            return Err(Error::Config("sign-flip resamples must be at least 1".into()));
        }
        Ok(())
    }

    fn sens_config(&self, method: Method) -> SensConfig {
        let null = match method {
            Method::SensJc | Method::DsensJc => NullEstimator::JinCai {
                gamma: self.jc_gamma,
            },
            _ => NullEstimator::Kernel {
                bias_correct: self.bias_correct,
            },
        };
        SensConfig {
            alpha: self.alpha,
            null,
            antisym: self.antisym,
        }
    }
}

/// Rejections of one method run. `evidence` ranks units (larger means
/// stronger evidence against the null).
#[derive(Debug, Clone, PartialEq)]
pub struct MethodOutput {
    pub rejected: Vec<usize>,
    pub evidence: Vec<f64>,
}

/// Runs a SENS-type or conformal method on ready-made pairs.
pub fn run_on_pairs(
    method: Method,
    pairs: Vec<CalibratedPair>,
    opts: &MethodOptions,
) -> Result<MethodOutput> {
    match method {
        Method::SensKn | Method::SensJc => {
            let run = sens_run(pairs, &opts.sens_config(method))?;
            Ok(MethodOutput {
                rejected: run.result.rejected,
                evidence: run.g,
            })
        }
        Method::CfBh => {
            let sens = opts.sens_config(Method::SensKn);
            let model = DensityModel::fit(&pairs, sens.null)?;
            let s = score(&model, &pairs);
            let p = conformal_p_values(&s.u, &s.u0)?;
            Ok(MethodOutput {
                rejected: bh_procedure(&p, opts.alpha),
                evidence: p.iter().map(|v| -v).collect(),
            })
        }
        other => Err(Error::Config(format!(
            "method {other} needs raw observations, not pairs"
        ))),
    }
}

/// Runs `method` on raw data. `seed` drives every split and resample.
pub fn run_method(
    method: Method,
    data: &Dataset,
    opts: &MethodOptions,
    seed: u64,
) -> Result<MethodOutput> {
    opts.validate()?;
    match method {
        Method::SensKn | Method::SensJc | Method::CfBh => {
            run_on_pairs(method, data.construct(seed)?, opts)
        }
        Method::DsensKn | Method::DsensJc => {
            let config = DerandConfig::uniform(
                opts.derand_runs,
                opts.derand_alpha_fraction,
                opts.alpha,
            )?;
            let d = derandomized_sens(data, &config, &opts.sens_config(method), seed)?;
            Ok(MethodOutput {
                rejected: d.rejected,
                evidence: d.e_bar,
            })
        }
        Method::BhTn | Method::BhEen => {
            let z = z_values_full_sample(data)?;
            let p = if method == Method::BhTn {
                p_from_null(&z, 0.0, 1.0, PValueSource::TheoreticalNull)?
            } else {
                let fit = jin_cai_fit(&z, opts.jc_gamma)?;
                p_from_null(&z, fit.mu0, fit.sigma0, PValueSource::EstimatedNull)?
            };
            Ok(MethodOutput {
                rejected: bh_procedure(&p.p, opts.alpha),
                evidence: p.p.iter().map(|v| -v).collect(),
            })
        }
        Method::SfBh => {
            let (p, rejected) = sf_bh(data, opts.sfbh_b, opts.alpha, seed)?;
            Ok(MethodOutput {
                rejected,
                evidence: p.p.iter().map(|v| -v).collect(),
            })
        }
        Method::StBc => {
            let (t, _, rejected) = st_bc(data, opts.alpha)?;
            Ok(MethodOutput {
                rejected,
                evidence: t,
            })
        }
    }
}

/// Full per-unit output of one analysis run.
#[derive(Debug, Clone, PartialEq)]
pub struct Analysis {
    pub method: Method,
    /// Named per-unit columns, in output order.
    pub columns: Vec<(&'static str, Vec<f64>)>,
    pub rejected: Vec<usize>,
    /// Mirror threshold, for methods that have one.
    pub tau: Option<f64>,
    /// Units whose scale estimate was zero.
    pub degenerate: usize,
    /// Rejection counts of the individual runs of a derandomized method.
    pub run_rejections: Option<Vec<usize>>,
    pub notes: Vec<(&'static str, String)>,
}

impl Analysis {
    fn new(method: Method) -> Self {
        Self {
            method,
            columns: Vec::new(),
            rejected: Vec::new(),
            tau: None,
            degenerate: 0,
            run_rejections: None,
            notes: Vec::new(),
        }
    }
}

fn pair_columns(pairs: &[CalibratedPair]) -> [(&'static str, Vec<f64>); 2] {
    [
        ("t", pairs.iter().map(|p| p.t).collect()),
        ("t0", pairs.iter().map(|p| p.t0).collect()),
    ]
}

/// Like [`run_method`], but keeps every per-unit quantity the method
/// computes.
pub fn analyze(method: Method, data: &Dataset, opts: &MethodOptions, seed: u64) -> Result<Analysis> {
    opts.validate()?;
    let mut a = Analysis::new(method);
    if matches!(data, Dataset::TwoSample(_))
        && matches!(method, Method::BhTn | Method::BhEen | Method::StBc)
    {
        a.notes.push((
            "dof",
            "two-sample t statistics are pooled with n_x + n_y - 2 degrees of freedom".into(),
        ));
    }
    match method {
        Method::SensKn | Method::SensJc => {
            let run = sens_run(data.construct(seed)?, &opts.sens_config(method))?;
            a.degenerate = run.pairs.iter().filter(|p| p.degenerate).count();
            a.columns.extend(pair_columns(&run.pairs));
            a.columns.push(("u", run.scores.u));
            a.columns.push(("u0", run.scores.u0));
            a.columns.push(("g", run.g));
            a.columns.push(("e", run.result.e_values));
            a.tau = Some(run.result.tau);
            a.rejected = run.result.rejected;
        }
        Method::CfBh => {
            let pairs = data.construct(seed)?;
            let model = DensityModel::fit(&pairs, opts.sens_config(Method::SensKn).null)?;
            let s = score(&model, &pairs);
            let p = conformal_p_values(&s.u, &s.u0)?;
            a.degenerate = pairs.iter().filter(|p| p.degenerate).count();
            a.rejected = bh_procedure(&p, opts.alpha);
            a.columns.extend(pair_columns(&pairs));
            a.columns.push(("u", s.u));
            a.columns.push(("u0", s.u0));
            a.columns.push(("p", p));
        }
        Method::DsensKn | Method::DsensJc => {
            let config = DerandConfig::uniform(
                opts.derand_runs,
                opts.derand_alpha_fraction,
                opts.alpha,
            )?;
            let d = derandomized_sens(data, &config, &opts.sens_config(method), seed)?;
            a.columns.push(("e", d.e_bar));
            a.rejected = d.rejected;
            a.run_rejections = Some(d.run_rejections);
        }
        Method::BhTn | Method::BhEen => {
            let z = z_values_full_sample(data)?;
            let p = if method == Method::BhTn {
                p_from_null(&z, 0.0, 1.0, PValueSource::TheoreticalNull)?
            } else {
                let fit = jin_cai_fit(&z, opts.jc_gamma)?;
                a.notes.push(("null_mu0", fit.mu0.to_string()));
                a.notes.push(("null_sigma0", fit.sigma0.to_string()));
                if !fit.crossing_found {
                    a.notes.push(("null_fit", "no crossing found; t-hat set to ln N".into()));
                }
                p_from_null(&z, fit.mu0, fit.sigma0, PValueSource::EstimatedNull)?
            };
            a.rejected = bh_procedure(&p.p, opts.alpha);
            a.columns.push(("z", z));
            a.columns.push(("p", p.p));
        }
        Method::SfBh => {
            let t = t_statistics(data)?.into_iter().map(|(t, _)| t).collect();
            let (p, rejected) = sf_bh(data, opts.sfbh_b, opts.alpha, seed)?;
            a.columns.push(("t", t));
            a.columns.push(("p", p.p));
            a.rejected = rejected;
        }
        Method::StBc => {
            let (t, tau, rejected) = st_bc(data, opts.alpha)?;
            a.columns.push(("t", t));
            a.tau = Some(tau);
            a.rejected = rejected;
        }
    }
    Ok(a)
}

/// Discovery counts and per-unit rejection frequencies over repeated runs of
/// a randomized method.
#[derive(Debug, Clone, PartialEq)]
pub struct RepeatSummary {
    pub counts: Vec<usize>,
    pub frequency: Vec<f64>,
}

impl RepeatSummary {
    pub fn mean_discoveries(&self) -> f64 {
        self.counts.iter().sum::<usize>() as f64 / self.counts.len() as f64
    }

    pub fn sd_discoveries(&self) -> f64 {
        let n = self.counts.len();
        if n < 2 {
            return 0.0;
        }
        let mean = self.mean_discoveries();
        let ss: f64 = self.counts.iter().map(|&c| (c as f64 - mean).powi(2)).sum();
        (ss / (n - 1) as f64).sqrt()
    }
}

/// Seed of repeat `r` under master seed `seed`.
pub fn repeat_seed(seed: u64, r: usize) -> u64 {
    derive_seed(seed, &[label_hash("repeat"), r as u64])
}

/// Runs a randomized method `repeats` times on independent splits.
pub fn repeat_analysis(
    method: Method,
    data: &Dataset,
    opts: &MethodOptions,
    seed: u64,
    repeats: usize,
) -> Result<RepeatSummary> {
    if !method.is_randomized() {
        return Err(Error::Config(format!(
            "method {method} is deterministic; repeats need a randomized method"
        )));
    }
    if repeats == 0 {
        return Err(Error::Config("repeats must be at least 1".into()));
    }
    let runs: Vec<Vec<usize>> = (0..repeats)
        .into_par_iter()
        .map(|r| run_method(method, data, opts, repeat_seed(seed, r)).map(|o| o.rejected))
        .collect::<Result<_>>()?;
    let mut hits = vec![0usize; data.len()];
    for &i in runs.iter().flatten() {
        hits[i] += 1;
    }
    Ok(RepeatSummary {
        counts: runs.iter().map(Vec::len).collect(),
        frequency: hits.iter().map(|&h| h as f64 / repeats as f64).collect(),
    })
}
