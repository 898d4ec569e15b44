//! Data generators, error metrics and the seeded replication runner.

use std::io::Write;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::construct::{CalibratedPair, Dataset, TwoSampleUnit, UnitObservations};
use crate::error::{Error, Result};
use crate::methods::{run_method, run_on_pairs, Method, MethodOptions, MethodOutput};
use crate::scoring::Antisym;
use crate::seeds::{derive_seed, label_hash};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OneSampleScenario {
    pub m: usize,
    pub n: usize,
    pub pi: f64,
    pub mu: f64,
    pub sigma_max: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwoSampleScenario {
    pub m: usize,
    pub n_x: usize,
    pub n_y: usize,
    pub pi_x: f64,
    pub pi_y: f64,
    pub mu_x: f64,
    pub mu_y: f64,
    pub sigma_x_max: f64,
    pub sigma_y_max: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SsmtScenario {
    pub m: usize,
    pub pi: f64,
    pub mu0: f64,
    pub mua: f64,
    pub sigma0: f64,
    pub rho: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Model {
    OneSample(OneSampleScenario),
    TwoSample(TwoSampleScenario),
    Ssmt(SsmtScenario),
}

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Config(msg()))
    }
}

fn check_prob(name: &str, v: f64) -> Result<()> {
    check((0.0..=1.0).contains(&v), || format!("{name} must lie in [0, 1], got {v}"))
}

fn check_sigma_max(name: &str, v: f64) -> Result<()> {
    check(v > 0.05 && v.is_finite(), || {
        format!("{name} must exceed 0.05, got {v}")
    })
}

impl Model {
    pub fn m(&self) -> usize {
        match self {
            Model::OneSample(s) => s.m,
            Model::TwoSample(s) => s.m,
            Model::Ssmt(s) => s.m,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check(self.m() >= 1, || "m must be at least 1".into())?;
        match self {
            Model::OneSample(s) => {
                check(s.n >= 2, || format!("n must be at least 2, got {}", s.n))?;
                check_prob("pi", s.pi)?;
                check_prob("beta", s.beta)?;
                check(s.mu.is_finite(), || "mu must be finite".into())?;
                check_sigma_max("sigma_max", s.sigma_max)
            }
            Model::TwoSample(s) => {
                check(s.n_x >= 4 && s.n_y >= 4, || {
                    format!("n_x and n_y must be at least 4, got {} and {}", s.n_x, s.n_y)
                })?;
                check_prob("pi_x", s.pi_x)?;
                check_prob("pi_y", s.pi_y)?;
                check_prob("beta", s.beta)?;
                check(s.mu_x.is_finite() && s.mu_y.is_finite(), || {
                    "mu_x and mu_y must be finite".into()
                })?;
                check_sigma_max("sigma_x_max", s.sigma_x_max)?;
                check_sigma_max("sigma_y_max", s.sigma_y_max)
            }
            Model::Ssmt(s) => {
                check_prob("pi", s.pi)?;
                check(s.rho.abs() < 1.0, || format!("|rho| must be below 1, got {}", s.rho))?;
                check(s.sigma0 > 0.0 && s.sigma0.is_finite(), || {
                    format!("sigma0 must be positive, got {}", s.sigma0)
                })?;
                check(s.mu0.is_finite() && s.mua.is_finite(), || {
                    "mu0 and mua must be finite".into()
                })
            }
        }
    }

    /// Sets a named parameter, as used by parameter sweeps.
    pub fn set(&mut self, name: &str, value: f64) -> Result<()> {
        fn int(name: &str, v: f64) -> Result<usize> {
            if v >= 0.0 && v.fract() == 0.0 && v <= u32::MAX as f64 {
                Ok(v as usize)
            } else {
                Err(Error::Config(format!("{name} must be a nonnegative integer, got {v}")))
            }
        }
        let unknown = || Error::Config(format!("unknown scenario parameter {name:?}"));
        match self {
            Model::OneSample(s) => match name {
                "m" => s.m = int(name, value)?,
                "n" => s.n = int(name, value)?,
                "pi" => s.pi = value,
                "mu" => s.mu = value,
                "sigma_max" => s.sigma_max = value,
                "beta" => s.beta = value,
                _ => return Err(unknown()),
            },
            Model::TwoSample(s) => match name {
                "m" => s.m = int(name, value)?,
                "n_x" => s.n_x = int(name, value)?,
                "n_y" => s.n_y = int(name, value)?,
                "pi_x" => s.pi_x = value,
                "pi_y" => s.pi_y = value,
                "mu_x" => s.mu_x = value,
                "mu_y" => s.mu_y = value,
                "sigma_x_max" => s.sigma_x_max = value,
                "sigma_y_max" => s.sigma_y_max = value,
                "beta" => s.beta = value,
                _ => return Err(unknown()),
            },
            Model::Ssmt(s) => match name {
                "m" => s.m = int(name, value)?,
                "pi" => s.pi = value,
                "mu0" => s.mu0 = value,
                "mua" => s.mua = value,
                "sigma0" => s.sigma0 = value,
                "rho" => s.rho = value,
                _ => return Err(unknown()),
            },
        }
        Ok(())
    }
}

/// `U(-√3σ, √3σ)`: variance `σ²`.
pub fn uniform_error<R: Rng + ?Sized>(rng: &mut R, sigma: f64) -> f64 {
    let a = 3f64.sqrt() * sigma;
    rng.random_range(-a..a)
}

/// `Laplace(0, σ/√2)` by inverse CDF: variance `σ²`.
pub fn laplace_error<R: Rng + ?Sized>(rng: &mut R, sigma: f64) -> f64 {
    let b = sigma / 2f64.sqrt();
    let u: f64 = rng.sample::<f64, _>(rand::distr::Open01) - 0.5;
    -b * u.signum() * (1.0 - 2.0 * u.abs()).ln()
}

pub fn normal_error<R: Rng + ?Sized>(rng: &mut R, sigma: f64) -> f64 {
    sigma * rng.sample::<f64, _>(rand_distr::StandardNormal)
}

/// Mixture `(1-β)N(0,σ²) + (3β/4)U(-√3σ, √3σ) + (β/4)Laplace(0, σ/√2)`.
pub fn mixture_error<R: Rng + ?Sized>(rng: &mut R, sigma: f64, beta: f64) -> f64 {
    let c: f64 = rng.random();
    if c < 1.0 - beta {
        normal_error(rng, sigma)
    } else if c < 1.0 - beta / 4.0 {
        uniform_error(rng, sigma)
    } else {
        laplace_error(rng, sigma)
    }
}

/// Generated data with ground truth (`true` = non-null).
#[derive(Debug, Clone)]
pub enum Instance {
    Raw { data: Dataset, truth: Vec<bool> },
    Pairs { pairs: Vec<CalibratedPair>, truth: Vec<bool> },
}

impl Instance {
    pub fn truth(&self) -> &[bool] {
        match self {
            Instance::Raw { truth, .. } | Instance::Pairs { truth, .. } => truth,
        }
    }
}

pub fn generate_one_sample<R: Rng + ?Sized>(s: &OneSampleScenario, rng: &mut R) -> (Vec<UnitObservations>, Vec<bool>) {
    let alt = Normal::new(-s.mu, s.mu.abs()).ok();
    let mut units = Vec::with_capacity(s.m);
    let mut truth = Vec::with_capacity(s.m);
    for i in 0..s.m {
        let sigma = rng.random_range(0.05..s.sigma_max);
        let mu = if rng.random::<f64>() < s.pi {
            alt.map_or(-s.mu, |d| d.sample(rng))
        } else {
            0.0
        };
        let values = (0..s.n).map(|_| mu + mixture_error(rng, sigma, s.beta)).collect();
        units.push(UnitObservations::new(format!("u{i}"), values));
        truth.push(mu != 0.0);
    }
    (units, truth)
}

pub fn generate_two_sample<R: Rng + ?Sized>(s: &TwoSampleScenario, rng: &mut R) -> (Vec<TwoSampleUnit>, Vec<bool>) {
    let mut units = Vec::with_capacity(s.m);
    let mut truth = Vec::with_capacity(s.m);
    for i in 0..s.m {
        let sx = rng.random_range(0.05..s.sigma_x_max);
        let sy = rng.random_range(0.05..s.sigma_y_max);
        let mx = if rng.random::<f64>() < s.pi_x { s.mu_x } else { 0.0 };
        let my = if rng.random::<f64>() < s.pi_y { s.mu_y } else { 0.0 };
        let x = (0..s.n_x).map(|_| mx + normal_error(rng, sx)).collect();
        let y = (0..s.n_y).map(|_| my + mixture_error(rng, sy, s.beta)).collect();
        units.push(TwoSampleUnit::new(format!("u{i}"), x, y));
        truth.push(mx != my);
    }
    (units, truth)
}

/// Bivariate normal pairs with means `(μᵢ, μ₀)`, common variance `σ₀²` and
/// correlation `ρ`; `μᵢ = μₐ` with probability `π`, else `μ₀`.
pub fn generate_ssmt<R: Rng + ?Sized>(s: &SsmtScenario, rng: &mut R) -> (Vec<CalibratedPair>, Vec<bool>) {
    let mut pairs = Vec::with_capacity(s.m);
    let mut truth = Vec::with_capacity(s.m);
    let r = (1.0 - s.rho * s.rho).sqrt();
    for i in 0..s.m {
        let alt = rng.random::<f64>() < s.pi;
        let mu = if alt { s.mua } else { s.mu0 };
        let z1: f64 = rng.sample(rand_distr::StandardNormal);
        let z2: f64 = rng.sample(rand_distr::StandardNormal);
        let t0 = s.mu0 + s.sigma0 * z1;
        let t = mu + s.sigma0 * (s.rho * z1 + r * z2);
        pairs.push(CalibratedPair::new(i, t, t0));
        truth.push(alt && s.mua != s.mu0);
    }
    (pairs, truth)
}

pub fn generate(model: &Model, seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match model {
        Model::OneSample(s) => {
            let (u, truth) = generate_one_sample(s, &mut rng);
            Instance::Raw {
                data: Dataset::OneSample(u),
                truth,
            }
        }
        Model::TwoSample(s) => {
            let (u, truth) = generate_two_sample(s, &mut rng);
            Instance::Raw {
                data: Dataset::TwoSample(u),
                truth,
            }
        }
        Model::Ssmt(s) => {
            let (pairs, truth) = generate_ssmt(s, &mut rng);
            Instance::Pairs { pairs, truth }
        }
    }
}

/// Per-run error metrics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunMetrics {
    pub fdp: f64,
    pub tpp: f64,
    /// `false` when there are no true alternatives, in which case `tpp = 0`.
    pub tpp_defined: bool,
    pub rejections: usize,
}

pub fn metrics(rejected: &[usize], truth: &[bool]) -> RunMetrics {
    let false_rej = rejected.iter().filter(|&&i| !truth[i]).count();
    let true_rej = rejected.len() - false_rej;
    let alts = truth.iter().filter(|&&t| t).count();
    RunMetrics {
        fdp: false_rej as f64 / rejected.len().max(1) as f64,
        tpp: if alts == 0 { 0.0 } else { true_rej as f64 / alts as f64 },
        tpp_defined: alts > 0,
        rejections: rejected.len(),
    }
}

/// Mean over units of the per-unit sample variance of 0/1 decisions across
/// runs. `decisions[r][i]` is the decision for unit `i` in run `r`.
pub fn variance_metric(decisions: &[Vec<bool>]) -> Result<f64> {
    if decisions.len() < 2 {
        return Err(Error::Config("variance metric needs at least two runs".into()));
    }
    let m = decisions[0].len();
    if m == 0 || decisions.iter().any(|d| d.len() != m) {
        return Err(Error::ShapeMismatch("decision runs differ in length".into()));
    }
    let reps = decisions.len() as f64;
    let total: f64 = (0..m)
        .map(|i| {
            let k = decisions.iter().filter(|d| d[i]).count() as f64;
            let mean = k / reps;
            // Σ (R - R̄)² for 0/1 data
            (k * (1.0 - mean).powi(2) + (reps - k) * mean * mean) / (reps - 1.0)
        })
        .sum();
    Ok(total / m as f64)
}

/// Fraction of true alternatives among the `k` units with the largest
/// evidence (ties broken by unit index).
pub fn average_ranking(evidence: &[f64], truth: &[bool], k: usize) -> Result<f64> {
    if k == 0 || k > evidence.len() || evidence.len() != truth.len() {
        return Err(Error::Config(format!(
            "k must lie in 1..={} and lengths must match",
            evidence.len()
        )));
    }
    let mut order: Vec<usize> = (0..evidence.len()).collect();
    order.sort_by(|&a, &b| evidence[b].total_cmp(&evidence[a]).then(a.cmp(&b)));
    Ok(order[..k].iter().filter(|&&i| truth[i]).count() as f64 / k as f64)
}

/// Seed of the dataset in replication `rep`; shared by every method so that
/// methods are compared on the same data.
pub fn data_seed(master: u64, rep: usize) -> u64 {
    derive_seed(master, &[rep as u64, label_hash("data")])
}

/// Seed of `method`'s splits and resamples in replication `rep`.
pub fn method_seed(master: u64, rep: usize, method: Method) -> u64 {
    derive_seed(master, &[rep as u64, label_hash(method.id())])
}

pub fn run_instance(
    instance: &Instance,
    method: Method,
    opts: &MethodOptions,
    seed: u64,
) -> Result<MethodOutput> {
    match instance {
        Instance::Raw { data, .. } => run_method(method, data, opts, seed),
        Instance::Pairs { pairs, .. } => {
            opts.validate()?;
            run_on_pairs(method, pairs.clone(), opts)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RepRecord {
    pub method: Method,
    pub rep: usize,
    pub result: std::result::Result<RunMetrics, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodSummary {
    pub method: Method,
    pub completed: usize,
    pub failed: usize,
    pub fdr: f64,
    pub fdr_se: f64,
    pub ap: f64,
    pub ap_se: f64,
    pub mean_rejections: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationReport {
    pub records: Vec<RepRecord>,
    pub summaries: Vec<MethodSummary>,
}

impl ReplicationReport {
    pub fn summary(&self, method: Method) -> Option<&MethodSummary> {
        self.summaries.iter().find(|s| s.method == method)
    }

    pub fn all_completed(&self) -> bool {
        self.records.iter().all(|r| r.result.is_ok())
    }
}

fn mean_se(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    if x.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = x.iter().sum::<f64>() / n;
    if x.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn summarize(method: Method, records: &[RepRecord]) -> MethodSummary {
    let ok: Vec<RunMetrics> = records
        .iter()
        .filter(|r| r.method == method)
        .filter_map(|r| r.result.as_ref().ok().copied())
        .collect();
    let failed = records
        .iter()
        .filter(|r| r.method == method && r.result.is_err())
        .count();
    let fdp: Vec<f64> = ok.iter().map(|r| r.fdp).collect();
    let tpp: Vec<f64> = ok.iter().map(|r| r.tpp).collect();
    let rej: Vec<f64> = ok.iter().map(|r| r.rejections as f64).collect();
    let (fdr, fdr_se) = mean_se(&fdp);
    let (ap, ap_se) = mean_se(&tpp);
    MethodSummary {
        method,
        completed: ok.len(),
        failed,
        fdr,
        fdr_se,
        ap,
        ap_se,
        mean_rejections: mean_se(&rej).0,
    }
}

/// Runs every method on `reps` independent datasets. Failures of single runs
/// are recorded rather than aborting the whole report.
pub fn run_replications(
    model: &Model,
    methods: &[Method],
    reps: usize,
    opts: &MethodOptions,
    master_seed: u64,
) -> Result<ReplicationReport> {
    model.validate()?;
    opts.validate()?;
    if reps == 0 {
        return Err(Error::Config("reps must be at least 1".into()));
    }
    if methods.is_empty() {
        return Err(Error::Config("no methods requested".into()));
    }
    if let Model::Ssmt(_) = model {
        if let Some(m) = methods.iter().find(|m| !m.runs_on_pairs()) {
            return Err(Error::Config(format!(
                "method {m} cannot run on pair-level scenarios"
            )));
        }
    }
    let records: Vec<RepRecord> = (0..reps)
        .into_par_iter()
        .flat_map_iter(|rep| {
            let instance = generate(model, data_seed(master_seed, rep));
            methods
                .iter()
                .map(|&method| {
                    let result = run_instance(&instance, method, opts, method_seed(master_seed, rep, method))
                        .map(|out| metrics(&out.rejected, instance.truth()))
                        .map_err(|e| e.to_string());
                    RepRecord { method, rep, result }
                })
                .collect::<Vec<_>>()
        })
        .collect();
    let summaries = methods.iter().map(|&m| summarize(m, &records)).collect();
    Ok(ReplicationReport { records, summaries })
}

/// Decisions of `method` on one fixed dataset under `runs` different seeds.
pub fn decision_replications(
    instance: &Instance,
    method: Method,
    opts: &MethodOptions,
    runs: usize,
    master_seed: u64,
) -> Result<Vec<Vec<bool>>> {
    let m = instance.truth().len();
    (0..runs)
        .into_par_iter()
        .map(|r| {
            let out = run_instance(instance, method, opts, method_seed(master_seed, r, method))?;
            let mut d = vec![false; m];
            for i in out.rejected {
                d[i] = true;
            }
            Ok(d)
        })
        .collect()
}

/// Method option overrides as written in a scenario file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptionOverrides {
    pub alpha: Option<f64>,
    pub jc_gamma: Option<f64>,
    pub bias_correct: Option<bool>,
    pub antisym: Option<String>,
    pub derand_n: Option<usize>,
    pub derand_alpha_frac: Option<f64>,
    pub sfbh_b: Option<usize>,
}

impl OptionOverrides {
    pub fn apply(&self, opts: &mut MethodOptions) -> Result<()> {
        if let Some(v) = self.alpha {
            opts.alpha = v;
        }
        if let Some(v) = self.jc_gamma {
            opts.jc_gamma = v;
        }
        if let Some(v) = self.bias_correct {
            opts.bias_correct = v;
        }
        if let Some(v) = &self.antisym {
            opts.antisym = v.parse::<Antisym>()?;
        }
        if let Some(v) = self.derand_n {
            opts.derand_runs = v;
        }
        if let Some(v) = self.derand_alpha_frac {
            opts.derand_alpha_fraction = v;
        }
        if let Some(v) = self.sfbh_b {
            opts.sfbh_b = v;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub parameter: String,
    pub values: Vec<f64>,
}

/// A scenario file: model, methods, replication count, seed and optional
/// sweep over one model parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_reps")]
    pub reps: usize,
    pub methods: Vec<String>,
    #[serde(default)]
    pub options: OptionOverrides,
    pub model: Model,
    pub sweep: Option<Sweep>,
}

fn default_reps() -> usize {
    200
}

/// One point of a (possibly swept) scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioPoint {
    pub label: String,
    pub sweep_value: Option<f64>,
    pub model: Model,
}

impl ScenarioFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("scenario file: {e}")))
    }

    pub fn methods(&self) -> Result<Vec<Method>> {
        self.methods.iter().map(|s| s.parse()).collect()
    }

    pub fn points(&self) -> Result<Vec<ScenarioPoint>> {
        let Some(sweep) = &self.sweep else {
            self.model.validate()?;
            return Ok(vec![ScenarioPoint {
                label: self.name.clone(),
                sweep_value: None,
                model: self.model.clone(),
            }]);
        };
        if sweep.values.is_empty() {
            return Err(Error::Config("sweep has no values".into()));
        }
        sweep
            .values
            .iter()
            .map(|&v| {
                let mut model = self.model.clone();
                model.set(&sweep.parameter, v)?;
                model.validate()?;
                Ok(ScenarioPoint {
                    label: format!("{}[{}={}]", self.name, sweep.parameter, v),
                    sweep_value: Some(v),
                    model,
                })
            })
            .collect()
    }
}

/// Writes `scenario,method,rep,fdp,tpp` rows. Failed runs have empty metric
/// fields.
pub fn write_results_csv<W: Write>(
    out: W,
    rows: &[(String, ReplicationReport)],
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["scenario", "method", "rep", "fdp", "tpp"])?;
    for (label, report) in rows {
        for r in &report.records {
            let (fdp, tpp) = match &r.result {
                Ok(m) => (m.fdp.to_string(), m.tpp.to_string()),
                Err(_) => (String::new(), String::new()),
            };
            w.write_record([label.as_str(), r.method.id(), &r.rep.to_string(), &fdp, &tpp])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes one aggregate row per scenario point and method.
pub fn write_aggregate_csv<W: Write>(
    out: W,
    rows: &[(String, ReplicationReport)],
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "scenario",
        "method",
        "completed",
        "failed",
        "fdr",
        "fdr_se",
        "ap",
        "ap_se",
        "mean_rejections",
    ])?;
    for (label, report) in rows {
        for s in &report.summaries {
            w.write_record([
                label.clone(),
                s.method.id().to_string(),
                s.completed.to_string(),
                s.failed.to_string(),
                s.fdr.to_string(),
                s.fdr_se.to_string(),
                s.ap.to_string(),
                s.ap_se.to_string(),
                s.mean_rejections.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn variance(x: &[f64]) -> f64 {
        let n = x.len() as f64;
        let m = x.iter().sum::<f64>() / n;
        x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0)
    }

    #[test]
    fn error_components_have_unit_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 1_000_000;
        let u: Vec<f64> = (0..n).map(|_| uniform_error(&mut rng, 1.0)).collect();
        let l: Vec<f64> = (0..n).map(|_| laplace_error(&mut rng, 1.0)).collect();
        let g: Vec<f64> = (0..n).map(|_| normal_error(&mut rng, 1.0)).collect();
        for (name, x) in [("uniform", &u), ("laplace", &l), ("normal", &g)] {
            let v = variance(x);
            assert!((v - 1.0).abs() < 0.01, "{name}: {v}");
        }
    }

    #[test]
    fn laplace_is_symmetric_with_right_scale() {
        // E|X| = b = 1/√2 for Laplace(0, 1/√2)
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x: Vec<f64> = (0..400_000).map(|_| laplace_error(&mut rng, 1.0)).collect();
        let mean_abs = x.iter().map(|v| v.abs()).sum::<f64>() / x.len() as f64;
        let mean = x.iter().sum::<f64>() / x.len() as f64;
        assert!((mean_abs - 0.5f64.sqrt()).abs() < 0.005);
        assert!(mean.abs() < 0.005);
    }

    fn sim1a(pi: f64) -> OneSampleScenario {
        OneSampleScenario {
            m: 2000,
            n: 4,
            pi,
            mu: 3.0,
            sigma_max: 0.1,
            beta: 1.0,
        }
    }

    #[test]
    fn one_sample_labels() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (u, truth) = generate_one_sample(&sim1a(0.0), &mut rng);
        assert_eq!(u.len(), 2000);
        assert!(truth.iter().all(|&t| !t));
        assert!(u.iter().all(|x| x.values.len() == 4));

        let (_, truth) = generate_one_sample(&sim1a(0.1), &mut rng);
        let alts = truth.iter().filter(|&&t| t).count();
        assert!((100..300).contains(&alts), "{alts}");
    }

    #[test]
    fn gaussian_errors_when_beta_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let z: Vec<f64> = (0..1_000_000).map(|_| mixture_error(&mut rng, 1.0, 0.0)).collect();
        assert!((variance(&z) - 1.0).abs() < 0.01);
        // fourth moment 3 distinguishes the normal from the other components
        let k = z.iter().map(|v| v.powi(4)).sum::<f64>() / z.len() as f64;
        assert!((k - 3.0).abs() < 0.05, "{k}");
    }

    #[test]
    fn two_sample_labels() {
        let s = TwoSampleScenario {
            m: 500,
            n_x: 8,
            n_y: 15,
            pi_x: 0.05,
            pi_y: 0.2,
            mu_x: 1.0,
            mu_y: -2.0,
            sigma_x_max: 2.0,
            sigma_y_max: 1.0,
            beta: 1.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let (u, truth) = generate_two_sample(&s, &mut rng);
        assert_eq!(u.len(), 500);
        assert!(u.iter().all(|x| x.x.len() == 8 && x.y.len() == 15));
        let null = TwoSampleScenario {
            pi_x: 0.0,
            pi_y: 0.0,
            ..s
        };
        let (_, truth0) = generate_two_sample(&null, &mut rng);
        assert!(truth0.iter().all(|&t| !t));
        assert!(truth.iter().any(|&t| t));
    }

    #[test]
    fn ssmt_null_pairs_exchangeable_and_uncorrelated() {
        let s = SsmtScenario {
            m: 4000,
            pi: 0.0,
            mu0: 0.5,
            mua: 5.0,
            sigma0: 1.5,
            rho: 0.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (pairs, truth) = generate_ssmt(&s, &mut rng);
        assert!(truth.iter().all(|&t| !t));
        let m = pairs.len() as f64;
        let above = pairs.iter().filter(|p| p.t > p.t0).count() as f64 / m;
        assert!((above - 0.5).abs() < 3.0 * (0.25 / m).sqrt());
        let mt = pairs.iter().map(|p| p.t).sum::<f64>() / m;
        let m0 = pairs.iter().map(|p| p.t0).sum::<f64>() / m;
        let cov = pairs.iter().map(|p| (p.t - mt) * (p.t0 - m0)).sum::<f64>();
        let vt = pairs.iter().map(|p| (p.t - mt).powi(2)).sum::<f64>();
        let v0 = pairs.iter().map(|p| (p.t0 - m0).powi(2)).sum::<f64>();
        assert!((cov / (vt * v0).sqrt()).abs() < 3.0 / m.sqrt());
    }

    #[test]
    fn metric_examples() {
        let truth = [true, false, true, false, true];
        let r = metrics(&[0, 1, 2], &[true, false, true]);
        assert!((r.fdp - 1.0 / 3.0).abs() < 1e-15);
        let r = metrics(&[0, 2], &truth);
        assert!((r.tpp - 2.0 / 3.0).abs() < 1e-15);
        let r = metrics(&[], &truth);
        assert_eq!(r.fdp, 0.0);
        let r = metrics(&[1], &[false, false]);
        assert_eq!(r.tpp, 0.0);
        assert!(!r.tpp_defined);
    }

    #[test]
    fn variance_metric_examples() {
        let same = vec![vec![true, false, true]; 4];
        assert_eq!(variance_metric(&same).unwrap(), 0.0);
        assert_eq!(variance_metric(&[vec![true], vec![false]]).unwrap(), 0.5);
        assert_eq!(variance_metric(&vec![vec![false; 3]; 5]).unwrap(), 0.0);
        assert!(variance_metric(&[vec![true]]).is_err());
    }

    #[test]
    fn average_ranking_examples() {
        let truth = [true, false, false, true];
        assert_eq!(average_ranking(&[0.9, 0.8, 0.1, 0.2], &truth, 2).unwrap(), 0.5);
        assert_eq!(average_ranking(&[0.1, 0.2, 0.3, 0.4], &truth, 4).unwrap(), 0.5);
        assert_eq!(average_ranking(&[0.9, 0.0, 0.0, 0.8], &truth, 2).unwrap(), 1.0);
        assert!(average_ranking(&[0.1], &[true], 2).is_err());
    }

    #[test]
    fn replications_are_deterministic() {
        let model = Model::OneSample(OneSampleScenario {
            m: 200,
            ..sim1a(0.1)
        });
        let methods = [Method::SensKn, Method::BhTn];
        let opts = MethodOptions::default();
        let a = run_replications(&model, &methods, 3, &opts, 42).unwrap();
        let b = run_replications(&model, &methods, 3, &opts, 42).unwrap();
        assert_eq!(a, b);
        assert!(a.all_completed());
        assert_eq!(a.records.len(), 6);
        let one = run_replications(&model, &methods, 1, &opts, 42).unwrap();
        let s = one.summary(Method::SensKn).unwrap();
        let r = one.records.iter().find(|r| r.method == Method::SensKn).unwrap();
        assert_eq!(s.fdr, r.result.as_ref().unwrap().fdp);
    }

    #[test]
    fn ssmt_rejects_raw_only_methods() {
        let model = Model::Ssmt(SsmtScenario {
            m: 100,
            pi: 0.1,
            mu0: 0.0,
            mua: 5.0,
            sigma0: 1.0,
            rho: 0.5,
        });
        let opts = MethodOptions::default();
        assert!(run_replications(&model, &[Method::BhTn], 1, &opts, 1).is_err());
        let r = run_replications(&model, &[Method::SensJc, Method::CfBh], 2, &opts, 1).unwrap();
        assert!(r.all_completed());
    }

    #[test]
    fn scenario_file_round_trip_and_sweep() {
        let text = r#"
name = "sim1a"
seed = 7
reps = 2
methods = ["sens-kn", "bh-tn"]

[options]
alpha = 0.1

[model]
kind = "one-sample"
m = 100
n = 4
pi = 0.1
mu = 3.0
sigma_max = 0.1
beta = 1.0

[sweep]
parameter = "pi"
values = [0.01, 0.21]
"#;
        let f = ScenarioFile::parse(text).unwrap();
        assert_eq!(f.methods().unwrap(), vec![Method::SensKn, Method::BhTn]);
        let pts = f.points().unwrap();
        assert_eq!(pts.len(), 2);
        assert_eq!(pts[1].label, "sim1a[pi=0.21]");
        match &pts[1].model {
            Model::OneSample(s) => assert_eq!(s.pi, 0.21),
            _ => panic!("wrong kind"),
        }
        let mut opts = MethodOptions::default();
        f.options.apply(&mut opts).unwrap();
        assert_eq!(opts.alpha, 0.1);

        let back = ScenarioFile::parse(&toml::to_string(&f).unwrap()).unwrap();
        assert_eq!(back, f);

        let bad = text.replace("parameter = \"pi\"", "parameter = \"nope\"");
        assert!(ScenarioFile::parse(&bad).unwrap().points().is_err());
        let bad = text.replace("pi = 0.1", "pi = 1.5").replace("[sweep]\nparameter = \"pi\"\nvalues = [0.01, 0.21]\n", "");
        assert!(ScenarioFile::parse(&bad).unwrap().points().is_err());
    }

    #[test]
    fn csv_output_shape() {
        let model = Model::OneSample(OneSampleScenario {
            m: 100,
            ..sim1a(0.1)
        });
        let r = run_replications(&model, &[Method::BhTn], 2, &MethodOptions::default(), 3).unwrap();
        let rows = vec![("s".to_string(), r)];
        let mut buf = Vec::new();
        write_results_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "scenario,method,rep,fdp,tpp");
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("s,bh-tn,0,"));
        let mut buf = Vec::new();
        write_aggregate_csv(&mut buf, &rows).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 2);
    }
}
