//! Conformity scores `U = f̂₀/f̂_mix` and anti-symmetric mirror statistics.

use std::fmt;
use std::str::FromStr;

use crate::construct::CalibratedPair;
use crate::density::DensityModel;
use crate::error::Error;

/// Scores of the test and calibration members of each pair.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSet {
    pub u: Vec<f64>,
    pub u0: Vec<f64>,
}

impl ScoreSet {
    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }
}

fn ratio(model: &DensityModel, t: f64) -> f64 {
    let mix = model.f_mix.evaluate(t);
    // a Gaussian kernel estimate only vanishes where exp underflows
    if mix == 0.0 {
        return f64::MIN_POSITIVE;
    }
    (model.f0.evaluate(t) / mix).max(f64::MIN_POSITIVE)
}

/// `Uᵢ = g(Tᵢ)`, `Uᵢ⁰ = g(Tᵢ⁰)` with `g = f̂₀/f̂_mix`.
///
/// Scores are floored at the smallest positive normal value so that they stay
/// strictly positive when the null density underflows in the far tail.
pub fn score(model: &DensityModel, pairs: &[CalibratedPair]) -> ScoreSet {
    let (u, u0) = pairs
        .iter()
        .map(|p| (ratio(model, p.t), ratio(model, p.t0)))
        .unzip();
    ScoreSet { u, u0 }
}

/// Anti-symmetric combination `γ(U, U⁰)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Antisym {
    /// `sign(y - x) · exp(-min(x, y))`
    #[default]
    Exponential,
    /// `sign(y - x) · |x - y|`
    Gamma1,
    /// `sign(y - x) · min(x, y)`
    Gamma2,
}

impl FromStr for Antisym {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "paper" => Ok(Self::Exponential),
            "g1" | "gamma1" => Ok(Self::Gamma1),
            "g2" | "gamma2" => Ok(Self::Gamma2),
            other => Err(Error::Config(format!(
                "unknown anti-symmetric function {other:?} (expected paper, g1, g2)"
            ))),
        }
    }
}

impl fmt::Display for Antisym {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Exponential => "paper",
            Self::Gamma1 => "g1",
            Self::Gamma2 => "g2",
        })
    }
}

fn sign(d: f64) -> f64 {
    if d > 0.0 {
        1.0
    } else if d < 0.0 {
        -1.0
    } else {
        0.0
    }
}

pub fn mirror_statistic(u: f64, u0: f64, variant: Antisym) -> f64 {
    let s = sign(u0 - u);
    if s == 0.0 {
        return 0.0;
    }
    match variant {
        Antisym::Exponential => s * (-u.min(u0)).exp().max(f64::MIN_POSITIVE),
        Antisym::Gamma1 => s * (u - u0).abs(),
        Antisym::Gamma2 => s * u.min(u0),
    }
}

pub fn mirror_statistics(scores: &ScoreSet, variant: Antisym) -> Vec<f64> {
    scores
        .u
        .iter()
        .zip(&scores.u0)
        .map(|(&u, &u0)| mirror_statistic(u, u0, variant))
        .collect()
}
