//! Special functions: standard normal CDF and quantile, Student-t CDF and the
//! Gaussian kernel.
//!
//! The Student-t tail is evaluated through the regularized incomplete beta
//! function (Lentz continued fraction) and kept in log space so that the
//! `t -> z` conversion used by the standardization step stays finite and
//! strictly monotone far into the tails.

use std::f64::consts::{FRAC_1_SQRT_2, LN_2};

use crate::error::{Error, Result};

const SQRT_2PI: f64 = 2.506_628_274_631_000_5;
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Standard normal density.
pub fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / SQRT_2PI
}

/// Standard normal CDF. Saturates at 0 and 1.
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// Standard normal survival function `1 - Φ(x)`, accurate in the upper tail.
pub fn std_normal_sf(x: f64) -> f64 {
    0.5 * libm::erfc(x * FRAC_1_SQRT_2)
}

/// The unit Gaussian kernel `K(u) = (2π)^{-1/2} exp(-u²/2)`.
#[inline]
pub fn gaussian_kernel(u: f64) -> f64 {
    std_normal_pdf(u)
}

/// Standard normal quantile `Φ⁻¹(p)` for `p ∈ (0, 1)`.
pub fn std_normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain {
            what: "probability",
            value: p,
        });
    }
    Ok(quantile_unchecked(p))
}

fn quantile_unchecked(p: f64) -> f64 {
    // 1 - p is exact for p in [0.5, 1], so the upper half reuses the lower
    // tail where the Halley correction is computed without cancellation.
    if p > 0.5 {
        -lower_quantile(1.0 - p)
    } else {
        lower_quantile(p)
    }
}

// Acklam's rational approximation, refined by one Halley step.
fn lower_quantile(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const P_LOW: f64 = 0.02425;

    if p == 0.5 {
        return 0.0;
    }
    let x = if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    };
    let e = std_normal_cdf(x) - p;
    let u = e * SQRT_2PI * (0.5 * x * x).exp();
    x - u / (1.0 + 0.5 * x * u)
}

/// Upper-tail quantile from a log survival probability: returns `z` with
/// `ln(1 - Φ(z)) = ln_q`. Requires `ln_q <= ln 0.5`.
///
/// Below the range of `f64` probabilities an asymptotic expansion of the
/// Mills ratio is solved by Newton iteration.
pub fn std_normal_upper_quantile_ln(ln_q: f64) -> f64 {
    debug_assert!(ln_q <= -LN_2 + 1e-12);
    if ln_q >= -LN_2 {
        return 0.0;
    }
    if ln_q > -700.0 {
        return -lower_quantile(ln_q.exp());
    }
    let mut z = (-2.0 * ln_q).sqrt();
    for _ in 0..100 {
        let (f, df) = ln_sf_asymptotic(z);
        let step = (f - ln_q) / df;
        z -= step;
        if step.abs() <= 1e-15 * z {
            break;
        }
    }
    z
}

// ln(1 - Φ(z)) and its derivative for large z (z > 30), using
// 1 - Φ(z) ≈ φ(z)/z · (1 - z⁻² + 3z⁻⁴ - 15z⁻⁶).
fn ln_sf_asymptotic(z: f64) -> (f64, f64) {
    let w = 1.0 / (z * z);
    let series = 1.0 - w + 3.0 * w * w - 15.0 * w * w * w;
    let d_series = (2.0 * w - 12.0 * w * w + 90.0 * w * w * w) / z;
    let f = -0.5 * z * z - z.ln() - LN_SQRT_2PI + series.ln();
    let df = -z - 1.0 / z + d_series / series;
    (f, df)
}

fn ln_beta(a: f64, b: f64) -> f64 {
    libm::lgamma(a) + libm::lgamma(b) - libm::lgamma(a + b)
}

// Modified Lentz evaluation of the incomplete beta continued fraction.
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-16;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=10_000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// ln I_x(a, b) given `ln x` and `ln(1 - x)` separately, valid when `x` lies
/// on the fast-converging side of the continued fraction.
fn ln_beta_inc_direct(a: f64, b: f64, x: f64, ln_x: f64, ln_1mx: f64) -> f64 {
    a * ln_x + b * ln_1mx - ln_beta(a, b) - a.ln() + beta_cf(a, b, x).ln()
}

/// Natural log of the Student-t survival function `P(T_ν > t)` for `t >= 0`.
pub fn student_t_ln_sf(t: f64, dof: f64) -> f64 {
    debug_assert!(t >= 0.0 && dof > 0.0);
    let a = 0.5 * dof;
    let b = 0.5;
    // x = ν/(ν + t²), 1 - x = t²/(ν + t²), both formed without cancellation.
    let (x, ln_x, one_minus_x, ln_1mx) = if t > 1e100 {
        let ln_t2 = 2.0 * t.ln();
        (0.0, dof.ln() - ln_t2, 1.0, -(dof / t / t).ln_1p())
    } else {
        let t2 = t * t;
        let denom = dof + t2;
        let x = dof / denom;
        let omx = t2 / denom;
        (x, x.ln(), omx, omx.ln())
    };
    if x < (a + 1.0) / (a + b + 2.0) {
        -LN_2 + ln_beta_inc_direct(a, b, x, ln_x, ln_1mx)
    } else {
        // I_x(a, b) = 1 - I_{1-x}(b, a)
        let upper = ln_beta_inc_direct(b, a, one_minus_x, ln_1mx, ln_x).exp();
        -LN_2 + (-upper).ln_1p()
    }
}

fn check_dof(dof: u32) -> Result<f64> {
    if dof < 1 {
        return Err(Error::Domain {
            what: "degrees of freedom",
            value: dof as f64,
        });
    }
    Ok(dof as f64)
}

/// CDF of Student's t distribution with `dof` degrees of freedom.
pub fn student_t_cdf(x: f64, dof: u32) -> Result<f64> {
    let nu = check_dof(dof)?;
    Ok(if x == 0.0 {
        0.5
    } else if x > 0.0 {
        -student_t_ln_sf(x, nu).exp_m1()
    } else {
        student_t_ln_sf(-x, nu).exp()
    })
}

/// `Φ⁻¹(G_{t,ν}(stat))`: maps a t statistic onto the standard normal scale.
///
/// Computed as `sign(stat) · Φ̄⁻¹(Ḡ(|stat|))` entirely in the upper tail, so
/// the map is exactly odd and finite for every finite input.
pub fn t_to_normal_score(stat: f64, dof: u32) -> Result<f64> {
    let nu = check_dof(dof)?;
    if stat == 0.0 {
        return Ok(0.0);
    }
    let z = std_normal_upper_quantile_ln(student_t_ln_sf(stat.abs(), nu));
    Ok(if stat > 0.0 { z } else { -z })
}
