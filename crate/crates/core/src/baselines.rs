//! Comparator procedures: BH on theoretical- or empirical-null p-values,
//! sign-flip p-values, and the mirror threshold on raw t statistics.

use rand::Rng;

use crate::construct::{unit_rng, Dataset, TwoSampleUnit, UnitObservations};
use crate::error::{Error, Result};
use crate::fdr::{bc_threshold, mirror_rejections};
use crate::special::{std_normal_sf, t_to_normal_score};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PValueSource {
    TheoreticalNull,
    EstimatedNull,
    SignFlip,
    Conformal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PValueSet {
    pub p: Vec<f64>,
    pub source: PValueSource,
}

/// Benjamini-Hochberg step-up: reject the `k` smallest p-values for the
/// largest `k` with `p₍ₖ₎ ≤ kα/m`.
pub fn bh_procedure(p: &[f64], alpha: f64) -> Vec<usize> {
    let m = p.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p[a].total_cmp(&p[b]).then(a.cmp(&b)));
    let k = (1..=m)
        .rev()
        .find(|&k| p[order[k - 1]] <= k as f64 * alpha / m as f64);
    let mut out: Vec<usize> = match k {
        Some(k) => order[..k].to_vec(),
        None => Vec::new(),
    };
    out.sort_unstable();
    out
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let ss = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
    (mean, ss / (n - 1.0))
}

/// One-sample t statistic `x̄ / (s/√n)` and its degrees of freedom.
pub fn t_statistic_one_sample(unit: &UnitObservations) -> Result<(f64, u32)> {
    let n = unit.values.len();
    if n < 2 {
        return Err(Error::TooFewObservations {
            unit: unit.id.clone(),
            n,
            min: 2,
        });
    }
    let (mean, var) = mean_var(&unit.values);
    if !(var > 0.0) {
        return Err(Error::DegenerateScale {
            unit: unit.id.clone(),
        });
    }
    Ok((mean / (var / n as f64).sqrt(), (n - 1) as u32))
}

/// Pooled two-sample t statistic for `x̄ - ȳ` with `n_x + n_y - 2` degrees of
/// freedom.
pub fn t_statistic_two_sample(unit: &TwoSampleUnit) -> Result<(f64, u32)> {
    let (nx, ny) = (unit.x.len(), unit.y.len());
    if nx < 2 || ny < 2 {
        return Err(Error::TooFewObservations {
            unit: unit.id.clone(),
            n: nx.min(ny),
            min: 2,
        });
    }
    let (mx, vx) = mean_var(&unit.x);
    let (my, vy) = mean_var(&unit.y);
    let dof = nx + ny - 2;
    let pooled = ((nx - 1) as f64 * vx + (ny - 1) as f64 * vy) / dof as f64;
    if !(pooled > 0.0) {
        return Err(Error::DegenerateScale {
            unit: unit.id.clone(),
        });
    }
    let se = (pooled * (1.0 / nx as f64 + 1.0 / ny as f64)).sqrt();
    Ok(((mx - my) / se, dof as u32))
}

/// Full-sample t statistics of every unit.
pub fn t_statistics(data: &Dataset) -> Result<Vec<(f64, u32)>> {
    match data {
        Dataset::OneSample(u) => u.iter().map(t_statistic_one_sample).collect(),
        Dataset::TwoSample(u) => u.iter().map(t_statistic_two_sample).collect(),
    }
}

/// Full-sample t statistics mapped to z-values through `Φ⁻¹(G_{t,ν}(·))`.
pub fn z_values_full_sample(data: &Dataset) -> Result<Vec<f64>> {
    t_statistics(data)?
        .into_iter()
        .map(|(t, dof)| t_to_normal_score(t, dof))
        .collect()
}

/// Two-sided p-values `2(1 - Φ(|z - μ₀|/σ₀))`.
pub fn p_from_null(z: &[f64], mu0: f64, sigma0: f64, source: PValueSource) -> Result<PValueSet> {
    if !(sigma0 > 0.0 && sigma0.is_finite()) {
        return Err(Error::Domain {
            what: "null standard deviation",
            value: sigma0,
        });
    }
    let p = z
        .iter()
        .map(|&v| (2.0 * std_normal_sf((v - mu0).abs() / sigma0)).min(1.0))
        .collect();
    Ok(PValueSet { p, source })
}

/// `|t|` for signed data, with `|t| = ∞` when the flipped sample has zero
/// spread but nonzero mean. `sum_sq` is `Σx²`, which sign flips preserve.
fn abs_t_from_sums(sum: f64, sum_sq: f64, n: f64) -> f64 {
    let mean = sum / n;
    let var = ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0);
    if mean == 0.0 {
        0.0
    } else if var == 0.0 {
        f64::INFINITY
    } else {
        mean.abs() / (var / n).sqrt()
    }
}

/// Sign-flip p-value of one unit: `(1 + #{b : |Z⁽ᵇ⁾| ≥ |Z⁽⁰⁾|}) / (B + 1)`
/// with a fresh independent sign vector for each `b`.
///
/// The normal-score transform is monotone in `|t|` at fixed degrees of
/// freedom, so the comparison is made on `|t|` directly.
pub fn sign_flip_p_value<R: Rng + ?Sized>(values: &[f64], b: usize, rng: &mut R) -> f64 {
    let n = values.len() as f64;
    let sum_sq: f64 = values.iter().map(|v| v * v).sum();
    let observed = abs_t_from_sums(values.iter().sum(), sum_sq, n);
    let mut count = 0usize;
    for _ in 0..b {
        let s: f64 = values
            .iter()
            .map(|&v| if rng.random::<bool>() { v } else { -v })
            .sum();
        if abs_t_from_sums(s, sum_sq, n) >= observed {
            count += 1;
        }
    }
    (1 + count) as f64 / (b + 1) as f64
}

/// Sign-flip p-values for every one-sample unit, each unit on its own random
/// substream of `seed`.
pub fn sign_flip_p_values(units: &[UnitObservations], b: usize, seed: u64) -> Result<PValueSet> {
    if b == 0 {
        return Err(Error::Config("sign-flip resamples must be at least 1".into()));
    }
    let p = units
        .iter()
        .enumerate()
        .map(|(i, u)| {
            if u.values.len() < 2 {
                return Err(Error::TooFewObservations {
                    unit: u.id.clone(),
                    n: u.values.len(),
                    min: 2,
                });
            }
            Ok(sign_flip_p_value(&u.values, b, &mut unit_rng(seed, i)))
        })
        .collect::<Result<_>>()?;
    Ok(PValueSet {
        p,
        source: PValueSource::SignFlip,
    })
}

/// Sign-flip p-values followed by BH. Defined for one-sample data only.
pub fn sf_bh(data: &Dataset, b: usize, alpha: f64, seed: u64) -> Result<(PValueSet, Vec<usize>)> {
    let Dataset::OneSample(units) = data else {
        return Err(Error::Config(
            "sign-flip p-values need one-sample data".into(),
        ));
    };
    let p = sign_flip_p_values(units, b, seed)?;
    let rejected = bh_procedure(&p.p, alpha);
    Ok((p, rejected))
}

/// Mirror threshold applied to the full-sample t statistics themselves
/// (right tail is evidence).
pub fn st_bc(data: &Dataset, alpha: f64) -> Result<(Vec<f64>, f64, Vec<usize>)> {
    let t: Vec<f64> = t_statistics(data)?.into_iter().map(|(t, _)| t).collect();
    let tau = bc_threshold(&t, alpha);
    let rejected = mirror_rejections(&t, tau);
    Ok((t, tau, rejected))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::{std_normal_cdf, std_normal_quantile, student_t_cdf};
    use proptest::prelude::{prop, prop_assert_eq, proptest};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn one(values: &[f64]) -> UnitObservations {
        UnitObservations::new("u", values.to_vec())
    }

    #[test]
    fn bh_examples() {
        assert_eq!(bh_procedure(&[0.01, 0.02, 0.03, 0.5], 0.1), vec![0, 1, 2]);
        assert!(bh_procedure(&[1.0; 6], 0.1).is_empty());
        assert_eq!(bh_procedure(&[0.1], 0.1), vec![0]);
        // order of input does not matter
        assert_eq!(bh_procedure(&[0.5, 0.03, 0.01, 0.02], 0.1), vec![1, 2, 3]);
    }

    #[test]
    fn z_value_examples() {
        let d = Dataset::OneSample(vec![one(&[-1.0, 1.0, -2.0, 2.0])]);
        assert_eq!(z_values_full_sample(&d).unwrap(), vec![0.0]);

        // X = (1,1,1,2): mean 1.25, s² = 0.25, t = 1.25/(0.5/2) = 5, ν = 3
        let (t, dof) = t_statistic_one_sample(&one(&[1.0, 1.0, 1.0, 2.0])).unwrap();
        assert!((t - 5.0).abs() < 1e-14);
        assert_eq!(dof, 3);
        let d = Dataset::OneSample(vec![one(&[1.0, 1.0, 1.0, 2.0])]);
        let z = z_values_full_sample(&d).unwrap()[0];
        let expected = std_normal_quantile(student_t_cdf(5.0, 3).unwrap()).unwrap();
        assert!((z - expected).abs() < 1e-9);

        let neg = Dataset::OneSample(vec![one(&[-1.0, -1.0, -1.0, -2.0])]);
        assert_eq!(z_values_full_sample(&neg).unwrap()[0], -z);
        assert!(t_statistic_one_sample(&one(&[3.0, 3.0])).is_err());
    }

    #[test]
    fn two_sample_pooled_t() {
        // x̄ = 2, ȳ = 0, both variances 1 → sp = 1, se = √(1/3 + 1/3)
        let u = TwoSampleUnit::new("u", vec![1.0, 2.0, 3.0], vec![-1.0, 0.0, 1.0]);
        let (t, dof) = t_statistic_two_sample(&u).unwrap();
        assert!((t - 2.0 / (2.0f64 / 3.0).sqrt()).abs() < 1e-14);
        assert_eq!(dof, 4);
    }

    #[test]
    fn p_from_null_examples() {
        let p = p_from_null(&[0.3, 0.3 + 1.959964 * 2.0], 0.3, 2.0, PValueSource::EstimatedNull)
            .unwrap();
        assert_eq!(p.p[0], 1.0);
        assert!((p.p[1] - 0.05).abs() < 1e-6);
        let a = p_from_null(&[1.7], 0.5, 1.0, PValueSource::EstimatedNull).unwrap();
        let b = p_from_null(&[2.0 * 0.5 - 1.7], 0.5, 1.0, PValueSource::EstimatedNull).unwrap();
        assert_eq!(a.p, b.p);
        let th = p_from_null(&[1.2], 0.0, 1.0, PValueSource::TheoreticalNull).unwrap();
        assert!((th.p[0] - 2.0 * (1.0 - std_normal_cdf(1.2))).abs() < 1e-15);
        assert!(p_from_null(&[0.0], 0.0, 0.0, PValueSource::EstimatedNull).is_err());
    }

    #[test]
    fn sign_flip_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        // all-equal positive data: every nontrivial flip has a smaller |t|
        // except all-positive / all-negative (|t| = ∞ for both)
        let p = sign_flip_p_value(&[1.0; 12], 50, &mut rng);
        assert!(p <= 3.0 / 51.0);
        // zero data: every flip ties the observed value
        assert_eq!(sign_flip_p_value(&[0.0; 5], 9, &mut rng), 1.0);
    }

    #[test]
    fn sign_flip_count_rule() {
        // B = 3 with |Z| = {0.5, 2.0, 1.0} against 1.5 → (1+1)/4
        let observed = 1.5;
        let flipped = [0.5f64, 2.0, 1.0];
        let count = flipped.iter().filter(|z| z.abs() >= observed).count();
        assert_eq!((1 + count) as f64 / 4.0, 0.5);
    }

    #[test]
    fn sf_bh_rejects_two_sample() {
        let d = Dataset::TwoSample(vec![TwoSampleUnit::new("u", vec![1.0; 4], vec![0.0; 4])]);
        assert!(sf_bh(&d, 10, 0.1, 1).is_err());
    }

    #[test]
    fn sign_flip_super_uniform_under_null() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let units: Vec<UnitObservations> = (0..500)
            .map(|i| {
                UnitObservations::new(
                    format!("{i}"),
                    (0..6).map(|_| rng.random::<f64>() - 0.5).collect(),
                )
            })
            .collect();
        let p = sign_flip_p_values(&units, 64, 3).unwrap().p;
        for &q in &[0.05, 0.1, 0.25, 0.5] {
            let frac = p.iter().filter(|&&v| v <= q).count() as f64 / p.len() as f64;
            assert!(frac <= q + 3.0 * (q * (1.0 - q) / 500.0).sqrt(), "{q}: {frac}");
        }
    }

    #[test]
    fn st_bc_is_one_directional() {
        let mut units: Vec<UnitObservations> = (0..40)
            .map(|i| one(&[-20.0 - i as f64, -21.0 - i as f64, -19.5, -22.0]))
            .collect();
        units.extend((0..40).map(|i| one(&[0.1 * i as f64 - 2.0, 1.0, -1.0, 0.5])));
        let (_, tau, rejected) = st_bc(&Dataset::OneSample(units), 0.1).unwrap();
        assert!(rejected.is_empty());
        assert!(tau.is_infinite());
    }

    fn bh_brute(p: &[f64], alpha: f64) -> Vec<usize> {
        let m = p.len();
        let mut s = p.to_vec();
        s.sort_by(f64::total_cmp);
        let k = (1..=m).filter(|&k| s[k - 1] <= k as f64 * alpha / m as f64).max();
        match k {
            None => vec![],
            Some(k) => (0..m).filter(|&i| p[i] <= s[k - 1]).collect(),
        }
    }

    proptest! {
        #[test]
        fn bh_matches_brute_force(p in prop::collection::vec(0.0f64..1.0, 1..100), alpha in 0.01f64..0.5) {
            prop_assert_eq!(bh_procedure(&p, alpha), bh_brute(&p, alpha));
        }
    }
}
