//! Statistics primitives: rank and linear correlation, Student's t
//! distribution, paired t-test, split-half consistency and gold-standard
//! agreement.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::ImageId;
use crate::seed;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least {needed} values, got {got}")]
    TooFew { needed: usize, got: usize },
    #[error("input contains a non-finite value")]
    NonFinite,
    #[error("zero variance: correlation is undefined")]
    ZeroVariance,
    #[error("differences have zero variance but mean {mean_diff}: t is infinite")]
    InfiniteT { mean_diff: f64, df: usize },
    #[error("degrees of freedom must be positive, got {0}")]
    InvalidDf(f64),
    #[error("probability must lie strictly between 0 and 1, got {0}")]
    InvalidProbability(f64),
    #[error("image {0} has fewer than 2 ratings")]
    TooFewRatings(ImageId),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult {
    pub value: f64,
    pub n: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TTestResult {
    pub t: f64,
    pub df: usize,
    pub p_two_tailed: f64,
    pub mean_diff: f64,
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample (n − 1) standard deviation; 0 for fewer than two values.
pub fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    (ss / (xs.len() - 1) as f64).sqrt()
}

/// Lower-middle median (element `(n − 1) / 2` of the sorted values).
pub fn median_lower(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Some(v[(v.len() - 1) / 2])
}

/// 1-based ranks; tied values share the mean of their rank block.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i + 1;
        while j < idx.len() && xs[idx[j]] == xs[idx[i]] {
            j += 1;
        }
        // ranks i+1 ..= j averaged
        let r = (i + 1 + j) as f64 / 2.0;
        for &k in &idx[i..j] {
            ranks[k] = r;
        }
        i = j;
    }
    ranks
}

fn check_pair(x: &[f64], y: &[f64]) -> Result<(), StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 3 {
        return Err(StatsError::TooFew {
            needed: 3,
            got: x.len(),
        });
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    Ok(())
}

fn pearson(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    let mx = mean(x);
    let my = mean(y);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let dx = a - mx;
        let dy = b - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(StatsError::ZeroVariance);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Pearson linear correlation coefficient.
pub fn plcc(x: &[f64], y: &[f64]) -> Result<CorrelationResult, StatsError> {
    check_pair(x, y)?;
    Ok(CorrelationResult {
        value: pearson(x, y)?,
        n: x.len(),
    })
}

/// Spearman rank-order correlation: Pearson correlation of average ranks.
pub fn srocc(x: &[f64], y: &[f64]) -> Result<CorrelationResult, StatsError> {
    check_pair(x, y)?;
    Ok(CorrelationResult {
        value: pearson(&average_ranks(x), &average_ranks(y))?,
        n: x.len(),
    })
}

/// Natural log of the gamma function (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = COEF[0];
    let t = x + 7.5;
    for (i, c) in COEF.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Continued fraction for the incomplete beta function (modified Lentz).
fn beta_continued_fraction(a: f64, b: f64, x: f64) -> f64 {
    const MAX_ITER: usize = 10_000;
    const EPS: f64 = 1e-16;
    const TINY: f64 = 1e-300;

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
    for m in 1..=MAX_ITER {
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

/// Regularized incomplete beta function I_x(a, b).
pub fn regularized_incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_continued_fraction(a, b, x) / a
    } else {
        1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b
    }
}

fn check_df(df: f64) -> Result<(), StatsError> {
    if df.is_finite() && df > 0.0 {
        Ok(())
    } else {
        Err(StatsError::InvalidDf(df))
    }
}

/// CDF of Student's t distribution with `df` degrees of freedom.
pub fn t_cdf(t: f64, df: f64) -> Result<f64, StatsError> {
    check_df(df)?;
    if t.is_nan() {
        return Err(StatsError::NonFinite);
    }
    if t.is_infinite() {
        return Ok(if t > 0.0 { 1.0 } else { 0.0 });
    }
    let x = df / (df + t * t);
    let tail = 0.5 * regularized_incomplete_beta(df / 2.0, 0.5, x);
    Ok(if t >= 0.0 { 1.0 - tail } else { tail })
}

/// Inverse CDF of Student's t, by bisection on [`t_cdf`] to 1e-8.
pub fn t_quantile(p: f64, df: f64) -> Result<f64, StatsError> {
    check_df(df)?;
    if !(p > 0.0 && p < 1.0) {
        return Err(StatsError::InvalidProbability(p));
    }
    let (mut lo, mut hi) = (-1.0, 1.0);
    while t_cdf(lo, df)? > p {
        lo *= 2.0;
    }
    while t_cdf(hi, df)? < p {
        hi *= 2.0;
    }
    while hi - lo > 1e-8 {
        let mid = 0.5 * (lo + hi);
        if t_cdf(mid, df)? < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Two-sided paired-sample t-test on `a − b`.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<TTestResult, StatsError> {
    if a.len() != b.len() {
        return Err(StatsError::LengthMismatch(a.len(), b.len()));
    }
    if a.len() < 2 {
        return Err(StatsError::TooFew {
            needed: 2,
            got: a.len(),
        });
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = d.len();
    let df = n - 1;
    let mean_diff = mean(&d);
    let sd = sample_std(&d);
    if sd == 0.0 {
        if mean_diff == 0.0 {
            return Ok(TTestResult {
                t: 0.0,
                df,
                p_two_tailed: 1.0,
                mean_diff,
            });
        }
        return Err(StatsError::InfiniteT { mean_diff, df });
    }
    let t = mean_diff / (sd / (n as f64).sqrt());
    let p = (2.0 * t_cdf(-t.abs(), df as f64)?).min(1.0);
    Ok(TTestResult {
        t,
        df,
        p_two_tailed: p,
        mean_diff,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitHalfReport {
    pub mean_srocc: f64,
    pub per_split: Vec<f64>,
}

/// Inter-subject consistency: the SROCC between MOS vectors computed from
/// two random disjoint halves of every image's ratings, averaged over
/// `n_splits` splits. With an odd count, one random rating is left out.
pub fn split_half_consistency(
    ratings_by_image: &BTreeMap<ImageId, Vec<f64>>,
    n_splits: usize,
    seed: u64,
) -> Result<SplitHalfReport, StatsError> {
    if n_splits == 0 {
        return Err(StatsError::TooFew { needed: 1, got: 0 });
    }
    if let Some((id, _)) = ratings_by_image.iter().find(|(_, v)| v.len() < 2) {
        return Err(StatsError::TooFewRatings(id.clone()));
    }
    let per_split = (0..n_splits)
        .into_par_iter()
        .map(|s| {
            let mut rng = seed::rng(seed::derive(seed, s as u64));
            let mut left = Vec::with_capacity(ratings_by_image.len());
            let mut right = Vec::with_capacity(ratings_by_image.len());
            for scores in ratings_by_image.values() {
                let mut v = scores.clone();
                v.shuffle(&mut rng);
                let half = v.len() / 2;
                left.push(mean(&v[..half]));
                right.push(mean(&v[half..2 * half]));
            }
            srocc(&left, &right).map(|c| c.value)
        })
        .collect::<Result<Vec<f64>, StatsError>>()?;
    Ok(SplitHalfReport {
        mean_srocc: mean(&per_split),
        per_split,
    })
}

/// Outcome of the paired test in a gold comparison. A constant nonzero
/// offset makes t infinite, which is reported rather than treated as an
/// error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PairedTest {
    Finite(TTestResult),
    InfiniteT { mean_diff: f64, df: usize },
}

impl PairedTest {
    pub fn p_two_tailed(&self) -> f64 {
        match self {
            PairedTest::Finite(r) => r.p_two_tailed,
            PairedTest::InfiniteT { .. } => 0.0,
        }
    }

    pub fn t(&self) -> f64 {
        match self {
            PairedTest::Finite(r) => r.t,
            PairedTest::InfiniteT { mean_diff, .. } => f64::INFINITY.copysign(*mean_diff),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GoldValidation {
    pub n: usize,
    pub srocc: f64,
    pub mean_abs_diff: f64,
    pub ttest: PairedTest,
}

/// Agreement between crowd MOS and laboratory MOS on aligned gold images.
pub fn gold_validation(crowd: &[f64], lab: &[f64]) -> Result<GoldValidation, StatsError> {
    let rho = srocc(crowd, lab)?;
    let mad = crowd
        .iter()
        .zip(lab)
        .map(|(c, l)| (c - l).abs())
        .sum::<f64>()
        / crowd.len() as f64;
    let ttest = match paired_t_test(crowd, lab) {
        Ok(r) => PairedTest::Finite(r),
        Err(StatsError::InfiniteT { mean_diff, df }) => PairedTest::InfiniteT { mean_diff, df },
        Err(e) => return Err(e),
    };
    Ok(GoldValidation {
        n: crowd.len(),
        srocc: rho.value,
        mean_abs_diff: mad,
        ttest,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn srocc_examples() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(srocc(&x, &[10.0, 20.0, 30.0, 40.0]).unwrap().value, 1.0);
        assert_eq!(srocc(&x, &[40.0, 30.0, 20.0, 10.0]).unwrap().value, -1.0);
        // ranks (1,2,3) vs (2,1,3): sum d^2 = 2, 1 - 12/24 = 0.5
        assert!(close(
            srocc(&[1.0, 2.0, 3.0], &[2.0, 1.0, 3.0]).unwrap().value,
            0.5,
            1e-12
        ));
    }

    #[test]
    fn srocc_errors() {
        assert_eq!(
            srocc(&[1.0, 2.0, 3.0], &[1.0, 2.0]),
            Err(StatsError::LengthMismatch(3, 2))
        );
        assert_eq!(
            srocc(&[1.0, 2.0, 3.0], &[5.0, 5.0, 5.0]),
            Err(StatsError::ZeroVariance)
        );
        assert_eq!(
            srocc(&[1.0, 2.0], &[1.0, 2.0]),
            Err(StatsError::TooFew { needed: 3, got: 2 })
        );
        assert_eq!(
            srocc(&[1.0, f64::NAN, 3.0], &[1.0, 2.0, 3.0]),
            Err(StatsError::NonFinite)
        );
    }

    #[test]
    fn average_ranks_share_ties() {
        assert_eq!(
            average_ranks(&[30.0, 50.0, 50.0, 70.0, 90.0]),
            vec![1.0, 2.5, 2.5, 4.0, 5.0]
        );
    }

    #[test]
    fn plcc_examples() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let affine: Vec<f64> = x.iter().map(|v| 2.0 * v + 3.0).collect();
        assert!(close(plcc(&x, &affine).unwrap().value, 1.0, 1e-12));
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!(close(plcc(&x, &neg).unwrap().value, -1.0, 1e-12));
        // sxy = 4, sxx = 2, syy = 26/3 -> 4 / sqrt(52/3)
        let expected = 4.0 / (52.0f64 / 3.0).sqrt();
        let r = plcc(&[0.0, 1.0, 2.0], &[0.0, 1.0, 4.0]).unwrap().value;
        assert!(close(r, expected, 1e-12));
        assert!(close(r, 0.9608, 1e-4));
        assert_eq!(
            plcc(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]),
            Err(StatsError::ZeroVariance)
        );
    }

    #[test]
    fn t_distribution_values() {
        assert_eq!(t_cdf(0.0, 1.0).unwrap(), 0.5);
        assert_eq!(t_cdf(0.0, 17.0).unwrap(), 0.5);
        // df = 1 is Cauchy: F(t) = 1/2 + atan(t)/pi
        for t in [-5.0, -1.0, 0.3, 2.0, 40.0] {
            let cauchy = 0.5 + f64::atan(t) / std::f64::consts::PI;
            assert!(close(t_cdf(t, 1.0).unwrap(), cauchy, 1e-12));
        }
        // df = 2 closed form: F(t) = 1/2 + t / (2 sqrt(2 + t^2))
        for t in [-3.0f64, -0.5, 1.0, 7.0] {
            let f = 0.5 + t / (2.0 * (2.0 + t * t).sqrt());
            assert!(close(t_cdf(t, 2.0).unwrap(), f, 1e-12));
        }
        assert!(close(t_quantile(0.975, 1.0).unwrap(), 12.7062, 1e-3));
        assert!(close(t_quantile(0.975, 1000.0).unwrap(), 1.962, 1e-3));
        assert!(close(t_quantile(0.975, 3.0).unwrap(), 3.1824, 1e-3));
        assert!(t_quantile(1.0, 3.0).is_err());
        assert!(t_cdf(1.0, 0.0).is_err());
    }

    #[test]
    fn paired_t_examples() {
        let a = [12.0, 14.0, 13.0, 16.0];
        let b = [10.0, 10.0, 10.0, 10.0];
        let r = paired_t_test(&a, &b).unwrap();
        // mean 3.75, sd sqrt(35/12), t = 3.75 / (sd / 2)
        let t = 3.75 / ((35.0f64 / 12.0).sqrt() / 2.0);
        assert!(close(r.t, t, 1e-12));
        assert!(close(r.t, 4.392, 1e-3));
        assert_eq!(r.df, 3);
        assert!(r.p_two_tailed > 0.02 && r.p_two_tailed < 0.025);

        let same = paired_t_test(&a, &a).unwrap();
        assert_eq!((same.t, same.p_two_tailed), (0.0, 1.0));
        let alt = paired_t_test(&[1.0, -1.0, 1.0, -1.0], &[0.0; 4]).unwrap();
        assert_eq!((alt.t, alt.p_two_tailed), (0.0, 1.0));
        assert_eq!(
            paired_t_test(&[6.0, 7.0, 8.0], &[1.0, 2.0, 3.0]),
            Err(StatsError::InfiniteT {
                mean_diff: 5.0,
                df: 2
            })
        );
    }

    #[test]
    fn gold_validation_examples() {
        let lab = [22.0, 38.5, 51.0, 67.2, 80.0];
        let same = gold_validation(&lab, &lab).unwrap();
        assert_eq!(same.srocc, 1.0);
        assert_eq!(same.mean_abs_diff, 0.0);
        assert_eq!(same.ttest.t(), 0.0);

        let shifted: Vec<f64> = lab.iter().map(|x| x + 5.0).collect();
        let g = gold_validation(&shifted, &lab).unwrap();
        assert_eq!(g.srocc, 1.0);
        assert!(close(g.mean_abs_diff, 5.0, 1e-12));
        assert!(matches!(g.ttest, PairedTest::InfiniteT { .. }));
    }

    #[test]
    fn split_half_examples() {
        let mut m = BTreeMap::new();
        for i in 0..10 {
            m.insert(ImageId::new(format!("i{i}")), vec![10.0 * i as f64; 7]);
        }
        let r = split_half_consistency(&m, 25, 3).unwrap();
        assert_eq!(r.per_split.len(), 25);
        assert!(r.per_split.iter().all(|&v| v == 1.0));

        let two: BTreeMap<_, _> = m.into_iter().take(2).collect();
        assert_eq!(
            split_half_consistency(&two, 25, 3),
            Err(StatsError::TooFew { needed: 3, got: 2 })
        );
        let mut short = BTreeMap::new();
        short.insert(ImageId::new("lonely"), vec![4.0]);
        assert!(matches!(
            split_half_consistency(&short, 5, 1),
            Err(StatsError::TooFewRatings(_))
        ));
    }

    #[test]
    fn median_is_lower_middle() {
        assert_eq!(median_lower(&[4.0, 1.0, 3.0, 2.0]), Some(2.0));
        assert_eq!(median_lower(&[5.0, 1.0, 3.0]), Some(3.0));
        assert_eq!(median_lower(&[]), None);
    }

    #[test]
    fn ln_gamma_matches_factorials() {
        let mut fact = 1.0f64;
        for n in 1..20 {
            fact *= n as f64;
            assert!(close(ln_gamma(n as f64 + 1.0), fact.ln(), 1e-10));
        }
        assert!(close(
            ln_gamma(0.5),
            std::f64::consts::PI.sqrt().ln(),
            1e-12
        ));
    }
}
