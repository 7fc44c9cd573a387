//! Descriptive statistics, confidence intervals and rank tests.

use std::collections::HashMap;

use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

/// Mean absolute error.
pub fn mae(pred: &[f64], actual: &[f64]) -> Result<f64> {
    if pred.len() != actual.len() || pred.is_empty() {
        return Err(Error::Contract(format!(
            "mae needs equal non-empty lengths, got {} and {}",
            pred.len(),
            actual.len()
        )));
    }
    let s: f64 = pred.iter().zip(actual).map(|(p, a)| (p - a).abs()).sum();
    Ok(s / pred.len() as f64)
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n − 1 denominator); 0 for fewer than two values.
pub fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// Two-sided Student-t interval for the mean.
pub fn confidence_interval(values: &[f64], level: f64) -> Result<(f64, f64)> {
    if values.len() < 2 {
        return Err(Error::Contract(format!(
            "confidence interval needs n >= 2, got {}",
            values.len()
        )));
    }
    ci_from_summary(mean(values), sample_std(values), values.len(), level)
}

/// Same interval from a precomputed mean, sample std and count.
pub fn ci_from_summary(mean: f64, std: f64, n: usize, level: f64) -> Result<(f64, f64)> {
    if n < 2 {
        return Err(Error::Contract(format!("confidence interval needs n >= 2, got {n}")));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Contract(format!("confidence level {level} outside (0, 1)")));
    }
    let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
        .map_err(|e| Error::Contract(e.to_string()))?
        .inverse_cdf(0.5 + level / 2.0);
    let half = t * std / (n as f64).sqrt();
    Ok((mean - half, mean + half))
}

/// Ranks starting at 1 for the smallest value; tied values share the
/// average of their positions.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Natural log of the gamma function (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const C: [f64; 9] = [
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
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = C[0];
    let t = x + G + 0.5;
    for (i, &c) in C.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Regularized upper incomplete gamma Q(a, x).
pub fn gamma_q(a: f64, x: f64) -> f64 {
    const EPS: f64 = 1e-15;
    const TINY: f64 = 1e-300;
    if x <= 0.0 {
        return 1.0;
    }
    let prefix = (-x + a * x.ln() - ln_gamma(a)).exp();
    if x < a + 1.0 {
        let mut ap = a;
        let mut del = 1.0 / a;
        let mut sum = del;
        for _ in 0..10_000 {
            ap += 1.0;
            del *= x / ap;
            sum += del;
            if del.abs() < sum.abs() * EPS {
                break;
            }
        }
        (1.0 - sum * prefix).clamp(0.0, 1.0)
    } else {
        // modified Lentz continued fraction
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / TINY;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..10_000 {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < TINY {
                d = TINY;
            }
            c = b + an / c;
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
        (prefix * h).clamp(0.0, 1.0)
    }
}

/// Upper tail of the chi-square distribution.
pub fn chi_square_sf(x: f64, df: f64) -> f64 {
    if x <= 0.0 {
        1.0
    } else {
        gamma_q(df / 2.0, x / 2.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FriedmanResult {
    pub chi2: f64,
    pub df: usize,
    pub p: f64,
    pub blocks: usize,
    pub treatments: usize,
    /// Mean within-block rank of each treatment (1 = smallest value).
    pub mean_ranks: Vec<f64>,
}

fn check_matrix(matrix: &[Vec<f64>]) -> Result<(usize, usize)> {
    let n = matrix.len();
    if n < 2 {
        return Err(Error::Contract(format!("friedman test needs >= 2 blocks, got {n}")));
    }
    let k = matrix[0].len();
    if k < 2 {
        return Err(Error::Contract(format!("friedman test needs >= 2 treatments, got {k}")));
    }
    if matrix.iter().any(|r| r.len() != k) {
        return Err(Error::Contract("ragged friedman matrix".into()));
    }
    if matrix.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Contract("non-finite value in friedman matrix".into()));
    }
    Ok((n, k))
}

fn friedman_stat(rank_sums: &[f64], n: usize) -> f64 {
    let k = rank_sums.len() as f64;
    let n = n as f64;
    let ss: f64 = rank_sums.iter().map(|r| (r / n) * (r / n)).sum();
    12.0 * n / (k * (k + 1.0)) * ss - 3.0 * n * (k + 1.0)
}

/// Friedman rank test over a blocks × treatments matrix, with the p-value
/// from the chi-square approximation on k − 1 degrees of freedom.
pub fn friedman_test(matrix: &[Vec<f64>]) -> Result<FriedmanResult> {
    let (n, k) = check_matrix(matrix)?;
    let mut sums = vec![0.0; k];
    for row in matrix {
        for (s, r) in sums.iter_mut().zip(average_ranks(row)) {
            *s += r;
        }
    }
    let chi2 = friedman_stat(&sums, n).max(0.0);
    let chi2 = if chi2 < 1e-12 { 0.0 } else { chi2 };
    let df = k - 1;
    Ok(FriedmanResult {
        chi2,
        df,
        p: chi_square_sf(chi2, df as f64),
        blocks: n,
        treatments: k,
        mean_ranks: sums.iter().map(|s| s / n as f64).collect(),
    })
}

fn permutations(v: &[u32]) -> Vec<Vec<u32>> {
    if v.len() <= 1 {
        return vec![v.to_vec()];
    }
    let mut out = Vec::new();
    for i in 0..v.len() {
        let mut rest = v.to_vec();
        let head = rest.remove(i);
        for mut p in permutations(&rest) {
            p.insert(0, head);
            out.push(p);
        }
    }
    out
}

/// Exact permutation p-value of the Friedman statistic: the share of all
/// within-block rank permutations whose statistic is at least the observed
/// one. Feasible for up to 8 treatments and a few million rank-sum states.
pub fn friedman_exact_p(matrix: &[Vec<f64>]) -> Result<f64> {
    let (n, k) = check_matrix(matrix)?;
    if k > 8 {
        return Err(Error::Contract(format!("exact friedman supports <= 8 treatments, got {k}")));
    }
    let observed = friedman_test(matrix)?.chi2;
    // doubled ranks keep tie averages integral
    let mut states: HashMap<Vec<u32>, u128> = HashMap::from([(vec![0u32; k], 1)]);
    for row in matrix {
        let ranks: Vec<u32> = average_ranks(row).iter().map(|r| (r * 2.0).round() as u32).collect();
        let perms = permutations(&ranks);
        let mut next: HashMap<Vec<u32>, u128> = HashMap::with_capacity(states.len() * 4);
        for (sums, count) in &states {
            for p in &perms {
                let key: Vec<u32> = sums.iter().zip(p).map(|(a, b)| a + b).collect();
                *next.entry(key).or_insert(0) += count;
            }
        }
        if next.len() > 5_000_000 {
            return Err(Error::Contract("exact friedman state space too large".into()));
        }
        states = next;
    }
    let mut total = 0u128;
    let mut hit = 0u128;
    for (sums, count) in &states {
        let s: Vec<f64> = sums.iter().map(|&v| v as f64 / 2.0).collect();
        total += count;
        if friedman_stat(&s, n) >= observed - 1e-9 {
            hit += count;
        }
    }
    Ok(hit as f64 / total as f64)
}

/// Exact two-sided Wilcoxon signed-rank p-value for paired samples.
///
/// Zero differences are discarded; |d| ranks use tie averages. The null
/// distribution of W+ over all 2ⁿ sign assignments is built by dynamic
/// programming, and p = 2·min(P(W+ ≤ w), P(W+ ≥ w)), capped at 1.
pub fn wilcoxon_exact(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Contract(format!(
            "paired samples differ in length: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|d| *d != 0.0).collect();
    let n = d.len();
    if n < 2 {
        return Err(Error::Contract(format!(
            "{n} non-zero differences; the signed-rank test is undefined"
        )));
    }
    if n > 20 {
        return Err(Error::Contract(format!(
            "{n} pairs exceed the exact regime (<= 20); use a normal approximation"
        )));
    }
    let abs: Vec<f64> = d.iter().map(|v| v.abs()).collect();
    let ranks: Vec<usize> = average_ranks(&abs).iter().map(|r| (r * 2.0).round() as usize).collect();
    let w: usize = ranks.iter().zip(&d).filter(|(_, &v)| v > 0.0).map(|(r, _)| r).sum();
    let total: usize = ranks.iter().sum();
    let mut counts = vec![0u64; total + 1];
    counts[0] = 1;
    for &r in &ranks {
        for s in (r..=total).rev() {
            counts[s] += counts[s - r];
        }
    }
    let all = (1u64 << n) as f64;
    let lower: u64 = counts[..=w].iter().sum();
    let upper: u64 = counts[w..].iter().sum();
    Ok((2.0 * lower.min(upper) as f64 / all).min(1.0))
}
