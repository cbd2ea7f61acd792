//! Small statistics toolbox shared by the estimators: Wilson score
//! intervals for binomial proportions and the Mann–Kendall trend test.

use statrs::distribution::{ContinuousCDF, Normal};

use crate::scalar::Real;

/// Standard normal quantile at `p`.
pub fn normal_quantile(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "quantile needs p in (0,1)");
    Normal::new(0.0, 1.0).unwrap().inverse_cdf(p)
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    Normal::new(0.0, 1.0).unwrap().cdf(x)
}

/// Wilson score interval for `successes` out of `n` Bernoulli trials at the
/// given two-sided confidence level (e.g. 0.99).
///
/// Preferred over the Wald interval because it stays inside `[0,1]` and
/// behaves at the extremes `p_hat = 0` and `p_hat = 1`.
pub fn wilson_interval<T: Real>(successes: u64, n: u64, confidence: T) -> (T, T) {
    assert!(n > 0, "Wilson interval needs n > 0");
    assert!(successes <= n);
    let conf = confidence.to_f64().unwrap();
    assert!(conf > 0.0 && conf < 1.0, "confidence must be in (0,1)");
    let z = T::of(normal_quantile(1.0 - (1.0 - conf) / 2.0));
    let n_t = T::of(n as f64);
    let p_hat = T::of(successes as f64) / n_t;
    let z2 = z * z;
    let denom = T::one() + z2 / n_t;
    let center = p_hat + z2 / (T::of(2.0) * n_t);
    let two = T::of(2.0);
    let rad = z
        * ((p_hat * (T::one() - p_hat)) / n_t + z2 / (two * n_t * (two * n_t)))
            .sqrt();
    (
        ((center - rad) / denom).max(T::zero()),
        ((center + rad) / denom).min(T::one()),
    )
}

/// Result of a Mann–Kendall trend test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrendTest {
    /// Kendall S statistic: concordant minus discordant pairs.
    pub s: i64,
    /// Normal z-score with continuity correction and tie-corrected variance.
    pub z: f64,
    /// One-sided p-value for an increasing trend.
    pub p_increasing: f64,
}

/// Mann–Kendall trend test of `y` against `x`.
///
/// Pairs tied in `x` contribute nothing, so repeated measurements at the
/// same abscissa (several trials per width) are handled by the standard tie
/// correction. See Kendall, "Rank Correlation Methods", ch. 4.
pub fn mann_kendall<T: Real>(x: &[T], y: &[T]) -> TrendTest {
    assert_eq!(x.len(), y.len());
    let n = x.len();
    assert!(n >= 3, "Mann-Kendall needs at least 3 observations");

    let mut s: i64 = 0;
    for i in 0..n {
        for j in (i + 1)..n {
            let dx = sign(x[j], x[i]);
            let dy = sign(y[j], y[i]);
            s += i64::from(dx * dy);
        }
    }

    let tx = tie_groups(x);
    let ty = tie_groups(y);
    let nf = n as f64;
    let base = nf * (nf - 1.0) * (2.0 * nf + 5.0);
    let corr = |groups: &[usize]| -> f64 {
        groups
            .iter()
            .map(|&t| {
                let t = t as f64;
                t * (t - 1.0) * (2.0 * t + 5.0)
            })
            .sum()
    };
    let mut var = (base - corr(&tx) - corr(&ty)) / 18.0;
    // Cross terms for ties in both rankings (Kendall tau-b variance).
    let sum_t2: f64 = tx.iter().map(|&t| (t * (t - 1)) as f64).sum();
    let sum_u2: f64 = ty.iter().map(|&t| (t * (t - 1)) as f64).sum();
    let sum_t3: f64 = tx.iter().map(|&t| (t * (t - 1) * (t.saturating_sub(2))) as f64).sum();
    let sum_u3: f64 = ty.iter().map(|&t| (t * (t - 1) * (t.saturating_sub(2))) as f64).sum();
    if n > 2 {
        var += sum_t3 * sum_u3 / (9.0 * nf * (nf - 1.0) * (nf - 2.0));
    }
    var += sum_t2 * sum_u2 / (2.0 * nf * (nf - 1.0));
    var = var.max(0.0);

    let z = if var == 0.0 {
        0.0
    } else if s > 0 {
        (s as f64 - 1.0) / var.sqrt()
    } else if s < 0 {
        (s as f64 + 1.0) / var.sqrt()
    } else {
        0.0
    };
    TrendTest {
        s,
        z,
        p_increasing: 1.0 - normal_cdf(z),
    }
}

fn sign<T: Real>(a: T, b: T) -> i8 {
    if a > b {
        1
    } else if a < b {
        -1
    } else {
        0
    }
}

fn tie_groups<T: Real>(v: &[T]) -> Vec<usize> {
    let mut sorted: Vec<T> = v.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut groups = Vec::new();
    let mut run = 1usize;
    for i in 1..sorted.len() {
        if sorted[i] == sorted[i - 1] {
            run += 1;
        } else {
            if run > 1 {
                groups.push(run);
            }
            run = 1;
        }
    }
    if run > 1 {
        groups.push(run);
    }
    groups
}
