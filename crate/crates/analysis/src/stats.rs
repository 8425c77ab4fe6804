use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};
use thiserror::Error;

#[derive(Clone, Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("need at least {needed} values, got {got}")]
    TooFew { needed: usize, got: usize },
    #[error("samples differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("zero variance")]
    ZeroVariance,
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample variance with the n − 1 denominator.
pub fn sample_variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() as f64 - 1.0)
}

pub fn sample_sd(x: &[f64]) -> f64 {
    sample_variance(x).sqrt()
}

/// Two-sided p-value of `t` under Student's t with `df` degrees of freedom.
pub fn t_two_sided_p(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    let dist = StudentsT::new(0.0, 1.0, df).expect("df > 0");
    (2.0 * dist.cdf(-t.abs())).min(1.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult {
    pub r: f64,
    pub p: f64,
    pub n: usize,
}

/// Sample Pearson correlation with a two-sided p from
/// t = r·√((n−2)/(1−r²)) on n − 2 degrees of freedom.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<CorrelationResult, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    let n = x.len();
    if n < 3 {
        return Err(StatsError::TooFew { needed: 3, got: n });
    }
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(StatsError::ZeroVariance);
    }
    let r = (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0);
    let df = (n - 2) as f64;
    let p = if r.abs() == 1.0 {
        0.0
    } else {
        t_two_sided_p(r * (df / (1.0 - r * r)).sqrt(), df)
    };
    Ok(CorrelationResult { r, p, n })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t: f64,
    pub p: f64,
    pub df: f64,
}

/// Paired: one-sample t on the differences a − b. Unpaired: Welch's t
/// with Welch–Satterthwaite degrees of freedom. Two-sided.
pub fn ttest(a: &[f64], b: &[f64], paired: bool) -> Result<TTest, StatsError> {
    for s in [a, b] {
        if s.len() < 2 {
            return Err(StatsError::TooFew {
                needed: 2,
                got: s.len(),
            });
        }
    }
    let (t, df) = if paired {
        if a.len() != b.len() {
            return Err(StatsError::LengthMismatch(a.len(), b.len()));
        }
        let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
        let sd = sample_sd(&d);
        if sd == 0.0 {
            return Err(StatsError::ZeroVariance);
        }
        let n = d.len() as f64;
        (mean(&d) / (sd / n.sqrt()), n - 1.0)
    } else {
        let (na, nb) = (a.len() as f64, b.len() as f64);
        let (va, vb) = (sample_variance(a) / na, sample_variance(b) / nb);
        if va + vb == 0.0 {
            return Err(StatsError::ZeroVariance);
        }
        let t = (mean(a) - mean(b)) / (va + vb).sqrt();
        let df = (va + vb).powi(2) / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
        (t, df)
    };
    Ok(TTest {
        t,
        p: t_two_sided_p(t, df),
        df,
    })
}

/// Wilson score interval for `successes` out of `n` at the given
/// two-sided confidence level.
pub fn wilson_ci(successes: usize, n: usize, level: f64) -> (f64, f64) {
    assert!(
        n >= 1 && successes <= n,
        "wilson_ci needs 0 ≤ successes ≤ n, n ≥ 1"
    );
    let z = Normal::standard().inverse_cdf(0.5 + level / 2.0);
    let nf = n as f64;
    let p = successes as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let center = (p + z2 / (2.0 * nf)) / denom;
    let half = z * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
    let lo = if successes == 0 {
        0.0
    } else {
        (center - half).max(0.0)
    };
    let hi = if successes == n {
        1.0
    } else {
        (center + half).min(1.0)
    };
    (lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_correlations() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let up = pearson(&x, &x).unwrap();
        assert_eq!((up.r, up.p), (1.0, 0.0));
        assert_eq!(pearson(&x, &[4.0, 3.0, 2.0, 1.0]).unwrap().r, -1.0);
        assert_eq!(pearson(&x, &[1.0; 4]), Err(StatsError::ZeroVariance));
        assert!(matches!(
            pearson(&x[..2], &x[..2]),
            Err(StatsError::TooFew { .. })
        ));
    }

    #[test]
    fn ttest_cases() {
        let a = [1.0, 2.0, 3.0];
        assert_eq!(ttest(&a, &a, true), Err(StatsError::ZeroVariance));
        let b: Vec<f64> = a.iter().map(|v| v + 10.0).collect();
        let t = ttest(&a, &b, false).unwrap();
        assert!(t.t < -10.0 && t.p < 0.01);
        assert!((t.df - 4.0).abs() < 1e-12);
    }

    #[test]
    fn wilson_cases() {
        let (lo, hi) = wilson_ci(0, 10, 0.95);
        assert_eq!(lo, 0.0);
        assert!((hi - 0.2775).abs() < 5e-4);
        assert_eq!(wilson_ci(10, 10, 0.95).1, 1.0);
    }
}
