//! Independent reference implementations: direct summation for Pearson,
//! quadrature of the Student-t density for p-values, root finding for
//! Wilson bounds. Shared by the statistics tests and the acceptance run.
#![allow(dead_code)]

use probe_core::StimRng;

/// (level, two-sided normal quantile)
pub const Z_LEVELS: [(f64, f64); 3] = [(0.95, 1.959_963_984_540_054), (0.90, 1.644_853_626_951_472_2), (0.99, 2.575_829_303_548_900_4)];

/// ln Γ(x), Lanczos approximation (g = 7, 9 terms).
pub fn ln_gamma(x: f64) -> f64 {
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
    let t = x + 7.5;
    for (i, c) in C.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

pub fn t_pdf(x: f64, df: f64) -> f64 {
    let ln_c =
        ln_gamma((df + 1.0) / 2.0) - ln_gamma(df / 2.0) - 0.5 * (df * std::f64::consts::PI).ln();
    (ln_c - (df + 1.0) / 2.0 * (1.0 + x * x / df).ln()).exp()
}

fn simpson(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
        return left + right + (left + right - whole) / 15.0;
    }
    simpson(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
        + simpson(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
}

fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    // split first so the adaptive step sees the shape of the integrand
    let pieces = 64;
    (0..pieces)
        .map(|k| {
            let (lo, hi) = (
                a + (b - a) * k as f64 / pieces as f64,
                a + (b - a) * (k + 1) as f64 / pieces as f64,
            );
            let (fa, fb, fm) = (f(lo), f(hi), f(0.5 * (lo + hi)));
            let whole = (hi - lo) / 6.0 * (fa + 4.0 * fm + fb);
            simpson(f, lo, hi, fa, fm, fb, whole, 1e-15, 40)
        })
        .sum()
}

/// Two-sided Student-t p by quadrature of the density.
pub fn oracle_t_p(t: f64, df: f64) -> f64 {
    let a = t.abs();
    if a < 1.0 {
        1.0 - 2.0 * integrate(&|x| t_pdf(x, df), 0.0, a)
    } else {
        // x = a / s maps the tail [a, ∞) onto (0, 1]
        let g = |s: f64| {
            if s == 0.0 {
                0.0
            } else {
                t_pdf(a / s, df) * a / (s * s)
            }
        };
        2.0 * integrate(&g, 0.0, 1.0)
    }
}

pub fn oracle_pearson(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let sx: f64 = x.iter().sum();
    let sy: f64 = y.iter().sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let sxx: f64 = x.iter().map(|a| a * a).sum();
    let syy: f64 = y.iter().map(|b| b * b).sum();
    let cov = sxy / n - (sx / n) * (sy / n);
    let r = cov / ((sxx / n - (sx / n).powi(2)).sqrt() * (syy / n - (sy / n).powi(2)).sqrt());
    let df = n - 2.0;
    (r, oracle_t_p(r * (df / (1.0 - r * r)).sqrt(), df))
}

pub fn sample(rng: &mut StimRng, n: usize, mu: f64, sd: f64) -> Vec<f64> {
    (0..n)
        .map(|_| mu + sd * (rng.uniform() + rng.uniform() + rng.uniform() - 1.5) * 2.0)
        .collect()
}

/// t statistic and degrees of freedom from the textbook formulas.
pub fn oracle_t_df(a: &[f64], b: &[f64], paired: bool) -> (f64, f64) {
    let moments = |s: &[f64]| {
        let n = s.len() as f64;
        let m = s.iter().sum::<f64>() / n;
        (m, s.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0), n)
    };
    if paired {
        let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
        let (m, v, n) = moments(&d);
        (m / (v / n).sqrt(), n - 1.0)
    } else {
        let ((ma, va, na), (mb, vb, nb)) = (moments(a), moments(b));
        let (sa, sb) = (va / na, vb / nb);
        ((ma - mb) / (sa + sb).sqrt(), (sa + sb).powi(2) / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0)))
    }
}

/// Wilson bounds are the roots of (p̂ − π)² = z² π(1 − π) / n; find each
/// by bisection on its side of p̂.
pub fn oracle_wilson(s: usize, n: usize, z: f64) -> (f64, f64) {
    let p = s as f64 / n as f64;
    let g = |pi: f64| (p - pi).powi(2) - z * z * pi * (1.0 - pi) / n as f64;
    let root = |mut lo: f64, mut hi: f64| {
        // g(lo) and g(hi) have opposite signs
        let sign_lo = g(lo) > 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if (g(mid) > 0.0) == sign_lo {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    };
    let low = if s == 0 { 0.0 } else { root(0.0, p) };
    let high = if s == n { 1.0 } else { root(p, 1.0) };
    (low, high)
}
