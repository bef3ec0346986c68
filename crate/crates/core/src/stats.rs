//! Goodness-of-fit helpers: normal and chi-square tails, Kolmogorov-Smirnov.

use crate::special::gamma_pq;

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    if z.is_nan() {
        return f64::NAN;
    }
    let tail = 0.5 * gamma_pq(0.5, 0.5 * z * z).1;
    if z >= 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

/// Upper tail P(χ²_df > stat).
pub fn chi_square_sf(stat: f64, df: usize) -> f64 {
    if df == 0 {
        return if stat > 0.0 { 0.0 } else { 1.0 };
    }
    gamma_pq(0.5 * df as f64, 0.5 * stat.max(0.0)).1
}

/// Survival function of the Kolmogorov distribution, P(K > lambda).
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.0 {
        // Jacobi-transformed series, fast for small lambda.
        let c = std::f64::consts::PI * std::f64::consts::PI / (8.0 * lambda * lambda);
        let mut s = 0.0;
        for k in 1..50 {
            let odd = (2 * k - 1) as f64;
            let t = (-odd * odd * c).exp();
            s += t;
            if t < 1e-17 * s {
                break;
            }
        }
        return (1.0 - (2.0 * std::f64::consts::PI).sqrt() / lambda * s).clamp(0.0, 1.0);
    }
    let mut s = 0.0;
    let mut sign = 1.0;
    for k in 1..100 {
        let kf = k as f64;
        let t = (-2.0 * kf * kf * lambda * lambda).exp();
        s += sign * t;
        if t < 1e-17 {
            break;
        }
        sign = -sign;
    }
    (2.0 * s).clamp(0.0, 1.0)
}

/// Asymptotic p-value of a one-sample KS statistic, with Stephens'
/// small-sample correction.
pub fn ks_pvalue(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    kolmogorov_sf((sn + 0.12 + 0.11 / sn) * d)
}

/// Asymptotic critical value c(alpha) of sqrt(n) D.
pub fn ks_critical(alpha: f64) -> f64 {
    (-0.5 * (0.5 * alpha).ln()).sqrt()
}

/// One-sample KS distance between the empirical law of `data` and `cdf`.
/// Tied values are treated as one jump of the empirical CDF.
pub fn ks_statistic(data: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut xs = data.to_vec();
    xs.sort_by(|a, b| a.total_cmp(b));
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    let mut i = 0;
    while i < xs.len() {
        let mut j = i;
        while j < xs.len() && xs[j] == xs[i] {
            j += 1;
        }
        let f = cdf(xs[i]);
        d = d.max((f - i as f64 / n).abs()).max((j as f64 / n - f).abs());
        i = j;
    }
    d
}

/// KS distance for lattice-valued data against a continuous approximation.
/// The empirical CDF is flat between lattice points, so `cdf` is evaluated
/// at the midpoints between each observed value and its lattice neighbours,
/// given by `neighbours(v) = (previous, next)`.
pub fn ks_statistic_lattice(
    data: &[f64],
    cdf: impl Fn(f64) -> f64,
    neighbours: impl Fn(f64) -> (f64, f64),
) -> f64 {
    let mut xs = data.to_vec();
    xs.sort_by(|a, b| a.total_cmp(b));
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    let mut i = 0;
    while i < xs.len() {
        let mut j = i;
        while j < xs.len() && xs[j] == xs[i] {
            j += 1;
        }
        let (prev, next) = neighbours(xs[i]);
        let below = cdf(0.5 * (prev + xs[i]));
        let above = cdf(0.5 * (xs[i] + next));
        d = d.max((below - i as f64 / n).abs()).max((j as f64 / n - above).abs());
        i = j;
    }
    d
}

/// Upper-alpha quantile of the chi-square distribution.
pub fn chi_square_quantile(df: usize, alpha: f64) -> f64 {
    if df == 0 {
        return 0.0;
    }
    2.0 * crate::special::inv_reg_gamma_upper(0.5 * df as f64, alpha).unwrap_or(f64::NAN)
}

/// Result of a chi-square goodness-of-fit test after pooling.
#[derive(Debug, Clone, PartialEq)]
pub struct ChiSquare {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
    pub cells: usize,
}

/// Chi-square test of observed counts against cell probabilities. Adjacent
/// cells are pooled left to right until each expected count is at least
/// `min_expected`; a leftover underfull cell joins the last pooled one.
pub fn chi_square_gof(observed: &[u64], probs: &[f64], min_expected: f64) -> ChiSquare {
    assert_eq!(observed.len(), probs.len());
    let total: u64 = observed.iter().sum();
    let n = total as f64;
    let mut pooled: Vec<(f64, f64)> = Vec::new();
    let (mut o, mut e) = (0.0, 0.0);
    for (&ob, &p) in observed.iter().zip(probs) {
        o += ob as f64;
        e += p * n;
        if e >= min_expected {
            pooled.push((o, e));
            o = 0.0;
            e = 0.0;
        }
    }
    if e > 0.0 || o > 0.0 {
        match pooled.last_mut() {
            Some(last) => {
                last.0 += o;
                last.1 += e;
            }
            None => pooled.push((o, e)),
        }
    }
    let statistic: f64 = pooled
        .iter()
        .map(|&(o, e)| if e > 0.0 { (o - e) * (o - e) / e } else if o > 0.0 { f64::INFINITY } else { 0.0 })
        .sum();
    let df = pooled.len().saturating_sub(1);
    ChiSquare {
        statistic,
        df,
        p_value: chi_square_sf(statistic, df),
        cells: pooled.len(),
    }
}

/// Standardized deviation of an observed proportion from p.
pub fn proportion_z(successes: u64, trials: u64, p: f64) -> f64 {
    let n = trials as f64;
    let sd = (n * p * (1.0 - p)).sqrt();
    if sd == 0.0 {
        return if successes as f64 == n * p { 0.0 } else { f64::INFINITY };
    }
    (successes as f64 - n * p) / sd
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    covariance(xs, xs)
}

/// Unbiased sample covariance.
pub fn covariance(xs: &[f64], ys: &[f64]) -> f64 {
    let (mx, my) = (mean(xs), mean(ys));
    let s: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    s / (xs.len() as f64 - 1.0)
}

pub fn correlation(xs: &[f64], ys: &[f64]) -> f64 {
    covariance(xs, ys) / (variance(xs) * variance(ys)).sqrt()
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
