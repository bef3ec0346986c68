//! Statistical checks of sampler output against the limit laws: length and
//! weight marginals, the joint normal law, extremes, the limit shape of the
//! Young diagram and its fluctuations, and conditional uniformity.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibrate::{
    calibrate_corrected, calibrate_crude, calibrate_exact, censoring_limit, exact_moments, gumbel_shift, upper_cutoff,
    CalibrationMethod, ModelParams, MomentSummary, Regime, RejectionTask, TaskKind,
};
use crate::enumerate::{count_partitions, list_partitions, partial_generating_function};
use crate::error::{domain, Error, Result};
use crate::sampler::{FreeSampler, Partition, RngHandle, ScanMethod, Verdict};
use crate::special::{cpg_cdf, cpg_pdf, gamma_pq, ln_gamma, CompoundPGParams};
use crate::stats::{
    chi_square_gof, chi_square_quantile, correlation, covariance, ks_critical, ks_statistic, ks_statistic_lattice,
    mean, normal_cdf, proportion_z, variance,
};

/// Default significance level of a single test.
pub const DEFAULT_ALPHA: f64 = 0.01;

/// Part-size tolerance used when drawing validation samples: the chance of
/// any part above the cutoff is about 1e-6, far below Monte Carlo resolution.
pub const VALIDATION_DELTA: f64 = 1e-6;

/// Binomial/normal proportion tests use this many standard deviations.
const SIGMA_BAND: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestVerdict {
    Pass,
    Fail,
    /// The check ran outside the regime its law is stated for.
    Warning,
    NotApplicable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub name: String,
    pub statistic: f64,
    pub threshold: f64,
    #[serde(rename = "n")]
    pub sample_size: usize,
    pub verdict: TestVerdict,
    pub reference: String,
}

impl TestResult {
    fn new(name: impl Into<String>, statistic: f64, threshold: f64, n: usize, pass: bool, reference: &str) -> Self {
        Self {
            name: name.into(),
            statistic,
            threshold,
            sample_size: n,
            verdict: if pass { TestVerdict::Pass } else { TestVerdict::Fail },
            reference: reference.into(),
        }
    }

    fn not_applicable(name: impl Into<String>, n: usize, reference: &str) -> Self {
        Self {
            name: name.into(),
            statistic: f64::NAN,
            threshold: f64::NAN,
            sample_size: n,
            verdict: TestVerdict::NotApplicable,
            reference: reference.into(),
        }
    }

    /// Downgrade to a warning, keeping the statistic.
    fn warn(mut self) -> Self {
        self.verdict = TestVerdict::Warning;
        self
    }

    pub fn passed(&self) -> bool {
        self.verdict == TestVerdict::Pass
    }
}

/// KS test at level alpha: passes when D is below c(alpha)/sqrt(n).
fn ks_result(name: impl Into<String>, d: f64, n: usize, alpha: f64, reference: &str) -> TestResult {
    let threshold = ks_critical(alpha) / (n as f64).sqrt();
    TestResult::new(name, d, threshold, n, d < threshold, reference)
}

/// Two-sided band test: |statistic| within `threshold`.
fn band_result(name: impl Into<String>, statistic: f64, threshold: f64, n: usize, reference: &str) -> TestResult {
    TestResult::new(name, statistic, threshold, n, statistic.abs() <= threshold, reference)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ValidationReport {
    pub results: Vec<TestResult>,
}

impl ValidationReport {
    /// True when no test failed. Warnings and not-applicable entries do not
    /// count against the run.
    pub fn all_pass(&self) -> bool {
        self.results.iter().all(|r| r.verdict != TestVerdict::Fail)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Y_λ(x), the number of parts ≥ x.
pub fn young_boundary_eval(partition: &Partition, x: f64) -> usize {
    partition.parts().partition_point(|&p| p as f64 >= x)
}

/// ∫Y_λ, summed over the steps of the diagram.
pub fn young_area(partition: &Partition) -> u64 {
    let parts = partition.parts();
    parts
        .iter()
        .enumerate()
        .map(|(k, &p)| (p - parts.get(k + 1).copied().unwrap_or(0)) * (k as u64 + 1))
        .sum()
}

/// Ỹ_λ(x) = Y_λ(Ax)/⟨M⟩ with A = q⟨N⟩/⟨M⟩, at each grid point.
pub fn scaled_young(partition: &Partition, q: u32, n_target: f64, m_target: f64, grid: &[f64]) -> Vec<f64> {
    let a = q as f64 * n_target / m_target;
    grid.iter()
        .map(|&x| young_boundary_eval(partition, a * x) as f64 / m_target)
        .collect()
}

fn omega(q: u32, x: f64) -> f64 {
    gamma_pq(1.0 / q as f64, x.max(0.0)).1
}

/// sup_x |Ỹ_λ(x) - ω*_q(x)| for one partition. Ỹ is a step function and ω*
/// is decreasing, so the supremum is attained at a step endpoint.
fn sup_distance(partition: &Partition, q: u32, a: f64, m_target: f64) -> f64 {
    let s: Vec<f64> = partition.parts().iter().map(|&p| p as f64 / a).collect();
    let Some(&top) = s.first() else {
        return 1.0;
    };
    let mut sup = omega(q, top);
    for k in 1..=s.len() {
        let c = k as f64 / m_target;
        let hi = s[k - 1];
        let lo = s.get(k).copied().unwrap_or(0.0);
        sup = sup.max((c - omega(q, hi)).abs()).max((c - omega(q, lo)).abs());
    }
    sup
}

/// Per-partition uniform distance between the scaled diagram and ω*_q.
pub fn limit_shape_sup_distance(samples: &[Partition], q: u32, n_target: f64, m_target: f64) -> Result<Vec<f64>> {
    if samples.is_empty() {
        return domain("limit shape distance needs at least one sample");
    }
    let a = q as f64 * n_target / m_target;
    Ok(samples.par_iter().map(|p| sup_distance(p, q, a, m_target)).collect())
}

/// Variance ratio ⟨M⟩ Var(Ỹ(x))/ω*_q(x) and a normality check of the
/// standardized Ỹ(x). Centering is at the empirical mean.
pub fn fluctuation_variance_check(
    samples: &[Partition],
    q: u32,
    n_target: f64,
    m_target: f64,
    x: f64,
    alpha: f64,
) -> Result<Vec<TestResult>> {
    if !(x > 0.0) {
        return domain(format!("fluctuation check needs x > 0, got {x}"));
    }
    if samples.len() < 1000 {
        return Err(Error::Resource(format!("fluctuation check needs 1000 samples, got {}", samples.len())));
    }
    let w = omega(q, x);
    if w < 1e-6 {
        return domain(format!("omega*_{q}({x}) = {w:e} is degenerate"));
    }
    let n = samples.len();
    let ys: Vec<f64> = samples
        .iter()
        .map(|p| scaled_young(p, q, n_target, m_target, &[x])[0])
        .collect();
    let ratio = m_target * variance(&ys) / w;
    let tol = 0.15f64.max(6.0 / (n as f64).sqrt());
    let reference = "Gaussian fluctuations of the scaled Young diagram";
    let var_test = band_result(format!("fluctuation variance ratio at x={x}"), ratio - 1.0, tol, n, reference);

    let mu = mean(&ys);
    let sd = (w / m_target).sqrt();
    let h = 1.0 / (m_target * sd);
    let zs: Vec<f64> = ys.iter().map(|y| (y - mu) / sd).collect();
    let d = ks_statistic_lattice(&zs, normal_cdf, |v| (v - h, v + h));
    let ks = ks_result(format!("fluctuation normality at x={x}"), d, n, alpha, reference);
    Ok(vec![var_test, ks])
}

/// Chi-square of the length histogram against Poisson(μ), μ = ⟨M⟩ unless
/// overridden.
pub fn test_length_poisson(samples: &[Partition], m_target: f64, mu_override: Option<f64>, alpha: f64) -> Result<TestResult> {
    if samples.len() < 1000 {
        return Err(Error::Resource(format!("Poisson test needs 1000 samples, got {}", samples.len())));
    }
    let mu = mu_override.unwrap_or(m_target);
    if !(mu > 0.0) {
        return domain(format!("Poisson mean must be positive, got {mu}"));
    }
    let max_len = samples.iter().map(Partition::length).max().unwrap_or(0);
    let cells = max_len.max((mu + 10.0 * mu.sqrt() + 10.0) as usize) + 1;
    let mut observed = vec![0u64; cells];
    for p in samples {
        observed[p.length()] += 1;
    }
    let mut probs: Vec<f64> = (0..cells)
        .map(|k| (-mu + k as f64 * mu.ln() - ln_gamma(k as f64 + 1.0)).exp())
        .collect();
    // The last cell carries the whole upper tail.
    let head: f64 = probs[..cells - 1].iter().sum();
    probs[cells - 1] = (1.0 - head).max(0.0);
    let chi = chi_square_gof(&observed, &probs, 5.0);
    let threshold = chi_square_quantile(chi.df, alpha);
    Ok(TestResult::new(
        format!("length ~ Poisson({mu:.6}) chi-square, {} cells", chi.cells),
        chi.statistic,
        threshold,
        samples.len(),
        chi.statistic <= threshold,
        "Poisson limit of the number of parts",
    ))
}

/// KS of γ₀N_λ given M_λ = m against Gamma(m/q).
pub fn test_weight_conditional_gamma(
    samples: &[Partition],
    m: usize,
    q: u32,
    n_target: f64,
    m_target: f64,
    alpha: f64,
) -> Result<TestResult> {
    if m == 0 {
        return domain("conditional weight law needs m >= 1");
    }
    let gamma0 = m_target / (q as f64 * n_target);
    let xs: Vec<f64> = samples
        .iter()
        .filter(|p| p.length() == m)
        .map(|p| gamma0 * p.weight() as f64)
        .collect();
    if xs.len() < 500 {
        return Err(Error::Resource(format!(
            "conditional gamma test needs 500 samples with m = {m}, got {}",
            xs.len()
        )));
    }
    let shape = m as f64 / q as f64;
    let d = ks_statistic(&xs, |x| if x > 0.0 { gamma_pq(shape, x).0 } else { 0.0 });
    Ok(ks_result(
        format!("weight | M={m} ~ Gamma({shape:.4}) KS"),
        d,
        xs.len(),
        alpha,
        "gamma limit of the weight given the length",
    ))
}

/// Marginal law of γ₀N_λ against the compound Poisson-Gamma law. The atom at
/// zero is tested as a binomial proportion and the continuous part by KS on
/// the nonempty samples; the mean is checked against ⟨M⟩/q.
pub fn test_weight_marginal(
    samples: &[Partition],
    q: u32,
    m_target: f64,
    n_target: f64,
    alpha: f64,
) -> Result<Vec<TestResult>> {
    let n = samples.len();
    if n < 1000 {
        return Err(Error::Resource(format!("weight marginal test needs 1000 samples, got {n}")));
    }
    let cpg = CompoundPGParams::for_power(m_target, q)?;
    let atom = cpg.atom();
    let gamma0 = m_target / (q as f64 * n_target);
    let reference = "compound Poisson-Gamma limit of the weight";
    let zeros = samples.iter().filter(|p| p.is_empty()).count();
    let xs: Vec<f64> = samples
        .iter()
        .filter(|p| !p.is_empty())
        .map(|p| gamma0 * p.weight() as f64)
        .collect();
    let mut out = Vec::new();

    let z = proportion_z(zeros as u64, n as u64, atom);
    out.push(band_result(format!("empty fraction vs e^-<M> = {atom:.6e}"), z, SIGMA_BAND, n, reference));

    if xs.len() >= 2 {
        let cdf = |x: f64| ((cpg_cdf(&cpg, x).unwrap_or(f64::NAN) - atom) / (1.0 - atom)).clamp(0.0, 1.0);
        let d = ks_statistic(&xs, cdf);
        out.push(ks_result("weight ~ compound Poisson-Gamma KS (x > 0)", d, xs.len(), alpha, reference));
    }

    let all: Vec<f64> = samples.iter().map(|p| gamma0 * p.weight() as f64).collect();
    let se = (variance(&all) / n as f64).sqrt();
    let target = m_target / q as f64;
    out.push(band_result(
        format!("mean of gamma0*N vs <M>/q = {target:.6}"),
        (mean(&all) - target) / se,
        SIGMA_BAND,
        n,
        reference,
    ));
    Ok(out)
}

/// Local minimum of the compound Poisson-Gamma density on (0, 1], when the
/// density has an interior dip near the origin.
pub fn cpg_density_dip(q: u32, m_target: f64) -> Result<Option<f64>> {
    let cpg = CompoundPGParams::for_power(m_target, q)?;
    let f = |x: f64| cpg_pdf(&cpg, x).unwrap_or(f64::INFINITY);
    let (mut a, mut b) = (1e-4, 1.0);
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > 1e-10 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    let x0 = 0.5 * (a + b);
    let interior = x0 > 1e-3 && x0 < 0.999 && f(x0) < f(1e-3) && f(x0) < f(1.0);
    Ok(interior.then_some(x0))
}

/// Excess of small weights near the density dip x₀: the empirical mass of
/// {γ₀N_λ ≤ x₀} (empty partitions included) must exceed π₀ + x₀g(x₀) and
/// agree with G(x₀) within the binomial band.
pub fn small_weight_excess(samples: &[Partition], q: u32, n_target: f64, m_target: f64) -> Result<TestResult> {
    let reference = "singularity of the weight density at the origin";
    let n = samples.len();
    let Some(x0) = cpg_density_dip(q, m_target)? else {
        return Ok(TestResult::not_applicable("small-weight excess", n, reference));
    };
    let cpg = CompoundPGParams::for_power(m_target, q)?;
    let bound = cpg.atom() + x0 * cpg_pdf(&cpg, x0)?;
    let g = cpg_cdf(&cpg, x0)?;
    let gamma0 = m_target / (q as f64 * n_target);
    let hits = samples.iter().filter(|p| gamma0 * p.weight() as f64 <= x0).count();
    let frac = hits as f64 / n as f64;
    let z = proportion_z(hits as u64, n as u64, g);
    Ok(TestResult::new(
        format!("small-weight excess at x0={x0:.5}: mass {frac:.5} vs bound {bound:.5}, G(x0)={g:.5}"),
        frac,
        bound,
        n,
        frac > bound && z.abs() <= SIGMA_BAND,
        reference,
    ))
}

/// N*, M* standardized by the targets.
pub fn standardize(partition: &Partition, q: u32, n_target: f64, m_target: f64) -> (f64, f64) {
    let n_star = (m_target / (q as f64 + 1.0)).sqrt() * (partition.weight() as f64 - n_target) / n_target;
    let m_star = (partition.length() as f64 - m_target) / m_target.sqrt();
    (n_star, m_star)
}

/// Bivariate normal limit of (N*, M*): marginal KS, correlation
/// 1/sqrt(q+1), and coverage of the 90% Mahalanobis ellipse.
pub fn test_joint_normal(
    samples: &[Partition],
    q: u32,
    n_target: f64,
    m_target: f64,
    alpha: f64,
) -> Result<Vec<TestResult>> {
    let n = samples.len();
    if n < 10_000 {
        return Err(Error::Resource(format!("joint normal test needs 10^4 samples, got {n}")));
    }
    let reference = "bivariate normal limit of weight and length";
    let (ns, ms): (Vec<f64>, Vec<f64>) = samples.iter().map(|p| standardize(p, q, n_target, m_target)).unzip();
    let h = 1.0 / m_target.sqrt();
    let mut out = vec![
        ks_result("N* ~ N(0,1) KS", ks_statistic(&ns, normal_cdf), n, alpha, reference),
        ks_result(
            "M* ~ N(0,1) KS",
            ks_statistic_lattice(&ms, normal_cdf, |v| (v - h, v + h)),
            n,
            alpha,
            reference,
        ),
    ];
    let rho = 1.0 / (q as f64 + 1.0).sqrt();
    out.push(band_result(
        format!("corr(N*, M*) - 1/sqrt(q+1) = {rho:.4}"),
        correlation(&ns, &ms) - rho,
        0.03,
        n,
        reference,
    ));
    let level = 0.1f64;
    let radius = 2.0 * q as f64 / (q as f64 + 1.0) * (1.0 / level).ln();
    let inside = ns
        .iter()
        .zip(&ms)
        .filter(|&(&a, &b)| a * a - 2.0 * rho * a * b + b * b <= radius)
        .count();
    let coverage = inside as f64 / n as f64;
    out.push(band_result(
        "ellipse coverage - 0.9",
        coverage - (1.0 - level),
        0.02,
        n,
        reference,
    ));
    if m_target < 10.0 {
        out = out.into_iter().map(TestResult::warn).collect();
    }
    Ok(out)
}

/// Neighbours of v = scale·j^q + shift on the lattice of q-th powers.
fn power_lattice(scale: f64, shift: f64, q: u32) -> impl Fn(f64) -> (f64, f64) {
    move |v: f64| {
        let j = ((v - shift) / scale).max(0.0).powf(1.0 / q as f64).round();
        let at = |k: f64| scale * k.max(0.0).powi(q as i32) + shift;
        (at(j - 1.0), at(j + 1.0))
    }
}

/// Limit laws of the largest and smallest parts.
pub fn test_extremes(
    samples: &[Partition],
    q: u32,
    n_target: f64,
    m_target: f64,
    regime: Regime,
    alpha: f64,
) -> Result<Vec<TestResult>> {
    let n = samples.len();
    if n < 10_000 {
        return Err(Error::Resource(format!("extremes test needs 10^4 samples, got {n}")));
    }
    let a = 1.0 / q as f64;
    let gamma0 = m_target / (q as f64 * n_target);
    let nonempty: Vec<&Partition> = samples.iter().filter(|p| !p.is_empty()).collect();
    let lmax: Vec<f64> = nonempty.iter().map(|p| p.largest().unwrap() as f64).collect();
    let lmin: Vec<f64> = nonempty.iter().map(|p| p.smallest().unwrap() as f64).collect();
    let k = nonempty.len();
    let mut out = Vec::new();
    match regime {
        Regime::FixedM => {
            let reference = "fixed-length laws of the extreme parts";
            let atom = (-m_target).exp();
            let z = proportion_z((n - k) as u64, n as u64, atom);
            out.push(band_result(format!("empty fraction vs e^-<M> = {atom:.6e}"), z, SIGMA_BAND, n, reference));
            let cond = |g: f64| ((g - atom) / (1.0 - atom)).clamp(0.0, 1.0);
            let xs: Vec<f64> = lmax.iter().map(|l| gamma0 * l).collect();
            let d = ks_statistic_lattice(
                &xs,
                |x| cond((-m_target * gamma_pq(a, x.max(0.0)).1).exp()),
                power_lattice(gamma0, 0.0, q),
            );
            out.push(ks_result("gamma0*lambda_max law KS (nonempty)", d, k, alpha, reference));
            let xs: Vec<f64> = lmin.iter().map(|l| gamma0 * l).collect();
            let d = ks_statistic_lattice(
                &xs,
                |x| 1.0 - cond((-m_target * gamma_pq(a, x.max(0.0)).0).exp()),
                power_lattice(gamma0, 0.0, q),
            );
            out.push(ks_result("gamma0*lambda_min law KS (nonempty)", d, k, alpha, reference));
            if m_target > 10.0 {
                out = out.into_iter().map(TestResult::warn).collect();
            }
        }
        Regime::GrowingM => {
            let reference = "Weibull and Gumbel limits of the extreme parts";
            let b_q = (q as f64 * m_target / ln_gamma(a).exp()).powi(q as i32);
            let shift = gumbel_shift(q, m_target)?;
            let weibull = |x: f64| 1.0 - (-x.max(0.0).powf(a)).exp();
            let gumbel = |x: f64| (-(-x).exp()).exp();
            let mins: Vec<f64> = lmin.iter().map(|l| gamma0 * b_q * l).collect();
            let maxs: Vec<f64> = lmax.iter().map(|l| gamma0 * l - shift).collect();
            let d = ks_statistic_lattice(&mins, weibull, power_lattice(gamma0 * b_q, 0.0, q));
            out.push(ks_result(format!("lambda*_min ~ Weibull(1/{q}) KS"), d, k, alpha, reference));
            let d = ks_statistic_lattice(&maxs, gumbel, power_lattice(gamma0, -shift, q));
            out.push(ks_result("lambda*_max ~ Gumbel KS", d, k, alpha, reference));
            let u: Vec<f64> = mins.iter().map(|&x| weibull(x)).collect();
            let v: Vec<f64> = maxs.iter().map(|&x| gumbel(x)).collect();
            out.push(band_result(
                "corr of transformed lambda*_min, lambda*_max",
                correlation(&u, &v),
                SIGMA_BAND / (k as f64).sqrt(),
                k,
                reference,
            ));
            if m_target < 10.0 {
                out = out.into_iter().map(TestResult::warn).collect();
            }
        }
    }
    Ok(out)
}

/// Chi-square of accepted samples over the enumerated space Λ(n, m)
/// against the uniform law.
pub fn test_uniformity(task_samples: &[Partition], q: u32, n: u64, m: u32, alpha: f64) -> Result<TestResult> {
    let reference = "uniformity of the Boltzmann law given weight and length";
    let count = count_partitions(q, n, m)?;
    if count < 2 {
        return Ok(TestResult::not_applicable(
            format!("uniformity over {count} partition(s)"),
            task_samples.len(),
            reference,
        ));
    }
    if count > 10_000 {
        return Err(Error::Resource(format!("uniformity test space has {count} > 10^4 members")));
    }
    let space = list_partitions(q, n, m)?;
    let index: HashMap<&Partition, usize> = space.iter().enumerate().map(|(i, p)| (p, i)).collect();
    let mut observed = vec![0u64; space.len()];
    for p in task_samples {
        match index.get(p) {
            Some(&i) => observed[i] += 1,
            None => {
                return Ok(TestResult::new(
                    format!("uniformity over {} cells", space.len()),
                    f64::INFINITY,
                    f64::NAN,
                    task_samples.len(),
                    false,
                    reference,
                ));
            }
        }
    }
    let probs = vec![1.0 / space.len() as f64; space.len()];
    let chi = chi_square_gof(&observed, &probs, 0.0);
    let threshold = chi_square_quantile(chi.df, alpha);
    Ok(TestResult::new(
        format!("uniformity chi-square over {} cells", chi.cells),
        chi.statistic,
        threshold,
        task_samples.len(),
        chi.statistic <= threshold,
        reference,
    ))
}

/// Sample moments of (N_λ, M_λ) checked against the exact series for
/// `params` (binding, within 4 standard errors) and against the leading
/// asymptotic forms (informational, 10% band, warning otherwise).
pub fn empirical_moment_report(
    samples: &[Partition],
    params: &ModelParams,
    l: Option<u64>,
) -> Result<(MomentSummary, Vec<TestResult>)> {
    let n = samples.len();
    if n < 10_000 {
        return Err(Error::Resource(format!("moment report needs 10^4 samples, got {n}")));
    }
    let ns: Vec<f64> = samples.iter().map(|p| p.weight() as f64).collect();
    let ms: Vec<f64> = samples.iter().map(|p| p.length() as f64).collect();
    let emp = MomentSummary {
        en: mean(&ns),
        em: mean(&ms),
        var_n: variance(&ns),
        var_m: variance(&ms),
        cov_nm: covariance(&ns, &ms),
        truncation_l: l,
    };
    let exact = exact_moments(params, l);
    let nf = n as f64;
    let centred = |xs: &[f64], mu: f64| -> Vec<f64> { xs.iter().map(|x| x - mu).collect() };
    let (dn, dm) = (centred(&ns, emp.en), centred(&ms, emp.em));
    let sq = |xs: &[f64]| -> Vec<f64> { xs.iter().map(|x| x * x).collect() };
    let prod: Vec<f64> = dn.iter().zip(&dm).map(|(a, b)| a * b).collect();
    let se_var_n = (variance(&sq(&dn)) / nf).sqrt();
    let se_var_m = (variance(&sq(&dm)) / nf).sqrt();
    let se_cov = (variance(&prod) / nf).sqrt();
    let reference = "exact moment series of the Boltzmann law";
    let z = |e: f64, x: f64, se: f64| if se > 0.0 { (e - x) / se } else if e == x { 0.0 } else { f64::INFINITY };
    let mut out = vec![
        band_result("E N vs exact (z)", z(emp.en, exact.en, (emp.var_n / nf).sqrt()), SIGMA_BAND, n, reference),
        band_result("E M vs exact (z)", z(emp.em, exact.em, (emp.var_m / nf).sqrt()), SIGMA_BAND, n, reference),
        band_result("Var N vs exact (z)", z(emp.var_n, exact.var_n, se_var_n), SIGMA_BAND, n, reference),
        band_result("Var M vs exact (z)", z(emp.var_m, exact.var_m, se_var_m), SIGMA_BAND, n, reference),
        band_result("Cov(N,M) vs exact (z)", z(emp.cov_nm, exact.cov_nm, se_cov), SIGMA_BAND, n, reference),
    ];
    let (q, nt, mt) = (params.q as f64, params.n_target, params.m_target);
    let asym = "leading asymptotics of the covariance matrix";
    for (name, ratio) in [
        ("Var M / <M>", emp.var_m / mt),
        ("Var N <M> / ((q+1) <N>^2)", emp.var_n * mt / ((q + 1.0) * nt * nt)),
        ("Cov(N,M) / <N>", emp.cov_nm / nt),
    ] {
        let r = band_result(name, ratio - 1.0, 0.1, n, asym);
        out.push(if r.passed() { r } else { r.warn() });
    }
    Ok((emp, out))
}

/// Empirical P(λ = ∅) against 1/F_L(z).
pub fn test_empty_atom(samples: &[Partition], params: &ModelParams, l: u64) -> TestResult {
    let n = samples.len();
    let p = 1.0 / partial_generating_function(params, l);
    let zeros = samples.iter().filter(|s| s.is_empty()).count();
    band_result(
        format!("empty fraction vs 1/F(z) = {p:.6e}"),
        proportion_z(zeros as u64, n as u64, p),
        SIGMA_BAND,
        n,
        "probability of the empty partition",
    )
}

/// Named suites driven by the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    FixedM,
    GrowingM,
    Uniformity,
    Moments,
    All,
}

impl std::str::FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fixed-m" => Ok(Self::FixedM),
            "growing-m" => Ok(Self::GrowingM),
            "uniformity" => Ok(Self::Uniformity),
            "moments" => Ok(Self::Moments),
            "all" => Ok(Self::All),
            other => domain(format!("unknown suite '{other}'")),
        }
    }
}

/// Configuration of a suite run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuiteConfig {
    pub q: u32,
    pub n_target: f64,
    pub m_target: f64,
    pub count: usize,
    pub seed: u64,
    /// Family-wise level, split across the suite's tests.
    pub alpha: f64,
    pub method: CalibrationMethod,
    /// Weight and length of the uniformity target.
    pub task: Option<(u64, u32)>,
}

impl SuiteConfig {
    pub fn new(q: u32, n_target: f64, m_target: f64, count: usize, seed: u64) -> Self {
        Self {
            q,
            n_target,
            m_target,
            count,
            seed,
            alpha: DEFAULT_ALPHA,
            method: CalibrationMethod::NewtonExact,
            task: None,
        }
    }

    pub fn params(&self) -> Result<ModelParams> {
        match self.method {
            CalibrationMethod::Crude => calibrate_crude(self.q, self.n_target, self.m_target),
            CalibrationMethod::BiasCorrected => calibrate_corrected(self.q, self.n_target, self.m_target),
            CalibrationMethod::NewtonExact | CalibrationMethod::Manual => {
                calibrate_exact(self.q, self.n_target, self.m_target, 1e-12)
            }
        }
    }

    /// Free sampler with the validation cutoff.
    pub fn sampler(&self) -> Result<FreeSampler> {
        let params = self.params()?;
        let l = upper_cutoff(self.q, self.n_target, self.m_target, VALIDATION_DELTA, Regime::FixedM)?;
        FreeSampler::new(params, l)
    }
}

/// Draws `count` accepted samples of the exact task (q, n, m). Sample i uses
/// stream i and repeats censored runs on that stream until one succeeds.
pub fn uniformity_samples(q: u32, n: u64, m: u32, count: usize, seed: u64) -> Result<Vec<Partition>> {
    if count_partitions(q, n, m)? == 0 {
        return Err(Error::EmptySpace { q, n, m });
    }
    let t_star = censoring_limit(TaskKind::T1Exact, q, n, m, 1.0, 0.1, false)?;
    let task = RejectionTask::new(TaskKind::T1Exact, q, n, m, 1.0, 0.1, false)?.with_t_star(t_star);
    let sampler = crate::sampler::RejectionSampler::new(task)?;
    (0..count as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = RngHandle::new(seed, i).rng();
            for _ in 0..10_000 {
                let rec = sampler.run(&mut rng);
                if rec.verdict == Verdict::Sampled {
                    return Ok(rec.partition.expect("sampled runs carry a partition"));
                }
            }
            Err(Error::Resource(format!("no acceptance after 10^4 censored runs on stream {i}")))
        })
        .collect()
}

type Job<'a> = Box<dyn Fn(f64) -> Result<Vec<TestResult>> + 'a>;

fn or_not_applicable(name: &str, n: usize, reference: &str, r: Result<Vec<TestResult>>) -> Result<Vec<TestResult>> {
    match r {
        Err(Error::Resource(_)) => Ok(vec![TestResult::not_applicable(name, n, reference)]),
        other => other,
    }
}

/// Runs a named suite. Each job declares how many level-alpha tests it
/// performs; alpha is split evenly over them (Bonferroni).
pub fn run_suite(suite: Suite, cfg: &SuiteConfig) -> Result<ValidationReport> {
    let (q, nt, mt) = (cfg.q, cfg.n_target, cfg.m_target);
    let needs_free = !matches!(suite, Suite::Uniformity);
    let (samples, params, l) = if needs_free {
        let sampler = cfg.sampler()?;
        let s = sampler.batch(cfg.count, cfg.seed, ScanMethod::Thinned);
        (s, Some(*sampler.params()), sampler.cutoff())
    } else {
        (Vec::new(), None, 0)
    };
    let n = samples.len();
    let fixed = matches!(suite, Suite::FixedM | Suite::All);
    let growing = matches!(suite, Suite::GrowingM | Suite::All);
    let moments = matches!(suite, Suite::Moments | Suite::All);
    let uniform = matches!(suite, Suite::Uniformity) || (suite == Suite::All && cfg.task.is_some());
    let (task, task_samples) = if uniform {
        let Some((tn, tm)) = cfg.task else {
            return domain("uniformity suite needs the task weight n and length m");
        };
        let ts = match count_partitions(q, tn, tm)? {
            0 | 1 => Vec::new(),
            _ => uniformity_samples(q, tn, tm, cfg.count, cfg.seed)?,
        };
        ((tn, tm), ts)
    } else {
        ((0, 0), Vec::new())
    };
    let mut jobs: Vec<(usize, Job)> = Vec::new();
    let s = &samples;
    if fixed {
        jobs.push((1, Box::new(move |a| Ok(vec![test_length_poisson(s, mt, None, a)?]))));
        jobs.push((1, Box::new(move |a| test_weight_marginal(s, q, mt, nt, a))));
        jobs.push((0, Box::new(move |_| Ok(vec![small_weight_excess(s, q, nt, mt)?]))));
        let mut ms = vec![q as usize, (mt.round() as usize).max(1)];
        ms.dedup();
        for m in ms {
            jobs.push((
                1,
                Box::new(move |a| {
                    or_not_applicable(
                        &format!("weight | M={m} gamma law"),
                        n,
                        "gamma limit of the weight given the length",
                        test_weight_conditional_gamma(s, m, q, nt, mt, a).map(|r| vec![r]),
                    )
                }),
            ));
        }
        jobs.push((
            2,
            Box::new(move |a| {
                or_not_applicable(
                    "fixed-length extremes",
                    n,
                    "fixed-length laws of the extreme parts",
                    test_extremes(s, q, nt, mt, Regime::FixedM, a),
                )
            }),
        ));
    }
    if growing {
        jobs.push((
            2,
            Box::new(move |a| {
                or_not_applicable("joint normal law", n, "bivariate normal limit", test_joint_normal(s, q, nt, mt, a))
            }),
        ));
        jobs.push((
            2,
            Box::new(move |a| {
                if mt <= std::f64::consts::E {
                    return Ok(vec![TestResult::not_applicable("growing-length extremes", n, "extreme parts")]);
                }
                or_not_applicable(
                    "growing-length extremes",
                    n,
                    "Weibull and Gumbel limits of the extreme parts",
                    test_extremes(s, q, nt, mt, Regime::GrowingM, a),
                )
            }),
        ));
        for x in [0.3, 0.7, 1.2] {
            jobs.push((
                1,
                Box::new(move |a| {
                    or_not_applicable(
                        &format!("fluctuations at x={x}"),
                        n,
                        "Gaussian fluctuations of the scaled Young diagram",
                        fluctuation_variance_check(s, q, nt, mt, x, a),
                    )
                }),
            ));
        }
    }
    if moments {
        let p = params.expect("free samples drawn");
        jobs.push((
            0,
            Box::new(move |_| {
                or_not_applicable(
                    "moments",
                    n,
                    "exact moment series",
                    empirical_moment_report(s, &p, Some(l)).map(|(_, r)| r),
                )
            }),
        ));
        jobs.push((0, Box::new(move |_| Ok(vec![test_empty_atom(s, &p, l)]))));
    }
    if uniform {
        let (tn, tm) = task;
        let ts = &task_samples;
        jobs.push((1, Box::new(move |a| Ok(vec![test_uniformity(ts, q, tn, tm, a)?]))));
    }
    let k: usize = jobs.iter().map(|j| j.0).sum::<usize>().max(1);
    let alpha = cfg.alpha / k as f64;
    let mut results = Vec::new();
    for (_, job) in &jobs {
        results.extend(job(alpha)?);
    }
    Ok(ValidationReport { results })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibrate::calibrate_exact;
    use proptest::prelude::*;

    fn part(q: u32, parts: &[u64]) -> Partition {
        Partition::new(q, parts.to_vec()).unwrap()
    }

    #[test]
    fn young_boundary_counts_parts() {
        let p = part(1, &[9, 4, 1]);
        assert_eq!(young_boundary_eval(&p, 4.0), 2);
        assert_eq!(young_boundary_eval(&p, 4.5), 1);
        assert_eq!(young_boundary_eval(&p, 0.0), 3);
        assert_eq!(young_boundary_eval(&p, 9.01), 0);
        assert_eq!(young_area(&p), 14);
        assert_eq!(young_boundary_eval(&Partition::empty(), 0.0), 0);
    }

    #[test]
    fn scaled_young_conventions() {
        let e = Partition::empty();
        assert_eq!(scaled_young(&e, 2, 100.0, 5.0, &[0.0, 1.0]), vec![0.0, 0.0]);
        // A = qN/M = 40.
        let p = part(2, &[64, 49]);
        assert_eq!(scaled_young(&p, 2, 100.0, 5.0, &[0.0, 1.0, 1.5]), vec![0.4, 0.4, 0.2]);
    }

    /// Grid oracle for the sup distance: dense grid plus both sides of each jump.
    fn sup_on_grid(p: &Partition, q: u32, nt: f64, mt: f64) -> f64 {
        let a = q as f64 * nt / mt;
        let mut grid: Vec<f64> = (0..20_000).map(|i| i as f64 * 1e-3).collect();
        for &x in p.parts() {
            let s = x as f64 / a;
            grid.extend([s, s + 1e-12]);
        }
        grid.iter()
            .map(|&x| (scaled_young(p, q, nt, mt, &[x])[0] - omega(q, x)).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn sup_distance_matches_grid_oracle() {
        let d = limit_shape_sup_distance(&[Partition::empty()], 1, 100.0, 5.0).unwrap();
        assert_eq!(d, vec![1.0]);
        for (q, parts) in [(1u32, vec![70u64, 30, 12, 5, 1]), (2, vec![400, 100, 36, 4])] {
            let p = part(q, &parts);
            let exact = limit_shape_sup_distance(&[p.clone()], q, 100.0, 5.0).unwrap()[0];
            let grid = sup_on_grid(&p, q, 100.0, 5.0);
            assert!(exact >= grid - 1e-12);
            assert!(exact - grid < 2e-3, "{exact} vs {grid}");
        }
    }

    proptest! {
        #[test]
        fn young_identities(mut js in proptest::collection::btree_set(1u64..60, 0..12), q in 1u32..4) {
            let parts: Vec<u64> = std::mem::take(&mut js).into_iter().rev().map(|j| j.pow(q)).collect();
            let p = Partition::new(q, parts).unwrap();
            prop_assert_eq!(young_boundary_eval(&p, 0.0), p.length());
            prop_assert_eq!(young_area(&p), p.weight());
            // Area by integrating the step function on unit cells.
            let top = p.largest().unwrap_or(0);
            let cells: u64 = (1..=top).map(|x| young_boundary_eval(&p, x as f64) as u64).sum();
            prop_assert_eq!(cells, p.weight());
        }
    }

    fn samples(q: u32, nt: f64, mt: f64, count: usize, seed: u64, z2_factor: f64) -> (Vec<Partition>, ModelParams, u64) {
        let params = calibrate_exact(q, nt, mt, 1e-12).unwrap();
        let params = params.with_z2(params.z2 * z2_factor);
        let l = upper_cutoff(q, nt, mt, VALIDATION_DELTA, Regime::FixedM).unwrap();
        let s = FreeSampler::new(params, l).unwrap();
        (s.batch(count, seed, ScanMethod::Thinned), params, l)
    }

    #[test]
    fn length_and_weight_tests_accept_truth_and_reject_doubled_z2() {
        let (good, _, _) = samples(1, 2500.0, 5.0, 20_000, 11, 1.0);
        assert!(test_length_poisson(&good, 5.0, None, 0.01).unwrap().passed());
        for r in test_weight_marginal(&good, 1, 5.0, 2500.0, 0.01).unwrap() {
            assert!(r.passed(), "{r:?}");
        }
        assert!(test_weight_conditional_gamma(&good, 3, 1, 2500.0, 5.0, 0.01).unwrap().passed());

        let (bad, _, _) = samples(1, 2500.0, 5.0, 20_000, 11, 2.0);
        assert!(!test_length_poisson(&bad, 5.0, None, 0.01).unwrap().passed());
        assert!(test_weight_marginal(&bad, 1, 5.0, 2500.0, 0.01)
            .unwrap()
            .iter()
            .any(|r| !r.passed()));
    }

    #[test]
    fn length_test_rejects_all_empty() {
        let empties = vec![Partition::empty(); 2000];
        assert!(!test_length_poisson(&empties, 5.0, None, 0.01).unwrap().passed());
        assert!(matches!(
            test_length_poisson(&empties[..10], 5.0, None, 0.01),
            Err(Error::Resource(_))
        ));
    }

    #[test]
    fn conditional_gamma_needs_enough_samples() {
        let (s, _, _) = samples(1, 2500.0, 5.0, 1000, 3, 1.0);
        assert!(matches!(
            test_weight_conditional_gamma(&s, 12, 1, 2500.0, 5.0, 0.01),
            Err(Error::Resource(_))
        ));
    }

    #[test]
    fn density_dip_location() {
        let x0 = cpg_density_dip(2, 5.0).unwrap().unwrap();
        assert!((x0 - 0.10340).abs() < 5e-5, "{x0}");
        assert_eq!(cpg_density_dip(1, 5.0).unwrap(), None);
    }

    #[test]
    fn moments_and_atom_track_exact_series() {
        let (s, params, l) = samples(1, 2500.0, 5.0, 20_000, 5, 1.0);
        let (_, rs) = empirical_moment_report(&s, &params, Some(l)).unwrap();
        for r in rs.iter().take(5) {
            assert!(r.passed(), "{r:?}");
        }
        assert!(test_empty_atom(&s, &params, l).passed());
        // Moments and atom under the true parameters reject the doubled-z2 sample.
        let (bad, _, _) = samples(1, 2500.0, 5.0, 20_000, 5, 2.0);
        let (_, rs) = empirical_moment_report(&bad, &params, Some(l)).unwrap();
        assert!(!rs[1].passed());
        assert!(!test_empty_atom(&bad, &params, l).passed());
    }

    #[test]
    fn joint_normal_warns_outside_regime() {
        let (s, _, _) = samples(1, 2500.0, 5.0, 10_000, 9, 1.0);
        let rs = test_joint_normal(&s, 1, 2500.0, 5.0, 0.01).unwrap();
        assert_eq!(rs.len(), 4);
        assert!(rs.iter().all(|r| r.verdict == TestVerdict::Warning));
    }

    #[test]
    fn uniformity_space_conventions() {
        let r = test_uniformity(&[], 2, 30, 2, 0.01).unwrap();
        assert_eq!(r.verdict, TestVerdict::NotApplicable);
        let r = test_uniformity(&[], 2, 5, 2, 0.01).unwrap();
        assert_eq!(r.verdict, TestVerdict::NotApplicable);
        let s = uniformity_samples(1, 12, 3, 2000, 1).unwrap();
        let r = test_uniformity(&s, 1, 12, 3, 0.01).unwrap();
        assert!(r.name.contains("7 cells"));
        assert!(r.passed(), "{r:?}");
        // Skewed sample: always the first member.
        let skew = vec![s[0].clone(); 2000];
        assert!(!test_uniformity(&skew, 1, 12, 3, 0.01).unwrap().passed());
    }

    #[test]
    fn suites_are_deterministic_and_serialize() {
        let mut cfg = SuiteConfig::new(1, 12.0, 3.0, 500, 4);
        cfg.task = Some((12, 3));
        let a = run_suite(Suite::Uniformity, &cfg).unwrap();
        let b = run_suite(Suite::Uniformity, &cfg).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        let v: serde_json::Value = serde_json::from_str(&a.to_json()).unwrap();
        let first = &v.as_array().unwrap()[0];
        for key in ["name", "statistic", "threshold", "n", "verdict", "reference"] {
            assert!(first.get(key).is_some(), "missing {key}");
        }
        assert!("bogus".parse::<Suite>().is_err());
    }
}
