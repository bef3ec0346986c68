//! Calibration of the Boltzmann parameters, exact moment series, part-size
//! cutoffs and censoring limits for the rejection sampler.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::special::{gamma_pq, inv_reg_gamma_lower, inv_reg_gamma_upper, ln_gamma, NeumaierSum};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibrationMethod {
    Crude,
    BiasCorrected,
    NewtonExact,
    /// Parameters supplied directly by the caller.
    Manual,
}

/// Power q, hyper-parameters ⟨N⟩, ⟨M⟩ and the Boltzmann parameters
/// z₁ = e^{-γ}, z₂.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub q: u32,
    pub n_target: f64,
    pub m_target: f64,
    pub gamma: f64,
    pub z2: f64,
    pub kappa: f64,
    pub method: CalibrationMethod,
}

fn check_targets(q: u32, n_target: f64, m_target: f64) -> Result<f64> {
    if q == 0 {
        return domain("q must be >= 1");
    }
    if !(n_target >= 1.0) || !n_target.is_finite() {
        return domain(format!("<N> must be >= 1, got {n_target}"));
    }
    if !(m_target > 0.0) || !m_target.is_finite() {
        return domain(format!("<M> must be positive, got {m_target}"));
    }
    Ok(m_target.powi(q as i32 + 1) / n_target)
}

impl ModelParams {
    /// Leading-order parameters without the κ < 1 guard. Used where the
    /// targets are an exact (n, m) pair that may sit outside the short
    /// partition regime, e.g. tiny rejection tasks.
    pub fn leading_terms(q: u32, n_target: f64, m_target: f64) -> Result<Self> {
        let kappa = check_targets(q, n_target, m_target)?;
        let qf = q as f64;
        let gamma = m_target / (qf * n_target);
        let z2 = m_target * gamma.powf(1.0 / qf) / ln_gamma(1.0 + 1.0 / qf).exp();
        Ok(Self {
            q,
            n_target,
            m_target,
            gamma,
            z2,
            kappa,
            method: CalibrationMethod::Crude,
        })
    }

    /// Parameters with explicitly chosen γ and z₂.
    pub fn manual(q: u32, n_target: f64, m_target: f64, gamma: f64, z2: f64) -> Result<Self> {
        let kappa = check_targets(q, n_target, m_target)?;
        if !(gamma > 0.0) || !gamma.is_finite() {
            return domain(format!("gamma must be positive, got {gamma}"));
        }
        if !(z2 >= 0.0) || !z2.is_finite() {
            return domain(format!("z2 must be nonnegative, got {z2}"));
        }
        Ok(Self {
            q,
            n_target,
            m_target,
            gamma,
            z2,
            kappa,
            method: CalibrationMethod::Manual,
        })
    }

    pub fn z1(&self) -> f64 {
        (-self.gamma).exp()
    }

    /// γ₀ = ⟨M⟩/(q⟨N⟩), the leading-order value of γ.
    pub fn gamma0(&self) -> f64 {
        self.m_target / (self.q as f64 * self.n_target)
    }

    pub fn ln_z2(&self) -> f64 {
        self.z2.ln()
    }

    /// Same model with a different z₂ (negative controls, coupling checks).
    pub fn with_z2(&self, z2: f64) -> Self {
        Self {
            z2,
            method: CalibrationMethod::Manual,
            ..*self
        }
    }
}

/// Leading asymptotic calibration.
pub fn calibrate_crude(q: u32, n_target: f64, m_target: f64) -> Result<ModelParams> {
    let p = ModelParams::leading_terms(q, n_target, m_target)?;
    if p.kappa >= 1.0 {
        return Err(Error::KappaTooLarge { kappa: p.kappa });
    }
    Ok(p)
}

/// Bias-corrected hyper-parameters (⟨Ñ⟩, ⟨M̃⟩).
pub fn corrected_targets(q: u32, n_target: f64, m_target: f64) -> Result<(f64, f64)> {
    check_targets(q, n_target, m_target)?;
    let qf = q as f64;
    let g0 = m_target / (qf * n_target);
    let c = m_target * m_target * g0.powf(1.0 / qf) / (2f64.powf(1.0 / qf) * ln_gamma(1.0 / qf).exp());
    let m_tilde = m_target + qf * c;
    let n_tilde = n_target + c / (2.0 * g0);
    Ok((n_tilde, m_tilde))
}

/// Crude formulas applied to the bias-corrected hyper-parameters.
pub fn calibrate_corrected(q: u32, n_target: f64, m_target: f64) -> Result<ModelParams> {
    let crude = calibrate_crude(q, n_target, m_target)?;
    let (n_tilde, m_tilde) = corrected_targets(q, n_target, m_target)?;
    let shifted = ModelParams::leading_terms(q, n_tilde, m_tilde)?;
    Ok(ModelParams {
        gamma: shifted.gamma,
        z2: shifted.z2,
        method: CalibrationMethod::BiasCorrected,
        ..crude
    })
}

/// Expectations and covariance matrix of (N_λ, M_λ).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentSummary {
    pub en: f64,
    pub em: f64,
    pub var_n: f64,
    pub var_m: f64,
    pub cov_nm: f64,
    pub truncation_l: Option<u64>,
}

impl MomentSummary {
    pub fn correlation(&self) -> f64 {
        self.cov_nm / (self.var_n * self.var_m).sqrt()
    }
}

/// Logistic map σ(t) = 1/(1 + e^{-t}) and its complement, without overflow.
pub(crate) fn logistic_pair(t: f64) -> (f64, f64) {
    if t >= 0.0 {
        let e = (-t).exp();
        (1.0 / (1.0 + e), e / (1.0 + e))
    } else {
        let e = t.exp();
        (e / (1.0 + e), 1.0 / (1.0 + e))
    }
}

/// Largest j with j^q <= x.
pub fn floor_root(x: u64, q: u32) -> u64 {
    if q == 1 {
        return x;
    }
    let mut j = (x as f64).powf(1.0 / q as f64).floor() as u64;
    while j > 0 && j.checked_pow(q).is_none_or(|v| v > x) {
        j -= 1;
    }
    while (j + 1).checked_pow(q).is_some_and(|v| v <= x) {
        j += 1;
    }
    j
}

/// Moments of (N_λ, M_λ) by direct summation over parts ℓ = j^q (ℓ ≤ L when
/// given). The untruncated series stop once a geometric bound on the
/// remaining tail drops below 1e-15 of every accumulated sum.
pub fn exact_moments(params: &ModelParams, l: Option<u64>) -> MomentSummary {
    let q = params.q;
    let gamma = params.gamma;
    let ln_z2 = params.ln_z2();
    let j_max = l.map(|l| floor_root(l, q));
    let mut sums = [NeumaierSum::new(); 5];
    let mut j: u64 = 1;
    loop {
        if j_max.is_some_and(|jm| j > jm) {
            break;
        }
        let ell = (j as f64).powi(q as i32);
        let t = ln_z2 - gamma * ell;
        let (p, p_bar) = logistic_pair(t);
        let v = p * p_bar;
        let terms = [ell * p, p, v, ell * ell * v, ell * v];
        for (s, x) in sums.iter_mut().zip(terms) {
            s.add(x);
        }
        if j_max.is_none() || ell * gamma > 40.0 {
            let next = ((j + 1) as f64).powi(q as i32);
            let growth = (next / ell).powi(2);
            let one_plus = 1.0 + t.exp();
            let rho = growth * (-gamma * (next - ell)).exp() * one_plus * one_plus;
            if rho < 1.0 {
                let factor = rho / (1.0 - rho);
                let done = terms
                    .iter()
                    .zip(sums.iter())
                    .all(|(x, s)| x * factor <= 1e-15 * s.value().abs());
                if done {
                    break;
                }
            }
        }
        j += 1;
    }
    MomentSummary {
        en: sums[0].value(),
        em: sums[1].value(),
        var_m: sums[2].value(),
        var_n: sums[3].value(),
        cov_nm: sums[4].value(),
        truncation_l: l,
    }
}

/// Newton refinement in s = (ln z₁, ln z₂), started from the bias-corrected
/// parameters. The Jacobian of (E N, E M) in these coordinates is the
/// covariance matrix of (N_λ, M_λ).
pub fn calibrate_exact(q: u32, n_target: f64, m_target: f64, tol: f64) -> Result<ModelParams> {
    if !(tol > 0.0) {
        return domain(format!("tolerance must be positive, got {tol}"));
    }
    let mut params = calibrate_corrected(q, n_target, m_target)?;
    params.method = CalibrationMethod::NewtonExact;
    let residuals = |m: &MomentSummary| (m.en / n_target - 1.0, m.em / m_target - 1.0);
    let mut mom = exact_moments(&params, None);
    for _ in 0..50 {
        let (rn, rm) = residuals(&mom);
        if rn.abs() <= tol && rm.abs() <= tol {
            return Ok(params);
        }
        let (fn_, fm) = (n_target - mom.en, m_target - mom.em);
        let det = mom.var_n * mom.var_m - mom.cov_nm * mom.cov_nm;
        let ds1 = (mom.var_m * fn_ - mom.cov_nm * fm) / det;
        let ds2 = (mom.var_n * fm - mom.cov_nm * fn_) / det;
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..=30 {
            let gamma = params.gamma - step * ds1;
            let ln_z2 = params.ln_z2() + step * ds2;
            if gamma > 0.0 && gamma.is_finite() && ln_z2.is_finite() {
                accepted = Some((gamma, ln_z2.exp()));
                break;
            }
            step *= 0.5;
        }
        let Some((gamma, z2)) = accepted else { break };
        params.gamma = gamma;
        params.z2 = z2;
        mom = exact_moments(&params, None);
    }
    let (rn, rm) = residuals(&mom);
    if rn.abs() <= tol && rm.abs() <= tol {
        return Ok(params);
    }
    Err(Error::NoConvergence {
        iterations: 50,
        gamma: params.gamma,
        z2: params.z2,
        residual_n: rn,
        residual_m: rm,
    })
}

/// Which asymptotic regime of ⟨M⟩ the cutoff formulas assume.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    FixedM,
    GrowingM,
}

/// Upper and optional lower part-size cutoffs at confidence tolerance δ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutoffPolicy {
    pub delta: f64,
    pub l: u64,
    pub l0: Option<u64>,
    pub regime: Regime,
}

impl CutoffPolicy {
    pub fn new(q: u32, n_target: f64, m_target: f64, delta: f64, regime: Regime, with_lower: bool) -> Result<Self> {
        let l = upper_cutoff(q, n_target, m_target, delta, regime)?;
        let l0 = if with_lower {
            Some(lower_cutoff(q, n_target, m_target, delta, regime)?)
        } else {
            None
        };
        Ok(Self { delta, l, l0, regime })
    }
}

/// Largest perfect q-th power not exceeding x.
pub fn round_down_to_power(x: f64, q: u32) -> u64 {
    if !(x >= 1.0) {
        return 0;
    }
    let floor = if x >= u64::MAX as f64 { u64::MAX } else { x.floor() as u64 };
    floor_root(floor, q).pow(q)
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta < 1.0) {
        return domain(format!("delta must lie in (0, 1), got {delta}"));
    }
    Ok(())
}

/// B_q = ln⟨M⟩ - (1 - 1/q) ln ln⟨M⟩ - ln Γ(1/q).
pub fn gumbel_shift(q: u32, m_target: f64) -> Result<f64> {
    if !(m_target > std::f64::consts::E) {
        return domain(format!("the growing-<M> normalization needs <M> > e, got {m_target}"));
    }
    let qf = q as f64;
    Ok(m_target.ln() - (1.0 - 1.0 / qf) * m_target.ln().ln() - ln_gamma(1.0 / qf))
}

/// Cutoff L with P(λ_max > L) ≈ δ, rounded down to a q-th power.
pub fn upper_cutoff(q: u32, n_target: f64, m_target: f64, delta: f64, regime: Regime) -> Result<u64> {
    check_targets(q, n_target, m_target)?;
    check_delta(delta)?;
    let qf = q as f64;
    let g0 = m_target / (qf * n_target);
    let log_term = -(-delta).ln_1p();
    let x = match regime {
        Regime::FixedM => {
            let r = log_term / m_target;
            if r >= 1.0 {
                return domain(format!(
                    "delta = {delta} is too large for <M> = {m_target}: no cutoff is needed"
                ));
            }
            inv_reg_gamma_upper(1.0 / qf, r)?
        }
        Regime::GrowingM => gumbel_shift(q, m_target)? - log_term.ln(),
    };
    Ok(round_down_to_power(x / g0, q))
}

/// Cutoff L₀ with P(λ_min > L₀) ≈ δ, rounded down to a q-th power.
pub fn lower_cutoff(q: u32, n_target: f64, m_target: f64, delta: f64, regime: Regime) -> Result<u64> {
    check_targets(q, n_target, m_target)?;
    check_delta(delta)?;
    let qf = q as f64;
    let g0 = m_target / (qf * n_target);
    let log_inv = -delta.ln();
    let x = match regime {
        Regime::FixedM => {
            if log_inv >= m_target {
                return Err(Error::InfeasibleLowerCutoff {
                    log_inv_delta: log_inv,
                    mean_length: m_target,
                });
            }
            inv_reg_gamma_lower(1.0 / qf, log_inv / m_target)?
        }
        Regime::GrowingM => (ln_gamma(1.0 / qf).exp() * log_inv / (qf * m_target)).powf(qf),
    };
    Ok(round_down_to_power(x / g0, q))
}

/// Rejection tasks: exact weight, every weight in a range, or any weight in a range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TaskKind {
    T1Exact,
    T2MultiExact,
    T3Approximate,
}

/// C₁(m, q), the constant in the single-target censoring bound.
pub fn censoring_constant_c1(m: u32, q: u32) -> f64 {
    let (mf, qf) = (m as f64, q as f64);
    let g = gamma_pq(1.0 / qf, mf / qf).0;
    let ln_inner = 1.0 / qf + ln_gamma(1.0 / qf) + g.ln() - (1.0 - 1.0 / qf) * qf.ln() - mf.ln() / qf;
    (mf * ln_inner - ln_gamma(mf + 1.0)).exp()
}

/// C₃(m, q, θ), the limiting probability of landing in [n, θn] per attempt.
pub fn censoring_constant_c3(m: u32, q: u32, theta: f64) -> f64 {
    let (mf, qf) = (m as f64, q as f64);
    let a = mf / qf;
    let num = gamma_pq(a, theta * a).0 - gamma_pq(a, a).0;
    num / gamma_pq(1.0 / qf, theta * a).0.powf(mf)
}

/// Cardinality-informed constant multiplying k ln(·) in the corrected
/// thresholds (q = 1, 2).
fn corrected_constant(kind: TaskKind, q: u32, m: u32) -> Result<f64> {
    let mf = m as f64;
    match q {
        1 => Ok((mf + mf * (-(-mf).exp()).ln_1p() + ln_gamma(mf) - mf * mf.ln()).exp()),
        2 => {
            let h = mf / 2.0;
            match kind {
                TaskKind::T2MultiExact => {
                    let integral = ln_gamma(0.5).exp() * gamma_pq(0.5, h).0;
                    let ln_c = h * (2.0 * std::f64::consts::E / (std::f64::consts::PI * mf)).ln()
                        + ln_gamma(h)
                        + mf * integral.ln();
                    Ok(ln_c.exp())
                }
                _ => {
                    let ln_c = h * (2.0 * std::f64::consts::E / mf).ln() + ln_gamma(h) + mf * gamma_pq(0.5, h).0.ln();
                    Ok(ln_c.exp())
                }
            }
        }
        _ => Err(Error::Unsupported(format!(
            "corrected censoring thresholds need cardinality asymptotics, available only for q = 1, 2 (got q = {q})"
        ))),
    }
}

/// Censoring threshold t* before rounding.
pub fn censoring_threshold(
    kind: TaskKind,
    q: u32,
    n: u64,
    m: u32,
    theta: f64,
    delta: f64,
    corrected: bool,
) -> Result<f64> {
    if q == 0 || n == 0 || m == 0 {
        return domain("censoring needs q, n, m >= 1");
    }
    check_delta(delta)?;
    if !(theta >= 1.0) || !theta.is_finite() {
        return domain(format!("theta must be >= 1, got {theta}"));
    }
    let nf = n as f64;
    let (mf, qf) = (m as f64, q as f64);
    let log_inv = -delta.ln();
    match kind {
        TaskKind::T1Exact => {
            if corrected {
                return Ok(corrected_constant(kind, q, m)? * nf * log_inv);
            }
            let denom = censoring_constant_c1(m, q) * nf.powf(mf / qf);
            if denom <= 1.0 {
                return Ok(1.0);
            }
            Ok(delta.ln() / (-1.0 / denom).ln_1p())
        }
        TaskKind::T2MultiExact => {
            if !(theta > 1.0) {
                return domain("multiple exact sampling needs theta > 1");
            }
            let log_term = ((theta - 1.0) * nf / delta).ln();
            if corrected {
                return Ok(corrected_constant(kind, q, m)? * nf * log_term);
            }
            Ok(censoring_constant_c1(m, q) * nf.powf(mf / qf) * log_term)
        }
        TaskKind::T3Approximate => {
            if !(theta > 1.0) {
                return domain("approximate sampling needs theta > 1");
            }
            let c3 = censoring_constant_c3(m, q, theta);
            if c3 >= 1.0 {
                return Ok(1.0);
            }
            Ok(delta.ln() / (-c3).ln_1p())
        }
    }
}

/// Censoring limit t*, rounded up.
pub fn censoring_limit(
    kind: TaskKind,
    q: u32,
    n: u64,
    m: u32,
    theta: f64,
    delta: f64,
    corrected: bool,
) -> Result<u64> {
    let t = censoring_threshold(kind, q, n, m, theta, delta, corrected)?;
    if t >= u64::MAX as f64 {
        return Err(Error::Resource(format!("censoring limit {t:e} does not fit in 64 bits")));
    }
    Ok((t.ceil() as u64).max(1))
}

/// A rejection sampling task with its censoring limit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RejectionTask {
    pub kind: TaskKind,
    pub q: u32,
    pub n: u64,
    pub m: u32,
    pub theta: f64,
    pub delta: f64,
    pub t_star: u64,
    pub corrected: bool,
}

impl RejectionTask {
    pub fn new(kind: TaskKind, q: u32, n: u64, m: u32, theta: f64, delta: f64, corrected: bool) -> Result<Self> {
        let theta = if kind == TaskKind::T1Exact { 1.0 } else { theta };
        let t_star = censoring_limit(kind, q, n, m, theta, delta, corrected)?;
        Ok(Self {
            kind,
            q,
            n,
            m,
            theta,
            delta,
            t_star,
            corrected,
        })
    }

    /// Same task with an explicit censoring limit.
    pub fn with_t_star(self, t_star: u64) -> Self {
        Self {
            t_star: t_star.max(1),
            ..self
        }
    }

    /// Upper end of the accepted weight range.
    pub fn upper_weight(&self) -> u64 {
        if self.kind == TaskKind::T1Exact {
            self.n
        } else {
            (self.theta * self.n as f64).floor() as u64
        }
    }
}
