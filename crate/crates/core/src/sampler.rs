//! Free Boltzmann sampler over q-th power parts and the censored rejection
//! sampler built on top of it.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibrate::{floor_root, logistic_pair, ModelParams, RejectionTask, TaskKind};
use crate::error::{Error, Result};

/// A strict partition into perfect q-th powers, parts in decreasing order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Partition {
    parts: Vec<u64>,
    weight: u64,
}

impl Partition {
    pub fn empty() -> Self {
        Self {
            parts: Vec::new(),
            weight: 0,
        }
    }

    /// Validates that `parts` is strictly decreasing and made of q-th powers.
    pub fn new(q: u32, parts: Vec<u64>) -> Result<Self> {
        if q == 0 {
            return Err(Error::Domain("q must be >= 1".into()));
        }
        for w in parts.windows(2) {
            if w[0] <= w[1] {
                return Err(Error::InvalidPartition(format!("parts not strictly decreasing: {parts:?}")));
            }
        }
        let mut weight: u64 = 0;
        for &p in &parts {
            let j = floor_root(p, q);
            if p == 0 || j.pow(q) != p {
                return Err(Error::InvalidPartition(format!("{p} is not a positive {q}-th power")));
            }
            weight = weight
                .checked_add(p)
                .ok_or_else(|| Error::InvalidPartition("weight overflows u64".into()))?;
        }
        Ok(Self { parts, weight })
    }

    pub(crate) fn from_parts_unchecked(parts: Vec<u64>) -> Self {
        let weight = parts.iter().sum();
        Self { parts, weight }
    }

    pub fn parts(&self) -> &[u64] {
        &self.parts
    }

    /// N_λ, the sum of the parts.
    pub fn weight(&self) -> u64 {
        self.weight
    }

    /// M_λ, the number of parts.
    pub fn length(&self) -> usize {
        self.parts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }

    pub fn largest(&self) -> Option<u64> {
        self.parts.first().copied()
    }

    pub fn smallest(&self) -> Option<u64> {
        self.parts.last().copied()
    }
}

/// Identifies one reproducible random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngHandle {
    pub seed: u64,
    pub stream_index: u64,
}

impl RngHandle {
    pub fn new(seed: u64, stream_index: u64) -> Self {
        Self { seed, stream_index }
    }

    /// ChaCha8 keyed by the seed; the stream index selects one of 2^64
    /// non-overlapping ChaCha streams.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_index);
        rng
    }
}

/// p_ℓ = z₁^ℓ z₂ / (1 + z₁^ℓ z₂), evaluated as a logistic function of
/// ln z₂ - γℓ.
pub fn part_probability(params: &ModelParams, ell: u64) -> f64 {
    logistic_pair(params.ln_z2() - params.gamma * ell as f64).0
}

/// ln(1 - p_ℓ) = -ln(1 + e^t) with t = ln z₂ - γℓ.
fn ln_fail(t: f64) -> f64 {
    if t > 0.0 {
        -(t + (-t).exp().ln_1p())
    } else {
        -t.exp().ln_1p()
    }
}

/// Π_{from < ℓ ≤ L, ℓ a q-th power} (1 - p_ℓ).
pub fn tail_rejection_probability(params: &ModelParams, ell_exclusive_from: u64, l: u64) -> f64 {
    let q = params.q;
    let lo = floor_root(ell_exclusive_from, q);
    let hi = floor_root(l, q);
    let mut acc = crate::special::NeumaierSum::new();
    for j in (lo + 1)..=hi {
        let ell = (j as f64).powi(q as i32);
        acc.add(ln_fail(params.ln_z2() - params.gamma * ell));
    }
    acc.value().exp()
}

/// Outcome of one run of the optimized free sampler.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FastOutcome {
    Accepted(Partition),
    EarlyReject,
}

/// How the free sampler walks over the candidate parts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanMethod {
    /// One uniform variate per candidate part.
    Naive,
    /// Geometric skipping over blocks with a common probability bound,
    /// followed by thinning. Same output law, far fewer variates when most
    /// candidates have tiny inclusion probabilities.
    Thinned,
}

#[derive(Debug, Clone, Copy)]
struct Block {
    hi: u64,
    lo: u64,
    p_bar: f64,
    ln_fail_bar: f64,
}

/// Precomputed inclusion probabilities for the parts j^q ≤ L.
#[derive(Debug, Clone)]
pub struct FreeSampler {
    params: ModelParams,
    l: u64,
    j_max: u64,
    // probs[j] = p_{j^q}; index 0 unused.
    probs: Vec<f64>,
    // ln_fail_prefix[j] = Σ_{i ≤ j} ln(1 - p_{i^q}).
    ln_fail_prefix: Vec<f64>,
    // powers[j] = j^q.
    powers: Vec<u64>,
    // min_weight[k] = Σ_{i ≤ k} i^q, saturating.
    min_weight: Vec<u64>,
    blocks: Vec<Block>,
}

const MAX_CANDIDATES: u64 = 200_000_000;

impl FreeSampler {
    pub fn new(params: ModelParams, l: u64) -> Result<Self> {
        let q = params.q;
        let j_max = floor_root(l, q);
        if j_max > MAX_CANDIDATES {
            return Err(Error::Resource(format!(
                "{j_max} candidate parts exceed the limit of {MAX_CANDIDATES}"
            )));
        }
        let n = j_max as usize + 1;
        let mut probs = vec![0.0; n];
        let mut ln_fail_prefix = vec![0.0; n];
        let mut powers = vec![0u64; n];
        let mut min_weight = vec![0u64; n];
        let ln_z2 = params.ln_z2();
        let mut acc = crate::special::NeumaierSum::new();
        for j in 1..n {
            let pw = (j as u64).pow(q);
            let t = ln_z2 - params.gamma * pw as f64;
            probs[j] = logistic_pair(t).0;
            acc.add(ln_fail(t));
            ln_fail_prefix[j] = acc.value();
            powers[j] = pw;
            min_weight[j] = min_weight[j - 1].saturating_add(pw);
        }
        let mut blocks = Vec::new();
        let mut hi = j_max;
        while hi >= 1 {
            let mut lo = hi;
            while lo > 1 && probs[(lo - 1) as usize] <= 2.0 * probs[hi as usize] {
                lo -= 1;
            }
            let p_bar = probs[lo as usize];
            blocks.push(Block {
                hi,
                lo,
                p_bar,
                ln_fail_bar: (-p_bar).ln_1p(),
            });
            hi = lo - 1;
        }
        Ok(Self {
            params,
            l,
            j_max,
            probs,
            ln_fail_prefix,
            powers,
            min_weight,
            blocks,
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn cutoff(&self) -> u64 {
        self.l
    }

    /// Number of candidate parts ⌊L^{1/q}⌋.
    pub fn candidates(&self) -> u64 {
        self.j_max
    }

    /// p_{j^q} for 1 ≤ j ≤ candidates().
    pub fn probability(&self, j: u64) -> f64 {
        self.probs[j as usize]
    }

    /// Π_{i ≤ j} (1 - p_{i^q}).
    pub fn prefix_fail_probability(&self, j: u64) -> f64 {
        self.ln_fail_prefix[j.min(self.j_max) as usize].exp()
    }

    /// Probability of the empty partition, 1 / F_L(z).
    pub fn empty_probability(&self) -> f64 {
        self.prefix_fail_probability(self.j_max)
    }

    /// One pass of independent Bernoulli trials, largest candidate first.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Partition {
        let mut parts = Vec::new();
        for j in (1..=self.j_max).rev() {
            let u: f64 = rng.gen();
            if u < self.probs[j as usize] {
                parts.push(self.powers[j as usize]);
            }
        }
        Partition::from_parts_unchecked(parts)
    }

    /// Same law as [`FreeSampler::sample`], drawing geometric gaps between
    /// trial successes within blocks of comparable probability.
    pub fn sample_thinned<R: Rng + ?Sized>(&self, rng: &mut R) -> Partition {
        let mut parts = Vec::new();
        for b in &self.blocks {
            if b.p_bar > 0.25 {
                for j in (b.lo..=b.hi).rev() {
                    let u: f64 = rng.gen();
                    if u < self.probs[j as usize] {
                        parts.push(self.powers[j as usize]);
                    }
                }
                continue;
            }
            if b.p_bar <= 0.0 {
                continue;
            }
            // pos is one above the next candidate to consider.
            let mut pos = b.hi + 1;
            loop {
                let u: f64 = 1.0 - rng.gen::<f64>();
                let gap = u.ln() / b.ln_fail_bar;
                if gap >= (pos - b.lo) as f64 {
                    break;
                }
                pos -= gap as u64 + 1;
                let v: f64 = rng.gen();
                if v * b.p_bar < self.probs[pos as usize] {
                    parts.push(self.powers[pos as usize]);
                }
                if pos == b.lo {
                    break;
                }
            }
        }
        Partition::from_parts_unchecked(parts)
    }

    pub fn sample_with<R: Rng + ?Sized>(&self, method: ScanMethod, rng: &mut R) -> Partition {
        match method {
            ScanMethod::Naive => self.sample(rng),
            ScanMethod::Thinned => self.sample_thinned(rng),
        }
    }

    /// Free sampler with early termination, for targets of exactly `m_target`
    /// parts and weight at most `weight_cap`. A run is abandoned as soon as
    /// the target becomes unreachable; once the last part is drawn the
    /// remaining smaller candidates are settled by one aggregated Bernoulli
    /// trial. Given acceptance, the output has the law of [`FreeSampler::sample`]
    /// conditioned on M_λ = m_target and N_λ ≤ weight_cap.
    pub fn sample_fast<R: Rng + ?Sized>(&self, m_target: usize, weight_cap: u64, rng: &mut R) -> FastOutcome {
        if m_target == 0 {
            let u: f64 = rng.gen();
            return if u < self.empty_probability() {
                FastOutcome::Accepted(Partition::empty())
            } else {
                FastOutcome::EarlyReject
            };
        }
        let mut parts = Vec::with_capacity(m_target);
        let mut weight: u64 = 0;
        let mut j = self.j_max;
        while j >= 1 {
            let need = m_target - parts.len();
            if (j as usize) < need {
                return FastOutcome::EarlyReject;
            }
            let u: f64 = rng.gen();
            if u < self.probs[j as usize] {
                let pw = self.powers[j as usize];
                let rest = self.min_weight[need - 1];
                if weight.saturating_add(pw).saturating_add(rest) > weight_cap {
                    return FastOutcome::EarlyReject;
                }
                weight += pw;
                parts.push(pw);
                if parts.len() == m_target {
                    let v: f64 = rng.gen();
                    return if v < self.prefix_fail_probability(j - 1) {
                        FastOutcome::Accepted(Partition {
                            parts,
                            weight,
                        })
                    } else {
                        FastOutcome::EarlyReject
                    };
                }
            }
            j -= 1;
        }
        FastOutcome::EarlyReject
    }

    /// Minimal weight of m distinct candidate parts, if m candidates exist.
    pub fn minimal_weight(&self, m: usize) -> Option<u64> {
        self.min_weight.get(m).copied()
    }

    /// `count` independent samples, sample i drawn from stream i of
    /// `master_seed`. Output does not depend on the worker count.
    pub fn batch(&self, count: usize, master_seed: u64, method: ScanMethod) -> Vec<Partition> {
        (0..count as u64)
            .into_par_iter()
            .map(|i| self.sample_with(method, &mut RngHandle::new(master_seed, i).rng()))
            .collect()
    }
}

/// One run of the free sampler with parts up to L.
pub fn free_sample(params: &ModelParams, l: u64, rng: RngHandle) -> Result<Partition> {
    Ok(FreeSampler::new(*params, l)?.sample(&mut rng.rng()))
}

/// One run of the early-terminating sampler; see [`FreeSampler::sample_fast`].
pub fn free_sample_fast(
    params: &ModelParams,
    l: u64,
    m_target: usize,
    weight_cap: u64,
    rng: RngHandle,
) -> Result<FastOutcome> {
    Ok(FreeSampler::new(*params, l)?.sample_fast(m_target, weight_cap, &mut rng.rng()))
}

/// Deterministic parallel batch of naive free samples.
pub fn sample_batch(params: &ModelParams, l: u64, count: usize, master_seed: u64) -> Result<Vec<Partition>> {
    Ok(FreeSampler::new(*params, l)?.batch(count, master_seed, ScanMethod::Naive))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Sampled,
    Void,
}

/// Result of one censored rejection run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub partition: Option<Partition>,
    pub attempts_internal: u64,
    pub attempts_external: u64,
    pub verdict: Verdict,
}

/// Rejection sampler for one task, reusable across runs.
#[derive(Debug, Clone)]
pub struct RejectionSampler {
    task: RejectionTask,
    sampler: FreeSampler,
    weight_cap: u64,
    reachable: bool,
}

impl RejectionSampler {
    /// Uses the leading-order parameters with ⟨N⟩ = n, ⟨M⟩ = m and the
    /// majorant L = ⌊θn⌋.
    pub fn new(task: RejectionTask) -> Result<Self> {
        let params = ModelParams::leading_terms(task.q, task.n as f64, task.m as f64)?;
        Self::with_params(task, params)
    }

    pub fn with_params(task: RejectionTask, params: ModelParams) -> Result<Self> {
        let hi = task.upper_weight();
        let sampler = FreeSampler::new(params, hi)?;
        let reachable = sampler
            .minimal_weight(task.m as usize)
            .is_some_and(|w| w <= hi);
        Ok(Self {
            task,
            sampler,
            weight_cap: hi,
            reachable,
        })
    }

    /// Disable the weight-cap pruning (the inner loop then only conditions
    /// on the number of parts, as in the plain algorithm).
    pub fn without_weight_cap(mut self) -> Self {
        self.weight_cap = u64::MAX;
        self
    }

    pub fn task(&self) -> &RejectionTask {
        &self.task
    }

    fn in_range(&self, n: u64) -> bool {
        match self.task.kind {
            TaskKind::T1Exact => n == self.task.n,
            _ => n >= self.task.n && n <= self.task.upper_weight(),
        }
    }

    /// Inner loop: free samples until one has exactly m parts.
    fn draw_length_m<R: Rng + ?Sized>(&self, rng: &mut R, internal: &mut u64) -> Partition {
        loop {
            *internal += 1;
            if let FastOutcome::Accepted(p) = self.sampler.sample_fast(self.task.m as usize, self.weight_cap, rng) {
                return p;
            }
        }
    }

    pub fn run<R: Rng + ?Sized>(&self, rng: &mut R) -> SampleRecord {
        let mut internal = 0;
        if self.reachable {
            for t in 1..=self.task.t_star {
                let p = self.draw_length_m(rng, &mut internal);
                if self.in_range(p.weight()) {
                    return SampleRecord {
                        partition: Some(p),
                        attempts_internal: internal,
                        attempts_external: t,
                        verdict: Verdict::Sampled,
                    };
                }
            }
        }
        SampleRecord {
            partition: None,
            attempts_internal: internal,
            attempts_external: if self.reachable { self.task.t_star } else { 0 },
            verdict: Verdict::Void,
        }
    }

    /// Multiple exact sampling: keeps the first partition found for each
    /// weight in [n, θn] until every weight is covered or t* attempts are
    /// spent.
    pub fn run_multi<R: Rng + ?Sized>(&self, rng: &mut R) -> MultiRecord {
        let mut hits = BTreeMap::new();
        let mut internal = 0;
        let mut external = 0;
        let span = self.task.upper_weight() - self.task.n + 1;
        if self.reachable {
            while external < self.task.t_star && (hits.len() as u64) < span {
                external += 1;
                let p = self.draw_length_m(rng, &mut internal);
                let n = p.weight();
                if n >= self.task.n && n <= self.task.upper_weight() {
                    hits.entry(n).or_insert(p);
                }
            }
        }
        MultiRecord {
            hits,
            attempts_internal: internal,
            attempts_external: external,
        }
    }
}

/// Outcome of multiple exact sampling over a weight range.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MultiRecord {
    pub hits: BTreeMap<u64, Partition>,
    pub attempts_internal: u64,
    pub attempts_external: u64,
}

/// One censored rejection run with leading-order parameters for (n, m).
pub fn reject_sample(task: &RejectionTask, params: &ModelParams, rng: RngHandle) -> Result<SampleRecord> {
    let s = RejectionSampler::with_params(*task, *params)?;
    Ok(s.run(&mut rng.rng()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibrate::{calibrate_crude, RejectionTask, TaskKind};
    use proptest::prelude::*;

    fn table1_q1() -> ModelParams {
        calibrate_crude(1, 1e6, 100.0).unwrap()
    }

    #[test]
    fn partition_validation() {
        assert!(Partition::new(2, vec![9, 4, 1]).is_ok());
        assert!(Partition::new(2, vec![9, 3]).is_err());
        assert!(Partition::new(1, vec![3, 3]).is_err());
        assert!(Partition::new(1, vec![2, 3]).is_err());
        let p = Partition::new(3, vec![27, 8]).unwrap();
        assert_eq!((p.weight(), p.length()), (35, 2));
        assert_eq!(Partition::empty().weight(), 0);
    }

    #[test]
    fn part_probability_values() {
        let p = table1_q1();
        let ell_half = (-p.ln_z2() / p.gamma).round() as u64;
        let at_half = p.with_z2((p.gamma * ell_half as f64).exp());
        assert!((part_probability(&at_half, ell_half) - 0.5).abs() < 1e-15);
        let z1 = (-1e-4f64).exp();
        let w = z1 * 0.01;
        assert!((part_probability(&p, 1) - w / (1.0 + w)).abs() < 1e-17);
        assert!((part_probability(&p, 1) - 0.009_900_01).abs() < 1e-8);
        let far = part_probability(&p, 7_000_000);
        assert!(far > 0.0 && far < 1e-300);
        assert!(part_probability(&p, 10) > part_probability(&p, 11));
    }

    #[test]
    fn tail_product_values() {
        let p = table1_q1();
        assert_eq!(tail_rejection_probability(&p, 10, 10), 1.0);
        assert!((tail_rejection_probability(&p, 4, 5) - (1.0 - part_probability(&p, 5))).abs() < 1e-16);
        let direct: f64 = (1..=68_555u64).map(|l| (1.0 + p.z1().powf(l as f64) * p.z2).ln()).sum();
        let got = tail_rejection_probability(&p, 0, 68_555);
        assert!((got.ln() + direct).abs() < 1e-10);
        let s = FreeSampler::new(p, 68_555).unwrap();
        assert!((s.empty_probability() / got - 1.0).abs() < 1e-12);
    }

    #[test]
    fn no_candidates_means_empty() {
        let p = calibrate_crude(2, 1e4, 5.0).unwrap();
        for seed in 0..10 {
            assert!(free_sample(&p, 0, RngHandle::new(seed, 0)).unwrap().is_empty());
        }
        let s = FreeSampler::new(p, 3).unwrap();
        assert_eq!(s.candidates(), 1);
    }

    #[test]
    fn fixed_seed_is_reproducible() {
        let p = table1_q1();
        let a = free_sample(&p, 68_555, RngHandle::new(7, 3)).unwrap();
        let b = free_sample(&p, 68_555, RngHandle::new(7, 3)).unwrap();
        let c = free_sample(&p, 68_555, RngHandle::new(7, 4)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn naive_scan_uses_one_variate_per_candidate() {
        let p = calibrate_crude(2, 1e5, 10.0).unwrap();
        let s = FreeSampler::new(p, 10_000).unwrap();
        let mut rng = RngHandle::new(1, 0).rng();
        s.sample(&mut rng);
        // Each f64 consumes one 64-bit output, i.e. two 32-bit words.
        assert_eq!(rng.get_word_pos(), 2 * 100);
    }

    #[test]
    fn batch_count_one_matches_single_draw() {
        let p = table1_q1();
        let b = sample_batch(&p, 68_555, 1, 11).unwrap();
        assert_eq!(b[0], free_sample(&p, 68_555, RngHandle::new(11, 0)).unwrap());
    }

    #[test]
    fn batch_independent_of_thread_count() {
        let p = calibrate_crude(2, 1e5, 10.0).unwrap();
        let s = FreeSampler::new(p, 40_000).unwrap();
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let many = rayon::ThreadPoolBuilder::new().num_threads(8).build().unwrap();
        let a = one.install(|| s.batch(500, 5, ScanMethod::Naive));
        let b = many.install(|| s.batch(500, 5, ScanMethod::Naive));
        assert_eq!(a, b);
    }

    fn subset_law_check(method: ScanMethod) {
        let p = ModelParams::manual(1, 10.0, 2.0, 0.4, 0.9).unwrap();
        let s = FreeSampler::new(p, 4).unwrap();
        let trials = 200_000u64;
        let mut counts = [0u64; 16];
        let mut rng = RngHandle::new(3, 0).rng();
        for _ in 0..trials {
            let x = s.sample_with(method, &mut rng);
            let mask = x.parts().iter().fold(0usize, |m, &v| m | 1 << (v - 1));
            counts[mask] += 1;
        }
        for (mask, &c) in counts.iter().enumerate() {
            let mut pr = 1.0;
            for j in 1..=4u64 {
                let pj = part_probability(&p, j);
                pr *= if mask >> (j - 1) & 1 == 1 { pj } else { 1.0 - pj };
            }
            let sd = (trials as f64 * pr * (1.0 - pr)).sqrt();
            assert!((c as f64 - trials as f64 * pr).abs() < 4.5 * sd, "{method:?} mask {mask}");
        }
    }

    #[test]
    fn naive_law_on_small_space() {
        subset_law_check(ScanMethod::Naive);
    }

    #[test]
    fn thinned_law_on_small_space() {
        subset_law_check(ScanMethod::Thinned);
    }

    #[test]
    fn thinned_matches_naive_moments() {
        let p = calibrate_crude(1, 1e5, 20.0).unwrap();
        let s = FreeSampler::new(p, 30_000).unwrap();
        let a = s.batch(20_000, 1, ScanMethod::Naive);
        let b = s.batch(20_000, 1, ScanMethod::Thinned);
        let mean = |v: &[Partition]| v.iter().map(|x| x.length() as f64).sum::<f64>() / v.len() as f64;
        let exact = crate::calibrate::exact_moments(&p, Some(30_000));
        let se = (exact.var_m / 20_000.0).sqrt();
        assert!((mean(&a) - exact.em).abs() < 4.0 * se);
        assert!((mean(&b) - exact.em).abs() < 4.0 * se);
    }

    #[test]
    fn fast_sampler_respects_cap_and_length() {
        let p = ModelParams::leading_terms(2, 500.0, 2.0).unwrap();
        let s = FreeSampler::new(p, 500).unwrap();
        let mut rng = RngHandle::new(9, 0).rng();
        let mut accepted = 0;
        for _ in 0..20_000 {
            if let FastOutcome::Accepted(x) = s.sample_fast(2, 500, &mut rng) {
                assert_eq!(x.length(), 2);
                assert!(x.weight() <= 500);
                accepted += 1;
            }
        }
        assert!(accepted > 0);
        let tiny = FreeSampler::new(p, 4).unwrap();
        for _ in 0..1000 {
            if let FastOutcome::Accepted(x) = tiny.sample_fast(3, u64::MAX, &mut rng) {
                panic!("more parts than candidates: {x:?}");
            }
        }
    }

    #[test]
    fn reject_singleton_and_empty_targets() {
        let task = RejectionTask::new(TaskKind::T1Exact, 1, 3, 2, 1.0, 0.1, false).unwrap();
        let params = ModelParams::leading_terms(1, 3.0, 2.0).unwrap();
        for seed in 0..20 {
            let r = reject_sample(&task, &params, RngHandle::new(seed, 0)).unwrap();
            assert_eq!(r.verdict, Verdict::Sampled);
            assert_eq!(r.partition.unwrap().parts(), &[2, 1]);
        }
        let task = RejectionTask::new(TaskKind::T1Exact, 2, 3, 2, 1.0, 0.1, false).unwrap();
        let params = ModelParams::leading_terms(2, 3.0, 2.0).unwrap();
        let r = reject_sample(&task, &params, RngHandle::new(0, 0)).unwrap();
        assert_eq!(r.verdict, Verdict::Void);
        assert!(r.attempts_external <= task.t_star);
        let task = RejectionTask::new(TaskKind::T1Exact, 2, 5, 2, 1.0, 0.1, false).unwrap();
        let params = ModelParams::leading_terms(2, 5.0, 2.0).unwrap();
        let r = reject_sample(&task, &params, RngHandle::new(0, 0)).unwrap();
        assert_eq!(r.partition.unwrap().parts(), &[4, 1]);
    }

    #[test]
    fn multi_exact_covers_range() {
        let task = RejectionTask::new(TaskKind::T2MultiExact, 1, 40, 2, 1.25, 0.1, false).unwrap();
        let s = RejectionSampler::new(task).unwrap();
        let r = s.run_multi(&mut RngHandle::new(1, 0).rng());
        for (n, p) in &r.hits {
            assert_eq!(p.weight(), *n);
            assert_eq!(p.length(), 2);
        }
        assert_eq!(r.hits.len(), 11);
    }

    proptest! {
        #[test]
        fn sampled_partitions_are_valid(q in 1u32..4, seed in any::<u64>(), l in 1u64..5000) {
            let p = ModelParams::leading_terms(q, 5000.0, 4.0).unwrap();
            let s = FreeSampler::new(p, l).unwrap();
            let mut rng = RngHandle::new(seed, 0).rng();
            for method in [ScanMethod::Naive, ScanMethod::Thinned] {
                let x = s.sample_with(method, &mut rng);
                let v = Partition::new(q, x.parts().to_vec()).unwrap();
                prop_assert_eq!(v.weight(), x.weight());
                prop_assert!(x.largest().unwrap_or(0) <= l);
            }
        }
    }
}
