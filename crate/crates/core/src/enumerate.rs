//! Exact counting and listing of strict partitions into q-th powers, and the
//! Boltzmann probabilities they induce on small spaces.

use crate::calibrate::{floor_root, ModelParams};
use crate::error::{Error, Result};
use crate::sampler::Partition;
use crate::special::{ln_gamma, NeumaierSum};

const MAX_M: u32 = 64;
const MAX_LIST: usize = 1_000_000;
const MAX_DP_CELLS: u64 = 50_000_000;

fn check_bounds(q: u32, n: u64, m: u32) -> Result<()> {
    if q == 0 {
        return Err(Error::Domain("q must be >= 1".into()));
    }
    if n > 10_000_000 / q as u64 {
        return Err(Error::Resource(format!("n = {n} exceeds the enumeration bound 1e7/q")));
    }
    if m > MAX_M {
        return Err(Error::Resource(format!("m = {m} exceeds the enumeration bound {MAX_M}")));
    }
    Ok(())
}

/// Σ_{i=1}^{k} i^q, saturating.
fn min_weight(k: u64, q: u32) -> u64 {
    (1..=k).fold(0u64, |acc, i| acc.saturating_add(i.saturating_pow(q)))
}

/// Σ_{i=j-k+1}^{j} i^q, the heaviest k distinct parts not above j^q.
fn max_weight(j: u64, k: u64, q: u32) -> u64 {
    if k > j {
        return 0;
    }
    ((j - k + 1)..=j).fold(0u64, |acc, i| acc.saturating_add(i.saturating_pow(q)))
}

/// Depth-first walk over sets of `m` distinct q-th powers with largest base
/// at most `j_cap` summing to `n`, largest parts first. The visitor returns
/// false to stop the walk.
fn dfs(q: u32, n: u64, m: u64, j_cap: u64, stack: &mut Vec<u64>, visit: &mut dyn FnMut(&[u64]) -> bool) -> bool {
    if m == 0 {
        return if n == 0 { visit(stack) } else { true };
    }
    if min_weight(m, q) > n {
        return true;
    }
    let mut j = j_cap.min(floor_root(n, q));
    while j >= m {
        if max_weight(j, m, q) < n {
            break;
        }
        let pw = j.pow(q);
        stack.push(pw);
        let go_on = dfs(q, n - pw, m - 1, j - 1, stack, visit);
        stack.pop();
        if !go_on {
            return false;
        }
        j -= 1;
    }
    true
}

/// #{λ strict into q-th powers : N_λ = n, M_λ = m, λ_max ≤ max_part}.
pub fn count_partitions_bounded(q: u32, n: u64, m: u32, max_part: u64) -> Result<u64> {
    check_bounds(q, n, m)?;
    let j_cap = floor_root(max_part.min(n), q);
    let cells = (m as u64 + 1) * (n + 1);
    if cells <= MAX_DP_CELLS {
        // 0/1 knapsack over the parts, indexed by (number of parts, weight).
        let width = n as usize + 1;
        let mut f = vec![0u64; (m as usize + 1) * width];
        f[0] = 1;
        let mut overflow = false;
        for j in 1..=j_cap {
            let pw = j.pow(q) as usize;
            for k in (1..=(m as usize).min(j as usize)).rev() {
                let (lo, hi) = f.split_at_mut(k * width);
                let prev = &lo[(k - 1) * width..];
                let cur = &mut hi[..width];
                for s in (pw..width).rev() {
                    let add = prev[s - pw];
                    if add != 0 {
                        match cur[s].checked_add(add) {
                            Some(v) => cur[s] = v,
                            None => overflow = true,
                        }
                    }
                }
            }
        }
        if overflow {
            return Err(Error::Resource("partition count overflows 64 bits".into()));
        }
        return Ok(f[m as usize * width + n as usize]);
    }
    let mut count: u64 = 0;
    let mut overflow = false;
    dfs(q, n, m as u64, j_cap, &mut Vec::new(), &mut |_| {
        match count.checked_add(1) {
            Some(c) => count = c,
            None => overflow = true,
        }
        !overflow
    });
    if overflow {
        return Err(Error::Resource("partition count overflows 64 bits".into()));
    }
    Ok(count)
}

/// F_{n,m}: the number of sets of m distinct q-th powers summing to n.
pub fn count_partitions(q: u32, n: u64, m: u32) -> Result<u64> {
    count_partitions_bounded(q, n, m, n)
}

/// All members of the space, in lexicographically decreasing order.
pub fn list_partitions(q: u32, n: u64, m: u32) -> Result<Vec<Partition>> {
    check_bounds(q, n, m)?;
    let mut out = Vec::new();
    let mut too_many = false;
    dfs(q, n, m as u64, floor_root(n, q), &mut Vec::new(), &mut |parts| {
        if out.len() == MAX_LIST {
            too_many = true;
            return false;
        }
        out.push(Partition::from_parts_unchecked(parts.to_vec()));
        true
    });
    if too_many {
        return Err(Error::Resource(format!("more than {MAX_LIST} partitions to list")));
    }
    Ok(out)
}

/// Largest part over the members of the space. The first member in
/// decreasing lexicographic order carries it.
pub fn sharp_majorant(q: u32, n: u64, m: u32) -> Result<u64> {
    check_bounds(q, n, m)?;
    let mut best = None;
    dfs(q, n, m as u64, floor_root(n, q), &mut Vec::new(), &mut |parts| {
        best = parts.first().copied().or(Some(0));
        false
    });
    match best {
        Some(0) if m == 0 => Ok(0),
        Some(b) => Ok(b),
        None => Err(Error::EmptySpace { q, n, m }),
    }
}

/// Number of sets of m distinct q-th powers with sum at most x.
pub fn cumulative_count(q: u32, m: u32, x: u64) -> Result<u64> {
    check_bounds(q, x, m)?;
    if m == 0 {
        return Ok(1);
    }
    fn walk(q: u32, rem: u64, m: u64, j_cap: u64) -> u64 {
        if m == 1 {
            return j_cap.min(floor_root(rem, q));
        }
        let mut total = 0u64;
        let mut j = j_cap.min(floor_root(rem, q));
        while j >= m {
            let pw = j.pow(q);
            if pw + min_weight(m - 1, q) <= rem {
                total += walk(q, rem - pw, m - 1, j - 1);
            }
            j -= 1;
        }
        total
    }
    Ok(walk(q, x, m as u64, floor_root(x, q)))
}

/// Leading-order growth q Γ(1+1/q)^m x^{m/q} / (m! m Γ(m/q)) of
/// [`cumulative_count`].
pub fn asymptotic_cumulative(q: u32, m: u32, x: f64) -> f64 {
    let (qf, mf) = (q as f64, m as f64);
    let ln = qf.ln() + mf * ln_gamma(1.0 + 1.0 / qf) + mf / qf * x.ln()
        - ln_gamma(mf + 1.0)
        - mf.ln()
        - ln_gamma(mf / qf);
    ln.exp()
}

/// ln F_L(z) = Σ_{ℓ ≤ L} ln(1 + z₁^ℓ z₂).
pub fn ln_partial_generating_function(params: &ModelParams, l: u64) -> f64 {
    let mut acc = NeumaierSum::new();
    let ln_z2 = params.ln_z2();
    for j in 1..=floor_root(l, params.q) {
        let t = ln_z2 - params.gamma * (j as f64).powi(params.q as i32);
        acc.add(if t > 0.0 { t + (-t).exp().ln_1p() } else { t.exp().ln_1p() });
    }
    acc.value()
}

/// F_L(z) = Π_{ℓ ≤ L} (1 + z₁^ℓ z₂).
pub fn partial_generating_function(params: &ModelParams, l: u64) -> f64 {
    ln_partial_generating_function(params, l).exp()
}

/// P(N_λ = n, M_λ = m) under the Boltzmann measure restricted to parts ≤ L.
pub fn boltzmann_joint_pmf(params: &ModelParams, n: u64, m: u32, l: u64) -> Result<f64> {
    let count = count_partitions_bounded(params.q, n, m, l)?;
    if count == 0 {
        return Ok(0.0);
    }
    let ln = (count as f64).ln() - params.gamma * n as f64 + m as f64 * params.ln_z2()
        - ln_partial_generating_function(params, l);
    Ok(ln.exp())
}

/// Table of F_{n,m} for n ≤ max_n, m ≤ max_m.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnumTable {
    pub q: u32,
    pub max_n: u64,
    pub max_m: u32,
    counts: Vec<Vec<u64>>,
}

impl EnumTable {
    pub fn build(q: u32, max_n: u64, max_m: u32) -> Result<Self> {
        check_bounds(q, max_n, max_m)?;
        if (max_m as u64 + 1) * (max_n + 1) > MAX_DP_CELLS {
            return Err(Error::Resource("enumeration table too large".into()));
        }
        let width = max_n as usize + 1;
        let mut counts = vec![vec![0u64; width]; max_m as usize + 1];
        counts[0][0] = 1;
        for j in 1..=floor_root(max_n, q) {
            let pw = j.pow(q) as usize;
            for k in (1..=max_m as usize).rev() {
                for s in (pw..width).rev() {
                    let add = counts[k - 1][s - pw];
                    if add != 0 {
                        counts[k][s] = counts[k][s]
                            .checked_add(add)
                            .ok_or_else(|| Error::Resource("partition count overflows 64 bits".into()))?;
                    }
                }
            }
        }
        Ok(Self {
            q,
            max_n,
            max_m,
            counts,
        })
    }

    pub fn get(&self, n: u64, m: u32) -> Option<u64> {
        self.counts.get(m as usize)?.get(n as usize).copied()
    }

    /// CSV with header `n,m,count`, nonzero entries sorted by (n, m).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,m,count\n");
        for n in 0..=self.max_n {
            for m in 0..=self.max_m {
                let c = self.counts[m as usize][n as usize];
                if c > 0 {
                    out.push_str(&format!("{n},{m},{c}\n"));
                }
            }
        }
        out
    }
}
