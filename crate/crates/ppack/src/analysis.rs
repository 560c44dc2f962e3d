//! Bound calculators and brute-force oracles: the counting-argument lower
//! bound, hypergeometric row-hit probabilities, exhaustive minimum-load
//! search on tiny instances, and side-by-side bound reports.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::instance::{evaluate, ModelError, PackingInstance, RoundingOutcome};
use crate::lll::{build_dependency, lll_error_target, LllError};
use crate::par::{map_indices, ExecMode};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("bad parameter: {0}")]
    BadParam(String),
    #[error("enumeration budget exceeded: C(n, support) = {needed:.3e} > {cap}")]
    Budget { needed: f64, cap: u64 },
    #[error("outcome does not belong to this instance: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Lll(#[from] LllError),
}

fn bad(msg: impl Into<String>) -> AnalysisError {
    AnalysisError::BadParam(msg.into())
}

/// Whether `ln(m/n) > k + t ln t`: the counting argument then certifies
/// that some matrix with `m` random `k`-sparse rows over `n` columns
/// defeats error target `t` at objective `n/k`. Natural logarithms; the
/// `t = 1` term vanishes.
pub fn lower_bound_condition(m: usize, n: usize, k: usize, t: usize) -> Result<bool, AnalysisError> {
    if n < 1 || m < n || k < 1 || t < 1 {
        return Err(bad(format!("need m >= n >= 1, k >= 1, t >= 1; got m={m}, n={n}, k={k}, t={t}")));
    }
    let (lhs, rhs) = lower_bound_sides(m, n, k, t);
    Ok(lhs > rhs)
}

/// The two sides of the condition, for reporting.
pub fn lower_bound_sides(m: usize, n: usize, k: usize, t: usize) -> (f64, f64) {
    let lhs = (m as f64 / n as f64).ln();
    let tf = t as f64;
    let rhs = k as f64 + tf * tf.ln();
    (lhs, rhs)
}

/// Martingale tail `Pr[|S_T| > beta] <= 2 exp(-beta^2 / 2T)` for a sum of
/// `T` standard-Gaussian steps.
pub fn martingale_tail(t_steps: f64, beta: f64) -> f64 {
    debug_assert!(t_steps > 0.0 && beta > 0.0);
    2.0 * (-beta * beta / (2.0 * t_steps)).exp()
}

/// Exact binomial coefficient in 128-bit arithmetic; `None` on overflow.
pub fn binomial_u128(n: u64, k: u64) -> Option<u128> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut res: u128 = 1;
    for i in 1..=k {
        res = res.checked_mul((n - k + i) as u128)?;
        res /= i as u128;
    }
    Some(res)
}

/// `ln C(n, k)` by summing logarithms; exact enough for tail ratios.
pub fn ln_binomial(n: u64, k: u64) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    let k = k.min(n - k);
    (1..=k)
        .map(|i| ((n - k + i) as f64).ln() - (i as f64).ln())
        .sum()
}

/// Threshold above which the exact 128-bit path gives way to log-gamma
/// style arithmetic.
const EXACT_HYPERGEOM_LIMIT: u64 = 60;

/// `Pr[|R ∩ F| = i]` summed over `i = t..` for a uniformly random
/// `k`-subset `R` of `[n]` and a fixed subset `F` of size `target`.
pub fn hypergeometric_ge(n: u64, k: u64, target: u64, t: u64) -> Result<f64, AnalysisError> {
    if target > n || k > n {
        return Err(bad(format!("need target <= n and k <= n; got n={n}, k={k}, target={target}")));
    }
    if t == 0 {
        return Ok(1.0);
    }
    let hi = k.min(target);
    if t > hi {
        return Ok(0.0);
    }
    if n <= EXACT_HYPERGEOM_LIMIT {
        let denom = binomial_u128(n, k).ok_or_else(|| bad("binomial overflow"))?;
        let mut num: u128 = 0;
        for i in t..=hi {
            let a = binomial_u128(target, i).ok_or_else(|| bad("binomial overflow"))?;
            let b = binomial_u128(n - target, k - i)
                .ok_or_else(|| bad("binomial overflow"))?;
            num += a * b;
        }
        Ok(num as f64 / denom as f64)
    } else {
        let ln_denom = ln_binomial(n, k);
        let mut sum = 0.0;
        for i in t..=hi {
            let ln_term = ln_binomial(target, i) + ln_binomial(n - target, k - i) - ln_denom;
            sum += ln_term.exp();
        }
        Ok(sum.min(1.0))
    }
}

/// Exact-vs-closed-form pair for the probability that a random `k`-sparse
/// row meets a fixed `(n/k)`-subset in at least `t` positions.
#[derive(Clone, Copy, Debug)]
pub struct HitProbability {
    /// Exact hypergeometric tail.
    pub exact: f64,
    /// Closed-form lower bound `1 / (e^(k - t/2) t^t)`.
    pub lower_bound: f64,
}

/// Compute [`HitProbability`] with target size `n/k` (integer division when
/// `k` does not divide `n`).
pub fn row_hit_probability(n: u64, k: u64, t: u64) -> Result<HitProbability, AnalysisError> {
    if !(t <= k && k <= n && k >= 1) {
        return Err(bad(format!("need t <= k <= n with k >= 1; got n={n}, k={k}, t={t}")));
    }
    let target = n / k;
    let exact = hypergeometric_ge(n, k, target, t)?;
    let tf = t as f64;
    let ln_t_pow = if t == 0 { 0.0 } else { tf * tf.ln() };
    let lower_bound = (-(k as f64 - tf / 2.0) - ln_t_pow).exp();
    Ok(HitProbability { exact, lower_bound })
}

/// Default cap on the number of supports the exhaustive oracle enumerates.
pub const ENUMERATION_CAP: u64 = 10_000_000;

/// Exhaustively find a 0-1 vector with exactly `support_size` ones
/// minimizing the maximum row load. Ties break to the lexicographically
/// smallest support. Errors when `C(n, support_size)` exceeds the cap.
pub fn brute_force_min_load(
    instance: &PackingInstance,
    support_size: usize,
) -> Result<(Vec<usize>, u64), AnalysisError> {
    brute_force_min_load_with(instance, support_size, ENUMERATION_CAP, ExecMode::default())
}

/// [`brute_force_min_load`] with an explicit enumeration cap and execution
/// mode.
pub fn brute_force_min_load_with(
    instance: &PackingInstance,
    support_size: usize,
    cap: u64,
    mode: ExecMode,
) -> Result<(Vec<usize>, u64), AnalysisError> {
    let n = instance.n_vars();
    if support_size > n {
        return Err(bad(format!("support_size {support_size} > n_vars {n}")));
    }
    let count = ln_binomial(n as u64, support_size as u64).exp();
    if count > cap as f64 {
        return Err(AnalysisError::Budget { needed: count, cap });
    }
    if support_size == 0 {
        return Ok((Vec::new(), 0));
    }
    // Partition lexicographic enumeration by the first support element;
    // branch minima combine by (load, support) order, which is exactly the
    // global lexicographic tie-break.
    let branches = map_indices(mode, n - support_size + 1, |first| {
        best_in_branch(instance, support_size, first)
    });
    branches
        .into_iter()
        .flatten()
        .min_by(|a, b| (a.1, &a.0).cmp(&(b.1, &b.0)))
        .ok_or_else(|| bad("no support enumerated"))
}

fn max_load_of_support(instance: &PackingInstance, support: &[usize], loads: &mut [u32]) -> u64 {
    let cols = instance.cols();
    let mut max = 0u32;
    for &c in support {
        for &r in &cols[c] {
            loads[r] += 1;
            max = max.max(loads[r]);
        }
    }
    for &c in support {
        for &r in &cols[c] {
            loads[r] = 0;
        }
    }
    u64::from(max)
}

fn best_in_branch(
    instance: &PackingInstance,
    support_size: usize,
    first: usize,
) -> Option<(Vec<usize>, u64)> {
    let n = instance.n_vars();
    debug_assert!(first + support_size <= n);
    let mut loads = vec![0u32; instance.n_rows()];
    let mut support: Vec<usize> = (first..first + support_size).collect();
    let mut best: Option<(Vec<usize>, u64)> = None;
    loop {
        let load = max_load_of_support(instance, &support, &mut loads);
        if best.as_ref().is_none_or(|(_, b)| load < *b) {
            best = Some((support.clone(), load));
        }
        if support_size == 1 {
            // Position 0 is pinned to `first`: this branch has one support.
            break;
        }
        // Advance positions 1.. in lexicographic order.
        let mut pos = support_size - 1;
        loop {
            if support[pos] < n - (support_size - pos) {
                support[pos] += 1;
                for q in pos + 1..support_size {
                    support[q] = support[q - 1] + 1;
                }
                break;
            }
            if pos == 1 {
                return best;
            }
            pos -= 1;
        }
    }
    best
}

/// One measured-vs-theoretical comparison row.
#[derive(Clone, Debug)]
pub struct BoundRow {
    pub label: String,
    pub linf_load: u64,
    pub objective: f64,
    /// Shared theoretical load target (`lll_error_target(d)`).
    pub theoretical: f64,
    /// `linf_load / theoretical` when the target is positive.
    pub ratio: f64,
    pub pass: bool,
}

/// Side-by-side report of rounding outcomes against theoretical targets.
#[derive(Clone, Debug)]
pub struct BoundReport {
    /// Parameter echo (m, n, d, opt, slack).
    pub params: BTreeMap<String, String>,
    /// Named reference values: the local-lemma target, the independent
    /// rounding reference `ln m / ln ln m`, and both branches of the
    /// degree/objective error expression.
    pub theoretical: BTreeMap<String, f64>,
    pub rows: Vec<BoundRow>,
    pub slack: f64,
    pub pass: bool,
}

/// Tabulate outcomes on one instance against the theoretical targets.
///
/// Every outcome must belong to the instance: lengths must match and the
/// stored load/objective must recompute exactly.
pub fn pipeline_report(
    instance: &PackingInstance,
    entries: &[(String, RoundingOutcome)],
    opt_fractional: f64,
    slack: f64,
) -> Result<BoundReport, AnalysisError> {
    let m = instance.n_rows() as f64;
    let d = build_dependency(instance, None)?.max_degree();
    let t_target = lll_error_target(d) as f64;

    let mut theoretical = BTreeMap::new();
    theoretical.insert("lll_error_target".into(), t_target);
    theoretical.insert(
        "rt_reference".into(),
        if m > std::f64::consts::E { m.ln() / m.ln().ln() } else { f64::NAN },
    );
    let df = d as f64;
    theoretical.insert(
        "branch_log_d".into(),
        if df > std::f64::consts::E { df.ln() / df.ln().ln() } else { f64::NAN },
    );
    let ratio_m_opt = if opt_fractional > 0.0 { m / opt_fractional } else { f64::NAN };
    theoretical.insert(
        "branch_log_m_over_opt".into(),
        if ratio_m_opt > std::f64::consts::E {
            ratio_m_opt.ln() / ratio_m_opt.ln().ln()
        } else {
            f64::NAN
        },
    );

    let mut rows = Vec::with_capacity(entries.len());
    for (label, outcome) in entries {
        let recomputed = evaluate(instance, &outcome.solution)
            .map_err(|e| AnalysisError::Mismatch(format!("{label}: {e}")))?;
        if recomputed.linf_load != outcome.linf_load || recomputed.objective != outcome.objective {
            return Err(AnalysisError::Mismatch(format!(
                "{label}: stored load/objective do not recompute on this instance"
            )));
        }
        let ratio = if t_target > 0.0 { outcome.linf_load as f64 / t_target } else { f64::NAN };
        rows.push(BoundRow {
            label: label.clone(),
            linf_load: outcome.linf_load,
            objective: outcome.objective,
            theoretical: t_target,
            ratio,
            pass: (outcome.linf_load as f64) <= slack * t_target,
        });
    }

    let mut params = BTreeMap::new();
    params.insert("m".into(), instance.n_rows().to_string());
    params.insert("n".into(), instance.n_vars().to_string());
    params.insert("d".into(), d.to_string());
    params.insert("opt_fractional".into(), crate::fileio::fmt_f64(opt_fractional));
    params.insert("slack".into(), crate::fileio::fmt_f64(slack));

    let pass = rows.iter().all(|r| r.pass);
    Ok(BoundReport { params, theoretical, rows, slack, pass })
}
