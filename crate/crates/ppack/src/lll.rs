//! Second-stage rounding: dependency graphs over shared columns, symmetric
//! local-lemma error targets, Moser-Tardos resampling with an optional
//! objective event, and the damped/scaled variant that trades objective
//! value for strict feasibility.

use std::collections::BTreeSet;

use rand::Rng;
use thiserror::Error;

use crate::instance::{evaluate, FractionalPoint, ModelError, PackingInstance, RoundingOutcome};
use crate::rng::SplitMix64;

#[derive(Debug, Error)]
pub enum LllError {
    #[error("bad parameter: {0}")]
    BadParam(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

fn bad(msg: impl Into<String>) -> LllError {
    LllError::BadParam(msg.into())
}

/// Constraint-adjacency structure: two constraints depend on each other when
/// they share at least one (active) column.
#[derive(Clone, Debug)]
pub struct DependencyGraph {
    degree: Vec<usize>,
    max_degree: usize,
}

impl DependencyGraph {
    pub fn degrees(&self) -> &[usize] {
        &self.degree
    }

    pub fn degree(&self, row: usize) -> usize {
        self.degree[row]
    }

    pub fn max_degree(&self) -> usize {
        self.max_degree
    }
}

/// Build the dependency graph of an instance, restricted to columns where
/// `active` is true (all columns when `None`).
pub fn build_dependency(
    instance: &PackingInstance,
    active: Option<&[bool]>,
) -> Result<DependencyGraph, LllError> {
    if let Some(mask) = active {
        if mask.len() != instance.n_vars() {
            return Err(bad(format!(
                "active mask length {} != n_vars {}",
                mask.len(),
                instance.n_vars()
            )));
        }
    }
    let m = instance.n_rows();
    let cols = instance.cols();
    let mut degree = vec![0usize; m];
    let mut stamp = vec![usize::MAX; m];
    for (j, row) in instance.rows().iter().enumerate() {
        for &i in row {
            if active.is_some_and(|a| !a[i]) {
                continue;
            }
            for &r in &cols[i] {
                if r != j && stamp[r] != j {
                    stamp[r] = j;
                    degree[j] += 1;
                }
            }
        }
    }
    let max_degree = degree.iter().copied().max().unwrap_or(0);
    Ok(DependencyGraph { degree, max_degree })
}

/// Smallest integer `t` with `e * 2^-t * (d+1) <= 1` (symmetric local
/// lemma for per-row overload probability `2^-t`).
pub fn lll_error_target(d: usize) -> u64 {
    let need = std::f64::consts::E * (d as f64 + 1.0);
    let mut t = 1u64;
    while (2.0_f64).powi(t.min(1023) as i32) < need {
        t += 1;
    }
    t
}

/// Whether the symmetric local-lemma condition `e * 2^-t * (d+1) <= 1`
/// holds for an error target `t` and dependency degree `d`.
pub fn lll_guard(t: u64, d: usize) -> bool {
    std::f64::consts::E * (d as f64 + 1.0) <= (2.0_f64).powi(t.min(1023) as i32)
}

/// Sharper target from the full Chernoff tail: smallest `t` with
/// `chernoff_tail(1, t-1) <= 1 / (e (d+1))`. Means below 1 only sharpen the
/// tail, so using mean 1 is the conservative choice. Grows like
/// `log d / log log d` rather than `log d`, though for small `d` it can
/// exceed [`lll_error_target`].
pub fn lll_error_target_tight(d: usize) -> Result<u64, LllError> {
    if d < 2 {
        return Err(bad(format!("tight target needs d >= 2, got {d}")));
    }
    let threshold = 1.0 / (std::f64::consts::E * (d as f64 + 1.0));
    let mut t = 2u64;
    while chernoff_tail(1.0, (t - 1) as f64) > threshold {
        t += 1;
    }
    Ok(t)
}

/// Multiplicative Chernoff upper tail
/// `Pr[U >= (1+delta) E[U]] <= (e^delta / (1+delta)^(1+delta))^E[U]`.
pub fn chernoff_tail(mean: f64, delta: f64) -> f64 {
    debug_assert!(mean > 0.0 && delta >= 0.0);
    let one_plus = 1.0 + delta;
    (mean * (delta - one_plus * one_plus.ln())).exp()
}

/// Scale `S = max((m/opt)^(1/(B-1)), d^(1/(B-1)))` under which the damped
/// pipeline still guarantees objective `Omega(opt / S)`.
///
/// Undefined at `B = 1`; integer-valued `B` callers may pass `B + 1`
/// instead (the overload probability of a 0-1 row jumps at `B + 1`).
pub fn damped_scale(m: usize, opt: f64, d: usize, b: f64) -> Result<f64, LllError> {
    if !(b > 1.0) {
        return Err(bad(format!(
            "damped_scale needs B > 1 (got {b}); for integer B substitute B+1"
        )));
    }
    if !(opt > 0.0) {
        return Err(bad(format!("opt = {opt} must be positive")));
    }
    let ex = 1.0 / (b - 1.0);
    Ok((m as f64 / opt).powf(ex).max((d as f64).powf(ex)))
}

/// Damping factor `beta = e (d alpha)^(1/B)`, nudged up by 1e-9 relative so
/// `(beta/e)^B > d alpha` holds strictly.
pub fn damped_beta(d: f64, alpha: f64, b: f64) -> Result<f64, LllError> {
    if !(d >= 1.0) {
        return Err(bad(format!("d = {d} must be >= 1")));
    }
    if !(alpha >= 1.0) {
        return Err(bad(format!("alpha = {alpha} must be >= 1")));
    }
    if !(b >= 1.0) {
        return Err(bad(format!("B = {b} must be >= 1")));
    }
    Ok(std::f64::consts::E * (d * alpha).powf(1.0 / b) * (1.0 + 1e-9))
}

/// Report of the asymmetric local-lemma feasibility check with weights
/// `y_row = 1/(alpha d)` for row events and `y_obj = 1/2` for the
/// objective event.
#[derive(Clone, Debug)]
pub struct AsymmetricLllReport {
    /// Requirement `1/(alpha d) (1 - 1/(alpha d))^d (1 - 1/2)` on the
    /// per-row overload probability.
    pub row_requirement: f64,
    /// Supplied per-row overload probability bound.
    pub row_probability: f64,
    pub rows_ok: bool,
    /// Requirement `(1/2) (1 - 1/(alpha d))^m` on the objective-event
    /// probability.
    pub objective_requirement: f64,
    /// Chernoff-Hoeffding bound `exp(-eps^2 opt / 2)` on the objective
    /// event.
    pub objective_probability: f64,
    pub objective_ok: bool,
}

/// Check the two asymmetric-LLL inequalities for given weights. This is a
/// calculator over probability bounds, not runtime behavior; the resampler
/// needs only the events themselves.
pub fn asymmetric_lll_check(
    d: usize,
    alpha: f64,
    m: usize,
    opt: f64,
    epsilon: f64,
    row_probability: f64,
) -> Result<AsymmetricLllReport, LllError> {
    if d == 0 {
        return Err(bad("asymmetric check needs d >= 1".to_string()));
    }
    if !(alpha >= 1.0) {
        return Err(bad(format!("alpha = {alpha} must be >= 1")));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(bad(format!("epsilon = {epsilon} must be in (0,1)")));
    }
    let y = 1.0 / (alpha * d as f64);
    let row_requirement = y * (1.0 - y).powi(d as i32) * 0.5;
    let objective_requirement = 0.5 * (1.0 - y).powi(m.min(i32::MAX as usize) as i32);
    let objective_probability = (-epsilon * epsilon * opt / 2.0).exp();
    Ok(AsymmetricLllReport {
        row_requirement,
        row_probability,
        rows_ok: row_probability <= row_requirement,
        objective_requirement,
        objective_probability,
        objective_ok: objective_probability <= objective_requirement,
    })
}

/// How the resampler picks among violating events.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum SelectionRule {
    /// Deterministic: lowest event id first.
    #[default]
    FirstViolating,
    /// Uniformly random among currently violating row events.
    UniformRandom,
}

/// Configuration of one resampling run.
#[derive(Clone, Debug)]
pub struct LllConfig {
    /// Integer constraint-load ceiling `t >= 1`.
    pub error_target: u64,
    /// Scale parameter `alpha >= 1` of the asymmetric weights.
    pub alpha: f64,
    /// Objective slack; the conventional floor is `(1 - epsilon) opt`.
    pub epsilon: f64,
    /// Objective value below which the objective event fires. Zero
    /// disables the event.
    pub objective_floor: f64,
    pub max_resamples: u64,
    pub seed: u64,
    pub selection: SelectionRule,
}

impl LllConfig {
    pub fn new(error_target: u64, seed: u64) -> Self {
        Self {
            error_target,
            alpha: 1.0,
            epsilon: 0.5,
            objective_floor: 0.0,
            max_resamples: 0,
            seed,
            selection: SelectionRule::FirstViolating,
        }
    }

    pub fn validated(self) -> Result<Self, LllError> {
        if self.error_target < 1 {
            return Err(bad("error_target must be >= 1".to_string()));
        }
        if !(self.alpha >= 1.0) {
            return Err(bad(format!("alpha = {} must be >= 1", self.alpha)));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(bad(format!("epsilon = {} must be in (0,1)", self.epsilon)));
        }
        if !(self.objective_floor >= 0.0) {
            return Err(bad(format!("objective_floor = {} must be >= 0", self.objective_floor)));
        }
        Ok(self)
    }
}

/// Default resampling budget `max(1000, ceil(10 m ln m))`.
pub fn default_max_resamples(m: usize) -> u64 {
    let m = m.max(2) as f64;
    (10.0 * m * m.ln()).ceil().max(1000.0) as u64
}

/// Event ids of a solution: rows whose load exceeds `t`, plus the
/// objective event id `m` when the objective falls below `floor`.
pub fn violating_rows(
    instance: &PackingInstance,
    solution: &[u8],
    t: u64,
    floor: f64,
) -> Result<Vec<usize>, LllError> {
    let out = evaluate(instance, solution)?;
    let mut ids: Vec<usize> = instance
        .rows()
        .iter()
        .enumerate()
        .filter(|(_, row)| row.iter().map(|&i| u64::from(solution[i])).sum::<u64>() > t)
        .map(|(j, _)| j)
        .collect();
    if out.objective < floor {
        ids.push(instance.n_rows());
    }
    Ok(ids)
}

/// Round each coordinate to 1 independently with its point probability.
pub fn independent_round(point: &[f64], seed: u64) -> Vec<u8> {
    let mut rng = SplitMix64::new(seed);
    point.iter().map(|&p| u8::from(rng.gen::<f64>() < p)).collect()
}

struct MtState<'a> {
    instance: &'a PackingInstance,
    probs: &'a [f64],
    frozen: &'a [Option<u8>],
    t: u64,
    floor: f64,
    solution: Vec<u8>,
    loads: Vec<u64>,
    objective: f64,
    violating: BTreeSet<usize>,
}

impl<'a> MtState<'a> {
    fn sample_all(&mut self, rng: &mut SplitMix64) {
        let sol: Vec<u8> = (0..self.instance.n_vars())
            .map(|i| match self.frozen[i] {
                Some(v) => v,
                None => u8::from(rng.gen::<f64>() < self.probs[i]),
            })
            .collect();
        self.reset_to(sol);
    }

    fn reset_to(&mut self, solution: Vec<u8>) {
        self.solution = solution;
        self.loads = self
            .instance
            .rows()
            .iter()
            .map(|row| row.iter().map(|&i| u64::from(self.solution[i])).sum())
            .collect();
        self.objective = self
            .solution
            .iter()
            .zip(self.instance.weights())
            .map(|(&s, &c)| f64::from(s) * c)
            .sum();
        self.violating =
            (0..self.instance.n_rows()).filter(|&j| self.loads[j] > self.t).collect();
    }

    fn set_var(&mut self, i: usize, value: u8) {
        let old = self.solution[i];
        if old == value {
            return;
        }
        self.solution[i] = value;
        let delta = i64::from(value) - i64::from(old);
        self.objective += delta as f64 * self.instance.weights()[i];
        for &r in &self.instance.cols()[i] {
            let load = (self.loads[r] as i64 + delta) as u64;
            self.loads[r] = load;
            if load > self.t {
                self.violating.insert(r);
            } else {
                self.violating.remove(&r);
            }
        }
    }

    /// Redraw the non-frozen variables of one event. Row events resample
    /// their row; the objective event resamples every variable.
    fn resample_event(&mut self, event: usize, rng: &mut SplitMix64) {
        if event < self.instance.n_rows() {
            let row = self.instance.row(event).to_vec();
            for i in row {
                if self.frozen[i].is_none() {
                    let v = u8::from(rng.gen::<f64>() < self.probs[i]);
                    self.set_var(i, v);
                }
            }
        } else {
            for i in 0..self.instance.n_vars() {
                if self.frozen[i].is_none() {
                    let v = u8::from(rng.gen::<f64>() < self.probs[i]);
                    self.set_var(i, v);
                }
            }
        }
    }

    fn objective_violated(&self) -> bool {
        self.objective < self.floor
    }

    fn pick_event(&self, rng: &mut SplitMix64, rule: SelectionRule) -> Option<usize> {
        if let Some(&first) = self.violating.iter().next() {
            match rule {
                SelectionRule::FirstViolating => Some(first),
                SelectionRule::UniformRandom => {
                    let idx = rng.gen_range(0..self.violating.len());
                    self.violating.iter().nth(idx).copied()
                }
            }
        } else if self.objective_violated() {
            Some(self.instance.n_rows())
        } else {
            None
        }
    }

    fn badness(&self) -> (usize, u64, f64) {
        let events = self.violating.len() + usize::from(self.objective_violated());
        let linf = self.loads.iter().copied().max().unwrap_or(0);
        (events, linf, -self.objective)
    }
}

/// Moser-Tardos resampling over the row-overload events (load `> t`) and
/// the low-objective event.
///
/// Starts from an independent rounding of `point`, then repeatedly redraws
/// the variables of one violating event until none remain or the budget is
/// exhausted. On success the outcome satisfies `linf_load <= t` and
/// `objective >= objective_floor`; on exhaustion the best solution seen is
/// returned with `converged = 0` in its stats.
pub fn moser_tardos(
    instance: &PackingInstance,
    point: &FractionalPoint,
    config: &LllConfig,
) -> Result<RoundingOutcome, LllError> {
    if point.len() != instance.n_vars() {
        return Err(ModelError::PointLength { got: point.len(), want: instance.n_vars() }.into());
    }
    let frozen = vec![None; instance.n_vars()];
    moser_tardos_masked(instance, point.values(), &frozen, config)
}

/// [`moser_tardos`] over a partially frozen solution: coordinates with
/// `frozen[i] = Some(v)` keep value `v`, contribute to loads and the
/// objective, and are never resampled.
pub fn moser_tardos_masked(
    instance: &PackingInstance,
    probs: &[f64],
    frozen: &[Option<u8>],
    config: &LllConfig,
) -> Result<RoundingOutcome, LllError> {
    let cfg = config.clone().validated()?;
    if probs.len() != instance.n_vars() || frozen.len() != instance.n_vars() {
        return Err(bad(format!(
            "probs/frozen length must equal n_vars = {}",
            instance.n_vars()
        )));
    }
    for (i, &p) in probs.iter().enumerate() {
        if !(0.0..=1.0).contains(&p) {
            return Err(bad(format!("prob[{i}] = {p} outside [0,1]")));
        }
    }
    let max_resamples = if cfg.max_resamples == 0 {
        default_max_resamples(instance.n_rows())
    } else {
        cfg.max_resamples
    };

    // Rows whose frozen contribution alone exceeds t can never be
    // satisfied by resampling.
    let impossible: usize = instance
        .rows()
        .iter()
        .filter(|row| {
            row.iter()
                .map(|&i| u64::from(frozen[i].unwrap_or(0)))
                .sum::<u64>()
                > cfg.error_target
        })
        .count();

    let mut rng = SplitMix64::new(cfg.seed);
    let mut st = MtState {
        instance,
        probs,
        frozen,
        t: cfg.error_target,
        floor: cfg.objective_floor,
        solution: Vec::new(),
        loads: Vec::new(),
        objective: 0.0,
        violating: BTreeSet::new(),
    };
    st.sample_all(&mut rng);

    let initial_violations = st.badness().0 as u64;
    let mut best = st.solution.clone();
    let mut best_badness = st.badness();
    let mut resamples = 0u64;
    let mut converged = best_badness.0 == 0;

    while !converged && resamples < max_resamples && impossible == 0 {
        let event = match st.pick_event(&mut rng, cfg.selection) {
            Some(e) => e,
            None => break,
        };
        st.resample_event(event, &mut rng);
        resamples += 1;
        let badness = st.badness();
        if badness < best_badness {
            best_badness = badness;
            best = st.solution.clone();
        }
        converged = badness.0 == 0;
    }
    if converged {
        best = st.solution.clone();
    }

    let mut outcome = evaluate(instance, &best)?;
    outcome.stats.insert("resamples".into(), resamples);
    outcome.stats.insert("converged".into(), u64::from(converged));
    outcome.stats.insert("initial_violations".into(), initial_violations);
    if impossible > 0 {
        outcome.stats.insert("impossible_rows".into(), impossible as u64);
    }
    Ok(outcome)
}

/// Whether a resampling outcome converged (all events cleared).
pub fn mt_converged(outcome: &RoundingOutcome) -> bool {
    outcome.stats.get("converged").copied().unwrap_or(0) == 1
}

/// Randomized rounding with greedy repair: set each variable to 1 with
/// probability `1/k`, then for each row with load above
/// `q = max(1, ceil(ln(mk/n)))` zero its variables in ascending index
/// order until the row fits.
pub fn greedy_repair(
    instance: &PackingInstance,
    k: usize,
    seed: u64,
) -> Result<RoundingOutcome, LllError> {
    if k < 1 {
        return Err(bad("k must be >= 1".to_string()));
    }
    let m = instance.n_rows();
    let n = instance.n_vars();
    let q = ((m as f64 * k as f64 / n as f64).ln().ceil()).max(1.0) as u64;

    let mut rng = SplitMix64::new(seed);
    let p = 1.0 / k as f64;
    let mut solution: Vec<u8> = (0..n).map(|_| u8::from(rng.gen::<f64>() < p)).collect();
    let initial_ones: u64 = solution.iter().map(|&s| u64::from(s)).sum();

    let mut loads: Vec<u64> = instance
        .rows()
        .iter()
        .map(|row| row.iter().map(|&i| u64::from(solution[i])).sum())
        .collect();
    let cols = instance.cols();
    let mut zeroed = 0u64;
    for j in 0..m {
        if loads[j] <= q {
            continue;
        }
        let row = instance.row(j).to_vec();
        for i in row {
            if loads[j] <= q {
                break;
            }
            if solution[i] == 1 {
                solution[i] = 0;
                zeroed += 1;
                for &r in &cols[i] {
                    loads[r] -= 1;
                }
            }
        }
    }

    let mut outcome = evaluate(instance, &solution)?;
    debug_assert!(outcome.linf_load <= q);
    outcome.stats.insert("repair_threshold".into(), q);
    outcome.stats.insert("initial_ones".into(), initial_ones);
    outcome.stats.insert("zeroed".into(), zeroed);
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gen::random_k_sparse;
    use crate::par::{map_seeds, ExecMode};

    fn disjoint_instance(m: usize, k: usize) -> PackingInstance {
        let rows: Vec<Vec<usize>> = (0..m).map(|j| (j * k..(j + 1) * k).collect()).collect();
        let n = m * k;
        PackingInstance::new(rows, n, vec![1.0; m], vec![1.0; n]).unwrap()
    }

    #[test]
    fn dependency_degrees_by_hand() {
        let inst = PackingInstance::new_lenient(
            vec![vec![0, 1], vec![1, 2], vec![0]],
            3,
            vec![1.0; 3],
            vec![1.0; 3],
        )
        .unwrap();
        let dep = build_dependency(&inst, None).unwrap();
        assert_eq!(dep.degrees(), &[2, 1, 1]);
        assert_eq!(dep.max_degree(), 2);
    }

    #[test]
    fn dependency_disjoint_rows() {
        let inst = PackingInstance::new_lenient(
            vec![vec![0], vec![1], vec![2]],
            3,
            vec![1.0; 3],
            vec![1.0; 3],
        )
        .unwrap();
        let dep = build_dependency(&inst, None).unwrap();
        assert_eq!(dep.degrees(), &[0, 0, 0]);
    }

    #[test]
    fn dependency_respects_active_mask() {
        let inst = PackingInstance::new_lenient(
            vec![vec![0, 1], vec![1, 2]],
            3,
            vec![1.0; 2],
            vec![1.0; 3],
        )
        .unwrap();
        let dep = build_dependency(&inst, Some(&[true, false, true])).unwrap();
        assert_eq!(dep.degrees(), &[0, 0]);
        let dep = build_dependency(&inst, Some(&[true, true, true])).unwrap();
        assert_eq!(dep.degrees(), &[1, 1]);
    }

    #[test]
    fn error_target_values() {
        assert_eq!(lll_error_target(0), 2);
        assert_eq!(lll_error_target(3), 4);
        assert_eq!(lll_error_target(1000), 12);
        assert!(lll_guard(lll_error_target(1000), 1000));
        assert!(!lll_guard(lll_error_target(1000) - 1, 1000));
    }

    #[test]
    fn tight_error_target_values() {
        assert_eq!(lll_error_target_tight(2).unwrap(), 4);
        assert!(lll_error_target_tight(1).is_err());
        // Non-decreasing in d.
        let mut prev = 0;
        for d in [2usize, 4, 10, 100, 10_000, 1_000_000] {
            let t = lll_error_target_tight(d).unwrap();
            assert!(t >= prev);
            prev = t;
        }
        // Asymptotically beats the plain target.
        let d = 1_000_000;
        assert_eq!(lll_error_target(d), 22);
        let tight = lll_error_target_tight(d).unwrap();
        assert!(tight < 22, "tight target {tight} not below 22");
        assert_eq!(tight, 11);
    }

    #[test]
    fn chernoff_tail_values() {
        let e = std::f64::consts::E;
        assert!((chernoff_tail(1.0, e - 1.0) - (-1.0_f64).exp()).abs() < 1e-12);
        assert!((chernoff_tail(1.0, 1e-9) - 1.0).abs() < 1e-9);
        let single = chernoff_tail(1.0, 0.7);
        let double = chernoff_tail(2.0, 0.7);
        assert!((double - single * single).abs() < 1e-14);
    }

    #[test]
    fn damped_scale_values() {
        let s = damped_scale(1000, 100.0, 10, 3.0).unwrap();
        assert!((s - 10.0_f64.sqrt()).abs() < 1e-12);
        // d = m/opt makes the branches coincide.
        let s1 = damped_scale(1000, 100.0, 10, 4.0).unwrap();
        assert!((s1 - 10.0_f64.powf(1.0 / 3.0)).abs() < 1e-12);
        // B -> infinity drives S -> 1.
        let s2 = damped_scale(1000, 100.0, 10, 1e9).unwrap();
        assert!((s2 - 1.0).abs() < 1e-6);
        assert!(damped_scale(1000, 100.0, 10, 1.0).is_err());
    }

    #[test]
    fn damped_beta_values() {
        let e = std::f64::consts::E;
        assert!((damped_beta(1.0, 1.0, 4.0).unwrap() - e).abs() < 1e-8);
        let beta = damped_beta(16.0, 1.0, 4.0).unwrap();
        assert!((beta - 2.0 * e).abs() < 1e-7);
        // Chernoff chain: with E[U] = B/beta and Delta = beta - 1,
        // tail <= (e/beta)^B <= 1/(alpha d).
        let (d, alpha, b) = (16.0, 1.0, 4.0);
        let tail = chernoff_tail(b / beta, beta - 1.0);
        let mid = (e / beta).powf(b);
        assert!(tail <= mid + 1e-15);
        assert!(mid < 1.0 / (alpha * d));
    }

    #[test]
    fn damped_beta_is_strict() {
        let mut rng = SplitMix64::new(0xD4);
        for _ in 0..1000 {
            let d = rng.gen_range(1.0..1e6_f64);
            let alpha = rng.gen_range(1.0..100.0_f64);
            let b = rng.gen_range(1.0..40.0_f64);
            let beta = damped_beta(d, alpha, b).unwrap();
            assert!(
                (beta / std::f64::consts::E).powf(b) > d * alpha,
                "damp requirement not strict at d={d}, alpha={alpha}, b={b}"
            );
        }
    }

    #[test]
    fn violating_rows_cases() {
        let inst = PackingInstance::new_lenient(
            vec![vec![0, 1]],
            2,
            vec![1.0],
            vec![1.0, 1.0],
        )
        .unwrap();
        assert!(violating_rows(&inst, &[0, 0], 1, 0.0).unwrap().is_empty());
        assert_eq!(violating_rows(&inst, &[1, 1], 1, 0.0).unwrap(), vec![0]);
        // Objective event only: id = m.
        assert_eq!(violating_rows(&inst, &[0, 0], 1, 1.0).unwrap(), vec![1]);
    }

    #[test]
    fn independent_round_endpoints() {
        assert_eq!(independent_round(&[0.0; 8], 1), vec![0; 8]);
        assert_eq!(independent_round(&[1.0; 8], 1), vec![1; 8]);
        let n = 100_000;
        let ones: u64 = independent_round(&vec![0.25; n], 9)
            .iter()
            .map(|&s| u64::from(s))
            .sum();
        let mean = ones as f64 / n as f64;
        assert!((mean - 0.25).abs() <= 0.005);
    }

    #[test]
    fn moser_tardos_no_violations_returns_initial() {
        let inst = disjoint_instance(4, 2);
        let point = FractionalPoint::new(vec![0.0; 8]).unwrap();
        let cfg = LllConfig::new(1, 3);
        let out = moser_tardos(&inst, &point, &cfg).unwrap();
        assert_eq!(out.stats["resamples"], 0);
        assert!(mt_converged(&out));
        assert_eq!(out.solution, vec![0; 8]);
    }

    #[test]
    fn moser_tardos_disjoint_converges_quickly() {
        // d = 0, t = lll_error_target(0) = 2, floor = opt/2.
        let m = 256;
        let k = 8;
        let inst = disjoint_instance(m, k);
        let point = FractionalPoint::uniform(m * k, 1.0 / k as f64).unwrap();
        let floor = point.objective(&inst) / 2.0;
        let budget = 10 * m as u64;
        let converged: u32 = map_seeds(ExecMode::default(), 0x3A, 100, |seed| {
            let mut cfg = LllConfig::new(lll_error_target(0), seed);
            cfg.objective_floor = floor;
            cfg.max_resamples = budget;
            let out = moser_tardos(&inst, &point, &cfg).unwrap();
            u32::from(mt_converged(&out) && out.stats["resamples"] <= budget)
        })
        .iter()
        .sum();
        assert!(converged >= 99, "only {converged}/100 disjoint runs converged");
    }

    #[test]
    fn moser_tardos_enforces_bounds_on_success() {
        let inst = random_k_sparse(64, 256, 8, 21).unwrap();
        let point = FractionalPoint::uniform(256, 0.125).unwrap();
        let d = build_dependency(&inst, None).unwrap().max_degree();
        let mut cfg = LllConfig::new(lll_error_target(d), 5);
        cfg.objective_floor = point.objective(&inst) / 2.0;
        let out = moser_tardos(&inst, &point, &cfg).unwrap();
        assert!(mt_converged(&out));
        assert!(out.linf_load <= lll_error_target(d));
        assert!(out.objective >= cfg.objective_floor);
    }

    #[test]
    fn resample_touches_only_event_variables() {
        let inst = PackingInstance::new_lenient(
            vec![vec![0, 1], vec![2, 3], vec![4, 5]],
            6,
            vec![1.0; 3],
            vec![1.0; 6],
        )
        .unwrap();
        let probs = vec![0.5; 6];
        let frozen = vec![None; 6];
        let mut st = MtState {
            instance: &inst,
            probs: &probs,
            frozen: &frozen,
            t: 1,
            floor: 0.0,
            solution: Vec::new(),
            loads: Vec::new(),
            objective: 0.0,
            violating: BTreeSet::new(),
        };
        let mut rng = SplitMix64::new(77);
        st.sample_all(&mut rng);
        for event in 0..3 {
            let before = st.solution.clone();
            st.resample_event(event, &mut rng);
            for i in 0..6 {
                if !inst.row(event).contains(&i) {
                    assert_eq!(before[i], st.solution[i], "variable {i} outside event {event} changed");
                }
            }
        }
        // Objective event resamples everything non-frozen.
        let frozen2: Vec<Option<u8>> = vec![Some(1), None, None, None, None, None];
        let mut st2 = MtState { frozen: &frozen2, ..st };
        st2.sample_all(&mut rng);
        for _ in 0..10 {
            st2.resample_event(3, &mut rng);
            assert_eq!(st2.solution[0], 1, "frozen variable changed");
        }
    }

    #[test]
    fn masked_rows_with_impossible_frozen_load_flagged() {
        let inst = PackingInstance::new_lenient(
            vec![vec![0, 1, 2]],
            3,
            vec![1.0],
            vec![1.0; 3],
        )
        .unwrap();
        let frozen = vec![Some(1), Some(1), None];
        let cfg = LllConfig::new(1, 0);
        let out = moser_tardos_masked(&inst, &[0.5; 3], &frozen, &cfg).unwrap();
        assert!(!mt_converged(&out));
        assert_eq!(out.stats["impossible_rows"], 1);
    }

    #[test]
    fn greedy_repair_respects_threshold() {
        let inst = random_k_sparse(4096, 4096, 12, 123).unwrap();
        let out = greedy_repair(&inst, 12, 9).unwrap();
        let q = out.stats["repair_threshold"];
        assert_eq!(q, 3); // ceil(ln 12)
        assert!(out.linf_load <= q);
    }

    #[test]
    fn greedy_repair_disjoint_rows_rarely_repairs() {
        let inst = disjoint_instance(64, 8);
        let out = greedy_repair(&inst, 8, 4).unwrap();
        // mk/n = 1 so q = 1; disjoint Binomial(8, 1/8) rows exceed 1
        // with probability ~0.26, so some repairs occur but most ones
        // survive.
        assert!(out.linf_load <= out.stats["repair_threshold"]);
        assert!(out.objective >= 64.0 / 8.0 / 4.0);
    }

    #[test]
    fn asymmetric_check_reports_both_inequalities() {
        // Comfortable regime: tiny row probability, large opt.
        let rep = asymmetric_lll_check(10, 2.0, 100, 400.0, 0.5, 1e-6).unwrap();
        assert!(rep.rows_ok);
        assert!(rep.objective_ok);
        // Impossible regime: row probability above the requirement.
        let rep = asymmetric_lll_check(10, 2.0, 100, 400.0, 0.5, 0.5).unwrap();
        assert!(!rep.rows_ok);
    }
}
