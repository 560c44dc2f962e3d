//! Random-walk sparsification: per-coordinate Gaussian walks with
//! margin-based fixing, a phase schedule, and per-constraint error
//! accounting.
//!
//! Starting from a (possibly down-scaled) fractional point, every unfixed
//! coordinate takes an independent `N(0, gamma^2)` step each iteration.
//! Coordinates entering `[0, delta]` or `[1-delta, 1]` stop moving. The walk
//! terminates once every constraint has at most `stop_unfixed` unfixed
//! variables, everything is fixed, or a step budget runs out. Because fixed
//! coordinates keep their values, the output point is an unbiased
//! sparsification: each coordinate is a bounded martingale stopped at the
//! margins, so its expectation is exactly the starting value (optional
//! stopping), while each constraint retains only a few moving variables.

use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::instance::{FractionalPoint, ModelError, PackingInstance};
use crate::rng::{derive_seed, SplitMix64};

/// Step budget used when no constraint count is available to derive one.
const FALLBACK_MAX_STEPS: u64 = 1_000_000;

const STEP_LIMIT: u64 = 1 << 62;

#[derive(Debug, Error)]
pub enum WalkError {
    #[error("bad walk config: {0}")]
    BadConfig(String),
    #[error("step count exceeds 2^62 ({0:e})")]
    Overflow(f64),
    #[error("domain: {0}")]
    Domain(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Tunable parameters of one walk run.
#[derive(Clone, Debug)]
pub struct WalkConfig {
    /// Step scale `gamma > 0`.
    pub gamma: f64,
    /// Fixing margin `delta` in `(0, 1/2)`.
    pub delta: f64,
    /// Initial down-scaling `S >= 1`; the walk starts from `point / S`.
    pub scale: f64,
    /// Stop once every constraint has at most this many unfixed variables.
    pub stop_unfixed: usize,
    /// Hard iteration cap.
    pub max_steps: u64,
    pub seed: u64,
}

impl WalkConfig {
    /// Defaults for an instance: `delta = 1/ln(n)^2` (clamped into `(0, 1/4]`
    /// for tiny `n`), `gamma = delta/ln(n)`, unit scale, `stop_unfixed =
    /// ceil(ln m)`, and the step budget from [`total_steps`].
    pub fn defaults(instance: &PackingInstance, seed: u64) -> Self {
        let n = instance.n_vars().max(2) as f64;
        let m = instance.n_rows() as f64;
        let delta = (1.0 / n.ln().powi(2)).min(0.25);
        let gamma = delta / n.ln().max(1.0);
        let stop_unfixed = if m >= 2.0 { m.ln().ceil() as usize } else { 1 }.max(1);
        let b = instance.rhs().iter().fold(1.0_f64, |acc, &x| acc.max(x));
        let max_steps = if m >= 2.0 {
            total_steps(b, 1.0, m, gamma).unwrap_or(FALLBACK_MAX_STEPS)
        } else {
            FALLBACK_MAX_STEPS
        };
        Self { gamma, delta, scale: 1.0, stop_unfixed, max_steps, seed }
    }

    pub fn validated(self) -> Result<Self, WalkError> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(WalkError::BadConfig(format!("gamma = {} must be positive", self.gamma)));
        }
        if !(self.delta > 0.0 && self.delta < 0.5) {
            return Err(WalkError::BadConfig(format!(
                "delta = {} must lie in (0, 1/2)",
                self.delta
            )));
        }
        if self.gamma > self.delta {
            return Err(WalkError::BadConfig(format!(
                "gamma = {} must not exceed delta = {}",
                self.gamma, self.delta
            )));
        }
        if !(self.scale >= 1.0) {
            return Err(WalkError::BadConfig(format!("scale = {} must be >= 1", self.scale)));
        }
        if self.stop_unfixed < 1 {
            return Err(WalkError::BadConfig("stop_unfixed must be >= 1".into()));
        }
        if self.max_steps < 1 {
            return Err(WalkError::BadConfig("max_steps must be >= 1".into()));
        }
        Ok(self)
    }

    /// Whether `gamma <= delta / ln(n)`, the conservative step size under
    /// which overshoot past the margins is negligible over the step budget.
    pub fn gamma_within_log_margin(&self, n_vars: usize) -> bool {
        self.gamma <= self.delta / (n_vars.max(2) as f64).ln()
    }
}

/// Fixing status of one coordinate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FixState {
    Unfixed,
    /// Absorbed in `[0, delta]`.
    Low,
    /// Absorbed in `[1-delta, 1]`.
    High,
}

/// Live state of a walk, returned at termination.
#[derive(Clone, Debug)]
pub struct WalkState {
    values: Vec<f64>,
    start: Vec<f64>,
    fixed: Vec<FixState>,
    step_count: u64,
    phase: u32,
    unfixed_per_row: Vec<usize>,
    accumulated_error: Vec<f64>,
    phase_error_increments: Vec<Vec<f64>>,
    incomplete: bool,
    num_fixed_low: usize,
    num_fixed_high: usize,
}

impl WalkState {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn start(&self) -> &[f64] {
        &self.start
    }

    pub fn fixed(&self) -> &[FixState] {
        &self.fixed
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn phase(&self) -> u32 {
        self.phase
    }

    pub fn unfixed_per_row(&self) -> &[usize] {
        &self.unfixed_per_row
    }

    /// Per-constraint drift `<V_j, X_t - X_0>` accrued while variables were
    /// unfixed (fixed coordinates stop moving, so this equals the plain
    /// difference of row sums).
    pub fn accumulated_error(&self) -> &[f64] {
        &self.accumulated_error
    }

    /// Error accrued within each phase, one vector of per-row increments per
    /// phase boundary crossed (plus the final partial phase).
    pub fn phase_error_increments(&self) -> &[Vec<f64>] {
        &self.phase_error_increments
    }

    /// True when the step budget ran out before the stopping condition.
    pub fn incomplete(&self) -> bool {
        self.incomplete
    }

    pub fn num_fixed_low(&self) -> usize {
        self.num_fixed_low
    }

    pub fn num_fixed_high(&self) -> usize {
        self.num_fixed_high
    }

    pub fn num_unfixed(&self) -> usize {
        self.values.len() - self.num_fixed_low - self.num_fixed_high
    }

    pub fn max_unfixed_per_row(&self) -> usize {
        self.unfixed_per_row.iter().copied().max().unwrap_or(0)
    }

    pub fn max_abs_error(&self) -> f64 {
        self.accumulated_error.iter().fold(0.0, |a, &e| a.max(e.abs()))
    }
}

/// Cumulative step mark of phase `p`: `ceil(2^(2p) / (n^2 gamma^2))`.
pub fn phase_duration(p: u32, n: usize, gamma: f64) -> Result<u64, WalkError> {
    if n == 0 {
        return Err(WalkError::Domain("n must be >= 1".into()));
    }
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(WalkError::Domain(format!("gamma = {gamma} must be positive")));
    }
    let raw = (2.0_f64).powi(2 * p as i32) / (n as f64 * gamma).powi(2);
    let steps = raw.ceil();
    if !(steps < STEP_LIMIT as f64) {
        return Err(WalkError::Overflow(steps));
    }
    Ok((steps as u64).max(1))
}

/// Step budget `ceil(B^2 / (S^2 ln(m)^2 gamma^2))` that sparsifies every
/// constraint to O(ln m) unfixed variables. Natural logarithm throughout.
pub fn total_steps(b: f64, s: f64, m: f64, gamma: f64) -> Result<u64, WalkError> {
    if !(m >= 2.0) {
        return Err(WalkError::Domain(format!("m = {m} must be >= 2")));
    }
    for (name, v) in [("B", b), ("S", s), ("gamma", gamma)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(WalkError::Domain(format!("{name} = {v} must be positive")));
        }
    }
    let raw = (b / (s * m.ln() * gamma)).powi(2);
    let steps = raw.ceil();
    if !(steps < STEP_LIMIT as f64) {
        return Err(WalkError::Overflow(steps));
    }
    Ok((steps as u64).max(1))
}

/// Per-phase error allowance `2 sqrt(B ln(m) 2^p / (S n))`, used for
/// diagnostics against the measured phase increments.
pub fn error_budget(p: u32, b: f64, s: f64, n: usize, m: f64) -> Result<f64, WalkError> {
    if !(m >= 2.0) {
        return Err(WalkError::Domain(format!("m = {m} must be >= 2")));
    }
    if n == 0 {
        return Err(WalkError::Domain("n must be >= 1".into()));
    }
    for (name, v) in [("B", b), ("S", s)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(WalkError::Domain(format!("{name} = {v} must be positive")));
        }
    }
    Ok(2.0 * (b * m.ln() * (2.0_f64).powi(p as i32) / (s * n as f64)).sqrt())
}

/// Probability that a bounded martingale started at `start` is absorbed at
/// `hi` rather than `lo` (optional stopping): `(start - lo) / (hi - lo)`.
pub fn absorption_probability(start: f64, lo: f64, hi: f64) -> Result<f64, WalkError> {
    if !(lo < start && start < hi) {
        return Err(WalkError::Domain(format!("need lo < start < hi, got {lo}, {start}, {hi}")));
    }
    Ok((start - lo) / (hi - lo))
}

/// Expected number of unit-variance steps for a walk `a` away from one
/// absorbing barrier and `b` from the other to be absorbed: `a * b`.
pub fn expected_absorption_steps(a: f64, b: f64) -> f64 {
    debug_assert!(a > 0.0 && b > 0.0);
    a * b
}

struct Engine<'a> {
    instance: &'a PackingInstance,
    cfg: &'a WalkConfig,
    state: WalkState,
    rows_above: usize,
    unfixed_total: usize,
    last_mark_errors: Vec<f64>,
    next_mark: u64,
    track_live_error: bool,
}

impl<'a> Engine<'a> {
    fn new(instance: &'a PackingInstance, start: Vec<f64>, cfg: &'a WalkConfig, live: bool) -> Self {
        let n = instance.n_vars();
        let m = instance.n_rows();
        let unfixed_per_row: Vec<usize> = instance.rows().iter().map(Vec::len).collect();
        let rows_above = unfixed_per_row.iter().filter(|&&c| c > cfg.stop_unfixed).count();
        let state = WalkState {
            values: start.clone(),
            start,
            fixed: vec![FixState::Unfixed; n],
            step_count: 0,
            phase: 0,
            unfixed_per_row,
            accumulated_error: vec![0.0; m],
            phase_error_increments: Vec::new(),
            incomplete: false,
            num_fixed_low: 0,
            num_fixed_high: 0,
        };
        let next_mark = phase_duration(0, n, cfg.gamma).unwrap_or(u64::MAX);
        Engine {
            instance,
            cfg,
            state,
            rows_above,
            unfixed_total: n,
            last_mark_errors: vec![0.0; m],
            next_mark,
            track_live_error: live,
        }
    }

    fn row_errors_direct(&self) -> Vec<f64> {
        self.instance
            .rows()
            .iter()
            .map(|row| row.iter().map(|&i| self.state.values[i] - self.state.start[i]).sum())
            .collect()
    }

    fn fix(&mut self, i: usize, to: FixState) {
        self.state.fixed[i] = to;
        self.unfixed_total -= 1;
        match to {
            FixState::Low => self.state.num_fixed_low += 1,
            FixState::High => self.state.num_fixed_high += 1,
            FixState::Unfixed => unreachable!(),
        }
        for &r in &self.instance.cols()[i] {
            let c = self.state.unfixed_per_row[r];
            self.state.unfixed_per_row[r] = c - 1;
            if c == self.cfg.stop_unfixed + 1 {
                self.rows_above -= 1;
            }
        }
    }

    fn initial_fix_pass(&mut self) {
        for i in 0..self.instance.n_vars() {
            let v = self.state.values[i];
            if v <= self.cfg.delta {
                self.fix(i, FixState::Low);
            } else if v >= 1.0 - self.cfg.delta {
                self.fix(i, FixState::High);
            }
        }
    }

    fn stopped(&self) -> bool {
        self.unfixed_total == 0 || (self.instance.n_rows() > 0 && self.rows_above == 0)
    }

    fn snapshot_phase(&mut self) {
        let now = self.row_errors_direct();
        let inc: Vec<f64> = now
            .iter()
            .zip(&self.last_mark_errors)
            .map(|(&a, &b)| a - b)
            .collect();
        self.state.phase_error_increments.push(inc);
        self.last_mark_errors = now;
    }

    fn cross_marks(&mut self) {
        while self.state.step_count > self.next_mark {
            self.snapshot_phase();
            self.state.phase += 1;
            self.next_mark = phase_duration(self.state.phase, self.instance.n_vars(), self.cfg.gamma)
                .unwrap_or(u64::MAX);
        }
    }

    fn step(&mut self) {
        self.state.step_count += 1;
        self.cross_marks();
        let mut rng = SplitMix64::new(derive_seed(self.cfg.seed, self.state.step_count));
        for i in 0..self.instance.n_vars() {
            // One draw per coordinate regardless of status keeps the step
            // vector a pure function of (seed, step_count).
            let g: f64 = rng.sample(StandardNormal);
            if self.state.fixed[i] != FixState::Unfixed {
                continue;
            }
            let old = self.state.values[i];
            let v = (old + self.cfg.gamma * g).clamp(0.0, 1.0);
            self.state.values[i] = v;
            if self.track_live_error {
                for &r in &self.instance.cols()[i] {
                    self.state.accumulated_error[r] += v - old;
                }
            }
            if v <= self.cfg.delta {
                self.fix(i, FixState::Low);
            } else if v >= 1.0 - self.cfg.delta {
                self.fix(i, FixState::High);
            }
        }
    }

    fn finish(mut self) -> WalkState {
        self.snapshot_phase();
        if !self.track_live_error {
            self.state.accumulated_error = self.row_errors_direct();
        }
        self.state
    }
}

/// Run the sparsification walk.
///
/// Starts from `point / scale`, walks until every constraint has at most
/// `stop_unfixed` unfixed coordinates (or everything is fixed, or the step
/// budget runs out, flagged via [`WalkState::incomplete`]), and returns the
/// final state together with the sparsified point: fixed coordinates carry
/// their absorbed values, unfixed ones their current values.
pub fn walk_round(
    instance: &PackingInstance,
    point: &FractionalPoint,
    config: &WalkConfig,
) -> Result<(WalkState, FractionalPoint), WalkError> {
    walk_round_impl(instance, point, config, None)
}

/// [`walk_round`] with a per-step observer (used by tracing and tests).
/// The observer also sees the initial state as step 0. In observed runs the
/// per-constraint error is maintained incrementally and must agree with the
/// direct row-sum difference.
pub fn walk_round_observed(
    instance: &PackingInstance,
    point: &FractionalPoint,
    config: &WalkConfig,
    observe: &mut dyn FnMut(&WalkState),
) -> Result<(WalkState, FractionalPoint), WalkError> {
    walk_round_impl(instance, point, config, Some(observe))
}

fn walk_round_impl(
    instance: &PackingInstance,
    point: &FractionalPoint,
    config: &WalkConfig,
    mut observer: Option<&mut dyn FnMut(&WalkState)>,
) -> Result<(WalkState, FractionalPoint), WalkError> {
    let cfg = config.clone().validated()?;
    if point.len() != instance.n_vars() {
        return Err(ModelError::PointLength { got: point.len(), want: instance.n_vars() }.into());
    }
    let start: Vec<f64> = point.values().iter().map(|&v| v / cfg.scale).collect();
    let mut engine = Engine::new(instance, start, &cfg, observer.is_some());
    engine.initial_fix_pass();
    if let Some(obs) = observer.as_deref_mut() {
        obs(&engine.state);
    }
    while !engine.stopped() {
        if engine.state.step_count >= cfg.max_steps {
            engine.state.incomplete = true;
            break;
        }
        engine.step();
        if let Some(obs) = observer.as_deref_mut() {
            obs(&engine.state);
        }
    }
    let state = engine.finish();
    let sparsified = FractionalPoint::new(state.values.clone())?;
    Ok((state, sparsified))
}
