//! End-to-end rounding methods over one instance: independent rounding,
//! greedy repair, walk + resampling, and the damped/scaled variant.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::instance::{
    evaluate, validate, FractionalPoint, ModelError, PackingInstance, RoundingOutcome,
};
use crate::lll::{
    build_dependency, damped_scale, greedy_repair, independent_round, lll_error_target, lll_guard,
    moser_tardos_masked, mt_converged, LllConfig, LllError, SelectionRule,
};
use crate::rng::derive_seed;
use crate::walk::{walk_round, FixState, WalkConfig, WalkError, WalkState};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Walk(#[from] WalkError),
    #[error(transparent)]
    Lll(#[from] LllError),
    #[error("local-lemma guard failed: e * 2^-{t} * (d+1) = {lhs:.4} > 1 for measured d = {d}; pass the override to run anyway")]
    GuardFailed { t: u64, d: usize, lhs: f64 },
    #[error("damped rounding needs a uniform rhs, found mixed values")]
    NonUniformRhs,
    #[error("damped rounding with B = 1 leaves the scale exponent 1/(B-1) undefined; enable the B+1 substitution")]
    UnitRhsNeedsShift,
    #[error("damped rounding needs rhs >= 1, got {0}")]
    RhsBelowOne(f64),
}

/// Rounding method tags used by the CLI, plans, and result files.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "rt")]
    Rt,
    #[serde(rename = "greedy")]
    Greedy,
    #[serde(rename = "walk-lll")]
    WalkLll,
    #[serde(rename = "damped")]
    Damped,
}

impl Method {
    pub fn tag(&self) -> &'static str {
        match self {
            Method::Rt => "rt",
            Method::Greedy => "greedy",
            Method::WalkLll => "walk-lll",
            Method::Damped => "damped",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "rt" => Some(Method::Rt),
            "greedy" => Some(Method::Greedy),
            "walk-lll" => Some(Method::WalkLll),
            "damped" => Some(Method::Damped),
            _ => None,
        }
    }
}

/// What happens to the sparsified point after the walk.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FinalStage {
    /// Moser-Tardos resampling over unfixed variables with fixed ones
    /// snapped to their nearest endpoint.
    MoserTardos,
    /// A single independent rounding of every coordinate at its sparsified
    /// value, with no snapping and no resampling. Preserves each
    /// coordinate's marginal exactly; used by the distribution tests.
    IndependentOnly,
}

/// Options shared by the staged pipelines.
#[derive(Clone, Debug)]
pub struct PipelineConfig {
    pub seed: u64,
    /// Error target; `None` selects `lll_error_target(d)` for the measured
    /// dependency degree.
    pub t: Option<u64>,
    pub alpha: f64,
    /// Objective slack; the objective event fires below `(1-epsilon) opt`.
    pub epsilon: f64,
    /// Disable to drop the objective event entirely.
    pub objective_event: bool,
    pub final_stage: FinalStage,
    /// Run the resampler even when the symmetric guard fails.
    pub allow_guard_failure: bool,
    /// Damped only: use `B+1` in the scale/damping exponents.
    pub use_b_plus_one: bool,
    pub selection: SelectionRule,
    /// Walk overrides; defaults derived from the instance when `None`.
    pub walk: Option<WalkConfig>,
    /// Resampling budget; 0 selects `default_max_resamples(m)`.
    pub max_resamples: u64,
}

impl PipelineConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            t: None,
            alpha: 1.0,
            epsilon: 0.5,
            objective_event: true,
            final_stage: FinalStage::MoserTardos,
            allow_guard_failure: false,
            use_b_plus_one: false,
            selection: SelectionRule::FirstViolating,
            walk: None,
            max_resamples: 0,
        }
    }
}

/// Flat result record; this is the JSON schema emitted by the CLI and the
/// sweep harness.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RoundResult {
    pub method: String,
    pub seed: u64,
    pub linf_load: u64,
    pub objective: f64,
    pub opt_fractional: f64,
    pub resamples: u64,
    pub walk_steps: u64,
    pub d_measured: u64,
    pub t_used: u64,
    #[serde(rename = "S_used")]
    pub s_used: f64,
    pub converged: bool,
}

/// Full rounding report: the flat record plus the outcome (and walk state
/// for the staged methods).
#[derive(Debug)]
pub struct RoundReport {
    pub result: RoundResult,
    pub outcome: RoundingOutcome,
    pub walk: Option<WalkState>,
    /// Effective walk parameters of the staged methods, after defaulting
    /// and any damped-scale adjustment.
    pub walk_config: Option<WalkConfig>,
}

/// One-shot independent rounding baseline.
pub fn round_rt(
    instance: &PackingInstance,
    point: &FractionalPoint,
    seed: u64,
) -> Result<RoundReport, PipelineError> {
    if point.len() != instance.n_vars() {
        return Err(ModelError::PointLength { got: point.len(), want: instance.n_vars() }.into());
    }
    let solution = independent_round(point.values(), seed);
    let outcome = evaluate(instance, &solution)?;
    let result = RoundResult {
        method: Method::Rt.tag().into(),
        seed,
        linf_load: outcome.linf_load,
        objective: outcome.objective,
        opt_fractional: point.objective(instance),
        resamples: 0,
        walk_steps: 0,
        d_measured: 0,
        t_used: 0,
        s_used: 1.0,
        converged: true,
    };
    Ok(RoundReport { result, outcome, walk: None, walk_config: None })
}

/// Greedy-repair baseline at nominal row cardinality `k`.
pub fn round_greedy(
    instance: &PackingInstance,
    k: usize,
    seed: u64,
) -> Result<RoundReport, PipelineError> {
    let outcome = greedy_repair(instance, k, seed)?;
    let opt = instance.n_vars() as f64 / k as f64;
    let result = RoundResult {
        method: Method::Greedy.tag().into(),
        seed,
        linf_load: outcome.linf_load,
        objective: outcome.objective,
        opt_fractional: opt,
        resamples: 0,
        walk_steps: 0,
        d_measured: 0,
        t_used: outcome.stats["repair_threshold"],
        s_used: 1.0,
        converged: true,
    };
    Ok(RoundReport { result, outcome, walk: None, walk_config: None })
}

fn snap_frozen(state: &WalkState) -> Vec<Option<u8>> {
    state
        .fixed()
        .iter()
        .map(|&f| match f {
            FixState::Low => Some(0),
            FixState::High => Some(1),
            FixState::Unfixed => None,
        })
        .collect()
}

fn active_mask(state: &WalkState) -> Vec<bool> {
    state.fixed().iter().map(|&f| f == FixState::Unfixed).collect()
}

fn record_walk(outcome: &mut RoundingOutcome, state: &WalkState) {
    outcome.stats.insert("walk_steps".into(), state.step_count());
    outcome.stats.insert("phases".into(), u64::from(state.phase()));
    outcome.stats.insert("fixed_low".into(), state.num_fixed_low() as u64);
    outcome.stats.insert("fixed_high".into(), state.num_fixed_high() as u64);
    outcome.stats.insert("walk_incomplete".into(), u64::from(state.incomplete()));
}

/// Walk sparsification followed by Moser-Tardos resampling (or a single
/// independent rounding, per `final_stage`).
pub fn round_walk_lll(
    instance: &PackingInstance,
    point: &FractionalPoint,
    cfg: &PipelineConfig,
) -> Result<RoundReport, PipelineError> {
    let point = validate(instance, point.clone())?;
    let opt = point.objective(instance);
    let mut walk_cfg = cfg
        .walk
        .clone()
        .unwrap_or_else(|| WalkConfig::defaults(instance, 0));
    walk_cfg.seed = derive_seed(cfg.seed, 1);
    run_staged(instance, &point, cfg, walk_cfg, opt, Method::WalkLll, None)
}

/// Damped rounding: scale the point down far enough that resampling at
/// error target `B` converges, trading objective for strict feasibility.
pub fn round_damped(
    instance: &PackingInstance,
    point: &FractionalPoint,
    cfg: &PipelineConfig,
) -> Result<RoundReport, PipelineError> {
    let b = instance.uniform_rhs().ok_or(PipelineError::NonUniformRhs)?;
    if b < 1.0 {
        return Err(PipelineError::RhsBelowOne(b));
    }
    // The point is expected to be feasible; measured violations are
    // recorded rather than fatal since the scaling divides them away.
    let (point, input_violation) = match validate(instance, point.clone()) {
        Ok(p) => (p, false),
        Err(ModelError::Infeasible { .. }) => (point.clone(), true),
        Err(e) => return Err(e.into()),
    };
    let opt = point.objective(instance);
    if opt <= 0.0 {
        return Err(LllError::BadParam("damped rounding needs a point with positive objective".into()).into());
    }
    let exponent_b = if cfg.use_b_plus_one {
        b + 1.0
    } else if b == 1.0 {
        return Err(PipelineError::UnitRhsNeedsShift);
    } else {
        b
    };
    let d_full = build_dependency(instance, None)?.max_degree();
    let scale = damped_scale(instance.n_rows(), opt, d_full, exponent_b)?.max(1.0);

    let mut walk_cfg = cfg
        .walk
        .clone()
        .unwrap_or_else(|| WalkConfig::defaults(instance, 0));
    walk_cfg.seed = derive_seed(cfg.seed, 1);
    walk_cfg.scale = scale;
    // The scaled start must sit strictly above the fixing margin or the
    // whole point freezes to zero at step 0.
    let scaled_min = point
        .values()
        .iter()
        .filter(|&&v| v > 0.0)
        .fold(f64::INFINITY, |a, &v| a.min(v / scale));
    if scaled_min.is_finite() && walk_cfg.delta >= scaled_min {
        let n = instance.n_vars().max(2) as f64;
        walk_cfg.delta = (scaled_min / 2.0).max(1e-12);
        walk_cfg.gamma = walk_cfg.delta / n.ln().max(1.0);
        let m = instance.n_rows() as f64;
        if m >= 2.0 {
            if let Ok(steps) = crate::walk::total_steps(b, scale, m, walk_cfg.gamma) {
                // Cap the recomputed budget: a degenerate point scale must
                // surface as an incomplete walk, not an unbounded run.
                walk_cfg.max_steps = steps.min(100_000_000);
            }
        }
    }

    let mut damped_cfg = cfg.clone();
    damped_cfg.t = Some(cfg.t.unwrap_or(b.floor().max(1.0) as u64));
    // Feasibility at B is the damped guarantee; the symmetric guard is
    // reported but not enforced here.
    damped_cfg.allow_guard_failure = true;
    let mut report = run_staged(
        instance,
        &point,
        &damped_cfg,
        walk_cfg,
        opt,
        Method::Damped,
        Some(1.0 / scale),
    )?;
    report.outcome.stats.insert("d_full".into(), d_full as u64);
    report.outcome.stats.insert("input_violation".into(), u64::from(input_violation));
    Ok(report)
}

/// Shared walk-then-round skeleton. `floor_factor` scales the objective
/// floor (the damped path aims for `(1-eps) opt / S`).
fn run_staged(
    instance: &PackingInstance,
    point: &FractionalPoint,
    cfg: &PipelineConfig,
    walk_cfg: WalkConfig,
    opt: f64,
    method: Method,
    floor_factor: Option<f64>,
) -> Result<RoundReport, PipelineError> {
    let (state, sparsified) = walk_round(instance, point, &walk_cfg)?;
    let mask = active_mask(&state);
    let d = build_dependency(instance, Some(&mask))?.max_degree();
    let mt_seed = derive_seed(cfg.seed, 2);

    let (mut outcome, resamples, converged, t_used) = match cfg.final_stage {
        FinalStage::IndependentOnly => {
            let solution = independent_round(sparsified.values(), mt_seed);
            (evaluate(instance, &solution)?, 0, true, 0)
        }
        FinalStage::MoserTardos => {
            let t = cfg.t.unwrap_or_else(|| lll_error_target(d));
            if !lll_guard(t, d) && !cfg.allow_guard_failure {
                let lhs = std::f64::consts::E * (d as f64 + 1.0) / (2.0_f64).powi(t.min(1023) as i32);
                return Err(PipelineError::GuardFailed { t, d, lhs });
            }
            let floor = if cfg.objective_event {
                (1.0 - cfg.epsilon) * opt * floor_factor.unwrap_or(1.0)
            } else {
                0.0
            };
            let frozen = snap_frozen(&state);
            let lll_cfg = LllConfig {
                error_target: t,
                alpha: cfg.alpha,
                epsilon: cfg.epsilon,
                objective_floor: floor,
                max_resamples: cfg.max_resamples,
                seed: mt_seed,
                selection: cfg.selection,
            };
            let out = moser_tardos_masked(instance, sparsified.values(), &frozen, &lll_cfg)?;
            let resamples = out.stats["resamples"];
            let converged = mt_converged(&out);
            (out, resamples, converged, t)
        }
    };

    record_walk(&mut outcome, &state);
    outcome.stats.insert(
        "gamma_within_log_margin".into(),
        u64::from(walk_cfg.gamma_within_log_margin(instance.n_vars())),
    );
    outcome.stats.insert("guard_holds".into(), u64::from(lll_guard(t_used.max(1), d)));
    let result = RoundResult {
        method: method.tag().into(),
        seed: cfg.seed,
        linf_load: outcome.linf_load,
        objective: outcome.objective,
        opt_fractional: opt,
        resamples,
        walk_steps: state.step_count(),
        d_measured: d as u64,
        t_used,
        s_used: walk_cfg.scale,
        converged,
    };
    Ok(RoundReport { result, outcome, walk: Some(state), walk_config: Some(walk_cfg) })
}
