//! Sweep orchestration: parse a line-oriented plan, execute every
//! (instance, method, trial) cell, and persist one JSON record per cell
//! plus one aggregate CSV. Reruns of an identical plan are byte-identical.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fileio::fmt_f64;
use crate::gen::{Family, GenError, GeneratorSpec};
use crate::instance::{FractionalPoint, PackingInstance};
use crate::par::{map_indices, ExecMode};
use crate::pipeline::{
    round_damped, round_greedy, round_rt, round_walk_lll, Method, PipelineConfig, PipelineError,
    RoundReport, RoundResult,
};
use crate::rng::RNG_ALGORITHM;
use crate::walk::WalkConfig;

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("plan line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("seed ranges of cells {a} and {b} overlap; trial seeds must be collision-free per plan")]
    SeedCollision { a: usize, b: usize },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Gen(#[from] GenError),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

fn perr(line: usize, msg: impl Into<String>) -> PlanError {
    PlanError::Parse { line, msg: msg.into() }
}

/// Method invocation parameters carried by a plan cell.
#[derive(Clone, Debug)]
pub struct MethodSpec {
    pub method: Method,
    pub t: Option<u64>,
    pub alpha: f64,
    pub epsilon: f64,
    pub use_b_plus_one: bool,
    pub allow_guard_failure: bool,
}

impl MethodSpec {
    pub fn new(method: Method) -> Self {
        Self {
            method,
            t: None,
            alpha: 1.0,
            epsilon: 0.5,
            use_b_plus_one: false,
            allow_guard_failure: false,
        }
    }
}

/// One sweep cell: a generator, a method, and a trial range.
#[derive(Clone, Debug)]
pub struct PlanCell {
    pub gen: GeneratorSpec,
    /// Uniform fractional value overriding the family default.
    pub x_value: Option<f64>,
    pub method: MethodSpec,
    pub trials: u32,
    pub seed_base: u64,
}

/// A parsed experiment plan.
#[derive(Clone, Debug)]
pub struct ExperimentPlan {
    pub cells: Vec<PlanCell>,
    pub out_dir: PathBuf,
}

/// Metadata written once per run directory.
#[derive(Serialize, Deserialize)]
pub struct PlanMeta {
    pub tool_version: String,
    pub log_base: String,
    pub rng_algorithm: String,
}

impl PlanMeta {
    pub fn current() -> Self {
        Self {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            log_base: "ln".to_string(),
            rng_algorithm: RNG_ALGORITHM.to_string(),
        }
    }
}

fn parse_kv(line_no: usize, tok: &str) -> Result<(String, String), PlanError> {
    tok.split_once('=')
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .ok_or_else(|| perr(line_no, format!("expected key=value token, got {tok:?}")))
}

fn take<T: std::str::FromStr>(
    line_no: usize,
    map: &mut BTreeMap<String, String>,
    key: &str,
) -> Result<T, PlanError> {
    let raw = map
        .remove(key)
        .ok_or_else(|| perr(line_no, format!("missing {key}=")))?;
    raw.parse::<T>()
        .map_err(|_| perr(line_no, format!("bad value for {key}: {raw:?}")))
}

fn take_opt<T: std::str::FromStr>(
    line_no: usize,
    map: &mut BTreeMap<String, String>,
    key: &str,
) -> Result<Option<T>, PlanError> {
    match map.remove(key) {
        None => Ok(None),
        Some(raw) => raw
            .parse::<T>()
            .map(Some)
            .map_err(|_| perr(line_no, format!("bad value for {key}: {raw:?}"))),
    }
}

/// Parse a plan file. Lines starting with `#` and blank lines are ignored;
/// `outdir <path>` sets the output directory; every other line is
/// `cell family=<tag> <family params> method=<tag> [method params]
/// trials=<n> seedbase=<seed>`.
pub fn parse_plan(text: &str, default_out: &Path) -> Result<ExperimentPlan, PlanError> {
    let mut cells = Vec::new();
    let mut out_dir = default_out.to_path_buf();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(rest) = line.strip_prefix("outdir ") {
            out_dir = PathBuf::from(rest.trim());
            continue;
        }
        let Some(rest) = line.strip_prefix("cell ") else {
            return Err(perr(line_no, format!("expected `cell ...` or `outdir ...`, got {line:?}")));
        };
        let mut kv = BTreeMap::new();
        for tok in rest.split_whitespace() {
            let (k, v) = parse_kv(line_no, tok)?;
            if kv.insert(k.clone(), v).is_some() {
                return Err(perr(line_no, format!("duplicate key {k}")));
            }
        }
        let family_tag: String = take(line_no, &mut kv, "family")?;
        let gseed: u64 = take_opt(line_no, &mut kv, "gseed")?.unwrap_or(0);
        let family = match family_tag.as_str() {
            "k-sparse-exact" => Family::KSparseExact {
                m: take(line_no, &mut kv, "m")?,
                n: take(line_no, &mut kv, "n")?,
                k: take(line_no, &mut kv, "k")?,
            },
            "k-sparse-bernoulli" => Family::KSparseBernoulli {
                m: take(line_no, &mut kv, "m")?,
                n: take(line_no, &mut kv, "n")?,
                k: take(line_no, &mut kv, "k")?,
            },
            "hypergraph-bmatch" => Family::HypergraphBMatch {
                n_vertices: take(line_no, &mut kv, "n")?,
                m_edges: take(line_no, &mut kv, "m")?,
                k: take(line_no, &mut kv, "k")?,
                b: take(line_no, &mut kv, "b")?,
            },
            "butterfly" => Family::Butterfly { inputs: take(line_no, &mut kv, "inputs")? },
            other => return Err(perr(line_no, format!("unknown family {other:?}"))),
        };
        let method_tag: String = take(line_no, &mut kv, "method")?;
        let method = Method::parse(&method_tag)
            .ok_or_else(|| perr(line_no, format!("unknown method {method_tag:?}")))?;
        let mut spec = MethodSpec::new(method);
        if let Some(t_raw) = kv.remove("t") {
            if t_raw != "auto" {
                spec.t = Some(
                    t_raw
                        .parse()
                        .map_err(|_| perr(line_no, format!("bad value for t: {t_raw:?}")))?,
                );
            }
        }
        if let Some(alpha) = take_opt(line_no, &mut kv, "alpha")? {
            spec.alpha = alpha;
        }
        if let Some(eps) = take_opt(line_no, &mut kv, "epsilon")? {
            spec.epsilon = eps;
        }
        if let Some(flag) = take_opt::<u8>(line_no, &mut kv, "bplus1")? {
            spec.use_b_plus_one = flag == 1;
        }
        if let Some(flag) = take_opt::<u8>(line_no, &mut kv, "force")? {
            spec.allow_guard_failure = flag == 1;
        }
        let x_value: Option<f64> = take_opt(line_no, &mut kv, "xval")?;
        let trials: u32 = take(line_no, &mut kv, "trials")?;
        let seed_base: u64 = take(line_no, &mut kv, "seedbase")?;
        if trials == 0 {
            return Err(perr(line_no, "trials must be >= 1".to_string()));
        }
        if let Some(k) = kv.keys().next() {
            return Err(perr(line_no, format!("unknown key {k:?}")));
        }
        cells.push(PlanCell {
            gen: GeneratorSpec { family, seed: gseed },
            x_value,
            method: spec,
            trials,
            seed_base,
        });
    }
    let plan = ExperimentPlan { cells, out_dir };
    plan.validate()?;
    Ok(plan)
}

impl ExperimentPlan {
    /// Trial seeds are `seed_base + trial index`; ranges must not collide
    /// across cells.
    pub fn validate(&self) -> Result<(), PlanError> {
        for (a, ca) in self.cells.iter().enumerate() {
            for (b, cb) in self.cells.iter().enumerate().skip(a + 1) {
                let (a0, a1) = (ca.seed_base, ca.seed_base + u64::from(ca.trials));
                let (b0, b1) = (cb.seed_base, cb.seed_base + u64::from(cb.trials));
                if a0 < b1 && b0 < a1 {
                    return Err(PlanError::SeedCollision { a, b });
                }
            }
        }
        Ok(())
    }
}

/// One executed (instance, method, trial) cell.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepRecord {
    pub cell: usize,
    pub family: String,
    pub gen_params: BTreeMap<String, String>,
    pub gen_seed: u64,
    pub method: String,
    pub trial: u32,
    pub seed: u64,
    /// `ok` or `error: <message>`; failed cells keep the run going.
    pub status: String,
    /// Full effective configuration after defaulting.
    pub config: BTreeMap<String, String>,
    pub result: Option<RoundResult>,
}

fn family_params(family: &Family) -> BTreeMap<String, String> {
    let mut p = BTreeMap::new();
    match family {
        Family::KSparseExact { m, n, k } | Family::KSparseBernoulli { m, n, k } => {
            p.insert("m".into(), m.to_string());
            p.insert("n".into(), n.to_string());
            p.insert("k".into(), k.to_string());
        }
        Family::HypergraphBMatch { n_vertices, m_edges, k, b } => {
            p.insert("n".into(), n_vertices.to_string());
            p.insert("m".into(), m_edges.to_string());
            p.insert("k".into(), k.to_string());
            p.insert("b".into(), fmt_f64(*b));
        }
        Family::Butterfly { inputs } => {
            p.insert("inputs".into(), inputs.to_string());
        }
    }
    p
}

/// The fractional point a cell rounds: the family's own point when it has
/// one, otherwise uniform `1/k` for exact rows (always feasible) and
/// `1/max_row_size` for Bernoulli rows.
pub fn default_point(
    family: &Family,
    instance: &PackingInstance,
    generated: Option<FractionalPoint>,
    x_value: Option<f64>,
) -> Result<FractionalPoint, crate::instance::ModelError> {
    if let Some(v) = x_value {
        return FractionalPoint::uniform(instance.n_vars(), v);
    }
    if let Some(p) = generated {
        return Ok(p);
    }
    let value = match family {
        Family::KSparseExact { k, .. } => 1.0 / *k as f64,
        _ => 1.0 / instance.max_row_size().max(1) as f64,
    };
    FractionalPoint::uniform(instance.n_vars(), value.min(1.0))
}

fn nominal_k(family: &Family, instance: &PackingInstance) -> usize {
    match family {
        Family::KSparseExact { k, .. } | Family::KSparseBernoulli { k, .. } => *k,
        _ => instance.max_row_size().max(1),
    }
}

/// Run one method invocation; shared by the sweep and the CLI.
pub fn run_method(
    instance: &PackingInstance,
    point: &FractionalPoint,
    spec: &MethodSpec,
    k: usize,
    seed: u64,
) -> Result<RoundReport, PipelineError> {
    match spec.method {
        Method::Rt => round_rt(instance, point, seed),
        Method::Greedy => round_greedy(instance, k, seed),
        Method::WalkLll | Method::Damped => {
            let mut cfg = PipelineConfig::new(seed);
            cfg.t = spec.t;
            cfg.alpha = spec.alpha;
            cfg.epsilon = spec.epsilon;
            cfg.use_b_plus_one = spec.use_b_plus_one;
            cfg.allow_guard_failure = spec.allow_guard_failure;
            if spec.method == Method::WalkLll {
                round_walk_lll(instance, point, &cfg)
            } else {
                round_damped(instance, point, &cfg)
            }
        }
    }
}

fn effective_config(
    spec: &MethodSpec,
    point: &FractionalPoint,
    report: Option<&RoundReport>,
    instance: &PackingInstance,
) -> BTreeMap<String, String> {
    let mut cfg = BTreeMap::new();
    cfg.insert("method".into(), spec.method.tag().to_string());
    cfg.insert("alpha".into(), fmt_f64(spec.alpha));
    cfg.insert("epsilon".into(), fmt_f64(spec.epsilon));
    cfg.insert(
        "t".into(),
        spec.t.map_or_else(|| "auto".to_string(), |t| t.to_string()),
    );
    cfg.insert("bplus1".into(), u8::from(spec.use_b_plus_one).to_string());
    cfg.insert("force".into(), u8::from(spec.allow_guard_failure).to_string());
    cfg.insert("rng".into(), RNG_ALGORITHM.to_string());
    cfg.insert("log_base".into(), "ln".to_string());
    let first = point.values().first().copied().unwrap_or(0.0);
    if point.values().iter().all(|&v| v == first) {
        cfg.insert("x_uniform".into(), fmt_f64(first));
    }
    if matches!(spec.method, Method::WalkLll | Method::Damped) {
        let walk = report
            .and_then(|r| r.walk_config.clone())
            .unwrap_or_else(|| WalkConfig::defaults(instance, 0));
        cfg.insert("walk_gamma".into(), fmt_f64(walk.gamma));
        cfg.insert("walk_delta".into(), fmt_f64(walk.delta));
        cfg.insert("walk_scale".into(), fmt_f64(walk.scale));
        cfg.insert("walk_stop_unfixed".into(), walk.stop_unfixed.to_string());
        cfg.insert("walk_max_steps".into(), walk.max_steps.to_string());
    }
    cfg
}

/// Fixed CSV column order of the aggregate results file.
pub const CSV_HEADER: &str = "cell,family,gen_params,gen_seed,method,trial,seed,status,linf_load,objective,opt_fractional,resamples,walk_steps,d_measured,t_used,S_used,converged";

fn csv_line(rec: &SweepRecord) -> String {
    let params = rec
        .gen_params
        .iter()
        .map(|(k, v)| format!("{k}={v}"))
        .collect::<Vec<_>>()
        .join(";");
    let mut line = format!(
        "{},{},{},{},{},{},{},{}",
        rec.cell, rec.family, params, rec.gen_seed, rec.method, rec.trial, rec.seed, rec.status
    );
    // Shortest round-trip float formatting: statistics recomputed from the
    // CSV must match the JSON records bit for bit.
    match &rec.result {
        Some(r) => {
            write!(
                line,
                ",{},{},{},{},{},{},{},{},{}",
                r.linf_load,
                r.objective,
                r.opt_fractional,
                r.resamples,
                r.walk_steps,
                r.d_measured,
                r.t_used,
                r.s_used,
                u8::from(r.converged)
            )
            .unwrap();
        }
        None => line.push_str(",,,,,,,,,"),
    }
    line
}

/// Summary of one plan execution.
#[derive(Debug)]
pub struct RunSummary {
    pub records: Vec<SweepRecord>,
    pub csv_path: PathBuf,
    pub ok: usize,
    pub failed: usize,
}

/// Execute a plan: one JSON per cell, one aggregate CSV, a metadata file.
/// Cell failures are recorded in the CSV status column and do not stop the
/// run. Output is deterministic: rerunning an identical plan reproduces
/// identical bytes.
pub fn run_plan(plan: &ExperimentPlan, mode: ExecMode) -> Result<RunSummary, PlanError> {
    plan.validate()?;
    fs::create_dir_all(&plan.out_dir)?;

    // Instances are generated once per cell, sequentially, so the trial
    // fan-out shares them read-only.
    let mut prepared = Vec::with_capacity(plan.cells.len());
    for cell in &plan.cells {
        let generated = cell.gen.generate()?;
        let point = default_point(
            &cell.gen.family,
            &generated.instance,
            generated.point,
            cell.x_value,
        )
        .map_err(GenError::from)?;
        prepared.push((generated.instance, point));
    }

    let units: Vec<(usize, u32)> = plan
        .cells
        .iter()
        .enumerate()
        .flat_map(|(ci, cell)| (0..cell.trials).map(move |t| (ci, t)))
        .collect();

    let records: Vec<SweepRecord> = map_indices(mode, units.len(), |u| {
        let (ci, trial) = units[u];
        let cell = &plan.cells[ci];
        let (instance, point) = &prepared[ci];
        let seed = cell.seed_base + u64::from(trial);
        let k = nominal_k(&cell.gen.family, instance);
        let run = run_method(instance, point, &cell.method, k, seed);
        let (status, result, config) = match run {
            Ok(report) => {
                let cfg = effective_config(&cell.method, point, Some(&report), instance);
                ("ok".to_string(), Some(report.result), cfg)
            }
            Err(e) => {
                let cfg = effective_config(&cell.method, point, None, instance);
                (format!("error: {e}").replace(',', ";"), None, cfg)
            }
        };
        SweepRecord {
            cell: ci,
            family: cell.gen.family.tag().to_string(),
            gen_params: family_params(&cell.gen.family),
            gen_seed: cell.gen.seed,
            method: cell.method.method.tag().to_string(),
            trial,
            seed,
            status,
            config,
            result,
        }
    });

    let meta = PlanMeta::current();
    fs::write(
        plan.out_dir.join("plan_meta.json"),
        serde_json::to_string_pretty(&meta)?,
    )?;
    for rec in &records {
        let name = format!("cell{:03}_trial{:03}.json", rec.cell, rec.trial);
        fs::write(plan.out_dir.join(name), serde_json::to_string_pretty(rec)?)?;
    }
    let mut csv = String::from(CSV_HEADER);
    csv.push('\n');
    for rec in &records {
        csv.push_str(&csv_line(rec));
        csv.push('\n');
    }
    let csv_path = plan.out_dir.join("results.csv");
    fs::write(&csv_path, csv)?;

    let ok = records.iter().filter(|r| r.status == "ok").count();
    let failed = records.len() - ok;
    Ok(RunSummary { records, csv_path, ok, failed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    const SMALL_PLAN: &str = "\
# instance x methods x trials
cell family=k-sparse-exact m=16 n=32 k=4 gseed=7 method=rt trials=3 seedbase=100
cell family=k-sparse-exact m=16 n=32 k=4 gseed=7 method=greedy trials=3 seedbase=200
";

    #[test]
    fn empty_plan_writes_header_only() {
        let dir = tempdir().unwrap();
        let plan = parse_plan("", dir.path()).unwrap();
        let summary = run_plan(&plan, ExecMode::Sequential).unwrap();
        assert_eq!(summary.records.len(), 0);
        let csv = fs::read_to_string(&summary.csv_path).unwrap();
        assert_eq!(csv, format!("{CSV_HEADER}\n"));
    }

    #[test]
    fn cell_cardinality() {
        let dir = tempdir().unwrap();
        let plan = parse_plan(SMALL_PLAN, dir.path()).unwrap();
        let summary = run_plan(&plan, ExecMode::Sequential).unwrap();
        assert_eq!(summary.records.len(), 6);
        assert_eq!(summary.ok, 6);
        let csv = fs::read_to_string(&summary.csv_path).unwrap();
        assert_eq!(csv.lines().count(), 7); // header + 6 rows
    }

    #[test]
    fn identical_plans_reproduce_identical_bytes() {
        let dir_a = tempdir().unwrap();
        let dir_b = tempdir().unwrap();
        let plan_a = parse_plan(SMALL_PLAN, dir_a.path()).unwrap();
        let plan_b = parse_plan(SMALL_PLAN, dir_b.path()).unwrap();
        run_plan(&plan_a, ExecMode::Parallel).unwrap();
        run_plan(&plan_b, ExecMode::Sequential).unwrap();
        let mut names: Vec<String> = fs::read_dir(dir_a.path())
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .collect();
        names.sort();
        assert!(names.len() >= 8); // meta + csv + 6 cell files
        for name in names {
            let a = fs::read(dir_a.path().join(&name)).unwrap();
            let b = fs::read(dir_b.path().join(&name)).unwrap();
            assert_eq!(a, b, "file {name} differs between identical runs");
        }
    }

    #[test]
    fn seed_collisions_rejected() {
        let text = "\
cell family=k-sparse-exact m=8 n=16 k=3 method=rt trials=10 seedbase=100
cell family=k-sparse-exact m=8 n=16 k=3 method=rt trials=10 seedbase=105
";
        let dir = tempdir().unwrap();
        match parse_plan(text, dir.path()) {
            Err(PlanError::SeedCollision { a: 0, b: 1 }) => {}
            other => panic!("expected seed collision, got {other:?}"),
        }
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let dir = tempdir().unwrap();
        match parse_plan("cell family=bogus trials=1 seedbase=0", dir.path()) {
            Err(PlanError::Parse { line: 1, .. }) => {}
            other => panic!("expected parse error, got {other:?}"),
        }
        match parse_plan("\nnot-a-cell", dir.path()) {
            Err(PlanError::Parse { line: 2, .. }) => {}
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn csv_stats_recompute_from_cell_jsons() {
        let dir = tempdir().unwrap();
        let plan = parse_plan(SMALL_PLAN, dir.path()).unwrap();
        let summary = run_plan(&plan, ExecMode::Sequential).unwrap();

        // Reload every per-cell JSON.
        let mut from_json: Vec<f64> = Vec::new();
        for rec in &summary.records {
            let name = format!("cell{:03}_trial{:03}.json", rec.cell, rec.trial);
            let text = fs::read_to_string(dir.path().join(name)).unwrap();
            let back: SweepRecord = serde_json::from_str(&text).unwrap();
            from_json.push(back.result.unwrap().linf_load as f64);
        }
        // Reparse the CSV column.
        let csv = fs::read_to_string(&summary.csv_path).unwrap();
        let mut from_csv: Vec<f64> = Vec::new();
        for line in csv.lines().skip(1) {
            let fields: Vec<&str> = line.split(',').collect();
            from_csv.push(fields[8].parse().unwrap());
        }
        from_json.sort_by(f64::total_cmp);
        from_csv.sort_by(f64::total_cmp);
        assert_eq!(from_json, from_csv);
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        assert_eq!(mean(&from_json), mean(&from_csv));
        assert_eq!(from_json[from_json.len() / 2], from_csv[from_csv.len() / 2]);
        assert_eq!(from_json.last(), from_csv.last());
    }

    #[test]
    fn failures_recorded_without_stopping() {
        // Damped at b = 1 without the shift errors per cell; rt succeeds.
        let text = "\
cell family=k-sparse-exact m=8 n=16 k=3 gseed=1 method=damped trials=2 seedbase=0
cell family=k-sparse-exact m=8 n=16 k=3 gseed=1 method=rt trials=2 seedbase=50
";
        let dir = tempdir().unwrap();
        let plan = parse_plan(text, dir.path()).unwrap();
        let summary = run_plan(&plan, ExecMode::Sequential).unwrap();
        assert_eq!(summary.failed, 2);
        assert_eq!(summary.ok, 2);
        let csv = fs::read_to_string(&summary.csv_path).unwrap();
        assert!(csv.contains("error:"));
    }
}
