//! `ppack`: generate packing instances, round them, sweep experiments, and
//! run the acceptance suite. See the repository README for file formats.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use ppack::accept;
use ppack::analysis::{
    brute_force_min_load_with, lower_bound_sides, pipeline_report, ENUMERATION_CAP,
};
use ppack::fileio::{self, fmt_f64};
use ppack::gen::{Family, GeneratorSpec};
use ppack::instance::{evaluate, validate, FractionalPoint};
use ppack::par::ExecMode;
use ppack::pipeline::Method;
use ppack::plan::{parse_plan, run_method, run_plan, MethodSpec};
use ppack::walk::{walk_round_observed, WalkConfig, WalkState};

#[derive(Parser)]
#[command(name = "ppack", version, about = "Two-stage randomized rounding for 0-1 packing programs")]
struct Cli {
    /// Worker threads for trial-level parallelism (also PPACK_WORKERS).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an instance family to a text file (plus a .frac sidecar
    /// when the family carries a fractional point).
    Gen(GenArgs),
    /// Run the sparsification walk and report (optionally trace) it.
    Walk(WalkArgs),
    /// Round a fractional point with one of the methods.
    Round(RoundArgs),
    /// Bound calculators and oracles, emitting CSV.
    Analyze(AnalyzeArgs),
    /// Execute an experiment plan file.
    Sweep(SweepArgs),
    /// Run named acceptance criteria.
    Accept(AcceptArgs),
}

#[derive(Args)]
struct GenArgs {
    /// k-sparse-exact | k-sparse-bernoulli | hypergraph-bmatch | butterfly
    #[arg(long)]
    family: String,
    /// Rows (constraints) or hyperedges, family dependent.
    #[arg(long)]
    m: Option<usize>,
    /// Variables or vertices, family dependent.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    /// Per-vertex capacity of hypergraph-bmatch.
    #[arg(long)]
    b: Option<f64>,
    /// Butterfly input count (power of 2).
    #[arg(long)]
    inputs: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct WalkArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    frac: PathBuf,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
    #[arg(long)]
    stop_unfixed: Option<usize>,
    #[arg(long)]
    max_steps: Option<u64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Per-step trace CSV: step,phase,max_unfixed,max_abs_error,num_fixed_low,num_fixed_high
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Write the sparsified point to this .frac file.
    #[arg(long)]
    out_frac: Option<PathBuf>,
}

#[derive(Args)]
struct RoundArgs {
    /// rt | greedy | walk-lll | damped
    #[arg(long)]
    method: String,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    frac: Option<PathBuf>,
    /// Error target: an integer or "auto".
    #[arg(long, default_value = "auto")]
    t: String,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, default_value_t = 0.5)]
    epsilon: f64,
    /// Expected uniform rhs of the damped path (checked against the file).
    #[arg(long = "B")]
    rhs_b: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Nominal row cardinality for greedy (default: max row size).
    #[arg(long)]
    k: Option<usize>,
    /// Run the resampler even when the local-lemma guard fails.
    #[arg(long)]
    force: bool,
    /// Damped: substitute B+1 in the scale/damping exponents.
    #[arg(long)]
    bplus1: bool,
    /// Write the result JSON here (default: stdout).
    #[arg(long)]
    json: Option<PathBuf>,
    /// Also write the rounded 0-1 solution to this file.
    #[arg(long)]
    sol: Option<PathBuf>,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// lowerbound | oracle | report
    #[arg(long)]
    mode: String,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    t: Option<usize>,
    #[arg(long = "in")]
    input: Option<PathBuf>,
    #[arg(long)]
    support_size: Option<usize>,
    /// Enumeration cap override for the oracle.
    #[arg(long, default_value_t = ENUMERATION_CAP)]
    cap: u64,
    /// Solution files to tabulate in report mode.
    #[arg(long = "sol")]
    solutions: Vec<PathBuf>,
    /// Fractional point used for the report's objective reference.
    #[arg(long)]
    frac: Option<PathBuf>,
    #[arg(long, default_value_t = 3.0)]
    slack: f64,
    /// Output CSV (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    plan: PathBuf,
    /// Override the plan's output directory.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct AcceptArgs {
    /// Criterion name or "all".
    #[arg(long, default_value = "all")]
    suite: String,
}

fn main() -> Result<()> {
    // Die quietly when a downstream pipe closes (e.g. `ppack round | head`).
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = Cli::parse();
    let workers = cli
        .workers
        .or_else(|| std::env::var("PPACK_WORKERS").ok().and_then(|v| v.parse().ok()));
    if let Some(w) = workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build_global()
            .context("building worker pool")?;
    }
    match cli.command {
        Command::Gen(args) => cmd_gen(args),
        Command::Walk(args) => cmd_walk(args),
        Command::Round(args) => cmd_round(args),
        Command::Analyze(args) => cmd_analyze(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Accept(args) => cmd_accept(args),
    }
}

fn need<T>(v: Option<T>, flag: &str, family: &str) -> Result<T> {
    v.ok_or_else(|| anyhow!("--{flag} is required for family {family}"))
}

fn cmd_gen(args: GenArgs) -> Result<()> {
    let family = match args.family.as_str() {
        "k-sparse-exact" => Family::KSparseExact {
            m: need(args.m, "m", &args.family)?,
            n: need(args.n, "n", &args.family)?,
            k: need(args.k, "k", &args.family)?,
        },
        "k-sparse-bernoulli" => Family::KSparseBernoulli {
            m: need(args.m, "m", &args.family)?,
            n: need(args.n, "n", &args.family)?,
            k: need(args.k, "k", &args.family)?,
        },
        "hypergraph-bmatch" => Family::HypergraphBMatch {
            n_vertices: need(args.n, "n", &args.family)?,
            m_edges: need(args.m, "m", &args.family)?,
            k: need(args.k, "k", &args.family)?,
            b: args.b.unwrap_or(1.0),
        },
        "butterfly" => Family::Butterfly { inputs: need(args.inputs, "inputs", &args.family)? },
        other => bail!("unknown family {other:?}"),
    };
    let spec = GeneratorSpec { family, seed: args.seed };
    let generated = spec.generate()?;
    fileio::write_instance(&args.out, &generated.instance)?;
    println!(
        "wrote {} ({} rows, {} vars)",
        args.out.display(),
        generated.instance.n_rows(),
        generated.instance.n_vars()
    );
    if generated.dropped_rows > 0 {
        eprintln!("note: dropped {} empty rows", generated.dropped_rows);
    }
    if let Some(point) = generated.point {
        let frac_path = sidecar(&args.out, "frac");
        fileio::write_frac(&frac_path, &point)?;
        println!("wrote {}", frac_path.display());
    }
    Ok(())
}

fn sidecar(path: &Path, ext: &str) -> PathBuf {
    let mut os = path.as_os_str().to_owned();
    os.push(".");
    os.push(ext);
    PathBuf::from(os)
}

fn cmd_walk(args: WalkArgs) -> Result<()> {
    let instance = fileio::read_instance(&args.input)?;
    let point = fileio::read_frac(&args.frac)?;
    let point = validate(&instance, point)?;
    let mut cfg = WalkConfig::defaults(&instance, args.seed);
    if let Some(g) = args.gamma {
        cfg.gamma = g;
    }
    if let Some(d) = args.delta {
        cfg.delta = d;
        if args.gamma.is_none() {
            cfg.gamma = d / (instance.n_vars().max(2) as f64).ln().max(1.0);
        }
    }
    cfg.scale = args.scale;
    if let Some(u) = args.stop_unfixed {
        cfg.stop_unfixed = u;
    }
    if let Some(s) = args.max_steps {
        cfg.max_steps = s;
    }
    cfg.seed = args.seed;

    let mut trace_file = match &args.trace {
        Some(path) => {
            let mut f = fs::File::create(path)?;
            writeln!(f, "step,phase,max_unfixed,max_abs_error,num_fixed_low,num_fixed_high")?;
            Some(f)
        }
        None => None,
    };
    let mut observer = |s: &WalkState| {
        if let Some(f) = trace_file.as_mut() {
            writeln!(
                f,
                "{},{},{},{},{},{}",
                s.step_count(),
                s.phase(),
                s.max_unfixed_per_row(),
                fmt_f64(s.max_abs_error()),
                s.num_fixed_low(),
                s.num_fixed_high()
            )
            .expect("trace write failed");
        }
    };
    let (state, sparsified) = walk_round_observed(&instance, &point, &cfg, &mut observer)?;
    println!(
        "steps {} phases {} unfixed {} (max/row {}) fixed-low {} fixed-high {} max|err| {}{}",
        state.step_count(),
        state.phase(),
        state.num_unfixed(),
        state.max_unfixed_per_row(),
        state.num_fixed_low(),
        state.num_fixed_high(),
        fmt_f64(state.max_abs_error()),
        if state.incomplete() { " INCOMPLETE" } else { "" }
    );
    if let Some(out) = &args.out_frac {
        fileio::write_frac(out, &sparsified)?;
        println!("wrote {}", out.display());
    }
    Ok(())
}

fn cmd_round(args: RoundArgs) -> Result<()> {
    let instance = fileio::read_instance(&args.input)?;
    let method = Method::parse(&args.method)
        .ok_or_else(|| anyhow!("unknown method {:?} (rt|greedy|walk-lll|damped)", args.method))?;
    let point = match &args.frac {
        Some(path) => fileio::read_frac(path)?,
        None => {
            if method == Method::Greedy {
                FractionalPoint::uniform(instance.n_vars(), 0.0)?
            } else {
                bail!("--frac is required for method {}", method.tag());
            }
        }
    };
    if let Some(b) = args.rhs_b {
        match instance.uniform_rhs() {
            Some(file_b) if file_b == b => {}
            Some(file_b) => bail!("--B {b} does not match the instance rhs {file_b}"),
            None => bail!("--B given but the instance rhs is not uniform"),
        }
    }
    let mut spec = MethodSpec::new(method);
    spec.alpha = args.alpha;
    spec.epsilon = args.epsilon;
    spec.use_b_plus_one = args.bplus1;
    spec.allow_guard_failure = args.force;
    if args.t != "auto" {
        spec.t = Some(args.t.parse().context("--t must be an integer or \"auto\"")?);
    }
    let k = args.k.unwrap_or_else(|| instance.max_row_size().max(1));
    let report = run_method(&instance, &point, &spec, k, args.seed)?;
    let json = serde_json::to_string_pretty(&report.result)?;
    match &args.json {
        Some(path) => {
            fs::write(path, &json)?;
            println!("wrote {}", path.display());
        }
        None => println!("{json}"),
    }
    if let Some(path) = &args.sol {
        fileio::write_solution(path, &report.outcome.solution)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn write_csv(out: Option<&PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(path) => {
            fs::write(path, text)?;
            println!("wrote {}", path.display());
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn cmd_analyze(args: AnalyzeArgs) -> Result<()> {
    match args.mode.as_str() {
        "lowerbound" => {
            let (m, n, k, t) = (
                args.m.context("--m required")?,
                args.n.context("--n required")?,
                args.k.context("--k required")?,
                args.t.context("--t required")?,
            );
            let (lhs, rhs) = lower_bound_sides(m, n, k, t);
            let holds = lhs > rhs;
            let (exact, lower) = if t <= k && k <= n && n / k >= 1 {
                let hp = ppack::analysis::row_hit_probability(n as u64, k as u64, t as u64)?;
                (fmt_f64(hp.exact), fmt_f64(hp.lower_bound))
            } else {
                (String::new(), String::new())
            };
            let mut csv = String::from("m,n,k,t,log_ratio,threshold,holds,hyper_exact,hyper_lower\n");
            csv.push_str(&format!(
                "{m},{n},{k},{t},{},{},{},{exact},{lower}\n",
                fmt_f64(lhs),
                fmt_f64(rhs),
                u8::from(holds)
            ));
            write_csv(args.out.as_ref(), &csv)
        }
        "oracle" => {
            let input = args.input.context("--in required")?;
            let support = args.support_size.context("--support-size required")?;
            let instance = fileio::read_instance(&input)?;
            let (best, load) =
                brute_force_min_load_with(&instance, support, args.cap, ExecMode::default())?;
            let mut csv = String::from("m,n,support_size,min_max_load,best_support\n");
            let support_str =
                best.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(" ");
            csv.push_str(&format!(
                "{},{},{support},{load},\"{support_str}\"\n",
                instance.n_rows(),
                instance.n_vars()
            ));
            write_csv(args.out.as_ref(), &csv)
        }
        "report" => {
            let input = args.input.context("--in required")?;
            let instance = fileio::read_instance(&input)?;
            if args.solutions.is_empty() {
                bail!("report mode needs at least one --sol file");
            }
            let opt = match &args.frac {
                Some(path) => {
                    let p = fileio::read_frac(path)?;
                    p.objective(&instance)
                }
                None => 0.0,
            };
            let mut entries = Vec::new();
            for path in &args.solutions {
                let sol = fileio::read_solution(path)?;
                let outcome = evaluate(&instance, &sol)?;
                let label = path
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| path.display().to_string());
                entries.push((label, outcome));
            }
            let report = pipeline_report(&instance, &entries, opt, args.slack)?;
            let mut csv = String::from(
                "label,linf_load,objective,lll_error_target,rt_reference,branch_log_d,branch_log_m_over_opt,ratio,pass\n",
            );
            let th = &report.theoretical;
            for row in &report.rows {
                csv.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{}\n",
                    row.label,
                    row.linf_load,
                    fmt_f64(row.objective),
                    fmt_f64(row.theoretical),
                    fmt_f64(th["rt_reference"]),
                    fmt_f64(th["branch_log_d"]),
                    fmt_f64(th["branch_log_m_over_opt"]),
                    fmt_f64(row.ratio),
                    u8::from(row.pass)
                ));
            }
            write_csv(args.out.as_ref(), &csv)
        }
        other => bail!("unknown analyze mode {other:?} (lowerbound|oracle|report)"),
    }
}

fn cmd_sweep(args: SweepArgs) -> Result<()> {
    let text = fs::read_to_string(&args.plan)
        .with_context(|| format!("reading plan {}", args.plan.display()))?;
    let default_dir = PathBuf::from("ppack-results");
    let mut plan = parse_plan(&text, &default_dir)?;
    if let Some(dir) = args.out_dir {
        plan.out_dir = dir;
    }
    let summary = run_plan(&plan, ExecMode::default())?;
    println!(
        "{} cells ({} ok, {} failed) -> {}",
        summary.records.len(),
        summary.ok,
        summary.failed,
        summary.csv_path.display()
    );
    Ok(())
}

fn cmd_accept(args: AcceptArgs) -> Result<()> {
    let reports = accept::run_suite(&args.suite, ExecMode::default())?;
    let mut all_pass = true;
    for rep in &reports {
        println!("{}", rep.line());
        for d in &rep.details {
            println!("    {d}");
        }
        all_pass &= rep.pass;
    }
    if !all_pass {
        bail!("acceptance failures");
    }
    Ok(())
}
