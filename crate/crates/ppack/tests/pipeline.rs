//! Cross-module integration tests: joint output distributions, file-format
//! round trips, phase-budget diagnostics, and parallel/sequential parity.

use proptest::prelude::*;

use ppack::analysis;
use ppack::fileio;
use ppack::gen::{butterfly_instance, random_k_sparse};
use ppack::instance::{evaluate, validate, FractionalPoint, PackingInstance};
use ppack::par::{map_seeds, ExecMode};
use ppack::pipeline::{round_walk_lll, FinalStage, PipelineConfig};
use ppack::rng::derive_seed;
use ppack::walk::{error_budget, walk_round, WalkConfig};

/// With no damping and a single final independent rounding, the joint
/// output distribution on a tiny instance is exactly the product of
/// Bernoulli marginals at the starting values.
#[test]
fn three_var_joint_distribution_matches_product() {
    let instance = PackingInstance::new(
        vec![vec![0, 1], vec![1, 2]],
        3,
        vec![1.0, 1.0],
        vec![1.0; 3],
    )
    .unwrap();
    let x = [0.3, 0.45, 0.2];
    let point = FractionalPoint::new(x.to_vec()).unwrap();
    let runs = 40_000usize;
    let outcomes = map_seeds(ExecMode::default(), 0x3D1, runs, |seed| {
        let mut cfg = PipelineConfig::new(seed);
        cfg.final_stage = FinalStage::IndependentOnly;
        cfg.objective_event = false;
        cfg.walk = Some(WalkConfig {
            gamma: 0.005,
            delta: 0.05,
            scale: 1.0,
            stop_unfixed: 1,
            max_steps: 1_000_000,
            seed: 0, // overridden by the pipeline
        });
        let rep = round_walk_lll(&instance, &point, &cfg).unwrap();
        rep.outcome
            .solution
            .iter()
            .fold(0usize, |acc, &b| (acc << 1) | b as usize)
    });
    let mut counts = [0usize; 8];
    for o in outcomes {
        counts[o] += 1;
    }
    for pattern in 0..8usize {
        let mut exact = 1.0;
        for (i, &xi) in x.iter().enumerate() {
            let bit = (pattern >> (2 - i)) & 1;
            exact *= if bit == 1 { xi } else { 1.0 - xi };
        }
        let emp = counts[pattern] as f64 / runs as f64;
        assert!(
            (emp - exact).abs() <= 0.012,
            "pattern {pattern:03b}: empirical {emp:.4} vs exact {exact:.4}"
        );
    }
}

/// Per-phase error increments stay within a small constant multiple of the
/// per-phase budget for every phase up to `p* = log2(nB / (S ln m))`, in
/// at least 9 of 10 seeded runs at n = m = 4096, k = 64.
#[test]
fn phase_increments_within_budget() {
    let n = 4096usize;
    let k = 64usize;
    let m = n as f64;
    let p_star = (n as f64 / m.ln()).log2().floor() as usize;
    let results = map_seeds(ExecMode::default(), 0xBAD6E7, 10, |seed| {
        let instance = random_k_sparse(n, n, k, derive_seed(seed, 0)).unwrap();
        let point = FractionalPoint::uniform(n, 1.0 / k as f64).unwrap();
        let cfg = WalkConfig { seed: derive_seed(seed, 1), ..WalkConfig::defaults(&instance, 0) };
        let (state, _) = walk_round(&instance, &point, &cfg).unwrap();
        let increments = state.phase_error_increments();
        let mut ok = true;
        for (p, inc) in increments.iter().enumerate().take(p_star + 1) {
            let budget = error_budget(p as u32, 1.0, 1.0, n, m).unwrap();
            let worst = inc.iter().fold(0.0_f64, |a, &e| a.max(e.abs()));
            ok &= worst <= 3.0 * budget;
        }
        ok
    });
    let good = results.iter().filter(|&&ok| ok).count();
    assert!(good >= 9, "only {good}/10 runs within 3x phase budgets");
}

/// The staged pipeline gives identical results under parallel and
/// sequential trial execution.
#[test]
fn parallel_and_sequential_runs_agree() {
    let instance = random_k_sparse(64, 64, 8, 5).unwrap();
    let point = FractionalPoint::uniform(64, 0.125).unwrap();
    let run = |mode| {
        map_seeds(mode, 0xFA11, 16, |seed| {
            let cfg = PipelineConfig::new(seed);
            let rep = round_walk_lll(&instance, &point, &cfg).unwrap();
            (rep.result.linf_load, rep.result.objective.to_bits(), rep.result.walk_steps)
        })
    };
    assert_eq!(run(ExecMode::Sequential), run(ExecMode::Parallel));
}

/// Generated instances and their fractional sidecars survive the text
/// formats and still drive the pipeline.
#[test]
fn files_round_trip_into_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let (instance, point) = butterfly_instance(8, 3).unwrap();
    let inst_path = dir.path().join("bfly.ppack");
    let frac_path = dir.path().join("bfly.frac");
    fileio::write_instance(&inst_path, &instance).unwrap();
    fileio::write_frac(&frac_path, &point).unwrap();

    let inst2 = fileio::read_instance(&inst_path).unwrap();
    let point2 = fileio::read_frac(&frac_path).unwrap();
    assert_eq!(inst2, instance);
    let point2 = validate(&inst2, point2).unwrap();

    let cfg = PipelineConfig::new(99);
    let rep = round_walk_lll(&inst2, &point2, &cfg).unwrap();
    assert!(rep.result.converged);

    let sol_path = dir.path().join("bfly.sol");
    fileio::write_solution(&sol_path, &rep.outcome.solution).unwrap();
    let sol = fileio::read_solution(&sol_path).unwrap();
    let again = evaluate(&inst2, &sol).unwrap();
    assert_eq!(again.linf_load, rep.outcome.linf_load);
    assert_eq!(again.objective, rep.outcome.objective);
}

fn dyadic_weight() -> impl Strategy<Value = f64> {
    (1u32..=16).prop_map(|j| f64::from(j) / 16.0)
}

fn small_instance() -> impl Strategy<Value = PackingInstance> {
    (1usize..10).prop_flat_map(|n| {
        let row = proptest::collection::btree_set(0..n, 0..=n.min(4));
        let rows = proptest::collection::vec(row, 0..6);
        let weights = proptest::collection::vec(dyadic_weight(), n);
        (rows, weights, 1u32..=8).prop_map(move |(rows, mut weights, b8)| {
            weights[0] = 1.0;
            let rows: Vec<Vec<usize>> =
                rows.into_iter().map(|r| r.into_iter().collect()).collect();
            let m = rows.len();
            let rhs = vec![f64::from(b8) / 4.0; m];
            PackingInstance::new_lenient(rows, n, rhs, weights).unwrap()
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Dyadic instances survive the text format bit-exactly; a second
    /// write/parse cycle is a fixed point.
    #[test]
    fn instance_file_round_trip(inst in small_instance()) {
        let text = fileio::write_instance_string(&inst);
        let back = fileio::parse_instance_string(&text).unwrap();
        prop_assert_eq!(&back, &inst);
        let text2 = fileio::write_instance_string(&back);
        prop_assert_eq!(text, text2);
    }

    /// Evaluation is bounded by the trivial caps and is pure.
    #[test]
    fn evaluate_bounds(inst in small_instance(), bits in proptest::collection::vec(0u8..=1, 10)) {
        let sol: Vec<u8> = (0..inst.n_vars()).map(|i| bits[i % bits.len()]).collect();
        let out = evaluate(&inst, &sol).unwrap();
        let weight_sum: f64 = inst.weights().iter().sum();
        prop_assert!(out.objective <= weight_sum + 1e-12);
        prop_assert!(out.linf_load as usize <= inst.max_row_size());
        let again = evaluate(&inst, &sol).unwrap();
        prop_assert_eq!(out, again);
    }

    /// The exact hypergeometric tail is monotone in t and normalized.
    #[test]
    fn hypergeometric_tail_monotone(n in 4u64..40, kk in 2u64..8, t in 0u64..6) {
        let k = kk.min(n - 1);
        let target = (n / k).max(1);
        let a = analysis::hypergeometric_ge(n, k, target, t).unwrap();
        let b = analysis::hypergeometric_ge(n, k, target, t + 1).unwrap();
        prop_assert!(b <= a + 1e-12);
        prop_assert!((0.0..=1.0).contains(&a));
    }

    /// Absorption probability is a proper probability, monotone in start.
    #[test]
    fn absorption_probability_properties(lo in 0.0..0.3, hi in 0.7..1.0f64, s in 0.31..0.69f64) {
        let p = ppack::walk::absorption_probability(s, lo, hi).unwrap();
        prop_assert!((0.0..=1.0).contains(&p));
        let p2 = ppack::walk::absorption_probability(s + 0.005, lo, hi).unwrap();
        prop_assert!(p2 >= p);
    }
}
