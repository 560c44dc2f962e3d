//! Iterative randomized rounding for 0-1 packing integer programs.
//!
//! Two-stage rounding: a per-coordinate Gaussian random walk sparsifies a
//! fractional solution (few unfixed variables per constraint, expectations
//! preserved), then Moser-Tardos resampling rounds the survivors under a
//! Lovász-local-lemma error target. Alongside the pipeline live the instance
//! generators used to study it (random k-sparse matrices, hypergraph
//! b-matching, butterfly routing), independent-rounding and greedy-repair
//! baselines, tail-bound calculators, and brute-force oracles that certify
//! behavior on tiny instances.
//!
//! Everything is deterministic given a seed; Monte Carlo batches fan out
//! over rayon when the `parallel` feature (default) is enabled and run
//! sequentially otherwise.
//!
//! ```
//! use ppack::gen::random_k_sparse;
//! use ppack::instance::FractionalPoint;
//! use ppack::pipeline::{round_walk_lll, PipelineConfig};
//!
//! let instance = random_k_sparse(64, 64, 8, 1).unwrap();
//! let point = FractionalPoint::uniform(64, 1.0 / 8.0).unwrap();
//! let report = round_walk_lll(&instance, &point, &PipelineConfig::new(7)).unwrap();
//! assert!(report.result.converged);
//! assert!(report.result.linf_load <= report.result.t_used);
//! assert!(report.result.objective >= report.result.opt_fractional / 2.0);
//! ```

// Parameter validation uses `!(x > 0.0)` on purpose: unlike `x <= 0.0`, it
// also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod accept;
pub mod analysis;
pub mod fileio;
pub mod gen;
pub mod instance;
pub mod lll;
pub mod par;
pub mod pipeline;
pub mod plan;
pub mod rng;
pub mod walk;

pub use instance::{evaluate, validate, FractionalPoint, PackingInstance, RoundingOutcome};
pub use par::ExecMode;
