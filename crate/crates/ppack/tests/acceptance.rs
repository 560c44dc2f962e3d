//! Acceptance suite: every named criterion at its stated tolerance, one
//! pass/fail line per criterion.
//!
//! Run with `cargo test --release --test acceptance -- --nocapture` to see
//! the lines; the same checks back the CLI's `accept` subcommand.

use ppack::accept::{run_criterion, CriterionReport};
use ppack::par::ExecMode;

fn check(name: &str) {
    let report: CriterionReport =
        run_criterion(name, ExecMode::default()).expect("criterion setup failed");
    println!("{}", report.line());
    for d in &report.details {
        println!("    {d}");
    }
    assert!(report.pass, "criterion {name} failed: {:?}", report.details);
}

#[test]
fn martingale_absorption() {
    check("martingale");
}

#[test]
fn objective_preservation() {
    check("objective");
}

#[test]
fn sparsification_budgets() {
    check("sparsify");
}

#[test]
fn error_improvement_trend() {
    check("trend");
}

#[test]
fn resampling_termination() {
    check("termination");
}

#[test]
fn dependency_degree_bound() {
    check("dependency");
}

#[test]
fn lower_bound_oracle() {
    check("lowerbound");
}

#[test]
fn damped_feasibility() {
    check("damped");
}

#[test]
fn tail_bound_calculators() {
    check("chernoff");
}

#[test]
fn greedy_repair_baseline() {
    check("greedy");
}
