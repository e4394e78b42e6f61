mod common;

use recsolve_core::checker::SolverConfig;
use recsolve_core::corpus;
use recsolve_core::pipeline::{run_bench, solve, SolveConfig, SolveReport, Verdict};

fn config() -> SolveConfig {
    SolveConfig { solver: SolverConfig { path: common::solver_path(), ..SolverConfig::default() }, ..SolveConfig::default() }
}

fn solve_named(name: &str) -> SolveReport {
    let def = corpus::get(name).unwrap().def().unwrap();
    solve(&def, &config(), &common::solver())
}

#[test]
fn running_example_is_verified() {
    let report = solve_named("nested");
    assert_eq!(report.verdict, Verdict::Verified);
    assert_eq!(report.closed_form.as_deref(), Some("x"));
    assert_eq!(report.score, Some(1.0));
    assert_eq!(report.attempts, 1);
}

#[test]
fn merge_keeps_its_base_case() {
    let report = solve_named("merge");
    assert_eq!(report.verdict, Verdict::Verified);
    let pieces = &report.candidate.unwrap().pieces;
    assert_eq!(pieces.len(), 2);
    assert_eq!(pieces[0].expr, "x + y - 1");
}

#[test]
fn nonterminating_recurrence_is_flagged() {
    let report = solve_named("nonterm");
    assert!(matches!(report.verdict, Verdict::LikelyNonterminating { .. }), "{:?}", report.verdict);
    assert_eq!(report.closed_form, None);
    assert_eq!(report.verdict.exit_code(), 3);
}

#[test]
fn inexact_fit_is_an_unchecked_approximation() {
    let report = solve_named("fib");
    assert!(matches!(report.verdict, Verdict::Skipped { .. }), "{:?}", report.verdict);
    assert!(report.closed_form.is_some());
    assert!(report.score.unwrap() < 1.0);
    assert_eq!(report.verdict.exit_code(), 2);
}

#[test]
fn reports_round_trip_and_account_for_time() {
    let report = solve_named("div");
    let json = serde_json::to_string(&report).unwrap();
    let back: SolveReport = serde_json::from_str(&json).unwrap();
    assert_eq!(back, report);
    let t = report.timings;
    assert!((t.total_ms - t.stage_sum()).abs() <= 0.05 * t.total_ms, "{t:?}");
}

#[test]
fn same_configuration_same_outcome() {
    let a = solve_named("open-zip");
    let b = solve_named("open-zip");
    assert_eq!(a.candidate, b.candidate);
    assert_eq!(a.verdict, b.verdict);
}

#[test]
fn bench_reports_in_corpus_order() {
    let benchmarks: Vec<_> = ["s-max", "nested", "nonterm"].iter().map(|n| corpus::get(n).unwrap()).collect();
    let reports = run_bench(&benchmarks, &config(), None, 3).unwrap();
    let names: Vec<_> = reports.iter().map(|r| r.name.as_str()).collect();
    assert_eq!(names, ["s-max", "nested", "nonterm"]);
    assert_eq!(reports[0].verdict, Verdict::Verified);
}
