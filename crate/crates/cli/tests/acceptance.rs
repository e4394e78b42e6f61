//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each,
//! and exits non-zero if any failed.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use recsolve_core::checker::{check_solution, encode, CheckVerdict, Solver, SolverAnswer, SolverConfig, UnknownReason};
use recsolve_core::closed_form::ClosedForm;
use recsolve_core::corpus::{self, Benchmark};
use recsolve_core::expr::{rat, ratio, Env, Expr, ExprError, Rational};
use recsolve_core::pipeline::{solve, SolveConfig, SolveReport, Timings, Verdict};
use recsolve_core::recurrence::{eval_fun, EvalContext, EvalLimits, EvalOutcome, RecurrenceDef};
use recsolve_core::regression::lasso::{lasso_fit, LassoOptions, Standardized};
use recsolve_core::regression::ols;

type Outcome = Result<String, String>;

fn solver_path() -> PathBuf {
    std::env::var_os("RECSOLVE_SOLVER").map(PathBuf::from).unwrap_or_else(|| PathBuf::from("z3"))
}

fn solver() -> Solver {
    Solver::new(SolverConfig { path: solver_path(), ..SolverConfig::default() }).expect("solver backend")
}

fn solve_config() -> SolveConfig {
    SolveConfig { solver: SolverConfig { path: solver_path(), ..SolverConfig::default() }, ..SolveConfig::default() }
}

fn recsolve(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_recsolve"))
        .args(args)
        .env("RECSOLVE_SOLVER", solver_path())
        .output()
        .expect("recsolve runs")
}

fn bench_path(b: &Benchmark) -> String {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/bench");
    dir.join(format!("{}.rec", b.name)).display().to_string()
}

fn bench(name: &str) -> &'static Benchmark {
    corpus::get(name).unwrap_or_else(|| panic!("no benchmark {name}"))
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Integer points of `lo..=hi` per argument that satisfy the precondition.
fn domain_grid(def: &RecurrenceDef, lo: i64, hi: i64) -> Vec<Vec<Rational>> {
    let mut points = Vec::new();
    let mut p = vec![lo; def.arity()];
    loop {
        let input: Vec<Rational> = p.iter().map(|v| rat(*v)).collect();
        if def.input_in_domain(&input) == Ok(true) {
            points.push(input);
        }
        let Some(i) = p.iter().position(|v| *v < hi) else { break };
        p[i] += 1;
        p[..i].iter_mut().for_each(|v| *v = lo);
    }
    points
}

fn show(input: &[Rational]) -> String {
    let parts: Vec<String> = input.iter().map(|v| v.to_string()).collect();
    format!("({})", parts.join(", "))
}

// Criterion 1

fn table_reproduction() -> Outcome {
    let mut slowest = Duration::ZERO;
    for b in corpus::table() {
        let start = Instant::now();
        let out = recsolve(&["solve", "--seed", "0", "--format", "json-lines", &bench_path(b)]);
        let took = start.elapsed();
        slowest = slowest.max(took);
        ensure(took <= Duration::from_secs(60), || format!("{} took {took:?}", b.name))?;
        ensure(out.status.code() == Some(0), || format!("{}: exit status {:?}", b.name, out.status.code()))?;
        let report: SolveReport =
            serde_json::from_slice(&out.stdout).map_err(|e| format!("{}: unreadable report: {e}", b.name))?;
        ensure(report.score == Some(1.0), || format!("{}: score {:?}", b.name, report.score))?;
        ensure(report.verdict == Verdict::Verified, || format!("{}: {:?}", b.name, report.verdict))?;
        let def = b.def().map_err(|e| e.to_string())?;
        let text = report.closed_form.ok_or_else(|| format!("{}: no closed form", b.name))?;
        let candidate = ClosedForm::parse(&text, &def.args, &def.pre).map_err(|e| format!("{}: {e}", b.name))?;
        let reference = b.reference(&def).expect("table benchmarks have references").map_err(|e| e.to_string())?;
        for point in domain_grid(&def, 0, 12) {
            let (got, want) = (candidate.eval(&point), reference.eval(&point));
            ensure(got.is_ok() && got == want, || {
                format!("{}: candidate {text} gives {got:?} at {}, reference {want:?}", b.name, show(&point))
            })?;
        }
    }
    Ok(format!("9/9 verified with S = 1 and equal to the references on 0..12 (slowest {:.2} s)", slowest.as_secs_f64()))
}

// Criterion 2

fn running_example() -> Outcome {
    let def = bench("nested").def().map_err(|e| e.to_string())?;
    let solver = solver();
    let report = solve(&def, &solve_config(), &solver);
    ensure(report.closed_form.as_deref() == Some("x"), || format!("candidate {:?}", report.closed_form))?;
    let fit = &report.candidate.as_ref().ok_or("no candidate")?.fit;
    ensure(fit.raw_score == 1.0, || format!("R² = {}", fit.raw_score))?;
    ensure(report.verdict == Verdict::Verified, || format!("{:?}", report.verdict))?;

    // R² of x against direct evaluation: every residual is zero.
    for x in 0..=30 {
        let v = eval_fun(&def, &[rat(x)], EvalLimits::default()).map_err(|e| e.to_string())?;
        ensure(v.value() == Some(&rat(x)), || format!("f({x}) = {v}"))?;
    }

    let candidate = ClosedForm::parse("x", &def.args, &def.pre).map_err(|e| e.to_string())?;
    let formula = encode(&def, &candidate, &solver).map_err(|e| e.to_string())?;
    let answer = solver.run("negated-encoding", &formula.to_script("QF_NIA", false)).map_err(|e| e.to_string())?;
    ensure(answer == SolverAnswer::Unsat, || format!("negated encoding answered {answer:?}"))?;
    Ok("candidate x, R² = 1, negated encoding unsat, verdict verified".into())
}

// Criterion 3

fn nontermination() -> Outcome {
    let def = bench("nonterm").def().map_err(|e| e.to_string())?;
    let solver = solver();
    for seed in 0..4 {
        let mut cfg = solve_config();
        cfg.guess.sample.seed = seed;
        let report = solve(&def, &cfg, &solver);
        ensure(matches!(report.verdict, Verdict::LikelyNonterminating { .. }), || {
            format!("seed {seed}: {:?}", report.verdict)
        })?;
        ensure(report.closed_form.is_none(), || format!("seed {seed}: reported {:?}", report.closed_form))?;
    }
    let naive = ClosedForm::parse("1 - x", &def.args, &def.pre).map_err(|e| e.to_string())?;
    let verdict = check_solution(&def, &naive, &solver, EvalLimits::default()).map_err(|e| e.to_string())?;
    ensure(!verdict.is_verified(), || "1 - x was verified".into())?;
    let out = recsolve(&["check", &bench_path(bench("nonterm")), "--cf", "1 - x"]);
    ensure(out.status.code() == Some(3), || format!("check 1 - x exited {:?}", out.status.code()))?;
    Ok(format!("likely nonterminating for seeds 0..4; 1 - x not verified ({})", kebab(&verdict)))
}

fn kebab(v: &CheckVerdict) -> String {
    match v {
        CheckVerdict::Verified => "verified".into(),
        CheckVerdict::Refuted { .. } => "refuted".into(),
        CheckVerdict::Unknown { reason, .. } => serde_json::to_value(reason).unwrap().as_str().unwrap().to_string(),
    }
}

// Criterion 4

fn chaining() -> Outcome {
    let solver = solver();
    let size = bench("size").def().map_err(|e| e.to_string())?;
    let report = solve(&size, &solve_config(), &solver);
    ensure(report.verdict == Verdict::Verified, || format!("size: {:?}", report.verdict))?;
    ensure(report.closed_form.as_deref() == Some("x"), || format!("size: {:?}", report.closed_form))?;
    let s = ClosedForm::parse("x", &size.args, &size.pre).map_err(|e| e.to_string())?;
    let cost = bench("cost").def().map_err(|e| e.to_string())?.inline_function("s", &s).map_err(|e| e.to_string())?;
    let mut ctx = EvalContext::new(&cost, EvalLimits::default());
    for x in 0..=10u32 {
        let got = ctx.eval(&[rat(x.into())]).map_err(|e| e.to_string())?;
        let want = rat((1i64 << (x + 1)) - 1);
        ensure(got.value() == Some(&want), || format!("c({x}) = {got}, expected {want}"))?;
    }
    let closed = ClosedForm::parse("2^(x+1) - 1", &cost.args, &cost.pre).map_err(|e| e.to_string())?;
    let verdict = check_solution(&cost, &closed, &solver, EvalLimits::default()).map_err(|e| e.to_string())?;
    ensure(
        matches!(verdict, CheckVerdict::Unknown { reason: UnknownReason::UnsupportedOperator, .. }),
        || format!("2^(x+1) - 1 checked as {verdict:?}"),
    )?;
    Ok("size = x verified; inlined cost equals 2^(x+1) - 1 on 0..10; verdict unsupported-operator".into())
}

// Criterion 5

fn bump_constant(e: &Expr, target: usize, delta: &Rational) -> Option<Expr> {
    let mut seen = 0;
    let mut hit = false;
    let out = e.map_bottom_up(&mut |node| match node {
        Expr::Const(c) => {
            seen += 1;
            if seen == target + 1 {
                hit = true;
                Expr::Const(c + delta)
            } else {
                Expr::Const(c)
            }
        }
        other => other,
    });
    hit.then_some(out)
}

fn perturb(cf: &ClosedForm, rng: &mut ChaCha8Rng) -> (ClosedForm, &'static str) {
    let mut out = cf.clone();
    let i = rng.gen_range(0..out.pieces.len());
    let e = out.pieces[i].expr.clone();
    let pick = |rng: &mut ChaCha8Rng, options: &[(i64, i64)]| {
        let (p, q) = options[rng.gen_range(0..options.len())];
        Expr::Const(ratio(p, q))
    };
    let (expr, kind) = match rng.gen_range(0..5) {
        0 => return (out, "unchanged"),
        1 => (e + pick(rng, &[(-2, 1), (-1, 1), (1, 1), (2, 1)]), "shift"),
        2 => (e * pick(rng, &[(1, 2), (2, 1), (3, 2), (-1, 1)]), "scale"),
        3 => {
            let v = Expr::var(&cf.args[rng.gen_range(0..cf.args.len())]);
            (e + pick(rng, &[(-1, 1), (1, 1), (1, 2)]) * v, "add-variable")
        }
        _ => {
            let delta = if rng.gen_bool(0.5) { rat(1) } else { rat(-1) };
            let target = rng.gen_range(0..4);
            match bump_constant(&e, target, &delta) {
                Some(bumped) => (bumped, "bump-constant"),
                None => (e + Expr::Const(delta), "shift"),
            }
        }
    };
    out.pieces[i].expr = expr;
    (out, kind)
}

enum PairResult {
    Verified,
    Refuted,
    Unknown,
    Violation(String),
}

fn check_pair(i: u64, pool: &[(&'static str, RecurrenceDef, ClosedForm)], solver: &Solver) -> PairResult {
    let mut rng = ChaCha8Rng::seed_from_u64(i);
    let (name, def, reference) = &pool[rng.gen_range(0..pool.len())];
    let (candidate, kind) = perturb(reference, &mut rng);
    let label = format!("pair {i} ({name}, {kind}, {candidate})");
    let verdict = match check_solution(def, &candidate, solver, EvalLimits::default()) {
        Ok(v) => v,
        Err(e) => return PairResult::Violation(format!("{label}: checker error {e}")),
    };
    match verdict {
        CheckVerdict::Verified => {
            for point in domain_grid(def, 0, 12) {
                let truth = eval_fun(def, &point, EvalLimits::default());
                let claim = candidate.eval(&point);
                let agrees = matches!((&truth, &claim), (Ok(EvalOutcome::Value(a)), Ok(b)) if a == b);
                if !agrees {
                    return PairResult::Violation(format!(
                        "{label}: verified but differs at {}: {truth:?} vs {claim:?}",
                        show(&point)
                    ));
                }
            }
            PairResult::Verified
        }
        CheckVerdict::Refuted { counterexample: c } => {
            let input: Vec<Rational> = c.input.iter().map(|(_, v)| v.clone()).collect();
            let truth = eval_fun(def, &input, EvalLimits::default());
            let claim = candidate.eval(&input);
            let confirmed = matches!(&truth, Ok(EvalOutcome::Value(v)) if *v == c.expected)
                && claim.as_ref().ok() == Some(&c.actual)
                && c.expected != c.actual;
            if confirmed {
                PairResult::Refuted
            } else {
                PairResult::Violation(format!("{label}: counterexample {c:?} not confirmed ({truth:?}, {claim:?})"))
            }
        }
        CheckVerdict::Unknown { .. } => PairResult::Unknown,
    }
}

fn checker_soundness() -> Outcome {
    let mut pool = Vec::new();
    for b in corpus::all() {
        let expect = b.expectation();
        if expect.verdict != corpus::ExpectedVerdict::Verified {
            continue;
        }
        let def = b.def().map_err(|e| e.to_string())?;
        let Some(reference) = b.reference(&def) else { continue };
        pool.push((b.name, def, reference.map_err(|e| e.to_string())?));
    }
    let solver = solver();
    let results: Vec<PairResult> = (0..1000u64).into_par_iter().map(|i| check_pair(i, &pool, &solver)).collect();
    let (mut verified, mut refuted, mut unknown) = (0, 0, 0);
    let mut violations = Vec::new();
    for r in results {
        match r {
            PairResult::Verified => verified += 1,
            PairResult::Refuted => refuted += 1,
            PairResult::Unknown => unknown += 1,
            PairResult::Violation(v) => violations.push(v),
        }
    }
    ensure(violations.is_empty(), || format!("{} violations, first: {}", violations.len(), violations[0]))?;
    ensure(verified > 0 && refuted > 0, || format!("degenerate sample: {verified} verified, {refuted} refuted"))?;
    Ok(format!(
        "1000 pairs over {} recurrences: {verified} verified, {refuted} refuted, {unknown} unknown, 0 violations",
        pool.len()
    ))
}

// Criterion 6

fn random_design(rng: &mut ChaCha8Rng) -> (Vec<Vec<f64>>, Vec<f64>) {
    let n = rng.gen_range(30..90);
    let p = rng.gen_range(2..9);
    let truth: Vec<f64> = (0..p).map(|_| if rng.gen_bool(0.5) { rng.gen_range(-3.0..3.0) } else { 0.0 }).collect();
    let scales: Vec<f64> = (0..p).map(|_| 10f64.powf(rng.gen_range(-1.0..2.0))).collect();
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let row: Vec<f64> = scales.iter().map(|s| s * rng.gen_range(-1.0..1.0)).collect();
        let target = 0.7 + row.iter().zip(&truth).map(|(a, b)| a * b).sum::<f64>() + rng.gen_range(-0.5..0.5);
        x.push(row);
        y.push(target);
    }
    (x, y)
}

/// Columns centred and scaled to unit population variance, as the Lasso
/// objective is defined on them.
fn standardize(x: &[Vec<f64>], y: &[f64]) -> (Vec<Vec<f64>>, Vec<f64>) {
    let n = y.len() as f64;
    let p = x[0].len();
    let mut cols = Vec::with_capacity(p);
    for j in 0..p {
        let col: Vec<f64> = x.iter().map(|r| r[j]).collect();
        let mean = col.iter().sum::<f64>() / n;
        let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        cols.push(col.iter().map(|v| (v - mean) / sd).collect());
    }
    let ym = y.iter().sum::<f64>() / n;
    (cols, y.iter().map(|v| v - ym).collect())
}

fn regression_suite() -> Outcome {
    let opts = LassoOptions::default();
    let mut worst_kkt: f64 = 0.0;
    let mut worst_orth: f64 = 0.0;
    for seed in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let (x, y) = random_design(&mut rng);
        let (z, yc) = standardize(&x, &y);
        let n = y.len() as f64;
        let corr = |r: &[f64], j: usize| z[j].iter().zip(r).map(|(a, b)| a * b).sum::<f64>() / n;

        // Subgradient optimality of (1/2n)‖r‖² + λ‖β‖₁.
        let lambda_max = (0..z.len()).map(|j| corr(&yc, j).abs()).fold(0.0, f64::max);
        let lambda = lambda_max * rng.gen_range(0.001..0.9);
        let fit = lasso_fit(&x, &y, lambda, &opts).map_err(|e| e.to_string())?;
        let r: Vec<f64> = (0..y.len())
            .map(|i| yc[i] - (0..z.len()).map(|j| z[j][i] * fit.beta_std[j]).sum::<f64>())
            .collect();
        for j in 0..z.len() {
            let g = corr(&r, j);
            let b = fit.beta_std[j];
            let gap = if b != 0.0 { (g - lambda * b.signum()).abs() } else { (g.abs() - lambda).max(0.0) };
            worst_kkt = worst_kkt.max(gap);
            ensure(gap <= 1e-6, || format!("dataset {seed}: KKT gap {gap:e} on column {j}"))?;
        }

        // At and above λ_max every coefficient is exactly zero.
        let s = Standardized::new(&x, &y).map_err(|e| e.to_string())?;
        ensure((s.lambda_max() - lambda_max).abs() <= 1e-12 * lambda_max, || {
            format!("dataset {seed}: lambda_max {} vs {lambda_max}", s.lambda_max())
        })?;
        for factor in [1.0, 1.5, 10.0] {
            let fit = lasso_fit(&x, &y, lambda_max * factor, &opts).map_err(|e| e.to_string())?;
            ensure(fit.beta.iter().all(|b| *b == 0.0), || {
                format!("dataset {seed}: nonzero coefficients {:?} at {factor}·λ_max", fit.beta)
            })?;
        }

        // OLS residuals are orthogonal to every column and to the intercept.
        let o = ols(&x, &y).map_err(|e| e.to_string())?;
        let res: Vec<f64> = x
            .iter()
            .zip(&y)
            .map(|(row, t)| t - o.intercept - row.iter().zip(&o.beta).map(|(a, b)| a * b).sum::<f64>())
            .collect();
        let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
        let y_norm = norm(&y);
        let ones = vec![1.0; y.len()];
        let mut columns: Vec<Vec<f64>> = (0..x[0].len()).map(|j| x.iter().map(|r| r[j]).collect()).collect();
        columns.push(ones);
        for (j, col) in columns.iter().enumerate() {
            let dot = col.iter().zip(&res).map(|(a, b)| a * b).sum::<f64>();
            let rel = dot.abs() / (norm(col) * y_norm);
            worst_orth = worst_orth.max(rel);
            ensure(rel <= 1e-8, || format!("dataset {seed}: column {j} residual correlation {rel:e}"))?;
        }
    }
    Ok(format!("50 datasets: worst KKT gap {worst_kkt:.1e}, worst OLS orthogonality {worst_orth:.1e}, zeros at λ_max"))
}

// Criterion 7

fn without_timings(stdout: &[u8]) -> Result<String, String> {
    let text = String::from_utf8(stdout.to_vec()).map_err(|e| e.to_string())?;
    let mut out = String::new();
    for line in text.lines() {
        let mut report: SolveReport = serde_json::from_str(line).map_err(|e| e.to_string())?;
        report.timings = Timings::default();
        out.push_str(&serde_json::to_string(&report).map_err(|e| e.to_string())?);
        out.push('\n');
    }
    Ok(out)
}

fn determinism() -> Outcome {
    let a = recsolve(&["bench", "--all", "--seed", "0", "--format", "json-lines"]);
    let b = recsolve(&["bench", "--all", "--seed", "0", "--format", "json-lines", "--jobs", "1"]);
    ensure(a.status.code() == Some(0) && b.status.code() == Some(0), || {
        format!("bench exit status {:?} / {:?}", a.status.code(), b.status.code())
    })?;
    let (a, b) = (without_timings(&a.stdout)?, without_timings(&b.stdout)?);
    ensure(a == b, || "outputs differ".into())?;
    Ok(format!("two runs identical apart from timings ({} lines, {} bytes)", a.lines().count(), a.len()))
}

// Criterion 8

#[derive(Debug)]
#[allow(dead_code)]
enum Naive {
    Budget,
    Failed(String),
}

impl From<ExprError> for Naive {
    fn from(e: ExprError) -> Self {
        Naive::Failed(e.to_string())
    }
}

/// Plain recursive evaluation without any caching.
fn naive_eval(def: &RecurrenceDef, input: &[Rational], depth: usize, calls: &mut u64) -> Result<Rational, Naive> {
    *calls += 1;
    if depth > 10_000 || *calls > 5_000_000 {
        return Err(Naive::Budget);
    }
    let env = Env::bind(&def.args, input);
    for case in &def.cases {
        if case.guard.eval(&env)? {
            return case.body.eval_with(&env, &mut |name: &str, args: &[Rational]| {
                if name == def.name {
                    naive_eval(def, args, depth + 1, calls)
                } else {
                    Err(Naive::Failed(format!("call to {name}")))
                }
            });
        }
    }
    Err(Naive::Failed(format!("no guard holds at {}", show(input))))
}

fn evaluator_oracle() -> Outcome {
    let size = bench("size").def().map_err(|e| e.to_string())?;
    let s = bench("size").reference(&size).expect("size reference").map_err(|e| e.to_string())?;
    let mut compared = 0;
    for b in corpus::all() {
        let mut def = b.def().map_err(|e| e.to_string())?;
        if def.external_calls().contains("s") {
            def = def.inline_function("s", &s).map_err(|e| e.to_string())?;
        }
        let mut shared = EvalContext::new(&def, EvalLimits::default());
        for point in domain_grid(&def, 0, 8) {
            let memo = eval_fun(&def, &point, EvalLimits::default()).map_err(|e| e.to_string())?;
            let again = shared.eval(&point).map_err(|e| e.to_string())?;
            let naive = naive_eval(&def, &point, 0, &mut 0);
            let agree = match (&memo, &naive) {
                (EvalOutcome::Value(a), Ok(b)) => a == b,
                (EvalOutcome::LimitExceeded(_), Err(Naive::Budget)) => true,
                _ => false,
            };
            ensure(agree && memo == again, || {
                format!("{} at {}: memoized {memo}, shared {again}, naive {naive:?}", b.name, show(&point))
            })?;
            compared += 1;
        }
    }
    Ok(format!("{compared} points over {} recurrences agree exactly", corpus::all().len()))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("table reproduction", table_reproduction),
        ("running example", running_example),
        ("non-termination handling", nontermination),
        ("size/cost chaining", chaining),
        ("checker soundness", checker_soundness),
        ("regression suite", regression_suite),
        ("determinism", determinism),
        ("evaluator oracle", evaluator_oracle),
    ];
    let mut failed = 0;
    for (i, &(title, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        // The naive evaluator recurses deeply on non-terminating inputs.
        let outcome = std::thread::Builder::new()
            .stack_size(1 << 30)
            .spawn(move || catch_unwind(AssertUnwindSafe(run)))
            .expect("criterion thread")
            .join()
            .expect("criterion thread joins");
        let outcome = match outcome {
            Ok(result) => result,
            Err(panic) => Err(panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into())),
        };
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS criterion {} ({title}): {detail} [{secs:.1} s]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {} ({title}): {detail} [{secs:.1} s]", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
