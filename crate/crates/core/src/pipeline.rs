//! End-to-end solving: guess a candidate, gate on its score, check it, and
//! report.

use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::checker::{check_solution, CheckVerdict, Counterexample, Solver, SolverConfig, SolverError, UnknownReason};
use crate::closed_form::ClosedForm;
use crate::corpus::{self, Benchmark, ExpectedVerdict};
use crate::recurrence::RecurrenceDef;
use crate::regression::guess::{guess, FitResult, GuessConfig, GuessError};
use crate::sampling::{default_base_set, SamplingError};

/// Label attached to candidates that were never checked.
pub const APPROXIMATION_LABEL: &str = "approximation, possibly unsafe";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveConfig {
    pub guess: GuessConfig,
    pub solver: SolverConfig,
    /// Retry once with a fresh seed and twice the samples after a refutation.
    pub retry_on_refuted: bool,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig { guess: GuessConfig::default(), solver: SolverConfig::default(), retry_on_refuted: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Guess,
    Simplify,
    Check,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SkipReason {
    ScoreBelowThreshold,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum Verdict {
    Verified,
    /// The counterexample is reported alongside, in the report.
    Refuted,
    Unknown { reason: UnknownReason, detail: String },
    Skipped { reason: SkipReason, label: String },
    LikelyNonterminating { dropped: usize, total: usize },
    Failed { stage: Stage, message: String },
}

impl Verdict {
    /// Process exit status for this verdict.
    pub fn exit_code(&self) -> i32 {
        match self {
            Verdict::Verified => 0,
            Verdict::Skipped { .. } => 2,
            _ => 3,
        }
    }

    pub fn short_name(&self) -> &'static str {
        match self {
            Verdict::Verified => "verified",
            Verdict::Refuted => "refuted",
            Verdict::Unknown { .. } => "unknown",
            Verdict::Skipped { .. } => "approximation",
            Verdict::LikelyNonterminating { .. } => "likely-nonterminating",
            Verdict::Failed { .. } => "failed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PieceReport {
    pub expr: String,
    pub guard: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateReport {
    pub pieces: Vec<PieceReport>,
    pub fit: FitResult,
}

impl CandidateReport {
    fn new(cf: &ClosedForm, fit: FitResult) -> Self {
        let pieces =
            cf.pieces.iter().map(|p| PieceReport { expr: p.expr.to_string(), guard: p.guard.to_string() }).collect();
        CandidateReport { pieces, fit }
    }
}

/// Wall-clock milliseconds per stage, summed over attempts.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Timings {
    pub guess_ms: f64,
    pub simplify_ms: f64,
    pub check_ms: f64,
    pub total_ms: f64,
}

impl Timings {
    pub fn stage_sum(&self) -> f64 {
        self.guess_ms + self.simplify_ms + self.check_ms
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub name: String,
    /// The input recurrence, pretty-printed.
    pub recurrence: String,
    pub closed_form: Option<String>,
    pub candidate: Option<CandidateReport>,
    /// Exact R² on the test rows; present once the guess stage completed.
    pub score: Option<f64>,
    pub verdict: Verdict,
    pub counterexample: Option<Counterexample>,
    pub attempts: u32,
    pub timings: Timings,
    pub config: SolveConfig,
}

struct Attempt {
    candidate: Option<(ClosedForm, FitResult)>,
    check: Option<CheckVerdict>,
    verdict: Verdict,
    counterexample: Option<Counterexample>,
}

fn elapsed_ms(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1000.0
}

fn attempt(def: &RecurrenceDef, cfg: &SolveConfig, solver: &Solver, timings: &mut Timings) -> Attempt {
    let failed = |stage, message: String, candidate| Attempt {
        candidate,
        check: None,
        verdict: Verdict::Failed { stage, message },
        counterexample: None,
    };

    let t = Instant::now();
    let guessed = guess(def, &default_base_set(&def.args), &cfg.guess);
    timings.guess_ms += elapsed_ms(t);
    let g = match guessed {
        Ok(g) => g,
        Err(GuessError::Sampling(SamplingError::LikelyNonterminating { dropped, total })) => {
            return Attempt {
                candidate: None,
                check: None,
                verdict: Verdict::LikelyNonterminating { dropped, total },
                counterexample: None,
            }
        }
        Err(e) => return failed(Stage::Guess, e.to_string(), None),
    };
    if !g.fit.exact {
        return Attempt {
            candidate: Some((g.candidate, g.fit)),
            check: None,
            verdict: Verdict::Skipped { reason: SkipReason::ScoreBelowThreshold, label: APPROXIMATION_LABEL.into() },
            counterexample: None,
        };
    }

    let t = Instant::now();
    let simplified = g.candidate.absorb_pieces(solver);
    timings.simplify_ms += elapsed_ms(t);
    let candidate = match simplified {
        Ok(c) => c,
        Err(e) => return failed(Stage::Simplify, e.to_string(), Some((g.candidate, g.fit))),
    };

    let t = Instant::now();
    let checked = check_solution(def, &candidate, solver, cfg.guess.limits);
    timings.check_ms += elapsed_ms(t);
    match checked {
        Ok(v) => {
            let (verdict, counterexample) = match &v {
                CheckVerdict::Verified => (Verdict::Verified, None),
                CheckVerdict::Refuted { counterexample } => (Verdict::Refuted, Some(counterexample.clone())),
                CheckVerdict::Unknown { reason, detail } => {
                    (Verdict::Unknown { reason: *reason, detail: detail.clone() }, None)
                }
            };
            Attempt { candidate: Some((candidate, g.fit)), check: Some(v), verdict, counterexample }
        }
        Err(e) => failed(Stage::Check, e.to_string(), Some((candidate, g.fit))),
    }
}

/// Seed for the retry after a refutation.
pub fn retry_seed(seed: u64) -> u64 {
    seed.wrapping_add(0x9E37_79B9_7F4A_7C15)
}

/// Solves `def`. Every failure ends up in the report's verdict.
pub fn solve(def: &RecurrenceDef, cfg: &SolveConfig, solver: &Solver) -> SolveReport {
    let start = Instant::now();
    let mut timings = Timings::default();
    let mut current = attempt(def, cfg, solver, &mut timings);
    let mut attempts = 1;
    if cfg.retry_on_refuted && current.verdict == Verdict::Refuted {
        let mut retry = cfg.guess.clone();
        retry.sample.seed = retry_seed(retry.sample.seed);
        retry.sample.n *= 2;
        log::info!("{}: candidate refuted, retrying with seed {} and {} samples", def.name, retry.sample.seed, retry.sample.n);
        let retry_cfg = SolveConfig { guess: retry, ..cfg.clone() };
        current = attempt(def, &retry_cfg, solver, &mut timings);
        attempts = 2;
    }
    timings.total_ms = elapsed_ms(start);

    assert!(
        current.verdict != Verdict::Verified || current.check == Some(CheckVerdict::Verified),
        "a report may only claim verification when the checker did"
    );
    let score = current.candidate.as_ref().map(|(_, fit)| fit.score);
    SolveReport {
        name: def.name.clone(),
        recurrence: def.to_string(),
        closed_form: current.candidate.as_ref().map(|(cf, _)| cf.to_string()),
        candidate: current.candidate.map(|(cf, fit)| CandidateReport::new(&cf, fit)),
        score,
        verdict: current.verdict,
        counterexample: current.counterexample,
        attempts,
        timings,
        config: cfg.clone(),
    }
}

/// Failure to set up a benchmark run, before any solving starts.
#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    Solver(#[from] SolverError),
}

/// Solves `benchmarks` with up to `jobs` running at once. Each job gets its
/// own solver process configuration and cache. Reports come back in input
/// order; a benchmark that fails to parse yields a failed report.
pub fn run_bench(
    benchmarks: &[&Benchmark],
    cfg: &SolveConfig,
    emit_dir: Option<&PathBuf>,
    jobs: usize,
) -> Result<Vec<SolveReport>, BenchError> {
    // Surface a bad solver configuration once instead of per row.
    Solver::new(cfg.solver.clone())?;
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<SolveReport>>> = Mutex::new(vec![None; benchmarks.len()]);
    std::thread::scope(|scope| {
        for _ in 0..jobs.clamp(1, benchmarks.len().max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(b) = benchmarks.get(i) else { break };
                let report = solve_benchmark(b, cfg, emit_dir);
                results.lock().expect("bench results")[i] = Some(report);
            });
        }
    });
    Ok(results.into_inner().expect("bench results").into_iter().map(|r| r.expect("every job ran")).collect())
}

fn solve_benchmark(b: &Benchmark, cfg: &SolveConfig, emit_dir: Option<&PathBuf>) -> SolveReport {
    let mut solver = Solver::new(cfg.solver.clone()).expect("solver configuration was validated");
    if let Some(dir) = emit_dir {
        solver = solver.emit_to(dir.join(b.name));
    }
    let failed = |message: String| SolveReport {
        name: b.name.to_string(),
        recurrence: b.source.to_string(),
        closed_form: None,
        candidate: None,
        score: None,
        verdict: Verdict::Failed { stage: Stage::Guess, message },
        counterexample: None,
        attempts: 0,
        timings: Timings::default(),
        config: cfg.clone(),
    };
    let def = match benchmark_def(b, cfg, &solver) {
        Ok(def) => def,
        Err(message) => return failed(message),
    };
    let mut report = solve(&def, cfg, &solver);
    report.name = b.name.to_string();
    report
}

/// The benchmark's recurrence with every external function listed in its
/// sidecar replaced by that benchmark's verified solution.
pub fn benchmark_def(b: &Benchmark, cfg: &SolveConfig, solver: &Solver) -> Result<RecurrenceDef, String> {
    let mut def = b.def().map_err(|e| e.to_string())?;
    for (function, source) in b.expectation().inline {
        let dep = corpus::get(&source).ok_or_else(|| format!("unknown benchmark `{source}`"))?;
        let dep_def = dep.def().map_err(|e| format!("{source}: {e}"))?;
        let report = solve(&dep_def, cfg, solver);
        let text = match (&report.verdict, &report.closed_form) {
            (Verdict::Verified, Some(text)) => text.clone(),
            (v, _) => return Err(format!("`{function}` from {source} was not verified ({})", v.short_name())),
        };
        let cf = ClosedForm::parse(&text, &dep_def.args, &dep_def.pre).map_err(|e| format!("{source}: {e}"))?;
        def = def.inline_function(&function, &cf).map_err(|e| e.to_string())?;
    }
    Ok(def)
}

/// Whether a report has the outcome recorded in a benchmark sidecar.
pub fn meets_expectation(report: &SolveReport, expected: ExpectedVerdict) -> bool {
    matches!(
        (&report.verdict, expected),
        (Verdict::Verified, ExpectedVerdict::Verified)
            | (Verdict::Refuted, ExpectedVerdict::Refuted)
            | (Verdict::Unknown { .. }, ExpectedVerdict::Unknown)
            | (Verdict::Skipped { .. }, ExpectedVerdict::Approximation)
            | (Verdict::LikelyNonterminating { .. }, ExpectedVerdict::LikelyNonterminating)
    )
}
