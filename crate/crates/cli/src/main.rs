//! `recsolve`: solve, check and evaluate constrained recurrences.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use recsolve_core::checker::{check_solution, CheckVerdict, Counterexample, Solver, SolverConfig};
use recsolve_core::closed_form::ClosedForm;
use recsolve_core::corpus;
use recsolve_core::expr::{Env, Rational};
use recsolve_core::parser::parse_expr;
use recsolve_core::pipeline::{meets_expectation, run_bench, solve, SolveConfig, SolveReport, Verdict};
use recsolve_core::recurrence::{eval_fun, EvalLimits, EvalOutcome, RecurrenceDef};
use recsolve_core::regression::LambdaGrid;

/// Exit status for usage, input and configuration errors.
const USAGE_ERROR: u8 = 1;

#[derive(Parser, Debug)]
#[command(name = "recsolve", version, about = "Guess-and-check solver for constrained recurrence relations")]
struct Cli {
    #[command(flatten)]
    opts: Options,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Guess a closed form for each recurrence and try to verify it.
    Solve {
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
    /// Check a given closed form against a recurrence.
    Check {
        file: PathBuf,
        /// Candidate closed form, e.g. "x" or "x + y - 1 if x > 0 && y > 0; 0 if x = 0 || y = 0".
        #[arg(long = "cf")]
        closed_form: String,
    },
    /// Evaluate a recurrence at one input.
    Eval {
        file: PathBuf,
        #[arg(required = true, allow_hyphen_values = true)]
        values: Vec<String>,
    },
    /// Run the bundled benchmark corpus.
    Bench {
        /// Include the fixtures, not only the table benchmarks.
        #[arg(long)]
        all: bool,
        /// Also write the JSON-lines reports to this file.
        #[arg(long)]
        dump: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Human,
    JsonLines,
}

#[derive(Args, Debug)]
struct Options {
    /// Seed for sampling and cross-validation.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Number of training inputs.
    #[arg(long, global = true, default_value_t = 100)]
    samples: usize,
    /// Number of test inputs.
    #[arg(long, global = true, default_value_t = 30)]
    test_samples: usize,
    /// Cross-validation folds.
    #[arg(long, global = true, default_value_t = 2)]
    folds: usize,
    /// Regularization grid as COUNT:LO:HI.
    #[arg(long, global = true, default_value = "100:0.001:1", value_parser = parse_grid)]
    lambda_grid: LambdaGrid,
    /// Coefficients below this magnitude are pruned.
    #[arg(long, global = true, default_value_t = 0.05)]
    epsilon: f64,
    /// Inclusive sampling bounds for every argument, as LO:HI.
    #[arg(long, global = true, default_value = "0:30", value_parser = parse_bounds)]
    bounds: Bounds,
    /// Largest denominator of a rationalized coefficient.
    #[arg(long, global = true, default_value_t = 64)]
    max_denominator: u64,
    /// Evaluation limit on the call depth.
    #[arg(long, global = true, default_value_t = 10_000)]
    max_depth: usize,
    /// Evaluation limit on the number of steps per input.
    #[arg(long, global = true, default_value_t = 1_000_000)]
    max_steps: u64,
    /// Evaluation time limit per input, in milliseconds.
    #[arg(long, global = true, default_value_t = 5_000)]
    eval_timeout_ms: u64,
    /// SMT solver executable.
    #[arg(long, global = true, env = "RECSOLVE_SOLVER", default_value = "z3")]
    solver: PathBuf,
    /// Solver backend (z3, cvc5, yices, generic); guessed from the executable name by default.
    #[arg(long, global = true)]
    backend: Option<String>,
    /// Time limit per solver query, in milliseconds.
    #[arg(long, global = true, default_value_t = 10_000)]
    timeout_ms: u64,
    /// Write every solver script to this directory.
    #[arg(long, global = true)]
    emit_smt: Option<PathBuf>,
    /// Benchmarks solved concurrently.
    #[arg(long, global = true, default_value_t = default_jobs())]
    jobs: usize,
    #[arg(long, global = true, value_enum, default_value_t = Format::Human)]
    format: Format,
}

fn default_jobs() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

fn split_colon(text: &str, parts: usize) -> Result<Vec<&str>, String> {
    let fields: Vec<&str> = text.split(':').collect();
    if fields.len() != parts {
        return Err(format!("expected {parts} fields separated by ':'"));
    }
    Ok(fields)
}

fn field<T: FromStr>(text: &str) -> Result<T, String> {
    text.trim().parse().map_err(|_| format!("invalid number `{text}`"))
}

fn parse_grid(text: &str) -> Result<LambdaGrid, String> {
    let f = split_colon(text, 3)?;
    Ok(LambdaGrid { count: field(f[0])?, lo: field(f[1])?, hi: field(f[2])? })
}

#[derive(Debug, Clone, Copy)]
struct Bounds(i64, i64);

fn parse_bounds(text: &str) -> Result<Bounds, String> {
    let f = split_colon(text, 2)?;
    let (lo, hi) = (field(f[0])?, field(f[1])?);
    if lo > hi {
        return Err(format!("empty range {lo}:{hi}"));
    }
    Ok(Bounds(lo, hi))
}

impl Options {
    fn limits(&self) -> EvalLimits {
        EvalLimits { max_depth: self.max_depth, max_steps: self.max_steps, timeout_ms: self.eval_timeout_ms }
    }

    fn solve_config(&self) -> Result<SolveConfig> {
        let mut cfg = SolveConfig::default();
        let g = &mut cfg.guess;
        g.sample.seed = self.seed;
        g.sample.n = self.samples;
        g.sample.bounds = (self.bounds.0, self.bounds.1);
        g.n_test = self.test_samples;
        g.regression.folds = self.folds;
        g.regression.lambda_grid = self.lambda_grid;
        g.regression.epsilon = self.epsilon;
        g.regression.max_denominator = self.max_denominator;
        g.regression.validate().context("invalid regression settings")?;
        g.limits = self.limits();
        cfg.solver = SolverConfig {
            path: self.solver.clone(),
            backend: self.backend.clone(),
            timeout_ms: self.timeout_ms,
            ..SolverConfig::default()
        };
        Ok(cfg)
    }

    fn solver(&self, cfg: &SolverConfig) -> Result<Solver> {
        let solver = Solver::new(cfg.clone())?;
        Ok(match &self.emit_smt {
            Some(dir) => solver.emit_to(dir.clone()),
            None => solver,
        })
    }
}

fn read_def(path: &Path) -> Result<RecurrenceDef> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    RecurrenceDef::parse(&text).with_context(|| format!("{}", path.display()))
}

fn json_line(value: &impl serde::Serialize) -> Result<String> {
    Ok(serde_json::to_string(value)?)
}

fn describe_counterexample(c: &Counterexample) -> String {
    let input: Vec<String> = c.input.iter().map(|(a, v)| format!("{a} = {v}")).collect();
    format!("at {}: recurrence gives {}, candidate gives {}", input.join(", "), c.expected, c.actual)
}

fn describe_verdict(report: &SolveReport) -> String {
    match &report.verdict {
        Verdict::Verified => "verified".into(),
        Verdict::Refuted => match &report.counterexample {
            Some(c) => format!("refuted {}", describe_counterexample(c)),
            None => "refuted".into(),
        },
        Verdict::Unknown { reason, detail } => format!("unknown ({}): {detail}", kebab(reason)),
        Verdict::Skipped { label, .. } => format!("{label} (score below threshold)"),
        Verdict::LikelyNonterminating { dropped, total } => {
            format!("likely nonterminating ({dropped} of {total} sampled inputs hit the evaluation limits)")
        }
        Verdict::Failed { stage, message } => format!("failed in {} stage: {message}", kebab(stage)),
    }
}

fn kebab(value: &impl serde::Serialize) -> String {
    serde_json::to_value(value).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default()
}

fn print_human(out: &mut impl Write, report: &SolveReport) -> Result<()> {
    writeln!(out, "{}: {}", report.name, report.closed_form.as_deref().unwrap_or("no closed form"))?;
    if let Some(score) = report.score {
        writeln!(out, "  score: {score}")?;
    }
    writeln!(out, "  verdict: {}", describe_verdict(report))?;
    writeln!(out, "  time: {:.3} s", report.timings.total_ms / 1000.0)?;
    Ok(())
}

fn cmd_solve(opts: &Options, files: &[PathBuf]) -> Result<u8> {
    let cfg = opts.solve_config()?;
    let solver = opts.solver(&cfg.solver)?;
    let mut status = 0;
    let mut out = std::io::stdout().lock();
    for path in files {
        let def = match read_def(path) {
            Ok(def) => def,
            Err(e) => {
                eprintln!("error: {e:#}");
                status = USAGE_ERROR;
                continue;
            }
        };
        let mut report = solve(&def, &cfg, &solver);
        if let Some(stem) = path.file_stem() {
            report.name = stem.to_string_lossy().into_owned();
        }
        match opts.format {
            Format::Human => print_human(&mut out, &report)?,
            Format::JsonLines => writeln!(out, "{}", json_line(&report)?)?,
        }
        if status != USAGE_ERROR {
            status = status.max(report.verdict.exit_code() as u8);
        }
    }
    Ok(status)
}

fn cmd_check(opts: &Options, file: &Path, text: &str) -> Result<u8> {
    let def = read_def(file)?;
    let cf = ClosedForm::parse(text, &def.args, &def.pre).context("invalid closed form")?;
    let cfg = opts.solve_config()?;
    let solver = opts.solver(&cfg.solver)?;
    let verdict = check_solution(&def, &cf, &solver, opts.limits())?;
    let mut out = std::io::stdout().lock();
    match opts.format {
        Format::Human => match &verdict {
            CheckVerdict::Verified => writeln!(out, "verified")?,
            CheckVerdict::Refuted { counterexample } => {
                writeln!(out, "refuted {}", describe_counterexample(counterexample))?
            }
            CheckVerdict::Unknown { reason, detail } => writeln!(out, "unknown ({}): {detail}", kebab(reason))?,
        },
        Format::JsonLines => {
            let doc = serde_json::json!({ "closed_form": cf.to_string(), "verdict": verdict });
            writeln!(out, "{doc}")?
        }
    }
    Ok(if verdict.is_verified() { 0 } else { 3 })
}

fn cmd_eval(opts: &Options, file: &Path, values: &[String]) -> Result<u8> {
    let def = read_def(file)?;
    if values.len() != def.arity() {
        bail!("{} expects {} argument(s), got {}", def.name, def.arity(), values.len());
    }
    let mut input: Vec<Rational> = Vec::with_capacity(values.len());
    for v in values {
        let e = parse_expr(v).with_context(|| format!("invalid value `{v}`"))?;
        input.push(e.eval(&Env::new()).with_context(|| format!("invalid value `{v}`"))?);
    }
    let outcome = eval_fun(&def, &input, opts.limits())?;
    let mut out = std::io::stdout().lock();
    match opts.format {
        Format::Human => writeln!(out, "{outcome}")?,
        Format::JsonLines => {
            let doc = match &outcome {
                EvalOutcome::Value(v) => serde_json::json!({ "value": v.to_string() }),
                other => serde_json::json!({ "outcome": other.to_string() }),
            };
            writeln!(out, "{doc}")?
        }
    }
    Ok(if outcome.value().is_some() { 0 } else { 3 })
}

fn cmd_bench(opts: &Options, all: bool, dump: Option<&Path>) -> Result<u8> {
    let cfg = opts.solve_config()?;
    let benchmarks: Vec<_> = corpus::all().iter().filter(|b| all || b.table).collect();
    let reports = run_bench(&benchmarks, &cfg, opts.emit_smt.as_ref(), opts.jobs)?;
    let mut lines = String::new();
    for r in &reports {
        lines.push_str(&json_line(r)?);
        lines.push('\n');
    }
    if let Some(path) = dump {
        std::fs::write(path, &lines).with_context(|| format!("cannot write {}", path.display()))?;
    }
    let mut out = std::io::stdout().lock();
    let mut met = 0;
    let width = reports.iter().filter_map(|r| r.closed_form.as_ref()).map(|c| c.len()).max().unwrap_or(0);
    let width = width.clamp(11, 60);
    match opts.format {
        Format::JsonLines => out.write_all(lines.as_bytes())?,
        Format::Human => {
            writeln!(out, "{:<10} {:<width$} {:>8}  {:<22} {:>8}", "benchmark", "closed form", "score", "verified", "time (s)")?;
        }
    }
    for (b, r) in benchmarks.iter().zip(&reports) {
        let ok = meets_expectation(r, b.expectation().verdict);
        met += usize::from(ok);
        if opts.format == Format::Human {
            let score = r.score.map(|s| format!("{s:.4}")).unwrap_or_else(|| "-".into());
            writeln!(
                out,
                "{:<10} {:<width$} {:>8}  {:<22} {:>8.3}",
                r.name,
                r.closed_form.as_deref().unwrap_or("-"),
                score,
                r.verdict.short_name(),
                r.timings.total_ms / 1000.0
            )?;
        }
    }
    if opts.format == Format::Human {
        writeln!(out, "{met}/{} benchmarks as expected", reports.len())?;
    }
    Ok(if met == reports.len() { 0 } else { 3 })
}

fn run(cli: Cli) -> Result<u8> {
    match &cli.command {
        Command::Solve { files } => cmd_solve(&cli.opts, files),
        Command::Check { file, closed_form } => cmd_check(&cli.opts, file, closed_form),
        Command::Eval { file, values } => cmd_eval(&cli.opts, file, values),
        Command::Bench { all, dump } => cmd_bench(&cli.opts, *all, dump.as_deref()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { USAGE_ERROR } else { 0 });
        }
    };
    match run(cli) {
        Ok(status) => ExitCode::from(status),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(USAGE_ERROR)
        }
    }
}
