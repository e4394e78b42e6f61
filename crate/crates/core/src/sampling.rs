//! Input sampling and training-set construction.

use std::collections::HashSet;

use num_traits::ToPrimitive;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{rat, Constraint, Env, Expr, ExprError, Rational};
use crate::recurrence::{EvalContext, EvalError, EvalLimits, EvalOutcome, RecurrenceDef};
use crate::simplify::simplify;

/// Boxes up to this many points are enumerated when rejection sampling
/// cannot find enough distinct inputs.
const ENUMERATION_LIMIT: u64 = 1 << 20;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SamplingError {
    #[error("found only {found} of {wanted} distinct inputs satisfying the precondition")]
    SamplingExhausted { found: usize, wanted: usize },
    #[error("{dropped} of {total} inputs exceeded the evaluation limits; the recurrence is likely non-terminating")]
    LikelyNonterminating { dropped: usize, total: usize },
    #[error("no input produced a value")]
    EmptyTrainingSet,
    #[error("base function `{name}` is undefined at {input:?}: {source}")]
    BaseFunctionUndefined { name: String, input: Vec<i64>, source: ExprError },
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("invalid sampling configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaseFunction {
    pub name: String,
    pub expr: Expr,
}

/// Ordered dictionary of candidate terms.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BaseFunctionSet {
    pub functions: Vec<BaseFunction>,
}

impl BaseFunctionSet {
    /// Builds a set from expressions, dropping duplicates up to simplification.
    pub fn from_exprs(exprs: impl IntoIterator<Item = Expr>) -> BaseFunctionSet {
        let mut seen = HashSet::new();
        let mut functions = Vec::new();
        for e in exprs {
            if seen.insert(simplify(&e)) {
                functions.push(BaseFunction { name: e.to_string(), expr: e });
            }
        }
        BaseFunctionSet { functions }
    }

    pub fn len(&self) -> usize {
        self.functions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functions.is_empty()
    }

    pub fn names(&self) -> Vec<String> {
        self.functions.iter().map(|f| f.name.clone()).collect()
    }

    /// Splits off the functions that fail to evaluate at some input, such as
    /// `floor(x/y)` at `y = 0`. Returns the kept set and the dropped names.
    pub fn defined_on(&self, args: &[String], inputs: &[Vec<i64>]) -> (BaseFunctionSet, Vec<String>) {
        let envs: Vec<Env> = inputs.iter().map(|i| Env::from_ints(args, i)).collect();
        let (kept, dropped): (Vec<_>, Vec<_>) = self
            .functions
            .iter()
            .cloned()
            .partition(|f| envs.iter().all(|env| f.expr.eval(env).is_ok()));
        (BaseFunctionSet { functions: kept }, dropped.into_iter().map(|f| f.name).collect())
    }
}

fn x_log_y(x: &str, y: &str) -> Expr {
    Expr::var(x) * Expr::log2ceil(Expr::var(y))
}

fn power(base: Expr, k: i64) -> Expr {
    Expr::pow(base, Expr::int(k)).expect("constant exponent")
}

fn exp2(exponent: Expr) -> Expr {
    Expr::pow(Expr::int(2), exponent).expect("constant base")
}

/// The default dictionary for a recurrence with the given argument names.
pub fn default_base_set(args: &[String]) -> BaseFunctionSet {
    assert!(!args.is_empty(), "base functions need at least one argument");
    let v = |i: usize| Expr::var(&args[i]);
    let mut exprs = Vec::new();
    if args.len() <= 2 {
        for (i, a) in args.iter().enumerate() {
            exprs.push(v(i));
            exprs.push(power(v(i), 2));
            exprs.push(power(v(i), 3));
            exprs.push(Expr::log2ceil(v(i)));
            exprs.push(exp2(v(i)));
            exprs.push(x_log_y(a, a));
        }
        if args.len() == 2 {
            let (x, y) = (&args[0], &args[1]);
            let ratio = || Expr::Div(Box::new(v(0)), Box::new(v(1)));
            exprs.push(v(0) * v(1));
            exprs.push(Expr::max(v(0), v(1)));
            exprs.push(Expr::min(v(0), v(1)));
            exprs.push(Expr::floor(ratio()));
            exprs.push(Expr::ceil(ratio()));
            exprs.push(x_log_y(x, y));
            exprs.push(x_log_y(y, x));
        }
    } else {
        for i in 0..args.len() {
            exprs.push(v(i));
            exprs.push(power(v(i), 2));
            exprs.push(Expr::log2ceil(v(i)));
            exprs.push(exp2(v(i)));
        }
        for i in 0..args.len() {
            for j in i + 1..args.len() {
                exprs.push(v(i) * v(j));
            }
        }
    }
    BaseFunctionSet::from_exprs(exprs)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleConfig {
    /// Number of training inputs.
    pub n: usize,
    /// Inclusive bounds applied to every argument.
    pub bounds: (i64, i64),
    pub seed: u64,
    /// Maximum number of draws before giving up.
    pub max_attempts: usize,
}

impl Default for SampleConfig {
    fn default() -> Self {
        SampleConfig { n: 100, bounds: (0, 30), seed: 0, max_attempts: 200_000 }
    }
}

impl SampleConfig {
    fn validate(&self) -> Result<(), SamplingError> {
        if self.n == 0 {
            return Err(SamplingError::InvalidConfig("sample count must be positive".into()));
        }
        if self.bounds.0 > self.bounds.1 {
            return Err(SamplingError::InvalidConfig(format!(
                "empty bounds {}:{}",
                self.bounds.0, self.bounds.1
            )));
        }
        if self.max_attempts == 0 {
            return Err(SamplingError::InvalidConfig("attempt cap must be positive".into()));
        }
        Ok(())
    }
}

fn satisfies(pre: &Constraint, args: &[String], point: &[i64]) -> bool {
    matches!(pre.eval(&Env::from_ints(args, point)), Ok(true))
}

fn draw(pre: &Constraint, args: &[String], n: usize, cfg: &SampleConfig) -> Result<Vec<Vec<i64>>, SamplingError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (lo, hi) = cfg.bounds;
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(n);
    for _ in 0..cfg.max_attempts {
        if out.len() == n {
            break;
        }
        let point: Vec<i64> = (0..args.len()).map(|_| rng.gen_range(lo..=hi)).collect();
        if !seen.contains(&point) && satisfies(pre, args, &point) {
            seen.insert(point.clone());
            out.push(point);
        }
    }
    if out.len() < n {
        return Err(SamplingError::SamplingExhausted { found: out.len(), wanted: n });
    }
    Ok(out)
}

/// `cfg.n` distinct integer tuples inside the bounds that satisfy `pre`,
/// drawn uniformly with rejection. Deterministic in `cfg.seed`.
pub fn sample_inputs(pre: &Constraint, args: &[String], cfg: &SampleConfig) -> Result<Vec<Vec<i64>>, SamplingError> {
    draw(pre, args, cfg.n, cfg)
}

fn enumerate_box(pre: &Constraint, args: &[String], (lo, hi): (i64, i64)) -> Option<Vec<Vec<i64>>> {
    let width = (hi - lo + 1) as u64;
    let total = width.checked_pow(args.len() as u32)?;
    if total > ENUMERATION_LIMIT {
        return None;
    }
    let mut out = Vec::new();
    let mut point = vec![lo; args.len()];
    loop {
        if satisfies(pre, args, &point) {
            out.push(point.clone());
        }
        let mut i = 0;
        loop {
            if i == point.len() {
                return Some(out);
            }
            if point[i] < hi {
                point[i] += 1;
                break;
            }
            point[i] = lo;
            i += 1;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<Vec<i64>>,
    pub test: Vec<Vec<i64>>,
}

/// Disjoint training (`cfg.n`) and test (`n_test`) inputs from one seeded
/// stream. When the satisfying population in the box is too small, it is
/// enumerated, shuffled and divided in the same proportion.
pub fn sample_split(
    pre: &Constraint,
    args: &[String],
    cfg: &SampleConfig,
    n_test: usize,
) -> Result<Split, SamplingError> {
    let wanted = cfg.n + n_test;
    let mut inputs = match draw(pre, args, wanted, cfg) {
        Ok(inputs) => inputs,
        Err(SamplingError::SamplingExhausted { found, .. }) => {
            let mut all = enumerate_box(pre, args, cfg.bounds)
                .ok_or(SamplingError::SamplingExhausted { found, wanted })?;
            if all.len() < 3 {
                return Err(SamplingError::SamplingExhausted { found: all.len(), wanted });
            }
            all.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed));
            let test = ((all.len() * n_test + wanted / 2) / wanted).clamp(1, all.len() - 2);
            log::debug!("only {} satisfying inputs in the box; using {} for testing", all.len(), test);
            let train = all.drain(test..).collect();
            return Ok(Split { train, test: all });
        }
        Err(e) => return Err(e),
    };
    let test = inputs.split_off(cfg.n);
    Ok(Split { train: inputs, test })
}

/// Exact evaluations of the recurrence and of every base function.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    pub base: BaseFunctionSet,
    pub inputs: Vec<Vec<i64>>,
    /// Recurrence value per row.
    pub targets: Vec<Rational>,
    /// Base-function values per row, in dictionary order.
    pub features: Vec<Vec<Rational>>,
    /// Inputs dropped because evaluation hit a limit.
    pub dropped_limits: usize,
    /// Inputs dropped because evaluation was undefined (fallthrough or error).
    pub dropped_undefined: usize,
}

impl TrainingSet {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn labels(&self) -> Vec<String> {
        self.base.names()
    }

    /// Row `i` as `⟨b, c₁, …, cₙ⟩`.
    pub fn row(&self, i: usize) -> Vec<Rational> {
        let mut row = vec![self.targets[i].clone()];
        row.extend(self.features[i].iter().cloned());
        row
    }

    pub fn targets_f64(&self) -> Vec<f64> {
        self.targets.iter().map(to_f64).collect()
    }

    pub fn features_f64(&self) -> Vec<Vec<f64>> {
        self.features.iter().map(|r| r.iter().map(to_f64).collect()).collect()
    }
}

pub fn to_f64(r: &Rational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// Evaluates the recurrence and the dictionary on each input. Inputs whose
/// evaluation exceeds the limits are dropped; if they are the majority the
/// recurrence is reported as likely non-terminating.
pub fn build_training_set(
    def: &RecurrenceDef,
    base: &BaseFunctionSet,
    inputs: &[Vec<i64>],
    limits: EvalLimits,
) -> Result<TrainingSet, SamplingError> {
    let mut ctx = EvalContext::new(def, limits);
    let mut set = TrainingSet {
        base: base.clone(),
        inputs: Vec::new(),
        targets: Vec::new(),
        features: Vec::new(),
        dropped_limits: 0,
        dropped_undefined: 0,
    };
    let total = inputs.len();
    for input in inputs {
        let values: Vec<Rational> = input.iter().map(|v| rat(*v)).collect();
        match ctx.eval(&values) {
            Ok(EvalOutcome::Value(b)) => {
                let env = Env::from_ints(&def.args, input);
                let mut row = Vec::with_capacity(base.len());
                for f in &base.functions {
                    let c = f.expr.eval(&env).map_err(|source| SamplingError::BaseFunctionUndefined {
                        name: f.name.clone(),
                        input: input.clone(),
                        source,
                    })?;
                    row.push(c);
                }
                set.inputs.push(input.clone());
                set.targets.push(b);
                set.features.push(row);
            }
            Ok(EvalOutcome::LimitExceeded(kind)) => {
                log::debug!("dropping {input:?}: {kind} limit");
                set.dropped_limits += 1;
                if 2 * set.dropped_limits > total {
                    return Err(SamplingError::LikelyNonterminating { dropped: set.dropped_limits, total });
                }
            }
            Ok(EvalOutcome::GuardFallthrough(_)) | Err(EvalError::Expr(_)) => set.dropped_undefined += 1,
            Err(e) => return Err(e.into()),
        }
    }
    if set.is_empty() {
        return Err(SamplingError::EmptyTrainingSet);
    }
    Ok(set)
}
