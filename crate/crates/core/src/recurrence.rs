//! Recurrence definitions and their deterministic evaluation.
//!
//! Cases are tried in textual order and the first guard that holds selects
//! the body, exactly like a chain of nested `if-then-else`. Evaluation is
//! demand-driven: a body is evaluated against the memo table and, when it
//! needs a value that is not known yet, the missing input is pushed on an
//! explicit stack and the body is retried once that value exists. Recursion
//! depth therefore never touches the native stack.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::closed_form::ClosedForm;
use crate::expr::{rat, Constraint, Env, Expr, ExprError, Rational};
use crate::parser::{parse_raw_recurrence, RawRecurrence, SyntaxError};
use crate::subst::{DomainChecker, EntailmentError};

#[derive(Debug, Clone, PartialEq)]
pub struct Case {
    pub body: Expr,
    pub guard: Constraint,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecurrenceDef {
    pub name: String,
    pub args: Vec<String>,
    pub pre: Constraint,
    pub cases: Vec<Case>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RecurrenceError {
    #[error("syntax error at {0}")]
    Syntax(#[from] SyntaxError),
    #[error("arity mismatch for `{name}`: expected {expected}, found {found}")]
    ArityMismatch { name: String, expected: usize, found: usize },
    #[error("precondition does not entail the disjunction of the case guards")]
    PreconditionNotCovering,
    #[error("no case of `{0}` calls itself")]
    NoRecursiveCase(String),
    #[error("every case of `{0}` calls itself; a closed-form case is required")]
    NoClosedCase(String),
    #[error("guards and preconditions must not contain calls")]
    CallInConstraint,
    #[error("variable `{0}` is not an argument of the recurrence")]
    UnknownVariable(String),
    #[error(transparent)]
    Entailment(#[from] EntailmentError),
}

impl RecurrenceDef {
    /// Parses and structurally validates a definition. Coverage of the
    /// precondition needs an entailment oracle; see [`parse_recurrence`].
    pub fn parse(text: &str) -> Result<RecurrenceDef, RecurrenceError> {
        RecurrenceDef::from_raw(parse_raw_recurrence(text)?)
    }

    pub fn from_raw(raw: RawRecurrence) -> Result<RecurrenceDef, RecurrenceError> {
        let arity = raw.args.len();
        let mut cases = Vec::with_capacity(raw.cases.len());
        for c in raw.cases {
            if c.params.len() != arity {
                return Err(RecurrenceError::ArityMismatch {
                    name: raw.name.clone(),
                    expected: arity,
                    found: c.params.len(),
                });
            }
            let (body, guard) = if c.params == raw.args {
                (c.body, c.guard)
            } else {
                let renaming: BTreeMap<String, Expr> = c
                    .params
                    .iter()
                    .zip(&raw.args)
                    .map(|(p, a)| (p.clone(), Expr::Var(a.clone())))
                    .collect();
                (c.body.substitute(&renaming), c.guard.substitute(&renaming))
            };
            cases.push(Case { body, guard });
        }
        let pre = raw
            .pre
            .unwrap_or_else(|| Constraint::or(cases.iter().map(|c| c.guard.clone()).collect()));
        let def = RecurrenceDef { name: raw.name, args: raw.args, pre, cases };
        def.validate()?;
        Ok(def)
    }

    fn validate(&self) -> Result<(), RecurrenceError> {
        let args: BTreeSet<&String> = self.args.iter().collect();
        let check_vars = |vars: BTreeSet<String>| -> Result<(), RecurrenceError> {
            match vars.into_iter().find(|v| !args.contains(v)) {
                Some(v) => Err(RecurrenceError::UnknownVariable(v)),
                None => Ok(()),
            }
        };
        if self.pre.contains_any_call() {
            return Err(RecurrenceError::CallInConstraint);
        }
        check_vars(self.pre.free_vars())?;
        let mut arities: BTreeMap<String, usize> = BTreeMap::new();
        arities.insert(self.name.clone(), self.args.len());
        for c in &self.cases {
            if c.guard.contains_any_call() {
                return Err(RecurrenceError::CallInConstraint);
            }
            check_vars(c.guard.free_vars())?;
            check_vars(c.body.free_vars())?;
            for (name, n) in c.body.called_functions() {
                let expected = *arities.entry(name.clone()).or_insert(n);
                if expected != n {
                    return Err(RecurrenceError::ArityMismatch { name, expected, found: n });
                }
            }
        }
        if !self.cases.iter().any(|c| c.body.contains_calls(&self.name)) {
            return Err(RecurrenceError::NoRecursiveCase(self.name.clone()));
        }
        if self.cases.iter().all(|c| c.body.contains_calls(&self.name)) {
            return Err(RecurrenceError::NoClosedCase(self.name.clone()));
        }
        Ok(())
    }

    pub fn arity(&self) -> usize {
        self.args.len()
    }

    pub fn is_recursive_case(&self, i: usize) -> bool {
        self.cases[i].body.contains_calls(&self.name)
    }

    /// Functions other than the recurrence itself that its bodies call.
    pub fn external_calls(&self) -> BTreeSet<String> {
        self.cases
            .iter()
            .flat_map(|c| c.body.called_functions())
            .map(|(n, _)| n)
            .filter(|n| *n != self.name)
            .collect()
    }

    /// `¬φ₁ ∧ … ∧ ¬φ_{i−1} ∧ φᵢ`: the inputs on which case `i` fires.
    pub fn first_match_region(&self, i: usize) -> Constraint {
        let mut parts: Vec<Constraint> = self.cases[..i]
            .iter()
            .map(|c| Constraint::not(c.guard.clone()))
            .collect();
        parts.push(self.cases[i].guard.clone());
        Constraint::and(parts)
    }

    /// Domain points on which a recursive case fires.
    pub fn recursive_region(&self) -> Constraint {
        let regions = (0..self.cases.len())
            .filter(|i| self.is_recursive_case(*i))
            .map(|i| self.first_match_region(i))
            .collect();
        Constraint::and(vec![self.pre.clone(), Constraint::or(regions)])
    }

    pub fn guard_disjunction(&self) -> Constraint {
        Constraint::or(self.cases.iter().map(|c| c.guard.clone()).collect())
    }

    /// Checks `pre ⊨ ⋁ guards`.
    pub fn check_coverage(&self, checker: &dyn DomainChecker) -> Result<(), RecurrenceError> {
        if checker.entails(&self.pre, &self.guard_disjunction())? {
            Ok(())
        } else {
            Err(RecurrenceError::PreconditionNotCovering)
        }
    }

    /// Replaces every call to the external function `name` by `cf`.
    pub fn inline_function(&self, name: &str, cf: &ClosedForm) -> Result<RecurrenceDef, RecurrenceError> {
        let inline = |e: &Expr| {
            e.map_bottom_up(&mut |node| match &node {
                Expr::Call(n, actuals) if n == name => cf.instantiate(actuals),
                _ => node,
            })
        };
        let cases = self
            .cases
            .iter()
            .map(|c| Case { body: inline(&c.body), guard: c.guard.clone() })
            .collect();
        let def = RecurrenceDef { cases, ..self.clone() };
        def.validate()?;
        Ok(def)
    }

    pub fn input_in_domain(&self, input: &[Rational]) -> Result<bool, ExprError> {
        self.pre.eval(&Env::bind(&self.args, input))
    }
}

impl fmt::Display for RecurrenceDef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let params = self.args.join(", ");
        writeln!(f, "def {}({});", self.name, params)?;
        writeln!(f, "pre {};", self.pre)?;
        for c in &self.cases {
            writeln!(f, "{}({}) = {} if {};", self.name, params, c.body, c.guard)?;
        }
        Ok(())
    }
}

/// Parses a definition and checks that its precondition covers the guards.
pub fn parse_recurrence(text: &str, checker: &dyn DomainChecker) -> Result<RecurrenceDef, RecurrenceError> {
    let def = RecurrenceDef::parse(text)?;
    def.check_coverage(checker)?;
    Ok(def)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalLimits {
    pub max_depth: usize,
    pub max_steps: u64,
    pub timeout_ms: u64,
}

impl Default for EvalLimits {
    fn default() -> Self {
        EvalLimits { max_depth: 10_000, max_steps: 1_000_000, timeout_ms: 5_000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LimitKind {
    Depth,
    Steps,
    Timeout,
}

impl fmt::Display for LimitKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LimitKind::Depth => "call depth",
            LimitKind::Steps => "evaluation steps",
            LimitKind::Timeout => "timeout",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EvalOutcome {
    Value(Rational),
    LimitExceeded(LimitKind),
    GuardFallthrough(Vec<Rational>),
}

impl EvalOutcome {
    pub fn value(&self) -> Option<&Rational> {
        match self {
            EvalOutcome::Value(v) => Some(v),
            _ => None,
        }
    }
}

impl fmt::Display for EvalOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EvalOutcome::Value(v) => write!(f, "{v}"),
            EvalOutcome::LimitExceeded(k) => write!(f, "LimitExceeded({k})"),
            EvalOutcome::GuardFallthrough(input) => {
                let parts: Vec<String> = input.iter().map(|v| v.to_string()).collect();
                write!(f, "GuardFallthrough({})", parts.join(", "))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("expected {expected} argument(s), got {got}")]
    Arity { expected: usize, got: usize },
    #[error("input ({0}) does not satisfy the precondition")]
    PreconditionViolated(String),
    #[error("call to `{0}`, which is neither the recurrence nor inlined")]
    UnresolvedCall(String),
}

enum Interrupt {
    Need(Vec<Rational>),
    Fail(EvalError),
}

impl From<ExprError> for Interrupt {
    fn from(e: ExprError) -> Self {
        Interrupt::Fail(EvalError::Expr(e))
    }
}

enum Attempt {
    Done(Rational),
    Need(Vec<Rational>),
    Fallthrough,
}

/// Evaluation state: the memo table plus per-query counters. One context
/// belongs to one thread; queries on it run one after another and share
/// the memo table, which only ever holds completed values.
pub struct EvalContext<'a> {
    def: &'a RecurrenceDef,
    limits: EvalLimits,
    memo: HashMap<Vec<Rational>, Rational>,
}

impl<'a> EvalContext<'a> {
    pub fn new(def: &'a RecurrenceDef, limits: EvalLimits) -> Self {
        EvalContext { def, limits, memo: HashMap::new() }
    }

    /// Every input whose value has been computed so far.
    pub fn visited(&self) -> impl Iterator<Item = (&Vec<Rational>, &Rational)> {
        self.memo.iter()
    }

    fn attempt(&self, input: &[Rational]) -> Result<Attempt, EvalError> {
        let env = Env::bind(&self.def.args, input);
        let name = self.def.name.as_str();
        let memo = &self.memo;
        let mut resolve = |callee: &str, args: &[Rational]| -> Result<Rational, Interrupt> {
            if callee != name {
                return Err(Interrupt::Fail(EvalError::UnresolvedCall(callee.to_string())));
            }
            match memo.get(args) {
                Some(v) => Ok(v.clone()),
                None => Err(Interrupt::Need(args.to_vec())),
            }
        };
        for case in &self.def.cases {
            if case.guard.eval(&env)? {
                return match case.body.eval_with(&env, &mut resolve) {
                    Ok(v) => Ok(Attempt::Done(v)),
                    Err(Interrupt::Need(args)) => Ok(Attempt::Need(args)),
                    Err(Interrupt::Fail(e)) => Err(e),
                };
            }
        }
        Ok(Attempt::Fallthrough)
    }

    /// Evaluates the recurrence at `input` without checking the precondition.
    pub fn eval(&mut self, input: &[Rational]) -> Result<EvalOutcome, EvalError> {
        if input.len() != self.def.arity() {
            return Err(EvalError::Arity { expected: self.def.arity(), got: input.len() });
        }
        if let Some(v) = self.memo.get(input) {
            return Ok(EvalOutcome::Value(v.clone()));
        }
        let start = Instant::now();
        let timeout = Duration::from_millis(self.limits.timeout_ms);
        let mut steps: u64 = 0;
        let mut stack: Vec<Vec<Rational>> = vec![input.to_vec()];
        let mut pending: HashSet<Vec<Rational>> = HashSet::from([input.to_vec()]);
        while let Some(top) = stack.last() {
            steps += 1;
            if steps > self.limits.max_steps {
                return Ok(EvalOutcome::LimitExceeded(LimitKind::Steps));
            }
            if steps % 256 == 0 && start.elapsed() > timeout {
                return Ok(EvalOutcome::LimitExceeded(LimitKind::Timeout));
            }
            match self.attempt(top)? {
                Attempt::Done(v) => {
                    let done = stack.pop().expect("non-empty stack");
                    pending.remove(&done);
                    self.memo.insert(done, v);
                }
                Attempt::Need(args) => {
                    // A value that depends on itself is an infinite descent.
                    if pending.contains(&args) || stack.len() >= self.limits.max_depth {
                        return Ok(EvalOutcome::LimitExceeded(LimitKind::Depth));
                    }
                    pending.insert(args.clone());
                    stack.push(args);
                }
                Attempt::Fallthrough => return Ok(EvalOutcome::GuardFallthrough(top.clone())),
            }
        }
        Ok(EvalOutcome::Value(self.memo[input].clone()))
    }
}

/// Evaluates `def` at `input`, which must satisfy the precondition.
pub fn eval_fun(def: &RecurrenceDef, input: &[Rational], limits: EvalLimits) -> Result<EvalOutcome, EvalError> {
    if input.len() != def.arity() {
        return Err(EvalError::Arity { expected: def.arity(), got: input.len() });
    }
    if !def.input_in_domain(input)? {
        let shown: Vec<String> = input.iter().map(|v| v.to_string()).collect();
        return Err(EvalError::PreconditionViolated(shown.join(", ")));
    }
    EvalContext::new(def, limits).eval(input)
}

pub fn eval_fun_ints(def: &RecurrenceDef, input: &[i64], limits: EvalLimits) -> Result<EvalOutcome, EvalError> {
    let values: Vec<Rational> = input.iter().map(|v| rat(*v)).collect();
    eval_fun(def, &values, limits)
}
