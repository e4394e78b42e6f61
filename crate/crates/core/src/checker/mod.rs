//! Verifying candidate closed forms with an external SMT solver.
//!
//! A candidate is verified when the solver proves that it satisfies every
//! case of the recurrence on the whole domain. Satisfying assignments are
//! replayed through the recurrence evaluator before being reported as
//! counterexamples.

pub mod encode;
pub mod sexp;
pub mod smtlib;
pub mod solver;

use std::collections::BTreeMap;

use num_bigint::BigInt;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::closed_form::ClosedForm;
use crate::expr::{serde_rational, CmpOp, Constraint, Expr, Rational};
use crate::recurrence::{EvalContext, EvalLimits, EvalOutcome, RecurrenceDef, RecurrenceError};
use crate::subst::{DomainChecker, EntailmentError};

pub use encode::{encode, EncodeError, EncodedFormula, Implication};
pub use smtlib::supported_smt;
pub use solver::{BackendRegistry, SmtBackend, Solver, SolverAnswer, SolverConfig, SolverError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UnknownReason {
    ResidualCall,
    UnsupportedOperator,
    SolverTimeout,
    SolverUnknown,
    /// The precondition is not covered by the guards or by the candidate.
    UncoveredDomain,
    /// The solver found a violation that the evaluator could not reproduce.
    UnconfirmedCounterexample,
    /// Evaluating the recurrence near the origin exceeded the limits; the
    /// solver's answer would only establish partial correctness.
    LikelyNonterminating,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counterexample {
    #[serde(with = "serde_rational::pairs")]
    pub input: Vec<(String, Rational)>,
    /// Value computed by evaluating the recurrence.
    #[serde(with = "serde_rational")]
    pub expected: Rational,
    /// Value of the candidate.
    #[serde(with = "serde_rational")]
    pub actual: Rational,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum CheckVerdict {
    Verified,
    Refuted { counterexample: Counterexample },
    Unknown { reason: UnknownReason, detail: String },
}

impl CheckVerdict {
    fn unknown(reason: UnknownReason, detail: impl Into<String>) -> Self {
        CheckVerdict::Unknown { reason, detail: detail.into() }
    }

    pub fn is_verified(&self) -> bool {
        matches!(self, CheckVerdict::Verified)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CheckError {
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Entailment(#[from] EntailmentError),
    #[error("candidate has arguments {found:?}, recurrence has {expected:?}")]
    ArgumentMismatch { expected: Vec<String>, found: Vec<String> },
}

impl DomainChecker for Solver {
    /// Proves `hypothesis ⊨ conclusion` by refuting `hypothesis ∧ ¬conclusion`.
    /// Anything short of `unsat` counts as not entailed.
    fn entails(&self, hypothesis: &Constraint, conclusion: &Constraint) -> Result<bool, EntailmentError> {
        let mut vars = hypothesis.free_vars();
        vars.extend(conclusion.free_vars());
        let vars: Vec<String> = vars.into_iter().collect();
        let mut positive = |path: &[Constraint], d: &Expr| {
            let mut h = vec![hypothesis.clone()];
            h.extend(path.iter().cloned());
            let goal = Constraint::cmp(CmpOp::Gt, d.clone(), Expr::int(0));
            self.entails(&Constraint::and(h), &goal).unwrap_or(false)
        };
        let mut lowering = smtlib::Lowering::new(&mut positive);
        let (Ok(h), Ok(c)) = (lowering.constraint(hypothesis), lowering.constraint(conclusion)) else {
            return Ok(false);
        };
        let script = smtlib::script(self.logic(), false, &vars, &[h, smtlib::not(c)]);
        match self.run("entails", &script) {
            Ok(SolverAnswer::Unsat) => Ok(true),
            Ok(_) => Ok(false),
            Err(e) => Err(EntailmentError(e.to_string())),
        }
    }
}

/// Decides whether `fhat` solves `def` on its whole domain.
pub fn check_solution(
    def: &RecurrenceDef,
    fhat: &ClosedForm,
    solver: &Solver,
    limits: EvalLimits,
) -> Result<CheckVerdict, CheckError> {
    if fhat.args != def.args {
        return Err(CheckError::ArgumentMismatch { expected: def.args.clone(), found: fhat.args.clone() });
    }
    match def.check_coverage(solver) {
        Ok(()) => {}
        Err(RecurrenceError::Entailment(e)) => return Err(e.into()),
        Err(_) => return Ok(CheckVerdict::unknown(UnknownReason::UncoveredDomain, "guards do not cover pre")),
    }
    if !solver.entails(&def.pre, &fhat.coverage())? {
        return Ok(CheckVerdict::unknown(UnknownReason::UncoveredDomain, "candidate pieces do not cover pre"));
    }
    if let Some(detail) = termination_probe(def, limits) {
        return Ok(CheckVerdict::unknown(UnknownReason::LikelyNonterminating, detail));
    }
    let formula = match encode(def, fhat, solver) {
        Ok(f) => f,
        Err(EncodeError::ResidualCall { case, call }) => {
            return Ok(CheckVerdict::unknown(
                UnknownReason::ResidualCall,
                format!("case {case} still calls `{call}`"),
            ))
        }
        Err(EncodeError::UnsupportedOperator(detail)) => {
            return Ok(CheckVerdict::unknown(UnknownReason::UnsupportedOperator, detail))
        }
        Err(EncodeError::ArgumentMismatch { expected, found }) => {
            return Err(CheckError::ArgumentMismatch { expected, found })
        }
        Err(EncodeError::Entailment(e)) => return Err(e.into()),
    };
    let script = formula.to_script(solver.logic(), solver.produce_models());
    Ok(match solver.run(&format!("check-{}", def.name), &script)? {
        SolverAnswer::Unsat => CheckVerdict::Verified,
        SolverAnswer::Unknown => CheckVerdict::unknown(UnknownReason::SolverUnknown, "solver answered unknown"),
        SolverAnswer::Timeout => CheckVerdict::unknown(
            UnknownReason::SolverTimeout,
            format!("no answer within {} ms", solver.config().timeout_ms),
        ),
        SolverAnswer::Sat(model) => confirm(def, fhat, &model, limits),
    })
}

/// Number of domain points evaluated before checking.
const PROBE_POINTS: usize = 25;
/// Largest coordinate magnitude and number of candidates tried by the probe.
const PROBE_RADIUS: i64 = 8;
const PROBE_BUDGET: usize = 20_000;

/// Evaluates `def` on the domain points closest to the origin and describes
/// the first one whose evaluation exceeds `limits`.
pub fn termination_probe(def: &RecurrenceDef, limits: EvalLimits) -> Option<String> {
    let mut ctx = EvalContext::new(def, limits);
    let (mut found, mut tried) = (0, 0);
    for r in 0..=PROBE_RADIUS {
        let mut point = vec![-r; def.arity()];
        loop {
            if point.iter().any(|v| v.abs() == r) {
                tried += 1;
                let input: Vec<Rational> = point.iter().map(|v| Rational::from_integer((*v).into())).collect();
                if matches!(def.input_in_domain(&input), Ok(true)) {
                    found += 1;
                    if let Ok(EvalOutcome::LimitExceeded(kind)) = ctx.eval(&input) {
                        return Some(format!("evaluation at {} exceeded the {kind} limit", describe(&def.args, &input)));
                    }
                }
                if found >= PROBE_POINTS || tried >= PROBE_BUDGET {
                    return None;
                }
            }
            let Some(i) = point.iter().position(|v| *v < r) else { break };
            point[i] += 1;
            point[..i].iter_mut().for_each(|v| *v = -r);
        }
    }
    None
}

/// Replays a solver model through the evaluator. The violated case may
/// leave `f̂` correct at the model point itself, so every input visited
/// while evaluating it is compared as well.
pub fn confirm(
    def: &RecurrenceDef,
    fhat: &ClosedForm,
    model: &BTreeMap<String, BigInt>,
    limits: EvalLimits,
) -> CheckVerdict {
    let input: Vec<Rational> =
        def.args.iter().map(|a| Rational::from_integer(model.get(a).cloned().unwrap_or_default())).collect();
    let shown = describe(&def.args, &input);
    if !matches!(def.input_in_domain(&input), Ok(true)) {
        return CheckVerdict::unknown(UnknownReason::UnconfirmedCounterexample, format!("{shown} is outside pre"));
    }
    let mut ctx = EvalContext::new(def, limits);
    match ctx.eval(&input) {
        Ok(EvalOutcome::Value(_)) => {}
        Ok(other) => {
            return CheckVerdict::unknown(
                UnknownReason::UnconfirmedCounterexample,
                format!("evaluating at {shown}: {other:?}"),
            )
        }
        Err(e) => {
            return CheckVerdict::unknown(UnknownReason::UnconfirmedCounterexample, format!("evaluating at {shown}: {e}"))
        }
    }
    let mut visited: Vec<(&Vec<Rational>, &Rational)> = ctx.visited().collect();
    visited.sort();
    // The model point first, then everything it depends on.
    visited.sort_by_key(|(point, _)| **point != input);
    for (point, expected) in visited {
        if let Ok(actual) = fhat.eval(point) {
            if &actual != expected {
                return CheckVerdict::Refuted {
                    counterexample: Counterexample {
                        input: def.args.iter().cloned().zip(point.iter().cloned()).collect(),
                        expected: expected.clone(),
                        actual,
                    },
                };
            }
        }
    }
    CheckVerdict::unknown(
        UnknownReason::UnconfirmedCounterexample,
        format!("candidate agrees with the recurrence around {shown}"),
    )
}

fn describe(args: &[String], input: &[Rational]) -> String {
    let parts: Vec<String> = args.iter().zip(input).map(|(a, v)| format!("{a} = {v}")).collect();
    parts.join(", ")
}
