//! Building the verification condition for a candidate closed form.
//!
//! For every case `i` of the recurrence the condition states
//! `pre ∧ region_i ⟹ f̂(x) = body_i[f ↦ f̂]`, where `region_i` is the set of
//! inputs on which case `i` is the first guard to hold.

use std::cell::RefCell;

use thiserror::Error;

use super::smtlib::{self, Lowering, Term};
use crate::closed_form::ClosedForm;
use crate::expr::{CmpOp, Constraint, Expr};
use crate::recurrence::RecurrenceDef;
use crate::simplify::{simplify, simplify_constraint};
use crate::subst::{replace_calls, DomainChecker, EntailmentError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EncodeError {
    #[error("case {case} still calls `{call}` after substitution")]
    ResidualCall { case: usize, call: String },
    #[error("{0}")]
    UnsupportedOperator(String),
    #[error("candidate has arguments {found:?}, recurrence has {expected:?}")]
    ArgumentMismatch { expected: Vec<String>, found: Vec<String> },
    #[error(transparent)]
    Entailment(#[from] EntailmentError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Implication {
    pub case: usize,
    /// `pre ∧ region_i`.
    pub antecedent: Constraint,
    /// `f̂(x)`.
    pub lhs: Expr,
    /// The case body with recursive calls replaced by `f̂`.
    pub rhs: Expr,
    /// `antecedent ⟹ lhs = rhs` as an SMT-LIB term.
    pub term: Term,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncodedFormula {
    pub vars: Vec<String>,
    pub implications: Vec<Implication>,
}

impl EncodedFormula {
    /// A script that is satisfiable exactly when some implication fails.
    pub fn to_script(&self, logic: &str, produce_models: bool) -> String {
        let all = smtlib::and(self.implications.iter().map(|i| i.term.clone()).collect());
        smtlib::script(logic, produce_models, &self.vars, &[smtlib::not(all)])
    }
}

pub fn encode(def: &RecurrenceDef, fhat: &ClosedForm, checker: &dyn DomainChecker) -> Result<EncodedFormula, EncodeError> {
    if fhat.args != def.args {
        return Err(EncodeError::ArgumentMismatch { expected: def.args.clone(), found: fhat.args.clone() });
    }
    let vars: Vec<Expr> = def.args.iter().map(|a| Expr::var(a)).collect();
    let lhs = simplify(&fhat.instantiate(&vars));
    if !smtlib::supported_smt(&lhs) {
        let mut yes = |_: &[Constraint], _: &Expr| true;
        let reason = Lowering::new(&mut yes).zero_equation(&lhs).err().map(|u| u.0).unwrap_or_default();
        return Err(EncodeError::UnsupportedOperator(format!("candidate: {reason}")));
    }
    let mut implications = Vec::with_capacity(def.cases.len());
    for (i, case) in def.cases.iter().enumerate() {
        let region = def.first_match_region(i);
        let rhs = replace_calls(&case.body, &def.name, fhat, &def.pre, &region, checker)?;
        if let Some((call, _)) = rhs.called_functions().into_iter().next() {
            return Err(EncodeError::ResidualCall { case: i, call });
        }
        let rhs = simplify(&rhs);
        let antecedent = simplify_constraint(&Constraint::and(vec![def.pre.clone(), region]));
        let term = lower_implication(&antecedent, &lhs, &rhs, checker)
            .map_err(|e| match e {
                Lowered::Unsupported(message) => EncodeError::UnsupportedOperator(format!("case {i}: {message}")),
                Lowered::Entailment(e) => EncodeError::Entailment(e),
            })?;
        implications.push(Implication { case: i, antecedent, lhs: lhs.clone(), rhs, term });
    }
    Ok(EncodedFormula { vars: def.args.clone(), implications })
}

enum Lowered {
    Unsupported(String),
    Entailment(EntailmentError),
}

/// Lowers `antecedent ⟹ lhs = rhs`, proving each non-constant divisor
/// positive under the antecedent and the enclosing conditionals.
fn lower_implication(
    antecedent: &Constraint,
    lhs: &Expr,
    rhs: &Expr,
    checker: &dyn DomainChecker,
) -> Result<Term, Lowered> {
    let failure: RefCell<Option<EntailmentError>> = RefCell::new(None);
    let positive_under = |hypothesis: Vec<Constraint>, d: &Expr| {
        let goal = Constraint::cmp(CmpOp::Gt, d.clone(), Expr::int(0));
        match checker.entails(&Constraint::and(hypothesis), &goal) {
            Ok(yes) => yes,
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                false
            }
        }
    };
    let result = {
        let mut in_guard = |path: &[Constraint], d: &Expr| positive_under(path.to_vec(), d);
        let guard = Lowering::new(&mut in_guard).constraint(antecedent);
        let mut in_body = |path: &[Constraint], d: &Expr| {
            let mut hypothesis = vec![antecedent.clone()];
            hypothesis.extend(path.iter().cloned());
            positive_under(hypothesis, d)
        };
        let diff = Expr::Sub(Box::new(lhs.clone()), Box::new(rhs.clone()));
        let body = Lowering::new(&mut in_body).zero_equation(&diff);
        guard.and_then(|g| body.map(|b| smtlib::implies(g, b)))
    };
    if let Some(e) = failure.into_inner() {
        return Err(Lowered::Entailment(e));
    }
    result.map_err(|u| Lowered::Unsupported(u.0))
}
