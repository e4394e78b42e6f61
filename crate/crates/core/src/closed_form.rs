//! Piecewise closed-form candidates.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{CmpOp, Constraint, Env, Expr, ExprError, Rational};
use crate::parser::{parse_pieces, SyntaxError};
use crate::simplify::{simplify, simplify_constraint};
use crate::subst::{DomainChecker, EntailmentError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Regression,
    UserSupplied,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Piece {
    pub expr: Expr,
    pub guard: Constraint,
}

/// A call-free, first-match piecewise function over the recurrence arguments.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedForm {
    pub args: Vec<String>,
    pub pre: Constraint,
    pub pieces: Vec<Piece>,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ClosedFormError {
    #[error("no piece matches input {0:?}")]
    GuardFallthrough(Vec<String>),
    #[error("expected {expected} argument(s), got {got}")]
    Arity { expected: usize, got: usize },
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("closed form contains a call to `{0}`")]
    ContainsCall(String),
    #[error("variable `{0}` is not an argument")]
    UnknownVariable(String),
    #[error(transparent)]
    Syntax(#[from] SyntaxError),
}

impl ClosedForm {
    pub fn single(args: Vec<String>, pre: Constraint, expr: Expr, provenance: Provenance) -> ClosedForm {
        ClosedForm {
            args,
            pre,
            pieces: vec![Piece { expr, guard: Constraint::Bool(true) }],
            provenance,
        }
    }

    pub fn new(
        args: Vec<String>,
        pre: Constraint,
        pieces: Vec<Piece>,
        provenance: Provenance,
    ) -> Result<ClosedForm, ClosedFormError> {
        for p in &pieces {
            let mut call = None;
            p.expr.visit(&mut |e| {
                if let Expr::Call(name, _) = e {
                    call.get_or_insert_with(|| name.clone());
                }
            });
            if let Some(name) = call {
                return Err(ClosedFormError::ContainsCall(name));
            }
            for v in p.expr.free_vars().into_iter().chain(p.guard.free_vars()) {
                if !args.contains(&v) {
                    return Err(ClosedFormError::UnknownVariable(v));
                }
            }
        }
        Ok(ClosedForm { args, pre, pieces, provenance })
    }

    /// Parses `expr` or `expr if guard; expr if guard; ...`.
    pub fn parse(text: &str, args: &[String], pre: &Constraint) -> Result<ClosedForm, ClosedFormError> {
        let pieces = parse_pieces(text)?
            .into_iter()
            .map(|(expr, guard)| Piece { expr, guard })
            .collect();
        ClosedForm::new(args.to_vec(), pre.clone(), pieces, Provenance::UserSupplied)
    }

    pub fn is_single(&self) -> bool {
        self.pieces.len() == 1 && self.pieces[0].guard == Constraint::Bool(true)
    }

    pub fn eval(&self, input: &[Rational]) -> Result<Rational, ClosedFormError> {
        if input.len() != self.args.len() {
            return Err(ClosedFormError::Arity { expected: self.args.len(), got: input.len() });
        }
        let env = Env::bind(&self.args, input);
        for p in &self.pieces {
            if p.guard.eval(&env)? {
                return Ok(p.expr.eval(&env)?);
            }
        }
        Err(ClosedFormError::GuardFallthrough(input.iter().map(|v| v.to_string()).collect()))
    }

    /// The closed form applied to argument expressions. Piecewise forms
    /// become nested conditionals; the last piece is the fallback branch.
    pub fn instantiate(&self, actuals: &[Expr]) -> Expr {
        let bindings: BTreeMap<String, Expr> =
            self.args.iter().cloned().zip(actuals.iter().cloned()).collect();
        let mut pieces = self.pieces.iter().rev();
        let last = pieces.next().expect("closed form without pieces");
        let mut acc = last.expr.substitute(&bindings);
        for p in pieces {
            acc = Expr::ite(p.guard.substitute(&bindings), p.expr.substitute(&bindings), acc);
        }
        acc
    }

    /// Union of all piece guards; the region where `eval` is defined.
    pub fn coverage(&self) -> Constraint {
        Constraint::or(self.pieces.iter().map(|p| p.guard.clone()).collect())
    }

    /// Simplifies every piece and merges adjacent pieces with the same body.
    pub fn normalized(&self) -> ClosedForm {
        let mut pieces: Vec<Piece> = Vec::new();
        for p in &self.pieces {
            let expr = simplify(&p.expr);
            let guard = simplify_constraint(&p.guard);
            if guard == Constraint::Bool(false) {
                continue;
            }
            match pieces.last_mut() {
                Some(prev) if prev.expr == expr => {
                    prev.guard = simplify_constraint(&Constraint::or(vec![prev.guard.clone(), guard]));
                }
                _ => pieces.push(Piece { expr, guard }),
            }
        }
        ClosedForm { pieces, ..self.clone() }
    }

    /// Drops pieces whose body provably equals the body of another piece on
    /// the piece's own region, so that e.g. a base case `0 if x = 0` is
    /// absorbed by a general solution `x`. Uses `checker` for the proof.
    pub fn absorb_pieces(&self, checker: &dyn DomainChecker) -> Result<ClosedForm, EntailmentError> {
        let current = self.normalized();
        if current.is_single() || !checker.entails(&current.pre, &current.coverage())? {
            return Ok(current);
        }
        for general in &current.pieces {
            let mut agrees = true;
            for (i, p) in current.pieces.iter().enumerate() {
                if p.expr == general.expr {
                    continue;
                }
                let region = Constraint::and(vec![current.pre.clone(), current.first_match_region(i)]);
                let same = Constraint::Cmp(CmpOp::Eq, p.expr.clone(), general.expr.clone());
                if !checker.entails(&region, &same)? {
                    agrees = false;
                    break;
                }
            }
            if agrees {
                let pieces = vec![Piece { expr: general.expr.clone(), guard: Constraint::Bool(true) }];
                return Ok(ClosedForm { pieces, ..current.clone() });
            }
        }
        Ok(current)
    }

    /// Region where piece `i` is the first match.
    pub fn first_match_region(&self, i: usize) -> Constraint {
        let mut parts: Vec<Constraint> = self.pieces[..i]
            .iter()
            .map(|p| Constraint::not(p.guard.clone()))
            .collect();
        parts.push(self.pieces[i].guard.clone());
        Constraint::and(parts)
    }

    pub fn contains_variable_exponent(&self) -> bool {
        self.pieces.iter().any(|p| {
            let mut found = false;
            p.expr.visit(&mut |e| {
                if let Expr::Pow(_, exp) = e {
                    if !exp.is_closed() {
                        found = true;
                    }
                }
            });
            found
        })
    }
}

impl fmt::Display for ClosedForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_single() {
            return write!(f, "{}", self.pieces[0].expr);
        }
        for (i, p) in self.pieces.iter().enumerate() {
            if i > 0 {
                write!(f, "; ")?;
            }
            write!(f, "{} if {}", p.expr, p.guard)?;
        }
        Ok(())
    }
}

pub fn eval_closed_form(cf: &ClosedForm, input: &[Rational]) -> Result<Rational, ClosedFormError> {
    cf.eval(input)
}
