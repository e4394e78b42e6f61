//! Replacing recursive calls by a candidate closed form.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::closed_form::ClosedForm;
use crate::expr::{rat, Constraint, Env, Expr};
use crate::simplify::simplify;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("entailment query failed: {0}")]
pub struct EntailmentError(pub String);

/// Decides entailment between call-free constraints over integer variables.
pub trait DomainChecker {
    /// `Ok(true)` only when `hypothesis ⊨ conclusion` has been established.
    fn entails(&self, hypothesis: &Constraint, conclusion: &Constraint) -> Result<bool, EntailmentError>;
}

/// Brute-force entailment over a bounded integer box.
///
/// Only sound for domains that fit in the box, so it is meant for tests and
/// for offline experiments without an SMT solver.
#[derive(Debug, Clone)]
pub struct BoundedEnumeration {
    pub lo: i64,
    pub hi: i64,
}

impl DomainChecker for BoundedEnumeration {
    fn entails(&self, hypothesis: &Constraint, conclusion: &Constraint) -> Result<bool, EntailmentError> {
        let mut vars: Vec<String> = hypothesis.free_vars().into_iter().collect();
        for v in conclusion.free_vars() {
            if !vars.contains(&v) {
                vars.push(v);
            }
        }
        let mut point = vec![self.lo; vars.len()];
        loop {
            let mut env = Env::new();
            for (name, value) in vars.iter().zip(&point) {
                env.insert(name, rat(*value));
            }
            // Points where either side is undefined are skipped.
            if let (Ok(true), Ok(false)) = (hypothesis.eval(&env), conclusion.eval(&env)) {
                return Ok(false);
            }
            let mut i = 0;
            loop {
                if i == point.len() {
                    return Ok(true);
                }
                if point[i] < self.hi {
                    point[i] += 1;
                    break;
                }
                point[i] = self.lo;
                i += 1;
            }
        }
    }
}

/// Replaces calls to `fname` by `fhat`, innermost first.
///
/// A call `fname(a)` is replaced only when `pre(x) ∧ guard(x) ⊨ pre(a)`, i.e.
/// the call lands inside the candidate's domain. Calls whose arguments still
/// contain unreplaced calls, or whose side condition cannot be established,
/// are left in place.
pub fn replace_calls(
    e: &Expr,
    fname: &str,
    fhat: &ClosedForm,
    pre: &Constraint,
    guard: &Constraint,
    checker: &dyn DomainChecker,
) -> Result<Expr, EntailmentError> {
    let hypothesis = Constraint::and(vec![pre.clone(), guard.clone()]);
    replace_inner(e, fname, fhat, pre, &hypothesis, checker)
}

fn replace_inner(
    e: &Expr,
    fname: &str,
    fhat: &ClosedForm,
    pre: &Constraint,
    hypothesis: &Constraint,
    checker: &dyn DomainChecker,
) -> Result<Expr, EntailmentError> {
    let go = |x: &Expr| replace_inner(x, fname, fhat, pre, hypothesis, checker);
    let bx = |x: Expr| Box::new(x);
    Ok(match e {
        Expr::Const(_) | Expr::Var(_) => e.clone(),
        Expr::Call(name, args) => {
            let mut new_args = Vec::with_capacity(args.len());
            for a in args {
                new_args.push(go(a)?);
            }
            if name != fname || new_args.iter().any(|a| a.contains_calls(fname)) {
                return Ok(Expr::Call(name.clone(), new_args));
            }
            let new_args: Vec<Expr> = new_args.iter().map(simplify).collect();
            let bindings: BTreeMap<String, Expr> =
                fhat.args.iter().cloned().zip(new_args.iter().cloned()).collect();
            let in_domain = pre.substitute(&bindings);
            if checker.entails(hypothesis, &in_domain)? {
                fhat.instantiate(&new_args)
            } else {
                Expr::Call(name.clone(), new_args)
            }
        }
        Expr::Add(l, r) => Expr::Add(bx(go(l)?), bx(go(r)?)),
        Expr::Sub(l, r) => Expr::Sub(bx(go(l)?), bx(go(r)?)),
        Expr::Mul(l, r) => Expr::Mul(bx(go(l)?), bx(go(r)?)),
        Expr::Div(l, r) => Expr::Div(bx(go(l)?), bx(go(r)?)),
        Expr::Pow(l, r) => Expr::Pow(bx(go(l)?), bx(go(r)?)),
        Expr::Max(l, r) => Expr::Max(bx(go(l)?), bx(go(r)?)),
        Expr::Min(l, r) => Expr::Min(bx(go(l)?), bx(go(r)?)),
        Expr::Floor(a) => Expr::Floor(bx(go(a)?)),
        Expr::Ceil(a) => Expr::Ceil(bx(go(a)?)),
        Expr::Log2Ceil(a) => Expr::Log2Ceil(bx(go(a)?)),
        Expr::Ite(c, t, f) => Expr::Ite(c.clone(), bx(go(t)?), bx(go(f)?)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closed_form::{ClosedForm, Provenance};
    use crate::expr::{rat, Env};
    use crate::parser::{parse_constraint, parse_expr};
    use crate::simplify::simplify;

    fn grid() -> BoundedEnumeration {
        BoundedEnumeration { lo: -5, hi: 25 }
    }

    fn cf(args: &[&str], pre: &str, text: &str) -> ClosedForm {
        ClosedForm::single(
            args.iter().map(|s| s.to_string()).collect(),
            parse_constraint(pre).unwrap(),
            parse_expr(text).unwrap(),
            Provenance::UserSupplied,
        )
    }

    #[test]
    fn nested_calls_resolve_innermost_first() {
        let fhat = cf(&["x"], "x >= 0", "x");
        let e = parse_expr("f(f(x-1)) + 1").unwrap();
        let out = replace_calls(
            &e,
            "f",
            &fhat,
            &parse_constraint("x >= 0").unwrap(),
            &parse_constraint("x > 0").unwrap(),
            &grid(),
        )
        .unwrap();
        assert_eq!(out.to_string(), "x - 1 + 1");
        assert_eq!(simplify(&out).to_string(), "x");
    }

    #[test]
    fn call_free_expressions_are_untouched() {
        let fhat = cf(&["x"], "x >= 0", "x");
        let e = parse_expr("x + 1").unwrap();
        let pre = parse_constraint("x >= 0").unwrap();
        let out = replace_calls(&e, "f", &fhat, &pre, &Constraint::Bool(true), &grid()).unwrap();
        assert_eq!(out, e);
    }

    #[test]
    fn division_candidate_is_substituted() {
        let fhat = cf(&["x", "y"], "x >= 0 && y >= 0", "floor(x/y)");
        let e = parse_expr("f(x - y, y) + 1").unwrap();
        let out = replace_calls(
            &e,
            "f",
            &fhat,
            &parse_constraint("x >= 0 && y >= 0").unwrap(),
            &parse_constraint("x >= y && y > 0").unwrap(),
            &BoundedEnumeration { lo: -3, hi: 12 },
        )
        .unwrap();
        assert!(!out.contains_calls("f"));
        assert_eq!(out.eval(&Env::from_ints(&["x", "y"], &[7, 2])).unwrap(), rat(3));
    }

    #[test]
    fn calls_outside_the_domain_are_kept() {
        let fhat = cf(&["x"], "x >= 0", "x");
        let e = parse_expr("f(x - 2)").unwrap();
        let out = replace_calls(
            &e,
            "f",
            &fhat,
            &parse_constraint("x >= 0").unwrap(),
            &parse_constraint("x > 0").unwrap(),
            &grid(),
        )
        .unwrap();
        assert!(out.contains_calls("f"));
    }

    #[test]
    fn bounded_enumeration_entailment() {
        let g = grid();
        let pre = parse_constraint("x >= 0").unwrap();
        assert!(g.entails(&pre, &parse_constraint("x = 0 || x > 0").unwrap()).unwrap());
        assert!(!g.entails(&pre, &parse_constraint("x > 0").unwrap()).unwrap());
        let h = parse_constraint("x >= 0 && x > 0").unwrap();
        assert!(g.entails(&h, &parse_constraint("x - 1 >= 0").unwrap()).unwrap());
    }
}
