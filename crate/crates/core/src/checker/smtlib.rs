//! Translation of expressions and constraints to SMT-LIB2 integer terms.
//!
//! An expression `e` is lowered to a pair `(A, D)` of integer terms with
//! `e = A / D` and `D > 0`, so comparisons and equations can be multiplied
//! through by `D`. `D` is a positive constant times divisors that are known
//! to be positive on the current path.

use std::fmt;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::expr::{CmpOp, Constraint, Env, Expr};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Term {
    Int(BigInt),
    Bool(bool),
    Var(String),
    App(&'static str, Vec<Term>),
}

const RESERVED: &[&str] = &[
    "div", "mod", "abs", "ite", "and", "or", "not", "true", "false", "let", "forall", "exists", "distinct", "as",
    "par", "assert",
];

/// `name` as an SMT-LIB symbol, quoted when it would clash with a keyword.
pub fn symbol(name: &str) -> String {
    if RESERVED.contains(&name) {
        format!("|{name}|")
    } else {
        name.to_string()
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Int(n) if n.is_negative() => write!(f, "(- {})", -n),
            Term::Int(n) => write!(f, "{n}"),
            Term::Bool(b) => write!(f, "{b}"),
            Term::Var(v) => f.write_str(&symbol(v)),
            Term::App(op, args) => {
                write!(f, "({op}")?;
                for a in args {
                    write!(f, " {a}")?;
                }
                write!(f, ")")
            }
        }
    }
}

fn int(n: impl Into<BigInt>) -> Term {
    Term::Int(n.into())
}

fn app(op: &'static str, args: Vec<Term>) -> Term {
    Term::App(op, args)
}

fn is_int(t: &Term, v: i64) -> bool {
    matches!(t, Term::Int(n) if *n == BigInt::from(v))
}

fn add(a: Term, b: Term) -> Term {
    if is_int(&a, 0) {
        return b;
    }
    if is_int(&b, 0) {
        return a;
    }
    match (a, b) {
        (Term::Int(x), Term::Int(y)) => Term::Int(x + y),
        (Term::App("+", mut xs), b) => {
            xs.push(b);
            app("+", xs)
        }
        (a, b) => app("+", vec![a, b]),
    }
}

fn neg(a: Term) -> Term {
    match a {
        Term::Int(x) => Term::Int(-x),
        Term::App("-", mut xs) if xs.len() == 1 => xs.pop().expect("one operand"),
        a => app("-", vec![a]),
    }
}

fn sub(a: Term, b: Term) -> Term {
    if is_int(&b, 0) {
        return a;
    }
    match (a, b) {
        (Term::Int(x), Term::Int(y)) => Term::Int(x - y),
        (a, b) if is_int(&a, 0) => neg(b),
        (a, b) => app("-", vec![a, b]),
    }
}

fn mul(a: Term, b: Term) -> Term {
    if is_int(&a, 0) || is_int(&b, 0) {
        return int(0);
    }
    if is_int(&a, 1) {
        return b;
    }
    if is_int(&b, 1) {
        return a;
    }
    match (a, b) {
        (Term::Int(x), Term::Int(y)) => Term::Int(x * y),
        (a, b) => app("*", vec![a, b]),
    }
}

fn scale(a: Term, k: &BigInt) -> Term {
    mul(Term::Int(k.clone()), a)
}

/// A positive denominator: a constant times positive integer terms.
#[derive(Debug, Clone, PartialEq)]
struct Den {
    k: BigInt,
    factors: Vec<Term>,
}

impl Den {
    fn one() -> Den {
        Den { k: BigInt::one(), factors: Vec::new() }
    }

    fn constant(k: BigInt) -> Den {
        Den { k, factors: Vec::new() }
    }

    fn is_one(&self) -> bool {
        self.k.is_one() && self.factors.is_empty()
    }

    fn term(&self) -> Term {
        self.factors.iter().cloned().fold(int(self.k.clone()), mul)
    }

    fn times(&self, other: &Den) -> Den {
        let mut factors = self.factors.clone();
        factors.extend(other.factors.iter().cloned());
        Den { k: &self.k * &other.k, factors }
    }
}

/// `A / D` with `D > 0`.
#[derive(Debug, Clone, PartialEq)]
struct Frac {
    num: Term,
    den: Den,
}

impl Frac {
    fn whole(num: Term) -> Frac {
        Frac { num, den: Den::one() }
    }

    /// Rewrites both fractions over a common denominator.
    fn common(a: Frac, b: Frac) -> (Term, Term, Den) {
        if a.den.factors == b.den.factors {
            let l = a.den.k.lcm(&b.den.k);
            let sa = &l / &a.den.k;
            let sb = &l / &b.den.k;
            let den = Den { k: l, factors: a.den.factors };
            (scale(a.num, &sa), scale(b.num, &sb), den)
        } else {
            let den = a.den.times(&b.den);
            (mul(a.num, b.den.term()), mul(b.num, a.den.term()), den)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Unsupported(pub String);

/// Decides whether a divisor is positive under the path conditions.
pub type PositivityOracle<'a> = dyn FnMut(&[Constraint], &Expr) -> bool + 'a;

/// Largest constant exponent expanded into repeated multiplication.
const MAX_EXPANDED_POWER: u32 = 16;

pub struct Lowering<'o, 'a> {
    oracle: &'o mut PositivityOracle<'a>,
    path: Vec<Constraint>,
}

impl<'o, 'a> Lowering<'o, 'a> {
    pub fn new(oracle: &'o mut PositivityOracle<'a>) -> Self {
        Lowering { oracle, path: Vec::new() }
    }

    fn closed(&self, e: &Expr) -> Result<Frac, Unsupported> {
        let v = e.eval(&Env::new()).map_err(|err| Unsupported(format!("`{e}`: {err}")))?;
        Ok(Frac { num: Term::Int(v.numer().clone()), den: Den::constant(v.denom().clone()) })
    }

    fn expr(&mut self, e: &Expr) -> Result<Frac, Unsupported> {
        if e.is_closed() {
            return self.closed(e);
        }
        Ok(match e {
            Expr::Const(_) => unreachable!("constants are closed"),
            Expr::Var(v) => Frac::whole(Term::Var(v.clone())),
            Expr::Add(l, r) => {
                let (a, b, den) = Frac::common(self.expr(l)?, self.expr(r)?);
                Frac { num: add(a, b), den }
            }
            Expr::Sub(l, r) => {
                let (a, b, den) = Frac::common(self.expr(l)?, self.expr(r)?);
                Frac { num: sub(a, b), den }
            }
            Expr::Mul(l, r) => {
                let (a, b) = (self.expr(l)?, self.expr(r)?);
                Frac { num: mul(a.num, b.num), den: a.den.times(&b.den) }
            }
            Expr::Div(l, r) => {
                let a = self.expr(l)?;
                if r.is_closed() {
                    let c = self.closed(r)?;
                    let Term::Int(p) = c.num else { unreachable!("closed values are integers") };
                    if p.is_zero() {
                        return Err(Unsupported(format!("division by zero in `{e}`")));
                    }
                    // a/(p/q) = a·q/p, keeping the denominator positive.
                    let num = scale(a.num, &(c.den.k * p.signum()));
                    return Ok(Frac { num, den: a.den.times(&Den::constant(p.abs())) });
                }
                if !(self.oracle)(&self.path, r) {
                    return Err(Unsupported(format!("divisor `{r}` is not provably positive")));
                }
                let b = self.expr(r)?;
                let den = a.den.times(&Den { k: BigInt::one(), factors: vec![b.num] });
                Frac { num: mul(a.num, b.den.term()), den }
            }
            Expr::Pow(base, exponent) => {
                if !exponent.is_closed() {
                    return Err(Unsupported(format!("variable exponent in `{e}`")));
                }
                let k = exponent
                    .eval(&Env::new())
                    .ok()
                    .filter(|k| k.is_integer() && !k.is_negative())
                    .and_then(|k| k.to_integer().to_u32())
                    .filter(|k| *k <= MAX_EXPANDED_POWER)
                    .ok_or_else(|| Unsupported(format!("exponent in `{e}` is not a small natural number")))?;
                let b = self.expr(base)?;
                let mut acc = Frac::whole(int(1));
                for _ in 0..k {
                    acc = Frac { num: mul(acc.num, b.num.clone()), den: acc.den.times(&b.den) };
                }
                acc
            }
            Expr::Floor(a) => {
                let a = self.expr(a)?;
                if a.den.is_one() {
                    a
                } else {
                    Frac::whole(app("div", vec![a.num, a.den.term()]))
                }
            }
            Expr::Ceil(a) => {
                let a = self.expr(a)?;
                if a.den.is_one() {
                    a
                } else {
                    Frac::whole(neg(app("div", vec![neg(a.num), a.den.term()])))
                }
            }
            Expr::Log2Ceil(_) => return Err(Unsupported(format!("logarithm of a variable in `{e}`"))),
            Expr::Max(l, r) | Expr::Min(l, r) => {
                let (a, b, den) = Frac::common(self.expr(l)?, self.expr(r)?);
                let op = if matches!(e, Expr::Max(..)) { ">=" } else { "<=" };
                let cond = app(op, vec![a.clone(), b.clone()]);
                Frac { num: app("ite", vec![cond, a, b]), den }
            }
            Expr::Ite(c, t, f) => {
                let cond = self.constraint(c)?;
                self.path.push((**c).clone());
                let then = self.expr(t);
                self.path.pop();
                self.path.push(Constraint::not((**c).clone()));
                let otherwise = self.expr(f);
                self.path.pop();
                let (a, b, den) = Frac::common(then?, otherwise?);
                Frac { num: app("ite", vec![cond, a, b]), den }
            }
            Expr::Call(name, _) => return Err(Unsupported(format!("call to `{name}`"))),
        })
    }

    /// `e = 0`, multiplied through by the denominator.
    pub fn zero_equation(&mut self, e: &Expr) -> Result<Term, Unsupported> {
        let f = self.expr(e)?;
        Ok(app("=", vec![f.num, int(0)]))
    }

    pub fn constraint(&mut self, c: &Constraint) -> Result<Term, Unsupported> {
        Ok(match c {
            Constraint::Bool(b) => Term::Bool(*b),
            Constraint::Cmp(op, l, r) => {
                let diff = Expr::Sub(Box::new(l.clone()), Box::new(r.clone()));
                let a = self.expr(&diff)?.num;
                let zero = int(0);
                match op {
                    CmpOp::Eq => app("=", vec![a, zero]),
                    CmpOp::Ne => app("not", vec![app("=", vec![a, zero])]),
                    CmpOp::Lt => app("<", vec![a, zero]),
                    CmpOp::Le => app("<=", vec![a, zero]),
                    CmpOp::Gt => app(">", vec![a, zero]),
                    CmpOp::Ge => app(">=", vec![a, zero]),
                }
            }
            Constraint::And(parts) => {
                let mut terms = Vec::with_capacity(parts.len());
                for p in parts {
                    terms.push(self.constraint(p)?);
                }
                match terms.len() {
                    0 => Term::Bool(true),
                    1 => terms.pop().expect("one term"),
                    _ => app("and", terms),
                }
            }
            Constraint::Or(parts) => {
                let mut terms = Vec::with_capacity(parts.len());
                for p in parts {
                    terms.push(self.constraint(p)?);
                }
                match terms.len() {
                    0 => Term::Bool(false),
                    1 => terms.pop().expect("one term"),
                    _ => app("or", terms),
                }
            }
            Constraint::Not(inner) => app("not", vec![self.constraint(inner)?]),
        })
    }
}

/// Structural membership in the supported fragment, assuming every
/// divisor is positive.
pub fn supported_smt(e: &Expr) -> bool {
    let mut yes = |_: &[Constraint], _: &Expr| true;
    Lowering::new(&mut yes).expr(e).is_ok()
}

pub fn implies(a: Term, b: Term) -> Term {
    app("=>", vec![a, b])
}

pub fn and(terms: Vec<Term>) -> Term {
    app("and", terms)
}

pub fn not(t: Term) -> Term {
    app("not", vec![t])
}

/// A complete one-shot script asserting `assertions`.
pub fn script(logic: &str, produce_models: bool, vars: &[String], assertions: &[Term]) -> String {
    let mut s = String::new();
    if produce_models {
        s.push_str("(set-option :produce-models true)\n");
    }
    s.push_str(&format!("(set-logic {logic})\n"));
    for v in vars {
        s.push_str(&format!("(declare-fun {} () Int)\n", symbol(v)));
    }
    for a in assertions {
        s.push_str(&format!("(assert {a})\n"));
    }
    s.push_str("(check-sat)\n");
    if produce_models {
        s.push_str("(get-model)\n");
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::{parse_constraint, parse_expr};

    fn lower(text: &str) -> String {
        let mut yes = |_: &[Constraint], _: &Expr| true;
        let e = parse_expr(text).unwrap();
        Lowering::new(&mut yes).zero_equation(&e).unwrap().to_string()
    }

    #[test]
    fn clears_rational_coefficients() {
        assert_eq!(lower("x + y^2/2 + 3*y/2 - 1"), "(= (- (+ (* 2 x) (* y y) (* 3 y)) 2) 0)");
        assert_eq!(lower("x/(-3)"), "(= (* (- 1) x) 0)");
    }

    #[test]
    fn floor_ceil_max_min() {
        assert_eq!(lower("floor(x/y)"), "(= (div x y) 0)");
        assert_eq!(lower("ceil(x/y)"), "(= (- (div (- x) y)) 0)");
        assert_eq!(lower("floor(x/2)"), "(= (div x 2) 0)");
        assert_eq!(lower("max(x, y)"), "(= (ite (>= x y) x y) 0)");
        assert_eq!(lower("min(x/2, y)"), "(= (ite (<= x (* 2 y)) x (* 2 y)) 0)");
        assert_eq!(lower("floor(x + 1)"), "(= (+ x 1) 0)");
        assert_eq!(lower("2^3 * x"), "(= (* 8 x) 0)");
    }

    #[test]
    fn unsupported_fragment() {
        assert!(!supported_smt(&parse_expr("2^x").unwrap()));
        assert!(!supported_smt(&parse_expr("log2ceil(x)").unwrap()));
        assert!(!supported_smt(&parse_expr("x^(1/2)").unwrap()));
        assert!(!supported_smt(&parse_expr("f(x)").unwrap()));
        assert!(supported_smt(&parse_expr("x + y - 1").unwrap()));
        assert!(supported_smt(&parse_expr("max(x, y)").unwrap()));
        assert!(supported_smt(&parse_expr("log2ceil(8) * x").unwrap()));
    }

    #[test]
    fn divisor_positivity_is_required() {
        let mut no = |_: &[Constraint], _: &Expr| false;
        let e = parse_expr("floor(x/y)").unwrap();
        assert!(Lowering::new(&mut no).zero_equation(&e).is_err());
    }

    #[test]
    fn ite_branches_see_their_condition() {
        let mut seen = Vec::new();
        let mut record = |path: &[Constraint], d: &Expr| {
            seen.push((path.to_vec(), d.clone()));
            true
        };
        let e = parse_expr("ite(y > 0, floor(x/y), 0)").unwrap();
        Lowering::new(&mut record).zero_equation(&e).unwrap();
        assert_eq!(seen, vec![(vec![parse_constraint("y > 0").unwrap()], Expr::var("y"))]);
    }

    #[test]
    fn constraints_and_script() {
        let mut yes = |_: &[Constraint], _: &Expr| true;
        let c = parse_constraint("x >= 0 && !(y = 1/2)").unwrap();
        let t = Lowering::new(&mut yes).constraint(&c).unwrap();
        assert_eq!(t.to_string(), "(and (>= x 0) (not (= (- (* 2 y) 1) 0)))");
        let s = script("QF_NIA", true, &["x".into(), "div".into()], &[t]);
        assert!(s.starts_with("(set-option :produce-models true)\n(set-logic QF_NIA)\n(declare-fun x () Int)\n(declare-fun |div| () Int)\n"));
        assert!(s.ends_with("(check-sat)\n(get-model)\n"));
    }
}
