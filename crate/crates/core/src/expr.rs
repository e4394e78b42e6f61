//! Symbolic expressions and constraints over exact rationals.
//!
//! Expressions are plain trees. Evaluation never touches floating point:
//! every value is a [`Rational`], and `floor`, `ceil` and `log2ceil` always
//! produce integers.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use thiserror::Error;

/// Exact rational number used for every value in the solver.
pub type Rational = BigRational;

/// Largest exponent magnitude accepted by `^` during evaluation.
pub const MAX_EXPONENT: u32 = 1 << 16;

pub fn rat(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

pub fn ratio(p: i64, q: i64) -> Rational {
    Rational::new(BigInt::from(p), BigInt::from(q))
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExprError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("unbound variable `{0}`")]
    UnboundVariable(String),
    #[error("unexpected call to `{0}` in a call-free context")]
    UnexpectedCall(String),
    #[error("exponent {0} is not an integer")]
    NonIntegerExponent(String),
    #[error("exponent {0} is out of range")]
    ExponentTooLarge(String),
    #[error("division by the literal constant zero")]
    LiteralZeroDivisor,
    #[error("power `{0}` has a variable exponent over a non-constant base")]
    GeneralPower(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Expr {
    Const(Rational),
    Var(String),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Floor(Box<Expr>),
    Ceil(Box<Expr>),
    Log2Ceil(Box<Expr>),
    Max(Box<Expr>, Box<Expr>),
    Min(Box<Expr>, Box<Expr>),
    Call(String, Vec<Expr>),
    /// Conditional term. Only produced when a piecewise closed form is
    /// inlined at a call site; the surface syntax has no way to write it.
    Ite(Box<Constraint>, Box<Expr>, Box<Expr>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    pub fn holds(self, lhs: &Rational, rhs: &Rational) -> bool {
        match self {
            CmpOp::Eq => lhs == rhs,
            CmpOp::Ne => lhs != rhs,
            CmpOp::Lt => lhs < rhs,
            CmpOp::Le => lhs <= rhs,
            CmpOp::Gt => lhs > rhs,
            CmpOp::Ge => lhs >= rhs,
        }
    }

    pub fn negate(self) -> CmpOp {
        match self {
            CmpOp::Eq => CmpOp::Ne,
            CmpOp::Ne => CmpOp::Eq,
            CmpOp::Lt => CmpOp::Ge,
            CmpOp::Le => CmpOp::Gt,
            CmpOp::Gt => CmpOp::Le,
            CmpOp::Ge => CmpOp::Lt,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "=",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }
}

/// Boolean combination of comparisons between expressions.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Constraint {
    Bool(bool),
    Cmp(CmpOp, Expr, Expr),
    And(Vec<Constraint>),
    Or(Vec<Constraint>),
    Not(Box<Constraint>),
}

/// Binding of variable names to exact values.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Env(BTreeMap<String, Rational>);

impl Env {
    pub fn new() -> Self {
        Env(BTreeMap::new())
    }

    /// Binds `names[i]` to `values[i]`.
    pub fn bind<S: AsRef<str>>(names: &[S], values: &[Rational]) -> Self {
        Env(names
            .iter()
            .zip(values)
            .map(|(n, v)| (n.as_ref().to_string(), v.clone()))
            .collect())
    }

    pub fn from_ints<S: AsRef<str>>(names: &[S], values: &[i64]) -> Self {
        let values: Vec<Rational> = values.iter().map(|v| rat(*v)).collect();
        Env::bind(names, &values)
    }

    pub fn with(mut self, name: &str, value: Rational) -> Self {
        self.0.insert(name.to_string(), value);
        self
    }

    pub fn insert(&mut self, name: &str, value: Rational) {
        self.0.insert(name.to_string(), value);
    }

    pub fn get(&self, name: &str) -> Option<&Rational> {
        self.0.get(name)
    }
}

/// Callback used to resolve `Call` nodes during evaluation.
pub type CallResolver<'a, E> = dyn FnMut(&str, &[Rational]) -> Result<Rational, E> + 'a;

fn b(e: Expr) -> Box<Expr> {
    Box::new(e)
}

impl Expr {
    pub fn int(n: i64) -> Expr {
        Expr::Const(rat(n))
    }

    pub fn constant(value: Rational) -> Expr {
        Expr::Const(value)
    }

    pub fn var(name: &str) -> Expr {
        Expr::Var(name.to_string())
    }

    pub fn call(name: &str, args: Vec<Expr>) -> Expr {
        Expr::Call(name.to_string(), args)
    }

    /// Division; rejects a literal zero denominator.
    pub fn div(lhs: Expr, rhs: Expr) -> Result<Expr, ExprError> {
        if matches!(&rhs, Expr::Const(c) if c.is_zero()) {
            return Err(ExprError::LiteralZeroDivisor);
        }
        Ok(Expr::Div(b(lhs), b(rhs)))
    }

    /// Power; a non-constant exponent is only allowed over a constant base.
    pub fn pow(base: Expr, exponent: Expr) -> Result<Expr, ExprError> {
        if !exponent.is_closed() && !base.is_closed() {
            return Err(ExprError::GeneralPower(format!("({base})^({exponent})")));
        }
        Ok(Expr::Pow(b(base), b(exponent)))
    }

    pub fn floor(arg: Expr) -> Expr {
        Expr::Floor(b(arg))
    }

    pub fn ceil(arg: Expr) -> Expr {
        Expr::Ceil(b(arg))
    }

    pub fn log2ceil(arg: Expr) -> Expr {
        Expr::Log2Ceil(b(arg))
    }

    pub fn max(lhs: Expr, rhs: Expr) -> Expr {
        Expr::Max(b(lhs), b(rhs))
    }

    pub fn min(lhs: Expr, rhs: Expr) -> Expr {
        Expr::Min(b(lhs), b(rhs))
    }

    pub fn ite(cond: Constraint, then: Expr, otherwise: Expr) -> Expr {
        Expr::Ite(Box::new(cond), b(then), b(otherwise))
    }

    pub fn as_const(&self) -> Option<&Rational> {
        match self {
            Expr::Const(c) => Some(c),
            _ => None,
        }
    }

    /// True when the expression has no variables and no calls.
    pub fn is_closed(&self) -> bool {
        let mut closed = true;
        self.visit(&mut |e| {
            if matches!(e, Expr::Var(_) | Expr::Call(..)) {
                closed = false;
            }
        });
        closed
    }

    /// Pre-order traversal over every sub-expression, including the ones
    /// nested inside `Ite` conditions.
    pub fn visit(&self, f: &mut dyn FnMut(&Expr)) {
        f(self);
        match self {
            Expr::Const(_) | Expr::Var(_) => {}
            Expr::Add(l, r)
            | Expr::Sub(l, r)
            | Expr::Mul(l, r)
            | Expr::Div(l, r)
            | Expr::Pow(l, r)
            | Expr::Max(l, r)
            | Expr::Min(l, r) => {
                l.visit(f);
                r.visit(f);
            }
            Expr::Floor(a) | Expr::Ceil(a) | Expr::Log2Ceil(a) => a.visit(f),
            Expr::Call(_, args) => args.iter().for_each(|a| a.visit(f)),
            Expr::Ite(c, t, e) => {
                c.visit_exprs(f);
                t.visit(f);
                e.visit(f);
            }
        }
    }

    pub fn free_vars(&self) -> BTreeSet<String> {
        let mut vars = BTreeSet::new();
        self.visit(&mut |e| {
            if let Expr::Var(v) = e {
                vars.insert(v.clone());
            }
        });
        vars
    }

    pub fn contains_calls(&self, fname: &str) -> bool {
        let mut found = false;
        self.visit(&mut |e| {
            if matches!(e, Expr::Call(name, _) if name == fname) {
                found = true;
            }
        });
        found
    }

    pub fn contains_any_call(&self) -> bool {
        let mut found = false;
        self.visit(&mut |e| {
            if matches!(e, Expr::Call(..)) {
                found = true;
            }
        });
        found
    }

    /// Names and arities of every function called in the expression.
    pub fn called_functions(&self) -> Vec<(String, usize)> {
        let mut out = Vec::new();
        self.visit(&mut |e| {
            if let Expr::Call(name, args) = e {
                out.push((name.clone(), args.len()));
            }
        });
        out
    }

    /// Rebuilds the tree bottom-up, applying `f` to every rebuilt node.
    pub fn map_bottom_up(&self, f: &mut dyn FnMut(Expr) -> Expr) -> Expr {
        let rebuilt = match self {
            Expr::Const(_) | Expr::Var(_) => self.clone(),
            Expr::Add(l, r) => Expr::Add(b(l.map_bottom_up(f)), b(r.map_bottom_up(f))),
            Expr::Sub(l, r) => Expr::Sub(b(l.map_bottom_up(f)), b(r.map_bottom_up(f))),
            Expr::Mul(l, r) => Expr::Mul(b(l.map_bottom_up(f)), b(r.map_bottom_up(f))),
            Expr::Div(l, r) => Expr::Div(b(l.map_bottom_up(f)), b(r.map_bottom_up(f))),
            Expr::Pow(l, r) => Expr::Pow(b(l.map_bottom_up(f)), b(r.map_bottom_up(f))),
            Expr::Max(l, r) => Expr::Max(b(l.map_bottom_up(f)), b(r.map_bottom_up(f))),
            Expr::Min(l, r) => Expr::Min(b(l.map_bottom_up(f)), b(r.map_bottom_up(f))),
            Expr::Floor(a) => Expr::Floor(b(a.map_bottom_up(f))),
            Expr::Ceil(a) => Expr::Ceil(b(a.map_bottom_up(f))),
            Expr::Log2Ceil(a) => Expr::Log2Ceil(b(a.map_bottom_up(f))),
            Expr::Call(name, args) => {
                Expr::Call(name.clone(), args.iter().map(|a| a.map_bottom_up(f)).collect())
            }
            Expr::Ite(c, t, e) => Expr::Ite(
                Box::new(c.map_exprs(&mut |x| x.map_bottom_up(f))),
                b(t.map_bottom_up(f)),
                b(e.map_bottom_up(f)),
            ),
        };
        f(rebuilt)
    }

    /// Replaces every variable by the expression bound to it in `bindings`.
    pub fn substitute(&self, bindings: &BTreeMap<String, Expr>) -> Expr {
        self.map_bottom_up(&mut |e| match &e {
            Expr::Var(v) => bindings.get(v).cloned().unwrap_or(e),
            _ => e,
        })
    }

    /// Evaluates a call-free expression.
    pub fn eval(&self, env: &Env) -> Result<Rational, ExprError> {
        self.eval_with(env, &mut |name, _| Err(ExprError::UnexpectedCall(name.to_string())))
    }

    /// Evaluates the expression, delegating `Call` nodes to `resolve`.
    /// Arguments of a call are evaluated left to right before the call.
    pub fn eval_with<E: From<ExprError>>(
        &self,
        env: &Env,
        resolve: &mut CallResolver<'_, E>,
    ) -> Result<Rational, E> {
        Ok(match self {
            Expr::Const(c) => c.clone(),
            Expr::Var(v) => env
                .get(v)
                .cloned()
                .ok_or_else(|| ExprError::UnboundVariable(v.clone()))?,
            Expr::Add(l, r) => l.eval_with(env, resolve)? + r.eval_with(env, resolve)?,
            Expr::Sub(l, r) => l.eval_with(env, resolve)? - r.eval_with(env, resolve)?,
            Expr::Mul(l, r) => l.eval_with(env, resolve)? * r.eval_with(env, resolve)?,
            Expr::Div(l, r) => {
                let num = l.eval_with(env, resolve)?;
                let den = r.eval_with(env, resolve)?;
                if den.is_zero() {
                    return Err(ExprError::DivisionByZero.into());
                }
                num / den
            }
            Expr::Pow(l, r) => {
                let base = l.eval_with(env, resolve)?;
                let exp = r.eval_with(env, resolve)?;
                pow_rational(&base, &exp)?
            }
            Expr::Floor(a) => a.eval_with(env, resolve)?.floor(),
            Expr::Ceil(a) => a.eval_with(env, resolve)?.ceil(),
            Expr::Log2Ceil(a) => log2_ceil(&a.eval_with(env, resolve)?),
            Expr::Max(l, r) => {
                let (x, y) = (l.eval_with(env, resolve)?, r.eval_with(env, resolve)?);
                if x >= y {
                    x
                } else {
                    y
                }
            }
            Expr::Min(l, r) => {
                let (x, y) = (l.eval_with(env, resolve)?, r.eval_with(env, resolve)?);
                if x <= y {
                    x
                } else {
                    y
                }
            }
            Expr::Call(name, args) => {
                let mut values = Vec::with_capacity(args.len());
                for a in args {
                    values.push(a.eval_with(env, resolve)?);
                }
                resolve(name, &values)?
            }
            Expr::Ite(c, t, e) => {
                if c.eval_with(env, resolve)? {
                    t.eval_with(env, resolve)?
                } else {
                    e.eval_with(env, resolve)?
                }
            }
        })
    }
}

/// `⌈log₂ v⌉`, defined as 0 for every `v ≤ 1`.
pub fn log2_ceil(v: &Rational) -> Rational {
    if *v <= Rational::one() {
        return Rational::zero();
    }
    // 2^k is an integer, so 2^k >= v iff 2^k >= ceil(v).
    let n = v.ceil().to_integer();
    let bits = (n - BigInt::one()).bits();
    Rational::from_integer(BigInt::from(bits))
}

fn pow_rational(base: &Rational, exp: &Rational) -> Result<Rational, ExprError> {
    if !exp.is_integer() {
        return Err(ExprError::NonIntegerExponent(exp.to_string()));
    }
    let e = exp
        .to_integer()
        .to_i64()
        .filter(|e| e.unsigned_abs() <= MAX_EXPONENT as u64)
        .ok_or_else(|| ExprError::ExponentTooLarge(exp.to_string()))?;
    if e < 0 && base.is_zero() {
        return Err(ExprError::DivisionByZero);
    }
    let mag = num_traits::pow(base.clone(), e.unsigned_abs() as usize);
    Ok(if e < 0 { mag.recip() } else { mag })
}

impl Constraint {
    pub fn cmp(op: CmpOp, lhs: Expr, rhs: Expr) -> Constraint {
        Constraint::Cmp(op, lhs, rhs)
    }

    pub fn and(parts: Vec<Constraint>) -> Constraint {
        let mut flat = Vec::new();
        for p in parts {
            match p {
                Constraint::Bool(true) => {}
                Constraint::And(inner) => flat.extend(inner),
                other => flat.push(other),
            }
        }
        match flat.len() {
            0 => Constraint::Bool(true),
            1 => flat.pop().unwrap(),
            _ => Constraint::And(flat),
        }
    }

    pub fn or(parts: Vec<Constraint>) -> Constraint {
        let mut flat = Vec::new();
        for p in parts {
            match p {
                Constraint::Bool(false) => {}
                Constraint::Or(inner) => flat.extend(inner),
                other => flat.push(other),
            }
        }
        match flat.len() {
            0 => Constraint::Bool(false),
            1 => flat.pop().unwrap(),
            _ => Constraint::Or(flat),
        }
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(c: Constraint) -> Constraint {
        match c {
            Constraint::Bool(v) => Constraint::Bool(!v),
            Constraint::Not(inner) => *inner,
            other => Constraint::Not(Box::new(other)),
        }
    }

    pub fn visit_exprs(&self, f: &mut dyn FnMut(&Expr)) {
        match self {
            Constraint::Bool(_) => {}
            Constraint::Cmp(_, l, r) => {
                l.visit(f);
                r.visit(f);
            }
            Constraint::And(cs) | Constraint::Or(cs) => cs.iter().for_each(|c| c.visit_exprs(f)),
            Constraint::Not(c) => c.visit_exprs(f),
        }
    }

    pub fn map_exprs(&self, f: &mut dyn FnMut(&Expr) -> Expr) -> Constraint {
        match self {
            Constraint::Bool(v) => Constraint::Bool(*v),
            Constraint::Cmp(op, l, r) => Constraint::Cmp(*op, f(l), f(r)),
            Constraint::And(cs) => Constraint::And(cs.iter().map(|c| c.map_exprs(f)).collect()),
            Constraint::Or(cs) => Constraint::Or(cs.iter().map(|c| c.map_exprs(f)).collect()),
            Constraint::Not(c) => Constraint::Not(Box::new(c.map_exprs(f))),
        }
    }

    pub fn free_vars(&self) -> BTreeSet<String> {
        let mut vars = BTreeSet::new();
        self.visit_exprs(&mut |e| {
            if let Expr::Var(v) = e {
                vars.insert(v.clone());
            }
        });
        vars
    }

    pub fn contains_any_call(&self) -> bool {
        let mut found = false;
        self.visit_exprs(&mut |e| {
            if matches!(e, Expr::Call(..)) {
                found = true;
            }
        });
        found
    }

    pub fn substitute(&self, bindings: &BTreeMap<String, Expr>) -> Constraint {
        self.map_exprs(&mut |e| e.substitute(bindings))
    }

    pub fn eval(&self, env: &Env) -> Result<bool, ExprError> {
        self.eval_with(env, &mut |name, _| Err(ExprError::UnexpectedCall(name.to_string())))
    }

    pub fn eval_with<E: From<ExprError>>(
        &self,
        env: &Env,
        resolve: &mut CallResolver<'_, E>,
    ) -> Result<bool, E> {
        Ok(match self {
            Constraint::Bool(v) => *v,
            Constraint::Cmp(op, l, r) => {
                let lhs = l.eval_with(env, resolve)?;
                let rhs = r.eval_with(env, resolve)?;
                op.holds(&lhs, &rhs)
            }
            Constraint::And(cs) => {
                for c in cs {
                    if !c.eval_with(env, resolve)? {
                        return Ok(false);
                    }
                }
                true
            }
            Constraint::Or(cs) => {
                for c in cs {
                    if c.eval_with(env, resolve)? {
                        return Ok(true);
                    }
                }
                false
            }
            Constraint::Not(c) => !c.eval_with(env, resolve)?,
        })
    }
}

pub fn eval_expr(e: &Expr, env: &Env) -> Result<Rational, ExprError> {
    e.eval(env)
}

pub fn eval_constraint(c: &Constraint, env: &Env) -> Result<bool, ExprError> {
    c.eval(env)
}

pub fn contains_calls(e: &Expr, fname: &str) -> bool {
    e.contains_calls(fname)
}

pub fn free_vars(e: &Expr) -> BTreeSet<String> {
    e.free_vars()
}

// Operator sugar for building trees in code and tests.
macro_rules! bin_op {
    ($trait:ident, $method:ident, $variant:ident) => {
        impl std::ops::$trait for Expr {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                Expr::$variant(b(self), b(rhs))
            }
        }
    };
}
bin_op!(Add, add, Add);
bin_op!(Sub, sub, Sub);
bin_op!(Mul, mul, Mul);

// Printing. Precedence levels: 1 additive, 2 multiplicative, 3 unary minus,
// 4 power, 5 atoms.
fn const_prec(c: &Rational) -> u8 {
    if !c.is_integer() {
        2
    } else if c.is_negative() {
        3
    } else {
        5
    }
}

fn write_const(f: &mut fmt::Formatter<'_>, c: &Rational) -> fmt::Result {
    if c.is_integer() {
        write!(f, "{}", c.numer())
    } else {
        let (n, d) = (c.numer(), c.denom());
        debug_assert!(d.is_positive() && !d.is_one());
        write!(f, "{}/{}", n, d)
    }
}

impl Expr {
    fn prec(&self) -> u8 {
        match self {
            Expr::Const(c) => const_prec(c),
            Expr::Add(..) | Expr::Sub(..) => 1,
            Expr::Mul(..) | Expr::Div(..) => 2,
            Expr::Pow(..) => 4,
            _ => 5,
        }
    }

    fn fmt_prec(&self, f: &mut fmt::Formatter<'_>, ctx: u8) -> fmt::Result {
        let own = self.prec();
        if own < ctx {
            write!(f, "(")?;
            self.fmt_prec(f, 0)?;
            return write!(f, ")");
        }
        match self {
            Expr::Const(c) => write_const(f, c),
            Expr::Var(v) => write!(f, "{v}"),
            Expr::Add(l, r) => {
                l.fmt_prec(f, 1)?;
                write!(f, " + ")?;
                r.fmt_prec(f, 2)
            }
            Expr::Sub(l, r) => {
                l.fmt_prec(f, 1)?;
                write!(f, " - ")?;
                r.fmt_prec(f, 2)
            }
            Expr::Mul(l, r) => {
                l.fmt_prec(f, 2)?;
                write!(f, "*")?;
                r.fmt_prec(f, 3)
            }
            Expr::Div(l, r) => {
                l.fmt_prec(f, 2)?;
                write!(f, "/")?;
                r.fmt_prec(f, 3)
            }
            Expr::Pow(l, r) => {
                l.fmt_prec(f, 5)?;
                write!(f, "^")?;
                r.fmt_prec(f, 4)
            }
            Expr::Floor(a) => write!(f, "floor({a})"),
            Expr::Ceil(a) => write!(f, "ceil({a})"),
            Expr::Log2Ceil(a) => write!(f, "log2ceil({a})"),
            Expr::Max(l, r) => write!(f, "max({l}, {r})"),
            Expr::Min(l, r) => write!(f, "min({l}, {r})"),
            Expr::Call(name, args) => {
                write!(f, "{name}(")?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{a}")?;
                }
                write!(f, ")")
            }
            Expr::Ite(c, t, e) => write!(f, "ite({c}, {t}, {e})"),
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_prec(f, 0)
    }
}

impl Constraint {
    fn prec(&self) -> u8 {
        match self {
            Constraint::Or(_) => 1,
            Constraint::And(_) => 2,
            _ => 3,
        }
    }

    fn fmt_prec(&self, f: &mut fmt::Formatter<'_>, ctx: u8) -> fmt::Result {
        if self.prec() < ctx {
            write!(f, "(")?;
            self.fmt_prec(f, 0)?;
            return write!(f, ")");
        }
        match self {
            Constraint::Bool(v) => write!(f, "{v}"),
            Constraint::Cmp(op, l, r) => write!(f, "{l} {} {r}", op.symbol()),
            Constraint::And(cs) | Constraint::Or(cs) => {
                let (sep, p) = if matches!(self, Constraint::And(_)) {
                    (" && ", 3)
                } else {
                    (" || ", 2)
                };
                for (i, c) in cs.iter().enumerate() {
                    if i > 0 {
                        write!(f, "{sep}")?;
                    }
                    c.fmt_prec(f, p)?;
                }
                Ok(())
            }
            Constraint::Not(c) => {
                write!(f, "!")?;
                c.fmt_prec(f, 4)
            }
        }
    }
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_prec(f, 0)
    }
}

/// Least common multiple of the denominators of every constant in `e`.
pub fn denominator_lcm(e: &Expr) -> BigInt {
    let mut l = BigInt::one();
    e.visit(&mut |x| {
        if let Expr::Const(c) = x {
            l = l.lcm(c.denom());
        }
    });
    l
}

/// Serde adapter that writes rationals as `"p/q"` strings.
pub mod serde_rational {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    use super::Rational;

    pub fn serialize<S: Serializer>(value: &Rational, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(value)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Rational, D::Error> {
        let text = String::deserialize(d)?;
        text.parse().map_err(|_| D::Error::custom(format!("invalid rational `{text}`")))
    }

    /// The same for `(name, rational)` pairs.
    pub mod pairs {
        use serde::ser::SerializeSeq;
        use serde::{de::Error, Deserialize, Deserializer, Serializer};

        use super::super::Rational;

        pub fn serialize<S: Serializer>(values: &[(String, Rational)], s: S) -> Result<S::Ok, S::Error> {
            let mut seq = s.serialize_seq(Some(values.len()))?;
            for (name, v) in values {
                seq.serialize_element(&(name, v.to_string()))?;
            }
            seq.end()
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<(String, Rational)>, D::Error> {
            Vec::<(String, String)>::deserialize(d)?
                .into_iter()
                .map(|(name, text)| {
                    let v = text.parse().map_err(|_| D::Error::custom(format!("invalid rational `{text}`")))?;
                    Ok((name, v))
                })
                .collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x() -> Expr {
        Expr::var("x")
    }
    fn y() -> Expr {
        Expr::var("y")
    }

    #[test]
    fn eval_training_case_features() {
        let env = Env::from_ints(&["x"], &[5]);
        let sq = Expr::pow(x(), Expr::int(2)).unwrap();
        assert_eq!(eval_expr(&sq, &env).unwrap(), rat(25));
        assert_eq!(eval_expr(&Expr::log2ceil(x()), &env).unwrap(), rat(3));
        assert_eq!(eval_expr(&Expr::int(0), &Env::new()).unwrap(), rat(0));
        let exp = Expr::pow(Expr::int(2), x()).unwrap();
        assert_eq!(eval_expr(&exp, &env).unwrap(), rat(32));
    }

    #[test]
    fn log2ceil_is_zero_at_and_below_one() {
        for v in [-3, 0, 1] {
            assert_eq!(log2_ceil(&rat(v)), rat(0));
        }
        assert_eq!(log2_ceil(&rat(2)), rat(1));
        assert_eq!(log2_ceil(&rat(4)), rat(2));
        assert_eq!(log2_ceil(&rat(5)), rat(3));
        assert_eq!(log2_ceil(&ratio(9, 2)), rat(3));
    }

    #[test]
    fn division_by_zero_at_runtime() {
        let e = Expr::div(x(), y()).unwrap();
        let env = Env::from_ints(&["x", "y"], &[1, 0]);
        assert_eq!(e.eval(&env), Err(ExprError::DivisionByZero));
        assert_eq!(Expr::div(x(), Expr::int(0)), Err(ExprError::LiteralZeroDivisor));
    }

    #[test]
    fn unbound_variable() {
        assert_eq!(
            x().eval(&Env::new()),
            Err(ExprError::UnboundVariable("x".into()))
        );
        let c = Constraint::cmp(CmpOp::Eq, x(), Expr::int(0));
        assert!(c.eval(&Env::new()).is_err());
    }

    #[test]
    fn general_power_rejected() {
        assert!(Expr::pow(x(), y()).is_err());
        assert!(Expr::pow(Expr::int(2), x() + Expr::int(1)).is_ok());
    }

    #[test]
    fn constraint_evaluation() {
        let eq0 = Constraint::cmp(CmpOp::Eq, x(), Expr::int(0));
        assert!(eval_constraint(&eq0, &Env::from_ints(&["x"], &[0])).unwrap());
        let both_pos = Constraint::and(vec![
            Constraint::cmp(CmpOp::Gt, x(), Expr::int(0)),
            Constraint::cmp(CmpOp::Gt, y(), Expr::int(0)),
        ]);
        assert!(!eval_constraint(&both_pos, &Env::from_ints(&["x", "y"], &[3, 0])).unwrap());
        let div_guard = Constraint::and(vec![
            Constraint::cmp(CmpOp::Ge, x(), y()),
            Constraint::cmp(CmpOp::Gt, y(), Expr::int(0)),
        ]);
        assert!(eval_constraint(&div_guard, &Env::from_ints(&["x", "y"], &[7, 2])).unwrap());
    }

    #[test]
    fn call_queries() {
        let f = |a| Expr::call("f", vec![a]);
        let nested = f(f(x() - Expr::int(1))) + Expr::int(1);
        assert!(contains_calls(&nested, "f"));
        assert!(!contains_calls(&(x() + Expr::int(1)), "f"));
        let mixed = Expr::call("g", vec![x()]) + f(y());
        assert!(contains_calls(&mixed, "f"));
        assert_eq!(
            free_vars(&(f(x() - Expr::int(1)) + y())),
            ["x", "y"].iter().map(|s| s.to_string()).collect()
        );
        assert!(free_vars(&Expr::int(7)).is_empty());
        assert_eq!(free_vars(&Expr::max(x(), y())).len(), 2);
    }

    #[test]
    fn display_round_trips_through_precedence() {
        let e = (x() - (y() - Expr::int(1))) * Expr::int(3);
        assert_eq!(e.to_string(), "(x - (y - 1))*3");
        let half = Expr::Const(ratio(-3, 2)) * x();
        assert_eq!(half.to_string(), "-3/2*x");
        let p = Expr::pow(x() + Expr::int(1), Expr::int(2)).unwrap();
        assert_eq!(p.to_string(), "(x + 1)^2");
    }
}
