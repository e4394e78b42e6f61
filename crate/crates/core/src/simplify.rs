//! Rule-based simplification.
//!
//! Every expression is normalised into a sum of monomials with rational
//! coefficients, where a monomial is a product of powers of *atoms*. Atoms are
//! variables and every node the polynomial view cannot see through (`floor`,
//! `max`, calls, divisions by non-constants, ...), with their children
//! simplified recursively. Rebuilding from that normal form gives constant
//! folding, like-term collection, neutral-element elimination and
//! cancellation in one pass, and makes the result a fixpoint.
//!
//! Variables are treated as integer-valued, which is what licenses
//! `floor(n) -> n` for integer-valued `n`.

use std::collections::BTreeMap;

use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::expr::{Constraint, Expr, Rational};

/// Largest exponent for which a multi-term base is expanded.
const MAX_EXPANSION_POWER: i64 = 4;

type Monomial = BTreeMap<Expr, u32>;

#[derive(Debug, Clone, PartialEq, Default)]
struct Poly(BTreeMap<Monomial, Rational>);

impl Poly {
    fn constant(c: Rational) -> Poly {
        let mut p = Poly::default();
        if !c.is_zero() {
            p.0.insert(Monomial::new(), c);
        }
        p
    }

    fn atom(e: Expr) -> Poly {
        let mut m = Monomial::new();
        m.insert(e, 1);
        let mut p = Poly::default();
        p.0.insert(m, Rational::one());
        p
    }

    fn as_constant(&self) -> Option<Rational> {
        match self.0.len() {
            0 => Some(Rational::zero()),
            1 => self.0.get(&Monomial::new()).cloned(),
            _ => None,
        }
    }

    fn add_term(&mut self, m: Monomial, c: Rational) {
        let entry = self.0.entry(m).or_insert_with(Rational::zero);
        *entry += c;
        if entry.is_zero() {
            self.0.retain(|_, v| !v.is_zero());
        }
    }

    fn add(mut self, other: Poly) -> Poly {
        for (m, c) in other.0 {
            self.add_term(m, c);
        }
        self
    }

    fn scale(self, k: &Rational) -> Poly {
        if k.is_zero() {
            return Poly::default();
        }
        Poly(self.0.into_iter().map(|(m, c)| (m, c * k)).collect())
    }

    fn mul(&self, other: &Poly) -> Poly {
        let mut out = Poly::default();
        for (m1, c1) in &self.0 {
            for (m2, c2) in &other.0 {
                let mut m = m1.clone();
                for (a, e) in m2 {
                    *m.entry(a.clone()).or_insert(0) += e;
                }
                out.add_term(m, c1 * c2);
            }
        }
        out
    }

    fn pow(&self, n: u32) -> Poly {
        let mut acc = Poly::constant(Rational::one());
        for _ in 0..n {
            acc = acc.mul(self);
        }
        acc
    }

    /// Rewrites `c*max(a,b) + c*min(a,b)` into `c*(a + b)`.
    fn merge_max_min(self) -> Poly {
        let mut out = self;
        loop {
            let pair = out.0.iter().find_map(|(m, c)| {
                let (atom, exp) = single_atom(m)?;
                if exp != 1 {
                    return None;
                }
                let Expr::Max(a, b) = atom else { return None };
                let mut partner = Monomial::new();
                partner.insert(Expr::Min(a.clone(), b.clone()), 1);
                (out.0.get(&partner) == Some(c))
                    .then(|| (m.clone(), partner, c.clone(), (**a).clone(), (**b).clone()))
            });
            let Some((max_m, min_m, c, a, b)) = pair else {
                return out;
            };
            out.0.remove(&max_m);
            out.0.remove(&min_m);
            let sum = to_poly(&a).add(to_poly(&b)).scale(&c);
            out = out.add(sum);
        }
    }
}

fn single_atom(m: &Monomial) -> Option<(&Expr, u32)> {
    if m.len() == 1 {
        m.iter().next().map(|(a, e)| (a, *e))
    } else {
        None
    }
}

/// True when an atom is guaranteed to take integer values on integer inputs.
fn atom_is_integer(e: &Expr) -> bool {
    match e {
        Expr::Var(_) | Expr::Floor(_) | Expr::Ceil(_) | Expr::Log2Ceil(_) => true,
        Expr::Max(a, b) | Expr::Min(a, b) => expr_is_integer(a) && expr_is_integer(b),
        Expr::Ite(_, t, e) => expr_is_integer(t) && expr_is_integer(e),
        Expr::Pow(base, exp) => {
            expr_is_integer(base)
                && matches!(exp.as_ref(), Expr::Const(c) if c.is_integer() && !c.is_negative())
        }
        Expr::Const(c) => c.is_integer(),
        _ => false,
    }
}

fn expr_is_integer(e: &Expr) -> bool {
    poly_is_integer(&to_poly(e))
}

fn poly_is_integer(p: &Poly) -> bool {
    p.0.iter()
        .all(|(m, c)| c.is_integer() && m.keys().all(atom_is_integer))
}

fn const_of(p: &Poly) -> Option<Rational> {
    p.as_constant()
}

fn to_poly(e: &Expr) -> Poly {
    match e {
        Expr::Const(c) => Poly::constant(c.clone()),
        Expr::Var(_) => Poly::atom(e.clone()),
        Expr::Add(l, r) => to_poly(l).add(to_poly(r)),
        Expr::Sub(l, r) => to_poly(l).add(to_poly(r).scale(&-Rational::one())),
        Expr::Mul(l, r) => to_poly(l).mul(&to_poly(r)),
        Expr::Div(l, r) => {
            let num = to_poly(l);
            let den = to_poly(r);
            match const_of(&den) {
                Some(c) if !c.is_zero() => num.scale(&c.recip()),
                Some(_) => Poly::atom(Expr::Div(Box::new(rebuild(&num)), r.clone())),
                None => Poly::atom(Expr::Div(Box::new(rebuild(&num)), Box::new(rebuild(&den)))),
            }
        }
        Expr::Pow(base, exp) => pow_poly(base, exp),
        Expr::Floor(a) | Expr::Ceil(a) => {
            let is_floor = matches!(e, Expr::Floor(_));
            let inner = to_poly(a);
            if let Some(c) = const_of(&inner) {
                return Poly::constant(if is_floor { c.floor() } else { c.ceil() });
            }
            // floor(n + r) = n + floor(r) for integer-valued n.
            let mut int_part = Poly::default();
            let mut rest = Poly::default();
            for (m, c) in inner.0 {
                if c.is_integer() && m.keys().all(atom_is_integer) {
                    int_part.add_term(m, c);
                } else {
                    rest.add_term(m, c);
                }
            }
            if rest.0.is_empty() {
                return int_part;
            }
            let wrapped = if is_floor {
                Expr::Floor(Box::new(rebuild(&rest)))
            } else {
                Expr::Ceil(Box::new(rebuild(&rest)))
            };
            int_part.add(Poly::atom(wrapped))
        }
        Expr::Log2Ceil(a) => {
            let inner = to_poly(a);
            match const_of(&inner) {
                Some(c) => Poly::constant(crate::expr::log2_ceil(&c)),
                None => Poly::atom(Expr::Log2Ceil(Box::new(rebuild(&inner)))),
            }
        }
        Expr::Max(l, r) | Expr::Min(l, r) => {
            let is_max = matches!(e, Expr::Max(..));
            let (pl, pr) = (to_poly(l), to_poly(r));
            if pl == pr {
                return pl;
            }
            if let (Some(a), Some(b)) = (const_of(&pl), const_of(&pr)) {
                let pick = if is_max { a.max(b) } else { a.min(b) };
                return Poly::constant(pick);
            }
            let (mut a, mut b) = (rebuild(&pl), rebuild(&pr));
            if b < a {
                std::mem::swap(&mut a, &mut b);
            }
            Poly::atom(if is_max { Expr::max(a, b) } else { Expr::min(a, b) })
        }
        Expr::Call(name, args) => Poly::atom(Expr::Call(name.clone(), args.iter().map(simplify).collect())),
        Expr::Ite(c, t, f) => {
            let cond = simplify_constraint(c);
            match cond {
                Constraint::Bool(true) => to_poly(t),
                Constraint::Bool(false) => to_poly(f),
                cond => {
                    let (pt, pf) = (to_poly(t), to_poly(f));
                    if pt == pf {
                        pt
                    } else {
                        Poly::atom(Expr::ite(cond, rebuild(&pt), rebuild(&pf)))
                    }
                }
            }
        }
    }
}

fn pow_poly(base: &Expr, exp: &Expr) -> Poly {
    let pb = to_poly(base);
    let pe = to_poly(exp);
    let exp_const = const_of(&pe);
    if let (Some(bc), Some(ec)) = (const_of(&pb), exp_const.clone()) {
        if let Ok(v) = Expr::Pow(Box::new(Expr::Const(bc)), Box::new(Expr::Const(ec))).eval(&Default::default()) {
            return Poly::constant(v);
        }
    }
    if let Some(n) = exp_const
        .as_ref()
        .filter(|c| c.is_integer())
        .and_then(|c| c.to_integer().to_i64())
    {
        if n == 0 {
            return Poly::constant(Rational::one());
        }
        if n == 1 {
            return pb;
        }
        if n > 0 && (pb.0.len() == 1 || n <= MAX_EXPANSION_POWER) {
            return pb.pow(n as u32);
        }
    }
    Poly::atom(Expr::Pow(Box::new(rebuild(&pb)), Box::new(rebuild(&pe))))
}

fn monomial_degree(m: &Monomial) -> u32 {
    m.values().sum()
}

fn monomial_expr(m: &Monomial) -> Option<Expr> {
    let mut factors = m.iter().map(|(atom, e)| {
        if *e == 1 {
            atom.clone()
        } else {
            Expr::Pow(Box::new(atom.clone()), Box::new(Expr::int(*e as i64)))
        }
    });
    let first = factors.next()?;
    Some(factors.fold(first, |acc, f| acc * f))
}

fn term_expr(m: &Monomial, c: &Rational) -> Expr {
    let Some(body) = monomial_expr(m) else {
        return Expr::Const(c.clone());
    };
    let numer = Rational::from_integer(c.numer().clone());
    let scaled = if numer.is_one() {
        body
    } else {
        Expr::Const(numer) * body
    };
    if c.denom().is_one() {
        scaled
    } else {
        Expr::Div(Box::new(scaled), Box::new(Expr::Const(Rational::from_integer(c.denom().clone()))))
    }
}

fn rebuild(p: &Poly) -> Expr {
    let mut terms: Vec<(&Monomial, &Rational)> = p.0.iter().collect();
    if terms.is_empty() {
        return Expr::Const(Rational::zero());
    }
    terms.sort_by(|(m1, _), (m2, _)| {
        monomial_degree(m2)
            .cmp(&monomial_degree(m1))
            .then_with(|| m1.cmp(m2))
    });
    let lead = terms.iter().position(|(_, c)| c.is_positive()).unwrap_or(0);
    let (lm, lc) = terms.remove(lead);
    let mut acc = term_expr(lm, lc);
    for (m, c) in terms {
        acc = if c.is_negative() {
            acc - term_expr(m, &-c.clone())
        } else {
            acc + term_expr(m, c)
        };
    }
    acc
}

/// Simplifies an expression into its canonical normal form.
pub fn simplify(e: &Expr) -> Expr {
    rebuild(&to_poly(e).merge_max_min())
}

pub fn simplify_constraint(c: &Constraint) -> Constraint {
    match c {
        Constraint::Bool(v) => Constraint::Bool(*v),
        Constraint::Cmp(op, l, r) => {
            let diff = to_poly(l).add(to_poly(r).scale(&-Rational::one()));
            if let Some(d) = const_of(&diff) {
                return Constraint::Bool(op.holds(&d, &Rational::zero()));
            }
            Constraint::Cmp(*op, simplify(l), simplify(r))
        }
        Constraint::And(cs) => {
            let mut parts: Vec<Constraint> = Vec::new();
            for c in cs {
                match simplify_constraint(c) {
                    Constraint::Bool(false) => return Constraint::Bool(false),
                    Constraint::Bool(true) => {}
                    Constraint::And(inner) => push_unique(&mut parts, inner),
                    other => push_unique(&mut parts, vec![other]),
                }
            }
            Constraint::and(parts)
        }
        Constraint::Or(cs) => {
            let mut parts: Vec<Constraint> = Vec::new();
            for c in cs {
                match simplify_constraint(c) {
                    Constraint::Bool(true) => return Constraint::Bool(true),
                    Constraint::Bool(false) => {}
                    Constraint::Or(inner) => push_unique(&mut parts, inner),
                    other => push_unique(&mut parts, vec![other]),
                }
            }
            Constraint::or(parts)
        }
        Constraint::Not(inner) => match simplify_constraint(inner) {
            Constraint::Bool(v) => Constraint::Bool(!v),
            Constraint::Cmp(op, l, r) => Constraint::Cmp(op.negate(), l, r),
            Constraint::Not(c) => *c,
            other => Constraint::Not(Box::new(other)),
        },
    }
}

fn push_unique(parts: &mut Vec<Constraint>, items: Vec<Constraint>) {
    for item in items {
        if !parts.contains(&item) {
            parts.push(item);
        }
    }
}

/// `lhs - rhs` as a simplified expression; used for equation normalisation.
pub fn difference(lhs: &Expr, rhs: &Expr) -> Expr {
    simplify(&(lhs.clone() - rhs.clone()))
}

/// True when `simplify` proves `lhs = rhs` syntactically.
pub fn syntactically_equal(lhs: &Expr, rhs: &Expr) -> bool {
    matches!(difference(lhs, rhs), Expr::Const(c) if c.is_zero())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{rat, Env};
    use crate::parser::parse_expr;
    use proptest::prelude::*;

    fn s(text: &str) -> String {
        simplify(&parse_expr(text).unwrap()).to_string()
    }

    #[test]
    fn cancellation_and_neutral_elements() {
        assert_eq!(s("(x-1)+1"), "x");
        assert_eq!(s("max(x, x)"), "x");
        assert_eq!(s("2*x + 3*x"), "5*x");
        assert_eq!(s("1*x + 0"), "x");
        assert_eq!(s("x - x"), "0");
        assert_eq!(s("min(y, y) * 1"), "y");
    }

    #[test]
    fn floor_of_integer_expression_disappears() {
        assert_eq!(s("floor(x + 2*y)"), "x + 2*y");
        assert_eq!(s("ceil(max(x, y))"), "max(x, y)");
        assert_eq!(s("floor(7/2)"), "3");
        assert_eq!(s("floor(x/y + 1)"), "floor(x/y) + 1");
    }

    #[test]
    fn rational_coefficients_print_as_fractions() {
        assert_eq!(s("x + y^2/2 + 3*y/2"), "y^2/2 + x + 3*y/2");
        assert_eq!(s("(x+1)^2 - x^2"), "2*x + 1");
    }

    #[test]
    fn max_plus_min_collapses() {
        assert_eq!(s("max(x, y) + min(y, x) - 1"), "x + y - 1");
        assert_eq!(s("max(y, x)"), "max(x, y)");
    }

    #[test]
    fn constant_folding() {
        assert_eq!(s("2^5 + log2ceil(5) - max(1, 3)"), "32");
        assert_eq!(s("ite(1 > 0, x, y)"), "x");
    }

    #[test]
    fn constraint_folding() {
        let c = crate::parser::parse_constraint("x + 1 > x && !(y < 0)").unwrap();
        assert_eq!(simplify_constraint(&c).to_string(), "y >= 0");
    }

    fn arb_expr() -> impl Strategy<Value = Expr> {
        let leaf = prop_oneof![
            (-3i64..4).prop_map(Expr::int),
            Just(Expr::var("x")),
            Just(Expr::var("y")),
        ];
        leaf.prop_recursive(4, 24, 2, |inner| {
            prop_oneof![
                (inner.clone(), inner.clone()).prop_map(|(a, b)| a + b),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| a - b),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| a * b),
                (inner.clone(), 1i64..4).prop_map(|(a, d)| Expr::div(a, Expr::int(d)).unwrap()),
                (inner.clone(), 0i64..3).prop_map(|(a, n)| Expr::pow(a, Expr::int(n)).unwrap()),
                inner.clone().prop_map(Expr::floor),
                inner.clone().prop_map(Expr::ceil),
                inner.clone().prop_map(Expr::log2ceil),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::max(a, b)),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::min(a, b)),
                (inner.clone(), inner.clone())
                    .prop_map(|(a, b)| Expr::Div(Box::new(a), Box::new(b))),
            ]
        })
    }

    proptest! {
        #[test]
        fn simplify_preserves_value(e in arb_expr(), x in -6i64..7, y in -6i64..7) {
            let env = Env::from_ints(&["x", "y"], &[x, y]);
            let simplified = simplify(&e);
            if let (Ok(a), Ok(b)) = (e.eval(&env), simplified.eval(&env)) {
                prop_assert_eq!(a, b, "{} vs {}", e, simplified);
            }
        }

        #[test]
        fn simplify_is_idempotent(e in arb_expr()) {
            let once = simplify(&e);
            prop_assert_eq!(simplify(&once), once);
        }

        #[test]
        fn printed_form_reparses_to_same_value(e in arb_expr(), x in -4i64..5, y in -4i64..5) {
            let simplified = simplify(&e);
            let env = Env::from_ints(&["x", "y"], &[x, y]);
            if let Ok(v) = simplified.eval(&env) {
                let reparsed = parse_expr(&simplified.to_string()).unwrap();
                prop_assert_eq!(reparsed.eval(&env).unwrap(), v);
            }
        }
    }

    #[test]
    fn integer_env_evaluation_of_folded_floor() {
        let e = parse_expr("floor(x) + ceil(y)").unwrap();
        let env = Env::from_ints(&["x", "y"], &[3, -2]);
        assert_eq!(simplify(&e).eval(&env).unwrap(), rat(1));
    }
}
