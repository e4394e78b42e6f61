//! Best rational approximation with a bounded denominator.

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};

use crate::expr::Rational;
use crate::sampling::to_f64;

/// The rational closest to `value` among those with denominator at most
/// `max_denominator`. Non-finite inputs map to zero.
pub fn best_rational(value: f64, max_denominator: u64) -> Rational {
    assert!(max_denominator >= 1, "max denominator must be at least 1");
    let Some(exact) = Rational::from_float(value) else {
        return Rational::zero();
    };
    limit_denominator(&exact, &BigInt::from(max_denominator))
}

/// Continued-fraction search for the closest fraction with a denominator
/// no larger than `max_den`.
pub fn limit_denominator(x: &Rational, max_den: &BigInt) -> Rational {
    if x.denom() <= max_den {
        return x.clone();
    }
    let negative = x.is_negative();
    let x = x.abs();
    let (mut p0, mut q0, mut p1, mut q1) = (BigInt::zero(), BigInt::one(), BigInt::one(), BigInt::zero());
    let (mut n, mut d) = (x.numer().clone(), x.denom().clone());
    loop {
        let a = n.div_floor(&d);
        let q2 = &q0 + &a * &q1;
        if &q2 > max_den {
            break;
        }
        let p2 = &p0 + &a * &p1;
        (p0, q0, p1, q1) = (p1, q1, p2, q2);
        let rem = &n - &a * &d;
        n = d;
        d = rem;
        if d.is_zero() {
            break;
        }
    }
    let k = (max_den - &q0).div_floor(&q1);
    let lower = Rational::new(&p0 + &k * &p1, &q0 + &k * &q1);
    let upper = Rational::new(p1, q1);
    let best = if (&upper - &x).abs() <= (&lower - &x).abs() { upper } else { lower };
    if negative {
        -best
    } else {
        best
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rationalized {
    pub beta: Vec<Rational>,
    pub intercept: Rational,
    /// Largest absolute change made to any coefficient.
    pub max_delta: f64,
}

pub fn rationalize(beta: &[f64], intercept: f64, max_denominator: u64) -> Rationalized {
    let mut max_delta: f64 = 0.0;
    let mut round = |v: f64| {
        let r = best_rational(v, max_denominator);
        max_delta = max_delta.max((to_f64(&r) - v).abs());
        r
    };
    let beta = beta.iter().map(|b| round(*b)).collect();
    let intercept = round(intercept);
    Rationalized { beta, intercept, max_delta }
}
