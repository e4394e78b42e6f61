//! Minimal S-expression reader for solver output.

use std::collections::BTreeMap;

use num_bigint::BigInt;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Sexp {
    Atom(String),
    List(Vec<Sexp>),
}

/// Reads every top-level S-expression in `text`. Strings are kept as atoms
/// including their quotes; unbalanced input yields what could be read.
pub fn parse_all(text: &str) -> Vec<Sexp> {
    let mut stack: Vec<Vec<Sexp>> = vec![Vec::new()];
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '(' => stack.push(Vec::new()),
            ')' => {
                if stack.len() > 1 {
                    let list = stack.pop().expect("nested list");
                    stack.last_mut().expect("outer list").push(Sexp::List(list));
                }
            }
            ';' => {
                for c in chars.by_ref() {
                    if c == '\n' {
                        break;
                    }
                }
            }
            '"' => {
                let mut s = String::from('"');
                for c in chars.by_ref() {
                    s.push(c);
                    if c == '"' {
                        break;
                    }
                }
                stack.last_mut().expect("list").push(Sexp::Atom(s));
            }
            c if c.is_whitespace() => {}
            c => {
                let mut s = String::from(c);
                while let Some(&n) = chars.peek() {
                    if n.is_whitespace() || n == '(' || n == ')' {
                        break;
                    }
                    s.push(n);
                    chars.next();
                }
                stack.last_mut().expect("list").push(Sexp::Atom(s));
            }
        }
    }
    stack.swap_remove(0)
}

fn int_value(e: &Sexp) -> Option<BigInt> {
    match e {
        Sexp::Atom(a) => a.parse().ok(),
        Sexp::List(items) => match items.as_slice() {
            [Sexp::Atom(op), inner] if op == "-" => int_value(inner).map(|v| -v),
            _ => None,
        },
    }
}

/// Integer constants defined by `(define-fun name () Int value)` anywhere
/// in `items`.
pub fn integer_model(items: &[Sexp]) -> BTreeMap<String, BigInt> {
    let mut model = BTreeMap::new();
    for item in items {
        collect(item, &mut model);
    }
    model
}

fn collect(e: &Sexp, model: &mut BTreeMap<String, BigInt>) {
    let Sexp::List(items) = e else { return };
    if let [Sexp::Atom(head), Sexp::Atom(name), Sexp::List(params), Sexp::Atom(sort), value] = items.as_slice() {
        if head == "define-fun" && params.is_empty() && sort == "Int" {
            if let Some(v) = int_value(value) {
                model.insert(name.clone(), v);
            }
            return;
        }
    }
    for item in items {
        collect(item, model);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_z3_style_models() {
        let text = "sat\n(\n  (define-fun y () Int\n    (- 2))\n  (define-fun x () Int\n    3)\n)\n";
        let items = parse_all(text);
        assert_eq!(items[0], Sexp::Atom("sat".into()));
        let model = integer_model(&items);
        assert_eq!(model["x"], BigInt::from(3));
        assert_eq!(model["y"], BigInt::from(-2));
    }

    #[test]
    fn reads_cvc5_style_models_and_errors() {
        let text = "sat\n(\n(define-fun x () Int 0)\n)\n(error \"model is \\\"not\\\" here\")\n";
        let items = parse_all(text);
        assert_eq!(integer_model(&items)["x"], BigInt::from(0));
        assert_eq!(items.len(), 3);
    }
}
