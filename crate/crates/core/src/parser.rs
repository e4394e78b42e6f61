//! Lexer and recursive-descent parser for the expression, constraint and
//! recurrence (`.rec`) syntax.
//!
//! ```text
//! # comment
//! def f(x);
//! pre x >= 0;
//! f(x) = 0 if x = 0;
//! f(x) = f(f(x-1)) + 1 if x > 0;
//! ```

use std::fmt;

use num_bigint::BigInt;
use thiserror::Error;

use crate::expr::{CmpOp, Constraint, Expr, Rational};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{line}:{column}: {message}")]
pub struct SyntaxError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(Rational),
    Ident(String),
    Sym(&'static str),
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Num(n) => write!(f, "number `{n}`"),
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Sym(s) => write!(f, "`{s}`"),
            Tok::Eof => write!(f, "end of input"),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    column: usize,
}

// Longest symbols first so that `<=` wins over `<`.
const SYMBOLS: &[(&str, &str)] = &[
    ("==", "="),
    ("!=", "!="),
    ("<>", "!="),
    ("<=", "<="),
    (">=", ">="),
    ("=<", "<="),
    ("&&", "&&"),
    ("||", "||"),
    ("≤", "<="),
    ("≥", ">="),
    ("≠", "!="),
    ("∧", "&&"),
    ("∨", "||"),
    ("¬", "!"),
    ("=", "="),
    ("<", "<"),
    (">", ">"),
    ("!", "!"),
    ("+", "+"),
    ("-", "-"),
    ("*", "*"),
    ("/", "/"),
    ("^", "^"),
    ("(", "("),
    (")", ")"),
    (",", ","),
    (";", ";"),
];

fn lex(text: &str) -> Result<Vec<Token>, SyntaxError> {
    let mut out = Vec::new();
    let mut line = 1;
    let mut column = 1;
    let mut rest = text;
    while let Some(c) = rest.chars().next() {
        if c == '\n' {
            line += 1;
            column = 1;
            rest = &rest[1..];
            continue;
        }
        if c.is_whitespace() {
            column += 1;
            rest = &rest[c.len_utf8()..];
            continue;
        }
        if c == '#' {
            let end = rest.find('\n').unwrap_or(rest.len());
            column += rest[..end].chars().count();
            rest = &rest[end..];
            continue;
        }
        let (tok, len) = if c.is_ascii_digit() {
            let int_len = rest.find(|ch: char| !ch.is_ascii_digit()).unwrap_or(rest.len());
            let mut len = int_len;
            let mut value = Rational::from_integer(rest[..int_len].parse::<BigInt>().unwrap());
            let after = &rest[int_len..];
            if after.starts_with('.') && after[1..].starts_with(|ch: char| ch.is_ascii_digit()) {
                let frac_len = after[1..]
                    .find(|ch: char| !ch.is_ascii_digit())
                    .unwrap_or(after.len() - 1);
                let digits = &after[1..1 + frac_len];
                let scale = num_traits::pow(BigInt::from(10), frac_len);
                value += Rational::new(digits.parse::<BigInt>().unwrap(), scale);
                len += 1 + frac_len;
            }
            (Tok::Num(value), len)
        } else if c.is_alphabetic() || c == '_' {
            let len = rest
                .find(|ch: char| !(ch.is_alphanumeric() || ch == '_' || ch == '\''))
                .unwrap_or(rest.len());
            (Tok::Ident(rest[..len].to_string()), len)
        } else if let Some((src, sym)) = SYMBOLS.iter().find(|(src, _)| rest.starts_with(src)) {
            (Tok::Sym(sym), src.len())
        } else {
            return Err(SyntaxError {
                line,
                column,
                message: format!("unexpected character `{c}`"),
            });
        };
        out.push(Token { tok, line, column });
        column += rest[..len].chars().count();
        rest = &rest[len..];
    }
    out.push(Token { tok: Tok::Eof, line, column });
    Ok(out)
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

const BUILTINS_1: &[&str] = &["floor", "ceil", "log2ceil"];
const BUILTINS_2: &[&str] = &["max", "min"];
const KEYWORDS: &[&str] = &["if", "pre", "def", "and", "or", "not", "true", "false"];

impl Parser {
    fn new(text: &str) -> Result<Parser, SyntaxError> {
        Ok(Parser { toks: lex(text)?, pos: 0 })
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error<T>(&self, message: impl Into<String>) -> Result<T, SyntaxError> {
        let t = &self.toks[self.pos];
        Err(SyntaxError { line: t.line, column: t.column, message: message.into() })
    }

    fn is_sym(&self, s: &str) -> bool {
        matches!(self.peek(), Tok::Sym(x) if *x == s)
    }

    fn is_word(&self, w: &str) -> bool {
        matches!(self.peek(), Tok::Ident(x) if x == w)
    }

    fn eat_sym(&mut self, s: &str) -> bool {
        if self.is_sym(s) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn eat_word(&mut self, w: &str) -> bool {
        if self.is_word(w) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_sym(&mut self, s: &str) -> Result<(), SyntaxError> {
        if self.eat_sym(s) {
            Ok(())
        } else {
            self.error(format!("expected `{s}`, found {}", self.peek()))
        }
    }

    fn expect_ident(&mut self) -> Result<String, SyntaxError> {
        match self.peek().clone() {
            Tok::Ident(name) if !KEYWORDS.contains(&name.as_str()) => {
                self.bump();
                Ok(name)
            }
            other => self.error(format!("expected a name, found {other}")),
        }
    }

    fn expect_eof(&self) -> Result<(), SyntaxError> {
        match self.peek() {
            Tok::Eof => Ok(()),
            other => self.error(format!("unexpected {other}")),
        }
    }

    // expr := term (('+'|'-') term)*
    fn expr(&mut self) -> Result<Expr, SyntaxError> {
        let mut acc = self.term()?;
        loop {
            if self.eat_sym("+") {
                acc = acc + self.term()?;
            } else if self.eat_sym("-") {
                acc = acc - self.term()?;
            } else {
                return Ok(acc);
            }
        }
    }

    fn term(&mut self) -> Result<Expr, SyntaxError> {
        let mut acc = self.unary()?;
        loop {
            if self.eat_sym("*") {
                acc = acc * self.unary()?;
            } else if self.is_sym("/") {
                self.bump();
                let rhs = self.unary()?;
                acc = match Expr::div(acc, rhs) {
                    Ok(e) => e,
                    Err(e) => return self.error(e.to_string()),
                };
            } else {
                return Ok(acc);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, SyntaxError> {
        if self.eat_sym("-") {
            let inner = self.unary()?;
            return Ok(match inner {
                Expr::Const(c) => Expr::Const(-c),
                other => Expr::int(-1) * other,
            });
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, SyntaxError> {
        let base = self.primary()?;
        if self.eat_sym("^") {
            let exponent = self.unary()?;
            return match Expr::pow(base, exponent) {
                Ok(e) => Ok(e),
                Err(e) => self.error(e.to_string()),
            };
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expr, SyntaxError> {
        match self.peek().clone() {
            Tok::Num(n) => {
                self.bump();
                Ok(Expr::Const(n))
            }
            Tok::Sym("(") => {
                self.bump();
                let e = self.expr()?;
                self.expect_sym(")")?;
                Ok(e)
            }
            Tok::Ident(name) if !KEYWORDS.contains(&name.as_str()) => {
                self.bump();
                if !self.eat_sym("(") {
                    return Ok(Expr::Var(name));
                }
                if name == "ite" {
                    let cond = self.constraint()?;
                    self.expect_sym(",")?;
                    let then = self.expr()?;
                    self.expect_sym(",")?;
                    let otherwise = self.expr()?;
                    self.expect_sym(")")?;
                    return Ok(Expr::ite(cond, then, otherwise));
                }
                let args = self.args()?;
                let arity_err = |p: &Parser, n: usize| {
                    p.error(format!("`{name}` takes {n} argument(s), found {}", args.len()))
                };
                if BUILTINS_1.contains(&name.as_str()) {
                    if args.len() != 1 {
                        return arity_err(self, 1);
                    }
                    let a = args.into_iter().next().unwrap();
                    return Ok(match name.as_str() {
                        "floor" => Expr::floor(a),
                        "ceil" => Expr::ceil(a),
                        _ => Expr::log2ceil(a),
                    });
                }
                if BUILTINS_2.contains(&name.as_str()) {
                    if args.len() != 2 {
                        return arity_err(self, 2);
                    }
                    let mut it = args.into_iter();
                    let (a, b) = (it.next().unwrap(), it.next().unwrap());
                    return Ok(if name == "max" { Expr::max(a, b) } else { Expr::min(a, b) });
                }
                Ok(Expr::Call(name, args))
            }
            other => self.error(format!("expected an expression, found {other}")),
        }
    }

    // Arguments after an opening parenthesis, consuming the closing one.
    fn args(&mut self) -> Result<Vec<Expr>, SyntaxError> {
        let mut args = Vec::new();
        if self.eat_sym(")") {
            return Ok(args);
        }
        loop {
            args.push(self.expr()?);
            if self.eat_sym(")") {
                return Ok(args);
            }
            self.expect_sym(",")?;
        }
    }

    fn constraint(&mut self) -> Result<Constraint, SyntaxError> {
        let mut parts = vec![self.conjunction()?];
        while self.eat_sym("||") || self.eat_word("or") {
            parts.push(self.conjunction()?);
        }
        Ok(Constraint::or(parts))
    }

    fn conjunction(&mut self) -> Result<Constraint, SyntaxError> {
        let mut parts = vec![self.negation()?];
        while self.eat_sym("&&") || self.eat_word("and") {
            parts.push(self.negation()?);
        }
        Ok(Constraint::and(parts))
    }

    fn negation(&mut self) -> Result<Constraint, SyntaxError> {
        if self.eat_sym("!") || self.eat_word("not") {
            return Ok(Constraint::Not(Box::new(self.negation()?)));
        }
        self.comparison()
    }

    fn comparison(&mut self) -> Result<Constraint, SyntaxError> {
        if self.eat_word("true") {
            return Ok(Constraint::Bool(true));
        }
        if self.eat_word("false") {
            return Ok(Constraint::Bool(false));
        }
        if self.is_sym("(") {
            // Either a parenthesised constraint or an expression operand.
            let save = self.pos;
            self.bump();
            if let Ok(c) = self.constraint() {
                if self.eat_sym(")") && !self.continues_expression() {
                    return Ok(c);
                }
            }
            self.pos = save;
        }
        let lhs = self.expr()?;
        let op = match self.peek() {
            Tok::Sym("=") => CmpOp::Eq,
            Tok::Sym("!=") => CmpOp::Ne,
            Tok::Sym("<") => CmpOp::Lt,
            Tok::Sym("<=") => CmpOp::Le,
            Tok::Sym(">") => CmpOp::Gt,
            Tok::Sym(">=") => CmpOp::Ge,
            other => return self.error(format!("expected a comparison operator, found {other}")),
        };
        self.bump();
        let rhs = self.expr()?;
        Ok(Constraint::Cmp(op, lhs, rhs))
    }

    fn continues_expression(&self) -> bool {
        matches!(
            self.peek(),
            Tok::Sym("+" | "-" | "*" | "/" | "^" | "=" | "!=" | "<" | "<=" | ">" | ">=")
        )
    }
}

pub fn parse_expr(text: &str) -> Result<Expr, SyntaxError> {
    let mut p = Parser::new(text)?;
    let e = p.expr()?;
    p.expect_eof()?;
    Ok(e)
}

pub fn parse_constraint(text: &str) -> Result<Constraint, SyntaxError> {
    let mut p = Parser::new(text)?;
    let c = p.constraint()?;
    p.expect_eof()?;
    Ok(c)
}

/// A recurrence exactly as written, before semantic validation.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRecurrence {
    pub name: String,
    pub args: Vec<String>,
    pub pre: Option<Constraint>,
    pub cases: Vec<RawCase>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawCase {
    pub params: Vec<String>,
    pub body: Expr,
    pub guard: Constraint,
    pub line: usize,
    pub column: usize,
}

fn param_list(p: &mut Parser) -> Result<Vec<String>, SyntaxError> {
    p.expect_sym("(")?;
    let mut params = Vec::new();
    if p.eat_sym(")") {
        return Ok(params);
    }
    loop {
        params.push(p.expect_ident()?);
        if p.eat_sym(")") {
            return Ok(params);
        }
        p.expect_sym(",")?;
    }
}

/// Parses the `.rec` surface syntax. The `def` header is optional (the
/// first case then names the function) and `pre` may appear anywhere once.
pub fn parse_raw_recurrence(text: &str) -> Result<RawRecurrence, SyntaxError> {
    let mut p = Parser::new(text)?;
    let mut header: Option<(String, Vec<String>)> = None;
    let mut pre = None;
    let mut cases = Vec::new();
    if p.eat_word("def") {
        let name = p.expect_ident()?;
        let args = param_list(&mut p)?;
        p.expect_sym(";")?;
        header = Some((name, args));
    }
    while !matches!(p.peek(), Tok::Eof) {
        if p.is_word("pre") {
            if pre.is_some() {
                return p.error("duplicate `pre` clause");
            }
            p.bump();
            pre = Some(p.constraint()?);
        } else {
            let start = p.toks[p.pos].clone();
            let name = p.expect_ident()?;
            let params = param_list(&mut p)?;
            match &header {
                Some((h, _)) if *h != name => {
                    return Err(SyntaxError {
                        line: start.line,
                        column: start.column,
                        message: format!("case defines `{name}` but the definition is `{h}`"),
                    })
                }
                None => header = Some((name, params.clone())),
                _ => {}
            }
            p.expect_sym("=")?;
            let body = p.expr()?;
            if !p.eat_word("if") {
                return p.error(format!("expected `if`, found {}", p.peek()));
            }
            let guard = p.constraint()?;
            cases.push(RawCase { params, body, guard, line: start.line, column: start.column });
        }
        if !p.eat_sym(";") {
            p.expect_eof()?;
        }
    }
    let Some((name, args)) = header else {
        return p.error("empty recurrence definition");
    };
    if cases.is_empty() {
        return p.error(format!("`{name}` has no cases"));
    }
    Ok(RawRecurrence { name, args, pre, cases })
}

/// Parses closed-form text: either a single expression, or pieces
/// `expr if guard; expr if guard; ...` tried in order.
pub fn parse_pieces(text: &str) -> Result<Vec<(Expr, Constraint)>, SyntaxError> {
    let mut p = Parser::new(text)?;
    let mut pieces = Vec::new();
    loop {
        let e = p.expr()?;
        let guard = if p.eat_word("if") {
            p.constraint()?
        } else {
            Constraint::Bool(true)
        };
        pieces.push((e, guard));
        if p.eat_sym(";") && !matches!(p.peek(), Tok::Eof) {
            continue;
        }
        p.expect_eof()?;
        return Ok(pieces);
    }
}
