//! The bundled benchmark recurrences and their expected outcomes.

use std::collections::BTreeMap;

use serde::Deserialize;

use crate::closed_form::{ClosedForm, ClosedFormError};
use crate::recurrence::{RecurrenceDef, RecurrenceError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExpectedVerdict {
    Verified,
    Refuted,
    Unknown,
    Approximation,
    LikelyNonterminating,
}

/// Contents of a `.expect` sidecar.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct Expectation {
    /// Reference closed form, in closed-form syntax.
    pub reference: Option<String>,
    pub verdict: ExpectedVerdict,
    /// External functions to inline, mapped to the benchmark that defines them.
    #[serde(default)]
    pub inline: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Benchmark {
    pub name: &'static str,
    pub source: &'static str,
    expect: &'static str,
    /// Part of the main evaluation table rather than a fixture.
    pub table: bool,
}

macro_rules! bench {
    ($name:literal, $table:literal) => {
        Benchmark {
            name: $name,
            source: include_str!(concat!("../bench/", $name, ".rec")),
            expect: include_str!(concat!("../bench/", $name, ".expect")),
            table: $table,
        }
    };
}

const BENCHMARKS: &[Benchmark] = &[
    bench!("merge-sz", true),
    bench!("merge", true),
    bench!("nested", true),
    bench!("open-zip", true),
    bench!("div", true),
    bench!("div-ceil", true),
    bench!("s-max", true),
    bench!("s-max-1", true),
    bench!("sum-osc", true),
    bench!("fib", false),
    bench!("nonterm", false),
    bench!("size", false),
    bench!("cost", false),
];

pub fn all() -> &'static [Benchmark] {
    BENCHMARKS
}

/// The nine table benchmarks, in table order.
pub fn table() -> impl Iterator<Item = &'static Benchmark> {
    BENCHMARKS.iter().filter(|b| b.table)
}

pub fn get(name: &str) -> Option<&'static Benchmark> {
    BENCHMARKS.iter().find(|b| b.name == name)
}

impl Benchmark {
    pub fn def(&self) -> Result<RecurrenceDef, RecurrenceError> {
        RecurrenceDef::parse(self.source)
    }

    pub fn expectation(&self) -> Expectation {
        toml::from_str(self.expect).unwrap_or_else(|e| panic!("bad sidecar for {}: {e}", self.name))
    }

    /// The reference solution over the benchmark's own domain.
    pub fn reference(&self, def: &RecurrenceDef) -> Option<Result<ClosedForm, ClosedFormError>> {
        let text = self.expectation().reference?;
        Some(ClosedForm::parse(&text, &def.args, &def.pre))
    }
}
