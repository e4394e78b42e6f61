//! Guess-and-check solving of constrained recurrence relations.
//!
//! A recurrence is evaluated on sampled inputs, a closed-form candidate is
//! fitted by sparse linear regression over a dictionary of base functions,
//! and the candidate is then checked symbolically with an SMT solver.

pub mod checker;
pub mod closed_form;
pub mod expr;
pub mod parser;
pub mod pipeline;
pub mod recurrence;
pub mod simplify;
pub mod subst;
pub mod sampling;
pub mod regression;
pub mod corpus;
