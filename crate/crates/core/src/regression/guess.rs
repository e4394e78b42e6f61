//! Candidate generation: sample, regress, prune, refit and rationalize.

use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{cv_lasso_regression, linear_regression, rationalize, remove_terms, select_columns};
use super::{RegressionConfig, RegressionError};
use crate::closed_form::{ClosedForm, Piece, Provenance};
use crate::expr::{Env, Expr, Rational};
use crate::recurrence::{EvalLimits, RecurrenceDef};
use crate::sampling::{build_training_set, sample_split, BaseFunctionSet, SampleConfig, SamplingError, TrainingSet};
use crate::simplify::simplify;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuessConfig {
    pub sample: SampleConfig,
    pub n_test: usize,
    pub regression: RegressionConfig,
    pub limits: EvalLimits,
}

impl Default for GuessConfig {
    fn default() -> Self {
        GuessConfig {
            sample: SampleConfig::default(),
            n_test: 30,
            regression: RegressionConfig::default(),
            limits: EvalLimits::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GuessError {
    #[error(transparent)]
    Sampling(#[from] SamplingError),
    #[error(transparent)]
    Regression(#[from] RegressionError),
}

/// Outcome of the regression on the recursive region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    /// Surviving base functions, with their exact coefficients.
    #[serde(with = "crate::expr::serde_rational::pairs")]
    pub terms: Vec<(String, Rational)>,
    #[serde(with = "crate::expr::serde_rational")]
    pub intercept: Rational,
    pub lambda: f64,
    /// R² of the rationalized candidate on the test rows, clamped to [0, 1].
    pub score: f64,
    pub raw_score: f64,
    /// The rationalized candidate reproduces every test row exactly.
    pub exact: bool,
    pub max_rounding: f64,
    pub train_rows: usize,
    pub test_rows: usize,
    /// Base functions left out because they are undefined on some input.
    pub undefined_terms: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Guess {
    /// Regression result on the recursive cases, base cases copied verbatim.
    pub candidate: ClosedForm,
    /// The fitted expression alone.
    pub expr: Expr,
    pub fit: FitResult,
}

/// Exact R² of `expr` on the rows of `set`; `(clamped, raw, exact)`.
pub fn exact_score(expr: &Expr, args: &[String], set: &TrainingSet) -> (f64, f64, bool) {
    let mut predicted = Vec::with_capacity(set.len());
    for input in &set.inputs {
        match expr.eval(&Env::from_ints(args, input)) {
            Ok(v) => predicted.push(v),
            Err(_) => return (0.0, f64::NEG_INFINITY, false),
        }
    }
    let n = Rational::from_integer(set.len().into());
    let mean = set.targets.iter().fold(Rational::zero(), |a, b| a + b) / n;
    let ss_tot = set.targets.iter().fold(Rational::zero(), |a, b| a + (b - &mean) * (b - &mean));
    let ss_res = set
        .targets
        .iter()
        .zip(&predicted)
        .fold(Rational::zero(), |a, (b, p)| a + (b - p) * (b - p));
    let exact = ss_res.is_zero();
    let raw = if ss_tot.is_zero() {
        if exact {
            1.0
        } else {
            0.0
        }
    } else {
        (Rational::from_integer(1.into()) - ss_res / ss_tot).to_f64().unwrap_or(f64::NEG_INFINITY)
    };
    (raw.clamp(0.0, 1.0), raw, exact)
}

/// Runs the guess stage on the recursive region of `def`.
pub fn guess(def: &RecurrenceDef, base: &BaseFunctionSet, cfg: &GuessConfig) -> Result<Guess, GuessError> {
    cfg.regression.validate()?;
    let region = def.recursive_region();
    let split = sample_split(&region, &def.args, &cfg.sample, cfg.n_test)?;
    let all_inputs: Vec<Vec<i64>> = split.train.iter().chain(&split.test).cloned().collect();
    let (base, undefined_terms) = base.defined_on(&def.args, &all_inputs);
    if !undefined_terms.is_empty() {
        log::debug!("base functions undefined on the samples: {undefined_terms:?}");
    }
    let train = build_training_set(def, &base, &split.train, cfg.limits)?;
    let test = build_training_set(def, &base, &split.test, cfg.limits)?;

    let x = train.features_f64();
    let y = train.targets_f64();
    let rc = &cfg.regression;
    let cv = cv_lasso_regression(&x, &y, &rc.lambda_grid.values(), rc.folds, cfg.sample.seed, &rc.lasso_options())?;
    let survivors = match remove_terms(&cv.fit.beta, rc.epsilon) {
        Ok(kept) => kept,
        Err(RegressionError::AllTermsPruned) => {
            log::debug!("all terms pruned; fitting a constant");
            Vec::new()
        }
        Err(e) => return Err(e.into()),
    };
    let refit = linear_regression(
        &select_columns(&x, &survivors),
        &y,
        &select_columns(&test.features_f64(), &survivors),
        &test.targets_f64(),
    )?;
    let rounded = rationalize(&refit.fit.beta, refit.fit.intercept, rc.max_denominator);

    let mut terms = Vec::new();
    let mut expr = Expr::Const(rounded.intercept.clone());
    for (j, coefficient) in survivors.iter().zip(&rounded.beta) {
        if coefficient.is_zero() {
            continue;
        }
        let f = &base.functions[*j];
        terms.push((f.name.clone(), coefficient.clone()));
        expr = expr + Expr::Const(coefficient.clone()) * f.expr.clone();
    }
    let expr = simplify(&expr);
    let (score, raw_score, exact) = exact_score(&expr, &def.args, &test);
    log::debug!(
        "candidate {expr}: lambda {}, float R² {:.12}, exact R² {raw_score}, max rounding {:e}",
        cv.lambda,
        refit.raw_score,
        rounded.max_delta
    );

    let pieces = def
        .cases
        .iter()
        .enumerate()
        .map(|(i, c)| Piece {
            expr: if def.is_recursive_case(i) { expr.clone() } else { c.body.clone() },
            guard: c.guard.clone(),
        })
        .collect();
    let candidate = ClosedForm { args: def.args.clone(), pre: def.pre.clone(), pieces, provenance: Provenance::Regression };
    let fit = FitResult {
        terms,
        intercept: rounded.intercept,
        lambda: cv.lambda,
        score,
        raw_score,
        exact,
        max_rounding: rounded.max_delta,
        train_rows: train.len(),
        test_rows: test.len(),
        undefined_terms,
    };
    Ok(Guess { candidate: candidate.normalized(), expr, fit })
}
