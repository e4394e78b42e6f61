//! The guess stage: sparse regression over the base-function dictionary.

pub mod cv;
pub mod guess;
pub mod lasso;
pub mod ols;
pub mod rational;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cv::{cv_lasso_regression, CvResult};
pub use guess::{guess, FitResult, Guess, GuessConfig, GuessError};
pub use lasso::{lasso_fit, LassoFit, LassoOptions};
pub use ols::{ols, r_squared, OlsFit};
pub use rational::{best_rational, rationalize, Rationalized};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RegressionError {
    #[error("degenerate design: {0}")]
    DegenerateDesign(String),
    #[error("every term was pruned; the candidate is a constant")]
    AllTermsPruned,
    #[error("{rows} rows are too few; at least {needed} are needed")]
    TooFewRows { rows: usize, needed: usize },
    #[error("invalid regression configuration: {0}")]
    InvalidConfig(String),
}

/// `count` penalties spaced geometrically over `[lo, hi]`, largest first.
pub fn lambda_grid(count: usize, lo: f64, hi: f64) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![hi],
        _ => {
            let ratio = (lo / hi).ln() / (count - 1) as f64;
            (0..count).map(|i| hi * (ratio * i as f64).exp()).collect()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaGrid {
    pub count: usize,
    pub lo: f64,
    pub hi: f64,
}

impl LambdaGrid {
    pub fn values(&self) -> Vec<f64> {
        lambda_grid(self.count, self.lo, self.hi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionConfig {
    pub lambda_grid: LambdaGrid,
    pub folds: usize,
    /// Coefficients below this magnitude are pruned before the refit.
    pub epsilon: f64,
    pub max_denominator: u64,
    pub tolerance: f64,
    pub max_sweeps: usize,
}

impl Default for RegressionConfig {
    fn default() -> Self {
        RegressionConfig {
            lambda_grid: LambdaGrid { count: 100, lo: 0.001, hi: 1.0 },
            folds: 2,
            epsilon: 0.05,
            max_denominator: 64,
            tolerance: 1e-8,
            max_sweeps: 100_000,
        }
    }
}

impl RegressionConfig {
    pub fn validate(&self) -> Result<(), RegressionError> {
        let g = &self.lambda_grid;
        let problem = if self.folds < 2 {
            Some("at least 2 folds are needed".to_string())
        } else if !(self.epsilon > 0.0) {
            Some("epsilon must be positive".into())
        } else if g.count == 0 || !(g.lo > 0.0) || g.lo > g.hi {
            Some(format!("bad lambda grid {}:{}:{}", g.count, g.lo, g.hi))
        } else if self.max_denominator == 0 {
            Some("max denominator must be at least 1".into())
        } else {
            None
        };
        match problem {
            Some(p) => Err(RegressionError::InvalidConfig(p)),
            None => Ok(()),
        }
    }

    pub fn lasso_options(&self) -> LassoOptions {
        LassoOptions { tolerance: self.tolerance, max_sweeps: self.max_sweeps }
    }
}

/// Indices of the coefficients whose magnitude is at least `epsilon`.
pub fn remove_terms(beta: &[f64], epsilon: f64) -> Result<Vec<usize>, RegressionError> {
    let kept: Vec<usize> = (0..beta.len()).filter(|i| beta[*i].abs() >= epsilon).collect();
    if kept.is_empty() {
        Err(RegressionError::AllTermsPruned)
    } else {
        Ok(kept)
    }
}

/// Keeps only the given columns of a row-major matrix.
pub fn select_columns(x: &[Vec<f64>], columns: &[usize]) -> Vec<Vec<f64>> {
    x.iter().map(|r| columns.iter().map(|&j| r[j]).collect()).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearFit {
    pub fit: OlsFit,
    /// R² on the test rows, clamped to `[0, 1]`.
    pub score: f64,
    pub raw_score: f64,
}

/// OLS on the training rows, scored on the test rows.
pub fn linear_regression(
    train_x: &[Vec<f64>],
    train_y: &[f64],
    test_x: &[Vec<f64>],
    test_y: &[f64],
) -> Result<LinearFit, RegressionError> {
    let fit = ols(train_x, train_y)?;
    let predicted: Vec<f64> = test_x
        .iter()
        .map(|r| fit.intercept + r.iter().zip(&fit.beta).map(|(a, b)| a * b).sum::<f64>())
        .collect();
    let raw_score = r_squared(test_y, &predicted).unwrap_or_else(|| {
        let exact = test_y.iter().zip(&predicted).all(|(o, p)| (o - p).abs() <= 1e-9 * o.abs().max(1.0));
        if exact {
            1.0
        } else {
            0.0
        }
    });
    Ok(LinearFit { fit, score: raw_score.clamp(0.0, 1.0), raw_score })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_endpoints() {
        let g = lambda_grid(100, 0.001, 1.0);
        assert_eq!(g.len(), 100);
        assert_eq!(g[0], 1.0);
        assert!((g[99] - 0.001).abs() < 1e-15);
        assert!(g.windows(2).all(|w| w[0] > w[1]));
    }

    #[test]
    fn pruning() {
        assert_eq!(remove_terms(&[1.02, 0.003, 0.0], 0.05).unwrap(), vec![0]);
        assert_eq!(remove_terms(&[1.0, -2.0], 0.05).unwrap(), vec![0, 1]);
        assert_eq!(remove_terms(&[0.0, 0.0], 0.05), Err(RegressionError::AllTermsPruned));
    }

    #[test]
    fn config_validation() {
        assert!(RegressionConfig::default().validate().is_ok());
        let bad = RegressionConfig { folds: 1, ..RegressionConfig::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn scored_on_test_rows() {
        let train_x: Vec<Vec<f64>> = (0..10).map(|v| vec![v as f64]).collect();
        let train_y: Vec<f64> = (0..10).map(|v| v as f64).collect();
        let fit = linear_regression(&train_x, &train_y, &[vec![20.0], vec![30.0]], &[20.0, 30.0]).unwrap();
        assert!((fit.score - 1.0).abs() < 1e-12);
        let worse = linear_regression(&train_x, &train_y, &[vec![20.0], vec![30.0]], &[0.0, 100.0]).unwrap();
        assert_eq!(worse.score, 0.0);
        assert!(worse.raw_score < 0.0);
    }
}
