//! k-fold cross-validated choice of the Lasso penalty.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::lasso::{lasso_path, LassoFit, LassoOptions, Standardized};
use super::RegressionError;

#[derive(Debug, Clone, PartialEq)]
pub struct CvResult {
    pub fit: LassoFit,
    pub lambda: f64,
    /// Mean validation MSE per λ, in grid order.
    pub errors: Vec<f64>,
}

/// Row indices of each fold: rows are shuffled with `seed` and dealt out
/// round-robin.
pub fn fold_assignment(rows: usize, k: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..rows).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut folds = vec![Vec::new(); k];
    for (i, row) in order.into_iter().enumerate() {
        folds[i % k].push(row);
    }
    folds
}

/// Selects λ by mean validation MSE over `k` folds (ties go to the larger
/// λ) and refits on all rows.
pub fn cv_lasso_regression(
    x: &[Vec<f64>],
    y: &[f64],
    lambdas: &[f64],
    k: usize,
    seed: u64,
    opts: &LassoOptions,
) -> Result<CvResult, RegressionError> {
    if k < 2 {
        return Err(RegressionError::InvalidConfig(format!("at least 2 folds are needed, got {k}")));
    }
    if lambdas.is_empty() || lambdas.iter().any(|l| !(*l > 0.0)) {
        return Err(RegressionError::InvalidConfig("the lambda grid must be non-empty and positive".into()));
    }
    let n = y.len();
    if n < 2 * k {
        return Err(RegressionError::TooFewRows { rows: n, needed: 2 * k });
    }
    let mut errors = vec![0.0; lambdas.len()];
    for fold in fold_assignment(n, k, seed) {
        let mut held = vec![false; n];
        for &i in &fold {
            held[i] = true;
        }
        let (train_x, train_y): (Vec<Vec<f64>>, Vec<f64>) =
            (0..n).filter(|i| !held[*i]).map(|i| (x[i].clone(), y[i])).unzip();
        let s = Standardized::new(&train_x, &train_y)?;
        let path = lasso_path(&s, lambdas, opts)?;
        for (err, fit) in errors.iter_mut().zip(&path) {
            let (beta, intercept) = s.destandardize(&fit.beta);
            let mse = fold
                .iter()
                .map(|&i| {
                    let pred = intercept + x[i].iter().zip(&beta).map(|(a, b)| a * b).sum::<f64>();
                    (y[i] - pred) * (y[i] - pred)
                })
                .sum::<f64>()
                / fold.len() as f64;
            *err += mse / k as f64;
        }
    }
    let mut best = 0;
    for i in 1..lambdas.len() {
        let better = errors[i] < errors[best];
        let tie_to_larger = errors[i] == errors[best] && lambdas[i] > lambdas[best];
        if better || tie_to_larger {
            best = i;
        }
    }
    let lambda = lambdas[best];
    let s = Standardized::new(x, y)?;
    let std_fit = s.fit(lambda, &vec![0.0; s.columns.len()], opts)?;
    let (beta, intercept) = s.destandardize(&std_fit.beta);
    let fit = LassoFit { beta, intercept, beta_std: std_fit.beta, dropped: s.dropped.clone(), sweeps: std_fit.sweeps };
    Ok(CvResult { fit, lambda, errors })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regression::lambda_grid;
    use rand::Rng;

    #[test]
    fn folds_partition_rows() {
        let folds = fold_assignment(11, 2, 3);
        assert_eq!(folds[0].len(), 6);
        assert_eq!(folds[1].len(), 5);
        let mut all: Vec<usize> = folds.concat();
        all.sort();
        assert_eq!(all, (0..11).collect::<Vec<_>>());
        assert_eq!(folds, fold_assignment(11, 2, 3));
    }

    #[test]
    fn identity_data_keeps_the_linear_term() {
        let x: Vec<Vec<f64>> = (0..40).map(|v| {
            let v = v as f64;
            vec![v, v * v, v * v * v]
        }).collect();
        let y: Vec<f64> = (0..40).map(|v| v as f64).collect();
        let cv = cv_lasso_regression(&x, &y, &lambda_grid(100, 0.001, 1.0), 2, 0, &LassoOptions::default()).unwrap();
        assert!(cv.fit.beta[0] > 0.5, "{:?}", cv.fit.beta);
        assert!(cv.fit.beta[1].abs() < 0.05 && cv.fit.beta[2].abs() < 0.05);
    }

    #[test]
    fn pure_noise_selects_a_null_model() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x: Vec<Vec<f64>> = (0..60).map(|_| vec![rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)]).collect();
        let y: Vec<f64> = (0..60).map(|_| rng.gen_range(0.0..1.0)).collect();
        let grid = lambda_grid(100, 0.001, 1.0);
        let cv = cv_lasso_regression(&x, &y, &grid, 2, 0, &LassoOptions::default()).unwrap();
        assert!(cv.fit.beta.iter().all(|b| b.abs() < 0.05), "{:?}", cv.fit.beta);
    }

    #[test]
    fn rejects_a_single_fold() {
        let x = vec![vec![1.0]; 10];
        let y = vec![1.0; 10];
        assert!(matches!(
            cv_lasso_regression(&x, &y, &[0.1], 1, 0, &LassoOptions::default()),
            Err(RegressionError::InvalidConfig(_))
        ));
    }
}
