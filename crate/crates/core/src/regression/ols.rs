//! Ordinary least squares through the normal equations.

use super::lasso::{dot, Standardized};
use super::RegressionError;

#[derive(Debug, Clone, PartialEq)]
pub struct OlsFit {
    /// One coefficient per input column; zero for dropped columns.
    pub beta: Vec<f64>,
    pub intercept: f64,
    /// Columns left out because they are constant or linearly dependent on
    /// earlier columns.
    pub dependent: Vec<usize>,
}

/// Relative pivot size below which a column counts as dependent.
const PIVOT_TOLERANCE: f64 = 1e-10;

/// Least squares with an intercept. Columns are standardized, the Gram
/// matrix is factored by Cholesky, and columns whose pivot vanishes are
/// skipped in order, so that earlier columns are preferred.
pub fn ols(x: &[Vec<f64>], y: &[f64]) -> Result<OlsFit, RegressionError> {
    let n = y.len();
    let width = x.first().map_or(0, |r| r.len());
    if n <= width {
        return Err(RegressionError::DegenerateDesign(format!(
            "{n} rows cannot determine {width} coefficients and an intercept"
        )));
    }
    if width == 0 {
        let intercept = y.iter().sum::<f64>() / n as f64;
        return Ok(OlsFit { beta: Vec::new(), intercept, dependent: Vec::new() });
    }
    let s = Standardized::new(x, y)?;
    let p = s.columns.len();
    let gram: Vec<Vec<f64>> = (0..p)
        .map(|i| (0..p).map(|j| dot(&s.columns[i], &s.columns[j])).collect())
        .collect();

    // Cholesky factor over the accepted columns, one ragged row each.
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut active: Vec<usize> = Vec::new();
    let mut dependent: Vec<usize> = s.dropped.clone();
    for j in 0..p {
        let mut c: Vec<f64> = Vec::with_capacity(active.len() + 1);
        for (a, &k) in active.iter().enumerate() {
            let partial: f64 = (0..a).map(|b| rows[a][b] * c[b]).sum();
            c.push((gram[j][k] - partial) / rows[a][a]);
        }
        let pivot = gram[j][j] - c.iter().map(|v| v * v).sum::<f64>();
        if pivot <= PIVOT_TOLERANCE * gram[j][j] {
            dependent.push(s.kept[j]);
            continue;
        }
        c.push(pivot.sqrt());
        rows.push(c);
        active.push(j);
    }
    dependent.sort_unstable();

    let solve = |rhs: &[f64]| -> Vec<f64> {
        let m = active.len();
        let mut z = vec![0.0; m];
        for a in 0..m {
            let acc: f64 = (0..a).map(|b| rows[a][b] * z[b]).sum();
            z[a] = (rhs[a] - acc) / rows[a][a];
        }
        let mut w = vec![0.0; m];
        for a in (0..m).rev() {
            let acc: f64 = (a + 1..m).map(|b| rows[b][a] * w[b]).sum();
            w[a] = (z[a] - acc) / rows[a][a];
        }
        w
    };
    let project = |r: &[f64]| -> Vec<f64> { active.iter().map(|&j| dot(&s.columns[j], r)).collect() };

    let mut w = solve(&project(&s.y_centered));
    // Iterative refinement against the residual.
    for _ in 0..2 {
        let mut beta_std = vec![0.0; p];
        for (a, &j) in active.iter().enumerate() {
            beta_std[j] = w[a];
        }
        let r = s.residual(&beta_std);
        let correction = solve(&project(&r));
        for (wi, ci) in w.iter_mut().zip(correction) {
            *wi += ci;
        }
    }
    let mut beta_std = vec![0.0; p];
    for (a, &j) in active.iter().enumerate() {
        beta_std[j] = w[a];
    }
    let (beta, intercept) = s.destandardize(&beta_std);
    Ok(OlsFit { beta, intercept, dependent })
}

/// R² of predictions against observations; `None` when undefined because
/// the observations are constant.
pub fn r_squared(observed: &[f64], predicted: &[f64]) -> Option<f64> {
    let mean = observed.iter().sum::<f64>() / observed.len() as f64;
    let ss_tot: f64 = observed.iter().map(|v| (v - mean) * (v - mean)).sum();
    let ss_res: f64 = observed.iter().zip(predicted).map(|(o, p)| (o - p) * (o - p)).sum();
    (ss_tot > 0.0).then(|| 1.0 - ss_res / ss_tot)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_identity_fit() {
        let x: Vec<Vec<f64>> = (0..20).map(|v| vec![v as f64]).collect();
        let y: Vec<f64> = (0..20).map(|v| v as f64).collect();
        let fit = ols(&x, &y).unwrap();
        assert!((fit.beta[0] - 1.0).abs() < 1e-12);
        assert!(fit.intercept.abs() < 1e-12);
    }

    #[test]
    fn quadratic_plus_constant() {
        let x: Vec<Vec<f64>> = (0..20).map(|v| vec![(v * v) as f64]).collect();
        let y: Vec<f64> = (0..20).map(|v| (v * v) as f64 + 5.0).collect();
        let fit = ols(&x, &y).unwrap();
        assert!((fit.beta[0] - 1.0).abs() < 1e-12);
        assert!((fit.intercept - 5.0).abs() < 1e-10);
    }

    #[test]
    fn dependent_columns_are_skipped_in_order() {
        // Third column is the sum of the first two.
        let x: Vec<Vec<f64>> = (0..15)
            .map(|i| {
                let (a, b) = (i as f64, ((i * 7) % 5) as f64);
                vec![a, b, a + b]
            })
            .collect();
        let y: Vec<f64> = x.iter().map(|r| 2.0 * r[0] + 3.0 * r[1] + 1.0).collect();
        let fit = ols(&x, &y).unwrap();
        assert_eq!(fit.dependent, vec![2]);
        assert!((fit.beta[0] - 2.0).abs() < 1e-10 && (fit.beta[1] - 3.0).abs() < 1e-10);
        assert_eq!(fit.beta[2], 0.0);
    }

    #[test]
    fn too_few_rows() {
        let x = vec![vec![1.0, 2.0], vec![2.0, 1.0]];
        assert!(matches!(ols(&x, &[1.0, 2.0]), Err(RegressionError::DegenerateDesign(_))));
    }

    #[test]
    fn noisy_fit_scores_below_one() {
        let x: Vec<Vec<f64>> = (0..20).map(|v| vec![v as f64]).collect();
        let y: Vec<f64> = (0..20).map(|v| v as f64 + if v % 2 == 0 { 0.5 } else { -0.5 }).collect();
        let fit = ols(&x, &y).unwrap();
        let pred: Vec<f64> = x.iter().map(|r| fit.intercept + fit.beta[0] * r[0]).collect();
        let r2 = r_squared(&y, &pred).unwrap();
        assert!(r2 < 1.0 && r2 > 0.9);
    }
}
