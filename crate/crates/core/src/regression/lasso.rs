//! Lasso by cyclic coordinate descent on standardized features.
//!
//! The objective is `(1/2n)·‖y_c − Zβ‖² + λ‖β‖₁`, where `Z` holds the
//! standardized feature columns (population standard deviation) and `y_c` the
//! centered targets. The intercept is not penalized.

use super::RegressionError;

/// Standardized design matrix, stored by column.
#[derive(Debug, Clone)]
pub struct Standardized {
    pub n: usize,
    /// Indices of the original columns that were kept.
    pub kept: Vec<usize>,
    /// Indices of constant columns that were dropped.
    pub dropped: Vec<usize>,
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
    pub columns: Vec<Vec<f64>>,
    pub y_mean: f64,
    pub y_centered: Vec<f64>,
    pub width: usize,
}

impl Standardized {
    /// `x` is row-major with one row per observation.
    pub fn new(x: &[Vec<f64>], y: &[f64]) -> Result<Standardized, RegressionError> {
        let n = y.len();
        if n < 2 || x.len() != n {
            return Err(RegressionError::TooFewRows { rows: n, needed: 2 });
        }
        let width = x[0].len();
        let nf = n as f64;
        let y_mean = y.iter().sum::<f64>() / nf;
        let y_centered = y.iter().map(|v| v - y_mean).collect();
        let mut s = Standardized {
            n,
            kept: Vec::new(),
            dropped: Vec::new(),
            means: Vec::new(),
            scales: Vec::new(),
            columns: Vec::new(),
            y_mean,
            y_centered,
            width,
        };
        for j in 0..width {
            let col: Vec<f64> = x.iter().map(|r| r[j]).collect();
            let mean = col.iter().sum::<f64>() / nf;
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / nf;
            let scale = var.sqrt();
            if !(scale > 1e-12 * mean.abs().max(1.0)) {
                s.dropped.push(j);
                continue;
            }
            s.kept.push(j);
            s.means.push(mean);
            s.scales.push(scale);
            s.columns.push(col.iter().map(|v| (v - mean) / scale).collect());
        }
        Ok(s)
    }

    /// Smallest penalty at which every coefficient is zero.
    pub fn lambda_max(&self) -> f64 {
        let nf = self.n as f64;
        self.columns
            .iter()
            .map(|z| dot(z, &self.y_centered).abs() / nf)
            .fold(0.0, f64::max)
    }

    pub fn objective(&self, beta: &[f64], lambda: f64) -> f64 {
        let r = self.residual(beta);
        dot(&r, &r) / (2.0 * self.n as f64) + lambda * beta.iter().map(|b| b.abs()).sum::<f64>()
    }

    pub fn residual(&self, beta: &[f64]) -> Vec<f64> {
        let mut r = self.y_centered.clone();
        for (z, b) in self.columns.iter().zip(beta) {
            if *b != 0.0 {
                axpy(-b, z, &mut r);
            }
        }
        r
    }

    /// Coordinate descent from `warm` (standardized coefficients).
    pub fn fit(&self, lambda: f64, warm: &[f64], opts: &LassoOptions) -> Result<StdFit, RegressionError> {
        if !(lambda > 0.0) {
            return Err(RegressionError::InvalidConfig(format!("lambda must be positive, got {lambda}")));
        }
        let nf = self.n as f64;
        let mut beta = warm.to_vec();
        let mut r = self.residual(&beta);
        let mut previous = f64::INFINITY;
        for sweep in 1..=opts.max_sweeps {
            let mut max_change: f64 = 0.0;
            for (j, z) in self.columns.iter().enumerate() {
                let rho = dot(z, &r) / nf + beta[j];
                let updated = soft_threshold(rho, lambda);
                let delta = updated - beta[j];
                if delta != 0.0 {
                    axpy(-delta, z, &mut r);
                    beta[j] = updated;
                    max_change = max_change.max(delta.abs());
                }
            }
            if cfg!(debug_assertions) {
                let objective = dot(&r, &r) / (2.0 * nf) + lambda * beta.iter().map(|b| b.abs()).sum::<f64>();
                debug_assert!(
                    objective <= previous + 1e-9 * previous.abs().max(1.0),
                    "objective increased from {previous} to {objective}"
                );
                previous = objective;
            }
            let scale = beta.iter().fold(1.0_f64, |m, b| m.max(b.abs()));
            if max_change < opts.tolerance * scale {
                return Ok(StdFit { beta, sweeps: sweep, converged: true });
            }
        }
        log::debug!("lasso did not converge in {} sweeps at lambda {lambda}", opts.max_sweeps);
        Ok(StdFit { beta, sweeps: opts.max_sweeps, converged: false })
    }

    /// Maps standardized coefficients back to the original feature scale,
    /// with zeros for dropped columns.
    pub fn destandardize(&self, beta: &[f64]) -> (Vec<f64>, f64) {
        let mut out = vec![0.0; self.width];
        let mut intercept = self.y_mean;
        for (k, &j) in self.kept.iter().enumerate() {
            let b = beta[k] / self.scales[k];
            out[j] = b;
            intercept -= b * self.means[k];
        }
        (out, intercept)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LassoOptions {
    /// Stop when no coefficient moves more than this in one sweep, relative
    /// to the largest coefficient once that exceeds one.
    pub tolerance: f64,
    pub max_sweeps: usize,
}

impl Default for LassoOptions {
    fn default() -> Self {
        LassoOptions { tolerance: 1e-8, max_sweeps: 100_000 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StdFit {
    pub beta: Vec<f64>,
    pub sweeps: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LassoFit {
    /// Coefficients on the original scale, one per input column.
    pub beta: Vec<f64>,
    pub intercept: f64,
    /// Coefficients on the standardized scale, one per kept column.
    pub beta_std: Vec<f64>,
    /// Constant columns that were left out of the fit.
    pub dropped: Vec<usize>,
    pub sweeps: usize,
}

/// Fits the Lasso at a single penalty, starting from zero.
pub fn lasso_fit(x: &[Vec<f64>], y: &[f64], lambda: f64, opts: &LassoOptions) -> Result<LassoFit, RegressionError> {
    let s = Standardized::new(x, y)?;
    if !s.dropped.is_empty() {
        log::debug!("dropping constant columns {:?}", s.dropped);
    }
    let fit = s.fit(lambda, &vec![0.0; s.columns.len()], opts)?;
    let (beta, intercept) = s.destandardize(&fit.beta);
    Ok(LassoFit { beta, intercept, beta_std: fit.beta, dropped: s.dropped.clone(), sweeps: fit.sweeps })
}

/// Fits along `lambdas` (any order), warm-starting each fit from the
/// previous one in decreasing-λ order. Results follow the input order.
pub fn lasso_path(s: &Standardized, lambdas: &[f64], opts: &LassoOptions) -> Result<Vec<StdFit>, RegressionError> {
    let mut order: Vec<usize> = (0..lambdas.len()).collect();
    order.sort_by(|a, b| lambdas[*b].total_cmp(&lambdas[*a]));
    let mut fits: Vec<Option<StdFit>> = vec![None; lambdas.len()];
    let mut warm = vec![0.0; s.columns.len()];
    for i in order {
        let fit = s.fit(lambdas[i], &warm, opts)?;
        warm.clone_from(&fit.beta);
        fits[i] = Some(fit);
    }
    Ok(fits.into_iter().map(|f| f.expect("every lambda fitted")).collect())
}

pub fn soft_threshold(v: f64, lambda: f64) -> f64 {
    if v > lambda {
        v - lambda
    } else if v < -lambda {
        v + lambda
    } else {
        0.0
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}
