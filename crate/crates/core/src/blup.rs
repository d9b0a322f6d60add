//! Ridge-regression BLUP over spectral features.
//!
//! With `y_c = y - mean(y)` the effects solve `(X^T X + lambda I) beta = X^T y_c`.
//! When there are more features than samples the equivalent dual system
//! `beta = X^T (X X^T + lambda I)^{-1} y_c` is solved instead. Scores are
//! `mean(y) + x . beta`, never clamped.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, Cholesky, Matrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlupModel {
    pub effects: Vec<f64>,
    pub intercept: f64,
    pub lambda: f64,
    /// Bins per variable of the feature space the model was fitted on.
    pub k: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Solver {
    /// Dual when `p > n`, primal otherwise.
    #[default]
    Auto,
    Primal,
    Dual,
}

/// How the ridge penalty is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule", content = "value")]
pub enum LambdaRule {
    /// `lambda = p`.
    #[default]
    FeatureCount,
    Fixed(f64),
    /// Smallest leave-one-out error over `{p/100, p/10, p, 10p, 100p}`.
    LeaveOneOut,
}

impl LambdaRule {
    pub fn grid(p: usize) -> [f64; 5] {
        let p = p as f64;
        [p / 100.0, p / 10.0, p, 10.0 * p, 100.0 * p]
    }
}

fn check_inputs(x: &Matrix, y: &[f64], lambda: f64) -> Result<()> {
    if x.rows() < 2 {
        return Err(Error::InvalidInput(format!("BLUP needs at least 2 samples, got {}", x.rows())));
    }
    if y.len() != x.rows() {
        return Err(Error::DimensionMismatch(format!("{} labels for {} samples", y.len(), x.rows())));
    }
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidInput(format!("lambda must be positive and finite, got {lambda}")));
    }
    if let Some(i) = x.as_slice().iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!("non-finite feature in row {}", i / x.cols().max(1))));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite label".into()));
    }
    Ok(())
}

pub fn fit_blup(x: &Matrix, y: &[f64], lambda: f64) -> Result<BlupModel> {
    fit_blup_with(x, y, lambda, Solver::Auto)
}

pub fn fit_blup_with(x: &Matrix, y: &[f64], lambda: f64, solver: Solver) -> Result<BlupModel> {
    check_inputs(x, y, lambda)?;
    let n = x.rows();
    let p = x.cols();
    let mean = y.iter().sum::<f64>() / n as f64;
    let yc: Vec<f64> = y.iter().map(|v| v - mean).collect();
    let dual = match solver {
        Solver::Auto => p > n,
        Solver::Primal => false,
        Solver::Dual => true,
    };
    let effects = if dual {
        let mut k = x.gram_rows();
        k.add_diagonal(lambda);
        let alpha = Cholesky::factor(&k)?.solve(&yc);
        x.tmatvec(&alpha)
    } else {
        let mut a = x.gram_cols();
        a.add_diagonal(lambda);
        Cholesky::factor(&a)?.solve(&x.tmatvec(&yc))
    };
    if effects.iter().any(|e| !e.is_finite()) {
        return Err(Error::Numerical("ridge solve produced non-finite effects".into()));
    }
    Ok(BlupModel {
        effects,
        intercept: mean,
        lambda,
        k: 0,
        seed: 0,
    })
}

/// Leave-one-out mean squared error of ridge regression with a free intercept.
///
/// With `X_c` the column-centered design, `K = X_c X_c^T` and
/// `A = K (K + lambda I)^{-1} = I - lambda (K + lambda I)^{-1}`, the fit is the
/// linear smoother `H = J/n + A`, so the held-out residual of sample `i` is
/// `e_i / (1 - H_ii)` without refitting.
pub fn loo_errors(x: &Matrix, y: &[f64], lambdas: &[f64]) -> Result<Vec<f64>> {
    let n = x.rows();
    let p = x.cols();
    let mut centered = x.clone();
    for j in 0..p {
        let m = (0..n).map(|i| x.get(i, j)).sum::<f64>() / n as f64;
        for i in 0..n {
            centered.set(i, j, x.get(i, j) - m);
        }
    }
    let kernel = centered.gram_rows();
    let mean = y.iter().sum::<f64>() / n as f64;
    let yc: Vec<f64> = y.iter().map(|v| v - mean).collect();
    let mut out = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        check_inputs(x, y, lambda)?;
        let mut reg = kernel.clone();
        reg.add_diagonal(lambda);
        let inv = Cholesky::factor(&reg)?.inverse();
        let inv_yc = inv.matvec(&yc);
        let mut sse = 0.0;
        for i in 0..n {
            let resid = lambda * inv_yc[i];
            let h_ii = 1.0 / n as f64 + 1.0 - lambda * inv.get(i, i);
            let denom = 1.0 - h_ii;
            if denom.abs() < 1e-12 {
                return Err(Error::Numerical(format!("leave-one-out leverage of sample {i} is 1")));
            }
            sse += (resid / denom).powi(2);
        }
        out.push(sse / n as f64);
    }
    Ok(out)
}

/// Resolves the rule to a concrete penalty for this design matrix.
pub fn choose_lambda(x: &Matrix, y: &[f64], rule: LambdaRule) -> Result<f64> {
    let p = x.cols();
    match rule {
        LambdaRule::FeatureCount => Ok(p.max(1) as f64),
        LambdaRule::Fixed(l) => Ok(l),
        LambdaRule::LeaveOneOut => {
            let grid = LambdaRule::grid(p.max(1));
            let errs = loo_errors(x, y, &grid)?;
            let best = (0..grid.len())
                .min_by(|a, b| errs[*a].total_cmp(&errs[*b]).then(a.cmp(b)))
                .expect("non-empty grid");
            Ok(grid[best])
        }
    }
}

impl BlupModel {
    pub fn n_features(&self) -> usize {
        self.effects.len()
    }

    pub fn predict_row(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.effects.len() {
            return Err(Error::DimensionMismatch(format!(
                "feature vector has {} entries, model expects {}",
                x.len(),
                self.effects.len()
            )));
        }
        Ok(self.intercept + dot(x, &self.effects))
    }

    /// Rounds parameters to `f32`-representable values, as stored in bundles.
    pub fn quantized(&self) -> BlupModel {
        BlupModel {
            effects: self.effects.iter().map(|e| *e as f32 as f64).collect(),
            intercept: self.intercept as f32 as f64,
            lambda: self.lambda,
            k: self.k,
            seed: self.seed,
        }
    }
}

pub fn predict_blup(model: &BlupModel, x: &Matrix) -> Result<Vec<f64>> {
    (0..x.rows()).map(|i| model.predict_row(x.row(i))).collect()
}
