//! Small dense least-squares helpers shared by feature selection and the
//! linear baselines. Solves go through nalgebra's Cholesky factorisation.

use nalgebra::{DMatrix, DVector};

/// Solves `a x = b` for symmetric positive definite `a` (row-major `n x n`).
/// Returns `None` when the factorisation fails.
pub fn solve_spd(a: &[f64], b: &[f64], n: usize) -> Option<Vec<f64>> {
    assert_eq!(a.len(), n * n);
    assert_eq!(b.len(), n);
    if n == 0 {
        return Some(Vec::new());
    }
    let m = DMatrix::from_row_slice(n, n, a);
    let max_diag = (0..n).map(|i| a[i * n + i].abs()).fold(0.0, f64::max);
    let chol = m.cholesky()?;
    // numerically singular systems factor "successfully" with tiny pivots
    let l = chol.l_dirty();
    if (0..n).any(|i| l[(i, i)] * l[(i, i)] <= 1e-12 * max_diag) {
        return None;
    }
    let x = chol.solve(&DVector::from_column_slice(b));
    if x.iter().all(|v| v.is_finite()) {
        Some(x.iter().copied().collect())
    } else {
        None
    }
}

/// Fitted linear model `y = intercept + coef . x`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearFit {
    pub intercept: f64,
    pub coef: Vec<f64>,
}

impl LinearFit {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.intercept + self.coef.iter().zip(row).map(|(c, x)| c * x).sum::<f64>()
    }
}

/// Closed-form ridge regression with an unpenalised intercept.
///
/// `rows` holds `n` observations of width `p`. With `lambda = 0` this is
/// ordinary least squares and may return `None` on collinear inputs.
pub fn ridge_fit(rows: &[Vec<f64>], y: &[f64], lambda: f64) -> Option<LinearFit> {
    let n = rows.len();
    assert_eq!(n, y.len());
    if n == 0 {
        return None;
    }
    let p = rows[0].len();
    let mut mean = vec![0.0; p];
    for row in rows {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let y_mean = y.iter().sum::<f64>() / n as f64;

    let mut gram = vec![0.0; p * p];
    let mut xty = vec![0.0; p];
    let mut centred = vec![0.0; p];
    for (row, &target) in rows.iter().zip(y) {
        for j in 0..p {
            centred[j] = row[j] - mean[j];
        }
        let ty = target - y_mean;
        for i in 0..p {
            let ci = centred[i];
            xty[i] += ci * ty;
            for j in i..p {
                gram[i * p + j] += ci * centred[j];
            }
        }
    }
    for i in 0..p {
        for j in 0..i {
            gram[i * p + j] = gram[j * p + i];
        }
        gram[i * p + i] += lambda;
    }
    let coef = solve_spd(&gram, &xty, p)?;
    let intercept = y_mean - coef.iter().zip(&mean).map(|(c, m)| c * m).sum::<f64>();
    Some(LinearFit { intercept, coef })
}

/// Coefficient of determination of `pred` against `actual`.
/// `None` when `actual` has zero variance.
pub fn r_squared(pred: &[f64], actual: &[f64]) -> Option<f64> {
    let n = actual.len() as f64;
    let mean = actual.iter().sum::<f64>() / n;
    let sst: f64 = actual.iter().map(|a| (a - mean).powi(2)).sum();
    if sst == 0.0 {
        return None;
    }
    let sse: f64 = pred.iter().zip(actual).map(|(p, a)| (a - p).powi(2)).sum();
    Some(1.0 - sse / sst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_exact_linear_relation() {
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64, (i * i % 7) as f64]).collect();
        let y: Vec<f64> = rows.iter().map(|r| 3.0 + 2.0 * r[0] - 0.5 * r[1]).collect();
        let fit = ridge_fit(&rows, &y, 0.0).unwrap();
        assert!((fit.intercept - 3.0).abs() < 1e-9);
        assert!((fit.coef[0] - 2.0).abs() < 1e-10);
        assert!((fit.coef[1] + 0.5).abs() < 1e-10);
    }

    #[test]
    fn collinear_ols_fails_but_ridge_succeeds() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, 2.0 * i as f64]).collect();
        let y: Vec<f64> = (0..10).map(|i| i as f64).collect();
        assert!(ridge_fit(&rows, &y, 0.0).is_none());
        assert!(ridge_fit(&rows, &y, 1.0).is_some());
    }

    #[test]
    fn r_squared_of_mean_prediction_is_zero() {
        let actual = [1.0, 2.0, 3.0, 6.0];
        let mean = actual.iter().sum::<f64>() / 4.0;
        assert!(r_squared(&[mean; 4], &actual).unwrap().abs() < 1e-15);
        assert_eq!(r_squared(&[1.0, 1.0], &[2.0, 2.0]), None);
    }
}
