use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::stats::sigmoid;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticParams {
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2: f64,
}

impl Default for LogisticParams {
    fn default() -> Self {
        Self {
            learning_rate: 0.5,
            epochs: 300,
            l2: 1e-3,
        }
    }
}

/// L2-regularized logistic regression trained by full-batch gradient descent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticRegression {
    pub params: LogisticParams,
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LogisticRegression {
    pub fn new(params: LogisticParams) -> Self {
        Self {
            params,
            weights: Vec::new(),
            bias: 0.0,
        }
    }

    pub fn margin(&self, row: &[f64]) -> f64 {
        self.bias + self.weights.iter().zip(row).map(|(w, x)| w * x).sum::<f64>()
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        sigmoid(self.margin(row))
    }

    /// Runs `params.epochs` gradient steps starting from the current weights.
    pub fn fit(&mut self, x: &[Vec<f64>], y: &[f64]) {
        let Some(width) = x.first().map(Vec::len) else {
            return;
        };
        if self.weights.len() != width {
            self.weights = vec![0.0; width];
            self.bias = 0.0;
        }
        let n = x.len() as f64;
        let mut grad_w = vec![0.0; width];
        for _ in 0..self.params.epochs {
            grad_w.iter_mut().for_each(|g| *g = 0.0);
            let mut grad_b = 0.0;
            for (row, &target) in x.iter().zip(y) {
                let err = self.predict(row) - target;
                for (g, v) in grad_w.iter_mut().zip(row) {
                    *g += err * v;
                }
                grad_b += err;
            }
            for (w, g) in self.weights.iter_mut().zip(&grad_w) {
                *w -= self.params.learning_rate * (g / n + self.params.l2 * *w);
            }
            self.bias -= self.params.learning_rate * grad_b / n;
        }
    }
}

/// Ridge regression with an unpenalized intercept, solved in closed form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeRegression {
    pub alpha: f64,
    pub weights: Vec<f64>,
    pub intercept: f64,
}

impl RidgeRegression {
    pub fn fit(x: &[Vec<f64>], y: &[f64], alpha: f64) -> Self {
        let n = x.len();
        let width = x.first().map_or(0, Vec::len);
        let y_mean = crate::stats::mean(y);
        let x_mean: Vec<f64> = (0..width)
            .map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n as f64)
            .collect();
        let xc = DMatrix::from_fn(n, width, |i, j| x[i][j] - x_mean[j]);
        let yc = DVector::from_iterator(n, y.iter().map(|v| v - y_mean));
        let gram = xc.transpose() * &xc + DMatrix::identity(width, width) * alpha.max(1e-10);
        let rhs = xc.transpose() * yc;
        let w = gram
            .clone()
            .cholesky()
            .map(|c| c.solve(&rhs))
            .or_else(|| gram.lu().solve(&rhs))
            .unwrap_or_else(|| DVector::zeros(width));
        let weights: Vec<f64> = w.iter().copied().collect();
        let intercept = y_mean - weights.iter().zip(&x_mean).map(|(w, m)| w * m).sum::<f64>();
        Self {
            alpha,
            weights,
            intercept,
        }
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        self.intercept + self.weights.iter().zip(row).map(|(w, x)| w * x).sum::<f64>()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ridge_recovers_exact_line() {
        let x: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64, (i % 3) as f64]).collect();
        let y: Vec<f64> = x.iter().map(|r| 2.0 + 3.0 * r[0] - r[1]).collect();
        let m = RidgeRegression::fit(&x, &y, 1e-9);
        assert!((m.weights[0] - 3.0).abs() < 1e-6);
        assert!((m.weights[1] + 1.0).abs() < 1e-6);
        assert!((m.intercept - 2.0).abs() < 1e-6);
    }

    #[test]
    fn logistic_warm_start_continues_from_weights() {
        let x = vec![vec![0.0], vec![1.0], vec![2.0], vec![3.0]];
        let y = vec![0.0, 0.0, 1.0, 1.0];
        let params = LogisticParams {
            epochs: 50,
            ..LogisticParams::default()
        };
        let mut once = LogisticRegression::new(params);
        once.fit(&x, &y);
        let mut twice = once.clone();
        twice.fit(&x, &y);
        let mut long = LogisticRegression::new(LogisticParams { epochs: 100, ..params });
        long.fit(&x, &y);
        assert_eq!(twice.weights, long.weights);
        assert_eq!(twice.bias, long.bias);
    }
}
