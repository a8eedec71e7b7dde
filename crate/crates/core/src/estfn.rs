//! Full-data estimating functions `M(L; beta)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::VariableSchema;
use crate::error::{Error, Result};
use crate::missingness::expit;

/// A moment function of the complete data with an analytic Jacobian.
pub trait EstimatingFunction: Send + Sync {
    fn dim(&self) -> usize;

    /// `M(L; beta)` for a fully observed row `l`.
    fn evaluate(&self, l: &[f64], beta: &[f64]) -> DVector<f64>;

    /// `dM / d beta`, `dim x dim`.
    fn jacobian(&self, l: &[f64], beta: &[f64]) -> DMatrix<f64>;

    fn coefficient_names(&self) -> Vec<String>;

    /// Whether `exp(beta)` is meaningful (odds ratios).
    fn is_logistic(&self) -> bool {
        false
    }
}

/// Logistic-regression score `(1, X)^T {Y - expit(beta . (1, X))}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogisticScore {
    pub outcome: usize,
    pub covariates: Vec<usize>,
    #[serde(default)]
    pub names: Vec<String>,
}

impl LogisticScore {
    pub fn new(outcome: usize, covariates: Vec<usize>) -> Self {
        let mut names = vec!["(Intercept)".to_string()];
        names.extend(covariates.iter().map(|c| format!("x{c}")));
        Self { outcome, covariates, names }
    }

    /// Resolve column names against a schema.
    pub fn from_names(schema: &VariableSchema, outcome: &str, covariates: &[String]) -> Result<Self> {
        let y = schema.require(outcome)?;
        let xs = covariates
            .iter()
            .map(|c| schema.require(c))
            .collect::<Result<Vec<_>>>()?;
        if xs.contains(&y) {
            return Err(Error::Config(format!("outcome `{outcome}` is also listed as a covariate")));
        }
        let mut names = vec!["(Intercept)".to_string()];
        names.extend(covariates.iter().cloned());
        Ok(Self { outcome: y, covariates: xs, names })
    }

    /// `(1, X)` for a complete row.
    pub fn design(&self, l: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            self.dim(),
            std::iter::once(1.0).chain(self.covariates.iter().map(|&c| l[c])),
        )
    }

    pub fn linear_predictor(&self, l: &[f64], beta: &[f64]) -> f64 {
        beta[0] + self.covariates.iter().zip(&beta[1..]).map(|(&c, b)| b * l[c]).sum::<f64>()
    }

    pub fn fitted(&self, l: &[f64], beta: &[f64]) -> f64 {
        expit(self.linear_predictor(l, beta))
    }

    pub fn residual(&self, l: &[f64], beta: &[f64]) -> f64 {
        l[self.outcome] - self.fitted(l, beta)
    }
}

impl EstimatingFunction for LogisticScore {
    fn dim(&self) -> usize {
        self.covariates.len() + 1
    }

    fn evaluate(&self, l: &[f64], beta: &[f64]) -> DVector<f64> {
        self.design(l) * self.residual(l, beta)
    }

    fn jacobian(&self, l: &[f64], beta: &[f64]) -> DMatrix<f64> {
        let x = self.design(l);
        let p = self.fitted(l, beta);
        &x * x.transpose() * (-p * (1.0 - p))
    }

    fn coefficient_names(&self) -> Vec<String> {
        self.names.clone()
    }

    fn is_logistic(&self) -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jacobian_matches_finite_differences() {
        let ef = LogisticScore::new(0, vec![1, 2]);
        let l = [1.0, 0.3, -1.2];
        let beta = [0.2, -0.5, 0.7];
        let jac = ef.jacobian(&l, &beta);
        let h = 1e-6;
        for k in 0..3 {
            let mut up = beta;
            let mut dn = beta;
            up[k] += h;
            dn[k] -= h;
            let fd = (ef.evaluate(&l, &up) - ef.evaluate(&l, &dn)) / (2.0 * h);
            for r in 0..3 {
                let rel = (fd[r] - jac[(r, k)]).abs() / jac[(r, k)].abs().max(1e-8);
                assert!(rel < 1e-5);
            }
        }
    }

    #[test]
    fn score_form() {
        let ef = LogisticScore::new(2, vec![0]);
        let m = ef.evaluate(&[2.0, 9.0, 1.0], &[0.0, 0.0]);
        assert_eq!(m.as_slice(), &[0.5, 1.0]);
    }
}
