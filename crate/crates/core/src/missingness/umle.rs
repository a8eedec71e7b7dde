use serde::{Deserialize, Serialize};

use super::{logit, MissingnessModel, MissingnessParams};
use crate::data::{ObservedDataset, PatternRegistry};
use crate::error::{Error, Result};
use crate::optim::{bfgs_minimize, nelder_mead, BfgsStatus};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UmleConfig {
    /// Sup-norm tolerance on the (summed) score.
    pub score_tol: f64,
    pub max_iter: usize,
    /// Objective evaluations allowed to the simplex fallback.
    pub fallback_evals: usize,
}

impl Default for UmleConfig {
    fn default() -> Self {
        Self {
            score_tol: 1e-6,
            max_iter: 500,
            fallback_evals: 2000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UmleMethod {
    QuasiNewton,
    DerivativeFreeFallback,
}

#[derive(Debug, Clone, Serialize)]
pub struct UmleReport {
    pub params: MissingnessParams,
    pub converged: bool,
    pub method: UmleMethod,
    pub iterations: usize,
    pub fallback_evaluations: usize,
    pub log_likelihood: f64,
    pub max_abs_score: f64,
    pub min_complete_case_probability: f64,
    pub message: String,
}

/// Intercepts at the empirical log-odds of each pattern, slopes zero.
/// Feasible whenever the data contain a complete case.
pub fn default_init(registry: &PatternRegistry, dataset: &ObservedDataset) -> MissingnessParams {
    let counts = dataset.pattern_counts(registry);
    let n = dataset.n().max(1) as f64;
    let lo = 0.5 / n;
    let mut params = MissingnessParams::zeros(registry);
    for code in registry.incomplete_codes() {
        let p = (counts[code - 1] as f64 / n).clamp(lo, 1.0 - lo);
        params.block_mut(code)[0] = logit(p);
    }
    params
}

/// Maximize the unconstrained log-likelihood by BFGS, falling back to a
/// Nelder-Mead search when the quasi-Newton run fails.
///
/// Non-convergence is reported in the returned [`UmleReport`], never as an
/// error.
pub fn fit_umle(
    dataset: &ObservedDataset,
    registry: &PatternRegistry,
    init: &MissingnessParams,
    config: &UmleConfig,
) -> Result<UmleReport> {
    if dataset.n_complete() == 0 {
        return Err(Error::PositivityUnverifiable);
    }
    if !init.is_finite() {
        return Err(Error::Config("initial coefficients must be finite".into()));
    }
    let model = MissingnessModel::new(registry, dataset);
    let layout = model.layout().to_vec();
    let objective = |x: &[f64]| {
        let ll = model.log_likelihood(&MissingnessParams::from_flat(&layout, x));
        if ll.is_finite() {
            -ll
        } else {
            f64::INFINITY
        }
    };
    let gradient = |x: &[f64]| -> Vec<f64> {
        model
            .score(&MissingnessParams::from_flat(&layout, x))
            .into_iter()
            .map(|v| -v)
            .collect()
    };

    let x0 = init.to_flat();
    let qn = bfgs_minimize(objective, gradient, &x0, config.score_tol, config.max_iter);

    let (x, method, fallback_evaluations, message) = if qn.status == BfgsStatus::Converged {
        (qn.x, UmleMethod::QuasiNewton, 0, "converged".to_string())
    } else {
        let start = if qn.f.is_finite() { qn.x } else { x0 };
        let simplex = nelder_mead(objective, &start, 0.1, config.fallback_evals, 1e-12);
        (
            simplex.x,
            UmleMethod::DerivativeFreeFallback,
            simplex.evaluations,
            format!("quasi-Newton stopped: {:?}", qn.status),
        )
    };

    let params = MissingnessParams::from_flat(&layout, &x);
    let score = model.score(&params);
    let max_abs_score = score
        .iter()
        .fold(0.0_f64, |m, v| if v.is_nan() { f64::NAN } else { m.max(v.abs()) });
    let converged = match method {
        UmleMethod::QuasiNewton => true,
        UmleMethod::DerivativeFreeFallback => max_abs_score <= config.score_tol,
    };
    Ok(UmleReport {
        log_likelihood: model.log_likelihood(&params),
        min_complete_case_probability: model.min_complete_case_probability(&params),
        params,
        converged,
        method,
        iterations: qn.iterations,
        fallback_evaluations,
        max_abs_score,
        message,
    })
}
