//! Inverse probability weighted estimating equations and their variances.
//!
//! Complete cases carry weight `1 / pi_1(L; gamma_hat)`; the weights are held
//! fixed while solving for `beta`. Three variance estimators are offered:
//! the sandwich treating `gamma` as known, the corrected form that subtracts
//! the projection of the weighted moment onto the missingness scores, and a
//! re-centered variant of the latter for posterior point estimates, at which
//! the empirical score mean need not vanish.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{ObservedDataset, PatternRegistry};
use crate::error::{Error, Result};
use crate::estfn::EstimatingFunction;
use crate::linalg::{jacobian_inverse, jacobian_solve, spd_inverse, symmetrize};
use crate::missingness::{MissingnessModel, MissingnessParams};
use crate::report::{FitReport, VarianceKind};

pub const MOMENT_TOL: f64 = 1e-8;
pub const MAX_NEWTON: usize = 100;
pub const MAX_HALVINGS: usize = 50;
/// Coefficients beyond this size in an unweighted logistic fit are taken as
/// a sign of separation.
pub const SEPARATION_BOUND: f64 = 25.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IpwSolution {
    pub beta: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// `sup |P_n weighted moment|` at `beta`.
    pub moment_sup: f64,
}

/// Complete-case weights `1 / pi_1`, keyed by dataset row.
pub fn ipw_weights(
    dataset: &ObservedDataset,
    registry: &PatternRegistry,
    params: &MissingnessParams,
) -> Result<Vec<(usize, f64)>> {
    let model = MissingnessModel::new(registry, dataset);
    let pi1 = model.complete_case_probs(params);
    model
        .complete_rows()
        .iter()
        .zip(pi1)
        .map(|(&row, p)| {
            if p > 0.0 && p.is_finite() {
                Ok((row, 1.0 / p))
            } else {
                Err(Error::InvalidWeights { row, value: p })
            }
        })
        .collect()
}

fn weighted_moment(
    rows: &[(&[f64], f64)],
    n: usize,
    ef: &dyn EstimatingFunction,
    beta: &[f64],
) -> DVector<f64> {
    let mut m = DVector::zeros(ef.dim());
    for (l, w) in rows {
        m += ef.evaluate(l, beta) * *w;
    }
    m / n as f64
}

fn weighted_jacobian(
    rows: &[(&[f64], f64)],
    n: usize,
    ef: &dyn EstimatingFunction,
    beta: &[f64],
) -> DMatrix<f64> {
    let q = ef.dim();
    let mut j = DMatrix::zeros(q, q);
    for (l, w) in rows {
        j += ef.jacobian(l, beta) * *w;
    }
    j / n as f64
}

/// Newton iteration with step halving on `P_n {w M(L; beta)} = 0`, where the
/// average runs over `n` rows of which only `rows` contribute.
pub fn solve_weighted(
    rows: &[(&[f64], f64)],
    n: usize,
    ef: &dyn EstimatingFunction,
    init: &[f64],
) -> Result<IpwSolution> {
    if init.len() != ef.dim() {
        return Err(Error::DimensionMismatch { expected: ef.dim(), got: init.len() });
    }
    let mut beta = DVector::from_column_slice(init);
    let mut m = weighted_moment(rows, n, ef, beta.as_slice());
    let mut iterations = 0;
    while m.amax() >= MOMENT_TOL && iterations < MAX_NEWTON {
        iterations += 1;
        let j = weighted_jacobian(rows, n, ef, beta.as_slice());
        let step = -jacobian_solve(&j, &m)?;
        let base = m.norm();
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..=MAX_HALVINGS {
            let trial = &beta + &step * t;
            let mt = weighted_moment(rows, n, ef, trial.as_slice());
            if mt.iter().all(|v| v.is_finite()) && mt.norm() < base {
                beta = trial;
                m = mt;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Ok(IpwSolution {
        converged: m.amax() < MOMENT_TOL,
        moment_sup: m.amax(),
        beta: beta.as_slice().to_vec(),
        iterations,
    })
}

/// Solve the weighted complete-case equation at fixed missingness coefficients.
pub fn solve_ipw(
    dataset: &ObservedDataset,
    registry: &PatternRegistry,
    params: &MissingnessParams,
    ef: &dyn EstimatingFunction,
    init: &[f64],
) -> Result<IpwSolution> {
    let weights = ipw_weights(dataset, registry, params)?;
    let rows: Vec<(&[f64], f64)> = weights
        .iter()
        .map(|&(i, w)| (dataset.rows()[i].values.as_slice(), w))
        .collect();
    solve_weighted(&rows, dataset.n(), ef, init)
}

/// Per-row ingredients of the IPW variance at `(beta_hat, gamma_hat)`.
#[derive(Debug, Clone)]
pub struct IpwComponents {
    /// `n x q`: `1(R=1) / pi_1 * M(L; beta)`, zero on incomplete rows.
    pub gamma: DMatrix<f64>,
    /// `q x q`: `P_n [d Gamma / d beta]`.
    pub jacobian: DMatrix<f64>,
    /// `n x d`: per-row missingness scores.
    pub scores: DMatrix<f64>,
}

impl IpwComponents {
    pub fn new(
        dataset: &ObservedDataset,
        registry: &PatternRegistry,
        params: &MissingnessParams,
        ef: &dyn EstimatingFunction,
        beta: &[f64],
    ) -> Result<Self> {
        let weights = ipw_weights(dataset, registry, params)?;
        let n = dataset.n();
        let q = ef.dim();
        let mut gamma = DMatrix::zeros(n, q);
        let mut jacobian = DMatrix::zeros(q, q);
        for &(i, w) in &weights {
            let l = &dataset.rows()[i].values;
            gamma.set_row(i, &(ef.evaluate(l, beta) * w).transpose());
            jacobian += ef.jacobian(l, beta) * w;
        }
        jacobian /= n.max(1) as f64;
        let scores = MissingnessModel::new(registry, dataset).row_scores(params);
        Ok(Self { gamma, jacobian, scores })
    }

    pub fn n(&self) -> usize {
        self.gamma.nrows()
    }

    /// Projection `W = S E[S S^T]^-1 E[S Gamma^T]`, `n x q`.
    pub fn projection(&self) -> (DMatrix<f64>, Vec<String>) {
        let n = self.n().max(1) as f64;
        if self.scores.ncols() == 0 {
            return (DMatrix::zeros(self.n(), self.gamma.ncols()), Vec::new());
        }
        let gram = self.scores.transpose() * &self.scores / n;
        let (inv, warn) = spd_inverse(&gram, "missingness score Gram matrix");
        let cross = self.scores.transpose() * &self.gamma / n;
        (&self.scores * inv * cross, warn.into_iter().collect())
    }

    /// `J^-1 P_n[R R^T] J^-T / n` for residual rows `R`.
    fn sandwich_of(&self, resid: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let n = self.n().max(1) as f64;
        let jinv = jacobian_inverse(&self.jacobian)?;
        let meat = resid.transpose() * resid / n;
        Ok(symmetrize(&(&jinv * meat * jinv.transpose())) / n)
    }

    pub fn sandwich(&self) -> Result<DMatrix<f64>> {
        self.sandwich_of(&self.gamma)
    }

    pub fn corrected(&self) -> Result<(DMatrix<f64>, Vec<String>)> {
        let (w, warnings) = self.projection();
        Ok((self.sandwich_of(&(&self.gamma - w))?, warnings))
    }

    /// Corrected variance with `P_n W` added back, so the residual has
    /// empirical mean zero even when the score mean does not vanish.
    pub fn cbe_corrected(&self) -> Result<(DMatrix<f64>, Vec<String>)> {
        let (w, warnings) = self.projection();
        let mean = w.row_mean();
        let mut resid = &self.gamma - &w;
        for mut r in resid.row_iter_mut() {
            r += &mean;
        }
        Ok((self.sandwich_of(&resid)?, warnings))
    }

    pub fn variance(&self, kind: VarianceKind) -> Result<(DMatrix<f64>, Vec<String>)> {
        match kind {
            VarianceKind::Corrected => self.corrected(),
            VarianceKind::CbeCorrected => self.cbe_corrected(),
            VarianceKind::Sandwich => Ok((self.sandwich()?, Vec::new())),
            other => Err(Error::Config(format!("{other:?} is not an IPW variance"))),
        }
    }
}

pub fn variance_corrected(
    dataset: &ObservedDataset,
    registry: &PatternRegistry,
    params: &MissingnessParams,
    ef: &dyn EstimatingFunction,
    beta: &[f64],
) -> Result<(DMatrix<f64>, Vec<String>)> {
    IpwComponents::new(dataset, registry, params, ef, beta)?.corrected()
}

pub fn variance_cbe_corrected(
    dataset: &ObservedDataset,
    registry: &PatternRegistry,
    params: &MissingnessParams,
    ef: &dyn EstimatingFunction,
    beta: &[f64],
) -> Result<(DMatrix<f64>, Vec<String>)> {
    IpwComponents::new(dataset, registry, params, ef, beta)?.cbe_corrected()
}

pub fn variance_sandwich(
    dataset: &ObservedDataset,
    registry: &PatternRegistry,
    params: &MissingnessParams,
    ef: &dyn EstimatingFunction,
    beta: &[f64],
) -> Result<DMatrix<f64>> {
    IpwComponents::new(dataset, registry, params, ef, beta)?.sandwich()
}

/// Solve and attach the requested variance.
pub fn fit_ipw(
    dataset: &ObservedDataset,
    registry: &PatternRegistry,
    params: &MissingnessParams,
    ef: &dyn EstimatingFunction,
    init: &[f64],
    kind: VarianceKind,
) -> Result<FitReport> {
    let sol = solve_ipw(dataset, registry, params, ef, init)?;
    let comps = IpwComponents::new(dataset, registry, params, ef, &sol.beta)?;
    let (vcov, warnings) = comps.variance(kind)?;
    Ok(FitReport::new(
        "ipw",
        ef.coefficient_names(),
        sol.beta,
        &vcov,
        kind,
        dataset.n(),
        sol.iterations,
        sol.converged,
        ef.is_logistic(),
    )
    .with_warnings(warnings))
}

fn unweighted_fit(
    estimator: &str,
    rows: &[&[f64]],
    ef: &dyn EstimatingFunction,
    init: &[f64],
) -> Result<FitReport> {
    let weighted: Vec<(&[f64], f64)> = rows.iter().map(|l| (*l, 1.0)).collect();
    let n = rows.len();
    let sol = solve_weighted(&weighted, n, ef, init)?;
    let j = weighted_jacobian(&weighted, n, ef, &sol.beta);
    let vcov = -jacobian_inverse(&j)? / n as f64;
    let mut warnings = Vec::new();
    let mut converged = sol.converged;
    if ef.is_logistic() && sol.beta.iter().any(|b| b.abs() > SEPARATION_BOUND) {
        converged = false;
        warnings.push("separation suspected: coefficients diverging".to_string());
    }
    Ok(FitReport::new(
        estimator,
        ef.coefficient_names(),
        sol.beta,
        &vcov,
        VarianceKind::ModelBased,
        n,
        sol.iterations,
        converged,
        ef.is_logistic(),
    )
    .with_warnings(warnings))
}

/// Unweighted fit on the complete cases only.
pub fn fit_complete_case(
    dataset: &ObservedDataset,
    ef: &dyn EstimatingFunction,
    init: &[f64],
) -> Result<FitReport> {
    let rows: Vec<&[f64]> = dataset.complete_rows().map(|(_, l)| l).collect();
    if rows.is_empty() {
        return Err(Error::PositivityUnverifiable);
    }
    unweighted_fit("cc", &rows, ef, init)
}

/// Fit on data without missingness.
pub fn fit_full_mle(
    full: &ObservedDataset,
    ef: &dyn EstimatingFunction,
    init: &[f64],
) -> Result<FitReport> {
    if full.n_complete() != full.n() || full.n() == 0 {
        return Err(Error::Dataset("full-data fit needs every row fully observed".into()));
    }
    let rows: Vec<&[f64]> = full.complete_rows().map(|(_, l)| l).collect();
    unweighted_fit("mle", &rows, ef, init)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{ObservedRow, VariableKind, VariableSchema};
    use crate::estfn::LogisticScore;
    use crate::linalg::min_eigenvalue;
    use crate::missingness::{default_init, expit, fit_umle, UmleConfig};
    use crate::rng::StreamRng;
    use rand::{Rng, SeedableRng};

    fn schema() -> VariableSchema {
        VariableSchema::new(
            vec!["y".into(), "a".into(), "c".into()],
            vec![VariableKind::Binary, VariableKind::Continuous, VariableKind::Continuous],
        )
        .unwrap()
    }

    /// MAR data: pattern 2 observes (y, a), pattern 3 observes (c).
    fn mar_data(n: usize, seed: u64) -> (PatternRegistry, ObservedDataset, Vec<Vec<f64>>) {
        let registry = PatternRegistry::new(3, vec![vec![0, 1, 2], vec![0, 1], vec![2]]).unwrap();
        let mut rng = StreamRng::seed_from_u64(seed);
        let mut rows = Vec::new();
        let mut full = Vec::new();
        for _ in 0..n {
            let a: f64 = rng.random_range(-1.0..1.0);
            let c: f64 = rng.random_range(-1.0..1.0);
            let y = if rng.random::<f64>() < expit(-0.2 + 0.8 * a - 0.5 * c) { 1.0 } else { 0.0 };
            let p2 = expit(-1.3 + 0.9 * y - 0.4 * a);
            let p3 = expit(-1.5 + 0.7 * c);
            let u: f64 = rng.random();
            rows.push(if u < p2 {
                ObservedRow { pattern: 2, values: vec![y, a] }
            } else if u < p2 + p3 {
                ObservedRow { pattern: 3, values: vec![c] }
            } else {
                ObservedRow { pattern: 1, values: vec![y, a, c] }
            });
            full.push(vec![y, a, c]);
        }
        let ds = ObservedDataset::new(schema(), &registry, rows).unwrap();
        (registry, ds, full)
    }

    fn ef() -> LogisticScore {
        LogisticScore::new(0, vec![1, 2])
    }

    #[test]
    fn no_missingness_reduces_to_unweighted_fit() {
        let (_, _, full) = mar_data(300, 1);
        let (registry, ds) = ObservedDataset::complete(schema(), full).unwrap();
        let params = MissingnessParams::zeros(&registry);
        let ipw = solve_ipw(&ds, &registry, &params, &ef(), &[0.0; 3]).unwrap();
        let mle = fit_full_mle(&ds, &ef(), &[0.0; 3]).unwrap();
        let cc = fit_complete_case(&ds, &ef(), &[0.0; 3]).unwrap();
        for k in 0..3 {
            assert!((ipw.beta[k] - mle.beta[k]).abs() < 1e-9);
            assert_eq!(cc.beta[k], mle.beta[k]);
        }
        assert!(ipw.converged && ipw.moment_sup < MOMENT_TOL);
    }

    #[test]
    fn complete_data_sandwich_matches_glm_formula() {
        let (_, _, full) = mar_data(200, 2);
        let (registry, ds) = ObservedDataset::complete(schema(), full.clone()).unwrap();
        let params = MissingnessParams::zeros(&registry);
        let fit = fit_full_mle(&ds, &ef(), &[0.0; 3]).unwrap();
        let v = variance_sandwich(&ds, &registry, &params, &ef(), &fit.beta).unwrap();
        // bread = sum p(1-p) x x^T, meat = sum r^2 x x^T, V = B^-1 M B^-1
        let mut bread = DMatrix::<f64>::zeros(3, 3);
        let mut meat = DMatrix::<f64>::zeros(3, 3);
        for l in &full {
            let x = DVector::from_vec(vec![1.0, l[1], l[2]]);
            let eta = fit.beta[0] + fit.beta[1] * l[1] + fit.beta[2] * l[2];
            let p = 1.0 / (1.0 + (-eta).exp());
            bread += &x * x.transpose() * (p * (1.0 - p));
            meat += &x * x.transpose() * (l[0] - p).powi(2);
        }
        let b = bread.try_inverse().unwrap();
        let oracle = &b * meat * &b;
        assert!((v - oracle).abs().max() < 1e-12);
    }

    #[test]
    fn variance_ordering_and_known_gamma() {
        let (registry, ds, _) = mar_data(500, 3);
        let fit = fit_umle(&ds, &registry, &default_init(&registry, &ds), &UmleConfig::default()).unwrap();
        assert!(fit.converged);
        let sol = solve_ipw(&ds, &registry, &fit.params, &ef(), &[0.0; 3]).unwrap();
        let comps = IpwComponents::new(&ds, &registry, &fit.params, &ef(), &sol.beta).unwrap();
        let sand = comps.sandwich().unwrap();
        let (corr, warn) = comps.corrected().unwrap();
        assert!(warn.is_empty());
        assert!(min_eigenvalue(&corr) > 0.0);
        assert!(min_eigenvalue(&(&sand - &corr)) >= -1e-10);

        // at the likelihood maximum the score mean vanishes
        let (cbe, _) = comps.cbe_corrected().unwrap();
        assert!((&cbe - &corr).abs().max() < 1e-8);

        // gamma treated as known: no scores, so nothing to project out
        let known = IpwComponents { scores: DMatrix::zeros(ds.n(), 0), ..comps.clone() };
        assert!((known.corrected().unwrap().0 - &sand).abs().max() == 0.0);
    }

    #[test]
    fn recentered_variance_matches_direct_formula() {
        let registry = PatternRegistry::new(3, vec![vec![0, 1, 2], vec![0, 1], vec![2]]).unwrap();
        let rows = vec![
            ObservedRow { pattern: 1, values: vec![1.0, 0.5, -0.2] },
            ObservedRow { pattern: 1, values: vec![0.0, -0.4, 0.3] },
            ObservedRow { pattern: 2, values: vec![1.0, 0.1] },
        ];
        let ds = ObservedDataset::new(schema(), &registry, rows).unwrap();
        let params = MissingnessParams::new(&registry, vec![vec![-1.0, 0.4, 0.2], vec![-1.5, 0.3]]).unwrap();
        let ef = LogisticScore::new(0, vec![1]);
        let beta = [0.1, -0.3];
        let comps = IpwComponents::new(&ds, &registry, &params, &ef, &beta).unwrap();
        let (v, _) = comps.cbe_corrected().unwrap();

        // rebuild every piece with explicit loops
        let n = 3.0;
        let s = &comps.scores;
        let g = &comps.gamma;
        let mut ss = DMatrix::<f64>::zeros(s.ncols(), s.ncols());
        let mut sg = DMatrix::<f64>::zeros(s.ncols(), 2);
        for i in 0..3 {
            for a in 0..s.ncols() {
                for b in 0..s.ncols() {
                    ss[(a, b)] += s[(i, a)] * s[(i, b)] / n;
                }
                for b in 0..2 {
                    sg[(a, b)] += s[(i, a)] * g[(i, b)] / n;
                }
            }
        }
        let coef = ss.pseudo_inverse(1e-14).unwrap() * sg;
        let w = s * coef;
        let wbar: Vec<f64> = (0..2).map(|k| (0..3).map(|i| w[(i, k)]).sum::<f64>() / n).collect();
        let mut meat = DMatrix::<f64>::zeros(2, 2);
        for i in 0..3 {
            let r: Vec<f64> = (0..2).map(|k| g[(i, k)] - w[(i, k)] + wbar[k]).collect();
            for a in 0..2 {
                for b in 0..2 {
                    meat[(a, b)] += r[a] * r[b] / n;
                }
            }
        }
        let jinv = comps.jacobian.clone().try_inverse().unwrap();
        let oracle = &jinv * meat * jinv.transpose() / n;
        assert!((v - oracle).abs().max() < 1e-10);
    }

    #[test]
    fn constant_moment_has_zero_sandwich() {
        struct Zero;
        impl EstimatingFunction for Zero {
            fn dim(&self) -> usize {
                1
            }
            fn evaluate(&self, _: &[f64], _: &[f64]) -> DVector<f64> {
                DVector::zeros(1)
            }
            fn jacobian(&self, _: &[f64], _: &[f64]) -> DMatrix<f64> {
                DMatrix::from_element(1, 1, -1.0)
            }
            fn coefficient_names(&self) -> Vec<String> {
                vec!["b".into()]
            }
        }
        let (registry, ds, _) = mar_data(50, 4);
        let params = default_init(&registry, &ds);
        let v = variance_sandwich(&ds, &registry, &params, &Zero, &[0.0]).unwrap();
        assert_eq!(v[(0, 0)], 0.0);
    }

    #[test]
    fn nonpositive_weights_are_rejected() {
        let (registry, ds, _) = mar_data(50, 5);
        let params = MissingnessParams::new(&registry, vec![vec![3.0, 0.0, 0.0], vec![3.0, 0.0]]).unwrap();
        let err = solve_ipw(&ds, &registry, &params, &ef(), &[0.0; 3]);
        assert!(matches!(err, Err(Error::InvalidWeights { .. })));
    }

    #[test]
    fn separation_is_flagged() {
        let rows: Vec<Vec<f64>> = (0..20)
            .map(|i| {
                let a = i as f64 / 10.0 - 1.0;
                vec![if a > 0.0 { 1.0 } else { 0.0 }, a, 0.0]
            })
            .collect();
        let (_, ds) = ObservedDataset::complete(schema(), rows).unwrap();
        let fit = fit_full_mle(&ds, &LogisticScore::new(0, vec![1]), &[0.0; 2]).unwrap();
        assert!(!fit.converged);
        assert!(!fit.warnings.is_empty());
    }
}
