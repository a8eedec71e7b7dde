//! Monte Carlo study of the estimators under a four-variable design.
//!
//! Covariates `(A, C1, C2)` are standard-uniform margins of a correlated
//! normal vector, `Y` is logistic in them, and each row falls into one of
//! five missingness patterns:
//!
//! | code | observed       |
//! |------|----------------|
//! | 1    | Y, A, C1, C2   |
//! | 2    | Y, A, C1       |
//! | 3    | Y, A           |
//! | 4    | C1, C2         |
//! | 5    | Y, C2          |

mod cohort;
mod summary;

pub use cohort::{
    cohort_ef, cohort_fixture, cohort_registry, cohort_schema, generate_cohort, generate_cohort_full,
    CohortConfig, COHORT_COUNTS, COHORT_VARIABLES,
};
pub use summary::{summarize, SummaryRow, SummaryTable};

use nalgebra::Matrix3;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::aipw::{one_step_aipw, MissingnessSource};
use crate::basis::{build_default_bases, prune_dependent};
use crate::cbe::{gelman_rubin, point_estimate, sample_posterior, ChainConfig, PointKind, PriorSpec};
use crate::data::{ObservedDataset, ObservedRow, PatternRegistry, VariableKind, VariableSchema};
use crate::error::{Error, Result};
use crate::estfn::LogisticScore;
use crate::ipw::{fit_complete_case, fit_full_mle, fit_ipw, IpwComponents};
use crate::linalg::min_eigenvalue;
use crate::missingness::{default_init, expit, fit_umle, MissingnessParams, UmleConfig};
use crate::report::{FitReport, VarianceKind};
use crate::rng::{substream, StreamRng};

pub const VARIABLES: [&str; 4] = ["Y", "A", "C1", "C2"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorKind {
    Cc,
    FullMle,
    UmleIpw,
    UmleAipw,
    CbeIpw,
    CbeAipw,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 6] = [
        Self::Cc,
        Self::FullMle,
        Self::UmleIpw,
        Self::UmleAipw,
        Self::CbeIpw,
        Self::CbeAipw,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Self::Cc => "CC",
            Self::FullMle => "Full MLE",
            Self::UmleIpw => "UMLE IPW",
            Self::UmleAipw => "UMLE AIPW",
            Self::CbeIpw => "CBE IPW",
            Self::CbeAipw => "CBE AIPW",
        }
    }

    pub fn uses_umle(self) -> bool {
        matches!(self, Self::UmleIpw | Self::UmleAipw)
    }

    pub fn uses_cbe(self) -> bool {
        matches!(self, Self::CbeIpw | Self::CbeAipw)
    }

    /// The IPW estimator an augmented one is compared against.
    pub fn ipw_partner(self) -> Option<Self> {
        match self {
            Self::UmleAipw => Some(Self::UmleIpw),
            Self::CbeAipw => Some(Self::CbeIpw),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub n: usize,
    pub replicates: usize,
    /// Outcome model `(intercept, A, C1, C2)`.
    pub beta: Vec<f64>,
    /// Missingness blocks for patterns 2..=5, intercept first.
    pub gamma: Vec<Vec<f64>>,
    pub rho12: f64,
    pub rho13: f64,
    pub rho23: f64,
    pub estimators: Vec<EstimatorKind>,
    pub seed: u64,
    pub umle: UmleConfig,
    pub chains: ChainConfig,
    pub prior_variance: f64,
    pub cbe_point: PointKind,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n: 1000,
            replicates: 1000,
            beta: vec![-0.3, -0.4, 0.3, 0.5],
            gamma: vec![
                vec![-1.2, -1.2, -0.6, -0.3],
                vec![-1.0, -0.9, -0.8],
                vec![-1.2, -0.7, -0.8],
                vec![-1.1, -1.0, -0.8],
            ],
            rho12: 0.1,
            rho13: -0.1,
            rho23: 0.0,
            estimators: vec![
                EstimatorKind::Cc,
                EstimatorKind::FullMle,
                EstimatorKind::UmleIpw,
                EstimatorKind::UmleAipw,
            ],
            seed: 20_240_101,
            umle: UmleConfig::default(),
            chains: ChainConfig::reduced(),
            prior_variance: 1e3,
            cbe_point: PointKind::Mean,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Config("n must be at least 1".into()));
        }
        if self.beta.len() != 4 {
            return Err(Error::Config("beta needs 4 entries".into()));
        }
        let reg = registry();
        MissingnessParams::new(&reg, self.gamma.clone())?;
        if self.correlation().cholesky().is_none() {
            return Err(Error::Config("correlations do not form a positive definite matrix".into()));
        }
        if self.estimators.iter().any(|e| e.uses_cbe()) {
            self.chains.validate()?;
        }
        Ok(())
    }

    pub fn correlation(&self) -> Matrix3<f64> {
        Matrix3::new(
            1.0, self.rho12, self.rho13,
            self.rho12, 1.0, self.rho23,
            self.rho13, self.rho23, 1.0,
        )
    }

    pub fn gamma_params(&self) -> Result<MissingnessParams> {
        MissingnessParams::new(&registry(), self.gamma.clone())
    }
}

pub fn schema() -> VariableSchema {
    VariableSchema::new(
        VARIABLES.iter().map(|s| s.to_string()).collect(),
        vec![
            VariableKind::Binary,
            VariableKind::Continuous,
            VariableKind::Continuous,
            VariableKind::Continuous,
        ],
    )
    .expect("static schema")
}

pub fn registry() -> PatternRegistry {
    PatternRegistry::new(
        4,
        vec![vec![0, 1, 2, 3], vec![0, 1, 2], vec![0, 1], vec![2, 3], vec![0, 3]],
    )
    .expect("static registry")
}

pub fn logistic_ef() -> LogisticScore {
    LogisticScore {
        outcome: 0,
        covariates: vec![1, 2, 3],
        names: vec!["(Intercept)".into(), "A".into(), "C1".into(), "C2".into()],
    }
}

/// `n` complete rows `(Y, A, C1, C2)`.
pub fn generate_full_data(config: &SimConfig, rng: &mut StreamRng) -> Result<Vec<Vec<f64>>> {
    let chol = config
        .correlation()
        .cholesky()
        .ok_or_else(|| Error::Config("correlation matrix is not positive definite".into()))?
        .l();
    let phi = Normal::standard();
    let b = &config.beta;
    Ok((0..config.n)
        .map(|_| {
            let z = nalgebra::Vector3::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
            let x = chol * z;
            let (a, c1, c2) = (phi.cdf(x[0]), phi.cdf(x[1]), phi.cdf(x[2]));
            let p = expit(b[0] + b[1] * a + b[2] * c1 + b[3] * c2);
            let y = if rng.random::<f64>() < p { 1.0 } else { 0.0 };
            vec![y, a, c1, c2]
        })
        .collect())
}

/// Draw each row's pattern from its multinomial probabilities and keep only
/// the observed values.
pub fn generate_missingness(
    full: &[Vec<f64>],
    gamma: &MissingnessParams,
    rng: &mut StreamRng,
) -> Result<ObservedDataset> {
    let reg = registry();
    let mut rows = Vec::with_capacity(full.len());
    let mut probs = Vec::with_capacity(reg.len());
    for (i, l) in full.iter().enumerate() {
        probs.clear();
        for code in reg.incomplete_codes() {
            let g = gamma.block(code);
            let eta = g[0] + reg.observed(code).iter().zip(&g[1..]).map(|(&v, c)| c * l[v]).sum::<f64>();
            probs.push(expit(eta));
        }
        let pi1 = 1.0 - probs.iter().sum::<f64>();
        if !(pi1 > 0.0) {
            return Err(Error::InvalidWeights { row: i, value: pi1 });
        }
        let u: f64 = rng.random();
        let mut code = 1;
        let mut acc = 0.0;
        for (b, p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                code = b + 2;
                break;
            }
        }
        let values = reg.observed(code).iter().map(|&v| l[v]).collect();
        rows.push(ObservedRow { pattern: code, values });
    }
    ObservedDataset::new(schema(), &reg, rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRecord {
    pub estimator: EstimatorKind,
    pub beta: Vec<f64>,
    /// Raw variances (diagonal of the variance matrix).
    pub variance: Vec<f64>,
    pub covered: Vec<bool>,
    pub converged: bool,
    pub warnings: Vec<String>,
}

impl EstimateRecord {
    fn from_report(kind: EstimatorKind, r: &FitReport, truth: &[f64], converged: bool) -> Self {
        Self {
            estimator: kind,
            beta: r.beta.clone(),
            variance: r.se.iter().map(|s| s * s).collect(),
            covered: (0..truth.len()).map(|k| r.covers(k, truth[k])).collect(),
            converged: converged && r.converged,
            warnings: r.warnings.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateResult {
    pub replicate: usize,
    pub n_complete: usize,
    pub umle_converged: Option<bool>,
    pub umle_min_pi1: Option<f64>,
    pub umle_gamma: Option<Vec<f64>>,
    pub cbe_gamma: Option<Vec<f64>>,
    pub cbe_max_rhat: Option<f64>,
    pub cbe_violations: Option<usize>,
    /// Smallest eigenvalue of sandwich minus corrected IPW variance.
    pub sandwich_gap_min_eig: Option<f64>,
    /// Per coefficient, AIPW variance <= corrected IPW variance.
    pub aipw_below_ipw: Option<Vec<bool>>,
    pub estimates: Vec<EstimateRecord>,
    /// Estimator failures, recorded instead of aborting the run.
    pub errors: Vec<String>,
}

impl ReplicateResult {
    pub fn estimate(&self, kind: EstimatorKind) -> Option<&EstimateRecord> {
        self.estimates.iter().find(|e| e.estimator == kind)
    }
}

/// One replicate: data generation and every configured estimator.
pub fn run_replicate(config: &SimConfig, replicate: usize) -> Result<ReplicateResult> {
    let mut rng = substream(config.seed, &[replicate as u64]);
    let truth = &config.beta;
    let gamma = config.gamma_params()?;
    let full = generate_full_data(config, &mut rng)?;
    let ds = generate_missingness(&full, &gamma, &mut rng)?;
    let reg = registry();
    let ef = logistic_ef();
    let init = vec![0.0; 4];
    let mut out = ReplicateResult {
        replicate,
        n_complete: ds.n_complete(),
        umle_converged: None,
        umle_min_pi1: None,
        umle_gamma: None,
        cbe_gamma: None,
        cbe_max_rhat: None,
        cbe_violations: None,
        sandwich_gap_min_eig: None,
        aipw_below_ipw: None,
        estimates: Vec::new(),
        errors: Vec::new(),
    };
    let want = |k: EstimatorKind| config.estimators.contains(&k);
    let record = |out: &mut ReplicateResult, kind: EstimatorKind, r: Result<FitReport>, ok: bool| match r {
        Ok(rep) => out.estimates.push(EstimateRecord::from_report(kind, &rep, truth, ok)),
        Err(e) => out.errors.push(format!("{}: {e}", kind.label())),
    };

    if want(EstimatorKind::Cc) {
        let r = fit_complete_case(&ds, &ef, &init);
        record(&mut out, EstimatorKind::Cc, r, true);
    }
    if want(EstimatorKind::FullMle) {
        let r = ObservedDataset::complete(schema(), full.clone())
            .and_then(|(_, fd)| fit_full_mle(&fd, &ef, &init));
        record(&mut out, EstimatorKind::FullMle, r, true);
    }

    let mut bases = build_default_bases(&schema(), &reg, &ef);
    prune_dependent(&mut bases, &schema(), &reg, &ds, &ef);

    if want(EstimatorKind::UmleIpw) || want(EstimatorKind::UmleAipw) {
        match fit_umle(&ds, &reg, &default_init(&reg, &ds), &config.umle) {
            Ok(umle) => {
                out.umle_converged = Some(umle.converged);
                out.umle_min_pi1 = Some(umle.min_complete_case_probability);
                out.umle_gamma = Some(umle.params.to_flat());
                let ok = umle.converged;
                match fit_ipw(&ds, &reg, &umle.params, &ef, &init, VarianceKind::Corrected) {
                    Ok(ipw) => {
                        if let Ok(c) = IpwComponents::new(&ds, &reg, &umle.params, &ef, &ipw.beta) {
                            if let (Ok(s), Ok((v, _))) = (c.sandwich(), c.corrected()) {
                                out.sandwich_gap_min_eig = Some(min_eigenvalue(&(s - v)));
                            }
                        }
                        if want(EstimatorKind::UmleAipw) {
                            let r = one_step_aipw(&ds, &reg, &umle.params, &ef, &bases, &ipw.beta, MissingnessSource::Umle);
                            if let Ok(a) = &r {
                                out.aipw_below_ipw = Some(
                                    a.se.iter().zip(&ipw.se).map(|(x, y)| x * x <= y * y * (1.0 + 1e-8)).collect(),
                                );
                            }
                            record(&mut out, EstimatorKind::UmleAipw, r, ok);
                        }
                        if want(EstimatorKind::UmleIpw) {
                            record(&mut out, EstimatorKind::UmleIpw, Ok(ipw), ok);
                        }
                    }
                    Err(e) => out.errors.push(format!("UMLE IPW: {e}")),
                }
            }
            Err(e) => out.errors.push(format!("UMLE: {e}")),
        }
    }

    if want(EstimatorKind::CbeIpw) || want(EstimatorKind::CbeAipw) {
        let chains = ChainConfig { seed: config.seed, stream: replicate as u64, ..config.chains };
        let prior = PriorSpec::iid(gamma.dim(), 0.0, config.prior_variance)?;
        match sample_posterior(&ds, &reg, &prior, &chains) {
            Ok(draws) => {
                let model = crate::missingness::MissingnessModel::new(&reg, &ds);
                out.cbe_violations = Some(crate::cbe::constraint_violations(&draws, &model, chains.sigma_star));
                if let Ok(gr) = gelman_rubin(&draws) {
                    out.cbe_max_rhat = gr.rhat.iter().copied().reduce(f64::max);
                }
                let params = point_estimate(&draws, config.cbe_point)?;
                out.cbe_gamma = Some(params.to_flat());
                match fit_ipw(&ds, &reg, &params, &ef, &init, VarianceKind::CbeCorrected) {
                    Ok(ipw) => {
                        if want(EstimatorKind::CbeAipw) {
                            let r = one_step_aipw(&ds, &reg, &params, &ef, &bases, &ipw.beta, MissingnessSource::Cbe);
                            record(&mut out, EstimatorKind::CbeAipw, r, true);
                        }
                        if want(EstimatorKind::CbeIpw) {
                            record(&mut out, EstimatorKind::CbeIpw, Ok(ipw), true);
                        }
                    }
                    Err(e) => out.errors.push(format!("CBE IPW: {e}")),
                }
            }
            Err(e) => out.errors.push(format!("CBE: {e}")),
        }
    }
    out.estimates.sort_by_key(|e| e.estimator);
    Ok(out)
}

/// All replicates in parallel; each draws from its own substream, so the
/// result does not depend on scheduling.
pub fn run_replicates(config: &SimConfig) -> Result<Vec<ReplicateResult>> {
    config.validate()?;
    let mut results: Vec<ReplicateResult> = (0..config.replicates)
        .into_par_iter()
        .map(|r| run_replicate(config, r))
        .collect::<Result<_>>()?;
    results.sort_by_key(|r| r.replicate);
    Ok(results)
}

/// Long-format replicate table:
/// `replicate,estimator,coefficient,estimate,variance,covered,converged`.
pub fn replicates_csv(results: &[ReplicateResult]) -> String {
    let names = logistic_ef().names;
    let mut out = String::from("replicate,estimator,coefficient,estimate,variance,covered,converged\n");
    for r in results {
        for e in &r.estimates {
            for k in 0..e.beta.len() {
                out.push_str(&format!(
                    "{},{},{},{},{},{},{}\n",
                    r.replicate,
                    serde_json::to_value(e.estimator).unwrap().as_str().unwrap_or(""),
                    names[k],
                    e.beta[k],
                    e.variance[k],
                    e.covered[k],
                    e.converged
                ));
            }
        }
    }
    out
}
