//! Optimal restricted augmented IPW estimation for logistic regression.
//!
//! With `phi = (w U*, A*)` stacked per row, `G = P_n[phi phi^T]` holds the
//! blocks `U11`, `U12`, `U22`, and `H = [H1 0]` the derivative of the
//! weighted full-data basis. The optimal combination is `C = H G^-1`; its
//! moment `C phi` is used for a single Newton step away from the IPW
//! estimate.
//!
//! Under constrained Bayesian estimation `A*` is centered before it enters
//! `G`, while the moment keeps the raw columns: their sample mean is what
//! carries the information recovered from the incomplete cases.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::basis::{Bases, FullDataBasis};
use crate::data::{ObservedDataset, PatternRegistry};
use crate::error::{Error, Result};
use crate::estfn::{EstimatingFunction, LogisticScore};
use crate::ipw::ipw_weights;
use crate::linalg::{ridge_for, spd_inverse, symmetrize};
use crate::missingness::{expit, MissingnessModel, MissingnessParams};
use crate::report::{FitReport, VarianceKind};

/// Which missingness fit produced the coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MissingnessSource {
    Umle,
    Cbe,
}

impl std::str::FromStr for MissingnessSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "umle" => Ok(Self::Umle),
            "cbe" => Ok(Self::Cbe),
            other => Err(format!("unknown missingness fit `{other}`")),
        }
    }
}

/// `A*` per row: for pattern `r` and basis function `t`,
/// `[1(R=1)/pi_1 - 1(R=r)/pi_r] pi_r (1 - pi_r) t(L_(r))`.
pub fn augmentation_matrix(
    dataset: &ObservedDataset,
    registry: &PatternRegistry,
    params: &MissingnessParams,
    bases: &Bases,
) -> Result<DMatrix<f64>> {
    let aug = &bases.augmentation;
    aug.validate(registry)?;
    let model = MissingnessModel::new(registry, dataset);
    let pi1 = model.complete_case_probs(params);
    if let Some((slot, &p)) = pi1.iter().enumerate().find(|(_, p)| !(**p > 0.0)) {
        return Err(Error::InvalidWeights { row: model.complete_rows()[slot], value: p });
    }
    let k = aug.dim();
    let mut offsets = Vec::new();
    let mut acc = 0;
    for t in &aug.terms {
        offsets.push(acc);
        acc += t.len();
    }
    let mut a = DMatrix::zeros(dataset.n(), k);
    let mut cc_slot = 0;
    let mut full = vec![0.0; registry.n_vars()];
    let mut obs_vals = Vec::new();
    for (i, row) in dataset.rows().iter().enumerate() {
        if row.pattern == 1 {
            let w = 1.0 / pi1[cc_slot];
            cc_slot += 1;
            for code in registry.incomplete_codes() {
                obs_vals.clear();
                obs_vals.extend(registry.observed(code).iter().map(|&v| row.values[v]));
                let p = pattern_prob(params.block(code), &obs_vals);
                let f = w * p * (1.0 - p);
                for (j, t) in aug.block(code).iter().enumerate() {
                    a[(i, offsets[code - 2] + j)] = f * t.eval(&row.values);
                }
            }
        } else {
            let code = row.pattern;
            let p = pattern_prob(params.block(code), &row.values);
            full.iter_mut().for_each(|v| *v = f64::NAN);
            for (&v, &x) in registry.observed(code).iter().zip(&row.values) {
                full[v] = x;
            }
            for (j, t) in aug.block(code).iter().enumerate() {
                a[(i, offsets[code - 2] + j)] = -(1.0 - p) * t.eval(&full);
            }
        }
    }
    Ok(a)
}

fn pattern_prob(gamma: &[f64], obs: &[f64]) -> f64 {
    expit(gamma[0] + gamma[1..].iter().zip(obs).map(|(g, x)| g * x).sum::<f64>())
}

/// Subtract column means on the constrained-Bayes path; identity otherwise.
pub fn center_augmentation(a: &DMatrix<f64>, source: MissingnessSource) -> DMatrix<f64> {
    match source {
        MissingnessSource::Umle => a.clone(),
        MissingnessSource::Cbe => {
            let mean = a.row_mean();
            let mut out = a.clone();
            for mut r in out.row_iter_mut() {
                r -= &mean;
            }
            out
        }
    }
}

#[derive(Debug, Clone)]
pub struct OptMatrices {
    pub u11: DMatrix<f64>,
    pub u12: DMatrix<f64>,
    pub u22: DMatrix<f64>,
    pub h1: DMatrix<f64>,
    pub h2: DMatrix<f64>,
    pub c1: DMatrix<f64>,
    pub c2: DMatrix<f64>,
    /// `P_n [C phi]` at the evaluation point.
    pub moment: DVector<f64>,
    pub n: usize,
    pub warnings: Vec<String>,
}

impl OptMatrices {
    pub fn q(&self) -> usize {
        self.h1.nrows()
    }

    pub fn gram(&self) -> DMatrix<f64> {
        let (l, k) = (self.u11.nrows(), self.u22.nrows());
        let mut g = DMatrix::zeros(l + k, l + k);
        g.view_mut((0, 0), (l, l)).copy_from(&self.u11);
        g.view_mut((0, l), (l, k)).copy_from(&self.u12);
        g.view_mut((l, 0), (k, l)).copy_from(&self.u12.transpose());
        g.view_mut((l, l), (k, k)).copy_from(&self.u22);
        g
    }

    /// `sup |[C1 C2] G - [H1 H2]|`.
    pub fn residual(&self) -> f64 {
        let c = concat_cols(&self.c1, &self.c2);
        let h = concat_cols(&self.h1, &self.h2);
        (c * self.gram() - h).amax()
    }

    /// `K = H G^-1 H^T = H1 U^11 H1^T`, minus the derivative of the optimal moment.
    pub fn k(&self) -> DMatrix<f64> {
        symmetrize(&(&self.c1 * self.h1.transpose()))
    }
}

fn concat_cols(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(a.nrows(), a.ncols() + b.ncols());
    out.view_mut((0, 0), a.shape()).copy_from(a);
    out.view_mut((0, a.ncols()), b.shape()).copy_from(b);
    out
}

/// Weighted full-data basis and augmentation columns, fixed once the
/// missingness coefficients are fixed.
#[derive(Debug, Clone)]
pub struct AipwDesign {
    /// `1 / pi_1` on complete rows, zero elsewhere.
    pub weights: Vec<f64>,
    /// Raw `A*`, `n x k`.
    pub a_star: DMatrix<f64>,
    /// Subtracted from `A*` when forming `G`; zero unless centered.
    pub shift: DVector<f64>,
}

impl AipwDesign {
    pub fn new(
        dataset: &ObservedDataset,
        registry: &PatternRegistry,
        params: &MissingnessParams,
        bases: &Bases,
        source: MissingnessSource,
    ) -> Result<Self> {
        let a = augmentation_matrix(dataset, registry, params, bases)?;
        let shift = &a - center_augmentation(&a, source);
        let mut design = Self::from_columns(dataset, registry, params, a)?;
        if dataset.n() > 0 {
            design.shift = shift.row(0).transpose();
        }
        Ok(design)
    }

    /// Use caller-supplied augmentation columns (`n x k`).
    pub fn from_columns(
        dataset: &ObservedDataset,
        registry: &PatternRegistry,
        params: &MissingnessParams,
        a_star: DMatrix<f64>,
    ) -> Result<Self> {
        if a_star.nrows() != dataset.n() {
            return Err(Error::DimensionMismatch { expected: dataset.n(), got: a_star.nrows() });
        }
        let mut weights = vec![0.0; dataset.n()];
        for (i, w) in ipw_weights(dataset, registry, params)? {
            weights[i] = w;
        }
        let shift = DVector::zeros(a_star.ncols());
        Ok(Self { weights, a_star, shift })
    }

    /// Estimate the optimal-combination matrices at `beta`.
    pub fn opt_matrices(
        &self,
        dataset: &ObservedDataset,
        ef: &LogisticScore,
        full: &FullDataBasis,
        beta: &[f64],
    ) -> Result<OptMatrices> {
        let n = dataset.n();
        let nf = n.max(1) as f64;
        let q = ef.dim();
        let l = full.dim(ef);
        let k = self.a_star.ncols();
        // phi rows: (w U*, A*)
        let mut phi = DMatrix::zeros(n, l + k);
        let mut h1 = DMatrix::zeros(q, l);
        for (i, row) in dataset.rows().iter().enumerate() {
            if row.pattern == 1 {
                let w = self.weights[i];
                let f = full.features(ef, &row.values);
                let p = ef.fitted(&row.values, beta);
                let r = row.values[ef.outcome] - p;
                for j in 0..l {
                    phi[(i, j)] = w * f[j] * r;
                }
                let s = w * p * (1.0 - p);
                for a in 0..q {
                    for b in 0..l {
                        h1[(a, b)] += s * f[a] * f[b];
                    }
                }
            }
            for j in 0..k {
                phi[(i, l + j)] = self.a_star[(i, j)] - self.shift[j];
            }
        }
        h1 /= nf;
        let g = symmetrize(&(phi.transpose() * &phi / nf));
        let h = concat_cols(&h1, &DMatrix::zeros(q, k));
        let mut warnings = Vec::new();
        let c = spd_solve_right(&h, &g, "augmented Gram matrix", &mut warnings);
        let c2 = c.view((0, l), (q, k)).into_owned();
        let moment = (&c * phi.transpose()).column_sum() / nf + &c2 * &self.shift;
        Ok(OptMatrices {
            u11: g.view((0, 0), (l, l)).into_owned(),
            u12: g.view((0, l), (l, k)).into_owned(),
            u22: g.view((l, l), (k, k)).into_owned(),
            h1,
            h2: DMatrix::zeros(q, k),
            c1: c.view((0, 0), (q, l)).into_owned(),
            c2,
            moment,
            n,
            warnings,
        })
    }
}

/// `X = B M^-1` for symmetric positive (semi-)definite `M`.
fn spd_solve_right(b: &DMatrix<f64>, m: &DMatrix<f64>, what: &str, warnings: &mut Vec<String>) -> DMatrix<f64> {
    if let Some(ch) = m.clone().cholesky() {
        return ch.solve(&b.transpose()).transpose();
    }
    let ridge = ridge_for(m);
    let dim = m.nrows();
    if let Some(ch) = (m + DMatrix::identity(dim, dim) * ridge).cholesky() {
        warnings.push(format!("{what}: singular matrix, ridge {ridge:.3e} added before solving"));
        return ch.solve(&b.transpose()).transpose();
    }
    let (inv, warn) = spd_inverse(m, what);
    warnings.extend(warn);
    b * inv
}

/// `{H1 U^11 H1^T}^-1 / n` with `U^11 = (U11 - U12 U22^-1 U12^T)^-1`.
pub fn aipw_variance(opt: &OptMatrices) -> (DMatrix<f64>, Vec<String>) {
    let mut warnings = Vec::new();
    let schur = if opt.u22.nrows() == 0 {
        opt.u11.clone()
    } else {
        let (u22_inv, w) = spd_inverse(&opt.u22, "U22");
        warnings.extend(w);
        &opt.u11 - &opt.u12 * u22_inv * opt.u12.transpose()
    };
    let (u_upper, w) = spd_inverse(&schur, "U11 Schur complement");
    warnings.extend(w);
    let info = &opt.h1 * u_upper * opt.h1.transpose();
    let (v, w) = spd_inverse(&info, "AIPW information");
    warnings.extend(w);
    (symmetrize(&v) / opt.n.max(1) as f64, warnings)
}

/// One Newton step from `beta_ipw` along the optimal augmented moment,
/// then the variance at the updated estimate.
pub fn one_step_aipw(
    dataset: &ObservedDataset,
    registry: &PatternRegistry,
    params: &MissingnessParams,
    ef: &LogisticScore,
    bases: &Bases,
    beta_ipw: &[f64],
    source: MissingnessSource,
) -> Result<FitReport> {
    let design = AipwDesign::new(dataset, registry, params, bases, source)?;
    one_step_with_design(dataset, &design, ef, &bases.full, beta_ipw)
}

pub fn one_step_with_design(
    dataset: &ObservedDataset,
    design: &AipwDesign,
    ef: &LogisticScore,
    full: &FullDataBasis,
    beta_ipw: &[f64],
) -> Result<FitReport> {
    let start = design.opt_matrices(dataset, ef, full, beta_ipw)?;
    let step = crate::linalg::jacobian_solve(&start.k(), &start.moment)?;
    let beta: Vec<f64> = beta_ipw.iter().zip(step.iter()).map(|(b, s)| b + s).collect();
    let at = design.opt_matrices(dataset, ef, full, &beta)?;
    let (vcov, var_warn) = aipw_variance(&at);
    let mut warnings = start.warnings;
    warnings.extend(at.warnings);
    warnings.extend(var_warn);
    warnings.dedup();
    Ok(FitReport::new(
        "aipw",
        ef.coefficient_names(),
        beta,
        &vcov,
        VarianceKind::Aipw,
        dataset.n(),
        1,
        true,
        true,
    )
    .with_warnings(warnings))
}
