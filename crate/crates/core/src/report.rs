//! Serializable estimation reports.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::linalg::symmetrize;

/// Normal 97.5% quantile.
pub const Z_975: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VarianceKind {
    /// Projection-corrected IPW variance for an estimated missingness model.
    Corrected,
    /// As `Corrected`, re-centered for a posterior point estimate.
    CbeCorrected,
    /// Plain sandwich treating the weights as known.
    Sandwich,
    /// Inverse information of an unweighted fit.
    ModelBased,
    /// Optimal restricted augmented estimator.
    Aipw,
}

impl std::str::FromStr for VarianceKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "corrected" => Ok(Self::Corrected),
            "cbe-corrected" => Ok(Self::CbeCorrected),
            "sandwich" => Ok(Self::Sandwich),
            "model-based" => Ok(Self::ModelBased),
            "aipw" => Ok(Self::Aipw),
            other => Err(format!("unknown variance kind `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OddsRatio {
    pub name: String,
    pub odds_ratio: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub estimator: String,
    pub names: Vec<String>,
    pub beta: Vec<f64>,
    /// Variance of the estimate itself (not scaled by n).
    pub vcov: Vec<Vec<f64>>,
    pub se: Vec<f64>,
    pub ci_lower: Vec<f64>,
    pub ci_upper: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub odds_ratios: Option<Vec<OddsRatio>>,
    pub variance_kind: VarianceKind,
    pub n: usize,
    pub iterations: usize,
    pub converged: bool,
    pub warnings: Vec<String>,
}

impl FitReport {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        estimator: &str,
        names: Vec<String>,
        beta: Vec<f64>,
        vcov: &DMatrix<f64>,
        variance_kind: VarianceKind,
        n: usize,
        iterations: usize,
        converged: bool,
        logistic: bool,
    ) -> Self {
        let vcov = symmetrize(vcov);
        let se: Vec<f64> = (0..beta.len()).map(|k| vcov[(k, k)].max(0.0).sqrt()).collect();
        let ci_lower: Vec<f64> = beta.iter().zip(&se).map(|(b, s)| b - Z_975 * s).collect();
        let ci_upper: Vec<f64> = beta.iter().zip(&se).map(|(b, s)| b + Z_975 * s).collect();
        let odds_ratios = logistic.then(|| {
            names
                .iter()
                .enumerate()
                .map(|(k, name)| OddsRatio {
                    name: name.clone(),
                    odds_ratio: beta[k].exp(),
                    lower: ci_lower[k].exp(),
                    upper: ci_upper[k].exp(),
                })
                .collect()
        });
        Self {
            estimator: estimator.to_string(),
            names,
            vcov: vcov.row_iter().map(|r| r.iter().copied().collect()).collect(),
            beta,
            se,
            ci_lower,
            ci_upper,
            odds_ratios,
            variance_kind,
            n,
            iterations,
            converged,
            warnings: Vec::new(),
        }
    }

    pub fn vcov_matrix(&self) -> DMatrix<f64> {
        let q = self.beta.len();
        DMatrix::from_fn(q, q, |i, j| self.vcov[i][j])
    }

    pub fn covers(&self, k: usize, truth: f64) -> bool {
        self.ci_lower[k] <= truth && truth <= self.ci_upper[k]
    }

    pub fn with_warnings(mut self, warnings: impl IntoIterator<Item = String>) -> Self {
        self.warnings.extend(warnings);
        self
    }

    /// Text table in the odds-ratio layout used for logistic fits.
    pub fn odds_ratio_table(&self) -> Option<String> {
        let ors = self.odds_ratios.as_ref()?;
        let width = ors.iter().map(|o| o.name.len()).max().unwrap_or(4).max(4);
        let mut out = format!("{:<width$}  {:>8}  {:>19}\n", "term", "OR", "95% CI");
        for o in ors {
            out.push_str(&format!(
                "{:<width$}  {:>8.3}  ({:>7.3}, {:>7.3})\n",
                o.name, o.odds_ratio, o.lower, o.upper
            ));
        }
        Some(out)
    }
}
