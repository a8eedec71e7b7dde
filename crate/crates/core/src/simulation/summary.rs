use std::fmt;

use serde::{Deserialize, Serialize};

use super::{logistic_ef, EstimatorKind, ReplicateResult};

/// One estimator x coefficient cell of the summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub estimator: EstimatorKind,
    pub coefficient: String,
    pub index: usize,
    pub used: usize,
    pub bias: f64,
    /// Monte Carlo variance of the estimates.
    pub mcv_raw: f64,
    /// `n * mcv_raw`.
    pub mcv_scaled: f64,
    /// Mean estimated variance.
    pub av_raw: f64,
    pub av_scaled: f64,
    /// `av(augmented) / av(IPW)` for augmented estimators.
    pub are: Option<f64>,
    /// Percent of 95% Wald intervals containing the truth.
    pub coverage: f64,
    /// Percent of replicates in which the estimator converged.
    pub convergence_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryTable {
    pub n: usize,
    pub replicates: usize,
    pub rows: Vec<SummaryRow>,
    pub notes: Vec<String>,
}

impl SummaryTable {
    pub fn get(&self, estimator: EstimatorKind, index: usize) -> Option<&SummaryRow> {
        self.rows.iter().find(|r| r.estimator == estimator && r.index == index)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "estimator,coefficient,used,bias,mcv_raw,mcv_scaled,av_raw,av_scaled,are,coverage,convergence_rate\n",
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{},{:.1},{:.1}\n",
                r.estimator.label(),
                r.coefficient,
                r.used,
                r.bias,
                r.mcv_raw,
                r.mcv_scaled,
                r.av_raw,
                r.av_scaled,
                r.are.map(|a| format!("{a:.4}")).unwrap_or_default(),
                r.coverage,
                r.convergence_rate
            ));
        }
        out
    }
}

impl fmt::Display for SummaryTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "n = {}, replicates = {}", self.n, self.replicates)?;
        writeln!(
            f,
            "{:<10} {:<12} {:>7} {:>8} {:>8} {:>8} {:>6} {:>7} {:>6}",
            "estimator", "coefficient", "Bias", "MCV", "AV", "n*AV", "ARE", "%Cover", "%Conv"
        )?;
        for r in &self.rows {
            writeln!(
                f,
                "{:<10} {:<12} {:>7.3} {:>8.4} {:>8.4} {:>8.2} {:>6} {:>7.1} {:>6.1}",
                r.estimator.label(),
                r.coefficient,
                r.bias,
                r.mcv_raw,
                r.av_raw,
                r.av_scaled,
                r.are.map(|a| format!("{a:.2}")).unwrap_or_default(),
                r.coverage,
                r.convergence_rate
            )?;
        }
        for note in &self.notes {
            writeln!(f, "note: {note}")?;
        }
        Ok(())
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Table of bias, variances, efficiency and coverage over converged
/// replicates. The result does not depend on the order of `results`.
pub fn summarize(results: &[ReplicateResult], truth: &[f64], n: usize) -> SummaryTable {
    let mut sorted: Vec<&ReplicateResult> = results.iter().collect();
    sorted.sort_by_key(|r| r.replicate);
    let names = logistic_ef().names;
    let total = sorted.len();
    let mut rows = Vec::new();
    let mut notes = Vec::new();
    let present: Vec<EstimatorKind> = EstimatorKind::ALL
        .into_iter()
        .filter(|k| sorted.iter().any(|r| r.estimate(*k).is_some()))
        .collect();
    for &kind in &present {
        let recs: Vec<_> = sorted.iter().filter_map(|r| r.estimate(kind)).collect();
        let used: Vec<_> = recs.iter().filter(|e| e.converged).collect();
        let conv_rate = 100.0 * used.len() as f64 / total.max(1) as f64;
        if used.len() < 2 {
            notes.push(format!("{}: fewer than two converged replicates, omitted", kind.label()));
            continue;
        }
        for (k, name) in names.iter().enumerate().take(truth.len()) {
            let est: Vec<f64> = used.iter().map(|e| e.beta[k]).collect();
            let m = mean(&est);
            let mcv = est.iter().map(|b| (b - m).powi(2)).sum::<f64>() / (est.len() - 1) as f64;
            let av = mean(&used.iter().map(|e| e.variance[k]).collect::<Vec<_>>());
            let cover = used.iter().filter(|e| e.covered[k]).count() as f64 / used.len() as f64;
            rows.push(SummaryRow {
                estimator: kind,
                coefficient: name.clone(),
                index: k,
                used: used.len(),
                bias: m - truth[k],
                mcv_raw: mcv,
                mcv_scaled: mcv * n as f64,
                av_raw: av,
                av_scaled: av * n as f64,
                are: None,
                coverage: 100.0 * cover,
                convergence_rate: conv_rate,
            });
        }
    }
    let snapshot = rows.clone();
    for row in &mut rows {
        if let Some(partner) = row.estimator.ipw_partner() {
            if let Some(p) = snapshot.iter().find(|r| r.estimator == partner && r.index == row.index) {
                row.are = Some(row.av_raw / p.av_raw);
            }
        }
    }
    SummaryTable { n, replicates: total, rows, notes }
}
