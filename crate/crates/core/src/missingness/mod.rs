//! Per-pattern logistic missingness model.
//!
//! Each incomplete pattern `m` has probability
//! `pi_m = expit(gamma_m . (1, L_(m)))` depending only on the variables it
//! observes; the complete-case probability is `1 - sum_m pi_m`. Nothing here
//! clamps `pi_1`: values at or below zero are reported, and the
//! log-likelihood turns them into `-inf`.

mod params;
mod umle;

use nalgebra::DMatrix;

pub use params::MissingnessParams;
pub use umle::{default_init, fit_umle, UmleConfig, UmleMethod, UmleReport};

use crate::data::{ObservedDataset, PatternRegistry};
use crate::error::{Error, Result};

pub fn expit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// `ln expit(x)` without overflow.
pub fn ln_expit(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

fn linear_predictor(gamma: &[f64], l_obs: &[f64]) -> f64 {
    gamma[0] + gamma[1..].iter().zip(l_obs).map(|(g, x)| g * x).sum::<f64>()
}

/// Probability of pattern `m` given the variables it observes.
pub fn pattern_probability(gamma_m: &[f64], l_obs: &[f64]) -> Result<f64> {
    if gamma_m.len() != l_obs.len() + 1 {
        return Err(Error::DimensionMismatch {
            expected: gamma_m.len().saturating_sub(1),
            got: l_obs.len(),
        });
    }
    Ok(expit(linear_predictor(gamma_m, l_obs)))
}

/// `1 - sum_m pi_m` at a fully observed row. May be zero or negative.
pub fn complete_case_probability(
    params: &MissingnessParams,
    registry: &PatternRegistry,
    row: &[f64],
) -> f64 {
    let mut total = 0.0;
    let mut buf = Vec::new();
    for code in registry.incomplete_codes() {
        buf.clear();
        buf.extend(registry.observed(code).iter().map(|&v| row[v]));
        total += expit(linear_predictor(params.block(code), &buf));
    }
    1.0 - total
}

/// Row-major design `(1, L_(m))` for a set of rows.
#[derive(Debug, Clone)]
pub(crate) struct Design {
    pub rows: Vec<usize>,
    pub width: usize,
    pub x: Vec<f64>,
}

impl Design {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.width..(i + 1) * self.width]
    }

    pub fn eta(&self, i: usize, gamma: &[f64]) -> f64 {
        self.row(i).iter().zip(gamma).map(|(a, b)| a * b).sum()
    }
}

/// Fitted probabilities for one row.
#[derive(Debug, Clone, PartialEq)]
pub enum RowFit {
    /// Complete case: every pattern probability (index `code - 2`) and `pi_1`.
    Complete { pattern_probs: Vec<f64>, pi1: f64 },
    /// Incomplete row of pattern `code` with its own probability.
    Incomplete { code: usize, pi: f64 },
}

/// Missingness model bound to one dataset, with the per-pattern designs
/// precomputed for repeated likelihood evaluation.
#[derive(Debug, Clone)]
pub struct MissingnessModel {
    n: usize,
    layout: Vec<usize>,
    complete: Vec<usize>,
    /// per block: design over the complete cases
    cc_design: Vec<Design>,
    /// per block: design over rows of that pattern
    own_design: Vec<Design>,
    row_code: Vec<usize>,
    /// position of each row inside its own design (or complete list)
    row_slot: Vec<usize>,
}

impl MissingnessModel {
    pub fn new(registry: &PatternRegistry, dataset: &ObservedDataset) -> Self {
        let m = registry.len();
        let layout: Vec<usize> = registry
            .incomplete_codes()
            .map(|c| registry.observed(c).len() + 1)
            .collect();
        let complete: Vec<usize> = dataset.complete_rows().map(|(i, _)| i).collect();
        let mut cc_design = Vec::with_capacity(m.saturating_sub(1));
        let mut own_design = Vec::with_capacity(m.saturating_sub(1));
        for code in registry.incomplete_codes() {
            let obs = registry.observed(code);
            let width = obs.len() + 1;
            let mut x = Vec::with_capacity(complete.len() * width);
            for (_, vals) in dataset.complete_rows() {
                x.push(1.0);
                x.extend(obs.iter().map(|&v| vals[v]));
            }
            cc_design.push(Design { rows: complete.clone(), width, x });
            let mut rows = Vec::new();
            let mut x = Vec::new();
            for (i, r) in dataset.rows().iter().enumerate() {
                if r.pattern == code {
                    rows.push(i);
                    x.push(1.0);
                    x.extend_from_slice(&r.values);
                }
            }
            own_design.push(Design { rows, width, x });
        }
        let row_code: Vec<usize> = dataset.rows().iter().map(|r| r.pattern).collect();
        let mut row_slot = vec![0; dataset.n()];
        for (slot, &i) in complete.iter().enumerate() {
            row_slot[i] = slot;
        }
        for d in &own_design {
            for (slot, &i) in d.rows.iter().enumerate() {
                row_slot[i] = slot;
            }
        }
        Self {
            n: dataset.n(),
            layout,
            complete,
            cc_design,
            own_design,
            row_code,
            row_slot,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Coefficient count per incomplete pattern.
    pub fn layout(&self) -> &[usize] {
        &self.layout
    }

    pub fn dim(&self) -> usize {
        self.layout.iter().sum()
    }

    pub fn complete_rows(&self) -> &[usize] {
        &self.complete
    }

    pub(crate) fn cc_design(&self, block: usize) -> &Design {
        &self.cc_design[block]
    }

    pub(crate) fn own_design(&self, block: usize) -> &Design {
        &self.own_design[block]
    }

    /// Pattern probabilities at the complete cases, indexed `[block][slot]`.
    pub fn complete_case_pattern_probs(&self, params: &MissingnessParams) -> Vec<Vec<f64>> {
        self.cc_design
            .iter()
            .enumerate()
            .map(|(b, d)| {
                let g = params.block_at(b);
                (0..d.len()).map(|i| expit(d.eta(i, g))).collect()
            })
            .collect()
    }

    /// `pi_1` at every complete case, in row order.
    pub fn complete_case_probs(&self, params: &MissingnessParams) -> Vec<f64> {
        let mut pi1 = vec![1.0; self.complete.len()];
        for (b, d) in self.cc_design.iter().enumerate() {
            let g = params.block_at(b);
            for (i, p) in pi1.iter_mut().enumerate() {
                *p -= expit(d.eta(i, g));
            }
        }
        pi1
    }

    pub fn min_complete_case_probability(&self, params: &MissingnessParams) -> f64 {
        self.complete_case_probs(params)
            .into_iter()
            .fold(f64::INFINITY, f64::min)
    }

    /// Whether every complete case has `sum_m pi_m < 1 - sigma_star`.
    pub fn satisfies_constraint(&self, params: &MissingnessParams, sigma_star: f64) -> bool {
        self.complete_case_probs(params)
            .iter()
            .all(|&p1| 1.0 - p1 < 1.0 - sigma_star)
    }

    /// Unconstrained log-likelihood; `-inf` when some complete case has
    /// `pi_1 <= 0`.
    pub fn log_likelihood(&self, params: &MissingnessParams) -> f64 {
        let mut ll = 0.0;
        for (b, d) in self.own_design.iter().enumerate() {
            let g = params.block_at(b);
            for i in 0..d.len() {
                ll += ln_expit(d.eta(i, g));
            }
        }
        for p1 in self.complete_case_probs(params) {
            if !(p1 > 0.0) {
                return f64::NEG_INFINITY;
            }
            ll += p1.ln();
        }
        ll
    }

    /// Gradient of [`Self::log_likelihood`], flat in block order. Entries are
    /// NaN when some complete case has `pi_1 <= 0`.
    pub fn score(&self, params: &MissingnessParams) -> Vec<f64> {
        let pi1 = self.complete_case_probs(params);
        if pi1.iter().any(|&p| !(p > 0.0)) {
            return vec![f64::NAN; self.dim()];
        }
        let mut out = Vec::with_capacity(self.dim());
        for b in 0..self.layout.len() {
            let g = params.block_at(b);
            let mut grad = vec![0.0; self.layout[b]];
            let own = &self.own_design[b];
            for i in 0..own.len() {
                let pi = expit(own.eta(i, g));
                let w = 1.0 - pi;
                for (acc, x) in grad.iter_mut().zip(own.row(i)) {
                    *acc += w * x;
                }
            }
            let cc = &self.cc_design[b];
            for i in 0..cc.len() {
                let pi = expit(cc.eta(i, g));
                let w = -pi * (1.0 - pi) / pi1[i];
                for (acc, x) in grad.iter_mut().zip(cc.row(i)) {
                    *acc += w * x;
                }
            }
            out.extend(grad);
        }
        out
    }

    /// Per-row score contributions (`n x dim`); rows of pattern `k >= 2`
    /// only touch block `k`.
    pub fn row_scores(&self, params: &MissingnessParams) -> DMatrix<f64> {
        let dim = self.dim();
        let mut s = DMatrix::zeros(self.n, dim);
        let pi1 = self.complete_case_probs(params);
        let mut offset = 0;
        for b in 0..self.layout.len() {
            let g = params.block_at(b);
            let own = &self.own_design[b];
            for i in 0..own.len() {
                let pi = expit(own.eta(i, g));
                let row = own.rows[i];
                for (k, x) in own.row(i).iter().enumerate() {
                    s[(row, offset + k)] = (1.0 - pi) * x;
                }
            }
            let cc = &self.cc_design[b];
            for i in 0..cc.len() {
                let pi = expit(cc.eta(i, g));
                let w = -pi * (1.0 - pi) / pi1[i];
                let row = cc.rows[i];
                for (k, x) in cc.row(i).iter().enumerate() {
                    s[(row, offset + k)] = w * x;
                }
            }
            offset += self.layout[b];
        }
        s
    }

    /// Fitted probabilities row by row.
    pub fn row_fits(&self, params: &MissingnessParams) -> Vec<RowFit> {
        let cc_probs = self.complete_case_pattern_probs(params);
        (0..self.n)
            .map(|i| {
                let code = self.row_code[i];
                let slot = self.row_slot[i];
                if code == 1 {
                    let pattern_probs: Vec<f64> = cc_probs.iter().map(|p| p[slot]).collect();
                    let pi1 = 1.0 - pattern_probs.iter().sum::<f64>();
                    RowFit::Complete { pattern_probs, pi1 }
                } else {
                    let b = code - 2;
                    let pi = expit(self.own_design[b].eta(slot, params.block_at(b)));
                    RowFit::Incomplete { code, pi }
                }
            })
            .collect()
    }
}

/// Log-likelihood of `params` on `dataset`.
pub fn log_likelihood(
    params: &MissingnessParams,
    dataset: &ObservedDataset,
    registry: &PatternRegistry,
) -> f64 {
    MissingnessModel::new(registry, dataset).log_likelihood(params)
}

/// Score vector of `params` on `dataset`, flat in block order.
pub fn score(
    params: &MissingnessParams,
    dataset: &ObservedDataset,
    registry: &PatternRegistry,
) -> Vec<f64> {
    MissingnessModel::new(registry, dataset).score(params)
}
