//! A fully discrete law for population-level checks: every (y, a, pattern)
//! cell becomes one row carrying its exact probability mass.

#![allow(dead_code)]

use nalgebra::DVector;

use nmipw::aipw::augmentation_matrix;
use nmipw::basis::build_default_bases;
use nmipw::data::{ObservedDataset, ObservedRow, PatternRegistry, VariableKind, VariableSchema};
use nmipw::estfn::{EstimatingFunction, LogisticScore};
use nmipw::ipw::ipw_weights;
use nmipw::missingness::{expit, pattern_probability, MissingnessParams};

pub const BETA: [f64; 2] = [-0.5, 1.0];
pub const P_A: f64 = 0.4;

pub struct Population {
    pub registry: PatternRegistry,
    pub params: MissingnessParams,
    pub dataset: ObservedDataset,
    pub mass: Vec<f64>,
    pub ef: LogisticScore,
}

pub fn population() -> Population {
    // 1: (Y, A), 2: A only, 3: Y only
    let registry = PatternRegistry::new(2, vec![vec![0, 1], vec![1], vec![0]]).unwrap();
    let params = MissingnessParams::new(&registry, vec![vec![-1.0, 0.8], vec![-1.5, 0.6]]).unwrap();
    let schema = VariableSchema::new(vec!["Y".into(), "A".into()], vec![VariableKind::Binary; 2]).unwrap();

    let mut rows = Vec::new();
    let mut mass = Vec::new();
    for a in [0.0, 1.0] {
        for y in [0.0, 1.0] {
            let pa = if a == 1.0 { P_A } else { 1.0 - P_A };
            let py = expit(BETA[0] + BETA[1] * a);
            let p_full = pa * if y == 1.0 { py } else { 1.0 - py };
            let l = [y, a];
            let mut pi1 = 1.0;
            for code in registry.incomplete_codes() {
                let obs: Vec<f64> = registry.observed(code).iter().map(|&v| l[v]).collect();
                let p = pattern_probability(params.block(code), &obs).unwrap();
                pi1 -= p;
                rows.push(ObservedRow { pattern: code, values: obs });
                mass.push(p_full * p);
            }
            rows.push(ObservedRow { pattern: 1, values: l.to_vec() });
            mass.push(p_full * pi1);
        }
    }
    let dataset = ObservedDataset::new(schema, &registry, rows).unwrap();
    Population { registry, params, dataset, mass, ef: LogisticScore::new(0, vec![1]) }
}

impl Population {
    /// `E[(R = 1) M(L; beta) / pi_1]`.
    pub fn ipw_moment(&self, beta: &[f64]) -> DVector<f64> {
        let weights = ipw_weights(&self.dataset, &self.registry, &self.params).unwrap();
        let mut moment = DVector::zeros(self.ef.dim());
        for (row, w) in weights {
            moment += self.ef.evaluate(&self.dataset.rows()[row].values, beta) * (self.mass[row] * w);
        }
        moment
    }

    /// `E[A*]` for every column of the default augmentation space.
    pub fn augmentation_means(&self) -> Vec<f64> {
        let bases = build_default_bases(self.dataset.schema(), &self.registry, &self.ef);
        let a = augmentation_matrix(&self.dataset, &self.registry, &self.params, &bases).unwrap();
        (0..a.ncols()).map(|j| (0..a.nrows()).map(|i| self.mass[i] * a[(i, j)]).sum()).collect()
    }
}
