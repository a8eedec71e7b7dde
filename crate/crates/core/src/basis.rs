//! Function bases for the augmented estimator.
//!
//! The full-data basis extends the logistic score to
//! `U* = [1, X, h(X)]^T {Y - expit(beta . (1, X))}`; the augmentation basis
//! lists, per incomplete pattern `r`, functions `t*_r(L_(r))` of the variables
//! that pattern observes. The defaults are full quadratics (constant, main
//! effects, squares, pairwise interactions) with exact duplicates removed:
//! for binary variables `x^2 = x`.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::{ObservedDataset, PatternRegistry, VariableKind, VariableSchema};
use crate::error::{Error, Result};
use crate::estfn::LogisticScore;
use crate::linalg::independent_columns;

/// Relative tolerance of the numerical rank check.
pub const RANK_TOL: f64 = 1e-10;

/// A monomial of degree at most two in the (global) variable indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Term {
    Const,
    Main { var: usize },
    Square { var: usize },
    Interaction { i: usize, j: usize },
}

impl Term {
    pub fn eval(&self, l: &[f64]) -> f64 {
        match *self {
            Term::Const => 1.0,
            Term::Main { var } => l[var],
            Term::Square { var } => l[var] * l[var],
            Term::Interaction { i, j } => l[i] * l[j],
        }
    }

    pub fn vars(&self) -> Vec<usize> {
        match *self {
            Term::Const => vec![],
            Term::Main { var } | Term::Square { var } => vec![var],
            Term::Interaction { i, j } => vec![i, j],
        }
    }

    /// Same function written canonically: binary squares become main effects
    /// and interactions are ordered.
    pub fn canonical(self, schema: &VariableSchema) -> Term {
        match self {
            Term::Square { var } if schema.kind(var) == VariableKind::Binary => Term::Main { var },
            Term::Interaction { i, j } if i == j => Term::Square { var: i }.canonical(schema),
            Term::Interaction { i, j } if i > j => Term::Interaction { i: j, j: i },
            t => t,
        }
    }

    pub fn label(&self, schema: &VariableSchema) -> String {
        match *self {
            Term::Const => "1".into(),
            Term::Main { var } => schema.name(var).into(),
            Term::Square { var } => format!("{}^2", schema.name(var)),
            Term::Interaction { i, j } => format!("{}:{}", schema.name(i), schema.name(j)),
        }
    }
}

/// Constant, main effects, squares and pairwise interactions over `vars`.
pub fn quadratic_terms(vars: &[usize], with_const: bool) -> Vec<Term> {
    let mut out = Vec::new();
    if with_const {
        out.push(Term::Const);
    }
    out.extend(vars.iter().map(|&var| Term::Main { var }));
    out.extend(vars.iter().map(|&var| Term::Square { var }));
    for (a, &i) in vars.iter().enumerate() {
        for &j in &vars[a + 1..] {
            out.push(Term::Interaction { i, j });
        }
    }
    out
}

/// Canonicalize and drop exact duplicates (and anything in `exclude`),
/// keeping first occurrences. Returns (kept, dropped).
pub fn dedup_terms(terms: &[Term], schema: &VariableSchema, exclude: &[Term]) -> (Vec<Term>, Vec<Term>) {
    let mut seen: Vec<Term> = exclude.iter().map(|t| t.canonical(schema)).collect();
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for &t in terms {
        let c = t.canonical(schema);
        if seen.contains(&c) {
            dropped.push(t);
        } else {
            seen.push(c);
            kept.push(c);
        }
    }
    (kept, dropped)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FullDataBasis {
    /// Extra functions `h(X)` beyond `(1, X)`.
    pub h: Vec<Term>,
}

impl FullDataBasis {
    /// `l = q + |h|`.
    pub fn dim(&self, ef: &LogisticScore) -> usize {
        ef.covariates.len() + 1 + self.h.len()
    }

    /// `[1, X, h(X)]` at a complete row.
    pub fn features(&self, ef: &LogisticScore, l: &[f64]) -> Vec<f64> {
        let mut f = Vec::with_capacity(self.dim(ef));
        f.push(1.0);
        f.extend(ef.covariates.iter().map(|&c| l[c]));
        f.extend(self.h.iter().map(|t| t.eval(l)));
        f
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentationBasis {
    /// `terms[code - 2]` holds `t*_r` for pattern `code`.
    pub terms: Vec<Vec<Term>>,
}

impl AugmentationBasis {
    pub fn dim(&self) -> usize {
        self.terms.iter().map(Vec::len).sum()
    }

    pub fn block(&self, code: usize) -> &[Term] {
        &self.terms[code - 2]
    }

    pub fn validate(&self, registry: &PatternRegistry) -> Result<()> {
        if self.terms.len() + 1 != registry.len() {
            return Err(Error::Config(format!(
                "augmentation basis has {} blocks for {} incomplete patterns",
                self.terms.len(),
                registry.len() - 1
            )));
        }
        for code in registry.incomplete_codes() {
            let obs = registry.observed(code);
            for t in self.block(code) {
                if t.vars().iter().any(|v| !obs.contains(v)) {
                    return Err(Error::Config(format!(
                        "augmentation term {t:?} for pattern {code} uses an unobserved variable"
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bases {
    pub full: FullDataBasis,
    pub augmentation: AugmentationBasis,
    /// Candidate terms removed as duplicates or by the rank check.
    #[serde(default)]
    pub dropped: Vec<String>,
}

/// Quadratic defaults: `h` over the covariates and `t*_r` over each pattern's
/// observed variables, constant included so the missingness scores lie in
/// the augmentation span.
pub fn build_default_bases(
    schema: &VariableSchema,
    registry: &PatternRegistry,
    ef: &LogisticScore,
) -> Bases {
    let mut dropped = Vec::new();
    let mut exclude = vec![Term::Const];
    exclude.extend(ef.covariates.iter().map(|&var| Term::Main { var }));
    let (h, gone) = dedup_terms(&quadratic_terms(&ef.covariates, false), schema, &exclude);
    dropped.extend(gone.iter().map(|t| format!("h: {} duplicates (1, X)", t.label(schema))));
    let mut terms = Vec::new();
    for code in registry.incomplete_codes() {
        let (kept, gone) = dedup_terms(&quadratic_terms(registry.observed(code), true), schema, &[]);
        dropped.extend(gone.iter().map(|t| format!("t*_{code}: {} duplicate", t.label(schema))));
        terms.push(kept);
    }
    Bases { full: FullDataBasis { h }, augmentation: AugmentationBasis { terms }, dropped }
}

/// Remove columns that are numerically dependent on the data: `h` over the
/// complete cases and each `t*_r` over the rows observing `L_(r)`.
pub fn prune_dependent(
    bases: &mut Bases,
    schema: &VariableSchema,
    registry: &PatternRegistry,
    dataset: &ObservedDataset,
    ef: &LogisticScore,
) -> Vec<String> {
    let mut warnings = Vec::new();
    let complete: Vec<&[f64]> = dataset.complete_rows().map(|(_, l)| l).collect();
    let q = ef.covariates.len() + 1;
    let feats = DMatrix::from_fn(complete.len(), bases.full.dim(ef), |i, j| {
        bases.full.features(ef, complete[i])[j]
    });
    let keep = independent_columns(&feats, RANK_TOL);
    let h_keep: Vec<Term> = keep.iter().filter(|&&j| j >= q).map(|&j| bases.full.h[j - q]).collect();
    for t in &bases.full.h {
        if !h_keep.contains(t) {
            warnings.push(format!("h: {} dropped, linearly dependent on the data", t.label(schema)));
        }
    }
    bases.full.h = h_keep;

    for code in registry.incomplete_codes() {
        let block = &bases.augmentation.terms[code - 2];
        let obs = registry.observed(code);
        let mut rows: Vec<Vec<f64>> = complete.iter().map(|l| l.to_vec()).collect();
        for r in dataset.rows().iter().filter(|r| r.pattern == code) {
            let mut full = vec![f64::NAN; schema.len()];
            for (&v, &x) in obs.iter().zip(&r.values) {
                full[v] = x;
            }
            rows.push(full);
        }
        let m = DMatrix::from_fn(rows.len(), block.len(), |i, j| block[j].eval(&rows[i]));
        let keep = independent_columns(&m, RANK_TOL);
        let kept: Vec<Term> = keep.iter().map(|&j| block[j]).collect();
        for t in block {
            if !kept.contains(t) {
                warnings.push(format!("t*_{code}: {} dropped, linearly dependent on the data", t.label(schema)));
            }
        }
        bases.augmentation.terms[code - 2] = kept;
    }
    bases.dropped.extend(warnings.iter().cloned());
    warnings
}

/// JSON form: `{"h": [...], "augmentation": {"2": [...], ...}}` with terms
/// written as `{"type": "main", "var": 1}` and the like.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisSpec {
    pub h: Vec<Term>,
    pub augmentation: BTreeMap<String, Vec<Term>>,
}

impl BasisSpec {
    pub fn into_bases(self, registry: &PatternRegistry) -> Result<Bases> {
        let mut terms = vec![Vec::new(); registry.len().saturating_sub(1)];
        for (k, v) in self.augmentation {
            let code: usize = k
                .parse()
                .map_err(|_| Error::Config(format!("pattern key `{k}` is not an integer")))?;
            if code < 2 || code > registry.len() {
                return Err(Error::Config(format!("no incomplete pattern {code}")));
            }
            terms[code - 2] = v;
        }
        let augmentation = AugmentationBasis { terms };
        augmentation.validate(registry)?;
        Ok(Bases { full: FullDataBasis { h: self.h }, augmentation, dropped: Vec::new() })
    }

    pub fn from_bases(bases: &Bases) -> Self {
        Self {
            h: bases.full.h.clone(),
            augmentation: bases
                .augmentation
                .terms
                .iter()
                .enumerate()
                .map(|(i, t)| ((i + 2).to_string(), t.clone()))
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sim_schema() -> VariableSchema {
        VariableSchema::new(
            vec!["Y".into(), "A".into(), "C1".into(), "C2".into()],
            vec![
                VariableKind::Binary,
                VariableKind::Continuous,
                VariableKind::Continuous,
                VariableKind::Continuous,
            ],
        )
        .unwrap()
    }

    fn sim_registry() -> PatternRegistry {
        PatternRegistry::new(4, vec![vec![0, 1, 2, 3], vec![0, 1, 2], vec![0, 1], vec![2, 3], vec![0, 3]]).unwrap()
    }

    #[test]
    fn simulation_design_dimensions() {
        let ef = LogisticScore::new(0, vec![1, 2, 3]);
        assert_eq!(quadratic_terms(&ef.covariates, false).len(), 9);
        let b = build_default_bases(&sim_schema(), &sim_registry(), &ef);
        assert_eq!(b.full.h.len(), 6);
        assert_eq!(b.full.dim(&ef), 10);
        let sizes: Vec<usize> = b.augmentation.terms.iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![9, 5, 6, 5]);
        assert_eq!(b.augmentation.dim(), 25);
    }

    #[test]
    fn binary_pair_expansion() {
        let schema = sim_schema();
        let (kept, dropped) = dedup_terms(&quadratic_terms(&[0, 1], true), &schema, &[]);
        assert_eq!(
            kept,
            vec![
                Term::Const,
                Term::Main { var: 0 },
                Term::Main { var: 1 },
                Term::Square { var: 1 },
                Term::Interaction { i: 0, j: 1 },
            ]
        );
        assert_eq!(dropped, vec![Term::Square { var: 0 }]);
    }

    #[test]
    fn single_binary_covariate_collapses() {
        let schema = VariableSchema::new(
            vec!["y".into(), "x".into()],
            vec![VariableKind::Binary, VariableKind::Binary],
        )
        .unwrap();
        let registry = PatternRegistry::new(2, vec![vec![0, 1], vec![1]]).unwrap();
        let b = build_default_bases(&schema, &registry, &LogisticScore::new(0, vec![1]));
        assert!(b.full.h.is_empty());
        assert_eq!(b.augmentation.terms[0], vec![Term::Const, Term::Main { var: 1 }]);
    }

    #[test]
    fn spec_round_trip() {
        let ef = LogisticScore::new(0, vec![1, 2, 3]);
        let b = build_default_bases(&sim_schema(), &sim_registry(), &ef);
        let json = serde_json::to_string(&BasisSpec::from_bases(&b)).unwrap();
        assert!(json.contains(r#"{"type":"interaction","i":1,"j":2}"#));
        let back: BasisSpec = serde_json::from_str(&json).unwrap();
        let rebuilt = back.into_bases(&sim_registry()).unwrap();
        assert_eq!(rebuilt.full, b.full);
        assert_eq!(rebuilt.augmentation, b.augmentation);
    }

    #[test]
    fn unobserved_term_rejected() {
        let spec = BasisSpec {
            h: vec![],
            augmentation: [("3".to_string(), vec![Term::Main { var: 3 }])].into_iter().collect(),
        };
        assert!(spec.into_bases(&sim_registry()).is_err());
    }
}
