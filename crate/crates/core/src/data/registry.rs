use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One missingness pattern: its code and the sorted indices of the variables
/// it observes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pattern {
    pub code: usize,
    pub observed: Vec<usize>,
}

/// Patterns `1..=M` over `K` variables. Pattern 1 is always the complete case.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatternRegistry {
    n_vars: usize,
    patterns: Vec<Pattern>,
}

impl PatternRegistry {
    /// Build a registry from observed-variable sets; codes are assigned in
    /// the given order starting at 1. The first set must be `{0..K}`.
    pub fn new(n_vars: usize, observed_sets: Vec<Vec<usize>>) -> Result<Self> {
        if n_vars == 0 {
            return Err(Error::Registry("no variables".into()));
        }
        let Some(first) = observed_sets.first() else {
            return Err(Error::Registry("no patterns".into()));
        };
        let full: Vec<usize> = (0..n_vars).collect();
        let mut first = first.clone();
        first.sort_unstable();
        if first != full {
            return Err(Error::Registry(
                "pattern 1 must observe every variable".into(),
            ));
        }
        let mut patterns = Vec::with_capacity(observed_sets.len());
        for (i, mut obs) in observed_sets.into_iter().enumerate() {
            obs.sort_unstable();
            let before = obs.len();
            obs.dedup();
            if obs.len() != before {
                return Err(Error::Registry(format!(
                    "pattern {} lists a variable twice",
                    i + 1
                )));
            }
            if let Some(&v) = obs.iter().find(|&&v| v >= n_vars) {
                return Err(Error::Registry(format!(
                    "pattern {} references variable {v} beyond {n_vars}",
                    i + 1
                )));
            }
            if i > 0 && obs.len() == n_vars {
                return Err(Error::Registry(format!(
                    "incomplete pattern {} observes every variable",
                    i + 1
                )));
            }
            patterns.push(Pattern {
                code: i + 1,
                observed: obs,
            });
        }
        Ok(Self { n_vars, patterns })
    }

    /// Number of patterns `M`.
    pub fn len(&self) -> usize {
        self.patterns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn patterns(&self) -> &[Pattern] {
        &self.patterns
    }

    pub fn contains(&self, code: usize) -> bool {
        code >= 1 && code <= self.patterns.len()
    }

    pub fn pattern(&self, code: usize) -> &Pattern {
        &self.patterns[code - 1]
    }

    pub fn observed(&self, code: usize) -> &[usize] {
        &self.patterns[code - 1].observed
    }

    /// Codes `2..=M`.
    pub fn incomplete_codes(&self) -> impl Iterator<Item = usize> {
        2..=self.patterns.len()
    }

    /// Observedness mask of a pattern, one flag per variable.
    pub fn mask(&self, code: usize) -> Vec<bool> {
        let mut mask = vec![false; self.n_vars];
        for &v in self.observed(code) {
            mask[v] = true;
        }
        mask
    }

    /// Mask rendered as a `0`/`1` string, first variable leftmost.
    pub fn mask_string(&self, code: usize) -> String {
        self.mask(code)
            .iter()
            .map(|&b| if b { '1' } else { '0' })
            .collect()
    }

    /// Position of `var` within the observed values of pattern `code`.
    pub fn position(&self, code: usize, var: usize) -> Option<usize> {
        self.observed(code).binary_search(&var).ok()
    }

    pub fn code_for_observed(&self, observed: &[usize]) -> Option<usize> {
        self.patterns
            .iter()
            .find(|p| p.observed == observed)
            .map(|p| p.code)
    }
}
