use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::registry::PatternRegistry;
use super::schema::{VariableKind, VariableSchema};
use crate::error::{Error, Result};

/// A rectangular table with explicit missing cells.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    pub schema: VariableSchema,
    pub rows: Vec<Vec<Option<f64>>>,
}

impl RawTable {
    pub fn new(schema: VariableSchema, rows: Vec<Vec<Option<f64>>>) -> Result<Self> {
        let k = schema.len();
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != k) {
            return Err(Error::Dataset(format!(
                "row {} has {} cells, schema has {k} variables",
                i + 1,
                r.len()
            )));
        }
        Ok(Self { schema, rows })
    }

    /// Build a table, inferring each variable's kind: a column whose
    /// observed values are all 0 or 1 is binary.
    pub fn with_inferred_kinds(names: Vec<String>, rows: Vec<Vec<Option<f64>>>) -> Result<Self> {
        let kinds = (0..names.len())
            .map(|j| {
                let binary = rows
                    .iter()
                    .filter_map(|r| r.get(j).copied().flatten())
                    .all(|v| v == 0.0 || v == 1.0);
                if binary {
                    VariableKind::Binary
                } else {
                    VariableKind::Continuous
                }
            })
            .collect();
        Self::new(VariableSchema::new(names, kinds)?, rows)
    }
}

/// One observed record: its pattern code and the values of exactly the
/// variables that pattern observes, in variable order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservedRow {
    pub pattern: usize,
    pub values: Vec<f64>,
}

impl ObservedRow {
    pub fn get(&self, var: usize, registry: &PatternRegistry) -> Option<f64> {
        registry
            .position(self.pattern, var)
            .map(|pos| self.values[pos])
    }

    pub fn is_complete(&self) -> bool {
        self.pattern == 1
    }
}

/// Rows encoded against a [`PatternRegistry`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservedDataset {
    schema: VariableSchema,
    rows: Vec<ObservedRow>,
}

impl ObservedDataset {
    pub fn new(
        schema: VariableSchema,
        registry: &PatternRegistry,
        rows: Vec<ObservedRow>,
    ) -> Result<Self> {
        if registry.n_vars() != schema.len() {
            return Err(Error::Dataset(format!(
                "registry covers {} variables, schema has {}",
                registry.n_vars(),
                schema.len()
            )));
        }
        for (i, row) in rows.iter().enumerate() {
            if !registry.contains(row.pattern) {
                return Err(Error::Dataset(format!(
                    "row {} references unknown pattern {}",
                    i + 1,
                    row.pattern
                )));
            }
            let expected = registry.observed(row.pattern).len();
            if row.values.len() != expected {
                return Err(Error::Dataset(format!(
                    "row {} stores {} values, pattern {} observes {expected}",
                    i + 1,
                    row.values.len(),
                    row.pattern
                )));
            }
        }
        Ok(Self { schema, rows })
    }

    /// Dataset without missingness: every row is pattern 1.
    pub fn complete(schema: VariableSchema, rows: Vec<Vec<f64>>) -> Result<(PatternRegistry, Self)> {
        let registry = PatternRegistry::new(schema.len(), vec![(0..schema.len()).collect()])?;
        let rows = rows
            .into_iter()
            .map(|values| ObservedRow { pattern: 1, values })
            .collect();
        let ds = Self::new(schema, &registry, rows)?;
        Ok((registry, ds))
    }

    pub fn schema(&self) -> &VariableSchema {
        &self.schema
    }

    pub fn rows(&self) -> &[ObservedRow] {
        &self.rows
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Row counts indexed by `code - 1`.
    pub fn pattern_counts(&self, registry: &PatternRegistry) -> Vec<usize> {
        let mut counts = vec![0; registry.len()];
        for row in &self.rows {
            counts[row.pattern - 1] += 1;
        }
        counts
    }

    /// `(row index, full value vector)` for every complete case.
    pub fn complete_rows(&self) -> impl Iterator<Item = (usize, &[f64])> {
        self.rows
            .iter()
            .enumerate()
            .filter(|(_, r)| r.pattern == 1)
            .map(|(i, r)| (i, r.values.as_slice()))
    }

    pub fn n_complete(&self) -> usize {
        self.rows.iter().filter(|r| r.pattern == 1).count()
    }

    /// Reconstruct the masked rectangular table.
    pub fn to_raw(&self, registry: &PatternRegistry) -> RawTable {
        let k = self.schema.len();
        let rows = self
            .rows
            .iter()
            .map(|row| {
                let mut cells = vec![None; k];
                for (pos, &var) in registry.observed(row.pattern).iter().enumerate() {
                    cells[var] = Some(row.values[pos]);
                }
                cells
            })
            .collect();
        RawTable {
            schema: self.schema.clone(),
            rows,
        }
    }
}

fn mask_value(mask: &[bool]) -> u128 {
    mask.iter().fold(0u128, |acc, &b| (acc << 1) | u128::from(b))
}

/// Discover the missingness patterns of a raw table and encode its rows.
///
/// The complete mask is code 1; the other masks are numbered by descending
/// row count, ties broken by the mask read as a binary number (first
/// variable most significant, larger value first).
pub fn infer_patterns(table: &RawTable) -> Result<(PatternRegistry, ObservedDataset)> {
    let k = table.schema.len();
    if table.rows.is_empty() {
        return Err(Error::Dataset("table has no rows".into()));
    }
    let mut counts: HashMap<Vec<bool>, usize> = HashMap::new();
    for row in &table.rows {
        let mask: Vec<bool> = row.iter().map(Option::is_some).collect();
        *counts.entry(mask).or_default() += 1;
    }
    let full = vec![true; k];
    if !counts.contains_key(&full) {
        return Err(Error::PositivityUnverifiable);
    }
    let mut incomplete: Vec<(Vec<bool>, usize)> =
        counts.into_iter().filter(|(m, _)| *m != full).collect();
    incomplete.sort_by(|(ma, ca), (mb, cb)| {
        cb.cmp(ca).then_with(|| mask_value(mb).cmp(&mask_value(ma)))
    });

    let to_observed = |mask: &[bool]| -> Vec<usize> {
        mask.iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(i, _)| i)
            .collect()
    };
    let mut sets = vec![(0..k).collect::<Vec<_>>()];
    let mut code_of: HashMap<Vec<bool>, usize> = HashMap::new();
    code_of.insert(full, 1);
    for (i, (mask, _)) in incomplete.iter().enumerate() {
        sets.push(to_observed(mask));
        code_of.insert(mask.clone(), i + 2);
    }
    let registry = PatternRegistry::new(k, sets)?;

    let rows = table
        .rows
        .iter()
        .map(|row| {
            let mask: Vec<bool> = row.iter().map(Option::is_some).collect();
            ObservedRow {
                pattern: code_of[&mask],
                values: row.iter().flatten().copied().collect(),
            }
        })
        .collect();
    let dataset = ObservedDataset::new(table.schema.clone(), &registry, rows)?;
    Ok((registry, dataset))
}
