use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VariableKind {
    Binary,
    Continuous,
}

/// Ordered, uniquely named variables making up one full-data record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableSchema {
    names: Vec<String>,
    kinds: Vec<VariableKind>,
}

impl VariableSchema {
    pub fn new(names: Vec<String>, kinds: Vec<VariableKind>) -> Result<Self> {
        if names.is_empty() {
            return Err(Error::Schema("at least one variable is required".into()));
        }
        if names.len() != kinds.len() {
            return Err(Error::Schema(format!(
                "{} names but {} kinds",
                names.len(),
                kinds.len()
            )));
        }
        let mut seen = HashSet::new();
        for name in &names {
            if !seen.insert(name.as_str()) {
                return Err(Error::Schema(format!("duplicate variable name `{name}`")));
            }
        }
        Ok(Self { names, kinds })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, var: usize) -> &str {
        &self.names[var]
    }

    pub fn kind(&self, var: usize) -> VariableKind {
        self.kinds[var]
    }

    pub fn kinds(&self) -> &[VariableKind] {
        &self.kinds
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Index of `name`, or a configuration error naming the missing column.
    pub fn require(&self, name: &str) -> Result<usize> {
        self.index_of(name)
            .ok_or_else(|| Error::Config(format!("unknown variable `{name}`")))
    }
}
