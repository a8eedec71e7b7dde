use std::collections::BTreeMap;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::data::{PatternRegistry, VariableSchema};
use crate::error::{Error, Result};

/// Stacked coefficients `(gamma_2, ..., gamma_M)`, one block per incomplete
/// pattern with the intercept first.
#[derive(Debug, Clone, PartialEq)]
pub struct MissingnessParams {
    blocks: Vec<Vec<f64>>,
}

impl MissingnessParams {
    pub fn new(registry: &PatternRegistry, blocks: Vec<Vec<f64>>) -> Result<Self> {
        let expected = registry.len() - 1;
        if blocks.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                got: blocks.len(),
            });
        }
        for (code, block) in registry.incomplete_codes().zip(&blocks) {
            let want = registry.observed(code).len() + 1;
            if block.len() != want {
                return Err(Error::DimensionMismatch {
                    expected: want,
                    got: block.len(),
                });
            }
            if block.iter().any(|v| !v.is_finite()) {
                return Err(Error::Config(format!(
                    "non-finite coefficient in block for pattern {code}"
                )));
            }
        }
        Ok(Self { blocks })
    }

    pub fn zeros(registry: &PatternRegistry) -> Self {
        Self {
            blocks: registry
                .incomplete_codes()
                .map(|c| vec![0.0; registry.observed(c).len() + 1])
                .collect(),
        }
    }

    /// Rebuild from a flat vector laid out block after block.
    pub fn from_flat(layout: &[usize], flat: &[f64]) -> Self {
        let mut blocks = Vec::with_capacity(layout.len());
        let mut offset = 0;
        for &len in layout {
            blocks.push(flat[offset..offset + len].to_vec());
            offset += len;
        }
        Self { blocks }
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.blocks.iter().flatten().copied().collect()
    }

    pub fn layout(&self) -> Vec<usize> {
        self.blocks.iter().map(Vec::len).collect()
    }

    pub fn dim(&self) -> usize {
        self.blocks.iter().map(Vec::len).sum()
    }

    pub fn n_blocks(&self) -> usize {
        self.blocks.len()
    }

    /// Block for pattern `code >= 2`.
    pub fn block(&self, code: usize) -> &[f64] {
        &self.blocks[code - 2]
    }

    pub fn block_mut(&mut self, code: usize) -> &mut [f64] {
        &mut self.blocks[code - 2]
    }

    pub(crate) fn block_at(&self, index: usize) -> &[f64] {
        &self.blocks[index]
    }

    pub fn blocks(&self) -> &[Vec<f64>] {
        &self.blocks
    }

    pub fn is_finite(&self) -> bool {
        self.blocks.iter().flatten().all(|v| v.is_finite())
    }

    /// Labels such as `R2:(Intercept)`, `R2:Y` in flat order.
    pub fn coefficient_names(registry: &PatternRegistry, schema: &VariableSchema) -> Vec<String> {
        let mut names = Vec::new();
        for code in registry.incomplete_codes() {
            names.push(format!("R{code}:(Intercept)"));
            for &v in registry.observed(code) {
                names.push(format!("R{code}:{}", schema.name(v)));
            }
        }
        names
    }
}

#[derive(Serialize, Deserialize)]
struct ParamsJson {
    gamma: BTreeMap<String, Vec<f64>>,
}

impl Serialize for MissingnessParams {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let gamma = self
            .blocks
            .iter()
            .enumerate()
            .map(|(i, b)| ((i + 2).to_string(), b.clone()))
            .collect();
        ParamsJson { gamma }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for MissingnessParams {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let raw = ParamsJson::deserialize(d)?;
        let mut keyed = Vec::with_capacity(raw.gamma.len());
        for (k, v) in raw.gamma {
            let code: usize = k
                .parse()
                .map_err(|_| D::Error::custom(format!("pattern key `{k}` is not an integer")))?;
            keyed.push((code, v));
        }
        keyed.sort_by_key(|(c, _)| *c);
        for (i, (c, _)) in keyed.iter().enumerate() {
            if *c != i + 2 {
                return Err(D::Error::custom("pattern keys must be contiguous from 2"));
            }
        }
        Ok(Self {
            blocks: keyed.into_iter().map(|(_, v)| v).collect(),
        })
    }
}
