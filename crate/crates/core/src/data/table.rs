use std::fmt;

use serde::Serialize;

use super::dataset::ObservedDataset;
use super::registry::PatternRegistry;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PatternTableRow {
    pub code: usize,
    pub mask: String,
    pub count: usize,
    pub percent: f64,
}

/// Per-pattern counts and shares of the total sample, in registry order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PatternTable {
    pub variables: Vec<String>,
    pub n: usize,
    pub rows: Vec<PatternTableRow>,
}

pub fn tabulate_patterns(registry: &PatternRegistry, dataset: &ObservedDataset) -> PatternTable {
    let counts = dataset.pattern_counts(registry);
    let n = dataset.n();
    let rows = registry
        .patterns()
        .iter()
        .map(|p| {
            let count = counts[p.code - 1];
            PatternTableRow {
                code: p.code,
                mask: registry.mask_string(p.code),
                count,
                percent: if n == 0 {
                    0.0
                } else {
                    100.0 * count as f64 / n as f64
                },
            }
        })
        .collect();
    PatternTable {
        variables: dataset.schema().names().to_vec(),
        n,
        rows,
    }
}

impl PatternTable {
    /// CSV export with columns `code,mask,count,percent`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("code,mask,count,percent\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{},{:.4}\n", r.code, r.mask, r.count, r.percent));
        }
        out
    }
}

impl fmt::Display for PatternTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:>7}", "pattern")?;
        for name in &self.variables {
            write!(f, " {:>w$}", name, w = name.len().max(3))?;
        }
        writeln!(f, " {:>9}", "% of data")?;
        for r in &self.rows {
            write!(f, "{:>7}", r.code)?;
            for (name, bit) in self.variables.iter().zip(r.mask.chars()) {
                write!(f, " {:>w$}", bit, w = name.len().max(3))?;
            }
            writeln!(f, " {:>9.1}", r.percent)?;
        }
        write!(f, "n = {}", self.n)
    }
}
