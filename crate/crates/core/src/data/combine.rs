use super::dataset::{ObservedDataset, ObservedRow};
use super::registry::PatternRegistry;
use crate::error::Result;

/// Merge every incomplete pattern with fewer than `min_count` rows into one
/// pattern observing the intersection of their observed sets.
///
/// Surviving patterns keep their relative order and are renumbered
/// contiguously; the merged pattern is appended last. Rows of merged patterns
/// keep only the intersection variables. Pattern 1 is never merged. Patterns
/// without rows are dropped when a merge happens. With fewer than two
/// non-empty sparse patterns nothing changes.
pub fn combine_sparse_patterns(
    registry: &PatternRegistry,
    dataset: &ObservedDataset,
    min_count: usize,
) -> Result<(PatternRegistry, ObservedDataset)> {
    let counts = dataset.pattern_counts(registry);
    let sparse: Vec<usize> = registry
        .incomplete_codes()
        .filter(|&c| counts[c - 1] > 0 && counts[c - 1] < min_count)
        .collect();
    if sparse.len() < 2 {
        return Ok((registry.clone(), dataset.clone()));
    }

    let mut intersection: Vec<usize> = registry.observed(sparse[0]).to_vec();
    for &code in &sparse[1..] {
        let obs = registry.observed(code);
        intersection.retain(|v| obs.contains(v));
    }

    let mut new_code = vec![0usize; registry.len() + 1];
    let mut sets = Vec::new();
    for p in registry.patterns() {
        if p.code == 1 || (counts[p.code - 1] >= min_count && !sparse.contains(&p.code)) {
            sets.push(p.observed.clone());
            new_code[p.code] = sets.len();
        }
    }
    sets.push(intersection.clone());
    let merged_code = sets.len();
    for &code in &sparse {
        new_code[code] = merged_code;
    }
    let new_registry = PatternRegistry::new(registry.n_vars(), sets)?;

    let rows = dataset
        .rows()
        .iter()
        .map(|row| {
            let code = new_code[row.pattern];
            if code == merged_code {
                let values = intersection
                    .iter()
                    .map(|&v| row.get(v, registry).expect("intersection variable observed"))
                    .collect();
                ObservedRow { pattern: code, values }
            } else {
                ObservedRow {
                    pattern: code,
                    values: row.values.clone(),
                }
            }
        })
        .collect();
    let new_dataset = ObservedDataset::new(dataset.schema().clone(), &new_registry, rows)?;
    Ok((new_registry, new_dataset))
}
