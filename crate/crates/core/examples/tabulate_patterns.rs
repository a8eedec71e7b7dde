//! Discover missingness patterns in a raw table, tabulate them, then merge
//! the two sparse patterns into one that keeps only their shared variables.

use nmipw::data::{combine_sparse_patterns, infer_patterns, tabulate_patterns};
use nmipw::rng::substream;
use nmipw::simulation::cohort_fixture;

fn main() -> nmipw::Result<()> {
    let table = cohort_fixture(&mut substream(11, &[0]))?;
    let (registry, dataset) = infer_patterns(&table)?;
    println!("{}", tabulate_patterns(&registry, &dataset));

    // patterns with fewer than 100 rows get pooled
    let (merged_reg, merged) = combine_sparse_patterns(&registry, &dataset, 100)?;
    println!("after combining patterns below 100 rows:");
    println!("{}", tabulate_patterns(&merged_reg, &merged));
    Ok(())
}
