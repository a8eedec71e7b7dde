//! End to end on a CSV file: write a synthetic cohort with `NA` for missing
//! cells, read it back, and run complete-case, IPW and AIPW fits, once as is
//! and once with the sparse patterns pooled.

use nmipw::cli::{run_fit, EstimatorArg, FitConfig};
use nmipw::data::{infer_patterns, read_csv, write_csv};
use nmipw::rng::substream;
use nmipw::simulation::{cohort_registry, generate_cohort, CohortConfig};

fn main() -> nmipw::Result<()> {
    let data = generate_cohort(&CohortConfig::default(), &mut substream(2024, &[0]))?;
    let path = std::env::temp_dir().join("nmipw_cohort.csv");
    write_csv(&data.to_raw(&cohort_registry()), std::fs::File::create(&path)?)?;
    println!("wrote {} rows to {}", data.n(), path.display());

    let table = read_csv(&path)?;
    let (registry, dataset) = infer_patterns(&table)?;

    let mut config = FitConfig {
        outcome: "preterm".into(),
        covariates: vec!["hypertension".into(), "low_cd4".into(), "cont_haart".into()],
        estimators: vec![EstimatorArg::Cc, EstimatorArg::Ipw, EstimatorArg::Aipw],
        ..FitConfig::default()
    };
    for combine in [None, Some(100)] {
        config.combine_sparse = combine;
        let (out, code) = run_fit(&registry, &dataset, &config)?;
        match combine {
            None => println!("\n{}", out.patterns),
            Some(m) => println!("\npooling patterns under {m} rows ({} patterns left)", out.patterns.rows.len()),
        }
        for fit in &out.fits {
            println!("{}", fit.estimator);
            if let Some(t) = fit.odds_ratio_table() {
                println!("{t}");
            }
        }
        for w in &out.warnings {
            println!("warning: {w}");
        }
        println!("exit code {code}");
    }
    Ok(())
}
