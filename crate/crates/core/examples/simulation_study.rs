//! Monte Carlo study of the estimators.
//!
//! ```text
//! cargo run --release --example simulation_study -- [replicates] [n] [umle|cbe|all] [seed]
//! ```

use std::time::Instant;

use nmipw::simulation::{run_replicates, summarize, EstimatorKind, SimConfig};

fn main() -> nmipw::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let replicates = args.first().and_then(|s| s.parse().ok()).unwrap_or(100);
    let n = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(1000);
    let path = args.get(2).map(String::as_str).unwrap_or("umle");

    let mut estimators = vec![EstimatorKind::Cc, EstimatorKind::FullMle];
    if path != "cbe" {
        estimators.extend([EstimatorKind::UmleIpw, EstimatorKind::UmleAipw]);
    }
    if path != "umle" {
        estimators.extend([EstimatorKind::CbeIpw, EstimatorKind::CbeAipw]);
    }
    let mut config = SimConfig { n, replicates, estimators, ..SimConfig::default() };
    if let Some(seed) = args.get(3).and_then(|s| s.parse().ok()) {
        config.seed = seed;
    }

    let t0 = Instant::now();
    let results = run_replicates(&config)?;
    let table = summarize(&results, &config.beta, config.n);
    println!("{table}");

    if path != "cbe" {
        let converged = results.iter().filter(|r| r.umle_converged == Some(true)).count();
        let min_pi1 = results.iter().filter_map(|r| r.umle_min_pi1).fold(f64::INFINITY, f64::min);
        println!("UMLE converged in {converged}/{replicates} replicates; smallest fitted pi_1 {min_pi1:.4}");
    }
    if path != "umle" {
        let violations: usize = results.iter().filter_map(|r| r.cbe_violations).sum();
        let max_rhat = results.iter().filter_map(|r| r.cbe_max_rhat).fold(1.0, f64::max);
        println!("CBE constraint violations {violations}; largest R-hat {max_rhat:.3}");
    }
    println!("elapsed {:.1}s", t0.elapsed().as_secs_f64());
    Ok(())
}
