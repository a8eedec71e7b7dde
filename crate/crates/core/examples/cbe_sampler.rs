//! Constrained Bayesian estimation of the missingness model: adaptive
//! Metropolis-within-Gibbs chains on the posterior restricted to parameters
//! that keep every complete case's probability above a margin.
//!
//! ```text
//! cargo run --release --example cbe_sampler -- [full]
//! ```

use nmipw::cbe::{
    constraint_violations, gelman_rubin, point_estimate, sample_posterior, ChainConfig, PointKind, PriorSpec,
    RHAT_THRESHOLD,
};
use nmipw::missingness::{MissingnessModel, MissingnessParams};
use nmipw::rng::substream;
use nmipw::simulation::{generate_full_data, generate_missingness, registry, schema, SimConfig};

fn main() -> nmipw::Result<()> {
    let long_run = std::env::args().nth(1).as_deref() == Some("full");
    let config = SimConfig { n: 1000, ..SimConfig::default() };
    let truth = config.gamma_params()?;
    let mut rng = substream(config.seed, &[0]);
    let full = generate_full_data(&config, &mut rng)?;
    let data = generate_missingness(&full, &truth, &mut rng)?;
    let reg = registry();

    let chains = ChainConfig { seed: 5, ..if long_run { ChainConfig::full() } else { ChainConfig::reduced() } };
    let prior = PriorSpec::iid(truth.dim(), 0.0, 1e3)?;
    let draws = sample_posterior(&data, &reg, &prior, &chains)?;

    let model = MissingnessModel::new(&reg, &data);
    let violations = constraint_violations(&draws, &model, chains.sigma_star);
    let gr = gelman_rubin(&draws)?;
    let mean = point_estimate(&draws, PointKind::Mean)?;
    let mode = point_estimate(&draws, PointKind::Mode)?;

    println!(
        "{} chains x {} retained draws; constraint violations: {violations}",
        draws.chains.len(),
        chains.n_retained()
    );
    println!("share of R-hat below {RHAT_THRESHOLD}: {:.2}", gr.share_below(RHAT_THRESHOLD));

    let names = MissingnessParams::coefficient_names(&reg, &schema());
    println!("{:<16} {:>8} {:>8} {:>8} {:>7}", "coefficient", "truth", "mean", "mode", "R-hat");
    for (j, name) in names.iter().enumerate() {
        println!(
            "{name:<16} {:>8.3} {:>8.3} {:>8.3} {:>7.3}",
            truth.to_flat()[j],
            mean.to_flat()[j],
            mode.to_flat()[j],
            gr.rhat[j]
        );
    }
    for (c, chain) in draws.chains.iter().enumerate() {
        let acc: f64 = chain.acceptance.iter().sum::<f64>() / chain.acceptance.len() as f64;
        println!("chain {c}: mean acceptance {acc:.2}");
    }

    let path = std::env::temp_dir().join("nmipw_trace.csv");
    std::fs::write(&path, draws.trace_csv(&names))?;
    println!("trace written to {}", path.display());
    Ok(())
}
