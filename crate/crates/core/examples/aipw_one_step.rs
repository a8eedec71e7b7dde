//! One-step augmented IPW: start from the IPW fit and take a single Newton
//! step on the optimal augmented moment built from the default bases.

use nmipw::aipw::{one_step_aipw, MissingnessSource};
use nmipw::basis::{build_default_bases, prune_dependent};
use nmipw::ipw::fit_ipw;
use nmipw::missingness::{default_init, fit_umle, UmleConfig};
use nmipw::report::VarianceKind;
use nmipw::rng::substream;
use nmipw::simulation::{generate_full_data, generate_missingness, logistic_ef, registry, schema, SimConfig};

fn main() -> nmipw::Result<()> {
    let config = SimConfig { n: 2000, ..SimConfig::default() };
    let mut rng = substream(config.seed, &[2]);
    let full = generate_full_data(&config, &mut rng)?;
    let data = generate_missingness(&full, &config.gamma_params()?, &mut rng)?;
    let (reg, sch, ef) = (registry(), schema(), logistic_ef());

    let umle = fit_umle(&data, &reg, &default_init(&reg, &data), &UmleConfig::default())?;
    let ipw = fit_ipw(&data, &reg, &umle.params, &ef, &[0.0; 4], VarianceKind::Corrected)?;

    let mut bases = build_default_bases(&sch, &reg, &ef);
    for w in prune_dependent(&mut bases, &sch, &reg, &data, &ef) {
        println!("note: {w}");
    }
    println!(
        "full-data basis: {} terms, augmentation columns: {}",
        bases.full.dim(&ef),
        bases.augmentation.dim()
    );

    let aipw = one_step_aipw(&data, &reg, &umle.params, &ef, &bases, &ipw.beta, MissingnessSource::Umle)?;
    println!("{:<12} {:>7} {:>8} {:>8} {:>8} {:>8} {:>6}", "", "truth", "IPW", "se", "AIPW", "se", "ARE");
    for k in 0..4 {
        println!(
            "{:<12} {:>7.3} {:>8.3} {:>8.4} {:>8.3} {:>8.4} {:>6.2}",
            ipw.names[k],
            config.beta[k],
            ipw.beta[k],
            ipw.se[k],
            aipw.beta[k],
            aipw.se[k],
            (aipw.se[k] / ipw.se[k]).powi(2)
        );
    }
    for w in &aipw.warnings {
        println!("warning: {w}");
    }
    Ok(())
}
