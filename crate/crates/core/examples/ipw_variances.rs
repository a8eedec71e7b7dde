//! Inverse-probability-weighted logistic regression with the three variance
//! estimators, next to the complete-case fit.

use nmipw::ipw::{fit_complete_case, fit_ipw, IpwComponents};
use nmipw::linalg::min_eigenvalue;
use nmipw::missingness::{default_init, fit_umle, UmleConfig};
use nmipw::report::VarianceKind;
use nmipw::rng::substream;
use nmipw::simulation::{generate_full_data, generate_missingness, logistic_ef, registry, SimConfig};

fn main() -> nmipw::Result<()> {
    let config = SimConfig { n: 2000, ..SimConfig::default() };
    let mut rng = substream(config.seed, &[1]);
    let full = generate_full_data(&config, &mut rng)?;
    let data = generate_missingness(&full, &config.gamma_params()?, &mut rng)?;
    let reg = registry();
    let ef = logistic_ef();
    let init = vec![0.0; 4];

    let umle = fit_umle(&data, &reg, &default_init(&reg, &data), &UmleConfig::default())?;
    let cc = fit_complete_case(&data, &ef, &init)?;
    let ipw = fit_ipw(&data, &reg, &umle.params, &ef, &init, VarianceKind::Corrected)?;

    let parts = IpwComponents::new(&data, &reg, &umle.params, &ef, &ipw.beta)?;
    let sandwich = parts.sandwich()?;
    let (corrected, _) = parts.corrected()?;
    let (cbe_corrected, _) = parts.cbe_corrected()?;

    println!("{:<12} {:>7} {:>7} {:>9} {:>9} {:>9} {:>9}", "", "truth", "CC", "IPW", "se(sand)", "se(corr)", "se(cbe)");
    for (k, name) in ipw.names.iter().enumerate() {
        println!(
            "{name:<12} {:>7.3} {:>7.3} {:>9.3} {:>9.4} {:>9.4} {:>9.4}",
            config.beta[k],
            cc.beta[k],
            ipw.beta[k],
            sandwich[(k, k)].sqrt(),
            corrected[(k, k)].sqrt(),
            cbe_corrected[(k, k)].sqrt()
        );
    }
    // accounting for the estimated weights can only shrink the variance
    println!(
        "smallest eigenvalue of sandwich - corrected: {:.3e}",
        min_eigenvalue(&(&sandwich - &corrected))
    );
    Ok(())
}
