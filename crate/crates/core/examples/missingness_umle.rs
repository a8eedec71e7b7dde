//! Fit the pattern-specific logistic missingness model by unconstrained
//! maximum likelihood and compare it with the generating coefficients.

use nmipw::missingness::{default_init, fit_umle, MissingnessModel, MissingnessParams, UmleConfig};
use nmipw::rng::substream;
use nmipw::simulation::{generate_full_data, generate_missingness, registry, schema, SimConfig};

fn main() -> nmipw::Result<()> {
    let config = SimConfig { n: 2000, ..SimConfig::default() };
    let truth = config.gamma_params()?;
    let mut rng = substream(config.seed, &[0]);
    let full = generate_full_data(&config, &mut rng)?;
    let data = generate_missingness(&full, &truth, &mut rng)?;
    let reg = registry();

    let fit = fit_umle(&data, &reg, &default_init(&reg, &data), &UmleConfig::default())?;
    println!(
        "converged: {} via {:?} after {} iterations, log-lik {:.4}, max |score| {:.2e}",
        fit.converged, fit.method, fit.iterations, fit.log_likelihood, fit.max_abs_score
    );

    let names = MissingnessParams::coefficient_names(&reg, &schema());
    println!("{:<16} {:>9} {:>9}", "coefficient", "truth", "umle");
    for ((name, t), e) in names.iter().zip(truth.to_flat()).zip(fit.params.to_flat()) {
        println!("{name:<16} {t:>9.3} {e:>9.3}");
    }

    let model = MissingnessModel::new(&reg, &data);
    println!(
        "smallest fitted complete-case probability: {:.4}",
        model.min_complete_case_probability(&fit.params)
    );
    println!("{}", serde_json::to_string_pretty(&fit.params)?);
    Ok(())
}
