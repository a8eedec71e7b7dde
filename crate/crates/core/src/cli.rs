//! Command-line front end: `tabulate`, `fit` and `simulate`.
//!
//! Every command is a pure function of its input files, configuration and
//! seed. Commands writing to `--out-dir` also write `manifest.json` holding
//! the SHA-256 of the effective configuration, the seed and the crate
//! version.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::aipw::{one_step_aipw, MissingnessSource};
use crate::basis::{build_default_bases, prune_dependent, BasisSpec};
use crate::cbe::{gelman_rubin, point_estimate, sample_posterior, ChainConfig, PointKind, PriorSpec, RHAT_THRESHOLD};
use crate::data::{combine_sparse_patterns, infer_patterns, read_csv, tabulate_patterns, ObservedDataset, PatternRegistry};
use crate::error::{Error, Result};
use crate::estfn::LogisticScore;
use crate::ipw::{fit_complete_case, fit_full_mle, fit_ipw};
use crate::missingness::{default_init, fit_umle, MissingnessParams, UmleConfig, UmleReport};
use crate::report::{FitReport, VarianceKind};
use crate::simulation::{replicates_csv, run_replicates, summarize, SimConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "nmipw", version, about = "IPW and augmented IPW estimation for nonmonotone missing data")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Tabulate the missingness patterns of a CSV file.
    Tabulate(TabulateArgs),
    /// Fit the missingness model and the weighted estimators.
    Fit(FitArgs),
    /// Run the Monte Carlo study.
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Args)]
pub struct TabulateArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorArg {
    Cc,
    Mle,
    Ipw,
    Aipw,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MissingnessArg {
    Umle,
    Cbe,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VarianceArg {
    Corrected,
    CbeCorrected,
    Sandwich,
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Repeatable; replaces the configured estimator list.
    #[arg(long, value_enum)]
    pub estimator: Vec<EstimatorArg>,
    #[arg(long, value_enum)]
    pub missingness: Option<MissingnessArg>,
    #[arg(long, value_enum)]
    pub variance: Option<VarianceArg>,
    #[arg(long)]
    pub combine_sparse: Option<usize>,
    #[arg(long)]
    pub sigma_star: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub sigma_star: Option<f64>,
}

/// Configuration of `fit`, read from JSON and overridden by flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub outcome: String,
    pub covariates: Vec<String>,
    pub estimators: Vec<EstimatorArg>,
    pub missingness: MissingnessSource,
    /// Defaults to `corrected` for UMLE and `cbe-corrected` for CBE.
    pub variance: Option<VarianceKind>,
    pub combine_sparse: Option<usize>,
    pub seed: u64,
    pub umle: UmleConfig,
    pub chains: ChainConfig,
    pub prior_variance: f64,
    pub point: PointKind,
    pub basis: Option<BasisSpec>,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            outcome: String::new(),
            covariates: Vec::new(),
            estimators: vec![EstimatorArg::Ipw, EstimatorArg::Aipw],
            missingness: MissingnessSource::Umle,
            variance: None,
            combine_sparse: None,
            seed: 0,
            umle: UmleConfig::default(),
            chains: ChainConfig::full(),
            prior_variance: 1e3,
            point: PointKind::Mean,
            basis: None,
        }
    }
}

impl FitConfig {
    pub fn apply(&mut self, args: &FitArgs) -> Result<()> {
        if let Some(s) = args.seed {
            self.seed = s;
        }
        if !args.estimator.is_empty() {
            self.estimators = args.estimator.clone();
        }
        if let Some(m) = args.missingness {
            self.missingness = match m {
                MissingnessArg::Umle => MissingnessSource::Umle,
                MissingnessArg::Cbe => MissingnessSource::Cbe,
            };
        }
        if let Some(v) = args.variance {
            self.variance = Some(match v {
                VarianceArg::Corrected => VarianceKind::Corrected,
                VarianceArg::CbeCorrected => VarianceKind::CbeCorrected,
                VarianceArg::Sandwich => VarianceKind::Sandwich,
            });
        }
        if args.combine_sparse.is_some() {
            self.combine_sparse = args.combine_sparse;
        }
        if let Some(s) = args.sigma_star {
            self.chains.sigma_star = s;
        }
        self.chains.seed = self.seed;
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        if self.outcome.is_empty() || self.covariates.is_empty() {
            return Err(Error::Config("config must name `outcome` and `covariates`".into()));
        }
        if !(self.chains.sigma_star > 0.0 && self.chains.sigma_star < 1.0) {
            return Err(Error::Config("sigma_star must lie in (0, 1)".into()));
        }
        if let Some(v) = self.variance {
            if !matches!(v, VarianceKind::Corrected | VarianceKind::CbeCorrected | VarianceKind::Sandwich) {
                return Err(Error::Config(format!("{v:?} is not an IPW variance")));
            }
        }
        Ok(())
    }

    pub fn variance_kind(&self) -> VarianceKind {
        self.variance.unwrap_or(match self.missingness {
            MissingnessSource::Umle => VarianceKind::Corrected,
            MissingnessSource::Cbe => VarianceKind::CbeCorrected,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub config_sha256: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input_sha256: Option<String>,
    pub outputs: Vec<String>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

fn write_outputs(
    dir: &Path,
    command: &str,
    seed: u64,
    config_json: &str,
    input: Option<&Path>,
    files: &[(&str, String)],
) -> Result<()> {
    fs::create_dir_all(dir)?;
    for (name, body) in files {
        fs::write(dir.join(name), body)?;
    }
    let manifest = Manifest {
        command: command.to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed,
        config_sha256: sha256_hex(config_json.as_bytes()),
        input_sha256: match input {
            Some(p) => Some(sha256_hex(&fs::read(p)?)),
            None => None,
        },
        outputs: files.iter().map(|(n, _)| n.to_string()).collect(),
    };
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(())
}

/// Output of a command: text for stdout and the process exit code.
#[derive(Debug, Clone, PartialEq)]
pub struct CommandOutput {
    pub stdout: String,
    pub exit_code: i32,
}

pub fn cmd_tabulate(args: &TabulateArgs) -> Result<CommandOutput> {
    let raw = read_csv(&args.input)?;
    let (registry, ds) = infer_patterns(&raw)?;
    let table = tabulate_patterns(&registry, &ds);
    if let Some(dir) = &args.out_dir {
        write_outputs(dir, "tabulate", 0, "{}", Some(&args.input), &[("patterns.csv", table.to_csv())])?;
    }
    Ok(CommandOutput { stdout: table.to_string(), exit_code: EXIT_OK })
}

/// Missingness diagnostics attached to a `fit` result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CbeSummary {
    pub params: MissingnessParams,
    pub max_rhat: f64,
    pub share_rhat_below_threshold: f64,
    pub acceptance: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FitOutput {
    pub patterns: crate::data::PatternTable,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub umle: Option<UmleReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cbe: Option<CbeSummary>,
    pub fits: Vec<FitReport>,
    pub warnings: Vec<String>,
}

/// The full `fit` pipeline on an already loaded dataset.
pub fn run_fit(
    registry: &PatternRegistry,
    dataset: &ObservedDataset,
    config: &FitConfig,
) -> Result<(FitOutput, i32)> {
    let (registry, dataset) = match config.combine_sparse {
        Some(min) => combine_sparse_patterns(registry, dataset, min)?,
        None => (registry.clone(), dataset.clone()),
    };
    let schema = dataset.schema().clone();
    let ef = LogisticScore::from_names(&schema, &config.outcome, &config.covariates)?;
    let init = vec![0.0; ef.covariates.len() + 1];
    let mut fits = Vec::new();
    let mut warnings = Vec::new();
    let mut exit_code = EXIT_OK;

    if config.estimators.contains(&EstimatorArg::Cc) {
        fits.push(fit_complete_case(&dataset, &ef, &init)?);
    }
    if config.estimators.contains(&EstimatorArg::Mle) {
        fits.push(fit_full_mle(&dataset, &ef, &init)?);
    }

    let weighted = config.estimators.iter().any(|e| matches!(e, EstimatorArg::Ipw | EstimatorArg::Aipw));
    let mut umle = None;
    let mut cbe = None;
    if weighted {
        let params = match config.missingness {
            MissingnessSource::Umle => {
                let rep = fit_umle(&dataset, &registry, &default_init(&registry, &dataset), &config.umle)?;
                if !rep.converged {
                    exit_code = EXIT_NOT_CONVERGED;
                    warnings.push(format!(
                        "missingness model did not converge (max |score| {:.3e}, min fitted pi_1 {:.3e}); consider --missingness cbe",
                        rep.max_abs_score, rep.min_complete_case_probability
                    ));
                }
                let p = rep.params.clone();
                umle = Some(rep);
                p
            }
            MissingnessSource::Cbe => {
                let prior = PriorSpec::iid(registry_dim(&registry), 0.0, config.prior_variance)?;
                let draws = sample_posterior(&dataset, &registry, &prior, &config.chains)?;
                let params = point_estimate(&draws, config.point)?;
                let gr = gelman_rubin(&draws)?;
                let max_rhat = gr.rhat.iter().copied().fold(1.0, f64::max);
                if max_rhat > RHAT_THRESHOLD {
                    warnings.push(format!("Gelman-Rubin statistic {max_rhat:.3} exceeds {RHAT_THRESHOLD}"));
                }
                cbe = Some(CbeSummary {
                    params: params.clone(),
                    max_rhat,
                    share_rhat_below_threshold: gr.share_below(RHAT_THRESHOLD),
                    acceptance: draws.chains.iter().map(|c| c.acceptance.clone()).collect(),
                });
                params
            }
        };
        let ipw = fit_ipw(&dataset, &registry, &params, &ef, &init, config.variance_kind())?;
        if config.estimators.contains(&EstimatorArg::Aipw) {
            let mut bases = match &config.basis {
                Some(spec) => spec.clone().into_bases(&registry)?,
                None => build_default_bases(&schema, &registry, &ef),
            };
            warnings.extend(prune_dependent(&mut bases, &schema, &registry, &dataset, &ef));
            let aipw = one_step_aipw(&dataset, &registry, &params, &ef, &bases, &ipw.beta, config.missingness)?;
            if config.estimators.contains(&EstimatorArg::Ipw) {
                fits.push(ipw);
            }
            fits.push(aipw);
        } else {
            fits.push(ipw);
        }
    }
    let out = FitOutput {
        patterns: tabulate_patterns(&registry, &dataset),
        umle,
        cbe,
        fits,
        warnings,
    };
    Ok((out, exit_code))
}

fn registry_dim(registry: &PatternRegistry) -> usize {
    registry.incomplete_codes().map(|c| registry.observed(c).len() + 1).sum()
}

pub fn cmd_fit(args: &FitArgs) -> Result<CommandOutput> {
    let mut config: FitConfig = match &args.config {
        Some(p) => read_json(p)?,
        None => FitConfig::default(),
    };
    config.apply(args)?;
    let raw = read_csv(&args.input)?;
    let (registry, dataset) = infer_patterns(&raw)?;
    let (out, exit_code) = run_fit(&registry, &dataset, &config)?;
    let json = serde_json::to_string_pretty(&out)? + "\n";
    let mut stdout = json.clone();
    for f in &out.fits {
        if let Some(t) = f.odds_ratio_table() {
            stdout.push_str(&format!("\n{} odds ratios\n{t}", f.estimator));
        }
    }
    if let Some(dir) = &args.out_dir {
        let config_json = serde_json::to_string(&config)?;
        write_outputs(dir, "fit", config.seed, &config_json, Some(&args.input), &[("fit.json", json)])?;
    }
    Ok(CommandOutput { stdout, exit_code })
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<CommandOutput> {
    let mut config: SimConfig = match &args.config {
        Some(p) => read_json(p)?,
        None => SimConfig::default(),
    };
    if let Some(s) = args.seed {
        config.seed = s;
    }
    if let Some(s) = args.sigma_star {
        config.chains.sigma_star = s;
    }
    let results = run_replicates(&config)?;
    let table = summarize(&results, &config.beta, config.n);
    let config_json = serde_json::to_string(&config)?;
    write_outputs(
        &args.out_dir,
        "simulate",
        config.seed,
        &config_json,
        None,
        &[
            ("summary.csv", table.to_csv()),
            ("summary.txt", table.to_string()),
            ("replicates.csv", replicates_csv(&results)),
            ("config.json", serde_json::to_string_pretty(&config)? + "\n"),
        ],
    )?;
    Ok(CommandOutput { stdout: table.to_string(), exit_code: EXIT_OK })
}

pub fn run(cli: &Cli) -> Result<CommandOutput> {
    match &cli.command {
        Command::Tabulate(a) => cmd_tabulate(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Simulate(a) => cmd_simulate(a),
    }
}

/// Parse `argv`, run, print, and return the exit code.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(out) => {
            print!("{}", out.stdout);
            out.exit_code
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}
