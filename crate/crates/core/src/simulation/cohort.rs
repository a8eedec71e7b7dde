//! Synthetic cohort with the eight-pattern layout of a birth-outcome study:
//! four binary variables, the last one always observed.
//!
//! | code | preterm | hypertension | low_cd4 | cont_haart | share |
//! |------|---------|--------------|---------|------------|-------|
//! | 1    | 1       | 1            | 1       | 1          | 43.7  |
//! | 2    | 0       | 1            | 1       | 1          | 2.0   |
//! | 3    | 1       | 0            | 1       | 1          | 0.7   |
//! | 4    | 0       | 0            | 1       | 1          | 0.2   |
//! | 5    | 1       | 1            | 0       | 1          | 44.9  |
//! | 6    | 0       | 1            | 0       | 1          | 2.9   |
//! | 7    | 1       | 0            | 0       | 1          | 4.0   |
//! | 8    | 0       | 0            | 0       | 1          | 1.6   |

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{ObservedDataset, ObservedRow, PatternRegistry, RawTable, VariableKind, VariableSchema};
use crate::error::{Error, Result};
use crate::estfn::LogisticScore;
use crate::missingness::{expit, logit, MissingnessParams};
use crate::rng::StreamRng;

pub const COHORT_VARIABLES: [&str; 4] = ["preterm", "hypertension", "low_cd4", "cont_haart"];

/// Row counts per pattern at `n = 9711`.
pub const COHORT_COUNTS: [usize; 8] = [4243, 194, 75, 15, 4359, 282, 388, 155];

pub fn cohort_schema() -> VariableSchema {
    VariableSchema::new(
        COHORT_VARIABLES.iter().map(|s| s.to_string()).collect(),
        vec![VariableKind::Binary; 4],
    )
    .expect("static schema")
}

pub fn cohort_registry() -> PatternRegistry {
    PatternRegistry::new(
        4,
        vec![
            vec![0, 1, 2, 3],
            vec![1, 2, 3],
            vec![0, 2, 3],
            vec![2, 3],
            vec![0, 1, 3],
            vec![1, 3],
            vec![0, 3],
            vec![3],
        ],
    )
    .expect("static registry")
}

/// Logistic model of `preterm` on the three predictors.
pub fn cohort_ef() -> LogisticScore {
    let covariates: Vec<String> = COHORT_VARIABLES[1..].iter().map(|s| s.to_string()).collect();
    LogisticScore::from_names(&cohort_schema(), COHORT_VARIABLES[0], &covariates).expect("static names")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortConfig {
    pub n: usize,
    /// Outcome coefficients on `(1, hypertension, low_cd4, cont_haart)`.
    pub beta: Vec<f64>,
    pub p_hypertension: f64,
    pub p_cont_haart: f64,
    /// `P(low_cd4 = 1 | cont_haart = 0)` and `P(low_cd4 = 1 | cont_haart = 1)`.
    pub p_low_cd4: [f64; 2],
    /// Slope given to every observed variable in each pattern's model.
    pub missingness_slope: f64,
}

impl Default for CohortConfig {
    fn default() -> Self {
        Self {
            n: 9711,
            beta: vec![-1.6, 1.4f64.ln(), 1.1f64.ln(), 1.45f64.ln()],
            p_hypertension: 0.15,
            p_cont_haart: 0.45,
            p_low_cd4: [0.35, 0.25],
            missingness_slope: 0.2,
        }
    }
}

impl CohortConfig {
    /// Pattern models whose implied shares are close to the target table.
    /// Intercepts are the target logits shifted so a row with every observed
    /// variable at its mean sits at the target share.
    pub fn gamma_params(&self) -> Result<MissingnessParams> {
        let reg = cohort_registry();
        let total: usize = COHORT_COUNTS.iter().sum();
        let means = self.means();
        let blocks = reg
            .incomplete_codes()
            .map(|code| {
                let share = COHORT_COUNTS[code - 1] as f64 / total as f64;
                let obs = reg.observed(code);
                let shift: f64 = obs.iter().map(|&v| self.missingness_slope * means[v]).sum();
                let mut g = vec![logit(share) - shift];
                g.extend(obs.iter().map(|_| self.missingness_slope));
                g
            })
            .collect();
        MissingnessParams::new(&reg, blocks)
    }

    fn means(&self) -> [f64; 4] {
        let cd4 = self.p_cont_haart * self.p_low_cd4[1] + (1.0 - self.p_cont_haart) * self.p_low_cd4[0];
        let b = &self.beta;
        // marginal outcome mean over the 8 covariate cells
        let mut y = 0.0;
        for h in [0.0, 1.0] {
            for c in [0.0, 1.0] {
                for l in [0.0, 1.0] {
                    let ph = if h == 1.0 { self.p_hypertension } else { 1.0 - self.p_hypertension };
                    let pc = if c == 1.0 { self.p_cont_haart } else { 1.0 - self.p_cont_haart };
                    let q = self.p_low_cd4[c as usize];
                    let pl = if l == 1.0 { q } else { 1.0 - q };
                    y += ph * pc * pl * expit(b[0] + b[1] * h + b[2] * l + b[3] * c);
                }
            }
        }
        [y, self.p_hypertension, cd4, self.p_cont_haart]
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Config("n must be positive".into()));
        }
        if self.beta.len() != 4 {
            return Err(Error::Config(format!("beta needs 4 entries, got {}", self.beta.len())));
        }
        let probs = [self.p_hypertension, self.p_cont_haart, self.p_low_cd4[0], self.p_low_cd4[1]];
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Config("marginal probabilities must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

fn bernoulli(rng: &mut StreamRng, p: f64) -> f64 {
    if rng.random::<f64>() < p {
        1.0
    } else {
        0.0
    }
}

/// `n` complete rows `(preterm, hypertension, low_cd4, cont_haart)`.
pub fn generate_cohort_full(config: &CohortConfig, rng: &mut StreamRng) -> Result<Vec<Vec<f64>>> {
    config.validate()?;
    let b = &config.beta;
    Ok((0..config.n)
        .map(|_| {
            let h = bernoulli(rng, config.p_hypertension);
            let c = bernoulli(rng, config.p_cont_haart);
            let l = bernoulli(rng, config.p_low_cd4[c as usize]);
            let y = bernoulli(rng, expit(b[0] + b[1] * h + b[2] * l + b[3] * c));
            vec![y, h, l, c]
        })
        .collect())
}

/// MAR cohort: full data, then one pattern per row from the pattern models.
pub fn generate_cohort(config: &CohortConfig, rng: &mut StreamRng) -> Result<ObservedDataset> {
    let full = generate_cohort_full(config, rng)?;
    let reg = cohort_registry();
    let gamma = config.gamma_params()?;
    let mut rows = Vec::with_capacity(full.len());
    for (i, l) in full.iter().enumerate() {
        let probs: Vec<f64> = reg
            .incomplete_codes()
            .map(|code| {
                let g = gamma.block(code);
                expit(g[0] + reg.observed(code).iter().zip(&g[1..]).map(|(&v, c)| c * l[v]).sum::<f64>())
            })
            .collect();
        let pi1 = 1.0 - probs.iter().sum::<f64>();
        if !(pi1 > 0.0) {
            return Err(Error::InvalidWeights { row: i, value: pi1 });
        }
        let u: f64 = rng.random();
        let mut code = 1;
        let mut acc = 0.0;
        for (b, p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                code = b + 2;
                break;
            }
        }
        let values = reg.observed(code).iter().map(|&v| l[v]).collect();
        rows.push(ObservedRow { pattern: code, values });
    }
    ObservedDataset::new(cohort_schema(), &reg, rows)
}

/// Raw table with exactly [`COHORT_COUNTS`] rows per pattern, in shuffled
/// order. Missingness is assigned by count, not by a model, so this is a
/// layout fixture rather than MAR data.
pub fn cohort_fixture(rng: &mut StreamRng) -> Result<RawTable> {
    let reg = cohort_registry();
    let config = CohortConfig {
        n: COHORT_COUNTS.iter().sum(),
        ..CohortConfig::default()
    };
    let full = generate_cohort_full(&config, rng)?;
    let mut codes: Vec<usize> = COHORT_COUNTS
        .iter()
        .enumerate()
        .flat_map(|(i, &c)| std::iter::repeat_n(i + 1, c))
        .collect();
    codes.shuffle(rng);
    let rows = full
        .iter()
        .zip(&codes)
        .map(|(l, &code)| {
            let mask = reg.mask(code);
            l.iter().zip(mask).map(|(&x, seen)| seen.then_some(x)).collect()
        })
        .collect();
    RawTable::new(cohort_schema(), rows)
}
