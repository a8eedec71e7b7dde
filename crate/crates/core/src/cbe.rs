//! Constrained Bayesian estimation of the missingness model.
//!
//! The posterior is the unconstrained likelihood times independent normal
//! priors, truncated to coefficients under which every complete case keeps
//! `sum_m pi_m < 1 - sigma_star`. Sampling is random-walk Metropolis on one
//! coordinate at a time inside a fixed-order Gibbs sweep; each coordinate's
//! proposal scale adapts toward 44% acceptance during the first `n_adapt`
//! sweeps and is frozen afterwards. Proposals leaving the constraint set have
//! zero posterior density and are rejected.

use std::fmt::Write as _;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{ObservedDataset, PatternRegistry};
use crate::error::{Error, Result};
use crate::missingness::{default_init, expit, ln_expit, MissingnessModel, MissingnessParams};
use crate::rng::{substream, StreamRng};

pub const DEFAULT_SIGMA_STAR: f64 = 1e-8;
pub const TARGET_ACCEPTANCE: f64 = 0.44;
/// Gelman-Rubin values above this are flagged.
pub const RHAT_THRESHOLD: f64 = 1.1;

/// Independent normal priors, one per coefficient in flat order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
}

impl PriorSpec {
    pub fn iid(dim: usize, mean: f64, variance: f64) -> Result<Self> {
        Self::new(vec![mean; dim], vec![variance; dim])
    }

    /// `N(0, 10^3)` on every coefficient.
    pub fn diffuse(dim: usize) -> Self {
        Self { means: vec![0.0; dim], variances: vec![1e3; dim] }
    }

    pub fn new(means: Vec<f64>, variances: Vec<f64>) -> Result<Self> {
        if means.len() != variances.len() {
            return Err(Error::DimensionMismatch { expected: means.len(), got: variances.len() });
        }
        if variances.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::Config("prior variances must be positive and finite".into()));
        }
        Ok(Self { means, variances })
    }

    pub fn dim(&self) -> usize {
        self.means.len()
    }

    fn coord(&self, j: usize, x: f64) -> f64 {
        let v = self.variances[j];
        let d = x - self.means[j];
        -0.5 * d * d / v - 0.5 * (2.0 * std::f64::consts::PI * v).ln()
    }

    /// Normalized log density.
    pub fn log_density(&self, x: &[f64]) -> f64 {
        x.iter().enumerate().map(|(j, &v)| self.coord(j, v)).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChainConfig {
    pub n_chains: usize,
    /// Total sweeps per chain, adaptive phase included.
    pub n_iterations: usize,
    pub n_adapt: usize,
    pub sigma_star: f64,
    pub seed: u64,
    /// Extra stream index so callers (e.g. simulation replicates) get
    /// independent chains under one seed.
    pub stream: u64,
    /// Standard deviation of the start-point jitter.
    pub jitter: f64,
    pub initial_scale: f64,
}

impl ChainConfig {
    /// 3 chains, 10^4 adaptive plus 10^4 retained sweeps.
    pub fn full() -> Self {
        Self {
            n_chains: 3,
            n_iterations: 20_000,
            n_adapt: 10_000,
            sigma_star: DEFAULT_SIGMA_STAR,
            seed: 0,
            stream: 0,
            jitter: 0.1,
            initial_scale: 0.1,
        }
    }

    /// 2 chains, 4000 adaptive plus 2000 retained sweeps.
    pub fn reduced() -> Self {
        Self { n_chains: 2, n_iterations: 6_000, n_adapt: 4_000, ..Self::full() }
    }

    pub fn n_retained(&self) -> usize {
        self.n_iterations - self.n_adapt
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_chains < 2 {
            return Err(Error::Config("at least two chains are required".into()));
        }
        if self.n_adapt >= self.n_iterations {
            return Err(Error::Config("n_adapt must be smaller than n_iterations".into()));
        }
        if !(self.sigma_star > 0.0 && self.sigma_star < 1.0) {
            return Err(Error::Config("sigma_star must lie in (0, 1)".into()));
        }
        if !(self.jitter >= 0.0 && self.initial_scale > 0.0) {
            return Err(Error::Config("jitter must be >= 0 and initial_scale > 0".into()));
        }
        Ok(())
    }
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self::full()
    }
}

/// Retained draws of one chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainDraws {
    /// Row-major `n_retained x dim`.
    pub draws: Vec<f64>,
    pub log_posterior: Vec<f64>,
    /// Per-coordinate acceptance over the retained sweeps.
    pub acceptance: Vec<f64>,
    /// Frozen proposal standard deviations.
    pub scales: Vec<f64>,
}

impl ChainDraws {
    pub fn len(&self) -> usize {
        self.log_posterior.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_posterior.is_empty()
    }

    pub fn draw(&self, t: usize) -> &[f64] {
        let dim = self.scales.len();
        &self.draws[t * dim..(t + 1) * dim]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorDraws {
    pub layout: Vec<usize>,
    pub chains: Vec<ChainDraws>,
}

impl PosteriorDraws {
    pub fn dim(&self) -> usize {
        self.layout.iter().sum()
    }

    pub fn n_draws(&self) -> usize {
        self.chains.iter().map(ChainDraws::len).sum()
    }

    /// Every retained draw with its log posterior, chain by chain.
    pub fn iter(&self) -> impl Iterator<Item = (&[f64], f64)> {
        self.chains
            .iter()
            .flat_map(|c| (0..c.len()).map(move |t| (c.draw(t), c.log_posterior[t])))
    }

    /// Long-format trace: `iteration,chain,<coefficient columns>`.
    pub fn trace_csv(&self, names: &[String]) -> String {
        let mut out = String::from("iteration,chain");
        for n in names {
            out.push(',');
            out.push_str(n);
        }
        out.push('\n');
        for (c, chain) in self.chains.iter().enumerate() {
            for t in 0..chain.len() {
                let _ = write!(out, "{},{}", t + 1, c + 1);
                for v in chain.draw(t) {
                    let _ = write!(out, ",{v}");
                }
                out.push('\n');
            }
        }
        out
    }
}

/// Log posterior up to the normalizing constant of the likelihood-prior
/// product; `-inf` outside the constraint set.
pub fn log_posterior(
    params: &MissingnessParams,
    dataset: &ObservedDataset,
    registry: &PatternRegistry,
    prior: &PriorSpec,
    sigma_star: f64,
) -> f64 {
    let model = MissingnessModel::new(registry, dataset);
    model_log_posterior(&model, params, prior, sigma_star)
}

pub fn model_log_posterior(
    model: &MissingnessModel,
    params: &MissingnessParams,
    prior: &PriorSpec,
    sigma_star: f64,
) -> f64 {
    if !model.satisfies_constraint(params, sigma_star) {
        return f64::NEG_INFINITY;
    }
    model.log_likelihood(params) + prior.log_density(&params.to_flat())
}

/// Number of (draw, complete case) pairs violating the constraint, recomputed
/// from scratch.
pub fn constraint_violations(
    draws: &PosteriorDraws,
    model: &MissingnessModel,
    sigma_star: f64,
) -> usize {
    draws
        .iter()
        .map(|(d, _)| {
            let params = MissingnessParams::from_flat(&draws.layout, d);
            model
                .complete_case_probs(&params)
                .iter()
                .filter(|&&p1| !(1.0 - p1 < 1.0 - sigma_star))
                .count()
        })
        .sum()
}

/// A target the sampler updates one coordinate at a time.
pub(crate) trait CoordinateTarget {
    fn dim(&self) -> usize;
    fn value(&self, j: usize) -> f64;
    /// Change in log density if coordinate `j` moved to `x`; `-inf` if the
    /// move is infeasible. May cache work for a following [`Self::commit`].
    fn delta(&mut self, j: usize, x: f64) -> f64;
    fn commit(&mut self, j: usize, x: f64);
    /// Exact log density at the current state.
    fn log_density(&mut self) -> f64;
}

/// Adaptive Metropolis-within-Gibbs run of a single chain.
pub(crate) fn run_chain<T: CoordinateTarget>(
    target: &mut T,
    n_iterations: usize,
    n_adapt: usize,
    initial_scale: f64,
    rng: &mut StreamRng,
) -> ChainDraws {
    let dim = target.dim();
    let n_keep = n_iterations - n_adapt;
    let mut log_scale = vec![initial_scale.ln(); dim];
    let mut accepted = vec![0usize; dim];
    let mut draws = Vec::with_capacity(n_keep * dim);
    let mut lp_trace = Vec::with_capacity(n_keep);
    let mut lp = target.log_density();
    for t in 0..n_iterations {
        let adapting = t < n_adapt;
        let gain = (t as f64 + 1.0).powf(-0.6);
        for j in 0..dim {
            let z: f64 = rng.sample(StandardNormal);
            let proposal = target.value(j) + log_scale[j].exp() * z;
            let d = target.delta(j, proposal);
            let u: f64 = rng.random();
            let accept = d.is_finite() && (d >= 0.0 || u.ln() < d);
            if accept {
                target.commit(j, proposal);
                lp += d;
                if !adapting {
                    accepted[j] += 1;
                }
            }
            if adapting {
                let a = if d.is_finite() { d.min(0.0).exp() } else { 0.0 };
                log_scale[j] += gain * (a - TARGET_ACCEPTANCE);
            }
        }
        if t % 10 == 9 {
            lp = target.log_density();
        }
        if !adapting {
            draws.extend((0..dim).map(|j| target.value(j)));
            lp_trace.push(lp);
        }
    }
    let denom = n_keep.max(1) as f64;
    ChainDraws {
        draws,
        log_posterior: lp_trace,
        acceptance: accepted.iter().map(|&a| a as f64 / denom).collect(),
        scales: log_scale.iter().map(|s| s.exp()).collect(),
    }
}

/// Cached state for the missingness posterior. Each coordinate touches one
/// block, so an update only revisits that block's complete-case and
/// own-pattern rows.
struct CbeTarget<'a> {
    model: &'a MissingnessModel,
    prior: &'a PriorSpec,
    bound: f64,
    gamma: Vec<f64>,
    layout: Vec<usize>,
    /// coordinate -> (block, position in block)
    coord: Vec<(usize, usize)>,
    cc_eta: Vec<Vec<f64>>,
    cc_pi: Vec<Vec<f64>>,
    cc_sum: Vec<f64>,
    own_eta: Vec<Vec<f64>>,
    scratch_eta: Vec<f64>,
    scratch_pi: Vec<f64>,
    scratch_own: Vec<f64>,
}

impl<'a> CbeTarget<'a> {
    fn new(model: &'a MissingnessModel, prior: &'a PriorSpec, sigma_star: f64, start: &[f64]) -> Self {
        let layout = model.layout().to_vec();
        let coord = layout
            .iter()
            .enumerate()
            .flat_map(|(b, &w)| (0..w).map(move |k| (b, k)))
            .collect();
        let mut t = Self {
            model,
            prior,
            bound: 1.0 - sigma_star,
            gamma: start.to_vec(),
            layout,
            coord,
            cc_eta: Vec::new(),
            cc_pi: Vec::new(),
            cc_sum: Vec::new(),
            own_eta: Vec::new(),
            scratch_eta: Vec::new(),
            scratch_pi: Vec::new(),
            scratch_own: Vec::new(),
        };
        t.refresh();
        t
    }

    fn block(&self, b: usize) -> &[f64] {
        let off: usize = self.layout[..b].iter().sum();
        &self.gamma[off..off + self.layout[b]]
    }

    fn refresh(&mut self) {
        let nb = self.layout.len();
        let n_cc = self.model.complete_rows().len();
        self.cc_eta = Vec::with_capacity(nb);
        self.cc_pi = Vec::with_capacity(nb);
        self.own_eta = Vec::with_capacity(nb);
        self.cc_sum = vec![0.0; n_cc];
        for b in 0..nb {
            let g = self.block(b).to_vec();
            let cc = self.model.cc_design(b);
            let eta: Vec<f64> = (0..cc.len()).map(|i| cc.eta(i, &g)).collect();
            let pi: Vec<f64> = eta.iter().map(|&e| expit(e)).collect();
            for (s, p) in self.cc_sum.iter_mut().zip(&pi) {
                *s += p;
            }
            self.cc_eta.push(eta);
            self.cc_pi.push(pi);
            let own = self.model.own_design(b);
            self.own_eta.push((0..own.len()).map(|i| own.eta(i, &g)).collect());
        }
    }

    fn feasible(&self) -> bool {
        self.cc_sum.iter().all(|&s| s < self.bound)
    }
}

impl CoordinateTarget for CbeTarget<'_> {
    fn dim(&self) -> usize {
        self.gamma.len()
    }

    fn value(&self, j: usize) -> f64 {
        self.gamma[j]
    }

    fn delta(&mut self, j: usize, x: f64) -> f64 {
        let (b, k) = self.coord[j];
        let dz = x - self.gamma[j];
        let cc = self.model.cc_design(b);
        self.scratch_eta.clear();
        self.scratch_pi.clear();
        let mut d = 0.0;
        for i in 0..cc.len() {
            let eta = self.cc_eta[b][i] + dz * cc.row(i)[k];
            let pi = expit(eta);
            let old = self.cc_sum[i];
            let new = old - self.cc_pi[b][i] + pi;
            if !(new < self.bound) {
                return f64::NEG_INFINITY;
            }
            d += (1.0 - new).ln() - (1.0 - old).ln();
            self.scratch_eta.push(eta);
            self.scratch_pi.push(pi);
        }
        let own = self.model.own_design(b);
        self.scratch_own.clear();
        for i in 0..own.len() {
            let eta = self.own_eta[b][i] + dz * own.row(i)[k];
            d += ln_expit(eta) - ln_expit(self.own_eta[b][i]);
            self.scratch_own.push(eta);
        }
        d + self.prior.coord(j, x) - self.prior.coord(j, self.gamma[j])
    }

    fn commit(&mut self, j: usize, x: f64) {
        let (b, _) = self.coord[j];
        for i in 0..self.scratch_pi.len() {
            self.cc_sum[i] += self.scratch_pi[i] - self.cc_pi[b][i];
        }
        std::mem::swap(&mut self.cc_eta[b], &mut self.scratch_eta);
        std::mem::swap(&mut self.cc_pi[b], &mut self.scratch_pi);
        std::mem::swap(&mut self.own_eta[b], &mut self.scratch_own);
        self.gamma[j] = x;
    }

    fn log_density(&mut self) -> f64 {
        self.refresh();
        let mut lp = self.prior.log_density(&self.gamma);
        for s in &self.cc_sum {
            lp += (1.0 - s).ln();
        }
        for etas in &self.own_eta {
            lp += etas.iter().map(|&e| ln_expit(e)).sum::<f64>();
        }
        lp
    }
}

/// Feasible point found by lowering every intercept from the frequency-based
/// start until the constraint holds.
pub fn feasible_start(
    model: &MissingnessModel,
    registry: &PatternRegistry,
    dataset: &ObservedDataset,
    sigma_star: f64,
) -> Result<MissingnessParams> {
    let mut params = default_init(registry, dataset);
    for _ in 0..200 {
        if model.satisfies_constraint(&params, sigma_star) {
            return Ok(params);
        }
        for code in registry.incomplete_codes() {
            params.block_mut(code)[0] -= 0.25;
        }
    }
    Err(Error::InfeasibleStart)
}

/// Draw from the constrained posterior with independent chains.
pub fn sample_posterior(
    dataset: &ObservedDataset,
    registry: &PatternRegistry,
    prior: &PriorSpec,
    config: &ChainConfig,
) -> Result<PosteriorDraws> {
    config.validate()?;
    if dataset.n_complete() == 0 {
        return Err(Error::PositivityUnverifiable);
    }
    let model = MissingnessModel::new(registry, dataset);
    if prior.dim() != model.dim() {
        return Err(Error::DimensionMismatch { expected: model.dim(), got: prior.dim() });
    }
    let base = feasible_start(&model, registry, dataset, config.sigma_star)?.to_flat();
    let layout = model.layout().to_vec();
    let chains = (0..config.n_chains)
        .into_par_iter()
        .map(|c| {
            let mut rng = substream(config.seed, &[config.stream, c as u64]);
            let start = jittered_start(&model, &layout, &base, config, &mut rng);
            let mut target = CbeTarget::new(&model, prior, config.sigma_star, &start);
            debug_assert!(target.feasible());
            run_chain(&mut target, config.n_iterations, config.n_adapt, config.initial_scale, &mut rng)
        })
        .collect();
    Ok(PosteriorDraws { layout, chains })
}

fn jittered_start(
    model: &MissingnessModel,
    layout: &[usize],
    base: &[f64],
    config: &ChainConfig,
    rng: &mut StreamRng,
) -> Vec<f64> {
    if config.jitter == 0.0 {
        return base.to_vec();
    }
    for _ in 0..100 {
        let x: Vec<f64> = base
            .iter()
            .map(|&b| b + config.jitter * rng.sample::<f64, _>(StandardNormal))
            .collect();
        if model.satisfies_constraint(&MissingnessParams::from_flat(layout, &x), config.sigma_star) {
            return x;
        }
    }
    base.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GelmanRubin {
    pub rhat: Vec<f64>,
    /// Coordinates whose within-chain variance is zero (reported as 1).
    pub degenerate: Vec<bool>,
}

impl GelmanRubin {
    pub fn passes(&self, threshold: f64) -> Vec<bool> {
        self.rhat.iter().map(|&r| r <= threshold).collect()
    }

    pub fn share_below(&self, threshold: f64) -> f64 {
        if self.rhat.is_empty() {
            return 1.0;
        }
        self.passes(threshold).iter().filter(|&&p| p).count() as f64 / self.rhat.len() as f64
    }
}

/// Potential scale reduction per coefficient,
/// `sqrt(((n-1)/n W + B/n) / W)`.
pub fn gelman_rubin(draws: &PosteriorDraws) -> Result<GelmanRubin> {
    let m = draws.chains.len();
    let n = draws.chains.iter().map(ChainDraws::len).min().unwrap_or(0);
    if m < 2 || n < 10 {
        return Err(Error::Config(
            "Gelman-Rubin needs at least two chains of ten draws".into(),
        ));
    }
    let dim = draws.dim();
    let nf = n as f64;
    let mut rhat = Vec::with_capacity(dim);
    let mut degenerate = Vec::with_capacity(dim);
    for j in 0..dim {
        let mut means = Vec::with_capacity(m);
        let mut vars = Vec::with_capacity(m);
        for c in &draws.chains {
            let xs: Vec<f64> = (0..n).map(|t| c.draw(t)[j]).collect();
            let mean = xs.iter().sum::<f64>() / nf;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (nf - 1.0);
            means.push(mean);
            vars.push(var);
        }
        let w = vars.iter().sum::<f64>() / m as f64;
        let grand = means.iter().sum::<f64>() / m as f64;
        let b = nf * means.iter().map(|x| (x - grand).powi(2)).sum::<f64>() / (m as f64 - 1.0);
        if w <= 0.0 {
            rhat.push(1.0);
            degenerate.push(true);
        } else {
            rhat.push((((nf - 1.0) / nf * w + b / nf) / w).sqrt());
            degenerate.push(false);
        }
    }
    Ok(GelmanRubin { rhat, degenerate })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PointKind {
    #[default]
    Mean,
    Mode,
}

/// Posterior mean over pooled retained draws, or the retained draw with the
/// highest log posterior.
pub fn point_estimate(draws: &PosteriorDraws, kind: PointKind) -> Result<MissingnessParams> {
    if draws.n_draws() == 0 {
        return Err(Error::Config("no retained draws".into()));
    }
    let flat = match kind {
        PointKind::Mean => {
            let mut acc = vec![0.0; draws.dim()];
            for (d, _) in draws.iter() {
                for (a, v) in acc.iter_mut().zip(d) {
                    *a += v;
                }
            }
            let n = draws.n_draws() as f64;
            acc.iter().map(|a| a / n).collect()
        }
        PointKind::Mode => {
            let mut best: Option<(&[f64], f64)> = None;
            for (d, lp) in draws.iter() {
                if best.is_none_or(|(_, b)| lp > b) {
                    best = Some((d, lp));
                }
            }
            best.map(|(d, _)| d.to_vec()).unwrap_or_default()
        }
    };
    Ok(MissingnessParams::from_flat(&draws.layout, &flat))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{ObservedRow, VariableKind, VariableSchema};
    use rand::SeedableRng;
    use statrs::distribution::{ContinuousCDF, Normal};

    fn toy() -> (PatternRegistry, ObservedDataset) {
        let registry = PatternRegistry::new(2, vec![vec![0, 1], vec![0], vec![]]).unwrap();
        let mut rng = StreamRng::seed_from_u64(3);
        let mut rows = Vec::new();
        for _ in 0..150 {
            let x: f64 = rng.random_range(-1.0..1.0);
            let y: f64 = rng.random_range(-1.0..1.0);
            let u: f64 = rng.random();
            rows.push(if u < 0.3 {
                ObservedRow { pattern: 2, values: vec![x] }
            } else if u < 0.5 {
                ObservedRow { pattern: 3, values: vec![] }
            } else {
                ObservedRow { pattern: 1, values: vec![x, y] }
            });
        }
        let schema = VariableSchema::new(
            vec!["x".into(), "y".into()],
            vec![VariableKind::Continuous; 2],
        )
        .unwrap();
        let ds = ObservedDataset::new(schema, &registry, rows).unwrap();
        (registry, ds)
    }

    fn short() -> ChainConfig {
        ChainConfig { n_iterations: 1500, n_adapt: 500, seed: 9, ..ChainConfig::reduced() }
    }

    #[test]
    fn log_posterior_composes_likelihood_and_prior() {
        let (registry, ds) = toy();
        let prior = PriorSpec::diffuse(3);
        let params = default_init(&registry, &ds);
        let model = MissingnessModel::new(&registry, &ds);
        let lp = log_posterior(&params, &ds, &registry, &prior, 1e-8);
        let direct = model.log_likelihood(&params) + prior.log_density(&params.to_flat());
        assert!((lp - direct).abs() < 1e-12);

        let bad = MissingnessParams::new(&registry, vec![vec![5.0, 0.0], vec![5.0]]).unwrap();
        assert_eq!(log_posterior(&bad, &ds, &registry, &prior, 1e-8), f64::NEG_INFINITY);
    }

    #[test]
    fn complete_data_posterior_is_prior() {
        let schema = VariableSchema::new(vec!["x".into()], vec![VariableKind::Continuous]).unwrap();
        let (registry, ds) = ObservedDataset::complete(schema, vec![vec![1.0], vec![2.0]]).unwrap();
        let prior = PriorSpec::diffuse(0);
        let params = MissingnessParams::zeros(&registry);
        assert_eq!(log_posterior(&params, &ds, &registry, &prior, 1e-8), 0.0);
    }

    #[test]
    fn cached_increments_track_exact_density() {
        let (registry, ds) = toy();
        let model = MissingnessModel::new(&registry, &ds);
        let prior = PriorSpec::diffuse(model.dim());
        let start = default_init(&registry, &ds).to_flat();
        let mut target = CbeTarget::new(&model, &prior, 1e-8, &start);
        let mut lp = target.log_density();
        let mut rng = StreamRng::seed_from_u64(1);
        for step in 0..200 {
            let j = step % model.dim();
            let x = target.value(j) + 0.05 * rng.sample::<f64, _>(StandardNormal);
            let d = target.delta(j, x);
            if d.is_finite() {
                target.commit(j, x);
                lp += d;
            }
        }
        let params = MissingnessParams::from_flat(model.layout(), &target.gamma);
        let exact = model_log_posterior(&model, &params, &prior, 1e-8);
        assert!((lp - exact).abs() < 1e-8, "{lp} vs {exact}");
    }

    #[test]
    fn seeded_runs_are_identical_and_feasible() {
        let (registry, ds) = toy();
        let prior = PriorSpec::diffuse(3);
        let a = sample_posterior(&ds, &registry, &prior, &short()).unwrap();
        let b = sample_posterior(&ds, &registry, &prior, &short()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.chains.len(), 2);
        assert_eq!(a.chains[0].len(), 1000);
        let model = MissingnessModel::new(&registry, &ds);
        assert_eq!(constraint_violations(&a, &model, 1e-8), 0);
        for c in &a.chains {
            for &acc in &c.acceptance {
                assert!(acc > 0.2 && acc < 0.7, "acceptance {acc}");
            }
        }
    }

    #[test]
    fn mode_is_argmax_of_recomputed_posterior() {
        let (registry, ds) = toy();
        let prior = PriorSpec::diffuse(3);
        let draws = sample_posterior(&ds, &registry, &prior, &short()).unwrap();
        let mode = point_estimate(&draws, PointKind::Mode).unwrap();
        let model = MissingnessModel::new(&registry, &ds);
        let best = draws
            .iter()
            .map(|(d, _)| {
                let p = MissingnessParams::from_flat(&draws.layout, d);
                (model_log_posterior(&model, &p, &prior, 1e-8), d.to_vec())
            })
            .max_by(|a, b| a.0.total_cmp(&b.0))
            .unwrap();
        assert_eq!(mode.to_flat(), best.1);
    }

    fn single_chain_draws(values: &[&[f64]]) -> PosteriorDraws {
        PosteriorDraws {
            layout: vec![values[0].len()],
            chains: vec![ChainDraws {
                draws: values.iter().flat_map(|v| v.iter().copied()).collect(),
                log_posterior: (0..values.len()).map(|i| i as f64).collect(),
                acceptance: vec![0.0; values[0].len()],
                scales: vec![1.0; values[0].len()],
            }],
        }
    }

    #[test]
    fn point_estimates_of_small_sets() {
        let one = single_chain_draws(&[&[0.3, -1.0]]);
        assert_eq!(point_estimate(&one, PointKind::Mean).unwrap().to_flat(), vec![0.3, -1.0]);
        assert_eq!(point_estimate(&one, PointKind::Mode).unwrap().to_flat(), vec![0.3, -1.0]);
        let sym = single_chain_draws(&[&[0.3, -1.0], &[-0.3, 1.0]]);
        assert_eq!(point_estimate(&sym, PointKind::Mean).unwrap().to_flat(), vec![0.0, 0.0]);
    }

    fn normal_chains(means: &[f64], n: usize, seed: u64) -> PosteriorDraws {
        let mut rng = StreamRng::seed_from_u64(seed);
        let chains = means
            .iter()
            .map(|&mu| ChainDraws {
                draws: (0..n).map(|_| mu + rng.sample::<f64, _>(StandardNormal)).collect(),
                log_posterior: vec![0.0; n],
                acceptance: vec![0.0],
                scales: vec![1.0],
            })
            .collect();
        PosteriorDraws { layout: vec![1], chains }
    }

    #[test]
    fn gelman_rubin_behaviour() {
        let same = normal_chains(&[0.0, 0.0, 0.0], 5000, 1);
        assert!((gelman_rubin(&same).unwrap().rhat[0] - 1.0).abs() < 0.05);

        let apart = normal_chains(&[0.0, 5.0], 1000, 2);
        assert!(gelman_rubin(&apart).unwrap().rhat[0] > 2.0);

        let mut copies = normal_chains(&[0.0], 1000, 3);
        copies.chains.push(copies.chains[0].clone());
        let gr = gelman_rubin(&copies).unwrap();
        assert!((gr.rhat[0] - 1.0).abs() < 1e-3);
        assert!(!gr.degenerate[0]);

        let flat = PosteriorDraws {
            layout: vec![1],
            chains: vec![
                ChainDraws { draws: vec![2.0; 20], log_posterior: vec![0.0; 20], acceptance: vec![0.0], scales: vec![1.0] };
                2
            ],
        };
        let gr = gelman_rubin(&flat).unwrap();
        assert_eq!(gr.rhat[0], 1.0);
        assert!(gr.degenerate[0]);

        assert!(gelman_rubin(&normal_chains(&[0.0], 100, 4)).is_err());
    }

    struct PriorOnly(PriorSpec, f64);

    impl CoordinateTarget for PriorOnly {
        fn dim(&self) -> usize {
            1
        }
        fn value(&self, _: usize) -> f64 {
            self.1
        }
        fn delta(&mut self, j: usize, x: f64) -> f64 {
            self.0.coord(j, x) - self.0.coord(j, self.1)
        }
        fn commit(&mut self, _: usize, x: f64) {
            self.1 = x;
        }
        fn log_density(&mut self) -> f64 {
            self.0.log_density(&[self.1])
        }
    }

    #[test]
    fn flat_likelihood_recovers_prior() {
        let prior = PriorSpec::iid(1, 0.5, 4.0).unwrap();
        let mut target = PriorOnly(prior, 0.0);
        let mut rng = substream(5, &[0]);
        // thin by 10 so the 5000 draws are close to independent
        let out = run_chain(&mut target, 52_000, 2_000, 1.0, &mut rng);
        let mut xs: Vec<f64> = (0..out.len()).step_by(10).map(|t| out.draw(t)[0]).collect();
        assert_eq!(xs.len(), 5000);
        xs.sort_by(f64::total_cmp);
        let law = Normal::new(0.5, 2.0).unwrap();
        let n = xs.len() as f64;
        let ks = xs
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = law.cdf(x);
                (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
            })
            .fold(0.0, f64::max);
        assert!(ks < 0.05, "KS distance {ks}");
    }

    #[test]
    fn trace_has_header_and_rows() {
        let d = single_chain_draws(&[&[0.3, -1.0], &[0.1, 0.2]]);
        let csv = d.trace_csv(&["a".into(), "b".into()]);
        assert_eq!(csv.lines().next().unwrap(), "iteration,chain,a,b");
        assert_eq!(csv.lines().count(), 3);
        assert_eq!(csv.lines().nth(2).unwrap(), "2,1,0.1,0.2");
    }
}
