//! Repeated-shot Bayesian estimation: posteriors on a parameter grid,
//! posterior-mean estimators and the μ-shot mean square error.
//!
//! Outcome counts are a sufficient statistic for μ repetitions of the same
//! measurement, so enumeration runs over count vectors weighted by their
//! multinomial coefficient rather than over ordered sequences.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bound::{crb_per_shot, qfim};
use crate::error::{Error, Result};
use crate::measurement::Povm;
use crate::models::EstimationModel;
use crate::moments::prior_moments;
use crate::parallel::{pairwise_sum, with_workers};

pub const DEFAULT_ENUMERATION_CAP: u64 = 1_000_000;
pub const DEFAULT_MC_SAMPLES: usize = 20_000;
pub const MIN_GRID_NODES: usize = 8;

/// Fraction of rejected Monte Carlo samples above which a warning is attached.
pub const REJECTION_WARNING: f64 = 1e-3;

/// Posterior grid resolution used when none is configured.
pub fn default_grid_nodes(d: usize) -> Option<usize> {
    match d {
        0..=2 => Some(101),
        3 => Some(31),
        _ => None,
    }
}

/// Settings shared by every simulation entry point.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimulationConfig {
    /// Enumerate exactly when `outcomes^μ` does not exceed this.
    pub enumeration_cap: u64,
    pub mc_samples: usize,
    pub seed: u64,
    /// Nodes per parameter of the posterior grid; `None` picks a default by `d`.
    pub grid_nodes: Option<usize>,
    /// Worker threads; `None` uses the ambient pool.
    pub workers: Option<usize>,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            enumeration_cap: DEFAULT_ENUMERATION_CAP,
            mc_samples: DEFAULT_MC_SAMPLES,
            seed: 0,
            grid_nodes: None,
            workers: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// No data: the weighted prior variance in closed form.
    Prior,
    Enumerate,
    MonteCarlo,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Prior => "prior",
            Method::Enumerate => "enumerate",
            Method::MonteCarlo => "monte_carlo",
        }
    }
}

/// μ-shot mean square error `Σ wᵢ E[(gᵢ − θᵢ)²]`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MseEstimate {
    pub mu: usize,
    pub value: f64,
    /// Zero for enumeration.
    pub std_error: f64,
    pub method: Method,
    /// Monte Carlo draws, or count vectors enumerated.
    pub samples: u64,
    pub seed: u64,
    /// Monte Carlo samples whose posterior vanished on the grid.
    pub rejected: u64,
    pub grid_nodes: usize,
    pub warning: Option<String>,
}

/// Normalised posterior weights on a tensor grid over the prior box.
#[derive(Clone, Debug, PartialEq)]
pub struct PosteriorGrid {
    pub grid_points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

/// Midpoint-rule grid over the prior box with `Tr[E_m ρ(θ)]` tabulated at
/// every node.
#[derive(Clone, Debug)]
pub struct LikelihoodTable {
    d: usize,
    nodes: usize,
    outcomes: usize,
    /// `len × d`, row-major.
    points: Vec<f64>,
    /// `len × outcomes`, row-major.
    ln_probs: Vec<f64>,
}

impl LikelihoodTable {
    pub fn new(model: &EstimationModel, povm: &Povm, nodes: usize) -> Result<Self> {
        if nodes < MIN_GRID_NODES {
            return Err(Error::Precondition(format!(
                "need at least {MIN_GRID_NODES} posterior grid nodes per parameter, got {nodes}"
            )));
        }
        if povm.dim() != model.dim() {
            return Err(Error::Povm(format!(
                "POVM acts on dimension {} but the model has dimension {}",
                povm.dim(),
                model.dim()
            )));
        }
        let d = model.num_params();
        let total = (nodes as f64).powi(d as i32);
        if total > 1e8 {
            return Err(Error::Resource(format!(
                "posterior grid of {nodes}^{d} = {total:.3e} points is too large"
            )));
        }
        let len = total as usize;
        let prior = model.prior();
        let axes: Vec<Vec<f64>> = (0..d)
            .map(|i| {
                let (lo, hi) = (prior.lower(i), prior.upper(i));
                let h = (hi - lo) / nodes as f64;
                (0..nodes).map(|k| lo + (k as f64 + 0.5) * h).collect()
            })
            .collect();
        let outcomes = povm.len();
        let rows: Vec<(Vec<f64>, Vec<f64>)> = (0..len)
            .into_par_iter()
            .map(|g| {
                let mut rem = g;
                let mut theta = vec![0.0; d];
                for i in (0..d).rev() {
                    theta[i] = axes[i][rem % nodes];
                    rem /= nodes;
                }
                let ln = born_probabilities(model, povm, &theta)
                    .into_iter()
                    .map(f64::ln)
                    .collect();
                (theta, ln)
            })
            .collect();
        let mut points = Vec::with_capacity(len * d);
        let mut ln_probs = Vec::with_capacity(len * outcomes);
        for (t, l) in rows {
            points.extend(t);
            ln_probs.extend(l);
        }
        Ok(Self {
            d,
            nodes,
            outcomes,
            points,
            ln_probs,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.d.max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn point(&self, g: usize) -> &[f64] {
        &self.points[g * self.d..(g + 1) * self.d]
    }

    /// `ln Π_m p_m(θ_g)^{c_m}`; `-∞` where an observed outcome is impossible.
    fn log_likelihood(&self, g: usize, counts: &[u32]) -> f64 {
        let row = &self.ln_probs[g * self.outcomes..(g + 1) * self.outcomes];
        let mut s = 0.0;
        for (c, l) in counts.iter().zip(row) {
            if *c > 0 {
                s += f64::from(*c) * l;
            }
        }
        s
    }

    /// Unnormalised posterior `exp(lnL_g − max)` and the maximum, or `None`
    /// when every node has zero likelihood.
    fn relative_posterior(&self, counts: &[u32]) -> Option<(Vec<f64>, f64)> {
        let ll: Vec<f64> = (0..self.len())
            .map(|g| self.log_likelihood(g, counts))
            .collect();
        let max = ll.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return None;
        }
        Some((ll.into_iter().map(|l| (l - max).exp()).collect(), max))
    }

    fn posterior_mean(&self, rel: &[f64]) -> Vec<f64> {
        let z = pairwise_sum(rel);
        (0..self.d)
            .map(|i| {
                let terms: Vec<f64> = rel
                    .iter()
                    .enumerate()
                    .map(|(g, w)| w * self.points[g * self.d + i])
                    .collect();
                pairwise_sum(&terms) / z
            })
            .collect()
    }
}

/// `Tr[E_m ρ(θ)]` for every outcome, clipped to `[0, 1]`.
pub fn born_probabilities(model: &EstimationModel, povm: &Povm, theta: &[f64]) -> Vec<f64> {
    let psi = model.evolved_state(theta);
    povm.elements()
        .iter()
        .map(|e| e.expectation(&psi).clamp(0.0, 1.0))
        .collect()
}

fn counts_of(outcomes: &[usize], m: usize) -> Result<Vec<u32>> {
    let mut counts = vec![0u32; m];
    for &o in outcomes {
        if o >= m {
            return Err(Error::Precondition(format!(
                "outcome index {o} out of range for a {m}-outcome POVM"
            )));
        }
        counts[o] += 1;
    }
    Ok(counts)
}

/// Posterior on the grid after observing `outcomes` (indices into the POVM).
pub fn posterior(
    model: &EstimationModel,
    povm: &Povm,
    outcomes: &[usize],
    grid_nodes: usize,
) -> Result<PosteriorGrid> {
    let table = LikelihoodTable::new(model, povm, grid_nodes)?;
    posterior_from_table(&table, outcomes)
}

pub fn posterior_from_table(table: &LikelihoodTable, outcomes: &[usize]) -> Result<PosteriorGrid> {
    let counts = counts_of(outcomes, table.outcomes)?;
    let (rel, _) = table.relative_posterior(&counts).ok_or_else(|| {
        Error::DegeneratePosterior(format!(
            "the observed outcomes have zero likelihood everywhere on the grid (counts {counts:?})"
        ))
    })?;
    let z = pairwise_sum(&rel);
    Ok(PosteriorGrid {
        grid_points: (0..table.len()).map(|g| table.point(g).to_vec()).collect(),
        weights: rel.into_iter().map(|w| w / z).collect(),
    })
}

/// Posterior mean `∫dθ p(θ|m)θ`.
pub fn optimal_estimate(post: &PosteriorGrid) -> Vec<f64> {
    let d = post.grid_points.first().map_or(0, Vec::len);
    (0..d)
        .map(|i| {
            let terms: Vec<f64> = post
                .grid_points
                .iter()
                .zip(&post.weights)
                .map(|(p, w)| w * p[i])
                .collect();
            pairwise_sum(&terms)
        })
        .collect()
}

/// `(prior − mse)/prior × 100`.
pub fn improvement(prior_uncertainty: f64, mse: f64) -> Result<f64> {
    if !(prior_uncertainty > 0.0) {
        return Err(Error::Precondition(format!(
            "prior uncertainty must be positive, got {prior_uncertainty}"
        )));
    }
    Ok(100.0 * (prior_uncertainty - mse) / prior_uncertainty)
}

/// All count vectors of `outcomes` non-negative integers summing to `mu`,
/// in lexicographic order.
fn compositions(mu: u32, outcomes: usize) -> Vec<Vec<u32>> {
    fn rec(left: u32, slots: usize, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if slots == 1 {
            prefix.push(left);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for c in 0..=left {
            prefix.push(c);
            rec(left - c, slots - 1, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(mu, outcomes, &mut Vec::new(), &mut out);
    out
}

fn ln_factorial(n: u32) -> f64 {
    (1..=n).map(|k| f64::from(k).ln()).sum()
}

/// Whether `outcomes^mu ≤ cap`.
fn within_cap(outcomes: usize, mu: usize, cap: u64) -> bool {
    (mu as f64) * (outcomes as f64).ln() <= (cap as f64).ln() + 1e-12
}

fn resolve_grid(model: &EstimationModel, cfg: &SimulationConfig) -> Result<usize> {
    match cfg.grid_nodes {
        Some(n) => Ok(n),
        None => default_grid_nodes(model.num_params()).ok_or_else(|| {
            Error::Resource(format!(
                "joint posterior simulation with {} parameters is not supported; \
                 use a product model",
                model.num_params()
            ))
        }),
    }
}

/// μ-shot MSE of the posterior-mean estimator for `povm` repeated μ times.
pub fn repeated_mse(
    model: &EstimationModel,
    povm: &Povm,
    mu: usize,
    cfg: &SimulationConfig,
) -> Result<MseEstimate> {
    let nodes = resolve_grid(model, cfg)?;
    if mu == 0 {
        return Ok(prior_estimate(model, cfg, nodes));
    }
    with_workers(cfg.workers, || {
        let table = LikelihoodTable::new(model, povm, nodes)?;
        estimate_with_table(model, povm, &table, model.weights(), mu, cfg, 0)
    })
}

fn prior_estimate(model: &EstimationModel, cfg: &SimulationConfig, nodes: usize) -> MseEstimate {
    MseEstimate {
        mu: 0,
        value: prior_moments(model.prior()).weighted_variance(model.weights()),
        std_error: 0.0,
        method: Method::Prior,
        samples: 0,
        seed: cfg.seed,
        rejected: 0,
        grid_nodes: nodes,
        warning: None,
    }
}

fn estimate_with_table(
    model: &EstimationModel,
    povm: &Povm,
    table: &LikelihoodTable,
    weights: &[f64],
    mu: usize,
    cfg: &SimulationConfig,
    stream_base: u64,
) -> Result<MseEstimate> {
    if within_cap(povm.len(), mu, cfg.enumeration_cap) {
        enumerate(table, weights, mu, cfg)
    } else {
        monte_carlo(model, povm, table, weights, mu, cfg, stream_base)
    }
}

fn enumerate(
    table: &LikelihoodTable,
    weights: &[f64],
    mu: usize,
    cfg: &SimulationConfig,
) -> Result<MseEstimate> {
    let mu32 = u32::try_from(mu).map_err(|_| Error::Resource(format!("μ = {mu} too large")))?;
    let comps = compositions(mu32, table.outcomes);
    let ln_mu = ln_factorial(mu32);
    let ln_prior = -(table.len() as f64).ln();
    let contributions: Vec<f64> = comps
        .par_iter()
        .map(|counts| {
            let Some((rel, max)) = table.relative_posterior(counts) else {
                // zero marginal probability: the sequence never occurs
                return 0.0;
            };
            let g = table.posterior_mean(&rel);
            let sq: Vec<f64> = rel
                .iter()
                .enumerate()
                .map(|(k, w)| {
                    let p = table.point(k);
                    w * weights
                        .iter()
                        .enumerate()
                        .map(|(i, wi)| wi * (p[i] - g[i]).powi(2))
                        .sum::<f64>()
                })
                .collect();
            let ln_coeff = ln_mu - counts.iter().map(|&c| ln_factorial(c)).sum::<f64>();
            (ln_coeff + ln_prior + max).exp() * pairwise_sum(&sq)
        })
        .collect();
    Ok(MseEstimate {
        mu,
        value: pairwise_sum(&contributions),
        std_error: 0.0,
        method: Method::Enumerate,
        samples: comps.len() as u64,
        seed: cfg.seed,
        rejected: 0,
        grid_nodes: table.nodes,
        warning: None,
    })
}

/// Per-sample generator: `seed` selects the key, the sample index the stream.
pub fn sample_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn monte_carlo(
    model: &EstimationModel,
    povm: &Povm,
    table: &LikelihoodTable,
    weights: &[f64],
    mu: usize,
    cfg: &SimulationConfig,
    stream_base: u64,
) -> Result<MseEstimate> {
    let n = cfg.mc_samples;
    if n < 2 {
        return Err(Error::Precondition(format!(
            "Monte Carlo needs at least 2 samples, got {n}"
        )));
    }
    let d = model.num_params();
    let m = povm.len();
    let scores: Vec<Option<f64>> = (0..n)
        .into_par_iter()
        .map(|s| {
            let mut rng = sample_rng(cfg.seed, stream_base + s as u64);
            let u: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
            let theta = model.prior().from_unit(&u);
            let probs = born_probabilities(model, povm, &theta);
            let mut cumulative = Vec::with_capacity(m);
            let mut acc = 0.0;
            for p in &probs {
                acc += p;
                cumulative.push(acc);
            }
            let last = probs.iter().rposition(|&p| p > 0.0).unwrap_or(m - 1);
            let mut counts = vec![0u32; m];
            for _ in 0..mu {
                let r = rng.random::<f64>() * acc;
                let k = cumulative.iter().position(|&c| r < c).unwrap_or(last);
                counts[k] += 1;
            }
            let (rel, _) = table.relative_posterior(&counts)?;
            let g = table.posterior_mean(&rel);
            Some(
                weights
                    .iter()
                    .enumerate()
                    .map(|(i, w)| w * (g[i] - theta[i]).powi(2))
                    .sum(),
            )
        })
        .collect();
    let accepted: Vec<f64> = scores.iter().flatten().copied().collect();
    let rejected = (n - accepted.len()) as u64;
    if accepted.len() < 2 {
        return Err(Error::DegeneratePosterior(format!(
            "{rejected} of {n} Monte Carlo samples had a vanishing posterior"
        )));
    }
    let k = accepted.len() as f64;
    let mean = pairwise_sum(&accepted) / k;
    let dev: Vec<f64> = accepted.iter().map(|x| (x - mean).powi(2)).collect();
    let sd = (pairwise_sum(&dev) / (k - 1.0)).sqrt();
    let frac = rejected as f64 / n as f64;
    let warning = (frac > REJECTION_WARNING)
        .then(|| format!("{rejected} of {n} samples rejected for a vanishing posterior"));
    Ok(MseEstimate {
        mu,
        value: mean,
        std_error: sd / k.sqrt(),
        method: Method::MonteCarlo,
        samples: n as u64,
        seed: cfg.seed,
        rejected,
        grid_nodes: table.nodes,
        warning,
    })
}

/// One factor of a product model: a single-parameter mode and its local
/// measurement.
#[derive(Clone, Debug)]
pub struct ProductMode {
    pub model: EstimationModel,
    pub povm: Povm,
}

/// Gap between the Monte Carlo streams of consecutive modes.
const MODE_STREAM_STRIDE: u64 = 1 << 40;

/// μ-shot MSE for independent modes sharing the weight vector `weights`.
///
/// With a product prior, probe and measurement the posterior factorizes, so
/// the total error is `Σ_k w_k ε_k` with `ε_k` the single-mode error.
pub fn repeated_mse_product(
    modes: &[ProductMode],
    weights: &[f64],
    mu: usize,
    cfg: &SimulationConfig,
) -> Result<MseEstimate> {
    if modes.len() != weights.len() || modes.is_empty() {
        return Err(Error::Precondition(format!(
            "{} modes for {} weights",
            modes.len(),
            weights.len()
        )));
    }
    if let Some(k) = modes.iter().position(|m| m.model.num_params() != 1) {
        return Err(Error::Precondition(format!(
            "mode {k} must have exactly one parameter"
        )));
    }
    let nodes = cfg
        .grid_nodes
        .unwrap_or(default_grid_nodes(1).expect("d = 1"));
    with_workers(cfg.workers, || {
        let mut value = 0.0;
        let mut var = 0.0;
        let mut out: Option<MseEstimate> = None;
        for (k, (mode, w)) in modes.iter().zip(weights).enumerate() {
            let est = if mu == 0 {
                prior_estimate(&mode.model, cfg, nodes)
            } else {
                let table = LikelihoodTable::new(&mode.model, &mode.povm, nodes)?;
                estimate_with_table(
                    &mode.model,
                    &mode.povm,
                    &table,
                    &[1.0],
                    mu,
                    cfg,
                    k as u64 * MODE_STREAM_STRIDE,
                )?
            };
            value += w * est.value;
            var += (w * est.std_error).powi(2);
            out = Some(match out {
                None => est,
                Some(mut acc) => {
                    acc.samples += est.samples;
                    acc.rejected += est.rejected;
                    if est.method == Method::MonteCarlo {
                        acc.method = Method::MonteCarlo;
                    }
                    acc.warning = acc.warning.or(est.warning);
                    acc
                }
            });
        }
        let mut est = out.expect("at least one mode");
        est.value = value;
        est.std_error = var.sqrt();
        Ok(est)
    })
}

/// One row of a simulated curve.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CurvePoint {
    #[serde(flatten)]
    pub estimate: MseEstimate,
    /// `Tr(𝒲F⁻¹)/μ`; absent at μ = 0 or for a singular QFIM.
    pub crb: Option<f64>,
}

fn check_mu_list(mu_list: &[usize]) -> Result<()> {
    if mu_list.is_empty() {
        return Err(Error::Precondition("the μ list is empty".into()));
    }
    if mu_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Precondition(format!(
            "the μ list must be strictly ascending, got {mu_list:?}"
        )));
    }
    Ok(())
}

fn crb_at(per_shot: Option<f64>, mu: usize) -> Option<f64> {
    per_shot.filter(|_| mu > 0).map(|c| c / mu as f64)
}

/// MSE for each μ in `mu_list` with the Cramér-Rao benchmark alongside.
pub fn mse_curve(
    model: &EstimationModel,
    povm: &Povm,
    mu_list: &[usize],
    cfg: &SimulationConfig,
) -> Result<Vec<CurvePoint>> {
    check_mu_list(mu_list)?;
    let nodes = resolve_grid(model, cfg)?;
    let per_shot = crb_per_shot(model.weights(), &qfim(model));
    with_workers(cfg.workers, || {
        let table = LikelihoodTable::new(model, povm, nodes)?;
        mu_list
            .iter()
            .map(|&mu| {
                let estimate = if mu == 0 {
                    prior_estimate(model, cfg, nodes)
                } else {
                    estimate_with_table(model, povm, &table, model.weights(), mu, cfg, 0)?
                };
                Ok(CurvePoint {
                    estimate,
                    crb: crb_at(per_shot, mu),
                })
            })
            .collect()
    })
}

/// [`mse_curve`] for a product model. `crb_per_shot` is the full model's
/// `Tr(𝒲F⁻¹)`.
pub fn mse_curve_product(
    modes: &[ProductMode],
    weights: &[f64],
    crb_per_shot: Option<f64>,
    mu_list: &[usize],
    cfg: &SimulationConfig,
) -> Result<Vec<CurvePoint>> {
    check_mu_list(mu_list)?;
    mu_list
        .iter()
        .map(|&mu| {
            Ok(CurvePoint {
                estimate: repeated_mse_product(modes, weights, mu, cfg)?,
                crb: crb_at(crb_per_shot, mu),
            })
        })
        .collect()
}

/// The default μ grid: 1, 2, 5, 10, 20, 50, … up to `max`.
pub fn log_spaced_mu(max: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut decade = 1;
    'outer: loop {
        for step in [1, 2, 5] {
            let mu = step * decade;
            if mu > max {
                break 'outer;
            }
            out.push(mu);
        }
        decade *= 10;
    }
    if out.last() != Some(&max) && max > 0 {
        out.push(max);
    }
    out
}
