//! Prior moments and the prior-averaged operators
//! `ρ = ∫dθ p(θ)ρ(θ)` and `ρ̄ᵢ = ∫dθ p(θ)ρ(θ)θᵢ`.
//!
//! Integrals use Gauss-Legendre rules on the prior box. Every integrand is a
//! trigonometric polynomial in θ, so a few dozen nodes per axis reach machine
//! precision for the preset models.

use std::num::NonZeroUsize;
use std::ops::Add;

use gauss_quad::legendre::GaussLegendre;
use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{EstimationModel, FlatPrior};
use crate::operators::{c64, CMatrix, HermitianOperator};
use crate::parallel::pairwise_reduce;

pub const DEFAULT_NODES: usize = 64;

/// Largest tensor grid (`nodes^d`) the full tensor rule will accumulate.
pub const TENSOR_NODE_BUDGET: f64 = 1e7;

/// Parameter count above which [`QuadratureStrategy::Auto`] switches to the
/// per-axis factorization.
pub const MAX_TENSOR_PARAMS: usize = 3;

/// First and second moments of the prior.
#[derive(Clone, Debug, PartialEq)]
pub struct PriorMoments {
    pub mean: Vec<f64>,
    /// `∫p θθᵀ`.
    pub second_moment: DMatrix<f64>,
    /// `Δθ²_{p,i} = ∫p θᵢ² − (∫p θᵢ)²`.
    pub variances: Vec<f64>,
}

impl PriorMoments {
    /// `Σ wᵢ Δθ²_{p,i}`.
    pub fn weighted_variance(&self, weights: &[f64]) -> f64 {
        weights
            .iter()
            .zip(&self.variances)
            .map(|(w, v)| w * v)
            .sum()
    }

    /// Covariance `∫p θθᵀ − mean·meanᵀ`.
    pub fn covariance(&self) -> DMatrix<f64> {
        let d = self.mean.len();
        DMatrix::from_fn(d, d, |i, j| {
            self.second_moment[(i, j)] - self.mean[i] * self.mean[j]
        })
    }
}

/// Closed-form moments of a flat box prior.
pub fn prior_moments(prior: &FlatPrior) -> PriorMoments {
    let d = prior.dim();
    let mean = prior.center().to_vec();
    let variances: Vec<f64> = prior.halfwidth().iter().map(|h| h * h / 3.0).collect();
    let second_moment = DMatrix::from_fn(d, d, |i, j| {
        let m = mean[i] * mean[j];
        if i == j {
            m + variances[i]
        } else {
            m
        }
    });
    PriorMoments {
        mean,
        second_moment,
        variances,
    }
}

/// How the d-dimensional prior integral is carried out.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuadratureStrategy {
    /// Tensor rule for `d ≤ 3`, factorized rule otherwise.
    #[default]
    Auto,
    /// Accumulate `ρ(θ)` over the full `nodes^d` tensor grid.
    Tensor,
    /// Use that the box prior and commuting encoding make every matrix
    /// element of `ρ(θ)` a product of one-dimensional phase factors.
    Separable,
}

/// `ρ`, `ρ̄ᵢ` and how they were integrated.
#[derive(Clone, Debug)]
pub struct AveragedStates {
    pub rho: HermitianOperator,
    pub rho_bar: Vec<HermitianOperator>,
    pub quadrature_nodes: usize,
    pub strategy: QuadratureStrategy,
}

/// Gauss-Legendre nodes on `[lo, hi]` with weights normalised to sum to 1,
/// sorted by node.
pub fn normalized_rule(nodes: usize, lo: f64, hi: f64) -> Vec<(f64, f64)> {
    let n = NonZeroUsize::new(nodes).expect("at least one node");
    let rule = GaussLegendre::new(n);
    let mut pairs: Vec<(f64, f64)> = rule
        .as_node_weight_pairs()
        .iter()
        .map(|&(x, w)| (0.5 * (lo + hi) + 0.5 * (hi - lo) * x, 0.5 * w))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs
}

pub fn averaged_states(model: &EstimationModel, nodes_per_dim: usize) -> Result<AveragedStates> {
    averaged_states_with(model, nodes_per_dim, QuadratureStrategy::Auto)
}

pub fn averaged_states_with(
    model: &EstimationModel,
    nodes_per_dim: usize,
    strategy: QuadratureStrategy,
) -> Result<AveragedStates> {
    if nodes_per_dim < 2 {
        return Err(Error::Precondition(format!(
            "need at least 2 quadrature nodes per dimension, got {nodes_per_dim}"
        )));
    }
    let d = model.num_params();
    let resolved = match strategy {
        QuadratureStrategy::Auto if d <= MAX_TENSOR_PARAMS => QuadratureStrategy::Tensor,
        QuadratureStrategy::Auto => QuadratureStrategy::Separable,
        s => s,
    };
    let rules: Vec<Vec<(f64, f64)>> = (0..d)
        .map(|i| {
            normalized_rule(
                nodes_per_dim,
                model.prior().lower(i),
                model.prior().upper(i),
            )
        })
        .collect();
    let partial = match resolved {
        QuadratureStrategy::Tensor => {
            let total = (nodes_per_dim as f64).powi(d as i32);
            if total > TENSOR_NODE_BUDGET {
                return Err(Error::Resource(format!(
                    "tensor quadrature needs {nodes_per_dim}^{d} = {total:.3e} nodes \
                     (budget {TENSOR_NODE_BUDGET:.0e}); use the separable strategy or fewer nodes"
                )));
            }
            tensor_accumulate(model, &rules)
        }
        _ => separable_accumulate(model, &rules),
    };
    let rho = HermitianOperator::symmetrize(model.from_encoding_basis(partial.rho));
    let rho_bar = partial
        .bars
        .into_iter()
        .map(|m| HermitianOperator::symmetrize(model.from_encoding_basis(m)))
        .collect();
    Ok(AveragedStates {
        rho,
        rho_bar,
        quadrature_nodes: nodes_per_dim,
        strategy: resolved,
    })
}

#[derive(Clone)]
struct Partial {
    rho: CMatrix,
    bars: Vec<CMatrix>,
}

impl Partial {
    fn zeros(dim: usize, d: usize) -> Self {
        Self {
            rho: CMatrix::zeros(dim, dim),
            bars: vec![CMatrix::zeros(dim, dim); d],
        }
    }
}

impl Add<&Partial> for &Partial {
    type Output = Partial;

    fn add(self, other: &Partial) -> Partial {
        Partial {
            rho: &self.rho + &other.rho,
            bars: self
                .bars
                .iter()
                .zip(&other.bars)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }
}

/// Full tensor-product accumulation in the encoding basis. The sum over the
/// last axis is taken once per matrix entry and reused at every node of the
/// remaining axes. Work is split by the first-axis node; partial sums are
/// combined with a fixed pairwise tree.
fn tensor_accumulate(model: &EstimationModel, rules: &[Vec<(f64, f64)>]) -> Partial {
    let d = rules.len();
    let dim = model.dim();
    let amps = model.encoded_amplitudes();
    let charges = model.charges();
    // tables[i][node][a] = exp(−i kᵢₐ xᵢ)
    let tables: Vec<Vec<Vec<Complex64>>> = rules
        .iter()
        .zip(charges)
        .map(|(rule, k)| {
            rule.iter()
                .map(|&(x, _)| {
                    k.iter()
                        .map(|&ka| Complex64::from_polar(1.0, -ka * x))
                        .collect()
                })
                .collect()
        })
        .collect();
    // upper triangle a ≤ b, row-major
    let pairs: Vec<(usize, usize)> = (0..dim)
        .flat_map(|a| (a..dim).map(move |b| (a, b)))
        .collect();
    let np = pairs.len();

    let last = d - 1;
    let mut inner0 = vec![Complex64::new(0.0, 0.0); np];
    let mut inner1 = vec![Complex64::new(0.0, 0.0); np];
    for (node, &(x, w)) in rules[last].iter().enumerate() {
        let t = &tables[last][node];
        for (p, &(a, b)) in pairs.iter().enumerate() {
            let z = t[a] * t[b].conj() * w;
            inner0[p] += z;
            inner1[p] += z * x;
        }
    }

    let outer_axes = last;
    let first_len = if outer_axes == 0 { 1 } else { rules[0].len() };
    let partials: Vec<Partial> = (0..first_len)
        .into_par_iter()
        .map(|first| {
            let mut rho = vec![Complex64::new(0.0, 0.0); np];
            let mut bars = vec![Complex64::new(0.0, 0.0); np * d];
            let mut idx = vec![0usize; outer_axes];
            if outer_axes > 0 {
                idx[0] = first;
            }
            let mut theta = vec![0.0; outer_axes];
            let mut u = vec![Complex64::new(0.0, 0.0); dim];
            'nodes: loop {
                let mut weight = 1.0;
                for i in 0..outer_axes {
                    let (x, w) = rules[i][idx[i]];
                    theta[i] = x;
                    weight *= w;
                }
                for (a, ua) in u.iter_mut().enumerate() {
                    let mut z = amps[a];
                    for i in 0..outer_axes {
                        z *= tables[i][idx[i]][a];
                    }
                    *ua = z;
                }
                for (p, &(a, b)) in pairs.iter().enumerate() {
                    let z = u[a] * u[b].conj() * weight;
                    let z0 = z * inner0[p];
                    rho[p] += z0;
                    for i in 0..outer_axes {
                        bars[i * np + p] += z0 * theta[i];
                    }
                    bars[last * np + p] += z * inner1[p];
                }
                // advance the odometer over axes 1..outer_axes
                let mut axis = outer_axes;
                loop {
                    if axis <= 1 {
                        break 'nodes;
                    }
                    axis -= 1;
                    idx[axis] += 1;
                    if idx[axis] < rules[axis].len() {
                        break;
                    }
                    idx[axis] = 0;
                }
            }
            let fill = |flat: &[Complex64]| {
                let mut m = CMatrix::zeros(dim, dim);
                for (&z, &(a, b)) in flat.iter().zip(&pairs) {
                    m[(a, b)] = z;
                    m[(b, a)] = z.conj();
                }
                m
            };
            Partial {
                rho: fill(&rho),
                bars: (0..d).map(|i| fill(&bars[i * np..(i + 1) * np])).collect(),
            }
        })
        .collect();
    pairwise_reduce(&partials).expect("at least one node")
}

/// Per-axis factorization: `⟨a|ρ(θ)|b⟩ = cₐc̄_b Πᵢ exp(−iΔᵢθᵢ)` with
/// `Δᵢ = kᵢₐ − kᵢ_b`, so each integral is a product of 1-D quadratures.
fn separable_accumulate(model: &EstimationModel, rules: &[Vec<(f64, f64)>]) -> Partial {
    let d = rules.len();
    let dim = model.dim();
    let amps = model.encoded_amplitudes();
    let charges = model.charges();

    let columns: Vec<Vec<(Complex64, Vec<Complex64>)>> = (0..dim)
        .into_par_iter()
        .map(|b| {
            (0..dim)
                .map(|a| {
                    let coeff = amps[a] * amps[b].conj();
                    let mut zeroth = Vec::with_capacity(d);
                    let mut first = Vec::with_capacity(d);
                    for (i, rule) in rules.iter().enumerate() {
                        let delta = charges[i][a] - charges[i][b];
                        let mut m0 = c64(0.0, 0.0);
                        let mut m1 = c64(0.0, 0.0);
                        for &(x, w) in rule {
                            let e = Complex64::from_polar(w, -delta * x);
                            m0 += e;
                            m1 += e * x;
                        }
                        zeroth.push(m0);
                        first.push(m1);
                    }
                    let rho = coeff * zeroth.iter().product::<Complex64>();
                    let bars = (0..d)
                        .map(|j| {
                            let mut z = coeff * first[j];
                            for (i, m0) in zeroth.iter().enumerate() {
                                if i != j {
                                    z *= m0;
                                }
                            }
                            z
                        })
                        .collect();
                    (rho, bars)
                })
                .collect()
        })
        .collect();

    let mut out = Partial::zeros(dim, d);
    for (b, col) in columns.into_iter().enumerate() {
        for (a, (rho, bars)) in col.into_iter().enumerate() {
            out.rho[(a, b)] = rho;
            for (j, z) in bars.into_iter().enumerate() {
                out.bars[j][(a, b)] = z;
            }
        }
    }
    out
}
