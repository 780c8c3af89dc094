//! Quantum estimators, the `𝒦` and `Σ_q` matrices, the scalar single-shot
//! bound and the quantum Cramér-Rao comparison.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

use crate::codec::{self, ComplexPair};
use crate::error::{Error, Result};
use crate::measurement::{check_compatibility, CompatibilityReport, Povm, DEFAULT_COMPAT_TOL};
use crate::models::EstimationModel;
use crate::moments::{
    averaged_states_with, prior_moments, AveragedStates, PriorMoments, QuadratureStrategy,
    DEFAULT_NODES,
};
use crate::operators::{CMatrix, HermitianOperator, SylvesterSolver, DEFAULT_NULL_TOL};

/// Largest projected Sylvester residual, relative to `max(1, ‖ρ̄ᵢ‖_F)`.
pub const RESIDUAL_TOL: f64 = 1e-8;

/// Relative tolerance of the `Σ_q ⪰ 0` check.
pub const PSD_TOL: f64 = 1e-10;

/// Outcomes with `Tr(E_m ρ)` below this are treated as impossible.
pub const ZERO_PROBABILITY: f64 = 1e-14;

/// Solved Bayesian quantum estimators `Sᵢ`.
#[derive(Clone, Debug)]
pub struct EstimatorSet {
    pub estimators: Vec<HermitianOperator>,
    pub support_rank: usize,
    pub support_projector: CMatrix,
    /// `‖P(Sᵢρ + ρSᵢ − 2ρ̄ᵢ)P‖_F`.
    pub residuals: Vec<f64>,
    pub null_tol: f64,
}

impl EstimatorSet {
    pub fn len(&self) -> usize {
        self.estimators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.estimators.is_empty()
    }
}

/// Solves `Sᵢρ + ρSᵢ = 2ρ̄ᵢ` for every parameter.
pub fn quantum_estimators(avg: &AveragedStates, null_tol: f64) -> Result<EstimatorSet> {
    let solver = SylvesterSolver::new(&avg.rho, null_tol)?;
    let mut estimators = Vec::with_capacity(avg.rho_bar.len());
    let mut residuals = Vec::with_capacity(avg.rho_bar.len());
    for (i, bar) in avg.rho_bar.iter().enumerate() {
        let s = solver.solve(bar)?;
        let r = solver.projected_residual(&s, bar);
        if r > RESIDUAL_TOL * bar.frobenius().max(1.0) {
            return Err(Error::Numerical(format!(
                "Sylvester residual for parameter {i} is {r:.3e}"
            )));
        }
        estimators.push(s);
        residuals.push(r);
    }
    Ok(EstimatorSet {
        estimators,
        support_rank: solver.support_rank(),
        support_projector: solver.support_projector(),
        residuals,
        null_tol,
    })
}

/// `𝒦ᵢⱼ = Tr[ρ(SᵢSⱼ + SⱼSᵢ)]/2`.
pub fn k_matrix(est: &EstimatorSet, rho: &HermitianOperator) -> DMatrix<f64> {
    let s = &est.estimators;
    let d = s.len();
    let rs: Vec<CMatrix> = s.iter().map(|si| rho.matrix() * si.matrix()).collect();
    let mut k = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in i..d {
            // Tr(ρSᵢSⱼ) + Tr(ρSⱼSᵢ) = 2 Re Tr(ρSᵢSⱼ)
            let v = (&rs[i] * s[j].matrix()).trace().re;
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

/// Eigenvalues of a real symmetric matrix, ascending.
pub fn symmetric_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut v: Vec<f64> = SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .copied()
        .collect();
    v.sort_by(f64::total_cmp);
    v
}

/// `Σ_q = ∫p θθᵀ − 𝒦`, checked to be PSD.
pub fn sigma_q(prior: &PriorMoments, kmat: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if kmat.shape() != prior.second_moment.shape() {
        return Err(Error::Inconsistency(format!(
            "𝒦 is {:?} but the prior has {} parameters",
            kmat.shape(),
            prior.mean.len()
        )));
    }
    let sq = &prior.second_moment - kmat;
    let ev = symmetric_eigenvalues(&sq);
    let scale = ev.last().copied().unwrap_or(0.0).max(
        symmetric_eigenvalues(&prior.second_moment)
            .last()
            .copied()
            .unwrap_or(0.0),
    );
    let min = ev.first().copied().unwrap_or(0.0);
    if min < -PSD_TOL * scale {
        return Err(Error::Numerical(format!(
            "Σ_q is not positive semidefinite: minimum eigenvalue {min:.3e} (scale {scale:.3e})"
        )));
    }
    Ok(sq)
}

/// `Tr(𝒲M)` for diagonal `𝒲 = diag(w)`.
pub fn weighted_trace(weights: &[f64], m: &DMatrix<f64>) -> f64 {
    weights.iter().enumerate().map(|(i, w)| w * m[(i, i)]).sum()
}

/// The scalar bound and its uncertainty-relation split.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScalarBound {
    /// `Σ wᵢ(∫p θᵢ² − Tr(ρSᵢ²))`.
    pub value: f64,
    /// `Σ wᵢ(Δθ²_{p,i} − ΔS²_{ρ,i})`.
    pub uncertainty_relation: f64,
    /// `Σ wᵢ Δθ²_{p,i}`.
    pub prior_term: f64,
    /// `Σ wᵢ ΔS²_{ρ,i}`.
    pub estimator_term: f64,
    pub prior_variances: Vec<f64>,
    /// `ΔS²_{ρ,i} = Tr(ρSᵢ²) − Tr(ρSᵢ)²`.
    pub estimator_variances: Vec<f64>,
    /// `Tr(ρSᵢ)`.
    pub estimator_means: Vec<f64>,
}

pub fn scalar_bound(
    weights: &[f64],
    prior: &PriorMoments,
    kmat: &DMatrix<f64>,
    est: &EstimatorSet,
    rho: &HermitianOperator,
) -> ScalarBound {
    let means: Vec<f64> = est
        .estimators
        .iter()
        .map(|s| s.trace_product(rho))
        .collect();
    let est_var: Vec<f64> = (0..weights.len())
        .map(|i| kmat[(i, i)] - means[i] * means[i])
        .collect();
    let value = weights
        .iter()
        .enumerate()
        .map(|(i, w)| w * (prior.second_moment[(i, i)] - kmat[(i, i)]))
        .sum();
    let prior_term = prior.weighted_variance(weights);
    let estimator_term: f64 = weights.iter().zip(&est_var).map(|(w, v)| w * v).sum();
    ScalarBound {
        value,
        uncertainty_relation: prior_term - estimator_term,
        prior_term,
        estimator_term,
        prior_variances: prior.variances.clone(),
        estimator_variances: est_var,
        estimator_means: means,
    }
}

/// Quantum Fisher information of the pure probe,
/// `F_ij = 4(⟨KᵢKⱼ⟩ − ⟨Kᵢ⟩⟨Kⱼ⟩)`.
pub fn qfim(model: &EstimationModel) -> DMatrix<f64> {
    let psi = model.probe();
    let k: Vec<_> = model
        .generators()
        .iter()
        .map(|g| g.matrix() * psi)
        .collect();
    let mean: Vec<f64> = model
        .generators()
        .iter()
        .map(|g| g.expectation(psi))
        .collect();
    let d = k.len();
    DMatrix::from_fn(d, d, |i, j| 4.0 * (k[i].dotc(&k[j]).re - mean[i] * mean[j]))
}

/// `Tr(𝒲F⁻¹)`, or `None` when `F` is singular.
pub fn crb_per_shot(weights: &[f64], f: &DMatrix<f64>) -> Option<f64> {
    let ev = symmetric_eigenvalues(f);
    let max = *ev.last()?;
    if max <= 0.0 || ev[0] <= 1e-12 * max {
        return None;
    }
    let inv = f.clone().try_inverse()?;
    Some(weighted_trace(weights, &inv))
}

/// `Σ_c = ∫p θθᵀ − Σ_m v_m v_mᵀ / Tr(E_m ρ)` with `v_{m,i} = Tr(E_m ρ̄ᵢ)`.
pub fn classical_matrix_error(
    prior: &PriorMoments,
    avg: &AveragedStates,
    povm: &Povm,
) -> Result<DMatrix<f64>> {
    let d = avg.rho_bar.len();
    if povm.dim() != avg.rho.dim() {
        return Err(Error::Povm(format!(
            "POVM acts on dimension {} but the model has dimension {}",
            povm.dim(),
            avg.rho.dim()
        )));
    }
    let mut gain = DMatrix::zeros(d, d);
    for (m, e) in povm.elements().iter().enumerate() {
        let p = e.trace_product(&avg.rho);
        let v: Vec<f64> = avg.rho_bar.iter().map(|b| e.trace_product(b)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if p < ZERO_PROBABILITY {
            if norm > 1e-10 {
                return Err(Error::Inconsistency(format!(
                    "outcome {m} has probability {p:.3e} but ‖v‖ = {norm:.3e}"
                )));
            }
            continue;
        }
        for i in 0..d {
            for j in 0..d {
                gain[(i, j)] += v[i] * v[j] / p;
            }
        }
    }
    Ok(&prior.second_moment - gain)
}

/// `f(N, n̄, d)` of the local imaging scheme, so that its bound is
/// `(π²/3 − f)/n̄²`.
pub fn local_imaging_f(big_n: f64, nbar: f64, d: f64) -> f64 {
    use std::f64::consts::PI;
    let x = big_n * PI / nbar;
    let a = big_n * PI * x.cos() - nbar * x.sin();
    4.0 * nbar.powi(3) * ((1.0 + d) * big_n - nbar) * a * a
        / (PI * PI * big_n.powi(6) * (1.0 + d).powi(2))
}

/// Numerical settings of [`analyze`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BoundOptions {
    pub nodes: usize,
    pub null_tol: f64,
    pub strategy: QuadratureStrategy,
}

impl Default for BoundOptions {
    fn default() -> Self {
        Self {
            nodes: DEFAULT_NODES,
            null_tol: DEFAULT_NULL_TOL,
            strategy: QuadratureStrategy::Auto,
        }
    }
}

/// Everything computed on the way to the bound.
#[derive(Clone, Debug)]
pub struct Analysis {
    pub moments: PriorMoments,
    pub averaged: AveragedStates,
    pub estimators: EstimatorSet,
    pub k_matrix: DMatrix<f64>,
    pub sigma_q: DMatrix<f64>,
    pub bound: ScalarBound,
    pub qfim: DMatrix<f64>,
    pub crb_per_shot: Option<f64>,
    pub compatibility: CompatibilityReport,
    pub weights: Vec<f64>,
}

/// Full bound pipeline for one model.
pub fn analyze(model: &EstimationModel, opts: &BoundOptions) -> Result<Analysis> {
    let moments = prior_moments(model.prior());
    let averaged = averaged_states_with(model, opts.nodes, opts.strategy)?;
    let estimators = quantum_estimators(&averaged, opts.null_tol)?;
    let kmat = k_matrix(&estimators, &averaged.rho);
    let sq = sigma_q(&moments, &kmat)?;
    let bound = scalar_bound(model.weights(), &moments, &kmat, &estimators, &averaged.rho);
    let f = qfim(model);
    let crb = crb_per_shot(model.weights(), &f);
    let compatibility = check_compatibility(&estimators, DEFAULT_COMPAT_TOL);
    Ok(Analysis {
        moments,
        averaged,
        estimators,
        k_matrix: kmat,
        sigma_q: sq,
        bound,
        qfim: f,
        crb_per_shot: crb,
        compatibility,
        weights: model.weights().to_vec(),
    })
}

impl Analysis {
    /// `Tr(𝒲Σ_c)` for `povm`.
    pub fn classical_score(&self, povm: &Povm) -> Result<f64> {
        let sc = classical_matrix_error(&self.moments, &self.averaged, povm)?;
        Ok(weighted_trace(&self.weights, &sc))
    }

    pub fn report(&self) -> BoundReport {
        BoundReport {
            scalar_bound: self.bound.value,
            uncertainty_relation: self.bound.clone(),
            k_matrix: rows(&self.k_matrix),
            sigma_q: rows(&self.sigma_q),
            prior_variances: self.moments.variances.clone(),
            estimator_variances: self.bound.estimator_variances.clone(),
            weights: self.weights.clone(),
            qfim: rows(&self.qfim),
            crb_per_shot: self.crb_per_shot,
            compatibility: self.compatibility.clone(),
            support_rank: self.estimators.support_rank,
            sylvester_residuals: self.estimators.residuals.clone(),
            quadrature_nodes: self.averaged.quadrature_nodes,
            quadrature_strategy: self.averaged.strategy,
            estimators: self
                .estimators
                .estimators
                .iter()
                .map(|s| codec::matrix_to_grid(s.matrix()))
                .collect(),
        }
    }
}

/// Serializable summary of an [`Analysis`].
#[derive(Clone, Debug, Serialize)]
pub struct BoundReport {
    pub scalar_bound: f64,
    pub uncertainty_relation: ScalarBound,
    pub k_matrix: Vec<Vec<f64>>,
    pub sigma_q: Vec<Vec<f64>>,
    pub prior_variances: Vec<f64>,
    pub estimator_variances: Vec<f64>,
    pub weights: Vec<f64>,
    pub qfim: Vec<Vec<f64>>,
    /// `Tr(𝒲F⁻¹)`; `None` when the QFIM is singular.
    pub crb_per_shot: Option<f64>,
    pub compatibility: CompatibilityReport,
    pub support_rank: usize,
    pub sylvester_residuals: Vec<f64>,
    pub quadrature_nodes: usize,
    pub quadrature_strategy: QuadratureStrategy,
    pub estimators: Vec<Vec<Vec<ComplexPair>>>,
}

pub fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}
