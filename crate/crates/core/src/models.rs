//! Estimation problems: flat prior, pure probe, commuting phase encoding
//! `U(θ) = exp(−i Σ Kᵢθᵢ)` and per-parameter weights.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::codec::{self, ComplexPair};
use crate::error::{Error, Result};
use crate::operators::{
    c64, common_eigenbasis, commutator_norm, kron, kron_vec, offdiagonal_norm, CMatrix, CVector,
    HermitianOperator,
};

pub const MODEL_FORMAT: &str = "bayesmet-model-v1";

const PROBE_NORM_TOL: f64 = 1e-10;
const WEIGHT_SUM_TOL: f64 = 1e-12;
const COMMUTATION_TOL: f64 = 1e-10;

/// Smallest mean photon number for which the imaging prior `(2π/n̄)^d`
/// avoids the NOON-state phase ambiguity.
pub const MIN_IMAGING_NBAR: u32 = 4;

/// Uniform density on the box `center ± halfwidth`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlatPrior {
    center: Vec<f64>,
    halfwidth: Vec<f64>,
}

impl FlatPrior {
    pub fn new(center: Vec<f64>, halfwidth: Vec<f64>) -> Result<Self> {
        if center.is_empty() {
            return Err(Error::Model("prior needs at least one parameter".into()));
        }
        if center.len() != halfwidth.len() {
            return Err(Error::Model(format!(
                "prior center has {} entries but halfwidth has {}",
                center.len(),
                halfwidth.len()
            )));
        }
        if let Some(i) = center.iter().position(|c| !c.is_finite()) {
            return Err(Error::Model(format!("prior center[{i}] is not finite")));
        }
        if let Some(i) = halfwidth.iter().position(|&h| !(h > 0.0 && h.is_finite())) {
            return Err(Error::Model(format!(
                "prior halfwidth[{i}] = {} must be positive and finite",
                halfwidth[i]
            )));
        }
        Ok(Self { center, halfwidth })
    }

    /// Box `[−halfwidth, halfwidth]^d`.
    pub fn centered(d: usize, halfwidth: f64) -> Result<Self> {
        Self::new(vec![0.0; d], vec![halfwidth; d])
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn halfwidth(&self) -> &[f64] {
        &self.halfwidth
    }

    pub fn lower(&self, i: usize) -> f64 {
        self.center[i] - self.halfwidth[i]
    }

    pub fn upper(&self, i: usize) -> f64 {
        self.center[i] + self.halfwidth[i]
    }

    pub fn volume(&self) -> f64 {
        self.halfwidth.iter().map(|h| 2.0 * h).product()
    }

    /// `1/Π(2·halfwidthᵢ)` inside the box, zero outside.
    pub fn density(&self, theta: &[f64]) -> f64 {
        if self.contains(theta) {
            1.0 / self.volume()
        } else {
            0.0
        }
    }

    pub fn contains(&self, theta: &[f64]) -> bool {
        theta.len() == self.dim()
            && (0..self.dim()).all(|i| theta[i] >= self.lower(i) && theta[i] <= self.upper(i))
    }

    /// Maps `u ∈ [0,1]^d` onto the box (inverse CDF of the flat density).
    pub fn from_unit(&self, u: &[f64]) -> Vec<f64> {
        (0..self.dim())
            .map(|i| self.lower(i) + 2.0 * self.halfwidth[i] * u[i])
            .collect()
    }
}

/// Generators expressed in a basis where they are all diagonal.
#[derive(Clone, Debug)]
struct Encoding {
    /// `None` when every generator is already diagonal.
    basis: Option<CMatrix>,
    /// `charges[i][a]`: eigenvalue of generator `i` on basis vector `a`.
    charges: Vec<Vec<f64>>,
    /// Probe amplitudes in that basis.
    amplitudes: CVector,
}

/// A complete estimation problem.
#[derive(Clone, Debug)]
pub struct EstimationModel {
    prior: FlatPrior,
    probe: CVector,
    generators: Vec<HermitianOperator>,
    weights: Vec<f64>,
    labels: Vec<String>,
    encoding: Encoding,
}

impl EstimationModel {
    /// Validates every model invariant and precomputes the joint eigenbasis
    /// of the generators.
    pub fn new(
        prior: FlatPrior,
        probe: CVector,
        generators: Vec<HermitianOperator>,
        weights: Vec<f64>,
        labels: Vec<String>,
    ) -> Result<Self> {
        let d = prior.dim();
        let dim = probe.len();
        if dim == 0 {
            return Err(Error::Model("probe state is empty".into()));
        }
        if labels.len() != dim {
            return Err(Error::Model(format!(
                "{} labels given for a {dim}-dimensional probe",
                labels.len()
            )));
        }
        let norm = probe.norm();
        if (norm - 1.0).abs() > PROBE_NORM_TOL {
            return Err(Error::Model(format!(
                "probe norm is {norm:.12}, expected 1"
            )));
        }
        if generators.len() != d {
            return Err(Error::Model(format!(
                "{} generators given for {d} parameters",
                generators.len()
            )));
        }
        if let Some(i) = generators.iter().position(|g| g.dim() != dim) {
            return Err(Error::Model(format!(
                "generator {i} has dimension {} but the probe has dimension {dim}",
                generators[i].dim()
            )));
        }
        if weights.len() != d {
            return Err(Error::Model(format!(
                "{} weights given for {d} parameters",
                weights.len()
            )));
        }
        if let Some(i) = weights.iter().position(|&w| !(w >= 0.0 && w.is_finite())) {
            return Err(Error::Model(format!(
                "weight {i} = {} is negative",
                weights[i]
            )));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::Model(format!("weights sum to {total}, expected 1")));
        }
        for i in 0..d {
            for j in (i + 1)..d {
                let c = commutator_norm(generators[i].matrix(), generators[j].matrix());
                let scale = (generators[i].frobenius() * generators[j].frobenius()).max(1.0);
                if c > COMMUTATION_TOL * scale {
                    return Err(Error::Model(format!(
                        "generators {i} and {j} do not commute: ‖[K{i},K{j}]‖_F = {c:.6e}"
                    )));
                }
            }
        }
        let encoding = Encoding::build(&generators, &probe)?;
        Ok(Self {
            prior,
            probe,
            generators,
            weights,
            labels,
            encoding,
        })
    }

    pub fn prior(&self) -> &FlatPrior {
        &self.prior
    }

    pub fn probe(&self) -> &CVector {
        &self.probe
    }

    pub fn generators(&self) -> &[HermitianOperator] {
        &self.generators
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Number of parameters `d`.
    pub fn num_params(&self) -> usize {
        self.prior.dim()
    }

    /// Hilbert-space dimension `D`.
    pub fn dim(&self) -> usize {
        self.probe.len()
    }

    /// Same model with a different prior (same parameter count).
    pub fn with_prior(&self, prior: FlatPrior) -> Result<Self> {
        Self::new(
            prior,
            self.probe.clone(),
            self.generators.clone(),
            self.weights.clone(),
            self.labels.clone(),
        )
    }

    /// Same model with different weights.
    pub fn with_weights(&self, weights: Vec<f64>) -> Result<Self> {
        Self::new(
            self.prior.clone(),
            self.probe.clone(),
            self.generators.clone(),
            weights,
            self.labels.clone(),
        )
    }

    /// Eigenvalues of each generator in the encoding basis, `[i][a]`.
    pub fn charges(&self) -> &[Vec<f64>] {
        &self.encoding.charges
    }

    /// Probe amplitudes in the encoding basis.
    pub fn encoded_amplitudes(&self) -> &CVector {
        &self.encoding.amplitudes
    }

    /// Maps an operator from the encoding basis back to the model basis.
    pub fn from_encoding_basis(&self, m: CMatrix) -> CMatrix {
        match &self.encoding.basis {
            Some(v) => v * m * v.adjoint(),
            None => m,
        }
    }

    /// `U(θ)|ψ₀⟩`.
    pub fn evolved_state(&self, theta: &[f64]) -> CVector {
        let enc = &self.encoding;
        let rotated = CVector::from_fn(self.dim(), |a, _| {
            let phase: f64 = enc.charges.iter().zip(theta).map(|(k, t)| k[a] * t).sum();
            enc.amplitudes[a] * Complex::from_polar(1.0, -phase)
        });
        match &enc.basis {
            Some(v) => v * rotated,
            None => rotated,
        }
    }

    /// `ρ(θ) = U(θ)|ψ₀⟩⟨ψ₀|U†(θ)`.
    pub fn evolve(&self, theta: &[f64]) -> HermitianOperator {
        HermitianOperator::projector(&self.evolved_state(theta))
    }

    /// Entrywise comparison of every field.
    pub fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        let close = |a: &[f64], b: &[f64]| {
            a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
        };
        let close_c = |a: &CMatrix, b: &CMatrix| {
            a.shape() == b.shape() && a.iter().zip(b.iter()).all(|(x, y)| (x - y).norm() <= tol)
        };
        close(self.prior.center(), other.prior.center())
            && close(self.prior.halfwidth(), other.prior.halfwidth())
            && close(&self.weights, &other.weights)
            && self.labels == other.labels
            && self.probe.len() == other.probe.len()
            && self
                .probe
                .iter()
                .zip(other.probe.iter())
                .all(|(x, y)| (x - y).norm() <= tol)
            && self.generators.len() == other.generators.len()
            && self
                .generators
                .iter()
                .zip(&other.generators)
                .all(|(a, b)| close_c(a.matrix(), b.matrix()))
    }
}

type Complex = num_complex::Complex64;

impl Encoding {
    fn build(generators: &[HermitianOperator], probe: &CVector) -> Result<Self> {
        let diagonal = generators
            .iter()
            .all(|g| offdiagonal_norm(g.matrix()) <= 1e-14 * g.frobenius().max(1.0));
        let basis = if diagonal {
            None
        } else {
            let refs: Vec<&HermitianOperator> = generators.iter().collect();
            Some(common_eigenbasis(&refs, 0, COMMUTATION_TOL).map_err(|e| {
                Error::Model(format!("generators could not be diagonalized jointly: {e}"))
            })?)
        };
        let charges = generators
            .iter()
            .map(|g| {
                let m = match &basis {
                    Some(v) => v.adjoint() * g.matrix() * v,
                    None => g.matrix().clone(),
                };
                (0..m.nrows()).map(|a| m[(a, a)].re).collect()
            })
            .collect();
        let amplitudes = match &basis {
            Some(v) => v.adjoint() * probe,
            None => probe.clone(),
        };
        Ok(Self {
            basis,
            charges,
            amplitudes,
        })
    }
}

fn normalized(v: Vec<Complex>) -> CVector {
    let v = CVector::from_vec(v);
    let n = v.norm();
    v / c64(n, 0.0)
}

/// Two-qubit sensing network
/// `|ψ₀⟩ = [|00⟩ + γ(|01⟩ + |10⟩) + |11⟩]/√(2(1+γ²))` with
/// `U = exp[−i(σ_z⊗I θ₁ + I⊗σ_z θ₂)/2]`, prior `[−π/4, π/4]²` and equal weights.
pub fn preset_qubit_network(gamma: f64) -> Result<EstimationModel> {
    if !gamma.is_finite() {
        return Err(Error::Precondition(format!(
            "gamma must be finite, got {gamma}"
        )));
    }
    let probe = normalized(vec![
        c64(1., 0.),
        c64(gamma, 0.),
        c64(gamma, 0.),
        c64(1., 0.),
    ]);
    let half_z = crate::operators::pauli::z() * c64(0.5, 0.);
    let id = crate::operators::pauli::identity();
    let generators = vec![
        HermitianOperator::new(kron(&half_z, &id))?,
        HermitianOperator::new(kron(&id, &half_z))?,
    ];
    EstimationModel::new(
        FlatPrior::centered(2, PI / 4.0)?,
        probe,
        generators,
        vec![0.5, 0.5],
        ["|00>", "|01>", "|10>", "|11>"].map(String::from).to_vec(),
    )
}

fn check_imaging_nbar(nbar: u32, allow_wide_prior: bool) -> Result<()> {
    if nbar == 0 {
        return Err(Error::Precondition("nbar must be at least 1".into()));
    }
    if nbar < MIN_IMAGING_NBAR && !allow_wide_prior {
        return Err(Error::Precondition(format!(
            "nbar = {nbar} < {MIN_IMAGING_NBAR}: the prior width 2π/nbar would exceed the \
             π/2 phase-ambiguity window of the probe; pass allow_wide_prior to override"
        )));
    }
    Ok(())
}

fn global_imaging_with_prior(
    d: usize,
    nbar: u32,
    alpha: f64,
    prior: FlatPrior,
) -> Result<EstimationModel> {
    if d == 0 {
        return Err(Error::Precondition("imaging needs d ≥ 1 phases".into()));
    }
    if !alpha.is_finite() {
        return Err(Error::Precondition(format!(
            "alpha must be finite, got {alpha}"
        )));
    }
    let dim = d + 1;
    let mut amps = vec![c64(1.0, 0.0); dim];
    amps[0] = c64(alpha, 0.0);
    let probe = normalized(amps);
    let generators = (1..=d)
        .map(|k| {
            let mut diag = vec![0.0; dim];
            diag[k] = f64::from(nbar);
            HermitianOperator::from_real_diagonal(&diag)
        })
        .collect();
    let labels = (0..dim)
        .map(|j| {
            let occ: Vec<String> = (0..dim)
                .map(|m| if m == j { nbar.to_string() } else { "0".into() })
                .collect();
            format!("|{}>", occ.join(","))
        })
        .collect();
    EstimationModel::new(prior, probe, generators, vec![1.0 / d as f64; d], labels)
}

/// Generalised NOON state `(α|n̄₀⟩ + Σₖ|n̄ₖ⟩)/√(d+α²)` over `d+1` modes,
/// restricted to the span of `{|n̄₀⟩, …, |n̄_d⟩}` so `Nₖ = n̄|n̄ₖ⟩⟨n̄ₖ|`.
/// Prior `[−π/n̄, π/n̄]^d`, weights `1/d`.
pub fn preset_global_imaging(
    d: usize,
    nbar: u32,
    alpha: f64,
    allow_wide_prior: bool,
) -> Result<EstimationModel> {
    check_imaging_nbar(nbar, allow_wide_prior)?;
    let prior = FlatPrior::centered(d.max(1), PI / f64::from(nbar))?;
    global_imaging_with_prior(d, nbar, alpha, prior)
}

/// Balanced two-phase NOON probe (`d = 2`, `n̄ = 2`, `α = 1`) under the
/// qubit-network prior `[−π/4, π/4]²`, used to benchmark trial projectors.
pub fn preset_two_phase_imaging() -> Result<EstimationModel> {
    global_imaging_with_prior(2, 2, 1.0, FlatPrior::centered(2, PI / 4.0)?)
}

/// Amplitude `n̄/(N(d+1))` of `|N⟩` in each local probe mode.
fn local_amplitude(d: usize, nbar: u32, big_n: u32) -> Result<f64> {
    if d == 0 || big_n == 0 {
        return Err(Error::Precondition(
            "local imaging needs d ≥ 1 and N ≥ 1".into(),
        ));
    }
    let q = f64::from(nbar) / (f64::from(big_n) * (d as f64 + 1.0));
    if q > 1.0 {
        return Err(Error::Precondition(format!(
            "nbar/(N(d+1)) = {q} exceeds 1; increase N"
        )));
    }
    Ok(q)
}

fn local_mode_state(q: f64) -> CVector {
    CVector::from_vec(vec![c64((1.0 - q).sqrt(), 0.0), c64(q.sqrt(), 0.0)])
}

/// Local scheme: product of `√(1 − n̄/(N(d+1)))|0⟩ + √(n̄/(N(d+1)))|N⟩`
/// over the `d` signal modes (the calibrated reference mode is dropped).
/// Each mode's basis is `{|0⟩, |N⟩}` and its generator `N|N⟩⟨N|`.
pub fn preset_local_imaging(
    d: usize,
    nbar: u32,
    big_n: u32,
    allow_wide_prior: bool,
) -> Result<EstimationModel> {
    check_imaging_nbar(nbar, allow_wide_prior)?;
    let q = local_amplitude(d, nbar, big_n)?;
    let mode = local_mode_state(q);
    let zero_n = HermitianOperator::from_real_diagonal(&[0.0, f64::from(big_n)]);
    let id = CMatrix::identity(2, 2);
    let mut probe = CVector::from_element(1, c64(1.0, 0.0));
    for _ in 0..d {
        probe = kron_vec(&probe, &mode);
    }
    let generators = (0..d)
        .map(|k| {
            let mut g = CMatrix::identity(1, 1);
            for m in 0..d {
                g = kron(&g, if m == k { zero_n.matrix() } else { &id });
            }
            HermitianOperator::new(g)
        })
        .collect::<Result<Vec<_>>>()?;
    let dim = 1usize << d;
    let labels = (0..dim)
        .map(|idx| {
            let occ: Vec<String> = (0..d)
                .map(|m| {
                    if (idx >> (d - 1 - m)) & 1 == 1 {
                        big_n.to_string()
                    } else {
                        "0".into()
                    }
                })
                .collect();
            format!("|{}>", occ.join(","))
        })
        .collect();
    EstimationModel::new(
        FlatPrior::centered(d, PI / f64::from(nbar))?,
        probe,
        generators,
        vec![1.0 / d as f64; d],
        labels,
    )
}

/// A single signal mode of [`preset_local_imaging`] as a one-parameter model.
///
/// Product prior, probe and measurement make the `d`-mode problem separate
/// into `d` copies of this one.
pub fn local_imaging_mode(
    d: usize,
    nbar: u32,
    big_n: u32,
    allow_wide_prior: bool,
) -> Result<EstimationModel> {
    check_imaging_nbar(nbar, allow_wide_prior)?;
    let q = local_amplitude(d, nbar, big_n)?;
    EstimationModel::new(
        FlatPrior::centered(1, PI / f64::from(nbar))?,
        local_mode_state(q),
        vec![HermitianOperator::from_real_diagonal(&[
            0.0,
            f64::from(big_n),
        ])],
        vec![1.0],
        vec!["|0>".into(), format!("|{big_n}>")],
    )
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PriorSpec {
    center: Vec<f64>,
    halfwidth: Vec<f64>,
}

/// On-disk layout of a model (`"format": "bayesmet-model-v1"`).
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    format: String,
    prior: PriorSpec,
    probe: Vec<ComplexPair>,
    generators: Vec<Vec<Vec<ComplexPair>>>,
    weights: Vec<f64>,
    labels: Vec<String>,
}

/// Parses a model from JSON text; `origin` prefixes error messages.
pub fn parse_model(text: &str, origin: &str) -> Result<EstimationModel> {
    let file: ModelFile = codec::from_json_str(text, origin)?;
    codec::check_format(&file.format, MODEL_FORMAT, origin)?;
    let prior = FlatPrior::new(file.prior.center, file.prior.halfwidth)
        .map_err(|e| Error::Model(format!("{origin}: prior: {e}")))?;
    let generators = file
        .generators
        .iter()
        .enumerate()
        .map(|(i, grid)| {
            let what = format!("{origin}: generators[{i}]");
            let m = codec::grid_to_matrix(grid, &what)?;
            HermitianOperator::new(m).map_err(|e| Error::Model(format!("{what}: {e}")))
        })
        .collect::<Result<Vec<_>>>()?;
    EstimationModel::new(
        prior,
        codec::pairs_to_vector(&file.probe),
        generators,
        file.weights,
        file.labels,
    )
    .map_err(|e| match e {
        Error::Model(msg) => Error::Model(format!("{origin}: {msg}")),
        other => other,
    })
}

pub fn load_model(path: &Path) -> Result<EstimationModel> {
    let text = codec::read_text(path)?;
    parse_model(&text, &path.display().to_string())
}

pub fn model_to_json(model: &EstimationModel) -> String {
    let file = ModelFile {
        format: MODEL_FORMAT.into(),
        prior: PriorSpec {
            center: model.prior.center.clone(),
            halfwidth: model.prior.halfwidth.clone(),
        },
        probe: codec::vector_to_pairs(&model.probe),
        generators: model
            .generators
            .iter()
            .map(|g| codec::matrix_to_grid(g.matrix()))
            .collect(),
        weights: model.weights.clone(),
        labels: model.labels.clone(),
    };
    serde_json::to_string_pretty(&file).expect("model serialization cannot fail")
}

pub fn save_model(model: &EstimationModel, path: &Path) -> Result<()> {
    codec::write_text(path, &model_to_json(model))
}
