//! Measurements: compatibility of the quantum estimators, the optimal
//! projective measurement built from their common eigenbasis, and
//! validation/completion of user-supplied POVMs.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bound::EstimatorSet;
use crate::codec::{self, ComplexPair};
use crate::error::{Error, Result};
use crate::operators::{
    c64, common_eigenbasis, commutator_norm, diagonalization_defect, CMatrix, CVector,
    HermitianOperator,
};

pub const POVM_FORMAT: &str = "bayesmet-povm-v1";

/// Largest PSD or completeness violation a POVM may carry.
pub const POVM_TOL: f64 = 1e-8;

/// Default relative tolerance of [`check_compatibility`].
pub const DEFAULT_COMPAT_TOL: f64 = 1e-10;

/// Off-diagonal residual accepted when diagonalizing the estimators jointly.
pub const DIAGONALIZATION_TOL: f64 = 1e-9;

/// Finite POVM `{E_m}` with one label per outcome.
#[derive(Clone, Debug)]
pub struct Povm {
    elements: Vec<HermitianOperator>,
    labels: Vec<String>,
}

impl Povm {
    /// Builds a POVM, rejecting elements that are not PSD or do not sum to
    /// the identity within [`POVM_TOL`].
    pub fn new(elements: Vec<HermitianOperator>, labels: Vec<String>) -> Result<Self> {
        if elements.is_empty() {
            return Err(Error::Povm("a POVM needs at least one element".into()));
        }
        if labels.len() != elements.len() {
            return Err(Error::Povm(format!(
                "{} labels for {} elements",
                labels.len(),
                elements.len()
            )));
        }
        let dim = elements[0].dim();
        validate_povm(&elements, dim).into_result()?;
        Ok(Self { elements, labels })
    }

    /// POVM with labels `m0, m1, …`.
    pub fn unlabelled(elements: Vec<HermitianOperator>) -> Result<Self> {
        let labels = (0..elements.len()).map(|m| format!("m{m}")).collect();
        Self::new(elements, labels)
    }

    /// The single-outcome measurement `{I}`.
    pub fn trivial(dim: usize) -> Self {
        Self {
            elements: vec![HermitianOperator::identity(dim)],
            labels: vec!["I".into()],
        }
    }

    /// Rank-one projective measurement onto the columns of a unitary.
    pub fn from_basis(basis: &CMatrix) -> Result<Self> {
        let elements = (0..basis.ncols())
            .map(|k| HermitianOperator::projector(&basis.column(k).into_owned()))
            .collect();
        Self::unlabelled(elements)
    }

    pub fn elements(&self) -> &[HermitianOperator] {
        &self.elements
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.elements[0].dim()
    }

    /// Born probabilities `Tr(E_m ρ)`.
    pub fn probabilities(&self, rho: &HermitianOperator) -> Vec<f64> {
        self.elements.iter().map(|e| e.trace_product(rho)).collect()
    }
}

/// Outcome of [`validate_povm`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PovmValidation {
    pub valid: bool,
    /// `max(0, −min eigenvalue)` over all elements.
    pub max_negativity: f64,
    /// Element attaining `max_negativity`.
    pub worst_element: Option<usize>,
    /// `‖I − Σ E_m‖_F`.
    pub completeness_error: f64,
    pub dimension_mismatch: Option<usize>,
}

impl PovmValidation {
    pub fn into_result(self) -> Result<()> {
        if let Some(m) = self.dimension_mismatch {
            return Err(Error::Povm(format!("element {m} has the wrong dimension")));
        }
        if self.max_negativity > POVM_TOL {
            return Err(Error::Povm(format!(
                "element {} is not positive semidefinite (eigenvalue {:.3e})",
                self.worst_element.unwrap_or(0),
                -self.max_negativity
            )));
        }
        if self.completeness_error > POVM_TOL {
            return Err(Error::Povm(format!(
                "elements do not sum to the identity: ‖I − ΣE‖_F = {:.3e}",
                self.completeness_error
            )));
        }
        Ok(())
    }
}

/// Checks positivity and completeness of `elements` on a `dim`-dimensional
/// space.
pub fn validate_povm(elements: &[HermitianOperator], dim: usize) -> PovmValidation {
    let mut report = PovmValidation {
        valid: false,
        max_negativity: 0.0,
        worst_element: None,
        completeness_error: 0.0,
        dimension_mismatch: None,
    };
    let mut total = CMatrix::zeros(dim, dim);
    for (m, e) in elements.iter().enumerate() {
        if e.dim() != dim {
            report.dimension_mismatch = Some(m);
            return report;
        }
        let neg = (-e.min_eigenvalue()).max(0.0);
        if neg > report.max_negativity {
            report.max_negativity = neg;
            report.worst_element = Some(m);
        }
        total += e.matrix();
    }
    report.completeness_error = crate::operators::frobenius(&(CMatrix::identity(dim, dim) - total));
    report.valid = report.max_negativity <= POVM_TOL && report.completeness_error <= POVM_TOL;
    report
}

/// Pairwise commutator norms of the estimators.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CompatibilityReport {
    /// `‖[Sᵢ, Sⱼ]‖_F`.
    pub pairwise_norms: Vec<Vec<f64>>,
    pub compatible: bool,
    pub tolerance_used: f64,
}

/// Compatible when every `‖[Sᵢ,Sⱼ]‖_F ≤ rel_tol·‖Sᵢ‖_F‖Sⱼ‖_F`.
pub fn check_compatibility(est: &EstimatorSet, rel_tol: f64) -> CompatibilityReport {
    let s = &est.estimators;
    let d = s.len();
    let mut norms = vec![vec![0.0; d]; d];
    let mut compatible = true;
    for i in 0..d {
        for j in (i + 1)..d {
            let c = commutator_norm(s[i].matrix(), s[j].matrix());
            norms[i][j] = c;
            norms[j][i] = c;
            if c > rel_tol * s[i].frobenius() * s[j].frobenius() {
                compatible = false;
            }
        }
    }
    CompatibilityReport {
        pairwise_norms: norms,
        compatible,
        tolerance_used: rel_tol,
    }
}

/// Projective measurement onto the common eigenvectors of the estimators.
///
/// Eigenvectors lying in the null space of `ρ` are merged into a single
/// element labelled `null`. Other outcomes are labelled by the tuple of
/// estimator eigenvalues.
pub fn common_eigenbasis_povm(est: &EstimatorSet) -> Result<Povm> {
    let report = check_compatibility(est, DEFAULT_COMPAT_TOL);
    if !report.compatible {
        let worst = report
            .pairwise_norms
            .iter()
            .flatten()
            .fold(0.0_f64, |a, &b| a.max(b));
        return Err(Error::Incompatible(format!(
            "the quantum estimators do not commute (largest ‖[Sᵢ,Sⱼ]‖_F = {worst:.3e}); \
             no optimal projective measurement exists, supply a POVM instead"
        )));
    }
    let support = HermitianOperator::symmetrize(est.support_projector.clone());
    let mut ops: Vec<&HermitianOperator> = est.estimators.iter().collect();
    let full_rank = est.support_rank == support.dim();
    if !full_rank {
        ops.push(&support);
    }
    let basis = common_eigenbasis(&ops, 0, DIAGONALIZATION_TOL)?;
    let defect = diagonalization_defect(&ops, &basis);
    if defect > 1e-8 {
        return Err(Error::Numerical(format!(
            "joint diagonalization residual {defect:.3e} exceeds 1e-8"
        )));
    }
    let dim = support.dim();
    let mut elements = Vec::new();
    let mut labels = Vec::new();
    let mut null = CMatrix::zeros(dim, dim);
    let mut has_null = false;
    for k in 0..dim {
        let v: CVector = basis.column(k).into_owned();
        if !full_rank && support.expectation(&v) < 0.5 {
            null += &v * v.adjoint();
            has_null = true;
            continue;
        }
        let values: Vec<String> = est
            .estimators
            .iter()
            .map(|s| format!("{:+.6}", s.expectation(&v)))
            .collect();
        labels.push(format!("({})", values.join(",")));
        elements.push(HermitianOperator::projector(&v));
    }
    if has_null {
        elements.push(HermitianOperator::symmetrize(null));
        labels.push("null".into());
    }
    Povm::new(elements, labels)
}

/// How an incomplete list of positive elements is turned into a POVM.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Completion {
    /// Append `I − ΣE`. If that residual is not PSD, the elements are first
    /// scaled by `1/λ_max(ΣE)` so that it becomes PSD.
    #[default]
    Residual,
    /// Replace each element by `G^{-1/2} E G^{-1/2}` with `G = ΣE`.
    Renormalize,
}

impl std::fmt::Display for Completion {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Completion::Residual => "residual",
            Completion::Renormalize => "renormalize",
        })
    }
}

impl std::str::FromStr for Completion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "residual" => Ok(Completion::Residual),
            "renormalize" => Ok(Completion::Renormalize),
            other => Err(Error::Parse(format!(
                "unknown completion `{other}` (expected residual or renormalize)"
            ))),
        }
    }
}

/// What [`complete_povm`] had to do.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CompletionRecord {
    pub convention: Completion,
    /// `false` when the input already summed to the identity.
    pub applied: bool,
    /// `‖I − ΣE‖_F` of the input.
    pub input_defect: f64,
    /// Smallest eigenvalue of `I − ΣE` for the input.
    pub residual_min_eigenvalue: f64,
    /// Factor applied to every input element (residual convention only).
    pub scale: f64,
    /// Whether a residual element was appended.
    pub residual_appended: bool,
}

/// Completes positive `elements` into a POVM.
pub fn complete_povm(
    elements: Vec<HermitianOperator>,
    labels: Vec<String>,
    convention: Completion,
) -> Result<(Povm, CompletionRecord)> {
    let dim = elements
        .first()
        .map(|e| e.dim())
        .ok_or_else(|| Error::Povm("a POVM needs at least one element".into()))?;
    let check = validate_povm(&elements, dim);
    if let Some(m) = check.dimension_mismatch {
        return Err(Error::Povm(format!("element {m} has the wrong dimension")));
    }
    if check.max_negativity > POVM_TOL {
        return Err(Error::Povm(format!(
            "element {} is not positive semidefinite (eigenvalue {:.3e})",
            check.worst_element.unwrap_or(0),
            -check.max_negativity
        )));
    }
    let mut total = CMatrix::zeros(dim, dim);
    for e in &elements {
        total += e.matrix();
    }
    let total = HermitianOperator::symmetrize(total);
    let residual = HermitianOperator::symmetrize(CMatrix::identity(dim, dim) - total.matrix());
    let mut record = CompletionRecord {
        convention,
        applied: false,
        input_defect: check.completeness_error,
        residual_min_eigenvalue: residual.min_eigenvalue(),
        scale: 1.0,
        residual_appended: false,
    };
    if check.completeness_error <= POVM_TOL {
        return Ok((Povm::new(elements, labels)?, record));
    }
    record.applied = true;
    let povm = match convention {
        Completion::Residual => {
            let eig = total.eig();
            let top = *eig.eigenvalues.last().expect("non-empty");
            let scale = if residual.min_eigenvalue() < -POVM_TOL {
                1.0 / top
            } else {
                1.0
            };
            record.scale = scale;
            let mut elements: Vec<HermitianOperator> = elements
                .into_iter()
                .map(|e| HermitianOperator::symmetrize(e.into_matrix() * c64(scale, 0.0)))
                .collect();
            let mut labels = labels;
            let rest = HermitianOperator::symmetrize(
                CMatrix::identity(dim, dim) - total.matrix() * c64(scale, 0.0),
            );
            if rest.frobenius() > POVM_TOL {
                elements.push(rest);
                labels.push("residual".into());
                record.residual_appended = true;
            }
            Povm::new(elements, labels)?
        }
        Completion::Renormalize => {
            let eig = total.eig();
            if eig.eigenvalues[0] <= 1e-12 {
                return Err(Error::Povm(format!(
                    "cannot renormalize: ΣE is singular (smallest eigenvalue {:.3e})",
                    eig.eigenvalues[0]
                )));
            }
            let mut inv_sqrt = CMatrix::zeros(dim, dim);
            for (k, &p) in eig.eigenvalues.iter().enumerate() {
                let v = eig.eigenvector(k);
                inv_sqrt += (&v * v.adjoint()) * c64(1.0 / p.sqrt(), 0.0);
            }
            let elements = elements
                .into_iter()
                .map(|e| HermitianOperator::symmetrize(&inv_sqrt * e.matrix() * &inv_sqrt))
                .collect();
            Povm::new(elements, labels)?
        }
    };
    Ok((povm, record))
}

/// The three trial kets for the two-parameter imaging example, in the basis
/// `|2,0,0⟩, |0,2,0⟩, |0,0,2⟩`.
///
/// They are published as bras; the kets here are their conjugates.
pub fn two_phase_trial_kets() -> Vec<CVector> {
    let bras: [[(f64, f64); 3]; 3] = [
        [(0.485, 0.131), (0.441, -0.070), (-0.223, 0.706)],
        [(0.688, 0.0), (-0.208, -0.432), (-0.270, -0.472)],
        [(0.509, 0.118), (-0.284, 0.700), (0.396, 0.0)],
    ];
    bras.iter()
        .map(|b| CVector::from_iterator(3, b.iter().map(|&(re, im)| c64(re, -im))))
        .collect()
}

/// Projectors onto [`two_phase_trial_kets`], completed with `convention`.
pub fn two_phase_povm(convention: Completion) -> Result<(Povm, CompletionRecord)> {
    let elements = two_phase_trial_kets()
        .iter()
        .map(HermitianOperator::projector)
        .collect();
    let labels = vec!["a".into(), "b".into(), "c".into()];
    complete_povm(elements, labels, convention)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PovmFile {
    format: String,
    elements: Vec<ElementSpec>,
    #[serde(default)]
    labels: Option<Vec<String>>,
}

#[derive(Deserialize, Serialize)]
#[serde(deny_unknown_fields, rename_all = "lowercase")]
enum ElementSpec {
    Matrix(Vec<Vec<ComplexPair>>),
    Ket(Vec<ComplexPair>),
}

/// Parses a POVM document; ket elements become projectors and the list is
/// completed with `convention` if it does not sum to the identity.
pub fn parse_povm(
    text: &str,
    origin: &str,
    convention: Completion,
) -> Result<(Povm, CompletionRecord)> {
    let file: PovmFile = codec::from_json_str(text, origin)?;
    codec::check_format(&file.format, POVM_FORMAT, origin)?;
    let mut elements = Vec::with_capacity(file.elements.len());
    for (m, spec) in file.elements.iter().enumerate() {
        let op = match spec {
            ElementSpec::Matrix(grid) => {
                let matrix = codec::grid_to_matrix(grid, &format!("{origin}: element {m}"))?;
                HermitianOperator::new(matrix)
                    .map_err(|e| Error::Povm(format!("{origin}: element {m}: {e}")))?
            }
            ElementSpec::Ket(pairs) => HermitianOperator::projector(&codec::pairs_to_vector(pairs)),
        };
        elements.push(op);
    }
    let labels = match file.labels {
        Some(l) => l,
        None => (0..elements.len()).map(|m| format!("m{m}")).collect(),
    };
    if labels.len() != elements.len() {
        return Err(Error::Povm(format!(
            "{origin}: {} labels for {} elements",
            labels.len(),
            elements.len()
        )));
    }
    complete_povm(elements, labels, convention).map_err(|e| Error::Povm(format!("{origin}: {e}")))
}

pub fn load_povm(path: &Path, convention: Completion) -> Result<(Povm, CompletionRecord)> {
    let text = codec::read_text(path)?;
    parse_povm(&text, &path.display().to_string(), convention)
}

/// Serializes a POVM with matrix elements.
pub fn povm_to_json(povm: &Povm) -> String {
    #[derive(Serialize)]
    struct Out<'a> {
        format: &'a str,
        elements: Vec<ElementSpec>,
        labels: &'a [String],
    }
    let out = Out {
        format: POVM_FORMAT,
        elements: povm
            .elements
            .iter()
            .map(|e| ElementSpec::Matrix(codec::matrix_to_grid(e.matrix())))
            .collect(),
        labels: &povm.labels,
    };
    serde_json::to_string_pretty(&out).expect("POVM serializes")
}
