//! Dense Hermitian linear algebra.
//!
//! Everything here works on small dense complex matrices (the models in this
//! crate live in dimensions of a few dozen at most). The central routine is
//! [`SylvesterSolver`], which solves `Sρ + ρS = 2ρ̄` on the support of `ρ`
//! via the eigendecomposition of `ρ`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Relative tolerance on `‖M − M†‖_F` accepted by [`HermitianOperator::new`].
pub const HERMITICITY_TOL: f64 = 1e-12;

/// Default support cut for [`SylvesterSolver`], relative to the largest
/// eigenvalue of `ρ`.
pub const DEFAULT_NULL_TOL: f64 = 1e-12;

/// Largest `|⟨φⱼ|ρ̄|φₗ⟩|` tolerated on a dropped (null-space) pair.
pub const OFF_SUPPORT_TOL: f64 = 1e-8;

const DENSITY_TOL: f64 = 1e-10;
const MAX_DIAGONALIZATION_ATTEMPTS: u64 = 5;

pub fn c64(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Frobenius norm.
pub fn frobenius(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// `‖AB − BA‖_F`.
pub fn commutator_norm(a: &CMatrix, b: &CMatrix) -> f64 {
    frobenius(&(a * b - b * a))
}

/// Frobenius norm of the off-diagonal part.
pub fn offdiagonal_norm(m: &CMatrix) -> f64 {
    let mut acc = 0.0;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            if i != j {
                acc += m[(i, j)].norm_sqr();
            }
        }
    }
    acc.sqrt()
}

/// Standard Kronecker product `A ⊗ B`.
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

/// Kronecker product of state vectors.
pub fn kron_vec(a: &CVector, b: &CVector) -> CVector {
    a.kronecker(b)
}

/// A square complex matrix equal to its adjoint.
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianOperator {
    matrix: CMatrix,
}

impl HermitianOperator {
    /// Wraps `matrix`, checking squareness, finiteness and
    /// `‖M − M†‖_F ≤ 1e-12·max(1, ‖M‖_F)`.
    pub fn new(matrix: CMatrix) -> Result<Self> {
        if !matrix.is_square() || matrix.nrows() == 0 {
            return Err(Error::Invariant(format!(
                "operator must be square and non-empty, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        if matrix
            .iter()
            .any(|z| !z.re.is_finite() || !z.im.is_finite())
        {
            return Err(Error::Invariant("operator has non-finite entries".into()));
        }
        let defect = frobenius(&(&matrix - matrix.adjoint()));
        let allowed = HERMITICITY_TOL * frobenius(&matrix).max(1.0);
        if defect > allowed {
            return Err(Error::Invariant(format!(
                "operator is not Hermitian: ‖M − M†‖_F = {defect:.3e} exceeds {allowed:.3e}"
            )));
        }
        Ok(Self { matrix })
    }

    /// Projects onto the Hermitian part `(M + M†)/2` without validation.
    ///
    /// Panics if `matrix` is not square.
    pub fn symmetrize(matrix: CMatrix) -> Self {
        assert!(matrix.is_square(), "symmetrize needs a square matrix");
        let adj = matrix.adjoint();
        Self {
            matrix: (matrix + adj) * c64(0.5, 0.0),
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            matrix: CMatrix::identity(dim, dim),
        }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            matrix: CMatrix::zeros(dim, dim),
        }
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        let v = DVector::from_iterator(diag.len(), diag.iter().map(|&x| c64(x, 0.0)));
        Self {
            matrix: CMatrix::from_diagonal(&v),
        }
    }

    /// `|ψ⟩⟨ψ|`.
    pub fn projector(ket: &CVector) -> Self {
        Self::symmetrize(ket * ket.adjoint())
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn trace(&self) -> f64 {
        self.matrix.diagonal().iter().map(|z| z.re).sum()
    }

    pub fn frobenius(&self) -> f64 {
        frobenius(&self.matrix)
    }

    /// `⟨ψ|M|ψ⟩`.
    pub fn expectation(&self, psi: &CVector) -> f64 {
        psi.dotc(&(&self.matrix * psi)).re
    }

    /// `Tr(self · other)`, real for two Hermitian operators.
    pub fn trace_product(&self, other: &HermitianOperator) -> f64 {
        let n = self.dim();
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                acc += (self.matrix[(i, j)] * other.matrix[(j, i)]).re;
            }
        }
        acc
    }

    pub fn eig(&self) -> EigenDecomposition {
        let raw = SymmetricEigen::new(self.matrix.clone());
        let n = self.dim();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| raw.eigenvalues[a].total_cmp(&raw.eigenvalues[b]));
        let eigenvalues = order.iter().map(|&k| raw.eigenvalues[k]).collect();
        let eigenvectors = CMatrix::from_fn(n, n, |i, j| raw.eigenvectors[(i, order[j])]);
        EigenDecomposition {
            eigenvalues,
            eigenvectors,
        }
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eig().eigenvalues[0]
    }
}

impl std::ops::Deref for HermitianOperator {
    type Target = CMatrix;

    fn deref(&self) -> &CMatrix {
        &self.matrix
    }
}

/// Spectral decomposition `M = V Λ V†` with ascending eigenvalues.
#[derive(Clone, Debug)]
pub struct EigenDecomposition {
    pub eigenvalues: Vec<f64>,
    /// Orthonormal eigenvectors stored as columns.
    pub eigenvectors: CMatrix,
}

impl EigenDecomposition {
    pub fn reconstruct(&self) -> CMatrix {
        let lambda = DVector::from_iterator(
            self.eigenvalues.len(),
            self.eigenvalues.iter().map(|&x| c64(x, 0.0)),
        );
        &self.eigenvectors * CMatrix::from_diagonal(&lambda) * self.eigenvectors.adjoint()
    }

    pub fn eigenvector(&self, k: usize) -> CVector {
        self.eigenvectors.column(k).into_owned()
    }
}

/// Eigendecomposition of a matrix expected to be Hermitian.
///
/// Fails with [`Error::Invariant`] naming the Hermiticity defect otherwise.
pub fn eig_hermitian(m: &CMatrix) -> Result<EigenDecomposition> {
    Ok(HermitianOperator::new(m.clone())?.eig())
}

/// Solver for the Bayesian SLD equation `Sρ + ρS = 2ρ̄` at fixed `ρ`.
///
/// With `ρ = Σⱼ pⱼ|φⱼ⟩⟨φⱼ|` the solution is
/// `S = 2 Σⱼₗ ⟨φⱼ|ρ̄|φₗ⟩/(pⱼ + pₗ) |φⱼ⟩⟨φₗ|`. Pairs with
/// `pⱼ + pₗ < null_tol · max p` are dropped; `ρ̄` must vanish there.
#[derive(Clone, Debug)]
pub struct SylvesterSolver {
    rho: HermitianOperator,
    eig: EigenDecomposition,
    null_tol: f64,
    cutoff: f64,
}

impl SylvesterSolver {
    pub fn new(rho: &HermitianOperator, null_tol: f64) -> Result<Self> {
        if !(null_tol > 0.0) {
            return Err(Error::Precondition(format!(
                "null_tol must be positive, got {null_tol}"
            )));
        }
        let trace = rho.trace();
        if (trace - 1.0).abs() > DENSITY_TOL {
            return Err(Error::Model(format!(
                "density operator must have unit trace, got {trace:.12}"
            )));
        }
        let eig = rho.eig();
        let min = eig.eigenvalues[0];
        if min < -DENSITY_TOL {
            return Err(Error::Model(format!(
                "density operator is not positive semidefinite (minimum eigenvalue {min:.3e})"
            )));
        }
        let p_max = *eig.eigenvalues.last().expect("non-empty spectrum");
        Ok(Self {
            rho: rho.clone(),
            eig,
            null_tol,
            cutoff: null_tol * p_max,
        })
    }

    pub fn rho(&self) -> &HermitianOperator {
        &self.rho
    }

    pub fn eigen(&self) -> &EigenDecomposition {
        &self.eig
    }

    pub fn null_tol(&self) -> f64 {
        self.null_tol
    }

    fn in_support(&self, p: f64) -> bool {
        // a single eigenvalue is in the support when its own pair (j, j) is kept
        2.0 * p >= self.cutoff
    }

    pub fn support_rank(&self) -> usize {
        self.eig
            .eigenvalues
            .iter()
            .filter(|&&p| self.in_support(p))
            .count()
    }

    /// Orthogonal projector onto the support of `ρ`.
    pub fn support_projector(&self) -> CMatrix {
        let n = self.rho.dim();
        let mut p = CMatrix::zeros(n, n);
        for (k, &val) in self.eig.eigenvalues.iter().enumerate() {
            if self.in_support(val) {
                let v = self.eig.eigenvector(k);
                p += &v * v.adjoint();
            }
        }
        p
    }

    pub fn solve(&self, rho_bar: &HermitianOperator) -> Result<HermitianOperator> {
        let n = self.rho.dim();
        if rho_bar.dim() != n {
            return Err(Error::Inconsistency(format!(
                "ρ̄ has dimension {} but ρ has dimension {n}",
                rho_bar.dim()
            )));
        }
        let v = &self.eig.eigenvectors;
        let r = v.adjoint() * rho_bar.matrix() * v;
        let p = &self.eig.eigenvalues;
        let mut s = CMatrix::zeros(n, n);
        for j in 0..n {
            for l in 0..n {
                let denom = p[j] + p[l];
                if denom < self.cutoff {
                    let weight = r[(j, l)].norm();
                    if weight > OFF_SUPPORT_TOL {
                        return Err(Error::Inconsistency(format!(
                            "ρ̄ has weight {weight:.3e} outside the support of ρ \
                             (eigenpair {j},{l} with p = {:.3e}, {:.3e})",
                            p[j], p[l]
                        )));
                    }
                    continue;
                }
                s[(j, l)] = r[(j, l)] * (2.0 / denom);
            }
        }
        Ok(HermitianOperator::symmetrize(v * s * v.adjoint()))
    }

    /// `‖P(Sρ + ρS − 2ρ̄)P‖_F` with `P` the support projector.
    pub fn projected_residual(&self, s: &HermitianOperator, rho_bar: &HermitianOperator) -> f64 {
        let rho = self.rho.matrix();
        let sm = s.matrix();
        let lhs = sm * rho + rho * sm - rho_bar.matrix() * c64(2.0, 0.0);
        let proj = self.support_projector();
        frobenius(&(&proj * lhs * &proj))
    }
}

/// One-shot form of [`SylvesterSolver::solve`].
pub fn solve_bayesian_sld(
    rho: &HermitianOperator,
    rho_bar: &HermitianOperator,
    null_tol: f64,
) -> Result<HermitianOperator> {
    SylvesterSolver::new(rho, null_tol)?.solve(rho_bar)
}

/// Finds a unitary whose columns diagonalize every operator in `ops`.
///
/// Diagonalizes a seeded random combination `Σ cᵢ Oᵢ/‖Oᵢ‖` and accepts the
/// basis when `Σᵢ ‖offdiag(V†OᵢV)‖_F ≤ tol·max(1, maxᵢ‖Oᵢ‖_F)`. Retries up to
/// five seeds before giving up with [`Error::Incompatible`].
pub fn common_eigenbasis(ops: &[&HermitianOperator], seed: u64, tol: f64) -> Result<CMatrix> {
    let dim = ops
        .first()
        .map(|o| o.dim())
        .ok_or_else(|| Error::Precondition("need at least one operator".into()))?;
    if ops.iter().any(|o| o.dim() != dim) {
        return Err(Error::Inconsistency(
            "operators have different dimensions".into(),
        ));
    }
    let scale = ops.iter().map(|o| o.frobenius()).fold(1.0_f64, f64::max);
    let mut best = f64::INFINITY;
    for attempt in 0..MAX_DIAGONALIZATION_ATTEMPTS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(attempt));
        let mut combo = CMatrix::zeros(dim, dim);
        for op in ops {
            let norm = op.frobenius();
            if norm == 0.0 {
                continue;
            }
            let c: f64 = rng.random_range(0.5..1.5);
            combo += op.matrix() * c64(c / norm, 0.0);
        }
        let basis = HermitianOperator::symmetrize(combo).eig().eigenvectors;
        let defect = diagonalization_defect(ops, &basis);
        if defect <= tol * scale {
            return Ok(basis);
        }
        best = best.min(defect);
    }
    Err(Error::Incompatible(format!(
        "no common eigenbasis found after {MAX_DIAGONALIZATION_ATTEMPTS} attempts \
         (smallest off-diagonal residual {best:.3e})"
    )))
}

/// `Σᵢ ‖offdiag(V†OᵢV)‖_F`.
pub fn diagonalization_defect(ops: &[&HermitianOperator], basis: &CMatrix) -> f64 {
    ops.iter()
        .map(|o| offdiagonal_norm(&(basis.adjoint() * o.matrix() * basis)))
        .sum()
}

/// Random Hermitian matrix with entries drawn uniformly from `[-1, 1]`.
pub fn random_hermitian<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> HermitianOperator {
    let m = CMatrix::from_fn(dim, dim, |_, _| {
        c64(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    });
    HermitianOperator::symmetrize(m)
}

/// Random orthonormal basis (columns) from the eigenvectors of a random
/// Hermitian matrix.
pub fn random_orthonormal_basis<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> CMatrix {
    random_hermitian(dim, rng).eig().eigenvectors
}

/// Pauli matrices and friends.
pub mod pauli {
    use super::{c64, CMatrix};

    pub fn identity() -> CMatrix {
        CMatrix::identity(2, 2)
    }

    pub fn x() -> CMatrix {
        CMatrix::from_row_slice(2, 2, &[c64(0., 0.), c64(1., 0.), c64(1., 0.), c64(0., 0.)])
    }

    pub fn y() -> CMatrix {
        CMatrix::from_row_slice(2, 2, &[c64(0., 0.), c64(0., -1.), c64(0., 1.), c64(0., 0.)])
    }

    pub fn z() -> CMatrix {
        CMatrix::from_row_slice(2, 2, &[c64(1., 0.), c64(0., 0.), c64(0., 0.), c64(-1., 0.)])
    }
}

/// Gell-Mann matrices `λ₁ … λ₈`, in that order.
pub fn gell_mann() -> Vec<CMatrix> {
    let z = c64(0.0, 0.0);
    let one = c64(1.0, 0.0);
    let i = c64(0.0, 1.0);
    let s = 1.0 / 3f64.sqrt();
    let m = |e: [Complex64; 9]| CMatrix::from_row_slice(3, 3, &e);
    vec![
        m([z, one, z, one, z, z, z, z, z]),
        m([z, -i, z, i, z, z, z, z, z]),
        m([one, z, z, z, -one, z, z, z, z]),
        m([z, z, one, z, z, z, one, z, z]),
        m([z, z, -i, z, z, z, i, z, z]),
        m([z, z, z, z, z, one, z, one, z]),
        m([z, z, z, z, z, -i, z, i, z]),
        m([c64(s, 0.), z, z, z, c64(s, 0.), z, z, z, c64(-2.0 * s, 0.)]),
    ]
}
