//! Dense complex matrix functions. Everything spectral goes through a
//! Hermitian eigendecomposition, except the polar factorization (SVD) and the
//! principal logarithm of a unitary (complex Schur form).

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Schur};
use num_complex::Complex;

use super::{CMatrix, C64};
use crate::error::{Error, Result};

/// Tolerance for Hermiticity and small negative eigenvalues.
pub const HERMITIAN_TOL: f64 = 1e-10;

/// Eigenvalues below this are a hard domain error for square roots.
pub const NEGATIVE_EIGEN_LIMIT: f64 = -1e-8;

/// Eigenphases within this distance of ±π are flagged as near the branch cut.
pub const BRANCH_CUT_MARGIN: f64 = 1e-6;

pub fn frobenius(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// ‖A − B‖_F.
pub fn frobenius_distance(a: &CMatrix, b: &CMatrix) -> f64 {
    frobenius(&(a - b))
}

/// ‖A − A†‖_F.
pub fn hermitian_deviation(m: &CMatrix) -> f64 {
    frobenius(&(m - m.adjoint()))
}

pub fn is_square(m: &CMatrix) -> bool {
    m.nrows() == m.ncols()
}

pub fn commutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a * b - b * a
}

/// Real diagonal matrix lifted to complex entries.
pub fn diag(values: &[f64]) -> CMatrix {
    CMatrix::from_diagonal(&DVector::from_iterator(
        values.len(),
        values.iter().map(|&v| Complex::new(v, 0.0)),
    ))
}

fn require_square(m: &CMatrix) -> Result<()> {
    if !is_square(m) {
        return Err(Error::DimensionMismatch {
            expected: m.nrows(),
            found: m.ncols(),
        });
    }
    Ok(())
}

fn require_hermitian(m: &CMatrix) -> Result<()> {
    require_square(m)?;
    let deviation = hermitian_deviation(m);
    if deviation > HERMITIAN_TOL {
        return Err(Error::NonHermitian { deviation });
    }
    Ok(())
}

/// Spectral decomposition of a Hermitian matrix: eigenvalues and unitary
/// eigenvector matrix (columns).
pub struct HermitianEigen {
    pub values: Vec<f64>,
    pub vectors: CMatrix,
}

impl HermitianEigen {
    pub fn new(m: &CMatrix) -> Result<Self> {
        require_hermitian(m)?;
        let sym = (m + m.adjoint()).scale(0.5);
        let eig = sym.symmetric_eigen();
        Ok(Self {
            values: eig.eigenvalues.iter().copied().collect(),
            vectors: eig.eigenvectors,
        })
    }

    /// V f(Λ) V† for a complex-valued spectral function.
    pub fn map(&self, f: impl Fn(f64) -> C64) -> CMatrix {
        let d = self.values.len();
        let mut scaled = self.vectors.clone();
        for (j, &v) in self.values.iter().enumerate() {
            let fv = f(v);
            for i in 0..d {
                scaled[(i, j)] *= fv;
            }
        }
        scaled * self.vectors.adjoint()
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// The unique positive semidefinite square root of a Hermitian PSD matrix.
///
/// Eigenvalues in [-1e-8, 0) are clamped to zero.
pub fn psd_sqrt(a: &CMatrix) -> Result<CMatrix> {
    let eig = HermitianEigen::new(a)?;
    let min = eig.min_value();
    if min < NEGATIVE_EIGEN_LIMIT {
        return Err(Error::NegativeEigenvalue { eigenvalue: min });
    }
    let root = eig.map(|v| Complex::new(v.max(0.0).sqrt(), 0.0));
    Ok(hermitize(root))
}

/// exp(i·phase·H) for Hermitian H.
pub fn unitary_from_hamiltonian(h: &CMatrix, phase: f64) -> Result<CMatrix> {
    let eig = HermitianEigen::new(h)?;
    Ok(eig.map(|v| Complex::from_polar(1.0, phase * v)))
}

/// Principal Hamiltonian of a unitary: Hermitian H with U = exp(iH) and
/// eigenphases in (−π, π]. The flag reports eigenphases within
/// [`BRANCH_CUT_MARGIN`] of the cut.
pub fn principal_hamiltonian(u: &CMatrix) -> Result<(CMatrix, bool)> {
    require_square(u)?;
    let d = u.nrows();
    let (q, t) = Schur::new(u.clone()).unpack();
    let mut near_cut = false;
    let phases: Vec<f64> = (0..d)
        .map(|i| {
            let mut phi = t[(i, i)].arg();
            if phi <= -PI {
                phi = PI;
            }
            if PI - phi.abs() < BRANCH_CUT_MARGIN {
                near_cut = true;
            }
            phi
        })
        .collect();
    let h = &q * diag(&phases) * q.adjoint();
    Ok((hermitize(h), near_cut))
}

/// Left polar factors M = U L with U unitary and L = (M†M)^{1/2}.
#[derive(Debug, Clone)]
pub struct PolarFactors {
    pub unitary: CMatrix,
    pub positive: CMatrix,
    /// Principal Hamiltonian with `unitary = exp(i·hamiltonian)`.
    pub hamiltonian: CMatrix,
    /// True when an eigenphase of `unitary` sits within 1e-6 of ±π.
    pub near_branch_cut: bool,
}

impl PolarFactors {
    pub fn recompose(&self) -> CMatrix {
        &self.unitary * &self.positive
    }
}

/// Left polar decomposition via the SVD M = W Σ V†: U = W V†, L = V Σ V†.
///
/// For singular M the unitary factor is completed by the singular-vector
/// pairs of the kernel; it is therefore arbitrary there.
pub fn polar_decompose(m: &CMatrix) -> Result<PolarFactors> {
    require_square(m)?;
    let svd = m.clone().svd(true, true);
    let w = svd.u.expect("left singular vectors requested");
    let v_adj = svd.v_t.expect("right singular vectors requested");
    let sigma: Vec<f64> = svd.singular_values.iter().copied().collect();
    let unitary = &w * &v_adj;
    let positive = hermitize(v_adj.adjoint() * diag(&sigma) * &v_adj);
    let (hamiltonian, near_branch_cut) = principal_hamiltonian(&unitary)?;
    Ok(PolarFactors {
        unitary,
        positive,
        hamiltonian,
        near_branch_cut,
    })
}

/// (A + A†)/2.
pub fn hermitize(a: CMatrix) -> CMatrix {
    (&a + a.adjoint()).scale(0.5)
}

/// Frobenius residual of U†U − I.
pub fn unitarity_residual(u: &CMatrix) -> f64 {
    let d = u.nrows();
    frobenius(&(u.adjoint() * u - CMatrix::identity(d, d)))
}

/// Lifts a real matrix to complex entries.
pub fn complexify(m: &DMatrix<f64>) -> CMatrix {
    m.map(|v| Complex::new(v, 0.0))
}
