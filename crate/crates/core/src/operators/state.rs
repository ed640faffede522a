use num_complex::Complex;
use serde::{Deserialize, Serialize};

use super::linalg::{hermitian_deviation, hermitize, psd_sqrt, HermitianEigen};
use super::{json, CMatrix, CVector, C64};
use crate::error::{Error, Result};

/// Norm, trace and Hermiticity tolerance for states.
pub const STATE_TOL: f64 = 1e-10;

/// Born probabilities at or below this make an outcome impossible.
pub const MIN_PROBABILITY: f64 = 1e-14;

/// A pure state vector or a density matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuantumState {
    Pure(#[serde(with = "json::vector")] CVector),
    Density(#[serde(with = "json::matrix")] CMatrix),
}

impl QuantumState {
    /// Validated pure state (unit norm within 1e-10).
    pub fn pure(psi: CVector) -> Result<Self> {
        let s = QuantumState::Pure(psi);
        s.validate()?;
        Ok(s)
    }

    /// Normalizes a nonzero vector.
    pub fn pure_normalized(psi: CVector) -> Result<Self> {
        let norm = psi.norm();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::InvalidState("cannot normalize a zero vector".into()));
        }
        Ok(QuantumState::Pure(psi.unscale(norm)))
    }

    /// Validated density matrix (Hermitian, unit trace, PSD within 1e-10).
    pub fn density(rho: CMatrix) -> Result<Self> {
        let s = QuantumState::Density(rho);
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            QuantumState::Pure(psi) => {
                if psi.is_empty() {
                    return Err(Error::InvalidState("empty state vector".into()));
                }
                let norm = psi.norm();
                if (norm - 1.0).abs() > STATE_TOL {
                    return Err(Error::InvalidState(format!("state norm is {norm}, not 1")));
                }
            }
            QuantumState::Density(rho) => {
                if rho.nrows() != rho.ncols() || rho.is_empty() {
                    return Err(Error::InvalidState("density matrix must be square".into()));
                }
                let dev = hermitian_deviation(rho);
                if dev > STATE_TOL {
                    return Err(Error::InvalidState(format!(
                        "density matrix is not Hermitian ({dev:.3e})"
                    )));
                }
                let tr = rho.trace();
                if (tr.re - 1.0).abs() > STATE_TOL || tr.im.abs() > STATE_TOL {
                    return Err(Error::InvalidState(format!("density matrix trace is {tr}")));
                }
                let min = HermitianEigen::new(rho)?.min_value();
                if min < -STATE_TOL {
                    return Err(Error::InvalidState(format!(
                        "density matrix eigenvalue {min:.3e} < 0"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        match self {
            QuantumState::Pure(psi) => psi.len(),
            QuantumState::Density(rho) => rho.nrows(),
        }
    }

    pub fn as_pure(&self) -> Option<&CVector> {
        match self {
            QuantumState::Pure(psi) => Some(psi),
            QuantumState::Density(_) => None,
        }
    }

    pub fn to_density(&self) -> CMatrix {
        match self {
            QuantumState::Pure(psi) => psi * psi.adjoint(),
            QuantumState::Density(rho) => rho.clone(),
        }
    }

    /// ⟨ψ|A|ψ⟩ or Tr(Aρ).
    pub fn expectation(&self, op: &CMatrix) -> C64 {
        match self {
            QuantumState::Pure(psi) => psi.dotc(&(op * psi)),
            QuantumState::Density(rho) => (op * rho).trace(),
        }
    }
}

/// Post-measurement state M|ψ⟩/√p (or MρM†/p) and its Born probability p.
pub fn apply_and_normalize(m: &CMatrix, state: &QuantumState) -> Result<(QuantumState, f64)> {
    if m.ncols() != state.dim() || m.nrows() != state.dim() {
        return Err(Error::DimensionMismatch {
            expected: state.dim(),
            found: m.ncols(),
        });
    }
    match state {
        QuantumState::Pure(psi) => {
            let phi = m * psi;
            let p = phi.norm_squared();
            if p <= MIN_PROBABILITY {
                return Err(Error::OutcomeImpossible { probability: p });
            }
            Ok((QuantumState::Pure(phi.unscale(p.sqrt())), p))
        }
        QuantumState::Density(rho) => {
            let sigma = m * rho * m.adjoint();
            let p = sigma.trace().re;
            if p <= MIN_PROBABILITY {
                return Err(Error::OutcomeImpossible { probability: p });
            }
            Ok((QuantumState::Density(hermitize(sigma.unscale(p))), p))
        }
    }
}

/// |⟨a|b⟩|² for pure pairs, ⟨a|ρ|a⟩ for mixed-pure, Uhlmann fidelity
/// (Tr √(√ρ σ √ρ))² otherwise.
pub fn fidelity(a: &QuantumState, b: &QuantumState) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            found: b.dim(),
        });
    }
    let f = match (a, b) {
        (QuantumState::Pure(x), QuantumState::Pure(y)) => x.dotc(y).norm_sqr(),
        (QuantumState::Pure(x), QuantumState::Density(rho))
        | (QuantumState::Density(rho), QuantumState::Pure(x)) => x.dotc(&(rho * x)).re,
        (QuantumState::Density(rho), QuantumState::Density(sigma)) => {
            let root = psd_sqrt(rho)?;
            let inner = hermitize(&root * sigma * &root);
            let eig = HermitianEigen::new(&inner)?;
            let tr: f64 = eig.values.iter().map(|v| v.max(0.0).sqrt()).sum();
            tr * tr
        }
    };
    Ok(f.clamp(0.0, 1.0))
}

/// Computational basis vector |k⟩.
pub fn basis_vector(d: usize, k: usize) -> CVector {
    let mut v = CVector::zeros(d);
    v[k] = Complex::new(1.0, 0.0);
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::linalg::diag;
    use crate::operators::random::{random_kraus_operators, random_pure_state};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn plus() -> CVector {
        CVector::from_vec(vec![Complex::new(1.0, 0.0), Complex::new(1.0, 0.0)]).unscale(2f64.sqrt())
    }

    #[test]
    fn apply_examples() {
        let psi = QuantumState::pure(plus()).unwrap();
        let (out, p) = apply_and_normalize(&CMatrix::identity(2, 2), &psi).unwrap();
        assert!((p - 1.0).abs() < 1e-15);
        assert!(fidelity(&out, &psi).unwrap() > 1.0 - 1e-15);

        let (out, p) = apply_and_normalize(&diag(&[1.0, 0.0]), &psi).unwrap();
        assert!((p - 0.5).abs() < 1e-15);
        assert!((out.as_pure().unwrap() - basis_vector(2, 0)).norm() < 1e-15);

        let m = diag(&[0.3f64.cos(), 0.3f64.sin()]);
        let one = QuantumState::pure(basis_vector(2, 1)).unwrap();
        let (out, p) = apply_and_normalize(&m, &one).unwrap();
        assert!((p - 0.3f64.sin().powi(2)).abs() < 1e-15);
        assert!((p - 0.087_332_192_545_161).abs() < 1e-12);
        assert!((out.as_pure().unwrap() - basis_vector(2, 1)).norm() < 1e-15);
    }

    #[test]
    fn impossible_outcome() {
        let zero = QuantumState::pure(basis_vector(2, 0)).unwrap();
        let err = apply_and_normalize(&diag(&[0.0, 1.0]), &zero).unwrap_err();
        assert!(matches!(err, Error::OutcomeImpossible { .. }));
    }

    #[test]
    fn density_path_matches_pure_path() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ops = random_kraus_operators(3, 4, &mut rng);
        let psi = QuantumState::pure(random_pure_state(3, &mut rng)).unwrap();
        let rho = QuantumState::density(psi.to_density()).unwrap();
        let mut total = 0.0;
        for m in &ops {
            let (a, pa) = apply_and_normalize(m, &psi).unwrap();
            let (b, pb) = apply_and_normalize(m, &rho).unwrap();
            assert!((pa - pb).abs() < 1e-12);
            assert!(fidelity(&a, &b).unwrap() > 1.0 - 1e-10);
            total += pa;
        }
        assert!((total - 1.0).abs() < 1e-10);
    }

    #[test]
    fn state_validation() {
        assert!(QuantumState::pure(CVector::from_vec(vec![Complex::new(1.0, 0.0); 2])).is_err());
        assert!(QuantumState::density(diag(&[0.5, 0.6])).is_err());
        assert!(QuantumState::density(diag(&[1.2, -0.2])).is_err());
        assert!(QuantumState::density(diag(&[0.25, 0.75])).is_ok());
    }

    #[test]
    fn uhlmann_fidelity_on_commuting_states() {
        let a = QuantumState::density(diag(&[0.25, 0.75])).unwrap();
        let b = QuantumState::density(diag(&[0.5, 0.5])).unwrap();
        let expected = ((0.25f64 * 0.5).sqrt() + (0.75f64 * 0.5).sqrt()).powi(2);
        assert!((fidelity(&a, &b).unwrap() - expected).abs() < 1e-12);
        assert!((fidelity(&a, &a).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn json_shape() {
        let s = QuantumState::pure(basis_vector(2, 1)).unwrap();
        let j = serde_json::to_string(&s).unwrap();
        assert_eq!(j, r#"{"pure":[[0.0,0.0],[1.0,0.0]]}"#);
        let back: QuantumState = serde_json::from_str(&j).unwrap();
        assert_eq!(back, s);
    }
}
