use std::path::Path;

use serde::{Deserialize, Serialize};

use super::linalg::{
    commutator, diag, frobenius, frobenius_distance, hermitian_deviation, HermitianEigen,
    HERMITIAN_TOL,
};
use super::{json, CMatrix};
use crate::error::{Error, Result};
use crate::simplex::SimplexPoint;

use super::state::QuantumState;

/// Completeness, projectivity and commutation tolerance.
pub const KRAUS_TOL: f64 = 1e-10;

/// ‖Σ_j M_j†M_j − I‖_F.
pub fn completeness_residual(operators: &[CMatrix]) -> Result<f64> {
    let first = operators
        .first()
        .ok_or_else(|| Error::Domain("empty operator set".into()))?;
    let d = first.nrows();
    let mut sum = CMatrix::zeros(d, d);
    for (j, m) in operators.iter().enumerate() {
        if m.nrows() != d || m.ncols() != d {
            return Err(Error::Domain(format!(
                "operator {j} is {}x{}, expected {d}x{d}",
                m.nrows(),
                m.ncols()
            )));
        }
        sum += m.adjoint() * m;
    }
    Ok(frobenius(&(sum - CMatrix::identity(d, d))))
}

/// A complete set of measurement operators M_1..M_n acting on C^d.
#[derive(Debug, Clone)]
pub struct KrausSet {
    operators: Vec<CMatrix>,
    dim: usize,
    projective: bool,
    positive: bool,
    commuting: bool,
}

impl KrausSet {
    /// Validates completeness and computes the structural flags.
    pub fn new(operators: Vec<CMatrix>) -> Result<Self> {
        if operators.len() < 2 {
            return Err(Error::TooFewOutcomes(operators.len()));
        }
        let residual = completeness_residual(&operators)?;
        if !(residual <= KRAUS_TOL) {
            return Err(Error::Incomplete {
                residual,
                tolerance: KRAUS_TOL,
            });
        }
        let dim = operators[0].nrows();
        let hermitian = operators
            .iter()
            .all(|m| hermitian_deviation(m) <= KRAUS_TOL);
        let positive = hermitian
            && operators.iter().all(|m| {
                HermitianEigen::new(m)
                    .map(|e| e.min_value() >= -HERMITIAN_TOL)
                    .unwrap_or(false)
            });
        let commuting = operators.iter().enumerate().all(|(i, a)| {
            operators[i + 1..]
                .iter()
                .all(|b| frobenius(&commutator(a, b)) <= KRAUS_TOL)
        });
        let projective = hermitian
            && operators.iter().enumerate().all(|(i, a)| {
                frobenius_distance(&(a * a), a) <= KRAUS_TOL
                    && operators[i + 1..]
                        .iter()
                        .all(|b| frobenius(&(a * b)) <= KRAUS_TOL)
            });
        Ok(Self {
            operators,
            dim,
            projective,
            positive,
            commuting,
        })
    }

    /// {|k⟩⟨k|} on C^d.
    pub fn computational_projectors(d: usize) -> Result<Self> {
        Self::new(
            (0..d)
                .map(|k| {
                    let mut e = vec![0.0; d];
                    e[k] = 1.0;
                    diag(&e)
                })
                .collect(),
        )
    }

    pub fn operators(&self) -> &[CMatrix] {
        &self.operators
    }

    pub fn operator(&self, j: usize) -> &CMatrix {
        &self.operators[j]
    }

    /// Number of outcomes n.
    pub fn len(&self) -> usize {
        self.operators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.operators.is_empty()
    }

    /// Hilbert-space dimension d.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_projective(&self) -> bool {
        self.projective
    }

    pub fn is_positive(&self) -> bool {
        self.positive
    }

    pub fn is_commuting(&self) -> bool {
        self.commuting
    }

    pub fn completeness_residual(&self) -> f64 {
        completeness_residual(&self.operators).expect("validated at construction")
    }

    /// M_j†M_j for every outcome.
    pub fn effects(&self) -> Vec<CMatrix> {
        self.operators.iter().map(|m| m.adjoint() * m).collect()
    }

    /// Born probabilities p_j = Tr(M_j†M_j ρ), clamped at zero and
    /// renormalized onto the simplex.
    pub fn born_probabilities(&self, state: &QuantumState) -> Result<SimplexPoint> {
        if state.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: state.dim(),
            });
        }
        let p: Vec<f64> = self
            .effects()
            .iter()
            .map(|e| state.expectation(e).re.max(0.0))
            .collect();
        SimplexPoint::from_weights(&p)
    }

    pub fn from_json_str(s: &str) -> std::result::Result<Self, KrausFileError> {
        let file: KrausFile =
            serde_json::from_str(s).map_err(|e| KrausFileError::Parse(e.to_string()))?;
        file.into_set()
    }

    /// Reads a Kraus-set JSON file; errors name the path.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text).map_err(|e| match e {
            KrausFileError::Invalid(inner) => Error::format(path, inner.to_string()),
            KrausFileError::Parse(msg) => Error::format(path, msg),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&KrausFile {
            dimension: self.dim,
            operators: self.operators.iter().map(json::matrix_to_rows).collect(),
        })
        .expect("Kraus sets always serialize")
    }
}

#[derive(Debug, thiserror::Error)]
pub enum KrausFileError {
    #[error("malformed Kraus file: {0}")]
    Parse(String),
    #[error(transparent)]
    Invalid(#[from] Error),
}

/// On-disk layout: a dimension header followed by the operator list.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct KrausFile {
    dimension: usize,
    operators: Vec<Vec<Vec<json::Pair>>>,
}

impl KrausFile {
    fn into_set(self) -> std::result::Result<KrausSet, KrausFileError> {
        let mut ops = Vec::with_capacity(self.operators.len());
        for (j, rows) in self.operators.iter().enumerate() {
            let m = json::rows_to_matrix(rows)
                .map_err(|e| KrausFileError::Parse(format!("operator {j}: {e}")))?;
            if m.nrows() != self.dimension || m.ncols() != self.dimension {
                return Err(KrausFileError::Parse(format!(
                    "operator {j} is {}x{} but the header says dimension {}",
                    m.nrows(),
                    m.ncols(),
                    self.dimension
                )));
            }
            ops.push(m);
        }
        Ok(KrausSet::new(ops)?)
    }
}
