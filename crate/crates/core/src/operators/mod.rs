//! Complex linear algebra over the system Hilbert space.

pub mod json;
pub mod kraus;
pub mod linalg;
pub mod random;
pub mod state;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;

pub type C64 = Complex<f64>;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

pub use kraus::{completeness_residual, KrausSet};
pub use linalg::{polar_decompose, psd_sqrt, unitary_from_hamiltonian, PolarFactors};
pub use state::{apply_and_normalize, fidelity, QuantumState};
