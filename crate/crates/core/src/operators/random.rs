//! Random test ensembles: Ginibre matrices, Haar-like unitaries, pure states
//! and complete Kraus sets.

use nalgebra::DVector;
use num_complex::Complex;
use rand::Rng;
use rand_distr::StandardNormal;

use super::linalg::{diag, HermitianEigen};
use super::{CMatrix, CVector, C64};

fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    Complex::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
}

/// d×d matrix with i.i.d. standard complex Gaussian entries.
pub fn random_matrix<R: Rng + ?Sized>(d: usize, rng: &mut R) -> CMatrix {
    CMatrix::from_fn(d, d, |_, _| gaussian(rng))
}

/// Unit vector drawn uniformly from the complex sphere.
pub fn random_pure_state<R: Rng + ?Sized>(d: usize, rng: &mut R) -> CVector {
    let v = DVector::from_fn(d, |_, _| gaussian(rng));
    let norm = v.norm();
    v.unscale(norm)
}

/// Unitary with random eigenbasis and eigenphases uniform in
/// [−max_phase, max_phase].
pub fn random_unitary<R: Rng + ?Sized>(d: usize, max_phase: f64, rng: &mut R) -> CMatrix {
    let q = random_matrix(d, rng).qr().q();
    let phases: Vec<C64> = (0..d)
        .map(|_| Complex::from_polar(1.0, rng.random_range(-max_phase..=max_phase)))
        .collect();
    let mut scaled = q.clone();
    for (j, ph) in phases.iter().enumerate() {
        for i in 0..d {
            scaled[(i, j)] *= ph;
        }
    }
    scaled * q.adjoint()
}

/// n operators M_j = G_j S^{-1/2} with S = Σ G_j†G_j, so that Σ M_j†M_j = I.
pub fn random_kraus_operators<R: Rng + ?Sized>(d: usize, n: usize, rng: &mut R) -> Vec<CMatrix> {
    let gs: Vec<CMatrix> = (0..n).map(|_| random_matrix(d, rng)).collect();
    let s = gs
        .iter()
        .fold(CMatrix::zeros(d, d), |acc, g| acc + g.adjoint() * g);
    let eig = HermitianEigen::new(&super::linalg::hermitize(s)).expect("Gram matrix is Hermitian");
    let inv_sqrt = eig.map(|v| Complex::new(1.0 / v.sqrt(), 0.0));
    gs.into_iter().map(|g| g * &inv_sqrt).collect()
}

/// Rotated computational-basis projectors {U|k⟩⟨k|U†}.
pub fn random_projectors<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vec<CMatrix> {
    let u = random_unitary(d, std::f64::consts::PI, rng);
    (0..d)
        .map(|k| {
            let mut e = vec![0.0; d];
            e[k] = 1.0;
            &u * diag(&e) * u.adjoint()
        })
        .collect()
}
