//! Continuous decomposition of a general Kraus measurement.
//!
//! Each operator is split as M_j = U_j L_j with U_j = exp(iH_j). The map
//! 𝓜(x) = Υ(x)Λ(x) on the simplex equals the identity at e and M_k at the
//! vertex k, where
//!
//! ```text
//! Υ(x) = exp(i·n/(n−1)·Σ_j xʲ(xʲ − 1/n) H_j)
//! Λ(x) = f(x)^{1/2} (Σ_j xʲ L_j†L_j)^{1/2},   f(x) = 1 + n Σ_j xʲ(1 − xʲ)
//! ```
//!
//! The quantum state follows the classical simplex process through
//! ρ_t = 𝓜(x_t)ρ₀𝓜(x_t)† / Tr(𝓜†𝓜ρ₀). For positive commuting sets there is
//! also an intrinsic state equation, integrated by [`CommutingQsd`].

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operators::linalg::{
    hermitian_deviation, hermitize, polar_decompose, HermitianEigen, HERMITIAN_TOL,
};
use crate::operators::state::{apply_and_normalize, fidelity};
use crate::operators::{
    psd_sqrt, unitary_from_hamiltonian, CMatrix, CVector, KrausSet, PolarFactors, QuantumState,
};
use crate::sde::{
    apply_diffusion, apply_metric, checkpoint_step, tilde_into, SdeConfig, SdeWalker,
    COMPONENT_FLOOR,
};
use crate::seed::{wiener_increments, StreamSeed};
use crate::simplex::SimplexPoint;

/// Polar data of a Kraus set, shared by every trajectory.
#[derive(Debug, Clone)]
pub struct MeasurementMap {
    kraus: KrausSet,
    polar: Vec<PolarFactors>,
    effects: Vec<CMatrix>,
    trivial_phase: bool,
}

fn is_psd(m: &CMatrix) -> bool {
    hermitian_deviation(m) <= HERMITIAN_TOL
        && HermitianEigen::new(m)
            .map(|e| e.min_value() >= -HERMITIAN_TOL)
            .unwrap_or(false)
}

impl MeasurementMap {
    /// Positive semidefinite operators get U = I and L = M exactly; the rest
    /// are split by [`polar_decompose`].
    pub fn new(kraus: KrausSet) -> Result<Self> {
        let d = kraus.dim();
        let polar = kraus
            .operators()
            .iter()
            .map(|m| {
                if is_psd(m) {
                    Ok(PolarFactors {
                        unitary: CMatrix::identity(d, d),
                        positive: hermitize(m.clone()),
                        hamiltonian: CMatrix::zeros(d, d),
                        near_branch_cut: false,
                    })
                } else {
                    polar_decompose(m)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let effects = polar.iter().map(|f| &f.positive * &f.positive).collect();
        let trivial_phase = polar
            .iter()
            .all(|f| f.hamiltonian.iter().all(|h| *h == Complex::new(0.0, 0.0)));
        Ok(Self {
            kraus,
            polar,
            effects,
            trivial_phase,
        })
    }

    pub fn kraus(&self) -> &KrausSet {
        &self.kraus
    }

    pub fn polar(&self) -> &[PolarFactors] {
        &self.polar
    }

    pub fn n(&self) -> usize {
        self.kraus.len()
    }

    pub fn dim(&self) -> usize {
        self.kraus.dim()
    }

    /// True when some polar unitary has an eigenphase next to ±π.
    pub fn near_branch_cut(&self) -> bool {
        self.polar.iter().any(|f| f.near_branch_cut)
    }

    fn check(&self, x: &SimplexPoint) -> Result<()> {
        if x.dim() != self.n() {
            return Err(Error::DimensionMismatch {
                expected: self.n(),
                found: x.dim(),
            });
        }
        Ok(())
    }

    /// Υ(x), unitary.
    pub fn upsilon(&self, x: &SimplexPoint) -> Result<CMatrix> {
        self.check(x)?;
        let d = self.dim();
        if self.trivial_phase {
            return Ok(CMatrix::identity(d, d));
        }
        let n = self.n() as f64;
        let scale = n / (n - 1.0);
        let h = x
            .components()
            .iter()
            .zip(&self.polar)
            .fold(CMatrix::zeros(d, d), |acc, (xj, f)| {
                acc + f.hamiltonian.scale(scale * xj * (xj - 1.0 / n))
            });
        unitary_from_hamiltonian(&hermitize(h), 1.0)
    }

    /// Λ(x), positive semidefinite.
    pub fn lambda_map(&self, x: &SimplexPoint) -> Result<CMatrix> {
        self.check(x)?;
        let n = self.n() as f64;
        let f = 1.0 + n * x.components().iter().map(|xj| xj * (1.0 - xj)).sum::<f64>();
        let support: Vec<usize> = (0..self.n()).filter(|&j| x.components()[j] > 0.0).collect();
        // On a vertex (L_k†L_k)^{1/2} is L_k itself.
        if let [k] = support[..] {
            return Ok(self.polar[k].positive.scale((f * x.components()[k]).sqrt()));
        }
        let d = self.dim();
        let sum = x
            .components()
            .iter()
            .zip(&self.effects)
            .fold(CMatrix::zeros(d, d), |acc, (xj, e)| acc + e.scale(*xj));
        Ok(psd_sqrt(&hermitize(sum))?.scale(f.sqrt()))
    }

    /// 𝓜(x) = Υ(x)Λ(x).
    pub fn measurement_map(&self, x: &SimplexPoint) -> Result<CMatrix> {
        Ok(self.upsilon(x)? * self.lambda_map(x)?)
    }

    /// ρ₀ pulled along 𝓜(x) and renormalized.
    pub fn pullback_state(&self, x: &SimplexPoint, rho0: &QuantumState) -> Result<QuantumState> {
        Ok(apply_and_normalize(&self.measurement_map(x)?, rho0)?.0)
    }
}

/// End of one generalized trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneralizedOutcome {
    pub seed: StreamSeed,
    pub terminal_index: Option<usize>,
    pub final_x: SimplexPoint,
    pub final_state: QuantumState,
    /// Fidelity to M_k ρ₀ M_k† / p_k⁰ for the terminal index k.
    pub fidelity_to_target: Option<f64>,
    pub steps: u64,
    pub time: f64,
}

/// Drives the simplex process with p⁰_j = Tr(M_j†M_j ρ₀) from e and reads the
/// state off the pullback at the end.
pub fn run_generalized(
    psi0: &QuantumState,
    map: &MeasurementMap,
    cfg: &SdeConfig,
    seed: StreamSeed,
) -> Result<GeneralizedOutcome> {
    let p0 = map.kraus().born_probabilities(psi0)?;
    let e = SimplexPoint::identity(map.n())?;
    let mut walker = SdeWalker::new(&e, &p0, *cfg)?;
    let mut rng = seed.rng();
    let mut dw = vec![0.0; map.n()];
    while !walker.finished() {
        wiener_increments(&mut rng, cfg.dt, &mut dw);
        walker.step(&dw)?;
    }
    finish_generalized(psi0, map, &walker, seed)
}

/// Builds the outcome record from a finished walker.
pub fn finish_generalized(
    psi0: &QuantumState,
    map: &MeasurementMap,
    walker: &SdeWalker,
    seed: StreamSeed,
) -> Result<GeneralizedOutcome> {
    let final_x = SimplexPoint::from_weights(walker.x())?;
    let final_state = map.pullback_state(&final_x, psi0)?;
    let terminal_index = walker.collapsed();
    let fidelity_to_target = match terminal_index {
        Some(k) => {
            let (target, _) = apply_and_normalize(map.kraus().operator(k), psi0)?;
            Some(fidelity(&target, &final_state)?)
        }
        None => None,
    };
    Ok(GeneralizedOutcome {
        seed,
        terminal_index,
        final_x,
        final_state,
        fidelity_to_target,
        steps: walker.steps(),
        time: walker.time(),
    })
}

/// Coupled state and simplex equations for a positive commuting Kraus set:
///
/// ```text
/// dψ  = −⅛ g^{jk} D_j D_k ψ dt + ½ D_i ψ aⁱ_α dW^α
/// dxⁱ = gⁱʲ⟨A_j⟩ dt + aⁱ_α dW^α
/// ```
///
/// with A_i = M_i² (Σ_m x^m M_m²)⁻¹ and D_i = A_i − ⟨A_i⟩.
#[derive(Debug, Clone)]
pub struct CommutingQsd {
    squares: Vec<CMatrix>,
    conformal: f64,
}

impl CommutingQsd {
    pub fn new(kraus: &KrausSet, conformal: f64) -> Result<Self> {
        if !(kraus.is_positive() && kraus.is_commuting()) {
            return Err(Error::NotPositiveCommuting);
        }
        Ok(Self {
            squares: kraus.operators().iter().map(|m| m * m).collect(),
            conformal,
        })
    }

    pub fn n(&self) -> usize {
        self.squares.len()
    }

    /// A_i(x) for every outcome.
    pub fn a_operators(&self, x: &[f64]) -> Result<Vec<CMatrix>> {
        let d = self.squares[0].nrows();
        let sum = x
            .iter()
            .zip(&self.squares)
            .fold(CMatrix::zeros(d, d), |acc, (xm, m2)| acc + m2.scale(*xm));
        let eig = HermitianEigen::new(&hermitize(sum))?;
        if eig.min_value() <= 0.0 {
            return Err(Error::Domain("Σ x^m M_m² is singular".into()));
        }
        let inverse = eig.map(|v| Complex::new(1.0 / v, 0.0));
        Ok(self
            .squares
            .iter()
            .map(|m2| hermitize(m2 * &inverse))
            .collect())
    }

    /// ⟨A_j⟩ in the current state.
    pub fn expectations(&self, psi: &CVector, a: &[CMatrix]) -> Vec<f64> {
        a.iter().map(|op| psi.dotc(&(op * psi)).re).collect()
    }

    /// ⟨A_j⟩ from initial-state data: p⁰_j / Σ_m x^m p⁰_m.
    pub fn initial_form_expectations(x: &[f64], p0: &[f64]) -> Vec<f64> {
        let norm: f64 = x.iter().zip(p0).map(|(a, b)| a * b).sum();
        p0.iter().map(|p| p / norm).collect()
    }

    /// Deterministic and per-noise-component parts of dψ at (ψ, x):
    /// returns (drift, columns) with dψ = drift·dt + Σ_α columns[α]·dW^α.
    pub fn coefficients(&self, psi: &CVector, x: &[f64]) -> Result<(CVector, Vec<CVector>)> {
        let a = self.a_operators(x)?;
        let means = self.expectations(psi, &a);
        let dev: Vec<CVector> = a
            .iter()
            .zip(&means)
            .map(|(op, m)| op * psi - psi.scale(*m))
            .collect();
        // g^{jk}D_jD_k = c Σ_α (x^α)² D_α², and Σ_i D_i aⁱ_α = √c x^α D_α.
        let mut drift = CVector::zeros(psi.len());
        for ((op, m), (d, xa)) in a.iter().zip(&means).zip(dev.iter().zip(x)) {
            let dd = op * d - d.scale(*m);
            drift -= dd.scale(0.125 * self.conformal * xa * xa);
        }
        let root = self.conformal.sqrt();
        let columns = dev
            .iter()
            .zip(x)
            .map(|(d, xa)| d.scale(0.5 * root * xa))
            .collect();
        Ok((drift, columns))
    }

    /// One coupled Euler–Maruyama step; the state is renormalized and x is
    /// repaired onto the simplex. Returns true when x had to be clamped.
    pub fn step(&self, psi: &mut CVector, x: &mut [f64], dt: f64, dw: &[f64]) -> Result<bool> {
        let n = self.n();
        if x.len() != n || dw.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: x.len().min(dw.len()),
            });
        }
        let a = self.a_operators(x)?;
        let means = self.expectations(psi, &a);
        let (drift, columns) = self.coefficients(psi, x)?;
        let mut next = psi.clone() + drift.scale(dt);
        for (col, w) in columns.iter().zip(dw) {
            next += col.scale(*w);
        }
        let norm = next.norm();
        if !(norm > 0.0) {
            return Err(Error::InvalidState(
                "state equation produced a zero vector".into(),
            ));
        }
        *psi = next.unscale(norm);

        let mut gb = vec![0.0; n];
        let mut noise = vec![0.0; n];
        apply_metric(x, &means, self.conformal, &mut gb);
        apply_diffusion(x, dw, self.conformal, &mut noise);
        for i in 0..n {
            x[i] += gb[i] * dt + noise[i];
        }
        let mut clamped = false;
        for c in x.iter_mut() {
            if !(*c >= COMPONENT_FLOOR) {
                *c = COMPONENT_FLOOR;
                clamped = true;
            }
        }
        let sum: f64 = x.iter().sum();
        x.iter_mut().for_each(|c| *c /= sum);
        Ok(clamped)
    }

    /// Drift and noise coefficients of dρ in the density form
    /// dρ = g^{jk}(Q_jρQ_k − ½{Q_kQ_j, ρ})dt + {Q_j, ρ}a^j_α dW^α with
    /// Q_j = (A_j − Tr(A_jρ))/2.
    pub fn density_coefficients(
        &self,
        rho: &CMatrix,
        x: &[f64],
    ) -> Result<(CMatrix, Vec<CMatrix>)> {
        let n = self.n();
        let d = rho.nrows();
        let a = self.a_operators(x)?;
        let id = CMatrix::identity(d, d);
        let q: Vec<CMatrix> = a
            .iter()
            .map(|op| (op - id.scale((op * rho).trace().re)).scale(0.5))
            .collect();
        let xs = SimplexPoint::from_weights(x)?;
        let g = crate::sde::metric(&xs, self.conformal);
        let af = crate::sde::diffusion_factor(&xs, self.conformal);
        let mut drift = CMatrix::zeros(d, d);
        for j in 0..n {
            for k in 0..n {
                let qkqj = &q[k] * &q[j];
                let term = &q[j] * rho * &q[k] - (&qkqj * rho + rho * &qkqj).scale(0.5);
                drift += term.scale(g[(j, k)]);
            }
        }
        let columns = (0..n)
            .map(|alpha| {
                (0..n).fold(CMatrix::zeros(d, d), |acc, j| {
                    acc + (&q[j] * rho + rho * &q[j]).scale(af[(j, alpha)])
                })
            })
            .collect();
        Ok((drift, columns))
    }
}

/// Integrated state against the pullback along the same x path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QsdCheckpoint {
    pub time: f64,
    pub fidelity: f64,
    /// Largest |⟨A_j⟩_ψ − p⁰_j/Tr(x∘p⁰)|.
    pub expectation_gap: f64,
    pub tilde: Vec<f64>,
}

/// Result of a coupled commuting run.
#[derive(Debug, Clone, PartialEq)]
pub struct QsdRun {
    /// One entry per requested time; values freeze once the run stops.
    pub checkpoints: Vec<QsdCheckpoint>,
    pub terminal: QsdCheckpoint,
    pub terminal_index: Option<usize>,
    pub final_state: QuantumState,
    pub final_x: SimplexPoint,
    pub steps: u64,
}

struct QsdState {
    psi: CVector,
    x: Vec<f64>,
    tilde: Vec<f64>,
    steps: u64,
}

/// Integrates the commuting state equation from e and compares against the
/// pullback at the checkpoint times and at the end.
pub fn run_commuting_qsd(
    psi0: &QuantumState,
    map: &MeasurementMap,
    cfg: &SdeConfig,
    seed: StreamSeed,
    checkpoint_times: &[f64],
) -> Result<QsdRun> {
    cfg.validate()?;
    let qsd = CommutingQsd::new(map.kraus(), cfg.conformal_factor)?;
    let psi = psi0
        .as_pure()
        .ok_or_else(|| Error::InvalidState("the state equation needs a pure initial state".into()))?
        .clone();
    let p0 = map.kraus().born_probabilities(psi0)?;
    let n = map.n();
    let mut state = QsdState {
        psi,
        x: vec![1.0 / n as f64; n],
        tilde: vec![0.0; n],
        steps: 0,
    };
    tilde_into(&state.x, p0.components(), &mut state.tilde)?;
    let mut rng = seed.rng();
    let mut dw = vec![0.0; n];
    let max_steps = cfg.max_steps();
    let collapsed = |tilde: &[f64]| -> Option<usize> {
        let (k, max) =
            tilde
                .iter()
                .copied()
                .enumerate()
                .fold(
                    (0, f64::NEG_INFINITY),
                    |b, (i, v)| if v > b.1 { (i, v) } else { b },
                );
        (max >= 1.0 - cfg.eps_stop).then_some(k)
    };
    let snapshot = |s: &QsdState| -> Result<QsdCheckpoint> {
        let xp = SimplexPoint::from_weights(&s.x)?;
        let pulled = map.pullback_state(&xp, psi0)?;
        let a = qsd.a_operators(&s.x)?;
        let own = qsd.expectations(&s.psi, &a);
        let initial = CommutingQsd::initial_form_expectations(&s.x, p0.components());
        let gap = own
            .iter()
            .zip(&initial)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        Ok(QsdCheckpoint {
            time: s.steps as f64 * cfg.dt,
            fidelity: fidelity(&pulled, &QuantumState::Pure(s.psi.clone()))?,
            expectation_gap: gap,
            tilde: s.tilde.clone(),
        })
    };
    let mut advance = |s: &mut QsdState, until: u64| -> Result<()> {
        while s.steps < until && collapsed(&s.tilde).is_none() {
            wiener_increments(&mut rng, cfg.dt, &mut dw);
            qsd.step(&mut s.psi, &mut s.x, cfg.dt, &dw)?;
            s.steps += 1;
            tilde_into(&s.x, p0.components(), &mut s.tilde)?;
        }
        Ok(())
    };
    let mut checkpoints = Vec::with_capacity(checkpoint_times.len());
    for &t in checkpoint_times {
        advance(&mut state, checkpoint_step(t, cfg.dt).min(max_steps))?;
        checkpoints.push(snapshot(&state)?);
    }
    advance(&mut state, max_steps)?;
    Ok(QsdRun {
        checkpoints,
        terminal: snapshot(&state)?,
        terminal_index: collapsed(&state.tilde),
        final_x: SimplexPoint::from_weights(&state.x)?,
        final_state: QuantumState::Pure(state.psi),
        steps: state.steps,
    })
}

/// Spec-shaped single step: returns the new state and simplex point.
pub fn qsd_step(
    psi: &QuantumState,
    x: &SimplexPoint,
    kraus: &KrausSet,
    dt: f64,
    dw: &[f64],
) -> Result<(QuantumState, SimplexPoint)> {
    let qsd = CommutingQsd::new(kraus, 1.0)?;
    let mut v = psi
        .as_pure()
        .ok_or_else(|| Error::InvalidState("the state equation needs a pure state".into()))?
        .clone();
    let mut xs = x.components().to_vec();
    qsd.step(&mut v, &mut xs, dt, dw)?;
    Ok((QuantumState::Pure(v), SimplexPoint::from_weights(&xs)?))
}
