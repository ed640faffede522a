//! Continuous limit of the weak-measurement chain: a diffusion on the simplex
//! with the invariant metric g = c·J Jᵀ, J^i_α = xⁱ(δ^i_α − x^α), and drift
//! g·b with b_j = p⁰_j / Tr(x ∘ p⁰).
//!
//! Integration uses Euler–Maruyama with n independent Wiener components. The
//! stepping code works on the closed forms
//!
//! ```text
//! (g·b)ⁱ   = c·xⁱ((x̃ⁱ − xⁱ) − Σ_j xʲ(x̃ʲ − xʲ))
//! (a·dW)ⁱ  = √c·xⁱ(dWⁱ − Σ_j xʲ dWʲ)
//! ```
//!
//! and the matrix forms are kept for verification.

use nalgebra::DMatrix;
use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::discrete::{reconstruct_state, CollapseBasis};
use crate::error::{Error, Result};
use crate::operators::state::fidelity;
use crate::operators::{CVector, KrausSet, QuantumState};
use crate::seed::{wiener_increments, StreamSeed};
use crate::simplex::{SimplexPoint, UNDERFLOW};

/// Components are never allowed below this after a step.
pub const COMPONENT_FLOOR: f64 = 1e-15;

/// Euler–Maruyama parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SdeConfig {
    pub dt: f64,
    pub eps_stop: f64,
    pub max_time: f64,
    pub conformal_factor: f64,
}

impl Default for SdeConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            eps_stop: 1e-3,
            max_time: 50.0,
            conformal_factor: 1.0,
        }
    }
}

impl SdeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::config("dt", format!("{} must be positive", self.dt)));
        }
        if !(self.eps_stop > 0.0 && self.eps_stop < 0.5) {
            return Err(Error::config(
                "eps_stop",
                format!("{} is outside (0, 0.5)", self.eps_stop),
            ));
        }
        if !(self.max_time > 0.0 && self.max_time.is_finite()) {
            return Err(Error::config(
                "max_time",
                format!("{} must be positive", self.max_time),
            ));
        }
        if !(self.conformal_factor > 0.0 && self.conformal_factor.is_finite()) {
            return Err(Error::config(
                "conformal_factor",
                format!("{} must be positive", self.conformal_factor),
            ));
        }
        Ok(())
    }

    /// Step count needed to reach `max_time`.
    pub fn max_steps(&self) -> u64 {
        (self.max_time / self.dt).ceil() as u64
    }
}

fn jacobian(x: &[f64]) -> DMatrix<f64> {
    let n = x.len();
    DMatrix::from_fn(n, n, |i, a| x[i] * (f64::from(u8::from(i == a)) - x[a]))
}

/// gⁱʲ = c·Σ_{αβ} xⁱ(δ^i_α − x^α) η^{αβ} xʲ(δ^j_β − x^β), η = δ − 1/n.
pub fn metric(x: &SimplexPoint, conformal: f64) -> DMatrix<f64> {
    let n = x.dim();
    let j = jacobian(x.components());
    let eta = DMatrix::from_fn(n, n, |a, b| f64::from(u8::from(a == b)) - 1.0 / n as f64);
    (&j * eta * j.transpose()).scale(conformal)
}

/// b_j = p⁰_j / Tr(x ∘ p⁰).
pub fn drift(x: &SimplexPoint, p0: &SimplexPoint) -> Result<Vec<f64>> {
    check_dims(x, p0)?;
    let norm: f64 = x
        .components()
        .iter()
        .zip(p0.components())
        .map(|(a, b)| a * b)
        .sum();
    if norm <= UNDERFLOW {
        return Err(Error::Underflow);
    }
    Ok(p0.components().iter().map(|p| p / norm).collect())
}

/// aⁱ_α = √c·xⁱ(δ^i_α − x^α), so that a·aᵀ = g.
pub fn diffusion_factor(x: &SimplexPoint, conformal: f64) -> DMatrix<f64> {
    jacobian(x.components()).scale(conformal.sqrt())
}

/// g·v evaluated as c·J(Jᵀv) in O(n).
pub fn apply_metric(x: &[f64], v: &[f64], conformal: f64, out: &mut [f64]) {
    let xv: f64 = x.iter().zip(v).map(|(a, b)| a * b).sum();
    // u_α = x^α (v_α − x·v)
    let xu: f64 = x.iter().zip(v).map(|(a, b)| a * a * (b - xv)).sum();
    for ((o, xi), vi) in out.iter_mut().zip(x).zip(v) {
        *o = conformal * xi * (xi * (vi - xv) - xu);
    }
}

/// a·dW evaluated in O(n).
pub fn apply_diffusion(x: &[f64], dw: &[f64], conformal: f64, out: &mut [f64]) {
    let xw: f64 = x.iter().zip(dw).map(|(a, b)| a * b).sum();
    let s = conformal.sqrt();
    for ((o, xi), wi) in out.iter_mut().zip(x).zip(dw) {
        *o = s * xi * (wi - xw);
    }
}

/// Writes x̃ = x ⋆ p⁰ into `out`.
pub fn tilde_into(x: &[f64], p0: &[f64], out: &mut [f64]) -> Result<()> {
    let mut norm = 0.0;
    for ((o, a), b) in out.iter_mut().zip(x).zip(p0) {
        *o = a * b;
        norm += *o;
    }
    if norm <= UNDERFLOW {
        return Err(Error::Underflow);
    }
    for o in out.iter_mut() {
        *o /= norm;
    }
    Ok(())
}

/// Clamps components below [`COMPONENT_FLOOR`] and renormalizes. Returns
/// true when a clamp happened.
fn repair(x: &mut [f64]) -> bool {
    let mut clamped = false;
    for c in x.iter_mut() {
        if !(*c >= COMPONENT_FLOOR) {
            *c = COMPONENT_FLOOR;
            clamped = true;
        }
    }
    let sum: f64 = x.iter().sum();
    for c in x.iter_mut() {
        *c /= sum;
    }
    clamped
}

/// In-place Euler–Maruyama step of the x process. `scratch` must hold 2n
/// values. Returns true when the simplex repair had to clamp.
pub fn em_step_in_place(
    x: &mut [f64],
    p0: &[f64],
    dt: f64,
    conformal: f64,
    dw: &[f64],
    scratch: &mut [f64],
) -> Result<bool> {
    let n = x.len();
    let (tilde, noise) = scratch.split_at_mut(n);
    tilde_into(x, p0, tilde)?;
    let shift: f64 = x.iter().zip(tilde.iter()).map(|(a, t)| a * (t - a)).sum();
    apply_diffusion(x, dw, conformal, noise);
    for i in 0..n {
        x[i] += conformal * x[i] * ((tilde[i] - x[i]) - shift) * dt + noise[i];
    }
    Ok(repair(x))
}

/// Result of one Euler–Maruyama step.
#[derive(Debug, Clone, PartialEq)]
pub struct EmStep {
    pub x: SimplexPoint,
    /// Set when a component had to be clamped at the floor.
    pub near_collapse: bool,
}

/// x' = x + g·b·dt + a·dW, projected back onto the simplex.
pub fn em_step(
    x: &SimplexPoint,
    p0: &SimplexPoint,
    dt: f64,
    conformal: f64,
    dw: &[f64],
) -> Result<EmStep> {
    check_dims(x, p0)?;
    if dw.len() != x.dim() {
        return Err(Error::DimensionMismatch {
            expected: x.dim(),
            found: dw.len(),
        });
    }
    let mut next = x.components().to_vec();
    let mut scratch = vec![0.0; 2 * x.dim()];
    let near_collapse =
        em_step_in_place(&mut next, p0.components(), dt, conformal, dw, &mut scratch)?;
    Ok(EmStep {
        x: SimplexPoint::from_weights(&next)?,
        near_collapse,
    })
}

/// x̃ = x ⋆ p⁰.
pub fn to_tilde(x: &SimplexPoint, p0: &SimplexPoint) -> Result<SimplexPoint> {
    x.star(p0)
}

/// x = x̃ ⋆ (p⁰)⁻¹; needs an interior p⁰.
pub fn from_tilde(tilde: &SimplexPoint, p0: &SimplexPoint) -> Result<SimplexPoint> {
    tilde.star(&p0.inverse()?)
}

/// m₂ − 2m₃ + m₂² with m_k = Σ_i (xⁱ)^k.
pub fn moment_functional(x: &[f64]) -> f64 {
    let (m2, m3) = x
        .iter()
        .fold((0.0, 0.0), |(a, b), c| (a + c * c, b + c * c * c));
    (m2 - 2.0 * m3 + m2 * m2).max(0.0)
}

/// Euler–Maruyama step of the projective state equation
/// dψ = −(c/8)Σ_j (P_j − ⟨P_j⟩)²ψ dt + (√c/2)Σ_i (P_i − ⟨P_i⟩)ψ dWⁱ,
/// followed by renormalization.
pub fn projective_state_step(
    psi: &CVector,
    projectors: &KrausSet,
    dt: f64,
    conformal: f64,
    dw: &[f64],
) -> Result<CVector> {
    let mut next = psi.clone();
    let mut scratch = StateScratch::new(psi.len());
    projective_state_step_in_place(&mut next, projectors, dt, conformal, dw, &mut scratch)?;
    Ok(next)
}

/// Work vectors for [`projective_state_step_in_place`].
#[derive(Debug, Clone)]
pub struct StateScratch {
    phi: CVector,
    delta: CVector,
}

impl StateScratch {
    pub fn new(dim: usize) -> Self {
        Self {
            phi: CVector::zeros(dim),
            delta: CVector::zeros(dim),
        }
    }
}

/// [`projective_state_step`] without allocation. Uses P² = P so each
/// projector costs one matrix-vector product.
pub fn projective_state_step_in_place(
    psi: &mut CVector,
    projectors: &KrausSet,
    dt: f64,
    conformal: f64,
    dw: &[f64],
    scratch: &mut StateScratch,
) -> Result<()> {
    if dw.len() != projectors.len() {
        return Err(Error::DimensionMismatch {
            expected: projectors.len(),
            found: dw.len(),
        });
    }
    let half_root = 0.5 * conformal.sqrt();
    let drift = -0.125 * conformal * dt;
    let StateScratch { phi, delta } = scratch;
    delta.fill(Complex::new(0.0, 0.0));
    for (p, w) in projectors.operators().iter().zip(dw) {
        phi.gemv(Complex::new(1.0, 0.0), p, psi, Complex::new(0.0, 0.0));
        let mean = psi.dotc(phi).re;
        for ((d, f), s) in delta.iter_mut().zip(phi.iter()).zip(psi.iter()) {
            // (P − m)ψ and (P − m)²ψ = (1 − m)Pψ − m(P − m)ψ
            let dev = f - s * mean;
            let dev2 = f * (1.0 - mean) - dev * mean;
            *d += dev2 * drift + dev * (half_root * w);
        }
    }
    *psi += &*delta;
    let norm = psi.norm();
    if !(norm > 0.0) {
        return Err(Error::InvalidState(
            "state equation produced a zero vector".into(),
        ));
    }
    psi.unscale_mut(norm);
    Ok(())
}

fn check_dims(x: &SimplexPoint, y: &SimplexPoint) -> Result<()> {
    if x.dim() != y.dim() {
        return Err(Error::DimensionMismatch {
            expected: x.dim(),
            found: y.dim(),
        });
    }
    Ok(())
}

/// Mutable integrator state for one classical trajectory.
#[derive(Debug, Clone)]
pub struct SdeWalker {
    cfg: SdeConfig,
    p0: Vec<f64>,
    x: Vec<f64>,
    tilde: Vec<f64>,
    scratch: Vec<f64>,
    steps: u64,
    clamps: u64,
}

impl SdeWalker {
    pub fn new(x0: &SimplexPoint, p0: &SimplexPoint, cfg: SdeConfig) -> Result<Self> {
        cfg.validate()?;
        check_dims(x0, p0)?;
        let n = x0.dim();
        let mut tilde = vec![0.0; n];
        tilde_into(x0.components(), p0.components(), &mut tilde)?;
        Ok(Self {
            cfg,
            p0: p0.components().to_vec(),
            x: x0.components().to_vec(),
            tilde,
            scratch: vec![0.0; 2 * n],
            steps: 0,
            clamps: 0,
        })
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }

    /// Advances one step with the given Wiener increment.
    pub fn step(&mut self, dw: &[f64]) -> Result<()> {
        let clamped = em_step_in_place(
            &mut self.x,
            &self.p0,
            self.cfg.dt,
            self.cfg.conformal_factor,
            dw,
            &mut self.scratch,
        )?;
        self.clamps += u64::from(clamped);
        self.steps += 1;
        tilde_into(&self.x, &self.p0, &mut self.tilde)
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn tilde(&self) -> &[f64] {
        &self.tilde
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn time(&self) -> f64 {
        self.steps as f64 * self.cfg.dt
    }

    pub fn clamps(&self) -> u64 {
        self.clamps
    }

    /// Vertex index once max x̃ ≥ 1 − eps_stop.
    pub fn collapsed(&self) -> Option<usize> {
        let (k, max) = argmax(&self.tilde);
        (max >= 1.0 - self.cfg.eps_stop).then_some(k)
    }

    pub fn timed_out(&self) -> bool {
        self.steps >= self.cfg.max_steps()
    }

    pub fn finished(&self) -> bool {
        self.collapsed().is_some() || self.timed_out()
    }
}

fn argmax(v: &[f64]) -> (usize, f64) {
    v.iter().copied().enumerate().fold(
        (0, f64::NEG_INFINITY),
        |b, (i, c)| if c > b.1 { (i, c) } else { b },
    )
}

/// A recorded classical trajectory with its full noise log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub seed: StreamSeed,
    pub config: SdeConfig,
    pub p0: SimplexPoint,
    pub x0: SimplexPoint,
    /// Every `record_every`-th step is stored, plus the final one.
    pub record_every: u64,
    pub times: Vec<f64>,
    pub xs: Vec<SimplexPoint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub states: Option<Vec<QuantumState>>,
    /// One n-vector of Wiener increments per step.
    pub noise: Vec<Vec<f64>>,
    pub terminal_outcome: Option<usize>,
    pub clamped_steps: u64,
}

impl Trajectory {
    pub fn steps(&self) -> usize {
        self.noise.len()
    }

    /// Re-integrates the stored noise and returns the recorded points it
    /// reproduces.
    pub fn replay(&self) -> Result<Vec<SimplexPoint>> {
        let mut walker = SdeWalker::new(&self.x0, &self.p0, self.config)?;
        let total = self.noise.len() as u64;
        let mut out = vec![self.x0.clone()];
        for (s, dw) in self.noise.iter().enumerate() {
            walker.step(dw)?;
            let s = s as u64 + 1;
            if s.is_multiple_of(self.record_every) || s == total {
                out.push(SimplexPoint::from_weights(walker.x())?);
            }
        }
        Ok(out)
    }
}

/// Integrates from `x0` until collapse or `max_time`.
pub fn run_trajectory(
    x0: &SimplexPoint,
    p0: &SimplexPoint,
    cfg: &SdeConfig,
    seed: StreamSeed,
    record_every: u64,
) -> Result<Trajectory> {
    if record_every == 0 {
        return Err(Error::config("record_every", "must be at least 1"));
    }
    let mut walker = SdeWalker::new(x0, p0, *cfg)?;
    let mut rng = seed.rng();
    let mut dw = vec![0.0; x0.dim()];
    let mut times = vec![0.0];
    let mut xs = vec![x0.clone()];
    let mut noise = Vec::new();
    while !walker.finished() {
        wiener_increments(&mut rng, cfg.dt, &mut dw);
        walker.step(&dw)?;
        noise.push(dw.clone());
        if walker.steps() % record_every == 0 || walker.finished() {
            times.push(walker.time());
            xs.push(SimplexPoint::from_weights(walker.x())?);
        }
    }
    Ok(Trajectory {
        seed,
        config: *cfg,
        p0: p0.clone(),
        x0: x0.clone(),
        record_every,
        times,
        xs,
        states: None,
        noise,
        terminal_outcome: walker.collapsed(),
        clamped_steps: walker.clamps(),
    })
}

/// Both descriptions of a coupled run at one instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoupledCheckpoint {
    pub time: f64,
    /// Fidelity between the state rebuilt from x and the integrated state.
    pub fidelity: f64,
    /// x̃ of the classical process.
    pub tilde: Vec<f64>,
    /// Born weights ⟨P_i⟩ of the integrated state.
    pub weights: Vec<f64>,
}

/// Classical process and projective state equation driven by one noise
/// stream.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledRun {
    /// One entry per requested time; values freeze once the run stops.
    pub checkpoints: Vec<CoupledCheckpoint>,
    pub terminal: CoupledCheckpoint,
    pub terminal_outcome: Option<usize>,
    pub final_state: QuantumState,
    pub final_x: SimplexPoint,
    pub steps: u64,
}

/// Runs x from e and |ψ⟩ from `psi0` on the same dW, comparing the two
/// descriptions at each checkpoint time and at the end.
pub fn run_coupled_projective(
    psi0: &QuantumState,
    projectors: &KrausSet,
    cfg: &SdeConfig,
    seed: StreamSeed,
    checkpoint_times: &[f64],
) -> Result<CoupledRun> {
    if !projectors.is_projective() {
        return Err(Error::NotProjective(
            "the state equation needs a projective set".into(),
        ));
    }
    let basis = CollapseBasis::new(psi0, projectors)?;
    let n = projectors.len();
    let e = SimplexPoint::identity(n)?;
    let mut walker = SdeWalker::new(&e, basis.p0(), *cfg)?;
    let mut psi = psi0
        .as_pure()
        .expect("checked by the collapse basis")
        .clone();
    let mut scratch = StateScratch::new(psi.len());
    let mut rng = seed.rng();
    let mut dw = vec![0.0; n];
    let snapshot = |walker: &SdeWalker, psi: &CVector| -> Result<CoupledCheckpoint> {
        let rebuilt = reconstruct_state(&SimplexPoint::from_weights(walker.x())?, &basis)?;
        Ok(CoupledCheckpoint {
            time: walker.time(),
            fidelity: fidelity(&rebuilt, &QuantumState::Pure(psi.clone()))?,
            tilde: walker.tilde().to_vec(),
            weights: projector_weights(psi, projectors),
        })
    };
    let mut checkpoints = Vec::with_capacity(checkpoint_times.len());
    for &t in checkpoint_times {
        let target = checkpoint_step(t, cfg.dt);
        while walker.steps() < target && !walker.finished() {
            wiener_increments(&mut rng, cfg.dt, &mut dw);
            projective_state_step_in_place(
                &mut psi,
                projectors,
                cfg.dt,
                cfg.conformal_factor,
                &dw,
                &mut scratch,
            )?;
            walker.step(&dw)?;
        }
        checkpoints.push(snapshot(&walker, &psi)?);
    }
    while !walker.finished() {
        wiener_increments(&mut rng, cfg.dt, &mut dw);
        projective_state_step_in_place(
            &mut psi,
            projectors,
            cfg.dt,
            cfg.conformal_factor,
            &dw,
            &mut scratch,
        )?;
        walker.step(&dw)?;
    }
    Ok(CoupledRun {
        checkpoints,
        terminal: snapshot(&walker, &psi)?,
        terminal_outcome: walker.collapsed(),
        final_state: QuantumState::Pure(psi),
        final_x: SimplexPoint::from_weights(walker.x())?,
        steps: walker.steps(),
    })
}

/// Step index at which a checkpoint time is sampled.
pub fn checkpoint_step(time: f64, dt: f64) -> u64 {
    (time / dt).round().max(0.0) as u64
}

/// Born weights ⟨P_i⟩ of a pure state.
pub fn projector_weights(psi: &CVector, projectors: &KrausSet) -> Vec<f64> {
    projectors
        .operators()
        .iter()
        .map(|p| psi.dotc(&(p * psi)).re)
        .collect()
}

/// Lifts real amplitudes to a state vector.
pub fn real_state(amplitudes: &[f64]) -> CVector {
    CVector::from_iterator(
        amplitudes.len(),
        amplitudes.iter().map(|a| Complex::new(*a, 0.0)),
    )
}
