//! Discrete weak-measurement chains.
//!
//! A strong projective measurement {P_i} is replaced by repeated weak
//! measurements N₍ₖ₎ = Σ_i √(x₍ₖ₎ⁱ) P_i. After outcomes k₁..k_s the quantum
//! state only depends on the product x_s = x₍k₁₎ ⋆ ... ⋆ x₍kₛ₎, so the chain is
//! simulated on the simplex alone and the state is rebuilt on demand.

use num_complex::Complex;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operators::state::MIN_PROBABILITY;
use crate::operators::{CMatrix, CVector, KrausSet, QuantumState};
use crate::seed::StreamSeed;
use crate::simplex::{FundamentalSteps, SimplexPoint, UNDERFLOW};

/// Weak operators built from a projective set and matching fundamental steps.
#[derive(Debug, Clone)]
pub struct WeakOperatorSet {
    operators: Vec<CMatrix>,
    steps: FundamentalSteps,
    projectors: KrausSet,
    log_steps: Vec<Vec<f64>>,
}

impl WeakOperatorSet {
    pub fn new(steps: FundamentalSteps, projectors: KrausSet) -> Result<Self> {
        if !projectors.is_projective() {
            return Err(Error::NotProjective(
                "weak operators need Hermitian, idempotent, mutually orthogonal projectors".into(),
            ));
        }
        if steps.n() != projectors.len() {
            return Err(Error::DimensionMismatch {
                expected: projectors.len(),
                found: steps.n(),
            });
        }
        let d = projectors.dim();
        let operators = steps
            .steps()
            .iter()
            .map(|step| {
                step.components()
                    .iter()
                    .zip(projectors.operators())
                    .fold(CMatrix::zeros(d, d), |acc, (c, p)| acc + p.scale(c.sqrt()))
            })
            .collect();
        let log_steps = steps.log_steps();
        Ok(Self {
            operators,
            steps,
            projectors,
            log_steps,
        })
    }

    /// Symmetric steps of strength `lambda` over `projectors`.
    pub fn symmetric(projectors: KrausSet, lambda: f64) -> Result<Self> {
        let steps = FundamentalSteps::symmetric(projectors.len(), lambda)?;
        Self::new(steps, projectors)
    }

    pub fn operators(&self) -> &[CMatrix] {
        &self.operators
    }

    pub fn operator(&self, k: usize) -> &CMatrix {
        &self.operators[k]
    }

    pub fn steps(&self) -> &FundamentalSteps {
        &self.steps
    }

    pub fn projectors(&self) -> &KrausSet {
        &self.projectors
    }

    /// Number of outcomes n.
    pub fn n(&self) -> usize {
        self.operators.len()
    }

    pub fn completeness_residual(&self) -> f64 {
        crate::operators::completeness_residual(&self.operators)
            .expect("square operators of equal size")
    }

    /// Outcome probabilities ⟨ψ|N₍ₖ₎†N₍ₖ₎|ψ⟩ evaluated with matrices.
    pub fn matrix_probabilities(&self, state: &QuantumState) -> Vec<f64> {
        self.operators
            .iter()
            .map(|m| state.expectation(&(m.adjoint() * m)).re)
            .collect()
    }
}

/// Conditional outcome law P(k | x) = Tr(x ∘ p⁰ ∘ x₍ₖ₎) / Tr(x ∘ p⁰), written
/// in terms of x̃ = x ⋆ p⁰ as Σ_i x̃ⁱ x₍ₖ₎ⁱ.
pub fn outcome_probabilities(tilde: &[f64], steps: &FundamentalSteps) -> Vec<f64> {
    steps
        .steps()
        .iter()
        .map(|s| s.components().iter().zip(tilde).map(|(a, b)| a * b).sum())
        .collect()
}

fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let total: f64 = probs.iter().sum();
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (k, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return k;
        }
    }
    probs
        .iter()
        .rposition(|p| *p > 0.0)
        .unwrap_or(probs.len() - 1)
}

/// Draws one weak outcome at x and returns it with x ⋆ x₍ₖ₎.
pub fn sample_step<R: Rng + ?Sized>(
    x: &SimplexPoint,
    set: &WeakOperatorSet,
    p0: &SimplexPoint,
    rng: &mut R,
) -> Result<(usize, SimplexPoint)> {
    if !x.is_interior() {
        return Err(Error::Underflow);
    }
    let tilde = x.star(p0)?;
    let probs = outcome_probabilities(tilde.components(), set.steps());
    let k = sample_index(&probs, rng);
    Ok((k, x.star(set.steps().step(k))?))
}

/// Post-measurement states |ψ̄_i⟩ = P_i|ψ₀⟩/√p_i⁰ of a pure initial state.
#[derive(Debug, Clone)]
pub struct CollapseBasis {
    p0: SimplexPoint,
    states: Vec<Option<CVector>>,
}

impl CollapseBasis {
    pub fn new(psi0: &QuantumState, projectors: &KrausSet) -> Result<Self> {
        let psi = psi0.as_pure().ok_or_else(|| {
            Error::InvalidState("state reconstruction needs a pure initial state".into())
        })?;
        let p0 = projectors.born_probabilities(psi0)?;
        let states = projectors
            .operators()
            .iter()
            .map(|p| {
                let v = p * psi;
                let norm = v.norm();
                (norm * norm > MIN_PROBABILITY).then(|| v.unscale(norm))
            })
            .collect();
        Ok(Self { p0, states })
    }

    pub fn p0(&self) -> &SimplexPoint {
        &self.p0
    }

    /// The collapse state for outcome i, or `None` when p_i⁰ vanishes.
    pub fn state(&self, i: usize) -> Option<&CVector> {
        self.states[i].as_ref()
    }
}

/// |ψ⟩ = Σ_i √(x̃ⁱ) |ψ̄_i⟩ with x̃ = x ⋆ p⁰.
pub fn reconstruct_state(x: &SimplexPoint, basis: &CollapseBasis) -> Result<QuantumState> {
    let tilde = x.star(&basis.p0)?;
    let d = basis
        .states
        .iter()
        .flatten()
        .next()
        .map(|v| v.len())
        .ok_or_else(|| Error::InvalidState("no outcome has positive probability".into()))?;
    let mut psi = CVector::zeros(d);
    for (w, state) in tilde.components().iter().zip(&basis.states) {
        if let Some(v) = state {
            psi += v * Complex::new(w.sqrt(), 0.0);
        }
    }
    QuantumState::pure_normalized(psi)
}

/// Stopping and truncation parameters of a chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainConfig {
    pub eps_stop: f64,
    pub max_steps: u64,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            eps_stop: 1e-3,
            max_steps: 1_000_000,
        }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps_stop > 0.0 && self.eps_stop < 0.5) {
            return Err(Error::config(
                "eps_stop",
                format!("{} is outside (0, 0.5)", self.eps_stop),
            ));
        }
        if self.max_steps == 0 {
            return Err(Error::config("max_steps", "must be at least 1"));
        }
        Ok(())
    }
}

/// Log-domain chain state. `log_x` is kept normalized so that its
/// log-sum-exp is zero.
#[derive(Debug, Clone)]
pub struct ChainWalker<'a> {
    steps: &'a FundamentalSteps,
    log_steps: &'a [Vec<f64>],
    log_p0: Vec<f64>,
    log_x: Vec<f64>,
    tilde: Vec<f64>,
    probs: Vec<f64>,
    steps_taken: u64,
}

impl<'a> ChainWalker<'a> {
    /// Starts at the identity e.
    pub fn new(set: &'a WeakOperatorSet, p0: &SimplexPoint) -> Result<Self> {
        let n = set.n();
        if p0.dim() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: p0.dim(),
            });
        }
        let mut walker = Self {
            steps: &set.steps,
            log_steps: &set.log_steps,
            log_p0: p0.components().iter().map(|p| p.ln()).collect(),
            log_x: vec![-(n as f64).ln(); n],
            tilde: vec![0.0; n],
            probs: vec![0.0; n],
            steps_taken: 0,
        };
        walker.refresh_tilde();
        Ok(walker)
    }

    fn refresh_tilde(&mut self) {
        let max = self
            .log_x
            .iter()
            .zip(&self.log_p0)
            .map(|(a, b)| a + b)
            .fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for ((t, a), b) in self.tilde.iter_mut().zip(&self.log_x).zip(&self.log_p0) {
            *t = (a + b - max).exp();
            total += *t;
        }
        for t in &mut self.tilde {
            *t /= total;
        }
    }

    /// Applies outcome k: log x ← log x + log x₍ₖ₎, renormalized.
    pub fn apply(&mut self, k: usize) {
        for (l, s) in self.log_x.iter_mut().zip(&self.log_steps[k]) {
            *l += s;
        }
        let max = self.log_x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + self.log_x.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
        for l in &mut self.log_x {
            *l -= lse;
        }
        self.steps_taken += 1;
        self.refresh_tilde();
    }

    /// Samples an outcome from the conditional law and applies it.
    pub fn advance<R: Rng + ?Sized>(&mut self, rng: &mut R) -> usize {
        for (p, s) in self.probs.iter_mut().zip(self.steps.steps()) {
            *p = s
                .components()
                .iter()
                .zip(&self.tilde)
                .map(|(a, b)| a * b)
                .sum();
        }
        let k = sample_index(&self.probs, rng);
        self.apply(k);
        k
    }

    /// x̃ = x ⋆ p⁰, the current Born weights.
    pub fn tilde(&self) -> &[f64] {
        &self.tilde
    }

    pub fn x(&self) -> Result<SimplexPoint> {
        let x = SimplexPoint::from_log_weights(&self.log_x)?;
        if !x.is_interior() {
            return Err(Error::Underflow);
        }
        Ok(x)
    }

    pub fn steps_taken(&self) -> u64 {
        self.steps_taken
    }

    /// Index of the vertex reached when max x̃ ≥ 1 − eps_stop.
    pub fn collapsed(&self, eps_stop: f64) -> Option<usize> {
        let (k, max) =
            self.tilde
                .iter()
                .copied()
                .enumerate()
                .fold(
                    (0, f64::NEG_INFINITY),
                    |b, (i, v)| if v > b.1 { (i, v) } else { b },
                );
        (max >= 1.0 - eps_stop).then_some(k)
    }
}

/// One simulated chain with its full outcome record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainRecord {
    pub seed: StreamSeed,
    pub p0: SimplexPoint,
    pub outcomes: Vec<usize>,
    /// x₀ = e followed by the point after each outcome.
    pub xs: Vec<SimplexPoint>,
    pub terminal_outcome: Option<usize>,
    pub steps_taken: u64,
}

impl ChainRecord {
    /// Recomputes the x track from the outcome list with ⋆ products.
    pub fn replay(&self, steps: &FundamentalSteps) -> Result<Vec<SimplexPoint>> {
        let mut x = SimplexPoint::identity(steps.n())?;
        let mut out = Vec::with_capacity(self.outcomes.len() + 1);
        out.push(x.clone());
        for &k in &self.outcomes {
            if k >= steps.n() {
                return Err(Error::Domain(format!("outcome {k} out of range")));
            }
            x = x.star(steps.step(k))?;
            if x.components().iter().any(|c| *c <= UNDERFLOW) {
                return Err(Error::Underflow);
            }
            out.push(x.clone());
        }
        Ok(out)
    }
}

/// Runs a chain from e until collapse or `max_steps`.
pub fn run_chain(
    psi0: &QuantumState,
    set: &WeakOperatorSet,
    cfg: &ChainConfig,
    seed: StreamSeed,
) -> Result<ChainRecord> {
    cfg.validate()?;
    let p0 = set.projectors().born_probabilities(psi0)?;
    let mut rng = seed.rng();
    let mut walker = ChainWalker::new(set, &p0)?;
    let mut outcomes = Vec::new();
    let mut xs = vec![walker.x()?];
    let mut terminal = walker.collapsed(cfg.eps_stop);
    while terminal.is_none() && walker.steps_taken() < cfg.max_steps {
        outcomes.push(walker.advance(&mut rng));
        xs.push(walker.x()?);
        terminal = walker.collapsed(cfg.eps_stop);
    }
    Ok(ChainRecord {
        seed,
        p0,
        outcomes,
        xs,
        terminal_outcome: terminal,
        steps_taken: walker.steps_taken(),
    })
}
