//! The classical state space: probability vectors on the simplex with the
//! normalized Hadamard product as an abelian group operation.
//!
//! Interior points have every component in (0, 1); closure points (such as the
//! vertices) may contain zeros and have no group inverse.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance for every simplex comparison.
pub const SIMPLEX_TOL: f64 = 1e-12;

/// Components at or below this value are considered underflowed to the boundary.
pub const UNDERFLOW: f64 = 1e-300;

/// A point of the closed probability simplex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct SimplexPoint {
    components: Vec<f64>,
}

impl SimplexPoint {
    /// Validates `components` as a closure point: n >= 2, each entry finite in
    /// [0, 1], and the entries sum to 1 within [`SIMPLEX_TOL`].
    pub fn new(components: Vec<f64>) -> Result<Self> {
        if components.len() < 2 {
            return Err(Error::TooFewOutcomes(components.len()));
        }
        for (i, &c) in components.iter().enumerate() {
            if !c.is_finite() || !(0.0..=1.0).contains(&c) {
                return Err(Error::NotSimplex(format!(
                    "component {i} = {c} is outside [0, 1]"
                )));
            }
        }
        let sum: f64 = components.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::NotSimplex(format!("components sum to {sum}, not 1")));
        }
        Ok(Self { components })
    }

    /// Like [`SimplexPoint::new`] but also rejects boundary points.
    pub fn interior(components: Vec<f64>) -> Result<Self> {
        let p = Self::new(components)?;
        if !p.is_interior() {
            return Err(Error::Domain("point lies on the simplex boundary".into()));
        }
        Ok(p)
    }

    /// Normalizes nonnegative weights onto the simplex.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        if weights.len() < 2 {
            return Err(Error::TooFewOutcomes(weights.len()));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::NotSimplex(
                "weights must be finite and nonnegative".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::Domain("weights have zero total mass".into()));
        }
        Ok(Self {
            components: weights.iter().map(|w| w / total).collect(),
        })
    }

    /// Builds a point from log-weights, normalizing in log space.
    ///
    /// Entries equal to `-inf` give exact zeros.
    pub fn from_log_weights(log_weights: &[f64]) -> Result<Self> {
        let max = log_weights
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(Error::Domain("log-weights have no finite maximum".into()));
        }
        let weights: Vec<f64> = log_weights.iter().map(|l| (l - max).exp()).collect();
        Self::from_weights(&weights)
    }

    /// The group identity e = (1/n, ..., 1/n).
    pub fn identity(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::TooFewOutcomes(n));
        }
        Ok(Self {
            components: vec![1.0 / n as f64; n],
        })
    }

    /// The vertex with a single unit component at index `k` (zero-based).
    pub fn vertex(n: usize, k: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::TooFewOutcomes(n));
        }
        if k >= n {
            return Err(Error::Domain(format!(
                "vertex index {k} out of range for n = {n}"
            )));
        }
        let mut components = vec![0.0; n];
        components[k] = 1.0;
        Ok(Self { components })
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[f64] {
        &self.components
    }

    pub fn into_components(self) -> Vec<f64> {
        self.components
    }

    /// True when every component is above [`UNDERFLOW`].
    pub fn is_interior(&self) -> bool {
        self.components.iter().all(|&c| c > UNDERFLOW)
    }

    /// True when one component equals 1 within [`SIMPLEX_TOL`].
    pub fn is_vertex(&self) -> bool {
        self.components
            .iter()
            .any(|&c| (c - 1.0).abs() <= SIMPLEX_TOL)
    }

    /// Index and value of the largest component (first one on ties).
    pub fn argmax(&self) -> (usize, f64) {
        self.components
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, c)| {
                if c > best.1 {
                    (i, c)
                } else {
                    best
                }
            })
    }

    /// Largest absolute componentwise difference.
    pub fn max_abs_diff(&self, other: &SimplexPoint) -> f64 {
        self.components
            .iter()
            .zip(&other.components)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Group product (x ⋆ y)^i = x^i y^i / Σ_k x^k y^k.
    ///
    /// Defined on closure points as long as the supports overlap.
    pub fn star(&self, other: &SimplexPoint) -> Result<SimplexPoint> {
        check_same_dim(self, other)?;
        let prod = hadamard(&self.components, &other.components);
        let norm = trace(&prod);
        if norm <= UNDERFLOW {
            return Err(Error::Domain(
                "star product has a vanishing normalizer".into(),
            ));
        }
        Ok(SimplexPoint {
            components: prod.into_iter().map(|p| p / norm).collect(),
        })
    }

    /// Group inverse x⁻¹ = x̄ / Tr(x̄) with x̄^i = 1/x^i.
    pub fn inverse(&self) -> Result<SimplexPoint> {
        if !self.is_interior() {
            return Err(Error::Domain(
                "boundary points have no group inverse".into(),
            ));
        }
        let recip: Vec<f64> = self.components.iter().map(|c| 1.0 / c).collect();
        Self::from_weights(&recip)
    }

    /// Applies a permutation: (σx)^i = x^{σ(i)}.
    pub fn permuted(&self, perm: &[usize]) -> Result<SimplexPoint> {
        if perm.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: perm.len(),
            });
        }
        let mut seen = vec![false; perm.len()];
        for &p in perm {
            if p >= perm.len() || std::mem::replace(&mut seen[p], true) {
                return Err(Error::Domain("not a permutation".into()));
            }
        }
        Ok(SimplexPoint {
            components: perm.iter().map(|&p| self.components[p]).collect(),
        })
    }
}

impl TryFrom<Vec<f64>> for SimplexPoint {
    type Error = Error;

    fn try_from(value: Vec<f64>) -> Result<Self> {
        SimplexPoint::new(value)
    }
}

impl From<SimplexPoint> for Vec<f64> {
    fn from(p: SimplexPoint) -> Self {
        p.components
    }
}

/// Componentwise product of two vectors.
pub fn hadamard(x: &[f64], y: &[f64]) -> Vec<f64> {
    x.iter().zip(y).map(|(a, b)| a * b).collect()
}

/// Sum of components.
pub fn trace(x: &[f64]) -> f64 {
    x.iter().sum()
}

fn check_same_dim(x: &SimplexPoint, y: &SimplexPoint) -> Result<()> {
    if x.dim() != y.dim() {
        return Err(Error::DimensionMismatch {
            expected: x.dim(),
            found: y.dim(),
        });
    }
    Ok(())
}

/// The n fixed outcome points of one weak measurement. They must average to
/// the identity: Σ_k x₍ₖ₎ = n·e.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FundamentalSteps {
    steps: Vec<SimplexPoint>,
    lambda: Option<f64>,
}

impl FundamentalSteps {
    /// Symmetric ray construction x₍ₖ₎ = e + λ(v₍ₖ₎ − e).
    pub fn symmetric(n: usize, lambda: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::TooFewOutcomes(n));
        }
        if !(lambda > 0.0 && lambda < 1.0) {
            return Err(Error::Domain(format!(
                "step strength lambda = {lambda} is outside (0, 1)"
            )));
        }
        let base = (1.0 - lambda) / n as f64;
        let steps = (0..n)
            .map(|k| {
                let mut c = vec![base; n];
                c[k] += lambda;
                SimplexPoint::interior(c)
            })
            .collect::<Result<Vec<_>>>()?;
        let out = Self {
            steps,
            lambda: Some(lambda),
        };
        out.check_balance()?;
        Ok(out)
    }

    /// User-supplied steps, validated against the balance condition.
    pub fn custom(steps: Vec<SimplexPoint>) -> Result<Self> {
        let n = steps.len();
        if n < 2 {
            return Err(Error::TooFewOutcomes(n));
        }
        for s in &steps {
            if s.dim() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: s.dim(),
                });
            }
            if !s.is_interior() {
                return Err(Error::Domain(
                    "fundamental steps must be interior points".into(),
                ));
            }
        }
        let out = Self {
            steps,
            lambda: None,
        };
        out.check_balance()?;
        Ok(out)
    }

    /// Largest deviation of Σ_k x₍ₖ₎ from n·e = (1, ..., 1).
    pub fn balance_residual(&self) -> f64 {
        let n = self.steps.len();
        (0..n)
            .map(|i| (self.steps.iter().map(|s| s.components()[i]).sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    fn check_balance(&self) -> Result<()> {
        let r = self.balance_residual();
        if r > SIMPLEX_TOL {
            return Err(Error::Domain(format!(
                "fundamental steps do not average to the identity (residual {r:.3e})"
            )));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.steps.len()
    }

    pub fn steps(&self) -> &[SimplexPoint] {
        &self.steps
    }

    pub fn step(&self, k: usize) -> &SimplexPoint {
        &self.steps[k]
    }

    pub fn lambda(&self) -> Option<f64> {
        self.lambda
    }

    /// Per-step log components, used by log-domain chain accumulation.
    pub fn log_steps(&self) -> Vec<Vec<f64>> {
        self.steps
            .iter()
            .map(|s| s.components().iter().map(|c| c.ln()).collect())
            .collect()
    }
}
