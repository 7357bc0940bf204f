//! Axis-aligned boxes in the unit hypercube.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::orthopoly::PolynomialFamily;

/// Box `∏_j [lower_j, upper_j)` inside `[0,1]^M`. Faces lying on the upper
/// boundary of the cube are closed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subdomain {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl Subdomain {
    pub fn unit(dim: usize) -> Self {
        Self {
            lower: vec![0.0; dim],
            upper: vec![1.0; dim],
        }
    }

    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(Error::shape("subdomain bounds must be nonempty and equal length"));
        }
        for (&lo, &hi) in lower.iter().zip(&upper) {
            if !(0.0..1.0).contains(&lo) || !(hi > lo && hi <= 1.0) {
                return Err(Error::domain(format!("invalid subdomain side [{lo}, {hi})")));
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    /// Probability mass under the uniform measure, i.e. the box volume.
    pub fn mass(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(lo, hi)| hi - lo)
            .product()
    }

    pub fn width(&self, j: usize) -> f64 {
        self.upper[j] - self.lower[j]
    }

    pub fn midpoint(&self, j: usize) -> f64 {
        0.5 * (self.lower[j] + self.upper[j])
    }

    /// Half-open membership; the cube's upper faces are closed.
    pub fn contains(&self, point: &[f64]) -> bool {
        point.len() == self.dim()
            && point
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(&x, (&lo, &hi))| x >= lo && (x < hi || (hi == 1.0 && x == 1.0)))
    }

    /// Whether halving along `j` yields two boxes of positive width.
    pub fn can_split(&self, j: usize) -> bool {
        let mid = self.midpoint(j);
        mid > self.lower[j] && mid < self.upper[j]
    }

    /// Halves the box along `j`, returning `(lower half, upper half)`.
    pub fn split(&self, j: usize) -> Result<(Subdomain, Subdomain)> {
        if j >= self.dim() {
            return Err(Error::shape(format!("split dimension {j} >= {}", self.dim())));
        }
        if !self.can_split(j) {
            return Err(Error::domain("subdomain too narrow to split"));
        }
        let mid = self.midpoint(j);
        let mut low = self.clone();
        let mut high = self.clone();
        low.upper[j] = mid;
        high.lower[j] = mid;
        Ok((low, high))
    }

    /// Legendre families orthonormal on each side of the box.
    pub fn legendre_families(&self) -> Vec<PolynomialFamily> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(&lower, &upper)| PolynomialFamily::Legendre { lower, upper })
            .collect()
    }
}
