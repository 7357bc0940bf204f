//! Orthonormal polynomial families and tensor-product bases.
//!
//! Every family is evaluated through the orthonormal three-term recurrence
//!
//! ```text
//! √b_{n+1} p_{n+1}(t) = (t − a_n) p_n(t) − √b_n p_{n−1}(t),   p_{−1} = 0, p_0 = 1
//! ```
//!
//! in the family's standardized variable `t`, so `E[p_i p_j] = δ_ij` under
//! the family's probability measure.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolynomialFamily {
    /// Orthonormal under the uniform probability measure on `[lower, upper]`.
    Legendre { lower: f64, upper: f64 },
    /// Orthonormal under the standard normal density.
    Hermite,
}

impl PolynomialFamily {
    pub fn legendre(lower: f64, upper: f64) -> Result<Self> {
        if !(lower.is_finite() && upper.is_finite() && lower < upper) {
            return Err(Error::domain(format!(
                "Legendre interval must satisfy lower < upper, got [{lower}, {upper}]"
            )));
        }
        Ok(PolynomialFamily::Legendre { lower, upper })
    }

    /// Recurrence coefficients `(a_n, b_n)` of the standardized family.
    pub fn recurrence(&self, n: usize) -> (f64, f64) {
        let n = n as f64;
        match self {
            PolynomialFamily::Legendre { .. } => {
                if n == 0.0 {
                    (0.0, 1.0)
                } else {
                    (0.0, n * n / (4.0 * n * n - 1.0))
                }
            }
            PolynomialFamily::Hermite => (0.0, if n == 0.0 { 1.0 } else { n }),
        }
    }

    fn standardize(&self, x: f64) -> Result<f64> {
        match *self {
            PolynomialFamily::Legendre { lower, upper } => {
                // Tolerate round-off at the interval ends.
                let slack = 1e-12 * (upper - lower);
                if x.is_nan() || x < lower - slack || x > upper + slack {
                    return Err(Error::domain(format!(
                        "{x} outside Legendre interval [{lower}, {upper}]"
                    )));
                }
                Ok(((2.0 * x - lower - upper) / (upper - lower)).clamp(-1.0, 1.0))
            }
            PolynomialFamily::Hermite => {
                if x.is_finite() {
                    Ok(x)
                } else {
                    Err(Error::domain("Hermite argument must be finite"))
                }
            }
        }
    }

    /// Values `p_0(x), …, p_{max_degree}(x)` written into `out`.
    pub fn eval_all(&self, x: f64, out: &mut [f64]) -> Result<()> {
        let t = self.standardize(x)?;
        self.eval_all_standardized(t, out);
        Ok(())
    }

    fn eval_all_standardized(&self, t: f64, out: &mut [f64]) {
        if out.is_empty() {
            return;
        }
        out[0] = 1.0;
        let mut prev = 0.0;
        for n in 0..out.len() - 1 {
            let (a, b) = self.recurrence(n);
            let (_, b_next) = self.recurrence(n + 1);
            let sqrt_b = if n == 0 { 0.0 } else { b.sqrt() };
            let next = ((t - a) * out[n] - sqrt_b * prev) / b_next.sqrt();
            prev = out[n];
            out[n + 1] = next;
        }
    }

    pub fn eval(&self, degree: usize, x: f64) -> Result<f64> {
        let mut values = vec![0.0; degree + 1];
        self.eval_all(x, &mut values)?;
        Ok(values[degree])
    }
}

pub fn eval_univariate(family: &PolynomialFamily, degree: usize, x: f64) -> Result<f64> {
    family.eval(degree, x)
}

/// Per-dimension polynomial degrees of one tensor-product basis function.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MultiIndex(pub Vec<u32>);

impl MultiIndex {
    pub fn zero(dim: usize) -> Self {
        MultiIndex(vec![0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn total_degree(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&d| d == 0)
    }

    /// The only active dimension, if exactly one degree is nonzero.
    pub fn sole_active_dim(&self) -> Option<usize> {
        let mut active = self.0.iter().enumerate().filter(|(_, &d)| d > 0);
        match (active.next(), active.next()) {
            (Some((j, _)), None) => Some(j),
            _ => None,
        }
    }

    pub fn degrees(&self) -> &[u32] {
        &self.0
    }
}

impl From<Vec<u32>> for MultiIndex {
    fn from(v: Vec<u32>) -> Self {
        MultiIndex(v)
    }
}

/// `Φ(ζ) = ∏_j φ_j^{(β_j)}(ζ_j)`.
pub fn eval_multivariate(
    mi: &MultiIndex,
    families: &[PolynomialFamily],
    point: &[f64],
) -> Result<f64> {
    if mi.dim() != families.len() || point.len() != families.len() {
        return Err(Error::shape(format!(
            "multi-index has {} entries, {} families, point has {} coordinates",
            mi.dim(),
            families.len(),
            point.len()
        )));
    }
    let mut value = 1.0;
    for ((&deg, fam), &x) in mi.0.iter().zip(families).zip(point) {
        value *= fam.eval(deg as usize, x)?;
    }
    Ok(value)
}

/// Precomputed univariate tables for evaluating many basis functions at
/// one point.
pub(crate) struct UnivariateTable {
    max_degree: usize,
    values: Vec<f64>,
}

impl UnivariateTable {
    pub(crate) fn new(
        families: &[PolynomialFamily],
        max_degree: usize,
        point: &[f64],
    ) -> Result<Self> {
        let stride = max_degree + 1;
        let mut values = vec![0.0; stride * families.len()];
        for (j, (fam, &x)) in families.iter().zip(point).enumerate() {
            fam.eval_all(x, &mut values[j * stride..(j + 1) * stride])?;
        }
        Ok(Self { max_degree, values })
    }

    pub(crate) fn basis(&self, mi: &MultiIndex) -> f64 {
        let stride = self.max_degree + 1;
        mi.0.iter()
            .enumerate()
            .map(|(j, &d)| self.values[j * stride + d as usize])
            .product()
    }
}
