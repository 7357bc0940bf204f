//! Input distributions, quasi-Monte Carlo designs and the isoprobabilistic
//! transform between physical inputs and the unit hypercube.

mod sobol;

pub use sobol::{SobolSequence, MAX_DIM as SOBOL_MAX_DIM};

use serde::{Deserialize, Serialize};
use statrs::function::beta::{beta_reg, inv_beta_reg, ln_beta};
use libm::erfc;

use crate::error::{Error, Result};

/// A univariate input distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Marginal {
    Gaussian { mean: f64, std_dev: f64 },
    Weibull { scale: f64, shape: f64 },
    /// Beta distribution supported on `[0, 1]`.
    Beta { a: f64, b: f64 },
    Uniform { lower: f64, upper: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalMode {
    Pdf,
    Cdf,
    Quantile,
}

impl Marginal {
    pub fn gaussian(mean: f64, std_dev: f64) -> Result<Self> {
        Marginal::Gaussian { mean, std_dev }.validated()
    }

    pub fn weibull(scale: f64, shape: f64) -> Result<Self> {
        Marginal::Weibull { scale, shape }.validated()
    }

    pub fn beta(a: f64, b: f64) -> Result<Self> {
        Marginal::Beta { a, b }.validated()
    }

    pub fn uniform(lower: f64, upper: f64) -> Result<Self> {
        Marginal::Uniform { lower, upper }.validated()
    }

    pub fn validated(self) -> Result<Self> {
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::domain(format!("{name} must be finite and > 0, got {v}")))
            }
        };
        match *self {
            Marginal::Gaussian { mean, std_dev } => {
                if !mean.is_finite() {
                    return Err(Error::domain("Gaussian mean must be finite"));
                }
                positive("Gaussian standard deviation", std_dev)
            }
            Marginal::Weibull { scale, shape } => {
                positive("Weibull scale", scale)?;
                positive("Weibull shape", shape)
            }
            Marginal::Beta { a, b } => {
                positive("Beta shape a", a)?;
                positive("Beta shape b", b)
            }
            Marginal::Uniform { lower, upper } => {
                if lower.is_finite() && upper.is_finite() && lower < upper {
                    Ok(())
                } else {
                    Err(Error::domain(format!(
                        "uniform bounds must satisfy lower < upper, got [{lower}, {upper}]"
                    )))
                }
            }
        }
    }

    /// Closed interval containing the support (possibly infinite).
    pub fn support(&self) -> (f64, f64) {
        match *self {
            Marginal::Gaussian { .. } => (f64::NEG_INFINITY, f64::INFINITY),
            Marginal::Weibull { .. } => (0.0, f64::INFINITY),
            Marginal::Beta { .. } => (0.0, 1.0),
            Marginal::Uniform { lower, upper } => (lower, upper),
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Marginal::Gaussian { mean, .. } => mean,
            Marginal::Weibull { scale, shape } => {
                scale * statrs::function::gamma::gamma(1.0 + 1.0 / shape)
            }
            Marginal::Beta { a, b } => a / (a + b),
            Marginal::Uniform { lower, upper } => 0.5 * (lower + upper),
        }
    }

    pub fn pdf(&self, x: f64) -> Result<f64> {
        self.validate()?;
        if x.is_nan() {
            return Err(Error::domain("pdf argument is NaN"));
        }
        Ok(match *self {
            Marginal::Gaussian { mean, std_dev } => {
                let z = (x - mean) / std_dev;
                (-0.5 * z * z).exp() / (std_dev * (2.0 * std::f64::consts::PI).sqrt())
            }
            Marginal::Weibull { scale, shape } => {
                if x < 0.0 {
                    0.0
                } else {
                    let t = x / scale;
                    (shape / scale) * t.powf(shape - 1.0) * (-t.powf(shape)).exp()
                }
            }
            Marginal::Beta { a, b } => {
                if !(0.0..=1.0).contains(&x) {
                    0.0
                } else {
                    ((a - 1.0) * x.ln() + (b - 1.0) * (1.0 - x).ln() - ln_beta(a, b)).exp()
                }
            }
            Marginal::Uniform { lower, upper } => {
                if (lower..=upper).contains(&x) {
                    1.0 / (upper - lower)
                } else {
                    0.0
                }
            }
        })
    }

    pub fn cdf(&self, x: f64) -> Result<f64> {
        self.validate()?;
        if x.is_nan() {
            return Err(Error::domain("cdf argument is NaN"));
        }
        Ok(match *self {
            Marginal::Gaussian { mean, std_dev } => standard_normal_cdf((x - mean) / std_dev),
            Marginal::Weibull { scale, shape } => {
                if x <= 0.0 {
                    0.0
                } else {
                    -(-(x / scale).powf(shape)).exp_m1()
                }
            }
            Marginal::Beta { a, b } => {
                if x <= 0.0 {
                    0.0
                } else if x >= 1.0 {
                    1.0
                } else {
                    beta_reg(a, b, x)
                }
            }
            Marginal::Uniform { lower, upper } => ((x - lower) / (upper - lower)).clamp(0.0, 1.0),
        })
    }

    /// Inverse CDF. Defined on `(0,1)`; the endpoints are accepted only
    /// where the corresponding support bound is finite.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        self.validate()?;
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::domain(format!("quantile probability {p} outside [0, 1]")));
        }
        let (lo, hi) = self.support();
        if p == 0.0 {
            return if lo.is_finite() {
                Ok(lo)
            } else {
                Err(Error::domain("quantile(0) of an unbounded support"))
            };
        }
        if p == 1.0 {
            return if hi.is_finite() {
                Ok(hi)
            } else {
                Err(Error::domain("quantile(1) of an unbounded support"))
            };
        }
        Ok(match *self {
            Marginal::Gaussian { mean, std_dev } => mean + std_dev * standard_normal_quantile(p),
            Marginal::Weibull { scale, shape } => scale * (-(-p).ln_1p()).powf(1.0 / shape),
            Marginal::Beta { a, b } => beta_quantile(a, b, p),
            Marginal::Uniform { lower, upper } => lower + p * (upper - lower),
        })
    }

    pub fn eval(&self, x: f64, mode: EvalMode) -> Result<f64> {
        match mode {
            EvalMode::Pdf => self.pdf(x),
            EvalMode::Cdf => self.cdf(x),
            EvalMode::Quantile => self.quantile(x),
        }
    }
}

pub fn eval_marginal(dist: &Marginal, x: f64, mode: EvalMode) -> Result<f64> {
    dist.eval(x, mode)
}

fn standard_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Acklam's rational approximation followed by one Halley correction
/// against the `erfc`-based CDF.
fn standard_normal_quantile(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const P_LOW: f64 = 0.02425;

    let tail = |q: f64| {
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    let x = if p < P_LOW {
        tail((-2.0 * p.ln()).sqrt())
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -tail((-2.0 * (-p).ln_1p()).sqrt())
    };

    // Halley steps on Φ(x) − p, evaluated on the smaller tail.
    let mut x = x;
    for _ in 0..3 {
        let e = if x > 0.0 {
            (1.0 - p) - 0.5 * erfc(x / std::f64::consts::SQRT_2)
        } else {
            0.5 * erfc(-x / std::f64::consts::SQRT_2) - p
        };
        let u = e * (2.0 * std::f64::consts::PI).sqrt() * (0.5 * x * x).exp();
        let step = u / (1.0 + 0.5 * x * u);
        x -= step;
        if step.abs() <= 1e-15 * x.abs().max(1.0) {
            break;
        }
    }
    x
}

/// Safeguarded Newton iteration on the regularized incomplete beta function,
/// seeded by statrs' inverse.
fn beta_quantile(a: f64, b: f64, p: f64) -> f64 {
    let ln_b = ln_beta(a, b);
    let mut lo = 0.0_f64;
    let mut hi = 1.0_f64;
    let mut x = inv_beta_reg(a, b, p);
    if !(x > 0.0 && x < 1.0) {
        x = 0.5;
    }
    for _ in 0..200 {
        let f = beta_reg(a, b, x) - p;
        if f == 0.0 {
            return x;
        }
        if f < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let density = ((a - 1.0) * x.ln() + (b - 1.0) * (1.0 - x).ln() - ln_b).exp();
        let mut next = x - f / density;
        if !(next.is_finite() && next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= 4.0 * f64::EPSILON * x.max(f64::MIN_POSITIVE) {
            return next;
        }
        x = next;
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
    }
    x
}

/// Independent marginals `ζ = (ζ_1, …, ζ_M)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomVector {
    marginals: Vec<Marginal>,
}

impl RandomVector {
    pub fn new(marginals: Vec<Marginal>) -> Result<Self> {
        if marginals.is_empty() {
            return Err(Error::domain("a random vector needs at least one marginal"));
        }
        for m in &marginals {
            m.validate()?;
        }
        Ok(Self { marginals })
    }

    pub fn dim(&self) -> usize {
        self.marginals.len()
    }

    pub fn marginals(&self) -> &[Marginal] {
        &self.marginals
    }

    /// Joint density as the product of marginal densities.
    pub fn joint_pdf(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::shape(format!(
                "point has {} coordinates, random vector has {}",
                x.len(),
                self.dim()
            )));
        }
        self.marginals
            .iter()
            .zip(x)
            .try_fold(1.0, |acc, (m, &xi)| Ok(acc * m.pdf(xi)?))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Space {
    Unit,
    Physical,
}

/// Row-major `n × M` matrix of sample points.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleMatrix {
    dim: usize,
    data: Vec<f64>,
    space: Space,
}

impl SampleMatrix {
    pub fn new(dim: usize, data: Vec<f64>, space: Space) -> Result<Self> {
        if dim == 0 {
            return Err(Error::shape("sample dimension must be at least 1"));
        }
        if data.len() % dim != 0 {
            return Err(Error::shape(format!(
                "{} values do not form rows of length {dim}",
                data.len()
            )));
        }
        if space == Space::Unit && data.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::domain("unit-space samples must lie in [0, 1]"));
        }
        Ok(Self { dim, data, space })
    }

    pub fn from_rows(rows: &[Vec<f64>], space: Space) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::shape("rows have different lengths"));
        }
        Self::new(dim, rows.concat(), space)
    }

    pub fn nrows(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn space(&self) -> Space {
        self.space
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// First `n` rows.
    pub fn head(&self, n: usize) -> SampleMatrix {
        let n = n.min(self.nrows());
        SampleMatrix {
            dim: self.dim,
            data: self.data[..n * self.dim].to_vec(),
            space: self.space,
        }
    }

    pub fn select(&self, rows: &[usize]) -> SampleMatrix {
        let mut data = Vec::with_capacity(rows.len() * self.dim);
        for &i in rows {
            data.extend_from_slice(self.row(i));
        }
        SampleMatrix {
            dim: self.dim,
            data,
            space: self.space,
        }
    }
}

/// `n` Sobol' points in `[0,1)^dim`, after discarding the first `skip`
/// points of the sequence.
pub fn sample_qmc(n: usize, dim: usize, skip: usize) -> Result<SampleMatrix> {
    if n == 0 {
        return Err(Error::EmptyData("QMC design needs n >= 1".into()));
    }
    let mut seq = SobolSequence::new(dim)?;
    seq.skip(skip);
    let mut data = vec![0.0; n * dim];
    for row in data.chunks_exact_mut(dim) {
        seq.next_into(row);
    }
    Ok(SampleMatrix {
        dim,
        data,
        space: Space::Unit,
    })
}

fn check_columns(x: &SampleMatrix, rv: &RandomVector, expected: Space) -> Result<()> {
    if x.space != expected {
        return Err(Error::domain(format!(
            "expected {expected:?}-space samples, got {:?}",
            x.space
        )));
    }
    if x.dim != rv.dim() {
        return Err(Error::shape(format!(
            "samples have {} columns, random vector has {}",
            x.dim,
            rv.dim()
        )));
    }
    Ok(())
}

/// Maps unit-space samples through each marginal's quantile function.
pub fn to_physical(u: &SampleMatrix, rv: &RandomVector) -> Result<SampleMatrix> {
    check_columns(u, rv, Space::Unit)?;
    let mut data = Vec::with_capacity(u.data.len());
    for row in u.rows() {
        for (m, &p) in rv.marginals.iter().zip(row) {
            data.push(m.quantile(p)?);
        }
    }
    Ok(SampleMatrix {
        dim: u.dim,
        data,
        space: Space::Physical,
    })
}

/// Maps physical samples to the unit hypercube through the marginal CDFs.
pub fn to_unit(x: &SampleMatrix, rv: &RandomVector) -> Result<SampleMatrix> {
    check_columns(x, rv, Space::Physical)?;
    let mut data = Vec::with_capacity(x.data.len());
    for row in x.rows() {
        for (m, &xi) in rv.marginals.iter().zip(row) {
            data.push(m.cdf(xi)?);
        }
    }
    Ok(SampleMatrix {
        dim: x.dim,
        data,
        space: Space::Unit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn gaussian_median() {
        let g = Marginal::gaussian(100.0, 5.0).unwrap();
        assert_abs_diff_eq!(g.quantile(0.5).unwrap(), 100.0, epsilon = 1e-12);
        assert_abs_diff_eq!(g.cdf(100.0).unwrap(), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn weibull_cdf_at_scale() {
        let w = Marginal::weibull(11.153, 3.289).unwrap();
        assert_abs_diff_eq!(
            w.cdf(11.153).unwrap(),
            1.0 - (-1.0f64).exp(),
            epsilon = 1e-15
        );
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(Marginal::gaussian(0.0, 0.0).is_err());
        assert!(Marginal::weibull(-1.0, 2.0).is_err());
        assert!(Marginal::beta(1.0, 0.0).is_err());
        assert!(Marginal::uniform(1.0, 1.0).is_err());
        assert!(RandomVector::new(vec![]).is_err());
    }

    #[test]
    fn quantile_endpoints() {
        let g = Marginal::gaussian(0.0, 1.0).unwrap();
        assert!(g.quantile(0.0).is_err());
        assert!(g.quantile(1.0).is_err());
        assert!(g.quantile(1.5).is_err());
        let w = Marginal::weibull(2.0, 2.0).unwrap();
        assert_eq!(w.quantile(0.0).unwrap(), 0.0);
        assert!(w.quantile(1.0).is_err());
        let b = Marginal::beta(1.7, 0.74).unwrap();
        assert_eq!(b.quantile(0.0).unwrap(), 0.0);
        assert_eq!(b.quantile(1.0).unwrap(), 1.0);
    }

    #[test]
    fn normal_quantile_tails() {
        let g = Marginal::gaussian(0.0, 1.0).unwrap();
        // Reference values of the standard normal quantile.
        assert_abs_diff_eq!(g.quantile(0.975).unwrap(), 1.959_963_984_540_054, epsilon = 1e-12);
        assert_abs_diff_eq!(g.quantile(1e-10).unwrap(), -6.361_340_902_404_056, epsilon = 1e-9);
        assert_abs_diff_eq!(g.quantile(0.01).unwrap(), -2.326_347_874_040_841, epsilon = 1e-12);
    }

    #[test]
    fn beta_small_probability_goes_to_lower_bound() {
        let b = Marginal::beta(1.7, 0.74).unwrap();
        let x = b.quantile(1e-12).unwrap();
        assert!(x > 0.0 && x < 1e-6);
    }

    #[test]
    fn uniform_to_unit_is_identity() {
        let rv = RandomVector::new(vec![Marginal::uniform(0.0, 1.0).unwrap()]).unwrap();
        let x = SampleMatrix::new(1, vec![0.0, 0.25, 0.7, 1.0], Space::Physical).unwrap();
        let u = to_unit(&x, &rv).unwrap();
        assert_eq!(u.as_slice(), x.as_slice());
    }

    #[test]
    fn transform_checks_space_and_shape() {
        let rv = RandomVector::new(vec![Marginal::uniform(0.0, 1.0).unwrap(); 2]).unwrap();
        let u = SampleMatrix::new(1, vec![0.5], Space::Unit).unwrap();
        assert!(matches!(to_physical(&u, &rv), Err(Error::Shape(_))));
        let x = SampleMatrix::new(2, vec![0.5, 0.5], Space::Physical).unwrap();
        assert!(to_physical(&x, &rv).is_err());
    }

    #[test]
    fn sobol_rejects_large_dimension() {
        assert!(matches!(
            sample_qmc(4, SOBOL_MAX_DIM + 1, 0),
            Err(Error::UnsupportedDimension { .. })
        ));
        assert!(sample_qmc(4, SOBOL_MAX_DIM, 0).is_ok());
    }

    #[test]
    fn joint_pdf_is_product() {
        let rv = RandomVector::new(vec![
            Marginal::gaussian(0.0, 1.0).unwrap(),
            Marginal::beta(1.7, 0.74).unwrap(),
        ])
        .unwrap();
        for i in 0..9 {
            for j in 1..9 {
                let x = [-2.0 + 0.5 * i as f64, j as f64 / 9.0];
                let expected = rv.marginals()[0].pdf(x[0]).unwrap() * rv.marginals()[1].pdf(x[1]).unwrap();
                assert_eq!(rv.joint_pdf(&x).unwrap(), expected);
            }
        }
    }
}
