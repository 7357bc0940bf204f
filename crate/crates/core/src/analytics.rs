//! Sample statistics, empirical distributions and method comparison.
//!
//! Conventions: unbiased variance, right-continuous empirical CDF, quantiles
//! by linear interpolation between order statistics (`x_(⌊h⌋) + (h − ⌊h⌋)
//! (x_(⌊h⌋+1) − x_(⌊h⌋))` with `h = (n − 1) p`), and histogram densities
//! with the Freedman-Diaconis bin width.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "MC")]
    MonteCarlo,
    #[serde(rename = "ASSE")]
    Asse,
    #[serde(rename = "SPCE")]
    Spce,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::MonteCarlo => "MC",
            Method::Asse => "ASSE",
            Method::Spce => "SPCE",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "MC" => Ok(Method::MonteCarlo),
            "ASSE" => Ok(Method::Asse),
            "SPCE" => Ok(Method::Spce),
            other => Err(Error::domain(format!("unknown method '{other}'"))),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Sorted copy of a sample.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalCdf {
    sorted: Vec<f64>,
}

impl EmpiricalCdf {
    pub fn new(samples: &[f64]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyData("empirical CDF of an empty sample".into()));
        }
        if let Some(bad) = samples.iter().find(|v| !v.is_finite()) {
            return Err(Error::domain(format!("non-finite sample {bad}")));
        }
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(Self { sorted })
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn sorted(&self) -> &[f64] {
        &self.sorted
    }

    /// `#{x_i ≤ x} / n`.
    pub fn eval(&self, x: f64) -> f64 {
        self.sorted.partition_point(|&v| v <= x) as f64 / self.sorted.len() as f64
    }

    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::domain(format!("probability {p} outside [0, 1]")));
        }
        let n = self.sorted.len();
        let h = (n - 1) as f64 * p;
        let lo = h.floor() as usize;
        let hi = (lo + 1).min(n - 1);
        let frac = h - lo as f64;
        Ok(self.sorted[lo] + frac * (self.sorted[hi] - self.sorted[lo]))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    /// Normalized so that `Σ density_k · width_k = 1`.
    pub density: Vec<f64>,
}

impl Histogram {
    pub fn centers(&self) -> Vec<f64> {
        self.edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }
}

/// Freedman-Diaconis histogram. Falls back to `⌈√n⌉` bins when the
/// interquartile range vanishes, and to a unit-width bin around the value
/// for a constant sample.
pub fn histogram(ecdf: &EmpiricalCdf) -> Histogram {
    let s = ecdf.sorted();
    let n = s.len();
    let (min, max) = (s[0], s[n - 1]);
    if max == min {
        return Histogram {
            edges: vec![min - 0.5, min + 0.5],
            density: vec![1.0],
        };
    }
    let iqr = ecdf.quantile(0.75).unwrap_or(0.0) - ecdf.quantile(0.25).unwrap_or(0.0);
    let range = max - min;
    let bins = if iqr > 0.0 {
        let width = 2.0 * iqr / (n as f64).cbrt();
        ((range / width).ceil() as usize).clamp(1, 10_000)
    } else {
        (n as f64).sqrt().ceil() as usize
    };
    let width = range / bins as f64;
    let edges: Vec<f64> = (0..=bins)
        .map(|k| if k == bins { max } else { min + k as f64 * width })
        .collect();
    let mut counts = vec![0usize; bins];
    for &v in s {
        let k = (((v - min) / width) as usize).min(bins - 1);
        counts[k] += 1;
    }
    let density = counts
        .iter()
        .zip(edges.windows(2))
        .map(|(&c, w)| c as f64 / (n as f64 * (w[1] - w[0])))
        .collect();
    Histogram { edges, density }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    pub variance: f64,
    /// `(p, quantile(p))` in the order requested.
    pub quantiles: Vec<(f64, f64)>,
    /// `(x, F(x))` on an even grid from the smallest to the largest sample.
    pub cdf: Vec<(f64, f64)>,
    pub pdf: Histogram,
}

impl Summary {
    pub fn quantile(&self, p: f64) -> Option<f64> {
        self.quantiles.iter().find(|(q, _)| *q == p).map(|(_, v)| *v)
    }
}

pub const CDF_GRID_POINTS: usize = 201;

pub fn summarize(samples: &[f64], p_list: &[f64]) -> Result<Summary> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::InsufficientData { needed: 2, got: n });
    }
    let ecdf = EmpiricalCdf::new(samples)?;
    let mean = samples.iter().sum::<f64>() / n as f64;
    let variance = samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let quantiles = p_list
        .iter()
        .map(|&p| ecdf.quantile(p).map(|q| (p, q)))
        .collect::<Result<Vec<_>>>()?;
    let s = ecdf.sorted();
    let (lo, hi) = (s[0], s[n - 1]);
    let cdf = (0..CDF_GRID_POINTS)
        .map(|k| {
            let x = if k + 1 == CDF_GRID_POINTS {
                hi
            } else {
                lo + (hi - lo) * k as f64 / (CDF_GRID_POINTS - 1) as f64
            };
            (x, ecdf.eval(x))
        })
        .collect();
    Ok(Summary {
        n,
        mean,
        variance,
        quantiles,
        cdf,
        pdf: histogram(&ecdf),
    })
}

/// Normalized validation error
/// `((N−1)/N) · Σ(z − ẑ)² / Σ(z − μ̂)²`.
pub fn validation_error(truth: &[f64], predicted: &[f64]) -> Result<f64> {
    let n = truth.len();
    if predicted.len() != n {
        return Err(Error::shape(format!("{n} truth values but {} predictions", predicted.len())));
    }
    if n < 2 {
        return Err(Error::InsufficientData { needed: 2, got: n });
    }
    let mean = truth.iter().sum::<f64>() / n as f64;
    let num: f64 = truth.iter().zip(predicted).map(|(z, p)| (z - p).powi(2)).sum();
    let den: f64 = truth.iter().map(|z| (z - mean).powi(2)).sum();
    if den == 0.0 {
        return Err(Error::DegenerateTruth);
    }
    Ok((n - 1) as f64 / n as f64 * num / den)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseReport {
    pub response: String,
    pub summary: Summary,
    /// Absent when no Monte Carlo truth was available.
    pub e_val: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateReport {
    pub method: Method,
    pub n_ed: Option<usize>,
    pub n_val: usize,
    pub wall_time_s: f64,
    pub responses: Vec<ResponseReport>,
}

impl SurrogateReport {
    pub fn response(&self, name: &str) -> Option<&ResponseReport> {
        self.responses.iter().find(|r| r.response == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub method: Method,
    pub response: String,
    pub mean: f64,
    pub e_mean_pct: f64,
    /// `(p, quantile, e%)` per requested probability.
    pub quantiles: Vec<(f64, f64, f64)>,
}

/// `100 · (reference − value) / reference`.
pub fn normalized_error_pct(reference: f64, value: f64) -> f64 {
    100.0 * (reference - value) / reference
}

/// One row per report and response, baseline first, responses in baseline
/// order. Quantile errors use the same normalization as the mean.
pub fn compare_methods(reports: &[SurrogateReport], baseline: Option<&SurrogateReport>) -> Result<Vec<ComparisonRow>> {
    let baseline = baseline.ok_or_else(|| Error::MissingBaseline("comparison needs a Monte Carlo report".into()))?;
    let mut rows = Vec::new();
    for report in std::iter::once(baseline).chain(reports.iter().filter(|r| !std::ptr::eq(*r, baseline))) {
        if report.responses.len() != baseline.responses.len() {
            return Err(Error::shape(format!(
                "{} report covers {} responses, baseline covers {}",
                report.method,
                report.responses.len(),
                baseline.responses.len()
            )));
        }
        for base in &baseline.responses {
            let r = report.response(&base.response).ok_or_else(|| {
                Error::shape(format!("{} report lacks response {}", report.method, base.response))
            })?;
            let quantiles = base
                .summary
                .quantiles
                .iter()
                .map(|&(p, q_ref)| {
                    let q = r.summary.quantile(p).ok_or_else(|| {
                        Error::shape(format!("{} report lacks quantile {p} of {}", report.method, base.response))
                    })?;
                    Ok((p, q, normalized_error_pct(q_ref, q)))
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(ComparisonRow {
                method: report.method,
                response: base.response.clone(),
                mean: r.summary.mean,
                e_mean_pct: normalized_error_pct(base.summary.mean, r.summary.mean),
                quantiles,
            });
        }
    }
    Ok(rows)
}
