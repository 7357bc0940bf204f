//! Sparse polynomial chaos expansions fitted by hybrid least angle
//! regression over a sweep of hyperbolic truncations.

mod index_set;
mod lar;
mod loo;

pub use index_set::{hyperbolic_index_set, q_norm, MultiIndexSet};
pub use lar::{hybrid_lar_fit, DropReason, DroppedColumn, HybridLarFit};
pub use loo::{loo_error, LooResult};

use std::collections::HashMap;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::orthopoly::{MultiIndex, PolynomialFamily, UnivariateTable};
use crate::uncertainty::SampleMatrix;
use lar::{hybrid_on_columns, Design, Standardized};

/// A fitted expansion `Σ_l c_l Φ_l(ζ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PceModel {
    pub families: Vec<PolynomialFamily>,
    pub indices: Vec<MultiIndex>,
    pub coefficients: Vec<f64>,
    /// Plain leave-one-out error.
    pub e_loo: f64,
    /// Corrected leave-one-out error that drove model selection.
    pub e_cloo: f64,
    pub n_train: usize,
    /// `(H, q)` of the selected truncation.
    pub max_degree: u32,
    pub q: f64,
}

impl PceModel {
    /// Constant model with the given value.
    pub fn constant(families: Vec<PolynomialFamily>, value: f64, e_loo: f64, n_train: usize) -> Self {
        let dim = families.len();
        Self {
            families,
            indices: vec![MultiIndex::zero(dim)],
            coefficients: vec![value],
            e_loo,
            e_cloo: e_loo,
            n_train,
            max_degree: 0,
            q: 1.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.families.len()
    }

    fn max_index_degree(&self) -> usize {
        self.indices
            .iter()
            .flat_map(|mi| mi.0.iter())
            .copied()
            .max()
            .unwrap_or(0) as usize
    }

    pub fn evaluate(&self, point: &[f64]) -> Result<f64> {
        if point.len() != self.dim() {
            return Err(Error::shape(format!(
                "point has {} coordinates, model has {}",
                point.len(),
                self.dim()
            )));
        }
        let table = UnivariateTable::new(&self.families, self.max_index_degree(), point)?;
        Ok(self
            .indices
            .iter()
            .zip(&self.coefficients)
            .map(|(mi, c)| c * table.basis(mi))
            .sum())
    }

    pub fn evaluate_many(&self, points: &SampleMatrix) -> Result<Vec<f64>> {
        points.rows().map(|p| self.evaluate(p)).collect()
    }

    pub fn mean(&self) -> f64 {
        pce_moments(self).0
    }

    pub fn variance(&self) -> f64 {
        pce_moments(self).1
    }
}

/// Mean and variance from the coefficients of an orthonormal expansion.
pub fn pce_moments(model: &PceModel) -> (f64, f64) {
    let mut mean = 0.0;
    let mut var = 0.0;
    for (mi, c) in model.indices.iter().zip(&model.coefficients) {
        if mi.is_zero() {
            mean += c;
        } else {
            var += c * c;
        }
    }
    (mean, var)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SobolIndices {
    pub first_order: Vec<f64>,
    /// Set when the expansion has zero variance and the uniform fallback
    /// `1/M` was returned.
    pub degenerate: bool,
}

/// First-order Sobol' indices: the share of variance carried by terms whose
/// only nonzero degree is in dimension `j`.
pub fn sobol_first_order(model: &PceModel) -> SobolIndices {
    let dim = model.dim();
    let mut partial = vec![0.0; dim];
    let mut total = 0.0;
    for (mi, c) in model.indices.iter().zip(&model.coefficients) {
        if mi.is_zero() {
            continue;
        }
        let c2 = c * c;
        total += c2;
        if let Some(j) = mi.sole_active_dim() {
            partial[j] += c2;
        }
    }
    if !(total > 0.0) {
        return SobolIndices {
            first_order: vec![1.0 / dim as f64; dim],
            degenerate: true,
        };
    }
    SobolIndices {
        first_order: partial.into_iter().map(|p| p / total).collect(),
        degenerate: false,
    }
}

/// `(H, q)` grid explored by [`adaptive_fit`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub degrees: Vec<u32>,
    pub q_norms: Vec<f64>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            degrees: (0..=6).collect(),
            q_norms: (0..=6).map(|i| 0.5 + 0.05 * i as f64).collect(),
        }
    }
}

impl FitOptions {
    pub fn validate(&self) -> Result<()> {
        if self.degrees.is_empty() || self.q_norms.is_empty() {
            return Err(Error::domain("degree and q ranges must be nonempty"));
        }
        if let Some(q) = self.q_norms.iter().find(|q| !(**q > 0.0 && **q <= 1.0)) {
            return Err(Error::domain(format!("q = {q} outside (0, 1]")));
        }
        Ok(())
    }
}

/// Per-cell outcome of the `(H, q)` sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub max_degree: u32,
    pub q: f64,
    pub n_candidates: usize,
    pub n_active: usize,
    pub e_loo: f64,
    pub e_cloo: f64,
}

#[derive(Debug, Clone)]
pub struct AdaptiveFit {
    pub model: PceModel,
    pub cells: Vec<CellResult>,
    /// Set when every cell was degenerate and the sample-mean model was
    /// returned.
    pub fallback: bool,
}

/// Column-major design over `indices` at `points`.
pub fn design_columns(
    families: &[PolynomialFamily],
    indices: &[MultiIndex],
    points: &SampleMatrix,
) -> Result<Vec<Vec<f64>>> {
    let n = points.nrows();
    let max_deg = indices
        .iter()
        .flat_map(|mi| mi.0.iter())
        .copied()
        .max()
        .unwrap_or(0) as usize;
    let mut cols = vec![vec![0.0; n]; indices.len()];
    for (i, p) in points.rows().enumerate() {
        let table = UnivariateTable::new(families, max_deg, p)?;
        for (col, mi) in cols.iter_mut().zip(indices) {
            col[i] = table.basis(mi);
        }
    }
    Ok(cols)
}

pub fn design_matrix(
    families: &[PolynomialFamily],
    indices: &[MultiIndex],
    points: &SampleMatrix,
) -> Result<DMatrix<f64>> {
    let cols = design_columns(families, indices, points)?;
    Ok(DMatrix::from_fn(points.nrows(), indices.len(), |i, j| cols[j][i]))
}

fn sample_variance(z: &[f64]) -> f64 {
    let n = z.len();
    if n < 2 {
        return 0.0;
    }
    let mean = z.iter().sum::<f64>() / n as f64;
    z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64
}

/// Sweeps the `(H, q)` grid, runs hybrid LAR on each truncation and keeps
/// the candidate with the smallest corrected LOO error. Ties go to the
/// earlier cell in `(H, q)` order.
pub fn adaptive_fit(
    points: &SampleMatrix,
    z: &[f64],
    families: &[PolynomialFamily],
    options: &FitOptions,
) -> Result<AdaptiveFit> {
    options.validate()?;
    let n = points.nrows();
    if n == 0 {
        return Err(Error::EmptyData("adaptive fit needs at least one sample".into()));
    }
    if z.len() != n {
        return Err(Error::shape(format!("{} responses for {n} points", z.len())));
    }
    if families.len() != points.dim() {
        return Err(Error::shape(format!(
            "{} families for {}-dimensional points",
            families.len(),
            points.dim()
        )));
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("responses must be finite"));
    }
    let dim = points.dim();

    // The largest truncation contains every other one, so the design is
    // built once and each cell selects a subset of its columns.
    let h_max = *options.degrees.iter().max().expect("nonempty");
    let q_max = options.q_norms.iter().copied().fold(0.0, f64::max);
    let union = hyperbolic_index_set(dim, h_max, q_max)?;
    let position: HashMap<&MultiIndex, usize> =
        union.indices.iter().enumerate().map(|(i, mi)| (mi, i)).collect();

    let mut grid = Vec::new();
    let mut unique: Vec<Vec<usize>> = Vec::new();
    let mut unique_of: HashMap<Vec<usize>, usize> = HashMap::new();
    for &h in &options.degrees {
        for &q in &options.q_norms {
            let set = hyperbolic_index_set(dim, h, q)?;
            let cols: Vec<usize> = set.indices.iter().map(|mi| position[mi]).collect();
            let id = *unique_of.entry(cols.clone()).or_insert_with(|| {
                unique.push(cols);
                unique.len() - 1
            });
            grid.push((h, q, id));
        }
    }

    let columns = design_columns(families, &union.indices, points)?;
    let col_refs: Vec<&[f64]> = columns.iter().map(Vec::as_slice).collect();
    let std = Standardized::new(&col_refs, 1e-12);
    let design = Design {
        n,
        columns: col_refs,
    };

    let fits: Vec<HybridLarFit> = unique
        .par_iter()
        .map(|cols| hybrid_on_columns(&design, &std, &cols[1..], z))
        .collect();

    let mut cells = Vec::with_capacity(grid.len());
    let mut best: Option<(usize, usize)> = None;
    for (cell, &(h, q, id)) in grid.iter().enumerate() {
        let fit = &fits[id];
        cells.push(CellResult {
            max_degree: h,
            q,
            n_candidates: unique[id].len(),
            n_active: fit.active.len(),
            e_loo: fit.e_loo,
            e_cloo: fit.e_cloo,
        });
        if fit.e_cloo.is_finite() && best.is_none_or(|(_, b)| fit.e_cloo < fits[b].e_cloo) {
            best = Some((cell, id));
        }
    }

    let Some((cell, id)) = best else {
        let mean = z.iter().sum::<f64>() / n as f64;
        log::debug!("all {} cells degenerate; using the sample mean", cells.len());
        return Ok(AdaptiveFit {
            model: PceModel::constant(families.to_vec(), mean, sample_variance(z), n),
            cells,
            fallback: true,
        });
    };
    let fit = &fits[id];
    let model = PceModel {
        families: families.to_vec(),
        indices: fit.active.iter().map(|&c| union.indices[c].clone()).collect(),
        coefficients: fit.coefficients.clone(),
        e_loo: fit.e_loo,
        e_cloo: fit.e_cloo,
        n_train: n,
        max_degree: cells[cell].max_degree,
        q: cells[cell].q,
    };
    Ok(AdaptiveFit {
        model,
        cells,
        fallback: false,
    })
}
