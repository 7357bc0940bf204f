//! Least angle regression path and the hybrid (LAR + OLS) model selection.

use nalgebra::DMatrix;

use super::loo::GrowingQr;
use crate::error::{Error, Result};

/// A column that was excluded from regression.
#[derive(Debug, Clone, PartialEq)]
pub struct DroppedColumn {
    pub column: usize,
    pub reason: DropReason,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DropReason {
    /// Constant on the training points (zero after centering).
    ZeroColumn,
    /// Linearly dependent on the columns already selected.
    RankDeficient,
}

/// Outcome of [`hybrid_lar_fit`].
#[derive(Debug, Clone)]
pub struct HybridLarFit {
    /// Selected column indices, constant column first.
    pub active: Vec<usize>,
    pub coefficients: Vec<f64>,
    /// Plain leave-one-out error of the selected candidate.
    pub e_loo: f64,
    /// Corrected leave-one-out error used for selection.
    pub e_cloo: f64,
    /// LAR activation order of the nonconstant columns.
    pub path: Vec<usize>,
    pub dropped: Vec<DroppedColumn>,
}

/// Column-major view of a design matrix; column 0 is the constant basis.
pub(crate) struct Design<'a> {
    pub n: usize,
    pub columns: Vec<&'a [f64]>,
}

/// Centered, unit-norm copies of the design columns. The constant column
/// (index 0) and columns that are constant on the samples are `None`.
pub(crate) struct Standardized {
    pub columns: Vec<Option<Vec<f64>>>,
}

impl Standardized {
    pub fn new(columns: &[&[f64]], tol: f64) -> Self {
        let columns = columns
            .iter()
            .enumerate()
            .map(|(j, col)| {
                if j == 0 {
                    return None;
                }
                let n = col.len() as f64;
                let mean = col.iter().sum::<f64>() / n;
                let centered: Vec<f64> = col.iter().map(|v| v - mean).collect();
                let norm = centered.iter().map(|v| v * v).sum::<f64>().sqrt();
                let scale = col.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm <= tol * scale.max(1.0) {
                    None
                } else {
                    Some(centered.into_iter().map(|v| v / norm).collect())
                }
            })
            .collect();
        Self { columns }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Runs the LAR path over the candidate columns `cands` (indices into
/// `std.columns`), returning the activation order and the columns that had
/// to be skipped. The path holds at most `max_steps` columns.
pub(crate) fn lar_path(
    std: &Standardized,
    cands: &[usize],
    y: &[f64],
    max_steps: usize,
) -> (Vec<usize>, Vec<DroppedColumn>) {
    let n = y.len();
    let mut dropped = Vec::new();
    let mut inactive: Vec<usize> = Vec::with_capacity(cands.len());
    for &c in cands {
        if std.columns[c].is_some() {
            inactive.push(c);
        } else {
            dropped.push(DroppedColumn {
                column: c,
                reason: DropReason::ZeroColumn,
            });
        }
    }
    let col = |c: usize| std.columns[c].as_deref().expect("standardized column");

    let y_norm = dot(y, y).sqrt();
    let mut order = Vec::new();
    if y_norm == 0.0 || max_steps == 0 || inactive.is_empty() {
        return (order, dropped);
    }

    let mut residual = y.to_vec();
    let mut qr = GrowingQr::new(n);
    let mut corr = vec![0.0; std.columns.len()];
    let stop_tol = 1e-12 * y_norm;

    let try_activate = |j: usize,
                            qr: &mut GrowingQr,
                            inactive: &mut Vec<usize>,
                            order: &mut Vec<usize>,
                            dropped: &mut Vec<DroppedColumn>|
     -> bool {
        inactive.retain(|&c| c != j);
        if qr.push(col(j), 1e-10) {
            order.push(j);
            true
        } else {
            dropped.push(DroppedColumn {
                column: j,
                reason: DropReason::RankDeficient,
            });
            false
        }
    };

    for &c in &inactive {
        corr[c] = dot(col(c), &residual);
    }
    let mut ranked = inactive.clone();
    ranked.sort_by(|&a, &b| corr[b].abs().total_cmp(&corr[a].abs()).then(a.cmp(&b)));
    for j in ranked {
        if corr[j].abs() <= stop_tol {
            break;
        }
        if try_activate(j, &mut qr, &mut inactive, &mut order, &mut dropped) {
            break;
        }
    }
    if order.is_empty() {
        return (order, dropped);
    }

    loop {
        for &c in order.iter().chain(inactive.iter()) {
            corr[c] = dot(col(c), &residual);
        }
        let big_c = order.iter().map(|&c| corr[c].abs()).fold(0.0, f64::max);
        if big_c <= stop_tol {
            break;
        }
        let signs: Vec<f64> = order.iter().map(|&c| corr[c].signum()).collect();
        // Equiangular direction u = X_A w with X_Aᵀ u = A·s; with X_A = QR,
        // u = A·Q R⁻ᵀ s.
        let v = qr.solve_rt(&signs);
        let vv = dot(&v, &v);
        if !(vv > 0.0 && vv.is_finite()) {
            break;
        }
        let a_big = 1.0 / vv.sqrt();
        let u: Vec<f64> = qr.combine(&v).into_iter().map(|x| x * a_big).collect();

        let at_limit = order.len() >= max_steps || inactive.is_empty();
        let mut gamma = big_c / a_big;
        let mut next = None;
        if !at_limit {
            let full = gamma;
            for &c in &inactive {
                let a_c = dot(col(c), &u);
                for cand in [(big_c - corr[c]) / (a_big - a_c), (big_c + corr[c]) / (a_big + a_c)] {
                    if cand > 1e-14 * full && cand < gamma {
                        gamma = cand;
                        next = Some(c);
                    }
                }
            }
        }
        for (r, ui) in residual.iter_mut().zip(&u) {
            *r -= gamma * ui;
        }
        match next {
            Some(j) if !at_limit => {
                // A dependent column is dropped and the path continues with
                // the same active set.
                try_activate(j, &mut qr, &mut inactive, &mut order, &mut dropped);
            }
            _ => break,
        }
    }
    (order, dropped)
}

/// Result of evaluating the nested OLS candidates along a LAR path.
pub(crate) struct PathSelection {
    pub active: Vec<usize>,
    pub coefficients: Vec<f64>,
    pub e_loo: f64,
    pub e_cloo: f64,
    pub dropped: Vec<DroppedColumn>,
}

/// Refits every prefix `{0} ∪ path[..k]` by OLS and keeps the prefix with
/// the smallest corrected LOO error. Corrected errors are floored at the
/// round-off level of the response so that exact fits compare equal and the
/// shortest one wins.
pub(crate) fn select_along_path(design: &Design<'_>, path: &[usize], z: &[f64]) -> PathSelection {
    let n = design.n;
    let floor = 1e-24 * z.iter().map(|v| v * v).sum::<f64>() / n as f64;
    let mut qr = GrowingQr::with_response(n, z);
    let mut dropped = Vec::new();
    let mut kept: Vec<usize> = Vec::new();
    let mut best: Option<(f64, f64, usize)> = None;

    for &c in std::iter::once(&0).chain(path) {
        if !qr.push(design.columns[c], 1e-12) {
            dropped.push(DroppedColumn {
                column: c,
                reason: DropReason::RankDeficient,
            });
            continue;
        }
        kept.push(c);
        let (e_loo, e_cloo) = qr.loo_errors();
        let e_cloo = e_cloo.max(floor);
        if best.is_none_or(|(_, b, _)| e_cloo < b) {
            best = Some((e_loo, e_cloo, kept.len()));
        }
    }

    match best {
        Some((e_loo, e_cloo, k)) if kept.len() > 0 => PathSelection {
            coefficients: qr.coefficients(k),
            active: kept[..k].to_vec(),
            e_loo,
            e_cloo,
            dropped,
        },
        _ => PathSelection {
            active: Vec::new(),
            coefficients: Vec::new(),
            e_loo: f64::INFINITY,
            e_cloo: f64::INFINITY,
            dropped,
        },
    }
}

pub(crate) fn hybrid_on_columns(
    design: &Design<'_>,
    std: &Standardized,
    cands: &[usize],
    z: &[f64],
) -> HybridLarFit {
    let n = design.n;
    let mean = z.iter().sum::<f64>() / n as f64;
    let y: Vec<f64> = z.iter().map(|v| v - mean).collect();
    let max_steps = cands.len().min(n.saturating_sub(1));
    let (path, mut dropped) = lar_path(std, cands, &y, max_steps);
    let sel = select_along_path(design, &path, z);
    dropped.extend(sel.dropped);
    HybridLarFit {
        active: sel.active,
        coefficients: sel.coefficients,
        e_loo: sel.e_loo,
        e_cloo: sel.e_cloo,
        path,
        dropped,
    }
}

/// Hybrid LAR on an explicit design matrix whose first column is the
/// constant basis function.
pub fn hybrid_lar_fit(x: &DMatrix<f64>, z: &[f64]) -> Result<HybridLarFit> {
    let n = x.nrows();
    if n == 0 || z.is_empty() {
        return Err(Error::EmptyData("hybrid LAR needs at least one sample".into()));
    }
    if z.len() != n {
        return Err(Error::shape(format!("{} responses for {} design rows", z.len(), n)));
    }
    if x.ncols() == 0 {
        return Err(Error::shape("design matrix has no columns"));
    }
    let columns: Vec<&[f64]> = x.as_slice().chunks(n).collect();
    let std = Standardized::new(&columns, 1e-12);
    let design = Design { n, columns };
    let cands: Vec<usize> = (1..x.ncols()).collect();
    let mut fit = hybrid_on_columns(&design, &std, &cands, z);
    for d in &fit.dropped {
        log::warn!("design column {} dropped: {:?}", d.column, d.reason);
    }
    fit.dropped.sort_by_key(|d| d.column);
    Ok(fit)
}
