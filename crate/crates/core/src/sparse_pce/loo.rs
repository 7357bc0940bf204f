//! Leave-one-out errors through the hat-matrix identity.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Leverages at or above this value are treated as interpolating points.
const UNIT_LEVERAGE: f64 = 1.0 - 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LooResult {
    /// Mean squared leave-one-out residual, `+∞` if some point has unit
    /// leverage.
    pub e_loo: f64,
    pub interpolating: bool,
}

/// `e_loo = (1/n) Σ_m (r_m / (1 − h_m))²` for an OLS fit with residuals
/// `r = z − X c` and leverages `h = diag(X (XᵀX)⁻¹ Xᵀ)`.
pub fn loo_error(x_active: &DMatrix<f64>, z: &[f64], coefficients: &[f64]) -> Result<LooResult> {
    let n = x_active.nrows();
    if n == 0 {
        return Err(Error::EmptyData("LOO error needs at least one sample".into()));
    }
    if z.len() != n || coefficients.len() != x_active.ncols() {
        return Err(Error::shape(format!(
            "design is {}×{}, {} responses, {} coefficients",
            n,
            x_active.ncols(),
            z.len(),
            coefficients.len()
        )));
    }
    let fitted = x_active * DVector::from_column_slice(coefficients);
    let q = x_active.clone().qr().q();
    let mut sum = 0.0;
    for i in 0..n {
        let h: f64 = q.row(i).iter().map(|v| v * v).sum();
        if h >= UNIT_LEVERAGE {
            log::debug!("sample {i} has unit leverage; LOO error is unbounded");
            return Ok(LooResult {
                e_loo: f64::INFINITY,
                interpolating: true,
            });
        }
        let e = (z[i] - fitted[i]) / (1.0 - h);
        sum += e * e;
    }
    Ok(LooResult {
        e_loo: sum / n as f64,
        interpolating: false,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Thin QR factorization grown one column at a time by Gram-Schmidt with
/// reorthogonalization. Optionally tracks an OLS fit of a response so that
/// residuals, leverages and `trace((XᵀX)⁻¹)` are available after every
/// added column in `O(n k)` work.
#[derive(Debug, Clone)]
pub(crate) struct GrowingQr {
    n: usize,
    q: Vec<Vec<f64>>,
    /// Column `k` of `R`, length `k + 1`.
    r: Vec<Vec<f64>>,
    /// Column `k` of `R⁻¹`, length `k + 1`.
    rinv: Vec<Vec<f64>>,
    trace_inv: f64,
    tracking: bool,
    qtz: Vec<f64>,
    residual: Vec<f64>,
    leverage: Vec<f64>,
}

impl GrowingQr {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            q: Vec::new(),
            r: Vec::new(),
            rinv: Vec::new(),
            trace_inv: 0.0,
            tracking: false,
            qtz: Vec::new(),
            residual: Vec::new(),
            leverage: Vec::new(),
        }
    }

    pub fn with_response(n: usize, z: &[f64]) -> Self {
        let mut qr = Self::new(n);
        qr.tracking = true;
        qr.residual = z.to_vec();
        qr.leverage = vec![0.0; n];
        qr
    }

    pub fn len(&self) -> usize {
        self.q.len()
    }

    /// Appends `col` unless its component orthogonal to the current span is
    /// below `rel_tol · ‖col‖`.
    pub fn push(&mut self, col: &[f64], rel_tol: f64) -> bool {
        debug_assert_eq!(col.len(), self.n);
        let k = self.q.len();
        let norm = dot(col, col).sqrt();
        if norm == 0.0 || k >= self.n {
            return false;
        }
        let mut v = col.to_vec();
        let mut coefs = vec![0.0; k];
        for _ in 0..2 {
            for (i, qi) in self.q.iter().enumerate() {
                let c = dot(qi, &v);
                coefs[i] += c;
                for (vj, qj) in v.iter_mut().zip(qi) {
                    *vj -= c * qj;
                }
            }
        }
        let d = dot(&v, &v).sqrt();
        if !(d > rel_tol * norm) {
            return false;
        }
        for vj in &mut v {
            *vj /= d;
        }

        // R⁻¹ of the bordered triangle: new column [−R⁻¹c/d; 1/d].
        let mut t = vec![0.0; k];
        for (m, col_m) in self.rinv.iter().enumerate() {
            for (i, &val) in col_m.iter().enumerate() {
                t[i] += val * coefs[m];
            }
        }
        let mut new_inv: Vec<f64> = t.iter().map(|ti| -ti / d).collect();
        new_inv.push(1.0 / d);
        self.trace_inv += new_inv.iter().map(|x| x * x).sum::<f64>();
        self.rinv.push(new_inv);

        coefs.push(d);
        self.r.push(coefs);

        if self.tracking {
            let c = dot(&v, &self.residual);
            self.qtz.push(c);
            for ((r, h), qj) in self.residual.iter_mut().zip(&mut self.leverage).zip(&v) {
                *r -= c * qj;
                *h += qj * qj;
            }
        }
        self.q.push(v);
        true
    }

    /// Solves `Rᵀ v = s`.
    pub fn solve_rt(&self, s: &[f64]) -> Vec<f64> {
        let k = self.len();
        let mut v = vec![0.0; k];
        for i in 0..k {
            let col = &self.r[i];
            let acc: f64 = (0..i).map(|m| col[m] * v[m]).sum();
            v[i] = (s[i] - acc) / col[i];
        }
        v
    }

    /// `Q v`.
    pub fn combine(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for (qi, &vi) in self.q.iter().zip(v) {
            for (o, q) in out.iter_mut().zip(qi) {
                *o += vi * q;
            }
        }
        out
    }

    /// `(e_loo, e_cloo)` of the OLS fit on the current columns, where
    /// `e_cloo = e_loo · n/(n − k) · (1 + trace((XᵀX)⁻¹))`.
    pub fn loo_errors(&self) -> (f64, f64) {
        debug_assert!(self.tracking);
        let n = self.n;
        let k = self.len();
        let mut sum = 0.0;
        for (r, h) in self.residual.iter().zip(&self.leverage) {
            if *h >= UNIT_LEVERAGE {
                return (f64::INFINITY, f64::INFINITY);
            }
            let e = r / (1.0 - h);
            sum += e * e;
        }
        let e_loo = sum / n as f64;
        let e_cloo = if n > k {
            e_loo * (n as f64 / (n - k) as f64) * (1.0 + self.trace_inv)
        } else {
            f64::INFINITY
        };
        (e_loo, e_cloo)
    }

    /// OLS coefficients of the first `k` columns, `R_k β = (Qᵀz)_k`.
    pub fn coefficients(&self, k: usize) -> Vec<f64> {
        debug_assert!(self.tracking && k <= self.len());
        let mut beta = vec![0.0; k];
        for i in (0..k).rev() {
            let acc: f64 = (i + 1..k).map(|m| self.r[m][i] * beta[m]).sum();
            beta[i] = (self.qtz[i] - acc) / self.r[i][i];
        }
        beta
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn constant_basis_two_points() {
        let x = DMatrix::from_element(2, 1, 1.0);
        let r = loo_error(&x, &[0.0, 2.0], &[1.0]).unwrap();
        assert_abs_diff_eq!(r.e_loo, 4.0, epsilon = 1e-12);
        assert!(!r.interpolating);
    }

    #[test]
    fn exact_fit_without_unit_leverage_is_zero() {
        let x = DMatrix::from_fn(5, 2, |i, j| if j == 0 { 1.0 } else { i as f64 });
        let z: Vec<f64> = (0..5).map(|i| 2.0 + 3.0 * i as f64).collect();
        let r = loo_error(&x, &z, &[2.0, 3.0]).unwrap();
        assert_abs_diff_eq!(r.e_loo, 0.0, epsilon = 1e-20);
    }

    #[test]
    fn unit_leverage_flags_interpolation() {
        let x = DMatrix::from_fn(2, 2, |i, j| if j == 0 { 1.0 } else { i as f64 });
        let r = loo_error(&x, &[1.0, 3.0], &[1.0, 2.0]).unwrap();
        assert!(r.interpolating);
        assert!(r.e_loo.is_infinite());
    }

    #[test]
    fn growing_qr_matches_batch_quantities() {
        let x = DMatrix::from_fn(8, 3, |i, j| ((i + 1) as f64).powi(j as i32) + 0.1 * (i * j) as f64);
        let z: Vec<f64> = (0..8).map(|i| (i as f64).sin()).collect();
        let mut qr = GrowingQr::with_response(8, &z);
        for j in 0..3 {
            assert!(qr.push(x.column(j).as_slice(), 1e-12));
        }
        let beta = qr.coefficients(3);
        let (e_loo, _) = qr.loo_errors();
        let batch = loo_error(&x, &z, &beta).unwrap();
        assert_abs_diff_eq!(e_loo, batch.e_loo, epsilon = 1e-10);
        let xtx_inv = (x.transpose() * &x).try_inverse().unwrap();
        assert_abs_diff_eq!(qr.trace_inv, xtx_inv.trace(), epsilon = 1e-10);
        // Dependent column is refused.
        let dup: Vec<f64> = x.column(1).iter().map(|v| 2.0 * v).collect();
        assert!(!qr.push(&dup, 1e-10));
    }
}
