//! Admittance model and polar power expressions.

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::case::{BusType, PowerSystemCase};
use crate::error::Result;

/// `V_a V_b (α cos(θ_a − θ_b) + β sin(θ_a − θ_b))`.
///
/// Bus injections and branch flows are sums of these terms, so one set of
/// derivative formulas serves power flow and OPF.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Term {
    pub a: usize,
    pub b: usize,
    pub alpha: f64,
    pub beta: f64,
}

impl Term {
    fn parts(&self, vm: &[f64], va: &[f64]) -> (f64, f64, f64) {
        let d = va[self.a] - va[self.b];
        let (sin, cos) = d.sin_cos();
        let c = self.alpha * cos + self.beta * sin;
        let s = -self.alpha * sin + self.beta * cos;
        (vm[self.a] * vm[self.b], c, s)
    }
}

/// Sum of [`Term`]s over a network with `nb` buses. Variables are ordered
/// `[θ_1..θ_nb, V_1..V_nb]`.
#[derive(Debug, Clone, Default)]
pub(crate) struct Expr {
    pub terms: Vec<Term>,
}

impl Expr {
    fn push(&mut self, a: usize, b: usize, alpha: f64, beta: f64) {
        if alpha != 0.0 || beta != 0.0 {
            self.terms.push(Term { a, b, alpha, beta });
        }
    }

    pub fn value(&self, vm: &[f64], va: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|t| {
                let (vv, c, _) = t.parts(vm, va);
                vv * c
            })
            .sum()
    }

    /// Adds `scale · ∇expr` into `row`.
    pub fn add_grad(&self, vm: &[f64], va: &[f64], scale: f64, row: &mut [f64]) {
        let nb = vm.len();
        for t in &self.terms {
            let (vv, c, s) = t.parts(vm, va);
            row[t.a] += scale * vv * s;
            row[t.b] -= scale * vv * s;
            row[nb + t.a] += scale * vm[t.b] * c;
            row[nb + t.b] += scale * vm[t.a] * c;
        }
    }

    /// Adds `scale · ∇²expr` into the leading `2nb × 2nb` block of `h`.
    pub fn add_hess(&self, vm: &[f64], va: &[f64], scale: f64, h: &mut DMatrix<f64>) {
        let nb = vm.len();
        for t in &self.terms {
            let (vv, c, s) = t.parts(vm, va);
            let idx = [t.a, t.b, nb + t.a, nb + t.b];
            let (va_, vb_) = (vm[t.a], vm[t.b]);
            let local = [
                [-vv * c, vv * c, vb_ * s, va_ * s],
                [vv * c, -vv * c, -vb_ * s, -va_ * s],
                [vb_ * s, -vb_ * s, 0.0, c],
                [va_ * s, -va_ * s, c, 0.0],
            ];
            for (i, &ri) in idx.iter().enumerate() {
                for (j, &cj) in idx.iter().enumerate() {
                    h[(ri, cj)] += scale * local[i][j];
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct BranchModel {
    /// Rating in p.u., 0 for unlimited.
    pub rate: f64,
    pub p_from: Expr,
    pub q_from: Expr,
    pub p_to: Expr,
    pub q_to: Expr,
}

/// Internal (0-based, in-service) view of a case.
#[derive(Debug, Clone)]
pub struct Network {
    pub nb: usize,
    pub base_mva: f64,
    pub ybus: Vec<Vec<Complex64>>,
    pub slack: usize,
    pub pv: Vec<usize>,
    pub pq: Vec<usize>,
    /// Positions in `case.generators` of online units.
    pub gens: Vec<usize>,
    /// Bus position of each online unit.
    pub gen_bus: Vec<usize>,
    /// Demand per bus in p.u.
    pub pd: Vec<f64>,
    pub qd: Vec<f64>,
    pub(crate) bus_p: Vec<Expr>,
    pub(crate) bus_q: Vec<Expr>,
    pub(crate) branches: Vec<BranchModel>,
}

impl Network {
    pub fn new(case: &PowerSystemCase) -> Result<Self> {
        case.validate()?;
        let nb = case.buses.len();
        let index = case.bus_index();
        let base = case.base_mva;
        let mut ybus = vec![vec![Complex64::new(0.0, 0.0); nb]; nb];
        let mut branches = Vec::new();

        for (i, bus) in case.buses.iter().enumerate() {
            ybus[i][i] += Complex64::new(bus.gs, bus.bs) / base;
        }
        for br in case.branches.iter().filter(|b| b.in_service) {
            let (f, t) = (index[&br.from], index[&br.to]);
            let ys = Complex64::new(1.0, 0.0) / Complex64::new(br.r, br.x);
            let tap_mag = if br.ratio == 0.0 { 1.0 } else { br.ratio };
            let tap = Complex64::from_polar(tap_mag, br.angle.to_radians());
            let ytt = ys + Complex64::new(0.0, br.b / 2.0);
            let yff = ytt / (tap_mag * tap_mag);
            let yft = -ys / tap.conj();
            let ytf = -ys / tap;
            ybus[f][f] += yff;
            ybus[f][t] += yft;
            ybus[t][f] += ytf;
            ybus[t][t] += ytt;

            let mut m = BranchModel {
                rate: br.rate_a / base,
                p_from: Expr::default(),
                q_from: Expr::default(),
                p_to: Expr::default(),
                q_to: Expr::default(),
            };
            m.p_from.push(f, f, yff.re, 0.0);
            m.p_from.push(f, t, yft.re, yft.im);
            m.q_from.push(f, f, -yff.im, 0.0);
            m.q_from.push(f, t, -yft.im, yft.re);
            m.p_to.push(t, t, ytt.re, 0.0);
            m.p_to.push(t, f, ytf.re, ytf.im);
            m.q_to.push(t, t, -ytt.im, 0.0);
            m.q_to.push(t, f, -ytf.im, ytf.re);
            branches.push(m);
        }

        let mut bus_p = vec![Expr::default(); nb];
        let mut bus_q = vec![Expr::default(); nb];
        for i in 0..nb {
            for k in 0..nb {
                let y = ybus[i][k];
                bus_p[i].push(i, k, y.re, y.im);
                bus_q[i].push(i, k, -y.im, y.re);
            }
        }

        let gens = case.online_generators();
        let gen_bus: Vec<usize> = gens.iter().map(|&g| index[&case.generators[g].bus]).collect();
        let slack = case.slack_index();
        let mut pv = Vec::new();
        let mut pq = Vec::new();
        for (i, bus) in case.buses.iter().enumerate() {
            match bus.kind {
                BusType::Slack => {}
                BusType::Pv if gen_bus.contains(&i) => pv.push(i),
                _ => pq.push(i),
            }
        }
        Ok(Self {
            nb,
            base_mva: base,
            ybus,
            slack,
            pv,
            pq,
            gens,
            gen_bus,
            pd: case.buses.iter().map(|b| b.pd / base).collect(),
            qd: case.buses.iter().map(|b| b.qd / base).collect(),
            bus_p,
            bus_q,
            branches,
        })
    }

    /// Complex bus injections `S = V ∘ conj(Y V)` in p.u.
    pub fn injections(&self, vm: &[f64], va: &[f64]) -> Vec<Complex64> {
        let v: Vec<Complex64> = vm
            .iter()
            .zip(va)
            .map(|(&m, &a)| Complex64::from_polar(m, a))
            .collect();
        (0..self.nb)
            .map(|i| {
                let current: Complex64 = self.ybus[i].iter().zip(&v).map(|(y, vk)| y * vk).sum();
                v[i] * current.conj()
            })
            .collect()
    }

    /// Largest absolute P/Q balance error in p.u. for a dispatch given per
    /// online unit in p.u.
    pub fn mismatch(&self, vm: &[f64], va: &[f64], pg: &[f64], qg: &[f64]) -> f64 {
        let s = self.injections(vm, va);
        let mut net: Vec<Complex64> = (0..self.nb)
            .map(|i| Complex64::new(-self.pd[i], -self.qd[i]))
            .collect();
        for (k, &bus) in self.gen_bus.iter().enumerate() {
            net[bus] += Complex64::new(pg[k], qg[k]);
        }
        s.iter()
            .zip(&net)
            .map(|(a, b)| (a.re - b.re).abs().max((a.im - b.im).abs()))
            .fold(0.0, f64::max)
    }

    /// Apparent power flows `(|S_from|, |S_to|)` per in-service branch, p.u.
    pub fn branch_flows(&self, vm: &[f64], va: &[f64]) -> Vec<(f64, f64)> {
        self.branches
            .iter()
            .map(|b| {
                let sf = b.p_from.value(vm, va).hypot(b.q_from.value(vm, va));
                let st = b.p_to.value(vm, va).hypot(b.q_to.value(vm, va));
                (sf, st)
            })
            .collect()
    }

    pub fn branch_ratings(&self) -> Vec<f64> {
        self.branches.iter().map(|b| b.rate).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::parse_matpower_case;

    fn case9() -> PowerSystemCase {
        parse_matpower_case(include_str!("../../tests/data/case9.m")).unwrap()
    }

    #[test]
    fn term_expressions_match_complex_injections() {
        let net = Network::new(&case9()).unwrap();
        let vm: Vec<f64> = (0..9).map(|i| 0.95 + 0.01 * i as f64).collect();
        let va: Vec<f64> = (0..9).map(|i| -0.05 * i as f64 + 0.02).collect();
        let s = net.injections(&vm, &va);
        for i in 0..9 {
            assert!((net.bus_p[i].value(&vm, &va) - s[i].re).abs() < 1e-12);
            assert!((net.bus_q[i].value(&vm, &va) - s[i].im).abs() < 1e-12);
        }
    }

    #[test]
    fn gradients_and_hessians_match_finite_differences() {
        let net = Network::new(&case9()).unwrap();
        let vm: Vec<f64> = (0..9).map(|i| 1.0 + 0.01 * (i as f64 - 4.0)).collect();
        let va: Vec<f64> = (0..9).map(|i| 0.03 * (i as f64).sin()).collect();
        let exprs = [&net.bus_p[4], &net.bus_q[6], &net.branches[2].q_to, &net.branches[7].p_from];
        let eval = |e: &Expr, x: &[f64]| e.value(&x[9..], &x[..9]);
        let x0: Vec<f64> = va.iter().chain(&vm).copied().collect();
        let h = 1e-6;
        for e in exprs {
            let mut g = vec![0.0; 18];
            e.add_grad(&vm, &va, 1.0, &mut g);
            let mut hess = DMatrix::zeros(18, 18);
            e.add_hess(&vm, &va, 1.0, &mut hess);
            for j in 0..18 {
                let mut xp = x0.clone();
                let mut xm = x0.clone();
                xp[j] += h;
                xm[j] -= h;
                let fd = (eval(e, &xp) - eval(e, &xm)) / (2.0 * h);
                assert!((fd - g[j]).abs() < 1e-7, "grad {j}: {fd} vs {}", g[j]);
                let mut gp = vec![0.0; 18];
                let mut gm = vec![0.0; 18];
                e.add_grad(&xp[9..], &xp[..9], 1.0, &mut gp);
                e.add_grad(&xm[9..], &xm[..9], 1.0, &mut gm);
                for i in 0..18 {
                    let fd = (gp[i] - gm[i]) / (2.0 * h);
                    assert!((fd - hess[(i, j)]).abs() < 1e-6, "hess {i},{j}");
                }
            }
        }
    }
}
