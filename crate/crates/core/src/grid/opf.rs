//! Primal-dual interior-point AC-OPF on the polar formulation.
//!
//! Variables are `x = [θ, V, P_G, Q_G]` in p.u. Equalities are the nodal
//! P/Q balances plus the reference angle; inequalities are the squared
//! apparent-power flow limits at both branch ends and the variable bounds.
//! The iteration follows the usual MIPS scheme: slack `z` with `h + z = 0`,
//! barrier parameter reduced by a fixed centering factor, fraction-to-the-
//! boundary step lengths.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::case::{GenCost, PowerSystemCase};
use super::network::Network;
use super::pf::newton_power_flow;
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OpfStatus {
    Converged,
    InfeasibleOrMaxIter,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OpfSolution {
    /// Per generator of the case (offline units report 0), MW.
    pub pg: Vec<f64>,
    /// MVAr.
    pub qg: Vec<f64>,
    pub vm: Vec<f64>,
    /// Radians.
    pub va: Vec<f64>,
    /// `Σ C_i(P_Gi)` in $/h recomputed from `pg`.
    pub objective: f64,
    pub status: OpfStatus,
    /// Scaled Lagrangian-gradient residual.
    pub kkt_residual: f64,
    pub iterations: usize,
    /// Largest nodal P/Q balance error, p.u.
    pub mismatch: f64,
    /// Largest inequality violation, p.u.
    pub max_violation: f64,
}

impl OpfSolution {
    pub fn converged(&self) -> bool {
        self.status == OpfStatus::Converged
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IpmOptions {
    pub feastol: f64,
    pub gradtol: f64,
    pub comptol: f64,
    pub costtol: f64,
    pub max_iter: usize,
    pub cost_scale: f64,
}

impl Default for IpmOptions {
    fn default() -> Self {
        Self {
            feastol: 1e-10,
            gradtol: 1e-8,
            comptol: 1e-8,
            costtol: 1e-10,
            max_iter: 200,
            cost_scale: 1e-4,
        }
    }
}

/// Acceptance thresholds for an iterate that stopped short of the strict
/// tolerances.
const ACCEPT_MISMATCH: f64 = 1e-8;
const ACCEPT_KKT: f64 = 1e-6;
const ACCEPT_VIOLATION: f64 = 1e-6;

const Z0: f64 = 1.0;
const SIGMA: f64 = 0.1;
const XI: f64 = 0.99995;
const ALPHA_MIN: f64 = 1e-8;

struct Bound {
    var: usize,
    /// +1 for `x ≤ b`, −1 for `x ≥ b`.
    sign: f64,
    value: f64,
}

struct Problem<'a> {
    net: Network,
    case: &'a PowerSystemCase,
    ng: usize,
    nx: usize,
    costs: Vec<GenCost>,
    /// `(branch, from_end)` for every limited branch end.
    flows: Vec<(usize, bool)>,
    bounds: Vec<Bound>,
    va_ref: f64,
    scale: f64,
}

struct Eval {
    f: f64,
    df: DVector<f64>,
    g: DVector<f64>,
    dg: DMatrix<f64>,
    h: DVector<f64>,
    dh: DMatrix<f64>,
}

impl<'a> Problem<'a> {
    fn new(case: &'a PowerSystemCase, scale: f64) -> Result<Self> {
        let net = Network::new(case)?;
        let nb = net.nb;
        let ng = net.gens.len();
        let nx = 2 * nb + 2 * ng;
        let base = net.base_mva;
        let costs = net.gens.iter().map(|&g| case.generators[g].cost).collect();
        let mut flows = Vec::new();
        for (l, br) in net.branches.iter().enumerate() {
            if br.rate > 0.0 {
                flows.push((l, true));
                flows.push((l, false));
            }
        }
        let mut bounds = Vec::new();
        let mut push = |var: usize, lo: f64, hi: f64| {
            if hi.is_finite() {
                bounds.push(Bound { var, sign: 1.0, value: hi });
            }
            if lo.is_finite() {
                bounds.push(Bound { var, sign: -1.0, value: lo });
            }
        };
        for (i, bus) in case.buses.iter().enumerate() {
            push(nb + i, bus.vmin, bus.vmax);
        }
        for (k, &g) in net.gens.iter().enumerate() {
            let gen = &case.generators[g];
            push(2 * nb + k, gen.pmin / base, gen.pmax / base);
            push(2 * nb + ng + k, gen.qmin / base, gen.qmax / base);
        }
        let va_ref = case.buses[net.slack].va.to_radians();
        Ok(Self {
            net,
            case,
            ng,
            nx,
            costs,
            flows,
            bounds,
            va_ref,
            scale,
        })
    }

    fn split<'x>(&self, x: &'x [f64]) -> (&'x [f64], &'x [f64], &'x [f64], &'x [f64]) {
        let nb = self.net.nb;
        let (va, rest) = x.split_at(nb);
        let (vm, rest) = rest.split_at(nb);
        let (pg, qg) = rest.split_at(self.ng);
        (va, vm, pg, qg)
    }

    fn flow_exprs(&self, l: usize, from: bool) -> (&super::network::Expr, &super::network::Expr) {
        let br = &self.net.branches[l];
        if from {
            (&br.p_from, &br.q_from)
        } else {
            (&br.p_to, &br.q_to)
        }
    }

    fn eval(&self, x: &[f64]) -> Eval {
        let nb = self.net.nb;
        let ng = self.ng;
        let base = self.net.base_mva;
        let (va, vm, pg, qg) = self.split(x);

        let mut f = 0.0;
        let mut df = DVector::zeros(self.nx);
        for (k, c) in self.costs.iter().enumerate() {
            let p = pg[k] * base;
            f += c.eval(p);
            df[2 * nb + k] = self.scale * base * (2.0 * c.c2 * p + c.c1);
        }
        f *= self.scale;

        let neq = 2 * nb + 1;
        let mut g = DVector::zeros(neq);
        let mut dg = DMatrix::zeros(neq, self.nx);
        let mut row = vec![0.0; 2 * nb];
        for i in 0..nb {
            g[i] = self.net.bus_p[i].value(vm, va) + self.net.pd[i];
            g[nb + i] = self.net.bus_q[i].value(vm, va) + self.net.qd[i];
            for (expr, r) in [(&self.net.bus_p[i], i), (&self.net.bus_q[i], nb + i)] {
                row.iter_mut().for_each(|v| *v = 0.0);
                expr.add_grad(vm, va, 1.0, &mut row);
                for (j, v) in row.iter().enumerate() {
                    dg[(r, j)] = *v;
                }
            }
        }
        for k in 0..ng {
            let bus = self.net.gen_bus[k];
            g[bus] -= pg[k];
            g[nb + bus] -= qg[k];
            dg[(bus, 2 * nb + k)] = -1.0;
            dg[(nb + bus, 2 * nb + ng + k)] = -1.0;
        }
        g[2 * nb] = va[self.net.slack] - self.va_ref;
        dg[(2 * nb, self.net.slack)] = 1.0;

        let niq = self.flows.len() + self.bounds.len();
        let mut h = DVector::zeros(niq);
        let mut dh = DMatrix::zeros(niq, self.nx);
        let mut gp = vec![0.0; 2 * nb];
        let mut gq = vec![0.0; 2 * nb];
        for (r, &(l, from)) in self.flows.iter().enumerate() {
            let (pe, qe) = self.flow_exprs(l, from);
            let (p, q) = (pe.value(vm, va), qe.value(vm, va));
            let rate = self.net.branches[l].rate;
            h[r] = p * p + q * q - rate * rate;
            gp.iter_mut().for_each(|v| *v = 0.0);
            gq.iter_mut().for_each(|v| *v = 0.0);
            pe.add_grad(vm, va, 1.0, &mut gp);
            qe.add_grad(vm, va, 1.0, &mut gq);
            for j in 0..2 * nb {
                dh[(r, j)] = 2.0 * (p * gp[j] + q * gq[j]);
            }
        }
        for (k, b) in self.bounds.iter().enumerate() {
            let r = self.flows.len() + k;
            h[r] = b.sign * (x[b.var] - b.value);
            dh[(r, b.var)] = b.sign;
        }
        Eval { f, df, g, dg, h, dh }
    }

    /// Hessian of `f + λᵀg + μᵀh`.
    fn hess(&self, x: &[f64], lam: &DVector<f64>, mu: &DVector<f64>) -> DMatrix<f64> {
        let nb = self.net.nb;
        let base = self.net.base_mva;
        let (va, vm, _, _) = self.split(x);
        let mut hm = DMatrix::zeros(self.nx, self.nx);
        for (k, c) in self.costs.iter().enumerate() {
            hm[(2 * nb + k, 2 * nb + k)] = self.scale * 2.0 * c.c2 * base * base;
        }
        for i in 0..nb {
            self.net.bus_p[i].add_hess(vm, va, lam[i], &mut hm);
            self.net.bus_q[i].add_hess(vm, va, lam[nb + i], &mut hm);
        }
        let mut gp = vec![0.0; 2 * nb];
        let mut gq = vec![0.0; 2 * nb];
        for (r, &(l, from)) in self.flows.iter().enumerate() {
            let m = mu[r];
            if m == 0.0 {
                continue;
            }
            let (pe, qe) = self.flow_exprs(l, from);
            let (p, q) = (pe.value(vm, va), qe.value(vm, va));
            gp.iter_mut().for_each(|v| *v = 0.0);
            gq.iter_mut().for_each(|v| *v = 0.0);
            pe.add_grad(vm, va, 1.0, &mut gp);
            qe.add_grad(vm, va, 1.0, &mut gq);
            pe.add_hess(vm, va, 2.0 * m * p, &mut hm);
            qe.add_hess(vm, va, 2.0 * m * q, &mut hm);
            for i in 0..2 * nb {
                if gp[i] == 0.0 && gq[i] == 0.0 {
                    continue;
                }
                for j in 0..2 * nb {
                    hm[(i, j)] += 2.0 * m * (gp[i] * gp[j] + gq[i] * gq[j]);
                }
            }
        }
        hm
    }

    fn midpoint_start(&self) -> Vec<f64> {
        let nb = self.net.nb;
        let base = self.net.base_mva;
        let clip = |v: f64| v.clamp(-1e10, 1e10);
        let mut x = vec![self.va_ref; self.nx];
        for (i, bus) in self.case.buses.iter().enumerate() {
            x[nb + i] = 0.5 * (bus.vmin + bus.vmax);
        }
        for (k, &g) in self.net.gens.iter().enumerate() {
            let gen = &self.case.generators[g];
            x[2 * nb + k] = 0.5 * (clip(gen.pmin) + clip(gen.pmax)) / base;
            x[2 * nb + self.ng + k] = 0.5 * (clip(gen.qmin) + clip(gen.qmax)) / base;
        }
        x
    }

    /// Start from a power flow with the case dispatch.
    fn power_flow_start(&self) -> Option<Vec<f64>> {
        let nb = self.net.nb;
        let base = self.net.base_mva;
        let mut case = self.case.clone();
        for g in &mut case.generators {
            g.pg = g.pg.clamp(g.pmin, g.pmax);
        }
        let pf = newton_power_flow(&case, None).ok()?;
        if !pf.converged {
            return None;
        }
        let mut x = Vec::with_capacity(self.nx);
        x.extend(&pf.va);
        x.extend(&pf.vm);
        x.extend(self.net.gens.iter().map(|&g| pf.pg[g] / base));
        x.extend(self.net.gens.iter().map(|&g| pf.qg[g] / base));
        debug_assert_eq!(x.len(), 2 * nb + 2 * self.ng);
        Some(x)
    }

    fn max_violation(&self, x: &[f64]) -> f64 {
        let ev_h = self.eval(x).h;
        let (va, vm, _, _) = self.split(x);
        let mut worst = 0.0_f64;
        for &(l, from) in &self.flows {
            let (pe, qe) = self.flow_exprs(l, from);
            let s = pe.value(vm, va).hypot(qe.value(vm, va));
            worst = worst.max(s - self.net.branches[l].rate);
        }
        for k in 0..self.bounds.len() {
            worst = worst.max(ev_h[self.flows.len() + k]);
        }
        worst
    }

    fn solution(&self, x: &[f64], kkt: f64, iterations: usize, strict: bool) -> OpfSolution {
        let base = self.net.base_mva;
        let (va, vm, pg, qg) = self.split(x);
        let mut pg_all = vec![0.0; self.case.generators.len()];
        let mut qg_all = vec![0.0; self.case.generators.len()];
        for (k, &g) in self.net.gens.iter().enumerate() {
            pg_all[g] = pg[k] * base;
            qg_all[g] = qg[k] * base;
        }
        let mismatch = self.net.mismatch(vm, va, pg, qg);
        let max_violation = self.max_violation(x);
        let acceptable = mismatch < ACCEPT_MISMATCH && kkt < ACCEPT_KKT && max_violation < ACCEPT_VIOLATION;
        let status = if (strict || acceptable) && x.iter().all(|v| v.is_finite()) {
            OpfStatus::Converged
        } else {
            OpfStatus::InfeasibleOrMaxIter
        };
        OpfSolution {
            objective: self.case.total_cost(&pg_all),
            pg: pg_all,
            qg: qg_all,
            vm: vm.to_vec(),
            va: va.to_vec(),
            status,
            kkt_residual: kkt,
            iterations,
            mismatch,
            max_violation,
        }
    }

    fn ipm(&self, x0: Vec<f64>, opts: &IpmOptions) -> OpfSolution {
        let nx = self.nx;
        let mut x = DVector::from_vec(x0);
        let mut ev = self.eval(x.as_slice());
        let neq = ev.g.len();
        let niq = ev.h.len();

        let mut z = DVector::from_element(niq, Z0);
        for i in 0..niq {
            if ev.h[i] < -Z0 {
                z[i] = -ev.h[i];
            }
        }
        let mut gamma = 1.0;
        let mut mu = DVector::from_element(niq, Z0);
        for i in 0..niq {
            if gamma / z[i] > Z0 {
                mu[i] = gamma / z[i];
            }
        }
        let mut lam = DVector::zeros(neq);

        let inf_norm = |v: &DVector<f64>| v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        let lagrange_grad =
            |ev: &Eval, lam: &DVector<f64>, mu: &DVector<f64>| &ev.df + ev.dg.tr_mul(lam) + ev.dh.tr_mul(mu);
        let conditions = |ev: &Eval, x: &DVector<f64>, z: &DVector<f64>, lam: &DVector<f64>, mu: &DVector<f64>, f_prev: f64| {
            let maxh = ev.h.iter().copied().fold(0.0_f64, f64::max);
            let feas = inf_norm(&ev.g).max(maxh) / (1.0 + inf_norm(x).max(inf_norm(z)));
            let grad = inf_norm(&lagrange_grad(ev, lam, mu)) / (1.0 + inf_norm(lam).max(inf_norm(mu)));
            let comp = z.dot(mu) / (1.0 + inf_norm(x));
            let cost = (ev.f - f_prev).abs() / (1.0 + f_prev.abs());
            (feas, grad, comp, cost)
        };

        let mut f_prev;
        let mut grad = conditions(&ev, &x, &z, &lam, &mu, ev.f).1;
        let mut iterations = 0;
        let mut converged = false;

        while iterations < opts.max_iter {
            iterations += 1;
            let lx = lagrange_grad(&ev, &lam, &mu);
            let lxx = self.hess(x.as_slice(), &lam, &mu);
            let w = mu.component_div(&z);
            let mut m = lxx;
            // M += dhᵀ diag(μ/z) dh
            let mut scaled = ev.dh.clone();
            for (i, mut r) in scaled.row_iter_mut().enumerate() {
                r *= w[i];
            }
            m += ev.dh.tr_mul(&scaled);
            let t = (mu.component_mul(&ev.h).add_scalar(gamma)).component_div(&z);
            let n = &lx + ev.dh.tr_mul(&t);

            let dim = nx + neq;
            let mut kkt = DMatrix::zeros(dim, dim);
            kkt.view_mut((0, 0), (nx, nx)).copy_from(&m);
            kkt.view_mut((0, nx), (nx, neq)).copy_from(&ev.dg.transpose());
            kkt.view_mut((nx, 0), (neq, nx)).copy_from(&ev.dg);
            let mut rhs = DVector::zeros(dim);
            rhs.rows_mut(0, nx).copy_from(&(-&n));
            rhs.rows_mut(nx, neq).copy_from(&(-&ev.g));
            let Some(sol) = kkt.lu().solve(&rhs) else {
                log::debug!("singular KKT system at iteration {iterations}");
                break;
            };
            let dx = sol.rows(0, nx).into_owned();
            let dlam = sol.rows(nx, neq).into_owned();
            let dz = -&ev.h - &z - &ev.dh * &dx;
            let dmu = -&mu + (DVector::from_element(niq, gamma) - mu.component_mul(&dz)).component_div(&z);

            let step = |v: &DVector<f64>, dv: &DVector<f64>| {
                let mut a = 1.0_f64;
                for i in 0..v.len() {
                    if dv[i] < 0.0 {
                        a = a.min(XI * v[i] / -dv[i]);
                    }
                }
                a
            };
            let alphap = step(&z, &dz);
            let alphad = step(&mu, &dmu);
            x += alphap * &dx;
            z += alphap * &dz;
            lam += alphad * &dlam;
            mu += alphad * &dmu;
            if niq > 0 {
                gamma = SIGMA * z.dot(&mu) / niq as f64;
            }

            f_prev = ev.f;
            ev = self.eval(x.as_slice());
            let (feas, gr, comp, cost) = conditions(&ev, &x, &z, &lam, &mu, f_prev);
            grad = gr;
            if feas < opts.feastol && grad < opts.gradtol && comp < opts.comptol && cost < opts.costtol {
                converged = true;
                break;
            }
            let bad = x.iter().any(|v| !v.is_finite())
                || alphap < ALPHA_MIN
                || alphad < ALPHA_MIN
                || gamma < f64::EPSILON
                || gamma > 1.0 / f64::EPSILON;
            if bad {
                log::debug!("interior point stalled at iteration {iterations}");
                break;
            }
        }
        self.solution(x.as_slice(), grad, iterations, converged)
    }
}

pub fn solve_ac_opf(case: &PowerSystemCase) -> Result<OpfSolution> {
    solve_ac_opf_with(case, &IpmOptions::default())
}

/// Runs the interior-point method from the bound midpoints and, if that
/// fails, once more from a power-flow solution of the case dispatch.
pub fn solve_ac_opf_with(case: &PowerSystemCase, opts: &IpmOptions) -> Result<OpfSolution> {
    let problem = Problem::new(case, opts.cost_scale)?;
    let first = problem.ipm(problem.midpoint_start(), opts);
    if first.converged() {
        return Ok(first);
    }
    log::debug!("retrying OPF from a power-flow start");
    match problem.power_flow_start() {
        Some(x0) => {
            let second = problem.ipm(x0, opts);
            Ok(if second.converged() || second.kkt_residual < first.kkt_residual {
                second
            } else {
                first
            })
        }
        None => Ok(first),
    }
}
