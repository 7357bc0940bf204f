use nalgebra::{DMatrix, DVector};

use super::case::PowerSystemCase;
use super::network::Network;
use crate::error::Result;

pub const PF_TOLERANCE: f64 = 1e-8;
pub const PF_MAX_ITER: usize = 50;
/// Consecutive mismatch increases treated as divergence.
const DIVERGENCE_STEPS: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct PowerFlowResult {
    pub vm: Vec<f64>,
    /// Bus angles in radians.
    pub va: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Largest bus P/Q balance error in p.u., re-evaluated from the complex
    /// injections.
    pub mismatch: f64,
    /// Generator outputs in MW/MVAr, indexed like `case.generators`.
    pub pg: Vec<f64>,
    pub qg: Vec<f64>,
}

/// Polar Newton-Raphson. Starts from `V = 1`, `θ = 0` (generator buses at
/// their setpoints) unless `start = (vm, va)` is given.
pub fn newton_power_flow(case: &PowerSystemCase, start: Option<(&[f64], &[f64])>) -> Result<PowerFlowResult> {
    let net = Network::new(case)?;
    let nb = net.nb;
    let base = net.base_mva;

    let (mut vm, mut va) = match start {
        Some((vm, va)) => (vm.to_vec(), va.to_vec()),
        None => (vec![1.0; nb], vec![0.0; nb]),
    };
    let mut p_spec: Vec<f64> = net.pd.iter().map(|p| -p).collect();
    let mut q_spec: Vec<f64> = net.qd.iter().map(|q| -q).collect();
    for (k, &g) in net.gens.iter().enumerate() {
        let gen = &case.generators[g];
        let bus = net.gen_bus[k];
        p_spec[bus] += gen.pg / base;
        q_spec[bus] += gen.qg / base;
    }
    let regulated: Vec<usize> = net.pv.iter().copied().chain([net.slack]).collect();
    for &bus in &regulated {
        if let Some(k) = net.gen_bus.iter().position(|&b| b == bus) {
            vm[bus] = case.generators[net.gens[k]].vg;
        }
    }
    if start.is_none() {
        va[net.slack] = case.buses[net.slack].va.to_radians();
    }

    let theta_vars: Vec<usize> = (0..nb).filter(|&i| i != net.slack).collect();
    let v_vars = net.pq.clone();
    let nvar = theta_vars.len() + v_vars.len();

    let residual = |vm: &[f64], va: &[f64]| -> Vec<f64> {
        theta_vars
            .iter()
            .map(|&i| net.bus_p[i].value(vm, va) - p_spec[i])
            .chain(v_vars.iter().map(|&i| net.bus_q[i].value(vm, va) - q_spec[i]))
            .collect()
    };

    let mut converged = false;
    let mut iterations = 0;
    let mut prev = f64::INFINITY;
    let mut growth = 0;
    loop {
        let f = residual(&vm, &va);
        let norm = f.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if !norm.is_finite() {
            break;
        }
        if norm < PF_TOLERANCE {
            converged = true;
            break;
        }
        if iterations == PF_MAX_ITER {
            break;
        }
        growth = if norm > prev { growth + 1 } else { 0 };
        if growth >= DIVERGENCE_STEPS {
            log::debug!("power flow diverging after {iterations} iterations");
            break;
        }
        prev = norm;

        let mut jac = DMatrix::zeros(nvar, nvar);
        let mut row = vec![0.0; 2 * nb];
        let rows = theta_vars
            .iter()
            .map(|&i| &net.bus_p[i])
            .chain(v_vars.iter().map(|&i| &net.bus_q[i]));
        for (r, expr) in rows.enumerate() {
            row.iter_mut().for_each(|v| *v = 0.0);
            expr.add_grad(&vm, &va, 1.0, &mut row);
            for (c, &i) in theta_vars.iter().enumerate() {
                jac[(r, c)] = row[i];
            }
            for (c, &i) in v_vars.iter().enumerate() {
                jac[(r, theta_vars.len() + c)] = row[nb + i];
            }
        }
        let Some(dx) = jac.lu().solve(&-DVector::from_vec(f)) else {
            log::debug!("singular power flow Jacobian");
            break;
        };
        for (c, &i) in theta_vars.iter().enumerate() {
            va[i] += dx[c];
        }
        for (c, &i) in v_vars.iter().enumerate() {
            vm[i] += dx[theta_vars.len() + c];
        }
        iterations += 1;
    }

    // Unit outputs: the slack bus balances P, regulated buses supply Q.
    let s = net.injections(&vm, &va);
    let mut pg: Vec<f64> = case.generators.iter().map(|g| if g.in_service { g.pg } else { 0.0 }).collect();
    let mut qg: Vec<f64> = case.generators.iter().map(|g| if g.in_service { g.qg } else { 0.0 }).collect();
    for &bus in &regulated {
        let units: Vec<usize> = (0..net.gens.len()).filter(|&k| net.gen_bus[k] == bus).collect();
        if units.is_empty() {
            continue;
        }
        let q_total = (s[bus].im + net.qd[bus]) * base;
        for &k in &units {
            qg[net.gens[k]] = q_total / units.len() as f64;
        }
        if bus == net.slack {
            let others: f64 = units[1..].iter().map(|&k| pg[net.gens[k]]).sum();
            pg[net.gens[units[0]]] = (s[bus].re + net.pd[bus]) * base - others;
        }
    }
    let pg_pu: Vec<f64> = net.gens.iter().map(|&g| pg[g] / base).collect();
    let qg_pu: Vec<f64> = net.gens.iter().map(|&g| qg[g] / base).collect();
    let mismatch = net.mismatch(&vm, &va, &pg_pu, &qg_pu);
    Ok(PowerFlowResult {
        vm,
        va,
        converged,
        iterations,
        mismatch,
        pg,
        qg,
    })
}
