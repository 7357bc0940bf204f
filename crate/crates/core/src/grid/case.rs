use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BusType {
    Pq,
    Pv,
    Slack,
}

impl BusType {
    pub fn from_code(code: f64) -> Result<Self> {
        match code as i64 {
            1 => Ok(BusType::Pq),
            2 => Ok(BusType::Pv),
            3 => Ok(BusType::Slack),
            4 => Err(Error::Unsupported("isolated buses (type 4)".into())),
            other => Err(Error::InvalidCase(format!("unknown bus type {other}"))),
        }
    }

    pub fn code(self) -> u8 {
        match self {
            BusType::Pq => 1,
            BusType::Pv => 2,
            BusType::Slack => 3,
        }
    }
}

/// Bus row. Powers in MW/MVAr, voltages in p.u., angles in degrees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: usize,
    pub kind: BusType,
    pub pd: f64,
    pub qd: f64,
    pub gs: f64,
    pub bs: f64,
    pub area: f64,
    pub vm: f64,
    pub va: f64,
    pub base_kv: f64,
    pub zone: f64,
    pub vmax: f64,
    pub vmin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub from: usize,
    pub to: usize,
    pub r: f64,
    pub x: f64,
    pub b: f64,
    /// Long-term MVA rating; 0 means unlimited.
    pub rate_a: f64,
    pub rate_b: f64,
    pub rate_c: f64,
    /// Off-nominal tap ratio; 0 means 1.
    pub ratio: f64,
    /// Phase shift in degrees.
    pub angle: f64,
    pub in_service: bool,
    pub angmin: f64,
    pub angmax: f64,
}

/// Quadratic cost `c2·P² + c1·P + c0` with `P` in MW.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenCost {
    pub startup: f64,
    pub shutdown: f64,
    pub c2: f64,
    pub c1: f64,
    pub c0: f64,
}

impl GenCost {
    pub fn eval(&self, p_mw: f64) -> f64 {
        (self.c2 * p_mw + self.c1) * p_mw + self.c0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub bus: usize,
    pub pg: f64,
    pub qg: f64,
    pub qmax: f64,
    pub qmin: f64,
    pub vg: f64,
    pub mbase: f64,
    pub in_service: bool,
    pub pmax: f64,
    pub pmin: f64,
    pub cost: GenCost,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerSystemCase {
    pub base_mva: f64,
    pub buses: Vec<Bus>,
    pub generators: Vec<Generator>,
    pub branches: Vec<Branch>,
}

impl PowerSystemCase {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidCase(msg));
        if !(self.base_mva > 0.0) {
            return bad(format!("baseMVA must be positive, got {}", self.base_mva));
        }
        if self.buses.is_empty() {
            return bad("case has no buses".into());
        }
        let mut seen = HashMap::new();
        for (i, bus) in self.buses.iter().enumerate() {
            if seen.insert(bus.id, i).is_some() {
                return bad(format!("duplicate bus id {}", bus.id));
            }
            if !(bus.vmin < bus.vmax) {
                return bad(format!("bus {}: Vmin {} not below Vmax {}", bus.id, bus.vmin, bus.vmax));
            }
        }
        let slacks = self.buses.iter().filter(|b| b.kind == BusType::Slack).count();
        if slacks != 1 {
            return bad(format!("expected exactly one slack bus, found {slacks}"));
        }
        for br in &self.branches {
            for end in [br.from, br.to] {
                if !seen.contains_key(&end) {
                    return bad(format!("branch {}-{} references unknown bus {end}", br.from, br.to));
                }
            }
            if br.in_service && br.r == 0.0 && br.x == 0.0 {
                return bad(format!("branch {}-{} has zero impedance", br.from, br.to));
            }
        }
        for g in &self.generators {
            if !seen.contains_key(&g.bus) {
                return bad(format!("generator references unknown bus {}", g.bus));
            }
            if g.pmin > g.pmax || g.qmin > g.qmax {
                return bad(format!("generator at bus {} has inverted limits", g.bus));
            }
            if g.cost.c2 < 0.0 {
                return bad(format!("generator at bus {} has negative quadratic cost", g.bus));
            }
        }
        Ok(())
    }

    /// Map from external bus id to position in `buses`.
    pub fn bus_index(&self) -> HashMap<usize, usize> {
        self.buses.iter().enumerate().map(|(i, b)| (b.id, i)).collect()
    }

    pub fn slack_index(&self) -> usize {
        self.buses
            .iter()
            .position(|b| b.kind == BusType::Slack)
            .expect("validated case has a slack bus")
    }

    /// Positions of in-service generators.
    pub fn online_generators(&self) -> Vec<usize> {
        (0..self.generators.len())
            .filter(|&g| self.generators[g].in_service)
            .collect()
    }

    /// `Σ C_i(P_Gi)` over in-service generators, `pg` in MW and indexed like
    /// `generators`.
    pub fn total_cost(&self, pg: &[f64]) -> f64 {
        self.generators
            .iter()
            .zip(pg)
            .filter(|(g, _)| g.in_service)
            .map(|(g, &p)| g.cost.eval(p))
            .sum()
    }
}
