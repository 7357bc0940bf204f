use serde::{Deserialize, Serialize};

use super::case::{BusType, PowerSystemCase};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindFarm {
    /// Speeds in m/s.
    pub cut_in: f64,
    pub rated: f64,
    pub cut_out: f64,
    /// MW.
    pub capacity: f64,
    pub bus: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PvPlant {
    /// MW at unit normalized irradiance.
    pub capacity: f64,
    pub bus: usize,
}

/// How renewable plants interact with synchronous units at the same bus.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResMode {
    /// Plants inject alongside the existing units.
    #[default]
    Supplement,
    /// Units at plant buses are taken out of service.
    Replace,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResModel {
    pub wind: WindFarm,
    pub pv: PvPlant,
    #[serde(default)]
    pub mode: ResMode,
}

impl Default for ResModel {
    fn default() -> Self {
        Self {
            wind: WindFarm {
                cut_in: 3.0,
                rated: 12.0,
                cut_out: 25.0,
                capacity: 100.0,
                bus: 2,
            },
            pv: PvPlant {
                capacity: 100.0,
                bus: 3,
            },
            mode: ResMode::Supplement,
        }
    }
}

impl ResModel {
    pub fn validate(&self) -> Result<()> {
        let w = &self.wind;
        if !(0.0 <= w.cut_in && w.cut_in < w.rated && w.rated < w.cut_out) {
            return Err(Error::domain(format!(
                "wind curve needs 0 ≤ cut-in < rated < cut-out, got {}, {}, {}",
                w.cut_in, w.rated, w.cut_out
            )));
        }
        if !(w.capacity > 0.0 && self.pv.capacity > 0.0) {
            return Err(Error::domain("plant capacities must be positive"));
        }
        Ok(())
    }

    pub fn wind_power(&self, speed: f64) -> Result<f64> {
        let w = &self.wind;
        if !(speed >= 0.0) {
            return Err(Error::domain(format!("wind speed {speed} is negative")));
        }
        Ok(if speed < w.cut_in || speed > w.cut_out {
            0.0
        } else if speed < w.rated {
            w.capacity * (speed.powi(3) - w.cut_in.powi(3)) / (w.rated.powi(3) - w.cut_in.powi(3))
        } else {
            w.capacity
        })
    }

    pub fn pv_power(&self, irradiance: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&irradiance) {
            return Err(Error::domain(format!("irradiance {irradiance} outside [0, 1]")));
        }
        Ok(self.pv.capacity * irradiance)
    }
}

/// `(P_wind, P_pv)` in MW.
pub fn res_power(model: &ResModel, wind_speed: f64, irradiance: f64) -> Result<(f64, f64)> {
    Ok((model.wind_power(wind_speed)?, model.pv_power(irradiance)?))
}

/// What each coordinate of a physical sample drives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum InputRole {
    Wind,
    Irradiance,
    /// Active demand in MW at a bus.
    Load { bus: usize },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct UncertaintyDiagnostics {
    /// Load samples below zero that were clamped.
    pub clamped_loads: usize,
}

/// Returns a copy of `case` with sample `zeta` applied: loads set (reactive
/// demand scaled to keep the power factor) and renewable output subtracted
/// from the demand at the plant buses.
pub fn apply_uncertainty(
    case: &PowerSystemCase,
    res: &ResModel,
    roles: &[InputRole],
    zeta: &[f64],
) -> Result<(PowerSystemCase, UncertaintyDiagnostics)> {
    if roles.len() != zeta.len() {
        return Err(Error::shape(format!(
            "{} input roles for a sample of length {}",
            roles.len(),
            zeta.len()
        )));
    }
    let index = case.bus_index();
    let bus_of = |id: usize| {
        index
            .get(&id)
            .copied()
            .ok_or_else(|| Error::InvalidCase(format!("bus {id} not in case")))
    };
    let mut out = case.clone();
    let mut diag = UncertaintyDiagnostics::default();
    let mut p_wind = 0.0;
    let mut p_pv = 0.0;
    for (role, &v) in roles.iter().zip(zeta) {
        match *role {
            InputRole::Wind => p_wind = res.wind_power(v)?,
            InputRole::Irradiance => p_pv = res.pv_power(v)?,
            InputRole::Load { bus } => {
                let i = bus_of(bus)?;
                let nominal = &case.buses[i];
                let p = if v < 0.0 {
                    diag.clamped_loads += 1;
                    0.0
                } else {
                    v
                };
                let b = &mut out.buses[i];
                if nominal.pd != 0.0 {
                    b.qd = nominal.qd * p / nominal.pd;
                }
                b.pd = p;
            }
        }
    }
    let wind_bus = bus_of(res.wind.bus)?;
    let pv_bus = bus_of(res.pv.bus)?;
    out.buses[wind_bus].pd -= p_wind;
    out.buses[pv_bus].pd -= p_pv;

    if res.mode == ResMode::Replace {
        for bus_id in [res.wind.bus, res.pv.bus] {
            for g in out.generators.iter_mut().filter(|g| g.bus == bus_id) {
                g.in_service = false;
            }
            let b = &mut out.buses[bus_of(bus_id)?];
            if b.kind == BusType::Pv {
                b.kind = BusType::Pq;
            }
        }
    }
    if diag.clamped_loads > 0 {
        log::warn!("{} negative load samples clamped to zero", diag.clamped_loads);
    }
    Ok((out, diag))
}
