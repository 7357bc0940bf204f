//! Power-system layer: case data, power flow, AC-OPF and the mapping of
//! uncertain inputs onto a case.

mod case;
mod matpower;
mod network;
mod opf;
mod pf;
mod res;

pub use case::{Branch, Bus, BusType, GenCost, Generator, PowerSystemCase};
pub use matpower::{parse_matpower_case, to_matpower};
pub use network::Network;
pub use opf::{solve_ac_opf, solve_ac_opf_with, IpmOptions, OpfSolution, OpfStatus};
pub use pf::{newton_power_flow, PowerFlowResult, PF_MAX_ITER, PF_TOLERANCE};
pub use res::{
    apply_uncertainty, res_power, InputRole, PvPlant, ResMode, ResModel, UncertaintyDiagnostics, WindFarm,
};
