//! Surrogate modeling for probabilistic AC optimal power flow.
//!
//! The crate is organized bottom-up:
//!
//! * [`uncertainty`]: marginal distributions, Sobol' quasi-Monte Carlo
//!   sampling and the isoprobabilistic maps between physical space and the
//!   unit hypercube.
//! * [`orthopoly`]: orthonormal univariate families and their tensor
//!   products.
//! * [`sparse_pce`]: hyperbolic index sets, hybrid least angle regression,
//!   leave-one-out errors and the adaptive `(H, q)` sweep.
//! * [`sse`]: the adaptive stochastic spectral embedding tree.
//! * [`grid`]: case files, Newton power flow, interior-point AC-OPF and
//!   the renewable/load uncertainty mapping.
//! * [`analytics`]: moments, empirical distributions, validation error and
//!   method comparison tables.

pub mod analytics;
pub mod domain;
pub mod error;
pub mod grid;
pub mod orthopoly;
pub mod sparse_pce;
pub mod sse;
pub mod uncertainty;

pub use error::{Error, Result};
