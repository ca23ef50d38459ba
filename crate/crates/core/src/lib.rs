//! End-to-end simulator for producing an N-qubit W state with rf-SQUID
//! qubits coupled to a single cavity mode, driven through an adiabatic dark
//! state passage.
//!
//! The crate is organized bottom-up:
//!
//! - [`squid`]: flux eigensolver for the rf-SQUID level structure and the
//!   derived cavity/drive couplings;
//! - [`model`]: single-excitation basis, interaction and no-jump
//!   Hamiltonians, dark and target states;
//! - [`dynamics`]: conditioned (no-jump) Schrodinger integration, quantum
//!   jump Monte Carlo sampling, and fidelity / success-probability metrics;
//! - [`protocol`]: the two-stage experiment (single-photon preparation, then
//!   collinear W-state generation);
//! - [`oracle`]: brute-force tensor-product simulator used to validate the
//!   single-excitation restriction;
//! - [`linalg`]: the small eigensolvers backing the above.
//!
//! All dynamics are dimensionless (rates in units of the reference coupling
//! g, time in 1/g); SI values enter only through [`squid`] and the CLI.

pub mod dynamics;
pub mod error;
pub mod linalg;
pub mod model;
pub mod oracle;
pub mod protocol;
pub mod squid;

pub use dynamics::{IntegratorConfig, MCStats, Metrics, TrajectoryRecord};
pub use error::{Error, Result};
pub use model::{Basis, ModelParams, PulseShape, StateVector};
pub use oracle::{DeviationReport, FullSpaceConfig};
pub use protocol::{ProtocolConfig, ProtocolReport};
pub use squid::{Coupling, CouplingGeometry, FluxGrid, LevelStructure, SquidSpec};
