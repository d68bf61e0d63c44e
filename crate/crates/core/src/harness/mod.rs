//! Orchestration: single cases, lambda sweeps, decay fits, the dense
//! oracle and the acceptance suite.

pub mod case;
pub mod chain;
pub mod config;
pub mod fit;
pub mod oracle;
pub mod sweep;
pub mod verify;

pub use case::{analyze, run_case, simulate, CaseReport, Simulation, CSV_HEADER};
pub use chain::verify_caccioppoli_chain;
pub use config::{CaseConfig, OutputConfig, SolverOptions, SweepConfig};
pub use fit::{fit_all, fit_decay, local_slopes, DecayFit, DecayModel};
pub use oracle::DenseOracle;
pub use sweep::{refit_csv, run_sweep, FitSummary, SweepReport};
