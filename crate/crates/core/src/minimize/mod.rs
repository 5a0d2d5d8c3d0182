//! Ground states, basin-restricted bound states and per-well states as
//! minimizers of the reduced energy E_σ(u) = J₀(u) + ½(Ω²K(u) + σ²/K(u)).

pub mod certify;
pub mod constrained;
pub mod engine;
pub mod states;

pub use certify::{CertificateStatus, LocalMinCertificate};
pub use constrained::{inf_j0_at_mass, minimize_j0_at_mass, ConstrainedMin};
pub use engine::{DescentStatus, Metric, SolverConfig, StepRule};
pub use states::{
    certify_local_min, continue_in_frequency, evaluate_profile, find_bound_state_in_basin, find_ground_state, find_multiple_states, minimize_energy,
    solve_at_frequency,
    MultiplicityReport, StandingWaveResult, WellFailure, WellState,
};
