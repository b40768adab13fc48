//! Exact fermionic mode entanglement on small Fock spaces.
//!
//! The crate builds n-mode fermionic Fock spaces with anticommutation-
//! exact ladder operators, reduces states with the consistency-condition
//! ("inside-out") partial trace, decides whether a Fock-to-qubit sign
//! mapping can commute with partial tracing, and evaluates mode
//! entanglement measures on the qubit images.

pub mod entanglement;
pub mod fock;
pub mod mapping;
pub mod numerics;
pub mod states;
pub mod textio;
pub mod trace;

pub use fock::{build_ladder_operators, car_residual, LadderOperatorSet, OccupationState};
pub use mapping::{
    apply_mapping, consistent_mapping_search, MappingVerdict, SignAssignment, SparsityPattern,
};
pub use numerics::{hermitian_eigen, ComplexMatrix, HermitianEigen};
pub use states::{
    general_three_mode, general_two_mode, ChargePattern, DensityOperator, ThreeModeCoefficients,
    TwoModeCoefficients,
};
pub use trace::{inside_out_partial_trace, oracle_partial_trace, ModePartition, TraceOracle};
