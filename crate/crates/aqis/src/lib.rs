//! Simulation library for adiabatic scrambling of symmetry-breaking
//! information in parity-symmetric critical models.
//!
//! Two models are supported: a collective-spin model with a transverse field
//! (ferromagnetic `S_x^2` interaction, `Z_2` parity) and the quantum Rabi
//! model (single spin coupled to a bosonic mode). Both commute with a discrete
//! parity operator, so every Hamiltonian splits into two symmetric tridiagonal
//! blocks. On top of the spectral machinery the crate provides
//!
//! - initial-state factories (microcanonical-like doublet superpositions,
//!   symmetry-breaking thermal ensembles, coherent states),
//! - exact Schrödinger propagation (fixed-step RK4 with a step-halving gate)
//!   and the adiabatic propagator built from accumulated dynamical phases,
//! - scrambling diagnostics: post-cycle order parameter, tau-sweep variance
//!   and its scaling fit, Loschmidt echo, OTOC, and phase-uniformity tests,
//! - an independent oracle (cyclic Jacobi diagonalization and
//!   piecewise-constant propagation) used for validation only.

pub mod error;
pub mod io;
pub mod metrics;
pub mod model;
pub mod oracle;
pub mod propagation;
pub mod spectral;
pub mod state;
pub mod tridiag;

pub use error::{Error, Result};
pub use model::{BandedMatrix, ModelSpec, ObservableKind, ObservableMatrix, Parity};
pub use propagation::{EvolutionControls, PhaseTable, QuadratureControls, RampProtocol};
pub use spectral::{DoubletTable, EigenObservable, SpectralDecomposition};
pub use state::{Distribution, MixedState, PureState, State};
