//! Desk-scale numerical laboratory for coherence-driven thermodynamics.
//!
//! The crate bundles five closely related toolboxes:
//!
//! - [`dynamics`]: classical 1D Hamiltonian systems and the kicked rotor,
//!   symplectic trajectory integration with monodromy and Maslov bookkeeping,
//!   and boundary-value trajectory search.
//! - [`semiclassics`]: Van Vleck-Gutzwiller amplitudes assembled from
//!   trajectory sets, the diagonal/interference split of transition
//!   probabilities, wavepacket-smeared branch amplitudes, and chaos-assisted
//!   tunneling estimates on the kicked map.
//! - [`oracle`]: exact split-step quantum propagation on a position grid and
//!   exact kicked-map Floquet evolution, used as ground truth throughout the
//!   test suite.
//! - [`fluctuation`]: classical, quantum-modified, and structured-coherence
//!   fluctuation ratios, entropy bookkeeping, and least-squares fitting of the
//!   structured enhancement model.
//! - [`purification`] and [`opensystem`]: purified mixed states with tunable
//!   phases, interference-maximizing phase optimization, and density-matrix
//!   evolution under von Neumann and Lindblad equations.
//!
//! The `cohertherm` binary runs named scenarios from a flat key-value config
//! file and writes CSV artifacts plus a run manifest; see [`config`] and
//! [`scenario`]. All randomness flows from a single seed through the
//! SplitMix64 generator in [`rng`].

pub mod config;
pub mod density;
pub mod dynamics;
pub mod fluctuation;
pub mod io;
pub mod numeric;
pub mod opensystem;
pub mod oracle;
pub mod purification;
pub mod rng;
pub mod scenario;
pub mod semiclassics;
