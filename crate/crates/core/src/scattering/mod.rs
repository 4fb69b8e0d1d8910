//! Scattering theory of `−Δ + V` and the matrix resolvent of the linearization.

pub mod fgr;
pub mod green;
pub mod measure;
pub mod resolvent;
pub mod sphere;
pub mod waves;

pub use fgr::{
    build_fgr_table, fgr_positivity_scan, gamma_form, gamma_resonant, FgrTable, ScanReport,
};
pub use measure::{limiting_absorption_pairing, spectral_measure_pairing, MEASURE_CONSTANT};
pub use resolvent::{resolvent_apply, ResolventSolution};
pub use sphere::SphereQuadrature;
pub use waves::{solve_distorted_wave, DistortedWave, Interaction};
