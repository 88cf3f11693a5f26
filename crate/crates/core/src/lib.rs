//! Bose-Hubbard lattice dynamics with variationally optimal time-dependent
//! Wannier functions.
//!
//! The crate is organised bottom-up:
//!
//! * [`single_particle`] discretises the ring lattice, solves the one-body
//!   problem and builds static multi-band Wannier functions together with all
//!   one- and two-body matrix elements.
//! * [`fock`] holds occupation-number bookkeeping for `N` bosons on `M` modes.
//! * [`bh`] is the standard single-band Bose-Hubbard model.
//! * [`tdbh`] co-evolves the many-body coefficients and the band amplitudes
//!   of one time-dependent Wannier function per site.
//! * [`oracle`] is a numerically exact reference: the full contact-interaction
//!   Hamiltonian in a multi-band static Wannier basis.
//! * [`observables`] turns trajectories into natural occupations, densities,
//!   momentum distributions, and accumulated errors.

// NaN-rejecting `!(x > 0.0)` checks and index loops over coupled arrays are deliberate.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod bh;
pub mod error;
pub mod fock;
pub mod integrate;
pub mod krylov;
pub mod observables;
pub mod oracle;
pub mod single_particle;
pub mod tdbh;
pub mod trajectory;

pub use error::{Error, Result};

/// Complex scalar used for all wave-function data.
pub type C64 = num_complex::Complex64;
