//! One-body physics of the ring lattice `V(x) = V0 cos^2(x)`.
//!
//! Units are `hbar = m = 1`, the lattice period is `pi` and the recoil energy
//! is `E_r = 1/2`.

mod elements;
mod grid;
mod spectrum;
mod wannier;

pub use elements::{interaction_tensor, one_body_tensor, InteractionScope, MatrixElements, OnsiteTensor};
pub use grid::{build_grid, LatticeSpec, SpatialGrid, MIN_GRID_POINTS};
pub use spectrum::{solve_single_particle, SpectralData};
pub use wannier::{build_wannier, Orbital, WannierBasis};

use crate::C64;

/// `<f|g>` by Riemann sum on the uniform periodic grid.
pub(crate) fn inner(dx: f64, f: impl Iterator<Item = C64>, g: impl Iterator<Item = C64>) -> C64 {
    f.zip(g).map(|(a, b)| a.conj() * b).sum::<C64>() * dx
}
