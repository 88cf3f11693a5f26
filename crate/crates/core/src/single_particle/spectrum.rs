use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::SpatialGrid;
use crate::{Error, Result, C64};

/// Eigen-residual ceiling accepted from the dense one-body solve.
const RESIDUAL_LIMIT: f64 = 1e-9;

/// Lowest eigenpairs of the one-body Hamiltonian, grouped into bands of
/// `m_sites` states each.
#[derive(Clone, Debug)]
pub struct SpectralData {
    pub eigenvalues: Vec<f64>,
    /// Columns are `L2`-normalised eigenfunctions sampled on the grid.
    pub eigenfunctions: DMatrix<C64>,
    pub m_sites: usize,
    pub v0: f64,
    pub max_residual: f64,
}

impl SpectralData {
    pub fn n_bands(&self) -> usize {
        self.eigenvalues.len() / self.m_sites
    }

    /// `(band, index within band)` of eigenstate `i`, both zero-based.
    pub fn band_index(&self, i: usize) -> (usize, usize) {
        (i / self.m_sites, i % self.m_sites)
    }

    pub fn band_energies(&self, band: usize) -> &[f64] {
        &self.eigenvalues[band * self.m_sites..(band + 1) * self.m_sites]
    }
}

/// Orthonormal bases (as columns) of the even and odd subspaces of the grid
/// reflection `j -> n/m - j (mod n)`, i.e. `x -> pi - x`.
fn parity_sectors(n: usize, m: usize) -> [DMatrix<f64>; 2] {
    let reflect = |j: usize| ((n / m) as isize - j as isize).rem_euclid(n as isize) as usize;
    let mut even = Vec::new();
    let mut odd = Vec::new();
    for j in 0..n {
        let r = reflect(j);
        if r == j {
            even.push(vec![(j, 1.0)]);
        } else if j < r {
            let s = std::f64::consts::FRAC_1_SQRT_2;
            even.push(vec![(j, s), (r, s)]);
            odd.push(vec![(j, s), (r, -s)]);
        }
    }
    [even, odd].map(|cols| {
        let mut q = DMatrix::zeros(n, cols.len());
        for (c, entries) in cols.iter().enumerate() {
            for &(j, v) in entries {
                q[(j, c)] = v;
            }
        }
        q
    })
}

/// Solves `h = -1/2 d^2/dx^2 + V0 cos^2(x)` on the periodic grid and keeps the
/// lowest `n_bands * m_sites` states.
pub fn solve_single_particle(grid: &SpatialGrid, v0: f64, n_bands: usize) -> Result<SpectralData> {
    if !(v0 >= 0.0) {
        return Err(Error::Config(format!("v0 must be >= 0, got {v0}")));
    }
    let n = grid.len();
    let m = grid.spec.m_sites;
    let n_states = n_bands * m;
    if n_bands == 0 || n_states > n / 2 {
        return Err(Error::Config(format!(
            "{n_bands} bands of {m} states do not fit on a grid of {n} points"
        )));
    }
    let potential = grid.potential(v0);
    let mut h = grid.kinetic.clone();
    for (i, v) in potential.iter().enumerate() {
        h[(i, i)] += v;
    }

    // H commutes with the reflection x -> pi - x about the first well centre.
    // Solving the even and odd sectors separately keeps every eigenvector of
    // definite parity even where opposite-parity levels are nearly degenerate.
    let mut candidates: Vec<(f64, DVector<f64>)> = Vec::with_capacity(n);
    for sector in parity_sectors(n, m) {
        let hs = sector.transpose() * &h * &sector;
        let eig = SymmetricEigen::new(hs);
        for (i, &e) in eig.eigenvalues.iter().enumerate() {
            candidates.push((e, &sector * eig.eigenvectors.column(i)));
        }
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0));

    let norm = grid.dx.sqrt();
    let mut eigenvalues = Vec::with_capacity(n_states);
    let mut eigenfunctions = DMatrix::<C64>::zeros(n, n_states);
    let mut max_residual = 0.0_f64;
    for (col, (e, v)) in candidates.into_iter().take(n_states).enumerate() {
        let hv = &h * &v;
        let residual = (hv - &v * e).norm() / v.norm();
        max_residual = max_residual.max(residual);
        if residual > RESIDUAL_LIMIT {
            return Err(Error::NoConvergence {
                what: format!("one-body eigenstate {col} at E = {e}"),
                residual,
            });
        }
        eigenvalues.push(e);
        let vn = v.norm();
        for i in 0..n {
            eigenfunctions[(i, col)] = C64::new(v[i] / (vn * norm), 0.0);
        }
    }

    Ok(SpectralData { eigenvalues, eigenfunctions, m_sites: m, v0, max_residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::single_particle::{build_grid, inner, LatticeSpec};

    #[test]
    fn free_particle_ring() {
        let grid = build_grid(&LatticeSpec::new(2, 128, 0.0)).unwrap();
        let sp = solve_single_particle(&grid, 0.0, 4).unwrap();
        let expected = [0.0, 0.5, 0.5, 2.0, 2.0, 4.5, 4.5, 8.0];
        for (e, x) in sp.eigenvalues.iter().zip(expected) {
            assert!((e - x).abs() < 1e-9, "{e} vs {x}");
        }
    }

    #[test]
    fn orthonormal_and_grouped() {
        let grid = build_grid(&LatticeSpec::double_well(12.5)).unwrap();
        let sp = solve_single_particle(&grid, 12.5, 6).unwrap();
        assert_eq!(sp.n_bands(), 6);
        assert_eq!(sp.band_index(5), (2, 1));
        assert!(sp.max_residual <= 1e-9);
        let n = sp.eigenvalues.len();
        for i in 0..n {
            for j in 0..n {
                let o = inner(grid.dx, sp.eigenfunctions.column(i).iter().copied(), sp.eigenfunctions.column(j).iter().copied());
                let target = if i == j { 1.0 } else { 0.0 };
                assert!((o - target).norm() < 1e-10);
            }
        }
        assert!(sp.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn too_many_bands() {
        let grid = build_grid(&LatticeSpec::new(2, 64, 1.0)).unwrap();
        assert!(solve_single_particle(&grid, 1.0, 17).is_err());
        assert!(solve_single_particle(&grid, -1.0, 1).is_err());
    }
}
