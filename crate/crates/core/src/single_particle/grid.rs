use std::f64::consts::PI;

use nalgebra::DMatrix;

use crate::{Error, Result};

/// Resolution floor for the periodic grid.
pub const MIN_GRID_POINTS: usize = 64;

/// Geometry of the ring lattice: `m_sites` wells of `V0 cos^2(x)` on a ring of
/// length `pi * m_sites`.
#[derive(Clone, Debug, PartialEq)]
pub struct LatticeSpec {
    pub m_sites: usize,
    pub n_grid: usize,
    pub v0: f64,
}

impl LatticeSpec {
    pub fn new(m_sites: usize, n_grid: usize, v0: f64) -> Self {
        Self { m_sites, n_grid, v0 }
    }

    /// The two-site ring of length `2 pi` at the default resolution.
    pub fn double_well(v0: f64) -> Self {
        Self::new(2, 256, v0)
    }

    pub fn domain_length(&self) -> f64 {
        PI * self.m_sites as f64
    }

    pub fn recoil_energy(&self) -> f64 {
        0.5
    }

    pub fn validate(&self) -> Result<()> {
        if self.m_sites == 0 {
            return Err(Error::Config("m_sites must be positive".into()));
        }
        if !self.n_grid.is_multiple_of(2) || self.n_grid < MIN_GRID_POINTS {
            return Err(Error::Config(format!(
                "n_grid must be even and at least {MIN_GRID_POINTS}, got {}",
                self.n_grid
            )));
        }
        // Well centres and inter-site translations must fall on grid points.
        if !self.n_grid.is_multiple_of(2 * self.m_sites) {
            return Err(Error::Config(format!(
                "n_grid = {} is not a multiple of 2 * m_sites = {}",
                self.n_grid,
                2 * self.m_sites
            )));
        }
        if !(self.v0 >= 0.0) || !self.v0.is_finite() {
            return Err(Error::Config(format!("v0 must be finite and >= 0, got {}", self.v0)));
        }
        Ok(())
    }
}

/// Uniform periodic grid over `[0, L)` with a Fourier-spectral second
/// derivative.
#[derive(Clone, Debug)]
pub struct SpatialGrid {
    pub spec: LatticeSpec,
    pub x: Vec<f64>,
    pub dx: f64,
    /// Spectral kinetic operator `-1/2 d^2/dx^2`, real symmetric.
    pub kinetic: DMatrix<f64>,
}

impl SpatialGrid {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn domain_length(&self) -> f64 {
        self.spec.domain_length()
    }

    /// Grid index modulo the period of the ring.
    pub fn wrap(&self, i: isize) -> usize {
        i.rem_euclid(self.len() as isize) as usize
    }

    /// Number of grid points per lattice period.
    pub fn points_per_site(&self) -> usize {
        self.len() / self.spec.m_sites
    }

    /// Signed minimum-image displacement `x - center` on the ring.
    pub fn displacement(&self, x: f64, center: f64) -> f64 {
        let l = self.domain_length();
        let d = (x - center).rem_euclid(l);
        if d >= 0.5 * l {
            d - l
        } else {
            d
        }
    }

    pub fn potential(&self, v0: f64) -> Vec<f64> {
        self.x.iter().map(|&x| v0 * x.cos().powi(2)).collect()
    }
}

pub fn build_grid(spec: &LatticeSpec) -> Result<SpatialGrid> {
    spec.validate()?;
    let n = spec.n_grid;
    let l = spec.domain_length();
    let dx = l / n as f64;
    let x = (0..n).map(|j| j as f64 * dx).collect();

    // Second-derivative matrix of the trigonometric interpolant for even n on
    // a 2 pi domain, rescaled to length L.
    let h = 2.0 * PI / n as f64;
    let scale = (2.0 * PI / l).powi(2);
    let diag = -PI * PI / (3.0 * h * h) - 1.0 / 6.0;
    let kinetic = DMatrix::from_fn(n, n, |i, j| {
        let d2 = if i == j {
            diag
        } else {
            let m = i as isize - j as isize;
            let sign = if m.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
            let s = (m as f64 * h / 2.0).sin();
            -sign / (2.0 * s * s)
        };
        -0.5 * scale * d2
    });

    Ok(SpatialGrid { spec: spec.clone(), x, dx, kinetic })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn spacing_two_well() {
        let g = build_grid(&LatticeSpec::new(2, 256, 0.0)).unwrap();
        assert_relative_eq!(g.dx, 2.0 * PI / 256.0, epsilon = 1e-15);
        assert_relative_eq!(g.dx, 0.02454, epsilon = 1e-5);
        assert_eq!(g.wrap(256), 0);
        assert_eq!(g.wrap(-1), 255);
    }

    #[test]
    fn spacing_four_well() {
        let g = build_grid(&LatticeSpec::new(4, 512, 1.0)).unwrap();
        assert_relative_eq!(g.dx, PI / 128.0, epsilon = 1e-15);
        assert_eq!(g.points_per_site(), 128);
    }

    #[test]
    fn rejects_bad_resolution() {
        assert!(matches!(build_grid(&LatticeSpec::new(2, 255, 1.0)), Err(Error::Config(_))));
        assert!(matches!(build_grid(&LatticeSpec::new(2, 32, 1.0)), Err(Error::Config(_))));
        assert!(matches!(build_grid(&LatticeSpec::new(3, 64, 1.0)), Err(Error::Config(_))));
        assert!(build_grid(&LatticeSpec::new(2, 64, -1.0)).is_err());
    }

    #[test]
    fn kinetic_is_exact_on_plane_waves() {
        let g = build_grid(&LatticeSpec::new(2, 64, 0.0)).unwrap();
        for k in [0.0, 1.0, 3.0, 7.0] {
            let f: Vec<f64> = g.x.iter().map(|&x| (k * x).cos()).collect();
            for i in 0..g.len() {
                let tf: f64 = (0..g.len()).map(|j| g.kinetic[(i, j)] * f[j]).sum();
                assert!((tf - 0.5 * k * k * f[i]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn displacement_is_minimum_image() {
        let g = build_grid(&LatticeSpec::new(2, 64, 0.0)).unwrap();
        assert_relative_eq!(g.displacement(0.1, 2.0 * PI - 0.1), 0.2, epsilon = 1e-12);
        assert_relative_eq!(g.displacement(PI / 2.0, 3.0 * PI / 2.0), -PI, epsilon = 1e-12);
    }
}
