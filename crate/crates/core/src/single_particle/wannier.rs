use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};

use super::{inner, SpatialGrid, SpectralData};
use crate::{Error, Result, C64};

/// Relative energy gap below which two adjacent bands are considered touching.
const BAND_TOUCH_TOL: f64 = 1e-11;
/// Smallest admissible eigenvalue (relative) of the projected trial overlap.
const TRIAL_OVERLAP_TOL: f64 = 1e-12;

/// A static Wannier orbital: lattice site and energy-ordered band, zero-based.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Orbital {
    pub site: usize,
    pub band: usize,
}

/// Static multi-band Wannier functions `w_k^a(x)` on the grid.
///
/// Construction per band `a`: for each site take the band state with maximal
/// probability in that site's cell, rotate its phase so the overlap with a
/// Hermite-Gauss reference of order `a` centred at `x_k` is real and positive,
/// then Loewdin-orthonormalise across sites. For two sites this is exactly
/// `(phi_even +- phi_odd) / sqrt(2)`.
#[derive(Clone, Debug)]
pub struct WannierBasis {
    pub grid: SpatialGrid,
    pub m_sites: usize,
    pub n_bands: usize,
    /// Column `site * n_bands + band`.
    pub functions: DMatrix<C64>,
    pub site_centers: Vec<f64>,
    /// `+1` or `-1`: parity of each band's functions about the well centre.
    pub band_parity: Vec<i8>,
    /// `<reference_k^a | w_k^a>`, real and positive by construction.
    pub gauge_overlap: Vec<f64>,
    /// Average band energies, i.e. `<w_k^a|h|w_k^a>`.
    pub band_energies: Vec<Vec<f64>>,
    /// Full band spectrum the basis was built from.
    pub spectral: SpectralData,
    /// Width of the Hermite-Gauss references.
    pub reference_width: f64,
}

impl WannierBasis {
    pub fn column(&self, orb: Orbital) -> usize {
        orb.site * self.n_bands + orb.band
    }

    pub fn function(&self, orb: Orbital) -> nalgebra::DVectorView<'_, C64> {
        self.functions.column(self.column(orb))
    }

    pub fn orbitals(&self) -> impl Iterator<Item = Orbital> + '_ {
        (0..self.m_sites).flat_map(move |site| (0..self.n_bands).map(move |band| Orbital { site, band }))
    }

    /// Grid index of the centre of well `site`.
    pub fn center_index(&self, site: usize) -> usize {
        self.grid.points_per_site() * site + self.grid.points_per_site() / 2
    }

    /// `int_{home cell} |w_k^a|^2 dx` over the half period either side of
    /// `x_k`.
    pub fn home_cell_probability(&self, orb: Orbital) -> f64 {
        let w = self.function(orb);
        let half = self.grid.points_per_site() as isize / 2;
        let c = self.center_index(orb.site) as isize;
        let mut p = 0.0;
        for j in -half..=half {
            let weight = if j.abs() == half { 0.5 } else { 1.0 };
            p += weight * w[self.grid.wrap(c + j)].norm_sqr();
        }
        p * self.grid.dx
    }

    /// Evaluates `sum_a amps[a] w_k^a(x)` on the grid.
    pub fn combine(&self, site: usize, amps: &[C64]) -> Vec<C64> {
        let n = self.grid.len();
        let mut out = vec![C64::new(0.0, 0.0); n];
        for (band, &a) in amps.iter().enumerate() {
            if a == C64::new(0.0, 0.0) {
                continue;
            }
            let w = self.function(Orbital { site, band });
            for (o, &v) in out.iter_mut().zip(w.iter()) {
                *o += a * v;
            }
        }
        out
    }

    /// Restricts the basis to its lowest `n_bands` bands.
    pub fn truncated(&self, n_bands: usize) -> WannierBasis {
        assert!(n_bands >= 1 && n_bands <= self.n_bands);
        let n = self.grid.len();
        let mut functions = DMatrix::zeros(n, self.m_sites * n_bands);
        for site in 0..self.m_sites {
            for band in 0..n_bands {
                let src = self.column(Orbital { site, band });
                functions.set_column(site * n_bands + band, &self.functions.column(src));
            }
        }
        let gauge_overlap = (0..self.m_sites)
            .flat_map(|site| (0..n_bands).map(move |band| (site, band)))
            .map(|(site, band)| self.gauge_overlap[site * self.n_bands + band])
            .collect();
        WannierBasis {
            grid: self.grid.clone(),
            m_sites: self.m_sites,
            n_bands,
            functions,
            site_centers: self.site_centers.clone(),
            band_parity: self.band_parity[..n_bands].to_vec(),
            gauge_overlap,
            band_energies: self.band_energies[..n_bands].to_vec(),
            spectral: self.spectral.clone(),
            reference_width: self.reference_width,
        }
    }
}

/// Physicists' Hermite polynomial `H_n(y)`.
fn hermite(n: usize, y: f64) -> f64 {
    let (mut h0, mut h1) = (1.0, 2.0 * y);
    if n == 0 {
        return h0;
    }
    for k in 1..n {
        let h2 = 2.0 * y * h1 - 2.0 * k as f64 * h0;
        h0 = h1;
        h1 = h2;
    }
    h1
}

fn reference_function(grid: &SpatialGrid, center: f64, order: usize, width: f64) -> Vec<C64> {
    grid.x
        .iter()
        .map(|&x| {
            let y = grid.displacement(x, center) / width;
            C64::new(hermite(order, y) * (-0.5 * y * y).exp(), 0.0)
        })
        .collect()
}

/// Hermitian `S^{-1/2}`, failing when `S` is numerically singular.
fn inverse_sqrt(s: DMatrix<C64>, band: usize) -> Result<DMatrix<C64>> {
    let eig = SymmetricEigen::new(s);
    let max = eig.eigenvalues.iter().copied().fold(0.0_f64, f64::max);
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if !(max > 0.0) || min <= TRIAL_OVERLAP_TOL * max {
        return Err(Error::Gauge {
            band,
            reason: format!("reference functions do not span the band (overlap eigenvalues {min:.3e}..{max:.3e})"),
        });
    }
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| C64::new(1.0 / l.sqrt(), 0.0)));
    Ok(&eig.eigenvectors * d * eig.eigenvectors.adjoint())
}

/// Builds site-localised Wannier functions for the lowest `n_bands` bands.
pub fn build_wannier(spectral: &SpectralData, grid: &SpatialGrid, n_bands: usize) -> Result<WannierBasis> {
    let m = spectral.m_sites;
    if m != grid.spec.m_sites {
        return Err(Error::Config("spectral data and grid disagree on m_sites".into()));
    }
    if n_bands == 0 || n_bands > spectral.n_bands() {
        return Err(Error::Config(format!(
            "requested {n_bands} bands but only {} were solved",
            spectral.n_bands()
        )));
    }
    let n = grid.len();
    let e = &spectral.eigenvalues;
    for band in 0..n_bands {
        for edge in [band * m, (band + 1) * m] {
            if edge == 0 || edge >= e.len() {
                continue;
            }
            let gap = e[edge] - e[edge - 1];
            if gap <= BAND_TOUCH_TOL * (1.0 + e[edge].abs()) {
                return Err(Error::Gauge {
                    band,
                    reason: format!("band edge at E = {:.6} is degenerate (gap {gap:.3e})", e[edge]),
                });
            }
        }
    }

    let site_centers: Vec<f64> = (0..m).map(|k| PI * (k as f64 + 0.5)).collect();
    let width = PI / 4.0;
    let mut functions = DMatrix::<C64>::zeros(n, m * n_bands);
    let mut gauge_overlap = vec![0.0; m * n_bands];
    let mut band_energies = Vec::with_capacity(n_bands);

    let ppc = grid.points_per_site() as isize;
    let cell_weights: Vec<Vec<f64>> = (0..m)
        .map(|k| {
            let c = ppc * k as isize + ppc / 2;
            let mut w = vec![0.0; n];
            for j in -ppc / 2..=ppc / 2 {
                w[grid.wrap(c + j)] = if j.abs() == ppc / 2 { 0.5 } else { 1.0 };
            }
            w
        })
        .collect();

    for band in 0..n_bands {
        let states = spectral.eigenfunctions.columns(band * m, m);
        // Candidate orbital for site k: the band state with the largest
        // probability inside cell k.
        let mut cand = DMatrix::<C64>::zeros(n, m);
        for (k, weights) in cell_weights.iter().enumerate() {
            let b = DMatrix::from_fn(m, m, |i, j| {
                (0..n)
                    .map(|x| states[(x, i)].conj() * states[(x, j)] * weights[x])
                    .sum::<C64>()
                    * grid.dx
            });
            let eig = SymmetricEigen::new(b);
            let top = eig.eigenvalues.imax();
            cand.set_column(k, &(states * eig.eigenvectors.column(top)));
        }
        let refs: Vec<Vec<C64>> = site_centers
            .iter()
            .map(|&c| reference_function(grid, c, band, width))
            .collect();
        for (k, r) in refs.iter().enumerate() {
            let ov = inner(grid.dx, r.iter().copied(), cand.column(k).iter().copied());
            if ov.norm() <= TRIAL_OVERLAP_TOL.sqrt() {
                return Err(Error::Gauge { band, reason: format!("reference overlap {ov:.3e} vanishes at site {k}") });
            }
            let phase = ov.conj() / ov.norm();
            for x in 0..n {
                cand[(x, k)] *= phase;
            }
        }
        let s = cand.adjoint() * &cand * C64::new(grid.dx, 0.0);
        let w = &cand * inverse_sqrt(s, band)?;

        let mut energies = Vec::with_capacity(m);
        for site in 0..m {
            let col = site * n_bands + band;
            functions.set_column(col, &w.column(site));
            let ov = inner(grid.dx, refs[site].iter().copied(), w.column(site).iter().copied());
            if !(ov.re > 0.0) || ov.im.abs() > 1e-10 * ov.re.max(1.0) {
                return Err(Error::Gauge { band, reason: format!("reference overlap {ov} is not real positive") });
            }
            gauge_overlap[col] = ov.re;
            let rot = states.adjoint() * w.column(site) * C64::new(grid.dx, 0.0);
            let en: f64 = (0..m).map(|i| rot[i].norm_sqr() * e[band * m + i]).sum();
            energies.push(en);
        }
        band_energies.push(energies);
    }

    let mut basis = WannierBasis {
        grid: grid.clone(),
        m_sites: m,
        n_bands,
        functions,
        site_centers,
        band_parity: vec![1; n_bands],
        gauge_overlap,
        band_energies,
        spectral: spectral.clone(),
        reference_width: width,
    };
    for band in 0..n_bands {
        basis.band_parity[band] = measure_parity(&basis, Orbital { site: 0, band });
    }
    Ok(basis)
}

fn measure_parity(basis: &WannierBasis, orb: Orbital) -> i8 {
    let w = basis.function(orb);
    let c = basis.center_index(orb.site) as isize;
    let n = basis.grid.len() as isize;
    let overlap: f64 = (0..n)
        .map(|j| (w[basis.grid.wrap(c + j)].conj() * w[basis.grid.wrap(c - j)]).re)
        .sum();
    if overlap >= 0.0 {
        1
    } else {
        -1
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::single_particle::{build_grid, solve_single_particle, LatticeSpec};

    fn basis(v0: f64, n_bands: usize) -> WannierBasis {
        let grid = build_grid(&LatticeSpec::double_well(v0)).unwrap();
        let sp = solve_single_particle(&grid, v0, n_bands + 1).unwrap();
        build_wannier(&sp, &grid, n_bands).unwrap()
    }

    #[test]
    fn hermite_recurrence() {
        assert_eq!(hermite(0, 0.3), 1.0);
        assert!((hermite(2, 0.5) - (4.0 * 0.25 - 2.0)).abs() < 1e-14);
        assert!((hermite(3, 0.5) - (8.0 * 0.125 - 12.0 * 0.5)).abs() < 1e-14);
    }

    #[test]
    fn orthonormal_basis() {
        let b = basis(12.5, 10);
        let o = b.functions.adjoint() * &b.functions * C64::new(b.grid.dx, 0.0);
        let id = DMatrix::<C64>::identity(o.nrows(), o.ncols());
        assert!((o - id).camax() < 1e-10);
    }

    #[test]
    fn translation_covariance() {
        let b = basis(12.5, 10);
        let shift = b.grid.points_per_site();
        for band in 0..b.n_bands {
            let l = b.function(Orbital { site: 0, band });
            let r = b.function(Orbital { site: 1, band });
            let dev = (0..b.grid.len())
                .map(|i| (r[(i + shift) % b.grid.len()] - l[i]).norm())
                .fold(0.0, f64::max);
            assert!(dev <= 1e-8, "band {band}: {dev}");
        }
    }

    #[test]
    fn localisation_and_parity() {
        let b = basis(12.5, 10);
        assert!(b.home_cell_probability(Orbital { site: 0, band: 0 }) > 0.99);
        for orb in b.orbitals() {
            assert!(b.home_cell_probability(orb) > 0.5, "{orb:?}");
        }
        let expected: Vec<i8> = (0..10).map(|a| if a % 2 == 0 { 1 } else { -1 }).collect();
        assert_eq!(b.band_parity, expected);
    }

    #[test]
    fn completeness_within_bands() {
        let b = basis(12.5, 6);
        let states = &b.spectral.eigenfunctions;
        for i in 0..b.m_sites * b.n_bands {
            let total: f64 = b
                .orbitals()
                .map(|o| inner(b.grid.dx, b.function(o).iter().copied(), states.column(i).iter().copied()).norm_sqr())
                .sum();
            assert!((total - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn band_touching_is_reported() {
        let grid = build_grid(&LatticeSpec::double_well(0.0)).unwrap();
        let sp = solve_single_particle(&grid, 0.0, 3).unwrap();
        assert!(matches!(build_wannier(&sp, &grid, 2), Err(Error::Gauge { .. })));
    }
}
