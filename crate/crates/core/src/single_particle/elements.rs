use nalgebra::DMatrix;

use super::{Orbital, WannierBasis};
use crate::C64;

/// Which two-body integrals to assemble.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InteractionScope {
    /// `U_{k^a k^b k^c k^d}` for every site separately.
    Onsite,
    /// All orbitals of all sites, including inter-site elements.
    Full,
}

/// Contact-interaction integrals `lambda0 int phi_i^* phi_j^* phi_k phi_l dx`
/// over a list of orbitals, stored as a pair-indexed matrix with row `(i, j)`
/// and column `(k, l)`.
#[derive(Clone, Debug)]
pub struct OnsiteTensor {
    pub orbitals: Vec<Orbital>,
    pub values: DMatrix<C64>,
}

impl OnsiteTensor {
    pub fn len(&self) -> usize {
        self.orbitals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.orbitals.is_empty()
    }

    #[inline]
    pub fn pair(&self, i: usize, j: usize) -> usize {
        i * self.orbitals.len() + j
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize, l: usize) -> C64 {
        self.values[(self.pair(i, j), self.pair(k, l))]
    }

    /// `out_a = sum_{bcd} U_{abcd} conj(x_b) x_c x_d`.
    pub fn contract(&self, x: &[C64], out: &mut [C64]) {
        let n = self.orbitals.len();
        let pairs: Vec<C64> = (0..n * n).map(|p| x[p / n] * x[p % n]).collect();
        for (a, o) in out.iter_mut().enumerate().take(n) {
            let mut acc = C64::new(0.0, 0.0);
            for (b, xb) in x.iter().enumerate().take(n) {
                // values is Hermitian, so row (a, b) is the conjugated column.
                let col = self.values.column(a * n + b);
                let inner: C64 = col.iter().zip(&pairs).map(|(v, q)| v.conj() * q).sum();
                acc += xb.conj() * inner;
            }
            *o = acc;
        }
    }

    /// `sum_{abcd} conj(x_a x_b) U_{abcd} x_c x_d`.
    pub fn expectation(&self, x: &[C64]) -> C64 {
        let mut tmp = vec![C64::new(0.0, 0.0); x.len()];
        self.contract(x, &mut tmp);
        x.iter().zip(&tmp).map(|(a, t)| a.conj() * t).sum()
    }
}

/// One- and two-body matrix elements in the static Wannier basis.
#[derive(Clone, Debug)]
pub struct MatrixElements {
    pub m_sites: usize,
    pub n_bands: usize,
    pub lambda0: f64,
    /// `h_{k a, q b}` over all orbitals, indexed like the Wannier columns.
    pub h: DMatrix<C64>,
    /// On-site two-body tensors, one per site, over that site's bands.
    pub u_onsite: Vec<OnsiteTensor>,
}

impl MatrixElements {
    pub fn new(basis: &WannierBasis, lambda0: f64) -> Self {
        Self {
            m_sites: basis.m_sites,
            n_bands: basis.n_bands,
            lambda0,
            h: one_body_tensor(basis),
            u_onsite: interaction_tensor(basis, lambda0, InteractionScope::Onsite),
        }
    }

    #[inline]
    pub fn index(&self, site: usize, band: usize) -> usize {
        site * self.n_bands + band
    }

    #[inline]
    pub fn h(&self, k: usize, a: usize, q: usize, b: usize) -> C64 {
        self.h[(self.index(k, a), self.index(q, b))]
    }

    /// Same elements with the interaction rescaled to `lambda0`.
    pub fn with_lambda0(&self, lambda0: f64) -> Self {
        let scale = if self.lambda0 != 0.0 { lambda0 / self.lambda0 } else { f64::NAN };
        let mut out = self.clone();
        out.lambda0 = lambda0;
        for t in &mut out.u_onsite {
            if scale.is_nan() {
                panic!("cannot rescale interaction integrals computed at lambda0 = 0");
            }
            t.values *= C64::new(scale, 0.0);
        }
        out
    }

    /// Same elements restricted to the lowest `n_bands` bands.
    pub fn truncated(&self, n_bands: usize) -> Self {
        assert!(n_bands >= 1 && n_bands <= self.n_bands);
        let nb = self.n_bands;
        let m = self.m_sites;
        let h = DMatrix::from_fn(m * n_bands, m * n_bands, |i, j| {
            self.h[((i / n_bands) * nb + i % n_bands, (j / n_bands) * nb + j % n_bands)]
        });
        let u_onsite = self
            .u_onsite
            .iter()
            .map(|t| {
                let orbitals = t.orbitals[..n_bands].to_vec();
                let values = DMatrix::from_fn(n_bands * n_bands, n_bands * n_bands, |r, c| {
                    let (a, b) = (r / n_bands, r % n_bands);
                    let (x, y) = (c / n_bands, c % n_bands);
                    t.get(a, b, x, y)
                });
                OnsiteTensor { orbitals, values }
            })
            .collect();
        Self { m_sites: m, n_bands, lambda0: self.lambda0, h, u_onsite }
    }
}

/// `h_{k a, q b} = <w_k^a| h |w_q^b>` with the spectral kinetic operator,
/// symmetrised so the result is exactly Hermitian.
pub fn one_body_tensor(basis: &WannierBasis) -> DMatrix<C64> {
    let grid = &basis.grid;
    let mut hmat = grid.kinetic.map(|v| C64::new(v, 0.0));
    for (i, v) in grid.potential(basis.spectral.v0).into_iter().enumerate() {
        hmat[(i, i)] += v;
    }
    let hw = hmat * &basis.functions;
    let raw = basis.functions.adjoint() * hw * C64::new(grid.dx, 0.0);
    (&raw + raw.adjoint()) * C64::new(0.5, 0.0)
}

fn pair_tensor(basis: &WannierBasis, orbitals: Vec<Orbital>, lambda0: f64) -> OnsiteTensor {
    let n = orbitals.len();
    let ng = basis.grid.len();
    let cols: Vec<_> = orbitals.iter().map(|&o| basis.function(o)).collect();
    let pairs = DMatrix::from_fn(ng, n * n, |x, p| cols[p / n][x] * cols[p % n][x]);
    let raw = pairs.adjoint() * &pairs * C64::new(lambda0 * basis.grid.dx, 0.0);
    let values = (&raw + raw.adjoint()) * C64::new(0.5, 0.0);
    OnsiteTensor { orbitals, values }
}

/// Contact-interaction tensors in the static Wannier basis.
///
/// `Onsite` returns one tensor per site over that site's bands; `Full` returns
/// a single tensor over every orbital of the basis.
pub fn interaction_tensor(basis: &WannierBasis, lambda0: f64, scope: InteractionScope) -> Vec<OnsiteTensor> {
    match scope {
        InteractionScope::Onsite => (0..basis.m_sites)
            .map(|site| {
                let orbs = (0..basis.n_bands).map(|band| Orbital { site, band }).collect();
                pair_tensor(basis, orbs, lambda0)
            })
            .collect(),
        InteractionScope::Full => vec![pair_tensor(basis, basis.orbitals().collect(), lambda0)],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::single_particle::{build_grid, build_wannier, solve_single_particle, LatticeSpec};

    fn basis(n_bands: usize) -> WannierBasis {
        let grid = build_grid(&LatticeSpec::double_well(12.5)).unwrap();
        let sp = solve_single_particle(&grid, 12.5, n_bands + 1).unwrap();
        build_wannier(&sp, &grid, n_bands).unwrap()
    }

    #[test]
    fn one_body_structure() {
        let b = basis(6);
        let el = MatrixElements::new(&b, 0.01);
        for k in 0..2 {
            for q in 0..2 {
                for a in 0..6 {
                    for c in 0..6 {
                        let v = el.h(k, a, q, c);
                        assert_eq!(v, el.h(q, c, k, a).conj());
                        if a != c {
                            assert!(v.norm() <= 1e-10, "h({k},{a},{q},{c}) = {v}");
                        }
                    }
                }
            }
        }
        let e = &b.spectral.eigenvalues;
        assert!((el.h(0, 0, 0, 0).re - 0.5 * (e[0] + e[1])).abs() < 1e-10);
        let hop = el.h(0, 0, 1, 0).norm();
        assert!((hop - 0.5 * (e[1] - e[0])).abs() < 1e-10, "{hop} vs {}", 0.5 * (e[1] - e[0]));
        assert!(el.h(0, 0, 1, 0).re < 0.0);
    }

    #[test]
    fn interaction_symmetries() {
        let b = basis(4);
        let t = &interaction_tensor(&b, 0.05, InteractionScope::Onsite)[0];
        let n = t.len();
        for a in 0..n {
            for bb in 0..n {
                for c in 0..n {
                    for d in 0..n {
                        let v = t.get(a, bb, c, d);
                        assert_eq!(v, t.get(bb, a, d, c));
                        assert_eq!(v, t.get(d, c, bb, a).conj());
                    }
                }
            }
        }
        let zero = &interaction_tensor(&b, 0.0, InteractionScope::Full)[0];
        assert!(zero.values.iter().all(|v| *v == C64::new(0.0, 0.0)));
    }

    #[test]
    fn contraction_matches_direct_sum() {
        let b = basis(3);
        let t = &interaction_tensor(&b, 0.1, InteractionScope::Onsite)[1];
        let x = [C64::new(0.8, 0.1), C64::new(0.0, 0.3), C64::new(-0.4, 0.2)];
        let mut out = [C64::new(0.0, 0.0); 3];
        t.contract(&x, &mut out);
        for a in 0..3 {
            let mut direct = C64::new(0.0, 0.0);
            for bb in 0..3 {
                for c in 0..3 {
                    for d in 0..3 {
                        direct += t.get(a, bb, c, d) * x[bb].conj() * x[c] * x[d];
                    }
                }
            }
            assert!((direct - out[a]).norm() < 1e-14);
        }
    }

    #[test]
    fn truncation_and_rescale() {
        let b = basis(4);
        let el = MatrixElements::new(&b, 0.02);
        let tr = el.truncated(2);
        let direct = MatrixElements::new(&b.truncated(2), 0.02);
        assert!((tr.h.clone() - direct.h).camax() < 1e-13);
        assert!((tr.u_onsite[0].values.clone() - &direct.u_onsite[0].values).camax() < 1e-13);
        let re = el.with_lambda0(0.04);
        assert!((re.u_onsite[0].get(0, 0, 0, 0) - el.u_onsite[0].get(0, 0, 0, 0) * 2.0).norm() < 1e-14);
    }
}
