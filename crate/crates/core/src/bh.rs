//! The single-band Bose-Hubbard model on a ring: parameters from the lowest
//! Wannier band, matrix-free Hamiltonian action, ground states and real-time
//! propagation.

use nalgebra::DMatrix;

use crate::fock::{FockBasis, ReducedDensities, Transition};
use crate::integrate::Dopri5;
use crate::krylov::{self, HermitianOperator};
use crate::single_particle::MatrixElements;
use crate::trajectory::{ModelKind, Sample, TimeGrid, Trajectory};
use crate::{fock, Error, Result, C64};

/// Default relative (and absolute) tolerance of the Runge-Kutta propagators.
pub const DEFAULT_TOL: f64 = 1e-10;

/// Unique nearest-neighbour pairs of a ring of `m` sites. Two sites share a
/// single bond.
pub fn ring_bonds(m: usize) -> Vec<(usize, usize)> {
    match m {
        0 | 1 => Vec::new(),
        2 => vec![(0, 1)],
        _ => (0..m).map(|k| (k, (k + 1) % m)).collect(),
    }
}

/// Parameters of `-sum_b (J_b b_k^dag b_q + h.c.) + sum_k eps_k n_k +
/// sum_k U_k/2 n_k (n_k - 1)`.
///
/// The hopping is complex so the same type carries the instantaneous
/// parameters of the time-dependent model.
#[derive(Clone, Debug, PartialEq)]
pub struct HubbardParams {
    pub bonds: Vec<(usize, usize)>,
    pub j: Vec<C64>,
    pub eps: Vec<f64>,
    pub u: Vec<f64>,
}

impl HubbardParams {
    pub fn n_sites(&self) -> usize {
        self.eps.len()
    }

    /// `U_0 / Re J_0`.
    pub fn u_over_j(&self) -> f64 {
        self.u[0] / self.j[0].re
    }

    pub fn t_rabi(&self) -> f64 {
        std::f64::consts::PI / self.j[0].re
    }
}

/// Standard Bose-Hubbard parameters from band `band` (zero-based) of the
/// static Wannier basis. `J = -h_{k, k+1}` is positive for the lowest band.
pub fn bh_params(elements: &MatrixElements, band: usize) -> HubbardParams {
    let m = elements.m_sites;
    let bonds = ring_bonds(m);
    let j = bonds.iter().map(|&(k, q)| -elements.h(k, band, q, band)).collect();
    let eps = (0..m).map(|k| elements.h(k, band, k, band).re).collect();
    let u = (0..m).map(|k| elements.u_onsite[k].get(band, band, band, band).re).collect();
    HubbardParams { bonds, j, eps, u }
}

/// Operator tables for lattice Hamiltonians whose modes are the lattice sites.
#[derive(Clone, Debug)]
pub struct LatticeOperator {
    pub basis: FockBasis,
    pub bonds: Vec<(usize, usize)>,
    /// `b_k^dag b_q` per bond `(k, q)`.
    forward: Vec<Vec<Transition>>,
    occupations: Vec<f64>,
}

impl LatticeOperator {
    pub fn new(basis: &FockBasis, bonds: &[(usize, usize)]) -> Result<Self> {
        let forward = bonds.iter().map(|&(k, q)| basis.hop_table(k, q)).collect::<Result<_>>()?;
        let occupations = basis.configs().flat_map(|n| n.iter().map(|&v| v as f64)).collect();
        Ok(Self { basis: basis.clone(), bonds: bonds.to_vec(), forward, occupations })
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    /// `out = (H - shift) c`.
    pub fn apply_shifted(&self, params: &HubbardParams, shift: f64, c: &[C64], out: &mut [C64]) {
        let m = self.basis.n_modes();
        for (i, o) in out.iter_mut().enumerate() {
            let n = &self.occupations[i * m..(i + 1) * m];
            let mut diag = -shift;
            for k in 0..m {
                diag += params.eps[k] * n[k] + 0.5 * params.u[k] * n[k] * (n[k] - 1.0);
            }
            *o = c[i] * diag;
        }
        for (table, &j) in self.forward.iter().zip(&params.j) {
            // -J b_k^dag b_q - J^* b_q^dag b_k; the second term is the
            // transpose of the first table.
            let jc = j.conj();
            for t in table {
                let (from, to) = (t.from as usize, t.to as usize);
                out[to] -= j * t.amp * c[from];
                out[from] -= jc * t.amp * c[to];
            }
        }
    }

    pub fn apply(&self, params: &HubbardParams, c: &[C64], out: &mut [C64]) {
        self.apply_shifted(params, 0.0, c, out);
    }

    /// `<c| H |c>` (complex; the imaginary part probes hermiticity).
    pub fn expectation(&self, params: &HubbardParams, c: &[C64]) -> C64 {
        let mut hc = vec![C64::new(0.0, 0.0); c.len()];
        self.apply(params, c, &mut hc);
        krylov::dot(c, &hc)
    }

    pub fn dense(&self, params: &HubbardParams) -> DMatrix<C64> {
        krylov::to_dense(&self.bind(params))
    }

    pub fn bind<'a>(&'a self, params: &'a HubbardParams) -> BoundLattice<'a> {
        BoundLattice { op: self, params }
    }

    /// Expectation of the site reflection `k -> M - 1 - k`.
    pub fn reflection_parity(&self, c: &[C64]) -> f64 {
        let mut rev = vec![0u8; self.basis.n_modes()];
        let mut acc = C64::new(0.0, 0.0);
        for (i, n) in self.basis.configs().enumerate() {
            rev.iter_mut().zip(n.iter().rev()).for_each(|(r, &v)| *r = v);
            acc += c[self.basis.rank_unchecked(&rev)].conj() * c[i];
        }
        acc.re
    }
}

/// A [`LatticeOperator`] with fixed parameters.
pub struct BoundLattice<'a> {
    op: &'a LatticeOperator,
    params: &'a HubbardParams,
}

impl HermitianOperator for BoundLattice<'_> {
    fn dim(&self) -> usize {
        self.op.dim()
    }

    fn apply(&self, x: &[C64], y: &mut [C64]) {
        self.op.apply(self.params, x, y);
    }
}

/// `H C` for the given parameters.
pub fn hamiltonian_action(params: &HubbardParams, basis: &FockBasis, c: &[C64]) -> Result<Vec<C64>> {
    if c.len() != basis.len() {
        return Err(Error::Index(format!("coefficient vector of length {} for basis of {}", c.len(), basis.len())));
    }
    let op = LatticeOperator::new(basis, &params.bonds)?;
    let mut out = vec![C64::new(0.0, 0.0); c.len()];
    op.apply(params, c, &mut out);
    Ok(out)
}

/// Lowest eigenvector, normalised, with its largest entry real positive.
pub fn ground_state(params: &HubbardParams, basis: &FockBasis) -> Result<(f64, Vec<C64>)> {
    let op = LatticeOperator::new(basis, &params.bonds)?;
    let start = basis.condensate();
    let gs = krylov::lowest_eigenpair(&op.bind(params), &start, 1e-11, 80.min(basis.len()), 500)?;
    Ok((gs.energy, gs.vector))
}

/// Integrates `i dC/dt = H C` for static parameters with the adaptive
/// Runge-Kutta pair, sampling at the grid times.
pub fn propagate_bh(
    c0: &[C64],
    params: &HubbardParams,
    basis: &FockBasis,
    times: TimeGrid,
    tol: f64,
) -> Result<Trajectory> {
    let op = LatticeOperator::new(basis, &params.bonds)?;
    let n0 = krylov::norm(c0);
    if (n0 - 1.0).abs() > 1e-8 {
        return Err(Error::Config(format!("initial state has norm {n0}")));
    }
    let shift = op.expectation(params, c0).re;
    let p0 = op.reflection_parity(c0);

    let mut traj = Trajectory::new(ModelKind::Bh, basis.n_particles());
    let mut y = c0.to_vec();
    let mut t = 0.0;
    let mut ig = Dopri5::new(tol, tol);
    for ts in times.times() {
        ig.advance(
            &mut y,
            &mut t,
            ts,
            |_, y, dy| {
                op.apply_shifted(params, shift, y, dy);
                dy.iter_mut().for_each(|v| *v *= -C64::i());
            },
            |_, _| Ok(false),
        )?;
        let phase = (-C64::i() * shift * t).exp();
        let coeffs: Vec<C64> = y.iter().map(|v| v * phase).collect();
        let drift = (krylov::norm(&coeffs) - 1.0).abs();
        traj.monitors.norm_correction_max = traj.monitors.norm_correction_max.max(drift);
        traj.monitors.parity_drift = traj.monitors.parity_drift.max((op.reflection_parity(&coeffs) - p0).abs());
        traj.push(bh_sample(t, coeffs, params, &op)?);
    }
    traj.monitors.steps = ig.stats;
    Ok(traj)
}

pub(crate) fn bh_sample(t: f64, coeffs: Vec<C64>, params: &HubbardParams, op: &LatticeOperator) -> Result<Sample> {
    let densities: ReducedDensities = fock::reduced_densities(&coeffs, &op.basis)?;
    let energy = op.expectation(params, &coeffs).re;
    Ok(Sample { t, coeffs, amplitudes: None, params: Some(params.clone()), densities, energy })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::SymmetricEigen;

    fn two_site(j: f64, eps: f64, u: f64) -> HubbardParams {
        HubbardParams { bonds: ring_bonds(2), j: vec![C64::new(j, 0.0)], eps: vec![eps; 2], u: vec![u; 2] }
    }

    /// Dense Bose-Hubbard matrix assembled directly from occupation numbers.
    fn brute_force(params: &HubbardParams, basis: &FockBasis) -> DMatrix<C64> {
        let d = basis.len();
        let mut h = DMatrix::zeros(d, d);
        for (i, n) in basis.configs().enumerate() {
            let mut diag = 0.0;
            for k in 0..n.len() {
                let nk = n[k] as f64;
                diag += params.eps[k] * nk + 0.5 * params.u[k] * nk * (nk - 1.0);
            }
            h[(i, i)] = C64::new(diag, 0.0);
            for (b, &(k, q)) in params.bonds.iter().enumerate() {
                for (from, to, j) in [(q, k, params.j[b]), (k, q, params.j[b].conj())] {
                    if n[from] == 0 {
                        continue;
                    }
                    let mut m = n.to_vec();
                    m[from] -= 1;
                    m[to] += 1;
                    let amp = ((n[from] as f64) * (n[to] as f64 + 1.0)).sqrt();
                    h[(basis.rank(&m).unwrap(), i)] -= j * amp;
                }
            }
        }
        h
    }

    #[test]
    fn bonds() {
        assert_eq!(ring_bonds(2), vec![(0, 1)]);
        assert_eq!(ring_bonds(4).len(), 4);
        assert!(ring_bonds(1).is_empty());
    }

    #[test]
    fn two_bosons_explicit_matrix() {
        let (j, u) = (0.7, 1.3);
        let p = two_site(j, 0.0, u);
        let b = FockBasis::new(2, 2).unwrap();
        let h = LatticeOperator::new(&b, &p.bonds).unwrap().dense(&p);
        let s = 2f64.sqrt() * j;
        let expected = DMatrix::from_row_slice(3, 3, &[u, -s, 0.0, -s, 0.0, -s, 0.0, -s, u]).map(|v| C64::new(v, 0.0));
        assert!((h - expected).camax() < 1e-14);
    }

    #[test]
    fn matches_brute_force_up_to_four_bosons() {
        for n in 1..=4 {
            for m in [2, 3, 4] {
                let bonds = ring_bonds(m);
                let p = HubbardParams {
                    j: (0..bonds.len()).map(|b| C64::new(0.3 + 0.1 * b as f64, 0.05 * b as f64)).collect(),
                    bonds,
                    eps: (0..m).map(|k| 0.2 * k as f64).collect(),
                    u: (0..m).map(|k| 1.0 + 0.3 * k as f64).collect(),
                };
                let b = FockBasis::new(n, m).unwrap();
                let h = LatticeOperator::new(&b, &p.bonds).unwrap().dense(&p);
                assert!((&h - brute_force(&p, &b)).camax() < 1e-13);
                assert!((&h - h.adjoint()).camax() < 1e-14);
            }
        }
    }

    #[test]
    fn noninteracting_condensate_is_eigenstate() {
        let (j, eps, n) = (0.4, 1.5, 10);
        let p = two_site(j, eps, 0.0);
        let b = FockBasis::new(n, 2).unwrap();
        let c = b.condensate();
        let hc = hamiltonian_action(&p, &b, &c).unwrap();
        let e = n as f64 * (eps - j);
        for (x, y) in hc.iter().zip(&c) {
            assert!((x - y * e).norm() < 1e-12);
        }
        let (e0, g) = ground_state(&p, &b).unwrap();
        assert!((e0 - e).abs() < 1e-10);
        let dev = g.iter().zip(&c).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(dev <= 1e-8);
    }

    #[test]
    fn zero_hopping_is_diagonal() {
        let p = two_site(0.0, 0.3, 0.9);
        let b = FockBasis::new(6, 2).unwrap();
        let h = LatticeOperator::new(&b, &p.bonds).unwrap().dense(&p);
        for (i, n) in b.configs().enumerate() {
            let expect: f64 = n.iter().map(|&v| 0.3 * v as f64 + 0.45 * v as f64 * (v as f64 - 1.0)).sum();
            assert!((h[(i, i)].re - expect).abs() < 1e-14);
        }
        assert!((&h - DMatrix::from_diagonal(&h.diagonal())).camax() == 0.0);
        let (_, g) = ground_state(&p, &b).unwrap();
        let mid = b.rank(&[3, 3]).unwrap();
        assert!((g[mid].re - 1.0).abs() < 1e-8);
    }

    #[test]
    fn eigenstate_is_stationary_and_unitary() {
        let p = two_site(1.0, 0.0, 2.0);
        let b = FockBasis::new(8, 2).unwrap();
        let (e, g) = ground_state(&p, &b).unwrap();
        let traj = propagate_bh(&g, &p, &b, TimeGrid::new(10.0, 1.0).unwrap(), DEFAULT_TOL).unwrap();
        for s in &traj.samples {
            let ov = krylov::dot(&g, &s.coeffs);
            assert!((ov.norm() - 1.0).abs() < 1e-8);
            assert!((ov - (-C64::i() * e * s.t).exp()).norm() < 1e-7);
        }
        let dense = SymmetricEigen::new(LatticeOperator::new(&b, &p.bonds).unwrap().dense(&p));
        assert!((dense.eigenvalues.min() - e).abs() < 1e-9);
    }
}
