//! Reference dynamics in a static multi-band Wannier basis.
//!
//! The full contact-interaction Hamiltonian
//!
//! ```text
//! H = sum_ij h_ij b_i^dag b_j + 1/2 sum_ijkl W_ijkl b_i^dag b_j^dag b_l b_k
//! ```
//!
//! is kept with every one- and two-body term (inter-site interactions and
//! correlated tunnelling included) over `M * kappa` orbitals, stored as a
//! sparse matrix and propagated with Lanczos or, for small spaces, through a
//! dense eigendecomposition.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::fock::{self, FockBasis, DEFAULT_DIMENSION_CAP};
use crate::integrate::Dopri5;
use crate::krylov::{self, GroundState, HermitianOperator, KrylovPropagator};
use crate::observables;
use crate::single_particle::{interaction_tensor, one_body_tensor, InteractionScope, OnsiteTensor, Orbital, WannierBasis};
use crate::trajectory::{ModelKind, Sample, TimeGrid, Trajectory};
use crate::{Error, Result, C64};

/// Matrix elements below this fraction of the largest one are dropped.
pub const PRUNE_RELATIVE: f64 = 1e-14;

/// Dense propagation is used up to this dimension by [`propagate_auto`].
pub const SPECTRAL_DIM_LIMIT: usize = 2500;

/// Full Hamiltonian over `m_sites * kappa` static orbitals; mode
/// `site * kappa + band`.
#[derive(Clone, Debug)]
pub struct GeneralHamiltonian {
    pub m_sites: usize,
    pub kappa: usize,
    pub orbitals: Vec<Orbital>,
    pub h_full: DMatrix<C64>,
    pub w_full: OnsiteTensor,
    pub band_parity: Vec<i8>,
    pub basis: FockBasis,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<C64>,
}

/// Assembles the full Hamiltonian for `n_particles` bosons in the lowest
/// `kappa` bands of `wannier`.
pub fn build_full_hamiltonian(
    wannier: &WannierBasis,
    lambda0: f64,
    kappa: usize,
    n_particles: usize,
) -> Result<GeneralHamiltonian> {
    build_full_hamiltonian_with_cap(wannier, lambda0, kappa, n_particles, DEFAULT_DIMENSION_CAP)
}

pub fn build_full_hamiltonian_with_cap(
    wannier: &WannierBasis,
    lambda0: f64,
    kappa: usize,
    n_particles: usize,
    cap: usize,
) -> Result<GeneralHamiltonian> {
    if kappa == 0 || kappa > wannier.n_bands {
        return Err(Error::Config(format!("kappa = {kappa} needs 1..={} Wannier bands", wannier.n_bands)));
    }
    let m = wannier.m_sites;
    let basis = FockBasis::with_cap(n_particles, m * kappa, cap)?;
    let reduced = wannier.truncated(kappa);
    let h_full = one_body_tensor(&reduced);
    let w_full = interaction_tensor(&reduced, lambda0, InteractionScope::Full).remove(0);
    let (row_ptr, cols, vals) = assemble(&basis, &h_full, &w_full);
    log::debug!("oracle: dim {} with {} stored elements", basis.len(), vals.len());
    Ok(GeneralHamiltonian {
        m_sites: m,
        kappa,
        orbitals: reduced.orbitals().collect(),
        h_full,
        w_full,
        band_parity: reduced.band_parity.clone(),
        basis,
        row_ptr,
        cols,
        vals,
    })
}

/// An operator string `b_i^dag b_j^dag b_l b_k` (or a one-body hop when the
/// second pair is absent) with its combined coefficient.
struct Term {
    create: (usize, Option<usize>),
    annihilate: (usize, Option<usize>),
    coef: C64,
}

fn terms(h: &DMatrix<C64>, w: &OnsiteTensor) -> Vec<Term> {
    let n = h.nrows();
    let hmax = h.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let wmax = w.values.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let mut out = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if h[(i, j)].norm() > PRUNE_RELATIVE * hmax {
                out.push(Term { create: (i, None), annihilate: (j, None), coef: h[(i, j)] });
            }
        }
    }
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|a| (a..n).map(move |b| (a, b))).collect();
    for &(i, j) in &pairs {
        for &(k, l) in &pairs {
            // 1/2 sum over the orderings of both pairs.
            let mut c = C64::new(0.0, 0.0);
            for (a, b) in orderings(i, j) {
                for (x, y) in orderings(k, l) {
                    c += w.get(a, b, x, y);
                }
            }
            c *= 0.5;
            if c.norm() > PRUNE_RELATIVE * wmax {
                out.push(Term { create: (i, Some(j)), annihilate: (k, Some(l)), coef: c });
            }
        }
    }
    out
}

fn orderings(a: usize, b: usize) -> Vec<(usize, usize)> {
    if a == b {
        vec![(a, b)]
    } else {
        vec![(a, b), (b, a)]
    }
}

/// Applies the annihilators then the creators to `n`; returns the amplitude,
/// or `None` if the result vanishes.
fn act(term: &Term, n: &mut [u8]) -> Option<f64> {
    let mut amp = 1.0;
    for idx in [Some(term.annihilate.0), term.annihilate.1].into_iter().flatten() {
        if n[idx] == 0 {
            return None;
        }
        amp *= (n[idx] as f64).sqrt();
        n[idx] -= 1;
    }
    for idx in [term.create.1, Some(term.create.0)].into_iter().flatten() {
        if n[idx] == u8::MAX {
            return None;
        }
        n[idx] += 1;
        amp *= (n[idx] as f64).sqrt();
    }
    Some(amp)
}

/// CSR arrays with row `s` holding `H[s, t]`.
fn assemble(basis: &FockBasis, h: &DMatrix<C64>, w: &OnsiteTensor) -> (Vec<usize>, Vec<u32>, Vec<C64>) {
    let terms = terms(h, w);
    let entry_max = terms.iter().map(|t| t.coef.norm()).fold(0.0, f64::max);
    let mut row_ptr = Vec::with_capacity(basis.len() + 1);
    row_ptr.push(0);
    let mut cols = Vec::new();
    let mut vals = Vec::new();
    let mut scratch = vec![0u8; basis.n_modes()];
    let mut row: Vec<(u32, C64)> = Vec::new();
    for n in basis.configs() {
        row.clear();
        for term in &terms {
            scratch.copy_from_slice(n);
            if let Some(amp) = act(term, &mut scratch) {
                // term maps |s> to |t>, i.e. it contributes H[t, s]; the
                // stored row needs H[s, t] = conj(H[t, s]).
                row.push((basis.rank_unchecked(&scratch) as u32, (term.coef * amp).conj()));
            }
        }
        row.sort_unstable_by_key(|e| e.0);
        let mut last: Option<u32> = None;
        for &(c, v) in &row {
            if last == Some(c) {
                *vals.last_mut().unwrap() += v;
            } else {
                cols.push(c);
                vals.push(v);
                last = Some(c);
            }
        }
        // Drop entries that cancelled on merging.
        let start = *row_ptr.last().unwrap();
        let mut keep = start;
        for idx in start..vals.len() {
            if vals[idx].norm() > PRUNE_RELATIVE * entry_max {
                cols[keep] = cols[idx];
                vals[keep] = vals[idx];
                keep += 1;
            }
        }
        cols.truncate(keep);
        vals.truncate(keep);
        row_ptr.push(keep);
    }
    (row_ptr, cols, vals)
}

impl GeneralHamiltonian {
    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn mode(&self, site: usize, band: usize) -> usize {
        site * self.kappa + band
    }

    pub fn expectation(&self, c: &[C64]) -> f64 {
        let mut hc = vec![C64::new(0.0, 0.0); c.len()];
        self.apply(c, &mut hc);
        krylov::dot(c, &hc).re
    }

    pub fn dense(&self) -> DMatrix<C64> {
        krylov::to_dense(self)
    }

    /// Expectation of the reflection that maps site `k` to `M - 1 - k` and
    /// multiplies band `a` by its parity.
    pub fn reflection_parity(&self, c: &[C64]) -> f64 {
        let (m, kappa) = (self.m_sites, self.kappa);
        let mut image = vec![0u8; self.basis.n_modes()];
        let mut acc = C64::new(0.0, 0.0);
        for (i, n) in self.basis.configs().enumerate() {
            let mut sign = 1.0;
            for k in 0..m {
                for a in 0..kappa {
                    let occ = n[k * kappa + a];
                    image[(m - 1 - k) * kappa + a] = occ;
                    if self.band_parity[a] < 0 && occ % 2 == 1 {
                        sign = -sign;
                    }
                }
            }
            acc += c[self.basis.rank_unchecked(&image)].conj() * c[i] * sign;
        }
        acc.re
    }

    /// The lattice condensate `(sum_k b_k0^dag)^N |0> / norm` in the lowest band.
    pub fn lowest_band_condensate(&self) -> Result<Vec<C64>> {
        let lattice = FockBasis::new(self.basis.n_particles(), self.m_sites)?;
        let mut amps = DMatrix::zeros(self.m_sites, 1);
        amps.fill_column(0, C64::new(1.0, 0.0));
        embed_lattice_state(&lattice.condensate(), &amps, &lattice, self)
    }

    /// Lowest eigenpair by restarted Lanczos, or dense diagonalisation for
    /// small spaces.
    pub fn ground_state(&self, start: &[C64], tol: f64) -> Result<GroundState> {
        if self.basis.len() <= 400 {
            let eig = SymmetricEigen::new(self.dense());
            let low = eig.eigenvalues.imin();
            let mut v: Vec<C64> = eig.eigenvectors.column(low).iter().copied().collect();
            krylov::fix_phase(&mut v);
            return Ok(GroundState { energy: eig.eigenvalues[low], vector: v, residual: 0.0, iterations: 1 });
        }
        krylov::lowest_eigenpair(self, start, tol, 80, 2000)
    }
}

impl HermitianOperator for GeneralHamiltonian {
    fn dim(&self) -> usize {
        self.basis.len()
    }

    fn apply(&self, x: &[C64], y: &mut [C64]) {
        for (s, ys) in y.iter_mut().enumerate() {
            let (a, b) = (self.row_ptr[s], self.row_ptr[s + 1]);
            *ys = self.cols[a..b].iter().zip(&self.vals[a..b]).map(|(&c, v)| v * x[c as usize]).sum();
        }
    }
}

/// Maps a lattice state with one orbital per site, `w_k = sum_a d_k^a w_k^a`,
/// into the multi-band occupation basis of `h`.
///
/// A site holding `n` bosons contributes `sqrt(n! / prod_a m_a!) prod_a (d^a)^m_a`
/// to each split `(m_a)` of its occupation over the bands.
pub fn embed_lattice_state(
    c: &[C64],
    amps: &DMatrix<C64>,
    lattice: &FockBasis,
    h: &GeneralHamiltonian,
) -> Result<Vec<C64>> {
    let (m, kappa) = (h.m_sites, h.kappa);
    if lattice.n_modes() != m || amps.nrows() != m || c.len() != lattice.len() {
        return Err(Error::Config("lattice state does not match the oracle geometry".into()));
    }
    if lattice.n_particles() != h.basis.n_particles() {
        return Err(Error::Config("particle numbers differ".into()));
    }
    for k in 0..m {
        for a in kappa..amps.ncols() {
            if amps[(k, a)].norm() > 0.0 {
                return Err(Error::Config(format!("amplitude in band {a} is outside the oracle's {kappa} bands")));
            }
        }
    }
    let ln_fact: Vec<f64> = (0..=h.basis.n_particles()).scan(0.0, |acc, i| {
        if i > 0 {
            *acc += (i as f64).ln();
        }
        Some(*acc)
    }).collect();
    let mut totals = vec![0u8; m];
    let mut out = vec![C64::new(0.0, 0.0); h.basis.len()];
    for (i, occ) in h.basis.configs().enumerate() {
        let mut amp = C64::new(1.0, 0.0);
        for k in 0..m {
            let site = &occ[k * kappa..(k + 1) * kappa];
            let n: usize = site.iter().map(|&v| v as usize).sum();
            totals[k] = n as u8;
            let mut log_w = ln_fact[n];
            for (a, &ma) in site.iter().enumerate() {
                log_w -= ln_fact[ma as usize];
                if ma > 0 {
                    let d = if a < amps.ncols() { amps[(k, a)] } else { C64::new(0.0, 0.0) };
                    amp *= d.powu(ma as u32);
                }
            }
            amp *= (0.5 * log_w).exp();
        }
        if amp.norm() > 0.0 {
            out[i] = amp * c[lattice.rank_unchecked(&totals)];
        }
    }
    Ok(out)
}

fn exact_sample(t: f64, coeffs: Vec<C64>, h: &GeneralHamiltonian) -> Result<Sample> {
    let densities = fock::reduced_densities(&coeffs, &h.basis)?;
    let energy = h.expectation(&coeffs);
    Ok(Sample { t, coeffs, amplitudes: None, params: None, densities, energy })
}

fn record(traj: &mut Trajectory, h: &GeneralHamiltonian, t: f64, coeffs: Vec<C64>, p0: f64) -> Result<()> {
    let drift = (krylov::norm(&coeffs) - 1.0).abs();
    let mon = &mut traj.monitors;
    mon.norm_correction_max = mon.norm_correction_max.max(drift);
    mon.parity_drift = mon.parity_drift.max((h.reflection_parity(&coeffs) - p0).abs());
    traj.push(exact_sample(t, coeffs, h)?);
    Ok(())
}

fn check_initial(c0: &[C64], h: &GeneralHamiltonian) -> Result<()> {
    if c0.len() != h.basis.len() {
        return Err(Error::Config(format!("initial state has length {}, basis has {}", c0.len(), h.basis.len())));
    }
    let n0 = krylov::norm(c0);
    if (n0 - 1.0).abs() > 1e-8 {
        return Err(Error::Config(format!("initial state has norm {n0}")));
    }
    Ok(())
}

/// Short-iterative Lanczos propagation with adaptive sub-steps. `tol` bounds
/// the Krylov error estimate per unit time.
pub fn propagate_exact(c0: &[C64], h: &GeneralHamiltonian, times: TimeGrid, tol: f64) -> Result<Trajectory> {
    check_initial(c0, h)?;
    let shift = h.expectation(c0);
    let p0 = h.reflection_parity(c0);
    let mut traj = Trajectory::new(ModelKind::Exact { kappa: h.kappa }, h.basis.n_particles());
    let mut prop = KrylovPropagator::new(30, tol, shift);
    let mut psi = c0.to_vec();
    let mut t = 0.0;
    for ts in times.times() {
        if ts > t {
            prop.propagate(h, &mut psi, ts - t)?;
            t = ts;
        }
        let phase = (-C64::i() * shift * t).exp();
        record(&mut traj, h, t, psi.iter().map(|v| v * phase).collect(), p0)?;
    }
    traj.monitors.steps.accepted = prop.substeps;
    traj.monitors.steps.rejected = prop.rejections;
    Ok(traj)
}

/// Propagation through the dense eigendecomposition of `h`.
pub fn propagate_exact_spectral(c0: &[C64], h: &GeneralHamiltonian, times: TimeGrid) -> Result<Trajectory> {
    check_initial(c0, h)?;
    let p0 = h.reflection_parity(c0);
    let eig = SymmetricEigen::new(h.dense());
    let v = &eig.eigenvectors;
    let proj = v.adjoint() * nalgebra::DVector::from_column_slice(c0);
    let mut traj = Trajectory::new(ModelKind::Exact { kappa: h.kappa }, h.basis.n_particles());
    for ts in times.times() {
        let phased = nalgebra::DVector::from_fn(proj.len(), |i, _| proj[i] * (-C64::i() * eig.eigenvalues[i] * ts).exp());
        let c = v * phased;
        record(&mut traj, h, ts, c.iter().copied().collect(), p0)?;
    }
    Ok(traj)
}

/// Dense eigendecomposition for small spaces, Lanczos otherwise.
pub fn propagate_auto(c0: &[C64], h: &GeneralHamiltonian, times: TimeGrid, tol: f64) -> Result<Trajectory> {
    if h.basis.len() <= SPECTRAL_DIM_LIMIT {
        propagate_exact_spectral(c0, h, times)
    } else {
        propagate_exact(c0, h, times, tol)
    }
}

/// Adaptive Runge-Kutta propagation of the same equations, for
/// cross-checking the Lanczos stepper.
pub fn propagate_exact_rk(c0: &[C64], h: &GeneralHamiltonian, times: TimeGrid, tol: f64) -> Result<Trajectory> {
    check_initial(c0, h)?;
    let shift = h.expectation(c0);
    let p0 = h.reflection_parity(c0);
    let mut traj = Trajectory::new(ModelKind::Exact { kappa: h.kappa }, h.basis.n_particles());
    let mut ig = Dopri5::new(tol, tol);
    let mut y = c0.to_vec();
    let mut t = 0.0;
    for ts in times.times() {
        ig.advance(
            &mut y,
            &mut t,
            ts,
            |_, y, dy| {
                h.apply(y, dy);
                for (d, v) in dy.iter_mut().zip(y) {
                    *d = (*d - v * shift) * -C64::i();
                }
            },
            |_, _| Ok(false),
        )?;
        let phase = (-C64::i() * shift * t).exp();
        record(&mut traj, h, t, y.iter().map(|v| v * phase).collect(), p0)?;
    }
    traj.monitors.steps = ig.stats;
    Ok(traj)
}

/// Natural-occupation trajectories for several `kappa` and the largest
/// deviation between successive ones.
#[derive(Clone, Debug)]
pub struct ConvergenceReport {
    pub kappas: Vec<usize>,
    pub times: Vec<f64>,
    /// `occupations[i][s]`: normalised natural occupations for `kappas[i]` at sample `s`.
    pub occupations: Vec<Vec<Vec<f64>>>,
    /// `max_s max_j |n_j(kappa_{i+1}) - n_j(kappa_i)|`.
    pub successive_max_dev: Vec<f64>,
}

impl ConvergenceReport {
    pub fn table(&self) -> String {
        let mut out = String::from("kappa_a,kappa_b,max_dev\n");
        for (i, d) in self.successive_max_dev.iter().enumerate() {
            out.push_str(&format!("{},{},{d:e}\n", self.kappas[i], self.kappas[i + 1]));
        }
        out
    }
}

/// Runs the quench from the lowest-band condensate at interaction `lambda0`
/// for every `kappa` in the list.
pub fn convergence_scan(
    wannier: &WannierBasis,
    lambda0: f64,
    n_particles: usize,
    kappas: &[usize],
    times: TimeGrid,
    tol: f64,
) -> Result<ConvergenceReport> {
    let mut occupations = Vec::new();
    for &kappa in kappas {
        let h = build_full_hamiltonian(wannier, lambda0, kappa, n_particles)?;
        let c0 = h.lowest_band_condensate()?;
        let traj = propagate_auto(&c0, &h, times, tol)?;
        let occ: Vec<Vec<f64>> = observables::occupation_series(&traj)?.into_iter().map(|o| o.values).collect();
        occupations.push(occ);
    }
    let successive_max_dev = occupations
        .windows(2)
        .map(|w| {
            w[0].iter()
                .zip(&w[1])
                .flat_map(|(a, b)| a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()))
                .fold(0.0, f64::max)
        })
        .collect();
    Ok(ConvergenceReport { kappas: kappas.to_vec(), times: times.times(), occupations, successive_max_dev })
}
