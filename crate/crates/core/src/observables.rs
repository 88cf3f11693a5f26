//! Derived quantities: natural occupations, densities in real and momentum
//! space, accumulated error, conservation monitors and CSV tables.

use std::fmt::Write as _;
use std::io;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use rustfft::FftPlanner;

use crate::single_particle::{Orbital, SpatialGrid, WannierBasis};
use crate::trajectory::{ModelKind, Sample, Trajectory};
use crate::{Error, Result, C64};

/// Eigenvalues of `rho1 / N` in descending order with their eigenvectors.
#[derive(Clone, Debug)]
pub struct NaturalOccupations {
    pub values: Vec<f64>,
    /// Column `i` belongs to `values[i]`.
    pub vectors: DMatrix<C64>,
    /// Trace of the unnormalised matrix.
    pub n_particles: f64,
}

impl NaturalOccupations {
    /// Largest eigenvalue of the unnormalised `rho1`, in `[0, N]`.
    pub fn leading(&self) -> f64 {
        self.values[0] * self.n_particles
    }
}

const NEGATIVE_TOL: f64 = 1e-10;
const TIE_TOL: f64 = 1e-12;

pub fn natural_occupations(rho1: &DMatrix<C64>) -> Result<NaturalOccupations> {
    natural_occupations_tracked(rho1, None)
}

/// Like [`natural_occupations`], breaking ties between (near-)degenerate
/// eigenvalues by overlap with the vectors of `prev`.
pub fn natural_occupations_tracked(
    rho1: &DMatrix<C64>,
    prev: Option<&NaturalOccupations>,
) -> Result<NaturalOccupations> {
    let n = rho1.trace().re;
    if !(n > 0.0) {
        return Err(Error::Numerical(format!("density matrix has trace {n}")));
    }
    let herm = (rho1 + rho1.adjoint()) * C64::new(0.5, 0.0);
    let eig = SymmetricEigen::new(herm);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    if let Some(p) = prev.filter(|p| p.vectors.nrows() == rho1.nrows()) {
        let mut i = 0;
        while i < order.len() {
            let mut j = i + 1;
            while j < order.len() && (eig.eigenvalues[order[i]] - eig.eigenvalues[order[j]]).abs() <= TIE_TOL * n {
                j += 1;
            }
            if j - i > 1 {
                let overlap = |slot: usize, e: usize| -> f64 {
                    p.vectors.column(slot).dot(&eig.eigenvectors.column(e).conjugate()).norm()
                };
                let mut group: Vec<usize> = order[i..j].to_vec();
                for slot in i..j {
                    let (pos, _) = group
                        .iter()
                        .enumerate()
                        .max_by(|a, b| overlap(slot, *a.1).total_cmp(&overlap(slot, *b.1)))
                        .unwrap();
                    order[slot] = group.remove(pos);
                }
            }
            i = j;
        }
    }
    let mut values = Vec::with_capacity(order.len());
    for &i in &order {
        let v = eig.eigenvalues[i];
        if v < -NEGATIVE_TOL * n.max(1.0) {
            return Err(Error::Numerical(format!("density matrix has negative eigenvalue {v:e}")));
        }
        values.push(v.max(0.0) / n);
    }
    let vectors = DMatrix::from_fn(rho1.nrows(), order.len(), |r, c| eig.eigenvectors[(r, order[c])]);
    Ok(NaturalOccupations { values, vectors, n_particles: n })
}

/// Natural occupations along a trajectory, tracked through degeneracies.
pub fn occupation_series(traj: &Trajectory) -> Result<Vec<NaturalOccupations>> {
    let mut out: Vec<NaturalOccupations> = Vec::with_capacity(traj.samples.len());
    for s in &traj.samples {
        let next = natural_occupations_tracked(&s.densities.rho1, out.last())?;
        out.push(next);
    }
    Ok(out)
}

/// Values on a grid of positions or momenta. `weight` is the quadrature
/// weight per point: `dx` in real space, 1 for the discrete momenta.
#[derive(Clone, Debug, PartialEq)]
pub struct Distribution {
    pub axis: Vec<f64>,
    pub density: Vec<f64>,
    pub weight: f64,
}

impl Distribution {
    pub fn integral(&self) -> f64 {
        self.density.iter().sum::<f64>() * self.weight
    }

    pub fn l1_distance(&self, other: &Distribution) -> Result<f64> {
        if self.axis != other.axis {
            return Err(Error::Config("distributions live on different axes".into()));
        }
        Ok(self.density.iter().zip(&other.density).map(|(a, b)| (a - b).abs()).sum::<f64>() * self.weight)
    }
}

/// Grid representation of the modes a sample's density matrix refers to:
/// lowest-band Wannier functions for the lattice model, the time-dependent
/// orbitals for the multi-band lattice model, and every static orbital for
/// the reference model.
pub fn sample_modes(sample: &Sample, kind: ModelKind, wannier: &WannierBasis) -> Result<DMatrix<C64>> {
    let m = wannier.m_sites;
    let n = wannier.grid.len();
    match kind {
        ModelKind::Bh => Ok(DMatrix::from_fn(n, m, |x, k| wannier.function(Orbital { site: k, band: 0 })[x])),
        ModelKind::Tdbh { nu } => {
            let amps = sample
                .amplitudes
                .as_ref()
                .ok_or_else(|| Error::Config("sample carries no band amplitudes".into()))?;
            if nu > wannier.n_bands {
                return Err(Error::Config(format!("nu = {nu} exceeds the {} Wannier bands", wannier.n_bands)));
            }
            let mut out = DMatrix::zeros(n, m);
            for k in 0..m {
                let row: Vec<C64> = amps.row(k).iter().copied().collect();
                out.set_column(k, &nalgebra::DVector::from_vec(wannier.combine(k, &row)));
            }
            Ok(out)
        }
        ModelKind::Exact { kappa } => {
            if kappa > wannier.n_bands {
                return Err(Error::Config(format!("kappa = {kappa} exceeds the {} Wannier bands", wannier.n_bands)));
            }
            Ok(DMatrix::from_fn(n, m * kappa, |x, c| {
                wannier.function(Orbital { site: c / kappa, band: c % kappa })[x]
            }))
        }
    }
}

/// `rho(x) = sum_kq rho_kq conj(w_k(x)) w_q(x)` on the grid.
pub fn density_real(rho1: &DMatrix<C64>, modes: &DMatrix<C64>, grid: &SpatialGrid) -> Result<Distribution> {
    if modes.ncols() != rho1.nrows() || modes.nrows() != grid.len() {
        return Err(Error::Config("mode functions do not match the density matrix".into()));
    }
    // rho(x) = [W^* rho W^T]_xx, evaluated row by row.
    let rw = modes * rho1.transpose();
    let density = (0..grid.len())
        .map(|x| modes.row(x).iter().zip(rw.row(x).iter()).map(|(w, r)| (w.conj() * r).re).sum::<f64>().max(0.0))
        .collect();
    Ok(Distribution { axis: grid.x.clone(), density, weight: grid.dx })
}

/// `rho(k) = sum_ij rho_ij conj(w_i(k)) w_j(k)` at the ring momenta
/// `k = 2 pi m / L`, `|m| <= n/2 - 1`, with `w(k)` normalised so that
/// `sum_k |w(k)|^2 = 1`. On the double well (`L = 2 pi`) these are the
/// integers.
pub fn momentum_distribution(rho1: &DMatrix<C64>, modes: &DMatrix<C64>, grid: &SpatialGrid) -> Result<Distribution> {
    let n = grid.len();
    if modes.ncols() != rho1.nrows() || modes.nrows() != n {
        return Err(Error::Config("mode functions do not match the density matrix".into()));
    }
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n);
    let scale = (grid.dx / n as f64).sqrt();
    let mut spectra = DMatrix::<C64>::zeros(n, modes.ncols());
    let mut buf = vec![C64::new(0.0, 0.0); n];
    for c in 0..modes.ncols() {
        buf.iter_mut().zip(modes.column(c).iter()).for_each(|(b, &v)| *b = v);
        fft.process(&mut buf);
        for (i, v) in buf.iter().enumerate() {
            spectra[(i, c)] = v * scale;
        }
    }
    let kmax = n as i64 / 2 - 1;
    let dk = 2.0 * std::f64::consts::PI / grid.spec.domain_length();
    let density = (-kmax..=kmax)
        .map(|m| {
            let row = spectra.row(m.rem_euclid(n as i64) as usize);
            let mut acc = C64::new(0.0, 0.0);
            for i in 0..rho1.nrows() {
                for j in 0..rho1.ncols() {
                    acc += rho1[(i, j)] * row[i].conj() * row[j];
                }
            }
            acc.re.max(0.0)
        })
        .collect();
    Ok(Distribution { axis: (-kmax..=kmax).map(|m| m as f64 * dk).collect(), density, weight: 1.0 })
}

/// `(t, n_1(t))` with `n_1` the largest unnormalised natural occupation.
pub fn leading_occupation(traj: &Trajectory) -> Result<Vec<(f64, f64)>> {
    Ok(traj.times().into_iter().zip(occupation_series(traj)?).map(|(t, o)| (t, o.leading())).collect())
}

/// Linear interpolation of a sampled series; `None` outside its range.
fn interpolate(series: &[(f64, f64)], t: f64) -> Option<f64> {
    let eps = 1e-9 * series.last()?.0.abs().max(1.0);
    if t < series[0].0 - eps || t > series.last()?.0 + eps {
        return None;
    }
    let i = series.partition_point(|p| p.0 < t);
    if i == 0 {
        return Some(series[0].1);
    }
    if i >= series.len() {
        return Some(series.last()?.1);
    }
    let (t0, y0) = series[i - 1];
    let (t1, y1) = series[i];
    Some(y0 + (y1 - y0) * (t - t0) / (t1 - t0))
}

/// `(1/N) int_0^t |a(t') - b(t')| dt'` by the trapezoid rule on the sample
/// times of `a` that `b` covers; `b` is linearly interpolated.
pub fn accumulated_error(a: &[(f64, f64)], b: &[(f64, f64)], n_particles: f64) -> Result<Vec<(f64, f64)>> {
    let pts: Vec<(f64, f64)> =
        a.iter().filter_map(|&(t, y)| interpolate(b, t).map(|z| (t, (y - z).abs()))).collect();
    if pts.is_empty() {
        return Err(Error::Config("the two series share no time range".into()));
    }
    let mut acc = 0.0;
    let mut out = vec![(pts[0].0, 0.0)];
    for w in pts.windows(2) {
        acc += 0.5 * (w[0].1 + w[1].1) * (w[1].0 - w[0].0) / n_particles;
        out.push((w[1].0, acc));
    }
    Ok(out)
}

/// Conservation thresholds applied by [`apply_monitors`].
#[derive(Clone, Copy, Debug)]
pub struct Thresholds {
    pub norm: f64,
    pub energy_rel: f64,
    pub parity: f64,
    pub odd_leakage: f64,
    pub imag_hopping: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self { norm: 1e-8, energy_rel: 1e-6, parity: 1e-8, odd_leakage: 1e-8, imag_hopping: 1e-8 }
    }
}

/// Checks a trajectory's monitors, records breaches in `monitors.flags` and
/// returns whether all checks passed.
pub fn apply_monitors(traj: &mut Trajectory, th: &Thresholds) -> bool {
    let m = &traj.monitors;
    let norm = m.norm_correction_total.max(m.norm_correction_max);
    let mut flags = Vec::new();
    let mut check = |name: &str, value: f64, limit: f64| {
        if !(value <= limit) {
            flags.push(format!("{name} {value:.3e} exceeds {limit:.1e}"));
        }
    };
    check("norm drift", norm, th.norm);
    check("energy drift", m.energy_drift_rel, th.energy_rel);
    check("parity drift", m.parity_drift, th.parity);
    if let ModelKind::Tdbh { .. } = traj.model {
        check("odd-band leakage", m.odd_band_leakage, th.odd_leakage);
        check("imaginary hopping", m.max_imag_hopping, th.imag_hopping);
    }
    for f in &flags {
        log::warn!("{}: {f}", traj.model.label());
    }
    let ok = flags.is_empty();
    traj.monitors.flags.extend(flags);
    ok
}

/// A numeric table written as CSV with a header line.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl CsvTable {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self { header: header.into_iter().map(Into::into).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn render(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            for (i, v) in row.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                let _ = write!(out, "{v:e}");
            }
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: &Path) -> io::Result<()> {
        std::fs::write(path, self.render())
    }
}
