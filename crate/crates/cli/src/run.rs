//! Scenario execution and output files.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use tdbh::bh::{bh_params, ground_state, propagate_bh, HubbardParams};
use tdbh::fock::FockBasis;
use tdbh::observables::{
    self, accumulated_error, apply_monitors, leading_occupation, momentum_distribution, occupation_series,
    sample_modes, CsvTable, Thresholds,
};
use tdbh::oracle::{self, build_full_hamiltonian_with_cap, GeneralHamiltonian};
use tdbh::single_particle::{build_grid, build_wannier, solve_single_particle, LatticeSpec, MatrixElements, Orbital, WannierBasis};
use tdbh::tdbh::{checkpoint_header, checkpoint_record, propagate_tdbh, relax_imaginary_time, TdbhModel, TdbhState};
use tdbh::trajectory::{TimeGrid, Trajectory};
use tdbh::C64;

use crate::config::{ConfigError, RunConfig, Scenario};

/// Number of momentum snapshots written per run.
pub const MOMENTUM_SNAPSHOTS: usize = 6;
/// Imaginary-time settings for initial and ground states.
const RELAX_TAU_MAX: f64 = 50_000.0;
const RELAX_DTAU: f64 = 1.0;
const RELAX_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("configuration: {0}")]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Core(#[from] tdbh::Error),
    #[error("output: {0}")]
    Io(#[from] std::io::Error),
    #[error("conservation check failed: {0}")]
    Conservation(String),
}

impl RunError {
    /// 2: configuration, 3: numerical failure, 4: conservation breach.
    pub fn exit_code(&self) -> i32 {
        use tdbh::Error as E;
        match self {
            RunError::Config(_) | RunError::Io(_) => 2,
            RunError::Core(E::Config(_) | E::DimensionCap { .. } | E::Index(_)) => 2,
            RunError::Core(E::NormDrift { .. }) | RunError::Conservation(_) => 4,
            RunError::Core(_) => 3,
        }
    }

    fn status(&self) -> &'static str {
        match self.exit_code() {
            2 => "config-error",
            4 => "conservation-breach",
            _ => "numerical-failure",
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ConservationSummary {
    pub model: String,
    pub norm_drift: f64,
    pub energy_drift_rel: f64,
    pub parity_drift: f64,
    pub odd_band_leakage: f64,
    pub max_imag_hopping: f64,
    pub steps: u64,
    pub flags: Vec<String>,
    pub passed: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub config: RunConfig,
    pub status: String,
    pub exit_code: i32,
    pub error: Option<String>,
    pub wall_time_s: f64,
    pub files: Vec<String>,
    pub conservation: Vec<ConservationSummary>,
    pub summary: BTreeMap<String, Value>,
}

/// Everything a scenario produces before the manifest is written.
#[derive(Default)]
struct Outputs {
    files: Vec<String>,
    conservation: Vec<ConservationSummary>,
    summary: BTreeMap<String, Value>,
}

impl Outputs {
    fn write(&mut self, dir: &Path, name: &str, text: &str) -> Result<(), RunError> {
        fs::write(dir.join(name), text)?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn table(&mut self, dir: &Path, name: &str, table: &CsvTable) -> Result<(), RunError> {
        self.write(dir, name, &table.render())
    }

    fn note(&mut self, key: &str, value: Value) {
        self.summary.insert(key.to_string(), value);
    }

    fn monitor(&mut self, traj: &mut Trajectory) -> bool {
        let passed = apply_monitors(traj, &Thresholds::default());
        let m = &traj.monitors;
        self.conservation.push(ConservationSummary {
            model: traj.model.label(),
            norm_drift: m.norm_correction_total.max(m.norm_correction_max),
            energy_drift_rel: m.energy_drift_rel,
            parity_drift: m.parity_drift,
            odd_band_leakage: m.odd_band_leakage,
            max_imag_hopping: m.max_imag_hopping,
            steps: m.steps.accepted,
            flags: m.flags.clone(),
            passed,
        });
        passed
    }
}

/// Runs the configured scenario and writes `manifest.json` next to the other
/// outputs, also when the scenario fails. Returns the manifest.
pub fn run(cfg: &RunConfig) -> Manifest {
    let start = Instant::now();
    let mut out = Outputs::default();
    let result = fs::create_dir_all(&cfg.output_dir).map_err(RunError::from).and_then(|_| execute(cfg, &mut out));
    let (status, exit_code, error) = match &result {
        Ok(()) => ("ok".to_string(), 0, None),
        Err(e) => (e.status().to_string(), e.exit_code(), Some(e.to_string())),
    };
    let manifest = Manifest {
        tool: "tdbh",
        version: env!("CARGO_PKG_VERSION"),
        config: cfg.clone(),
        status,
        exit_code,
        error,
        wall_time_s: start.elapsed().as_secs_f64(),
        files: out.files,
        conservation: out.conservation,
        summary: out.summary,
    };
    let path = cfg.output_dir.join("manifest.json");
    if let Err(e) = fs::write(&path, serde_json::to_string_pretty(&manifest).unwrap_or_default()) {
        log::error!("cannot write {}: {e}", path.display());
    }
    manifest
}

fn execute(cfg: &RunConfig, out: &mut Outputs) -> Result<(), RunError> {
    let dir = cfg.output_dir.clone();
    let lab = Lab::new(cfg)?;
    match cfg.scenario {
        Scenario::Bands => bands(cfg, &lab, &dir, out),
        Scenario::GroundState => statics(cfg, &lab, &dir, out),
        _ => dynamics(cfg, &lab, &dir, out),
    }
}

/// Single-particle data shared by all scenarios.
struct Lab {
    wannier: WannierBasis,
    unit: MatrixElements,
}

impl Lab {
    fn new(cfg: &RunConfig) -> Result<Self, RunError> {
        let n_bands = match cfg.scenario {
            Scenario::QuenchBh => 1,
            Scenario::QuenchTdbh | Scenario::Bands => cfg.nu,
            Scenario::QuenchExact => cfg.kappa,
            Scenario::GroundState | Scenario::Compare => cfg.nu.max(cfg.kappa),
        };
        let spec = LatticeSpec::new(cfg.m_sites, cfg.n_grid, cfg.v0);
        let grid = build_grid(&spec)?;
        let spectral = solve_single_particle(&grid, cfg.v0, n_bands + 1)?;
        let wannier = build_wannier(&spectral, &grid, n_bands)?;
        let unit = MatrixElements::new(&wannier, 1.0);
        Ok(Self { wannier, unit })
    }

    fn elements(&self, bands: usize, lambda0: f64) -> MatrixElements {
        self.unit.truncated(bands).with_lambda0(lambda0)
    }
}

fn params_row(t: f64, p: &HubbardParams) -> Vec<f64> {
    let j = p.j.first().map(|j| j.re).unwrap_or(0.0);
    vec![t, j, p.u[0], p.eps[0], p.u_over_j()]
}

fn params_table() -> CsvTable {
    CsvTable::new(["t", "J", "U", "eps", "U_over_J"])
}

fn bands(cfg: &RunConfig, lab: &Lab, dir: &Path, out: &mut Outputs) -> Result<(), RunError> {
    let w = &lab.wannier;
    let el = lab.elements(w.n_bands, cfg.lambda0(cfg.lambda_final));
    let e = &w.spectral.eigenvalues;
    let m = cfg.m_sites;
    let mut table = CsvTable::new(["band", "parity", "e_min", "e_max", "width", "onsite_energy", "hopping", "home_cell_probability", "u_per_lambda0"]);
    for band in 0..w.n_bands {
        let lo = e[band * m];
        let hi = e[(band + 1) * m - 1];
        let hop = if m > 1 { -el.h(0, band, 1, band).re } else { 0.0 };
        let u1 = lab.unit.u_onsite[0].get(band, band, band, band).re;
        table.push(vec![
            (band + 1) as f64,
            w.band_parity[band] as f64,
            lo,
            hi,
            hi - lo,
            el.h(0, band, 0, band).re,
            hop,
            w.home_cell_probability(Orbital { site: 0, band }),
            u1,
        ]);
    }
    out.table(dir, "bands.csv", &table)?;
    let p = bh_params(&el, 0);
    let mut params = params_table();
    params.push(params_row(0.0, &p));
    out.table(dir, "params_t.csv", &params)?;
    out.note("splitting_2J", json!(e[1] - e[0]));
    out.note("J", json!(p.j.first().map(|j| j.re)));
    out.note("U", json!(p.u[0]));
    out.note("U_over_J", json!(p.u_over_j()));
    out.note("u_per_lambda0", json!(lab.unit.u_onsite[0].get(0, 0, 0, 0).re));
    out.note("t_rabi", json!(p.t_rabi()));
    out.note("max_eigen_residual", json!(w.spectral.max_residual));
    Ok(())
}

fn occupation_columns(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}_n{i}")).collect()
}

fn statics(cfg: &RunConfig, lab: &Lab, dir: &Path, out: &mut Outputs) -> Result<(), RunError> {
    let lambda0 = cfg.lambda0(cfg.lambda_final);
    let n = cfg.n_particles;
    let el1 = lab.elements(1, lambda0);
    let p = bh_params(&el1, 0);
    let lattice = FockBasis::with_cap(n, cfg.m_sites, cfg.dimension_cap)?;
    let (e_bh, c_bh) = ground_state(&p, &lattice)?;
    let model = TdbhModel::new(lab.elements(cfg.nu, lambda0), n)?;
    let mut s = TdbhState::condensate(model.basis(), cfg.nu);
    s.coeffs = c_bh.clone();
    let relaxed = relax_imaginary_time(&s, &model, RELAX_TAU_MAX, RELAX_DTAU, RELAX_TOL)?;
    let h = build_full_hamiltonian_with_cap(&lab.wannier, lambda0, cfg.kappa, n, cfg.dimension_cap)?;
    let start = embed_lowest_band(&c_bh, &lattice, &h)?;
    let exact = h.ground_state(&start, 1e-10)?;

    let rho = |c: &[C64], b: &FockBasis| tdbh::fock::reduced_densities(c, b);
    let occ_bh = observables::natural_occupations(&rho(&c_bh, &lattice)?.rho1)?;
    let occ_td = observables::natural_occupations(&rho(&relaxed.state.coeffs, model.basis())?.rho1)?;
    let occ_ex = observables::natural_occupations(&rho(&exact.vector, &h.basis)?.rho1)?;

    let mut gs = String::from("model,energy,n1,n2\n");
    for (name, e, o) in [("bh", e_bh, &occ_bh), ("tdbh", relaxed.energy, &occ_td), ("exact", exact.energy, &occ_ex)] {
        gs.push_str(&format!("{name},{e:e},{:e},{:e}\n", o.values[0], o.values.get(1).copied().unwrap_or(0.0)));
    }
    out.write(dir, "ground_state.csv", &gs)?;

    let mut header = vec!["t".to_string()];
    header.extend(occupation_columns("bh", occ_bh.values.len()));
    header.extend(occupation_columns("tdbh", occ_td.values.len()));
    header.extend(occupation_columns("exact", occ_ex.values.len()));
    let mut table = CsvTable::new(header);
    let mut row = vec![0.0];
    row.extend(&occ_bh.values);
    row.extend(&occ_td.values);
    row.extend(&occ_ex.values);
    table.push(row);
    out.table(dir, "natocc_t.csv", &table)?;
    let mut params = params_table();
    params.push(params_row(0.0, &model.params(&relaxed.state.amps)));
    out.table(dir, "params_t.csv", &params)?;
    let mut ck = checkpoint_header(model.basis().len(), cfg.m_sites, cfg.nu);
    ck.push('\n');
    ck.push_str(&checkpoint_record(&relaxed.state));
    ck.push('\n');
    out.write(dir, "checkpoint.csv", &ck)?;

    out.note("energy_bh", json!(e_bh));
    out.note("energy_tdbh", json!(relaxed.energy));
    out.note("energy_exact", json!(exact.energy));
    out.note("margin_bh_minus_tdbh", json!(e_bh - relaxed.energy));
    out.note("margin_tdbh_minus_exact", json!(relaxed.energy - exact.energy));
    out.note("relaxation_tau", json!(relaxed.tau));
    Ok(())
}

fn embed_lowest_band(c: &[C64], lattice: &FockBasis, h: &GeneralHamiltonian) -> Result<Vec<C64>, RunError> {
    let amps = TdbhState::condensate(lattice, 1).amps;
    Ok(oracle::embed_lattice_state(c, &amps, lattice, h)?)
}

/// Trajectories of one quench, keyed by model.
struct Runs {
    bh: Option<Trajectory>,
    tdbh: Option<Trajectory>,
    exact: Option<Trajectory>,
}

impl Runs {
    fn all(&self) -> Vec<&Trajectory> {
        [&self.bh, &self.tdbh, &self.exact].into_iter().flatten().collect()
    }
}

fn dynamics(cfg: &RunConfig, lab: &Lab, dir: &Path, out: &mut Outputs) -> Result<(), RunError> {
    let times = TimeGrid::new(cfg.t_final, cfg.sample_dt)?;
    let n = cfg.n_particles;
    let (l_i, l_f) = (cfg.lambda0(cfg.lambda_initial), cfg.lambda0(cfg.lambda_final));
    let want_bh = matches!(cfg.scenario, Scenario::QuenchBh | Scenario::Compare);
    let want_tdbh = matches!(cfg.scenario, Scenario::QuenchTdbh | Scenario::Compare);
    let want_exact = matches!(cfg.scenario, Scenario::QuenchExact | Scenario::Compare);
    let lattice = FockBasis::with_cap(n, cfg.m_sites, cfg.dimension_cap)?;

    // BH ground state at the initial interaction; the condensate when it vanishes.
    let bh_initial = if l_i == 0.0 {
        lattice.condensate()
    } else {
        ground_state(&bh_params(&lab.elements(1, l_i), 0), &lattice)?.1
    };

    let mut runs = Runs { bh: None, tdbh: None, exact: None };
    if want_bh {
        let p = bh_params(&lab.elements(1, l_f), 0);
        let started = Instant::now();
        runs.bh = Some(propagate_bh(&bh_initial, &p, &lattice, times, cfg.integrator_tol)?);
        out.note("wall_time_bh_s", json!(started.elapsed().as_secs_f64()));
    }
    if want_tdbh {
        let model = TdbhModel::new(lab.elements(cfg.nu, l_f), n)?;
        let mut s = TdbhState::condensate(model.basis(), cfg.nu);
        if l_i != 0.0 {
            let start_model = TdbhModel::new(lab.elements(cfg.nu, l_i), n)?;
            s.coeffs = bh_initial.clone();
            s = relax_imaginary_time(&s, &start_model, RELAX_TAU_MAX, RELAX_DTAU, RELAX_TOL)?.state;
        }
        let started = Instant::now();
        let traj = propagate_tdbh(&s, &model, times, cfg.integrator_tol, &lab.wannier.band_parity)?;
        out.note("wall_time_tdbh_s", json!(started.elapsed().as_secs_f64()));
        let last = traj.last();
        let amps = last.amplitudes.clone().ok_or_else(|| tdbh::Error::Numerical("sample without orbital amplitudes".into()))?;
        let state = TdbhState { coeffs: last.coeffs.clone(), amps, t: last.t };
        let mut ck = checkpoint_header(model.basis().len(), cfg.m_sites, cfg.nu);
        ck.push('\n');
        ck.push_str(&checkpoint_record(&state));
        ck.push('\n');
        out.write(dir, "checkpoint.csv", &ck)?;
        runs.tdbh = Some(traj);
    }
    if want_exact {
        let h_f = build_full_hamiltonian_with_cap(&lab.wannier, l_f, cfg.kappa, n, cfg.dimension_cap)?;
        let c0 = if l_i == 0.0 {
            h_f.lowest_band_condensate()?
        } else {
            let h_i = build_full_hamiltonian_with_cap(&lab.wannier, l_i, cfg.kappa, n, cfg.dimension_cap)?;
            h_i.ground_state(&embed_lowest_band(&bh_initial, &lattice, &h_i)?, 1e-10)?.vector
        };
        let started = Instant::now();
        runs.exact = Some(oracle::propagate_auto(&c0, &h_f, times, cfg.integrator_tol)?);
        out.note("wall_time_exact_s", json!(started.elapsed().as_secs_f64()));
        out.note("exact_dimension", json!(h_f.basis.len()));
    }

    write_params(cfg, &runs, dir, out)?;
    write_occupations(&runs, dir, out)?;
    write_momenta(lab, &runs, dir, out)?;
    if let (Some(bh), Some(td), Some(ex)) = (&runs.bh, &runs.tdbh, &runs.exact) {
        compare_summary(n as f64, lab, bh, td, ex, dir, out)?;
    }

    let mut breaches = Vec::new();
    for traj in [&mut runs.bh, &mut runs.tdbh, &mut runs.exact].into_iter().flatten() {
        if !out.monitor(traj) {
            breaches.extend(traj.monitors.flags.iter().map(|f| format!("{}: {f}", traj.model.label())));
        }
    }
    if breaches.is_empty() {
        Ok(())
    } else {
        Err(RunError::Conservation(breaches.join("; ")))
    }
}

fn write_params(cfg: &RunConfig, runs: &Runs, dir: &Path, out: &mut Outputs) -> Result<(), RunError> {
    let source = runs.tdbh.as_ref().or(runs.bh.as_ref());
    let Some(traj) = source else { return Ok(()) };
    let mut table = params_table();
    let mut j = Vec::new();
    let mut u = Vec::new();
    let mut ratio = Vec::new();
    for s in &traj.samples {
        if let Some(p) = &s.params {
            table.push(params_row(s.t, p));
            j.push(p.j.first().map(|j| j.re).unwrap_or(0.0));
            u.push(p.u[0]);
            ratio.push(p.u_over_j());
        }
    }
    out.table(dir, "params_t.csv", &table)?;
    if !j.is_empty() && cfg.m_sites > 1 {
        let fold = |v: &[f64]| (v.iter().cloned().fold(f64::MAX, f64::min), v.iter().cloned().fold(f64::MIN, f64::max));
        let (jmin, jmax) = fold(&j);
        let (umin, umax) = fold(&u);
        let (rmin, rmax) = fold(&ratio);
        out.note("U_over_J_initial", json!(ratio[0]));
        out.note("U_over_J_min", json!(rmin));
        out.note("U_over_J_max", json!(rmax));
        out.note("J_variation_rel", json!((jmax - jmin) / j[0]));
        out.note("U_variation_rel", json!((umax - umin) / u[0]));
    }
    Ok(())
}

fn write_occupations(runs: &Runs, dir: &Path, out: &mut Outputs) -> Result<(), RunError> {
    let all = runs.all();
    let mut header = vec!["t".to_string()];
    let mut series = Vec::new();
    for traj in &all {
        let occ = occupation_series(traj)?;
        header.extend(occupation_columns(&label_prefix(traj), occ[0].values.len()));
        series.push(occ);
    }
    let mut table = CsvTable::new(header);
    for (i, t) in all[0].times().into_iter().enumerate() {
        let mut row = vec![t];
        for occ in &series {
            row.extend(&occ[i].values);
        }
        table.push(row);
    }
    out.table(dir, "natocc_t.csv", &table)
}

fn label_prefix(traj: &Trajectory) -> String {
    match traj.model {
        tdbh::trajectory::ModelKind::Bh => "bh".into(),
        tdbh::trajectory::ModelKind::Tdbh { .. } => "tdbh".into(),
        tdbh::trajectory::ModelKind::Exact { .. } => "exact".into(),
    }
}

/// Sample indices of the momentum snapshots.
pub fn snapshot_indices(n_samples: usize) -> Vec<usize> {
    let k = MOMENTUM_SNAPSHOTS.min(n_samples);
    let mut idx: Vec<usize> = (0..k).map(|i| if k > 1 { i * (n_samples - 1) / (k - 1) } else { 0 }).collect();
    idx.dedup();
    idx
}

fn write_momenta(lab: &Lab, runs: &Runs, dir: &Path, out: &mut Outputs) -> Result<(), RunError> {
    let all = runs.all();
    let mut snapshots = Vec::new();
    for (k, i) in snapshot_indices(all[0].samples.len()).into_iter().enumerate() {
        let mut header = vec!["k".to_string()];
        let mut cols = Vec::new();
        for traj in &all {
            let s = &traj.samples[i];
            let modes = sample_modes(s, traj.model, &lab.wannier)?;
            cols.push(momentum_distribution(&s.densities.rho1, &modes, &lab.wannier.grid)?);
            header.push(label_prefix(traj));
        }
        let mut table = CsvTable::new(header);
        for (j, kv) in cols[0].axis.iter().enumerate() {
            let mut row = vec![*kv];
            row.extend(cols.iter().map(|c| c.density[j]));
            table.push(row);
        }
        let name = format!("momentum_t{k}.csv");
        out.table(dir, &name, &table)?;
        snapshots.push(json!({ "file": name, "sample": i, "t": all[0].samples[i].t }));
    }
    out.note("momentum_snapshots", Value::Array(snapshots));
    Ok(())
}

/// End of the first fragmentation oscillation: the first local maximum of
/// the reference leading occupation after its first local minimum.
pub fn first_oscillation_end(series: &[(f64, f64)]) -> Option<usize> {
    let mut i = 1;
    while i + 1 < series.len() && series[i + 1].1 <= series[i].1 {
        i += 1;
    }
    while i + 1 < series.len() && series[i + 1].1 >= series[i].1 {
        i += 1;
    }
    (i + 1 < series.len()).then_some(i)
}

fn compare_summary(
    n: f64,
    lab: &Lab,
    bh: &Trajectory,
    td: &Trajectory,
    ex: &Trajectory,
    dir: &Path,
    out: &mut Outputs,
) -> Result<(), RunError> {
    let le = leading_occupation(ex)?;
    let lb = leading_occupation(bh)?;
    let lt = leading_occupation(td)?;
    let ab = accumulated_error(&lb, &le, n)?;
    let at = accumulated_error(&lt, &le, n)?;
    let mut table = CsvTable::new(["t", "bh", "tdbh"]);
    for (a, b) in ab.iter().zip(&at) {
        table.push(vec![a.0, a.1, b.1]);
    }
    out.table(dir, "accerr_t.csv", &table)?;
    out.note("accerr_bh_final", json!(ab.last().map(|p| p.1)));
    out.note("accerr_tdbh_final", json!(at.last().map(|p| p.1)));

    let mut l1 = CsvTable::new(["t", "bh", "tdbh"]);
    for ((sb, st), se) in bh.samples.iter().zip(&td.samples).zip(&ex.samples) {
        let dist = |s: &tdbh::trajectory::Sample, traj: &Trajectory| -> Result<observables::Distribution, RunError> {
            let modes = sample_modes(s, traj.model, &lab.wannier)?;
            Ok(momentum_distribution(&s.densities.rho1, &modes, &lab.wannier.grid)?)
        };
        let de = dist(se, ex)?;
        l1.push(vec![sb.t, dist(sb, bh)?.l1_distance(&de)?, dist(st, td)?.l1_distance(&de)?]);
    }
    out.table(dir, "momentum_l1_t.csv", &l1)?;
    if let Some(end) = first_oscillation_end(&le) {
        let dev = |a: &[(f64, f64)]| a[..=end].iter().zip(&le).map(|(x, y)| (x.1 - y.1).abs() / n).fold(0.0, f64::max);
        out.note("first_oscillation_end_t", json!(le[end].0));
        out.note("first_oscillation_max_dev_bh", json!(dev(&lb)));
        out.note("first_oscillation_max_dev_tdbh", json!(dev(&lt)));
        let beyond = &l1.rows[end + 1..];
        let wins = beyond.iter().filter(|r| r[2] <= r[1]).count();
        out.note("momentum_l1_tdbh_not_worse_fraction", json!(wins as f64 / beyond.len().max(1) as f64));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        let cfg: RunError = ConfigError::Missing("v0").into();
        assert_eq!(cfg.exit_code(), 2);
        let cap = RunError::Core(tdbh::Error::DimensionCap { n_particles: 1, n_modes: 1, dim: 2, cap: 1 });
        assert_eq!(cap.exit_code(), 2);
        let num = RunError::Core(tdbh::Error::StepUnderflow { t: 0.0, h: 0.0 });
        assert_eq!(num.exit_code(), 3);
        let drift = RunError::Core(tdbh::Error::NormDrift { t: 0.0, drift: 1.0, limit: 0.0 });
        assert_eq!(drift.exit_code(), 4);
        assert_eq!(RunError::Conservation("x".into()).exit_code(), 4);
    }

    #[test]
    fn snapshots_span_the_run() {
        assert_eq!(snapshot_indices(11), vec![0, 2, 4, 6, 8, 10]);
        assert_eq!(snapshot_indices(3), vec![0, 1, 2]);
        assert_eq!(snapshot_indices(1), vec![0]);
    }

    #[test]
    fn oscillation_end_is_first_revival() {
        let s: Vec<(f64, f64)> = [6.0, 5.0, 4.0, 4.5, 5.5, 5.0, 4.0].iter().enumerate().map(|(i, v)| (i as f64, *v)).collect();
        assert_eq!(first_oscillation_end(&s), Some(4));
        assert_eq!(first_oscillation_end(&s[..4]), None);
    }
}
