//! Sampled time series produced by the propagators.

use nalgebra::DMatrix;

use crate::bh::HubbardParams;
use crate::fock::ReducedDensities;
use crate::integrate::StepStats;
use crate::{Error, Result, C64};

/// Which model produced a trajectory.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelKind {
    Bh,
    Tdbh { nu: usize },
    Exact { kappa: usize },
}

impl ModelKind {
    pub fn label(&self) -> String {
        match self {
            ModelKind::Bh => "bh".into(),
            ModelKind::Tdbh { nu } => format!("tdbh(nu={nu})"),
            ModelKind::Exact { kappa } => format!("exact(kappa={kappa})"),
        }
    }
}

/// Output times `0, dt, 2 dt, ...` up to and including `t_final`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeGrid {
    pub t_final: f64,
    pub sample_dt: f64,
}

impl TimeGrid {
    pub fn new(t_final: f64, sample_dt: f64) -> Result<Self> {
        if !(t_final > 0.0) || !(sample_dt > 0.0) {
            return Err(Error::Config(format!("need t_final > 0 and sample_dt > 0, got {t_final}, {sample_dt}")));
        }
        Ok(Self { t_final, sample_dt })
    }

    pub fn times(&self) -> Vec<f64> {
        let n = (self.t_final / self.sample_dt * (1.0 + 1e-12)).floor() as usize;
        let mut out: Vec<f64> = (0..=n).map(|i| i as f64 * self.sample_dt).collect();
        if self.t_final - out[n] > 1e-9 * self.sample_dt {
            out.push(self.t_final);
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct Sample {
    pub t: f64,
    pub coeffs: Vec<C64>,
    /// Band amplitudes `d_k^a` (rows: sites) for the time-dependent model.
    pub amplitudes: Option<DMatrix<C64>>,
    /// Instantaneous lattice parameters, where the model has them.
    pub params: Option<HubbardParams>,
    pub densities: ReducedDensities,
    pub energy: f64,
}

/// Conservation-law bookkeeping attached to every trajectory.
#[derive(Clone, Debug, Default)]
pub struct Monitors {
    /// Sum over all renormalisations of `| |C| - 1 |` and `| |d_k| - 1 |`.
    pub norm_correction_total: f64,
    pub norm_correction_max: f64,
    /// `max_t |E(t) - E(0)| / |E(0)|`.
    pub energy_drift_rel: f64,
    /// `max_t |<P>(t) - <P>(0)|` of the site-reflection parity.
    pub parity_drift: f64,
    /// `max_t max_{k, odd a} |d_k^a|` for the time-dependent model.
    pub odd_band_leakage: f64,
    /// `max_t max_b |Im J_b(t)|` for the time-dependent model.
    pub max_imag_hopping: f64,
    pub steps: StepStats,
    pub flags: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub model: ModelKind,
    pub n_particles: usize,
    pub samples: Vec<Sample>,
    pub monitors: Monitors,
}

impl Trajectory {
    pub fn new(model: ModelKind, n_particles: usize) -> Self {
        Self { model, n_particles, samples: Vec::new(), monitors: Monitors::default() }
    }

    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    pub fn last(&self) -> &Sample {
        self.samples.last().expect("empty trajectory")
    }

    pub(crate) fn push(&mut self, sample: Sample) {
        if let Some(first) = self.samples.first() {
            let e0 = first.energy;
            let drift = (sample.energy - e0).abs() / e0.abs().max(1e-300);
            self.monitors.energy_drift_rel = self.monitors.energy_drift_rel.max(drift);
        }
        self.samples.push(sample);
    }
}
