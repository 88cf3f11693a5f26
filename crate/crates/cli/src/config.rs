//! Flat `key = value` run configuration.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: key `{key}` given twice (first on line {first})")]
    Duplicate { line: usize, key: String, first: usize },
    #[error("line {line}: `{key}`: cannot parse {value:?} as {expected}")]
    Type { line: usize, key: String, value: String, expected: &'static str },
    #[error("missing required key `{0}`")]
    Missing(&'static str),
    #[error("{0}")]
    Invalid(String),
    #[error("cannot read {path}: {msg}")]
    Io { path: String, msg: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    Bands,
    GroundState,
    QuenchBh,
    QuenchTdbh,
    QuenchExact,
    Compare,
}

impl Scenario {
    pub const ALL: [Scenario; 6] = [
        Scenario::Bands,
        Scenario::GroundState,
        Scenario::QuenchBh,
        Scenario::QuenchTdbh,
        Scenario::QuenchExact,
        Scenario::Compare,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Scenario::Bands => "bands",
            Scenario::GroundState => "ground-state",
            Scenario::QuenchBh => "quench-bh",
            Scenario::QuenchTdbh => "quench-tdbh",
            Scenario::QuenchExact => "quench-exact",
            Scenario::Compare => "compare",
        }
    }

    fn is_dynamic(&self) -> bool {
        !matches!(self, Scenario::Bands | Scenario::GroundState)
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = ();
    fn from_str(s: &str) -> Result<Self, ()> {
        Scenario::ALL.into_iter().find(|sc| sc.name() == s).ok_or(())
    }
}

/// Interaction strengths are given as `lambda = lambda0 (N - 1)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunConfig {
    pub scenario: Scenario,
    pub m_sites: usize,
    pub n_grid: usize,
    pub v0: f64,
    pub n_particles: usize,
    pub lambda_initial: f64,
    pub lambda_final: f64,
    pub nu: usize,
    pub kappa: usize,
    pub t_final: f64,
    pub sample_dt: f64,
    pub integrator_tol: f64,
    pub output_dir: PathBuf,
    pub dimension_cap: usize,
}

pub const DEFAULT_M_SITES: usize = 2;
pub const DEFAULT_N_GRID: usize = 256;
pub const DEFAULT_NU: usize = 10;
pub const DEFAULT_KAPPA: usize = 3;
pub const DEFAULT_TOL: f64 = 1e-10;
/// Samples per run when `sample_dt` is not given.
pub const DEFAULT_SAMPLES: f64 = 500.0;

pub const KEYS: [&str; 14] = [
    "scenario",
    "m_sites",
    "n_grid",
    "v0",
    "n_particles",
    "lambda_initial",
    "lambda_final",
    "nu",
    "kappa",
    "t_final",
    "sample_dt",
    "integrator_tol",
    "output_dir",
    "dimension_cap",
];

/// Raw `(line, key, value)` entries before typing.
#[derive(Default)]
struct Entries(Vec<(usize, String, String)>);

impl Entries {
    fn get(&self, key: &str) -> Option<(usize, &str)> {
        self.0.iter().rev().find(|e| e.1 == key).map(|e| (e.0, e.2.as_str()))
    }

    fn set(&mut self, line: usize, key: &str, value: &str) -> Result<(), ConfigError> {
        if !KEYS.contains(&key) {
            return Err(ConfigError::UnknownKey { line, key: key.into() });
        }
        if let Some(first) = self.0.iter().find(|e| e.1 == key).map(|e| e.0) {
            if line > 0 {
                return Err(ConfigError::Duplicate { line, key: key.into(), first });
            }
        }
        self.0.push((line, key.into(), value.into()));
        Ok(())
    }

    fn typed<T: FromStr>(&self, key: &str, expected: &'static str) -> Result<Option<T>, ConfigError> {
        match self.get(key) {
            None => Ok(None),
            Some((line, v)) => v.parse::<T>().map(Some).map_err(|_| ConfigError::Type {
                line,
                key: key.into(),
                value: v.into(),
                expected,
            }),
        }
    }
}

fn parse_entries(text: &str) -> Result<Entries, ConfigError> {
    let mut entries = Entries::default();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(ConfigError::Syntax { line, msg: format!("expected `key = value`, found {content:?}") });
        };
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() || value.is_empty() {
            return Err(ConfigError::Syntax { line, msg: "empty key or value".into() });
        }
        entries.set(line, key, value)?;
    }
    Ok(entries)
}

/// Parses configuration text, applying `overrides` (key, value) on top.
/// Override errors are reported as line 0.
pub fn parse_config_str(text: &str, overrides: &[(String, String)]) -> Result<RunConfig, ConfigError> {
    let mut entries = parse_entries(text)?;
    for (k, v) in overrides {
        entries.set(0, k, v)?;
    }
    build(&entries)
}

pub fn parse_config(path: &Path, overrides: &[(String, String)]) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::Io { path: path.display().to_string(), msg: e.to_string() })?;
    parse_config_str(&text, overrides)
}

fn build(e: &Entries) -> Result<RunConfig, ConfigError> {
    let scenario = match e.get("scenario") {
        None => return Err(ConfigError::Missing("scenario")),
        Some((line, v)) => v.parse::<Scenario>().map_err(|_| ConfigError::Type {
            line,
            key: "scenario".into(),
            value: v.into(),
            expected: "one of bands, ground-state, quench-bh, quench-tdbh, quench-exact, compare",
        })?,
    };
    let v0 = e.typed::<f64>("v0", "a number")?.ok_or(ConfigError::Missing("v0"))?;
    let needs_particles = scenario != Scenario::Bands;
    let n_particles = match e.typed::<usize>("n_particles", "a positive integer")? {
        Some(n) => n,
        None if needs_particles => return Err(ConfigError::Missing("n_particles")),
        None => 1,
    };
    let lambda_final = match e.typed::<f64>("lambda_final", "a number")? {
        Some(l) => l,
        None if needs_particles => return Err(ConfigError::Missing("lambda_final")),
        None => 0.0,
    };
    let t_final = match e.typed::<f64>("t_final", "a number")? {
        Some(t) => t,
        None if scenario.is_dynamic() => return Err(ConfigError::Missing("t_final")),
        None => 1.0,
    };
    let sample_dt = e.typed::<f64>("sample_dt", "a number")?.unwrap_or(t_final / DEFAULT_SAMPLES);
    let cfg = RunConfig {
        scenario,
        m_sites: e.typed("m_sites", "a positive integer")?.unwrap_or(DEFAULT_M_SITES),
        n_grid: e.typed("n_grid", "a positive integer")?.unwrap_or(DEFAULT_N_GRID),
        v0,
        n_particles,
        lambda_initial: e.typed("lambda_initial", "a number")?.unwrap_or(0.0),
        lambda_final,
        nu: e.typed("nu", "a positive integer")?.unwrap_or(DEFAULT_NU),
        kappa: e.typed("kappa", "a positive integer")?.unwrap_or(DEFAULT_KAPPA),
        t_final,
        sample_dt,
        integrator_tol: e.typed("integrator_tol", "a number")?.unwrap_or(DEFAULT_TOL),
        output_dir: e.typed::<PathBuf>("output_dir", "a path")?.unwrap_or_else(|| PathBuf::from("out")),
        dimension_cap: e.typed("dimension_cap", "a positive integer")?.unwrap_or(tdbh::fock::DEFAULT_DIMENSION_CAP),
    };
    cfg.validate()?;
    Ok(cfg)
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if !(self.lambda_initial >= 0.0) || !(self.lambda_final >= 0.0) {
            return bad(format!("lambda values must be >= 0, got {} and {}", self.lambda_initial, self.lambda_final));
        }
        if self.nu < 1 {
            return bad("nu must be >= 1".into());
        }
        if self.kappa < 1 {
            return bad("kappa must be >= 1".into());
        }
        if !(self.t_final > 0.0) {
            return bad(format!("t_final must be > 0, got {}", self.t_final));
        }
        if !(self.sample_dt > 0.0) {
            return bad(format!("sample_dt must be > 0, got {}", self.sample_dt));
        }
        if !(self.integrator_tol > 0.0 && self.integrator_tol < 1.0) {
            return bad(format!("integrator_tol must lie in (0, 1), got {}", self.integrator_tol));
        }
        if self.n_particles < 1 {
            return bad("n_particles must be >= 1".into());
        }
        if self.n_particles > 1 && self.lambda_final > 0.0 && !self.lambda_final.is_finite() {
            return bad("lambda_final must be finite".into());
        }
        if self.dimension_cap < 1 {
            return bad("dimension_cap must be >= 1".into());
        }
        tdbh::single_particle::LatticeSpec::new(self.m_sites, self.n_grid, self.v0)
            .validate()
            .or_else(|e| bad(e.to_string()))?;
        Ok(())
    }

    /// `lambda0 = lambda / (N - 1)`; a single boson has no interaction.
    pub fn lambda0(&self, lambda: f64) -> f64 {
        if self.n_particles > 1 {
            lambda / (self.n_particles as f64 - 1.0)
        } else {
            0.0
        }
    }

    /// `key = value` rendering that parses back to the same configuration.
    pub fn render(&self) -> String {
        format!(
            "scenario = {}\nm_sites = {}\nn_grid = {}\nv0 = {}\nn_particles = {}\nlambda_initial = {}\nlambda_final = {}\nnu = {}\nkappa = {}\nt_final = {}\nsample_dt = {}\nintegrator_tol = {:e}\noutput_dir = {}\ndimension_cap = {}\n",
            self.scenario,
            self.m_sites,
            self.n_grid,
            self.v0,
            self.n_particles,
            self.lambda_initial,
            self.lambda_final,
            self.nu,
            self.kappa,
            self.t_final,
            self.sample_dt,
            self.integrator_tol,
            self.output_dir.display(),
            self.dimension_cap
        )
    }
}
