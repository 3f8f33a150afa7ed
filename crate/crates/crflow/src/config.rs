//! TOML experiment configuration shared by every CLI subcommand.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Deserialize;
use thiserror::Error;

use crate::geometry::Vec2;
use crate::io::{read_mesh_ascii, IoError};
use crate::manufactured::ManufacturedSolution;
use crate::mesh::{structured_triangulation, Mesh, MeshError, Rect};
use crate::scheme::{project_initial_data, Physics, SchemeConfig, SchemeError, State};
use crate::thermo::{PressureLaw, ThermoError, ViscosityParams};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse config: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Thermo(#[from] ThermoError),
    #[error("mesh file: {0}")]
    MeshFile(#[from] IoError),
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub mesh: MeshSpec,
    #[serde(default)]
    pub physics: PhysicsSpec,
    pub time: TimeSpec,
    #[serde(default)]
    pub solver: SolverSpec,
    #[serde(default)]
    pub initial: InitialSpec,
    /// refinement levels for convergence / verify-inequalities
    #[serde(default = "default_levels")]
    pub levels: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

fn default_levels() -> usize {
    3
}

fn default_seed() -> u64 {
    42
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "snake_case")]
pub enum MeshSpec {
    Structured {
        nx: usize,
        ny: usize,
    },
    File {
        path: PathBuf,
    },
}

impl Default for MeshSpec {
    fn default() -> Self {
        MeshSpec::Structured { nx: 16, ny: 16 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicsSpec {
    #[serde(default = "default_a")]
    pub a: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_mu")]
    pub mu: f64,
    #[serde(default)]
    pub lambda: f64,
}

fn default_a() -> f64 {
    1.0
}
fn default_gamma() -> f64 {
    2.0
}
fn default_mu() -> f64 {
    0.1
}

impl Default for PhysicsSpec {
    fn default() -> Self {
        PhysicsSpec {
            a: default_a(),
            gamma: default_gamma(),
            mu: default_mu(),
            lambda: 0.0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSpec {
    pub dt: f64,
    pub t_final: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    #[serde(default = "default_picard_tol")]
    pub picard_tol: f64,
    #[serde(default = "default_picard_max_iters")]
    pub picard_max_iters: usize,
    #[serde(default = "default_theta_min")]
    pub theta_min: f64,
}

fn default_picard_tol() -> f64 {
    1e-10
}
fn default_picard_max_iters() -> usize {
    100
}
fn default_theta_min() -> f64 {
    0.1
}

impl Default for SolverSpec {
    fn default() -> Self {
        SolverSpec {
            picard_tol: default_picard_tol(),
            picard_max_iters: default_picard_max_iters(),
            theta_min: default_theta_min(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "snake_case")]
pub enum InitialSpec {
    /// constant density 1, velocity zero
    Rest,
    /// density 1 + amp * exp(-width |x - (1/2,1/2)|^2), velocity zero
    Gaussian {
        #[serde(default = "default_bump_amp")]
        amp: f64,
        #[serde(default = "default_bump_width")]
        width: f64,
    },
    /// manufactured pair at t = 0 (also selects the forcing)
    Manufactured,
}

fn default_bump_amp() -> f64 {
    0.5
}
fn default_bump_width() -> f64 {
    50.0
}

impl Default for InitialSpec {
    fn default() -> Self {
        InitialSpec::Rest
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        let cfg: ExperimentConfig = toml::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.time.dt > 0.0) {
            return Err(invalid(format!("time.dt must be positive, got {}", self.time.dt)));
        }
        if !(self.time.t_final >= 0.0) {
            return Err(invalid("time.t_final must be nonnegative"));
        }
        if !(self.physics.gamma >= 1.0) {
            return Err(invalid("physics.gamma must be >= 1"));
        }
        if !(self.physics.a > 0.0) {
            return Err(invalid("physics.a must be positive"));
        }
        if !(self.physics.mu > 0.0) || self.physics.mu + self.physics.lambda < 0.0 {
            return Err(invalid("need physics.mu > 0 and mu + lambda >= 0"));
        }
        if let MeshSpec::Structured { nx, ny } = self.mesh {
            if nx == 0 || ny == 0 {
                return Err(invalid("structured mesh needs nx, ny >= 1"));
            }
        }
        if !(self.solver.picard_tol > 0.0) {
            return Err(invalid("solver.picard_tol must be positive"));
        }
        Ok(())
    }

    /// Extra requirement for convergence / verify-inequalities modes.
    pub fn require_levels(&self, minimum: usize) -> Result<(), ConfigError> {
        if self.levels < minimum {
            return Err(invalid(format!(
                "need at least {minimum} refinement levels, got {}",
                self.levels
            )));
        }
        Ok(())
    }

    pub fn build_mesh(&self) -> Result<Mesh, ConfigError> {
        match &self.mesh {
            MeshSpec::Structured { nx, ny } => {
                Ok(structured_triangulation(*nx, *ny, Rect::UNIT)?)
            }
            MeshSpec::File { path } => Ok(read_mesh_ascii(path)?),
        }
    }

    pub fn physics(&self) -> Result<Physics, ConfigError> {
        Ok(Physics {
            law: PressureLaw::isentropic(self.physics.a, self.physics.gamma)?,
            visc: ViscosityParams::new(self.physics.mu, self.physics.lambda)?,
        })
    }

    pub fn scheme_config(&self) -> SchemeConfig {
        let mut c = SchemeConfig::new(self.time.dt, self.time.t_final);
        c.picard_tol = self.solver.picard_tol;
        c.picard_max_iters = self.solver.picard_max_iters;
        c.theta_min = self.solver.theta_min;
        c
    }

    pub fn initial_state(&self, mesh: Arc<Mesh>) -> Result<State, SchemeError> {
        match self.initial {
            InitialSpec::Rest => project_initial_data(mesh, |_| 1.0, |_| Vec2::ZERO),
            InitialSpec::Gaussian { amp, width } => project_initial_data(
                mesh,
                move |p| {
                    let d = p - Vec2::new(0.5, 0.5);
                    1.0 + amp * (-width * d.norm_sq()).exp()
                },
                |_| Vec2::ZERO,
            ),
            InitialSpec::Manufactured => {
                let ms = ManufacturedSolution::default();
                project_initial_data(mesh, move |p| ms.r(0.0, p), move |p| ms.u(0.0, p))
            }
        }
    }
}
