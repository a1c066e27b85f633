//! Scenario presets and the run configuration.

use std::f64::consts::PI;
use std::path::PathBuf;
use std::sync::Arc;

use crate::assembly::{trans, BoundaryKind, Discretization, HeatSource, LaserSource, Sources, SystemState};
use crate::error::{Error, Result};
use crate::mesh::{build_structured_mesh, Mesh};
use crate::physics::{GradientModel, MaterialParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioKind {
    Melt,
    Convergence,
    Laser,
    Dendrite,
    Custom,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 5] = [Self::Melt, Self::Convergence, Self::Laser, Self::Dendrite, Self::Custom];

    pub fn name(self) -> &'static str {
        match self {
            Self::Melt => "melt",
            Self::Convergence => "convergence",
            Self::Laser => "laser",
            Self::Dendrite => "dendrite",
            Self::Custom => "custom",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialCondition {
    /// Solid and molten grains on a sinusoidal temperature field.
    TwoGrains,
    /// Molten spot at (4, 2.5) in a preheated solid.
    LaserSpot,
    /// Solid seed at the domain centre; the far field holds `theta_far`.
    Seed { radius: f64, theta_far: f64 },
    Uniform { phi: f64, theta: f64 },
}

impl InitialCondition {
    pub fn phi(&self, x: [f64; 2], lx: f64, ly: f64) -> f64 {
        match *self {
            Self::TwoGrains => {
                let r1 = ((x[0] - 0.25).powi(2) + (x[1] - 0.25).powi(2)).sqrt();
                let r2 = ((x[0] - 0.75).powi(2) + (x[1] - 0.75).powi(2)).sqrt();
                0.5 * (trans((r1 - 0.15) / 3.25e-2) - trans((r2 - 0.15) / 3.25e-2) + 1.0)
            }
            Self::LaserSpot => {
                let r = (5.0 * (x[0] - 4.0).powi(2) + 5.0 * (x[1] - 2.5).powi(2)).sqrt();
                trans((r - 0.2) / 0.05f64.sqrt())
            }
            Self::Seed { radius, .. } => {
                let d2 = (x[0] - 0.5 * lx).powi(2) + (x[1] - 0.5 * ly).powi(2);
                0.5 + 0.5 * ((d2 - radius * radius) / 0.008).tanh()
            }
            Self::Uniform { phi, .. } => phi,
        }
    }

    pub fn theta(&self, x: [f64; 2], lx: f64, ly: f64, theta_m: f64) -> f64 {
        match *self {
            Self::TwoGrains => {
                let a = (4.0 * PI * x[0]).sin() * (4.0 * PI * x[1]).sin() + 1.0;
                let b = (2.0 * PI * x[0]).sin() + (2.0 * PI * x[1]).sin();
                theta_m * (0.5f64.ln() * a * b * 0.5).exp()
            }
            Self::LaserSpot => theta_m * (0.95 + 0.55 * self.phi(x, lx, ly)),
            Self::Seed { theta_far, .. } => theta_m - self.phi(x, lx, ly) * (theta_m - theta_far),
            Self::Uniform { theta, .. } => theta,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub scenario: ScenarioKind,
    pub lx: f64,
    pub ly: f64,
    pub nx: usize,
    pub ny: usize,
    pub tau: f64,
    pub t_end: f64,
    pub bc: BoundaryKind,
    pub params: MaterialParams,
    pub sources: Sources,
    pub initial: InitialCondition,
    /// Steps between field snapshots; 0 disables them.
    pub snapshot_stride: usize,
    pub out_dir: PathBuf,
}

fn base_params(gamma: f64) -> MaterialParams {
    MaterialParams {
        mobility: 10.0,
        conductivity: 0.01,
        eta_l: 0.001,
        eta_s: 1.0,
        theta_m: 1.0,
        latent: 1.0,
        h_pt: 1.0,
        h_cf: 0.1,
        c_vsh: 1.0,
        gradient_model: GradientModel::Isotropic { gamma },
    }
}

/// Unit-square setup of the convergence studies.
pub fn scenario_convergence() -> ScenarioConfig {
    ScenarioConfig {
        scenario: ScenarioKind::Convergence,
        lx: 1.0,
        ly: 1.0,
        nx: 16,
        ny: 16,
        tau: 0.1 / 256.0,
        t_end: 0.05,
        bc: BoundaryKind::Periodic,
        params: base_params(0.05),
        sources: Sources::default(),
        initial: InitialCondition::TwoGrains,
        snapshot_stride: 0,
        out_dir: PathBuf::from("out"),
    }
}

/// Simultaneous melting and solidification with a sharper interface.
pub fn scenario_melt() -> ScenarioConfig {
    ScenarioConfig {
        scenario: ScenarioKind::Melt,
        nx: 64,
        ny: 64,
        tau: 1e-3,
        t_end: 5.0,
        params: base_params(0.025),
        snapshot_stride: 100,
        ..scenario_convergence()
    }
}

pub fn scenario_laser() -> ScenarioConfig {
    let mut params = base_params(0.05);
    params.mobility = 100.0;
    params.conductivity = 2.0;
    ScenarioConfig {
        scenario: ScenarioKind::Laser,
        lx: 5.0,
        ly: 5.0,
        nx: 128,
        ny: 128,
        tau: 1e-3,
        t_end: 2.5,
        bc: BoundaryKind::Periodic,
        params,
        sources: Sources {
            heat: HeatSource::Laser(LaserSource::default()),
            ..Sources::default()
        },
        initial: InitialCondition::LaserSpot,
        snapshot_stride: 100,
        out_dir: PathBuf::from("out"),
    }
}

pub fn scenario_dendrite() -> ScenarioConfig {
    let theta_b = 0.6;
    let params = MaterialParams {
        mobility: 100.0,
        conductivity: 200.0,
        latent: 15.0,
        gradient_model: GradientModel::Anisotropic {
            gamma0: 0.05,
            delta: 0.9,
        },
        ..base_params(0.05)
    };
    ScenarioConfig {
        scenario: ScenarioKind::Dendrite,
        lx: 10.0,
        ly: 10.0,
        nx: 256,
        ny: 256,
        tau: 2.5e-4,
        t_end: 0.35,
        bc: BoundaryKind::Thermal { theta_b },
        params,
        sources: Sources::default(),
        initial: InitialCondition::Seed {
            radius: 0.05,
            theta_far: theta_b,
        },
        snapshot_stride: 200,
        out_dir: PathBuf::from("out"),
    }
}

/// Preset for a named scenario; `custom` has none.
pub fn preset(kind: ScenarioKind) -> Option<ScenarioConfig> {
    match kind {
        ScenarioKind::Melt => Some(scenario_melt()),
        ScenarioKind::Convergence => Some(scenario_convergence()),
        ScenarioKind::Laser => Some(scenario_laser()),
        ScenarioKind::Dendrite => Some(scenario_dendrite()),
        ScenarioKind::Custom => None,
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.lx > 0.0 && self.ly > 0.0 && self.lx.is_finite() && self.ly.is_finite()) {
            return bad(format!("domain must be positive, got {} x {}", self.lx, self.ly));
        }
        if self.nx == 0 || self.ny == 0 {
            return bad(format!("mesh needs at least one cell per direction, got {} x {}", self.nx, self.ny));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return bad(format!("tau must be positive, got {}", self.tau));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return bad(format!("t_end must be nonnegative, got {}", self.t_end));
        }
        if let BoundaryKind::Thermal { theta_b } = self.bc {
            if !(theta_b > 0.0 && theta_b.is_finite()) {
                return bad(format!("boundary temperature must be positive, got {theta_b}"));
            }
        }
        self.params.validate()
    }

    pub fn mesh(&self) -> Result<Arc<Mesh>> {
        build_structured_mesh(self.lx, self.ly, self.nx, self.ny).map(Arc::new)
    }

    pub fn discretization(&self) -> Result<Discretization> {
        self.validate()?;
        Discretization::new(&self.mesh()?, self.bc)
    }

    /// Initial state on `disc`, which may be any mesh of the same domain.
    pub fn initial_state(&self, disc: &Discretization) -> Result<SystemState> {
        let (ic, lx, ly, tm) = (self.initial, self.lx, self.ly, self.params.theta_m);
        disc.initial_state(0.0, |x| ic.phi(x, lx, ly), |x| ic.theta(x, lx, ly, tm), |_| [0.0, 0.0])
    }
}
