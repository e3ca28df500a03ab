use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::{BeamProfile, PulseProfile, PulseSpec};
use crate::mesh_fem::{Bounds, TriMesh};
use crate::recon_control::ControlConfig;
use crate::recon_orthofield::OrthoConfig;
use crate::virtual_current::{DeconvSettings, SampleSite, DEFAULT_COND_CAP};

use super::phantom::PhantomSpec;

/// Smallest allowed `solver_h / data_h`.
pub const MIN_MESH_RATIO: f64 = 1.5;

/// Axis offset of the first beam in units of the spacing (golden section).
pub const DEFAULT_PHASE: f64 = 0.381_966_011_250_105;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Control,
    Orthofield,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Control => "control",
            Method::Orthofield => "orthofield",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodChoice {
    Control,
    Orthofield,
    #[default]
    Both,
}

impl MethodChoice {
    pub fn methods(self) -> Vec<Method> {
        match self {
            MethodChoice::Control => vec![Method::Control],
            MethodChoice::Orthofield => vec![Method::Orthofield],
            MethodChoice::Both => vec![Method::Control, Method::Orthofield],
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "control" => Ok(MethodChoice::Control),
            "orthofield" => Ok(MethodChoice::Orthofield),
            "both" => Ok(MethodChoice::Both),
            _ => Err(Error::validation(format!("unknown method `{s}` (control, orthofield, both)"))),
        }
    }
}

/// Domain `[0, width] × [0, height]`; the electrodes are the bottom (Γ1)
/// and top (Γ2) sides.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Geometry {
    pub width: f64,
    pub height: f64,
}

impl Default for Geometry {
    fn default() -> Self {
        Geometry { width: 2.0, height: 1.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeshSizes {
    /// Element size of the mesh the data are simulated on.
    pub data_h: f64,
    /// Element size of the reconstruction mesh.
    pub solver_h: f64,
}

impl Default for MeshSizes {
    fn default() -> Self {
        MeshSizes { data_h: 0.01, solver_h: 0.025 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PulsePlan {
    /// One fan of parallel beams per direction.
    pub directions: Vec<[f64; 2]>,
    pub radius: f64,
    /// Distance between beam axes; `None` means `radius / 2`.
    pub spacing: Option<f64>,
    pub eta: f64,
    /// Sampling step of the measurement curves.
    pub dz: f64,
    pub phase: f64,
    pub radial_points: usize,
    pub site: SampleSite,
    pub cond_cap: f64,
}

impl Default for PulsePlan {
    fn default() -> Self {
        PulsePlan {
            directions: vec![[1.0, 0.0], [0.0, 1.0]],
            radius: 0.02,
            spacing: None,
            eta: 0.05,
            dz: 0.0025,
            phase: DEFAULT_PHASE,
            radial_points: 16,
            site: SampleSite::Centroids,
            cond_cap: DEFAULT_COND_CAP,
        }
    }
}

impl PulsePlan {
    pub fn spacing(&self) -> f64 {
        self.spacing.unwrap_or(self.radius / 2.0)
    }

    /// Pulse at `origin` along `direction` with this plan's profiles.
    pub fn pulse(&self, origin: [f64; 2], direction: [f64; 2]) -> Result<PulseSpec> {
        PulseSpec::new(
            origin,
            direction,
            PulseProfile::Bump { eta: self.eta },
            BeamProfile::Bump { radius: self.radius },
            1.0,
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeconvConfig {
    /// Fixed noise-to-signal ratio; estimated per curve when absent.
    pub snr: Option<f64>,
    pub snr_floor: f64,
    pub always_estimate: bool,
}

impl Default for DeconvConfig {
    fn default() -> Self {
        let d = DeconvSettings::default();
        DeconvConfig { snr: d.snr, snr_floor: d.snr_floor, always_estimate: d.always_estimate }
    }
}

impl DeconvConfig {
    pub fn settings(&self) -> DeconvSettings {
        DeconvSettings { snr: self.snr, snr_floor: self.snr_floor, always_estimate: self.always_estimate }
    }
}

/// Everything a sweep needs. Parsed from `key = value` lines grouped under
/// `[section]` headers (a TOML subset).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Noise standard deviations relative to the largest clean sample.
    pub noise_levels: Vec<f64>,
    pub method: MethodChoice,
    pub output: Option<PathBuf>,
    pub geometry: Geometry,
    pub mesh: MeshSizes,
    pub phantom: PhantomSpec,
    pub pulses: PulsePlan,
    pub deconv: DeconvConfig,
    pub control: ControlConfig,
    pub orthofield: OrthoConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            noise_levels: vec![0.0],
            method: MethodChoice::Both,
            output: None,
            geometry: Geometry::default(),
            mesh: MeshSizes::default(),
            phantom: PhantomSpec::default(),
            pulses: PulsePlan::default(),
            deconv: DeconvConfig::default(),
            control: ControlConfig::default(),
            orthofield: OrthoConfig::default(),
        }
    }
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

impl RunConfig {
    /// Parses and validates a configuration.
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Parse {
            line: e.span().map_or(1, |s| line_of(text, s.start)),
            message: e.message().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        RunConfig::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_text(&self) -> String {
        toml::to_string(self).expect("config is representable")
    }

    pub fn validate(&self) -> Result<()> {
        let g = self.geometry;
        if !(g.width > 0.0 && g.height > 0.0 && g.width.is_finite() && g.height.is_finite()) {
            return Err(Error::geometry("domain width and height must be positive"));
        }
        let m = self.mesh;
        if !(m.data_h > 0.0 && m.solver_h > 0.0) {
            return Err(Error::validation("mesh sizes must be positive"));
        }
        if m.solver_h < MIN_MESH_RATIO * m.data_h {
            return Err(Error::validation(format!(
                "solver mesh (h = {}) must be at least {MIN_MESH_RATIO} times coarser than the data mesh (h = {})",
                m.solver_h, m.data_h
            )));
        }
        if self.noise_levels.is_empty() {
            return Err(Error::validation("at least one noise level is required"));
        }
        if let Some(nu) = self.noise_levels.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
            return Err(Error::validation(format!("noise levels must be finite and >= 0 (got {nu})")));
        }
        let p = &self.pulses;
        if p.directions.len() < 2 {
            return Err(Error::validation("at least two beam directions are required"));
        }
        for dir in &p.directions {
            p.pulse([0.0, 0.0], *dir)?;
        }
        if !(p.spacing() > 0.0 && p.dz > 0.0) || p.radial_points == 0 {
            return Err(Error::validation("beam spacing, dz and radial_points must be positive"));
        }
        if !(p.cond_cap >= 1.0) {
            return Err(Error::validation("cond_cap must be at least 1"));
        }
        if let Some(s) = self.deconv.snr {
            if !(s > 0.0) || !s.is_finite() {
                return Err(Error::validation("snr override must be positive"));
            }
        }
        self.phantom.validate(g)?;
        self.control.validate()?;
        self.orthofield.validate()?;
        Ok(())
    }

    pub fn data_mesh(&self) -> Result<Arc<TriMesh>> {
        self.mesh_with(self.mesh.data_h)
    }

    pub fn solver_mesh(&self) -> Result<Arc<TriMesh>> {
        self.mesh_with(self.mesh.solver_h)
    }

    fn mesh_with(&self, h: f64) -> Result<Arc<TriMesh>> {
        let g = self.geometry;
        Ok(Arc::new(TriMesh::rectangle_with_size(0.0, g.width, 0.0, g.height, h)?))
    }

    /// Admissible conductivity range, taken from the phantom.
    pub fn bounds(&self) -> Result<Bounds> {
        Bounds::new(self.phantom.bounds.low, self.phantom.bounds.high)
    }
}
