//! Simulation configuration: TOML schema, validation and the built-in presets.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::heat::StabilizationParams;
use crate::linalg::SolverKind;
use crate::materials::{MaterialModel, BOUSSINESQ_COEFFICIENT};
use crate::mesh::{GeometrySpec, Tag};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("unknown preset `{0}` (expected test1, test2 or test3)")]
    UnknownPreset(String),
    #[error("invalid value for `{field}`: {message}")]
    Invalid { field: String, message: String },
}

fn invalid(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field: field.to_string(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    pub length: f64,
    pub height: f64,
    pub electrode_radius: f64,
    pub nx: usize,
    pub ny: usize,
    /// Round `nx` to the nearest count that resolves the electrode ends.
    #[serde(default = "yes")]
    pub snap_nx: bool,
}

fn yes() -> bool {
    true
}

impl GeometryConfig {
    pub fn spec(&self) -> Result<GeometrySpec, ConfigError> {
        let err = |e: crate::mesh::MeshError| invalid("geometry", e.to_string());
        if self.snap_nx {
            GeometrySpec::snapped(self.length, self.height, self.electrode_radius, self.nx, self.ny).map_err(err)
        } else {
            let s = GeometrySpec::new(self.length, self.height, self.electrode_radius, self.nx, self.ny);
            s.validate().map_err(err)?;
            Ok(s)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    /// Final time `T`.
    pub total: f64,
    /// Number of uniform steps `M`; zero only initializes.
    pub steps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialConfig {
    /// Current density on electrode boundaries.
    pub g: f64,
    /// Recompute φ every `every` steps.
    #[serde(default = "one")]
    pub every: usize,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InflowProfile {
    /// `(y(H − y), 0)`.
    Parabolic,
    /// Built-in electrode profile.
    Electrode,
    Uniform {
        value: [f64; 2],
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FlowRole {
    Inflow {
        profile: InflowProfile,
        #[serde(default = "unit")]
        scale: f64,
    },
    NoSlip,
    DoNothing,
    Traction {
        value: [f64; 2],
    },
}

fn unit() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum HeatRole {
    Robin { alpha: f64, theta_l: f64 },
    Dirichlet { value: f64 },
    Insulated,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialRole {
    Grounded,
    Dirichlet {
        value: f64,
    },
    Flux {
        value: f64,
    },
    /// Flux `potential.g`.
    Electrode,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TagBoundary {
    pub flow: FlowRole,
    pub heat: HeatRole,
    pub potential: PotentialRole,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundaryConfig {
    pub gamma1: TagBoundary,
    pub gamma2: TagBoundary,
    pub gamma3: TagBoundary,
    pub gamma4: TagBoundary,
    pub gamma5: TagBoundary,
}

impl BoundaryConfig {
    pub fn get(&self, tag: Tag) -> &TagBoundary {
        match tag {
            Tag::Gamma1 => &self.gamma1,
            Tag::Gamma2 => &self.gamma2,
            Tag::Gamma3 => &self.gamma3,
            Tag::Gamma4 => &self.gamma4,
            Tag::Gamma5 => &self.gamma5,
        }
    }

    pub fn get_mut(&mut self, tag: Tag) -> &mut TagBoundary {
        match tag {
            Tag::Gamma1 => &mut self.gamma1,
            Tag::Gamma2 => &mut self.gamma2,
            Tag::Gamma3 => &mut self.gamma3,
            Tag::Gamma4 => &mut self.gamma4,
            Tag::Gamma5 => &mut self.gamma5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub flow: SolverKind,
    pub flow_tol: f64,
    pub heat_tol: f64,
    pub potential_tol: f64,
    /// Keep the convective term in the flow equations.
    pub convection: bool,
    /// Abort once max|θ| or max|v| exceeds this.
    pub blowup_limit: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            flow: SolverKind::Lu,
            flow_tol: 1e-8,
            heat_tol: 1e-8,
            potential_tol: 1e-10,
            convection: true,
            blowup_limit: 1e4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeField {
    Theta,
    Phi,
    Pressure,
    Speed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProbeSpec {
    Point { field: ProbeField, x: f64, y: f64 },
    Max { field: ProbeField },
    Integral { field: ProbeField },
    Argmax { field: ProbeField },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub directory: String,
    /// VTK snapshot every `stride` steps; zero disables snapshots.
    pub stride: usize,
    pub probes: Vec<ProbeSpec>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            directory: "output".into(),
            stride: 25,
            probes: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    pub geometry: GeometryConfig,
    pub time: TimeConfig,
    #[serde(default)]
    pub materials: MaterialModel,
    #[serde(default)]
    pub stabilization: StabilizationParams,
    pub potential: PotentialConfig,
    pub boundary: BoundaryConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

pub const PRESETS: [&str; 3] = ["test1", "test2", "test3"];

/// Built-in test configurations on the perfused channel.
pub fn preset(name: &str) -> Result<SimConfig, ConfigError> {
    let robin = HeatRole::Robin {
        alpha: 1.0,
        theta_l: 37.0,
    };
    let wall = |heat| TagBoundary {
        flow: FlowRole::NoSlip,
        heat,
        potential: PotentialRole::Grounded,
    };
    let mut cfg = SimConfig {
        preset: Some(name.to_string()),
        geometry: GeometryConfig {
            length: 1.5,
            height: 0.5,
            electrode_radius: 0.075,
            nx: 48,
            ny: 16,
            snap_nx: true,
        },
        time: TimeConfig { total: 1.0, steps: 100 },
        materials: MaterialModel::default(),
        stabilization: StabilizationParams::default(),
        potential: PotentialConfig { g: 5.0, every: 1 },
        boundary: BoundaryConfig {
            gamma1: TagBoundary {
                flow: FlowRole::Inflow {
                    profile: InflowProfile::Parabolic,
                    scale: 1.0,
                },
                heat: robin,
                potential: PotentialRole::Grounded,
            },
            gamma2: wall(robin),
            gamma3: TagBoundary {
                flow: FlowRole::DoNothing,
                heat: HeatRole::Insulated,
                potential: PotentialRole::Grounded,
            },
            gamma4: wall(robin),
            gamma5: TagBoundary {
                flow: FlowRole::Inflow {
                    profile: InflowProfile::Electrode,
                    scale: 1.0,
                },
                heat: HeatRole::Dirichlet { value: 20.0 },
                potential: PotentialRole::Electrode,
            },
        },
        solver: SolverConfig::default(),
        output: OutputConfig::default(),
    };
    match name {
        "test1" => {}
        "test2" | "test3" => {
            cfg.potential.g = 1.0;
            cfg.boundary.gamma3.heat = robin;
            cfg.materials.buoyancy.enabled = true;
            cfg.materials.buoyancy.coefficient = BOUSSINESQ_COEFFICIENT;
            if name == "test3" {
                cfg.boundary.gamma1.heat = HeatRole::Dirichlet { value: 35.0 };
            }
        }
        other => return Err(ConfigError::UnknownPreset(other.to_string())),
    }
    Ok(cfg)
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            // Tagged variants are replaced whole so stale fields cannot leak in.
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) if !o.contains_key("kind") => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

impl SimConfig {
    /// Parses TOML text. A `preset` key supplies defaults that the remaining
    /// keys override; unknown keys are rejected either way.
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let table: toml::Table = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        let table = match table.get("preset") {
            Some(toml::Value::String(name)) => {
                let base = preset(name)?;
                let mut merged: toml::Table =
                    toml::Table::try_from(&base).map_err(|e| ConfigError::Parse(e.to_string()))?;
                merge(&mut merged, table);
                merged
            }
            Some(_) => return Err(invalid("preset", "must be a string")),
            None => table,
        };
        let cfg: SimConfig = table
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn dt(&self) -> f64 {
        self.time.total / self.time.steps.max(1) as f64
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = |field: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(invalid(field, format!("must be positive, got {v}")))
            }
        };
        self.geometry.spec()?;
        positive("time.total", self.time.total)?;
        if !self.potential.g.is_finite() {
            return Err(invalid("potential.g", "must be finite"));
        }
        if self.potential.every == 0 {
            return Err(invalid("potential.every", "must be at least 1"));
        }
        positive("materials.sigma0", self.materials.sigma0)?;
        positive("materials.eta0", self.materials.eta0)?;
        positive("materials.nu_const", self.materials.nu_const)?;
        self.stabilization.validate().map_err(|m| invalid("stabilization", m))?;
        positive("solver.flow_tol", self.solver.flow_tol)?;
        positive("solver.heat_tol", self.solver.heat_tol)?;
        positive("solver.potential_tol", self.solver.potential_tol)?;
        positive("solver.blowup_limit", self.solver.blowup_limit)?;

        let mut any_potential_dirichlet = false;
        for tag in Tag::ALL {
            let b = self.boundary.get(tag);
            let name = format!("boundary.{}", tag_key(tag));
            match b.heat {
                HeatRole::Robin { alpha, theta_l } => {
                    if !(alpha >= 0.0 && alpha.is_finite()) {
                        return Err(invalid(&format!("{name}.heat.alpha"), "must be nonnegative"));
                    }
                    if !theta_l.is_finite() {
                        return Err(invalid(&format!("{name}.heat.theta_l"), "must be finite"));
                    }
                }
                HeatRole::Dirichlet { value } if !value.is_finite() => {
                    return Err(invalid(&format!("{name}.heat.value"), "must be finite"));
                }
                _ => {}
            }
            any_potential_dirichlet |= matches!(b.potential, PotentialRole::Grounded | PotentialRole::Dirichlet { .. });
        }
        if !any_potential_dirichlet {
            return Err(invalid(
                "boundary",
                "the potential needs at least one grounded or Dirichlet boundary",
            ));
        }
        let [lo, hi] = [0.0, self.geometry.length];
        for (i, p) in self.output.probes.iter().enumerate() {
            if let ProbeSpec::Point { x, y, .. } = *p {
                if !(x >= lo && x <= hi && y >= 0.0 && y <= self.geometry.height) {
                    return Err(invalid(
                        &format!("output.probes[{i}]"),
                        format!("point ({x}, {y}) is outside the domain"),
                    ));
                }
            }
        }
        Ok(())
    }
}

pub fn tag_key(tag: Tag) -> &'static str {
    match tag {
        Tag::Gamma1 => "gamma1",
        Tag::Gamma2 => "gamma2",
        Tag::Gamma3 => "gamma3",
        Tag::Gamma4 => "gamma4",
        Tag::Gamma5 => "gamma5",
    }
}
