//! Time loop: with θ^{n−1} frozen, solve potential, then flow, then heat.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::config::{ConfigError, FlowRole, HeatRole, InflowProfile, PotentialRole, SimConfig};
use crate::fem::{interior_rule, p1_at_quad, MiniVelocity, QuadField, TriangleGeometry};
use crate::flow::{
    builtin_profile_gamma1, builtin_profile_gamma5, solve_flow_stationary, solve_flow_step, viscous_dissipation,
    FlowBc, FlowError, FlowProblem,
};
use crate::heat::{solve_heat_stationary, solve_heat_step, HeatBc, HeatError, HeatProblem};
use crate::materials::MaterialModel;
use crate::mesh::{generate_channel_mesh, Mesh2D, Tag};
use crate::potential::{
    conductivity_cells, joule_density, solve_potential, PotentialBc, PotentialError, PotentialProblem,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Potential,
    Flow,
    Heat,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Potential => "potential",
            Stage::Flow => "flow",
            Stage::Heat => "heat",
        })
    }
}

#[derive(Debug, Error)]
pub enum StageFailure {
    #[error(transparent)]
    Potential(#[from] PotentialError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Heat(#[from] HeatError),
}

impl StageFailure {
    pub fn stage(&self) -> Stage {
        match self {
            StageFailure::Potential(_) => Stage::Potential,
            StageFailure::Flow(_) => Stage::Flow,
            StageFailure::Heat(_) => Stage::Heat,
        }
    }
}

#[derive(Debug, Error)]
pub enum CouplerError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{} solve failed at step {step}: {failure}", failure.stage())]
    Stage { step: usize, failure: StageFailure },
    #[error("field `{field}` is not finite")]
    NonFiniteField { field: &'static str },
    #[error("blow-up at step {step}: max|theta| = {max_theta:e}, max|v| = {max_velocity:e}")]
    BlowUp {
        step: usize,
        max_theta: f64,
        max_velocity: f64,
    },
}

fn stage_err<E: Into<StageFailure>>(step: usize) -> impl FnOnce(E) -> CouplerError {
    move |e| CouplerError::Stage {
        step,
        failure: e.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub total: f64,
    pub steps: usize,
}

impl TimeGrid {
    pub fn new(total: f64, steps: usize) -> Result<Self, ConfigError> {
        if !(total > 0.0 && total.is_finite()) {
            return Err(ConfigError::Invalid {
                field: "time.total".into(),
                message: format!("must be positive, got {total}"),
            });
        }
        if steps == 0 {
            return Err(ConfigError::Invalid {
                field: "time.steps".into(),
                message: "a time grid needs at least one step".into(),
            });
        }
        Ok(Self { total, steps })
    }

    pub fn dt(&self) -> f64 {
        self.total / self.steps as f64
    }

    pub fn time(&self, n: usize) -> f64 {
        self.total * n as f64 / self.steps as f64
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StageIterations {
    pub potential: usize,
    pub flow: usize,
    pub heat: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Diagnostics {
    pub step: usize,
    pub time: f64,
    pub max_theta: f64,
    pub argmax: [f64; 2],
    pub int_theta: f64,
    pub div_norm: f64,
    pub min_art_visc: f64,
    pub max_art_visc: f64,
    /// x-centroid of `(θ − θ_b)₊`; NaN when that part vanishes.
    pub plume_centroid_x: f64,
    pub max_speed: f64,
    pub iterations: StageIterations,
    /// Logical clock value at the end of the potential, flow and heat stage.
    pub stage_ticks: [u64; 3],
    pub flow_converged: bool,
}

#[derive(Debug, Clone)]
pub struct SimState {
    pub time: f64,
    pub step: usize,
    pub velocity: MiniVelocity,
    pub pressure: Vec<f64>,
    pub theta: Vec<f64>,
    pub phi: Vec<f64>,
    /// θ one level back, for the entropy residual.
    pub theta_prev: Option<Vec<f64>>,
    /// Cellwise artificial viscosity of the last heat solve.
    pub art_visc: Vec<f64>,
    pub diagnostics: Diagnostics,
    clock: u64,
}

impl SimState {
    fn check_finite(&self) -> Result<(), CouplerError> {
        let bad = |v: &[f64]| v.iter().any(|x| !x.is_finite());
        let field = if bad(&self.theta) {
            "theta"
        } else if !self.velocity.is_finite() {
            "velocity"
        } else if bad(&self.pressure) {
            "pressure"
        } else if bad(&self.phi) {
            "phi"
        } else if self.theta_prev.as_deref().is_some_and(bad) {
            "theta_prev"
        } else {
            return Ok(());
        };
        Err(CouplerError::NonFiniteField { field })
    }
}

/// Config resolved against a mesh.
pub struct Simulation {
    config: SimConfig,
    mesh: Mesh2D,
    flow_bc: [FlowBc; 5],
    heat_bc: [HeatBc; 5],
    potential_bc: [PotentialBc; 5],
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub state: SimState,
    /// One row per step 1..=M.
    pub series: Vec<Diagnostics>,
}

fn flow_bc(role: &FlowRole, cfg: &SimConfig) -> FlowBc {
    match *role {
        FlowRole::Inflow { profile, scale } => {
            let base = match profile {
                InflowProfile::Parabolic => builtin_profile_gamma1(cfg.geometry.height),
                InflowProfile::Electrode => builtin_profile_gamma5(cfg.geometry.length, cfg.geometry.electrode_radius),
                InflowProfile::Uniform { value } => Arc::new(move |_| value),
            };
            if scale == 0.0 {
                FlowBc::NoSlip
            } else {
                FlowBc::Inflow(Arc::new(move |p| {
                    let v = base(p);
                    [scale * v[0], scale * v[1]]
                }))
            }
        }
        FlowRole::NoSlip => FlowBc::NoSlip,
        FlowRole::DoNothing => FlowBc::DoNothing,
        FlowRole::Traction { value } => FlowBc::Traction(Arc::new(move |_| value)),
    }
}

fn heat_bc(role: &HeatRole) -> HeatBc {
    match *role {
        HeatRole::Robin { alpha, theta_l } => HeatBc::robin(alpha, theta_l),
        HeatRole::Dirichlet { value } => HeatBc::dirichlet(value),
        HeatRole::Insulated => HeatBc::Insulated,
    }
}

fn potential_bc(role: &PotentialRole, g: f64) -> PotentialBc {
    match *role {
        PotentialRole::Grounded => PotentialBc::Grounded,
        PotentialRole::Dirichlet { value } => PotentialBc::Dirichlet(Arc::new(move |_| value)),
        PotentialRole::Flux { value } => PotentialBc::flux(value),
        PotentialRole::Electrode => PotentialBc::flux(g),
    }
}

/// `∫ x w / ∫ w` with `w = (θ − base)₊`, by interior quadrature. Excess
/// below a few ulps of `base` is round-off of the interpolation and ignored.
pub fn plume_centroid_x(mesh: &Mesh2D, theta: &[f64], base: f64) -> f64 {
    let rule = interior_rule();
    let th = p1_at_quad(mesh, theta);
    let floor = 1e-12 * base.abs().max(1.0);
    let (mut num, mut den) = (0.0, 0.0);
    for t in 0..mesh.num_triangles() {
        let geo = TriangleGeometry::of(mesh, t);
        for (q, (b, w)) in rule.points.iter().zip(&rule.weights).enumerate() {
            let excess = th.get(t, q) - base;
            let excess = if excess > floor { excess } else { 0.0 };
            let jw = 2.0 * geo.area * w * excess;
            num += jw * geo.point(*b)[0];
            den += jw;
        }
    }
    if den > 0.0 {
        num / den
    } else {
        f64::NAN
    }
}

#[allow(clippy::too_many_arguments)]
fn diagnose(
    mesh: &Mesh2D,
    material: &MaterialModel,
    step: usize,
    time: f64,
    theta: &[f64],
    velocity: &MiniVelocity,
    art_visc: &[f64],
    div_norm: f64,
    iterations: StageIterations,
    stage_ticks: [u64; 3],
    flow_converged: bool,
) -> Diagnostics {
    let (imax, max_theta) =
        theta.iter().copied().enumerate().fold(
            (0, f64::NEG_INFINITY),
            |(bi, bv), (i, v)| if v > bv { (i, v) } else { (bi, bv) },
        );
    let int_theta = (0..mesh.num_triangles())
        .map(|t| {
            let tri = mesh.triangles()[t];
            mesh.area(t) / 3.0 * (theta[tri[0]] + theta[tri[1]] + theta[tri[2]])
        })
        .sum();
    let max_speed = (0..mesh.num_vertices())
        .map(|v| {
            let [a, b] = velocity.vertex_value(v);
            a.hypot(b)
        })
        .fold(0.0, f64::max);
    Diagnostics {
        step,
        time,
        max_theta,
        argmax: mesh.vertices()[imax],
        int_theta,
        div_norm,
        min_art_visc: art_visc.iter().copied().fold(f64::INFINITY, f64::min),
        max_art_visc: art_visc.iter().copied().fold(0.0, f64::max),
        plume_centroid_x: plume_centroid_x(mesh, theta, material.theta_b),
        max_speed,
        iterations,
        stage_ticks,
        flow_converged,
    }
}

impl Simulation {
    pub fn new(config: SimConfig) -> Result<Self, CouplerError> {
        config.validate()?;
        let spec = config.geometry.spec()?;
        let mesh = generate_channel_mesh(&spec).map_err(|e| ConfigError::Invalid {
            field: "geometry".into(),
            message: e.to_string(),
        })?;
        Ok(Self::with_mesh(config, mesh))
    }

    /// Uses a caller-supplied mesh instead of generating one.
    pub fn with_mesh(config: SimConfig, mesh: Mesh2D) -> Self {
        let flow_bc = Tag::ALL.map(|t| flow_bc(&config.boundary.get(t).flow, &config));
        let heat_bc = Tag::ALL.map(|t| heat_bc(&config.boundary.get(t).heat));
        let potential_bc = Tag::ALL.map(|t| potential_bc(&config.boundary.get(t).potential, config.potential.g));
        Self {
            config,
            mesh,
            flow_bc,
            heat_bc,
            potential_bc,
        }
    }

    pub fn mesh(&self) -> &Mesh2D {
        &self.mesh
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    fn potential(&self, theta: &[f64], step: usize) -> Result<(Vec<f64>, usize), CouplerError> {
        let mut p = PotentialProblem::with_conductivity(
            &self.mesh,
            conductivity_cells(&self.mesh, &self.config.materials, theta),
            self.potential_bc.clone(),
        );
        p.tol_rel = self.config.solver.potential_tol;
        let s = solve_potential(&p).map_err(stage_err(step))?;
        Ok((s.phi, s.stats.iterations))
    }

    fn flow_problem(&self, theta: &[f64], previous: MiniVelocity) -> FlowProblem<'_> {
        let mut p = FlowProblem::from_material(
            &self.mesh,
            &self.config.materials,
            theta,
            previous,
            self.config.dt(),
            self.flow_bc.clone(),
        );
        p.convection = self.config.solver.convection;
        p.solver = self.config.solver.flow;
        p.tol_rel = self.config.solver.flow_tol;
        p
    }

    /// Stationary flow, potential and heat at the base temperature.
    pub fn initialize(&self) -> Result<SimState, CouplerError> {
        let mesh = &self.mesh;
        let mat = &self.config.materials;
        let base = vec![mat.theta_b; mesh.num_vertices()];
        let mut clock = 0;
        let (phi, pot_its) = self.potential(&base, 0)?;
        clock += 1;
        let tick_p = clock;
        let flow = solve_flow_stationary(&self.flow_problem(&base, MiniVelocity::zeros(mesh))).map_err(stage_err(0))?;
        clock += 1;
        let tick_f = clock;
        let source = joule_density(mesh, mat, &base, &phi)
            .zip_with(&viscous_dissipation(mesh, mat, &base, &flow.velocity), |a, b| a + b);
        let heat = solve_heat_stationary(
            mesh,
            mat,
            &base,
            &flow.velocity,
            &source,
            &self.heat_bc,
            0.0,
            self.config.solver.heat_tol,
        )
        .map_err(stage_err(0))?;
        clock += 1;
        let iterations = StageIterations {
            potential: pot_its,
            flow: flow.stats.iterations,
            heat: heat.stats.iterations,
        };
        let diagnostics = diagnose(
            mesh,
            mat,
            0,
            0.0,
            &heat.theta,
            &flow.velocity,
            &heat.art_visc,
            flow.stats.divergence,
            iterations,
            [tick_p, tick_f, clock],
            flow.stats.converged,
        );
        let state = SimState {
            time: 0.0,
            step: 0,
            velocity: flow.velocity,
            pressure: flow.pressure,
            theta: heat.theta,
            phi,
            theta_prev: None,
            art_visc: heat.art_visc,
            diagnostics,
            clock,
        };
        state.check_finite()?;
        Ok(state)
    }

    /// One time step. The input state is left untouched on failure.
    pub fn advance(&self, state: &SimState) -> Result<SimState, CouplerError> {
        state.check_finite()?;
        let mesh = &self.mesh;
        let mat = &self.config.materials;
        let step = state.step + 1;
        let dt = self.config.dt();
        let time = state.time + dt;
        let mut clock = state.clock;

        let (phi, pot_its) = if state.step % self.config.potential.every == 0 {
            self.potential(&state.theta, step)?
        } else {
            (state.phi.clone(), 0)
        };
        clock += 1;
        let tick_p = clock;

        let flow =
            solve_flow_step(&self.flow_problem(&state.theta, state.velocity.clone())).map_err(stage_err(step))?;
        clock += 1;
        let tick_f = clock;

        let joule = joule_density(mesh, mat, &state.theta, &phi);
        let source = joule.zip_with(&viscous_dissipation(mesh, mat, &state.theta, &flow.velocity), |a, b| {
            a + b
        });
        let residual_source = joule.zip_with(
            &viscous_dissipation(mesh, mat, &state.theta, &state.velocity),
            |a, b| a + b,
        );
        let problem = HeatProblem {
            mesh,
            material: *mat,
            theta_prev: &state.theta,
            theta_prev2: state.theta_prev.as_deref(),
            velocity: &flow.velocity,
            residual_velocity: &state.velocity,
            source,
            residual_source,
            dt,
            time,
            boundary: self.heat_bc.clone(),
            stabilization: self.config.stabilization,
            tol_rel: self.config.solver.heat_tol,
        };
        let heat = solve_heat_step(&problem).map_err(stage_err(step))?;
        clock += 1;

        let max_theta = heat.theta.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let max_velocity = flow.velocity.max_abs();
        let limit = self.config.solver.blowup_limit;
        if !(max_theta <= limit && max_velocity <= limit) {
            return Err(CouplerError::BlowUp {
                step,
                max_theta,
                max_velocity,
            });
        }

        let iterations = StageIterations {
            potential: pot_its,
            flow: flow.stats.iterations,
            heat: heat.stats.iterations,
        };
        let diagnostics = diagnose(
            mesh,
            mat,
            step,
            time,
            &heat.theta,
            &flow.velocity,
            &heat.art_visc,
            flow.stats.divergence,
            iterations,
            [tick_p, tick_f, clock],
            flow.stats.converged,
        );
        Ok(SimState {
            time,
            step,
            velocity: flow.velocity,
            pressure: flow.pressure,
            theta: heat.theta,
            phi,
            theta_prev: Some(state.theta.clone()),
            art_visc: heat.art_visc,
            diagnostics,
            clock,
        })
    }

    /// Initializes, then takes `time.steps` steps. `observer` sees the
    /// initial state and every accepted step.
    pub fn run(&self, mut observer: impl FnMut(&SimState)) -> Result<RunOutput, CouplerError> {
        let mut state = self.initialize()?;
        observer(&state);
        let mut series = Vec::with_capacity(self.config.time.steps);
        for _ in 0..self.config.time.steps {
            state = self.advance(&state)?;
            observer(&state);
            series.push(state.diagnostics);
        }
        Ok(RunOutput { state, series })
    }
}

/// Builds the simulation and runs it to the end.
pub fn run(config: SimConfig) -> Result<RunOutput, CouplerError> {
    Simulation::new(config)?.run(|_| {})
}

/// Source fields of the heat step taken from `prev` to `next`: Joule heating
/// and viscous dissipation at the lagged temperature.
pub fn step_sources(
    mesh: &Mesh2D,
    material: &MaterialModel,
    prev: &SimState,
    next: &SimState,
) -> (QuadField, QuadField) {
    (
        joule_density(mesh, material, &prev.theta, &next.phi),
        viscous_dissipation(mesh, material, &prev.theta, &next.velocity),
    )
}
