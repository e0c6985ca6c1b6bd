//! Incompressible flow on the MINI element: implicit Euler in time with
//! Oseen linearization, plus a Picard iteration for the stationary problem.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::fem::{
    assemble_mini_blocks, assemble_vector_boundary_load, assemble_vector_load, cell_values, p1_at_quad, DofMap,
    MiniVelocity, QuadField, TriangleGeometry, VectorFn,
};
use crate::linalg::{norm2, residual, solve_lu, solve_nonsymmetric, IterativeOptions, LinalgError, SolverKind};
use crate::materials::MaterialModel;
use crate::mesh::{Mesh2D, Tag};

#[derive(Clone)]
pub enum FlowBc {
    /// Prescribed velocity.
    Inflow(VectorFn),
    NoSlip,
    /// Zero normal stress.
    DoNothing,
    /// Prescribed normal stress `(νD − P I) n = g`.
    Traction(VectorFn),
}

impl FlowBc {
    pub fn is_dirichlet(&self) -> bool {
        matches!(self, FlowBc::Inflow(_) | FlowBc::NoSlip)
    }
}

impl fmt::Debug for FlowBc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FlowBc::Inflow(_) => write!(f, "Inflow(..)"),
            FlowBc::NoSlip => write!(f, "NoSlip"),
            FlowBc::DoNothing => write!(f, "DoNothing"),
            FlowBc::Traction(_) => write!(f, "Traction(..)"),
        }
    }
}

/// `v(0, y) = (y(H − y), 0)`.
pub fn builtin_profile_gamma1(height: f64) -> VectorFn {
    Arc::new(move |p: [f64; 2]| [p[1] * (height - p[1]), 0.0])
}

/// Electrode profile on the top wall, evaluated at the boundary point.
pub fn builtin_profile_gamma5(length: f64, radius: f64) -> VectorFn {
    Arc::new(move |p: [f64; 2]| {
        let (x, y) = (p[0], p[1]);
        let c = length / 2.0;
        let bump = (x - c + radius) * (c + radius - x);
        [(2.0 / radius) * bump * (c - x), -(2.0 / radius) * bump * y]
    })
}

#[derive(Debug, Error)]
pub enum FlowError {
    #[error("invalid flow problem: {0}")]
    Invalid(String),
    #[error("non-finite data in the flow solve")]
    NonFinite,
    #[error(transparent)]
    Solver(#[from] LinalgError),
}

#[derive(Debug, Clone)]
pub struct FlowProblem<'a> {
    pub mesh: &'a Mesh2D,
    /// Viscosity at quadrature points.
    pub nu: QuadField,
    /// Body force components at quadrature points.
    pub force: Option<(QuadField, QuadField)>,
    /// Velocity at the previous level; also the Oseen advecting field.
    pub previous: MiniVelocity,
    pub dt: f64,
    pub boundary: [FlowBc; 5],
    /// Include the convective term.
    pub convection: bool,
    pub solver: SolverKind,
    pub tol_rel: f64,
}

impl<'a> FlowProblem<'a> {
    /// ν and F from the material model at the lagged temperature.
    pub fn from_material(
        mesh: &'a Mesh2D,
        material: &MaterialModel,
        theta: &[f64],
        previous: MiniVelocity,
        dt: f64,
        boundary: [FlowBc; 5],
    ) -> Self {
        let th = p1_at_quad(mesh, theta);
        let force = material
            .buoyancy
            .enabled
            .then(|| (QuadField::zeros(mesh), th.map(|t| material.body_force(t)[1])));
        Self {
            mesh,
            nu: th.map(|t| material.nu(t)),
            force,
            previous,
            dt,
            boundary,
            convection: true,
            solver: SolverKind::Lu,
            tol_rel: 1e-8,
        }
    }

    fn validate(&self) -> Result<(), FlowError> {
        if !(self.dt > 0.0) {
            return Err(FlowError::Invalid(format!(
                "time step must be positive, got {}",
                self.dt
            )));
        }
        if self.nu.min() <= 0.0 {
            return Err(FlowError::Invalid("viscosity must be positive".into()));
        }
        if !self.nu.values().iter().all(|v| v.is_finite()) || !self.previous.is_finite() {
            return Err(FlowError::NonFinite);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FlowStats {
    /// Linear solver iterations (or Picard iterations for stationary solves).
    pub iterations: usize,
    pub residual: f64,
    /// `‖B v‖₂`.
    pub divergence: f64,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct FlowSolution {
    pub velocity: MiniVelocity,
    pub pressure: Vec<f64>,
    pub stats: FlowStats,
}

impl FlowSolution {
    pub fn zeros(mesh: &Mesh2D) -> Self {
        Self {
            velocity: MiniVelocity::zeros(mesh),
            pressure: vec![0.0; mesh.num_vertices()],
            stats: FlowStats::default(),
        }
    }

    /// Divergence contract `‖B v‖ ≤ 1e-8 (1 + ‖v‖)`.
    pub fn divergence_ok(&self) -> bool {
        self.stats.divergence <= 1e-8 * (1.0 + norm2(&self.velocity.to_vector()))
    }
}

/// Constrained velocity dofs and values. Tags are applied in order, so the
/// later tag wins at a shared corner; no-slip and inflow agree there for the
/// built-in profiles.
fn dirichlet_data(mesh: &Mesh2D, boundary: &[FlowBc; 5]) -> (Vec<usize>, Vec<f64>) {
    let dofs = DofMap::new(mesh);
    let mut fixed: Vec<Option<[f64; 2]>> = vec![None; mesh.num_vertices()];
    for tag in Tag::ALL {
        let value: Option<&dyn Fn([f64; 2]) -> [f64; 2]> = match &boundary[tag.index()] {
            FlowBc::Inflow(f) => Some(f.as_ref()),
            FlowBc::NoSlip => Some(&|_| [0.0, 0.0]),
            _ => None,
        };
        if let Some(f) = value {
            for v in mesh.vertices_on(&[tag]) {
                fixed[v] = Some(f(mesh.vertices()[v]));
            }
        }
    }
    let mut ids = Vec::new();
    let mut vals = Vec::new();
    for c in 0..2 {
        for (v, val) in fixed.iter().enumerate() {
            if let Some(val) = val {
                ids.push(dofs.vertex(c, v));
                vals.push(val[c]);
            }
        }
    }
    (ids, vals)
}

/// Shared linear solve for one Oseen system. `mass_scale` is 1/Δt, or 0 for
/// the stationary operator.
fn solve_oseen_system(
    problem: &FlowProblem<'_>,
    advect: Option<&MiniVelocity>,
    mass_scale: f64,
) -> Result<FlowSolution, FlowError> {
    let mesh = problem.mesh;
    let dofs = DofMap::new(mesh);
    let natural: Vec<Tag> = Tag::ALL
        .into_iter()
        .filter(|t| !problem.boundary[t.index()].is_dirichlet())
        .collect();
    let blocks = assemble_mini_blocks(mesh, &problem.nu, advect, &natural);
    let mut k = blocks.saddle(mass_scale);

    let mut rhs = vec![0.0; dofs.flow_size()];
    if mass_scale != 0.0 {
        let mv = blocks.mass.mul_vec(&problem.previous.to_vector());
        for (r, m) in rhs.iter_mut().zip(mv) {
            *r += mass_scale * m;
        }
    }
    if let Some((fx, fy)) = &problem.force {
        for (r, f) in rhs.iter_mut().zip(assemble_vector_load(mesh, fx, fy)) {
            *r += f;
        }
    }
    for tag in Tag::ALL {
        if let FlowBc::Traction(g) = &problem.boundary[tag.index()] {
            for (r, f) in rhs
                .iter_mut()
                .zip(assemble_vector_boundary_load(mesh, &[tag], |x| g(x)))
            {
                *r += f;
            }
        }
    }

    let (mut ids, mut vals) = dirichlet_data(mesh, &problem.boundary);
    if natural.is_empty() {
        // Enclosed flow: pressure is defined up to a constant; pin one vertex.
        ids.push(dofs.pressure(0));
        vals.push(0.0);
    }
    if rhs.iter().chain(&vals).any(|v| !v.is_finite()) {
        return Err(FlowError::NonFinite);
    }
    k.apply_dirichlet(&mut rhs, &ids, &vals)?;

    let (mut x, iterations) = match problem.solver {
        SolverKind::Lu => (solve_lu(&k, &rhs)?, 0),
        SolverKind::Gmres => {
            let (x, s) = solve_nonsymmetric(&k, &rhs, None, &IterativeOptions::with_tol(problem.tol_rel))?;
            (x, s.iterations)
        }
    };
    for (&d, &v) in ids.iter().zip(&vals) {
        x[d] = v;
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(FlowError::NonFinite);
    }
    let res = norm2(&residual(&k, &x, &rhs)) / norm2(&rhs).max(f64::MIN_POSITIVE);
    let velocity = MiniVelocity::from_flow_vector(mesh, &x);
    let divergence = norm2(&blocks.b.mul_vec(&x[..dofs.velocity_size()]));
    Ok(FlowSolution {
        velocity,
        pressure: x[dofs.velocity_size()..].to_vec(),
        stats: FlowStats {
            iterations,
            residual: res,
            divergence,
            converged: true,
        },
    })
}

/// One implicit Euler step advected by `problem.previous`.
pub fn solve_flow_step(problem: &FlowProblem<'_>) -> Result<FlowSolution, FlowError> {
    problem.validate()?;
    let advect = problem.convection.then_some(&problem.previous);
    solve_oseen_system(problem, advect, 1.0 / problem.dt)
}

/// Picard iteration on the stationary problem, starting from the Stokes
/// solution. Falls back to the zero field, with a warning, if it does not
/// reach a relative increment of 1e-8 within 50 sweeps.
pub fn solve_flow_stationary(problem: &FlowProblem<'_>) -> Result<FlowSolution, FlowError> {
    const MAX_PICARD: usize = 50;
    const TOL: f64 = 1e-8;
    const RELAXATION: f64 = 0.5;
    if problem.nu.min() <= 0.0 {
        return Err(FlowError::Invalid("viscosity must be positive".into()));
    }
    let mut current = solve_oseen_system(problem, None, 0.0)?;
    if !problem.convection {
        current.stats.iterations = 1;
        return Ok(current);
    }
    for it in 1..=MAX_PICARD {
        let next = solve_oseen_system(problem, Some(&current.velocity), 0.0)?;
        let a = next.velocity.to_vector();
        let diff: Vec<f64> = a.iter().zip(current.velocity.to_vector()).map(|(x, y)| x - y).collect();
        let increment = norm2(&diff);
        let scale = norm2(&a);
        if increment <= TOL * scale || scale == 0.0 {
            current = next;
            current.stats.iterations = it;
            return Ok(current);
        }
        if !increment.is_finite() {
            break;
        }
        current = relax(&current, &next, RELAXATION);
    }
    log::warn!("stationary flow iteration did not converge; starting from rest");
    let mut zero = FlowSolution::zeros(problem.mesh);
    zero.stats.iterations = MAX_PICARD;
    zero.stats.converged = false;
    Ok(zero)
}

/// `ω·new + (1 − ω)·old`; affine combinations keep the Dirichlet data and
/// the discrete divergence constraint.
fn relax(old: &FlowSolution, new: &FlowSolution, omega: f64) -> FlowSolution {
    let mix = |a: &[f64], b: &[f64]| {
        a.iter()
            .zip(b)
            .map(|(x, y)| omega * y + (1.0 - omega) * x)
            .collect::<Vec<_>>()
    };
    let mut out = new.clone();
    out.velocity.vx = mix(&old.velocity.vx, &new.velocity.vx);
    out.velocity.vy = mix(&old.velocity.vy, &new.velocity.vy);
    out.pressure = mix(&old.pressure, &new.pressure);
    out
}

/// `ν(θ) D(v):D(v)` at every quadrature point.
pub fn viscous_dissipation(mesh: &Mesh2D, material: &MaterialModel, theta: &[f64], v: &MiniVelocity) -> QuadField {
    QuadField::from_fn(mesh, |t, _, b| {
        let geo = TriangleGeometry::of(mesh, t);
        let g = v.gradient(&geo, mesh.triangles()[t], t, b);
        let off = 0.5 * (g[0][1] + g[1][0]);
        let dd = g[0][0] * g[0][0] + g[1][1] * g[1][1] + 2.0 * off * off;
        let c = cell_values(mesh, theta, t);
        material.nu(b[0] * c[0] + b[1] * c[1] + b[2] * c[2]) * dd
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::dot;
    use crate::mesh::{generate_channel_mesh, GeometrySpec};

    fn channel_bcs(length: f64, height: f64, r: f64) -> [FlowBc; 5] {
        [
            FlowBc::Inflow(builtin_profile_gamma1(height)),
            FlowBc::NoSlip,
            FlowBc::DoNothing,
            FlowBc::NoSlip,
            FlowBc::Inflow(builtin_profile_gamma5(length, r)),
        ]
    }

    fn channel_mesh() -> Mesh2D {
        generate_channel_mesh(&GeometrySpec::new(1.5, 0.5, 0.075, 20, 10)).unwrap()
    }

    #[test]
    fn builtin_profiles() {
        let g1 = builtin_profile_gamma1(0.5);
        assert_eq!(g1([0.0, 0.0]), [0.0, 0.0]);
        assert_eq!(g1([0.0, 0.25]), [0.0625, 0.0]);
        assert_eq!(g1([0.0, 0.5]), [0.0, 0.0]);
        let g5 = builtin_profile_gamma5(1.5, 0.075);
        let a = g5([0.675, 0.5]);
        let b = g5([0.825, 0.5]);
        assert!(a[0].abs() < 1e-15 && a[1].abs() < 1e-15 && b[0].abs() < 1e-15 && b[1].abs() < 1e-15);
        let c = g5([0.75, 0.5]);
        assert_eq!(c[0], 0.0);
        assert!((c[1] + 0.075).abs() < 1e-14);
    }

    #[test]
    fn zero_data_gives_zero_flow() {
        let m = channel_mesh();
        let bcs = [
            FlowBc::NoSlip,
            FlowBc::NoSlip,
            FlowBc::DoNothing,
            FlowBc::NoSlip,
            FlowBc::NoSlip,
        ];
        let mat = MaterialModel::default();
        let theta = vec![37.0; m.num_vertices()];
        let p = FlowProblem::from_material(&m, &mat, &theta, MiniVelocity::zeros(&m), 0.01, bcs);
        let s = solve_flow_step(&p).unwrap();
        assert!(s.velocity.max_abs() < 1e-10);
        assert!(s.pressure.iter().all(|v| v.abs() < 1e-10));
        let st = solve_flow_stationary(&p).unwrap();
        assert!(st.velocity.max_abs() < 1e-10 && st.stats.converged);
    }

    #[test]
    fn rigid_translation_in_enclosed_box() {
        let m = generate_channel_mesh(&GeometrySpec::new(1.0, 1.0, 0.25, 8, 8)).unwrap();
        let c: VectorFn = Arc::new(|_| [1.0, 0.0]);
        let bcs: [FlowBc; 5] = std::array::from_fn(|_| FlowBc::Inflow(c.clone()));
        let p = FlowProblem {
            mesh: &m,
            nu: QuadField::constant(&m, 0.01),
            force: None,
            previous: MiniVelocity::constant(&m, [1.0, 0.0]),
            dt: 0.1,
            boundary: bcs,
            convection: true,
            solver: SolverKind::Lu,
            tol_rel: 1e-8,
        };
        let s = solve_flow_step(&p).unwrap();
        for v in 0..m.num_vertices() {
            let u = s.velocity.vertex_value(v);
            assert!((u[0] - 1.0).abs() < 1e-8 && u[1].abs() < 1e-8);
        }
        for t in 0..m.num_triangles() {
            assert!(s.velocity.vx[m.num_vertices() + t].abs() < 1e-8);
        }
        assert!(s.divergence_ok());
    }

    #[test]
    fn channel_step_satisfies_contracts() {
        let m = channel_mesh();
        let mat = MaterialModel::default();
        let theta = vec![37.0; m.num_vertices()];
        let bcs = channel_bcs(1.5, 0.5, 0.075);
        let p = FlowProblem::from_material(&m, &mat, &theta, MiniVelocity::zeros(&m), 0.01, bcs.clone());
        let s = solve_flow_step(&p).unwrap();
        assert!(s.divergence_ok(), "div {}", s.stats.divergence);
        assert!(s.stats.residual < 1e-10);
        for v in m.vertices_on(&[Tag::Gamma1]) {
            let y = m.vertices()[v][1];
            let u = s.velocity.vertex_value(v);
            assert_eq!(u, [y * (0.5 - y), 0.0]);
        }
        // GMRES path agrees with LU.
        let mut pg = p.clone();
        pg.solver = SolverKind::Gmres;
        let g = solve_flow_step(&pg).unwrap();
        let (a, b) = (s.velocity.to_vector(), g.velocity.to_vector());
        let diff: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-6 * s.velocity.max_abs(), "{diff}");
    }

    #[test]
    fn stationary_channel_flow_peaks_on_inflow_axis() {
        let m = channel_mesh();
        let mat = MaterialModel::default();
        let theta = vec![37.0; m.num_vertices()];
        let p = FlowProblem::from_material(
            &m,
            &mat,
            &theta,
            MiniVelocity::zeros(&m),
            1.0,
            channel_bcs(1.5, 0.5, 0.075),
        );
        let s = solve_flow_stationary(&p).unwrap();
        assert!(s.stats.converged && s.divergence_ok());
        let (mut best, mut at) = (0.0, 0);
        for v in 0..m.num_vertices() {
            let u = s.velocity.vertex_value(v);
            let n = u[0].hypot(u[1]);
            if n > best {
                best = n;
                at = v;
            }
        }
        assert!(best > 0.05);
        assert!(
            (m.vertices()[at][1] - 0.25).abs() <= 0.05 + 1e-12,
            "{:?}",
            m.vertices()[at]
        );
    }

    #[test]
    fn stokes_stationary_matches_time_marching() {
        let m = generate_channel_mesh(&GeometrySpec::new(1.5, 0.5, 0.075, 20, 6)).unwrap();
        let bcs = channel_bcs(1.5, 0.5, 0.075);
        let mut p = FlowProblem {
            mesh: &m,
            nu: QuadField::constant(&m, 0.2),
            force: None,
            previous: MiniVelocity::zeros(&m),
            dt: 0.05,
            boundary: bcs,
            convection: false,
            solver: SolverKind::Lu,
            tol_rel: 1e-8,
        };
        let steady = solve_flow_stationary(&p).unwrap();
        for _ in 0..200 {
            let s = solve_flow_step(&p).unwrap();
            p.previous = s.velocity;
        }
        let a = steady.velocity.to_vector();
        let b = p.previous.to_vector();
        let diff = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-6, "{diff}");
    }

    #[test]
    fn stokes_energy_decays() {
        let m = generate_channel_mesh(&GeometrySpec::new(1.0, 1.0, 0.25, 8, 8)).unwrap();
        let v0 = MiniVelocity::interpolate(&m, |p| {
            let s = |t: f64| t * t * (1.0 - t) * (1.0 - t);
            let ds = |t: f64| 2.0 * t * (1.0 - t) * (1.0 - 2.0 * t);
            [s(p[0]) * ds(p[1]), -ds(p[0]) * s(p[1])]
        });
        let mut p = FlowProblem {
            mesh: &m,
            nu: QuadField::constant(&m, 0.05),
            force: None,
            previous: v0,
            dt: 0.1,
            boundary: std::array::from_fn(|_| FlowBc::NoSlip),
            convection: false,
            solver: SolverKind::Lu,
            tol_rel: 1e-8,
        };
        let mass = assemble_mini_blocks(&m, &p.nu, None, &[]).mass;
        let energy = |v: &MiniVelocity| {
            let x = v.to_vector();
            dot(&x, &mass.mul_vec(&x))
        };
        let mut prev = energy(&p.previous);
        assert!(prev > 0.0);
        for _ in 0..10 {
            let s = solve_flow_step(&p).unwrap();
            let e = energy(&s.velocity);
            assert!(e <= prev * (1.0 + 1e-12), "{e} > {prev}");
            prev = e;
            p.previous = s.velocity;
        }
    }

    #[test]
    fn dissipation_values() {
        let m = channel_mesh();
        let mat = MaterialModel::default();
        let theta = vec![37.0; m.num_vertices()];
        let zero = viscous_dissipation(&m, &mat, &theta, &MiniVelocity::zeros(&m));
        assert!(zero.values().iter().all(|&v| v == 0.0));
        let rot = viscous_dissipation(&m, &mat, &theta, &MiniVelocity::interpolate(&m, |p| [-p[1], p[0]]));
        assert!(rot.max().abs() < 1e-20);
        let shear = viscous_dissipation(&m, &mat, &theta, &MiniVelocity::interpolate(&m, |p| [p[1], 0.0]));
        assert!(shear.values().iter().all(|v| (v - 0.0021 * 0.5).abs() < 1e-15));
    }
}
