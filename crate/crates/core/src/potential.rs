//! Electric potential: `−div(σ ∇φ) = f` with grounded, prescribed or flux
//! boundaries.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::fem::{
    assemble_boundary_load, assemble_scalar_load, assemble_stiffness, cell_values, p1_at_quad, p1_gradient, QuadField,
    ScalarFn,
};
use crate::linalg::{solve_cg, LinalgError, SolveStats};
use crate::materials::MaterialModel;
use crate::mesh::{Mesh2D, Tag};

#[derive(Clone)]
pub enum PotentialBc {
    /// φ = 0.
    Grounded,
    /// φ = value(x).
    Dirichlet(ScalarFn),
    /// σ∇φ·n = g(x); `Flux` with zero is the natural condition.
    Flux(ScalarFn),
}

impl PotentialBc {
    pub fn flux(g: f64) -> Self {
        PotentialBc::Flux(Arc::new(move |_| g))
    }

    pub fn is_dirichlet(&self) -> bool {
        !matches!(self, PotentialBc::Flux(_))
    }
}

impl fmt::Debug for PotentialBc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PotentialBc::Grounded => write!(f, "Grounded"),
            PotentialBc::Dirichlet(_) => write!(f, "Dirichlet(..)"),
            PotentialBc::Flux(_) => write!(f, "Flux(..)"),
        }
    }
}

#[derive(Debug, Error)]
pub enum PotentialError {
    #[error("potential problem has no Dirichlet boundary")]
    NoDirichlet,
    #[error("non-finite input to the potential solve")]
    NonFinite,
    #[error(transparent)]
    Solver(#[from] LinalgError),
}

#[derive(Debug, Clone)]
pub struct PotentialProblem<'a> {
    pub mesh: &'a Mesh2D,
    /// Per-cell mean conductivity.
    pub conductivity: Vec<f64>,
    /// Condition per tag, indexed by `Tag::index`.
    pub boundary: [PotentialBc; 5],
    pub source: Option<QuadField>,
    pub tol_rel: f64,
    pub max_iter: usize,
}

impl<'a> PotentialProblem<'a> {
    /// Flux `g` on Γ5, grounded elsewhere, σ from the temperature field.
    pub fn electrode(mesh: &'a Mesh2D, material: &MaterialModel, theta: &[f64], g: f64) -> Self {
        let mut boundary: [PotentialBc; 5] = std::array::from_fn(|_| PotentialBc::Grounded);
        boundary[Tag::Gamma5.index()] = PotentialBc::flux(g);
        Self {
            mesh,
            conductivity: conductivity_cells(mesh, material, theta),
            boundary,
            source: None,
            tol_rel: 1e-10,
            max_iter: 20 * mesh.num_vertices() + 100,
        }
    }

    pub fn with_conductivity(mesh: &'a Mesh2D, conductivity: Vec<f64>, boundary: [PotentialBc; 5]) -> Self {
        Self {
            mesh,
            conductivity,
            boundary,
            source: None,
            tol_rel: 1e-10,
            max_iter: 20 * mesh.num_vertices() + 100,
        }
    }
}

/// Cell means of σ(θ) sampled at quadrature points.
pub fn conductivity_cells(mesh: &Mesh2D, material: &MaterialModel, theta: &[f64]) -> Vec<f64> {
    p1_at_quad(mesh, theta).map(|t| material.sigma(t)).cell_means()
}

#[derive(Debug, Clone)]
pub struct PotentialSolution {
    pub phi: Vec<f64>,
    pub stats: SolveStats,
}

pub fn solve_potential(problem: &PotentialProblem<'_>) -> Result<PotentialSolution, PotentialError> {
    let mesh = problem.mesh;
    if !problem.boundary.iter().any(PotentialBc::is_dirichlet) {
        return Err(PotentialError::NoDirichlet);
    }
    if problem.conductivity.iter().any(|c| !c.is_finite()) {
        return Err(PotentialError::NonFinite);
    }
    let mut a = assemble_stiffness(mesh, &problem.conductivity);
    let mut rhs = match &problem.source {
        Some(f) => assemble_scalar_load(mesh, f),
        None => vec![0.0; mesh.num_vertices()],
    };
    for tag in Tag::ALL {
        if let PotentialBc::Flux(g) = &problem.boundary[tag.index()] {
            let load = assemble_boundary_load(mesh, &[tag], |x| g(x));
            for (r, l) in rhs.iter_mut().zip(load) {
                *r += l;
            }
        }
    }
    // Later tags override earlier ones at shared corners; Dirichlet always wins over flux.
    let mut fixed: Vec<Option<f64>> = vec![None; mesh.num_vertices()];
    for tag in Tag::ALL {
        let value: Option<&dyn Fn([f64; 2]) -> f64> = match &problem.boundary[tag.index()] {
            PotentialBc::Grounded => Some(&|_| 0.0),
            PotentialBc::Dirichlet(f) => Some(f.as_ref()),
            PotentialBc::Flux(_) => None,
        };
        if let Some(f) = value {
            for v in mesh.vertices_on(&[tag]) {
                fixed[v] = Some(f(mesh.vertices()[v]));
            }
        }
    }
    let (dofs, vals): (Vec<usize>, Vec<f64>) = fixed.iter().enumerate().filter_map(|(i, v)| v.map(|v| (i, v))).unzip();
    if vals.iter().chain(&rhs).any(|v| !v.is_finite()) {
        return Err(PotentialError::NonFinite);
    }
    a.apply_dirichlet(&mut rhs, &dofs, &vals)?;
    let (mut phi, stats) = solve_cg(&a, &rhs, None, problem.tol_rel, problem.max_iter)?;
    for (&d, &v) in dofs.iter().zip(&vals) {
        phi[d] = v;
    }
    Ok(PotentialSolution { phi, stats })
}

/// `σ(θ)|∇φ|²` at every quadrature point.
pub fn joule_density(mesh: &Mesh2D, material: &MaterialModel, theta: &[f64], phi: &[f64]) -> QuadField {
    QuadField::from_fn(mesh, |t, _, b| {
        let g = p1_gradient(mesh, phi, t);
        let c = cell_values(mesh, theta, t);
        let th = b[0] * c[0] + b[1] * c[1] + b[2] * c[2];
        material.sigma(th) * (g[0] * g[0] + g[1] * g[1])
    })
}
