//! Temperature: implicit Euler advection-diffusion with Robin, Dirichlet or
//! insulated boundaries and entropy-viscosity stabilization.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fem::{
    assemble_advection, assemble_boundary_load, assemble_boundary_mass, assemble_mass, assemble_scalar_load,
    assemble_stiffness, cell_values, interior_rule, p1_at_quad, MiniVelocity, QuadField, SpaceTimeFn, TriangleGeometry,
};
use crate::linalg::{solve_nonsymmetric, CooBuilder, IterativeOptions, LinalgError, SolveStats, SparseMatrix};
use crate::materials::MaterialModel;
use crate::mesh::{Mesh2D, Tag};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StabilizationParams {
    /// Entropy exponent α ∈ [1, 2].
    pub alpha_exp: f64,
    pub beta: f64,
    pub c_r: f64,
    /// Temperature ranges at or below this are treated as flat.
    pub var_floor: f64,
    pub enabled: bool,
}

impl Default for StabilizationParams {
    fn default() -> Self {
        Self {
            alpha_exp: 2.0,
            beta: 0.1,
            c_r: 1.0,
            var_floor: 1e-10,
            enabled: true,
        }
    }
}

impl StabilizationParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(1.0..=2.0).contains(&self.alpha_exp) {
            return Err(format!("alpha_exp must lie in [1, 2], got {}", self.alpha_exp));
        }
        if !(self.beta > 0.0) {
            return Err(format!("beta must be positive, got {}", self.beta));
        }
        if !(self.c_r > 0.0) {
            return Err(format!("c_r must be positive, got {}", self.c_r));
        }
        if !(self.var_floor >= 0.0) {
            return Err(format!("var_floor must be nonnegative, got {}", self.var_floor));
        }
        Ok(())
    }
}

#[derive(Clone)]
pub enum HeatBc {
    /// `η∇θ·n + α(θ − θ_l) = 0`.
    Robin {
        alpha: f64,
        ambient: SpaceTimeFn,
    },
    Dirichlet(SpaceTimeFn),
    Insulated,
}

impl HeatBc {
    pub fn robin(alpha: f64, ambient: f64) -> Self {
        HeatBc::Robin {
            alpha,
            ambient: Arc::new(move |_, _| ambient),
        }
    }

    pub fn dirichlet(value: f64) -> Self {
        HeatBc::Dirichlet(Arc::new(move |_, _| value))
    }
}

impl fmt::Debug for HeatBc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HeatBc::Robin { alpha, .. } => write!(f, "Robin {{ alpha: {alpha}, .. }}"),
            HeatBc::Dirichlet(_) => write!(f, "Dirichlet(..)"),
            HeatBc::Insulated => write!(f, "Insulated"),
        }
    }
}

#[derive(Debug, Error)]
pub enum HeatError {
    #[error("invalid heat problem: {0}")]
    Invalid(String),
    #[error("non-finite data in the heat solve")]
    NonFinite,
    #[error(transparent)]
    Solver(#[from] LinalgError),
}

#[inline]
fn pow_abs(x: f64, e: f64) -> f64 {
    if e == 0.0 {
        1.0
    } else if e == 1.0 {
        x
    } else {
        x.abs().powf(e)
    }
}

/// Per-cell `‖R_α‖_{L∞(K)}` over the interior quadrature points.
///
/// `theta1`, `theta2` are the two latest levels, `gamma` the total heat
/// source. The elementwise diffusion Laplacian of a P1 field is zero and is
/// left out.
#[allow(clippy::too_many_arguments)]
pub fn entropy_residual(
    mesh: &Mesh2D,
    material: &MaterialModel,
    theta1: &[f64],
    theta2: &[f64],
    velocity: &MiniVelocity,
    gamma: &QuadField,
    dt: f64,
    alpha: f64,
) -> Vec<f64> {
    let rule = interior_rule();
    (0..mesh.num_triangles())
        .into_par_iter()
        .map(|t| {
            let tri = mesh.triangles()[t];
            let geo = TriangleGeometry::of(mesh, t);
            let c1 = cell_values(mesh, theta1, t);
            let c2 = cell_values(mesh, theta2, t);
            let grad = geo.gradient(c1);
            let grad2 = grad[0] * grad[0] + grad[1] * grad[1];
            let mut worst: f64 = 0.0;
            for (q, b) in rule.points.iter().enumerate() {
                let th1 = b[0] * c1[0] + b[1] * c1[1] + b[2] * c1[2];
                let th2 = b[0] * c2[0] + b[1] * c2[1] + b[2] * c2[2];
                let v = velocity.eval(tri, t, *b);
                let time = (pow_abs(th1, alpha) - pow_abs(th2, alpha)) / (alpha * dt);
                let adv = pow_abs(th1, alpha - 1.0) * (v[0] * grad[0] + v[1] * grad[1]);
                let diff = if alpha != 1.0 {
                    material.eta(th1) * (alpha - 1.0) * pow_abs(th1, alpha - 2.0) * grad2
                } else {
                    0.0
                };
                let src = gamma.get(t, q) * pow_abs(th1, alpha - 1.0);
                worst = worst.max((time + adv + diff - src).abs());
            }
            worst
        })
        .collect()
}

/// Cellwise `η̃_K`. `residual = None` selects the startup value `β‖v‖_K h_K`.
pub fn artificial_viscosity(
    mesh: &Mesh2D,
    residual: Option<&[f64]>,
    theta: &[f64],
    velocity: &MiniVelocity,
    params: &StabilizationParams,
) -> Vec<f64> {
    let vk = velocity.cell_max_norm(mesh);
    let vmax = vk.iter().copied().fold(0.0, f64::max);
    let (lo, hi) = theta
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    let var = hi - lo;
    let a = params.alpha_exp;
    let c = params.c_r * vmax * var * mesh.domain_diameter().powf(a - 2.0);
    let degenerate = !(var > params.var_floor) || vmax == 0.0 || !(c > 0.0);
    (0..mesh.num_triangles())
        .map(|t| {
            let h = mesh.diameter(t);
            let pre = params.beta * vk[t];
            if vk[t] == 0.0 {
                return 0.0;
            }
            match residual {
                None => pre * h,
                Some(r) if degenerate => {
                    if r[t] > 0.0 {
                        pre * h
                    } else {
                        0.0
                    }
                }
                Some(r) => pre * h.min(h.powf(a) * r[t] / c),
            }
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct HeatProblem<'a> {
    pub mesh: &'a Mesh2D,
    pub material: MaterialModel,
    /// θ^{n−1}.
    pub theta_prev: &'a [f64],
    /// θ^{n−2}; `None` at the first step.
    pub theta_prev2: Option<&'a [f64]>,
    /// Advecting velocity of the solve.
    pub velocity: &'a MiniVelocity,
    /// Velocity used by the residual and the viscosity prefactor.
    pub residual_velocity: &'a MiniVelocity,
    /// Heat source of the step, at quadrature points.
    pub source: QuadField,
    /// Source γ entering the residual.
    pub residual_source: QuadField,
    pub dt: f64,
    /// Time level of the new solution, passed to boundary data.
    pub time: f64,
    pub boundary: [HeatBc; 5],
    pub stabilization: StabilizationParams,
    pub tol_rel: f64,
}

#[derive(Debug, Clone)]
pub struct HeatSolution {
    pub theta: Vec<f64>,
    /// Cellwise artificial viscosity used in the solve.
    pub art_visc: Vec<f64>,
    /// Cellwise residual norms, when two levels were available.
    pub residual: Option<Vec<f64>>,
    pub stats: SolveStats,
}

fn boundary_terms(
    mesh: &Mesh2D,
    boundary: &[HeatBc; 5],
    time: f64,
    matrix: &mut CooBuilder,
    rhs: &mut [f64],
) -> (Vec<usize>, Vec<f64>) {
    for tag in Tag::ALL {
        if let HeatBc::Robin { alpha, ambient } = &boundary[tag.index()] {
            matrix.push_matrix(&assemble_boundary_mass(mesh, &[tag]), 0, 0, *alpha);
            let load = assemble_boundary_load(mesh, &[tag], |x| ambient(x, time));
            for (r, l) in rhs.iter_mut().zip(load) {
                *r += alpha * l;
            }
        }
    }
    let mut fixed: Vec<Option<f64>> = vec![None; mesh.num_vertices()];
    for tag in Tag::ALL {
        if let HeatBc::Dirichlet(f) = &boundary[tag.index()] {
            for v in mesh.vertices_on(&[tag]) {
                fixed[v] = Some(f(mesh.vertices()[v], time));
            }
        }
    }
    fixed.iter().enumerate().filter_map(|(i, v)| v.map(|v| (i, v))).unzip()
}

fn finish(
    mut k: SparseMatrix,
    mut rhs: Vec<f64>,
    dofs: &[usize],
    vals: &[f64],
    guess: &[f64],
    tol: f64,
) -> Result<(Vec<f64>, SolveStats), HeatError> {
    if rhs.iter().chain(vals).any(|v| !v.is_finite()) || k.values().iter().any(|v| !v.is_finite()) {
        return Err(HeatError::NonFinite);
    }
    k.apply_dirichlet(&mut rhs, dofs, vals)?;
    let mut x0 = guess.to_vec();
    for (&d, &v) in dofs.iter().zip(vals) {
        x0[d] = v;
    }
    let (mut x, stats) = solve_nonsymmetric(&k, &rhs, Some(&x0), &IterativeOptions::with_tol(tol))?;
    for (&d, &v) in dofs.iter().zip(vals) {
        x[d] = v;
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(HeatError::NonFinite);
    }
    Ok((x, stats))
}

/// One implicit Euler step with diffusion `η(θ^{n−1}) + η̃`.
pub fn solve_heat_step(p: &HeatProblem<'_>) -> Result<HeatSolution, HeatError> {
    let mesh = p.mesh;
    if !(p.dt > 0.0) {
        return Err(HeatError::Invalid(format!("time step must be positive, got {}", p.dt)));
    }
    if p.theta_prev.iter().any(|v| !v.is_finite()) {
        return Err(HeatError::NonFinite);
    }
    let (art_visc, residual) = if p.stabilization.enabled {
        let res = p.theta_prev2.map(|prev2| {
            entropy_residual(
                mesh,
                &p.material,
                p.theta_prev,
                prev2,
                p.residual_velocity,
                &p.residual_source,
                p.dt,
                p.stabilization.alpha_exp,
            )
        });
        let visc = artificial_viscosity(
            mesh,
            res.as_deref(),
            p.theta_prev,
            p.residual_velocity,
            &p.stabilization,
        );
        (visc, res)
    } else {
        (vec![0.0; mesh.num_triangles()], None)
    };

    let eta = p1_at_quad(mesh, p.theta_prev).map(|t| p.material.eta(t)).cell_means();
    let coeff: Vec<f64> = eta.iter().zip(&art_visc).map(|(a, b)| a + b).collect();
    let n = mesh.num_vertices();
    let mass = assemble_mass(mesh);
    let mut c = CooBuilder::new(n, n);
    c.push_matrix(&mass, 0, 0, 1.0 / p.dt);
    c.push_matrix(&assemble_stiffness(mesh, &coeff), 0, 0, 1.0);
    c.push_matrix(&assemble_advection(mesh, p.velocity), 0, 0, 1.0);
    let mut rhs: Vec<f64> = mass.mul_vec(p.theta_prev).iter().map(|m| m / p.dt).collect();
    for (r, l) in rhs.iter_mut().zip(assemble_scalar_load(mesh, &p.source)) {
        *r += l;
    }
    let (dofs, vals) = boundary_terms(mesh, &p.boundary, p.time, &mut c, &mut rhs);
    let (theta, stats) = finish(c.build(), rhs, &dofs, &vals, p.theta_prev, p.tol_rel)?;
    Ok(HeatSolution {
        theta,
        art_visc,
        residual,
        stats,
    })
}

/// Steady problem with coefficients frozen at `theta_ref` and no
/// artificial viscosity.
pub fn solve_heat_stationary(
    mesh: &Mesh2D,
    material: &MaterialModel,
    theta_ref: &[f64],
    velocity: &MiniVelocity,
    source: &QuadField,
    boundary: &[HeatBc; 5],
    time: f64,
    tol_rel: f64,
) -> Result<HeatSolution, HeatError> {
    let eta = p1_at_quad(mesh, theta_ref).map(|t| material.eta(t)).cell_means();
    let n = mesh.num_vertices();
    let mut c = CooBuilder::new(n, n);
    c.push_matrix(&assemble_stiffness(mesh, &eta), 0, 0, 1.0);
    c.push_matrix(&assemble_advection(mesh, velocity), 0, 0, 1.0);
    let mut rhs = assemble_scalar_load(mesh, source);
    let (dofs, vals) = boundary_terms(mesh, boundary, time, &mut c, &mut rhs);
    if dofs.is_empty()
        && !boundary
            .iter()
            .any(|b| matches!(b, HeatBc::Robin { alpha, .. } if *alpha > 0.0))
    {
        return Err(HeatError::Invalid(
            "steady heat problem needs a Dirichlet or Robin boundary".into(),
        ));
    }
    let (theta, stats) = finish(c.build(), rhs, &dofs, &vals, theta_ref, tol_rel)?;
    Ok(HeatSolution {
        theta,
        art_visc: vec![0.0; mesh.num_triangles()],
        residual: None,
        stats,
    })
}
