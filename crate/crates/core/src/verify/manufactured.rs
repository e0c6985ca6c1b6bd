//! Manufactured solutions for the potential, heat and Oseen solvers.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};

use super::{p1_errors, velocity_errors, RateReport};
use crate::fem::{interpolate_p1, MiniVelocity, QuadField, SpaceTimeFn};
use crate::flow::{solve_flow_step, FlowBc, FlowProblem};
use crate::heat::{solve_heat_step, HeatBc, HeatProblem, StabilizationParams};
use crate::linalg::{norm2, SolverKind};
use crate::materials::{Law, MaterialModel};
use crate::mesh::{generate_channel_mesh, GeometrySpec, Mesh2D, Tag};
use crate::potential::{solve_potential, PotentialBc, PotentialProblem};

/// Field components at `(x, t)`: `[φ]`, `[θ]` or `[u₁, u₂, p]`.
pub type FieldFn = Arc<dyn Fn([f64; 2], f64) -> Vec<f64> + Send + Sync>;
pub type GradFn = Arc<dyn Fn([f64; 2], f64) -> Vec<[f64; 2]> + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Physics {
    /// `−σΔφ = f`.
    Potential,
    /// `θ_t − ηΔθ + a·∇θ = f`.
    Heat,
    /// `−div(νD(u)) + (u·∇)u + ∇p = f`, `div u = 0`.
    Oseen,
}

#[derive(Clone)]
pub struct ManufacturedCase {
    pub name: String,
    pub physics: Physics,
    pub exact: FieldFn,
    pub gradient: GradFn,
    pub source: FieldFn,
    /// σ, η or ν.
    pub coefficient: f64,
    /// Advecting velocity of the heat case.
    pub advection: [f64; 2],
    /// Robin coefficient on the Robin tags of the heat case.
    pub robin_alpha: f64,
    /// `(L, H, r)` of the channel the case lives on.
    pub geometry: (f64, f64, f64),
    /// Final time and step of the heat case.
    pub final_time: f64,
    pub dt: f64,
}

pub const POTENTIAL_LEVELS: [(usize, usize); 4] = [(16, 8), (32, 16), (64, 32), (128, 64)];
pub const OSEEN_LEVELS: [(usize, usize); 4] = [(8, 8), (16, 16), (32, 32), (64, 64)];
/// Vertex jitter of the Oseen meshes, as a fraction of the spacing.
pub const OSEEN_JITTER: f64 = 0.25;
pub const HEAT_TEMPORAL_DTS: [f64; 4] = [0.2, 0.1, 0.05, 0.025];

/// Heat tags receiving Robin data; the rest are Dirichlet.
const HEAT_ROBIN: [Tag; 2] = [Tag::Gamma2, Tag::Gamma3];

/// φ* = sin(πx) sin(πy), σ = 1, Dirichlet data everywhere.
pub fn potential_case() -> ManufacturedCase {
    let sigma = 1.0;
    ManufacturedCase {
        name: "potential".into(),
        physics: Physics::Potential,
        exact: Arc::new(|p, _| vec![(PI * p[0]).sin() * (PI * p[1]).sin()]),
        gradient: Arc::new(|p, _| {
            vec![[
                PI * (PI * p[0]).cos() * (PI * p[1]).sin(),
                PI * (PI * p[0]).sin() * (PI * p[1]).cos(),
            ]]
        }),
        source: Arc::new(move |p, _| vec![2.0 * PI * PI * sigma * (PI * p[0]).sin() * (PI * p[1]).sin()]),
        coefficient: sigma,
        advection: [0.0, 0.0],
        robin_alpha: 0.0,
        geometry: (1.0, 0.5, 0.25),
        final_time: 0.0,
        dt: 0.0,
    }
}

/// θ* = sin(πx) sin(πy) e^{−t} with η = 1/2, a = (1, 0).
pub fn heat_case() -> ManufacturedCase {
    let eta = 0.5;
    let a = [1.0, 0.0];
    ManufacturedCase {
        name: "heat".into(),
        physics: Physics::Heat,
        exact: Arc::new(|p, t| vec![(PI * p[0]).sin() * (PI * p[1]).sin() * (-t).exp()]),
        gradient: Arc::new(|p, t| {
            let e = (-t).exp();
            vec![[
                PI * (PI * p[0]).cos() * (PI * p[1]).sin() * e,
                PI * (PI * p[0]).sin() * (PI * p[1]).cos() * e,
            ]]
        }),
        source: Arc::new(move |p, t| {
            let (sx, cx, sy, cy) = (
                (PI * p[0]).sin(),
                (PI * p[0]).cos(),
                (PI * p[1]).sin(),
                (PI * p[1]).cos(),
            );
            let e = (-t).exp();
            let th = sx * sy * e;
            vec![-th + 2.0 * PI * PI * eta * th + a[0] * PI * cx * sy * e + a[1] * PI * sx * cy * e]
        }),
        coefficient: eta,
        advection: a,
        robin_alpha: 1.0,
        geometry: (1.0, 0.5, 0.25),
        final_time: 0.05,
        dt: 5e-4,
    }
}

/// Taylor-Green type pair on the unit square, ν = 1.
pub fn oseen_case() -> ManufacturedCase {
    let nu = 1.0;
    ManufacturedCase {
        name: "oseen".into(),
        physics: Physics::Oseen,
        exact: Arc::new(|p, _| {
            let (sx, cx, sy, cy) = (
                (PI * p[0]).sin(),
                (PI * p[0]).cos(),
                (PI * p[1]).sin(),
                (PI * p[1]).cos(),
            );
            vec![sx * cy, -cx * sy, cx * cy]
        }),
        gradient: Arc::new(|p, _| {
            let (sx, cx, sy, cy) = (
                (PI * p[0]).sin(),
                (PI * p[0]).cos(),
                (PI * p[1]).sin(),
                (PI * p[1]).cos(),
            );
            vec![
                [PI * cx * cy, -PI * sx * sy],
                [PI * sx * sy, -PI * cx * cy],
                [-PI * sx * cy, -PI * cx * sy],
            ]
        }),
        source: Arc::new(move |p, _| {
            let (sx, cx, sy, cy) = (
                (PI * p[0]).sin(),
                (PI * p[0]).cos(),
                (PI * p[1]).sin(),
                (PI * p[1]).cos(),
            );
            // −(ν/2)Δu = νπ²u; (u·∇)u = π(sx cx, sy cy); ∇p.
            vec![
                nu * PI * PI * sx * cy + PI * sx * cx - PI * sx * cy,
                -nu * PI * PI * cx * sy + PI * sy * cy - PI * cx * sy,
            ]
        }),
        coefficient: nu,
        advection: [0.0, 0.0],
        robin_alpha: 0.0,
        geometry: (1.0, 1.0, 0.25),
        final_time: 0.0,
        dt: 0.0,
    }
}

impl ManufacturedCase {
    /// Same case with `offset` added to every source component.
    pub fn with_source_offset(&self, offset: f64) -> Self {
        let base = self.source.clone();
        Self {
            name: format!("{} (source {offset:+})", self.name),
            source: Arc::new(move |p, t| base(p, t).into_iter().map(|v| v + offset).collect()),
            ..self.clone()
        }
    }

    /// Constant exact fields with zero source.
    pub fn constant(physics: Physics, value: f64) -> Self {
        let n = match physics {
            Physics::Oseen => 3,
            _ => 1,
        };
        let src = if physics == Physics::Oseen { 2 } else { 1 };
        Self {
            name: "constant".into(),
            physics,
            exact: Arc::new(move |_, _| vec![value; n]),
            gradient: Arc::new(move |_, _| vec![[0.0; 2]; n]),
            source: Arc::new(move |_, _| vec![0.0; src]),
            coefficient: 0.7,
            advection: [0.3, -0.2],
            robin_alpha: 1.0,
            geometry: (1.0, 1.0, 0.25),
            final_time: 0.1,
            dt: 0.01,
        }
    }

    pub fn mesh(&self, nx: usize, ny: usize) -> Mesh2D {
        let (l, h, r) = self.geometry;
        generate_channel_mesh(&GeometrySpec::new(l, h, r, nx, ny)).expect("manufactured meshes are admissible")
    }

    /// `mesh(nx, ny)` with every interior vertex moved by up to
    /// `amplitude` times the grid spacing in each direction.
    pub fn perturbed_mesh(&self, nx: usize, ny: usize, amplitude: f64, seed: u64) -> Mesh2D {
        let base = self.mesh(nx, ny);
        let (l, h, _) = self.geometry;
        let (dx, dy) = (l / nx as f64, h / ny as f64);
        let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
        let eps = 1e-12 * l.max(h);
        let vertices = base
            .vertices()
            .iter()
            .map(|&[x, y]| {
                let interior = x > eps && x < l - eps && y > eps && y < h - eps;
                if interior {
                    [
                        x + amplitude * dx * rng.gen_range(-1.0..1.0),
                        y + amplitude * dy * rng.gen_range(-1.0..1.0),
                    ]
                } else {
                    [x, y]
                }
            })
            .collect();
        Mesh2D::new(vertices, base.triangles().to_vec(), base.boundary_edges().to_vec())
            .expect("perturbation below a third of the spacing keeps triangles valid")
    }

    fn scalar(&self, p: [f64; 2], t: f64) -> f64 {
        (self.exact)(p, t)[0]
    }

    /// Outward normal of a side of the channel box.
    fn side_normal(tag: Tag) -> [f64; 2] {
        match tag {
            Tag::Gamma1 => [-1.0, 0.0],
            Tag::Gamma2 => [0.0, -1.0],
            Tag::Gamma3 => [1.0, 0.0],
            Tag::Gamma4 | Tag::Gamma5 => [0.0, 1.0],
        }
    }

    /// Robin ambient `θ_l = θ* + (η/α)∇θ*·n`.
    pub fn robin_ambient(&self, tag: Tag) -> SpaceTimeFn {
        let (ex, gr) = (self.exact.clone(), self.gradient.clone());
        let k = self.coefficient / self.robin_alpha;
        let n = Self::side_normal(tag);
        Arc::new(move |p, t| {
            let g = gr(p, t)[0];
            ex(p, t)[0] + k * (g[0] * n[0] + g[1] * n[1])
        })
    }

    /// `(νD(u*) − p* I) n` on a side of the box.
    pub fn traction_fn(&self, tag: Tag) -> Arc<dyn Fn([f64; 2]) -> [f64; 2] + Send + Sync> {
        let (ex, gr) = (self.exact.clone(), self.gradient.clone());
        let nu = self.coefficient;
        let n = Self::side_normal(tag);
        Arc::new(move |p| {
            let g = gr(p, 0.0);
            let pr = ex(p, 0.0)[2];
            let d = [
                [g[0][0], 0.5 * (g[0][1] + g[1][0])],
                [0.5 * (g[0][1] + g[1][0]), g[1][1]],
            ];
            [
                nu * (d[0][0] * n[0] + d[0][1] * n[1]) - pr * n[0],
                nu * (d[1][0] * n[0] + d[1][1] * n[1]) - pr * n[1],
            ]
        })
    }

    /// Applies the strong operator to the exact fields by central differences.
    fn strong_operator(&self, p: [f64; 2], t: f64) -> Vec<f64> {
        const H: f64 = 1e-4;
        let f = |c: usize, dx: f64, dy: f64| (self.exact)([p[0] + dx, p[1] + dy], t)[c];
        let lap =
            |c: usize| (f(c, H, 0.0) + f(c, -H, 0.0) + f(c, 0.0, H) + f(c, 0.0, -H) - 4.0 * f(c, 0.0, 0.0)) / (H * H);
        let dx = |c: usize| (f(c, H, 0.0) - f(c, -H, 0.0)) / (2.0 * H);
        let dy = |c: usize| (f(c, 0.0, H) - f(c, 0.0, -H)) / (2.0 * H);
        let dxx = |c: usize| (f(c, H, 0.0) - 2.0 * f(c, 0.0, 0.0) + f(c, -H, 0.0)) / (H * H);
        let dyy = |c: usize| (f(c, 0.0, H) - 2.0 * f(c, 0.0, 0.0) + f(c, 0.0, -H)) / (H * H);
        let dxy = |c: usize| (f(c, H, H) - f(c, H, -H) - f(c, -H, H) + f(c, -H, -H)) / (4.0 * H * H);
        let k = self.coefficient;
        match self.physics {
            Physics::Potential => vec![-k * lap(0)],
            Physics::Heat => {
                const HT: f64 = 1e-5;
                let dt = ((self.exact)(p, t + HT)[0] - (self.exact)(p, t - HT)[0]) / (2.0 * HT);
                let a = self.advection;
                vec![dt - k * lap(0) + a[0] * dx(0) + a[1] * dy(0)]
            }
            Physics::Oseen => {
                let u = (self.exact)(p, t);
                // −div(νD(u)) = −(ν/2)(Δu + ∇ div u)
                let visc_x = -0.5 * k * (lap(0) + dxx(0) + dxy(1));
                let visc_y = -0.5 * k * (lap(1) + dxy(0) + dyy(1));
                vec![
                    visc_x + u[0] * dx(0) + u[1] * dy(0) + dx(2),
                    visc_y + u[0] * dx(1) + u[1] * dy(1) + dy(2),
                ]
            }
        }
    }
}

/// Max over random interior points of `|f − L u*| / (1 + |f|)`.
pub fn finite_difference_source_check(case: &ManufacturedCase, npoints: usize, seed: u64) -> f64 {
    let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
    let (l, h, _) = case.geometry;
    let mut worst: f64 = 0.0;
    for _ in 0..npoints {
        let p = [rng.gen_range(0.05 * l..0.95 * l), rng.gen_range(0.05 * h..0.95 * h)];
        let t = if case.physics == Physics::Heat {
            rng.gen_range(0.1..1.0)
        } else {
            0.0
        };
        let analytic = (case.source)(p, t);
        let strong = case.strong_operator(p, t);
        for (a, s) in analytic.iter().zip(&strong) {
            worst = worst.max((a - s).abs() / (1.0 + a.abs()));
        }
    }
    worst
}

fn potential_level(case: &ManufacturedCase, mesh: &Mesh2D) -> (f64, f64) {
    let ex = case.exact.clone();
    let bc: [PotentialBc; 5] = std::array::from_fn(|_| {
        let ex = ex.clone();
        PotentialBc::Dirichlet(Arc::new(move |p| ex(p, 0.0)[0]))
    });
    let mut problem = PotentialProblem::with_conductivity(mesh, vec![case.coefficient; mesh.num_triangles()], bc);
    problem.source = Some(QuadField::from_fn(mesh, |_, x, _| (case.source)(x, 0.0)[0]));
    problem.tol_rel = 1e-12;
    let s = solve_potential(&problem).expect("manufactured potential solve");
    let g = case.gradient.clone();
    p1_errors(mesh, &s.phi, |p| case.scalar(p, 0.0), |p| g(p, 0.0)[0])
}

fn heat_boundary(case: &ManufacturedCase) -> [HeatBc; 5] {
    Tag::ALL.map(|tag| {
        if HEAT_ROBIN.contains(&tag) {
            HeatBc::Robin {
                alpha: case.robin_alpha,
                ambient: case.robin_ambient(tag),
            }
        } else {
            let ex = case.exact.clone();
            HeatBc::Dirichlet(Arc::new(move |p, t| ex(p, t)[0]))
        }
    })
}

/// Implicit Euler from the interpolant at t = 0 to `case.final_time`.
fn heat_solution(case: &ManufacturedCase, mesh: &Mesh2D, dt: f64) -> Vec<f64> {
    let material = MaterialModel {
        eta_law: Law::Constant {
            value: case.coefficient,
        },
        ..MaterialModel::default()
    };
    let velocity = MiniVelocity::constant(mesh, case.advection);
    let boundary = heat_boundary(case);
    let steps = (case.final_time / dt).round() as usize;
    let mut theta = interpolate_p1(mesh, |p| case.scalar(p, 0.0));
    let zero = QuadField::zeros(mesh);
    for n in 1..=steps {
        let t = n as f64 * dt;
        let problem = HeatProblem {
            mesh,
            material,
            theta_prev: &theta,
            theta_prev2: None,
            velocity: &velocity,
            residual_velocity: &velocity,
            source: QuadField::from_fn(mesh, |_, x, _| (case.source)(x, t)[0]),
            residual_source: zero.clone(),
            dt,
            time: t,
            boundary: boundary.clone(),
            stabilization: StabilizationParams {
                enabled: false,
                ..StabilizationParams::default()
            },
            tol_rel: 1e-12,
        };
        theta = solve_heat_step(&problem).expect("manufactured heat solve").theta;
    }
    theta
}

fn heat_errors(case: &ManufacturedCase, mesh: &Mesh2D, dt: f64) -> (f64, f64) {
    let theta = heat_solution(case, mesh, dt);
    let t = (case.final_time / dt).round() * dt;
    let g = case.gradient.clone();
    p1_errors(mesh, &theta, |p| case.scalar(p, t), |p| g(p, t)[0])
}

/// Velocity L², velocity H¹, pressure L², ‖Bv‖ and ‖v‖.
fn oseen_level(case: &ManufacturedCase, mesh: &Mesh2D) -> [f64; 5] {
    let ex = case.exact.clone();
    let vel = move |p: [f64; 2]| {
        let u = ex(p, 0.0);
        [u[0], u[1]]
    };
    let dirichlet = {
        let vel = vel.clone();
        move || FlowBc::Inflow(Arc::new(vel.clone()))
    };
    let boundary = [
        dirichlet(),
        dirichlet(),
        FlowBc::Traction(case.traction_fn(Tag::Gamma3)),
        dirichlet(),
        dirichlet(),
    ];
    let src = case.source.clone();
    let problem = FlowProblem {
        mesh,
        nu: QuadField::constant(mesh, case.coefficient),
        force: Some((
            QuadField::from_fn(mesh, |_, x, _| src(x, 0.0)[0]),
            QuadField::from_fn(mesh, |_, x, _| src(x, 0.0)[1]),
        )),
        previous: MiniVelocity::interpolate(mesh, &vel),
        dt: 1.0,
        boundary,
        convection: true,
        solver: SolverKind::Lu,
        tol_rel: 1e-10,
    };
    let s = solve_flow_step(&problem).expect("manufactured flow solve");
    let gr = case.gradient.clone();
    let (vl2, vh1) = velocity_errors(mesh, &s.velocity, &vel, |p| {
        let g = gr(p, 0.0);
        [g[0], g[1]]
    });
    let (pl2, _) = p1_errors(
        mesh,
        &s.pressure,
        |p| (case.exact)(p, 0.0)[2],
        |p| (case.gradient)(p, 0.0)[2],
    );
    [vl2, vh1, pl2, s.stats.divergence, norm2(&s.velocity.to_vector())]
}

fn mesh_size(mesh: &Mesh2D) -> f64 {
    mesh.diameters().iter().copied().fold(0.0, f64::max)
}

/// Errors on nested refinements `levels = [(nx, ny), ...]`.
pub fn convergence_study(case: &ManufacturedCase, levels: &[(usize, usize)]) -> RateReport {
    let meshes: Vec<Mesh2D> = levels.iter().map(|&(nx, ny)| case.mesh(nx, ny)).collect();
    convergence_study_on(case, &meshes)
}

/// Errors on caller-supplied meshes, coarse to fine.
pub fn convergence_study_on(case: &ManufacturedCase, meshes: &[Mesh2D]) -> RateReport {
    let mut report = RateReport::new(format!("{} spatial", case.name), meshes.iter().map(mesh_size).collect());
    match case.physics {
        Physics::Potential | Physics::Heat => {
            let errs: Vec<(f64, f64)> = meshes
                .iter()
                .map(|m| match case.physics {
                    Physics::Potential => potential_level(case, m),
                    _ => heat_errors(case, m, case.dt),
                })
                .collect();
            report.push("l2", errs.iter().map(|e| e.0).collect());
            report.push("h1", errs.iter().map(|e| e.1).collect());
        }
        Physics::Oseen => {
            let errs: Vec<[f64; 5]> = meshes.iter().map(|m| oseen_level(case, m)).collect();
            report.push("velocity_l2", errs.iter().map(|e| e[0]).collect());
            report.push("velocity_h1", errs.iter().map(|e| e[1]).collect());
            report.push("pressure_l2", errs.iter().map(|e| e[2]).collect());
            report.monitor("divergence", errs.iter().map(|e| e[3]).collect());
            report.monitor("velocity_norm", errs.iter().map(|e| e[4]).collect());
        }
    }
    report
}

/// Jittered copies of the `levels` meshes, one seed per level.
pub fn perturbed_levels(case: &ManufacturedCase, levels: &[(usize, usize)], amplitude: f64, seed: u64) -> Vec<Mesh2D> {
    levels
        .iter()
        .enumerate()
        .map(|(i, &(nx, ny))| case.perturbed_mesh(nx, ny, amplitude, seed * 100 + i as u64))
        .collect()
}

/// Heat errors at `case.final_time` for several steps on one mesh.
pub fn temporal_study(case: &ManufacturedCase, level: (usize, usize), dts: &[f64], final_time: f64) -> RateReport {
    assert_eq!(case.physics, Physics::Heat);
    let mesh = case.mesh(level.0, level.1);
    let c = ManufacturedCase {
        final_time,
        ..case.clone()
    };
    let mut report = RateReport::new(format!("{} temporal", case.name), dts.to_vec());
    let errs: Vec<(f64, f64)> = dts.iter().map(|&dt| heat_errors(&c, &mesh, dt)).collect();
    report.push("l2", errs.iter().map(|e| e.0).collect());
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sources_match_strong_operators() {
        for case in [potential_case(), heat_case(), oseen_case()] {
            let e = finite_difference_source_check(&case, 50, 7);
            assert!(e < 1e-6, "{}: {e}", case.name);
        }
    }

    #[test]
    fn corrupted_source_is_flagged() {
        for case in [potential_case(), heat_case(), oseen_case()] {
            let e = finite_difference_source_check(&case.with_source_offset(1.0), 20, 3);
            assert!(e > 0.1, "{}: {e}", case.name);
        }
    }

    #[test]
    fn constant_fields_have_zero_source() {
        for physics in [Physics::Potential, Physics::Heat, Physics::Oseen] {
            let c = ManufacturedCase::constant(physics, 2.5);
            assert!(finite_difference_source_check(&c, 10, 1) < 1e-9);
        }
    }

    #[test]
    fn traction_matches_hand_formula() {
        let c = oseen_case();
        let g = c.traction_fn(Tag::Gamma3);
        for y in [0.0, 0.3, 0.8] {
            let v = g([1.0, y]);
            let expect = -PI * (PI * y).cos() + (PI * y).cos();
            assert!((v[0] - expect).abs() < 1e-12 && v[1].abs() < 1e-12);
        }
    }
}
