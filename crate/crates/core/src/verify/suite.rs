//! Registry of module invariants checked against a configuration.

use std::fmt::Write as _;
use std::sync::{Arc, OnceLock};

use rand::{Rng, SeedableRng};

use super::{p1_errors, velocity_errors};
use crate::config::SimConfig;
use crate::coupler::{step_sources, SimState, Simulation};
use crate::fem::{
    assemble_advection, assemble_mass, assemble_scalar_load, assemble_stiffness, interior_rule, interpolate_p1,
    MiniVelocity, QuadField,
};
use crate::flow::{solve_flow_stationary, solve_flow_step, viscous_dissipation, FlowBc, FlowProblem};
use crate::heat::{entropy_residual, solve_heat_step, HeatBc, HeatProblem, StabilizationParams};
use crate::linalg::{dot, norm2, residual, solve_cg, SolverKind, SparseMatrix};
use crate::materials::{validate_bounds, Law, MaterialModel};
use crate::mesh::{generate_channel_mesh, GeometrySpec, Mesh2D, Tag};
use crate::output::{vtk_string, VtkFields};
use crate::potential::{conductivity_cells, joule_density, solve_potential, PotentialBc, PotentialProblem};

type Outcome = Result<String, String>;

pub struct Invariant {
    pub id: &'static str,
    pub module: &'static str,
    pub description: &'static str,
    pub check: fn(&Context) -> Outcome,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SuiteOptions {
    /// Caps the number of time steps of the trajectory checks.
    pub steps: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub id: &'static str,
    pub module: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub results: Vec<CheckResult>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.results.iter().all(|r| r.passed)
    }

    pub fn get(&self, id: &str) -> Option<&CheckResult> {
        self.results.iter().find(|r| r.id == id)
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["id", "module", "passed", "detail"])
            .expect("in-memory write");
        for r in &self.results {
            let passed = if r.passed { "true" } else { "false" };
            w.write_record([r.id, r.module, passed, &r.detail])
                .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for r in &self.results {
            let _ = writeln!(
                s,
                "{} {:<28} {}",
                if r.passed { "PASS" } else { "FAIL" },
                r.id,
                r.detail
            );
        }
        let n = self.results.iter().filter(|r| r.passed).count();
        let _ = writeln!(s, "{n}/{} invariants hold", self.results.len());
        s
    }
}

/// Shared inputs of the checks. The trajectory is computed on first use.
pub struct Context {
    config: SimConfig,
    mesh: Result<Mesh2D, String>,
    steps: usize,
    trajectory: OnceLock<Result<Vec<SimState>, String>>,
}

impl Context {
    fn new(config: &SimConfig, options: &SuiteOptions) -> Self {
        let mesh = config
            .geometry
            .spec()
            .map_err(|e| e.to_string())
            .and_then(|s| generate_channel_mesh(&s).map_err(|e| e.to_string()));
        let steps = options.steps.map_or(config.time.steps, |k| k.min(config.time.steps));
        Self {
            config: config.clone(),
            mesh,
            steps,
            trajectory: OnceLock::new(),
        }
    }

    fn mesh(&self) -> Result<&Mesh2D, String> {
        self.mesh.as_ref().map_err(|e| format!("mesh: {e}"))
    }

    fn material(&self) -> &MaterialModel {
        &self.config.materials
    }

    fn simulate(&self, steps: usize) -> Result<Vec<SimState>, String> {
        let sim = Simulation::with_mesh(self.config.clone(), self.mesh()?.clone());
        let mut states = vec![sim.initialize().map_err(|e| e.to_string())?];
        for _ in 0..steps {
            let next = sim
                .advance(states.last().expect("nonempty"))
                .map_err(|e| e.to_string())?;
            states.push(next);
        }
        Ok(states)
    }

    /// States 0..=steps of the configured run.
    fn trajectory(&self) -> Result<&[SimState], String> {
        self.trajectory
            .get_or_init(|| self.simulate(self.steps))
            .as_deref()
            .map_err(|e| format!("trajectory: {e}"))
    }
}

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn small_mesh(nx: usize, ny: usize) -> Mesh2D {
    generate_channel_mesh(&GeometrySpec::new(1.0, 1.0, 0.25, nx, ny)).expect("fixed mesh")
}

fn l2_norm(mesh: &Mesh2D, u: &[f64]) -> f64 {
    p1_errors(mesh, u, |_| 0.0, |_| [0.0; 2]).0
}

fn velocity_l2(mesh: &Mesh2D, v: &MiniVelocity) -> f64 {
    velocity_errors(mesh, v, |_| [0.0; 2], |_| [[0.0; 2]; 2]).0
}

/// Potential stiffness at θ_b with the Dirichlet vertices eliminated.
fn potential_system(ctx: &Context) -> Result<(SparseMatrix, Vec<f64>), String> {
    let mesh = ctx.mesh()?;
    let theta = vec![ctx.material().theta_b; mesh.num_vertices()];
    let mut a = assemble_stiffness(mesh, &conductivity_cells(mesh, ctx.material(), &theta));
    let mut b: Vec<f64> = (0..mesh.num_vertices()).map(|i| 1.0 + (i % 7) as f64).collect();
    let dofs = mesh.vertices_on(&[Tag::Gamma1, Tag::Gamma2, Tag::Gamma3, Tag::Gamma4]);
    let values = vec![0.0; dofs.len()];
    a.apply_dirichlet(&mut b, &dofs, &values).map_err(|e| e.to_string())?;
    Ok((a, b))
}

fn electrode_solve(ctx: &Context, g: f64, scale: f64) -> Result<Vec<f64>, String> {
    let mesh = ctx.mesh()?;
    let theta = vec![ctx.material().theta_b; mesh.num_vertices()];
    let mut p = PotentialProblem::electrode(mesh, ctx.material(), &theta, g);
    p.conductivity.iter_mut().for_each(|s| *s *= scale);
    p.tol_rel = 1e-12;
    solve_potential(&p).map(|s| s.phi).map_err(|e| e.to_string())
}

fn rel_diff(a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm2(&d) / norm2(b).max(f64::MIN_POSITIVE)
}

// mesh

fn mesh_area(ctx: &Context) -> Outcome {
    let m = ctx.mesh()?;
    let g = &ctx.config.geometry;
    let rel = (m.total_area() - g.length * g.height).abs() / (g.length * g.height);
    ensure(rel <= 1e-12, format!("relative area defect {rel:.2e}"))
}

fn mesh_perimeter(ctx: &Context) -> Outcome {
    let m = ctx.mesh()?;
    let g = &ctx.config.geometry;
    let total: f64 = m.boundary_edges().iter().map(|e| m.edge_length(e)).sum();
    let expect = 2.0 * (g.length + g.height);
    let rel = (total - expect).abs() / expect;
    ensure(rel <= 1e-12, format!("relative perimeter defect {rel:.2e}"))
}

fn mesh_edges(ctx: &Context) -> Outcome {
    let m = ctx.mesh()?;
    let mut count = std::collections::HashMap::new();
    for tri in m.triangles() {
        for k in 0..3 {
            let (a, b) = (tri[k], tri[(k + 1) % 3]);
            *count.entry((a.min(b), a.max(b))).or_insert(0usize) += 1;
        }
    }
    let tagged: std::collections::HashSet<_> = m
        .boundary_edges()
        .iter()
        .map(|e| (e.vertices[0].min(e.vertices[1]), e.vertices[0].max(e.vertices[1])))
        .collect();
    let bad = count
        .iter()
        .filter(|(e, &c)| if tagged.contains(*e) { c != 1 } else { c != 2 })
        .count();
    let missing = tagged.iter().filter(|e| !count.contains_key(*e)).count();
    ensure(
        bad == 0 && missing == 0,
        format!(
            "{} edges, {bad} with wrong multiplicity, {missing} tagged edges not in any triangle",
            count.len()
        ),
    )
}

// linalg

fn linalg_transpose(ctx: &Context) -> Outcome {
    let m = ctx.mesh()?;
    let a = assemble_advection(m, &MiniVelocity::constant(m, [1.0, 0.5]));
    let tt = a.transpose().transpose();
    ensure(tt == a, format!("{} nonzeros", a.nnz()))
}

fn linalg_residual(ctx: &Context) -> Outcome {
    let (a, b) = potential_system(ctx)?;
    let tol = ctx.config.solver.potential_tol;
    let (x, stats) = solve_cg(&a, &b, None, tol, 20 * b.len() + 100).map_err(|e| e.to_string())?;
    let r = norm2(&residual(&a, &x, &b)) / norm2(&b);
    ensure(
        r <= tol && x.iter().all(|v| v.is_finite()),
        format!("cg {} its, relative residual {r:.2e} (tol {tol:.0e})", stats.iterations),
    )
}

fn linalg_dirichlet(ctx: &Context) -> Outcome {
    let m = ctx.mesh()?;
    let mut a = assemble_stiffness(m, &vec![1.0; m.num_triangles()]);
    let mut b = vec![1.0; m.num_vertices()];
    let dofs = m.vertices_on(&[Tag::Gamma1, Tag::Gamma5]);
    let values: Vec<f64> = dofs.iter().map(|&i| i as f64 * 0.01).collect();
    a.apply_dirichlet(&mut b, &dofs, &values).map_err(|e| e.to_string())?;
    let (a1, b1) = (a.clone(), b.clone());
    a.apply_dirichlet(&mut b, &dofs, &values).map_err(|e| e.to_string())?;
    ensure(a == a1 && b == b1, format!("{} constrained dofs", dofs.len()))
}

// fem

fn fem_quadrature(_: &Context) -> Outcome {
    let rule = interior_rule();
    let (mut bb, mut same, mut cross) = (0.0, 0.0, 0.0);
    for (l, w) in rule.points.iter().zip(&rule.weights) {
        let b = 27.0 * l[0] * l[1] * l[2];
        bb += w * b * b;
        same += w * l[0] * l[0] * b;
        cross += w * l[0] * l[1] * b;
    }
    let wsum: f64 = rule.weights.iter().sum();
    let err = [
        (wsum, 0.5),
        (bb, 81.0 / 560.0),
        (same, 9.0 / 280.0),
        (cross, 3.0 / 140.0),
    ]
    .iter()
    .map(|(a, e)| (a - e).abs())
    .fold(0.0, f64::max);
    ensure(err <= 1e-14, format!("max deviation {err:.2e}"))
}

fn fem_nullspace(ctx: &Context) -> Outcome {
    let m = ctx.mesh()?;
    let ones = vec![1.0; m.num_vertices()];
    let k = assemble_stiffness(m, &vec![1.0; m.num_triangles()]).mul_vec(&ones);
    let adv = assemble_advection(m, &MiniVelocity::constant(m, [0.7, -0.3])).mul_vec(&ones);
    let mass: f64 = assemble_mass(m).mul_vec(&ones).iter().sum();
    let worst = k.iter().chain(&adv).fold(0.0f64, |a, v| a.max(v.abs()));
    let area = (mass - m.total_area()).abs() / m.total_area();
    ensure(
        worst <= 1e-12 && area <= 1e-12,
        format!("|K1|, |A1| ≤ {worst:.2e}, mass defect {area:.2e}"),
    )
}

fn fem_patch(ctx: &Context) -> Outcome {
    let m = ctx.mesh()?;
    let f = |p: [f64; 2]| 1.5 * p[0] - 0.8 * p[1] + 0.3;
    let bc: [PotentialBc; 5] = std::array::from_fn(|_| PotentialBc::Dirichlet(Arc::new(f)));
    let mut p = PotentialProblem::with_conductivity(m, vec![1.0; m.num_triangles()], bc);
    p.tol_rel = 1e-14;
    let phi = solve_potential(&p).map_err(|e| e.to_string())?.phi;
    let exact = interpolate_p1(m, f);
    let err = phi.iter().zip(&exact).fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
    ensure(err <= 1e-12, format!("max nodal error {err:.2e}"))
}

// materials

fn sample_temperatures() -> impl DoubleEndedIterator<Item = f64> {
    (0..=2000).map(|k| -20.0 + 0.15 * k as f64)
}

fn materials_pure(ctx: &Context) -> Outcome {
    let m = ctx.material();
    let copy = *m;
    let same = sample_temperatures().all(|t| {
        m.sigma(t).to_bits() == copy.sigma(t).to_bits()
            && m.eta(t).to_bits() == m.eta(t).to_bits()
            && m.nu(t).to_bits() == copy.nu(t).to_bits()
    });
    ensure(same, "2001 samples in [-20, 280]".into())
}

fn materials_sigma_shape(ctx: &Context) -> Outcome {
    let m = ctx.material();
    if m.sigma_law != Law::Tissue {
        return Ok("non-tissue law, shape not prescribed".into());
    }
    let h = 1e-3;
    let mut bad = Vec::new();
    let mut t: f64 = -20.0;
    while t < 120.0 {
        let d = m.sigma(t + h) - m.sigma(t);
        let ok = if t + h <= 99.0 {
            d > 0.0
        } else if t > 99.0 && t + h <= 100.0 || t > 105.0 {
            d == 0.0
        } else if t > 100.0 && t + h <= 105.0 {
            d < 0.0
        } else {
            true
        };
        if !ok {
            bad.push(t);
        }
        t += 0.05;
    }
    ensure(
        bad.is_empty(),
        format!(
            "{} failing samples{}",
            bad.len(),
            bad.first().map_or(String::new(), |t| format!(", first at {t}"))
        ),
    )
}

fn materials_force_affine(ctx: &Context) -> Outcome {
    let m = ctx.material();
    let mut worst: f64 = 0.0;
    for (a, b) in sample_temperatures().zip(sample_temperatures().rev()) {
        let (f1, f2, f0, f3) = (
            m.body_force(a),
            m.body_force(b),
            m.body_force(m.theta_b),
            m.body_force(a + b - m.theta_b),
        );
        for i in 0..2 {
            worst = worst.max(((f1[i] + f2[i]) - (f0[i] + f3[i])).abs());
        }
    }
    ensure(worst <= 1e-15, format!("max defect {worst:.2e}"))
}

fn materials_bounds(ctx: &Context) -> Outcome {
    let r = validate_bounds(ctx.material());
    let detail = format!(
        "sigma [{:.4}, {:.4}], eta [{:.4}, {:.4}], nu [{:.4}, {:.4}]{}",
        r.sigma.min,
        r.sigma.max,
        r.eta.min,
        r.eta.max,
        r.nu.min,
        r.nu.max,
        r.violations.first().map_or(String::new(), |v| format!("; {v:?}"))
    );
    ensure(r.passed(), detail)
}

// potential

fn potential_spd(ctx: &Context) -> Outcome {
    let (a, b) = potential_system(ctx)?;
    let mut rng = rand::rngs::StdRng::seed_from_u64(11);
    let mut min_q = f64::INFINITY;
    for _ in 0..20 {
        let x: Vec<f64> = (0..b.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        min_q = min_q.min(dot(&x, &a.mul_vec(&x)) / dot(&x, &x));
    }
    let cg = solve_cg(&a, &b, None, 1e-10, 20 * b.len() + 100).map_err(|e| format!("cg: {e}"))?;
    let asym = a.asymmetry();
    ensure(
        min_q > 0.0 && asym <= 1e-14,
        format!(
            "min Rayleigh quotient {min_q:.3e}, asymmetry {asym:.1e}, cg {} its",
            cg.1.iterations
        ),
    )
}

fn potential_linear(ctx: &Context) -> Outcome {
    let g = if ctx.config.potential.g != 0.0 {
        ctx.config.potential.g
    } else {
        1.0
    };
    let one = electrode_solve(ctx, g, 1.0)?;
    let two = electrode_solve(ctx, 2.0 * g, 1.0)?;
    let doubled: Vec<f64> = one.iter().map(|v| 2.0 * v).collect();
    let rel = rel_diff(&two, &doubled);
    ensure(rel <= 1e-8, format!("relative defect {rel:.2e}"))
}

fn potential_scaling(ctx: &Context) -> Outcome {
    let g = if ctx.config.potential.g != 0.0 {
        ctx.config.potential.g
    } else {
        1.0
    };
    let c = 3.0;
    let base = electrode_solve(ctx, g, 1.0)?;
    let scaled = electrode_solve(ctx, g, c)?;
    let expect: Vec<f64> = base.iter().map(|v| v / c).collect();
    let rel = rel_diff(&scaled, &expect);
    ensure(rel <= 1e-8, format!("relative defect {rel:.2e} at c = {c}"))
}

fn potential_joule(ctx: &Context) -> Outcome {
    let m = ctx.mesh()?;
    let tr = ctx.trajectory()?;
    let mut min = f64::INFINITY;
    for w in tr.windows(2) {
        min = min.min(joule_density(m, ctx.material(), &w[0].theta, &w[1].phi).min());
    }
    min = min.min(joule_density(m, ctx.material(), &tr[0].theta, &tr[0].phi).min());
    ensure(min >= 0.0, format!("min over {} states {min:.3e}", tr.len()))
}

// flow

fn flow_divergence(ctx: &Context) -> Outcome {
    let tr = ctx.trajectory()?;
    let mut worst: f64 = 0.0;
    for s in tr {
        let bound = 1e-8 * (1.0 + norm2(&s.velocity.to_vector()));
        worst = worst.max(s.diagnostics.div_norm / bound);
    }
    ensure(worst <= 1.0, format!("max ‖Bv‖ / 1e-8(1+‖v‖) = {worst:.3e}"))
}

fn flow_galilean(_: &Context) -> Outcome {
    let m = small_mesh(8, 8);
    let c = [0.3, -0.2];
    let boundary: [FlowBc; 5] = std::array::from_fn(|_| FlowBc::Inflow(Arc::new(move |_| c)));
    let p = FlowProblem {
        mesh: &m,
        nu: QuadField::constant(&m, 0.01),
        force: None,
        previous: MiniVelocity::zeros(&m),
        dt: 1.0,
        boundary,
        convection: true,
        solver: SolverKind::Lu,
        tol_rel: 1e-10,
    };
    let s = solve_flow_stationary(&p).map_err(|e| e.to_string())?;
    let exact = MiniVelocity::constant(&m, c);
    let d: f64 = s
        .velocity
        .to_vector()
        .iter()
        .zip(exact.to_vector())
        .fold(0.0, |a, (x, y)| a.max((x - y).abs()));
    ensure(d <= 1e-8, format!("max deviation from c {d:.2e}"))
}

fn flow_dissipation(ctx: &Context) -> Outcome {
    let m = ctx.mesh()?;
    let tr = ctx.trajectory()?;
    let mut min = f64::INFINITY;
    for w in tr.windows(2) {
        min = min.min(viscous_dissipation(m, ctx.material(), &w[0].theta, &w[1].velocity).min());
    }
    ensure(min >= 0.0, format!("min over {} steps {min:.3e}", tr.len() - 1))
}

fn flow_energy(_: &Context) -> Outcome {
    let m = small_mesh(8, 8);
    let mut v = MiniVelocity::interpolate(&m, |p| {
        let (x, y) = (p[0], p[1]);
        [x * (1.0 - x) * y, -y * (1.0 - y) * x]
    });
    let mut norms = vec![velocity_l2(&m, &v)];
    for _ in 0..5 {
        let p = FlowProblem {
            mesh: &m,
            nu: QuadField::constant(&m, 0.05),
            force: None,
            previous: v.clone(),
            dt: 0.1,
            boundary: std::array::from_fn(|_| FlowBc::NoSlip),
            convection: false,
            solver: SolverKind::Lu,
            tol_rel: 1e-10,
        };
        v = solve_flow_step(&p).map_err(|e| e.to_string())?.velocity;
        norms.push(velocity_l2(&m, &v));
    }
    let ok = norms.windows(2).all(|w| w[1] <= w[0]);
    ensure(
        ok,
        format!("‖v‖ from {:.3e} to {:.3e}", norms[0], norms[norms.len() - 1]),
    )
}

// heat

fn heat_viscosity_bound(ctx: &Context) -> Outcome {
    let m = ctx.mesh()?;
    let tr = ctx.trajectory()?;
    let beta = ctx.config.stabilization.beta;
    let (mut worst, mut negative, mut still) = (0.0f64, 0usize, 0usize);
    for w in tr.windows(2) {
        let vk = w[0].velocity.cell_max_norm(m);
        for (t, &eta) in w[1].art_visc.iter().enumerate() {
            let bound = beta * vk[t] * m.diameter(t);
            if eta < 0.0 {
                negative += 1;
            }
            if vk[t] == 0.0 && eta != 0.0 {
                still += 1;
            }
            if eta > bound {
                worst = worst.max(eta - bound);
            }
        }
    }
    ensure(
        worst == 0.0 && negative == 0 && still == 0,
        format!("{negative} negative, {still} nonzero on still cells, max excess {worst:.2e}"),
    )
}

fn heat_source_load(ctx: &Context) -> Outcome {
    let m = ctx.mesh()?;
    let tr = ctx.trajectory()?;
    let mut min = f64::INFINITY;
    for w in tr.windows(2) {
        let (j, d) = step_sources(m, ctx.material(), &w[0], &w[1]);
        let load = assemble_scalar_load(m, &j.zip_with(&d, |a, b| a + b));
        min = load.iter().fold(min, |a, &v| a.min(v));
    }
    ensure(min >= -1e-14, format!("min load entry {min:.3e}"))
}

fn heat_problem<'a>(
    m: &'a Mesh2D,
    material: &MaterialModel,
    prev: &'a [f64],
    v: &'a MiniVelocity,
    dt: f64,
    boundary: [HeatBc; 5],
    stabilization: StabilizationParams,
) -> HeatProblem<'a> {
    HeatProblem {
        mesh: m,
        material: *material,
        theta_prev: prev,
        theta_prev2: None,
        velocity: v,
        residual_velocity: v,
        source: QuadField::zeros(m),
        residual_source: QuadField::zeros(m),
        dt,
        time: dt,
        boundary,
        stabilization,
        tol_rel: 1e-12,
    }
}

fn heat_equilibrium(ctx: &Context) -> Outcome {
    let theta_l = ctx.material().theta_b;
    let mut worst: f64 = 0.0;
    for (nx, ny) in [(4, 4), (8, 8), (20, 8)] {
        let m = small_mesh(nx, ny);
        let v = MiniVelocity::zeros(&m);
        let prev = vec![theta_l; m.num_vertices()];
        for dt in [1e-3, 0.1, 10.0] {
            let bc: [HeatBc; 5] = std::array::from_fn(|_| HeatBc::robin(1.0, theta_l));
            let p = heat_problem(&m, ctx.material(), &prev, &v, dt, bc, ctx.config.stabilization);
            let th = solve_heat_step(&p).map_err(|e| e.to_string())?.theta;
            worst = th.iter().fold(worst, |a, x| a.max((x - theta_l).abs()));
        }
    }
    ensure(worst <= 1e-10, format!("max |θ − θ_l| {worst:.2e}"))
}

fn heat_stability(ctx: &Context) -> Outcome {
    let m = small_mesh(12, 12);
    let theta_l = ctx.material().theta_b;
    let v = MiniVelocity::zeros(&m);
    let mut rng = rand::rngs::StdRng::seed_from_u64(5);
    let mut theta: Vec<f64> = (0..m.num_vertices())
        .map(|_| theta_l + rng.gen_range(-10.0..10.0))
        .collect();
    let dev = |t: &[f64]| l2_norm(&m, &t.iter().map(|x| x - theta_l).collect::<Vec<_>>());
    let mut norms = vec![dev(&theta)];
    for _ in 0..10 {
        let bc: [HeatBc; 5] = std::array::from_fn(|_| HeatBc::robin(1.0, theta_l));
        let p = heat_problem(&m, ctx.material(), &theta, &v, 0.05, bc, ctx.config.stabilization);
        theta = solve_heat_step(&p).map_err(|e| e.to_string())?.theta;
        norms.push(dev(&theta));
    }
    let ok = norms.windows(2).all(|w| w[1] <= w[0]);
    ensure(
        ok,
        format!("‖θ − θ_l‖ from {:.3e} to {:.3e}", norms[0], norms[norms.len() - 1]),
    )
}

fn heat_residual_consistency(ctx: &Context) -> Outcome {
    let material = MaterialModel {
        eta_law: Law::Constant { value: 0.5 },
        ..*ctx.material()
    };
    let exact = |p: [f64; 2], t: f64| {
        37.0 + (std::f64::consts::PI * p[0]).sin() * (std::f64::consts::PI * p[1]).sin() * (-t).exp()
    };
    let mut maxima = Vec::new();
    for n in [8, 16, 32] {
        let m = small_mesh(n, n);
        let dt = 0.4 / n as f64;
        let v = MiniVelocity::constant(&m, [1.0, 0.0]);
        let t1 = interpolate_p1(&m, |p| exact(p, dt));
        let t0 = interpolate_p1(&m, |p| exact(p, 0.0));
        let r = entropy_residual(
            &m,
            &material,
            &t1,
            &t0,
            &v,
            &QuadField::zeros(&m),
            dt,
            ctx.config.stabilization.alpha_exp,
        );
        maxima.push(r.iter().fold(0.0f64, |a, x| a.max(x.abs())));
    }
    let detail = format!(
        "max |R| per level {:.3e}, {:.3e}, {:.3e} (monitored)",
        maxima[0], maxima[1], maxima[2]
    );
    ensure(maxima.iter().all(|x| x.is_finite()), detail)
}

// coupler

fn coupler_stage_order(ctx: &Context) -> Outcome {
    let tr = ctx.trajectory()?;
    let mut last = 0u64;
    let mut bad = 0usize;
    for s in &tr[1..] {
        let k = s.diagnostics.stage_ticks;
        if !(last < k[0] && k[0] < k[1] && k[1] < k[2]) {
            bad += 1;
        }
        last = k[2];
    }
    ensure(bad == 0, format!("{} steps, {bad} out of order", tr.len() - 1))
}

fn coupler_determinism(ctx: &Context) -> Outcome {
    let tr = ctx.trajectory()?;
    let k = (tr.len() - 1).min(3);
    let again = ctx.simulate(k).map_err(|e| format!("rerun: {e}"))?;
    let same = again.iter().zip(tr).all(|(a, b)| {
        let (da, db) = (a.diagnostics, b.diagnostics);
        format!("{da:?}") == format!("{db:?}") && a.theta.iter().zip(&b.theta).all(|(x, y)| x.to_bits() == y.to_bits())
    });
    ensure(same, format!("{k} steps compared bitwise"))
}

fn coupler_finite(ctx: &Context) -> Outcome {
    let tr = ctx.trajectory()?;
    let fin = |v: &[f64]| v.iter().all(|x| x.is_finite());
    let bad = tr
        .iter()
        .filter(|s| !(fin(&s.theta) && fin(&s.phi) && fin(&s.pressure) && s.velocity.is_finite() && fin(&s.art_visc)))
        .count();
    ensure(bad == 0, format!("{} states, {bad} with non-finite fields", tr.len()))
}

// sim_cli

fn config_round_trip(ctx: &Context) -> Outcome {
    let text = ctx.config.to_toml_string();
    let back = SimConfig::from_toml_str(&text).map_err(|e| e.to_string())?;
    ensure(back == ctx.config, format!("{} bytes", text.len()))
}

fn vtk_stable(ctx: &Context) -> Outcome {
    let m = ctx.mesh()?;
    let tr = ctx.trajectory()?;
    let s = &tr[tr.len() - 1];
    let a = vtk_string(m, &VtkFields::of(s), "ablatesim");
    let b = vtk_string(m, &VtkFields::of(&s.clone()), "ablatesim");
    ensure(a == b, format!("{} bytes", a.len()))
}

pub static REGISTRY: &[Invariant] = &[
    Invariant {
        id: "mesh.area",
        module: "mesh",
        description: "triangle areas sum to L·H",
        check: mesh_area,
    },
    Invariant {
        id: "mesh.perimeter",
        module: "mesh",
        description: "boundary edges sum to 2(L+H)",
        check: mesh_perimeter,
    },
    Invariant {
        id: "mesh.edge_sharing",
        module: "mesh",
        description: "interior edges in two triangles, tagged edges in one",
        check: mesh_edges,
    },
    Invariant {
        id: "linalg.transpose",
        module: "linalg",
        description: "(Aᵀ)ᵀ = A",
        check: linalg_transpose,
    },
    Invariant {
        id: "linalg.residual",
        module: "linalg",
        description: "accepted solves meet the residual contract",
        check: linalg_residual,
    },
    Invariant {
        id: "linalg.dirichlet_idempotent",
        module: "linalg",
        description: "apply_dirichlet is idempotent",
        check: linalg_dirichlet,
    },
    Invariant {
        id: "fem.quadrature",
        module: "fem",
        description: "12-point rule integrates bubble products exactly",
        check: fem_quadrature,
    },
    Invariant {
        id: "fem.constant_nullspace",
        module: "fem",
        description: "operators annihilate constants",
        check: fem_nullspace,
    },
    Invariant {
        id: "fem.patch",
        module: "fem",
        description: "affine fields reproduced by a stiffness solve",
        check: fem_patch,
    },
    Invariant {
        id: "materials.pure",
        module: "materials",
        description: "laws are bit-reproducible",
        check: materials_pure,
    },
    Invariant {
        id: "materials.sigma_shape",
        module: "materials",
        description: "sigma monotone pieces between breakpoints",
        check: materials_sigma_shape,
    },
    Invariant {
        id: "materials.force_affine",
        module: "materials",
        description: "body force is affine in theta",
        check: materials_force_affine,
    },
    Invariant {
        id: "materials.bounds",
        module: "materials",
        description: "coefficients positive and within declared bounds",
        check: materials_bounds,
    },
    Invariant {
        id: "potential.spd",
        module: "potential",
        description: "reduced stiffness is SPD",
        check: potential_spd,
    },
    Invariant {
        id: "potential.linear_in_g",
        module: "potential",
        description: "solve(2g) = 2 solve(g)",
        check: potential_linear,
    },
    Invariant {
        id: "potential.conductivity_scale",
        module: "potential",
        description: "c·sigma scales phi by 1/c",
        check: potential_scaling,
    },
    Invariant {
        id: "potential.joule_nonnegative",
        module: "potential",
        description: "Joule density is nonnegative",
        check: potential_joule,
    },
    Invariant {
        id: "flow.divergence",
        module: "flow",
        description: "‖Bv‖ ≤ 1e-8(1+‖v‖) every step",
        check: flow_divergence,
    },
    Invariant {
        id: "flow.galilean",
        module: "flow",
        description: "constant Dirichlet data give a constant flow",
        check: flow_galilean,
    },
    Invariant {
        id: "flow.dissipation_nonnegative",
        module: "flow",
        description: "viscous dissipation is nonnegative",
        check: flow_dissipation,
    },
    Invariant {
        id: "flow.energy",
        module: "flow",
        description: "Stokes steps do not increase ‖v‖",
        check: flow_energy,
    },
    Invariant {
        id: "heat.viscosity_bound",
        module: "heat",
        description: "0 ≤ η̃ ≤ β‖v‖h on every cell",
        check: heat_viscosity_bound,
    },
    Invariant {
        id: "heat.source_nonnegative",
        module: "heat",
        description: "assembled heat sources are nonnegative",
        check: heat_source_load,
    },
    Invariant {
        id: "heat.equilibrium",
        module: "heat",
        description: "uniform ambient state is a fixed point",
        check: heat_equilibrium,
    },
    Invariant {
        id: "heat.l2_stability",
        module: "heat",
        description: "‖θ − θ_l‖ does not grow without sources",
        check: heat_stability,
    },
    Invariant {
        id: "heat.residual_consistency",
        module: "heat",
        description: "entropy residual of smooth data stays bounded",
        check: heat_residual_consistency,
    },
    Invariant {
        id: "coupler.stage_order",
        module: "coupler",
        description: "potential, flow, heat in order every step",
        check: coupler_stage_order,
    },
    Invariant {
        id: "coupler.determinism",
        module: "coupler",
        description: "identical runs give identical diagnostics",
        check: coupler_determinism,
    },
    Invariant {
        id: "coupler.finite",
        module: "coupler",
        description: "all fields finite after each step",
        check: coupler_finite,
    },
    Invariant {
        id: "sim_cli.config_round_trip",
        module: "sim_cli",
        description: "parse(serialize(c)) = c",
        check: config_round_trip,
    },
    Invariant {
        id: "sim_cli.vtk_stable",
        module: "sim_cli",
        description: "VTK output is reproducible",
        check: vtk_stable,
    },
];

/// Runs every registered invariant against `config`.
pub fn invariant_suite(config: &SimConfig, options: &SuiteOptions) -> SuiteReport {
    let ctx = Context::new(config, options);
    let results = REGISTRY
        .iter()
        .map(|inv| {
            let (passed, detail) = match (inv.check)(&ctx) {
                Ok(d) => (true, d),
                Err(d) => (false, d),
            };
            CheckResult {
                id: inv.id,
                module: inv.module,
                passed,
                detail,
            }
        })
        .collect();
    SuiteReport { results }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::preset;

    fn quick(name: &str) -> SimConfig {
        let mut c = preset(name).unwrap();
        c.geometry.nx = 20;
        c.geometry.ny = 8;
        c.time.steps = 3;
        c.time.total = 0.03;
        c
    }

    #[test]
    fn registry_covers_every_module_invariant() {
        let count = |m: &str| REGISTRY.iter().filter(|i| i.module == m).count();
        assert_eq!(REGISTRY.len(), 31);
        let expected = [
            ("mesh", 3),
            ("linalg", 3),
            ("fem", 3),
            ("materials", 4),
            ("potential", 4),
            ("flow", 4),
            ("heat", 5),
            ("coupler", 3),
            ("sim_cli", 2),
        ];
        for (m, n) in expected {
            assert_eq!(count(m), n, "{m}");
        }
        let ids: std::collections::HashSet<_> = REGISTRY.iter().map(|i| i.id).collect();
        assert_eq!(ids.len(), REGISTRY.len());
    }

    #[test]
    fn presets_pass() {
        for name in ["test1", "test2", "test3"] {
            let r = invariant_suite(&quick(name), &SuiteOptions::default());
            assert!(r.passed(), "{name}\n{}", r.to_text());
        }
    }

    #[test]
    fn negative_beta_breaks_viscosity_bound() {
        let mut c = quick("test1");
        c.stabilization.beta = -0.1;
        let r = invariant_suite(&c, &SuiteOptions::default());
        assert!(!r.get("heat.viscosity_bound").unwrap().passed, "{}", r.to_text());
    }

    #[test]
    fn zero_sigma0_breaks_bounds() {
        let mut c = quick("test1");
        c.materials.sigma0 = 0.0;
        let r = invariant_suite(&c, &SuiteOptions { steps: Some(0) });
        let b = r.get("materials.bounds").unwrap();
        assert!(!b.passed && b.detail.contains("NotPositive"), "{}", b.detail);
    }

    #[test]
    fn report_formats() {
        let r = SuiteReport {
            results: vec![CheckResult {
                id: "x.y",
                module: "x",
                passed: false,
                detail: "a, b".into(),
            }],
        };
        assert_eq!(r.to_csv(), "id,module,passed,detail\nx.y,x,false,\"a, b\"\n");
        assert!(r.to_text().contains("FAIL x.y"));
        assert!(!r.passed());
    }
}
