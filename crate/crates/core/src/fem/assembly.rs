//! Global assembly of the P1 and MINI operators.
//!
//! Element matrices are computed in parallel and merged in triangle order, so
//! results do not depend on the thread count.

use rayon::prelude::*;

use super::dofmap::DofMap;
use super::element::{mini_basis, TriangleGeometry};
use super::fields::{MiniVelocity, QuadField};
use super::quadrature::{interior_rule, EDGE_GAUSS2};
use crate::linalg::{CooBuilder, SparseMatrix};
use crate::mesh::{Mesh2D, Tag};

fn assemble_cells<const R: usize, const C: usize, F>(nrows: usize, ncols: usize, nt: usize, kernel: F) -> SparseMatrix
where
    F: Fn(usize) -> ([usize; R], [usize; C], [[f64; C]; R]) + Sync + Send,
{
    let locals: Vec<_> = (0..nt).into_par_iter().map(kernel).collect();
    let mut b = CooBuilder::with_capacity(nrows, ncols, nt * R * C);
    for (rows, cols, m) in &locals {
        for (i, &r) in rows.iter().enumerate() {
            for (j, &c) in cols.iter().enumerate() {
                b.push(r, c, m[i][j]);
            }
        }
    }
    b.build()
}

/// `∫ k ∇u·∇ψ` with a per-cell coefficient.
pub fn assemble_stiffness(mesh: &Mesh2D, coeff: &[f64]) -> SparseMatrix {
    assert_eq!(coeff.len(), mesh.num_triangles());
    let n = mesh.num_vertices();
    assemble_cells(n, n, mesh.num_triangles(), |t| {
        let geo = TriangleGeometry::of(mesh, t);
        let tri = mesh.triangles()[t];
        let g = &geo.grads;
        let mut m = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] = coeff[t] * geo.area * (g[i][0] * g[j][0] + g[i][1] * g[j][1]);
            }
        }
        (tri, tri, m)
    })
}

/// Consistent P1 mass matrix.
pub fn assemble_mass(mesh: &Mesh2D) -> SparseMatrix {
    let n = mesh.num_vertices();
    assemble_cells(n, n, mesh.num_triangles(), |t| {
        let a = mesh.area(t) / 12.0;
        let mut m = [[a; 3]; 3];
        for (i, row) in m.iter_mut().enumerate() {
            row[i] = 2.0 * a;
        }
        (mesh.triangles()[t], mesh.triangles()[t], m)
    })
}

/// Row sums of the consistent mass matrix.
pub fn assemble_lumped_mass(mesh: &Mesh2D) -> Vec<f64> {
    let mut d = vec![0.0; mesh.num_vertices()];
    for (t, tri) in mesh.triangles().iter().enumerate() {
        for &v in tri {
            d[v] += mesh.area(t) / 3.0;
        }
    }
    d
}

/// `∫_Γ u ψ` over edges carrying any of `tags`.
pub fn assemble_boundary_mass(mesh: &Mesh2D, tags: &[Tag]) -> SparseMatrix {
    let n = mesh.num_vertices();
    let mut b = CooBuilder::new(n, n);
    for e in mesh.boundary_edges().iter().filter(|e| tags.contains(&e.tag)) {
        let l = mesh.edge_length(e);
        let [i, j] = e.vertices;
        b.push(i, i, l / 3.0);
        b.push(j, j, l / 3.0);
        b.push(i, j, l / 6.0);
        b.push(j, i, l / 6.0);
    }
    b.build()
}

/// `∫ (v·∇u) ψ`, rows = test, cols = trial.
pub fn assemble_advection(mesh: &Mesh2D, v: &MiniVelocity) -> SparseMatrix {
    let rule = interior_rule();
    let n = mesh.num_vertices();
    assemble_cells(n, n, mesh.num_triangles(), |t| {
        let geo = TriangleGeometry::of(mesh, t);
        let tri = mesh.triangles()[t];
        let g = &geo.grads;
        let mut m = [[0.0; 3]; 3];
        for (b, w) in rule.points.iter().zip(&rule.weights) {
            let vq = v.eval(tri, t, *b);
            let wq = 2.0 * geo.area * w;
            for j in 0..3 {
                let conv = vq[0] * g[j][0] + vq[1] * g[j][1];
                for i in 0..3 {
                    m[i][j] += wq * b[i] * conv;
                }
            }
        }
        (tri, tri, m)
    })
}

/// `∫ f ψ` for a source sampled at quadrature points.
pub fn assemble_scalar_load(mesh: &Mesh2D, source: &QuadField) -> Vec<f64> {
    let rule = interior_rule();
    let locals: Vec<[f64; 3]> = (0..mesh.num_triangles())
        .into_par_iter()
        .map(|t| {
            let a2 = 2.0 * mesh.area(t);
            let mut l = [0.0; 3];
            for (q, (b, w)) in rule.points.iter().zip(&rule.weights).enumerate() {
                let f = source.get(t, q) * a2 * w;
                for i in 0..3 {
                    l[i] += f * b[i];
                }
            }
            l
        })
        .collect();
    let mut out = vec![0.0; mesh.num_vertices()];
    for (tri, l) in mesh.triangles().iter().zip(&locals) {
        for k in 0..3 {
            out[tri[k]] += l[k];
        }
    }
    out
}

fn edge_points(mesh: &Mesh2D, vertices: [usize; 2]) -> ([f64; 2], [f64; 2]) {
    (mesh.vertices()[vertices[0]], mesh.vertices()[vertices[1]])
}

/// `∫_Γ g ψ` over tagged edges, two-point Gauss per edge.
pub fn assemble_boundary_load(mesh: &Mesh2D, tags: &[Tag], g: impl Fn([f64; 2]) -> f64) -> Vec<f64> {
    let mut out = vec![0.0; mesh.num_vertices()];
    for e in mesh.boundary_edges().iter().filter(|e| tags.contains(&e.tag)) {
        let l = mesh.edge_length(e);
        let (p, q) = edge_points(mesh, e.vertices);
        for &(s, w) in &EDGE_GAUSS2 {
            let x = [p[0] + s * (q[0] - p[0]), p[1] + s * (q[1] - p[1])];
            let val = g(x) * w * l;
            out[e.vertices[0]] += val * (1.0 - s);
            out[e.vertices[1]] += val * s;
        }
    }
    out
}

/// Flow operator blocks on the layout of [`DofMap`].
#[derive(Debug, Clone)]
pub struct MiniBlocks {
    /// Viscous plus convective part, velocity × velocity.
    pub a_vv: SparseMatrix,
    /// `B[q, u] = −∫ q div u`, pressure × velocity.
    pub b: SparseMatrix,
    /// `Bᵀ`.
    pub g: SparseMatrix,
    /// Velocity mass matrix (bubbles included).
    pub mass: SparseMatrix,
}

impl MiniBlocks {
    /// `[[s·M + A, G], [B, 0]]` on the full flow layout.
    pub fn saddle(&self, mass_scale: f64) -> SparseMatrix {
        let nvel = self.a_vv.nrows();
        let n = nvel + self.b.nrows();
        let mut c = CooBuilder::with_capacity(n, n, self.a_vv.nnz() + self.mass.nnz() + 2 * self.b.nnz());
        c.push_matrix(&self.a_vv, 0, 0, 1.0);
        if mass_scale != 0.0 {
            c.push_matrix(&self.mass, 0, 0, mass_scale);
        }
        c.push_matrix(&self.g, 0, nvel, 1.0);
        c.push_matrix(&self.b, nvel, 0, 1.0);
        c.build()
    }
}

/// MINI viscous form `∫ ν D(u):D(w)`, convection `b(a, u, w)` with its
/// surface term on `outflow` edges, divergence and mass blocks.
pub fn assemble_mini_blocks(
    mesh: &Mesh2D,
    nu: &QuadField,
    advect: Option<&MiniVelocity>,
    outflow: &[Tag],
) -> MiniBlocks {
    let dofs = DofMap::new(mesh);
    let rule = interior_rule();
    let nvel = dofs.velocity_size();
    let nt = mesh.num_triangles();

    type Local = ([usize; 8], [[f64; 8]; 8], [[f64; 8]; 8], [[f64; 8]; 3]);
    let locals: Vec<Local> = (0..nt)
        .into_par_iter()
        .map(|t| {
            let geo = TriangleGeometry::of(mesh, t);
            let tri = mesh.triangles()[t];
            let mut a = [[0.0; 8]; 8];
            let mut m = [[0.0; 8]; 8];
            let mut d = [[0.0; 8]; 3];
            for (q, (bary, w)) in rule.points.iter().zip(&rule.weights).enumerate() {
                let wq = 2.0 * geo.area * w;
                let (phi, grad) = mini_basis(&geo, *bary);
                let nuq = nu.get(t, q) * wq;
                let aq = advect.map(|v| v.eval(tri, t, *bary));
                for ci in 0..2 {
                    for ai in 0..4 {
                        let col = 4 * ci + ai;
                        for di in 0..2 {
                            for bi in 0..4 {
                                let row = 4 * di + bi;
                                let (ga, gb) = (grad[ai], grad[bi]);
                                let mut visc = ga[di] * gb[ci];
                                if ci == di {
                                    visc += ga[0] * gb[0] + ga[1] * gb[1];
                                    m[row][col] += wq * phi[ai] * phi[bi];
                                }
                                a[row][col] += 0.5 * nuq * visc;
                                if let Some(av) = aq {
                                    let mut c = av[di] * gb[ci];
                                    if ci == di {
                                        c += av[0] * gb[0] + av[1] * gb[1];
                                    }
                                    a[row][col] -= 0.5 * wq * phi[ai] * c;
                                }
                            }
                        }
                        for (k, row) in d.iter_mut().enumerate() {
                            row[col] -= wq * bary[k] * grad[ai][ci];
                        }
                    }
                }
            }
            (dofs.local_velocity(tri, t), a, m, d)
        })
        .collect();

    let mut ab = CooBuilder::with_capacity(nvel, nvel, nt * 64);
    let mut mb = CooBuilder::with_capacity(nvel, nvel, nt * 32);
    let mut bb = CooBuilder::with_capacity(dofs.num_vertices(), nvel, nt * 24);
    for (t, (ids, a, m, d)) in locals.iter().enumerate() {
        let tri = mesh.triangles()[t];
        for i in 0..8 {
            for j in 0..8 {
                ab.push(ids[i], ids[j], a[i][j]);
                if m[i][j] != 0.0 {
                    mb.push(ids[i], ids[j], m[i][j]);
                }
            }
        }
        for k in 0..3 {
            for j in 0..8 {
                bb.push(tri[k], ids[j], d[k][j]);
            }
        }
    }

    if let Some(v) = advect {
        for e in mesh.boundary_edges().iter().filter(|e| outflow.contains(&e.tag)) {
            let n = mesh.outward_normal(e);
            let l = mesh.edge_length(e);
            let [i, j] = e.vertices;
            let mut local = [[0.0; 2]; 2];
            for &(s, w) in &EDGE_GAUSS2 {
                let an = ((1.0 - s) * v.vx[i] + s * v.vx[j]) * n[0] + ((1.0 - s) * v.vy[i] + s * v.vy[j]) * n[1];
                let phi = [1.0 - s, s];
                for p in 0..2 {
                    for r in 0..2 {
                        local[p][r] += w * l * an * phi[p] * phi[r];
                    }
                }
            }
            for c in 0..2 {
                let ids = [dofs.vertex(c, i), dofs.vertex(c, j)];
                for p in 0..2 {
                    for r in 0..2 {
                        ab.push(ids[p], ids[r], local[p][r]);
                    }
                }
            }
        }
    }

    let b = bb.build();
    MiniBlocks {
        a_vv: ab.build(),
        g: b.transpose(),
        b,
        mass: mb.build(),
    }
}

/// `∫ F·w` over the MINI velocity space, flow-layout velocity part.
pub fn assemble_vector_load(mesh: &Mesh2D, fx: &QuadField, fy: &QuadField) -> Vec<f64> {
    let dofs = DofMap::new(mesh);
    let rule = interior_rule();
    let locals: Vec<[f64; 8]> = (0..mesh.num_triangles())
        .into_par_iter()
        .map(|t| {
            let geo = TriangleGeometry::of(mesh, t);
            let mut l = [0.0; 8];
            for (q, (bary, w)) in rule.points.iter().zip(&rule.weights).enumerate() {
                let wq = 2.0 * geo.area * w;
                let (phi, _) = mini_basis(&geo, *bary);
                for k in 0..4 {
                    l[k] += wq * fx.get(t, q) * phi[k];
                    l[4 + k] += wq * fy.get(t, q) * phi[k];
                }
            }
            l
        })
        .collect();
    let mut out = vec![0.0; dofs.velocity_size()];
    for (t, l) in locals.iter().enumerate() {
        let ids = dofs.local_velocity(mesh.triangles()[t], t);
        for k in 0..8 {
            out[ids[k]] += l[k];
        }
    }
    out
}

/// `∮ g·w` over tagged edges; bubbles vanish on edges so only vertex dofs receive load.
pub fn assemble_vector_boundary_load(mesh: &Mesh2D, tags: &[Tag], g: impl Fn([f64; 2]) -> [f64; 2]) -> Vec<f64> {
    let dofs = DofMap::new(mesh);
    let mut out = vec![0.0; dofs.velocity_size()];
    for c in 0..2 {
        let part = assemble_boundary_load(mesh, tags, |x| g(x)[c]);
        for (v, val) in part.into_iter().enumerate() {
            out[dofs.vertex(c, v)] += val;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::fields::interpolate_p1;
    use crate::linalg::{dot, solve_lu};
    use crate::mesh::{generate_channel_mesh, GeometrySpec};

    fn unit_cell() -> Mesh2D {
        // One square split along (0,0)-(1,1).
        Mesh2D::with_tagger(
            vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
            vec![[0, 1, 2], [0, 2, 3]],
            |_| Tag::Gamma2,
        )
        .unwrap()
    }

    fn channel(nx: usize, ny: usize) -> Mesh2D {
        generate_channel_mesh(&GeometrySpec::new(1.5, 0.5, 0.075, nx, ny)).unwrap()
    }

    #[test]
    fn stiffness_matches_hand_assembly() {
        let m = unit_cell();
        let k = assemble_stiffness(&m, &[1.0, 1.0]);
        // Hand assembly: right triangles with legs 1, diagonal edge 0-2 has zero coupling.
        let expected = [
            [1.0, -0.5, 0.0, -0.5],
            [-0.5, 1.0, -0.5, 0.0],
            [0.0, -0.5, 1.0, -0.5],
            [-0.5, 0.0, -0.5, 1.0],
        ];
        for i in 0..4 {
            for j in 0..4 {
                assert!((k.get(i, j) - expected[i][j]).abs() < 1e-14, "({i},{j})");
            }
        }
        let k3 = assemble_stiffness(&m, &[3.0, 3.0]);
        for (a, b) in k3.values().iter().zip(k.values()) {
            assert_eq!(*a, 3.0 * b);
        }
        assert!(k.mul_vec(&[1.0; 4]).iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn reference_mass_matrix() {
        let m = Mesh2D::with_tagger(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], vec![[0, 1, 2]], |_| {
            Tag::Gamma1
        })
        .unwrap();
        let mm = assemble_mass(&m);
        let a = 0.5 / 12.0;
        for i in 0..3 {
            for j in 0..3 {
                let e = if i == j { 2.0 * a } else { a };
                assert!((mm.get(i, j) - e).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn mass_totals_and_lumping() {
        let m = channel(20, 10);
        let mm = assemble_mass(&m);
        let one = vec![1.0; m.num_vertices()];
        assert!((dot(&one, &mm.mul_vec(&one)) - 0.75).abs() < 1e-12);
        let lumped = assemble_lumped_mass(&m);
        let rows = mm.mul_vec(&one);
        for (a, b) in lumped.iter().zip(&rows) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn boundary_mass_totals() {
        let sq = generate_channel_mesh(&GeometrySpec::new(1.0, 1.0, 0.25, 4, 4)).unwrap();
        let one = vec![1.0; sq.num_vertices()];
        let all = assemble_boundary_mass(&sq, &Tag::ALL);
        assert!((dot(&one, &all.mul_vec(&one)) - 4.0).abs() < 1e-13);
        let m = channel(20, 10);
        let one = vec![1.0; m.num_vertices()];
        let g5 = assemble_boundary_mass(&m, &[Tag::Gamma5]);
        assert!((dot(&one, &g5.mul_vec(&one)) - 0.15).abs() < 1e-13);
        assert_eq!(assemble_boundary_mass(&m, &[]).nnz(), 0);
        let tagged = m.vertices_on(&[Tag::Gamma5]);
        for i in 0..g5.nrows() {
            if g5.row(i).any(|(_, v)| v != 0.0) {
                assert!(tagged.contains(&i));
            }
        }
    }

    #[test]
    fn advection_of_linear_field() {
        let m = channel(20, 10);
        let v = MiniVelocity::constant(&m, [1.0, 0.0]);
        let d = assemble_advection(&m, &v);
        let x = interpolate_p1(&m, |p| p[0]);
        let got = d.mul_vec(&x);
        // Oracle: (Dθ)_i = ∫ψ_i, i.e. the lumped mass.
        let lumped = assemble_lumped_mass(&m);
        for (a, b) in got.iter().zip(&lumped) {
            assert!((a - b).abs() < 1e-14);
        }
        let c = d.mul_vec(&vec![2.0; m.num_vertices()]);
        assert!(c.iter().all(|v| v.abs() < 1e-14));
        assert_eq!(assemble_advection(&m, &MiniVelocity::zeros(&m)).max_abs(), 0.0);
    }

    #[test]
    fn advection_skew_for_enclosed_solenoidal_field() {
        // v = curl of a stream function vanishing with its gradient on the box
        // boundary; the symmetric part of D comes only from div v_h and shrinks like h².
        let ratio = |n: usize| {
            let m = generate_channel_mesh(&GeometrySpec::new(1.0, 1.0, 0.25, n, n)).unwrap();
            let v = MiniVelocity::interpolate(&m, |p| {
                let s = |t: f64| t * t * (1.0 - t) * (1.0 - t);
                let ds = |t: f64| 2.0 * t * (1.0 - t) * (1.0 - 2.0 * t);
                [s(p[0]) * ds(p[1]), -ds(p[0]) * s(p[1])]
            });
            let d = assemble_advection(&m, &v);
            let mut c = CooBuilder::new(d.nrows(), d.ncols());
            c.push_matrix(&d, 0, 0, 1.0);
            c.push_matrix(&d.transpose(), 0, 0, 1.0);
            c.build().max_abs() / d.max_abs()
        };
        let (coarse, fine) = (ratio(8), ratio(16));
        assert!(fine < 0.05 && fine < coarse / 3.0, "{coarse} {fine}");
    }

    #[test]
    fn scalar_load_sums_to_area() {
        let m = channel(20, 10);
        let f = assemble_scalar_load(&m, &QuadField::constant(&m, 1.0));
        assert!((f.iter().sum::<f64>() - 0.75).abs() < 1e-13);
        let z = assemble_scalar_load(&m, &QuadField::zeros(&m));
        assert!(z.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn boundary_load_is_exact_for_linear_data() {
        let m = channel(20, 10);
        let f = assemble_boundary_load(&m, &[Tag::Gamma5], |p| p[0]);
        // ∫_{0.675}^{0.825} x dx
        let exact = 0.5 * (0.825f64.powi(2) - 0.675f64.powi(2));
        assert!((f.iter().sum::<f64>() - exact).abs() < 1e-14);
    }

    #[test]
    fn patch_test_reproduces_affine() {
        let m = channel(20, 10);
        let mut k = assemble_stiffness(&m, &vec![1.0; m.num_triangles()]);
        let exact = |p: [f64; 2]| 1.0 + 2.0 * p[0] - 3.0 * p[1];
        let bdry = m.vertices_on(&Tag::ALL);
        let vals: Vec<f64> = bdry.iter().map(|&v| exact(m.vertices()[v])).collect();
        let mut rhs = vec![0.0; m.num_vertices()];
        k.apply_dirichlet(&mut rhs, &bdry, &vals).unwrap();
        let x = solve_lu(&k, &rhs).unwrap();
        for (i, &p) in m.vertices().iter().enumerate() {
            assert!((x[i] - exact(p)).abs() < 1e-12);
        }
    }

    #[test]
    fn rigid_translation_is_in_viscous_kernel() {
        let m = channel(20, 4);
        let mb = assemble_mini_blocks(&m, &QuadField::constant(&m, 0.7), None, &[]);
        let v = MiniVelocity::constant(&m, [1.0, 0.0]).to_vector();
        assert!(mb.a_vv.mul_vec(&v).iter().all(|r| r.abs() < 1e-13));
        assert!(mb.a_vv.asymmetry() < 1e-14);
        // Rigid rotation also has D = 0.
        let rot = MiniVelocity::interpolate(&m, |p| [-p[1], p[0]]).to_vector();
        assert!(mb.a_vv.mul_vec(&rot).iter().all(|r| r.abs() < 1e-12));
    }

    #[test]
    fn divergence_block_kills_constants_in_enclosed_sense() {
        let m = channel(20, 4);
        let mb = assemble_mini_blocks(&m, &QuadField::constant(&m, 1.0), None, &[]);
        let one = vec![1.0; m.num_vertices()];
        // Σ_q B[q,:] u = −∫ div u = −∮ u·n; for u=(1,0): −(H − H) = 0.
        let v = MiniVelocity::constant(&m, [1.0, 0.0]).to_vector();
        assert!(dot(&one, &mb.b.mul_vec(&v)).abs() < 1e-13);
        // Pressure gradient of a constant vanishes on interior velocity dofs.
        let gp = mb.g.mul_vec(&one);
        let dofs = DofMap::new(&m);
        let bdry = m.vertices_on(&Tag::ALL);
        for v in 0..m.num_vertices() {
            if !bdry.contains(&v) {
                assert!(gp[dofs.vertex(0, v)].abs() < 1e-13 && gp[dofs.vertex(1, v)].abs() < 1e-13);
            }
        }
        for t in 0..m.num_triangles() {
            assert!(gp[dofs.bubble(0, t)].abs() < 1e-13);
        }
        // Mass: 1ᵀ M 1 over the x component = area.
        let ex = MiniVelocity::constant(&m, [1.0, 0.0]).to_vector();
        assert!((dot(&ex, &mb.mass.mul_vec(&ex)) - 0.75).abs() < 1e-12);
    }

    #[test]
    fn convection_of_constant_velocity() {
        // b(a, c, w) for constant c: interior part −∫ a_i c_j D_ij(w) balances the surface term.
        let m = channel(20, 4);
        let a = MiniVelocity::interpolate(&m, |p| [1.0 + 0.1 * p[1], 0.0]);
        let zero_nu = QuadField::zeros(&m);
        let with = assemble_mini_blocks(&m, &zero_nu, Some(&a), &Tag::ALL);
        let c = MiniVelocity::constant(&m, [0.3, -0.7]).to_vector();
        let r = with.a_vv.mul_vec(&c);
        // strong form ½[(a·∇)c + (c·∇)a] = ½ (c·∇)a = ½(0.1·(−0.7), 0)
        let test = MiniVelocity::constant(&m, [1.0, 0.0]).to_vector();
        let got = dot(&test, &r);
        let expected = 0.5 * 0.1 * (-0.7) * 0.75 + 0.5 * boundary_skew(&m, &a, [0.3, -0.7]);
        assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
    }

    /// ½∮[(a·n)(c·z) − (a·z)(c·n)] with z = e_x, for the identity check above.
    fn boundary_skew(m: &Mesh2D, a: &MiniVelocity, c: [f64; 2]) -> f64 {
        let mut s = 0.0;
        for e in m.boundary_edges() {
            let n = m.outward_normal(e);
            let l = m.edge_length(e);
            let [i, j] = e.vertices;
            let av = [(a.vx[i] + a.vx[j]) / 2.0, (a.vy[i] + a.vy[j]) / 2.0];
            let an = av[0] * n[0] + av[1] * n[1];
            let cn = c[0] * n[0] + c[1] * n[1];
            s += l * (an * c[0] - av[0] * cn);
        }
        s
    }
}
