//! Discrete fields: per-quadrature-point data and the MINI velocity.

use rayon::prelude::*;

use super::element::{bubble_gradient, bubble_value, TriangleGeometry};
use super::quadrature::{interior_rule, NQ};
use crate::mesh::Mesh2D;

/// One value per (triangle, interior quadrature point).
#[derive(Debug, Clone, PartialEq)]
pub struct QuadField {
    values: Vec<f64>,
}

impl QuadField {
    pub fn zeros(mesh: &Mesh2D) -> Self {
        Self::constant(mesh, 0.0)
    }

    pub fn constant(mesh: &Mesh2D, c: f64) -> Self {
        Self {
            values: vec![c; mesh.num_triangles() * NQ],
        }
    }

    /// Evaluates `f(t, x, bary)` at every quadrature point.
    pub fn from_fn<F>(mesh: &Mesh2D, f: F) -> Self
    where
        F: Fn(usize, [f64; 2], [f64; 3]) -> f64 + Sync,
    {
        let rule = interior_rule();
        let values = (0..mesh.num_triangles())
            .into_par_iter()
            .flat_map_iter(|t| {
                let geo = TriangleGeometry::of(mesh, t);
                let f = &f;
                rule.points.iter().map(move |&b| f(t, geo.point(b), b))
            })
            .collect();
        Self { values }
    }

    pub fn from_values(values: Vec<f64>) -> Self {
        assert_eq!(values.len() % NQ, 0);
        Self { values }
    }

    pub fn num_triangles(&self) -> usize {
        self.values.len() / NQ
    }

    #[inline]
    pub fn get(&self, t: usize, q: usize) -> f64 {
        self.values[t * NQ + q]
    }

    pub fn cell(&self, t: usize) -> &[f64] {
        &self.values[t * NQ..(t + 1) * NQ]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_with(&self, other: &QuadField, f: impl Fn(f64, f64) -> f64) -> Self {
        assert_eq!(self.values.len(), other.values.len());
        Self {
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    /// Quadrature mean over each cell.
    pub fn cell_means(&self) -> Vec<f64> {
        let w = &interior_rule().weights;
        self.values
            .chunks(NQ)
            .map(|c| 2.0 * c.iter().zip(w).map(|(v, w)| v * w).sum::<f64>())
            .collect()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// ∫_Ω of the field.
    pub fn integral(&self, mesh: &Mesh2D) -> f64 {
        self.cell_means()
            .iter()
            .enumerate()
            .map(|(t, m)| m * mesh.area(t))
            .sum()
    }
}

/// Nodal values of triangle `t`.
#[inline]
pub fn cell_values(mesh: &Mesh2D, u: &[f64], t: usize) -> [f64; 3] {
    let tri = mesh.triangles()[t];
    [u[tri[0]], u[tri[1]], u[tri[2]]]
}

/// P1 interpolant of `u` evaluated at quadrature points.
pub fn p1_at_quad(mesh: &Mesh2D, u: &[f64]) -> QuadField {
    QuadField::from_fn(mesh, |t, _, b| {
        let c = cell_values(mesh, u, t);
        b[0] * c[0] + b[1] * c[1] + b[2] * c[2]
    })
}

/// Constant gradient of the P1 field on triangle `t`.
pub fn p1_gradient(mesh: &Mesh2D, u: &[f64], t: usize) -> [f64; 2] {
    TriangleGeometry::of(mesh, t).gradient(cell_values(mesh, u, t))
}

/// P1 nodal interpolant.
pub fn interpolate_p1(mesh: &Mesh2D, f: impl Fn([f64; 2]) -> f64) -> Vec<f64> {
    mesh.vertices().iter().map(|&p| f(p)).collect()
}

/// MINI velocity: each component holds NV vertex values followed by NT
/// bubble coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct MiniVelocity {
    pub vx: Vec<f64>,
    pub vy: Vec<f64>,
    nv: usize,
}

impl MiniVelocity {
    pub fn zeros(mesh: &Mesh2D) -> Self {
        let n = mesh.num_vertices() + mesh.num_triangles();
        Self {
            vx: vec![0.0; n],
            vy: vec![0.0; n],
            nv: mesh.num_vertices(),
        }
    }

    /// Splits a flow-layout vector (see `DofMap`); trailing pressure is ignored.
    pub fn from_flow_vector(mesh: &Mesh2D, x: &[f64]) -> Self {
        let n = mesh.num_vertices() + mesh.num_triangles();
        Self {
            vx: x[..n].to_vec(),
            vy: x[n..2 * n].to_vec(),
            nv: mesh.num_vertices(),
        }
    }

    /// Uniform vector field, no bubble content.
    pub fn constant(mesh: &Mesh2D, v: [f64; 2]) -> Self {
        let mut out = Self::zeros(mesh);
        for i in 0..mesh.num_vertices() {
            out.vx[i] = v[0];
            out.vy[i] = v[1];
        }
        out
    }

    /// Vertex interpolation plus bubble coefficients matching `f` at centroids.
    pub fn interpolate(mesh: &Mesh2D, f: impl Fn([f64; 2]) -> [f64; 2]) -> Self {
        let mut out = Self::zeros(mesh);
        for (i, &p) in mesh.vertices().iter().enumerate() {
            let v = f(p);
            out.vx[i] = v[0];
            out.vy[i] = v[1];
        }
        let nv = mesh.num_vertices();
        for (t, tri) in mesh.triangles().iter().enumerate() {
            let c = TriangleGeometry::of(mesh, t).centroid();
            let v = f(c);
            let mean = |u: &[f64]| (u[tri[0]] + u[tri[1]] + u[tri[2]]) / 3.0;
            out.vx[nv + t] = v[0] - mean(&out.vx);
            out.vy[nv + t] = v[1] - mean(&out.vy);
        }
        out
    }

    pub fn num_vertices(&self) -> usize {
        self.nv
    }

    /// Both components concatenated in flow layout (without pressure).
    pub fn to_vector(&self) -> Vec<f64> {
        let mut out = self.vx.clone();
        out.extend_from_slice(&self.vy);
        out
    }

    pub fn vertex_value(&self, v: usize) -> [f64; 2] {
        [self.vx[v], self.vy[v]]
    }

    pub fn eval(&self, tri: [usize; 3], t: usize, bary: [f64; 3]) -> [f64; 2] {
        let b = bubble_value(bary);
        let comp = |u: &[f64]| bary[0] * u[tri[0]] + bary[1] * u[tri[1]] + bary[2] * u[tri[2]] + b * u[self.nv + t];
        [comp(&self.vx), comp(&self.vy)]
    }

    /// Velocity gradient `g[i][j] = ∂_j v_i`.
    pub fn gradient(&self, geo: &TriangleGeometry, tri: [usize; 3], t: usize, bary: [f64; 3]) -> [[f64; 2]; 2] {
        let gb = bubble_gradient(geo, bary);
        let comp = |u: &[f64]| {
            let g = geo.gradient([u[tri[0]], u[tri[1]], u[tri[2]]]);
            let c = u[self.nv + t];
            [g[0] + c * gb[0], g[1] + c * gb[1]]
        };
        [comp(&self.vx), comp(&self.vy)]
    }

    /// Velocity values at the interior quadrature points, as (vx, vy).
    pub fn at_quad(&self, mesh: &Mesh2D) -> (QuadField, QuadField) {
        let eval = |c: usize| QuadField::from_fn(mesh, |t, _, b| self.eval(mesh.triangles()[t], t, b)[c]);
        (eval(0), eval(1))
    }

    /// Max of |v| over the vertices and quadrature points of each cell.
    pub fn cell_max_norm(&self, mesh: &Mesh2D) -> Vec<f64> {
        let rule = interior_rule();
        (0..mesh.num_triangles())
            .into_par_iter()
            .map(|t| {
                let tri = mesh.triangles()[t];
                let mut m: f64 = tri.iter().map(|&v| self.vx[v].hypot(self.vy[v])).fold(0.0, f64::max);
                for &b in &rule.points {
                    let v = self.eval(tri, t, b);
                    m = m.max(v[0].hypot(v[1]));
                }
                m
            })
            .collect()
    }

    /// Largest nodal or bubble coefficient magnitude.
    pub fn max_abs(&self) -> f64 {
        self.vx.iter().chain(&self.vy).fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.vx.iter().chain(&self.vy).all(|v| v.is_finite())
    }
}
