//! Affine triangle geometry and the P1 / P1-bubble shape functions.

use crate::mesh::Mesh2D;

/// Affine map data for one triangle.
#[derive(Debug, Clone, Copy)]
pub struct TriangleGeometry {
    pub coords: [[f64; 2]; 3],
    pub area: f64,
    /// Constant gradients of the barycentric coordinates.
    pub grads: [[f64; 2]; 3],
}

impl TriangleGeometry {
    pub fn from_coords(coords: [[f64; 2]; 3]) -> Self {
        let [p0, p1, p2] = coords;
        let det = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]);
        let mut grads = [[0.0; 2]; 3];
        for i in 0..3 {
            let pj = coords[(i + 1) % 3];
            let pk = coords[(i + 2) % 3];
            grads[i] = [(pj[1] - pk[1]) / det, (pk[0] - pj[0]) / det];
        }
        Self {
            coords,
            area: 0.5 * det,
            grads,
        }
    }

    pub fn of(mesh: &Mesh2D, t: usize) -> Self {
        Self::from_coords(mesh.triangle_coords(t))
    }

    pub fn point(&self, bary: [f64; 3]) -> [f64; 2] {
        let c = &self.coords;
        [
            bary[0] * c[0][0] + bary[1] * c[1][0] + bary[2] * c[2][0],
            bary[0] * c[0][1] + bary[1] * c[1][1] + bary[2] * c[2][1],
        ]
    }

    pub fn centroid(&self) -> [f64; 2] {
        self.point([1.0 / 3.0; 3])
    }

    /// P1 gradient of nodal values `u`.
    pub fn gradient(&self, u: [f64; 3]) -> [f64; 2] {
        let g = &self.grads;
        [
            u[0] * g[0][0] + u[1] * g[1][0] + u[2] * g[2][0],
            u[0] * g[0][1] + u[1] * g[1][1] + u[2] * g[2][1],
        ]
    }
}

pub fn bubble_value(bary: [f64; 3]) -> f64 {
    27.0 * bary[0] * bary[1] * bary[2]
}

pub fn bubble_gradient(geo: &TriangleGeometry, bary: [f64; 3]) -> [f64; 2] {
    let [l1, l2, l3] = bary;
    let g = &geo.grads;
    let (a, b, c) = (l2 * l3, l1 * l3, l1 * l2);
    [
        27.0 * (a * g[0][0] + b * g[1][0] + c * g[2][0]),
        27.0 * (a * g[0][1] + b * g[1][1] + c * g[2][1]),
    ]
}

/// Values and gradients of the four scalar MINI shape functions
/// (three vertex hats, then the bubble) at a barycentric point.
pub fn mini_basis(geo: &TriangleGeometry, bary: [f64; 3]) -> ([f64; 4], [[f64; 2]; 4]) {
    let values = [bary[0], bary[1], bary[2], bubble_value(bary)];
    let grads = [geo.grads[0], geo.grads[1], geo.grads[2], bubble_gradient(geo, bary)];
    (values, grads)
}
