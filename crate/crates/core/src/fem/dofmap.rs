//! Global numbering of flow and scalar unknowns.
//!
//! Flow vector layout: `[vx vertices | vx bubbles | vy vertices | vy bubbles | P vertices]`.
//! Scalar fields (θ, φ, P alone) use the vertex index directly.

use crate::mesh::Mesh2D;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DofMap {
    nv: usize,
    nt: usize,
}

impl DofMap {
    pub fn new(mesh: &Mesh2D) -> Self {
        Self {
            nv: mesh.num_vertices(),
            nt: mesh.num_triangles(),
        }
    }

    pub fn num_vertices(&self) -> usize {
        self.nv
    }

    pub fn num_triangles(&self) -> usize {
        self.nt
    }

    /// Unknowns per velocity component.
    pub fn component_size(&self) -> usize {
        self.nv + self.nt
    }

    pub fn velocity_size(&self) -> usize {
        2 * self.component_size()
    }

    pub fn flow_size(&self) -> usize {
        self.velocity_size() + self.nv
    }

    pub fn scalar_size(&self) -> usize {
        self.nv
    }

    /// Velocity component `c` (0 = x, 1 = y) at vertex `v`.
    pub fn vertex(&self, c: usize, v: usize) -> usize {
        c * self.component_size() + v
    }

    /// Velocity component `c` bubble of triangle `t`.
    pub fn bubble(&self, c: usize, t: usize) -> usize {
        c * self.component_size() + self.nv + t
    }

    pub fn pressure(&self, v: usize) -> usize {
        self.velocity_size() + v
    }

    /// Local MINI velocity dofs of triangle `t`: `[x0, x1, x2, xb, y0, y1, y2, yb]`.
    pub fn local_velocity(&self, tri: [usize; 3], t: usize) -> [usize; 8] {
        let mut out = [0; 8];
        for c in 0..2 {
            for (k, &v) in tri.iter().enumerate() {
                out[4 * c + k] = self.vertex(c, v);
            }
            out[4 * c + 3] = self.bubble(c, t);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{generate_channel_mesh, GeometrySpec};
    use std::collections::HashSet;

    #[test]
    fn layout_is_contiguous_and_collision_free() {
        let mesh = generate_channel_mesh(&GeometrySpec::new(1.0, 0.5, 0.25, 4, 2)).unwrap();
        let d = DofMap::new(&mesh);
        assert_eq!(d.flow_size(), 2 * (15 + 16) + 15);
        let mut seen = HashSet::new();
        for c in 0..2 {
            for v in 0..d.num_vertices() {
                assert!(seen.insert(d.vertex(c, v)));
            }
            for t in 0..d.num_triangles() {
                assert!(seen.insert(d.bubble(c, t)));
            }
        }
        for v in 0..d.num_vertices() {
            assert!(seen.insert(d.pressure(v)));
        }
        assert_eq!(seen.len(), d.flow_size());
        assert_eq!(*seen.iter().max().unwrap(), d.flow_size() - 1);
    }
}
