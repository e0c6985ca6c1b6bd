//! Triangulated channel domain with tagged boundary edges.
//!
//! The domain is the rectangle `[0, L] x [0, H]`. The electrode is a flat
//! segment of length `2r` centred on the top side. Boundary tags:
//!
//! ```text
//!            Γ4          Γ5          Γ4
//!   (0,H) +---------+==========+---------+ (L,H)
//!         |                              |
//!      Γ1 |  inflow                      | Γ3  outlet
//!         |                              |
//!   (0,0) +------------------------------+ (L,0)
//!                        Γ2
//! ```

use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Absolute tolerance used when snapping grid lines onto the electrode ends.
pub const SNAP_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("grid with nx = {nx} cannot place a vertex at x = {x}")]
    NoGridLine { nx: usize, x: f64 },
    #[error("triangle {index} has non-positive area {area:e}")]
    DegenerateTriangle { index: usize, area: f64 },
    #[error("vertex index {index} out of range ({count} vertices)")]
    VertexOutOfRange { index: usize, count: usize },
    #[error("boundary tagging inconsistent: {0}")]
    BoundaryMismatch(String),
    #[error("mesh file parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Boundary part of the channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tag {
    Gamma1,
    Gamma2,
    Gamma3,
    Gamma4,
    Gamma5,
}

impl Tag {
    pub const ALL: [Tag; 5] = [Tag::Gamma1, Tag::Gamma2, Tag::Gamma3, Tag::Gamma4, Tag::Gamma5];

    /// Zero-based position, usable as an array index.
    pub fn index(self) -> usize {
        match self {
            Tag::Gamma1 => 0,
            Tag::Gamma2 => 1,
            Tag::Gamma3 => 2,
            Tag::Gamma4 => 3,
            Tag::Gamma5 => 4,
        }
    }

    /// Integer id used by the text mesh format (1..=5).
    pub fn id(self) -> u8 {
        self.index() as u8 + 1
    }

    pub fn from_id(id: u8) -> Option<Tag> {
        match id {
            1..=5 => Some(Tag::ALL[id as usize - 1]),
            _ => None,
        }
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Γ{}", self.id())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryEdge {
    pub vertices: [usize; 2],
    pub tag: Tag,
}

/// Channel dimensions and grid resolution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySpec {
    /// Channel length `L`.
    pub length: f64,
    /// Channel height `H`.
    pub height: f64,
    /// Electrode half-width `r`.
    pub electrode_radius: f64,
    pub nx: usize,
    pub ny: usize,
}

impl GeometrySpec {
    pub fn new(length: f64, height: f64, electrode_radius: f64, nx: usize, ny: usize) -> Self {
        Self {
            length,
            height,
            electrode_radius,
            nx,
            ny,
        }
    }

    /// Same geometry with `nx` replaced by the closest count whose uniform
    /// spacing puts grid lines at both electrode ends. Ties go to the finer grid.
    pub fn snapped(length: f64, height: f64, electrode_radius: f64, nx: usize, ny: usize) -> Result<Self, MeshError> {
        let base = Self::new(length, height, electrode_radius, nx.max(2), ny);
        base.check_dimensions()?;
        let limit = 4 * nx.max(2) + 64;
        let mut best: Option<usize> = None;
        for cand in 2..=limit {
            let spec = Self { nx: cand, ..base };
            if spec.electrode_columns().is_ok() {
                let better = match best {
                    None => true,
                    Some(b) => {
                        let (db, dc) = (b.abs_diff(nx), cand.abs_diff(nx));
                        dc < db || (dc == db && cand > b)
                    }
                };
                if better {
                    best = Some(cand);
                }
            }
        }
        best.map(|nx| Self { nx, ..base })
            .ok_or_else(|| MeshError::InvalidGeometry(format!("no admissible nx near {nx}")))
    }

    fn check_dimensions(&self) -> Result<(), MeshError> {
        let bad = |m: &str| Err(MeshError::InvalidGeometry(m.to_string()));
        if !(self.length > 0.0 && self.length.is_finite()) {
            return bad("length must be positive");
        }
        if !(self.height > 0.0 && self.height.is_finite()) {
            return bad("height must be positive");
        }
        if !(self.electrode_radius > 0.0 && 2.0 * self.electrode_radius < self.length) {
            return bad("electrode radius must satisfy 0 < 2r < L");
        }
        if self.nx < 2 || self.ny < 2 {
            return bad("nx and ny must be at least 2");
        }
        Ok(())
    }

    /// Grid column indices of `x = L/2 - r` and `x = L/2 + r`.
    fn electrode_columns(&self) -> Result<(usize, usize), MeshError> {
        let dx = self.length / self.nx as f64;
        let column = |x: f64| {
            let k = (x / dx).round();
            if (k * dx - x).abs() <= SNAP_TOLERANCE * self.length.max(1.0) {
                Ok(k as usize)
            } else {
                Err(MeshError::NoGridLine { nx: self.nx, x })
            }
        };
        let half = 0.5 * self.length;
        Ok((
            column(half - self.electrode_radius)?,
            column(half + self.electrode_radius)?,
        ))
    }

    pub fn validate(&self) -> Result<(), MeshError> {
        self.check_dimensions()?;
        self.electrode_columns().map(|_| ())
    }
}

/// Conforming triangle mesh. Immutable after construction.
#[derive(Debug, Clone)]
pub struct Mesh2D {
    vertices: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    boundary_edges: Vec<BoundaryEdge>,
    areas: Vec<f64>,
    diameters: Vec<f64>,
}

fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

fn dist(p: [f64; 2], q: [f64; 2]) -> f64 {
    ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt()
}

impl Mesh2D {
    /// Validating constructor: positive triangle areas, and tagged edges that
    /// cover the topological boundary exactly once.
    pub fn new(
        vertices: Vec<[f64; 2]>,
        triangles: Vec<[usize; 3]>,
        boundary_edges: Vec<BoundaryEdge>,
    ) -> Result<Self, MeshError> {
        let nv = vertices.len();
        let mut areas = Vec::with_capacity(triangles.len());
        let mut diameters = Vec::with_capacity(triangles.len());
        for (index, tri) in triangles.iter().enumerate() {
            for &v in tri {
                if v >= nv {
                    return Err(MeshError::VertexOutOfRange { index: v, count: nv });
                }
            }
            let [a, b, c] = tri.map(|v| vertices[v]);
            let area = 0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]));
            let h = dist(a, b).max(dist(b, c)).max(dist(c, a));
            if !(area > 1e-14 * h * h) {
                return Err(MeshError::DegenerateTriangle { index, area });
            }
            areas.push(area);
            diameters.push(h);
        }

        let mut counts: HashMap<(usize, usize), usize> = HashMap::new();
        for tri in &triangles {
            for k in 0..3 {
                *counts.entry(edge_key(tri[k], tri[(k + 1) % 3])).or_insert(0) += 1;
            }
        }
        if let Some((e, c)) = counts.iter().find(|(_, &c)| c > 2) {
            return Err(MeshError::BoundaryMismatch(format!(
                "edge {e:?} shared by {c} triangles"
            )));
        }
        let mut tagged: HashMap<(usize, usize), Tag> = HashMap::new();
        for edge in &boundary_edges {
            let [a, b] = edge.vertices;
            if a >= nv || b >= nv {
                return Err(MeshError::VertexOutOfRange {
                    index: a.max(b),
                    count: nv,
                });
            }
            let key = edge_key(a, b);
            if counts.get(&key) != Some(&1) {
                return Err(MeshError::BoundaryMismatch(format!(
                    "tagged edge {key:?} is not a boundary edge"
                )));
            }
            if tagged.insert(key, edge.tag).is_some() {
                return Err(MeshError::BoundaryMismatch(format!("edge {key:?} tagged twice")));
            }
        }
        let boundary_count = counts.values().filter(|&&c| c == 1).count();
        if boundary_count != tagged.len() {
            return Err(MeshError::BoundaryMismatch(format!(
                "{} boundary edges but {} tagged",
                boundary_count,
                tagged.len()
            )));
        }

        Ok(Self {
            vertices,
            triangles,
            boundary_edges,
            areas,
            diameters,
        })
    }

    /// Builds a mesh, tagging every boundary edge with `tagger(midpoint)`.
    pub fn with_tagger(
        vertices: Vec<[f64; 2]>,
        triangles: Vec<[usize; 3]>,
        tagger: impl Fn([f64; 2]) -> Tag,
    ) -> Result<Self, MeshError> {
        let mut counts: HashMap<(usize, usize), (usize, [usize; 2])> = HashMap::new();
        for tri in &triangles {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                counts.entry(edge_key(a, b)).or_insert((0, [a, b])).0 += 1;
            }
        }
        let mut edges: Vec<_> = counts.into_iter().filter(|(_, (c, _))| *c == 1).collect();
        edges.sort_by_key(|(k, _)| *k);
        let mut boundary = Vec::with_capacity(edges.len());
        for (_, (_, [a, b])) in edges {
            if a >= vertices.len() || b >= vertices.len() {
                return Err(MeshError::VertexOutOfRange {
                    index: a.max(b),
                    count: vertices.len(),
                });
            }
            let (p, q) = (vertices[a], vertices[b]);
            let mid = [0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])];
            boundary.push(BoundaryEdge {
                vertices: [a, b],
                tag: tagger(mid),
            });
        }
        Self::new(vertices, triangles, boundary)
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn boundary_edges(&self) -> &[BoundaryEdge] {
        &self.boundary_edges
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn area(&self, t: usize) -> f64 {
        self.areas[t]
    }

    /// Longest edge of triangle `t`.
    pub fn diameter(&self, t: usize) -> f64 {
        self.diameters[t]
    }

    pub fn diameters(&self) -> &[f64] {
        &self.diameters
    }

    pub fn total_area(&self) -> f64 {
        self.areas.iter().sum()
    }

    pub fn triangle_coords(&self, t: usize) -> [[f64; 2]; 3] {
        self.triangles[t].map(|v| self.vertices[v])
    }

    pub fn edge_length(&self, edge: &BoundaryEdge) -> f64 {
        dist(self.vertices[edge.vertices[0]], self.vertices[edge.vertices[1]])
    }

    pub fn bounding_box(&self) -> ([f64; 2], [f64; 2]) {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for p in &self.vertices {
            for d in 0..2 {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
        (lo, hi)
    }

    /// Domain diameter, taken as the bounding-box diagonal (exact for rectangles).
    pub fn domain_diameter(&self) -> f64 {
        let (lo, hi) = self.bounding_box();
        dist(lo, hi)
    }

    /// Sorted, deduplicated vertices lying on edges with any of `tags`.
    pub fn vertices_on(&self, tags: &[Tag]) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .boundary_edges
            .iter()
            .filter(|e| tags.contains(&e.tag))
            .flat_map(|e| e.vertices)
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Edges carrying `tag`, ordered along the boundary part and oriented so
    /// the first vertex comes first. The ordering parameter is the coordinate
    /// of largest extent among the tag's vertices.
    pub fn boundary_edges_with_tag(&self, tag: Tag) -> Vec<BoundaryEdge> {
        let mut edges: Vec<BoundaryEdge> = self.boundary_edges.iter().filter(|e| e.tag == tag).copied().collect();
        if edges.is_empty() {
            return edges;
        }
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for e in &edges {
            for &v in &e.vertices {
                for d in 0..2 {
                    lo[d] = lo[d].min(self.vertices[v][d]);
                    hi[d] = hi[d].max(self.vertices[v][d]);
                }
            }
        }
        let axis = if hi[0] - lo[0] >= hi[1] - lo[1] { 0 } else { 1 };
        for e in &mut edges {
            if self.vertices[e.vertices[0]][axis] > self.vertices[e.vertices[1]][axis] {
                e.vertices.swap(0, 1);
            }
        }
        edges.sort_by(|a, b| {
            let pa = self.vertices[a.vertices[0]][axis];
            let pb = self.vertices[b.vertices[0]][axis];
            pa.total_cmp(&pb)
        });
        edges
    }

    /// Outward unit normal of a boundary edge.
    pub fn outward_normal(&self, edge: &BoundaryEdge) -> [f64; 2] {
        let [a, b] = edge.vertices;
        let (p, q) = (self.vertices[a], self.vertices[b]);
        let len = dist(p, q);
        let n = [(q[1] - p[1]) / len, -(q[0] - p[0]) / len];
        // Orient away from the interior vertex of the adjacent triangle.
        let tri = self
            .triangles
            .iter()
            .find(|t| t.contains(&a) && t.contains(&b))
            .expect("boundary edge belongs to a triangle");
        let c = tri.iter().copied().find(|&v| v != a && v != b).unwrap();
        let r = self.vertices[c];
        let inward = (r[0] - p[0]) * n[0] + (r[1] - p[1]) * n[1];
        if inward > 0.0 {
            [-n[0], -n[1]]
        } else {
            n
        }
    }

    /// Writes the plain-text `MESH2D v1` format.
    pub fn write_text<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "MESH2D v1")?;
        writeln!(w, "NV {}", self.vertices.len())?;
        for p in &self.vertices {
            writeln!(w, "{} {}", p[0], p[1])?;
        }
        writeln!(w, "NT {}", self.triangles.len())?;
        for t in &self.triangles {
            writeln!(w, "{} {} {}", t[0], t[1], t[2])?;
        }
        writeln!(w, "NB {}", self.boundary_edges.len())?;
        for e in &self.boundary_edges {
            writeln!(w, "{} {} {}", e.vertices[0], e.vertices[1], e.tag.id())?;
        }
        Ok(())
    }

    pub fn read_text<R: BufRead>(r: R) -> Result<Self, MeshError> {
        let mut lines = r.lines().enumerate().filter_map(|(i, l)| match l {
            Ok(s) if s.trim().is_empty() => None,
            other => Some((i + 1, other)),
        });
        let mut next = |what: &str| -> Result<(usize, String), MeshError> {
            match lines.next() {
                Some((n, Ok(s))) => Ok((n, s)),
                Some((_, Err(e))) => Err(e.into()),
                None => Err(MeshError::Parse {
                    line: 0,
                    message: format!("unexpected end of file, expected {what}"),
                }),
            }
        };
        let perr = |line: usize, message: String| MeshError::Parse { line, message };

        let (n, header) = next("header")?;
        if header.trim() != "MESH2D v1" {
            return Err(perr(n, format!("bad header {header:?}")));
        }
        let count = |key: &str, next: &mut dyn FnMut(&str) -> Result<(usize, String), MeshError>| {
            let (n, line) = next(key)?;
            let mut it = line.split_whitespace();
            if it.next() != Some(key) {
                return Err(perr(n, format!("expected {key}")));
            }
            it.next()
                .and_then(|s| s.parse::<usize>().ok())
                .ok_or_else(|| perr(n, format!("bad {key} count")))
        };
        fn fields<T: std::str::FromStr>(n: usize, line: &str, k: usize) -> Result<Vec<T>, MeshError> {
            let out: Option<Vec<T>> = line.split_whitespace().map(|s| s.parse().ok()).collect();
            match out {
                Some(v) if v.len() == k => Ok(v),
                _ => Err(MeshError::Parse {
                    line: n,
                    message: format!("expected {k} fields"),
                }),
            }
        }

        let nv = count("NV", &mut next)?;
        let mut vertices = Vec::with_capacity(nv);
        for _ in 0..nv {
            let (n, l) = next("vertex")?;
            let f: Vec<f64> = fields(n, &l, 2)?;
            vertices.push([f[0], f[1]]);
        }
        let nt = count("NT", &mut next)?;
        let mut triangles = Vec::with_capacity(nt);
        for _ in 0..nt {
            let (n, l) = next("triangle")?;
            let f: Vec<usize> = fields(n, &l, 3)?;
            triangles.push([f[0], f[1], f[2]]);
        }
        let nb = count("NB", &mut next)?;
        let mut boundary = Vec::with_capacity(nb);
        for _ in 0..nb {
            let (n, l) = next("boundary edge")?;
            let f: Vec<usize> = fields(n, &l, 3)?;
            let tag = u8::try_from(f[2])
                .ok()
                .and_then(Tag::from_id)
                .ok_or_else(|| perr(n, format!("bad tag {}", f[2])))?;
            boundary.push(BoundaryEdge {
                vertices: [f[0], f[1]],
                tag,
            });
        }
        Self::new(vertices, triangles, boundary)
    }

    pub fn save(&self, path: &Path) -> Result<(), MeshError> {
        let file = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(file);
        self.write_text(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, MeshError> {
        let file = std::fs::File::open(path)?;
        Self::read_text(std::io::BufReader::new(file))
    }
}

/// Structured `nx x ny` grid of the channel, each cell cut along its
/// lower-left to upper-right diagonal.
pub fn generate_channel_mesh(spec: &GeometrySpec) -> Result<Mesh2D, MeshError> {
    spec.validate()?;
    let (left_col, right_col) = spec.electrode_columns()?;
    let (nx, ny) = (spec.nx, spec.ny);
    let dx = spec.length / nx as f64;
    let dy = spec.height / ny as f64;
    let half = 0.5 * spec.length;

    let xs: Vec<f64> = (0..=nx)
        .map(|i| {
            if i == left_col {
                half - spec.electrode_radius
            } else if i == right_col {
                half + spec.electrode_radius
            } else if i == nx {
                spec.length
            } else {
                i as f64 * dx
            }
        })
        .collect();
    let ys: Vec<f64> = (0..=ny)
        .map(|j| if j == ny { spec.height } else { j as f64 * dy })
        .collect();

    let id = |i: usize, j: usize| j * (nx + 1) + i;
    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
    for &y in &ys {
        for &x in &xs {
            vertices.push([x, y]);
        }
    }
    let mut triangles = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            triangles.push([a, b, c]);
            triangles.push([a, c, d]);
        }
    }

    let mut boundary = Vec::with_capacity(2 * (nx + ny));
    for i in 0..nx {
        boundary.push(BoundaryEdge {
            vertices: [id(i, 0), id(i + 1, 0)],
            tag: Tag::Gamma2,
        });
    }
    for j in 0..ny {
        boundary.push(BoundaryEdge {
            vertices: [id(nx, j), id(nx, j + 1)],
            tag: Tag::Gamma3,
        });
    }
    for i in 0..nx {
        let tag = if i >= left_col && i < right_col {
            Tag::Gamma5
        } else {
            Tag::Gamma4
        };
        boundary.push(BoundaryEdge {
            vertices: [id(i + 1, ny), id(i, ny)],
            tag,
        });
    }
    for j in 0..ny {
        boundary.push(BoundaryEdge {
            vertices: [id(0, j + 1), id(0, j)],
            tag: Tag::Gamma1,
        });
    }
    Mesh2D::new(vertices, triangles, boundary)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QualityReport {
    /// Smallest interior angle, degrees.
    pub min_angle: f64,
    /// Largest `h_K * perimeter / (4 sqrt(3) area)`; 1 for an equilateral triangle.
    pub max_aspect: f64,
    pub h_min: f64,
    pub h_max: f64,
}

pub fn mesh_quality_report(mesh: &Mesh2D) -> QualityReport {
    let mut report = QualityReport {
        min_angle: f64::INFINITY,
        max_aspect: 0.0,
        h_min: f64::INFINITY,
        h_max: 0.0,
    };
    for t in 0..mesh.num_triangles() {
        let p = mesh.triangle_coords(t);
        let mut perimeter = 0.0;
        for k in 0..3 {
            let (a, b, c) = (p[k], p[(k + 1) % 3], p[(k + 2) % 3]);
            let u = [b[0] - a[0], b[1] - a[1]];
            let v = [c[0] - a[0], c[1] - a[1]];
            let cos = (u[0] * v[0] + u[1] * v[1]) / (dist(a, b) * dist(a, c));
            report.min_angle = report.min_angle.min(cos.clamp(-1.0, 1.0).acos().to_degrees());
            perimeter += dist(a, b);
        }
        let h = mesh.diameter(t);
        let aspect = h * perimeter / (4.0 * 3f64.sqrt() * mesh.area(t));
        report.max_aspect = report.max_aspect.max(aspect);
        report.h_min = report.h_min.min(h);
        report.h_max = report.h_max.max(h);
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    fn channel_mesh() -> Mesh2D {
        generate_channel_mesh(&GeometrySpec::new(1.5, 0.5, 0.075, 20, 10)).unwrap()
    }

    #[test]
    fn channel_grid_counts() {
        let mesh = channel_mesh();
        assert_eq!(mesh.num_vertices(), 231);
        assert_eq!(mesh.num_triangles(), 400);
        let g5 = mesh.boundary_edges_with_tag(Tag::Gamma5);
        let xs: Vec<f64> = g5
            .iter()
            .flat_map(|e| e.vertices.map(|v| mesh.vertices()[v][0]))
            .collect();
        let lo = xs.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(lo, 0.675);
        assert_eq!(hi, 0.825);
        for e in &g5 {
            for v in e.vertices {
                assert_eq!(mesh.vertices()[v][1], 0.5);
            }
        }
    }

    #[test]
    fn unit_square_four_by_two() {
        let mesh = generate_channel_mesh(&GeometrySpec::new(1.0, 1.0, 0.25, 4, 2)).unwrap();
        assert_eq!(mesh.num_vertices(), 15);
        assert_eq!(mesh.num_triangles(), 16);
        for t in 0..16 {
            assert!((mesh.area(t) - 0.0625).abs() < 1e-15);
        }
        let g5 = mesh.boundary_edges_with_tag(Tag::Gamma5);
        let total: f64 = g5.iter().map(|e| mesh.edge_length(e)).sum();
        assert!((total - 0.5).abs() < 1e-15);
        assert_eq!(mesh.vertices()[g5[0].vertices[0]], [0.25, 1.0]);
        assert_eq!(mesh.vertices()[g5.last().unwrap().vertices[1]], [0.75, 1.0]);
    }

    #[test]
    fn rejects_grid_missing_electrode_line() {
        let err = generate_channel_mesh(&GeometrySpec::new(1.5, 0.5, 0.075, 3, 2)).unwrap_err();
        assert!(matches!(err, MeshError::NoGridLine { .. }), "{err}");
    }

    #[test]
    fn rejects_bad_dimensions() {
        assert!(generate_channel_mesh(&GeometrySpec::new(1.0, 1.0, 0.5, 4, 4)).is_err());
        assert!(generate_channel_mesh(&GeometrySpec::new(-1.0, 1.0, 0.1, 4, 4)).is_err());
        assert!(generate_channel_mesh(&GeometrySpec::new(1.0, 1.0, 0.25, 1, 4)).is_err());
    }

    #[test]
    fn snapping_picks_nearest_admissible_count() {
        assert_eq!(GeometrySpec::snapped(1.5, 0.5, 0.075, 48, 16).unwrap().nx, 40);
        assert_eq!(GeometrySpec::snapped(1.5, 0.5, 0.075, 20, 10).unwrap().nx, 20);
        assert_eq!(GeometrySpec::snapped(1.5, 0.5, 0.075, 55, 10).unwrap().nx, 60);
    }

    #[test]
    fn gamma1_edges_ordered() {
        let mesh = channel_mesh();
        let g1 = mesh.boundary_edges_with_tag(Tag::Gamma1);
        assert_eq!(g1.len(), 10);
        let mut last = -1.0;
        for e in &g1 {
            let [a, b] = e.vertices.map(|v| mesh.vertices()[v]);
            assert_eq!(a[0], 0.0);
            assert_eq!(b[0], 0.0);
            assert!(a[1] > last && b[1] > a[1]);
            last = a[1];
        }
    }

    #[test]
    fn area_and_perimeter_sums() {
        let mesh = channel_mesh();
        assert!((mesh.total_area() - 0.75).abs() <= 1e-12 * 0.75);
        let perim: f64 = mesh.boundary_edges().iter().map(|e| mesh.edge_length(e)).sum();
        assert!((perim - 4.0).abs() <= 1e-12 * 4.0);
    }

    #[test]
    fn quality_of_uniform_grids() {
        let square = generate_channel_mesh(&GeometrySpec::new(1.0, 1.0, 0.25, 4, 4)).unwrap();
        let q = mesh_quality_report(&square);
        assert!((q.min_angle - 45.0).abs() < 1e-10);
        let mesh = channel_mesh();
        let q = mesh_quality_report(&mesh);
        let oracle = (0.05f64 / 0.075).atan().to_degrees();
        assert!((q.min_angle - oracle).abs() < 1e-10, "{} vs {}", q.min_angle, oracle);
        assert!((q.h_max - (0.075f64.powi(2) + 0.05f64.powi(2)).sqrt()).abs() < 1e-14);
    }

    #[test]
    fn collinear_triangle_rejected() {
        let err = Mesh2D::new(vec![[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]], vec![[0, 1, 2]], vec![]).unwrap_err();
        assert!(matches!(err, MeshError::DegenerateTriangle { .. }));
    }

    #[test]
    fn clockwise_triangle_rejected() {
        let err = Mesh2D::with_tagger(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], vec![[0, 2, 1]], |_| {
            Tag::Gamma2
        })
        .unwrap_err();
        assert!(matches!(err, MeshError::DegenerateTriangle { .. }));
    }

    #[test]
    fn untagged_boundary_rejected() {
        let mesh = channel_mesh();
        let mut edges = mesh.boundary_edges().to_vec();
        edges.pop();
        let err = Mesh2D::new(mesh.vertices().to_vec(), mesh.triangles().to_vec(), edges).unwrap_err();
        assert!(matches!(err, MeshError::BoundaryMismatch(_)));
    }

    #[test]
    fn edge_sharing() {
        let mesh = channel_mesh();
        let mut counts: HashMap<(usize, usize), usize> = HashMap::new();
        for t in mesh.triangles() {
            for k in 0..3 {
                *counts.entry(edge_key(t[k], t[(k + 1) % 3])).or_default() += 1;
            }
        }
        for e in mesh.boundary_edges() {
            assert_eq!(counts.remove(&edge_key(e.vertices[0], e.vertices[1])), Some(1));
        }
        assert!(counts.values().all(|&c| c == 2));
    }

    #[test]
    fn outward_normals_point_out() {
        let mesh = channel_mesh();
        for e in mesh.boundary_edges() {
            let n = mesh.outward_normal(e);
            let expect = match e.tag {
                Tag::Gamma1 => [-1.0, 0.0],
                Tag::Gamma2 => [0.0, -1.0],
                Tag::Gamma3 => [1.0, 0.0],
                Tag::Gamma4 | Tag::Gamma5 => [0.0, 1.0],
            };
            assert!((n[0] - expect[0]).abs() < 1e-14 && (n[1] - expect[1]).abs() < 1e-14);
        }
    }

    #[test]
    fn text_format_round_trip() {
        let mesh = channel_mesh();
        let mut buf = Vec::new();
        mesh.write_text(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("MESH2D v1\nNV 231\n"));
        let back = Mesh2D::read_text(buf.as_slice()).unwrap();
        assert_eq!(back.vertices(), mesh.vertices());
        assert_eq!(back.triangles(), mesh.triangles());
        assert_eq!(back.boundary_edges(), mesh.boundary_edges());
    }

    #[test]
    fn text_format_rejects_bad_tag() {
        let text = "MESH2D v1\nNV 3\n0 0\n1 0\n0 1\nNT 1\n0 1 2\nNB 3\n0 1 2\n1 2 9\n2 0 1\n";
        assert!(matches!(
            Mesh2D::read_text(text.as_bytes()),
            Err(MeshError::Parse { line: 10, .. })
        ));
    }
}
