//! File output: legacy VTK snapshots and the per-step probe table.
//!
//! Velocity is exported at vertices only. Bubble coefficients are interior
//! enrichments and have no vertex trace.

use std::fmt::Write as _;
use std::io;
use std::path::{Path, PathBuf};

use crate::config::{ProbeField, ProbeSpec};
use crate::coupler::{Diagnostics, SimState};
use crate::fem::{interior_rule, MiniVelocity, TriangleGeometry};
use crate::mesh::Mesh2D;

/// Writes through a sibling temporary file and renames it into place.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> io::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let mut tmp: PathBuf = path.to_path_buf();
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    tmp.set_file_name(format!(".{name}.tmp"));
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)
}

pub struct VtkFields<'a> {
    pub theta: &'a [f64],
    pub phi: &'a [f64],
    pub pressure: &'a [f64],
    pub velocity: &'a MiniVelocity,
}

impl<'a> VtkFields<'a> {
    pub fn of(state: &'a SimState) -> Self {
        Self {
            theta: &state.theta,
            phi: &state.phi,
            pressure: &state.pressure,
            velocity: &state.velocity,
        }
    }
}

/// Legacy ASCII unstructured grid with point data.
pub fn vtk_string(mesh: &Mesh2D, fields: &VtkFields<'_>, title: &str) -> String {
    let nv = mesh.num_vertices();
    let nt = mesh.num_triangles();
    let mut s = String::with_capacity(64 * nv);
    let title = title.replace('\n', " ");
    s.push_str("# vtk DataFile Version 3.0\n");
    let _ = writeln!(s, "{title}");
    s.push_str("ASCII\nDATASET UNSTRUCTURED_GRID\n");
    let _ = writeln!(s, "POINTS {nv} double");
    for p in mesh.vertices() {
        let _ = writeln!(s, "{} {} 0", p[0], p[1]);
    }
    let _ = writeln!(s, "CELLS {nt} {}", 4 * nt);
    for t in mesh.triangles() {
        let _ = writeln!(s, "3 {} {} {}", t[0], t[1], t[2]);
    }
    let _ = writeln!(s, "CELL_TYPES {nt}");
    for _ in 0..nt {
        s.push_str("5\n");
    }
    let _ = writeln!(s, "POINT_DATA {nv}");
    for (name, values) in [
        ("theta", fields.theta),
        ("phi", fields.phi),
        ("pressure", fields.pressure),
    ] {
        let _ = writeln!(s, "SCALARS {name} double 1\nLOOKUP_TABLE default");
        for v in &values[..nv] {
            let _ = writeln!(s, "{v}");
        }
    }
    s.push_str("VECTORS velocity double\n");
    for i in 0..nv {
        let [a, b] = fields.velocity.vertex_value(i);
        let _ = writeln!(s, "{a} {b} 0");
    }
    s
}

pub fn write_vtk(path: &Path, mesh: &Mesh2D, fields: &VtkFields<'_>, title: &str) -> io::Result<()> {
    atomic_write(path, vtk_string(mesh, fields, title).as_bytes())
}

pub fn write_state_vtk(path: &Path, mesh: &Mesh2D, state: &SimState) -> io::Result<()> {
    let title = format!("ablatesim step {} t={}", state.step, state.time);
    write_vtk(path, mesh, &VtkFields::of(state), &title)
}

pub const PROBE_COLUMNS: [&str; 8] = [
    "t",
    "max_theta",
    "argmax_x",
    "argmax_y",
    "int_theta",
    "div_norm",
    "max_art_visc",
    "plume_centroid_x",
];

fn field_name(f: ProbeField) -> &'static str {
    match f {
        ProbeField::Theta => "theta",
        ProbeField::Phi => "phi",
        ProbeField::Pressure => "pressure",
        ProbeField::Speed => "speed",
    }
}

/// Column names for the configured probes; `Argmax` yields two columns.
pub fn probe_header(specs: &[ProbeSpec]) -> Vec<String> {
    let mut h: Vec<String> = PROBE_COLUMNS.iter().map(|s| s.to_string()).collect();
    for (i, p) in specs.iter().enumerate() {
        match *p {
            ProbeSpec::Point { field, .. } => h.push(format!("p{i}_{}_point", field_name(field))),
            ProbeSpec::Max { field } => h.push(format!("p{i}_{}_max", field_name(field))),
            ProbeSpec::Integral { field } => h.push(format!("p{i}_{}_integral", field_name(field))),
            ProbeSpec::Argmax { field } => {
                h.push(format!("p{i}_{}_argmax_x", field_name(field)));
                h.push(format!("p{i}_{}_argmax_y", field_name(field)));
            }
        }
    }
    h
}

fn barycentric(mesh: &Mesh2D, t: usize, p: [f64; 2]) -> [f64; 3] {
    let [a, b, c] = mesh.triangle_coords(t);
    let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
    let l1 = ((p[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (p[1] - a[1])) / det;
    let l2 = ((b[0] - a[0]) * (p[1] - a[1]) - (p[0] - a[0]) * (b[1] - a[1])) / det;
    [1.0 - l1 - l2, l1, l2]
}

/// Triangle containing `p` (with a small tolerance) and its barycentrics.
pub fn locate(mesh: &Mesh2D, p: [f64; 2]) -> Option<(usize, [f64; 3])> {
    (0..mesh.num_triangles())
        .map(|t| (t, barycentric(mesh, t, p)))
        .find(|(_, b)| b.iter().all(|&l| l >= -1e-12))
}

fn nodal(state: &SimState, field: ProbeField) -> Vec<f64> {
    match field {
        ProbeField::Theta => state.theta.clone(),
        ProbeField::Phi => state.phi.clone(),
        ProbeField::Pressure => state.pressure.clone(),
        ProbeField::Speed => (0..state.theta.len())
            .map(|v| {
                let [a, b] = state.velocity.vertex_value(v);
                a.hypot(b)
            })
            .collect(),
    }
}

/// Values of the configured probes on `state`, in header order.
pub fn evaluate_probes(mesh: &Mesh2D, state: &SimState, specs: &[ProbeSpec]) -> Vec<f64> {
    let mut out = Vec::new();
    for p in specs {
        match *p {
            ProbeSpec::Point { field, x, y } => {
                let v = match locate(mesh, [x, y]) {
                    None => f64::NAN,
                    Some((t, b)) => {
                        let tri = mesh.triangles()[t];
                        if field == ProbeField::Speed {
                            let v = state.velocity.eval(tri, t, b);
                            v[0].hypot(v[1])
                        } else {
                            let u = nodal(state, field);
                            b[0] * u[tri[0]] + b[1] * u[tri[1]] + b[2] * u[tri[2]]
                        }
                    }
                };
                out.push(v);
            }
            ProbeSpec::Max { field } => out.push(nodal(state, field).into_iter().fold(f64::NEG_INFINITY, f64::max)),
            ProbeSpec::Argmax { field } => {
                let u = nodal(state, field);
                let (i, _) = u
                    .iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |b, (i, &v)| if v > b.1 { (i, v) } else { b });
                out.extend_from_slice(&mesh.vertices()[i]);
            }
            ProbeSpec::Integral { field } => {
                let rule = interior_rule();
                let mut total = 0.0;
                for t in 0..mesh.num_triangles() {
                    let tri = mesh.triangles()[t];
                    let geo = TriangleGeometry::of(mesh, t);
                    let u = (field != ProbeField::Speed).then(|| nodal(state, field));
                    for (b, w) in rule.points.iter().zip(&rule.weights) {
                        let val = match &u {
                            Some(u) => b[0] * u[tri[0]] + b[1] * u[tri[1]] + b[2] * u[tri[2]],
                            None => {
                                let v = state.velocity.eval(tri, t, *b);
                                v[0].hypot(v[1])
                            }
                        };
                        total += 2.0 * geo.area * w * val;
                    }
                }
                out.push(total);
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeRow {
    pub diagnostics: Diagnostics,
    pub extra: Vec<f64>,
}

pub fn probes_csv(specs: &[ProbeSpec], rows: &[ProbeRow]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(probe_header(specs)).expect("in-memory write");
    for r in rows {
        let d = &r.diagnostics;
        let mut rec = vec![
            d.time,
            d.max_theta,
            d.argmax[0],
            d.argmax[1],
            d.int_theta,
            d.div_norm,
            d.max_art_visc,
            d.plume_centroid_x,
        ];
        rec.extend_from_slice(&r.extra);
        w.write_record(rec.iter().map(|v| format!("{v:?}")))
            .expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

pub fn write_probes(path: &Path, specs: &[ProbeSpec], rows: &[ProbeRow]) -> io::Result<()> {
    atomic_write(path, &probes_csv(specs, rows))
}

/// Reads a probe table back as (header, rows of numbers).
pub fn read_probes(path: &Path) -> io::Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut r = csv::Reader::from_path(path).map_err(io::Error::other)?;
    let header = r
        .headers()
        .map_err(io::Error::other)?
        .iter()
        .map(String::from)
        .collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(io::Error::other)?;
        rows.push(rec.iter().map(|s| s.parse::<f64>().unwrap_or(f64::NAN)).collect());
    }
    Ok((header, rows))
}
