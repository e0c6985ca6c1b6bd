use std::collections::HashMap;

use ablatesim::mesh::{generate_channel_mesh, GeometrySpec, Mesh2D, Tag};
use proptest::prelude::*;

/// Specs whose electrode ends fall on grid lines by construction.
fn admissible() -> impl Strategy<Value = GeometrySpec> {
    (0.5f64..3.0, 0.2f64..2.0, 2usize..6, 1usize..4, 2usize..12).prop_flat_map(|(l, h, den, j, ny)| {
        (1..den).prop_map(move |a| GeometrySpec::new(l, h, l * a as f64 / (2 * den) as f64, 2 * den * j, ny))
    })
}

fn tag_length(m: &Mesh2D, tag: Tag) -> f64 {
    m.boundary_edges_with_tag(tag).iter().map(|e| m.edge_length(e)).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn area_and_perimeter(spec in admissible()) {
        let m = generate_channel_mesh(&spec).unwrap();
        let area = spec.length * spec.height;
        prop_assert!((m.total_area() - area).abs() <= 1e-12 * area);
        let p: f64 = m.boundary_edges().iter().map(|e| m.edge_length(e)).sum();
        let expect = 2.0 * (spec.length + spec.height);
        prop_assert!((p - expect).abs() <= 1e-12 * expect);
    }

    #[test]
    fn edges_shared_once_or_twice(spec in admissible()) {
        let m = generate_channel_mesh(&spec).unwrap();
        let mut count: HashMap<(usize, usize), usize> = HashMap::new();
        for t in m.triangles() {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                *count.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
        for e in m.boundary_edges() {
            let [a, b] = e.vertices;
            prop_assert_eq!(count.remove(&(a.min(b), a.max(b))), Some(1));
        }
        prop_assert!(count.values().all(|&c| c == 2));
    }

    #[test]
    fn tag_lengths_match_geometry(spec in admissible()) {
        let m = generate_channel_mesh(&spec).unwrap();
        let (l, h, r) = (spec.length, spec.height, spec.electrode_radius);
        let tol = 1e-12 * (l + h);
        prop_assert!((tag_length(&m, Tag::Gamma1) - h).abs() <= tol);
        prop_assert!((tag_length(&m, Tag::Gamma2) - l).abs() <= tol);
        prop_assert!((tag_length(&m, Tag::Gamma3) - h).abs() <= tol);
        prop_assert!((tag_length(&m, Tag::Gamma4) - (l - 2.0 * r)).abs() <= tol);
        prop_assert!((tag_length(&m, Tag::Gamma5) - 2.0 * r).abs() <= tol);
    }

    #[test]
    fn text_round_trip(spec in admissible()) {
        let m = generate_channel_mesh(&spec).unwrap();
        let mut buf = Vec::new();
        m.write_text(&mut buf).unwrap();
        let back = Mesh2D::read_text(&buf[..]).unwrap();
        prop_assert_eq!(back.vertices(), m.vertices());
        prop_assert_eq!(back.triangles(), m.triangles());
        prop_assert_eq!(back.boundary_edges(), m.boundary_edges());
    }
}

#[test]
fn save_and_load_file() {
    let m = generate_channel_mesh(&GeometrySpec::snapped(1.5, 0.5, 0.075, 48, 16).unwrap()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("channel.mesh");
    m.save(&path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("MESH2D v1\nNV 697\n"));
    let back = Mesh2D::load(&path).unwrap();
    assert_eq!(back.num_triangles(), 1280);
}

#[test]
fn truncated_file_is_a_parse_error() {
    let text = "MESH2D v1\nNV 3\n0 0\n1 0\n";
    let err = Mesh2D::read_text(text.as_bytes()).unwrap_err();
    assert!(err.to_string().contains("vertex"), "{err}");
}
