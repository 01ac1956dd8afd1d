use osstokes::export::{vtk_string, write_vtk, FieldDocument, FIELD_SCHEMA_VERSION};
use osstokes::fe::{Order, ScalarSpace};
use osstokes::mesh::{l_shaped_mesh, unit_square_mesh};
use osstokes::stokes::three_field::{solve_three_field_eigs, ThreeFieldParams};
use osstokes::stokes::FieldValues;

fn constant_fields(nodes: usize, stress: bool) -> FieldValues {
    FieldValues {
        velocity: [vec![0.5; nodes], vec![-2.0; nodes]],
        pressure: vec![1.0; nodes],
        stress: stress.then(|| [vec![3.0; nodes], vec![4.0; nodes], vec![5.0; nodes]]),
    }
}

/// Lines after `header` up to the next keyword line.
fn block<'a>(vtk: &'a str, header: &str) -> Vec<&'a str> {
    vtk.lines()
        .skip_while(|l| !l.starts_with(header))
        .skip(1)
        .skip_while(|l| l.starts_with("LOOKUP_TABLE"))
        .take_while(|l| !l.starts_with(|c: char| c.is_ascii_uppercase()))
        .collect()
}

#[test]
fn p1_constant_pressure() {
    let mesh = unit_square_mesh(2).unwrap();
    let vtk = vtk_string(&mesh, Order::P1, &constant_fields(9, false)).unwrap();
    assert!(vtk.starts_with("# vtk DataFile Version 3.0\n"));
    assert!(vtk.contains("POINTS 9 double"));
    assert!(vtk.contains("CELLS 8 32"));
    let pressure = block(&vtk, "SCALARS pressure");
    assert_eq!(pressure, vec!["1"; 9]);
    assert_eq!(block(&vtk, "VECTORS velocity").len(), 9);
    assert!(block(&vtk, "CELL_TYPES").iter().all(|l| *l == "5"));
    assert!(!vtk.contains("stress_xx"));
}

#[test]
fn p2_fields_use_the_refined_triangulation() {
    let mesh = l_shaped_mesh(2).unwrap();
    let space = ScalarSpace::new(&mesh, Order::P2);
    let nn = space.node_count();
    let vtk = vtk_string(&mesh, Order::P2, &constant_fields(nn, true)).unwrap();
    let cells = block(&vtk, "CELLS ");
    assert_eq!(cells.len(), 4 * mesh.triangle_count());
    // Every node is a corner of some sub-triangle, and sub-triangles tile
    // the domain with positive orientation.
    let points: Vec<[f64; 2]> = block(&vtk, "POINTS")
        .iter()
        .map(|l| {
            let v: Vec<f64> = l.split(' ').map(|x| x.parse().unwrap()).collect();
            [v[0], v[1]]
        })
        .collect();
    assert_eq!(points.len(), nn);
    let mut used = vec![false; nn];
    let mut area = 0.0;
    for c in &cells {
        let ids: Vec<usize> = c.split(' ').skip(1).map(|x| x.parse().unwrap()).collect();
        ids.iter().for_each(|&i| used[i] = true);
        let [a, b, d] = [points[ids[0]], points[ids[1]], points[ids[2]]];
        let signed = 0.5 * ((b[0] - a[0]) * (d[1] - a[1]) - (d[0] - a[0]) * (b[1] - a[1]));
        assert!(signed > 0.0);
        area += signed;
    }
    assert!(used.iter().all(|u| *u));
    assert!((area - 3.0).abs() < 1e-12);
    for name in ["stress_xx", "stress_xy", "stress_yy"] {
        assert_eq!(block(&vtk, &format!("SCALARS {name}")).len(), nn);
    }
}

#[test]
fn node_coordinates_round_trip() {
    let mesh = unit_square_mesh(3).unwrap();
    let space = ScalarSpace::new(&mesh, Order::P1);
    let vtk = vtk_string(&mesh, Order::P1, &constant_fields(space.node_count(), false)).unwrap();
    for (line, p) in block(&vtk, "POINTS").iter().zip(space.node_points()) {
        let v: Vec<f64> = line.split(' ').map(|x| x.parse().unwrap()).collect();
        assert_eq!(v, vec![p.x, p.y, 0.0]);
    }
}

#[test]
fn mismatched_fields_are_rejected() {
    let mesh = unit_square_mesh(2).unwrap();
    assert!(vtk_string(&mesh, Order::P1, &constant_fields(8, false)).is_err());
    assert!(vtk_string(&mesh, Order::P2, &constant_fields(9, false)).is_err());
}

#[test]
fn field_documents_round_trip() {
    let mesh = unit_square_mesh(4).unwrap();
    let modes = solve_three_field_eigs(&mesh, Order::P1, &ThreeFieldParams::default(), 2).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let prefix = dir.path().join("sq").to_string_lossy().into_owned();
    for (i, (pair, f)) in modes.solution.pairs.iter().zip(&modes.fields).enumerate() {
        let doc = FieldDocument::new(Order::P1, i + 1, pair.lambda, pair.residual, f);
        let path = FieldDocument::path_for(&prefix, i + 1);
        assert!(path.ends_with(&format!("sq_mode{}.json", i + 1)));
        doc.write(&path).unwrap();
        let back = FieldDocument::read(&path).unwrap();
        assert_eq!(back, doc);
        assert_eq!(back.fields(), *f);
        let vtk_path = dir.path().join(format!("mode{i}.vtk"));
        write_vtk(&vtk_path, &mesh, back.order, &back.fields()).unwrap();
        assert!(std::fs::read_to_string(vtk_path).unwrap().contains("stress_yy"));
    }
}

#[test]
fn unknown_schema_version_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("f.json");
    let mut doc = FieldDocument::new(Order::P1, 1, 1.0, 0.0, &constant_fields(4, false));
    doc.schema_version = FIELD_SCHEMA_VERSION + 1;
    doc.write(&path).unwrap();
    assert!(FieldDocument::read(&path).is_err());
}
