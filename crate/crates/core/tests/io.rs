use laplace_limits::density::knn_density;
use laplace_limits::graphs::{build_knn_directed, build_self_tuning};
use laplace_limits::io::{
    read_density, read_graph, read_json, read_laplacian, read_matrix_market, read_point_cloud, read_table,
    sidecar_path, write_density, write_embedding, write_graph, write_laplacian, write_point_cloud, Sidecar,
    SCHEMA_VERSION,
};
use laplace_limits::laplacians::{assemble, LaplacianKind, ScalingInputs};
use laplace_limits::manifolds::{sample_points, ManifoldSpec};
use laplace_limits::Error;
use ndarray::Array2;

#[test]
fn graph_round_trip_keeps_weights_and_metadata() {
    let dir = tempfile::tempdir().unwrap();
    let cloud = sample_points(&ManifoldSpec::gauss_sheet(2.5).unwrap(), 300, 1).unwrap();
    for g in [build_self_tuning(&cloud.points, 8).unwrap(), build_knn_directed(&cloud.points, 5).unwrap()] {
        let path = dir.path().join(format!("{}.mtx", g.construction));
        write_graph(&path, &g, Some("abc123".into())).unwrap();
        let back = read_graph(&path).unwrap();
        assert_eq!(back, g);
        let meta: Sidecar<serde_json::Value> = read_json(&sidecar_path(&path)).unwrap();
        assert_eq!(meta.schema_version, SCHEMA_VERSION);
        assert_eq!(meta.config_hash.as_deref(), Some("abc123"));
    }
}

#[test]
fn laplacian_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cloud = sample_points(&ManifoldSpec::circle(1.0).unwrap(), 200, 2).unwrap();
    let g = build_self_tuning(&cloud.points, 6).unwrap();
    let inputs = ScalingInputs::for_graph(&g, 1).unwrap();
    for kind in [LaplacianKind::RandomWalk, LaplacianKind::Unnormalized, LaplacianKind::Normalized] {
        let l = assemble(&g, kind, &inputs).unwrap();
        let path = dir.path().join(format!("{kind}.mtx"));
        write_laplacian(&path, &l, Some("graphhash".into()), None).unwrap();
        assert_eq!(read_laplacian(&path).unwrap(), l);
    }
}

#[test]
fn density_and_cloud_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cloud = sample_points(&ManifoldSpec::toroidal_helix(2.0, 1.0, 8).unwrap(), 150, 3).unwrap();
    let cloud_path = dir.path().join("cloud.csv");
    write_point_cloud(&cloud_path, &cloud, None).unwrap();
    assert_eq!(read_point_cloud(&cloud_path).unwrap(), cloud);
    let est = knn_density(&cloud.points, 7, 1).unwrap();
    let path = dir.path().join("density.csv");
    write_density(&path, &est, Some("h".into())).unwrap();
    assert_eq!(read_density(&path).unwrap(), est);
}

#[test]
fn embedding_table_has_named_columns() {
    let dir = tempfile::tempdir().unwrap();
    let coords = Array2::from_shape_fn((4, 2), |(i, c)| i as f64 * 0.1 - c as f64);
    let path = dir.path().join("emb.csv");
    write_embedding(&path, &coords).unwrap();
    let (header, table) = read_table(&path).unwrap();
    assert_eq!(header, vec!["e0", "e1"]);
    assert_eq!(table, coords);
}

#[test]
fn corrupt_files_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.mtx");
    std::fs::write(&path, "%%MatrixMarket matrix coordinate real general\n2 2 1\n3 1 1.0\n").unwrap();
    assert!(matches!(read_matrix_market(&path), Err(Error::Parse(_))));
    std::fs::write(&path, "not a header\n").unwrap();
    assert!(matches!(read_matrix_market(&path), Err(Error::Parse(_))));
    // a graph without its sidecar
    std::fs::write(&path, "%%MatrixMarket matrix coordinate real general\n2 2 1\n1 2 1.0\n").unwrap();
    assert!(read_graph(&path).is_err());
    assert!(matches!(read_matrix_market(&dir.path().join("missing.mtx")), Err(Error::Io(_))));
}
