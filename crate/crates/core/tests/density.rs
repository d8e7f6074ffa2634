use laplace_limits::density::{knn_density, pilot_weights};
use laplace_limits::manifolds::{sample_points, DensityModel, ManifoldSpec};
use ndarray::Array2;

#[test]
fn density_tracks_truncated_normal() {
    let spec =
        ManifoldSpec::flat_interval(5.0).unwrap().with_density(DensityModel::TruncatedNormal { sd: 1.0 }).unwrap();
    let n = 8000;
    let cloud = sample_points(&spec, n, 12).unwrap();
    let k = (n as f64).powf(2.0 / 3.0).ceil() as usize;
    let est = knn_density(&cloud.points, k, 1).unwrap();
    let errs: Vec<f64> = (0..n)
        .filter(|&i| (cloud.chart(i)[0] - 2.5).abs() < 1.5)
        .map(|i| (est.values[i] / spec.density(cloud.chart(i)) - 1.0).abs())
        .collect();
    let mean = errs.iter().sum::<f64>() / errs.len() as f64;
    assert!(mean < 0.1, "mean relative error {mean}");
}

#[test]
fn density_is_invariant_under_rigid_motion() {
    let spec = ManifoldSpec::gauss_sheet(2.5).unwrap();
    let cloud = sample_points(&spec, 500, 3).unwrap();
    let (c, s) = (0.6f64, 0.8f64);
    // rotation about the third axis followed by a translation
    let moved = Array2::from_shape_fn(cloud.points.dim(), |(i, a)| {
        let p = cloud.point(i);
        match a {
            0 => c * p[0] - s * p[1] + 10.0,
            1 => s * p[0] + c * p[1] - 3.0,
            _ => p[2] + 1.5,
        }
    });
    let a = knn_density(&cloud.points, 15, 2).unwrap();
    let b = knn_density(&moved, 15, 2).unwrap();
    for (x, y) in a.values.iter().zip(&b.values) {
        assert!((x - y).abs() <= 1e-10 * x);
    }
}

#[test]
fn pilot_field_is_larger_near_the_mode() {
    let spec = ManifoldSpec::gauss_sheet(2.5).unwrap();
    let cloud = sample_points(&spec, 3000, 21).unwrap();
    let est = knn_density(&cloud.points, 40, 2).unwrap();
    let field = pilot_weights(&est, &cloud.points).unwrap();
    let radius = |i: usize| cloud.chart(i).iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut order: Vec<usize> = (0..3000).collect();
    order.sort_by(|&a, &b| radius(a).total_cmp(&radius(b)));
    let (i, j) = (order[0], order[1]);
    let (p, q) = (order[2998], order[2999]);
    let inner = field.w(cloud.point(i), cloud.point(j));
    let outer = field.w(cloud.point(p), cloud.point(q));
    assert!(inner > outer, "{inner} vs {outer}");
    assert_eq!(field.w(cloud.point(i), cloud.point(p)), field.w(cloud.point(p), cloud.point(i)));
}
