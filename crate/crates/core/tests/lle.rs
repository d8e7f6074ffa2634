use laplace_limits::graphs::build_knn_undirected_or;
use laplace_limits::laplacians::{assemble, LaplacianKind, ScalingInputs};
use laplace_limits::lle::{embed_lle, fit_lle, regularization_sweep, split_generators};
use laplace_limits::manifolds::{sample_points, ChartFunction, ManifoldSpec};
use laplace_limits::spectral::{dense_smallest, fit_circle, EigenOptions};
use ndarray::Array2;

fn grid(n: usize, dx: f64) -> Array2<f64> {
    Array2::from_shape_fn((n, 1), |(i, _)| 0.3 + dx * i as f64)
}

#[test]
fn uniform_grid_gives_second_difference() {
    let dx = 0.01;
    let pts = grid(50, dx);
    let model = fit_lle(&pts, 2, 0.0).unwrap();
    let f: Vec<f64> = (0..50).map(|i| pts[[i, 0]].powi(2)).collect();
    let mf = model.m.mul_vec(&f).unwrap();
    for i in 1..49 {
        // f − ½ (f₋ + f₊) = −½ Δ²f = −dx² for f = x²
        assert!((mf[i] + dx * dx).abs() < 1e-12, "{i}: {}", mf[i]);
        assert!((model.w.get(i, i - 1) - 0.5).abs() < 1e-12 && (model.w.get(i, i + 1) - 0.5).abs() < 1e-12);
    }
}

#[test]
fn constants_are_annihilated() {
    let spec = ManifoldSpec::toroidal_helix(2.0, 1.0, 8).unwrap();
    let cloud = sample_points(&spec, 400, 5).unwrap();
    let model = fit_lle(&cloud.points, 10, 1e-3).unwrap();
    let mf = model.m.mul_vec(&vec![3.0; 400]).unwrap();
    assert!(mf.iter().all(|v| v.abs() < 1e-12));
    assert!(model.residuals.iter().all(|r| r.is_finite() && *r >= 0.0));
}

#[test]
fn gram_form_is_psd() {
    let spec = ManifoldSpec::gauss_sheet(2.5).unwrap();
    let cloud = sample_points(&spec, 300, 2).unwrap();
    let model = fit_lle(&cloud.points, 8, 1e-3).unwrap();
    let mtm = model.m.transpose().matmul(&model.m);
    let eig = dense_smallest(&mtm.add(&mtm.transpose()).map_entries(|_, _, v| 0.5 * v), 1).unwrap();
    assert!(eig.eigenvalues[0] >= -1e-10 * mtm.inf_norm());
}

#[test]
fn embedding_skips_the_constant_pair() {
    let spec = ManifoldSpec::circle(1.0).unwrap();
    let cloud = sample_points(&spec, 300, 8).unwrap();
    let model = fit_lle(&cloud.points, 6, 1e-3).unwrap();
    let emb = embed_lle(&model, 2, &EigenOptions::default()).unwrap();
    assert_eq!(emb.coords.dim(), (300, 2));
    assert!(emb.trivial_eigenvalue.abs() < 1e-10);
    // the embedding coordinates are orthogonal to constants
    for c in 0..2 {
        assert!(emb.coords.column(c).sum().abs() < 1e-8);
    }
}

#[test]
fn split_parts_are_generators() {
    let spec = ManifoldSpec::toroidal_helix(2.0, 1.0, 8).unwrap();
    let cloud = sample_points(&spec, 400, 1).unwrap();
    let model = fit_lle(&cloud.points, 10, 1e-6).unwrap();
    let (plus, minus) = split_generators(&model);
    assert!(plus.sub(&minus).sub(&model.m).max_abs() < 1e-12);
    for a in [&plus, &minus] {
        assert!(a.row_sums().iter().all(|s| s.abs() < 1e-10));
        assert!(a.triplets().all(|(i, j, v)| (i == j) == (v >= 0.0) || v == 0.0));
    }
}

#[test]
fn sweep_reports_each_regularization() {
    let spec = ManifoldSpec::toroidal_helix(2.0, 1.0, 8).unwrap();
    let cloud = sample_points(&spec, 600, 3).unwrap();
    let g = build_knn_undirected_or(&cloud.points, 10).unwrap();
    let l = assemble(&g, LaplacianKind::RandomWalk, &ScalingInputs::for_graph(&g, 1).unwrap()).unwrap();
    let fns = [ChartFunction::Constant { value: 1.0 }, ChartFunction::Sine { axis: 0, frequency: 1.0, phase: 0.0 }];
    let reports = regularization_sweep(&cloud, 10, &[1e-2, 1e-3, 1e-6], &l, &fns).unwrap();
    assert_eq!(reports.len(), 3);
    for r in &reports {
        assert_eq!(r.c_n, l.scaling);
        assert!(r.functions[0].lle_norm < 1e-8 * r.c_n);
        assert!(r.functions[1].cancellation_ratio.is_finite() && r.functions[1].cancellation_ratio > 0.0);
    }
    let wrong = sample_points(&spec, 100, 3).unwrap();
    assert!(regularization_sweep(&wrong, 10, &[1e-3], &l, &fns).is_err());
}

#[test]
fn helix_embedding_degrades_with_small_regularization() {
    let spec = ManifoldSpec::toroidal_helix(2.0, 1.0, 8).unwrap();
    let cloud = sample_points(&spec, 600, 4).unwrap();
    let rms = |reg: f64| {
        let emb = embed_lle(&fit_lle(&cloud.points, 10, reg).unwrap(), 2, &EigenOptions::default()).unwrap();
        fit_circle(&emb.coords).unwrap().relative_rms()
    };
    let (strong, weak) = (rms(1e-3), rms(1e-6));
    assert!(strong < weak, "{strong} vs {weak}");
}
