use laplace_limits::graphs::Construction;
use laplace_limits::laplacians::{apply, assemble, LaplacianKind};
use laplace_limits::manifolds::{sample_points, ChartFunction, DensityModel, ManifoldSpec};
use laplace_limits::validate::{
    build_cell, degree_limit_check, empirical_moments, frames_for, interior_mask, project_to_tangent, run_convergence,
    sphere_moment_oracle, GraphParam, GridPoint, SphereMomentParams,
};
use laplace_limits::Error;
use nalgebra::DMatrix;

fn mean_and_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[test]
fn uniform_interval_has_no_mean_drift() {
    let spec = ManifoldSpec::flat_interval(1.0).unwrap();
    let cell =
        build_cell(&spec, Construction::RNeighborhood, GridPoint { n: 4000, param: GraphParam::H(0.05) }, 3).unwrap();
    let est = empirical_moments(&cell.graph, &cell.cloud.points, &cell.inputs).unwrap();
    let mask = interior_mask(&cell.cloud, &cell.graph);
    let drift: Vec<f64> = (0..cell.cloud.len()).filter(|&i| mask[i]).map(|i| est.drift_hat[[i, 0]]).collect();
    let (mean, se) = mean_and_se(&drift);
    assert!(mean.abs() <= 3.0 * se, "mean drift {mean} vs SE {se}");
}

#[test]
fn circle_tangential_diffusion_is_one() {
    let spec = ManifoldSpec::circle(1.0).unwrap();
    let cell =
        build_cell(&spec, Construction::RNeighborhood, GridPoint { n: 4000, param: GraphParam::H(0.1) }, 5).unwrap();
    let est = empirical_moments(&cell.graph, &cell.cloud.points, &cell.inputs).unwrap();
    let tm = project_to_tangent(&est, &frames_for(&cell.cloud).unwrap()).unwrap();
    let tangential: Vec<f64> = (0..cell.cloud.len()).map(|i| tm.diffusion[[i, 0, 0]]).collect();
    let (mean, _) = mean_and_se(&tangential);
    assert!((mean - 1.0).abs() < 0.05, "tangential diffusion {mean}");
    // the normal part of the second moment is O(h²) relative to the tangential one
    let normal = tm.normal_diffusion.iter().sum::<f64>() / tm.normal_diffusion.len() as f64;
    assert!(normal < 0.05 * mean, "normal diffusion {normal}");
}

#[test]
fn flat_interval_has_no_normal_residual() {
    let spec = ManifoldSpec::flat_interval(1.0).unwrap();
    let cell =
        build_cell(&spec, Construction::RNeighborhood, GridPoint { n: 500, param: GraphParam::H(0.1) }, 1).unwrap();
    let est = empirical_moments(&cell.graph, &cell.cloud.points, &cell.inputs).unwrap();
    let tm = project_to_tangent(&est, &frames_for(&cell.cloud).unwrap()).unwrap();
    assert!(tm.normal_drift.iter().chain(&tm.normal_diffusion).all(|v| *v == 0.0));
}

#[test]
fn projected_diffusion_is_idempotent() {
    let spec = ManifoldSpec::toroidal_helix(2.0, 1.0, 8).unwrap();
    let cloud = sample_points(&spec, 5, 9).unwrap();
    let frames = frames_for(&cloud).unwrap();
    let sigma = DMatrix::from_fn(3, 3, |a, b| 1.0 / (1.0 + a as f64 + b as f64));
    for f in &frames {
        let once = f.basis.transpose() * &sigma * &f.basis;
        let twice = f.basis.transpose() * (&f.projector * &sigma * &f.projector) * &f.basis;
        assert!((once - twice).norm() < 1e-14);
    }
}

#[test]
fn generator_of_constant_is_zero_and_coordinates_give_drift() {
    let spec =
        ManifoldSpec::circle(1.0).unwrap().with_density(DensityModel::CosineModulated { amplitude: 0.5 }).unwrap();
    let cell =
        build_cell(&spec, Construction::KnnUndirectedOr, GridPoint { n: 800, param: GraphParam::K(12) }, 2).unwrap();
    let l = assemble(&cell.graph, LaplacianKind::RandomWalk, &cell.inputs).unwrap();
    let est = empirical_moments(&cell.graph, &cell.cloud.points, &cell.inputs).unwrap();
    assert!(apply(&l, &vec![1.0; 800]).unwrap().iter().all(|v| v.abs() < 1e-12 * l.scaling));
    for c in 0..2 {
        let af = apply(&l, &cell.cloud.points.column(c).to_vec()).unwrap();
        assert!((0..800).all(|i| (af[i] - est.drift_hat[[i, c]]).abs() < 1e-10 * l.scaling));
    }
}

#[test]
fn shifted_ball_first_moment_is_centroid() {
    // a shift large against the Monte-Carlo error separates hᵐ v_c from h^{m+2} v_c
    let (m, h) = (2, 0.1);
    let mut params = SphereMomentParams::centered(m, h, 200_000, 20100621);
    params.shift = vec![0.3 * h, 0.0];
    let est = sphere_moment_oracle(&params).unwrap();
    let target = h.powi(m as i32) * params.shift[0];
    assert!((est.m1[0] - target).abs() <= 3.0 * est.se_m1[0], "{} vs {target}", est.m1[0]);
    assert!(est.m1[1].abs() <= 3.0 * est.se_m1[1]);
    assert!((est.m0 - h * h).abs() <= 3.0 * est.se_m0);
}

#[test]
fn kinked_ball_mass_changes_at_order_h_cubed() {
    let (m, h) = (2, 0.1);
    let samples = 400_000;
    let plain = sphere_moment_oracle(&SphereMomentParams::centered(m, h, samples, 7)).unwrap();
    let mut params = SphereMomentParams::centered(m, h, samples, 7);
    params.kink = 0.01 * h * h;
    let kinked = sphere_moment_oracle(&params).unwrap();
    let diff = (kinked.m0 - plain.m0).abs();
    // shifting the two half balls by β changes the mass by O(β h^{m−1}) = O(h^{m+1})
    assert!(diff <= h.powi(m as i32 + 1) + 3.0 * (plain.se_m0 + kinked.se_m0), "ΔM₀ = {diff}");
}

#[test]
fn perturbed_radius_scales_mass() {
    let (m, h, delta) = (3, 0.2, 2.0);
    let mut params = SphereMomentParams::centered(m, h, 400_000, 11);
    params.perturbation = delta;
    let est = sphere_moment_oracle(&params).unwrap();
    let radius: f64 = h + h.powi(3) * delta;
    assert!((est.m0 - radius.powi(3)).abs() <= 3.0 * est.se_m0);
}

#[test]
fn r_neighborhood_degrees_concentrate() {
    let spec = ManifoldSpec::flat_interval(1.0).unwrap();
    let h = 0.05;
    let cell =
        build_cell(&spec, Construction::RNeighborhood, GridPoint { n: 5000, param: GraphParam::H(h) }, 4).unwrap();
    let check = degree_limit_check(&cell, Construction::RNeighborhood).unwrap();
    assert!(check.interior_cv < 0.1, "cv {}", check.interior_cv);
    let mask = interior_mask(&cell.cloud, &cell.graph);
    let errs: Vec<f64> = (0..5000).filter(|&i| mask[i]).map(|i| check.relative_error[i]).collect();
    assert!(errs.iter().sum::<f64>() / (errs.len() as f64) < 0.1);
}

#[test]
fn directed_knn_degrees_are_k() {
    let spec = ManifoldSpec::circle(1.0).unwrap();
    let cell = build_cell(&spec, Construction::KnnDirected, GridPoint { n: 300, param: GraphParam::K(7) }, 1).unwrap();
    assert!(cell.graph.weights.row_sums().iter().all(|&d| d == 7.0));
}

#[test]
fn self_tuning_degrees_vary_less_than_r_neighborhood() {
    let spec = ManifoldSpec::gauss_sheet(2.5).unwrap();
    let n = 2000;
    let tuned = build_cell(&spec, Construction::SelfTuning, GridPoint { n, param: GraphParam::K(30) }, 6).unwrap();
    let fixed = build_cell(&spec, Construction::RNeighborhood, GridPoint { n, param: GraphParam::H(0.4) }, 6).unwrap();
    let a = degree_limit_check(&tuned, Construction::SelfTuning).unwrap();
    let b = degree_limit_check(&fixed, Construction::RNeighborhood).unwrap();
    assert!(a.interior_cv < b.interior_cv, "{} vs {}", a.interior_cv, b.interior_cv);
}

#[test]
fn uniform_circle_convergence_report() {
    let spec = ManifoldSpec::circle(1.0).unwrap();
    let grid: Vec<GridPoint> =
        [500, 2000].iter().map(|&n| GridPoint { n, param: GraphParam::H((n as f64).powf(-0.2)) }).collect();
    let sine = ChartFunction::Sine { axis: 0, frequency: 1.0, phase: 0.0 };
    let report = run_convergence(&spec, Construction::RNeighborhood, &grid, &[1, 2], &[sine]).unwrap();
    assert_eq!(report.cells.len(), 4);
    let gen = report.mean_generator_median(0);
    assert!(gen[1] < gen[0], "{gen:?}");
    let drift = report.mean_drift_median();
    assert!(drift[1] < drift[0], "{drift:?}");
    assert!(report.cells.iter().all(|c| c.interior == c.grid.n));
    let json = serde_json::to_string(&report).unwrap();
    let back: laplace_limits::validate::ConvergenceReport = serde_json::from_str(&json).unwrap();
    assert_eq!(back.cells, report.cells);
}

#[test]
fn small_regime_is_flagged() {
    let spec = ManifoldSpec::circle(1.0).unwrap();
    let grid = [GridPoint { n: 200, param: GraphParam::H(0.15) }];
    let report = run_convergence(&spec, Construction::RNeighborhood, &grid, &[1], &[]).unwrap();
    assert_eq!(report.warnings.len(), 1);
    let sparse = [GridPoint { n: 20, param: GraphParam::H(0.01) }];
    assert!(matches!(
        run_convergence(&spec, Construction::RNeighborhood, &sparse, &[1], &[]),
        Err(Error::IsolatedVertex(_))
    ));
}
