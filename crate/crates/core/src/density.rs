//! kNN density estimation and pilot weights.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::graphs::{build_index, knn_radii, KnnRadii};
use crate::kernels::{Combine, ScalarField, WeightField};
use crate::{unit_ball_volume, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DensityMethod {
    KnnBalloon,
}

/// Density values at the sample points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityEstimate {
    pub values: Vec<f64>,
    pub k: usize,
    pub m: usize,
    pub method: DensityMethod,
}

/// `p̂(xᵢ) = k / (n V_m ρ(xᵢ)^m)` with `ρ` the `k`th neighbor distance.
pub fn knn_density(points: &Array2<f64>, k: usize, m: usize) -> Result<DensityEstimate> {
    if m == 0 {
        return Err(Error::InvalidParameter("m must be at least 1".into()));
    }
    let radii = knn_radii(&build_index(points)?, k)?;
    Ok(density_from_radii(&radii, m))
}

pub fn density_from_radii(radii: &KnnRadii, m: usize) -> DensityEstimate {
    let scale = radii.k as f64 / (radii.n as f64 * unit_ball_volume(m));
    let values = radii.rho.iter().map(|r| scale / r.powi(m as i32)).collect();
    DensityEstimate { values, k: radii.k, m, method: DensityMethod::KnnBalloon }
}

/// Symmetric weight field `√(p̂(x) p̂(y))`, extended off the samples by the
/// nearest sample.
pub fn pilot_weights(est: &DensityEstimate, points: &Array2<f64>) -> Result<WeightField> {
    Ok(WeightField::new(Combine::GeometricMean, ScalarField::samples(points.clone(), est.values.clone())?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifolds::{sample_points, ManifoldSpec};

    #[test]
    fn uniform_interval_density_near_one() {
        let spec = ManifoldSpec::flat_interval(1.0).unwrap();
        let n = 5000;
        let cloud = sample_points(&spec, n, 17).unwrap();
        let k = (n as f64).powf(2.0 / 3.0).ceil() as usize;
        let est = knn_density(&cloud.points, k, 1).unwrap();
        let margin = k as f64 / n as f64;
        let interior: Vec<f64> =
            (0..n).filter(|&i| spec.boundary_distance(cloud.chart(i)) > margin).map(|i| est.values[i]).collect();
        let mean = interior.iter().sum::<f64>() / interior.len() as f64;
        assert!((mean - 1.0).abs() < 0.1, "mean {mean}");
    }

    #[test]
    fn scaling_halves_density() {
        let pts = Array2::from_shape_fn((50, 1), |(i, _)| ((i * 37) % 50) as f64 + 0.01 * (i * i % 7) as f64);
        let a = knn_density(&pts, 3, 1).unwrap();
        let b = knn_density(&pts.mapv(|v| 2.0 * v), 3, 1).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((x / y - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_pilot_gives_constant_field() {
        let pts = Array2::from_shape_fn((5, 1), |(i, _)| i as f64);
        let est = DensityEstimate { values: vec![3.0; 5], k: 1, m: 1, method: DensityMethod::KnnBalloon };
        let w = pilot_weights(&est, &pts).unwrap();
        assert_eq!(w.w(&[0.0], &[4.0]), 3.0);
        assert_eq!(w.w(&[1.2], &[3.9]), w.w(&[3.9], &[1.2]));
    }
}
