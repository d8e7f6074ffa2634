//! Analytic limit operators of graph Laplacians.
//!
//! A bandwidth field `r` and weight field `w` on a manifold with sampling
//! density `p` give the limit generator
//!
//! ```text
//! A f = ½ r² Δf + μ·∇f,   μ = r² (∇p/p + ∇w/w + (m + 2) ṙ/r)
//! ```
//!
//! which is always of the weighted Laplace–Beltrami form `½ r² Δ_q` with
//! `Δ_q f = Δf + ∇q/q · ∇f`. The drift is written with a plus sign so that
//! `−c_n L_rw f → A f` pushes toward regions of large `q`.

use serde::{Deserialize, Serialize};

use crate::graphs::Construction;
use crate::kernels::{BandwidthField, Combine, ScalarField, WeightField};
use crate::manifolds::{ChartFunction, ManifoldSpec};
use crate::{unit_ball_volume, Error, Result};

/// Drift, diffusion and degree of a limiting diffusion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitOperator {
    pub manifold: ManifoldSpec,
    pub bandwidth: BandwidthField,
    pub weight: WeightField,
}

impl LimitOperator {
    fn m(&self) -> usize {
        self.manifold.intrinsic_dim()
    }

    /// `r_x(x)`.
    pub fn bandwidth_at(&self, u: &[f64]) -> f64 {
        self.bandwidth.at_diag(u)
    }

    /// Drift `μ` in tangent frame coordinates.
    pub fn drift(&self, u: &[f64]) -> Result<Vec<f64>> {
        let m = self.m() as f64;
        let r = self.bandwidth.at_diag(u);
        let w = self.weight.at_diag(u);
        let glp = self.manifold.grad_log_density(u);
        let gw = self.weight.grad(&self.manifold, u)?;
        let rd = self.bandwidth.r_dot(&self.manifold, u)?;
        Ok((0..self.m()).map(|k| r * r * (glp[k] + gw[k] / w + (m + 2.0) * rd[k] / r)).collect())
    }

    /// Diffusion scale `r²`, so `σσᵀ = r² I`.
    pub fn diffusion_scale(&self, u: &[f64]) -> f64 {
        self.bandwidth.at_diag(u).powi(2)
    }

    /// Leading term of the scaled degree per unit `C′`: `V_m rᵐ w p`.
    pub fn degree_fn(&self, u: &[f64]) -> f64 {
        let m = self.m();
        unit_ball_volume(m)
            * self.bandwidth.at_diag(u).powi(m as i32)
            * self.weight.at_diag(u)
            * self.manifold.density(u)
    }

    /// Weight density `q = p² ω^{2s_w} γ^{2(m+2)s_r}` with `s` the first-order
    /// slopes of the field combinations, so that `μ = ½ r² ∇q/q`.
    pub fn weight_density(&self) -> ScalarField {
        let slope = |c: Combine| match c {
            Combine::Source => 0.0,
            Combine::Destination => 1.0,
            Combine::GeometricMean | Combine::Max => 0.5,
        };
        let m = self.m() as f64;
        let mut factors = vec![(ScalarField::density(&self.manifold), 2.0)];
        let sw = slope(self.weight.combine);
        if sw != 0.0 && !self.weight.omega.is_constant() {
            factors.push((self.weight.omega.clone(), 2.0 * sw));
        }
        let sr = slope(self.bandwidth.combine);
        if sr != 0.0 && !self.bandwidth.gamma.is_constant() {
            factors.push((self.bandwidth.gamma.clone(), 2.0 * (m + 2.0) * sr));
        }
        ScalarField::Product { scale: 1.0, factors }
    }

    /// Prefactor `r²` in `A = ½ r² Δ_q`.
    pub fn prefactor(&self, u: &[f64]) -> f64 {
        self.diffusion_scale(u)
    }

    /// `A f` at a chart point.
    pub fn generator(&self, f: &ChartFunction, u: &[f64]) -> Result<f64> {
        let mu = self.drift(u)?;
        let grad = f.gradient(&self.manifold, u);
        let lap = f.laplacian(&self.manifold, u);
        Ok(0.5 * self.diffusion_scale(u) * lap + mu.iter().zip(&grad).map(|(a, b)| a * b).sum::<f64>())
    }

    /// `(⟨f, A g⟩, ⟨A f, g⟩)` in `L₂(p)`; equal when `A` is self-adjoint there.
    pub fn adjointness_pair(&self, f: &ChartFunction, g: &ChartFunction) -> Result<(f64, f64)> {
        let spec = &self.manifold;
        let u0 = vec![spec.domain().lower[0]; spec.intrinsic_dim()];
        self.drift(&u0)?;
        let pair = |a: &ChartFunction, b: &ChartFunction| {
            spec.integrate(&|u| a.value(spec, u) * self.generator(b, u).unwrap_or(f64::NAN) * spec.density(u))
        };
        Ok((pair(f, g), pair(g, f)))
    }
}

/// Limit operator of the kernel with bandwidth `r` and weight `w`.
pub fn limit_from_fields(bandwidth: &BandwidthField, weight: &WeightField, spec: &ManifoldSpec) -> LimitOperator {
    LimitOperator { manifold: spec.clone(), bandwidth: bandwidth.clone(), weight: weight.clone() }
}

/// Limiting per-point kNN bandwidth `γ = (V_m p)^{−1/m}`, the limit of
/// `ρ_n / h_n` with `h_n = (k/n)^{1/m}`.
pub fn knn_bandwidth(spec: &ManifoldSpec) -> ScalarField {
    let m = spec.intrinsic_dim() as f64;
    ScalarField::density(spec).pow(-1.0 / m, unit_ball_volume(spec.intrinsic_dim()).powf(-1.0 / m))
}

/// Fields whose limit each construction has.
pub fn construction_fields(construction: Construction, spec: &ManifoldSpec) -> Result<(BandwidthField, WeightField)> {
    let gamma = knn_bandwidth(spec);
    let p = ScalarField::density(spec);
    Ok(match construction {
        Construction::RNeighborhood => (BandwidthField::constant(1.0), WeightField::constant(1.0)),
        Construction::KnnDirected => (BandwidthField::new(Combine::Source, gamma), WeightField::constant(1.0)),
        // self-tuning's geometric-mean bandwidth has the same first-order
        // expansion as the max, so both share one operator
        Construction::KnnUndirectedOr | Construction::SelfTuning => {
            (BandwidthField::new(Combine::Max, gamma), WeightField::constant(1.0))
        }
        Construction::PilotWeightedKnn => {
            (BandwidthField::new(Combine::Max, gamma), WeightField::new(Combine::GeometricMean, p))
        }
        Construction::DegreeNormalized => {
            (BandwidthField::constant(1.0), WeightField::new(Combine::GeometricMean, p.pow(-1.0, 1.0)))
        }
        Construction::GenericKernel => return Err(Error::UnknownConstruction(construction.to_string())),
    })
}

/// Closed-form limit operator of a construction.
pub fn catalog_limit(construction: Construction, spec: &ManifoldSpec) -> Result<LimitOperator> {
    let (bw, wf) = construction_fields(construction, spec)?;
    Ok(limit_from_fields(&bw, &wf, spec))
}

/// `Δ_q f = Δf + ∇q/q · ∇f` for an analytic test function.
pub fn apply_weighted_lb(spec: &ManifoldSpec, q: &ScalarField, f: &ChartFunction, u: &[f64]) -> Result<f64> {
    check_chart(spec, u)?;
    let glq = q.log_gradient(spec, u)?;
    let grad = f.gradient(spec, u);
    Ok(f.laplacian(spec, u) + glq.iter().zip(&grad).map(|(a, b)| a * b).sum::<f64>())
}

/// `Δ_q f` with chart derivatives of `f` from central differences.
pub fn apply_weighted_lb_fd(spec: &ManifoldSpec, q: &ScalarField, f: &dyn Fn(&[f64]) -> f64, u: &[f64]) -> Result<f64> {
    check_chart(spec, u)?;
    let m = u.len();
    let step = 1e-4 * u.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    let shifted = |k: usize, dk: f64, l: usize, dl: f64| {
        let mut v = u.to_vec();
        v[k] += dk;
        v[l] += dl;
        f(&v)
    };
    let mut partials = vec![0.0; m];
    let mut hess = vec![vec![0.0; m]; m];
    let f0 = f(u);
    for k in 0..m {
        let (p1, m1) = (shifted(k, step, k, 0.0), shifted(k, -step, k, 0.0));
        let (p2, m2) = (shifted(k, 2.0 * step, k, 0.0), shifted(k, -2.0 * step, k, 0.0));
        partials[k] = (8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * step);
        hess[k][k] = (-p2 + 16.0 * p1 - 30.0 * f0 + 16.0 * m1 - m2) / (12.0 * step * step);
        for l in 0..k {
            let v = (shifted(k, step, l, step) - shifted(k, step, l, -step) - shifted(k, -step, l, step)
                + shifted(k, -step, l, -step))
                / (4.0 * step * step);
            hess[k][l] = v;
            hess[l][k] = v;
        }
    }
    let grad = spec.frame_gradient(u, &partials);
    let glq = q.log_gradient(spec, u)?;
    Ok(spec.laplace_beltrami(u, &partials, &hess) + glq.iter().zip(&grad).map(|(a, b)| a * b).sum::<f64>())
}

fn check_chart(spec: &ManifoldSpec, u: &[f64]) -> Result<()> {
    if u.len() != spec.intrinsic_dim() {
        return Err(Error::DimensionMismatch { expected: spec.intrinsic_dim(), found: u.len() });
    }
    if !spec.domain().contains(u) {
        return Err(Error::OutOfChart(format!("{u:?}")));
    }
    Ok(())
}

/// `‖∇f‖²_{L₂(q)} = ∫ |∇f|² q dV` by quadrature.
pub fn smoothness_functional(spec: &ManifoldSpec, q: &ScalarField, f: &ChartFunction) -> f64 {
    spec.integrate(&|u| f.gradient(spec, u).iter().map(|g| g * g).sum::<f64>() * q.value_chart(u))
}

/// `⟨f, Δ_q f⟩_{L₂(q)}` by quadrature; equals `−‖∇f‖²_{L₂(q)}` for
/// functions without boundary flux.
pub fn weighted_energy(spec: &ManifoldSpec, q: &ScalarField, f: &ChartFunction) -> Result<f64> {
    let u0 = vec![spec.domain().lower[0]; spec.intrinsic_dim()];
    q.log_gradient(spec, &u0)?;
    Ok(spec.integrate(&|u| f.value(spec, u) * apply_weighted_lb(spec, q, f, u).unwrap_or(f64::NAN) * q.value_chart(u)))
}

/// Discrete counterpart `fᵀ (c′ L_u) f`.
pub fn discrete_smoothness(l: &crate::laplacians::LaplacianMatrix, f: &[f64]) -> Result<f64> {
    let lf = l.matrix.mul_vec(f)?;
    Ok(l.scaling * f.iter().zip(&lf).map(|(a, b)| a * b).sum::<f64>())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifolds::DensityModel;

    fn normal_interval() -> ManifoldSpec {
        ManifoldSpec::flat_interval(5.0).unwrap().with_density(DensityModel::TruncatedNormal { sd: 1.0 }).unwrap()
    }

    fn grid(spec: &ManifoldSpec) -> Vec<Vec<f64>> {
        crate::kernels::validation_grid(spec)
    }

    #[test]
    fn constant_fields_uniform_density() {
        let spec = ManifoldSpec::circle(1.0).unwrap();
        let op = limit_from_fields(&BandwidthField::constant(1.0), &WeightField::constant(1.0), &spec);
        for u in grid(&spec) {
            assert_eq!(op.drift(&u).unwrap(), vec![0.0]);
            assert_eq!(op.diffusion_scale(&u), 1.0);
        }
    }

    #[test]
    fn r_neighborhood_drift_is_log_gradient() {
        let spec = normal_interval();
        let op = catalog_limit(Construction::RNeighborhood, &spec).unwrap();
        for u in grid(&spec) {
            let mu = op.drift(&u).unwrap()[0];
            assert!((mu - (2.5 - u[0])).abs() < 1e-12);
        }
    }

    #[test]
    fn directed_knn_drift_by_substitution() {
        let spec = normal_interval();
        let op = catalog_limit(Construction::KnnDirected, &spec).unwrap();
        for u in grid(&spec) {
            let p = spec.density(&u);
            let c2 = 0.25; // c = V_1^{-1}
            let expected = c2 * p.powf(-2.0) * (2.5 - u[0]);
            assert!((op.drift(&u).unwrap()[0] - expected).abs() < 1e-10 * expected.abs().max(1.0));
            assert!((op.diffusion_scale(&u) - c2 * p.powf(-2.0)).abs() < 1e-10 * op.diffusion_scale(&u));
        }
    }

    #[test]
    fn or_knn_reverses_drift_in_one_dimension() {
        let spec = normal_interval();
        let op = catalog_limit(Construction::KnnUndirectedOr, &spec).unwrap();
        for u in grid(&spec) {
            let gp = spec.grad_log_density(&u)[0];
            let mu = op.drift(&u).unwrap()[0];
            let r2 = op.diffusion_scale(&u);
            assert!((mu + 0.5 * r2 * gp).abs() < 1e-10 * r2.max(1.0) * gp.abs().max(1.0));
        }
    }

    #[test]
    fn self_tuning_shares_or_knn_operator() {
        let spec = ManifoldSpec::gauss_sheet(2.5).unwrap();
        assert_eq!(
            catalog_limit(Construction::SelfTuning, &spec).unwrap(),
            catalog_limit(Construction::KnnUndirectedOr, &spec).unwrap()
        );
        assert!(catalog_limit(Construction::GenericKernel, &spec).is_err());
    }

    #[test]
    fn drift_equals_half_r2_grad_log_q() {
        let spec = ManifoldSpec::gauss_sheet(2.5).unwrap();
        for c in [
            Construction::RNeighborhood,
            Construction::KnnDirected,
            Construction::KnnUndirectedOr,
            Construction::PilotWeightedKnn,
            Construction::DegreeNormalized,
        ] {
            let op = catalog_limit(c, &spec).unwrap();
            let q = op.weight_density();
            for u in grid(&spec).into_iter().step_by(37) {
                let mu = op.drift(&u).unwrap();
                let glq = q.log_gradient(&spec, &u).unwrap();
                for k in 0..2 {
                    let want = 0.5 * op.diffusion_scale(&u) * glq[k];
                    assert!((mu[k] - want).abs() < 1e-10 * want.abs().max(1.0), "{c}");
                }
            }
        }
    }

    #[test]
    fn circle_laplacian_of_sine() {
        let spec = ManifoldSpec::circle(1.0).unwrap();
        let f = ChartFunction::Sine { axis: 0, frequency: 1.0, phase: 0.0 };
        for u in grid(&spec) {
            let v = apply_weighted_lb(&spec, &ScalarField::constant(1.0), &f, &u).unwrap();
            assert!((v + u[0].sin()).abs() < 1e-12);
            let c = apply_weighted_lb(&spec, &ScalarField::constant(1.0), &ChartFunction::Constant { value: 2.0 }, &u)
                .unwrap();
            assert_eq!(c, 0.0);
        }
    }

    #[test]
    fn flat_interval_weighted_square() {
        let spec = normal_interval();
        let q = ScalarField::density(&spec).pow(2.0, 1.0);
        let f = ChartFunction::Square { axis: 0 };
        for x in [0.5, 1.3, 4.1] {
            let want = 2.0 + 2.0 * (2.5 - x) * 2.0 * x;
            assert!((apply_weighted_lb(&spec, &q, &f, &[x]).unwrap() - want).abs() < 1e-12);
            let fd = apply_weighted_lb_fd(&spec, &q, &|u: &[f64]| u[0] * u[0], &[x]).unwrap();
            assert!((fd - want).abs() < 1e-6);
        }
        assert!(matches!(apply_weighted_lb(&spec, &q, &f, &[6.0]), Err(Error::OutOfChart(_))));
    }

    #[test]
    fn smoothness_of_linear_function() {
        let spec = ManifoldSpec::flat_interval(1.0).unwrap();
        let v = smoothness_functional(&spec, &ScalarField::constant(1.0), &ChartFunction::Linear { axis: 0 });
        assert!((v - 1.0).abs() < 1e-12);
        assert_eq!(
            smoothness_functional(&spec, &ScalarField::constant(1.0), &ChartFunction::Constant { value: 3.0 }),
            0.0
        );
    }

    #[test]
    fn adjointness_of_knn_limits() {
        let spec =
            ManifoldSpec::circle(1.0).unwrap().with_density(DensityModel::CosineModulated { amplitude: 0.5 }).unwrap();
        let f = ChartFunction::Sine { axis: 0, frequency: 1.0, phase: 0.0 };
        let g = ChartFunction::Sine { axis: 0, frequency: 2.0, phase: 0.3 };
        let (a, b) = catalog_limit(Construction::KnnDirected, &spec).unwrap().adjointness_pair(&f, &g).unwrap();
        assert!((a - b).abs() > 1e-3 * a.abs().max(b.abs()), "{a} {b}");
        let (a, b) = catalog_limit(Construction::KnnUndirectedOr, &spec).unwrap().adjointness_pair(&f, &g).unwrap();
        assert!((a - b).abs() < 1e-9 * a.abs().max(1.0), "{a} {b}");
    }
}
