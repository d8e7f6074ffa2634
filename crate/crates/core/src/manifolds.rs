//! Analytic sample manifolds with known densities.
//!
//! Every manifold is given by a single chart `u ↦ i(u) ∈ ℝᵇ` together with a
//! sampling density `p` taken with respect to the manifold volume element.
//! Gradients are always returned in the coordinates of the orthonormal
//! tangent frame `H_x` obtained from the chart Jacobian, which agree with
//! normal coordinates to first order.

use std::f64::consts::PI;
use std::str::FromStr;

use nalgebra::DMatrix;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::quadrature::{composite_gauss, periodic_trapezoid};
use crate::{Error, Result};

/// Geometry of a shipped manifold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    /// Circle of the given radius in ℝ², chart = angle in `[0, 2π)`.
    Circle { radius: f64 },
    /// Curve winding `windings` times around a torus with radii `(major, minor)`,
    /// chart = angle `t ∈ [0, 2π)` around the major circle.
    ToroidalHelix { major_radius: f64, minor_radius: f64, windings: u32 },
    /// Square `[-T, T]²` rolled isometrically onto a cylinder of radius
    /// `bend_radius` in ℝ³.
    GaussSheet { truncation: f64, bend_radius: f64 },
    /// Segment `[0, length]` on the first axis of ℝ².
    FlatInterval { length: f64 },
}

/// Sampling density model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DensityModel {
    /// Uniform with respect to the volume element.
    Uniform,
    /// Independent normal coordinates centered on the chart midpoint,
    /// truncated to the chart.
    TruncatedNormal { sd: f64 },
    /// Circle only: `p(θ) ∝ 1 + a cos θ` per unit arc length.
    CosineModulated { amplitude: f64 },
    /// Helix only: uniform in the chart parameter `t`.
    UniformParameter,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawSpec {
    shape: Shape,
    density: DensityModel,
}

/// An analytic manifold together with its sampling density.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "RawSpec", into = "RawSpec")]
pub struct ManifoldSpec {
    shape: Shape,
    density: DensityModel,
    volume: f64,
    normalizer: f64,
}

impl PartialEq for ManifoldSpec {
    fn eq(&self, other: &Self) -> bool {
        self.shape == other.shape && self.density == other.density
    }
}

impl TryFrom<RawSpec> for ManifoldSpec {
    type Error = Error;
    fn try_from(raw: RawSpec) -> Result<Self> {
        ManifoldSpec::new(raw.shape, raw.density)
    }
}

impl From<ManifoldSpec> for RawSpec {
    fn from(s: ManifoldSpec) -> Self {
        RawSpec { shape: s.shape, density: s.density }
    }
}

/// Axis-aligned chart domain; periodic charts wrap every coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct ChartDomain {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub periodic: bool,
}

impl ChartDomain {
    pub fn contains(&self, u: &[f64]) -> bool {
        self.periodic || u.iter().zip(self.lower.iter().zip(&self.upper)).all(|(x, (a, b))| *x >= *a && *x <= *b)
    }
}

impl ManifoldSpec {
    pub fn new(shape: Shape, density: DensityModel) -> Result<Self> {
        let bad = |msg: &str| Err(Error::InvalidManifold(msg.to_string()));
        match shape {
            Shape::Circle { radius } if !(radius > 0.0) => return bad("circle radius must be positive"),
            Shape::ToroidalHelix { major_radius, minor_radius, windings } => {
                if !(minor_radius > 0.0 && major_radius > minor_radius) || windings == 0 {
                    return bad("toroidal helix needs major > minor > 0 and at least one winding");
                }
            }
            Shape::GaussSheet { truncation, bend_radius } => {
                if !(truncation > 0.0 && bend_radius > 0.0) {
                    return bad("gauss sheet needs positive truncation and bend radius");
                }
                if truncation / bend_radius >= PI {
                    return bad("gauss sheet would wrap onto itself");
                }
            }
            Shape::FlatInterval { length } if !(length > 0.0) => return bad("interval length must be positive"),
            _ => {}
        }
        match (shape, density) {
            (_, DensityModel::Uniform) => {}
            (Shape::FlatInterval { .. } | Shape::GaussSheet { .. }, DensityModel::TruncatedNormal { sd })
                if sd > 0.0 => {}
            (Shape::Circle { .. }, DensityModel::CosineModulated { amplitude }) if amplitude.abs() < 1.0 => {}
            (Shape::ToroidalHelix { .. }, DensityModel::UniformParameter) => {}
            _ => return bad("density model not supported on this shape"),
        }
        let mut spec = Self { shape, density, volume: 1.0, normalizer: 1.0 };
        spec.volume = spec.integrate_chart(&|u| spec.volume_element(u));
        spec.normalizer = match density {
            DensityModel::Uniform => 1.0 / spec.volume,
            DensityModel::TruncatedNormal { sd } => {
                let t = spec.half_width();
                let z = statrs::function::erf::erf(t / (sd * std::f64::consts::SQRT_2));
                1.0 / (sd * (2.0 * PI).sqrt() * z)
            }
            DensityModel::CosineModulated { .. } | DensityModel::UniformParameter => 1.0 / (2.0 * PI),
        };
        let mass = spec.integrate(&|u| spec.density(u));
        if (mass - 1.0).abs() > 1e-4 {
            return Err(Error::InvalidManifold(format!("density integrates to {mass}, not 1")));
        }
        Ok(spec)
    }

    pub fn circle(radius: f64) -> Result<Self> {
        Self::new(Shape::Circle { radius }, DensityModel::Uniform)
    }

    pub fn toroidal_helix(major_radius: f64, minor_radius: f64, windings: u32) -> Result<Self> {
        Self::new(Shape::ToroidalHelix { major_radius, minor_radius, windings }, DensityModel::UniformParameter)
    }

    /// Sheet with truncated standard normal chart coordinates.
    pub fn gauss_sheet(truncation: f64) -> Result<Self> {
        Self::new(Shape::GaussSheet { truncation, bend_radius: 2.0 }, DensityModel::TruncatedNormal { sd: 1.0 })
    }

    pub fn flat_interval(length: f64) -> Result<Self> {
        Self::new(Shape::FlatInterval { length }, DensityModel::Uniform)
    }

    /// Same shape with a different density model.
    pub fn with_density(&self, density: DensityModel) -> Result<Self> {
        Self::new(self.shape, density)
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn density_model(&self) -> DensityModel {
        self.density
    }

    pub fn name(&self) -> &'static str {
        match self.shape {
            Shape::Circle { .. } => "circle",
            Shape::ToroidalHelix { .. } => "toroidal_helix",
            Shape::GaussSheet { .. } => "gauss_sheet",
            Shape::FlatInterval { .. } => "flat_interval",
        }
    }

    pub fn intrinsic_dim(&self) -> usize {
        match self.shape {
            Shape::GaussSheet { .. } => 2,
            _ => 1,
        }
    }

    pub fn ambient_dim(&self) -> usize {
        match self.shape {
            Shape::Circle { .. } | Shape::FlatInterval { .. } => 2,
            Shape::ToroidalHelix { .. } | Shape::GaussSheet { .. } => 3,
        }
    }

    /// Total volume (length or area) of the manifold.
    pub fn volume(&self) -> f64 {
        self.volume
    }

    fn half_width(&self) -> f64 {
        match self.shape {
            Shape::FlatInterval { length } => 0.5 * length,
            Shape::GaussSheet { truncation, .. } => truncation,
            _ => PI,
        }
    }

    pub fn domain(&self) -> ChartDomain {
        match self.shape {
            Shape::Circle { .. } | Shape::ToroidalHelix { .. } => {
                ChartDomain { lower: vec![0.0], upper: vec![2.0 * PI], periodic: true }
            }
            Shape::GaussSheet { truncation: t, .. } => {
                ChartDomain { lower: vec![-t, -t], upper: vec![t, t], periodic: false }
            }
            Shape::FlatInterval { length } => ChartDomain { lower: vec![0.0], upper: vec![length], periodic: false },
        }
    }

    fn chart_center(&self) -> Vec<f64> {
        let d = self.domain();
        d.lower.iter().zip(&d.upper).map(|(a, b)| 0.5 * (a + b)).collect()
    }

    /// Embedding `u ↦ i(u)`.
    pub fn embed(&self, u: &[f64]) -> Vec<f64> {
        match self.shape {
            Shape::Circle { radius } => vec![radius * u[0].cos(), radius * u[0].sin()],
            Shape::ToroidalHelix { major_radius, minor_radius, windings } => {
                let t = u[0];
                let wt = windings as f64 * t;
                let rho = major_radius + minor_radius * wt.cos();
                vec![rho * t.cos(), rho * t.sin(), minor_radius * wt.sin()]
            }
            Shape::GaussSheet { bend_radius: b, .. } => {
                vec![b * (u[0] / b).sin(), b * (1.0 - (u[0] / b).cos()), u[1]]
            }
            Shape::FlatInterval { .. } => vec![u[0], 0.0],
        }
    }

    /// Chart coordinates of an on-manifold ambient point.
    pub fn chart_of(&self, x: &[f64]) -> Vec<f64> {
        match self.shape {
            Shape::Circle { .. } | Shape::ToroidalHelix { .. } => vec![x[1].atan2(x[0]).rem_euclid(2.0 * PI)],
            Shape::GaussSheet { bend_radius: b, .. } => vec![b * x[0].atan2(b - x[1]), x[2]],
            Shape::FlatInterval { .. } => vec![x[0]],
        }
    }

    /// Chart Jacobian `∂i/∂u`, a `b × m` matrix.
    pub fn jacobian(&self, u: &[f64]) -> DMatrix<f64> {
        match self.shape {
            Shape::Circle { radius } => DMatrix::from_column_slice(2, 1, &[-radius * u[0].sin(), radius * u[0].cos()]),
            Shape::ToroidalHelix { major_radius, minor_radius, windings } => {
                let (t, w) = (u[0], windings as f64);
                let rho = major_radius + minor_radius * (w * t).cos();
                let drho = -minor_radius * w * (w * t).sin();
                DMatrix::from_column_slice(
                    3,
                    1,
                    &[drho * t.cos() - rho * t.sin(), drho * t.sin() + rho * t.cos(), minor_radius * w * (w * t).cos()],
                )
            }
            Shape::GaussSheet { bend_radius: b, .. } => {
                DMatrix::from_column_slice(3, 2, &[(u[0] / b).cos(), (u[0] / b).sin(), 0.0, 0.0, 0.0, 1.0])
            }
            Shape::FlatInterval { .. } => DMatrix::from_column_slice(2, 1, &[1.0, 0.0]),
        }
    }

    /// Speed `|di/dt|` of a one-dimensional chart and its derivative.
    fn speed(&self, u: &[f64]) -> (f64, f64) {
        match self.shape {
            Shape::Circle { radius } => (radius, 0.0),
            Shape::ToroidalHelix { major_radius, minor_radius, windings } => {
                let w = windings as f64;
                let rho = major_radius + minor_radius * (w * u[0]).cos();
                let s = (rho * rho + minor_radius * minor_radius * w * w).sqrt();
                (s, -rho * minor_radius * w * (w * u[0]).sin() / s)
            }
            _ => (1.0, 0.0),
        }
    }

    /// `√det(JᵀJ)`, the volume element of the chart.
    pub fn volume_element(&self, u: &[f64]) -> f64 {
        match self.shape {
            Shape::GaussSheet { .. } | Shape::FlatInterval { .. } => 1.0,
            _ => self.speed(u).0,
        }
    }

    /// Sampling density with respect to the manifold volume element.
    pub fn density(&self, u: &[f64]) -> f64 {
        self.chart_density(u) / self.volume_element(u)
    }

    /// Density of the chart coordinates with respect to Lebesgue measure.
    pub fn chart_density(&self, u: &[f64]) -> f64 {
        match self.density {
            DensityModel::Uniform => self.normalizer * self.volume_element(u),
            DensityModel::TruncatedNormal { sd } => {
                let c = self.chart_center();
                u.iter().zip(&c).map(|(x, m)| self.normalizer * (-0.5 * ((x - m) / sd).powi(2)).exp()).product()
            }
            DensityModel::CosineModulated { amplitude } => self.normalizer * (1.0 + amplitude * u[0].cos()),
            DensityModel::UniformParameter => self.normalizer,
        }
    }

    fn chart_density_bound(&self) -> f64 {
        match self.density {
            DensityModel::Uniform => {
                let vmax = match self.shape {
                    Shape::ToroidalHelix { major_radius, minor_radius, windings } => {
                        let w = windings as f64;
                        ((major_radius + minor_radius).powi(2) + (minor_radius * w).powi(2)).sqrt()
                    }
                    _ => self.volume_element(&self.chart_center()),
                };
                self.normalizer * vmax
            }
            DensityModel::TruncatedNormal { .. } => self.normalizer.powi(self.intrinsic_dim() as i32),
            DensityModel::CosineModulated { amplitude } => self.normalizer * (1.0 + amplitude.abs()),
            DensityModel::UniformParameter => self.normalizer,
        }
    }

    /// `∇ log p` in tangent frame coordinates.
    pub fn grad_log_density(&self, u: &[f64]) -> Vec<f64> {
        let partials = match self.density {
            // p is constant per unit volume on every shipped shape
            DensityModel::Uniform => vec![0.0; self.intrinsic_dim()],
            DensityModel::TruncatedNormal { sd } => {
                let c = self.chart_center();
                u.iter().zip(&c).map(|(x, m)| -(x - m) / (sd * sd)).collect()
            }
            DensityModel::CosineModulated { amplitude } => {
                vec![-amplitude * u[0].sin() / (1.0 + amplitude * u[0].cos())]
            }
            DensityModel::UniformParameter => {
                let (s, ds) = self.speed(u);
                vec![-ds / s]
            }
        };
        self.frame_gradient(u, &partials)
    }

    /// Converts chart partial derivatives of a function into its gradient in
    /// tangent frame coordinates.
    pub fn frame_gradient(&self, u: &[f64], partials: &[f64]) -> Vec<f64> {
        match self.shape {
            Shape::GaussSheet { .. } | Shape::FlatInterval { .. } => partials.to_vec(),
            _ => vec![partials[0] / self.speed(u).0],
        }
    }

    /// Laplace–Beltrami operator of a function from its chart gradient and Hessian.
    pub fn laplace_beltrami(&self, u: &[f64], partials: &[f64], hessian: &[Vec<f64>]) -> f64 {
        match self.shape {
            Shape::GaussSheet { .. } | Shape::FlatInterval { .. } => (0..partials.len()).map(|i| hessian[i][i]).sum(),
            _ => {
                let (s, ds) = self.speed(u);
                (hessian[0][0] - ds / s * partials[0]) / (s * s)
            }
        }
    }

    /// Maximum chart distance over which normal displacements are defined.
    pub fn chart_radius(&self) -> f64 {
        match self.shape {
            Shape::Circle { .. } => PI / 2.0,
            Shape::ToroidalHelix { windings, .. } => PI / (2.0 * windings as f64),
            _ => f64::INFINITY,
        }
    }

    /// Distance between chart points, wrapping periodic charts.
    pub fn chart_distance(&self, a: &[f64], b: &[f64]) -> f64 {
        let d = self.domain();
        a.iter()
            .zip(b)
            .zip(d.lower.iter().zip(&d.upper))
            .map(|((x, y), (lo, hi))| {
                let mut diff = (x - y).abs();
                if d.periodic {
                    diff = diff.rem_euclid(hi - lo);
                    diff = diff.min(hi - lo - diff);
                }
                diff * diff
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Geodesic distance from `u` to the chart boundary, infinite when the
    /// manifold has none.
    pub fn boundary_distance(&self, u: &[f64]) -> f64 {
        let d = self.domain();
        if d.periodic {
            return f64::INFINITY;
        }
        u.iter()
            .zip(d.lower.iter().zip(&d.upper))
            .map(|(x, (lo, hi))| (x - lo).min(hi - x))
            .fold(f64::INFINITY, f64::min)
    }

    /// Upper bound on the curvature of the embedding.
    pub fn curvature_bound(&self) -> f64 {
        match self.shape {
            Shape::Circle { radius } => 1.0 / radius,
            Shape::FlatInterval { .. } => 0.0,
            Shape::GaussSheet { bend_radius, .. } => 1.0 / bend_radius,
            Shape::ToroidalHelix { major_radius, minor_radius, windings } => {
                let w = windings as f64;
                let mut kmax: f64 = 0.0;
                let steps = 20_000;
                for i in 0..steps {
                    let t = 2.0 * PI * i as f64 / steps as f64;
                    let (c, s) = (t.cos(), t.sin());
                    let rho = major_radius + minor_radius * (w * t).cos();
                    let d1 = -minor_radius * w * (w * t).sin();
                    let d2 = -minor_radius * w * w * (w * t).cos();
                    let v = [d1 * c - rho * s, d1 * s + rho * c, minor_radius * w * (w * t).cos()];
                    let a = [
                        d2 * c - 2.0 * d1 * s - rho * c,
                        d2 * s + 2.0 * d1 * c - rho * s,
                        -minor_radius * w * w * (w * t).sin(),
                    ];
                    let cross = [v[1] * a[2] - v[2] * a[1], v[2] * a[0] - v[0] * a[2], v[0] * a[1] - v[1] * a[0]];
                    let num = cross.iter().map(|x| x * x).sum::<f64>().sqrt();
                    let speed = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                    kmax = kmax.max(num / speed.powi(3));
                }
                kmax * 1.01
            }
        }
    }

    /// Quadrature of `f(u)` against chart Lebesgue measure.
    pub fn integrate_chart(&self, f: &dyn Fn(&[f64]) -> f64) -> f64 {
        let d = self.domain();
        if d.periodic {
            return periodic_trapezoid(d.lower[0], d.upper[0] - d.lower[0], 8192)
                .iter()
                .map(|(t, w)| w * f(&[*t]))
                .sum();
        }
        let rule = |i: usize| composite_gauss(d.lower[i], d.upper[i], 64, 8);
        if self.intrinsic_dim() == 1 {
            rule(0).iter().map(|(x, w)| w * f(&[*x])).sum()
        } else {
            let (r0, r1) = (rule(0), rule(1));
            r0.iter().map(|(x, wx)| r1.iter().map(|(y, wy)| wx * wy * f(&[*x, *y])).sum::<f64>()).sum()
        }
    }

    /// Quadrature of `f` against the manifold volume element.
    pub fn integrate(&self, f: &dyn Fn(&[f64]) -> f64) -> f64 {
        self.integrate_chart(&|u| f(u) * self.volume_element(u))
    }
}

/// Points sampled on a manifold, with their chart coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointCloud {
    pub spec: ManifoldSpec,
    pub points: Array2<f64>,
    pub chart_coords: Array2<f64>,
    pub seed: u64,
}

impl PointCloud {
    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.nrows() == 0
    }

    pub fn chart(&self, i: usize) -> &[f64] {
        self.chart_coords.row(i).to_slice().expect("row-major storage")
    }

    pub fn point(&self, i: usize) -> &[f64] {
        self.points.row(i).to_slice().expect("row-major storage")
    }
}

/// Draws `n` i.i.d. points from the manifold's density by rejection sampling
/// in chart coordinates.
pub fn sample_points(spec: &ManifoldSpec, n: usize, seed: u64) -> Result<PointCloud> {
    if n == 0 {
        return Err(Error::InvalidParameter("n must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dom = spec.domain();
    let (m, b) = (spec.intrinsic_dim(), spec.ambient_dim());
    let bound = spec.chart_density_bound();
    let cap = 1000 * n as u64 + 10_000;
    let mut chart = Array2::zeros((n, m));
    let mut points = Array2::zeros((n, b));
    let mut attempts = 0u64;
    let mut u = vec![0.0; m];
    for i in 0..n {
        loop {
            attempts += 1;
            if attempts > cap {
                return Err(Error::SamplerExhausted { attempts: cap });
            }
            for (k, uk) in u.iter_mut().enumerate() {
                *uk = rng.random_range(dom.lower[k]..dom.upper[k]);
            }
            let y: f64 = rng.random::<f64>() * bound;
            if y < spec.chart_density(&u) {
                break;
            }
        }
        let x = spec.embed(&u);
        for k in 0..m {
            chart[[i, k]] = u[k];
        }
        for k in 0..b {
            points[[i, k]] = x[k];
        }
    }
    Ok(PointCloud { spec: spec.clone(), points, chart_coords: chart, seed })
}

/// Orthonormal tangent basis `H` at a point and the projector `Π = HHᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentFrame {
    pub base: Vec<f64>,
    pub basis: DMatrix<f64>,
    pub projector: DMatrix<f64>,
}

impl TangentFrame {
    /// Tangent coordinates `Hᵀ v` of an ambient vector.
    pub fn coords(&self, v: &[f64]) -> Vec<f64> {
        (0..self.basis.ncols()).map(|k| (0..v.len()).map(|r| self.basis[(r, k)] * v[r]).sum()).collect()
    }

    /// Ambient vector `H s`.
    pub fn lift(&self, s: &[f64]) -> Vec<f64> {
        (0..self.basis.nrows()).map(|r| s.iter().enumerate().map(|(k, sk)| self.basis[(r, k)] * sk).sum()).collect()
    }
}

/// Tangent frame at a chart point, orthonormalizing the Jacobian columns.
pub fn tangent_frame(spec: &ManifoldSpec, chart_point: &[f64]) -> Result<TangentFrame> {
    if chart_point.len() != spec.intrinsic_dim() {
        return Err(Error::DimensionMismatch { expected: spec.intrinsic_dim(), found: chart_point.len() });
    }
    if !spec.domain().contains(chart_point) {
        return Err(Error::OutOfChart(format!("{chart_point:?}")));
    }
    let jac = spec.jacobian(chart_point);
    let mut basis = jac.clone();
    for k in 0..basis.ncols() {
        let scale = jac.column(k).norm();
        for prev in 0..k {
            let proj = basis.column(prev).dot(&basis.column(k));
            let p = basis.column(prev).clone_owned();
            basis.column_mut(k).axpy(-proj, &p, 1.0);
        }
        let norm = basis.column(k).norm();
        if !(norm > 1e-10 * scale.max(f64::MIN_POSITIVE)) {
            return Err(Error::InvalidManifold("rank-deficient Jacobian".into()));
        }
        basis.column_mut(k).scale_mut(1.0 / norm);
    }
    let projector = &basis * basis.transpose();
    Ok(TangentFrame { base: spec.embed(chart_point), basis, projector })
}

/// Tangent-plane coordinates `s = Hₓᵀ(y − x)` of `y` seen from `x`.
pub fn normal_displacement(spec: &ManifoldSpec, x_chart: &[f64], y_chart: &[f64]) -> Result<Vec<f64>> {
    let dist = spec.chart_distance(x_chart, y_chart);
    if dist > spec.chart_radius() {
        return Err(Error::OutOfChart(format!("chart distance {dist} exceeds chart radius {}", spec.chart_radius())));
    }
    if !spec.domain().contains(y_chart) {
        return Err(Error::OutOfChart(format!("{y_chart:?}")));
    }
    let frame = tangent_frame(spec, x_chart)?;
    let y = spec.embed(y_chart);
    let diff: Vec<f64> = y.iter().zip(&frame.base).map(|(a, b)| a - b).collect();
    Ok(frame.coords(&diff))
}

/// Smooth test functions defined through chart coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ChartFunction {
    Constant {
        value: f64,
    },
    Linear {
        axis: usize,
    },
    Square {
        axis: usize,
    },
    /// `sin(frequency · u + phase)`.
    Sine {
        axis: usize,
        frequency: f64,
        phase: f64,
    },
    /// `sin(π (u − lo) / (hi − lo))`, vanishing on the chart boundary.
    InteriorSine {
        axis: usize,
    },
}

impl ChartFunction {
    fn axis(&self) -> usize {
        match *self {
            ChartFunction::Constant { .. } => 0,
            ChartFunction::Linear { axis }
            | ChartFunction::Square { axis }
            | ChartFunction::Sine { axis, .. }
            | ChartFunction::InteriorSine { axis } => axis,
        }
    }

    /// Value and first two derivatives along the function's axis.
    fn jet(&self, spec: &ManifoldSpec, u: &[f64]) -> (f64, f64, f64) {
        let x = u[self.axis()];
        match *self {
            ChartFunction::Constant { value } => (value, 0.0, 0.0),
            ChartFunction::Linear { .. } => (x, 1.0, 0.0),
            ChartFunction::Square { .. } => (x * x, 2.0 * x, 2.0),
            ChartFunction::Sine { frequency: w, phase, .. } => {
                let a = w * x + phase;
                (a.sin(), w * a.cos(), -w * w * a.sin())
            }
            ChartFunction::InteriorSine { axis } => {
                let d = spec.domain();
                let w = PI / (d.upper[axis] - d.lower[axis]);
                let a = w * (x - d.lower[axis]);
                (a.sin(), w * a.cos(), -w * w * a.sin())
            }
        }
    }

    pub fn value(&self, spec: &ManifoldSpec, u: &[f64]) -> f64 {
        self.jet(spec, u).0
    }

    /// Chart partial derivatives.
    pub fn partials(&self, spec: &ManifoldSpec, u: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; u.len()];
        g[self.axis()] = self.jet(spec, u).1;
        g
    }

    /// Chart Hessian.
    pub fn hessian(&self, spec: &ManifoldSpec, u: &[f64]) -> Vec<Vec<f64>> {
        let mut h = vec![vec![0.0; u.len()]; u.len()];
        let a = self.axis();
        h[a][a] = self.jet(spec, u).2;
        h
    }

    /// Gradient in tangent frame coordinates.
    pub fn gradient(&self, spec: &ManifoldSpec, u: &[f64]) -> Vec<f64> {
        spec.frame_gradient(u, &self.partials(spec, u))
    }

    /// Laplace–Beltrami operator applied to the function.
    pub fn laplacian(&self, spec: &ManifoldSpec, u: &[f64]) -> f64 {
        spec.laplace_beltrami(u, &self.partials(spec, u), &self.hessian(spec, u))
    }
}

impl FromStr for ChartFunction {
    type Err = Error;

    /// Parses `name[@axis]` with names `constant`, `linear`, `square`, `sin`,
    /// `cos`, `sin2` and `interior_sine`.
    fn from_str(s: &str) -> Result<Self> {
        let (name, axis) = match s.split_once('@') {
            Some((n, a)) => (n, a.parse::<usize>().map_err(|e| Error::Parse(format!("axis in {s:?}: {e}")))?),
            None => (s, 0),
        };
        Ok(match name {
            "constant" => ChartFunction::Constant { value: 1.0 },
            "linear" => ChartFunction::Linear { axis },
            "square" => ChartFunction::Square { axis },
            "sin" => ChartFunction::Sine { axis, frequency: 1.0, phase: 0.0 },
            "cos" => ChartFunction::Sine { axis, frequency: 1.0, phase: PI / 2.0 },
            "sin2" => ChartFunction::Sine { axis, frequency: 2.0, phase: 0.0 },
            "interior_sine" => ChartFunction::InteriorSine { axis },
            other => return Err(Error::Parse(format!("unknown test function {other:?}"))),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shipped() -> Vec<ManifoldSpec> {
        vec![
            ManifoldSpec::circle(1.0).unwrap(),
            ManifoldSpec::circle(1.5).unwrap().with_density(DensityModel::CosineModulated { amplitude: 0.5 }).unwrap(),
            ManifoldSpec::toroidal_helix(2.0, 0.5, 8).unwrap(),
            ManifoldSpec::toroidal_helix(2.0, 0.5, 8).unwrap().with_density(DensityModel::Uniform).unwrap(),
            ManifoldSpec::gauss_sheet(2.5).unwrap(),
            ManifoldSpec::flat_interval(1.0).unwrap(),
            ManifoldSpec::flat_interval(5.0).unwrap().with_density(DensityModel::TruncatedNormal { sd: 1.0 }).unwrap(),
        ]
    }

    #[test]
    fn densities_integrate_to_one() {
        for spec in shipped() {
            let mass = spec.integrate(&|u| spec.density(u));
            assert!((mass - 1.0).abs() < 1e-4, "{} integrates to {mass}", spec.name());
        }
    }

    #[test]
    fn unsupported_density_is_rejected() {
        let circle = ManifoldSpec::circle(1.0).unwrap();
        assert!(circle.with_density(DensityModel::TruncatedNormal { sd: 1.0 }).is_err());
        assert!(ManifoldSpec::circle(-1.0).is_err());
    }

    #[test]
    fn grad_log_density_matches_finite_differences() {
        for spec in shipped() {
            let dom = spec.domain();
            let m = spec.intrinsic_dim();
            for frac in [0.2, 0.37, 0.61, 0.83] {
                let u: Vec<f64> = (0..m).map(|k| dom.lower[k] + frac * (dom.upper[k] - dom.lower[k])).collect();
                let analytic = spec.grad_log_density(&u);
                let step = 1e-5;
                let partials: Vec<f64> = (0..m)
                    .map(|k| {
                        let (mut a, mut b) = (u.clone(), u.clone());
                        a[k] += step;
                        b[k] -= step;
                        (spec.density(&a).ln() - spec.density(&b).ln()) / (2.0 * step)
                    })
                    .collect();
                let fd = spec.frame_gradient(&u, &partials);
                for (x, y) in analytic.iter().zip(&fd) {
                    let scale = x.abs().max(1e-3);
                    assert!((x - y).abs() / scale < 1e-6, "{}: {x} vs {y}", spec.name());
                }
            }
        }
    }

    #[test]
    fn circle_points_lie_on_circle() {
        let cloud = sample_points(&ManifoldSpec::circle(1.0).unwrap(), 4, 3).unwrap();
        for i in 0..4 {
            let r = cloud.point(i).iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((r - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn points_match_embedding_of_chart() {
        for spec in shipped() {
            let cloud = sample_points(&spec, 50, 11).unwrap();
            for i in 0..cloud.len() {
                let x = spec.embed(cloud.chart(i));
                for (a, b) in x.iter().zip(cloud.point(i)) {
                    assert!((a - b).abs() <= 1e-12);
                }
                let back = spec.chart_of(cloud.point(i));
                assert!(spec.chart_distance(&back, cloud.chart(i)) < 1e-9);
            }
        }
    }

    #[test]
    fn sampling_is_reproducible() {
        let spec = ManifoldSpec::gauss_sheet(2.5).unwrap();
        assert_eq!(sample_points(&spec, 200, 9).unwrap(), sample_points(&spec, 200, 9).unwrap());
        assert_ne!(sample_points(&spec, 200, 9).unwrap(), sample_points(&spec, 200, 10).unwrap());
    }

    #[test]
    fn uniform_interval_passes_ks() {
        let cloud = sample_points(&ManifoldSpec::flat_interval(1.0).unwrap(), 1000, 5).unwrap();
        let mut xs: Vec<f64> = (0..1000).map(|i| cloud.chart(i)[0]).collect();
        xs.sort_by(f64::total_cmp);
        let d = xs
            .iter()
            .enumerate()
            .map(|(i, x)| ((i + 1) as f64 / 1000.0 - x).abs().max((x - i as f64 / 1000.0).abs()))
            .fold(0.0, f64::max);
        // 95% Kolmogorov–Smirnov critical value
        assert!(d < 1.358 / 1000f64.sqrt(), "KS statistic {d}");
    }

    #[test]
    fn gauss_sheet_sample_means_near_zero() {
        let spec = ManifoldSpec::gauss_sheet(2.5).unwrap();
        let n = 2000;
        let cloud = sample_points(&spec, n, 21).unwrap();
        // variance of a standard normal truncated at ±2.5, by quadrature
        let z = crate::quadrature::adaptive_simpson(&|x: f64| (-0.5 * x * x).exp(), -2.5, 2.5, 1e-13);
        let v = crate::quadrature::adaptive_simpson(&|x: f64| x * x * (-0.5 * x * x).exp(), -2.5, 2.5, 1e-13) / z;
        for k in 0..2 {
            let mean = (0..n).map(|i| cloud.chart(i)[k]).sum::<f64>() / n as f64;
            assert!(mean.abs() < 3.0 * v.sqrt() / (n as f64).sqrt(), "mean {mean}");
        }
    }

    #[test]
    fn frames_of_simple_shapes() {
        let circle = ManifoldSpec::circle(1.0).unwrap();
        let f = tangent_frame(&circle, &[0.0]).unwrap();
        assert!(f.basis[(0, 0)].abs() < 1e-15 && (f.basis[(1, 0)].abs() - 1.0).abs() < 1e-15);
        let flat = ManifoldSpec::flat_interval(1.0).unwrap();
        let f = tangent_frame(&flat, &[0.5]).unwrap();
        assert_eq!(f.projector, DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]));
    }

    #[test]
    fn projector_identities_on_helix() {
        let spec = ManifoldSpec::toroidal_helix(2.0, 0.5, 8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let t = rng.random_range(0.0..2.0 * PI);
            let f = tangent_frame(&spec, &[t]).unwrap();
            let hth = f.basis.transpose() * &f.basis;
            assert!((hth[(0, 0)] - 1.0).abs() < 1e-10);
            assert!((&f.projector * &f.projector - &f.projector).amax() < 1e-12);
            let s = [rng.random_range(-1.0..1.0)];
            let hs = DMatrix::from_column_slice(3, 1, &f.lift(&s));
            assert!((&f.projector * &hs - &hs).norm() < 1e-14);
        }
    }

    #[test]
    fn normal_displacement_examples() {
        let flat = ManifoldSpec::flat_interval(1.0).unwrap();
        let s = normal_displacement(&flat, &[0.2], &[0.3]).unwrap();
        assert!((s[0] - 0.1).abs() < 1e-15);
        assert_eq!(normal_displacement(&flat, &[0.4], &[0.4]).unwrap(), vec![0.0]);
        let circle = ManifoldSpec::circle(1.0).unwrap();
        let theta = 0.1f64;
        let s = normal_displacement(&circle, &[0.3], &[0.3 + theta]).unwrap()[0].abs();
        // tangent projection of the chord has length sin θ
        assert!((s - theta.sin()).abs() < 1e-15 && s <= 2.0 * (theta / 2.0).sin());
        assert!(matches!(normal_displacement(&circle, &[0.0], &[2.0]), Err(Error::OutOfChart(_))));
    }

    #[test]
    fn displacement_residual_is_second_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for spec in shipped() {
            let bound = 2.0 * spec.curvature_bound();
            let dom = spec.domain();
            let m = spec.intrinsic_dim();
            let reach = spec.chart_radius().min(0.5);
            for _ in 0..10_000 {
                let x: Vec<f64> = (0..m).map(|k| rng.random_range(dom.lower[k]..dom.upper[k])).collect();
                let y: Vec<f64> = (0..m)
                    .map(|k| {
                        let v = x[k] + rng.random_range(-reach..reach) / (m as f64).sqrt();
                        if dom.periodic {
                            v
                        } else {
                            v.clamp(dom.lower[k], dom.upper[k])
                        }
                    })
                    .collect();
                let s = normal_displacement(&spec, &x, &y).unwrap();
                let frame = tangent_frame(&spec, &x).unwrap();
                let hs = frame.lift(&s);
                let yx: Vec<f64> = spec.embed(&y).iter().zip(&frame.base).map(|(a, b)| a - b).collect();
                let resid = yx.iter().zip(&hs).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                let s2 = s.iter().map(|v| v * v).sum::<f64>();
                assert!(resid <= bound * s2 + 1e-13, "{}: {resid} > {bound}·{s2}", spec.name());
            }
        }
    }

    #[test]
    fn circle_laplacian_of_sine() {
        let circle = ManifoldSpec::circle(1.0).unwrap();
        let f = ChartFunction::from_str("sin").unwrap();
        for t in [0.1, 1.0, 2.5] {
            assert!((f.laplacian(&circle, &[t]) + t.sin()).abs() < 1e-14);
        }
    }

    #[test]
    fn helix_laplacian_matches_finite_differences() {
        // Δf = (1/σ) d/dt (f'/σ) in arc-length form
        let spec = ManifoldSpec::toroidal_helix(2.0, 0.5, 8).unwrap();
        let f = ChartFunction::from_str("sin2").unwrap();
        let h = 1e-4;
        for t in [0.3, 1.7, 4.0] {
            let flux = |t: f64| f.partials(&spec, &[t])[0] / spec.volume_element(&[t]);
            let fd = (flux(t + h) - flux(t - h)) / (2.0 * h) / spec.volume_element(&[t]);
            let exact = f.laplacian(&spec, &[t]);
            assert!((fd - exact).abs() < 1e-6 * exact.abs().max(1.0));
        }
    }
}
