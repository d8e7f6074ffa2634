//! Base kernels, location dependent bandwidth and weight fields, and the
//! generalized kernel `K(x, y) = w_x(y) K₀(‖y − x‖ / (h r_x(y)))`.

use std::sync::OnceLock;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::manifolds::{ChartFunction, ManifoldSpec};
use crate::neighbors::NeighborIndex;
use crate::quadrature::adaptive_simpson;
use crate::{Error, Result};

/// Radial profile `K₀` of bounded variation with compact support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BaseKernel {
    /// `1(u < 1)`.
    Indicator,
    /// `exp(−u²) 1(u < cutoff)`.
    TruncatedGaussian { cutoff: f64 },
    /// `Σ height_i 1(u < radius_i)` for `(height, radius)` pairs.
    StepSum { steps: Vec<(f64, f64)> },
}

/// Scaling constants of a base kernel in dimension `m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelConstants {
    /// `C = ∫ u^{m+2} dη`.
    pub c: f64,
    /// `C′ = ∫ u^m dη`.
    pub c_prime: f64,
    /// `Z = (m + 2) C′ / C`.
    pub z: f64,
}

/// Continuous part of a level measure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LevelDensity {
    /// Density `2z e^{−z²}` on `(0, cutoff)`.
    GaussianTail { cutoff: f64 },
}

/// Signed measure `η` on radii with `K₀(u) = ∫ 1(u < z) dη(z)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelMeasure {
    /// Point masses `(radius, mass)`.
    pub atoms: Vec<(f64, f64)>,
    pub density: Option<LevelDensity>,
}

impl LevelMeasure {
    /// `K₀(u)` rebuilt from the measure.
    pub fn reconstruct(&self, u: f64) -> f64 {
        let mut v: f64 = self.atoms.iter().filter(|(z, _)| u < *z).map(|(_, a)| a).sum();
        if let Some(LevelDensity::GaussianTail { cutoff }) = self.density {
            if u < cutoff {
                let lo = u.max(0.0);
                v += (-lo * lo).exp() - (-cutoff * cutoff).exp();
            }
        }
        v
    }

    /// `∫ z^power dη(z)`.
    pub fn moment(&self, power: f64) -> f64 {
        let mut v: f64 = self.atoms.iter().map(|(z, a)| a * z.powf(power)).sum();
        if let Some(LevelDensity::GaussianTail { cutoff }) = self.density {
            v += adaptive_simpson(&|z: f64| z.powf(power) * 2.0 * z * (-z * z).exp(), 0.0, cutoff, 1e-13);
        }
        v
    }

    /// Replaces the continuous part with `levels` equal-height steps.
    pub fn staircase(&self, levels: usize) -> LevelMeasure {
        let mut atoms = self.atoms.clone();
        if let Some(LevelDensity::GaussianTail { cutoff }) = self.density {
            // split the continuous mass into equal slices at their mass midpoints
            let top = 1.0 - (-cutoff * cutoff).exp();
            let mass = top / levels as f64;
            for l in 0..levels {
                let level = (l as f64 + 0.5) * mass;
                atoms.push(((-(1.0 - level).ln()).sqrt(), mass));
            }
        }
        LevelMeasure { atoms, density: None }
    }
}

impl BaseKernel {
    pub fn validate(&self) -> Result<()> {
        match self {
            BaseKernel::Indicator => Ok(()),
            BaseKernel::TruncatedGaussian { cutoff } if *cutoff > 0.0 && cutoff.is_finite() => Ok(()),
            BaseKernel::TruncatedGaussian { .. } => Err(Error::InvalidKernel("cutoff must be positive".into())),
            BaseKernel::StepSum { steps } => {
                if steps.is_empty() {
                    return Err(Error::InvalidKernel("step sum needs at least one step".into()));
                }
                if steps.iter().any(|(a, r)| !a.is_finite() || !(*r > 0.0) || !r.is_finite()) {
                    return Err(Error::InvalidKernel("steps need finite heights and positive radii".into()));
                }
                let mut radii: Vec<f64> = steps.iter().map(|s| s.1).collect();
                radii.sort_by(f64::total_cmp);
                if radii.iter().any(|&r| self.eval(0.5 * r) < 0.0 || self.eval(r * (1.0 - 1e-12)) < 0.0) {
                    return Err(Error::InvalidKernel("step sum takes negative values".into()));
                }
                Ok(())
            }
        }
    }

    pub fn eval(&self, u: f64) -> f64 {
        let u = u.abs();
        match self {
            BaseKernel::Indicator => (u < 1.0) as u8 as f64,
            BaseKernel::TruncatedGaussian { cutoff } => {
                if u < *cutoff {
                    (-u * u).exp()
                } else {
                    0.0
                }
            }
            BaseKernel::StepSum { steps } => steps.iter().filter(|(_, r)| u < *r).map(|(a, _)| a).sum(),
        }
    }

    /// Radius outside which `K₀` vanishes.
    pub fn support_radius(&self) -> f64 {
        match self {
            BaseKernel::Indicator => 1.0,
            BaseKernel::TruncatedGaussian { cutoff } => *cutoff,
            BaseKernel::StepSum { steps } => steps.iter().map(|s| s.1).fold(0.0, f64::max),
        }
    }

    /// The decomposition `η = η₊ − η₋` of `K₀` into indicator levels.
    pub fn level_measure(&self) -> LevelMeasure {
        match self {
            BaseKernel::Indicator => LevelMeasure { atoms: vec![(1.0, 1.0)], density: None },
            BaseKernel::TruncatedGaussian { cutoff } => LevelMeasure {
                atoms: vec![(*cutoff, (-cutoff * cutoff).exp())],
                density: Some(LevelDensity::GaussianTail { cutoff: *cutoff }),
            },
            BaseKernel::StepSum { steps } => {
                LevelMeasure { atoms: steps.iter().map(|&(a, r)| (r, a)).collect(), density: None }
            }
        }
    }

    /// `C`, `C′` and `Z` for intrinsic dimension `m`.
    pub fn constants(&self, m: usize) -> Result<KernelConstants> {
        if m == 0 {
            return Err(Error::InvalidParameter("m must be at least 1".into()));
        }
        self.validate()?;
        let eta = self.level_measure();
        let c = eta.moment(m as f64 + 2.0);
        let c_prime = eta.moment(m as f64);
        if !(c > 0.0 && c_prime > 0.0) {
            return Err(Error::InvalidKernel(format!("non-normalizable kernel (C = {c}, C′ = {c_prime})")));
        }
        Ok(KernelConstants { c, c_prime, z: (m as f64 + 2.0) * c_prime / c })
    }
}

/// A positive function on the manifold.
///
/// Analytic leaves carry the manifold they are defined on so they can be
/// evaluated from ambient coordinates; sample-defined fields extend their
/// values to other points by the nearest sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScalarField {
    Constant {
        value: f64,
    },
    /// The sampling density `p` of the manifold.
    Density {
        manifold: ManifoldSpec,
    },
    /// `offset + f(u)`.
    Chart {
        manifold: ManifoldSpec,
        function: ChartFunction,
        offset: f64,
    },
    /// `exp(f(u))`.
    ExpChart {
        manifold: ManifoldSpec,
        function: ChartFunction,
    },
    /// `scale · Π fᵢ^{eᵢ}`.
    Product {
        scale: f64,
        factors: Vec<(ScalarField, f64)>,
    },
    /// Values attached to sample points.
    Samples(SampleValues),
}

/// Values at sample points with a lazily built lookup index.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleValues {
    pub points: Array2<f64>,
    pub values: Vec<f64>,
    #[serde(skip)]
    index: OnceLock<NeighborIndex>,
}

impl SampleValues {
    pub fn new(points: Array2<f64>, values: Vec<f64>) -> Result<Self> {
        if points.nrows() != values.len() {
            return Err(Error::DimensionMismatch { expected: points.nrows(), found: values.len() });
        }
        if points.nrows() == 0 {
            return Err(Error::InvalidParameter("sample field needs at least one point".into()));
        }
        Ok(Self { points, values, index: OnceLock::new() })
    }

    fn index(&self) -> &NeighborIndex {
        self.index.get_or_init(|| NeighborIndex::new(&self.points).expect("finite sample points"))
    }

    /// Value at the sample nearest to `x`.
    pub fn lookup(&self, x: &[f64]) -> f64 {
        let nn = self.index().knn(x, 1, None);
        self.values[nn[0].0]
    }
}

impl PartialEq for SampleValues {
    fn eq(&self, other: &Self) -> bool {
        self.points == other.points && self.values == other.values
    }
}

impl ScalarField {
    pub fn constant(value: f64) -> Self {
        ScalarField::Constant { value }
    }

    pub fn density(manifold: &ManifoldSpec) -> Self {
        ScalarField::Density { manifold: manifold.clone() }
    }

    /// `scale · self^exponent`.
    pub fn pow(self, exponent: f64, scale: f64) -> Self {
        ScalarField::Product { scale, factors: vec![(self, exponent)] }
    }

    pub fn samples(points: Array2<f64>, values: Vec<f64>) -> Result<Self> {
        Ok(ScalarField::Samples(SampleValues::new(points, values)?))
    }

    /// Value at an ambient point on the manifold.
    pub fn value_at(&self, x: &[f64]) -> f64 {
        match self {
            ScalarField::Constant { value } => *value,
            ScalarField::Density { manifold }
            | ScalarField::Chart { manifold, .. }
            | ScalarField::ExpChart { manifold, .. } => self.value_chart(&manifold.chart_of(x)),
            ScalarField::Product { scale, factors } => {
                scale * factors.iter().map(|(f, e)| f.value_at(x).powf(*e)).product::<f64>()
            }
            ScalarField::Samples(s) => s.lookup(x),
        }
    }

    /// Value at a chart point; sample fields have no chart form and return NaN.
    pub fn value_chart(&self, u: &[f64]) -> f64 {
        match self {
            ScalarField::Constant { value } => *value,
            ScalarField::Density { manifold } => manifold.density(u),
            ScalarField::Chart { manifold, function, offset } => offset + function.value(manifold, u),
            ScalarField::ExpChart { manifold, function } => function.value(manifold, u).exp(),
            ScalarField::Product { scale, factors } => {
                scale * factors.iter().map(|(f, e)| f.value_chart(u).powf(*e)).product::<f64>()
            }
            ScalarField::Samples(_) => f64::NAN,
        }
    }

    /// `∇ log f` in tangent frame coordinates of `manifold` at chart point `u`.
    pub fn log_gradient(&self, manifold: &ManifoldSpec, u: &[f64]) -> Result<Vec<f64>> {
        let m = manifold.intrinsic_dim();
        match self {
            ScalarField::Constant { .. } => Ok(vec![0.0; m]),
            ScalarField::Density { manifold } => Ok(manifold.grad_log_density(u)),
            ScalarField::Chart { manifold, function, offset } => {
                let v = offset + function.value(manifold, u);
                Ok(function.gradient(manifold, u).into_iter().map(|g| g / v).collect())
            }
            ScalarField::ExpChart { manifold, function } => Ok(function.gradient(manifold, u)),
            ScalarField::Product { factors, .. } => {
                let mut g = vec![0.0; m];
                for (f, e) in factors {
                    for (gi, fi) in g.iter_mut().zip(f.log_gradient(manifold, u)?) {
                        *gi += e * fi;
                    }
                }
                Ok(g)
            }
            ScalarField::Samples(_) => Err(Error::Domain("sample-defined field has no analytic gradient".into())),
        }
    }

    /// Values at every row of `points`; exact for sample fields evaluated on
    /// their own samples.
    pub fn values_at(&self, points: &Array2<f64>) -> Vec<f64> {
        if let ScalarField::Samples(s) = self {
            if s.points == points {
                return s.values.clone();
            }
        }
        (0..points.nrows())
            .into_par_iter()
            .map(|i| self.value_at(points.row(i).as_slice().expect("row-major points")))
            .collect()
    }

    pub fn is_constant(&self) -> bool {
        match self {
            ScalarField::Constant { .. } => true,
            ScalarField::Product { factors, .. } => factors.iter().all(|(f, e)| *e == 0.0 || f.is_constant()),
            _ => false,
        }
    }
}

/// How a per-point function combines the two endpoints of an edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Combine {
    /// `f(x)`.
    Source,
    /// `f(y)`.
    Destination,
    /// `√(f(x) f(y))`.
    GeometricMean,
    /// `max(f(x), f(y))`.
    Max,
}

impl Combine {
    pub fn apply(self, fx: f64, fy: f64) -> f64 {
        match self {
            Combine::Source => fx,
            Combine::Destination => fy,
            Combine::GeometricMean => (fx * fy).sqrt(),
            Combine::Max => fx.max(fy),
        }
    }

    /// Coefficient `c` with `∂/∂y combine(f(x), f(y))|_{y=x} = c ∇f(x)` away from kinks.
    fn slope(self) -> f64 {
        match self {
            Combine::Source => 0.0,
            Combine::Destination => 1.0,
            Combine::GeometricMean | Combine::Max => 0.5,
        }
    }

    fn symmetric(self) -> bool {
        matches!(self, Combine::GeometricMean | Combine::Max)
    }
}

/// Bandwidth `r_x(y) = combine(γ(x), γ(y))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandwidthField {
    pub combine: Combine,
    pub gamma: ScalarField,
}

impl BandwidthField {
    pub fn constant(value: f64) -> Self {
        Self { combine: Combine::Source, gamma: ScalarField::constant(value) }
    }

    pub fn new(combine: Combine, gamma: ScalarField) -> Self {
        Self { combine, gamma }
    }

    pub fn r(&self, x: &[f64], y: &[f64]) -> f64 {
        self.combine.apply(self.gamma.value_at(x), self.gamma.value_at(y))
    }

    /// `r_x(x)`.
    pub fn at_diag(&self, u: &[f64]) -> f64 {
        self.gamma.value_chart(u)
    }

    /// `ṙ_x(x)`, the symmetric part of the first-order expansion in `y`.
    pub fn r_dot(&self, manifold: &ManifoldSpec, u: &[f64]) -> Result<Vec<f64>> {
        let slope = self.combine.slope();
        if slope == 0.0 {
            return Ok(vec![0.0; manifold.intrinsic_dim()]);
        }
        let g = self.gamma.value_chart(u);
        Ok(self.gamma.log_gradient(manifold, u)?.into_iter().map(|d| slope * g * d).collect())
    }

    /// Kink `(α, u)` of a max-combined field: `r_x(y) ≈ r + ṙᵀs + α|uᵀs|`.
    pub fn kink(&self, manifold: &ManifoldSpec, u: &[f64]) -> Result<Option<(f64, Vec<f64>)>> {
        if self.combine != Combine::Max {
            return Ok(None);
        }
        let g = self.gamma.value_chart(u);
        let grad: Vec<f64> = self.gamma.log_gradient(manifold, u)?.into_iter().map(|d| g * d).collect();
        let norm = grad.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Ok(Some((0.0, vec![0.0; grad.len()])));
        }
        Ok(Some((0.5 * norm, grad.into_iter().map(|v| v / norm).collect())))
    }

    pub fn symmetric(&self) -> bool {
        self.combine.symmetric() || self.gamma.is_constant()
    }
}

/// Edge weight `w_x(y) = combine(ω(x), ω(y))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightField {
    pub combine: Combine,
    pub omega: ScalarField,
}

impl WeightField {
    pub fn constant(value: f64) -> Self {
        Self { combine: Combine::Source, omega: ScalarField::constant(value) }
    }

    pub fn new(combine: Combine, omega: ScalarField) -> Self {
        Self { combine, omega }
    }

    pub fn w(&self, x: &[f64], y: &[f64]) -> f64 {
        self.combine.apply(self.omega.value_at(x), self.omega.value_at(y))
    }

    /// `w_x(x)`.
    pub fn at_diag(&self, u: &[f64]) -> f64 {
        self.omega.value_chart(u)
    }

    /// `∇w_x(x)`, gradient in `y` at `y = x`.
    pub fn grad(&self, manifold: &ManifoldSpec, u: &[f64]) -> Result<Vec<f64>> {
        let slope = self.combine.slope();
        if slope == 0.0 {
            return Ok(vec![0.0; manifold.intrinsic_dim()]);
        }
        let w = self.omega.value_chart(u);
        Ok(self.omega.log_gradient(manifold, u)?.into_iter().map(|d| slope * w * d).collect())
    }

    pub fn symmetric(&self) -> bool {
        self.combine.symmetric() || self.omega.is_constant()
    }
}

/// The generalized kernel with scale `h`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub base: BaseKernel,
    pub bandwidth: BandwidthField,
    pub weight: WeightField,
    pub h: f64,
}

impl KernelSpec {
    pub fn new(base: BaseKernel, bandwidth: BandwidthField, weight: WeightField, h: f64) -> Result<Self> {
        base.validate()?;
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidParameter(format!("h must be positive, got {h}")));
        }
        Ok(Self { base, bandwidth, weight, h })
    }

    /// Fixed-bandwidth unweighted kernel `K₀(‖y − x‖ / h)`.
    pub fn fixed(base: BaseKernel, h: f64) -> Result<Self> {
        Self::new(base, BandwidthField::constant(1.0), WeightField::constant(1.0), h)
    }

    pub fn symmetric(&self) -> bool {
        self.bandwidth.symmetric() && self.weight.symmetric()
    }

    /// Evaluates the kernel given the per-point field values at both ends.
    pub fn eval_with(&self, dist: f64, gamma: (f64, f64), omega: (f64, f64)) -> f64 {
        let r = self.bandwidth.combine.apply(gamma.0, gamma.1);
        if dist >= self.h * r * self.base.support_radius() {
            return 0.0;
        }
        self.weight.combine.apply(omega.0, omega.1) * self.base.eval(dist / (self.h * r))
    }
}

/// `w_x(y) K₀(‖y − x‖ / (h r_x(y)))`.
pub fn eval_kernel(spec: &KernelSpec, x: &[f64], y: &[f64]) -> f64 {
    let dist = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    let gamma = (spec.bandwidth.gamma.value_at(x), spec.bandwidth.gamma.value_at(y));
    let omega = (spec.weight.omega.value_at(x), spec.weight.omega.value_at(y));
    spec.eval_with(dist, gamma, omega)
}

/// `C`, `C′`, `Z` of a base kernel.
pub fn base_kernel_constants(base: &BaseKernel, m: usize) -> Result<KernelConstants> {
    base.constants(m)
}

/// Symmetric bandwidth and weight fields whose limit operator is
/// `½ γ² Δ_q` with degree function `g`, for sampling density `p`:
/// `γ = √(q / (p g))`, `ω = p^{m/2−1} g^{m/2+1} q^{−m/2}`.
pub fn design_bandwidth_weight(
    manifold: &ManifoldSpec,
    p: &ScalarField,
    q: &ScalarField,
    g: &ScalarField,
) -> Result<(BandwidthField, WeightField)> {
    let m = manifold.intrinsic_dim() as f64;
    for u in validation_grid(manifold) {
        for (name, f) in [("p", p), ("q", q), ("g", g)] {
            let v = f.value_chart(&u);
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Domain(format!("{name} = {v} at chart point {u:?}")));
            }
        }
    }
    let gamma =
        ScalarField::Product { scale: 1.0, factors: vec![(q.clone(), 0.5), (p.clone(), -0.5), (g.clone(), -0.5)] };
    let omega = ScalarField::Product {
        scale: 1.0,
        factors: vec![(p.clone(), 0.5 * m - 1.0), (g.clone(), 0.5 * m + 1.0), (q.clone(), -0.5 * m)],
    };
    Ok((BandwidthField::new(Combine::GeometricMean, gamma), WeightField::new(Combine::GeometricMean, omega)))
}

/// Chart grid used to validate designer inputs.
pub fn validation_grid(manifold: &ManifoldSpec) -> Vec<Vec<f64>> {
    let dom = manifold.domain();
    let per_axis = if manifold.intrinsic_dim() == 1 { 100 } else { 25 };
    let axis = |k: usize| -> Vec<f64> {
        (0..per_axis)
            .map(|i| {
                let t = if dom.periodic { i as f64 / per_axis as f64 } else { i as f64 / (per_axis - 1) as f64 };
                dom.lower[k] + t * (dom.upper[k] - dom.lower[k])
            })
            .collect()
    };
    if manifold.intrinsic_dim() == 1 {
        axis(0).into_iter().map(|x| vec![x]).collect()
    } else {
        let (a, b) = (axis(0), axis(1));
        a.iter().flat_map(|x| b.iter().map(move |y| vec![*x, *y])).collect()
    }
}
