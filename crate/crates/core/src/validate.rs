//! Empirical drift and diffusion of graph random walks, Monte-Carlo moment
//! oracles for shifted balls, and convergence experiments.

use std::time::Instant;

use nalgebra::DMatrix;
use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::knn_density;
use crate::graphs::{build_graph, BuildOptions, Construction, SparseGraph};
use crate::laplacians::{apply, assemble, degree_vector, LaplacianKind, ScalingInputs};
use crate::limits::{catalog_limit, LimitOperator};
use crate::manifolds::{sample_points, tangent_frame, ChartFunction, ManifoldSpec, PointCloud, TangentFrame};
use crate::{Error, Result};

/// Per-point one-step moments of the random walk `P = D⁻¹W`, scaled by `c_n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentEstimates {
    /// `c_n Σⱼ P_ij (xⱼ − xᵢ)`, one row per point.
    pub drift_hat: Array2<f64>,
    /// `c_n Var(Y₁ | Y₀ = xᵢ)`, an `n × b × b` array.
    pub diff_hat: Array3<f64>,
    /// `dᵢ / (n hᵐ)`.
    pub degree_hat: Vec<f64>,
    pub c_n: f64,
}

pub fn empirical_moments(g: &SparseGraph, points: &Array2<f64>, inputs: &ScalingInputs) -> Result<MomentEstimates> {
    let n = g.n();
    if points.nrows() != n {
        return Err(Error::DimensionMismatch { expected: n, found: points.nrows() });
    }
    let degree = degree_vector(g)?;
    let c_n = inputs.c_n()?;
    let b = points.ncols();
    let rows: Vec<(Vec<f64>, Vec<f64>)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut mean = vec![0.0; b];
            let mut second = vec![0.0; b * b];
            for (j, w) in g.weights.iter_row(i) {
                let p = w / degree[i];
                for a in 0..b {
                    let da = points[[j, a]] - points[[i, a]];
                    mean[a] += p * da;
                    for c in 0..=a {
                        second[a * b + c] += p * da * (points[[j, c]] - points[[i, c]]);
                    }
                }
            }
            for a in 0..b {
                for c in 0..=a {
                    let v = c_n * (second[a * b + c] - mean[a] * mean[c]);
                    second[a * b + c] = v;
                    second[c * b + a] = v;
                }
            }
            (mean.into_iter().map(|v| c_n * v).collect(), second)
        })
        .collect();
    let mut drift_hat = Array2::zeros((n, b));
    let mut diff_hat = Array3::zeros((n, b, b));
    for (i, (mu, sigma)) in rows.into_iter().enumerate() {
        for a in 0..b {
            drift_hat[[i, a]] = mu[a];
            for c in 0..b {
                diff_hat[[i, a, c]] = sigma[a * b + c];
            }
        }
    }
    let scale = n as f64 * inputs.h.powi(inputs.m as i32);
    Ok(MomentEstimates { drift_hat, diff_hat, degree_hat: degree.iter().map(|d| d / scale).collect(), c_n })
}

/// Moments expressed in tangent frame coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TangentMoments {
    /// `Hᵀ μ̂`, `n × m`.
    pub drift: Array2<f64>,
    /// `Hᵀ Σ̂ H`, `n × m × m`.
    pub diffusion: Array3<f64>,
    /// `‖(I − Π) μ̂‖`.
    pub normal_drift: Vec<f64>,
    /// `‖Σ̂ − Π Σ̂ Π‖_F`.
    pub normal_diffusion: Vec<f64>,
}

pub fn project_to_tangent(est: &MomentEstimates, frames: &[TangentFrame]) -> Result<TangentMoments> {
    let n = est.drift_hat.nrows();
    if frames.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: frames.len() });
    }
    let b = est.drift_hat.ncols();
    let m = frames.first().map(|f| f.basis.ncols()).unwrap_or(0);
    let mut drift = Array2::zeros((n, m));
    let mut diffusion = Array3::zeros((n, m, m));
    let mut normal_drift = Vec::with_capacity(n);
    let mut normal_diffusion = Vec::with_capacity(n);
    for (i, f) in frames.iter().enumerate() {
        let mu = nalgebra::DVector::from_iterator(b, est.drift_hat.row(i).iter().copied());
        let sigma = DMatrix::from_fn(b, b, |a, c| est.diff_hat[[i, a, c]]);
        let t = f.basis.transpose() * &mu;
        let s = f.basis.transpose() * &sigma * &f.basis;
        for a in 0..m {
            drift[[i, a]] = t[a];
            for c in 0..m {
                diffusion[[i, a, c]] = s[(a, c)];
            }
        }
        normal_drift.push((&mu - &f.projector * &mu).norm());
        normal_diffusion.push((&sigma - &f.projector * &sigma * &f.projector).norm());
    }
    Ok(TangentMoments { drift, diffusion, normal_drift, normal_diffusion })
}

/// Tangent frames at every sample of a cloud.
pub fn frames_for(cloud: &PointCloud) -> Result<Vec<TangentFrame>> {
    (0..cloud.len()).into_par_iter().map(|i| tangent_frame(&cloud.spec, cloud.chart(i))).collect()
}

/// Parameters of the shifted, kinked and perturbed ball
/// `{s : ‖s − v_c + sign(sᵀu) β u‖ < h + h³δ}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SphereMomentParams {
    pub m: usize,
    pub h: f64,
    pub shift: Vec<f64>,
    /// Symmetric shift `β` applied on the two half-spaces of `kink_dir`.
    pub kink: f64,
    pub kink_dir: Vec<f64>,
    /// Radius perturbation `δ`.
    pub perturbation: f64,
    pub samples: usize,
    pub seed: u64,
}

impl SphereMomentParams {
    /// Centered, unperturbed ball of radius `h`.
    pub fn centered(m: usize, h: f64, samples: usize, seed: u64) -> Self {
        let mut kink_dir = vec![0.0; m];
        kink_dir[0] = 1.0;
        Self { m, h, shift: vec![0.0; m], kink: 0.0, kink_dir, perturbation: 0.0, samples, seed }
    }
}

/// Monte-Carlo moments `(1/V_m) ∫ {1, s, ssᵀ} 1(s ∈ A) ds` with standard errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SphereMoments {
    pub m0: f64,
    pub m1: Vec<f64>,
    pub m2: Vec<Vec<f64>>,
    pub se_m0: f64,
    pub se_m1: Vec<f64>,
    pub se_m2: Vec<Vec<f64>>,
    pub h: f64,
}

impl SphereMoments {
    /// Moments divided by `hᵐ`, `h^{m+1}` and `h^{m+2}`.
    pub fn normalized(&self) -> SphereMoments {
        let m = self.m1.len() as i32;
        let (s0, s1, s2) = (self.h.powi(m), self.h.powi(m + 1), self.h.powi(m + 2));
        let scale2 = |v: &Vec<Vec<f64>>| v.iter().map(|r| r.iter().map(|x| x / s2).collect()).collect();
        SphereMoments {
            m0: self.m0 / s0,
            m1: self.m1.iter().map(|x| x / s1).collect(),
            m2: scale2(&self.m2),
            se_m0: self.se_m0 / s0,
            se_m1: self.se_m1.iter().map(|x| x / s1).collect(),
            se_m2: scale2(&self.se_m2),
            h: 1.0,
        }
    }
}

const ORACLE_CHUNKS: u64 = 64;

pub fn sphere_moment_oracle(params: &SphereMomentParams) -> Result<SphereMoments> {
    let m = params.m;
    if params.samples < 10_000 {
        return Err(Error::TooFewSamples { found: params.samples, min: 10_000 });
    }
    if m == 0 || params.shift.len() != m || params.kink_dir.len() != m {
        return Err(Error::DimensionMismatch { expected: m, found: params.shift.len() });
    }
    if !(params.h > 0.0) {
        return Err(Error::InvalidParameter("h must be positive".into()));
    }
    let dir_norm = params.kink_dir.iter().map(|v| v * v).sum::<f64>().sqrt();
    if params.kink != 0.0 && !(dir_norm > 0.0) {
        return Err(Error::InvalidParameter("kink direction must be non-zero".into()));
    }
    let u: Vec<f64> = params.kink_dir.iter().map(|v| v / dir_norm.max(f64::MIN_POSITIVE)).collect();
    let radius = params.h + params.h.powi(3) * params.perturbation;
    let shift_norm = params.shift.iter().map(|v| v * v).sum::<f64>().sqrt();
    // sampling ball around the origin that contains the whole support
    let outer = radius + shift_norm + params.kink.abs();
    let width = m + 1 + m * m;
    let per_chunk = params.samples.div_ceil(ORACLE_CHUNKS as usize);
    let sums: Vec<(Vec<f64>, Vec<f64>)> = (0..ORACLE_CHUNKS)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
            rng.set_stream(c);
            let count = per_chunk.min(params.samples.saturating_sub(c as usize * per_chunk));
            let mut sum = vec![0.0; width];
            let mut sq = vec![0.0; width];
            let mut s = vec![0.0; m];
            let mut z = vec![0.0; width];
            for _ in 0..count {
                let norm = loop {
                    for v in s.iter_mut() {
                        *v = rng.sample(StandardNormal);
                    }
                    let nn = s.iter().map(|v| v * v).sum::<f64>().sqrt();
                    if nn > 0.0 {
                        break nn;
                    }
                };
                let rad = outer * rng.random::<f64>().powf(1.0 / m as f64);
                for v in s.iter_mut() {
                    *v *= rad / norm;
                }
                let side = s.iter().zip(&u).map(|(a, b)| a * b).sum::<f64>().signum();
                let d2: f64 = (0..m).map(|k| (s[k] - params.shift[k] + side * params.kink * u[k]).powi(2)).sum();
                if d2 < radius * radius {
                    z[0] = 1.0;
                    z[1..=m].copy_from_slice(&s);
                    for a in 0..m {
                        for b in 0..m {
                            z[1 + m + a * m + b] = s[a] * s[b];
                        }
                    }
                    for k in 0..width {
                        sum[k] += z[k];
                        sq[k] += z[k] * z[k];
                    }
                }
            }
            (sum, sq)
        })
        .collect();
    let mut sum = vec![0.0; width];
    let mut sq = vec![0.0; width];
    for (a, b) in sums {
        for k in 0..width {
            sum[k] += a[k];
            sq[k] += b[k];
        }
    }
    // integral = vol(outer ball) · E[z]; dividing by V_m leaves outerᵐ
    let n = params.samples as f64;
    let vol = outer.powi(m as i32);
    let est: Vec<f64> = sum.iter().map(|s| vol * s / n).collect();
    let se: Vec<f64> = sum
        .iter()
        .zip(&sq)
        .map(|(s, q)| {
            let mean = s / n;
            let var = (q / n - mean * mean).max(0.0) * n / (n - 1.0);
            vol * (var / n).sqrt()
        })
        .collect();
    let mat = |v: &[f64]| (0..m).map(|a| v[1 + m + a * m..1 + m + (a + 1) * m].to_vec()).collect();
    Ok(SphereMoments {
        m0: est[0],
        m1: est[1..=m].to_vec(),
        m2: mat(&est),
        se_m0: se[0],
        se_m1: se[1..=m].to_vec(),
        se_m2: mat(&se),
        h: params.h,
    })
}

/// Neighbor-count or bandwidth parameter of a grid cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphParam {
    H(f64),
    K(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub n: usize,
    pub param: GraphParam,
}

/// Errors of one test function in one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorError {
    pub function: ChartFunction,
    pub sup: f64,
    pub median: f64,
}

/// Errors of one `(grid point, seed)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub grid: GridPoint,
    pub seed: u64,
    pub interior: usize,
    pub drift_sup: f64,
    pub drift_median: f64,
    pub diffusion_sup: f64,
    pub diffusion_median: f64,
    pub generator: Vec<GeneratorError>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub manifold: ManifoldSpec,
    pub construction: Construction,
    pub grid: Vec<GridPoint>,
    pub seeds: Vec<u64>,
    pub cells: Vec<CellReport>,
    /// Grid points outside the `n h^{m+2} / log n → ∞` regime.
    pub warnings: Vec<String>,
    /// Wall-clock time; absent from files that must be reproducible.
    #[serde(default)]
    pub runtime_seconds: f64,
}

impl ConvergenceReport {
    fn cells_at(&self, g: usize) -> impl Iterator<Item = &CellReport> {
        let grid = self.grid[g];
        self.cells.iter().filter(move |c| c.grid == grid)
    }

    /// Seed-averaged median interior drift error per grid point.
    pub fn mean_drift_median(&self) -> Vec<f64> {
        (0..self.grid.len())
            .map(|g| {
                let v: Vec<f64> = self.cells_at(g).map(|c| c.drift_median).collect();
                v.iter().sum::<f64>() / v.len() as f64
            })
            .collect()
    }

    /// Seed-averaged median generator error per grid point for test function `f`.
    pub fn mean_generator_median(&self, f: usize) -> Vec<f64> {
        (0..self.grid.len())
            .map(|g| {
                let v: Vec<f64> = self.cells_at(g).map(|c| c.generator[f].median).collect();
                v.iter().sum::<f64>() / v.len() as f64
            })
            .collect()
    }
}

/// Sample points, graph and scaling for one experiment cell.
#[derive(Debug, Clone)]
pub struct Cell {
    pub cloud: PointCloud,
    pub graph: SparseGraph,
    pub inputs: ScalingInputs,
}

/// Samples a cloud and builds a construction on it. Pilot-weighted graphs
/// use a kNN density estimate with the same `k`.
pub fn build_cell(spec: &ManifoldSpec, construction: Construction, grid: GridPoint, seed: u64) -> Result<Cell> {
    let cloud = sample_points(spec, grid.n, seed)?;
    let m = spec.intrinsic_dim();
    let mut opts = BuildOptions::default();
    match grid.param {
        GraphParam::H(h) => opts.h = Some(h),
        GraphParam::K(k) => opts.k = Some(k),
    }
    if construction == Construction::PilotWeightedKnn {
        let k = opts.k.ok_or_else(|| Error::InvalidParameter("pilot_weighted_knn needs k".into()))?;
        opts.pilot = Some(knn_density(&cloud.points, k, m)?);
    }
    let graph = build_graph(&cloud.points, construction, &opts)?;
    let inputs = ScalingInputs::for_graph(&graph, m)?;
    Ok(Cell { cloud, graph, inputs })
}

/// Largest distance from each point to one of its graph neighbors.
pub fn neighborhood_reach(g: &SparseGraph, points: &Array2<f64>) -> Vec<f64> {
    (0..g.n())
        .map(|i| {
            g.weights
                .iter_row(i)
                .map(|(j, _)| {
                    points.row(i).iter().zip(points.row(j).iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
                })
                .fold(0.0, f64::max)
        })
        .collect()
}

/// Per-point bandwidth: neighborhood reach divided by the base kernel's
/// support radius, so a truncated Gaussian counts its scale `h`, not its cutoff.
pub fn local_bandwidth(g: &SparseGraph, points: &Array2<f64>) -> Vec<f64> {
    let support = g.params.base.support_radius();
    neighborhood_reach(g, points).into_iter().map(|r| r / support).collect()
}

/// Points whose distance to the chart boundary is at least twice their
/// local bandwidth.
pub fn interior_mask(cloud: &PointCloud, g: &SparseGraph) -> Vec<bool> {
    let bw = local_bandwidth(g, &cloud.points);
    (0..cloud.len()).map(|i| cloud.spec.boundary_distance(cloud.chart(i)) >= 2.0 * bw[i]).collect()
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn sup(v: &[f64]) -> f64 {
    v.iter().copied().fold(0.0, f64::max)
}

/// Per-point drift errors `‖Hᵀμ̂ − μ‖` and diffusion errors `|tr(HᵀΣ̂H)/m − r²|`.
pub fn field_errors(cell: &Cell, op: &LimitOperator) -> Result<(Vec<f64>, Vec<f64>)> {
    let est = empirical_moments(&cell.graph, &cell.cloud.points, &cell.inputs)?;
    let tm = project_to_tangent(&est, &frames_for(&cell.cloud)?)?;
    let m = cell.cloud.spec.intrinsic_dim();
    let mut drift = Vec::with_capacity(cell.cloud.len());
    let mut diff = Vec::with_capacity(cell.cloud.len());
    for i in 0..cell.cloud.len() {
        let u = cell.cloud.chart(i);
        let mu = op.drift(u)?;
        drift.push((0..m).map(|a| (tm.drift[[i, a]] - mu[a]).powi(2)).sum::<f64>().sqrt());
        let tr = (0..m).map(|a| tm.diffusion[[i, a, a]]).sum::<f64>() / m as f64;
        diff.push((tr - op.diffusion_scale(u)).abs());
    }
    Ok((drift, diff))
}

/// Builds every `(grid point, seed)` cell, compares generator, drift and
/// diffusion against the construction's catalog limit at interior points.
pub fn run_convergence(
    spec: &ManifoldSpec,
    construction: Construction,
    grid: &[GridPoint],
    seeds: &[u64],
    f_test: &[ChartFunction],
) -> Result<ConvergenceReport> {
    let start = Instant::now();
    let op = catalog_limit(construction, spec)?;
    let m = spec.intrinsic_dim();
    let mut warnings = Vec::new();
    for gp in grid {
        let h = match gp.param {
            GraphParam::H(h) => h,
            GraphParam::K(k) => crate::graphs::knn_scale(k, gp.n, m),
        };
        let regime = gp.n as f64 * h.powi(m as i32 + 2) / (gp.n as f64).ln();
        if regime < 1.0 {
            warnings.push(format!("n = {}, h = {h:.4}: n h^(m+2) / log n = {regime:.3} is small", gp.n));
        }
    }
    let jobs: Vec<(GridPoint, u64)> = grid.iter().flat_map(|g| seeds.iter().map(move |s| (*g, *s))).collect();
    let cells: Vec<CellReport> = jobs
        .into_par_iter()
        .map(|(gp, seed)| -> Result<CellReport> {
            let cell = build_cell(spec, construction, gp, seed)?;
            let mask = interior_mask(&cell.cloud, &cell.graph);
            let interior: Vec<usize> = (0..mask.len()).filter(|&i| mask[i]).collect();
            if interior.is_empty() {
                return Err(Error::EmptyInterior);
            }
            let (drift, diff) = field_errors(&cell, &op)?;
            let pick = |v: &[f64]| interior.iter().map(|&i| v[i]).collect::<Vec<_>>();
            let l = assemble(&cell.graph, LaplacianKind::RandomWalk, &cell.inputs)?;
            let mut generator = Vec::with_capacity(f_test.len());
            for f in f_test {
                let values: Vec<f64> = (0..cell.cloud.len()).map(|i| f.value(spec, cell.cloud.chart(i))).collect();
                let af = apply(&l, &values)?;
                let errs = interior
                    .iter()
                    .map(|&i| Ok((af[i] - op.generator(f, cell.cloud.chart(i))?).abs()))
                    .collect::<Result<Vec<f64>>>()?;
                generator.push(GeneratorError { function: *f, sup: sup(&errs), median: median(errs) });
            }
            let (d, s) = (pick(&drift), pick(&diff));
            Ok(CellReport {
                grid: gp,
                seed,
                interior: interior.len(),
                drift_sup: sup(&d),
                drift_median: median(d),
                diffusion_sup: sup(&s),
                diffusion_median: median(s),
                generator,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ConvergenceReport {
        manifold: spec.clone(),
        construction,
        grid: grid.to_vec(),
        seeds: seeds.to_vec(),
        cells,
        warnings,
        runtime_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Scaled empirical degrees against the limit degree function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegreeCheck {
    /// `dᵢ / (n hᵐ)`.
    pub scaled: Vec<f64>,
    /// `C′ V_m rᵐ w p` at each sample.
    pub predicted: Vec<f64>,
    pub relative_error: Vec<f64>,
    /// Coefficient of variation of the scaled degrees over interior points.
    pub interior_cv: f64,
}

pub fn degree_limit_check(cell: &Cell, construction: Construction) -> Result<DegreeCheck> {
    let op = catalog_limit(construction, &cell.cloud.spec)?;
    let c_prime = cell.inputs.base.constants(cell.inputs.m)?.c_prime;
    let d = degree_vector(&cell.graph)?;
    let scale = cell.cloud.len() as f64 * cell.inputs.h.powi(cell.inputs.m as i32);
    let scaled: Vec<f64> = d.iter().map(|v| v / scale).collect();
    let predicted: Vec<f64> = (0..cell.cloud.len()).map(|i| c_prime * op.degree_fn(cell.cloud.chart(i))).collect();
    let relative_error = scaled.iter().zip(&predicted).map(|(a, b)| (a - b).abs() / b).collect();
    let mask = interior_mask(&cell.cloud, &cell.graph);
    let inner: Vec<f64> = (0..scaled.len()).filter(|&i| mask[i]).map(|i| scaled[i]).collect();
    Ok(DegreeCheck { scaled, predicted, relative_error, interior_cv: coefficient_of_variation(&inner) })
}

pub fn coefficient_of_variation(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    var.sqrt() / mean
}

/// Median over points of the standard deviation `√tr Var(Y₁ − x)` of one
/// random-walk step.
pub fn median_step_std(g: &SparseGraph, points: &Array2<f64>) -> Result<f64> {
    let inputs = ScalingInputs { base: crate::kernels::BaseKernel::Indicator, m: 1, h: 3f64.sqrt() };
    // with Z = 3 and h = √3 the scaling c_n is exactly 1
    let est = empirical_moments(g, points, &inputs)?;
    let b = points.ncols();
    Ok(median((0..g.n()).map(|i| (0..b).map(|a| est.diff_hat[[i, a, a]]).sum::<f64>().sqrt()).collect()))
}

/// Tangent drift divided by the diffusion scale `tr(HᵀΣ̂H)/m`, which removes
/// the time scaling so graphs with different `c_n` are comparable.
pub fn normalized_tangent_drift(cell: &Cell) -> Result<Array2<f64>> {
    let est = empirical_moments(&cell.graph, &cell.cloud.points, &cell.inputs)?;
    let tm = project_to_tangent(&est, &frames_for(&cell.cloud)?)?;
    let (n, m) = tm.drift.dim();
    Ok(Array2::from_shape_fn((n, m), |(i, a)| {
        let scale = (0..m).map(|c| tm.diffusion[[i, c, c]]).sum::<f64>() / m as f64;
        tm.drift[[i, a]] / scale
    }))
}

/// Distances of the plain and pilot-weighted kNN drift fields to the drift
/// field of a degree-normalized Gaussian graph on the same sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PilotComparison {
    pub seed: u64,
    pub n: usize,
    pub k: usize,
    /// Gaussian bandwidth: median one-step standard deviation of the kNN walk.
    pub gaussian_h: f64,
    pub interior: usize,
    pub plain_sup: f64,
    pub pilot_sup: f64,
    pub plain_rms: f64,
    pub pilot_rms: f64,
}

impl PilotComparison {
    pub fn pilot_closer(&self) -> bool {
        self.pilot_sup < self.plain_sup
    }
}

pub fn pilot_comparison(spec: &ManifoldSpec, n: usize, k: usize, seed: u64) -> Result<PilotComparison> {
    let grid = GridPoint { n, param: GraphParam::K(k) };
    let plain = build_cell(spec, Construction::KnnUndirectedOr, grid, seed)?;
    let pilot = build_cell(spec, Construction::PilotWeightedKnn, grid, seed)?;
    let directed = build_graph(
        &plain.cloud.points,
        Construction::KnnDirected,
        &BuildOptions { k: Some(k), ..Default::default() },
    )?;
    let gaussian_h = median_step_std(&directed, &plain.cloud.points)?;
    let gauss =
        build_cell(spec, Construction::DegreeNormalized, GridPoint { n, param: GraphParam::H(gaussian_h) }, seed)?;
    let (a, b, c) =
        (normalized_tangent_drift(&plain)?, normalized_tangent_drift(&pilot)?, normalized_tangent_drift(&gauss)?);
    let mask_knn = interior_mask(&plain.cloud, &plain.graph);
    let mask_gauss = interior_mask(&gauss.cloud, &gauss.graph);
    let interior: Vec<usize> = (0..n).filter(|&i| mask_knn[i] && mask_gauss[i]).collect();
    if interior.is_empty() {
        return Err(Error::EmptyInterior);
    }
    let dist = |x: &Array2<f64>| {
        let e: Vec<f64> = interior
            .iter()
            .map(|&i| x.row(i).iter().zip(c.row(i).iter()).map(|(u, v)| (u - v).powi(2)).sum::<f64>().sqrt())
            .collect();
        (sup(&e), (e.iter().map(|v| v * v).sum::<f64>() / e.len() as f64).sqrt())
    };
    let ((plain_sup, plain_rms), (pilot_sup, pilot_rms)) = (dist(&a), dist(&b));
    Ok(PilotComparison { seed, n, k, gaussian_h, interior: interior.len(), plain_sup, pilot_sup, plain_rms, pilot_rms })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphs::build_r_neighborhood;

    #[test]
    fn two_point_drift() {
        let pts = Array2::from_shape_vec((2, 1), vec![0.0, 0.5]).unwrap();
        let g = build_r_neighborhood(&pts, 1.0).unwrap();
        let inputs = ScalingInputs::for_graph(&g, 1).unwrap();
        let est = empirical_moments(&g, &pts, &inputs).unwrap();
        assert_eq!(est.drift_hat[[0, 0]], 3.0 * 0.5);
        assert_eq!(est.drift_hat[[1, 0]], -3.0 * 0.5);
        assert_eq!(est.diff_hat[[0, 0, 0]], 0.0);
    }

    #[test]
    fn oracle_rejects_small_samples() {
        assert!(matches!(
            sphere_moment_oracle(&SphereMomentParams::centered(2, 0.1, 100, 1)),
            Err(Error::TooFewSamples { .. })
        ));
    }

    #[test]
    fn oracle_is_deterministic() {
        let p = SphereMomentParams::centered(2, 0.1, 20_000, 5);
        assert_eq!(sphere_moment_oracle(&p).unwrap(), sphere_moment_oracle(&p).unwrap());
    }

    #[test]
    fn median_step_std_of_pair() {
        let pts = Array2::from_shape_vec((3, 1), vec![0.0, 1.0, 2.0]).unwrap();
        let g = build_r_neighborhood(&pts, 1.5).unwrap();
        // endpoints step deterministically, the middle point has std 1
        assert_eq!(median_step_std(&g, &pts).unwrap(), 0.0);
    }
}
