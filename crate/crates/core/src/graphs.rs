//! Graph constructions on point clouds.

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::DensityEstimate;
use crate::kernels::{BandwidthField, BaseKernel, Combine, KernelSpec, ScalarField, WeightField};
use crate::neighbors::{check_k, NeighborIndex};
use crate::sparse::CsrMatrix;
use crate::{Error, Result};

/// Which construction produced a graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Construction {
    RNeighborhood,
    KnnDirected,
    KnnUndirectedOr,
    SelfTuning,
    PilotWeightedKnn,
    GenericKernel,
    /// A kernel graph reweighted by `1 / √(d(x) d(y))`.
    DegreeNormalized,
}

impl Construction {
    pub const ALL: [Construction; 7] = [
        Construction::RNeighborhood,
        Construction::KnnDirected,
        Construction::KnnUndirectedOr,
        Construction::SelfTuning,
        Construction::PilotWeightedKnn,
        Construction::GenericKernel,
        Construction::DegreeNormalized,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Construction::RNeighborhood => "r_neighborhood",
            Construction::KnnDirected => "knn_directed",
            Construction::KnnUndirectedOr => "knn_undirected_or",
            Construction::SelfTuning => "self_tuning",
            Construction::PilotWeightedKnn => "pilot_weighted_knn",
            Construction::GenericKernel => "generic_kernel",
            Construction::DegreeNormalized => "degree_normalized",
        }
    }

    /// Constructions parameterized by a neighbor count rather than a bandwidth.
    pub fn uses_k(self) -> bool {
        matches!(
            self,
            Construction::KnnDirected
                | Construction::KnnUndirectedOr
                | Construction::SelfTuning
                | Construction::PilotWeightedKnn
        )
    }
}

impl fmt::Display for Construction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Construction {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase().replace('-', "_");
        match s.as_str() {
            "or_knn" | "knn_or" | "knn" => return Ok(Construction::KnnUndirectedOr),
            "directed_knn" => return Ok(Construction::KnnDirected),
            "r" | "epsilon" => return Ok(Construction::RNeighborhood),
            "pilot" | "pilot_knn" => return Ok(Construction::PilotWeightedKnn),
            _ => {}
        }
        Construction::ALL.into_iter().find(|c| c.name() == s).ok_or_else(|| Error::UnknownConstruction(s.to_string()))
    }
}

/// Construction parameters kept with a graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphParams {
    /// Kernel scale for bandwidth-parameterized graphs.
    pub h: Option<f64>,
    /// Neighbor count for kNN-family graphs.
    pub k: Option<usize>,
    /// Base kernel used for the scaling constant `Z`.
    pub base: BaseKernel,
}

/// Weighted adjacency matrix without self-loops.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseGraph {
    pub weights: CsrMatrix,
    pub construction: Construction,
    pub params: GraphParams,
    pub symmetric: bool,
}

impl SparseGraph {
    pub fn new(weights: CsrMatrix, construction: Construction, params: GraphParams) -> Result<Self> {
        if weights.n_rows() != weights.n_cols() {
            return Err(Error::DimensionMismatch { expected: weights.n_rows(), found: weights.n_cols() });
        }
        if weights.triplets().any(|(i, j, v)| i == j || !(v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidParameter("weights must be positive, finite and off-diagonal".into()));
        }
        let symmetric = weights.asymmetry() == 0.0;
        Ok(Self { weights, construction, params, symmetric })
    }

    pub fn n(&self) -> usize {
        self.weights.n_rows()
    }

    pub fn n_edges(&self) -> usize {
        self.weights.nnz()
    }

    /// Graph with all weights multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> SparseGraph {
        SparseGraph { weights: self.weights.map_entries(|_, _, v| factor * v), ..self.clone() }
    }
}

/// Distances to the `k`th nearest neighbor of every sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnRadii {
    pub rho: Vec<f64>,
    pub k: usize,
    pub n: usize,
}

impl KnnRadii {
    /// `h_n = (k / n)^{1/m}`.
    pub fn h_n(&self, m: usize) -> f64 {
        knn_scale(self.k, self.n, m)
    }
}

/// `(k / n)^{1/m}`.
pub fn knn_scale(k: usize, n: usize, m: usize) -> f64 {
    (k as f64 / n as f64).powf(1.0 / m as f64)
}

pub fn build_index(points: &Array2<f64>) -> Result<NeighborIndex> {
    NeighborIndex::new(points)
}

pub fn knn_radii(index: &NeighborIndex, k: usize) -> Result<KnnRadii> {
    let lists = index.all_knn(k)?;
    let rho: Vec<f64> = lists.iter().map(|l| l[k - 1].1).collect();
    if let Some(i) = rho.iter().position(|&r| !(r > 0.0)) {
        return Err(Error::InvalidParameter(format!("point {i} has {k} duplicates, kNN radius is zero")));
    }
    Ok(KnnRadii { rho, k, n: index.len() })
}

fn unit_rows(lists: Vec<Vec<(usize, f64)>>) -> Vec<Vec<(usize, f64)>> {
    lists.into_iter().map(|l| l.into_iter().map(|(j, _)| (j, 1.0)).collect()).collect()
}

/// `W_ij = 1` iff `0 < ‖xᵢ − xⱼ‖ < r`.
pub fn build_r_neighborhood(points: &Array2<f64>, r: f64) -> Result<SparseGraph> {
    if !(r > 0.0) {
        return Err(Error::InvalidParameter(format!("radius must be positive, got {r}")));
    }
    let index = build_index(points)?;
    let rows: Vec<_> = (0..points.nrows())
        .into_par_iter()
        .map(|i| index.within(index.point(i), r, Some(i)).into_iter().filter(|&(_, d)| d > 0.0).collect())
        .collect();
    let weights = CsrMatrix::from_rows(points.nrows(), unit_rows(rows));
    SparseGraph::new(
        weights,
        Construction::RNeighborhood,
        GraphParams { h: Some(r), k: None, base: BaseKernel::Indicator },
    )
}

fn knn_params(k: usize) -> GraphParams {
    GraphParams { h: None, k: Some(k), base: BaseKernel::Indicator }
}

fn directed_weights(index: &NeighborIndex, k: usize) -> Result<CsrMatrix> {
    Ok(CsrMatrix::from_rows(index.len(), unit_rows(index.all_knn(k)?)))
}

/// `W_ij = 1` iff `xⱼ` is among the `k` nearest neighbors of `xᵢ`.
pub fn build_knn_directed(points: &Array2<f64>, k: usize) -> Result<SparseGraph> {
    check_k(k, points.nrows())?;
    let weights = directed_weights(&build_index(points)?, k)?;
    SparseGraph::new(weights, Construction::KnnDirected, knn_params(k))
}

/// Links `i` and `j` when either is among the other's `k` nearest neighbors.
pub fn build_knn_undirected_or(points: &Array2<f64>, k: usize) -> Result<SparseGraph> {
    check_k(k, points.nrows())?;
    let dir = directed_weights(&build_index(points)?, k)?;
    SparseGraph::new(dir.entrywise_max(&dir.transpose()), Construction::KnnUndirectedOr, knn_params(k))
}

/// Truncation radius of the self-tuning kernel in units of `√(ρ(x) ρ(y))`.
pub const SELF_TUNING_CUTOFF: f64 = 3.0;

/// `exp(−‖x − y‖² / (ρ(x) ρ(y)))` with `ρ` the `k`th neighbor distance,
/// truncated at `‖x − y‖ = 3√(ρ(x) ρ(y))`.
pub fn build_self_tuning(points: &Array2<f64>, k: usize) -> Result<SparseGraph> {
    check_k(k, points.nrows())?;
    let radii = knn_radii(&build_index(points)?, k)?;
    let spec = KernelSpec::new(
        BaseKernel::TruncatedGaussian { cutoff: SELF_TUNING_CUTOFF },
        BandwidthField::new(Combine::GeometricMean, ScalarField::samples(points.clone(), radii.rho)?),
        WeightField::constant(1.0),
        1.0,
    )?;
    let g = build_kernel_graph(points, &spec)?;
    SparseGraph::new(
        g.weights,
        Construction::SelfTuning,
        GraphParams { h: None, k: Some(k), base: BaseKernel::TruncatedGaussian { cutoff: SELF_TUNING_CUTOFF } },
    )
}

/// OR-kNN graph with edge weights `√(p̂(xᵢ) p̂(xⱼ))`.
pub fn build_pilot_weighted_knn(points: &Array2<f64>, k: usize, pilot: &DensityEstimate) -> Result<SparseGraph> {
    if pilot.values.len() != points.nrows() {
        return Err(Error::DimensionMismatch { expected: points.nrows(), found: pilot.values.len() });
    }
    let or = build_knn_undirected_or(points, k)?;
    let p = &pilot.values;
    let weights = or.weights.map_entries(|i, j, v| v * (p[i] * p[j]).sqrt());
    SparseGraph::new(weights, Construction::PilotWeightedKnn, knn_params(k))
}

/// `W_ij = K(xᵢ, xⱼ)` for `i ≠ j`, stored when positive.
pub fn build_kernel_graph(points: &Array2<f64>, spec: &KernelSpec) -> Result<SparseGraph> {
    let n = points.nrows();
    let gamma = spec.bandwidth.gamma.values_at(points);
    let omega = spec.weight.omega.values_at(points);
    if let Some(i) = gamma.iter().position(|g| !(*g > 0.0 && g.is_finite())) {
        return Err(Error::Domain(format!("bandwidth {} at point {i}", gamma[i])));
    }
    if let Some(i) = omega.iter().position(|w| !(*w >= 0.0 && w.is_finite())) {
        return Err(Error::Domain(format!("weight {} at point {i}", omega[i])));
    }
    let gmax = gamma.iter().copied().fold(0.0, f64::max);
    let index = build_index(points)?;
    let combine = spec.bandwidth.combine;
    let reach = spec.h * spec.base.support_radius();
    let rows: Vec<Vec<(usize, f64)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let rmax = match combine {
                Combine::Source => gamma[i],
                _ => combine.apply(gamma[i], gmax),
            };
            index
                .within(index.point(i), reach * rmax * (1.0 + 1e-12), Some(i))
                .into_iter()
                .map(|(j, d)| (j, spec.eval_with(d, (gamma[i], gamma[j]), (omega[i], omega[j]))))
                .filter(|&(_, w)| w > 0.0)
                .collect()
        })
        .collect();
    SparseGraph::new(
        CsrMatrix::from_rows(n, rows),
        Construction::GenericKernel,
        GraphParams { h: Some(spec.h), k: None, base: spec.base.clone() },
    )
}

/// Reweights a graph by `W_ij / √(dᵢ dⱼ)`.
pub fn degree_normalized(g: &SparseGraph) -> Result<SparseGraph> {
    let d = crate::laplacians::degree_vector(g)?;
    let s: Vec<f64> = d.iter().map(|v| 1.0 / v.sqrt()).collect();
    let weights = g.weights.scale_rows_cols(&s, &s);
    SparseGraph::new(weights, Construction::DegreeNormalized, g.params.clone())
}

/// Options for [`build_graph`].
#[derive(Debug, Clone, Default)]
pub struct BuildOptions {
    pub h: Option<f64>,
    pub k: Option<usize>,
    pub pilot: Option<DensityEstimate>,
    pub kernel: Option<KernelSpec>,
}

/// Builds any construction from generic options.
pub fn build_graph(points: &Array2<f64>, construction: Construction, opts: &BuildOptions) -> Result<SparseGraph> {
    let need_k = || opts.k.ok_or_else(|| Error::InvalidParameter(format!("{construction} needs k")));
    let need_h = || opts.h.ok_or_else(|| Error::InvalidParameter(format!("{construction} needs h")));
    match construction {
        Construction::RNeighborhood => build_r_neighborhood(points, need_h()?),
        Construction::KnnDirected => build_knn_directed(points, need_k()?),
        Construction::KnnUndirectedOr => build_knn_undirected_or(points, need_k()?),
        Construction::SelfTuning => build_self_tuning(points, need_k()?),
        Construction::PilotWeightedKnn => {
            let pilot = opts
                .pilot
                .as_ref()
                .ok_or_else(|| Error::InvalidParameter("pilot_weighted_knn needs a pilot density".into()))?;
            build_pilot_weighted_knn(points, need_k()?, pilot)
        }
        Construction::GenericKernel | Construction::DegreeNormalized => {
            let spec = match &opts.kernel {
                Some(s) => s.clone(),
                None => KernelSpec::fixed(BaseKernel::TruncatedGaussian { cutoff: 3.0 }, need_h()?)?,
            };
            let g = build_kernel_graph(points, &spec)?;
            if construction == Construction::DegreeNormalized {
                degree_normalized(&g)
            } else {
                Ok(g)
            }
        }
    }
}
