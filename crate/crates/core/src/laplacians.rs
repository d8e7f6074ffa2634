//! Random-walk, unnormalized and normalized graph Laplacians with their
//! limit scalings.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::graphs::{knn_scale, SparseGraph};
use crate::kernels::BaseKernel;
use crate::sparse::CsrMatrix;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LaplacianKind {
    /// `I − D⁻¹W`.
    RandomWalk,
    /// `D − W`.
    Unnormalized,
    /// `I − D^{−1/2} W D^{−1/2}`.
    Normalized,
}

impl LaplacianKind {
    pub fn name(self) -> &'static str {
        match self {
            LaplacianKind::RandomWalk => "random_walk",
            LaplacianKind::Unnormalized => "unnormalized",
            LaplacianKind::Normalized => "normalized",
        }
    }
}

impl fmt::Display for LaplacianKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LaplacianKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "random_walk" | "rw" => Ok(LaplacianKind::RandomWalk),
            "unnormalized" | "u" => Ok(LaplacianKind::Unnormalized),
            "normalized" | "norm" | "sym" => Ok(LaplacianKind::Normalized),
            other => Err(Error::Parse(format!("unknown Laplacian kind {other:?}"))),
        }
    }
}

/// Inputs that fix the scaling `c_n = Z / h²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingInputs {
    pub base: BaseKernel,
    pub m: usize,
    pub h: f64,
}

impl ScalingInputs {
    /// Scaling read off a graph's construction parameters; kNN-family graphs
    /// use `h = (k / n)^{1/m}`.
    pub fn for_graph(g: &SparseGraph, m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidParameter("m must be at least 1".into()));
        }
        let h = match (g.params.h, g.params.k) {
            (Some(h), _) => h,
            (None, Some(k)) => knn_scale(k, g.n(), m),
            (None, None) => return Err(Error::InvalidParameter("graph records neither h nor k".into())),
        };
        if !(h > 0.0) {
            return Err(Error::InvalidParameter(format!("h must be positive, got {h}")));
        }
        Ok(Self { base: g.params.base.clone(), m, h })
    }

    /// `c_n = Z / h²`.
    pub fn c_n(&self) -> Result<f64> {
        if !(self.h > 0.0) {
            return Err(Error::InvalidParameter(format!("h must be positive, got {}", self.h)));
        }
        Ok(self.base.constants(self.m)?.z / (self.h * self.h))
    }
}

/// An assembled Laplacian with its limit scaling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaplacianMatrix {
    pub kind: LaplacianKind,
    pub matrix: CsrMatrix,
    pub degree: Vec<f64>,
    /// `c_n` for the random-walk and normalized kinds, `c_n / (n hᵐ)` for the
    /// unnormalized kind.
    pub scaling: f64,
}

/// Row sums of `W`; a zero row is an error.
pub fn degree_vector(g: &SparseGraph) -> Result<Vec<f64>> {
    let d = g.weights.row_sums();
    if let Some(i) = d.iter().position(|&v| !(v > 0.0)) {
        return Err(Error::IsolatedVertex(i));
    }
    Ok(d)
}

pub fn assemble(g: &SparseGraph, kind: LaplacianKind, inputs: &ScalingInputs) -> Result<LaplacianMatrix> {
    let degree = degree_vector(g)?;
    let n = g.n();
    let c_n = inputs.c_n()?;
    let w = &g.weights;
    let off = match kind {
        LaplacianKind::RandomWalk => w.map_entries(|i, _, v| -v / degree[i]),
        LaplacianKind::Unnormalized => w.map_entries(|_, _, v| -v),
        LaplacianKind::Normalized => w.map_entries(|i, j, v| -v / (degree[i].sqrt() * degree[j].sqrt())),
    };
    let diag_values: Vec<f64> = match kind {
        LaplacianKind::Unnormalized => degree.clone(),
        _ => vec![1.0; n],
    };
    let diag = CsrMatrix::from_rows(n, diag_values.iter().enumerate().map(|(i, &v)| vec![(i, v)]).collect());
    let scaling = match kind {
        LaplacianKind::Unnormalized => c_n / (n as f64 * inputs.h.powi(inputs.m as i32)),
        _ => c_n,
    };
    Ok(LaplacianMatrix { kind, matrix: diag.add(&off), degree, scaling })
}

/// `−scaling · L f`; for the random-walk kind this is the generator
/// `c_n (P − I) f`.
pub fn apply(l: &LaplacianMatrix, f: &[f64]) -> Result<Vec<f64>> {
    Ok(l.matrix.mul_vec(f)?.into_iter().map(|v| -l.scaling * v).collect())
}
