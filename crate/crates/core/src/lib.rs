//! # laplace-limits
//!
//! Graph Laplacians built from point clouds sampled on known manifolds, and
//! the diffusion operators they converge to.
//!
//! A graph on samples `x_1..x_n` with weights `W` defines a random walk with
//! transition matrix `P = D⁻¹W`. After rescaling by `c_n`, the one-step mean
//! and covariance of that walk are the drift `μ` and diffusion `σσᵀ` of a
//! limiting diffusion process, and `-c_n L_rw f → A f` with
//!
//! ```text
//! A f = ½ tr(σσᵀ ∇²f) + μ·∇f
//! ```
//!
//! The generalized kernel `K(x, y) = w_x(y) K₀(‖y − x‖ / (h r_x(y)))` covers
//! r-neighborhood, directed and undirected kNN, self-tuning and
//! pilot-weighted graphs through its location dependent bandwidth `r` and
//! weight `w`. For a given `(K₀, r, w)` the drift and diffusion are
//!
//! ```text
//! μ   = r² (∇p/p + ∇w/w + (m + 2) ṙ/r)
//! σσᵀ = r² I
//! ```
//!
//! in tangent coordinates, where `p` is the sampling density and `m` the
//! intrinsic dimension.
//!
//! ## Modules
//!
//! | Module | Purpose |
//! |--------|---------|
//! | [`manifolds`] | analytic test manifolds, sampling, tangent frames |
//! | [`kernels`] | base kernels, bandwidth/weight fields, limit designer |
//! | [`graphs`] | neighbor search and graph constructions |
//! | [`laplacians`] | random-walk, unnormalized and normalized Laplacians |
//! | [`density`] | kNN density estimates and pilot weights |
//! | [`limits`] | analytic limit operators |
//! | [`validate`] | empirical moments, moment oracles, convergence runs |
//! | [`lle`] | locally linear embedding weights and diagnostics |
//! | [`spectral`] | smallest eigenpairs and embeddings |
//! | [`io`] | CSV, JSON and Matrix Market persistence |

// `!(x > 0.0)` deliberately rejects NaN alongside non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod density;
pub mod graphs;
pub mod io;
pub mod kernels;
pub mod laplacians;
pub mod limits;
pub mod lle;
pub mod manifolds;
pub mod neighbors;
pub mod quadrature;
pub mod sparse;
pub mod spectral;
pub mod validate;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid manifold: {0}")]
    InvalidManifold(String),

    #[error("point outside chart: {0}")]
    OutOfChart(String),

    #[error("rejection sampler gave up after {attempts} attempts")]
    SamplerExhausted { attempts: u64 },

    #[error("invalid kernel: {0}")]
    InvalidKernel(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("k = {k} out of range for n = {n} points")]
    KOutOfRange { k: usize, n: usize },

    #[error("vertex {0} has zero degree")]
    IsolatedVertex(usize),

    #[error("singular local system at point {0}")]
    SingularSystem(usize),

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("eigensolver did not converge: {converged} of {wanted} pairs after {iterations} iterations")]
    NoConvergence { iterations: usize, converged: usize, wanted: usize },

    #[error("graph is disconnected ({0} components)")]
    Disconnected(usize),

    #[error("no interior points left after removing the boundary collar")]
    EmptyInterior,

    #[error("{found} samples requested, at least {min} required")]
    TooFewSamples { found: usize, min: usize },

    #[error("unknown construction: {0}")]
    UnknownConstruction(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Volume of the unit ball in ℝᵐ, `π^{m/2} / Γ(m/2 + 1)`.
pub fn unit_ball_volume(m: usize) -> f64 {
    // V_0 = 1, V_1 = 2, V_m = 2π/m · V_{m-2}
    let mut v = if m % 2 == 0 { 1.0 } else { 2.0 };
    let mut d = if m % 2 == 0 { 2 } else { 3 };
    while d <= m {
        v *= 2.0 * std::f64::consts::PI / d as f64;
        d += 2;
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn ball_volumes() {
        assert_eq!(unit_ball_volume(1), 2.0);
        assert!((unit_ball_volume(2) - PI).abs() < 1e-15);
        assert!((unit_ball_volume(3) - 4.0 * PI / 3.0).abs() < 1e-14);
        for m in 1..8 {
            let gamma = statrs::function::gamma::gamma(m as f64 / 2.0 + 1.0);
            let closed = PI.powf(m as f64 / 2.0) / gamma;
            assert!((unit_ball_volume(m) - closed).abs() < 1e-12 * closed);
        }
    }
}
