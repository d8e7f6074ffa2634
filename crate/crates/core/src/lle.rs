//! Locally linear embedding: reconstruction weights, the matrix
//! `M = I − W`, and diagnostics for how close `M` is to the zero operator.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::graphs::build_index;
use crate::laplacians::{apply, LaplacianMatrix};
use crate::manifolds::{ChartFunction, PointCloud};
use crate::neighbors::check_k;
use crate::sparse::CsrMatrix;
use crate::spectral::{smallest_eigenpairs, EigenOptions, Embedding};
use crate::{Error, Result};

/// Relative singular-value floor below which the local system counts as singular.
const SINGULAR_RCOND: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LleModel {
    /// Reconstruction weights; row `i` is supported on the `k` nearest neighbors of `i`.
    pub w: CsrMatrix,
    /// `I − W`.
    pub m: CsrMatrix,
    pub k: usize,
    pub reg: f64,
    /// `‖xᵢ − Σⱼ W_ij xⱼ‖`.
    pub residuals: Vec<f64>,
}

/// Minimizes `‖xᵢ − Σⱼ wⱼ xⱼ‖²` over the `k` nearest neighbors subject to
/// `Σⱼ wⱼ = 1`, with ridge `reg · tr(G) / k` added to the local Gram matrix.
pub fn fit_lle(points: &Array2<f64>, k: usize, reg: f64) -> Result<LleModel> {
    if !(reg >= 0.0) || !reg.is_finite() {
        return Err(Error::InvalidParameter(format!("regularization must be non-negative, got {reg}")));
    }
    let n = points.nrows();
    check_k(k, n)?;
    let index = build_index(points)?;
    let rows: Vec<(Vec<(usize, f64)>, f64)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let idx: Vec<usize> = index.knn_of(i, k).into_iter().map(|(j, _)| j).collect();
            let w = local_weights(points, i, &idx, reg)?;
            let b = points.ncols();
            let residual = (0..b)
                .map(|c| {
                    let rec: f64 = idx.iter().zip(&w).map(|(&j, wj)| wj * points[[j, c]]).sum();
                    (points[[i, c]] - rec).powi(2)
                })
                .sum::<f64>()
                .sqrt();
            let mut row: Vec<(usize, f64)> = idx.into_iter().zip(w).collect();
            row.sort_by_key(|e| e.0);
            Ok((row, residual))
        })
        .collect::<Result<_>>()?;
    let (w_rows, residuals): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
    let w = CsrMatrix::from_rows(n, w_rows);
    let m = CsrMatrix::identity(n).sub(&w);
    Ok(LleModel { w, m, k, reg, residuals })
}

/// With a ridge, solves `(G + ridge·I) w = 1` and normalizes. Without one,
/// solves the KKT system `[G 1; 1ᵀ 0] [w; λ] = [0; 1]`, which stays
/// well-posed for singular `G` whenever the constrained minimizer is unique.
fn local_weights(points: &Array2<f64>, i: usize, idx: &[usize], reg: f64) -> Result<Vec<f64>> {
    let k = idx.len();
    let b = points.ncols();
    let z = DMatrix::from_fn(k, b, |a, c| points[[idx[a], c]] - points[[i, c]]);
    let mut g = &z * z.transpose();
    let trace = g.trace();
    // the scale of G does not affect w, so normalize it for conditioning
    if trace > 0.0 {
        g /= trace / k as f64;
    }
    if reg > 0.0 {
        for a in 0..k {
            g[(a, a)] += reg;
        }
        let chol = g.cholesky().ok_or(Error::SingularSystem(i))?;
        let w = chol.solve(&DVector::from_element(k, 1.0));
        let sum = w.sum();
        return Ok(w.iter().map(|v| v / sum).collect());
    }
    let mut kkt = DMatrix::zeros(k + 1, k + 1);
    kkt.view_mut((0, 0), (k, k)).copy_from(&g);
    for a in 0..k {
        kkt[(a, k)] = 1.0;
        kkt[(k, a)] = 1.0;
    }
    let mut rhs = DVector::zeros(k + 1);
    rhs[k] = 1.0;
    let svd = kkt.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > SINGULAR_RCOND * smax) {
        return Err(Error::SingularSystem(i));
    }
    let sol = svd.solve(&rhs, 0.0).map_err(|e| Error::Domain(e.to_string()))?;
    let sum: f64 = sol.rows(0, k).sum();
    Ok(sol.rows(0, k).iter().map(|v| v / sum).collect())
}

/// `M = A⁺ − A⁻` with `A^± = D^± − W^±` built from the positive and
/// negative parts of `W`; both have zero row sums.
pub fn split_generators(model: &LleModel) -> (CsrMatrix, CsrMatrix) {
    let n = model.w.n_rows();
    let part = |sign: f64| {
        let rows = (0..n)
            .map(|i| {
                let mut diag = 0.0;
                let mut row: Vec<(usize, f64)> = Vec::new();
                for (j, v) in model.w.iter_row(i) {
                    let p = (sign * v).max(0.0);
                    if p > 0.0 {
                        diag += p;
                        row.push((j, -p));
                    }
                }
                row.push((i, diag));
                row.sort_by_key(|e| e.0);
                row
            })
            .collect();
        CsrMatrix::from_rows(n, rows)
    };
    (part(1.0), part(-1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionDegeneracy {
    pub function: ChartFunction,
    /// `‖c_n M f‖`.
    pub lle_norm: f64,
    /// `‖c_n L_rw f‖` of the reference Laplacian.
    pub laplacian_norm: f64,
    /// `‖c_n A⁺ f‖` and `‖c_n A⁻ f‖`.
    pub positive_norm: f64,
    pub negative_norm: f64,
    /// `‖M f‖ / ‖L_rw f‖`.
    pub cancellation_ratio: f64,
    /// `‖M f‖ / max(‖A⁺ f‖, ‖A⁻ f‖)`; near zero when the two parts cancel.
    pub split_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegeneracyReport {
    pub k: usize,
    pub reg: f64,
    /// Scaling taken from the reference Laplacian.
    pub c_n: f64,
    pub functions: Vec<FunctionDegeneracy>,
}

fn norm(v: &[f64]) -> f64 {
    (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt()
}

/// Compares `c_n M f` with the reference Laplacian action on the same points.
pub fn lle_degeneracy_report(
    model: &LleModel,
    cloud: &PointCloud,
    reference: &LaplacianMatrix,
    test_fns: &[ChartFunction],
) -> Result<DegeneracyReport> {
    let n = model.m.n_rows();
    if cloud.len() != n || reference.matrix.n_rows() != n {
        return Err(Error::DimensionMismatch { expected: n, found: cloud.len().max(reference.matrix.n_rows()) });
    }
    let c_n = reference.scaling;
    let (plus, minus) = split_generators(model);
    let functions = test_fns
        .iter()
        .map(|f| {
            let values: Vec<f64> = (0..n).map(|i| f.value(&cloud.spec, cloud.chart(i))).collect();
            let mf = model.m.mul_vec(&values)?;
            let lf = apply(reference, &values)?;
            let pf = plus.mul_vec(&values)?;
            let qf = minus.mul_vec(&values)?;
            let lle_norm = c_n * norm(&mf);
            let laplacian_norm = norm(&lf);
            let positive_norm = c_n * norm(&pf);
            let negative_norm = c_n * norm(&qf);
            Ok(FunctionDegeneracy {
                function: *f,
                lle_norm,
                laplacian_norm,
                positive_norm,
                negative_norm,
                cancellation_ratio: lle_norm / laplacian_norm,
                split_ratio: lle_norm / positive_norm.max(negative_norm),
            })
        })
        .collect::<Result<_>>()?;
    Ok(DegeneracyReport { k: model.k, reg: model.reg, c_n, functions })
}

/// Fits LLE at each regularization and reports the degeneracy diagnostics.
pub fn regularization_sweep(
    cloud: &PointCloud,
    k: usize,
    regs: &[f64],
    reference: &LaplacianMatrix,
    test_fns: &[ChartFunction],
) -> Result<Vec<DegeneracyReport>> {
    regs.iter()
        .map(|&reg| lle_degeneracy_report(&fit_lle(&cloud.points, k, reg)?, cloud, reference, test_fns))
        .collect()
}

/// Bottom eigenvectors of `MᵀM` orthogonal to the constant vector. When the
/// null space is degenerate (exact local reconstructions), the constant is
/// projected out of the computed subspace and the rest re-diagonalized.
pub fn embed_lle(model: &LleModel, dim: usize, opts: &EigenOptions) -> Result<Embedding> {
    let mtm = model.m.transpose().matmul(&model.m);
    // symmetrize the rounding in the product so the symmetry check is exact
    let mtm = mtm.add(&mtm.transpose()).map_entries(|_, _, v| 0.5 * v);
    let eig = smallest_eigenpairs(&mtm, dim + 1, opts)?;
    let n = mtm.n_rows();
    let v = &eig.eigenvectors;
    let lambda = DMatrix::from_diagonal(&DVector::from_vec(eig.eigenvalues.clone()));
    // coordinates of the unit constant vector in the computed basis
    let c = v.row_sum().transpose() / (n as f64).sqrt();
    let (basis, trivial) = if c.norm() > 0.5 {
        let c = &c / c.norm();
        let complement = SymmetricEigen::new(DMatrix::identity(dim + 1, dim + 1) - &c * c.transpose());
        let mut cols: Vec<usize> = (0..=dim).collect();
        cols.sort_by(|&a, &b| complement.eigenvalues[b].total_cmp(&complement.eigenvalues[a]));
        let q = DMatrix::from_fn(dim + 1, dim, |r, j| complement.eigenvectors[(r, cols[j])]);
        (q, (c.transpose() * &lambda * &c)[(0, 0)])
    } else {
        (DMatrix::from_fn(dim + 1, dim, |r, j| if r == j + 1 { 1.0 } else { 0.0 }), eig.eigenvalues[0])
    };
    let ritz = SymmetricEigen::new(basis.transpose() * &lambda * &basis);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| ritz.eigenvalues[a].total_cmp(&ritz.eigenvalues[b]));
    let mut coords = Array2::zeros((n, dim));
    for (j, &o) in order.iter().enumerate() {
        let mut col = v * (&basis * ritz.eigenvectors.column(o));
        if col[col.iamax()] < 0.0 {
            col.neg_mut();
        }
        for i in 0..n {
            coords[[i, j]] = col[i];
        }
    }
    Ok(Embedding {
        coords,
        eigenvalues: order.iter().map(|&o| ritz.eigenvalues[o]).collect(),
        trivial_eigenvalue: trivial,
        stats: eig.stats,
    })
}
