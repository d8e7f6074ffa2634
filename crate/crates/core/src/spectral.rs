//! Smallest eigenpairs of sparse symmetric matrices, Laplacian eigenmaps,
//! Procrustes alignment and circle fits.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::graphs::SparseGraph;
use crate::laplacians::{assemble, degree_vector, LaplacianKind, ScalingInputs};
use crate::sparse::CsrMatrix;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EigenMethod {
    Dense,
    KrylovSchur,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverStats {
    pub method: EigenMethod,
    pub restarts: usize,
    pub matvecs: usize,
    pub basis_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenResult {
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// `n × count`, orthonormal columns.
    pub eigenvectors: DMatrix<f64>,
    /// `‖A v − λ v‖` per pair.
    pub residuals: Vec<f64>,
    pub stats: SolverStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenOptions {
    /// Relative residual tolerance, measured against `‖A‖_∞`.
    pub tol: f64,
    /// Krylov basis size; `None` picks `max(3·count, count + 48)`.
    pub basis_size: Option<usize>,
    pub max_restarts: usize,
    pub seed: u64,
    /// Krylov block size; resolves eigenvalues up to this multiplicity.
    pub block_size: usize,
    /// Matrices up to this size are solved densely.
    pub dense_threshold: usize,
    /// Matrices up to this size fall back to the dense solver when the
    /// Krylov iteration does not converge.
    pub dense_fallback: usize,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            basis_size: None,
            max_restarts: 300,
            seed: 0x5eed,
            block_size: 3,
            dense_threshold: 600,
            dense_fallback: 4000,
        }
    }
}

fn check_symmetric(a: &CsrMatrix) -> Result<()> {
    if a.n_rows() != a.n_cols() {
        return Err(Error::DimensionMismatch { expected: a.n_rows(), found: a.n_cols() });
    }
    let asym = a.asymmetry();
    if asym > 1e-10 * a.max_abs().max(1.0) {
        return Err(Error::NotSymmetric(asym));
    }
    Ok(())
}

fn residual_norms(a: &CsrMatrix, values: &[f64], vectors: &DMatrix<f64>) -> Result<Vec<f64>> {
    values
        .iter()
        .enumerate()
        .map(|(j, &lambda)| {
            let v: Vec<f64> = vectors.column(j).iter().copied().collect();
            let av = a.mul_vec(&v)?;
            Ok(av.iter().zip(&v).map(|(x, y)| (x - lambda * y).powi(2)).sum::<f64>().sqrt())
        })
        .collect()
}

/// `count` smallest eigenpairs of a symmetric matrix, dense for small inputs
/// and thick-restart Krylov–Schur otherwise. Tightly clustered spectra that
/// defeat the Krylov iteration fall back to the dense solver at desk scale.
pub fn smallest_eigenpairs(a: &CsrMatrix, count: usize, opts: &EigenOptions) -> Result<EigenResult> {
    check_symmetric(a)?;
    let n = a.n_rows();
    if count == 0 || count >= n {
        return Err(Error::InvalidParameter(format!("eigenpair count {count} must lie in 1..{n}")));
    }
    if n <= opts.dense_threshold {
        dense_smallest(a, count)
    } else {
        match krylov_schur_smallest(a, count, opts) {
            Err(Error::NoConvergence { .. }) if n <= opts.dense_fallback => dense_smallest(a, count),
            other => other,
        }
    }
}

/// Dense symmetric eigendecomposition; the reference solver.
pub fn dense_smallest(a: &CsrMatrix, count: usize) -> Result<EigenResult> {
    check_symmetric(a)?;
    let n = a.n_rows();
    let count = count.min(n);
    let dense = a.to_dense();
    let sym = (&dense + dense.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]).then(i.cmp(&j)));
    let values: Vec<f64> = order[..count].iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(n, count);
    for (c, &i) in order[..count].iter().enumerate() {
        let mut col = eig.eigenvectors.column(i).into_owned();
        fix_sign(&mut col);
        vectors.set_column(c, &col);
    }
    let residuals = residual_norms(a, &values, &vectors)?;
    Ok(EigenResult {
        eigenvalues: values,
        eigenvectors: vectors,
        residuals,
        stats: SolverStats { method: EigenMethod::Dense, restarts: 0, matvecs: 0, basis_size: n },
    })
}

/// Makes the largest-magnitude entry positive so outputs are reproducible.
fn fix_sign(v: &mut DVector<f64>) {
    let idx = v.iamax();
    if v[idx] < 0.0 {
        v.neg_mut();
    }
}

/// Orthogonalizes `w` against the columns in `basis` twice.
fn orthogonalize(w: &mut DVector<f64>, basis: &[DVector<f64>]) {
    for _ in 0..2 {
        for b in basis {
            let c = b.dot(w);
            w.axpy(-c, b, 1.0);
        }
    }
}

fn krylov_schur_smallest(a: &CsrMatrix, count: usize, opts: &EigenOptions) -> Result<EigenResult> {
    let n = a.n_rows();
    let block = opts.block_size.max(1).min(n - count);
    let ncv = opts.basis_size.unwrap_or((3 * count).max(count + 48)).max(count + 2 * block).min(n);
    let keep = (count + (ncv - count) / 2).min(ncv - block).max(count);
    // largest eigenvalues of σI − A are the smallest of A
    let sigma = a.inf_norm().max(f64::MIN_POSITIVE);
    let norm = sigma;
    let shifted = |v: &DVector<f64>| -> Result<DVector<f64>> {
        let av = a.mul_vec(v.as_slice())?;
        Ok(DVector::from_iterator(n, v.iter().zip(&av).map(|(x, y)| sigma * x - y)))
    };
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut random_unit = |basis: &[DVector<f64>]| -> DVector<f64> {
        loop {
            let mut v = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
            orthogonalize(&mut v, basis);
            let nv = v.norm();
            if nv > 1e-8 {
                return v / nv;
            }
        }
    };
    let mut v: Vec<DVector<f64>> = Vec::new();
    for _ in 0..block {
        let r = random_unit(&v);
        v.push(r);
    }
    let mut bv: Vec<DVector<f64>> = Vec::new();
    let mut matvecs = 0;
    for restart in 0..=opts.max_restarts {
        // block Krylov expansion: v[j + block] = orth(B v[j])
        while bv.len() < v.len() {
            let w = shifted(&v[bv.len()])?;
            matvecs += 1;
            bv.push(w.clone());
            if v.len() < ncv {
                let mut w = w;
                orthogonalize(&mut w, &v);
                let nw = w.norm();
                let next = if nw > 1e-10 * norm { w / nw } else { random_unit(&v) };
                v.push(next);
            }
        }
        let k = v.len();
        let h = DMatrix::from_fn(k, k, |i, j| 0.5 * (v[i].dot(&bv[j]) + v[j].dot(&bv[i])));
        let eig = SymmetricEigen::new(h);
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]).then(i.cmp(&j)));
        let ritz = |c: usize| -> (DVector<f64>, DVector<f64>) {
            let y = eig.eigenvectors.column(order[c]);
            let mut x = DVector::zeros(n);
            let mut bx = DVector::zeros(n);
            for i in 0..k {
                x.axpy(y[i], &v[i], 1.0);
                bx.axpy(y[i], &bv[i], 1.0);
            }
            (x, bx)
        };
        let kept: Vec<(DVector<f64>, DVector<f64>)> = (0..keep.min(k)).map(ritz).collect();
        let theta: Vec<f64> = (0..kept.len()).map(|c| eig.eigenvalues[order[c]]).collect();
        let res: Vec<DVector<f64>> = kept.iter().zip(&theta).map(|((x, bx), t)| bx - x * *t).collect();
        let converged = res.iter().take(count).filter(|r| r.norm() <= opts.tol * norm).count();
        if converged == count {
            let values: Vec<f64> = theta[..count].iter().map(|t| sigma - t).collect();
            let mut vectors = DMatrix::zeros(n, count);
            for c in 0..count {
                let mut col = kept[c].0.clone();
                col /= col.norm();
                fix_sign(&mut col);
                vectors.set_column(c, &col);
            }
            let residuals = residual_norms(a, &values, &vectors)?;
            return Ok(EigenResult {
                eigenvalues: values,
                eigenvectors: vectors,
                residuals,
                stats: SolverStats { method: EigenMethod::KrylovSchur, restarts: restart, matvecs, basis_size: ncv },
            });
        }
        if restart == opts.max_restarts {
            return Err(Error::NoConvergence { iterations: restart, converged, wanted: count });
        }
        // thick restart: keep the leading Ritz pairs and continue from the
        // largest residual directions, which span the next Krylov block
        let (xs, bxs): (Vec<_>, Vec<_>) = kept.into_iter().unzip();
        let mut res = res;
        res.sort_by(|a, b| b.norm().total_cmp(&a.norm()));
        v = xs;
        bv = bxs;
        for mut r in res.into_iter().take(block) {
            orthogonalize(&mut r, &v);
            let nr = r.norm();
            let next = if nr > 1e-10 * norm { r / nr } else { random_unit(&v) };
            v.push(next);
        }
    }
    unreachable!("loop returns on the final restart")
}

/// Component label per vertex from the sparsity pattern, via union-find.
pub fn connected_components(a: &CsrMatrix) -> (usize, Vec<usize>) {
    let n = a.n_rows();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for (i, j, _) in a.triplets() {
        let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
        if ri != rj {
            parent[ri.max(rj)] = ri.min(rj);
        }
    }
    let mut labels = vec![usize::MAX; n];
    let mut count = 0;
    let mut out = vec![0; n];
    for i in 0..n {
        let r = find(&mut parent, i);
        if labels[r] == usize::MAX {
            labels[r] = count;
            count += 1;
        }
        out[i] = labels[r];
    }
    (count, out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    /// `n × dim` coordinates.
    pub coords: Array2<f64>,
    /// Eigenvalues of the non-trivial pairs used.
    pub eigenvalues: Vec<f64>,
    /// Eigenvalue of the trivial pair (zero for a connected graph).
    pub trivial_eigenvalue: f64,
    pub stats: SolverStats,
}

/// Eigenvectors `2..=dim+1` of the normalized Laplacian, rescaled by
/// `D^{-1/2}` to random-walk eigenvectors.
pub fn laplacian_eigenmap(g: &SparseGraph, dim: usize, opts: &EigenOptions) -> Result<Embedding> {
    if !g.symmetric {
        return Err(Error::NotSymmetric(g.weights.asymmetry()));
    }
    let (components, _) = connected_components(&g.weights);
    if components > 1 {
        return Err(Error::Disconnected(components));
    }
    let inputs = ScalingInputs { base: crate::kernels::BaseKernel::Indicator, m: 1, h: 1.0 };
    let l = assemble(g, LaplacianKind::Normalized, &inputs)?;
    let eig = smallest_eigenpairs(&l.matrix, dim + 1, opts)?;
    // a second eigenvalue at zero means more than one component
    if eig.eigenvalues[1] <= 1e-10 {
        return Err(Error::Disconnected(2));
    }
    let degree = degree_vector(g)?;
    let coords = Array2::from_shape_fn((g.n(), dim), |(i, c)| eig.eigenvectors[(i, c + 1)] / degree[i].sqrt());
    Ok(Embedding {
        coords,
        eigenvalues: eig.eigenvalues[1..].to_vec(),
        trivial_eigenvalue: eig.eigenvalues[0],
        stats: eig.stats,
    })
}

/// Similarity transform `y ≈ s x R + t` minimizing the Frobenius error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Procrustes {
    pub rotation: DMatrix<f64>,
    pub scale: f64,
    pub translation: Vec<f64>,
    /// `‖s x R + t − y‖_F / ‖y − ȳ‖_F`.
    pub relative_error: f64,
}

pub fn procrustes(x: &Array2<f64>, y: &Array2<f64>) -> Result<Procrustes> {
    if x.dim() != y.dim() {
        return Err(Error::DimensionMismatch { expected: y.nrows(), found: x.nrows() });
    }
    let (n, d) = x.dim();
    let mean = |a: &Array2<f64>| (0..d).map(|c| a.column(c).sum() / n as f64).collect::<Vec<_>>();
    let (mx, my) = (mean(x), mean(y));
    let xc = DMatrix::from_fn(n, d, |i, c| x[[i, c]] - mx[c]);
    let yc = DMatrix::from_fn(n, d, |i, c| y[[i, c]] - my[c]);
    let svd = (xc.transpose() * &yc).svd(true, true);
    let (u, vt) = (svd.u.expect("requested"), svd.v_t.expect("requested"));
    let rotation = &u * &vt;
    let xx = xc.norm_squared();
    if !(xx > 0.0) {
        return Err(Error::Domain("cannot align a degenerate point set".into()));
    }
    let scale = svd.singular_values.sum() / xx;
    let fitted = &xc * &rotation * scale;
    let relative_error = (&fitted - &yc).norm() / yc.norm();
    let shift = DVector::from_vec(mx.clone()).transpose() * &rotation * scale;
    let translation = (0..d).map(|c| my[c] - shift[c]).collect();
    Ok(Procrustes { rotation, scale, translation, relative_error })
}

/// Algebraic least-squares circle fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircleFit {
    pub center: [f64; 2],
    pub radius: f64,
    /// Root mean square of `‖x − center‖ − radius`.
    pub rms: f64,
}

impl CircleFit {
    pub fn relative_rms(&self) -> f64 {
        self.rms / self.radius
    }
}

pub fn fit_circle(points: &Array2<f64>) -> Result<CircleFit> {
    if points.ncols() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, found: points.ncols() });
    }
    let n = points.nrows();
    if n < 3 {
        return Err(Error::InvalidParameter("circle fit needs at least 3 points".into()));
    }
    // solve x² + y² = 2a x + 2b y + c in least squares
    let design = DMatrix::from_fn(n, 3, |i, c| match c {
        0 => 2.0 * points[[i, 0]],
        1 => 2.0 * points[[i, 1]],
        _ => 1.0,
    });
    let rhs = DVector::from_fn(n, |i, _| points[[i, 0]].powi(2) + points[[i, 1]].powi(2));
    let sol = design.svd(true, true).solve(&rhs, 1e-14).map_err(|e| Error::Domain(e.to_string()))?;
    let (a, b) = (sol[0], sol[1]);
    let r2 = sol[2] + a * a + b * b;
    if !(r2 > 0.0) {
        return Err(Error::Domain("degenerate circle fit".into()));
    }
    let radius = r2.sqrt();
    let rms = ((0..n)
        .map(|i| (((points[[i, 0]] - a).powi(2) + (points[[i, 1]] - b).powi(2)).sqrt() - radius).powi(2))
        .sum::<f64>()
        / n as f64)
        .sqrt();
    Ok(CircleFit { center: [a, b], radius, rms })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cycle(n: usize) -> CsrMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            t.push((i, (i + 1) % n, -1.0));
            t.push(((i + 1) % n, i, -1.0));
        }
        CsrMatrix::from_triplets(n, n, &t)
    }

    #[test]
    fn four_cycle_spectrum() {
        let r = smallest_eigenpairs(&cycle(4), 3, &EigenOptions::default()).unwrap();
        for (a, b) in r.eigenvalues.iter().zip([0.0, 2.0, 2.0]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn krylov_matches_dense_on_long_cycle() {
        let a = cycle(800);
        let opts = EigenOptions { dense_threshold: 0, ..Default::default() };
        let k = smallest_eigenpairs(&a, 5, &opts).unwrap();
        assert_eq!(k.stats.method, EigenMethod::KrylovSchur);
        for (j, lam) in k.eigenvalues.iter().enumerate() {
            // closed form 2 − 2cos(2π⌈j/2⌉/n)
            let exact = 2.0 - 2.0 * (2.0 * std::f64::consts::PI * ((j + 1) / 2) as f64 / 800.0).cos();
            assert!((lam - exact).abs() < 1e-9, "{j}: {lam} vs {exact}");
        }
        assert!(k.residuals.iter().all(|r| *r <= 1e-8 * 4.0));
    }

    #[test]
    fn rejects_asymmetric() {
        let a = CsrMatrix::from_triplets(2, 2, &[(0, 1, 1.0)]);
        assert!(matches!(smallest_eigenpairs(&a, 1, &EigenOptions::default()), Err(Error::NotSymmetric(_))));
    }

    #[test]
    fn components_of_two_edges() {
        let a = CsrMatrix::from_triplets(4, 4, &[(0, 1, 1.0), (1, 0, 1.0), (2, 3, 1.0), (3, 2, 1.0)]);
        assert_eq!(connected_components(&a), (2, vec![0, 0, 1, 1]));
    }

    #[test]
    fn circle_fit_exact() {
        let pts = Array2::from_shape_fn((12, 2), |(i, c)| {
            let t = i as f64 * 0.5;
            if c == 0 {
                1.0 + 2.0 * t.cos()
            } else {
                -3.0 + 2.0 * t.sin()
            }
        });
        let f = fit_circle(&pts).unwrap();
        assert!((f.radius - 2.0).abs() < 1e-12 && (f.center[0] - 1.0).abs() < 1e-12 && f.rms < 1e-12);
    }

    #[test]
    fn procrustes_recovers_similarity() {
        let x = Array2::from_shape_fn((10, 2), |(i, c)| ((i * 7 + c * 3) % 11) as f64);
        let (s, t) = (0.6f64, 0.8f64);
        let y = Array2::from_shape_fn((10, 2), |(i, c)| {
            let (a, b) = (x[[i, 0]], x[[i, 1]]);
            if c == 0 {
                2.0 * (s * a - t * b) + 1.0
            } else {
                2.0 * (t * a + s * b) - 4.0
            }
        });
        let p = procrustes(&x, &y).unwrap();
        assert!(p.relative_error < 1e-12 && (p.scale - 2.0).abs() < 1e-12);
    }
}
