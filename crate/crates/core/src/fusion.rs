//! LLE combined with other reductions: geodesic neighbors (ISOLLE), a PCA-style
//! display (LLE-PCA), Fisher discriminant projection (ULLELDA) and the
//! discriminant graph embedding (DLLE).

use nalgebra::{DMatrix, DVector};

use crate::dataset::{center, DataMatrix};
use crate::error::{invalid, shape, LleError, Result};
use crate::lle_core::{check_p, lle_fit, lle_with_distances, reconstruction_weights, scatter_weights, EmbeddingMatrix, LleFit, ScaleConvention};
use crate::neighbors::{geodesic_distances, knn_graph_filtered, pairwise_euclidean, NeighborGraph};
use crate::numlin::generalized_sym_eigen;

/// Neighbors by shortest-path distance over the `k`-graph; weights and embedding as plain LLE.
pub fn isolle(x: &DataMatrix, k: usize, p: usize, eps_scale: f64) -> Result<LleFit> {
    let geo = geodesic_distances(&pairwise_euclidean(x), k)?;
    lle_with_distances(x, &geo, k, p, eps_scale)
}

/// First `p` rows of `X_c V V^T` with `V = Y / sqrt(n)` the orthonormal LLE basis, as `n x p`.
pub fn lle_pca(x: &DataMatrix, k: usize, p: usize, eps_scale: f64) -> Result<EmbeddingMatrix> {
    if p > x.dim() {
        return invalid(format!("LLE-PCA keeps the first p rows of a {}-row display, got p = {p}", x.dim()));
    }
    let xc = center(x);
    let fit = lle_fit(&xc, k, p, eps_scale)?;
    let v = &fit.embedding.y / (x.len() as f64).sqrt();
    let display = xc.matrix() * &v * v.transpose();
    Ok(EmbeddingMatrix {
        y: display.rows(0, p).transpose(),
        eigenvalues: fit.embedding.eigenvalues,
        scale: ScaleConvention::Native,
    })
}

/// Fisher discriminant directions, one per column of `u`, best first.
#[derive(Debug, Clone)]
pub struct FdaProjection {
    pub u: DMatrix<f64>,
    pub eigenvalues: Vec<f64>,
}

impl FdaProjection {
    /// Project `n x d` rows onto the discriminant directions.
    pub fn project_rows(&self, y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if y.ncols() != self.u.nrows() {
            return shape(format!("rows have {} columns, projection expects {}", y.ncols(), self.u.nrows()));
        }
        Ok(y * &self.u)
    }
}

fn class_count(labels: &[usize]) -> usize {
    let mut seen: Vec<usize> = labels.to_vec();
    seen.sort_unstable();
    seen.dedup();
    seen.len()
}

/// Between- and within-class scatter of `d x n` data.
pub fn class_scatter(x: &DMatrix<f64>, labels: &[usize]) -> (DMatrix<f64>, DMatrix<f64>) {
    let d = x.nrows();
    let mean = x.column_mean();
    let (mut sb, mut sw) = (DMatrix::zeros(d, d), DMatrix::zeros(d, d));
    let classes = labels.iter().max().map_or(0, |&c| c + 1);
    for c in 0..classes {
        let idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        if idx.is_empty() {
            continue;
        }
        let xs = x.select_columns(&idx);
        let cm = xs.column_mean();
        let dm = &cm - &mean;
        sb += &dm * dm.transpose() * idx.len() as f64;
        for col in xs.column_iter() {
            let o = col - &cm;
            sw += &o * o.transpose();
        }
    }
    (sb, sw)
}

fn add_trace_ridge(b: &mut DMatrix<f64>, rel: f64) {
    let d = b.nrows();
    let tr = b.trace();
    let ridge = if tr > 0.0 { rel * tr / d as f64 } else { rel };
    for i in 0..d {
        b[(i, i)] += ridge;
    }
}

/// Top-`p` generalized eigenvectors, largest first.
fn top_generalized(a: &DMatrix<f64>, b: &DMatrix<f64>, p: usize) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let e = generalized_sym_eigen(a, b)?;
    let d = a.nrows();
    let order: Vec<usize> = (0..p).map(|c| d - 1 - c).collect();
    Ok((e.vectors.select_columns(&order), order.iter().map(|&c| e.values[c]).collect()))
}

/// Fisher discriminant on `d x n` data; the within-class scatter gets a `1e-6` trace ridge.
pub fn fda_projection(x: &DMatrix<f64>, labels: &[usize], p: usize) -> Result<FdaProjection> {
    if labels.len() != x.ncols() {
        return shape(format!("{} labels for {} points", labels.len(), x.ncols()));
    }
    let c = class_count(labels);
    if c < 2 {
        return invalid("FDA needs at least two classes");
    }
    if p < 1 || p > x.nrows() {
        return invalid(format!("FDA dimension p = {p} is outside [1, {}]", x.nrows()));
    }
    if p > c - 1 {
        log::warn!("FDA with {c} classes has rank {}; directions beyond it carry no between-class spread", c - 1);
    }
    let (sb, mut sw) = class_scatter(x, labels);
    add_trace_ridge(&mut sw, 1e-6);
    let (u, eigenvalues) = top_generalized(&sb, &sw, p)?;
    Ok(FdaProjection { u, eigenvalues })
}

#[derive(Debug, Clone)]
pub struct UlleldaFit {
    pub lle: LleFit,
    pub fda: FdaProjection,
    /// FDA-projected LLE coordinates, `n x p`.
    pub z: DMatrix<f64>,
    /// Rows `y_i = sum_j w_ij z_j`.
    pub embedding: EmbeddingMatrix,
}

pub fn ullelda(x: &DataMatrix, labels: &[usize], k: usize, p: usize, eps_scale: f64) -> Result<UlleldaFit> {
    if labels.len() != x.len() {
        return shape(format!("{} labels for {} points", labels.len(), x.len()));
    }
    let lle = lle_fit(x, k, p, eps_scale)?;
    let fda = fda_projection(&lle.embedding.y.transpose(), labels, p)?;
    let z = fda.project_rows(&lle.embedding.y)?;
    let y = lle.w.apply(&z);
    let embedding = EmbeddingMatrix { y, eigenvalues: fda.eigenvalues.clone(), scale: ScaleConvention::Native };
    Ok(UlleldaFit { lle, fda, z, embedding })
}

#[derive(Debug, Clone)]
pub struct DlleFit {
    /// `d x p` projection.
    pub u: DMatrix<f64>,
    pub eigenvalues: Vec<f64>,
    /// `U^T X` as `n x p`.
    pub embedding: EmbeddingMatrix,
    pub same_class: NeighborGraph,
    /// Intrinsic similarity: off-diagonal part of `W + W^T - W^T W`.
    pub s: DMatrix<f64>,
    /// Penalty similarity: `1/k` on cross-class neighbor pairs.
    pub b: DMatrix<f64>,
}

pub fn laplacian(s: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_iterator(s.nrows(), s.row_iter().map(|r| r.sum()))) - s
}

/// `tr(U^T A U) / tr(U^T B U)`.
pub fn trace_ratio(u: &DMatrix<f64>, a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (u.transpose() * a * u).trace() / (u.transpose() * b * u).trace()
}

/// DLLE scatter pair `(X L_B X^T, X L_S X^T + ridge)`.
pub fn dlle_scatter(x: &DataMatrix, s: &DMatrix<f64>, b: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let xm = x.matrix();
    let a = xm * laplacian(b) * xm.transpose();
    let mut r = xm * laplacian(s) * xm.transpose();
    r = (&r + r.transpose()) * 0.5;
    add_trace_ridge(&mut r, 1e-6);
    ((&a + a.transpose()) * 0.5, r)
}

pub fn dlle(x: &DataMatrix, labels: &[usize], k: usize, p: usize, eps_scale: f64) -> Result<DlleFit> {
    let n = x.len();
    if labels.len() != n {
        return shape(format!("{} labels for {n} points", labels.len()));
    }
    if k < 1 {
        return invalid("DLLE needs k >= 1");
    }
    if p < 1 || p > x.dim() {
        return invalid(format!("DLLE dimension p = {p} is outside [1, {}]", x.dim()));
    }
    let classes = labels.iter().max().map_or(0, |&c| c + 1);
    for c in 0..classes {
        let size = labels.iter().filter(|&&l| l == c).count();
        if size > 0 && size <= k {
            return invalid(format!("class {c} has {size} members; DLLE needs more than k = {k}"));
        }
    }
    if class_count(labels) < 2 {
        return invalid("DLLE needs at least two classes");
    }
    let d = pairwise_euclidean(x);
    let same_class = knn_graph_filtered(&d, k, |i, j| labels[i] == labels[j])?;
    let w = scatter_weights(&reconstruction_weights(x, &same_class, eps_scale)?, &same_class)?.to_dense();
    let mut s = &w + w.transpose() - w.transpose() * &w;
    s.fill_diagonal(0.0);
    s = (&s + s.transpose()) * 0.5;
    let cross = knn_graph_filtered(&d, k, |i, j| labels[i] != labels[j])?;
    let mut b = DMatrix::zeros(n, n);
    for i in 0..n {
        for &j in cross.neighbors(i) {
            b[(i, j)] = 1.0 / k as f64;
            b[(j, i)] = 1.0 / k as f64;
        }
    }
    let (lb, ls) = dlle_scatter(x, &s, &b);
    let (u, eigenvalues) = top_generalized(&lb, &ls, p)?;
    let y = (u.transpose() * x.matrix()).transpose();
    if y.iter().any(|v| !v.is_finite()) {
        return Err(LleError::NonFinite("DLLE projection".into()));
    }
    let embedding = EmbeddingMatrix { y, eigenvalues: eigenvalues.clone(), scale: ScaleConvention::Native };
    Ok(DlleFit { u, eigenvalues, embedding, same_class, s, b })
}

/// Checks shared by every fused output.
pub fn check_output(e: &EmbeddingMatrix, n: usize, p: usize) -> Result<()> {
    check_p(p, n.max(p + 1))?;
    if e.y.shape() != (n, p) {
        return shape(format!("embedding is {:?}, expected ({n}, {p})", e.y.shape()));
    }
    if e.y.iter().any(|v| !v.is_finite()) {
        return Err(LleError::NonFinite("embedding".into()));
    }
    Ok(())
}
