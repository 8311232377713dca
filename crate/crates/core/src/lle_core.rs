//! Plain locally linear embedding: local Gram matrices, barycentric weights,
//! the embedding matrix `M = (I - W)^T (I - W)` and its bottom eigenvectors.

use nalgebra::{DMatrix, DVector, DVectorView};

use crate::dataset::DataMatrix;
use crate::error::{invalid, shape, LleError, Result};
use crate::neighbors::{knn_graph, knn_query, pairwise_euclidean, DistanceMatrix, NeighborGraph};
use crate::numlin::{solve_spd, sym_eigen, SymEigen};

pub const DEFAULT_EPS_SCALE: f64 = 1e-3;
/// A Gram matrix whose smallest eigenvalue is below this fraction of its trace is regularized.
pub const RANK_TOL: f64 = 1e-12;

/// How an embedding's columns are normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScaleConvention {
    /// `(1/n) Y^T Y = I`.
    UnitCovariance,
    /// `(1/n) Y^T D Y = I` for a diagonal degree matrix `D`.
    DegreeWeighted,
    /// Scale fixed by the method itself (projections, Nyström factors).
    Native,
}

/// `n x p` embedding, one point per row.
#[derive(Debug, Clone)]
pub struct EmbeddingMatrix {
    pub y: DMatrix<f64>,
    /// Eigenvalues belonging to the retained columns, when the method is spectral.
    pub eigenvalues: Vec<f64>,
    pub scale: ScaleConvention,
}

/// Barycentric weights per point, in the order of the point's neighbor list.
#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionWeights {
    pub rows: Vec<DVector<f64>>,
}

/// Sparse `n x n` weight matrix stored by rows.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    n: usize,
    rows: Vec<Vec<(usize, f64)>>,
}

impl WeightMatrix {
    pub fn from_rows(n: usize, rows: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        if rows.len() != n {
            return shape(format!("{} weight rows for {n} points", rows.len()));
        }
        for (i, r) in rows.iter().enumerate() {
            for &(j, w) in r {
                if j >= n {
                    return invalid(format!("weight row {i} refers to point {j} of {n}"));
                }
                if !w.is_finite() {
                    return Err(LleError::NonFinite(format!("weight ({i}, {j})")));
                }
            }
        }
        Ok(Self { n, rows })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.rows[i].iter().filter(|e| e.0 == j).map(|e| e.1).sum()
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        self.rows[i].iter().map(|e| e.1).sum()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for (i, r) in self.rows.iter().enumerate() {
            for &(j, w) in r {
                m[(i, j)] += w;
            }
        }
        m
    }

    /// `W * Y` for an `n x p` matrix.
    pub fn apply(&self, y: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.n, y.ncols());
        for (i, r) in self.rows.iter().enumerate() {
            for &(j, w) in r {
                for c in 0..y.ncols() {
                    out[(i, c)] += w * y[(j, c)];
                }
            }
        }
        out
    }
}

/// `M = (I - W)^T (I - W)`, symmetric positive semidefinite.
#[derive(Debug, Clone)]
pub struct GramLaplacian {
    pub m: DMatrix<f64>,
}

impl GramLaplacian {
    pub fn n(&self) -> usize {
        self.m.nrows()
    }
}

/// Everything produced by one LLE run.
#[derive(Debug, Clone)]
pub struct LleFit {
    pub graph: NeighborGraph,
    pub weights: ReconstructionWeights,
    pub w: WeightMatrix,
    pub m: GramLaplacian,
    pub embedding: EmbeddingMatrix,
}

/// Unregularized Gram of the offsets `x_i - x_ij`; `neighbors` holds one point per column.
pub fn raw_local_gram(center: DVectorView<'_, f64>, neighbors: &DMatrix<f64>) -> DMatrix<f64> {
    let mut z = neighbors.clone();
    for mut c in z.column_iter_mut() {
        c -= &center;
    }
    z.transpose() * z
}

/// Add `eps_scale * trace / k` to the diagonal when `k` exceeds the feature
/// dimension or `g` is numerically rank deficient. Returns whether it did.
pub fn regularize_gram(g: &mut DMatrix<f64>, eps_scale: f64, feature_dim: Option<usize>) -> Result<bool> {
    if !(eps_scale >= 0.0) {
        return invalid(format!("eps_scale must be non-negative, got {eps_scale}"));
    }
    let k = g.nrows();
    let tr = g.trace();
    let needed = feature_dim.is_some_and(|d| k > d) || {
        let e = sym_eigen(g)?;
        e.values[0] < RANK_TOL * tr || tr <= 0.0
    };
    if needed {
        // all neighbors on top of the point: fall back to an absolute ridge
        let eps = if tr > 0.0 { eps_scale * tr / k as f64 } else { eps_scale };
        for i in 0..k {
            g[(i, i)] += eps;
        }
    }
    Ok(needed)
}

/// Regularized local Gram for a point and its neighbors (one per column).
pub fn local_gram(x_i: DVectorView<'_, f64>, neighbors: &DMatrix<f64>, eps_scale: f64) -> Result<DMatrix<f64>> {
    if neighbors.nrows() != x_i.len() {
        return shape(format!("point has dimension {}, neighbors {}", x_i.len(), neighbors.nrows()));
    }
    let mut g = raw_local_gram(x_i, neighbors);
    regularize_gram(&mut g, eps_scale, Some(x_i.len()))?;
    Ok(g)
}

/// `G^{-1} 1 / (1^T G^{-1} 1)`.
pub fn barycentric(g: &DMatrix<f64>) -> Result<DVector<f64>> {
    let ones = DVector::from_element(g.nrows(), 1.0);
    let z = solve_spd(g, &ones)?;
    let s = z.sum();
    let scale = z.iter().map(|v| v.abs()).sum::<f64>();
    if !(s.abs() > 1e-14 * scale) || !s.is_finite() {
        return Err(LleError::Degenerate("1^T G^-1 1 vanishes".into()));
    }
    Ok(z / s)
}

fn point_weights(x: &DataMatrix, i: usize, nbrs: &[usize], eps_scale: f64) -> Result<DVector<f64>> {
    let g = local_gram(x.point(i), &x.matrix().select_columns(nbrs), eps_scale)?;
    barycentric(&g).map_err(|e| match e {
        LleError::Singular(_) | LleError::Degenerate(_) => {
            LleError::Degenerate(format!("local Gram of point {i} is singular; use eps_scale > 0"))
        }
        other => other,
    })
}

pub fn reconstruction_weights(x: &DataMatrix, g: &NeighborGraph, eps_scale: f64) -> Result<ReconstructionWeights> {
    if g.len() != x.len() {
        return shape(format!("graph over {} points, data has {}", g.len(), x.len()));
    }
    let rows = (0..x.len()).map(|i| point_weights(x, i, g.neighbors(i), eps_scale)).collect::<Result<Vec<_>>>()?;
    Ok(ReconstructionWeights { rows })
}

pub fn scatter_weights(w: &ReconstructionWeights, g: &NeighborGraph) -> Result<WeightMatrix> {
    if w.rows.len() != g.len() {
        return shape(format!("{} weight rows for a graph over {} points", w.rows.len(), g.len()));
    }
    let mut rows = Vec::with_capacity(g.len());
    for i in 0..g.len() {
        let nb = g.neighbors(i);
        if nb.len() != w.rows[i].len() {
            return shape(format!("point {i}: {} weights for {} neighbors", w.rows[i].len(), nb.len()));
        }
        rows.push(nb.iter().copied().zip(w.rows[i].iter().copied()).collect());
    }
    WeightMatrix::from_rows(g.len(), rows)
}

/// Accumulate `s * r r^T` for the sparse row `r = e_i - w_i`.
pub(crate) fn add_residual_outer(m: &mut DMatrix<f64>, i: usize, row: &[(usize, f64)], s: f64) {
    let mut r: Vec<(usize, f64)> = Vec::with_capacity(row.len() + 1);
    r.push((i, 1.0));
    for &(j, w) in row {
        match r.iter_mut().find(|e| e.0 == j) {
            Some(e) => e.1 -= w,
            None => r.push((j, -w)),
        }
    }
    for &(a, va) in &r {
        for &(b, vb) in &r {
            m[(a, b)] += s * va * vb;
        }
    }
}

pub fn embedding_matrix(w: &WeightMatrix) -> GramLaplacian {
    let n = w.n();
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        add_residual_outer(&mut m, i, w.row(i), 1.0);
    }
    GramLaplacian { m }
}

/// `(I - W)^T diag(s) (I - W)`.
pub fn embedding_matrix_weighted(w: &WeightMatrix, s: &[f64]) -> Result<GramLaplacian> {
    let n = w.n();
    if s.len() != n {
        return shape(format!("{} row weights for {n} points", s.len()));
    }
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        add_residual_outer(&mut m, i, w.row(i), s[i]);
    }
    Ok(GramLaplacian { m })
}

/// Eigenvectors `first..first+p` of an ascending decomposition, scaled by `sqrt(n)`.
pub(crate) fn take_columns(e: &SymEigen, first: usize, p: usize) -> EmbeddingMatrix {
    let n = e.vectors.nrows();
    let y = e.vectors.columns(first, p) * (n as f64).sqrt();
    EmbeddingMatrix {
        y,
        eigenvalues: (first..first + p).map(|c| e.values[c]).collect(),
        scale: ScaleConvention::UnitCovariance,
    }
}

pub(crate) fn check_p(p: usize, n: usize) -> Result<()> {
    if p < 1 || p + 1 > n {
        return invalid(format!("embedding dimension p = {p} is outside [1, {}]", n.saturating_sub(1)));
    }
    Ok(())
}

/// Number of connected components of the nonzero pattern of a square matrix.
pub fn pattern_components(m: &DMatrix<f64>) -> usize {
    let n = m.nrows();
    let mut seen = vec![false; n];
    let mut count = 0;
    for s in 0..n {
        if seen[s] {
            continue;
        }
        count += 1;
        seen[s] = true;
        let mut stack = vec![s];
        while let Some(u) = stack.pop() {
            for v in 0..n {
                if !seen[v] && (m[(u, v)] != 0.0 || m[(v, u)] != 0.0) {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
    }
    count
}

/// True when `m 1 = 0` to working precision.
pub(crate) fn annihilates_ones(m: &DMatrix<f64>) -> bool {
    let scale = crate::numlin::max_abs(m).max(f64::MIN_POSITIVE);
    (0..m.nrows()).all(|i| m.row(i).sum().abs() <= 1e-9 * scale)
}

/// Bottom eigenvectors `2..p+1` of a symmetric matrix, skipping the constant one.
///
/// When the constant vector is an exact null vector it is deflated before the
/// eigen-solve, so the returned columns are orthogonal to it to rounding error
/// even when the next eigenvalues are tiny.
pub fn embed_matrix(m: &DMatrix<f64>, p: usize) -> Result<EmbeddingMatrix> {
    let n = m.nrows();
    check_p(p, n)?;
    let comps = pattern_components(m);
    if comps > 1 {
        log::warn!("weight graph has {comps} components; the embedding matrix has several near-zero eigenvalues");
    }
    if annihilates_ones(m) {
        let e = crate::numlin::sym_eigen_deflated(m, &DVector::from_element(n, 1.0))?;
        Ok(take_columns(&e, 0, p))
    } else {
        let e = sym_eigen(m)?;
        Ok(take_columns(&e, 1, p))
    }
}

pub fn embed(m: &GramLaplacian, p: usize) -> Result<EmbeddingMatrix> {
    embed_matrix(&m.m, p)
}

/// LLE on a given neighbor graph.
pub fn lle_with_graph(x: &DataMatrix, graph: NeighborGraph, p: usize, eps_scale: f64) -> Result<LleFit> {
    check_p(p, x.len())?;
    let weights = reconstruction_weights(x, &graph, eps_scale)?;
    let w = scatter_weights(&weights, &graph)?;
    let m = embedding_matrix(&w);
    let embedding = embed(&m, p)?;
    Ok(LleFit { graph, weights, w, m, embedding })
}

/// LLE with neighbors taken from an arbitrary distance matrix; weights use raw coordinates.
pub fn lle_with_distances(x: &DataMatrix, d: &DistanceMatrix, k: usize, p: usize, eps_scale: f64) -> Result<LleFit> {
    if d.len() != x.len() {
        return shape(format!("distance matrix over {} points, data has {}", d.len(), x.len()));
    }
    check_p(p, x.len())?;
    lle_with_graph(x, knn_graph(d, k)?, p, eps_scale)
}

pub fn lle_fit(x: &DataMatrix, k: usize, p: usize, eps_scale: f64) -> Result<LleFit> {
    lle_with_distances(x, &pairwise_euclidean(x), k, p, eps_scale)
}

pub fn lle(x: &DataMatrix, k: usize, p: usize, eps_scale: f64) -> Result<EmbeddingMatrix> {
    Ok(lle_fit(x, k, p, eps_scale)?.embedding)
}

/// Total reconstruction error `sum_i ||x_i - sum_j w_ij x_j||^2`.
pub fn reconstruction_error(x: &DataMatrix, w: &WeightMatrix) -> f64 {
    (0..x.len())
        .map(|i| {
            let mut r = x.point(i).into_owned();
            for &(j, wij) in w.row(i) {
                r -= x.point(j) * wij;
            }
            r.norm_squared()
        })
        .sum()
}

/// Map an embedding-space point back to input space with weights found in the embedding.
pub fn inverse_lle(y_new: &DVector<f64>, y: &DMatrix<f64>, x: &DataMatrix, k: usize, eps_scale: f64) -> Result<DVector<f64>> {
    if y.nrows() != x.len() {
        return shape(format!("embedding has {} rows, data {} points", y.nrows(), x.len()));
    }
    if y_new.len() != y.ncols() {
        return shape(format!("query has dimension {}, embedding {}", y_new.len(), y.ncols()));
    }
    let yt = y.transpose();
    let nbrs = knn_query(&yt, y_new.column(0), k)?;
    let mut g = raw_local_gram(y_new.column(0), &yt.select_columns(&nbrs));
    regularize_gram(&mut g, eps_scale, Some(y.ncols()))?;
    let w = barycentric(&g)?;
    let mut out = DVector::zeros(x.dim());
    for (c, &j) in nbrs.iter().enumerate() {
        out += x.point(j) * w[c];
    }
    Ok(out)
}

/// Elementwise mean of weight matrices built from several feature sets.
pub fn fuse_feature_weights(list: &[WeightMatrix]) -> Result<WeightMatrix> {
    let Some(first) = list.first() else {
        return invalid("no weight matrices to fuse");
    };
    let n = first.n();
    if let Some(w) = list.iter().find(|w| w.n() != n) {
        return shape(format!("cannot fuse weight matrices over {n} and {} points", w.n()));
    }
    let q = list.len() as f64;
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let mut acc: Vec<(usize, f64)> = Vec::new();
        for w in list {
            for &(j, v) in w.row(i) {
                match acc.iter_mut().find(|e| e.0 == j) {
                    Some(e) => e.1 += v,
                    None => acc.push((j, v)),
                }
            }
        }
        acc.sort_by_key(|e| e.0);
        rows.push(acc.into_iter().map(|(j, v)| (j, v / q)).collect());
    }
    WeightMatrix::from_rows(n, rows)
}
