//! Streaming and large-n variants: incremental refinement of an existing
//! embedding, Nyström landmark embedding and locally linear landmarks.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::{DataMatrix, StreamBatch};
use crate::error::{invalid, shape, LleError, Result};
use crate::kernel_lle::{lle_kernel_view, KernelView};
use crate::lle_core::{
    barycentric, check_p, embedding_matrix, lle_fit, local_gram, raw_local_gram, regularize_gram, scatter_weights,
    EmbeddingMatrix, GramLaplacian, ReconstructionWeights, ScaleConvention,
};
use crate::neighbors::{knn_graph, pairwise_euclidean, NeighborGraph};
use crate::numlin::{fix_sign, generalized_sym_eigen_deflated, sym_eigen};
use crate::oos::{oos_reconstruct, TrainedModel};

/// Settings of the projected gradient refinement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerSettings {
    /// Fixed step of plain projected gradient; `None` uses the preconditioned line search.
    pub step: Option<f64>,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        Self { step: None, max_iter: 500, tol: 1e-10 }
    }
}

/// Objective values of the last refinement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateReport {
    pub initial_objective: f64,
    pub final_objective: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone)]
pub struct IncrementalState {
    pub x: DataMatrix,
    /// `n x p`, `(1/n) Y^T Y = I`.
    pub y: DMatrix<f64>,
    /// Retained eigenvalues of `M`, kept fixed across updates.
    pub lambda: Vec<f64>,
    pub m: GramLaplacian,
    pub graph: NeighborGraph,
    pub weights: ReconstructionWeights,
    pub k: usize,
    pub p: usize,
    pub eps_scale: f64,
    pub settings: OptimizerSettings,
    pub report: Option<UpdateReport>,
}

impl IncrementalState {
    pub fn fit(x: DataMatrix, k: usize, p: usize, eps_scale: f64, settings: OptimizerSettings) -> Result<Self> {
        let fit = lle_fit(&x, k, p, eps_scale)?;
        Ok(Self {
            x,
            y: fit.embedding.y,
            lambda: fit.embedding.eigenvalues,
            m: fit.m,
            graph: fit.graph,
            weights: fit.weights,
            k,
            p,
            eps_scale,
            settings,
            report: None,
        })
    }

    /// `||Z^T M Z - diag(lambda)||_F^2` with `Z = Y / sqrt(n)`.
    pub fn objective(&self) -> f64 {
        let z = &self.y / (self.y.nrows() as f64).sqrt();
        objective(&self.m.m, &z, &self.lambda)
    }
}

fn objective(m: &DMatrix<f64>, z: &DMatrix<f64>, lambda: &[f64]) -> f64 {
    residual(m, z, lambda).norm_squared()
}

fn residual(m: &DMatrix<f64>, z: &DMatrix<f64>, lambda: &[f64]) -> DMatrix<f64> {
    let q = z.transpose() * m * z;
    let mut s = (&q + q.transpose()) * 0.5;
    for (r, l) in lambda.iter().enumerate() {
        s[(r, r)] -= l;
    }
    s
}

/// Remove column means, then map to the nearest matrix with orthonormal columns.
fn project(z: &mut DMatrix<f64>) -> Result<()> {
    let n = z.nrows() as f64;
    for mut c in z.column_iter_mut() {
        let mean = c.sum() / n;
        c.add_scalar_mut(-mean);
    }
    // a second pass restores orthonormality lost to an ill-conditioned first Gram
    for _ in 0..2 {
        let e = sym_eigen(&(z.transpose() * &*z))?;
        if e.values[0] <= 1e-14 * e.values[e.values.len() - 1].max(f64::MIN_POSITIVE) {
            return Err(LleError::Solver("embedding columns became linearly dependent".into()));
        }
        let inv_sqrt = DMatrix::from_diagonal(&e.values.map(|v| 1.0 / v.sqrt()));
        *z = &*z * (&e.vectors * inv_sqrt * e.vectors.transpose());
    }
    Ok(())
}

/// Append a batch: rebuild `M` over all points and refine the embedding.
pub fn incremental_update(state: &IncrementalState, batch: &StreamBatch) -> Result<IncrementalState> {
    if batch.is_empty() {
        return Ok(state.clone());
    }
    if batch.points.nrows() != state.x.dim() {
        return shape(format!("batch has dimension {}, state {}", batch.points.nrows(), state.x.dim()));
    }
    let n_old = state.x.len();
    let xt = DataMatrix::new(batch.points.clone())?;
    let x = state.x.concat(&xt)?;
    let n = x.len();
    let d = pairwise_euclidean(&x);
    let fresh = knn_graph(&d, state.k)?;

    let mut lists = Vec::with_capacity(n);
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let keep = i < n_old && {
            let old = state.graph.neighbors(i);
            let kth = d.get(i, old[old.len() - 1]);
            (n_old..n).all(|t| !(d.get(i, t) < kth))
        };
        if keep {
            lists.push(state.graph.neighbors(i).to_vec());
            rows.push(state.weights.rows[i].clone());
        } else {
            let nb = fresh.neighbors(i).to_vec();
            let g = local_gram(x.point(i), &x.matrix().select_columns(&nb), state.eps_scale)?;
            rows.push(barycentric(&g)?);
            lists.push(nb);
        }
    }
    let graph = NeighborGraph::from_lists(lists)?;
    let weights = ReconstructionWeights { rows };
    let m = embedding_matrix(&scatter_weights(&weights, &graph)?);

    let old_model = TrainedModel {
        x: state.x.clone(),
        fit: crate::lle_core::LleFit {
            graph: state.graph.clone(),
            weights: state.weights.clone(),
            w: scatter_weights(&state.weights, &state.graph)?,
            m: state.m.clone(),
            embedding: EmbeddingMatrix {
                y: state.y.clone(),
                eigenvalues: state.lambda.clone(),
                scale: ScaleConvention::UnitCovariance,
            },
        },
        k: state.k,
        eps_scale: state.eps_scale,
        kernel: None,
    };
    let yt = oos_reconstruct(&old_model, &xt)?.y;
    let mut z = DMatrix::zeros(n, state.p);
    z.view_mut((0, 0), (n_old, state.p)).copy_from(&state.y);
    z.view_mut((n_old, 0), (n - n_old, state.p)).copy_from(&yt);
    project(&mut z)?;

    let (z, report) = refine(&m.m, z, &state.lambda, &state.settings)?;
    Ok(IncrementalState {
        x,
        y: z * (n as f64).sqrt(),
        lambda: state.lambda.clone(),
        m,
        graph,
        weights,
        k: state.k,
        p: state.p,
        eps_scale: state.eps_scale,
        settings: state.settings,
        report: Some(report),
    })
}

/// Projected gradient descent on `||Z^T M Z - Lambda||_F^2` over orthonormal, zero-mean `Z`.
///
/// With no fixed step the gradient `4 M Z S` is preconditioned by `(M + s I)^-1`
/// and the step found by backtracking; the bottom eigenvalues of `M` are many
/// orders of magnitude below its norm, which stalls the unpreconditioned
/// iteration. Returns the best iterate seen, so the result never has a larger
/// objective than `z`.
fn refine(m: &DMatrix<f64>, mut z: DMatrix<f64>, lambda: &[f64], s: &OptimizerSettings) -> Result<(DMatrix<f64>, UpdateReport)> {
    let f0 = objective(m, &z, lambda);
    let fixed = match s.step {
        Some(h) if h > 0.0 && h.is_finite() => Some(h),
        Some(h) => return invalid(format!("optimizer step must be positive, got {h}")),
        None => None,
    };
    let n = m.nrows();
    let shift = 1e-12 * m.diagonal().amax().max(f64::MIN_POSITIVE);
    let chol = match fixed {
        Some(_) => None,
        None => Some(
            (m + DMatrix::identity(n, n) * shift)
                .cholesky()
                .ok_or_else(|| LleError::Singular("shifted embedding matrix is not positive definite".into()))?,
        ),
    };
    let (mut best, mut best_f) = (z.clone(), f0);
    let (mut prev, mut rises, mut iters) = (f0, 0usize, 0usize);
    for it in 0..s.max_iter {
        let r = residual(m, &z, lambda);
        let g = 4.0 * (m * &z) * &r;
        let scale = m.norm() * r.norm().max(f64::MIN_POSITIVE);
        if g.norm() <= s.tol * scale {
            break;
        }
        iters = it + 1;
        let f = match (&chol, fixed) {
            (_, Some(h)) => {
                z -= g * h;
                project(&mut z)?;
                objective(m, &z, lambda)
            }
            (Some(c), None) => {
                // right scaling by |S|^-1 turns a unit step into an inverse-iteration step
                let e = sym_eigen(&r)?;
                let tmax = e.values.amax();
                let sabs = DMatrix::from_diagonal(&e.values.map(|t| if t.abs() > 1e-14 * tmax { 1.0 / t.abs() } else { 0.0 }));
                let dir = c.solve(&g) * (&e.vectors * sabs * e.vectors.transpose()) * 0.25;
                let mut h = 1.0;
                let mut accepted = None;
                for _ in 0..60 {
                    let mut trial = &z - &dir * h;
                    project(&mut trial)?;
                    let ft = objective(m, &trial, lambda);
                    if ft < prev {
                        accepted = Some((trial, ft));
                        break;
                    }
                    h *= 0.5;
                }
                match accepted {
                    Some((t, ft)) => {
                        z = t;
                        ft
                    }
                    None => break,
                }
            }
            (None, None) => unreachable!(),
        };
        if !f.is_finite() {
            return Err(LleError::Solver(format!("incremental objective became {f} after {iters} steps")));
        }
        if f < best_f {
            best_f = f;
            best.copy_from(&z);
        }
        if f > prev {
            rises += 1;
            if rises >= 10 {
                return Err(LleError::Solver(format!(
                    "incremental optimizer diverged: objective rose for 10 steps, {f0:e} -> {f:e}; pass a smaller step"
                )));
            }
        } else {
            rises = 0;
        }
        prev = f;
    }
    Ok((best, UpdateReport { initial_objective: f0, final_objective: best_f, iterations: iters }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LandmarkStrategy {
    UniformRandom(u64),
    Stride,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LandmarkSet {
    pub indices: Vec<usize>,
}

impl LandmarkSet {
    pub fn new(indices: Vec<usize>, n: usize) -> Result<Self> {
        let mut seen = vec![false; n];
        for &i in &indices {
            if i >= n {
                return invalid(format!("landmark {i} out of range for {n} points"));
            }
            if std::mem::replace(&mut seen[i], true) {
                return invalid(format!("landmark {i} listed twice"));
            }
        }
        if indices.is_empty() {
            return invalid("at least one landmark is needed");
        }
        Ok(Self { indices })
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

pub fn select_landmarks(n: usize, m: usize, strategy: LandmarkStrategy) -> Result<LandmarkSet> {
    if m == 0 || m > n {
        return invalid(format!("cannot pick {m} landmarks from {n} points"));
    }
    let indices = match strategy {
        LandmarkStrategy::Stride => (0..m).map(|i| i * n / m).collect(),
        LandmarkStrategy::UniformRandom(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut v = rand::seq::index::sample(&mut rng, n, m).into_vec();
            v.sort_unstable();
            v
        }
    };
    LandmarkSet::new(indices, n)
}

/// Nyström factor of the PSD matrix `[A B; B^T C]` from `A` and `B`.
///
/// Returns `n x p` rows `[Sigma^{1/2} U^T, Sigma^{-1/2} U^T B]^T` for the `p`
/// largest eigenvalues of `A`, landmarks first. Eigenvalues of `A` below
/// `1e-12 sigma_max` are dropped, which makes the completion a pseudo-inverse one.
pub fn nystrom_embed(a: &DMatrix<f64>, b: &DMatrix<f64>, p: usize) -> Result<EmbeddingMatrix> {
    let m = a.nrows();
    if !a.is_square() || b.nrows() != m {
        return shape(format!("landmark block {:?} and cross block {:?} disagree", a.shape(), b.shape()));
    }
    if p == 0 {
        return invalid("p must be at least 1");
    }
    let e = sym_eigen(a)?;
    let smax = e.values.iter().copied().fold(0.0, f64::max);
    let kept: Vec<usize> = (0..m).rev().filter(|&i| e.values[i] > 1e-12 * smax).collect();
    if kept.len() < p {
        return Err(LleError::Degenerate(format!(
            "landmark block has only {} usable eigenvalues for p = {p}; use more landmarks",
            kept.len()
        )));
    }
    let n = m + b.ncols();
    let mut y = DMatrix::zeros(n, p);
    let mut values = Vec::with_capacity(p);
    for (c, &i) in kept.iter().take(p).enumerate() {
        let s = e.values[i];
        let u = e.vectors.column(i);
        for r in 0..m {
            y[(r, c)] = s.sqrt() * u[r];
        }
        let ub = b.transpose() * u / s.sqrt();
        for r in 0..b.ncols() {
            y[(m + r, c)] = ub[r];
        }
        values.push(s);
    }
    Ok(EmbeddingMatrix { y, eigenvalues: values, scale: ScaleConvention::Native })
}

/// Completed block `B^T A^+ B` over the usable eigenpairs of `A`.
pub fn nystrom_complete(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let e = sym_eigen(a)?;
    let smax = e.values.iter().copied().fold(0.0, f64::max);
    let r = e.values.iter().filter(|v| **v > 1e-12 * smax).count();
    let f = nystrom_embed(a, b, r)?;
    let s = f.y.rows(a.nrows(), b.ncols());
    Ok(&s * s.transpose())
}

/// LLE through a Nyström factorization of the kernel `mu I - M`.
///
/// The top component of that kernel is the constant vector and is dropped.
pub fn nystrom_lle(x: &DataMatrix, k: usize, p: usize, landmarks: &LandmarkSet, mu: Option<f64>, eps_scale: f64) -> Result<EmbeddingMatrix> {
    let n = x.len();
    check_p(p, n)?;
    let m = landmarks.len();
    if m < p + 1 {
        return invalid(format!("{m} landmarks cannot carry p + 1 = {} components", p + 1));
    }
    let fit = lle_fit(x, k, p, eps_scale)?;
    let kern = lle_kernel_view(&fit.m.m, KernelView::MuShift(mu))?.k;
    let mut is_landmark = vec![false; n];
    for &i in &landmarks.indices {
        is_landmark[i] = true;
    }
    let rest: Vec<usize> = (0..n).filter(|&i| !is_landmark[i]).collect();
    let li = &landmarks.indices;
    let a = DMatrix::from_fn(m, m, |r, c| kern[(li[r], li[c])]);
    let b = DMatrix::from_fn(m, rest.len(), |r, c| kern[(li[r], rest[c])]);
    let f = nystrom_embed(&a, &b, p + 1)?;
    let mut y = DMatrix::zeros(n, p);
    for (row, &i) in li.iter().chain(rest.iter()).enumerate() {
        for c in 0..p {
            y[(i, c)] = f.y[(row, c + 1)];
        }
    }
    for c in 0..p {
        let mut col: Vec<f64> = y.column(c).iter().copied().collect();
        fix_sign(&mut col);
        y.set_column(c, &DVector::from_vec(col));
    }
    Ok(EmbeddingMatrix { y, eigenvalues: f.eigenvalues[1..].to_vec(), scale: ScaleConvention::Native })
}

/// Locally linear landmarks: `n x m` projection `U` with rows summing to one.
///
/// A point that coincides with a landmark is represented by that landmark alone.
pub fn landmark_projection(x: &DataMatrix, landmarks: &LandmarkSet, eps_scale: f64) -> Result<DMatrix<f64>> {
    let n = x.len();
    let m = landmarks.len();
    let xl = x.matrix().select_columns(&landmarks.indices);
    let mut u = DMatrix::zeros(n, m);
    for i in 0..n {
        let xi = x.point(i);
        if let Some(l) = (0..m).find(|&l| xl.column(l) == xi) {
            u[(i, l)] = 1.0;
            continue;
        }
        let mut g = raw_local_gram(xi, &xl);
        regularize_gram(&mut g, eps_scale, Some(x.dim()))?;
        let w = barycentric(&g)
            .map_err(|_| LleError::Degenerate(format!("landmark Gram of point {i} is singular; use eps_scale > 0")))?;
        u.row_mut(i).copy_from(&w.transpose());
    }
    Ok(u)
}

/// LLL embedding of all points plus the landmark coordinates `Y~` with `Y = U Y~`.
///
/// Solves `U^T M U v = lambda U^T U v` away from the constant, which keeps
/// `(1/n) Y^T Y = I` and `Y^T 1 = 0`.
pub fn lll_embed(x: &DataMatrix, k: usize, p: usize, landmarks: &LandmarkSet, eps_scale: f64) -> Result<(EmbeddingMatrix, DMatrix<f64>)> {
    let n = x.len();
    check_p(p, n)?;
    let m = landmarks.len();
    if m < p + 2 {
        return invalid(format!("{m} landmarks leave no room for p = {p} components; need at least p + 2"));
    }
    let fit = lle_fit(x, k, p, eps_scale)?;
    let u = landmark_projection(x, landmarks, eps_scale)?;
    let mu = u.transpose() * &fit.m.m * &u;
    let bu = u.transpose() * &u;
    let e = generalized_sym_eigen_deflated(&mu, &bu, &DVector::from_element(m, 1.0))?;
    let scale = (n as f64).sqrt();
    let yl = e.vectors.columns(0, p) * scale;
    let y = &u * &yl;
    let embedding = EmbeddingMatrix {
        y,
        eigenvalues: e.values.iter().take(p).copied().collect(),
        scale: ScaleConvention::UnitCovariance,
    };
    Ok((embedding, yl))
}
