//! Outlier-robust LLE: reliability weights by iteratively reweighted local PCA,
//! and penalized reconstruction weights (ℓ2 and elastic net).

use nalgebra::{DMatrix, DVector};

use crate::dataset::DataMatrix;
use crate::error::{invalid, shape, LleError, Result};
use crate::lle_core::{
    embed, embedding_matrix_weighted, raw_local_gram, reconstruction_weights, scatter_weights, EmbeddingMatrix, GramLaplacian,
    ReconstructionWeights, WeightMatrix,
};
use crate::neighbors::{knn_graph, pairwise_euclidean, NeighborGraph};
use crate::numlin::{lambda_max, solve_spd, sym_eigen};

/// Per-point IRLS output.
#[derive(Debug, Clone)]
pub struct ReliabilityWeights {
    /// `a_ij` in the order of each neighbor list.
    pub a: Vec<DVector<f64>>,
    /// `s_i = mean_j a_ij`.
    pub s: Vec<f64>,
    pub b: Vec<DVector<f64>>,
    pub u: Vec<DMatrix<f64>>,
    /// Iterations used by the slowest point.
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IrlsSettings {
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for IrlsSettings {
    fn default() -> Self {
        Self { max_iters: 50, tol: 1e-6 }
    }
}

/// Huber-style reliability: 1 up to the threshold, `c / e` above it.
pub fn huber_reliability(e: f64, c: f64) -> f64 {
    if e <= c {
        1.0
    } else {
        c / e
    }
}

struct LocalFit {
    a: DVector<f64>,
    b: DVector<f64>,
    u: DMatrix<f64>,
    iterations: usize,
}

fn local_irls(nb: &DMatrix<f64>, p: usize, settings: IrlsSettings) -> Result<LocalFit> {
    let (d, k) = nb.shape();
    let mut a = DVector::from_element(k, 1.0);
    let mut b = DVector::zeros(d);
    let mut u = DMatrix::zeros(d, p.min(d));
    let mut iterations = 0;
    while iterations < settings.max_iters {
        iterations += 1;
        b = nb * &a / a.sum();
        let mut s = DMatrix::zeros(d, d);
        for j in 0..k {
            let z = nb.column(j) - &b;
            s += &z * z.transpose() * a[j];
        }
        s /= k as f64;
        let e = sym_eigen(&s)?;
        let q = p.min(d);
        u = e.vectors.columns(d - q, q).into_owned();
        let spread = (0..k).map(|j| (nb.column(j) - &b).norm_squared()).sum::<f64>() / k as f64;
        let floor = 1e-20 * spread;
        let resid: Vec<f64> = (0..k)
            .map(|j| {
                let z = nb.column(j) - &b;
                let e = (&z - &u * (u.transpose() * &z)).norm_squared();
                if e <= floor {
                    0.0
                } else {
                    e
                }
            })
            .collect();
        let c = resid.iter().sum::<f64>() / k as f64;
        let next = DVector::from_iterator(k, resid.iter().map(|&e| huber_reliability(e, c)));
        let change = (&next - &a).amax();
        a = next;
        if change < settings.tol {
            break;
        }
    }
    Ok(LocalFit { a, b, u, iterations })
}

/// Reliability of every neighbor of every point.
pub fn rlle_reliability(x: &DataMatrix, g: &NeighborGraph, p: usize, settings: IrlsSettings) -> Result<ReliabilityWeights> {
    if g.len() != x.len() {
        return shape(format!("graph over {} points, data has {}", g.len(), x.len()));
    }
    if settings.max_iters == 0 {
        return invalid("IRLS needs at least one iteration");
    }
    let mut out = ReliabilityWeights { a: Vec::new(), s: Vec::new(), b: Vec::new(), u: Vec::new(), iterations: 0 };
    for i in 0..x.len() {
        let nb = g.neighbors(i);
        if nb.len() < p {
            return invalid(format!("point {i} has {} neighbors, fewer than p = {p}", nb.len()));
        }
        let fit = local_irls(&x.matrix().select_columns(nb), p, settings)?;
        out.s.push(fit.a.mean());
        out.iterations = out.iterations.max(fit.iterations);
        out.a.push(fit.a);
        out.b.push(fit.b);
        out.u.push(fit.u);
    }
    Ok(out)
}

/// Bottom eigenvectors of `(I - W)^T diag(s) (I - W)`.
pub fn rlle_embed(w: &WeightMatrix, s: &[f64], p: usize) -> Result<EmbeddingMatrix> {
    if let Some(i) = s.iter().position(|&v| !(v > 0.0)) {
        return invalid(format!("reliability of point {i} must be positive, got {}", s[i]));
    }
    embed(&embedding_matrix_weighted(w, s)?, p)
}

#[derive(Debug, Clone)]
pub struct RlleFit {
    pub graph: NeighborGraph,
    pub reliability: ReliabilityWeights,
    pub w: WeightMatrix,
    pub m: GramLaplacian,
    pub embedding: EmbeddingMatrix,
}

/// kNN, plain weights, IRLS reliabilities, reliability-weighted embedding.
pub fn rlle(x: &DataMatrix, k: usize, p: usize, eps_scale: f64, settings: IrlsSettings) -> Result<RlleFit> {
    let graph = knn_graph(&pairwise_euclidean(x), k)?;
    let reliability = rlle_reliability(x, &graph, p, settings)?;
    let w = scatter_weights(&reconstruction_weights(x, &graph, eps_scale)?, &graph)?;
    let m = embedding_matrix_weighted(&w, &reliability.s)?;
    let embedding = embed(&m, p)?;
    Ok(RlleFit { graph, reliability, w, m, embedding })
}

fn normalized_solve(a: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    let v = solve_spd(a, rhs)?;
    let s = v.sum();
    if s.abs() < 1e-300 || !s.is_finite() {
        return Err(LleError::Degenerate("weights cannot be normalized to sum to one".into()));
    }
    Ok(v / s)
}

/// `(G + gamma I)^-1 1 / (1^T (G + gamma I)^-1 1)`.
pub fn rlle_l2_weights(g: &DMatrix<f64>, gamma: f64) -> Result<DVector<f64>> {
    if !(gamma > 0.0) {
        return invalid(format!("l2 penalty gamma must be positive, got {gamma}"));
    }
    let k = g.nrows();
    normalized_solve(&(g + DMatrix::identity(k, k) * gamma), &DVector::from_element(k, 1.0))
}

fn local_grams(x: &DataMatrix, g: &NeighborGraph) -> Result<Vec<DMatrix<f64>>> {
    if g.len() != x.len() {
        return shape(format!("graph over {} points, data has {}", g.len(), x.len()));
    }
    Ok((0..x.len()).map(|i| raw_local_gram(x.point(i), &x.matrix().select_columns(g.neighbors(i)))).collect())
}

pub fn rlle_l2_weight_rows(x: &DataMatrix, g: &NeighborGraph, gamma: f64) -> Result<ReconstructionWeights> {
    let rows = local_grams(x, g)?.iter().map(|gi| rlle_l2_weights(gi, gamma)).collect::<Result<Vec<_>>>()?;
    Ok(ReconstructionWeights { rows })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElasticNetSettings {
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for ElasticNetSettings {
    fn default() -> Self {
        Self { max_iters: 5000, tol: 1e-8 }
    }
}

/// `w^T G w + gamma (alpha ||w||_2^2 + (1 - alpha) ||w||_1)`.
pub fn elastic_net_objective(g: &DMatrix<f64>, w: &DVector<f64>, gamma: f64, alpha: f64) -> f64 {
    w.dot(&(g * w)) + gamma * (alpha * w.norm_squared() + (1.0 - alpha) * w.lp_norm(1))
}

/// Euclidean projection onto `{v >= 0, a^T v = 1}` with `a = (1_k, -1_k)`.
fn project_split(v: &DVector<f64>, k: usize) -> DVector<f64> {
    let at = |theta: f64| {
        let mut s = 0.0;
        for j in 0..2 * k {
            let sign = if j < k { 1.0 } else { -1.0 };
            s += sign * (v[j] - theta * sign).max(0.0);
        }
        s
    };
    let (mut lo, mut hi) = (-1.0, 1.0);
    while at(lo) < 1.0 {
        lo *= 2.0;
    }
    while at(hi) > 1.0 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if at(mid) > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * (1.0 + mid.abs()) {
            break;
        }
    }
    let theta = 0.5 * (lo + hi);
    DVector::from_fn(2 * k, |j, _| {
        let sign = if j < k { 1.0 } else { -1.0 };
        (v[j] - theta * sign).max(0.0)
    })
}

/// Minimizer on a fixed sign pattern, or `None` when the system is singular.
fn solve_on_pattern(g: &DMatrix<f64>, sign: &[f64], gamma: f64, alpha: f64) -> Option<DVector<f64>> {
    let support: Vec<usize> = (0..sign.len()).filter(|&j| sign[j] != 0.0).collect();
    let m = support.len();
    if m == 0 {
        return None;
    }
    let s = DVector::from_iterator(m, support.iter().map(|&j| sign[j]));
    let mut a = g.select_rows(&support).select_columns(&support);
    for j in 0..m {
        a[(j, j)] += gamma * alpha;
    }
    let chol = a.cholesky()?;
    let p = chol.solve(&DVector::from_element(m, 1.0));
    let q = chol.solve(&(s * (gamma * (1.0 - alpha))));
    let denom = p.sum();
    if denom.abs() < 1e-300 {
        return None;
    }
    // w_S = (lambda p - q) / 2 with 1^T w_S = 1
    let lambda = (2.0 + q.sum()) / denom;
    let ws = (p * lambda - q) / 2.0;
    let mut out = DVector::zeros(sign.len());
    for (c, &j) in support.iter().enumerate() {
        out[j] = ws[c];
    }
    Some(out)
}

/// Active-set refinement from an approximate solution: drop entries whose sign
/// flips, add the worst optimality violator, stop at a KKT point.
fn polish(g: &DMatrix<f64>, w0: &DVector<f64>, gamma: f64, alpha: f64) -> Option<DVector<f64>> {
    let k = w0.len();
    let scale = w0.amax().max(1e-300);
    let mut sign: Vec<f64> = w0.iter().map(|&v| if v.abs() > 1e-9 * scale { v.signum() } else { 0.0 }).collect();
    let l1 = gamma * (1.0 - alpha);
    let mut h = g.clone();
    for j in 0..k {
        h[(j, j)] += gamma * alpha;
    }
    for _ in 0..4 * k + 10 {
        let w = solve_on_pattern(g, &sign, gamma, alpha)?;
        let flipped: Vec<usize> = (0..k).filter(|&j| sign[j] != 0.0 && w[j] * sign[j] < 0.0).collect();
        if !flipped.is_empty() {
            for j in flipped {
                sign[j] = 0.0;
            }
            continue;
        }
        let grad = &h * &w * 2.0;
        let active: Vec<usize> = (0..k).filter(|&j| sign[j] != 0.0).collect();
        let lambda = active.iter().map(|&j| grad[j] + l1 * sign[j]).sum::<f64>() / active.len() as f64;
        let tol = 1e-12 * (1.0 + grad.amax() + lambda.abs());
        let worst = (0..k)
            .filter(|&j| sign[j] == 0.0)
            .map(|j| (j, (grad[j] - lambda).abs() - l1))
            .filter(|e| e.1 > tol)
            .max_by(|a, b| a.1.total_cmp(&b.1));
        match worst {
            None => return Some(w),
            Some((j, _)) => sign[j] = -(grad[j] - lambda).signum(),
        }
    }
    None
}

/// Elastic-net reconstruction weights on the split variables `w* = (w+, w-)`.
///
/// Accelerated projected gradient with an exact projection onto the feasible set,
/// followed by an exact solve on the detected sign pattern.
pub fn rlle_elastic_net_weights(g: &DMatrix<f64>, gamma: f64, alpha: f64, settings: ElasticNetSettings) -> Result<DVector<f64>> {
    let k = g.nrows();
    if !g.is_square() || k == 0 {
        return shape("local Gram must be square and nonempty");
    }
    if !(gamma >= 0.0) || !(0.0..=1.0).contains(&alpha) {
        return invalid(format!("need gamma >= 0 and alpha in [0, 1], got gamma = {gamma}, alpha = {alpha}"));
    }
    let mut q = DMatrix::zeros(2 * k, 2 * k);
    q.view_mut((0, 0), (k, k)).copy_from(g);
    q.view_mut((k, k), (k, k)).copy_from(g);
    q.view_mut((0, k), (k, k)).copy_from(&(-g));
    q.view_mut((k, 0), (k, k)).copy_from(&(-g));
    for j in 0..2 * k {
        q[(j, j)] += gamma * alpha;
    }
    let lin = DVector::from_element(2 * k, gamma * (1.0 - alpha));
    let obj = |v: &DVector<f64>| v.dot(&(&q * v)) + lin.dot(v);
    let lip = 2.0 * lambda_max(&q)?.max(1e-300);
    let step = 1.0 / lip;

    let mut v = DVector::zeros(2 * k);
    v[0] = 1.0;
    let mut best = v.clone();
    let mut best_obj = obj(&v);
    let mut z = v.clone();
    let mut t = 1.0f64;
    for _ in 0..settings.max_iters {
        let grad = (&q * &z) * 2.0 + &lin;
        let next = project_split(&(&z - grad * step), k);
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let moved = (&next - &v).amax();
        z = &next + (&next - &v) * ((t - 1.0) / t_next);
        v = next;
        t = t_next;
        let o = obj(&v);
        if o < best_obj {
            best_obj = o;
            best = v.clone();
        }
        if moved < settings.tol {
            break;
        }
    }
    if !best.iter().all(|x| x.is_finite()) {
        return Err(LleError::Solver("elastic-net solver produced non-finite weights".into()));
    }
    let w = best.rows(0, k) - best.rows(k, k);
    let base = elastic_net_objective(g, &w, gamma, alpha);
    Ok(match polish(g, &w, gamma, alpha) {
        Some(p) if elastic_net_objective(g, &p, gamma, alpha) <= base => p,
        _ => w,
    })
}

pub fn rlle_elastic_net_weight_rows(x: &DataMatrix, g: &NeighborGraph, gamma: f64, alpha: f64, settings: ElasticNetSettings) -> Result<ReconstructionWeights> {
    let rows = local_grams(x, g)?
        .iter()
        .map(|gi| rlle_elastic_net_weights(gi, gamma, alpha, settings))
        .collect::<Result<Vec<_>>>()?;
    Ok(ReconstructionWeights { rows })
}
