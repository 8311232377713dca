//! Out-of-sample embedding of unseen points into a trained LLE embedding:
//! linear reconstruction, eigenfunctions of the LLE kernel, and a normalized
//! gaussian kernel mapping.

use nalgebra::{DMatrix, DVector};

use crate::dataset::DataMatrix;
use crate::error::{invalid, shape, LleError, Result};
use crate::kernel_lle::{kernel_lle_fit, median_heuristic_sigma, KernelDescriptor};
use crate::lle_core::{barycentric, lle_fit, raw_local_gram, regularize_gram, LleFit, WeightMatrix};
use crate::neighbors::{knn_query, pairwise_euclidean};
use crate::numlin::{pseudo_inverse, PINV_TOL};

/// Training-phase artifacts needed to place new points.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub x: DataMatrix,
    pub fit: LleFit,
    pub k: usize,
    pub eps_scale: f64,
    /// Resolved kernel for kernel LLE models.
    pub kernel: Option<KernelDescriptor>,
}

impl TrainedModel {
    pub fn train(x: DataMatrix, k: usize, p: usize, eps_scale: f64) -> Result<Self> {
        let fit = lle_fit(&x, k, p, eps_scale)?;
        Ok(Self { x, fit, k, eps_scale, kernel: None })
    }

    pub fn train_kernel(x: DataMatrix, desc: KernelDescriptor, k: usize, p: usize, eps_scale: f64) -> Result<Self> {
        let desc = match desc {
            KernelDescriptor::Gaussian { sigma: None } => KernelDescriptor::Gaussian { sigma: Some(median_heuristic_sigma(&x)?) },
            KernelDescriptor::DeltaLabel => return invalid("label kernels cannot embed unlabeled test points"),
            d => d,
        };
        let fit = kernel_lle_fit(&x, desc, None, k, p, eps_scale)?;
        Ok(Self { x, fit, k, eps_scale, kernel: Some(desc) })
    }

    pub fn y(&self) -> &DMatrix<f64> {
        &self.fit.embedding.y
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.fit.embedding.eigenvalues
    }

    pub fn w(&self) -> &WeightMatrix {
        &self.fit.w
    }

    pub fn p(&self) -> usize {
        self.y().ncols()
    }
}

/// `n_t x p` coordinates of the test points.
#[derive(Debug, Clone)]
pub struct OosResult {
    pub y: DMatrix<f64>,
}

fn check_test(model: &TrainedModel, xt: &DataMatrix) -> Result<()> {
    if xt.dim() != model.x.dim() {
        return shape(format!("test points have dimension {}, training data {}", xt.dim(), model.x.dim()));
    }
    if model.k > model.x.len() {
        return invalid(format!("k = {} exceeds the {} training points", model.k, model.x.len()));
    }
    Ok(())
}

/// Barycentric weights of each test point over its `k` nearest training points.
pub fn oos_weights(model: &TrainedModel, xt: &DataMatrix) -> Result<Vec<Vec<(usize, f64)>>> {
    check_test(model, xt)?;
    let xm = model.x.matrix();
    (0..xt.len())
        .map(|t| {
            let q = xt.point(t);
            let nb = knn_query(xm, q, model.k)?;
            let mut g = match model.kernel {
                Some(KernelDescriptor::Gaussian { sigma: Some(s) }) => {
                    let c = |a: usize, b: usize| {
                        -(-(xm.column(a) - xm.column(b)).norm_squared() / (2.0 * s * s)).exp_m1()
                    };
                    let ct: Vec<f64> = nb
                        .iter()
                        .map(|&j| -(-(xm.column(j) - q).norm_squared() / (2.0 * s * s)).exp_m1())
                        .collect();
                    DMatrix::from_fn(nb.len(), nb.len(), |a, b| ct[a] + ct[b] - c(nb[a], nb[b]))
                }
                _ => raw_local_gram(q, &xm.select_columns(&nb)),
            };
            let fd = match model.kernel {
                None | Some(KernelDescriptor::Linear) => Some(xt.dim()),
                _ => None,
            };
            regularize_gram(&mut g, model.eps_scale, fd)?;
            let w = barycentric(&g)
                .map_err(|_| LleError::Degenerate(format!("local Gram of test point {t} is singular; use eps_scale > 0")))?;
            Ok(nb.into_iter().zip(w.iter().copied()).collect())
        })
        .collect()
}

/// `y_t = sum_j w_tj y_j` with weights found in input space.
pub fn oos_reconstruct(model: &TrainedModel, xt: &DataMatrix) -> Result<OosResult> {
    let ws = oos_weights(model, xt)?;
    let y = model.y();
    let mut out = DMatrix::zeros(xt.len(), y.ncols());
    for (t, row) in ws.iter().enumerate() {
        for &(j, w) in row {
            for c in 0..y.ncols() {
                out[(t, c)] += w * y[(j, c)];
            }
        }
    }
    Ok(OosResult { y: out })
}

/// Centered cross kernel `K_t - (1/n) 1 1^T K_t - (1/n) K 1 1^T + (1/n^2) 1 1^T K 1 1^T`.
pub fn center_oos_kernel(k: &DMatrix<f64>, kt: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = k.nrows();
    if !k.is_square() || kt.nrows() != n {
        return shape(format!("training kernel {:?} and cross kernel {:?} disagree", k.shape(), kt.shape()));
    }
    let nf = n as f64;
    let col_means = DVector::from_fn(kt.ncols(), |t, _| kt.column(t).sum() / nf);
    let row_means = DVector::from_fn(n, |i, _| k.row(i).sum() / nf);
    let grand = k.sum() / (nf * nf);
    Ok(DMatrix::from_fn(n, kt.ncols(), |i, t| kt[(i, t)] - col_means[t] - row_means[i] + grand))
}

/// Eigenfunction extension with the LLE kernel `mu I - M`.
///
/// The soft similarity between a training point `j` and test point `t` uses the
/// test weights `a_j` in both directions, which gives
/// `K''(x_j, t) = 2 a_j - (W^T a)_j` and
/// `y_tr = ((mu + 1) a^T Y_r - a^T W Y_r) / sqrt(mu - lambda_r)`.
pub fn oos_eigenfunctions(model: &TrainedModel, xt: &DataMatrix, mu: f64) -> Result<OosResult> {
    if !mu.is_finite() {
        return invalid(format!("mu must be finite, got {mu}"));
    }
    let deltas: Vec<f64> = model.eigenvalues().iter().map(|l| mu - l).collect();
    if let Some((r, d)) = deltas.iter().enumerate().find(|(_, d)| **d <= 1e-12) {
        return Err(LleError::Degenerate(format!("kernel eigenvalue {d} of dimension {r} is unusable; raise mu")));
    }
    let ws = oos_weights(model, xt)?;
    let y = model.y();
    let wy = model.w().apply(y);
    let mut out = DMatrix::zeros(xt.len(), y.ncols());
    for (t, row) in ws.iter().enumerate() {
        for &(j, a) in row {
            for c in 0..y.ncols() {
                out[(t, c)] += a * ((mu + 1.0) * y[(j, c)] - wy[(j, c)]);
            }
        }
        for (c, d) in deltas.iter().enumerate() {
            out[(t, c)] /= d.sqrt();
        }
    }
    Ok(OosResult { y: out })
}

/// Kernel mapping fitted on the training embedding.
#[derive(Debug, Clone)]
pub struct KernelMap {
    pub x: DataMatrix,
    pub sigmas: Vec<f64>,
    /// `n x p` coefficients `A = K''^+ Y`.
    pub a: DMatrix<f64>,
}

/// Bandwidths `gamma * min_i ||x_j - x_i||` over points distinct from `x_j`.
///
/// A point with no distinct partner (a single point, or all copies) gets `gamma`.
pub fn kernel_map_bandwidths(x: &DataMatrix, gamma: f64) -> Vec<f64> {
    let d = pairwise_euclidean(x);
    (0..x.len())
        .map(|j| {
            let m = (0..x.len()).map(|i| d.get(i, j)).filter(|v| *v > 0.0).fold(f64::INFINITY, f64::min);
            gamma * if m.is_finite() { m } else { 1.0 }
        })
        .collect()
}

/// Row-normalized gaussian kernel between queries (columns) and training points.
pub fn normalized_kernel_rows(x: &DataMatrix, sigmas: &[f64], q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = x.len();
    let mut k = DMatrix::zeros(q.ncols(), n);
    for t in 0..q.ncols() {
        let mut s = 0.0;
        for j in 0..n {
            let v = (-(x.point(j) - q.column(t)).norm_squared() / (2.0 * sigmas[j] * sigmas[j])).exp();
            k[(t, j)] = v;
            s += v;
        }
        if s < 1e-300 {
            return Err(LleError::Degenerate(format!(
                "point {t} is isolated: its kernel row sums to {s:e}; increase gamma"
            )));
        }
        for j in 0..n {
            k[(t, j)] /= s;
        }
    }
    Ok(k)
}

pub fn fit_kernel_map(x: &DataMatrix, y: &DMatrix<f64>, gamma: f64) -> Result<KernelMap> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return invalid(format!("gamma must be positive, got {gamma}"));
    }
    if y.nrows() != x.len() {
        return shape(format!("embedding has {} rows, data {} points", y.nrows(), x.len()));
    }
    let sigmas = kernel_map_bandwidths(x, gamma);
    let k = normalized_kernel_rows(x, &sigmas, x.matrix())?;
    let a = pseudo_inverse(&k, PINV_TOL)? * y;
    Ok(KernelMap { x: x.clone(), sigmas, a })
}

impl KernelMap {
    pub fn apply(&self, xt: &DataMatrix) -> Result<OosResult> {
        if xt.dim() != self.x.dim() {
            return shape(format!("test points have dimension {}, training data {}", xt.dim(), self.x.dim()));
        }
        let kt = normalized_kernel_rows(&self.x, &self.sigmas, xt.matrix())?;
        Ok(OosResult { y: kt * &self.a })
    }
}

pub fn oos_kernel_mapping(model: &TrainedModel, xt: &DataMatrix, gamma: f64) -> Result<OosResult> {
    fit_kernel_map(&model.x, model.y(), gamma)?.apply(xt)
}
