//! Label-aware embeddings: distance modification (SLLE, ESLLE, semi-supervised),
//! linear projection of an embedding, probabilistic SLLE and label-guided LLE.

use nalgebra::{DMatrix, DVector};

use crate::dataset::DataMatrix;
use crate::error::{invalid, shape, LleError, Result};
use crate::kernel_lle::delta_kernel;
use crate::lle_core::{embed_matrix, lle_fit, lle_with_distances, EmbeddingMatrix, LleFit};
use crate::neighbors::{pairwise_euclidean, DistanceMatrix, NeighborGraph};
use crate::numlin::{centering_matrix, pseudo_inverse, solve_spd_matrix, sym_eigen, PINV_TOL};
use crate::oos::{oos_reconstruct, TrainedModel};

/// Which distance modification to apply; `alpha` lies in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DistanceModifier {
    Slle { alpha: f64 },
    Eslle { alpha: f64 },
    /// Unlabeled points allowed.
    Semi { alpha: f64 },
}

impl DistanceModifier {
    pub fn alpha(&self) -> f64 {
        match *self {
            Self::Slle { alpha } | Self::Eslle { alpha } | Self::Semi { alpha } => alpha,
        }
    }
}

/// Modified distances plus the number of negative entries clamped to zero.
#[derive(Debug, Clone)]
pub struct ModifiedDistance {
    pub d: DistanceMatrix,
    pub clamped: usize,
}

fn mean_off_diagonal(d: &DMatrix<f64>) -> f64 {
    let n = d.nrows();
    if n < 2 {
        return 0.0;
    }
    d.sum() / (n * (n - 1)) as f64
}

fn require_labels(labels: &[Option<usize>]) -> Result<()> {
    if let Some(i) = labels.iter().position(|l| l.is_none()) {
        return invalid(format!("point {i} is unlabeled; this mode needs every label"));
    }
    Ok(())
}

fn finish(mut out: DMatrix<f64>, what: &str) -> Result<ModifiedDistance> {
    let n = out.nrows();
    let mut clamped = 0;
    for j in 0..n {
        out[(j, j)] = 0.0;
        for i in 0..n {
            if out[(i, j)] < 0.0 {
                out[(i, j)] = 0.0;
                clamped += 1;
            }
        }
    }
    if let Some(v) = out.iter().find(|v| !v.is_finite()) {
        return Err(LleError::NonFinite(format!("{what} distance overflowed ({v}); rescale the data")));
    }
    if clamped > 0 {
        log::warn!("{what}: {clamped} negative modified distances clamped to 0");
    }
    Ok(ModifiedDistance { d: DistanceMatrix::new(out)?, clamped })
}

pub fn modified_distance(d: &DistanceMatrix, labels: &[Option<usize>], modifier: DistanceModifier) -> Result<ModifiedDistance> {
    let n = d.len();
    if labels.len() != n {
        return shape(format!("{} labels for {n} points", labels.len()));
    }
    let alpha = modifier.alpha();
    if !(0.0..=1.0).contains(&alpha) {
        return invalid(format!("alpha must lie in [0, 1], got {alpha}"));
    }
    let dm = d.matrix();
    let same = |i: usize, j: usize| matches!((labels[i], labels[j]), (Some(a), Some(b)) if a == b);
    match modifier {
        DistanceModifier::Slle { .. } => {
            require_labels(labels)?;
            let dmax = dm.max();
            finish(DMatrix::from_fn(n, n, |i, j| if same(i, j) { dm[(i, j)] } else { dm[(i, j)] + alpha * dmax }), "slle")
        }
        DistanceModifier::Eslle { .. } => {
            require_labels(labels)?;
            let beta = mean_off_diagonal(dm);
            if beta <= 0.0 {
                return Err(LleError::Degenerate("all points coincide; mean distance is zero".into()));
            }
            finish(
                DMatrix::from_fn(n, n, |i, j| {
                    let q = dm[(i, j)].powi(2) / beta;
                    if same(i, j) {
                        (-(-q).exp_m1()).sqrt()
                    } else {
                        (q / 2.0).exp() - alpha
                    }
                }),
                "eslle",
            )
        }
        DistanceModifier::Semi { .. } => {
            let m: Vec<f64> = (0..n).map(|i| dm.row(i).sum() / n as f64).collect();
            if m.iter().any(|&v| v <= 0.0) {
                return Err(LleError::Degenerate("a point has zero mean distance to the data".into()));
            }
            let dd = DMatrix::from_fn(n, n, |i, j| dm[(i, j)] / (m[i] * m[j]).sqrt());
            let beta = mean_off_diagonal(&dd);
            finish(
                DMatrix::from_fn(n, n, |i, j| {
                    let q = dd[(i, j)].powi(2) / beta;
                    let near = (-(-q).exp_m1()).sqrt();
                    match (labels[i], labels[j]) {
                        (Some(a), Some(b)) if a == b => near - alpha,
                        (Some(_), Some(_)) => (q / 2.0).exp(),
                        _ => near,
                    }
                }),
                "semi-supervised",
            )
        }
    }
}

fn as_options(labels: &[usize]) -> Vec<Option<usize>> {
    labels.iter().map(|&c| Some(c)).collect()
}

fn modified_lle(x: &DataMatrix, labels: &[Option<usize>], modifier: DistanceModifier, k: usize, p: usize, eps_scale: f64) -> Result<LleFit> {
    let md = modified_distance(&pairwise_euclidean(x), labels, modifier)?;
    lle_with_distances(x, &md.d, k, p, eps_scale)
}

/// Neighbors from `D + alpha d_max (1 1^T - Delta)`; weights from raw coordinates.
pub fn slle(x: &DataMatrix, labels: &[usize], alpha: f64, k: usize, p: usize, eps_scale: f64) -> Result<LleFit> {
    modified_lle(x, &as_options(labels), DistanceModifier::Slle { alpha }, k, p, eps_scale)
}

pub fn eslle(x: &DataMatrix, labels: &[usize], alpha: f64, k: usize, p: usize, eps_scale: f64) -> Result<LleFit> {
    modified_lle(x, &as_options(labels), DistanceModifier::Eslle { alpha }, k, p, eps_scale)
}

pub fn semi_supervised_lle(x: &DataMatrix, labels: &[Option<usize>], alpha: f64, k: usize, p: usize, eps_scale: f64) -> Result<LleFit> {
    modified_lle(x, labels, DistanceModifier::Semi { alpha }, k, p, eps_scale)
}

/// Fraction of neighbor slots holding a point of the same class.
pub fn neighbor_purity(g: &NeighborGraph, labels: &[usize]) -> f64 {
    let (mut same, mut total) = (0usize, 0usize);
    for i in 0..g.len() {
        for &j in g.neighbors(i) {
            total += 1;
            same += usize::from(labels[i] == labels[j]);
        }
    }
    if total == 0 {
        1.0
    } else {
        same as f64 / total as f64
    }
}

/// `Y ≈ U^T X` fitted column by column with ridge parameter `ridge`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProjection {
    /// `d x p`.
    pub u: DMatrix<f64>,
    pub ridge: f64,
}

impl LinearProjection {
    /// `n_t x p` projections `(U^T X_t)^T`.
    pub fn apply(&self, xt: &DataMatrix) -> Result<DMatrix<f64>> {
        if xt.dim() != self.u.nrows() {
            return shape(format!("projection expects dimension {}, got {}", self.u.nrows(), xt.dim()));
        }
        Ok(xt.matrix().transpose() * &self.u)
    }
}

/// `u_j = (X X^T + ridge I)^-1 X y^j`.
pub fn sllep_fit(x: &DataMatrix, y: &DMatrix<f64>, ridge: f64) -> Result<LinearProjection> {
    if y.nrows() != x.len() {
        return shape(format!("embedding has {} rows for {} points", y.nrows(), x.len()));
    }
    if !(ridge >= 0.0) || !ridge.is_finite() {
        return invalid(format!("ridge parameter must be finite and >= 0, got {ridge}"));
    }
    let xm = x.matrix();
    let mut a = xm * xm.transpose();
    if ridge == 0.0 {
        let e = sym_eigen(&a)?;
        let top = e.values.max().max(f64::MIN_POSITIVE);
        if e.values.min() <= 1e-12 * top {
            return Err(LleError::Singular("X X^T is singular; use a positive ridge parameter".into()));
        }
    }
    for i in 0..a.nrows() {
        a[(i, i)] += ridge;
    }
    let u = solve_spd_matrix(&a, &(xm * y))?;
    Ok(LinearProjection { u, ridge })
}

pub fn sllep_apply(proj: &LinearProjection, xt: &DataMatrix) -> Result<DMatrix<f64>> {
    proj.apply(xt)
}

/// One-vs-rest logistic functions `pi(y) = sigmoid(a_l + b_l^T y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct OneVsRest {
    pub intercepts: Vec<f64>,
    /// `classes x p`.
    pub slopes: DMatrix<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogisticSettings {
    pub step: f64,
    pub iterations: usize,
    pub l2: f64,
}

impl Default for LogisticSettings {
    fn default() -> Self {
        Self { step: 0.1, iterations: 2000, l2: 1e-4 }
    }
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

impl OneVsRest {
    /// Gradient ascent on the penalized mean log-likelihood, one class at a time.
    pub fn fit(y: &DMatrix<f64>, labels: &[usize], classes: usize, settings: LogisticSettings) -> Result<Self> {
        let (n, p) = y.shape();
        if labels.len() != n {
            return shape(format!("{} labels for {n} rows", labels.len()));
        }
        if classes < 2 {
            return invalid("logistic fitting needs at least two classes");
        }
        let mut intercepts = vec![0.0; classes];
        let mut slopes = DMatrix::zeros(classes, p);
        for l in 0..classes {
            let target: Vec<f64> = labels.iter().map(|&c| if c == l { 1.0 } else { 0.0 }).collect();
            let mut a = 0.0;
            let mut b = DVector::<f64>::zeros(p);
            for _ in 0..settings.iterations {
                let mut ga = 0.0;
                let mut gb = DVector::zeros(p);
                for i in 0..n {
                    let r = target[i] - sigmoid(a + b.dot(&y.row(i).transpose()));
                    ga += r;
                    gb += y.row(i).transpose() * r;
                }
                a += settings.step * ga / n as f64;
                b += (gb / n as f64 - &b * settings.l2) * settings.step;
                if !a.is_finite() || b.iter().any(|v| !v.is_finite()) {
                    return Err(LleError::Solver(format!("logistic fit for class {l} diverged")));
                }
            }
            intercepts[l] = a;
            slopes.row_mut(l).copy_from(&b.transpose());
        }
        Ok(Self { intercepts, slopes })
    }

    /// Normalized class probabilities, one row per input row.
    pub fn probabilities(&self, y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if y.ncols() != self.slopes.ncols() {
            return shape(format!("model expects {} columns, got {}", self.slopes.ncols(), y.ncols()));
        }
        let c = self.intercepts.len();
        let mut out = DMatrix::zeros(y.nrows(), c);
        for i in 0..y.nrows() {
            for l in 0..c {
                out[(i, l)] = sigmoid(self.intercepts[l] + self.slopes.row(l).dot(&y.row(i)));
            }
            let s = out.row(i).sum();
            if s > 0.0 {
                out.row_mut(i).scale_mut(1.0 / s);
            } else {
                out.row_mut(i).fill(1.0 / c as f64);
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone)]
pub struct PlleResult {
    pub train: DMatrix<f64>,
    pub test: DMatrix<f64>,
    /// `n_t x classes` test class probabilities.
    pub probabilities: DMatrix<f64>,
    pub fit: LleFit,
}

/// Probabilistic SLLE: soft labels for test points from logistic functions on an
/// unsupervised embedding, then LLE on the joint set with `Delta(i, j) = p_i^T p_j`.
pub fn plle(x_train: &DataMatrix, labels: &[usize], x_test: &DataMatrix, k: usize, p: usize, alpha: f64, eps_scale: f64) -> Result<PlleResult> {
    if labels.len() != x_train.len() {
        return shape(format!("{} labels for {} training points", labels.len(), x_train.len()));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return invalid(format!("alpha must lie in [0, 1], got {alpha}"));
    }
    let classes = labels.iter().max().map_or(0, |&c| c + 1);
    if classes < 2 {
        return invalid("probabilistic SLLE needs at least two classes");
    }
    let model = TrainedModel::train(x_train.clone(), k, p, eps_scale)?;
    let yt = oos_reconstruct(&model, x_test)?.y;
    let logit = OneVsRest::fit(model.y(), labels, classes, LogisticSettings::default())?;
    let probabilities = logit.probabilities(&yt)?;

    let n = x_train.len();
    let joint = x_train.concat(x_test)?;
    let total = joint.len();
    let mut prob = DMatrix::zeros(total, classes);
    for (i, &c) in labels.iter().enumerate() {
        prob[(i, c)] = 1.0;
    }
    prob.rows_mut(n, total - n).copy_from(&probabilities);
    let delta = &prob * prob.transpose();
    let d = pairwise_euclidean(&joint);
    let dmax = d.matrix().max();
    let dm = DMatrix::from_fn(total, total, |i, j| if i == j { 0.0 } else { d.get(i, j) + alpha * dmax * (1.0 - delta[(i, j)]) });
    let fit = lle_with_distances(&joint, &DistanceMatrix::new(dm)?, k, p, eps_scale)?;
    let y = &fit.embedding.y;
    Ok(PlleResult {
        train: y.rows(0, n).into_owned(),
        test: y.rows(n, total - n).into_owned(),
        probabilities,
        fit,
    })
}

/// Label term of the guided objective: `H pinv(H K_delta H + I) H`.
///
/// The shift by `I` turns the maximization of `tr(Y^T H K_delta H Y)` into a
/// minimization whose smallest nontrivial eigenvectors follow the classes.
pub fn label_guidance_kernel(labels: &[usize]) -> Result<DMatrix<f64>> {
    let n = labels.len();
    let kd = delta_kernel(&as_options(labels), n)?;
    let h = centering_matrix(n);
    let shifted = &h * kd * &h + DMatrix::identity(n, n);
    let kt = &h * pseudo_inverse(&shifted, PINV_TOL)? * &h;
    Ok((&kt + kt.transpose()) * 0.5)
}

/// Bottom nontrivial eigenvectors of `(1 - alpha) M + alpha K_t`.
pub fn glle(x: &DataMatrix, labels: &[usize], k: usize, p: usize, alpha: f64, eps_scale: f64) -> Result<EmbeddingMatrix> {
    if labels.len() != x.len() {
        return shape(format!("{} labels for {} points", labels.len(), x.len()));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return invalid(format!("alpha must lie in [0, 1], got {alpha}"));
    }
    let fit = lle_fit(x, k, p, eps_scale)?;
    if alpha == 0.0 {
        return Ok(fit.embedding);
    }
    let mix = glle_matrix(&fit.m.m, labels, alpha)?;
    embed_matrix(&mix, p)
}

pub fn glle_matrix(m: &DMatrix<f64>, labels: &[usize], alpha: f64) -> Result<DMatrix<f64>> {
    if m.nrows() != labels.len() {
        return shape(format!("{} labels for a {}x{} matrix", labels.len(), m.nrows(), m.ncols()));
    }
    let mix = m * (1.0 - alpha) + label_guidance_kernel(labels)? * alpha;
    Ok((&mix + mix.transpose()) * 0.5)
}

/// Between-class over within-class variance of an embedding.
pub fn class_variance_ratio(y: &DMatrix<f64>, labels: &[usize]) -> f64 {
    let n = y.nrows();
    let classes = labels.iter().max().map_or(0, |&c| c + 1);
    let mean = y.row_mean();
    let (mut between, mut within) = (0.0, 0.0);
    for c in 0..classes {
        let idx: Vec<usize> = (0..n).filter(|&i| labels[i] == c).collect();
        if idx.is_empty() {
            continue;
        }
        let rows = y.select_rows(&idx);
        let cm = rows.row_mean();
        between += idx.len() as f64 * (&cm - &mean).norm_squared();
        for r in rows.row_iter() {
            within += (r - &cm).norm_squared();
        }
    }
    if within > 0.0 {
        between / within
    } else {
        f64::INFINITY
    }
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    /// Two isotropic Gaussian blobs in `d` dimensions, centers `±sep/2` on the first axis.
    pub fn two_gaussians(per_class: usize, d: usize, sep: f64, seed: u64) -> (DataMatrix, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let mut m = DMatrix::zeros(d, 2 * per_class);
        let mut labels = Vec::new();
        for c in 0..2 {
            for i in 0..per_class {
                let col = c * per_class + i;
                for r in 0..d {
                    m[(r, col)] = normal.sample(&mut rng);
                }
                m[(0, col)] += if c == 0 { -sep / 2.0 } else { sep / 2.0 };
                labels.push(c);
            }
        }
        (DataMatrix::new(m).unwrap(), labels)
    }
}
