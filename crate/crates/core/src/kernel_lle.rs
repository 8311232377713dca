//! Kernel LLE: weights solved from kernel entries only, LLE viewed as a
//! kernel method, and the Hilbert-Schmidt independence criterion.

use nalgebra::DMatrix;

use crate::dataset::DataMatrix;
use crate::error::{invalid, shape, LleError, Result};
use crate::lle_core::{
    barycentric, check_p, embed, embedding_matrix, scatter_weights, regularize_gram, EmbeddingMatrix, LleFit,
    ReconstructionWeights,
};
use crate::neighbors::{knn_graph, pairwise_euclidean, pairwise_feature_space, DistanceMatrix, NeighborGraph};
use crate::numlin::{double_center, pseudo_inverse, sym_eigen, PINV_TOL};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelDescriptor {
    Linear,
    /// `exp(-||x - y||^2 / (2 sigma^2))`; `None` picks the median pairwise distance.
    Gaussian { sigma: Option<f64> },
    /// 1 when both points carry the same label.
    DeltaLabel,
}

#[derive(Debug, Clone)]
pub struct KernelMatrix {
    pub k: DMatrix<f64>,
    /// Descriptor with resolved parameters; `None` for kernels derived from `M`.
    pub descriptor: Option<KernelDescriptor>,
}

/// How to turn the embedding matrix `M` into a kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelView {
    /// `mu I - M`; `None` uses `lambda_max(M) (1 + 1e-6)`.
    MuShift(Option<f64>),
    PseudoInverse,
}

/// Median of the off-diagonal Euclidean distances.
pub fn median_heuristic_sigma(x: &DataMatrix) -> Result<f64> {
    let d = pairwise_euclidean(x);
    let n = x.len();
    let mut v: Vec<f64> = Vec::with_capacity(n * (n - 1) / 2);
    for j in 0..n {
        for i in (j + 1)..n {
            v.push(d.get(i, j));
        }
    }
    if v.is_empty() {
        return invalid("median bandwidth needs at least two points");
    }
    v.sort_by(|a, b| a.total_cmp(b));
    let m = v.len();
    let med = if m % 2 == 1 { v[m / 2] } else { 0.5 * (v[m / 2 - 1] + v[m / 2]) };
    if !(med > 0.0) {
        return Err(LleError::Degenerate("median pairwise distance is zero; give sigma explicitly".into()));
    }
    Ok(med)
}

pub fn kernel_matrix(x: &DataMatrix, desc: KernelDescriptor, labels: Option<&[Option<usize>]>) -> Result<KernelMatrix> {
    let n = x.len();
    match desc {
        KernelDescriptor::Linear => {
            let k = x.matrix().transpose() * x.matrix();
            Ok(KernelMatrix { k: (&k + k.transpose()) * 0.5, descriptor: Some(desc) })
        }
        KernelDescriptor::Gaussian { sigma } => {
            let s = match sigma {
                Some(s) if s > 0.0 && s.is_finite() => s,
                Some(s) => return invalid(format!("gaussian sigma must be positive, got {s}")),
                None => median_heuristic_sigma(x)?,
            };
            let d = pairwise_euclidean(x);
            let k = DMatrix::from_fn(n, n, |i, j| (-d.get(i, j).powi(2) / (2.0 * s * s)).exp());
            Ok(KernelMatrix { k, descriptor: Some(KernelDescriptor::Gaussian { sigma: Some(s) }) })
        }
        KernelDescriptor::DeltaLabel => {
            let labels = labels.ok_or_else(|| LleError::InvalidArgument("delta kernel needs labels".into()))?;
            Ok(KernelMatrix { k: delta_kernel(labels, n)?, descriptor: Some(desc) })
        }
    }
}

pub(crate) fn delta_kernel(labels: &[Option<usize>], n: usize) -> Result<DMatrix<f64>> {
    if labels.len() != n {
        return shape(format!("{} labels for {n} points", labels.len()));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| match (labels[i], labels[j]) {
        _ if i == j => 1.0,
        (Some(a), Some(b)) if a == b => 1.0,
        _ => 0.0,
    }))
}

/// `K_i(a, b) = K(i,i) - K(i,a) - K(i,b) + K(a,b)` over the neighbors of `i`.
pub fn local_kernel_gram(i: usize, g: &NeighborGraph, k: &DMatrix<f64>) -> DMatrix<f64> {
    let nb = g.neighbors(i);
    let m = nb.len();
    DMatrix::from_fn(m, m, |a, b| {
        let (ia, ib) = (nb[a], nb[b]);
        k[(i, i)] - k[(i, ia)] - k[(i, ib)] + k[(ia, ib)]
    })
}

fn feature_dim(desc: Option<KernelDescriptor>, x: &DataMatrix) -> Option<usize> {
    match desc {
        Some(KernelDescriptor::Linear) => Some(x.dim()),
        _ => None,
    }
}

fn kernel_lle_with(
    n: usize,
    feature: &DistanceMatrix,
    gram: impl Fn(usize, &NeighborGraph) -> DMatrix<f64>,
    feature_dim: Option<usize>,
    knn: usize,
    p: usize,
    eps_scale: f64,
) -> Result<LleFit> {
    check_p(p, n)?;
    let graph = knn_graph(feature, knn)?;
    let rows = (0..n)
        .map(|i| {
            let mut ki = gram(i, &graph);
            regularize_gram(&mut ki, eps_scale, feature_dim)?;
            barycentric(&ki).map_err(|_| {
                LleError::Degenerate(format!("local kernel Gram of point {i} is singular; use eps_scale > 0"))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let weights = ReconstructionWeights { rows };
    let w = scatter_weights(&weights, &graph)?;
    let m = embedding_matrix(&w);
    let embedding = embed(&m, p)?;
    Ok(LleFit { graph, weights, w, m, embedding })
}

/// Kernel LLE on a precomputed kernel; `feature_dim` is known only for finite feature maps.
pub fn kernel_lle_from_matrix(k: &DMatrix<f64>, feature_dim: Option<usize>, knn: usize, p: usize, eps_scale: f64) -> Result<LleFit> {
    let feature = pairwise_feature_space(k)?;
    kernel_lle_with(k.nrows(), &feature, |i, g| local_kernel_gram(i, g, k), feature_dim, knn, p, eps_scale)
}

/// `1 - k(x_i, x_j)` for the gaussian kernel, accurate even when the kernel is close to one.
pub fn gaussian_complement(x: &DataMatrix, sigma: f64) -> DMatrix<f64> {
    let d = pairwise_euclidean(x);
    let n = x.len();
    DMatrix::from_fn(n, n, |i, j| -(-d.get(i, j).powi(2) / (2.0 * sigma * sigma)).exp_m1())
}

pub fn kernel_lle_fit(
    x: &DataMatrix,
    desc: KernelDescriptor,
    labels: Option<&[Option<usize>]>,
    k: usize,
    p: usize,
    eps_scale: f64,
) -> Result<LleFit> {
    let km = kernel_matrix(x, desc, labels)?;
    match km.descriptor {
        Some(KernelDescriptor::Gaussian { sigma: Some(s) }) => {
            // unit diagonal: feature distance^2 = 2 c_ij and K_i(a, b) = c_ia + c_ib - c_ab with c = 1 - K
            let c = gaussian_complement(x, s);
            let feature = DistanceMatrix::from_trusted(c.map(|v| (2.0 * v).sqrt()));
            let gram = |i: usize, g: &NeighborGraph| {
                let nb = g.neighbors(i);
                DMatrix::from_fn(nb.len(), nb.len(), |a, b| c[(i, nb[a])] + c[(i, nb[b])] - c[(nb[a], nb[b])])
            };
            kernel_lle_with(x.len(), &feature, gram, None, k, p, eps_scale)
        }
        _ => kernel_lle_from_matrix(&km.k, feature_dim(Some(desc), x), k, p, eps_scale),
    }
}

pub fn kernel_lle(x: &DataMatrix, desc: KernelDescriptor, k: usize, p: usize, eps_scale: f64) -> Result<EmbeddingMatrix> {
    Ok(kernel_lle_fit(x, desc, None, k, p, eps_scale)?.embedding)
}

/// Kernel whose top eigenvectors are the LLE embedding.
pub fn lle_kernel_view(m: &DMatrix<f64>, view: KernelView) -> Result<KernelMatrix> {
    let e = sym_eigen(m)?;
    let n = m.nrows();
    let lmax = e.values[n - 1];
    let scale = lmax.abs().max(f64::MIN_POSITIVE);
    let k = match view {
        KernelView::MuShift(mu) => {
            let mu = mu.unwrap_or(lmax * (1.0 + 1e-6));
            if !(mu >= lmax - 1e-12 * scale) {
                return invalid(format!("mu = {mu} is below lambda_max(M) = {lmax}; mu I - M would not be PSD"));
            }
            let mut k = -m.clone();
            for i in 0..n {
                k[(i, i)] += mu;
            }
            k
        }
        KernelView::PseudoInverse => {
            let p = pseudo_inverse(m, PINV_TOL)?;
            (&p + p.transpose()) * 0.5
        }
    };
    if e.values[0] < -1e-8 * scale {
        return invalid("embedding matrix is not positive semidefinite");
    }
    Ok(KernelMatrix { k, descriptor: None })
}

/// `tr(Kx H Ky H) / (n - 1)^2`.
pub fn hsic(kx: &DMatrix<f64>, ky: &DMatrix<f64>) -> Result<f64> {
    if !kx.is_square() || kx.shape() != ky.shape() {
        return shape(format!("HSIC needs equal square kernels, got {:?} and {:?}", kx.shape(), ky.shape()));
    }
    let n = kx.nrows();
    if n < 2 {
        return invalid("HSIC needs at least two points");
    }
    let cx = double_center(kx);
    let cy = double_center(ky);
    // tr(Kx H Ky H) = <H Kx H, H Ky H>_F for symmetric kernels
    Ok(cx.component_mul(&cy).sum() / ((n - 1) as f64).powi(2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::swiss_roll;
    use crate::lle_core::{lle_fit, local_gram};
    use crate::numlin::centering_matrix;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn blob(n: usize, d: usize, seed: u64) -> DataMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DataMatrix::new(DMatrix::from_fn(d, n, |_, _| rng.gen_range(-1.0..1.0))).unwrap()
    }

    #[test]
    fn linear_kernel_of_orthonormal_columns() {
        let x = DataMatrix::new(DMatrix::identity(3, 3)).unwrap();
        assert_eq!(kernel_matrix(&x, KernelDescriptor::Linear, None).unwrap().k, DMatrix::identity(3, 3));
    }

    #[test]
    fn gaussian_matches_formula() {
        let x = DataMatrix::from_points(&[vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 2.0]]).unwrap();
        let k = kernel_matrix(&x, KernelDescriptor::Gaussian { sigma: Some(1.5) }, None).unwrap().k;
        let f = |d2: f64| (-d2 / (2.0 * 2.25)).exp();
        assert_relative_eq!(k[(0, 1)], f(1.0), epsilon = 1e-15);
        assert_relative_eq!(k[(0, 2)], f(4.0), epsilon = 1e-15);
        assert_relative_eq!(k[(1, 2)], f(5.0), epsilon = 1e-15);
        for i in 0..3 {
            assert_eq!(k[(i, i)], 1.0);
        }
        assert!(k.iter().all(|v| *v > 0.0 && *v <= 1.0));
    }

    #[test]
    fn delta_kernel_needs_labels() {
        let x = blob(4, 2, 1);
        assert!(kernel_matrix(&x, KernelDescriptor::DeltaLabel, None).is_err());
        let k = kernel_matrix(&x, KernelDescriptor::DeltaLabel, Some(&[Some(0), Some(1), Some(0), None])).unwrap().k;
        assert_eq!(k[(0, 2)], 1.0);
        assert_eq!(k[(0, 1)], 0.0);
        assert_eq!(k[(3, 3)], 1.0);
        assert_eq!(k[(3, 0)], 0.0);
    }

    #[test]
    fn local_kernel_gram_linear_equals_local_gram() {
        let x = blob(30, 4, 2);
        let k = kernel_matrix(&x, KernelDescriptor::Linear, None).unwrap().k;
        let g = knn_graph(&pairwise_euclidean(&x), 3).unwrap();
        for i in 0..30 {
            let ki = local_kernel_gram(i, &g, &k);
            let gi = local_gram(x.point(i), &x.matrix().select_columns(g.neighbors(i)), 0.0).unwrap();
            assert!((ki - gi).amax() < 1e-10);
        }
    }

    #[test]
    fn local_kernel_gram_four_term_loop_and_duplicate() {
        let mut pts: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64 * 0.7, (i * i) as f64 * 0.1]).collect();
        pts.push(pts[2].clone());
        let x = DataMatrix::from_points(&pts).unwrap();
        let k = kernel_matrix(&x, KernelDescriptor::Gaussian { sigma: Some(1.0) }, None).unwrap().k;
        let g = knn_graph(&pairwise_feature_space(&k).unwrap(), 3).unwrap();
        let i = 2;
        let ki = local_kernel_gram(i, &g, &k);
        let nb = g.neighbors(i);
        for a in 0..3 {
            for b in 0..3 {
                let v = k[(i, i)] - k[(i, nb[a])] - k[(i, nb[b])] + k[(nb[a], nb[b])];
                assert_eq!(ki[(a, b)], v);
            }
        }
        // the duplicate of point 2 is its first neighbor and contributes a zero row
        assert_eq!(nb[0], 6);
        assert!(ki.row(0).amax() < 1e-15);
    }

    #[test]
    fn linear_kernel_reproduces_lle() {
        let x = blob(100, 5, 3);
        let a = lle_fit(&x, 8, 2, 1e-3).unwrap();
        let b = kernel_lle_fit(&x, KernelDescriptor::Linear, None, 8, 2, 1e-3).unwrap();
        assert_eq!(a.graph, b.graph);
        for (u, v) in a.weights.rows.iter().zip(&b.weights.rows) {
            assert!((u - v).amax() < 1e-8);
        }
        for c in 0..2 {
            let (ya, yb) = (a.embedding.y.column(c), b.embedding.y.column(c));
            assert!((ya - yb).amax().min((ya + yb).amax()) < 1e-8);
        }
    }

    #[test]
    fn wide_gaussian_recovers_euclidean_ordering() {
        let x = blob(12, 2, 4);
        let diam = pairwise_euclidean(&x).matrix().max();
        let fit = kernel_lle_fit(&x, KernelDescriptor::Gaussian { sigma: Some(1e6 * diam) }, None, 3, 1, 1e-3).unwrap();
        let ge = knn_graph(&pairwise_euclidean(&x), 3).unwrap();
        assert_eq!(fit.graph, ge);
    }

    #[test]
    fn gaussian_kernel_lle_satisfies_invariants() {
        let x = swiss_roll(200, 0.05, 5).unwrap().data;
        let fit = kernel_lle_fit(&x, KernelDescriptor::Gaussian { sigma: None }, None, 10, 2, 1e-3).unwrap();
        let y = &fit.embedding.y;
        assert!((y.transpose() * y / 200.0 - DMatrix::identity(2, 2)).amax() < 1e-8);
        assert!(y.row_sum().amax() < 1e-7);
        for c in 0..2 {
            let r = &fit.m.m * y.column(c) - y.column(c) * fit.embedding.eigenvalues[c];
            assert!(r.norm() <= 1e-8 * fit.m.m.norm());
        }
    }

    #[test]
    fn mu_shift_views() {
        let x = swiss_roll(80, 0.05, 7).unwrap().data;
        let fit = lle_fit(&x, 8, 2, 1e-3).unwrap();
        let m = &fit.m.m;
        let lmax = sym_eigen(m).unwrap().values[79];
        let k = lle_kernel_view(m, KernelView::MuShift(Some(lmax))).unwrap().k;
        let ek = sym_eigen(&k).unwrap();
        assert!(ek.values[0].abs() < 1e-10 * lmax);
        assert!(lle_kernel_view(m, KernelView::MuShift(Some(0.5 * lmax))).is_err());

        // embedding columns are eigenvectors of mu I - M with eigenvalue mu - lambda
        let kv = lle_kernel_view(m, KernelView::MuShift(None)).unwrap();
        let mu = kv.k[(0, 0)] + m[(0, 0)];
        for c in 0..2 {
            let v = fit.embedding.y.column(c);
            let r = &kv.k * v - v * (mu - fit.embedding.eigenvalues[c]);
            assert!(r.norm() <= 1e-8 * mu * v.norm());
        }
    }

    #[test]
    fn pseudo_inverse_view_gives_projector() {
        let x = swiss_roll(60, 0.05, 8).unwrap().data;
        let m = lle_fit(&x, 8, 2, 1e-3).unwrap().m.m;
        let p = lle_kernel_view(&m, KernelView::PseudoInverse).unwrap().k;
        let proj = &p * &m;
        assert!((proj - centering_matrix(60)).amax() < 1e-6);
    }

    #[test]
    fn hsic_cases() {
        let x = blob(50, 3, 9);
        let k = kernel_matrix(&x, KernelDescriptor::Gaussian { sigma: None }, None).unwrap().k;
        assert!(hsic(&k, &k).unwrap() > 0.0);
        let c = DataMatrix::new(DMatrix::from_element(2, 50, 3.0)).unwrap();
        let kc = kernel_matrix(&crate::dataset::center(&c), KernelDescriptor::Linear, None).unwrap().k;
        assert_eq!(hsic(&kc, &k).unwrap(), 0.0);
        assert!(hsic(&k, &DMatrix::zeros(3, 3)).is_err());
    }

    #[test]
    fn independent_label_kernels_have_small_hsic() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let la: Vec<Option<usize>> = (0..200).map(|_| Some(rng.gen_range(0..3))).collect();
        let lb: Vec<Option<usize>> = (0..200).map(|_| Some(rng.gen_range(0..3))).collect();
        let ka = delta_kernel(&la, 200).unwrap();
        let kb = delta_kernel(&lb, 200).unwrap();
        let cross = hsic(&ka, &kb).unwrap();
        let selfv = hsic(&ka, &ka).unwrap();
        assert!(cross.abs() < 0.05 * selfv, "{cross} {selfv}");
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(32))]
            #[test]
            fn hsic_non_negative_for_psd(seed in any::<u64>(), n in 3usize..25) {
                let x = blob(n, 3, seed);
                let y = blob(n, 2, seed ^ 0xabc);
                let kx = kernel_matrix(&x, KernelDescriptor::Gaussian { sigma: None }, None).unwrap().k;
                let ky = kernel_matrix(&y, KernelDescriptor::Linear, None).unwrap().k;
                prop_assert!(hsic(&kx, &ky).unwrap() >= -1e-10);
            }
        }
    }
}
