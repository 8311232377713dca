//! Weighted LLE family: deformed-distance neighbors, occurrence-probability
//! weighting, supervised weight adjustment, modified LLE and iterative LLE.

use nalgebra::{DMatrix, DVector};
use statrs::function::gamma::ln_gamma;

use crate::dataset::DataMatrix;
use crate::error::{invalid, shape, LleError, Result};
use crate::lle_core::{
    add_residual_outer, barycentric, check_p, embed, embed_matrix, embedding_matrix, local_gram, raw_local_gram, regularize_gram,
    reconstruction_weights, scatter_weights, take_columns, EmbeddingMatrix, GramLaplacian, LleFit, ReconstructionWeights, ScaleConvention,
    WeightMatrix,
};
use crate::neighbors::{knn_graph, pairwise_euclidean, DistanceMatrix, NeighborGraph};
use crate::numlin::{generalized_sym_eigen, pseudo_inverse, sym_eigen, PINV_TOL};

/// Per-point neighborhood shape statistics behind the deformed distance.
#[derive(Debug, Clone)]
pub struct DeformationStats {
    /// Mean neighbor offset `g_i`.
    pub g: Vec<DVector<f64>>,
    /// Mean offset norm `l_i`.
    pub l: Vec<f64>,
    /// `g_i / ||g_i||`, zero when `g_i = 0`.
    pub tau: Vec<DVector<f64>>,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c1: f64,
    pub c2: f64,
}

/// `c1 = sqrt(2) Gamma((d+1)/2) / (Gamma(d/2) d)`, `c2 = d c1`.
pub fn deformation_constants(d: usize) -> (f64, f64) {
    let df = d as f64;
    let c2 = 2f64.sqrt() * (ln_gamma((df + 1.0) / 2.0) - ln_gamma(df / 2.0)).exp();
    (c2 / df, c2)
}

pub fn deformation_stats(x: &DataMatrix, g: &NeighborGraph) -> Result<DeformationStats> {
    if g.len() != x.len() {
        return shape(format!("graph over {} points, data has {}", g.len(), x.len()));
    }
    let (c1, c2) = deformation_constants(x.dim());
    let mut s = DeformationStats { g: vec![], l: vec![], tau: vec![], a: vec![], b: vec![], c1, c2 };
    for i in 0..x.len() {
        let nb = g.neighbors(i);
        let k = nb.len() as f64;
        let mut gi = DVector::zeros(x.dim());
        let mut li = 0.0;
        for &j in nb {
            let v = x.point(j) - x.point(i);
            li += v.norm();
            gi += v;
        }
        gi /= k;
        li /= k;
        let gn = gi.norm();
        s.tau.push(if gn > 0.0 { &gi / gn } else { DVector::zeros(x.dim()) });
        s.a.push(li / c2);
        s.b.push(gn / c1);
        s.g.push(gi);
        s.l.push(li);
    }
    Ok(s)
}

#[derive(Debug, Clone)]
pub struct DeformedDistance {
    pub d: DistanceMatrix,
    pub stats: DeformationStats,
    /// Denominators raised to the floor `1e-12`.
    pub clamped: usize,
}

/// `||x_i - x_j|| / (a_i + b_i cos theta)` with `cos theta = (x_i - x_j)^T tau_i / ||x_i - x_j||`,
/// symmetrized by the larger of the two directions.
pub fn deformed_distance(x: &DataMatrix, k: usize) -> Result<DeformedDistance> {
    if k < 1 {
        return invalid("deformed distance needs k >= 1");
    }
    let e = pairwise_euclidean(x);
    let stats = deformation_stats(x, &knn_graph(&e, k)?)?;
    let n = x.len();
    let mut clamped = 0;
    let mut raw = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let r = e.get(i, j);
            if i == j || r == 0.0 {
                continue;
            }
            let cos = (x.point(i) - x.point(j)).dot(&stats.tau[i]) / r;
            let mut den = stats.a[i] + stats.b[i] * cos;
            if den <= 1e-12 {
                den = 1e-12;
                clamped += 1;
            }
            raw[(i, j)] = r / den;
        }
    }
    if clamped > 0 {
        log::warn!("deformed distance: {clamped} denominators clamped to 1e-12");
    }
    let d = DMatrix::from_fn(n, n, |i, j| raw[(i, j)].max(raw[(j, i)]));
    Ok(DeformedDistance { d: DistanceMatrix::new(d)?, stats, clamped })
}

/// Neighbors from the deformed distance, weights and embedding as plain LLE.
pub fn deformed_lle(x: &DataMatrix, k: usize, p: usize, eps_scale: f64) -> Result<LleFit> {
    let dd = deformed_distance(x, k)?;
    crate::lle_core::lle_with_distances(x, &dd.d, k, p, eps_scale)
}

fn check_probabilities(probs: &[f64], n: usize) -> Result<()> {
    if probs.len() != n {
        return shape(format!("{} probabilities for {n} points", probs.len()));
    }
    if let Some(i) = probs.iter().position(|&p| !(p > 0.0 && p <= 1.0)) {
        return invalid(format!("probability of point {i} must lie in (0, 1], got {}", probs[i]));
    }
    Ok(())
}

/// `dist^2(i, j) = ||x_i - x_j||^2 / p_i`, symmetrized by the larger direction.
pub fn occurrence_distance(x: &DataMatrix, probs: &[f64]) -> Result<DistanceMatrix> {
    check_probabilities(probs, x.len())?;
    let e = pairwise_euclidean(x);
    let n = x.len();
    DistanceMatrix::new(DMatrix::from_fn(n, n, |i, j| e.get(i, j) / probs[i].min(probs[j]).sqrt()))
}

/// Reconstruction weights from Grams scaled by `sqrt(p_a p_b)` over neighbor pairs.
pub fn occurrence_weights(x: &DataMatrix, g: &NeighborGraph, probs: &[f64], eps_scale: f64) -> Result<ReconstructionWeights> {
    check_probabilities(probs, x.len())?;
    if g.len() != x.len() {
        return shape(format!("graph over {} points, data has {}", g.len(), x.len()));
    }
    let mut rows = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let nb = g.neighbors(i);
        let mut gi = raw_local_gram(x.point(i), &x.matrix().select_columns(nb));
        for a in 0..nb.len() {
            for b in 0..nb.len() {
                gi[(a, b)] *= (probs[nb[a]] * probs[nb[b]]).sqrt();
            }
        }
        regularize_gram(&mut gi, eps_scale, Some(x.dim()))?;
        rows.push(barycentric(&gi)?);
    }
    Ok(ReconstructionWeights { rows })
}

pub fn occurrence_weighted_lle(x: &DataMatrix, probs: &[f64], k: usize, p: usize, eps_scale: f64) -> Result<LleFit> {
    check_p(p, x.len())?;
    let graph = knn_graph(&occurrence_distance(x, probs)?, k)?;
    let weights = occurrence_weights(x, &graph, probs, eps_scale)?;
    let w = scatter_weights(&weights, &graph)?;
    let m = embedding_matrix(&w);
    let embedding = embed(&m, p)?;
    Ok(LleFit { graph, weights, w, m, embedding })
}

/// `w_ij ± delta` by class agreement, then each row rescaled to sum to one.
pub fn adjust_weights_supervised(w: &ReconstructionWeights, g: &NeighborGraph, labels: &[usize], delta: f64) -> Result<ReconstructionWeights> {
    if !(delta >= 0.0) {
        return invalid(format!("delta must be >= 0, got {delta}"));
    }
    if labels.len() != g.len() || w.rows.len() != g.len() {
        return shape("weights, graph and labels must cover the same points");
    }
    let mut rows = Vec::with_capacity(g.len());
    for (i, row) in w.rows.iter().enumerate() {
        let nb = g.neighbors(i);
        let adj = DVector::from_fn(row.len(), |c, _| if labels[nb[c]] == labels[i] { row[c] + delta } else { row[c] - delta });
        let s = adj.sum();
        if s.abs() <= 1e-12 {
            return Err(LleError::Degenerate(format!("adjusted weights of point {i} sum to {s:e}; cannot renormalize")));
        }
        rows.push(adj / s);
    }
    Ok(ReconstructionWeights { rows })
}

pub fn weight_adjusted_lle(x: &DataMatrix, labels: &[usize], k: usize, p: usize, delta: f64, eps_scale: f64) -> Result<LleFit> {
    check_p(p, x.len())?;
    let graph = knn_graph(&pairwise_euclidean(x), k)?;
    let weights = adjust_weights_supervised(&reconstruction_weights(x, &graph, eps_scale)?, &graph, labels, delta)?;
    let w = scatter_weights(&weights, &graph)?;
    let m = embedding_matrix(&w);
    let embedding = embed(&m, p)?;
    Ok(LleFit { graph, weights, w, m, embedding })
}

/// How many alternative weight vectors MLLE builds per point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SRule {
    /// `max(1, k - p)`.
    KMinusP,
    Fixed(usize),
}

/// Householder reflector `I - 2 u u^T / ||u||^2` with `u = v - alpha 1`, identity when `u` vanishes.
pub fn householder_to_ones(v: &DVector<f64>, alpha: f64) -> DMatrix<f64> {
    let s = v.len();
    let u = v - DVector::from_element(s, alpha);
    let nu = u.norm_squared();
    if nu.sqrt() < 1e-12 {
        return DMatrix::identity(s, s);
    }
    DMatrix::identity(s, s) - &u * u.transpose() * (2.0 / nu)
}

/// The `s_i` weight vectors `(1 - alpha_i) w_i + V_i J_i(:, l)` for one point.
pub fn mlle_local_weights(g_raw: &DMatrix<f64>, w: &DVector<f64>, s: usize) -> Result<Vec<DVector<f64>>> {
    let k = g_raw.nrows();
    if s < 1 || s > k {
        return invalid(format!("MLLE needs 1 <= s <= k = {k}, got {s}"));
    }
    // right singular vectors of a symmetric PSD matrix are its eigenvectors
    let e = sym_eigen(g_raw)?;
    let v = e.vectors.columns(0, s).into_owned();
    let vi = v.transpose() * DVector::from_element(k, 1.0);
    let alpha = vi.norm() / (s as f64).sqrt();
    let j = householder_to_ones(&vi, alpha);
    let vj = &v * j;
    Ok((0..s).map(|l| w * (1.0 - alpha) + vj.column(l)).collect())
}

/// `sum_i sum_l (e_i - w_i^(l)) (e_i - w_i^(l))^T`.
pub fn mlle_matrix(x: &DataMatrix, g: &NeighborGraph, p: usize, rule: SRule, eps_scale: f64) -> Result<GramLaplacian> {
    let n = x.len();
    if g.len() != n {
        return shape(format!("graph over {} points, data has {}", g.len(), n));
    }
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        let nb = g.neighbors(i);
        let k = nb.len();
        let s = match rule {
            SRule::KMinusP => k.saturating_sub(p).max(1),
            SRule::Fixed(s) => s,
        };
        let xs = x.matrix().select_columns(nb);
        let graw = raw_local_gram(x.point(i), &xs);
        let w = barycentric(&local_gram(x.point(i), &xs, eps_scale)?)?;
        for wl in mlle_local_weights(&graw, &w, s)? {
            let row: Vec<(usize, f64)> = nb.iter().copied().zip(wl.iter().copied()).collect();
            add_residual_outer(&mut m, i, &row, 1.0);
        }
    }
    Ok(GramLaplacian { m: (&m + m.transpose()) * 0.5 })
}

pub fn mlle(x: &DataMatrix, k: usize, p: usize, rule: SRule, eps_scale: f64) -> Result<EmbeddingMatrix> {
    check_p(p, x.len())?;
    if k <= p {
        return invalid(format!("MLLE needs k > p, got k = {k}, p = {p}"));
    }
    let g = knn_graph(&pairwise_euclidean(x), k)?;
    embed_matrix(&mlle_matrix(x, &g, p, rule, eps_scale)?.m, p)
}

fn least_squares(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    Ok(pseudo_inverse(a, PINV_TOL)? * b)
}

/// Lawson–Hanson active-set solution of `min ||a w - b||` over `w >= 0`.
pub fn nnls(a: &DMatrix<f64>, b: &DVector<f64>, tol: f64) -> Result<DVector<f64>> {
    let (m, k) = a.shape();
    if b.len() != m {
        return shape(format!("NNLS right-hand side has length {}, expected {m}", b.len()));
    }
    let mut w = DVector::zeros(k);
    let mut passive = vec![false; k];
    let scale = tol * (1.0 + a.amax() * b.amax());
    for _ in 0..3 * k + 10 {
        let grad = a.transpose() * (b - a * &w);
        let next = (0..k).filter(|&j| !passive[j] && grad[j] > scale).max_by(|&i, &j| grad[i].total_cmp(&grad[j]));
        let Some(j) = next else { break };
        passive[j] = true;
        loop {
            let idx: Vec<usize> = (0..k).filter(|&j| passive[j]).collect();
            let z = least_squares(&a.select_columns(&idx), b)?;
            if z.iter().all(|&v| v > 0.0) {
                w.fill(0.0);
                for (c, &j) in idx.iter().enumerate() {
                    w[j] = z[c];
                }
                break;
            }
            // step back toward the feasible point until some passive entry hits zero
            let mut t = 1.0f64;
            for (c, &j) in idx.iter().enumerate() {
                if z[c] <= 0.0 {
                    let d = w[j] - z[c];
                    if d > 0.0 {
                        t = t.min(w[j] / d);
                    }
                }
            }
            for (c, &j) in idx.iter().enumerate() {
                w[j] += t * (z[c] - w[j]);
                if w[j] <= tol {
                    w[j] = 0.0;
                    passive[j] = false;
                }
            }
            if !passive.iter().any(|&p| p) {
                break;
            }
        }
    }
    Ok(w)
}

/// Nonnegative weights without sum-to-one; a zero solution falls back to barycentric weights.
pub fn nonnegative_weights(x: &DataMatrix, g: &NeighborGraph, eps_scale: f64) -> Result<ReconstructionWeights> {
    if g.len() != x.len() {
        return shape(format!("graph over {} points, data has {}", g.len(), x.len()));
    }
    let mut rows = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let xs = x.matrix().select_columns(g.neighbors(i));
        let w = nnls(&xs, &x.point(i).into_owned(), 1e-10)?;
        if w.iter().all(|&v| v == 0.0) {
            rows.push(barycentric(&local_gram(x.point(i), &xs, eps_scale)?)?);
        } else {
            rows.push(w);
        }
    }
    Ok(ReconstructionWeights { rows })
}

/// Degree matrix diagonal of the symmetrized weight graph `(|W| + |W|^T) / 2`.
pub fn degree_diagonal(w: &WeightMatrix) -> Vec<f64> {
    let n = w.n();
    let mut deg = vec![0.0; n];
    for i in 0..n {
        for &(j, v) in w.row(i) {
            deg[i] += 0.5 * v.abs();
            deg[j] += 0.5 * v.abs();
        }
    }
    let low = deg.iter().filter(|&&d| d < 1e-12).count();
    if low > 0 {
        log::warn!("{low} vertices with zero degree; clamped to 1e-12");
    }
    deg.iter().map(|d| d.max(1e-12)).collect()
}

#[derive(Debug, Clone)]
pub struct IterativeFit {
    pub graph: NeighborGraph,
    pub w: WeightMatrix,
    pub m: GramLaplacian,
    pub degree: Vec<f64>,
    pub embedding: EmbeddingMatrix,
    /// Bottom generalized eigenvector that was skipped, `(1/n) v^T D v = 1` scale.
    pub skipped: DVector<f64>,
}

/// Alternate nonnegative weights and the degree-constrained embedding `M y = lambda D y`.
///
/// Neighbors come from the input for the first pass and from the current embedding after that.
pub fn iterative_lle(x: &DataMatrix, k: usize, p: usize, outer_iters: usize, eps_scale: f64) -> Result<IterativeFit> {
    if outer_iters < 1 {
        return invalid("iterative LLE needs at least one outer iteration");
    }
    let n = x.len();
    check_p(p, n)?;
    let mut graph = knn_graph(&pairwise_euclidean(x), k)?;
    let mut fit = None;
    for it in 0..outer_iters {
        if it > 0 {
            let prev: &IterativeFit = fit.as_ref().expect("set by the previous pass");
            let ye = DataMatrix::new(prev.embedding.y.transpose())?;
            graph = knn_graph(&pairwise_euclidean(&ye), k)?;
        }
        let w = scatter_weights(&nonnegative_weights(x, &graph, eps_scale)?, &graph)?;
        let m = embedding_matrix(&w);
        let degree = degree_diagonal(&w);
        let dm = DMatrix::from_diagonal(&DVector::from_vec(degree.clone()));
        let e = generalized_sym_eigen(&m.m, &dm)?;
        let embedding = EmbeddingMatrix { scale: ScaleConvention::DegreeWeighted, ..take_columns(&e, 1, p) };
        let skipped = e.vectors.column(0) * (n as f64).sqrt();
        fit = Some(IterativeFit { graph: graph.clone(), w, m, degree, embedding, skipped });
    }
    Ok(fit.expect("at least one pass"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::swiss_roll;
    use crate::lle_core::lle_fit;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_data(d: usize, n: usize, seed: u64) -> DataMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DataMatrix::new(DMatrix::from_fn(d, n, |_, _| rng.gen_range(-1.0..1.0))).unwrap()
    }

    #[test]
    fn constants_at_two_dims() {
        let (c1, c2) = deformation_constants(2);
        let g15 = std::f64::consts::PI.sqrt() / 2.0;
        assert!((c1 - 2f64.sqrt() * g15 / 2.0).abs() < 1e-12);
        assert!((c2 - 2.0 * c1).abs() < 1e-12);
    }

    #[test]
    fn deformed_isotropic_is_local_rescale() {
        // a point with four neighbors at the corners of a square: offsets cancel
        let x = DataMatrix::from_points(&[vec![0.0, 0.0], vec![1.0, 0.0], vec![-1.0, 0.0], vec![0.0, 1.0], vec![0.0, -1.0]]).unwrap();
        let dd = deformed_distance(&x, 4).unwrap();
        assert!(dd.stats.g[0].norm() < 1e-15);
        let (_, c2) = deformation_constants(2);
        let l0 = dd.stats.l[0];
        for j in 1..5 {
            let own = 1.0 * c2 / l0;
            assert!(dd.d.get(0, j) >= own - 1e-12);
        }
    }

    #[test]
    fn deformed_matches_straight_line_oracle() {
        let x = random_data(2, 6, 3);
        let k = 3;
        let dd = deformed_distance(&x, k).unwrap();
        let (c1, c2) = deformation_constants(2);
        let pt = |i: usize| x.point(i).into_owned();
        let mut raw = DMatrix::zeros(6, 6);
        for i in 0..6 {
            let mut order: Vec<usize> = (0..6).filter(|&j| j != i).collect();
            order.sort_by(|&a, &b| (pt(a) - pt(i)).norm().total_cmp(&(pt(b) - pt(i)).norm()));
            let nb = &order[..k];
            let g: DVector<f64> = nb.iter().map(|&j| pt(j) - pt(i)).fold(DVector::zeros(2), |a, v| a + v) / k as f64;
            let l = nb.iter().map(|&j| (pt(j) - pt(i)).norm()).sum::<f64>() / k as f64;
            let tau = &g / g.norm();
            let (a, b) = (l / c2, g.norm() / c1);
            for j in 0..6 {
                if j != i {
                    let diff = pt(i) - pt(j);
                    raw[(i, j)] = diff.norm() / (a + b * diff.dot(&tau) / diff.norm()).max(1e-12);
                }
            }
        }
        for i in 0..6 {
            for j in 0..6 {
                let expect = raw[(i, j)].max(raw[(j, i)]);
                assert!((dd.d.get(i, j) - expect).abs() < 1e-12 * (1.0 + expect));
            }
        }
    }

    #[test]
    fn occurrence_cases() {
        let x = swiss_roll(60, 0.2, 4).unwrap().data;
        let g = knn_graph(&pairwise_euclidean(&x), 8).unwrap();
        let plain = reconstruction_weights(&x, &g, 1e-3).unwrap();
        let even = occurrence_weights(&x, &g, &vec![0.4; 60], 1e-3).unwrap();
        for i in 0..60 {
            assert!((&plain.rows[i] - &even.rows[i]).amax() < 1e-10);
        }
        let gu = knn_graph(&occurrence_distance(&x, &vec![0.4; 60]).unwrap(), 8).unwrap();
        assert_eq!(gu.lists(), g.lists());

        let mut probs = vec![1.0; 60];
        probs[7] = 1e-3;
        let gw = knn_graph(&occurrence_distance(&x, &probs).unwrap(), 8).unwrap();
        let count = |g: &NeighborGraph| (0..60).filter(|&i| g.neighbors(i).contains(&7)).count();
        assert!(count(&gw) < count(&g));
        probs[3] = 0.0;
        assert!(occurrence_distance(&x, &probs).is_err());
    }

    #[test]
    fn adjust_cases() {
        let x = random_data(2, 12, 5);
        let g = knn_graph(&pairwise_euclidean(&x), 4).unwrap();
        let w = reconstruction_weights(&x, &g, 1e-3).unwrap();
        let labels: Vec<usize> = (0..12).map(|i| i % 2).collect();
        let a0 = adjust_weights_supervised(&w, &g, &labels, 0.0).unwrap();
        for i in 0..12 {
            assert!((&a0.rows[i] - &w.rows[i]).amax() < 1e-12);
        }

        let same = vec![0; 12];
        let a = adjust_weights_supervised(&w, &g, &same, 0.1).unwrap();
        for i in 0..12 {
            let expect = w.rows[i].map(|v| (v + 0.1) / 1.4);
            assert!((&a.rows[i] - expect).amax() < 1e-12);
        }

        let a = adjust_weights_supervised(&w, &g, &labels, 0.05).unwrap();
        for i in 0..12 {
            let nb = g.neighbors(i);
            let share = |r: &DVector<f64>| (0..4).filter(|&c| labels[nb[c]] == labels[i]).map(|c| r[c]).sum::<f64>() / r.sum();
            let mixed = (0..4).any(|c| labels[nb[c]] == labels[i]) && (0..4).any(|c| labels[nb[c]] != labels[i]);
            let before = share(&w.rows[i]);
            if mixed && (0.0..=1.0).contains(&before) {
                assert!(share(&a.rows[i]) > before);
            }
            assert!((a.rows[i].sum() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn householder_reflects_onto_ones() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for s in 1..6 {
            let v = DVector::from_fn(s, |_, _| rng.gen_range(-1.0..1.0));
            let alpha = v.norm() / (s as f64).sqrt();
            let j = householder_to_ones(&v, alpha);
            assert!((&j * j.transpose() - DMatrix::identity(s, s)).amax() < 1e-10);
            assert!((&j * &v - DVector::from_element(s, alpha)).amax() < 1e-10);
        }
    }

    #[test]
    fn mlle_with_one_null_direction_reduces_to_lle() {
        // k = d + 1 neighbors in general position: the raw Gram has a single null vector
        let x = random_data(2, 40, 7);
        let g = knn_graph(&pairwise_euclidean(&x), 3).unwrap();
        let eps = 1e-13;
        let m = mlle_matrix(&x, &g, 2, SRule::Fixed(1), eps).unwrap().m;
        let plain = embedding_matrix(&scatter_weights(&reconstruction_weights(&x, &g, eps).unwrap(), &g).unwrap()).m;
        assert!((m - plain).amax() < 1e-8);
    }

    #[test]
    fn mlle_matrix_psd_and_rows_sum() {
        let x = swiss_roll(80, 0.1, 8).unwrap().data;
        let g = knn_graph(&pairwise_euclidean(&x), 9).unwrap();
        let m = mlle_matrix(&x, &g, 2, SRule::KMinusP, 1e-3).unwrap().m;
        let e = sym_eigen(&m).unwrap();
        assert!(e.values[0] > -1e-10 * e.values.max());
        assert!((&m * DVector::from_element(80, 1.0)).amax() < 1e-9);
        let y = mlle(&x, 9, 2, SRule::KMinusP, 1e-3).unwrap();
        assert!((y.y.transpose() * &y.y / 80.0 - DMatrix::identity(2, 2)).amax() < 1e-8);
    }

    #[test]
    fn nnls_matches_sign_pattern_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..40 {
            let a = DMatrix::from_fn(3, 2, |_, _| rng.gen_range(-1.0..1.0));
            let b = DVector::from_fn(3, |_, _| rng.gen_range(-1.0..1.0));
            let w = nnls(&a, &b, 1e-12).unwrap();
            let mut best = (b.norm_squared(), DVector::zeros(2));
            for set in [vec![0], vec![1], vec![0, 1]] {
                let z = pseudo_inverse(&a.select_columns(&set), 1e-12).unwrap() * &b;
                if z.iter().all(|&v| v >= 0.0) {
                    let mut full = DVector::zeros(2);
                    for (c, &j) in set.iter().enumerate() {
                        full[j] = z[c];
                    }
                    let r = (&b - &a * &full).norm_squared();
                    if r < best.0 {
                        best = (r, full);
                    }
                }
            }
            assert!((&w - &best.1).amax() < 1e-10, "{w} vs {}", best.1);
            assert!(w.iter().all(|&v| v >= -1e-12));
        }
    }

    #[test]
    fn nnls_inactive_constraints_give_least_squares() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let truth = DVector::from_vec(vec![0.3, 0.7]);
        let w = nnls(&a, &(&a * &truth), 1e-12).unwrap();
        assert!((w - truth).amax() < 1e-12);
    }

    #[test]
    fn iterative_lle_generalized_residual() {
        let x = swiss_roll(120, 0.1, 10).unwrap().data;
        for iters in [1, 3] {
            let fit = iterative_lle(&x, 8, 2, iters, 1e-3).unwrap();
            let d = DMatrix::from_diagonal(&DVector::from_vec(fit.degree.clone()));
            let y = &fit.embedding.y;
            assert!((y.transpose() * &d * y / 120.0 - DMatrix::identity(2, 2)).amax() < 1e-8);
            let mf = fit.m.m.norm();
            for c in 0..2 {
                let col = y.column(c);
                let r = &fit.m.m * col - &d * col * fit.embedding.eigenvalues[c];
                assert!(r.norm() <= 1e-8 * mf * col.norm());
            }
            assert!((y.transpose() * &d * &fit.skipped).amax() < 1e-7 * 120.0);
        }
        let plain = lle_fit(&x, 8, 2, 1e-3).unwrap();
        assert_eq!(plain.graph.len(), 120);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;
        use rand::Rng;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(16))]
            #[test]
            fn deformed_distance_is_valid(seed in any::<u64>(), k in 1usize..6) {
                let x = random_data(3, 15, seed);
                let d = deformed_distance(&x, k).unwrap().d;
                let m = d.matrix();
                prop_assert!((m - m.transpose()).amax() == 0.0);
                prop_assert!(m.iter().all(|&v| v >= 0.0));
            }

            #[test]
            fn nnls_nonnegative(seed in any::<u64>(), k in 1usize..8) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let a = DMatrix::from_fn(3, k, |_, _| rng.gen_range(-1.0..1.0));
                let b = DVector::from_fn(3, |_, _| rng.gen_range(-1.0..1.0));
                let w = nnls(&a, &b, 1e-10).unwrap();
                prop_assert!(w.iter().all(|&v| v >= -1e-12));
                prop_assert!((&b - &a * &w).norm() <= b.norm() + 1e-12);
            }

            #[test]
            fn occurrence_weights_sum_to_one(seed in any::<u64>()) {
                let x = random_data(3, 20, seed);
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 7);
                let probs: Vec<f64> = (0..20).map(|_| rng.gen_range(0.05..1.0)).collect();
                let g = knn_graph(&occurrence_distance(&x, &probs).unwrap(), 5).unwrap();
                let w = occurrence_weights(&x, &g, &probs, 1e-3).unwrap();
                prop_assert!(w.rows.iter().all(|r| (r.sum() - 1.0).abs() < 1e-8));
            }
        }
    }
}
