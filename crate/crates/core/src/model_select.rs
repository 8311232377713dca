//! Choosing the neighbor count: residual variance, local Procrustes
//! statistics, preservation neighborhood error and per-point local
//! neighborhood selection.

use nalgebra::DMatrix;

use crate::dataset::DataMatrix;
use crate::error::{invalid, shape, LleError, Result};
use crate::lle_core::{lle, reconstruction_error, reconstruction_weights, scatter_weights};
use crate::neighbors::{geodesic_over, is_connected, knn_graph, pairwise_euclidean, DistanceMatrix, NeighborGraph};
use crate::numlin::svd;

/// Candidate range and embedding settings for a k scan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KSearchSpec {
    pub k_min: usize,
    pub k_max: usize,
    pub hierarchical: bool,
    pub p: usize,
    pub eps_scale: f64,
}

impl KSearchSpec {
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.k_min < 1 || self.k_min > self.k_max || self.k_max + 1 > n {
            return invalid(format!("need 1 <= k_min <= k_max <= n - 1, got [{}, {}] for n = {n}", self.k_min, self.k_max));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Criterion {
    ResidualVariance,
    Procrustes,
    Pne,
}

/// Neighbor index sets of one point: input-space `eta`, embedding-space `beta`
/// and the discord `gamma = beta \ eta`. Embedding/input coordinates of these
/// sets (`phi`, `theta`) are read off by index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborSets {
    pub eta: Vec<usize>,
    pub beta: Vec<usize>,
    pub gamma: Vec<usize>,
}

impl NeighborSets {
    pub fn of(i: usize, gx: &NeighborGraph, gy: &NeighborGraph) -> Self {
        let eta = gx.neighbors(i).to_vec();
        let beta = gy.neighbors(i).to_vec();
        let gamma = beta.iter().copied().filter(|j| !eta.contains(j)).collect();
        Self { eta, beta, gamma }
    }

    /// `k'_i`.
    pub fn discord(&self) -> usize {
        self.gamma.len()
    }
}

fn upper(d: &DistanceMatrix) -> Vec<f64> {
    let n = d.len();
    let mut v = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for j in 0..n {
        for i in 0..j {
            v.push(d.get(i, j));
        }
    }
    v
}

/// `1 - rho^2` over the strict upper triangles.
pub fn residual_variance(dx: &DistanceMatrix, dy: &DistanceMatrix) -> Result<f64> {
    if dx.len() != dy.len() {
        return shape(format!("distance matrices over {} and {} points", dx.len(), dy.len()));
    }
    let (a, b) = (upper(dx), upper(dy));
    let m = a.len() as f64;
    if a.is_empty() {
        return invalid("residual variance needs at least two points");
    }
    let (ma, mb) = (a.iter().sum::<f64>() / m, b.iter().sum::<f64>() / m);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(&b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if !(saa > 0.0 && sbb > 0.0) {
        return Err(LleError::Degenerate("correlation undefined: a distance matrix has constant entries".into()));
    }
    let rho = sab / (saa.sqrt() * sbb.sqrt());
    Ok((1.0 - rho * rho).max(0.0))
}

fn center_rows(a: &DMatrix<f64>) -> DMatrix<f64> {
    let mut c = a.clone();
    let k = a.nrows() as f64;
    for mut col in c.column_iter_mut() {
        let m = col.sum() / k;
        col.add_scalar_mut(-m);
    }
    c
}

/// `||H (X^T - Y A^T)||_F^2` with the optimal orthogonal `A` from `svd(X H Y)`.
///
/// `x_local` holds one point per column (d x k); `y_local` one per row (k x p).
pub fn procrustes_statistic(x_local: &DMatrix<f64>, y_local: &DMatrix<f64>) -> Result<f64> {
    let k = x_local.ncols();
    if y_local.nrows() != k {
        return shape(format!("{k} input points but {} embedded points", y_local.nrows()));
    }
    if k < 2 {
        return invalid("Procrustes statistic needs at least two points");
    }
    let xc = center_rows(&x_local.transpose());
    let yc = center_rows(y_local);
    let s = svd(&(xc.transpose() * &yc))?;
    let a = &s.u * s.v.transpose();
    Ok((xc - yc * a.transpose()).norm_squared())
}

/// `(1/n) sum_i P(X_i, Y_i) / ||H X_i^T||^2` over each point's input neighbors.
pub fn normalized_procrustes(x: &DataMatrix, y: &DMatrix<f64>, g: &NeighborGraph) -> Result<f64> {
    let n = x.len();
    if y.nrows() != n || g.len() != n {
        return shape("data, embedding and graph must cover the same points");
    }
    let mut total = 0.0;
    for i in 0..n {
        let nb = g.neighbors(i);
        let xi = x.matrix().select_columns(nb);
        let yi = y.select_rows(nb);
        let denom = center_rows(&xi.transpose()).norm_squared();
        if denom > 0.0 {
            total += procrustes_statistic(&xi, &yi)? / denom;
        }
    }
    Ok(total / n as f64)
}

/// Preservation neighborhood error; a point with an empty discord set contributes
/// only its first summand.
pub fn pne(x: &DataMatrix, y: &DMatrix<f64>, gx: &NeighborGraph, gy: &NeighborGraph) -> Result<f64> {
    let n = x.len();
    if y.nrows() != n || gx.len() != n || gy.len() != n {
        return shape("data, embedding and graphs must cover the same points");
    }
    let dx = |i: usize, j: usize| (x.point(i) - x.point(j)).norm();
    let dy = |i: usize, j: usize| (y.row(i) - y.row(j)).norm();
    let mut total = 0.0;
    for i in 0..n {
        let s = NeighborSets::of(i, gx, gy);
        let k = s.eta.len() as f64;
        let near: f64 = s.eta.iter().map(|&j| (dx(i, j) - dy(i, j)).powi(2)).sum::<f64>() / k;
        let far = if s.discord() == 0 {
            0.0
        } else {
            s.gamma.iter().map(|&j| (dx(i, j) - dy(i, j)).powi(2)).sum::<f64>() / s.discord() as f64
        };
        total += near + far;
    }
    Ok(total / (2.0 * n as f64))
}

/// Score of one embedding under a criterion.
pub fn score_embedding(x: &DataMatrix, y: &DMatrix<f64>, k: usize, criterion: Criterion) -> Result<f64> {
    let dx = pairwise_euclidean(x);
    let dy = pairwise_euclidean(&DataMatrix::new(y.transpose())?);
    match criterion {
        Criterion::ResidualVariance => residual_variance(&dx, &dy),
        Criterion::Procrustes => normalized_procrustes(x, y, &knn_graph(&dx, k)?),
        Criterion::Pne => pne(x, y, &knn_graph(&dx, k)?, &knn_graph(&dy, k)?),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KSelection {
    pub k: usize,
    /// `(k, score)` for every evaluated candidate, ascending in k.
    pub table: Vec<(usize, f64)>,
}

impl KSelection {
    pub fn csv(&self) -> String {
        let mut s = String::from("k,score\n");
        for (k, v) in &self.table {
            s.push_str(&format!("{k},{v:?}\n"));
        }
        s
    }
}

/// Candidates where the reconstruction error is a strict local minimum in k.
pub fn hierarchical_candidates(x: &DataMatrix, spec: &KSearchSpec) -> Result<Vec<usize>> {
    spec.validate(x.len())?;
    let d = pairwise_euclidean(x);
    let lo = spec.k_min.saturating_sub(1).max(1);
    let hi = (spec.k_max + 1).min(x.len() - 1);
    let mut eps = Vec::new();
    for k in lo..=hi {
        let g = knn_graph(&d, k)?;
        let w = scatter_weights(&reconstruction_weights(x, &g, spec.eps_scale)?, &g)?;
        eps.push(reconstruction_error(x, &w));
    }
    let at = |k: usize| eps[k - lo];
    Ok((spec.k_min..=spec.k_max)
        .filter(|&k| k > lo && k < hi && at(k) < at(k - 1) && at(k) < at(k + 1))
        .collect())
}

/// Argmin of the criterion over the candidate k; ties go to the smallest k.
pub fn select_k(x: &DataMatrix, spec: &KSearchSpec, criterion: Criterion) -> Result<KSelection> {
    spec.validate(x.len())?;
    let mut ks: Vec<usize> = (spec.k_min..=spec.k_max).collect();
    if spec.hierarchical {
        let c = hierarchical_candidates(x, spec)?;
        if c.is_empty() {
            log::warn!("reconstruction error has no interior local minimum in [{}, {}]; scanning every k", spec.k_min, spec.k_max);
        } else {
            ks = c;
        }
    }
    let mut table = Vec::with_capacity(ks.len());
    for k in ks {
        let y = lle(x, k, spec.p, spec.eps_scale)?.y;
        table.push((k, score_embedding(x, &y, k, criterion)?));
    }
    let best = table
        .iter()
        .fold(None::<(usize, f64)>, |acc, &(k, v)| match acc {
            Some((_, bv)) if !(v < bv) => acc,
            _ if v.is_nan() => acc,
            _ => Some((k, v)),
        })
        .ok_or_else(|| LleError::Degenerate("every candidate k produced an undefined score".into()))?;
    Ok(KSelection { k: best.0, table })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LnsResult {
    pub k_min: usize,
    pub k_max: usize,
    /// Candidate values `k_min + 1 ..= k_max`, one per column of `v`.
    pub candidates: Vec<usize>,
    /// `n x candidates` linearity conservation matrix.
    pub v: DMatrix<f64>,
    pub k_per_point: Vec<usize>,
}

/// Local neighborhood selection: per-point k from Euclidean/geodesic agreement.
///
/// Geodesics run over the `k_min` graph. `V(i, j) = 1 - |eta^D ∩ eta^Dg| / k(j)`,
/// and ties pick the largest k.
pub fn lns(x: &DataMatrix, k_cap: Option<usize>) -> Result<LnsResult> {
    let n = x.len();
    if n < 3 {
        return invalid(format!("local neighborhood selection needs at least 3 points, got {n}"));
    }
    let d = pairwise_euclidean(x);
    let (k_min, g) = (1..n)
        .map(|k| knn_graph(&d, k).map(|g| (k, g)))
        .find(|r| r.as_ref().map_or(true, |(_, g)| is_connected(g)))
        .unwrap_or_else(|| Err(LleError::Disconnected("no k gives a connected neighbor graph".into())))?;
    if k_min + 1 > n - 1 {
        return Err(LleError::Disconnected(format!("graph connects only at k = {k_min}; no larger candidate exists")));
    }
    let edges = g.edge_count();
    let raw = (n * n) / (k_min * edges);
    let mut k_max = raw.clamp(k_min + 1, n - 1);
    if let Some(cap) = k_cap {
        k_max = k_max.min(cap.max(k_min + 1));
    }
    let dg = geodesic_over(&d, &g)?;
    let candidates: Vec<usize> = (k_min + 1..=k_max).collect();
    let mut v = DMatrix::zeros(n, candidates.len());
    for (j, &k) in candidates.iter().enumerate() {
        let ge = knn_graph(&d, k)?;
        let gg = knn_graph(&dg, k)?;
        for i in 0..n {
            let common = ge.neighbors(i).iter().filter(|a| gg.neighbors(i).contains(a)).count();
            v[(i, j)] = 1.0 - common as f64 / k as f64;
        }
    }
    let k_per_point = (0..n)
        .map(|i| {
            let mut best = 0;
            for j in 1..candidates.len() {
                if v[(i, j)] <= v[(i, best)] {
                    best = j;
                }
            }
            candidates[best]
        })
        .collect();
    Ok(LnsResult { k_min, k_max, candidates, v, k_per_point })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::swiss_roll;
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    use rand::Rng as _;
    use rand_chacha::ChaCha8Rng;

    fn dm(rows: &[Vec<f64>]) -> DataMatrix {
        DataMatrix::from_points(rows).unwrap()
    }

    #[test]
    fn residual_variance_cases() {
        let x = swiss_roll(40, 0.1, 1).unwrap().data;
        let d = pairwise_euclidean(&x);
        let scaled = DistanceMatrix::new(d.matrix() * 3.5).unwrap();
        assert!(residual_variance(&d, &scaled).unwrap() < 1e-12);

        let n = 100;
        let y = swiss_roll(n, 0.1, 2).unwrap().data;
        let dy = pairwise_euclidean(&y);
        let mut v = upper(&dy);
        v.shuffle(&mut ChaCha8Rng::seed_from_u64(3));
        let mut sh = DMatrix::zeros(n, n);
        let mut it = v.into_iter();
        for j in 0..n {
            for i in 0..j {
                let e = it.next().unwrap();
                sh[(i, j)] = e;
                sh[(j, i)] = e;
            }
        }
        assert!(residual_variance(&dy, &DistanceMatrix::new(sh).unwrap()).unwrap() > 0.8);

        // three points: upper entries (1, 2, 3) against (2, 1, 4)
        let a = DistanceMatrix::new(DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 2.0, 1.0, 0.0, 3.0, 2.0, 3.0, 0.0])).unwrap();
        let b = DistanceMatrix::new(DMatrix::from_row_slice(3, 3, &[0.0, 2.0, 1.0, 2.0, 0.0, 4.0, 1.0, 4.0, 0.0])).unwrap();
        // deviations (-1, 0, 1) and (-1/3, -4/3, 5/3): cov 2, var 2 and 14/3
        let rho2 = 4.0 / (2.0 * 14.0 / 3.0);
        assert!((residual_variance(&a, &b).unwrap() - (1.0 - rho2)).abs() < 1e-12);

        let flat = DistanceMatrix::new(DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 1.0, 1.0, 0.0, 1.0, 1.0, 1.0, 0.0])).unwrap();
        assert!(residual_variance(&a, &flat).is_err());
    }

    fn rotation3(seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(3, 3, |_, _| rng.gen_range(-1.0..1.0)).qr().q()
    }

    #[test]
    fn procrustes_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = DMatrix::from_fn(3, 6, |_, _| rng.gen_range(-1.0..1.0));
        let r = rotation3(5);
        let y = (&r * &x).transpose().map(|v| v + 2.0);
        assert!(procrustes_statistic(&x, &y).unwrap() < 1e-10);

        let zero = DMatrix::zeros(6, 2);
        let hx = center_rows(&x.transpose()).norm_squared();
        assert!((procrustes_statistic(&x, &zero).unwrap() - hx).abs() < 1e-12);

        // closed form: ||HX||^2 + ||HY||^2 - 2 * nuclear norm of X^T H Y
        let y2 = DMatrix::from_fn(6, 2, |_, _| rng.gen_range(-1.0..1.0));
        let hy = center_rows(&y2);
        let nuc: f64 = (center_rows(&x.transpose()).transpose() * &hy).singular_values().iter().sum();
        let expect = hx + hy.norm_squared() - 2.0 * nuc;
        let got = procrustes_statistic(&x, &y2).unwrap();
        assert!((got - expect).abs() < 1e-10);
        for s in 0..200 {
            let q = rotation3(100 + s).columns(0, 2).into_owned();
            let p = (center_rows(&x.transpose()) - &hy * q.transpose()).norm_squared();
            assert!(got <= p + 1e-12);
        }
        assert!(procrustes_statistic(&x.columns(0, 1).into_owned(), &zero.rows(0, 1).into_owned()).is_err());
    }

    #[test]
    fn pne_cases() {
        let x = swiss_roll(30, 0.1, 6).unwrap().data;
        let y = x.matrix().transpose();
        let d = pairwise_euclidean(&x);
        let g = knn_graph(&d, 5).unwrap();
        assert!(pne(&x, &y, &g, &g).unwrap() < 1e-24);

        let yb = DMatrix::from_fn(30, 1, |i, _| (i as f64).sin());
        let dy = pairwise_euclidean(&DataMatrix::new(yb.transpose()).unwrap());
        let full_x = knn_graph(&d, 29).unwrap();
        let full_y = knn_graph(&dy, 29).unwrap();
        for i in 0..30 {
            assert_eq!(NeighborSets::of(i, &full_x, &full_y).discord(), 0);
        }
    }

    #[test]
    fn pne_matches_set_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = DataMatrix::new(DMatrix::from_fn(3, 8, |_, _| rng.gen_range(-1.0..1.0))).unwrap();
        let y = DMatrix::from_fn(8, 2, |_, _| rng.gen_range(-1.0..1.0));
        let k = 3;
        let gx = knn_graph(&pairwise_euclidean(&x), k).unwrap();
        let gy = knn_graph(&pairwise_euclidean(&DataMatrix::new(y.transpose()).unwrap()), k).unwrap();
        let got = pne(&x, &y, &gx, &gy).unwrap();

        let mut total = 0.0;
        for i in 0..8 {
            let mut order_x: Vec<usize> = (0..8).filter(|&j| j != i).collect();
            order_x.sort_by(|&a, &b| (x.point(i) - x.point(a)).norm().total_cmp(&(x.point(i) - x.point(b)).norm()));
            let mut order_y: Vec<usize> = (0..8).filter(|&j| j != i).collect();
            order_y.sort_by(|&a, &b| (y.row(i) - y.row(a)).norm().total_cmp(&(y.row(i) - y.row(b)).norm()));
            let eta = &order_x[..k];
            let gamma: Vec<usize> = order_y[..k].iter().copied().filter(|j| !eta.contains(j)).collect();
            let term = |j: usize| ((x.point(i) - x.point(j)).norm() - (y.row(i) - y.row(j)).norm()).powi(2);
            total += eta.iter().map(|&j| term(j)).sum::<f64>() / k as f64;
            if !gamma.is_empty() {
                total += gamma.iter().map(|&j| term(j)).sum::<f64>() / gamma.len() as f64;
            }
        }
        assert!((got - total / 16.0).abs() < 1e-12);
    }

    #[test]
    fn select_k_picks_member_and_hierarchical_subset() {
        let x = swiss_roll(150, 0.05, 8).unwrap().data;
        let spec = KSearchSpec { k_min: 5, k_max: 14, hierarchical: false, p: 2, eps_scale: 1e-3 };
        let full = select_k(&x, &spec, Criterion::ResidualVariance).unwrap();
        assert_eq!(full.table.len(), 10);
        assert!((5..=14).contains(&full.k));
        let best = full.table.iter().map(|e| e.1).fold(f64::INFINITY, f64::min);
        assert_eq!(full.table.iter().find(|e| e.1 == best).unwrap().0, full.k);
        assert!(full.csv().starts_with("k,score\n5,"));

        let h = hierarchical_candidates(&x, &spec).unwrap();
        assert!(h.len() < 10);
        let hs = select_k(&x, &KSearchSpec { hierarchical: true, ..spec }, Criterion::Pne).unwrap();
        assert!(hs.table.iter().all(|e| (5..=14).contains(&e.0)));
        assert!(select_k(&x, &KSearchSpec { k_min: 9, k_max: 4, ..spec }, Criterion::Pne).is_err());
    }

    #[test]
    fn lns_on_five_points_matches_hand_sets() {
        // points on a bent line: 0 - 1 - 2 - 3 with 4 far to the side of 0
        let x = dm(&[vec![0.0, 0.0], vec![1.0, 0.0], vec![2.0, 0.0], vec![3.0, 0.0], vec![0.0, 2.5]]);
        let r = lns(&x, None).unwrap();
        // k = 1: {0-1, 1-0/2, 2-1/3, 3-2, 4-0} (ties to lower index) is connected
        assert_eq!(r.k_min, 1);
        // undirected edges {01, 12, 23, 04}: 25 / (1 * 4) = 6, clamped to n - 1 = 4
        assert_eq!(r.k_max, 4);
        assert_eq!(r.candidates, vec![2, 3, 4]);
        let d = pairwise_euclidean(&x);
        let dg = geodesic_over(&d, &knn_graph(&d, 1).unwrap()).unwrap();
        // geodesics: 4 reaches everything through 0, so d_g(4, j) = 2.5 + j
        assert!((dg.get(4, 3) - 5.5).abs() < 1e-12);
        // point 4: Euclidean order 0 (2.5), 1 (2.69), 2 (3.20), 3 (3.91); geodesic order 0, 1, 2, 3
        // point 0: Euclidean order 1, 2, 4, 3; geodesic order 1, 2, 4 (2.5), 3 (3)
        // point 2: Euclidean order 1, 3, 0, 4; geodesic order 1, 3, 0, 4
        // point 3: Euclidean 2, 1, 0, 4; geodesic 2, 1, 0, 4
        // point 1: Euclidean 0, 2, 3, 4 (2.69 < 3? no: d(1,3)=2, d(1,4)=2.69); geodesic 0, 2, 3 (2), 4 (3.5)
        for i in 0..5 {
            for j in 0..3 {
                assert_eq!(r.v[(i, j)], 0.0, "V({i}, {j})");
            }
            assert_eq!(r.k_per_point[i], 4);
        }
        assert!(lns(&dm(&[vec![0.0], vec![1.0]]), None).is_err());
    }

    #[test]
    fn lns_exhaustive_five_point_sets() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = DataMatrix::new(DMatrix::from_fn(2, 5, |_, _| rng.gen_range(-1.0..1.0))).unwrap();
        let r = lns(&x, None).unwrap();
        let d = pairwise_euclidean(&x);
        let g = knn_graph(&d, r.k_min).unwrap();
        let dg = geodesic_over(&d, &g).unwrap();
        let order = |m: &DistanceMatrix, i: usize| {
            let mut o: Vec<usize> = (0..5).filter(|&j| j != i).collect();
            o.sort_by(|&a, &b| m.get(i, a).total_cmp(&m.get(i, b)).then(a.cmp(&b)));
            o
        };
        for (j, &k) in r.candidates.iter().enumerate() {
            for i in 0..5 {
                let (e, q) = (order(&d, i), order(&dg, i));
                let common = e[..k].iter().filter(|a| q[..k].contains(a)).count();
                assert_eq!(r.v[(i, j)], 1.0 - common as f64 / k as f64);
            }
        }
    }

    #[test]
    fn lns_shortcuts_on_rolled_sheet_lower_k() {
        let x = swiss_roll(400, 0.0, 11).unwrap().data;
        let r = lns(&x, Some(40)).unwrap();
        assert!(r.k_per_point.iter().all(|k| (r.k_min + 1..=r.k_max).contains(k)));
        assert!(r.v.iter().any(|&v| v > 0.0));
        assert!(r.k_per_point.iter().any(|&k| k < r.k_max), "k_max = {}", r.k_max);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(24))]
            #[test]
            fn residual_variance_bounded_and_scale_free(seed in any::<u64>(), c in 0.1f64..10.0) {
                let x = swiss_roll(20, 0.3, seed).unwrap().data;
                let y = swiss_roll(20, 0.3, seed.wrapping_add(1)).unwrap().data;
                let (dx, dy) = (pairwise_euclidean(&x), pairwise_euclidean(&y));
                let r = residual_variance(&dx, &dy).unwrap();
                prop_assert!((-1e-12..=1.0 + 1e-12).contains(&r));
                let r2 = residual_variance(&DistanceMatrix::new(dx.matrix() * c).unwrap(), &dy).unwrap();
                prop_assert!((r - r2).abs() < 1e-10);
            }

            #[test]
            fn procrustes_invariant_to_rigid_motion(seed in any::<u64>(), t in -5.0f64..5.0) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let x = DMatrix::from_fn(3, 7, |_, _| rng.gen_range(-1.0..1.0));
                let y = DMatrix::from_fn(7, 2, |_, _| rng.gen_range(-1.0..1.0));
                let moved = (rotation3(seed ^ 1) * &x).map(|v| v + t);
                let a = procrustes_statistic(&x, &y).unwrap();
                let b = procrustes_statistic(&moved, &y).unwrap();
                prop_assert!((a - b).abs() < 1e-8);
            }

            #[test]
            fn pne_nonnegative(seed in any::<u64>(), k in 1usize..6) {
                let x = swiss_roll(15, 0.3, seed).unwrap().data;
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let y = DMatrix::from_fn(15, 2, |_, _| rng.gen_range(-1.0..1.0));
                let gx = knn_graph(&pairwise_euclidean(&x), k).unwrap();
                let gy = knn_graph(&pairwise_euclidean(&DataMatrix::new(y.transpose()).unwrap()), k).unwrap();
                prop_assert!(pne(&x, &y, &gx, &gy).unwrap() >= 0.0);
            }
        }
    }
}
