//! Distance matrices, k-nearest-neighbor graphs and graph geodesics.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

use nalgebra::{DMatrix, DVectorView};

use crate::dataset::DataMatrix;
use crate::error::{invalid, shape, LleError, Result};

/// Symmetric, non-negative distances with a zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    d: DMatrix<f64>,
}

impl DistanceMatrix {
    pub fn new(d: DMatrix<f64>) -> Result<Self> {
        if !d.is_square() {
            return shape(format!("distance matrix must be square, got {}x{}", d.nrows(), d.ncols()));
        }
        let n = d.nrows();
        let scale = d.iter().filter(|v| v.is_finite()).fold(0.0_f64, |m, v| m.max(v.abs()));
        for i in 0..n {
            if d[(i, i)] != 0.0 {
                return invalid(format!("distance matrix diagonal entry {i} is {}", d[(i, i)]));
            }
            for j in 0..n {
                let v = d[(i, j)];
                if v.is_nan() || v < 0.0 {
                    return invalid(format!("distance ({i}, {j}) = {v} is not a non-negative number"));
                }
                if (v - d[(j, i)]).abs() > 1e-12 * scale {
                    return invalid(format!("distance matrix is not symmetric at ({i}, {j})"));
                }
            }
        }
        Ok(Self { d })
    }

    pub(crate) fn from_trusted(d: DMatrix<f64>) -> Self {
        Self { d }
    }

    pub fn len(&self) -> usize {
        self.d.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.d.nrows() == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.d[(i, j)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.d
    }
}

/// Neighbor lists; `neighbors(i)` is sorted by distance, ties by index.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborGraph {
    lists: Vec<Vec<usize>>,
}

impl NeighborGraph {
    pub fn from_lists(lists: Vec<Vec<usize>>) -> Result<Self> {
        let n = lists.len();
        for (i, l) in lists.iter().enumerate() {
            for &j in l {
                if j >= n || j == i {
                    return invalid(format!("neighbor list of point {i} contains invalid index {j}"));
                }
            }
        }
        Ok(Self { lists })
    }

    pub fn len(&self) -> usize {
        self.lists.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lists.is_empty()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.lists[i]
    }

    pub fn k_of(&self, i: usize) -> usize {
        self.lists[i].len()
    }

    pub fn lists(&self) -> &[Vec<usize>] {
        &self.lists
    }

    /// Undirected adjacency lists of the symmetrized graph.
    pub fn symmetrized(&self) -> Vec<Vec<usize>> {
        let n = self.len();
        let mut adj = vec![Vec::new(); n];
        for (i, l) in self.lists.iter().enumerate() {
            for &j in l {
                adj[i].push(j);
                adj[j].push(i);
            }
        }
        for a in adj.iter_mut() {
            a.sort_unstable();
            a.dedup();
        }
        adj
    }

    /// Number of undirected edges after symmetrization.
    pub fn edge_count(&self) -> usize {
        self.symmetrized().iter().map(|a| a.len()).sum::<usize>() / 2
    }
}

pub fn pairwise_euclidean(x: &DataMatrix) -> DistanceMatrix {
    let n = x.len();
    let m = x.matrix();
    let mut d = DMatrix::zeros(n, n);
    for j in 0..n {
        for i in (j + 1)..n {
            let v = (m.column(i) - m.column(j)).norm();
            d[(i, j)] = v;
            d[(j, i)] = v;
        }
    }
    DistanceMatrix { d }
}

/// Feature-space distances `sqrt(K_ii - 2 K_ij + K_jj)` from a kernel matrix.
pub fn pairwise_feature_space(k: &DMatrix<f64>) -> Result<DistanceMatrix> {
    if !k.is_square() {
        return shape("kernel matrix must be square");
    }
    let n = k.nrows();
    let mut d = DMatrix::zeros(n, n);
    for j in 0..n {
        for i in (j + 1)..n {
            let mut sq = k[(i, i)] - 2.0 * k[(i, j)] + k[(j, j)];
            if sq < 0.0 {
                if sq >= -1e-10 {
                    sq = 0.0;
                } else {
                    return invalid(format!(
                        "kernel is not positive semidefinite: squared feature distance ({i}, {j}) = {sq}"
                    ));
                }
            }
            d[(i, j)] = sq.sqrt();
            d[(j, i)] = sq.sqrt();
        }
    }
    Ok(DistanceMatrix { d })
}

fn sorted_candidates(row: impl Iterator<Item = (usize, f64)>) -> Vec<usize> {
    let mut c: Vec<(usize, f64)> = row.collect();
    c.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    c.into_iter().map(|(j, _)| j).collect()
}

/// `k` nearest neighbors of `i` among the points accepted by `allow`.
fn nearest(d: &DistanceMatrix, i: usize, k: usize, allow: &dyn Fn(usize, usize) -> bool) -> Vec<usize> {
    let n = d.len();
    let mut c = sorted_candidates((0..n).filter(|&j| j != i && allow(i, j)).map(|j| (j, d.d[(i, j)])));
    c.truncate(k);
    c
}

/// Same `k` for every point.
pub fn knn_graph(d: &DistanceMatrix, k: usize) -> Result<NeighborGraph> {
    let n = d.len();
    if k < 1 || k > n.saturating_sub(1) {
        return invalid(format!("k = {k} is outside [1, {}] for {n} points", n.saturating_sub(1)));
    }
    Ok(NeighborGraph { lists: (0..n).map(|i| nearest(d, i, k, &|_, _| true)).collect() })
}

/// Individual `k_i` per point.
pub fn knn_graph_per_point(d: &DistanceMatrix, ks: &[usize]) -> Result<NeighborGraph> {
    let n = d.len();
    if ks.len() != n {
        return shape(format!("{} neighborhood sizes for {n} points", ks.len()));
    }
    for (i, &k) in ks.iter().enumerate() {
        if k < 1 || k > n - 1 {
            return invalid(format!("k = {k} for point {i} is outside [1, {}]", n - 1));
        }
    }
    Ok(NeighborGraph { lists: (0..n).map(|i| nearest(d, i, ks[i], &|_, _| true)).collect() })
}

/// `k` nearest neighbors restricted to pairs accepted by `allow(i, j)`.
pub fn knn_graph_filtered(d: &DistanceMatrix, k: usize, allow: impl Fn(usize, usize) -> bool) -> Result<NeighborGraph> {
    let n = d.len();
    if k < 1 {
        return invalid("k must be at least 1");
    }
    let mut lists = Vec::with_capacity(n);
    for i in 0..n {
        let l = nearest(d, i, k, &allow);
        if l.len() < k {
            return invalid(format!("point {i} has only {} admissible neighbors, k = {k}", l.len()));
        }
        lists.push(l);
    }
    Ok(NeighborGraph { lists })
}

/// `k` nearest columns of `reference` to `query` (Euclidean), ties by index.
pub fn knn_query(reference: &DMatrix<f64>, query: DVectorView<'_, f64>, k: usize) -> Result<Vec<usize>> {
    let n = reference.ncols();
    if k < 1 || k > n {
        return invalid(format!("k = {k} is outside [1, {n}] for {n} reference points"));
    }
    if reference.nrows() != query.len() {
        return shape(format!("query has dimension {}, reference points {}", query.len(), reference.nrows()));
    }
    let mut c = sorted_candidates((0..n).map(|j| (j, (reference.column(j) - query).norm())));
    c.truncate(k);
    Ok(c)
}

pub fn component_count(g: &NeighborGraph) -> usize {
    let adj = g.symmetrized();
    let n = adj.len();
    let mut seen = vec![false; n];
    let mut count = 0;
    for s in 0..n {
        if seen[s] {
            continue;
        }
        count += 1;
        seen[s] = true;
        let mut q = VecDeque::from([s]);
        while let Some(u) = q.pop_front() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    q.push_back(v);
                }
            }
        }
    }
    count
}

/// Connectivity of the symmetrized graph.
pub fn is_connected(g: &NeighborGraph) -> bool {
    component_count(g) <= 1
}

#[derive(PartialEq)]
struct HeapItem(f64, usize);

impl Eq for HeapItem {}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then(other.1.cmp(&self.1))
    }
}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Shortest-path distances over the symmetrized kNN graph, edges weighted by `d`.
pub fn geodesic_distances(d: &DistanceMatrix, k: usize) -> Result<DistanceMatrix> {
    let g = knn_graph(d, k)?;
    geodesic_over(d, &g)
}

/// Shortest-path distances over the symmetrized version of `g`.
pub fn geodesic_over(d: &DistanceMatrix, g: &NeighborGraph) -> Result<DistanceMatrix> {
    let comps = component_count(g);
    if comps > 1 {
        return Err(LleError::Disconnected(format!(
            "neighborhood graph has {comps} connected components; increase k"
        )));
    }
    let adj = g.symmetrized();
    let n = adj.len();
    let mut out = DMatrix::zeros(n, n);
    for s in 0..n {
        let mut dist = vec![f64::INFINITY; n];
        dist[s] = 0.0;
        let mut heap = BinaryHeap::from([HeapItem(0.0, s)]);
        while let Some(HeapItem(du, u)) = heap.pop() {
            if du > dist[u] {
                continue;
            }
            for &v in &adj[u] {
                let nd = du + d.d[(u, v)];
                if nd < dist[v] {
                    dist[v] = nd;
                    heap.push(HeapItem(nd, v));
                }
            }
        }
        for t in 0..n {
            out[(s, t)] = dist[t];
        }
    }
    // paths found from both ends can differ in the last bit
    for j in 0..n {
        for i in (j + 1)..n {
            let v = out[(i, j)].min(out[(j, i)]);
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    Ok(DistanceMatrix { d: out })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::swiss_roll;

    fn line(n: usize) -> DataMatrix {
        DataMatrix::from_points(&(0..n).map(|i| vec![i as f64]).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn ties_broken_by_lower_index() {
        let x = line(5);
        let g = knn_graph(&pairwise_euclidean(&x), 2).unwrap();
        assert_eq!(g.neighbors(2), &[1, 3]);
        assert_eq!(g.neighbors(0), &[1, 2]);
        let g1 = knn_graph(&pairwise_euclidean(&x), 1).unwrap();
        assert_eq!(g1.neighbors(2), &[1]);
    }

    #[test]
    fn k_out_of_range() {
        let d = pairwise_euclidean(&line(4));
        assert!(matches!(knn_graph(&d, 0), Err(LleError::InvalidArgument(_))));
        assert!(matches!(knn_graph(&d, 4), Err(LleError::InvalidArgument(_))));
        assert!(knn_graph(&d, 3).is_ok());
    }

    #[test]
    fn two_clusters_disconnected() {
        let mut pts: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64, 0.0]).collect();
        pts.extend((0..5).map(|i| vec![i as f64 + 100.0, 0.0]));
        let x = DataMatrix::from_points(&pts).unwrap();
        let d = pairwise_euclidean(&x);
        let g = knn_graph(&d, 2).unwrap();
        assert!(!is_connected(&g));
        assert_eq!(component_count(&g), 2);
        let err = geodesic_distances(&d, 2).unwrap_err().to_string();
        assert!(err.contains("2 connected components"), "{err}");
    }

    #[test]
    fn geodesic_on_a_line_equals_euclidean() {
        let x = line(8);
        let d = pairwise_euclidean(&x);
        let g = geodesic_distances(&d, 1).unwrap();
        assert!((g.matrix() - d.matrix()).amax() < 1e-12);
    }

    #[test]
    fn geodesic_triangle_inequality() {
        let x = swiss_roll(150, 0.05, 3).unwrap().data;
        let d = pairwise_euclidean(&x);
        let g = geodesic_distances(&d, 8).unwrap();
        let n = g.len();
        for i in (0..n).step_by(7) {
            for j in (0..n).step_by(5) {
                assert!(g.get(i, j) + 1e-9 >= d.get(i, j));
                for l in (0..n).step_by(11) {
                    assert!(g.get(i, j) <= g.get(i, l) + g.get(l, j) + 1e-9);
                }
            }
        }
    }

    #[test]
    fn feature_space_of_linear_kernel_is_euclidean() {
        let x = swiss_roll(40, 0.1, 1).unwrap().data;
        let k = x.matrix().transpose() * x.matrix();
        let f = pairwise_feature_space(&k).unwrap();
        assert!((f.matrix() - pairwise_euclidean(&x).matrix()).amax() < 1e-6);
        let mut bad = DMatrix::identity(2, 2);
        bad[(0, 1)] = 2.0;
        bad[(1, 0)] = 2.0;
        assert!(pairwise_feature_space(&bad).is_err());
    }

    #[test]
    fn knn_query_matches_graph_order() {
        let x = line(6);
        let q = nalgebra::DVector::from_vec(vec![2.5]);
        assert_eq!(knn_query(x.matrix(), q.column(0), 2).unwrap(), vec![2, 3]);
    }

    #[test]
    fn distance_matrix_validation() {
        let mut m = DMatrix::zeros(2, 2);
        m[(0, 1)] = 1.0;
        assert!(DistanceMatrix::new(m.clone()).is_err());
        m[(1, 0)] = 1.0;
        assert!(DistanceMatrix::new(m).is_ok());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(48))]
            #[test]
            fn knn_lists_have_k_sorted_entries(n in 4usize..30, k in 1usize..10, seed in any::<u64>()) {
                prop_assume!(k < n);
                let x = swiss_roll(n, 0.2, seed).unwrap().data;
                let d = pairwise_euclidean(&x);
                let g = knn_graph(&d, k).unwrap();
                for i in 0..n {
                    let l = g.neighbors(i);
                    prop_assert_eq!(l.len(), k);
                    prop_assert!(!l.contains(&i));
                    for w in l.windows(2) {
                        prop_assert!(d.get(i, w[0]) <= d.get(i, w[1]));
                    }
                    let kth = d.get(i, l[k - 1]);
                    for j in 0..n {
                        if j != i && !l.contains(&j) {
                            prop_assert!(d.get(i, j) >= kth);
                        }
                    }
                }
            }
        }
    }
}
