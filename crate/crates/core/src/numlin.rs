//! Dense linear algebra used by every embedding routine.
//!
//! Thin contract layer over `nalgebra`: ascending eigenvalues, a fixed
//! eigenvector sign convention, relative pseudo-inverse cut-offs and
//! singularity reporting on SPD solves.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen, SVD};

use crate::error::{invalid, shape, LleError, Result};

pub type DenseMatrix = DMatrix<f64>;

/// Relative tolerance used when checking symmetry of eigen inputs.
pub const SYMMETRY_TOL: f64 = 1e-10;
/// Default relative cut-off for the pseudo-inverse.
pub const PINV_TOL: f64 = 1e-12;

/// Eigen-decomposition with ascending eigenvalues.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: DVector<f64>,
    /// Eigenvectors in columns, matching `values`.
    pub vectors: DMatrix<f64>,
}

/// Thin SVD with descending singular values; `a = u * diag(s) * v^T`.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: DMatrix<f64>,
    pub singular_values: DVector<f64>,
    pub v: DMatrix<f64>,
}

pub fn check_finite(a: &DMatrix<f64>, what: &str) -> Result<()> {
    if a.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(LleError::NonFinite(format!("{what} contains NaN or infinite entries")))
    }
}

pub fn max_abs(a: &DMatrix<f64>) -> f64 {
    a.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

pub fn is_symmetric(a: &DMatrix<f64>, rel_tol: f64) -> bool {
    if !a.is_square() {
        return false;
    }
    let scale = max_abs(a);
    let n = a.nrows();
    for j in 0..n {
        for i in (j + 1)..n {
            if (a[(i, j)] - a[(j, i)]).abs() > rel_tol * scale {
                return false;
            }
        }
    }
    true
}

fn symmetrized(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Flip `v` so that its largest-magnitude entry is positive (first index wins ties).
pub fn fix_sign(v: &mut [f64]) {
    let mut best = 0;
    let mut best_abs = -1.0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > best_abs {
            best_abs = x.abs();
            best = i;
        }
    }
    if !v.is_empty() && v[best] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

fn fix_column_signs(m: &mut DMatrix<f64>) {
    for j in 0..m.ncols() {
        let mut col: Vec<f64> = m.column(j).iter().copied().collect();
        fix_sign(&mut col);
        m.column_mut(j).copy_from_slice(&col);
    }
}

fn sorted_eigen(values: &DVector<f64>, vectors: &DMatrix<f64>) -> SymEigen {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let vals = DVector::from_iterator(n, order.iter().map(|&i| values[i]));
    let mut vecs = DMatrix::zeros(vectors.nrows(), n);
    for (dst, &src) in order.iter().enumerate() {
        vecs.set_column(dst, &vectors.column(src));
    }
    fix_column_signs(&mut vecs);
    SymEigen { values: vals, vectors: vecs }
}

/// Symmetric eigen-decomposition, eigenvalues ascending.
pub fn sym_eigen(a: &DMatrix<f64>) -> Result<SymEigen> {
    if !a.is_square() {
        return shape(format!("sym_eigen needs a square matrix, got {}x{}", a.nrows(), a.ncols()));
    }
    check_finite(a, "sym_eigen input")?;
    if !is_symmetric(a, SYMMETRY_TOL) {
        return invalid("sym_eigen input is not symmetric");
    }
    if a.nrows() == 0 {
        return Ok(SymEigen { values: DVector::zeros(0), vectors: DMatrix::zeros(0, 0) });
    }
    let eig = SymmetricEigen::new(symmetrized(a));
    Ok(sorted_eigen(&eig.eigenvalues, &eig.eigenvectors))
}

/// Largest eigenvalue of a symmetric matrix.
pub fn lambda_max(a: &DMatrix<f64>) -> Result<f64> {
    let e = sym_eigen(a)?;
    Ok(e.values.iter().copied().fold(f64::NEG_INFINITY, f64::max))
}

/// Generalized problem `a v = lambda b v` with `b` SPD.
///
/// Eigenvalues ascending; eigenvectors satisfy `V^T b V = I`.
pub fn generalized_sym_eigen(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<SymEigen> {
    if !a.is_square() || a.shape() != b.shape() {
        return shape(format!(
            "generalized eigenproblem needs equal square matrices, got {:?} and {:?}",
            a.shape(),
            b.shape()
        ));
    }
    check_finite(a, "generalized eigen left matrix")?;
    check_finite(b, "generalized eigen right matrix")?;
    if !is_symmetric(a, SYMMETRY_TOL) || !is_symmetric(b, SYMMETRY_TOL) {
        return invalid("generalized eigenproblem inputs must be symmetric");
    }
    let chol = Cholesky::new(symmetrized(b))
        .ok_or_else(|| LleError::Singular("right-hand matrix of generalized eigenproblem is not positive definite".into()))?;
    let l = chol.l();
    let linv_a = l
        .solve_lower_triangular(&symmetrized(a))
        .ok_or_else(|| LleError::Singular("triangular solve in generalized eigenproblem".into()))?;
    let c = l
        .solve_lower_triangular(&linv_a.transpose())
        .ok_or_else(|| LleError::Singular("triangular solve in generalized eigenproblem".into()))?;
    let eig = SymmetricEigen::new(symmetrized(&c));
    let back = l
        .transpose()
        .solve_upper_triangular(&eig.eigenvectors)
        .ok_or_else(|| LleError::Singular("back-substitution in generalized eigenproblem".into()))?;
    Ok(sorted_eigen(&eig.eigenvalues, &back))
}

/// Householder reflector `I - beta u u^T` mapping `z` onto a multiple of `e_1`.
struct Reflector {
    u: DVector<f64>,
    beta: f64,
}

impl Reflector {
    fn new(z: &DVector<f64>) -> Result<Self> {
        let norm = z.norm();
        if !(norm > 0.0) {
            return invalid("cannot deflate a zero vector");
        }
        let mut u = z / norm;
        let s = if u[0] >= 0.0 { 1.0 } else { -1.0 };
        u[0] += s;
        let beta = 2.0 / u.norm_squared();
        Ok(Self { u, beta })
    }

    /// `H a H` with the first row and column removed.
    fn compress(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        let w = a * &self.u;
        let uw = self.u.dot(&w);
        let n = a.nrows();
        let (u, b) = (&self.u, self.beta);
        DMatrix::from_fn(n - 1, n - 1, |i, j| {
            let (i, j) = (i + 1, j + 1);
            a[(i, j)] - b * u[i] * w[j] - b * w[i] * u[j] + b * b * uw * u[i] * u[j]
        })
    }

    /// `H [0; v]` for every column `v`.
    fn expand(&self, v: &DMatrix<f64>) -> DMatrix<f64> {
        let n = v.nrows() + 1;
        let mut out = DMatrix::zeros(n, v.ncols());
        out.view_mut((1, 0), (n - 1, v.ncols())).copy_from(v);
        for c in 0..v.ncols() {
            let t = self.beta * self.u.dot(&out.column(c));
            let uc = &self.u * t;
            let mut col = out.column_mut(c);
            col -= uc;
        }
        out
    }
}

/// Eigenpairs of symmetric `a` restricted to the orthogonal complement of `z`.
///
/// `z` must be an eigenvector of `a`; the `n - 1` returned vectors are
/// orthogonal to it to working precision.
pub fn sym_eigen_deflated(a: &DMatrix<f64>, z: &DVector<f64>) -> Result<SymEigen> {
    if !a.is_square() || a.nrows() != z.len() || a.nrows() < 2 {
        return shape("deflated eigenproblem needs a square matrix of size >= 2 matching the vector");
    }
    check_finite(a, "sym_eigen input")?;
    if !is_symmetric(a, SYMMETRY_TOL) {
        return invalid("sym_eigen input is not symmetric");
    }
    let h = Reflector::new(z)?;
    let c = h.compress(&symmetrized(a));
    let eig = SymmetricEigen::new(symmetrized(&c));
    let sorted = sorted_eigen(&eig.eigenvalues, &eig.eigenvectors);
    let mut vectors = h.expand(&sorted.vectors);
    fix_column_signs(&mut vectors);
    Ok(SymEigen { values: sorted.values, vectors })
}

/// Generalized pairs of `(a, b)` constrained to `z^T b v = 0`, with `V^T b V = I`.
pub fn generalized_sym_eigen_deflated(a: &DMatrix<f64>, b: &DMatrix<f64>, z: &DVector<f64>) -> Result<SymEigen> {
    if !a.is_square() || a.shape() != b.shape() || a.nrows() != z.len() || a.nrows() < 2 {
        return shape("deflated generalized eigenproblem needs equal square matrices matching the vector");
    }
    let h = Reflector::new(&(b * z))?;
    let e = generalized_sym_eigen(&h.compress(&symmetrized(a)), &h.compress(&symmetrized(b)))?;
    let mut vectors = h.expand(&e.vectors);
    fix_column_signs(&mut vectors);
    Ok(SymEigen { values: e.values, vectors })
}

/// Thin SVD, singular values descending.
pub fn svd(a: &DMatrix<f64>) -> Result<Svd> {
    check_finite(a, "svd input")?;
    let (m, n) = a.shape();
    let r = m.min(n);
    if r == 0 {
        return Ok(Svd { u: DMatrix::zeros(m, 0), singular_values: DVector::zeros(0), v: DMatrix::zeros(n, 0) });
    }
    let s = SVD::new(a.clone(), true, true);
    let u = s.u.ok_or_else(|| LleError::Solver("svd did not return U".into()))?;
    let vt = s.v_t.ok_or_else(|| LleError::Solver("svd did not return V".into()))?;
    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&x, &y| s.singular_values[y].total_cmp(&s.singular_values[x]).then(x.cmp(&y)));
    let mut uu = DMatrix::zeros(m, r);
    let mut vv = DMatrix::zeros(n, r);
    let mut sv = DVector::zeros(r);
    for (dst, &src) in order.iter().enumerate() {
        uu.set_column(dst, &u.column(src));
        vv.set_column(dst, &vt.row(src).transpose());
        sv[dst] = s.singular_values[src];
    }
    Ok(Svd { u: uu, singular_values: sv, v: vv })
}

/// Moore-Penrose pseudo-inverse; singular values below `rel_tol * sigma_max` are dropped.
pub fn pseudo_inverse(a: &DMatrix<f64>, rel_tol: f64) -> Result<DMatrix<f64>> {
    if !(rel_tol >= 0.0) {
        return invalid("pseudo-inverse tolerance must be non-negative");
    }
    let s = svd(a)?;
    let (m, n) = a.shape();
    let mut out = DMatrix::zeros(n, m);
    let smax = s.singular_values.iter().copied().fold(0.0, f64::max);
    if smax == 0.0 {
        return Ok(out);
    }
    for r in 0..s.singular_values.len() {
        let sr = s.singular_values[r];
        if sr > rel_tol * smax {
            out += (s.v.column(r) * s.u.column(r).transpose()) / sr;
        }
    }
    Ok(out)
}

/// Solve `a x = b` for symmetric positive definite `a`.
pub fn solve_spd(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let bm = DMatrix::from_column_slice(b.len(), 1, b.as_slice());
    let x = solve_spd_matrix(a, &bm)?;
    Ok(x.column(0).into_owned())
}

/// Solve `a X = b` column-wise for symmetric positive definite `a`.
pub fn solve_spd_matrix(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !a.is_square() || a.nrows() != b.nrows() {
        return shape(format!("solve_spd: matrix {:?} and right-hand side {:?}", a.shape(), b.shape()));
    }
    check_finite(a, "solve_spd matrix")?;
    check_finite(b, "solve_spd right-hand side")?;
    let chol = Cholesky::new(symmetrized(a))
        .ok_or_else(|| LleError::Singular("solve_spd: matrix is not positive definite".into()))?;
    let l = chol.l();
    let diag: Vec<f64> = (0..l.nrows()).map(|i| l[(i, i)] * l[(i, i)]).collect();
    let dmax = diag.iter().copied().fold(0.0, f64::max);
    let dmin = diag.iter().copied().fold(f64::INFINITY, f64::min);
    if !(dmin > 1e-15 * dmax) {
        return Err(LleError::Singular("solve_spd: matrix is singular to working precision".into()));
    }
    Ok(chol.solve(b))
}

/// Centering matrix `I - 11^T / n`.
pub fn centering_matrix(n: usize) -> DMatrix<f64> {
    let mut h = DMatrix::from_element(n, n, -1.0 / n as f64);
    for i in 0..n {
        h[(i, i)] += 1.0;
    }
    h
}

/// `H a H` without forming `H`.
pub fn double_center(a: &DMatrix<f64>) -> DMatrix<f64> {
    let (r, c) = a.shape();
    let row_means: Vec<f64> = (0..r).map(|i| a.row(i).sum() / c as f64).collect();
    let col_means: Vec<f64> = (0..c).map(|j| a.column(j).sum() / r as f64).collect();
    let total = a.sum() / (r * c) as f64;
    DMatrix::from_fn(r, c, |i, j| a[(i, j)] - row_means[i] - col_means[j] + total)
}
