//! Point sets, CSV input/output and synthetic manifolds.
//!
//! Synthetic generators draw from `ChaCha8Rng` seeded with a `u64`, so the
//! same seed gives the same points on every platform.

use std::f64::consts::PI;
use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVectorView};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, shape, LleError, Result};
use crate::numlin::check_finite;

/// `d x n` matrix holding one point per column.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    points: DMatrix<f64>,
}

impl DataMatrix {
    pub fn new(points: DMatrix<f64>) -> Result<Self> {
        if points.nrows() == 0 || points.ncols() == 0 {
            return invalid(format!("data matrix must be non-empty, got {}x{}", points.nrows(), points.ncols()));
        }
        check_finite(&points, "data matrix")?;
        Ok(Self { points })
    }

    /// Build from one slice per point.
    pub fn from_points(rows: &[Vec<f64>]) -> Result<Self> {
        let Some(first) = rows.first() else {
            return invalid("no points given");
        };
        let d = first.len();
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != d) {
            return shape(format!("point {i} has {} coordinates, expected {d}", r.len()));
        }
        Self::new(DMatrix::from_fn(d, rows.len(), |r, c| rows[c][r]))
    }

    pub fn dim(&self) -> usize {
        self.points.nrows()
    }

    pub fn len(&self) -> usize {
        self.points.ncols()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn point(&self, i: usize) -> DVectorView<'_, f64> {
        self.points.column(i)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.points
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.points
    }

    pub fn select(&self, idx: &[usize]) -> DataMatrix {
        DataMatrix { points: self.points.select_columns(idx) }
    }

    /// Points of `self` followed by the points of `other`.
    pub fn concat(&self, other: &DataMatrix) -> Result<DataMatrix> {
        if self.dim() != other.dim() {
            return shape(format!("cannot join {}-dimensional and {}-dimensional points", self.dim(), other.dim()));
        }
        let n = self.len();
        let m = DMatrix::from_fn(self.dim(), n + other.len(), |r, c| {
            if c < n {
                self.points[(r, c)]
            } else {
                other.points[(r, c - n)]
            }
        });
        Ok(DataMatrix { points: m })
    }

    /// Points as rows (`n x d`).
    pub fn to_rows(&self) -> DMatrix<f64> {
        self.points.transpose()
    }
}

/// Points with optional integer class labels in `0..classes`.
#[derive(Debug, Clone)]
pub struct LabeledDataset {
    pub data: DataMatrix,
    pub labels: Vec<Option<usize>>,
    pub classes: usize,
}

impl LabeledDataset {
    pub fn new(data: DataMatrix, labels: Vec<Option<usize>>) -> Result<Self> {
        if labels.len() != data.len() {
            return shape(format!("{} labels for {} points", labels.len(), data.len()));
        }
        let classes = labels.iter().flatten().map(|&c| c + 1).max().unwrap_or(0);
        Ok(Self { data, labels, classes })
    }

    pub fn fully_labeled(&self) -> Option<Vec<usize>> {
        self.labels.iter().copied().collect()
    }
}

/// A batch of new points; may be empty.
#[derive(Debug, Clone)]
pub struct StreamBatch {
    pub points: DMatrix<f64>,
}

impl StreamBatch {
    pub fn new(points: DMatrix<f64>) -> Result<Self> {
        check_finite(&points, "stream batch")?;
        Ok(Self { points })
    }

    pub fn len(&self) -> usize {
        self.points.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.points.ncols() == 0
    }
}

/// Synthetic sample together with its generating parameters.
#[derive(Debug, Clone)]
pub struct Manifold {
    pub data: DataMatrix,
    pub t: Vec<f64>,
    pub h: Vec<f64>,
}

impl Manifold {
    /// Intrinsic coordinates `(t, h)` as a `2 x n` data matrix.
    pub fn intrinsic(&self) -> DataMatrix {
        let n = self.t.len();
        DataMatrix { points: DMatrix::from_fn(2, n, |r, c| if r == 0 { self.t[c] } else { self.h[c] }) }
    }
}

fn parse_field(s: &str, line: u64, col: usize) -> Result<f64> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| LleError::Parse(format!("line {line}, column {}: '{s}' is not a number", col + 1)))?;
    if !v.is_finite() {
        return Err(LleError::Parse(format!("line {line}, column {}: non-finite value '{s}'", col + 1)));
    }
    Ok(v)
}

fn read_records(path: &Path, has_header: bool) -> Result<Vec<(u64, csv::StringRecord)>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| LleError::Parse(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| LleError::Parse(format!("{}: {e}", path.display())))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        out.push((line, rec));
    }
    if out.is_empty() {
        return Err(LleError::Parse(format!("{}: no data rows", path.display())));
    }
    Ok(out)
}

/// Read one point per row.
pub fn load_csv(path: impl AsRef<Path>, has_header: bool) -> Result<DataMatrix> {
    let path = path.as_ref();
    let recs = read_records(path, has_header)?;
    let width = recs[0].1.len();
    let mut rows = Vec::with_capacity(recs.len());
    for (line, rec) in &recs {
        if rec.len() != width {
            return Err(LleError::Parse(format!("line {line}: expected {width} fields, found {}", rec.len())));
        }
        rows.push(rec.iter().enumerate().map(|(c, s)| parse_field(s, *line, c)).collect::<Result<Vec<_>>>()?);
    }
    DataMatrix::from_points(&rows)
}

/// Read one point per row with a trailing label column; an empty label means unlabeled.
pub fn load_labeled_csv(path: impl AsRef<Path>, has_header: bool) -> Result<LabeledDataset> {
    let path = path.as_ref();
    let recs = read_records(path, has_header)?;
    let width = recs[0].1.len();
    if width < 2 {
        return Err(LleError::Parse("labeled CSV needs at least one coordinate and a label column".into()));
    }
    let mut rows = Vec::with_capacity(recs.len());
    let mut labels = Vec::with_capacity(recs.len());
    for (line, rec) in &recs {
        if rec.len() != width {
            return Err(LleError::Parse(format!("line {line}: expected {width} fields, found {}", rec.len())));
        }
        let coords = (0..width - 1).map(|c| parse_field(&rec[c], *line, c)).collect::<Result<Vec<_>>>()?;
        let lab = rec[width - 1].trim();
        labels.push(if lab.is_empty() {
            None
        } else {
            Some(lab.parse::<usize>().map_err(|_| {
                LleError::Parse(format!("line {line}: label '{lab}' is not a non-negative integer"))
            })?)
        });
        rows.push(coords);
    }
    LabeledDataset::new(DataMatrix::from_points(&rows)?, labels)
}

/// Write `bytes` next to `path` and rename into place.
pub fn write_atomic(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => std::path::PathBuf::from("."),
    };
    let name = path
        .file_name()
        .ok_or_else(|| LleError::InvalidArgument(format!("'{}' is not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let res = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if res.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    res.map_err(LleError::from)
}

/// Render rows of `m` as CSV text with round-trip exact numbers.
pub fn csv_text(m: &DMatrix<f64>, header: Option<&[String]>) -> String {
    let mut s = String::new();
    if let Some(h) = header {
        s.push_str(&h.join(","));
        s.push('\n');
    }
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format!("{:?}", m[(i, j)])).collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

/// Write each row of `m` as one CSV line (no header).
pub fn save_csv(path: impl AsRef<Path>, m: &DMatrix<f64>) -> Result<()> {
    write_atomic(path, csv_text(m, None).as_bytes())
}

/// Write a data matrix one point per line.
pub fn save_data_csv(path: impl AsRef<Path>, x: &DataMatrix) -> Result<()> {
    save_csv(path, &x.to_rows())
}

fn check_generator_args(n: usize, noise: f64) -> Result<()> {
    if n < 4 {
        return invalid(format!("at least 4 points are required, got {n}"));
    }
    if !(noise >= 0.0) || !noise.is_finite() {
        return invalid(format!("noise must be a finite non-negative number, got {noise}"));
    }
    Ok(())
}

fn sample(
    n: usize,
    noise: f64,
    seed: u64,
    t_range: (f64, f64),
    h_range: (f64, f64),
    f: impl Fn(f64, f64) -> [f64; 3],
) -> Result<Manifold> {
    check_generator_args(n, noise)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = Vec::with_capacity(n);
    let mut h = Vec::with_capacity(n);
    for _ in 0..n {
        t.push(t_range.0 + (t_range.1 - t_range.0) * rng.gen::<f64>());
        h.push(h_range.0 + (h_range.1 - h_range.0) * rng.gen::<f64>());
    }
    // noise is drawn after all parameters so noisy and clean samples share (t, h)
    let mut pts = DMatrix::zeros(3, n);
    for i in 0..n {
        let p = f(t[i], h[i]);
        for r in 0..3 {
            let e: f64 = rng.sample(StandardNormal);
            pts[(r, i)] = p[r] + noise * e;
        }
    }
    Ok(Manifold { data: DataMatrix::new(pts)?, t, h })
}

/// Swiss roll `(t cos t, h, t sin t)` with `t` in `[1.5 pi, 4.5 pi]`, `h` in `[0, 21]`.
pub fn swiss_roll(n: usize, noise: f64, seed: u64) -> Result<Manifold> {
    sample(n, noise, seed, (1.5 * PI, 4.5 * PI), (0.0, 21.0), |t, h| [t * t.cos(), h, t * t.sin()])
}

/// S-curve `(sin t, h, sign(t)(cos t - 1))` with `t` in `[-1.5 pi, 1.5 pi]`, `h` in `[0, 2]`.
pub fn s_curve(n: usize, noise: f64, seed: u64) -> Result<Manifold> {
    sample(n, noise, seed, (-1.5 * PI, 1.5 * PI), (0.0, 2.0), |t, h| {
        [t.sin(), h, t.signum() * (t.cos() - 1.0)]
    })
}

/// Subtract the mean of every coordinate.
pub fn center(x: &DataMatrix) -> DataMatrix {
    let mut m = x.points.clone();
    for r in 0..m.nrows() {
        let mean = m.row(r).sum() / m.ncols() as f64;
        m.row_mut(r).iter_mut().for_each(|v| *v -= mean);
    }
    DataMatrix { points: m }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn swiss_roll_radius_is_t() {
        let s = swiss_roll(200, 0.0, 1).unwrap();
        for i in 0..200 {
            let p = s.data.point(i);
            assert_relative_eq!((p[0] * p[0] + p[2] * p[2]).sqrt(), s.t[i], epsilon = 1e-12);
            assert!(s.t[i] >= 1.5 * PI && s.t[i] <= 4.5 * PI);
            assert!((0.0..=21.0).contains(&s.h[i]));
            assert_eq!(p[1], s.h[i]);
        }
    }

    #[test]
    fn s_curve_lies_on_two_unit_circles() {
        let s = s_curve(300, 0.0, 2).unwrap();
        for i in 0..300 {
            let p = s.data.point(i);
            assert_relative_eq!(p[0] * p[0] + (p[2].abs() - 1.0).powi(2), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn noise_level_matches_cross_section_deviation() {
        // the (x, z) cross-section receives two independent N(0, 0.1^2) draws
        let clean = swiss_roll(4000, 0.0, 11).unwrap();
        let noisy = swiss_roll(4000, 0.1, 11).unwrap();
        assert_eq!(clean.t, noisy.t);
        let mut acc = 0.0;
        for i in 0..4000 {
            let a = clean.data.point(i);
            let b = noisy.data.point(i);
            acc += (a[0] - b[0]).powi(2) + (a[2] - b[2]).powi(2);
        }
        let msd = acc / 4000.0;
        assert!((msd - 0.02).abs() < 0.2 * 0.02, "{msd}");
    }

    #[test]
    fn generator_is_deterministic_per_seed() {
        let a = swiss_roll(50, 0.05, 7).unwrap();
        let b = swiss_roll(50, 0.05, 7).unwrap();
        let c = swiss_roll(50, 0.05, 8).unwrap();
        assert_eq!(a.data, b.data);
        assert_ne!(a.data, c.data);
    }

    #[test]
    fn generator_rejects_bad_args() {
        assert!(matches!(swiss_roll(3, 0.0, 1), Err(LleError::InvalidArgument(_))));
        assert!(matches!(s_curve(10, -1.0, 1), Err(LleError::InvalidArgument(_))));
    }

    #[test]
    fn center_removes_means() {
        let x = swiss_roll(100, 0.1, 3).unwrap().data;
        let c = center(&x);
        for r in 0..3 {
            assert!(c.matrix().row(r).sum().abs() < 1e-10);
        }
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.csv");
        let x = swiss_roll(30, 0.3, 5).unwrap().data;
        save_data_csv(&path, &x).unwrap();
        let y = load_csv(&path, false).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn csv_errors_name_the_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        fs::write(&path, "a,b\n1,2\n3,x\n").unwrap();
        let err = load_csv(&path, true).unwrap_err().to_string();
        assert!(err.contains("line 3"), "{err}");
        fs::write(&path, "1,2\n3\n").unwrap();
        let err = load_csv(&path, false).unwrap_err().to_string();
        assert!(err.contains("line 2"), "{err}");
        fs::write(&path, "").unwrap();
        assert!(load_csv(&path, false).is_err());
    }

    #[test]
    fn labeled_csv_with_missing_labels() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("l.csv");
        fs::write(&path, "x,y,label\n0,0,0\n1,0,\n2,0,2\n").unwrap();
        let l = load_labeled_csv(&path, true).unwrap();
        assert_eq!(l.labels, vec![Some(0), None, Some(2)]);
        assert_eq!(l.classes, 3);
        assert_eq!(l.data.dim(), 2);
        assert!(l.fully_labeled().is_none());
    }
}
