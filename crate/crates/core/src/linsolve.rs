//! Compressed sparse rows and a direct solver with a residual check.

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;

use crate::error::{FemError, Result};

/// Relative residual bound checked after every solve.
pub const RESIDUAL_TOLERANCE: f64 = 1e-10;

/// Square matrix in compressed row form with sorted, unique column indices.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    dim: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

/// Sums duplicate triplets and sorts every row.
pub fn compress(dim: usize, triplets: &[(usize, usize, f64)]) -> Result<CsrMatrix> {
    let mut counts = vec![0usize; dim + 1];
    for &(r, c, _) in triplets {
        if r >= dim || c >= dim {
            return Err(FemError::IndexOutOfRange { row: r, col: c, dim });
        }
        counts[r + 1] += 1;
    }
    for i in 0..dim {
        counts[i + 1] += counts[i];
    }
    // bucket by row, keeping triplet order for a deterministic summation
    let mut next = counts.clone();
    let mut cols = vec![0usize; triplets.len()];
    let mut vals = vec![0f64; triplets.len()];
    for &(r, c, v) in triplets {
        let slot = next[r];
        cols[slot] = c;
        vals[slot] = v;
        next[r] += 1;
    }
    let mut row_ptr = Vec::with_capacity(dim + 1);
    let mut col_idx = Vec::with_capacity(triplets.len());
    let mut values = Vec::with_capacity(triplets.len());
    row_ptr.push(0);
    let mut row: Vec<(usize, f64)> = Vec::new();
    for r in 0..dim {
        row.clear();
        row.extend((counts[r]..counts[r + 1]).map(|i| (cols[i], vals[i])));
        row.sort_by_key(|&(c, _)| c);
        for &(c, v) in &row {
            if col_idx.len() > row_ptr[r] && *col_idx.last().unwrap() == c {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                values.push(v);
            }
        }
        row_ptr.push(col_idx.len());
    }
    Ok(CsrMatrix {
        dim,
        row_ptr,
        col_idx,
        values,
    })
}

impl CsrMatrix {
    pub fn zeros(dim: usize) -> Self {
        CsrMatrix {
            dim,
            row_ptr: vec![0; dim + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// `(column, value)` pairs of row `r`.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        match self.col_idx[span.clone()].binary_search(&c) {
            Ok(i) => self.values[span.start + i],
            Err(_) => 0.0,
        }
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.dim).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, v)))
    }

    /// Structural pattern as `(row, col)` pairs.
    pub fn pattern(&self) -> Vec<(usize, usize)> {
        self.triplets().map(|(r, c, _)| (r, c)).collect()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.dim);
        (0..self.dim)
            .map(|r| self.row(r).map(|(c, v)| v * x[c]).sum())
            .collect()
    }

    /// `x^T A y`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        self.mul_vec(y).iter().zip(x).map(|(a, b)| a * b).sum()
    }

    pub fn transpose(&self) -> CsrMatrix {
        let t: Vec<(usize, usize, f64)> = self.triplets().map(|(r, c, v)| (c, r, v)).collect();
        compress(self.dim, &t).expect("indices already in range")
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `max |A - A^T|`.
    pub fn max_asymmetry(&self) -> f64 {
        self.triplets()
            .map(|(r, c, v)| (v - self.get(c, r)).abs())
            .fold(0.0, f64::max)
    }

    /// Symmetric up to `tol * max|A|`.
    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.max_asymmetry() <= tol * self.max_abs()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.dim]; self.dim];
        for (r, c, v) in self.triplets() {
            d[r][c] = v;
        }
        d
    }
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Relative residual `||Ax - b|| / ||b||` (absolute when `b = 0`).
pub fn relative_residual(matrix: &CsrMatrix, x: &[f64], rhs: &[f64]) -> f64 {
    let ax = matrix.mul_vec(x);
    let r: Vec<f64> = ax.iter().zip(rhs).map(|(a, b)| a - b).collect();
    let bn = norm2(rhs);
    if bn > 0.0 {
        norm2(&r) / bn
    } else {
        norm2(&r)
    }
}

/// Sparse LU solve with partial pivoting followed by the residual check.
///
/// The `symmetric` flag is informational: the stabilized forms with
/// `delta0 = +1` are symmetric but indefinite, so LU is used throughout.
pub fn solve(matrix: &CsrMatrix, rhs: &[f64], symmetric: bool) -> Result<Vec<f64>> {
    let n = matrix.dim();
    if rhs.len() != n {
        return Err(FemError::DimensionMismatch(format!(
            "rhs of length {} for a {n}x{n} matrix",
            rhs.len()
        )));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    log::debug!("solving {n}x{n} system, nnz={}, symmetric={symmetric}", matrix.nnz());
    let trips: Vec<Triplet<usize, usize, f64>> = matrix
        .triplets()
        .map(|(r, c, v)| Triplet::new(r, c, v))
        .collect();
    let a = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &trips)
        .map_err(|e| FemError::SingularSystem(format!("{e:?}")))?;
    let lu = a
        .sp_lu()
        .map_err(|e| FemError::SingularSystem(format!("{e:?}")))?;

    let b = Mat::from_fn(n, 1, |i, _| rhs[i]);
    let sol = lu.solve(&b);
    let mut x: Vec<f64> = (0..n).map(|i| sol[(i, 0)]).collect();
    if x.iter().any(|v| !v.is_finite()) {
        return Err(FemError::SingularSystem("non-finite solution".into()));
    }
    let mut res = relative_residual(matrix, &x, rhs);
    // a couple of refinement sweeps recover the contract on ill-conditioned systems
    for _ in 0..3 {
        if res <= RESIDUAL_TOLERANCE {
            break;
        }
        let ax = matrix.mul_vec(&x);
        let r = Mat::from_fn(n, 1, |i, _| rhs[i] - ax[i]);
        let d = lu.solve(&r);
        for (i, xi) in x.iter_mut().enumerate() {
            *xi += d[(i, 0)];
        }
        res = relative_residual(matrix, &x, rhs);
    }
    if !(res <= RESIDUAL_TOLERANCE) {
        return Err(FemError::ResidualViolation { residual: res });
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand::rngs::StdRng;

    /// Dense Gaussian elimination with partial pivoting; test oracle.
    fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
        let n = b.len();
        for k in 0..n {
            let p = (k..n)
                .max_by(|&i, &j| a[i][k].abs().partial_cmp(&a[j][k].abs()).unwrap())
                .unwrap();
            a.swap(k, p);
            b.swap(k, p);
            for i in k + 1..n {
                let f = a[i][k] / a[k][k];
                for j in k..n {
                    a[i][j] -= f * a[k][j];
                }
                b[i] -= f * b[k];
            }
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|j| a[i][j] * x[j]).sum();
            x[i] = (b[i] - s) / a[i][i];
        }
        x
    }

    #[test]
    fn duplicates_are_summed() {
        let m = compress(2, &[(0, 0, 1.0), (0, 0, 2.0)]).unwrap();
        assert_eq!(m.nnz(), 1);
        assert_eq!(m.get(0, 0), 3.0);
    }

    #[test]
    fn empty_is_zero() {
        let m = compress(3, &[]).unwrap();
        assert_eq!(m, CsrMatrix::zeros(3));
        assert_eq!(m.mul_vec(&[1.0, 2.0, 3.0]), vec![0.0; 3]);
    }

    #[test]
    fn out_of_range() {
        assert!(matches!(
            compress(2, &[(0, 2, 1.0)]),
            Err(FemError::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn matvec_matches_dense() {
        let mut rng = StdRng::seed_from_u64(7);
        let n = 20;
        let trips: Vec<(usize, usize, f64)> = (0..200)
            .map(|_| (rng.gen_range(0..n), rng.gen_range(0..n), rng.gen_range(-1.0..1.0)))
            .collect();
        let mut dense = vec![vec![0.0; n]; n];
        for &(r, c, v) in &trips {
            dense[r][c] += v;
        }
        let m = compress(n, &trips).unwrap();
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y = m.mul_vec(&x);
        for r in 0..n {
            let d: f64 = (0..n).map(|c| dense[r][c] * x[c]).sum();
            assert!((d - y[r]).abs() < 1e-13);
        }
        for r in 0..n {
            let cols: Vec<usize> = m.row(r).map(|(c, _)| c).collect();
            assert!(cols.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn small_solves() {
        let m = compress(2, &[(0, 0, 2.0), (1, 1, 3.0)]).unwrap();
        let x = solve(&m, &[2.0, 3.0], true).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-15 && (x[1] - 1.0).abs() < 1e-15);
        let id = compress(4, &(0..4).map(|i| (i, i, 1.0)).collect::<Vec<_>>()).unwrap();
        let b = vec![1.0, -2.0, 3.5, 0.25];
        assert_eq!(solve(&id, &b, true).unwrap(), b);
        assert!(matches!(
            solve(&id, &[1.0], true),
            Err(FemError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn random_spd_matches_dense() {
        let mut rng = StdRng::seed_from_u64(11);
        let n = 50;
        let b: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let mut a = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                a[i][j] = (0..n).map(|k| b[k][i] * b[k][j]).sum::<f64>();
            }
            a[i][i] += n as f64;
        }
        let trips: Vec<(usize, usize, f64)> = (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .map(|(i, j)| (i, j, a[i][j]))
            .collect();
        let rhs: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x = solve(&compress(n, &trips).unwrap(), &rhs, true).unwrap();
        let xd = dense_solve(a, rhs);
        for (u, v) in x.iter().zip(&xd) {
            assert!((u - v).abs() < 1e-9);
        }
    }

    #[test]
    fn singular_is_reported() {
        let m = compress(2, &[(0, 0, 1.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 1.0)]).unwrap();
        assert!(solve(&m, &[1.0, 2.0], false).is_err());
    }

    #[test]
    fn nonsymmetric_indefinite() {
        let m = compress(3, &[(0, 1, 1.0), (1, 0, -2.0), (2, 2, -1.0), (0, 2, 0.5)]).unwrap();
        assert!(!m.is_symmetric(1e-10));
        let rhs = [1.0, 2.0, 3.0];
        let x = solve(&m, &rhs, false).unwrap();
        assert!(relative_residual(&m, &x, &rhs) < 1e-14);
    }
}
