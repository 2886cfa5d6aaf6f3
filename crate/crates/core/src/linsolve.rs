//! Sparse symmetric positive definite operators and the two linear solvers the
//! project needs: preconditioned conjugate gradients and tridiagonal
//! elimination.
//!
//! All reductions run in a fixed sequential order so that results are
//! reproducible bit for bit.

use crate::error::{Error, Result};

/// Square sparse matrix in compressed-row form.
#[derive(Clone, Debug)]
pub struct SparseOperator {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    symmetric: bool,
}

impl SparseOperator {
    /// Builds the matrix from per-row `(column, value)` lists. Duplicate
    /// columns in a row are summed; entries are stored sorted by column.
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for (r, mut row) in rows.into_iter().enumerate() {
            row.sort_by_key(|e| e.0);
            let start = cols.len();
            for (c, v) in row {
                if c >= n {
                    return Err(Error::InvalidParameter(format!("row {r}: column {c} out of range")));
                }
                if cols.len() > start && *cols.last().unwrap() == c {
                    *vals.last_mut().unwrap() += v;
                } else {
                    cols.push(c);
                    vals.push(v);
                }
            }
            row_ptr.push(cols.len());
        }
        let mut op = SparseOperator {
            n,
            row_ptr,
            cols,
            vals,
            symmetric: false,
        };
        op.symmetric = op.check_symmetric(1e-14);
        Ok(op)
    }

    pub fn identity(n: usize) -> Self {
        Self::from_rows((0..n).map(|i| vec![(i, 1.0)]).collect()).expect("identity is well formed")
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.cols[span.clone()].iter().copied().zip(self.vals[span].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.row(r).find(|e| e.0 == c).map_or(0.0, |e| e.1)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|r| self.get(r, r)).collect()
    }

    /// `y = A x`.
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        for (r, yr) in y.iter_mut().enumerate().take(self.n) {
            let mut acc = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.vals[k] * x[self.cols[k]];
            }
            *yr = acc;
        }
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.apply(x, &mut y);
        y
    }

    /// Entry-wise symmetry test, relative to the larger magnitude.
    pub fn check_symmetric(&self, rel_tol: f64) -> bool {
        (0..self.n).all(|r| {
            self.row(r).all(|(c, v)| {
                let t = self.get(c, r);
                (v - t).abs() <= rel_tol * v.abs().max(t.abs())
            })
        })
    }

    /// Checks the M-matrix sign pattern: positive diagonal, non-positive
    /// off-diagonals and weak row diagonal dominance. Returns the first
    /// offending row on failure.
    pub fn check_m_matrix(&self) -> std::result::Result<(), String> {
        for r in 0..self.n {
            let mut diag = 0.0;
            let mut off = 0.0;
            for (c, v) in self.row(r) {
                if c == r {
                    diag = v;
                } else if v > 0.0 {
                    return Err(format!("row {r}: positive off-diagonal {v} at column {c}"));
                } else {
                    off -= v;
                }
            }
            if !(diag > 0.0) {
                return Err(format!("row {r}: non-positive diagonal {diag}"));
            }
            if diag < off * (1.0 - 1e-12) {
                return Err(format!("row {r}: diagonal {diag} below off-diagonal sum {off}"));
            }
        }
        Ok(())
    }

    /// Dense copy, row-major. Meant for small test systems only.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n]; self.n];
        for (r, row) in d.iter_mut().enumerate() {
            for (c, v) in self.row(r) {
                row[c] = v;
            }
        }
        d
    }
}

/// Residual history entries kept for error reports.
const HISTORY_CAP: usize = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preconditioner {
    None,
    Jacobi,
}

#[derive(Clone, Copy, Debug)]
pub struct SolveOptions {
    pub rel_tol: f64,
    /// Defaults to `20 * dim` when `None`.
    pub max_iter: Option<usize>,
    pub preconditioner: Preconditioner,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            rel_tol: 1e-12,
            max_iter: None,
            preconditioner: Preconditioner::Jacobi,
        }
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Solves `A x = b` for symmetric positive definite `A` starting from zero.
pub fn solve_spd(a: &SparseOperator, b: &[f64], opts: &SolveOptions) -> Result<Vec<f64>> {
    let mut x = vec![0.0; a.dim()];
    solve_spd_from(a, b, &mut x, opts)?;
    Ok(x)
}

/// Conjugate gradients warm-started from `x`, which is overwritten with the
/// solution. On success `||A x - b|| <= rel_tol ||b||` holds for the true
/// residual. Returns the number of iterations.
pub fn solve_spd_from(a: &SparseOperator, b: &[f64], x: &mut [f64], opts: &SolveOptions) -> Result<usize> {
    let n = a.dim();
    assert_eq!(b.len(), n);
    assert_eq!(x.len(), n);
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(0);
    }
    let target = opts.rel_tol * bnorm;
    let max_iter = opts.max_iter.unwrap_or(20 * n.max(1));
    let inv_diag: Vec<f64> = match opts.preconditioner {
        Preconditioner::Jacobi => a.diagonal().iter().map(|d| 1.0 / d).collect(),
        Preconditioner::None => vec![1.0; n],
    };

    let mut r = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut q = vec![0.0; n];
    let mut history = Vec::new();
    let record = |history: &mut Vec<f64>, r: f64| {
        if history.len() < HISTORY_CAP {
            history.push(r);
        }
    };
    let mut iters = 0;
    let mut last_pass = f64::INFINITY;

    // The recurrence residual drifts from the true one near machine precision,
    // so each pass ends with a true-residual check and restarts if needed.
    loop {
        a.apply(x, &mut q);
        for i in 0..n {
            r[i] = b[i] - q[i];
        }
        let mut rnorm = norm2(&r);
        record(&mut history, rnorm / bnorm);
        if rnorm <= target {
            return Ok(iters);
        }
        // A restart that gains less than a factor two has hit the round-off
        // floor; further passes cannot reach the target.
        if iters >= max_iter || rnorm > 0.5 * last_pass {
            return Err(Error::LinearNonConvergence {
                iterations: iters,
                final_residual: rnorm / bnorm,
                residual_history: history,
            });
        }
        last_pass = rnorm;
        for i in 0..n {
            z[i] = inv_diag[i] * r[i];
        }
        p.copy_from_slice(&z);
        let mut rz = dot(&r, &z);
        while iters < max_iter {
            a.apply(&p, &mut q);
            let pq = dot(&p, &q);
            if !(pq > 0.0) {
                return Err(Error::LinearNonConvergence {
                    iterations: iters,
                    final_residual: rnorm / bnorm,
                    residual_history: history,
                });
            }
            let alpha = rz / pq;
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * q[i];
            }
            iters += 1;
            rnorm = norm2(&r);
            record(&mut history, rnorm / bnorm);
            if rnorm <= 0.5 * target {
                break;
            }
            for i in 0..n {
                z[i] = inv_diag[i] * r[i];
            }
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
    }
}

/// Tridiagonal elimination (Thomas algorithm). `lower[0]` and
/// `upper[n - 1]` are ignored.
pub fn solve_tridiag(lower: &[f64], diag: &[f64], upper: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    let n = diag.len();
    assert!(
        lower.len() == n && upper.len() == n && b.len() == n,
        "tridiagonal bands must match"
    );
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut piv = diag[0];
    if piv == 0.0 {
        return Err(Error::ZeroPivot(0));
    }
    c[0] = upper[0] / piv;
    d[0] = b[0] / piv;
    for i in 1..n {
        piv = diag[i] - lower[i] * c[i - 1];
        if piv == 0.0 || !piv.is_finite() {
            return Err(Error::ZeroPivot(i));
        }
        c[i] = if i + 1 < n { upper[i] / piv } else { 0.0 };
        d[i] = (b[i] - lower[i] * d[i - 1]) / piv;
    }
    let mut x = d;
    for i in (0..n - 1).rev() {
        x[i] -= c[i] * x[i + 1];
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Gaussian elimination with partial pivoting; test oracle only.
    fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
        let n = b.len();
        for k in 0..n {
            let p = (k..n).max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs())).unwrap();
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

    fn laplacian_1d(n: usize) -> SparseOperator {
        let rows = (0..n)
            .map(|i| {
                let mut r = vec![(i, 2.0)];
                if i > 0 {
                    r.push((i - 1, -1.0));
                }
                if i + 1 < n {
                    r.push((i + 1, -1.0));
                }
                r
            })
            .collect();
        SparseOperator::from_rows(rows).unwrap()
    }

    #[test]
    fn identity_returns_rhs() {
        let a = SparseOperator::identity(4);
        let b = vec![1.0, -2.0, 3.5, 0.25];
        let x = solve_spd(&a, &b, &SolveOptions::default()).unwrap();
        assert_eq!(x, b);
    }

    #[test]
    fn cg_matches_dense_elimination() {
        let a = laplacian_1d(5);
        assert!(a.is_symmetric());
        assert!(a.check_m_matrix().is_ok());
        let b = vec![1.0; 5];
        let x = solve_spd(&a, &b, &SolveOptions::default()).unwrap();
        let x_ref = dense_solve(a.to_dense(), b.clone());
        for (u, v) in x.iter().zip(&x_ref) {
            assert!((u - v).abs() < 1e-10);
        }
        let r: Vec<f64> = a.mul(&x).iter().zip(&b).map(|(ax, bi)| ax - bi).collect();
        assert!(norm2(&r) <= 1e-12 * norm2(&b));
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let a = laplacian_1d(7);
        let mut x = vec![3.0; 7];
        solve_spd_from(&a, &[0.0; 7], &mut x, &SolveOptions::default()).unwrap();
        assert!(x.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn warm_start_from_solution_needs_no_iterations() {
        let a = laplacian_1d(20);
        let b: Vec<f64> = (0..20).map(|i| (i as f64).sin()).collect();
        let mut x = solve_spd(&a, &b, &SolveOptions::default()).unwrap();
        let it = solve_spd_from(&a, &b, &mut x, &SolveOptions::default()).unwrap();
        assert_eq!(it, 0);
    }

    #[test]
    fn iteration_cap_reports_history() {
        let a = laplacian_1d(50);
        let b = vec![1.0; 50];
        let opts = SolveOptions {
            max_iter: Some(3),
            ..SolveOptions::default()
        };
        match solve_spd(&a, &b, &opts) {
            Err(Error::LinearNonConvergence {
                iterations,
                residual_history,
                ..
            }) => {
                assert_eq!(iterations, 3);
                assert!(!residual_history.is_empty());
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unpreconditioned_cg_also_converges() {
        let a = laplacian_1d(30);
        let b = vec![1.0; 30];
        let opts = SolveOptions {
            preconditioner: Preconditioner::None,
            ..SolveOptions::default()
        };
        let x = solve_spd(&a, &b, &opts).unwrap();
        let x_ref = dense_solve(a.to_dense(), b);
        assert!(x.iter().zip(&x_ref).all(|(u, v)| (u - v).abs() < 1e-9));
    }

    #[test]
    fn m_matrix_check_catches_sign_errors() {
        let a = SparseOperator::from_rows(vec![vec![(0, 1.0), (1, 0.5)], vec![(0, 0.5), (1, 1.0)]]).unwrap();
        assert!(a.check_m_matrix().is_err());
        let a = SparseOperator::from_rows(vec![vec![(0, 1.0), (1, -2.0)], vec![(0, -2.0), (1, 1.0)]]).unwrap();
        assert!(a.check_m_matrix().is_err());
    }

    #[test]
    fn asymmetry_detected() {
        let a = SparseOperator::from_rows(vec![vec![(0, 2.0), (1, -1.0)], vec![(0, -0.5), (1, 2.0)]]).unwrap();
        assert!(!a.is_symmetric());
    }

    #[test]
    fn thomas_small_system() {
        let x = solve_tridiag(&[0.0, -1.0, -1.0], &[2.0; 3], &[-1.0, -1.0, 0.0], &[1.0; 3]).unwrap();
        let x_ref = dense_solve(
            vec![vec![2.0, -1.0, 0.0], vec![-1.0, 2.0, -1.0], vec![0.0, -1.0, 2.0]],
            vec![1.0; 3],
        );
        for (u, v) in x.iter().zip(&x_ref) {
            assert!((u - v).abs() < 1e-14);
        }
        assert!((x[0] - 1.5).abs() < 1e-14 && (x[1] - 2.0).abs() < 1e-14 && (x[2] - 1.5).abs() < 1e-14);
    }

    #[test]
    fn thomas_identity_and_zero() {
        let b = [0.5, -1.0, 2.0, 4.0];
        assert_eq!(solve_tridiag(&[0.0; 4], &[1.0; 4], &[0.0; 4], &b).unwrap(), b.to_vec());
        assert_eq!(
            solve_tridiag(&[0.0, -1.0, -1.0], &[2.0; 3], &[-1.0, -1.0, 0.0], &[0.0; 3]).unwrap(),
            vec![0.0; 3]
        );
    }

    #[test]
    fn thomas_zero_pivot() {
        assert!(matches!(
            solve_tridiag(&[0.0, 1.0], &[0.0, 1.0], &[1.0, 0.0], &[1.0, 1.0]),
            Err(Error::ZeroPivot(0))
        ));
        assert!(matches!(
            solve_tridiag(&[0.0, 1.0], &[1.0, 1.0], &[1.0, 0.0], &[1.0, 1.0]),
            Err(Error::ZeroPivot(1))
        ));
    }
}
