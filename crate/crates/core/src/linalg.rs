//! Small dense linear algebra: pivoted Householder QR for least squares and
//! Cholesky for the Gaussian approximations that precondition the sampler.

use std::ops::{Index, IndexMut};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Matrix {
    pub rows: usize,
    pub cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols);
        Matrix { rows, cols, data }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        (0..self.rows).map(|i| dot(self.row(i), v)).collect()
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Householder QR with column pivoting, A P = Q R.
pub(crate) struct PivotedQr {
    /// R on and above the diagonal, reflector tails below it.
    qr: Matrix,
    /// (beta, head) per reflector: H_k = I - beta v v^T with v = (head, tail).
    reflectors: Vec<(f64, f64)>,
    /// perm[k] = original column placed at position k.
    pub perm: Vec<usize>,
    pub rank: usize,
}

impl PivotedQr {
    /// Factorizes `a`; columns whose remaining norm falls below
    /// `rel_tol * |R[0,0]|` are treated as dependent.
    pub fn new(a: &Matrix, rel_tol: f64) -> Self {
        let (m, n) = (a.rows, a.cols);
        let mut qr = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut norms = vec![0.0; n];
        let mut reflectors = Vec::with_capacity(n);
        let mut threshold = 0.0;
        for k in 0..n.min(m) {
            // pivot on the largest remaining column norm, recomputed exactly
            // rather than downdated
            for j in k..n {
                norms[j] = (k..m).map(|i| qr[(i, j)] * qr[(i, j)]).sum();
            }
            let p = (k..n).max_by(|&x, &y| norms[x].total_cmp(&norms[y])).unwrap();
            if p != k {
                for i in 0..m {
                    let tmp = qr[(i, k)];
                    qr[(i, k)] = qr[(i, p)];
                    qr[(i, p)] = tmp;
                }
                norms.swap(k, p);
                perm.swap(k, p);
            }
            let norm = norms[k].sqrt();
            if k == 0 {
                threshold = rel_tol * norm;
            }
            if norm == 0.0 || norm <= threshold {
                break;
            }
            let x0 = qr[(k, k)];
            let alpha = if x0 >= 0.0 { -norm } else { norm };
            let head = x0 - alpha;
            let vnorm2 = head * head + (k + 1..m).map(|i| qr[(i, k)] * qr[(i, k)]).sum::<f64>();
            let beta = 2.0 / vnorm2;
            for j in k + 1..n {
                let s = head * qr[(k, j)] + (k + 1..m).map(|i| qr[(i, k)] * qr[(i, j)]).sum::<f64>();
                let f = beta * s;
                qr[(k, j)] -= f * head;
                for i in k + 1..m {
                    qr[(i, j)] -= f * qr[(i, k)];
                }
            }
            qr[(k, k)] = alpha;
            reflectors.push((beta, head));
        }
        let rank = reflectors.len();
        PivotedQr { qr, reflectors, perm, rank }
    }

    /// Computes Q^T y in place.
    fn apply_qt(&self, y: &mut [f64]) {
        let m = self.qr.rows;
        for (k, &(beta, head)) in self.reflectors.iter().enumerate() {
            let s = head * y[k] + (k + 1..m).map(|i| self.qr[(i, k)] * y[i]).sum::<f64>();
            let f = beta * s;
            y[k] -= f * head;
            for i in k + 1..m {
                y[i] -= f * self.qr[(i, k)];
            }
        }
    }

    pub fn r(&self, i: usize, j: usize) -> f64 {
        self.qr[(i, j)]
    }

    /// Least-squares coefficients in the original column order. Requires
    /// full column rank.
    pub fn solve(&self, y: &[f64]) -> Vec<f64> {
        let n = self.qr.cols;
        debug_assert_eq!(self.rank, n);
        let mut qty = y.to_vec();
        self.apply_qt(&mut qty);
        let z = self.back_substitute(&qty[..n]);
        let mut beta = vec![0.0; n];
        for (k, &col) in self.perm.iter().enumerate() {
            beta[col] = z[k];
        }
        beta
    }

    fn back_substitute(&self, b: &[f64]) -> Vec<f64> {
        let n = b.len();
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|j| self.r(i, j) * x[j]).sum();
            x[i] = (b[i] - s) / self.r(i, i);
        }
        x
    }

    /// (A^T A)^{-1} in the original column order, from R^{-1} R^{-T}.
    pub fn normal_inverse(&self) -> Matrix {
        let n = self.qr.cols;
        let mut rinv = Matrix::zeros(n, n);
        for c in 0..n {
            let mut e = vec![0.0; n];
            e[c] = 1.0;
            let col = self.back_substitute(&e);
            for (r, v) in col.into_iter().enumerate() {
                rinv[(r, c)] = v;
            }
        }
        let mut out = Matrix::zeros(n, n);
        for a in 0..n {
            for b in 0..n {
                let s: f64 = (0..n).map(|k| rinv[(a, k)] * rinv[(b, k)]).sum();
                out[(self.perm[a], self.perm[b])] = s;
            }
        }
        out
    }
}

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
pub(crate) fn cholesky(a: &Matrix) -> Option<Matrix> {
    let n = a.rows;
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let d = a[(j, j)] - (0..j).map(|k| l[(j, k)] * l[(j, k)]).sum::<f64>();
        if !(d > 0.0) || !d.is_finite() {
            return None;
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in j + 1..n {
            let s = a[(i, j)] - (0..j).map(|k| l[(i, k)] * l[(j, k)]).sum::<f64>();
            l[(i, j)] = s / d;
        }
    }
    Some(l)
}

/// Solves L x = b for lower-triangular L.
pub(crate) fn forward_substitute(l: &Matrix, b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut x = vec![0.0; n];
    for i in 0..n {
        let s: f64 = (0..i).map(|k| l[(i, k)] * x[k]).sum();
        x[i] = (b[i] - s) / l[(i, i)];
    }
    x
}

/// Solves L^T x = b for lower-triangular L.
pub(crate) fn backward_substitute_transposed(l: &Matrix, b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| l[(k, i)] * x[k]).sum();
        x[i] = (b[i] - s) / l[(i, i)];
    }
    x
}

/// Inverse of an SPD matrix through its Cholesky factor.
pub(crate) fn spd_inverse(a: &Matrix) -> Option<Matrix> {
    let l = cholesky(a)?;
    let n = a.rows;
    let mut inv = Matrix::zeros(n, n);
    for c in 0..n {
        let mut e = vec![0.0; n];
        e[c] = 1.0;
        let y = forward_substitute(&l, &e);
        let x = backward_substitute_transposed(&l, &y);
        for (r, v) in x.into_iter().enumerate() {
            inv[(r, c)] = v;
        }
    }
    Some(inv)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn design() -> Matrix {
        Matrix::from_row_major(
            5,
            3,
            vec![
                1.0, 0.5, 2.0, //
                1.0, -1.0, 0.0, //
                1.0, 2.0, 1.0, //
                1.0, 0.0, -1.5, //
                1.0, 3.0, 0.25,
            ],
        )
    }

    #[test]
    fn qr_solves_exact_system() {
        let a = design();
        let beta = [0.5, -2.0, 1.25];
        let y = a.mul_vec(&beta);
        let qr = PivotedQr::new(&a, 1e-10);
        assert_eq!(qr.rank, 3);
        for (got, want) in qr.solve(&y).iter().zip(beta) {
            assert!((got - want).abs() < 1e-13);
        }
    }

    #[test]
    fn normal_inverse_matches_gram_inverse() {
        let a = design();
        let mut gram = Matrix::zeros(3, 3);
        for i in 0..3 {
            for j in 0..3 {
                gram[(i, j)] = (0..5).map(|r| a[(r, i)] * a[(r, j)]).sum();
            }
        }
        let via_qr = PivotedQr::new(&a, 1e-10).normal_inverse();
        let via_chol = spd_inverse(&gram).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert!((via_qr[(i, j)] - via_chol[(i, j)]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn detects_dependent_columns() {
        let mut a = design();
        for r in 0..5 {
            a[(r, 2)] = 2.0 * a[(r, 1)] - a[(r, 0)];
        }
        assert_eq!(PivotedQr::new(&a, 1e-10).rank, 2);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = Matrix::from_row_major(2, 2, vec![1.0, 2.0, 2.0, 1.0]);
        assert!(cholesky(&a).is_none());
        let l = cholesky(&Matrix::from_row_major(2, 2, vec![4.0, 2.0, 2.0, 5.0])).unwrap();
        assert_eq!((l[(0, 0)], l[(1, 1)]), (2.0, 2.0));
    }
}
