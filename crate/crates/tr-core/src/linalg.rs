//! Small dense matrix kernels used by the solvers.
//!
//! Matrices are row-major. The parallel paths split work by output row, so
//! every element is still produced by one sequential accumulation and results
//! do not depend on the thread count.

use crate::error::{Result, TrError};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Row-major dense matrix of f64.
#[derive(Clone, Debug, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols);
        Mat { rows, cols, data }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn transpose(&self) -> Mat {
        let mut out = Mat::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn scale(&mut self, a: f64) {
        for v in &mut self.data {
            *v *= a;
        }
    }

    /// self += a * other
    pub fn add_scaled(&mut self, other: &Mat, a: f64) {
        assert_eq!(self.rows, other.rows);
        assert_eq!(self.cols, other.cols);
        for (x, y) in self.data.iter_mut().zip(&other.data) {
            *x += a * y;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Frobenius inner product <A, B>.
pub fn inner(a: &Mat, b: &Mat) -> f64 {
    assert_eq!(a.rows, b.rows);
    assert_eq!(a.cols, b.cols);
    a.data.iter().zip(&b.data).map(|(x, y)| x * y).sum()
}

fn matmul_row(out_row: &mut [f64], a_row: &[f64], b: &Mat) {
    out_row.fill(0.0);
    for (k, &av) in a_row.iter().enumerate() {
        if av == 0.0 {
            continue;
        }
        let brow = b.row(k);
        for (o, &bv) in out_row.iter_mut().zip(brow) {
            *o += av * bv;
        }
    }
}

fn matmul_nt_row(out_row: &mut [f64], a_row: &[f64], b: &Mat) {
    for (c, o) in out_row.iter_mut().enumerate() {
        let brow = b.row(c);
        let mut s = 0.0;
        for (x, y) in a_row.iter().zip(brow) {
            s += x * y;
        }
        *o = s;
    }
}

/// C = A * B, sequential path.
pub fn matmul_seq(a: &Mat, b: &Mat) -> Mat {
    assert_eq!(a.cols, b.rows, "matmul dimension mismatch");
    let mut out = Mat::zeros(a.rows, b.cols);
    for r in 0..a.rows {
        matmul_row(&mut out.data[r * b.cols..(r + 1) * b.cols], a.row(r), b);
    }
    out
}

/// C = A * B^T, sequential path.
pub fn matmul_nt_seq(a: &Mat, b: &Mat) -> Mat {
    assert_eq!(a.cols, b.cols, "matmul_nt dimension mismatch");
    let mut out = Mat::zeros(a.rows, b.rows);
    for r in 0..a.rows {
        matmul_nt_row(&mut out.data[r * b.rows..(r + 1) * b.rows], a.row(r), b);
    }
    out
}

/// C = A * B.
#[cfg(feature = "parallel")]
pub fn matmul(a: &Mat, b: &Mat) -> Mat {
    assert_eq!(a.cols, b.rows, "matmul dimension mismatch");
    let mut out = Mat::zeros(a.rows, b.cols);
    out.data
        .par_chunks_mut(b.cols)
        .zip(a.data.par_chunks(a.cols))
        .for_each(|(out_row, a_row)| matmul_row(out_row, a_row, b));
    out
}

#[cfg(not(feature = "parallel"))]
pub fn matmul(a: &Mat, b: &Mat) -> Mat {
    matmul_seq(a, b)
}

/// C = A * B^T.
#[cfg(feature = "parallel")]
pub fn matmul_nt(a: &Mat, b: &Mat) -> Mat {
    assert_eq!(a.cols, b.cols, "matmul_nt dimension mismatch");
    let mut out = Mat::zeros(a.rows, b.rows);
    out.data
        .par_chunks_mut(b.rows)
        .zip(a.data.par_chunks(a.cols))
        .for_each(|(out_row, a_row)| matmul_nt_row(out_row, a_row, b));
    out
}

#[cfg(not(feature = "parallel"))]
pub fn matmul_nt(a: &Mat, b: &Mat) -> Mat {
    matmul_nt_seq(a, b)
}

/// Cholesky factorization of a symmetric positive definite matrix.
/// Returns the lower factor L with A = L L^T, or an error if A is not SPD.
pub fn cholesky(a: &Mat) -> Result<Mat> {
    assert_eq!(a.rows, a.cols);
    let n = a.rows;
    let mut l = Mat::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut s = a.at(i, j);
            for k in 0..j {
                s -= l.at(i, k) * l.at(j, k);
            }
            if i == j {
                if s <= 0.0 || !s.is_finite() {
                    return Err(TrError::SolveFailed(format!(
                        "non-positive pivot {s:e} at index {i}"
                    )));
                }
                l.set(i, i, s.sqrt());
            } else {
                l.set(i, j, s / l.at(j, j));
            }
        }
    }
    Ok(l)
}

/// Solves X (G + lambda I) = D for X, with G symmetric PSD, via Cholesky of
/// the regularized matrix. Each row of D gives one row of X.
pub fn solve_spd_right(g: &Mat, lambda: f64, d: &Mat) -> Result<Mat> {
    assert_eq!(g.rows, g.cols);
    assert_eq!(d.cols, g.rows);
    let n = g.rows;
    let mut a = g.clone();
    for i in 0..n {
        a.data[i * n + i] += lambda;
    }
    let l = cholesky(&a)?;
    let mut x = Mat::zeros(d.rows, d.cols);
    let mut y = vec![0.0; n];
    for r in 0..d.rows {
        let rhs = d.row(r);
        // forward: L y = rhs
        for i in 0..n {
            let mut s = rhs[i];
            for k in 0..i {
                s -= l.at(i, k) * y[k];
            }
            y[i] = s / l.at(i, i);
        }
        // backward: L^T x = y
        let xr = &mut x.data[r * n..(r + 1) * n];
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in i + 1..n {
                s -= l.at(k, i) * xr[k];
            }
            xr[i] = s / l.at(i, i);
        }
    }
    Ok(x)
}
