//! Dense N-way tensors with a pinned linear layout.
//!
//! The layout is mode-1-fastest: the linear index of entry (i_1, ..., i_N) is
//! i_1 + I_1*(i_2 + I_2*(i_3 + ...)) with all indices zero-based. Both
//! unfolding conventions are defined as explicit index bijections against this
//! layout.
//!
//! For mode n (zero-based), group the remaining modes into the "inner" block
//! (modes before n, combined size `inner`) and the "outer" block (modes after
//! n, combined size `outer`). The linear index decomposes as
//! `lin = in + inner*(i_n + I_n*out)`, and
//! - classical unfolding X_(n) puts column `in + inner*out` (earlier modes
//!   fastest),
//! - shifted unfolding X_[n] puts column `out + outer*in` (mode n+1 fastest).

use crate::error::{Result, TrError};
use crate::linalg::Mat;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Clone, Debug, PartialEq)]
pub struct DenseTensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl DenseTensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.len() < 2 {
            return Err(TrError::InvalidTensor(format!(
                "need at least 2 modes, got {}",
                shape.len()
            )));
        }
        if shape.iter().any(|&s| s == 0) {
            return Err(TrError::InvalidTensor("zero-size mode".into()));
        }
        let n: usize = shape.iter().product();
        if data.len() != n {
            return Err(TrError::InvalidTensor(format!(
                "data length {} does not match shape product {}",
                data.len(),
                n
            )));
        }
        Ok(DenseTensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Result<Self> {
        let n: usize = shape.iter().product();
        DenseTensor::new(shape, vec![0.0; n])
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn order(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Linear index of a multi-index (mode-1 fastest).
    pub fn linear_index(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.shape.len());
        let mut lin = 0;
        for (k, &i) in idx.iter().enumerate().rev() {
            debug_assert!(i < self.shape[k]);
            lin = lin * self.shape[k] + i;
        }
        lin
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[self.linear_index(idx)]
    }

    pub fn set(&mut self, idx: &[usize], v: f64) {
        let lin = self.linear_index(idx);
        self.data[lin] = v;
    }

    fn check_mode(&self, n: usize) -> Result<()> {
        if n >= self.shape.len() {
            return Err(TrError::ModeOutOfRange {
                mode: n,
                order: self.shape.len(),
            });
        }
        Ok(())
    }

    fn inner_outer(&self, n: usize) -> (usize, usize) {
        let inner: usize = self.shape[..n].iter().product();
        let outer: usize = self.shape[n + 1..].iter().product();
        (inner, outer)
    }

    /// Classical mode-n unfolding X_(n): columns ordered by
    /// (i_1, ..., i_{n-1}, i_{n+1}, ..., i_N) with i_1 fastest.
    pub fn unfold_classical(&self, n: usize) -> Result<Mat> {
        self.check_mode(n)?;
        let (inner, outer) = self.inner_outer(n);
        let rows = self.shape[n];
        let cols = inner * outer;
        let mut m = Mat::zeros(rows, cols);
        for out in 0..outer {
            for i in 0..rows {
                let src = inner * (i + rows * out);
                let dst_base = i * cols + inner * out;
                m.data[dst_base..dst_base + inner]
                    .copy_from_slice(&self.data[src..src + inner]);
            }
        }
        Ok(m)
    }

    /// Shifted mode-n unfolding X_[n]: columns ordered by
    /// (i_{n+1}, ..., i_N, i_1, ..., i_{n-1}) with i_{n+1} fastest.
    pub fn unfold_shifted(&self, n: usize) -> Result<Mat> {
        self.check_mode(n)?;
        let (inner, outer) = self.inner_outer(n);
        let rows = self.shape[n];
        let cols = inner * outer;
        let mut m = Mat::zeros(rows, cols);
        for out in 0..outer {
            for i in 0..rows {
                let src = inner * (i + rows * out);
                let dst_base = i * cols + out;
                for inn in 0..inner {
                    m.data[dst_base + outer * inn] = self.data[src + inn];
                }
            }
        }
        Ok(m)
    }

    /// Inverse of [`unfold_classical`](Self::unfold_classical).
    pub fn fold_classical(m: &Mat, n: usize, shape: &[usize]) -> Result<DenseTensor> {
        let mut t = DenseTensor::zeros(shape.to_vec())?;
        t.check_mode(n)?;
        let (inner, outer) = t.inner_outer(n);
        let rows = shape[n];
        if m.rows != rows || m.cols != inner * outer {
            return Err(TrError::ShapeMismatch(format!(
                "matrix {}x{} does not fold to shape {:?} at mode {}",
                m.rows, m.cols, shape, n
            )));
        }
        for out in 0..outer {
            for i in 0..rows {
                let dst = inner * (i + rows * out);
                let src_base = i * m.cols + inner * out;
                t.data[dst..dst + inner].copy_from_slice(&m.data[src_base..src_base + inner]);
            }
        }
        Ok(t)
    }

    /// Inverse of [`unfold_shifted`](Self::unfold_shifted).
    pub fn fold_shifted(m: &Mat, n: usize, shape: &[usize]) -> Result<DenseTensor> {
        let mut t = DenseTensor::zeros(shape.to_vec())?;
        t.check_mode(n)?;
        let (inner, outer) = t.inner_outer(n);
        let rows = shape[n];
        if m.rows != rows || m.cols != inner * outer {
            return Err(TrError::ShapeMismatch(format!(
                "matrix {}x{} does not fold to shape {:?} at mode {}",
                m.rows, m.cols, shape, n
            )));
        }
        for out in 0..outer {
            for i in 0..rows {
                let dst = inner * (i + rows * out);
                let src_base = i * m.cols + out;
                for inn in 0..inner {
                    t.data[dst + inn] = m.data[src_base + outer * inn];
                }
            }
        }
        Ok(t)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Entrywise map, parallel when the feature is on.
    pub fn map(&self, f: impl Fn(f64) -> f64 + Sync + Send) -> DenseTensor {
        let mut out = self.clone();
        #[cfg(feature = "parallel")]
        out.data.par_iter_mut().for_each(|v| *v = f(*v));
        #[cfg(not(feature = "parallel"))]
        out.data.iter_mut().for_each(|v| *v = f(*v));
        out
    }
}

/// Binary observation mask paired with a tensor of the same shape.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservationMask {
    shape: Vec<usize>,
    bits: Vec<bool>,
}

impl ObservationMask {
    pub fn new(shape: Vec<usize>, bits: Vec<bool>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if shape.len() < 2 || n == 0 {
            return Err(TrError::InvalidTensor("bad mask shape".into()));
        }
        if bits.len() != n {
            return Err(TrError::ShapeMismatch(format!(
                "mask bits {} vs shape product {}",
                bits.len(),
                n
            )));
        }
        Ok(ObservationMask { shape, bits })
    }

    pub fn all_observed(shape: Vec<usize>) -> Result<Self> {
        let n: usize = shape.iter().product();
        ObservationMask::new(shape, vec![true; n])
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn observed_count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    /// Mask as a 0/1 tensor (for unfolding alongside data).
    pub fn to_tensor(&self) -> DenseTensor {
        DenseTensor::new(
            self.shape.clone(),
            self.bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
        )
        .expect("mask invariants imply a valid tensor")
    }
}

fn check_same_shape(a: &[usize], b: &[usize]) -> Result<()> {
    if a != b {
        return Err(TrError::ShapeMismatch(format!("{a:?} vs {b:?}")));
    }
    Ok(())
}

/// Entrywise sqrt(W) .* P .* (X - R). Unobserved entries are exactly zero.
/// `w = None` means unit weights.
pub fn masked_weighted_residual(
    x: &DenseTensor,
    r: &DenseTensor,
    p: &ObservationMask,
    w: Option<&DenseTensor>,
) -> Result<DenseTensor> {
    check_same_shape(x.shape(), r.shape())?;
    check_same_shape(x.shape(), p.shape())?;
    if let Some(w) = w {
        check_same_shape(x.shape(), w.shape())?;
    }
    let mut out = DenseTensor::zeros(x.shape().to_vec())?;
    let unit = vec![];
    let wdata: &[f64] = w.map(|w| w.data()).unwrap_or(&unit);
    for (i, o) in out.data.iter_mut().enumerate() {
        if p.bits[i] {
            let wv = if wdata.is_empty() { 1.0 } else { wdata[i] };
            *o = wv.sqrt() * (x.data[i] - r.data[i]);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t123() -> DenseTensor {
        DenseTensor::new(vec![2, 2, 2], (1..=8).map(|v| v as f64).collect()).unwrap()
    }

    #[test]
    fn rejects_bad_construction() {
        assert!(DenseTensor::new(vec![4], vec![0.0; 4]).is_err());
        assert!(DenseTensor::new(vec![2, 3], vec![0.0; 5]).is_err());
        assert!(DenseTensor::new(vec![2, 0], vec![]).is_err());
    }

    #[test]
    fn classical_unfold_matches_enumeration() {
        // oracle: walk every multi-index and place it by the definition
        let x = t123();
        let m = x.unfold_classical(1).unwrap();
        for i0 in 0..2 {
            for i1 in 0..2 {
                for i2 in 0..2 {
                    let col = i0 + 2 * i2; // (i_1, i_3), i_1 fastest
                    assert_eq!(m.at(i1, col), x.get(&[i0, i1, i2]));
                }
            }
        }
    }

    #[test]
    fn shifted_unfold_matches_enumeration() {
        let x = DenseTensor::new(vec![2, 3, 4], (0..24).map(|v| v as f64).collect()).unwrap();
        let m = x.unfold_shifted(1).unwrap();
        for i0 in 0..2 {
            for i1 in 0..3 {
                for i2 in 0..4 {
                    let col = i2 + 4 * i0; // (i_3, i_1), i_3 fastest
                    assert_eq!(m.at(i1, col), x.get(&[i0, i1, i2]));
                }
            }
        }
    }

    #[test]
    fn mode0_conventions_coincide() {
        let x = DenseTensor::new(vec![3, 2, 2], (0..12).map(|v| v as f64).collect()).unwrap();
        let a = x.unfold_classical(0).unwrap();
        let b = x.unfold_shifted(0).unwrap();
        assert_eq!(a.data, b.data);
    }

    #[test]
    fn degenerate_modes_column() {
        let x = DenseTensor::new(vec![4, 1, 1], (0..4).map(|v| v as f64).collect()).unwrap();
        let m = x.unfold_classical(0).unwrap();
        assert_eq!((m.rows, m.cols), (4, 1));
        assert_eq!(m.data, x.data);
    }

    #[test]
    fn fold_unfold_round_trip() {
        let x = DenseTensor::new(vec![2, 3, 4, 2], (0..48).map(|v| v as f64).collect()).unwrap();
        for n in 0..4 {
            let c = x.unfold_classical(n).unwrap();
            assert_eq!(DenseTensor::fold_classical(&c, n, x.shape()).unwrap(), x);
            let s = x.unfold_shifted(n).unwrap();
            assert_eq!(DenseTensor::fold_shifted(&s, n, x.shape()).unwrap(), x);
        }
    }

    #[test]
    fn fold_shifted_2x2_transpose_relation() {
        // for a matrix, the shifted mode-2 unfolding is the transpose of the
        // classical layout
        let x = DenseTensor::new(vec![2, 2], vec![1., 2., 3., 4.]).unwrap();
        let s = x.unfold_shifted(1).unwrap();
        let c = x.unfold_classical(1).unwrap();
        assert_eq!(s.data, c.data); // single remaining mode: same ordering
        let back = DenseTensor::fold_shifted(&s, 1, &[2, 2]).unwrap();
        assert_eq!(back, x);
    }

    #[test]
    fn mode_out_of_range() {
        assert!(t123().unfold_classical(3).is_err());
        assert!(t123().unfold_shifted(5).is_err());
    }

    #[test]
    fn frobenius_values() {
        assert_eq!(DenseTensor::zeros(vec![3, 3]).unwrap().frobenius_norm(), 0.0);
        let ones = DenseTensor::new(vec![2, 3], vec![1.0; 6]).unwrap();
        assert!((ones.frobenius_norm() - 6f64.sqrt()).abs() < 1e-15);
        // unfolding is an entry permutation
        let x = t123();
        assert!((x.unfold_shifted(2).unwrap().frobenius_norm() - x.frobenius_norm()).abs() < 1e-12);
    }

    #[test]
    fn residual_edge_cases() {
        let x = t123();
        let p = ObservationMask::all_observed(vec![2, 2, 2]).unwrap();
        // X = R -> zero
        let r = masked_weighted_residual(&x, &x, &p, None).unwrap();
        assert!(r.data().iter().all(|&v| v == 0.0));
        // all-false mask -> zero
        let p0 = ObservationMask::new(vec![2, 2, 2], vec![false; 8]).unwrap();
        let z = DenseTensor::zeros(vec![2, 2, 2]).unwrap();
        let r = masked_weighted_residual(&x, &z, &p0, None).unwrap();
        assert!(r.data().iter().all(|&v| v == 0.0));
        // unit weights, full mask -> X - R
        let r = masked_weighted_residual(&x, &z, &p, None).unwrap();
        assert_eq!(r.data(), x.data());
        // unobserved entries zero regardless of weights
        let mut bits = vec![true; 8];
        bits[3] = false;
        let pm = ObservationMask::new(vec![2, 2, 2], bits).unwrap();
        let w = DenseTensor::new(vec![2, 2, 2], vec![7.0; 8]).unwrap();
        let r = masked_weighted_residual(&x, &z, &pm, Some(&w)).unwrap();
        assert_eq!(r.data()[3], 0.0);
        // shape mismatch
        let y = DenseTensor::zeros(vec![2, 4]).unwrap();
        assert!(masked_weighted_residual(&x, &y, &p, None).is_err());
    }
}
