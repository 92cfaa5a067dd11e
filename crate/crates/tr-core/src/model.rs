//! Tensor-ring core algebra: entrywise evaluation, reconstruction, core
//! merging and subchains.
//!
//! A core Z_k is stored as a 3-way [`DenseTensor`] of shape
//! (r_k, I_k, r_{k+1}); the lateral slice Z_k(i) is the r_k x r_{k+1} matrix
//! obtained by fixing the middle index.

use crate::error::{Result, TrError};
use crate::linalg::{matmul_seq, Mat};
use crate::tensor::DenseTensor;

/// Ordered ring of third-order cores with consistent bond ranks
/// (mode-3 size of Z_k equals mode-1 size of Z_{k+1}, cyclically).
#[derive(Clone, Debug, PartialEq)]
pub struct TRCores {
    cores: Vec<DenseTensor>,
}

impl TRCores {
    pub fn new(cores: Vec<DenseTensor>) -> Result<Self> {
        if cores.len() < 2 {
            return Err(TrError::InvalidCores(format!(
                "need at least 2 cores, got {}",
                cores.len()
            )));
        }
        for (k, c) in cores.iter().enumerate() {
            if c.order() != 3 {
                return Err(TrError::InvalidCores(format!(
                    "core {k} is order {} (expected 3)",
                    c.order()
                )));
            }
        }
        let n = cores.len();
        for k in 0..n {
            let right = cores[k].shape()[2];
            let left_next = cores[(k + 1) % n].shape()[0];
            if right != left_next {
                return Err(TrError::InvalidCores(format!(
                    "rank mismatch between core {k} (mode-3 size {right}) and core {} (mode-1 size {left_next})",
                    (k + 1) % n
                )));
            }
        }
        Ok(TRCores { cores })
    }

    pub fn order(&self) -> usize {
        self.cores.len()
    }

    pub fn cores(&self) -> &[DenseTensor] {
        &self.cores
    }

    pub fn core(&self, k: usize) -> &DenseTensor {
        &self.cores[k]
    }

    /// Replaces core k, keeping ring consistency.
    pub fn set_core(&mut self, k: usize, core: DenseTensor) -> Result<()> {
        if core.shape() != self.cores[k].shape() {
            return Err(TrError::InvalidCores(format!(
                "core {k} shape change {:?} -> {:?}",
                self.cores[k].shape(),
                core.shape()
            )));
        }
        self.cores[k] = core;
        Ok(())
    }

    /// Bond ranks r_1..r_N (r_k is the mode-1 size of core k).
    pub fn ranks(&self) -> Vec<usize> {
        self.cores.iter().map(|c| c.shape()[0]).collect()
    }

    /// Mode sizes I_1..I_N.
    pub fn dims(&self) -> Vec<usize> {
        self.cores.iter().map(|c| c.shape()[1]).collect()
    }

    /// Cores rotated left by one position (Z_2, ..., Z_N, Z_1).
    pub fn rotated(&self) -> TRCores {
        let mut cores = self.cores.clone();
        cores.rotate_left(1);
        TRCores { cores }
    }

    /// Lateral slice matrix Z_k(i) of size r_k x r_{k+1}.
    pub fn slice_mat(&self, k: usize, i: usize) -> Mat {
        lateral_slice(&self.cores[k], i)
    }

    /// Entry of the represented tensor: trace of the ordered slice product.
    pub fn tr_entry(&self, idx: &[usize]) -> Result<f64> {
        if idx.len() != self.cores.len() {
            return Err(TrError::ShapeMismatch(format!(
                "index length {} vs order {}",
                idx.len(),
                self.cores.len()
            )));
        }
        for (k, (&i, c)) in idx.iter().zip(&self.cores).enumerate() {
            if i >= c.shape()[1] {
                return Err(TrError::ModeOutOfRange {
                    mode: k,
                    order: c.shape()[1],
                });
            }
        }
        let mut acc = self.slice_mat(0, idx[0]);
        for (k, &i) in idx.iter().enumerate().skip(1) {
            acc = matmul_seq(&acc, &self.slice_mat(k, i));
        }
        // trace of r_1 x r_1 product
        let mut tr = 0.0;
        for a in 0..acc.rows {
            tr += acc.at(a, a);
        }
        Ok(tr)
    }

    /// Full reconstruction via subchain merging.
    pub fn reconstruct(&self) -> DenseTensor {
        let merged = self.subchain_prefix(self.cores.len()).expect("full prefix");
        let dims = self.dims();
        let total: usize = dims.iter().product();
        let r1 = merged.shape()[0];
        let mut data = vec![0.0; total];
        for (m, v) in data.iter_mut().enumerate() {
            let mut tr = 0.0;
            for a in 0..r1 {
                tr += merged.get(&[a, m, a]);
            }
            *v = tr;
        }
        DenseTensor::new(dims, data).expect("consistent dims")
    }

    /// Subchain Z^{!=k}: all cores except k merged in cyclic order
    /// k+1, ..., N, 1, ..., k-1. Shape (r_{k+1}, prod_{j!=k} I_j, r_k).
    pub fn subchain_except(&self, k: usize) -> Result<DenseTensor> {
        let n = self.cores.len();
        if k >= n {
            return Err(TrError::ModeOutOfRange { mode: k, order: n });
        }
        let mut acc = self.cores[(k + 1) % n].clone();
        for step in 2..n {
            let j = (k + step) % n;
            acc = merge_cores(&acc, &self.cores[j])?;
        }
        Ok(acc)
    }

    /// Subchain Z^{<=c}: the first c cores merged left to right.
    pub fn subchain_prefix(&self, c: usize) -> Result<DenseTensor> {
        if c < 1 || c > self.cores.len() {
            return Err(TrError::ModeOutOfRange {
                mode: c,
                order: self.cores.len(),
            });
        }
        let mut acc = self.cores[0].clone();
        for core in &self.cores[1..c] {
            acc = merge_cores(&acc, core)?;
        }
        Ok(acc)
    }

    /// Classical mode-2 unfolding Z_{k(2)}: I_k x (r_k r_{k+1}),
    /// column index r_k-fastest.
    pub fn core_unfold_2(&self, k: usize) -> Mat {
        self.cores[k].unfold_classical(1).expect("core is order 3")
    }

    /// Shifted mode-2 unfolding of the subchain, (prod_{j!=k} I_j) x (r_k r_{k+1}),
    /// column index (i_3, i_1) with the r_k index fastest. This is the
    /// coefficient matrix Z^{!=k}_[2] of the unfolding identity.
    pub fn neq_unfold(&self, k: usize) -> Result<Mat> {
        let sub = self.subchain_except(k)?;
        sub.unfold_shifted(1)
    }
}

/// Lateral slice Z(:, i, :) of a 3-way tensor as an r1 x r2 matrix.
pub fn lateral_slice(core: &DenseTensor, i: usize) -> Mat {
    let (r1, im, r2) = (core.shape()[0], core.shape()[1], core.shape()[2]);
    debug_assert!(i < im);
    let mut m = Mat::zeros(r1, r2);
    let data = core.data();
    for b in 0..r2 {
        let base = r1 * (i + im * b);
        for a in 0..r1 {
            m.data[a * r2 + b] = data[base + a];
        }
    }
    m
}

/// Writes matrix `m` into lateral slice i of `core`.
pub fn set_lateral_slice(core: &mut DenseTensor, i: usize, m: &Mat) {
    let (r1, im, r2) = (core.shape()[0], core.shape()[1], core.shape()[2]);
    debug_assert_eq!((m.rows, m.cols), (r1, r2));
    for b in 0..r2 {
        let base = r1 * (i + im * b);
        for a in 0..r1 {
            core.data_mut()[base + a] = m.data[a * r2 + b];
        }
    }
}

/// Merges two adjacent cores: slice at combined index (i_a + I_a * i_b)
/// equals A(i_a) * B(i_b), with i_a varying fastest.
pub fn merge_cores(a: &DenseTensor, b: &DenseTensor) -> Result<DenseTensor> {
    if a.order() != 3 || b.order() != 3 {
        return Err(TrError::InvalidCores("merge needs order-3 cores".into()));
    }
    let (ra, ia, rab) = (a.shape()[0], a.shape()[1], a.shape()[2]);
    let (rba, ib, rb) = (b.shape()[0], b.shape()[1], b.shape()[2]);
    if rab != rba {
        return Err(TrError::InvalidCores(format!(
            "inner rank mismatch {rab} vs {rba}"
        )));
    }
    let mut out = DenseTensor::zeros(vec![ra, ia * ib, rb])?;
    for jb in 0..ib {
        let bm = lateral_slice(b, jb);
        for ja in 0..ia {
            let am = lateral_slice(a, ja);
            let prod = matmul_seq(&am, &bm);
            set_lateral_slice(&mut out, ja + ia * jb, &prod);
        }
    }
    Ok(out)
}


#[cfg(test)]
mod tests {
    use super::testutil::random_cores;
    use super::*;

    fn ones_core(r1: usize, i: usize, r2: usize) -> DenseTensor {
        DenseTensor::new(vec![r1, i, r2], vec![1.0; r1 * i * r2]).unwrap()
    }

    #[test]
    fn rejects_ring_rank_mismatch() {
        let z1 = ones_core(1, 2, 2);
        let z2 = ones_core(3, 2, 1);
        assert!(TRCores::new(vec![z1, z2]).is_err());
    }

    #[test]
    fn rank_one_ones_entries() {
        let cores = TRCores::new(vec![ones_core(1, 2, 1), ones_core(1, 3, 1)]).unwrap();
        for i in 0..2 {
            for j in 0..3 {
                assert_eq!(cores.tr_entry(&[i, j]).unwrap(), 1.0);
            }
        }
        let x = cores.reconstruct();
        assert!(x.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn entry_out_of_range() {
        let cores = TRCores::new(vec![ones_core(1, 2, 1), ones_core(1, 3, 1)]).unwrap();
        assert!(cores.tr_entry(&[2, 0]).is_err());
        assert!(cores.tr_entry(&[0]).is_err());
    }

    #[test]
    fn reconstruct_matches_entrywise_trace() {
        let cores = random_cores(&[3, 4, 2], &[2, 2, 2], 7);
        let x = cores.reconstruct();
        for i in 0..3 {
            for j in 0..4 {
                for k in 0..2 {
                    let e = cores.tr_entry(&[i, j, k]).unwrap();
                    assert!((x.get(&[i, j, k]) - e).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn reconstruct_multilinear_in_each_core() {
        let mut cores = random_cores(&[2, 3, 2], &[2, 2, 2], 11);
        let x = cores.reconstruct();
        let scaled = cores.core(1).map(|v| 2.5 * v);
        cores.set_core(1, scaled).unwrap();
        let y = cores.reconstruct();
        for (a, b) in x.data().iter().zip(y.data()) {
            assert!((2.5 * a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn merge_is_associative() {
        let cores = random_cores(&[2, 3, 4], &[2, 3, 2], 3);
        let ab = merge_cores(cores.core(0), cores.core(1)).unwrap();
        let left = merge_cores(&ab, cores.core(2)).unwrap();
        let bc = merge_cores(cores.core(1), cores.core(2)).unwrap();
        let right = merge_cores(cores.core(0), &bc).unwrap();
        for (a, b) in left.data().iter().zip(right.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn merge_inner_rank_mismatch() {
        assert!(merge_cores(&ones_core(1, 2, 2), &ones_core(3, 2, 1)).is_err());
    }

    #[test]
    fn merge_preserves_reconstruction() {
        let cores = random_cores(&[2, 3, 2], &[2, 2, 2], 5);
        let x = cores.reconstruct();
        let merged = merge_cores(cores.core(0), cores.core(1)).unwrap();
        let two = TRCores::new(vec![merged, cores.core(2).clone()]).unwrap();
        let y = two.reconstruct();
        // combined index (i_1 + I_1 i_2) maps straight onto the linear layout
        for (a, b) in x.data().iter().zip(y.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn subchain_except_two_cores() {
        let cores = random_cores(&[3, 4], &[2, 2], 9);
        let sub = cores.subchain_except(0).unwrap();
        assert_eq!(sub, *cores.core(1));
    }

    #[test]
    fn subchain_prefix_cases() {
        let cores = random_cores(&[2, 3, 2], &[2, 2, 2], 13);
        assert_eq!(cores.subchain_prefix(1).unwrap(), *cores.core(0));
        assert!(cores.subchain_prefix(0).is_err());
        assert!(cores.subchain_prefix(4).is_err());
        // c = N with trace reproduces reconstruction entries
        let full = cores.subchain_prefix(3).unwrap();
        let x = cores.reconstruct();
        for m in 0..x.len() {
            let mut tr = 0.0;
            for a in 0..2 {
                tr += full.get(&[a, m, a]);
            }
            assert!((tr - x.data()[m]).abs() < 1e-12);
        }
    }

    #[test]
    fn unfolding_identity_theorem() {
        // X_[k] = Z_{k(2)} (Z^{!=k}_[2])^T for every k
        let cores = random_cores(&[3, 4, 2, 3], &[2, 3, 2, 2], 17);
        let x = cores.reconstruct();
        for k in 0..4 {
            let lhs = x.unfold_shifted(k).unwrap();
            let zk2 = cores.core_unfold_2(k);
            let neq = cores.neq_unfold(k).unwrap();
            let rhs = crate::linalg::matmul_nt(&zk2, &neq);
            for (a, b) in lhs.data.iter().zip(&rhs.data) {
                assert!((a - b).abs() < 1e-12, "mode {k}");
            }
        }
    }

    #[test]
    fn cyclic_rotation_permutes_modes() {
        let cores = random_cores(&[2, 3, 4], &[2, 2, 3], 21);
        let x = cores.reconstruct();
        let y = cores.rotated().reconstruct();
        for i in 0..2 {
            for j in 0..3 {
                for k in 0..4 {
                    assert!((x.get(&[i, j, k]) - y.get(&[j, k, i])).abs() < 1e-12);
                }
            }
        }
    }
}
