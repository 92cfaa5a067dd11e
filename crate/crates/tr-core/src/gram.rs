//! Fast Gram matrix computation for subchain unfoldings.
//!
//! The Gram matrix G = (Z^{!=k}_[2])^T Z^{!=k}_[2] is evaluated without
//! materializing the subchain: each core contributes a small matrix
//! Q_k of size r_k^2 x r_{k+1}^2 with
//!
//!   Q_k[(a, a'), (b, b')] = sum_m Z_k(a, m, b) * Z_k(a', m, b')
//!
//! (row index a fastest, column index b fastest). The chain product of the
//! Q_j over the cyclic order (k+1, ..., N, 1, ..., k-1) telescopes to
//!
//!   P[(alpha, alpha'), (beta, beta')] = sum_m M_m(alpha, beta) M_m(alpha', beta')
//!
//! with M_m the subchain slices, and the Gram entries are a fixed index
//! rearrangement of P:
//!
//!   G[(beta, alpha), (beta', alpha')] = P[(alpha, alpha'), (beta, beta')]
//!
//! where Gram rows/columns use the (r_k index fastest, r_{k+1} index) layout
//! of the pinned shifted unfolding. The rearrangement is verified against the
//! explicit oracle [`gram_explicit`] in the tests.

use crate::error::{Result, TrError};
use crate::linalg::{matmul, matmul_nt, Mat};
use crate::model::TRCores;
use crate::tensor::DenseTensor;

/// Maximum number of subchain entries [`gram_explicit`] will materialize.
pub const EXPLICIT_BUDGET: usize = 10_000_000;

/// Per-core Q matrices with staleness tracking. Q_k depends only on Z_k, so
/// refreshing core k invalidates only entry k.
#[derive(Clone, Debug)]
pub struct GramCache {
    q: Vec<Mat>,
    ranks: Vec<usize>,
}

impl GramCache {
    pub fn build(cores: &TRCores) -> GramCache {
        let q = (0..cores.order())
            .map(|k| core_q_matrix(cores.core(k)))
            .collect();
        GramCache {
            q,
            ranks: cores.ranks(),
        }
    }

    pub fn q(&self, k: usize) -> &Mat {
        &self.q[k]
    }

    /// Recomputes only entry k from the given core. The core shape must be
    /// unchanged; a shape change requires a full rebuild.
    pub fn refresh_q(&mut self, k: usize, core: &DenseTensor) -> Result<()> {
        let n = self.ranks.len();
        let (r1, r2) = (self.ranks[k], self.ranks[(k + 1) % n]);
        if core.shape()[0] != r1 || core.shape()[2] != r2 {
            return Err(TrError::InvalidCores(format!(
                "core {k} rank change ({},{}) -> ({},{}); rebuild the cache",
                r1,
                r2,
                core.shape()[0],
                core.shape()[2]
            )));
        }
        self.q[k] = core_q_matrix(core);
        Ok(())
    }

    /// G_{Z^{!=k}} via the chain product of cached Q matrices.
    pub fn gram_via_chain(&self, k: usize) -> Result<Mat> {
        let n = self.ranks.len();
        if k >= n {
            return Err(TrError::ModeOutOfRange { mode: k, order: n });
        }
        let rk = self.ranks[k];
        let rk1 = self.ranks[(k + 1) % n];
        let out_dim = rk * rk1;
        if out_dim * out_dim > EXPLICIT_BUDGET {
            return Err(TrError::BudgetExceeded(format!(
                "Gram output {out_dim}x{out_dim}"
            )));
        }
        let mut prod = self.q[(k + 1) % n].clone();
        for step in 2..n {
            let j = (k + step) % n;
            prod = matmul(&prod, &self.q[j]);
        }
        // prod is r_{k+1}^2 x r_k^2; rearrange into (r_k r_{k+1})^2
        let mut g = Mat::zeros(out_dim, out_dim);
        for alpha in 0..rk1 {
            for alpha2 in 0..rk1 {
                let prow = alpha + rk1 * alpha2;
                for beta in 0..rk {
                    for beta2 in 0..rk {
                        let pcol = beta + rk * beta2;
                        let grow = beta + rk * alpha;
                        let gcol = beta2 + rk * alpha2;
                        g.set(grow, gcol, prod.at(prow, pcol));
                    }
                }
            }
        }
        Ok(g)
    }
}

/// Q matrix of a single core: r_k^2 x r_{k+1}^2, equal to the sum over
/// lateral indices of the self-Kronecker of the lateral slice (see module
/// docs for the pinned index layout).
pub fn core_q_matrix(core: &DenseTensor) -> Mat {
    let (r1, im, r2) = (core.shape()[0], core.shape()[1], core.shape()[2]);
    let data = core.data();
    let mut q = Mat::zeros(r1 * r1, r2 * r2);
    for m in 0..im {
        // entry (a, m, b) sits at a + r1*(m + im*b)
        for b2 in 0..r2 {
            for b in 0..r2 {
                let col = b + r2 * b2;
                let base_b = r1 * (m + im * b);
                let base_b2 = r1 * (m + im * b2);
                for a2 in 0..r1 {
                    let zb2 = data[base_b2 + a2];
                    if zb2 == 0.0 {
                        continue;
                    }
                    for a in 0..r1 {
                        q.data[(a + r1 * a2) * (r2 * r2) + col] += data[base_b + a] * zb2;
                    }
                }
            }
        }
    }
    q
}

/// Verification oracle: materializes Z^{!=k}_[2] and multiplies directly.
pub fn gram_explicit(cores: &TRCores, k: usize) -> Result<Mat> {
    let dims = cores.dims();
    let len: usize = dims
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != k)
        .map(|(_, &d)| d)
        .product();
    let ranks = cores.ranks();
    let rr = ranks[k] * ranks[(k + 1) % ranks.len()];
    if len * rr > EXPLICIT_BUDGET {
        return Err(TrError::BudgetExceeded(format!(
            "explicit subchain {len} x {rr}"
        )));
    }
    let z = cores.neq_unfold(k)?;
    let zt = z.transpose();
    Ok(matmul_nt(&zt, &zt))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::testutil::random_cores;

    fn rel_err(a: &Mat, b: &Mat) -> f64 {
        let mut diff = a.clone();
        diff.add_scaled(b, -1.0);
        diff.frobenius_norm() / b.frobenius_norm().max(1e-300)
    }

    #[test]
    fn q_of_rank_one_ones_core() {
        let core = DenseTensor::new(vec![1, 5, 1], vec![1.0; 5]).unwrap();
        let q = core_q_matrix(&core);
        assert_eq!((q.rows, q.cols), (1, 1));
        assert_eq!(q.data[0], 5.0);
    }

    #[test]
    fn q_of_zero_core_is_zero() {
        let core = DenseTensor::zeros(vec![2, 3, 2]).unwrap();
        let q = core_q_matrix(&core);
        assert!(q.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn q_matches_kronecker_sum_oracle() {
        // Q = sum_m kron(Z(m), Z(m)) with the pinned row/col layout
        let cores = random_cores(&[4, 3], &[2, 3], 42);
        let core = cores.core(0);
        let q = core_q_matrix(core);
        let (r1, r2) = (2, 3);
        let mut oracle = Mat::zeros(r1 * r1, r2 * r2);
        for m in 0..4 {
            let s = cores.slice_mat(0, m);
            for a in 0..r1 {
                for a2 in 0..r1 {
                    for b in 0..r2 {
                        for b2 in 0..r2 {
                            oracle.data[(a + r1 * a2) * (r2 * r2) + (b + r2 * b2)] +=
                                s.at(a, b) * s.at(a2, b2);
                        }
                    }
                }
            }
        }
        assert!(rel_err(&q, &oracle) < 1e-14);
    }

    #[test]
    fn chain_matches_explicit() {
        for seed in 0..5 {
            let cores = random_cores(&[4, 3, 5, 2], &[2, 2, 3, 2], 100 + seed);
            let cache = GramCache::build(&cores);
            for k in 0..4 {
                let fast = cache.gram_via_chain(k).unwrap();
                let slow = gram_explicit(&cores, k).unwrap();
                assert!(
                    rel_err(&fast, &slow) < 1e-10,
                    "seed {seed} mode {k}: {}",
                    rel_err(&fast, &slow)
                );
            }
        }
    }

    #[test]
    fn chain_all_rank_one_ones() {
        let cores = TRCores::new(
            (0..3)
                .map(|k| DenseTensor::new(vec![1, k + 2, 1], vec![1.0; k + 2]).unwrap())
                .collect::<Vec<_>>(),
        )
        .unwrap();
        let cache = GramCache::build(&cores);
        // excluding mode 0: prod of remaining dims 3*4 = 12
        let g = cache.gram_via_chain(0).unwrap();
        assert_eq!((g.rows, g.cols), (1, 1));
        assert!((g.data[0] - 12.0).abs() < 1e-12);
    }

    #[test]
    fn gram_is_symmetric_psd() {
        let cores = random_cores(&[3, 4, 3], &[2, 3, 2], 77);
        let cache = GramCache::build(&cores);
        let g = cache.gram_via_chain(1).unwrap();
        for i in 0..g.rows {
            for j in 0..g.cols {
                assert!((g.at(i, j) - g.at(j, i)).abs() < 1e-12);
            }
        }
        // PSD: x^T G x >= -tol for a handful of vectors
        let trace: f64 = (0..g.rows).map(|i| g.at(i, i)).sum();
        for seed in 0..10u64 {
            let x: Vec<f64> = (0..g.rows)
                .map(|i| ((seed as f64 + 1.0) * (i as f64 + 0.5)).sin())
                .collect();
            let mut quad = 0.0;
            for i in 0..g.rows {
                for j in 0..g.cols {
                    quad += x[i] * g.at(i, j) * x[j];
                }
            }
            assert!(quad >= -1e-10 * trace);
        }
    }

    #[test]
    fn explicit_two_cores() {
        let cores = random_cores(&[3, 4], &[2, 2], 5);
        // excluding mode 0 leaves a single core: Gram of its shifted unfolding
        let g = gram_explicit(&cores, 0).unwrap();
        let z = cores.core(1).unfold_shifted(1).unwrap();
        let zt = z.transpose();
        let direct = matmul_nt(&zt, &zt);
        assert!(rel_err(&g, &direct) < 1e-14);
    }

    #[test]
    fn refresh_updates_only_entry_k() {
        let cores = random_cores(&[3, 4, 2], &[2, 2, 2], 9);
        let mut cache = GramCache::build(&cores);
        let before: Vec<Mat> = (0..3).map(|k| cache.q(k).clone()).collect();
        // identical core: bitwise unchanged
        cache.refresh_q(1, cores.core(1)).unwrap();
        assert_eq!(cache.q(1).data, before[1].data);
        // perturbed core: only entry 1 changes
        let perturbed = cores.core(1).map(|v| v + 0.5);
        cache.refresh_q(1, &perturbed).unwrap();
        assert_eq!(cache.q(0).data, before[0].data);
        assert_eq!(cache.q(2).data, before[2].data);
        assert_ne!(cache.q(1).data, before[1].data);
    }

    #[test]
    fn refresh_rejects_shape_change() {
        let cores = random_cores(&[3, 4, 2], &[2, 2, 2], 9);
        let mut cache = GramCache::build(&cores);
        let bad = DenseTensor::zeros(vec![3, 4, 2]).unwrap();
        assert!(cache.refresh_q(0, &bad).is_err());
    }

    #[test]
    fn sequence_of_refreshes_equals_rebuild() {
        let a = random_cores(&[3, 4, 2], &[2, 2, 2], 1);
        let b = random_cores(&[3, 4, 2], &[2, 2, 2], 2);
        let mut cache = GramCache::build(&a);
        for k in 0..3 {
            cache.refresh_q(k, b.core(k)).unwrap();
        }
        let fresh = GramCache::build(&b);
        for k in 0..3 {
            assert_eq!(cache.q(k).data, fresh.q(k).data);
        }
    }
}
