//! Robust tensor-ring decomposition and completion.
//!
//! The crate provides:
//! - dense N-way tensors with pinned linear layout and both mode-n unfolding
//!   conventions ([`tensor`]),
//! - tensor-ring core algebra: reconstruction, merging, subchains ([`model`]),
//! - fast Gram matrix computation via per-core chain products ([`gram`]),
//! - correntropy objective and half-quadratic auto-weights ([`hq`]),
//! - the AWRTRD solver and its sketched variant SAWRTRD ([`solver`], [`sketch`]),
//! - synthetic data, noise models and PSNR evaluation ([`data`]),
//! - binary tensor/mask file formats and core persistence ([`io`]).
//!
//! With the default `parallel` feature, dense matrix products and elementwise
//! kernels run on rayon. Results are bitwise independent of the thread count:
//! parallelism is only used where each output element is produced by a single
//! sequential accumulation.

pub mod data;
pub mod error;
pub mod gram;
pub mod hq;
pub mod io;
pub mod linalg;
pub mod model;
pub mod sketch;
pub mod solver;
pub mod tensor;

pub use error::TrError;

/// Caps the data-parallel thread count. A no-op when the `parallel` feature
/// is disabled or when a global pool already exists. Results do not depend on
/// the thread count either way.
pub fn configure_threads(n: usize) -> error::Result<()> {
    #[cfg(feature = "parallel")]
    {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| TrError::InvalidConfig(format!("thread pool: {e}")))?;
    }
    #[cfg(not(feature = "parallel"))]
    let _ = n;
    Ok(())
}
pub use model::TRCores;
pub use tensor::{DenseTensor, ObservationMask};
