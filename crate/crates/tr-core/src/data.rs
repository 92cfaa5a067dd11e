//! Synthetic instances, noise models, observation masks and PSNR.

use crate::error::{Result, TrError};
use crate::model::TRCores;
use crate::solver::init_cores;
use crate::tensor::{DenseTensor, ObservationMask};
use rand::seq::index::sample as index_sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

/// PSNR reported when the reconstruction is exact (zero MSE).
pub const PSNR_CAP_DB: f64 = 99.0;

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum NoiseSpec {
    /// Two-component Gaussian mixture pi*N(0,v1) + (1-pi)*N(0,v2).
    Gmm { pi: f64, v1: f64, v2: f64 },
    /// Each entry replaced by 0 or 1 (equal odds) with probability p.
    SaltPepper { p: f64 },
}

impl NoiseSpec {
    pub fn gmm_default() -> Self {
        NoiseSpec::Gmm {
            pi: 0.8,
            v1: 1e-3,
            v2: 0.5,
        }
    }

    pub fn salt_pepper_default() -> Self {
        NoiseSpec::SaltPepper { p: 0.2 }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            NoiseSpec::Gmm { pi, v1, v2 } => {
                if !(0.0..=1.0).contains(&pi) || v1 <= 0.0 || v2 <= 0.0 {
                    return Err(TrError::InvalidConfig(format!(
                        "bad gmm spec pi={pi} v1={v1} v2={v2}"
                    )));
                }
            }
            NoiseSpec::SaltPepper { p } => {
                if !(0.0..=1.0).contains(&p) {
                    return Err(TrError::InvalidConfig(format!("bad corruption probability {p}")));
                }
            }
        }
        Ok(())
    }
}

/// Ground-truth instance: tensor in [0,1] with the generating cores and the
/// affine rescale that was applied to the raw reconstruction.
pub struct SynthInstance {
    pub tensor: DenseTensor,
    pub cores: TRCores,
    /// raw -> rescaled: v_scaled = (v - offset) * scale
    pub offset: f64,
    pub scale: f64,
}

/// Random TR-representable tensor rescaled to [0,1].
pub fn synth_tr_tensor(shape: &[usize], ranks: &[usize], seed: u64) -> Result<SynthInstance> {
    let cores = init_cores(shape, ranks, seed, 1.0)?;
    let raw = cores.reconstruct();
    let min = raw.data().iter().cloned().fold(f64::INFINITY, f64::min);
    let max = raw.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let (offset, scale) = if max > min {
        (min, 1.0 / (max - min))
    } else {
        (min, 1.0)
    };
    let tensor = raw.map(|v| (v - offset) * scale);
    Ok(SynthInstance {
        tensor,
        cores,
        offset,
        scale,
    })
}

/// Random TR-representable tensor without rescaling (stays exactly in the
/// model class).
pub fn synth_tr_raw(shape: &[usize], ranks: &[usize], seed: u64) -> Result<(DenseTensor, TRCores)> {
    let cores = init_cores(shape, ranks, seed, 1.0)?;
    let x = cores.reconstruct();
    Ok((x, cores))
}

/// Additive two-component Gaussian mixture noise.
pub fn add_gmm_noise(x: &DenseTensor, pi: f64, v1: f64, v2: f64, seed: u64) -> Result<DenseTensor> {
    NoiseSpec::Gmm { pi, v1, v2 }.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n1 = Normal::new(0.0, v1.sqrt()).expect("positive variance");
    let n2 = Normal::new(0.0, v2.sqrt()).expect("positive variance");
    let mut out = x.clone();
    for v in out.data_mut() {
        let noise = if rng.gen::<f64>() < pi {
            n1.sample(&mut rng)
        } else {
            n2.sample(&mut rng)
        };
        *v += noise;
    }
    Ok(out)
}

/// Salt-and-pepper corruption: with probability p an entry becomes 0 or 1,
/// equal odds.
pub fn add_salt_pepper(x: &DenseTensor, p: f64, seed: u64) -> Result<DenseTensor> {
    NoiseSpec::SaltPepper { p }.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = x.clone();
    for v in out.data_mut() {
        if rng.gen::<f64>() < p {
            *v = if rng.gen::<bool>() { 1.0 } else { 0.0 };
        }
    }
    Ok(out)
}

/// Applies a noise spec with its own seed.
pub fn apply_noise(x: &DenseTensor, spec: &NoiseSpec, seed: u64) -> Result<DenseTensor> {
    match *spec {
        NoiseSpec::Gmm { pi, v1, v2 } => add_gmm_noise(x, pi, v1, v2, seed),
        NoiseSpec::SaltPepper { p } => add_salt_pepper(x, p, seed),
    }
}

/// Uniform mask with exactly floor(rate * total) observed entries.
pub fn random_mask(shape: &[usize], rate: f64, seed: u64) -> Result<ObservationMask> {
    if !(rate > 0.0 && rate <= 1.0) {
        return Err(TrError::InvalidConfig(format!(
            "observation rate must be in (0, 1], got {rate}"
        )));
    }
    let total: usize = shape.iter().product();
    let count = ((rate * total as f64).floor() as usize).max(1);
    let mut bits = vec![false; total];
    if count >= total {
        bits.iter_mut().for_each(|b| *b = true);
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in index_sample(&mut rng, total, count) {
            bits[i] = true;
        }
    }
    ObservationMask::new(shape.to_vec(), bits)
}

/// Peak signal-to-noise ratio in dB over all entries. Zero MSE reports the
/// declared cap; the second return flags exactness.
pub fn psnr(x_true: &DenseTensor, x_hat: &DenseTensor, peak: f64) -> Result<(f64, bool)> {
    if x_true.shape() != x_hat.shape() {
        return Err(TrError::ShapeMismatch(format!(
            "{:?} vs {:?}",
            x_true.shape(),
            x_hat.shape()
        )));
    }
    if peak <= 0.0 {
        return Err(TrError::InvalidConfig(format!("peak must be positive, got {peak}")));
    }
    let mse: f64 = x_true
        .data()
        .iter()
        .zip(x_hat.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / x_true.len() as f64;
    if mse == 0.0 {
        return Ok((PSNR_CAP_DB, true));
    }
    Ok((10.0 * (peak * peak / mse).log10(), false))
}

/// PSNR restricted to unobserved entries (completion-task reporting).
pub fn psnr_unobserved(
    x_true: &DenseTensor,
    x_hat: &DenseTensor,
    mask: &ObservationMask,
    peak: f64,
) -> Result<(f64, bool)> {
    if x_true.shape() != x_hat.shape() || x_true.shape() != mask.shape() {
        return Err(TrError::ShapeMismatch("psnr_unobserved shapes".into()));
    }
    if peak <= 0.0 {
        return Err(TrError::InvalidConfig(format!("peak must be positive, got {peak}")));
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for ((a, b), &obs) in x_true.data().iter().zip(x_hat.data()).zip(mask.bits()) {
        if !obs {
            sum += (a - b) * (a - b);
            count += 1;
        }
    }
    if count == 0 {
        return Err(TrError::InvalidConfig("mask has no unobserved entries".into()));
    }
    let mse = sum / count as f64;
    if mse == 0.0 {
        return Ok((PSNR_CAP_DB, true));
    }
    Ok((10.0 * (peak * peak / mse).log10(), false))
}

/// Relative reconstruction error ||A - B||_F / ||B||_F.
pub fn relative_error(a: &DenseTensor, b: &DenseTensor) -> f64 {
    let mut diff = 0.0;
    for (x, y) in a.data().iter().zip(b.data()) {
        diff += (x - y) * (x - y);
    }
    diff.sqrt() / b.frobenius_norm().max(1e-300)
}
