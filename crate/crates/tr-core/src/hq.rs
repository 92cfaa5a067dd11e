//! Correntropy objective and half-quadratic auto-weights.
//!
//! The robust objective sums the Gaussian kernel g_sigma(e) = sigma^2 *
//! exp(-e^2 / 2 sigma^2) over observed residuals. The half-quadratic
//! alternation only ever needs the closed-form weight w = exp(-e^2 / 2
//! sigma^2); the conjugate function is never evaluated. With sigma -> inf all
//! weights become 1 and the solver reduces to plain masked least squares.

use crate::error::{Result, TrError};
use crate::tensor::{DenseTensor, ObservationMask};
use serde::{Deserialize, Serialize};

/// How the kernel width sigma is produced each time weights are refreshed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase", deny_unknown_fields)]
pub enum KernelPolicy {
    /// Constant width.
    Fixed { sigma: f64 },
    /// sigma = max(sigma_min, theta * RMS of observed residuals).
    Adaptive { theta: f64, sigma_min: f64 },
    /// Sentinel for sigma -> inf: all weights are exactly 1.
    Infinite,
}

impl KernelPolicy {
    pub fn adaptive_default() -> Self {
        KernelPolicy::Adaptive {
            theta: 1.0,
            sigma_min: 1e-3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelPolicy::Fixed { sigma } if sigma <= 0.0 => Err(TrError::InvalidConfig(
                format!("kernel sigma must be positive, got {sigma}"),
            )),
            KernelPolicy::Adaptive { theta, sigma_min } if theta <= 0.0 || sigma_min <= 0.0 => {
                Err(TrError::InvalidConfig(format!(
                    "adaptive kernel needs positive theta and sigma_min, got {theta}, {sigma_min}"
                )))
            }
            _ => Ok(()),
        }
    }

    pub fn is_infinite(&self) -> bool {
        matches!(self, KernelPolicy::Infinite)
    }

    /// Resolves sigma from the observed residual entries. Returns `None` for
    /// the infinite sentinel. Errors on an empty observation set.
    pub fn resolve<'a>(
        &self,
        observed_residuals: impl Iterator<Item = &'a f64>,
    ) -> Result<Option<f64>> {
        match *self {
            KernelPolicy::Infinite => Ok(None),
            KernelPolicy::Fixed { sigma } => Ok(Some(sigma)),
            KernelPolicy::Adaptive { theta, sigma_min } => {
                let mut sum_sq = 0.0;
                let mut count = 0usize;
                for e in observed_residuals {
                    sum_sq += e * e;
                    count += 1;
                }
                if count == 0 {
                    return Err(TrError::InvalidConfig(
                        "adaptive kernel width needs at least one observed entry".into(),
                    ));
                }
                let rms = (sum_sq / count as f64).sqrt();
                Ok(Some((theta * rms).max(sigma_min)))
            }
        }
    }
}

/// Half-quadratic weight of a single residual, in (0, 1].
#[inline]
pub fn hq_weight(e: f64, sigma: Option<f64>) -> f64 {
    match sigma {
        None => 1.0,
        Some(s) => (-e * e / (2.0 * s * s)).exp(),
    }
}

/// Correntropy objective: sum of g_sigma over observed entries of E.
pub fn correntropy_objective(e: &DenseTensor, p: &ObservationMask, sigma: f64) -> Result<f64> {
    if e.shape() != p.shape() {
        return Err(TrError::ShapeMismatch(format!(
            "{:?} vs {:?}",
            e.shape(),
            p.shape()
        )));
    }
    if sigma <= 0.0 {
        return Err(TrError::InvalidConfig(format!(
            "sigma must be positive, got {sigma}"
        )));
    }
    let s2 = sigma * sigma;
    let mut total = 0.0;
    for (v, &obs) in e.data().iter().zip(p.bits()) {
        if obs {
            total += s2 * (-v * v / (2.0 * s2)).exp();
        }
    }
    Ok(total)
}

/// Sets every entry of W to the half-quadratic weight of the matching entry
/// of E. Unobserved entries are written too; downstream masking zeroes them.
pub fn update_weights(
    e: &DenseTensor,
    p: &ObservationMask,
    sigma: Option<f64>,
) -> Result<DenseTensor> {
    if e.shape() != p.shape() {
        return Err(TrError::ShapeMismatch(format!(
            "{:?} vs {:?}",
            e.shape(),
            p.shape()
        )));
    }
    Ok(e.map(|v| hq_weight(v, sigma)))
}

/// Kernel width from the policy and the full residual tensor.
pub fn adapt_kernel_width(
    e: &DenseTensor,
    p: &ObservationMask,
    policy: &KernelPolicy,
) -> Result<Option<f64>> {
    if e.shape() != p.shape() {
        return Err(TrError::ShapeMismatch(format!(
            "{:?} vs {:?}",
            e.shape(),
            p.shape()
        )));
    }
    if p.observed_count() == 0 {
        return Err(TrError::InvalidConfig("empty observation set".into()));
    }
    policy.resolve(
        e.data()
            .iter()
            .zip(p.bits())
            .filter(|(_, &obs)| obs)
            .map(|(v, _)| v),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn objective_zero_residual() {
        let e = DenseTensor::zeros(vec![3, 4]).unwrap();
        let p = ObservationMask::all_observed(vec![3, 4]).unwrap();
        let sigma = 0.7;
        let obj = correntropy_objective(&e, &p, sigma).unwrap();
        assert!((obj - sigma * sigma * 12.0).abs() < 1e-12);
    }

    #[test]
    fn objective_single_entry_at_sigma() {
        let mut e = DenseTensor::zeros(vec![2, 2]).unwrap();
        e.set(&[0, 0], 0.9);
        let bits = vec![true, false, false, false];
        let p = ObservationMask::new(vec![2, 2], bits).unwrap();
        let obj = correntropy_objective(&e, &p, 0.9).unwrap();
        assert!((obj - 0.81 * (-0.5f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn objective_decreases_with_residual_magnitude() {
        let p = ObservationMask::all_observed(vec![2, 2]).unwrap();
        let mut last = f64::INFINITY;
        for step in 0..5 {
            let e = DenseTensor::new(vec![2, 2], vec![0.3 * step as f64; 4]).unwrap();
            let obj = correntropy_objective(&e, &p, 1.0).unwrap();
            assert!(obj < last || step == 0);
            last = obj;
        }
    }

    #[test]
    fn objective_rejects_bad_sigma() {
        let e = DenseTensor::zeros(vec![2, 2]).unwrap();
        let p = ObservationMask::all_observed(vec![2, 2]).unwrap();
        assert!(correntropy_objective(&e, &p, 0.0).is_err());
    }

    #[test]
    fn weight_values() {
        assert_eq!(hq_weight(0.0, Some(1.0)), 1.0);
        assert_eq!(hq_weight(123.0, None), 1.0);
        assert!((hq_weight(1.0, Some(1.0)) - (-0.5f64).exp()).abs() < 1e-15);
        // in (0, 1], 1 iff e = 0
        for e in [-3.0, -0.1, 0.2, 5.0] {
            let w = hq_weight(e, Some(0.8));
            assert!(w > 0.0 && w < 1.0);
        }
    }

    #[test]
    fn weights_monotone_in_sigma() {
        let e = DenseTensor::new(vec![2, 2], vec![0.5, -1.0, 2.0, 0.1]).unwrap();
        let p = ObservationMask::all_observed(vec![2, 2]).unwrap();
        let w1 = update_weights(&e, &p, Some(0.5)).unwrap();
        let w2 = update_weights(&e, &p, Some(1.0)).unwrap();
        for (a, b) in w1.data().iter().zip(w2.data()) {
            assert!(b > a);
        }
        // spot check against hq_weight
        assert_eq!(w1.data()[2], hq_weight(2.0, Some(0.5)));
        // zero residual -> all ones
        let z = DenseTensor::zeros(vec![2, 2]).unwrap();
        let w = update_weights(&z, &p, Some(0.3)).unwrap();
        assert!(w.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn adaptive_width_rules() {
        let p = ObservationMask::all_observed(vec![2, 2]).unwrap();
        let policy = KernelPolicy::Adaptive {
            theta: 1.0,
            sigma_min: 1e-3,
        };
        // all-zero residuals hit the floor
        let z = DenseTensor::zeros(vec![2, 2]).unwrap();
        assert_eq!(adapt_kernel_width(&z, &p, &policy).unwrap(), Some(1e-3));
        // constant residual c -> sigma = c
        let c = DenseTensor::new(vec![2, 2], vec![0.4; 4]).unwrap();
        let s = adapt_kernel_width(&c, &p, &policy).unwrap().unwrap();
        assert!((s - 0.4).abs() < 1e-12);
        // homogeneity above the floor
        let c2 = c.map(|v| 3.0 * v);
        let s2 = adapt_kernel_width(&c2, &p, &policy).unwrap().unwrap();
        assert!((s2 - 3.0 * s).abs() < 1e-12);
        // fixed mode passes through; infinite returns sentinel
        let fixed = KernelPolicy::Fixed { sigma: 0.9 };
        assert_eq!(adapt_kernel_width(&c, &p, &fixed).unwrap(), Some(0.9));
        assert_eq!(
            adapt_kernel_width(&c, &p, &KernelPolicy::Infinite).unwrap(),
            None
        );
    }

    #[test]
    fn empty_observation_set_rejected() {
        let e = DenseTensor::zeros(vec![2, 2]).unwrap();
        let p = ObservationMask::new(vec![2, 2], vec![false; 4]).unwrap();
        assert!(adapt_kernel_width(&e, &p, &KernelPolicy::adaptive_default()).is_err());
    }
}
