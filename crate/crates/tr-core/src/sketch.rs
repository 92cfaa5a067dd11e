//! Randomized subtensor sketching.
//!
//! A sketch plan picks a sorted index subset per mode; the active block keeps
//! its full index range. Sampling commutes with TR reconstruction: the sketch
//! of the represented tensor is represented exactly by the correspondingly
//! sampled lateral slices of the cores.

use crate::error::{Result, TrError};
use crate::model::TRCores;
use crate::tensor::{DenseTensor, ObservationMask};
use rand::seq::index::sample as index_sample;
use rand::Rng;

#[derive(Clone, Debug, PartialEq)]
pub struct SketchPlan {
    /// Sorted, unique indices per mode.
    sets: Vec<Vec<usize>>,
    /// Active block mode: its set is the full range.
    active: usize,
}

impl SketchPlan {
    pub fn sets(&self) -> &[Vec<usize>] {
        &self.sets
    }

    pub fn active_mode(&self) -> usize {
        self.active
    }

    pub fn sample_sizes(&self) -> Vec<usize> {
        self.sets.iter().map(|s| s.len()).collect()
    }

    pub fn is_full(&self, shape: &[usize]) -> bool {
        self.sets
            .iter()
            .zip(shape)
            .all(|(s, &d)| s.len() == d)
    }
}

/// Per-free-mode sample size: the largest s with s^(N-1) <= J, clamped to the
/// mode size and floored at 1.
pub fn free_mode_sample_size(dim: usize, j: u64, n_free: u32) -> usize {
    if n_free == 0 {
        return dim;
    }
    let mut s: u64 = (j as f64).powf(1.0 / n_free as f64).floor() as u64;
    // float roots can land one off on either side
    while s.checked_pow(n_free).map_or(true, |p| p > j) {
        s -= 1;
    }
    while (s + 1).checked_pow(n_free).map_or(false, |p| p <= j) {
        s += 1;
    }
    (s.max(1) as usize).min(dim)
}

/// Draws a plan for active mode k: the active set is full, every other mode
/// samples uniformly without replacement.
pub fn make_sketch_plan(
    shape: &[usize],
    k: usize,
    j: u64,
    rng: &mut impl Rng,
) -> Result<SketchPlan> {
    let n = shape.len();
    if k >= n {
        return Err(TrError::ModeOutOfRange { mode: k, order: n });
    }
    if j == 0 {
        return Err(TrError::InvalidConfig("sample parameter J must be >= 1".into()));
    }
    let n_free = (n - 1) as u32;
    let sets = shape
        .iter()
        .enumerate()
        .map(|(m, &dim)| {
            if m == k {
                (0..dim).collect()
            } else {
                let s = free_mode_sample_size(dim, j, n_free);
                if s == dim {
                    (0..dim).collect()
                } else {
                    let mut idx = index_sample(rng, dim, s).into_vec();
                    idx.sort_unstable();
                    idx
                }
            }
        })
        .collect();
    Ok(SketchPlan { sets, active: k })
}

/// Plan whose every set is the full range (no subsampling).
pub fn full_plan(shape: &[usize], k: usize) -> SketchPlan {
    SketchPlan {
        sets: shape.iter().map(|&d| (0..d).collect()).collect(),
        active: k,
    }
}

fn gather_data(shape: &[usize], data: &[f64], plan: &SketchPlan) -> (Vec<usize>, Vec<f64>) {
    let sub_shape: Vec<usize> = plan.sets.iter().map(|s| s.len()).collect();
    let total: usize = sub_shape.iter().product();
    let n = shape.len();
    let mut out = Vec::with_capacity(total);
    let mut sub_idx = vec![0usize; n];
    for _ in 0..total {
        let mut lin = 0;
        for m in (0..n).rev() {
            lin = lin * shape[m] + plan.sets[m][sub_idx[m]];
        }
        out.push(data[lin]);
        for m in 0..n {
            sub_idx[m] += 1;
            if sub_idx[m] < sub_shape[m] {
                break;
            }
            sub_idx[m] = 0;
        }
    }
    (sub_shape, out)
}

/// Gathers the sampled subtensor and the matching mask bits.
pub fn sample_subtensor(
    x: &DenseTensor,
    p: &ObservationMask,
    plan: &SketchPlan,
) -> Result<(DenseTensor, ObservationMask)> {
    for (m, set) in plan.sets.iter().enumerate() {
        if set.iter().any(|&i| i >= x.shape()[m]) {
            return Err(TrError::ModeOutOfRange {
                mode: m,
                order: x.shape()[m],
            });
        }
    }
    let (sub_shape, data) = gather_data(x.shape(), x.data(), plan);
    let pbits: Vec<f64> = p.bits().iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    let (_, pdata) = gather_data(x.shape(), &pbits, plan);
    let xs = DenseTensor::new(sub_shape.clone(), data)?;
    let ps = ObservationMask::new(sub_shape, pdata.iter().map(|&v| v != 0.0).collect())?;
    Ok((xs, ps))
}

/// Samples lateral slices of every core according to the plan.
pub fn sample_cores(cores: &TRCores, plan: &SketchPlan) -> Result<TRCores> {
    let sampled = cores
        .cores()
        .iter()
        .zip(plan.sets.iter())
        .map(|(core, set)| {
            let (r1, im, r2) = (core.shape()[0], core.shape()[1], core.shape()[2]);
            if set.len() == im && set.iter().enumerate().all(|(a, &b)| a == b) {
                return Ok(core.clone());
            }
            let mut out = DenseTensor::zeros(vec![r1, set.len(), r2])?;
            for (si, &i) in set.iter().enumerate() {
                for b in 0..r2 {
                    for a in 0..r1 {
                        let v = core.get(&[a, i, b]);
                        out.set(&[a, si, b], v);
                    }
                }
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    TRCores::new(sampled)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::testutil::random_cores;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sample_size_formula() {
        // shape (1920, 1080, 3, 50), k = 0, J = 3e4 -> (1920, 31, 3, 31)
        let shape = [1920usize, 1080, 3, 50];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let plan = make_sketch_plan(&shape, 0, 30_000, &mut rng).unwrap();
        assert_eq!(plan.sample_sizes(), vec![1920, 31, 3, 31]);
        // huge J -> full index sets
        let plan = make_sketch_plan(&[4, 5, 6], 1, 10_000_000, &mut rng).unwrap();
        assert!(plan.is_full(&[4, 5, 6]));
        // N = 2 -> s = min(I, J)
        let plan = make_sketch_plan(&[10, 10], 0, 7, &mut rng).unwrap();
        assert_eq!(plan.sample_sizes(), vec![10, 7]);
        let plan = make_sketch_plan(&[10, 10], 0, 25, &mut rng).unwrap();
        assert_eq!(plan.sample_sizes(), vec![10, 10]);
    }

    #[test]
    fn plan_is_deterministic_and_sorted() {
        let shape = [8usize, 9, 10];
        let mut a = ChaCha8Rng::seed_from_u64(5);
        let mut b = ChaCha8Rng::seed_from_u64(5);
        let p1 = make_sketch_plan(&shape, 2, 9, &mut a).unwrap();
        let p2 = make_sketch_plan(&shape, 2, 9, &mut b).unwrap();
        assert_eq!(p1, p2);
        assert_eq!(p1.sets()[2].len(), 10);
        for s in p1.sets() {
            assert!(s.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn full_plan_is_identity() {
        let x = DenseTensor::new(vec![2, 3, 2], (0..12).map(|v| v as f64).collect()).unwrap();
        let p = ObservationMask::all_observed(vec![2, 3, 2]).unwrap();
        let plan = full_plan(x.shape(), 1);
        let (xs, ps) = sample_subtensor(&x, &p, &plan).unwrap();
        assert_eq!(xs, x);
        assert_eq!(ps, p);
    }

    #[test]
    fn sketch_commutes_with_reconstruction() {
        let cores = random_cores(&[4, 5, 3, 4], &[2, 2, 3, 2], 31);
        let x = cores.reconstruct();
        let p = ObservationMask::all_observed(x.shape().to_vec()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for k in 0..4 {
            let plan = make_sketch_plan(x.shape(), k, 12, &mut rng).unwrap();
            let (xs, _) = sample_subtensor(&x, &p, &plan).unwrap();
            let cs = sample_cores(&cores, &plan).unwrap();
            let rs = cs.reconstruct();
            assert_eq!(xs.shape(), rs.shape());
            for (a, b) in xs.data().iter().zip(rs.data()) {
                assert!((a - b).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn singleton_free_modes_leave_one_fiber() {
        let x = DenseTensor::new(vec![3, 4, 2], (0..24).map(|v| v as f64).collect()).unwrap();
        let p = ObservationMask::all_observed(vec![3, 4, 2]).unwrap();
        let plan = SketchPlan {
            sets: vec![vec![1], (0..4).collect(), vec![0]],
            active: 1,
        };
        let (xs, _) = sample_subtensor(&x, &p, &plan).unwrap();
        assert_eq!(xs.shape(), &[1, 4, 1]);
        for j in 0..4 {
            assert_eq!(xs.get(&[0, j, 0]), x.get(&[1, j, 0]));
        }
    }

    #[test]
    fn out_of_range_plan_rejected() {
        let x = DenseTensor::zeros(vec![2, 2]).unwrap();
        let p = ObservationMask::all_observed(vec![2, 2]).unwrap();
        let plan = SketchPlan {
            sets: vec![vec![0, 3], vec![0]],
            active: 1,
        };
        assert!(sample_subtensor(&x, &p, &plan).is_err());
    }
}
