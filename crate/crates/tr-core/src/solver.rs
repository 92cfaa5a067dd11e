//! Auto-weighted robust TR decomposition solvers.
//!
//! One engine backs both solvers. AWRTRD is the full-data instance; SAWRTRD
//! draws a fresh sketch plan per (iteration, block) and evaluates the gradient
//! on the sketch while the preconditioner Gram matrix always comes from the
//! full cores via the chain cache. With full plans the two paths produce
//! bitwise identical trajectories.
//!
//! Sign convention: the block gradient `d` as computed here is the descent
//! direction of the weighted quadratic (the negative derivative), so the core
//! update adds `eta * h`. The exact line-search step is positive whenever
//! `d` is nonzero because `h` is `d` preconditioned by an SPD matrix.

use crate::error::{Result, TrError};
use crate::gram::GramCache;
use crate::hq::{correntropy_objective, hq_weight, KernelPolicy};
use crate::linalg::{inner, matmul, matmul_nt, solve_spd_right, Mat};
use crate::model::TRCores;
use crate::sketch::{free_mode_sample_size, full_plan, make_sketch_plan, sample_cores, sample_subtensor};
use crate::tensor::{masked_weighted_residual, DenseTensor, ObservationMask};
use rand::seq::index::sample as index_sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::time::Instant;

/// Sketched-solver strategy, including the ablation arms.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Scaled gradient with global Gram and subtensor sketching.
    Sawrtrd,
    /// Plain gradient step, no preconditioner.
    UnscaledGradient,
    /// Preconditioner Gram built from the sampled cores instead of the full ones.
    LocalGram,
    /// Uniform row sampling of the subchain unfolding with a matched sample count.
    RowUniform,
}

impl std::str::FromStr for Variant {
    type Err = TrError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sawrtrd" => Ok(Variant::Sawrtrd),
            "unscaled" => Ok(Variant::UnscaledGradient),
            "local-gram" => Ok(Variant::LocalGram),
            "row-uniform" => Ok(Variant::RowUniform),
            other => Err(TrError::InvalidConfig(format!("unknown variant {other}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub ranks: Vec<usize>,
    /// Regularizer on the preconditioner; raised tenfold (at most 3 times)
    /// if the SPD solve fails.
    pub lambda: f64,
    pub kernel: KernelPolicy,
    pub max_iter: usize,
    pub tol: f64,
    pub seed: u64,
    pub init_scale: f64,
    /// Sample parameter J; `None` runs the full-data solver.
    pub sample_param: Option<u64>,
    pub variant: Variant,
}

impl SolverConfig {
    pub fn new(ranks: Vec<usize>) -> Self {
        SolverConfig {
            ranks,
            lambda: 1e-10,
            kernel: KernelPolicy::adaptive_default(),
            max_iter: 30,
            tol: 1e-3,
            seed: 0,
            init_scale: 1.0,
            sample_param: None,
            variant: Variant::Sawrtrd,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lambda < 0.0 {
            return Err(TrError::InvalidConfig("lambda must be nonnegative".into()));
        }
        if self.max_iter < 1 {
            return Err(TrError::InvalidConfig("max_iter must be >= 1".into()));
        }
        if self.tol <= 0.0 {
            return Err(TrError::InvalidConfig("tol must be positive".into()));
        }
        if self.init_scale < 0.0 {
            return Err(TrError::InvalidConfig("init_scale must be >= 0".into()));
        }
        if self.sample_param == Some(0) {
            return Err(TrError::InvalidConfig("sample parameter J must be >= 1".into()));
        }
        self.kernel.validate()
    }
}

/// One completed outer iteration.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IterRecord {
    pub iter: usize,
    /// Correntropy objective at the sigma used last in this iteration;
    /// NaN under the infinite-sigma policy.
    pub objective: f64,
    /// ||sqrt(W) o P o (X - R)||_F at the end of the iteration.
    pub weighted_residual: f64,
    /// Kernel width used last in this iteration; infinity for the sentinel.
    pub sigma: f64,
    /// Relative change of D^t; infinity on the first iteration.
    pub stop_metric: f64,
    /// Line-search steps per block (0 for skipped blocks).
    pub etas: Vec<f64>,
    /// Per-block sample sizes s_1..s_N.
    pub sample_sizes: Vec<Vec<usize>>,
    pub elapsed_ms: f64,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct SolverTrace {
    pub records: Vec<IterRecord>,
}

impl SolverTrace {
    pub fn write_csv(&self, mut w: impl std::io::Write) -> std::io::Result<()> {
        writeln!(
            w,
            "iteration,objective,weighted_residual,sigma,stop_metric,elapsed_ms,etas,sample_sizes"
        )?;
        for r in &self.records {
            let etas = r
                .etas
                .iter()
                .map(|e| format!("{e:.6e}"))
                .collect::<Vec<_>>()
                .join(";");
            let sizes = r
                .sample_sizes
                .iter()
                .map(|s| {
                    s.iter()
                        .map(|v| v.to_string())
                        .collect::<Vec<_>>()
                        .join("x")
                })
                .collect::<Vec<_>>()
                .join(";");
            writeln!(
                w,
                "{},{:.12e},{:.12e},{:.6e},{:.6e},{:.3},{},{}",
                r.iter, r.objective, r.weighted_residual, r.sigma, r.stop_metric, r.elapsed_ms,
                etas, sizes
            )?;
        }
        Ok(())
    }
}

/// Random Gaussian cores: entries N(0, (init_scale / sqrt(r_k r_{k+1}))^2),
/// deterministic given the seed.
pub fn init_cores(
    shape: &[usize],
    ranks: &[usize],
    seed: u64,
    init_scale: f64,
) -> Result<TRCores> {
    if ranks.len() != shape.len() {
        return Err(TrError::InvalidConfig(format!(
            "{} ranks for an order-{} tensor",
            ranks.len(),
            shape.len()
        )));
    }
    if ranks.iter().any(|&r| r == 0) {
        return Err(TrError::InvalidConfig("ranks must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.len();
    let cores = (0..n)
        .map(|k| {
            let (r1, r2) = (ranks[k], ranks[(k + 1) % n]);
            let std = init_scale / ((r1 * r2) as f64).sqrt();
            let data: Vec<f64> = if std == 0.0 {
                vec![0.0; r1 * shape[k] * r2]
            } else {
                let dist = Normal::new(0.0, std).expect("positive std");
                (0..r1 * shape[k] * r2).map(|_| dist.sample(&mut rng)).collect()
            };
            DenseTensor::new(vec![r1, shape[k], r2], data)
        })
        .collect::<Result<Vec<_>>>()?;
    TRCores::new(cores)
}

/// Block gradient d(Z_{k(2)}) on the full data: the descent direction of the
/// masked weighted quadratic in the mode-k block.
pub fn gradient_block(
    x: &DenseTensor,
    p: &ObservationMask,
    w: Option<&DenseTensor>,
    cores: &TRCores,
    k: usize,
) -> Result<Mat> {
    if x.shape() != p.shape() {
        return Err(TrError::ShapeMismatch(format!(
            "{:?} vs {:?}",
            x.shape(),
            p.shape()
        )));
    }
    let b = cores.neq_unfold(k)?;
    let xk = x.unfold_shifted(k)?;
    let pk = p.to_tensor().unfold_shifted(k)?;
    let wk = match w {
        Some(w) => Some(w.unfold_shifted(k)?),
        None => None,
    };
    let zk2 = cores.core_unfold_2(k);
    let mut resid = matmul_nt(&zk2, &b);
    for i in 0..resid.data.len() {
        let wv = wk.as_ref().map_or(1.0, |m| m.data[i]);
        resid.data[i] = wv * pk.data[i] * (xk.data[i] - resid.data[i]);
    }
    Ok(matmul(&resid, &b))
}

/// h = d (G + lambda I)^{-1} via an SPD solve.
pub fn scaled_gradient(d: &Mat, g: &Mat, lambda: f64) -> Result<Mat> {
    solve_spd_right(g, lambda, d)
}

/// Exact line-search step for direction h: eta = <d, h> / ||sqrt(W) o P o
/// (h B^T)||_F^2. Returns `None` when the direction is invisible under the
/// mask (zero denominator) or d is zero.
pub fn line_search_step(
    d: &Mat,
    h: &Mat,
    wk: Option<&Mat>,
    pk: &Mat,
    b: &Mat,
) -> Result<Option<f64>> {
    let num = inner(d, h);
    if num <= 0.0 {
        // an SPD preconditioner keeps <d,h> >= 0 up to rounding
        let scale = d.frobenius_norm() * h.frobenius_norm();
        if num >= -1e-12 * scale {
            return Ok(None);
        }
        return Err(TrError::Diverged(format!(
            "line search direction is not a descent direction (<d,h> = {num:e})"
        )));
    }
    let t = matmul_nt(h, b);
    let mut denom = 0.0;
    for i in 0..t.data.len() {
        let wv = wk.map_or(1.0, |m| m.data[i]);
        let s = t.data[i];
        denom += wv * pk.data[i] * s * s;
    }
    if denom == 0.0 {
        return Ok(None);
    }
    Ok(Some(num / denom))
}

struct BlockOutcome {
    eta: f64,
    sigma: Option<f64>,
}

/// One block update on (possibly sketched) unfolded data. `zk2` is updated in
/// place; `gram` is `None` for the unscaled-gradient arm.
fn block_update(
    zk2: &mut Mat,
    xk: &Mat,
    pk: &Mat,
    b: &Mat,
    kernel: &KernelPolicy,
    gram: Option<&Mat>,
    lambda: f64,
) -> Result<BlockOutcome> {
    // residual on the sketch
    let mut resid = matmul_nt(zk2, b);
    for i in 0..resid.data.len() {
        resid.data[i] = xk.data[i] - resid.data[i];
    }
    // kernel width from observed residuals, then weights
    let sigma = kernel.resolve(
        resid
            .data
            .iter()
            .zip(&pk.data)
            .filter(|(_, &pv)| pv != 0.0)
            .map(|(e, _)| e),
    )?;
    let wk = if sigma.is_some() && !kernel.is_infinite() {
        let mut w = resid.clone();
        for v in &mut w.data {
            *v = hq_weight(*v, sigma);
        }
        Some(w)
    } else {
        None
    };
    // masked weighted residual and gradient
    let mut y = resid;
    for i in 0..y.data.len() {
        let wv = wk.as_ref().map_or(1.0, |m| m.data[i]);
        y.data[i] *= wv * pk.data[i];
    }
    let d = matmul(&y, b);
    if !d.is_finite() {
        return Err(TrError::Diverged("non-finite gradient".into()));
    }
    let h = match gram {
        None => d.clone(),
        Some(g) => {
            let mut lam = lambda.max(0.0);
            let mut tries = 0;
            loop {
                match scaled_gradient(&d, g, lam) {
                    Ok(h) => break h,
                    Err(_) if tries < 3 => {
                        lam = if lam == 0.0 { 1e-10 } else { lam * 10.0 };
                        tries += 1;
                    }
                    Err(e) => return Err(e),
                }
            }
        }
    };
    let eta = match line_search_step(&d, &h, wk.as_ref(), pk, b)? {
        None => 0.0,
        Some(eta) => {
            zk2.add_scaled(&h, eta);
            if !zk2.is_finite() {
                return Err(TrError::Diverged("non-finite core after update".into()));
            }
            eta
        }
    };
    Ok(BlockOutcome { eta, sigma })
}

/// Full engine behind [`awrtrd`], [`sawrtrd`] and the ablation arms.
pub fn solve(
    x: &DenseTensor,
    p: &ObservationMask,
    cfg: &SolverConfig,
) -> Result<(TRCores, SolverTrace)> {
    cfg.validate()?;
    if x.shape() != p.shape() {
        return Err(TrError::ShapeMismatch(format!(
            "{:?} vs {:?}",
            x.shape(),
            p.shape()
        )));
    }
    if p.observed_count() == 0 {
        return Err(TrError::InvalidConfig(
            "solver input needs at least one observed entry".into(),
        ));
    }
    let n = x.order();
    let mut cores = init_cores(x.shape(), &cfg.ranks, cfg.seed, cfg.init_scale)?;
    let mut cache = GramCache::build(&cores);
    let p_tensor = p.to_tensor();

    // full-data path reuses the per-mode unfoldings across iterations
    let full_data = cfg.sample_param.is_none();
    let full_unfolds: Vec<(Mat, Mat)> = if full_data {
        (0..n)
            .map(|k| Ok((x.unfold_shifted(k)?, p_tensor.unfold_shifted(k)?)))
            .collect::<Result<_>>()?
    } else {
        Vec::new()
    };

    let mut trace = SolverTrace::default();
    let mut prev_d: Option<Mat> = None;
    for t in 0..cfg.max_iter {
        let started = Instant::now();
        let mut etas = Vec::with_capacity(n);
        let mut sizes = Vec::with_capacity(n);
        let mut sigma_last: Option<f64> = None;
        for k in 0..n {
            let core_shape = cores.core(k).shape().to_vec();
            let mut zk2 = cores.core_unfold_2(k);
            let gram_full = || -> Result<Mat> { cache.gram_via_chain(k) };
            let outcome = if full_data {
                let (xk, pk) = &full_unfolds[k];
                let b = cores.neq_unfold(k)?;
                let gram = match cfg.variant {
                    Variant::UnscaledGradient => None,
                    _ => Some(gram_full()?),
                };
                sizes.push(x.shape().to_vec());
                block_update(&mut zk2, xk, pk, &b, &cfg.kernel, gram.as_ref(), cfg.lambda)?
            } else {
                let j = cfg.sample_param.unwrap();
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                rng.set_stream((t * n + k + 1) as u64);
                match cfg.variant {
                    Variant::RowUniform => {
                        // matched sample count, but rows of the subchain
                        // unfolding instead of a subtensor sketch
                        let n_free = (n - 1) as u32;
                        let target: usize = x
                            .shape()
                            .iter()
                            .enumerate()
                            .filter(|(m, _)| *m != k)
                            .map(|(_, &d)| free_mode_sample_size(d, j, n_free))
                            .product();
                        let b_full = cores.neq_unfold(k)?;
                        let rows = b_full.rows;
                        let take = target.min(rows);
                        let mut sel: Vec<usize> = if take == rows {
                            (0..rows).collect()
                        } else {
                            index_sample(&mut rng, rows, take).into_vec()
                        };
                        sel.sort_unstable();
                        let xk_full = x.unfold_shifted(k)?;
                        let pk_full = p_tensor.unfold_shifted(k)?;
                        let ik = x.shape()[k];
                        let mut bs = Mat::zeros(take, b_full.cols);
                        for (r, &m) in sel.iter().enumerate() {
                            bs.data[r * b_full.cols..(r + 1) * b_full.cols]
                                .copy_from_slice(b_full.row(m));
                        }
                        let mut xs = Mat::zeros(ik, take);
                        let mut ps = Mat::zeros(ik, take);
                        for i in 0..ik {
                            for (c, &m) in sel.iter().enumerate() {
                                xs.data[i * take + c] = xk_full.at(i, m);
                                ps.data[i * take + c] = pk_full.at(i, m);
                            }
                        }
                        let gram = Some(gram_full()?);
                        sizes.push(vec![take]);
                        block_update(
                            &mut zk2,
                            &xs,
                            &ps,
                            &bs,
                            &cfg.kernel,
                            gram.as_ref(),
                            cfg.lambda,
                        )?
                    }
                    _ => {
                        let plan = if free_plan_is_full(x.shape(), k, j) {
                            full_plan(x.shape(), k)
                        } else {
                            make_sketch_plan(x.shape(), k, j, &mut rng)?
                        };
                        let (xs, ps) = sample_subtensor(x, p, &plan)?;
                        let scores = sample_cores(&cores, &plan)?;
                        let b = scores.neq_unfold(k)?;
                        let xk = xs.unfold_shifted(k)?;
                        let pk = ps.to_tensor().unfold_shifted(k)?;
                        let gram = match cfg.variant {
                            Variant::UnscaledGradient => None,
                            Variant::LocalGram => {
                                Some(GramCache::build(&scores).gram_via_chain(k)?)
                            }
                            _ => Some(gram_full()?),
                        };
                        sizes.push(plan.sample_sizes());
                        block_update(&mut zk2, &xk, &pk, &b, &cfg.kernel, gram.as_ref(), cfg.lambda)?
                    }
                }
            };
            etas.push(outcome.eta);
            sigma_last = outcome.sigma.or(sigma_last);
            let core = DenseTensor::fold_classical(&zk2, 1, &core_shape)?;
            cache.refresh_q(k, &core)?;
            cores.set_core(k, core)?;
        }

        // stop metric from D^t = Z_{N(2)} G_{Z^{!=N}} Z_{N(2)}^T
        let zn2 = cores.core_unfold_2(n - 1);
        let g = cache.gram_via_chain(n - 1)?;
        let d_t = matmul_nt(&matmul(&zn2, &g), &zn2);
        let stop_metric = match &prev_d {
            None => f64::INFINITY,
            Some(prev) => {
                let mut diff = d_t.clone();
                diff.add_scaled(prev, -1.0);
                let denom = d_t.frobenius_norm();
                if denom == 0.0 {
                    if diff.frobenius_norm() == 0.0 {
                        0.0
                    } else {
                        f64::INFINITY
                    }
                } else {
                    diff.frobenius_norm() / denom
                }
            }
        };
        prev_d = Some(d_t);

        // trace bookkeeping on the full residual
        let recon = cores.reconstruct();
        let sigma_rec = if cfg.kernel.is_infinite() {
            f64::INFINITY
        } else {
            sigma_last.unwrap_or(f64::NAN)
        };
        let (objective, weighted_residual) = {
            let mut e = DenseTensor::zeros(x.shape().to_vec())?;
            for (i, v) in e.data_mut().iter_mut().enumerate() {
                *v = x.data()[i] - recon.data()[i];
            }
            let obj = if sigma_rec.is_finite() {
                correntropy_objective(&e, p, sigma_rec)?
            } else {
                f64::NAN
            };
            let w = if sigma_rec.is_finite() {
                Some(e.map(|v| hq_weight(v, Some(sigma_rec))))
            } else {
                None
            };
            let r = masked_weighted_residual(x, &recon, p, w.as_ref())?;
            (obj, r.frobenius_norm())
        };
        trace.records.push(IterRecord {
            iter: t,
            objective,
            weighted_residual,
            sigma: sigma_rec,
            stop_metric,
            etas,
            sample_sizes: sizes,
            elapsed_ms: started.elapsed().as_secs_f64() * 1e3,
        });
        if stop_metric < cfg.tol {
            break;
        }
    }
    Ok((cores, trace))
}

fn free_plan_is_full(shape: &[usize], k: usize, j: u64) -> bool {
    let n_free = (shape.len() - 1) as u32;
    shape
        .iter()
        .enumerate()
        .all(|(m, &d)| m == k || free_mode_sample_size(d, j, n_free) == d)
}

/// Full-data auto-weighted robust TR decomposition.
pub fn awrtrd(
    x: &DenseTensor,
    p: &ObservationMask,
    cfg: &SolverConfig,
) -> Result<(TRCores, SolverTrace)> {
    let mut cfg = cfg.clone();
    cfg.sample_param = None;
    cfg.variant = Variant::Sawrtrd;
    solve(x, p, &cfg)
}

/// Sketched solver; `cfg.sample_param` must be set.
pub fn sawrtrd(
    x: &DenseTensor,
    p: &ObservationMask,
    cfg: &SolverConfig,
) -> Result<(TRCores, SolverTrace)> {
    if cfg.sample_param.is_none() {
        return Err(TrError::InvalidConfig(
            "sawrtrd needs a sample parameter J".into(),
        ));
    }
    let mut cfg = cfg.clone();
    cfg.variant = Variant::Sawrtrd;
    solve(x, p, &cfg)
}

/// Unweighted baseline: AWRTRD with the infinite-sigma sentinel.
pub fn unweighted_solve(
    x: &DenseTensor,
    p: &ObservationMask,
    cfg: &SolverConfig,
) -> Result<(TRCores, SolverTrace)> {
    let mut cfg = cfg.clone();
    cfg.kernel = KernelPolicy::Infinite;
    awrtrd(x, p, &cfg)
}

/// Runs one of the ablation arms with the given sketch budget.
pub fn ablation_variant(
    x: &DenseTensor,
    p: &ObservationMask,
    cfg: &SolverConfig,
    variant: Variant,
) -> Result<(TRCores, SolverTrace)> {
    let mut cfg = cfg.clone();
    cfg.variant = variant;
    solve(x, p, &cfg)
}
