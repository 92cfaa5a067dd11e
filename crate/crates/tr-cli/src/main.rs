//! `trring`: tensor-ring decomposition and completion from the command line.
//!
//! Subcommands: `synth` builds corrupted test instances, `decompose` fits a
//! fully observed tensor, `complete` fills a masked one, `bench` sweeps the
//! tensor order or the sample parameter and emits timing data, and `ablate`
//! compares the sketched solver against its simplified variants.
//!
//! Set `TRRING_THREADS` to cap the data-parallel thread count.

mod config;
mod images;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::time::Instant;
use tr_core::data::{
    apply_noise, psnr, psnr_unobserved, random_mask, relative_error, synth_tr_tensor, NoiseSpec,
};
use tr_core::gram::GramCache;
use tr_core::hq::KernelPolicy;
use tr_core::io::{read_mask, read_tensor, save_cores, write_mask, write_tensor};
use tr_core::model::TRCores;
use tr_core::solver::{
    ablation_variant, awrtrd, init_cores, SolverConfig, SolverTrace, Variant,
};
use tr_core::tensor::{DenseTensor, ObservationMask};

use config::{write_config, write_text_atomic, RunConfig};

#[derive(Parser)]
#[command(name = "trring", version, about = "Robust tensor-ring decomposition and completion")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic low-rank instance with optional noise and mask
    Synth(SynthArgs),
    /// Fit a fully observed tensor
    Decompose(DecomposeArgs),
    /// Fill a partially observed tensor
    Complete(CompleteArgs),
    /// Timing sweeps over tensor order or sample parameter
    Bench(BenchArgs),
    /// Compare the sketched solver against simplified variants
    Ablate(AblateArgs),
}

#[derive(Args, Clone)]
struct SolverArgs {
    /// Target ring ranks, comma separated (e.g. 3,3,3)
    #[arg(long)]
    ranks: String,
    /// Sample parameter J; omitting it runs the full-data solver
    #[arg(long)]
    sample_param: Option<u64>,
    /// Kernel width policy: fixed:SIGMA, adaptive:THETA, or inf
    #[arg(long, default_value = "adaptive:1")]
    kernel: String,
    /// Preconditioner regularization
    #[arg(long, default_value_t = 1e-10)]
    lambda: f64,
    #[arg(long, default_value_t = 30)]
    max_iter: usize,
    /// Relative-change stopping tolerance
    #[arg(long, default_value_t = 1e-3)]
    tol: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Solver variant: sawrtrd, unscaled, local-gram, or row-uniform
    #[arg(long, default_value = "sawrtrd")]
    variant: String,
}

impl SolverArgs {
    fn to_config(&self) -> Result<SolverConfig> {
        let mut cfg = SolverConfig::new(parse_usize_list(&self.ranks)?);
        cfg.lambda = self.lambda;
        cfg.kernel = parse_kernel(&self.kernel)?;
        cfg.max_iter = self.max_iter;
        cfg.tol = self.tol;
        cfg.seed = self.seed;
        cfg.sample_param = self.sample_param;
        cfg.variant = self
            .variant
            .parse::<Variant>()
            .map_err(|e| anyhow::anyhow!("{e}"))?;
        cfg.validate().map_err(|e| anyhow::anyhow!("{e}"))?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct SynthArgs {
    /// Tensor shape, comma separated (e.g. 16,16,16)
    #[arg(long)]
    shape: String,
    #[arg(long)]
    ranks: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Observation rate in (0,1]; 1 observes everything
    #[arg(long, default_value_t = 1.0)]
    rate: f64,
    /// Noise model: gmm:PI,V1,V2 or sp:P
    #[arg(long)]
    noise: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DecomposeArgs {
    /// Input tensor (.dten)
    #[arg(long, conflicts_with = "images", required_unless_present = "images")]
    input: Option<PathBuf>,
    /// Input image frames (8-bit RGB PNG/PPM) forming an H×W×3(×F) tensor
    #[arg(long, num_args = 1..)]
    images: Option<Vec<PathBuf>>,
    /// Clean reference for PSNR reporting
    #[arg(long)]
    truth: Option<PathBuf>,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CompleteArgs {
    #[arg(long)]
    input: PathBuf,
    /// Observation mask (.dmask)
    #[arg(long)]
    mask: PathBuf,
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Report PSNR over unobserved entries only
    #[arg(long, default_value_t = false)]
    psnr_unobserved: bool,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    /// What to sweep: "n" (tensor order) or "j" (sample parameter)
    #[arg(long)]
    sweep: String,
    #[arg(long, default_value = "16,16,16")]
    shape: String,
    #[arg(long, default_value = "3,3,3")]
    ranks: String,
    /// Sweep values; defaults depend on the sweep kind
    #[arg(long)]
    values: Option<String>,
    #[arg(long, default_value_t = 5)]
    repeats: usize,
    #[arg(long, default_value_t = 30)]
    max_iter: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AblateArgs {
    #[arg(long, default_value = "16,16,16")]
    shape: String,
    /// Noise applied to the synthetic instance
    #[arg(long, default_value = "sp:0.2")]
    noise: String,
    /// Number of seeds per variant
    #[arg(long, default_value_t = 5)]
    seeds: u64,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long)]
    out: PathBuf,
}

fn parse_usize_list(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(|t| t.trim().parse::<usize>().with_context(|| format!("bad list entry {t:?}")))
        .collect()
}

fn parse_u64_list(s: &str) -> Result<Vec<u64>> {
    s.split(',')
        .map(|t| t.trim().parse::<u64>().with_context(|| format!("bad list entry {t:?}")))
        .collect()
}

fn parse_kernel(s: &str) -> Result<KernelPolicy> {
    if s == "inf" {
        return Ok(KernelPolicy::Infinite);
    }
    if let Some(v) = s.strip_prefix("fixed:") {
        return Ok(KernelPolicy::Fixed { sigma: v.parse().context("bad fixed kernel width")? });
    }
    if let Some(v) = s.strip_prefix("adaptive:") {
        let theta: f64 = v.parse().context("bad adaptive kernel multiplier")?;
        let mut k = match KernelPolicy::adaptive_default() {
            KernelPolicy::Adaptive { sigma_min, .. } => KernelPolicy::Adaptive { theta, sigma_min },
            other => other,
        };
        if let KernelPolicy::Adaptive { theta: t, .. } = &mut k {
            *t = theta;
        }
        return Ok(k);
    }
    bail!("kernel must be fixed:SIGMA, adaptive:THETA, or inf (got {s:?})");
}

fn parse_noise(s: &str) -> Result<NoiseSpec> {
    if let Some(v) = s.strip_prefix("sp:") {
        return Ok(NoiseSpec::SaltPepper { p: v.parse().context("bad salt-and-pepper rate")? });
    }
    if let Some(v) = s.strip_prefix("gmm:") {
        let parts: Vec<&str> = v.split(',').collect();
        if parts.len() != 3 {
            bail!("gmm noise needs three parameters: gmm:PI,V1,V2");
        }
        return Ok(NoiseSpec::Gmm {
            pi: parts[0].parse().context("bad gmm mixing weight")?,
            v1: parts[1].parse().context("bad gmm variance")?,
            v2: parts[2].parse().context("bad gmm variance")?,
        });
    }
    bail!("noise must be gmm:PI,V1,V2 or sp:P (got {s:?})");
}

/// Dispatches on sample parameter and variant: full-data runs use the dense
/// solver, sketched runs the requested variant.
fn run_solver(
    x: &DenseTensor,
    p: &ObservationMask,
    cfg: &SolverConfig,
) -> Result<(TRCores, SolverTrace)> {
    if cfg.sample_param.is_some() {
        Ok(ablation_variant(x, p, cfg, cfg.variant)?)
    } else if cfg.variant == Variant::Sawrtrd {
        Ok(awrtrd(x, p, cfg)?)
    } else {
        bail!("--variant other than sawrtrd requires --sample-param");
    }
}

fn write_trace(dir: &Path, trace: &SolverTrace) -> Result<()> {
    let mut buf = Vec::new();
    trace.write_csv(&mut buf)?;
    write_text_atomic(&dir.join("trace.csv"), &String::from_utf8(buf)?)
}

struct Metrics {
    command: &'static str,
    seed: u64,
    iterations: usize,
    elapsed_ms: f64,
    psnr_db: Option<f64>,
    psnr_exact: bool,
    relative_error: Option<f64>,
    psnr_scope: &'static str,
}

fn write_metrics(dir: &Path, m: &Metrics) -> Result<()> {
    let fmt = |v: Option<f64>| v.map(|v| format!("{v:.6}")).unwrap_or_default();
    let text = format!(
        "command,seed,iterations,elapsed_ms,psnr_db,psnr_exact,relative_error,psnr_scope\n{},{},{},{:.3},{},{},{},{}\n",
        m.command,
        m.seed,
        m.iterations,
        m.elapsed_ms,
        fmt(m.psnr_db),
        m.psnr_exact,
        fmt(m.relative_error),
        m.psnr_scope,
    );
    write_text_atomic(&dir.join("metrics.csv"), &text)
}

fn cmd_synth(a: SynthArgs) -> Result<()> {
    let shape = parse_usize_list(&a.shape)?;
    let ranks = parse_usize_list(&a.ranks)?;
    let noise = a.noise.as_deref().map(parse_noise).transpose()?;
    let inst = synth_tr_tensor(&shape, &ranks, a.seed)?;
    let noisy = match &noise {
        Some(spec) => apply_noise(&inst.tensor, spec, a.seed.wrapping_add(1))?,
        None => inst.tensor.clone(),
    };
    let mask = random_mask(&shape, a.rate, a.seed.wrapping_add(2))?;
    write_tensor(&inst.tensor, a.out.join("clean.dten"))?;
    write_tensor(&noisy, a.out.join("noisy.dten"))?;
    write_mask(&mask, a.out.join("mask.dmask"))?;
    write_config(&a.out, &RunConfig::Synth { shape, ranks, seed: a.seed, rate: a.rate, noise })?;
    println!("wrote clean.dten, noisy.dten, mask.dmask to {}", a.out.display());
    Ok(())
}

fn cmd_decompose(a: DecomposeArgs) -> Result<()> {
    let cfg = a.solver.to_config()?;
    let x = match (&a.input, &a.images) {
        (Some(path), None) => read_tensor(path)?,
        (None, Some(frames)) => images::ingest_image_stack(frames)?,
        _ => bail!("give exactly one of --input or --images"),
    };
    let p = ObservationMask::all_observed(x.shape().to_vec())?;
    let t0 = Instant::now();
    let (cores, trace) = run_solver(&x, &p, &cfg)?;
    let elapsed_ms = t0.elapsed().as_secs_f64() * 1e3;
    let rec = cores.reconstruct();
    let reference = match &a.truth {
        Some(path) => read_tensor(path)?,
        None => x.clone(),
    };
    let (db, exact) = psnr(&reference, &rec, 1.0)?;
    save_cores(&cores, a.out.join("cores"), Some(cfg.seed), Some("trring decompose".into()))?;
    write_tensor(&rec, a.out.join("recon.dten"))?;
    write_trace(&a.out, &trace)?;
    write_metrics(&a.out, &Metrics {
        command: "decompose",
        seed: cfg.seed,
        iterations: trace.records.len(),
        elapsed_ms,
        psnr_db: Some(db),
        psnr_exact: exact,
        relative_error: Some(relative_error(&rec, &reference)),
        psnr_scope: "all",
    })?;
    let input_name = a
        .input
        .as_ref()
        .map(|p| p.display().to_string())
        .unwrap_or_else(|| {
            a.images
                .as_ref()
                .map(|v| v.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(";"))
                .unwrap_or_default()
        });
    write_config(&a.out, &RunConfig::Decompose {
        input: input_name,
        truth: a.truth.as_ref().map(|p| p.display().to_string()),
        solver: cfg,
    })?;
    println!("decompose: {} iterations, PSNR {:.2} dB", trace.records.len(), db);
    Ok(())
}

fn cmd_complete(a: CompleteArgs) -> Result<()> {
    let cfg = a.solver.to_config()?;
    let x = read_tensor(&a.input)?;
    let mask = read_mask(&a.mask)?;
    if mask.shape() != x.shape() {
        bail!("mask shape {:?} does not match tensor shape {:?}", mask.shape(), x.shape());
    }
    let t0 = Instant::now();
    let (cores, trace) = run_solver(&x, &mask, &cfg)?;
    let elapsed_ms = t0.elapsed().as_secs_f64() * 1e3;
    let rec = cores.reconstruct();
    let (psnr_db, psnr_exact, rel) = match &a.truth {
        Some(path) => {
            let truth = read_tensor(path)?;
            let (db, exact) = if a.psnr_unobserved {
                psnr_unobserved(&truth, &rec, &mask, 1.0)?
            } else {
                psnr(&truth, &rec, 1.0)?
            };
            (Some(db), exact, Some(relative_error(&rec, &truth)))
        }
        None => (None, false, None),
    };
    save_cores(&cores, a.out.join("cores"), Some(cfg.seed), Some("trring complete".into()))?;
    write_tensor(&rec, a.out.join("recon.dten"))?;
    write_trace(&a.out, &trace)?;
    write_metrics(&a.out, &Metrics {
        command: "complete",
        seed: cfg.seed,
        iterations: trace.records.len(),
        elapsed_ms,
        psnr_db,
        psnr_exact,
        relative_error: rel,
        psnr_scope: if a.psnr_unobserved { "unobserved" } else { "all" },
    })?;
    write_config(&a.out, &RunConfig::Complete {
        input: a.input.display().to_string(),
        mask: a.mask.display().to_string(),
        truth: a.truth.as_ref().map(|p| p.display().to_string()),
        solver: cfg,
    })?;
    match psnr_db {
        Some(db) => println!("complete: {} iterations, PSNR {:.2} dB", trace.records.len(), db),
        None => println!("complete: {} iterations", trace.records.len()),
    }
    Ok(())
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn cmd_bench(a: BenchArgs) -> Result<()> {
    let shape = parse_usize_list(&a.shape)?;
    let ranks = parse_usize_list(&a.ranks)?;
    let mut rows = String::new();
    let values;
    match a.sweep.as_str() {
        "n" => {
            // Gram-chain cost vs tensor order at uniform dim and rank
            values = match &a.values {
                Some(v) => parse_u64_list(v)?,
                None => vec![4, 6, 8, 10, 12],
            };
            let (dim, rank) = (shape[0], ranks[0]);
            rows.push_str("n,median_ms\n");
            for &n in &values {
                let n = n as usize;
                let cores = init_cores(&vec![dim; n], &vec![rank; n], a.seed, 1.0)?;
                let mut times = Vec::with_capacity(a.repeats);
                for _ in 0..a.repeats {
                    let t0 = Instant::now();
                    for _ in 0..50 {
                        let cache = GramCache::build(&cores);
                        let _ = cache.gram_via_chain(0)?;
                    }
                    times.push(t0.elapsed().as_secs_f64() * 1e3);
                }
                rows.push_str(&format!("{n},{:.4}\n", median(times)));
            }
        }
        "j" => {
            values = match &a.values {
                Some(v) => parse_u64_list(v)?,
                None => vec![27, 81, 144, 256],
            };
            let inst = synth_tr_tensor(&shape, &ranks, a.seed)?;
            let noisy = apply_noise(&inst.tensor, &NoiseSpec::salt_pepper_default(), a.seed + 1)?;
            let p = ObservationMask::all_observed(shape.clone())?;
            rows.push_str("j,repeat,elapsed_ms,psnr_db\n");
            for &j in &values {
                for rep in 0..a.repeats {
                    let mut cfg = SolverConfig::new(ranks.clone());
                    cfg.max_iter = a.max_iter;
                    cfg.tol = 1e-14;
                    cfg.seed = a.seed + rep as u64;
                    cfg.sample_param = Some(j);
                    let t0 = Instant::now();
                    let (cores, _) = run_solver(&noisy, &p, &cfg)?;
                    let ms = t0.elapsed().as_secs_f64() * 1e3;
                    let (db, _) = psnr(&inst.tensor, &cores.reconstruct(), 1.0)?;
                    rows.push_str(&format!("{j},{rep},{ms:.3},{db:.3}\n"));
                }
            }
        }
        other => bail!("sweep must be 'n' or 'j' (got {other:?})"),
    }
    write_text_atomic(&a.out.join("timing.csv"), &rows)?;
    write_config(&a.out, &RunConfig::Bench {
        sweep: a.sweep,
        shape,
        ranks,
        values,
        repeats: a.repeats,
        solver: None,
    })?;
    println!("wrote timing.csv to {}", a.out.display());
    Ok(())
}

fn cmd_ablate(a: AblateArgs) -> Result<()> {
    let shape = parse_usize_list(&a.shape)?;
    let base = a.solver.to_config()?;
    if base.sample_param.is_none() {
        bail!("ablate requires --sample-param");
    }
    let noise = parse_noise(&a.noise)?;
    let variants = [
        Variant::Sawrtrd,
        Variant::UnscaledGradient,
        Variant::LocalGram,
        Variant::RowUniform,
    ];
    let p = ObservationMask::all_observed(shape.clone())?;
    let mut rows = String::from("variant,seed,iterations,elapsed_ms,psnr_db\n");
    for seed in 0..a.seeds {
        let inst = synth_tr_tensor(&shape, &base.ranks, 100 + seed)?;
        let noisy = apply_noise(&inst.tensor, &noise, 200 + seed)?;
        for v in variants {
            let mut cfg = base.clone();
            cfg.seed = seed;
            let t0 = Instant::now();
            let (cores, trace) = ablation_variant(&noisy, &p, &cfg, v)?;
            let ms = t0.elapsed().as_secs_f64() * 1e3;
            let (db, _) = psnr(&inst.tensor, &cores.reconstruct(), 1.0)?;
            let name = match v {
                Variant::Sawrtrd => "sawrtrd",
                Variant::UnscaledGradient => "unscaled",
                Variant::LocalGram => "local-gram",
                Variant::RowUniform => "row-uniform",
            };
            rows.push_str(&format!("{name},{seed},{},{ms:.3},{db:.3}\n", trace.records.len()));
        }
    }
    write_text_atomic(&a.out.join("ablate.csv"), &rows)?;
    write_config(&a.out, &RunConfig::Ablate {
        shape,
        ranks: base.ranks.clone(),
        noise: Some(noise),
        seeds: a.seeds,
        solver: base,
    })?;
    println!("wrote ablate.csv to {}", a.out.display());
    Ok(())
}

fn main() {
    if let Ok(v) = std::env::var("TRRING_THREADS") {
        match v.parse::<usize>() {
            Ok(n) if n > 0 => {
                if let Err(e) = tr_core::configure_threads(n) {
                    eprintln!("warning: {e}");
                }
            }
            _ => eprintln!("warning: ignoring invalid TRRING_THREADS={v:?}"),
        }
    }
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Synth(a) => cmd_synth(a),
        Cmd::Decompose(a) => cmd_decompose(a),
        Cmd::Complete(a) => cmd_complete(a),
        Cmd::Bench(a) => cmd_bench(a),
        Cmd::Ablate(a) => cmd_ablate(a),
    };
    if let Err(e) = result {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
