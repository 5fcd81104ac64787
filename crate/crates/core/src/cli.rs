//! Command-line front end: TOML-configured experiments with CSV output and a
//! JSON sidecar recording the exact run parameters.

use crate::error::{Error, Result};
use crate::kernel::{preset_by_key, KernelApprox};
use crate::model::ModelParams;
use crate::pricing::{
    implied_vol, price_bermudan_put, price_european, price_geometric_asian, price_surface,
    EnginePlan, SamplingPlan, SchemeKind,
};
use crate::randstream::StreamKind;
use crate::reference::OptionSide;
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

#[derive(Parser)]
#[command(name = "sim", about = "Simulation experiments for kernel-based volatility models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// European option prices and implied vols across strikes
    Smile(RunArgs),
    /// Implied-volatility surface over a maturity/strike grid
    Surface(RunArgs),
    /// Geometric-average Asian option
    Asian(RunArgs),
    /// Bermudan put via regression
    Bermudan(RunArgs),
    /// Weak convergence study against a fine-grid reference
    Convergence(RunArgs),
    /// L1 error of the kernel approximation presets
    KernelError(RunArgs),
}

#[derive(Args)]
pub struct RunArgs {
    /// TOML experiment configuration
    #[arg(long)]
    pub config: PathBuf,
    /// Override the seed from the config
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores); results do not depend on this
    #[arg(long)]
    pub threads: Option<usize>,
    /// Output directory for CSV and sidecar files
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub model: ModelParams,
    pub kernel: KernelConfig,
    pub run: RunConfig,
    #[serde(default)]
    pub smile: Option<SmileConfig>,
    #[serde(default)]
    pub surface: Option<SurfaceConfig>,
    #[serde(default)]
    pub asian: Option<AsianConfig>,
    #[serde(default)]
    pub bermudan: Option<BermudanConfig>,
    #[serde(default)]
    pub convergence: Option<ConvergenceConfig>,
    #[serde(default)]
    pub kernel_error: Option<KernelErrorConfig>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    /// Preset key like "H0.1/T1/N2"; alternative to explicit nodes/weights.
    #[serde(default)]
    pub preset: Option<String>,
    #[serde(default)]
    pub nodes: Option<Vec<f64>>,
    #[serde(default)]
    pub weights: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scheme: SchemeKind,
    /// Step counts; single-valued experiments use each entry in turn.
    pub steps: Vec<usize>,
    pub shifts: u32,
    pub points_per_shift: u64,
    pub stream: StreamKind,
    pub seed: u64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmileConfig {
    pub strikes: Vec<f64>,
    pub side: OptionSide,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurfaceConfig {
    pub maturities: usize,
    pub strikes: Vec<f64>,
    pub side: OptionSide,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AsianConfig {
    pub strike: f64,
    pub side: OptionSide,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BermudanConfig {
    pub strike: f64,
    pub exercise_dates: usize,
    pub degree: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceConfig {
    pub reference_steps: usize,
    pub strike: f64,
    pub side: OptionSide,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelErrorConfig {
    pub hurst: f64,
    pub horizon_key: String,
    pub dims: Vec<usize>,
    pub horizon: f64,
}

impl Config {
    pub fn load(path: &Path) -> Result<Config> {
        let raw = std::fs::read_to_string(path)?;
        let cfg: Config =
            toml::from_str(&raw).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if cfg.run.steps.is_empty() {
            return Err(Error::Config("run.steps must not be empty".into()));
        }
        Ok(cfg)
    }

    pub fn kernel_approx(&self) -> Result<KernelApprox> {
        match (&self.kernel.preset, &self.kernel.nodes, &self.kernel.weights) {
            (Some(key), None, None) => preset_by_key(key, self.model.v0),
            (None, Some(nodes), Some(weights)) => {
                KernelApprox::with_equal_split(nodes.clone(), weights.clone(), self.model.v0)
            }
            _ => Err(Error::Config(
                "kernel needs either a preset key or explicit nodes and weights".into(),
            )),
        }
    }

    fn plan(&self, scheme: SchemeKind, steps: usize, seed: u64) -> EnginePlan {
        EnginePlan {
            scheme,
            steps,
            sampling: SamplingPlan {
                kind: self.run.stream,
                shifts: self.run.shifts,
                points_per_shift: self.run.points_per_shift,
                seed,
            },
        }
    }
}

/// Observed order between two error levels on a doubled grid, with the
/// half-width propagated to first order through the logarithm.
pub fn rate_with_ci(e_coarse: f64, ci_coarse: f64, e_fine: f64, ci_fine: f64) -> (f64, f64) {
    let rate = (e_coarse / e_fine).log2();
    let ci = (ci_coarse / e_coarse.abs() + ci_fine / e_fine.abs()) / std::f64::consts::LN_2;
    (rate, ci)
}

fn write_output(out_dir: &Path, name: &str, csv: &str, sidecar: serde_json::Value) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    std::fs::write(out_dir.join(format!("{name}.csv")), csv)?;
    std::fs::write(
        out_dir.join(format!("{name}.json")),
        serde_json::to_string_pretty(&sidecar).expect("serializable sidecar"),
    )?;
    Ok(())
}

fn git_describe() -> String {
    std::process::Command::new("git")
        .args(["describe", "--always", "--dirty"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .map(|o| String::from_utf8_lossy(&o.stdout).trim().to_string())
        .unwrap_or_else(|| "unknown".into())
}

fn sidecar(cfg_path: &Path, seed: u64, wall_secs: f64, extra: serde_json::Value) -> serde_json::Value {
    serde_json::json!({
        "config_file": cfg_path.display().to_string(),
        "config": std::fs::read_to_string(cfg_path).unwrap_or_default(),
        "seed": seed,
        "git": git_describe(),
        "wall_seconds": wall_secs,
        "details": extra,
    })
}

struct ExperimentCtx {
    cfg: Config,
    seed: u64,
    out: PathBuf,
    cfg_path: PathBuf,
}

fn section<'a, T>(opt: &'a Option<T>, name: &str) -> Result<&'a T> {
    opt.as_ref()
        .ok_or_else(|| Error::Config(format!("missing [{name}] section in the config")))
}

fn run_smile(ctx: &ExperimentCtx) -> Result<()> {
    let sc = section(&ctx.cfg.smile, "smile")?;
    let kernel = ctx.cfg.kernel_approx()?;
    let model = &ctx.cfg.model;
    let forward = model.s0 * (model.r * model.maturity).exp();
    let mut csv = String::from("scheme,n_factors,steps,seed,strike,price,ci_half,implied_vol,iv_lo,iv_hi\n");
    let start = Instant::now();
    for &steps in &ctx.cfg.run.steps {
        let plan = ctx.cfg.plan(ctx.cfg.run.scheme, steps, ctx.seed);
        let est = price_european(model, &kernel, &plan, &sc.strikes, sc.side)?;
        for (e, &k) in est.iter().zip(&sc.strikes) {
            let grow = (model.r * model.maturity).exp();
            let iv = implied_vol(e.value * grow, forward, k, model.maturity, sc.side);
            let lo = implied_vol((e.value - e.ci_half) * grow, forward, k, model.maturity, sc.side);
            let hi = implied_vol((e.value + e.ci_half) * grow, forward, k, model.maturity, sc.side);
            writeln!(
                csv,
                "{:?},{},{},{},{},{:.10},{:.3e},{},{},{}",
                ctx.cfg.run.scheme,
                kernel.dim(),
                steps,
                ctx.seed,
                k,
                e.value,
                e.ci_half,
                fmt_iv(iv),
                fmt_iv(lo),
                fmt_iv(hi),
            )
            .unwrap();
        }
    }
    print!("{csv}");
    write_output(
        &ctx.out,
        "smile",
        &csv,
        sidecar(&ctx.cfg_path, ctx.seed, start.elapsed().as_secs_f64(), serde_json::json!({})),
    )
}

fn fmt_iv(iv: Result<f64>) -> String {
    match iv {
        Ok(v) => format!("{v:.8}"),
        Err(_) => "nan".into(),
    }
}

fn run_surface(ctx: &ExperimentCtx) -> Result<()> {
    let sc = section(&ctx.cfg.surface, "surface")?;
    let kernel = ctx.cfg.kernel_approx()?;
    let model = &ctx.cfg.model;
    let mut csv =
        String::from("scheme,n_factors,steps,seed,maturity,strike,price,ci_half,implied_vol\n");
    let start = Instant::now();
    for &steps in &ctx.cfg.run.steps {
        let plan = ctx.cfg.plan(ctx.cfg.run.scheme, steps, ctx.seed);
        let pts = price_surface(model, &kernel, &plan, sc.maturities, &sc.strikes, sc.side)?;
        for p in pts {
            writeln!(
                csv,
                "{:?},{},{},{},{:.6},{},{:.10},{:.3e},{:.8}",
                ctx.cfg.run.scheme,
                kernel.dim(),
                steps,
                ctx.seed,
                p.maturity,
                p.strike,
                p.price.value,
                p.price.ci_half,
                p.implied_vol,
            )
            .unwrap();
        }
    }
    print!("{csv}");
    write_output(
        &ctx.out,
        "surface",
        &csv,
        sidecar(&ctx.cfg_path, ctx.seed, start.elapsed().as_secs_f64(), serde_json::json!({})),
    )
}

fn run_asian(ctx: &ExperimentCtx) -> Result<()> {
    let sc = section(&ctx.cfg.asian, "asian")?;
    let kernel = ctx.cfg.kernel_approx()?;
    let model = &ctx.cfg.model;
    let mut csv = String::from("scheme,n_factors,steps,seed,strike,price,ci_half\n");
    let start = Instant::now();
    for &steps in &ctx.cfg.run.steps {
        let plan = ctx.cfg.plan(ctx.cfg.run.scheme, steps, ctx.seed);
        let est = price_geometric_asian(model, &kernel, &plan, sc.strike, sc.side)?;
        writeln!(
            csv,
            "{:?},{},{},{},{},{:.10},{:.3e}",
            ctx.cfg.run.scheme,
            kernel.dim(),
            steps,
            ctx.seed,
            sc.strike,
            est.value,
            est.ci_half,
        )
        .unwrap();
    }
    print!("{csv}");
    write_output(
        &ctx.out,
        "asian",
        &csv,
        sidecar(&ctx.cfg_path, ctx.seed, start.elapsed().as_secs_f64(), serde_json::json!({})),
    )
}

fn run_bermudan(ctx: &ExperimentCtx) -> Result<()> {
    let sc = section(&ctx.cfg.bermudan, "bermudan")?;
    let kernel = ctx.cfg.kernel_approx()?;
    let model = &ctx.cfg.model;
    let mut csv = String::from(
        "scheme,n_factors,steps,seed,strike,exercise_dates,degree,basis_size,bermudan,bermudan_ci,european,european_ci\n",
    );
    let start = Instant::now();
    for &steps in &ctx.cfg.run.steps {
        let plan = ctx.cfg.plan(ctx.cfg.run.scheme, steps, ctx.seed);
        let res = price_bermudan_put(model, &kernel, &plan, sc.strike, sc.exercise_dates, sc.degree)?;
        writeln!(
            csv,
            "{:?},{},{},{},{},{},{},{},{:.10},{:.3e},{:.10},{:.3e}",
            ctx.cfg.run.scheme,
            kernel.dim(),
            steps,
            ctx.seed,
            sc.strike,
            sc.exercise_dates,
            sc.degree,
            res.basis_size,
            res.bermudan.value,
            res.bermudan.ci_half,
            res.european.value,
            res.european.ci_half,
        )
        .unwrap();
    }
    print!("{csv}");
    write_output(
        &ctx.out,
        "bermudan",
        &csv,
        sidecar(&ctx.cfg_path, ctx.seed, start.elapsed().as_secs_f64(), serde_json::json!({})),
    )
}

fn run_convergence(ctx: &ExperimentCtx) -> Result<()> {
    let sc = section(&ctx.cfg.convergence, "convergence")?;
    let kernel = ctx.cfg.kernel_approx()?;
    let model = &ctx.cfg.model;
    let start = Instant::now();
    let ref_plan = ctx.cfg.plan(ctx.cfg.run.scheme, sc.reference_steps, ctx.seed);
    let reference = price_european(model, &kernel, &ref_plan, &[sc.strike], sc.side)?[0];
    let mut rows = Vec::new();
    for &steps in &ctx.cfg.run.steps {
        if steps >= sc.reference_steps {
            return Err(Error::Config(format!(
                "step count {steps} must be below reference_steps {}",
                sc.reference_steps
            )));
        }
        let plan = ctx.cfg.plan(ctx.cfg.run.scheme, steps, ctx.seed);
        let est = price_european(model, &kernel, &plan, &[sc.strike], sc.side)?[0];
        rows.push((steps, est));
    }
    let mut csv = String::from(
        "scheme,n_factors,steps,seed,strike,price,ci_half,ref_price,error,rate,rate_ci\n",
    );
    for (i, (steps, est)) in rows.iter().enumerate() {
        let err = est.value - reference.value;
        let (rate, rate_ci) = if i + 1 < rows.len() {
            let next = &rows[i + 1].1;
            let (r, c) = rate_with_ci(
                err,
                est.ci_half + reference.ci_half,
                next.value - reference.value,
                next.ci_half + reference.ci_half,
            );
            (format!("{r:.4}"), format!("{c:.4}"))
        } else {
            ("".into(), "".into())
        };
        writeln!(
            csv,
            "{:?},{},{},{},{},{:.10},{:.3e},{:.10},{:.6e},{},{}",
            ctx.cfg.run.scheme,
            kernel.dim(),
            steps,
            ctx.seed,
            sc.strike,
            est.value,
            est.ci_half,
            reference.value,
            err,
            rate,
            rate_ci,
        )
        .unwrap();
    }
    print!("{csv}");
    write_output(
        &ctx.out,
        "convergence",
        &csv,
        sidecar(
            &ctx.cfg_path,
            ctx.seed,
            start.elapsed().as_secs_f64(),
            serde_json::json!({"reference_steps": sc.reference_steps}),
        ),
    )
}

fn run_kernel_error(ctx: &ExperimentCtx) -> Result<()> {
    let sc = section(&ctx.cfg.kernel_error, "kernel_error")?;
    let mut csv = String::from("hurst,horizon,n_factors,l1_error\n");
    let start = Instant::now();
    for &n in &sc.dims {
        let k = crate::kernel::preset(sc.hurst, &sc.horizon_key, n, ctx.cfg.model.v0)?;
        let err = k.l1_error(sc.hurst, sc.horizon)?;
        writeln!(csv, "{},{},{},{:.6e}", sc.hurst, sc.horizon, n, err).unwrap();
    }
    print!("{csv}");
    write_output(
        &ctx.out,
        "kernel_error",
        &csv,
        sidecar(&ctx.cfg_path, ctx.seed, start.elapsed().as_secs_f64(), serde_json::json!({})),
    )
}

fn dispatch(cmd: &Command) -> Result<()> {
    let args = match cmd {
        Command::Smile(a)
        | Command::Surface(a)
        | Command::Asian(a)
        | Command::Bermudan(a)
        | Command::Convergence(a)
        | Command::KernelError(a) => a,
    };
    let cfg = Config::load(&args.config)?;
    let seed = args.seed.unwrap_or(cfg.run.seed);
    let ctx = ExperimentCtx {
        cfg,
        seed,
        out: args.out.clone(),
        cfg_path: args.config.clone(),
    };
    let body = || match cmd {
        Command::Smile(_) => run_smile(&ctx),
        Command::Surface(_) => run_surface(&ctx),
        Command::Asian(_) => run_asian(&ctx),
        Command::Bermudan(_) => run_bermudan(&ctx),
        Command::Convergence(_) => run_convergence(&ctx),
        Command::KernelError(_) => run_kernel_error(&ctx),
    };
    match args.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(body),
        None => body(),
    }
}

/// Entry point shared by the binary: returns the process exit code.
pub fn run() -> u8 {
    let cli = Cli::parse();
    match dispatch(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::UnknownPreset { .. } | Error::Io(_) => 2,
                _ => 3,
            }
        }
    }
}
