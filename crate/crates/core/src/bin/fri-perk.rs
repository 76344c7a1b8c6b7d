//! Command-line driver: fixture synthesis, single-shot estimation, SER
//! sweeps and timing benchmarks.
//!
//! Exit codes: 0 on success, 2 on configuration errors, 3 when a sweep
//! completed with partial estimator failures.

use anyhow::{Context, Result as AnyResult};
use clap::{Args, Parser, Subcommand, ValueEnum};
use fri_perk::channel_model::{
    add_awgn, sample_pilots, synth_clustered_channel, synth_scs_channel, PilotLayout,
    PilotMeasurements,
};
use fri_perk::harness::{
    gnuplot_script, run_sweep, run_timing, write_summary_csv, write_sweep_csv, write_timing_csv,
    ExperimentConfig, TimingConfig,
};
use fri_perk::pipeline::{
    estimate_fri_per_dense, estimate_fri_perk, estimate_lowpass, estimate_ra_ormp, RaOrmpParams,
    SparseParams,
};
use ndarray::Array2;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const EXIT_OK: u8 = 0;
const EXIT_CONFIG: u8 = 2;
const EXIT_PARTIAL: u8 = 3;

/// Output directory override for relative paths.
const OUTPUT_DIR_ENV: &str = "FRI_PERK_OUTPUT_DIR";

#[derive(Parser)]
#[command(
    name = "fri-perk",
    version,
    about = "Sparse common-support channel estimation from uniform DFT pilots"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Emit synthetic channel / pilot-measurement JSON fixtures
    Synth(SynthArgs),
    /// Estimate one measurement file and write the report as JSON
    Estimate(EstimateArgs),
    /// Run an SER/MSE sweep from a JSON config and write CSV results
    Sweep(SweepArgs),
    /// Run the timing benchmark and emit CSV plus a gnuplot script
    Bench(BenchArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum RegimeArg {
    Scs,
    Clustered,
    NoiseOnly,
}

#[derive(Args)]
struct SynthArgs {
    /// Half pilot count M (N = 2M+1 pilots, frame length 2MD+1)
    #[arg(long)]
    m: usize,
    /// Pilot spacing D in DFT bins
    #[arg(long)]
    d: usize,
    /// Antenna count
    #[arg(long, default_value_t = 8)]
    p: usize,
    #[arg(long, value_enum, default_value_t = RegimeArg::Scs)]
    regime: RegimeArg,
    /// Path count (scs regime)
    #[arg(long, default_value_t = 5)]
    k: usize,
    /// Per-path energy decay rate (scs regime)
    #[arg(long, default_value_t = 0.0)]
    decay: f64,
    /// Cluster count (clustered regime)
    #[arg(long, default_value_t = 8)]
    clusters: usize,
    /// Reflections per cluster (clustered regime)
    #[arg(long, default_value_t = 10)]
    reflections: usize,
    /// Cluster girth in frame-fraction units (clustered regime)
    #[arg(long, default_value_t = 0.02)]
    girth: f64,
    /// Pilot SNR in dB; omit for noiseless samples
    #[arg(long)]
    snr_db: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Where to write the ground-truth channel JSON
    #[arg(long)]
    spec_out: Option<PathBuf>,
    /// Where to write the pilot measurement JSON
    #[arg(long)]
    meas_out: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    FriPerk,
    FriPerDense,
    Lowpass,
    RaOrmp,
}

#[derive(Args)]
struct EstimateArgs {
    /// Pilot measurement JSON produced by `synth`
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value_t = MethodArg::FriPerk)]
    method: MethodArg,
    #[arg(long, default_value_t = 12)]
    k_max: usize,
    /// Detector look-ahead window L
    #[arg(long, default_value_t = 3)]
    window: usize,
    #[arg(long, default_value_t = 0.0)]
    eps_slope: f64,
    /// Dictionary oversampling (ra-ormp)
    #[arg(long, default_value_t = 1)]
    oversample: usize,
    /// Support size cap (ra-ormp)
    #[arg(long, default_value_t = 12)]
    k_cap: usize,
    /// Residual-threshold margin over the noise floor (ra-ormp)
    #[arg(long, default_value_t = 0.5)]
    noise_margin: f64,
    /// Modelization-error margin for the sparse-fit rejection guard
    #[arg(long, default_value_t = 0.15)]
    residual_margin: f64,
    /// Lowpass delay window; full admissible range when omitted
    #[arg(long)]
    lowpass_window: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Report output path (JSON)
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    /// Experiment config (JSON, see README for the schema)
    #[arg(long)]
    config: PathBuf,
    /// Trial-level CSV output
    #[arg(long)]
    out: PathBuf,
    /// Aggregate CSV output; defaults to `<out>` with a .summary.csv suffix
    #[arg(long)]
    summary_out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Timing config (JSON, see README for the schema)
    #[arg(long)]
    config: PathBuf,
    /// Timing CSV output
    #[arg(long)]
    out: PathBuf,
    /// gnuplot script output
    #[arg(long)]
    plot: PathBuf,
    /// Image name referenced inside the plot script
    #[arg(long, default_value = "timing.png")]
    png: String,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(cli: Cli) -> AnyResult<u8> {
    match cli.cmd {
        Cmd::Synth(args) => synth(args),
        Cmd::Estimate(args) => estimate(args),
        Cmd::Sweep(args) => sweep(args),
        Cmd::Bench(args) => bench(args),
    }
}

fn resolve_out(path: &Path) -> PathBuf {
    match std::env::var_os(OUTPUT_DIR_ENV) {
        Some(dir) if path.is_relative() => PathBuf::from(dir).join(path),
        _ => path.to_path_buf(),
    }
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> AnyResult<()> {
    let path = resolve_out(path);
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let file = fs::File::create(&path)
        .with_context(|| format!("creating {}", path.display()))?;
    serde_json::to_writer_pretty(file, value)?;
    Ok(())
}

fn config_err(msg: impl std::fmt::Display) -> u8 {
    eprintln!("config error: {msg}");
    EXIT_CONFIG
}

fn synth(args: SynthArgs) -> AnyResult<u8> {
    let layout = match PilotLayout::new(args.m, args.d) {
        Ok(l) => l,
        Err(e) => return Ok(config_err(e)),
    };
    let (spec, meas) = match args.regime {
        RegimeArg::Scs => {
            let spec = match synth_scs_channel(args.p, args.k, &layout, args.decay, None, None, args.seed)
            {
                Ok(s) => s,
                Err(e) => return Ok(config_err(e)),
            };
            let meas = sample_pilots(&spec, &layout)?;
            (Some(spec), meas)
        }
        RegimeArg::Clustered => {
            let spec = match synth_clustered_channel(
                args.p,
                args.clusters,
                args.reflections,
                args.girth,
                &layout,
                args.seed,
            ) {
                Ok(s) => s,
                Err(e) => return Ok(config_err(e)),
            };
            let meas = sample_pilots(&spec, &layout)?;
            (Some(spec), meas)
        }
        RegimeArg::NoiseOnly => {
            let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
            let samples = Array2::from_shape_fn((layout.num_pilots(), args.p), |_| {
                let re: f64 = rng.gen::<f64>();
                let im: f64 = rng.gen::<f64>();
                // Box-Muller on the pair
                let r = (-2.0 * (1.0 - re).ln()).sqrt() / 2f64.sqrt();
                Complex64::from_polar(r, std::f64::consts::TAU * im)
            });
            (None, PilotMeasurements::new(layout, samples, 1.0)?)
        }
    };
    let meas = match args.snr_db {
        Some(snr) => match add_awgn(&meas, snr, args.seed.wrapping_add(1)) {
            Ok(m) => m,
            Err(e) => return Ok(config_err(e)),
        },
        None => meas,
    };
    if let (Some(spec), Some(path)) = (&spec, &args.spec_out) {
        write_json(path, spec)?;
    }
    write_json(&args.meas_out, &meas)?;
    println!(
        "wrote {} ({} pilots x {} antennas)",
        resolve_out(&args.meas_out).display(),
        meas.samples().nrows(),
        meas.samples().ncols()
    );
    Ok(EXIT_OK)
}

fn estimate(args: EstimateArgs) -> AnyResult<u8> {
    let text = match fs::read_to_string(&args.input) {
        Ok(t) => t,
        Err(e) => return Ok(config_err(format!("{}: {e}", args.input.display()))),
    };
    let meas: PilotMeasurements = match serde_json::from_str(&text) {
        Ok(m) => m,
        Err(e) => return Ok(config_err(format!("{}: {e}", args.input.display()))),
    };
    let sparse = SparseParams {
        k_max: args.k_max,
        window: args.window,
        eps_slope: args.eps_slope,
        residual_margin: args.residual_margin,
        fallback_window: args.lowpass_window,
    };
    let report = match args.method {
        MethodArg::FriPerk => estimate_fri_perk(&meas, &sparse, args.seed),
        MethodArg::FriPerDense => estimate_fri_per_dense(&meas, &sparse),
        MethodArg::Lowpass => estimate_lowpass(&meas, args.lowpass_window),
        MethodArg::RaOrmp => estimate_ra_ormp(
            &meas,
            &RaOrmpParams {
                oversample: args.oversample,
                k_cap: args.k_cap,
                noise_margin: args.noise_margin,
            },
        ),
    };
    let report = match report {
        Ok(r) => r,
        Err(e) => return Ok(config_err(e)),
    };
    write_json(&args.out, &report)?;
    match report.k_hat {
        Some(k) => println!("method {}: K_hat = {k}", report.method),
        None => println!(
            "method {}: not sparse{}",
            report.method,
            if report.fallback { " (lowpass fallback)" } else { "" }
        ),
    }
    Ok(EXIT_OK)
}

fn sweep(args: SweepArgs) -> AnyResult<u8> {
    let text = match fs::read_to_string(&args.config) {
        Ok(t) => t,
        Err(e) => return Ok(config_err(format!("{}: {e}", args.config.display()))),
    };
    let cfg: ExperimentConfig = match serde_json::from_str(&text) {
        Ok(c) => c,
        Err(e) => return Ok(config_err(format!("{}: {e}", args.config.display()))),
    };
    if let Err(e) = cfg.validate() {
        return Ok(config_err(e));
    }
    let outcome = run_sweep(&cfg)?;
    let out = resolve_out(&args.out);
    write_sweep_csv(&outcome, fs::File::create(&out)?)?;
    let summary_path = args
        .summary_out
        .map(|p| resolve_out(&p))
        .unwrap_or_else(|| out.with_extension("summary.csv"));
    write_summary_csv(&outcome, fs::File::create(&summary_path)?)?;
    let failures = outcome.failures();
    println!(
        "{} rows -> {} (summary: {}), {} failures",
        outcome.rows.len(),
        out.display(),
        summary_path.display(),
        failures
    );
    Ok(if failures > 0 { EXIT_PARTIAL } else { EXIT_OK })
}

fn bench(args: BenchArgs) -> AnyResult<u8> {
    let text = match fs::read_to_string(&args.config) {
        Ok(t) => t,
        Err(e) => return Ok(config_err(format!("{}: {e}", args.config.display()))),
    };
    let cfg: TimingConfig = match serde_json::from_str(&text) {
        Ok(c) => c,
        Err(e) => return Ok(config_err(format!("{}: {e}", args.config.display()))),
    };
    if let Err(e) = cfg.validate() {
        return Ok(config_err(e));
    }
    let rows = run_timing(&cfg)?;
    let out = resolve_out(&args.out);
    write_timing_csv(&rows, fs::File::create(&out)?)?;
    let plot = resolve_out(&args.plot);
    fs::write(&plot, gnuplot_script(&rows, &args.png))?;
    println!("{} timing rows -> {} (plot: {})", rows.len(), out.display(), plot.display());
    Ok(EXIT_OK)
}
