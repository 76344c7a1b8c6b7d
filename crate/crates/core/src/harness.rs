//! Experiment driver: synthetic trials, symbol-error-rate sweeps, timing
//! benchmarks and CSV/plot emission.
//!
//! A trial draws one channel, one pilot noise realization and one batch of
//! 4-PSK data symbols, then scores every configured estimator on the same
//! data. Equalization is maximal-ratio combining across antennas with the
//! estimated response, followed by nearest-neighbor (quadrant) demapping.

use crate::channel_model::{
    add_awgn, sample_pilots, synth_clustered_channel, synth_scs_channel, PilotLayout,
    PilotMeasurements,
};
use crate::error::{Error, Result};
use crate::esprit::reconstruct_full_grid;
use crate::pipeline::{
    estimate_fri_per_dense, estimate_fri_perk, estimate_lowpass, estimate_ra_ormp, Diagnostics,
    EstimationReport, RaOrmpParams, SparseParams,
};
use crate::util;
use ndarray::Array2;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::time::Instant;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorId {
    FriPerk,
    FriPerDense,
    Lowpass,
    RaOrmp,
    /// Debug arm returning the ground-truth response (matched equalizer).
    Truth,
}

impl EstimatorId {
    pub fn as_str(&self) -> &'static str {
        match self {
            EstimatorId::FriPerk => "fri-perk",
            EstimatorId::FriPerDense => "fri-per-dense",
            EstimatorId::Lowpass => "lowpass",
            EstimatorId::RaOrmp => "ra-ormp",
            EstimatorId::Truth => "truth",
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Regime {
    Scs {
        k: usize,
        decay: f64,
        #[serde(default)]
        min_separation: Option<f64>,
    },
    Clustered {
        clusters: usize,
        reflections: usize,
        girth: f64,
    },
    NoiseOnly,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Half pilot count M; the layout has N = 2M+1 pilots.
    pub m: usize,
    /// Pilot spacing D in DFT bins.
    pub d: usize,
    /// Antenna count P.
    pub p: usize,
    pub regime: Regime,
    pub snr_db: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub estimators: Vec<EstimatorId>,
    #[serde(default)]
    pub detector: SparseParams,
    #[serde(default)]
    pub ra_ormp: RaOrmpParams,
    /// Lowpass delay window; the full admissible range when unset.
    #[serde(default)]
    pub lowpass_window: Option<f64>,
}

impl ExperimentConfig {
    pub fn layout(&self) -> Result<PilotLayout> {
        PilotLayout::new(self.m, self.d)
    }

    pub fn validate(&self) -> Result<()> {
        let layout = self.layout()?;
        if self.p == 0 {
            return Err(Error::InvalidArgument("need at least one antenna".into()));
        }
        if self.trials == 0 {
            return Err(Error::InvalidArgument("need at least one trial".into()));
        }
        if self.snr_db.is_empty() {
            return Err(Error::InvalidArgument("empty SNR list".into()));
        }
        if self.estimators.is_empty() {
            return Err(Error::InvalidArgument("empty estimator list".into()));
        }
        if self.detector.k_max == 0 || self.detector.window == 0 {
            return Err(Error::InvalidArgument(
                "detector needs k_max >= 1 and window >= 1".into(),
            ));
        }
        if self.detector.k_max + self.detector.window > layout.half_count() + 1 {
            return Err(Error::InvalidArgument(format!(
                "k_max + window = {} exceeds operator dimension {}",
                self.detector.k_max + self.detector.window,
                layout.half_count() + 1
            )));
        }
        let needs_symbols = !matches!(self.regime, Regime::NoiseOnly);
        if needs_symbols && self.d < 2 {
            return Err(Error::InvalidArgument(
                "symbol-error sweeps need D >= 2 so data bins exist".into(),
            ));
        }
        match &self.regime {
            Regime::Scs { k, .. } if *k == 0 => {
                Err(Error::InvalidArgument("regime needs k >= 1".into()))
            }
            Regime::Clustered {
                clusters,
                reflections,
                girth,
            } if *clusters == 0 || *reflections == 0 || *girth < 0.0 => Err(
                Error::InvalidArgument("clustered regime parameters out of range".into()),
            ),
            _ => Ok(()),
        }
    }

    /// Stable fingerprint of the canonical JSON form, stamped on CSV rows.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        format!("{:016x}", util::fnv1a64(json.as_bytes()))
    }
}

#[derive(Clone, Debug)]
pub struct TrialResult {
    pub estimator: EstimatorId,
    pub snr_db: f64,
    pub trial: usize,
    pub seed: u64,
    pub k_hat: Option<usize>,
    pub fallback: bool,
    pub ser: Option<f64>,
    pub mse: Option<f64>,
    pub elapsed_s: f64,
    pub fft_calls: u64,
    pub error: Option<String>,
}

/// Gray-coded 4-PSK: bits 00 -> (+1+j)/sqrt2, 01 -> (-1+j)/sqrt2,
/// 11 -> (-1-j)/sqrt2, 10 -> (+1-j)/sqrt2.
pub fn psk_symbol(idx: u8) -> Complex64 {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    match idx & 3 {
        0 => Complex64::new(s, s),
        1 => Complex64::new(-s, s),
        3 => Complex64::new(-s, -s),
        _ => Complex64::new(s, -s),
    }
}

/// Nearest-neighbor demapping by quadrant signs.
pub fn psk_demap(z: Complex64) -> u8 {
    match (z.re >= 0.0, z.im >= 0.0) {
        (true, true) => 0,
        (false, true) => 1,
        (false, false) => 3,
        (true, false) => 2,
    }
}

struct TrialData {
    meas: PilotMeasurements,
    truth: Array2<Complex64>,
    /// (frame row, transmitted symbol index) for every data bin.
    symbols: Vec<(usize, u8)>,
    /// Received data-bin samples, indexed like `symbols` x antennas.
    received: Array2<Complex64>,
}

fn synthesize_trial(cfg: &ExperimentConfig, snr_db: f64, seed: u64) -> Result<TrialData> {
    let layout = cfg.layout()?;
    let seed_channel = util::subseed(seed, 1);
    let seed_noise = util::subseed(seed, 2);
    let seed_symbols = util::subseed(seed, 3);
    let seed_rx = util::subseed(seed, 4);

    let (meas, truth) = match &cfg.regime {
        Regime::Scs {
            k,
            decay,
            min_separation,
        } => {
            let spec =
                synth_scs_channel(cfg.p, *k, &layout, *decay, None, *min_separation, seed_channel)?;
            let clean = sample_pilots(&spec, &layout)?;
            let meas = add_awgn(&clean, snr_db, seed_noise)?;
            let truth = reconstruct_full_grid(spec.delays(), spec.gains(), &layout);
            (meas, truth)
        }
        Regime::Clustered {
            clusters,
            reflections,
            girth,
        } => {
            let spec =
                synth_clustered_channel(cfg.p, *clusters, *reflections, *girth, &layout, seed_channel)?;
            let clean = sample_pilots(&spec, &layout)?;
            let meas = add_awgn(&clean, snr_db, seed_noise)?;
            let truth = reconstruct_full_grid(spec.delays(), spec.gains(), &layout);
            (meas, truth)
        }
        Regime::NoiseOnly => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed_channel);
            let samples = Array2::from_shape_fn((layout.num_pilots(), cfg.p), |_| {
                util::complex_gaussian(&mut rng)
            });
            let meas = PilotMeasurements::new(layout, samples, 1.0)?;
            let truth = Array2::zeros((layout.frame_len(), cfg.p));
            (meas, truth)
        }
    };

    let (symbols, received) = if matches!(cfg.regime, Regime::NoiseOnly) {
        (Vec::new(), Array2::zeros((0, cfg.p)))
    } else {
        let mut sym_rng = ChaCha8Rng::seed_from_u64(seed_symbols);
        let mut rx_rng = ChaCha8Rng::seed_from_u64(seed_rx);
        let sigma = meas.noise_variance().sqrt();
        let mut symbols = Vec::new();
        for row in 0..layout.frame_len() {
            if row % layout.spacing() != 0 {
                symbols.push((row, sym_rng.gen_range(0..4u8)));
            }
        }
        let mut received = Array2::zeros((symbols.len(), cfg.p));
        for (i, &(row, idx)) in symbols.iter().enumerate() {
            let s = psk_symbol(idx);
            for p in 0..cfg.p {
                let noise = util::complex_gaussian(&mut rx_rng) * sigma;
                received[[i, p]] = s * truth[[row, p]] + noise;
            }
        }
        (symbols, received)
    };

    Ok(TrialData {
        meas,
        truth,
        symbols,
        received,
    })
}

fn score_response(data: &TrialData, response: &Array2<Complex64>) -> (Option<f64>, Option<f64>) {
    let truth_energy: f64 = data.truth.iter().map(|z| z.norm_sqr()).sum();
    let diff: f64 = response
        .iter()
        .zip(data.truth.iter())
        .map(|(a, b)| (a - b).norm_sqr())
        .sum();
    let mse = if truth_energy > 0.0 {
        Some(diff / truth_energy)
    } else {
        None
    };

    if data.symbols.is_empty() {
        return (None, mse);
    }
    let p = response.ncols();
    let mut errors = 0usize;
    for (i, &(row, idx)) in data.symbols.iter().enumerate() {
        // maximal-ratio combining with the estimated response
        let mut num = Complex64::new(0.0, 0.0);
        let mut den = 0.0f64;
        for pi in 0..p {
            let h = response[[row, pi]];
            num += h.conj() * data.received[[i, pi]];
            den += h.norm_sqr();
        }
        let s_hat = if den > 0.0 {
            num / den
        } else {
            Complex64::new(0.0, 0.0)
        };
        if psk_demap(s_hat) != idx {
            errors += 1;
        }
    }
    (Some(errors as f64 / data.symbols.len() as f64), mse)
}

fn run_estimator(
    cfg: &ExperimentConfig,
    id: EstimatorId,
    data: &TrialData,
    seed: u64,
) -> Result<EstimationReport> {
    let sparse = SparseParams {
        fallback_window: cfg.lowpass_window,
        ..cfg.detector
    };
    match id {
        EstimatorId::FriPerk => estimate_fri_perk(&data.meas, &sparse, seed),
        EstimatorId::FriPerDense => estimate_fri_per_dense(&data.meas, &sparse),
        EstimatorId::Lowpass => estimate_lowpass(&data.meas, cfg.lowpass_window),
        EstimatorId::RaOrmp => estimate_ra_ormp(&data.meas, &cfg.ra_ormp),
        EstimatorId::Truth => Ok(EstimationReport {
            method: "truth".into(),
            fallback: false,
            k_hat: None,
            delays: Vec::new(),
            amplitudes: Array2::zeros((0, cfg.p)),
            response: data.truth.clone(),
            diagnostics: Diagnostics::default(),
        }),
    }
}

/// Runs every configured estimator on one synthesized trial.
pub fn run_trial(
    cfg: &ExperimentConfig,
    snr_db: f64,
    trial: usize,
    seed: u64,
) -> Result<Vec<TrialResult>> {
    let data = synthesize_trial(cfg, snr_db, seed)?;
    let mut out = Vec::with_capacity(cfg.estimators.len());
    for &id in &cfg.estimators {
        let est_seed = util::subseed(seed, 1000 + id.as_str().len() as u64);
        let start = Instant::now();
        let result = run_estimator(cfg, id, &data, est_seed);
        let elapsed_s = start.elapsed().as_secs_f64();
        match result {
            Ok(report) => {
                let (ser, mse) = score_response(&data, &report.response);
                out.push(TrialResult {
                    estimator: id,
                    snr_db,
                    trial,
                    seed,
                    k_hat: report.k_hat,
                    fallback: report.fallback,
                    ser,
                    mse,
                    elapsed_s,
                    fft_calls: report.diagnostics.fft_calls,
                    error: None,
                });
            }
            Err(e) => out.push(TrialResult {
                estimator: id,
                snr_db,
                trial,
                seed,
                k_hat: None,
                fallback: false,
                ser: None,
                mse: None,
                elapsed_s,
                fft_calls: 0,
                error: Some(e.to_string()),
            }),
        }
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct SummaryRow {
    pub estimator: EstimatorId,
    pub snr_db: f64,
    pub trials: usize,
    pub failures: usize,
    pub fallback_count: usize,
    pub mean_ser: Option<f64>,
    pub median_ser: Option<f64>,
    pub se_ser: Option<f64>,
    pub mean_mse: Option<f64>,
    pub median_mse: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct SweepOutcome {
    pub config_hash: String,
    pub rows: Vec<TrialResult>,
    pub summary: Vec<SummaryRow>,
}

impl SweepOutcome {
    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.error.is_some()).count()
    }

    pub fn summary_for(&self, id: EstimatorId, snr_db: f64) -> Option<&SummaryRow> {
        self.summary
            .iter()
            .find(|s| s.estimator == id && s.snr_db == snr_db)
    }
}

fn median(xs: &mut [f64]) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = xs.len();
    Some(if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    })
}

fn mean_and_se(xs: &[f64]) -> (Option<f64>, Option<f64>) {
    if xs.is_empty() {
        return (None, None);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (Some(mean), None);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (Some(mean), Some((var / n).sqrt()))
}

/// Runs the full (estimator x SNR x trial) grid sequentially and aggregates
/// per-cell statistics. Deterministic for a fixed config.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<SweepOutcome> {
    cfg.validate()?;
    let config_hash = cfg.hash();
    let mut rows = Vec::with_capacity(cfg.snr_db.len() * cfg.trials * cfg.estimators.len());
    for (snr_idx, &snr) in cfg.snr_db.iter().enumerate() {
        for trial in 0..cfg.trials {
            let seed = util::subseed(cfg.seed, (snr_idx as u64) << 32 | trial as u64);
            rows.extend(run_trial(cfg, snr, trial, seed)?);
        }
    }
    rows.sort_by(|a, b| {
        (a.estimator.as_str(), a.snr_db, a.trial)
            .partial_cmp(&(b.estimator.as_str(), b.snr_db, b.trial))
            .unwrap()
    });

    let mut summary = Vec::new();
    for &id in &cfg.estimators {
        for &snr in &cfg.snr_db {
            let cell: Vec<&TrialResult> = rows
                .iter()
                .filter(|r| r.estimator == id && r.snr_db == snr)
                .collect();
            let sers: Vec<f64> = cell.iter().filter_map(|r| r.ser).collect();
            let mses: Vec<f64> = cell.iter().filter_map(|r| r.mse).collect();
            let (mean_ser, se_ser) = mean_and_se(&sers);
            let (mean_mse, _) = mean_and_se(&mses);
            summary.push(SummaryRow {
                estimator: id,
                snr_db: snr,
                trials: cell.len(),
                failures: cell.iter().filter(|r| r.error.is_some()).count(),
                fallback_count: cell.iter().filter(|r| r.fallback).count(),
                mean_ser,
                median_ser: median(&mut sers.clone()),
                se_ser,
                mean_mse,
                median_mse: median(&mut mses.clone()),
            });
        }
    }
    Ok(SweepOutcome {
        config_hash,
        rows,
        summary,
    })
}

fn opt_str<T: std::fmt::Display>(v: &Option<T>) -> String {
    v.as_ref().map(|x| x.to_string()).unwrap_or_default()
}

/// Trial rows as CSV. Lines starting with '#' are metadata; the 4-PSK bit
/// convention is recorded there.
pub fn write_sweep_csv<W: Write>(outcome: &SweepOutcome, mut w: W) -> std::io::Result<()> {
    writeln!(w, "# fri-perk sweep results")?;
    writeln!(w, "# config_hash: {}", outcome.config_hash)?;
    writeln!(
        w,
        "# 4-PSK Gray map: bits 00->(+1+j)/sqrt2, 01->(-1+j)/sqrt2, 11->(-1-j)/sqrt2, 10->(+1-j)/sqrt2; demap by quadrant signs"
    )?;
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record([
        "config_hash",
        "estimator",
        "snr_db",
        "trial",
        "seed",
        "k_hat",
        "fallback",
        "ser",
        "mse",
        "elapsed_s",
        "fft_calls",
        "error",
    ])
    .map_err(csv_io)?;
    for r in &outcome.rows {
        csv.write_record([
            outcome.config_hash.clone(),
            r.estimator.as_str().to_string(),
            r.snr_db.to_string(),
            r.trial.to_string(),
            r.seed.to_string(),
            opt_str(&r.k_hat),
            r.fallback.to_string(),
            opt_str(&r.ser),
            opt_str(&r.mse),
            r.elapsed_s.to_string(),
            r.fft_calls.to_string(),
            r.error.clone().unwrap_or_default(),
        ])
        .map_err(csv_io)?;
    }
    csv.flush()
}

pub fn write_summary_csv<W: Write>(outcome: &SweepOutcome, mut w: W) -> std::io::Result<()> {
    writeln!(w, "# fri-perk sweep summary (per estimator x SNR cell)")?;
    writeln!(w, "# config_hash: {}", outcome.config_hash)?;
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record([
        "config_hash",
        "estimator",
        "snr_db",
        "trials",
        "failures",
        "fallback_count",
        "mean_ser",
        "median_ser",
        "se_ser",
        "mean_mse",
        "median_mse",
    ])
    .map_err(csv_io)?;
    for s in &outcome.summary {
        csv.write_record([
            outcome.config_hash.clone(),
            s.estimator.as_str().to_string(),
            s.snr_db.to_string(),
            s.trials.to_string(),
            s.failures.to_string(),
            s.fallback_count.to_string(),
            opt_str(&s.mean_ser),
            opt_str(&s.median_ser),
            opt_str(&s.se_ser),
            opt_str(&s.mean_mse),
            opt_str(&s.median_mse),
        ])
        .map_err(csv_io)?;
    }
    csv.flush()
}

fn csv_io(e: csv::Error) -> std::io::Error {
    std::io::Error::other(e)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TimingConfig {
    /// Operator dimensions M+1, ascending.
    pub sizes: Vec<usize>,
    pub d: usize,
    pub p: usize,
    /// True path count of the synthetic channel used for timing.
    pub k: usize,
    pub snr_db: f64,
    #[serde(default)]
    pub detector: SparseParams,
    /// Timed repetitions per point (one warmup run is discarded).
    pub reps: usize,
    /// Dense eigensolver rows above this M+1 are skipped.
    pub dense_max_dim: usize,
    pub seed: u64,
    pub estimators: Vec<EstimatorId>,
}

impl TimingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sizes.is_empty() || self.sizes.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument(
                "sizes must be ascending and non-empty".into(),
            ));
        }
        if self.sizes[0] < 2 {
            return Err(Error::InvalidArgument("sizes must be >= 2".into()));
        }
        if self.reps == 0 {
            return Err(Error::InvalidArgument("reps must be >= 1".into()));
        }
        if self.estimators.is_empty() {
            return Err(Error::InvalidArgument("empty estimator list".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct TimingRow {
    pub estimator: EstimatorId,
    pub m_plus_1: usize,
    pub n_pilots: usize,
    pub median_s: f64,
    pub fft_calls: u64,
    pub skipped: bool,
}

/// Wall-clock comparison of the estimators across operator sizes; strictly
/// sequential, median of `reps` runs after one discarded warmup.
pub fn run_timing(cfg: &TimingConfig) -> Result<Vec<TimingRow>> {
    cfg.validate()?;
    let mut rows = Vec::new();
    for &size in &cfg.sizes {
        let m = size - 1;
        let layout = PilotLayout::new(m, cfg.d)?;
        let seed = util::subseed(cfg.seed, size as u64);
        // keep paths a few Rayleigh cells apart so the sparse path (and not
        // an occasional lowpass fallback) is what gets timed
        let sep = 4.0 / (layout.num_pilots() as f64 * cfg.d as f64);
        let spec = synth_scs_channel(cfg.p, cfg.k, &layout, 0.3, None, Some(sep), seed)?;
        let clean = sample_pilots(&spec, &layout)?;
        let meas = add_awgn(&clean, cfg.snr_db, util::subseed(seed, 2))?;

        for &id in &cfg.estimators {
            if id == EstimatorId::FriPerDense && size > cfg.dense_max_dim {
                rows.push(TimingRow {
                    estimator: id,
                    m_plus_1: size,
                    n_pilots: layout.num_pilots(),
                    median_s: f64::NAN,
                    fft_calls: 0,
                    skipped: true,
                });
                continue;
            }
            let run = |rep: u64| -> Result<(f64, u64)> {
                let start = Instant::now();
                let report = match id {
                    EstimatorId::FriPerk => {
                        estimate_fri_perk(&meas, &cfg.detector, util::subseed(seed, 100 + rep))?
                    }
                    EstimatorId::FriPerDense => estimate_fri_per_dense(&meas, &cfg.detector)?,
                    EstimatorId::Lowpass => estimate_lowpass(&meas, None)?,
                    EstimatorId::RaOrmp => estimate_ra_ormp(&meas, &RaOrmpParams::default())?,
                    EstimatorId::Truth => {
                        return Err(Error::InvalidArgument(
                            "truth arm is not a timed estimator".into(),
                        ))
                    }
                };
                Ok((start.elapsed().as_secs_f64(), report.diagnostics.fft_calls))
            };
            run(0)?; // warmup
            // at least `reps` samples, then keep sampling until the point
            // has accumulated enough wall time for a stable median
            const MIN_POINT_TIME: f64 = 0.25;
            const MAX_SAMPLES: usize = 200;
            let mut times = Vec::with_capacity(cfg.reps);
            let mut fft_calls = 0;
            let mut total = 0.0;
            while times.len() < cfg.reps || (total < MIN_POINT_TIME && times.len() < MAX_SAMPLES) {
                let (t, calls) = run(times.len() as u64 + 1)?;
                total += t;
                times.push(t);
                fft_calls = calls;
            }
            rows.push(TimingRow {
                estimator: id,
                m_plus_1: size,
                n_pilots: layout.num_pilots(),
                median_s: median(&mut times).unwrap(),
                fft_calls,
                skipped: false,
            });
        }
    }
    Ok(rows)
}

pub fn write_timing_csv<W: Write>(rows: &[TimingRow], mut w: W) -> std::io::Result<()> {
    writeln!(w, "# fri-perk timing benchmark (median seconds per estimate)")?;
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record([
        "estimator",
        "m_plus_1",
        "n_pilots",
        "median_s",
        "fft_calls",
        "skipped",
    ])
    .map_err(csv_io)?;
    for r in rows {
        csv.write_record([
            r.estimator.as_str().to_string(),
            r.m_plus_1.to_string(),
            r.n_pilots.to_string(),
            if r.skipped {
                String::new()
            } else {
                r.median_s.to_string()
            },
            r.fft_calls.to_string(),
            r.skipped.to_string(),
        ])
        .map_err(csv_io)?;
    }
    csv.flush()
}

/// Self-contained gnuplot script with the timing data inlined.
pub fn gnuplot_script(rows: &[TimingRow], png_name: &str) -> String {
    let mut script = String::new();
    script.push_str("set terminal pngcairo size 900,600\n");
    script.push_str(&format!("set output '{png_name}'\n"));
    script.push_str("set logscale xy\n");
    script.push_str("set xlabel 'number of pilots N'\n");
    script.push_str("set ylabel 'median time [s]'\n");
    script.push_str("set key left top\n");
    let mut names = Vec::new();
    for r in rows {
        if !names.contains(&r.estimator) {
            names.push(r.estimator);
        }
    }
    for id in &names {
        script.push_str(&format!("$data_{} << EOD\n", id.as_str().replace('-', "_")));
        for r in rows.iter().filter(|r| r.estimator == *id && !r.skipped) {
            script.push_str(&format!("{} {}\n", r.n_pilots, r.median_s));
        }
        script.push_str("EOD\n");
    }
    let plots: Vec<String> = names
        .iter()
        .map(|id| {
            format!(
                "$data_{} using 1:2 with linespoints title '{}'",
                id.as_str().replace('-', "_"),
                id.as_str()
            )
        })
        .collect();
    script.push_str(&format!("plot {}\n", plots.join(", \\\n     ")));
    script
}
