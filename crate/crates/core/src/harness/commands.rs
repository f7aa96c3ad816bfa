//! The five CLI commands. Each validates everything it can before touching
//! the output directory, then writes data files with JSON sidecars.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::config::RunConfig;
use super::output::{fmt_f64, write_atomic, write_csv_with, write_json, write_sidecar};
use crate::analytic::{anderson_weiss, rate_summary, DephasingParams};
use crate::coherence::{coherence_scan, read_points_csv, Channel, CoherenceCurve, CoherencePoint, ScanConfig};
use crate::dynamics::{magnetization_curves, EchoSchedule, EvolveOptions};
use crate::error::{Error, Result};
use crate::fitting::{fit_exponential_tail_points, fit_linear_early_points, RateFit};
use crate::noise::{autocorrelation_estimate, NoiseModel, NoiseSeed};
use crate::parallel::{try_map_indexed, with_workers, Execution};
use crate::spinchain::SpinBasis;
use crate::stats::MeanEstimate;

/// What a command did; printed by the CLI as JSON.
#[derive(Debug, Clone, Default, Serialize)]
pub struct CommandReport {
    pub command: String,
    pub files: Vec<PathBuf>,
    pub warnings: Vec<String>,
    pub summary: Value,
}

impl CommandReport {
    fn new(command: &str) -> Self {
        Self {
            command: command.into(),
            ..Self::default()
        }
    }
}

/// `{"error": kind, "message": text}`.
pub fn error_json(e: &Error) -> Value {
    json!({ "error": e.kind(), "message": e.to_string() })
}

fn prepare(config: &RunConfig, report: &mut CommandReport) -> Result<()> {
    config.validate()?;
    report.warnings.extend(config.regime_warning());
    Ok(())
}

fn create_output_dir(config: &RunConfig) -> Result<&Path> {
    fs::create_dir_all(&config.output_dir)?;
    Ok(&config.output_dir)
}

// ---------------------------------------------------------------- magnetization

/// Per-realization `⟨M_z⟩₁(t)`, `⟨M_z⟩₂(t)` and their ensemble mean.
pub fn cmd_magnetization(config: &RunConfig) -> Result<CommandReport> {
    let mut report = CommandReport::new("magnetization");
    prepare(config, &mut report)?;
    let n = config.n_spins;
    let couplings = config.couplings();
    let schedule = config.magnetization_schedule();
    schedule.validate(n, &couplings, &config.noise)?;
    let model = NoiseModel::new(config.noise)?;
    let basis = SpinBasis::new(n)?;
    let options = EvolveOptions {
        kernel: config.kernel,
        exec: Execution::Sequential,
        ..EvolveOptions::default()
    };
    let master = config.ensemble.master_seed;
    let exec = config.execution();
    let curves = with_workers(config.ensemble.threads, || {
        try_map_indexed(exec, config.ensemble.n_realizations, |r| {
            let seed = NoiseSeed::item(master, 0, r as u32);
            magnetization_curves(basis, &couplings, &model, seed, &schedule, options)
        })
    })?;

    let times = curves[0].times.clone();
    let stats = |pick: fn(&crate::dynamics::MagnetizationCurves) -> &Vec<f64>, k: usize| {
        MeanEstimate::from_values(curves.iter().map(|c| pick(c)[k]))
    };
    let up: Vec<MeanEstimate> = (0..times.len()).map(|k| stats(|c| &c.up, k)).collect();
    let down: Vec<MeanEstimate> = (0..times.len()).map(|k| stats(|c| &c.down, k)).collect();

    let dir = create_output_dir(config)?;
    let all = dir.join("magnetization.csv");
    write_csv_with(&all, |buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["t", "realization", "mz_up", "mz_down"])?;
        for (r, c) in curves.iter().enumerate() {
            for (k, &t) in times.iter().enumerate() {
                w.write_record([fmt_f64(t), r.to_string(), fmt_f64(c.up[k]), fmt_f64(c.down[k])])?;
            }
        }
        w.flush()?;
        Ok(())
    })?;
    let mean = dir.join("magnetization_mean.csv");
    write_csv_with(&mean, |buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["t", "mz_up_mean", "mz_up_err", "mz_down_mean", "mz_down_err"])?;
        for k in 0..times.len() {
            w.write_record([
                fmt_f64(times[k]),
                fmt_f64(up[k].mean),
                fmt_f64(up[k].std_error),
                fmt_f64(down[k].mean),
                fmt_f64(down[k].std_error),
            ])?;
        }
        w.flush()?;
        Ok(())
    })?;
    let extra = json!({ "schedule": schedule, "n_realizations": curves.len() });
    for f in [&all, &mean] {
        write_sidecar(f, "magnetization", master, config, &extra)?;
    }
    let last = times.len() - 1;
    report.summary = json!({
        "t_final": times[last],
        "mz_up_final": up[last].mean,
        "mz_down_final": down[last].mean,
        "revival_fraction": up[last].mean / (n as f64 / 2.0),
    });
    report.files = vec![all, mean];
    Ok(report)
}

// ---------------------------------------------------------------- coherence scan

#[derive(Debug, Serialize, Deserialize)]
struct PointFile {
    scan: ScanConfig,
    index: usize,
    point: CoherencePoint,
}

fn point_path(dir: &Path, n: usize, channel: Channel, index: usize) -> PathBuf {
    dir.join("points").join(format!("n{n:02}_{}_{index:03}.json", channel.as_str()))
}

fn curve_path(dir: &Path, n: usize, channel: Channel) -> PathBuf {
    dir.join(format!("coherence_n{n:02}_{}.csv", channel.as_str()))
}

pub fn scan_config(config: &RunConfig, n_spins: usize) -> ScanConfig {
    ScanConfig {
        n_spins,
        couplings: config.couplings(),
        noise: config.noise,
        dt: config.schedule.dt,
        reversal_error: config.schedule.reversal_error,
        master_seed: config.ensemble.master_seed,
        n_realizations: config.ensemble.n_realizations,
        kernel: config.kernel,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CurveFits {
    pub n_spins: usize,
    pub channel: Channel,
    pub exponential_tail: std::result::Result<RateFit, String>,
    pub linear_early: std::result::Result<RateFit, String>,
}

impl CurveFits {
    /// The fit that characterizes the channel: the exponential tail for the
    /// noninteracting curve, the early linear decay for the interacting one.
    pub fn primary(&self) -> &std::result::Result<RateFit, String> {
        match self.channel {
            Channel::Noninteracting => &self.exponential_tail,
            Channel::Interacting => &self.linear_early,
        }
    }
}

pub fn fit_curve(config: &RunConfig, n_spins: usize, channel: Channel, points: &[CoherencePoint]) -> CurveFits {
    CurveFits {
        n_spins,
        channel,
        exponential_tail: fit_exponential_tail_points(points, config.tail_window()).map_err(|e| e.to_string()),
        linear_early: fit_linear_early_points(points, config.early_window()).map_err(|e| e.to_string()),
    }
}

fn write_rates(path: &Path, fits: &[CurveFits]) -> Result<()> {
    write_csv_with(path, |buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["n_spins", "channel", "rate", "rate_err", "prefactor", "window_lo", "window_hi"])?;
        for f in fits {
            if let Ok(r) = f.primary() {
                w.write_record([
                    f.n_spins.to_string(),
                    f.channel.as_str().to_string(),
                    fmt_f64(r.rate),
                    fmt_f64(r.rate_std_error),
                    fmt_f64(r.prefactor),
                    fmt_f64(r.window.tau0_min),
                    fmt_f64(r.window.tau0_max),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    })
}

/// Coherence curves for every configured chain size and channel, their
/// rate fits, and the combined rates table. Each finished point is stored
/// under `points/` so an interrupted scan can be resumed.
pub fn cmd_coherence_scan(config: &RunConfig) -> Result<CommandReport> {
    let mut report = CommandReport::new("coherence-scan");
    prepare(config, &mut report)?;
    let channels = config.channel.channels();
    let grid = &config.schedule.tau0_grid;
    let model = NoiseModel::new(config.noise)?;
    for &n in &config.spin_counts() {
        for &tau0 in grid {
            let s = EchoSchedule::echo(tau0, config.schedule.dt).with_reversal_error(config.schedule.reversal_error);
            if channels.contains(&Channel::Interacting) {
                s.validate(n, &config.couplings(), &config.noise)?;
            } else if 2.0 * tau0 >= model.period() {
                return Err(Error::Schedule(format!("2·tau0 = {} reaches the noise period", 2.0 * tau0)));
            }
        }
    }
    if channels.contains(&Channel::Noninteracting) && config.ensemble.noninteracting_samples < 100 {
        return Err(Error::Config("noninteracting_samples must be >= 100".into()));
    }

    let dir = create_output_dir(config)?;
    fs::create_dir_all(dir.join("points"))?;
    let exec = config.execution();
    let mut curves: Vec<CoherenceCurve> = Vec::new();
    for &n in &config.spin_counts() {
        let scan = scan_config(config, n);
        for &channel in &channels {
            let existing = |i: usize, tau0: f64| -> Option<CoherencePoint> {
                if !config.resume {
                    return None;
                }
                let text = fs::read_to_string(point_path(dir, n, channel, i)).ok()?;
                let file: PointFile = serde_json::from_str(&text).ok()?;
                (file.scan == scan && file.index == i && file.point.tau0 == tau0).then_some(file.point)
            };
            let mut sink = |i: usize, p: &CoherencePoint| -> Result<()> {
                let file = PointFile {
                    scan: scan.clone(),
                    index: i,
                    point: *p,
                };
                write_json(&point_path(dir, n, channel, i), &file)
            };
            let curve = with_workers(config.ensemble.threads, || {
                coherence_scan(
                    &scan,
                    channel,
                    grid,
                    config.ensemble.noninteracting_samples,
                    exec,
                    &existing,
                    &mut sink,
                )
            })?;
            let path = curve_path(dir, n, channel);
            write_csv_with(&path, |buf| curve.write_csv(buf))?;
            write_sidecar(&path, "coherence-scan", config.ensemble.master_seed, config, json!({ "scan": scan, "channel": channel, "tau0_grid": grid }))?;
            report.files.push(path);
            curves.push(curve);
        }
    }

    let fits: Vec<CurveFits> = curves
        .iter()
        .map(|c| fit_curve(config, c.parameters.n_spins, c.channel, &c.points))
        .collect();
    for f in &fits {
        if let Err(e) = f.primary() {
            report.warnings.push(format!("n_spins = {}, {}: {e}", f.n_spins, f.channel.as_str()));
        }
    }
    let fits_path = dir.join("fits.json");
    write_json(
        &fits_path,
        &json!({
            "config": config,
            "code_version": super::output::CODE_VERSION,
            "master_seed": config.ensemble.master_seed,
            "tail_window": config.tail_window(),
            "early_window": config.early_window(),
            "fits": fits,
        }),
    )?;
    let rates_path = dir.join("rates.csv");
    write_rates(&rates_path, &fits)?;
    write_sidecar(&rates_path, "coherence-scan", config.ensemble.master_seed, config, json!({ "tau0_grid": grid }))?;
    report.files.extend([fits_path, rates_path]);
    report.summary = serde_json::to_value(&fits)?;
    Ok(report)
}

// ---------------------------------------------------------------- noise check

/// Ensemble autocorrelation of the field against `h²_rms e^{−γt}`.
pub fn cmd_noise_check(config: &RunConfig) -> Result<CommandReport> {
    let mut report = CommandReport::new("noise-check");
    prepare(config, &mut report)?;
    let nc = &config.noise_check;
    if !(nc.lag_step > 0.0 && nc.t_max >= 0.0) {
        return Err(Error::Config("noise_check needs lag_step > 0 and t_max >= 0".into()));
    }
    let model = NoiseModel::new(config.noise)?;
    let n_lags = (nc.t_max / nc.lag_step + 1e-9).floor() as usize + 1;
    let lags: Vec<f64> = (0..n_lags).map(|k| k as f64 * nc.lag_step).collect();
    let master = config.ensemble.master_seed;
    let exec = config.execution();
    let est = with_workers(config.ensemble.threads, || {
        autocorrelation_estimate(&model, &lags, nc.n_seeds, master, exec)
    })?;

    let h2 = model.h_rms().powi(2);
    let max_dev = est
        .iter()
        .map(|e| (e.mean - model.target_correlation(e.lag)).abs())
        .fold(0.0, f64::max);

    let dir = create_output_dir(config)?;
    let path = dir.join("noise_check.csv");
    write_csv_with(&path, |buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["t", "correlation", "std_error", "target", "exact"])?;
        for e in &est {
            w.write_record([
                fmt_f64(e.lag),
                fmt_f64(e.mean),
                fmt_f64(e.std_error),
                fmt_f64(model.target_correlation(e.lag)),
                fmt_f64(model.correlation(e.lag)),
            ])?;
        }
        w.flush()?;
        Ok(())
    })?;
    write_sidecar(&path, "noise-check", master, config, json!({ "n_seeds": nc.n_seeds }))?;
    report.files.push(path);

    if nc.write_trace {
        let dt = config.schedule.dt;
        let steps = (nc.trace_t_end / dt).round() as usize;
        if nc.trace_t_end >= model.period() {
            return Err(Error::Config("trace_t_end must stay below the noise period".into()));
        }
        let trace = model.sample(NoiseSeed::new(master, 0)).trace(dt / 2.0, 2 * steps + 1);
        let tpath = dir.join("noise_trace.csv");
        let mut buf = Vec::new();
        trace.write_csv(&mut buf)?;
        write_atomic(&tpath, &buf)?;
        write_sidecar(&tpath, "noise-check", master, config, json!({ "stream": 0 }))?;
        report.files.push(tpath);
    }
    report.summary = json!({
        "n_seeds": nc.n_seeds,
        "max_abs_deviation": max_dev,
        "max_deviation_over_h_rms_sq": if h2 > 0.0 { max_dev / h2 } else { 0.0 },
    });
    Ok(report)
}

// ---------------------------------------------------------------- fit

/// Refits stored curve CSVs with the configured windows.
pub fn cmd_fit(config: &RunConfig, inputs: &[PathBuf]) -> Result<CommandReport> {
    let mut report = CommandReport::new("fit");
    if inputs.is_empty() {
        return Err(Error::Config("no curve files given".into()));
    }
    let mut fits = Vec::new();
    for path in inputs {
        let points = read_points_csv(fs::File::open(path)?)?;
        let Some(first) = points.first() else {
            return Err(Error::Fit(format!("{} has no points", path.display())));
        };
        let channel = first.channel;
        // the chain size is not part of the curve file; take it from the sidecar when present
        let n = fs::read_to_string(super::output::sidecar_path(path))
            .ok()
            .and_then(|t| serde_json::from_str::<Value>(&t).ok())
            .and_then(|v| v["extra"]["scan"]["n_spins"].as_u64())
            .map_or(config.n_spins, |n| n as usize);
        let f = fit_curve(config, n, channel, &points);
        if let Err(e) = f.primary() {
            report.warnings.push(format!("{}: {e}", path.display()));
        }
        fits.push(f);
    }
    let dir = create_output_dir(config)?;
    let out = dir.join("refit.json");
    write_json(
        &out,
        &json!({ "config": config, "inputs": inputs, "fits": fits, "code_version": super::output::CODE_VERSION }),
    )?;
    let rates = dir.join("refit_rates.csv");
    write_rates(&rates, &fits)?;
    report.files = vec![out, rates];
    report.summary = serde_json::to_value(&fits)?;
    Ok(report)
}

// ---------------------------------------------------------------- analytic

/// Closed-form rates and the Anderson–Weiss curve on the τ₀ grid.
pub fn cmd_analytic(config: &RunConfig) -> Result<CommandReport> {
    let mut report = CommandReport::new("analytic");
    prepare(config, &mut report)?;
    let model = NoiseModel::new(config.noise)?;
    let j_eff = config.couplings().j_eff();
    let summaries = config
        .spin_counts()
        .into_iter()
        .map(|n| rate_summary(n, &model, j_eff))
        .collect::<Result<Vec<_>>>()?;

    let dir = create_output_dir(config)?;
    let path = dir.join("analytic.csv");
    write_csv_with(&path, |buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["n_spins", "tau0", "c_anderson_weiss"])?;
        for n in config.spin_counts() {
            let p = DephasingParams::new(n, model.clone());
            for &tau0 in &config.schedule.tau0_grid {
                w.write_record([n.to_string(), fmt_f64(tau0), fmt_f64(anderson_weiss(&p, 2.0 * tau0))])?;
            }
        }
        w.flush()?;
        Ok(())
    })?;
    write_sidecar(&path, "analytic", config.ensemble.master_seed, config, &summaries)?;
    let json_path = dir.join("analytic.json");
    write_json(&json_path, &json!({ "config": config, "rates": summaries }))?;
    report.files = vec![path, json_path];
    report.summary = serde_json::to_value(&summaries)?;
    Ok(report)
}
