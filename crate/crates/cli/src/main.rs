use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use spin_echo::harness::{
    cmd_analytic, cmd_coherence_scan, cmd_fit, cmd_magnetization, cmd_noise_check, error_json, ChannelSelector,
    CommandReport, Preset, RunConfig,
};
use spin_echo::Result;

/// Loschmidt-echo simulations of a noisy XYZ spin ring.
///
/// Settings come from an optional JSON config (or a preset) and are then
/// overridden by flags. Results go to the output directory; a JSON report is
/// printed on stdout, and failures print `{"error": …, "message": …}` and
/// exit nonzero.
#[derive(Parser, Debug)]
#[command(name = "spin-echo", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// ⟨M_z⟩(t) for the all-up and all-down branches.
    Magnetization(Common),
    /// Coherence C(2τ₀) on the τ₀ grid, rate fits and the rates table.
    CoherenceScan(Common),
    /// Field autocorrelation against h²_rms e^{−γt}.
    NoiseCheck(Common),
    /// Refit stored coherence curves.
    Fit {
        #[command(flatten)]
        common: Common,
        /// Curve CSVs written by coherence-scan.
        #[arg(required = true)]
        curves: Vec<PathBuf>,
    },
    /// Closed-form dephasing rates and the Anderson–Weiss curve.
    Analytic(Common),
}

#[derive(Args, Debug, Default)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Start from a preset instead of the defaults (desk or paper).
    #[arg(long, conflicts_with = "config")]
    preset: Option<Preset>,
    #[arg(long, short = 'o')]
    output_dir: Option<PathBuf>,
    #[arg(long, short = 'n')]
    n_spins: Option<usize>,
    /// Comma-separated chain sizes for scans and analytic rates.
    #[arg(long, value_delimiter = ',')]
    n_spins_list: Option<Vec<usize>>,
    #[arg(long)]
    j_x: Option<f64>,
    #[arg(long)]
    j_y: Option<f64>,
    #[arg(long)]
    j_z: Option<f64>,
    #[arg(long)]
    h_rms: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    delta_omega: Option<f64>,
    #[arg(long)]
    j_max: Option<usize>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    tau0: Option<f64>,
    #[arg(long)]
    t_end: Option<f64>,
    /// Comma-separated reversal times for scans.
    #[arg(long, value_delimiter = ',')]
    tau0_grid: Option<Vec<f64>>,
    #[arg(long)]
    record_stride: Option<usize>,
    #[arg(long)]
    reversal_error: Option<f64>,
    #[arg(long)]
    realizations: Option<usize>,
    #[arg(long)]
    noninteracting_samples: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    /// Run single-threaded.
    #[arg(long)]
    sequential: bool,
    /// interacting, noninteracting or both.
    #[arg(long)]
    channel: Option<ChannelSelector>,
    /// Continue a scan from the per-point files in the output directory.
    #[arg(long)]
    resume: bool,
    /// Accept h_rms >= gamma.
    #[arg(long)]
    allow_strong_noise: bool,
    /// Seeds for noise-check.
    #[arg(long)]
    n_seeds: Option<usize>,
    /// Longest lag for noise-check.
    #[arg(long)]
    t_max: Option<f64>,
    /// Also write one sampled noise trace.
    #[arg(long)]
    write_trace: bool,
}

impl Common {
    fn resolve(self) -> Result<RunConfig> {
        let mut c = match (&self.config, self.preset) {
            (Some(path), _) => RunConfig::load(path)?,
            (None, Some(p)) => RunConfig::preset(p),
            (None, None) => RunConfig::default(),
        };
        macro_rules! set {
            ($($flag:ident => $($field:ident).+),* $(,)?) => {
                $(if let Some(v) = self.$flag { c.$($field).+ = v; })*
            };
        }
        set! {
            output_dir => output_dir,
            n_spins => n_spins,
            n_spins_list => n_spins_list,
            j_x => couplings.j_x,
            j_y => couplings.j_y,
            j_z => couplings.j_z,
            h_rms => noise.h_rms,
            gamma => noise.gamma,
            delta_omega => noise.delta_omega,
            j_max => noise.j_max,
            dt => schedule.dt,
            tau0 => schedule.tau0,
            tau0_grid => schedule.tau0_grid,
            reversal_error => schedule.reversal_error,
            realizations => ensemble.n_realizations,
            noninteracting_samples => ensemble.noninteracting_samples,
            seed => ensemble.master_seed,
            channel => channel,
            n_seeds => noise_check.n_seeds,
            t_max => noise_check.t_max,
        }
        if self.t_end.is_some() {
            c.schedule.t_end = self.t_end;
        }
        if self.record_stride.is_some() {
            c.schedule.record_stride = self.record_stride;
        }
        if self.threads.is_some() {
            c.ensemble.threads = self.threads;
        }
        c.ensemble.sequential |= self.sequential;
        c.resume |= self.resume;
        c.allow_strong_noise |= self.allow_strong_noise;
        c.noise_check.write_trace |= self.write_trace;
        Ok(c)
    }
}

fn run(cli: Cli) -> Result<CommandReport> {
    match cli.command {
        Command::Magnetization(c) => cmd_magnetization(&c.resolve()?),
        Command::CoherenceScan(c) => cmd_coherence_scan(&c.resolve()?),
        Command::NoiseCheck(c) => cmd_noise_check(&c.resolve()?),
        Command::Fit { common, curves } => cmd_fit(&common.resolve()?, &curves),
        Command::Analytic(c) => cmd_analytic(&c.resolve()?),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(report) => {
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
            ExitCode::SUCCESS
        }
        Err(e) => {
            println!("{}", error_json(&e));
            ExitCode::FAILURE
        }
    }
}
