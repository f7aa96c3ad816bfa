//! Run configuration: one JSON document, every field optional, defaults set
//! to the published parameters.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::coherence::{default_tau0_grid, Channel};
use crate::dynamics::{default_stride, EchoSchedule, Kernel, DEFAULT_DT};
use crate::error::{Error, Result};
use crate::fitting::FitWindow;
use crate::noise::NoiseParams;
use crate::parallel::Execution;
use crate::spinchain::{ChainCouplings, MAX_SPINS, MIN_SPINS};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingConfig {
    pub j_x: f64,
    pub j_y: f64,
    pub j_z: f64,
}

impl Default for CouplingConfig {
    fn default() -> Self {
        let c = ChainCouplings::paper();
        Self {
            j_x: c.j_x,
            j_y: c.j_y,
            j_z: c.j_z,
        }
    }
}

impl CouplingConfig {
    pub fn couplings(&self) -> ChainCouplings {
        ChainCouplings::new(self.j_x, self.j_y, self.j_z)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleConfig {
    pub dt: f64,
    /// Reversal time for magnetization runs.
    pub tau0: f64,
    /// Run length for magnetization runs; `2·tau0` when absent.
    pub t_end: Option<f64>,
    /// Reversal times for coherence scans.
    pub tau0_grid: Vec<f64>,
    /// Steps between recorded samples; about every 0.25 time units when absent.
    pub record_stride: Option<usize>,
    /// Relative coupling error ε applied at reversal.
    pub reversal_error: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            dt: DEFAULT_DT,
            tau0: 15.0,
            t_end: None,
            tau0_grid: default_tau0_grid(),
            record_stride: None,
            reversal_error: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleConfig {
    pub n_realizations: usize,
    pub master_seed: u64,
    /// Phase draws for the noninteracting channel.
    pub noninteracting_samples: usize,
    /// Worker threads; all cores when absent.
    pub threads: Option<usize>,
    /// Force the single-threaded path.
    pub sequential: bool,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            n_realizations: 100,
            master_seed: 20_240_601,
            noninteracting_samples: 10_000,
            threads: None,
            sequential: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelSelector {
    Interacting,
    Noninteracting,
    #[default]
    Both,
}

impl ChannelSelector {
    pub fn channels(&self) -> Vec<Channel> {
        match self {
            Self::Interacting => vec![Channel::Interacting],
            Self::Noninteracting => vec![Channel::Noninteracting],
            Self::Both => vec![Channel::Interacting, Channel::Noninteracting],
        }
    }
}

impl std::str::FromStr for ChannelSelector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "interacting" => Ok(Self::Interacting),
            "noninteracting" => Ok(Self::Noninteracting),
            "both" => Ok(Self::Both),
            _ => Err(Error::Config(format!(
                "channel must be interacting, noninteracting or both, got {s:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    /// Exponential-tail window; `τ₀ ≥ 1.5/γ` to the end of the grid when absent.
    pub tail_window: Option<FitWindow>,
    /// Linear early window; `τ₀ ∈ [2/J_eff, 30]` when absent.
    pub early_window: Option<FitWindow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseCheckConfig {
    pub n_seeds: usize,
    pub t_max: f64,
    pub lag_step: f64,
    /// Also write one sampled trace (realization 0) on the integrator grid.
    pub write_trace: bool,
    pub trace_t_end: f64,
}

impl Default for NoiseCheckConfig {
    fn default() -> Self {
        Self {
            n_seeds: 1000,
            t_max: 20.0,
            lag_step: 0.5,
            write_trace: false,
            trace_t_end: 30.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub n_spins: usize,
    /// Chain sizes for coherence scans; `[n_spins]` when empty.
    pub n_spins_list: Vec<usize>,
    pub couplings: CouplingConfig,
    pub noise: NoiseParams,
    pub schedule: ScheduleConfig,
    pub ensemble: EnsembleConfig,
    pub channel: ChannelSelector,
    pub kernel: Kernel,
    pub fit: FitConfig,
    pub noise_check: NoiseCheckConfig,
    pub output_dir: PathBuf,
    /// Accept `h_rms ≥ γ`, outside the weak-noise regime.
    pub allow_strong_noise: bool,
    /// Reuse per-point results already in `output_dir`.
    pub resume: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            n_spins: 12,
            n_spins_list: Vec::new(),
            couplings: CouplingConfig::default(),
            noise: NoiseParams::PAPER,
            schedule: ScheduleConfig::default(),
            ensemble: EnsembleConfig::default(),
            channel: ChannelSelector::Both,
            kernel: Kernel::Auto,
            fit: FitConfig::default(),
            noise_check: NoiseCheckConfig::default(),
            output_dir: PathBuf::from("out"),
            allow_strong_noise: false,
            resume: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// Quick runs: 12 spins, 100 realizations, truncated harmonic grid.
    Desk,
    /// The published scale: 18 spins, 200 realizations, full grid. Hours.
    Paper,
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Self::Desk),
            "paper" => Ok(Self::Paper),
            _ => Err(Error::Config(format!("unknown preset {s:?}"))),
        }
    }
}

impl RunConfig {
    pub fn preset(p: Preset) -> Self {
        let mut c = Self::default();
        match p {
            Preset::Desk => {
                c.n_spins = 12;
                c.ensemble.n_realizations = 100;
                c.noise.j_max = NoiseParams::REDUCED_J_MAX;
            }
            Preset::Paper => {
                c.n_spins = 18;
                c.ensemble.n_realizations = 200;
                c.noise.j_max = NoiseParams::PAPER.j_max;
            }
        }
        c
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn couplings(&self) -> ChainCouplings {
        self.couplings.couplings()
    }

    pub fn spin_counts(&self) -> Vec<usize> {
        if self.n_spins_list.is_empty() {
            vec![self.n_spins]
        } else {
            self.n_spins_list.clone()
        }
    }

    pub fn execution(&self) -> Execution {
        if self.ensemble.sequential {
            Execution::Sequential
        } else {
            Execution::Parallel
        }
    }

    /// Echo schedule of a magnetization run.
    pub fn magnetization_schedule(&self) -> EchoSchedule {
        let s = &self.schedule;
        let t_end = s.t_end.unwrap_or(2.0 * s.tau0);
        EchoSchedule::free(s.tau0, t_end, s.dt)
            .with_reversal_error(s.reversal_error)
            .with_stride(s.record_stride.unwrap_or_else(|| default_stride(s.dt)))
    }

    pub fn tail_window(&self) -> FitWindow {
        self.fit.tail_window.unwrap_or_else(|| {
            let end = self.schedule.tau0_grid.iter().copied().fold(0.0, f64::max);
            FitWindow::tail(self.noise.gamma, end)
        })
    }

    pub fn early_window(&self) -> FitWindow {
        self.fit
            .early_window
            .unwrap_or_else(|| FitWindow::early(self.couplings().j_eff()))
    }

    /// Weak-noise regime warning, if it applies.
    pub fn regime_warning(&self) -> Option<String> {
        let n = &self.noise;
        (n.h_rms >= n.gamma).then(|| {
            format!(
                "h_rms = {} is not below gamma = {}; the weak-noise picture does not apply",
                n.h_rms, n.gamma
            )
        })
    }

    /// Checks that do not depend on which command runs.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        for n in self.spin_counts() {
            if !(MIN_SPINS..=MAX_SPINS).contains(&n) {
                return bad(format!("n_spins = {n} outside [{MIN_SPINS}, {MAX_SPINS}]"));
            }
        }
        let c = &self.couplings;
        if ![c.j_x, c.j_y, c.j_z].iter().all(|j| j.is_finite()) {
            return bad("couplings must be finite".into());
        }
        let n = &self.noise;
        if !(n.h_rms >= 0.0 && n.h_rms.is_finite()) {
            return bad(format!("h_rms must be >= 0, got {}", n.h_rms));
        }
        if !(n.gamma > 0.0 && n.gamma.is_finite()) {
            return bad(format!("gamma must be > 0, got {}", n.gamma));
        }
        if !(n.delta_omega > 0.0 && n.delta_omega.is_finite()) {
            return bad(format!("delta_omega must be > 0, got {}", n.delta_omega));
        }
        if n.j_max == 0 {
            return bad("j_max must be >= 1".into());
        }
        if let Some(w) = self.regime_warning() {
            if !self.allow_strong_noise {
                return bad(format!("{w} (set allow_strong_noise to run anyway)"));
            }
        }
        if self.ensemble.n_realizations < 2 {
            return bad("n_realizations must be >= 2".into());
        }
        if self.ensemble.threads == Some(0) {
            return bad("threads must be >= 1".into());
        }
        let grid = &self.schedule.tau0_grid;
        if grid.is_empty() {
            return bad("tau0_grid is empty".into());
        }
        if grid.windows(2).any(|w| !(w[1] > w[0])) {
            return bad("tau0_grid must be strictly increasing".into());
        }
        Ok(())
    }
}
