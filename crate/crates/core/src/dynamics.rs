//! Time evolution under `H(t) = ±H_int + h(t)·M_z` with an echo reversal.
//!
//! The integrator is classical fourth-order Runge–Kutta. The field enters at
//! the stage times `t`, `t + dt/2`, `t + dt`, read from a precomputed trace on
//! the half-step grid, so each run evaluates the harmonic sum exactly once
//! per grid point. At `τ₀` the interaction couplings change sign; the field
//! term never does.

use std::io::Write;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::{NoiseModel, NoiseParams, NoiseRealization, NoiseSeed, NoiseTrace, TraceSynthesizer};
use crate::parallel::Execution;
use crate::sector::TranslationSector;
use crate::spinchain::{ChainCouplings, ChainOperator, Generator, SpinBasis, SpinState, C64};

pub const DEFAULT_DT: f64 = 0.01;
/// Observables are recorded every this many time units by default.
pub const DEFAULT_RECORD_INTERVAL: f64 = 0.25;
/// Largest accepted `dt · max(J_eff, γ, N_s·h_rms)`.
pub const STEP_ACCURACY_GUARD: f64 = 0.1;
/// Abort threshold for `|‖ψ‖ − 1|` without renormalization.
pub const NORM_DRIFT_LIMIT: f64 = 1e-6;
const GRID_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EchoSchedule {
    pub tau0: f64,
    pub t_end: f64,
    pub dt: f64,
    pub record_stride: usize,
    #[serde(default)]
    pub reversal_error: f64,
}

pub fn default_stride(dt: f64) -> usize {
    ((DEFAULT_RECORD_INTERVAL / dt).round() as usize).max(1)
}

impl EchoSchedule {
    /// Standard echo: reverse at `tau0`, stop at `2·tau0`.
    pub fn echo(tau0: f64, dt: f64) -> Self {
        Self {
            tau0,
            t_end: 2.0 * tau0,
            dt,
            record_stride: default_stride(dt),
            reversal_error: 0.0,
        }
    }

    /// Reverse at `tau0` but run until `t_end` (which may be anything).
    pub fn free(tau0: f64, t_end: f64, dt: f64) -> Self {
        Self {
            t_end,
            ..Self::echo(tau0, dt)
        }
    }

    pub fn with_reversal_error(mut self, epsilon: f64) -> Self {
        self.reversal_error = epsilon;
        self
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.record_stride = stride;
        self
    }

    pub fn reversal_step(&self) -> usize {
        (self.tau0 / self.dt).round() as usize
    }

    pub fn total_steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }

    pub fn validate(&self, n_spins: usize, couplings: &ChainCouplings, noise: &NoiseParams) -> Result<()> {
        let bad = |msg: String| Err(Error::Schedule(msg));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.tau0 >= 0.0 && self.tau0.is_finite() && self.t_end >= 0.0 && self.t_end.is_finite()) {
            return bad(format!("tau0 = {} and t_end = {} must be finite and >= 0", self.tau0, self.t_end));
        }
        if self.tau0 > 0.0 && self.dt > self.tau0 {
            return bad(format!("dt = {} exceeds tau0 = {}", self.dt, self.tau0));
        }
        for (name, t) in [("tau0", self.tau0), ("t_end", self.t_end)] {
            let steps = t / self.dt;
            if (steps - steps.round()).abs() > GRID_TOL {
                return bad(format!("{name} = {t} is not a multiple of dt = {}", self.dt));
            }
        }
        let fastest = couplings
            .j_eff()
            .max(noise.gamma)
            .max(n_spins as f64 * noise.h_rms);
        if self.dt * fastest > STEP_ACCURACY_GUARD * (1.0 + 1e-12) {
            return bad(format!(
                "dt * max rate = {:.3} exceeds {STEP_ACCURACY_GUARD}",
                self.dt * fastest
            ));
        }
        let period = std::f64::consts::TAU / noise.delta_omega;
        if self.t_end >= period {
            return bad(format!("t_end = {} must stay below the noise period {period}", self.t_end));
        }
        if self.record_stride == 0 {
            return bad("record_stride must be >= 1".into());
        }
        if !(self.reversal_error >= 0.0 && self.reversal_error.is_finite()) {
            return bad(format!("reversal_error must be >= 0, got {}", self.reversal_error));
        }
        Ok(())
    }
}

/// Which state-vector representation the integrator runs in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kernel {
    /// Zero-momentum sector when the initial state allows it, else full.
    #[default]
    Auto,
    Full,
    Symmetric,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvolveOptions {
    pub kernel: Kernel,
    /// Renormalize after every step. Off by default; recorded in output.
    pub renormalize: bool,
    pub keep_final_state: bool,
    /// Record the ⟨M_z⟩ / norm series.
    pub record_series: bool,
    #[serde(skip)]
    pub exec: Execution,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self {
            kernel: Kernel::Auto,
            renormalize: false,
            keep_final_state: true,
            record_series: true,
            exec: Execution::Parallel,
        }
    }
}

impl EvolveOptions {
    /// Settings for ensembles: only the final amplitudes are needed.
    pub fn lean() -> Self {
        Self {
            keep_final_state: false,
            record_series: false,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialState {
    /// `(|↑…↑⟩ + |↓…↓⟩)/√2`
    Cat,
    AllUp,
    AllDown,
    Other,
}

impl InitialState {
    pub fn state(&self, basis: SpinBasis) -> Option<SpinState> {
        match self {
            InitialState::Cat => Some(SpinState::cat(basis)),
            InitialState::AllUp => Some(SpinState::basis_state(basis, basis.all_up_index())),
            InitialState::AllDown => Some(SpinState::basis_state(basis, basis.all_down_index())),
            InitialState::Other => None,
        }
    }

    pub fn detect(state: &SpinState) -> Self {
        for label in [InitialState::Cat, InitialState::AllUp, InitialState::AllDown] {
            if label.state(state.basis()).as_ref() == Some(state) {
                return label;
            }
        }
        InitialState::Other
    }
}

/// Everything that defines a run except its noise seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EchoSetup {
    pub n_spins: usize,
    pub couplings: ChainCouplings,
    pub noise: NoiseParams,
    pub schedule: EchoSchedule,
    pub initial: InitialState,
    pub kernel: Kernel,
    pub renormalize: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EchoRunRecord {
    pub setup: EchoSetup,
    pub seed: NoiseSeed,
    pub times: Vec<f64>,
    pub mz_series: Vec<f64>,
    pub norm_series: Vec<f64>,
    pub final_state: Option<SpinState>,
    /// ⟨↑…↑|Ψ(t_end)⟩
    pub c1: C64,
    /// ⟨↓…↓|Ψ(t_end)⟩
    pub c2: C64,
    pub c_phi_sq: f64,
}

impl EchoRunRecord {
    /// `c₁* c₂`, the off-diagonal density-matrix element.
    pub fn coherence_product(&self) -> C64 {
        self.c1.conj() * self.c2
    }

    pub fn to_json(&self, include_state: bool) -> serde_json::Value {
        let pair = |c: &C64| [c.re, c.im];
        let state = if include_state {
            self.final_state
                .as_ref()
                .map(|s| s.amplitudes().iter().map(pair).collect::<Vec<_>>())
        } else {
            None
        };
        serde_json::json!({
            "code_version": env!("CARGO_PKG_VERSION"),
            "setup": self.setup,
            "seed": self.seed,
            "c1": pair(&self.c1),
            "c2": pair(&self.c2),
            "c_phi_sq": self.c_phi_sq,
            "times": self.times,
            "mz": self.mz_series,
            "norm": self.norm_series,
            "final_state": state,
        })
    }

    /// CSV with columns `t,mz,norm`.
    pub fn write_series_csv<W: Write>(&self, out: W) -> Result<()> {
        use crate::harness::output::fmt_f64;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "mz", "norm"])?;
        for ((t, m), n) in self.times.iter().zip(&self.mz_series).zip(&self.norm_series) {
            w.write_record([fmt_f64(*t), fmt_f64(*m), fmt_f64(*n)])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Scratch space for one RK4 integrator.
#[derive(Debug, Clone)]
pub struct Rk4 {
    k: Vec<C64>,
    stage: Vec<C64>,
    acc: Vec<C64>,
}

impl Rk4 {
    pub fn new(dim: usize) -> Self {
        let z = vec![C64::new(0.0, 0.0); dim];
        Self {
            k: z.clone(),
            stage: z.clone(),
            acc: z,
        }
    }

    /// One step of `dψ/dt = −i H ψ`; `fields` holds h at `t`, `t + dt/2`, `t + dt`.
    pub fn step(&mut self, gen: &dyn Generator, psi: &mut [C64], fields: [f64; 3], dt: f64) {
        debug_assert_eq!(psi.len(), self.k.len());
        gen.apply(fields[0], psi, &mut self.k);
        fused_update(psi, &self.k, &mut self.acc, Some((&mut self.stage, dt / 2.0)), dt / 6.0, true);
        gen.apply(fields[1], &self.stage, &mut self.k);
        fused_update(psi, &self.k, &mut self.acc, Some((&mut self.stage, dt / 2.0)), dt / 3.0, false);
        gen.apply(fields[1], &self.stage, &mut self.k);
        fused_update(psi, &self.k, &mut self.acc, Some((&mut self.stage, dt)), dt / 3.0, false);
        gen.apply(fields[2], &self.stage, &mut self.k);
        fused_update(psi, &self.k, &mut self.acc, None, dt / 6.0, false);
        psi.copy_from_slice(&self.acc);
    }
}

/// With `k = Hψ'`: `acc (+)= c_acc·(−i k)` and `stage = ψ + c_stage·(−i k)`.
#[inline]
fn fused_update(
    psi: &[C64],
    k: &[C64],
    acc: &mut [C64],
    stage: Option<(&mut Vec<C64>, f64)>,
    c_acc: f64,
    init: bool,
) {
    // −i·c·(a + ib) = c·b − i·c·a
    let mi = |c: f64, z: C64| Complex64::new(c * z.im, -c * z.re);
    match stage {
        Some((stage, c_stage)) => {
            for i in 0..psi.len() {
                let base = if init { psi[i] } else { acc[i] };
                acc[i] = base + mi(c_acc, k[i]);
                stage[i] = psi[i] + mi(c_stage, k[i]);
            }
        }
        None => {
            for i in 0..psi.len() {
                let base = if init { psi[i] } else { acc[i] };
                acc[i] = base + mi(c_acc, k[i]);
            }
        }
    }
}

/// Single RK4 step on the full basis, evaluating the field directly.
pub fn rk4_step(
    state: &SpinState,
    couplings: &ChainCouplings,
    noise: &NoiseRealization<'_>,
    t: f64,
    dt: f64,
) -> Result<SpinState> {
    let op = ChainOperator::new(state.basis(), couplings);
    let fields = [noise.evaluate(t), noise.evaluate(t + dt / 2.0), noise.evaluate(t + dt)];
    let mut out = state.clone();
    Rk4::new(op.dim()).step(&op, out.amplitudes_mut(), fields, dt);
    if out.amplitudes().iter().any(|a| !(a.re.is_finite() && a.im.is_finite())) {
        return Err(Error::NonFinite { time: t + dt });
    }
    Ok(out)
}

struct Series {
    times: Vec<f64>,
    mz: Vec<f64>,
    norm: Vec<f64>,
}

/// Representation-independent integration loop.
#[allow(clippy::too_many_arguments)]
fn propagate(
    forward: &dyn Generator,
    reversed: &dyn Generator,
    mz_of: &dyn Fn(usize) -> f64,
    psi: &mut [C64],
    trace: &NoiseTrace,
    schedule: &EchoSchedule,
    options: &EvolveOptions,
) -> Result<Series> {
    let dt = schedule.dt;
    let n_rev = schedule.reversal_step();
    let n_end = schedule.total_steps();
    let stride = schedule.record_stride;
    let mut series = Series {
        times: Vec::new(),
        mz: Vec::new(),
        norm: Vec::new(),
    };
    let observe = |psi: &[C64], series: &mut Series, step: usize| -> Result<()> {
        let t = step as f64 * dt;
        let mut norm_sqr = 0.0;
        let mut mz = 0.0;
        for (b, a) in psi.iter().enumerate() {
            let p = a.norm_sqr();
            norm_sqr += p;
            mz += p * mz_of(b);
        }
        if !norm_sqr.is_finite() {
            return Err(Error::NonFinite { time: t });
        }
        let norm = norm_sqr.sqrt();
        if !options.renormalize && (norm - 1.0).abs() > NORM_DRIFT_LIMIT {
            return Err(Error::NormDrift {
                time: t,
                drift: norm - 1.0,
            });
        }
        if options.record_series {
            series.times.push(t);
            series.mz.push(mz);
            series.norm.push(norm);
        }
        Ok(())
    };

    observe(psi, &mut series, 0)?;
    let mut rk = Rk4::new(psi.len());
    for k in 0..n_end {
        let gen = if k < n_rev { forward } else { reversed };
        let fields = [trace.at(2 * k), trace.at(2 * k + 1), trace.at(2 * k + 2)];
        rk.step(gen, psi, fields, dt);
        if options.renormalize {
            let n = psi.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
            if n > 0.0 && n.is_finite() {
                psi.iter_mut().for_each(|a| *a /= n);
            }
        }
        let done = k + 1;
        if done % stride == 0 || done == n_end {
            observe(psi, &mut series, done)?;
        }
    }
    Ok(series)
}

enum Workspace {
    Full,
    Symmetric(Box<TranslationSector>),
}

/// Reusable driver for many realizations of one setup.
pub struct EchoRunner<'m> {
    model: &'m NoiseModel,
    setup: EchoSetup,
    basis: SpinBasis,
    workspace: Workspace,
    initial: Vec<C64>,
    synth: TraceSynthesizer,
    options: EvolveOptions,
}

impl<'m> EchoRunner<'m> {
    pub fn new(
        initial: &SpinState,
        couplings: &ChainCouplings,
        model: &'m NoiseModel,
        schedule: &EchoSchedule,
        options: EvolveOptions,
    ) -> Result<Self> {
        let basis = initial.basis();
        schedule.validate(basis.n_spins(), couplings, &model.params())?;
        let (workspace, amplitudes, kernel) = match options.kernel {
            Kernel::Full => (Workspace::Full, initial.amplitudes().to_vec(), Kernel::Full),
            Kernel::Symmetric => {
                let sector = TranslationSector::for_state(initial);
                let x = sector.embed(initial, 1e-12)?;
                (Workspace::Symmetric(Box::new(sector)), x, Kernel::Symmetric)
            }
            Kernel::Auto => {
                let sector = TranslationSector::for_state(initial);
                match sector.embed(initial, 1e-12) {
                    Ok(x) => (Workspace::Symmetric(Box::new(sector)), x, Kernel::Symmetric),
                    Err(_) => (Workspace::Full, initial.amplitudes().to_vec(), Kernel::Full),
                }
            }
        };
        let mut nominal = *couplings;
        nominal.reversed = false;
        nominal.reversal_error = schedule.reversal_error;
        nominal.reversal_draws = [0.0; 3];
        Ok(Self {
            model,
            setup: EchoSetup {
                n_spins: basis.n_spins(),
                couplings: nominal,
                noise: model.params(),
                schedule: *schedule,
                initial: InitialState::detect(initial),
                kernel,
                renormalize: options.renormalize,
            },
            basis,
            workspace,
            initial: amplitudes,
            synth: model.synthesizer(schedule.dt / 2.0),
            options,
        })
    }

    pub fn setup(&self) -> &EchoSetup {
        &self.setup
    }

    pub fn kernel(&self) -> Kernel {
        self.setup.kernel
    }

    /// Field trace on the half-step grid for one realization.
    pub fn trace(&self, realization: &NoiseRealization<'_>) -> NoiseTrace {
        let n_points = 2 * self.setup.schedule.total_steps() + 1;
        if self.model.h_rms() == 0.0 {
            return NoiseTrace::zeros(self.synth.step(), n_points);
        }
        self.synth.trace(realization, n_points)
    }

    pub fn run(&self, seed: NoiseSeed) -> Result<EchoRunRecord> {
        if self.model.h_rms() == 0.0 {
            let n_points = 2 * self.setup.schedule.total_steps() + 1;
            return self.run_with_trace(seed, &NoiseTrace::zeros(self.synth.step(), n_points));
        }
        let realization = self.model.sample(seed);
        self.run_with_trace(seed, &self.trace(&realization))
    }

    pub fn run_with_trace(&self, seed: NoiseSeed, trace: &NoiseTrace) -> Result<EchoRunRecord> {
        let schedule = &self.setup.schedule;
        let forward_c = self.setup.couplings;
        let draws = if schedule.reversal_error > 0.0 {
            seed.reversal_draws()
        } else {
            [0.0; 3]
        };
        let reversed_c = forward_c
            .with_reversal_error(schedule.reversal_error, draws)
            .reversed();
        let mut psi = self.initial.clone();
        let exec = self.options.exec;
        let (series, final_state, c1, c2) = match &self.workspace {
            Workspace::Full => {
                let fwd = ChainOperator::new(self.basis, &forward_c).with_execution(exec);
                let rev = ChainOperator::new(self.basis, &reversed_c).with_execution(exec);
                let basis = self.basis;
                let mz = move |b: usize| basis.magnetization(b);
                let series = propagate(&fwd, &rev, &mz, &mut psi, trace, schedule, &self.options)?;
                let c1 = psi[basis.all_up_index()];
                let c2 = psi[basis.all_down_index()];
                let state = if self.options.keep_final_state {
                    Some(SpinState::new(basis, psi)?)
                } else {
                    None
                };
                (series, state, c1, c2)
            }
            Workspace::Symmetric(sector) => {
                let fwd = sector.operator(&forward_c).with_execution(exec);
                let rev = sector.operator(&reversed_c).with_execution(exec);
                let table = sector.magnetization();
                let mz = |r: usize| table[r];
                let series = propagate(&fwd, &rev, &mz, &mut psi, trace, schedule, &self.options)?;
                let up = sector.row_of(self.basis.all_up_index());
                let down = sector.row_of(self.basis.all_down_index());
                let zero = C64::new(0.0, 0.0);
                // both reference states are single-site orbits
                let c1 = up.map_or(zero, |r| psi[r]);
                let c2 = down.map_or(zero, |r| psi[r]);
                let state = if self.options.keep_final_state {
                    Some(sector.lift(&psi)?)
                } else {
                    None
                };
                (series, state, c1, c2)
            }
        };
        Ok(EchoRunRecord {
            setup: self.setup.clone(),
            seed,
            times: series.times,
            mz_series: series.mz,
            norm_series: series.norm,
            final_state,
            c1,
            c2,
            c_phi_sq: 1.0 - c1.norm_sqr() - c2.norm_sqr(),
        })
    }
}

/// Echo protocol for one realization: `+H_int` on `[0, τ₀)`, reversed
/// couplings afterwards, field term unchanged throughout.
pub fn evolve(
    state: &SpinState,
    couplings: &ChainCouplings,
    noise: &NoiseRealization<'_>,
    schedule: &EchoSchedule,
    options: EvolveOptions,
) -> Result<EchoRunRecord> {
    let runner = EchoRunner::new(state, couplings, noise.model(), schedule, options)?;
    let trace = runner.trace(noise);
    runner.run_with_trace(noise.seed(), &trace)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MagnetizationCurves {
    pub seed: NoiseSeed,
    pub times: Vec<f64>,
    /// ⟨M_z⟩₁(t), starting from all up.
    pub up: Vec<f64>,
    /// ⟨M_z⟩₂(t), starting from all down.
    pub down: Vec<f64>,
}

/// Runs the protocol from `|↑…↑⟩` and from `|↓…↓⟩` under the same field.
pub fn magnetization_curves(
    basis: SpinBasis,
    couplings: &ChainCouplings,
    model: &NoiseModel,
    seed: NoiseSeed,
    schedule: &EchoSchedule,
    options: EvolveOptions,
) -> Result<MagnetizationCurves> {
    let options = EvolveOptions {
        record_series: true,
        keep_final_state: false,
        ..options
    };
    let up = EchoRunner::new(&SpinState::basis_state(basis, basis.all_up_index()), couplings, model, schedule, options)?;
    let down = EchoRunner::new(&SpinState::basis_state(basis, 0), couplings, model, schedule, options)?;
    let trace = if model.h_rms() == 0.0 {
        NoiseTrace::zeros(schedule.dt / 2.0, 2 * schedule.total_steps() + 1)
    } else {
        up.trace(&model.sample(seed))
    };
    let a = up.run_with_trace(seed, &trace)?;
    let b = down.run_with_trace(seed, &trace)?;
    Ok(MagnetizationCurves {
        seed,
        times: a.times,
        up: a.mz_series,
        down: b.mz_series,
    })
}
