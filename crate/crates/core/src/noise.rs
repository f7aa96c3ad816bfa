//! Classical field h(t) with Lorentzian spectrum.
//!
//! A realization is the harmonic sum `h(t) = Σ_j h_j cos(ω_j t + α_j)` over
//! `ω_j = Δω·j`, `j ∈ [−j_max, j_max]`, with independent uniform phases and
//! amplitudes `h_j = A·h_rms/√(ω_j² + γ²)`. The constant `A` is fixed by
//! `Σ_j h_j²/2 = h_rms²`, so the ensemble correlation is
//! `Σ_j (h_j²/2) cos(ω_j t)`, which approaches `h_rms² e^{−γ|t|}` for a dense
//! grid. Every realization is periodic with period `2π/Δω`.
//!
//! Internally the ±j harmonics are folded into one complex coefficient
//! `z_j = h_j (e^{iα_j} + e^{−iα_{−j}})` so that `h(t) = Re Σ_{j≥0} z_j e^{iω_j t}`.
//! On a time grid whose step divides the period this is an inverse DFT,
//! which is how integrator traces are produced.

use std::f64::consts::{PI, TAU};
use std::io::Write;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::parallel::{map_indexed, Execution};
use crate::spinchain::C64;
use crate::stats::MeanEstimate;

/// Largest DFT used for trace synthesis before falling back to phasors.
const MAX_FFT_BINS: usize = 1 << 23;
/// Phasor recurrences are re-anchored to exact phases this often.
const PHASOR_RESYNC: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseParams {
    pub h_rms: f64,
    pub gamma: f64,
    pub delta_omega: f64,
    pub j_max: usize,
}

impl NoiseParams {
    pub const PAPER: NoiseParams = NoiseParams {
        h_rms: 0.0085,
        gamma: 0.25,
        delta_omega: PI / 1000.0,
        j_max: 100_000,
    };

    /// Truncated harmonic grid used for quick runs.
    pub const REDUCED_J_MAX: usize = 10_000;
}

impl Default for NoiseParams {
    fn default() -> Self {
        Self::PAPER
    }
}

#[derive(Debug, Clone)]
pub struct NoiseModel {
    params: NoiseParams,
    normalization: f64,
    /// `h_j` for `j = 0..=j_max`; the spectrum is even in `j`.
    amplitudes: Arc<[f64]>,
}

impl NoiseModel {
    pub fn new(params: NoiseParams) -> Result<Self> {
        let NoiseParams {
            h_rms,
            gamma,
            delta_omega,
            j_max,
        } = params;
        if !(h_rms >= 0.0 && h_rms.is_finite()) {
            return Err(Error::Config(format!("h_rms must be finite and >= 0, got {h_rms}")));
        }
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::Config(format!("gamma must be positive, got {gamma}")));
        }
        if !(delta_omega > 0.0 && delta_omega.is_finite()) {
            return Err(Error::Config(format!(
                "delta_omega must be positive, got {delta_omega}"
            )));
        }
        let lorentz = |j: usize| {
            let w = delta_omega * j as f64;
            1.0 / (w * w + gamma * gamma)
        };
        // Σ_{j=-J}^{J} 1/(ω_j²+γ²), summed from the small tail terms upwards
        let mut sum = 0.0;
        for j in (1..=j_max).rev() {
            sum += 2.0 * lorentz(j);
        }
        sum += lorentz(0);
        let normalization = (2.0 / sum).sqrt();
        let amplitudes = (0..=j_max)
            .map(|j| normalization * h_rms * lorentz(j).sqrt())
            .collect();
        Ok(Self {
            params,
            normalization,
            amplitudes,
        })
    }

    pub fn paper() -> Self {
        Self::new(NoiseParams::PAPER).expect("paper parameters are valid")
    }

    pub fn params(&self) -> NoiseParams {
        self.params
    }

    pub fn h_rms(&self) -> f64 {
        self.params.h_rms
    }

    pub fn gamma(&self) -> f64 {
        self.params.gamma
    }

    pub fn delta_omega(&self) -> f64 {
        self.params.delta_omega
    }

    pub fn j_max(&self) -> usize {
        self.params.j_max
    }

    pub fn normalization(&self) -> f64 {
        self.normalization
    }

    pub fn omega(&self, j: i64) -> f64 {
        self.params.delta_omega * j as f64
    }

    pub fn amplitude(&self, j: i64) -> f64 {
        self.amplitudes[j.unsigned_abs() as usize]
    }

    /// `h_j` for `j ≥ 0`.
    pub fn half_spectrum(&self) -> &[f64] {
        &self.amplitudes
    }

    pub fn n_harmonics(&self) -> usize {
        2 * self.params.j_max + 1
    }

    pub fn period(&self) -> f64 {
        TAU / self.params.delta_omega
    }

    /// `h_rms / γ`; the model is meant for the regime where this is small.
    pub fn regime_ratio(&self) -> f64 {
        self.params.h_rms / self.params.gamma
    }

    /// Exact ensemble correlation `⟨h(0)h(t)⟩ = Σ_j (h_j²/2) cos(ω_j t)`.
    pub fn correlation(&self, t: f64) -> f64 {
        let mut acc = 0.0;
        for j in (1..self.amplitudes.len()).rev() {
            let h = self.amplitudes[j];
            acc += h * h * (self.omega(j as i64) * t).cos();
        }
        acc + self.amplitudes[0] * self.amplitudes[0] / 2.0
    }

    /// `h_rms² e^{−γ|t|}`.
    pub fn target_correlation(&self, t: f64) -> f64 {
        self.params.h_rms.powi(2) * (-self.params.gamma * t.abs()).exp()
    }

    pub fn sample(&self, seed: NoiseSeed) -> NoiseRealization<'_> {
        sample_realization(self, seed)
    }

    pub fn synthesizer(&self, step: f64) -> TraceSynthesizer {
        TraceSynthesizer::new(self, step)
    }
}

/// Reproducibility token: a master seed plus a per-item stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NoiseSeed {
    pub master: u64,
    pub stream: u64,
}

impl NoiseSeed {
    pub fn new(master: u64, stream: u64) -> Self {
        Self { master, stream }
    }

    /// Stream for realization `realization` of scan point `point`.
    pub fn item(master: u64, point: u32, realization: u32) -> Self {
        Self::new(master, ((point as u64) << 32) | realization as u64)
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master);
        rng.set_stream(self.stream);
        rng
    }

    /// Three standard-normal draws used to perturb an echo reversal. They
    /// come from a generator separate from the phase stream.
    pub fn reversal_draws(&self) -> [f64; 3] {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master ^ 0x5bd1_e995_9e37_79b9);
        rng.set_stream(self.stream);
        [
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
        ]
    }
}

#[derive(Debug, Clone)]
pub struct NoiseRealization<'a> {
    model: &'a NoiseModel,
    seed: NoiseSeed,
    /// `α_j` at index `j + j_max`.
    phases: Vec<f64>,
    folded: Vec<C64>,
}

/// Draws `2·j_max + 1` phases uniformly on `[0, 2π)`, ordered from
/// `j = −j_max` upwards.
pub fn sample_realization(model: &NoiseModel, seed: NoiseSeed) -> NoiseRealization<'_> {
    let mut rng = seed.rng();
    let phases: Vec<f64> = (0..model.n_harmonics())
        .map(|_| TAU * rng.random::<f64>())
        .collect();
    let j_max = model.j_max();
    let folded = (0..=j_max)
        .map(|j| {
            let h = model.amplitudes[j];
            let (s, c) = phases[j_max + j].sin_cos();
            if j == 0 {
                C64::new(h * c, h * s)
            } else {
                let (sm, cm) = phases[j_max - j].sin_cos();
                C64::new(h * (c + cm), h * (s - sm))
            }
        })
        .collect();
    NoiseRealization {
        model,
        seed,
        phases,
        folded,
    }
}

impl<'a> NoiseRealization<'a> {
    pub fn model(&self) -> &'a NoiseModel {
        self.model
    }

    pub fn seed(&self) -> NoiseSeed {
        self.seed
    }

    pub fn phases(&self) -> &[f64] {
        &self.phases
    }

    pub fn phase(&self, j: i64) -> f64 {
        self.phases[(j + self.model.j_max() as i64) as usize]
    }

    /// Folded coefficients `z_j`, `j = 0..=j_max`.
    pub fn folded(&self) -> &[C64] {
        &self.folded
    }

    /// `h(t)` by direct summation, O(j_max).
    pub fn evaluate(&self, t: f64) -> f64 {
        let dw = self.model.delta_omega();
        let mut acc = 0.0;
        for (j, z) in self.folded.iter().enumerate().rev() {
            let (s, c) = (dw * j as f64 * t).sin_cos();
            acc += z.re * c - z.im * s;
        }
        acc
    }

    /// `h` at `k·step` for `k = 0..n_points`.
    pub fn trace(&self, step: f64, n_points: usize) -> NoiseTrace {
        self.model.synthesizer(step).trace(self, n_points)
    }
}

/// Field values on a uniform grid `t_k = k·step`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseTrace {
    step: f64,
    values: Vec<f64>,
}

impl NoiseTrace {
    pub fn zeros(step: f64, n_points: usize) -> Self {
        Self {
            step,
            values: vec![0.0; n_points],
        }
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn at(&self, k: usize) -> f64 {
        self.values[k]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// CSV with columns `t,h`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "h"])?;
        for (k, h) in self.values.iter().enumerate() {
            w.write_record([
                crate::harness::output::fmt_f64(k as f64 * self.step),
                crate::harness::output::fmt_f64(*h),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Clone)]
enum SynthesisPath {
    /// Grid step divides the period into `bins` points: one inverse DFT.
    Dft { bins: usize, fft: Arc<dyn Fft<f64>> },
    Phasor,
}

/// Reusable trace generator for one grid step; holds the planned DFT.
#[derive(Clone)]
pub struct TraceSynthesizer {
    step: f64,
    delta_omega: f64,
    path: SynthesisPath,
}

impl std::fmt::Debug for TraceSynthesizer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TraceSynthesizer")
            .field("step", &self.step)
            .field("bins", &self.dft_bins())
            .finish()
    }
}

impl TraceSynthesizer {
    pub fn new(model: &NoiseModel, step: f64) -> Self {
        let ratio = TAU / (model.delta_omega() * step);
        let bins = ratio.round();
        let path = if step > 0.0
            && (ratio - bins).abs() <= 1e-9 * ratio
            && bins >= 1.0
            && bins <= MAX_FFT_BINS as f64
        {
            let bins = bins as usize;
            let fft = FftPlanner::new().plan_fft_inverse(bins);
            SynthesisPath::Dft { bins, fft }
        } else {
            SynthesisPath::Phasor
        };
        Self {
            step,
            delta_omega: model.delta_omega(),
            path,
        }
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    /// Number of DFT bins, or `None` when the phasor recurrence is used.
    pub fn dft_bins(&self) -> Option<usize> {
        match &self.path {
            SynthesisPath::Dft { bins, .. } => Some(*bins),
            SynthesisPath::Phasor => None,
        }
    }

    pub fn trace(&self, realization: &NoiseRealization<'_>, n_points: usize) -> NoiseTrace {
        let values = match &self.path {
            SynthesisPath::Dft { bins, fft } => {
                let bins = *bins;
                let mut buf = vec![C64::new(0.0, 0.0); bins];
                for (j, z) in realization.folded.iter().enumerate() {
                    buf[j % bins] += z;
                }
                fft.process(&mut buf);
                (0..n_points).map(|k| buf[k % bins].re).collect()
            }
            SynthesisPath::Phasor => self.phasor_trace(&realization.folded, n_points),
        };
        NoiseTrace {
            step: self.step,
            values,
        }
    }

    pub fn phasor_trace(&self, folded: &[C64], n_points: usize) -> Vec<f64> {
        let rotors: Vec<C64> = (0..folded.len())
            .map(|j| C64::from_polar(1.0, self.delta_omega * j as f64 * self.step))
            .collect();
        let mut phasors = folded.to_vec();
        let mut out = Vec::with_capacity(n_points);
        for k in 0..n_points {
            if k % PHASOR_RESYNC == 0 && k > 0 {
                let t = k as f64 * self.step;
                for (j, (p, z)) in phasors.iter_mut().zip(folded).enumerate() {
                    *p = z * C64::from_polar(1.0, self.delta_omega * j as f64 * t);
                }
            }
            out.push(phasors.iter().rev().map(|p| p.re).sum());
            for (p, r) in phasors.iter_mut().zip(&rotors) {
                *p *= r;
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationEstimate {
    pub lag: f64,
    pub mean: f64,
    pub std_error: f64,
}

/// Ensemble estimate of `⟨h(0)h(t)⟩` for each lag from `n_seeds` independent
/// realizations (streams `0..n_seeds` of `master`).
pub fn autocorrelation_estimate(
    model: &NoiseModel,
    lags: &[f64],
    n_seeds: usize,
    master: u64,
    exec: Execution,
) -> Result<Vec<CorrelationEstimate>> {
    if n_seeds < 100 {
        return Err(Error::Config(format!(
            "autocorrelation needs at least 100 seeds, got {n_seeds}"
        )));
    }
    if lags.iter().any(|l| !l.is_finite()) {
        return Err(Error::Config("lags must be finite".into()));
    }
    let grid = lag_grid(model, lags);
    let products: Vec<Vec<f64>> = map_indexed(exec, n_seeds, |i| {
        let r = model.sample(NoiseSeed::new(master, i as u64));
        let h0: f64 = r.folded.iter().rev().map(|z| z.re).sum();
        match &grid {
            Some((synth, idx)) => {
                let n = idx.iter().max().map_or(0, |m| m + 1);
                let trace = synth.trace(&r, n);
                idx.iter().map(|&k| h0 * trace.at(k)).collect()
            }
            None => lags.iter().map(|&t| h0 * r.evaluate(t)).collect(),
        }
    });
    Ok(lags
        .iter()
        .enumerate()
        .map(|(l, &lag)| {
            let est = MeanEstimate::from_values(products.iter().map(|p| p[l]));
            CorrelationEstimate {
                lag,
                mean: est.mean,
                std_error: est.std_error,
            }
        })
        .collect())
}

/// If all lags are non-negative multiples of the smallest positive lag and
/// that step divides the period, returns a DFT synthesizer and grid indices.
fn lag_grid(model: &NoiseModel, lags: &[f64]) -> Option<(TraceSynthesizer, Vec<usize>)> {
    let step = lags.iter().copied().filter(|&l| l > 0.0).fold(f64::INFINITY, f64::min);
    if !step.is_finite() || lags.iter().any(|&l| l < 0.0) {
        return None;
    }
    let idx: Option<Vec<usize>> = lags
        .iter()
        .map(|&l| {
            let k = (l / step).round();
            ((l / step - k).abs() < 1e-9).then_some(k as usize)
        })
        .collect();
    let synth = model.synthesizer(step);
    synth.dft_bins()?;
    Some((synth, idx?))
}
