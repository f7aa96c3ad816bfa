//! Noninteracting channel and closed-form rate laws.
//!
//! Without interactions the two branch states only pick up phases, and the
//! relative phase after `2τ₀` is `ΔM_z ∫₀^{2τ₀} h(t) dt`. Integrating the
//! harmonic sum term by term gives
//!
//! ```text
//! ∫₀^{2τ₀} h = 2 Σ_j h_j (sin(ω_j τ₀)/ω_j) cos(ω_j τ₀ + α_j)
//! ```
//!
//! so `C_N(2τ₀) = |⟨cos(ΔM_z ∫h)⟩|` is a plain average over phase draws.
//! The Anderson–Weiss approximation replaces that average by a Gaussian with
//! correlation kernel `e^{−γt}`, which has a closed form.

use serde::{Deserialize, Serialize};

use crate::coherence::{Channel, CoherencePoint};
use crate::error::{Error, Result};
use crate::noise::{NoiseModel, NoiseSeed};
use crate::parallel::{map_indexed, Execution};
use crate::spinchain::C64;
use crate::stats::MeanEstimate;

/// Prefactor of the interacting-rate estimate obtained by fitting.
pub const GAMMA_I_PREFACTOR: f64 = 0.96;

/// Scan-point tag used for noninteracting phase draws. One draw per sample
/// is shared by every τ₀ of a curve.
pub const NONINTERACTING_POINT: u32 = u32::MAX;

#[derive(Debug, Clone)]
pub struct DephasingParams {
    pub n_spins: usize,
    /// `M_{z,2} − M_{z,1}`.
    pub delta_mz: f64,
    pub noise: NoiseModel,
}

impl DephasingParams {
    /// All-up vs all-down: `ΔM_z = −N_s`.
    pub fn new(n_spins: usize, noise: NoiseModel) -> Self {
        Self {
            n_spins,
            delta_mz: -(n_spins as f64),
            noise,
        }
    }

    pub fn with_delta_mz(mut self, delta_mz: f64) -> Result<Self> {
        if !(delta_mz.abs() <= self.n_spins as f64) {
            return Err(Error::Config(format!(
                "|delta_mz| = {} exceeds n_spins = {}",
                delta_mz.abs(),
                self.n_spins
            )));
        }
        self.delta_mz = delta_mz;
        Ok(self)
    }

    /// `ω_φ² = ΔM_z² h_rms²`.
    pub fn omega_phi_sq(&self) -> f64 {
        (self.delta_mz * self.noise.h_rms()).powi(2)
    }
}

/// `∫₀^T (T − t) e^{−γt} dt = (γT − 1 + e^{−γT})/γ²`.
pub fn memory_integral(gamma: f64, big_t: f64) -> f64 {
    let x = gamma * big_t;
    (x + (-x).exp_m1()) / (gamma * gamma)
}

/// Anderson–Weiss coherence at total time `big_t = 2τ₀`.
pub fn anderson_weiss(params: &DephasingParams, big_t: f64) -> f64 {
    (-params.omega_phi_sq() * memory_integral(params.noise.gamma(), big_t)).exp()
}

/// Asymptotic noninteracting rate `ΔM_z² h_rms²/γ` (equals `N_s² h_rms²/γ`
/// for the all-up/all-down pair).
pub fn gamma_n(params: &DephasingParams) -> f64 {
    params.omega_phi_sq() / params.noise.gamma()
}

/// Order-of-magnitude interacting rate `prefactor · N_s h_rms²/J_eff`.
pub fn gamma_i_estimate(n_spins: usize, h_rms: f64, j_eff: f64, prefactor: f64) -> Result<f64> {
    if !(j_eff > 0.0) {
        return Err(Error::Config(format!("j_eff must be positive, got {j_eff}")));
    }
    Ok(prefactor * n_spins as f64 * h_rms * h_rms / j_eff)
}

/// `N_s J_eff/γ`, the expected order of `Γ_N/Γ_I`.
pub fn protection_ratio(n_spins: usize, j_eff: f64, gamma: f64) -> Result<f64> {
    if !(gamma > 0.0) {
        return Err(Error::Config(format!("gamma must be positive, got {gamma}")));
    }
    Ok(n_spins as f64 * j_eff / gamma)
}

/// Evaluates `Φ(τ₀) = Σ_j h_j (sin(ω_jτ₀)/ω_j) cos(ω_jτ₀ + α_j)` for a fixed
/// set of τ₀ values. Per τ₀ it stores the folded weights
/// `s_j(τ₀) e^{iω_jτ₀}`, so one draw costs a dot product per τ₀.
#[derive(Debug, Clone)]
pub struct PhaseIntegrals {
    tau0s: Vec<f64>,
    weights: Vec<Vec<C64>>,
}

impl PhaseIntegrals {
    pub fn new(model: &NoiseModel, tau0s: &[f64]) -> Self {
        let dw = model.delta_omega();
        let weights = tau0s
            .iter()
            .map(|&tau0| {
                (0..=model.j_max())
                    .map(|j| {
                        if j == 0 {
                            // sin(ωτ₀)/ω → τ₀
                            C64::new(tau0, 0.0)
                        } else {
                            let w = dw * j as f64;
                            let (s, c) = (w * tau0).sin_cos();
                            C64::new(c, s) * (s / w)
                        }
                    })
                    .collect()
            })
            .collect();
        Self {
            tau0s: tau0s.to_vec(),
            weights,
        }
    }

    pub fn tau0s(&self) -> &[f64] {
        &self.tau0s
    }

    /// Φ(τ₀) for every stored τ₀, from the folded coefficients of one draw.
    pub fn evaluate(&self, folded: &[C64]) -> Vec<f64> {
        self.weights
            .iter()
            .map(|w| {
                w.iter()
                    .zip(folded)
                    .rev()
                    .map(|(w, z)| z.re * w.re - z.im * w.im)
                    .sum()
            })
            .collect()
    }
}

/// Monte Carlo `C_N` for several state pairs and τ₀ values from one set of
/// phase draws. Returns `points[pair][tau]`.
pub fn cn_curves(
    noise: &NoiseModel,
    delta_mzs: &[f64],
    tau0s: &[f64],
    n_samples: usize,
    master_seed: u64,
    exec: Execution,
) -> Result<Vec<Vec<CoherencePoint>>> {
    if n_samples < 100 {
        return Err(Error::Config(format!("need at least 100 samples, got {n_samples}")));
    }
    let integrals = PhaseIntegrals::new(noise, tau0s);
    let phis: Vec<Vec<f64>> = map_indexed(exec, n_samples, |i| {
        let seed = NoiseSeed::item(master_seed, NONINTERACTING_POINT, i as u32);
        integrals.evaluate(noise.sample(seed).folded())
    });
    Ok(delta_mzs
        .iter()
        .map(|&dm| {
            tau0s
                .iter()
                .enumerate()
                .map(|(t, &tau0)| {
                    // cos(2ΔM Φ) = cos(ΔM ∫₀^{2τ₀} h)
                    let est = MeanEstimate::from_values(phis.iter().map(|p| (2.0 * dm * p[t]).cos()));
                    CoherencePoint {
                        tau0,
                        c_value: est.mean.abs(),
                        n_realizations: n_samples,
                        std_error: est.std_error,
                        channel: Channel::Noninteracting,
                    }
                })
                .collect()
        })
        .collect())
}

/// Monte Carlo average of the noninteracting coherence at one τ₀.
pub fn cn_monte_carlo(
    params: &DephasingParams,
    tau0: f64,
    n_samples: usize,
    master_seed: u64,
    exec: Execution,
) -> Result<CoherencePoint> {
    let mut curves = cn_curves(&params.noise, &[params.delta_mz], &[tau0], n_samples, master_seed, exec)?;
    Ok(curves.remove(0).remove(0))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RateSummary {
    pub n_spins: usize,
    pub h_rms: f64,
    pub gamma: f64,
    pub j_eff: f64,
    pub gamma_n: f64,
    pub gamma_i_estimate: f64,
    pub rate_ratio: f64,
    pub protection_ratio: f64,
}

pub fn rate_summary(n_spins: usize, noise: &NoiseModel, j_eff: f64) -> Result<RateSummary> {
    let params = DephasingParams::new(n_spins, noise.clone());
    let gn = gamma_n(&params);
    let gi = gamma_i_estimate(n_spins, noise.h_rms(), j_eff, GAMMA_I_PREFACTOR)?;
    Ok(RateSummary {
        n_spins,
        h_rms: noise.h_rms(),
        gamma: noise.gamma(),
        j_eff,
        gamma_n: gn,
        gamma_i_estimate: gi,
        rate_ratio: gn / gi,
        protection_ratio: protection_ratio(n_spins, j_eff, noise.gamma())?,
    })
}
