//! Decay-rate extraction from coherence curves.
//!
//! Both fits regress against the total echo time `2τ₀`:
//! - exponential tail: `ln C = ln A − Γ·2τ₀`
//! - linear early decay: `C = b − b·Γ·2τ₀`, i.e. `C ≈ b(1 − 2Γτ₀)`
//!
//! Points are weighted by their statistical errors when every point in the
//! window carries one; otherwise the fit is unweighted and the covariance is
//! scaled by the residual variance.

use serde::{Deserialize, Serialize};

use crate::coherence::{CoherenceCurve, CoherencePoint};
use crate::error::{Error, Result};

/// Minimum number of points a fit accepts.
pub const MIN_FIT_POINTS: usize = 4;
/// Tail points must exceed this many standard errors.
pub const SIGNAL_FLOOR: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitWindow {
    pub tau0_min: f64,
    pub tau0_max: f64,
}

impl FitWindow {
    pub fn new(tau0_min: f64, tau0_max: f64) -> Self {
        Self { tau0_min, tau0_max }
    }

    fn contains(&self, tau0: f64) -> bool {
        tau0 >= self.tau0_min - 1e-12 && tau0 <= self.tau0_max + 1e-12
    }

    /// Exponential regime: `2τ₀ ≥ 3/γ`.
    pub fn tail(gamma: f64, tau0_max: f64) -> Self {
        Self::new(1.5 / gamma, tau0_max)
    }

    /// Past the initial oscillations: `τ₀ ≥ 2/J_eff`, up to `τ₀ = 30`.
    pub fn early(j_eff: f64) -> Self {
        Self::new(2.0 / j_eff, 30.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitKind {
    ExponentialTail,
    LinearEarly,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub kind: FitKind,
    pub rate: f64,
    pub rate_std_error: f64,
    /// Amplitude `A` (tail) or intercept `b` (linear).
    pub prefactor: f64,
    pub window: FitWindow,
    pub n_points: usize,
    pub residual_rms: f64,
    pub weighted: bool,
    /// Covariance of `(prefactor, rate)`.
    pub covariance: [[f64; 2]; 2],
}

struct LineFit {
    intercept: f64,
    slope: f64,
    /// covariance of (intercept, slope)
    cov: [[f64; 2]; 2],
    residual_rms: f64,
}

fn weighted_line(x: &[f64], y: &[f64], w: Option<&[f64]>) -> Result<LineFit> {
    let n = x.len();
    let weight = |i: usize| w.map_or(1.0, |w| w[i]);
    let (mut s, mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for i in 0..n {
        let wi = weight(i);
        s += wi;
        sx += wi * x[i];
        sy += wi * y[i];
        sxx += wi * x[i] * x[i];
        sxy += wi * x[i] * y[i];
    }
    let det = s * sxx - sx * sx;
    if !(det.abs() > 0.0) || !det.is_finite() {
        return Err(Error::Fit("degenerate abscissae".into()));
    }
    let slope = (s * sxy - sx * sy) / det;
    let intercept = (sxx * sy - sx * sxy) / det;
    let rss: f64 = (0..n).map(|i| (y[i] - intercept - slope * x[i]).powi(2)).sum();
    let scale = if w.is_some() {
        1.0
    } else {
        rss / (n as f64 - 2.0)
    };
    let cov = [
        [scale * sxx / det, -scale * sx / det],
        [-scale * sx / det, scale * s / det],
    ];
    Ok(LineFit {
        intercept,
        slope,
        cov,
        residual_rms: (rss / n as f64).sqrt(),
    })
}

fn select<'a>(points: &'a [CoherencePoint], window: &FitWindow) -> Vec<&'a CoherencePoint> {
    points.iter().filter(|p| window.contains(p.tau0)).collect()
}

fn weights_for(points: &[&CoherencePoint], sigma: impl Fn(&CoherencePoint) -> f64) -> Option<Vec<f64>> {
    if points.iter().all(|p| p.std_error > 0.0) {
        Some(points.iter().map(|p| sigma(p).powi(-2)).collect())
    } else {
        None
    }
}

/// Weighted least squares of `ln C` against `2τ₀`; points below the
/// signal floor are left out.
pub fn fit_exponential_tail_points(points: &[CoherencePoint], window: FitWindow) -> Result<RateFit> {
    let in_window = select(points, &window);
    let usable: Vec<&CoherencePoint> = in_window
        .iter()
        .copied()
        .filter(|p| p.c_value > 0.0 && p.c_value > SIGNAL_FLOOR * p.std_error)
        .collect();
    if usable.len() < MIN_FIT_POINTS {
        return Err(Error::Fit(format!(
            "{} of {} points in tau0 ∈ [{}, {}] are above the noise floor; need {MIN_FIT_POINTS}",
            usable.len(),
            in_window.len(),
            window.tau0_min,
            window.tau0_max
        )));
    }
    let x: Vec<f64> = usable.iter().map(|p| 2.0 * p.tau0).collect();
    let y: Vec<f64> = usable.iter().map(|p| p.c_value.ln()).collect();
    let w = weights_for(&usable, |p| p.std_error / p.c_value);
    let line = weighted_line(&x, &y, w.as_deref())?;
    let amplitude = line.intercept.exp();
    // (A, Γ) = (e^a, −s)
    let cov = [
        [amplitude * amplitude * line.cov[0][0], -amplitude * line.cov[0][1]],
        [-amplitude * line.cov[1][0], line.cov[1][1]],
    ];
    Ok(RateFit {
        kind: FitKind::ExponentialTail,
        rate: -line.slope,
        rate_std_error: cov[1][1].sqrt(),
        prefactor: amplitude,
        window,
        n_points: usable.len(),
        residual_rms: line.residual_rms,
        weighted: w.is_some(),
        covariance: cov,
    })
}

pub fn fit_exponential_tail(curve: &CoherenceCurve, window: FitWindow) -> Result<RateFit> {
    fit_exponential_tail_points(&curve.points, window)
}

/// Weighted least squares of `C` against `2τ₀`, reported as `b` and
/// `Γ = −slope/b`.
pub fn fit_linear_early_points(points: &[CoherencePoint], window: FitWindow) -> Result<RateFit> {
    let usable = select(points, &window);
    if usable.len() < MIN_FIT_POINTS {
        return Err(Error::Fit(format!(
            "{} points in tau0 ∈ [{}, {}]; need {MIN_FIT_POINTS}",
            usable.len(),
            window.tau0_min,
            window.tau0_max
        )));
    }
    let x: Vec<f64> = usable.iter().map(|p| 2.0 * p.tau0).collect();
    let y: Vec<f64> = usable.iter().map(|p| p.c_value).collect();
    let w = weights_for(&usable, |p| p.std_error);
    let line = weighted_line(&x, &y, w.as_deref())?;
    let b = line.intercept;
    if !(b > 0.0) {
        return Err(Error::Fit(format!("intercept {b} is not positive")));
    }
    let s = line.slope;
    let rate = -s / b;
    // Jacobian of (b, Γ) with respect to (intercept, slope)
    let jac = [[1.0, 0.0], [s / (b * b), -1.0 / b]];
    let mut cov = [[0.0; 2]; 2];
    for (i, row) in cov.iter_mut().enumerate() {
        for (j, c) in row.iter_mut().enumerate() {
            *c = (0..2)
                .flat_map(|k| (0..2).map(move |l| (k, l)))
                .map(|(k, l)| jac[i][k] * line.cov[k][l] * jac[j][l])
                .sum();
        }
    }
    Ok(RateFit {
        kind: FitKind::LinearEarly,
        rate,
        rate_std_error: cov[1][1].sqrt(),
        prefactor: b,
        window,
        n_points: usable.len(),
        residual_rms: line.residual_rms,
        weighted: w.is_some(),
        covariance: cov,
    })
}

pub fn fit_linear_early(curve: &CoherenceCurve, window: FitWindow) -> Result<RateFit> {
    fit_linear_early_points(&curve.points, window)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::{anderson_weiss, gamma_n, DephasingParams};
    use crate::coherence::Channel;
    use crate::noise::{NoiseModel, NoiseParams};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn pt(tau0: f64, c: f64, se: f64) -> CoherencePoint {
        CoherencePoint {
            tau0,
            c_value: c,
            n_realizations: 200,
            std_error: se,
            channel: Channel::Noninteracting,
        }
    }

    fn grid() -> Vec<f64> {
        (0..=20).map(|k| 1.5 * k as f64).collect()
    }

    #[test]
    fn exact_exponential_recovered() {
        let pts: Vec<_> = grid().into_iter().map(|t| pt(t, (-0.09 * 2.0 * t).exp(), 0.0)).collect();
        let fit = fit_exponential_tail_points(&pts, FitWindow::new(0.0, 30.0)).unwrap();
        assert!((fit.rate - 0.09).abs() < 1e-6);
        assert!((fit.prefactor - 1.0).abs() < 1e-9);
        assert!(!fit.weighted);
    }

    #[test]
    fn exact_line_recovered() {
        let pts: Vec<_> = grid()
            .into_iter()
            .map(|t| pt(t, 0.98 * (1.0 - 2.0 * 0.0012 * t), 0.01))
            .collect();
        let fit = fit_linear_early_points(&pts, FitWindow::new(0.0, 30.0)).unwrap();
        assert!((fit.prefactor - 0.98).abs() < 1e-9);
        assert!((fit.rate - 0.0012).abs() < 1e-9);
        assert!(fit.weighted);
    }

    #[test]
    fn anderson_weiss_tail_gives_gamma_n() {
        let p = DephasingParams::new(18, NoiseModel::new(NoiseParams { j_max: 10, ..NoiseParams::PAPER }).unwrap());
        let pts: Vec<_> = (0..=40)
            .map(|k| k as f64)
            .map(|t| pt(t, anderson_weiss(&p, 2.0 * t), 0.0))
            .collect();
        let fit = fit_exponential_tail_points(&pts, FitWindow::new(20.0, 40.0)).unwrap();
        let gn = gamma_n(&p);
        assert!((fit.rate / gn - 1.0).abs() < 0.02, "{} vs {gn}", fit.rate);
    }

    #[test]
    fn noisy_exponential_within_reported_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let pts: Vec<_> = grid()
            .into_iter()
            .map(|t| {
                let c = (-0.05 * 2.0 * t).exp();
                let xi: f64 = StandardNormal.sample(&mut rng);
                pt(t, c * (1.0 + 0.05 * xi), 0.05 * c)
            })
            .collect();
        let fit = fit_exponential_tail_points(&pts, FitWindow::new(3.0, 30.0)).unwrap();
        assert!((fit.rate - 0.05).abs() < 3.0 * fit.rate_std_error, "{fit:?}");
    }

    #[test]
    fn reported_error_matches_dispersion() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let truth = 0.0012;
        let sigma = 0.004;
        let mut rates = Vec::new();
        let mut reported = 0.0;
        for _ in 0..400 {
            let pts: Vec<_> = grid()
                .into_iter()
                .map(|t| {
                    let xi: f64 = StandardNormal.sample(&mut rng);
                    pt(t, 0.97 * (1.0 - 2.0 * truth * t) + sigma * xi, sigma)
                })
                .collect();
            let fit = fit_linear_early_points(&pts, FitWindow::new(2.0, 30.0)).unwrap();
            rates.push(fit.rate);
            reported = fit.rate_std_error;
        }
        let est = crate::stats::MeanEstimate::from_values(rates.iter().copied());
        let spread = est.std_error * (rates.len() as f64).sqrt();
        let ratio = spread / reported;
        assert!((0.5..2.0).contains(&ratio), "{ratio}");
    }

    #[test]
    fn refusals() {
        let few: Vec<_> = [0.0, 1.0, 2.0].iter().map(|&t| pt(t, 0.9, 0.01)).collect();
        assert!(fit_linear_early_points(&few, FitWindow::new(0.0, 30.0)).is_err());
        assert!(fit_exponential_tail_points(&few, FitWindow::new(0.0, 30.0)).is_err());
        let noisy: Vec<_> = grid().into_iter().map(|t| pt(t, 0.01, 0.01)).collect();
        assert!(matches!(fit_exponential_tail_points(&noisy, FitWindow::new(0.0, 30.0)), Err(Error::Fit(_))));
        let negative: Vec<_> = grid().into_iter().map(|t| pt(t, -1.0 - t, 0.01)).collect();
        assert!(fit_linear_early_points(&negative, FitWindow::new(0.0, 30.0)).is_err());
    }

    #[test]
    fn default_windows() {
        let w = FitWindow::tail(0.25, 40.0);
        assert!((2.0 * w.tau0_min - 12.0).abs() < 1e-12);
        let e = FitWindow::early(crate::spinchain::ChainCouplings::paper().j_eff());
        assert!((e.tau0_min - 2.0 / 0.9909).abs() < 1e-3);
        assert_eq!(e.tau0_max, 30.0);
    }

    proptest! {
        #[test]
        fn fits_are_scale_equivariant(scale in 0.01f64..100.0, rate in 0.001f64..0.05, seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pts: Vec<_> = grid().into_iter().map(|t| {
                let xi: f64 = StandardNormal.sample(&mut rng);
                let c = (-(rate) * 2.0 * t).exp() * (1.0 + 0.01 * xi);
                pt(t, c, 0.01 * c)
            }).collect();
            let scaled: Vec<_> = pts.iter().map(|p| pt(p.tau0, p.c_value * scale, p.std_error * scale)).collect();
            let w = FitWindow::new(0.0, 30.0);
            let (a, b) = (fit_exponential_tail_points(&pts, w).unwrap(), fit_exponential_tail_points(&scaled, w).unwrap());
            prop_assert!((a.rate - b.rate).abs() < 1e-12);
            prop_assert!((b.prefactor / a.prefactor / scale - 1.0).abs() < 1e-10);
            let (a, b) = (fit_linear_early_points(&pts, w).unwrap(), fit_linear_early_points(&scaled, w).unwrap());
            prop_assert!((a.rate - b.rate).abs() < 1e-12);
            prop_assert!((b.prefactor / a.prefactor / scale - 1.0).abs() < 1e-10);
        }
    }
}
