//! Coherence measure `C(2τ₀) = 2|⟨c₁* c₂⟩|` over noise realizations.
//!
//! The modulus is taken after the ensemble average: per-realization
//! products can all have modulus ½ while their phases cancel.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::analytic::cn_curves;
use crate::dynamics::{EchoRunRecord, EchoRunner, EchoSchedule, EvolveOptions, Kernel};
use crate::error::{Error, Result};
use crate::harness::output::fmt_f64;
use crate::noise::{NoiseModel, NoiseParams, NoiseSeed};
use crate::parallel::{try_map_indexed, Execution};
use crate::spinchain::{ChainCouplings, SpinBasis, SpinState, C64};
use crate::stats::{bootstrap_std, complex_mean};

pub const BOOTSTRAP_RESAMPLES: usize = 1000;
const BOOTSTRAP_SEED: u64 = 0xb007_57a9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Interacting,
    Noninteracting,
}

impl Channel {
    pub fn as_str(&self) -> &'static str {
        match self {
            Channel::Interacting => "interacting",
            Channel::Noninteracting => "noninteracting",
        }
    }
}

impl std::str::FromStr for Channel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "interacting" => Ok(Channel::Interacting),
            "noninteracting" => Ok(Channel::Noninteracting),
            other => Err(Error::Config(format!("unknown channel '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoherencePoint {
    pub tau0: f64,
    pub c_value: f64,
    pub n_realizations: usize,
    pub std_error: f64,
    pub channel: Channel,
}

/// Inputs shared by every point of a scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanConfig {
    pub n_spins: usize,
    pub couplings: ChainCouplings,
    pub noise: NoiseParams,
    pub dt: f64,
    pub reversal_error: f64,
    pub master_seed: u64,
    pub n_realizations: usize,
    pub kernel: Kernel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoherenceCurve {
    pub channel: Channel,
    pub parameters: ScanConfig,
    pub points: Vec<CoherencePoint>,
}

impl CoherenceCurve {
    pub fn new(channel: Channel, parameters: ScanConfig, points: Vec<CoherencePoint>) -> Result<Self> {
        if points.iter().any(|p| p.channel != channel) {
            return Err(Error::Ensemble("curve mixes channels".into()));
        }
        if points.windows(2).any(|w| !(w[1].tau0 > w[0].tau0)) {
            return Err(Error::Ensemble("tau0 must be strictly increasing".into()));
        }
        Ok(Self {
            channel,
            parameters,
            points,
        })
    }

    /// CSV with columns `tau0,c_value,std_error,n_realizations,channel`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_points_csv(&self.points, out)
    }
}

pub fn write_points_csv<W: Write>(points: &[CoherencePoint], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["tau0", "c_value", "std_error", "n_realizations", "channel"])?;
    for p in points {
        w.write_record([
            fmt_f64(p.tau0),
            fmt_f64(p.c_value),
            fmt_f64(p.std_error),
            p.n_realizations.to_string(),
            p.channel.as_str().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_points_csv<R: std::io::Read>(input: R) -> Result<Vec<CoherencePoint>> {
    #[derive(Deserialize)]
    struct Row {
        tau0: f64,
        c_value: f64,
        std_error: f64,
        n_realizations: usize,
        channel: Channel,
    }
    let mut r = csv::Reader::from_reader(input);
    r.deserialize::<Row>()
        .map(|row| {
            let row = row?;
            Ok(CoherencePoint {
                tau0: row.tau0,
                c_value: row.c_value,
                std_error: row.std_error,
                n_realizations: row.n_realizations,
                channel: row.channel,
            })
        })
        .collect()
}

/// `2|mean(products)|` with a bootstrap standard error. Products are
/// ordered by seed before summation, so the result does not depend on the
/// order in which realizations finished.
pub fn coherence_from_products(
    tau0: f64,
    channel: Channel,
    mut products: Vec<(NoiseSeed, C64)>,
) -> CoherencePoint {
    products.sort_by_key(|p| p.0);
    let values: Vec<C64> = products.into_iter().map(|p| p.1).collect();
    let c_value = 2.0 * complex_mean(&values).norm();
    let std_error = bootstrap_std(&values, BOOTSTRAP_RESAMPLES, BOOTSTRAP_SEED, |s| {
        2.0 * complex_mean(s).norm()
    });
    CoherencePoint {
        tau0,
        c_value,
        n_realizations: values.len(),
        std_error,
        channel,
    }
}

pub fn coherence_from_ensemble(records: &[EchoRunRecord]) -> Result<CoherencePoint> {
    if records.len() < 2 {
        return Err(Error::Ensemble(format!("need at least 2 records, got {}", records.len())));
    }
    let setup = &records[0].setup;
    if records.iter().any(|r| &r.setup != setup) {
        return Err(Error::Ensemble("records were produced with different parameters".into()));
    }
    let mut seeds: Vec<NoiseSeed> = records.iter().map(|r| r.seed).collect();
    seeds.sort();
    seeds.dedup();
    if seeds.len() != records.len() {
        return Err(Error::Ensemble("records share noise seeds".into()));
    }
    Ok(coherence_from_products(
        setup.schedule.tau0,
        Channel::Interacting,
        records.iter().map(|r| (r.seed, r.coherence_product())).collect(),
    ))
}

/// Called for each τ₀ index before it is computed; returning a point skips
/// the computation.
pub type ExistingPoint<'a> = &'a (dyn Fn(usize, f64) -> Option<CoherencePoint> + Sync);
/// Called once per finished point, in grid order.
pub type PointSink<'a> = &'a mut dyn FnMut(usize, &CoherencePoint) -> Result<()>;

/// Computes `C(2τ₀)` on `tau0_grid` for one channel.
///
/// Interacting realizations use seeds `(master_seed, τ₀ index, realization)`.
/// The noninteracting channel evaluates the phase average with one set of
/// draws shared by the whole grid.
pub fn coherence_scan(
    config: &ScanConfig,
    channel: Channel,
    tau0_grid: &[f64],
    noninteracting_samples: usize,
    exec: Execution,
    existing: ExistingPoint<'_>,
    sink: PointSink<'_>,
) -> Result<CoherenceCurve> {
    let model = NoiseModel::new(config.noise)?;
    let period = model.period();
    if let Some(max) = tau0_grid.iter().copied().reduce(f64::max) {
        if 2.0 * max >= period {
            return Err(Error::Schedule(format!("2·tau0 = {} reaches the noise period {period}", 2.0 * max)));
        }
    }
    let basis = SpinBasis::new(config.n_spins)?;
    let mut points = Vec::with_capacity(tau0_grid.len());
    match channel {
        Channel::Interacting => {
            if config.n_realizations < 2 {
                return Err(Error::Config("need at least 2 realizations".into()));
            }
            // validate the whole grid before spending time on any point
            let schedules: Vec<EchoSchedule> = tau0_grid
                .iter()
                .map(|&tau0| EchoSchedule::echo(tau0, config.dt).with_reversal_error(config.reversal_error))
                .collect();
            for s in &schedules {
                s.validate(config.n_spins, &config.couplings, &config.noise)?;
            }
            let initial = SpinState::cat(basis);
            let options = EvolveOptions {
                kernel: config.kernel,
                exec,
                ..EvolveOptions::lean()
            };
            for (i, schedule) in schedules.iter().enumerate() {
                let point = match existing(i, schedule.tau0) {
                    Some(p) => p,
                    None => {
                        let runner = EchoRunner::new(&initial, &config.couplings, &model, schedule, options)?;
                        let records = try_map_indexed(exec, config.n_realizations, |r| {
                            runner.run(NoiseSeed::item(config.master_seed, i as u32, r as u32))
                        })
                        .map_err(|e| Error::ScanAborted {
                            completed: points.len(),
                            source: Box::new(e),
                        })?;
                        coherence_from_ensemble(&records)?
                    }
                };
                sink(i, &point)?;
                points.push(point);
            }
        }
        Channel::Noninteracting => {
            let todo: Vec<usize> = (0..tau0_grid.len())
                .filter(|&i| existing(i, tau0_grid[i]).is_none())
                .collect();
            let taus: Vec<f64> = todo.iter().map(|&i| tau0_grid[i]).collect();
            let fresh = if taus.is_empty() {
                Vec::new()
            } else {
                cn_curves(
                    &model,
                    &[-(config.n_spins as f64)],
                    &taus,
                    noninteracting_samples,
                    config.master_seed,
                    exec,
                )?
                .remove(0)
            };
            let mut fresh = fresh.into_iter();
            for (i, &tau0) in tau0_grid.iter().enumerate() {
                let point = match existing(i, tau0) {
                    Some(p) => p,
                    None => fresh.next().expect("one fresh point per missing index"),
                };
                sink(i, &point)?;
                points.push(point);
            }
        }
    }
    CoherenceCurve::new(channel, config.clone(), points)
}

/// τ₀ = 0, 1.5, …, 30.
pub fn default_tau0_grid() -> Vec<f64> {
    (0..=20).map(|k| 1.5 * k as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{EchoSetup, InitialState};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn setup(tau0: f64) -> EchoSetup {
        EchoSetup {
            n_spins: 4,
            couplings: ChainCouplings::paper(),
            noise: NoiseParams::PAPER,
            schedule: EchoSchedule::echo(tau0, 0.01),
            initial: InitialState::Cat,
            kernel: Kernel::Auto,
            renormalize: false,
        }
    }

    fn record(tau0: f64, stream: u64, c1: C64, c2: C64) -> EchoRunRecord {
        EchoRunRecord {
            setup: setup(tau0),
            seed: NoiseSeed::new(0, stream),
            times: vec![],
            mz_series: vec![],
            norm_series: vec![],
            final_state: None,
            c1,
            c2,
            c_phi_sq: 1.0 - c1.norm_sqr() - c2.norm_sqr(),
        }
    }

    #[test]
    fn initial_condition_is_fully_coherent() {
        let a = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        let recs: Vec<_> = (0..5).map(|s| record(0.0, s, a, a)).collect();
        let p = coherence_from_ensemble(&recs).unwrap();
        assert!((p.c_value - 1.0).abs() < 1e-15);
        assert_eq!(p.n_realizations, 5);
    }

    #[test]
    fn random_phasors_cancel() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let a = std::f64::consts::FRAC_1_SQRT_2;
        let recs: Vec<_> = (0..10_000)
            .map(|s| {
                let th = std::f64::consts::TAU * rng.random::<f64>();
                record(5.0, s, C64::new(a, 0.0), C64::from_polar(a, th))
            })
            .collect();
        let p = coherence_from_ensemble(&recs).unwrap();
        assert!(p.c_value <= 0.02, "{}", p.c_value);
        // modulus-of-mean, not mean-of-modulus (which would be 1)
        let mean_modulus: f64 = recs.iter().map(|r| 2.0 * r.coherence_product().norm()).sum::<f64>() / recs.len() as f64;
        assert!(mean_modulus > 0.99);
        assert!(mean_modulus > p.c_value + 0.5);
    }

    #[test]
    fn shuffling_does_not_change_the_value() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut recs: Vec<_> = (0..200)
            .map(|s| {
                let th = rng.random::<f64>();
                record(5.0, s, C64::new(0.7, 0.01), C64::from_polar(0.7, th))
            })
            .collect();
        let a = coherence_from_ensemble(&recs).unwrap();
        recs.reverse();
        recs.swap(3, 150);
        let b = coherence_from_ensemble(&recs).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn ensemble_preconditions() {
        let a = C64::new(0.7, 0.0);
        assert!(coherence_from_ensemble(&[record(1.0, 0, a, a)]).is_err());
        assert!(coherence_from_ensemble(&[record(1.0, 0, a, a), record(2.0, 1, a, a)]).is_err());
        assert!(coherence_from_ensemble(&[record(1.0, 0, a, a), record(1.0, 0, a, a)]).is_err());
    }

    #[test]
    fn error_shrinks_with_ensemble_size() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a = std::f64::consts::FRAC_1_SQRT_2;
        let recs: Vec<_> = (0..800)
            .map(|s| {
                let th = 0.8 * (rng.random::<f64>() - 0.5);
                record(5.0, s, C64::new(a, 0.0), C64::from_polar(a, th))
            })
            .collect();
        let small = coherence_from_ensemble(&recs[..200]).unwrap();
        let big = coherence_from_ensemble(&recs).unwrap();
        let ratio = small.std_error / big.std_error;
        assert!((1.6..2.5).contains(&ratio), "{ratio}");
        assert!(small.c_value <= 1.0 + 3.0 * small.std_error);
    }

    #[test]
    fn curve_requires_increasing_tau() {
        let cfg = ScanConfig {
            n_spins: 4,
            couplings: ChainCouplings::paper(),
            noise: NoiseParams::PAPER,
            dt: 0.01,
            reversal_error: 0.0,
            master_seed: 0,
            n_realizations: 2,
            kernel: Kernel::Auto,
        };
        let p = |tau0| CoherencePoint { tau0, c_value: 1.0, n_realizations: 2, std_error: 0.0, channel: Channel::Interacting };
        assert!(CoherenceCurve::new(Channel::Interacting, cfg.clone(), vec![p(1.0), p(1.0)]).is_err());
        assert!(CoherenceCurve::new(Channel::Noninteracting, cfg.clone(), vec![p(1.0)]).is_err());
        assert!(CoherenceCurve::new(Channel::Interacting, cfg, vec![p(0.0), p(1.0)]).is_ok());
    }

    #[test]
    fn csv_round_trip() {
        let pts = vec![
            CoherencePoint { tau0: 0.0, c_value: 1.0, n_realizations: 3, std_error: 0.0, channel: Channel::Noninteracting },
            CoherencePoint { tau0: 1.5, c_value: 0.123456789012345678, n_realizations: 3, std_error: 1e-3, channel: Channel::Noninteracting },
        ];
        let mut buf = Vec::new();
        write_points_csv(&pts, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("tau0,c_value,std_error,n_realizations,channel\n"));
        assert_eq!(read_points_csv(&buf[..]).unwrap(), pts);
    }
}
