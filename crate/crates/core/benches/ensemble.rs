//! Ensemble throughput: the same work items run sequentially and on the
//! rayon pool. Results are bit-identical; only the wall time differs.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use spin_echo::analytic::cn_curves;
use spin_echo::coherence::{coherence_scan, Channel, ScanConfig};
use spin_echo::dynamics::Kernel;
use spin_echo::noise::{autocorrelation_estimate, NoiseModel, NoiseParams};
use spin_echo::spinchain::ChainCouplings;
use spin_echo::Execution;

const EXECS: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn reduced() -> NoiseParams {
    NoiseParams {
        j_max: NoiseParams::REDUCED_J_MAX,
        ..NoiseParams::PAPER
    }
}

fn interacting(c: &mut Criterion) {
    let config = ScanConfig {
        n_spins: 10,
        couplings: ChainCouplings::paper(),
        noise: reduced(),
        dt: 0.01,
        reversal_error: 0.0,
        master_seed: 7,
        n_realizations: 16,
        kernel: Kernel::Auto,
    };
    let mut g = c.benchmark_group("interacting_point");
    g.sample_size(10);
    for (name, exec) in EXECS {
        g.bench_function(BenchmarkId::new(name, "n10_tau5_16r"), |b| {
            b.iter(|| {
                coherence_scan(&config, Channel::Interacting, &[5.0], 0, exec, &|_, _| None, &mut |_, _| Ok(())).unwrap()
            })
        });
    }
    g.finish();
}

fn noninteracting(c: &mut Criterion) {
    let model = NoiseModel::new(reduced()).unwrap();
    let tau0s: Vec<f64> = (0..=20).map(|k| 1.5 * k as f64).collect();
    let mut g = c.benchmark_group("noninteracting_curves");
    g.sample_size(10);
    for (name, exec) in EXECS {
        g.bench_function(BenchmarkId::new(name, "1000_samples"), |b| {
            b.iter(|| cn_curves(&model, &[-12.0, -18.0], &tau0s, 1000, 7, exec).unwrap())
        });
    }
    g.finish();
}

fn autocorrelation(c: &mut Criterion) {
    let model = NoiseModel::new(reduced()).unwrap();
    let lags: Vec<f64> = (0..=40).map(|k| 0.5 * k as f64).collect();
    let mut g = c.benchmark_group("autocorrelation");
    g.sample_size(10);
    for (name, exec) in EXECS {
        g.bench_function(BenchmarkId::new(name, "200_seeds"), |b| {
            b.iter(|| autocorrelation_estimate(&model, &lags, 200, 7, exec).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, interacting, noninteracting, autocorrelation);
criterion_main!(benches);
