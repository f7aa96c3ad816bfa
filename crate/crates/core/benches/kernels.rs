//! Hamiltonian application and RK4 steps: full basis vs the zero-momentum
//! sector, sequential vs rayon.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use spin_echo::dynamics::Rk4;
use spin_echo::sector::TranslationSector;
use spin_echo::spinchain::{ChainCouplings, ChainOperator, Generator, SpinBasis, SpinState, C64};
use spin_echo::Execution;

const EXECS: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn apply(c: &mut Criterion) {
    let couplings = ChainCouplings::paper();
    let mut g = c.benchmark_group("apply");
    g.sample_size(20);
    for n in [12, 16, 20] {
        let basis = SpinBasis::new(n).unwrap();
        let x = vec![C64::new(1.0, 0.5); basis.dimension()];
        let mut y = x.clone();
        for (name, exec) in EXECS {
            let op = ChainOperator::new(basis, &couplings).with_execution(exec);
            g.bench_with_input(BenchmarkId::new(format!("full/{name}"), n), &n, |b, _| {
                b.iter(|| op.apply(black_box(0.01), &x, &mut y))
            });
        }
        let sector = TranslationSector::new(basis, Some(0));
        let xs = vec![C64::new(1.0, 0.5); sector.dim()];
        let mut ys = xs.clone();
        for (name, exec) in EXECS {
            let op = sector.operator(&couplings).with_execution(exec);
            g.bench_with_input(BenchmarkId::new(format!("sector/{name}"), n), &n, |b, _| {
                b.iter(|| op.apply(black_box(0.01), &xs, &mut ys))
            });
        }
    }
    g.finish();
}

fn rk4(c: &mut Criterion) {
    let couplings = ChainCouplings::paper();
    let mut g = c.benchmark_group("rk4_step");
    g.sample_size(20);
    for n in [12, 18] {
        let basis = SpinBasis::new(n).unwrap();
        let cat = SpinState::cat(basis);
        for (name, exec) in EXECS {
            let op = ChainOperator::new(basis, &couplings).with_execution(exec);
            let mut psi = cat.amplitudes().to_vec();
            let mut rk = Rk4::new(psi.len());
            g.bench_with_input(BenchmarkId::new(format!("full/{name}"), n), &n, |b, _| {
                b.iter(|| rk.step(&op, &mut psi, [0.0, 0.001, 0.002], 0.01))
            });
        }
        let sector = TranslationSector::for_state(&cat);
        let op = sector.operator(&couplings);
        let mut psi = sector.embed(&cat, 1e-12).unwrap();
        let mut rk = Rk4::new(psi.len());
        g.bench_with_input(BenchmarkId::new("sector", n), &n, |b, _| {
            b.iter(|| rk.step(&op, &mut psi, [0.0, 0.001, 0.002], 0.01))
        });
    }
    g.finish();
}

criterion_group!(benches, apply, rk4);
criterion_main!(benches);
