//! Property tests for the kernels, the integrator and the noise model.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use spin_echo::dynamics::{rk4_step, EchoSchedule, EvolveOptions, Kernel, evolve};
use spin_echo::noise::{NoiseModel, NoiseParams, NoiseSeed};
use spin_echo::sector::TranslationSector;
use spin_echo::spinchain::{
    dense_hamiltonian, expectation_mz, ChainCouplings, ChainOperator, Generator, SpinBasis, SpinState, C64,
};

fn random_amplitudes(dim: usize, seed: u64) -> Vec<C64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v: Vec<C64> = (0..dim)
        .map(|_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
        .collect();
    let n = v.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    v.into_iter().map(|a| a / n).collect()
}

fn apply(op: &dyn Generator, h: f64, x: &[C64]) -> Vec<C64> {
    let mut y = vec![C64::new(0.0, 0.0); x.len()];
    op.apply(h, x, &mut y);
    y
}

fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn couplings() -> impl Strategy<Value = ChainCouplings> {
    (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0).prop_map(|(x, y, z)| ChainCouplings::new(x, y, z))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn matrix_free_matches_dense(n in 2usize..=7, c in couplings(), h in -1.0f64..1.0, seed in any::<u64>()) {
        let basis = SpinBasis::new(n).unwrap();
        let x = random_amplitudes(basis.dimension(), seed);
        let y = apply(&ChainOperator::new(basis, &c), h, &x);
        let d = dense_hamiltonian(basis, &c, h).unwrap() * nalgebra::DVector::from_column_slice(&x);
        let err: f64 = y.iter().zip(d.iter()).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
        prop_assert!(err <= 1e-12 * d.norm().max(1.0));
    }

    #[test]
    fn hamiltonian_is_hermitian(n in 2usize..=10, c in couplings(), h in -1.0f64..1.0, s1 in any::<u64>(), s2 in any::<u64>()) {
        let basis = SpinBasis::new(n).unwrap();
        let op = ChainOperator::new(basis, &c);
        let x = random_amplitudes(basis.dimension(), s1);
        let y = random_amplitudes(basis.dimension(), s2);
        let lhs = dot(&x, &apply(&op, h, &y));
        let rhs = dot(&apply(&op, h, &x), &y);
        prop_assert!((lhs - rhs).norm() < 1e-12);
    }

    #[test]
    fn sector_kernel_matches_full_kernel(n in 3usize..=10, c in couplings(), h in -1.0f64..1.0, seed in any::<u64>(), parity in prop::option::of(0u32..2)) {
        let basis = SpinBasis::new(n).unwrap();
        let sector = TranslationSector::new(basis, parity);
        let v = random_amplitudes(sector.dim(), seed);
        let lifted = sector.lift(&v).unwrap();
        let full = apply(&ChainOperator::new(basis, &c), h, lifted.amplitudes());
        let reduced = sector.lift(&apply(&sector.operator(&c), h, &v)).unwrap();
        let err: f64 = full.iter().zip(reduced.amplitudes()).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
        prop_assert!(err < 1e-12);
    }

    #[test]
    fn xx_equals_yy_conserves_magnetization(n in 2usize..=8, j in -1.0f64..1.0, jz in -1.0f64..1.0, h in -1.0f64..1.0, seed in any::<u64>()) {
        let basis = SpinBasis::new(n).unwrap();
        let op = ChainOperator::new(basis, &ChainCouplings::new(j, j, jz));
        let x = random_amplitudes(basis.dimension(), seed);
        let hx = apply(&op, h, &x);
        // [H, M_z] = 0  ⇔  ⟨b|H|b'⟩ = 0 whenever M_z differs
        let mz: Vec<C64> = x.iter().enumerate().map(|(b, a)| a * basis.magnetization(b)).collect();
        let h_mz = apply(&op, h, &mz);
        let mz_h: Vec<C64> = hx.iter().enumerate().map(|(b, a)| a * basis.magnetization(b)).collect();
        let err: f64 = h_mz.iter().zip(&mz_h).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
        prop_assert!(err < 1e-12);
    }

    #[test]
    fn rk4_step_nearly_preserves_norm(n in 2usize..=8, c in couplings(), seed in any::<u64>(), t in 0.0f64..100.0) {
        let basis = SpinBasis::new(n).unwrap();
        let state = SpinState::new(basis, random_amplitudes(basis.dimension(), seed)).unwrap();
        let model = NoiseModel::new(NoiseParams { j_max: 200, ..NoiseParams::PAPER }).unwrap();
        let noise = model.sample(NoiseSeed::new(seed, 0));
        let next = rk4_step(&state, &c, &noise, t, 0.01).unwrap();
        prop_assert!((next.norm() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn kernels_agree_on_noisy_echo(n in 3usize..=8, seed in any::<u64>(), eps in 0.0f64..0.1) {
        let basis = SpinBasis::new(n).unwrap();
        let model = NoiseModel::new(NoiseParams { h_rms: 0.02, j_max: 500, ..NoiseParams::PAPER }).unwrap();
        let schedule = EchoSchedule::echo(1.0, 0.02).with_reversal_error(eps);
        let noise = model.sample(NoiseSeed::new(seed, 1));
        let run = |kernel| {
            evolve(&SpinState::cat(basis), &ChainCouplings::paper(), &noise, &schedule, EvolveOptions { kernel, ..EvolveOptions::default() }).unwrap()
        };
        let (a, b) = (run(Kernel::Full), run(Kernel::Symmetric));
        prop_assert!((a.c1 - b.c1).norm() < 1e-12 && (a.c2 - b.c2).norm() < 1e-12);
        for (x, y) in a.mz_series.iter().zip(&b.mz_series) {
            prop_assert!((x - y).abs() < 1e-11);
        }
    }

    #[test]
    fn field_is_even_in_spectrum_and_bounded(seed in any::<u64>(), t in -500.0f64..500.0) {
        let model = NoiseModel::new(NoiseParams { j_max: 300, ..NoiseParams::PAPER }).unwrap();
        let r = model.sample(NoiseSeed::new(seed, 0));
        // |h(t)| ≤ Σ_j |h_j| over the two-sided comb
        let bound: f64 = (-(model.j_max() as i64)..=model.j_max() as i64).map(|j| model.amplitude(j)).sum();
        prop_assert!(r.evaluate(t).abs() <= bound + 1e-12);
        prop_assert!((r.evaluate(t) - r.evaluate(t + model.period())).abs() < 1e-9);
    }
}

#[test]
fn magnetization_of_basis_states() {
    let basis = SpinBasis::new(6).unwrap();
    assert_eq!(expectation_mz(&SpinState::basis_state(basis, basis.all_up_index())), 3.0);
    assert_eq!(expectation_mz(&SpinState::basis_state(basis, basis.all_down_index())), -3.0);
    assert_eq!(expectation_mz(&SpinState::cat(basis)), 0.0);
}

#[test]
fn truncated_comb_keeps_correlation_within_one_percent() {
    // grid-truncation study: the reduced comb against the full one, t ≤ 100
    let full = NoiseModel::paper();
    let reduced = NoiseModel::new(NoiseParams { j_max: NoiseParams::REDUCED_J_MAX, ..NoiseParams::PAPER }).unwrap();
    let h2 = full.h_rms().powi(2);
    let worst = (0..=1000)
        .map(|k| 0.1 * k as f64)
        .map(|t| (reduced.correlation(t) - full.correlation(t)).abs() / h2)
        .fold(0.0, f64::max);
    assert!(worst < 0.01, "{worst}");
}
