//! Spin-½ chain in the computational (S_z) basis.
//!
//! Basis index `b` encodes site `j` as bit `j`; a set bit is spin up
//! (S_z = +½). The XYZ nearest-neighbour Hamiltonian on the periodic chain is
//! applied matrix-free: every bond either flips both of its spins or leaves
//! them alone, so `H·ψ` at index `b` is a diagonal term plus one gathered
//! amplitude `ψ[b ^ mask]` per bond.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::parallel::{for_each_chunk_mut, Execution};

pub type C64 = Complex64;

pub const MIN_SPINS: usize = 2;
pub const MAX_SPINS: usize = 24;
/// Largest chain for which [`dense_hamiltonian`] will allocate.
pub const DENSE_LIMIT: usize = 10;

/// Below this dimension the kernel never splits work across threads.
const PARALLEL_MIN_DIM: usize = 1 << 14;
const KERNEL_CHUNK: usize = 1 << 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Spin {
    Up,
    Down,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SpinBasis {
    n_spins: usize,
}

impl SpinBasis {
    pub fn new(n_spins: usize) -> Result<Self> {
        if !(MIN_SPINS..=MAX_SPINS).contains(&n_spins) {
            return Err(Error::Config(format!(
                "n_spins must lie in [{MIN_SPINS}, {MAX_SPINS}], got {n_spins}"
            )));
        }
        Ok(Self { n_spins })
    }

    pub fn n_spins(&self) -> usize {
        self.n_spins
    }

    pub fn dimension(&self) -> usize {
        1 << self.n_spins
    }

    /// Eigenvalue of M_z on basis index `b`.
    #[inline]
    pub fn magnetization(&self, b: usize) -> f64 {
        b.count_ones() as f64 - self.n_spins as f64 / 2.0
    }

    pub fn all_up_index(&self) -> usize {
        self.dimension() - 1
    }

    pub fn all_down_index(&self) -> usize {
        0
    }

    /// Periodic nearest-neighbour bonds `(j, j+1 mod N)`. A two-site ring has
    /// a single bond.
    pub fn bonds(&self) -> Vec<(usize, usize)> {
        if self.n_spins == 2 {
            return vec![(0, 1)];
        }
        (0..self.n_spins)
            .map(|j| (j, (j + 1) % self.n_spins))
            .collect()
    }
}

/// XYZ nearest-neighbour couplings, with the sign flip used by the echo.
///
/// On reversal each coupling becomes `-J_α (1 + ε ξ_α)`, where `ε` is the
/// reversal error and `ξ_α` are fixed per-run draws.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainCouplings {
    pub j_x: f64,
    pub j_y: f64,
    pub j_z: f64,
    #[serde(default)]
    pub reversed: bool,
    #[serde(default)]
    pub reversal_error: f64,
    #[serde(default)]
    pub reversal_draws: [f64; 3],
}

impl ChainCouplings {
    pub fn new(j_x: f64, j_y: f64, j_z: f64) -> Self {
        Self {
            j_x,
            j_y,
            j_z,
            reversed: false,
            reversal_error: 0.0,
            reversal_draws: [0.0; 3],
        }
    }

    /// J = (−0.47, 0.79, 0.37).
    pub fn paper() -> Self {
        Self::new(-0.47, 0.79, 0.37)
    }

    pub fn zero() -> Self {
        Self::new(0.0, 0.0, 0.0)
    }

    pub fn j_eff(&self) -> f64 {
        (self.j_x * self.j_x + self.j_y * self.j_y + self.j_z * self.j_z).sqrt()
    }

    pub fn with_reversal_error(mut self, epsilon: f64, draws: [f64; 3]) -> Self {
        self.reversal_error = epsilon;
        self.reversal_draws = draws;
        self
    }

    /// The same couplings with the echo flag toggled.
    pub fn reversed(mut self) -> Self {
        self.reversed = !self.reversed;
        self
    }

    /// Couplings actually applied by the kernel.
    pub fn effective(&self) -> [f64; 3] {
        let nominal = [self.j_x, self.j_y, self.j_z];
        if !self.reversed {
            return nominal;
        }
        let mut out = [0.0; 3];
        for a in 0..3 {
            out[a] = -nominal[a] * (1.0 + self.reversal_error * self.reversal_draws[a]);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpinState {
    basis: SpinBasis,
    amplitudes: Vec<C64>,
}

impl SpinState {
    pub fn new(basis: SpinBasis, amplitudes: Vec<C64>) -> Result<Self> {
        if amplitudes.len() != basis.dimension() {
            return Err(Error::DimensionMismatch {
                expected: basis.dimension(),
                actual: amplitudes.len(),
            });
        }
        Ok(Self { basis, amplitudes })
    }

    pub fn zeros(basis: SpinBasis) -> Self {
        Self {
            basis,
            amplitudes: vec![C64::new(0.0, 0.0); basis.dimension()],
        }
    }

    pub fn basis_state(basis: SpinBasis, index: usize) -> Self {
        let mut s = Self::zeros(basis);
        s.amplitudes[index] = C64::new(1.0, 0.0);
        s
    }

    /// `(|↑↑…↑⟩ + |↓↓…↓⟩)/√2`.
    pub fn cat(basis: SpinBasis) -> Self {
        let mut s = Self::zeros(basis);
        let a = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        s.amplitudes[basis.all_up_index()] = a;
        s.amplitudes[basis.all_down_index()] = a;
        s
    }

    pub fn basis(&self) -> SpinBasis {
        self.basis
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub fn amplitudes_mut(&mut self) -> &mut [C64] {
        &mut self.amplitudes
    }

    pub fn into_amplitudes(self) -> Vec<C64> {
        self.amplitudes
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    /// ⟨self|other⟩
    pub fn inner(&self, other: &SpinState) -> Result<C64> {
        if self.basis != other.basis {
            return Err(Error::DimensionMismatch {
                expected: self.amplitudes.len(),
                actual: other.amplitudes.len(),
            });
        }
        Ok(self
            .amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum())
    }

    pub fn normalize(&mut self) {
        let n = self.norm();
        if n > 0.0 {
            let inv = 1.0 / n;
            self.amplitudes.iter_mut().for_each(|a| *a *= inv);
        }
    }
}

/// Operator that can be applied to a state vector: `y = (H_int + field·M_z) x`.
pub trait Generator: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, field: f64, x: &[C64], y: &mut [C64]);
}

#[derive(Debug, Clone, Copy)]
struct Bond {
    i: u32,
    j: u32,
    mask: usize,
}

/// Matrix-free XYZ chain Hamiltonian bound to one set of couplings.
#[derive(Debug, Clone)]
pub struct ChainOperator {
    basis: SpinBasis,
    bonds: Vec<Bond>,
    /// Off-diagonal amplitude indexed by bond disagreement: `[aligned, anti]`.
    transverse: [f64; 2],
    /// Diagonal zz energy indexed the same way.
    longitudinal: [f64; 2],
    exec: Execution,
}

impl ChainOperator {
    pub fn new(basis: SpinBasis, couplings: &ChainCouplings) -> Self {
        let [jx, jy, jz] = couplings.effective();
        let bonds = basis
            .bonds()
            .into_iter()
            .map(|(i, j)| Bond {
                i: i as u32,
                j: j as u32,
                mask: (1 << i) | (1 << j),
            })
            .collect();
        Self {
            basis,
            bonds,
            // aligned pairs: double flip (J_x − J_y)/4; anti-aligned: flip-flop (J_x + J_y)/4
            transverse: [(jx - jy) / 4.0, (jx + jy) / 4.0],
            longitudinal: [jz / 4.0, -jz / 4.0],
            exec: Execution::Parallel,
        }
    }

    pub fn with_execution(mut self, exec: Execution) -> Self {
        self.exec = exec;
        self
    }

    pub fn basis(&self) -> SpinBasis {
        self.basis
    }

    fn apply_chunk(&self, field: f64, x: &[C64], offset: usize, out: &mut [C64]) {
        let half = self.basis.n_spins as f64 / 2.0;
        for (k, y) in out.iter_mut().enumerate() {
            let b = offset + k;
            let mut diag = field * (b.count_ones() as f64 - half);
            let mut re = 0.0;
            let mut im = 0.0;
            for bond in &self.bonds {
                let d = ((b >> bond.i) ^ (b >> bond.j)) & 1;
                diag += self.longitudinal[d];
                let c = self.transverse[d];
                let xs = x[b ^ bond.mask];
                re += c * xs.re;
                im += c * xs.im;
            }
            let xb = x[b];
            *y = C64::new(re + diag * xb.re, im + diag * xb.im);
        }
    }
}

impl Generator for ChainOperator {
    fn dim(&self) -> usize {
        self.basis.dimension()
    }

    fn apply(&self, field: f64, x: &[C64], y: &mut [C64]) {
        assert_eq!(x.len(), self.dim(), "input length");
        assert_eq!(y.len(), self.dim(), "output length");
        let exec = if self.dim() >= PARALLEL_MIN_DIM {
            self.exec
        } else {
            Execution::Sequential
        };
        for_each_chunk_mut(exec, y, KERNEL_CHUNK, |offset, chunk| {
            self.apply_chunk(field, x, offset, chunk)
        });
    }
}

/// Product state from a per-site pattern (`pattern[j]` is site `j`).
pub fn product_state(basis: SpinBasis, pattern: &[Spin]) -> Result<SpinState> {
    if pattern.len() != basis.n_spins() {
        return Err(Error::Config(format!(
            "pattern has {} sites, basis has {}",
            pattern.len(),
            basis.n_spins()
        )));
    }
    let index = pattern
        .iter()
        .enumerate()
        .filter(|(_, s)| **s == Spin::Up)
        .fold(0usize, |acc, (j, _)| acc | (1 << j));
    Ok(SpinState::basis_state(basis, index))
}

/// `H_int·ψ` for the given couplings.
pub fn apply_interaction(state: &SpinState, couplings: &ChainCouplings) -> SpinState {
    let op = ChainOperator::new(state.basis(), couplings);
    let mut out = SpinState::zeros(state.basis());
    op.apply(0.0, state.amplitudes(), out.amplitudes_mut());
    out
}

/// `M_z·ψ`.
pub fn apply_magnetization(state: &SpinState) -> SpinState {
    let basis = state.basis();
    let amplitudes = state
        .amplitudes()
        .iter()
        .enumerate()
        .map(|(b, a)| a * basis.magnetization(b))
        .collect();
    SpinState { basis, amplitudes }
}

/// ⟨ψ|M_z|ψ⟩ (not divided by the norm).
pub fn expectation_mz(state: &SpinState) -> f64 {
    let basis = state.basis();
    state
        .amplitudes()
        .iter()
        .enumerate()
        .map(|(b, a)| a.norm_sqr() * basis.magnetization(b))
        .sum()
}

fn spin_matrices() -> [DMatrix<C64>; 3] {
    // local ordering: index 0 = down, 1 = up
    let z = C64::new(0.0, 0.0);
    let h = C64::new(0.5, 0.0);
    let ih = C64::new(0.0, 0.5);
    let sx = DMatrix::from_row_slice(2, 2, &[z, h, h, z]);
    let sy = DMatrix::from_row_slice(2, 2, &[z, ih, -ih, z]);
    let sz = DMatrix::from_row_slice(2, 2, &[-h, z, z, h]);
    [sx, sy, sz]
}

/// Embeds a single-site operator at `site`; site `n-1` is the most
/// significant Kronecker factor, matching the bit layout of basis indices.
fn site_operator(n_spins: usize, site: usize, op: &DMatrix<C64>) -> DMatrix<C64> {
    embed_operator(n_spins, &[site], op)
}

/// `op` on every site in `sites`, identity elsewhere.
fn embed_operator(n_spins: usize, sites: &[usize], op: &DMatrix<C64>) -> DMatrix<C64> {
    let id = DMatrix::<C64>::identity(2, 2);
    let mut out = DMatrix::<C64>::identity(1, 1);
    for s in (0..n_spins).rev() {
        out = out.kronecker(if sites.contains(&s) { op } else { &id });
    }
    out
}

/// Dense `H_int + h·M_z`, built from Kronecker products. Test oracle only.
pub fn dense_hamiltonian(
    basis: SpinBasis,
    couplings: &ChainCouplings,
    h: f64,
) -> Result<DMatrix<C64>> {
    let n = basis.n_spins();
    if n > DENSE_LIMIT {
        return Err(Error::TooLarge {
            n_spins: n,
            limit: DENSE_LIMIT,
        });
    }
    let dim = basis.dimension();
    let s = spin_matrices();
    let js = couplings.effective();
    let mut hm = DMatrix::<C64>::zeros(dim, dim);
    for (i, j) in basis.bonds() {
        for a in 0..3 {
            // S^a_i S^a_j as one Kronecker product; i ≠ j on every bond
            hm += embed_operator(n, &[i, j], &s[a]) * C64::new(js[a], 0.0);
        }
    }
    for site in 0..n {
        hm += site_operator(n, site, &s[2]) * C64::new(h, 0.0);
    }
    Ok(hm)
}

/// Dense M_z, same construction as [`dense_hamiltonian`].
pub fn dense_magnetization(basis: SpinBasis) -> Result<DMatrix<C64>> {
    dense_hamiltonian(basis, &ChainCouplings::zero(), 1.0)
}
