//! Zero-momentum sector of the periodic chain.
//!
//! The chain Hamiltonian, the uniform field term and the all-up / all-down
//! states are all invariant under cyclic translation, so an echo run never
//! leaves the k = 0 subspace spanned by normalized orbit sums
//! `|O⟩ = |O|^{-1/2} Σ_{s∈O} |s⟩`. Both terms of the Hamiltonian also preserve
//! the parity of the number of up spins. Restricting to that subspace
//! shrinks the vector by roughly `2·N_s` while producing the same physics as
//! the full bitstring kernel in [`crate::spinchain`].
//!
//! The symmetrized hopping pattern is tabulated once per chain length. Its
//! three coupling channels (zz, flip-flop, double flip) are kept separate, so
//! one table serves forward, reversed and perturbed couplings.

use crate::error::{Error, Result};
use crate::parallel::{for_each_chunk_mut, Execution};
use crate::spinchain::{ChainCouplings, Generator, SpinBasis, SpinState, C64};

const NOT_IN_SECTOR: u32 = u32::MAX;
const PARALLEL_MIN_DIM: usize = 1 << 13;
const KERNEL_CHUNK: usize = 1 << 11;

#[derive(Debug, Clone)]
pub struct TranslationSector {
    basis: SpinBasis,
    parity: Option<u32>,
    reps: Vec<usize>,
    orbit_sizes: Vec<u32>,
    /// Full basis index → sector row.
    lookup: Vec<u32>,
    /// Σ over bonds of ±1 (aligned +1, anti-aligned −1) for each row.
    zz_count: Vec<f64>,
    magnetization: Vec<f64>,
    row_start: Vec<usize>,
    cols: Vec<u32>,
    flip_flop: Vec<f64>,
    double_flip: Vec<f64>,
}

fn rotate(b: usize, n: usize, full: usize) -> usize {
    ((b << 1) | (b >> (n - 1))) & full
}

impl TranslationSector {
    /// Sector of all k = 0 states; with `parity = Some(p)` only orbits whose
    /// up-spin count has parity `p` are kept.
    pub fn new(basis: SpinBasis, parity: Option<u32>) -> Self {
        let n = basis.n_spins();
        let dim = basis.dimension();
        let full = dim - 1;

        let mut lookup = vec![NOT_IN_SECTOR; dim];
        let mut reps = Vec::new();
        let mut orbit_sizes = Vec::new();
        // Visiting in ascending order meets each orbit first at its smallest member.
        for b in 0..dim {
            if lookup[b] != NOT_IN_SECTOR {
                continue;
            }
            if let Some(p) = parity {
                if b.count_ones() % 2 != p {
                    continue;
                }
            }
            let row = reps.len() as u32;
            let mut s = b;
            let mut size = 0;
            loop {
                lookup[s] = row;
                size += 1;
                s = rotate(s, n, full);
                if s == b {
                    break;
                }
            }
            reps.push(b);
            orbit_sizes.push(size);
        }

        let bonds: Vec<(usize, usize, usize)> = basis
            .bonds()
            .into_iter()
            .map(|(i, j)| (i, j, (1 << i) | (1 << j)))
            .collect();
        let mut zz_count = Vec::with_capacity(reps.len());
        let mut magnetization = Vec::with_capacity(reps.len());
        let mut row_start = Vec::with_capacity(reps.len() + 1);
        let mut cols = Vec::new();
        let mut flip_flop = Vec::new();
        let mut double_flip = Vec::new();
        let mut entries: Vec<(u32, f64, f64)> = Vec::with_capacity(bonds.len());
        for (row, &r) in reps.iter().enumerate() {
            let mut zz = 0.0;
            entries.clear();
            for &(i, j, mask) in &bonds {
                let anti = ((r >> i) ^ (r >> j)) & 1 == 1;
                zz += if anti { -1.0 } else { 1.0 };
                let col = lookup[r ^ mask];
                debug_assert_ne!(col, NOT_IN_SECTOR);
                let w = (orbit_sizes[row] as f64 / orbit_sizes[col as usize] as f64).sqrt();
                let (ff, df) = if anti { (w, 0.0) } else { (0.0, w) };
                match entries.iter_mut().find(|e| e.0 == col) {
                    Some(e) => {
                        e.1 += ff;
                        e.2 += df;
                    }
                    None => entries.push((col, ff, df)),
                }
            }
            entries.sort_by_key(|e| e.0);
            row_start.push(cols.len());
            for &(c, ff, df) in &entries {
                cols.push(c);
                flip_flop.push(ff);
                double_flip.push(df);
            }
            zz_count.push(zz);
            magnetization.push(basis.magnetization(r));
        }
        row_start.push(cols.len());

        Self {
            basis,
            parity,
            reps,
            orbit_sizes,
            lookup,
            zz_count,
            magnetization,
            row_start,
            cols,
            flip_flop,
            double_flip,
        }
    }

    /// Smallest sector holding `state`: the parity filter is applied when the
    /// state's support has a single up-spin parity.
    pub fn for_state(state: &SpinState) -> Self {
        let mut seen = [false; 2];
        for (b, a) in state.amplitudes().iter().enumerate() {
            if a.norm_sqr() > 0.0 {
                seen[(b.count_ones() % 2) as usize] = true;
            }
        }
        let parity = match seen {
            [true, false] => Some(0),
            [false, true] => Some(1),
            _ => None,
        };
        Self::new(state.basis(), parity)
    }

    pub fn basis(&self) -> SpinBasis {
        self.basis
    }

    pub fn parity(&self) -> Option<u32> {
        self.parity
    }

    pub fn dim(&self) -> usize {
        self.reps.len()
    }

    pub fn representatives(&self) -> &[usize] {
        &self.reps
    }

    pub fn orbit_size(&self, row: usize) -> u32 {
        self.orbit_sizes[row]
    }

    pub fn magnetization(&self) -> &[f64] {
        &self.magnetization
    }

    /// Sector row containing full-basis index `b`, if any.
    pub fn row_of(&self, b: usize) -> Option<usize> {
        match self.lookup[b] {
            NOT_IN_SECTOR => None,
            r => Some(r as usize),
        }
    }

    /// Projects `state` onto the sector; fails if the discarded part has norm
    /// above `tol`.
    pub fn embed(&self, state: &SpinState, tol: f64) -> Result<Vec<C64>> {
        if state.basis() != self.basis {
            return Err(Error::DimensionMismatch {
                expected: self.basis.dimension(),
                actual: state.basis().dimension(),
            });
        }
        let mut out = vec![C64::new(0.0, 0.0); self.dim()];
        let mut outside = 0.0;
        for (b, a) in state.amplitudes().iter().enumerate() {
            match self.lookup[b] {
                NOT_IN_SECTOR => outside += a.norm_sqr(),
                r => out[r as usize] += a,
            }
        }
        for (x, &size) in out.iter_mut().zip(&self.orbit_sizes) {
            *x /= (size as f64).sqrt();
        }
        let kept: f64 = out.iter().map(|x| x.norm_sqr()).sum();
        let residual = (outside + (state.norm_sqr() - kept).max(0.0)).sqrt();
        if residual > tol {
            return Err(Error::OutsideSector { residual });
        }
        Ok(out)
    }

    /// Expands sector amplitudes back onto the full bitstring basis.
    pub fn lift(&self, amplitudes: &[C64]) -> Result<SpinState> {
        if amplitudes.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: amplitudes.len(),
            });
        }
        let mut full = SpinState::zeros(self.basis);
        for (b, slot) in full.amplitudes_mut().iter_mut().enumerate() {
            let r = self.lookup[b];
            if r != NOT_IN_SECTOR {
                let r = r as usize;
                *slot = amplitudes[r] / (self.orbit_sizes[r] as f64).sqrt();
            }
        }
        Ok(full)
    }

    pub fn operator(&self, couplings: &ChainCouplings) -> SectorOperator<'_> {
        let [jx, jy, jz] = couplings.effective();
        let ff = (jx + jy) / 4.0;
        let df = (jx - jy) / 4.0;
        let weights = self
            .flip_flop
            .iter()
            .zip(&self.double_flip)
            .map(|(a, b)| ff * a + df * b)
            .collect();
        let diagonal = self.zz_count.iter().map(|z| jz / 4.0 * z).collect();
        SectorOperator {
            sector: self,
            diagonal,
            weights,
            exec: Execution::Parallel,
        }
    }
}

/// Sector Hamiltonian bound to one set of couplings.
#[derive(Debug, Clone)]
pub struct SectorOperator<'a> {
    sector: &'a TranslationSector,
    diagonal: Vec<f64>,
    weights: Vec<f64>,
    exec: Execution,
}

impl SectorOperator<'_> {
    pub fn with_execution(mut self, exec: Execution) -> Self {
        self.exec = exec;
        self
    }

    fn apply_chunk(&self, field: f64, x: &[C64], offset: usize, out: &mut [C64]) {
        let s = self.sector;
        for (k, y) in out.iter_mut().enumerate() {
            let row = offset + k;
            let d = self.diagonal[row] + field * s.magnetization[row];
            let xr = x[row];
            let mut re = d * xr.re;
            let mut im = d * xr.im;
            for e in s.row_start[row]..s.row_start[row + 1] {
                let w = self.weights[e];
                let xc = x[s.cols[e] as usize];
                re += w * xc.re;
                im += w * xc.im;
            }
            *y = C64::new(re, im);
        }
    }
}

impl Generator for SectorOperator<'_> {
    fn dim(&self) -> usize {
        self.sector.dim()
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spinchain::ChainOperator;

    fn necklaces(n: usize) -> usize {
        // Burnside: (1/n) Σ_{d|n} φ(d) 2^{n/d}
        let phi = |mut m: usize| {
            let mut r = m;
            let mut p = 2;
            while p * p <= m {
                if m % p == 0 {
                    while m % p == 0 {
                        m /= p;
                    }
                    r -= r / p;
                }
                p += 1;
            }
            if m > 1 {
                r -= r / m;
            }
            r
        };
        (1..=n).filter(|d| n % d == 0).map(|d| phi(d) << (n / d)).sum::<usize>() / n
    }

    #[test]
    fn orbit_count_matches_burnside() {
        for n in 2..=12 {
            let s = TranslationSector::new(SpinBasis::new(n).unwrap(), None);
            assert_eq!(s.dim(), necklaces(n), "n={n}");
            let total: u32 = (0..s.dim()).map(|r| s.orbit_size(r)).sum();
            assert_eq!(total as usize, 1 << n);
        }
    }

    #[test]
    fn symmetrized_operator_is_symmetric() {
        let s = TranslationSector::new(SpinBasis::new(8).unwrap(), Some(0));
        let op = s.operator(&ChainCouplings::paper());
        let d = s.dim();
        let mut m = vec![vec![0.0; d]; d];
        let mut x = vec![C64::new(0.0, 0.0); d];
        let mut y = x.clone();
        for c in 0..d {
            x.iter_mut().for_each(|v| *v = C64::new(0.0, 0.0));
            x[c] = C64::new(1.0, 0.0);
            op.apply(0.3, &x, &mut y);
            for r in 0..d {
                m[r][c] = y[r].re;
            }
        }
        for r in 0..d {
            for c in 0..d {
                assert!((m[r][c] - m[c][r]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn agrees_with_full_kernel_on_invariant_states() {
        for n in [3, 4, 6, 9] {
            let basis = SpinBasis::new(n).unwrap();
            let start = SpinState::cat(basis);
            let sector = TranslationSector::for_state(&start);
            let x = sector.embed(&start, 1e-12).unwrap();
            let c = ChainCouplings::paper().with_reversal_error(0.2, [0.3, -1.1, 0.7]).reversed();
            let mut y = vec![C64::new(0.0, 0.0); sector.dim()];
            sector.operator(&c).apply(0.05, &x, &mut y);
            // H applied twice to reach generic k = 0 states
            let mut y2 = y.clone();
            sector.operator(&c).apply(0.05, &y, &mut y2);

            let full = ChainOperator::new(basis, &c);
            let mut f = vec![C64::new(0.0, 0.0); basis.dimension()];
            full.apply(0.05, start.amplitudes(), &mut f);
            let mut f2 = f.clone();
            full.apply(0.05, &f, &mut f2);

            let lifted = sector.lift(&y2).unwrap();
            let err: f64 = lifted
                .amplitudes()
                .iter()
                .zip(&f2)
                .map(|(a, b)| (a - b).norm_sqr())
                .sum::<f64>()
                .sqrt();
            assert!(err < 1e-13, "n={n} err={err}");
        }
    }

    #[test]
    fn embed_rejects_non_invariant_states() {
        let basis = SpinBasis::new(4).unwrap();
        let s = SpinState::basis_state(basis, 0b0001);
        let sector = TranslationSector::new(basis, None);
        assert!(matches!(sector.embed(&s, 1e-9), Err(Error::OutsideSector { .. })));
        let odd = TranslationSector::new(basis, Some(1));
        assert!(odd.embed(&SpinState::cat(basis), 1e-9).is_err());
    }

    #[test]
    fn odd_chain_cat_spans_both_parities() {
        let basis = SpinBasis::new(5).unwrap();
        let sector = TranslationSector::for_state(&SpinState::cat(basis));
        assert_eq!(sector.parity(), None);
        let even = TranslationSector::for_state(&SpinState::cat(SpinBasis::new(6).unwrap()));
        assert_eq!(even.parity(), Some(0));
    }
}
