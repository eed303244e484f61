//! The ring state: a periodic sequence of `±1` spins with a cached plus count.

use rand::Rng;

use crate::params::Params;

/// Spin configuration on a ring. The plus count is maintained incrementally
/// and is invariant under the exchange dynamics (particle conservation).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SpinConfig {
    spins: Vec<i8>,
    plus_count: usize,
}

impl SpinConfig {
    /// Product-Bernoulli sample: each site independently `+1` with probability
    /// `params.p()`.
    pub fn sample<R: Rng + ?Sized>(params: &Params, rng: &mut R) -> Self {
        let p = params.p();
        let spins: Vec<i8> = (0..params.ring_size())
            .map(|_| if rng.random::<f64>() < p { 1 } else { -1 })
            .collect();
        Self::from_spins(spins)
    }

    /// Build from explicit spins. Panics if a value is not `±1` or the ring is
    /// shorter than 2 sites.
    pub fn from_spins(spins: Vec<i8>) -> Self {
        assert!(spins.len() >= 2, "ring must have at least 2 sites");
        assert!(spins.iter().all(|&s| s == 1 || s == -1), "spins must be ±1");
        let plus_count = spins.iter().filter(|&&s| s == 1).count();
        Self { spins, plus_count }
    }

    /// Test-friendly constructor from a `+`/`-` string, e.g. `"++--"`.
    pub fn from_symbols(sym: &str) -> Self {
        Self::from_spins(
            sym.chars()
                .map(|c| match c {
                    '+' => 1,
                    '-' => -1,
                    other => panic!("invalid spin symbol {other:?}"),
                })
                .collect(),
        )
    }

    /// Number of ring sites (always at least 2).
    #[allow(clippy::len_without_is_empty)]
    #[inline]
    pub fn len(&self) -> usize {
        self.spins.len()
    }

    #[inline]
    pub fn spin(&self, site: usize) -> i8 {
        self.spins[site]
    }

    #[inline]
    pub fn spins(&self) -> &[i8] {
        &self.spins
    }

    #[inline]
    pub fn plus_count(&self) -> usize {
        self.plus_count
    }

    /// True if every site carries the same spin.
    pub fn is_monochrome(&self) -> bool {
        self.plus_count == 0 || self.plus_count == self.len()
    }

    /// Force the spin at one site, e.g. to realize a conditioned product
    /// measure. Keeps the plus count consistent.
    pub fn set_spin(&mut self, site: usize, sign: i8) {
        assert!(sign == 1 || sign == -1, "spins must be ±1");
        let old = self.spins[site];
        if old != sign {
            self.spins[site] = sign;
            if sign == 1 {
                self.plus_count += 1;
            } else {
                self.plus_count -= 1;
            }
        }
    }

    /// Swap the spins at two sites. Conserves the plus count by construction.
    #[inline]
    pub(crate) fn exchange(&mut self, a: usize, b: usize) {
        self.spins.swap(a, b);
    }

    /// Recount the pluses from scratch (used by consistency checks).
    pub fn recount_plus(&self) -> usize {
        self.spins.iter().filter(|&&s| s == 1).count()
    }
}
