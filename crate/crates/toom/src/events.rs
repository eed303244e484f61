//! The randomness source: a single global Poisson clock with thinning.
//!
//! One exponential clock of rate `L` with a uniform site choice is equal in
//! law to `L` independent rate-one site clocks (Poisson superposition), and
//! generates events in O(1). The auxiliary uniform `u` decides the clock sign
//! by thinning; keeping `u` in the event makes the same stream shareable
//! across coupled replicas.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::params::Params;

/// One clock ring: time, site, thinned sign and the deciding uniform.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Event {
    pub time: f64,
    pub site: usize,
    /// `+1` iff `u < lambda_plus`.
    pub sign: i8,
    pub u: f64,
}

/// Deterministic event source. The full event sequence is a pure function of
/// `(seed, ring_size, lambda_plus)`; inter-event waiting times are exponential
/// with rate `ring_size`, sites are uniform, and `u` is uniform on `[0, 1)`.
#[derive(Clone, Debug)]
pub struct EventStream {
    rng: ChaCha8Rng,
    seed: u64,
    time: f64,
    ring_size: usize,
    lambda_plus: f64,
}

impl EventStream {
    pub fn new(seed: u64, params: &Params) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            seed,
            time: 0.0,
            ring_size: params.ring_size(),
            lambda_plus: params.lambda_plus(),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn current_time(&self) -> f64 {
        self.time
    }

    /// Draw the next event. Time strictly increases.
    #[inline]
    pub fn next_event(&mut self) -> Event {
        // Uniform on the open interval (0, 1) so the exponential variate is
        // strictly positive. Draw order: waiting time, site, thinning uniform.
        let w = ((self.rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64);
        self.time += -w.ln() / self.ring_size as f64;
        let site = self.rng.random_range(0..self.ring_size);
        let u: f64 = self.rng.random();
        Event {
            time: self.time,
            site,
            sign: if u < self.lambda_plus { 1 } else { -1 },
            u,
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for trial `k` of a multi-trial experiment: two splitmix64 rounds over
/// `(master, k)`. Collision-checked in tests; trials never share a stream.
pub fn derive_trial_seed(master: u64, trial: u64) -> u64 {
    splitmix64(master ^ splitmix64(trial.wrapping_add(1)))
}

/// Sub-seed for independent RNG roles inside one trial (initial configuration,
/// event stream, bootstrap, ...).
pub fn derive_role_seed(trial_seed: u64, role: u64) -> u64 {
    splitmix64(trial_seed.wrapping_add(splitmix64(role ^ 0xA076_1D64_78BD_642F)))
}
