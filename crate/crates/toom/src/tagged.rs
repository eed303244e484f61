//! Tagged push particles.
//!
//! Under the push reading of the dynamics, an executed `sign`-jump from
//! `origin` to `target` advances every `sign`-particle in the block
//! `[origin, target)` by one site and relocates the opposite particle from
//! `target` to `origin`. This preserves any total ordering of same-sign
//! particles, which is what makes the tagged position a clean observable.

use crate::config::SpinConfig;
use crate::dynamics::JumpRecord;
use crate::params::Params;

/// A labeled push particle: winding-aware integer position plus its sign.
/// The position can leave `[0, L)`; displacement, not ring position, is the
/// quantity of interest.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TaggedState {
    position: i64,
    sign: i8,
}

/// Condition the configuration on `spin(site) = sign` and tag the particle
/// there. For a product measure this pointwise assignment realizes the
/// conditioned measure exactly, the other coordinates being independent.
pub fn init_tagged(config: &mut SpinConfig, site: usize, sign: i8) -> TaggedState {
    assert!(site < config.len());
    config.set_spin(site, sign);
    TaggedState {
        position: site as i64,
        sign,
    }
}

impl TaggedState {
    pub fn position_unwrapped(&self) -> i64 {
        self.position
    }

    pub fn sign(&self) -> i8 {
        self.sign
    }

    #[inline]
    pub fn ring_position(&self, ring_size: usize) -> usize {
        self.position.rem_euclid(ring_size as i64) as usize
    }

    /// Update the tagged position for one executed jump.
    ///
    /// For a particle of the same sign as the jump: `+1` if it sits in the
    /// pushed block `[origin, target)`. For the opposite sign: it is pulled
    /// from `target` back to `origin`, a displacement of `-(block_len + 1)`.
    #[inline]
    pub fn apply_jump(&mut self, jump: &JumpRecord, ring_size: usize) {
        if !jump.executed {
            return;
        }
        let ring = self.ring_position(ring_size);
        if jump.sign == self.sign {
            let offset = (ring + ring_size - jump.origin) % ring_size;
            if offset <= jump.block_len {
                self.position += 1;
            }
        } else if ring == jump.target {
            self.position -= jump.block_len as i64 + 1;
        }
    }

    /// Panics if the spin under the tagged particle does not match its sign —
    /// that is a fatal bookkeeping violation, never a recoverable state.
    pub fn assert_coherent(&self, config: &SpinConfig) {
        let ring = self.ring_position(config.len());
        assert_eq!(
            config.spin(ring),
            self.sign,
            "tagged particle at ring site {ring} lost its spin"
        );
    }
}

/// Spins at ring offsets `-k..-1, +1..+k` from the tagged particle, read at
/// its current position.
pub fn environment_view(
    config: &SpinConfig,
    state: &TaggedState,
    k: usize,
) -> Result<Vec<i8>, EnvWindowError> {
    let l = config.len();
    if 2 * k >= l {
        return Err(EnvWindowError { k, ring_size: l });
    }
    let center = state.ring_position(l);
    let mut out = Vec::with_capacity(2 * k);
    for j in (1..=k).rev() {
        out.push(config.spin((center + l - j) % l));
    }
    for j in 1..=k {
        out.push(config.spin((center + j) % l));
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, thiserror::Error)]
#[error("environment window 2*{k} does not fit a ring of {ring_size} sites")]
pub struct EnvWindowError {
    pub k: usize,
    pub ring_size: usize,
}

/// Closed-form drift of a tagged push particle.
///
/// For a `+` particle: `lambda_plus / (1-p) - lambda_minus * (1-p) / p^2`.
/// The `-` case is the sign/density mirror `lambda_minus / p -
/// lambda_plus * p / (1-p)^2`, cross-checked against exact small-cycle
/// enumeration in [`crate::oracle`].
pub fn drift_formula(params: &Params, sign: i8) -> f64 {
    let p = params.p();
    if sign > 0 {
        params.lambda_plus() / (1.0 - p) - params.lambda_minus() * (1.0 - p) / (p * p)
    } else {
        params.lambda_minus() / p - params.lambda_plus() * p / ((1.0 - p) * (1.0 - p))
    }
}

/// Instantaneous mean drift of the tagged particle given the configuration:
/// the rate-weighted sum of displacements over all events that would move it.
///
/// Only two local run lengths matter: `a`, the same-sign run ending at the
/// particle (clock rings anywhere in that run push it right by one), and `b`,
/// the opposite-sign run immediately to its left (a clock at distance `j <= b`
/// pulls it left by `j`). This gives
/// `h = rate(sign) * a - rate(-sign) * b*(b+1)/2`,
/// an O(1) evaluation validated against full event enumeration in tests.
pub fn instantaneous_drift(config: &SpinConfig, state: &TaggedState, params: &Params) -> f64 {
    let l = config.len();
    let sign = state.sign();
    let center = state.ring_position(l);
    debug_assert_eq!(config.spin(center), sign);
    let mut a = 1usize;
    let mut x = if center == 0 { l - 1 } else { center - 1 };
    while x != center && config.spin(x) == sign {
        a += 1;
        x = if x == 0 { l - 1 } else { x - 1 };
    }
    if x == center {
        // Monochrome ring: no opposite particle, nothing can move.
        return 0.0;
    }
    let mut b = 0usize;
    if a == 1 {
        while x != center && config.spin(x) == -sign {
            b += 1;
            x = if x == 0 { l - 1 } else { x - 1 };
        }
        if x == center {
            // All other sites are opposite: the leftward pull wraps to the
            // particle itself, so only b = l - 1 sites are real clocks.
            debug_assert_eq!(b, l - 1);
        }
    }
    params.rate_for(sign) * a as f64
        - params.rate_for(-sign) * (b as f64 * (b as f64 + 1.0) / 2.0)
}

/// Per-sign label bookkeeping for every particle on the ring, used to check
/// that the push dynamics preserves same-sign cyclic order.
#[derive(Clone, Debug)]
pub struct LabelLedger {
    label_at: Vec<u32>,
    sign_of_label: Vec<i8>,
    initial_cycle_plus: Vec<u32>,
    initial_cycle_minus: Vec<u32>,
}

impl LabelLedger {
    /// Label every particle with its initial position.
    pub fn new(config: &SpinConfig) -> Self {
        let l = config.len();
        let label_at: Vec<u32> = (0..l as u32).collect();
        let sign_of_label: Vec<i8> = (0..l).map(|x| config.spin(x)).collect();
        let cycle = |sign: i8| -> Vec<u32> {
            (0..l)
                .filter(|&x| config.spin(x) == sign)
                .map(|x| x as u32)
                .collect()
        };
        Self {
            label_at,
            sign_of_label,
            initial_cycle_plus: cycle(1),
            initial_cycle_minus: cycle(-1),
        }
    }

    /// Move labels according to one executed jump: every same-sign label in
    /// the pushed block advances one site, the opposite label at the target
    /// moves to the origin.
    pub fn apply_jump(&mut self, jump: &JumpRecord) {
        if !jump.executed {
            return;
        }
        let l = self.label_at.len();
        let mut carry = self.label_at[jump.origin];
        let mut pos = jump.origin;
        loop {
            pos = if pos + 1 == l { 0 } else { pos + 1 };
            std::mem::swap(&mut carry, &mut self.label_at[pos]);
            if pos == jump.target {
                break;
            }
        }
        self.label_at[jump.origin] = carry;
    }

    pub fn label_at(&self, site: usize) -> u32 {
        self.label_at[site]
    }

    pub fn sign_of_label(&self, label: u32) -> i8 {
        self.sign_of_label[label as usize]
    }

    /// Labels of one sign read in current ring order.
    pub fn cycle_of(&self, sign: i8) -> Vec<u32> {
        self.label_at
            .iter()
            .copied()
            .filter(|&lab| self.sign_of_label[lab as usize] == sign)
            .collect()
    }

    /// True iff for both signs the current cyclic order of labels equals the
    /// initial cyclic order (up to rotation).
    pub fn order_preserved(&self) -> bool {
        let check = |initial: &[u32], sign: i8| -> bool {
            let current = self.cycle_of(sign);
            if current.len() != initial.len() {
                return false;
            }
            if initial.is_empty() {
                return true;
            }
            let Some(start) = current.iter().position(|&lab| lab == initial[0]) else {
                return false;
            };
            (0..current.len()).all(|i| current[(start + i) % current.len()] == initial[i])
        };
        check(&self.initial_cycle_plus, 1) && check(&self.initial_cycle_minus, -1)
    }

    /// True iff the label signs agree site-by-site with the configuration.
    pub fn matches_config(&self, config: &SpinConfig) -> bool {
        (0..config.len()).all(|x| self.sign_of_label[self.label_at[x] as usize] == config.spin(x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{apply_event, find_target};
    use crate::events::{Event, EventStream};
    use crate::params::Params;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn event(site: usize, sign: i8) -> Event {
        Event { time: 0.0, site, sign, u: if sign == 1 { 0.0 } else { 0.9 } }
    }

    #[test]
    fn conditioning_is_pointwise_and_idempotent() {
        let mut c = SpinConfig::from_symbols("--+-");
        let t = init_tagged(&mut c, 0, 1);
        assert_eq!(c.spin(0), 1);
        assert_eq!(t.position_unwrapped(), 0);
        let t2 = init_tagged(&mut c, 0, 1);
        assert_eq!(c.spin(0), 1);
        assert_eq!(t, t2);
        assert_eq!(c.plus_count(), c.recount_plus());
        t.assert_coherent(&c);
    }

    #[test]
    fn push_moves_every_block_member() {
        // spins ++--, +-jump from 0 lands at 2 and pushes block [0, 2).
        for (tag_site, expected) in [(1usize, 2i64), (0usize, 1i64)] {
            let mut c = SpinConfig::from_symbols("++--");
            let mut t = init_tagged(&mut c, tag_site, 1);
            let j = apply_event(&mut c, &event(0, 1));
            t.apply_jump(&j, c.len());
            assert_eq!(t.position_unwrapped(), expected);
            t.assert_coherent(&c);
        }
    }

    #[test]
    fn opposite_jump_pulls_target_back() {
        // spins --+..., −-jump origin 0, target 2, block_len 1: + at 2 → 0.
        let mut c = SpinConfig::from_symbols("--+-");
        let mut t = init_tagged(&mut c, 2, 1);
        let j = apply_event(&mut c, &event(0, -1));
        assert_eq!((j.origin, j.target, j.block_len), (0, 2, 1));
        t.apply_jump(&j, c.len());
        assert_eq!(t.position_unwrapped(), 0);
        t.assert_coherent(&c);
    }

    #[test]
    fn coherence_holds_along_random_trajectories() {
        let params = Params::new(48, 0.4, 0.6, 0.4).unwrap();
        for seed in 0..8u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut config = SpinConfig::sample(&params, &mut rng);
            let site = rng.random_range(0..48);
            let sign = if rng.random::<bool>() { 1 } else { -1 };
            let mut tagged = init_tagged(&mut config, site, sign);
            let mut stream = EventStream::new(seed + 100, &params);
            for _ in 0..20_000 {
                let j = apply_event(&mut config, &stream.next_event());
                tagged.apply_jump(&j, config.len());
                tagged.assert_coherent(&config);
            }
        }
    }

    #[test]
    fn environment_view_reads_current_offsets() {
        let mut c = SpinConfig::from_symbols("-+-");
        let t = init_tagged(&mut c, 1, 1);
        assert_eq!(environment_view(&c, &t, 1).unwrap(), vec![-1, -1]);
        assert!(environment_view(&c, &t, 2).is_err());

        // After the particle moves, offsets follow it.
        let mut c = SpinConfig::from_symbols("+-+-");
        let mut t = init_tagged(&mut c, 0, 1);
        let j = apply_event(&mut c, &event(0, 1));
        t.apply_jump(&j, c.len());
        assert_eq!(t.ring_position(4), 1);
        assert_eq!(environment_view(&c, &t, 1).unwrap(), vec![c.spin(0), c.spin(2)]);
    }

    #[test]
    fn drift_formula_reference_values() {
        let p = Params::new(64, 0.5, 1.0, 0.0).unwrap();
        assert!((drift_formula(&p, 1) - 2.0).abs() < 1e-15);
        let p = Params::new(64, 0.5, 0.5, 0.5).unwrap();
        assert!(drift_formula(&p, 1).abs() < 1e-15);
        assert!(drift_formula(&p, -1).abs() < 1e-15);
        // ± mirror: v_-(λ+, λ-, p) = v_+(λ-, λ+, 1-p).
        let p = Params::new(64, 0.3, 0.7, 0.3).unwrap();
        let mirrored = Params::new(64, 0.7, 0.3, 0.7).unwrap();
        assert!((drift_formula(&p, -1) - drift_formula(&mirrored, 1)).abs() < 1e-15);
    }

    /// Brute-force h: enumerate every (site, sign-of-occupant) event and sum
    /// rate times tagged displacement under the push rules.
    fn enumerated_drift(config: &SpinConfig, state: &TaggedState, params: &Params) -> f64 {
        let l = config.len();
        let center = state.ring_position(l);
        let mut total = 0.0;
        if config.is_monochrome() {
            return 0.0;
        }
        for site in 0..l {
            let sign = config.spin(site);
            let rate = params.rate_for(sign);
            let Some(target) = find_target(config, site, sign) else {
                continue;
            };
            let block_len = (target + l - site - 1) % l;
            if sign == state.sign() {
                let offset = (center + l - site) % l;
                if offset <= block_len {
                    total += rate;
                }
            } else if target == center {
                total -= rate * (block_len as f64 + 1.0);
            }
        }
        total
    }

    #[test]
    fn run_length_drift_matches_event_enumeration() {
        let params = Params::new(24, 0.35, 0.8, 0.2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..300 {
            let mut config = SpinConfig::sample(&params, &mut rng);
            let site = rng.random_range(0..24);
            let sign = if rng.random::<bool>() { 1 } else { -1 };
            let tagged = init_tagged(&mut config, site, sign);
            let fast = instantaneous_drift(&config, &tagged, &params);
            let slow = enumerated_drift(&config, &tagged, &params);
            assert!(
                (fast - slow).abs() < 1e-12,
                "h mismatch: fast {fast} slow {slow} config {:?}",
                config.spins()
            );
        }
    }

    #[test]
    fn labels_shift_by_one_under_a_push() {
        let c = SpinConfig::from_symbols("++--");
        let mut ledger = LabelLedger::new(&c);
        let mut config = c.clone();
        let j = apply_event(&mut config, &event(0, 1));
        ledger.apply_jump(&j);
        // + labels 0 and 1 moved to sites 1 and 2, - label 2 moved to site 0.
        assert_eq!(ledger.label_at(1), 0);
        assert_eq!(ledger.label_at(2), 1);
        assert_eq!(ledger.label_at(0), 2);
        assert!(ledger.order_preserved());
        assert!(ledger.matches_config(&config));
    }

    #[test]
    fn order_never_inverts_along_trajectories() {
        let params = Params::new(64, 0.5, 0.5, 0.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut config = SpinConfig::sample(&params, &mut rng);
        let mut ledger = LabelLedger::new(&config);
        let mut stream = EventStream::new(17, &params);
        for step in 0..30_000 {
            let j = apply_event(&mut config, &stream.next_event());
            ledger.apply_jump(&j);
            if step % 64 == 0 {
                assert!(ledger.order_preserved(), "order inverted at step {step}");
                assert!(ledger.matches_config(&config));
            }
        }
        assert!(ledger.order_preserved());
        assert!(ledger.matches_config(&config));
    }
}
