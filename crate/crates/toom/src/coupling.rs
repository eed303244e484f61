//! Coupled replicas on a shared event stream and the discrepancy front.
//!
//! Two configurations driven by the same clocks and thinning uniforms stay
//! equal once they agree (coalescence is absorbing). Sites where they differ
//! are discrepancies, signed by which replica holds the `+`; discrepancies
//! drift rightward, annihilate in opposite-sign pairs and never multiply.

use std::collections::BTreeSet;

use rand::Rng;

use crate::config::SpinConfig;
use crate::dynamics::{apply_event, JumpRecord};
use crate::events::{derive_role_seed, derive_trial_seed, EventStream};
use crate::params::Params;
use crate::tagged::{init_tagged, TaggedState};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

/// Sample the coupling measure: `first ~ Ber_p`, `second` agrees off `s` and
/// is resampled independently on `s`.
pub fn sample_mu_s<R: Rng + ?Sized>(
    params: &Params,
    s: &[usize],
    rng: &mut R,
) -> (SpinConfig, SpinConfig) {
    let first = SpinConfig::sample(params, rng);
    let mut second = first.clone();
    for &x in s {
        second.set_spin(x, if rng.random::<f64>() < params.p() { 1 } else { -1 });
    }
    (first, second)
}

/// Single-site coupling conditioned on an actual disagreement at `site`:
/// given independence and the conditioning, the pair at `site` is `(+,-)` or
/// `(-,+)` with equal probability. Exact, no rejection loop.
pub fn sample_single_discrepancy<R: Rng + ?Sized>(
    params: &Params,
    site: usize,
    rng: &mut R,
) -> (SpinConfig, SpinConfig) {
    let mut first = SpinConfig::sample(params, rng);
    let mut second = first.clone();
    let first_holds_plus = rng.random::<bool>();
    first.set_spin(site, if first_holds_plus { 1 } else { -1 });
    second.set_spin(site, if first_holds_plus { -1 } else { 1 });
    (first, second)
}

/// Set of disagreement sites, stored as cyclic offsets from an anchor so that
/// leftmost/rightmost queries are a tree lookup. Valid as long as the
/// experiment guarantees nothing wraps past the anchor (the wrap guard).
#[derive(Clone, Debug)]
pub struct DiscrepancyView {
    offsets: BTreeSet<usize>,
    anchor: usize,
    ring_size: usize,
}

impl DiscrepancyView {
    pub fn new(first: &SpinConfig, second: &SpinConfig, anchor: usize) -> Self {
        assert_eq!(first.len(), second.len());
        let mut view = Self {
            offsets: BTreeSet::new(),
            anchor,
            ring_size: first.len(),
        };
        for x in 0..first.len() {
            if first.spin(x) != second.spin(x) {
                view.offsets.insert(view.offset_of(x));
            }
        }
        view
    }

    #[inline]
    fn offset_of(&self, site: usize) -> usize {
        (site + self.ring_size - self.anchor) % self.ring_size
    }

    fn site_of(&self, offset: usize) -> usize {
        (self.anchor + offset) % self.ring_size
    }

    /// Re-examine one site after an event touched it.
    #[inline]
    pub fn refresh_site(&mut self, site: usize, first: &SpinConfig, second: &SpinConfig) {
        let offset = self.offset_of(site);
        if first.spin(site) != second.spin(site) {
            self.offsets.insert(offset);
        } else {
            self.offsets.remove(&offset);
        }
    }

    pub fn count(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    /// Offset of the leftmost discrepancy from the anchor.
    pub fn front_offset(&self) -> Option<usize> {
        self.offsets.first().copied()
    }

    pub fn rightmost_offset(&self) -> Option<usize> {
        self.offsets.last().copied()
    }

    /// Leftmost discrepancy in unwrapped coordinates (anchor + offset).
    pub fn front_unwrapped(&self) -> Option<i64> {
        self.front_offset().map(|o| self.anchor as i64 + o as i64)
    }

    /// Ring positions of all discrepancies, in offset order.
    pub fn positions(&self) -> impl Iterator<Item = usize> + '_ {
        self.offsets.iter().map(|&o| self.site_of(o))
    }

    /// Sign of the discrepancy at `site`: `+` iff the first replica holds the
    /// plus particle.
    pub fn sign_at(first: &SpinConfig, site: usize) -> i8 {
        first.spin(site)
    }

    /// Incremental state must equal recomputation from scratch at all times.
    pub fn matches_recompute(&self, first: &SpinConfig, second: &SpinConfig) -> bool {
        let fresh = Self::new(first, second, self.anchor);
        self.offsets == fresh.offsets
    }
}

/// Two replicas consuming one event stream, with incremental discrepancy
/// tracking and an optional tagged particle on the first replica.
#[derive(Clone, Debug)]
pub struct CoupledPair {
    pub first: SpinConfig,
    pub second: SpinConfig,
    pub stream: EventStream,
    pub view: DiscrepancyView,
    pub tagged: Option<TaggedState>,
}

impl CoupledPair {
    pub fn new(first: SpinConfig, second: SpinConfig, stream: EventStream, anchor: usize) -> Self {
        let view = DiscrepancyView::new(&first, &second, anchor);
        Self { first, second, stream, view, tagged: None }
    }

    /// Condition both replicas on `spin(site) = sign` and tag the particle in
    /// the first replica. The site must lie outside the discrepancy seed so
    /// the replicas still agree there.
    pub fn tag(&mut self, site: usize, sign: i8) {
        let state = init_tagged(&mut self.first, site, sign);
        init_tagged(&mut self.second, site, sign);
        self.view.refresh_site(site, &self.first, &self.second);
        self.tagged = Some(state);
    }

    /// Draw one event and apply it to both replicas with the same site and
    /// sign; the discrepancy view is refreshed on every touched site.
    pub fn step(&mut self) -> (JumpRecord, JumpRecord) {
        let event = self.stream.next_event();
        let ring_size = self.first.len();
        let first_jump = apply_event(&mut self.first, &event);
        let second_jump = apply_event(&mut self.second, &event);
        if let Some(tagged) = &mut self.tagged {
            tagged.apply_jump(&first_jump, ring_size);
        }
        if first_jump.executed {
            self.view.refresh_site(first_jump.origin, &self.first, &self.second);
            self.view.refresh_site(first_jump.target, &self.first, &self.second);
        }
        if second_jump.executed {
            self.view.refresh_site(second_jump.origin, &self.first, &self.second);
            self.view.refresh_site(second_jump.target, &self.first, &self.second);
        }
        (first_jump, second_jump)
    }
}

/// Outcome of one trial of a coupled-front experiment.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct FrontTrial {
    /// Front displacement (offset from the seeding site) at the horizon.
    pub displacement: i64,
    /// Smallest front-minus-tagged gap seen along the trajectory, when a
    /// tagged particle was present. `i64::MAX` when no discrepancy remained.
    pub min_gap: i64,
    /// Relative displacement (front minus tagged) at the horizon.
    pub relative_displacement: i64,
    pub wrapped: bool,
    pub coalesced: bool,
}

/// Empirical tail table for the front-speed experiments.
#[derive(Clone, Debug, Serialize)]
pub struct FrontSpeedReport {
    pub horizon: f64,
    pub trials_requested: usize,
    pub trials_used: usize,
    pub excluded_wrapped: usize,
    pub c_grid: Vec<f64>,
    /// Fraction of valid trials with displacement < c * horizon, per c.
    pub fraction_below: Vec<f64>,
    pub displacements: Vec<i64>,
}

fn wrap_guard(ring_size: usize) -> usize {
    ring_size - ring_size / 8
}

/// Linear displacement of the minimal discrepancy: single-discrepancy
/// coupling, front displacement tail over a grid of speeds `c`.
pub fn front_speed_experiment(
    params: &Params,
    trials: usize,
    horizon: f64,
    c_grid: &[f64],
    master_seed: u64,
) -> FrontSpeedReport {
    let seed_site = params.ring_size() / 2;
    let guard = wrap_guard(params.ring_size());
    let results: Vec<FrontTrial> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let trial_seed = derive_trial_seed(master_seed, trial as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(derive_role_seed(trial_seed, 0));
            let (first, second) = sample_single_discrepancy(params, seed_site, &mut rng);
            let stream = EventStream::new(derive_role_seed(trial_seed, 1), params);
            let mut pair = CoupledPair::new(first, second, stream, seed_site);
            let mut wrapped = false;
            while pair.stream.current_time() <= horizon {
                pair.step();
                if pair.view.rightmost_offset().is_some_and(|o| o >= guard) {
                    wrapped = true;
                    break;
                }
            }
            FrontTrial {
                displacement: pair.view.front_offset().map_or(i64::MAX, |o| o as i64),
                min_gap: i64::MAX,
                relative_displacement: 0,
                wrapped,
                coalesced: pair.view.is_empty(),
            }
        })
        .collect();
    let valid: Vec<&FrontTrial> = results.iter().filter(|t| !t.wrapped).collect();
    let fraction_below = c_grid
        .iter()
        .map(|&c| {
            valid
                .iter()
                .filter(|t| (t.displacement as f64) < c * horizon)
                .count() as f64
                / valid.len().max(1) as f64
        })
        .collect();
    FrontSpeedReport {
        horizon,
        trials_requested: trials,
        trials_used: valid.len(),
        excluded_wrapped: results.len() - valid.len(),
        c_grid: c_grid.to_vec(),
        fraction_below,
        displacements: valid.iter().map(|t| t.displacement).collect(),
    }
}

/// Report for the tagged-gap experiment: the discrepancy front must stay
/// strictly ahead of a tagged particle seeded to its left.
#[derive(Clone, Debug, Serialize)]
pub struct TaggedGapReport {
    pub horizon: f64,
    pub trials_requested: usize,
    pub trials_used: usize,
    pub excluded_wrapped: usize,
    pub min_gaps: Vec<i64>,
    pub c_grid: Vec<f64>,
    /// Fraction of valid trials with relative displacement < c * horizon.
    pub fraction_below: Vec<f64>,
}

/// Seed discrepancies on the arc `[seed_start, seed_start + seed_len)` with a
/// `+`-tagged particle at site 0 (outside the arc, left of all
/// discrepancies), then track the minimal front-to-particle gap.
pub fn tagged_gap_experiment(
    params: &Params,
    trials: usize,
    horizon: f64,
    seed_start: usize,
    seed_len: usize,
    c_grid: &[f64],
    master_seed: u64,
) -> TaggedGapReport {
    let l = params.ring_size();
    assert!(seed_start > 0 && seed_start + seed_len < l, "tag site 0 must stay outside the seed arc");
    let seed_sites: Vec<usize> = (seed_start..seed_start + seed_len).collect();
    // The guard keeps the rightmost discrepancy away from the tagged region
    // near offset l - seed_start (ring site 0).
    let guard = l - seed_start - l / 8;
    let results: Vec<FrontTrial> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let trial_seed = derive_trial_seed(master_seed, trial as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(derive_role_seed(trial_seed, 0));
            let (first, second) = sample_mu_s(params, &seed_sites, &mut rng);
            let stream = EventStream::new(derive_role_seed(trial_seed, 1), params);
            let mut pair = CoupledPair::new(first, second, stream, seed_start);
            pair.tag(0, 1);
            let mut min_gap = i64::MAX;
            let mut wrapped = false;
            let anchor = seed_start as i64;
            if let (Some(front), Some(tag)) = (pair.view.front_unwrapped(), pair.tagged.as_ref()) {
                min_gap = front - tag.position_unwrapped();
            }
            while pair.stream.current_time() <= horizon {
                pair.step();
                let tag = pair.tagged.as_ref().expect("tagged pair");
                if let Some(front) = pair.view.front_unwrapped() {
                    min_gap = min_gap.min(front - tag.position_unwrapped());
                } else {
                    break; // coalesced, gap is +infinity from here on
                }
                let tag_pos = tag.position_unwrapped();
                if pair.view.rightmost_offset().is_some_and(|o| o >= guard)
                    || tag_pos < -((l / 8) as i64)
                {
                    wrapped = true;
                    break;
                }
            }
            let tag_pos = pair.tagged.as_ref().unwrap().position_unwrapped();
            FrontTrial {
                displacement: pair.view.front_offset().map_or(i64::MAX, |o| o as i64),
                min_gap,
                relative_displacement: pair
                    .view
                    .front_unwrapped()
                    .map_or(i64::MAX, |f| f - anchor - tag_pos),
                wrapped,
                coalesced: pair.view.is_empty(),
            }
        })
        .collect();
    let valid: Vec<&FrontTrial> = results.iter().filter(|t| !t.wrapped).collect();
    let fraction_below = c_grid
        .iter()
        .map(|&c| {
            valid
                .iter()
                .filter(|t| t.relative_displacement != i64::MAX
                    && (t.relative_displacement as f64) < c * horizon)
                .count() as f64
                / valid.len().max(1) as f64
        })
        .collect();
    TaggedGapReport {
        horizon,
        trials_requested: trials,
        trials_used: valid.len(),
        excluded_wrapped: results.len() - valid.len(),
        min_gaps: valid.iter().map(|t| t.min_gap).collect(),
        c_grid: c_grid.to_vec(),
        fraction_below,
    }
}

/// Tail table of the front displacement at a fixed time, for comparison with
/// the stretched-exponential speed bound.
#[derive(Clone, Debug, Serialize)]
pub struct MaxSpeedReport {
    pub horizon: f64,
    pub trials_used: usize,
    pub excluded_wrapped: usize,
    pub r_grid: Vec<i64>,
    pub tail_probability: Vec<f64>,
    pub displacements: Vec<i64>,
}

pub fn max_speed_experiment(
    params: &Params,
    trials: usize,
    horizon: f64,
    r_grid: &[i64],
    master_seed: u64,
) -> MaxSpeedReport {
    let report = front_speed_experiment(params, trials, horizon, &[], master_seed);
    let tail_probability = r_grid
        .iter()
        .map(|&r| {
            report
                .displacements
                .iter()
                .filter(|&&d| d >= r)
                .count() as f64
                / report.displacements.len().max(1) as f64
        })
        .collect();
    MaxSpeedReport {
        horizon,
        trials_used: report.trials_used,
        excluded_wrapped: report.excluded_wrapped,
        r_grid: r_grid.to_vec(),
        tail_probability,
        displacements: report.displacements,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::Event;
    use std::collections::BTreeMap;

    fn pair_from(first: &str, second: &str, seed: u64, anchor: usize) -> CoupledPair {
        let a = SpinConfig::from_symbols(first);
        let b = SpinConfig::from_symbols(second);
        let params = Params::new(a.len(), 0.5, 0.5, 0.5).unwrap();
        let stream = EventStream::new(seed, &params);
        CoupledPair::new(a, b, stream, anchor)
    }

    #[test]
    fn empty_seed_gives_identical_replicas_forever() {
        let params = Params::new(64, 0.4, 0.5, 0.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (a, b) = sample_mu_s(&params, &[], &mut rng);
        assert_eq!(a, b);
        let mut pair = CoupledPair::new(a, b, EventStream::new(1, &params), 0);
        for _ in 0..5000 {
            let (j1, j2) = pair.step();
            assert_eq!(j1, j2);
        }
        assert!(pair.view.is_empty());
        assert_eq!(pair.first, pair.second);
    }

    #[test]
    fn single_site_seed_statistics() {
        let params = Params::new(32, 0.3, 0.5, 0.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 20_000;
        let mut discrepant = 0;
        for _ in 0..n {
            let (a, b) = sample_mu_s(&params, &[7], &mut rng);
            let view = DiscrepancyView::new(&a, &b, 7);
            assert!(view.count() <= 1);
            discrepant += usize::from(view.count() == 1);
        }
        // P(disagreement) = 2 p (1-p) = 0.42.
        let freq = discrepant as f64 / n as f64;
        let se = (0.42f64 * 0.58 / n as f64).sqrt();
        assert!((freq - 0.42).abs() < 4.0 * se, "freq {freq}");

        let (a, b) = sample_single_discrepancy(&params, 7, &mut rng);
        let view = DiscrepancyView::new(&a, &b, 7);
        assert_eq!(view.count(), 1);
        assert_eq!(view.front_offset(), Some(0));
    }

    /// Worked single-discrepancy move: the +-event left of the discrepancy
    /// jumps over it in one replica only, relocating the discrepancy to the
    /// landing site of the other replica.
    #[test]
    fn discrepancy_moves_to_the_far_target() {
        let mut pair = pair_from("+++-+++++++-", "+++-+-+++++-", 1, 5);
        assert_eq!(pair.view.positions().collect::<Vec<_>>(), vec![5]);
        let event = Event { time: 0.1, site: 4, sign: 1, u: 0.0 };
        let j1 = apply_event(&mut pair.first, &event);
        let j2 = apply_event(&mut pair.second, &event);
        for j in [j1, j2] {
            pair.view.refresh_site(j.origin, &pair.first, &pair.second);
            pair.view.refresh_site(j.target, &pair.first, &pair.second);
        }
        assert_eq!(pair.view.positions().collect::<Vec<_>>(), vec![11]);
        assert!(pair.view.matches_recompute(&pair.first, &pair.second));
    }

    #[test]
    fn far_events_do_not_touch_the_discrepancy() {
        let mut pair = pair_from("+-+-----", "+---+---", 1, 2);
        let before: Vec<usize> = pair.view.positions().collect();
        // Clock at site 6 with a span that stays right of the discrepancies.
        let event = Event { time: 0.1, site: 6, sign: -1, u: 0.9 };
        let j1 = apply_event(&mut pair.first, &event);
        let j2 = apply_event(&mut pair.second, &event);
        for j in [j1, j2] {
            pair.view.refresh_site(j.origin, &pair.first, &pair.second);
            pair.view.refresh_site(j.target, &pair.first, &pair.second);
        }
        assert_eq!(pair.view.positions().collect::<Vec<_>>(), before);
    }

    fn sign_multiset(pair: &CoupledPair) -> BTreeMap<i8, usize> {
        let mut counts = BTreeMap::new();
        for x in pair.view.positions() {
            *counts.entry(DiscrepancyView::sign_at(&pair.first, x)).or_insert(0) += 1;
        }
        counts
    }

    #[test]
    fn discrepancies_only_annihilate_in_pairs() {
        let params = Params::new(64, 0.5, 0.5, 0.5).unwrap();
        for seed in 0..6u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let sites: Vec<usize> = (8..40).collect();
            let (a, b) = sample_mu_s(&params, &sites, &mut rng);
            let mut pair = CoupledPair::new(a, b, EventStream::new(seed + 50, &params), 8);
            let mut count = pair.view.count();
            let mut signs = sign_multiset(&pair);
            for step in 0..6000 {
                pair.step();
                let new_count = pair.view.count();
                assert!(
                    new_count == count || new_count + 2 == count,
                    "count jumped {count} -> {new_count} at step {step}"
                );
                let new_signs = sign_multiset(&pair);
                if new_count + 2 == count {
                    // Exactly one {+,-} pair gone.
                    assert_eq!(
                        new_signs.get(&1).copied().unwrap_or(0) + 1,
                        signs.get(&1).copied().unwrap_or(0)
                    );
                    assert_eq!(
                        new_signs.get(&-1).copied().unwrap_or(0) + 1,
                        signs.get(&-1).copied().unwrap_or(0)
                    );
                } else {
                    assert_eq!(new_signs, signs);
                }
                count = new_count;
                signs = new_signs;
                if step % 256 == 0 {
                    assert!(pair.view.matches_recompute(&pair.first, &pair.second));
                }
                if pair.view.is_empty() {
                    break;
                }
            }
            // Coalescence is absorbing.
            if pair.view.is_empty() {
                for _ in 0..500 {
                    pair.step();
                }
                assert!(pair.view.is_empty());
                assert_eq!(pair.first, pair.second);
            }
        }
    }

    #[test]
    fn front_speed_fractions_are_monotone_and_zero_at_c0() {
        let params = Params::new(256, 0.5, 0.5, 0.5).unwrap();
        let report = front_speed_experiment(&params, 40, 20.0, &[0.0, 0.05, 0.1, 0.5, 2.0], 77);
        assert_eq!(report.trials_used + report.excluded_wrapped, 40);
        // Displacement is nonnegative, so the c=0 fraction is exactly zero.
        assert_eq!(report.fraction_below[0], 0.0);
        for w in report.fraction_below.windows(2) {
            assert!(w[1] >= w[0]);
        }
        assert!(report.displacements.iter().all(|&d| d >= 0));
    }

    #[test]
    fn max_speed_tail_is_monotone_with_unit_mass_at_zero() {
        let params = Params::new(256, 0.5, 0.5, 0.5).unwrap();
        let report = max_speed_experiment(&params, 40, 15.0, &[0, 5, 10, 20, 40], 123);
        assert_eq!(report.tail_probability[0], 1.0);
        for w in report.tail_probability.windows(2) {
            assert!(w[1] <= w[0]);
        }
    }

    #[test]
    fn tagged_gap_stays_positive_on_small_runs() {
        let params = Params::new(256, 0.5, 0.5, 0.5).unwrap();
        let report = tagged_gap_experiment(&params, 20, 15.0, 8, 128, &[0.0], 31);
        assert!(report.trials_used > 0);
        assert!(report.min_gaps.iter().all(|&g| g > 0), "gaps {:?}", report.min_gaps);
    }
}
