//! The exchange dynamics: target search, jump execution and the event loop.

use serde::{Deserialize, Serialize};

use crate::config::SpinConfig;
use crate::events::{Event, EventStream};

/// Scan direction of the target search. The right-moving process is the model
/// proper; the left-moving one is its time reversal (see [`crate::adjoint`]).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Right,
    Left,
}

/// Outcome of one clock ring.
///
/// When `executed` is true the spins at `origin` and `target` were exchanged;
/// `block_len` counts the sites strictly between them (cyclically, in scan
/// direction), all of which carried `sign` before the event.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JumpRecord {
    pub time: f64,
    pub origin: usize,
    pub target: usize,
    pub sign: i8,
    pub block_len: usize,
    pub executed: bool,
}

impl JumpRecord {
    fn noop(event: &Event) -> Self {
        Self {
            time: event.time,
            origin: event.site,
            target: event.site,
            sign: event.sign,
            block_len: 0,
            executed: false,
        }
    }
}

/// First site with spin `-sign`, scanning cyclically rightward from
/// `site + 1`. `None` iff the ring is monochrome in `sign`.
#[inline]
pub fn find_target(config: &SpinConfig, site: usize, sign: i8) -> Option<usize> {
    let l = config.len();
    let mut y = site + 1;
    if y == l {
        y = 0;
    }
    while y != site {
        if config.spin(y) != sign {
            return Some(y);
        }
        y += 1;
        if y == l {
            y = 0;
        }
    }
    None
}

/// Decide what an event would do, without touching the configuration.
///
/// The event is a no-op when the spin at the clock site differs from the
/// clock sign, or when the ring is monochrome (finite-ring convention:
/// monochrome sectors are dynamically frozen).
#[inline]
pub fn plan_event(config: &SpinConfig, event: &Event) -> JumpRecord {
    let site = event.site;
    let sign = event.sign;
    if config.spin(site) != sign {
        return JumpRecord::noop(event);
    }
    match find_target(config, site, sign) {
        None => JumpRecord::noop(event),
        Some(target) => {
            let l = config.len();
            JumpRecord {
                time: event.time,
                origin: site,
                target,
                sign,
                block_len: (target + l - site - 1) % l,
                executed: true,
            }
        }
    }
}

/// Apply a planned jump. No-ops leave the configuration bitwise unchanged;
/// the plus count is conserved in all cases.
#[inline]
pub fn commit_jump(config: &mut SpinConfig, jump: &JumpRecord) {
    if jump.executed {
        config.exchange(jump.origin, jump.target);
    }
}

/// Plan and apply in one step.
#[inline]
pub fn apply_event(config: &mut SpinConfig, event: &Event) -> JumpRecord {
    let jump = plan_event(config, event);
    commit_jump(config, &jump);
    jump
}

/// Trajectory observer. `on_event` sees the configuration as it was over the
/// elapsed interval `dt` *before* the jump is applied; `on_close` flushes the
/// final piecewise-constant stretch up to the horizon.
pub trait Observer {
    fn on_event(&mut self, pre: &SpinConfig, jump: &JumpRecord, dt: f64);

    fn on_close(&mut self, _config: &SpinConfig, _dt: f64) {}
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RunSummary {
    pub events: u64,
    pub executed: u64,
    pub end_time: f64,
}

/// Drive the dynamics until the stream time passes `horizon`, feeding each
/// observer every event (including no-ops) plus a final flush at the horizon.
/// Deterministic given the stream seed.
pub fn run(
    config: &mut SpinConfig,
    stream: &mut EventStream,
    horizon: f64,
    observers: &mut [&mut dyn Observer],
) -> RunSummary {
    assert!(horizon > 0.0, "horizon must be positive");
    let mut summary = RunSummary::default();
    let mut last = stream.current_time();
    loop {
        let event = stream.next_event();
        if event.time > horizon {
            for obs in observers.iter_mut() {
                obs.on_close(config, horizon - last);
            }
            summary.end_time = horizon;
            return summary;
        }
        let jump = plan_event(config, &event);
        let dt = event.time - last;
        for obs in observers.iter_mut() {
            obs.on_event(config, &jump, dt);
        }
        commit_jump(config, &jump);
        last = event.time;
        summary.events += 1;
        summary.executed += u64::from(jump.executed);
    }
}

/// Successor-query alternative to the linear target scan, for densities
/// where runs of one sign get long (expected scan cost is 1/min(p, 1-p)).
///
/// Keeps the set of run starts — sites whose spin differs from their left
/// neighbor — in an ordered set. The first opposite spin right of a site is
/// either the immediate neighbor or the next run start after it. An executed
/// exchange only changes spins at its two endpoints, so at most four
/// boundary memberships need refreshing per jump.
#[derive(Clone, Debug)]
pub struct BlockBoundaryIndex {
    run_starts: std::collections::BTreeSet<usize>,
}

impl BlockBoundaryIndex {
    pub fn new(config: &SpinConfig) -> Self {
        let l = config.len();
        let run_starts = (0..l)
            .filter(|&x| config.spin(x) != config.spin((x + l - 1) % l))
            .collect();
        Self { run_starts }
    }

    /// Cyclically next run start at or after `site`.
    fn successor(&self, site: usize) -> Option<usize> {
        self.run_starts
            .range(site..)
            .next()
            .or_else(|| self.run_starts.iter().next())
            .copied()
    }

    /// Same contract as [`find_target`], answered with successor queries.
    pub fn find_target(&self, config: &SpinConfig, site: usize, sign: i8) -> Option<usize> {
        let l = config.len();
        let next = (site + 1) % l;
        if config.spin(next) != sign {
            return Some(next);
        }
        // `next` sits in a run of `sign`; the first opposite spin is that
        // run's end, i.e. the next run start strictly past `next`. Hitting
        // `site` first means the scan region is exhausted.
        let candidate = self.successor((next + 1) % l)?;
        if candidate == site {
            return None;
        }
        debug_assert_eq!(config.spin(candidate), -sign);
        Some(candidate)
    }

    /// Refresh the boundary set after an executed jump was committed.
    pub fn apply_jump(&mut self, config: &SpinConfig, jump: &JumpRecord) {
        if !jump.executed {
            return;
        }
        let l = config.len();
        for site in [
            jump.origin,
            (jump.origin + 1) % l,
            jump.target,
            (jump.target + 1) % l,
        ] {
            if config.spin(site) != config.spin((site + l - 1) % l) {
                self.run_starts.insert(site);
            } else {
                self.run_starts.remove(&site);
            }
        }
    }
}

/// JSON Lines record for one executed jump:
/// `{"t": .., "origin": .., "target": .., "sign": ±1, "r": ..}`, with an
/// optional `direction` field used by the left-moving process.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JumpLogRecord {
    pub t: f64,
    pub origin: usize,
    pub target: usize,
    pub sign: i8,
    pub r: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub direction: Option<Direction>,
}

impl JumpLogRecord {
    pub fn from_jump(jump: &JumpRecord) -> Self {
        Self {
            t: jump.time,
            origin: jump.origin,
            target: jump.target,
            sign: jump.sign,
            r: jump.block_len,
            direction: None,
        }
    }

    pub fn with_direction(jump: &JumpRecord, direction: Direction) -> Self {
        Self {
            direction: Some(direction),
            ..Self::from_jump(jump)
        }
    }
}
