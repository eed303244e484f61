//! The left-moving dynamics and the pathwise time-reversal map.
//!
//! Running the film of the right-moving process backwards shows particles
//! exchanging with the first opposite particle to their *left*: an executed
//! right-moving jump `origin -> target` corresponds, under reversal, to a
//! left-moving jump anchored at the landing site and returning to the origin.
//! Reversal is implemented on executed jumps only; no-op clock rings alter no
//! configuration and are dropped.

use crate::config::SpinConfig;
use crate::dynamics::{find_target, plan_event, Direction, JumpRecord};
use crate::events::Event;

/// First site with spin `-sign`, scanning cyclically *leftward* from
/// `site - 1`. `None` iff the ring is monochrome in `sign`.
#[inline]
pub fn find_target_left(config: &SpinConfig, site: usize, sign: i8) -> Option<usize> {
    let l = config.len();
    let mut y = if site == 0 { l - 1 } else { site - 1 };
    while y != site {
        if config.spin(y) != sign {
            return Some(y);
        }
        y = if y == 0 { l - 1 } else { y - 1 };
    }
    None
}

/// Left-moving analogue of [`crate::dynamics::plan_event`].
#[inline]
pub fn plan_event_adjoint(config: &SpinConfig, event: &Event) -> JumpRecord {
    let site = event.site;
    let sign = event.sign;
    let noop = JumpRecord {
        time: event.time,
        origin: site,
        target: site,
        sign,
        block_len: 0,
        executed: false,
    };
    if config.spin(site) != sign {
        return noop;
    }
    match find_target_left(config, site, sign) {
        None => noop,
        Some(target) => {
            let l = config.len();
            JumpRecord {
                time: event.time,
                origin: site,
                target,
                sign,
                // Sites strictly between target and origin, scanning leftward
                // from the origin; mirrors the right-moving convention.
                block_len: (site + l - target - 1) % l,
                executed: true,
            }
        }
    }
}

/// Plan and apply one left-moving event.
#[inline]
pub fn apply_event_adjoint(config: &mut SpinConfig, event: &Event) -> JumpRecord {
    let jump = plan_event_adjoint(config, event);
    if jump.executed {
        config.exchange(jump.origin, jump.target);
    }
    jump
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ReplayError {
    #[error("jump {index}: spin at origin {origin} is not {sign}")]
    SpinMismatch { index: usize, origin: usize, sign: i8 },
    #[error("jump {index}: recorded target {recorded} but dynamics lands at {found:?}")]
    TargetMismatch { index: usize, recorded: usize, found: Option<usize> },
    #[error("jump {index}: times must be nondecreasing")]
    TimeOrder { index: usize },
}

/// A replayable record of one trajectory: initial configuration plus the
/// time-ordered executed jumps up to a horizon.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryLog {
    pub initial: SpinConfig,
    pub jumps: Vec<JumpRecord>,
    pub horizon: f64,
    pub direction: Direction,
}

impl TrajectoryLog {
    /// Record a right-moving trajectory: apply events from the iterator until
    /// the horizon, logging executed jumps.
    pub fn record<I: Iterator<Item = Event>>(
        initial: SpinConfig,
        events: I,
        horizon: f64,
    ) -> Self {
        let mut config = initial.clone();
        let mut jumps = Vec::new();
        for event in events {
            if event.time > horizon {
                break;
            }
            let jump = plan_event(&config, &event);
            if jump.executed {
                config.exchange(jump.origin, jump.target);
                jumps.push(jump);
            }
        }
        Self {
            initial,
            jumps,
            horizon,
            direction: Direction::Right,
        }
    }

    /// Replay the log, re-deriving each jump from the dynamics of the log's
    /// direction and checking it against the record. Returns every visited
    /// configuration, starting with the initial one. A mismatch means the log
    /// is inconsistent and is a hard error.
    pub fn replay(&self) -> Result<Vec<SpinConfig>, ReplayError> {
        let mut config = self.initial.clone();
        let mut visited = vec![config.clone()];
        let mut last_time = f64::NEG_INFINITY;
        for (index, jump) in self.jumps.iter().enumerate() {
            if jump.time < last_time {
                return Err(ReplayError::TimeOrder { index });
            }
            last_time = jump.time;
            if config.spin(jump.origin) != jump.sign {
                return Err(ReplayError::SpinMismatch {
                    index,
                    origin: jump.origin,
                    sign: jump.sign,
                });
            }
            let found = match self.direction {
                Direction::Right => find_target(&config, jump.origin, jump.sign),
                Direction::Left => find_target_left(&config, jump.origin, jump.sign),
            };
            if found != Some(jump.target) {
                return Err(ReplayError::TargetMismatch {
                    index,
                    recorded: jump.target,
                    found,
                });
            }
            config.exchange(jump.origin, jump.target);
            visited.push(config.clone());
        }
        Ok(visited)
    }

    /// Final configuration after replaying the whole log.
    pub fn final_config(&self) -> Result<SpinConfig, ReplayError> {
        Ok(self.replay()?.pop().expect("replay returns at least the initial state"))
    }

    /// The time-reversal map: the reversed log starts from the final
    /// configuration, runs the opposite direction, and visits the original
    /// configurations in reverse order. Each jump `origin -> target` at time
    /// `t` becomes `target -> origin` at time `horizon - t`.
    pub fn reverse(&self) -> Result<TrajectoryLog, ReplayError> {
        let initial = self.final_config()?;
        let jumps = self
            .jumps
            .iter()
            .rev()
            .map(|j| JumpRecord {
                time: self.horizon - j.time,
                origin: j.target,
                target: j.origin,
                sign: j.sign,
                block_len: j.block_len,
                executed: true,
            })
            .collect();
        Ok(TrajectoryLog {
            initial,
            jumps,
            horizon: self.horizon,
            direction: match self.direction {
                Direction::Right => Direction::Left,
                Direction::Left => Direction::Right,
            },
        })
    }
}
