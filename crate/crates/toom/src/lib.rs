//! Event-driven simulator and exact verification toolkit for the
//! one-dimensional Toom model.
//!
//! The model lives on a periodic ring of `±1` spins. Each particle carries an
//! exponential clock (rate `lambda_plus` for `+`, `lambda_minus` for `-`);
//! when the clock of a particle rings, it exchanges positions with the first
//! particle of opposite sign to its right. Equivalently, the particle steps
//! one site right and *pushes* the whole same-sign block ahead of it. Bernoulli
//! product measures are stationary, tagged push particles drift ballistically
//! with Gaussian fluctuations, and discrepancies between coupled replicas run
//! away to the right.
//!
//! The crate is organized as:
//!
//! - [`params`], [`config`], [`events`], [`dynamics`]: the ring state and the
//!   thinned-Poisson jump dynamics itself.
//! - [`tagged`]: labeled push particles, the environment seen from them, and
//!   the closed-form drift.
//! - [`observables`]: additive functionals, per-sign edge currents, and the
//!   flux moment generating function.
//! - [`coupling`]: replicas sharing one clock stream, discrepancy tracking,
//!   and the front runaway / speed-bound experiments.
//! - [`adjoint`]: the left-moving dynamics and pathwise time reversal.
//! - [`oracle`]: exact enumeration on small cycles (generator matrices,
//!   stationarity and reversal residuals, exact drift and edge rates,
//!   uniformized transient laws).
//! - [`stats`]: batch means, diffusion estimators (direct and Green-Kubo),
//!   CLT moment tests, and autocovariance curves.
//! - [`experiments`]: seeded, trial-parallel drivers gluing the above into
//!   reproducible report structures.

pub mod adjoint;
pub mod config;
pub mod coupling;
pub mod dynamics;
pub mod events;
pub mod experiments;
pub mod observables;
pub mod oracle;
pub mod params;
pub mod stats;
pub mod tagged;

pub use config::SpinConfig;
pub use dynamics::{apply_event, find_target, run, Direction, JumpRecord, Observer};
pub use events::{derive_trial_seed, Event, EventStream};
pub use params::Params;
pub use tagged::{drift_formula, init_tagged, TaggedState};
