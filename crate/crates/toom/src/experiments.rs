//! Reproducible experiment drivers.
//!
//! Every experiment fans out over independent trials with seeds derived from
//! `(master_seed, trial_index)`, collects per-trial results in index order,
//! and aggregates deterministically, so reports are byte-stable for a given
//! configuration regardless of scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::SpinConfig;
use crate::dynamics::apply_event;
use crate::events::{derive_role_seed, derive_trial_seed, EventStream};
use crate::observables::{flux_mgf_probe, CurrentAccumulator, MgfPoint};
use crate::oracle;
use crate::params::Params;
use crate::stats::{
    clt_moment_test, estimate_diffusion_direct, estimate_green_kubo, EstimateCi,
    GreenKuboEstimate, GreenKuboTrial, IncrementSeries, MomentReport,
};
use crate::tagged::{environment_view, init_tagged, instantaneous_drift};

/// Empirical occupation frequencies around the tagged particle.
#[derive(Clone, Debug, Serialize)]
pub struct EnvReport {
    pub k: usize,
    /// Offsets `-k..-1, 1..k` in order, matching `freq_mean`.
    pub offsets: Vec<i64>,
    pub freq_mean: Vec<f64>,
    pub freq_se: Vec<f64>,
    pub samples_per_trial: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct DriftReport {
    pub sign: i8,
    pub horizon: f64,
    pub trials: usize,
    pub master_seed: u64,
    pub velocities: Vec<f64>,
    pub pooled: EstimateCi,
    /// Closed-form drift for these parameters.
    pub formula: f64,
    pub env: Option<EnvReport>,
}

/// Long stationary runs of a tagged particle: per-trial time-average velocity
/// and optionally the empirical environment law around the particle.
pub fn drift_experiment(
    params: &Params,
    sign: i8,
    horizon: f64,
    trials: usize,
    master_seed: u64,
    env_k: Option<usize>,
    env_sample_dt: f64,
) -> DriftReport {
    let l = params.ring_size();
    let results: Vec<(f64, Vec<u64>, usize)> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let trial_seed = derive_trial_seed(master_seed, trial as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(derive_role_seed(trial_seed, 0));
            let mut config = SpinConfig::sample(params, &mut rng);
            let mut tagged = init_tagged(&mut config, 0, sign);
            let mut stream = EventStream::new(derive_role_seed(trial_seed, 1), params);
            let k = env_k.unwrap_or(0);
            let mut plus_counts = vec![0u64; 2 * k];
            let mut samples = 0usize;
            let mut next_sample = 1u64;
            let sample_due = |idx: u64| env_sample_dt * idx as f64;
            loop {
                let event = stream.next_event();
                let cutoff = event.time.min(horizon);
                if k > 0 {
                    while sample_due(next_sample) <= cutoff {
                        let view = environment_view(&config, &tagged, k)
                            .expect("window fits the ring");
                        for (slot, spin) in view.iter().enumerate() {
                            plus_counts[slot] += u64::from(*spin == 1);
                        }
                        samples += 1;
                        next_sample += 1;
                    }
                }
                if event.time > horizon {
                    break;
                }
                let jump = apply_event(&mut config, &event);
                tagged.apply_jump(&jump, l);
            }
            (tagged.position_unwrapped() as f64 / horizon, plus_counts, samples)
        })
        .collect();
    let velocities: Vec<f64> = results.iter().map(|r| r.0).collect();
    let env = env_k.map(|k| {
        let offsets: Vec<i64> = (-(k as i64)..=k as i64).filter(|&o| o != 0).collect();
        let per_trial: Vec<Vec<f64>> = results
            .iter()
            .map(|(_, counts, samples)| {
                counts.iter().map(|&c| c as f64 / (*samples).max(1) as f64).collect()
            })
            .collect();
        let mut freq_mean = Vec::with_capacity(2 * k);
        let mut freq_se = Vec::with_capacity(2 * k);
        for slot in 0..2 * k {
            let vals: Vec<f64> = per_trial.iter().map(|f| f[slot]).collect();
            let est = EstimateCi::from_samples(&vals);
            freq_mean.push(est.value);
            freq_se.push(est.se);
        }
        EnvReport {
            k,
            offsets,
            freq_mean,
            freq_se,
            samples_per_trial: results.first().map_or(0, |r| r.2),
        }
    });
    DriftReport {
        sign,
        horizon,
        trials,
        master_seed,
        pooled: EstimateCi::from_samples(&velocities),
        formula: crate::tagged::drift_formula(params, sign),
        velocities,
        env,
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SmallCycleDriftReport {
    pub n: usize,
    pub measured: EstimateCi,
    pub exact: f64,
}

/// Monte Carlo drift on an n-cycle against the exact enumeration value.
pub fn small_cycle_drift(
    n: usize,
    params: &Params,
    sign: i8,
    horizon: f64,
    trials: usize,
    master_seed: u64,
) -> SmallCycleDriftReport {
    let cycle_params = params.with_ring_size(n).expect("valid cycle params");
    let report = drift_experiment(&cycle_params, sign, horizon, trials, master_seed, None, 0.0);
    SmallCycleDriftReport {
        n,
        measured: report.pooled,
        exact: oracle::exact_drift(n, &cycle_params, sign).expect("cycle size in oracle range"),
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct DiffusionReport {
    pub window: f64,
    pub windows_per_trial: usize,
    pub trials: usize,
    pub sample_dt: f64,
    /// Per-trial end-to-end velocity.
    pub velocity: EstimateCi,
    /// Per-trial mean of the instantaneous drift h; consistent with
    /// `velocity` when the environment is stationary.
    pub mean_h: EstimateCi,
    pub direct: EstimateCi,
    pub direct_doubled: EstimateCi,
    /// Var over 2w divided by twice the Var over w (both per unit time
    /// already, so this is the plain ratio of the two direct estimates).
    pub variance_ratio: f64,
    pub moments: MomentReport,
    pub green_kubo: GreenKuboEstimate,
    #[serde(skip)]
    pub increments: IncrementSeries,
}

/// One long stationary run per trial, recording window increments of the
/// tagged position, squared jump sizes, and fine-grained bin increments.
/// Feeds the direct/Green-Kubo comparison and the CLT moment test.
///
/// Window increments are centered per trial (each trial rides its own
/// conserved magnetization sector, whose drift differs by O(1/sqrt L); pooled
/// centering would leak that spread into the variance linearly in the window
/// length). The variance estimates then get a dof correction for the
/// per-trial means.
#[allow(clippy::too_many_arguments)]
pub fn diffusion_experiment(
    params: &Params,
    sign: i8,
    window: f64,
    windows_per_trial: usize,
    trials: usize,
    master_seed: u64,
    sample_dt: f64,
    lag_max: usize,
) -> DiffusionReport {
    let l = params.ring_size();
    let horizon = window * windows_per_trial as f64;
    struct Trial {
        increments: Vec<f64>,
        gk: GreenKuboTrial,
        mean_h: f64,
        velocity: f64,
    }
    let results: Vec<Trial> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let trial_seed = derive_trial_seed(master_seed, trial as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(derive_role_seed(trial_seed, 0));
            let mut config = SpinConfig::sample(params, &mut rng);
            let mut tagged = init_tagged(&mut config, 0, sign);
            let mut stream = EventStream::new(derive_role_seed(trial_seed, 1), params);
            let mut boundaries = Vec::with_capacity(windows_per_trial + 1);
            boundaries.push(0i64);
            let mut bin_increments = Vec::with_capacity((horizon / sample_dt) as usize + 1);
            let mut last_bin_position = 0i64;
            let mut h_sum = 0.0f64;
            let mut h_count = 0u64;
            let mut sq_jump_sum = 0.0f64;
            let mut next_window = 1usize;
            let mut next_sample = 1u64;
            loop {
                let event = stream.next_event();
                let cutoff = event.time.min(horizon);
                while next_sample as f64 * sample_dt <= cutoff {
                    let position = tagged.position_unwrapped();
                    bin_increments.push((position - last_bin_position) as f64);
                    last_bin_position = position;
                    h_sum += instantaneous_drift(&config, &tagged, params);
                    h_count += 1;
                    next_sample += 1;
                }
                while next_window <= windows_per_trial
                    && next_window as f64 * window <= cutoff
                {
                    boundaries.push(tagged.position_unwrapped());
                    next_window += 1;
                }
                if event.time > horizon {
                    break;
                }
                let before = tagged.position_unwrapped();
                let jump = apply_event(&mut config, &event);
                tagged.apply_jump(&jump, l);
                let disp = (tagged.position_unwrapped() - before) as f64;
                sq_jump_sum += disp * disp;
            }
            assert_eq!(boundaries.len(), windows_per_trial + 1);
            let mut increments: Vec<f64> = boundaries
                .windows(2)
                .map(|pair| (pair[1] - pair[0]) as f64)
                .collect();
            let trial_mean = increments.iter().sum::<f64>() / increments.len() as f64;
            for x in &mut increments {
                *x -= trial_mean;
            }
            Trial {
                increments,
                gk: GreenKuboTrial { sq_jump_sum, duration: horizon, bin_increments },
                mean_h: h_sum / h_count.max(1) as f64,
                velocity: *boundaries.last().unwrap() as f64 / horizon,
            }
        })
        .collect();

    let pooled: Vec<f64> = results.iter().flat_map(|t| t.increments.iter().copied()).collect();
    let series = IncrementSeries::new(window, pooled).expect("positive window");
    let doubled = series.doubled();
    // Per-trial centering consumed one dof per trial; rescale the variance
    // estimates accordingly.
    let dof = |count: usize| (count as f64 - 1.0) / (count - trials).max(1) as f64;
    let mut direct = estimate_diffusion_direct(&series).expect("enough windows");
    direct.value *= dof(series.increments.len());
    let mut direct_doubled = estimate_diffusion_direct(&doubled).expect("enough windows");
    direct_doubled.value *= dof(doubled.increments.len());
    let moments = clt_moment_test(&series.increments).expect("enough windows");
    let gk_trials: Vec<GreenKuboTrial> = results.iter().map(|t| t.gk.clone()).collect();
    let green_kubo = estimate_green_kubo(&gk_trials, sample_dt, lag_max).expect("enough samples");
    let velocity =
        EstimateCi::from_samples(&results.iter().map(|t| t.velocity).collect::<Vec<_>>());
    let mean_h = EstimateCi::from_samples(&results.iter().map(|t| t.mean_h).collect::<Vec<_>>());
    DiffusionReport {
        window,
        windows_per_trial,
        trials,
        sample_dt,
        velocity,
        mean_h,
        variance_ratio: direct_doubled.value / direct.value,
        direct,
        direct_doubled,
        moments,
        green_kubo,
        increments: series,
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct FluxAtT {
    pub t: f64,
    pub mean_rate: EstimateCi,
    pub mgf: Vec<MgfPoint>,
    pub samples: Vec<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct FluxReport {
    pub edge: usize,
    pub trials_per_t: usize,
    pub rate_closed_form: f64,
    pub per_t: Vec<FluxAtT>,
}

/// Independent flux samples `J_edge(t)` at each requested time, with the
/// empirical MGF of `J/t` on a gamma grid.
pub fn flux_experiment(
    params: &Params,
    t_grid: &[f64],
    trials_per_t: usize,
    gammas: &[f64],
    bootstrap: usize,
    master_seed: u64,
) -> FluxReport {
    let edge = params.ring_size() / 2;
    let per_t = t_grid
        .iter()
        .enumerate()
        .map(|(t_index, &t)| {
            let t_master = derive_role_seed(master_seed, t_index as u64);
            let samples: Vec<f64> = (0..trials_per_t)
                .into_par_iter()
                .map(|trial| {
                    let trial_seed = derive_trial_seed(t_master, trial as u64);
                    let mut rng = ChaCha8Rng::seed_from_u64(derive_role_seed(trial_seed, 0));
                    let mut config = SpinConfig::sample(params, &mut rng);
                    let mut stream = EventStream::new(derive_role_seed(trial_seed, 1), params);
                    let mut current = CurrentAccumulator::new(edge);
                    loop {
                        let event = stream.next_event();
                        if event.time > t {
                            break;
                        }
                        let jump = apply_event(&mut config, &event);
                        current.record(&jump, params.ring_size());
                    }
                    current.total() as f64
                })
                .collect();
            let rates: Vec<f64> = samples.iter().map(|j| j / t).collect();
            let mut mgf_rng =
                ChaCha8Rng::seed_from_u64(derive_role_seed(master_seed, 1000 + t_index as u64));
            FluxAtT {
                t,
                mean_rate: EstimateCi::from_samples(&rates),
                mgf: flux_mgf_probe(&samples, t, gammas, bootstrap, &mut mgf_rng),
                samples,
            }
        })
        .collect();
    FluxReport {
        edge,
        trials_per_t,
        rate_closed_form: oracle::edge_rate_closed_form(params),
        per_t,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn drift_experiment_is_deterministic_and_sane() {
        let params = Params::new(128, 0.5, 1.0, 0.0).unwrap();
        let a = drift_experiment(&params, 1, 50.0, 4, 99, None, 0.0);
        let b = drift_experiment(&params, 1, 50.0, 4, 99, None, 0.0);
        assert_eq!(a.velocities, b.velocities);
        assert!((a.formula - 2.0).abs() < 1e-14);
        // Totally asymmetric +-pushes can only move the tag rightward.
        assert!(a.velocities.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn small_cycle_reports_carry_the_exact_value() {
        let params = Params::new(16, 0.5, 1.0, 0.0).unwrap();
        let report = small_cycle_drift(4, &params, 1, 500.0, 8, 7);
        assert!((report.exact - 1.375).abs() < 1e-14);
        assert!((report.measured.value - report.exact).abs() < 5.0 * report.measured.se);
    }

    #[test]
    fn diffusion_experiment_shapes_are_consistent() {
        let params = Params::new(256, 0.5, 1.0, 0.0).unwrap();
        let report = diffusion_experiment(&params, 1, 20.0, 12, 6, 13, 0.5, 20);
        assert_eq!(report.increments.increments.len(), 72);
        assert_eq!(report.moments.n, 72);
        assert!(report.direct.value > 0.0);
        // Velocity and mean-h are two routes to the same drift.
        let gap = (report.velocity.value - report.mean_h.value).abs();
        let band = 4.0 * (report.velocity.se.powi(2) + report.mean_h.se.powi(2)).sqrt();
        assert!(gap < band.max(0.2), "gap {gap} band {band}");
    }

    #[test]
    fn flux_experiment_rates_near_closed_form() {
        let params = Params::new(128, 0.5, 0.5, 0.5).unwrap();
        let report = flux_experiment(&params, &[20.0], 32, &[0.0, 0.1], 100, 5);
        assert!((report.rate_closed_form - 1.0).abs() < 1e-14);
        let at = &report.per_t[0];
        assert!((at.mean_rate.value - 1.0).abs() < 6.0 * at.mean_rate.se.max(0.02));
        assert_eq!(at.mgf[0].value, 1.0);
    }
}
