use std::fs;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use toom::adjoint::apply_event_adjoint;
use toom::coupling::{
    front_speed_experiment, max_speed_experiment, sample_mu_s, tagged_gap_experiment, CoupledPair,
};
use toom::dynamics::{apply_event, Direction, JumpLogRecord};
use toom::events::{derive_role_seed, derive_trial_seed, EventStream};
use toom::experiments::{diffusion_experiment, drift_experiment, flux_experiment};
use toom::observables::CurrentAccumulator;
use toom::oracle;
use toom::params::{Params, ParamsError};
use toom::stats::log_linear_fit;
use toom::{init_tagged, SpinConfig};

use crate::output::{write_csv, write_jsonl, write_summary, Verdict};

/// Event-driven Toom model simulator and verification toolkit.
#[derive(Debug, Parser)]
#[command(name = "toom", version, about)]
pub struct Cli {
    /// Probability of spin +1 under the product measure (0 < p < 1)
    #[arg(long, global = true)]
    p: Option<f64>,
    /// Clock rate of + particles (normalized so the rates sum to 1)
    #[arg(long, global = true)]
    lambda_plus: Option<f64>,
    /// Clock rate of - particles
    #[arg(long, global = true)]
    lambda_minus: Option<f64>,
    /// Ring size L
    #[arg(long = "L", alias = "ring-size", global = true)]
    ring_size: Option<usize>,
    /// Master seed; trial k uses a documented hash of (seed, k)
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Time horizon of a single trajectory
    #[arg(long, global = true)]
    horizon: Option<f64>,
    /// Number of independent trials
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// Window length for increment statistics
    #[arg(long, global = true)]
    window_length: Option<f64>,
    /// Output directory for JSON/CSV artifacts
    #[arg(long, global = true, env = "TOOM_OUT_DIR")]
    out_dir: Option<PathBuf>,
    /// Worker threads for trial parallelism (default: all cores)
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// JSON config file; explicit flags override file values
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoupleMode {
    Front,
    Gap,
    MaxSpeed,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the dynamics once, optionally logging executed jumps (JSONL) and a
    /// tagged-particle time series (CSV)
    Simulate {
        /// Write executed jumps as JSON Lines to this file name (in out-dir)
        #[arg(long)]
        events_out: Option<String>,
        /// Tag the particle at this site (conditioning the initial state)
        #[arg(long)]
        tag_site: Option<usize>,
        /// Sign of the tagged particle (+1 or -1)
        #[arg(long, default_value_t = 1, allow_hyphen_values = true)]
        tag_sign: i8,
        /// Sampling interval of the (t, Y) series
        #[arg(long, default_value_t = 1.0)]
        sample_dt: f64,
        /// Scan direction: the right-moving model or its left-moving adjoint
        #[arg(long, value_enum, default_value_t = CliDirection::Right)]
        direction: CliDirection,
    },
    /// Tagged-particle drift with confidence interval versus the closed form
    Drift {
        /// Sign of the tagged particle
        #[arg(long, default_value_t = 1, allow_hyphen_values = true)]
        sign: i8,
    },
    /// Direct and Green-Kubo diffusion estimates with agreement verdicts
    Diffusion {
        #[arg(long, default_value_t = 0.25)]
        sample_dt: f64,
        #[arg(long, default_value_t = 120)]
        lag_max: usize,
        /// Windows per trial (window length comes from --window-length)
        #[arg(long, default_value_t = 64)]
        windows: usize,
    },
    /// CLT moment test (skewness, excess kurtosis, variance linearity)
    Clt {
        #[arg(long, default_value_t = 0.25)]
        sample_dt: f64,
        #[arg(long, default_value_t = 120)]
        lag_max: usize,
        #[arg(long, default_value_t = 64)]
        windows: usize,
    },
    /// Coupled-replica discrepancy experiments
    Couple {
        #[arg(long, value_enum, default_value_t = CoupleMode::Front)]
        mode: CoupleMode,
        /// Speed grid for tail fractions, comma separated
        #[arg(long, value_delimiter = ',', default_value = "0.0,0.05,0.1,0.2,0.5")]
        c_grid: Vec<f64>,
        /// Displacement grid for the max-speed tail, comma separated
        #[arg(long, value_delimiter = ',', default_value = "0,25,50,100,200,400")]
        r_grid: Vec<i64>,
        /// First site of the discrepancy seed arc (gap mode)
        #[arg(long, default_value_t = 8)]
        s_start: usize,
        /// Length of the seed arc (gap mode; default L/2)
        #[arg(long)]
        s_len: Option<usize>,
        /// Sampling interval of the per-trial (t, front, Y, gap, count) series
        #[arg(long, default_value_t = 10.0)]
        series_dt: f64,
    },
    /// Edge-flux mean rate and MGF stability probe
    Flux {
        #[arg(long, value_delimiter = ',', default_value = "50,100,200")]
        t_grid: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "0.0,0.1,0.2,0.5")]
        gamma_grid: Vec<f64>,
        #[arg(long, default_value_t = 400)]
        bootstrap: usize,
    },
    /// Empirical environment law around the tagged particle
    EnvCheck {
        #[arg(long, default_value_t = 10)]
        env_k: usize,
        #[arg(long, default_value_t = 5.0)]
        sample_dt: f64,
    },
    /// Exact generator-level time-reversal identity on small cycles
    ReverseCheck {
        #[arg(long, default_value_t = 2)]
        n_min: usize,
        #[arg(long, default_value_t = 8)]
        n_max: usize,
    },
    /// Full small-cycle oracle report (stationarity, reversal, drift, flux)
    OracleReport {
        #[arg(long, default_value_t = 2)]
        n_min: usize,
        #[arg(long, default_value_t = 8)]
        n_max: usize,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CliDirection {
    Right,
    Left,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate { .. } => "simulate",
            Command::Drift { .. } => "drift",
            Command::Diffusion { .. } => "diffusion",
            Command::Clt { .. } => "clt",
            Command::Couple { .. } => "couple",
            Command::Flux { .. } => "flux",
            Command::EnvCheck { .. } => "env-check",
            Command::ReverseCheck { .. } => "reverse-check",
            Command::OracleReport { .. } => "oracle-report",
        }
    }
}

/// Optional values accepted from a JSON config file; explicit flags win.
#[derive(Debug, Default, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct FileConfig {
    p: Option<f64>,
    lambda_plus: Option<f64>,
    lambda_minus: Option<f64>,
    ring_size: Option<usize>,
    seed: Option<u64>,
    horizon: Option<f64>,
    trials: Option<usize>,
    window_length: Option<f64>,
    out_dir: Option<PathBuf>,
    jobs: Option<usize>,
}

/// Fully resolved run configuration, echoed verbatim into every summary.
#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ExperimentConfig {
    pub command: String,
    pub params: Params,
    pub horizon: f64,
    pub trials: usize,
    pub seed: u64,
    pub window_length: f64,
    pub out_dir: PathBuf,
    pub jobs: usize,
    pub knobs: serde_json::Value,
}

// Hand-rolled error plumbing; the binary only needs Display and a kind tag
// for the structured JSON output.
#[derive(Debug)]
pub enum CliError {
    Params(ParamsError),
    Config(String),
    Io(std::io::Error),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Params(e) => write!(f, "invalid parameters: {e}"),
            CliError::Config(msg) => write!(f, "config file: {msg}"),
            CliError::Io(e) => write!(f, "io: {e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Params(_) => "params",
            CliError::Config(_) => "config",
            CliError::Io(_) => "io",
        }
    }
}

impl From<ParamsError> for CliError {
    fn from(e: ParamsError) -> Self {
        CliError::Params(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

fn resolve(cli: &Cli) -> Result<ExperimentConfig, CliError> {
    let file: FileConfig = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path)?;
            serde_json::from_str(&text).map_err(|e| CliError::Config(e.to_string()))?
        }
        None => FileConfig::default(),
    };
    let p = cli.p.or(file.p).unwrap_or(0.5);
    let lambda_plus = cli.lambda_plus.or(file.lambda_plus).unwrap_or(0.5);
    let lambda_minus = cli.lambda_minus.or(file.lambda_minus).unwrap_or(0.5);
    let ring_size = cli.ring_size.or(file.ring_size).unwrap_or(1024);
    let params = Params::new(ring_size, p, lambda_plus, lambda_minus)?;
    Ok(ExperimentConfig {
        command: cli.command.name().to_string(),
        params,
        horizon: cli.horizon.or(file.horizon).unwrap_or(200.0),
        trials: cli.trials.or(file.trials).unwrap_or(16),
        seed: cli.seed.or(file.seed).unwrap_or(1),
        window_length: cli.window_length.or(file.window_length).unwrap_or(100.0),
        out_dir: cli
            .out_dir
            .clone()
            .or(file.out_dir)
            .unwrap_or_else(|| PathBuf::from("toom-out")),
        jobs: cli.jobs.or(file.jobs).unwrap_or(0),
        knobs: json!({}),
    })
}

fn fmt_f64(x: f64) -> String {
    format!("{x}")
}

/// Run the resolved command; `Ok(true)` when every verdict passed.
pub fn execute(cli: Cli) -> Result<bool, CliError> {
    let mut config = resolve(&cli)?;
    if config.jobs > 0 {
        // Ignore the error when a global pool already exists (tests).
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(config.jobs)
            .build_global();
    }
    let started = Instant::now();
    let dir = config.out_dir.clone();
    let command_name = cli.command.name();

    let verdicts = match &cli.command {
        Command::Simulate { events_out, tag_site, tag_sign, sample_dt, direction } => {
            config.knobs = json!({
                "eventsOut": events_out,
                "tagSite": tag_site,
                "tagSign": tag_sign,
                "sampleDt": sample_dt,
                "direction": direction,
            });
            run_simulate(&config, events_out.as_deref(), *tag_site, *tag_sign, *sample_dt, *direction, started)?
        }
        Command::Drift { sign } => {
            config.knobs = json!({ "sign": sign });
            run_drift(&config, *sign, started)?
        }
        Command::Diffusion { sample_dt, lag_max, windows } => {
            config.knobs = json!({ "sampleDt": sample_dt, "lagMax": lag_max, "windows": windows });
            run_diffusion(&config, *sample_dt, *lag_max, *windows, false, started)?
        }
        Command::Clt { sample_dt, lag_max, windows } => {
            config.knobs = json!({ "sampleDt": sample_dt, "lagMax": lag_max, "windows": windows });
            run_diffusion(&config, *sample_dt, *lag_max, *windows, true, started)?
        }
        Command::Couple { mode, c_grid, r_grid, s_start, s_len, series_dt } => {
            config.knobs = json!({
                "mode": mode,
                "cGrid": c_grid,
                "rGrid": r_grid,
                "sStart": s_start,
                "sLen": s_len,
                "seriesDt": series_dt,
            });
            run_couple(&config, *mode, c_grid, r_grid, *s_start, *s_len, *series_dt, started)?
        }
        Command::Flux { t_grid, gamma_grid, bootstrap } => {
            config.knobs = json!({ "tGrid": t_grid, "gammaGrid": gamma_grid, "bootstrap": bootstrap });
            run_flux(&config, t_grid, gamma_grid, *bootstrap, started)?
        }
        Command::EnvCheck { env_k, sample_dt } => {
            config.knobs = json!({ "envK": env_k, "sampleDt": sample_dt });
            run_env_check(&config, *env_k, *sample_dt, started)?
        }
        Command::ReverseCheck { n_min, n_max } => {
            config.knobs = json!({ "nMin": n_min, "nMax": n_max });
            run_reverse_check(&config, *n_min, *n_max, started)?
        }
        Command::OracleReport { n_min, n_max } => {
            config.knobs = json!({ "nMin": n_min, "nMax": n_max });
            run_oracle_report(&config, *n_min, *n_max, started)?
        }
    };
    let _ = command_name;
    let _ = dir;
    Ok(verdicts)
}

#[allow(clippy::too_many_arguments)]
fn run_simulate(
    config: &ExperimentConfig,
    events_out: Option<&str>,
    tag_site: Option<usize>,
    tag_sign: i8,
    sample_dt: f64,
    direction: CliDirection,
    started: Instant,
) -> Result<bool, CliError> {
    let params = &config.params;
    let trial_seed = derive_trial_seed(config.seed, 0);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_role_seed(trial_seed, 0));
    let mut spins = SpinConfig::sample(params, &mut rng);
    let mut tagged = tag_site.map(|site| init_tagged(&mut spins, site, tag_sign));
    let initial_plus = spins.plus_count();
    let mut stream = EventStream::new(derive_role_seed(trial_seed, 1), params);
    let mut log = Vec::new();
    let mut series = vec![(0.0f64, tagged.map_or(0, |t| t.position_unwrapped()))];
    // Observable series: additive functional of spin(0) plus the per-sign
    // integrated currents across the mid-ring bond.
    let mut current = CurrentAccumulator::new(params.ring_size() / 2);
    let mut additive = 0.0f64;
    let mut last_time = 0.0f64;
    let mut observable_rows = vec![(0.0f64, 0.0f64, 0u64, 0u64)];
    let mut next_sample = 1u64;
    let mut events = 0u64;
    let mut executed = 0u64;
    loop {
        let event = stream.next_event();
        let cutoff = event.time.min(config.horizon);
        while next_sample as f64 * sample_dt <= cutoff {
            let t = next_sample as f64 * sample_dt;
            // The configuration is constant on [last_time, t].
            let x = additive + f64::from(spins.spin(0)) * (t - last_time);
            observable_rows.push((t, x, current.count_plus, current.count_minus));
            if let Some(state) = tagged.as_ref() {
                series.push((t, state.position_unwrapped()));
            }
            next_sample += 1;
        }
        if event.time > config.horizon {
            break;
        }
        additive += f64::from(spins.spin(0)) * (event.time - last_time);
        last_time = event.time;
        let jump = match direction {
            CliDirection::Right => apply_event(&mut spins, &event),
            CliDirection::Left => apply_event_adjoint(&mut spins, &event),
        };
        current.record(&jump, params.ring_size());
        if let Some(t) = tagged.as_mut() {
            if direction == CliDirection::Right {
                t.apply_jump(&jump, params.ring_size());
            }
        }
        events += 1;
        if jump.executed {
            executed += 1;
            if events_out.is_some() {
                log.push(match direction {
                    CliDirection::Right => JumpLogRecord::from_jump(&jump),
                    CliDirection::Left => JumpLogRecord::with_direction(&jump, Direction::Left),
                });
            }
        }
    }
    if let Some(name) = events_out {
        write_jsonl(&config.out_dir, name, log)?;
    }
    if tagged.is_some() {
        write_csv(
            &config.out_dir,
            "simulate_tagged.csv",
            "t,y_unwrapped",
            series.iter().map(|(t, y)| format!("{},{y}", fmt_f64(*t))),
        )?;
    }
    write_csv(
        &config.out_dir,
        "simulate_observables.csv",
        "t,x_additive,j_plus,j_minus,j_total",
        observable_rows.iter().map(|(t, x, jp, jm)| {
            format!("{},{},{jp},{jm},{}", fmt_f64(*t), fmt_f64(*x), jp + jm)
        }),
    )?;
    let final_plus = spins.plus_count();
    let verdicts = vec![Verdict::new(
        "particle-conservation",
        final_plus == initial_plus && final_plus == spins.recount_plus(),
        format!("plus count {initial_plus} -> {final_plus}"),
    )];
    let results = json!({
        "events": events,
        "executed": executed,
        "initialPlusCount": initial_plus,
        "finalPlusCount": final_plus,
        "finalTaggedPosition": tagged.map(|t| t.position_unwrapped()),
    });
    write_summary(&config.out_dir, "simulate", config, results, &verdicts, started.elapsed().as_secs_f64())?;
    Ok(verdicts.iter().all(|v| v.pass))
}

fn run_drift(config: &ExperimentConfig, sign: i8, started: Instant) -> Result<bool, CliError> {
    let report = drift_experiment(
        &config.params,
        sign,
        config.horizon,
        config.trials,
        config.seed,
        None,
        0.0,
    );
    let tolerance = f64::max(0.05, 3.0 * report.pooled.se);
    let gap = (report.pooled.value - report.formula).abs();
    let verdicts = vec![Verdict::new(
        "drift-matches-formula",
        gap < tolerance,
        format!(
            "v_hat {} vs formula {} (|gap| {} < {})",
            report.pooled.value, report.formula, gap, tolerance
        ),
    )];
    write_csv(
        &config.out_dir,
        "drift_trials.csv",
        "trial,velocity",
        report
            .velocities
            .iter()
            .enumerate()
            .map(|(i, v)| format!("{i},{}", fmt_f64(*v))),
    )?;
    write_summary(&config.out_dir, "drift", config, &report, &verdicts, started.elapsed().as_secs_f64())?;
    Ok(verdicts.iter().all(|v| v.pass))
}

fn run_diffusion(
    config: &ExperimentConfig,
    sample_dt: f64,
    lag_max: usize,
    windows: usize,
    clt_focus: bool,
    started: Instant,
) -> Result<bool, CliError> {
    let report = diffusion_experiment(
        &config.params,
        1,
        config.window_length,
        windows,
        config.trials,
        config.seed,
        sample_dt,
        lag_max,
    );
    let gk = &report.green_kubo;
    let mut verdicts = Vec::new();
    if clt_focus {
        let m = &report.moments;
        verdicts.push(Verdict::new(
            "skewness-gaussian",
            m.skewness.abs() < f64::max(0.1, 3.0 * m.se_skewness),
            format!("skew {} (se {})", m.skewness, m.se_skewness),
        ));
        verdicts.push(Verdict::new(
            "kurtosis-gaussian",
            m.excess_kurtosis.abs() < f64::max(0.2, 3.0 * m.se_kurtosis),
            format!("excess kurtosis {} (se {})", m.excess_kurtosis, m.se_kurtosis),
        ));
        verdicts.push(Verdict::new(
            "variance-linearity",
            (0.9..=1.1).contains(&report.variance_ratio),
            format!("Var(2w)/(2 Var(w)) = {}", report.variance_ratio),
        ));
    } else {
        verdicts.push(Verdict::new(
            "diffusion-positive",
            report.direct.lo() > 0.0,
            format!("direct D {} (95% lo {})", report.direct.value, report.direct.lo()),
        ));
        let tight = report.direct.relative_ci() < 0.05 && gk.total.relative_ci() < 0.05;
        let rel_gap =
            (report.direct.value - gk.total.value).abs() / (0.5 * (report.direct.value + gk.total.value));
        verdicts.push(Verdict::new(
            "green-kubo-agreement",
            tight && rel_gap < 0.10 && !gk.flagged,
            format!(
                "direct {} vs D1+D2 {} (rel gap {}, CIs tight: {}, flagged: {})",
                report.direct.value, gk.total.value, rel_gap, tight, gk.flagged
            ),
        ));
    }
    write_csv(
        &config.out_dir,
        "diffusion_autocov.csv",
        "lag,time_lag,velocity_autocov,noise_band",
        gk.autocov.iter().enumerate().map(|(lag, c)| {
            format!(
                "{lag},{},{},{}",
                fmt_f64(lag as f64 * sample_dt),
                fmt_f64(*c),
                fmt_f64(gk.noise_band[lag])
            )
        }),
    )?;
    write_csv(
        &config.out_dir,
        "diffusion_increments.csv",
        "index,increment",
        report
            .increments
            .increments
            .iter()
            .enumerate()
            .map(|(i, x)| format!("{i},{}", fmt_f64(*x))),
    )?;
    let command = if clt_focus { "clt" } else { "diffusion" };
    write_summary(&config.out_dir, command, config, &report, &verdicts, started.elapsed().as_secs_f64())?;
    Ok(verdicts.iter().all(|v| v.pass))
}

#[allow(clippy::too_many_arguments)]
fn run_couple(
    config: &ExperimentConfig,
    mode: CoupleMode,
    c_grid: &[f64],
    r_grid: &[i64],
    s_start: usize,
    s_len: Option<usize>,
    series_dt: f64,
    started: Instant,
) -> Result<bool, CliError> {
    let params = &config.params;
    match mode {
        CoupleMode::Front => {
            let report =
                front_speed_experiment(params, config.trials, config.horizon, c_grid, config.seed);
            let mut verdicts = vec![Verdict::new(
                "front-never-moves-left",
                report.displacements.iter().all(|&d| d >= 0),
                format!("min displacement {:?}", report.displacements.iter().min()),
            )];
            if let Some(slot) = c_grid.iter().position(|&c| c == 0.0) {
                verdicts.push(Verdict::new(
                    "zero-speed-fraction-empty",
                    report.fraction_below[slot] == 0.0,
                    format!("P(front < 0) = {}", report.fraction_below[slot]),
                ));
            }
            write_csv(
                &config.out_dir,
                "couple_front_tail.csv",
                "c,fraction_below",
                c_grid
                    .iter()
                    .zip(&report.fraction_below)
                    .map(|(c, f)| format!("{},{}", fmt_f64(*c), fmt_f64(*f))),
            )?;
            write_csv(
                &config.out_dir,
                "couple_front_trials.csv",
                "trial,displacement",
                report
                    .displacements
                    .iter()
                    .enumerate()
                    .map(|(i, d)| format!("{i},{d}")),
            )?;
            write_summary(&config.out_dir, "couple", config, &report, &verdicts, started.elapsed().as_secs_f64())?;
            Ok(verdicts.iter().all(|v| v.pass))
        }
        CoupleMode::Gap => {
            let seed_len = s_len.unwrap_or(params.ring_size() / 2);
            let report = tagged_gap_experiment(
                params,
                config.trials,
                config.horizon,
                s_start,
                seed_len,
                c_grid,
                config.seed,
            );
            let verdicts = vec![Verdict::new(
                "front-stays-ahead-of-tag",
                !report.min_gaps.is_empty() && report.min_gaps.iter().all(|&g| g > 0),
                format!("min gap over trials {:?}", report.min_gaps.iter().min()),
            )];
            write_csv(
                &config.out_dir,
                "couple_gap_trials.csv",
                "trial,min_gap",
                report.min_gaps.iter().enumerate().map(|(i, g)| format!("{i},{g}")),
            )?;
            let series = gap_series(params, config.seed, s_start, seed_len, config.horizon, series_dt);
            write_csv(
                &config.out_dir,
                "couple_gap_series.csv",
                "t,front,y,gap,discrepancy_count",
                series.iter().map(|(t, front, y, gap, count)| {
                    format!("{},{front},{y},{gap},{count}", fmt_f64(*t))
                }),
            )?;
            write_summary(&config.out_dir, "couple", config, &report, &verdicts, started.elapsed().as_secs_f64())?;
            Ok(verdicts.iter().all(|v| v.pass))
        }
        CoupleMode::MaxSpeed => {
            let report =
                max_speed_experiment(params, config.trials, config.horizon, r_grid, config.seed);
            let monotone = report.tail_probability.windows(2).all(|w| w[1] <= w[0]);
            let mut verdicts = vec![Verdict::new(
                "tail-monotone-in-r",
                monotone,
                format!("{:?}", report.tail_probability),
            )];
            // Stretched-exponential diagnostic: log P against sqrt(R/t).
            let xs: Vec<f64> = report
                .r_grid
                .iter()
                .map(|&r| (r.max(0) as f64 / config.horizon).sqrt())
                .collect();
            if let Some((slope, _, r2)) = log_linear_fit(&xs, &report.tail_probability) {
                verdicts.push(Verdict::new(
                    "tail-shape-stretched-exponential",
                    slope < 0.0,
                    format!("log-tail slope {slope} (r^2 {r2})"),
                ));
            }
            write_csv(
                &config.out_dir,
                "couple_maxspeed_tail.csv",
                "r,tail_probability",
                report
                    .r_grid
                    .iter()
                    .zip(&report.tail_probability)
                    .map(|(r, p)| format!("{r},{}", fmt_f64(*p))),
            )?;
            write_summary(&config.out_dir, "couple", config, &report, &verdicts, started.elapsed().as_secs_f64())?;
            Ok(verdicts.iter().all(|v| v.pass))
        }
    }
}

/// Time series (t, front, Y, gap, count) of the first gap-mode trial,
/// reproducing the experiment's seeding exactly.
fn gap_series(
    params: &Params,
    master_seed: u64,
    s_start: usize,
    s_len: usize,
    horizon: f64,
    series_dt: f64,
) -> Vec<(f64, i64, i64, i64, usize)> {
    let trial_seed = derive_trial_seed(master_seed, 0);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_role_seed(trial_seed, 0));
    let seed_sites: Vec<usize> = (s_start..s_start + s_len).collect();
    let (first, second) = sample_mu_s(params, &seed_sites, &mut rng);
    let stream = EventStream::new(derive_role_seed(trial_seed, 1), params);
    let mut pair = CoupledPair::new(first, second, stream, s_start);
    pair.tag(0, 1);
    let mut out = Vec::new();
    let mut next_sample = 0u64;
    loop {
        let time = pair.stream.current_time();
        while next_sample as f64 * series_dt <= time {
            let t = next_sample as f64 * series_dt;
            let tag = pair.tagged.as_ref().unwrap().position_unwrapped();
            let front = pair.view.front_unwrapped().unwrap_or(i64::MAX);
            let gap = if front == i64::MAX { i64::MAX } else { front - tag };
            out.push((t, front, tag, gap, pair.view.count()));
            next_sample += 1;
        }
        if time > horizon {
            break;
        }
        pair.step();
    }
    out
}

fn run_flux(
    config: &ExperimentConfig,
    t_grid: &[f64],
    gamma_grid: &[f64],
    bootstrap: usize,
    started: Instant,
) -> Result<bool, CliError> {
    let report = flux_experiment(
        &config.params,
        t_grid,
        config.trials,
        gamma_grid,
        bootstrap,
        config.seed,
    );
    let mut verdicts = Vec::new();
    for at in &report.per_t {
        let gap = (at.mean_rate.value - report.rate_closed_form).abs();
        verdicts.push(Verdict::new(
            &format!("mean-rate-t{}", at.t),
            gap < 3.0 * at.mean_rate.se,
            format!(
                "J/t = {} vs {} (se {})",
                at.mean_rate.value, report.rate_closed_form, at.mean_rate.se
            ),
        ));
    }
    // MGF boundedness probe: for each gamma the bootstrap bands across t must
    // pairwise overlap.
    for (slot, &gamma) in gamma_grid.iter().enumerate() {
        let lo = report.per_t.iter().map(|at| at.mgf[slot].lo).fold(f64::NEG_INFINITY, f64::max);
        let hi = report.per_t.iter().map(|at| at.mgf[slot].hi).fold(f64::INFINITY, f64::min);
        verdicts.push(Verdict::new(
            &format!("mgf-stable-gamma{gamma}"),
            lo <= hi,
            format!("band intersection [{lo}, {hi}]"),
        ));
    }
    write_csv(
        &config.out_dir,
        "flux_mgf.csv",
        "t,gamma,mgf,lo,hi",
        report.per_t.iter().flat_map(|at| {
            at.mgf.iter().map(move |point| {
                format!(
                    "{},{},{},{},{}",
                    fmt_f64(at.t),
                    fmt_f64(point.gamma),
                    fmt_f64(point.value),
                    fmt_f64(point.lo),
                    fmt_f64(point.hi)
                )
            })
        }),
    )?;
    write_csv(
        &config.out_dir,
        "flux_rates.csv",
        "t,mean_rate,se",
        report.per_t.iter().map(|at| {
            format!(
                "{},{},{}",
                fmt_f64(at.t),
                fmt_f64(at.mean_rate.value),
                fmt_f64(at.mean_rate.se)
            )
        }),
    )?;
    write_summary(&config.out_dir, "flux", config, &report, &verdicts, started.elapsed().as_secs_f64())?;
    Ok(verdicts.iter().all(|v| v.pass))
}

fn run_env_check(
    config: &ExperimentConfig,
    env_k: usize,
    sample_dt: f64,
    started: Instant,
) -> Result<bool, CliError> {
    let report = drift_experiment(
        &config.params,
        1,
        config.horizon,
        config.trials,
        config.seed,
        Some(env_k),
        sample_dt,
    );
    let env = report.env.as_ref().expect("env sampling enabled");
    let p = config.params.p();
    let worst = env
        .offsets
        .iter()
        .zip(env.freq_mean.iter().zip(&env.freq_se))
        .map(|(offset, (freq, se))| (*offset, (freq - p).abs(), *se))
        .max_by(|a, b| (a.1 / a.2.max(1e-12)).total_cmp(&(b.1 / b.2.max(1e-12))))
        .expect("nonempty offsets");
    let all_within = env
        .freq_mean
        .iter()
        .zip(&env.freq_se)
        .all(|(freq, se)| (freq - p).abs() < 3.0 * se);
    let verdicts = vec![Verdict::new(
        "environment-bernoulli",
        all_within,
        format!(
            "worst offset {} deviates {} (se {})",
            worst.0, worst.1, worst.2
        ),
    )];
    write_csv(
        &config.out_dir,
        "env_frequencies.csv",
        "offset,freq_plus,se",
        env.offsets.iter().zip(env.freq_mean.iter().zip(&env.freq_se)).map(
            |(offset, (freq, se))| format!("{offset},{},{}", fmt_f64(*freq), fmt_f64(*se)),
        ),
    )?;
    write_summary(&config.out_dir, "env-check", config, &report, &verdicts, started.elapsed().as_secs_f64())?;
    Ok(verdicts.iter().all(|v| v.pass))
}

fn run_reverse_check(
    config: &ExperimentConfig,
    n_min: usize,
    n_max: usize,
    started: Instant,
) -> Result<bool, CliError> {
    let mut rows = Vec::new();
    let mut verdicts = Vec::new();
    for n in n_min..=n_max {
        let params = config.params.with_ring_size(n.max(2))?;
        let right = oracle::build_generator(n, &params, Direction::Right)
            .map_err(|e| CliError::Config(e.to_string()))?;
        let left = oracle::build_generator(n, &params, Direction::Left)
            .map_err(|e| CliError::Config(e.to_string()))?;
        let residual = oracle::check_reversal(&right, &left, params.p());
        verdicts.push(Verdict::new(
            &format!("reversal-n{n}"),
            residual < 1e-12,
            format!("residual {residual:e}"),
        ));
        rows.push(json!({ "n": n, "reversalResidual": residual }));
    }
    write_summary(&config.out_dir, "reverse-check", config, rows, &verdicts, started.elapsed().as_secs_f64())?;
    Ok(verdicts.iter().all(|v| v.pass))
}

fn run_oracle_report(
    config: &ExperimentConfig,
    n_min: usize,
    n_max: usize,
    started: Instant,
) -> Result<bool, CliError> {
    let mut rows = Vec::new();
    let mut verdicts = Vec::new();
    for n in n_min..=n_max {
        let params = config.params.with_ring_size(n.max(2))?;
        let report = oracle::oracle_report(n, &params).map_err(|e| CliError::Config(e.to_string()))?;
        verdicts.push(Verdict::new(
            &format!("stationarity-n{n}"),
            report.stationarity_residual < 1e-12,
            format!("residual {:e}", report.stationarity_residual),
        ));
        verdicts.push(Verdict::new(
            &format!("reversal-n{n}"),
            report.reversal_residual < 1e-12,
            format!("residual {:e}", report.reversal_residual),
        ));
        rows.push(report);
    }
    write_csv(
        &config.out_dir,
        "oracle_report.csv",
        "n,p,lambda_plus,stationarity_residual,reversal_residual,exact_drift,exact_edge_rate",
        rows.iter().map(|r| {
            format!(
                "{},{},{},{},{},{},{}",
                r.n,
                fmt_f64(r.p),
                fmt_f64(r.lambda_plus),
                fmt_f64(r.stationarity_residual),
                fmt_f64(r.reversal_residual),
                fmt_f64(r.exact_drift),
                fmt_f64(r.exact_edge_rate)
            )
        }),
    )?;
    write_summary(&config.out_dir, "oracle-report", config, rows, &verdicts, started.elapsed().as_secs_f64())?;
    Ok(verdicts.iter().all(|v| v.pass))
}
