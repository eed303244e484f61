//! Estimators turning trajectories into verdicts: batch means, direct and
//! Green-Kubo diffusion estimates, CLT moment tests and autocovariance
//! curves.

use rand::Rng;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum StatsError {
    #[error("series too short: need at least {needed}, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("batch count must be at least 8, got {0}")]
    TooFewBatches(usize),
    #[error("window length must be positive")]
    BadWindow,
}

/// Point estimate with a standard error; 95% intervals use 1.96 se.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EstimateCi {
    pub value: f64,
    pub se: f64,
}

impl EstimateCi {
    pub fn lo(&self) -> f64 {
        self.value - 1.96 * self.se
    }

    pub fn hi(&self) -> f64 {
        self.value + 1.96 * self.se
    }

    /// Half-width of the 95% interval relative to the estimate.
    pub fn relative_ci(&self) -> f64 {
        (1.96 * self.se / self.value).abs()
    }

    pub fn from_samples(samples: &[f64]) -> Self {
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let var = if samples.len() < 2 {
            0.0
        } else {
            samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
        };
        Self { value: mean, se: (var / n).sqrt() }
    }
}

/// Mean and standard error of a correlated stationary series by the method of
/// batch means: the se is the spread of `b` long-batch averages, which absorbs
/// autocorrelation at the batch scale.
pub fn batch_means(series: &[f64], batches: usize) -> Result<(f64, f64), StatsError> {
    if batches < 8 {
        return Err(StatsError::TooFewBatches(batches));
    }
    if series.len() < 2 * batches {
        return Err(StatsError::TooShort { needed: 2 * batches, got: series.len() });
    }
    let batch_len = series.len() / batches;
    let used = batch_len * batches;
    let means: Vec<f64> = series[..used]
        .chunks_exact(batch_len)
        .map(|chunk| chunk.iter().sum::<f64>() / batch_len as f64)
        .collect();
    let grand = means.iter().sum::<f64>() / batches as f64;
    let var = means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / (batches as f64 - 1.0);
    Ok((grand, (var / batches as f64).sqrt()))
}

/// Displacement increments over consecutive, non-overlapping windows of equal
/// real-time length.
#[derive(Clone, Debug)]
pub struct IncrementSeries {
    pub window: f64,
    pub increments: Vec<f64>,
}

impl IncrementSeries {
    pub fn new(window: f64, increments: Vec<f64>) -> Result<Self, StatsError> {
        if window <= 0.0 {
            return Err(StatsError::BadWindow);
        }
        Ok(Self { window, increments })
    }

    /// Merge consecutive pairs into windows of doubled length.
    pub fn doubled(&self) -> Self {
        Self {
            window: 2.0 * self.window,
            increments: self
                .increments
                .chunks_exact(2)
                .map(|pair| pair[0] + pair[1])
                .collect(),
        }
    }
}

/// Direct diffusion estimate: sample variance of the per-window increments
/// (drift removed by the pooled mean) divided by the window length, with a
/// jackknife standard error.
pub fn estimate_diffusion_direct(series: &IncrementSeries) -> Result<EstimateCi, StatsError> {
    let xs = &series.increments;
    let n = xs.len();
    if n < 8 {
        return Err(StatsError::TooShort { needed: 8, got: n });
    }
    let nf = n as f64;
    let s1: f64 = xs.iter().sum();
    let s2: f64 = xs.iter().map(|x| x * x).sum();
    let var = (s2 - s1 * s1 / nf) / (nf - 1.0);
    let value = var / series.window;
    // Leave-one-out estimates from the power sums.
    let mut jack = Vec::with_capacity(n);
    for &x in xs {
        let m = nf - 1.0;
        let ss = (s2 - x * x) - (s1 - x) * (s1 - x) / m;
        jack.push(ss / (m - 1.0) / series.window);
    }
    let jack_mean = jack.iter().sum::<f64>() / nf;
    let se = ((nf - 1.0) / nf * jack.iter().map(|t| (t - jack_mean).powi(2)).sum::<f64>()).sqrt();
    Ok(EstimateCi { value, se })
}

/// Sample skewness and excess kurtosis with jackknife standard errors.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct MomentReport {
    pub n: usize,
    pub skewness: f64,
    pub excess_kurtosis: f64,
    pub se_skewness: f64,
    pub se_kurtosis: f64,
}

impl MomentReport {
    /// Gaussian-compatibility gate: |skew| below max(0.1, 3 se) and
    /// |excess kurtosis| below max(0.2, 3 se).
    pub fn passes(&self) -> bool {
        self.skewness.abs() < f64::max(0.1, 3.0 * self.se_skewness)
            && self.excess_kurtosis.abs() < f64::max(0.2, 3.0 * self.se_kurtosis)
    }
}

fn central_moments_from_raw(r1: f64, r2: f64, r3: f64, r4: f64) -> (f64, f64, f64) {
    let m2 = r2 - r1 * r1;
    let m3 = r3 - 3.0 * r1 * r2 + 2.0 * r1.powi(3);
    let m4 = r4 - 4.0 * r1 * r3 + 6.0 * r1 * r1 * r2 - 3.0 * r1.powi(4);
    (m2, m3, m4)
}

pub fn clt_moment_test(increments: &[f64]) -> Result<MomentReport, StatsError> {
    let n = increments.len();
    if n < 16 {
        return Err(StatsError::TooShort { needed: 16, got: n });
    }
    let nf = n as f64;
    // Pre-center by the pooled mean: moment ratios are shift invariant and
    // the power sums stay well conditioned.
    let mean = increments.iter().sum::<f64>() / nf;
    let xs: Vec<f64> = increments.iter().map(|x| x - mean).collect();
    let sums = xs.iter().fold([0.0f64; 4], |mut acc, &x| {
        let x2 = x * x;
        acc[0] += x;
        acc[1] += x2;
        acc[2] += x2 * x;
        acc[3] += x2 * x2;
        acc
    });
    let stats_of = |s1: f64, s2: f64, s3: f64, s4: f64, count: f64| -> (f64, f64) {
        let (m2, m3, m4) =
            central_moments_from_raw(s1 / count, s2 / count, s3 / count, s4 / count);
        (m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0)
    };
    let (skewness, excess_kurtosis) = stats_of(sums[0], sums[1], sums[2], sums[3], nf);
    let mut jack_skew = Vec::with_capacity(n);
    let mut jack_kurt = Vec::with_capacity(n);
    for &x in &xs {
        let x2 = x * x;
        let (s, k) = stats_of(
            sums[0] - x,
            sums[1] - x2,
            sums[2] - x2 * x,
            sums[3] - x2 * x2,
            nf - 1.0,
        );
        jack_skew.push(s);
        jack_kurt.push(k);
    }
    let jack_se = |vals: &[f64]| -> f64 {
        let m = vals.iter().sum::<f64>() / nf;
        ((nf - 1.0) / nf * vals.iter().map(|v| (v - m).powi(2)).sum::<f64>()).sqrt()
    };
    Ok(MomentReport {
        n,
        skewness,
        excess_kurtosis,
        se_skewness: jack_se(&jack_skew),
        se_kurtosis: jack_se(&jack_kurt),
    })
}

/// Centered cross-covariance of two equally sampled series at one lag:
/// `mean[(f_{i+lag} - mean_f) (g_i - mean_g)]` with denominator `n - lag`.
pub fn cross_covariance(f: &[f64], g: &[f64], mean_f: f64, mean_g: f64, lag: usize) -> f64 {
    assert_eq!(f.len(), g.len());
    let n = f.len();
    assert!(lag < n);
    let mut sum = 0.0;
    for i in 0..n - lag {
        sum += (f[i + lag] - mean_f) * (g[i] - mean_g);
    }
    sum / (n - lag) as f64
}

/// Autocovariance / cross-covariance curve with circular block bootstrap
/// bands (one standard deviation per lag).
#[derive(Clone, Debug, Serialize)]
pub struct AutocovDecay {
    pub lags: Vec<usize>,
    pub cov: Vec<f64>,
    pub band_sd: Vec<f64>,
}

pub fn autocov_decay<R: Rng + ?Sized>(
    f: &[f64],
    g: &[f64],
    lags: &[usize],
    bootstrap: usize,
    rng: &mut R,
) -> Result<AutocovDecay, StatsError> {
    assert_eq!(f.len(), g.len());
    let n = f.len();
    let max_lag = lags.iter().copied().max().unwrap_or(0);
    if n < 4 * (max_lag + 1) {
        return Err(StatsError::TooShort { needed: 4 * (max_lag + 1), got: n });
    }
    let mean_f = f.iter().sum::<f64>() / n as f64;
    let mean_g = g.iter().sum::<f64>() / n as f64;
    let cov: Vec<f64> = lags
        .iter()
        .map(|&lag| cross_covariance(f, g, mean_f, mean_g, lag))
        .collect();
    // Circular block bootstrap, block length comfortably beyond the largest
    // lag so within-block dependence is preserved.
    let block = (4 * (max_lag + 1)).min(n);
    let blocks_needed = n.div_ceil(block);
    let mut boot_cov = vec![Vec::with_capacity(bootstrap); lags.len()];
    let mut fb = Vec::with_capacity(blocks_needed * block);
    let mut gb = Vec::with_capacity(blocks_needed * block);
    for _ in 0..bootstrap {
        fb.clear();
        gb.clear();
        for _ in 0..blocks_needed {
            let start = rng.random_range(0..n);
            for j in 0..block {
                let idx = (start + j) % n;
                fb.push(f[idx]);
                gb.push(g[idx]);
            }
        }
        fb.truncate(n);
        gb.truncate(n);
        let mf = fb.iter().sum::<f64>() / n as f64;
        let mg = gb.iter().sum::<f64>() / n as f64;
        for (slot, &lag) in lags.iter().enumerate() {
            boot_cov[slot].push(cross_covariance(&fb, &gb, mf, mg, lag));
        }
    }
    let band_sd = boot_cov
        .iter()
        .map(|vals| {
            if vals.len() < 2 {
                return 0.0;
            }
            let m = vals.iter().sum::<f64>() / vals.len() as f64;
            (vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (vals.len() - 1) as f64).sqrt()
        })
        .collect();
    Ok(AutocovDecay { lags: lags.to_vec(), cov, band_sd })
}

/// Least-squares fit of `log y` against `x`, reporting (slope, intercept,
/// r^2) over the points with positive y. Diagnostic for exponential or
/// stretched-exponential tails.
pub fn log_linear_fit(x: &[f64], y: &[f64]) -> Option<(f64, f64, f64)> {
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|&(_, &yi)| yi > 0.0)
        .map(|(&xi, &yi)| (xi, yi.ln()))
        .collect();
    if pts.len() < 3 {
        return None;
    }
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let denom = n * sxx - sx * sx;
    if denom.abs() < 1e-12 {
        return None;
    }
    let slope = (n * sxy - sx * sy) / denom;
    let intercept = (sy - slope * sx) / n;
    let mean_y = sy / n;
    let ss_tot: f64 = pts.iter().map(|p| (p.1 - mean_y).powi(2)).sum();
    let ss_res: f64 = pts
        .iter()
        .map(|p| (p.1 - slope * p.0 - intercept).powi(2))
        .sum();
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    Some((slope, intercept, r2))
}

/// Per-trial raw material for the Green-Kubo estimate: the summed squared
/// tagged jumps, the trial duration, and the displacement increments over a
/// regular grid of bins.
#[derive(Clone, Debug)]
pub struct GreenKuboTrial {
    pub sq_jump_sum: f64,
    pub duration: f64,
    /// Displacement per sampling bin: `Y((k+1)dt) - Y(k dt)`.
    pub bin_increments: Vec<f64>,
}

/// Green-Kubo decomposition `D = D1 + D2` of the asymptotic variance rate.
///
/// `D1` is the instantaneous jump variance (mean squared jump size per unit
/// time). `D2` is twice the integrated pair correlation of the displacement
/// increments — the velocity autocorrelation integral. For a jump-driven
/// observable the pair correlation propagates from the post-jump
/// configuration, so it is measured from the increments themselves rather
/// than from the autocovariance of the instantaneous drift function; the two
/// differ by the jump-environment cross term.
#[derive(Clone, Debug, Serialize)]
pub struct GreenKuboEstimate {
    pub d1: EstimateCi,
    pub d2: EstimateCi,
    pub total: EstimateCi,
    pub sample_dt: f64,
    /// Lag index where the autocovariance integral was truncated.
    pub truncation_lag: usize,
    /// Set when no noise floor was reached within `lag_max`: the estimate is
    /// then a lower-confidence extrapolation.
    pub flagged: bool,
    /// Velocity autocovariance per lag (bin covariance / dt^2).
    pub autocov: Vec<f64>,
    pub noise_band: Vec<f64>,
}

/// Assemble D1 and D2 from independent trials.
///
/// Per trial (own-mean centering, so conserved-density differences between
/// trials do not leak in):
///
/// `d2_i = [C_i(0) - d1_i*dt + 2 * sum_{l=1..l*} C_i(l)] / dt`
///
/// where `C_i(l)` is the lag-l autocovariance of the bin increments. The
/// first term is the within-bin excess over the pure jump noise (the `[0,dt)`
/// sliver of the correlation integral); the sum is truncated at the first run
/// of three consecutive lags inside the between-trial noise band (two
/// standard errors). The total `d1 + d2` telescopes to the long-run variance
/// rate of the increment series.
pub fn estimate_green_kubo(
    trials: &[GreenKuboTrial],
    sample_dt: f64,
    lag_max: usize,
) -> Result<GreenKuboEstimate, StatsError> {
    if trials.len() < 2 {
        return Err(StatsError::TooShort { needed: 2, got: trials.len() });
    }
    let min_len = trials.iter().map(|t| t.bin_increments.len()).min().unwrap_or(0);
    if min_len <= lag_max + 3 {
        return Err(StatsError::TooShort { needed: lag_max + 4, got: min_len });
    }

    // Per-trial autocovariance of the bin increments, own-mean centering.
    let per_trial: Vec<Vec<f64>> = trials
        .iter()
        .map(|t| {
            let mean = t.bin_increments.iter().sum::<f64>() / t.bin_increments.len() as f64;
            (0..=lag_max)
                .map(|lag| cross_covariance(&t.bin_increments, &t.bin_increments, mean, mean, lag))
                .collect()
        })
        .collect();
    let t_count = trials.len() as f64;
    let dt2 = sample_dt * sample_dt;
    let mut autocov = vec![0.0; lag_max + 1];
    let mut noise_band = vec![0.0; lag_max + 1];
    for lag in 0..=lag_max {
        let mean = per_trial.iter().map(|c| c[lag]).sum::<f64>() / t_count;
        let var = per_trial
            .iter()
            .map(|c| (c[lag] - mean).powi(2))
            .sum::<f64>()
            / (t_count - 1.0);
        autocov[lag] = mean / dt2;
        noise_band[lag] = 2.0 * (var / t_count).sqrt() / dt2;
    }

    // Truncate at the first lag where three consecutive values sit inside the
    // noise band.
    let mut truncation_lag = lag_max;
    let mut flagged = true;
    'search: for lag in 1..=lag_max.saturating_sub(2) {
        for j in lag..lag + 3 {
            if autocov[j].abs() >= noise_band[j] {
                continue 'search;
            }
        }
        truncation_lag = lag;
        flagged = false;
        break;
    }

    let d1_vals: Vec<f64> = trials.iter().map(|t| t.sq_jump_sum / t.duration).collect();
    let d2_vals: Vec<f64> = per_trial
        .iter()
        .zip(&d1_vals)
        .map(|(cov, &d1)| {
            let lag_sum: f64 = cov[1..=truncation_lag].iter().sum();
            (cov[0] - d1 * sample_dt + 2.0 * lag_sum) / sample_dt
        })
        .collect();
    let total_vals: Vec<f64> = d1_vals.iter().zip(&d2_vals).map(|(a, b)| a + b).collect();
    Ok(GreenKuboEstimate {
        d1: EstimateCi::from_samples(&d1_vals),
        d2: EstimateCi::from_samples(&d2_vals),
        total: EstimateCi::from_samples(&total_vals),
        sample_dt,
        truncation_lag,
        flagged,
        autocov,
        noise_band,
    })
}
