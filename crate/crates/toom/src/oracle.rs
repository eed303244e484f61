//! Exact, enumeration-based ground truth on small cycles (n <= 12).
//!
//! States of the n-cycle are indexed by n-bit masks (bit x set means spin
//! `+1` at site x). Everything here is deterministic dense/sparse linear
//! algebra over at most 4096 states, so the checks run in milliseconds and to
//! near machine precision, with no Monte Carlo error budget.

use serde::Serialize;

use crate::dynamics::Direction;
use crate::params::Params;

pub const MAX_CYCLE: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum OracleError {
    #[error("cycle size {0} outside supported range 2..={MAX_CYCLE}")]
    CycleSize(usize),
    #[error("uniformization could not reach the requested tail mass")]
    TruncationUnreachable,
}

#[inline]
fn spin_of(state: usize, site: usize) -> i8 {
    if state >> site & 1 == 1 {
        1
    } else {
        -1
    }
}

fn is_monochrome(state: usize, n: usize) -> bool {
    state == 0 || state == (1usize << n) - 1
}

/// First site with opposite spin, scanning cyclically from `site` in the
/// given direction over the mask encoding. Independent of the `SpinConfig`
/// code path on purpose: the oracle must not share bugs with the simulator.
fn mask_target(state: usize, n: usize, site: usize, direction: Direction) -> Option<usize> {
    let spin = state >> site & 1;
    for step in 1..n {
        let y = match direction {
            Direction::Right => (site + step) % n,
            Direction::Left => (site + n - step) % n,
        };
        if state >> y & 1 != spin {
            return Some(y);
        }
    }
    None
}

/// Sparse rate matrix over the 2^n configurations of the n-cycle. Rows sum to
/// zero; an off-diagonal entry requires exactly one executed exchange.
#[derive(Clone, Debug)]
pub struct GeneratorMatrix {
    n: usize,
    rows: Vec<Vec<(usize, f64)>>,
    diag: Vec<f64>,
}

impl GeneratorMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn num_states(&self) -> usize {
        1 << self.n
    }

    pub fn row(&self, state: usize) -> &[(usize, f64)] {
        &self.rows[state]
    }

    pub fn diagonal(&self, state: usize) -> f64 {
        self.diag[state]
    }

    /// Off-diagonal rate from `from` to `to` (zero if absent).
    pub fn rate(&self, from: usize, to: usize) -> f64 {
        self.rows[from]
            .iter()
            .find(|&&(col, _)| col == to)
            .map_or(0.0, |&(_, q)| q)
    }

    /// Largest total exit rate, the uniformization constant.
    pub fn max_exit_rate(&self) -> f64 {
        self.diag.iter().fold(0.0, |acc, &d| acc.max(-d))
    }
}

/// Build the generator of the right- or left-moving exchange dynamics: every
/// site x with occupant sign eta contributes rate `lambda_eta` toward the
/// state with x exchanged against its scan-direction target. Monochrome
/// states have zero outflow.
pub fn build_generator(
    n: usize,
    params: &Params,
    direction: Direction,
) -> Result<GeneratorMatrix, OracleError> {
    if !(2..=MAX_CYCLE).contains(&n) {
        return Err(OracleError::CycleSize(n));
    }
    let states = 1usize << n;
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); states];
    let mut diag = vec![0.0; states];
    for state in 0..states {
        if is_monochrome(state, n) {
            continue;
        }
        let mut row: Vec<(usize, f64)> = Vec::with_capacity(n);
        for site in 0..n {
            let rate = params.rate_for(spin_of(state, site));
            if rate == 0.0 {
                continue;
            }
            let target = mask_target(state, n, site, direction)
                .expect("mixed ring always has a target");
            let next = state ^ (1 << site) ^ (1 << target);
            match row.iter_mut().find(|(col, _)| *col == next) {
                Some((_, q)) => *q += rate,
                None => row.push((next, rate)),
            }
            diag[state] -= rate;
        }
        row.sort_unstable_by_key(|&(col, _)| col);
        rows[state] = row;
    }
    Ok(GeneratorMatrix { n, rows, diag })
}

/// Product Bernoulli measure over the 2^n states.
#[derive(Clone, Debug)]
pub struct ProductMeasure {
    p: f64,
    weights: Vec<f64>,
}

impl ProductMeasure {
    pub fn new(n: usize, p: f64) -> Self {
        let states = 1usize << n;
        let weights = (0..states)
            .map(|s| {
                let ones = s.count_ones() as i32;
                p.powi(ones) * (1.0 - p).powi(n as i32 - ones)
            })
            .collect();
        Self { p, weights }
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn weight(&self, state: usize) -> f64 {
        self.weights[state]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.weights
    }
}

/// Stationarity residual `max |pi Q|` for the product measure with density p.
pub fn check_stationarity(q: &GeneratorMatrix, p: f64) -> f64 {
    let pi = ProductMeasure::new(q.n(), p);
    let mut flow = vec![0.0f64; q.num_states()];
    for state in 0..q.num_states() {
        let w = pi.weight(state);
        flow[state] += w * q.diagonal(state);
        for &(next, rate) in q.row(state) {
            flow[next] += w * rate;
        }
    }
    flow.iter().fold(0.0, |acc, &x| acc.max(x.abs()))
}

/// Generator-level time-reversal residual:
/// `max |pi(s) Q_right(s, s') - pi(s') Q_left(s', s)|` over all state pairs.
/// This is the cycle form of the adjoint identity, stronger than any single
/// path functional.
pub fn check_reversal(q_right: &GeneratorMatrix, q_left: &GeneratorMatrix, p: f64) -> f64 {
    assert_eq!(q_right.n(), q_left.n(), "generators must share the cycle size");
    let pi = ProductMeasure::new(q_right.n(), p);
    let mut residual = 0.0f64;
    for state in 0..q_right.num_states() {
        residual = residual.max(
            (pi.weight(state) * (q_right.diagonal(state) - q_left.diagonal(state))).abs(),
        );
        for &(next, rate) in q_right.row(state) {
            let back = q_left.rate(next, state);
            residual = residual.max((pi.weight(state) * rate - pi.weight(next) * back).abs());
        }
        // Entries present only in the left generator.
        for &(next, back) in q_left.row(state) {
            if q_right.rate(next, state) == 0.0 {
                residual = residual.max((pi.weight(state) * back).abs());
            }
        }
    }
    residual
}

/// Exact expected instantaneous velocity of a sign-tagged push particle under
/// the conditioned product measure on the n-cycle: enumerate all states with
/// the tagged spin at site 0, weight by the conditional measure, and sum
/// rate x displacement over every event that moves the particle.
pub fn exact_drift(n: usize, params: &Params, sign: i8) -> Result<f64, OracleError> {
    if !(2..=MAX_CYCLE).contains(&n) {
        return Err(OracleError::CycleSize(n));
    }
    let p_plus = params.p();
    let tagged_bit = usize::from(sign == 1);
    let mut drift = 0.0;
    for rest in 0..1usize << (n - 1) {
        // Bit 0 is the tagged site; the remaining n-1 sites enumerate `rest`.
        let state = (rest << 1) | tagged_bit;
        if is_monochrome(state, n) {
            continue;
        }
        let mut weight = 1.0;
        for site in 1..n {
            weight *= if spin_of(state, site) == 1 { p_plus } else { 1.0 - p_plus };
        }
        let mut velocity = 0.0;
        for site in 0..n {
            let eta = spin_of(state, site);
            let rate = params.rate_for(eta);
            if rate == 0.0 {
                continue;
            }
            let target = mask_target(state, n, site, Direction::Right)
                .expect("mixed ring always has a target");
            let block_len = (target + n - site - 1) % n;
            if eta == sign {
                // Tagged particle inside the pushed block moves +1.
                let offset = (n - site) % n;
                if offset <= block_len {
                    velocity += rate;
                }
            } else if target == 0 {
                // Tagged particle pulled from the target back to the origin.
                velocity -= rate * (block_len as f64 + 1.0);
            }
        }
        drift += weight * velocity;
    }
    Ok(drift)
}

/// Exact stationary rate of executed-jump crossings of a fixed bond under the
/// product measure. Bond `edge` sits between sites `edge - 1` and `edge`.
pub fn exact_edge_rate_at(n: usize, params: &Params, edge: usize) -> Result<f64, OracleError> {
    if !(2..=MAX_CYCLE).contains(&n) {
        return Err(OracleError::CycleSize(n));
    }
    let pi = ProductMeasure::new(n, params.p());
    let mut rate_sum = 0.0;
    for state in 0..1usize << n {
        if is_monochrome(state, n) {
            continue;
        }
        let weight = pi.weight(state);
        for site in 0..n {
            let eta = spin_of(state, site);
            let rate = params.rate_for(eta);
            if rate == 0.0 {
                continue;
            }
            let target = mask_target(state, n, site, Direction::Right)
                .expect("mixed ring always has a target");
            let d_edge = (edge + n - site) % n;
            let d_target = (target + n - site) % n;
            if d_edge >= 1 && d_edge <= d_target {
                rate_sum += weight * rate;
            }
        }
    }
    Ok(rate_sum)
}

/// Crossing rate of the wrap bond (between sites n-1 and 0); every bond gives
/// the same value by cyclic symmetry.
pub fn exact_edge_rate(n: usize, params: &Params) -> Result<f64, OracleError> {
    exact_edge_rate_at(n, params, 0)
}

/// The closed-form infinite-volume crossing rate
/// `lambda_+ p/(1-p) + lambda_- (1-p)/p` (geometric sum over block lengths).
pub fn edge_rate_closed_form(params: &Params) -> f64 {
    let p = params.p();
    params.lambda_plus() * p / (1.0 - p) + params.lambda_minus() * (1.0 - p) / p
}

/// Exact time-t distribution by uniformization: Poisson-weighted powers of
/// the uniformized kernel `P = I + Q/rate`, truncated once the remaining
/// Poisson tail mass drops below 1e-12.
pub fn transient_distribution(
    q: &GeneratorMatrix,
    initial: &[f64],
    t: f64,
) -> Result<Vec<f64>, OracleError> {
    assert_eq!(initial.len(), q.num_states());
    assert!(t >= 0.0);
    let rate = q.max_exit_rate();
    if rate == 0.0 || t == 0.0 {
        return Ok(initial.to_vec());
    }
    let mu = rate * t;
    let mut result = vec![0.0; initial.len()];
    let mut v = initial.to_vec();
    let mut covered = 0.0f64;
    // Poisson weights computed in log space; terms below 1e-18 before the
    // mode are skipped for mass but the vector is still advanced.
    let mut log_factorial = 0.0f64;
    let max_terms = (mu + 12.0 * mu.sqrt() + 64.0).ceil() as usize;
    for k in 0..=max_terms {
        if k > 0 {
            log_factorial += (k as f64).ln();
            // v <- v P = v + (v Q)/rate
            let mut flow = vec![0.0; v.len()];
            for state in 0..v.len() {
                let mass = v[state];
                if mass == 0.0 {
                    continue;
                }
                flow[state] += mass * q.diagonal(state);
                for &(next, r) in q.row(state) {
                    flow[next] += mass * r;
                }
            }
            for (vi, fi) in v.iter_mut().zip(&flow) {
                *vi += fi / rate;
            }
        }
        let weight = (k as f64 * mu.ln() - mu - log_factorial).exp();
        if weight > 0.0 {
            covered += weight;
            for (ri, vi) in result.iter_mut().zip(&v) {
                *ri += weight * vi;
            }
        }
        if 1.0 - covered < 1e-12 {
            return Ok(result);
        }
    }
    Err(OracleError::TruncationUnreachable)
}

/// One transition of the environment-seen-from-the-particle chain: target
/// environment, rate, and the tagged displacement carried by the event.
#[derive(Clone, Copy, Debug)]
struct EnvTransition {
    next: usize,
    rate: f64,
    displacement: i64,
}

/// The environment chain on the n-1 non-tagged sites (bit j-1 is the spin at
/// offset +j from the particle), with per-transition tagged displacements.
struct EnvChain {
    transitions: Vec<Vec<EnvTransition>>,
}

fn build_env_chain(n: usize, params: &Params, sign: i8) -> Result<EnvChain, OracleError> {
    if !(2..=MAX_CYCLE).contains(&n) {
        return Err(OracleError::CycleSize(n));
    }
    let env_states = 1usize << (n - 1);
    let tagged_bit = usize::from(sign == 1);
    let mut transitions = Vec::with_capacity(env_states);
    for env in 0..env_states {
        // Reconstruct the full ring with the tagged particle at site 0:
        // environment bit j-1 is ring site j.
        let state = (env << 1) | tagged_bit;
        let mut out: Vec<EnvTransition> = Vec::new();
        if is_monochrome(state, n) {
            transitions.push(out);
            continue;
        }
        for site in 0..n {
            let eta = spin_of(state, site);
            let rate = params.rate_for(eta);
            if rate == 0.0 {
                continue;
            }
            let target = mask_target(state, n, site, Direction::Right)
                .expect("mixed ring always has a target");
            let block_len = (target + n - site - 1) % n;
            let next_state = state ^ (1 << site) ^ (1 << target);
            let (tagged_next, displacement): (usize, i64) = if eta == sign {
                let offset = (n - site) % n;
                if offset <= block_len {
                    (1, 1)
                } else {
                    (0, 0)
                }
            } else if target == 0 {
                (site, -(block_len as i64 + 1))
            } else {
                (0, 0)
            };
            debug_assert_eq!(spin_of(next_state, tagged_next), sign);
            let mut next_env = 0usize;
            for j in 1..n {
                if spin_of(next_state, (tagged_next + j) % n) == 1 {
                    next_env |= 1 << (j - 1);
                }
            }
            match out
                .iter_mut()
                .find(|t| t.next == next_env && t.displacement == displacement)
            {
                Some(t) => t.rate += rate,
                None => out.push(EnvTransition { next: next_env, rate, displacement }),
            }
        }
        transitions.push(out);
    }
    Ok(EnvChain { transitions })
}

/// Stationarity residual of the environment seen from a tagged push particle:
/// the product measure on the n-1 non-tagged sites should be invariant for
/// the environment chain. Exact check of the environment lemma on the cycle.
pub fn check_env_stationarity(n: usize, params: &Params, sign: i8) -> Result<f64, OracleError> {
    let chain = build_env_chain(n, params, sign)?;
    let env_states = 1usize << (n - 1);
    let p = params.p();
    let mut flow = vec![0.0f64; env_states];
    for env in 0..env_states {
        let mut weight = 1.0;
        for site in 0..n - 1 {
            weight *= if env >> site & 1 == 1 { p } else { 1.0 - p };
        }
        for t in &chain.transitions[env] {
            if t.next != env {
                flow[env] -= weight * t.rate;
                flow[t.next] += weight * t.rate;
            }
        }
    }
    Ok(flow.iter().fold(0.0, |acc, &x| acc.max(x.abs())))
}

/// Dense linear solve by Gaussian elimination with partial pivoting.
fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-13 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            if factor == 0.0 {
                continue;
            }
            for k in col..n {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut sum = b[row];
        for col in row + 1..n {
            sum -= a[row][col] * x[col];
        }
        x[row] = sum / a[row][row];
    }
    Some(x)
}

/// Exact asymptotic variance rate of the tagged displacement on the n-cycle.
///
/// Within each magnetization sector the environment chain is an irreducible
/// finite Markov chain and the displacement is a Markov additive functional,
/// so the variance rate follows from the martingale decomposition: solve the
/// Poisson equation `L u = -(h - v)` and average
/// `rate * (displacement + u(next) - u(current))^2` over the uniform sector
/// measure. Sectors are then mixed with their product-measure weights, which
/// matches a direct estimator that removes each trial's own drift.
pub fn exact_diffusion(n: usize, params: &Params, sign: i8) -> Result<f64, OracleError> {
    let chain = build_env_chain(n, params, sign)?;
    let env_sites = n - 1;
    let env_states = 1usize << env_sites;
    let p = params.p();
    let h: Vec<f64> = (0..env_states)
        .map(|env| {
            chain.transitions[env]
                .iter()
                .map(|t| t.rate * t.displacement as f64)
                .sum()
        })
        .collect();
    let mut total = 0.0;
    for count in 0..=env_sites {
        let sector: Vec<usize> = (0..env_states)
            .filter(|s| s.count_ones() as usize == count)
            .collect();
        let size = sector.len();
        let weight = {
            // C(env_sites, count) p^count (1-p)^(rest), via the sector size.
            size as f64 * p.powi(count as i32) * (1.0 - p).powi((env_sites - count) as i32)
        };
        if size == 1 {
            // Single-state sector: pure compound-Poisson jump noise.
            let env = sector[0];
            let m2: f64 = chain.transitions[env]
                .iter()
                .map(|t| t.rate * (t.displacement as f64).powi(2))
                .sum();
            total += weight * m2;
            continue;
        }
        let index_of: std::collections::HashMap<usize, usize> =
            sector.iter().copied().enumerate().map(|(i, s)| (s, i)).collect();
        let pi = 1.0 / size as f64;
        let v_sector: f64 = sector.iter().map(|&env| pi * h[env]).sum();
        // Poisson equation L u = -(h - v), one row replaced by sum pi u = 0.
        let mut a = vec![vec![0.0; size]; size];
        let mut b = vec![0.0; size];
        for (row, &env) in sector.iter().enumerate() {
            for t in &chain.transitions[env] {
                if t.next == env {
                    continue;
                }
                let col = index_of[&t.next];
                a[row][col] += t.rate;
                a[row][row] -= t.rate;
            }
            b[row] = -(h[env] - v_sector);
        }
        for col in 0..size {
            a[size - 1][col] = pi;
        }
        b[size - 1] = 0.0;
        let u = solve_dense(a, b).expect("sector chain is irreducible");
        let mut sigma2 = 0.0;
        for (row, &env) in sector.iter().enumerate() {
            for t in &chain.transitions[env] {
                let du = if t.next == env { 0.0 } else { u[index_of[&t.next]] - u[row] };
                sigma2 += pi * t.rate * (t.displacement as f64 + du).powi(2);
            }
        }
        total += weight * sigma2;
    }
    Ok(total)
}

/// One row of the small-cycle verification report.
#[derive(Clone, Copy, Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct OracleReport {
    pub n: usize,
    pub p: f64,
    pub lambda_plus: f64,
    pub stationarity_residual: f64,
    pub reversal_residual: f64,
    pub exact_drift: f64,
    pub exact_edge_rate: f64,
}

pub fn oracle_report(n: usize, params: &Params) -> Result<OracleReport, OracleError> {
    let right = build_generator(n, params, Direction::Right)?;
    let left = build_generator(n, params, Direction::Left)?;
    Ok(OracleReport {
        n,
        p: params.p(),
        lambda_plus: params.lambda_plus(),
        stationarity_residual: check_stationarity(&right, params.p()),
        reversal_residual: check_reversal(&right, &left, params.p()),
        exact_drift: exact_drift(n, params, 1)?,
        exact_edge_rate: exact_edge_rate(n, params)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::SpinConfig;
    use crate::dynamics::apply_event;
    use crate::events::EventStream;

    fn params(p: f64, lambda_plus: f64) -> Params {
        Params::new(16, p, lambda_plus, 1.0 - lambda_plus).unwrap()
    }

    #[test]
    fn rejects_out_of_range_cycles() {
        let pr = params(0.5, 0.5);
        assert!(build_generator(1, &pr, Direction::Right).is_err());
        assert!(build_generator(13, &pr, Direction::Right).is_err());
        assert!(exact_drift(0, &pr, 1).is_err());
    }

    #[test]
    fn two_site_generator_is_exhaustively_correct() {
        let pr = params(0.5, 0.3);
        let q = build_generator(2, &pr, Direction::Right).unwrap();
        // States: 0b00 and 0b11 absorbing; 0b01 <-> 0b10 at total rate 1.
        assert_eq!(q.row(0b00), &[]);
        assert_eq!(q.row(0b11), &[]);
        assert_eq!(q.rate(0b01, 0b10), 1.0);
        assert_eq!(q.rate(0b10, 0b01), 1.0);
        assert_eq!(q.diagonal(0b01), -1.0);
    }

    #[test]
    fn rows_sum_to_zero_and_sectors_are_invariant() {
        let pr = params(0.4, 0.7);
        for n in 2..=8 {
            let q = build_generator(n, &pr, Direction::Right).unwrap();
            for state in 0..q.num_states() {
                let sum: f64 = q.diagonal(state) + q.row(state).iter().map(|&(_, r)| r).sum::<f64>();
                assert!(sum.abs() < 1e-14);
                for &(next, rate) in q.row(state) {
                    assert!(rate > 0.0);
                    assert_eq!(state.count_ones(), next.count_ones(), "sector broken");
                }
            }
        }
    }

    #[test]
    fn left_generator_is_the_reflection_conjugate() {
        let pr = params(0.35, 0.6);
        let n = 6;
        let reflect = |state: usize| -> usize {
            (0..n).fold(0, |acc, x| acc | ((state >> x & 1) << (n - 1 - x)))
        };
        let right = build_generator(n, &pr, Direction::Right).unwrap();
        let left = build_generator(n, &pr, Direction::Left).unwrap();
        for state in 0..right.num_states() {
            for &(next, rate) in right.row(state) {
                assert!((left.rate(reflect(state), reflect(next)) - rate).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn product_measure_is_normalized_and_positive() {
        let pi = ProductMeasure::new(10, 0.3);
        let total: f64 = pi.as_slice().iter().sum();
        assert!((total - 1.0).abs() < 1e-14);
        assert!(pi.as_slice().iter().all(|&w| w > 0.0));
    }

    #[test]
    fn stationarity_residual_vanishes_on_the_grid() {
        for n in 2..=8 {
            for &p in &[0.3, 0.5, 0.7] {
                for &lp in &[0.0, 0.5, 1.0] {
                    let pr = params(p, lp);
                    let q = build_generator(n, &pr, Direction::Right).unwrap();
                    let r = check_stationarity(&q, p);
                    assert!(r < 1e-12, "n={n} p={p} lp={lp} residual {r}");
                }
            }
        }
    }

    #[test]
    fn perturbed_generator_breaks_stationarity() {
        let pr = params(0.5, 0.5);
        let mut q = build_generator(5, &pr, Direction::Right).unwrap();
        // Double one off-diagonal rate, keeping the row sum at zero, so the
        // result is still a generator but not the Toom one.
        let state = 0b00101;
        let (_, rate) = q.rows[state][0];
        q.rows[state][0].1 = 2.0 * rate;
        q.diag[state] -= rate;
        assert!(check_stationarity(&q, 0.5) > 1e-6);
    }

    #[test]
    fn reversal_residual_vanishes_and_detects_mismatched_rates() {
        for n in 2..=8 {
            for &p in &[0.3, 0.5, 0.7] {
                for &lp in &[0.0, 0.5, 1.0] {
                    let pr = params(p, lp);
                    let right = build_generator(n, &pr, Direction::Right).unwrap();
                    let left = build_generator(n, &pr, Direction::Left).unwrap();
                    let r = check_reversal(&right, &left, p);
                    assert!(r < 1e-12, "n={n} p={p} lp={lp} residual {r}");
                }
            }
        }
        // Negative control: left process with swapped rates.
        let right = build_generator(6, &params(0.4, 0.8), Direction::Right).unwrap();
        let left = build_generator(6, &params(0.4, 0.2), Direction::Left).unwrap();
        assert!(check_reversal(&right, &left, 0.4) > 1e-6);
    }

    #[test]
    fn exact_drift_matches_hand_enumeration() {
        // n = 2: only the mixed states move the particle, giving
        // (1-p) * (lambda_+ - lambda_-) for a +-tag.
        let pr = Params::new(2, 0.3, 0.7, 0.3).unwrap();
        assert!((exact_drift(2, &pr, 1).unwrap() - 0.7 * (0.7 - 0.3)).abs() < 1e-14);
        // Totally asymmetric reference case, hand-enumerated.
        let pr = params(0.5, 1.0);
        assert!((exact_drift(2, &pr, 1).unwrap() - 0.5).abs() < 1e-14);
        assert!((exact_drift(3, &pr, 1).unwrap() - 1.0).abs() < 1e-14);
        assert!((exact_drift(4, &pr, 1).unwrap() - 1.375).abs() < 1e-14);
    }

    #[test]
    fn exact_drift_symmetries() {
        // Symmetric rates at p = 1/2 give zero drift for every cycle size.
        let pr = params(0.5, 0.5);
        for n in 2..=10 {
            assert!(exact_drift(n, &pr, 1).unwrap().abs() < 1e-14);
        }
        // Global spin flip: v_-(l+, l-, p) = v_+(l-, l+, 1-p).
        for n in 2..=9 {
            let a = exact_drift(n, &Params::new(2, 0.3, 0.7, 0.3).unwrap(), -1).unwrap();
            let b = exact_drift(n, &Params::new(2, 0.7, 0.3, 0.7).unwrap(), 1).unwrap();
            assert!((a - b).abs() < 1e-13, "n={n} {a} vs {b}");
        }
        // At p = 1/2, swapping the rates negates the +-tag drift.
        for n in 2..=9 {
            let a = exact_drift(n, &params(0.5, 0.0), 1).unwrap();
            let b = exact_drift(n, &params(0.5, 1.0), 1).unwrap();
            assert!((a + b).abs() < 1e-13, "n={n} {a} vs {b}");
        }
    }

    #[test]
    fn minus_drift_formula_adjudicated_by_enumeration() {
        // Two candidate closed forms exist for the --tagged drift: the
        // sign/density mirror of the + formula, and the literal +/- swap
        // without exchanging p and 1-p. They differ away from p = 1/2; the
        // enumeration decides for the mirror.
        let pr = Params::new(2, 0.3, 1.0, 0.0).unwrap();
        let mirror = crate::tagged::drift_formula(&pr, -1); // -p/(1-p)^2 here
        let literal = -(1.0 - 0.3) / (0.3 * 0.3); // lambda-/(1-p) - lambda+ (1-p)/p^2
        assert!((mirror - (-0.3 / 0.49)).abs() < 1e-12);
        let gap_at = |n: usize| (exact_drift(n, &pr, -1).unwrap() - mirror).abs();
        assert!(gap_at(12) < gap_at(6) && gap_at(6) < gap_at(3));
        assert!(gap_at(12) < 0.05 * mirror.abs());
        let v12 = exact_drift(12, &pr, -1).unwrap();
        assert!(
            (v12 - literal).abs() > 100.0 * (v12 - mirror).abs(),
            "enumeration {v12} does not discriminate: mirror {mirror}, literal {literal}"
        );
    }

    #[test]
    fn exact_drift_trend_approaches_the_closed_form() {
        // v_+ = 2 at (lambda_+, lambda_-) = (1, 0), p = 1/2; finite cycles
        // increase toward it.
        let pr = params(0.5, 1.0);
        let values: Vec<f64> = (2..=MAX_CYCLE)
            .map(|n| exact_drift(n, &pr, 1).unwrap())
            .collect();
        for w in values.windows(2) {
            assert!(w[1] > w[0], "drift not increasing: {values:?}");
        }
        assert!((values[0] - 0.5).abs() < 1e-14);
        assert!(values.last().unwrap() > &1.8, "slow trend: {values:?}");
    }

    #[test]
    fn edge_rate_matches_hand_values_and_is_edge_independent() {
        let pr = params(0.5, 0.5);
        assert!((exact_edge_rate(2, &pr).unwrap() - 0.25).abs() < 1e-14);
        assert!((exact_edge_rate(3, &pr).unwrap() - 0.5).abs() < 1e-14);
        let pr = params(0.4, 0.8);
        for edge in 0..7 {
            let a = exact_edge_rate_at(7, &pr, edge).unwrap();
            let b = exact_edge_rate(7, &pr).unwrap();
            assert!((a - b).abs() < 1e-13);
        }
        // Monochrome-only sector contributes nothing: a fully polarized
        // two-state check is covered by the n=2 hand value already.
    }

    #[test]
    fn edge_rate_increases_toward_the_geometric_sum() {
        let pr = params(0.5, 0.5);
        assert!((edge_rate_closed_form(&pr) - 1.0).abs() < 1e-14);
        let values: Vec<f64> = (2..=MAX_CYCLE)
            .map(|n| exact_edge_rate(n, &pr).unwrap())
            .collect();
        for w in values.windows(2) {
            assert!(w[1] > w[0], "rate not increasing: {values:?}");
        }
        assert!(*values.last().unwrap() < 1.0);
        assert!(values.last().unwrap() > &0.9, "slow trend: {values:?}");
    }

    #[test]
    fn transient_distribution_limits() {
        let pr = params(0.4, 0.6);
        let q = build_generator(4, &pr, Direction::Right).unwrap();
        let mut initial = vec![0.0; q.num_states()];
        initial[0b0011] = 1.0;
        // t = 0 returns the initial law.
        assert_eq!(transient_distribution(&q, &initial, 0.0).unwrap(), initial);
        // Large t converges to the uniform law on the magnetization sector.
        let late = transient_distribution(&q, &initial, 60.0).unwrap();
        let sector: Vec<usize> = (0..16usize).filter(|s| s.count_ones() == 2).collect();
        for &s in &sector {
            assert!((late[s] - 1.0 / 6.0).abs() < 1e-9, "state {s}: {}", late[s]);
        }
        let mass: f64 = late.iter().sum();
        assert!((mass - 1.0).abs() < 1e-10);
    }

    #[test]
    fn transient_distribution_is_the_simulator_oracle() {
        // Empirical time-t law of the event-driven simulator on the 4-cycle
        // versus uniformization, within four multinomial standard errors.
        let n = 4;
        let pr = Params::new(n, 0.4, 0.6, 0.4).unwrap();
        let q = build_generator(n, &pr, Direction::Right).unwrap();
        let start = 0b0011usize;
        let mut initial = vec![0.0; q.num_states()];
        initial[start] = 1.0;
        let exact = transient_distribution(&q, &initial, 1.0).unwrap();

        let trials = 40_000;
        let mut counts = vec![0u32; q.num_states()];
        for trial in 0..trials {
            let mut config = SpinConfig::from_spins(
                (0..n).map(|x| if start >> x & 1 == 1 { 1 } else { -1 }).collect(),
            );
            let mut stream = EventStream::new(crate::events::derive_trial_seed(31337, trial), &pr);
            loop {
                let ev = stream.next_event();
                if ev.time > 1.0 {
                    break;
                }
                apply_event(&mut config, &ev);
            }
            let mask = (0..n).fold(0usize, |acc, x| {
                acc | (usize::from(config.spin(x) == 1) << x)
            });
            counts[mask] += 1;
        }
        for state in 0..q.num_states() {
            let freq = f64::from(counts[state]) / trials as f64;
            let se = (exact[state] * (1.0 - exact[state]) / trials as f64).sqrt();
            assert!(
                (freq - exact[state]).abs() <= 4.0 * se + 1e-9,
                "state {state}: freq {freq} vs exact {}",
                exact[state]
            );
        }
    }

    #[test]
    fn environment_measure_is_stationary_on_the_cycle() {
        for n in [3, 4, 6] {
            for &p in &[0.3, 0.5] {
                for &lp in &[0.0, 0.5, 1.0] {
                    for sign in [1i8, -1] {
                        let pr = params(p, lp);
                        let r = check_env_stationarity(n, &pr, sign).unwrap();
                        assert!(r < 1e-12, "n={n} p={p} lp={lp} sign={sign}: {r}");
                    }
                }
            }
        }
    }

    #[test]
    fn exact_diffusion_reference_values() {
        // n = 2: with probability 1-p the ring is mixed and the tagged
        // particle is a +-1 compound Poisson walker of total rate one.
        let pr = Params::new(2, 0.3, 0.6, 0.4).unwrap();
        assert!((exact_diffusion(2, &pr, 1).unwrap() - 0.7).abs() < 1e-12);
        let pr = params(0.5, 1.0);
        let values: Vec<f64> = (2..=10)
            .map(|n| exact_diffusion(n, &pr, 1).unwrap())
            .collect();
        println!("exact diffusion trend (l+=1, p=0.5): {values:?}");
        assert!((values[0] - 0.5).abs() < 1e-12);
        // The variance rate is positive on every mixed cycle.
        assert!(values.iter().all(|&d| d > 0.0));
    }

    #[test]
    fn report_collects_all_residuals() {
        let pr = params(0.3, 1.0);
        let report = oracle_report(6, &pr).unwrap();
        assert!(report.stationarity_residual < 1e-12);
        assert!(report.reversal_residual < 1e-12);
        let json = serde_json::to_string(&report).unwrap();
        assert!(json.contains("stationarityResidual"));
        assert!(json.contains("exactEdgeRate"));
    }
}
