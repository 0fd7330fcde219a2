//! Finite-population evolutionary baseline.
//!
//! Each role is its own population of size `Z`. Within a role, individuals
//! imitate via the pairwise-comparison (Fermi) rule with selection intensity
//! `beta`. In the small-mutation limit the system sits in one of the eight
//! monomorphic states (one strategy per role) and moves between them when a
//! single mutant fixes, which gives an 8-state embedded Markov chain.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::game::{
    enumerate_profiles, payoff, ActionProfile, GameError, GameParams, Role, TrustMode,
};

/// Number of monomorphic states.
pub const STATES: usize = 8;

const RESIDUAL_TOL: f64 = 1e-9;
const POWER_TARGET: f64 = 1e-12;
const POWER_BUDGET: usize = 200_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EgtError {
    #[error("population size must be at least 2, got {0}")]
    PopulationTooSmall(u32),
    #[error("selection intensity must be finite and non-negative, got {0}")]
    InvalidBeta(f64),
    #[error(transparent)]
    Params(#[from] GameError),
    #[error("transition matrix row {row} sums to {sum}, not 1")]
    NotStochastic { row: usize, sum: f64 },
    /// More than one closed class, typically because selection is so strong
    /// that some fixation probabilities underflow to zero.
    #[error("chain has {0} closed classes; the stationary distribution is not unique")]
    Reducible(usize),
    #[error("stationary residual {residual:e} exceeds {tolerance:e} after {iterations} refinement iterations")]
    NotConverged {
        residual: f64,
        tolerance: f64,
        iterations: usize,
    },
    #[error("step count must be at least 1")]
    NoSteps,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EgtConfig {
    /// Population size per role (`Z`).
    pub population: u32,
    /// Selection intensity (`beta`).
    pub beta: f64,
    pub mode: TrustMode,
    pub params: GameParams,
}

impl Default for EgtConfig {
    fn default() -> Self {
        EgtConfig {
            population: 100,
            beta: 1.0,
            mode: TrustMode::Conditional,
            params: GameParams::default(),
        }
    }
}

impl EgtConfig {
    pub fn validate(&self) -> Result<(), EgtError> {
        if self.population < 2 {
            return Err(EgtError::PopulationTooSmall(self.population));
        }
        if !self.beta.is_finite() || self.beta < 0.0 {
            return Err(EgtError::InvalidBeta(self.beta));
        }
        self.params.validate()?;
        Ok(())
    }
}

/// Row-stochastic matrix over the monomorphic states, in table order.
pub type TransitionMatrix = [[f64; STATES]; STATES];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaryResult {
    pub mode: TrustMode,
    /// Probability of each profile, in table order.
    pub distribution: [f64; STATES],
    pub transition_matrix: TransitionMatrix,
}

impl StationaryResult {
    pub fn probability(&self, profile: ActionProfile) -> f64 {
        self.distribution[profile.index()]
    }

    pub fn entries(&self) -> impl Iterator<Item = (ActionProfile, f64)> + '_ {
        enumerate_profiles(self.mode)
            .into_iter()
            .zip(self.distribution.iter().copied())
    }
}

/// Probability that a single mutant with payoff advantage `delta` takes over
/// a resident population of size `z` under the Fermi rule.
///
/// `rho = (1 - e^{-beta*delta}) / (1 - e^{-z*beta*delta})`, with the neutral
/// limit `1/z` when `beta*delta == 0`. Both branches are written with
/// `exp_m1` so extreme arguments saturate to 1 or underflow towards 0 instead
/// of producing `inf/inf`.
pub fn fixation_probability(delta: f64, z: u32, beta: f64) -> f64 {
    debug_assert!(z >= 2, "population must be at least 2");
    debug_assert!(beta >= 0.0, "beta must be non-negative");
    let z = f64::from(z);
    let x = beta * delta;
    if x == 0.0 {
        return 1.0 / z;
    }
    if x > 0.0 {
        (-x).exp_m1() / (-z * x).exp_m1()
    } else {
        // multiply through by e^{z*x} so nothing overflows
        ((z - 1.0) * x).exp() * x.exp_m1() / (z * x).exp_m1()
    }
}

/// Embedded chain of the small-mutation limit.
///
/// From state `s`, a mutant appears in one of the three roles (probability
/// 1/3 each) and fixes with `rho(delta)`, where `delta` is the mutant's payoff
/// against the monomorphic co-players minus the resident's payoff at `s`.
pub fn build_transition_matrix(config: &EgtConfig) -> Result<TransitionMatrix, EgtError> {
    config.validate()?;
    let mut m = [[0.0; STATES]; STATES];
    for state in enumerate_profiles(config.mode) {
        let i = state.index();
        let resident = payoff(state, &config.params, config.mode);
        let mut leave = 0.0;
        for role in Role::ALL {
            let target = state.deviate(role);
            let mutant = payoff(target, &config.params, config.mode);
            let delta = mutant.get(role) - resident.get(role);
            let p = fixation_probability(delta, config.population, config.beta) / 3.0;
            m[i][target.index()] = p;
            leave += p;
        }
        m[i][i] = 1.0 - leave;
    }
    Ok(m)
}

/// Stationary distribution of a row-stochastic matrix with a single closed
/// class.
///
/// Transient states (possible when tiny transition probabilities underflow to
/// zero) get probability 0; the closed class is solved by
/// Grassmann-Taksar-Heyman elimination, which avoids subtractive
/// cancellation. The result is then checked against `max |pi P - pi|`; above
/// 1e-9 it is refined by power iteration, and failure to get below the
/// tolerance within the budget is an error.
pub fn stationary_distribution<const N: usize>(
    matrix: &[[f64; N]; N],
) -> Result<[f64; N], EgtError> {
    for (row, r) in matrix.iter().enumerate() {
        let sum: f64 = r.iter().sum();
        if !within((sum - 1.0).abs(), 1e-9) || r.iter().any(|x| !(0.0..=1.0 + 1e-12).contains(x)) {
            return Err(EgtError::NotStochastic { row, sum });
        }
    }
    if N == 0 {
        return Ok([0.0; N]);
    }

    let class = closed_class(matrix)?;
    let mut pi = [0.0; N];
    for (&state, x) in class.iter().zip(gth(matrix, &class)) {
        pi[state] = x;
    }
    if pi.iter().any(|x| !x.is_finite()) {
        pi = [0.0; N];
        class.iter().for_each(|&i| pi[i] = 1.0 / class.len() as f64);
    }
    normalize(&mut pi);

    let mut residual = stationary_residual(matrix, &pi);
    let mut iterations = 0;
    if !within(residual, RESIDUAL_TOL) {
        while iterations < POWER_BUDGET && !within(residual, POWER_TARGET) {
            pi = step(matrix, &pi);
            normalize(&mut pi);
            residual = stationary_residual(matrix, &pi);
            iterations += 1;
        }
        if !within(residual, RESIDUAL_TOL) {
            return Err(EgtError::NotConverged {
                residual,
                tolerance: RESIDUAL_TOL,
                iterations,
            });
        }
    }
    Ok(pi)
}

// false for NaN, unlike `x > tol`
fn within(x: f64, tol: f64) -> bool {
    x <= tol
}

/// States of the unique closed communicating class, ascending.
fn closed_class<const N: usize>(matrix: &[[f64; N]; N]) -> Result<Vec<usize>, EgtError> {
    let mut reach = [[false; N]; N];
    for i in 0..N {
        for j in 0..N {
            reach[i][j] = i == j || matrix[i][j] > 0.0;
        }
    }
    for k in 0..N {
        for i in 0..N {
            if reach[i][k] {
                let via = reach[k];
                reach[i].iter_mut().zip(via).for_each(|(r, v)| *r |= v);
            }
        }
    }
    // a state is recurrent when everything it reaches reaches it back
    let recurrent: Vec<usize> = (0..N)
        .filter(|&i| (0..N).all(|j| !reach[i][j] || reach[j][i]))
        .collect();
    let first = recurrent[0];
    let class: Vec<usize> = recurrent
        .iter()
        .copied()
        .filter(|&j| reach[first][j])
        .collect();
    if class.len() != recurrent.len() {
        let mut classes = 0;
        let mut seen = vec![false; N];
        for &i in &recurrent {
            if !seen[i] {
                classes += 1;
                recurrent
                    .iter()
                    .filter(|&&j| reach[i][j])
                    .for_each(|&j| seen[j] = true);
            }
        }
        return Err(EgtError::Reducible(classes));
    }
    Ok(class)
}

/// GTH elimination on the sub-chain `states`, which must be closed and
/// irreducible.
fn gth<const N: usize>(matrix: &[[f64; N]; N], states: &[usize]) -> Vec<f64> {
    let k = states.len();
    let mut a: Vec<Vec<f64>> = states
        .iter()
        .map(|&i| states.iter().map(|&j| matrix[i][j]).collect())
        .collect();
    for n in (1..k).rev() {
        let s: f64 = a[n][..n].iter().sum();
        for row in a.iter_mut().take(n) {
            row[n] /= s;
        }
        let (top, rest) = a.split_at_mut(n);
        let last = &rest[0][..n];
        for row in top {
            let ain = row[n];
            if ain == 0.0 {
                continue;
            }
            row[..n]
                .iter_mut()
                .zip(last)
                .for_each(|(x, y)| *x += ain * y);
        }
    }
    let mut pi = vec![0.0; k];
    pi[0] = 1.0;
    for j in 1..k {
        pi[j] = (0..j).map(|i| pi[i] * a[i][j]).sum();
    }
    pi
}

/// `max_j |(pi P)_j - pi_j|`.
pub fn stationary_residual<const N: usize>(matrix: &[[f64; N]; N], pi: &[f64; N]) -> f64 {
    step(matrix, pi)
        .iter()
        .zip(pi)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

fn step<const N: usize>(matrix: &[[f64; N]; N], pi: &[f64; N]) -> [f64; N] {
    let mut out = [0.0; N];
    for (i, row) in matrix.iter().enumerate() {
        for (j, p) in row.iter().enumerate() {
            out[j] += pi[i] * p;
        }
    }
    out
}

fn normalize(v: &mut [f64]) {
    let total: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= total);
}

/// Builds the chain for `config` and solves for its stationary distribution.
pub fn analyze(config: &EgtConfig) -> Result<StationaryResult, EgtError> {
    let transition_matrix = build_transition_matrix(config)?;
    let distribution = stationary_distribution(&transition_matrix)?;
    Ok(StationaryResult {
        mode: config.mode,
        distribution,
        transition_matrix,
    })
}

/// Monte Carlo walk over the embedded chain; returns visit frequencies.
///
/// The start state is drawn uniformly; each of the `steps` transitions is
/// counted as a visit to the state it lands in.
pub fn simulate_chain(
    config: &EgtConfig,
    steps: u64,
    seed: u64,
) -> Result<[f64; STATES], EgtError> {
    if steps == 0 {
        return Err(EgtError::NoSteps);
    }
    let matrix = build_transition_matrix(config)?;
    let counts = walk(&matrix, steps, seed);
    Ok(counts.map(|c| c as f64 / steps as f64))
}

/// Same as [`simulate_chain`] split into `partitions` independent walks run in
/// parallel; partition `k` uses seed `seed + k`. Deterministic for fixed
/// arguments regardless of thread count.
pub fn simulate_chain_partitioned(
    config: &EgtConfig,
    steps: u64,
    seed: u64,
    partitions: u32,
) -> Result<[f64; STATES], EgtError> {
    if steps == 0 {
        return Err(EgtError::NoSteps);
    }
    let matrix = build_transition_matrix(config)?;
    let parts = u64::from(partitions.max(1));
    let counts = (0..parts)
        .into_par_iter()
        .map(|k| {
            let share = steps / parts + u64::from(k < steps % parts);
            walk(&matrix, share, seed.wrapping_add(k))
        })
        .reduce(
            || [0u64; STATES],
            |mut acc, c| {
                acc.iter_mut().zip(c).for_each(|(a, b)| *a += b);
                acc
            },
        );
    Ok(counts.map(|c| c as f64 / steps as f64))
}

fn walk(matrix: &TransitionMatrix, steps: u64, seed: u64) -> [u64; STATES] {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = [0u64; STATES];
    let mut state = rng.random_range(0..STATES);
    for _ in 0..steps {
        let r: f64 = rng.random();
        let row = &matrix[state];
        let mut acc = 0.0;
        // fall back to the diagonal if rounding leaves r above the row total
        let mut next = state;
        for (j, p) in row.iter().enumerate() {
            acc += p;
            if r < acc {
                next = j;
                break;
            }
        }
        state = next;
        counts[state] += 1;
    }
    counts
}
