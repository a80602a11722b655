//! Monte Carlo frequency studies of the number of real critical points.
//!
//! Each trial draws sample sizes, a common mean and lower-triangular
//! covariance factors `T_i`, simulates `x = T_i z + mu` with standard normal
//! `z`, summarizes, solves, and tallies the real critical points. Trials use
//! independent streams derived from `(seed, trial)` so the tally does not
//! depend on scheduling.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use num_traits::ToPrimitive;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::estimator::critical_points;
use crate::homotopy::TrackerConfig;
use crate::mldegree::ml_degree;
use crate::problem::{summarize, GroupData, Problem, ProblemError};
use crate::rng::{derive_seed, Rng};

/// Redraws allowed when a simulated scatter matrix is degenerate.
const MAX_RETRIES: usize = 10;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error("could not draw a non-degenerate problem after {MAX_RETRIES} retries: {0}")]
    Degenerate(ProblemError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimConfig {
    pub p: usize,
    /// Number of populations (`k + 1`).
    pub groups: usize,
    pub trials: usize,
    pub n_min: usize,
    pub n_max: usize,
    /// Half-width of the box the common mean is drawn from.
    pub mu_box: f64,
    /// Diagonal of each `T_i` is uniform on `(diag_min, diag_max]`.
    pub diag_min: f64,
    pub diag_max: f64,
    /// Strict lower triangle of each `T_i` is uniform on `[-offdiag, offdiag]`.
    pub offdiag: f64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            p: 2,
            groups: 2,
            trials: 1000,
            n_min: 3,
            n_max: 15,
            mu_box: 20.0,
            diag_min: 0.1,
            diag_max: 10.0,
            offdiag: 10.0,
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let fail = |m: &str| Err(SimError::Config(m.to_string()));
        if self.p == 0 || self.p > crate::linalg::MAX_DIM {
            return fail("p out of range");
        }
        if self.groups < 2 {
            return fail("need at least two groups");
        }
        if self.trials == 0 {
            return fail("trials must be at least 1");
        }
        if self.n_min <= self.p {
            return fail("n_min must exceed p");
        }
        if self.n_max < self.n_min {
            return fail("n_max must be at least n_min");
        }
        if !(self.diag_min >= 0.0 && self.diag_max > self.diag_min) {
            return fail("need 0 <= diag_min < diag_max");
        }
        if !(self.mu_box >= 0.0 && self.offdiag >= 0.0) {
            return fail("mu_box and offdiag must be non-negative");
        }
        Ok(())
    }

    /// Expected number of complex critical points, `d(k, p)`.
    pub fn expected_count(&self) -> usize {
        ml_degree(self.groups as u32 - 1, self.p as u32)
            .expect("small arguments")
            .to_usize()
            .expect("fits in usize")
    }
}

fn random_factor(cfg: &SimConfig, rng: &mut Rng) -> Vec<Vec<f64>> {
    let p = cfg.p;
    let mut t = vec![vec![0.0; p]; p];
    for (i, row) in t.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate().take(i + 1) {
            *v = if i == j {
                // (diag_min, diag_max]
                cfg.diag_max - (cfg.diag_max - cfg.diag_min) * rng.uniform()
            } else {
                rng.uniform_range(-cfg.offdiag, cfg.offdiag)
            };
        }
    }
    t
}

/// Draws one problem with a common population mean.
pub fn random_problem(cfg: &SimConfig, rng: &mut Rng) -> Result<Problem, SimError> {
    cfg.validate()?;
    let mut last_err = None;
    for _ in 0..=MAX_RETRIES {
        let sizes: Vec<usize> = (0..cfg.groups)
            .map(|_| rng.int_inclusive(cfg.n_min as u64, cfg.n_max as u64) as usize)
            .collect();
        let mu: Vec<f64> = (0..cfg.p).map(|_| rng.uniform_range(-cfg.mu_box, cfg.mu_box)).collect();
        let factors: Vec<Vec<Vec<f64>>> = (0..cfg.groups).map(|_| random_factor(cfg, rng)).collect();
        let stats: Result<Vec<_>, _> = sizes
            .iter()
            .zip(&factors)
            .enumerate()
            .map(|(g, (&n, t))| {
                let observations = (0..n)
                    .map(|_| {
                        let z: Vec<f64> = (0..cfg.p).map(|_| rng.standard_normal()).collect();
                        (0..cfg.p)
                            .map(|i| mu[i] + (0..=i).map(|j| t[i][j] * z[j]).sum::<f64>())
                            .collect()
                    })
                    .collect();
                summarize(&GroupData { label: g + 1, observations })
            })
            .collect();
        match stats.and_then(|s| Problem::new(cfg.p, s)) {
            Ok(problem) => return Ok(problem),
            Err(e) => last_err = Some(e),
        }
    }
    Err(SimError::Degenerate(last_err.expect("at least one attempt")))
}

/// A trial whose kept-point count differed from `d(k, p)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialFailure {
    pub trial: usize,
    pub kept: usize,
    pub real: usize,
    pub failed_paths: usize,
    pub ill_conditioned: bool,
    pub reason: String,
    /// Problem file contents for replay.
    pub problem_json: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimReport {
    pub config: SimConfig,
    /// Real-solution count -> number of trials.
    pub counts: BTreeMap<usize, usize>,
    pub failures: Vec<TrialFailure>,
    /// Two-group trials with more than three real critical points, which
    /// should be rare.
    pub notable: Vec<usize>,
}

impl SimReport {
    pub fn tallied(&self) -> usize {
        self.counts.values().sum()
    }

    /// Share of tallied trials with `count` real solutions, in percent.
    pub fn percentage(&self, count: usize) -> f64 {
        let total = self.tallied();
        if total == 0 {
            return 0.0;
        }
        100.0 * *self.counts.get(&count).unwrap_or(&0) as f64 / total as f64
    }

    pub fn failure_rate(&self) -> f64 {
        self.failures.len() as f64 / self.config.trials as f64
    }

    /// Aligned table: count, frequency, percentage to two decimals.
    pub fn table(&self) -> String {
        let mut out = String::new();
        writeln!(out, "{:>19} | {:>9} | {:>10}", "Number of solutions", "Frequency", "Percentage").unwrap();
        writeln!(out, "{:-<19}-+-{:-<9}-+-{:-<10}", "", "", "").unwrap();
        for (count, freq) in &self.counts {
            writeln!(out, "{count:>19} | {freq:>9} | {:>9.2}%", self.percentage(*count)).unwrap();
        }
        writeln!(
            out,
            "trials {} (tallied {}, failures {}), seed {}",
            self.config.trials,
            self.tallied(),
            self.failures.len(),
            self.config.seed
        )
        .unwrap();
        out
    }
}

/// Tracker configuration for trial `index`: gamma from the trial's stream.
pub fn trial_tracker(seed: u64, index: usize) -> TrackerConfig {
    TrackerConfig::with_seed(derive_seed(seed ^ 0x7ac4_e11f_0b5e_93d1, index as u64))
}

enum TrialOutcome {
    Tallied(usize),
    Failed(TrialFailure),
}

/// The problem drawn for trial `index`.
pub fn trial_problem(cfg: &SimConfig, index: usize) -> Result<Problem, SimError> {
    random_problem(cfg, &mut Rng::for_trial(cfg.seed, index as u64))
}

fn run_trial(cfg: &SimConfig, index: usize, expected: usize) -> TrialOutcome {
    let fail = |reason: String, problem_json: String| {
        TrialOutcome::Failed(TrialFailure {
            trial: index,
            kept: 0,
            real: 0,
            failed_paths: 0,
            ill_conditioned: true,
            reason,
            problem_json,
        })
    };
    let problem = match trial_problem(cfg, index) {
        Ok(p) => p,
        Err(e) => return fail(e.to_string(), String::new()),
    };
    match critical_points(&problem, &trial_tracker(cfg.seed, index)) {
        Ok(set) if set.len() == expected && set.real_count() % 2 == 1 => {
            let real = set.real_count();
            if real > 3 {
                log::info!("trial {index}: {real} real critical points\n{}", problem.to_json());
            }
            TrialOutcome::Tallied(real)
        }
        Ok(set) => TrialOutcome::Failed(TrialFailure {
            trial: index,
            kept: set.len(),
            real: set.real_count(),
            failed_paths: set.failed_paths,
            ill_conditioned: set.ill_conditioned(),
            reason: format!("kept {} critical points, expected {expected}", set.len()),
            problem_json: problem.to_json(),
        }),
        Err(e) => fail(e.to_string(), problem.to_json()),
    }
}

/// Runs all trials in parallel and tallies the real-solution counts.
pub fn run_simulation(cfg: &SimConfig) -> Result<SimReport, SimError> {
    cfg.validate()?;
    let expected = cfg.expected_count();
    let outcomes: Vec<TrialOutcome> =
        (0..cfg.trials).into_par_iter().map(|i| run_trial(cfg, i, expected)).collect();
    let mut counts = BTreeMap::new();
    let mut failures = Vec::new();
    let mut notable = Vec::new();
    for (index, o) in outcomes.into_iter().enumerate() {
        match o {
            TrialOutcome::Tallied(real) => {
                *counts.entry(real).or_insert(0) += 1;
                if cfg.groups == 2 && real > 3 {
                    notable.push(index);
                }
            }
            TrialOutcome::Failed(f) => failures.push(f),
        }
    }
    if !failures.is_empty() {
        log::warn!("{} of {} trials excluded from the tally", failures.len(), cfg.trials);
    }
    Ok(SimReport { config: cfg.clone(), counts, failures, notable })
}

/// Fraction of trials with a unique real critical point when every group has
/// `n_large` observations.
pub fn large_sample_study(p: usize, n_large: usize, trials: usize, seed: u64) -> Result<f64, SimError> {
    let cfg = SimConfig { p, trials, n_min: n_large, n_max: n_large, seed, ..SimConfig::default() };
    let report = run_simulation(&cfg)?;
    Ok(*report.counts.get(&1).unwrap_or(&0) as f64 / trials as f64)
}
