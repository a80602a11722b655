//! Maximum likelihood estimation of the common mean.
//!
//! Two routes: the classical alternating fixed-point iteration, which finds
//! some stationary point, and the global route, which computes every complex
//! critical point and picks the real one with the smallest profiled
//! objective.

use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::family::{self, Coefficients};
use crate::homotopy::{
    self, classify_and_filter, lex_cmp, newton_refine, CriticalPoint, CriticalPointSet, SolveError,
    SquareSystem, StartKind, TrackerConfig,
};
use crate::linalg::{self, cholesky, LinalgError, SymMatrix};
use crate::poly::PolySystem;
use crate::problem::{affine_transform, Problem, ProblemError};
use crate::system::{build_system, objective, residual, sigma_hat, LikelihoodSystem};

#[derive(Debug, Error)]
pub enum EstimateError {
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error("no real critical point found ({complex} complex, {discarded} discarded, {failed} failed paths)")]
    NoRealSolution { complex: usize, discarded: usize, failed: usize },
    #[error("invalid tracker configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Method {
    FixedPoint,
    Global,
}

/// Where the fixed-point iteration starts.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum FixedPointInit {
    /// Covariances start at the sample scatters.
    #[default]
    Scatter,
    /// Covariances start at the values implied by this mean.
    Mean(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointResult {
    pub mu: Vec<f64>,
    pub sigmas: Vec<SymMatrix>,
    pub converged: bool,
    pub iterations: usize,
}

/// Alternates `mu <- (sum n_i Sigma_i^{-1})^{-1} sum n_i Sigma_i^{-1} z_i` and
/// `Sigma_i <- S_i + (z_i - mu)(z_i - mu)'` until the relative change in `mu`
/// drops below `tol`.
pub fn fixed_point_iterate(
    problem: &Problem,
    init: &FixedPointInit,
    max_iters: usize,
    tol: f64,
) -> Result<FixedPointResult, EstimateError> {
    let p = problem.dim();
    let groups = problem.groups();
    let mut sigmas: Vec<SymMatrix> = match init {
        FixedPointInit::Scatter => groups.iter().map(|g| g.scatter.clone()).collect(),
        FixedPointInit::Mean(m) => groups.iter().map(|g| sigma_hat(g, m)).collect(),
    };
    let update_mu = |sigmas: &[SymMatrix]| -> Result<Vec<f64>, EstimateError> {
        let mut precision = SymMatrix::from_lower_fn(p, |_, _| 0.0)?;
        let mut rhs = vec![0.0; p];
        for (g, s) in groups.iter().zip(sigmas) {
            let inv = s.inverse_spd()?;
            precision = precision.add(&inv.scaled(g.n as f64));
            for (r, v) in rhs.iter_mut().zip(inv.mul_vec(&g.mean)) {
                *r += g.n as f64 * v;
            }
        }
        Ok(linalg::solve_spd(&precision, &rhs)?)
    };
    let mut mu = update_mu(&sigmas)?;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iters {
        iterations += 1;
        sigmas = groups.iter().map(|g| sigma_hat(g, &mu)).collect();
        let next = update_mu(&sigmas)?;
        let change = linalg::norm(&linalg::sub(&next, &mu));
        let done = change <= tol * (1.0 + linalg::norm(&mu));
        mu = next;
        if done {
            converged = true;
            break;
        }
    }
    sigmas = groups.iter().map(|g| sigma_hat(g, &mu)).collect();
    Ok(FixedPointResult { mu, sigmas, converged, iterations })
}

/// `|sum of terms| / sum |terms|` of the rational likelihood equations.
pub fn relative_residual(system: &LikelihoodSystem, mu: &[f64]) -> f64 {
    let total = linalg::norm(&residual(system, mu));
    let scale: f64 = system
        .denominators()
        .iter()
        .zip(system.weights())
        .map(|(d, n)| {
            let (w, dv) = d.direction_and_value(mu);
            n * linalg::norm(&w) / dv
        })
        .sum();
    if total == 0.0 {
        0.0
    } else {
        total / scale.max(f64::MIN_POSITIVE)
    }
}

/// Affine change of variables `y = A (mu - c)` that whitens the pooled
/// spread of the groups, so the solver sees coordinates of order one.
struct Standardization {
    factor: linalg::LowerTriangular,
    center: Vec<f64>,
}

impl Standardization {
    fn new(problem: &Problem) -> Result<Self, EstimateError> {
        let p = problem.dim();
        let total: f64 = problem.groups().iter().map(|g| g.n as f64).sum();
        let center: Vec<f64> = (0..p)
            .map(|j| problem.groups().iter().map(|g| g.n as f64 * g.mean[j]).sum::<f64>() / total)
            .collect();
        let pooled = SymMatrix::from_lower_fn(p, |i, j| {
            problem
                .groups()
                .iter()
                .map(|g| {
                    let d = linalg::sub(&g.mean, &center);
                    g.n as f64 * (g.scatter.get(i, j) + d[i] * d[j])
                })
                .sum::<f64>()
                / total
        })?;
        Ok(Self { factor: cholesky(&pooled)?, center })
    }

    fn apply(&self, problem: &Problem) -> Result<Problem, EstimateError> {
        let a = self.factor.inverse();
        let b: Vec<f64> = a.mul_vec(&self.center).iter().map(|v| -v).collect();
        Ok(affine_transform(problem, &a, &b)?)
    }

    /// `mu = L y + c` for complex `y`.
    fn unmap(&self, y: &[Complex64]) -> Vec<Complex64> {
        let p = y.len();
        (0..p)
            .map(|i| {
                (0..=i).map(|j| y[j] * self.factor.get(i, j)).sum::<Complex64>() + self.center[i]
            })
            .collect()
    }
}

fn complex_system(system: &LikelihoodSystem) -> PolySystem {
    homotopy::normalize_equations(&PolySystem::new(
        system.polys().iter().map(|f| f.to_complex()).collect(),
    ))
}

/// All critical points of the likelihood equations of `problem`.
///
/// Solves in whitened coordinates, filters and classifies there, then maps
/// the survivors back and polishes them with Newton on the original system.
pub fn critical_points(problem: &Problem, cfg: &TrackerConfig) -> Result<CriticalPointSet, EstimateError> {
    cfg.validate().map_err(EstimateError::Config)?;
    let standard = Standardization::new(problem)?;
    let whitened = standard.apply(problem)?;
    let wsys = build_system(&whitened)?;
    let outcome = match cfg.start {
        StartKind::Parameter => family::solve_family(&wsys, cfg)?,
        StartKind::TotalDegree => homotopy::solve_system(&complex_system(&wsys), cfg)?,
    };
    let mut set = classify_and_filter(&outcome.points, &wsys, cfg);
    set.diverged_paths = outcome.diverged;
    set.failed_paths = outcome.failed;
    set.paths_tracked = outcome.paths.len();

    // Polish in product form: the expanded monomials cancel badly away from
    // the origin and would drag well-conditioned points off by ~1e-5.
    let system = build_system(problem)?;
    let f = Coefficients::from_system(&system);
    let scale = system.coefficient_scale().max(f64::MIN_POSITIVE);
    let deg = system.expected_degree() as i32;
    for c in &mut set.points {
        let mapped = standard.unmap(&c.mu);
        let before = residual_of(&f, &mapped);
        let mu = match newton_refine(&f, &mapped, cfg.refine_tol) {
            Ok((x, _)) if residual_of(&f, &x) <= before => x,
            _ => mapped,
        };
        let mu: Vec<Complex64> =
            if c.is_real { mu.iter().map(|z| Complex64::new(z.re, 0.0)).collect() } else { mu };
        c.residual_norm =
            linalg_cnorm(&system_eval(&system, &mu)) / (scale * (1.0 + linalg_cnorm(&mu)).powi(deg));
        c.denominator_values = system.denominators().iter().map(|d| d.eval_complex(&mu)).collect();
        c.mu = mu;
    }
    set.points.sort_by(|a, b| lex_cmp(&a.mu, &b.mu));
    Ok(set)
}

fn linalg_cnorm(x: &[Complex64]) -> f64 {
    x.iter().map(Complex64::norm_sqr).sum::<f64>().sqrt()
}

fn residual_of(f: &dyn SquareSystem, x: &[Complex64]) -> f64 {
    linalg_cnorm(&f.eval(x))
}

fn system_eval(system: &LikelihoodSystem, mu: &[Complex64]) -> Vec<Complex64> {
    system.polys().iter().map(|p| p.to_complex().eval(mu)).collect()
}

fn lex_real(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    a.iter().zip(b).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal)
}

/// Real critical point with its profiled objective.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RealCriticalPoint {
    pub mu: Vec<f64>,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateReport {
    pub mle_mu: Vec<f64>,
    #[serde(serialize_with = "serialize_sigmas")]
    pub mle_sigmas: Vec<SymMatrix>,
    pub objective_at_mle: f64,
    pub log_likelihood: f64,
    /// Sorted by objective, ascending.
    pub all_real_critical_points: Vec<RealCriticalPoint>,
    pub complex_count: usize,
    pub method: Method,
    pub iterations_or_paths: usize,
    /// Two real critical points had objectives within 1e-12.
    pub near_tie: bool,
    /// Only meaningful for the fixed-point method.
    pub converged: bool,
    #[serde(skip)]
    pub critical_points: Option<CriticalPointSet>,
}

fn serialize_sigmas<S: serde::Serializer>(v: &[SymMatrix], s: S) -> Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(v.len()))?;
    for m in v {
        seq.serialize_element(&m.rows())?;
    }
    seq.end()
}

pub fn estimate_global(problem: &Problem, cfg: &TrackerConfig) -> Result<EstimateReport, EstimateError> {
    let set = critical_points(problem, cfg)?;
    let system = build_system(problem)?;
    let mut reals: Vec<RealCriticalPoint> = set
        .real_points()
        .map(|c| {
            let mu = c.real_mu();
            RealCriticalPoint { objective: objective(&system, &mu), mu }
        })
        .collect();
    if reals.is_empty() {
        return Err(EstimateError::NoRealSolution {
            complex: set.len(),
            discarded: set.discarded_denominator_zero,
            failed: set.failed_paths,
        });
    }
    reals.sort_by(|a, b| a.objective.total_cmp(&b.objective).then_with(|| lex_real(&a.mu, &b.mu)));
    let best = reals[0].objective;
    let tied: Vec<&RealCriticalPoint> =
        reals.iter().filter(|r| r.objective - best <= 1e-12 * (1.0 + best.abs())).collect();
    let near_tie = tied.len() > 1;
    // lexicographically smallest among the tied points
    let mle = tied
        .iter()
        .min_by(|a, b| lex_real(&a.mu, &b.mu))
        .expect("at least one real point");
    let mle_mu = mle.mu.clone();
    let objective_at_mle = mle.objective;
    let paths = set.paths_tracked;
    Ok(EstimateReport {
        mle_sigmas: problem.groups().iter().map(|g| sigma_hat(g, &mle_mu)).collect(),
        log_likelihood: crate::system::log_likelihood(problem, &system, &mle_mu),
        mle_mu,
        objective_at_mle,
        complex_count: set.len() - set.real_count(),
        all_real_critical_points: reals,
        method: Method::Global,
        iterations_or_paths: paths,
        near_tie,
        converged: true,
        critical_points: Some(set),
    })
}

/// Report for the fixed-point route. The point found is a stationary point,
/// not necessarily the global maximum.
pub fn estimate_fixed_point(
    problem: &Problem,
    init: &FixedPointInit,
    max_iters: usize,
    tol: f64,
) -> Result<EstimateReport, EstimateError> {
    let fp = fixed_point_iterate(problem, init, max_iters, tol)?;
    let system = build_system(problem)?;
    let obj = objective(&system, &fp.mu);
    Ok(EstimateReport {
        log_likelihood: crate::system::log_likelihood(problem, &system, &fp.mu),
        all_real_critical_points: vec![RealCriticalPoint { mu: fp.mu.clone(), objective: obj }],
        mle_mu: fp.mu,
        mle_sigmas: fp.sigmas,
        objective_at_mle: obj,
        complex_count: 0,
        method: Method::FixedPoint,
        iterations_or_paths: fp.iterations,
        near_tie: false,
        converged: fp.converged,
        critical_points: None,
    })
}

pub fn count_real(problem: &Problem, cfg: &TrackerConfig) -> Result<usize, EstimateError> {
    Ok(critical_points(problem, cfg)?.real_count())
}

/// Convenience accessor for the kept points of a report's solve.
pub fn kept_points(report: &EstimateReport) -> &[CriticalPoint] {
    report.critical_points.as_ref().map_or(&[], |s| s.points.as_slice())
}
