//! Total-degree homotopy continuation.
//!
//! Every isolated solution of a square system `F` is reached by tracking the
//! roots of `G_i(x) = x_i^{d_i} - 1` along
//!
//! ```text
//! H(x, t) = (1 - t) * gamma * G(x) + t * F(x),   t: 0 -> 1
//! ```
//!
//! with a random unit-modulus `gamma`. Paths are tracked in affine space;
//! paths to infinity are cut off by a norm bound.

use num_complex::Complex64;
use num_traits::Zero;
use rayon::prelude::*;
use thiserror::Error;

use crate::poly::{CPoly, PolySystem};
use crate::rng::Rng;
use crate::system::LikelihoodSystem;

/// Upper bound on the number of tracked paths.
pub const MAX_PATHS: u64 = 1_000_000;

/// Hard cap on predictor-corrector steps per path.
const MAX_STEPS: usize = 200_000;

/// Points whose Jacobian condition number exceeds this are flagged singular.
pub const SINGULAR_CONDITION: f64 = 1e10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error("path count {0} exceeds the limit of {MAX_PATHS}")]
    PathCountOverflow(u64),
    #[error("singular Jacobian")]
    SingularJacobian,
    #[error("system is not square ({equations} equations in {variables} variables)")]
    NotSquare { equations: usize, variables: usize },
    #[error("start degree must be at least 1")]
    ZeroDegree,
    #[error("monodromy found {found} of {expected} start solutions")]
    MonodromyStalled { found: usize, expected: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackerConfig {
    pub initial_step: f64,
    pub min_step: f64,
    /// Largest step in `t`.
    pub max_step: f64,
    pub corrector_tol: f64,
    pub max_corrector_iters: usize,
    pub divergence_norm: f64,
    pub endgame_start_t: f64,
    pub refine_tol: f64,
    pub dedup_tol: f64,
    pub real_imag_tol: f64,
    pub denom_zero_tol: f64,
    pub gamma: Complex64,
    pub start: StartKind,
}

/// How the paths for a likelihood system are started.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StartKind {
    /// Generic solutions of the likelihood family, carried to the problem.
    #[default]
    Parameter,
    /// All `(2k + 1)^p` solutions of `x_j^(2k+1) = 1`.
    TotalDegree,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self::with_seed(0)
    }
}

impl TrackerConfig {
    /// Default tolerances with `gamma` drawn from `seed`.
    pub fn with_seed(seed: u64) -> Self {
        Self {
            initial_step: 0.05,
            min_step: 1e-14,
            max_step: 0.1,
            corrector_tol: 1e-10,
            max_corrector_iters: 3,
            divergence_norm: 1e8,
            endgame_start_t: 1.0 - 1e-6,
            refine_tol: 1e-12,
            dedup_tol: 1e-6,
            real_imag_tol: 1e-8,
            denom_zero_tol: 1e-8,
            gamma: gamma_from_seed(seed),
            start: StartKind::Parameter,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let positive = [
            ("min_step", self.min_step),
            ("corrector_tol", self.corrector_tol),
            ("divergence_norm", self.divergence_norm),
            ("refine_tol", self.refine_tol),
            ("dedup_tol", self.dedup_tol),
            ("real_imag_tol", self.real_imag_tol),
            ("denom_zero_tol", self.denom_zero_tol),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| !(*v > 0.0 && v.is_finite())) {
            return Err(format!("{name} must be positive and finite"));
        }
        if !(0.0 < self.min_step && self.min_step < self.initial_step && self.initial_step < 1.0) {
            return Err("need 0 < min_step < initial_step < 1".into());
        }
        if !(self.max_step >= self.initial_step && self.max_step <= 1.0) {
            return Err("need initial_step <= max_step <= 1".into());
        }
        if self.max_corrector_iters == 0 {
            return Err("max_corrector_iters must be at least 1".into());
        }
        if !(0.0 < self.endgame_start_t && self.endgame_start_t <= 1.0) {
            return Err("endgame_start_t must lie in (0, 1]".into());
        }
        if (self.gamma.norm() - 1.0).abs() > 1e-12 {
            return Err("gamma must lie on the unit circle".into());
        }
        Ok(())
    }
}

pub fn gamma_from_seed(seed: u64) -> Complex64 {
    let (c, s) = Rng::new(seed).unit_circle();
    Complex64::new(c, s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathStatus {
    Converged,
    Diverged,
    TrackingFailed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathResult {
    pub status: PathStatus,
    /// Last iterate; the solution when `status` is `Converged`.
    pub endpoint: Vec<Complex64>,
    pub steps_taken: usize,
    /// Jacobian condition estimate of `F` at the endpoint.
    pub condition: f64,
}

pub(crate) fn cnorm(x: &[Complex64]) -> f64 {
    x.iter().map(Complex64::norm_sqr).sum::<f64>().sqrt()
}

/// Solves `A x = b` in place by LU with partial pivoting.
pub(crate) fn lu_solve(a: &mut [Complex64], n: usize, b: &mut [Complex64]) -> Result<(), SolveError> {
    for c in 0..n {
        let piv = (c..n)
            .max_by(|&x, &y| a[x * n + c].norm_sqr().total_cmp(&a[y * n + c].norm_sqr()))
            .expect("non-empty");
        if a[piv * n + c].norm_sqr() == 0.0 || !a[piv * n + c].is_finite() {
            return Err(SolveError::SingularJacobian);
        }
        if piv != c {
            for j in 0..n {
                a.swap(c * n + j, piv * n + j);
            }
            b.swap(c, piv);
        }
        let d = a[c * n + c];
        for r in c + 1..n {
            let f = a[r * n + c] / d;
            if f.is_zero() {
                continue;
            }
            for j in c..n {
                let v = a[c * n + j];
                a[r * n + j] -= f * v;
            }
            let bc = b[c];
            b[r] -= f * bc;
        }
    }
    for r in (0..n).rev() {
        let mut s = b[r];
        for j in r + 1..n {
            s -= a[r * n + j] * b[j];
        }
        b[r] = s / a[r * n + r];
    }
    if b.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(SolveError::SingularJacobian)
    }
}

/// 1-norm condition number of a square matrix (explicit inverse).
pub fn condition_number(a: &[Complex64], n: usize) -> f64 {
    let norm1 = |m: &[Complex64]| {
        (0..n).map(|j| (0..n).map(|i| m[i * n + j].norm()).sum::<f64>()).fold(0.0, f64::max)
    };
    let mut inv = vec![Complex64::zero(); n * n];
    for j in 0..n {
        let mut e = vec![Complex64::zero(); n];
        e[j] = Complex64::new(1.0, 0.0);
        let mut lu = a.to_vec();
        if lu_solve(&mut lu, n, &mut e).is_err() {
            return f64::INFINITY;
        }
        for i in 0..n {
            inv[i * n + j] = e[i];
        }
    }
    norm1(a) * norm1(&inv)
}

/// `G_i(x) = x_i^{d_i} - 1` and all `prod d_i` start roots.
pub fn total_degree_start(degrees: &[u32]) -> Result<(PolySystem, Vec<Vec<Complex64>>), SolveError> {
    if degrees.iter().any(|&d| d == 0) {
        return Err(SolveError::ZeroDegree);
    }
    let count = degrees.iter().try_fold(1u64, |acc, &d| acc.checked_mul(d as u64));
    match count {
        Some(c) if c <= MAX_PATHS => {}
        Some(c) => return Err(SolveError::PathCountOverflow(c)),
        None => return Err(SolveError::PathCountOverflow(u64::MAX)),
    }
    let n = degrees.len();
    let polys = degrees
        .iter()
        .enumerate()
        .map(|(i, &d)| {
            let mut e = vec![0; n];
            e[i] = d;
            CPoly::from_terms(
                n,
                vec![(e, Complex64::new(1.0, 0.0)), (vec![0; n], Complex64::new(-1.0, 0.0))],
            )
        })
        .collect();
    let unity: Vec<Vec<Complex64>> = degrees
        .iter()
        .map(|&d| {
            (0..d)
                .map(|j| Complex64::from_polar(1.0, std::f64::consts::TAU * j as f64 / d as f64))
                .collect()
        })
        .collect();
    let mut roots: Vec<Vec<Complex64>> = vec![Vec::new()];
    for choices in &unity {
        roots = roots
            .into_iter()
            .flat_map(|prefix| {
                choices.iter().map(move |&z| {
                    let mut r = prefix.clone();
                    r.push(z);
                    r
                })
            })
            .collect();
    }
    Ok((PolySystem::new(polys), roots))
}

/// A square polynomial system the tracker can land on.
pub trait SquareSystem: Sync {
    fn nvars(&self) -> usize;

    /// Values and row-major Jacobian.
    fn eval_with_jacobian(&self, x: &[Complex64]) -> (Vec<Complex64>, Vec<Complex64>);

    /// Largest residual norm at which `x` counts as a solution.
    fn residual_tolerance(&self, x: &[Complex64]) -> f64;

    fn eval(&self, x: &[Complex64]) -> Vec<Complex64> {
        self.eval_with_jacobian(x).0
    }
}

impl SquareSystem for PolySystem {
    fn nvars(&self) -> usize {
        PolySystem::nvars(self)
    }

    fn eval_with_jacobian(&self, x: &[Complex64]) -> (Vec<Complex64>, Vec<Complex64>) {
        PolySystem::eval_with_jacobian(self, x)
    }

    fn residual_tolerance(&self, x: &[Complex64]) -> f64 {
        let deg = self.degrees().into_iter().max().unwrap_or(1) as i32;
        let scale = self.polys().iter().map(CPoly::max_abs_coefficient).fold(0.0, f64::max).max(1e-300);
        1e-8 * scale * (1.0 + cnorm(x)).powi(deg)
    }

    fn eval(&self, x: &[Complex64]) -> Vec<Complex64> {
        PolySystem::eval(self, x)
    }
}

/// A path of systems `H(x, s)`, `s` running from 1 down to the target at 0.
/// `s` may be complex in the endgame, so `H` must be analytic in `s`.
pub trait Homotopy: Sync {
    /// `H`, `dH/dx` (row-major) and `dH/ds` at `(x, s)`.
    fn eval(&self, x: &[Complex64], s: Complex64) -> (Vec<Complex64>, Vec<Complex64>, Vec<Complex64>);
}

/// `H = (1 - s) F + s gamma G`, i.e. `t = 1 - s` in the usual notation.
/// Working in `s` keeps full relative precision near `t = 1`.
pub struct StraightLine<'a> {
    pub target: &'a PolySystem,
    pub start: &'a PolySystem,
    pub gamma: Complex64,
}

impl Homotopy for StraightLine<'_> {
    fn eval(&self, x: &[Complex64], s: Complex64) -> (Vec<Complex64>, Vec<Complex64>, Vec<Complex64>) {
        let (fv, fj) = self.target.eval_with_jacobian(x);
        let (gv, gj) = self.start.eval_with_jacobian(x);
        let wf = Complex64::new(1.0, 0.0) - s;
        let wg = self.gamma * s;
        let h = fv.iter().zip(&gv).map(|(a, b)| a * wf + b * wg).collect();
        let hx = fj.iter().zip(&gj).map(|(a, b)| a * wf + b * wg).collect();
        let hs = fv.iter().zip(&gv).map(|(a, b)| b * self.gamma - a).collect();
        (h, hx, hs)
    }
}

enum Correction {
    Converged(Vec<Complex64>),
    Failed,
}

fn correct(hom: &dyn Homotopy, cfg: &TrackerConfig, mut x: Vec<Complex64>, s: Complex64) -> Correction {
    let n = x.len();
    let mut prev_step = f64::INFINITY;
    for _ in 0..cfg.max_corrector_iters {
        let (mut h, mut hx, _) = hom.eval(&x, s);
        h.iter_mut().for_each(|v| *v = -*v);
        if lu_solve(&mut hx, n, &mut h).is_err() {
            return Correction::Failed;
        }
        let step = cnorm(&h);
        let scale = 1.0 + cnorm(&x);
        // Newton must contract, otherwise the prediction left the basin;
        // stalling at tiny steps is the rounding floor of H, not divergence
        if step > 0.5 * prev_step && prev_step > cfg.corrector_tol * scale {
            return if prev_step <= NOISE_FLOOR * cfg.corrector_tol * scale {
                Correction::Converged(x)
            } else {
                Correction::Failed
            };
        }
        x.iter_mut().zip(&h).for_each(|(xi, d)| *xi += d);
        if step <= cfg.corrector_tol * (1.0 + cnorm(&x)) {
            return Correction::Converged(x);
        }
        prev_step = step;
    }
    Correction::Failed
}

/// One Euler predictor step from `(x, s)` to `s + ds`, then the corrector.
fn predict_correct(
    hom: &dyn Homotopy,
    cfg: &TrackerConfig,
    x: &[Complex64],
    s: Complex64,
    ds: Complex64,
) -> Correction {
    let (_, mut hx, mut hs) = hom.eval(x, s);
    hs.iter_mut().for_each(|v| *v = -*v);
    if lu_solve(&mut hx, x.len(), &mut hs).is_err() {
        return Correction::Failed;
    }
    let predicted = x.iter().zip(&hs).map(|(xi, v)| xi + v * ds).collect();
    correct(hom, cfg, predicted, s + ds)
}

fn endpoint_ok(f: &dyn SquareSystem, x: &[Complex64]) -> bool {
    cnorm(&f.eval(x)) <= f.residual_tolerance(x)
}

/// A corrector whose steps stop shrinking within this multiple of
/// `corrector_tol` has reached the accuracy the evaluation allows.
const NOISE_FLOOR: f64 = 1e3;

/// Samples per turn of an endgame loop.
const LOOP_SAMPLES: usize = 16;

/// Largest winding number the endgame looks for.
const MAX_WINDING: usize = 16;

/// Radii of successive endgame loops shrink by this factor.
const LOOP_SHRINK: f64 = 0.1;

/// Mutable state of one path.
struct Walker<'a> {
    hom: &'a dyn Homotopy,
    cfg: &'a TrackerConfig,
    x: Vec<Complex64>,
    s: f64,
    h: f64,
    steps: usize,
}

impl Walker<'_> {
    /// Moves `s` down towards `target`, stopping as soon as `s <= exit`.
    fn advance(&mut self, target: f64, exit: f64) -> Result<(), PathStatus> {
        let mut successes = 0;
        while self.s > exit {
            if self.steps >= MAX_STEPS {
                return Err(PathStatus::TrackingFailed);
            }
            self.steps += 1;
            let last = self.h >= self.s - target;
            let ds = if last { target - self.s } else { -self.h };
            let s0 = Complex64::new(self.s, 0.0);
            match predict_correct(self.hom, self.cfg, &self.x, s0, Complex64::new(ds, 0.0)) {
                Correction::Converged(xn) => {
                    self.x = xn;
                    self.s = if last { target } else { self.s + ds };
                    successes += 1;
                    if successes >= 4 {
                        self.h = (self.h * 1.5).min(self.cfg.max_step);
                        successes = 0;
                    }
                    if cnorm(&self.x) > self.cfg.divergence_norm {
                        return Err(PathStatus::Diverged);
                    }
                }
                Correction::Failed => {
                    successes = 0;
                    self.h *= 0.5;
                    if self.h < self.cfg.min_step {
                        return Err(if cnorm(&self.x) > self.cfg.divergence_norm.sqrt() {
                            PathStatus::Diverged
                        } else {
                            PathStatus::TrackingFailed
                        });
                    }
                }
            }
        }
        Ok(())
    }

    /// Tracks around `|s| = radius` from the current point, turn after turn
    /// until the path closes up, and returns the mean of the equally spaced
    /// samples together with the number of turns.
    ///
    /// Near `s = 0` the path is a convergent series in `s^(1/c)` for some
    /// winding number `c`; averaging over the closed loop keeps only the
    /// constant term, which is the endpoint, singular or not.
    fn cauchy_loop(&mut self, radius: f64) -> Option<(Vec<Complex64>, usize)> {
        let start = self.x.clone();
        let mut x = start.clone();
        let mut sum = start.clone();
        let mut count = 1usize;
        let spacing = std::f64::consts::TAU / LOOP_SAMPLES as f64;
        let at = |theta: f64| Complex64::from_polar(radius, theta);
        let mut theta = 0.0f64;
        let mut dtheta = spacing;
        for turn in 1..=MAX_WINDING {
            for k in 1..=LOOP_SAMPLES {
                let target = ((turn - 1) * LOOP_SAMPLES + k) as f64 * spacing;
                while theta < target {
                    if self.steps >= MAX_STEPS {
                        return None;
                    }
                    self.steps += 1;
                    let last = dtheta >= target - theta;
                    let next = if last { target } else { theta + dtheta };
                    let s0 = at(theta);
                    match predict_correct(self.hom, self.cfg, &x, s0, at(next) - s0) {
                        Correction::Converged(xn) => {
                            x = xn;
                            theta = next;
                            dtheta = (dtheta * 2.0).min(spacing);
                        }
                        Correction::Failed => {
                            dtheta *= 0.5;
                            if dtheta < 1e-10 {
                                return None;
                            }
                        }
                    }
                }
                if k == LOOP_SAMPLES && same_point(&x, &start, self.cfg.dedup_tol) {
                    let mean = sum.iter().map(|v| v / count as f64).collect();
                    return Some((mean, turn));
                }
                sum.iter_mut().zip(&x).for_each(|(a, b)| *a += b);
                count += 1;
            }
        }
        None
    }
}

/// Tracks one start root of `G` to a solution of `F` along
/// `(1 - t) gamma G + t F`.
pub fn track_path(f: &PolySystem, g: &PolySystem, x0: &[Complex64], cfg: &TrackerConfig) -> PathResult {
    track(&StraightLine { target: f, start: g, gamma: cfg.gamma }, f, x0, cfg)
}

/// Tracks `x0`, a solution of `hom` at `s = 1`, to a solution of `target`,
/// which must equal `hom` at `s = 0`.
///
/// Euler predictor, Newton corrector, step halving on failure and growth by
/// 1.5 after four consecutive successes. A path that lands on `s = 0` is
/// polished with Newton on `target`. A path still short of it once it passes
/// `t = cfg.endgame_start_t` is finished with the Cauchy endgame: loops
/// around `s = 0` of shrinking radius until two successive loop means agree.
pub fn track(hom: &dyn Homotopy, target: &dyn SquareSystem, x0: &[Complex64], cfg: &TrackerConfig) -> PathResult {
    let mut w = Walker { hom, cfg, x: x0.to_vec(), s: 1.0, h: cfg.initial_step, steps: 0 };
    let finish = |x: Vec<Complex64>, steps: usize, status: PathStatus, condition: f64| PathResult {
        status,
        endpoint: x,
        steps_taken: steps,
        condition,
    };
    if let Err(status) = w.advance(0.0, 1.0 - cfg.endgame_start_t) {
        return finish(w.x, w.steps, status, f64::INFINITY);
    }
    if w.s == 0.0 {
        return match newton_refine(target, &w.x, cfg.refine_tol) {
            Ok((xr, condition)) if endpoint_ok(target, &xr) => {
                let status =
                    if cnorm(&xr) > cfg.divergence_norm { PathStatus::Diverged } else { PathStatus::Converged };
                finish(xr, w.steps, status, condition)
            }
            Ok((xr, condition)) => finish(xr, w.steps, PathStatus::TrackingFailed, condition),
            Err(_) => finish(w.x, w.steps, PathStatus::TrackingFailed, f64::INFINITY),
        };
    }

    let mut previous: Option<Vec<Complex64>> = None;
    for _ in 0..5 {
        let Some((estimate, _)) = w.cauchy_loop(w.s) else { break };
        if let Some(prev) = &previous {
            if same_point(prev, &estimate, 1e-2 * cfg.dedup_tol) {
                return settle(target, cfg, estimate, w.steps);
            }
        }
        previous = Some(estimate);
        let next = w.s * LOOP_SHRINK;
        if w.advance(next, next).is_err() {
            break;
        }
    }
    let status = if cnorm(&w.x) > cfg.divergence_norm.sqrt() {
        PathStatus::Diverged
    } else {
        PathStatus::TrackingFailed
    };
    finish(w.x, w.steps, status, f64::INFINITY)
}

/// Turns an endgame estimate into a path result, polishing it with Newton
/// when the Jacobian there is well conditioned.
fn settle(f: &dyn SquareSystem, cfg: &TrackerConfig, estimate: Vec<Complex64>, steps: usize) -> PathResult {
    let n = estimate.len();
    let (_, jac) = f.eval_with_jacobian(&estimate);
    let mut condition = condition_number(&jac, n);
    let mut x = estimate;
    if condition <= SINGULAR_CONDITION {
        if let Ok((xr, c)) = newton_refine(f, &x, cfg.refine_tol) {
            if same_point(&xr, &x, cfg.dedup_tol) {
                x = xr;
                condition = c;
            }
        }
    }
    let status = if cnorm(&x) > cfg.divergence_norm {
        PathStatus::Diverged
    } else if endpoint_ok(f, &x) {
        PathStatus::Converged
    } else {
        PathStatus::TrackingFailed
    };
    PathResult { status, endpoint: x, steps_taken: steps, condition }
}

/// Newton's method on `F` from `x` until the update falls below
/// `tol * (1 + |x|)` or 50 iterations. Returns the iterate with the smallest
/// residual seen and the Jacobian condition estimate there.
pub fn newton_refine(
    f: &dyn SquareSystem,
    x: &[Complex64],
    tol: f64,
) -> Result<(Vec<Complex64>, f64), SolveError> {
    let n = x.len();
    let mut x = x.to_vec();
    let (v0, _) = f.eval_with_jacobian(&x);
    let mut best = (cnorm(&v0), x.clone());
    for _ in 0..50 {
        let (mut v, mut jac) = f.eval_with_jacobian(&x);
        v.iter_mut().for_each(|c| *c = -*c);
        lu_solve(&mut jac, n, &mut v)?;
        x.iter_mut().zip(&v).for_each(|(xi, d)| *xi += d);
        let r = cnorm(&f.eval(&x));
        if r <= best.0 {
            best = (r, x.clone());
        }
        if cnorm(&v) <= tol * (1.0 + cnorm(&x)) || r == 0.0 {
            break;
        }
    }
    let (_, jac) = f.eval_with_jacobian(&best.1);
    Ok((best.1, condition_number(&jac, n)))
}

/// One distinct solution and how many paths reached it.
#[derive(Debug, Clone, PartialEq)]
pub struct SolvedPoint {
    pub x: Vec<Complex64>,
    pub multiplicity: usize,
    pub condition: f64,
}

impl SolvedPoint {
    pub fn is_singular(&self) -> bool {
        !(self.condition <= SINGULAR_CONDITION)
    }
}

#[derive(Debug, Clone)]
pub struct SolveOutcome {
    /// Distinct converged endpoints in lexicographic order.
    pub points: Vec<SolvedPoint>,
    pub paths: Vec<PathResult>,
    pub diverged: usize,
    pub failed: usize,
}

/// Lexicographic order on `(Re x1, Im x1, Re x2, ...)`.
pub fn lex_cmp(a: &[Complex64], b: &[Complex64]) -> std::cmp::Ordering {
    for (u, v) in a.iter().zip(b) {
        let o = u.re.total_cmp(&v.re).then(u.im.total_cmp(&v.im));
        if o.is_ne() {
            return o;
        }
    }
    std::cmp::Ordering::Equal
}

/// `|a - b| <= tol * (1 + max(|a|, |b|))`.
pub fn same_point(a: &[Complex64], b: &[Complex64], tol: f64) -> bool {
    let d: f64 = a.iter().zip(b).map(|(u, v)| (u - v).norm_sqr()).sum::<f64>().sqrt();
    d <= tol * (1.0 + cnorm(a).max(cnorm(b)))
}

/// Each equation divided by its largest coefficient modulus.
pub fn normalize_equations(f: &PolySystem) -> PolySystem {
    PolySystem::new(
        f.polys()
            .iter()
            .map(|p| {
                let m = p.max_abs_coefficient();
                if m > 0.0 {
                    p.scaled(Complex64::new(1.0 / m, 0.0))
                } else {
                    p.clone()
                }
            })
            .collect(),
    )
}

/// Tracks every total-degree path of `F` in parallel and returns the distinct
/// refined endpoints.
pub fn solve_system(f: &PolySystem, cfg: &TrackerConfig) -> Result<SolveOutcome, SolveError> {
    if !f.is_square() {
        return Err(SolveError::NotSquare { equations: f.len(), variables: f.nvars() });
    }
    let f = normalize_equations(f);
    let (g, starts) = total_degree_start(&f.degrees())?;
    let paths: Vec<PathResult> = starts.par_iter().map(|x0| track_path(&f, &g, x0, cfg)).collect();
    Ok(collect_endpoints(paths, cfg))
}

/// Groups converged endpoints that agree to `cfg.dedup_tol` and counts the
/// rest by status.
pub fn collect_endpoints(paths: Vec<PathResult>, cfg: &TrackerConfig) -> SolveOutcome {
    let mut clusters: Vec<SolvedPoint> = Vec::new();
    for r in paths.iter().filter(|r| r.status == PathStatus::Converged) {
        match clusters.iter_mut().find(|c| same_point(&c.x, &r.endpoint, cfg.dedup_tol)) {
            Some(c) => {
                c.multiplicity += 1;
                c.condition = c.condition.max(r.condition);
            }
            None => clusters.push(SolvedPoint {
                x: r.endpoint.clone(),
                multiplicity: 1,
                condition: r.condition,
            }),
        }
    }
    clusters.sort_by(|a, b| lex_cmp(&a.x, &b.x));
    let diverged = paths.iter().filter(|r| r.status == PathStatus::Diverged).count();
    let failed = paths.iter().filter(|r| r.status == PathStatus::TrackingFailed).count();
    SolveOutcome { points: clusters, paths, diverged, failed }
}

/// One solution of the likelihood equations.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticalPoint {
    pub mu: Vec<Complex64>,
    pub is_real: bool,
    pub multiplicity_estimate: usize,
    pub condition: f64,
    pub denominator_values: Vec<Complex64>,
    /// `|F(mu)| / (coefficient scale * (1 + |mu|)^(2k+1))`.
    pub residual_norm: f64,
}

impl CriticalPoint {
    pub fn real_mu(&self) -> Vec<f64> {
        self.mu.iter().map(|z| z.re).collect()
    }

    pub fn is_singular(&self) -> bool {
        !(self.condition <= SINGULAR_CONDITION)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CriticalPointSet {
    pub points: Vec<CriticalPoint>,
    pub discarded_denominator_zero: usize,
    pub diverged_paths: usize,
    pub failed_paths: usize,
    /// Non-real points without a conjugate partner.
    pub unpaired: usize,
    /// Endpoints where the min and max denominator tests disagreed.
    pub denominator_disagreements: usize,
    pub paths_tracked: usize,
}

impl CriticalPointSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn real_points(&self) -> impl Iterator<Item = &CriticalPoint> {
        self.points.iter().filter(|c| c.is_real)
    }

    pub fn real_count(&self) -> usize {
        self.real_points().count()
    }

    /// True when some kept point is singular, reached by several paths, or
    /// tracking lost paths.
    pub fn ill_conditioned(&self) -> bool {
        self.failed_paths > 0
            || self.unpaired > 0
            || self.points.iter().any(|c| c.is_singular() || c.multiplicity_estimate > 1)
    }

    /// One line per point: real and imaginary parts, realness, residual and
    /// denominator values, all with 17 significant digits.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for c in &self.points {
            let mu: Vec<String> =
                c.mu.iter().map(|z| format!("{:.16e} {:.16e}", z.re, z.im)).collect();
            let dens: Vec<String> = c
                .denominator_values
                .iter()
                .map(|z| format!("{:.16e} {:.16e}", z.re, z.im))
                .collect();
            out.push_str(&format!(
                "{} | {} | {:.16e} | {}\n",
                mu.join(" "),
                if c.is_real { "real" } else { "complex" },
                c.residual_norm,
                dens.join(" ")
            ));
        }
        out
    }
}

/// Distance, relative to `1 + |x|`, from `x` to the nearest point where two
/// denominators vanish together, found by Gauss-Newton from `x` for the two
/// denominators smallest in modulus there. `None` when the iteration does not
/// converge.
///
/// On that set every cleared summand has a vanishing factor, so it lies in the
/// cleared system's zero set. Endpoints of paths that end on it are only
/// accurate to the conditioning of a non-isolated solution, so the
/// denominator test is applied after projecting them onto it.
pub fn excess_projection(system: &LikelihoodSystem, x: &[Complex64]) -> Option<(Vec<Complex64>, f64)> {
    let dens = system.denominators();
    if dens.len() < 2 {
        return None;
    }
    let mut order: Vec<usize> = (0..dens.len()).collect();
    let mags: Vec<f64> = dens.iter().map(|d| d.eval_complex(x).norm()).collect();
    order.sort_by(|&a, &b| mags[a].total_cmp(&mags[b]));
    let pair = [&dens[order[0]], &dens[order[1]]];
    let p = x.len();
    let mut y = x.to_vec();
    for _ in 0..30 {
        let r: Vec<Complex64> = pair.iter().map(|d| d.eval_complex(&y)).collect();
        let j: Vec<Vec<Complex64>> = pair.iter().map(|d| d.gradient_complex(&y)).collect();
        // minimum-norm (p >= 2) or least-squares (p = 1) step
        let step: Vec<Complex64> = if p >= 2 {
            let mut gram: Vec<Complex64> = (0..2)
                .flat_map(|a| (0..2).map(move |b| (a, b)))
                .map(|(a, b)| (0..p).map(|c| j[a][c] * j[b][c].conj()).sum())
                .collect();
            let mut rhs = vec![-r[0], -r[1]];
            lu_solve(&mut gram, 2, &mut rhs).ok()?;
            (0..p).map(|c| j[0][c].conj() * rhs[0] + j[1][c].conj() * rhs[1]).collect()
        } else {
            let g: f64 = j.iter().map(|row| row[0].norm_sqr()).sum();
            if g == 0.0 {
                return None;
            }
            vec![-(j[0][0].conj() * r[0] + j[1][0].conj() * r[1]) / g]
        };
        y.iter_mut().zip(&step).for_each(|(yi, s)| *yi += s);
        if !y.iter().all(|v| v.is_finite()) {
            return None;
        }
        if cnorm(&step) <= 1e-15 * (1.0 + cnorm(&y)) {
            break;
        }
    }
    let bound = 1e-12 * (1.0 + cnorm(&y)).powi(2);
    if !pair.iter().all(|d| d.eval_complex(&y).norm() <= bound) {
        return None;
    }
    let moved: f64 = y.iter().zip(x).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
    let rel = moved / (1.0 + cnorm(x));
    Some((y, rel))
}

/// Drops endpoints on which the denominators vanish, classifies the rest as
/// real or complex and checks conjugate pairing.
pub fn classify_and_filter(
    points: &[SolvedPoint],
    system: &LikelihoodSystem,
    cfg: &TrackerConfig,
) -> CriticalPointSet {
    let f = PolySystem::new(system.polys().iter().map(|p| p.to_complex()).collect());
    let scale = system.coefficient_scale().max(1e-300);
    let deg = system.expected_degree() as i32;
    let mut set = CriticalPointSet::default();
    for sp in points {
        let norm = cnorm(&sp.x);
        let probe = excess_projection(system, &sp.x)
            .filter(|(_, rel)| *rel <= cfg.dedup_tol)
            .map(|(y, _)| y);
        let dens: Vec<Complex64> = system
            .denominators()
            .iter()
            .map(|d| d.eval_complex(probe.as_deref().unwrap_or(&sp.x)))
            .collect();
        let bound = cfg.denom_zero_tol * (1.0 + norm).powi(2);
        let min_zero = dens.iter().any(|d| d.norm() <= bound);
        let max_zero = dens.iter().all(|d| d.norm() <= bound);
        if min_zero != max_zero {
            set.denominator_disagreements += 1;
            log::warn!(
                "denominators disagree at {:?}: {:?} (bound {bound:e})",
                sp.x,
                dens.iter().map(|d| d.norm()).collect::<Vec<_>>()
            );
        }
        if min_zero {
            set.discarded_denominator_zero += 1;
            continue;
        }
        let is_real = sp.x.iter().map(|z| z.im.abs()).fold(0.0, f64::max)
            <= cfg.real_imag_tol * (1.0 + norm);
        let mu: Vec<Complex64> = if is_real {
            sp.x.iter().map(|z| Complex64::new(z.re, 0.0)).collect()
        } else {
            sp.x.clone()
        };
        let residual_norm = cnorm(&f.eval(&mu)) / (scale * (1.0 + cnorm(&mu)).powi(deg));
        let denominator_values = if is_real {
            system.denominators().iter().map(|d| d.eval_complex(&mu)).collect()
        } else {
            dens
        };
        set.points.push(CriticalPoint {
            mu,
            is_real,
            multiplicity_estimate: sp.multiplicity,
            condition: sp.condition,
            denominator_values,
            residual_norm,
        });
    }
    set.points.sort_by(|a, b| lex_cmp(&a.mu, &b.mu));
    for c in set.points.iter().filter(|c| !c.is_real) {
        let conj: Vec<Complex64> = c.mu.iter().map(Complex64::conj).collect();
        if !set.points.iter().any(|o| same_point(&o.mu, &conj, cfg.dedup_tol)) {
            set.unpaired += 1;
        }
    }
    if set.unpaired > 0 {
        log::warn!("{} non-real critical points lack a conjugate partner", set.unpaired);
    }
    set
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn univariate(coeffs: &[(u32, f64)]) -> PolySystem {
        PolySystem::new(vec![CPoly::from_terms(1, coeffs.iter().map(|&(e, v)| (vec![e], c(v))))])
    }

    #[test]
    fn start_system_shapes() {
        let (g, roots) = total_degree_start(&[1]).unwrap();
        assert_eq!(roots, vec![vec![c(1.0)]]);
        assert_eq!(g.eval(&[c(1.0)]), vec![c(0.0)]);
        let (g, roots) = total_degree_start(&[3, 3]).unwrap();
        assert_eq!(roots.len(), 9);
        for r in &roots {
            assert!(cnorm(&g.eval(r)) <= 1e-14 * 2.0);
        }
        assert_eq!(total_degree_start(&[2, 2]).unwrap().1.len(), 4);
        assert_eq!(
            total_degree_start(&[1000, 1001]).unwrap_err(),
            SolveError::PathCountOverflow(1_001_000)
        );
    }

    #[test]
    fn identical_systems_stay_put() {
        let (g, roots) = total_degree_start(&[3, 2]).unwrap();
        let cfg = TrackerConfig::with_seed(5);
        for r in &roots {
            let res = track_path(&g, &g, r, &cfg);
            assert_eq!(res.status, PathStatus::Converged);
            assert!(same_point(&res.endpoint, r, 1e-12));
        }
    }

    #[test]
    fn newton_scalar() {
        let f = univariate(&[(2, 1.0), (0, -1.0)]);
        let (x, _) = newton_refine(&f, &[c(1.0)], 1e-14).unwrap();
        assert_eq!(x, vec![c(1.0)]);
        let (x, cond) = newton_refine(&f, &[c(1.1)], 1e-14).unwrap();
        assert!((x[0] - c(1.0)).norm() < 1e-14);
        assert!(cond.is_finite());
    }

    #[test]
    fn newton_quadratic_convergence() {
        // count iterations by hand with the same update
        let mut x = 1.1f64;
        let mut iters = 0;
        while (x - 1.0).abs() > 1e-14 {
            x -= (x * x - 1.0) / (2.0 * x);
            iters += 1;
        }
        assert!(iters <= 6);
    }

    #[test]
    fn solve_square_roots_of_one() {
        let f = univariate(&[(2, 1.0), (0, -1.0)]);
        let out = solve_system(&f, &TrackerConfig::with_seed(1)).unwrap();
        assert_eq!(out.points.len(), 2);
        assert!((out.points[0].x[0] - c(-1.0)).norm() < 1e-12);
        assert!((out.points[1].x[0] - c(1.0)).norm() < 1e-12);
    }

    #[test]
    fn solve_complex_pair() {
        // x^3 + x has roots 0, +-i
        let f = univariate(&[(3, 1.0), (1, 1.0)]);
        let out = solve_system(&f, &TrackerConfig::with_seed(2)).unwrap();
        assert_eq!(out.points.len(), 3);
        assert!(out.points.iter().any(|p| (p.x[0] - Complex64::new(0.0, 1.0)).norm() < 1e-12));
        assert!(out.points.iter().any(|p| (p.x[0] - Complex64::new(0.0, -1.0)).norm() < 1e-12));
    }

    #[test]
    fn two_variable_system() {
        // x^2 + y^2 - 5 = 0, x y - 2 = 0: (1,2), (2,1), (-1,-2), (-2,-1)
        let f = PolySystem::new(vec![
            CPoly::from_terms(2, vec![(vec![2, 0], c(1.0)), (vec![0, 2], c(1.0)), (vec![0, 0], c(-5.0))]),
            CPoly::from_terms(2, vec![(vec![1, 1], c(1.0)), (vec![0, 0], c(-2.0))]),
        ]);
        let out = solve_system(&f, &TrackerConfig::with_seed(3)).unwrap();
        let got: Vec<(f64, f64)> = out.points.iter().map(|p| (p.x[0].re, p.x[1].re)).collect();
        let want = [(-2.0, -1.0), (-1.0, -2.0), (1.0, 2.0), (2.0, 1.0)];
        assert_eq!(got.len(), 4);
        for (g, w) in got.iter().zip(want) {
            assert!((g.0 - w.0).abs() < 1e-10 && (g.1 - w.1).abs() < 1e-10);
        }
    }

    #[test]
    fn config_validation() {
        assert!(TrackerConfig::default().validate().is_ok());
        let mut bad = TrackerConfig::default();
        bad.min_step = 0.5;
        assert!(bad.validate().is_err());
        let mut bad = TrackerConfig::default();
        bad.gamma = c(2.0);
        assert!(bad.validate().is_err());
    }
}
