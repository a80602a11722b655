//! Parameter homotopy inside the family of cleared likelihood systems.
//!
//! The cleared system
//!
//! ```text
//! F(mu) = sum_i N_i (prod_{j != i} D_j(mu)) M_i (z_i - mu),
//! D_i(mu) = 1 + (z_i - mu)' M_i (z_i - mu)
//! ```
//!
//! is polynomial in its coefficients `(N_i, z_i, M_i)` as well as in `mu`.
//! For generic complex coefficients it has exactly `d(k, p)` solutions off
//! the set where two denominators vanish, all of them simple. They are found
//! once per shape by monodromy and then carried to a concrete problem along a
//! path of coefficients, so only `d(k, p)` well-conditioned paths are tracked
//! and none of them runs into the excess components of the cleared system.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use num_traits::{ToPrimitive, Zero};
use rayon::prelude::*;

use crate::homotopy::{
    cnorm, collect_endpoints, condition_number, lu_solve, same_point, track, Homotopy, PathStatus,
    SolveError, SolveOutcome, SquareSystem, TrackerConfig, MAX_PATHS, SINGULAR_CONDITION,
};
use crate::mldegree::ml_degree;
use crate::rng::{derive_seed, Rng};
use crate::system::LikelihoodSystem;

/// Monodromy gives up after this many loops without a new solution.
const STALL_LIMIT: usize = 30;

const START_SEED: u64 = 0x2545_f491_4f6c_dd1d;
const BULGE_SEED: u64 = 0x9e6c_63d0_676a_9a99;

type C = Complex64;

/// Coefficients of one member of the family.
#[derive(Debug, Clone, PartialEq)]
pub struct Coefficients {
    p: usize,
    weights: Vec<C>,
    centers: Vec<Vec<C>>,
    /// Symmetric `p x p` forms, row-major.
    forms: Vec<Vec<C>>,
}

impl Coefficients {
    /// The system's own coefficients, with weights scaled to sum to one
    /// (which leaves the solutions unchanged).
    pub fn from_system(system: &LikelihoodSystem) -> Self {
        let p = system.dim();
        let total: f64 = system.weights().iter().sum();
        let dens = system.denominators();
        Self {
            p,
            weights: system.weights().iter().map(|w| C::new(w / total, 0.0)).collect(),
            centers: dens.iter().map(|d| d.center.iter().map(|&v| C::new(v, 0.0)).collect()).collect(),
            forms: dens
                .iter()
                .map(|d| (0..p * p).map(|e| C::new(d.inv_scatter.get(e / p, e % p), 0.0)).collect())
                .collect(),
        }
    }

    /// Random complex coefficients of roughly unit size.
    pub fn random(p: usize, groups: usize, rng: &mut Rng) -> Self {
        let mut normal = || C::new(rng.standard_normal(), rng.standard_normal());
        let weights = (0..groups).map(|_| C::new(1.0 / groups as f64, 0.0) + normal() * 0.3).collect();
        let centers = (0..groups).map(|_| (0..p).map(|_| normal()).collect()).collect();
        let forms = (0..groups)
            .map(|_| {
                let mut m = vec![C::zero(); p * p];
                for i in 0..p {
                    for j in 0..=i {
                        let v = normal() * 0.5 + if i == j { C::new(1.0, 0.0) } else { C::zero() };
                        m[i * p + j] = v;
                        m[j * p + i] = v;
                    }
                }
                m
            })
            .collect();
        Self { p, weights, centers, forms }
    }

    pub fn dim(&self) -> usize {
        self.p
    }

    pub fn group_count(&self) -> usize {
        self.weights.len()
    }

    /// `sum_j c_j * terms_j`.
    fn combine(terms: &[(&Self, C)]) -> Self {
        let (first, _) = terms[0];
        let mut out = Self {
            p: first.p,
            weights: vec![C::zero(); first.weights.len()],
            centers: vec![vec![C::zero(); first.p]; first.weights.len()],
            forms: vec![vec![C::zero(); first.p * first.p]; first.weights.len()],
        };
        for (t, c) in terms {
            for i in 0..out.weights.len() {
                out.weights[i] += t.weights[i] * c;
                out.centers[i].iter_mut().zip(&t.centers[i]).for_each(|(a, b)| *a += b * c);
                out.forms[i].iter_mut().zip(&t.forms[i]).for_each(|(a, b)| *a += b * c);
            }
        }
        out
    }

    /// Denominator values at `x`.
    pub fn denominators(&self, x: &[C]) -> Vec<C> {
        (0..self.group_count())
            .map(|i| {
                let a: Vec<C> = (0..self.p).map(|j| self.centers[i][j] - x[j]).collect();
                let b = self.form_mul(i, &a);
                C::new(1.0, 0.0) + a.iter().zip(&b).map(|(u, v)| u * v).sum::<C>()
            })
            .collect()
    }

    fn form_mul(&self, i: usize, v: &[C]) -> Vec<C> {
        let p = self.p;
        (0..p).map(|r| (0..p).map(|c| self.forms[i][r * p + c] * v[c]).sum()).collect()
    }

    /// `F`, its Jacobian in `x` and, when `dir` is given, the derivative of
    /// `F` when the coefficients move along `dir`.
    fn eval_full(&self, x: &[C], dir: Option<&Self>) -> (Vec<C>, Vec<C>, Vec<C>) {
        let p = self.p;
        let g = self.group_count();
        let one = C::new(1.0, 0.0);
        let a: Vec<Vec<C>> = (0..g).map(|i| (0..p).map(|j| self.centers[i][j] - x[j]).collect()).collect();
        let b: Vec<Vec<C>> = (0..g).map(|i| self.form_mul(i, &a[i])).collect();
        let d: Vec<C> = (0..g).map(|i| one + a[i].iter().zip(&b[i]).map(|(u, v)| u * v).sum::<C>()).collect();
        // products of the denominators leaving out one or two indices
        let prod_without = |skip: &[usize]| -> C {
            (0..g).filter(|l| !skip.contains(l)).map(|l| d[l]).fold(one, |acc, v| acc * v)
        };
        let p1: Vec<C> = (0..g).map(|i| prod_without(&[i])).collect();
        let p2: Vec<Vec<C>> =
            (0..g).map(|i| (0..g).map(|l| if l == i { C::zero() } else { prod_without(&[i, l]) }).collect()).collect();

        let mut f = vec![C::zero(); p];
        let mut jac = vec![C::zero(); p * p];
        for i in 0..g {
            let n = self.weights[i];
            for j in 0..p {
                f[j] += n * p1[i] * b[i][j];
            }
            for m in 0..p {
                // d P_i / d x_m with d D_l / d x_m = -2 b_lm
                let dp: C = (0..g).filter(|&l| l != i).map(|l| b[l][m] * -2.0 * p2[i][l]).sum();
                for j in 0..p {
                    jac[j * p + m] += n * (dp * b[i][j] - p1[i] * self.forms[i][j * p + m]);
                }
            }
        }

        let mut fdot = vec![C::zero(); p];
        if let Some(dir) = dir {
            // dD_i = 2 zdot_i' b_i + a_i' Mdot_i a_i
            let ddot: Vec<C> = (0..g)
                .map(|i| {
                    let zdot = &dir.centers[i];
                    zdot.iter().zip(&b[i]).map(|(u, v)| u * v).sum::<C>() * 2.0
                        + a[i].iter().zip(dir.form_mul(i, &a[i])).map(|(u, v)| u * v).sum::<C>()
                })
                .collect();
            for i in 0..g {
                // db_i = Mdot_i a_i + M_i zdot_i
                let mut bdot = dir.form_mul(i, &a[i]);
                bdot.iter_mut().zip(self.form_mul(i, &dir.centers[i])).for_each(|(u, v)| *u += v);
                let pdot: C = (0..g).filter(|&l| l != i).map(|l| ddot[l] * p2[i][l]).sum();
                let n = self.weights[i];
                let ndot = dir.weights[i];
                for j in 0..p {
                    fdot[j] += ndot * p1[i] * b[i][j] + n * pdot * b[i][j] + n * p1[i] * bdot[j];
                }
            }
        }
        (f, jac, fdot)
    }

    /// Size of the terms of `F` at `x`, for scale-aware residual tests.
    fn magnitude(&self, x: &[C]) -> f64 {
        let p = self.p;
        let form_norm = |i: usize| self.forms[i].iter().map(|v| v.norm()).fold(0.0, f64::max) * p as f64;
        let dist: Vec<f64> = (0..self.group_count())
            .map(|i| (0..p).map(|j| (self.centers[i][j] - x[j]).norm_sqr()).sum::<f64>().sqrt())
            .collect();
        let dmag: Vec<f64> = (0..self.group_count()).map(|i| 1.0 + form_norm(i) * dist[i] * dist[i]).collect();
        (0..self.group_count())
            .map(|i| {
                let others: f64 = (0..self.group_count()).filter(|&l| l != i).map(|l| dmag[l]).product();
                self.weights[i].norm() * others * form_norm(i) * dist[i]
            })
            .sum::<f64>()
            .max(f64::MIN_POSITIVE)
    }
}

impl SquareSystem for Coefficients {
    fn nvars(&self) -> usize {
        self.p
    }

    fn eval_with_jacobian(&self, x: &[C]) -> (Vec<C>, Vec<C>) {
        let (f, j, _) = self.eval_full(x, None);
        (f, j)
    }

    fn residual_tolerance(&self, x: &[C]) -> f64 {
        1e-8 * self.magnitude(x)
    }
}

/// Coefficients moving from `from` (at `s = 1`) to `to` (at `s = 0`), bent
/// off the straight segment by `gamma * s (1 - s) * bulge`.
struct CoefficientPath<'a> {
    from: &'a Coefficients,
    to: &'a Coefficients,
    bulge: Option<(&'a Coefficients, C)>,
}

impl Homotopy for CoefficientPath<'_> {
    fn eval(&self, x: &[C], s: C) -> (Vec<C>, Vec<C>, Vec<C>) {
        let one = C::new(1.0, 0.0);
        let mut at = vec![(self.to, one - s), (self.from, s)];
        let mut velocity = vec![(self.from, one), (self.to, -one)];
        if let Some((r, gamma)) = self.bulge {
            at.push((r, gamma * s * (one - s)));
            velocity.push((r, gamma * (one - s * 2.0)));
        }
        let q = Coefficients::combine(&at);
        let dq = Coefficients::combine(&velocity);
        q.eval_full(x, Some(&dq))
    }
}

/// Solutions of one generic member of the family.
#[derive(Debug, Clone)]
pub struct StartPoint {
    pub coefficients: Coefficients,
    pub solutions: Vec<Vec<C>>,
}

/// Random complex coefficients together with one solution: all data but the
/// first center is drawn at random, then the first center is solved for so
/// that a random `mu0` satisfies the rational likelihood equations.
fn seeded_instance(p: usize, groups: usize, rng: &mut Rng) -> Option<(Coefficients, Vec<C>)> {
    let mut coeffs = Coefficients::random(p, groups, rng);
    let mu0: Vec<C> = (0..p).map(|_| C::new(rng.standard_normal(), rng.standard_normal())).collect();
    let dens = coeffs.denominators(&mu0);
    // v = -sum_{i >= 1} N_i M_i (z_i - mu0) / D_i
    let mut v = vec![C::zero(); p];
    for i in 1..groups {
        let a: Vec<C> = (0..p).map(|j| coeffs.centers[i][j] - mu0[j]).collect();
        let b = coeffs.form_mul(i, &a);
        v.iter_mut().zip(&b).for_each(|(vj, bj)| *vj -= coeffs.weights[i] * bj / dens[i]);
    }
    // z_0 = mu0 + lambda M_0^{-1} v with c lambda^2 - N_0 lambda + 1 = 0,
    // c = v' M_0^{-1} v, makes N_0 M_0 (z_0 - mu0) / D_0 equal v
    let mut m0 = coeffs.forms[0].clone();
    let mut w = v.clone();
    lu_solve(&mut m0, p, &mut w).ok()?;
    let c: C = v.iter().zip(&w).map(|(a, b)| a * b).sum();
    let n0 = coeffs.weights[0];
    if c.norm() < 1e-8 {
        return None;
    }
    let lambda = (n0 + (n0 * n0 - c * 4.0).sqrt()) / (c * 2.0);
    coeffs.centers[0] = (0..p).map(|j| mu0[j] + lambda * w[j]).collect();
    let residual = cnorm(&coeffs.eval(&mu0));
    (residual <= 1e-10 * coeffs.magnitude(&mu0)).then_some((coeffs, mu0))
}

fn is_regular(coeffs: &Coefficients, x: &[C]) -> bool {
    let (f, jac) = coeffs.eval_with_jacobian(x);
    let scale = (1.0 + cnorm(x)).powi(2);
    cnorm(&f) <= coeffs.residual_tolerance(x)
        && condition_number(&jac, x.len()) <= SINGULAR_CONDITION
        && coeffs.denominators(x).iter().all(|d| d.norm() > 1e-6 * scale)
}

/// Finds all `expected` solutions of a generic member by monodromy: known
/// solutions are carried around random triangles in coefficient space and
/// every new endpoint is added, until the count is reached.
pub fn monodromy(p: usize, groups: usize, expected: usize, seed: u64) -> Result<StartPoint, SolveError> {
    let cfg = TrackerConfig::with_seed(seed);
    let mut rng = Rng::new(seed);
    let (base, mu0) = loop {
        if let Some(pair) = seeded_instance(p, groups, &mut rng) {
            break pair;
        }
    };
    let mut solutions = vec![mu0];
    let mut stalled = 0;
    while solutions.len() < expected && stalled < STALL_LIMIT {
        let a = Coefficients::random(p, groups, &mut rng);
        let b = Coefficients::random(p, groups, &mut rng);
        let legs = [(&base, &a), (&a, &b), (&b, &base)];
        let ends: Vec<Option<Vec<C>>> = solutions
            .par_iter()
            .map(|x0| {
                let mut x = x0.clone();
                for (from, to) in legs {
                    let r = track(&CoefficientPath { from, to, bulge: None }, to, &x, &cfg);
                    if r.status != PathStatus::Converged {
                        return None;
                    }
                    x = r.endpoint;
                }
                Some(x)
            })
            .collect();
        let before = solutions.len();
        for x in ends.into_iter().flatten() {
            if is_regular(&base, &x) && !solutions.iter().any(|s| same_point(s, &x, cfg.dedup_tol)) {
                solutions.push(x);
            }
        }
        stalled = if solutions.len() > before { 0 } else { stalled + 1 };
    }
    if solutions.len() != expected {
        return Err(SolveError::MonodromyStalled { found: solutions.len(), expected });
    }
    Ok(StartPoint { coefficients: base, solutions })
}

/// Start solutions for `groups` groups in dimension `p`, computed on first
/// use and shared afterwards.
pub fn start_point(p: usize, groups: usize) -> Result<Arc<StartPoint>, SolveError> {
    static CACHE: OnceLock<Mutex<HashMap<(usize, usize), Arc<StartPoint>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(hit) = cache.lock().expect("start cache poisoned").get(&(p, groups)) {
        return Ok(hit.clone());
    }
    let expected = ml_degree(groups.saturating_sub(1) as u32, p as u32)
        .ok()
        .and_then(|d| d.to_u64())
        .filter(|&d| d <= MAX_PATHS)
        .ok_or(SolveError::PathCountOverflow(u64::MAX))? as usize;
    let seed = derive_seed(START_SEED, (p as u64) << 32 | groups as u64);
    let start = Arc::new(monodromy(p, groups, expected, seed)?);
    cache.lock().expect("start cache poisoned").entry((p, groups)).or_insert(start.clone());
    Ok(start)
}

/// Solves `system` by carrying the cached generic solutions to its
/// coefficients. `cfg.gamma` bends the coefficient path, so different values
/// give independent runs.
pub fn solve_family(system: &LikelihoodSystem, cfg: &TrackerConfig) -> Result<SolveOutcome, SolveError> {
    let p = system.dim();
    let groups = system.group_count();
    let start = start_point(p, groups)?;
    let target = Coefficients::from_system(system);
    let bulge = Coefficients::random(p, groups, &mut Rng::new(derive_seed(BULGE_SEED, p as u64)));
    let path = CoefficientPath { from: &start.coefficients, to: &target, bulge: Some((&bulge, cfg.gamma)) };
    let paths = start.solutions.par_iter().map(|x0| track(&path, &target, x0, cfg)).collect();
    Ok(collect_endpoints(paths, cfg))
}
