//! The likelihood equations of the common-mean model.
//!
//! For groups with means `z_i`, scatters `S_i` (divisor `n_i`) and sizes
//! `n_i`, the profiled likelihood equations in `mu` are
//!
//! ```text
//! sum_i n_i S_i^{-1} (z_i - mu) / D_i(mu) = 0,   D_i(mu) = 1 + (z_i - mu)' S_i^{-1} (z_i - mu)
//! ```
//!
//! Multiplying through by every denominator gives `p` polynomials of total
//! degree `2k + 1`:
//!
//! ```text
//! F(mu) = sum_i n_i (prod_{j != i} D_j(mu)) S_i^{-1} (z_i - mu)
//! ```
//!
//! The expansion is carried out in exact rational arithmetic on the binary
//! values of the inputs and rounded once at the end.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};

use crate::linalg::{self, LinalgError, SymMatrix};
use crate::poly::{Exponents, RealPoly};
use crate::problem::{GroupStats, Problem};

/// `D(mu) = 1 + (center - mu)' inv_scatter (center - mu)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenominatorForm {
    pub center: Vec<f64>,
    pub inv_scatter: SymMatrix,
}

impl DenominatorForm {
    /// `S^{-1} (center - mu)` and `D(mu)`.
    pub fn direction_and_value(&self, mu: &[f64]) -> (Vec<f64>, f64) {
        let v = linalg::sub(&self.center, mu);
        let w = self.inv_scatter.mul_vec(&v);
        let d = 1.0 + linalg::quad_form(&w, &v);
        (w, d)
    }

    pub fn eval(&self, mu: &[f64]) -> f64 {
        self.direction_and_value(mu).1
    }

    /// Polynomial extension to complex `mu` (no conjugation).
    pub fn eval_complex(&self, mu: &[Complex64]) -> Complex64 {
        let p = self.center.len();
        let v: Vec<Complex64> = (0..p).map(|i| self.center[i] - mu[i]).collect();
        let mut acc = Complex64::new(1.0, 0.0);
        for i in 0..p {
            for j in 0..p {
                acc += v[i] * self.inv_scatter.get(i, j) * v[j];
            }
        }
        acc
    }

    /// Gradient of the complex extension, `-2 M (center - mu)`.
    pub fn gradient_complex(&self, mu: &[Complex64]) -> Vec<Complex64> {
        let p = self.center.len();
        let v: Vec<Complex64> = (0..p).map(|i| self.center[i] - mu[i]).collect();
        (0..p)
            .map(|i| (0..p).map(|j| v[j] * self.inv_scatter.get(i, j)).sum::<Complex64>() * -2.0)
            .collect()
    }
}

pub fn build_denominator(stats: &GroupStats) -> Result<DenominatorForm, LinalgError> {
    Ok(DenominatorForm { center: stats.mean.clone(), inv_scatter: stats.scatter.inverse_spd()? })
}

/// Cleared-denominator likelihood equations for one problem.
#[derive(Debug, Clone)]
pub struct LikelihoodSystem {
    p: usize,
    weights: Vec<f64>,
    polys: Vec<RealPoly>,
    denominators: Vec<DenominatorForm>,
}

impl LikelihoodSystem {
    pub fn dim(&self) -> usize {
        self.p
    }

    pub fn group_count(&self) -> usize {
        self.denominators.len()
    }

    pub fn polys(&self) -> &[RealPoly] {
        &self.polys
    }

    pub fn denominators(&self) -> &[DenominatorForm] {
        &self.denominators
    }

    /// Sample sizes as floats.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `2k + 1`.
    pub fn expected_degree(&self) -> u32 {
        2 * (self.group_count() as u32 - 1) + 1
    }

    /// Highest total degree actually present.
    pub fn degree(&self) -> u32 {
        self.polys.iter().map(RealPoly::degree).max().unwrap_or(0)
    }

    pub fn coefficient_scale(&self) -> f64 {
        self.polys.iter().map(RealPoly::max_abs_coefficient).fold(0.0, f64::max)
    }

    pub fn eval_polys(&self, mu: &[f64]) -> Vec<f64> {
        self.polys.iter().map(|f| f.eval(mu)).collect()
    }

    /// Lines of `exponents : coefficient`, one block per equation.
    pub fn dump(&self) -> String {
        self.polys
            .iter()
            .enumerate()
            .map(|(i, f)| format!("# equation {}\n{}", i + 1, f.dump()))
            .collect()
    }
}

type ExactPoly = BTreeMap<Exponents, BigRational>;

fn exact(v: f64) -> BigRational {
    BigRational::from_float(v).expect("finite input")
}

fn exact_add(acc: &mut ExactPoly, other: &ExactPoly) {
    for (e, c) in other {
        let slot = acc.entry(e.clone()).or_insert_with(BigRational::zero);
        *slot += c;
    }
}

fn exact_mul(a: &ExactPoly, b: &ExactPoly) -> ExactPoly {
    let mut out = ExactPoly::new();
    for (ea, ca) in a {
        for (eb, cb) in b {
            let e: Exponents = ea.iter().zip(eb).map(|(x, y)| x + y).collect();
            let slot = out.entry(e).or_insert_with(BigRational::zero);
            *slot += ca * cb;
        }
    }
    out
}

fn unit(p: usize, var: Option<usize>) -> Exponents {
    let mut e = vec![0; p];
    if let Some(v) = var {
        e[v] = 1;
    }
    e
}

/// `center_a - mu_a` as an exact polynomial.
fn exact_offsets(p: usize, center: &[f64]) -> Vec<ExactPoly> {
    (0..p)
        .map(|a| {
            let mut f = ExactPoly::new();
            f.insert(unit(p, None), exact(center[a]));
            f.insert(unit(p, Some(a)), -BigRational::from_integer(BigInt::from(1)));
            f
        })
        .collect()
}

fn exact_denominator(d: &DenominatorForm) -> ExactPoly {
    let p = d.center.len();
    let offsets = exact_offsets(p, &d.center);
    let mut out = ExactPoly::new();
    out.insert(unit(p, None), BigRational::from_integer(BigInt::from(1)));
    for a in 0..p {
        for b in 0..p {
            let mut term = exact_mul(&offsets[a], &offsets[b]);
            let m = exact(d.inv_scatter.get(a, b));
            term.values_mut().for_each(|c| *c *= &m);
            exact_add(&mut out, &term);
        }
    }
    out
}

fn round_poly(p: usize, f: &ExactPoly) -> RealPoly {
    RealPoly::from_terms(
        p,
        f.iter().map(|(e, c)| (e.clone(), c.to_f64().expect("coefficient representable"))),
    )
}

pub fn build_system(problem: &Problem) -> Result<LikelihoodSystem, LinalgError> {
    let p = problem.dim();
    let denominators =
        problem.groups().iter().map(build_denominator).collect::<Result<Vec<_>, _>>()?;
    let weights: Vec<f64> = problem.groups().iter().map(|g| g.n as f64).collect();
    let exact_dens: Vec<ExactPoly> = denominators.iter().map(exact_denominator).collect();

    let mut polys = vec![ExactPoly::new(); p];
    for (i, (g, d)) in problem.groups().iter().zip(&denominators).enumerate() {
        let mut others = ExactPoly::new();
        others.insert(unit(p, None), BigRational::from_integer(BigInt::from(g.n)));
        for (j, dj) in exact_dens.iter().enumerate() {
            if j != i {
                others = exact_mul(&others, dj);
            }
        }
        let offsets = exact_offsets(p, &g.mean);
        for (r, poly) in polys.iter_mut().enumerate() {
            // row r of S_i^{-1} (z_i - mu)
            let mut lin = ExactPoly::new();
            for (b, off) in offsets.iter().enumerate() {
                let m = exact(d.inv_scatter.get(r, b));
                let mut t = off.clone();
                t.values_mut().for_each(|c| *c *= &m);
                exact_add(&mut lin, &t);
            }
            exact_add(poly, &exact_mul(&others, &lin));
        }
    }
    Ok(LikelihoodSystem {
        p,
        weights,
        polys: polys.iter().map(|f| round_poly(p, f)).collect(),
        denominators,
    })
}

/// Rational-form likelihood equations `sum_i n_i S_i^{-1}(z_i - mu) / D_i(mu)`.
pub fn residual(system: &LikelihoodSystem, mu: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; system.p];
    for (d, n) in system.denominators.iter().zip(&system.weights) {
        let (w, dv) = d.direction_and_value(mu);
        for (o, wi) in out.iter_mut().zip(&w) {
            *o += n * wi / dv;
        }
    }
    out
}

/// `sum_i (n_i / 2) log D_i(mu)`; the MLE minimizes this over real critical points.
pub fn objective(system: &LikelihoodSystem, mu: &[f64]) -> f64 {
    system.denominators.iter().zip(&system.weights).map(|(d, n)| 0.5 * n * d.eval(mu).ln()).sum()
}

/// Profile log-likelihood at `mu` (up to nothing: the full constant is kept).
pub fn log_likelihood(problem: &Problem, system: &LikelihoodSystem, mu: &[f64]) -> f64 {
    let p = problem.dim() as f64;
    let total_n: f64 = system.weights.iter().sum();
    let log_dets: f64 = problem
        .groups()
        .iter()
        .map(|g| 0.5 * g.n as f64 * linalg::log_det_spd(&g.scatter).expect("validated scatter"))
        .sum();
    -0.5 * total_n * p * (2.0 * std::f64::consts::PI * std::f64::consts::E).ln()
        - log_dets
        - objective(system, mu)
}

/// `S + (z - mu)(z - mu)'`.
pub fn sigma_hat(stats: &GroupStats, mu: &[f64]) -> SymMatrix {
    stats.scatter.rank_one_update(&linalg::sub(&stats.mean, mu))
}

/// Coefficients `(c3, c2, c1, c0)` of the single cubic for one dimension and
/// two groups, expanded by hand.
pub fn univariate_cubic(problem: &Problem) -> Option<[f64; 4]> {
    if problem.dim() != 1 || problem.groups().len() != 2 {
        return None;
    }
    let g = problem.groups();
    let (n1, n2) = (g[0].n as f64, g[1].n as f64);
    let (x, y) = (g[0].mean[0], g[1].mean[0]);
    let (a, b) = (1.0 / g[0].scatter.get(0, 0), 1.0 / g[1].scatter.get(0, 0));
    let ab = a * b;
    Some([
        -ab * (n1 + n2),
        ab * (n1 * (x + 2.0 * y) + n2 * (y + 2.0 * x)),
        -n1 * a - n2 * b - ab * (n1 * (2.0 * x * y + y * y) + n2 * (2.0 * x * y + x * x)),
        n1 * a * x + n2 * b * y + ab * (n1 * x * y * y + n2 * x * x * y),
    ])
}

/// All three roots of `c3 x^3 + c2 x^2 + c1 x + c0` by Cardano's formula,
/// polished with a few Newton steps.
pub fn cubic_roots(c: [f64; 4]) -> [Complex64; 3] {
    let [c3, c2, c1, c0] = c;
    let (a, b, cc) = (c2 / c3, c1 / c3, c0 / c3);
    // depressed cubic t^3 + p t + q with x = t - a/3
    let p = b - a * a / 3.0;
    let q = 2.0 * a * a * a / 27.0 - a * b / 3.0 + cc;
    let disc = Complex64::new(q * q / 4.0 + p * p * p / 27.0, 0.0).sqrt();
    let mut u3 = Complex64::new(-q / 2.0, 0.0) + disc;
    if u3.norm() < 1e-300 {
        u3 = Complex64::new(-q / 2.0, 0.0) - disc;
    }
    let u = u3.cbrt();
    let omega = Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI / 3.0);
    let shift = Complex64::new(a / 3.0, 0.0);
    let mut roots = [Complex64::zero(); 3];
    for (k, r) in roots.iter_mut().enumerate() {
        let uk = u * omega.powu(k as u32);
        let t = if uk.norm() < 1e-300 { Complex64::zero() } else { uk - p / (3.0 * uk) };
        *r = t - shift;
    }
    let f = |x: Complex64| ((x + a) * x + b) * x + cc;
    let df = |x: Complex64| (3.0 * x + 2.0 * a) * x + b;
    for r in roots.iter_mut() {
        for _ in 0..4 {
            let d = df(*r);
            if d.norm() == 0.0 {
                break;
            }
            let step = f(*r) / d;
            if !step.is_finite() {
                break;
            }
            *r -= step;
        }
    }
    roots
}
