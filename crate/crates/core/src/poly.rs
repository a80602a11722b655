//! Sparse multivariate polynomials with dense exponent tuples.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt::Write as _;

use num_complex::Complex64;
use num_traits::{One, Zero};

/// Exponent tuple of a monomial.
pub type Exponents = Vec<u32>;

/// Graded lexicographic order, largest monomial first.
pub fn grlex_desc(a: &[u32], b: &[u32]) -> Ordering {
    let da: u32 = a.iter().sum();
    let db: u32 = b.iter().sum();
    db.cmp(&da).then_with(|| b.cmp(a))
}

/// Polynomial in `nvars` variables. Terms are kept in graded-lex order with no
/// zero coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial<T> {
    nvars: usize,
    terms: Vec<(Exponents, T)>,
}

pub type RealPoly = Polynomial<f64>;
pub type CPoly = Polynomial<Complex64>;

impl<T> Polynomial<T>
where
    T: Copy + Zero + One + PartialEq + std::ops::AddAssign + std::ops::Mul<Output = T>,
{
    pub fn from_terms(nvars: usize, terms: impl IntoIterator<Item = (Exponents, T)>) -> Self {
        let mut map: BTreeMap<Exponents, T> = BTreeMap::new();
        for (e, c) in terms {
            assert_eq!(e.len(), nvars, "exponent tuple length");
            *map.entry(e).or_insert_with(T::zero) += c;
        }
        let mut terms: Vec<_> = map.into_iter().filter(|(_, c)| !c.is_zero()).collect();
        terms.sort_by(|a, b| grlex_desc(&a.0, &b.0));
        Self { nvars, terms }
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn terms(&self) -> &[(Exponents, T)] {
        &self.terms
    }

    pub fn degree(&self) -> u32 {
        self.terms.iter().map(|(e, _)| e.iter().sum()).max().unwrap_or(0)
    }

    pub fn coefficient(&self, exps: &[u32]) -> T {
        self.terms.iter().find(|(e, _)| e == exps).map_or_else(T::zero, |(_, c)| *c)
    }

    pub fn map_coefficients<U>(&self, f: impl Fn(T) -> U) -> Polynomial<U>
    where
        U: Copy + Zero + One + PartialEq + std::ops::AddAssign + std::ops::Mul<Output = U>,
    {
        Polynomial::from_terms(self.nvars, self.terms.iter().map(|(e, c)| (e.clone(), f(*c))))
    }

    pub fn eval(&self, x: &[T]) -> T {
        let powers = power_table(x, self.degree());
        self.terms.iter().fold(T::zero(), |mut acc, (e, c)| {
            acc += monomial(&powers, e, *c);
            acc
        })
    }
}

impl RealPoly {
    pub fn max_abs_coefficient(&self) -> f64 {
        self.terms.iter().fold(0.0, |m, (_, c)| m.max(c.abs()))
    }

    pub fn to_complex(&self) -> CPoly {
        self.map_coefficients(|c| Complex64::new(c, 0.0))
    }

    /// `exponents : coefficient` per line, graded-lex order.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for (e, c) in &self.terms {
            let exps: Vec<String> = e.iter().map(u32::to_string).collect();
            writeln!(out, "{} : {:.16e}", exps.join(" "), c).unwrap();
        }
        out
    }
}

impl CPoly {
    pub fn max_abs_coefficient(&self) -> f64 {
        self.terms.iter().fold(0.0, |m, (_, c)| m.max(c.norm()))
    }

    pub fn scaled(&self, s: Complex64) -> Self {
        self.map_coefficients(|c| c * s)
    }
}

fn power_table<T: Copy + One + std::ops::Mul<Output = T>>(x: &[T], degree: u32) -> Vec<Vec<T>> {
    x.iter()
        .map(|&xi| {
            let mut row = Vec::with_capacity(degree as usize + 1);
            let mut acc = T::one();
            row.push(acc);
            for _ in 0..degree {
                acc = acc * xi;
                row.push(acc);
            }
            row
        })
        .collect()
}

#[inline]
fn monomial<T: Copy + std::ops::Mul<Output = T>>(powers: &[Vec<T>], e: &[u32], c: T) -> T {
    e.iter().enumerate().fold(c, |acc, (v, &k)| acc * powers[v][k as usize])
}

/// A square system of complex polynomials with a cached evaluation plan for
/// values and Jacobians.
#[derive(Debug, Clone)]
pub struct PolySystem {
    nvars: usize,
    polys: Vec<CPoly>,
    max_degree: u32,
    /// Per polynomial, per variable: terms of the partial derivative.
    partials: Vec<Vec<Vec<(Exponents, Complex64)>>>,
}

impl PolySystem {
    pub fn new(polys: Vec<CPoly>) -> Self {
        let nvars = polys.first().map_or(0, Polynomial::nvars);
        assert!(polys.iter().all(|f| f.nvars() == nvars), "mixed variable counts");
        let max_degree = polys.iter().map(Polynomial::degree).max().unwrap_or(0);
        let partials = polys
            .iter()
            .map(|f| {
                (0..nvars)
                    .map(|v| {
                        f.terms()
                            .iter()
                            .filter(|(e, _)| e[v] > 0)
                            .map(|(e, c)| {
                                let mut d = e.clone();
                                d[v] -= 1;
                                (d, *c * e[v] as f64)
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        Self { nvars, polys, max_degree, partials }
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn len(&self) -> usize {
        self.polys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.polys.is_empty()
    }

    pub fn polys(&self) -> &[CPoly] {
        &self.polys
    }

    pub fn degrees(&self) -> Vec<u32> {
        self.polys.iter().map(Polynomial::degree).collect()
    }

    pub fn is_square(&self) -> bool {
        self.polys.len() == self.nvars
    }

    pub fn eval(&self, x: &[Complex64]) -> Vec<Complex64> {
        let powers = power_table(x, self.max_degree);
        self.polys
            .iter()
            .map(|f| f.terms().iter().map(|(e, c)| monomial(&powers, e, *c)).sum())
            .collect()
    }

    /// Values and the row-major Jacobian.
    pub fn eval_with_jacobian(&self, x: &[Complex64]) -> (Vec<Complex64>, Vec<Complex64>) {
        let powers = power_table(x, self.max_degree);
        let n = self.nvars;
        let values = self
            .polys
            .iter()
            .map(|f| f.terms().iter().map(|(e, c)| monomial(&powers, e, *c)).sum())
            .collect();
        let mut jac = vec![Complex64::zero(); self.polys.len() * n];
        for (i, rows) in self.partials.iter().enumerate() {
            for (v, terms) in rows.iter().enumerate() {
                jac[i * n + v] = terms.iter().map(|(e, c)| monomial(&powers, e, *c)).sum();
            }
        }
        (values, jac)
    }
}
