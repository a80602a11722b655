//! Maximum likelihood degree `d(k, p)` of the (k+1)-population common-mean
//! model, computed three independent ways.

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};
use thiserror::Error;

/// Largest `k` or `p` accepted.
pub const MAX_ARG: u32 = 64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MlDegreeError {
    #[error("argument {0} exceeds {MAX_ARG}")]
    OutOfRange(u32),
    #[error("k! does not divide the {k}-th derivative value {value}")]
    InexactDivision { k: u32, value: BigInt },
}

fn check(k: u32, p: u32) -> Result<(), MlDegreeError> {
    match [k, p].into_iter().find(|&v| v > MAX_ARG) {
        Some(v) => Err(MlDegreeError::OutOfRange(v)),
        None => Ok(()),
    }
}

/// Integer polynomial, index = degree, trailing zeros trimmed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntPoly {
    coefficients: Vec<BigInt>,
}

impl IntPoly {
    pub fn new(mut coefficients: Vec<BigInt>) -> Self {
        while coefficients.last().is_some_and(Zero::is_zero) {
            coefficients.pop();
        }
        Self { coefficients }
    }

    pub fn coefficients(&self) -> &[BigInt] {
        &self.coefficients
    }

    pub fn mul(&self, other: &Self) -> Self {
        if self.coefficients.is_empty() || other.coefficients.is_empty() {
            return Self::new(Vec::new());
        }
        let mut out = vec![BigInt::zero(); self.coefficients.len() + other.coefficients.len() - 1];
        for (i, a) in self.coefficients.iter().enumerate() {
            for (j, b) in other.coefficients.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Self::new(out)
    }

    pub fn derivative(&self) -> Self {
        Self::new(
            self.coefficients
                .iter()
                .enumerate()
                .skip(1)
                .map(|(i, c)| c * BigInt::from(i))
                .collect(),
        )
    }

    /// Horner evaluation.
    pub fn eval(&self, t: &BigInt) -> BigInt {
        self.coefficients.iter().rev().fold(BigInt::zero(), |acc, c| acc * t + c)
    }
}

pub fn binomial(n: u32, r: u32) -> BigInt {
    if r > n {
        return BigInt::zero();
    }
    let r = r.min(n - r);
    (0..r).fold(BigInt::one(), |acc, i| acc * BigInt::from(n - i) / BigInt::from(i + 1))
}

/// Coefficient of `z^p` in `(1 - z)^p / (1 - 2z)^(k+1)`, by truncated series
/// convolution.
pub fn ml_degree_series(k: u32, p: u32) -> Result<BigInt, MlDegreeError> {
    check(k, p)?;
    let len = p as usize + 1;
    // (1 - z)^p
    let numer: Vec<BigInt> = (0..=p)
        .map(|i| if i % 2 == 0 { binomial(p, i) } else { -binomial(p, i) })
        .collect();
    // 1 / (1 - 2z) = sum 2^j z^j, raised to k + 1 by repeated convolution
    let geometric: Vec<BigInt> = (0..len).map(|j| BigInt::one() << j).collect();
    let mut series = vec![BigInt::zero(); len];
    series[0] = BigInt::one();
    for _ in 0..=k {
        let mut next = vec![BigInt::zero(); len];
        for (i, a) in series.iter().enumerate() {
            for (j, b) in geometric.iter().take(len - i).enumerate() {
                next[i + j] += a * b;
            }
        }
        series = next;
    }
    Ok((0..len).map(|i| &numer[i] * &series[len - 1 - i]).sum())
}

/// `sum_{i+j=p} (-1)^i 2^j C(p,i) C(j+k,k)`.
pub fn ml_degree_sum(k: u32, p: u32) -> Result<BigInt, MlDegreeError> {
    check(k, p)?;
    Ok((0..=p)
        .map(|i| {
            let j = p - i;
            let term = (BigInt::one() << j) * binomial(p, i) * binomial(j + k, k);
            if i % 2 == 0 {
                term
            } else {
                -term
            }
        })
        .sum())
}

/// `(1/k!) (d/dt)^k [t^k (t - 1)^p]` at `t = 2`.
pub fn ml_degree_rodrigues(k: u32, p: u32) -> Result<BigInt, MlDegreeError> {
    check(k, p)?;
    let mut t_pow = vec![BigInt::zero(); k as usize + 1];
    t_pow[k as usize] = BigInt::one();
    let mut poly = IntPoly::new(t_pow);
    let t_minus_one = IntPoly::new(vec![-BigInt::one(), BigInt::one()]);
    for _ in 0..p {
        poly = poly.mul(&t_minus_one);
    }
    for _ in 0..k {
        poly = poly.derivative();
    }
    let value = poly.eval(&BigInt::from(2));
    let fact: BigInt = (1..=k).map(BigInt::from).product();
    let (q, r) = value.div_rem(&fact);
    if !r.is_zero() {
        return Err(MlDegreeError::InexactDivision { k, value });
    }
    Ok(q)
}

/// All three values; they must agree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlDegreeBreakdown {
    pub series: BigInt,
    pub sum: BigInt,
    pub rodrigues: BigInt,
}

impl MlDegreeBreakdown {
    pub fn agree(&self) -> bool {
        self.series == self.sum && self.sum == self.rodrigues
    }
}

pub fn ml_degree_breakdown(k: u32, p: u32) -> Result<MlDegreeBreakdown, MlDegreeError> {
    Ok(MlDegreeBreakdown {
        series: ml_degree_series(k, p)?,
        sum: ml_degree_sum(k, p)?,
        rodrigues: ml_degree_rodrigues(k, p)?,
    })
}

/// `d(k, p)` via the alternating sum.
pub fn ml_degree(k: u32, p: u32) -> Result<BigInt, MlDegreeError> {
    ml_degree_sum(k, p)
}

pub fn is_odd(v: &BigInt) -> bool {
    v.abs().is_odd()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(v: i64) -> BigInt {
        BigInt::from(v)
    }

    #[test]
    fn small_values() {
        assert_eq!(ml_degree_series(1, 2).unwrap(), b(5));
        assert_eq!(ml_degree_series(1, 1).unwrap(), b(3));
        assert_eq!(ml_degree_rodrigues(1, 2).unwrap(), b(5));
        for p in 0..=10 {
            assert_eq!(ml_degree_series(0, p).unwrap(), b(1));
            assert_eq!(ml_degree_rodrigues(0, p).unwrap(), b(1));
        }
        assert_eq!(ml_degree_rodrigues(3, 3).unwrap(), ml_degree_sum(3, 3).unwrap());
    }

    #[test]
    fn closed_forms() {
        for p in 0..=20i64 {
            assert_eq!(ml_degree_sum(1, p as u32).unwrap(), b(2 * p + 1));
            assert_eq!(ml_degree_sum(2, p as u32).unwrap(), b(2 * p * (p + 1) + 1));
        }
        for k in 0..=20i64 {
            assert_eq!(ml_degree_sum(k as u32, 1).unwrap(), b(2 * k + 1));
        }
    }

    #[test]
    fn three_way_agreement() {
        for k in 0..=30 {
            for p in 0..=30 {
                let br = ml_degree_breakdown(k, p).unwrap();
                assert!(br.agree(), "k={k} p={p}: {br:?}");
                assert!(is_odd(&br.sum));
            }
        }
    }

    #[test]
    fn large_arguments_do_not_overflow() {
        let v = ml_degree_breakdown(64, 64).unwrap();
        assert!(v.agree());
        assert!(v.sum.bits() > 64);
        assert_eq!(ml_degree_sum(65, 1).unwrap_err(), MlDegreeError::OutOfRange(65));
    }

    #[test]
    fn int_poly_ops() {
        let p = IntPoly::new(vec![b(1), b(2), b(0)]);
        assert_eq!(p.coefficients().len(), 2);
        assert_eq!(p.derivative(), IntPoly::new(vec![b(2)]));
        assert_eq!(p.mul(&p).eval(&b(3)), b(49));
        assert_eq!(binomial(10, 3), b(120));
        assert_eq!(binomial(3, 5), b(0));
    }
}
