//! Small dense linear algebra over `f64`.
//!
//! Everything here is sized for desk-scale problems (`p <= 16`). Matrices are
//! stored row-major in a flat `Vec<f64>`; symmetric matrices are built from
//! their lower triangle so symmetry holds bit-for-bit.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest supported dimension.
pub const MAX_DIM: usize = 16;

/// Pivots at or below this value are treated as a loss of definiteness.
const PIVOT_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("matrix is not positive definite (pivot {index} = {pivot:e})")]
    NotPositiveDefinite { index: usize, pivot: f64 },
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("dimension {0} outside supported range 1..={MAX_DIM}")]
    BadDimension(usize),
    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("matrix is singular")]
    Singular,
}

pub type Result<T> = std::result::Result<T, LinalgError>;

fn check_dim(p: usize) -> Result<()> {
    if p == 0 || p > MAX_DIM {
        Err(LinalgError::BadDimension(p))
    } else {
        Ok(())
    }
}

/// Symmetric `p x p` matrix.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct SymMatrix {
    p: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    /// Builds from a lower-triangle closure `f(i, j)` with `j <= i`.
    pub fn from_lower_fn(p: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        check_dim(p)?;
        let mut data = vec![0.0; p * p];
        for i in 0..p {
            for j in 0..=i {
                let v = f(i, j);
                if !v.is_finite() {
                    return Err(LinalgError::NonFinite { row: i, col: j });
                }
                data[i * p + j] = v;
                data[j * p + i] = v;
            }
        }
        Ok(Self { p, data })
    }

    /// Builds from full rows, reading only the lower triangle.
    pub fn from_rows_lower(rows: &[Vec<f64>]) -> Result<Self> {
        let p = rows.len();
        for r in rows {
            if r.len() != p {
                return Err(LinalgError::DimensionMismatch { expected: p, found: r.len() });
            }
        }
        Self::from_lower_fn(p, |i, j| rows[i][j])
    }

    /// Builds from full rows and checks symmetry to a relative tolerance.
    pub fn from_rows_checked(rows: &[Vec<f64>], rel_tol: f64) -> std::result::Result<Self, String> {
        let m = Self::from_rows_lower(rows).map_err(|e| e.to_string())?;
        let scale = 1.0 + m.max_abs();
        for i in 0..m.p {
            for j in 0..i {
                if (rows[i][j] - rows[j][i]).abs() > rel_tol * scale {
                    return Err(format!(
                        "matrix not symmetric at ({i}, {j}): {} vs {}",
                        rows[i][j], rows[j][i]
                    ));
                }
            }
        }
        Ok(m)
    }

    pub fn identity(p: usize) -> Self {
        Self::from_lower_fn(p, |i, j| if i == j { 1.0 } else { 0.0 })
            .expect("identity dimension in range")
    }

    pub fn diagonal(diag: &[f64]) -> Result<Self> {
        Self::from_lower_fn(diag.len(), |i, j| if i == j { diag[i] } else { 0.0 })
    }

    pub fn dim(&self) -> usize {
        self.p
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.p + j]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.p).map(<[f64]>::to_vec).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.p);
        self.data.chunks(self.p).map(|row| dot(row, v)).collect()
    }

    /// `self + v v'`.
    pub fn rank_one_update(&self, v: &[f64]) -> Self {
        Self::from_lower_fn(self.p, |i, j| self.get(i, j) + v[i] * v[j])
            .expect("finite update of finite matrix")
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self::from_lower_fn(self.p, |i, j| s * self.get(i, j)).expect("finite scaling")
    }

    pub fn add(&self, other: &Self) -> Self {
        Self::from_lower_fn(self.p, |i, j| self.get(i, j) + other.get(i, j))
            .expect("finite sum")
    }

    /// `A S A'` for a general square `A`.
    pub fn congruence(&self, a: &Matrix) -> Result<Self> {
        if a.dim() != self.p {
            return Err(LinalgError::DimensionMismatch { expected: self.p, found: a.dim() });
        }
        let p = self.p;
        // AS
        let mut as_ = vec![0.0; p * p];
        for i in 0..p {
            for j in 0..p {
                as_[i * p + j] = (0..p).map(|k| a.get(i, k) * self.get(k, j)).sum();
            }
        }
        Self::from_lower_fn(p, |i, j| (0..p).map(|k| as_[i * p + k] * a.get(j, k)).sum())
    }

    /// Explicit inverse through the Cholesky factor.
    pub fn inverse_spd(&self) -> Result<Self> {
        let chol = cholesky(self)?;
        let p = self.p;
        let mut cols = Vec::with_capacity(p);
        for j in 0..p {
            let mut e = vec![0.0; p];
            e[j] = 1.0;
            cols.push(chol.solve(&e));
        }
        // average the two triangles so rounding asymmetry does not leak in
        Self::from_lower_fn(p, |i, j| 0.5 * (cols[j][i] + cols[i][j]))
    }
}

impl TryFrom<Vec<Vec<f64>>> for SymMatrix {
    type Error = String;

    fn try_from(rows: Vec<Vec<f64>>) -> std::result::Result<Self, String> {
        Self::from_rows_checked(&rows, 1e-12)
    }
}

impl From<SymMatrix> for Vec<Vec<f64>> {
    fn from(m: SymMatrix) -> Self {
        m.rows()
    }
}

impl fmt::Debug for SymMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.data.chunks(self.p)).finish()
    }
}

/// General square matrix, row-major.
#[derive(Clone, PartialEq, Debug)]
pub struct Matrix {
    p: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let p = rows.len();
        check_dim(p)?;
        let mut data = Vec::with_capacity(p * p);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != p {
                return Err(LinalgError::DimensionMismatch { expected: p, found: r.len() });
            }
            for (j, &v) in r.iter().enumerate() {
                if !v.is_finite() {
                    return Err(LinalgError::NonFinite { row: i, col: j });
                }
            }
            data.extend_from_slice(r);
        }
        Ok(Self { p, data })
    }

    pub fn identity(p: usize) -> Self {
        let mut data = vec![0.0; p * p];
        for i in 0..p {
            data[i * p + i] = 1.0;
        }
        Self { p, data }
    }

    pub fn scaled_identity(p: usize, s: f64) -> Self {
        let mut m = Self::identity(p);
        m.data.iter_mut().for_each(|v| *v *= s);
        m
    }

    pub fn dim(&self) -> usize {
        self.p
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.p + j]
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        self.data.chunks(self.p).map(|row| dot(row, v)).collect()
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Determinant by Gaussian elimination with partial pivoting.
    pub fn det(&self) -> f64 {
        let p = self.p;
        let mut a = self.data.clone();
        let mut det = 1.0;
        for c in 0..p {
            let piv = (c..p)
                .max_by(|&x, &y| a[x * p + c].abs().total_cmp(&a[y * p + c].abs()))
                .unwrap();
            if a[piv * p + c] == 0.0 {
                return 0.0;
            }
            if piv != c {
                for j in 0..p {
                    a.swap(c * p + j, piv * p + j);
                }
                det = -det;
            }
            let d = a[c * p + c];
            det *= d;
            for r in c + 1..p {
                let f = a[r * p + c] / d;
                for j in c..p {
                    a[r * p + j] -= f * a[c * p + j];
                }
            }
        }
        det
    }

    /// Inverse by Gauss-Jordan elimination.
    pub fn inverse(&self) -> Result<Self> {
        let p = self.p;
        let mut a = self.data.clone();
        let mut inv = Self::identity(p).data;
        for c in 0..p {
            let piv = (c..p)
                .max_by(|&x, &y| a[x * p + c].abs().total_cmp(&a[y * p + c].abs()))
                .unwrap();
            if a[piv * p + c] == 0.0 {
                return Err(LinalgError::Singular);
            }
            for j in 0..p {
                a.swap(c * p + j, piv * p + j);
                inv.swap(c * p + j, piv * p + j);
            }
            let d = a[c * p + c];
            for j in 0..p {
                a[c * p + j] /= d;
                inv[c * p + j] /= d;
            }
            for r in 0..p {
                if r != c {
                    let f = a[r * p + c];
                    if f != 0.0 {
                        for j in 0..p {
                            a[r * p + j] -= f * a[c * p + j];
                            inv[r * p + j] -= f * inv[c * p + j];
                        }
                    }
                }
            }
        }
        Ok(Self { p, data: inv })
    }
}

/// Lower-triangular Cholesky factor `L` with `L L' = S`.
#[derive(Clone, PartialEq, Debug)]
pub struct LowerTriangular {
    p: usize,
    data: Vec<f64>,
}

impl LowerTriangular {
    pub fn dim(&self) -> usize {
        self.p
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.p + j]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.p).map(<[f64]>::to_vec).collect()
    }

    /// `L x`.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.p).map(|i| (0..=i).map(|j| self.get(i, j) * x[j]).sum()).collect()
    }

    /// Solves `L y = b`.
    pub fn forward(&self, b: &[f64]) -> Vec<f64> {
        let p = self.p;
        let mut y = vec![0.0; p];
        for i in 0..p {
            let s: f64 = (0..i).map(|j| self.get(i, j) * y[j]).sum();
            y[i] = (b[i] - s) / self.get(i, i);
        }
        y
    }

    /// Solves `L' x = y`.
    pub fn backward(&self, y: &[f64]) -> Vec<f64> {
        let p = self.p;
        let mut x = vec![0.0; p];
        for i in (0..p).rev() {
            let s: f64 = (i + 1..p).map(|j| self.get(j, i) * x[j]).sum();
            x[i] = (y[i] - s) / self.get(i, i);
        }
        x
    }

    /// Solves `L L' x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        self.backward(&self.forward(b))
    }

    /// `L L'`.
    pub fn reconstruct(&self) -> SymMatrix {
        SymMatrix::from_lower_fn(self.p, |i, j| (0..=j).map(|k| self.get(i, k) * self.get(j, k)).sum())
            .expect("finite factor")
    }

    /// `L^{-1}` as a general matrix.
    pub fn inverse(&self) -> Matrix {
        let p = self.p;
        let mut data = vec![0.0; p * p];
        for j in 0..p {
            let mut e = vec![0.0; p];
            e[j] = 1.0;
            let col = self.forward(&e);
            for i in 0..p {
                data[i * p + j] = col[i];
            }
        }
        Matrix { p, data }
    }

    pub fn as_matrix(&self) -> Matrix {
        Matrix { p: self.p, data: self.data.clone() }
    }
}

pub fn cholesky(s: &SymMatrix) -> Result<LowerTriangular> {
    let p = s.dim();
    let mut l = vec![0.0; p * p];
    for j in 0..p {
        let mut d = s.get(j, j);
        for k in 0..j {
            d -= l[j * p + k] * l[j * p + k];
        }
        if !(d > PIVOT_FLOOR) {
            return Err(LinalgError::NotPositiveDefinite { index: j, pivot: d });
        }
        let djj = d.sqrt();
        l[j * p + j] = djj;
        for i in j + 1..p {
            let mut v = s.get(i, j);
            for k in 0..j {
                v -= l[i * p + k] * l[j * p + k];
            }
            l[i * p + j] = v / djj;
        }
    }
    Ok(LowerTriangular { p, data: l })
}

pub fn solve_spd(s: &SymMatrix, b: &[f64]) -> Result<Vec<f64>> {
    if b.len() != s.dim() {
        return Err(LinalgError::DimensionMismatch { expected: s.dim(), found: b.len() });
    }
    Ok(cholesky(s)?.solve(b))
}

/// `v' S^{-1} v` given `S^{-1} v`.
pub fn quad_form(s_inv_v: &[f64], v: &[f64]) -> f64 {
    dot(s_inv_v, v)
}

pub fn det_spd(s: &SymMatrix) -> Result<f64> {
    let l = cholesky(s)?;
    Ok((0..l.dim()).map(|i| l.get(i, i) * l.get(i, i)).product())
}

/// `log det S`, stable for large or tiny determinants.
pub fn log_det_spd(s: &SymMatrix) -> Result<f64> {
    let l = cholesky(s)?;
    Ok((0..l.dim()).map(|i| 2.0 * l.get(i, i).ln()).sum())
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}
