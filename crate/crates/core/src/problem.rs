//! Estimation instances: raw samples, per-group summary statistics and the
//! (k+1)-population problem built from them.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{self, cholesky, LinalgError, Matrix, SymMatrix};

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("group {group}: dimension mismatch (expected {expected}, got {found})")]
    DimensionMismatch { group: usize, expected: usize, found: usize },
    #[error("group {group}: scatter matrix is not positive definite")]
    NotPositiveDefinite { group: usize },
    #[error("group {group}: sample size {n} must exceed the dimension {p}")]
    SampleSizeTooSmall { group: usize, n: usize, p: usize },
    #[error("group {group}: degenerate scatter matrix")]
    DegenerateScatter { group: usize },
    #[error("need at least two groups, got {0}")]
    TooFewGroups(usize),
    #[error("group {group}: non-finite value in data")]
    NonFinite { group: usize },
    #[error("transform matrix is singular")]
    SingularTransform,
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("malformed input: {0}")]
    Parse(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

pub type Result<T> = std::result::Result<T, ProblemError>;

/// Raw observations for one population.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupData {
    /// 1-based group index.
    pub label: usize,
    pub observations: Vec<Vec<f64>>,
}

/// Sample size, mean and scatter (divisor `n`) of one group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub n: usize,
    pub mean: Vec<f64>,
    pub scatter: SymMatrix,
}

impl GroupStats {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// A common-mean estimation instance over `k + 1` populations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ProblemRepr", into = "ProblemRepr")]
pub struct Problem {
    p: usize,
    groups: Vec<GroupStats>,
}

#[derive(Serialize, Deserialize)]
struct ProblemRepr {
    p: usize,
    groups: Vec<GroupStats>,
}

impl TryFrom<ProblemRepr> for Problem {
    type Error = ProblemError;

    fn try_from(r: ProblemRepr) -> Result<Self> {
        Problem::new(r.p, r.groups)
    }
}

impl From<Problem> for ProblemRepr {
    fn from(p: Problem) -> Self {
        ProblemRepr { p: p.p, groups: p.groups }
    }
}

impl Problem {
    /// Builds and validates.
    pub fn new(p: usize, groups: Vec<GroupStats>) -> Result<Self> {
        let problem = Self { p, groups };
        validate(&problem)?;
        Ok(problem)
    }

    /// Builds without the sample-size check. Dimensions and positive
    /// definiteness are still required since every downstream formula
    /// inverts the scatter matrices.
    pub fn new_unchecked(p: usize, groups: Vec<GroupStats>) -> Result<Self> {
        let problem = Self { p, groups };
        problem.check_shapes()?;
        Ok(problem)
    }

    pub fn dim(&self) -> usize {
        self.p
    }

    pub fn groups(&self) -> &[GroupStats] {
        &self.groups
    }

    /// `k` in the (k+1)-population model.
    pub fn k(&self) -> usize {
        self.groups.len() - 1
    }

    fn check_shapes(&self) -> Result<()> {
        if self.groups.len() < 2 {
            return Err(ProblemError::TooFewGroups(self.groups.len()));
        }
        for (i, g) in self.groups.iter().enumerate() {
            let group = i + 1;
            for found in [g.mean.len(), g.scatter.dim()] {
                if found != self.p {
                    return Err(ProblemError::DimensionMismatch { group, expected: self.p, found });
                }
            }
            if g.mean.iter().any(|v| !v.is_finite()) {
                return Err(ProblemError::NonFinite { group });
            }
            cholesky(&g.scatter).map_err(|_| ProblemError::NotPositiveDefinite { group })?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("problem serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| ProblemError::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ProblemError::Io { path: path.display().to_string(), source })?;
        Self::from_json(&text)
    }
}

pub fn validate(problem: &Problem) -> Result<()> {
    problem.check_shapes()?;
    for (i, g) in problem.groups.iter().enumerate() {
        if g.n <= problem.p {
            return Err(ProblemError::SampleSizeTooSmall { group: i + 1, n: g.n, p: problem.p });
        }
    }
    Ok(())
}

/// Sample mean and scatter `n^{-1} sum (x - xbar)(x - xbar)'`.
pub fn summarize(data: &GroupData) -> Result<GroupStats> {
    let group = data.label;
    let n = data.observations.len();
    let p = data.observations.first().map_or(0, Vec::len);
    if p == 0 {
        return Err(ProblemError::Parse(format!("group {group} has no observations")));
    }
    if n <= p {
        return Err(ProblemError::SampleSizeTooSmall { group, n, p });
    }
    for x in &data.observations {
        if x.len() != p {
            return Err(ProblemError::DimensionMismatch { group, expected: p, found: x.len() });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(ProblemError::NonFinite { group });
        }
    }
    let nf = n as f64;
    let mean: Vec<f64> =
        (0..p).map(|j| data.observations.iter().map(|x| x[j]).sum::<f64>() / nf).collect();
    let centered: Vec<Vec<f64>> = data.observations.iter().map(|x| linalg::sub(x, &mean)).collect();
    let scatter = SymMatrix::from_lower_fn(p, |i, j| {
        centered.iter().map(|c| c[i] * c[j]).sum::<f64>() / nf
    })?;
    if cholesky(&scatter).is_err() {
        return Err(ProblemError::DegenerateScatter { group });
    }
    Ok(GroupStats { n, mean, scatter })
}

/// Produces `n + 1` zero-mean observations whose unnormalized scatter
/// `sum x x'` equals `s`.
///
/// Uses the explicit solution for a diagonal target with unit eigenvalues
/// (first `p` rows nonzero, the last row minus the sum of the others) and maps
/// it through the Cholesky factor of `s`.
pub fn construct_data_with_scatter(s: &SymMatrix, n: usize) -> Result<GroupData> {
    let p = s.dim();
    if n < p {
        return Err(ProblemError::SampleSizeTooSmall { group: 1, n: n + 1, p });
    }
    let l = cholesky(s)?;
    let mut rows = vec![vec![0.0; p]; n + 1];
    rows[0][0] = 0.5f64.sqrt();
    for k in 2..=p {
        let a = (1.0 / (k * (k + 1)) as f64).sqrt();
        for row in rows.iter_mut().take(k - 1) {
            row[k - 1] = a;
        }
        rows[k - 1][k - 1] = -(k as f64) * a;
    }
    let last: Vec<f64> = (0..p).map(|j| -rows[..n].iter().map(|r| r[j]).sum::<f64>()).collect();
    rows[n] = last;
    let observations = rows.iter().map(|r| l.mul_vec(r)).collect();
    Ok(GroupData { label: 1, observations })
}

/// Maps every mean to `A m + b` and every scatter to `A S A'`.
pub fn affine_transform(problem: &Problem, a: &Matrix, b: &[f64]) -> Result<Problem> {
    let p = problem.p;
    if a.dim() != p || b.len() != p {
        return Err(ProblemError::DimensionMismatch { group: 0, expected: p, found: a.dim() });
    }
    if a.det().abs() < 1e-12 * a.max_abs().powi(p as i32) || a.max_abs() == 0.0 {
        return Err(ProblemError::SingularTransform);
    }
    let groups = problem
        .groups
        .iter()
        .map(|g| {
            let mean = a.mul_vec(&g.mean).iter().zip(b).map(|(x, y)| x + y).collect();
            Ok(GroupStats { n: g.n, mean, scatter: g.scatter.congruence(a)? })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Problem { p, groups })
}

/// Reads raw observations from CSV with header `group,x1,...,xp`.
pub fn read_raw_csv<R: Read>(reader: R) -> Result<Vec<GroupData>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| ProblemError::Parse(e.to_string()))?.clone();
    if headers.get(0) != Some("group") || headers.len() < 2 {
        return Err(ProblemError::Parse("header must be `group,x1,...,xp`".into()));
    }
    let p = headers.len() - 1;
    let mut by_group: BTreeMap<usize, Vec<Vec<f64>>> = BTreeMap::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| ProblemError::Parse(e.to_string()))?;
        let bad = |what: &str| ProblemError::Parse(format!("row {}: {what}", line + 2));
        let label: usize = rec.get(0).and_then(|g| g.parse().ok()).ok_or_else(|| bad("bad group"))?;
        if label == 0 {
            return Err(bad("groups are 1-based"));
        }
        let x = (1..=p)
            .map(|j| rec.get(j).and_then(|v| v.parse::<f64>().ok()).ok_or_else(|| bad("bad value")))
            .collect::<Result<Vec<_>>>()?;
        by_group.entry(label).or_default().push(x);
    }
    let expected: Vec<usize> = (1..=by_group.len()).collect();
    if by_group.keys().copied().collect::<Vec<_>>() != expected {
        return Err(ProblemError::Parse("group labels must be 1..=k+1 without gaps".into()));
    }
    Ok(by_group.into_iter().map(|(label, observations)| GroupData { label, observations }).collect())
}

/// Summarizes raw groups into a validated problem.
pub fn problem_from_data(data: &[GroupData]) -> Result<Problem> {
    let groups = data.iter().map(summarize).collect::<Result<Vec<_>>>()?;
    let p = groups.first().map_or(0, GroupStats::dim);
    Problem::new(p, groups)
}
