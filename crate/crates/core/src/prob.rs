//! Probability vectors, row-stochastic matrices and binomial helpers.

use std::fmt;
use std::ops::Index;

use serde::Serialize;

use crate::error::{Error, Result};

/// Unit-sum tolerance enforced on every [`ProbVector`].
pub const UNIT_SUM_TOL: f64 = 1e-12;

/// A probability mass function over `0..len`. The meaning of the index (a CP
/// length, a user count, ...) is given by the producer.
#[derive(Clone, PartialEq, Serialize)]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        Self::with_tolerance(entries, UNIT_SUM_TOL)
    }

    /// Like [`ProbVector::new`] but with a caller-chosen unit-sum tolerance.
    pub fn with_tolerance(entries: Vec<f64>, tol: f64) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::NotProbVector("empty support".into()));
        }
        for (i, &p) in entries.iter().enumerate() {
            if !(0.0..=1.0 + tol).contains(&p) {
                return Err(Error::NotProbVector(format!("entry {i} = {p:e}")));
            }
        }
        let sum: f64 = entries.iter().sum();
        if (sum - 1.0).abs() > tol {
            return Err(Error::NotProbVector(format!(
                "entries sum to 1 {:+e}",
                sum - 1.0
            )));
        }
        Ok(ProbVector(entries))
    }

    /// All mass on `index`.
    pub fn point(len: usize, index: usize) -> Self {
        assert!(index < len, "point mass outside support");
        let mut v = vec![0.0; len];
        v[index] = 1.0;
        ProbVector(v)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.0.iter()
    }

    /// Mean of the variable whose value at index `i` is `i + offset`.
    pub fn mean(&self, offset: f64) -> f64 {
        self.0
            .iter()
            .enumerate()
            .map(|(i, p)| (i as f64 + offset) * p)
            .sum()
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }

    /// Index of the largest entry (first one on ties).
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.0.iter().enumerate() {
            if p > self.0[best] {
                best = i;
            }
        }
        best
    }

    /// Total-variation distance; shorter vectors are zero-padded.
    pub fn total_variation(&self, other: &ProbVector) -> f64 {
        let len = self.len().max(other.len());
        let get = |v: &[f64], i: usize| v.get(i).copied().unwrap_or(0.0);
        0.5 * (0..len)
            .map(|i| (get(&self.0, i) - get(&other.0, i)).abs())
            .sum::<f64>()
    }
}

impl Index<usize> for ProbVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl fmt::Debug for ProbVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(&self.0).finish()
    }
}

/// Scales a nonnegative vector to unit sum.
pub fn normalize(v: &[f64]) -> Result<ProbVector> {
    if v.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(Error::NotProbVector(
            "normalize expects finite nonnegative entries".into(),
        ));
    }
    let total: f64 = v.iter().sum();
    if total <= 0.0 {
        return Err(Error::ZeroVector);
    }
    ProbVector::new(v.iter().map(|x| x / total).collect())
}

/// Square matrix whose rows are probability vectors. `p(i, j)` is the
/// one-step probability of moving from state `i` to state `j`.
#[derive(Clone, Debug)]
pub struct StochasticMatrix {
    name: String,
    rows: Vec<ProbVector>,
}

impl StochasticMatrix {
    pub fn new(name: impl Into<String>, rows: Vec<ProbVector>) -> Result<Self> {
        let name = name.into();
        let dim = rows.len();
        if dim == 0 {
            return Err(Error::NotStochastic(format!("{name}: no states")));
        }
        if let Some(i) = rows.iter().position(|r| r.len() != dim) {
            return Err(Error::NotStochastic(format!(
                "{name}: row {i} has {} entries, expected {dim}",
                rows[i].len()
            )));
        }
        Ok(StochasticMatrix { name, rows })
    }

    /// Builds a matrix from dense rows, validating each as a [`ProbVector`].
    pub fn from_dense(name: impl Into<String>, rows: Vec<Vec<f64>>) -> Result<Self> {
        let name = name.into();
        let rows = rows
            .into_iter()
            .enumerate()
            .map(|(i, r)| {
                ProbVector::new(r).map_err(|e| Error::NotStochastic(format!("{name}: row {i}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(name, rows)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, i: usize) -> &ProbVector {
        &self.rows[i]
    }

    pub fn rows(&self) -> &[ProbVector] {
        &self.rows
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.rows[i][j]
    }

    /// Computes `v P` for a row vector `v`.
    pub fn left_mul(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.dim());
        let mut out = vec![0.0; self.dim()];
        for (vi, row) in v.iter().zip(&self.rows) {
            if *vi == 0.0 {
                continue;
            }
            for (o, p) in out.iter_mut().zip(row.iter()) {
                *o += vi * p;
            }
        }
        out
    }
}

/// Row `n` of Pascal's triangle, `C(n, k)` for `k = 0..=n`, by the
/// multiplicative recurrence.
pub fn binomial_row(n: usize) -> Vec<f64> {
    // Below 2^53 every partial product is an integer; snapping to it keeps
    // the row exact there.
    const EXACT_INT: f64 = 9_007_199_254_740_992.0;
    let mut row = Vec::with_capacity(n + 1);
    let mut c = 1.0f64;
    row.push(c);
    for k in 0..n {
        c = c * (n - k) as f64 / (k + 1) as f64;
        if c < EXACT_INT {
            c = c.round();
        }
        row.push(c);
    }
    row
}

/// Full Pascal triangle up to row `max_n`.
#[derive(Clone, Debug)]
pub struct Binomials {
    rows: Vec<Vec<f64>>,
}

impl Binomials {
    pub fn new(max_n: usize) -> Self {
        Binomials {
            rows: (0..=max_n).map(binomial_row).collect(),
        }
    }

    /// `C(n, k)`, zero outside `0 <= k <= n`.
    pub fn get(&self, n: usize, k: usize) -> f64 {
        if k > n {
            0.0
        } else {
            self.rows[n][k]
        }
    }

    pub fn max_n(&self) -> usize {
        self.rows.len() - 1
    }
}

/// Binomial PMF with `n` trials and success probability `p`, as raw entries.
pub fn binomial_masses(n: usize, p: f64) -> Vec<f64> {
    if p <= 0.0 {
        let mut v = vec![0.0; n + 1];
        v[0] = 1.0;
        return v;
    }
    if p >= 1.0 {
        let mut v = vec![0.0; n + 1];
        v[n] = 1.0;
        return v;
    }
    let coef = binomial_row(n);
    let q = 1.0 - p;
    coef.iter()
        .enumerate()
        .map(|(k, c)| c * p.powi(k as i32) * q.powi((n - k) as i32))
        .collect()
}

/// Binomial PMF with `n` trials and success probability `p`.
pub fn binomial_pmf(n: usize, p: f64) -> ProbVector {
    ProbVector::with_tolerance(binomial_masses(n, p), 1e-12)
        .expect("binomial masses form a distribution")
}
