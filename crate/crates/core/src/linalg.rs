//! Small dense linear algebra for growing Gram matrices: a symmetric matrix
//! that gains one row/column at a time and an incremental upper-triangular
//! Cholesky factor with a jitter fallback.

use log::warn;

use crate::error::{GfdError, Result};

/// Jitter starts at this fraction of the largest diagonal entry.
pub const JITTER_START: f64 = 1e-10;
/// Maximum number of jitter doublings before giving up.
pub const JITTER_DOUBLINGS: usize = 20;

/// Symmetric matrix stored as full rows so that `(i, j)` and `(j, i)` are the
/// same stored value.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SymMatrix {
    rows: Vec<Vec<f64>>,
}

impl SymMatrix {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds from a dense matrix, rejecting non-square or asymmetric input.
    pub fn from_dense(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(GfdError::ContractViolation(format!(
                    "row {i} has length {} in a {n}x{n} matrix",
                    row.len()
                )));
            }
            for j in 0..i {
                if row[j] != rows[j][i] {
                    return Err(GfdError::ContractViolation(format!(
                        "matrix is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(Self { rows })
    }

    pub fn identity(n: usize) -> Self {
        let rows = (0..n)
            .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        Self { rows }
    }

    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.rows[i][j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i]
    }

    /// Appends a row/column. `entries[j]` is the new entry `(n, j)` for
    /// `j < n`, and `entries[n]` is the new diagonal.
    pub fn push(&mut self, entries: &[f64]) -> Result<()> {
        let n = self.dim();
        if entries.len() != n + 1 {
            return Err(GfdError::ContractViolation(format!(
                "expected {} entries to grow a {n}x{n} matrix, got {}",
                n + 1,
                entries.len()
            )));
        }
        for (row, &e) in self.rows.iter_mut().zip(entries) {
            row.push(e);
        }
        self.rows.push(entries.to_vec());
        Ok(())
    }

    pub fn max_diag(&self, k: usize) -> f64 {
        (0..k).map(|i| self.rows[i][i]).fold(0.0, f64::max)
    }

    /// Quadratic form `x^T G y` over the leading `max(len)` block; missing
    /// entries of the shorter vector are zero.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        let mut total = 0.0;
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            let row = &self.rows[i];
            let s: f64 = y.iter().zip(row).map(|(a, b)| a * b).sum();
            total += xi * s;
        }
        total
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        self.rows.clone()
    }

    /// Truncates to the leading `k x k` block.
    pub fn truncate(&mut self, k: usize) {
        self.rows.truncate(k);
        for row in &mut self.rows {
            row.truncate(k);
        }
    }
}

/// Upper-triangular `R` with `R^T R = G + jitter * I`, stored by columns.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CholeskyFactor {
    /// `cols[j][i] = R[i][j]` for `i <= j`.
    cols: Vec<Vec<f64>>,
    jitter: f64,
}

impl CholeskyFactor {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn dim(&self) -> usize {
        self.cols.len()
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// `R[i][j]`, zero below the diagonal.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i > j {
            0.0
        } else {
            self.cols[j][i]
        }
    }

    pub fn diag(&self, i: usize) -> f64 {
        self.cols[i][i]
    }

    /// Factors `gram` from scratch up to `k`.
    pub fn factor(gram: &SymMatrix, k: usize) -> Result<Self> {
        let mut f = Self::new();
        f.extend(gram, k)?;
        Ok(f)
    }

    /// Extends the factor to size `k`, reusing existing columns. When a
    /// pivot is numerically non-positive, the jitter is raised and the
    /// whole factor is recomputed.
    pub fn extend(&mut self, gram: &SymMatrix, k: usize) -> Result<()> {
        if k > gram.dim() {
            return Err(GfdError::State(format!(
                "gram assembled to {} but factor of size {k} requested; assemble the gram first",
                gram.dim()
            )));
        }
        if k <= self.dim() {
            return Ok(());
        }
        let max_diag = gram.max_diag(k);
        let mut doublings = 0;
        loop {
            match self.try_extend(gram, k, max_diag) {
                Ok(()) => return Ok(()),
                Err(index) => {
                    if doublings == JITTER_DOUBLINGS {
                        return Err(GfdError::NumericalRank { index, jitter: self.jitter });
                    }
                    let start = JITTER_START * max_diag;
                    let next = if self.jitter < start { start } else { self.jitter * 2.0 };
                    if self.jitter >= start {
                        doublings += 1;
                    }
                    warn!(
                        "non-positive pivot at index {index}; raising jitter from {:e} to {:e}",
                        self.jitter, next
                    );
                    self.jitter = next;
                    self.cols.clear();
                }
            }
        }
    }

    fn try_extend(&mut self, gram: &SymMatrix, k: usize, max_diag: f64) -> std::result::Result<(), usize> {
        for j in self.dim()..k {
            let g = gram.row(j);
            let mut col = Vec::with_capacity(j + 1);
            for i in 0..j {
                let ci = &self.cols[i];
                let dot: f64 = ci[..i].iter().zip(&col).map(|(a, b)| a * b).sum();
                col.push((g[i] - dot) / ci[i]);
            }
            let sq: f64 = col.iter().map(|c| c * c).sum();
            let pivot = g[j] + self.jitter - sq;
            let floor = (j + 1) as f64 * f64::EPSILON * max_diag;
            if !pivot.is_finite() || pivot <= floor {
                self.cols.truncate(j);
                return Err(j);
            }
            col.push(pivot.sqrt());
            self.cols.push(col);
        }
        Ok(())
    }

    /// Solves `R_k w = b` by back-substitution, `k = b.len()`.
    pub fn solve_upper(&self, b: &[f64]) -> Result<Vec<f64>> {
        let k = b.len();
        self.check_len(k)?;
        let mut w = b.to_vec();
        for j in (0..k).rev() {
            let col = &self.cols[j];
            w[j] /= col[j];
            let wj = w[j];
            for (wi, r) in w[..j].iter_mut().zip(&col[..j]) {
                *wi -= r * wj;
            }
        }
        Ok(w)
    }

    /// Solves `R_k^T y = b` by forward substitution.
    pub fn solve_lower(&self, b: &[f64]) -> Result<Vec<f64>> {
        let k = b.len();
        self.check_len(k)?;
        let mut y = Vec::with_capacity(k);
        for j in 0..k {
            let col = &self.cols[j];
            let dot: f64 = col[..j].iter().zip(&y).map(|(a, b)| a * b).sum();
            y.push((b[j] - dot) / col[j]);
        }
        Ok(y)
    }

    /// `R_k a`, `k = a.len()`.
    pub fn mul_upper(&self, a: &[f64]) -> Result<Vec<f64>> {
        let k = a.len();
        self.check_len(k)?;
        let mut out = vec![0.0; k];
        for (j, &aj) in a.iter().enumerate() {
            for (o, r) in out.iter_mut().zip(&self.cols[j]) {
                *o += r * aj;
            }
        }
        Ok(out)
    }

    /// Solves `(R^T R) x = b`.
    pub fn solve_normal(&self, b: &[f64]) -> Result<Vec<f64>> {
        let y = self.solve_lower(b)?;
        self.solve_upper(&y)
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let k = self.dim();
        (0..k).map(|i| (0..k).map(|j| self.get(i, j)).collect()).collect()
    }

    fn check_len(&self, k: usize) -> Result<()> {
        if k > self.dim() {
            return Err(GfdError::State(format!(
                "factor has size {} but size {k} was requested; extend the factor first",
                self.dim()
            )));
        }
        Ok(())
    }
}

/// Largest elementwise deviation of `R^T R` from `G + jitter * I`.
pub fn reconstruction_error(gram: &SymMatrix, chol: &CholeskyFactor) -> f64 {
    let k = chol.dim();
    let mut worst: f64 = 0.0;
    for i in 0..k {
        for j in 0..k {
            let m = i.min(j);
            let rtr: f64 = (0..=m).map(|l| chol.get(l, i) * chol.get(l, j)).sum();
            let target = gram.get(i, j) + if i == j { chol.jitter() } else { 0.0 };
            worst = worst.max((rtr - target).abs());
        }
    }
    worst
}
