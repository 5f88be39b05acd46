//! Hilbert-space elements as finite coefficient expansions over a pre-basis.

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{GfdError, Result};
use crate::linalg::CholeskyFactor;
use crate::prebasis::PreBasis;
use crate::quadrature::{pairwise_sum, Quadrature};

/// Identity of a pre-basis, used to reject arithmetic across bases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BasisId(u64);

impl BasisId {
    pub fn fresh() -> Self {
        static NEXT: AtomicU64 = AtomicU64::new(1);
        Self(NEXT.fetch_add(1, Ordering::Relaxed))
    }
}

impl fmt::Display for BasisId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "basis#{}", self.0)
    }
}

/// A pre-basis whose Gram matrix has a Cholesky factor `R` available, which
/// is all the direction sampler needs.
pub trait FactoredBasis {
    fn basis_id(&self) -> BasisId;

    /// Grows the Gram matrix and its factor to at least `k`.
    fn ensure(&mut self, k: usize) -> Result<()>;

    /// Current size of the factor.
    fn factored_len(&self) -> usize;

    /// Solves `R_k w = rhs` with `k = rhs.len()`.
    fn solve_upper(&self, rhs: &[f64]) -> Result<Vec<f64>>;

    /// Maps pre-basis coefficients `a` to orthonormal coordinates `R_k a`.
    fn mul_upper(&self, a: &[f64]) -> Result<Vec<f64>>;
}

/// A synthetic basis given only by its Gram matrix.
#[derive(Debug, Clone)]
pub struct GramBasis {
    id: BasisId,
    gram: crate::linalg::SymMatrix,
    chol: CholeskyFactor,
}

impl GramBasis {
    pub fn new(gram: crate::linalg::SymMatrix) -> Result<Self> {
        let chol = CholeskyFactor::factor(&gram, gram.dim())?;
        Ok(Self { id: BasisId::fresh(), gram, chol })
    }

    pub fn gram(&self) -> &crate::linalg::SymMatrix {
        &self.gram
    }

    pub fn chol(&self) -> &CholeskyFactor {
        &self.chol
    }
}

impl FactoredBasis for GramBasis {
    fn basis_id(&self) -> BasisId {
        self.id
    }

    fn ensure(&mut self, k: usize) -> Result<()> {
        if k > self.gram.dim() {
            return Err(GfdError::Range { requested: k, available: self.gram.dim() });
        }
        Ok(())
    }

    fn factored_len(&self) -> usize {
        self.chol.dim()
    }

    fn solve_upper(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        self.chol.solve_upper(rhs)
    }

    fn mul_upper(&self, a: &[f64]) -> Result<Vec<f64>> {
        self.chol.mul_upper(a)
    }
}

/// Orders of a mixed partial derivative, one per coordinate.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MultiIndex {
    orders: Vec<usize>,
}

impl MultiIndex {
    pub fn new(orders: Vec<usize>) -> Self {
        Self { orders }
    }

    pub fn zero(dim: usize) -> Self {
        Self { orders: vec![0; dim] }
    }

    /// First derivative along `axis`.
    pub fn unit(dim: usize, axis: usize) -> Self {
        let mut orders = vec![0; dim];
        orders[axis] = 1;
        Self { orders }
    }

    pub fn orders(&self) -> &[usize] {
        &self.orders
    }

    pub fn dim(&self) -> usize {
        self.orders.len()
    }

    pub fn total_order(&self) -> usize {
        self.orders.iter().sum()
    }

    /// Number of ordered derivative sequences giving this index,
    /// `|a|! / (a_1! ... a_d!)`.
    pub fn multiplicity(&self) -> f64 {
        let fact = |n: usize| (1..=n).map(|v| v as f64).product::<f64>();
        fact(self.total_order()) / self.orders.iter().map(|&o| fact(o)).product::<f64>()
    }

    /// Every multi-index of total order at most `max_order`, sorted by total
    /// order and then lexicographically descending.
    pub fn all_up_to(dim: usize, max_order: usize) -> Vec<Self> {
        let mut out = Vec::new();
        for order in 0..=max_order {
            let mut level = Vec::new();
            compositions(dim, order, &mut Vec::with_capacity(dim), &mut level);
            level.sort_by(|a: &Vec<usize>, b| b.cmp(a));
            out.extend(level.into_iter().map(Self::new));
        }
        out
    }
}

fn compositions(dim: usize, remaining: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if prefix.len() + 1 == dim {
        prefix.push(remaining);
        out.push(prefix.clone());
        prefix.pop();
        return;
    }
    for first in 0..=remaining {
        prefix.push(first);
        compositions(dim, remaining - first, prefix, out);
        prefix.pop();
    }
}

/// `h = sum_i coeffs[i] b_{i+1}` over the referenced pre-basis.
#[derive(Debug, Clone, PartialEq)]
pub struct PreBasisExpansion {
    basis: BasisId,
    coeffs: Vec<f64>,
}

impl PreBasisExpansion {
    pub fn new(basis: BasisId, coeffs: Vec<f64>) -> Self {
        Self { basis, coeffs }
    }

    pub fn zero(basis: BasisId) -> Self {
        Self { basis, coeffs: Vec::new() }
    }

    pub fn basis(&self) -> BasisId {
        self.basis
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Euclidean norm of the coefficient vector.
    pub fn coeff_norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_finite())
    }

    fn check_same(&self, other: &Self) -> Result<()> {
        if self.basis != other.basis {
            return Err(GfdError::ContractViolation(format!(
                "expansions over different pre-bases ({} and {})",
                self.basis, other.basis
            )));
        }
        Ok(())
    }

    fn check_basis(&self, pb: &PreBasis) -> Result<()> {
        if self.basis != pb.id() {
            return Err(GfdError::ContractViolation(format!(
                "expansion over {} evaluated with {}",
                self.basis,
                pb.id()
            )));
        }
        if self.len() > pb.center_count() {
            return Err(GfdError::Range { requested: self.len(), available: pb.center_count() });
        }
        Ok(())
    }

    /// `h(point)`.
    pub fn evaluate(&self, pb: &PreBasis, point: &[f64]) -> Result<f64> {
        self.evaluate_partial(pb, point, &MultiIndex::zero(pb.dim()))
    }

    /// Mixed partial `D^idx h(point)`.
    pub fn evaluate_partial(&self, pb: &PreBasis, point: &[f64], idx: &MultiIndex) -> Result<f64> {
        self.check_basis(pb)?;
        if point.len() != pb.dim() || idx.dim() != pb.dim() {
            return Err(GfdError::ContractViolation(format!(
                "point of dimension {} and index of dimension {} on a {}-dimensional domain",
                point.len(),
                idx.dim(),
                pb.dim()
            )));
        }
        let plan = pb.kernel().plan(idx)?;
        let mut total = 0.0;
        for (c, center) in self.coeffs.iter().zip(pb.centers()) {
            if *c != 0.0 {
                total += c * pb.kernel().eval_plan(&plan, center, point);
            }
        }
        Ok(total)
    }

    /// `y + alpha x`, padded to the longer length.
    pub fn axpy(alpha: f64, x: &Self, y: &Self) -> Result<Self> {
        x.check_same(y)?;
        let n = x.len().max(y.len());
        let mut coeffs = y.coeffs.clone();
        coeffs.resize(n, 0.0);
        for (c, xi) in coeffs.iter_mut().zip(&x.coeffs) {
            *c += alpha * xi;
        }
        Ok(Self { basis: y.basis, coeffs })
    }

    /// `alpha h`.
    pub fn scale(&self, alpha: f64) -> Self {
        Self { basis: self.basis, coeffs: self.coeffs.iter().map(|c| alpha * c).collect() }
    }

    /// Sobolev inner product through the cached Gram matrix.
    pub fn sobolev_inner(x: &Self, y: &Self, pb: &PreBasis) -> Result<f64> {
        x.check_same(y)?;
        x.check_basis(pb)?;
        y.check_basis(pb)?;
        let need = x.len().max(y.len());
        let gram = pb.gram();
        if need > gram.dim() {
            return Err(GfdError::State(format!(
                "gram assembled to {} but inner product needs {need}; extend the pre-basis first",
                gram.dim()
            )));
        }
        Ok(gram.bilinear(&x.coeffs, &y.coeffs))
    }

    /// QMC estimate of `||h - reference||_{L^2}` on `quad`.
    pub fn l2_distance<F>(&self, pb: &PreBasis, reference: F, quad: &Quadrature) -> Result<f64>
    where
        F: Fn(&[f64]) -> f64,
    {
        self.check_basis(pb)?;
        let plan = pb.kernel().plan(&MultiIndex::zero(pb.dim()))?;
        let sq: Vec<f64> = quad
            .nodes()
            .map(|p| {
                let h: f64 = self
                    .coeffs
                    .iter()
                    .zip(pb.centers())
                    .map(|(c, center)| c * pb.kernel().eval_plan(&plan, center, p))
                    .sum();
                let e = h - reference(p);
                e * e
            })
            .collect();
        Ok(quad.integrate_values(&sq, 0.0).max(0.0).sqrt())
    }
}

/// `sum_n alpha_n h_n / sum_n alpha_n`, padded to the longest iterate.
pub fn weighted_average(history: &[(f64, PreBasisExpansion)]) -> Result<PreBasisExpansion> {
    let first = history
        .first()
        .ok_or_else(|| GfdError::ContractViolation("averaging an empty history".into()))?;
    let basis = first.1.basis();
    let len = history.iter().map(|(_, h)| h.len()).max().unwrap_or(0);
    let weights: Vec<f64> = history.iter().map(|(a, _)| *a).collect();
    let total = pairwise_sum(&weights, 0.0);
    if !(total > 0.0) {
        return Err(GfdError::ContractViolation("step sizes must have a positive sum".into()));
    }
    let mut coeffs = vec![0.0; len];
    for (alpha, h) in history {
        if h.basis() != basis {
            return Err(GfdError::ContractViolation("history mixes pre-bases".into()));
        }
        for (c, x) in coeffs.iter_mut().zip(h.coeffs()) {
            *c += alpha * x;
        }
    }
    for c in &mut coeffs {
        *c /= total;
    }
    Ok(PreBasisExpansion::new(basis, coeffs))
}
