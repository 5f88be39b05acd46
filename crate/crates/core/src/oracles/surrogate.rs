//! A finite-dimensional stand-in for the function space where every quantity
//! has a closed form.
//!
//! The ambient space is `R^D` with inner product `<x, y>_W = x^T W y` and
//! pre-basis `b_i = B e_i` for `i <= D`. Indices beyond `D` form an orthonormal
//! tail that is orthogonal to the core, so the Cholesky factor of the Gram
//! matrix is block diagonal with an identity tail.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::dual::{DualScalar, Scalar};
use crate::error::{GfdError, Result};
use crate::function_space::{BasisId, FactoredBasis, PreBasisExpansion};
use crate::linalg::{CholeskyFactor, SymMatrix};
use crate::risk::RiskFunctional;
use crate::rng::substream;

/// Dimension of the default surrogate.
pub const SURROGATE_DIM: usize = 12;

#[derive(Debug, Clone)]
pub struct SurrogateSpace {
    id: BasisId,
    w: DMatrix<f64>,
    b: DMatrix<f64>,
    gram: SymMatrix,
    chol: CholeskyFactor,
    /// `B R^{-1}`: column `i` is the orthonormal element `e_i` for `i <= D`.
    q: DMatrix<f64>,
}

fn gaussian_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

fn orthogonal<R: Rng + ?Sized>(d: usize, rng: &mut R) -> DMatrix<f64> {
    gaussian_matrix(d, d, rng).qr().q()
}

impl SurrogateSpace {
    /// Random SPD `W` and a pre-basis `B = U diag(s) V^T` with singular values
    /// spread geometrically over `[1, cond]`.
    pub fn random(d: usize, cond: f64, seed: u64) -> Result<Self> {
        if d == 0 || !(cond >= 1.0 && cond.is_finite()) {
            return Err(GfdError::Config("surrogate needs d >= 1 and a finite condition number >= 1".into()));
        }
        let mut rng = substream(seed, 0, 0);
        let x = gaussian_matrix(d, d, &mut rng);
        let w = &x * x.transpose() / d as f64 + DMatrix::identity(d, d);
        let u = orthogonal(d, &mut rng);
        let v = orthogonal(d, &mut rng);
        let s = DVector::from_fn(d, |i, _| if d == 1 { 1.0 } else { cond.powf(i as f64 / (d - 1) as f64) });
        let b = u * DMatrix::from_diagonal(&s) * v.transpose();
        Self::with_basis(w, b)
    }

    /// Pre-basis orthonormal in the `W` inner product: `B = L^{-T}` with
    /// `W = L L^T`.
    pub fn orthonormal(w: DMatrix<f64>) -> Result<Self> {
        let l = w
            .clone()
            .cholesky()
            .ok_or_else(|| GfdError::Config("W must be symmetric positive definite".into()))?
            .l();
        let lt_inv = l
            .transpose()
            .try_inverse()
            .ok_or_else(|| GfdError::Config("W factor is singular".into()))?;
        Self::with_basis(w, lt_inv)
    }

    pub fn with_basis(w: DMatrix<f64>, b: DMatrix<f64>) -> Result<Self> {
        let d = w.nrows();
        if w.ncols() != d || b.nrows() != d || b.ncols() != d {
            return Err(GfdError::Config("W and B must be square of equal size".into()));
        }
        let w = (&w + w.transpose()) * 0.5;
        let g = b.transpose() * &w * &b;
        let rows = (0..d).map(|i| (0..d).map(|j| 0.5 * (g[(i, j)] + g[(j, i)])).collect()).collect();
        let gram = SymMatrix::from_dense(rows)?;
        let chol = CholeskyFactor::factor(&gram, d)?;
        let r = DMatrix::from_fn(d, d, |i, j| chol.get(i, j));
        let r_inv = r.try_inverse().ok_or_else(|| GfdError::NumericalRank { index: 0, jitter: chol.jitter() })?;
        let q = &b * r_inv;
        Ok(Self { id: BasisId::fresh(), w, b, gram, chol, q })
    }

    pub fn dim(&self) -> usize {
        self.w.nrows()
    }

    pub fn w(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    /// Matrix whose columns are the orthonormal elements of the core.
    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    /// Core Gram matrix.
    pub fn gram(&self) -> &SymMatrix {
        &self.gram
    }

    pub fn chol(&self) -> &CholeskyFactor {
        &self.chol
    }

    /// Gram entry `<b_i, b_j>` (0-based), including the identity tail.
    pub fn gram_entry(&self, i: usize, j: usize) -> f64 {
        let d = self.dim();
        if i < d && j < d {
            self.gram.get(i, j)
        } else if i == j {
            1.0
        } else {
            0.0
        }
    }

    /// Core part `B a_{1..D}` in `R^D`.
    pub fn ambient<S: Scalar>(&self, coeffs: &[S]) -> Vec<S> {
        let d = self.dim();
        (0..d)
            .map(|r| {
                let mut acc = S::zero();
                for (c, a) in coeffs.iter().take(d).enumerate() {
                    acc = acc + *a * self.b[(r, c)];
                }
                acc
            })
            .collect()
    }

    /// `<x, y>` of two expansions.
    pub fn inner(&self, x: &PreBasisExpansion, y: &PreBasisExpansion) -> Result<f64> {
        self.check(x)?;
        self.check(y)?;
        let xa = DVector::from_vec(self.ambient(x.coeffs()));
        let ya = DVector::from_vec(self.ambient(y.coeffs()));
        let core = xa.dot(&(&self.w * ya));
        let d = self.dim();
        let tail: f64 = x.coeffs().iter().zip(y.coeffs()).skip(d).map(|(a, b)| a * b).sum();
        Ok(core + tail)
    }

    /// Orthonormal coordinates `R a`.
    pub fn e_coords(&self, h: &PreBasisExpansion) -> Result<Vec<f64>> {
        self.check(h)?;
        self.mul_upper(h.coeffs())
    }

    /// Expansion with the given orthonormal coordinates.
    pub fn from_e_coords(&self, y: &[f64]) -> Result<PreBasisExpansion> {
        Ok(PreBasisExpansion::new(self.id, self.solve_upper(y)?))
    }

    fn check(&self, h: &PreBasisExpansion) -> Result<()> {
        if h.basis() != self.id && !h.is_empty() {
            return Err(GfdError::ContractViolation(format!(
                "expansion over {} used with surrogate {}",
                h.basis(),
                self.id
            )));
        }
        Ok(())
    }
}

impl FactoredBasis for SurrogateSpace {
    fn basis_id(&self) -> BasisId {
        self.id
    }

    fn ensure(&mut self, _k: usize) -> Result<()> {
        Ok(())
    }

    fn factored_len(&self) -> usize {
        usize::MAX
    }

    fn solve_upper(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let m = rhs.len().min(self.dim());
        let mut out = self.chol.solve_upper(&rhs[..m])?;
        out.extend_from_slice(&rhs[m..]);
        Ok(out)
    }

    fn mul_upper(&self, a: &[f64]) -> Result<Vec<f64>> {
        let m = a.len().min(self.dim());
        let mut out = self.chol.mul_upper(&a[..m])?;
        out.extend_from_slice(&a[m..]);
        Ok(out)
    }
}

/// `R(h) = 1/2 ||A x - b||^2` where `x = B a` is the core part of `h` and
/// the tail is ignored.
#[derive(Debug, Clone)]
pub struct QuadraticRisk {
    a: DMatrix<f64>,
    target: DVector<f64>,
}

impl QuadraticRisk {
    pub fn new(a: DMatrix<f64>, target: DVector<f64>) -> Result<Self> {
        if a.nrows() != target.len() {
            return Err(GfdError::Config("A and b must have matching row counts".into()));
        }
        Ok(Self { a, target })
    }

    /// Random `A` with `rows` rows and random `b`.
    pub fn random(space: &SurrogateSpace, rows: usize, seed: u64) -> Result<Self> {
        let mut rng = substream(seed, 1, 0);
        let a = gaussian_matrix(rows, space.dim(), &mut rng) / (space.dim() as f64).sqrt();
        let b = DVector::from_fn(rows, |_, _| rng.sample(StandardNormal));
        Self::new(a, b)
    }

    /// `R(h) = 1/2 sum_j mu_j (y_j - y*_j)^2` in orthonormal coordinates `y`.
    pub fn diagonal_in_e(space: &SurrogateSpace, mu: &[f64], y_star: &[f64]) -> Result<Self> {
        let d = space.dim();
        if mu.len() != d || y_star.len() != d || mu.iter().any(|m| !(*m >= 0.0)) {
            return Err(GfdError::Config(format!("weights and target must have length {d} with mu >= 0")));
        }
        // y = Q^T W x, so A = diag(sqrt(mu)) Q^T W.
        let qtw = space.q().transpose() * space.w();
        let a = DMatrix::from_fn(d, d, |i, j| mu[i].sqrt() * qtw[(i, j)]);
        let b = DVector::from_fn(d, |i, _| mu[i].sqrt() * y_star[i]);
        Self::new(a, b)
    }

    fn eval<S: Scalar>(&self, x: &[S]) -> S {
        let mut total = S::zero();
        for r in 0..self.a.nrows() {
            let mut acc = S::constant(-self.target[r]);
            for (c, xc) in x.iter().enumerate() {
                acc = acc + *xc * self.a[(r, c)];
            }
            total = total + acc.square();
        }
        total * 0.5
    }

    fn residual(&self, space: &SurrogateSpace, h: &PreBasisExpansion) -> DVector<f64> {
        let x = DVector::from_vec(space.ambient(h.coeffs()));
        &self.a * x - &self.target
    }

    /// Orthonormal coordinates of the gradient: `g_i = <grad R, e_i>`.
    pub fn gradient_e(&self, space: &SurrogateSpace, h: &PreBasisExpansion) -> Result<Vec<f64>> {
        space.check(h)?;
        let r = self.residual(space, h);
        Ok((space.q().transpose() * (self.a.transpose() * r)).iter().copied().collect())
    }
}

impl RiskFunctional<SurrogateSpace> for QuadraticRisk {
    fn prepare(&mut self, _basis: &SurrogateSpace, _k: usize) -> Result<()> {
        Ok(())
    }

    fn value(&self, basis: &SurrogateSpace, h: &PreBasisExpansion) -> Result<f64> {
        basis.check(h)?;
        Ok(self.eval(&basis.ambient(h.coeffs())))
    }

    fn value_and_derivatives(
        &self,
        basis: &SurrogateSpace,
        h: &PreBasisExpansion,
        dirs: &[PreBasisExpansion],
    ) -> Result<(f64, Vec<f64>)> {
        basis.check(h)?;
        let x = basis.ambient(h.coeffs());
        let value = self.eval(&x);
        let derivs = dirs
            .iter()
            .map(|v| {
                basis.check(v)?;
                let dx = basis.ambient(v.coeffs());
                let lifted: Vec<DualScalar> = x.iter().zip(&dx).map(|(a, b)| DualScalar::new(*a, *b)).collect();
                Ok(self.eval(&lifted).deriv)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((value, derivs))
    }
}
