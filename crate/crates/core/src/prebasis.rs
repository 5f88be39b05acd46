//! Matérn kernel translates centered on a Roberts sequence, with their
//! Sobolev Gram matrix kept in factored form.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use log::debug;
use rayon::prelude::*;

use crate::error::{GfdError, Result};
use crate::function_space::{BasisId, FactoredBasis, MultiIndex};
use crate::linalg::{CholeskyFactor, SymMatrix};
use crate::matern::{MaternKernel, MaternParams, PartialPlan};
use crate::quadrature::{roberts_range, BoxDomain, Quadrature};

/// Default number of QMC nodes for Gram entries.
pub const DEFAULT_GRAM_NODES: usize = 1 << 14;

const CACHE_MAGIC: &str = "# hilbert-gfd gram cache v1";

/// First `count` Roberts points mapped into `domain`.
pub fn generate_centers(domain: &BoxDomain, count: usize) -> Vec<Vec<f64>> {
    extend_centers(domain, 0, count)
}

fn extend_centers(domain: &BoxDomain, have: usize, count: usize) -> Vec<Vec<f64>> {
    if count <= have {
        return Vec::new();
    }
    roberts_range(domain.dim(), have + 1, count - have)
        .iter()
        .map(|u| domain.map_unit(u))
        .collect()
}

/// Dot product summed over a fixed binary tree.
pub(crate) fn pairwise_dot(a: &[f64], b: &[f64]) -> f64 {
    const LEAF: usize = 64;
    if a.len() <= LEAF {
        return a.iter().zip(b).map(|(x, y)| x * y).sum();
    }
    let mid = a.len() / 2;
    pairwise_dot(&a[..mid], &b[..mid]) + pairwise_dot(&a[mid..], &b[mid..])
}

/// One derivative channel of the Sobolev inner product.
#[derive(Debug, Clone)]
struct Channel {
    multiplicity: f64,
    plan: PartialPlan,
}

#[derive(Debug, Clone)]
pub struct PreBasis {
    id: BasisId,
    kernel: MaternKernel,
    domain: BoxDomain,
    order: usize,
    centers: Vec<Vec<f64>>,
    quad: Quadrature,
    channels: Vec<Channel>,
    /// Per basis function: channel-major values at the Gram nodes.
    features: Vec<Vec<f64>>,
    gram: SymMatrix,
    chol: CholeskyFactor,
}

impl PreBasis {
    /// A pre-basis for `H^order(domain)` with `gram_nodes` QMC nodes.
    pub fn new(params: MaternParams, domain: BoxDomain, order: usize, gram_nodes: usize) -> Result<Self> {
        let d = domain.dim() as f64;
        if params.nu() + d / 2.0 < order as f64 {
            return Err(GfdError::Config(format!(
                "nu + d/2 = {} is below the Sobolev order {order}",
                params.nu() + d / 2.0
            )));
        }
        if params.max_order() < order {
            return Err(GfdError::Config(format!(
                "nu = {} has derivatives up to order {} but the Sobolev order is {order}",
                params.nu(),
                params.max_order()
            )));
        }
        let kernel = MaternKernel::new(params, domain.dim());
        let channels = MultiIndex::all_up_to(domain.dim(), order)
            .into_iter()
            .map(|idx| Ok(Channel { multiplicity: idx.multiplicity(), plan: kernel.plan(&idx)? }))
            .collect::<Result<Vec<_>>>()?;
        let quad = domain.quadrature(gram_nodes)?;
        Ok(Self {
            id: BasisId::fresh(),
            kernel,
            domain,
            order,
            centers: Vec::new(),
            quad,
            channels,
            features: Vec::new(),
            gram: SymMatrix::new(),
            chol: CholeskyFactor::new(),
        })
    }

    pub fn id(&self) -> BasisId {
        self.id
    }

    pub fn kernel(&self) -> &MaternKernel {
        &self.kernel
    }

    pub fn params(&self) -> &MaternParams {
        self.kernel.params()
    }

    pub fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn sobolev_order(&self) -> usize {
        self.order
    }

    pub fn centers(&self) -> &[Vec<f64>] {
        &self.centers
    }

    pub fn center_count(&self) -> usize {
        self.centers.len()
    }

    pub fn gram(&self) -> &SymMatrix {
        &self.gram
    }

    pub fn chol(&self) -> &CholeskyFactor {
        &self.chol
    }

    pub fn jitter(&self) -> f64 {
        self.chol.jitter()
    }

    pub fn gram_nodes(&self) -> usize {
        self.quad.len()
    }

    /// Grows the center list to `count` (never shrinks).
    pub fn generate_centers(&mut self, count: usize) {
        let new = extend_centers(&self.domain, self.centers.len(), count);
        self.centers.extend(new);
    }

    fn ensure_features(&mut self, k: usize) {
        if k <= self.features.len() {
            return;
        }
        let plans: Vec<PartialPlan> = self.channels.iter().map(|c| c.plan.clone()).collect();
        let nodes: Vec<&[f64]> = self.quad.nodes().collect();
        let n = nodes.len();
        let kernel = &self.kernel;
        let fresh: Vec<Vec<f64>> = self.centers[self.features.len()..k]
            .par_iter()
            .map(|center| {
                let mut col = vec![0.0; plans.len() * n];
                let mut buf = vec![0.0; plans.len()];
                for (node_idx, p) in nodes.iter().enumerate() {
                    kernel.eval_plans(&plans, center, p, &mut buf);
                    for (c, v) in buf.iter().enumerate() {
                        col[c * n + node_idx] = *v;
                    }
                }
                col
            })
            .collect();
        self.features.extend(fresh);
    }

    /// Extends the Gram matrix to `k x k`, computing only new rows.
    pub fn assemble_gram(&mut self, k: usize) -> Result<()> {
        if k > self.centers.len() {
            return Err(GfdError::Range { requested: k, available: self.centers.len() });
        }
        if k <= self.gram.dim() {
            return Ok(());
        }
        self.ensure_features(k);
        let n = self.quad.len();
        let weight = self.quad.segments()[0].weight();
        let mults: Vec<f64> = self.channels.iter().map(|c| c.multiplicity).collect();
        for j in self.gram.dim()..k {
            let fj = &self.features[j];
            let row: Vec<f64> = (0..=j)
                .into_par_iter()
                .map(|i| {
                    let fi = &self.features[i];
                    let mut total = 0.0;
                    for (c, m) in mults.iter().enumerate() {
                        let range = c * n..(c + 1) * n;
                        total += m * pairwise_dot(&fi[range.clone()], &fj[range]);
                    }
                    weight * total
                })
                .collect();
            self.gram.push(&row)?;
        }
        debug!("gram assembled to {k}");
        Ok(())
    }

    /// Extends the Cholesky factor to `k`.
    pub fn cholesky_extend(&mut self, k: usize) -> Result<()> {
        self.chol.extend(&self.gram, k)
    }

    /// Replaces the Gram matrix (for instance from a cache) and resets the
    /// factor. Centers are generated to match.
    pub fn import_gram(&mut self, gram: SymMatrix) -> Result<()> {
        self.generate_centers(gram.dim());
        self.features.truncate(gram.dim());
        self.gram = gram;
        self.chol = CholeskyFactor::new();
        Ok(())
    }

    /// Writes the assembled Gram matrix with a validation header.
    pub fn save_gram_cache(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        let _ = writeln!(out, "{CACHE_MAGIC}");
        for (key, value) in self.cache_header() {
            let _ = writeln!(out, "{key} {value}");
        }
        let _ = writeln!(out, "jitter {}", self.chol.jitter());
        for i in 0..self.gram.dim() {
            let row: Vec<String> = self.gram.row(i).iter().map(|v| v.to_string()).collect();
            let _ = writeln!(out, "{}", row.join(" "));
        }
        fs::write(path, out)?;
        Ok(())
    }

    /// Loads a Gram cache, rejecting any header that disagrees with this
    /// pre-basis.
    pub fn load_gram_cache(&mut self, path: &Path) -> Result<()> {
        let text = fs::read_to_string(path)?;
        let mut lines = text.lines();
        if lines.next() != Some(CACHE_MAGIC) {
            return Err(GfdError::CacheMismatch("missing cache header".into()));
        }
        let expected = self.cache_header();
        let mut count = None;
        for (key, value) in &expected {
            let line = lines.next().ok_or_else(|| GfdError::CacheMismatch(format!("missing field {key}")))?;
            let (k, v) = line
                .split_once(' ')
                .ok_or_else(|| GfdError::CacheMismatch(format!("malformed line {line:?}")))?;
            if k != *key {
                return Err(GfdError::CacheMismatch(format!("expected field {key}, found {k}")));
            }
            if *key == "centers" {
                count = Some(v.parse::<usize>().map_err(|e| GfdError::CacheMismatch(e.to_string()))?);
            } else if v != value {
                return Err(GfdError::CacheMismatch(format!("{key} is {v} in the cache but {value} here")));
            }
        }
        let jitter_line = lines.next().unwrap_or_default();
        if !jitter_line.starts_with("jitter ") {
            return Err(GfdError::CacheMismatch("missing field jitter".into()));
        }
        let count = count.unwrap_or(0);
        let mut rows = Vec::with_capacity(count);
        for line in lines.take(count) {
            let row = line
                .split_whitespace()
                .map(|v| v.parse::<f64>().map_err(|e| GfdError::CacheMismatch(e.to_string())))
                .collect::<Result<Vec<f64>>>()?;
            rows.push(row);
        }
        if rows.len() != count {
            return Err(GfdError::CacheMismatch(format!("expected {count} rows, found {}", rows.len())));
        }
        let gram = SymMatrix::from_dense(rows).map_err(|e| GfdError::CacheMismatch(e.to_string()))?;
        self.import_gram(gram)
    }

    fn cache_header(&self) -> Vec<(&'static str, String)> {
        let bounds = |v: &[f64]| v.iter().map(f64::to_string).collect::<Vec<_>>().join(",");
        vec![
            ("nu", self.params().nu().to_string()),
            ("eta", self.params().eta().to_string()),
            ("order", self.order.to_string()),
            ("centers", self.gram.dim().to_string()),
            ("nodes", self.quad.len().to_string()),
            ("lower", bounds(self.domain.lower())),
            ("upper", bounds(self.domain.upper())),
        ]
    }
}

impl FactoredBasis for PreBasis {
    fn basis_id(&self) -> BasisId {
        self.id
    }

    fn ensure(&mut self, k: usize) -> Result<()> {
        self.generate_centers(k);
        self.assemble_gram(k)?;
        self.cholesky_extend(k)
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::reconstruction_error;
    use crate::quadrature::integrate;

    fn unit_square() -> BoxDomain {
        BoxDomain::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap()
    }

    #[test]
    fn centers_prefix_and_range() {
        let dom = BoxDomain::new(vec![-1.0, 2.0], vec![1.0, 3.0]).unwrap();
        let three = generate_centers(&dom, 3);
        let five = generate_centers(&dom, 5);
        assert_eq!(three[..], five[..3]);
        for c in &five {
            assert!(c[0] > -1.0 && c[0] < 1.0 && c[1] > 2.0 && c[1] < 3.0);
        }
        let line = BoxDomain::new(vec![0.0], vec![1.0]).unwrap();
        assert!((generate_centers(&line, 1)[0][0] - 0.118_034).abs() < 1e-6);
    }

    #[test]
    fn rejects_insufficient_smoothness() {
        let p = MaternParams::new(0.5, 1.0).unwrap();
        assert!(PreBasis::new(p, unit_square(), 2, 64).is_err());
        let p = MaternParams::new(1.5, 1.0).unwrap();
        assert!(PreBasis::new(p, unit_square(), 1, 64).is_ok());
    }

    #[test]
    fn gram_l2_entry_matches_direct_integral() {
        let p = MaternParams::new(1.5, 0.5).unwrap();
        let mut pb = PreBasis::new(p, unit_square(), 0, 4096).unwrap();
        pb.ensure(2).unwrap();
        let c0 = pb.centers()[0].clone();
        let c1 = pb.centers()[1].clone();
        let k = pb.kernel().clone();
        let dist = |a: &[f64], b: &[f64]| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
        let q = unit_square().quadrature(4096).unwrap();
        let direct = integrate(|x| k.eval_radial(dist(&c0, x)) * k.eval_radial(dist(&c1, x)), &q);
        assert!((pb.gram().get(0, 1) - direct).abs() < 1e-12);
    }

    #[test]
    fn gram_symmetric_positive_and_prefix_stable() {
        let p = MaternParams::new(2.5, 0.6).unwrap();
        let mut pb = PreBasis::new(p, unit_square(), 2, 2048).unwrap();
        pb.ensure(4).unwrap();
        let block = pb.gram().to_dense();
        pb.ensure(9).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(block[i][j].to_bits(), pb.gram().get(i, j).to_bits());
            }
        }
        for i in 0..9 {
            assert!(pb.gram().get(i, i) > 0.0);
            assert!(pb.chol().diag(i) > 0.0);
            for j in 0..9 {
                assert_eq!(pb.gram().get(i, j), pb.gram().get(j, i));
            }
        }
        assert!(reconstruction_error(pb.gram(), pb.chol()) < 1e-10);
    }

    #[test]
    fn range_error_without_centers() {
        let p = MaternParams::new(1.5, 1.0).unwrap();
        let mut pb = PreBasis::new(p, unit_square(), 1, 64).unwrap();
        pb.generate_centers(2);
        assert!(matches!(pb.assemble_gram(3), Err(GfdError::Range { requested: 3, available: 2 })));
    }

    #[test]
    fn cache_round_trip_and_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gram.txt");
        let p = MaternParams::new(2.5, 0.7).unwrap();
        let mut pb = PreBasis::new(p, unit_square(), 1, 1024).unwrap();
        pb.ensure(5).unwrap();
        pb.save_gram_cache(&path).unwrap();

        let mut fresh = PreBasis::new(p, unit_square(), 1, 1024).unwrap();
        fresh.load_gram_cache(&path).unwrap();
        assert_eq!(fresh.gram(), pb.gram());
        fresh.ensure(7).unwrap();
        let mut direct = PreBasis::new(p, unit_square(), 1, 1024).unwrap();
        direct.ensure(7).unwrap();
        assert_eq!(fresh.gram(), direct.gram());

        let other = MaternParams::new(2.5, 0.8).unwrap();
        let mut wrong = PreBasis::new(other, unit_square(), 1, 1024).unwrap();
        assert!(matches!(wrong.load_gram_cache(&path), Err(GfdError::CacheMismatch(_))));
        let mut wrong_nodes = PreBasis::new(p, unit_square(), 1, 512).unwrap();
        assert!(matches!(wrong_nodes.load_gram_cache(&path), Err(GfdError::CacheMismatch(_))));
    }
}
