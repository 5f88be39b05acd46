//! Quasi-Monte-Carlo quadrature on boxes and box faces.
//!
//! Nodes come from the Roberts additive recurrence: point `m` (1-based) of the
//! `d`-dimensional sequence has coordinates `frac(0.5 + m / phi_d^j)`, where
//! `phi_d` is the real root above one of `x^(d+1) = x + 1`. Every point is
//! computed directly from its index, so sequences are deterministic and
//! prefix-stable.
//!
//! Sums over nodes use a pairwise tree reduction with a fixed shape, which
//! keeps results independent of how the per-node values were produced.

use std::ops::Add;

use crate::error::{GfdError, Result};

const ROOT_ITERATIONS: usize = 30;
const PAIRWISE_LEAF: usize = 16;

/// Generalized golden ratio for dimension `d`.
pub fn roberts_root(d: usize) -> f64 {
    let power = 1.0 / (d as f64 + 1.0);
    let mut x = 2.0_f64;
    for _ in 0..ROOT_ITERATIONS {
        x = (1.0 + x).powf(power);
    }
    x
}

/// Additive increments `phi_d^{-j}`, `j = 1..=d`.
fn roberts_alphas(d: usize) -> Vec<f64> {
    let phi = roberts_root(d);
    (1..=d).map(|j| phi.powi(-(j as i32))).collect()
}

/// First `n` points of the `d`-dimensional Roberts sequence in `[0, 1)^d`.
pub fn roberts_sequence(d: usize, n: usize) -> Vec<Vec<f64>> {
    roberts_range(d, 1, n)
}

/// Points `first..first+n` (1-based) of the Roberts sequence.
pub fn roberts_range(d: usize, first: usize, n: usize) -> Vec<Vec<f64>> {
    let alphas = roberts_alphas(d);
    (first..first + n)
        .map(|m| {
            let m = m as f64;
            alphas.iter().map(|a| (0.5 + m * a).fract()).collect()
        })
        .collect()
}

/// Pairwise sum with a fixed tree shape.
pub fn pairwise_sum<T>(values: &[T], zero: T) -> T
where
    T: Copy + Add<Output = T>,
{
    if values.len() <= PAIRWISE_LEAF {
        return values.iter().fold(zero, |acc, &v| acc + v);
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid], zero) + pairwise_sum(&values[mid..], zero)
}

/// Axis-aligned open box `(lower, upper)` in `R^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxDomain {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl BoxDomain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(GfdError::ContractViolation(format!(
                "box bounds must be non-empty and of equal length (got {} and {})",
                lower.len(),
                upper.len()
            )));
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l < u) || !l.is_finite() || !u.is_finite()) {
            return Err(GfdError::ContractViolation(
                "box requires finite lower[i] < upper[i] on every axis".into(),
            ));
        }
        Ok(Self { lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn measure(&self) -> f64 {
        self.lower.iter().zip(&self.upper).map(|(l, u)| u - l).product()
    }

    /// Affine image of a unit-cube point.
    pub fn map_unit(&self, unit: &[f64]) -> Vec<f64> {
        unit.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(u, (l, h))| l + u * (h - l))
            .collect()
    }

    pub fn contains_closed(&self, point: &[f64]) -> bool {
        point.len() == self.dim()
            && point
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(p, (l, h))| *l <= *p && *p <= *h)
    }

    /// The face `x[axis] = lower[axis]` (`upper_side = false`) or `upper[axis]`.
    pub fn face(&self, axis: usize, upper_side: bool) -> Result<BoundaryComponent> {
        if axis >= self.dim() {
            return Err(GfdError::Range { requested: axis, available: self.dim() });
        }
        let fixed_value = if upper_side { self.upper[axis] } else { self.lower[axis] };
        BoundaryComponent::new(self, axis, fixed_value)
    }

    /// QMC rule with the first `n` Roberts points mapped into the box.
    pub fn quadrature(&self, n: usize) -> Result<Quadrature> {
        if n == 0 {
            return Err(GfdError::Config("quadrature needs at least one node".into()));
        }
        let nodes = roberts_sequence(self.dim(), n)
            .iter()
            .map(|u| self.map_unit(u))
            .collect();
        Ok(Quadrature::from_segments(vec![Segment::new(nodes, self.measure())]))
    }
}

/// One face of a box, `x[fixed_axis] = fixed_value`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryComponent {
    fixed_axis: usize,
    fixed_value: f64,
    /// The face's extent in the remaining coordinates. `None` for 1-D boxes,
    /// whose faces are single points of counting measure one.
    free_box: Option<BoxDomain>,
}

impl BoundaryComponent {
    pub fn new(parent: &BoxDomain, fixed_axis: usize, fixed_value: f64) -> Result<Self> {
        if fixed_axis >= parent.dim() {
            return Err(GfdError::Range { requested: fixed_axis, available: parent.dim() });
        }
        if fixed_value != parent.lower[fixed_axis] && fixed_value != parent.upper[fixed_axis] {
            return Err(GfdError::ContractViolation(format!(
                "face value {fixed_value} is not a bound of axis {fixed_axis}"
            )));
        }
        let free_box = if parent.dim() == 1 {
            None
        } else {
            let keep = |v: &Vec<f64>| {
                v.iter()
                    .enumerate()
                    .filter(|(i, _)| *i != fixed_axis)
                    .map(|(_, x)| *x)
                    .collect::<Vec<_>>()
            };
            Some(BoxDomain::new(keep(&parent.lower), keep(&parent.upper))?)
        };
        Ok(Self { fixed_axis, fixed_value, free_box })
    }

    pub fn fixed_axis(&self) -> usize {
        self.fixed_axis
    }

    pub fn fixed_value(&self) -> f64 {
        self.fixed_value
    }

    pub fn free_box(&self) -> Option<&BoxDomain> {
        self.free_box.as_ref()
    }

    /// `(d-1)`-dimensional measure of the face.
    pub fn measure(&self) -> f64 {
        self.free_box.as_ref().map_or(1.0, BoxDomain::measure)
    }

    fn embed(&self, free: &[f64]) -> Vec<f64> {
        let mut point = Vec::with_capacity(free.len() + 1);
        point.extend_from_slice(&free[..self.fixed_axis]);
        point.push(self.fixed_value);
        point.extend_from_slice(&free[self.fixed_axis..]);
        point
    }

    fn segment(&self, n: usize) -> Segment {
        let nodes = match &self.free_box {
            None => vec![vec![self.fixed_value]; n],
            Some(free) => roberts_sequence(free.dim(), n)
                .iter()
                .map(|u| self.embed(&free.map_unit(u)))
                .collect(),
        };
        Segment::new(nodes, self.measure())
    }
}

/// Equal-weight QMC rule over one region of known measure.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    nodes: Vec<Vec<f64>>,
    measure: f64,
}

impl Segment {
    fn new(nodes: Vec<Vec<f64>>, measure: f64) -> Self {
        Self { nodes, measure }
    }

    pub fn nodes(&self) -> &[Vec<f64>] {
        &self.nodes
    }

    pub fn measure(&self) -> f64 {
        self.measure
    }

    /// Per-node weight `measure / N`.
    pub fn weight(&self) -> f64 {
        self.measure / self.nodes.len() as f64
    }
}

/// A concatenation of equal-weight segments. Interior rules have a single
/// segment; boundary rules have one per face.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadrature {
    segments: Vec<Segment>,
}

impl Quadrature {
    pub fn from_segments(segments: Vec<Segment>) -> Self {
        Self { segments }
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn len(&self) -> usize {
        self.segments.iter().map(|s| s.nodes.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn nodes(&self) -> impl Iterator<Item = &[f64]> {
        self.segments.iter().flat_map(|s| s.nodes.iter().map(Vec::as_slice))
    }

    /// Per-node weights in node order.
    pub fn weights(&self) -> impl Iterator<Item = f64> + '_ {
        self.segments
            .iter()
            .flat_map(|s| std::iter::repeat_n(s.weight(), s.nodes.len()))
    }

    pub fn total_measure(&self) -> f64 {
        self.segments.iter().map(|s| s.measure).sum()
    }

    /// Integrates per-node values given in node order.
    pub fn integrate_values<T>(&self, values: &[T], zero: T) -> T
    where
        T: Copy + Add<Output = T> + std::ops::Mul<f64, Output = T>,
    {
        debug_assert_eq!(values.len(), self.len());
        let mut offset = 0;
        let mut total = zero;
        for seg in &self.segments {
            let n = seg.nodes.len();
            let sum = pairwise_sum(&values[offset..offset + n], zero);
            total = total + sum * (seg.measure / n as f64);
            offset += n;
        }
        total
    }
}

/// `sum_seg measure_seg / N_seg * sum f(node)`.
pub fn integrate<F>(f: F, quad: &Quadrature) -> f64
where
    F: Fn(&[f64]) -> f64,
{
    let values: Vec<f64> = quad.nodes().map(f).collect();
    quad.integrate_values(&values, 0.0)
}

/// Fallible variant of [`integrate`].
pub fn try_integrate<F>(f: F, quad: &Quadrature) -> Result<f64>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let values = quad.nodes().map(f).collect::<Result<Vec<f64>>>()?;
    Ok(quad.integrate_values(&values, 0.0))
}

/// Concatenates per-face Roberts rules with `n_per` nodes each.
pub fn boundary_quadrature(components: &[BoundaryComponent], n_per: usize) -> Result<Quadrature> {
    if n_per == 0 {
        return Err(GfdError::Config("boundary quadrature needs at least one node per face".into()));
    }
    Ok(Quadrature::from_segments(
        components.iter().map(|c| c.segment(n_per)).collect(),
    ))
}
