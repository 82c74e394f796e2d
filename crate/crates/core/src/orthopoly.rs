//! Orthogonal polynomial bases for a scalar random parameter.
//!
//! The Wiener–Askey pairing used here is uniform → Legendre and
//! Gaussian → probabilists' Hermite. Polynomials are classically
//! normalised (`P_i(1) = 1`, monic `He_i`), so `E[φ_i²]` is carried
//! explicitly in [`OrthoBasis::norms`] and never assumed to be one.
//!
//! Every family lives on a standard domain and is composed with an affine
//! map from the physical parameter, so callers always pass raw parameter
//! values (degrees, for the missile model).

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative slack when deciding whether a point sits inside a bounded support.
const SUPPORT_SLACK: f64 = 1e-12;

/// Probability law of the scheduling parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum ParameterDistribution {
    Uniform { lo: f64, hi: f64 },
    Gaussian { mean: f64, std_dev: f64 },
}

impl ParameterDistribution {
    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::Config(format!(
                "uniform support must satisfy lo < hi, got [{lo}, {hi}]"
            )));
        }
        Ok(Self::Uniform { lo, hi })
    }

    pub fn gaussian(mean: f64, std_dev: f64) -> Result<Self> {
        if !(mean.is_finite() && std_dev.is_finite() && std_dev > 0.0) {
            return Err(Error::Config(format!(
                "gaussian needs a positive standard deviation, got {std_dev}"
            )));
        }
        Ok(Self::Gaussian { mean, std_dev })
    }

    /// Re-checks the invariants, e.g. after deserialisation.
    pub fn validated(self) -> Result<Self> {
        match self {
            Self::Uniform { lo, hi } => Self::uniform(lo, hi),
            Self::Gaussian { mean, std_dev } => Self::gaussian(mean, std_dev),
        }
    }

    pub fn support(&self) -> Option<(f64, f64)> {
        match *self {
            Self::Uniform { lo, hi } => Some((lo, hi)),
            Self::Gaussian { .. } => None,
        }
    }

    pub fn contains(&self, delta: f64) -> bool {
        match *self {
            Self::Uniform { lo, hi } => {
                let slack = SUPPORT_SLACK * (hi - lo).abs().max(1.0);
                delta >= lo - slack && delta <= hi + slack
            }
            Self::Gaussian { .. } => delta.is_finite(),
        }
    }

    /// Clamps into the support; identity for unbounded families.
    pub fn clamp(&self, delta: f64) -> f64 {
        match *self {
            Self::Uniform { lo, hi } => delta.clamp(lo, hi),
            Self::Gaussian { .. } => delta,
        }
    }

    /// Affine map onto the standard domain (`[-1, 1]` or the unit normal).
    pub fn to_standard(&self, delta: f64) -> f64 {
        match *self {
            Self::Uniform { lo, hi } => (2.0 * delta - (lo + hi)) / (hi - lo),
            Self::Gaussian { mean, std_dev } => (delta - mean) / std_dev,
        }
    }

    pub fn from_standard(&self, t: f64) -> f64 {
        match *self {
            Self::Uniform { lo, hi } => 0.5 * (lo + hi) + 0.5 * (hi - lo) * t,
            Self::Gaussian { mean, std_dev } => mean + std_dev * t,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Self::Uniform { lo, hi } => rng.random_range(lo..hi),
            Self::Gaussian { mean, std_dev } => {
                // Box–Muller; one variate per call keeps the stream simple.
                let u1: f64 = 1.0 - rng.random::<f64>();
                let u2: f64 = rng.random();
                mean + std_dev * (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
            }
        }
    }

    fn family(&self) -> Family {
        match self {
            Self::Uniform { .. } => Family::Legendre,
            Self::Gaussian { .. } => Family::Hermite,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Family {
    Legendre,
    Hermite,
}

impl Family {
    /// Values `p_0(t)..=p_degree(t)` by the three-term recurrence.
    fn eval(self, degree: usize, t: f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(degree + 1);
        out.push(1.0);
        if degree == 0 {
            return out;
        }
        out.push(t);
        for k in 1..degree {
            let kf = k as f64;
            let next = match self {
                Family::Legendre => ((2.0 * kf + 1.0) * t * out[k] - kf * out[k - 1]) / (kf + 1.0),
                Family::Hermite => t * out[k] - kf * out[k - 1],
            };
            out.push(next);
        }
        out
    }

    /// `E[p_i²]` under the probability measure on the standard domain.
    fn norm(self, i: usize) -> f64 {
        match self {
            Family::Legendre => 1.0 / (2 * i + 1) as f64,
            Family::Hermite => (1..=i).map(|k| k as f64).product(),
        }
    }

    /// Off-diagonal `sqrt(β_k)` of the symmetric Jacobi matrix, `k >= 1`.
    fn jacobi_offdiag(self, k: usize) -> f64 {
        let kf = k as f64;
        match self {
            Family::Legendre => kf / (4.0 * kf * kf - 1.0).sqrt(),
            Family::Hermite => kf.sqrt(),
        }
    }

    /// Orthonormal values `p_i / sqrt(E[p_i²])` for `i < count`.
    fn eval_orthonormal(self, count: usize, t: f64) -> Vec<f64> {
        if count == 0 {
            return Vec::new();
        }
        self.eval(count - 1, t)
            .into_iter()
            .enumerate()
            .map(|(i, v)| v / self.norm(i).sqrt())
            .collect()
    }
}

/// An orthogonal polynomial family truncated at degree `N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrthoBasis {
    pub distribution: ParameterDistribution,
    pub degree: usize,
    /// `E[φ_i²]` for `i = 0..=degree`.
    pub norms: Vec<f64>,
}

/// Builds the Wiener–Askey basis matching `distribution`.
pub fn make_basis(distribution: ParameterDistribution, degree: usize) -> Result<OrthoBasis> {
    let distribution = distribution.validated()?;
    let family = distribution.family();
    let norms = (0..=degree).map(|i| family.norm(i)).collect();
    Ok(OrthoBasis { distribution, degree, norms })
}

impl OrthoBasis {
    pub fn len(&self) -> usize {
        self.degree + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `[φ_0(δ), …, φ_N(δ)]`, rejecting points outside a bounded support.
    pub fn eval(&self, delta: f64) -> Result<Vec<f64>> {
        if !self.distribution.contains(delta) {
            return Err(Error::Domain { value: delta, what: "basis evaluation" });
        }
        Ok(self.eval_unchecked(delta))
    }

    pub(crate) fn eval_unchecked(&self, delta: f64) -> Vec<f64> {
        let t = self.distribution.to_standard(delta);
        self.distribution.family().eval(self.degree, t)
    }

    /// Basis of the same family one degree higher; its top member is the
    /// polynomial whose roots carry the collocation nodes.
    pub fn raised(&self) -> OrthoBasis {
        let family = self.distribution.family();
        OrthoBasis {
            distribution: self.distribution,
            degree: self.degree + 1,
            norms: (0..=self.degree + 1).map(|i| family.norm(i)).collect(),
        }
    }
}

/// Nodes and probabilistic weights, `Σ w_k = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.nodes.iter().copied().zip(self.weights.iter().copied())
    }

    /// Probabilistic rule that gives every listed point equal weight.
    pub fn equal_weights(points: &[f64]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Input("an equal-weight rule needs at least one point".into()));
        }
        let w = 1.0 / points.len() as f64;
        Ok(Self { nodes: points.to_vec(), weights: vec![w; points.len()] })
    }
}

/// Gauss rule on the standard domain: roots of the `n`-th orthogonal
/// polynomial from the Jacobi matrix, polished by Newton steps, with
/// Christoffel weights `1 / Σ p̂_k(x)²`.
fn standard_gauss(family: Family, n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut jacobi = DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let b = family.jacobi_offdiag(k);
        jacobi[(k, k - 1)] = b;
        jacobi[(k - 1, k)] = b;
    }
    let mut nodes: Vec<f64> = SymmetricEigen::new(jacobi).eigenvalues.iter().copied().collect();
    nodes.sort_by(f64::total_cmp);

    for x in nodes.iter_mut() {
        for _ in 0..3 {
            let (p, dp) = monic_with_derivative(family, n, *x);
            if dp == 0.0 {
                break;
            }
            let step = p / dp;
            *x -= step;
            if step.abs() <= 4.0 * f64::EPSILON * x.abs().max(1.0) {
                break;
            }
        }
    }

    let weights = nodes
        .iter()
        .map(|&x| {
            let s: f64 = family.eval_orthonormal(n, x).iter().map(|v| v * v).sum();
            1.0 / s
        })
        .collect::<Vec<_>>();
    let total: f64 = weights.iter().sum();
    (nodes, weights.into_iter().map(|w| w / total).collect())
}

/// Monic recurrence value and derivative of the degree-`n` polynomial.
fn monic_with_derivative(family: Family, n: usize, x: f64) -> (f64, f64) {
    let (mut p_prev, mut p) = (0.0, 1.0);
    let (mut d_prev, mut d) = (0.0, 0.0);
    for k in 0..n {
        let beta = if k == 0 { 0.0 } else { family.jacobi_offdiag(k).powi(2) };
        let p_next = x * p - beta * p_prev;
        let d_next = p + x * d - beta * d_prev;
        p_prev = p;
        p = p_next;
        d_prev = d;
        d = d_next;
    }
    (p, d)
}

/// Probabilistic Gauss rule with `n_nodes` points for `distribution`.
pub fn gauss_rule(distribution: ParameterDistribution, n_nodes: usize) -> Result<QuadratureRule> {
    if n_nodes == 0 {
        return Err(Error::Input("a Gauss rule needs at least one node".into()));
    }
    let distribution = distribution.validated()?;
    let (std_nodes, weights) = standard_gauss(distribution.family(), n_nodes);
    let nodes = std_nodes.into_iter().map(|t| distribution.from_standard(t)).collect();
    Ok(QuadratureRule { nodes, weights })
}

/// Composite Gauss rule for a uniform law, split at interior `breakpoints`
/// so integrands with kinks there (`|δ|`) converge spectrally on each piece.
/// Breakpoints outside the open support are ignored; Gaussian laws fall
/// back to a plain rule.
pub fn composite_rule(
    distribution: ParameterDistribution,
    nodes_per_segment: usize,
    breakpoints: &[f64],
) -> Result<QuadratureRule> {
    let Some((lo, hi)) = distribution.support() else {
        return gauss_rule(distribution, nodes_per_segment);
    };
    let mut cuts: Vec<f64> = breakpoints.iter().copied().filter(|&b| b > lo && b < hi).collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let mut edges = Vec::with_capacity(cuts.len() + 2);
    edges.push(lo);
    edges.extend(cuts);
    edges.push(hi);

    let mut rule = QuadratureRule { nodes: Vec::new(), weights: Vec::new() };
    for seg in edges.windows(2) {
        let piece = gauss_rule(ParameterDistribution::uniform(seg[0], seg[1])?, nodes_per_segment)?;
        let mass = (seg[1] - seg[0]) / (hi - lo);
        rule.nodes.extend(piece.nodes);
        rule.weights.extend(piece.weights.into_iter().map(|w| w * mass));
    }
    Ok(rule)
}

/// `Σ_k w_k g(δ_k)`.
pub fn expect<F: Fn(f64) -> f64>(rule: &QuadratureRule, g: F) -> f64 {
    rule.iter().map(|(x, w)| w * g(x)).sum()
}

/// Lagrange interpolants through the roots of `φ_{N+1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagrangeBasis {
    pub distribution: ParameterDistribution,
    pub nodes: Vec<f64>,
    /// `E[l_i]`, computed by an independent higher-order rule.
    pub node_expectations: Vec<f64>,
}

/// Interpolants for the collocation nodes of `basis` (degree `N`, `N+1` nodes).
pub fn make_lagrange(basis: &OrthoBasis) -> Result<LagrangeBasis> {
    let count = basis.len();
    let roots = gauss_rule(basis.distribution, count)?;
    for w in roots.nodes.windows(2) {
        if !(w[1] > w[0]) {
            return Err(Error::Numerical(format!(
                "collocation roots are not distinct: {} and {}",
                w[0], w[1]
            )));
        }
    }
    let mut lagrange = LagrangeBasis {
        distribution: basis.distribution,
        nodes: roots.nodes,
        node_expectations: vec![0.0; count],
    };
    // l_i has degree N, so N+1 nodes already integrate it exactly; a wider
    // rule keeps E[l_i] independent of the collocation rule itself.
    let fine = gauss_rule(basis.distribution, count + 8)?;
    let mut acc = vec![0.0; count];
    for (x, w) in fine.iter() {
        for (a, l) in acc.iter_mut().zip(lagrange.eval_unchecked(x)) {
            *a += w * l;
        }
    }
    lagrange.node_expectations = acc;
    Ok(lagrange)
}

impl LagrangeBasis {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn degree(&self) -> usize {
        self.nodes.len().saturating_sub(1)
    }

    pub fn eval(&self, delta: f64) -> Result<Vec<f64>> {
        if !self.distribution.contains(delta) {
            return Err(Error::Domain { value: delta, what: "Lagrange evaluation" });
        }
        Ok(self.eval_unchecked(delta))
    }

    pub(crate) fn eval_unchecked(&self, delta: f64) -> Vec<f64> {
        let nodes = &self.nodes;
        (0..nodes.len())
            .map(|i| {
                nodes
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != i)
                    .map(|(_, &xj)| (delta - xj) / (nodes[i] - xj))
                    .product()
            })
            .collect()
    }
}

/// Affine scalar function `slope·δ + intercept`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Affine {
    pub slope: f64,
    pub intercept: f64,
}

impl Affine {
    pub fn at(&self, delta: f64) -> f64 {
        self.slope * delta + self.intercept
    }
}

/// `E[l_i l_j g]` by a rule exact to degree `4N + 3`.
///
/// For affine `g` this is zero when `i != j` and `E[l_i]·g(δ_i)` otherwise.
pub fn lemma1_check(lagrange: &LagrangeBasis, g: Affine, i: usize, j: usize) -> Result<f64> {
    let count = lagrange.len();
    if i >= count || j >= count {
        return Err(Error::Input(format!("interpolant index out of range: ({i}, {j}) with {count} nodes")));
    }
    let rule = gauss_rule(lagrange.distribution, 2 * count)?;
    Ok(rule
        .iter()
        .map(|(x, w)| {
            let l = lagrange.eval_unchecked(x);
            w * l[i] * l[j] * g.at(x)
        })
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn unit() -> ParameterDistribution {
        ParameterDistribution::uniform(-1.0, 1.0).unwrap()
    }

    fn wide() -> ParameterDistribution {
        ParameterDistribution::uniform(-20.0, 20.0).unwrap()
    }

    #[test]
    fn legendre_norms() {
        let b = make_basis(unit(), 2).unwrap();
        assert_abs_diff_eq!(b.norms[0], 1.0);
        assert_abs_diff_eq!(b.norms[1], 1.0 / 3.0);
        assert_abs_diff_eq!(b.norms[2], 0.2);
        assert_eq!(make_basis(unit(), 0).unwrap().norms, vec![1.0]);
    }

    #[test]
    fn scaled_basis_matches_quadrature_oracle() {
        let b = make_basis(wide(), 1).unwrap();
        assert_abs_diff_eq!(b.eval(10.0).unwrap()[1], 0.5, epsilon = 1e-15);
        // Midpoint sum of (δ/20)² on a fine grid over [-20, 20].
        let n = 200_000;
        let h = 40.0 / n as f64;
        let oracle: f64 = (0..n)
            .map(|k| {
                let d = -20.0 + (k as f64 + 0.5) * h;
                (d / 20.0).powi(2) / 40.0 * h
            })
            .sum();
        assert_abs_diff_eq!(oracle, b.norms[1], epsilon = 1e-9);
    }

    #[test]
    fn eval_known_values() {
        let b = make_basis(unit(), 2).unwrap();
        assert_eq!(b.eval(0.0).unwrap(), vec![1.0, 0.0, -0.5]);
        assert_eq!(b.eval(1.0).unwrap(), vec![1.0, 1.0, 1.0]);
        assert!(matches!(b.eval(1.5), Err(Error::Domain { .. })));
    }

    #[test]
    fn hermite_is_unbounded_and_orthogonal() {
        let g = ParameterDistribution::gaussian(2.0, 0.5).unwrap();
        let b = make_basis(g, 4).unwrap();
        assert!(b.eval(100.0).is_ok());
        assert_abs_diff_eq!(b.norms[3], 6.0);
        let rule = gauss_rule(g, 6).unwrap();
        for i in 0..=4 {
            for j in 0..=4 {
                let e = expect(&rule, |x| {
                    let p = b.eval(x).unwrap();
                    p[i] * p[j]
                });
                let want = if i == j { b.norms[i] } else { 0.0 };
                assert_abs_diff_eq!(e, want, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn bad_distributions_rejected() {
        assert!(ParameterDistribution::uniform(1.0, 1.0).is_err());
        assert!(ParameterDistribution::gaussian(0.0, 0.0).is_err());
        let bogus = ParameterDistribution::Uniform { lo: 3.0, hi: -3.0 };
        assert!(make_basis(bogus, 2).is_err());
    }

    #[test]
    fn gauss_rule_small_cases() {
        let r = gauss_rule(unit(), 1).unwrap();
        assert_abs_diff_eq!(r.nodes[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(r.weights[0], 1.0, epsilon = 1e-15);

        let r = gauss_rule(unit(), 2).unwrap();
        let s = 1.0 / 3f64.sqrt();
        assert_abs_diff_eq!(r.nodes[0], -s, epsilon = 1e-15);
        assert_abs_diff_eq!(r.nodes[1], s, epsilon = 1e-15);
        assert_abs_diff_eq!(r.weights[0], 0.5, epsilon = 1e-15);

        let r = gauss_rule(wide(), 2).unwrap();
        assert_abs_diff_eq!(r.nodes[1], 20.0 * s, epsilon = 1e-13);
        assert_abs_diff_eq!(r.weights[1], 0.5, epsilon = 1e-15);
        assert!(gauss_rule(unit(), 0).is_err());
    }

    #[test]
    fn expectations() {
        let r = gauss_rule(unit(), 3).unwrap();
        assert_abs_diff_eq!(expect(&r, |_| 1.0), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(expect(&r, |x| x * x), 1.0 / 3.0, epsilon = 1e-15);
        let b = make_basis(unit(), 2).unwrap();
        let e = expect(&r, |x| {
            let p = b.eval(x).unwrap();
            p[1] * p[2]
        });
        assert_abs_diff_eq!(e, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn composite_rule_integrates_kink() {
        let rule = composite_rule(wide(), 10, &[0.0]).unwrap();
        assert_eq!(rule.len(), 20);
        assert_abs_diff_eq!(rule.weights.iter().sum::<f64>(), 1.0, epsilon = 1e-14);
        // E|δ| = 10 for U[-20, 20].
        assert_abs_diff_eq!(expect(&rule, f64::abs), 10.0, epsilon = 1e-12);
    }

    #[test]
    fn lagrange_interpolates_at_nodes() {
        let b = make_basis(unit(), 1).unwrap();
        let l = make_lagrange(&b).unwrap();
        let s = 1.0 / 3f64.sqrt();
        assert_abs_diff_eq!(l.nodes[0], -s, epsilon = 1e-15);
        assert_abs_diff_eq!(l.node_expectations[0], 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(l.node_expectations[1], 0.5, epsilon = 1e-14);
        let at0 = l.eval(l.nodes[0]).unwrap();
        assert_abs_diff_eq!(at0[0], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(at0[1], 0.0, epsilon = 1e-15);

        let lw = make_lagrange(&make_basis(wide(), 1).unwrap()).unwrap();
        assert_abs_diff_eq!(lw.nodes[1], 20.0 * s, epsilon = 1e-13);
    }

    #[test]
    fn lemma1_examples() {
        let l = make_lagrange(&make_basis(unit(), 3).unwrap()).unwrap();
        let g = Affine { slope: 2.0, intercept: 3.0 };
        assert_abs_diff_eq!(lemma1_check(&l, g, 0, 1).unwrap(), 0.0, epsilon = 1e-14);
        let diag = lemma1_check(&l, g, 0, 0).unwrap();
        assert_abs_diff_eq!(diag, l.node_expectations[0] * g.at(l.nodes[0]), epsilon = 1e-14);
        let one = Affine { slope: 0.0, intercept: 1.0 };
        assert_abs_diff_eq!(lemma1_check(&l, one, 1, 1).unwrap(), l.node_expectations[1], epsilon = 1e-14);
        assert!(lemma1_check(&l, one, 4, 0).is_err());
    }
}
