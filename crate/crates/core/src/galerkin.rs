//! Galerkin projection onto a polynomial chaos basis.
//!
//! With `Φ(δ) = [φ_0(δ), …, φ_N(δ)]ᵀ` and `Φ_n = Φ ⊗ I_n`, a state expansion
//! `x(t, δ) ≈ Φ_nᵀ x_pc(t)` obeys `ẋ_pc = A_pc x_pc` with
//! `A_pc = E[Φ_nΦ_nᵀ]⁻¹ E[Φ_n A Φ_nᵀ]`. The same expectations, weighted by
//! products of basis polynomials, give the four tensors of the projected
//! regulator LMI.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::orthopoly::{composite_rule, OrthoBasis, QuadratureRule};
use crate::par;
use crate::plant::{check_symmetric, UncertainLinearSystem};

/// Dimensions of the lifted Kronecker objects.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KronIndex {
    /// Highest basis index `N`.
    pub order: usize,
    pub n: usize,
    pub m: usize,
}

impl KronIndex {
    pub fn new(order: usize, n: usize, m: usize) -> Result<Self> {
        if n == 0 || m == 0 {
            return Err(Error::Dimension(format!("n and m must be positive, got n={n}, m={m}")));
        }
        Ok(Self { order, n, m })
    }

    pub fn terms(&self) -> usize {
        self.order + 1
    }

    /// `Φ ⊗ I_dim`, a `(N+1)·dim × dim` matrix.
    pub fn lift(phi: &[f64], dim: usize) -> DMatrix<f64> {
        DVector::from_column_slice(phi).kronecker(&DMatrix::identity(dim, dim))
    }
}

/// Largest entry of `M(vᵀ ⊗ I_n) − (vᵀ ⊗ I_m)(I_{N+1} ⊗ M)`, relative to
/// `max(1, |M|∞)·max(1, |v|∞)`.
pub fn kron_identity_residual(m: &DMatrix<f64>, v: &DVector<f64>) -> Result<f64> {
    if v.is_empty() || m.is_empty() {
        return Err(Error::Dimension("M and v must be non-empty".into()));
    }
    let (rows, cols) = m.shape();
    let vt = v.transpose();
    let lhs = m * vt.kronecker(&DMatrix::<f64>::identity(cols, cols));
    let rhs = vt.kronecker(&DMatrix::<f64>::identity(rows, rows)) * DMatrix::<f64>::identity(v.len(), v.len()).kronecker(m);
    let scale = m.amax().max(1.0) * v.amax().max(1.0);
    Ok((lhs - rhs).amax() / scale)
}

/// Checks `M(vᵀ ⊗ I_n) = (vᵀ ⊗ I_m)(I_{N+1} ⊗ M)` for an `m×n` matrix `M`.
pub fn kron_identity_check(m: &DMatrix<f64>, v: &DVector<f64>) -> Result<bool> {
    Ok(kron_identity_residual(m, v)? <= 1e-12)
}

/// Enumeration of the products `φ_iφ_j`, `i >= j`, used to parameterise a
/// polynomial matrix `Y(δ) = Σ_p ψ_p(δ) Ȳ_p` with symmetric blocks.
///
/// The order is `j` ascending, then `i` from `j` to `N`: `(0,0), (1,0), …,
/// (N,0), (1,1), …, (N,N)`. Off-diagonal pairs carry a factor 2.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PsiOrdering {
    order: usize,
    pairs: Vec<(usize, usize)>,
}

impl PsiOrdering {
    pub fn new(order: usize) -> Self {
        let pairs = (0..=order).flat_map(|j| (j..=order).map(move |i| (i, j))).collect();
        Self { order, pairs }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn scale(&self, p: usize) -> f64 {
        let (i, j) = self.pairs[p];
        if i == j {
            1.0
        } else {
            2.0
        }
    }

    /// Position of the pair `{i, j}` in either order.
    pub fn position(&self, i: usize, j: usize) -> Option<usize> {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        if i > self.order {
            return None;
        }
        // Columns before j hold (N+1) + N + … + (N+2-j) entries.
        let before: usize = (0..j).map(|c| self.order + 1 - c).sum();
        Some(before + (i - j))
    }

    /// `ψ(δ)` from basis values `φ(δ)`.
    pub fn eval(&self, phi: &[f64]) -> Vec<f64> {
        self.pairs.iter().enumerate().map(|(p, &(i, j))| self.scale(p) * phi[i] * phi[j]).collect()
    }
}

/// Quadrature used for projections: a Gauss rule split at the system's
/// kinks, `max(20, 2N+10)` nodes per piece unless overridden.
pub fn default_rule(system: &UncertainLinearSystem, basis: &OrthoBasis, nodes: Option<usize>) -> Result<QuadratureRule> {
    let nodes = nodes.unwrap_or_else(|| (2 * basis.degree + 10).max(20));
    composite_rule(basis.distribution, nodes, system.kinks())
}

fn check_compatible(system: &UncertainLinearSystem, basis: &OrthoBasis, rule: &QuadratureRule) -> Result<()> {
    if system.distribution() != basis.distribution {
        return Err(Error::Input("system and basis use different parameter distributions".into()));
    }
    if rule.is_empty() {
        return Err(Error::Input("empty quadrature rule".into()));
    }
    if let Some(x) = rule.nodes.iter().find(|&&x| !basis.distribution.contains(x)) {
        return Err(Error::Domain { value: *x, what: "quadrature node" });
    }
    Ok(())
}

/// `E[Φ_nΦ_nᵀ]⁻¹ E[Φ_n A Φ_nᵀ]` for the system's `A(δ)`.
pub fn project_dynamics(system: &UncertainLinearSystem, basis: &OrthoBasis, rule: &QuadratureRule) -> Result<DMatrix<f64>> {
    check_compatible(system, basis, rule)?;
    let n = system.n();
    let k = basis.len();
    let nodes: Vec<(f64, f64)> = rule.iter().collect();
    let mut acc = par::map_reduce(
        &nodes,
        || DMatrix::zeros(k * n, k * n),
        |&(x, w)| {
            let phi = DVector::from_vec(basis.eval_unchecked(x));
            (&phi * phi.transpose() * w).kronecker(&system.a(x))
        },
        |a, b| a + b,
    );
    for (a, norm) in basis.norms.iter().enumerate() {
        if !(*norm > 0.0) {
            return Err(Error::Numerical(format!("basis norm {a} is not positive")));
        }
        acc.rows_mut(a * n, n).scale_mut(1.0 / norm);
    }
    Ok(acc)
}

/// Expectation tensors of the projected regulator LMI.
///
/// Row/column layouts (outer index first):
/// * `m1`: `(a, p, r) × (b, c)`, `E[φ_a ψ_p φ_b] A[c, r]`
/// * `m2`: `(a, k, r) × (b, c)`, `E[φ_a φ_k φ_b] B[c, r]`
/// * `m3`: `(a, p, r) × (b, q, s)`, `E[φ_a ψ_p φ_b ψ_q] Q[r, s]`
/// * `m4`: `(a, k, r) × (b, l, s)`, `E[φ_a φ_k φ_b φ_l] R[r, s]`
#[derive(Debug, Clone)]
pub struct GalerkinTensors {
    pub index: KronIndex,
    pub psi: PsiOrdering,
    pub gram: DMatrix<f64>,
    pub m1: DMatrix<f64>,
    pub m2: DMatrix<f64>,
    pub m3: DMatrix<f64>,
    pub m4: DMatrix<f64>,
    pub sqrt_m3: DMatrix<f64>,
    pub sqrt_m4: DMatrix<f64>,
}

struct Partial {
    gram: DMatrix<f64>,
    m1: DMatrix<f64>,
    m2: DMatrix<f64>,
    m3: DMatrix<f64>,
    m4: DMatrix<f64>,
}

impl Partial {
    fn zeros(k: usize, l: usize, n: usize, m: usize) -> Self {
        Self {
            gram: DMatrix::zeros(k * n, k * n),
            m1: DMatrix::zeros(k * l * n, k * n),
            m2: DMatrix::zeros(k * k * m, k * n),
            m3: DMatrix::zeros(k * l * n, k * l * n),
            m4: DMatrix::zeros(k * k * m, k * k * m),
        }
    }

    fn add(mut self, o: Self) -> Self {
        self.gram += o.gram;
        self.m1 += o.m1;
        self.m2 += o.m2;
        self.m3 += o.m3;
        self.m4 += o.m4;
        self
    }
}

/// Assembles the tensors by quadrature, node by node.
pub fn build_tensors(
    system: &UncertainLinearSystem,
    basis: &OrthoBasis,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    rule: &QuadratureRule,
) -> Result<GalerkinTensors> {
    check_compatible(system, basis, rule)?;
    let (n, m) = (system.n(), system.m());
    check_symmetric("Q", q)?;
    check_symmetric("R", r)?;
    if q.nrows() != n || r.nrows() != m {
        return Err(Error::Dimension(format!("Q is {:?} and R is {:?} for n={n}, m={m}", q.shape(), r.shape())));
    }
    if SymmetricEigen::new(r.clone()).eigenvalues.min() <= 0.0 {
        return Err(Error::Input("R must be positive definite".into()));
    }
    // Exact symmetry of Q and R makes M3, M4 exactly symmetric.
    let q = (q + q.transpose()) * 0.5;
    let r = (r + r.transpose()) * 0.5;

    let index = KronIndex::new(basis.degree, n, m)?;
    let psi = PsiOrdering::new(basis.degree);
    let (k, l) = (basis.len(), psi.len());
    let nodes: Vec<(f64, f64)> = rule.iter().collect();
    let sum = par::map_reduce(
        &nodes,
        || Partial::zeros(k, l, n, m),
        |&(x, w)| {
            let phi_vals = basis.eval_unchecked(x);
            let phi = DVector::from_column_slice(&phi_vals);
            let phi_psi = phi.kronecker(&DVector::from_vec(psi.eval(&phi_vals)));
            let phi_phi = phi.kronecker(&phi);
            let (a, b) = (system.a(x), system.b(x));
            Partial {
                gram: (&phi * phi.transpose() * w).kronecker(&DMatrix::identity(n, n)),
                m1: (&phi_psi * phi.transpose() * w).kronecker(&a.transpose()),
                m2: (&phi_phi * phi.transpose() * w).kronecker(&b.transpose()),
                m3: (&phi_psi * phi_psi.transpose() * w).kronecker(&q),
                m4: (&phi_phi * phi_phi.transpose() * w).kronecker(&r),
            }
        },
        Partial::add,
    );
    let sqrt_m3 = principal_sqrt(&sum.m3).map_err(|e| Error::Numerical(format!("M3: {e}")))?;
    let sqrt_m4 = principal_sqrt(&sum.m4).map_err(|e| Error::Numerical(format!("M4: {e}")))?;
    Ok(GalerkinTensors { index, psi, gram: sum.gram, m1: sum.m1, m2: sum.m2, m3: sum.m3, m4: sum.m4, sqrt_m3, sqrt_m4 })
}

/// Symmetric PSD square root. Eigenvalues in `[-1e-10, 0)` (relative to the
/// largest magnitude) are treated as zero; anything below `-1e-8` is an error.
pub fn principal_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !m.is_square() {
        return Err(Error::Dimension(format!("square root of a {:?} matrix", m.shape())));
    }
    if m.is_empty() {
        return Ok(m.clone());
    }
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let scale = eig.eigenvalues.amax().max(1.0);
    let mut roots = eig.eigenvalues.clone();
    for v in roots.iter_mut() {
        if *v < -1e-8 * scale {
            return Err(Error::Numerical(format!("matrix is not PSD (eigenvalue {v:.3e})")));
        }
        *v = v.max(0.0).sqrt();
    }
    let u = &eig.eigenvectors;
    let s = u * DMatrix::from_diagonal(&roots) * u.transpose();
    Ok((&s + s.transpose()) * 0.5)
}
