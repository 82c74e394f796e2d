//! Solver-agnostic semidefinite programs.
//!
//! A problem maximises a linear objective over scalar decision variables
//! subject to affine symmetric matrix inequalities ([`LmiBlock`]). Matrix
//! variables are expanded into scalars by [`ProblemBuilder`]; symmetric ones
//! use their lower triangle in row-major order `(0,0), (1,0), (1,1), (2,0), …`.

mod clarabel_adapter;
mod expr;
pub mod sdpa;

use std::time::Instant;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

pub use clarabel_adapter::ClarabelAdapter;
pub use expr::AffineExpr;

use crate::error::{Error, Result};

/// Which side of zero an [`LmiBlock`] must lie on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sense {
    /// `F(y) ⪯ 0`
    Nsd,
    /// `F(y) ⪰ 0`
    Psd,
}

/// Sparse symmetric matrix stored as its lower triangle, sorted by `(row, col)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SymMatrix {
    pub entries: Vec<(usize, usize, f64)>,
}

impl SymMatrix {
    fn add_to(&self, dense: &mut DMatrix<f64>, scale: f64) {
        for &(r, c, v) in &self.entries {
            dense[(r, c)] += scale * v;
            if r != c {
                dense[(c, r)] += scale * v;
            }
        }
    }
}

/// `F(y) = F_0 + Σ_v y_v F_v`, constrained by `sense`.
#[derive(Debug, Clone, PartialEq)]
pub struct LmiBlock {
    pub name: String,
    pub dim: usize,
    pub sense: Sense,
    pub constant: SymMatrix,
    /// Per-variable coefficients, sorted by variable index.
    pub terms: Vec<(usize, SymMatrix)>,
}

impl LmiBlock {
    /// Assembles a block from its lower block-triangle.
    ///
    /// `parts` holds `(block_row, block_col, expr)` with `block_row >= block_col`;
    /// missing parts are zero. Only the lower triangle of diagonal parts is read,
    /// so strictly upper entries of a diagonal part are ignored.
    pub fn from_lower_blocks(
        name: impl Into<String>,
        sense: Sense,
        sizes: &[usize],
        parts: &[(usize, usize, &AffineExpr)],
    ) -> Result<Self> {
        let mut offsets = Vec::with_capacity(sizes.len() + 1);
        offsets.push(0);
        for s in sizes {
            offsets.push(offsets.last().unwrap() + s);
        }
        let dim = *offsets.last().unwrap();
        let mut constant = Vec::new();
        let mut terms: std::collections::BTreeMap<usize, Vec<(usize, usize, f64)>> = Default::default();

        let mut ordered: Vec<_> = parts.to_vec();
        ordered.sort_by_key(|(i, j, _)| (*i, *j));
        for (bi, bj, expr) in ordered {
            if bi < bj || bi >= sizes.len() {
                return Err(Error::Dimension(format!("block ({bi}, {bj}) is not in the lower triangle")));
            }
            if expr.shape() != (sizes[bi], sizes[bj]) {
                return Err(Error::Dimension(format!(
                    "block ({bi}, {bj}) has shape {:?}, expected {:?}",
                    expr.shape(),
                    (sizes[bi], sizes[bj])
                )));
            }
            let (ro, co) = (offsets[bi], offsets[bj]);
            let collect = |m: &DMatrix<f64>, out: &mut Vec<(usize, usize, f64)>| {
                for r in 0..m.nrows() {
                    let cmax = if bi == bj { r + 1 } else { m.ncols() };
                    for c in 0..cmax {
                        let v = m[(r, c)];
                        if v != 0.0 {
                            out.push((ro + r, co + c, v));
                        }
                    }
                }
            };
            collect(expr.constant_part(), &mut constant);
            for (var, coeff) in expr.terms() {
                collect(coeff, terms.entry(*var).or_default());
            }
        }
        let sort = |mut v: Vec<(usize, usize, f64)>| {
            v.sort_by_key(|&(r, c, _)| (r, c));
            SymMatrix { entries: v }
        };
        Ok(Self {
            name: name.into(),
            dim,
            sense,
            constant: sort(constant),
            terms: terms.into_iter().filter(|(_, v)| !v.is_empty()).map(|(k, v)| (k, sort(v))).collect(),
        })
    }

    /// Square symmetric affine expression as a single block.
    pub fn from_expr(name: impl Into<String>, sense: Sense, expr: &AffineExpr) -> Result<Self> {
        let (r, c) = expr.shape();
        if r != c {
            return Err(Error::Dimension(format!("LMI expression must be square, got {r}x{c}")));
        }
        Self::from_lower_blocks(name, sense, &[r], &[(0, 0, expr)])
    }

    /// Dense `F(y)`.
    pub fn eval(&self, values: &[f64]) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        self.constant.add_to(&mut m, 1.0);
        for (var, coeff) in &self.terms {
            coeff.add_to(&mut m, values[*var]);
        }
        m
    }

    /// Largest eigenvalue of `F(y)` for `Nsd`, of `-F(y)` for `Psd`; ≤ 0 when satisfied.
    pub fn violation(&self, values: &[f64]) -> f64 {
        let mut m = self.eval(values);
        if self.sense == Sense::Psd {
            m.neg_mut();
        }
        max_eigenvalue(m)
    }
}

pub(crate) fn max_eigenvalue(m: DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return f64::NEG_INFINITY;
    }
    SymmetricEigen::new(m).eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Maximise `objective · y` subject to every block.
#[derive(Debug, Clone, PartialEq)]
pub struct SdpProblem {
    pub variables: Vec<String>,
    pub objective: Vec<f64>,
    pub blocks: Vec<LmiBlock>,
}

impl SdpProblem {
    pub fn validate(&self) -> Result<()> {
        if self.objective.len() != self.variables.len() {
            return Err(Error::Dimension("objective length differs from variable count".into()));
        }
        for block in &self.blocks {
            let in_range = |m: &SymMatrix| m.entries.iter().all(|&(r, c, _)| r < block.dim && c <= r);
            if !in_range(&block.constant) {
                return Err(Error::Dimension(format!("block {} has entries outside its lower triangle", block.name)));
            }
            for (var, coeff) in &block.terms {
                if *var >= self.variables.len() {
                    return Err(Error::Input(format!("block {} references unknown variable {var}", block.name)));
                }
                if !in_range(coeff) {
                    return Err(Error::Dimension(format!(
                        "block {} has entries outside its lower triangle",
                        block.name
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn objective_value(&self, values: &[f64]) -> f64 {
        self.objective.iter().zip(values).map(|(c, v)| c * v).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
    NumericalFailure,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdpSolution {
    pub status: SolveStatus,
    /// Present exactly when `status` is `Optimal`.
    pub values: Option<Vec<f64>>,
    pub objective: Option<f64>,
    pub solve_seconds: f64,
    pub iterations: u32,
    /// Set when the solver only reached its reduced-accuracy tolerances.
    pub reduced_accuracy: bool,
}

impl SdpSolution {
    pub fn failed(status: SolveStatus, started: Instant) -> Self {
        Self {
            status,
            values: None,
            objective: None,
            solve_seconds: started.elapsed().as_secs_f64(),
            iterations: 0,
            reduced_accuracy: false,
        }
    }
}

/// Anything that can solve an [`SdpProblem`]. Implementations must be
/// deterministic and hold no shared mutable state between calls.
pub trait SolverAdapter: Send + Sync {
    fn solve(&self, problem: &SdpProblem) -> SdpSolution;
}

/// Maximum signed violation over all blocks; `-inf` when there are none.
pub fn residual(problem: &SdpProblem, values: &[f64]) -> f64 {
    problem.blocks.iter().map(|b| b.violation(values)).fold(f64::NEG_INFINITY, f64::max)
}

/// Schur-complement wrapping of `M11 + Σ B_kᵀ S_k² B_k ⪯ 0` into
///
/// ```text
/// [ M11      B_1ᵀS_1  B_2ᵀS_2 … ]
/// [ S_1B_1   -I       0         ]  ⪯ 0
/// [ S_2B_2   0        -I        ]
/// ```
///
/// `m11` must be symmetric; each `S_k` is a constant symmetric square root.
pub fn schur_wrap(
    name: impl Into<String>,
    m11: &AffineExpr,
    factors: &[(&AffineExpr, &DMatrix<f64>)],
) -> Result<LmiBlock> {
    let (k, kc) = m11.shape();
    if k != kc {
        return Err(Error::Dimension(format!("M11 must be square, got {k}x{kc}")));
    }
    let mut sizes = vec![k];
    let mut lower = Vec::with_capacity(factors.len());
    let mut identities = Vec::with_capacity(factors.len());
    for (i, (b, s)) in factors.iter().enumerate() {
        let (br, bc) = b.shape();
        if bc != k || s.nrows() != br || s.ncols() != br {
            return Err(Error::Dimension(format!(
                "factor {i}: B is {br}x{bc}, S is {}x{}, M11 is {k}x{k}",
                s.nrows(),
                s.ncols()
            )));
        }
        sizes.push(br);
        lower.push(b.mul_left(s));
        identities.push(AffineExpr::constant(-DMatrix::identity(br, br)));
    }
    let mut parts: Vec<(usize, usize, &AffineExpr)> = vec![(0, 0, m11)];
    for (i, (sb, eye)) in lower.iter().zip(&identities).enumerate() {
        parts.push((i + 1, 0, sb));
        parts.push((i + 1, i + 1, eye));
    }
    LmiBlock::from_lower_blocks(name, Sense::Nsd, &sizes, &parts)
}

/// Incrementally declares variables and constraints.
#[derive(Debug, Default)]
pub struct ProblemBuilder {
    names: Vec<String>,
    objective: Vec<f64>,
    blocks: Vec<LmiBlock>,
}

impl ProblemBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn variable_count(&self) -> usize {
        self.names.len()
    }

    pub fn scalar(&mut self, name: impl Into<String>) -> usize {
        self.names.push(name.into());
        self.objective.push(0.0);
        self.names.len() - 1
    }

    /// Symmetric `n×n` matrix variable with `n(n+1)/2` scalars.
    pub fn symmetric(&mut self, name: &str, n: usize) -> AffineExpr {
        let mut expr = AffineExpr::zeros(n, n);
        for r in 0..n {
            for c in 0..=r {
                let var = self.scalar(format!("{name}({r},{c})"));
                let mut coeff = DMatrix::zeros(n, n);
                coeff[(r, c)] = 1.0;
                coeff[(c, r)] = 1.0;
                expr.add_term(var, coeff);
            }
        }
        expr
    }

    /// General `rows×cols` matrix variable, row-major.
    pub fn matrix(&mut self, name: &str, rows: usize, cols: usize) -> AffineExpr {
        let mut expr = AffineExpr::zeros(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                let var = self.scalar(format!("{name}({r},{c})"));
                let mut coeff = DMatrix::zeros(rows, cols);
                coeff[(r, c)] = 1.0;
                expr.add_term(var, coeff);
            }
        }
        expr
    }

    pub fn objective_mut(&mut self) -> &mut [f64] {
        &mut self.objective
    }

    /// Adds `weight · tr(expr)` to the maximised objective.
    pub fn maximize_trace(&mut self, expr: &AffineExpr, weight: f64) {
        for (var, coeff) in expr.terms() {
            self.objective[*var] += weight * coeff.trace();
        }
    }

    pub fn constrain(&mut self, block: LmiBlock) {
        self.blocks.push(block);
    }

    pub fn build(self) -> Result<SdpProblem> {
        let p = SdpProblem { variables: self.names, objective: self.objective, blocks: self.blocks };
        p.validate()?;
        Ok(p)
    }
}

/// Runs `adapter` and times it.
pub fn solve(problem: &SdpProblem, adapter: &dyn SolverAdapter) -> SdpSolution {
    let started = Instant::now();
    if problem.validate().is_err() {
        return SdpSolution::failed(SolveStatus::NumericalFailure, started);
    }
    let mut sol = adapter.solve(problem);
    sol.solve_seconds = started.elapsed().as_secs_f64();
    sol
}
