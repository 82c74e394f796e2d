use std::time::Instant;

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};

use super::{Sense, SdpProblem, SdpSolution, SolveStatus, SolverAdapter};

/// Interior-point conic backend.
///
/// Each block `F(y) ⪯ 0` becomes a slack `S = -F(y)` in the PSD triangle
/// cone, vectorised as the column-major upper triangle with off-diagonal
/// entries scaled by `√2`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClarabelAdapter {
    pub tolerance: f64,
    pub max_iter: u32,
    pub verbose: bool,
}

impl Default for ClarabelAdapter {
    fn default() -> Self {
        Self { tolerance: 1e-9, max_iter: 200, verbose: false }
    }
}

/// Row of entry `(r, c)`, `r >= c`, inside a block's svec.
fn svec_index(r: usize, c: usize) -> usize {
    r * (r + 1) / 2 + c
}

impl SolverAdapter for ClarabelAdapter {
    fn solve(&self, problem: &SdpProblem) -> SdpSolution {
        let started = Instant::now();
        let n = problem.variables.len();
        let sqrt2 = std::f64::consts::SQRT_2;

        let mut rows = Vec::new();
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        let mut b = Vec::new();
        let mut cones = Vec::with_capacity(problem.blocks.len());
        let mut offset = 0;
        for block in &problem.blocks {
            let len = block.dim * (block.dim + 1) / 2;
            // S = sign·(F0 + Σ y F_v) with sign = -1 for Nsd.
            let sign = match block.sense {
                Sense::Nsd => -1.0,
                Sense::Psd => 1.0,
            };
            let scale = |r: usize, c: usize| if r == c { 1.0 } else { sqrt2 };
            let mut rhs = vec![0.0; len];
            for &(r, c, v) in &block.constant.entries {
                rhs[svec_index(r, c)] = sign * v * scale(r, c);
            }
            b.extend(rhs);
            for (var, coeff) in &block.terms {
                for &(r, c, v) in &coeff.entries {
                    rows.push(offset + svec_index(r, c));
                    cols.push(*var);
                    vals.push(-sign * v * scale(r, c));
                }
            }
            cones.push(if block.dim == 1 {
                SupportedConeT::NonnegativeConeT(1)
            } else {
                SupportedConeT::PSDTriangleConeT(block.dim)
            });
            offset += len;
        }

        let a = CscMatrix::new_from_triplets(offset, n, rows, cols, vals);
        let p = CscMatrix::zeros((n, n));
        let q: Vec<f64> = problem.objective.iter().map(|c| -c).collect();

        let settings = match DefaultSettingsBuilder::default()
            .verbose(self.verbose)
            .max_iter(self.max_iter)
            .tol_gap_abs(self.tolerance)
            .tol_gap_rel(self.tolerance)
            .tol_feas(self.tolerance)
            .tol_ktratio(self.tolerance.sqrt().min(1e-6))
            .build()
        {
            Ok(s) => s,
            Err(_) => return SdpSolution::failed(SolveStatus::NumericalFailure, started),
        };
        let mut solver = match DefaultSolver::new(&p, &q, &a, &b, &cones, settings) {
            Ok(s) => s,
            Err(_) => return SdpSolution::failed(SolveStatus::NumericalFailure, started),
        };
        solver.solve();

        let sol = &solver.solution;
        let (status, reduced) = match sol.status {
            SolverStatus::Solved => (SolveStatus::Optimal, false),
            SolverStatus::AlmostSolved => (SolveStatus::Optimal, true),
            SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
                (SolveStatus::Infeasible, false)
            }
            SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => (SolveStatus::Unbounded, false),
            SolverStatus::MaxIterations | SolverStatus::MaxTime => (SolveStatus::IterationLimit, false),
            _ => (SolveStatus::NumericalFailure, false),
        };
        let optimal = status == SolveStatus::Optimal && sol.x.iter().all(|v| v.is_finite());
        SdpSolution {
            status: if status == SolveStatus::Optimal && !optimal { SolveStatus::NumericalFailure } else { status },
            values: optimal.then(|| sol.x.clone()),
            objective: optimal.then(|| problem.objective_value(&sol.x)),
            solve_seconds: started.elapsed().as_secs_f64(),
            iterations: sol.iterations,
            reduced_accuracy: reduced,
        }
    }
}
