//! Regulator synthesis by semidefinite programming.
//!
//! Every method searches for `Y(δ) ≻ 0` and `W(δ)` with `K(δ) = W(δ)Y(δ)⁻¹`
//! such that, in expectation over `δ` or pointwise,
//!
//! ```text
//! sym(A Y + B W) + Y Q Y + Wᵀ R W ⪯ 0
//! ```
//!
//! which bounds the quadratic cost by `x₀ᵀY⁻¹x₀`; maximising the trace of `Y`
//! tightens that bound. The quadratic terms enter through a Schur complement.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::galerkin::{build_tensors, default_rule, principal_sqrt, KronIndex, PsiOrdering};
use crate::orthopoly::{LagrangeBasis, OrthoBasis, ParameterDistribution, QuadratureRule};
use crate::plant::{check_symmetric, UncertainLinearSystem};
use crate::sdp::{self, schur_wrap, AffineExpr, ClarabelAdapter, LmiBlock, ProblemBuilder, SdpProblem, SdpSolution, Sense, SolveStatus};

mod json;

/// Largest admissible condition number of `Y(δ)` when forming `K(δ)`.
pub const MAX_CONDITION: f64 = 1e10;

/// Static gain `u = Kx`.
#[derive(Debug, Clone, PartialEq)]
pub struct StaticGain {
    pub k: DMatrix<f64>,
}

/// Affine scheduling `Y(ρ) = Y0 + ρY1`, `W(ρ) = W0 + ρW1`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineGain {
    pub y0: DMatrix<f64>,
    pub y1: DMatrix<f64>,
    pub w0: DMatrix<f64>,
    pub w1: DMatrix<f64>,
}

/// Galerkin gain: `Y(δ) = Φ_nᵀ Ȳ Φ_n`, `W(δ) = Σ_k φ_k(δ) W_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct PcGain {
    pub basis: OrthoBasis,
    /// `n(N+1)` square, block `(i, j)` is `Ȳ_ij`.
    pub ybar: DMatrix<f64>,
    pub w: Vec<DMatrix<f64>>,
}

/// Collocation gain: `Y(δ) = Σ_i l_i(δ) Ỹ_ii`, `W(δ) = Σ_i l_i(δ) W̃_i`.
///
/// The collocation LMIs only see the diagonal blocks of `Ỹ`; the off-diagonal
/// blocks are completed as `Ỹ_ij = (Ỹ_ii + Ỹ_jj)/2`, which turns
/// `L_nᵀỸL_n` into the polynomial interpolant of the node values.
#[derive(Debug, Clone, PartialEq)]
pub struct ScGain {
    pub lagrange: LagrangeBasis,
    pub y: Vec<DMatrix<f64>>,
    pub w: Vec<DMatrix<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Gain {
    Static(StaticGain),
    Affine(AffineGain),
    Pc(PcGain),
    Sc(ScGain),
}

impl Gain {
    pub fn kind(&self) -> &'static str {
        match self {
            Gain::Static(_) => "lti",
            Gain::Affine(_) => "lpv",
            Gain::Pc(_) => "pclpv",
            Gain::Sc(_) => "sclpv",
        }
    }

    /// `(n, m)`.
    pub fn dims(&self) -> (usize, usize) {
        match self {
            Gain::Static(g) => (g.k.ncols(), g.k.nrows()),
            Gain::Affine(g) => (g.y0.nrows(), g.w0.nrows()),
            Gain::Pc(g) => (g.ybar.nrows() / g.basis.len(), g.w[0].nrows()),
            Gain::Sc(g) => (g.y[0].nrows(), g.w[0].nrows()),
        }
    }

    fn distribution(&self) -> Option<ParameterDistribution> {
        match self {
            Gain::Pc(g) => Some(g.basis.distribution),
            Gain::Sc(g) => Some(g.lagrange.distribution),
            _ => None,
        }
    }

    /// `(Y(δ), W(δ))`, or `None` for a static gain.
    pub fn factors(&self, delta: f64) -> Result<Option<(DMatrix<f64>, DMatrix<f64>)>> {
        if let Some(dist) = self.distribution() {
            if !dist.contains(delta) {
                return Err(Error::Domain { value: delta, what: "gain evaluation" });
            }
        }
        Ok(match self {
            Gain::Static(_) => None,
            Gain::Affine(g) => Some((&g.y0 + &g.y1 * delta, &g.w0 + &g.w1 * delta)),
            Gain::Pc(g) => {
                let n = g.ybar.nrows() / g.basis.len();
                let phi = g.basis.eval_unchecked(delta);
                let lift = KronIndex::lift(&phi, n);
                let y = lift.transpose() * &g.ybar * &lift;
                let w = g.w.iter().zip(&phi).fold(DMatrix::zeros(g.w[0].nrows(), n), |acc, (wk, p)| acc + wk * *p);
                Some(((&y + y.transpose()) * 0.5, w))
            }
            Gain::Sc(g) => {
                let l = g.lagrange.eval_unchecked(delta);
                let (n, m) = (g.y[0].nrows(), g.w[0].nrows());
                let y = g.y.iter().zip(&l).fold(DMatrix::zeros(n, n), |acc, (yi, li)| acc + yi * *li);
                let w = g.w.iter().zip(&l).fold(DMatrix::zeros(m, n), |acc, (wi, li)| acc + wi * *li);
                Some((y, w))
            }
        })
    }

    /// `K(δ) = W(δ)Y(δ)⁻¹`.
    pub fn eval(&self, delta: f64) -> Result<DMatrix<f64>> {
        match self.factors(delta)? {
            None => match self {
                Gain::Static(g) => Ok(g.k.clone()),
                _ => unreachable!("only static gains lack factors"),
            },
            Some((y, w)) => {
                let eig = SymmetricEigen::new(y.clone());
                let (lo, hi) = (eig.eigenvalues.amin(), eig.eigenvalues.amax());
                let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
                if !(condition <= MAX_CONDITION) || eig.eigenvalues.min() <= 0.0 {
                    return Err(Error::Singular { delta, condition });
                }
                let inv = y.try_inverse().ok_or(Error::Singular { delta, condition })?;
                Ok(w * inv)
            }
        }
    }

    pub fn to_json(&self) -> Result<String> {
        json::to_string(self)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        json::from_str(text)
    }
}

/// `K(δ)` for any gain (free-function form).
pub fn eval_gain(gain: &Gain, delta: f64) -> Result<DMatrix<f64>> {
    gain.eval(delta)
}

/// Knobs shared by the synthesis procedures.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthOptions {
    /// Lower bound on `Y`, realising strict positivity.
    pub epsilon_psd: f64,
    /// Decay margin of the worst-case stability constraint.
    pub epsilon_stab: f64,
    /// Extra uniform grid points for the worst-case constraint, on top of
    /// the support endpoints. `0` keeps only the endpoints.
    pub wc_points: usize,
    /// Disables the worst-case constraint when false.
    pub worst_case: bool,
    /// Nodes per smooth piece of the projection quadrature.
    pub quadrature_order: Option<usize>,
    pub solver: ClarabelAdapter,
}

impl Default for SynthOptions {
    fn default() -> Self {
        Self {
            epsilon_psd: 1e-6,
            epsilon_stab: 1e-6,
            wc_points: 0,
            worst_case: true,
            quadrature_order: None,
            solver: ClarabelAdapter::default(),
        }
    }
}

/// Outcome of an optimal synthesis.
#[derive(Debug, Clone)]
pub struct Synthesis {
    pub gain: Gain,
    pub objective: f64,
    pub problem: SdpProblem,
    pub solution: SdpSolution,
}

impl Synthesis {
    pub fn variable_count(&self) -> usize {
        self.problem.variables.len()
    }

    /// Largest signed LMI violation at the returned point.
    pub fn sdp_residual(&self) -> f64 {
        self.solution.values.as_deref().map_or(f64::INFINITY, |v| sdp::residual(&self.problem, v))
    }
}

/// Solves and converts a non-optimal status into an error.
fn run(problem: SdpProblem, options: &SynthOptions, what: &str) -> Result<(SdpProblem, SdpSolution, Vec<f64>)> {
    let solution = sdp::solve(&problem, &options.solver);
    match (solution.status, solution.values.clone()) {
        (SolveStatus::Optimal, Some(values)) => Ok((problem, solution, values)),
        (SolveStatus::Infeasible, _) => Err(Error::Infeasible(format!("{what}: the LMIs admit no solution"))),
        (SolveStatus::Unbounded, _) => Err(Error::Numerical(format!("{what}: objective is unbounded"))),
        (status, _) => Err(Error::Numerical(format!("{what}: solver stopped with status {status:?}"))),
    }
}

fn check_weights(n: usize, m: usize, q: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    check_symmetric("Q", q)?;
    check_symmetric("R", r)?;
    if q.nrows() != n || r.nrows() != m {
        return Err(Error::Dimension(format!("Q is {:?} and R is {:?} for n={n}, m={m}", q.shape(), r.shape())));
    }
    if SymmetricEigen::new(r.clone()).eigenvalues.min() <= 0.0 {
        return Err(Error::Input("R must be positive definite".into()));
    }
    let sq = principal_sqrt(q).map_err(|_| Error::Input("Q must be positive semidefinite".into()))?;
    let sr = principal_sqrt(r)?;
    Ok((sq, sr))
}

/// `[sym(YAᵀ + WᵀBᵀ), Y√Q, Wᵀ√R; ·, −I, 0; ·, 0, −I] ⪯ 0`, scaled by `weight`.
#[allow(clippy::too_many_arguments)]
fn regulator_block(
    name: String,
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    y: &AffineExpr,
    w: &AffineExpr,
    sqrt_q: &DMatrix<f64>,
    sqrt_r: &DMatrix<f64>,
    weight: f64,
) -> Result<LmiBlock> {
    let m11 = y.mul_right(&a.transpose()).add(&w.transpose().mul_right(&b.transpose())).sym().scale(weight);
    let (sq, sr) = (sqrt_q * weight.sqrt(), sqrt_r * weight.sqrt());
    schur_wrap(name, &m11, &[(y, &sq), (w, &sr)])
}

fn positivity(name: String, y: &AffineExpr, eps: f64) -> Result<LmiBlock> {
    let n = y.shape().0;
    LmiBlock::from_expr(name, Sense::Psd, &y.sub(&AffineExpr::constant(DMatrix::identity(n, n) * eps)))
}

fn value_of(expr: &AffineExpr, values: &[f64]) -> DMatrix<f64> {
    expr.eval(values)
}

/// LQR by LMI: maximise `tr Y` over the regulator block.
pub fn synth_lti(a: &DMatrix<f64>, b: &DMatrix<f64>, q: &DMatrix<f64>, r: &DMatrix<f64>, options: &SynthOptions) -> Result<Synthesis> {
    let (n, m) = (a.nrows(), b.ncols());
    if !a.is_square() || b.nrows() != n {
        return Err(Error::Dimension(format!("A is {:?}, B is {:?}", a.shape(), b.shape())));
    }
    let (sq, sr) = check_weights(n, m, q, r)?;
    // A marginal mode leaves the LMI infeasible only by O(ε²), which the
    // solver cannot certify.
    if !crate::oracle::stabilizable(a, b) {
        return Err(Error::Infeasible("(A, B) is not stabilisable".into()));
    }
    let mut builder = ProblemBuilder::new();
    let y = builder.symmetric("Y", n);
    let w = builder.matrix("W", m, n);
    builder.maximize_trace(&y, 1.0);
    builder.constrain(regulator_block("regulator".into(), a, b, &y, &w, &sq, &sr, 1.0)?);
    builder.constrain(positivity("Y>0".into(), &y, options.epsilon_psd)?);
    let (problem, solution, values) = run(builder.build()?, options, "LTI synthesis")?;
    let (yv, wv) = (value_of(&y, &values), value_of(&w, &values));
    let k = Gain::Affine(AffineGain { y0: yv, y1: DMatrix::zeros(n, n), w0: wv, w1: DMatrix::zeros(m, n) }).eval(0.0)?;
    Ok(Synthesis { gain: Gain::Static(StaticGain { k }), objective: solution.objective.unwrap_or(f64::NAN), problem, solution })
}

/// Endpoint-inclusive uniform grid of `count` points over the support.
pub fn uniform_samples(distribution: &ParameterDistribution, count: usize) -> Result<Vec<f64>> {
    let (lo, hi) = distribution
        .support()
        .ok_or_else(|| Error::Config("sampled synthesis needs a bounded parameter range".into()))?;
    if count < 2 {
        return Err(Error::Input(format!("at least 2 samples are required, got {count}")));
    }
    Ok((0..count).map(|k| lo + (hi - lo) * k as f64 / (count - 1) as f64).collect())
}

/// Classical LPV design enforcing the regulator block at each sample.
pub fn synth_lpv_sampled(
    system: &UncertainLinearSystem,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    samples: &[f64],
    options: &SynthOptions,
) -> Result<Synthesis> {
    let (n, m) = (system.n(), system.m());
    let (sq, sr) = check_weights(n, m, q, r)?;
    if samples.len() < 2 {
        return Err(Error::Input(format!("at least 2 samples are required, got {}", samples.len())));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Input("duplicate scheduling samples".into()));
    }
    if let Some(x) = samples.iter().find(|&&x| !system.distribution().contains(x)) {
        return Err(Error::Domain { value: *x, what: "scheduling sample" });
    }

    let mut builder = ProblemBuilder::new();
    let y0 = builder.symmetric("Y0", n);
    let y1 = builder.symmetric("Y1", n);
    let w0 = builder.matrix("W0", m, n);
    let w1 = builder.matrix("W1", m, n);
    builder.maximize_trace(&y0.add(&y1), 1.0);
    for (k, &rho) in samples.iter().enumerate() {
        let y = y0.add(&y1.scale(rho));
        let w = w0.add(&w1.scale(rho));
        builder.constrain(regulator_block(format!("regulator[{k}]"), &system.a(rho), &system.b(rho), &y, &w, &sq, &sr, 1.0)?);
        builder.constrain(positivity(format!("Y>0[{k}]"), &y, options.epsilon_psd)?);
    }
    let (problem, solution, values) = run(builder.build()?, options, "LPV synthesis")?;
    let gain = Gain::Affine(AffineGain {
        y0: value_of(&y0, &values),
        y1: value_of(&y1, &values),
        w0: value_of(&w0, &values),
        w1: value_of(&w1, &values),
    });
    Ok(Synthesis { gain, objective: solution.objective.unwrap_or(f64::NAN), problem, solution })
}

/// Support endpoints plus `extra` evenly spaced interior-inclusive points.
pub fn worst_case_points(distribution: &ParameterDistribution, extra: usize) -> Vec<f64> {
    let Some((lo, hi)) = distribution.support() else {
        return Vec::new();
    };
    let mut pts = vec![lo, hi];
    if extra >= 2 {
        pts.extend((0..extra).map(|k| lo + (hi - lo) * k as f64 / (extra - 1) as f64));
    } else if extra == 1 {
        pts.push(0.5 * (lo + hi));
    }
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    pts
}

/// Appends `sym(A(δ)Y(δ) + B(δ)W(δ)) ⪯ −ε·I` for each point.
pub fn add_worst_case(
    constraints: &mut Vec<LmiBlock>,
    system: &UncertainLinearSystem,
    y_of: impl Fn(f64) -> AffineExpr,
    w_of: impl Fn(f64) -> AffineExpr,
    points: &[f64],
    epsilon: f64,
) -> Result<()> {
    let n = system.n();
    for &delta in points {
        let lyap = y_of(delta)
            .mul_left(&system.a(delta))
            .add(&w_of(delta).mul_left(&system.b(delta)))
            .sym()
            .add(&AffineExpr::constant(DMatrix::identity(n, n) * epsilon));
        constraints.push(LmiBlock::from_expr(format!("worst-case[{delta}]"), Sense::Nsd, &lyap)?);
    }
    Ok(())
}

/// Decision variables of the Galerkin design.
#[derive(Debug, Clone)]
pub struct PcVariables {
    pub psi: PsiOrdering,
    /// One symmetric `n×n` block per ψ entry.
    pub ybar: Vec<AffineExpr>,
    /// `W_k`, `k = 0..=N`.
    pub w: Vec<AffineExpr>,
    /// Scalars spent on the `Ȳ` blocks.
    pub ybar_scalars: usize,
}

impl PcVariables {
    pub fn declare(builder: &mut ProblemBuilder, n: usize, m: usize, order: usize) -> Self {
        let psi = PsiOrdering::new(order);
        let before = builder.variable_count();
        let ybar: Vec<AffineExpr> = psi.pairs().iter().map(|(i, j)| builder.symmetric(&format!("Ybar[{i},{j}]"), n)).collect();
        let ybar_scalars = builder.variable_count() - before;
        let w = (0..=order).map(|k| builder.matrix(&format!("W[{k}]"), m, n)).collect();
        Self { psi, ybar, w, ybar_scalars }
    }

    /// Full `Ȳ` with block `(i, j)` equal to `Ȳ_ij = Ȳ_ji`.
    pub fn ybar_matrix(&self) -> AffineExpr {
        let k = self.psi.order() + 1;
        let grid: Vec<Vec<AffineExpr>> = (0..k)
            .map(|i| (0..k).map(|j| self.ybar[self.psi.position(i, j).expect("in range")].clone()).collect())
            .collect();
        AffineExpr::from_grid(&grid)
    }

    /// `Y(δ) = Σ_p ψ_p(δ) Ȳ_p`.
    pub fn y_at(&self, phi: &[f64]) -> AffineExpr {
        let psi = self.psi.eval(phi);
        let n = self.ybar[0].shape().0;
        self.ybar.iter().zip(psi).fold(AffineExpr::zeros(n, n), |acc, (y, s)| acc.add(&y.scale(s)))
    }

    pub fn w_at(&self, phi: &[f64]) -> AffineExpr {
        let (m, n) = self.w[0].shape();
        self.w.iter().zip(phi).fold(AffineExpr::zeros(m, n), |acc, (w, p)| acc.add(&w.scale(*p)))
    }
}

/// Galerkin-projected regulator design.
pub fn synth_pclpv(
    system: &UncertainLinearSystem,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    basis: &OrthoBasis,
    options: &SynthOptions,
) -> Result<Synthesis> {
    let (n, m) = (system.n(), system.m());
    check_weights(n, m, q, r)?;
    let rule = default_rule(system, basis, options.quadrature_order)?;
    let tensors = build_tensors(system, basis, q, r, &rule)?;
    let k = basis.len();

    let mut builder = ProblemBuilder::new();
    let vars = PcVariables::declare(&mut builder, n, m, basis.degree);
    let v_y = AffineExpr::vstack(&vars.ybar).kron_identity(k);
    let v_w = AffineExpr::vstack(&vars.w).kron_identity(k);
    let m11 = v_y.transpose().mul_right(&tensors.m1).add(&v_w.transpose().mul_right(&tensors.m2)).sym();
    builder.constrain(schur_wrap("galerkin", &m11, &[(&v_y, &tensors.sqrt_m3), (&v_w, &tensors.sqrt_m4)])?);
    let ybar = vars.ybar_matrix();
    builder.constrain(positivity("Ybar>0".into(), &ybar, options.epsilon_psd)?);
    for (i, norm) in basis.norms.iter().enumerate() {
        let p = vars.psi.position(i, i).expect("diagonal pair");
        builder.maximize_trace(&vars.ybar[p], *norm);
    }
    if options.worst_case {
        let mut extra = Vec::new();
        let points = worst_case_points(&basis.distribution, options.wc_points);
        add_worst_case(
            &mut extra,
            system,
            |d| vars.y_at(&basis.eval_unchecked(d)),
            |d| vars.w_at(&basis.eval_unchecked(d)),
            &points,
            options.epsilon_stab,
        )?;
        extra.into_iter().for_each(|b| builder.constrain(b));
    }
    let (problem, solution, values) = run(builder.build()?, options, "Galerkin synthesis")?;
    let ybar_v = value_of(&ybar, &values);
    let gain = Gain::Pc(PcGain {
        basis: basis.clone(),
        ybar: (&ybar_v + ybar_v.transpose()) * 0.5,
        w: vars.w.iter().map(|w| value_of(w, &values)).collect(),
    });
    Ok(Synthesis { gain, objective: solution.objective.unwrap_or(f64::NAN), problem, solution })
}

/// Collocation design: one regulator block per node, weighted by `E[l_i]`.
pub fn synth_sclpv(
    system: &UncertainLinearSystem,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    lagrange: &LagrangeBasis,
    options: &SynthOptions,
) -> Result<Synthesis> {
    let (n, m) = (system.n(), system.m());
    let (sq, sr) = check_weights(n, m, q, r)?;
    if lagrange.distribution != system.distribution() {
        return Err(Error::Input("system and interpolants use different parameter distributions".into()));
    }
    let mut builder = ProblemBuilder::new();
    let mut ys = Vec::with_capacity(lagrange.len());
    let mut ws = Vec::with_capacity(lagrange.len());
    for (i, (&node, &e)) in lagrange.nodes.iter().zip(&lagrange.node_expectations).enumerate() {
        if !(e > 0.0) {
            return Err(Error::Numerical(format!("non-positive interpolant mass {e} at node {node}")));
        }
        let y = builder.symmetric(&format!("Y[{i}]"), n);
        let w = builder.matrix(&format!("W[{i}]"), m, n);
        builder.maximize_trace(&y, e);
        builder.constrain(regulator_block(format!("regulator[{i}] at {node}"), &system.a(node), &system.b(node), &y, &w, &sq, &sr, e)?);
        builder.constrain(positivity(format!("Y>0[{i}]"), &y, options.epsilon_psd)?);
        ys.push(y);
        ws.push(w);
    }
    let y_of = |d: f64| {
        let l = lagrange.eval_unchecked(d);
        ys.iter().zip(&l).fold(AffineExpr::zeros(n, n), |acc, (y, li)| acc.add(&y.scale(*li)))
    };
    if options.worst_case {
        let mut extra = Vec::new();
        let points = worst_case_points(&lagrange.distribution, options.wc_points);
        // Off the nodes the interpolated Y is not positive by construction.
        for &d in &points {
            extra.push(positivity(format!("Y>0[{d}]"), &y_of(d), options.epsilon_psd)?);
        }
        add_worst_case(
            &mut extra,
            system,
            y_of,
            |d| {
                let l = lagrange.eval_unchecked(d);
                ws.iter().zip(&l).fold(AffineExpr::zeros(m, n), |acc, (w, li)| acc.add(&w.scale(*li)))
            },
            &points,
            options.epsilon_stab,
        )?;
        extra.into_iter().for_each(|b| builder.constrain(b));
    }
    let problem = builder.build()?;
    let (problem, solution, values) = match run(problem, options, "collocation synthesis") {
        Err(Error::Infeasible(_)) => return Err(locate_infeasible_node(system, lagrange, &sq, &sr, options)),
        other => other?,
    };
    let gain = Gain::Sc(ScGain {
        lagrange: lagrange.clone(),
        y: ys.iter().map(|y| value_of(y, &values)).collect(),
        w: ws.iter().map(|w| value_of(w, &values)).collect(),
    });
    Ok(Synthesis { gain, objective: solution.objective.unwrap_or(f64::NAN), problem, solution })
}

/// Names the first node whose block is infeasible on its own.
fn locate_infeasible_node(
    system: &UncertainLinearSystem,
    lagrange: &LagrangeBasis,
    sq: &DMatrix<f64>,
    sr: &DMatrix<f64>,
    options: &SynthOptions,
) -> Error {
    for &node in &lagrange.nodes {
        let mut builder = ProblemBuilder::new();
        let y = builder.symmetric("Y", system.n());
        let w = builder.matrix("W", system.m(), system.n());
        let Ok(block) = regulator_block("node".into(), &system.a(node), &system.b(node), &y, &w, sq, sr, 1.0) else {
            continue;
        };
        builder.constrain(block);
        if let Ok(pos) = positivity("Y>0".into(), &y, options.epsilon_psd) {
            builder.constrain(pos);
        }
        if let Ok(p) = builder.build() {
            if sdp::solve(&p, &options.solver).status == SolveStatus::Infeasible {
                return Error::Infeasible(format!("collocation node δ = {node} is infeasible"));
            }
        }
    }
    Error::Infeasible("collocation LMIs are jointly infeasible (worst-case constraints)".into())
}

/// Largest eigenvalue of `E[Φ_n Y G Y Φ_nᵀ]` with
/// `G = sym((A+BK)ᵀP) + Q + KᵀRK`, `P = Y⁻¹`, evaluated by `rule`.
///
/// The congruence by `Y(δ)` turns `G` into the regulator integrand
/// `sym(AY + BW) + YQY + WᵀRW`, so a value `≤ 0` certifies the decay
/// condition on the span of the basis. Static gains carry no `Y`; they use
/// `P(δ)` from the closed-loop Lyapunov equation and report `+∞` wherever
/// `A + BK` is not Hurwitz.
pub fn expected_decay_residual(
    gain: &Gain,
    system: &UncertainLinearSystem,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    basis: &OrthoBasis,
    rule: &QuadratureRule,
) -> Result<f64> {
    let (n, k) = (system.n(), basis.len());
    let mut acc = DMatrix::<f64>::zeros(n * k, n * k);
    for (delta, weight) in rule.iter() {
        let a = system.a(delta);
        let b = system.b(delta);
        let gain_k = gain.eval(delta)?;
        let y = match gain.factors(delta)? {
            Some((y, _)) => y,
            None => {
                let acl = &a + &b * &gain_k;
                if !(spectral_abscissa(&acl) < 0.0) {
                    return Ok(f64::INFINITY);
                }
                let p = crate::oracle::lyapunov(&acl, &(q + gain_k.transpose() * r * &gain_k))?;
                p.try_inverse().ok_or(Error::Singular { delta, condition: f64::INFINITY })?
            }
        };
        let p = y.clone().try_inverse().ok_or(Error::Singular { delta, condition: f64::INFINITY })?;
        let acl = &a + &b * &gain_k;
        let g = acl.transpose() * &p + &p * &acl + q + gain_k.transpose() * r * &gain_k;
        let integrand = &y * g * &y;
        let lift = KronIndex::lift(&basis.eval_unchecked(delta), n);
        acc += &lift * integrand * lift.transpose() * weight;
    }
    Ok(SymmetricEigen::new((&acc + acc.transpose()) * 0.5).eigenvalues.max())
}

/// Maximum real part of the eigenvalues.
pub fn spectral_abscissa(m: &DMatrix<f64>) -> f64 {
    m.clone().complex_eigenvalues().iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max)
}

/// Spectral abscissa of `A(δ) + B(δ)K(δ)`.
pub fn closed_loop_abscissa(gain: &Gain, system: &UncertainLinearSystem, delta: f64) -> Result<f64> {
    Ok(spectral_abscissa(&(system.a(delta) + system.b(delta) * gain.eval(delta)?)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orthopoly::{gauss_rule, make_basis, make_lagrange};
    use crate::oracle::{care, scalar_care};

    fn m1(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    fn unit() -> ParameterDistribution {
        ParameterDistribution::uniform(-1.0, 1.0).unwrap()
    }

    fn toy() -> UncertainLinearSystem {
        UncertainLinearSystem::new(1, 1, unit(), m1, |_| m1(1.0)).unwrap()
    }

    #[test]
    fn lti_scalar_matches_closed_form() {
        let s = synth_lti(&m1(-1.0), &m1(1.0), &m1(1.0), &m1(1.0), &SynthOptions::default()).unwrap();
        let Gain::Static(g) = &s.gain else { panic!() };
        let want = scalar_care(-1.0, 1.0, 1.0, 1.0).unwrap().k[(0, 0)];
        assert!((g.k[(0, 0)] - want).abs() <= 1e-3 * want.abs());
        assert!(s.sdp_residual() <= 1e-6);
    }

    #[test]
    fn lti_double_integrator_matches_riccati() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let b = DMatrix::from_column_slice(2, 1, &[0.0, 1.0]);
        let (q, r) = (DMatrix::identity(2, 2), m1(1.0));
        let s = synth_lti(&a, &b, &q, &r, &SynthOptions::default()).unwrap();
        let Gain::Static(g) = &s.gain else { panic!() };
        let want = care(&a, &b, &q, &r).unwrap().k;
        assert!((&g.k - &want).norm() <= 1e-3 * want.norm());
    }

    #[test]
    fn lti_without_authority_is_infeasible() {
        let err = synth_lti(&m1(0.0), &m1(0.0), &m1(1.0), &m1(1.0), &SynthOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Infeasible(_)), "{err}");
    }

    #[test]
    fn lpv_rejects_duplicates() {
        let err = synth_lpv_sampled(&toy(), &m1(1.0), &m1(1.0), &[0.5, 0.5, 1.0], &SynthOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Input(_)));
    }

    #[test]
    fn lpv_constant_system_contains_lti() {
        let sys = UncertainLinearSystem::constant(m1(0.5), m1(1.0), unit()).unwrap();
        let opts = SynthOptions::default();
        let lti = synth_lti(&m1(0.5), &m1(1.0), &m1(1.0), &m1(1.0), &opts).unwrap();
        let lpv = synth_lpv_sampled(&sys, &m1(1.0), &m1(1.0), &uniform_samples(&unit(), 5).unwrap(), &opts).unwrap();
        assert!(lpv.objective >= lti.objective - 1e-6);
    }

    #[test]
    fn pc_order_zero_equals_lti_for_constant_system() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -2.0, -0.3]);
        let b = DMatrix::from_column_slice(2, 1, &[0.0, 1.0]);
        let (q, r) = (DMatrix::identity(2, 2) * 0.5, m1(2.0));
        let sys = UncertainLinearSystem::constant(a.clone(), b.clone(), unit()).unwrap();
        let opts = SynthOptions { worst_case: false, ..Default::default() };
        let lti = synth_lti(&a, &b, &q, &r, &opts).unwrap();
        let pc = synth_pclpv(&sys, &q, &r, &make_basis(unit(), 0).unwrap(), &opts).unwrap();
        let (kl, kp) = (lti.gain.eval(0.3).unwrap(), pc.gain.eval(0.3).unwrap());
        assert!((kl - kp).amax() < 1e-6);
        // Same program entry by entry.
        assert_eq!(lti.problem.blocks[0].dim, pc.problem.blocks[0].dim);
        for ((_, x), (_, y)) in lti.problem.blocks[0].terms.iter().zip(&pc.problem.blocks[0].terms) {
            for (u, v) in x.entries.iter().zip(&y.entries) {
                assert_eq!((u.0, u.1), (v.0, v.1));
                assert!((u.2 - v.2).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn pc_toy_problem_is_certified() {
        let sys = toy();
        let basis = make_basis(unit(), 3).unwrap();
        let s = synth_pclpv(&sys, &m1(1.0), &m1(1.0), &basis, &SynthOptions::default()).unwrap();
        for k in 0..20 {
            let d = -1.0 + 2.0 * k as f64 / 19.0;
            assert!(d + s.gain.eval(d).unwrap()[(0, 0)] < 0.0);
        }
        let rule = default_rule(&sys, &basis, None).unwrap();
        let res = expected_decay_residual(&s.gain, &sys, &m1(1.0), &m1(1.0), &basis, &rule).unwrap();
        assert!(res <= 1e-6, "decay residual {res}");
        assert!(s.sdp_residual() <= 1e-6);
        // Qualitative agreement with the pointwise regulator at δ = 0.
        let k0 = s.gain.eval(0.0).unwrap()[(0, 0)];
        let lqr = scalar_care(0.0, 1.0, 1.0, 1.0).unwrap().k[(0, 0)];
        assert!((k0 - lqr).abs() <= 0.25 * lqr.abs(), "K(0) = {k0}, LQR {lqr}");
    }

    #[test]
    fn sc_nodes_reproduce_pointwise_lqr() {
        let sys = toy();
        let lag = make_lagrange(&make_basis(unit(), 4).unwrap()).unwrap();
        let opts = SynthOptions { worst_case: false, ..Default::default() };
        let s = synth_sclpv(&sys, &m1(1.0), &m1(1.0), &lag, &opts).unwrap();
        let Gain::Sc(g) = &s.gain else { panic!() };
        for (i, &node) in lag.nodes.iter().enumerate() {
            let k = s.gain.eval(node).unwrap();
            let interp = &g.w[i] * g.y[i].clone().try_inverse().unwrap();
            assert!((&k - &interp).amax() < 1e-12);
            let lqr = scalar_care(node, 1.0, 1.0, 1.0).unwrap().k[(0, 0)];
            assert!((k[(0, 0)] - lqr).abs() < 1e-3 * lqr.abs());
        }
    }

    #[test]
    fn sc_constant_system_has_identical_node_gains() {
        let sys = UncertainLinearSystem::constant(m1(-0.5), m1(2.0), unit()).unwrap();
        let lag = make_lagrange(&make_basis(unit(), 3).unwrap()).unwrap();
        let s = synth_sclpv(&sys, &m1(1.0), &m1(1.0), &lag, &SynthOptions::default()).unwrap();
        // W sits on a flat face of the objective, so agreement is only to solver accuracy.
        let k0 = s.gain.eval(lag.nodes[0]).unwrap();
        for &node in &lag.nodes {
            assert!((s.gain.eval(node).unwrap() - &k0).amax() < 1e-4 * k0.amax());
        }
    }

    #[test]
    fn galerkin_and_collocation_agree_on_toy() {
        let sys = toy();
        let opts = SynthOptions::default();
        let pc = synth_pclpv(&sys, &m1(1.0), &m1(1.0), &make_basis(unit(), 5).unwrap(), &opts).unwrap();
        let sc = synth_sclpv(&sys, &m1(1.0), &m1(1.0), &make_lagrange(&make_basis(unit(), 9).unwrap()).unwrap(), &opts).unwrap();
        let mut worst: f64 = 0.0;
        for k in 0..=90 {
            let d = -0.9 + 0.02 * k as f64;
            let (a, b) = (pc.gain.eval(d).unwrap()[(0, 0)], sc.gain.eval(d).unwrap()[(0, 0)]);
            worst = worst.max((a - b).abs() / b.abs());
        }
        assert!(worst <= 0.05, "sup relative gap {worst}");
    }

    #[test]
    fn worst_case_fixed_variable_reduction() {
        let a = DMatrix::from_row_slice(2, 2, &[-1.0, 0.5, 0.0, -2.0]);
        let sys = UncertainLinearSystem::constant(a.clone(), DMatrix::zeros(2, 1), unit()).unwrap();
        let y = AffineExpr::constant(DMatrix::identity(2, 2));
        let w = AffineExpr::zeros(1, 2);
        let mut blocks = Vec::new();
        add_worst_case(&mut blocks, &sys, |_| y.clone(), |_| w.clone(), &[], 1e-6).unwrap();
        assert!(blocks.is_empty());
        add_worst_case(&mut blocks, &sys, |_| y.clone(), |_| w.clone(), &[-1.0, 1.0], 1e-6).unwrap();
        let sym_max = SymmetricEigen::new(&a + a.transpose()).eigenvalues.max();
        assert!(blocks.iter().all(|b| (b.violation(&[]) - (sym_max + 1e-6)).abs() < 1e-12));
    }

    #[test]
    fn decay_residual_signs() {
        let sys = UncertainLinearSystem::constant(m1(-1.0), m1(1.0), unit()).unwrap();
        let basis = make_basis(unit(), 0).unwrap();
        let rule = gauss_rule(unit(), 1).unwrap();
        let ric = scalar_care(-1.0, 1.0, 1.0, 1.0).unwrap();
        let good = Gain::Static(StaticGain { k: ric.k.clone() });
        let r0 = expected_decay_residual(&good, &sys, &m1(1.0), &m1(1.0), &basis, &rule).unwrap();
        assert!(r0.abs() < 1e-6);
        // Riccati Y = P⁻¹ through the factor path.
        let y = ric.p.clone().try_inverse().unwrap();
        let fac = Gain::Affine(AffineGain { w0: &ric.k * &y, y0: y, y1: m1(0.0), w1: m1(0.0) });
        assert!(expected_decay_residual(&fac, &sys, &m1(1.0), &m1(1.0), &basis, &rule).unwrap().abs() < 1e-6);
        let bad = Gain::Affine(AffineGain { y0: m1(1.0), y1: m1(0.0), w0: -&ric.k, w1: m1(0.0) });
        assert!(expected_decay_residual(&bad, &sys, &m1(1.0), &m1(1.0), &basis, &rule).unwrap() > 0.0);
    }

    #[test]
    fn corollary1_counts() {
        for n in 1..=3 {
            for order in 0..=5 {
                let mut b = ProblemBuilder::new();
                let v = PcVariables::declare(&mut b, n, 1, order);
                assert_eq!(v.ybar_scalars, n * (n + 1) * (order + 1) * (order + 2) / 4);
            }
        }
    }

    #[test]
    fn gain_eval_rejects_singular_y() {
        let g = Gain::Affine(AffineGain { y0: m1(1.0), y1: m1(1.0), w0: m1(1.0), w1: m1(0.0) });
        assert!(matches!(g.eval(-1.0), Err(Error::Singular { .. })));
        assert!(g.eval(0.0).is_ok());
    }
}
