//! Closed-loop simulation of the nonlinear missile and Monte Carlo checks of
//! the Galerkin propagation.

use std::fmt::Write as _;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::galerkin::project_dynamics;
use crate::orthopoly::{gauss_rule, OrthoBasis, ParameterDistribution, QuadratureRule};
use crate::par;
use crate::plant::{CostWeights, MissileConfig, UncertainLinearSystem};
use crate::synthesis::Gain;

/// State norm beyond which a trajectory is declared divergent.
pub const BLOW_UP: f64 = 1e8;
/// `‖x(T)‖ ≤ CONVERGED_RATIO·‖x0‖` counts as regulated to zero.
pub const CONVERGED_RATIO: f64 = 1e-2;

/// Sampled closed-loop trajectory. Angles in degrees, rates in deg/s.
#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub t: Vec<f64>,
    pub x: Vec<[f64; 2]>,
    pub u: Vec<f64>,
    /// Cost accumulated up to each grid point.
    pub running_cost: Vec<f64>,
    /// Trapezoidal `∫ xᵀQx + uᵀRu dt` over the simulated horizon.
    pub j: f64,
    /// The state left the `BLOW_UP` ball and integration stopped.
    pub diverged: bool,
    /// The final state is within `CONVERGED_RATIO` of the origin relative to `x0`.
    pub converged: bool,
}

fn stage_cost(weights: &CostWeights, x: [f64; 2], u: f64) -> f64 {
    let q = &weights.q;
    let xqx = q[(0, 0)] * x[0] * x[0] + (q[(0, 1)] + q[(1, 0)]) * x[0] * x[1] + q[(1, 1)] * x[1] * x[1];
    xqx + weights.r[(0, 0)] * u * u
}

/// Integrates the nonlinear missile under `u = K(α)x` with fixed-step RK4.
///
/// The gain is scheduled on `α` clamped into `range`; the dynamics use the
/// true `α`. The horizon is split into `ceil(t_final/dt)` equal steps.
pub fn simulate_closed_loop(
    config: &MissileConfig,
    gain: &Gain,
    x0: [f64; 2],
    t_final: f64,
    dt: f64,
    weights: &CostWeights,
    range: (f64, f64),
) -> Result<SimResult> {
    if !(dt > 0.0) || !dt.is_finite() || !(t_final >= 0.0) || !t_final.is_finite() {
        return Err(Error::Input(format!("need dt > 0 and t_final >= 0, got dt = {dt}, t_final = {t_final}")));
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::Input("x0 must be finite".into()));
    }
    if gain.dims() != (2, 1) {
        let (n, m) = gain.dims();
        return Err(Error::Dimension(format!("missile needs a 1x2 gain, got {m}x{n}")));
    }
    if weights.q.shape() != (2, 2) || weights.r.shape() != (1, 1) {
        return Err(Error::Dimension("missile cost needs 2x2 Q and 1x1 R".into()));
    }
    let schedule = ParameterDistribution::uniform(range.0, range.1)?;
    let control = |x: [f64; 2]| -> Result<f64> {
        let k = gain.eval(schedule.clamp(x[0]))?;
        Ok(k[(0, 0)] * x[0] + k[(0, 1)] * x[1])
    };
    let rhs = |x: [f64; 2]| -> Result<[f64; 2]> { Ok(config.dynamics(x[0], x[1], control(x)?)) };

    let steps = (t_final / dt).ceil() as usize;
    let h = if steps == 0 { 0.0 } else { t_final / steps as f64 };
    let mut out = SimResult {
        t: Vec::with_capacity(steps + 1),
        x: Vec::with_capacity(steps + 1),
        u: Vec::with_capacity(steps + 1),
        running_cost: Vec::with_capacity(steps + 1),
        j: 0.0,
        diverged: false,
        converged: false,
    };
    let mut x = x0;
    let mut u = control(x)?;
    let mut cost = stage_cost(weights, x, u);
    out.t.push(0.0);
    out.x.push(x);
    out.u.push(u);
    out.running_cost.push(0.0);
    for step in 1..=steps {
        let k1 = rhs(x)?;
        let k2 = rhs([x[0] + 0.5 * h * k1[0], x[1] + 0.5 * h * k1[1]])?;
        let k3 = rhs([x[0] + 0.5 * h * k2[0], x[1] + 0.5 * h * k2[1]])?;
        let k4 = rhs([x[0] + h * k3[0], x[1] + h * k3[1]])?;
        let next = [
            x[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
            x[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
        ];
        let norm = next[0].hypot(next[1]);
        if !(norm <= BLOW_UP) {
            out.diverged = true;
            break;
        }
        x = next;
        u = control(x)?;
        let c = stage_cost(weights, x, u);
        out.j += 0.5 * h * (cost + c);
        cost = c;
        out.t.push(if step == steps { t_final } else { step as f64 * h });
        out.x.push(x);
        out.u.push(u);
        out.running_cost.push(out.j);
    }
    let last = out.x.last().copied().unwrap_or(x0);
    out.converged = !out.diverged && last[0].hypot(last[1]) <= CONVERGED_RATIO * x0[0].hypot(x0[1]);
    Ok(out)
}

/// `J`, or `+∞` once the trajectory has blown up.
pub fn cost_to_go(result: &SimResult) -> f64 {
    if result.diverged {
        f64::INFINITY
    } else {
        result.j
    }
}

/// Trajectory as CSV with twelve significant digits.
pub fn trajectory_csv(result: &SimResult) -> String {
    let mut s = String::from("t,alpha_deg,q_degps,deltafin_deg,running_cost\n");
    for i in 0..result.t.len() {
        let _ = writeln!(
            s,
            "{:.11e},{:.11e},{:.11e},{:.11e},{:.11e}",
            result.t[i], result.x[i][0], result.x[i][1], result.u[i], result.running_cost[i]
        );
    }
    s
}

/// Moments of `x(t, δ)` from three routes.
#[derive(Debug, Clone, Serialize)]
pub struct GalerkinReport {
    pub order: usize,
    pub samples: usize,
    pub mean_pc: Vec<f64>,
    pub var_pc: Vec<f64>,
    pub mean_mc: Vec<f64>,
    pub var_mc: Vec<f64>,
    /// High-order quadrature of the exact solution.
    pub mean_ref: Vec<f64>,
    pub var_ref: Vec<f64>,
    /// Max relative error of the Galerkin moments against Monte Carlo.
    pub mean_err_mc: f64,
    pub var_err_mc: f64,
    /// Max relative error of the Galerkin moments against the quadrature reference.
    pub mean_err_ref: f64,
    pub var_err_ref: f64,
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs() / y.abs().max(1e-300)).fold(0.0, f64::max)
}

fn moments(values: &[DVector<f64>], weights: impl Fn(usize) -> f64) -> (Vec<f64>, Vec<f64>) {
    let n = values[0].len();
    let mut mean = DVector::zeros(n);
    for (k, v) in values.iter().enumerate() {
        mean += v * weights(k);
    }
    let mut var = DVector::zeros(n);
    for (k, v) in values.iter().enumerate() {
        var += (v - &mean).map(|d| d * d) * weights(k);
    }
    (mean.as_slice().to_vec(), var.as_slice().to_vec())
}

/// Expansion coefficients of a deterministic initial state: only mode 0.
pub fn pc_initial_state(x0: &[f64], terms: usize) -> DVector<f64> {
    let mut z = DVector::zeros(x0.len() * terms);
    z.rows_mut(0, x0.len()).copy_from_slice(x0);
    z
}

fn propagate(system: &UncertainLinearSystem, x0: &DVector<f64>, t: f64, delta: f64) -> DVector<f64> {
    (system.a(delta) * t).exp() * x0
}

/// Propagates the Galerkin system `ẋ_pc = A_pc x_pc` from `[x0; 0; …; 0]`
/// and compares its mean and variance at `t_final` with `n_mc` Monte Carlo
/// draws of `δ` and with a 64-node Gauss reference.
pub fn validate_galerkin(
    system: &UncertainLinearSystem,
    basis: &OrthoBasis,
    x0: &[f64],
    t_final: f64,
    n_mc: usize,
    seed: u64,
) -> Result<GalerkinReport> {
    let n = system.n();
    if x0.len() != n {
        return Err(Error::Dimension(format!("x0 has {} entries, system has {n} states", x0.len())));
    }
    if n_mc < 2 {
        return Err(Error::Input("Monte Carlo needs at least 2 samples".into()));
    }
    let dist = system.distribution();
    let k = basis.len();
    let fine = gauss_rule(dist, (2 * k + 10).max(20))?;
    let a_pc = project_dynamics(system, basis, &fine)?;
    let z = (a_pc * t_final).exp() * pc_initial_state(x0, k);
    let mean_pc: Vec<f64> = z.rows(0, n).iter().copied().collect();
    let var_pc: Vec<f64> = (0..n).map(|r| (1..k).map(|i| basis.norms[i] * z[i * n + r].powi(2)).sum()).collect();

    let x0 = DVector::from_column_slice(x0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let deltas: Vec<f64> = (0..n_mc).map(|_| dist.sample(&mut rng)).collect();
    let draws = par::map(&deltas, |&d| propagate(system, &x0, t_final, d));
    let w = 1.0 / n_mc as f64;
    let (mean_mc, var_mc) = moments(&draws, |_| w);

    let reference: QuadratureRule = gauss_rule(dist, 64)?;
    let exact = par::map(&reference.nodes, |&d| propagate(system, &x0, t_final, d));
    let (mean_ref, var_ref) = moments(&exact, |i| reference.weights[i]);

    Ok(GalerkinReport {
        order: basis.degree,
        samples: n_mc,
        mean_err_mc: rel_err(&mean_pc, &mean_mc),
        var_err_mc: rel_err(&var_pc, &var_mc),
        mean_err_ref: rel_err(&mean_pc, &mean_ref),
        var_err_ref: rel_err(&var_pc, &var_ref),
        mean_pc,
        var_pc,
        mean_mc,
        var_mc,
        mean_ref,
        var_ref,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use crate::orthopoly::make_basis;
    use crate::plant::linearize_origin;
    use crate::synthesis::{synth_lti, StaticGain, SynthOptions};

    fn weights() -> CostWeights {
        CostWeights::new(DMatrix::from_diagonal_element(2, 2, 0.2), DMatrix::identity(1, 1)).unwrap()
    }

    fn lti_gain() -> Gain {
        let cfg = MissileConfig::reference();
        let (a, b) = linearize_origin(&cfg);
        let w = weights();
        synth_lti(&a, &b, &w.q, &w.r, &SynthOptions::default()).unwrap().gain
    }

    const RANGE: (f64, f64) = (-20.0, 20.0);

    #[test]
    fn origin_stays_put() {
        let r = simulate_closed_loop(&MissileConfig::reference(), &lti_gain(), [0.0, 0.0], 2.0, 1e-2, &weights(), RANGE)
            .unwrap();
        assert_eq!(r.j, 0.0);
        assert!(r.x.iter().all(|x| *x == [0.0, 0.0]) && r.u.iter().all(|u| *u == 0.0));
        assert_eq!(cost_to_go(&r), 0.0);
        assert!(r.converged);
    }

    #[test]
    fn constant_state_cost_closed_form() {
        // With no dynamics and no feedback the state is frozen.
        let cfg = MissileConfig { k_alpha: 0.0, k_q: 0.0, ..MissileConfig::reference() };
        let zero = Gain::Static(StaticGain { k: DMatrix::zeros(1, 2) });
        let x = [3.0, 0.0];
        let t = 5.0;
        let r = simulate_closed_loop(&cfg, &zero, [3.0, 0.0], t, 1e-2, &weights(), RANGE).unwrap();
        let xqx = 0.2 * x[0] * x[0];
        assert!((r.j - t * xqx).abs() < 1e-12 * t * xqx);
        assert!(r.t.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(*r.t.last().unwrap(), t);
    }

    #[test]
    fn step_count_rounds_up() {
        let r = simulate_closed_loop(&MissileConfig::reference(), &lti_gain(), [1.0, 0.0], 0.01, 0.003, &weights(), RANGE).unwrap();
        assert_eq!(r.t.len(), 5);
        assert!((r.t[1] - 0.0025).abs() < 1e-15);
    }

    #[test]
    fn rk4_is_fourth_order() {
        let cfg = MissileConfig::reference();
        let g = lti_gain();
        let run = |dt: f64| simulate_closed_loop(&cfg, &g, [10.0, 0.0], 1.0, dt, &weights(), RANGE).unwrap();
        let dt = 0.02;
        let reference = run(dt / 8.0);
        let err = |r: &SimResult| {
            let a = r.x.last().unwrap();
            let b = reference.x.last().unwrap();
            (a[0] - b[0]).hypot(a[1] - b[1])
        };
        let ratio = err(&run(dt)) / err(&run(dt / 2.0));
        assert!((12.0..=20.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn cost_is_additive_over_restarts() {
        let cfg = MissileConfig::reference();
        let g = lti_gain();
        let (t, dt) = (4.0, 1e-3);
        let full = simulate_closed_loop(&cfg, &g, [10.0, -5.0], t, dt, &weights(), RANGE).unwrap();
        let first = simulate_closed_loop(&cfg, &g, [10.0, -5.0], t / 2.0, dt, &weights(), RANGE).unwrap();
        let second = simulate_closed_loop(&cfg, &g, *first.x.last().unwrap(), t / 2.0, dt, &weights(), RANGE).unwrap();
        assert!((full.j - (first.j + second.j)).abs() <= 1e-9 * full.j);
    }

    #[test]
    fn lti_cost_is_step_converged() {
        let cfg = MissileConfig::reference();
        let g = lti_gain();
        let j = |dt: f64| simulate_closed_loop(&cfg, &g, [10.0, 0.0], 20.0, dt, &weights(), RANGE).unwrap().j;
        let (a, b) = (j(1e-3), j(5e-4));
        assert!((a - b).abs() < 1e-4 * b, "{a} vs {b}");
    }

    #[test]
    fn blow_up_is_flagged_not_raised() {
        let cfg = MissileConfig::reference();
        let bad = Gain::Static(StaticGain { k: DMatrix::from_row_slice(1, 2, &[-100.0, -100.0]) });
        let r = simulate_closed_loop(&cfg, &bad, [1.0, 0.0], 20.0, 1e-3, &weights(), RANGE).unwrap();
        assert!(r.diverged && !r.converged);
        assert_eq!(cost_to_go(&r), f64::INFINITY);
        assert!(r.j.is_finite());
    }

    #[test]
    fn rejects_wrong_gain_shape() {
        let g = Gain::Static(StaticGain { k: DMatrix::zeros(1, 3) });
        assert!(matches!(
            simulate_closed_loop(&MissileConfig::reference(), &g, [1.0, 0.0], 1.0, 1e-2, &weights(), RANGE),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn csv_layout() {
        let r = simulate_closed_loop(&MissileConfig::reference(), &lti_gain(), [1.0, 0.0], 0.02, 1e-2, &weights(), RANGE)
            .unwrap();
        let csv = trajectory_csv(&r);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "t,alpha_deg,q_degps,deltafin_deg,running_cost");
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[1].split(',').next().unwrap(), "0.00000000000e0");
        assert!(lines[2].starts_with("1.00000000000e-2,"));
    }

    fn scalar_decay() -> UncertainLinearSystem {
        let dist = ParameterDistribution::uniform(-1.0, 1.0).unwrap();
        UncertainLinearSystem::new(
            1,
            1,
            dist,
            |d| DMatrix::from_element(1, 1, -(1.0 + 0.5 * d)),
            |_| DMatrix::zeros(1, 1),
        )
        .unwrap()
    }

    #[test]
    fn deterministic_start_is_mode_zero() {
        let z = pc_initial_state(&[2.0, -1.0], 4);
        assert_eq!(z.rows(0, 2).as_slice(), &[2.0, -1.0]);
        assert!(z.rows(2, 6).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn galerkin_constant_system_has_no_variance() {
        let dist = ParameterDistribution::uniform(-1.0, 1.0).unwrap();
        let a = DMatrix::from_row_slice(2, 2, &[-1.0, 2.0, 0.0, -3.0]);
        let sys = UncertainLinearSystem::constant(a.clone(), DMatrix::zeros(2, 1), dist).unwrap();
        let rep = validate_galerkin(&sys, &make_basis(dist, 3).unwrap(), &[1.0, 1.0], 1.0, 100, 0).unwrap();
        assert!(rep.var_pc.iter().all(|v| v.abs() < 1e-28));
        let x = (a * 1.0).exp() * DVector::from_column_slice(&[1.0, 1.0]);
        assert!((DVector::from_vec(rep.mean_pc) - x).amax() < 1e-12);
    }

    #[test]
    fn galerkin_matches_monte_carlo_on_scalar_decay() {
        let sys = scalar_decay();
        let rep = validate_galerkin(&sys, &make_basis(sys.distribution(), 3).unwrap(), &[1.0], 1.0, 100_000, 0).unwrap();
        assert!(rep.mean_err_mc < 0.01 && rep.var_err_mc < 0.01, "{rep:?}");
        // Closed form of the mean: E[e^{-(1+δ/2)}] = e^{-1}·(e^{1/2} − e^{-1/2}).
        let mean = (-1f64).exp() * (0.5f64.exp() - (-0.5f64).exp());
        assert!((rep.mean_ref[0] - mean).abs() < 1e-14);
    }

    #[test]
    fn variance_error_shrinks_with_order() {
        let sys = scalar_decay();
        let errs: Vec<f64> = (1..=5)
            .map(|n| validate_galerkin(&sys, &make_basis(sys.distribution(), n).unwrap(), &[1.0], 1.0, 2, 0).unwrap().var_err_ref)
            .collect();
        assert!(errs.windows(2).all(|w| w[1] < w[0]), "{errs:?}");
    }

    #[test]
    fn monte_carlo_is_seeded() {
        let sys = scalar_decay();
        let basis = make_basis(sys.distribution(), 2).unwrap();
        let a = validate_galerkin(&sys, &basis, &[1.0], 1.0, 1000, 7).unwrap();
        let b = validate_galerkin(&sys, &basis, &[1.0], 1.0, 1000, 7).unwrap();
        assert_eq!(a.mean_mc, b.mean_mc);
        assert_eq!(a.var_mc, b.var_mc);
    }
}
