//! Controller comparison: synthesise, certify and simulate each table row.

use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::config::{Config, Method};
use crate::error::{Error, Result};
use crate::galerkin::default_rule;
use crate::orthopoly::{gauss_rule, make_basis, make_lagrange, QuadratureRule};
use crate::par;
use crate::plant::linearize_origin;
use crate::simulate::{simulate_closed_loop, SimResult};
use crate::synthesis::{
    closed_loop_abscissa, expected_decay_residual, synth_lpv_sampled, synth_lti, synth_pclpv, synth_sclpv,
    uniform_samples, worst_case_points, Gain, Synthesis,
};

/// Accepted LMI violation at the solver's returned point.
pub const SDP_TOLERANCE: f64 = 1e-6;
/// Accepted expected-decay residual.
pub const DECAY_TOLERANCE: f64 = 1e-5;

/// One controller design: method plus its order (pclpv, sclpv) or sample count (lpv).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowSpec {
    pub method: Method,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub order: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub samples: Option<usize>,
}

impl RowSpec {
    pub fn lti() -> Self {
        Self { method: Method::Lti, order: None, samples: None }
    }

    pub fn lpv(samples: usize) -> Self {
        Self { method: Method::Lpv, order: None, samples: Some(samples) }
    }

    pub fn pclpv(order: usize) -> Self {
        Self { method: Method::Pclpv, order: Some(order), samples: None }
    }

    pub fn sclpv(order: usize) -> Self {
        Self { method: Method::Sclpv, order: Some(order), samples: None }
    }

    /// The row for `method` with the order or sample count taken from the config.
    pub fn from_config(config: &Config, method: Method) -> Self {
        match method {
            Method::Lti => Self::lti(),
            Method::Lpv => Self::lpv(config.synthesis.samples),
            Method::Pclpv => Self::pclpv(config.synthesis.order),
            Method::Sclpv => Self::sclpv(config.synthesis.order),
        }
    }

    pub fn label(&self) -> String {
        match (self.method, self.order, self.samples) {
            (Method::Lti, ..) => "LTI".into(),
            (Method::Lpv, _, Some(k)) => format!("LPV {k} samples"),
            (Method::Pclpv, Some(n), _) => format!("pcLPV N={n}"),
            (Method::Sclpv, Some(n), _) => format!("scLPV N={n} ({} nodes)", n + 1),
            (m, ..) => m.to_string(),
        }
    }

    fn order(&self) -> Result<usize> {
        self.order.ok_or_else(|| Error::Config(format!("{} needs an expansion order", self.method)))
    }

    fn samples(&self) -> Result<usize> {
        self.samples.ok_or_else(|| Error::Config("lpv needs a sample count".into()))
    }
}

/// The comparison rows: LTI; LPV 2/20/50/100; pcLPV 3/4/5; scLPV 5/9/12.
pub fn standard_rows() -> Vec<RowSpec> {
    let mut rows = vec![RowSpec::lti()];
    rows.extend([2, 20, 50, 100].map(RowSpec::lpv));
    rows.extend([3, 4, 5].map(RowSpec::pclpv));
    rows.extend([5, 9, 12].map(RowSpec::sclpv));
    rows
}

/// Runs the synthesis described by `spec` on the configured missile.
pub fn synthesize(config: &Config, spec: &RowSpec) -> Result<Synthesis> {
    let system = config.system()?;
    let w = config.weights()?;
    let options = config.options();
    match spec.method {
        Method::Lti => {
            let (a, b) = linearize_origin(&config.model);
            synth_lti(&a, &b, &w.q, &w.r, &options)
        }
        Method::Lpv => {
            let samples = uniform_samples(&system.distribution(), spec.samples()?)?;
            synth_lpv_sampled(&system, &w.q, &w.r, &samples, &options)
        }
        Method::Pclpv => synth_pclpv(&system, &w.q, &w.r, &make_basis(system.distribution(), spec.order()?)?, &options),
        Method::Sclpv => {
            let lagrange = make_lagrange(&make_basis(system.distribution(), spec.order()?)?)?;
            synth_sclpv(&system, &w.q, &w.r, &lagrange, &options)
        }
    }
}

/// Post-solve checks of a synthesised gain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certification {
    pub sdp_residual: f64,
    /// `None` when the residual is unbounded (closed loop not Hurwitz).
    pub decay_residual: Option<f64>,
    /// `(δ, spectral abscissa of A(δ) + B(δ)K(δ))` at each worst-case point.
    pub abscissae: Vec<(f64, f64)>,
    pub certified: bool,
}

/// Certifies `gain` against the model it was designed on: the trim point
/// for LTI, the sample set for LPV, the projection rule for pcLPV and the
/// collocation nodes for scLPV.
pub fn certify(config: &Config, spec: &RowSpec, synthesis: &Synthesis) -> Result<Certification> {
    let system = config.system()?;
    let dist = system.distribution();
    let w = config.weights()?;
    let (basis, rule): (_, QuadratureRule) = match spec.method {
        Method::Lti => (make_basis(dist, 0)?, QuadratureRule::equal_weights(&[0.0])?),
        Method::Lpv => (make_basis(dist, 0)?, QuadratureRule::equal_weights(&uniform_samples(&dist, spec.samples()?)?)?),
        Method::Pclpv => {
            let basis = make_basis(dist, spec.order()?)?;
            let rule = default_rule(&system, &basis, config.synthesis.quadrature_order)?;
            (basis, rule)
        }
        Method::Sclpv => {
            let basis = make_basis(dist, spec.order()?)?;
            let rule = gauss_rule(dist, basis.len())?;
            (basis, rule)
        }
    };
    let decay = expected_decay_residual(&synthesis.gain, &system, &w.q, &w.r, &basis, &rule)?;
    let abscissae = worst_case_points(&dist, config.synthesis.wc_points)
        .into_iter()
        .map(|d| closed_loop_abscissa(&synthesis.gain, &system, d).map(|a| (d, a)))
        .collect::<Result<Vec<_>>>()?;
    let sdp_residual = synthesis.sdp_residual();
    let certified = sdp_residual <= SDP_TOLERANCE && decay <= DECAY_TOLERANCE && abscissae.iter().all(|(_, a)| *a < 0.0);
    Ok(Certification { sdp_residual, decay_residual: decay.is_finite().then_some(decay), abscissae, certified })
}

/// Closed-loop outcome from one initial condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSummary {
    pub x0: [f64; 2],
    /// Cost accumulated until the end of the horizon or until blow-up.
    pub j: f64,
    pub diverged: bool,
    pub converged: bool,
}

impl From<(&[f64; 2], &SimResult)> for SimSummary {
    fn from((x0, r): (&[f64; 2], &SimResult)) -> Self {
        Self { x0: *x0, j: r.j, diverged: r.diverged, converged: r.converged }
    }
}

/// Outcome class of a row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RowStatus {
    Ok,
    Infeasible,
    Numerical,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowRecord {
    pub spec: RowSpec,
    pub label: String,
    pub status: RowStatus,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub message: Option<String>,
    pub variables: usize,
    pub solve_seconds: f64,
    pub objective: Option<f64>,
    pub certification: Option<Certification>,
    /// One entry per initial condition, `x0` first.
    pub simulations: Vec<SimSummary>,
    #[serde(skip)]
    pub gain: Option<Gain>,
}

impl RowRecord {
    /// Cost from the primary initial condition.
    pub fn cost(&self) -> Option<f64> {
        self.simulations.first().map(|s| s.j)
    }

    /// Whether any trajectory failed to regulate to the origin.
    pub fn divergent(&self) -> bool {
        self.simulations.iter().any(|s| s.diverged || !s.converged)
    }
}

fn failure(spec: RowSpec, status: RowStatus, err: &Error, seconds: f64) -> RowRecord {
    RowRecord {
        label: spec.label(),
        spec,
        status,
        message: Some(err.to_string()),
        variables: 0,
        solve_seconds: seconds,
        objective: None,
        certification: None,
        simulations: Vec::new(),
        gain: None,
    }
}

/// Synthesises, certifies and simulates one row. Failures are recorded in
/// the row rather than returned.
pub fn run_row(config: &Config, spec: RowSpec) -> RowRecord {
    let started = Instant::now();
    let synthesis = synthesize(config, &spec);
    let seconds = started.elapsed().as_secs_f64();
    let synthesis = match synthesis {
        Ok(s) => s,
        Err(e @ Error::Infeasible(_)) => return failure(spec, RowStatus::Infeasible, &e, seconds),
        Err(e @ Error::Numerical(_)) => return failure(spec, RowStatus::Numerical, &e, seconds),
        Err(e) => return failure(spec, RowStatus::Error, &e, seconds),
    };
    let mut record = RowRecord {
        label: spec.label(),
        spec,
        status: RowStatus::Ok,
        message: None,
        variables: synthesis.variable_count(),
        solve_seconds: seconds,
        objective: Some(synthesis.objective),
        certification: None,
        simulations: Vec::new(),
        gain: None,
    };
    match certify(config, &spec, &synthesis) {
        Ok(c) => record.certification = Some(c),
        Err(e) => record.message = Some(format!("certification failed: {e}")),
    }
    let run = || -> Result<Vec<SimSummary>> {
        let w = config.weights()?;
        let sim = &config.simulation;
        config
            .initial_conditions()
            .iter()
            .map(|x0| {
                let r = simulate_closed_loop(&config.model, &synthesis.gain, *x0, sim.t_final, sim.dt, &w, config.range())?;
                Ok(SimSummary::from((x0, &r)))
            })
            .collect()
    };
    match run() {
        Ok(s) => record.simulations = s,
        Err(e) => {
            record.status = RowStatus::Error;
            record.message = Some(format!("simulation failed: {e}"));
        }
    }
    record.gain = Some(synthesis.gain);
    record
}

/// Everything needed to reproduce a benchmark run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub tool_version: String,
    pub config: Config,
    pub rows: Vec<RowSpec>,
    pub initial_conditions: Vec<[f64; 2]>,
    /// Collocation orders count polynomial degree `N`, i.e. `N+1` nodes.
    pub collocation_convention: String,
    pub threads: usize,
    pub records: Vec<RowRecord>,
}

impl Manifest {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| Error::Input(format!("manifest: {e}")))
    }
}

/// Runs `rows` concurrently and collects the records in input order.
pub fn run_benchmark(config: &Config, rows: &[RowSpec]) -> Manifest {
    let records = par::map(rows, |spec| run_row(config, *spec));
    Manifest {
        tool_version: env!("CARGO_PKG_VERSION").into(),
        config: config.clone(),
        rows: rows.to_vec(),
        initial_conditions: config.initial_conditions(),
        collocation_convention: "order N = polynomial degree, N+1 Gauss nodes".into(),
        threads: current_threads(),
        records,
    }
}

/// Re-runs a manifest's rows with its embedded configuration.
pub fn rerun(manifest: &Manifest) -> Manifest {
    run_benchmark(&manifest.config, &manifest.rows)
}

fn current_threads() -> usize {
    #[cfg(feature = "parallel")]
    {
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        1
    }
}

fn opt(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.digits$}"))
}

fn notes(r: &RowRecord) -> String {
    let mut notes = Vec::new();
    if r.status != RowStatus::Ok {
        notes.push(format!("{:?}", r.status).to_lowercase());
    }
    if r.simulations.iter().any(|s| s.diverged) {
        notes.push("diverged".to_owned());
    } else if r.divergent() {
        notes.push("states do not converge".to_owned());
    }
    if r.certification.as_ref().is_some_and(|c| !c.certified) {
        notes.push("not certified".to_owned());
    }
    notes.join("; ")
}

/// Machine-readable table: one line per row, costs for every initial condition.
pub fn table_csv(manifest: &Manifest) -> String {
    let mut s = String::from("controller,method,order,samples,status,variables,solve_seconds,objective");
    for i in 0..manifest.initial_conditions.len() {
        let _ = write!(s, ",cost_{i},diverged_{i},converged_{i}");
    }
    s.push_str(",sdp_residual,decay_residual,certified\n");
    for r in &manifest.records {
        let _ = write!(
            s,
            "{},{},{},{},{},{},{:.6},{}",
            r.label,
            r.spec.method,
            r.spec.order.map_or(String::new(), |v| v.to_string()),
            r.spec.samples.map_or(String::new(), |v| v.to_string()),
            format!("{:?}", r.status).to_lowercase(),
            r.variables,
            r.solve_seconds,
            r.objective.map_or(String::new(), |v| format!("{v:.12e}")),
        );
        for i in 0..manifest.initial_conditions.len() {
            match r.simulations.get(i) {
                Some(sim) => {
                    let _ = write!(s, ",{:.12e},{},{}", sim.j, sim.diverged, sim.converged);
                }
                None => s.push_str(",,,"),
            }
        }
        match &r.certification {
            Some(c) => {
                let _ = writeln!(
                    s,
                    ",{:.3e},{},{}",
                    c.sdp_residual,
                    c.decay_residual.map_or("inf".into(), |v| format!("{v:.3e}")),
                    c.certified
                );
            }
            None => s.push_str(",,,\n"),
        }
    }
    s
}

/// Aligned plain-text table of the primary initial condition.
pub fn table_text(manifest: &Manifest) -> String {
    let x0 = manifest.initial_conditions[0];
    let header = ["Controller", "Variables", "Time (s)", "Objective", "Cost J", "Notes"];
    let rows: Vec<[String; 6]> = manifest
        .records
        .iter()
        .map(|r| {
            [
                r.label.clone(),
                r.variables.to_string(),
                format!("{:.3}", r.solve_seconds),
                opt(r.objective, 4),
                opt(r.cost(), 4),
                notes(r),
            ]
        })
        .collect();
    let widths: Vec<usize> =
        (0..6).map(|c| rows.iter().map(|r| r[c].chars().count()).chain([header[c].len()]).max().unwrap_or(0)).collect();
    let line = |cells: [&str; 6]| {
        let mut s = String::new();
        for (c, cell) in cells.iter().enumerate() {
            let pad = widths[c] - cell.chars().count();
            if c == 0 || c == 5 {
                s.push_str(cell);
                s.push_str(&" ".repeat(pad));
            } else {
                s.push_str(&" ".repeat(pad));
                s.push_str(cell);
            }
            s.push_str("  ");
        }
        s.trim_end().to_owned() + "\n"
    };
    let mut s = format!("x0 = [{}, {}] (alpha deg, q deg/s), horizon {} s\n", x0[0], x0[1], manifest.config.simulation.t_final);
    s.push_str(&line(header));
    let dashes: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    s.push_str(&line(std::array::from_fn(|c| dashes[c].as_str())));
    for r in &rows {
        s.push_str(&line([&r[0], &r[1], &r[2], &r[3], &r[4], &r[5]]));
    }
    s
}
