//! Self-checks of the numerical building blocks, runnable from the CLI.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::galerkin::kron_identity_residual;
use crate::oracle::{care, scalar_care};
use crate::orthopoly::{expect, gauss_rule, lemma1_check, make_basis, make_lagrange, Affine, ParameterDistribution};
use crate::plant::UncertainLinearSystem;
use crate::sdp::ProblemBuilder;
use crate::simulate::validate_galerkin;
use crate::synthesis::{synth_lti, PcVariables, SynthOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Orthogonality,
    Lemma1,
    Prop1,
    Corollary1,
    Riccati,
    GalerkinMc,
}

impl Suite {
    pub const ALL: [Suite; 6] =
        [Suite::Orthogonality, Suite::Lemma1, Suite::Prop1, Suite::Corollary1, Suite::Riccati, Suite::GalerkinMc];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Orthogonality => "orthogonality",
            Suite::Lemma1 => "lemma1",
            Suite::Prop1 => "prop1",
            Suite::Corollary1 => "corollary1",
            Suite::Riccati => "riccati",
            Suite::GalerkinMc => "galerkin_mc",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.to_ascii_lowercase().replace('-', "_");
        Suite::ALL.into_iter().find(|v| v.name() == key).ok_or_else(|| {
            let names: Vec<&str> = Suite::ALL.iter().map(|v| v.name()).collect();
            Error::Input(format!("unknown suite `{s}` (expected one of {})", names.join(", ")))
        })
    }
}

#[derive(Debug, Clone)]
pub struct ValidateOptions {
    pub seed: u64,
    /// Monte Carlo sample count of the Galerkin suite.
    pub mc_samples: usize,
    /// Relative error injected into the stored basis norms before they are
    /// compared; a non-zero value must make the orthogonality suite fail.
    pub norm_perturbation: f64,
}

impl Default for ValidateOptions {
    fn default() -> Self {
        Self { seed: 0, mc_samples: 100_000, norm_perturbation: 0.0 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub passed: bool,
    /// Worst observed error, in the units the tolerance is stated in.
    pub residual: f64,
    pub tolerance: f64,
    pub detail: String,
    pub seconds: f64,
}

impl fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:4} {:13} residual {:.3e} (tol {:.1e}) {:.2}s  {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.suite.name(),
            self.residual,
            self.tolerance,
            self.seconds,
            self.detail
        )
    }
}

struct Outcome {
    residual: f64,
    tolerance: f64,
    passed: bool,
    detail: String,
}

impl Outcome {
    fn within(residual: f64, tolerance: f64, detail: String) -> Self {
        Self { residual, tolerance, passed: residual <= tolerance, detail }
    }
}

/// Runs `suites` (all when empty) in the listed order.
pub fn run_suites(suites: &[Suite], options: &ValidateOptions) -> Vec<SuiteReport> {
    let list: &[Suite] = if suites.is_empty() { &Suite::ALL } else { suites };
    list.iter()
        .map(|&suite| {
            let started = Instant::now();
            let outcome = match suite {
                Suite::Orthogonality => orthogonality(options),
                Suite::Lemma1 => lemma1(options),
                Suite::Prop1 => prop1(options),
                Suite::Corollary1 => corollary1(),
                Suite::Riccati => riccati(),
                Suite::GalerkinMc => galerkin_mc(options),
            };
            let seconds = started.elapsed().as_secs_f64();
            match outcome {
                Ok(o) => SuiteReport {
                    suite,
                    passed: o.passed,
                    residual: o.residual,
                    tolerance: o.tolerance,
                    detail: o.detail,
                    seconds,
                },
                Err(e) => SuiteReport {
                    suite,
                    passed: false,
                    residual: f64::INFINITY,
                    tolerance: 0.0,
                    detail: e.to_string(),
                    seconds,
                },
            }
        })
        .collect()
}

/// `E[t^k]` for the standard uniform on `[−1, 1]` and the standard normal.
fn standard_moment(gaussian: bool, k: u32) -> f64 {
    if k % 2 == 1 {
        0.0
    } else if gaussian {
        (1..k).step_by(2).map(f64::from).product()
    } else {
        1.0 / f64::from(k + 1)
    }
}

fn orthogonality(options: &ValidateOptions) -> Result<Outcome> {
    let mut worst: f64 = 0.0;
    let mut where_ = String::new();
    let mut track = |err: f64, what: String| {
        if err > worst {
            worst = err;
            where_ = what;
        }
    };
    let families =
        [("legendre", ParameterDistribution::uniform(-1.0, 1.0)?, false), ("hermite", ParameterDistribution::gaussian(0.0, 1.0)?, true)];
    for (name, dist, gaussian) in families {
        let basis = make_basis(dist, 12)?;
        let rule = gauss_rule(dist, 14)?;
        let gram: Vec<Vec<f64>> = (0..=12)
            .map(|i| (0..=12).map(|j| expect(&rule, |x| { let p = basis.eval_unchecked(x); p[i] * p[j] })).collect())
            .collect();
        for i in 0..=12 {
            let norm = basis.norms[i] * (1.0 + options.norm_perturbation);
            let closed = if gaussian { (1..=i).map(|v| v as f64).product() } else { 1.0 / (2 * i + 1) as f64 };
            track(((norm - closed) / closed).abs(), format!("{name} stored norm {i}"));
            track(((gram[i][i] - norm) / norm).abs(), format!("{name} E[phi_{i}^2]"));
            for j in 0..i {
                let scale = (gram[i][i] * gram[j][j]).sqrt();
                track(gram[i][j].abs() / scale, format!("{name} E[phi_{i} phi_{j}]"));
            }
        }
        for nodes in 1..=13 {
            let rule = gauss_rule(dist, nodes)?;
            for k in 0..(2 * nodes as u32) {
                let exact = standard_moment(gaussian, k);
                let got = expect(&rule, |x| x.powi(k as i32));
                // Odd moments vanish by cancellation of terms as large as E[t^(k+1)].
                let scale = standard_moment(gaussian, k + k % 2).max(1.0);
                track((got - exact).abs() / scale, format!("{name} {nodes}-node rule on t^{k}"));
            }
        }
    }
    Ok(Outcome::within(worst, 1e-10, format!("worst at {where_}")))
}

fn lemma1(options: &ValidateOptions) -> Result<Outcome> {
    let dist = ParameterDistribution::uniform(-20.0, 20.0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut worst: f64 = 0.0;
    let mut weight_err: f64 = 0.0;
    for order in 1..=9 {
        let lag = make_lagrange(&make_basis(dist, order)?)?;
        let gauss = gauss_rule(dist, order + 1)?;
        for (e, w) in lag.node_expectations.iter().zip(&gauss.weights) {
            weight_err = weight_err.max((e - w).abs());
        }
        for _ in 0..100 {
            let g = Affine { slope: rng.random_range(-1.0..1.0), intercept: rng.random_range(-1.0..1.0) };
            for i in 0..=order {
                for j in 0..=order {
                    let expected = if i == j { lag.node_expectations[i] * g.at(lag.nodes[i]) } else { 0.0 };
                    worst = worst.max((lemma1_check(&lag, g, i, j)? - expected).abs());
                }
            }
        }
    }
    Ok(Outcome {
        residual: worst,
        tolerance: 1e-9,
        passed: worst <= 1e-9 && weight_err <= 1e-12,
        detail: format!("max |E[l_i] - w_i| = {weight_err:.2e} (tol 1e-12)"),
    })
}

fn prop1(options: &ValidateOptions) -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed.wrapping_add(1));
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let (rows, cols, terms) = (rng.random_range(1..=4), rng.random_range(1..=4), rng.random_range(1..=6));
        let m = DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0));
        let v = DVector::from_fn(terms, |_, _| rng.random_range(-1.0..1.0));
        worst = worst.max(kron_identity_residual(&m, &v)?);
    }
    Ok(Outcome::within(worst, 1e-12, "100 random (M, v)".into()))
}

fn corollary1() -> Result<Outcome> {
    let mut mismatches = 0usize;
    for n in 1..=3 {
        for order in 0..=5 {
            let mut b = ProblemBuilder::new();
            let v = PcVariables::declare(&mut b, n, 1, order);
            if v.ybar_scalars != n * (n + 1) * (order + 1) * (order + 2) / 4 {
                mismatches += 1;
            }
        }
    }
    Ok(Outcome::within(mismatches as f64, 0.0, "count mismatches of free scalars in Ybar, n <= 3, N <= 5".into()))
}

fn riccati() -> Result<Outcome> {
    let opts = SynthOptions::default();
    let m1 = |v: f64| DMatrix::from_element(1, 1, v);
    let mut worst: f64 = 0.0;
    let lmi = synth_lti(&m1(-1.0), &m1(1.0), &m1(1.0), &m1(1.0), &opts)?.gain.eval(0.0)?;
    let exact = scalar_care(-1.0, 1.0, 1.0, 1.0)?.k;
    worst = worst.max(((&lmi - &exact).amax() / exact.amax()).abs());
    let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
    let b = DMatrix::from_column_slice(2, 1, &[0.0, 1.0]);
    let lmi = synth_lti(&a, &b, &DMatrix::identity(2, 2), &m1(1.0), &opts)?.gain.eval(0.0)?;
    let exact = care(&a, &b, &DMatrix::identity(2, 2), &m1(1.0))?.k;
    worst = worst.max((&lmi - &exact).amax() / exact.amax());
    Ok(Outcome::within(worst, 1e-3, "LMI gain vs Riccati, scalar and double integrator".into()))
}

fn galerkin_mc(options: &ValidateOptions) -> Result<Outcome> {
    let dist = ParameterDistribution::uniform(-1.0, 1.0)?;
    let sys = UncertainLinearSystem::new(1, 1, dist, |d| DMatrix::from_element(1, 1, -(1.0 + 0.5 * d)), |_| DMatrix::zeros(1, 1))?;
    let rep = validate_galerkin(&sys, &make_basis(dist, 3)?, &[1.0], 1.0, options.mc_samples, options.seed)?;
    Ok(Outcome::within(
        rep.mean_err_mc.max(rep.var_err_mc),
        1e-2,
        format!(
            "N=3, {} samples: mean err {:.2e}, variance err {:.2e} (vs quadrature {:.1e}, {:.1e})",
            rep.samples, rep.mean_err_mc, rep.var_err_mc, rep.mean_err_ref, rep.var_err_ref
        ),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fast_suites_pass() {
        let opts = ValidateOptions { mc_samples: 20_000, ..Default::default() };
        for r in run_suites(&[Suite::Orthogonality, Suite::Lemma1, Suite::Prop1, Suite::Corollary1, Suite::Riccati], &opts) {
            assert!(r.passed, "{r}");
        }
    }

    #[test]
    fn norm_perturbation_is_caught() {
        let opts = ValidateOptions { norm_perturbation: 1e-6, ..Default::default() };
        let r = &run_suites(&[Suite::Orthogonality], &opts)[0];
        assert!(!r.passed, "{r}");
    }

    #[test]
    fn filter_and_names() {
        let r = run_suites(&[Suite::Lemma1], &ValidateOptions::default());
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].suite, Suite::Lemma1);
        for s in Suite::ALL {
            assert_eq!(s.name().parse::<Suite>().unwrap(), s);
        }
        assert_eq!("galerkin-mc".parse::<Suite>().unwrap(), Suite::GalerkinMc);
        assert!("nope".parse::<Suite>().is_err());
    }
}
