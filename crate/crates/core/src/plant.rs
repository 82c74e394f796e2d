//! Uncertain linear systems and the quasi-LPV missile pitch-axis model.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::orthopoly::ParameterDistribution;

type MatrixFn = Arc<dyn Fn(f64) -> DMatrix<f64> + Send + Sync>;

/// `ẋ = A(δ)x + B(δ)u` with a random scalar parameter `δ`.
#[derive(Clone)]
pub struct UncertainLinearSystem {
    n: usize,
    m: usize,
    a: MatrixFn,
    b: MatrixFn,
    distribution: ParameterDistribution,
    /// Parameter values where `A` or `B` is not smooth (quadrature breakpoints).
    kinks: Vec<f64>,
}

impl fmt::Debug for UncertainLinearSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("UncertainLinearSystem")
            .field("n", &self.n)
            .field("m", &self.m)
            .field("distribution", &self.distribution)
            .field("kinks", &self.kinks)
            .finish_non_exhaustive()
    }
}

impl UncertainLinearSystem {
    pub fn new(
        n: usize,
        m: usize,
        distribution: ParameterDistribution,
        a: impl Fn(f64) -> DMatrix<f64> + Send + Sync + 'static,
        b: impl Fn(f64) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Result<Self> {
        if n == 0 || m == 0 {
            return Err(Error::Dimension(format!("system needs n, m >= 1, got n={n}, m={m}")));
        }
        let sys = Self { n, m, a: Arc::new(a), b: Arc::new(b), distribution: distribution.validated()?, kinks: Vec::new() };
        let probe = sys.distribution.support().map_or(sys.distribution.from_standard(0.0), |(lo, _)| lo);
        let (a0, b0) = (sys.a(probe), sys.b(probe));
        if a0.shape() != (n, n) || b0.shape() != (n, m) {
            return Err(Error::Dimension(format!(
                "A is {:?} and B is {:?}, expected ({n}, {n}) and ({n}, {m})",
                a0.shape(),
                b0.shape()
            )));
        }
        Ok(sys)
    }

    /// Parameter-independent system.
    pub fn constant(a: DMatrix<f64>, b: DMatrix<f64>, distribution: ParameterDistribution) -> Result<Self> {
        let (n, m) = (a.nrows(), b.ncols());
        Self::new(n, m, distribution, move |_| a.clone(), move |_| b.clone())
    }

    pub fn with_kinks(mut self, kinks: Vec<f64>) -> Self {
        self.kinks = kinks;
        self
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn distribution(&self) -> ParameterDistribution {
        self.distribution
    }

    pub fn kinks(&self) -> &[f64] {
        &self.kinks
    }

    pub fn a(&self, delta: f64) -> DMatrix<f64> {
        (self.a)(delta)
    }

    pub fn b(&self, delta: f64) -> DMatrix<f64> {
        (self.b)(delta)
    }

    /// `A(δ) + B(δ)K(δ)` for a parameter-dependent gain.
    pub fn closed_loop(&self, gain: impl Fn(f64) -> DMatrix<f64> + Send + Sync + 'static) -> Result<Self> {
        let (a, b) = (self.a.clone(), self.b.clone());
        let n = self.n;
        Ok(Self::new(n, 1, self.distribution, move |d| a(d) + b(d) * gain(d), move |_| DMatrix::zeros(n, 1))?
            .with_kinks(self.kinks.clone()))
    }
}

/// Missile airframe constants. Angles are in degrees throughout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MissileConfig {
    pub mach: f64,
    #[serde(rename = "K_alpha")]
    pub k_alpha: f64,
    #[serde(rename = "K_q")]
    pub k_q: f64,
    pub a_n: f64,
    pub b_n: f64,
    pub c_n: f64,
    pub d_n: f64,
    pub a_m: f64,
    pub b_m: f64,
    pub c_m: f64,
    pub d_m: f64,
}

impl MissileConfig {
    /// Pitch-axis data of the classic tail-controlled missile at Mach 2.5.
    ///
    /// `0.7·P0·S/(m·v)` and `0.7·P0·S·d/I` give rad/s per unit coefficient;
    /// both carry a `180/π` factor because the states are in degrees.
    pub fn reference() -> Self {
        let deg = 180.0 / std::f64::consts::PI;
        Self {
            mach: 2.5,
            k_alpha: 0.7 * 973.3 * 0.44 / (13.98 * 1036.4) * deg,
            k_q: 0.7 * 973.3 * 0.44 * 0.75 / 182.5 * deg,
            a_n: 0.000103,
            b_n: -0.00945,
            c_n: -0.1696,
            d_n: -0.034,
            a_m: 0.000215,
            b_m: -0.0195,
            c_m: 0.051,
            d_m: -0.206,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.mach, self.k_alpha, self.k_q, self.a_n, self.b_n, self.c_n, self.d_n, self.a_m, self.b_m, self.c_m,
            self.d_m,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("missile coefficients must be finite".into()));
        }
        if self.mach <= 0.0 {
            return Err(Error::Config(format!("mach must be positive, got {}", self.mach)));
        }
        Ok(())
    }

    /// `C_n / α` without the fin term.
    fn normal_slope(&self, alpha: f64) -> f64 {
        let a = alpha.abs();
        self.a_n * a * a + self.b_n * a + self.c_n * (2.0 - self.mach / 3.0)
    }

    /// `C_m / α` without the fin term.
    fn moment_slope(&self, alpha: f64) -> f64 {
        let a = alpha.abs();
        self.a_m * a * a + self.b_m * a + self.c_m * (-7.0 + 8.0 * self.mach / 3.0)
    }

    /// Nonlinear state derivative `(α̇, q̇)` in deg/s and deg/s².
    pub fn dynamics(&self, alpha: f64, q: f64, fin: f64) -> [f64; 2] {
        let (cn, cm) = aero_coeffs(self, alpha, fin);
        [self.k_alpha * self.mach * cn * alpha.to_radians().cos() + q, self.k_q * self.mach * self.mach * cm]
    }
}

/// Normal-force and pitching-moment coefficients `(C_n, C_m)`.
pub fn aero_coeffs(config: &MissileConfig, alpha: f64, fin: f64) -> (f64, f64) {
    (alpha * config.normal_slope(alpha) + config.d_n * fin, alpha * config.moment_slope(alpha) + config.d_m * fin)
}

fn missile_a(config: &MissileConfig, rho: f64) -> DMatrix<f64> {
    let m = config.mach;
    DMatrix::from_row_slice(
        2,
        2,
        &[config.k_alpha * m * config.normal_slope(rho) * rho.to_radians().cos(), 1.0, config.k_q * m * m * config.moment_slope(rho), 0.0],
    )
}

fn missile_b(config: &MissileConfig, rho: f64) -> DMatrix<f64> {
    let m = config.mach;
    DMatrix::from_column_slice(2, 1, &[config.k_alpha * m * config.d_n * rho.to_radians().cos(), config.k_q * m * m * config.d_m])
}

/// Exact quasi-LPV rewriting with `ρ := α`, scheduled over `range` (degrees).
pub fn missile_quasi_lpv(config: &MissileConfig, range: (f64, f64)) -> Result<UncertainLinearSystem> {
    config.validate()?;
    let dist = ParameterDistribution::uniform(range.0, range.1)?;
    let (ca, cb) = (*config, *config);
    let kinks = if range.0 < 0.0 && range.1 > 0.0 { vec![0.0] } else { Vec::new() };
    Ok(UncertainLinearSystem::new(2, 1, dist, move |r| missile_a(&ca, r), move |r| missile_b(&cb, r))?.with_kinks(kinks))
}

/// Jacobian of the nonlinear dynamics at the trim point `α = q = δ_fin = 0`.
pub fn linearize_origin(config: &MissileConfig) -> (DMatrix<f64>, DMatrix<f64>) {
    (missile_a(config, 0.0), missile_b(config, 0.0))
}

/// Quadratic cost weights `Q ⪰ 0`, `R ≻ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostWeights {
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
}

impl CostWeights {
    pub fn new(q: DMatrix<f64>, r: DMatrix<f64>) -> Result<Self> {
        let w = Self { q, r };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        check_symmetric("Q", &self.q)?;
        check_symmetric("R", &self.r)?;
        let min_eig = |m: &DMatrix<f64>| SymmetricEigen::new(m.clone()).eigenvalues.min();
        if min_eig(&self.q) < -1e-12 {
            return Err(Error::Input("Q must be positive semidefinite".into()));
        }
        if min_eig(&self.r) <= 0.0 {
            return Err(Error::Input("R must be positive definite".into()));
        }
        Ok(())
    }
}

pub(crate) fn check_symmetric(name: &str, m: &DMatrix<f64>) -> Result<()> {
    if !m.is_square() {
        return Err(Error::Dimension(format!("{name} must be square, got {:?}", m.shape())));
    }
    if m.iter().any(|v| !v.is_finite()) || (m - m.transpose()).amax() > 1e-12 * m.amax().max(1.0) {
        return Err(Error::Input(format!("{name} must be finite and symmetric")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg() -> MissileConfig {
        MissileConfig::reference()
    }

    #[test]
    fn aero_trivial_values() {
        let c = cfg();
        assert_eq!(aero_coeffs(&c, 0.0, 0.0), (0.0, 0.0));
        assert_eq!(aero_coeffs(&c, 0.0, 1.0), (c.d_n, c.d_m));
    }

    #[test]
    fn aero_direct_transcription() {
        // α = 10°, M = 2.5: 2 − M/3 = 7/6 and −7 + 8M/3 = −1/3.
        let c = cfg();
        let cn = 10.0 * (0.000103 * 100.0 + -0.00945 * 10.0 + -0.1696 * (7.0 / 6.0));
        let cm = 10.0 * (0.000215 * 100.0 + -0.0195 * 10.0 + 0.051 * (-1.0 / 3.0));
        let (gn, gm) = aero_coeffs(&c, 10.0, 0.0);
        assert!((gn - cn).abs() < 1e-14 && (gm - cm).abs() < 1e-14);
        assert!((gn - (-2.8206666666666664)).abs() < 1e-12);
        assert!((gm - (-1.905)).abs() < 1e-12);
    }

    #[test]
    fn structural_entries() {
        let c = cfg();
        let sys = missile_quasi_lpv(&c, (-20.0, 20.0)).unwrap();
        for k in 0..=40 {
            let r = -20.0 + k as f64;
            let a = sys.a(r);
            assert_eq!(a[(0, 1)], 1.0);
            assert_eq!(a[(1, 1)], 0.0);
        }
        assert!((sys.b(0.0)[(0, 0)] - c.k_alpha * c.mach * c.d_n).abs() < 1e-15);
        let (a, _) = linearize_origin(&c);
        assert!((a[(0, 0)] - c.k_alpha * c.mach * c.c_n * (2.0 - c.mach / 3.0)).abs() < 1e-15);
        assert_eq!(a[(0, 1)], 1.0);
    }

    #[test]
    fn linearization_matches_central_differences() {
        let c = cfg();
        let (a, b) = linearize_origin(&c);
        // The α|α| term makes the central difference exact only to O(h).
        let h = 1e-7;
        let close = |fd: f64, exact: f64| (fd - exact).abs() < 1e-6 * exact.abs().max(1.0);
        for (col, (dx, du)) in [((h, 0.0), 0.0), ((0.0, h), 0.0)].into_iter().enumerate() {
            let p = c.dynamics(dx.0, dx.1, du);
            let m = c.dynamics(-dx.0, -dx.1, -du);
            for row in 0..2 {
                assert!(close((p[row] - m[row]) / (2.0 * h), a[(row, col)]));
            }
        }
        let p = c.dynamics(0.0, 0.0, h);
        let m = c.dynamics(0.0, 0.0, -h);
        for row in 0..2 {
            assert!(close((p[row] - m[row]) / (2.0 * h), b[(row, 0)]));
        }
    }

    #[test]
    fn continuous_and_finite_on_fine_grid() {
        let sys = missile_quasi_lpv(&cfg(), (-20.0, 20.0)).unwrap();
        let mut prev = (sys.a(-20.0), sys.b(-20.0));
        for k in 1..=4000 {
            let r = -20.0 + 0.01 * k as f64;
            let cur = (sys.a(r), sys.b(r));
            assert!(cur.0.iter().chain(cur.1.iter()).all(|v| v.is_finite()));
            assert!((&cur.0 - &prev.0).amax() < 5e-2 * (1.0 + cur.0.amax()));
            assert!((&cur.1 - &prev.1).amax() < 5e-2 * (1.0 + cur.1.amax()));
            prev = cur;
        }
    }

    #[test]
    fn rejects_bad_weights() {
        let eye = DMatrix::<f64>::identity(2, 2);
        assert!(CostWeights::new(eye.clone(), DMatrix::from_element(1, 1, 0.0)).is_err());
        assert!(CostWeights::new(-&eye, DMatrix::from_element(1, 1, 1.0)).is_err());
        assert!(CostWeights::new(DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]), DMatrix::from_element(1, 1, 1.0)).is_err());
        assert!(CostWeights::new(eye * 0.2, DMatrix::from_element(1, 1, 1.0)).is_ok());
    }

    proptest! {
        #[test]
        fn quasi_lpv_is_exact(alpha in -20.0f64..20.0, q in -100.0f64..100.0, fin in -30.0f64..30.0) {
            let c = cfg();
            let sys = missile_quasi_lpv(&c, (-20.0, 20.0)).unwrap();
            let x = DMatrix::from_column_slice(2, 1, &[alpha, q]);
            let lin = sys.a(alpha) * x + sys.b(alpha) * fin;
            let nl = c.dynamics(alpha, q, fin);
            for i in 0..2 {
                prop_assert!((lin[i] - nl[i]).abs() <= 1e-12 * nl[i].abs().max(1.0));
            }
        }
    }
}
