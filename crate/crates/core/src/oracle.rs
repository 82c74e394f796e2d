//! Reference solutions that do not go through the SDP machinery.

use nalgebra::{Complex, DMatrix};

use crate::error::{Error, Result};

/// Stabilising solution of `AᵀP + PA − PBR⁻¹BᵀP + Q = 0` and the optimal
/// state feedback `u = Kx`, `K = −R⁻¹BᵀP`.
#[derive(Debug, Clone, PartialEq)]
pub struct Riccati {
    pub p: DMatrix<f64>,
    pub k: DMatrix<f64>,
}

/// Closed form for the scalar regulator `ẋ = ax + bu`, cost `qx² + ru²`.
pub fn scalar_care(a: f64, b: f64, q: f64, r: f64) -> Result<Riccati> {
    if b == 0.0 || r <= 0.0 || q < 0.0 {
        return Err(Error::Input("scalar regulator needs b != 0, r > 0, q >= 0".into()));
    }
    let p = r * (a + (a * a + b * b * q / r).sqrt()) / (b * b);
    Ok(Riccati { p: DMatrix::from_element(1, 1, p), k: DMatrix::from_element(1, 1, -b * p / r) })
}

/// Solves `AᵀX + XA + C = 0` through the vectorised Kronecker system.
pub fn lyapunov(a: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let eye = DMatrix::<f64>::identity(n, n);
    let op = eye.kronecker(&a.transpose()) + a.transpose().kronecker(&eye);
    let rhs = -DMatrix::from_column_slice(n * n, 1, c.as_slice());
    let x = op.lu().solve(&rhs).ok_or_else(|| Error::Numerical("singular Lyapunov operator".into()))?;
    let x = DMatrix::from_column_slice(n, n, x.as_slice());
    Ok((&x + x.transpose()) * 0.5)
}

/// Hautus test: every eigenvalue with `Re λ ≥ 0` must leave `[A − λI, B]`
/// with full row rank.
pub fn stabilizable(a: &DMatrix<f64>, b: &DMatrix<f64>) -> bool {
    let n = a.nrows();
    let scale = a.amax().max(b.amax()).max(1.0);
    a.complex_eigenvalues().iter().filter(|l| l.re >= -1e-9 * scale).all(|l| {
        let pencil = DMatrix::from_fn(n, n + b.ncols(), |i, j| {
            if j < n {
                Complex::new(a[(i, j)], 0.0) - if i == j { *l } else { Complex::new(0.0, 0.0) }
            } else {
                Complex::new(b[(i, j - n)], 0.0)
            }
        });
        let sv = pencil.singular_values();
        sv.min() > 1e-9 * scale
    })
}

fn riccati_rhs(a: &DMatrix<f64>, s: &DMatrix<f64>, q: &DMatrix<f64>, p: &DMatrix<f64>) -> DMatrix<f64> {
    a.transpose() * p + p * a - p * s * p + q
}

/// Stabilising Riccati solution.
///
/// The Riccati differential equation is integrated from `P = 0` with RK4
/// until it settles, then the result is polished by Newton–Kleinman steps.
pub fn care(a: &DMatrix<f64>, b: &DMatrix<f64>, q: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<Riccati> {
    let n = a.nrows();
    let r_inv = r.clone().try_inverse().ok_or_else(|| Error::Input("R is singular".into()))?;
    let s = b * &r_inv * b.transpose();
    let scale = a.norm() + s.norm() + q.norm() + 1.0;
    let h = 0.02 / scale;

    let mut p = DMatrix::<f64>::zeros(n, n);
    let mut settled = false;
    for _ in 0..2_000_000 {
        let k1 = riccati_rhs(a, &s, q, &p);
        let k2 = riccati_rhs(a, &s, q, &(&p + &k1 * (h / 2.0)));
        let k3 = riccati_rhs(a, &s, q, &(&p + &k2 * (h / 2.0)));
        let k4 = riccati_rhs(a, &s, q, &(&p + &k3 * h));
        let step = (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        p += &step;
        if !p.iter().all(|v| v.is_finite()) {
            return Err(Error::Numerical("Riccati flow diverged; (A, B) may not be stabilisable".into()));
        }
        if step.amax() <= 1e-13 * p.amax().max(1e-300) * h * scale {
            settled = true;
            break;
        }
    }
    if !settled {
        return Err(Error::Numerical("Riccati flow did not settle; (A, B) may not be stabilisable".into()));
    }

    for _ in 0..20 {
        let k = -&r_inv * b.transpose() * &p;
        let acl = a + b * &k;
        let next = lyapunov(&acl, &(q + k.transpose() * r * &k))?;
        let delta = (&next - &p).norm();
        p = next;
        if delta <= 1e-14 * p.norm() {
            break;
        }
    }
    let k = -&r_inv * b.transpose() * &p;
    let abscissa = (a + b * &k).complex_eigenvalues().iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
    if !(abscissa < 0.0) {
        return Err(Error::Numerical(format!("Riccati solution is not stabilising (spectral abscissa {abscissa:.3e})")));
    }
    Ok(Riccati { p, k })
}
