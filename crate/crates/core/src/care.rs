//! Continuous algebraic Riccati equation via the matrix sign function.
//!
//! Solves `AᵀP + PA − PBR⁻¹BᵀP + Q = 0` for the stabilizing `P`. Used as a
//! reference for the linear case of the value-parameter flow.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

const MAX_ITER: usize = 100;

pub fn solve_care(a: &DMatrix<f64>, b: &DMatrix<f64>, q: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let r_inv = r
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::validation("cost.r", "R is singular"))?;
    let g = b * r_inv * b.transpose();

    let mut z = DMatrix::zeros(2 * n, 2 * n);
    z.view_mut((0, 0), (n, n)).copy_from(a);
    z.view_mut((0, n), (n, n)).copy_from(&(-&g));
    z.view_mut((n, 0), (n, n)).copy_from(&(-q));
    z.view_mut((n, n), (n, n)).copy_from(&(-a.transpose()));

    let dim = (2 * n) as f64;
    for _ in 0..MAX_ITER {
        let inv = z
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::validation("plant", "Hamiltonian has eigenvalues on the imaginary axis"))?;
        // determinant scaling speeds up the early iterations
        let det = z.determinant().abs();
        let c = if det > 0.0 && det.is_finite() { det.powf(-1.0 / dim) } else { 1.0 };
        let next = (&z * c + inv / c) * 0.5;
        let delta = (&next - &z).abs().max();
        z = next;
        if delta <= 1e-13 * z.abs().max().max(1.0) {
            break;
        }
    }

    let w11 = z.view((0, 0), (n, n)).into_owned();
    let w12 = z.view((0, n), (n, n)).into_owned();
    let w21 = z.view((n, 0), (n, n)).into_owned();
    let w22 = z.view((n, n), (n, n)).into_owned();
    let eye = DMatrix::<f64>::identity(n, n);

    let mut lhs = DMatrix::zeros(2 * n, n);
    lhs.view_mut((0, 0), (n, n)).copy_from(&w12);
    lhs.view_mut((n, 0), (n, n)).copy_from(&(&w22 + &eye));
    let mut rhs = DMatrix::zeros(2 * n, n);
    rhs.view_mut((0, 0), (n, n)).copy_from(&(&w11 + &eye));
    rhs.view_mut((n, 0), (n, n)).copy_from(&w21);

    let p = lhs
        .svd(true, true)
        .solve(&(-rhs), 1e-14)
        .map_err(|e| Error::validation("plant", e.to_string()))?;
    Ok((&p + p.transpose()) * 0.5)
}

/// `AᵀP + PA − PBR⁻¹BᵀP + Q`.
pub fn care_residual(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    p: &DMatrix<f64>,
) -> DMatrix<f64> {
    let r_inv = r.clone().try_inverse().expect("invertible R");
    a.transpose() * p + p * a - p * b * r_inv * b.transpose() * p + q
}

/// LQR gain `K = R⁻¹BᵀP` for `u = −Kx`.
pub fn lqr_gain(b: &DMatrix<f64>, r: &DMatrix<f64>, p: &DMatrix<f64>) -> DMatrix<f64> {
    r.clone().try_inverse().expect("invertible R") * b.transpose() * p
}
