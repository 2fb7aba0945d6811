//! Matrix exponential via scaling-and-squaring with a Padé(13) approximant.
//!
//! The flows of the decoupled switched system are evaluated exactly through
//! `exp(A t)`, so this routine is the numerical workhorse of the simulator
//! and of the subspace recursions.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg;

/// Padé(13) denominator/numerator coefficients b_0..b_13.
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

/// Scaling threshold theta_13 for the Padé(13) approximant.
const THETA13: f64 = 5.371920351148152;

/// Compute `exp(m * t)`.
///
/// Scaling-and-squaring with Padé(13); backward error is at machine-epsilon
/// level for well-scaled inputs.
pub fn expm(m: &DMatrix<f64>, t: f64) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    if n != m.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "expm requires a square matrix, got {}x{}",
            n,
            m.ncols()
        )));
    }
    linalg::check_finite(m, "expm argument")?;
    if !t.is_finite() {
        return Err(Error::NonFinite("expm time".to_string()));
    }
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let a = m * t;
    if n == 1 {
        return Ok(DMatrix::from_element(1, 1, a[(0, 0)].exp()));
    }

    let norm = one_norm(&a);
    let s = if norm > THETA13 {
        (norm / THETA13).log2().ceil() as u32
    } else {
        0
    };
    let a_scaled = &a / 2f64.powi(s as i32);

    let mut result = pade13(&a_scaled)?;
    for _ in 0..s {
        result = &result * &result;
    }
    Ok(result)
}

fn pade13(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let eye = DMatrix::<f64>::identity(n, n);
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a2 * &a4;

    let u_inner = &a6 * (&a6 * PADE13[13] + &a4 * PADE13[11] + &a2 * PADE13[9])
        + &a6 * PADE13[7]
        + &a4 * PADE13[5]
        + &a2 * PADE13[3]
        + &eye * PADE13[1];
    let u = a * u_inner;

    let v = &a6 * (&a6 * PADE13[12] + &a4 * PADE13[10] + &a2 * PADE13[8])
        + &a6 * PADE13[6]
        + &a4 * PADE13[4]
        + &a2 * PADE13[2]
        + &eye * PADE13[0];

    let num = &v + &u;
    let den = &v - &u;
    linalg::solve(&den, &num)
        .ok_or_else(|| Error::Numerical("singular Padé denominator in expm".to_string()))
}

fn one_norm(m: &DMatrix<f64>) -> f64 {
    (0..m.ncols())
        .map(|j| m.column(j).iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}
