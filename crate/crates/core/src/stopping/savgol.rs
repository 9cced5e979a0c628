use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

use super::{LossTrace, StopError};

pub const DEFAULT_SAVGOL_ORDER: usize = 4;
pub const DEFAULT_SAVGOL_WINDOW: usize = 11;

fn int(v: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(v))
}

/// Inverts a square matrix exactly by Gauss-Jordan elimination.
fn invert(mut m: Vec<Vec<BigRational>>) -> Vec<Vec<BigRational>> {
    let n = m.len();
    let mut inv: Vec<Vec<BigRational>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    if i == j {
                        BigRational::one()
                    } else {
                        BigRational::zero()
                    }
                })
                .collect()
        })
        .collect();
    for col in 0..n {
        let pivot = (col..n)
            .find(|&r| !m[r][col].is_zero())
            .expect("Vandermonde normal matrix is nonsingular");
        m.swap(col, pivot);
        inv.swap(col, pivot);
        let p = m[col][col].clone();
        for j in 0..n {
            m[col][j] = &m[col][j] / &p;
            inv[col][j] = &inv[col][j] / &p;
        }
        for r in 0..n {
            if r == col || m[r][col].is_zero() {
                continue;
            }
            let f = m[r][col].clone();
            for j in 0..n {
                let a = &m[col][j] * &f;
                m[r][j] = &m[r][j] - a;
                let b = &inv[col][j] * &f;
                inv[r][j] = &inv[r][j] - b;
            }
        }
    }
    inv
}

/// Weights that evaluate the least-squares polynomial of degree `order`,
/// fitted to a window of `window` samples at offsets `-m..=m`, at offset
/// `at`. Row `i` of the result is the weight vector for `at = i - m`.
pub fn savgol_coefficients(window: usize, order: usize) -> Vec<Vec<f64>> {
    let m = (window / 2) as i64;
    let offsets: Vec<i64> = (-m..=m).collect();
    let k = order + 1;
    // Power sums give the normal matrix AᵀA.
    let power = |t: i64, p: usize| int(t.pow(p as u32));
    let normal: Vec<Vec<BigRational>> = (0..k)
        .map(|i| (0..k).map(|j| offsets.iter().map(|&t| power(t, i + j)).sum()).collect())
        .collect();
    let inv = invert(normal);
    // (AᵀA)⁻¹Aᵀ: polynomial coefficients as linear functions of the samples.
    let proj: Vec<Vec<BigRational>> = (0..k)
        .map(|p| {
            offsets
                .iter()
                .map(|&t| (0..k).map(|q| &inv[p][q] * power(t, q)).sum())
                .collect()
        })
        .collect();
    offsets
        .iter()
        .map(|&at| {
            (0..window)
                .map(|j| {
                    let w: BigRational = (0..k).map(|p| power(at, p) * &proj[p][j]).sum();
                    w.to_f64().expect("finite weight")
                })
                .collect()
        })
        .collect()
}

/// Savitzky-Golay smoothing. Interior points use the centered window; the
/// first and last `window / 2` points are read off the polynomial fitted to
/// the window flush with that edge. Epochs are unchanged.
pub fn savgol_smooth(trace: &LossTrace, window: usize, order: usize) -> Result<LossTrace, StopError> {
    let n = trace.losses.len();
    if window % 2 == 0 || window <= order || n < window {
        return Err(StopError::InvalidWindow { window, order, len: n });
    }
    let coef = savgol_coefficients(window, order);
    let m = window / 2;
    let x = &trace.losses;
    let apply = |w: &[f64], start: usize| w.iter().zip(&x[start..start + window]).map(|(a, b)| a * b).sum::<f64>();
    let losses = (0..n)
        .map(|i| {
            if i < m {
                apply(&coef[i], 0)
            } else if i + m >= n {
                apply(&coef[i + window - n], n - window)
            } else {
                apply(&coef[m], i - m)
            }
        })
        .collect();
    Ok(LossTrace {
        stage: trace.stage,
        losses,
    })
}
