use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const WINDOW: usize = 7;
const ORDER: usize = 3;

/// Weights giving the first derivative (per unit sample spacing) at window
/// position `p` from a least-squares cubic through the 7-point window.
fn weights() -> &'static [[f64; WINDOW]; WINDOW] {
    static W: OnceLock<[[f64; WINDOW]; WINDOW]> = OnceLock::new();
    W.get_or_init(|| {
        let mut out = [[0.0; WINDOW]; WINDOW];
        for (p, row) in out.iter_mut().enumerate() {
            let a = DMatrix::from_fn(WINDOW, ORDER + 1, |k, j| (k as f64 - p as f64).powi(j as i32));
            let ata = a.transpose() * &a;
            let inv = ata.try_inverse().expect("Vandermonde normal matrix is invertible");
            let pinv = inv * a.transpose();
            for (k, w) in row.iter_mut().enumerate() {
                *w = pinv[(1, k)];
            }
        }
        out
    })
}

/// Savitzky–Golay smoothed derivative (window 7, cubic) of each column.
/// The first and last three points use one-sided windows.
pub fn smoothed_derivative(columns: &[Vec<f64>], dt: f64) -> Result<Vec<Vec<f64>>> {
    let w = weights();
    columns
        .iter()
        .map(|col| {
            let n = col.len();
            if n < WINDOW {
                return Err(Error::InvalidArgument(format!(
                    "smoothed derivative needs at least {WINDOW} points, got {n}"
                )));
            }
            let half = WINDOW / 2;
            Ok((0..n)
                .map(|i| {
                    let (start, p) = if i < half {
                        (0, i)
                    } else if i + half >= n {
                        (n - WINDOW, i + WINDOW - n)
                    } else {
                        (i - half, half)
                    };
                    let window = DVector::from_column_slice(&col[start..start + WINDOW]);
                    w[p].iter().zip(window.iter()).map(|(a, b)| a * b).sum::<f64>() / dt
                })
                .collect())
        })
        .collect()
}

/// Plain central differences, one-sided at the ends.
pub fn central_difference(col: &[f64], dt: f64) -> Vec<f64> {
    let n = col.len();
    (0..n)
        .map(|i| match i {
            0 => (col[1] - col[0]) / dt,
            _ if i + 1 == n => (col[n - 1] - col[n - 2]) / dt,
            _ => (col[i + 1] - col[i - 1]) / (2.0 * dt),
        })
        .collect()
}
