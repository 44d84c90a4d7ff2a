//! Unitary DFT helpers over column-major M x N buffers.
//!
//! Columns are the delay / fast-time axis (length M, contiguous); rows are
//! the Doppler / slow-time axis (length N, stride M). Every transform here is
//! scaled by 1/sqrt(len) so forward and inverse are exact adjoints.

use std::cell::RefCell;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftDirection, FftPlanner};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

pub(crate) fn plan(len: usize, direction: FftDirection) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft(len, direction))
}

fn direction(inverse: bool) -> FftDirection {
    if inverse {
        FftDirection::Inverse
    } else {
        FftDirection::Forward
    }
}

/// Unitary DFT of a single contiguous vector.
pub fn dft(buf: &mut [Complex64], inverse: bool) {
    let len = buf.len();
    if len == 0 {
        return;
    }
    plan(len, direction(inverse)).process(buf);
    let scale = 1.0 / (len as f64).sqrt();
    buf.iter_mut().for_each(|v| *v *= scale);
}

/// Unitary M-point DFT applied to each column (`F_M X` or `F_M^H X`).
pub fn dft_columns(buf: &mut [Complex64], m: usize, inverse: bool) {
    debug_assert_eq!(buf.len() % m, 0);
    plan(m, direction(inverse)).process(buf);
    let scale = 1.0 / (m as f64).sqrt();
    buf.iter_mut().for_each(|v| *v *= scale);
}

/// Unitary N-point DFT applied along each row.
///
/// Forward gives `X F_N`, inverse gives `X F_N^H` (F_N is symmetric).
pub fn dft_rows(buf: &mut [Complex64], m: usize, n: usize, inverse: bool) {
    debug_assert_eq!(buf.len(), m * n);
    let mut t = transpose(buf, m, n);
    plan(n, direction(inverse)).process(&mut t);
    let scale = 1.0 / (n as f64).sqrt();
    for l in 0..m {
        for k in 0..n {
            buf[l + m * k] = t[k + n * l] * scale;
        }
    }
}

/// Column-major M x N to column-major N x M.
fn transpose(buf: &[Complex64], m: usize, n: usize) -> Vec<Complex64> {
    let mut t = vec![Complex64::new(0.0, 0.0); m * n];
    for k in 0..n {
        for l in 0..m {
            t[k + n * l] = buf[l + m * k];
        }
    }
    t
}

/// Unnormalized 2D DFT used by correlation searches.
pub(crate) fn dft2_raw(buf: &mut [Complex64], m: usize, n: usize, inverse: bool) {
    plan(m, direction(inverse)).process(buf);
    let mut t = transpose(buf, m, n);
    plan(n, direction(inverse)).process(&mut t);
    for l in 0..m {
        for k in 0..n {
            buf[l + m * k] = t[k + n * l];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn naive(x: &[Complex64], inverse: bool) -> Vec<Complex64> {
        let n = x.len();
        let sign = if inverse { 1.0 } else { -1.0 };
        (0..n)
            .map(|k| {
                x.iter()
                    .enumerate()
                    .map(|(i, v)| v * Complex64::cis(sign * 2.0 * PI * (i * k) as f64 / n as f64))
                    .sum::<Complex64>()
                    / (n as f64).sqrt()
            })
            .collect()
    }

    #[test]
    fn unitary_dft_matches_direct_sum() {
        let x: Vec<Complex64> = (0..12)
            .map(|i| Complex64::new((i as f64).sin(), (i as f64 * 0.3).cos()))
            .collect();
        for inverse in [false, true] {
            let mut y = x.clone();
            dft(&mut y, inverse);
            let z = naive(&x, inverse);
            for (a, b) in y.iter().zip(&z) {
                assert!((a - b).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn rows_transform_each_row() {
        let (m, n) = (3, 5);
        let x: Vec<Complex64> = (0..m * n)
            .map(|i| Complex64::new(i as f64, -(i as f64) * 0.5))
            .collect();
        let mut y = x.clone();
        dft_rows(&mut y, m, n, false);
        for l in 0..m {
            let row: Vec<_> = (0..n).map(|k| x[l + m * k]).collect();
            let want = naive(&row, false);
            for k in 0..n {
                assert!((y[l + m * k] - want[k]).norm() < 1e-12);
            }
        }
    }
}
