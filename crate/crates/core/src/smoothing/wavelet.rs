//! Haar wavelet shrinkage of per-landmark angle time series.

use std::f64::consts::{PI, TAU};

use crate::model::ThresholdMode;

/// Maps an angle into `(-pi, pi]`.
pub fn wrap_angle(t: f64) -> f64 {
    let mut r = t - TAU * (t / TAU).round();
    if r <= -PI {
        r += TAU;
    } else if r > PI {
        r -= TAU;
    }
    r
}

/// Adds multiples of `2 pi` so that successive samples differ by at most `pi`.
pub fn unwrap_angles(angles: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(angles.len());
    for (i, &a) in angles.iter().enumerate() {
        if i == 0 {
            out.push(a);
        } else {
            let prev = out[i - 1];
            out.push(prev + wrap_angle(a - angles[i - 1]));
        }
    }
    out
}

/// In-place orthonormal Haar transform to the maximum level.
///
/// Layout afterwards: `[a, d_J, d_{J-1} (2), ..., d_1 (n/2)]`, finest details last.
pub fn haar_forward(data: &mut [f64]) {
    let n = data.len();
    assert!(n.is_power_of_two(), "haar length must be a power of two");
    let mut tmp = vec![0.0; n];
    let mut len = n;
    while len > 1 {
        let half = len / 2;
        for i in 0..half {
            let (a, b) = (data[2 * i], data[2 * i + 1]);
            tmp[i] = (a + b) * std::f64::consts::FRAC_1_SQRT_2;
            tmp[half + i] = (a - b) * std::f64::consts::FRAC_1_SQRT_2;
        }
        data[..len].copy_from_slice(&tmp[..len]);
        len = half;
    }
}

pub fn haar_inverse(data: &mut [f64]) {
    let n = data.len();
    assert!(n.is_power_of_two(), "haar length must be a power of two");
    let mut tmp = vec![0.0; n];
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        for i in 0..half {
            let (a, d) = (data[i], data[half + i]);
            tmp[2 * i] = (a + d) * std::f64::consts::FRAC_1_SQRT_2;
            tmp[2 * i + 1] = (a - d) * std::f64::consts::FRAC_1_SQRT_2;
        }
        data[..len].copy_from_slice(&tmp[..len]);
        len *= 2;
    }
}

#[inline]
pub fn soft_threshold(x: f64, t: f64) -> f64 {
    x.signum() * (x.abs() - t).max(0.0)
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// `sigma * sqrt(2 ln n)` with `sigma = median(|finest details|) / 0.6745`.
pub fn universal_threshold(coefficients: &[f64]) -> f64 {
    let n = coefficients.len();
    let mut finest: Vec<f64> = coefficients[n / 2..].iter().map(|d| d.abs()).collect();
    let sigma = median(&mut finest) / 0.6745;
    sigma * (2.0 * (n as f64).ln()).sqrt()
}

/// Symmetric-pads to a power of two, soft-thresholds every detail coefficient,
/// inverts and truncates. Length-1 input is returned unchanged.
pub fn denoise(signal: &[f64], mode: ThresholdMode) -> Vec<f64> {
    let n = signal.len();
    if n <= 1 {
        return signal.to_vec();
    }
    let padded_len = n.next_power_of_two();
    let mut data = Vec::with_capacity(padded_len);
    data.extend_from_slice(signal);
    for i in n..padded_len {
        data.push(signal[2 * n - 1 - i]);
    }
    haar_forward(&mut data);
    let threshold = match mode {
        ThresholdMode::SoftUniversal => universal_threshold(&data),
        ThresholdMode::Zero => 0.0,
    };
    if threshold > 0.0 {
        for d in &mut data[1..] {
            *d = soft_threshold(*d, threshold);
        }
    }
    haar_inverse(&mut data);
    data.truncate(n);
    data
}

/// Unwrap, denoise, re-wrap into `(-pi, pi]`.
pub fn wavelet_smooth_angles(angles: &[f64], mode: ThresholdMode) -> Vec<f64> {
    if angles.len() <= 1 {
        return angles.to_vec();
    }
    denoise(&unwrap_angles(angles), mode)
        .into_iter()
        .map(wrap_angle)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};

    /// Explicit orthonormal Haar analysis matrix for length 8, rows ordered like
    /// `haar_forward`'s output.
    fn haar_matrix_8() -> DMatrix<f64> {
        let s2 = 2f64.sqrt();
        let mut m = DMatrix::zeros(8, 8);
        for j in 0..8 {
            m[(0, j)] = 1.0 / (8f64).sqrt();
            m[(1, j)] = if j < 4 { 1.0 } else { -1.0 } / (8f64).sqrt();
        }
        for b in 0..2 {
            for j in 0..4 {
                m[(2 + b, 4 * b + j)] = if j < 2 { 0.5 } else { -0.5 };
            }
        }
        for b in 0..4 {
            m[(4 + b, 2 * b)] = 1.0 / s2;
            m[(4 + b, 2 * b + 1)] = -1.0 / s2;
        }
        m
    }

    #[test]
    fn matrix_oracle_agrees_with_transform() {
        let x = [0.3, -1.2, 2.5, 0.0, 4.1, 4.0, -0.7, 1.9];
        let expected = haar_matrix_8() * DVector::from_row_slice(&x);
        let mut y = x;
        haar_forward(&mut y);
        for i in 0..8 {
            assert!((y[i] - expected[i]).abs() < 1e-14);
        }
        haar_inverse(&mut y);
        for i in 0..8 {
            assert!((y[i] - x[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn alternating_sequence_fixture() {
        // oracle: coefficients by matrix, MAD threshold, soft shrink, transpose back
        let x: Vec<f64> = (0..8).map(|i| if i % 2 == 0 { 0.0 } else { PI / 2.0 }).collect();
        let h = haar_matrix_8();
        let c = &h * DVector::from_vec(x.clone());
        let mut fine: Vec<f64> = c.rows(4, 4).iter().map(|v| v.abs()).collect();
        fine.sort_by(|a, b| a.total_cmp(b));
        let sigma = 0.5 * (fine[1] + fine[2]) / 0.6745;
        let t = sigma * (2.0 * 8f64.ln()).sqrt();
        let mut shrunk = c.clone();
        for i in 1..8 {
            shrunk[i] = shrunk[i].signum() * (shrunk[i].abs() - t).max(0.0);
        }
        let oracle = h.transpose() * shrunk;
        // frozen: every detail falls below the threshold, leaving the mean pi/4
        for v in oracle.iter() {
            assert!((v - PI / 4.0).abs() < 1e-12);
        }
        let out = wavelet_smooth_angles(&x, ThresholdMode::SoftUniversal);
        for (o, e) in out.iter().zip(oracle.iter()) {
            assert!((o - e).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_is_unchanged() {
        let x = vec![0.7; 11];
        let out = wavelet_smooth_angles(&x, ThresholdMode::SoftUniversal);
        assert!(out.iter().all(|v| (v - 0.7).abs() < 1e-12));
    }

    #[test]
    fn single_sample_passes_through() {
        assert_eq!(wavelet_smooth_angles(&[2.0], ThresholdMode::SoftUniversal), vec![2.0]);
    }

    #[test]
    fn spike_is_reduced_and_mean_kept() {
        let (c, a) = (0.3, 1.0);
        for n in [2usize, 4] {
            let mut x = vec![c; n];
            x[n - 1] += a;
            let out = denoise(&x, ThresholdMode::SoftUniversal);
            assert!((out[n - 1] - c).abs() < a);
            let mean_in: f64 = x.iter().sum::<f64>() / n as f64;
            let mean_out: f64 = out.iter().sum::<f64>() / n as f64;
            assert!((mean_in - mean_out).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_threshold_round_trips() {
        let x = [0.1, 3.0, -3.1, 2.9, -2.0];
        let out = wavelet_smooth_angles(&x, ThresholdMode::Zero);
        for (o, i) in out.iter().zip(x) {
            assert!((o - i).abs() < 1e-12);
        }
    }

    #[test]
    fn unwrap_and_wrap() {
        let u = unwrap_angles(&[3.0, -3.0, 3.1]);
        assert!((u[1] - (TAU - 3.0)).abs() < 1e-12);
        assert!((u[2] - 3.1).abs() < 1e-12);
        assert_eq!(wrap_angle(-PI), PI);
        assert!((wrap_angle(3.0 * PI) - PI).abs() < 1e-12);
        assert!((wrap_angle(7.0) - (7.0 - TAU)).abs() < 1e-12);
    }
}
