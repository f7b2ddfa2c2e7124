// Copyright 2026 The crsim Authors
// SPDX-License-Identifier: Apache-2.0

//! Damped-cosine fit of Rabi oscillations.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rustfft::{num_complex::Complex, FftPlanner};

use crate::{Error, Result};

/// Parameters of `a·cos(2πft + φ)·e^{−γt} + c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RabiFit {
    /// Hz, non-negative.
    pub frequency: f64,
    /// One-sigma uncertainty of `frequency`, Hz.
    pub frequency_std: f64,
    pub amplitude: f64,
    pub phase: f64,
    /// 1/s.
    pub decay: f64,
    pub offset: f64,
    pub residual_rms: f64,
}

impl RabiFit {
    pub fn eval(&self, t: f64) -> f64 {
        model(&[self.amplitude, self.frequency, self.phase, self.decay, self.offset], t)
    }
}

fn model(x: &[f64; 5], t: f64) -> f64 {
    let [a, f, phi, g, c] = *x;
    a * (2.0 * PI * f * t + phi).cos() * (-g * t).exp() + c
}

fn jacobian_row(x: &[f64; 5], t: f64) -> [f64; 5] {
    let [a, f, phi, g, _] = *x;
    let arg = 2.0 * PI * f * t + phi;
    let e = (-g * t).exp();
    let (s, c) = arg.sin_cos();
    [c * e, -a * s * e * 2.0 * PI * t, -a * s * e, -a * c * e * t, 1.0]
}

/// Fits a damped cosine to samples on a uniform time grid.
///
/// The frequency is seeded from the zero-padded spectrum, amplitude and
/// phase by linear least squares, then all five parameters are refined by
/// Levenberg–Marquardt.
pub fn fit_rabi_frequency(times: &[f64], values: &[f64]) -> Result<RabiFit> {
    let n = times.len();
    if n != values.len() {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: values.len(),
        });
    }
    if n < 8 {
        return Err(Error::InvalidInput(format!("need at least 8 samples, got {n}")));
    }
    if times.iter().chain(values).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite sample".into()));
    }
    let dt = (times[n - 1] - times[0]) / (n - 1) as f64;
    if !(dt > 0.0) || times.windows(2).any(|w| ((w[1] - w[0]) - dt).abs() > 1e-6 * dt) {
        return Err(Error::InvalidInput("times must be uniform and increasing".into()));
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let std = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
    let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    if std < 1e-9 * scale.max(1.0) {
        return Err(Error::NoOscillation(format!("signal is flat (std {std:.2e})")));
    }

    let f0 = spectral_peak(values, mean, dt);
    let t0 = times[0];
    let ts: Vec<f64> = times.iter().map(|t| t - t0).collect();
    let (a0, phi0, c0) = linear_seed(&ts, values, f0)?;
    let mut x = [a0, f0, phi0, 0.0, c0];
    let (cost, jtj) = levenberg_marquardt(&ts, values, &mut x)?;

    if x[0] < 0.0 {
        x[0] = -x[0];
        x[2] += PI;
    }
    if x[1] < 0.0 {
        x[1] = -x[1];
        x[2] = -x[2];
    }
    // Back to the caller's time origin.
    x[2] -= 2.0 * PI * x[1] * t0;
    x[0] *= (x[3] * t0).exp();
    x[2] = x[2].rem_euclid(2.0 * PI);
    let dof = (n as f64 - 5.0).max(1.0);
    let s2 = cost / dof;
    let frequency_std = jtj
        .try_inverse()
        .map(|inv| (s2 * inv[(1, 1)]).max(0.0).sqrt())
        .unwrap_or(f64::INFINITY);
    Ok(RabiFit {
        frequency: x[1],
        frequency_std,
        amplitude: x[0],
        phase: x[2],
        decay: x[3],
        offset: x[4],
        residual_rms: (cost / n as f64).sqrt(),
    })
}

fn spectral_peak(values: &[f64], mean: f64, dt: f64) -> f64 {
    let n = values.len();
    let len = (8 * n).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = values
        .iter()
        .map(|v| Complex::new(v - mean, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(len)
        .collect();
    FftPlanner::new().plan_fft_forward(len).process(&mut buf);
    let mag: Vec<f64> = buf[..len / 2].iter().map(|z| z.norm()).collect();
    let k = (1..mag.len())
        .max_by(|&a, &b| mag[a].total_cmp(&mag[b]))
        .unwrap_or(1);
    let shift = if k + 1 < mag.len() {
        let (l, c, r) = (mag[k - 1], mag[k], mag[k + 1]);
        let den = l - 2.0 * c + r;
        if den.abs() > 0.0 { 0.5 * (l - r) / den } else { 0.0 }
    } else {
        0.0
    };
    (k as f64 + shift) / (len as f64 * dt)
}

fn linear_seed(ts: &[f64], values: &[f64], f: f64) -> Result<(f64, f64, f64)> {
    let a = DMatrix::from_fn(ts.len(), 3, |r, c| match c {
        0 => 1.0,
        1 => (2.0 * PI * f * ts[r]).cos(),
        _ => (2.0 * PI * f * ts[r]).sin(),
    });
    let b = DVector::from_column_slice(values);
    let sol = a
        .svd(true, true)
        .solve(&b, 1e-12)
        .map_err(|e| Error::InvalidInput(e.to_string()))?;
    // a·cos(ωt+φ) = a cosφ cos ωt − a sinφ sin ωt
    let amp = sol[1].hypot(sol[2]);
    let phi = (-sol[2]).atan2(sol[1]);
    Ok((amp, phi, sol[0]))
}

fn residuals(ts: &[f64], values: &[f64], x: &[f64; 5]) -> (DVector<f64>, f64) {
    let r = DVector::from_iterator(ts.len(), ts.iter().zip(values).map(|(&t, &v)| model(x, t) - v));
    let cost = r.norm_squared();
    (r, cost)
}

fn levenberg_marquardt(ts: &[f64], values: &[f64], x: &mut [f64; 5]) -> Result<(f64, DMatrix<f64>)> {
    let jac = |x: &[f64; 5]| {
        let rows: Vec<[f64; 5]> = ts.iter().map(|&t| jacobian_row(x, t)).collect();
        DMatrix::from_fn(ts.len(), 5, |r, c| rows[r][c])
    };
    let (mut r, mut cost) = residuals(ts, values, x);
    let mut lambda = 1e-3;
    let mut j = jac(x);
    for _ in 0..200 {
        let jtj = j.transpose() * &j;
        let g = j.transpose() * &r;
        let mut improved = false;
        for _ in 0..30 {
            let mut m = jtj.clone();
            for d in 0..5 {
                m[(d, d)] += lambda * jtj[(d, d)].max(1e-300);
            }
            let Some(step) = m.lu().solve(&(-&g)) else {
                lambda *= 10.0;
                continue;
            };
            let trial: [f64; 5] = std::array::from_fn(|k| x[k] + step[k]);
            let (rt, ct) = residuals(ts, values, &trial);
            if ct.is_finite() && ct < cost {
                let rel = (cost - ct) / cost.max(1e-300);
                *x = trial;
                r = rt;
                cost = ct;
                lambda = (lambda / 3.0).max(1e-12);
                improved = true;
                j = jac(x);
                if rel < 1e-14 {
                    return Ok((cost, j.transpose() * &j));
                }
                break;
            }
            lambda *= 4.0;
        }
        if !improved {
            break;
        }
    }
    Ok((cost, j.transpose() * &j))
}
