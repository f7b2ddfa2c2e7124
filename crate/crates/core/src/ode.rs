// Copyright 2026 The crsim Authors
// SPDX-License-Identifier: Apache-2.0

//! Explicit Runge–Kutta integrators for `dy/dt = f(t, y)` over complex matrices.

use crate::qlinalg::{CMatrix, C64};
use crate::{Error, Result};

/// Step-size control for the adaptive integrator.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Adaptive {
    pub rtol: f64,
    pub atol: f64,
    /// Hard cap on accepted plus rejected steps.
    pub max_steps: usize,
    /// Upper bound on the step, seconds.
    pub max_step: f64,
}

// Dormand–Prince 5(4) tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

fn combo(y: &CMatrix, h: f64, terms: &[(f64, &CMatrix)]) -> CMatrix {
    let mut out = y.clone();
    for &(a, k) in terms {
        if a != 0.0 {
            out.zip_apply(k, |o, ki| *o += ki * (a * h));
        }
    }
    out
}

fn error_norm(err: &CMatrix, y0: &CMatrix, y1: &CMatrix, opts: &Adaptive) -> f64 {
    let mut acc = 0.0;
    for ((e, a), b) in err.iter().zip(y0.iter()).zip(y1.iter()) {
        let sc = opts.atol + opts.rtol * a.norm().max(b.norm());
        acc += (e.norm() / sc).powi(2);
    }
    (acc / err.len() as f64).sqrt()
}

/// Integrates from `t0` to `t1` with Dormand–Prince 5(4) and PI-free
/// standard step control. `h0` is a hint for the first step.
pub(crate) fn dormand_prince<F>(
    mut f: F,
    t0: f64,
    t1: f64,
    y0: CMatrix,
    h0: f64,
    opts: &Adaptive,
) -> Result<(CMatrix, f64)>
where
    F: FnMut(f64, &CMatrix) -> CMatrix,
{
    let span = t1 - t0;
    if span <= 0.0 {
        return Ok((y0, h0));
    }
    let mut t = t0;
    let mut y = y0;
    let mut h = h0.min(span).min(opts.max_step);
    if !(h > 0.0) {
        h = span.min(opts.max_step) * 1e-3;
    }
    let mut k1 = f(t, &y);
    let mut last_h = h;
    for _ in 0..opts.max_steps {
        let remaining = t1 - t;
        if remaining <= span * 1e-14 {
            return Ok((y, last_h));
        }
        let last = h >= remaining;
        let h_try = if last { remaining } else { h };
        if h_try < span * 1e-13 && h_try < 1e-18 {
            return Err(Error::StepUnderflow { t, h: h_try });
        }
        let k2 = f(t + C2 * h_try, &combo(&y, h_try, &[(A21, &k1)]));
        let k3 = f(t + C3 * h_try, &combo(&y, h_try, &[(A31, &k1), (A32, &k2)]));
        let k4 = f(
            t + C4 * h_try,
            &combo(&y, h_try, &[(A41, &k1), (A42, &k2), (A43, &k3)]),
        );
        let k5 = f(
            t + C5 * h_try,
            &combo(&y, h_try, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
        );
        let k6 = f(
            t + h_try,
            &combo(
                &y,
                h_try,
                &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)],
            ),
        );
        let y_new = combo(
            &y,
            h_try,
            &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)],
        );
        let k7 = f(t + h_try, &y_new);
        let zero = CMatrix::zeros(y.nrows(), y.ncols());
        let err = combo(
            &zero,
            h_try,
            &[(E1, &k1), (E3, &k3), (E4, &k4), (E5, &k5), (E6, &k6), (E7, &k7)],
        );
        let en = error_norm(&err, &y, &y_new, opts);
        if !en.is_finite() {
            h = h_try * 0.1;
            continue;
        }
        if en <= 1.0 {
            t = if last { t1 } else { t + h_try };
            y = y_new;
            k1 = k7;
            last_h = h_try;
            let grow = if en == 0.0 { 5.0 } else { (0.9 * en.powf(-0.2)).clamp(0.2, 5.0) };
            if !last {
                h = (h_try * grow).min(opts.max_step);
            }
        } else {
            h = h_try * (0.9 * en.powf(-0.2)).clamp(0.1, 0.9);
        }
    }
    Err(Error::Convergence {
        what: "adaptive integrator",
        iterations: opts.max_steps,
        detail: format!("stopped at t = {t:.6e} s of {t1:.6e} s"),
    })
}

/// Classical fourth-order Runge–Kutta with a step no larger than `dt`.
pub(crate) fn rk4<F>(mut f: F, t0: f64, t1: f64, y0: CMatrix, dt: f64) -> CMatrix
where
    F: FnMut(f64, &CMatrix) -> CMatrix,
{
    let span = t1 - t0;
    if span <= 0.0 {
        return y0;
    }
    let n = (span / dt).ceil().max(1.0) as usize;
    let h = span / n as f64;
    let mut y = y0;
    for i in 0..n {
        let t = t0 + i as f64 * h;
        let k1 = f(t, &y);
        let k2 = f(t + 0.5 * h, &combo(&y, h, &[(0.5, &k1)]));
        let k3 = f(t + 0.5 * h, &combo(&y, h, &[(0.5, &k2)]));
        let k4 = f(t + h, &combo(&y, h, &[(1.0, &k3)]));
        y = combo(
            &y,
            h,
            &[(1.0 / 6.0, &k1), (1.0 / 3.0, &k2), (1.0 / 3.0, &k3), (1.0 / 6.0, &k4)],
        );
    }
    y
}

/// `-i·h·x` for a Hermitian generator `h`, the Schrödinger right-hand side.
pub(crate) fn schrodinger_rhs(h: &CMatrix, x: &CMatrix) -> CMatrix {
    (h * x) * C64::new(0.0, -1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    const OPTS: Adaptive = Adaptive {
        rtol: 1e-12,
        atol: 1e-14,
        max_steps: 1_000_000,
        max_step: f64::INFINITY,
    };

    #[test]
    fn exponential_decay() {
        let y0 = CMatrix::from_element(1, 1, C64::new(1.0, 0.0));
        let (y, _) = dormand_prince(|_, y| -y, 0.0, 3.0, y0.clone(), 0.1, &OPTS).unwrap();
        assert_abs_diff_eq!(y[(0, 0)].re, (-3.0f64).exp(), epsilon = 1e-11);
        let y4 = rk4(|_, y| -y, 0.0, 3.0, y0, 1e-3);
        assert_abs_diff_eq!(y4[(0, 0)].re, (-3.0f64).exp(), epsilon = 1e-12);
    }

    #[test]
    fn time_dependent_phase() {
        // dy/dt = i·t·y  ⇒  y = exp(i t²/2)
        let y0 = CMatrix::from_element(1, 1, C64::new(1.0, 0.0));
        let (y, _) = dormand_prince(
            |t, y| y * C64::new(0.0, t),
            0.0,
            4.0,
            y0,
            0.01,
            &OPTS,
        )
        .unwrap();
        let want = C64::from_polar(1.0, 8.0);
        assert_abs_diff_eq!((y[(0, 0)] - want).norm(), 0.0, epsilon = 1e-10);
    }

    #[test]
    fn step_cap_reports_failure() {
        let opts = Adaptive { max_steps: 3, ..OPTS };
        let y0 = CMatrix::from_element(1, 1, C64::new(1.0, 0.0));
        let r = dormand_prince(|_, y| y * C64::new(0.0, 1e3), 0.0, 10.0, y0, 1e-3, &opts);
        assert!(matches!(r, Err(Error::Convergence { .. })));
    }
}
