// Copyright 2026 The crsim Authors
// SPDX-License-Identifier: Apache-2.0

//! Derivative-free minimisation for the low-dimensional calibration
//! problems.

/// Downhill simplex. Stops when the spread of the simplex values falls
/// below `tol` or after `max_iter` iterations; returns the best vertex.
pub(crate) fn nelder_mead<F>(f: &F, x0: &[f64], step: &[f64], tol: f64, max_iter: usize) -> (Vec<f64>, f64)
where
    F: Fn(&[f64]) -> f64 + ?Sized,
{
    let n = x0.len();
    let mut simplex: Vec<Vec<f64>> = std::iter::once(x0.to_vec())
        .chain((0..n).map(|k| {
            let mut v = x0.to_vec();
            v[k] += step[k];
            v
        }))
        .collect();
    let mut values: Vec<f64> = simplex.iter().map(|v| f(v)).collect();
    let lerp = |a: &[f64], b: &[f64], t: f64| -> Vec<f64> { a.iter().zip(b).map(|(x, y)| x + t * (y - x)).collect() };

    for _ in 0..max_iter {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&k| simplex[k].clone()).collect();
        values = order.iter().map(|&k| values[k]).collect();
        if (values[n] - values[0]).abs() < tol {
            break;
        }
        let centroid: Vec<f64> = (0..n)
            .map(|j| simplex[..n].iter().map(|v| v[j]).sum::<f64>() / n as f64)
            .collect();
        let reflected = lerp(&centroid, &simplex[n], -1.0);
        let fr = f(&reflected);
        if fr < values[0] {
            let expanded = lerp(&centroid, &simplex[n], -2.0);
            let fe = f(&expanded);
            (simplex[n], values[n]) = if fe < fr { (expanded, fe) } else { (reflected, fr) };
        } else if fr < values[n - 1] {
            (simplex[n], values[n]) = (reflected, fr);
        } else {
            let contracted = if fr < values[n] {
                lerp(&centroid, &reflected, 0.5)
            } else {
                lerp(&centroid, &simplex[n], 0.5)
            };
            let fc = f(&contracted);
            if fc < values[n].min(fr) {
                (simplex[n], values[n]) = (contracted, fc);
            } else {
                for k in 1..=n {
                    simplex[k] = lerp(&simplex[0], &simplex[k], 0.5);
                    values[k] = f(&simplex[k]);
                }
            }
        }
    }
    let k = (0..=n).min_by(|&a, &b| values[a].total_cmp(&values[b])).expect("non-empty simplex");
    (simplex[k].clone(), values[k])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_quadratic_minimum() {
        let f = |x: &[f64]| (x[0] - 1.0).powi(2) + 3.0 * (x[1] + 2.0).powi(2);
        let (x, v) = nelder_mead(&f, &[0.0, 0.0], &[0.5, 0.5], 1e-16, 500);
        assert!((x[0] - 1.0).abs() < 1e-5 && (x[1] + 2.0).abs() < 1e-5);
        assert!(v < 1e-10);
    }

    #[test]
    fn rosenbrock_in_four_dimensions() {
        let f = |x: &[f64]| {
            x.windows(2)
                .map(|w| 100.0 * (w[1] - w[0] * w[0]).powi(2) + (1.0 - w[0]).powi(2))
                .sum::<f64>()
        };
        let mut x = vec![-1.0, 1.0, -1.0, 1.0];
        let mut v = f(&x);
        for _ in 0..10 {
            (x, v) = nelder_mead(&f, &x, &[0.3; 4], 1e-20, 5000);
        }
        assert!(v < 1e-10, "{v} at {x:?}");
    }
}
