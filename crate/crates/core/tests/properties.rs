// Copyright 2026 The crsim Authors
// SPDX-License-Identifier: Apache-2.0

//! Randomised invariants across the public API.

use proptest::prelude::*;

use crsim::device::{dressed_frequencies, static_hamiltonian, DeviceParams, DriveSpec, Qubit};
use crsim::dynamics::{noise_from_coherences, Simulator, SolverOptions};
use crsim::metrics::{concurrence, gate_fidelity_from_process, process_fidelity, GateTarget};
use crsim::pulses::{
    calibrate_rotation, Envelope, PulseParams, PulseSchedule, ScheduleEntry,
};
use crsim::qlinalg::{
    eig_hermitian, matrix_exp, pauli_basis, pauli_labels, pauli_string, tensor, CMatrix, ComplexOperator,
    DensityMatrix, StateVector, C64,
};
use crsim::tomo::{
    joint_readout, mle_state_tomography, qpt, simulate_record, tomography_settings, QptOptions, ReadoutModel,
    ShotNoise,
};

fn complex_matrix(n: usize) -> impl Strategy<Value = CMatrix> {
    prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), n * n)
        .prop_map(move |v| CMatrix::from_iterator(n, n, v.into_iter().map(|(re, im)| C64::new(re, im))))
}

fn operator(n: usize) -> impl Strategy<Value = ComplexOperator> {
    complex_matrix(n).prop_map(|m| ComplexOperator::new(m).unwrap())
}

fn hermitian(n: usize) -> impl Strategy<Value = ComplexOperator> {
    complex_matrix(n).prop_map(|m| ComplexOperator::new((&m + m.adjoint()) * C64::new(0.5, 0.0)).unwrap())
}

fn density(n: usize) -> impl Strategy<Value = DensityMatrix> {
    (complex_matrix(n), 1..=n).prop_map(move |(g, rank)| {
        let g = g.columns(0, rank).into_owned();
        let m = &g * g.adjoint();
        let tr = m.trace();
        DensityMatrix::new(m / tr).unwrap()
    })
}

fn unitary(n: usize) -> impl Strategy<Value = ComplexOperator> {
    hermitian(n).prop_map(|h| matrix_exp(&h, C64::new(0.0, -1.0)))
}

fn distance(a: &ComplexOperator, b: &ComplexOperator) -> f64 {
    (a - b).norm()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn tensor_is_associative(a in operator(2), b in operator(2), c in operator(2)) {
        let left = tensor(&tensor(&a, &b), &c);
        let right = tensor(&a, &tensor(&b, &c));
        prop_assert!(distance(&left, &right) < 1e-12);
    }

    #[test]
    fn tensor_is_bilinear(a in operator(2), b in operator(2), c in operator(2), s in -3.0..3.0f64) {
        let k = C64::new(s, 0.5);
        let sum = tensor(&(&a + &b.scale(k)), &c);
        let split = &tensor(&a, &c) + &tensor(&b, &c).scale(k);
        prop_assert!(distance(&sum, &split) < 1e-12);
        let right = tensor(&c, &(&a + &b));
        prop_assert!(distance(&right, &(&tensor(&c, &a) + &tensor(&c, &b))) < 1e-12);
    }

    #[test]
    fn exponential_of_hermitian_is_unitary(h in hermitian(4), t in -1e3..1e3f64) {
        let norm = h.norm().max(1e-12);
        let u = matrix_exp(&h, C64::new(0.0, -t / norm));
        prop_assert!(u.unitarity_error() < 1e-10);
    }

    #[test]
    fn eigendecomposition_reconstructs(h in hermitian(4)) {
        let e = eig_hermitian(&h).unwrap();
        let v = e.vectors.matrix();
        let lambda = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            4,
            e.values.iter().map(|&x| C64::new(x, 0.0)),
        ));
        prop_assert!((v * lambda * v.adjoint() - h.matrix()).norm() < 1e-8);
        prop_assert!(e.values.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn static_hamiltonian_is_hermitian(
        f1 in 4e9..7e9f64, f2 in 4e9..7e9f64, j in 0.0..20e6f64, zz in -1e6..1e6f64,
    ) {
        let p = DeviceParams { omega: [f1, f2], coupling: j, zz, ..DeviceParams::default() };
        prop_assert!(static_hamiltonian(&p).hermiticity_error() < 1e-12 * 2.0 * std::f64::consts::PI * 7e9);
    }

    #[test]
    fn dressed_shifts_are_opposite(detuning in 100e6..600e6f64, ratio in 0.005..0.05f64) {
        let j = ratio * detuning;
        let p = DeviceParams { omega: [5.5e9 + detuning, 5.5e9], coupling: j, zz: 0.0, ..DeviceParams::default() };
        let (f1, f2) = dressed_frequencies(&p).unwrap();
        let (s1, s2) = (f1 - p.omega[0], f2 - p.omega[1]);
        // Second order: the exchange shift ±J²/Δ plus a common J²/Σ from the
        // counter-rotating part of XX.
        let exchange = j * j / detuning;
        let common = j * j / (p.omega[0] + p.omega[1]);
        prop_assert!((s1 - (exchange + common)).abs() <= 0.05 * exchange);
        prop_assert!((s2 - (common - exchange)).abs() <= 0.05 * exchange);
        prop_assert!((s1 - common + (s2 - common)).abs() <= 0.05 * (s1 - common).abs());
    }

    #[test]
    fn envelopes_are_continuous(
        amp in 1e6..500e6f64, sigma in 2e-9..20e-9f64, flat in 0.0..200e-9f64, drag in -2.0..2.0f64,
    ) {
        for env in [
            Envelope::gaussian_drag(amp, sigma, drag, 224e6).unwrap(),
            Envelope::flat_top(amp, sigma, flat, drag, 224e6).unwrap(),
        ] {
            let total = env.total_length();
            let n = 4000;
            let dt = total / n as f64;
            let bound = 4.0 * amp / sigma * dt;
            prop_assert!(env.sample(0.0).0.abs() < 1e-9 * amp && env.sample(total).0.abs() < 1e-9 * amp);
            prop_assert!(env.sample(-dt) == (0.0, 0.0) && env.sample(total + dt) == (0.0, 0.0));
            let samples: Vec<(f64, f64)> = (0..=n).map(|k| env.sample(k as f64 * dt)).collect();
            for (k, w) in samples.windows(2).enumerate() {
                prop_assert!((w[1].0 - w[0].0).abs() <= bound, "in-phase jump at {k}");
                // The derivative quadrature of a truncated Gaussian steps at
                // the outer edges only.
                if k > 0 && k + 1 < n {
                    prop_assert!((w[1].1 - w[0].1).abs() <= bound * (1.0 + drag.abs()), "quadrature jump at {k}");
                }
            }
        }
    }

    #[test]
    fn drag_quadrature_integrates_to_zero(amp in 1e6..500e6f64, sigma in 2e-9..20e-9f64, drag in -2.0..2.0f64) {
        let env = Envelope::gaussian_drag(amp, sigma, drag, 224e6).unwrap();
        let n = 20_000;
        let dt = env.total_length() / n as f64;
        let (area, scale) = (0..n).fold((0.0, 0.0), |(a, s), k| {
            let q = env.sample((k as f64 + 0.5) * dt).1;
            (a + q * dt, s + q.abs() * dt)
        });
        prop_assert!(area.abs() <= 1e-9 * scale.max(1e-30));
    }

    #[test]
    fn overlapping_drives_on_one_port_are_rejected(a in 0.0..100e-9f64, b in 0.0..100e-9f64) {
        let p = DeviceParams::default();
        let env = Envelope::gaussian_drag(10e6, 4e-9, 0.0, 224e6).unwrap();
        let entry = |start| ScheduleEntry { start, drive: DriveSpec::new(Qubit::Q1, p.omega[0], 0.0).unwrap(), envelope: env };
        let mut s = PulseSchedule::new();
        s.push(entry(a)).unwrap();
        let overlaps = (a - b).abs() < env.total_length() - 1e-15;
        prop_assert_eq!(s.push(entry(b)).is_err(), overlaps);
        let other = ScheduleEntry { drive: DriveSpec::new(Qubit::Q2, p.omega[1], 0.0).unwrap(), ..entry(b) };
        prop_assert!(s.push(other).is_ok());
    }

    #[test]
    fn concurrence_is_local_invariant(rho in density(4), a in unitary(2), b in unitary(2)) {
        let moved = rho.evolve(&tensor(&a, &b)).unwrap();
        let (c0, c1) = (concurrence(&rho), concurrence(&moved));
        prop_assert!((0.0..=1.0).contains(&c0));
        prop_assert!((c0 - c1).abs() < 1e-8, "{c0} vs {c1}");
    }

    #[test]
    fn product_states_have_no_concurrence(a in density(2), b in density(2)) {
        let rho = DensityMatrix::new(a.matrix().kronecker(b.matrix())).unwrap();
        prop_assert!(concurrence(&rho) < 1e-7);
    }

    #[test]
    fn unitary_process_fidelity_is_trace_overlap(u in unitary(4), v in unitary(4)) {
        let chi = GateTarget::new(v.clone(), "v").unwrap().chi();
        let target = GateTarget::new(u.clone(), "u").unwrap();
        let expected = (u.adjoint().matrix() * v.matrix()).trace().norm_sqr() / 16.0;
        prop_assert!((process_fidelity(&chi, &target) - expected).abs() < 1e-9);
    }

    #[test]
    fn gate_fidelity_is_affine_and_monotone(x in 0.0..1.0f64, y in 0.0..1.0f64) {
        let (fx, fy) = (gate_fidelity_from_process(x, 4).unwrap(), gate_fidelity_from_process(y, 4).unwrap());
        let mid = gate_fidelity_from_process((x + y) / 2.0, 4).unwrap();
        prop_assert!((mid - (fx + fy) / 2.0).abs() < 1e-12);
        prop_assert!((x - y) * (fx - fy) >= 0.0);
    }

    #[test]
    fn trivial_readout_weights_read_one(rho in density(4), seed in any::<u64>()) {
        let model = ReadoutModel::new([1.0, 0.0, 0.0, 0.0], ShotNoise::None).unwrap();
        for s in tomography_settings() {
            prop_assert!((joint_readout(&rho, s, &model, seed).unwrap() - 1.0).abs() < 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn mle_output_is_physical(rho in density(4), sigma in 0.0..0.1f64, seed in any::<u64>()) {
        let model = ReadoutModel::new([1.0, 0.77, 0.72, 0.6], ShotNoise::Gaussian { sigma }).unwrap();
        let record = simulate_record(&rho, &model, seed).unwrap();
        let est = mle_state_tomography(&record, &model).unwrap();
        prop_assert!(est.matrix().trace().re - 1.0 < 1e-12);
        prop_assert!(est.eigenvalues().iter().all(|&l| l >= -1e-12));
        let h = est.matrix() - est.matrix().adjoint();
        prop_assert!(h.norm() == 0.0);
    }

    #[test]
    fn unitary_channel_has_one_dominant_chi_weight(u in unitary(4)) {
        let channel = |r: &DensityMatrix| r.evolve(&u);
        let out = qpt(channel, &ReadoutModel::default(), &QptOptions::default()).unwrap();
        let top = out.projected.eigenvalues().into_iter().fold(f64::MIN, f64::max);
        prop_assert!(top >= 1.0 - 1e-6, "{top}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn lindblad_keeps_trace_and_hermiticity(amp in 10e6..400e6f64, flat in 0.0..300e-9f64, rho in density(4)) {
        let p = DeviceParams::default();
        let env = Envelope::flat_top(amp, 12e-9, flat, 0.8, p.anharmonicity[0]).unwrap();
        let (_, f2) = dressed_frequencies(&p).unwrap();
        let mut s = PulseSchedule::new();
        s.push(ScheduleEntry { start: 0.0, drive: DriveSpec::new(Qubit::Q1, f2, 0.0).unwrap(), envelope: env }).unwrap();
        let sim = Simulator::new(&p, SolverOptions::default()).unwrap();
        let noise = noise_from_coherences(&p).unwrap();
        let n = 9;
        let times: Vec<f64> = (0..n).map(|k| s.duration() * k as f64 / (n - 1) as f64).collect();
        let out = sim.evolve_lindblad(&s, &rho, &noise, &times).unwrap();
        for r in &out.states {
            prop_assert!((r.matrix().trace().re - 1.0).abs() < 1e-6);
            prop_assert!((r.matrix() - r.matrix().adjoint()).norm() < 1e-9);
        }

        // Without noise the density evolution matches the pure-state one.
        let psi = StateVector::from_bits("10").unwrap();
        let closed = sim.evolve_unitary(&s, &psi, &[s.duration()]).unwrap();
        let open = sim.evolve_lindblad(&s, &psi.to_density(), &crsim::dynamics::NoiseModel::none(), &[s.duration()]).unwrap();
        prop_assert!(closed.states[0].trace_distance(&open.states[0]) < 1e-6);
    }
}

#[test]
fn pauli_strings_form_an_orthogonal_basis() {
    let basis = pauli_basis();
    let labels = pauli_labels();
    assert_eq!(basis.len(), 16);
    for (i, p) in basis.iter().enumerate() {
        assert!(p.hermiticity_error() < 1e-15);
        assert!(p.unitarity_error() < 1e-15);
        if labels[i] != "II" {
            assert!(p.trace().norm() < 1e-15, "{}", labels[i]);
        }
        for (j, q) in basis.iter().enumerate() {
            let expected = if i == j { 4.0 } else { 0.0 };
            assert!((p.inner(q) - C64::new(expected, 0.0)).norm() < 1e-14);
        }
    }
}

#[test]
fn conditional_term_commutes_with_target_drive() {
    let zx = pauli_string("ZX").unwrap();
    let ix = pauli_string("IX").unwrap();
    let commutator = &(&zx * &ix) - &(&ix * &zx);
    assert_eq!(commutator.norm(), 0.0);
}

#[test]
fn rotation_amplitude_grows_with_angle() {
    let p = DeviceParams::default();
    let params = PulseParams::default();
    let amps: Vec<f64> = [15.0, 30.0, 45.0, 60.0, 90.0]
        .iter()
        .map(|&a| calibrate_rotation(&p, &params, Qubit::Q1, a).unwrap().amplitude)
        .collect();
    assert!(amps.windows(2).all(|w| w[1] > w[0]), "{amps:?}");
}
