// Copyright 2026 The crsim Authors
// SPDX-License-Identifier: Apache-2.0

use std::f64::consts::PI;

use approx::assert_abs_diff_eq;

use super::*;
use crate::device::DriveSpec;
use crate::pulses::{Envelope, PulseParams, ScheduleEntry};
use crate::qlinalg::pauli_string;

fn quiet() -> DeviceParams {
    DeviceParams {
        coupling: 0.0,
        zz: 0.0,
        crosstalk: [0.0, 0.0],
        ..DeviceParams::default()
    }
}

fn flat_drive(p: &DeviceParams, port: Qubit, carrier_of: Qubit, amp: f64, flat: f64, start: f64) -> PulseSchedule {
    let frame = RotatingFrame::dressed(p).unwrap();
    let env = Envelope::flat_top(amp, 12e-9, flat, 0.0, 224e6).unwrap();
    let mut s = PulseSchedule::new();
    s.push(ScheduleEntry {
        start,
        drive: DriveSpec::new(port, frame.freqs[carrier_of.index()], 0.0).unwrap(),
        envelope: env,
    })
    .unwrap();
    s
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect()
}

#[test]
fn noise_rates_from_coherence_times() {
    let p = DeviceParams {
        t1: [1.6e-6, 1.6e-6],
        t2: [1.6e-6, 3.2e-6],
        ..DeviceParams::default()
    };
    let n = noise_from_coherences(&p).unwrap();
    assert_abs_diff_eq!(n.relaxation[0], 6.25e5, epsilon = 1e-6);
    assert_abs_diff_eq!(n.dephasing[0], 3.125e5, epsilon = 1e-6);
    assert_abs_diff_eq!(n.dephasing[1], 0.0, epsilon = 1e-9);
    let bad = DeviceParams {
        t2: [3.3e-6, 1.5e-6],
        ..p
    };
    assert!(matches!(noise_from_coherences(&bad), Err(Error::Unphysical(_))));
}

#[test]
fn zero_hamiltonian_leaves_state_unchanged() {
    let p = quiet();
    let psi = StateVector::normalized(crate::qlinalg::CVector::from_vec(vec![
        C64::new(0.3, 0.1),
        C64::new(-0.2, 0.4),
        C64::new(0.5, 0.0),
        C64::new(0.1, -0.6),
    ]))
    .unwrap();
    let out = evolve_unitary(&PulseSchedule::idle(300e-9).unwrap(), &p, &psi).unwrap();
    let d = out.final_state().unwrap().trace_distance(&psi.to_density());
    assert!(d < 1e-12, "{d}");
}

#[test]
fn resonant_drive_follows_pulse_area() {
    let p = quiet();
    let sim = Simulator::new(&p, SolverOptions::default()).unwrap();
    for flat in [0.0, 7e-9, 23e-9] {
        let s = flat_drive(&p, Qubit::Q1, Qubit::Q1, 9e6, flat, 0.0);
        let area = s.entries()[0].envelope.in_phase_area();
        let psi = StateVector::from_bits("00").unwrap();
        let out = sim.evolve_unitary(&s, &psi, &[s.duration()]).unwrap();
        let zi = out.expectations["ZI"][0];
        let expected = 1.0 - 2.0 * (PI * area).sin().powi(2);
        assert_abs_diff_eq!(zi, expected, epsilon = 1e-8);
    }
}

#[test]
fn constant_drive_rabi_oscillation() {
    // Flat section only: P(t) = sin²(πAt) on top of the ramp-up rotation.
    let p = quiet();
    let sim = Simulator::new(&p, SolverOptions::default()).unwrap();
    let amp = 5e6;
    let s = flat_drive(&p, Qubit::Q2, Qubit::Q2, amp, 200e-9, 0.0);
    let ramp = 24e-9;
    let ramp_area = amp * 12e-9 * crate::pulses::ramp_area_factor();
    let times = linspace(ramp, ramp + 200e-9, 9);
    let out = sim.evolve_unitary(&s, &StateVector::from_bits("00").unwrap(), &times).unwrap();
    for (t, iz) in times.iter().zip(&out.expectations["IZ"]) {
        let theta = PI * (ramp_area + amp * (t - ramp));
        assert_abs_diff_eq!(*iz, 1.0 - 2.0 * theta.sin().powi(2), epsilon = 1e-8);
    }
}

#[test]
fn unitary_norm_is_preserved() {
    let p = DeviceParams::default();
    let sim = Simulator::new(&p, SolverOptions::default()).unwrap();
    let s = flat_drive(&p, Qubit::Q1, Qubit::Q2, 300e6, 60e-9, 5e-9);
    let u = sim.unitary(&s).unwrap();
    assert!(u.unitarity_error() < 1e-8, "{}", u.unitarity_error());
}

#[test]
fn free_relaxation_matches_exponential() {
    let p = quiet();
    let sim = Simulator::new(&p, SolverOptions::default()).unwrap();
    let noise = noise_from_coherences(&p).unwrap();
    let rho0 = StateVector::from_bits("10").unwrap().to_density();
    let t1 = p.t1[0];
    let times = linspace(0.0, 3.0 * t1, 13);
    let s = PulseSchedule::idle(3.0 * t1).unwrap();
    let out = sim.evolve_lindblad(&s, &rho0, &noise, &times).unwrap();
    for (t, rho) in times.iter().zip(&out.states) {
        let excited = rho.matrix()[(2, 2)].re + rho.matrix()[(3, 3)].re;
        assert_abs_diff_eq!(excited, (-t / t1).exp(), epsilon = 1e-4);
    }
}

#[test]
fn doubly_excited_decay_factorises() {
    let p = DeviceParams::default();
    let sim = Simulator::new(&p, SolverOptions::default()).unwrap();
    let noise = noise_from_coherences(&p).unwrap();
    let rho0 = StateVector::from_bits("11").unwrap().to_density();
    let times = linspace(0.0, 4e-6, 9);
    let s = PulseSchedule::idle(4e-6).unwrap();
    let out = sim.evolve_lindblad(&s, &rho0, &noise, &times).unwrap();
    for (t, zz) in times.iter().zip(&out.expectations["ZZ"]) {
        let z1 = 1.0 - 2.0 * (-t / p.t1[0]).exp();
        let z2 = 1.0 - 2.0 * (-t / p.t1[1]).exp();
        assert_abs_diff_eq!(*zz, z1 * z2, epsilon = 1e-4);
    }
}

#[test]
fn ramsey_coherence_decays_at_t2() {
    let p = DeviceParams::default();
    let sim = Simulator::new(&p, SolverOptions::default()).unwrap();
    let noise = noise_from_coherences(&p).unwrap();
    let plus = StateVector::normalized(crate::qlinalg::CVector::from_vec(vec![
        C64::new(1.0, 0.0),
        C64::new(0.0, 0.0),
        C64::new(1.0, 0.0),
        C64::new(0.0, 0.0),
    ]))
    .unwrap();
    let times = linspace(0.0, 3e-6, 7);
    let s = PulseSchedule::idle(3e-6).unwrap();
    let out = sim.evolve_lindblad(&s, &plus.to_density(), &noise, &times).unwrap();
    for (t, rho) in times.iter().zip(&out.states) {
        let coh = 2.0 * rho.matrix()[(0, 2)].norm();
        let expected = (-t / p.t2[0]).exp();
        assert!((coh - expected).abs() <= 0.01 * expected, "t={t}: {coh} vs {expected}");
    }
}

fn cr_sequence(p: &DeviceParams) -> PulseSchedule {
    let mut s = flat_drive(p, Qubit::Q1, Qubit::Q2, 400e6, 80e-9, 0.0);
    let frame = RotatingFrame::dressed(p).unwrap();
    let env = Envelope::gaussian_drag(30e6, 4e-9, -1.4, 224e6).unwrap();
    s.push(ScheduleEntry {
        start: 40e-9,
        drive: DriveSpec::new(Qubit::Q2, frame.freqs[1] - 5e6, 0.4).unwrap(),
        envelope: env,
    })
    .unwrap();
    s.extend_to(150e-9).unwrap();
    s
}

#[test]
fn noiseless_lindblad_matches_unitary() {
    let p = DeviceParams::default();
    let sim = Simulator::new(&p, SolverOptions::default()).unwrap();
    let s = cr_sequence(&p);
    let psi = StateVector::from_bits("10").unwrap();
    let times = linspace(0.0, s.duration(), 6);
    let a = sim.evolve_unitary(&s, &psi, &times).unwrap();
    let b = sim.evolve_lindblad(&s, &psi.to_density(), &NoiseModel::none(), &times).unwrap();
    for (x, y) in a.states.iter().zip(&b.states) {
        assert!(x.trace_distance(y) < 1e-6);
    }
}

#[test]
fn lindblad_preserves_trace_and_hermiticity() {
    let p = DeviceParams::default();
    let sim = Simulator::new(&p, SolverOptions::default()).unwrap();
    let noise = noise_from_coherences(&p).unwrap();
    let s = cr_sequence(&p);
    let times = linspace(0.0, s.duration(), 11);
    let rho0 = StateVector::bell().to_density();
    let out = sim.evolve_lindblad(&s, &rho0, &noise, &times).unwrap();
    for rho in &out.states {
        let m = rho.matrix();
        assert!((m.trace().re - 1.0).abs() < 1e-6);
        assert!((m - m.adjoint()).camax() < 1e-9);
        assert!(rho.eigenvalues().iter().all(|&l| l > -1e-6));
    }
}

#[test]
fn superoperator_matches_density_evolution() {
    let p = DeviceParams::default();
    let sim = Simulator::new(&p, SolverOptions::default()).unwrap();
    let noise = noise_from_coherences(&p).unwrap();
    let s = cr_sequence(&p);
    let channel = sim.superoperator(&s, Some(&noise)).unwrap();
    let rho0 = StateVector::from_bits("01").unwrap().to_density();
    let direct = sim.evolve_lindblad(&s, &rho0, &noise, &[s.duration()]).unwrap();
    assert!(channel.apply(&rho0).trace_distance(&direct.states[0]) < 1e-8);

    let u = sim.unitary(&s).unwrap();
    let closed = sim.superoperator(&s, None).unwrap();
    let from_u = Superoperator::from_unitary(&u).unwrap();
    assert!((closed.matrix() - from_u.matrix()).camax() < 1e-8);
}

#[test]
fn fixed_step_converges_at_fourth_order() {
    let p = DeviceParams::default();
    let s = cr_sequence(&p);
    let adaptive = Simulator::new(&p, SolverOptions::default()).unwrap().unitary(&s).unwrap();
    let fixed_error = |dt: f64| {
        let opts = SolverOptions {
            integrator: Integrator::Fixed,
            dt,
            ..SolverOptions::default()
        };
        let u = Simulator::new(&p, opts).unwrap().unitary(&s).unwrap();
        (adaptive.matrix() - u.matrix()).camax()
    };
    let coarse = fixed_error(0.05e-9);
    let fine = fixed_error(0.025e-9);
    assert!(coarse < 1e-4, "{coarse:e}");
    let order = (coarse / fine).log2();
    assert!((order - 4.0).abs() < 0.5, "observed order {order}");
}

#[test]
fn lab_frame_agrees_with_rotating_frame() {
    let p = DeviceParams::default();
    let dressed = RotatingFrame::dressed(&p).unwrap();
    let amp = (p.omega[0] - p.omega[1]) / 10.0;
    let s = flat_drive(&p, Qubit::Q1, Qubit::Q2, amp, 6e-9, 0.0);
    let times = linspace(0.0, s.duration(), 7);
    let psi = StateVector::from_bits("00").unwrap();

    let rotating = Simulator::new(
        &p,
        SolverOptions {
            model: DriveModel::Direct { rwa: true },
            ..SolverOptions::default()
        },
    )
    .unwrap()
        .evolve_unitary(&s, &psi, &times)
        .unwrap();
    let lab = Simulator::new(
        &p,
        SolverOptions {
            model: DriveModel::Direct { rwa: false },
            frame: Some(RotatingFrame::lab()),
            ..SolverOptions::default()
        },
    )
    .unwrap();
    let direct = lab.evolve_unitary(&s, &psi, &times).unwrap();
    for (a, b) in rotating.expectations["ZZ"].iter().zip(&direct.expectations["ZZ"]) {
        assert!((a - b).abs() < 1e-3, "{a} vs {b}");
    }
    assert!(dressed.freqs[0] > 0.0);
}

#[test]
fn expectations_match_states() {
    let p = DeviceParams::default();
    let psi = StateVector::from_bits("10").unwrap();
    let out = evolve_unitary(&PulseSchedule::idle(10e-9).unwrap(), &p, &psi).unwrap();
    let zi = pauli_string("ZI").unwrap();
    let v = expectation(out.final_state().unwrap(), &zi).unwrap();
    assert_abs_diff_eq!(v, out.expectations["ZI"][1], epsilon = 1e-14);
    assert_abs_diff_eq!(v, -1.0, epsilon = 1e-6);
}

mod rabi {
    use super::*;

    #[test]
    fn vanishing_drive_gives_flat_trace() {
        let p = DeviceParams::default();
        let t = rabi_trace(&p, &PulseParams::default(), 1.0, ControlState::Ground, &default_rabi_grid()).unwrap();
        assert_eq!(t.durations.len(), 201);
        assert!(t.excited_population.iter().all(|&x| x < 1e-10));
    }

    #[test]
    fn no_coupling_means_no_conditional_rate() {
        let p = DeviceParams {
            coupling: 0.0,
            zz: 0.0,
            ..DeviceParams::default()
        };
        let pulses = PulseParams::default();
        let grid = default_rabi_grid();
        let g = rabi_trace(&p, &pulses, 50e6, ControlState::Ground, &grid).unwrap();
        let e = rabi_trace(&p, &pulses, 50e6, ControlState::Excited, &grid).unwrap();
        for (a, b) in g.excited_population.iter().zip(&e.excited_population) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-9);
        }
        let r = measure_conditional_rate(&p, &pulses, 50e6).unwrap();
        assert!(r.jeff <= 3.0 * r.jeff_std + 1.0, "{} ± {}", r.jeff, r.jeff_std);
    }

    #[test]
    fn small_drive_difference_is_linear_in_amplitude() {
        let p = DeviceParams::default();
        let pulses = PulseParams::default();
        let ratio = p.coupling / (p.omega[0] - p.omega[1]);
        for amp in [10e6, 20e6] {
            let r = measure_conditional_rate(&p, &pulses, amp).unwrap();
            let delta_f = 2.0 * r.jeff;
            let expected = 2.0 * ratio * amp;
            assert!((delta_f - expected).abs() < 0.02 * expected, "A={amp}: {delta_f} vs {expected}");
        }
    }

    #[test]
    fn fast_path_matches_full_simulation() {
        let p = DeviceParams::default();
        let pulses = PulseParams::default();
        let amp = 250e6;
        let durations = [0.0, 33e-9, 120e-9];
        let trace = rabi_trace(&p, &pulses, amp, ControlState::Excited, &durations).unwrap();
        let sim = Simulator::new(&p, SolverOptions::default()).unwrap();
        let frame = RotatingFrame::dressed(&p).unwrap();
        for (k, &flat) in durations.iter().enumerate() {
            let env = Envelope::flat_top(amp, pulses.cr_ramp_sigma, flat, pulses.cr_drag_scale, p.anharmonicity[0])
                .unwrap();
            let mut s = PulseSchedule::new();
            s.push(ScheduleEntry {
                start: 0.0,
                drive: DriveSpec::new(Qubit::Q1, frame.freqs[1], 0.0).unwrap(),
                envelope: env,
            })
            .unwrap();
            let out = sim
                .evolve_unitary(&s, &StateVector::from_bits("10").unwrap(), &[s.duration()])
                .unwrap();
            let rho = out.states[0].matrix();
            let p2 = rho[(1, 1)].re + rho[(3, 3)].re;
            let y2 = expectation(&out.states[0], &pauli_string("IY").unwrap()).unwrap();
            assert_abs_diff_eq!(p2, trace.excited_population[k], epsilon = 1e-7);
            assert_abs_diff_eq!(y2, trace.y_expectation[k], epsilon = 1e-7);
        }
    }

    #[test]
    fn rejects_non_positive_amplitude() {
        let p = DeviceParams::default();
        assert!(rabi_trace(&p, &PulseParams::default(), 0.0, ControlState::Ground, &[0.0]).is_err());
        assert!(extract_jeff(&p, &PulseParams::default(), -1.0).is_err());
    }
}

#[test]
fn cross_resonance_propagator_matches_simulator() {
    let p = DeviceParams::default();
    let pulses = PulseParams::default();
    let amp = 553e6;
    let prop = CrossResonancePropagator::new(&p, &pulses, amp).unwrap();
    let frame = RotatingFrame::dressed(&p).unwrap();
    let sim = Simulator::new(&p, SolverOptions::default()).unwrap();
    for flat in [0.0, 37e-9, 162e-9] {
        let env = Envelope::flat_top(amp, pulses.cr_ramp_sigma, flat, pulses.cr_drag_scale, p.anharmonicity[0]).unwrap();
        let mut s = PulseSchedule::new();
        s.push(ScheduleEntry {
            start: 0.0,
            drive: DriveSpec::new(Qubit::Q1, frame.freqs[1], 0.0).unwrap(),
            envelope: env,
        })
        .unwrap();
        let full = sim.unitary(&s).unwrap();
        let fast = prop.unitary(flat).unwrap();
        let diff = (full.matrix() - fast.matrix()).camax();
        assert!(diff < 1e-7, "flat {flat:e}: {diff:e}");
    }
}
