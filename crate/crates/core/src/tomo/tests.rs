// Copyright 2026 The crsim Authors
// SPDX-License-Identifier: Apache-2.0

use approx::assert_abs_diff_eq;
use rand::{Rng, SeedableRng};

use super::*;
use crate::metrics::{cnot, process_fidelity, state_fidelity, GateTarget};

fn random_state(seed: u64) -> DensityMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = CMatrix::from_fn(4, 4, |_, _| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
    let m = &g * g.adjoint();
    let tr = m.trace();
    DensityMatrix::new(hermitize(m / tr)).unwrap()
}

fn noiseless() -> ReadoutModel {
    ReadoutModel::default()
}

#[test]
fn readout_reference_values() {
    let m = noiseless();
    let ii = (SingleGate::I, SingleGate::I);
    let ground = StateVector::from_bits("00").unwrap().to_density();
    assert_abs_diff_eq!(joint_readout(&ground, ii, &m, 0).unwrap(), 3.09, epsilon = 1e-12);
    let mixed = DensityMatrix::maximally_mixed(4);
    for s in tomography_settings() {
        assert_abs_diff_eq!(joint_readout(&mixed, s, &m, 0).unwrap(), 1.0, epsilon = 1e-12);
    }
    let bell = StateVector::bell().to_density();
    assert_abs_diff_eq!(joint_readout(&bell, ii, &m, 0).unwrap(), 1.6, epsilon = 1e-12);
}

#[test]
fn trivial_beta_reads_one() {
    let m = ReadoutModel::new([1.0, 0.0, 0.0, 0.0], ShotNoise::None).unwrap();
    let rho = random_state(3);
    for s in tomography_settings() {
        assert_abs_diff_eq!(joint_readout(&rho, s, &m, 9).unwrap(), 1.0, epsilon = 1e-12);
    }
}

#[test]
fn shot_noise_is_seeded_and_unbiased() {
    let m = ReadoutModel::new([1.0, 0.77, 0.72, 0.6], ShotNoise::Shots { count: 20_000 }).unwrap();
    let rho = random_state(5);
    let s = (SingleGate::X90, SingleGate::Y90);
    let a = joint_readout(&rho, s, &m, 42).unwrap();
    assert_eq!(a, joint_readout(&rho, s, &m, 42).unwrap());
    let exact = joint_readout(&rho, s, &noiseless(), 0).unwrap();
    // Worst-case standard error of the sum of three ±1 averages.
    assert!((a - exact).abs() < 5.0 * 2.1 / (20_000f64).sqrt());
    assert!(ReadoutModel::new([1.0, 0.0, 0.0, f64::NAN], ShotNoise::None).is_err());
}

#[test]
fn settings_are_informationally_complete() {
    let s = tomography_settings();
    assert_eq!(s.len(), 16);
    assert_eq!(s[0], (SingleGate::I, SingleGate::I));
    let d = design_matrix(&s, &noiseless());
    assert_eq!(d.rank, 16);
    assert!(d.condition_number < 20.0, "{}", d.condition_number);
}

#[test]
fn linear_inversion_is_exact_without_noise() {
    let m = noiseless();
    let rho = random_state(11);
    let rec = simulate_record(&rho, &m, 0).unwrap();
    let est = linear_inversion_state(&rec, &m).unwrap();
    assert!((est.matrix() - rho.matrix()).camax() < 1e-9);
    let mixed = DensityMatrix::maximally_mixed(4);
    let est = linear_inversion_state(&simulate_record(&mixed, &m, 0).unwrap(), &m).unwrap();
    assert!((est.matrix() - mixed.matrix()).camax() < 1e-12);
}

#[test]
fn noisy_linear_inversion_can_be_unphysical() {
    let m = ReadoutModel::new([1.0, 0.77, 0.72, 0.6], ShotNoise::Gaussian { sigma: 0.05 }).unwrap();
    let pure = StateVector::from_bits("01").unwrap().to_density();
    let negative = (0..20).any(|seed| {
        let est = linear_inversion_state(&simulate_record(&pure, &m, seed).unwrap(), &m).unwrap();
        crate::qlinalg::eig_hermitian(&est).unwrap().values[0] < 0.0
    });
    assert!(negative);
}

#[test]
fn too_few_settings_are_rejected() {
    let m = noiseless();
    let rho = random_state(1);
    let entries: Vec<_> = tomography_settings()[..10]
        .iter()
        .map(|&s| (s, joint_readout(&rho, s, &m, 0).unwrap()))
        .collect();
    let rec = TomographyRecord::new(entries).unwrap();
    assert!(matches!(linear_inversion_state(&rec, &m), Err(Error::RankDeficient { .. })));
}

#[test]
fn mle_round_trips_random_states() {
    let m = noiseless();
    for seed in 0..10 {
        let rho = random_state(100 + seed);
        let est = mle_state_tomography(&simulate_record(&rho, &m, 0).unwrap(), &m).unwrap();
        assert!(est.trace_distance(&rho) < 1e-3);
    }
}

#[test]
fn mle_recovers_bell_state() {
    let m = noiseless();
    let bell = StateVector::bell();
    let est = mle_state_tomography(&simulate_record(&bell.to_density(), &m, 0).unwrap(), &m).unwrap();
    assert!(state_fidelity(&est, &bell).unwrap() > 0.999);
}

#[test]
fn mle_under_gaussian_noise() {
    let m = ReadoutModel::new([1.0, 0.77, 0.72, 0.6], ShotNoise::Gaussian { sigma: 0.01 }).unwrap();
    let truth = random_state(7);
    for seed in 0..100 {
        let est = mle_state_tomography(&simulate_record(&truth, &m, seed).unwrap(), &m).unwrap();
        let d = est.trace_distance(&truth);
        assert!(d < 0.05, "seed {seed}: {d}");
        assert!(est.eigenvalues().iter().all(|&l| l >= -1e-12));
    }
}

#[test]
fn record_csv_round_trip_and_validation() {
    let rec = simulate_record(&random_state(2), &noiseless(), 0).unwrap();
    let text = rec.to_csv();
    assert!(text.starts_with("setting_q1,setting_q2,measured_value\n"));
    assert_eq!(TomographyRecord::from_csv(&text).unwrap(), rec);
    let dup = vec![((SingleGate::I, SingleGate::X), 1.0), ((SingleGate::I, SingleGate::X), 2.0)];
    assert!(TomographyRecord::new(dup).is_err());
    assert!(TomographyRecord::from_csv("a,b\n").is_err());
}

#[test]
fn process_inputs_span_operator_space() {
    let inputs = qpt_inputs();
    assert_eq!(inputs.len(), 36);
    assert_eq!(inputs[0].0, (SingleGate::I, SingleGate::I));
    assert_abs_diff_eq!(inputs[0].1.amplitudes()[0].norm(), 1.0, epsilon = 1e-15);
    let p = pauli_basis();
    let design = DMatrix::from_fn(36, 16, |k, j| {
        let rho = inputs[k].1.to_density();
        crate::qlinalg::expectation(&rho, &p[j]).unwrap()
    });
    assert_eq!(design.rank(1e-10), 16);
}

fn unitary_channel(u: ComplexOperator) -> impl Fn(&DensityMatrix) -> Result<DensityMatrix> + Sync {
    move |rho: &DensityMatrix| rho.evolve(&u)
}

#[test]
fn identity_channel_has_single_identity_weight() {
    let r = qpt(unitary_channel(ComplexOperator::identity(4)), &noiseless(), &QptOptions::default()).unwrap();
    let mut expected = CMatrix::zeros(16, 16);
    expected[(0, 0)] = C64::new(1.0, 0.0);
    assert!((r.raw.matrix() - &expected).camax() < 1e-6);
    assert!((r.projected.matrix() - &expected).camax() < 1e-6);
}

#[test]
fn pauli_channel_on_target() {
    let ix = pauli_string("IX").unwrap();
    let r = qpt(unitary_channel(ix), &noiseless(), &QptOptions::default()).unwrap();
    assert_abs_diff_eq!(r.projected.matrix()[(1, 1)].re, 1.0, epsilon = 1e-6);
}

#[test]
fn cnot_channel_matches_analytic_chi() {
    let target = cnot();
    let r = qpt(unitary_channel(target.unitary.clone()), &noiseless(), &QptOptions::default()).unwrap();
    let ideal = target.chi();
    assert!((r.raw.matrix() - ideal.matrix()).camax() < 1e-6);
    // Weight only on II, IX, ZI and ZX.
    let support = [0, 1, 12, 13];
    for m in 0..16 {
        let expected = if support.contains(&m) { 0.25 } else { 0.0 };
        assert_abs_diff_eq!(ideal.matrix()[(m, m)].re, expected, epsilon = 1e-12);
    }
    let eig = r.projected.eigenvalues();
    assert!(eig[15] >= 1.0 - 1e-6);
    assert_abs_diff_eq!(process_fidelity(&r.projected, &target), 1.0, epsilon = 1e-6);
}

#[test]
fn linear_estimator_agrees_without_noise() {
    let target = cnot();
    let opts = QptOptions {
        estimator: Estimator::LinearInversion,
        ..QptOptions::default()
    };
    let r = qpt(unitary_channel(target.unitary.clone()), &noiseless(), &opts).unwrap();
    assert!((r.raw.matrix() - target.chi().matrix()).camax() < 1e-9);
}

#[test]
fn chi_superoperator_round_trip_and_json() {
    let target = GateTarget::new(crate::metrics::ideal_zx(90.0).unitary, "ZX90").unwrap();
    let chi = target.chi();
    let back = ChiMatrix::from_superoperator(&chi.superoperator()).unwrap();
    assert!((back.matrix() - chi.matrix()).camax() < 1e-12);
    assert!(chi.trace_preservation_error() < 1e-12);
    let rho = random_state(4);
    let direct = rho.evolve(&target.unitary).unwrap();
    assert!((chi.apply(&rho) - direct.matrix()).camax() < 1e-12);
    let parsed = ChiMatrix::from_json(&chi.to_json().unwrap()).unwrap();
    assert!((parsed.matrix() - chi.matrix()).camax() < 1e-15);
    assert!(ChiMatrix::from_json("{\"basis\": [], \"data\": []}").is_err());
}
