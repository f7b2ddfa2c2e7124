// Copyright 2026 The crsim Authors
// SPDX-License-Identifier: Apache-2.0

//! End-to-end acceptance checks. Runs every criterion, prints one
//! `PASS`/`FAIL` line each in order, and exits non-zero if any failed.

use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crsim::device::Qubit;
use crsim::dynamics::{noise_from_coherences, Simulator};
use crsim::experiments::{
    calibrate_cnot, calibrate_j, default_amplitude_grid, default_gate_time_grid, run_bell, run_concurrence_scan,
    run_jeff_sweep, run_qpt, zero_intercept_fit, OperatingPoint, QptGate, Setup, CONCURRENCE_PRESETS,
    IDENTITY_DURATION, NOMINAL_OPERATING_POINT,
};
use crsim::metrics::gate_fidelity_from_process;
use crsim::pulses::{build_sequence, GateOp, PulseSchedule, SequenceBuilder};
use crsim::qlinalg::{CMatrix, CVector, DensityMatrix, StateVector, C64};
use crsim::tomo::{mle_state_tomography, simulate_record, ReadoutModel};

/// Outcome of one criterion: pass flag and report lines.
struct Verdict {
    passed: bool,
    lines: Vec<String>,
}

fn verdict(criterion: u32, title: &str, passed: bool, detail: &str) -> Verdict {
    verdict_with(criterion, title, passed, detail, Vec::new())
}

fn verdict_with(criterion: u32, title: &str, passed: bool, detail: &str, mut extra: Vec<String>) -> Verdict {
    let head = format!(
        "{} criterion {criterion:>2} ({title}): {detail}",
        if passed { "PASS" } else { "FAIL" }
    );
    extra.insert(0, head);
    Verdict { passed, lines: extra }
}

fn cnot_point() -> &'static OperatingPoint {
    static POINT: OnceLock<OperatingPoint> = OnceLock::new();
    POINT.get_or_init(|| {
        let (a, t) = NOMINAL_OPERATING_POINT;
        calibrate_cnot(&Setup::default(), a, t).expect("operating point")
    })
}

fn criterion_01_linear_turn_on() -> Verdict {
    let setup = Setup::default();
    let amps: Vec<f64> = default_amplitude_grid().into_iter().filter(|&a| a <= 100e6).collect();
    let sweep = run_jeff_sweep(&setup, &amps).unwrap();
    let jeff = sweep.series("jeff").unwrap();
    let (slope, r2, _) = zero_intercept_fit(&amps, jeff);
    let ok = r2 > 0.99;
    let detail = format!("{} points, slope {slope:.4e}, R² = {r2:.5} (need > 0.99)", amps.len());
    verdict(1, "linear turn-on", ok, &detail)
}

fn criterion_02_saturation() -> Verdict {
    let mut setup = Setup::default();
    let grid = default_amplitude_grid();
    let cal = calibrate_j(&setup, 1.4e6, &grid).unwrap();
    setup.device.coupling = cal.coupling;
    let sweep = run_jeff_sweep(&setup, &grid).unwrap();
    let max = sweep.get("max_jeff_hz").unwrap();
    let at = sweep.get("argmax_amplitude_hz").unwrap();
    let level = (max - 1.4e6).abs() <= 0.05 * 1.4e6;
    let location = (400e6..=650e6).contains(&at);
    let detail = format!(
        "J = {:.4} MHz, max J_eff = {:.4} MHz (1.4 ± 5%: {}), at {:.1} MHz (400..650: {})",
        cal.coupling / 1e6,
        max / 1e6,
        level,
        at / 1e6,
        location
    );
    verdict(2, "saturation", level && location, &detail)
}

fn criterion_03_concurrence_oscillations() -> Verdict {
    let setup = Setup::default();
    let grid = default_gate_time_grid();
    let mut all = true;
    let mut lines = Vec::new();
    for &a in &CONCURRENCE_PRESETS {
        let scan = run_concurrence_scan(&setup, a, &grid, false).unwrap();
        let err = scan.get("max_model_error").unwrap();
        let predicted = scan.get("predicted_first_max_s").unwrap();
        let found = scan.get("first_max_s").unwrap();
        let step = scan.get("grid_step_s").unwrap();
        let ok = err < 0.02 && (found - predicted).abs() <= step;
        all &= ok;
        lines.push(format!(
            "    {} {:.0} MHz: max |C − |sin(2bt)|| = {err:.4} (< 0.02), first max {:.1} ns vs {:.1} ns (step {:.0} ns)",
            if ok { "ok  " } else { "miss" },
            a / 1e6,
            found * 1e9,
            predicted * 1e9,
            step * 1e9
        ));
    }
    let detail = format!("{} presets", CONCURRENCE_PRESETS.len());
    verdict_with(3, "concurrence oscillations", all, &detail, lines)
}

fn criterion_04_bell_state() -> Verdict {
    let r = run_bell(&Setup::default(), cnot_point(), true).unwrap();
    let f = r.get("fidelity").unwrap();
    let c = r.get("concurrence").unwrap();
    let ok = (0.86..=0.94).contains(&f) && (0.83..=0.93).contains(&c);
    let detail = format!("F = {f:.4} (0.86..0.94), C = {c:.4} (0.83..0.93)");
    verdict(4, "Bell-state generation", ok, &detail)
}

fn criterion_05_noisy_gate_qpt() -> Verdict {
    let out = run_qpt(&Setup::default(), QptGate::CrossResonance(cnot_point().clone()), true).unwrap();
    let fg = out.gate_fidelity;
    let ok = (0.82..=0.90).contains(&fg);
    let detail = format!("F_g = {fg:.4} (0.82..0.90), F_p = {:.4}", out.process_fidelity);
    verdict(5, "decoherent CR gate QPT", ok, &detail)
}

fn criterion_06_noiseless_gate_qpt() -> Verdict {
    let out = run_qpt(&Setup::default(), QptGate::CrossResonance(cnot_point().clone()), false).unwrap();
    let fg = out.gate_fidelity;
    let ok = fg > 0.999;
    let detail = format!("F_g = {fg:.9} against {} (> 0.999)", out.target.label);
    verdict(6, "noiseless gate QPT", ok, &detail)
}

fn criterion_07_identity_control() -> Verdict {
    let out = run_qpt(&Setup::default(), QptGate::Identity(IDENTITY_DURATION), true).unwrap();
    let c = out.result.get("max_output_concurrence").unwrap();
    let ok = (0.04..=0.14).contains(&c);
    let detail = format!("{:.0} ns idle: max C = {c:.4} (0.04..0.14)", IDENTITY_DURATION * 1e9);
    verdict(7, "identity-gate control", ok, &detail)
}

fn criterion_08_fidelity_formula() -> Verdict {
    let fg = gate_fidelity_from_process(0.77, 4).unwrap();
    let ok = (fg - 0.816).abs() < 1e-12;
    let detail = format!("F_g(0.77, d = 4) = {fg}");
    verdict(8, "gate fidelity formula", ok, &detail)
}

fn random_state(rng: &mut ChaCha8Rng) -> DensityMatrix {
    // Rank drawn uniformly so pure and mixed states are both covered.
    let rank = rng.random_range(1..=4);
    let g = CMatrix::from_fn(4, rank, |_, _| {
        C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
    });
    let m = &g * g.adjoint();
    let tr = m.trace();
    DensityMatrix::new(m / tr).unwrap()
}

fn criterion_09_tomography_round_trip() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let model = ReadoutModel::default();
    let mut worst = 0.0_f64;
    for k in 0..200 {
        let rho = random_state(&mut rng);
        let record = simulate_record(&rho, &model, k).unwrap();
        let est = mle_state_tomography(&record, &model).unwrap();
        worst = worst.max(est.trace_distance(&rho));
    }
    let ok = worst < 1e-3;
    let detail = format!("200 states, worst trace distance {worst:.2e} (< 1e-3)");
    verdict(9, "tomography round trip", ok, &detail)
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect()
}

fn criterion_10_solver_physics() -> Verdict {
    let setup = Setup::default();
    let p = &setup.device;
    let sim = Simulator::new(p, setup.solver.clone()).unwrap();
    let noise = noise_from_coherences(p).unwrap();

    let t1 = p.t1[0];
    let times = linspace(0.0, 3.0 * t1, 31);
    let rho0 = StateVector::from_bits("10").unwrap().to_density();
    let decay = sim
        .evolve_lindblad(&PulseSchedule::idle(3.0 * t1).unwrap(), &rho0, &noise, &times)
        .unwrap();
    let t1_err = times
        .iter()
        .zip(&decay.states)
        .map(|(t, rho)| {
            let excited = rho.matrix()[(2, 2)].re + rho.matrix()[(3, 3)].re;
            let expected = (-t / t1).exp();
            (excited - expected).abs() / expected
        })
        .fold(0.0, f64::max);

    let t2 = p.t2[0];
    let times = linspace(0.0, 3.0 * t2, 31);
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let plus = StateVector::new(CVector::from_vec(vec![
        C64::new(s, 0.0),
        C64::new(0.0, 0.0),
        C64::new(s, 0.0),
        C64::new(0.0, 0.0),
    ]))
    .unwrap();
    let ramsey = sim
        .evolve_lindblad(&PulseSchedule::idle(3.0 * t2).unwrap(), &plus.to_density(), &noise, &times)
        .unwrap();
    let t2_err = times
        .iter()
        .zip(&ramsey.states)
        .map(|(t, rho)| {
            let coherence = 2.0 * rho.matrix()[(0, 2)].norm();
            let expected = (-t / t2).exp();
            (coherence - expected).abs() / expected
        })
        .fold(0.0, f64::max);

    // A driven microsecond: single-qubit gates around a long entangling pulse.
    let builder = SequenceBuilder::new(p, &setup.pulses).unwrap();
    let ops = [
        GateOp::Single(Qubit::Q1, crsim::pulses::SingleGate::X90),
        GateOp::CrossResonance {
            control: Qubit::Q1,
            amplitude: 300e6,
            duration: 900e-9,
        },
        GateOp::Single(Qubit::Q2, crsim::pulses::SingleGate::Y90),
    ];
    let mut schedule = build_sequence(&builder, &ops).unwrap();
    schedule.extend_to(1e-6).unwrap();
    let times = linspace(0.0, 1e-6, 51);
    let rho0 = StateVector::from_bits("01").unwrap().to_density();
    let driven = sim.evolve_lindblad(&schedule, &rho0, &noise, &times).unwrap();
    let drift = driven
        .states
        .iter()
        .map(|rho| (rho.matrix().trace().re - 1.0).abs())
        .fold(0.0, f64::max);

    let ok = t1_err < 0.01 && t2_err < 0.01 && drift < 1e-6;
    let detail = format!(
        "T1 decay rel. error {t1_err:.2e}, Ramsey rel. error {t2_err:.2e} (< 1%), trace drift {drift:.1e} (< 1e-6)"
    );
    verdict(10, "solver physics", ok, &detail)
}

fn main() {
    let criteria: [fn() -> Verdict; 10] = [
        criterion_01_linear_turn_on,
        criterion_02_saturation,
        criterion_03_concurrence_oscillations,
        criterion_04_bell_state,
        criterion_05_noisy_gate_qpt,
        criterion_06_noiseless_gate_qpt,
        criterion_07_identity_control,
        criterion_08_fidelity_formula,
        criterion_09_tomography_round_trip,
        criterion_10_solver_physics,
    ];
    let verdicts: Vec<Verdict> = std::thread::scope(|s| {
        let handles: Vec<_> = criteria.iter().map(|c| s.spawn(c)).collect();
        handles.into_iter().map(|h| h.join().expect("criterion panicked")).collect()
    });
    for v in &verdicts {
        for line in &v.lines {
            println!("{line}");
        }
    }
    let failed = verdicts.iter().filter(|v| !v.passed).count();
    println!("acceptance: {} passed, {failed} failed", verdicts.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
