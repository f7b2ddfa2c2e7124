// Copyright 2026 The crsim Authors
// SPDX-License-Identifier: Apache-2.0

//! End-to-end experiments: interaction-strength sweeps, coupling
//! calibration, concurrence oscillations, Bell-state generation and process
//! tomography of the cross-resonance gate.
//!
//! Every run returns an [`ExperimentResult`] whose CSV part is a pure
//! function of the [`Setup`]; sweeps are evaluated in parallel but merged by
//! index and seeded per point, so thread count never changes the output.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::device::{DeviceParams, DriveModel, Qubit};
use crate::dynamics::{
    extract_jeff, measure_conditional_rate, noise_from_coherences, CrossResonancePropagator, NoiseModel,
    Simulator, SolverOptions,
};
use crate::metrics::{cnot, concurrence, gate_fidelity_from_process, process_fidelity, state_fidelity, GateTarget};
use crate::pulses::{build_sequence, Envelope, GateOp, PulseParams, PulseSchedule, SequenceBuilder, SingleGate};
use crate::qlinalg::{tensor, CMatrix, ComplexOperator, DensityMatrix, StateVector, C64};
use crate::tomo::{mle_state_tomography, qpt, simulate_record, QptOptions, QptResult, ReadoutModel};
use crate::optim::nelder_mead;
use crate::{derive_seed, Error, Result};

/// Drive amplitudes of the concurrence scans, Hz.
pub const CONCURRENCE_PRESETS: [f64; 4] = [139e6, 220e6, 349e6, 553e6];

/// Nominal amplitude (Hz) and gate time (s) of the entangling operation.
pub const NOMINAL_OPERATING_POINT: (f64, f64) = (553e6, 220e-9);

/// Length of the idle used as the identity-gate control, s.
pub const IDENTITY_DURATION: f64 = 220e-9;

/// Everything a run depends on.
#[derive(Debug, Clone, PartialEq)]
pub struct Setup {
    pub device: DeviceParams,
    pub pulses: PulseParams,
    pub solver: SolverOptions,
    pub readout: ReadoutModel,
    /// Master seed.
    pub seed: u64,
}

impl Default for Setup {
    fn default() -> Self {
        Self {
            device: DeviceParams::default(),
            pulses: PulseParams::default(),
            solver: SolverOptions::default(),
            readout: ReadoutModel::default(),
            seed: 20_120_501,
        }
    }
}

impl Setup {
    /// SHA-256 of the setup's canonical debug rendering.
    pub fn fingerprint(&self) -> String {
        let text = format!("{:?}|{:?}|{:?}|{:?}|{}", self.device, self.pulses, self.solver, self.readout, self.seed);
        hex(&Sha256::digest(text.as_bytes()))
    }

    /// Seed of the experiment called `name`.
    pub fn seed_for(&self, name: &str) -> u64 {
        let digest = Sha256::digest(name.as_bytes());
        let tag = u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"));
        derive_seed(self.seed, tag)
    }

    fn simulator(&self) -> Result<Simulator> {
        Simulator::new(&self.device, self.solver.clone())
    }

    fn noise(&self, on: bool) -> Result<Option<NoiseModel>> {
        if on {
            noise_from_coherences(&self.device).map(Some)
        } else {
            Ok(None)
        }
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().fold(String::with_capacity(2 * bytes.len()), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// A named column with its unit (`"1"` for dimensionless).
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub unit: String,
    pub values: Vec<f64>,
}

impl Series {
    pub fn new(name: &str, unit: &str, values: Vec<f64>) -> Self {
        Self {
            name: name.into(),
            unit: unit.into(),
            values,
        }
    }

    fn header(&self) -> String {
        if self.unit == "1" {
            self.name.clone()
        } else {
            format!("{}_{}", self.name, self.unit.to_lowercase())
        }
    }
}

/// Provenance recorded in the JSON sidecar only.
#[derive(Debug, Clone, PartialEq)]
pub struct Metadata {
    pub config_hash: String,
    pub seed: u64,
    pub timestamp_unix: f64,
    pub version: &'static str,
}

impl Metadata {
    fn for_setup(setup: &Setup, seed: u64) -> Self {
        let timestamp_unix = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs_f64())
            .unwrap_or(0.0);
        Self {
            config_hash: setup.fingerprint(),
            seed,
            timestamp_unix,
            version: env!("CARGO_PKG_VERSION"),
        }
    }
}

/// Output of one experiment: an axis with aligned series, plus scalars and
/// matrices that only appear in the JSON sidecar.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub name: String,
    pub axis: Series,
    pub series: Vec<Series>,
    pub scalars: BTreeMap<String, f64>,
    pub matrices: BTreeMap<String, CMatrix>,
    pub notes: Vec<String>,
    pub metadata: Metadata,
}

impl ExperimentResult {
    fn new(name: &str, axis: Series, metadata: Metadata) -> Self {
        Self {
            name: name.into(),
            axis,
            series: Vec::new(),
            scalars: BTreeMap::new(),
            matrices: BTreeMap::new(),
            notes: Vec::new(),
            metadata,
        }
    }

    fn push(&mut self, s: Series) -> Result<()> {
        if s.values.len() != self.axis.values.len() {
            return Err(Error::DimensionMismatch {
                expected: self.axis.values.len(),
                got: s.values.len(),
            });
        }
        self.series.push(s);
        Ok(())
    }

    fn scalar(&mut self, key: &str, v: f64) {
        self.scalars.insert(key.into(), v);
    }

    pub fn series(&self, name: &str) -> Option<&[f64]> {
        self.series.iter().find(|s| s.name == name).map(|s| s.values.as_slice())
    }

    pub fn get(&self, key: &str) -> Option<f64> {
        self.scalars.get(key).copied()
    }

    /// Axis and series as CSV, numbers with 12 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = std::iter::once(&self.axis)
            .chain(&self.series)
            .map(Series::header)
            .collect::<Vec<_>>()
            .join(",");
        out.push('\n');
        for k in 0..self.axis.values.len() {
            let row: Vec<String> = std::iter::once(&self.axis)
                .chain(&self.series)
                .map(|s| format_number(s.values[k]))
                .collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    /// Sidecar with units, scalars, matrices (row-major `[re, im]`) and
    /// provenance.
    pub fn to_json(&self) -> Value {
        let columns: Vec<Value> = std::iter::once(&self.axis)
            .chain(&self.series)
            .map(|s| json!({"name": s.name, "unit": s.unit}))
            .collect();
        let matrices: serde_json::Map<String, Value> = self
            .matrices
            .iter()
            .map(|(k, m)| {
                let rows: Vec<Vec<[f64; 2]>> = (0..m.nrows())
                    .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
                    .collect();
                (k.clone(), json!({"rows": m.nrows(), "cols": m.ncols(), "data": rows}))
            })
            .collect();
        json!({
            "name": self.name,
            "columns": columns,
            "scalars": self.scalars,
            "matrices": matrices,
            "notes": self.notes,
            "metadata": {
                "config_hash": self.metadata.config_hash,
                "seed": self.metadata.seed,
                "timestamp_unix": self.metadata.timestamp_unix,
                "version": self.metadata.version,
            }
        })
    }

    /// Writes `<name>.csv` and `<name>.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let csv = dir.join(format!("{}.csv", self.name));
        let sidecar = dir.join(format!("{}.json", self.name));
        std::fs::write(&csv, self.to_csv())?;
        let text = serde_json::to_string_pretty(&self.to_json()).map_err(|e| Error::Serialization(e.to_string()))?;
        std::fs::write(&sidecar, text)?;
        Ok(vec![csv, sidecar])
    }
}

/// Locale-independent scientific notation with 12 significant digits.
pub fn format_number(v: f64) -> String {
    if v == 0.0 {
        return "0.00000000000e0".into();
    }
    format!("{v:.11e}")
}

/// 20 log-spaced amplitudes in [20, 700] MHz; the point nearest 493 MHz is
/// moved onto it.
pub fn default_amplitude_grid() -> Vec<f64> {
    let (lo, hi) = (20e6f64.ln(), 700e6f64.ln());
    let mut grid: Vec<f64> = (0..20).map(|k| (lo + (hi - lo) * k as f64 / 19.0).exp()).collect();
    let k = (0..grid.len())
        .min_by(|&a, &b| (grid[a] - 493e6).abs().total_cmp(&(grid[b] - 493e6).abs()))
        .expect("non-empty");
    grid[k] = 493e6;
    (grid[0], grid[19]) = (20e6, 700e6);
    grid
}

/// Gate times 0 to 800 ns in 8 ns steps.
pub fn default_gate_time_grid() -> Vec<f64> {
    (0..=100).map(|k| k as f64 * 8e-9).collect()
}

fn check_amplitudes(amplitudes: &[f64]) -> Result<()> {
    if amplitudes.is_empty() {
        return Err(Error::InvalidInput("amplitude grid is empty".into()));
    }
    if amplitudes.iter().any(|a| !(*a > 0.0 && a.is_finite())) || amplitudes.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput("amplitudes must be positive and strictly ascending".into()));
    }
    Ok(())
}

/// Zero-intercept least-squares line through `(x, y)`: slope, R² about the
/// mean, and largest residual.
pub fn zero_intercept_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let sxx: f64 = x.iter().map(|v| v * v).sum();
    let slope = if sxx > 0.0 {
        x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() / sxx
    } else {
        0.0
    };
    let mean = y.iter().sum::<f64>() / y.len().max(1) as f64;
    let ss_tot: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let residuals: Vec<f64> = x.iter().zip(y).map(|(a, b)| b - slope * a).collect();
    let ss_res: f64 = residuals.iter().map(|r| r * r).sum();
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    let worst = residuals.iter().fold(0.0f64, |m, r| m.max(r.abs()));
    (slope, r2, worst)
}

/// Interaction strength versus cross-drive amplitude.
pub fn run_jeff_sweep(setup: &Setup, amplitudes: &[f64]) -> Result<ExperimentResult> {
    check_amplitudes(amplitudes)?;
    let rates = amplitudes
        .par_iter()
        .map(|&a| measure_conditional_rate(&setup.device, &setup.pulses, a))
        .collect::<Result<Vec<_>>>()?;
    let seed = setup.seed_for("jeff_sweep");
    let mut r = ExperimentResult::new(
        "jeff_sweep",
        Series::new("amplitude", "Hz", amplitudes.to_vec()),
        Metadata::for_setup(setup, seed),
    );
    let jeff: Vec<f64> = rates.iter().map(|x| x.jeff).collect();
    r.push(Series::new("jeff", "Hz", jeff.clone()))?;
    r.push(Series::new("jeff_std", "Hz", rates.iter().map(|x| x.jeff_std).collect()))?;
    r.push(Series::new(
        "rabi_ground",
        "Hz",
        rates.iter().map(|x| x.ground_sign * x.ground.frequency).collect(),
    ))?;
    r.push(Series::new(
        "rabi_excited",
        "Hz",
        rates.iter().map(|x| x.excited_sign * x.excited.frequency).collect(),
    ))?;

    let (xs, ys): (Vec<f64>, Vec<f64>) = amplitudes
        .iter()
        .zip(&jeff)
        .filter(|(a, _)| **a <= 100e6 * (1.0 + 1e-12))
        .map(|(a, j)| (*a, *j))
        .unzip();
    let (k, &max) = jeff
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty");
    if xs.len() >= 2 {
        let (slope, r2, worst) = zero_intercept_fit(&xs, &ys);
        r.scalar("small_amplitude_slope", slope);
        r.scalar("small_amplitude_r_squared", r2);
        r.scalar("small_amplitude_points", xs.len() as f64);
        r.scalar("small_amplitude_max_residual_fraction", if max > 0.0 { worst / max } else { 0.0 });
    }
    r.scalar("max_jeff_hz", max);
    r.scalar("argmax_amplitude_hz", amplitudes[k]);
    r.scalar("coupling_hz", setup.device.coupling);
    Ok(r)
}

/// Result of fitting the exchange coupling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouplingCalibration {
    pub coupling: f64,
    /// Largest interaction strength over the grid at `coupling`, Hz.
    pub max_jeff: f64,
    pub iterations: usize,
}

fn max_jeff(setup: &Setup, coupling: f64, amplitudes: &[f64]) -> Result<f64> {
    let device = DeviceParams {
        coupling,
        ..setup.device.clone()
    };
    let values = amplitudes
        .par_iter()
        .map(|&a| extract_jeff(&device, &setup.pulses, a))
        .collect::<Result<Vec<_>>>()?;
    Ok(values.into_iter().fold(0.0, f64::max))
}

/// Secant search for the exchange coupling whose largest interaction
/// strength over `amplitudes` equals `target` (Hz).
pub fn calibrate_j(setup: &Setup, target: f64, amplitudes: &[f64]) -> Result<CouplingCalibration> {
    check_amplitudes(amplitudes)?;
    if !(target >= 0.0 && target.is_finite()) {
        return Err(Error::InvalidInput(format!("target must be non-negative, got {target}")));
    }
    if target == 0.0 {
        return Ok(CouplingCalibration {
            coupling: 0.0,
            max_jeff: 0.0,
            iterations: 0,
        });
    }
    let start = if setup.device.coupling > 0.0 { setup.device.coupling } else { 1e6 };
    let mut x0 = start;
    let mut g0 = max_jeff(setup, x0, amplitudes)? - target;
    let mut x1 = x0 * target / (g0 + target);
    let mut g1 = max_jeff(setup, x1, amplitudes)? - target;
    let mut iterations = 2;
    while g1.abs() > 1e-6 * target && iterations < 30 {
        if g1 == g0 {
            break;
        }
        let x2 = x1 - g1 * (x1 - x0) / (g1 - g0);
        if !(x2 > 0.0 && x2.is_finite()) {
            return Err(Error::Convergence {
                what: "coupling calibration",
                iterations,
                detail: format!("secant step left the physical range (J = {x2:e} Hz)"),
            });
        }
        (x0, g0) = (x1, g1);
        x1 = x2;
        g1 = max_jeff(setup, x1, amplitudes)? - target;
        iterations += 1;
        log::debug!("coupling {:.6} MHz -> max J_eff {:.6} MHz", x1 / 1e6, (g1 + target) / 1e6);
    }
    if g1.abs() > 0.02 * target {
        return Err(Error::Convergence {
            what: "coupling calibration",
            iterations,
            detail: format!("residual {:.3e} Hz at J = {x1:e} Hz", g1),
        });
    }
    Ok(CouplingCalibration {
        coupling: x1,
        max_jeff: g1 + target,
        iterations,
    })
}

/// Length of the cross-resonance drive of nominal gate time `duration`
/// spent at full amplitude, counting each ramp by its area.
pub fn effective_gate_time(pulses: &PulseParams, duration: f64) -> Result<f64> {
    Ok(Envelope::cross_resonance(1.0, duration, pulses, 1.0)?
        .map(|e| e.in_phase_area())
        .unwrap_or(0.0))
}

fn entangling_schedule(builder: &SequenceBuilder, amplitude: f64, duration: f64) -> Result<PulseSchedule> {
    build_sequence(
        builder,
        &[
            GateOp::Single(Qubit::Q1, SingleGate::X90),
            GateOp::CrossResonance {
                control: Qubit::Q1,
                amplitude,
                duration,
            },
        ],
    )
}

fn final_state(setup: &Setup, schedule: &PulseSchedule, noise: Option<&NoiseModel>) -> Result<DensityMatrix> {
    let sim = setup.simulator()?;
    let psi0 = StateVector::from_bits("00")?;
    let out = match noise {
        Some(n) => sim.evolve_lindblad(schedule, &psi0.to_density(), n, &[schedule.duration()])?,
        None => sim.evolve_unitary(schedule, &psi0, &[schedule.duration()])?,
    };
    let rho = out.states.into_iter().next().expect("one sample");
    DensityMatrix::project(rho.matrix())
}

/// Vertex of a least-squares parabola through the first hump of `values`,
/// the stretch of samples above 90% of the maximum. Robust against the small
/// fast ripple the off-resonant drive imprints on the envelope.
fn first_maximum(times: &[f64], values: &[f64]) -> Option<f64> {
    let max = values.iter().copied().fold(0.0, f64::max);
    let start = values.iter().position(|&v| v >= 0.9 * max)?;
    let len = values[start..].iter().take_while(|&&v| v >= 0.9 * max).count();
    if len < 3 {
        return Some(times[start]);
    }
    let t0 = times[start];
    let scale = times[start + len - 1] - t0;
    let mut a = nalgebra::DMatrix::<f64>::zeros(len, 3);
    let mut b = nalgebra::DVector::<f64>::zeros(len);
    for k in 0..len {
        let x = (times[start + k] - t0) / scale;
        a[(k, 0)] = 1.0;
        a[(k, 1)] = x;
        a[(k, 2)] = x * x;
        b[k] = values[start + k];
    }
    let c = a.svd(true, true).solve(&b, 1e-14).ok()?;
    if c[2] >= 0.0 {
        return None;
    }
    Some(t0 - c[1] / (2.0 * c[2]) * scale)
}

/// Concurrence after `X90` on qubit 1 followed by a cross-resonance pulse of
/// each gate time in `gate_times`, reconstructed through the tomography
/// pipeline.
pub fn run_concurrence_scan(setup: &Setup, amplitude: f64, gate_times: &[f64], noise: bool) -> Result<ExperimentResult> {
    if gate_times.is_empty() || gate_times.iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
        return Err(Error::InvalidInput("gate times must be non-negative".into()));
    }
    let builder = SequenceBuilder::new(&setup.device, &setup.pulses)?;
    let noise_model = setup.noise(noise)?;
    let seed = setup.seed_for(&format!("concurrence_scan/{amplitude:e}/{noise}"));
    let points = gate_times
        .par_iter()
        .enumerate()
        .map(|(k, &tg)| -> Result<(f64, f64, DensityMatrix)> {
            let schedule = entangling_schedule(&builder, amplitude, tg)?;
            let rho = final_state(setup, &schedule, noise_model.as_ref())?;
            let record = simulate_record(&rho, &setup.readout, derive_seed(seed, k as u64))?;
            let est = mle_state_tomography(&record, &setup.readout)?;
            Ok((concurrence(&est), concurrence(&rho), est))
        })
        .collect::<Result<Vec<_>>>()?;

    let jeff = extract_jeff(&setup.device, &setup.pulses, amplitude)?;
    let t_eff = gate_times
        .iter()
        .map(|&t| effective_gate_time(&setup.pulses, t))
        .collect::<Result<Vec<_>>>()?;
    let model: Vec<f64> = t_eff.iter().map(|t| (2.0 * PI * jeff * t).sin().abs()).collect();
    let measured: Vec<f64> = points.iter().map(|p| p.0).collect();

    let mut r = ExperimentResult::new(
        &format!("concurrence_scan_{:.0}mhz", amplitude / 1e6),
        Series::new("gate_time", "s", gate_times.to_vec()),
        Metadata::for_setup(setup, seed),
    );
    r.push(Series::new("concurrence", "1", measured.clone()))?;
    r.push(Series::new("concurrence_exact", "1", points.iter().map(|p| p.1).collect()))?;
    r.push(Series::new("effective_time", "s", t_eff))?;
    r.push(Series::new("concurrence_model", "1", model.clone()))?;

    let (kmax, &cmax) = measured
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty");
    r.scalar("amplitude_hz", amplitude);
    r.scalar("jeff_hz", jeff);
    r.scalar("zx_rate_rad_per_s", PI * jeff);
    r.scalar("max_concurrence", cmax);
    r.scalar("argmax_gate_time_s", gate_times[kmax]);
    r.scalar(
        "max_model_error",
        measured.iter().zip(&model).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max),
    );
    // Gate time at which the effective time reaches a quarter period.
    let ramp_offset = gate_times
        .iter()
        .zip(&r.series[2].values)
        .rev()
        .find(|(t, _)| **t >= 4.0 * setup.pulses.cr_ramp_sigma)
        .map(|(t, te)| t - te)
        .unwrap_or(0.0);
    r.scalar("predicted_first_max_s", 0.25 / jeff.max(1e-300) + ramp_offset);
    if let Some(t) = first_maximum(gate_times, &measured) {
        r.scalar("first_max_s", t);
    }
    if gate_times.len() > 1 {
        r.scalar("grid_step_s", gate_times[1] - gate_times[0]);
    }
    r.matrices.insert("rho_at_max".into(), points[kmax].2.matrix().clone());
    r.notes.push(format!(
        "model: |sin(2*pi*jeff*t_eff)| with jeff from the conditional Rabi frequencies; noise {}",
        if noise { "on" } else { "off" }
    ));
    Ok(r)
}

/// Software phase updates that bring the cross-resonance propagator close
/// to a CNOT: `Rz(post_q1)⊗Rz(post_q2) · U · I⊗Rz(pre_q2) ≈ CNOT`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseFrames {
    pub pre_q2: f64,
    pub post_q1: f64,
    pub post_q2: f64,
}

/// Best phase updates for `u` and the resulting average gate fidelity to
/// CNOT, in closed form from four matrix elements.
pub fn phase_frames(u: &ComplexOperator) -> Result<(PhaseFrames, f64)> {
    if u.dim() != 4 {
        return Err(Error::DimensionMismatch { expected: 4, got: u.dim() });
    }
    let m = u.matrix();
    let s = m[(0, 0)].arg() - m[(1, 1)].arg();
    let d = m[(2, 3)].arg() - m[(3, 2)].arg();
    let theta0 = m[(0, 0)].arg() - s / 2.0;
    let theta1 = m[(3, 2)].arg() + d / 2.0;
    let base = PhaseFrames {
        pre_q2: (s - d) / 2.0,
        post_q1: theta0 - theta1,
        post_q2: (s + d) / 2.0,
    };
    // Half-angle branches: try every π shift and keep the best.
    let mut best = (base, -1.0);
    for mask in 0..8u32 {
        let shift = |bit: u32| if mask & (1 << bit) != 0 { PI } else { 0.0 };
        let f = PhaseFrames {
            pre_q2: base.pre_q2 + shift(0),
            post_q1: base.post_q1 + shift(1),
            post_q2: base.post_q2 + shift(2),
        };
        let overlap = LocalFrames::from(f).cnot_overlap(u);
        if overlap > best.1 {
            best = (f, overlap);
        }
    }
    Ok((best.0, overlap_to_gate_fidelity(best.1)?))
}

fn overlap_to_gate_fidelity(overlap: f64) -> Result<f64> {
    gate_fidelity_from_process((overlap * overlap).min(1.0), 4)
}

/// `exp(−i r·σ/2)` for a rotation vector `r` in radians.
pub fn su2(r: [f64; 3]) -> ComplexOperator {
    let angle = (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt();
    let (c, s) = ((angle / 2.0).cos(), (angle / 2.0).sin());
    let n = if angle > 0.0 { r.map(|x| x / angle) } else { [0.0; 3] };
    let i = C64::i();
    ComplexOperator::from_rows(
        2,
        &[
            C64::new(c, 0.0) - i * s * n[2],
            -i * s * C64::new(n[0], -n[1]),
            -i * s * C64::new(n[0], n[1]),
            C64::new(c, 0.0) + i * s * n[2],
        ],
    )
    .expect("2x2")
}

/// `exp(−iθ/2·Z)` with `θ` in radians.
pub fn rz(theta: f64) -> ComplexOperator {
    su2([0.0, 0.0, theta])
}

/// Ideal single-qubit corrections before and after the entangling pulse,
/// `(post_q1 ⊗ post_q2) · U · (pre_q1 ⊗ pre_q2) ≈ CNOT`, each stored as a
/// rotation vector for [`su2`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalFrames {
    pub pre: [[f64; 3]; 2],
    pub post: [[f64; 3]; 2],
}

impl From<PhaseFrames> for LocalFrames {
    fn from(f: PhaseFrames) -> Self {
        Self {
            pre: [[0.0; 3], [0.0, 0.0, f.pre_q2]],
            post: [[0.0, 0.0, f.post_q1], [0.0, 0.0, f.post_q2]],
        }
    }
}

impl LocalFrames {
    /// `pre_q1 ⊗ pre_q2`.
    pub fn pre_op(&self) -> ComplexOperator {
        tensor(&su2(self.pre[0]), &su2(self.pre[1]))
    }

    /// `post_q1 ⊗ post_q2`.
    pub fn post_op(&self) -> ComplexOperator {
        tensor(&su2(self.post[0]), &su2(self.post[1]))
    }

    /// `|Tr(CNOT† V)|/4` for the corrected gate `V`.
    pub fn cnot_overlap(&self, u: &ComplexOperator) -> f64 {
        let v = &(&self.post_op() * u) * &self.pre_op();
        (cnot().unitary.matrix().adjoint() * v.matrix()).trace().norm() / 4.0
    }

    /// The CNOT seen through these corrections: the gate the bare pulse
    /// should implement.
    pub fn target(&self) -> GateTarget {
        let u = &(&self.post_op().adjoint() * &cnot().unitary) * &self.pre_op().adjoint();
        GateTarget {
            unitary: u,
            label: "CNOT (locally equivalent)".into(),
        }
    }

    fn to_vec(self) -> Vec<f64> {
        self.pre.iter().chain(&self.post).flatten().copied().collect()
    }

    fn from_slice(x: &[f64]) -> Self {
        let r = |k: usize| [x[3 * k], x[3 * k + 1], x[3 * k + 2]];
        Self {
            pre: [r(0), r(1)],
            post: [r(2), r(3)],
        }
    }
}

/// Single-qubit corrections that best turn `u` into a CNOT, and the
/// resulting average gate fidelity. Seeded by [`phase_frames`].
pub fn local_frames(u: &ComplexOperator) -> Result<(LocalFrames, f64)> {
    let (seed, seed_fidelity) = phase_frames(u)?;
    let objective = |x: &[f64]| 1.0 - LocalFrames::from_slice(x).cnot_overlap(u);
    let mut x = LocalFrames::from(seed).to_vec();
    let mut e = objective(&x);
    for step in [0.1, 0.02, 0.005, 0.001] {
        let (nx, ne) = nelder_mead(&objective, &x, &[step; 12], 1e-16, 4000);
        if ne < e {
            (x, e) = (nx, ne);
        }
    }
    let fidelity = overlap_to_gate_fidelity(1.0 - e)?;
    if fidelity < seed_fidelity {
        return Ok((seed.into(), seed_fidelity));
    }
    Ok((LocalFrames::from_slice(&x), fidelity))
}

/// A calibrated entangling operation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatingPoint {
    pub amplitude: f64,
    pub duration: f64,
    pub frames: LocalFrames,
    /// Noiseless average gate fidelity to the locally equivalent CNOT.
    pub gate_fidelity: f64,
}

fn cr_schedule(setup: &Setup, amplitude: f64, duration: f64) -> Result<PulseSchedule> {
    let dressed = crate::device::RotatingFrame::dressed(&setup.device)?;
    let mut s = PulseSchedule::new();
    if let Some(envelope) =
        Envelope::cross_resonance(amplitude, duration, &setup.pulses, setup.device.anharmonicity[0])?
    {
        s.push(crate::pulses::ScheduleEntry {
            start: 0.0,
            drive: crate::device::DriveSpec::new(Qubit::Q1, dressed.freqs[1], 0.0)?,
            envelope,
        })?;
    }
    s.extend_to(if setup.pulses.cr_duration_includes_ramps {
        duration
    } else {
        duration + 4.0 * setup.pulses.cr_ramp_sigma
    })?;
    Ok(s)
}

fn flat_length(pulses: &PulseParams, duration: f64) -> Option<f64> {
    let flat = if pulses.cr_duration_includes_ramps {
        duration - 4.0 * pulses.cr_ramp_sigma
    } else {
        duration
    };
    (flat >= 0.0).then_some(flat)
}

fn fast_path(setup: &Setup) -> bool {
    setup.solver.model == DriveModel::Effective && setup.solver.frame.is_none()
}

/// Noiseless propagator of the bare cross-resonance pulse.
pub fn cr_unitary(setup: &Setup, amplitude: f64, duration: f64) -> Result<ComplexOperator> {
    match flat_length(&setup.pulses, duration) {
        Some(flat) if fast_path(setup) => {
            CrossResonancePropagator::new(&setup.device, &setup.pulses, amplitude)?.unitary(flat)
        }
        _ => setup.simulator()?.unitary(&cr_schedule(setup, amplitude, duration)?),
    }
}

/// Corrections and fidelity of the pulse `(amplitude, duration)` without
/// searching the pulse itself.
pub fn operating_point_at(setup: &Setup, amplitude: f64, duration: f64) -> Result<OperatingPoint> {
    let u = cr_unitary(setup, amplitude, duration)?;
    let (frames, gate_fidelity) = local_frames(&u)?;
    Ok(OperatingPoint {
        amplitude,
        duration,
        frames,
        gate_fidelity,
    })
}

/// Searches amplitudes within ±6 MHz of `amplitude` and gate times within
/// ±80 ns of `duration` for the pulse closest to a CNOT up to software
/// phase updates.
pub fn calibrate_cnot(setup: &Setup, amplitude: f64, duration: f64) -> Result<OperatingPoint> {
    if !(amplitude > 0.0 && duration > 0.0) {
        return Err(Error::InvalidInput("operating point must be positive".into()));
    }
    let min_duration = if setup.pulses.cr_duration_includes_ramps {
        4.0 * setup.pulses.cr_ramp_sigma
    } else {
        0.0
    };
    let t_lo = (duration - 80e-9).max(min_duration);
    let t_hi = duration + 80e-9;
    let times: Vec<f64> = {
        let n = ((t_hi - t_lo) / 0.25e-9).round() as usize;
        (0..=n).map(|k| t_lo + k as f64 * 0.25e-9).collect()
    };
    let amps: Vec<f64> = (-12..=12).map(|k| amplitude + k as f64 * 0.5e6).collect();
    let infidelity = |u: &ComplexOperator| phase_frames(u).map(|(_, f)| 1.0 - f).unwrap_or(1.0);

    let coarse = amps
        .par_iter()
        .map(|&a| -> Result<(f64, f64, f64)> {
            if fast_path(setup) {
                let prop = CrossResonancePropagator::new(&setup.device, &setup.pulses, a)?;
                let mut best = (a, duration, f64::INFINITY);
                for &t in &times {
                    let flat = flat_length(&setup.pulses, t).unwrap_or(0.0);
                    let e = infidelity(&prop.unitary(flat)?);
                    if e < best.2 {
                        best = (a, t, e);
                    }
                }
                Ok(best)
            } else {
                let mut best = (a, duration, f64::INFINITY);
                for &t in times.iter().step_by(8) {
                    let e = infidelity(&cr_unitary(setup, a, t)?);
                    if e < best.2 {
                        best = (a, t, e);
                    }
                }
                Ok(best)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let start = coarse
        .iter()
        .min_by(|a, b| a.2.total_cmp(&b.2))
        .copied()
        .expect("non-empty grid");
    log::debug!(
        "coarse CNOT point {:.3} MHz, {:.2} ns, infidelity {:.3e}",
        start.0 / 1e6,
        start.1 * 1e9,
        start.2
    );
    // Polish with full single-qubit corrections, in MHz / ns units.
    let objective = |x: &[f64]| -> f64 {
        let (a, t) = (x[0] * 1e6, x[1] * 1e-9);
        if t < min_duration {
            return 1.0;
        }
        operating_point_at(setup, a, t)
            .map(|op| 1.0 - op.gate_fidelity)
            .unwrap_or(1.0)
    };
    let x0 = [start.0 / 1e6, start.1 * 1e9];
    let e0 = objective(&x0);
    let (x, e) = nelder_mead(&objective, &x0, &[0.1, 0.1], 1e-12, 150);
    let (a, t) = if e <= e0 { (x[0] * 1e6, x[1] * 1e-9) } else { (start.0, start.1) };
    operating_point_at(setup, a, t)
}

/// Product of single-qubit unitaries taking `psi` closest to
/// `(|00⟩ + |11⟩)/√2`: rotates the Schmidt bases onto the computational
/// basis with matched phases.
pub fn bell_correction(psi: &StateVector) -> Result<ComplexOperator> {
    if psi.dim() != 4 {
        return Err(Error::DimensionMismatch { expected: 4, got: psi.dim() });
    }
    let a = psi.amplitudes();
    let m = CMatrix::from_row_slice(2, 2, &[a[0], a[1], a[2], a[3]]);
    let svd = m.svd(true, true);
    let (w, v_t) = (svd.u.expect("u requested"), svd.v_t.expect("v_t requested"));
    // psi = Σ s_k w_k ⊗ (v_t row k); map w_k → |k⟩ and (v_t row k) → |k⟩.
    let left = ComplexOperator::new(w.adjoint())?;
    let right = ComplexOperator::new(v_t.map(|z| z.conj()))?;
    Ok(tensor(&left, &right))
}

/// Bell-state generation at `op`: `X90` on qubit 1, then the entangling
/// pulse wrapped in the operating point's single-qubit corrections,
/// analysed through the tomography pipeline.
///
/// The corrections and a final single-qubit alignment computed from the
/// noiseless run are applied as ideal operations, the same way tomography
/// treats its pre-rotations; no extra crosstalk pulse is played.
pub fn run_bell(setup: &Setup, op: &OperatingPoint, noise: bool) -> Result<ExperimentResult> {
    let builder = SequenceBuilder::new(&setup.device, &setup.pulses)?;
    let prep = build_sequence(&builder, &[GateOp::Single(Qubit::Q1, SingleGate::X90)])?;
    let entangle = cr_schedule(setup, op.amplitude, op.duration)?;
    let sim = setup.simulator()?;
    let post = op.frames.post_op();
    let after_prep = sim.unitary(&prep)?.apply(&StateVector::from_bits("00")?)?;
    let gate = &post * &cr_unitary(setup, op.amplitude, op.duration)?;
    let output = |pre: &LocalFrames| (&gate * &pre.pre_op()).apply(&after_prep);
    // The corrections before the pulse are tuned for the state at hand
    // rather than for the gate: qubit 1 must sit on the equator and qubit 2
    // must undo the crosstalk of the preparation pulse.
    let objective = |x: &[f64]| {
        let frames = LocalFrames::from_slice(&[x, &[0.0; 6]].concat());
        output(&frames)
            .map(|psi| 1.0 - concurrence(&psi.to_density()))
            .unwrap_or(1.0)
    };
    let x0: Vec<f64> = op.frames.pre.iter().flatten().copied().collect();
    let (mut x, mut e) = (x0.clone(), objective(&x0));
    for step in [1e-2, 1e-3, 1e-4] {
        let (nx, ne) = nelder_mead(&objective, &x, &[step; 6], 1e-17, 3000);
        if ne < e {
            (x, e) = (nx, ne);
        }
    }
    let frames = LocalFrames::from_slice(&[&x[..], &[0.0; 6]].concat());
    let pre = frames.pre_op();
    let psi = output(&frames)?;
    let alignment = bell_correction(&psi)?;

    let rho = match setup.noise(noise)? {
        Some(n) => {
            let segment = |schedule: &PulseSchedule, rho: &DensityMatrix| -> Result<DensityMatrix> {
                let out = sim.evolve_lindblad(schedule, rho, &n, &[schedule.duration()])?;
                DensityMatrix::project(out.states[0].matrix())
            };
            let rho = segment(&prep, &StateVector::from_bits("00")?.to_density())?;
            segment(&entangle, &rho.evolve(&pre)?)?.evolve(&post)?
        }
        None => psi.to_density(),
    };
    let corrected = rho.evolve(&alignment)?;
    let seed = setup.seed_for(&format!("bell/{noise}"));
    let record = simulate_record(&corrected, &setup.readout, seed)?;
    let est = mle_state_tomography(&record, &setup.readout)?;
    let bell = StateVector::bell();

    let mut r = ExperimentResult::new(
        "bell",
        Series::new("basis_state", "1", vec![0.0, 1.0, 2.0, 3.0]),
        Metadata::for_setup(setup, seed),
    );
    r.push(Series::new("population", "1", (0..4).map(|k| est.matrix()[(k, k)].re).collect()))?;
    r.push(Series::new(
        "population_exact",
        "1",
        (0..4).map(|k| corrected.matrix()[(k, k)].re).collect(),
    ))?;
    r.scalar("fidelity", state_fidelity(&est, &bell)?);
    r.scalar("concurrence", concurrence(&est));
    r.scalar("fidelity_exact", state_fidelity(&corrected, &bell)?);
    r.scalar("concurrence_exact", concurrence(&corrected));
    r.scalar("preparation_residual", e);
    r.scalar("fidelity_before_alignment", state_fidelity(&rho, &bell)?);
    r.scalar("amplitude_hz", op.amplitude);
    r.scalar("gate_time_s", op.duration);
    r.matrices.insert("rho".into(), est.matrix().clone());
    r.matrices.insert("rho_exact".into(), corrected.matrix().clone());
    r.notes.push("single-qubit corrections applied as ideal operations; no crosstalk correction pulse played".into());
    Ok(r)
}

/// Which operation process tomography characterises.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum QptGate {
    /// The entangling pulse at an operating point.
    CrossResonance(OperatingPoint),
    /// Free evolution for the given time, s.
    Identity(f64),
}

/// Process-tomography outcome.
#[derive(Debug, Clone)]
pub struct QptOutcome {
    pub result: ExperimentResult,
    pub tomography: QptResult,
    pub target: GateTarget,
    pub process_fidelity: f64,
    pub gate_fidelity: f64,
}

/// Process tomography of `gate` from the full pulse simulation, compared to
/// the frame-adjusted CNOT or to the identity.
pub fn run_qpt(setup: &Setup, gate: QptGate, noise: bool) -> Result<QptOutcome> {
    let (schedule, target, name) = match gate {
        QptGate::CrossResonance(op) => (
            cr_schedule(setup, op.amplitude, op.duration)?,
            op.frames.target(),
            "qpt_cr",
        ),
        QptGate::Identity(t) => (
            PulseSchedule::idle(t)?,
            GateTarget::new(ComplexOperator::identity(4), "I")?,
            "qpt_identity",
        ),
    };
    let noise_model = setup.noise(noise)?;
    let channel = setup.simulator()?.superoperator(&schedule, noise_model.as_ref())?;
    let seed = setup.seed_for(&format!("{name}/{noise}"));
    let tomography = qpt(
        |rho: &DensityMatrix| DensityMatrix::project(channel.apply(rho).matrix()),
        &setup.readout,
        &QptOptions {
            seed,
            ..QptOptions::default()
        },
    )?;
    let fp = process_fidelity(&tomography.projected, &target);
    let fp_raw = process_fidelity(&tomography.raw, &target);
    let fg = gate_fidelity_from_process(fp, 4)?;

    let concurrences: Vec<f64> = tomography
        .outputs
        .iter()
        .map(|m| DensityMatrix::project(m).map(|d| concurrence(&d)))
        .collect::<Result<Vec<_>>>()?;
    let mut r = ExperimentResult::new(
        name,
        Series::new("input", "1", (0..concurrences.len()).map(|k| k as f64).collect()),
        Metadata::for_setup(setup, seed),
    );
    r.push(Series::new("output_concurrence", "1", concurrences.clone()))?;
    r.scalar("process_fidelity", fp);
    r.scalar("gate_fidelity", fg);
    r.scalar("process_fidelity_raw", fp_raw);
    r.scalar("gate_fidelity_raw", gate_fidelity_from_process(fp_raw.clamp(0.0, 1.0), 4)?);
    r.scalar("projection_distance", tomography.projection_distance);
    r.scalar("trace_preservation_error", tomography.raw.trace_preservation_error());
    r.scalar("max_output_concurrence", concurrences.iter().copied().fold(0.0, f64::max));
    r.scalar("duration_s", schedule.duration());
    if let QptGate::CrossResonance(op) = gate {
        r.scalar("amplitude_hz", op.amplitude);
        let vectors = op.frames.pre.iter().zip(["pre_q1", "pre_q2"]).chain(op.frames.post.iter().zip(["post_q1", "post_q2"]));
        for (r_vec, which) in vectors {
            for (component, axis) in r_vec.iter().zip(["x", "y", "z"]) {
                r.scalar(&format!("frame_{which}_{axis}_rad"), *component);
            }
        }
        r.scalar("noiseless_gate_fidelity", op.gate_fidelity);
    }
    r.matrices.insert("chi_raw".into(), tomography.raw.matrix().clone());
    r.matrices.insert("chi".into(), tomography.projected.matrix().clone());
    r.matrices.insert("chi_ideal".into(), target.chi().matrix().clone());
    r.notes.push(format!("target: {}", target.label));
    Ok(QptOutcome {
        result: r,
        tomography,
        target,
        process_fidelity: fp,
        gate_fidelity: fg,
    })
}

/// Qubit-2 Rabi traces for both control states at `amplitude`.
pub fn run_rabi(setup: &Setup, amplitude: f64, durations: &[f64]) -> Result<ExperimentResult> {
    use crate::dynamics::{rabi_trace, ControlState};
    let ground = rabi_trace(&setup.device, &setup.pulses, amplitude, ControlState::Ground, durations)?;
    let excited = rabi_trace(&setup.device, &setup.pulses, amplitude, ControlState::Excited, durations)?;
    let seed = setup.seed_for("rabi");
    let mut r = ExperimentResult::new(
        "rabi",
        Series::new("flat_duration", "s", durations.to_vec()),
        Metadata::for_setup(setup, seed),
    );
    r.push(Series::new("p_excited_control0", "1", ground.excited_population))?;
    r.push(Series::new("p_excited_control1", "1", excited.excited_population))?;
    r.scalar("amplitude_hz", amplitude);
    if let Ok(rate) = measure_conditional_rate(&setup.device, &setup.pulses, amplitude) {
        r.scalar("jeff_hz", rate.jeff);
        r.scalar("jeff_std_hz", rate.jeff_std);
    }
    Ok(r)
}

/// One self-test outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Fast physical and numerical invariants of the installed build.
pub fn selftest(setup: &Setup) -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    let mut add = |name: &'static str, passed: bool, detail: String| checks.push(Check { name, passed, detail });

    let sim = setup.simulator()?;
    let noise = noise_from_coherences(&setup.device)?;
    let t1 = setup.device.t1[0];
    let rho0 = StateVector::from_bits("10")?.to_density();
    let out = sim.evolve_lindblad(&PulseSchedule::idle(t1)?, &rho0, &noise, &[t1])?;
    let excited = out.states[0].matrix()[(2, 2)].re + out.states[0].matrix()[(3, 3)].re;
    let expected = (-1.0f64).exp();
    add(
        "free decay follows T1",
        (excited - expected).abs() < 1e-4,
        format!("P1(T1) = {excited:.6}, expected {expected:.6}"),
    );
    let trace = out.states[0].matrix().trace().re;
    add("Lindblad preserves trace", (trace - 1.0).abs() < 1e-6, format!("trace {trace:.12}"));

    let bell = StateVector::bell().to_density();
    let c = concurrence(&bell);
    add("Bell concurrence", (c - 1.0).abs() < 1e-9, format!("C = {c:.12}"));

    let record = simulate_record(&bell, &ReadoutModel::default(), 0)?;
    let est = mle_state_tomography(&record, &ReadoutModel::default())?;
    let d = est.trace_distance(&bell);
    add("tomography round trip", d < 1e-3, format!("trace distance {d:.2e}"));

    let fg = gate_fidelity_from_process(0.77, 4)?;
    add("gate fidelity formula", (fg - 0.816).abs() < 1e-12, format!("F_g = {fg}"));

    let small = extract_jeff(&setup.device, &setup.pulses, 20e6)?;
    let predicted = setup.device.coupling / setup.device.detuning_from_other(Qubit::Q1) * 20e6;
    add(
        "weak-drive interaction strength",
        (small - predicted).abs() < 0.02 * predicted.abs().max(1.0),
        format!("J_eff(20 MHz) = {small:.1} Hz, perturbative {predicted:.1} Hz"),
    );
    Ok(checks)
}
