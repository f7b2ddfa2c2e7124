// Copyright 2026 The crsim Authors
// SPDX-License-Identifier: Apache-2.0

//! Drive envelopes, single-qubit gate calibration and pulse schedules.
//!
//! Envelopes return an in-phase and a quadrature component in Hz of Rabi
//! frequency: a resonant constant envelope `A` rotates the addressed qubit at
//! `P₁(t) = sin²(πAt)`. The quadrature carries the derivative correction
//! `scale·(dI/dt)/(2πα)` with `α` the anharmonicity of the driven qubit.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::device::{dressed_frequencies, DeviceParams, DriveSpec, Qubit};
use crate::qlinalg::C64;
use crate::{Error, Result};

const EDGE: f64 = 0.1353352832366127; // exp(-2): Gaussian value two sigmas out

/// Pulse-shape parameters shared by every schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct PulseParams {
    /// Gaussian width of single-qubit gates; the gate lasts `4σ`.
    pub sq_sigma: f64,
    pub sq_drag_scale: f64,
    pub cr_drag_scale: f64,
    /// Width of the Gaussian rise and fall of the cross-resonance pulse.
    pub cr_ramp_sigma: f64,
    /// When true a cross-resonance duration counts the ramps; otherwise it
    /// is the flat-top length alone.
    pub cr_duration_includes_ramps: bool,
}

impl Default for PulseParams {
    fn default() -> Self {
        Self {
            sq_sigma: 4e-9,
            sq_drag_scale: -1.4,
            cr_drag_scale: 0.8,
            cr_ramp_sigma: 12e-9,
            cr_duration_includes_ramps: true,
        }
    }
}

impl PulseParams {
    pub fn single_gate_length(&self) -> f64 {
        4.0 * self.sq_sigma
    }
}

/// Envelope family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EnvelopeKind {
    /// Truncated at ±2σ, total length 4σ.
    GaussianDrag,
    /// Gaussian rise over 2σ, flat for `flat_length`, Gaussian fall over 2σ.
    FlatTopGaussianDrag { flat_length: f64 },
}

/// A shaped drive envelope.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Envelope {
    pub kind: EnvelopeKind,
    /// Peak Rabi frequency scale, Hz.
    pub amplitude: f64,
    pub sigma: f64,
    pub drag_scale: f64,
    /// Anharmonicity used to normalise the derivative correction, Hz.
    pub anharmonicity: f64,
}

impl Envelope {
    /// Baseline-subtracted Gaussian `A·(g − g_edge)` with derivative correction.
    pub fn gaussian_drag(amplitude: f64, sigma: f64, drag_scale: f64, anharmonicity: f64) -> Result<Self> {
        let e = Self {
            kind: EnvelopeKind::GaussianDrag,
            amplitude,
            sigma,
            drag_scale,
            anharmonicity,
        };
        e.check()?;
        Ok(e)
    }

    /// Flat-top with normalised Gaussian ramps.
    pub fn flat_top(
        amplitude: f64,
        ramp_sigma: f64,
        flat_length: f64,
        drag_scale: f64,
        anharmonicity: f64,
    ) -> Result<Self> {
        if !(flat_length >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "flat length must be non-negative, got {flat_length:e} s"
            )));
        }
        let e = Self {
            kind: EnvelopeKind::FlatTopGaussianDrag { flat_length },
            amplitude,
            sigma: ramp_sigma,
            drag_scale,
            anharmonicity,
        };
        e.check()?;
        Ok(e)
    }

    /// Cross-resonance envelope of nominal duration `duration` driven through
    /// a qubit with anharmonicity `anharmonicity`. Durations shorter than the
    /// two ramps compress the ramps to fit; zero yields `None`.
    pub fn cross_resonance(
        amplitude: f64,
        duration: f64,
        params: &PulseParams,
        anharmonicity: f64,
    ) -> Result<Option<Self>> {
        if !(duration >= 0.0) {
            return Err(Error::InvalidInput(format!("negative gate time {duration:e} s")));
        }
        if duration == 0.0 && params.cr_duration_includes_ramps {
            return Ok(None);
        }
        let (sigma, flat) = if !params.cr_duration_includes_ramps {
            (params.cr_ramp_sigma, duration)
        } else if duration >= 4.0 * params.cr_ramp_sigma {
            (params.cr_ramp_sigma, duration - 4.0 * params.cr_ramp_sigma)
        } else {
            (duration / 4.0, 0.0)
        };
        Self::flat_top(amplitude, sigma, flat, params.cr_drag_scale, anharmonicity).map(Some)
    }

    fn check(&self) -> Result<()> {
        let ok = self.amplitude.is_finite()
            && self.sigma > 0.0
            && self.sigma.is_finite()
            && self.drag_scale.is_finite()
            && (self.drag_scale == 0.0 || (self.anharmonicity != 0.0 && self.anharmonicity.is_finite()));
        if !ok {
            return Err(Error::InvalidInput(format!("invalid envelope {self:?}")));
        }
        Ok(())
    }

    pub fn flat_length(&self) -> f64 {
        match self.kind {
            EnvelopeKind::GaussianDrag => 0.0,
            EnvelopeKind::FlatTopGaussianDrag { flat_length } => flat_length,
        }
    }

    pub fn total_length(&self) -> f64 {
        4.0 * self.sigma + self.flat_length()
    }

    /// `(in_phase, quadrature)` at time `t` from the envelope start. Zero
    /// outside the support.
    pub fn sample(&self, t: f64) -> (f64, f64) {
        match self.kind {
            EnvelopeKind::GaussianDrag => sample_gaussian_drag(self, t),
            EnvelopeKind::FlatTopGaussianDrag { .. } => sample_flattop(self, t),
        }
    }

    /// `I + iQ` at `t`.
    pub fn complex(&self, t: f64) -> C64 {
        let (i, q) = self.sample(t);
        C64::new(i, q)
    }

    /// The constant value of the envelope on `[t0, t1]` if it has one.
    pub fn constant_on(&self, t0: f64, t1: f64) -> Option<C64> {
        let total = self.total_length();
        if t1 <= 0.0 || t0 >= total {
            return Some(C64::new(0.0, 0.0));
        }
        match self.kind {
            EnvelopeKind::FlatTopGaussianDrag { flat_length } => {
                let a = 2.0 * self.sigma;
                let tol = 1e-15 * total.max(1e-9);
                (flat_length > 0.0 && t0 >= a - tol && t1 <= a + flat_length + tol)
                    .then(|| C64::new(self.amplitude, 0.0))
            }
            EnvelopeKind::GaussianDrag => None,
        }
    }

    /// Times, relative to the start, where the envelope changes form.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self.kind {
            EnvelopeKind::GaussianDrag => vec![0.0, self.total_length()],
            EnvelopeKind::FlatTopGaussianDrag { flat_length } => {
                let a = 2.0 * self.sigma;
                vec![0.0, a, a + flat_length, 2.0 * a + flat_length]
            }
        }
    }

    /// `∫ in_phase dt` over the support, closed form.
    pub fn in_phase_area(&self) -> f64 {
        let s = self.sigma;
        let half_gauss = s * (PI / 2.0).sqrt() * libm::erf(2f64.sqrt());
        match self.kind {
            EnvelopeKind::GaussianDrag => self.amplitude * (2.0 * half_gauss - 4.0 * s * EDGE),
            EnvelopeKind::FlatTopGaussianDrag { flat_length } => {
                let ramp = (half_gauss - 2.0 * s * EDGE) / (1.0 - EDGE);
                self.amplitude * (flat_length + 2.0 * ramp)
            }
        }
    }
}

/// Per-ramp area of a normalised Gaussian rise, in units of its σ.
pub fn ramp_area_factor() -> f64 {
    ((PI / 2.0).sqrt() * libm::erf(2f64.sqrt()) - 2.0 * EDGE) / (1.0 - EDGE)
}

/// Gaussian-DRAG sample: in-phase `A·(g − edge)` centred on the pulse, with
/// the quadrature holding the scaled derivative.
pub fn sample_gaussian_drag(e: &Envelope, t: f64) -> (f64, f64) {
    let total = 4.0 * e.sigma;
    if !(0.0..=total).contains(&t) {
        return (0.0, 0.0);
    }
    let u = t - total / 2.0;
    let g = (-u * u / (2.0 * e.sigma * e.sigma)).exp();
    let i = e.amplitude * (g - EDGE);
    let di = -e.amplitude * g * u / (e.sigma * e.sigma);
    (i, drag(e, di))
}

/// Flat-top sample with normalised Gaussian ramps.
pub fn sample_flattop(e: &Envelope, t: f64) -> (f64, f64) {
    let flat = e.flat_length();
    let a = 2.0 * e.sigma;
    if !(0.0..=2.0 * a + flat).contains(&t) {
        return (0.0, 0.0);
    }
    let u = if t < a {
        t - a
    } else if t <= a + flat {
        return (e.amplitude, 0.0);
    } else {
        t - a - flat
    };
    let g = (-u * u / (2.0 * e.sigma * e.sigma)).exp();
    let norm = e.amplitude / (1.0 - EDGE);
    let i = norm * (g - EDGE);
    let di = -norm * g * u / (e.sigma * e.sigma);
    (i, drag(e, di))
}

fn drag(e: &Envelope, di: f64) -> f64 {
    if e.drag_scale == 0.0 {
        0.0
    } else {
        e.drag_scale * di / (2.0 * PI * e.anharmonicity)
    }
}

/// Single-qubit gate labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SingleGate {
    I,
    X,
    Y,
    X90,
    Xm90,
    Y90,
    Ym90,
}

impl SingleGate {
    /// Rotation angle in degrees.
    pub fn angle(self) -> f64 {
        match self {
            SingleGate::I => 0.0,
            SingleGate::X | SingleGate::Y => 180.0,
            _ => 90.0,
        }
    }

    /// Drive phase selecting the rotation axis in the qubit frame.
    pub fn phase(self) -> f64 {
        match self {
            SingleGate::I | SingleGate::X | SingleGate::X90 => 0.0,
            SingleGate::Y | SingleGate::Y90 => PI / 2.0,
            SingleGate::Xm90 => PI,
            SingleGate::Ym90 => -PI / 2.0,
        }
    }

    /// The ideal 2×2 unitary.
    pub fn unitary(self) -> crate::qlinalg::ComplexOperator {
        let (axis, angle) = match self {
            SingleGate::I => ('I', 0.0),
            SingleGate::X => ('X', 180.0),
            SingleGate::Y => ('Y', 180.0),
            SingleGate::X90 => ('X', 90.0),
            SingleGate::Xm90 => ('X', -90.0),
            SingleGate::Y90 => ('Y', 90.0),
            SingleGate::Ym90 => ('Y', -90.0),
        };
        if axis == 'I' {
            return crate::qlinalg::ComplexOperator::identity(2);
        }
        crate::qlinalg::rotation(axis, angle).expect("valid axis")
    }

    pub fn label(self) -> &'static str {
        match self {
            SingleGate::I => "I",
            SingleGate::X => "X",
            SingleGate::Y => "Y",
            SingleGate::X90 => "X90",
            SingleGate::Xm90 => "X-90",
            SingleGate::Y90 => "Y90",
            SingleGate::Ym90 => "Y-90",
        }
    }
}

impl fmt::Display for SingleGate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for SingleGate {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "I" => SingleGate::I,
            "X" | "X180" => SingleGate::X,
            "Y" | "Y180" => SingleGate::Y,
            "X90" | "X+90" => SingleGate::X90,
            "X-90" | "Xm90" => SingleGate::Xm90,
            "Y90" | "Y+90" => SingleGate::Y90,
            "Y-90" | "Ym90" => SingleGate::Ym90,
            other => return Err(Error::InvalidInput(format!("unknown gate label `{other}`"))),
        })
    }
}

/// Calibrated drive for a single-qubit rotation about the qubit-frame x axis.
///
/// The carrier is offset from the dressed qubit frequency by `detuning`, with
/// its phase referenced to the pulse centre. The offset cancels the phase
/// error the derivative quadrature produces on a two-level system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SingleQubitCalibration {
    pub qubit: Qubit,
    pub angle: f64,
    pub amplitude: f64,
    pub detuning: f64,
    /// `1 − |Tr(U_target† U)|²/4` at the solution.
    pub infidelity: f64,
}

const CAL_STEPS: usize = 4000;

/// Two-level propagator of `env` in the qubit frame with carrier offset
/// `detuning`, as `[[a, b], [-b*, a*]]` packed into `(a, b)`.
fn two_level_propagator(env: &Envelope, detuning: f64) -> (C64, C64) {
    let total = env.total_length();
    let dt = total / CAL_STEPS as f64;
    let centre = total / 2.0;
    let (mut a, mut b) = (C64::new(1.0, 0.0), C64::new(0.0, 0.0));
    for k in 0..CAL_STEPS {
        let t = (k as f64 + 0.5) * dt;
        let w = env.complex(t) * C64::from_polar(1.0, 2.0 * PI * detuning * (t - centre));
        // exp(-iπ dt (Re w X + Im w Y)) = cos θ − i sin θ (n_x X + n_y Y)
        let r = w.norm();
        let theta = PI * dt * r;
        let (s, c) = theta.sin_cos();
        let (sa, sb) = if r > 0.0 {
            // Off-diagonal element ⟨0|·|1⟩ of −i sinθ (n·σ) is −i sinθ (n_x − i n_y).
            (C64::new(c, 0.0), C64::new(0.0, -s) * (w.conj() / r))
        } else {
            (C64::new(1.0, 0.0), C64::new(0.0, 0.0))
        };
        // Compose step·(a, b): both are SU(2) of the form [[x, y], [-y*, x*]].
        let na = sa * a - sb * b.conj();
        let nb = sa * b + sb * a.conj();
        a = na;
        b = nb;
    }
    (a, b)
}

/// Residual of `U` against the x rotation by `angle` degrees: the Pauli
/// components of `U_target†·U` with the global phase removed.
fn rotation_residual(u: (C64, C64), angle: f64) -> ([f64; 3], f64) {
    let half = angle.to_radians() / 2.0;
    // Target [[c, -is], [-is, c]] → packed (c, -i s).
    let (ta, tb) = (C64::new(half.cos(), 0.0), C64::new(0.0, -half.sin()));
    // W = T†U with T† packed as (ta*, -tb).
    let (a, b) = u;
    let wa = ta.conj() * a + tb * b.conj();
    let wb = ta.conj() * b - tb * a.conj();
    // W = [[wa, wb], [-wb*, wa*]]: Tr W = 2 Re wa, components −i sin·n via
    // wa = cos − i sin n_z, wb = −i sin n_x − sin n_y.
    let trace = 2.0 * wa.re;
    let sign = if trace >= 0.0 { 1.0 } else { -1.0 };
    let r = [sign * -wb.im, sign * -wb.re, sign * -wa.im];
    let fid = trace * trace / 4.0;
    (r, 1.0 - fid)
}

/// Finds amplitude and carrier offset that implement an x rotation by
/// `angle` degrees on `qubit`, to fidelity `1 − 1e-12` or better.
pub fn calibrate_rotation(
    p: &DeviceParams,
    params: &PulseParams,
    qubit: Qubit,
    angle: f64,
) -> Result<SingleQubitCalibration> {
    if !(angle > 0.0 && angle < 360.0) {
        return Err(Error::InvalidInput(format!("rotation angle {angle} outside (0, 360)")));
    }
    let alpha = p.anharmonicity[qubit.index()];
    let shape = |amp: f64| Envelope::gaussian_drag(amp, params.sq_sigma, params.sq_drag_scale, alpha);
    // First guess from the pulse area: θ = 2π∫I dt.
    let unit_area = shape(1.0)?.in_phase_area();
    let mut x = [angle.to_radians() / (2.0 * PI * unit_area), 0.0];
    let eval = |x: [f64; 2]| -> Result<([f64; 3], f64)> {
        Ok(rotation_residual(two_level_propagator(&shape(x[0])?, x[1]), angle))
    };
    let (mut r, mut infid) = eval(x)?;
    let mut lambda = 1e-3;
    let steps = [x[0] * 1e-7, 1e-1 / params.sq_sigma * 1e-7];
    const MAX_ITER: usize = 100;
    for _ in 0..MAX_ITER {
        if infid < 1e-15 {
            break;
        }
        let mut jac = [[0.0; 2]; 3];
        for k in 0..2 {
            let mut xp = x;
            xp[k] += steps[k];
            let (rp, _) = eval(xp)?;
            for i in 0..3 {
                jac[i][k] = (rp[i] - r[i]) / steps[k];
            }
        }
        // Levenberg–Marquardt on the scaled 2×2 normal equations.
        let mut jtj = [[0.0; 2]; 2];
        let mut jtr = [0.0; 2];
        for i in 0..3 {
            for a in 0..2 {
                jtr[a] += jac[i][a] * r[i];
                for b in 0..2 {
                    jtj[a][b] += jac[i][a] * jac[i][b];
                }
            }
        }
        let mut accepted = false;
        for _ in 0..20 {
            let m = [
                [jtj[0][0] * (1.0 + lambda), jtj[0][1]],
                [jtj[1][0], jtj[1][1] * (1.0 + lambda)],
            ];
            let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
            if det == 0.0 || !det.is_finite() {
                lambda *= 10.0;
                continue;
            }
            let dx = [
                -(m[1][1] * jtr[0] - m[0][1] * jtr[1]) / det,
                -(m[0][0] * jtr[1] - m[1][0] * jtr[0]) / det,
            ];
            let xn = [x[0] + dx[0], x[1] + dx[1]];
            let (rn, fn_) = eval(xn)?;
            if fn_ < infid {
                x = xn;
                r = rn;
                infid = fn_;
                lambda = (lambda * 0.3).max(1e-12);
                accepted = true;
                break;
            }
            lambda *= 10.0;
        }
        if !accepted {
            break;
        }
    }
    if !(infid <= 1e-6) {
        return Err(Error::Convergence {
            what: "single-qubit calibration",
            iterations: MAX_ITER,
            detail: format!(
                "{qubit} {angle}°: infidelity {infid:.3e} at amplitude {:.6e} Hz, offset {:.6e} Hz",
                x[0], x[1]
            ),
        });
    }
    Ok(SingleQubitCalibration {
        qubit,
        angle,
        amplitude: x[0],
        detuning: x[1],
        infidelity: infid,
    })
}

/// Calibration of the 90° rotation.
pub fn calibrate_x90(p: &DeviceParams, params: &PulseParams, qubit: Qubit) -> Result<SingleQubitCalibration> {
    calibrate_rotation(p, params, qubit, 90.0)
}

/// Calibrated amplitude of the 90° rotation, Hz.
pub fn calibrate_x90_amplitude(p: &DeviceParams, params: &PulseParams, qubit: Qubit) -> Result<f64> {
    calibrate_x90(p, params, qubit).map(|c| c.amplitude)
}

/// A drive played from `start` with shape `envelope`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleEntry {
    pub start: f64,
    pub drive: DriveSpec,
    pub envelope: Envelope,
}

impl ScheduleEntry {
    pub fn end(&self) -> f64 {
        self.start + self.envelope.total_length()
    }

    /// Complex envelope at absolute time `t`.
    pub fn envelope_at(&self, t: f64) -> C64 {
        self.envelope.complex(t - self.start)
    }
}

/// Time-ordered drives.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PulseSchedule {
    entries: Vec<ScheduleEntry>,
    duration: f64,
}

impl PulseSchedule {
    pub fn new() -> Self {
        Self::default()
    }

    /// An empty schedule lasting `duration`.
    pub fn idle(duration: f64) -> Result<Self> {
        let mut s = Self::new();
        s.extend_to(duration)?;
        Ok(s)
    }

    /// Adds a drive, rejecting overlap with another drive on the same port.
    pub fn push(&mut self, entry: ScheduleEntry) -> Result<()> {
        if !(entry.start >= 0.0 && entry.start.is_finite()) {
            return Err(Error::InvalidInput(format!("invalid start time {:e}", entry.start)));
        }
        let tol = 1e-15;
        if let Some(clash) = self.entries.iter().find(|e| {
            e.drive.port == entry.drive.port && entry.start < e.end() - tol && e.start < entry.end() - tol
        }) {
            return Err(Error::InvalidInput(format!(
                "drive on {} at {:.3e} s overlaps the drive at {:.3e} s",
                entry.drive.port, entry.start, clash.start
            )));
        }
        self.duration = self.duration.max(entry.end());
        self.entries.push(entry);
        self.entries.sort_by(|a, b| a.start.total_cmp(&b.start));
        Ok(())
    }

    /// Extends the schedule with idle time up to `duration`.
    pub fn extend_to(&mut self, duration: f64) -> Result<()> {
        if !(duration >= 0.0 && duration.is_finite()) {
            return Err(Error::InvalidInput(format!("invalid duration {duration:e}")));
        }
        self.duration = self.duration.max(duration);
        Ok(())
    }

    pub fn entries(&self) -> &[ScheduleEntry] {
        &self.entries
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn drives(&self) -> Vec<DriveSpec> {
        self.entries.iter().map(|e| e.drive).collect()
    }

    /// Sorted absolute times where some envelope changes form.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut pts: Vec<f64> = self
            .entries
            .iter()
            .flat_map(|e| e.envelope.breakpoints().into_iter().map(move |b| e.start + b))
            .chain([0.0, self.duration])
            .collect();
        pts.sort_by(f64::total_cmp);
        pts.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
        pts
    }

    /// Schedule shifted later by `offset`.
    pub fn shifted(&self, offset: f64) -> Result<Self> {
        let mut out = Self::new();
        for e in &self.entries {
            out.push(ScheduleEntry {
                start: e.start + offset,
                ..e.clone()
            })?;
        }
        out.extend_to(self.duration + offset)?;
        Ok(out)
    }
}

/// One step of a gate sequence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GateOp {
    Single(Qubit, SingleGate),
    /// Cross-resonance drive on `control`'s port at the other qubit's
    /// frequency.
    CrossResonance { control: Qubit, amplitude: f64, duration: f64 },
}

/// Turns gate sequences into pulse schedules using calibrated single-qubit
/// drives.
#[derive(Debug, Clone)]
pub struct SequenceBuilder {
    params: PulseParams,
    anharmonicity: [f64; 2],
    dressed: [f64; 2],
    /// Per qubit: 90° and 180° calibrations.
    cal: [[SingleQubitCalibration; 2]; 2],
}

impl SequenceBuilder {
    pub fn new(p: &DeviceParams, params: &PulseParams) -> Result<Self> {
        let (f1, f2) = dressed_frequencies(p)?;
        let cal_for = |q| -> Result<[SingleQubitCalibration; 2]> {
            Ok([
                calibrate_rotation(p, params, q, 90.0)?,
                calibrate_rotation(p, params, q, 180.0)?,
            ])
        };
        Ok(Self {
            params: params.clone(),
            anharmonicity: p.anharmonicity,
            dressed: [f1, f2],
            cal: [cal_for(Qubit::Q1)?, cal_for(Qubit::Q2)?],
        })
    }

    pub fn calibration(&self, q: Qubit, gate: SingleGate) -> Option<&SingleQubitCalibration> {
        match gate.angle() {
            a if a == 90.0 => Some(&self.cal[q.index()][0]),
            a if a == 180.0 => Some(&self.cal[q.index()][1]),
            _ => None,
        }
    }

    pub fn params(&self) -> &PulseParams {
        &self.params
    }

    /// Schedule entry for `gate` on `q` starting at `start`, or `None` for
    /// the identity.
    pub fn single_entry(&self, q: Qubit, gate: SingleGate, start: f64) -> Result<Option<ScheduleEntry>> {
        let Some(cal) = self.calibration(q, gate) else {
            return Ok(None);
        };
        let envelope = Envelope::gaussian_drag(
            cal.amplitude,
            self.params.sq_sigma,
            self.params.sq_drag_scale,
            self.anharmonicity[q.index()],
        )?;
        let centre = start + envelope.total_length() / 2.0;
        // Reference the offset carrier's phase to the pulse centre.
        let phase = gate.phase() - 2.0 * PI * cal.detuning * centre;
        let drive = DriveSpec::new(q, self.dressed[q.index()] + cal.detuning, phase)?;
        Ok(Some(ScheduleEntry {
            start,
            drive,
            envelope,
        }))
    }

    /// Cross-resonance entry, or `None` for zero duration.
    pub fn cross_resonance_entry(
        &self,
        control: Qubit,
        amplitude: f64,
        duration: f64,
        start: f64,
    ) -> Result<Option<ScheduleEntry>> {
        let Some(envelope) = Envelope::cross_resonance(
            amplitude,
            duration,
            &self.params,
            self.anharmonicity[control.index()],
        )?
        else {
            return Ok(None);
        };
        let drive = DriveSpec::new(control, self.dressed[control.other().index()], 0.0)?;
        Ok(Some(ScheduleEntry {
            start,
            drive,
            envelope,
        }))
    }

    /// Nominal length of `op`.
    fn op_length(&self, op: &GateOp) -> f64 {
        match *op {
            GateOp::Single(..) => self.params.single_gate_length(),
            GateOp::CrossResonance { duration, .. } => {
                if self.params.cr_duration_includes_ramps {
                    duration
                } else {
                    duration + 4.0 * self.params.cr_ramp_sigma
                }
            }
        }
    }
}

/// Schedules `ops` as early as possible: each op waits for the qubits it
/// touches; a cross-resonance drive touches both.
pub fn build_sequence(builder: &SequenceBuilder, ops: &[GateOp]) -> Result<PulseSchedule> {
    let mut free = [0.0_f64; 2];
    let mut schedule = PulseSchedule::new();
    for op in ops {
        let length = builder.op_length(op);
        match *op {
            GateOp::Single(q, gate) => {
                let start = free[q.index()];
                if let Some(e) = builder.single_entry(q, gate, start)? {
                    schedule.push(e)?;
                }
                free[q.index()] = start + length;
            }
            GateOp::CrossResonance {
                control,
                amplitude,
                duration,
            } => {
                let start = free[0].max(free[1]);
                if let Some(e) = builder.cross_resonance_entry(control, amplitude, duration, start)? {
                    schedule.push(e)?;
                }
                free = [start + length; 2];
            }
        }
    }
    schedule.extend_to(free[0].max(free[1]))?;
    Ok(schedule)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn sq(amp: f64) -> Envelope {
        Envelope::gaussian_drag(amp, 4e-9, -1.4, 224e6).unwrap()
    }

    #[test]
    fn gaussian_peak_and_edges() {
        let e = sq(30e6);
        let (i, q) = e.sample(8e-9);
        assert_abs_diff_eq!(i, 30e6 * (1.0 - EDGE), epsilon = 1e-6);
        assert_abs_diff_eq!(q, 0.0, epsilon = 1e-9);
        assert_eq!(e.sample(0.0).0, 0.0);
        assert_eq!(e.sample(16e-9).0, 0.0);
        assert_eq!(e.sample(-1e-9), (0.0, 0.0));
        assert_eq!(e.sample(17e-9), (0.0, 0.0));
    }

    #[test]
    fn flat_top_values() {
        let e = Envelope::flat_top(500e6, 12e-9, 100e-9, 0.8, 224e6).unwrap();
        assert_eq!(e.sample(74e-9), (500e6, 0.0));
        assert_abs_diff_eq!(e.sample(0.0).0, 0.0, epsilon = 1e-6);
        assert_abs_diff_eq!(e.total_length(), 148e-9, epsilon = 1e-20);
        assert!(Envelope::flat_top(1.0, 1e-9, -1e-9, 0.0, 1.0).is_err());
        let d = Envelope::flat_top(500e6, 12e-9, 0.0, 0.8, 224e6).unwrap();
        assert_abs_diff_eq!(d.sample(24e-9).0, 500e6, epsilon = 1e-3);
    }

    #[test]
    fn cross_resonance_durations() {
        let p = PulseParams::default();
        assert!(Envelope::cross_resonance(1.0, 0.0, &p, 224e6).unwrap().is_none());
        let e = Envelope::cross_resonance(1.0, 220e-9, &p, 224e6).unwrap().unwrap();
        assert_abs_diff_eq!(e.total_length(), 220e-9, epsilon = 1e-20);
        let short = Envelope::cross_resonance(1.0, 20e-9, &p, 224e6).unwrap().unwrap();
        assert_abs_diff_eq!(short.sigma, 5e-9, epsilon = 1e-20);
        let flat_only = PulseParams {
            cr_duration_includes_ramps: false,
            ..p
        };
        let e = Envelope::cross_resonance(1.0, 220e-9, &flat_only, 224e6).unwrap().unwrap();
        assert_abs_diff_eq!(e.total_length(), 268e-9, epsilon = 1e-20);
    }

    #[test]
    fn x90_calibration_reaches_target() {
        let p = DeviceParams::default();
        let c = calibrate_x90(&p, &PulseParams::default(), Qubit::Q1).unwrap();
        assert!(c.infidelity < 1e-12, "{c:?}");
        assert!(c.amplitude > 25e6 && c.amplitude < 40e6);
        let x180 = calibrate_rotation(&p, &PulseParams::default(), Qubit::Q1, 180.0).unwrap();
        assert!(x180.amplitude > c.amplitude);
    }

    #[test]
    fn sequence_layout() {
        let p = DeviceParams::default();
        let b = SequenceBuilder::new(&p, &PulseParams::default()).unwrap();
        let s = build_sequence(
            &b,
            &[
                GateOp::Single(Qubit::Q1, SingleGate::X90),
                GateOp::CrossResonance {
                    control: Qubit::Q1,
                    amplitude: 500e6,
                    duration: 200e-9,
                },
            ],
        )
        .unwrap();
        assert_eq!(s.entries().len(), 2);
        assert_abs_diff_eq!(s.entries()[1].start, 16e-9, epsilon = 1e-20);
        let empty = build_sequence(&b, &[]).unwrap();
        assert!(empty.is_empty());
        assert_eq!(empty.duration(), 0.0);
        let par = build_sequence(
            &b,
            &[
                GateOp::Single(Qubit::Q1, SingleGate::X),
                GateOp::Single(Qubit::Q2, SingleGate::X),
            ],
        )
        .unwrap();
        assert_abs_diff_eq!(par.duration(), 16e-9, epsilon = 1e-20);
    }

    #[test]
    fn overlap_rejected() {
        let e = sq(1e6);
        let d = DriveSpec::new(Qubit::Q1, 5e9, 0.0).unwrap();
        let mut s = PulseSchedule::new();
        s.push(ScheduleEntry { start: 0.0, drive: d, envelope: e }).unwrap();
        assert!(s.push(ScheduleEntry { start: 8e-9, drive: d, envelope: e }).is_err());
        let d2 = DriveSpec::new(Qubit::Q2, 5e9, 0.0).unwrap();
        s.push(ScheduleEntry { start: 8e-9, drive: d2, envelope: e }).unwrap();
        s.push(ScheduleEntry { start: 16e-9, drive: d, envelope: e }).unwrap();
    }

    #[test]
    fn gate_labels_roundtrip() {
        for g in [
            SingleGate::I,
            SingleGate::X,
            SingleGate::Y,
            SingleGate::X90,
            SingleGate::Xm90,
            SingleGate::Y90,
            SingleGate::Ym90,
        ] {
            assert_eq!(g.label().parse::<SingleGate>().unwrap(), g);
        }
        assert!("Z".parse::<SingleGate>().is_err());
    }
}
