// Copyright 2026 The crsim Authors
// SPDX-License-Identifier: Apache-2.0

//! Device constants and the two-qubit Hamiltonians.
//!
//! Frequencies are cyclic (Hz) in [`DeviceParams`] and angular (rad/s) inside
//! operators. A rotating-frame Hamiltonian is kept in the structured form
//! [`FrameHamiltonian`]: a static Hermitian part plus terms
//! `c(t)·e^{i2πνt}·O + h.c.`, which lets the integrator move to a frame where
//! the terms stop rotating.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::qlinalg::{hermitize, kron, CMatrix, ComplexOperator, C64, ONE, ZERO};
use crate::{Error, Result};

use std::f64::consts::PI;

/// One of the two qubits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Qubit {
    Q1,
    Q2,
}

impl Qubit {
    pub const BOTH: [Qubit; 2] = [Qubit::Q1, Qubit::Q2];

    /// Zero-based index.
    pub fn index(self) -> usize {
        match self {
            Qubit::Q1 => 0,
            Qubit::Q2 => 1,
        }
    }

    pub fn other(self) -> Qubit {
        match self {
            Qubit::Q1 => Qubit::Q2,
            Qubit::Q2 => Qubit::Q1,
        }
    }

    /// Parses the one-based port number used in configs and labels.
    pub fn from_port(port: usize) -> Result<Qubit> {
        match port {
            1 => Ok(Qubit::Q1),
            2 => Ok(Qubit::Q2),
            _ => Err(Error::InvalidInput(format!("port must be 1 or 2, got {port}"))),
        }
    }

    /// `Z` eigenvalue of this qubit in two-qubit basis state `index`.
    pub(crate) fn z_sign(self, index: usize) -> f64 {
        let bit = match self {
            Qubit::Q1 => (index >> 1) & 1,
            Qubit::Q2 => index & 1,
        };
        if bit == 0 {
            1.0
        } else {
            -1.0
        }
    }
}

impl fmt::Display for Qubit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "q{}", self.index() + 1)
    }
}

/// Readout resonator constants. Stored for completeness; the dynamics never
/// use them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cavity {
    pub frequency: f64,
    pub linewidth: f64,
    pub chi1: f64,
    pub chi2: f64,
}

/// Device constants. Frequencies in Hz, times in seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceParams {
    /// Bare transition frequencies.
    pub omega: [f64; 2],
    /// Transverse exchange coupling.
    pub coupling: f64,
    pub anharmonicity: [f64; 2],
    pub t1: [f64; 2],
    pub t2: [f64; 2],
    /// Classical crosstalk `[m12, m21]`: fraction of a port-1 drive seen by
    /// qubit 2, and the converse.
    pub crosstalk: [f64; 2],
    /// Residual always-on ZZ strength; zero disables it.
    pub zz: f64,
    /// Joint-readout weights `[β_II, β_IZ, β_ZI, β_ZZ]`.
    pub beta: [f64; 4],
    pub cavity: Cavity,
}

/// Coupling that makes the saturated conditional rate reach 1.4 MHz on the
/// default amplitude grid, obtained with
/// [`calibrate_j`](crate::experiments::calibrate_j).
pub const CALIBRATED_COUPLING_HZ: f64 = 1.544_330_8e6;

impl Default for DeviceParams {
    fn default() -> Self {
        Self {
            omega: [5.854e9, 5.528e9],
            coupling: CALIBRATED_COUPLING_HZ,
            anharmonicity: [224e6, 255e6],
            t1: [1.6e-6, 1.5e-6],
            t2: [1.6e-6, 1.5e-6],
            crosstalk: [0.5, 0.5],
            zz: 200e3,
            beta: [1.0, 0.77, 0.72, 0.6],
            cavity: Cavity {
                frequency: 9.72e9,
                linewidth: 1e6,
                chi1: 0.55e6,
                chi2: 0.3e6,
            },
        }
    }
}

impl DeviceParams {
    /// Checks the physical invariants and normalises `beta` so `β_II = 1`.
    pub fn validated(mut self) -> Result<Self> {
        let finite = self
            .omega
            .iter()
            .chain(&self.anharmonicity)
            .chain(&self.t1)
            .chain(&self.t2)
            .chain(&self.crosstalk)
            .chain(&self.beta)
            .chain([&self.coupling, &self.zz])
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Unphysical("device parameters must be finite".into()));
        }
        if !(self.omega[0] > self.omega[1] && self.omega[1] > 0.0) {
            return Err(Error::Unphysical(format!(
                "expected omega1 > omega2 > 0, got {:.6e} and {:.6e} Hz",
                self.omega[0], self.omega[1]
            )));
        }
        for q in Qubit::BOTH {
            let (t1, t2) = (self.t1[q.index()], self.t2[q.index()]);
            if !(t1 > 0.0 && t2 > 0.0) {
                return Err(Error::Unphysical(format!("coherence times of {q} must be positive")));
            }
            if t2 > 2.0 * t1 * (1.0 + 1e-12) {
                return Err(Error::Unphysical(format!(
                    "T2 = {t2:.3e} s exceeds 2·T1 = {:.3e} s on {q}",
                    2.0 * t1
                )));
            }
        }
        if self.beta[0] == 0.0 {
            return Err(Error::Unphysical("beta_ii must be nonzero".into()));
        }
        let b0 = self.beta[0];
        self.beta.iter_mut().for_each(|b| *b /= b0);
        Ok(self)
    }

    pub fn frequency(&self, q: Qubit) -> f64 {
        self.omega[q.index()]
    }

    /// Bare detuning `ω_q − ω_other`.
    pub fn detuning_from_other(&self, q: Qubit) -> f64 {
        self.omega[q.index()] - self.omega[q.other().index()]
    }

    /// Fraction of a drive on `port` that reaches the other qubit.
    pub fn crosstalk_from(&self, port: Qubit) -> f64 {
        self.crosstalk[port.index()]
    }
}

pub(crate) fn sigma_z() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, -ONE])
}

/// `|0⟩⟨1|`, the lowering operator when `|0⟩` is the ground state.
pub(crate) fn lowering() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[ZERO, ONE, ZERO, ZERO])
}

/// Embeds a single-qubit operator on `q`.
pub(crate) fn on(q: Qubit, op: &CMatrix) -> CMatrix {
    let id = CMatrix::identity(2, 2);
    match q {
        Qubit::Q1 => kron(op, &id),
        Qubit::Q2 => kron(&id, op),
    }
}

pub(crate) fn z_on(q: Qubit) -> CMatrix {
    on(q, &sigma_z())
}

/// `2π·(½ω₁ ZI + ½ω₂ IZ + J XX + ½ζ ZZ)` in rad/s, lab frame.
pub fn static_hamiltonian(p: &DeviceParams) -> ComplexOperator {
    let x = CMatrix::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO]);
    let z = sigma_z();
    let h = z_on(Qubit::Q1) * C64::new(PI * p.omega[0], 0.0)
        + z_on(Qubit::Q2) * C64::new(PI * p.omega[1], 0.0)
        + kron(&x, &x) * C64::new(2.0 * PI * p.coupling, 0.0)
        + kron(&z, &z) * C64::new(PI * p.zz, 0.0);
    ComplexOperator::from_raw(h)
}

/// Dressed transition frequencies `(f̃₁, f̃₂)` of the exchange-coupled pair.
///
/// Obtained by diagonalising the coupled Hamiltonian without the phenomenological
/// ZZ term and labelling each eigenstate by its largest bare-state overlap.
pub fn dressed_frequencies(p: &DeviceParams) -> Result<(f64, f64)> {
    let detuning = p.omega[0] - p.omega[1];
    if p.coupling.abs() >= detuning.abs() {
        return Err(Error::Unphysical(format!(
            "coupling {:.3e} Hz is not smaller than the detuning {:.3e} Hz",
            p.coupling, detuning
        )));
    }
    let bare = DeviceParams { zz: 0.0, ..p.clone() };
    let h = static_hamiltonian(&bare).into_matrix() / C64::new(2.0 * PI, 0.0);
    let (vals, vecs) = crate::qlinalg::eig_hermitian_raw(&hermitize(h));
    let mut energy = [f64::NAN; 4];
    let mut taken = [false; 4];
    for basis in 0..4 {
        let (k, _) = (0..4)
            .filter(|&k| !taken[k])
            .map(|k| (k, vecs[(basis, k)].norm_sqr()))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .expect("four eigenvectors");
        taken[k] = true;
        energy[basis] = vals[k];
    }
    // |0⟩ is the +1 eigenstate of Z, so it carries the higher energy.
    Ok((energy[0] - energy[2], energy[0] - energy[1]))
}

/// Which drive Hamiltonian to simulate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DriveModel {
    /// Local, crosstalk and conditional (ZX) terms inserted explicitly,
    /// dressed-frequency static part.
    Effective,
    /// Bare local and crosstalk drives on top of the exchange-coupled static
    /// Hamiltonian; the conditional term emerges from the dynamics.
    Direct { rwa: bool },
}

impl FromStr for DriveModel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "effective" => Ok(DriveModel::Effective),
            "direct" => Ok(DriveModel::Direct { rwa: true }),
            "direct-lab" | "direct_no_rwa" => Ok(DriveModel::Direct { rwa: false }),
            other => Err(Error::InvalidInput(format!(
                "unknown drive model `{other}` (expected effective, direct or direct-lab)"
            ))),
        }
    }
}

/// A microwave drive applied through one qubit's port.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriveSpec {
    pub port: Qubit,
    /// Carrier frequency, Hz.
    pub carrier: f64,
    /// Carrier phase at absolute time zero, radians.
    pub phase: f64,
}

impl DriveSpec {
    pub fn new(port: Qubit, carrier: f64, phase: f64) -> Result<Self> {
        if !(carrier > 0.0 && carrier.is_finite()) || !phase.is_finite() {
            return Err(Error::InvalidInput(format!(
                "drive carrier must be positive and finite, got {carrier}"
            )));
        }
        Ok(Self { port, carrier, phase })
    }
}

/// Frame rotating at `freqs` on the two qubits:
/// `U(t) = exp(i2πt(f_a ZI/2 + f_b IZ/2))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotatingFrame {
    pub freqs: [f64; 2],
}

impl RotatingFrame {
    pub fn new(fa: f64, fb: f64) -> Result<Self> {
        if !(fa >= 0.0 && fb >= 0.0 && fa.is_finite() && fb.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "frame frequencies must be non-negative, got ({fa}, {fb})"
            )));
        }
        Ok(Self { freqs: [fa, fb] })
    }

    /// The laboratory frame.
    pub fn lab() -> Self {
        Self { freqs: [0.0, 0.0] }
    }

    /// Frame at the dressed qubit frequencies.
    pub fn dressed(p: &DeviceParams) -> Result<Self> {
        let (f1, f2) = dressed_frequencies(p)?;
        Self::new(f1, f2)
    }

    /// Diagonal of `U(t)`.
    pub fn phases(&self, t: f64) -> [C64; 4] {
        diagonal_phases(self.freqs, t)
    }

    /// Diagonal of the map from `self` into `to` at time `t`.
    pub fn phases_to(&self, to: &RotatingFrame, t: f64) -> [C64; 4] {
        let d = [to.freqs[0] - self.freqs[0], to.freqs[1] - self.freqs[1]];
        diagonal_phases(d, t)
    }

    /// `U(t)·H·U(t)† − π(f_a ZI + f_b IZ)` for a lab-frame Hamiltonian in rad/s.
    pub fn transform_hamiltonian(&self, h_lab: &ComplexOperator, t: f64) -> Result<ComplexOperator> {
        check_dim4(h_lab.dim())?;
        let w = self.phases(t);
        let mut m = conjugate_diag(h_lab.matrix(), &w);
        for (i, wi) in (0..4).zip(frame_energy(self.freqs)) {
            m[(i, i)] -= wi;
        }
        Ok(ComplexOperator::from_raw(m))
    }

    /// Moves a lab-frame ket into this frame at time `t`.
    pub fn to_frame(&self, psi: &crate::qlinalg::StateVector, t: f64) -> Result<crate::qlinalg::StateVector> {
        check_dim4(psi.dim())?;
        let w = self.phases(t);
        let v = psi.amplitudes().map_with_location(|i, _, z| z * w[i]);
        Ok(crate::qlinalg::StateVector::from_raw(v))
    }

    /// Inverse of [`to_frame`](Self::to_frame).
    pub fn from_frame(&self, psi: &crate::qlinalg::StateVector, t: f64) -> Result<crate::qlinalg::StateVector> {
        check_dim4(psi.dim())?;
        let w = self.phases(t);
        let v = psi.amplitudes().map_with_location(|i, _, z| z * w[i].conj());
        Ok(crate::qlinalg::StateVector::from_raw(v))
    }
}

/// Builds the frame descriptor at `frame_freqs` (Hz).
pub fn rotating_frame(_p: &DeviceParams, frame_freqs: (f64, f64)) -> Result<RotatingFrame> {
    RotatingFrame::new(frame_freqs.0, frame_freqs.1)
}

fn check_dim4(d: usize) -> Result<()> {
    if d != 4 {
        return Err(Error::DimensionMismatch { expected: 4, got: d });
    }
    Ok(())
}

/// Diagonal of `exp(iπt(a ZI + b IZ))`.
pub(crate) fn diagonal_phases(freqs: [f64; 2], t: f64) -> [C64; 4] {
    let mut out = [ONE; 4];
    for (i, o) in out.iter_mut().enumerate() {
        let arg = Qubit::BOTH
            .iter()
            .map(|&q| q.z_sign(i) * freqs[q.index()])
            .sum::<f64>();
        *o = C64::from_polar(1.0, PI * t * arg);
    }
    out
}

/// Diagonal of `π(a ZI + b IZ)`.
fn frame_energy(freqs: [f64; 2]) -> [C64; 4] {
    let mut out = [ZERO; 4];
    for (i, o) in out.iter_mut().enumerate() {
        let e: f64 = Qubit::BOTH.iter().map(|&q| q.z_sign(i) * freqs[q.index()]).sum();
        *o = C64::new(PI * e, 0.0);
    }
    out
}

/// `W·M·W†` for diagonal unitary `W`.
pub(crate) fn conjugate_diag(m: &CMatrix, w: &[C64; 4]) -> CMatrix {
    DMatrix::from_fn(4, 4, |i, j| m[(i, j)] * w[i] * w[j].conj())
}

/// One term `c(t)·e^{i2πνt}·O + h.c.` of a rotating-frame Hamiltonian, with
/// `c(t) = weight·E(t)` for drive terms (complex envelope `E`) and
/// `c = weight` for static couplings.
#[derive(Debug, Clone)]
pub struct RotatingTerm {
    pub op: CMatrix,
    /// Angular weight, rad/s per unit envelope.
    pub weight: C64,
    /// Rotation frequency ν, Hz.
    pub freq: f64,
    /// Net count of `|0⟩⟨1|` minus `|1⟩⟨0|` factors on each qubit; sets how
    /// ν changes under a change of frame.
    pub charge: [i32; 2],
    /// Index of the drive whose envelope multiplies the term.
    pub drive: Option<usize>,
}

/// Rotating-frame Hamiltonian in structured form, rad/s.
#[derive(Debug, Clone)]
pub struct FrameHamiltonian {
    pub frame: RotatingFrame,
    pub static_part: CMatrix,
    pub terms: Vec<RotatingTerm>,
}

impl FrameHamiltonian {
    /// Evaluates `H(t)` given each drive's complex envelope at `t`.
    pub fn at(&self, t: f64, envelopes: &[C64]) -> CMatrix {
        let mut h = self.static_part.clone();
        for term in &self.terms {
            let env = match term.drive {
                Some(k) => envelopes[k],
                None => ONE,
            };
            if env == ZERO {
                continue;
            }
            let c = term.weight * env * C64::from_polar(1.0, 2.0 * PI * term.freq * t);
            let o = &term.op;
            for i in 0..4 {
                for j in 0..4 {
                    let v = o[(i, j)];
                    if v != ZERO {
                        h[(i, j)] += c * v;
                        h[(j, i)] += (c * v).conj();
                    }
                }
            }
        }
        h
    }

    /// The same dynamics described in frame `to`.
    pub fn reframe(&self, to: RotatingFrame) -> FrameHamiltonian {
        let d = [
            to.freqs[0] - self.frame.freqs[0],
            to.freqs[1] - self.frame.freqs[1],
        ];
        let mut static_part = self.static_part.clone();
        for (i, e) in (0..4).zip(frame_energy(d)) {
            static_part[(i, i)] -= e;
        }
        let terms = self
            .terms
            .iter()
            .map(|t| RotatingTerm {
                freq: t.freq + t.charge[0] as f64 * d[0] + t.charge[1] as f64 * d[1],
                ..t.clone()
            })
            .collect();
        FrameHamiltonian {
            frame: to,
            static_part,
            terms,
        }
    }

    /// A frame in which every term selected by `active` is stationary, if one
    /// exists. Frequencies are matched to `tol` Hz.
    pub fn comoving_frame<F>(&self, active: F, tol: f64) -> Option<RotatingFrame>
    where
        F: Fn(&RotatingTerm) -> bool,
    {
        let rows: Vec<&RotatingTerm> = self
            .terms
            .iter()
            .filter(|t| active(t) && t.charge != [0, 0])
            .collect();
        if self.terms.iter().any(|t| active(t) && t.charge == [0, 0] && t.freq.abs() > tol) {
            return None;
        }
        if rows.is_empty() {
            return Some(self.frame);
        }
        let a = DMatrix::from_fn(rows.len(), 2, |r, c| rows[r].charge[c] as f64);
        let b = nalgebra::DVector::from_iterator(rows.len(), rows.iter().map(|t| -t.freq));
        let svd = a.clone().svd(true, true);
        let delta = svd.solve(&b, 1e-12).ok()?;
        let residual = (&a * &delta - &b).amax();
        if residual > tol {
            return None;
        }
        let fa = self.frame.freqs[0] + delta[0];
        let fb = self.frame.freqs[1] + delta[1];
        Some(RotatingFrame { freqs: [fa, fb] })
    }

    /// Drive indices referenced by the terms.
    pub fn drive_count(&self) -> usize {
        self.terms
            .iter()
            .filter_map(|t| t.drive)
            .max()
            .map_or(0, |k| k + 1)
    }
}

/// Rotating-frame terms contributed by drive `d` in `frame`, tagged with
/// envelope index `index`.
///
/// The effective model inserts `XI − (J/Δ)·ZX + m·IX` (for a port-1 drive) with
/// the rotating-wave approximation; each term picks up the detuning of its
/// target qubit. The direct model keeps only the bare local and crosstalk
/// drives, and keeps counter-rotating parts when `rwa` is false.
pub fn drive_hamiltonian(
    p: &DeviceParams,
    d: &DriveSpec,
    model: DriveModel,
    frame: &RotatingFrame,
    index: usize,
) -> Vec<RotatingTerm> {
    let port = d.port;
    let other = port.other();
    let phase = C64::from_polar(1.0, d.phase);
    let raise_port = on(port, &lowering().adjoint());
    let raise_other = on(other, &lowering().adjoint());
    let nu_port = d.carrier - frame.freqs[port.index()];
    let nu_other = d.carrier - frame.freqs[other.index()];
    let mut charge_port = [0; 2];
    charge_port[port.index()] = -1;
    let mut charge_other = [0; 2];
    charge_other[other.index()] = -1;
    let m = p.crosstalk_from(port);

    let mut terms = vec![
        RotatingTerm {
            op: raise_port.clone(),
            weight: phase * PI,
            freq: nu_port,
            charge: charge_port,
            drive: Some(index),
        },
        RotatingTerm {
            op: raise_other.clone(),
            weight: phase * (PI * m),
            freq: nu_other,
            charge: charge_other,
            drive: Some(index),
        },
    ];
    match model {
        DriveModel::Effective => {
            let ratio = p.coupling / p.detuning_from_other(port);
            terms.push(RotatingTerm {
                op: z_on(port) * raise_other,
                weight: phase * (-PI * ratio),
                freq: nu_other,
                charge: charge_other,
                drive: Some(index),
            });
        }
        DriveModel::Direct { rwa: false } => {
            let lower_port = on(port, &lowering());
            let lower_other = on(other, &lowering());
            terms.push(RotatingTerm {
                op: lower_port,
                weight: phase * PI,
                freq: d.carrier + frame.freqs[port.index()],
                charge: charge_port.map(|c| -c),
                drive: Some(index),
            });
            terms.push(RotatingTerm {
                op: lower_other,
                weight: phase * (PI * m),
                freq: d.carrier + frame.freqs[other.index()],
                charge: charge_other.map(|c| -c),
                drive: Some(index),
            });
        }
        DriveModel::Direct { rwa: true } => {}
    }
    terms
}

/// Full rotating-frame Hamiltonian for `drives` under `model`.
pub fn frame_hamiltonian(
    p: &DeviceParams,
    model: DriveModel,
    frame: RotatingFrame,
    drives: &[DriveSpec],
) -> Result<FrameHamiltonian> {
    let zz = kron(&sigma_z(), &sigma_z()) * C64::new(PI * p.zz, 0.0);
    let (static_freqs, mut terms) = match model {
        DriveModel::Effective => {
            let (f1, f2) = dressed_frequencies(p)?;
            ([f1, f2], Vec::new())
        }
        DriveModel::Direct { rwa } => {
            let s = lowering();
            let flip_flop = kron(&s, &s.adjoint());
            let mut t = vec![RotatingTerm {
                op: flip_flop,
                weight: C64::new(2.0 * PI * p.coupling, 0.0),
                freq: frame.freqs[0] - frame.freqs[1],
                charge: [1, -1],
                drive: None,
            }];
            if !rwa {
                t.push(RotatingTerm {
                    op: kron(&s, &s),
                    weight: C64::new(2.0 * PI * p.coupling, 0.0),
                    freq: frame.freqs[0] + frame.freqs[1],
                    charge: [1, 1],
                    drive: None,
                });
            }
            (p.omega, t)
        }
    };
    let mut static_part = zz;
    for q in Qubit::BOTH {
        let detuning = static_freqs[q.index()] - frame.freqs[q.index()];
        static_part += z_on(q) * C64::new(PI * detuning, 0.0);
    }
    for (k, d) in drives.iter().enumerate() {
        terms.extend(drive_hamiltonian(p, d, model, &frame, k));
    }
    Ok(FrameHamiltonian {
        frame,
        static_part,
        terms,
    })
}
