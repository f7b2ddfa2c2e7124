// Copyright 2026 The crsim Authors
// SPDX-License-Identifier: Apache-2.0

//! Closed-system propagator of a single cross-resonance pulse for any
//! flat-top length.
//!
//! With the carrier at qubit 2's dressed frequency every term of the
//! effective Hamiltonian is stationary in the frame rotating at that
//! frequency on both qubits. There the ramps are independent of when they are
//! played and the flat section is one exponential, so the two ramp
//! propagators and one eigendecomposition serve every duration.

use crate::device::{frame_hamiltonian, DeviceParams, DriveModel, DriveSpec, Qubit, RotatingFrame};
use crate::ode::{self, Adaptive};
use crate::pulses::{Envelope, PulseParams};
use crate::qlinalg::{eig_hermitian_raw, CMatrix, ComplexOperator, C64};
use crate::{Error, Result};

/// Cross-resonance pulse on qubit 1's port at amplitude `amplitude`, with
/// the ramps and drag of `PulseParams`, started at time zero.
#[derive(Debug, Clone)]
pub struct CrossResonancePropagator {
    amplitude: f64,
    ramp: f64,
    dressed: RotatingFrame,
    comoving: RotatingFrame,
    ramp_up: CMatrix,
    ramp_down: CMatrix,
    flat_values: Vec<f64>,
    flat_vectors: CMatrix,
}

impl CrossResonancePropagator {
    pub fn new(p: &DeviceParams, pulses: &PulseParams, amplitude: f64) -> Result<Self> {
        if !(amplitude >= 0.0 && amplitude.is_finite()) {
            return Err(Error::InvalidInput(format!("drive amplitude must be non-negative, got {amplitude}")));
        }
        let p = p.clone().validated()?;
        let dressed = RotatingFrame::dressed(&p)?;
        let drive = DriveSpec::new(Qubit::Q1, dressed.freqs[1], 0.0)?;
        let ham = frame_hamiltonian(&p, DriveModel::Effective, dressed, &[drive])?;
        let comoving = ham
            .comoving_frame(|_| true, 1e-3)
            .ok_or_else(|| Error::InvalidInput("drive terms have no common frame".into()))?;
        let ham = ham.reframe(comoving);
        let envelope = Envelope::flat_top(
            amplitude,
            pulses.cr_ramp_sigma,
            0.0,
            pulses.cr_drag_scale,
            p.anharmonicity[0],
        )?;
        let ramp = 2.0 * pulses.cr_ramp_sigma;
        let h_at = |t: f64| ham.at(0.0, &[envelope.complex(t)]);
        let opts = Adaptive {
            rtol: 1e-10,
            atol: 1e-12,
            max_steps: 1_000_000,
            max_step: ramp,
        };
        let h0 = 0.05 / h_at(ramp).norm().max(1.0 / ramp);
        let integrate = |a: f64, b: f64| -> Result<CMatrix> {
            let f = |t: f64, y: &CMatrix| ode::schrodinger_rhs(&h_at(t), y);
            ode::dormand_prince(f, a, b, CMatrix::identity(4, 4), h0, &opts).map(|(y, _)| y)
        };
        let ramp_up = integrate(0.0, ramp)?;
        let ramp_down = integrate(ramp, 2.0 * ramp)?;
        let (flat_values, flat_vectors) = eig_hermitian_raw(&ham.at(0.0, &[C64::new(amplitude, 0.0)]));
        Ok(Self {
            amplitude,
            ramp,
            dressed,
            comoving,
            ramp_up,
            ramp_down,
            flat_values,
            flat_vectors,
        })
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    /// Length of one ramp, s.
    pub fn ramp_length(&self) -> f64 {
        self.ramp
    }

    pub(crate) fn ramp_up(&self) -> &CMatrix {
        &self.ramp_up
    }

    /// `exp(−i·H·τ)` of the flat section in the co-moving frame applied to `x`.
    pub(crate) fn flat_apply(&self, x: &CMatrix, tau: f64) -> CMatrix {
        let coeffs = self.flat_vectors.adjoint() * x;
        let phased = CMatrix::from_fn(coeffs.nrows(), coeffs.ncols(), |k, c| {
            coeffs[(k, c)] * C64::from_polar(1.0, -self.flat_values[k] * tau)
        });
        &self.ramp_down * (&self.flat_vectors * phased)
    }

    /// Propagator of the pulse with flat-top length `flat`, in the frame
    /// rotating at the dressed qubit frequencies.
    pub fn unitary(&self, flat: f64) -> Result<ComplexOperator> {
        if !(flat >= 0.0 && flat.is_finite()) {
            return Err(Error::InvalidInput(format!("flat length must be non-negative, got {flat:e}")));
        }
        let u = self.flat_apply(&self.ramp_up, flat);
        let w = self.dressed.phases_to(&self.comoving, 2.0 * self.ramp + flat);
        let back = CMatrix::from_fn(4, 4, |i, j| u[(i, j)] * w[i].conj());
        ComplexOperator::new(back)
    }
}
