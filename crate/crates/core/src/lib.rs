// Copyright 2026 The crsim Authors
// SPDX-License-Identifier: Apache-2.0

//! Pulse-level simulation of the cross-resonance (CR) gate on two
//! fixed-frequency, dispersively coupled qubits.
//!
//! The crate is organised bottom-up:
//!
//! - [`qlinalg`]: dense complex operators, Pauli strings, eigensolvers and
//!   matrix exponentials for Hilbert spaces of dimension ≤ 16.
//! - [`device`]: device constants, the static and drive Hamiltonians, dressed
//!   frequencies and rotating frames.
//! - [`pulses`]: Gaussian-DRAG and flat-top envelopes, pulse schedules and
//!   single-qubit amplitude calibration.
//! - [`dynamics`]: Schrödinger and Lindblad propagation, Rabi traces and
//!   extraction of the effective interaction strength.
//! - [`tomo`]: joint readout, maximum-likelihood state tomography and
//!   process tomography in the Pauli basis.
//! - [`metrics`]: concurrence and fidelities.
//! - [`experiments`]: end-to-end calibration, entanglement and tomography runs.
//! - [`config`]: the strict TOML run configuration used by the `crsim` binary.
//!
//! Conventions used throughout: the basis is ordered `|q1 q2⟩` with qubit 1 as
//! the most significant factor, `Z|0⟩ = +|0⟩`, frequencies are stored in Hz
//! (cyclic) and times in seconds. Rotations follow `A_θ = exp(-iθπ/360·A)` with
//! θ in degrees.

pub mod config;
pub mod device;
pub mod dynamics;
mod error;
pub mod experiments;
pub mod metrics;
pub(crate) mod ode;
mod optim;
pub mod pulses;
pub mod qlinalg;
pub mod tomo;

pub use error::{Error, Result};

/// Numeric tolerances shared by every validity check in the crate.
#[derive(Debug, Clone, Copy)]
pub struct Tolerances {
    /// Hermiticity and trace checks on operators and density matrices.
    pub hermitian: f64,
    /// Smallest admissible eigenvalue of a density matrix.
    pub psd: f64,
    /// Eigen-decomposition residual bound.
    pub eig: f64,
    /// State-vector norm deviation.
    pub norm: f64,
}

/// The single global tolerance set.
pub const TOL: Tolerances = Tolerances {
    hermitian: 1e-10,
    psd: 1e-8,
    eig: 1e-8,
    norm: 1e-10,
};


/// Independent seed for item `index` of a sweep seeded with `base`, so that
/// results do not depend on evaluation order.
pub(crate) fn derive_seed(base: u64, index: u64) -> u64 {
    // splitmix64 finaliser
    let mut z = base ^ index.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Runs the guide's code snippets as doc tests.
#[cfg(doctest)]
mod guide {
    #[doc = include_str!("../../../README.md")]
    struct Readme;
    #[doc = include_str!("../../../book/src/conventions.md")]
    struct Conventions;
    #[doc = include_str!("../../../book/src/device.md")]
    struct Device;
    #[doc = include_str!("../../../book/src/pulses.md")]
    struct Pulses;
    #[doc = include_str!("../../../book/src/dynamics.md")]
    struct Dynamics;
    #[doc = include_str!("../../../book/src/interaction.md")]
    struct Interaction;
    #[doc = include_str!("../../../book/src/tomography.md")]
    struct Tomography;
    #[doc = include_str!("../../../book/src/metrics.md")]
    struct Metrics;
    #[doc = include_str!("../../../book/src/experiments.md")]
    struct Experiments;
}
