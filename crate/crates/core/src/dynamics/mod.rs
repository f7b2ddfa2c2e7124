// Copyright 2026 The crsim Authors
// SPDX-License-Identifier: Apache-2.0

//! Time evolution under a pulse schedule.
//!
//! Closed systems evolve kets or propagators under the Schrödinger equation;
//! open systems evolve density matrices or superoperators under the Lindblad
//! equation with per-qubit relaxation and pure dephasing. States are reported
//! in the simulation frame, by default the frame rotating at the dressed
//! qubit frequencies.
//!
//! ```
//! use crsim::device::DeviceParams;
//! use crsim::dynamics::{noise_from_coherences, Simulator, SolverOptions};
//! use crsim::pulses::PulseSchedule;
//! use crsim::qlinalg::StateVector;
//!
//! let p = DeviceParams::default();
//! let sim = Simulator::new(&p, SolverOptions::default()).unwrap();
//! let noise = noise_from_coherences(&p).unwrap();
//! let rho0 = StateVector::from_bits("10").unwrap().to_density();
//! let idle = PulseSchedule::idle(1.6e-6).unwrap();
//! let out = sim.evolve_lindblad(&idle, &rho0, &noise, &[1.6e-6]).unwrap();
//! // Qubit 1 relaxes towards |0⟩: ⟨ZI⟩ = 1 − 2·e^{-t/T1}.
//! let zi = out.expectations["ZI"][0];
//! assert!((zi - (1.0 - 2.0 * (-1.0f64).exp())).abs() < 1e-6);
//! ```

mod cr;
mod engine;
mod fit;
mod rabi;

use std::collections::BTreeMap;

use crate::device::{lowering, on, z_on, DeviceParams, DriveModel, Qubit, RotatingFrame};
use crate::pulses::PulseSchedule;
use crate::qlinalg::{
    expectation, hermitize, pauli_string, CMatrix, ComplexOperator, DensityMatrix, StateVector, C64,
};
use crate::{Error, Result};

pub use cr::CrossResonancePropagator;
pub use fit::{fit_rabi_frequency, RabiFit};
pub use rabi::{
    default_rabi_grid, extract_jeff, measure_conditional_rate, rabi_trace, ConditionalRate, ControlState,
    RabiTrace,
};

pub(crate) use engine::{unvec_col, vec_col};
use engine::{Engine, Kind};

/// Per-qubit Markovian noise rates, 1/s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    /// Energy relaxation `Γ₁ = 1/T1`.
    pub relaxation: [f64; 2],
    /// Pure dephasing `Γφ = 1/T2 − 1/(2T1)`.
    pub dephasing: [f64; 2],
}

impl NoiseModel {
    pub fn none() -> Self {
        Self {
            relaxation: [0.0; 2],
            dephasing: [0.0; 2],
        }
    }

    pub fn is_zero(&self) -> bool {
        self.relaxation.iter().chain(&self.dephasing).all(|&r| r == 0.0)
    }

    /// `√Γ₁·|0⟩⟨1|` and `√(Γφ/2)·Z` on each qubit, so that a single-qubit
    /// coherence decays at exactly `Γ₁/2 + Γφ = 1/T2`.
    pub fn collapse_operators(&self) -> Vec<CMatrix> {
        let mut ops = Vec::new();
        for q in Qubit::BOTH {
            let (g1, gp) = (self.relaxation[q.index()], self.dephasing[q.index()]);
            if g1 > 0.0 {
                ops.push(on(q, &lowering()) * C64::new(g1.sqrt(), 0.0));
            }
            if gp > 0.0 {
                ops.push(z_on(q) * C64::new((gp / 2.0).sqrt(), 0.0));
            }
        }
        ops
    }
}

/// Rates from the device coherence times. Rejects `T2 > 2·T1`.
pub fn noise_from_coherences(p: &DeviceParams) -> Result<NoiseModel> {
    let mut relaxation = [0.0; 2];
    let mut dephasing = [0.0; 2];
    for q in Qubit::BOTH {
        let (t1, t2) = (p.t1[q.index()], p.t2[q.index()]);
        if !(t1 > 0.0 && t2 > 0.0) {
            return Err(Error::Unphysical(format!("coherence times of {q} must be positive")));
        }
        if t2 > 2.0 * t1 * (1.0 + 1e-12) {
            return Err(Error::Unphysical(format!(
                "T2 = {t2:.3e} s exceeds 2·T1 = {:.3e} s on {q}",
                2.0 * t1
            )));
        }
        relaxation[q.index()] = 1.0 / t1;
        dephasing[q.index()] = (1.0 / t2 - 0.5 / t1).max(0.0);
    }
    Ok(NoiseModel {
        relaxation,
        dephasing,
    })
}

/// Integration method.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Integrator {
    /// Co-moving frames with exact exponentials where possible, adaptive
    /// Dormand–Prince 5(4) elsewhere.
    Adaptive,
    /// Fourth-order Runge–Kutta with a fixed step in the simulation frame.
    Fixed,
}

impl std::str::FromStr for Integrator {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adaptive" => Ok(Integrator::Adaptive),
            "fixed" => Ok(Integrator::Fixed),
            other => Err(Error::InvalidInput(format!(
                "unknown integrator `{other}` (expected adaptive or fixed)"
            ))),
        }
    }
}

/// Solver configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    pub integrator: Integrator,
    /// Step of the fixed integrator, seconds.
    pub dt: f64,
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
    pub model: DriveModel,
    /// Simulation frame; `None` selects the dressed frame.
    pub frame: Option<RotatingFrame>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            integrator: Integrator::Adaptive,
            dt: 0.05e-9,
            rtol: 1e-10,
            atol: 1e-12,
            max_steps: 5_000_000,
            model: DriveModel::Effective,
            frame: None,
        }
    }
}

/// Linear map on column-stacked 4×4 density matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct Superoperator(CMatrix);

impl Superoperator {
    pub fn new(m: CMatrix) -> Result<Self> {
        if m.nrows() != 16 || m.ncols() != 16 {
            return Err(Error::DimensionMismatch {
                expected: 16,
                got: m.nrows(),
            });
        }
        Ok(Self(m))
    }

    pub fn identity() -> Self {
        Self(CMatrix::identity(16, 16))
    }

    /// Superoperator of `ρ ↦ UρU†`.
    pub fn from_unitary(u: &ComplexOperator) -> Result<Self> {
        if u.dim() != 4 {
            return Err(Error::DimensionMismatch {
                expected: 4,
                got: u.dim(),
            });
        }
        Ok(Self(crate::qlinalg::kron(&u.matrix().conjugate(), u.matrix())))
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &Superoperator) -> Superoperator {
        Superoperator(&self.0 * &other.0)
    }

    /// Applies the map. The output is symmetrised but not projected.
    pub fn apply(&self, rho: &DensityMatrix) -> DensityMatrix {
        let v = &self.0 * vec_col(rho.matrix());
        DensityMatrix::from_raw(hermitize(unvec_col(&v)))
    }
}

/// Trajectory sampled at the requested times.
#[derive(Debug, Clone)]
pub struct EvolutionResult {
    pub times: Vec<f64>,
    pub states: Vec<DensityMatrix>,
    /// `ZI`, `IZ` and `ZZ` at each time.
    pub expectations: BTreeMap<String, Vec<f64>>,
}

impl EvolutionResult {
    fn from_densities(times: &[f64], states: Vec<DensityMatrix>) -> Result<Self> {
        let mut expectations = BTreeMap::new();
        for label in ["ZI", "IZ", "ZZ"] {
            let op = pauli_string(label)?;
            let series = states
                .iter()
                .map(|r| expectation(r, &op))
                .collect::<Result<Vec<_>>>()?;
            expectations.insert(label.to_string(), series);
        }
        Ok(Self {
            times: times.to_vec(),
            states,
            expectations,
        })
    }

    pub fn final_state(&self) -> Option<&DensityMatrix> {
        self.states.last()
    }
}

/// Evolves states and builds propagators for one device.
#[derive(Debug, Clone)]
pub struct Simulator {
    device: DeviceParams,
    opts: SolverOptions,
    frame: RotatingFrame,
}

impl Simulator {
    pub fn new(p: &DeviceParams, opts: SolverOptions) -> Result<Self> {
        let device = p.clone().validated()?;
        let frame = match opts.frame {
            Some(f) => f,
            None => RotatingFrame::dressed(&device)?,
        };
        if !(opts.dt > 0.0 && opts.rtol > 0.0 && opts.atol > 0.0) {
            return Err(Error::InvalidInput("solver dt, rtol and atol must be positive".into()));
        }
        Ok(Self { device, opts, frame })
    }

    pub fn device(&self) -> &DeviceParams {
        &self.device
    }

    pub fn options(&self) -> &SolverOptions {
        &self.opts
    }

    /// The simulation frame.
    pub fn frame(&self) -> RotatingFrame {
        self.frame
    }

    fn engine(&self, schedule: &PulseSchedule, noise: Option<&NoiseModel>) -> Result<Engine> {
        let noise = noise.filter(|n| !n.is_zero());
        Engine::new(&self.device, self.frame, schedule, noise, &self.opts)
    }

    /// Schrödinger evolution of `psi0`, sampled at `times`.
    pub fn evolve_unitary(
        &self,
        schedule: &PulseSchedule,
        psi0: &StateVector,
        times: &[f64],
    ) -> Result<EvolutionResult> {
        check_dim(psi0.dim())?;
        let engine = self.engine(schedule, None)?;
        let x0 = CMatrix::from_column_slice(4, 1, psi0.amplitudes().as_slice());
        let states = engine
            .run(Kind::Ket, x0, times)?
            .into_iter()
            .map(|x| {
                let n = x.norm();
                if (n - 1.0).abs() > 1e-8 {
                    log::warn!("ket norm drifted to {n}");
                }
                DensityMatrix::from_raw(&x * x.adjoint())
            })
            .collect();
        EvolutionResult::from_densities(times, states)
    }

    /// Final ket after the whole schedule.
    pub fn final_ket(&self, schedule: &PulseSchedule, psi0: &StateVector) -> Result<StateVector> {
        check_dim(psi0.dim())?;
        let engine = self.engine(schedule, None)?;
        let x0 = CMatrix::from_column_slice(4, 1, psi0.amplitudes().as_slice());
        let x = engine.propagate(Kind::Ket, x0, 0.0, schedule.duration())?;
        StateVector::normalized(x.column(0).into_owned())
    }

    /// Lindblad evolution of `rho0`, sampled at `times`.
    pub fn evolve_lindblad(
        &self,
        schedule: &PulseSchedule,
        rho0: &DensityMatrix,
        noise: &NoiseModel,
        times: &[f64],
    ) -> Result<EvolutionResult> {
        check_dim(rho0.dim())?;
        let engine = self.engine(schedule, Some(noise))?;
        let states = engine
            .run(Kind::Density, rho0.matrix().clone(), times)?
            .into_iter()
            .map(|m| DensityMatrix::from_raw(hermitize(m)))
            .collect();
        EvolutionResult::from_densities(times, states)
    }

    /// Propagator of the whole schedule.
    pub fn unitary(&self, schedule: &PulseSchedule) -> Result<ComplexOperator> {
        let engine = self.engine(schedule, None)?;
        let u = engine.propagate(Kind::Unitary, CMatrix::identity(4, 4), 0.0, schedule.duration())?;
        ComplexOperator::new(u)
    }

    /// Superoperator of the whole schedule; `None` or a zero model gives the
    /// closed-system channel.
    pub fn superoperator(&self, schedule: &PulseSchedule, noise: Option<&NoiseModel>) -> Result<Superoperator> {
        let engine = self.engine(schedule, noise)?;
        let s = engine.propagate(Kind::Super, CMatrix::identity(16, 16), 0.0, schedule.duration())?;
        Superoperator::new(s)
    }

    /// Structured Hamiltonian of `schedule` in the simulation frame.
    pub fn hamiltonian(&self, schedule: &PulseSchedule) -> Result<crate::device::FrameHamiltonian> {
        Ok(self.engine(schedule, None)?.hamiltonian().clone())
    }
}

fn check_dim(d: usize) -> Result<()> {
    if d != 4 {
        return Err(Error::DimensionMismatch { expected: 4, got: d });
    }
    Ok(())
}

/// Closed-system evolution with default solver settings, sampled at the start
/// and end of the schedule.
pub fn evolve_unitary(schedule: &PulseSchedule, p: &DeviceParams, psi0: &StateVector) -> Result<EvolutionResult> {
    Simulator::new(p, SolverOptions::default())?.evolve_unitary(schedule, psi0, &[0.0, schedule.duration()])
}

/// Lindblad evolution with default solver settings, sampled at the start and
/// end of the schedule.
pub fn evolve_lindblad(
    schedule: &PulseSchedule,
    p: &DeviceParams,
    rho0: &DensityMatrix,
    noise: &NoiseModel,
) -> Result<EvolutionResult> {
    Simulator::new(p, SolverOptions::default())?.evolve_lindblad(schedule, rho0, noise, &[0.0, schedule.duration()])
}

#[cfg(test)]
mod tests;
