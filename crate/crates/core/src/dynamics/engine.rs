// Copyright 2026 The crsim Authors
// SPDX-License-Identifier: Apache-2.0

//! Segment-wise propagation of kets, unitaries, density matrices and
//! superoperators through a pulse schedule.
//!
//! The schedule is cut at every envelope breakpoint. On each segment the
//! engine looks for a frame in which all active terms stop rotating; if one
//! exists the segment is integrated there (exactly when the envelopes are also
//! constant), otherwise in the base frame.

use nalgebra::DMatrix;

use super::{Integrator, NoiseModel, SolverOptions};
use crate::device::{conjugate_diag, DeviceParams, FrameHamiltonian, RotatingFrame};
use crate::ode::{self, Adaptive};
use crate::pulses::{PulseSchedule, ScheduleEntry};
use crate::qlinalg::{kron, unitary_exp_raw, CMatrix, C64, ONE, ZERO};
use crate::{Error, Result};

/// What the propagated matrix represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Kind {
    /// 4×1 state vector.
    Ket,
    /// 4×4 propagator, transformed like a ket column by column.
    Unitary,
    /// 4×4 density matrix.
    Density,
    /// 16×16 superoperator on column-stacked density matrices.
    Super,
}

/// Frequencies closer than this (Hz) count as equal when looking for a
/// co-moving frame.
const FRAME_TOL: f64 = 1e-3;

pub(crate) struct Engine {
    ham: FrameHamiltonian,
    entries: Vec<ScheduleEntry>,
    breakpoints: Vec<f64>,
    collapse: Vec<CMatrix>,
    dissipator: Option<CMatrix>,
    opts: SolverOptions,
}

impl Engine {
    pub(crate) fn new(
        p: &DeviceParams,
        frame: RotatingFrame,
        schedule: &PulseSchedule,
        noise: Option<&NoiseModel>,
        opts: &SolverOptions,
    ) -> Result<Self> {
        let ham = crate::device::frame_hamiltonian(p, opts.model, frame, &schedule.drives())?;
        let collapse = noise.map(|n| n.collapse_operators()).unwrap_or_default();
        let dissipator = (!collapse.is_empty()).then(|| dissipator(&collapse));
        Ok(Self {
            ham,
            entries: schedule.entries().to_vec(),
            breakpoints: schedule.breakpoints(),
            collapse,
            dissipator,
            opts: opts.clone(),
        })
    }

    pub(crate) fn hamiltonian(&self) -> &FrameHamiltonian {
        &self.ham
    }

    fn envelopes(&self, t: f64) -> Vec<C64> {
        self.entries.iter().map(|e| e.envelope_at(t)).collect()
    }

    fn rhs(&self, kind: Kind, h: &CMatrix, x: &CMatrix) -> CMatrix {
        match kind {
            Kind::Ket | Kind::Unitary => ode::schrodinger_rhs(h, x),
            Kind::Density => {
                let mut out = (h * x - x * h) * C64::new(0.0, -1.0);
                for l in &self.collapse {
                    let ld = l.adjoint();
                    let ll = &ld * l;
                    out += l * x * &ld - (&ll * x + x * &ll) * C64::new(0.5, 0.0);
                }
                out
            }
            Kind::Super => {
                let mut gen = liouvillian_unitary_part(h);
                if let Some(d) = &self.dissipator {
                    gen += d;
                }
                gen * x
            }
        }
    }

    /// Propagates `x` from `t0` to `t1` in the base frame.
    pub(crate) fn propagate(&self, kind: Kind, mut x: CMatrix, t0: f64, t1: f64) -> Result<CMatrix> {
        if matches!(kind, Kind::Ket | Kind::Unitary) && !self.collapse.is_empty() {
            return Err(Error::InvalidInput(
                "pure-state propagation cannot include dissipation".into(),
            ));
        }
        let mut cuts: Vec<f64> = self
            .breakpoints
            .iter()
            .copied()
            .filter(|&b| b > t0 && b < t1)
            .collect();
        cuts.insert(0, t0);
        cuts.push(t1);
        for w in cuts.windows(2) {
            if w[1] - w[0] > 0.0 {
                x = self.segment(kind, x, w[0], w[1])?;
            }
        }
        Ok(x)
    }

    /// Propagates and records the state at each of `times` (ascending, ≥ 0).
    pub(crate) fn run(&self, kind: Kind, x0: CMatrix, times: &[f64]) -> Result<Vec<CMatrix>> {
        let mut out = Vec::with_capacity(times.len());
        let mut t = 0.0;
        let mut x = x0;
        for &target in times {
            if target < t {
                return Err(Error::InvalidInput("sample times must be ascending and non-negative".into()));
            }
            x = self.propagate(kind, x, t, target)?;
            t = target;
            out.push(x.clone());
        }
        Ok(out)
    }

    fn covers(entry: &ScheduleEntry, a: f64, b: f64) -> bool {
        let tol = 1e-15;
        entry.start <= a + tol && entry.end() >= b - tol
    }

    fn segment(&self, kind: Kind, x: CMatrix, a: f64, b: f64) -> Result<CMatrix> {
        let active: Vec<bool> = self.entries.iter().map(|e| Self::covers(e, a, b)).collect();
        if self.opts.integrator == Integrator::Fixed {
            let mask = |t: f64| -> Vec<C64> {
                self.envelopes(t)
                    .into_iter()
                    .zip(&active)
                    .map(|(v, &on)| if on { v } else { ZERO })
                    .collect()
            };
            let f = |t: f64, y: &CMatrix| self.rhs(kind, &self.ham.at(t, &mask(t)), y);
            return Ok(ode::rk4(f, a, b, x, self.opts.dt));
        }
        let frame = self.ham.comoving_frame(
            |term| term.drive.is_none_or(|k| active[k]),
            FRAME_TOL,
        );
        match frame {
            Some(co) => {
                let h = self.ham.reframe(co);
                let into = self.ham.frame.phases_to(&co, a);
                let x = change_frame(kind, &x, &into);
                let constants: Option<Vec<C64>> = self
                    .entries
                    .iter()
                    .zip(&active)
                    .map(|(e, &on)| {
                        if on {
                            e.envelope.constant_on(a - e.start, b - e.start)
                        } else {
                            Some(ZERO)
                        }
                    })
                    .collect();
                let y = match constants {
                    Some(c) => self.exact(kind, &h.at(a, &c), x, b - a)?,
                    None => self.adaptive(kind, &h, &active, x, a, b)?,
                };
                let back = co.phases_to(&self.ham.frame, b);
                Ok(change_frame(kind, &y, &back))
            }
            None => self.adaptive(kind, &self.ham, &active, x, a, b),
        }
    }

    fn adaptive(
        &self,
        kind: Kind,
        h: &FrameHamiltonian,
        active: &[bool],
        x: CMatrix,
        a: f64,
        b: f64,
    ) -> Result<CMatrix> {
        let envs = |t: f64| -> Vec<C64> {
            self.entries
                .iter()
                .zip(active)
                .map(|(e, &on)| if on { e.envelope_at(t) } else { ZERO })
                .collect()
        };
        let opts = Adaptive {
            rtol: self.opts.rtol,
            atol: self.opts.atol,
            max_steps: self.opts.max_steps,
            max_step: b - a,
        };
        let scale = h.at(a, &envs(a)).norm().max(h.at((a + b) / 2.0, &envs((a + b) / 2.0)).norm());
        let h0 = (0.05 / scale.max(1.0 / (b - a))).min(b - a);
        let f = |t: f64, y: &CMatrix| self.rhs(kind, &h.at(t, &envs(t)), y);
        ode::dormand_prince(f, a, b, x, h0, &opts).map(|(y, _)| y)
    }

    fn exact(&self, kind: Kind, h: &CMatrix, x: CMatrix, dt: f64) -> Result<CMatrix> {
        match (&self.dissipator, kind) {
            (None, Kind::Ket | Kind::Unitary) => Ok(unitary_exp_raw(h, dt) * x),
            (None, Kind::Density) => {
                let u = unitary_exp_raw(h, dt);
                Ok(&u * x * u.adjoint())
            }
            (None, Kind::Super) => {
                let u = unitary_exp_raw(h, dt);
                Ok(kron(&u.conjugate(), &u) * x)
            }
            (Some(d), Kind::Density) => {
                let gen = (liouvillian_unitary_part(h) + d) * C64::new(dt, 0.0);
                let v = gen.exp() * vec_col(&x);
                Ok(unvec_col(&v))
            }
            (Some(d), Kind::Super) => {
                let gen = (liouvillian_unitary_part(h) + d) * C64::new(dt, 0.0);
                Ok(gen.exp() * x)
            }
            (Some(_), _) => Err(Error::InvalidInput(
                "pure-state propagation cannot include dissipation".into(),
            )),
        }
    }
}

/// `-i(I⊗H − Hᵀ⊗I)` for column-stacked vectorisation.
pub(crate) fn liouvillian_unitary_part(h: &CMatrix) -> CMatrix {
    let id = CMatrix::identity(4, 4);
    (kron(&id, h) - kron(&h.transpose(), &id)) * C64::new(0.0, -1.0)
}

/// `Σ L*⊗L − ½ I⊗L†L − ½ (L†L)ᵀ⊗I`.
pub(crate) fn dissipator(ops: &[CMatrix]) -> CMatrix {
    let id = CMatrix::identity(4, 4);
    let mut d = CMatrix::zeros(16, 16);
    for l in ops {
        let ll = l.adjoint() * l;
        d += kron(&l.conjugate(), l)
            - kron(&id, &ll) * C64::new(0.5, 0.0)
            - kron(&ll.transpose(), &id) * C64::new(0.5, 0.0);
    }
    d
}

/// Column-stacked `vec(ρ)` as a 16×1 matrix.
pub(crate) fn vec_col(m: &CMatrix) -> CMatrix {
    DMatrix::from_iterator(m.len(), 1, m.iter().copied())
}

pub(crate) fn unvec_col(v: &CMatrix) -> CMatrix {
    let n = (v.len() as f64).sqrt().round() as usize;
    DMatrix::from_iterator(n, n, v.iter().copied())
}

/// Applies the diagonal frame map `w` to `x` according to its kind.
pub(crate) fn change_frame(kind: Kind, x: &CMatrix, w: &[C64; 4]) -> CMatrix {
    if w.iter().all(|&z| z == ONE) {
        return x.clone();
    }
    match kind {
        Kind::Ket | Kind::Unitary => DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| x[(i, j)] * w[i]),
        Kind::Density => conjugate_diag(x, w),
        Kind::Super => DMatrix::from_fn(16, x.ncols(), |r, c| {
            let (i, j) = (r % 4, r / 4);
            x[(r, c)] * w[i] * w[j].conj()
        }),
    }
}
