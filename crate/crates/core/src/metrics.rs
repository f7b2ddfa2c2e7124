// Copyright 2026 The crsim Authors
// SPDX-License-Identifier: Apache-2.0

//! Entanglement and fidelity measures, and the target gates they are
//! compared against.
//!
//! ```
//! use crsim::metrics::{concurrence, ideal_zx};
//! use crsim::qlinalg::{StateVector, CVector, C64};
//!
//! let h = std::f64::consts::FRAC_1_SQRT_2;
//! let zero = C64::new(0.0, 0.0);
//! let psi = StateVector::new(CVector::from_vec(vec![C64::new(h, 0.0), zero, C64::new(h, 0.0), zero])).unwrap();
//! let out = ideal_zx(90.0).unitary.apply(&psi).unwrap();
//! assert!((concurrence(&out.to_density()) - 1.0).abs() < 1e-9);
//! ```

use crate::qlinalg::{
    eig_hermitian_raw, pauli_basis, pauli_string, rotation, tensor, CMatrix, ComplexOperator, DensityMatrix,
    StateVector, C64,
};
use crate::tomo::ChiMatrix;
use crate::{Error, Result};

fn clip_unit(value: f64, what: &str) -> f64 {
    if value < -1e-6 || value > 1.0 + 1e-6 {
        log::warn!("{what} {value:.3e} outside [0, 1]; clipping");
    }
    value.clamp(0.0, 1.0)
}

/// Wootters concurrence of a two-qubit state.
pub fn concurrence(rho: &DensityMatrix) -> f64 {
    if rho.dim() != 4 {
        log::warn!("concurrence of a {}-dimensional state is undefined", rho.dim());
        return 0.0;
    }
    let yy = pauli_string("YY").expect("valid label").into_matrix();
    let m = rho.matrix();
    let flipped = &yy * m.conjugate() * &yy;
    // Square roots amplify rounding in near-zero eigenvalues, so those are
    // treated as exact zeros.
    let floor = |v: f64| if v > 1e-14 { v.sqrt() } else { 0.0 };
    let (vals, vecs) = eig_hermitian_raw(m);
    let root = CMatrix::from_fn(4, 4, |i, j| vecs[(i, j)] * floor(vals[j])) * vecs.adjoint();
    let r = &root * flipped * &root;
    let (mut lam, _) = eig_hermitian_raw(&((&r + r.adjoint()) * C64::new(0.5, 0.0)));
    lam.iter_mut().for_each(|l| *l = floor(*l));
    lam.sort_by(|a, b| b.total_cmp(a));
    clip_unit((lam[0] - lam[1] - lam[2] - lam[3]).max(0.0), "concurrence")
}

/// `⟨ψ|ρ|ψ⟩`.
pub fn state_fidelity(rho: &DensityMatrix, target: &StateVector) -> Result<f64> {
    if rho.dim() != target.dim() {
        return Err(Error::DimensionMismatch {
            expected: rho.dim(),
            got: target.dim(),
        });
    }
    let v = target.amplitudes();
    let f = (v.adjoint() * rho.matrix() * v)[(0, 0)].re;
    Ok(clip_unit(f, "state fidelity"))
}

/// An ideal two-qubit gate.
#[derive(Debug, Clone, PartialEq)]
pub struct GateTarget {
    pub unitary: ComplexOperator,
    pub label: String,
}

impl GateTarget {
    pub fn new(unitary: ComplexOperator, label: impl Into<String>) -> Result<Self> {
        if unitary.dim() != 4 {
            return Err(Error::DimensionMismatch {
                expected: 4,
                got: unitary.dim(),
            });
        }
        let err = unitary.unitarity_error();
        if err > 1e-10 {
            return Err(Error::InvalidInput(format!("target is not unitary (error {err:.2e})")));
        }
        Ok(Self {
            unitary,
            label: label.into(),
        })
    }

    /// Pauli coefficients `u_m = Tr(P_m·U)/4`.
    pub fn pauli_coefficients(&self) -> Vec<C64> {
        pauli_basis()
            .iter()
            .map(|p| (p.matrix() * self.unitary.matrix()).trace() / 4.0)
            .collect()
    }

    /// Rank-one process matrix `u·u†`.
    pub fn chi(&self) -> ChiMatrix {
        let u = self.pauli_coefficients();
        ChiMatrix::from_raw(CMatrix::from_fn(16, 16, |m, n| u[m] * u[n].conj()))
    }
}

/// `Tr(χ_ideal·χ)`.
pub fn process_fidelity(chi: &ChiMatrix, target: &GateTarget) -> f64 {
    let u = target.pauli_coefficients();
    let c = chi.matrix();
    let mut f = C64::new(0.0, 0.0);
    for m in 0..16 {
        for n in 0..16 {
            f += u[m].conj() * c[(m, n)] * u[n];
        }
    }
    clip_unit(f.re, "process fidelity")
}

/// Average gate fidelity `(d·F_p + 1)/(d + 1)`.
pub fn gate_fidelity_from_process(process_fidelity: f64, dim: usize) -> Result<f64> {
    if !(-1e-12..=1.0 + 1e-12).contains(&process_fidelity) || dim == 0 {
        return Err(Error::InvalidInput(format!(
            "process fidelity {process_fidelity} must lie in [0, 1] and dimension be positive"
        )));
    }
    let d = dim as f64;
    Ok((d * process_fidelity + 1.0) / (d + 1.0))
}

/// `exp(−iθπ/360·ZX)`.
pub fn ideal_zx(theta_deg: f64) -> GateTarget {
    let zx = pauli_string("ZX").expect("valid label");
    let u = crate::qlinalg::matrix_exp(&zx, C64::new(0.0, -theta_deg.to_radians() / 2.0));
    GateTarget {
        unitary: u,
        label: format!("ZX{theta_deg}"),
    }
}

/// CNOT with qubit 1 as control.
pub fn cnot() -> GateTarget {
    let o = C64::new(1.0, 0.0);
    let z = C64::new(0.0, 0.0);
    #[rustfmt::skip]
    let m = [
        o, z, z, z,
        z, o, z, z,
        z, z, z, o,
        z, z, o, z,
    ];
    GateTarget {
        unitary: ComplexOperator::from_rows(4, &m).expect("4x4"),
        label: "CNOT".into(),
    }
}

/// Local rotations turning a 90° ZX rotation into a CNOT.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalEquivalents {
    /// Applied before the entangling rotation.
    pub pre: ComplexOperator,
    /// Applied after it.
    pub post: ComplexOperator,
}

/// `post·ZX₉₀·pre = CNOT` up to a global phase, with `pre = I` and
/// `post = Z₋₉₀ ⊗ X₋₉₀`.
pub fn cnot_local_equivalents() -> Result<LocalEquivalents> {
    let pre = ComplexOperator::identity(4);
    let post = tensor(&rotation('Z', -90.0)?, &rotation('X', -90.0)?);
    let composed = post.matrix() * ideal_zx(90.0).unitary.matrix() * pre.matrix();
    let overlap = (cnot().unitary.matrix().adjoint() * composed).trace().norm() / 4.0;
    if (overlap - 1.0).abs() > 1e-10 {
        return Err(Error::Convergence {
            what: "cnot local equivalence",
            iterations: 0,
            detail: format!("overlap {overlap}"),
        });
    }
    Ok(LocalEquivalents { pre, post })
}

/// Makhlin local invariants `(G1, G2)`; two gates are equal up to
/// single-qubit rotations exactly when their invariants agree.
pub fn makhlin_invariants(u: &ComplexOperator) -> Result<(C64, f64)> {
    if u.dim() != 4 {
        return Err(Error::DimensionMismatch {
            expected: 4,
            got: u.dim(),
        });
    }
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let (o, z, i) = (C64::new(h, 0.0), C64::new(0.0, 0.0), C64::new(0.0, h));
    #[rustfmt::skip]
    let magic = CMatrix::from_row_slice(4, 4, &[
        o, i, z, z,
        z, z, i, o,
        z, z, i, -o,
        o, -i, z, z,
    ]);
    let ub = magic.adjoint() * u.matrix() * &magic;
    let m = ub.transpose() * &ub;
    let det = u.matrix().clone().determinant();
    let tr = m.trace();
    let tr2 = (&m * &m).trace();
    let g1 = tr * tr / (det * 16.0);
    let g2 = ((tr * tr - tr2) / (det * 4.0)).re;
    Ok((g1, g2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qlinalg::{CVector, StateVector};
    use approx::assert_abs_diff_eq;

    fn werner(p: f64) -> DensityMatrix {
        let bell = StateVector::bell().to_density().into_matrix();
        let m = bell * C64::new(p, 0.0) + CMatrix::identity(4, 4) * C64::new((1.0 - p) / 4.0, 0.0);
        DensityMatrix::new(m).unwrap()
    }

    #[test]
    fn concurrence_reference_states() {
        assert_abs_diff_eq!(concurrence(&StateVector::bell().to_density()), 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(concurrence(&StateVector::from_bits("00").unwrap().to_density()), 0.0, epsilon = 1e-10);
        for p in [0.0f64, 1.0 / 3.0, 0.5, 0.8, 1.0] {
            let expected = ((3.0 * p - 1.0) / 2.0).max(0.0);
            assert_abs_diff_eq!(concurrence(&werner(p)), expected, epsilon = 1e-7);
        }
    }

    #[test]
    fn fidelity_of_mixed_state() {
        let mixed = DensityMatrix::maximally_mixed(4);
        let psi = StateVector::from_bits("01").unwrap();
        assert_abs_diff_eq!(state_fidelity(&mixed, &psi).unwrap(), 0.25, epsilon = 1e-12);
        assert_abs_diff_eq!(state_fidelity(&psi.to_density(), &psi).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn process_fidelity_of_target_and_depolarising() {
        let t = cnot();
        assert_abs_diff_eq!(process_fidelity(&t.chi(), &t), 1.0, epsilon = 1e-12);
        let depol = ChiMatrix::from_raw(CMatrix::identity(16, 16) * C64::new(1.0 / 16.0, 0.0));
        assert_abs_diff_eq!(process_fidelity(&depol, &t), 1.0 / 16.0, epsilon = 1e-12);
    }

    #[test]
    fn gate_fidelity_values() {
        assert_abs_diff_eq!(gate_fidelity_from_process(0.77, 4).unwrap(), 0.816, epsilon = 1e-12);
        assert_abs_diff_eq!(gate_fidelity_from_process(1.0, 4).unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(gate_fidelity_from_process(1.0 / 16.0, 4).unwrap(), 0.25, epsilon = 1e-12);
        assert!(gate_fidelity_from_process(1.2, 4).is_err());
    }

    #[test]
    fn zx_rotation_endpoints() {
        assert!((ideal_zx(0.0).unitary.matrix() - CMatrix::identity(4, 4)).camax() < 1e-14);
        assert!((ideal_zx(360.0).unitary.matrix() + CMatrix::identity(4, 4)).camax() < 1e-14);
    }

    #[test]
    fn zx90_entangles_superposed_control() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let z = C64::new(0.0, 0.0);
        let psi = StateVector::new(CVector::from_vec(vec![C64::new(h, 0.0), z, C64::new(h, 0.0), z])).unwrap();
        let out = ideal_zx(90.0).unitary.apply(&psi).unwrap();
        assert_abs_diff_eq!(concurrence(&out.to_density()), 1.0, epsilon = 1e-10);
    }

    #[test]
    fn locals_turn_zx90_into_cnot() {
        let l = cnot_local_equivalents().unwrap();
        let u = &(&l.post * &ideal_zx(90.0).unitary) * &l.pre;
        let overlap = (cnot().unitary.adjoint().matrix() * u.matrix()).trace().norm() / 4.0;
        assert_abs_diff_eq!(overlap, 1.0, epsilon = 1e-12);
        let out = u.apply(&StateVector::from_bits("10").unwrap()).unwrap();
        assert_abs_diff_eq!(out.amplitudes()[3].norm(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn zx90_and_cnot_share_local_invariants() {
        let (g1a, g2a) = makhlin_invariants(&ideal_zx(90.0).unitary).unwrap();
        let (g1b, g2b) = makhlin_invariants(&cnot().unitary).unwrap();
        assert_abs_diff_eq!((g1a - g1b).norm(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(g2a, g2b, epsilon = 1e-12);
        assert_abs_diff_eq!(g2b, 1.0, epsilon = 1e-12);
        let (g1, _) = makhlin_invariants(&ComplexOperator::identity(4)).unwrap();
        assert_abs_diff_eq!(g1.re, 1.0, epsilon = 1e-12);
    }
}
