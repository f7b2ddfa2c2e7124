// Copyright 2026 The crsim Authors
// SPDX-License-Identifier: Apache-2.0

//! Dense complex linear algebra for Hilbert spaces of dimension ≤ 16.
//!
//! Every operator and state is a thin validated wrapper over a `nalgebra`
//! dynamic matrix. The wrappers enforce their physical invariants at
//! construction; the raw matrices stay reachable for numerical work.
//!
//! ```
//! use crsim::qlinalg::{pauli_string, tensor, pauli};
//!
//! let zx = pauli_string("ZX").unwrap();
//! let same = tensor(&pauli('Z').unwrap(), &pauli('X').unwrap());
//! assert_eq!(zx, same);
//! ```

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::{Error, Result, TOL};

/// Complex scalar.
pub type C64 = Complex64;
/// Dense complex matrix used for all operators.
pub type CMatrix = DMatrix<Complex64>;
/// Dense complex column vector.
pub type CVector = DVector<Complex64>;

pub(crate) const ZERO: C64 = C64::new(0.0, 0.0);
pub(crate) const ONE: C64 = C64::new(1.0, 0.0);
pub(crate) const I: C64 = C64::new(0.0, 1.0);

/// Largest elementwise deviation of `m` from its conjugate transpose.
pub(crate) fn hermiticity_error(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// Kronecker product of raw matrices, first factor most significant.
pub(crate) fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

/// A square complex matrix with finite entries.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexOperator(CMatrix);

impl ComplexOperator {
    /// Wraps a matrix, rejecting non-square or non-finite input.
    pub fn new(m: CMatrix) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch {
                expected: m.nrows(),
                got: m.ncols(),
            });
        }
        if m.nrows() == 0 {
            return Err(Error::InvalidInput("operator dimension must be positive".into()));
        }
        if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidInput("operator has non-finite entries".into()));
        }
        Ok(Self(m))
    }

    /// Builds an operator from row-major entries.
    pub fn from_rows(dim: usize, entries: &[C64]) -> Result<Self> {
        if entries.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                got: entries.len(),
            });
        }
        Self::new(CMatrix::from_row_slice(dim, dim, entries))
    }

    /// Real diagonal operator.
    pub fn diagonal(values: &[f64]) -> Result<Self> {
        let d = CVector::from_iterator(values.len(), values.iter().map(|&v| C64::new(v, 0.0)));
        Self::new(CMatrix::from_diagonal(&d))
    }

    pub fn identity(dim: usize) -> Self {
        Self(CMatrix::identity(dim, dim))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(CMatrix::zeros(dim, dim))
    }

    pub(crate) fn from_raw(m: CMatrix) -> Self {
        debug_assert_eq!(m.nrows(), m.ncols());
        Self(m)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> CMatrix {
        self.0
    }

    pub fn adjoint(&self) -> Self {
        Self(self.0.adjoint())
    }

    pub fn trace(&self) -> C64 {
        self.0.trace()
    }

    pub fn scale(&self, s: C64) -> Self {
        Self(self.0.map(|z| z * s))
    }

    /// Largest elementwise deviation from Hermiticity.
    pub fn hermiticity_error(&self) -> f64 {
        hermiticity_error(&self.0)
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermiticity_error() <= TOL.hermitian
    }

    /// Largest elementwise deviation of `U†U` from the identity.
    pub fn unitarity_error(&self) -> f64 {
        let n = self.dim();
        let p = self.0.adjoint() * &self.0;
        (p - CMatrix::identity(n, n)).camax()
    }

    /// Applies the operator to a state vector, renormalising the result.
    pub fn apply(&self, psi: &StateVector) -> Result<StateVector> {
        if psi.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: psi.dim(),
            });
        }
        StateVector::normalized(&self.0 * psi.amplitudes())
    }

    /// Hilbert–Schmidt inner product `Tr(self† other)`.
    pub fn inner(&self, other: &Self) -> C64 {
        self.0.adjoint().component_mul(&other.0.transpose()).sum()
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.0.norm()
    }
}

impl fmt::Display for ComplexOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.dim() {
            for j in 0..self.dim() {
                let z = self.0[(i, j)];
                write!(f, "{:+.4}{:+.4}i ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

impl Mul for &ComplexOperator {
    type Output = ComplexOperator;
    fn mul(self, rhs: Self) -> ComplexOperator {
        assert_eq!(self.dim(), rhs.dim(), "operator dimension mismatch");
        ComplexOperator(&self.0 * &rhs.0)
    }
}

impl Add for &ComplexOperator {
    type Output = ComplexOperator;
    fn add(self, rhs: Self) -> ComplexOperator {
        assert_eq!(self.dim(), rhs.dim(), "operator dimension mismatch");
        ComplexOperator(&self.0 + &rhs.0)
    }
}

impl Sub for &ComplexOperator {
    type Output = ComplexOperator;
    fn sub(self, rhs: Self) -> ComplexOperator {
        assert_eq!(self.dim(), rhs.dim(), "operator dimension mismatch");
        ComplexOperator(&self.0 - &rhs.0)
    }
}

impl Neg for &ComplexOperator {
    type Output = ComplexOperator;
    fn neg(self) -> ComplexOperator {
        ComplexOperator(-&self.0)
    }
}

/// A unit-norm state vector.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector(CVector);

impl StateVector {
    /// Wraps amplitudes that are already normalised within tolerance.
    pub fn new(amplitudes: CVector) -> Result<Self> {
        if amplitudes.is_empty() {
            return Err(Error::InvalidInput("state dimension must be positive".into()));
        }
        let n = amplitudes.norm();
        if !n.is_finite() || (n - 1.0).abs() > TOL.norm {
            return Err(Error::InvalidInput(format!("state norm {n} differs from 1")));
        }
        Ok(Self(amplitudes))
    }

    /// Normalises arbitrary nonzero amplitudes.
    pub fn normalized(amplitudes: CVector) -> Result<Self> {
        let n = amplitudes.norm();
        if !(n.is_finite() && n > 0.0) {
            return Err(Error::InvalidInput("cannot normalise a zero or non-finite vector".into()));
        }
        Ok(Self(amplitudes / C64::new(n, 0.0)))
    }

    /// Computational basis state `|index⟩`.
    pub fn basis(dim: usize, index: usize) -> Result<Self> {
        if index >= dim {
            return Err(Error::InvalidInput(format!("basis index {index} out of range for dim {dim}")));
        }
        let mut v = CVector::zeros(dim);
        v[index] = ONE;
        Ok(Self(v))
    }

    /// Two-qubit basis state from a bit label such as `"01"`.
    pub fn from_bits(label: &str) -> Result<Self> {
        let mut index = 0;
        for c in label.chars() {
            index = index * 2
                + match c {
                    '0' => 0,
                    '1' => 1,
                    _ => return Err(Error::InvalidInput(format!("invalid bit label `{label}`"))),
                };
        }
        Self::basis(1 << label.len(), index)
    }

    /// `(|00⟩ + |11⟩)/√2`.
    pub fn bell() -> Self {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        Self(CVector::from_vec(vec![
            C64::new(s, 0.0),
            ZERO,
            ZERO,
            C64::new(s, 0.0),
        ]))
    }

    pub(crate) fn from_raw(v: CVector) -> Self {
        Self(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn amplitudes(&self) -> &CVector {
        &self.0
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &Self) -> C64 {
        self.0.dotc(&other.0)
    }

    pub fn to_density(&self) -> DensityMatrix {
        DensityMatrix(&self.0 * self.0.adjoint())
    }
}

/// A Hermitian, unit-trace, positive semidefinite matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix(CMatrix);

impl DensityMatrix {
    /// Validates Hermiticity, unit trace and positivity at the global tolerances.
    pub fn new(m: CMatrix) -> Result<Self> {
        Self::with_tolerance(m, TOL.hermitian, TOL.psd)
    }

    /// Validates with caller-chosen tolerances, as needed for integrator output.
    pub fn with_tolerance(m: CMatrix, hermitian_tol: f64, psd_tol: f64) -> Result<Self> {
        let op = ComplexOperator::new(m)?;
        let herr = op.hermiticity_error();
        if herr > hermitian_tol {
            return Err(Error::NotHermitian(herr));
        }
        let tr = op.trace();
        if (tr.re - 1.0).abs() > hermitian_tol || tr.im.abs() > hermitian_tol {
            return Err(Error::InvalidInput(format!(
                "density matrix trace {:.3e}{:+.3e}i differs from 1",
                tr.re, tr.im
            )));
        }
        let m = hermitize(op.into_matrix());
        let lowest = eig_hermitian_raw(&m).0[0];
        if lowest < -psd_tol {
            return Err(Error::Unphysical(format!(
                "density matrix has eigenvalue {lowest:.3e}"
            )));
        }
        Ok(Self(m))
    }

    /// `I/dim`.
    pub fn maximally_mixed(dim: usize) -> Self {
        Self(CMatrix::identity(dim, dim) / C64::new(dim as f64, 0.0))
    }

    /// Nearest physical state: Hermitian part, eigenvalues clipped at zero,
    /// trace renormalised.
    pub fn project(m: &CMatrix) -> Result<Self> {
        let h = hermitize(m.clone());
        let (vals, vecs) = eig_hermitian_raw(&h);
        let clipped: Vec<f64> = vals.iter().map(|&v| v.max(0.0)).collect();
        let total: f64 = clipped.iter().sum();
        if !(total > 0.0) {
            return Err(Error::Unphysical("projection has zero trace".into()));
        }
        let n = h.nrows();
        let mut out = CMatrix::zeros(n, n);
        for (k, &v) in clipped.iter().enumerate() {
            if v > 0.0 {
                let col = vecs.column(k);
                out += (&col * col.adjoint()) * C64::new(v / total, 0.0);
            }
        }
        Ok(Self(hermitize(out)))
    }

    pub(crate) fn from_raw(m: CMatrix) -> Self {
        Self(m)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> CMatrix {
        self.0
    }

    /// Ascending eigenvalues.
    pub fn eigenvalues(&self) -> Vec<f64> {
        eig_hermitian_raw(&self.0).0
    }

    pub fn purity(&self) -> f64 {
        (&self.0 * &self.0).trace().re
    }

    /// `U ρ U†`.
    pub fn evolve(&self, u: &ComplexOperator) -> Result<Self> {
        if u.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: u.dim(),
            });
        }
        Ok(Self(hermitize(u.matrix() * &self.0 * u.matrix().adjoint())))
    }

    /// Trace distance `½‖ρ−σ‖₁`.
    pub fn trace_distance(&self, other: &Self) -> f64 {
        let diff = hermitize(&self.0 - &other.0);
        0.5 * eig_hermitian_raw(&diff).0.iter().map(|v| v.abs()).sum::<f64>()
    }
}

/// Symmetrises `m` into `(m + m†)/2`.
pub(crate) fn hermitize(m: CMatrix) -> CMatrix {
    let a = m.adjoint();
    (m + a) * C64::new(0.5, 0.0)
}

/// Kronecker product, first factor is qubit 1.
pub fn tensor(a: &ComplexOperator, b: &ComplexOperator) -> ComplexOperator {
    ComplexOperator(kron(&a.0, &b.0))
}

/// Single-qubit Pauli operator for `I`, `X`, `Y` or `Z`.
pub fn pauli(label: char) -> Result<ComplexOperator> {
    let m = match label {
        'I' => [ONE, ZERO, ZERO, ONE],
        'X' => [ZERO, ONE, ONE, ZERO],
        'Y' => [ZERO, -I, I, ZERO],
        'Z' => [ONE, ZERO, ZERO, -ONE],
        _ => return Err(Error::InvalidInput(format!("invalid Pauli label `{label}`"))),
    };
    Ok(ComplexOperator(CMatrix::from_row_slice(2, 2, &m)))
}

/// Two-qubit Pauli string such as `"ZX"`, qubit 1 first.
pub fn pauli_string(label: &str) -> Result<ComplexOperator> {
    let chars: Vec<char> = label.chars().collect();
    if chars.len() != 2 {
        return Err(Error::InvalidInput(format!(
            "Pauli string `{label}` must have exactly two characters"
        )));
    }
    Ok(tensor(&pauli(chars[0])?, &pauli(chars[1])?))
}

/// Labels of the ordered two-qubit Pauli basis `II, IX, IY, IZ, XI, …, ZZ`.
pub fn pauli_labels() -> Vec<String> {
    const P: [char; 4] = ['I', 'X', 'Y', 'Z'];
    P.iter()
        .flat_map(|a| P.iter().map(move |b| format!("{a}{b}")))
        .collect()
}

/// The 16 two-qubit Pauli matrices in [`pauli_labels`] order.
pub fn pauli_basis() -> Vec<ComplexOperator> {
    pauli_labels()
        .iter()
        .map(|l| pauli_string(l).expect("valid label"))
        .collect()
}

/// `Tr(ρ·op)` for Hermitian `op`.
pub fn expectation(rho: &DensityMatrix, op: &ComplexOperator) -> Result<f64> {
    if rho.dim() != op.dim() {
        return Err(Error::DimensionMismatch {
            expected: rho.dim(),
            got: op.dim(),
        });
    }
    let herr = op.hermiticity_error();
    if herr > TOL.hermitian {
        return Err(Error::NotHermitian(herr));
    }
    let v = (rho.matrix() * op.matrix()).trace();
    if v.im.abs() > 1e-9 {
        log::debug!("discarding imaginary expectation residue {:.3e}", v.im);
    }
    Ok(v.re)
}

/// Eigenvalues in ascending order with matching orthonormal eigenvectors.
#[derive(Clone, Debug)]
pub struct Eigen {
    pub values: Vec<f64>,
    pub vectors: ComplexOperator,
}

/// Hermitian eigendecomposition with ascending eigenvalues.
pub fn eig_hermitian(op: &ComplexOperator) -> Result<Eigen> {
    let herr = op.hermiticity_error();
    if herr > TOL.hermitian {
        return Err(Error::NotHermitian(herr));
    }
    let (values, vectors) = eig_hermitian_raw(&hermitize(op.0.clone()));
    Ok(Eigen {
        values,
        vectors: ComplexOperator(vectors),
    })
}

/// Unchecked Hermitian eigendecomposition on a raw matrix.
pub(crate) fn eig_hermitian_raw(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    let n = m.nrows();
    let eig = m.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut vectors = CMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// `exp(-i·H·t)` for Hermitian `H` via its eigendecomposition.
pub(crate) fn unitary_exp_raw(h: &CMatrix, t: f64) -> CMatrix {
    let (vals, vecs) = eig_hermitian_raw(h);
    let phases = CVector::from_iterator(vals.len(), vals.iter().map(|&l| C64::from_polar(1.0, -l * t)));
    let scaled = CMatrix::from_fn(vecs.nrows(), vecs.ncols(), |i, j| vecs[(i, j)] * phases[j]);
    scaled * vecs.adjoint()
}

/// `exp(scale·op)`.
///
/// Hermitian operators use their eigendecomposition so that purely imaginary
/// scales give unitaries to machine precision; anything else falls back to
/// Padé scaling and squaring.
pub fn matrix_exp(op: &ComplexOperator, scale: C64) -> ComplexOperator {
    if scale == ZERO {
        return ComplexOperator::identity(op.dim());
    }
    if op.hermiticity_error() <= TOL.hermitian {
        let (vals, vecs) = eig_hermitian_raw(&hermitize(op.0.clone()));
        let n = vals.len();
        let f = CVector::from_iterator(n, vals.iter().map(|&l| (scale * l).exp()));
        let scaled = CMatrix::from_fn(n, n, |i, j| vecs[(i, j)] * f[j]);
        ComplexOperator(scaled * vecs.adjoint())
    } else {
        ComplexOperator((&op.0 * scale).exp())
    }
}

/// Single-qubit rotation `exp(-iθπ/360·P)` about Pauli `axis` by `theta_deg`.
pub fn rotation(axis: char, theta_deg: f64) -> Result<ComplexOperator> {
    let p = pauli(axis)?;
    Ok(matrix_exp(&p, C64::new(0.0, -theta_deg.to_radians() / 2.0)))
}
