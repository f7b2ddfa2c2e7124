// Copyright 2026 The crsim Authors
// SPDX-License-Identifier: Apache-2.0

//! Joint dispersive readout, state tomography and process tomography.
//!
//! The readout returns the analog ensemble average
//! `⟨M⟩ = β_II + β_IZ⟨IZ⟩ + β_ZI⟨ZI⟩ + β_ZZ⟨ZZ⟩` after an ideal pre-rotation
//! on each qubit. Sixteen pre-rotation pairs make the map from the 16 Pauli
//! expectations to readouts invertible; states are then reconstructed by
//! least-squares maximum likelihood over `ρ = TT†/Tr(TT†)`.
//!
//! ```
//! use crsim::qlinalg::StateVector;
//! use crsim::tomo::{mle_state_tomography, simulate_record, ReadoutModel};
//!
//! let rho = StateVector::bell().to_density();
//! let model = ReadoutModel::default();
//! let record = simulate_record(&rho, &model, 0).unwrap();
//! let est = mle_state_tomography(&record, &model).unwrap();
//! assert!(est.trace_distance(&rho) < 1e-6);
//! ```

use std::fmt::Write as _;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{weighted::WeightedIndex, Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::vec_col;
use crate::pulses::SingleGate;
use crate::qlinalg::{
    hermitize, kron, pauli_basis, pauli_labels, pauli_string, tensor, CMatrix, ComplexOperator, DensityMatrix,
    StateVector, C64,
};
use crate::{derive_seed, Error, Result};

/// Pre-rotation applied to (qubit 1, qubit 2) before readout.
pub type Setting = (SingleGate, SingleGate);

/// Statistical noise added to each readout.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShotNoise {
    #[default]
    None,
    /// Additive Gaussian noise on `⟨M⟩` with this standard deviation.
    Gaussian { sigma: f64 },
    /// Finite number of projective shots per setting.
    Shots { count: u32 },
}

/// Joint readout calibration and noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReadoutModel {
    /// `[β_II, β_IZ, β_ZI, β_ZZ]`.
    pub beta: [f64; 4],
    pub noise: ShotNoise,
}

impl Default for ReadoutModel {
    fn default() -> Self {
        Self {
            beta: [1.0, 0.77, 0.72, 0.6],
            noise: ShotNoise::None,
        }
    }
}

impl ReadoutModel {
    pub fn new(beta: [f64; 4], noise: ShotNoise) -> Result<Self> {
        if beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::InvalidInput(format!("readout coefficients must be finite: {beta:?}")));
        }
        match noise {
            ShotNoise::Gaussian { sigma } if !(sigma >= 0.0 && sigma.is_finite()) => {
                return Err(Error::InvalidInput(format!("invalid readout noise sigma {sigma}")));
            }
            ShotNoise::Shots { count: 0 } => {
                return Err(Error::InvalidInput("shot count must be positive".into()));
            }
            _ => {}
        }
        Ok(Self { beta, noise })
    }

    /// Readout noise of `sigma` on `⟨M⟩`.
    pub fn realistic(beta: [f64; 4]) -> Self {
        Self {
            beta,
            noise: ShotNoise::Gaussian { sigma: 0.02 },
        }
    }

    /// The measured operator `β_II·II + β_IZ·IZ + β_ZI·ZI + β_ZZ·ZZ`.
    pub fn operator(&self) -> CMatrix {
        ["II", "IZ", "ZI", "ZZ"]
            .iter()
            .zip(self.beta)
            .map(|(l, b)| pauli_string(l).expect("valid label").into_matrix() * C64::new(b, 0.0))
            .fold(CMatrix::zeros(4, 4), |acc, m| acc + m)
    }
}

fn setting_unitary(s: Setting) -> CMatrix {
    tensor(&s.0.unitary(), &s.1.unitary()).into_matrix()
}

/// Noiseless readout operator for `setting`: `U†·M·U`.
pub fn setting_observable(setting: Setting, model: &ReadoutModel) -> CMatrix {
    let u = setting_unitary(setting);
    hermitize(u.adjoint() * model.operator() * u)
}

/// Simulated readout of `rho` after `setting`, reproducible for a given seed.
pub fn joint_readout(rho: &DensityMatrix, setting: Setting, model: &ReadoutModel, seed: u64) -> Result<f64> {
    if rho.dim() != 4 {
        return Err(Error::DimensionMismatch { expected: 4, got: rho.dim() });
    }
    let u = setting_unitary(setting);
    let rotated = &u * rho.matrix() * u.adjoint();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Z eigenvalues of (q1, q2) for basis state k.
    let signs = |k: usize| -> (f64, f64) {
        let z1 = if k & 2 == 0 { 1.0 } else { -1.0 };
        let z2 = if k & 1 == 0 { 1.0 } else { -1.0 };
        (z1, z2)
    };
    let b = model.beta;
    let readout = |zi: f64, iz: f64, zz: f64| b[0] + b[1] * iz + b[2] * zi + b[3] * zz;
    match model.noise {
        ShotNoise::None | ShotNoise::Gaussian { .. } => {
            let (mut zi, mut iz, mut zz) = (0.0, 0.0, 0.0);
            for k in 0..4 {
                let p = rotated[(k, k)].re;
                let (z1, z2) = signs(k);
                zi += p * z1;
                iz += p * z2;
                zz += p * z1 * z2;
            }
            let mut m = readout(zi, iz, zz);
            if let ShotNoise::Gaussian { sigma } = model.noise {
                if sigma > 0.0 {
                    let n = Normal::new(0.0, sigma).map_err(|e| Error::InvalidInput(e.to_string()))?;
                    m += n.sample(&mut rng);
                }
            }
            Ok(m)
        }
        ShotNoise::Shots { count } => {
            let probs: Vec<f64> = (0..4).map(|k| rotated[(k, k)].re.max(0.0)).collect();
            let dist = WeightedIndex::new(&probs).map_err(|e| Error::Unphysical(e.to_string()))?;
            let (mut zi, mut iz, mut zz) = (0.0, 0.0, 0.0);
            for _ in 0..count {
                let (z1, z2) = signs(dist.sample(&mut rng));
                zi += z1;
                iz += z2;
                zz += z1 * z2;
            }
            let n = count as f64;
            Ok(readout(zi / n, iz / n, zz / n))
        }
    }
}

/// `{I, X, X90, Y90}` on each qubit, qubit 1 outer; `(I, I)` first.
pub fn tomography_settings() -> Vec<Setting> {
    use SingleGate::*;
    let set = [I, X, X90, Y90];
    set.iter().flat_map(|&a| set.iter().map(move |&b| (a, b))).collect()
}

/// Linear map from Pauli expectations to readouts.
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    /// `A[k][j] = Tr(O_k·P_j)/4`, so readout `k` is `Σ_j A[k][j]·⟨P_j⟩`.
    pub matrix: DMatrix<f64>,
    pub rank: usize,
    pub condition_number: f64,
    pub singular_values: Vec<f64>,
}

/// Design matrix of `settings` under `model`.
pub fn design_matrix(settings: &[Setting], model: &ReadoutModel) -> DesignMatrix {
    let paulis = pauli_basis();
    let obs: Vec<CMatrix> = settings.iter().map(|&s| setting_observable(s, model)).collect();
    let matrix = DMatrix::from_fn(settings.len(), 16, |k, j| {
        (&obs[k] * paulis[j].matrix()).trace().re / 4.0
    });
    let sv = matrix.clone().svd(false, false).singular_values;
    let mut singular_values: Vec<f64> = sv.iter().copied().collect();
    singular_values.sort_by(|a, b| b.total_cmp(a));
    let top = singular_values.first().copied().unwrap_or(0.0);
    let rank = singular_values.iter().filter(|&&s| s > 1e-10 * top).count();
    let condition_number = if rank == 16 {
        top / singular_values[15]
    } else {
        f64::INFINITY
    };
    DesignMatrix {
        matrix,
        rank,
        condition_number,
        singular_values,
    }
}

/// Readout values indexed by pre-rotation setting.
#[derive(Debug, Clone, PartialEq)]
pub struct TomographyRecord {
    entries: Vec<(Setting, f64)>,
}

impl TomographyRecord {
    /// Rejects duplicate settings and non-finite values.
    pub fn new(entries: Vec<(Setting, f64)>) -> Result<Self> {
        for (k, (s, v)) in entries.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::InvalidInput(format!("non-finite readout for setting {}/{}", s.0, s.1)));
            }
            if entries[..k].iter().any(|(t, _)| t == s) {
                return Err(Error::InvalidInput(format!("duplicate setting {}/{}", s.0, s.1)));
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[(Setting, f64)] {
        &self.entries
    }

    pub fn settings(&self) -> Vec<Setting> {
        self.entries.iter().map(|e| e.0).collect()
    }

    pub fn values(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.1).collect()
    }

    /// CSV with columns `setting_q1,setting_q2,measured_value`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("setting_q1,setting_q2,measured_value\n");
        for ((a, b), v) in &self.entries {
            let _ = writeln!(out, "{a},{b},{v:e}");
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().unwrap_or_default();
        if header.trim() != "setting_q1,setting_q2,measured_value" {
            return Err(Error::Serialization(format!("unexpected tomography header `{header}`")));
        }
        let mut entries = Vec::new();
        for (n, line) in lines.enumerate() {
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            let [a, b, v] = cols[..] else {
                return Err(Error::Serialization(format!("row {}: expected 3 columns", n + 1)));
            };
            let parse_gate = |g: &str| SingleGate::from_str(g).map_err(|e| Error::Serialization(e.to_string()));
            let value = v
                .parse::<f64>()
                .map_err(|e| Error::Serialization(format!("row {}: {e}", n + 1)))?;
            entries.push(((parse_gate(a)?, parse_gate(b)?), value));
        }
        Self::new(entries)
    }
}

/// Readouts of `rho` for every tomography setting; setting `k` draws its
/// noise from a seed derived from `(seed, k)`.
pub fn simulate_record(rho: &DensityMatrix, model: &ReadoutModel, seed: u64) -> Result<TomographyRecord> {
    let entries = tomography_settings()
        .into_iter()
        .enumerate()
        .map(|(k, s)| joint_readout(rho, s, model, derive_seed(seed, k as u64)).map(|v| (s, v)))
        .collect::<Result<Vec<_>>>()?;
    TomographyRecord::new(entries)
}

fn solve_pauli_vector(record: &TomographyRecord, model: &ReadoutModel) -> Result<Vec<f64>> {
    let design = design_matrix(&record.settings(), model);
    if design.rank < 16 {
        return Err(Error::RankDeficient {
            rank: design.rank,
            needed: 16,
        });
    }
    let b = nalgebra::DVector::from_vec(record.values());
    let x = design
        .matrix
        .svd(true, true)
        .solve(&b, 1e-12)
        .map_err(|e| Error::InvalidInput(e.to_string()))?;
    Ok(x.iter().copied().collect())
}

/// Unconstrained linear-inversion estimate `Σ_j x_j·P_j/4`, renormalised to
/// unit trace. It may have negative eigenvalues.
pub fn linear_inversion_state(record: &TomographyRecord, model: &ReadoutModel) -> Result<ComplexOperator> {
    let x = solve_pauli_vector(record, model)?;
    if !(x[0].abs() > 1e-12) {
        return Err(Error::Unphysical("linear inversion gave zero trace".into()));
    }
    let m = pauli_basis()
        .iter()
        .zip(&x)
        .fold(CMatrix::zeros(4, 4), |acc, (p, &c)| acc + p.matrix() * C64::new(c / (4.0 * x[0]), 0.0));
    let est = ComplexOperator::new(hermitize(m))?;
    let lowest = crate::qlinalg::eig_hermitian(&est)?.values[0];
    if lowest < -1e-9 {
        log::info!("linear inversion estimate has negative eigenvalue {lowest:.3e}");
    }
    Ok(est)
}

/// Stopping rule of the likelihood maximisation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MleOptions {
    pub max_iterations: usize,
    /// Gradient norm regarded as converged.
    pub gradient_tol: f64,
    /// Gradient norm above which hitting `max_iterations` is an error.
    pub failure_tol: f64,
}

impl Default for MleOptions {
    fn default() -> Self {
        Self {
            max_iterations: 2000,
            gradient_tol: 1e-13,
            failure_tol: 1e-6,
        }
    }
}

/// Maximum-likelihood (least-squares) state estimate; always a valid
/// density matrix.
pub fn mle_state_tomography(record: &TomographyRecord, model: &ReadoutModel) -> Result<DensityMatrix> {
    mle_state_tomography_with(record, model, &MleOptions::default())
}

/// [`mle_state_tomography`] with explicit stopping rule.
pub fn mle_state_tomography_with(
    record: &TomographyRecord,
    model: &ReadoutModel,
    opts: &MleOptions,
) -> Result<DensityMatrix> {
    let lin = linear_inversion_state(record, model)?;
    let start = DensityMatrix::project(lin.matrix())?;
    let shifted = start.matrix() + CMatrix::identity(4, 4) * C64::new(1e-9, 0.0);
    let chol = shifted
        .cholesky()
        .ok_or_else(|| Error::Unphysical("starting point is not positive definite".into()))?;
    let x0 = pack(&chol.l());
    let problem = LeastSquares {
        observables: record.settings().iter().map(|&s| setting_observable(s, model)).collect(),
        values: record.values(),
    };
    let x = lbfgs(&problem, x0, opts)?;
    let t = unpack(&x);
    let tt = &t * t.adjoint();
    let trace = tt.trace().re;
    DensityMatrix::new(hermitize(tt / C64::new(trace, 0.0)))
}

/// Lower-triangular `T` to 16 reals: real diagonal, complex strict lower part.
fn pack(t: &CMatrix) -> Vec<f64> {
    let mut x = Vec::with_capacity(16);
    for i in 0..4 {
        for j in 0..=i {
            if i == j {
                x.push(t[(i, i)].re);
            } else {
                x.push(t[(i, j)].re);
                x.push(t[(i, j)].im);
            }
        }
    }
    x
}

fn unpack(x: &[f64]) -> CMatrix {
    let mut t = CMatrix::zeros(4, 4);
    let mut k = 0;
    for i in 0..4 {
        for j in 0..=i {
            if i == j {
                t[(i, i)] = C64::new(x[k], 0.0);
                k += 1;
            } else {
                t[(i, j)] = C64::new(x[k], x[k + 1]);
                k += 2;
            }
        }
    }
    t
}

struct LeastSquares {
    observables: Vec<CMatrix>,
    values: Vec<f64>,
}

impl LeastSquares {
    fn cost_and_gradient(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let t = unpack(x);
        let tt = &t * t.adjoint();
        let norm = tt.trace().re;
        let rho = &tt / C64::new(norm, 0.0);
        let mut g = CMatrix::zeros(4, 4);
        let mut cost = 0.0;
        for (o, &m) in self.observables.iter().zip(&self.values) {
            let r = m - (o * &rho).trace().re;
            cost += r * r;
            g -= o * C64::new(2.0 * r, 0.0);
        }
        let shift = (&g * &rho).trace();
        let gp = (g - CMatrix::identity(4, 4) * shift) / C64::new(norm, 0.0);
        let gt = gp * &t;
        let mut grad = Vec::with_capacity(16);
        for i in 0..4 {
            for j in 0..=i {
                grad.push(2.0 * gt[(i, j)].re);
                if i != j {
                    grad.push(2.0 * gt[(i, j)].im);
                }
            }
        }
        (cost, grad)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Limited-memory BFGS with backtracking Armijo line search.
fn lbfgs(problem: &LeastSquares, mut x: Vec<f64>, opts: &MleOptions) -> Result<Vec<f64>> {
    const MEMORY: usize = 8;
    let (mut f, mut g) = problem.cost_and_gradient(&x);
    let mut history: std::collections::VecDeque<(Vec<f64>, Vec<f64>, f64)> = Default::default();
    for _ in 0..opts.max_iterations {
        if norm(&g) < opts.gradient_tol {
            return Ok(x);
        }
        // Two-loop recursion.
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(history.len());
        for (s, y, rho) in history.iter().rev() {
            let a = rho * dot(s, &q);
            q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
            alphas.push(a);
        }
        let gamma = history
            .back()
            .map(|(s, y, _)| dot(s, y) / dot(y, y))
            .unwrap_or_else(|| 1e-2 / norm(&g).max(1e-300));
        q.iter_mut().for_each(|v| *v *= gamma);
        for ((s, y, rho), a) in history.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &q);
            q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
        }
        let mut dir: Vec<f64> = q.iter().map(|v| -v).collect();
        let mut slope = dot(&g, &dir);
        if slope >= 0.0 {
            history.clear();
            dir = g.iter().map(|v| -v * 1e-2 / norm(&g)).collect();
            slope = dot(&g, &dir);
        }
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<f64> = x.iter().zip(&dir).map(|(xi, di)| xi + step * di).collect();
            let (ft, gt) = problem.cost_and_gradient(&trial);
            if ft.is_finite() && ft <= f + 1e-4 * step * slope {
                accepted = Some((trial, ft, gt));
                break;
            }
            step *= 0.5;
        }
        let Some((xn, fn_, gn)) = accepted else {
            // No further decrease is representable.
            break;
        };
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-300 {
            if history.len() == MEMORY {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }
        let done = (f - fn_).abs() <= f64::EPSILON * f.max(1e-300);
        x = xn;
        f = fn_;
        g = gn;
        if done && norm(&g) < opts.failure_tol {
            return Ok(x);
        }
    }
    let gn = norm(&g);
    if gn > opts.failure_tol {
        return Err(Error::Convergence {
            what: "maximum-likelihood tomography",
            iterations: opts.max_iterations,
            detail: format!("gradient norm {gn:.3e}, cost {f:.3e}"),
        });
    }
    Ok(x)
}

/// The 36 product inputs `g1|0⟩ ⊗ g2|0⟩` with `g ∈ {I, X90, X-90, Y90, Y-90, X}`.
pub fn qpt_inputs() -> Vec<(Setting, StateVector)> {
    use SingleGate::*;
    let gates = [I, X90, Xm90, Y90, Ym90, X];
    let zero = StateVector::from_bits("00").expect("valid label");
    gates
        .iter()
        .flat_map(|&a| gates.iter().map(move |&b| (a, b)))
        .map(|s| {
            let u = tensor(&s.0.unitary(), &s.1.unitary());
            let psi = u.apply(&zero).expect("dimension 4");
            (s, psi)
        })
        .collect()
}

/// Process matrix in the ordered two-qubit Pauli basis:
/// `E(ρ) = Σ_mn χ_mn·P_m·ρ·P_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChiMatrix(CMatrix);

#[derive(Serialize, Deserialize)]
struct ChiJson {
    basis: Vec<String>,
    /// Row-major `[re, im]` pairs.
    data: Vec<Vec<[f64; 2]>>,
}

impl ChiMatrix {
    /// Checks shape and Hermiticity (to 1e-8).
    pub fn new(m: CMatrix) -> Result<Self> {
        if m.nrows() != 16 || m.ncols() != 16 {
            return Err(Error::DimensionMismatch { expected: 16, got: m.nrows() });
        }
        let err = (&m - m.adjoint()).camax();
        if err > 1e-8 {
            return Err(Error::NotHermitian(err));
        }
        Ok(Self(hermitize(m)))
    }

    pub(crate) fn from_raw(m: CMatrix) -> Self {
        Self(m)
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn trace(&self) -> f64 {
        self.0.trace().re
    }

    /// Ascending eigenvalues.
    pub fn eigenvalues(&self) -> Vec<f64> {
        crate::qlinalg::eig_hermitian_raw(&hermitize(self.0.clone())).0
    }

    /// Nearest completely positive map by eigenvalue clipping, renormalised
    /// to unit trace.
    pub fn project(&self) -> Result<ChiMatrix> {
        DensityMatrix::project(&self.0).map(|d| ChiMatrix(d.into_matrix()))
    }

    /// `Σ_mn χ_mn·P_m·ρ·P_n`.
    pub fn apply(&self, rho: &DensityMatrix) -> CMatrix {
        let p = pauli_basis();
        let mut out = CMatrix::zeros(4, 4);
        for m in 0..16 {
            let left = p[m].matrix() * rho.matrix();
            for n in 0..16 {
                let c = self.0[(m, n)];
                if c.norm() > 0.0 {
                    out += &left * p[n].matrix() * c;
                }
            }
        }
        out
    }

    /// Largest entry of `Σ_mn χ_mn·P_n·P_m − I`; zero for trace-preserving maps.
    pub fn trace_preservation_error(&self) -> f64 {
        let p = pauli_basis();
        let mut s = CMatrix::zeros(4, 4);
        for m in 0..16 {
            for n in 0..16 {
                s += p[n].matrix() * p[m].matrix() * self.0[(m, n)];
            }
        }
        (s - CMatrix::identity(4, 4)).camax()
    }

    /// Column-stacked superoperator `Σ_mn χ_mn·(P_n* ⊗ P_m)`.
    pub fn superoperator(&self) -> CMatrix {
        let p = pauli_basis();
        let mut s = CMatrix::zeros(16, 16);
        for m in 0..16 {
            for n in 0..16 {
                let c = self.0[(m, n)];
                if c.norm() > 0.0 {
                    s += kron(&p[n].matrix().conjugate(), p[m].matrix()) * c;
                }
            }
        }
        s
    }

    /// Process matrix of a column-stacked superoperator.
    pub fn from_superoperator(s: &CMatrix) -> Result<ChiMatrix> {
        if s.nrows() != 16 || s.ncols() != 16 {
            return Err(Error::DimensionMismatch { expected: 16, got: s.nrows() });
        }
        let p = pauli_basis();
        let chi = CMatrix::from_fn(16, 16, |m, n| {
            let b = kron(&p[n].matrix().conjugate(), p[m].matrix());
            (b.adjoint() * s).trace() / 16.0
        });
        Ok(ChiMatrix(hermitize(chi)))
    }

    pub fn to_json(&self) -> Result<String> {
        let data = (0..16)
            .map(|m| (0..16).map(|n| [self.0[(m, n)].re, self.0[(m, n)].im]).collect())
            .collect();
        let doc = ChiJson {
            basis: pauli_labels(),
            data,
        };
        serde_json::to_string_pretty(&doc).map_err(|e| Error::Serialization(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<ChiMatrix> {
        let doc: ChiJson = serde_json::from_str(text).map_err(|e| Error::Serialization(e.to_string()))?;
        if doc.basis != pauli_labels() {
            return Err(Error::Serialization("unexpected basis labels".into()));
        }
        if doc.data.len() != 16 || doc.data.iter().any(|r| r.len() != 16) {
            return Err(Error::Serialization("process matrix must be 16×16".into()));
        }
        let m = CMatrix::from_fn(16, 16, |i, j| C64::new(doc.data[i][j][0], doc.data[i][j][1]));
        ChiMatrix::new(m)
    }
}

/// How each output state is estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Estimator {
    #[default]
    MaximumLikelihood,
    LinearInversion,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct QptOptions {
    pub seed: u64,
    pub estimator: Estimator,
}

/// Reconstructed process.
#[derive(Debug, Clone)]
pub struct QptResult {
    pub raw: ChiMatrix,
    pub projected: ChiMatrix,
    /// Frobenius distance between `raw` and `projected`.
    pub projection_distance: f64,
    /// Estimated output for each of [`qpt_inputs`].
    pub outputs: Vec<CMatrix>,
}

/// Process tomography of `channel` from simulated readouts of its outputs on
/// the 36 [`qpt_inputs`].
pub fn qpt<F>(channel: F, model: &ReadoutModel, opts: &QptOptions) -> Result<QptResult>
where
    F: Fn(&DensityMatrix) -> Result<DensityMatrix> + Sync,
{
    let inputs = qpt_inputs();
    let outputs = inputs
        .par_iter()
        .enumerate()
        .map(|(k, (_, psi))| -> Result<CMatrix> {
            let out = channel(&psi.to_density())?;
            let record = simulate_record(&out, model, derive_seed(opts.seed, k as u64))?;
            match opts.estimator {
                Estimator::MaximumLikelihood => Ok(mle_state_tomography(&record, model)?.into_matrix()),
                Estimator::LinearInversion => Ok(linear_inversion_state(&record, model)?.into_matrix()),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let x = DMatrix::from_fn(16, inputs.len(), |r, k| vec_col(inputs[k].1.to_density().matrix())[(r, 0)]);
    let y = DMatrix::from_fn(16, inputs.len(), |r, k| vec_col(&outputs[k])[(r, 0)]);
    let pinv = x
        .pseudo_inverse(1e-10)
        .map_err(|e| Error::InvalidInput(e.to_string()))?;
    let s = y * pinv;
    let raw = ChiMatrix::from_superoperator(&s)?;
    let projected = raw.project()?;
    let projection_distance = (raw.matrix() - projected.matrix()).norm();
    Ok(QptResult {
        raw,
        projected,
        projection_distance,
        outputs,
    })
}

#[cfg(test)]
mod tests;
