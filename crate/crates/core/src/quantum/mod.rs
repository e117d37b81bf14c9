//! Finite-dimensional quantum extension of the classical dilation.
//!
//! Operators are dense complex matrices over a tensor-product basis. The
//! factor list records the factorisation with the system first; within a
//! product basis the first factor varies slowest.

mod channel;
mod dilation;

pub use channel::KrausMap;
pub use dilation::{
    eqexp_check, flow_by_recursion, flow_by_unitaries, group_dilation_check, one_step_dilation_check,
    qsf_check, shift_operator, trajectory_distribution_check, GroupDilationReport, QsfReport,
    QuantumDilation, TrajectoryReport, DEFAULT_DIM_CAP, QUANTUM_TOLERANCE,
};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};

pub type C64 = Complex64;

pub(crate) const ONE: C64 = C64::new(1.0, 0.0);
pub(crate) const ZERO: C64 = C64::new(0.0, 0.0);

/// Dense operator on `⊗_k C^{factors[k]}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComplexOperator {
    #[serde(skip)]
    matrix: DMatrix<C64>,
    factors: Vec<usize>,
}

impl ComplexOperator {
    pub fn new(matrix: DMatrix<C64>, factors: Vec<usize>) -> Result<Self> {
        let dim: usize = factors.iter().product();
        if !matrix.is_square() || matrix.nrows() != dim {
            return Err(Error::DimensionMismatch { expected: dim, found: matrix.nrows() });
        }
        if matrix.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidOperator("non-finite entry".into()));
        }
        Ok(ComplexOperator { matrix, factors })
    }

    pub(crate) fn from_parts(matrix: DMatrix<C64>, factors: Vec<usize>) -> Self {
        debug_assert_eq!(matrix.nrows(), factors.iter().product::<usize>());
        ComplexOperator { matrix, factors }
    }

    pub fn identity(factors: Vec<usize>) -> Self {
        let dim = factors.iter().product();
        ComplexOperator { matrix: DMatrix::identity(dim, dim), factors }
    }

    /// `|r⟩⟨c|` on a single factor of dimension `dim`.
    pub fn matrix_unit(dim: usize, r: usize, c: usize) -> Self {
        let mut matrix = DMatrix::zeros(dim, dim);
        matrix[(r, c)] = ONE;
        ComplexOperator { matrix, factors: vec![dim] }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn factors(&self) -> &[usize] {
        &self.factors
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn adjoint(&self) -> Self {
        ComplexOperator { matrix: self.matrix.adjoint(), factors: self.factors.clone() }
    }

    pub fn mul(&self, other: &ComplexOperator) -> Result<Self> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: other.dim() });
        }
        Ok(ComplexOperator { matrix: &self.matrix * &other.matrix, factors: self.factors.clone() })
    }

    /// `self ⊗ other`.
    pub fn kron(&self, other: &ComplexOperator) -> Self {
        let mut factors = self.factors.clone();
        factors.extend_from_slice(&other.factors);
        ComplexOperator { matrix: self.matrix.kronecker(&other.matrix), factors }
    }

    pub fn trace(&self) -> C64 {
        self.matrix.trace()
    }

    pub fn max_abs_diff(&self, other: &ComplexOperator) -> f64 {
        if self.dim() != other.dim() {
            return f64::INFINITY;
        }
        self.matrix
            .iter()
            .zip(other.matrix.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// Largest modulus of an off-diagonal entry.
    pub fn off_diagonal_norm(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for ((r, c), z) in self.matrix.iter().enumerate().map(|(k, z)| ((k % self.dim(), k / self.dim()), z)) {
            if r != c {
                worst = worst.max(z.norm());
            }
        }
        worst
    }

    pub fn diagonal(&self) -> Vec<C64> {
        self.matrix.diagonal().iter().copied().collect()
    }
}

/// `m_f = Σ_i f(i) |i⟩⟨i|` over the basis described by `factors`.
pub fn embed_diagonal(f: &[f64], factors: Vec<usize>) -> Result<ComplexOperator> {
    let dim: usize = factors.iter().product();
    if f.len() != dim {
        return Err(Error::DimensionMismatch { expected: dim, found: f.len() });
    }
    let diag = DVector::from_iterator(dim, f.iter().map(|&v| C64::new(v, 0.0)));
    Ok(ComplexOperator { matrix: DMatrix::from_diagonal(&diag), factors })
}

/// `E_σ[A]`, characterised by `tr[E_σ[A] ρ] = tr[A (ρ ⊗ σ)]` for all `ρ`;
/// equivalently the partial trace of `A (1 ⊗ σ)` over the trailing factors.
/// `σ` may be any operator on the environment, e.g. `|z⟩⟨z'|`.
pub fn conditional_expectation(a: &ComplexOperator, sigma: &ComplexOperator) -> Result<ComplexOperator> {
    let env = sigma.dim();
    if env == 0 || !a.dim().is_multiple_of(env) {
        return Err(Error::DimensionMismatch { expected: env, found: a.dim() });
    }
    let sys = a.dim() / env;
    let factors = match a.factors.len().checked_sub(sigma.factors.len()) {
        Some(cut) if a.factors[cut..] == sigma.factors[..] && cut > 0 => a.factors[..cut].to_vec(),
        _ => vec![sys],
    };
    let m = &a.matrix;
    let s = &sigma.matrix;
    let mut out = DMatrix::zeros(sys, sys);
    for k in 0..sys {
        for i in 0..sys {
            let mut acc = ZERO;
            for e in 0..env {
                for e2 in 0..env {
                    let w = s[(e2, e)];
                    if w != ZERO {
                        acc += m[(k * env + e, i * env + e2)] * w;
                    }
                }
            }
            out[(k, i)] = acc;
        }
    }
    Ok(ComplexOperator { matrix: out, factors })
}

/// A positive semidefinite operator of unit trace.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityState(ComplexOperator);

impl DensityState {
    pub const HERMITIAN_TOLERANCE: f64 = 1e-12;
    pub const EIGEN_TOLERANCE: f64 = 1e-10;
    pub const TRACE_TOLERANCE: f64 = 1e-12;

    pub fn new(op: ComplexOperator) -> Result<Self> {
        if op.max_abs_diff(&op.adjoint()) > Self::HERMITIAN_TOLERANCE {
            return Err(Error::InvalidOperator("state is not Hermitian".into()));
        }
        let tr = op.trace();
        if (tr - ONE).norm() > Self::TRACE_TOLERANCE {
            return Err(Error::InvalidOperator(format!("state has trace {tr}")));
        }
        let min = op
            .matrix
            .clone()
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        if min < -Self::EIGEN_TOLERANCE {
            return Err(Error::InvalidOperator(format!("state has eigenvalue {min}")));
        }
        Ok(DensityState(op))
    }

    /// `|v⟩⟨v|` for a unit vector.
    pub fn pure(v: &DVector<C64>, factors: Vec<usize>) -> Result<Self> {
        let op = ComplexOperator::new(v * v.adjoint(), factors)?;
        DensityState::new(op)
    }

    /// `|k⟩⟨k|` on `C^n`.
    pub fn basis(n: usize, k: usize) -> Result<Self> {
        if k >= n {
            return Err(Error::InvalidState { state: k, n });
        }
        DensityState::new(ComplexOperator::matrix_unit(n, k, k))
    }

    pub fn operator(&self) -> &ComplexOperator {
        &self.0
    }

    /// `tr[a ρ]`.
    pub fn expect(&self, a: &ComplexOperator) -> Result<C64> {
        Ok(a.mul(&self.0)?.trace())
    }
}

/// `φ = Σ_ℓ √q_ℓ |0, ℓ⟩` on one environment slot `C^{N·|L|}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PureEnvVector {
    #[serde(skip)]
    amplitudes: DVector<C64>,
    n: usize,
    label_count: usize,
}

impl PureEnvVector {
    pub const NORM_TOLERANCE: f64 = 1e-12;

    pub fn from_label_weights(n: usize, q: &[f64]) -> Result<Self> {
        let dim = n * q.len();
        let mut amplitudes = DVector::zeros(dim);
        for (label, &w) in q.iter().enumerate() {
            if w.is_nan() || w < 0.0 {
                return Err(Error::InvalidLaw(format!("negative weight {w}")));
            }
            amplitudes[label] = C64::new(w.sqrt(), 0.0);
        }
        let norm = amplitudes.norm();
        if (norm - 1.0).abs() > Self::NORM_TOLERANCE {
            return Err(Error::InvalidLaw(format!("environment vector has norm {norm}")));
        }
        Ok(PureEnvVector { amplitudes, n, label_count: q.len() })
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &DVector<C64> {
        &self.amplitudes
    }

    /// `φ^{⊗w}`.
    pub fn tensor_power(&self, w: usize) -> DVector<C64> {
        (0..w).fold(DVector::from_element(1, ONE), |acc, _| acc.kronecker(&self.amplitudes))
    }

    /// `|φ^{⊗w}⟩⟨φ^{⊗w}|`.
    pub fn state(&self, w: usize) -> ComplexOperator {
        let v = self.tensor_power(w);
        ComplexOperator::from_parts(&v * v.adjoint(), vec![self.dim(); w])
    }
}
