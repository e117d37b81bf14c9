use nalgebra::DMatrix;
use serde::Serialize;

use super::{ComplexOperator, C64};
use crate::error::{Error, Result};
use crate::markov::{Decomposition, StochasticMatrix, RECOMPOSITION_TOLERANCE};

/// A completely positive unital map `T[a] = Σ_k K_k a K_k*`.
///
/// Built from a decomposition `P = Σ_ℓ q_ℓ D_ℓ`, the operators are
/// `K_{ℓ,i} = √q_ℓ |i⟩⟨β_ℓ(i)|`; `T` then sends `m_f` to `m_{Pf}` and every
/// operator to a diagonal one.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KrausMap {
    n: usize,
    #[serde(skip)]
    ops: Vec<DMatrix<C64>>,
}

impl KrausMap {
    pub fn from_decomposition(p: &StochasticMatrix, dec: &Decomposition) -> Result<Self> {
        let deviation = dec.recompose().max_abs_diff(p);
        if deviation > RECOMPOSITION_TOLERANCE {
            return Err(Error::DecompositionMismatch { deviation });
        }
        let n = p.n();
        let mut ops = Vec::new();
        for (q, beta) in dec.terms().filter(|(q, _)| *q > 0.0) {
            for i in 0..n {
                let mut k = DMatrix::zeros(n, n);
                k[(i, beta.apply(i))] = C64::new(q.sqrt(), 0.0);
                ops.push(k);
            }
        }
        Ok(KrausMap { n, ops })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn kraus_operators(&self) -> &[DMatrix<C64>] {
        &self.ops
    }

    pub fn apply(&self, a: &ComplexOperator) -> Result<ComplexOperator> {
        if a.dim() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, found: a.dim() });
        }
        let mut out = DMatrix::zeros(self.n, self.n);
        for k in &self.ops {
            out += k * a.matrix() * k.adjoint();
        }
        Ok(ComplexOperator::from_parts(out, vec![self.n]))
    }

    /// `T^t[a]` by repeated application.
    pub fn apply_power(&self, a: &ComplexOperator, t: usize) -> Result<ComplexOperator> {
        (0..t).try_fold(a.clone(), |acc, _| self.apply(&acc))
    }

    /// `‖T[1] − 1‖_max`.
    pub fn unitality_deviation(&self) -> f64 {
        let id = ComplexOperator::identity(vec![self.n]);
        self.apply(&id).map_or(f64::INFINITY, |t1| t1.max_abs_diff(&id))
    }
}
