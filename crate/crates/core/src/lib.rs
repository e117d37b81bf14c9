//! Dilation of finite Markov chains into invertible dynamics on a product
//! space, with sampling on that space and a unitary counterpart on
//! `C^N ⊗ (C^{N·|L|})^{⊗W}`.

pub mod dynamics;
pub mod error;
pub mod markov;
pub mod quantum;
pub mod report;
pub mod sample;

pub use dynamics::{Coupling, Dynamics, EnvSymbol, ObservedHistory, WindowedGlobalState};
pub use error::{Error, Result};
pub use markov::{
    canonical_decomposition, sparse_decomposition, Decomposition, DeterministicMap, LabelSet, MatrixSequence,
    StateSpace, StochasticMatrix,
};
pub use report::CheckReport;
pub use sample::{
    build_measure, simulate, Decomposer, DilationMeasure, EnvProductLaw, LabelScope, MeasureOptions, SymbolLaw,
};
