//! Stochastic and deterministic matrices on a finite state space `{0, …, N-1}`.
//!
//! A stochastic matrix acts on observables by `(Pf)(i) = Σ_j p_ij f(j)`. Every
//! stochastic matrix is a convex combination of deterministic matrices; two
//! such decompositions are provided:
//!
//! * [`canonical_decomposition`] uses every one of the `N^N` maps with the
//!   product weights `q_ℓ = p_{0 β(0)} ⋯ p_{N-1 β(N-1)}`, so the label set does
//!   not depend on the matrix.
//! * [`sparse_decomposition`] peels deterministic maps off greedily and uses at
//!   most `nnz(P) - N + 1 ≤ N² - N + 1` terms.

use std::collections::HashMap;
use std::ops::{Add, Mul};

use serde::Serialize;

use crate::error::{Error, Result};

/// Slack accepted on row sums of user-supplied matrices.
pub const ROW_TOLERANCE: f64 = 1e-9;

/// Tolerance for identities that hold exactly in real arithmetic.
pub const RECOMPOSITION_TOLERANCE: f64 = 1e-12;

/// Default cap on `N^N` for the canonical decomposition (`6^6`).
pub const DEFAULT_LABEL_CAP: u128 = 46_656;

/// A finite state space with `n` states.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct StateSpace {
    n: usize,
}

impl StateSpace {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Empty);
        }
        Ok(StateSpace { n })
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn check(&self, state: usize) -> Result<()> {
        if state < self.n {
            Ok(())
        } else {
            Err(Error::InvalidState { state, n: self.n })
        }
    }

    /// Number of deterministic maps `E → E`, or `None` on overflow.
    pub fn map_count(&self) -> Option<u128> {
        (self.n as u128).checked_pow(self.n as u32)
    }
}

/// Row-stochastic `N×N` matrix, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StochasticMatrix {
    n: usize,
    entries: Vec<f64>,
}

impl StochasticMatrix {
    /// Validates a square array of rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::Empty);
        }
        let mut entries = Vec::with_capacity(n * n);
        for (row, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != n {
                return Err(Error::NotSquare { row, len: r.len(), expected: n });
            }
            entries.extend_from_slice(r);
        }
        Self::from_row_major(n, entries)
    }

    pub fn from_row_major(n: usize, entries: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::Empty);
        }
        if entries.len() != n * n {
            return Err(Error::DimensionMismatch { expected: n * n, found: entries.len() });
        }
        for row in 0..n {
            let r = &entries[row * n..(row + 1) * n];
            for (col, &value) in r.iter().enumerate() {
                // NaN fails this comparison too.
                if value < 0.0 || !value.is_finite() {
                    return Err(Error::NegativeEntry { row, col, value });
                }
            }
            let sum: f64 = r.iter().sum();
            if (sum - 1.0).abs() > ROW_TOLERANCE {
                return Err(Error::RowSumViolation { row, sum });
            }
        }
        Ok(StochasticMatrix { n, entries })
    }

    pub fn identity(n: usize) -> Self {
        DeterministicMap::identity(n).to_matrix()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.n..(i + 1) * self.n]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.n).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn nonzero_count(&self) -> usize {
        self.entries.iter().filter(|&&p| p > 0.0).count()
    }

    /// `(Pf)(i) = Σ_j p_ij f(j)`.
    pub fn apply<T>(&self, f: &[T]) -> Result<Vec<T>>
    where
        T: Copy + Default + Add<Output = T> + Mul<f64, Output = T>,
    {
        if f.len() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, found: f.len() });
        }
        Ok((0..self.n)
            .map(|i| {
                self.row(i)
                    .iter()
                    .zip(f)
                    .fold(T::default(), |acc, (&p, &v)| acc + v * p)
            })
            .collect())
    }

    /// Matrix product `self · other`.
    pub fn then(&self, other: &StochasticMatrix) -> Result<StochasticMatrix> {
        if other.n != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, found: other.n });
        }
        let n = self.n;
        let mut entries = vec![0.0; n * n];
        for i in 0..n {
            for k in 0..n {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                for j in 0..n {
                    entries[i * n + j] += a * other.get(k, j);
                }
            }
        }
        Ok(StochasticMatrix { n, entries })
    }

    pub fn max_abs_diff(&self, other: &StochasticMatrix) -> f64 {
        self.entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| (a - b).abs())
            .fold(if self.n == other.n { 0.0 } else { f64::INFINITY }, f64::max)
    }
}

/// A map `β: E → E`, the deterministic matrix `d_ij = δ_{β(i), j}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct DeterministicMap {
    image: Vec<usize>,
}

impl DeterministicMap {
    pub fn new(image: Vec<usize>) -> Result<Self> {
        let n = image.len();
        if n == 0 {
            return Err(Error::Empty);
        }
        if let Some(&state) = image.iter().find(|&&s| s >= n) {
            return Err(Error::InvalidState { state, n });
        }
        Ok(DeterministicMap { image })
    }

    pub fn identity(n: usize) -> Self {
        DeterministicMap { image: (0..n).collect() }
    }

    /// Decodes a label: base-`n` digits, most significant first, give
    /// `β(0), …, β(n-1)`.
    pub fn from_code(n: usize, code: u64) -> Self {
        let mut image = vec![0; n];
        let mut rest = code;
        for slot in image.iter_mut().rev() {
            *slot = (rest % n as u64) as usize;
            rest /= n as u64;
        }
        DeterministicMap { image }
    }

    pub fn code(&self) -> u64 {
        let n = self.n() as u64;
        self.image.iter().fold(0, |acc, &s| acc * n + s as u64)
    }

    pub fn n(&self) -> usize {
        self.image.len()
    }

    pub fn image(&self) -> &[usize] {
        &self.image
    }

    pub fn apply(&self, state: usize) -> usize {
        self.image[state]
    }

    pub fn is_permutation(&self) -> bool {
        let mut seen = vec![false; self.n()];
        self.image.iter().all(|&s| !std::mem::replace(&mut seen[s], true))
    }

    /// `self ∘ inner`.
    pub fn after(&self, inner: &DeterministicMap) -> DeterministicMap {
        DeterministicMap { image: inner.image.iter().map(|&s| self.image[s]).collect() }
    }

    /// `Df = f ∘ β`.
    pub fn pull_back<T: Copy>(&self, f: &[T]) -> Vec<T> {
        self.image.iter().map(|&s| f[s]).collect()
    }

    pub fn to_matrix(&self) -> StochasticMatrix {
        let n = self.n();
        let mut entries = vec![0.0; n * n];
        for (i, &j) in self.image.iter().enumerate() {
            entries[i * n + j] = 1.0;
        }
        StochasticMatrix { n, entries }
    }
}

/// An ordered list of distinct deterministic maps on the same state space.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LabelSet {
    n: usize,
    maps: Vec<DeterministicMap>,
    #[serde(skip)]
    index: HashMap<u64, usize>,
}

impl LabelSet {
    pub fn new(n: usize, maps: Vec<DeterministicMap>) -> Result<Self> {
        if maps.is_empty() {
            return Err(Error::Empty);
        }
        let mut index = HashMap::with_capacity(maps.len());
        for (pos, m) in maps.iter().enumerate() {
            if m.n() != n {
                return Err(Error::DimensionMismatch { expected: n, found: m.n() });
            }
            if index.insert(m.code(), pos).is_some() {
                return Err(Error::DuplicateLabel(pos));
            }
        }
        Ok(LabelSet { n, maps, index })
    }

    /// All `N^N` maps in code order.
    pub fn full(n: usize, cap: u128) -> Result<Self> {
        let space = StateSpace::new(n)?;
        let count = space
            .map_count()
            .filter(|&c| c <= cap)
            .ok_or(Error::SizeGuardExceeded { size: space.map_count().unwrap_or(u128::MAX), cap })?;
        let maps = (0..count as u64).map(|c| DeterministicMap::from_code(n, c)).collect();
        LabelSet::new(n, maps)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.maps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.maps.is_empty()
    }

    pub fn map(&self, label: usize) -> &DeterministicMap {
        &self.maps[label]
    }

    pub fn maps(&self) -> &[DeterministicMap] {
        &self.maps
    }

    pub fn position(&self, map: &DeterministicMap) -> Option<usize> {
        self.index.get(&map.code()).copied().filter(|&p| self.maps[p] == *map)
    }

    pub fn identity_label(&self) -> Option<usize> {
        self.position(&DeterministicMap::identity(self.n))
    }
}

/// Weights `q_ℓ ≥ 0` over a label set with `Σ q_ℓ = 1`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Decomposition {
    labels: LabelSet,
    weights: Vec<f64>,
}

impl Decomposition {
    pub fn new(labels: LabelSet, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != labels.len() {
            return Err(Error::DimensionMismatch { expected: labels.len(), found: weights.len() });
        }
        if let Some(w) = weights.iter().find(|&&w| w.is_nan() || w < 0.0) {
            return Err(Error::InvalidLaw(format!("negative weight {w}")));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > ROW_TOLERANCE {
            return Err(Error::InvalidLaw(format!("weights sum to {total}")));
        }
        Ok(Decomposition { labels, weights })
    }

    pub fn labels(&self) -> &LabelSet {
        &self.labels
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (f64, &DeterministicMap)> {
        self.weights.iter().copied().zip(self.labels.maps())
    }

    /// Weight carried by `map`, zero if it is not a label.
    pub fn weight_of(&self, map: &DeterministicMap) -> f64 {
        self.labels.position(map).map_or(0.0, |p| self.weights[p])
    }

    /// Drops zero-weight labels.
    pub fn support(&self) -> Decomposition {
        let (maps, weights): (Vec<_>, Vec<_>) = self
            .terms()
            .filter(|(w, _)| *w > 0.0)
            .map(|(w, m)| (m.clone(), w))
            .unzip();
        Decomposition {
            labels: LabelSet::new(self.labels.n, maps).expect("subset of a valid label set"),
            weights,
        }
    }

    /// Re-expresses the weights over a larger label set.
    pub fn reindex(&self, labels: &LabelSet) -> Result<Decomposition> {
        let mut weights = vec![0.0; labels.len()];
        for (w, m) in self.terms() {
            if w == 0.0 {
                continue;
            }
            let pos = labels
                .position(m)
                .ok_or_else(|| Error::MissingLabel(m.image().to_vec()))?;
            weights[pos] += w;
        }
        Ok(Decomposition { labels: labels.clone(), weights })
    }

    /// `Σ_ℓ q_ℓ D_ℓ`.
    pub fn recompose(&self) -> StochasticMatrix {
        let n = self.labels.n;
        let mut entries = vec![0.0; n * n];
        for (w, m) in self.terms() {
            for (i, &j) in m.image().iter().enumerate() {
                entries[i * n + j] += w;
            }
        }
        StochasticMatrix { n, entries }
    }
}

/// Product-weight decomposition over all `N^N` maps; zero weights are kept.
pub fn canonical_decomposition(p: &StochasticMatrix, cap: u128) -> Result<Decomposition> {
    let labels = LabelSet::full(p.n(), cap)?;
    let weights = labels
        .maps()
        .iter()
        .map(|m| m.image().iter().enumerate().map(|(i, &j)| p.get(i, j)).product())
        .collect();
    Ok(Decomposition { labels, weights })
}

/// Greedy residual peeling.
///
/// Each step picks, in every row, the column holding the largest residual
/// entry (lowest column on ties); the weight is the smallest of the picked
/// entries, which is then zeroed. Stops once every residual entry is at most
/// [`RECOMPOSITION_TOLERANCE`].
pub fn sparse_decomposition(p: &StochasticMatrix) -> Result<Decomposition> {
    let n = p.n();
    let mut residual = p.entries.clone();
    let mut maps = Vec::new();
    let mut weights = Vec::new();
    let max_steps = n * n;

    while residual.iter().any(|&r| r > RECOMPOSITION_TOLERANCE) {
        if maps.len() == max_steps {
            return Err(Error::NonConvergence { iterations: max_steps });
        }
        let image: Vec<usize> = (0..n)
            .map(|i| {
                let row = &residual[i * n..(i + 1) * n];
                let mut best = 0;
                for (j, &r) in row.iter().enumerate().skip(1) {
                    if r > row[best] {
                        best = j;
                    }
                }
                best
            })
            .collect();
        let weight = image
            .iter()
            .enumerate()
            .map(|(i, &j)| residual[i * n + j])
            .fold(f64::INFINITY, f64::min);
        if weight <= 0.0 {
            // A row has run dry while another still carries mass above tolerance.
            return Err(Error::NonConvergence { iterations: maps.len() });
        }
        for (i, &j) in image.iter().enumerate() {
            residual[i * n + j] -= weight;
        }
        let map = DeterministicMap { image };
        if let Some(pos) = maps.iter().position(|m| *m == map) {
            weights[pos] += weight;
        } else {
            maps.push(map);
            weights.push(weight);
        }
    }
    Ok(Decomposition { labels: LabelSet::new(n, maps)?, weights })
}

/// A finite-horizon sequence `P(1), …, P(T)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatrixSequence {
    horizon: usize,
    matrices: Vec<StochasticMatrix>,
    homogeneous: bool,
}

impl MatrixSequence {
    pub fn homogeneous(p: StochasticMatrix, horizon: usize) -> Self {
        MatrixSequence { horizon, matrices: vec![p], homogeneous: true }
    }

    pub fn inhomogeneous(matrices: Vec<StochasticMatrix>) -> Result<Self> {
        let n = matrices.first().ok_or(Error::EmptySequence)?.n();
        if let Some(m) = matrices.iter().find(|m| m.n() != n) {
            return Err(Error::DimensionMismatch { expected: n, found: m.n() });
        }
        Ok(MatrixSequence { horizon: matrices.len(), matrices, homogeneous: false })
    }

    pub fn n(&self) -> usize {
        self.matrices[0].n()
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn is_homogeneous(&self) -> bool {
        self.homogeneous
    }

    /// Distinct matrices as stored: one for a homogeneous sequence.
    pub fn matrices(&self) -> &[StochasticMatrix] {
        &self.matrices
    }

    /// `P(t)` for `1 ≤ t ≤ T`.
    pub fn at(&self, t: usize) -> Result<&StochasticMatrix> {
        if t == 0 || t > self.horizon {
            return Err(Error::HorizonExceeded { t, horizon: self.horizon });
        }
        Ok(if self.homogeneous { &self.matrices[0] } else { &self.matrices[t - 1] })
    }

    /// `f_t = P(1) ⋯ P(t) f`.
    pub fn evolve<T>(&self, t: usize, f: &[T]) -> Result<Vec<T>>
    where
        T: Copy + Default + Add<Output = T> + Mul<f64, Output = T>,
    {
        if t > self.horizon {
            return Err(Error::HorizonExceeded { t, horizon: self.horizon });
        }
        if f.len() != self.n() {
            return Err(Error::DimensionMismatch { expected: self.n(), found: f.len() });
        }
        let mut g = f.to_vec();
        for s in (1..=t).rev() {
            g = self.at(s)?.apply(&g)?;
        }
        Ok(g)
    }

    /// Row `k` of `P(1) ⋯ P(t)`: the law of `X_t` started at `k`.
    pub fn state_law(&self, k: usize, t: usize) -> Result<Vec<f64>> {
        let n = self.n();
        StateSpace::new(n)?.check(k)?;
        (0..n)
            .map(|j| {
                let mut f = vec![0.0; n];
                f[j] = 1.0;
                self.evolve(t, &f).map(|g| g[k])
            })
            .collect()
    }
}
