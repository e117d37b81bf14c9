//! Product laws on the environment window and the Markov chain they induce.
//!
//! A sequence `P(1), …, P(T)` is realised on a fixed [`Dynamics`] by choosing
//! the initial law of the window: slot `t-1` carries `δ_0 ⊗ q(t)` where `q(t)`
//! decomposes `P(t)`, and the slots after the horizon carry an arbitrary law
//! that never meets the system. Everything here is computed either by exact
//! enumeration of the (finite) support or by seeded sampling.

use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use std::sync::Arc;

use crate::dynamics::{Coupling, Dynamics, EnvSymbol, ObservedHistory, WindowedGlobalState};
use crate::error::{Error, Result};
use crate::markov::{
    canonical_decomposition, sparse_decomposition, Decomposition, DeterministicMap, LabelSet,
    MatrixSequence, StochasticMatrix, ROW_TOLERANCE,
};
use crate::report::CheckReport;

/// Default cap on the number of enumerated window assignments.
pub const DEFAULT_SUPPORT_CAP: u128 = 10_000_000;

/// Tolerance for distributions and conditionals obtained by enumeration.
pub const MARKOV_TOLERANCE: f64 = 1e-10;

/// Tolerance for the flow recursion, an identity between 0/1-valued sums.
pub const FLOW_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Decomposer {
    Canonical,
    Sparse,
}

impl Decomposer {
    pub fn decompose(self, p: &StochasticMatrix, label_cap: u128) -> Result<Decomposition> {
        match self {
            Decomposer::Canonical => canonical_decomposition(p, label_cap),
            Decomposer::Sparse => sparse_decomposition(p),
        }
    }
}

/// Which maps label the environment symbols.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelScope {
    /// All `N^N` maps; the dynamics is then the same for every sequence.
    Full,
    /// Only maps with positive weight at some time step.
    Support,
}

/// A law on `G = E × L`, indexed like [`Coupling::symbol_index`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SymbolLaw {
    n: usize,
    label_count: usize,
    weights: Vec<f64>,
}

impl SymbolLaw {
    pub fn new(n: usize, label_count: usize, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != n * label_count {
            return Err(Error::DimensionMismatch { expected: n * label_count, found: weights.len() });
        }
        if weights.iter().any(|&w| w.is_nan() || w < 0.0) {
            return Err(Error::InvalidLaw("negative symbol weight".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > ROW_TOLERANCE {
            return Err(Error::InvalidLaw(format!("symbol weights sum to {total}")));
        }
        Ok(SymbolLaw { n, label_count, weights })
    }

    /// `δ_0 ⊗ q`: all mass on symbols `(0, ℓ)`.
    pub fn from_label_weights(n: usize, q: &[f64]) -> Result<Self> {
        let mut weights = vec![0.0; n * q.len()];
        weights[..q.len()].copy_from_slice(q);
        SymbolLaw::new(n, q.len(), weights)
    }

    pub fn point_mass(n: usize, label_count: usize, at: EnvSymbol) -> Result<Self> {
        let mut weights = vec![0.0; n * label_count];
        let idx = at.j * label_count + at.label;
        if at.j >= n || at.label >= label_count {
            return Err(Error::InvalidLabel { label: at.label, size: label_count });
        }
        weights[idx] = 1.0;
        SymbolLaw::new(n, label_count, weights)
    }

    pub fn prob(&self, s: EnvSymbol) -> f64 {
        self.weights[s.j * self.label_count + s.label]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn label_count(&self) -> usize {
        self.label_count
    }

    /// Symbols with positive probability, in index order.
    pub fn support(&self) -> Vec<(EnvSymbol, f64)> {
        self.weights
            .iter()
            .enumerate()
            .filter(|(_, &w)| w > 0.0)
            .map(|(i, &w)| (EnvSymbol::new(i / self.label_count, i % self.label_count), w))
            .collect()
    }

    fn fits(&self, coupling: &Coupling) -> bool {
        self.n == coupling.n() && self.label_count == coupling.labels().len()
    }
}

/// Independent laws for the `W` window slots.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnvProductLaw {
    horizon: usize,
    slots: Vec<SymbolLaw>,
}

impl EnvProductLaw {
    pub fn new(horizon: usize, slots: Vec<SymbolLaw>) -> Result<Self> {
        if slots.len() < horizon || slots.is_empty() {
            return Err(Error::WindowTooShort { window: slots.len(), horizon });
        }
        Ok(EnvProductLaw { horizon, slots })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn window(&self) -> usize {
        self.slots.len()
    }

    pub fn slots(&self) -> &[SymbolLaw] {
        &self.slots
    }

    pub fn slot(&self, s: usize) -> &SymbolLaw {
        &self.slots[s]
    }

    pub fn prob(&self, window: &[EnvSymbol]) -> f64 {
        window.iter().zip(&self.slots).map(|(&g, law)| law.prob(g)).product()
    }
}

/// `δ_k ⊗ Q`: the system starts at `k`, the window is drawn from `env`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DilationMeasure {
    pub k: usize,
    pub env: EnvProductLaw,
}

/// Law of the system state at time `t`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathDistribution {
    pub t: usize,
    pub probs: Vec<f64>,
}

impl PathDistribution {
    pub fn max_abs_diff(&self, other: &[f64]) -> f64 {
        self.probs.iter().zip(other).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasureOptions {
    pub decomposer: Decomposer,
    pub window: usize,
    pub scope: LabelScope,
    /// Law for the slots past the horizon; defaults to a point mass.
    pub past_law: Option<SymbolLaw>,
    pub label_cap: u128,
}

impl MeasureOptions {
    pub fn new(decomposer: Decomposer, window: usize) -> Self {
        MeasureOptions {
            decomposer,
            window,
            scope: match decomposer {
                Decomposer::Canonical => LabelScope::Full,
                Decomposer::Sparse => LabelScope::Support,
            },
            past_law: None,
            label_cap: crate::markov::DEFAULT_LABEL_CAP,
        }
    }
}

/// Label set used to couple with the environment for `seq`.
pub fn label_set_for(
    seq: &MatrixSequence,
    decomposer: Decomposer,
    scope: LabelScope,
    label_cap: u128,
) -> Result<LabelSet> {
    match scope {
        LabelScope::Full => LabelSet::full(seq.n(), label_cap),
        LabelScope::Support => {
            let mut maps: Vec<DeterministicMap> = Vec::new();
            for p in seq.matrices() {
                let d = decomposer.decompose(p, label_cap)?;
                maps.extend(d.terms().filter(|(w, _)| *w > 0.0).map(|(_, m)| m.clone()));
            }
            maps.sort_by_key(|m| m.code());
            maps.dedup();
            LabelSet::new(seq.n(), maps)
        }
    }
}

/// Builds the coupling, the dynamics and the measure realising `seq` from `k`.
pub fn build_measure(
    seq: &MatrixSequence,
    k: usize,
    opts: &MeasureOptions,
) -> Result<(DilationMeasure, Dynamics)> {
    if opts.window < seq.horizon() {
        return Err(Error::WindowTooShort { window: opts.window, horizon: seq.horizon() });
    }
    let labels = label_set_for(seq, opts.decomposer, opts.scope, opts.label_cap)?;
    let dynamics = Dynamics::new(Arc::new(Coupling::build(labels)), opts.window)?;
    let measure = measure_on(&dynamics, seq, k, opts)?;
    Ok((measure, dynamics))
}

/// The measure realising `seq` on an existing dynamics. Only the window law
/// depends on `seq`.
pub fn measure_on(
    dynamics: &Dynamics,
    seq: &MatrixSequence,
    k: usize,
    opts: &MeasureOptions,
) -> Result<DilationMeasure> {
    let coupling = dynamics.coupling();
    let n = coupling.n();
    if seq.n() != n {
        return Err(Error::DimensionMismatch { expected: n, found: seq.n() });
    }
    if k >= n {
        return Err(Error::InvalidState { state: k, n });
    }
    let window = dynamics.window();
    if window < seq.horizon() {
        return Err(Error::WindowTooShort { window, horizon: seq.horizon() });
    }
    let labels = coupling.labels();
    let mut slots = Vec::with_capacity(window);
    for t in 1..=seq.horizon() {
        let q = opts.decomposer.decompose(seq.at(t)?, opts.label_cap)?.reindex(labels)?;
        slots.push(SymbolLaw::from_label_weights(n, q.weights())?);
    }
    let past = match &opts.past_law {
        Some(law) if law.fits(coupling) => law.clone(),
        Some(_) => return Err(Error::InvalidLaw("past-slot law does not match the coupling".into())),
        None => default_past_law(coupling)?,
    };
    slots.resize(window, past);
    Ok(DilationMeasure { k, env: EnvProductLaw::new(seq.horizon(), slots)? })
}

/// Point mass on `(0, identity)`, or on `(0, first label)` if the identity is
/// not a label.
pub fn default_past_law(coupling: &Coupling) -> Result<SymbolLaw> {
    let labels = coupling.labels();
    let label = labels.identity_label().unwrap_or(0);
    SymbolLaw::point_mass(coupling.n(), labels.len(), EnvSymbol::active(label))
}

fn check_fit(m: &DilationMeasure, d: &Dynamics, t: usize) -> Result<()> {
    if t > d.window() {
        return Err(Error::HorizonExceedsWindow { t, window: d.window() });
    }
    if m.env.window() != d.window() {
        return Err(Error::DimensionMismatch { expected: d.window(), found: m.env.window() });
    }
    if m.env.slots.iter().any(|law| !law.fits(d.coupling())) {
        return Err(Error::InvalidLaw("slot law does not match the coupling".into()));
    }
    if m.k >= d.n() {
        return Err(Error::InvalidState { state: m.k, n: d.n() });
    }
    Ok(())
}

/// Calls `visit` on every assignment of positive probability to the first
/// `slots` window slots; the remaining slots hold a fixed support point.
fn for_each_assignment<F>(env: &EnvProductLaw, slots: usize, cap: u128, mut visit: F) -> Result<()>
where
    F: FnMut(&[EnvSymbol], f64),
{
    let supports: Vec<Vec<(EnvSymbol, f64)>> = env.slots.iter().map(SymbolLaw::support).collect();
    let count = supports[..slots]
        .iter()
        .try_fold(1u128, |acc, s| acc.checked_mul(s.len() as u128))
        .unwrap_or(u128::MAX);
    if count > cap {
        return Err(Error::SupportExplosion { count, cap });
    }
    let mut window: Vec<EnvSymbol> = supports.iter().map(|s| s[0].0).collect();
    let mut digits = vec![0usize; slots];
    loop {
        let mut p = 1.0;
        for (slot, &d) in digits.iter().enumerate() {
            let (g, w) = supports[slot][d];
            window[slot] = g;
            p *= w;
        }
        visit(&window, p);
        // odometer, last slot fastest
        let mut pos = slots;
        loop {
            if pos == 0 {
                return Ok(());
            }
            pos -= 1;
            digits[pos] += 1;
            if digits[pos] < supports[pos].len() {
                break;
            }
            digits[pos] = 0;
        }
    }
}

/// Law of `X_t` under `m`, by pushing every window assignment through `α^t`.
pub fn exact_state_distribution(
    m: &DilationMeasure,
    d: &Dynamics,
    t: usize,
    cap: u128,
) -> Result<PathDistribution> {
    check_fit(m, d, t)?;
    let mut probs = vec![0.0; d.n()];
    for_each_assignment(&m.env, t, cap, |window, p| {
        let z = d.iterate(&WindowedGlobalState::new(m.k, window.to_vec()), t);
        probs[z.x] += p;
    })?;
    Ok(PathDistribution { t, probs })
}

/// `E[F(Z_0)]` over the full window law.
pub fn expectation<F>(m: &DilationMeasure, d: &Dynamics, cap: u128, f: F) -> Result<f64>
where
    F: Fn(&WindowedGlobalState) -> f64,
{
    check_fit(m, d, 0)?;
    let mut total = 0.0;
    for_each_assignment(&m.env, m.env.window(), cap, |window, p| {
        total += p * f(&WindowedGlobalState::new(m.k, window.to_vec()));
    })?;
    Ok(total)
}

/// Positive-probability histories `(X_0 = k, Y_1, …, Y_t)` with their
/// probabilities.
pub fn histories(m: &DilationMeasure, d: &Dynamics, t: usize, cap: u128) -> Result<Vec<(ObservedHistory, f64)>> {
    check_fit(m, d, t)?;
    let mut out = Vec::new();
    for_each_assignment(&m.env, t, cap, |window, p| {
        out.push((ObservedHistory { x0: m.k, inputs: window[..t].to_vec() }, p));
    })?;
    Ok(out)
}

/// Checks `P(X_{t+1} = j | X_0, Y_1, …, Y_t) = p_{X_t j}(t+1)` for every
/// positive-probability history and `t < horizon`. Conditionals are ratios of
/// joint probabilities obtained by enumeration.
pub fn verify_markov_property(
    m: &DilationMeasure,
    d: &Dynamics,
    seq: &MatrixSequence,
    horizon: usize,
    cap: u128,
) -> Result<CheckReport> {
    check_fit(m, d, horizon)?;
    if horizon > seq.horizon() {
        return Err(Error::HorizonExceeded { t: horizon, horizon: seq.horizon() });
    }
    let n = d.n();
    let mut report = CheckReport::new(MARKOV_TOLERANCE);
    for t in 0..horizon {
        let next = m.env.slot(t).support();
        let p_next = seq.at(t + 1)?;
        for (history, _) in histories(m, d, t, cap)? {
            let mut window: Vec<EnvSymbol> = m.env.slots.iter().map(|l| l.support()[0].0).collect();
            window[..t].copy_from_slice(&history.inputs);
            let x_t = d.iterate(&WindowedGlobalState::new(m.k, window.clone()), t).x;
            let prefix = m.env.prob(&window[..t]);
            let mut joint = vec![0.0; n];
            for &(g, w) in &next {
                window[t] = g;
                let x_next = d.iterate(&WindowedGlobalState::new(m.k, window.clone()), t + 1).x;
                joint[x_next] += prefix * w;
            }
            let marginal: f64 = joint.iter().sum();
            for (j, &pj) in joint.iter().enumerate() {
                report.record((pj / marginal - p_next.get(x_t, j)).abs());
            }
            report.checked += 1;
        }
    }
    Ok(report.finish())
}

/// Checks `j_t[f] = Σ_g j_{t-1}[E_g[f∘φ]] · I(Y_t = g)` pointwise on every
/// positive-probability history, for the state indicators and the constant.
/// The left side is `f(X_t)` with `X_t` read off `α^t`; the right side unwinds
/// the recursion down to `j_0[h] = h(X_0)`.
pub fn flow_equation_check(m: &DilationMeasure, d: &Dynamics, t: usize, cap: u128) -> Result<CheckReport> {
    check_fit(m, d, t)?;
    let n = d.n();
    let coupling = d.coupling();
    let mut observables: Vec<Vec<f64>> = (0..n)
        .map(|k| (0..n).map(|i| if i == k { 1.0 } else { 0.0 }).collect())
        .collect();
    observables.push(vec![1.0; n]);

    let mut report = CheckReport::new(FLOW_TOLERANCE);
    for_each_assignment(&m.env, t, cap, |window, _| {
        let z = d.iterate(&WindowedGlobalState::new(m.k, window.to_vec()), t);
        for f in &observables {
            let lhs = f[z.x];
            let rhs = flow(coupling, m.k, &window[..t], f);
            report.record((lhs - rhs).abs());
        }
        report.checked += 1;
    })?;
    Ok(report.finish())
}

fn flow(coupling: &Coupling, x0: usize, inputs: &[EnvSymbol], f: &[f64]) -> f64 {
    let Some((&last, earlier)) = inputs.split_last() else {
        return f[x0];
    };
    let n = coupling.n();
    let mut total = 0.0;
    for gi in 0..coupling.symbol_count() {
        let g = coupling.symbol(gi);
        let indicator = if g == last { 1.0 } else { 0.0 };
        if indicator == 0.0 {
            continue;
        }
        let pulled: Vec<f64> = (0..n).map(|i| f[coupling.apply(i, g).0]).collect();
        total += flow(coupling, x0, earlier, &pulled) * indicator;
    }
    total
}

/// Empirical law of `X_t` over independent replicas.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Simulation {
    pub replicas: u64,
    pub counts: Vec<u64>,
    pub distribution: PathDistribution,
    /// System paths `X_0, …, X_t` per replica, when requested.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub paths: Option<Vec<Vec<usize>>>,
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-replica seed: `splitmix64(splitmix64(seed) + replica)`.
pub fn replica_seed(seed: u64, replica: u64) -> u64 {
    splitmix64(splitmix64(seed).wrapping_add(replica))
}

/// Draws each window independently from `m` and runs the dynamics for `t`
/// steps. Replicas run in parallel; each has its own generator seeded by
/// [`replica_seed`], so the result does not depend on scheduling.
pub fn simulate(
    m: &DilationMeasure,
    d: &Dynamics,
    t: usize,
    replicas: u64,
    seed: u64,
    keep_paths: bool,
) -> Result<Simulation> {
    check_fit(m, d, t)?;
    let samplers: Vec<(Vec<EnvSymbol>, WeightedIndex<f64>)> = m
        .env
        .slots
        .iter()
        .map(|law| {
            let (symbols, weights): (Vec<_>, Vec<_>) = law.support().into_iter().unzip();
            let dist = WeightedIndex::new(weights).map_err(|e| Error::InvalidLaw(e.to_string()))?;
            Ok((symbols, dist))
        })
        .collect::<Result<_>>()?;

    let run = |r: u64| -> Vec<usize> {
        let mut rng = ChaCha8Rng::seed_from_u64(replica_seed(seed, r));
        let window = samplers.iter().map(|(sym, dist)| sym[dist.sample(&mut rng)]).collect();
        let mut z = WindowedGlobalState::new(m.k, window);
        let mut path = Vec::with_capacity(t + 1);
        path.push(z.x);
        for _ in 0..t {
            z = d.step(&z);
            path.push(z.x);
        }
        path
    };

    let n = d.n();
    let (counts, paths) = if keep_paths {
        let paths: Vec<Vec<usize>> = (0..replicas).into_par_iter().map(run).collect();
        let mut counts = vec![0u64; n];
        for p in &paths {
            counts[p[t]] += 1;
        }
        (counts, Some(paths))
    } else {
        let counts = (0..replicas)
            .into_par_iter()
            .fold(
                || vec![0u64; n],
                |mut acc, r| {
                    acc[run(r)[t]] += 1;
                    acc
                },
            )
            .reduce(|| vec![0u64; n], |a, b| a.iter().zip(&b).map(|(x, y)| x + y).collect());
        (counts, None)
    };
    let probs = counts.iter().map(|&c| c as f64 / replicas.max(1) as f64).collect();
    Ok(Simulation { replicas, counts, distribution: PathDistribution { t, probs }, paths })
}
