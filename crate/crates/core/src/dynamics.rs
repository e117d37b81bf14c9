//! The universal coupling on `E × G`, `G = E × L`, and the global dynamics it
//! generates on a cyclic environment window.
//!
//! On the block `j = 0` the coupling reads `φ(i, (0, ℓ)) = (β_ℓ(i), (i, ℓ))`:
//! the system jumps along `β_ℓ` and the environment symbol keeps a record of
//! the prior system state, which is what makes the block injective. The rest of
//! `E × G` is paired off with the remaining codomain points to make `φ` a
//! bijection.
//!
//! The environment is a window of `W` symbols. One step of the dynamics
//! couples the system with slot 0, then rotates the window left so that the
//! symbol produced by the coupling lands in the last slot.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::markov::{LabelSet, DEFAULT_LABEL_CAP};

/// One environment symbol `g = (j, ℓ)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct EnvSymbol {
    pub j: usize,
    pub label: usize,
}

impl EnvSymbol {
    pub fn new(j: usize, label: usize) -> Self {
        EnvSymbol { j, label }
    }

    /// The symbols that carry probability: `(0, ℓ)`.
    pub fn active(label: usize) -> Self {
        EnvSymbol { j: 0, label }
    }
}

/// A bijection on `E × G` stored as forward and backward lookup tables over
/// the linear index `(i·N + j)·|L| + ℓ`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Coupling {
    n: usize,
    labels: LabelSet,
    forward: Vec<usize>,
    backward: Vec<usize>,
}

impl Coupling {
    /// Builds the coupling over `labels`. Off the `j = 0` block, domain points
    /// in increasing index order are paired with the unused codomain points
    /// `(k, (i, ℓ))`, `k ≠ β_ℓ(i)`, also in increasing index order.
    pub fn build(labels: LabelSet) -> Coupling {
        Coupling::paired(labels, false)
    }

    /// As [`Coupling::build`] but with the unused codomain points taken in
    /// decreasing index order.
    pub fn build_reversed(labels: LabelSet) -> Coupling {
        Coupling::paired(labels, true)
    }

    fn paired(labels: LabelSet, reversed: bool) -> Coupling {
        let n = labels.n();
        let l = labels.len();
        let g = n * l;
        let size = n * g;
        let mut forward = vec![usize::MAX; size];
        let mut taken = vec![false; size];
        for i in 0..n {
            for label in 0..l {
                let to = labels.map(label).apply(i) * g + i * l + label;
                forward[i * g + label] = to;
                taken[to] = true;
            }
        }
        let mut free: Vec<usize> = (0..size).filter(|&p| !taken[p]).collect();
        if reversed {
            free.reverse();
        }
        let pending = (0..size).filter(|&p| (p % g) / l != 0);
        for (from, to) in pending.zip(free) {
            forward[from] = to;
        }
        let backward = invert(&forward).expect("completion pairs equal-sized sets");
        Coupling { n, labels, forward, backward }
    }

    /// The completion written out for two states and the four maps in code
    /// order: on `j = 1` the label is shifted by 2 when `i = 0` and by 1 when
    /// `i = 1`, modulo 4.
    pub fn two_state_shifted() -> Coupling {
        let labels = LabelSet::full(2, DEFAULT_LABEL_CAP).expect("4 labels");
        Coupling::from_fn(labels, |i, sym, labels| {
            let shift = match (sym.j, i) {
                (0, _) => 0,
                (_, 0) => 2,
                _ => 1,
            };
            let beta = labels.map((sym.label + shift) % 4);
            (beta.apply(i), EnvSymbol::new(i, sym.label))
        })
        .expect("bijective by construction")
    }

    /// Builds a coupling from an explicit rule and checks it is a bijection.
    pub fn from_fn<F>(labels: LabelSet, rule: F) -> Result<Coupling>
    where
        F: Fn(usize, EnvSymbol, &LabelSet) -> (usize, EnvSymbol),
    {
        let n = labels.n();
        let l = labels.len();
        let mut forward = Vec::with_capacity(n * n * l);
        for i in 0..n {
            for j in 0..n {
                for label in 0..l {
                    let (x, s) = rule(i, EnvSymbol::new(j, label), &labels);
                    if x >= n || s.j >= n {
                        return Err(Error::InvalidState { state: x.max(s.j), n });
                    }
                    if s.label >= l {
                        return Err(Error::InvalidLabel { label: s.label, size: l });
                    }
                    forward.push((x * n + s.j) * l + s.label);
                }
            }
        }
        let backward = invert(&forward)?;
        Ok(Coupling { n, labels, forward, backward })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn labels(&self) -> &LabelSet {
        &self.labels
    }

    /// `|G| = N·|L|`.
    pub fn symbol_count(&self) -> usize {
        self.n * self.labels.len()
    }

    /// `|E × G|`.
    pub fn point_count(&self) -> usize {
        self.forward.len()
    }

    pub fn symbol_index(&self, s: EnvSymbol) -> usize {
        s.j * self.labels.len() + s.label
    }

    pub fn symbol(&self, index: usize) -> EnvSymbol {
        let l = self.labels.len();
        EnvSymbol::new(index / l, index % l)
    }

    pub fn check_symbol(&self, s: EnvSymbol) -> Result<()> {
        if s.j >= self.n {
            return Err(Error::InvalidState { state: s.j, n: self.n });
        }
        if s.label >= self.labels.len() {
            return Err(Error::InvalidLabel { label: s.label, size: self.labels.len() });
        }
        Ok(())
    }

    pub fn point_index(&self, x: usize, s: EnvSymbol) -> usize {
        x * self.symbol_count() + self.symbol_index(s)
    }

    pub fn point(&self, index: usize) -> (usize, EnvSymbol) {
        let g = self.symbol_count();
        (index / g, self.symbol(index % g))
    }

    /// Forward table on linear indices.
    pub fn forward_table(&self) -> &[usize] {
        &self.forward
    }

    pub fn backward_table(&self) -> &[usize] {
        &self.backward
    }

    pub fn apply(&self, x: usize, s: EnvSymbol) -> (usize, EnvSymbol) {
        self.point(self.forward[self.point_index(x, s)])
    }

    pub fn apply_inverse(&self, x: usize, s: EnvSymbol) -> (usize, EnvSymbol) {
        self.point(self.backward[self.point_index(x, s)])
    }
}

fn invert(forward: &[usize]) -> Result<Vec<usize>> {
    let mut backward = vec![usize::MAX; forward.len()];
    for (from, &to) in forward.iter().enumerate() {
        if to >= forward.len() {
            return Err(Error::NotBijective(format!("point {from} maps outside the domain")));
        }
        if backward[to] != usize::MAX {
            return Err(Error::NotBijective(format!(
                "points {} and {from} share the image {to}",
                backward[to]
            )));
        }
        backward[to] = from;
    }
    Ok(backward)
}

/// A system state together with a window of `W` environment symbols.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct WindowedGlobalState {
    pub x: usize,
    pub window: Vec<EnvSymbol>,
}

impl WindowedGlobalState {
    pub fn new(x: usize, window: Vec<EnvSymbol>) -> Self {
        WindowedGlobalState { x, window }
    }
}

/// The observable data up to time `t`: the initial system state and the
/// environment symbols `Y_1, …, Y_t` that met the system.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ObservedHistory {
    pub x0: usize,
    pub inputs: Vec<EnvSymbol>,
}

impl ObservedHistory {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    /// System path `X_0, …, X_t` with `X_s` the system component of
    /// `φ(X_{s-1}, Y_s)`.
    pub fn system_path(&self, coupling: &Coupling) -> Vec<usize> {
        let mut path = Vec::with_capacity(self.inputs.len() + 1);
        path.push(self.x0);
        let mut x = self.x0;
        for &y in &self.inputs {
            x = coupling.apply(x, y).0;
            path.push(x);
        }
        path
    }
}

/// `α = θ ∘ φ_1` on `E × G^W`, with `θ` the cyclic left rotation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dynamics {
    coupling: Arc<Coupling>,
    window: usize,
}

impl Dynamics {
    pub fn new(coupling: Arc<Coupling>, window: usize) -> Result<Self> {
        if window == 0 {
            return Err(Error::WindowTooShort { window, horizon: 1 });
        }
        Ok(Dynamics { coupling, window })
    }

    pub fn coupling(&self) -> &Coupling {
        &self.coupling
    }

    pub fn shared_coupling(&self) -> Arc<Coupling> {
        Arc::clone(&self.coupling)
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn n(&self) -> usize {
        self.coupling.n()
    }

    pub fn check(&self, s: &WindowedGlobalState) -> Result<()> {
        if s.x >= self.n() {
            return Err(Error::InvalidState { state: s.x, n: self.n() });
        }
        if s.window.len() != self.window {
            return Err(Error::DimensionMismatch { expected: self.window, found: s.window.len() });
        }
        s.window.iter().try_for_each(|&g| self.coupling.check_symbol(g))
    }

    fn check_horizon(&self, t: usize) -> Result<()> {
        if t > self.window {
            Err(Error::HorizonExceedsWindow { t, window: self.window })
        } else {
            Ok(())
        }
    }

    pub fn step(&self, s: &WindowedGlobalState) -> WindowedGlobalState {
        let (x, produced) = self.coupling.apply(s.x, s.window[0]);
        let mut window = s.window.clone();
        window.rotate_left(1);
        window[self.window - 1] = produced;
        WindowedGlobalState { x, window }
    }

    pub fn step_inverse(&self, s: &WindowedGlobalState) -> WindowedGlobalState {
        let (x, consumed) = self.coupling.apply_inverse(s.x, s.window[self.window - 1]);
        let mut window = s.window.clone();
        window.rotate_right(1);
        window[0] = consumed;
        WindowedGlobalState { x, window }
    }

    /// `α^t` without the horizon check; used where wrap-around is intended.
    pub fn iterate(&self, s: &WindowedGlobalState, t: usize) -> WindowedGlobalState {
        (0..t).fold(s.clone(), |acc, _| self.step(&acc))
    }

    /// The orbit `s0, α(s0), …, α^t(s0)` for `t ≤ W`.
    pub fn trajectory(&self, s0: &WindowedGlobalState, t: usize) -> Result<Vec<WindowedGlobalState>> {
        self.check_horizon(t)?;
        let mut orbit = Vec::with_capacity(t + 1);
        orbit.push(s0.clone());
        for k in 0..t {
            let next = self.step(&orbit[k]);
            orbit.push(next);
        }
        Ok(orbit)
    }

    /// `φ̃_t = θ^{-t} ∘ α^t`.
    pub fn cocycle_map(&self, t: usize, s: &WindowedGlobalState) -> Result<WindowedGlobalState> {
        self.check_horizon(t)?;
        let mut out = self.iterate(s, t);
        out.window.rotate_right(t % self.window.max(1));
        Ok(out)
    }

    /// `φ̃_t = φ_t ∘ ⋯ ∘ φ_1`, where `φ_s` couples the system with slot `s`
    /// in place.
    pub fn cocycle_map_direct(&self, t: usize, s: &WindowedGlobalState) -> Result<WindowedGlobalState> {
        self.check_horizon(t)?;
        let mut out = s.clone();
        for slot in 0..t {
            let (x, g) = self.coupling.apply(out.x, out.window[slot]);
            out.x = x;
            out.window[slot] = g;
        }
        Ok(out)
    }

    /// `|E × G^W|`, or `None` on overflow.
    pub fn state_count(&self) -> Option<usize> {
        (self.coupling.symbol_count())
            .checked_pow(self.window as u32)
            .and_then(|c| c.checked_mul(self.n()))
    }

    /// Mixed-radix index with the system slowest and slot 0 next.
    pub fn state_index(&self, s: &WindowedGlobalState) -> usize {
        let g = self.coupling.symbol_count();
        s.window
            .iter()
            .fold(s.x, |acc, &sym| acc * g + self.coupling.symbol_index(sym))
    }

    pub fn state_at(&self, index: usize) -> WindowedGlobalState {
        let g = self.coupling.symbol_count();
        let mut window = vec![EnvSymbol::new(0, 0); self.window];
        let mut rest = index;
        for slot in window.iter_mut().rev() {
            *slot = self.coupling.symbol(rest % g);
            rest /= g;
        }
        WindowedGlobalState { x: rest, window }
    }

    /// Every state of `E × G^W`, in index order.
    pub fn states(&self) -> impl Iterator<Item = WindowedGlobalState> + '_ {
        (0..self.state_count().expect("state space fits in usize")).map(|i| self.state_at(i))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::markov::{sparse_decomposition, StochasticMatrix};

    fn full2() -> Coupling {
        Coupling::build(LabelSet::full(2, DEFAULT_LABEL_CAP).unwrap())
    }

    fn sparse2() -> Coupling {
        let p = StochasticMatrix::from_rows(&[[0.5, 0.5], [0.25, 0.75]]).unwrap();
        Coupling::build(sparse_decomposition(&p).unwrap().labels().clone())
    }

    #[test]
    fn first_block_matches_coupling_rule() {
        let c = full2();
        // label 2 is the swap
        assert_eq!(c.labels().map(2).image(), &[1, 0]);
        assert_eq!(c.apply(1, EnvSymbol::active(2)), (0, EnvSymbol::new(1, 2)));
        let id = c.labels().identity_label().unwrap();
        for i in 0..2 {
            assert_eq!(c.apply(i, EnvSymbol::active(id)), (i, EnvSymbol::new(i, id)));
        }
    }

    #[test]
    fn bijective_exhaustively() {
        for c in [full2(), sparse2(), Coupling::build(LabelSet::full(3, DEFAULT_LABEL_CAP).unwrap())] {
            for p in 0..c.point_count() {
                let (x, s) = c.point(p);
                let (y, t) = c.apply(x, s);
                assert_eq!(c.apply_inverse(y, t), (x, s));
            }
        }
        assert_eq!(full2().point_count(), 16);
    }

    #[test]
    fn reversed_completion_differs_off_block() {
        let labels = LabelSet::full(3, DEFAULT_LABEL_CAP).unwrap();
        let (a, b) = (Coupling::build(labels.clone()), Coupling::build_reversed(labels));
        for p in 0..b.point_count() {
            let (x, s) = b.point(p);
            assert_eq!(b.apply_inverse(b.apply(x, s).0, b.apply(x, s).1), (x, s));
            if s.j == 0 {
                assert_eq!(a.apply(x, s), b.apply(x, s));
            }
        }
        assert_ne!(a, b);
    }

    #[test]
    fn shifted_completion_values() {
        let c = Coupling::two_state_shifted();
        // φ(1,(2,1)) = (2,(1,1)) and φ(2,(2,1)) = (2,(2,1)), in 0-based form
        assert_eq!(c.apply(0, EnvSymbol::new(1, 0)), (1, EnvSymbol::new(0, 0)));
        assert_eq!(c.apply(1, EnvSymbol::new(1, 0)), (1, EnvSymbol::new(1, 0)));
        let built = full2();
        for i in 0..2 {
            for l in 0..4 {
                assert_eq!(c.apply(i, EnvSymbol::active(l)), built.apply(i, EnvSymbol::active(l)));
            }
        }
        assert_ne!(c, built);
    }

    #[test]
    fn from_fn_rejects_non_bijection() {
        let labels = LabelSet::full(2, DEFAULT_LABEL_CAP).unwrap();
        let err = Coupling::from_fn(labels, |_, _, _| (0, EnvSymbol::new(0, 0))).unwrap_err();
        assert!(matches!(err, Error::NotBijective(_)));
    }

    #[test]
    fn deterministic_fixture_step() {
        let c = Arc::new(full2());
        let d = Dynamics::new(c, 4).unwrap();
        let bar = 2; // swap
        for k in 0..2 {
            let s = WindowedGlobalState::new(k, vec![EnvSymbol::active(bar); 4]);
            let next = d.step(&s);
            assert_eq!(next.x, 1 - k);
            assert_eq!(next.window[3], EnvSymbol::new(k, bar));
            assert_eq!(d.step_inverse(&next), s);
        }
    }

    #[test]
    fn identity_symbols_freeze_the_system() {
        let c = Arc::new(full2());
        let id = c.labels().identity_label().unwrap();
        let d = Dynamics::new(c, 5).unwrap();
        let s = WindowedGlobalState::new(1, vec![EnvSymbol::active(id); 5]);
        let orbit = d.trajectory(&s, 5).unwrap();
        assert!(orbit.iter().all(|z| z.x == 1));
        assert_eq!(d.trajectory(&s, 6), Err(Error::HorizonExceedsWindow { t: 6, window: 5 }));
        assert_eq!(d.trajectory(&s, 0).unwrap(), vec![s]);
    }

    #[test]
    fn step_is_bijective_on_small_window() {
        let d = Dynamics::new(Arc::new(sparse2()), 2).unwrap();
        assert_eq!(d.state_count(), Some(72));
        let mut seen = [false; 72];
        for s in d.states() {
            let next = d.step(&s);
            assert_eq!(d.step_inverse(&next), s);
            let idx = d.state_index(&next);
            assert!(!seen[idx]);
            seen[idx] = true;
        }
    }

    #[test]
    fn state_index_round_trip() {
        let d = Dynamics::new(Arc::new(sparse2()), 3).unwrap();
        for i in (0..d.state_count().unwrap()).step_by(7) {
            assert_eq!(d.state_index(&d.state_at(i)), i);
        }
    }

    #[test]
    fn cocycle_one_step_touches_slot_zero_only() {
        let d = Dynamics::new(Arc::new(sparse2()), 3).unwrap();
        for s in d.states() {
            let out = d.cocycle_map(1, &s).unwrap();
            let (x, g) = d.coupling().apply(s.x, s.window[0]);
            assert_eq!(out.x, x);
            assert_eq!(out.window[0], g);
            assert_eq!(&out.window[1..], &s.window[1..]);
        }
    }

    #[test]
    fn history_replay_matches_trajectory() {
        let c = Arc::new(full2());
        let d = Dynamics::new(Arc::clone(&c), 3).unwrap();
        let inputs = vec![EnvSymbol::active(2), EnvSymbol::active(0), EnvSymbol::active(3)];
        let h = ObservedHistory { x0: 1, inputs: inputs.clone() };
        let orbit = d.trajectory(&WindowedGlobalState::new(1, inputs), 3).unwrap();
        let xs: Vec<_> = orbit.iter().map(|s| s.x).collect();
        assert_eq!(h.system_path(&c), xs);
        assert_eq!(xs, vec![1, 0, 0, 1]);
    }
}
