//! The unitary `V` induced by the classical coupling, the cyclic shift `Θ` on
//! a window of `W` environment slots, `U = Θ V_1`, and the checks that these
//! dilate the Kraus map `T` and extend the classical dynamics.

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{conditional_expectation, embed_diagonal, ComplexOperator, DensityState, KrausMap, PureEnvVector, C64, ONE, ZERO};
use crate::dynamics::{Coupling, Dynamics, EnvSymbol, WindowedGlobalState};
use crate::error::{Error, Result};
use crate::markov::{Decomposition, MatrixSequence, StochasticMatrix};
use crate::report::CheckReport;
use crate::sample::{self, DilationMeasure, EnvProductLaw, SymbolLaw};

/// Tolerance for the operator identities, in the max-entry norm.
pub const QUANTUM_TOLERANCE: f64 = 1e-10;

/// Tolerance for unitarity and for identities between exact 0/1 matrices.
const EXACT_TOLERANCE: f64 = 1e-12;

/// Largest Hilbert-space dimension for which dense operators are formed.
pub const DEFAULT_DIM_CAP: usize = 1024;

fn guard(dim: Option<usize>, cap: usize) -> Result<usize> {
    match dim {
        Some(d) if d <= cap => Ok(d),
        Some(d) => Err(Error::SizeGuardExceeded { size: d as u128, cap: cap as u128 }),
        None => Err(Error::SizeGuardExceeded { size: u128::MAX, cap: cap as u128 }),
    }
}

fn permutation(dim: usize, factors: Vec<usize>, image: impl Fn(usize) -> usize) -> ComplexOperator {
    let mut m = DMatrix::zeros(dim, dim);
    for b in 0..dim {
        m[(image(b), b)] = ONE;
    }
    ComplexOperator::from_parts(m, factors)
}

/// `V = Σ |φ(i,(j,ℓ))⟩⟨i,j,ℓ|` on `C^N ⊗ C^{N·|L|}`.
pub fn build_v(coupling: &Coupling) -> ComplexOperator {
    let fwd = coupling.forward_table();
    permutation(fwd.len(), vec![coupling.n(), coupling.symbol_count()], |b| fwd[b])
}

/// `Θ` on `C^N ⊗ (C^z)^{⊗w}`: slot `s` receives the content of slot `s+1`,
/// the last slot that of slot 0.
pub fn shift_operator(n: usize, z: usize, w: usize) -> ComplexOperator {
    let env = z.pow(w as u32);
    let top = z.pow(w.saturating_sub(1) as u32);
    permutation(n * env, factors(n, z, w), |b| {
        let (i, e) = (b / env, b % env);
        let first = e / top;
        let rest = e % top;
        i * env + rest * z + first
    })
}

fn factors(n: usize, z: usize, w: usize) -> Vec<usize> {
    let mut f = vec![n];
    f.extend(std::iter::repeat_n(z, w));
    f
}

/// `v` (an operator on system ⊗ one slot) acting on system ⊗ slot `slot` of
/// `C^N ⊗ (C^z)^{⊗w}`, identity elsewhere.
fn on_slot(v: &ComplexOperator, n: usize, z: usize, w: usize, slot: usize) -> ComplexOperator {
    let env = z.pow(w as u32);
    let stride = z.pow((w - 1 - slot) as u32);
    let dim = n * env;
    let vm = v.matrix();
    let mut m = DMatrix::zeros(dim, dim);
    for col in 0..dim {
        let (i, e) = (col / env, col % env);
        let zs = (e / stride) % z;
        let base = e - zs * stride;
        let local_col = i * z + zs;
        for local_row in 0..n * z {
            let val = vm[(local_row, local_col)];
            if val != ZERO {
                let (i2, zs2) = (local_row / z, local_row % z);
                m[(i2 * env + base + zs2 * stride, col)] = val;
            }
        }
    }
    ComplexOperator::from_parts(m, factors(n, z, w))
}

fn lift(a: &ComplexOperator, z: usize, w: usize) -> ComplexOperator {
    a.kron(&ComplexOperator::identity(vec![z; w]))
}

fn conjugate(u: &ComplexOperator, a: &ComplexOperator) -> ComplexOperator {
    ComplexOperator::from_parts(u.matrix().adjoint() * a.matrix() * u.matrix(), a.factors().to_vec())
}

fn unitarity_deviation(u: &ComplexOperator) -> f64 {
    let id = DMatrix::<C64>::identity(u.dim(), u.dim());
    let a = (u.matrix().adjoint() * u.matrix() - &id).iter().map(|z| z.norm()).fold(0.0, f64::max);
    let b = (u.matrix() * u.matrix().adjoint() - &id).iter().map(|z| z.norm()).fold(0.0, f64::max);
    a.max(b)
}

fn operator_basis(n: usize) -> impl Iterator<Item = ComplexOperator> {
    (0..n * n).map(move |k| ComplexOperator::matrix_unit(n, k / n, k % n))
}

/// `j_t[a] = Ṽ_t* (a ⊗ 1) Ṽ_t` with `Ṽ_t = V_t ⋯ V_1`.
pub fn flow_by_unitaries(v: &ComplexOperator, n: usize, t: usize, a: &ComplexOperator) -> ComplexOperator {
    if t == 0 {
        return a.clone();
    }
    let z = v.dim() / n;
    let mut vt = on_slot(v, n, z, t, 0);
    for slot in 1..t {
        vt = on_slot(v, n, z, t, slot).mul(&vt).expect("same dimension");
    }
    conjugate(&vt, &lift(a, z, t))
}

/// `j_t[a] = Σ_{z,z'} j_{t-1}[E_{|z⟩⟨z'|}[V*(a⊗1)V]] ⊗ |z'⟩⟨z|`, `j_0 = id`.
pub fn flow_by_recursion(v: &ComplexOperator, n: usize, t: usize, a: &ComplexOperator) -> Result<ComplexOperator> {
    if t == 0 {
        return Ok(a.clone());
    }
    let z = v.dim() / n;
    let nu = conjugate(v, &lift(a, z, 1));
    let dim = n * z.pow(t as u32);
    let mut sum = DMatrix::<C64>::zeros(dim, dim);
    for zi in 0..z {
        for zj in 0..z {
            let block = conditional_expectation(&nu, &ComplexOperator::matrix_unit(z, zi, zj))?;
            if block.matrix().iter().all(|&x| x == ZERO) {
                continue;
            }
            let inner = flow_by_recursion(v, n, t - 1, &block)?;
            sum += inner.kron(&ComplexOperator::matrix_unit(z, zj, zi)).matrix();
        }
    }
    Ok(ComplexOperator::from_parts(sum, factors(n, z, t)))
}

/// `max_a ‖E_{|φ⟩⟨φ|}[V*(a⊗1)V] − T[a]‖_max` over the matrix units `a`.
pub fn one_step_dilation_check(t: &KrausMap, v: &ComplexOperator, phi: &PureEnvVector) -> Result<CheckReport> {
    let n = t.n();
    if v.dim() != n * phi.dim() {
        return Err(Error::DimensionMismatch { expected: n * phi.dim(), found: v.dim() });
    }
    let sigma = phi.state(1);
    let mut report = CheckReport::new(QUANTUM_TOLERANCE).with_dims(vec![n, phi.dim()]);
    for a in operator_basis(n) {
        let lhs = conditional_expectation(&conjugate(v, &lift(&a, phi.dim(), 1)), &sigma)?;
        report.record(lhs.max_abs_diff(&t.apply(&a)?));
        report.checked += 1;
    }
    Ok(report.finish())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QsfReport {
    /// Recursion against `Ṽ_t* (a⊗1) Ṽ_t`.
    pub recursion: CheckReport,
    /// `E_{φ^{⊗t}}[j_t[a]]` against `T^t[a]`.
    pub expectation: CheckReport,
}

impl QsfReport {
    pub fn pass(&self) -> bool {
        self.recursion.pass && self.expectation.pass
    }
}

pub fn qsf_check(t: &KrausMap, v: &ComplexOperator, phi: &PureEnvVector, t_max: usize, dim_cap: usize) -> Result<QsfReport> {
    let n = t.n();
    let z = phi.dim();
    let dim = guard(z.checked_pow(t_max as u32).and_then(|e| e.checked_mul(n)), dim_cap)?;
    let mut recursion = CheckReport::new(QUANTUM_TOLERANCE).with_dims(vec![n, z, dim]);
    let mut expectation = CheckReport::new(QUANTUM_TOLERANCE).with_dims(vec![n, z, dim]);
    for step in 1..=t_max {
        let sigma = phi.state(step);
        for a in operator_basis(n) {
            let direct = flow_by_unitaries(v, n, step, &a);
            let recursive = flow_by_recursion(v, n, step, &a)?;
            recursion.record(direct.max_abs_diff(&recursive));
            recursion.checked += 1;
            let averaged = conditional_expectation(&direct, &sigma)?;
            expectation.record(averaged.max_abs_diff(&t.apply_power(&a, step)?));
            expectation.checked += 1;
        }
    }
    Ok(QsfReport { recursion: recursion.finish(), expectation: expectation.finish() })
}

/// The quantum objects built on one classical coupling: `T`, `V`, `φ`, the
/// window shift `Θ` and `U = Θ V_1`.
#[derive(Debug, Clone)]
pub struct QuantumDilation {
    coupling: Arc<Coupling>,
    weights: Vec<f64>,
    t: KrausMap,
    v: ComplexOperator,
    phi: PureEnvVector,
    window: usize,
    theta: ComplexOperator,
    u: ComplexOperator,
}

impl QuantumDilation {
    /// `dec` may be over any label set whose support is contained in the
    /// coupling's labels.
    pub fn new(
        p: &StochasticMatrix,
        dec: &Decomposition,
        coupling: Arc<Coupling>,
        window: usize,
        dim_cap: usize,
    ) -> Result<Self> {
        let n = coupling.n();
        if p.n() != n {
            return Err(Error::DimensionMismatch { expected: n, found: p.n() });
        }
        if window == 0 {
            return Err(Error::WindowTooShort { window, horizon: 1 });
        }
        let z = coupling.symbol_count();
        guard(z.checked_pow(window as u32).and_then(|e| e.checked_mul(n)), dim_cap)?;
        let dec = dec.reindex(coupling.labels())?;
        let t = KrausMap::from_decomposition(p, &dec)?;
        let v = build_v(&coupling);
        let phi = PureEnvVector::from_label_weights(n, dec.weights())?;
        let theta = shift_operator(n, z, window);
        let u = theta.mul(&on_slot(&v, n, z, window, 0))?;
        Ok(QuantumDilation { coupling, weights: dec.weights().to_vec(), t, v, phi, window, theta, u })
    }

    pub fn n(&self) -> usize {
        self.coupling.n()
    }

    pub fn slot_dim(&self) -> usize {
        self.coupling.symbol_count()
    }

    pub fn dim(&self) -> usize {
        self.u.dim()
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn kraus(&self) -> &KrausMap {
        &self.t
    }

    pub fn v(&self) -> &ComplexOperator {
        &self.v
    }

    pub fn phi(&self) -> &PureEnvVector {
        &self.phi
    }

    pub fn theta(&self) -> &ComplexOperator {
        &self.theta
    }

    pub fn u(&self) -> &ComplexOperator {
        &self.u
    }

    pub fn coupling(&self) -> &Coupling {
        &self.coupling
    }

    /// Label weights over the coupling's labels.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// The classical dynamics on the same coupling and window.
    pub fn dynamics(&self) -> Dynamics {
        Dynamics::new(Arc::clone(&self.coupling), self.window).expect("window checked")
    }

    /// The classical window law `⊗ (δ_0 ⊗ q)` started at `k`.
    pub fn classical_measure(&self, k: usize) -> Result<DilationMeasure> {
        let law = SymbolLaw::from_label_weights(self.n(), &self.weights)?;
        Ok(DilationMeasure { k, env: EnvProductLaw::new(self.window, vec![law; self.window])? })
    }

    pub fn u_power(&self, t: usize) -> ComplexOperator {
        (0..t).fold(ComplexOperator::identity(self.u.factors().to_vec()), |acc, _| {
            self.u.mul(&acc).expect("same dimension")
        })
    }

    /// `U*^t (a ⊗ 1) U^t`.
    pub fn evolve(&self, t: usize, a: &ComplexOperator) -> ComplexOperator {
        conjugate(&self.u_power(t), &lift(a, self.slot_dim(), self.window))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupDilationReport {
    /// `V`, `Θ`, `U` unitary.
    pub unitarity: CheckReport,
    /// `E_Ψ[U*^t (a⊗1) U^t] = T^t[a]` for `1 ≤ t ≤ W`.
    pub dilation: CheckReport,
    /// `U*^t (a⊗1) U^t = j_t[a] ⊗ 1` with `j_t` from `Ṽ_t`.
    pub flow_agreement: CheckReport,
    /// `U* (a⊗1) U = V_1* (a⊗1) V_1`.
    pub shift_commutation: CheckReport,
    /// `U*^t m_F U^t = m_{F∘α^t}` for diagonal `F`.
    pub conjugation: CheckReport,
    /// Off-diagonal mass of `U*^t m_F U^t`.
    pub diagonal_invariance: CheckReport,
}

impl GroupDilationReport {
    pub fn pass(&self) -> bool {
        [&self.unitarity, &self.dilation, &self.flow_agreement, &self.shift_commutation, &self.conjugation, &self.diagonal_invariance]
            .iter()
            .all(|r| r.pass)
    }
}

fn random_observables(rng: &mut ChaCha8Rng, count: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..count).map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect()
}

fn cylinder(d: &Dynamics, slot: usize, g: EnvSymbol) -> Vec<f64> {
    d.states().map(|s| if s.window[slot] == g { 1.0 } else { 0.0 }).collect()
}

pub fn group_dilation_check(qd: &QuantumDilation, seed: u64) -> Result<GroupDilationReport> {
    let n = qd.n();
    let z = qd.slot_dim();
    let w = qd.window;
    let dims = vec![n, z, qd.dim()];

    let mut unitarity = CheckReport::new(EXACT_TOLERANCE).with_dims(dims.clone());
    for op in [&qd.v, &qd.theta, &qd.u] {
        unitarity.record(unitarity_deviation(op));
        unitarity.checked += 1;
    }

    let sigma = qd.phi.state(w);
    let mut dilation = CheckReport::new(QUANTUM_TOLERANCE).with_dims(dims.clone());
    let mut flow_agreement = CheckReport::new(QUANTUM_TOLERANCE).with_dims(dims.clone());
    let mut shift_commutation = CheckReport::new(EXACT_TOLERANCE).with_dims(dims.clone());
    let v1 = on_slot(&qd.v, n, z, w, 0);
    let mut ut = ComplexOperator::identity(qd.u.factors().to_vec());
    for t in 1..=w {
        ut = qd.u.mul(&ut)?;
        for a in operator_basis(n) {
            let lifted = lift(&a, z, w);
            let evolved = conjugate(&ut, &lifted);
            let averaged = conditional_expectation(&evolved, &sigma)?;
            dilation.record(averaged.max_abs_diff(&qd.t.apply_power(&a, t)?));
            dilation.checked += 1;
            let flow = lift(&flow_by_unitaries(&qd.v, n, t, &a), z, w - t);
            flow_agreement.record(evolved.max_abs_diff(&flow));
            flow_agreement.checked += 1;
            if t == 1 {
                shift_commutation.record(evolved.max_abs_diff(&conjugate(&v1, &lifted)));
                shift_commutation.checked += 1;
            }
        }
    }

    let d = qd.dynamics();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fs = random_observables(&mut rng, 4, qd.dim());
    for slot in 0..w {
        for gi in (0..z).step_by((z / 3).max(1)) {
            fs.push(cylinder(&d, slot, qd.coupling.symbol(gi)));
        }
    }
    fs.push(d.states().map(|s| if s.x == 0 { 1.0 } else { 0.0 }).collect());

    let mut conjugation = CheckReport::new(EXACT_TOLERANCE).with_dims(dims.clone());
    let mut diagonal_invariance = CheckReport::new(EXACT_TOLERANCE).with_dims(dims);
    let states: Vec<WindowedGlobalState> = d.states().collect();
    let mut ut = ComplexOperator::identity(qd.u.factors().to_vec());
    for t in 1..=w {
        ut = qd.u.mul(&ut)?;
        let moved: Vec<usize> = states.iter().map(|s| d.state_index(&d.iterate(s, t))).collect();
        for f in &fs {
            let mf = embed_diagonal(f, qd.u.factors().to_vec())?;
            let lhs = conjugate(&ut, &mf);
            let composed: Vec<f64> = moved.iter().map(|&b| f[b]).collect();
            let rhs = embed_diagonal(&composed, qd.u.factors().to_vec())?;
            conjugation.record(lhs.max_abs_diff(&rhs));
            conjugation.checked += 1;
            diagonal_invariance.record(lhs.off_diagonal_norm());
            diagonal_invariance.checked += 1;
        }
    }

    Ok(GroupDilationReport {
        unitarity: unitarity.finish(),
        dilation: dilation.finish(),
        flow_agreement: flow_agreement.finish(),
        shift_commutation: shift_commutation.finish(),
        conjugation: conjugation.finish(),
        diagonal_invariance: diagonal_invariance.finish(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryReport {
    pub report: CheckReport,
    /// `(classical, quantum)` values of `P(Y_1 = (0, swap))` when the swap is
    /// a label.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub swap_fixture: Option<(f64, f64)>,
}

/// Compares `E_k[F]` under the classical window law with
/// `tr[m_F (|k⟩⟨k| ⊗ |Ψ⟩⟨Ψ|)]` for constants, state and cylinder indicators,
/// random `F`, `F∘α^t`, and pairwise products and maxima.
pub fn trajectory_distribution_check(qd: &QuantumDilation, k: usize, seed: u64, support_cap: u128) -> Result<TrajectoryReport> {
    let n = qd.n();
    let z = qd.slot_dim();
    let w = qd.window;
    let factors = qd.u.factors().to_vec();
    let d = qd.dynamics();
    let m = qd.classical_measure(k)?;
    let rho = DensityState::basis(n, k)?;
    let joint = rho.operator().kron(&qd.phi.state(w));
    // tr[A ρ] for A diagonal only needs the diagonal of ρ
    let diagonal_trace = |op: &ComplexOperator, state: &ComplexOperator| -> f64 {
        op.diagonal().iter().zip(state.diagonal()).map(|(a, r)| (a * r).re).sum()
    };
    let quantum = |op: &ComplexOperator| -> Result<f64> { Ok(diagonal_trace(op, &joint)) };
    let classical = |f: &[f64], t: usize| -> Result<f64> {
        sample::expectation(&m, &d, support_cap, |s| f[d.state_index(&d.iterate(s, t))])
    };

    let mut report = CheckReport::new(QUANTUM_TOLERANCE).with_dims(vec![n, z, qd.dim()]);
    let mut fs: Vec<Vec<f64>> = vec![vec![1.0; qd.dim()]];
    for x in 0..n {
        fs.push(d.states().map(|s| if s.x == x { 1.0 } else { 0.0 }).collect());
    }
    for slot in 0..w {
        for gi in 0..z {
            fs.push(cylinder(&d, slot, qd.coupling.symbol(gi)));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    fs.extend(random_observables(&mut rng, 10, qd.dim()));
    for f in &fs {
        let c = classical(f, 0)?;
        let q = quantum(&embed_diagonal(f, factors.clone())?)?;
        report.record((c - q).abs());
        report.checked += 1;
    }

    // time-evolved observables
    let randoms = random_observables(&mut rng, 5, qd.dim());
    for t in 1..=w {
        // tr[U*^t m_F U^t ρ] = tr[m_F U^t ρ U*^t]
        let ut = qd.u_power(t);
        let evolved = ComplexOperator::from_parts(ut.matrix() * joint.matrix() * ut.matrix().adjoint(), factors.clone());
        for f in &randoms {
            let c = classical(f, t)?;
            let q = diagonal_trace(&embed_diagonal(f, factors.clone())?, &evolved);
            report.record((c - q).abs());
            report.checked += 1;
        }
    }

    // η(F1, F2) for η = product and η = max
    let pairs = random_observables(&mut rng, 20, qd.dim());
    for pair in pairs.chunks(2) {
        let (f1, f2) = (&pair[0], &pair[1]);
        let m1 = embed_diagonal(f1, factors.clone())?;
        let m2 = embed_diagonal(f2, factors.clone())?;
        let prod: Vec<f64> = f1.iter().zip(f2).map(|(a, b)| a * b).collect();
        report.record((classical(&prod, 0)? - quantum(&m1.mul(&m2)?)?).abs());
        let max: Vec<f64> = f1.iter().zip(f2).map(|(a, b)| a.max(*b)).collect();
        let spectral_max: Vec<f64> = m1.diagonal().iter().zip(m2.diagonal()).map(|(a, b)| a.re.max(b.re)).collect();
        report.record((classical(&max, 0)? - quantum(&embed_diagonal(&spectral_max, factors.clone())?)?).abs());
        report.checked += 2;
    }

    let swap_fixture = match (n, qd.coupling.labels().maps().iter().position(|m| m.image() == [1, 0])) {
        (2, Some(label)) => {
            let f = cylinder(&d, 0, EnvSymbol::active(label));
            Some((classical(&f, 0)?, quantum(&embed_diagonal(&f, factors.clone())?)?))
        }
        _ => None,
    };
    Ok(TrajectoryReport { report: report.finish(), swap_fixture })
}

/// `P^t f(k) = tr[T^t[m_f] |k⟩⟨k|]` for basis `f`, every `k`, `t ≤ t_max`.
pub fn eqexp_check(t: &KrausMap, p: &StochasticMatrix, t_max: usize) -> Result<CheckReport> {
    let n = p.n();
    if t.n() != n {
        return Err(Error::DimensionMismatch { expected: n, found: t.n() });
    }
    let seq = MatrixSequence::homogeneous(p.clone(), t_max);
    let mut report = CheckReport::new(EXACT_TOLERANCE).with_dims(vec![n]);
    for j in 0..n {
        let mut f = vec![0.0; n];
        f[j] = 1.0;
        let mf = embed_diagonal(&f, vec![n])?;
        for step in 0..=t_max {
            let classical = seq.evolve(step, &f)?;
            let tf = t.apply_power(&mf, step)?;
            for (k, &c) in classical.iter().enumerate() {
                let q = DensityState::basis(n, k)?.expect(&tf)?;
                report.record((c - q.re).abs().max(q.im.abs()));
                report.checked += 1;
            }
        }
    }
    Ok(report.finish())
}
