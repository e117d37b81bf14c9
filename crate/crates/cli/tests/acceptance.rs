//! Acceptance suite. Prints one line per criterion and exits non-zero if any
//! criterion fails. Values are checked against oracles written here, not the
//! library's own helpers where an independent computation is practical.

use std::panic::{self, AssertUnwindSafe};
use std::process::{Command, ExitCode};
use std::sync::Arc;
use std::time::{Duration, Instant};

use dilatron_core::markov::DEFAULT_LABEL_CAP;
use dilatron_core::quantum::{
    conditional_expectation, embed_diagonal, flow_by_unitaries, group_dilation_check, one_step_dilation_check,
    qsf_check, trajectory_distribution_check, ComplexOperator, QuantumDilation, DEFAULT_DIM_CAP,
};
use dilatron_core::sample::{
    exact_state_distribution, flow_equation_check, measure_on, simulate, verify_markov_property, DEFAULT_SUPPORT_CAP,
};
use dilatron_core::{
    build_measure, canonical_decomposition, sparse_decomposition, Coupling, Decomposer, Decomposition, Dynamics,
    EnvSymbol, LabelSet, MatrixSequence, MeasureOptions, StochasticMatrix, SymbolLaw, WindowedGlobalState,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const RECOMPOSITION_TOL: f64 = 1e-12;
const LAW_TOL: f64 = 1e-10;
const MARKOV_TOL: f64 = 1e-10;
const QUANTUM_TOL: f64 = 1e-10;
const MC_SIGMAS: f64 = 4.0;
const CORPUS_SEED: u64 = 20_240_501;

type Outcome = Result<String, String>;
type Criterion = (u32, &'static str, Duration, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn example2() -> StochasticMatrix {
    StochasticMatrix::from_rows(&[[0.5, 0.5], [0.25, 0.75]]).unwrap()
}

/// Rows of uniform weights with roughly a third of the entries zeroed.
fn random_rows(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            let mut row: Vec<f64> =
                (0..n).map(|_| if rng.gen_bool(0.3) { 0.0 } else { rng.gen_range(0.01..1.0) }).collect();
            if row.iter().all(|&x| x == 0.0) {
                row[rng.gen_range(0..n)] = 1.0;
            }
            let s: f64 = row.iter().sum();
            row.iter().map(|x| x / s).collect()
        })
        .collect()
}

fn random_matrix(rng: &mut ChaCha8Rng, n: usize) -> StochasticMatrix {
    StochasticMatrix::from_rows(&random_rows(rng, n)).unwrap()
}

/// `Σ_ℓ q_ℓ D_ℓ` written out entry by entry.
fn recompose_oracle(dec: &Decomposition, n: usize) -> Vec<Vec<f64>> {
    let mut out = vec![vec![0.0; n]; n];
    for (q, map) in dec.terms() {
        for (i, row) in out.iter_mut().enumerate() {
            row[map.image()[i]] += q;
        }
    }
    out
}

fn max_diff(a: &[Vec<f64>], p: &StochasticMatrix) -> f64 {
    let mut m: f64 = 0.0;
    for (i, row) in a.iter().enumerate() {
        for (j, &x) in row.iter().enumerate() {
            m = m.max((x - p.get(i, j)).abs());
        }
    }
    m
}

/// Row `k` of `P(1)⋯P(t)` by explicit vector-matrix products.
fn law_oracle(mats: &[StochasticMatrix], k: usize, t: usize) -> Vec<f64> {
    let n = mats[0].n();
    let mut law = vec![0.0; n];
    law[k] = 1.0;
    for p in &mats[..t] {
        law = (0..n).map(|j| (0..n).map(|i| law[i] * p.get(i, j)).sum()).collect();
    }
    law
}

fn linf(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn c1_decomposition_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(CORPUS_SEED);
    let mut worst: f64 = 0.0;
    let mut most_terms = 0;
    for n in 2..=4 {
        for idx in 0..50 {
            let p = random_matrix(&mut rng, n);
            let sparse = sparse_decomposition(&p).map_err(|e| e.to_string())?;
            let canonical = canonical_decomposition(&p, DEFAULT_LABEL_CAP).map_err(|e| e.to_string())?;
            let ds = max_diff(&recompose_oracle(&sparse, n), &p);
            let dc = max_diff(&recompose_oracle(&canonical, n), &p);
            worst = worst.max(ds).max(dc);
            ensure(ds <= RECOMPOSITION_TOL && dc <= RECOMPOSITION_TOL, || {
                format!("N={n} #{idx}: recomposition {ds:e} / {dc:e}")
            })?;
            let bound = n * n - n + 1;
            ensure(sparse.len() <= bound, || format!("N={n} #{idx}: {} sparse terms > {bound}", sparse.len()))?;
            most_terms = most_terms.max(sparse.len());
        }
    }
    Ok(format!("150 matrices, max recomposition error {worst:.1e}, max sparse terms {most_terms}"))
}

fn c2_canonical_weights() -> Outcome {
    let p = example2();
    let dec = canonical_decomposition(&p, DEFAULT_LABEL_CAP).map_err(|e| e.to_string())?;
    // label ℓ read as base-2 digits (β(0), β(1)), first digit most significant
    let oracle: Vec<f64> = (0..4).map(|l| p.get(0, l / 2) * p.get(1, l % 2)).collect();
    for (l, map) in dec.labels().maps().iter().enumerate() {
        ensure(map.image() == [l / 2, l % 2], || format!("label {l} is {:?}", map.image()))?;
    }
    ensure(dec.weights() == oracle.as_slice(), || format!("{:?} != oracle {oracle:?}", dec.weights()))?;
    ensure(dec.weights() == [0.125, 0.375, 0.125, 0.375], || format!("{:?}", dec.weights()))?;
    Ok(format!("weights {:?}", dec.weights()))
}

fn c3_coupling_bijectivity() -> Outcome {
    let mut total = 0;
    for n in [2, 3] {
        let labels = LabelSet::full(n, DEFAULT_LABEL_CAP).map_err(|e| e.to_string())?;
        let mut couplings = vec![Coupling::build(labels.clone()), Coupling::build_reversed(labels.clone())];
        if n == 2 {
            couplings.push(Coupling::two_state_shifted());
        }
        for c in &couplings {
            let points = n * n * labels.len();
            ensure(c.point_count() == points, || format!("N={n}: {} points", c.point_count()))?;
            let mut seen = vec![false; points];
            for i in 0..n {
                for j in 0..n {
                    for l in 0..labels.len() {
                        let s = EnvSymbol::new(j, l);
                        let (y, g) = c.apply(i, s);
                        let idx = (y * n + g.j) * labels.len() + g.label;
                        ensure(!seen[idx], || format!("N={n}: image of ({i},{j},{l}) repeated"))?;
                        seen[idx] = true;
                        ensure(c.apply_inverse(y, g) == (i, s), || format!("N={n}: inverse fails at ({i},{j},{l})"))?;
                        if j == 0 {
                            let expected = (labels.map(l).image()[i], EnvSymbol::new(i, l));
                            ensure(c.apply(i, s) == expected, || format!("N={n}: active block at ({i},{l})"))?;
                        }
                    }
                }
            }
            total += points;
        }
    }
    Ok(format!("{total} coupling points checked over 5 couplings (N=2: 16 points, N=3: 243 points)"))
}

fn c4_dilation_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(CORPUS_SEED + 4);
    let (mut worst_law, mut worst_markov, mut worst_variant): (f64, f64, f64) = (0.0, 0.0, 0.0);
    let mut histories = 0;
    for idx in 0..20 {
        let n = 2 + idx % 2;
        let horizon = 1 + idx % 4;
        let homogeneous = idx < 10;
        let mats: Vec<StochasticMatrix> = if homogeneous {
            vec![random_matrix(&mut rng, n); horizon]
        } else {
            (0..horizon).map(|_| random_matrix(&mut rng, n)).collect()
        };
        let seq = if homogeneous {
            MatrixSequence::homogeneous(mats[0].clone(), horizon)
        } else {
            MatrixSequence::inhomogeneous(mats.clone()).map_err(|e| e.to_string())?
        };
        let mut decomposers = vec![Decomposer::Sparse];
        if n == 2 {
            decomposers.push(Decomposer::Canonical);
        }
        for decomposer in decomposers {
            let opts = MeasureOptions::new(decomposer, horizon + 1);
            for k in 0..n {
                let (m, d) = build_measure(&seq, k, &opts).map_err(|e| e.to_string())?;
                for t in 0..=horizon {
                    let exact = exact_state_distribution(&m, &d, t, DEFAULT_SUPPORT_CAP).map_err(|e| e.to_string())?;
                    let dev = linf(&exact.probs, &law_oracle(&mats, k, t));
                    worst_law = worst_law.max(dev);
                    ensure(dev <= LAW_TOL, || format!("seq {idx} k={k} t={t}: law deviation {dev:e}"))?;
                }
                let r = verify_markov_property(&m, &d, &seq, horizon, DEFAULT_SUPPORT_CAP).map_err(|e| e.to_string())?;
                worst_markov = worst_markov.max(r.max_abs_deviation);
                histories += r.checked;
                ensure(r.max_abs_deviation < MARKOV_TOL, || format!("seq {idx} k={k}: Markov deviation {r:?}"))?;

                // other completions and other laws on the past slots
                let labels = d.coupling().labels().clone();
                let l = labels.len();
                let mut variants = vec![(Coupling::build_reversed(labels.clone()), None)];
                if n == 2 && l == 4 {
                    variants.push((Coupling::two_state_shifted(), None));
                }
                let uniform = SymbolLaw::new(n, l, vec![1.0 / (n * l) as f64; n * l]).map_err(|e| e.to_string())?;
                variants.push((Coupling::build(labels.clone()), Some(uniform)));
                let corner = SymbolLaw::point_mass(n, l, EnvSymbol::new(n - 1, l - 1)).map_err(|e| e.to_string())?;
                variants.push((Coupling::build_reversed(labels), Some(corner)));
                for (c, past) in variants {
                    let dv = Dynamics::new(Arc::new(c), horizon + 1).map_err(|e| e.to_string())?;
                    let mut o = opts.clone();
                    o.past_law = past;
                    let mv = measure_on(&dv, &seq, k, &o).map_err(|e| e.to_string())?;
                    for t in 1..=horizon {
                        let exact =
                            exact_state_distribution(&mv, &dv, t, DEFAULT_SUPPORT_CAP).map_err(|e| e.to_string())?;
                        let dev = linf(&exact.probs, &law_oracle(&mats, k, t));
                        worst_variant = worst_variant.max(dev);
                        ensure(dev <= LAW_TOL, || format!("seq {idx} k={k} t={t}: variant deviation {dev:e}"))?;
                    }
                    let r = verify_markov_property(&mv, &dv, &seq, horizon, DEFAULT_SUPPORT_CAP)
                        .map_err(|e| e.to_string())?;
                    ensure(r.max_abs_deviation < MARKOV_TOL, || format!("seq {idx} k={k}: variant Markov {r:?}"))?;
                }
            }
        }
    }
    Ok(format!(
        "20 sequences, law {worst_law:.1e}, Markov {worst_markov:.1e} over {histories} histories, variants {worst_variant:.1e}"
    ))
}

/// `φ_t ∘ ⋯ ∘ φ_1` applied slot by slot.
fn cocycle_oracle(c: &Coupling, s: &WindowedGlobalState, t: usize) -> WindowedGlobalState {
    let mut x = s.x;
    let mut window = s.window.clone();
    for slot in window.iter_mut().take(t) {
        let (y, g) = c.apply(x, *slot);
        x = y;
        *slot = g;
    }
    WindowedGlobalState::new(x, window)
}

fn c5_cocycle_and_flow() -> Outcome {
    let p = example2();
    let mut states = 0;
    let mut histories = 0;
    for decomposer in [Decomposer::Sparse, Decomposer::Canonical] {
        let seq = MatrixSequence::homogeneous(p.clone(), 3);
        let opts = MeasureOptions::new(decomposer, 3);
        let (_, d) = build_measure(&seq, 0, &opts).map_err(|e| e.to_string())?;
        for s in d.states() {
            for t in 1..=3 {
                let lhs = d.cocycle_map(t, &s).map_err(|e| e.to_string())?;
                ensure(lhs == cocycle_oracle(d.coupling(), &s, t), || format!("cocycle fails at {s:?}, t={t}"))?;
            }
            states += 1;
        }
        for k in 0..2 {
            let m = measure_on(&d, &seq, k, &opts).map_err(|e| e.to_string())?;
            for t in 0..=3 {
                let r = flow_equation_check(&m, &d, t, DEFAULT_SUPPORT_CAP).map_err(|e| e.to_string())?;
                ensure(r.max_abs_deviation == 0.0, || format!("flow recursion {r:?}"))?;
                histories += r.checked;
            }
        }
    }
    Ok(format!("{states} global states x t<=3 exhaustively, flow recursion exact on {histories} histories"))
}

fn c6_monte_carlo() -> Outcome {
    let p = example2();
    let replicas = 100_000u64;
    let seq = MatrixSequence::homogeneous(p.clone(), 2);
    let mut worst: f64 = 0.0;
    for k in 0..2 {
        let (m, d) = build_measure(&seq, k, &MeasureOptions::new(Decomposer::Sparse, 3)).map_err(|e| e.to_string())?;
        for t in [1, 2] {
            let sim = simulate(&m, &d, t, replicas, 42, false).map_err(|e| e.to_string())?;
            let exact = law_oracle(&[p.clone(), p.clone()], k, t);
            for (j, &q) in exact.iter().enumerate() {
                let se = (q * (1.0 - q) / replicas as f64).sqrt();
                let z = (sim.distribution.probs[j] - q).abs() / se;
                worst = worst.max(z);
                ensure(z <= MC_SIGMAS, || format!("k={k} t={t} state {j}: {z:.2} standard errors"))?;
            }
        }
    }
    Ok(format!("10^5 replicas, worst deviation {worst:.2} standard errors"))
}

fn sparse_dilation(p: &StochasticMatrix, window: usize) -> Result<QuantumDilation, String> {
    let dec = sparse_decomposition(p).map_err(|e| e.to_string())?;
    let mut maps = dec.labels().maps().to_vec();
    maps.sort_by_key(|m| m.code());
    let labels = LabelSet::new(p.n(), maps).map_err(|e| e.to_string())?;
    QuantumDilation::new(p, &dec, Arc::new(Coupling::build(labels)), window, DEFAULT_DIM_CAP).map_err(|e| e.to_string())
}

fn full_dilation(p: &StochasticMatrix, window: usize) -> Result<QuantumDilation, String> {
    let dec = canonical_decomposition(p, DEFAULT_LABEL_CAP).map_err(|e| e.to_string())?;
    let labels = LabelSet::full(p.n(), DEFAULT_LABEL_CAP).map_err(|e| e.to_string())?;
    QuantumDilation::new(p, &dec, Arc::new(Coupling::build(labels)), window, DEFAULT_DIM_CAP).map_err(|e| e.to_string())
}

/// `T^t[a] = diag(P^t diag(a))` for the Kraus map of any decomposition of `P`.
fn kraus_oracle(p: &StochasticMatrix, a: &ComplexOperator, t: usize) -> ComplexOperator {
    let n = p.n();
    let mut f: Vec<f64> = a.diagonal().iter().map(|z| z.re).collect();
    for _ in 0..t {
        f = (0..n).map(|i| (0..n).map(|j| p.get(i, j) * f[j]).sum()).collect();
    }
    embed_diagonal(&f, vec![n]).unwrap()
}

fn c7_quantum_one_step() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(CORPUS_SEED + 7);
    let p3 = random_matrix(&mut rng, 3);
    let cases = [
        ("N=2 sparse", sparse_dilation(&example2(), 1)?, example2()),
        ("N=2 full", full_dilation(&example2(), 1)?, example2()),
        ("N=3 sparse", sparse_dilation(&p3, 1)?, p3.clone()),
    ];
    let mut worst: f64 = 0.0;
    for (name, qd, p) in &cases {
        let r = one_step_dilation_check(qd.kraus(), qd.v(), qd.phi()).map_err(|e| e.to_string())?;
        ensure(r.pass && r.checked == p.n() * p.n(), || format!("{name}: {r:?}"))?;
        // against T[a] = diag(P diag a) rather than the Kraus sum
        let sigma = qd.phi().state(1);
        for a in 0..p.n() * p.n() {
            let unit = ComplexOperator::matrix_unit(p.n(), a / p.n(), a % p.n());
            let lifted = unit.kron(&ComplexOperator::identity(vec![qd.slot_dim()]));
            let v = qd.v();
            let nu = v.adjoint().mul(&lifted).and_then(|x| x.mul(v)).map_err(|e| e.to_string())?;
            let lhs = conditional_expectation(&nu, &sigma).map_err(|e| e.to_string())?;
            let dev = lhs.max_abs_diff(&kraus_oracle(p, &unit, 1));
            worst = worst.max(dev);
            ensure(dev <= QUANTUM_TOL, || format!("{name}: basis {a} deviation {dev:e}"))?;
        }
    }
    Ok(format!("3 dilations over full operator bases, max deviation {worst:.1e}"))
}

fn c8_quantum_multi_step() -> Outcome {
    let p = example2();
    let qd = sparse_dilation(&p, 2)?;
    let qsf = qsf_check(qd.kraus(), qd.v(), qd.phi(), 2, DEFAULT_DIM_CAP).map_err(|e| e.to_string())?;
    ensure(qsf.pass(), || format!("qsf {qsf:?}"))?;
    let group = group_dilation_check(&qd, 42).map_err(|e| e.to_string())?;
    ensure(group.pass(), || format!("group {group:?}"))?;
    let mut worst: f64 = 0.0;
    for t in 1..=2 {
        let sigma_t = qd.phi().state(t);
        let psi = qd.phi().state(2);
        for a in 0..4 {
            let unit = ComplexOperator::matrix_unit(2, a / 2, a % 2);
            let kraus = qd.kraus().apply_power(&unit, t).map_err(|e| e.to_string())?;
            let via_v = conditional_expectation(&flow_by_unitaries(qd.v(), 2, t, &unit), &sigma_t)
                .map_err(|e| e.to_string())?;
            let via_u = conditional_expectation(&qd.evolve(t, &unit), &psi).map_err(|e| e.to_string())?;
            let oracle = kraus_oracle(&p, &unit, t);
            for (x, y) in [(&kraus, &via_v), (&kraus, &via_u), (&via_v, &via_u), (&kraus, &oracle)] {
                let dev = x.max_abs_diff(y);
                worst = worst.max(dev);
                ensure(dev <= QUANTUM_TOL, || format!("t={t} basis {a}: routes differ by {dev:e}"))?;
            }
        }
    }
    Ok(format!(
        "qsf and group checks pass (dim {}), routes agree to {worst:.1e}, t=1 commutation {:.1e}",
        qd.dim(),
        group.shift_commutation.max_abs_deviation
    ))
}

fn c9_trajectory_distributions() -> Outcome {
    let p = example2();
    let fixture = p.get(0, 1) * p.get(1, 0);
    let mut observables = 0;
    let mut worst: f64 = 0.0;
    for (name, qd) in [("N=2 full", full_dilation(&p, 2)?), ("N=2 sparse", sparse_dilation(&p, 2)?)] {
        for k in 0..2 {
            let r = trajectory_distribution_check(&qd, k, 9 + k as u64, DEFAULT_SUPPORT_CAP).map_err(|e| e.to_string())?;
            ensure(r.report.pass && r.report.checked >= 50, || format!("{name} k={k}: {:?}", r.report))?;
            observables += r.report.checked;
            worst = worst.max(r.report.max_abs_deviation);
            if name == "N=2 full" && k == 0 {
                let (c, q) = r.swap_fixture.ok_or("swap fixture missing")?;
                ensure((c - fixture).abs() <= QUANTUM_TOL && (q - fixture).abs() <= QUANTUM_TOL, || {
                    format!("P(Y1 = (0, swap)): classical {c}, quantum {q}, expected {fixture}")
                })?;
            }
        }
    }
    Ok(format!("{observables} observables, max deviation {worst:.1e}, swap fixture = p12*p21 = {fixture}"))
}

fn c10_end_to_end() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_dilatron");
    let input = concat!(env!("CARGO_MANIFEST_DIR"), "/data/example2.json");
    let mut sizes = Vec::new();
    for command in ["verify", "quantum"] {
        let run = || {
            Command::new(bin)
                .args([command, "--input", input, "--seed", "7", "--format", "structured"])
                .env_remove(dilatron_cli::SIZE_CAP_ENV)
                .output()
                .map_err(|e| e.to_string())
        };
        let (a, b) = (run()?, run()?);
        ensure(a.status.code() == Some(0), || {
            format!("{command} exited {:?}: {}", a.status.code(), String::from_utf8_lossy(&a.stderr))
        })?;
        ensure(b.status.code() == Some(0), || format!("{command} rerun exited {:?}", b.status.code()))?;
        ensure(a.stdout == b.stdout, || format!("{command}: reports differ between runs"))?;
        let doc: serde_json::Value = serde_json::from_slice(&a.stdout).map_err(|e| e.to_string())?;
        ensure(doc["pass"] == true, || format!("{command}: report pass is {}", doc["pass"]))?;
        sizes.push(format!("{command} {} bytes", a.stdout.len()));
    }
    Ok(format!("exit 0 and identical reruns: {}", sizes.join(", ")))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        (1, "decomposition exactness", Duration::from_secs(5), c1_decomposition_exactness),
        (2, "canonical weights", Duration::MAX, c2_canonical_weights),
        (3, "coupling bijectivity", Duration::from_secs(1), c3_coupling_bijectivity),
        (4, "dilation correctness", Duration::from_secs(30), c4_dilation_correctness),
        (5, "cocycle and flow", Duration::from_secs(10), c5_cocycle_and_flow),
        (6, "Monte Carlo", Duration::from_secs(5), c6_monte_carlo),
        (7, "quantum one-step", Duration::from_secs(10), c7_quantum_one_step),
        (8, "quantum multi-step", Duration::from_secs(20), c8_quantum_multi_step),
        (9, "trajectory distributions", Duration::from_secs(10), c9_trajectory_distributions),
        (10, "end-to-end", Duration::MAX, c10_end_to_end),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (id, name, limit, check) in criteria {
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            Err(e.downcast_ref::<String>().cloned().unwrap_or_else(|| "panicked".into()))
        });
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(_) if elapsed > limit => Err(format!("took {:.2} s, limit {:.0} s", elapsed.as_secs_f64(), limit.as_secs_f64())),
            other => other,
        };
        let (tag, detail) = match &outcome {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        println!("criterion {id:>2} {tag}  {name}: {detail} [{:.2} s]", elapsed.as_secs_f64());
        failed += usize::from(outcome.is_err());
    }
    println!("acceptance: {} of 10 criteria pass", 10 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
