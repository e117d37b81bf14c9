use std::sync::Arc;

use dilatron_core::markov::DEFAULT_LABEL_CAP;
use dilatron_core::quantum::{one_step_dilation_check, QuantumDilation, DEFAULT_DIM_CAP};
use dilatron_core::sample::{exact_state_distribution, verify_markov_property, DEFAULT_SUPPORT_CAP};
use dilatron_core::{
    build_measure, canonical_decomposition, sparse_decomposition, Coupling, Decomposer, DeterministicMap, Dynamics,
    EnvSymbol, LabelSet, MatrixSequence, MeasureOptions, StochasticMatrix, WindowedGlobalState,
};
use proptest::prelude::*;

/// Rows of integer weights, some zero, normalised.
fn stochastic(n: usize) -> impl Strategy<Value = StochasticMatrix> {
    prop::collection::vec(prop::collection::vec(0u32..6, n), n).prop_map(move |mut rows| {
        for (i, row) in rows.iter_mut().enumerate() {
            if row.iter().all(|&x| x == 0) {
                row[i] = 1;
            }
        }
        let rows: Vec<Vec<f64>> = rows
            .iter()
            .map(|r| {
                let s: u32 = r.iter().sum();
                r.iter().map(|&x| f64::from(x) / f64::from(s)).collect()
            })
            .collect();
        StochasticMatrix::from_rows(&rows).unwrap()
    })
}

fn any_stochastic() -> impl Strategy<Value = StochasticMatrix> {
    (2usize..=4).prop_flat_map(stochastic)
}

fn entrywise(p: &StochasticMatrix, maps: &[(f64, Vec<usize>)]) -> f64 {
    let n = p.n();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let s: f64 = maps.iter().filter(|(_, m)| m[i] == j).map(|(w, _)| w).sum();
            worst = worst.max((s - p.get(i, j)).abs());
        }
    }
    worst
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn sparse_recomposes_within_bound(p in any_stochastic()) {
        let dec = sparse_decomposition(&p).unwrap();
        let terms: Vec<(f64, Vec<usize>)> = dec.terms().map(|(w, m)| (w, m.image().to_vec())).collect();
        prop_assert!(entrywise(&p, &terms) <= 1e-12);
        prop_assert!(dec.len() <= p.nonzero_count() - p.n() + 1);
        prop_assert!(dec.weights().iter().all(|&w| w > 0.0));
        prop_assert!((dec.weights().iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        // every map stays inside the support of P
        for (_, m) in &terms {
            for (i, &j) in m.iter().enumerate() {
                prop_assert!(p.get(i, j) > 0.0);
            }
        }
    }

    #[test]
    fn canonical_weights_are_row_products(p in any_stochastic()) {
        let n = p.n();
        let dec = canonical_decomposition(&p, DEFAULT_LABEL_CAP).unwrap();
        prop_assert_eq!(dec.len(), n.pow(n as u32));
        for (code, (w, m)) in dec.terms().enumerate() {
            // base-n digits of the label, state 0 first
            let digits: Vec<usize> = (0..n).map(|i| code / n.pow((n - 1 - i) as u32) % n).collect();
            prop_assert_eq!(m.image(), digits.as_slice());
            let q: f64 = digits.iter().enumerate().map(|(i, &j)| p.get(i, j)).product();
            prop_assert_eq!(w, q);
        }
        let terms: Vec<(f64, Vec<usize>)> = dec.terms().map(|(w, m)| (w, m.image().to_vec())).collect();
        prop_assert!(entrywise(&p, &terms) <= 1e-12);
    }

    #[test]
    fn composition_is_pull_back(a in prop::collection::vec(0usize..4, 4), b in prop::collection::vec(0usize..4, 4), f in prop::collection::vec(-5i32..5, 4)) {
        let (ma, mb) = (DeterministicMap::new(a.clone()).unwrap(), DeterministicMap::new(b.clone()).unwrap());
        let composed = ma.after(&mb);
        for i in 0..4 {
            prop_assert_eq!(composed.apply(i), a[b[i]]);
        }
        prop_assert_eq!(composed.pull_back(&f), mb.pull_back(&ma.pull_back(&f)));
    }

    #[test]
    fn step_is_invertible(p in stochastic(3), x in 0usize..3, raw in prop::collection::vec((0usize..3, 0usize..64), 3)) {
        let dec = sparse_decomposition(&p).unwrap();
        let mut maps = dec.labels().maps().to_vec();
        maps.sort_by_key(|m| m.code());
        let labels = LabelSet::new(3, maps).unwrap();
        let l = labels.len();
        for coupling in [Coupling::build(labels.clone()), Coupling::build_reversed(labels)] {
            let d = Dynamics::new(Arc::new(coupling), 3).unwrap();
            let window: Vec<EnvSymbol> = raw.iter().map(|&(j, label)| EnvSymbol::new(j, label % l)).collect();
            let s = WindowedGlobalState::new(x, window);
            prop_assert_eq!(d.step_inverse(&d.step(&s)), s.clone());
            prop_assert_eq!(d.step(&d.step_inverse(&s)), s.clone());
            let back = (0..3).fold(d.iterate(&s, 3), |z, _| d.step_inverse(&z));
            prop_assert_eq!(back, s.clone());
            for t in 1..=3 {
                prop_assert_eq!(d.cocycle_map(t, &s).unwrap(), d.cocycle_map_direct(t, &s).unwrap());
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn dilation_reproduces_inhomogeneous_laws(mats in prop::collection::vec(stochastic(3), 1..=3), k in 0usize..3) {
        let seq = MatrixSequence::inhomogeneous(mats.clone()).unwrap();
        let horizon = seq.horizon();
        let (m, d) = build_measure(&seq, k, &MeasureOptions::new(Decomposer::Sparse, horizon + 1)).unwrap();
        let mut law = vec![0.0; 3];
        law[k] = 1.0;
        for (t, p) in mats.iter().enumerate() {
            law = (0..3).map(|j| (0..3).map(|i| law[i] * p.get(i, j)).sum()).collect();
            let exact = exact_state_distribution(&m, &d, t + 1, DEFAULT_SUPPORT_CAP).unwrap();
            prop_assert!(exact.max_abs_diff(&law) <= 1e-10);
        }
        let r = verify_markov_property(&m, &d, &seq, horizon, DEFAULT_SUPPORT_CAP).unwrap();
        prop_assert!(r.pass, "{:?}", r);
    }

    #[test]
    fn one_step_quantum_dilation(p in stochastic(3)) {
        let dec = sparse_decomposition(&p).unwrap();
        let mut maps = dec.labels().maps().to_vec();
        maps.sort_by_key(|m| m.code());
        let labels = LabelSet::new(3, maps).unwrap();
        let qd = QuantumDilation::new(&p, &dec, Arc::new(Coupling::build(labels)), 1, DEFAULT_DIM_CAP).unwrap();
        let r = one_step_dilation_check(qd.kraus(), qd.v(), qd.phi()).unwrap();
        prop_assert!(r.pass, "{:?}", r);
        prop_assert!(qd.kraus().unitality_deviation() <= 1e-12);
    }
}
