use std::sync::Arc;
use std::time::Instant;

use dilatron_core::quantum::{
    eqexp_check, group_dilation_check, one_step_dilation_check, qsf_check, trajectory_distribution_check,
    QuantumDilation, DEFAULT_DIM_CAP,
};
use dilatron_core::sample::{
    exact_state_distribution, flow_equation_check, label_set_for, measure_on, simulate, verify_markov_property,
    DEFAULT_SUPPORT_CAP,
};
use dilatron_core::{
    canonical_decomposition, sparse_decomposition, CheckReport, Coupling, Decomposer, Decomposition, Dynamics,
    EnvSymbol, LabelSet, MatrixSequence, MeasureOptions, SymbolLaw, WindowedGlobalState,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::input::{self, LoadedInput};
use crate::report::{InputInfo, Report, Settings, Timing};
use crate::{CliError, Command, RunConfig};

/// Default horizon for homogeneous inputs.
pub const DEFAULT_HORIZON: usize = 3;
/// Default horizon for `quantum`, whose window is `T` slots of dense operators.
pub const DEFAULT_QUANTUM_HORIZON: usize = 2;
/// Above this many global states the cocycle checks use a seeded sample.
pub const STATE_ENUMERATION_LIMIT: usize = 20_000;
/// Allowed distance of an empirical frequency from the exact value, in
/// binomial standard errors.
pub const MC_STANDARD_ERRORS: f64 = 4.0;

const EXACT: f64 = 0.0;
const LAW_TOLERANCE: f64 = 1e-10;

struct Clock {
    enabled: bool,
    steps: Vec<Timing>,
}

impl Clock {
    fn time<T>(&mut self, step: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        if self.enabled {
            self.steps.push(Timing { step: step.to_string(), millis: start.elapsed().as_secs_f64() * 1e3 });
        }
        out
    }
}

pub fn run(config: &RunConfig) -> Result<Report, CliError> {
    let Some(path) = &config.input else {
        return Err(CliError::Usage("--input FILE is required".into()));
    };
    if config.tolerance.is_some_and(|t| t.is_nan() || t < 0.0) {
        return Err(CliError::Usage("--tolerance must be a non-negative number".into()));
    }
    let input = input::load(path)?;
    let mut report = Report::new(
        config.command.name(),
        InputInfo {
            path: input.path.display().to_string(),
            sha256: input.sha256.clone(),
            states: input.n(),
            matrices: input.matrices.len(),
            homogeneous: input.document.homogeneous,
        },
        Settings {
            seed: config.seed,
            window: config.window,
            horizon: config.horizon,
            replicas: config.replicas,
            decomposer: format!("{:?}", config.decomposer).to_lowercase(),
            tolerance: config.tolerance,
            size_cap: config.size_cap,
        },
    );
    let mut clock = Clock { enabled: config.timings, steps: Vec::new() };
    match config.command {
        Command::Decompose => decompose(config, &input, &mut report, &mut clock)?,
        Command::Simulate => simulate_cmd(config, &input, &mut report, &mut clock)?,
        Command::Verify => verify(config, &input, &mut report, &mut clock)?,
        Command::Quantum => quantum(config, &input, &mut report, &mut clock)?,
    }
    if config.timings {
        report.timings = Some(clock.steps);
    }
    Ok(report)
}

fn core(context: &str) -> impl Fn(dilatron_core::Error) -> CliError + '_ {
    move |e| CliError::invalid(context, e)
}

fn terms_json(dec: &Decomposition) -> Value {
    Value::Array(
        dec.terms()
            .filter(|(w, _)| *w > 0.0)
            .map(|(w, m)| json!({ "weight": w, "map": m.image() }))
            .collect(),
    )
}

fn describe_terms(report: &mut Report, title: String, dec: &Decomposition) {
    report.notes.push(title);
    for (w, m) in dec.terms().filter(|(w, _)| *w > 0.0) {
        report.notes.push(format!("  {w:<12} {:?}", m.image()));
    }
}

fn decompose(config: &RunConfig, input: &LoadedInput, report: &mut Report, clock: &mut Clock) -> Result<(), CliError> {
    let n = input.n();
    let tol = config.tolerance;
    let mut details = Vec::new();
    for (idx, p) in input.matrices.iter().enumerate() {
        let tag = format!("P({})", idx + 1);
        let sparse = clock.time("sparse", || sparse_decomposition(p)).map_err(core(&tag))?;
        let bound = p.nonzero_count() - n + 1;
        let sparse_err = sparse.recompose().max_abs_diff(p);
        report.push(format!("{tag}.sparse.recomposition"), sparse_err, tol.unwrap_or(1e-12), n * n);
        report.push(format!("{tag}.sparse.term_bound"), sparse.len().saturating_sub(bound) as f64, EXACT, 1);
        describe_terms(report, format!("{tag} sparse: {} terms (bound {bound})", sparse.len()), &sparse);

        let canonical = match canonical_decomposition(p, config.size_cap) {
            Ok(c) => {
                let err = c.recompose().max_abs_diff(p);
                report.push(format!("{tag}.canonical.recomposition"), err, tol.unwrap_or(1e-12), n * n);
                report.notes.push(format!("{tag} canonical: {} terms", c.len()));
                json!({ "count": c.len(), "weights": c.weights(), "recomposition_error": err })
            }
            Err(e @ dilatron_core::Error::SizeGuardExceeded { .. }) => {
                report.notes.push(format!("{tag} canonical: skipped ({e})"));
                json!({ "skipped": e.to_string() })
            }
            Err(e) => return Err(CliError::invalid(&tag, e)),
        };
        details.push(json!({
            "matrix": idx + 1,
            "sparse": { "count": sparse.len(), "bound": bound, "terms": terms_json(&sparse), "recomposition_error": sparse_err },
            "canonical": canonical,
        }));
    }
    report.details = json!({ "matrices": details });
    Ok(())
}

struct Setup {
    seq: MatrixSequence,
    opts: MeasureOptions,
    dynamics: Dynamics,
}

fn setup(config: &RunConfig, input: &LoadedInput, default_horizon: usize, window_offset: usize) -> Result<Setup, CliError> {
    let seq = input.sequence(config.horizon, default_horizon)?;
    let window = config.window.unwrap_or(seq.horizon() + window_offset);
    let mut opts = MeasureOptions::new(config.decomposer.into(), window);
    opts.label_cap = config.size_cap;
    if window < seq.horizon() {
        return Err(CliError::invalid(
            "--window",
            dilatron_core::Error::WindowTooShort { window, horizon: seq.horizon() },
        ));
    }
    let labels = label_set_for(&seq, opts.decomposer, opts.scope, opts.label_cap).map_err(core("labels"))?;
    let dynamics = Dynamics::new(Arc::new(Coupling::build(labels)), window).map_err(core("--window"))?;
    Ok(Setup { seq, opts, dynamics })
}

fn simulate_cmd(config: &RunConfig, input: &LoadedInput, report: &mut Report, clock: &mut Clock) -> Result<(), CliError> {
    let Setup { seq, opts, dynamics } = setup(config, input, DEFAULT_HORIZON, 1)?;
    let n = seq.n();
    let horizon = seq.horizon();
    let replicas = config.replicas.max(1);
    let mut exact_check = CheckReport::new(LAW_TOLERANCE);
    let mut worst_se: f64 = 0.0;
    let mut rows = Vec::new();
    for k in 0..n {
        let m = measure_on(&dynamics, &seq, k, &opts).map_err(core("measure"))?;
        let sim = clock
            .time("simulate", || simulate(&m, &dynamics, horizon, replicas, config.seed.wrapping_add(k as u64), true))
            .map_err(core("simulate"))?;
        let paths = sim.paths.expect("paths requested");
        for t in 1..=horizon {
            let product = seq.state_law(k, t).map_err(core("matrix product"))?;
            let exact = exact_state_distribution(&m, &dynamics, t, DEFAULT_SUPPORT_CAP).map_err(core("exact law"))?;
            exact_check.record(exact.max_abs_diff(&product));
            exact_check.checked += 1;
            let mut counts = vec![0u64; n];
            for path in &paths {
                counts[path[t]] += 1;
            }
            let empirical: Vec<f64> = counts.iter().map(|&c| c as f64 / replicas as f64).collect();
            for (e, &p) in empirical.iter().zip(&exact.probs) {
                let se = (p * (1.0 - p) / replicas as f64).sqrt();
                let z = if se > 0.0 { (e - p).abs() / se } else if (e - p).abs() > 0.0 { f64::INFINITY } else { 0.0 };
                worst_se = worst_se.max(z);
            }
            report.notes.push(format!(
                "k={k} t={t}  product {}  exact {}  empirical {}",
                fmt_law(&product),
                fmt_law(&exact.probs),
                fmt_law(&empirical)
            ));
            rows.push(json!({ "k": k, "t": t, "product": product, "exact": exact.probs, "empirical": empirical }));
        }
    }
    report.push_check("exact_vs_matrix_product", &exact_check.finish(), config.tolerance);
    report.push("empirical_vs_exact (standard errors)", worst_se, MC_STANDARD_ERRORS, n * horizon);
    report.details = json!({ "window": dynamics.window(), "horizon": horizon, "replicas": replicas, "rows": rows });
    Ok(())
}

fn fmt_law(p: &[f64]) -> String {
    let parts: Vec<String> = p.iter().map(|x| format!("{x:.5}")).collect();
    format!("[{}]", parts.join(", "))
}

/// Every global state when there are at most `STATE_ENUMERATION_LIMIT`,
/// otherwise that many drawn uniformly with `seed`.
fn global_states(d: &Dynamics, seed: u64) -> (Vec<WindowedGlobalState>, bool) {
    match d.state_count() {
        Some(count) if count <= STATE_ENUMERATION_LIMIT => (d.states().collect(), true),
        _ => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = d.coupling().symbol_count();
            let states = (0..STATE_ENUMERATION_LIMIT)
                .map(|_| {
                    let x = rng.gen_range(0..d.n());
                    let window = (0..d.window()).map(|_| d.coupling().symbol(rng.gen_range(0..g))).collect();
                    WindowedGlobalState::new(x, window)
                })
                .collect();
            (states, false)
        }
    }
}

fn coupling_checks(coupling: &Coupling, report: &mut Report) {
    let mut broken = 0usize;
    for p in 0..coupling.point_count() {
        let (x, s) = coupling.point(p);
        let (y, t) = coupling.apply(x, s);
        if coupling.apply_inverse(y, t) != (x, s) || coupling.apply(coupling.apply_inverse(x, s).0, coupling.apply_inverse(x, s).1) != (x, s) {
            broken += 1;
        }
    }
    report.push("coupling.bijective", broken as f64, EXACT, coupling.point_count());
    let labels = coupling.labels();
    let mut off = 0usize;
    for i in 0..coupling.n() {
        for l in 0..labels.len() {
            if coupling.apply(i, EnvSymbol::active(l)) != (labels.map(l).apply(i), EnvSymbol::new(i, l)) {
                off += 1;
            }
        }
    }
    report.push("coupling.active_block", off as f64, EXACT, coupling.n() * labels.len());
}

fn alternative_couplings(labels: &LabelSet) -> Vec<(&'static str, Coupling)> {
    let mut out = vec![("reversed", Coupling::build_reversed(labels.clone()))];
    if labels.n() == 2 && labels.len() == 4 {
        out.push(("two_state_shifted", Coupling::two_state_shifted()));
    }
    out
}

fn verify(config: &RunConfig, input: &LoadedInput, report: &mut Report, clock: &mut Clock) -> Result<(), CliError> {
    let Setup { seq, opts, dynamics } = setup(config, input, DEFAULT_HORIZON, 1)?;
    let n = seq.n();
    let horizon = seq.horizon();
    let tol = config.tolerance;
    let coupling = dynamics.coupling();

    clock.time("coupling", || coupling_checks(coupling, report));

    let (states, exhaustive) = global_states(&dynamics, config.seed);
    let (mut inverse_broken, mut cocycle_broken) = (0usize, 0usize);
    clock.time("cocycle", || -> Result<(), CliError> {
        for s in &states {
            if dynamics.step_inverse(&dynamics.step(s)) != *s || dynamics.step(&dynamics.step_inverse(s)) != *s {
                inverse_broken += 1;
            }
            for t in 1..=horizon {
                let a = dynamics.cocycle_map(t, s).map_err(core("cocycle"))?;
                let b = dynamics.cocycle_map_direct(t, s).map_err(core("cocycle"))?;
                if a != b {
                    cocycle_broken += 1;
                }
            }
        }
        Ok(())
    })?;
    report.push("dynamics.step_inverse", inverse_broken as f64, EXACT, states.len());
    report.push("dynamics.cocycle", cocycle_broken as f64, EXACT, states.len() * horizon);

    let mut law = CheckReport::new(LAW_TOLERANCE);
    let mut markov = CheckReport::new(dilatron_core::sample::MARKOV_TOLERANCE);
    let mut flow = CheckReport::new(dilatron_core::sample::FLOW_TOLERANCE);
    clock.time("dilation", || -> Result<(), CliError> {
        for k in 0..n {
            let m = measure_on(&dynamics, &seq, k, &opts).map_err(core("measure"))?;
            for t in 0..=horizon {
                let exact = exact_state_distribution(&m, &dynamics, t, DEFAULT_SUPPORT_CAP).map_err(core("exact law"))?;
                law.record(exact.max_abs_diff(&seq.state_law(k, t).map_err(core("matrix product"))?));
                law.checked += 1;
                flow.merge(&flow_equation_check(&m, &dynamics, t, DEFAULT_SUPPORT_CAP).map_err(core("flow"))?);
            }
            markov.merge(&verify_markov_property(&m, &dynamics, &seq, horizon, DEFAULT_SUPPORT_CAP).map_err(core("markov"))?);
        }
        Ok(())
    })?;
    report.push_check("dilation.state_law", &law.finish(), tol);
    report.push_check("dilation.markov_property", &markov.finish(), tol);
    report.push_check("dilation.flow_equation", &flow.finish(), tol);

    let labels = coupling.labels().clone();
    let mut independence = CheckReport::new(LAW_TOLERANCE);
    let mut variants = Vec::new();
    clock.time("completion", || -> Result<(), CliError> {
        let mut alternatives: Vec<(String, Coupling, Option<SymbolLaw>)> = alternative_couplings(&labels)
            .into_iter()
            .map(|(name, c)| (name.to_string(), c, None))
            .collect();
        let past = SymbolLaw::point_mass(n, labels.len(), EnvSymbol::new(n - 1, labels.len() - 1)).map_err(core("past law"))?;
        alternatives.push(("past_law".into(), Coupling::build(labels.clone()), Some(past)));
        for (name, c, past) in alternatives {
            let d = Dynamics::new(Arc::new(c), dynamics.window()).map_err(core("completion"))?;
            let mut o = opts.clone();
            o.past_law = past;
            for k in 0..n {
                let m = measure_on(&d, &seq, k, &o).map_err(core("measure"))?;
                for t in 1..=horizon {
                    let exact = exact_state_distribution(&m, &d, t, DEFAULT_SUPPORT_CAP).map_err(core("exact law"))?;
                    independence.record(exact.max_abs_diff(&seq.state_law(k, t).map_err(core("matrix product"))?));
                    independence.checked += 1;
                }
            }
            variants.push(name);
        }
        Ok(())
    })?;
    report.push_check("dilation.completion_independence", &independence.finish(), tol);

    report.details = json!({
        "horizon": horizon,
        "window": dynamics.window(),
        "labels": labels.len(),
        "symbols": coupling.symbol_count(),
        "coupling_points": coupling.point_count(),
        "global_states": dynamics.state_count(),
        "states_checked": states.len(),
        "states_exhaustive": exhaustive,
        "variants": variants,
    });
    report.notes.push(format!(
        "labels {}  symbols {}  window {}  horizon {}  states checked {}{}",
        labels.len(),
        coupling.symbol_count(),
        dynamics.window(),
        horizon,
        states.len(),
        if exhaustive { " (all)" } else { " (sampled)" }
    ));
    Ok(())
}

fn quantum(config: &RunConfig, input: &LoadedInput, report: &mut Report, clock: &mut Clock) -> Result<(), CliError> {
    if !input.document.homogeneous {
        return Err(CliError::Usage("quantum needs a homogeneous input".into()));
    }
    let seq = input.sequence(config.horizon, DEFAULT_QUANTUM_HORIZON)?;
    let horizon = seq.horizon();
    let window = config.window.unwrap_or(horizon);
    if window < horizon {
        return Err(CliError::invalid("--window", dilatron_core::Error::WindowTooShort { window, horizon }));
    }
    let tol = config.tolerance;
    let p = &input.matrices[0];
    let decomposer: Decomposer = config.decomposer.into();
    let opts = MeasureOptions::new(decomposer, window);
    let labels = label_set_for(&seq, decomposer, opts.scope, config.size_cap).map_err(core("labels"))?;
    let dec = decomposer.decompose(p, config.size_cap).map_err(core("decomposition"))?;
    let qd = clock
        .time("build", || QuantumDilation::new(p, &dec, Arc::new(Coupling::build(labels)), window, DEFAULT_DIM_CAP))
        .map_err(core("quantum"))?;

    report.push("kraus.unitality", qd.kraus().unitality_deviation(), tol.unwrap_or(1e-12), 1);
    let one = clock.time("one_step", || one_step_dilation_check(qd.kraus(), qd.v(), qd.phi())).map_err(core("one-step"))?;
    report.push_check("one_step", &one, tol);
    let qsf = clock
        .time("qsf", || qsf_check(qd.kraus(), qd.v(), qd.phi(), horizon, DEFAULT_DIM_CAP))
        .map_err(core("qsf"))?;
    report.push_check("qsf.recursion", &qsf.recursion, tol);
    report.push_check("qsf.expectation", &qsf.expectation, tol);
    let group = clock.time("group", || group_dilation_check(&qd, config.seed)).map_err(core("group"))?;
    report.push_check("group.unitarity", &group.unitarity, tol);
    report.push_check("group.dilation", &group.dilation, tol);
    report.push_check("group.flow_agreement", &group.flow_agreement, tol);
    report.push_check("group.shift_commutation", &group.shift_commutation, tol);
    report.push_check("group.conjugation", &group.conjugation, tol);
    report.push_check("group.diagonal_invariance", &group.diagonal_invariance, tol);

    let mut trajectories = CheckReport::new(dilatron_core::quantum::QUANTUM_TOLERANCE);
    let mut swap = Vec::new();
    clock.time("trajectory", || -> Result<(), CliError> {
        for k in 0..p.n() {
            let r = trajectory_distribution_check(&qd, k, config.seed.wrapping_add(k as u64), DEFAULT_SUPPORT_CAP)
                .map_err(core("trajectory"))?;
            trajectories.merge(&r.report);
            if let Some((c, q)) = r.swap_fixture {
                swap.push(json!({ "k": k, "classical": c, "quantum": q }));
            }
        }
        Ok(())
    })?;
    report.push_check("trajectory.distribution", &trajectories.finish(), tol);
    let eq = clock.time("eqexp", || eqexp_check(qd.kraus(), p, horizon)).map_err(core("eqexp"))?;
    report.push_check("eqexp", &eq, tol);

    report.notes.push(format!(
        "labels {}  slot dimension {}  window {}  dimension {}  kraus operators {}",
        qd.coupling().labels().len(),
        qd.slot_dim(),
        window,
        qd.dim(),
        qd.kraus().kraus_operators().len()
    ));
    report.details = json!({
        "horizon": horizon,
        "window": window,
        "labels": qd.coupling().labels().len(),
        "slot_dimension": qd.slot_dim(),
        "dimension": qd.dim(),
        "kraus_operators": qd.kraus().kraus_operators().len(),
        "swap_fixture": swap,
    });
    Ok(())
}
