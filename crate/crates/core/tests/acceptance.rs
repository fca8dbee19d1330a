//! Acceptance suite.
//!
//! Runs without the libtest harness so every criterion prints exactly one
//! `criterion <id>: PASS|FAIL ...` line, and all criteria run even when an
//! earlier one fails. Exits non-zero if any criterion fails.
//!
//! `cargo test --test acceptance -- 1 5b 9` runs a subset.

use std::panic::{self, AssertUnwindSafe};
use std::path::PathBuf;
use std::sync::OnceLock;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use wasserstein_consensus::barycenter::{bar, BarycenterProblem};
use wasserstein_consensus::config::{preset_agents, Preset, PresetKind, ScenarioConfig};
use wasserstein_consensus::consensus::{check_jensen, run, step, RunStatus, StopCriteria, Trace, V2_CONVEXITY};
use wasserstein_consensus::measures::{sample, DiscreteMeasure, GaussianMeasure, Measure};
use wasserstein_consensus::network::{
    generate_schedule, validate_schedule, verify_meeting_lemma, GraphSchedule, ScheduleKind, ViolationKind,
};
use wasserstein_consensus::trace::TraceWriter;
use wasserstein_consensus::transport::{sinkhorn, w2_gaussian, wp_1d, wp_discrete_exact, SolverConfig};
use wasserstein_consensus::verify::displacement_excess;
use wasserstein_consensus::ConsensusState;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

fn gaussian_preset() -> Preset {
    Preset {
        kind: PresetKind::RandomGaussian,
        seed: None,
        mean_range: [-1.0, 1.0],
        eigenvalue_range: [0.5, 2.0],
        atoms: 10,
    }
}

fn random_gaussians(n: usize, d: usize, seed: u64) -> Vec<Measure> {
    preset_agents(&gaussian_preset(), n, d, seed).expect("gaussian preset")
}

fn random_discrete(rng: &mut ChaCha8Rng, m: usize, d: usize, lo: f64, hi: f64) -> DiscreteMeasure {
    let atoms: Vec<f64> = (0..m * d).map(|_| rng.random_range(lo..hi)).collect();
    let raw: Vec<f64> = (0..m).map(|_| rng.random_range(0.1..1.0)).collect();
    let total: f64 = raw.iter().sum();
    DiscreteMeasure::new(d, atoms, raw.iter().map(|w| w / total).collect()).expect("discrete measure")
}

fn random_simplex(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|w| w / total).collect()
}

fn trace_csv(trace: &Trace, n: usize) -> Vec<u8> {
    let mut w = TraceWriter::new(Vec::new(), n).expect("trace writer");
    for r in trace.records() {
        w.write(r).expect("trace row");
    }
    w.into_inner().expect("trace buffer")
}

/// A finished run plus what is needed to re-check it.
struct Run {
    name: String,
    trace: Trace,
    schedule: GraphSchedule,
    cfg: SolverConfig,
}

// ---------------------------------------------------------------------------
// Shared runs

fn golden_config() -> ScenarioConfig {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/golden.json");
    ScenarioConfig::load(&path).expect("golden config")
}

fn golden_run_once() -> (Run, f64) {
    let cfg = golden_config();
    let initial = cfg.build_initial().unwrap();
    let schedule = cfg.build_schedule().unwrap();
    let start = Instant::now();
    let trace = run(&initial, &schedule, &cfg.solver, &cfg.stop, cfg.seed);
    let secs = start.elapsed().as_secs_f64();
    let rounds = trace.last().map_or(0, |(s, _)| s.t);
    let schedule = schedule.extended(rounds).unwrap_or(schedule);
    (
        Run {
            name: "golden".into(),
            trace,
            schedule,
            cfg: cfg.solver,
        },
        secs,
    )
}

fn golden() -> &'static (Run, f64) {
    static CELL: OnceLock<(Run, f64)> = OnceLock::new();
    CELL.get_or_init(golden_run_once)
}

const SCENARIOS: u64 = 50;

fn scenario(seed: u64) -> Run {
    let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
    let n = rng.random_range(2..=6);
    let d = rng.random_range(1..=3);
    let kinds = [
        ScheduleKind::Complete,
        ScheduleKind::RingRotating,
        ScheduleKind::RandomJointlyConnected,
        ScheduleKind::LeaderlessNeighbors,
    ];
    let kind = kinds[rng.random_range(0..kinds.len())];
    let (l, delta) = match kind {
        ScheduleKind::RingRotating => (n - 1 + rng.random_range(0..=1), rng.random_range(0.1..0.5)),
        _ => (rng.random_range(1..=4), rng.random_range(0.05..=1.0 / n as f64)),
    };
    let stop = StopCriteria {
        max_rounds: 3000,
        diameter_threshold: 1e-8,
    };
    let schedule = generate_schedule(kind, n, l, delta, seed, stop.max_rounds).unwrap();
    let initial = ConsensusState::new(random_gaussians(n, d, seed)).unwrap();
    let cfg = SolverConfig::default();
    let trace = run(&initial, &schedule, &cfg, &stop, seed);
    Run {
        name: format!("scenario {seed} (n={n}, d={d}, {kind:?}, L={l}, delta={delta:.3})"),
        trace,
        schedule,
        cfg,
    }
}

fn scenarios() -> &'static Vec<Run> {
    static CELL: OnceLock<Vec<Run>> = OnceLock::new();
    CELL.get_or_init(|| (0..SCENARIOS).map(scenario).collect())
}

const CLIQUE_ROUNDS: usize = 200;

fn two_cliques() -> &'static (Run, f64, ValidationSummary) {
    static CELL: OnceLock<(Run, f64, ValidationSummary)> = OnceLock::new();
    CELL.get_or_init(|| {
        let n = 6;
        let w = DMatrix::from_fn(n, n, |i, j| if i / 3 == j / 3 { 1.0 / 3.0 } else { 0.0 });
        let schedule = GraphSchedule::fixed(w, CLIQUE_ROUNDS, 1.0 / 3.0).unwrap();
        let report = validate_schedule(&schedule, CLIQUE_ROUNDS);
        let summary = ValidationSummary {
            valid: report.is_valid(),
            disconnected: report.count(ViolationKind::NotJointlyConnected),
        };
        let xs = [0.0, 0.1, 0.2, 1.2, 1.3, 1.4];
        let vars = [0.5, 0.6, 0.7, 0.7, 0.6, 0.5];
        let agents: Vec<Measure> = xs
            .iter()
            .zip(vars)
            .map(|(&x, s)| {
                GaussianMeasure::new(DVector::from_vec(vec![x, 0.0]), DMatrix::from_diagonal(&DVector::from_vec(vec![s, 1.0])))
                    .unwrap()
                    .into()
            })
            .collect();
        let cfg = SolverConfig::default();
        let initial = ConsensusState::new(agents).unwrap();
        // Inter-clique separation: smallest W₂ between agents of different cliques.
        let mut separation = f64::INFINITY;
        for i in 0..3 {
            for j in 3..6 {
                let (a, b) = (initial.agents[i].as_gaussian().unwrap(), initial.agents[j].as_gaussian().unwrap());
                separation = separation.min(w2_gaussian(a, b).unwrap());
            }
        }
        let stop = StopCriteria {
            max_rounds: CLIQUE_ROUNDS,
            diameter_threshold: 1e-8,
        };
        let trace = run(&initial, &schedule, &cfg, &stop, 0);
        (
            Run {
                name: "two cliques".into(),
                trace,
                schedule,
                cfg,
            },
            separation,
            summary,
        )
    })
}

struct ValidationSummary {
    valid: bool,
    disconnected: usize,
}

// ---------------------------------------------------------------------------
// Criteria

fn criterion_1() -> Outcome {
    let (golden, secs) = golden();
    let trace = &golden.trace;
    let summary = match &trace.result {
        Ok(s) => *s,
        Err(e) => return Outcome::new(false, format!("run failed: {e}")),
    };
    let threshold = 1e-8;
    let below = summary.status == RunStatus::Converged && summary.final_diameter < threshold && summary.rounds <= 500;

    // Decay across consecutive meeting spans: t_k = τ_{k(n−1)}.
    let n = golden.schedule.n();
    let diam: Vec<f64> = trace.records().map(|r| r.diameter).collect();
    let marks: Vec<usize> = golden
        .schedule
        .partition()
        .iter()
        .step_by(n - 1)
        .copied()
        .take_while(|&t| t < diam.len())
        .collect();
    let mut decreasing = true;
    let mut first_stall = None;
    for pair in marks.windows(2) {
        let (a, b) = (diam[pair[0]], diam[pair[1]]);
        if a > threshold && !(b < a) {
            decreasing = false;
            first_stall.get_or_insert(pair[1]);
        }
    }
    let fast = *secs <= 30.0;
    Outcome::new(
        below && decreasing && fast,
        format!(
            "converged={:?} after {} rounds, final diameter {:.3e}; diameter strictly decreasing over {} spans{}; {:.2}s (limit 30s)",
            summary.status,
            summary.rounds,
            summary.final_diameter,
            marks.len().saturating_sub(1),
            first_stall.map_or(String::new(), |t| format!(" (stalls at t={t})")),
            secs
        ),
    )
}

fn criterion_2() -> Outcome {
    let runs = scenarios();
    let mut worst_increase = f64::NEG_INFINITY;
    let mut worst_spread: f64 = 0.0;
    let mut failures = Vec::new();
    let mut rounds = 0;
    for r in runs {
        let records: Vec<_> = r.trace.records().collect();
        rounds += records.len().saturating_sub(1);
        if let Err(e) = &r.trace.result {
            failures.push(format!("{}: {e}", r.name));
            continue;
        }
        let mut ok = true;
        for pair in records.windows(2) {
            let inc = pair[1].v2_max - pair[0].v2_max;
            worst_increase = worst_increase.max(inc);
            if inc > 1e-9 {
                ok = false;
            }
        }
        let spread = records.last().map_or(f64::INFINITY, |m| m.v2_spread());
        worst_spread = worst_spread.max(spread);
        if spread > 1e-6 {
            ok = false;
        }
        if !ok {
            failures.push(r.name.clone());
        }
    }
    Outcome::new(
        failures.is_empty(),
        format!(
            "{} runs, {rounds} rounds: max v2_max increase {worst_increase:.3e} (tol 1e-9), max final spread {worst_spread:.3e} (tol 1e-6){}",
            runs.len(),
            if failures.is_empty() {
                String::new()
            } else {
                format!("; failing: {}", failures.join(", "))
            }
        ),
    )
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let cfg = SolverConfig::default();
    let mut worst_gauss = f64::NEG_INFINITY;
    let mut bad_gauss = 0;
    for case in 0..200u64 {
        let n = rng.random_range(1..=5);
        let d = rng.random_range(1..=3);
        let measures = random_gaussians(n, d, 30_000 + case);
        let weights = random_simplex(&mut rng, n);
        let problem = BarycenterProblem::new(measures.clone(), weights.clone()).unwrap();
        let b = bar(&problem, &cfg, case).unwrap();
        let res = check_jensen(&measures, &weights, &b, V2_CONVEXITY, &cfg).unwrap();
        worst_gauss = worst_gauss.max(res);
        if res > 1e-8 {
            bad_gauss += 1;
        }
    }
    let mut worst_disc = f64::NEG_INFINITY;
    let mut bad_disc = 0;
    for case in 0..50u64 {
        let n = rng.random_range(2..=4);
        let d = rng.random_range(1..=2);
        let measures: Vec<Measure> = (0..n)
            .map(|_| {
                let m = rng.random_range(1..=30);
                random_discrete(&mut rng, m, d, 0.0, 1.0).into()
            })
            .collect();
        let weights = random_simplex(&mut rng, n);
        let problem = BarycenterProblem::new(measures.clone(), weights.clone()).unwrap();
        let b = bar(&problem, &cfg, case).unwrap();
        let res = check_jensen(&measures, &weights, &b, V2_CONVEXITY, &cfg).unwrap();
        worst_disc = worst_disc.max(res);
        if res > 1e-6 {
            bad_disc += 1;
        }
    }
    Outcome::new(
        bad_gauss == 0 && bad_disc == 0,
        format!(
            "gaussian: max residual {worst_gauss:.3e} over 200 (tol 1e-8, {bad_gauss} over); discrete: max residual {worst_disc:.3e} over 50 (tol 1e-6, {bad_disc} over)"
        ),
    )
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let start = Instant::now();
    let mut failures = 0;
    let mut over_bound = 0;
    let mut incomplete = 0;
    let mut worst_ratio: f64 = 0.0;
    for seed in 0..1000u64 {
        let n = rng.random_range(2..=6);
        let l = rng.random_range(1..=4);
        let delta = rng.random_range(0.01..=1.0 / n as f64);
        let schedule = generate_schedule(ScheduleKind::RandomJointlyConnected, n, l, delta, seed, 1).unwrap();
        let report = verify_meeting_lemma(&schedule, 10);
        failures += report.failures.len();
        if report.m > report.m_bound {
            over_bound += 1;
        }
        if report.incomplete.is_some() {
            incomplete += 1;
        }
        worst_ratio = worst_ratio.max(report.m as f64 / report.m_bound as f64);
    }
    let secs = start.elapsed().as_secs_f64();
    Outcome::new(
        failures == 0 && over_bound == 0 && incomplete == 0 && secs <= 10.0,
        format!(
            "1000 schedules, k_max=10: {failures} meeting failures, {over_bound} with M > 2L(n-1) (max M/bound {worst_ratio:.3}), {incomplete} incomplete; {secs:.2}s (limit 10s)"
        ),
    )
}

fn criterion_5a() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(51);
    let cfg = SolverConfig::default();
    let mut worst: f64 = 0.0;
    let mut bad = 0;
    for _ in 0..100 {
        let (m1, m2) = (rng.random_range(1..=80), rng.random_range(1..=80));
        let mu = random_discrete(&mut rng, m1, 1, -1.0, 1.0);
        let nu = random_discrete(&mut rng, m2, 1, -1.0, 1.0);
        let (lp, _) = wp_discrete_exact(&mu, &nu, 2.0, &cfg).unwrap();
        let q = wp_1d(&mu, &nu, 2.0).unwrap();
        let e = rel_err(lp, q);
        worst = worst.max(e);
        if e > 1e-8 {
            bad += 1;
        }
    }
    Outcome::new(
        bad == 0,
        format!("100 1-D pairs: max relative gap exact LP vs quantile {worst:.3e} (tol 1e-8, {bad} over)"),
    )
}

fn criterion_5b() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(52);
    let cfg = SolverConfig {
        lp_max_entries: 100_000_000,
        ..SolverConfig::default()
    };
    let samples = 10_000;
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut worst_case = String::new();
    let mut bad = Vec::new();
    for case in 0..100u64 {
        let d = rng.random_range(1..=3);
        let pair = random_gaussians(2, d, 50_000 + case);
        let (a, b) = (pair[0].as_gaussian().unwrap(), pair[1].as_gaussian().unwrap());
        let exact = w2_gaussian(a, b).unwrap();
        // xb is the image of xa under the optimal affine map, which is itself
        // an exact sample of the second law.
        let map = monge_map(a.cov(), b.cov());
        let pushed = &map * a.cov() * map.transpose();
        assert!((&pushed - b.cov()).norm() <= 1e-9 * (1.0 + b.cov().norm()), "map does not push a to b");
        let xa = sample(&pair[0], samples, case + 1).unwrap();
        let mut atoms = Vec::with_capacity(samples * d);
        for i in 0..samples {
            let x = DVector::from_column_slice(xa.atom(i)) - a.mean();
            atoms.extend((b.mean() + &map * x).iter());
        }
        let xb = DiscreteMeasure::uniform(d, atoms).unwrap();
        let (emp, _) = wp_discrete_exact(&xa, &xb, 2.0, &cfg).unwrap();
        let e = rel_err(emp, exact);
        if e > worst {
            worst = e;
            worst_case = format!("case {case}, d={d}, W2={exact:.4}, empirical {emp:.4}");
        }
        if e > 0.05 {
            bad.push(format!("{case} (d={d}, W2={exact:.3}, rel {e:.3})"));
        }
    }
    Outcome::new(
        bad.is_empty(),
        format!(
            "100 gaussian pairs, {samples}-sample clouds coupled by the affine map: max relative gap {worst:.3e} [{worst_case}] (tol 5e-2, {} over{}); {:.0}s",
            bad.len(),
            if bad.is_empty() {
                String::new()
            } else {
                format!(": {}", bad.join(", "))
            },
            start.elapsed().as_secs_f64()
        ),
    )
}

fn sym_pow(m: &DMatrix<f64>, p: f64) -> DMatrix<f64> {
    let e = m.clone().symmetric_eigen();
    let l = DMatrix::from_diagonal(&e.eigenvalues.map(|v| v.powf(p)));
    &e.eigenvectors * l * e.eigenvectors.transpose()
}

/// `A^{-1/2} (A^{1/2} B A^{1/2})^{1/2} A^{-1/2}`, the symmetric positive map taking `N(0, A)` to `N(0, B)`.
fn monge_map(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (h, hi) = (sym_pow(a, 0.5), sym_pow(a, -0.5));
    &hi * sym_pow(&(&h * b * &h), 0.5) * &hi
}

fn criterion_5c() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(53);
    let cfg = SolverConfig::sinkhorn(1e-3);
    let mut worst: f64 = 0.0;
    let mut bad = 0;
    for _ in 0..100 {
        let (m1, m2) = (rng.random_range(2..=40), rng.random_range(2..=40));
        let mu = uniform_unit(&mut rng, m1);
        let nu = uniform_unit(&mut rng, m2);
        let est = sinkhorn(&mu, &nu, &cfg).unwrap().estimate;
        let q = wp_1d(&mu, &nu, 2.0).unwrap();
        let e = rel_err(est, q);
        worst = worst.max(e);
        if e > 1e-3 {
            bad += 1;
        }
    }
    Outcome::new(
        bad == 0,
        format!("100 unit-scale 1-D pairs at eps=1e-3: max relative gap {worst:.3e} (tol 1e-3, {bad} over)"),
    )
}

fn uniform_unit(rng: &mut ChaCha8Rng, m: usize) -> DiscreteMeasure {
    let atoms: Vec<f64> = (0..m).map(|_| rng.random_range(0.0..1.0)).collect();
    DiscreteMeasure::uniform(1, atoms).unwrap()
}

fn criterion_6() -> Outcome {
    let n = 6;
    let cfg = SolverConfig::default();
    let rounds = 40;
    let schedules = [
        (ScheduleKind::Complete, 1, 1.0 / 6.0),
        (ScheduleKind::RingRotating, 5, 0.5),
        (ScheduleKind::RandomJointlyConnected, 3, 0.1),
        (ScheduleKind::LeaderlessNeighbors, 2, 0.1),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst: f64 = 0.0;
    let mut invalid = Vec::new();
    let mut checked = 0;
    for (k, &(kind, l, delta)) in schedules.iter().enumerate() {
        let schedule = generate_schedule(kind, n, l, delta, 60 + k as u64, rounds).unwrap();
        if !validate_schedule(&schedule, rounds).is_valid() {
            invalid.push(format!("{kind:?}"));
            continue;
        }
        for d in 1..=2 {
            let mut x: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
            let agents = x.iter().map(|p| DiscreteMeasure::dirac(p).unwrap().into()).collect();
            let mut state = ConsensusState::new(agents).unwrap();
            for t in 0..rounds {
                let w = schedule.weights_at(t).unwrap();
                x = (0..n)
                    .map(|i| (0..d).map(|c| (0..n).map(|j| w[(i, j)] * x[j][c]).sum()).collect())
                    .collect();
                state = step(&state, &schedule, &cfg, 6).unwrap();
                for (i, agent) in state.agents.iter().enumerate() {
                    let m = agent.as_discrete().unwrap();
                    assert_eq!(m.len(), 1, "agent {i} is not a Dirac at t={}", t + 1);
                    for c in 0..d {
                        worst = worst.max((m.atom(0)[c] - x[i][c]).abs());
                    }
                }
                checked += 1;
            }
        }
    }

    // One complete-graph round lands every agent on the mean.
    let pts: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect();
    let mean: Vec<f64> = (0..2).map(|c| pts.iter().map(|p| p[c]).sum::<f64>() / n as f64).collect();
    let complete = GraphSchedule::fixed(DMatrix::from_element(n, n, 1.0 / n as f64), 1, 1.0 / n as f64).unwrap();
    let state = ConsensusState::new(pts.iter().map(|p| DiscreteMeasure::dirac(p).unwrap().into()).collect()).unwrap();
    let next = step(&state, &complete, &cfg, 0).unwrap();
    let mean = &mean;
    let mean_err = next
        .agents
        .iter()
        .flat_map(|a| {
            let m = a.as_discrete().unwrap();
            (0..2).map(move |c| (m.atom(0)[c] - mean[c]).abs())
        })
        .fold(0.0, f64::max);
    let ok = invalid.is_empty() && worst <= 1e-10 && mean_err <= 1e-12;
    Outcome::new(
        ok,
        format!(
            "{checked} agent-rounds over 4 schedule kinds, d=1,2: max deviation from vector consensus {worst:.3e} (tol 1e-10); complete round off the mean by {mean_err:.3e}{}",
            if invalid.is_empty() {
                String::new()
            } else {
                format!("; invalid schedules: {}", invalid.join(", "))
            }
        ),
    )
}

fn criterion_7() -> Outcome {
    let mut runs: Vec<&Run> = vec![&golden().0];
    runs.extend(scenarios().iter());
    runs.push(&two_cliques().0);
    let mut worst = f64::NEG_INFINITY;
    let mut worst_at = String::new();
    let mut steps = 0;
    let mut errors = Vec::new();
    for r in runs {
        let states: Vec<&ConsensusState> = r.trace.states().collect();
        for pair in states.windows(2) {
            let (prev, next) = (pair[0], pair[1]);
            let Some(w) = r.schedule.weights_at(prev.t) else {
                errors.push(format!("{}: no weights for t={}", r.name, prev.t));
                break;
            };
            match displacement_excess(prev, next, w, r.schedule.delta(), &r.cfg) {
                Ok(e) => {
                    if e.global > worst {
                        worst = e.global;
                        worst_at = format!("{} t={} i={} l={}", r.name, prev.t, e.worst_agent.0, e.worst_agent.1);
                    }
                }
                Err(e) => errors.push(format!("{} t={}: {e}", r.name, prev.t)),
            }
            steps += 1;
        }
    }
    Outcome::new(
        errors.is_empty() && worst <= 1e-6,
        format!(
            "{steps} round transitions over {} gaussian traces: max excess {worst:.3e} at {worst_at} (tol 1e-6){}",
            SCENARIOS + 2,
            if errors.is_empty() {
                String::new()
            } else {
                format!("; errors: {}", errors.join("; "))
            }
        ),
    )
}

fn criterion_8() -> Outcome {
    let (r, separation, validation) = two_cliques();
    let records: Vec<_> = r.trace.records().collect();
    let min_diam = records.iter().map(|m| m.diameter).fold(f64::INFINITY, f64::min);
    let last_t = records.last().map_or(0, |m| m.t);
    let status = r.trace.result.as_ref().ok().map(|s| s.status);
    let ok = !validation.valid
        && validation.disconnected > 0
        && last_t == CLIQUE_ROUNDS
        && status == Some(RunStatus::MaxRounds)
        && min_diam >= 0.1;
    Outcome::new(
        ok,
        format!(
            "validator {} ({} connectivity violations); inter-clique separation {separation:.3}; {} rounds, status {:?}, min diameter {min_diam:.4} (floor 0.1)",
            if validation.valid { "accepted" } else { "rejected" },
            validation.disconnected,
            last_t,
            status
        ),
    )
}

fn criterion_9() -> Outcome {
    let n = golden_config().agents;
    let reference = trace_csv(&golden().0.trace, n);
    let again = trace_csv(&golden_run_once().0.trace, n);
    let mut mismatched = Vec::new();
    if again != reference {
        mismatched.push("repeat".to_string());
    }
    for threads in [1, 2, 4] {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        let csv = pool.install(|| trace_csv(&golden_run_once().0.trace, n));
        if csv != reference {
            mismatched.push(format!("{threads} threads"));
        }
    }
    Outcome::new(
        mismatched.is_empty(),
        format!(
            "golden CSV ({} bytes) compared across a repeat and 1, 2, 4 threads: {}",
            reference.len(),
            if mismatched.is_empty() {
                "byte-identical".to_string()
            } else {
                format!("differs for {}", mismatched.join(", "))
            }
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("1", criterion_1),
        ("2", criterion_2),
        ("3", criterion_3),
        ("4", criterion_4),
        ("5a", criterion_5a),
        ("5b", criterion_5b),
        ("5c", criterion_5c),
        ("6", criterion_6),
        ("7", criterion_7),
        ("8", criterion_8),
        ("9", criterion_9),
    ];
    let wanted: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let selected = |id: &str| wanted.is_empty() || wanted.iter().any(|w| w == id || id.starts_with(w.as_str()));

    panic::set_hook(Box::new(|_| {}));
    let mut failed = Vec::new();
    let mut ran = 0;
    for (id, f) in criteria.iter() {
        if !selected(id) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Outcome::new(false, format!("panicked: {msg}"))
        });
        println!(
            "criterion {id}: {} {} [{:.1}s]",
            if outcome.pass { "PASS" } else { "FAIL" },
            outcome.detail,
            start.elapsed().as_secs_f64()
        );
        if !outcome.pass {
            failed.push(*id);
        }
    }
    println!(
        "acceptance: {} of {ran} criteria passed{}",
        ran - failed.len(),
        if failed.is_empty() {
            String::new()
        } else {
            format!("; failed: {}", failed.join(", "))
        }
    );
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
