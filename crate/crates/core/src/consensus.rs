//! The round engine.
//!
//! Each round every agent replaces its measure with the barycenter of its
//! neighbours' measures, weighted by its row of `W(t)`. All agents read the
//! round-`t` snapshot. Per-agent solves and pairwise distances run on rayon;
//! results are collected in index order, so traces do not depend on the
//! thread count.

use log::{debug, info, warn};
use nalgebra::{DMatrix, DVector};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::barycenter::{bar, bar_with_telemetry, BarycenterProblem, BarycenterTelemetry};
use crate::error::{Error, Result};
use crate::linalg;
use crate::measures::{check_homogeneous, quadratic_functional, second_moment, Measure, MeasureKind};
use crate::network::GraphSchedule;
use crate::transport::{w2, SolverConfig};

/// Modulus of the second moment along generalized geodesics.
pub const V2_CONVEXITY: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsensusState {
    pub t: usize,
    pub agents: Vec<Measure>,
}

impl ConsensusState {
    /// State at round 0. Needs at least two agents of one kind and dimension.
    pub fn new(agents: Vec<Measure>) -> Result<Self> {
        if agents.len() < 2 {
            return Err(Error::Parameter(format!("consensus needs n >= 2 agents, got {}", agents.len())));
        }
        check_homogeneous(&agents)?;
        Ok(Self { t: 0, agents })
    }

    pub fn n(&self) -> usize {
        self.agents.len()
    }

    pub fn dim(&self) -> usize {
        self.agents[0].dim()
    }

    pub fn kind(&self) -> MeasureKind {
        self.agents[0].kind()
    }

    /// Relabels agent `i` as `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let n = self.n();
        let mut slots: Vec<Option<Measure>> = vec![None; n];
        if perm.len() != n {
            return Err(Error::Parameter("not a permutation of the agents".into()));
        }
        for (i, &p) in perm.iter().enumerate() {
            if p >= n || slots[p].is_some() {
                return Err(Error::Parameter("not a permutation of the agents".into()));
            }
            slots[p] = Some(self.agents[i].clone());
        }
        Ok(Self {
            t: self.t,
            agents: slots.into_iter().map(|m| m.expect("filled")).collect(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StopCriteria {
    pub max_rounds: usize,
    pub diameter_threshold: f64,
}

impl Default for StopCriteria {
    fn default() -> Self {
        Self {
            max_rounds: 500,
            diameter_threshold: 1e-8,
        }
    }
}

impl StopCriteria {
    pub fn validate(&self) -> Result<()> {
        if self.max_rounds < 1 {
            return Err(Error::Parameter("max_rounds must be at least 1".into()));
        }
        if !(self.diameter_threshold >= 0.0 && self.diameter_threshold.is_finite()) {
            return Err(Error::Parameter("diameter_threshold must be a nonnegative number".into()));
        }
        Ok(())
    }
}

/// Metrics of the state at round `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub t: usize,
    pub v2: Vec<f64>,
    pub v2_max: f64,
    pub w2_pairwise: DMatrix<f64>,
    pub diameter: f64,
    /// Jensen residuals of the barycenters that produced this state. All zero
    /// at `t = 0`.
    pub jensen_residuals: Vec<f64>,
    /// Largest iteration count and residual, total restarts, over the round.
    pub telemetry: BarycenterTelemetry,
}

impl MetricsRecord {
    pub fn max_jensen_residual(&self) -> f64 {
        self.jensen_residuals.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `max_{i,j} |V₂(μ_i) − V₂(μ_j)|`.
    pub fn v2_spread(&self) -> f64 {
        let lo = self.v2.iter().copied().fold(f64::INFINITY, f64::min);
        self.v2_max - lo
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    /// Diameter reached the threshold.
    Converged,
    /// `max_rounds` rounds ran without reaching it.
    MaxRounds,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub status: RunStatus,
    /// Round index of the last recorded state.
    pub rounds: usize,
    pub final_diameter: f64,
}

/// States and metrics for rounds `0..=rounds`, plus how the run ended. On
/// failure the steps completed so far are kept.
#[derive(Debug)]
pub struct Trace {
    pub steps: Vec<(ConsensusState, MetricsRecord)>,
    pub result: Result<RunSummary>,
}

impl Trace {
    pub fn records(&self) -> impl Iterator<Item = &MetricsRecord> {
        self.steps.iter().map(|(_, m)| m)
    }

    pub fn states(&self) -> impl Iterator<Item = &ConsensusState> {
        self.steps.iter().map(|(s, _)| s)
    }

    pub fn last(&self) -> Option<&(ConsensusState, MetricsRecord)> {
        self.steps.last()
    }
}

/// Seed handed to agent `i`'s barycenter solve in round `t`.
pub fn agent_seed(seed: u64, t: usize, i: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(t as u64);
    rng.set_word_pos(2 * i as u128);
    rng.next_u64()
}

fn neighbour_problem(state: &ConsensusState, w: &DMatrix<f64>, i: usize) -> Result<BarycenterProblem> {
    let (measures, weights): (Vec<Measure>, Vec<f64>) = (0..state.n())
        .filter(|&j| w[(i, j)] > 0.0)
        .map(|j| (state.agents[j].clone(), w[(i, j)]))
        .unzip();
    BarycenterProblem::new(measures, weights)
}

struct Update {
    measure: Measure,
    telemetry: BarycenterTelemetry,
    jensen: f64,
}

fn update_agent(state: &ConsensusState, w: &DMatrix<f64>, i: usize, cfg: &SolverConfig, seed: u64) -> Result<Update> {
    let problem = neighbour_problem(state, w, i)?;
    let out = bar_with_telemetry(&problem, cfg, agent_seed(seed, state.t, i))?;
    let jensen = check_jensen(problem.measures(), problem.weights(), &out.measure, V2_CONVEXITY, cfg)?;
    Ok(Update {
        measure: out.measure,
        telemetry: out.telemetry,
        jensen,
    })
}

fn round_error(state: &ConsensusState, agent: usize, source: Error) -> Error {
    Error::Round {
        round: state.t,
        agent,
        source: Box::new(source),
    }
}

fn weights_for<'a>(schedule: &'a GraphSchedule, state: &ConsensusState) -> Result<&'a DMatrix<f64>> {
    if schedule.n() != state.n() {
        return Err(Error::Schedule(format!(
            "schedule has {} agents, state has {}",
            schedule.n(),
            state.n()
        )));
    }
    schedule
        .weights_at(state.t)
        .ok_or_else(|| Error::Schedule(format!("no weight matrix for round {}", state.t)))
}

fn advance(
    state: &ConsensusState,
    schedule: &GraphSchedule,
    cfg: &SolverConfig,
    seed: u64,
) -> Result<(ConsensusState, Vec<f64>, BarycenterTelemetry)> {
    let w = weights_for(schedule, state)?;
    let results: Vec<Result<Update>> = (0..state.n())
        .into_par_iter()
        .map(|i| update_agent(state, w, i, cfg, seed))
        .collect();
    let mut agents = Vec::with_capacity(state.n());
    let mut jensen = Vec::with_capacity(state.n());
    let mut telemetry = BarycenterTelemetry::default();
    for (i, r) in results.into_iter().enumerate() {
        let u = r.map_err(|e| round_error(state, i, e))?;
        telemetry.iterations = telemetry.iterations.max(u.telemetry.iterations);
        telemetry.residual = telemetry.residual.max(u.telemetry.residual);
        telemetry.restarts += u.telemetry.restarts;
        agents.push(u.measure);
        jensen.push(u.jensen);
    }
    Ok((ConsensusState { t: state.t + 1, agents }, jensen, telemetry))
}

/// One synchronous round: `μ_i(t+1) = bar({(μ_j(t), w_ij(t)) : w_ij(t) > 0})`.
pub fn step(state: &ConsensusState, schedule: &GraphSchedule, cfg: &SolverConfig, seed: u64) -> Result<ConsensusState> {
    advance(state, schedule, cfg, seed).map(|(s, _, _)| s)
}

/// [`step`] followed by the metrics of the new state.
pub fn step_with_metrics(
    state: &ConsensusState,
    schedule: &GraphSchedule,
    cfg: &SolverConfig,
    seed: u64,
) -> Result<(ConsensusState, MetricsRecord)> {
    let (next, jensen, telemetry) = advance(state, schedule, cfg, seed)?;
    let record = metrics(&next, cfg, jensen, telemetry)?;
    Ok((next, record))
}

/// Symmetric matrix of pairwise W₂ distances (zero diagonal).
pub fn pairwise_w2(state: &ConsensusState, cfg: &SolverConfig) -> Result<DMatrix<f64>> {
    let n = state.n();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let dists: Vec<Result<f64>> = pairs
        .par_iter()
        .map(|&(i, j)| w2(&state.agents[i], &state.agents[j], cfg))
        .collect();
    let mut out = DMatrix::zeros(n, n);
    for (&(i, j), d) in pairs.iter().zip(dists) {
        let d = d?;
        out[(i, j)] = d;
        out[(j, i)] = d;
    }
    Ok(out)
}

/// `max_{i<j} W₂(μ_i, μ_j)`.
pub fn diameter(state: &ConsensusState, cfg: &SolverConfig) -> Result<f64> {
    Ok(pairwise_w2(state, cfg)?.max())
}

/// `V₂(ν) − Σλ_j V₂(μ_j) + (k/2) Σλ_j W₂²(ν, μ_j)`. At a true barycenter
/// this is at most zero for `k = 2`.
pub fn check_jensen(measures: &[Measure], weights: &[f64], bar_out: &Measure, k: f64, cfg: &SolverConfig) -> Result<f64> {
    if measures.len() != weights.len() {
        return Err(Error::InvalidWeights(format!(
            "{} measures but {} weights",
            measures.len(),
            weights.len()
        )));
    }
    let mut avg_v2 = 0.0;
    let mut spread = 0.0;
    for (m, &l) in measures.iter().zip(weights) {
        avg_v2 += l * second_moment(m);
        if m != bar_out {
            let d = w2(bar_out, m, cfg)?;
            spread += l * d * d;
        }
    }
    Ok(second_moment(bar_out) - avg_v2 + 0.5 * k * spread)
}

/// Metrics of a state. `jensen_residuals` and `telemetry` come from the round
/// that produced it.
pub fn metrics(
    state: &ConsensusState,
    cfg: &SolverConfig,
    jensen_residuals: Vec<f64>,
    telemetry: BarycenterTelemetry,
) -> Result<MetricsRecord> {
    let v2: Vec<f64> = state.agents.iter().map(second_moment).collect();
    let v2_max = v2.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w2_pairwise = pairwise_w2(state, cfg)?;
    let diameter = w2_pairwise.max();
    Ok(MetricsRecord {
        t: state.t,
        v2,
        v2_max,
        w2_pairwise,
        diameter,
        jensen_residuals,
        telemetry,
    })
}

/// Runs rounds until the diameter is at most the threshold or `max_rounds`
/// rounds have run, handing every recorded state to `observer`.
///
/// Metrics of round `t` are recorded before the stop test, so a converged run
/// of `r` rounds reports `r + 1` records. Errors from a round are wrapped in
/// [`Error::Round`]; everything recorded before the failure has already gone
/// to the observer.
pub fn run_with<F>(
    initial: &ConsensusState,
    schedule: &GraphSchedule,
    cfg: &SolverConfig,
    stop: &StopCriteria,
    seed: u64,
    mut observer: F,
) -> Result<RunSummary>
where
    F: FnMut(&ConsensusState, &MetricsRecord) -> Result<()>,
{
    cfg.validate()?;
    stop.validate()?;
    let extended;
    let schedule = if schedule.horizon() < initial.t + stop.max_rounds && schedule.generator().is_some() {
        extended = schedule.extended(initial.t + stop.max_rounds)?;
        &extended
    } else {
        schedule
    };
    let n = initial.n();
    let mut state = initial.clone();
    let mut jensen = vec![0.0; n];
    let mut telemetry = BarycenterTelemetry::default();
    loop {
        let record = metrics(&state, cfg, jensen, telemetry)?;
        observer(&state, &record)?;
        let done = state.t - initial.t;
        debug!(
            "round {}: diameter {:.6e}, v2_max {:.6e}",
            record.t, record.diameter, record.v2_max
        );
        if record.diameter <= stop.diameter_threshold {
            info!("converged at round {} (diameter {:e})", record.t, record.diameter);
            return Ok(RunSummary {
                status: RunStatus::Converged,
                rounds: record.t,
                final_diameter: record.diameter,
            });
        }
        if done >= stop.max_rounds {
            warn!(
                "stopped after {} rounds with diameter {:e}",
                stop.max_rounds, record.diameter
            );
            return Ok(RunSummary {
                status: RunStatus::MaxRounds,
                rounds: record.t,
                final_diameter: record.diameter,
            });
        }
        let (next, j, tel) = advance(&state, schedule, cfg, seed)?;
        state = next;
        jensen = j;
        telemetry = tel;
    }
}

/// [`run_with`] collecting every state and record.
pub fn run(
    initial: &ConsensusState,
    schedule: &GraphSchedule,
    cfg: &SolverConfig,
    stop: &StopCriteria,
    seed: u64,
) -> Trace {
    let mut steps = Vec::new();
    let result = run_with(initial, schedule, cfg, stop, seed, |s, m| {
        steps.push((s.clone(), m.clone()));
        Ok(())
    });
    Trace { steps, result }
}

/// `V(μ) = ∫(xᵀQx + b·x + c) dμ` for every recorded state: one row per
/// round, one column per agent. `Q` must be PSD.
pub fn functional_trace<'a>(
    states: impl IntoIterator<Item = &'a ConsensusState>,
    q: &DMatrix<f64>,
    b: &DVector<f64>,
    c: f64,
) -> Result<Vec<Vec<f64>>> {
    if q.nrows() == q.ncols() {
        let min = linalg::min_eigenvalue(&linalg::symmetrize(q));
        if min < linalg::PSD_TOL {
            warn!("quadratic functional is not convex (smallest eigenvalue {min:e})");
            return Err(Error::NotPsd { min_eigenvalue: min });
        }
    }
    states
        .into_iter()
        .map(|s| s.agents.iter().map(|m| quadratic_functional(m, q, b, c)).collect())
        .collect()
}

/// Uniform barycenter of all agents, used as the empirical limit.
pub fn estimate_limit(state: &ConsensusState, cfg: &SolverConfig, seed: u64) -> Result<Measure> {
    bar(&BarycenterProblem::uniform(state.agents.clone())?, cfg, seed)
}
