//! Time-varying communication graphs.
//!
//! A [`GraphSchedule`] stores one row-stochastic matrix `W(t)` per round.
//! Adjacency is the positivity pattern of `W(t)`. Rounds are grouped by a
//! partition `0 = τ₀ < τ₁ < ⋯`; within each window `⟦τ_k, τ_{k+1}−1⟧` the
//! union graph must be connected, windows are at most `L` rounds long and
//! every active weight is at least `δ`.

use std::io::Write;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::neumaier_sum;

/// Row sums must equal one to this tolerance.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// Probability of each extra edge per round in the random generators.
const EXTRA_EDGE_PROB: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    /// Uniform weights `1/n` on the complete graph every round.
    Complete,
    /// One ring edge `(t mod n, t+1 mod n)` per round, endpoint weights ½.
    RingRotating,
    /// Per window: a random spanning tree spread over the window's rounds,
    /// plus random extra edges; random weights in `[δ, 1/|N_i|]`.
    RandomJointlyConnected,
    /// The same random topology with weights `1/|N_i(t)|`.
    LeaderlessNeighbors,
}

impl std::str::FromStr for ScheduleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| Error::Parameter(format!("unknown schedule kind `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorParams {
    pub n: usize,
    #[serde(rename = "L")]
    pub l: usize,
    pub delta: f64,
}

/// `{kind, params, seed}` description of a generated schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    pub kind: ScheduleKind,
    pub params: GeneratorParams,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphSchedule {
    n: usize,
    rounds: Vec<DMatrix<f64>>,
    partition: Vec<usize>,
    l: usize,
    delta: f64,
    generator: Option<GeneratorSpec>,
}

impl GraphSchedule {
    /// Explicit schedule. Only shapes are checked here; the standing
    /// assumptions are checked by [`validate_schedule`], so that invalid
    /// schedules can still be built for negative tests.
    pub fn new(n: usize, rounds: Vec<DMatrix<f64>>, partition: Vec<usize>, l: usize, delta: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::Schedule("agent count must be positive".into()));
        }
        if let Some((t, w)) = rounds.iter().enumerate().find(|(_, w)| w.nrows() != n || w.ncols() != n) {
            return Err(Error::Schedule(format!(
                "W({t}) is {}x{}, expected {n}x{n}",
                w.nrows(),
                w.ncols()
            )));
        }
        if let Some((t, _)) = rounds.iter().enumerate().find(|(_, w)| w.iter().any(|v| !v.is_finite())) {
            return Err(Error::Schedule(format!("W({t}) has a non-finite entry")));
        }
        Ok(Self {
            n,
            rounds,
            partition,
            l,
            delta,
            generator: None,
        })
    }

    /// The same matrix every round, with unit windows (`τ_k = k`, `L = 1`).
    pub fn fixed(w: DMatrix<f64>, horizon: usize, delta: f64) -> Result<Self> {
        let n = w.nrows();
        Self::new(n, vec![w; horizon], (0..=horizon).collect(), 1, delta)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[allow(non_snake_case)]
    pub fn L(&self) -> usize {
        self.l
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Window boundaries `τ₀, τ₁, …`.
    pub fn partition(&self) -> &[usize] {
        &self.partition
    }

    /// Number of rounds with stored matrices.
    pub fn horizon(&self) -> usize {
        self.rounds.len()
    }

    pub fn generator(&self) -> Option<&GeneratorSpec> {
        self.generator.as_ref()
    }

    pub fn weights_at(&self, t: usize) -> Option<&DMatrix<f64>> {
        self.rounds.get(t)
    }

    pub fn rounds(&self) -> &[DMatrix<f64>] {
        &self.rounds
    }

    /// `N_i(t)` with weights, in increasing agent order.
    pub fn neighbors(&self, i: usize, t: usize) -> Option<Vec<(usize, f64)>> {
        let w = self.rounds.get(t)?;
        Some((0..self.n).filter(|&j| w[(i, j)] > 0.0).map(|j| (j, w[(i, j)])).collect())
    }

    /// A schedule covering at least `horizon` rounds. Generated schedules are
    /// extended deterministically (earlier rounds are unchanged); explicit
    /// ones must already be long enough.
    pub fn extended(&self, horizon: usize) -> Result<GraphSchedule> {
        if horizon <= self.horizon() {
            return Ok(self.clone());
        }
        match &self.generator {
            Some(spec) => generate(spec, horizon),
            None => Err(Error::Schedule(format!(
                "explicit schedule defines {} rounds, {horizon} requested",
                self.horizon()
            ))),
        }
    }

    /// Relabels agent `i` as `perm[i]`: `W'(t)[perm[i], perm[j]] = W(t)[i, j]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<GraphSchedule> {
        let mut seen = vec![false; self.n];
        if perm.len() != self.n || perm.iter().any(|&p| p >= self.n || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::Parameter("not a permutation of the agents".into()));
        }
        let rounds = self
            .rounds
            .iter()
            .map(|w| {
                let mut out = DMatrix::zeros(self.n, self.n);
                for i in 0..self.n {
                    for j in 0..self.n {
                        out[(perm[i], perm[j])] = w[(i, j)];
                    }
                }
                out
            })
            .collect();
        Self::new(self.n, rounds, self.partition.clone(), self.l, self.delta)
    }

    /// Windows `(k, start, end_exclusive)` whose rounds are all stored.
    pub fn windows(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        self.partition
            .windows(2)
            .enumerate()
            .map(|(k, w)| (k, w[0], w[1]))
            .filter(|&(_, _, end)| end <= self.rounds.len())
    }

    /// Union-graph edges of every complete window inside `horizon`, as CSV
    /// with columns `window,start,end,i,j` (`end` inclusive, `i < j`).
    pub fn write_union_edges<W: Write>(&self, horizon: usize, out: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(out);
        wr.write_record(["window", "start", "end", "i", "j"])?;
        for (k, start, end) in self.windows().filter(|&(_, _, end)| end <= horizon) {
            let adj = self.union_adjacency(start, end);
            for i in 0..self.n {
                for j in i + 1..self.n {
                    if adj[i * self.n + j] {
                        wr.write_record(&[k, start, end - 1, i, j].map(|v| v.to_string()))?;
                    }
                }
            }
        }
        wr.flush()?;
        Ok(())
    }

    fn union_adjacency(&self, start: usize, end: usize) -> Vec<bool> {
        let n = self.n;
        let mut adj = vec![false; n * n];
        for w in &self.rounds[start..end] {
            for i in 0..n {
                for j in 0..n {
                    if w[(i, j)] > 0.0 || w[(j, i)] > 0.0 {
                        adj[i * n + j] = true;
                    }
                }
            }
        }
        adj
    }
}

// JSON forms: a generator descriptor (optionally with a horizon) or dense
// per-round matrices.
#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum ScheduleDoc {
    Generator {
        kind: ScheduleKind,
        params: GeneratorParams,
        seed: u64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        horizon: Option<usize>,
    },
    Explicit {
        n: usize,
        #[serde(rename = "L")]
        l: usize,
        delta: f64,
        partition: Vec<usize>,
        weights: Vec<Vec<Vec<f64>>>,
    },
}

impl Serialize for GraphSchedule {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        ScheduleDoc::Explicit {
            n: self.n,
            l: self.l,
            delta: self.delta,
            partition: self.partition.clone(),
            weights: self
                .rounds
                .iter()
                .map(|w| (0..self.n).map(|i| w.row(i).iter().copied().collect()).collect())
                .collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for GraphSchedule {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        match ScheduleDoc::deserialize(d)? {
            ScheduleDoc::Generator {
                kind,
                params,
                seed,
                horizon,
            } => generate(&GeneratorSpec { kind, params, seed }, horizon.unwrap_or(1)).map_err(D::Error::custom),
            ScheduleDoc::Explicit {
                n,
                l,
                delta,
                partition,
                weights,
            } => {
                let mut rounds = Vec::with_capacity(weights.len());
                for (t, rows) in weights.iter().enumerate() {
                    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                        return Err(D::Error::custom(format!("W({t}) is not {n}x{n}")));
                    }
                    rounds.push(DMatrix::from_fn(n, n, |i, j| rows[i][j]));
                }
                GraphSchedule::new(n, rounds, partition, l, delta).map_err(D::Error::custom)
            }
        }
    }
}

/// Leaderless weights `w_ij = 1/|N_i|` for a symmetric adjacency (self-loops
/// are added).
pub fn leaderless_weights(adjacency: &[Vec<bool>]) -> Result<DMatrix<f64>> {
    let n = adjacency.len();
    if adjacency.iter().any(|r| r.len() != n) {
        return Err(Error::Schedule("adjacency must be square".into()));
    }
    for i in 0..n {
        for j in 0..n {
            if adjacency[i][j] != adjacency[j][i] {
                return Err(Error::Schedule(format!("adjacency is not symmetric at ({i}, {j})")));
            }
        }
    }
    let mut w = DMatrix::zeros(n, n);
    for i in 0..n {
        let nbrs: Vec<usize> = (0..n).filter(|&j| j == i || adjacency[i][j]).collect();
        let v = 1.0 / nbrs.len() as f64;
        for j in nbrs {
            w[(i, j)] = v;
        }
    }
    Ok(w)
}

/// Generated schedule covering at least `horizon` rounds (whole windows).
///
/// Window `k` draws from its own ChaCha stream, so longer horizons extend a
/// schedule without changing its earlier rounds.
pub fn generate_schedule(
    kind: ScheduleKind,
    n: usize,
    l: usize,
    delta: f64,
    seed: u64,
    horizon: usize,
) -> Result<GraphSchedule> {
    generate(
        &GeneratorSpec {
            kind,
            params: GeneratorParams { n, l, delta },
            seed,
        },
        horizon,
    )
}

fn generate(spec: &GeneratorSpec, horizon: usize) -> Result<GraphSchedule> {
    let GeneratorParams { n, l, delta } = spec.params;
    if n < 2 {
        return Err(Error::Parameter(format!("schedules need n >= 2, got {n}")));
    }
    if l < 1 {
        return Err(Error::Parameter("L must be at least 1".into()));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Parameter(format!("delta must lie in (0, 1), got {delta}")));
    }
    let max_delta = match spec.kind {
        ScheduleKind::RingRotating => 0.5,
        _ => 1.0 / n as f64,
    };
    if delta > max_delta {
        return Err(Error::Parameter(format!(
            "delta = {delta} is infeasible for {:?} with n = {n} (at most {max_delta})",
            spec.kind
        )));
    }
    if spec.kind == ScheduleKind::RingRotating && l < n - 1 {
        return Err(Error::Parameter(format!(
            "a rotating ring needs windows of n - 1 = {} rounds, but L = {l}",
            n - 1
        )));
    }

    let mut rounds = Vec::with_capacity(horizon + l);
    let mut partition = vec![0];
    let mut k = 0u64;
    while rounds.len() < horizon.max(1) {
        let window = match spec.kind {
            ScheduleKind::Complete => vec![DMatrix::from_element(n, n, 1.0 / n as f64)],
            ScheduleKind::RingRotating => (rounds.len()..rounds.len() + n - 1).map(|t| ring_round(n, t)).collect(),
            ScheduleKind::RandomJointlyConnected | ScheduleKind::LeaderlessNeighbors => {
                let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
                rng.set_stream(k);
                random_window(&mut rng, spec.kind, n, l, delta)
            }
        };
        rounds.extend(window);
        partition.push(rounds.len());
        k += 1;
    }
    Ok(GraphSchedule {
        n,
        rounds,
        partition,
        l,
        delta,
        generator: Some(*spec),
    })
}

fn ring_round(n: usize, t: usize) -> DMatrix<f64> {
    let (a, b) = (t % n, (t + 1) % n);
    let mut w = DMatrix::identity(n, n);
    for (p, q) in [(a, b), (b, a)] {
        w[(p, p)] = 0.5;
        w[(p, q)] = 0.5;
    }
    w
}

fn random_window(rng: &mut ChaCha8Rng, kind: ScheduleKind, n: usize, l: usize, delta: f64) -> Vec<DMatrix<f64>> {
    let len = rng.random_range(1..=l);
    let mut adj = vec![vec![vec![false; n]; n]; len];
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    for idx in 1..n {
        let (a, b) = (order[idx], order[rng.random_range(0..idx)]);
        let r = rng.random_range(0..len);
        adj[r][a][b] = true;
        adj[r][b][a] = true;
    }
    for round in adj.iter_mut() {
        for i in 0..n {
            for j in i + 1..n {
                if rng.random::<f64>() < EXTRA_EDGE_PROB {
                    round[i][j] = true;
                    round[j][i] = true;
                }
            }
        }
    }
    adj.iter()
        .map(|a| match kind {
            ScheduleKind::LeaderlessNeighbors => leaderless_weights(a).expect("generated adjacency is symmetric"),
            _ => {
                let mut w = DMatrix::zeros(n, n);
                for i in 0..n {
                    let nbrs: Vec<usize> = (0..n).filter(|&j| j != i && a[i][j]).collect();
                    let cap = 1.0 / (nbrs.len() + 1) as f64;
                    let mut used = 0.0;
                    for &j in &nbrs {
                        let v = delta + (cap - delta) * rng.random::<f64>();
                        w[(i, j)] = v;
                        used += v;
                    }
                    w[(i, i)] = 1.0 - used;
                }
                w
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    Parameter,
    MissingRound,
    RowSum,
    NegativeWeight,
    MissingSelfLoop,
    AsymmetricPattern,
    AsymmetricValue,
    BelowDelta,
    Partition,
    WindowTooLong,
    NotJointlyConnected,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub t: Option<usize>,
    pub i: Option<usize>,
    pub j: Option<usize>,
    pub message: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let fields = [("t", self.t), ("i", self.i), ("j", self.j)];
        let mut any = false;
        for (name, v) in fields {
            if let Some(v) = v {
                write!(f, "{}{name}={v}", if any { " " } else { "" })?;
                any = true;
            }
        }
        if any {
            write!(f, ": ")?;
        }
        write!(f, "{}", self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub horizon: usize,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn count(&self, kind: ViolationKind) -> usize {
        self.violations.iter().filter(|v| v.kind == kind).count()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ValidateOptions {
    /// Also require `w_ij = w_ji` (doubly stochastic studies).
    pub strict_symmetry: bool,
}

/// Checks the standing assumptions for rounds `t < horizon`.
pub fn validate_schedule(schedule: &GraphSchedule, horizon: usize) -> ValidationReport {
    validate_schedule_with(schedule, horizon, ValidateOptions::default())
}

pub fn validate_schedule_with(schedule: &GraphSchedule, horizon: usize, opts: ValidateOptions) -> ValidationReport {
    let mut out = Vec::new();
    let mut push = |kind, t, i, j, message: String| {
        out.push(Violation {
            kind,
            t,
            i,
            j,
            message,
        })
    };
    let n = schedule.n;
    let delta = schedule.delta;
    if !(delta > 0.0 && delta < 1.0) {
        push(ViolationKind::Parameter, None, None, None, format!("delta = {delta} is outside (0, 1)"));
    }
    if schedule.l < 1 {
        push(ViolationKind::Parameter, None, None, None, "L must be at least 1".into());
    }

    let extended;
    let schedule = match schedule.extended(horizon) {
        Ok(s) => {
            extended = s;
            &extended
        }
        Err(_) => schedule,
    };
    for t in schedule.horizon()..horizon {
        push(ViolationKind::MissingRound, Some(t), None, None, "no weight matrix for this round".into());
    }

    for (t, w) in schedule.rounds.iter().enumerate().take(horizon) {
        for i in 0..n {
            let sum = neumaier_sum(w.row(i).iter().copied());
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                push(ViolationKind::RowSum, Some(t), Some(i), None, format!("row sums to {sum:.17}"));
            }
            if !(w[(i, i)] > 0.0) {
                push(ViolationKind::MissingSelfLoop, Some(t), Some(i), Some(i), "w_ii is not positive".into());
            }
            for j in 0..n {
                let v = w[(i, j)];
                if v < 0.0 {
                    push(ViolationKind::NegativeWeight, Some(t), Some(i), Some(j), format!("weight {v:e} is negative"));
                } else if v > 0.0 && v < delta {
                    push(ViolationKind::BelowDelta, Some(t), Some(i), Some(j), format!("weight {v:e} is below delta = {delta:e}"));
                }
                if j > i {
                    let u = w[(j, i)];
                    if (v > 0.0) != (u > 0.0) {
                        push(
                            ViolationKind::AsymmetricPattern,
                            Some(t),
                            Some(i),
                            Some(j),
                            format!("w_ij = {v:e} but w_ji = {u:e}"),
                        );
                    } else if opts.strict_symmetry && v != u {
                        push(
                            ViolationKind::AsymmetricValue,
                            Some(t),
                            Some(i),
                            Some(j),
                            format!("w_ij = {v:e} differs from w_ji = {u:e}"),
                        );
                    }
                }
            }
        }
    }

    let tau = &schedule.partition;
    if tau.first() != Some(&0) {
        push(ViolationKind::Partition, None, None, None, "partition must start at 0".into());
    }
    if let Some(k) = tau.windows(2).position(|p| p[1] <= p[0]) {
        push(
            ViolationKind::Partition,
            Some(tau[k + 1]),
            None,
            None,
            format!("partition is not strictly increasing at index {}", k + 1),
        );
    }
    if tau.len() < 2 || tau[1] > horizon {
        push(
            ViolationKind::Partition,
            None,
            None,
            None,
            format!("horizon {horizon} does not cover a full window"),
        );
    }
    for p in tau.windows(2) {
        let (start, end) = (p[0], p[1]);
        if start >= horizon || end <= start {
            continue;
        }
        if end - start > schedule.l {
            push(
                ViolationKind::WindowTooLong,
                Some(start),
                None,
                None,
                format!("window [{start}, {}] has {} rounds, L = {}", end - 1, end - start, schedule.l),
            );
        }
        if end <= horizon && end <= schedule.horizon() {
            if let Some((i, j)) = disconnected_pair(&schedule.union_adjacency(start, end), n) {
                push(
                    ViolationKind::NotJointlyConnected,
                    Some(start),
                    Some(i),
                    Some(j),
                    format!("window [{start}, {}] is not jointly connected", end - 1),
                );
            }
        }
    }
    if let Some(&last) = tau.last() {
        if last < horizon && horizon - last > schedule.l {
            push(
                ViolationKind::WindowTooLong,
                Some(last),
                None,
                None,
                format!("rounds {last}..{horizon} are not closed by the partition within L = {}", schedule.l),
            );
        }
    }
    ValidationReport { horizon, violations: out }
}

/// Some pair `(0, j)` in different components, if the graph is disconnected.
fn disconnected_pair(adj: &[bool], n: usize) -> Option<(usize, usize)> {
    let mut seen = vec![false; n];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(p) = stack.pop() {
        for q in 0..n {
            if adj[p * n + q] && !seen[q] {
                seen[q] = true;
                stack.push(q);
            }
        }
    }
    seen.iter().position(|s| !s).map(|j| (0, j))
}

/// A joining sequence from `i` to `j` on `⟦m1, m2⟧`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MeetingCertificate {
    pub i: usize,
    pub j: usize,
    pub window: (usize, usize),
    /// `l_{m1}, …, l_{m2}`.
    pub sequence: Vec<usize>,
}

impl MeetingCertificate {
    /// Endpoints match and `w_{l_{s+1} l_s}(s) > 0` for every `s`.
    pub fn is_valid_for(&self, schedule: &GraphSchedule) -> bool {
        let (m1, m2) = self.window;
        if self.sequence.len() != m2 - m1 + 1 || self.sequence[0] != self.i || self.sequence[m2 - m1] != self.j {
            return false;
        }
        (m1..m2).all(|s| match schedule.weights_at(s) {
            Some(w) => w[(self.sequence[s + 1 - m1], self.sequence[s - m1])] > 0.0,
            None => false,
        })
    }
}

/// Forward reachable sets from `i` over rounds `m1..m2`, with predecessor
/// links: `pred[s - m1][q]` is the agent at round `s` that reaches `q` at
/// `s + 1`. `None` if some round is missing.
fn reach(schedule: &GraphSchedule, i: usize, m1: usize, m2: usize) -> Option<(Vec<bool>, Vec<Vec<usize>>)> {
    let n = schedule.n;
    let mut current = vec![false; n];
    current[i] = true;
    let mut preds = Vec::with_capacity(m2 - m1);
    for s in m1..m2 {
        let w = schedule.weights_at(s)?;
        let mut next = vec![false; n];
        let mut pred = vec![usize::MAX; n];
        for q in 0..n {
            if let Some(p) = (0..n).find(|&p| current[p] && w[(q, p)] > 0.0) {
                next[q] = true;
                pred[q] = p;
            }
        }
        preds.push(pred);
        current = next;
    }
    Some((current, preds))
}

/// Whether `i` meets `j` on `⟦m1, m2⟧`, with a certificate.
pub fn meets(schedule: &GraphSchedule, i: usize, j: usize, m1: usize, m2: usize) -> Option<MeetingCertificate> {
    if i >= schedule.n || j >= schedule.n || m1 > m2 {
        return None;
    }
    let (reached, preds) = reach(schedule, i, m1, m2)?;
    if !reached[j] {
        return None;
    }
    let mut sequence = vec![j];
    let mut q = j;
    for pred in preds.iter().rev() {
        q = pred[q];
        sequence.push(q);
    }
    sequence.reverse();
    Some(MeetingCertificate {
        i,
        j,
        window: (m1, m2),
        sequence,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct MeetingFailure {
    pub k: usize,
    pub i: usize,
    pub j: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeetingReport {
    pub k_max: usize,
    /// `t_k = τ_{k(n−1)}` for `k = 0..=k_max+1` (as far as available).
    pub t: Vec<usize>,
    pub failures: Vec<MeetingFailure>,
    /// `sup_k (t_{k+1} − t_{k−1})` over the checked range.
    pub m: usize,
    /// `2L(n−1)`.
    pub m_bound: usize,
    /// Set when the schedule is too short for the requested `k_max`.
    pub incomplete: Option<String>,
}

impl MeetingReport {
    pub fn is_clean(&self) -> bool {
        self.failures.is_empty() && self.m <= self.m_bound && self.incomplete.is_none()
    }
}

/// Checks that every pair meets on `⟦t_k, t_{k+1}⟧` for `k ≤ k_max`, where
/// `t_k = τ_{k(n−1)}`, and that `sup_k(t_{k+1} − t_{k−1}) ≤ 2L(n−1)`.
pub fn verify_meeting_lemma(schedule: &GraphSchedule, k_max: usize) -> MeetingReport {
    let n = schedule.n;
    let stride = n.saturating_sub(1).max(1);
    let needed = (k_max + 1) * stride;
    let mut sched = schedule.clone();
    // Generated schedules grow until the partition has enough windows.
    while sched.partition.len() <= needed && sched.generator.is_some() {
        let want = (sched.horizon() * 2).max(needed * sched.l.max(1)).max(1);
        match sched.extended(want) {
            Ok(s) => sched = s,
            Err(_) => break,
        }
    }
    let t: Vec<usize> = (0..=k_max + 1)
        .map_while(|k| sched.partition.get(k * stride).copied())
        .filter(|&tk| tk <= sched.horizon())
        .collect();
    let incomplete = (t.len() < k_max + 2).then(|| {
        format!(
            "partition reaches t_{} only; k_max = {k_max} needs t_{}",
            t.len().saturating_sub(1),
            k_max + 1
        )
    });

    let mut failures = Vec::new();
    for k in 0..t.len().saturating_sub(1) {
        for i in 0..n {
            match reach(&sched, i, t[k], t[k + 1]) {
                Some((reached, _)) => {
                    failures.extend((0..n).filter(|&j| !reached[j]).map(|j| MeetingFailure { k, i, j }));
                }
                None => failures.extend((0..n).map(|j| MeetingFailure { k, i, j })),
            }
        }
    }
    let m = (1..t.len().saturating_sub(1)).map(|k| t[k + 1] - t[k - 1]).max().unwrap_or(0);
    MeetingReport {
        k_max,
        t,
        failures,
        m,
        m_bound: 2 * schedule.l * n.saturating_sub(1),
        incomplete,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn complete(n: usize, horizon: usize) -> GraphSchedule {
        generate_schedule(ScheduleKind::Complete, n, 1, 1.0 / n as f64, 0, horizon).unwrap()
    }

    #[test]
    fn complete_graph_is_valid() {
        let s = complete(3, 10);
        assert!(s.rounds().iter().all(|w| w.iter().all(|&v| v == 1.0 / 3.0)));
        assert_eq!(s.partition(), &(0..=10).collect::<Vec<_>>()[..]);
        let r = validate_schedule(&s, 10);
        assert!(r.is_valid(), "{:?}", r.violations);
        assert!(verify_meeting_lemma(&s, 5).is_clean());
    }

    #[test]
    fn delta_violation_is_reported_with_location() {
        let delta = 0.2;
        let mut w = DMatrix::from_element(3, 3, 1.0 / 3.0);
        w[(1, 2)] = delta / 2.0;
        w[(1, 1)] = 1.0 - 1.0 / 3.0 - delta / 2.0;
        let s = GraphSchedule::fixed(w, 4, delta).unwrap();
        let r = validate_schedule(&s, 4);
        assert_eq!(r.count(ViolationKind::BelowDelta), 4);
        let v = r.violations.iter().find(|v| v.kind == ViolationKind::BelowDelta).unwrap();
        assert_eq!((v.t, v.i, v.j), (Some(0), Some(1), Some(2)));
        assert!(v.to_string().starts_with("t=0 i=1 j=2"));
    }

    #[test]
    fn rotating_ring_is_jointly_connected() {
        let s = generate_schedule(ScheduleKind::RingRotating, 4, 3, 0.25, 0, 30).unwrap();
        assert_eq!(&s.partition()[..4], &[0, 3, 6, 9]);
        assert!(validate_schedule(&s, 30).is_valid());
        // Single rounds are not connected, so unit windows would fail.
        let unit = GraphSchedule::new(4, s.rounds().to_vec(), (0..=30).collect(), 3, 0.25).unwrap();
        assert!(validate_schedule(&unit, 30).count(ViolationKind::NotJointlyConnected) > 0);
        let report = verify_meeting_lemma(&s, 6);
        assert!(report.is_clean(), "{report:?}");
    }

    #[test]
    fn structural_violations() {
        let mut w = DMatrix::identity(3, 3);
        w[(0, 1)] = 0.5;
        w[(0, 0)] = 0.5;
        let s = GraphSchedule::new(3, vec![w.clone(), w], vec![0, 2], 2, 0.1).unwrap();
        let r = validate_schedule(&s, 2);
        assert_eq!(r.count(ViolationKind::AsymmetricPattern), 2);
        assert_eq!(r.count(ViolationKind::NotJointlyConnected), 1);

        let mut bad = DMatrix::from_element(2, 2, 0.5);
        bad[(0, 0)] = 0.0;
        bad[(0, 1)] = 0.9;
        let s = GraphSchedule::new(2, vec![bad], vec![0, 1], 1, 0.1).unwrap();
        let r = validate_schedule(&s, 1);
        assert_eq!(r.count(ViolationKind::MissingSelfLoop), 1);
        assert_eq!(r.count(ViolationKind::RowSum), 1);

        let c = complete(2, 6);
        let long = GraphSchedule::new(2, c.rounds().to_vec(), vec![0, 4, 6], 2, 0.5).unwrap();
        assert_eq!(validate_schedule(&long, 6).count(ViolationKind::WindowTooLong), 1);
        let short = GraphSchedule::new(2, c.rounds().to_vec(), vec![0, 1], 1, 0.5).unwrap();
        assert_eq!(validate_schedule(&short, 6).count(ViolationKind::MissingRound), 0);
        assert_eq!(validate_schedule(&short, 6).count(ViolationKind::WindowTooLong), 1);
        assert_eq!(validate_schedule(&short, 8).count(ViolationKind::MissingRound), 2);
    }

    #[test]
    fn strict_mode_checks_values() {
        let s = generate_schedule(ScheduleKind::RandomJointlyConnected, 5, 3, 0.1, 1, 40).unwrap();
        assert!(validate_schedule(&s, 40).is_valid());
        let strict = validate_schedule_with(&s, 40, ValidateOptions { strict_symmetry: true });
        assert!(strict.count(ViolationKind::AsymmetricValue) > 0);
        let c = complete(4, 5);
        assert!(validate_schedule_with(&c, 5, ValidateOptions { strict_symmetry: true }).is_valid());
    }

    #[test]
    fn meets_examples() {
        let s = complete(3, 4);
        for i in 0..3 {
            let c = meets(&s, i, i, 0, 3).unwrap();
            assert!(c.is_valid_for(&s));
        }
        let isolated = GraphSchedule::fixed(DMatrix::identity(3, 3), 5, 0.5).unwrap();
        assert!(meets(&isolated, 0, 1, 0, 5).is_none());
        assert!(meets(&isolated, 2, 2, 0, 5).is_some());

        // Chain 0 -> 1 at round 0, then 1 -> 2 at round 1.
        let mut w0 = DMatrix::identity(3, 3);
        w0[(0, 0)] = 0.5;
        w0[(0, 1)] = 0.5;
        w0[(1, 1)] = 0.5;
        w0[(1, 0)] = 0.5;
        let mut w1 = DMatrix::identity(3, 3);
        w1[(1, 1)] = 0.5;
        w1[(1, 2)] = 0.5;
        w1[(2, 2)] = 0.5;
        w1[(2, 1)] = 0.5;
        let chain = GraphSchedule::new(3, vec![w0, w1], vec![0, 2], 2, 0.5).unwrap();
        let c = meets(&chain, 0, 2, 0, 2).unwrap();
        assert_eq!(c.sequence, vec![0, 1, 2]);
        assert!(c.is_valid_for(&chain));
        // Order matters: the edges appear in the wrong order for 2 → 0.
        assert!(meets(&chain, 2, 0, 0, 2).is_none());
    }

    #[test]
    fn leaderless_star() {
        let n = 4;
        let adj: Vec<Vec<bool>> = (0..n).map(|i| (0..n).map(|j| i != j && (i == 0 || j == 0)).collect()).collect();
        let w = leaderless_weights(&adj).unwrap();
        assert!((0..n).all(|j| w[(0, j)] == 0.25));
        for leaf in 1..n {
            assert_eq!(w[(leaf, leaf)], 0.5);
            assert_eq!(w[(leaf, 0)], 0.5);
        }
        let s = GraphSchedule::fixed(w, 5, 0.25).unwrap();
        assert!(validate_schedule(&s, 5).is_valid());
    }

    #[test]
    fn leaderless_generator_uses_inverse_degree() {
        let s = generate_schedule(ScheduleKind::LeaderlessNeighbors, 6, 4, 1.0 / 6.0, 3, 50).unwrap();
        assert!(validate_schedule(&s, 50).is_valid());
        for w in s.rounds() {
            for i in 0..6 {
                let deg = (0..6).filter(|&j| w[(i, j)] > 0.0).count();
                assert!((0..6).filter(|&j| w[(i, j)] > 0.0).all(|j| w[(i, j)] == 1.0 / deg as f64));
            }
        }
    }

    #[test]
    fn generator_rejects_infeasible_parameters() {
        assert!(generate_schedule(ScheduleKind::Complete, 4, 1, 0.3, 0, 5).is_err());
        assert!(generate_schedule(ScheduleKind::RandomJointlyConnected, 5, 2, 0.25, 0, 5).is_err());
        assert!(generate_schedule(ScheduleKind::RingRotating, 5, 3, 0.1, 0, 5).is_err());
        assert!(generate_schedule(ScheduleKind::Complete, 1, 1, 0.5, 0, 5).is_err());
    }

    #[test]
    fn extension_keeps_prefix() {
        let a = generate_schedule(ScheduleKind::RandomJointlyConnected, 5, 3, 0.1, 42, 20).unwrap();
        let b = a.extended(200).unwrap();
        assert!(b.horizon() >= 200);
        assert_eq!(&b.rounds()[..a.horizon()], a.rounds());
        assert_eq!(&b.partition()[..a.partition().len()], a.partition());
        let again = generate_schedule(ScheduleKind::RandomJointlyConnected, 5, 3, 0.1, 42, 200).unwrap();
        assert_eq!(again, b);
    }

    #[test]
    fn json_forms() {
        let s = generate_schedule(ScheduleKind::RandomJointlyConnected, 3, 2, 0.2, 7, 6).unwrap();
        let text = serde_json::to_string(&s).unwrap();
        let back: GraphSchedule = serde_json::from_str(&text).unwrap();
        assert_eq!(back.rounds(), s.rounds());
        assert_eq!(back.partition(), s.partition());
        let desc = r#"{"kind":"random_jointly_connected","params":{"n":3,"L":2,"delta":0.2},"seed":7,"horizon":6}"#;
        let gen: GraphSchedule = serde_json::from_str(desc).unwrap();
        assert_eq!(gen, s);
    }

    #[test]
    fn union_edge_csv() {
        let s = generate_schedule(ScheduleKind::RingRotating, 4, 3, 0.5, 0, 6).unwrap();
        let mut buf = Vec::new();
        s.write_union_edges(6, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "window,start,end,i,j");
        assert_eq!(&lines[1..4], &["0,0,2,0,1", "0,0,2,1,2", "0,0,2,2,3"]);
        assert_eq!(lines.len(), 7);
    }

    #[test]
    fn permutation_conjugates_weights() {
        let s = generate_schedule(ScheduleKind::RandomJointlyConnected, 4, 2, 0.1, 5, 8).unwrap();
        let perm = [2, 0, 3, 1];
        let p = s.permuted(&perm).unwrap();
        for t in 0..8 {
            for i in 0..4 {
                for j in 0..4 {
                    assert_eq!(p.weights_at(t).unwrap()[(perm[i], perm[j])], s.weights_at(t).unwrap()[(i, j)]);
                }
            }
        }
        assert!(s.permuted(&[0, 0, 1, 2]).is_err());
    }

    fn schedule_strategy() -> impl Strategy<Value = GraphSchedule> {
        (2usize..=6, 1usize..=4, any::<u64>(), any::<bool>()).prop_map(|(n, l, seed, leaderless)| {
            let kind = if leaderless {
                ScheduleKind::LeaderlessNeighbors
            } else {
                ScheduleKind::RandomJointlyConnected
            };
            generate_schedule(kind, n, l, 0.5 / n as f64, seed, 12 * l * n).unwrap()
        })
    }

    proptest! {
        #[test]
        fn generated_schedules_validate_and_satisfy_lemma(s in schedule_strategy()) {
            let h = s.horizon();
            let r = validate_schedule(&s, h);
            prop_assert!(r.is_valid(), "{:?}", r.violations);
            let m = verify_meeting_lemma(&s, 5);
            prop_assert!(m.is_clean(), "{:?}", m);
        }

        #[test]
        fn meeting_is_monotone_transitive_and_symmetric(
            s in schedule_strategy(),
            i in 0usize..6, j in 0usize..6, k in 0usize..6,
            a in 0usize..8, b in 1usize..8, c in 1usize..8,
        ) {
            let n = s.n();
            let (i, j, k) = (i % n, j % n, k % n);
            let (m1, m2, m3) = (a, a + b, a + b + c);
            let ij = meets(&s, i, j, m1, m2);
            if let Some(cert) = &ij {
                prop_assert!(cert.is_valid_for(&s));
                prop_assert!(meets(&s, i, j, m1.saturating_sub(1), m2 + 1).is_some());
                if meets(&s, j, k, m2, m3).is_some() {
                    prop_assert!(meets(&s, i, k, m1, m3).is_some());
                }
            }
            // Symmetric patterns: reverse the rounds to reverse the sequence.
            let rev: Vec<DMatrix<f64>> = s.rounds()[m1..m2].iter().rev().cloned().collect();
            let len = rev.len();
            let r = GraphSchedule::new(n, rev, vec![0, len], len, s.delta()).unwrap();
            prop_assert_eq!(ij.is_some(), meets(&r, j, i, 0, len).is_some());
        }
    }
}
