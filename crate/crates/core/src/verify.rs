//! Offline checks of the run invariants on a recorded trace.
//!
//! The same checks back `wbc check` and the acceptance tests. Per-row checks
//! only need the CSV columns; the displacement bound and the Jensen
//! recomputation need full states at consecutive rounds.

use std::fmt;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::consensus::{check_jensen, ConsensusState, V2_CONVEXITY};
use crate::error::Result;
use crate::measures::{second_moment, MeasureKind};
use crate::network::GraphSchedule;
use crate::trace::TraceRow;
use crate::transport::{w2, SolverConfig, SolverMethod};

/// Slack allowed by each check; `abs + rel·scale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Tolerances {
    pub v2_monotone_abs: f64,
    pub v2_monotone_rel: f64,
    pub jensen_abs: f64,
    pub jensen_rel: f64,
    pub v2_spread_abs: f64,
    pub v2_spread_rel: f64,
    /// `None` skips the per-step displacement bound.
    pub displacement: Option<f64>,
}

impl Tolerances {
    /// Closed forms 1e-9, exact LP 1e-6, Sinkhorn 2% relative.
    pub fn ladder(kind: MeasureKind, method: SolverMethod) -> Self {
        match (kind, method) {
            (MeasureKind::Gaussian, _) => Self {
                v2_monotone_abs: 1e-9,
                v2_monotone_rel: 0.0,
                jensen_abs: 1e-8,
                jensen_rel: 0.0,
                v2_spread_abs: 1e-6,
                v2_spread_rel: 0.0,
                displacement: Some(1e-6),
            },
            (MeasureKind::Discrete, SolverMethod::Sinkhorn) => Self {
                v2_monotone_abs: 1e-6,
                v2_monotone_rel: 0.02,
                jensen_abs: 1e-6,
                jensen_rel: 0.02,
                v2_spread_abs: 1e-6,
                v2_spread_rel: 0.02,
                displacement: None,
            },
            (MeasureKind::Discrete, _) => Self {
                v2_monotone_abs: 1e-6,
                v2_monotone_rel: 0.0,
                jensen_abs: 1e-6,
                jensen_rel: 0.02,
                v2_spread_abs: 1e-6,
                v2_spread_rel: 0.0,
                displacement: None,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckStatus {
    Pass,
    Fail,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub status: CheckStatus,
    /// Largest observed `lhs − (rhs + tolerance)`; negative when passing.
    pub worst_excess: f64,
    /// Round where the worst excess occurred.
    pub worst_t: Option<usize>,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct VerifyReport {
    pub checks: Vec<CheckResult>,
    pub warnings: Vec<String>,
}

impl VerifyReport {
    pub fn is_ok(&self) -> bool {
        self.checks.iter().all(|c| c.status != CheckStatus::Fail)
    }

    pub fn get(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            let status = match c.status {
                CheckStatus::Pass => "PASS",
                CheckStatus::Fail => "FAIL",
                CheckStatus::Skipped => "SKIP",
            };
            write!(f, "{status} {}", c.name)?;
            if c.status != CheckStatus::Skipped {
                write!(f, " (worst excess {:.3e}", c.worst_excess)?;
                if let Some(t) = c.worst_t {
                    write!(f, " at t={t}")?;
                }
                write!(f, ")")?;
            }
            if !c.detail.is_empty() {
                write!(f, ": {}", c.detail)?;
            }
            writeln!(f)?;
        }
        for w in &self.warnings {
            writeln!(f, "warning: {w}")?;
        }
        Ok(())
    }
}

/// Tracks the worst excess over a family of inequalities.
struct Worst {
    excess: f64,
    t: Option<usize>,
    detail: String,
    count: usize,
}

impl Worst {
    fn new() -> Self {
        Self {
            excess: f64::NEG_INFINITY,
            t: None,
            detail: String::new(),
            count: 0,
        }
    }

    fn observe(&mut self, excess: f64, t: usize, detail: impl FnOnce() -> String) {
        self.count += 1;
        if excess > self.excess || excess.is_nan() {
            self.excess = excess;
            self.t = Some(t);
            if excess > 0.0 || excess.is_nan() {
                self.detail = detail();
            }
        }
    }

    fn finish(self, name: &'static str) -> CheckResult {
        if self.count == 0 {
            return skipped(name, "nothing to check");
        }
        let failed = self.excess > 0.0 || self.excess.is_nan();
        CheckResult {
            name,
            status: if failed { CheckStatus::Fail } else { CheckStatus::Pass },
            worst_excess: self.excess,
            worst_t: self.t,
            detail: if failed { self.detail } else { format!("{} inequalities", self.count) },
        }
    }
}

fn skipped(name: &'static str, why: &str) -> CheckResult {
    CheckResult {
        name,
        status: CheckStatus::Skipped,
        worst_excess: 0.0,
        worst_t: None,
        detail: why.to_string(),
    }
}

fn spread(v: &[f64]) -> f64 {
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    hi - lo
}

/// `V₂^max(t+1) ≤ V₂^max(t)` up to tolerance.
pub fn check_v2_monotone(rows: &[TraceRow], tol: &Tolerances) -> CheckResult {
    let mut w = Worst::new();
    for p in rows.windows(2) {
        let slack = tol.v2_monotone_abs + tol.v2_monotone_rel * p[0].v2_max.abs();
        let excess = p[1].v2_max - p[0].v2_max - slack;
        w.observe(excess, p[1].t, || {
            format!("v2_max rose from {:e} to {:e} at t={}", p[0].v2_max, p[1].v2_max, p[1].t)
        });
    }
    w.finish("v2_max_monotone")
}

/// Column consistency: `v2_max = max v2` and a nonnegative diameter.
pub fn check_row_consistency(rows: &[TraceRow]) -> CheckResult {
    let mut w = Worst::new();
    for r in rows {
        let max = r.v2.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let excess = if max == r.v2_max && r.diameter >= 0.0 { -1.0 } else { 1.0 };
        w.observe(excess, r.t, || {
            format!("v2_max {:e}, max v2 {:e}, diameter {:e}", r.v2_max, max, r.diameter)
        });
    }
    let mut out = w.finish("row_consistency");
    out.worst_excess = out.worst_excess.min(0.0);
    out
}

/// Jensen residual of every round's barycenters against `abs + rel·V₂^max(t−1)`.
pub fn check_jensen_rows(rows: &[TraceRow], tol: &Tolerances) -> CheckResult {
    let mut w = Worst::new();
    for p in rows.windows(2) {
        let bound = tol.jensen_abs + tol.jensen_rel * p[0].v2_max.abs();
        w.observe(p[1].max_jensen_residual - bound, p[1].t, || {
            format!("residual {:e} exceeds {bound:e} at t={}", p[1].max_jensen_residual, p[1].t)
        });
    }
    w.finish("jensen_residual")
}

/// Final-round `max_{i,j}|V₂(μ_i) − V₂(μ_j)|`, only for converged runs.
pub fn check_v2_consensus(rows: &[TraceRow], threshold: f64, tol: &Tolerances) -> CheckResult {
    let Some(last) = rows.last() else {
        return skipped("v2_consensus", "empty trace");
    };
    if last.diameter > threshold {
        return skipped("v2_consensus", "run did not converge");
    }
    let mut w = Worst::new();
    let bound = tol.v2_spread_abs + tol.v2_spread_rel * last.v2_max.abs();
    let s = spread(&last.v2);
    w.observe(s - bound, last.t, || format!("final spread {s:e} exceeds {bound:e}"));
    w.finish("v2_consensus")
}

/// Largest excess of the two per-step displacement bounds for one round.
///
/// `global` is `W₂²(μ_i(t+1), μ_l(t)) − δ⁻¹ Σ_{p,q} |V₂(μ_p(t)) − V₂(μ_q(t))|`.
/// `local` uses the right-hand side `δ⁻¹ Σ_j w_ij (V₂(μ_j(t)) − V₂(μ_i(t+1)))`,
/// which follows directly from the Jensen inequality and `w_il ≥ δ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DisplacementExcess {
    pub global: f64,
    pub local: f64,
    pub worst_agent: (usize, usize),
}

pub fn displacement_excess(
    prev: &ConsensusState,
    next: &ConsensusState,
    w: &DMatrix<f64>,
    delta: f64,
    cfg: &SolverConfig,
) -> Result<DisplacementExcess> {
    let n = prev.n();
    let v2: Vec<f64> = prev.agents.iter().map(second_moment).collect();
    let mut pair_sum = 0.0;
    for p in 0..n {
        for q in 0..n {
            pair_sum += (v2[p] - v2[q]).abs();
        }
    }
    let global_rhs = pair_sum / delta;
    let mut out = DisplacementExcess {
        global: f64::NEG_INFINITY,
        local: f64::NEG_INFINITY,
        worst_agent: (0, 0),
    };
    for i in 0..n {
        let v_next = second_moment(&next.agents[i]);
        let local_rhs: f64 = (0..n)
            .filter(|&j| w[(i, j)] > 0.0)
            .map(|j| w[(i, j)] * (v2[j] - v_next))
            .sum::<f64>()
            / delta;
        for l in (0..n).filter(|&l| w[(i, l)] > 0.0) {
            let d = w2(&next.agents[i], &prev.agents[l], cfg)?;
            let lhs = d * d;
            if lhs - global_rhs > out.global {
                out.global = lhs - global_rhs;
                out.worst_agent = (i, l);
            }
            out.local = out.local.max(lhs - local_rhs);
        }
    }
    Ok(out)
}

/// Rows and (possibly sparse) full states of one run.
pub struct TraceData<'a> {
    pub rows: &'a [TraceRow],
    /// States in increasing round order; need not cover every round.
    pub states: &'a [ConsensusState],
    pub schedule: Option<&'a GraphSchedule>,
    pub cfg: &'a SolverConfig,
    pub threshold: f64,
}

/// Every check that the available data supports.
pub fn verify_trace(data: &TraceData<'_>, tol: &Tolerances) -> Result<VerifyReport> {
    let mut report = VerifyReport::default();
    let rows = data.rows;
    report.checks.push(check_row_consistency(rows));
    report.checks.push(check_v2_monotone(rows, tol));
    report.checks.push(check_jensen_rows(rows, tol));
    report.checks.push(check_v2_consensus(rows, data.threshold, tol));
    if let Some(p) = rows.windows(2).find(|p| p[1].t != p[0].t + 1) {
        report
            .warnings
            .push(format!("trace skips from t={} to t={}", p[0].t, p[1].t));
    }

    // States against the CSV.
    let mut w = Worst::new();
    let mut unmatched = 0;
    for s in data.states {
        let Some(row) = rows.iter().find(|r| r.t == s.t) else {
            unmatched += 1;
            continue;
        };
        for (i, m) in s.agents.iter().enumerate() {
            let v = second_moment(m);
            let excess = (v - row.v2[i]).abs() - 1e-12 * (1.0 + v.abs());
            w.observe(excess, s.t, || format!("agent {i}: state gives V2 {v:e}, trace has {:e}", row.v2[i]));
        }
    }
    if unmatched > 0 {
        report.warnings.push(format!("{unmatched} states have no trace row"));
    }
    report.checks.push(w.finish("state_matches_trace"));

    let pairs: Vec<(&ConsensusState, &ConsensusState)> = data
        .states
        .windows(2)
        .filter(|p| p[1].t == p[0].t + 1)
        .map(|p| (&p[0], &p[1]))
        .collect();
    let Some(schedule) = data.schedule else {
        report.warnings.push("no schedule given; step checks skipped".into());
        for name in ["jensen_recomputed", "displacement_bound", "displacement_bound_local"] {
            report.checks.push(skipped(name, "no schedule"));
        }
        return Ok(report);
    };
    let expected = rows.len().saturating_sub(1);
    if pairs.len() < expected {
        report.warnings.push(format!(
            "states cover {} of {expected} round transitions; step checks are partial",
            pairs.len()
        ));
    }

    let mut jensen = Worst::new();
    let mut global = Worst::new();
    let mut local = Worst::new();
    for (prev, next) in pairs {
        let Some(wt) = schedule.weights_at(prev.t) else {
            report.warnings.push(format!("schedule has no W({})", prev.t));
            continue;
        };
        let prev_max = prev.agents.iter().map(second_moment).fold(f64::NEG_INFINITY, f64::max);
        let bound = tol.jensen_abs + tol.jensen_rel * prev_max.abs();
        for i in 0..prev.n() {
            let (ms, lam): (Vec<_>, Vec<_>) = (0..prev.n())
                .filter(|&j| wt[(i, j)] > 0.0)
                .map(|j| (prev.agents[j].clone(), wt[(i, j)]))
                .unzip();
            let r = check_jensen(&ms, &lam, &next.agents[i], V2_CONVEXITY, data.cfg)?;
            jensen.observe(r - bound, next.t, || format!("agent {i}: residual {r:e} exceeds {bound:e}"));
        }
        if let Some(dtol) = tol.displacement {
            let e = displacement_excess(prev, next, wt, schedule.delta(), data.cfg)?;
            let (i, l) = e.worst_agent;
            global.observe(e.global - dtol, next.t, || format!("agent {i}, neighbour {l}: excess {:e}", e.global));
            local.observe(e.local - dtol, next.t, || format!("excess {:e}", e.local));
        }
    }
    report.checks.push(jensen.finish("jensen_recomputed"));
    if tol.displacement.is_some() {
        report.checks.push(global.finish("displacement_bound"));
        report.checks.push(local.finish("displacement_bound_local"));
    } else {
        report.checks.push(skipped("displacement_bound", "checked in Gaussian mode only"));
        report.checks.push(skipped("displacement_bound_local", "checked in Gaussian mode only"));
    }
    Ok(report)
}
