//! Weighted W₂ barycenters.
//!
//! [`bar`] dispatches on the measure representation: a Bures fixed point for
//! Gaussians, quantile averaging for 1-D discrete measures and alternating
//! minimization over a fixed number of uniformly weighted atoms otherwise.
//! Inputs are put in a canonical order first, so the result does not depend
//! on how the caller listed them.

use std::cmp::Ordering;

use log::debug;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::measures::{check_homogeneous, neumaier_sum, DiscreteMeasure, GaussianMeasure, Measure, WEIGHT_SUM_TOL};
use crate::transport::{for_each_quantile_cell, sinkhorn, wp_discrete_exact, QuantileFunction, SolverConfig, SolverMethod, TransportPlan};

/// Measures `μ_j` with positive weights `λ_j` summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct BarycenterProblem {
    measures: Vec<Measure>,
    weights: Vec<f64>,
}

impl BarycenterProblem {
    pub fn new(measures: Vec<Measure>, weights: Vec<f64>) -> Result<Self> {
        if measures.is_empty() {
            return Err(Error::InvalidWeights("a barycenter needs at least one measure".into()));
        }
        if measures.len() != weights.len() {
            return Err(Error::InvalidWeights(format!(
                "{} measures but {} weights",
                measures.len(),
                weights.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !(**w > 0.0 && w.is_finite())) {
            return Err(Error::InvalidWeights(format!("weights must be positive, found {w}")));
        }
        let total = neumaier_sum(weights.iter().copied());
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::InvalidWeights(format!("weights sum to {total}, expected 1")));
        }
        check_homogeneous(&measures)?;
        Ok(Self { measures, weights })
    }

    /// Equal weights `1/N`.
    pub fn uniform(measures: Vec<Measure>) -> Result<Self> {
        let n = measures.len().max(1);
        let weights = vec![1.0 / n as f64; measures.len()];
        // 1/N summed N times can miss 1 by more than the tolerance for large N.
        let total = neumaier_sum(weights.iter().copied());
        Self::new(measures, weights.into_iter().map(|w| w / total).collect())
    }

    pub fn measures(&self) -> &[Measure] {
        &self.measures
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.measures.len()
    }

    pub fn is_empty(&self) -> bool {
        self.measures.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.measures[0].dim()
    }

    /// `Σ λ_j W₂²(μ_j, ν)` under the configured solver.
    pub fn objective(&self, nu: &Measure, cfg: &SolverConfig) -> Result<f64> {
        let mut total = 0.0;
        for (m, &w) in self.measures.iter().zip(&self.weights) {
            let d = crate::transport::w2(m, nu, cfg)?;
            total += w * d * d;
        }
        Ok(total)
    }

    /// Same problem with the pairs sorted by a total order on their contents.
    fn canonical(&self) -> Self {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.sort_by(|&a, &b| {
            cmp_measure(&self.measures[a], &self.measures[b]).then(self.weights[a].total_cmp(&self.weights[b]))
        });
        Self {
            measures: idx.iter().map(|&k| self.measures[k].clone()).collect(),
            weights: idx.iter().map(|&k| self.weights[k]).collect(),
        }
    }

    fn discrete(&self) -> Result<Vec<&DiscreteMeasure>> {
        self.measures
            .iter()
            .map(|m| m.as_discrete().ok_or(Error::MixedTags))
            .collect()
    }
}

fn cmp_slices(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or_else(|| a.len().cmp(&b.len()))
}

fn cmp_measure(a: &Measure, b: &Measure) -> Ordering {
    match (a, b) {
        (Measure::Gaussian(x), Measure::Gaussian(y)) => cmp_slices(x.mean().as_slice(), y.mean().as_slice())
            .then_with(|| cmp_slices(x.cov().as_slice(), y.cov().as_slice())),
        (Measure::Discrete(x), Measure::Discrete(y)) => x
            .len()
            .cmp(&y.len())
            .then_with(|| cmp_slices(x.atoms(), y.atoms()))
            .then_with(|| cmp_slices(x.weights(), y.weights())),
        (Measure::Gaussian(_), Measure::Discrete(_)) => Ordering::Less,
        (Measure::Discrete(_), Measure::Gaussian(_)) => Ordering::Greater,
    }
}

/// Solver statistics reported alongside a barycenter.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct BarycenterTelemetry {
    pub iterations: usize,
    /// Final fixed-point residual (Gaussian) or relative objective decrease
    /// of the last sweep (free support).
    pub residual: f64,
    /// Free-support atoms re-seeded after receiving no mass.
    pub restarts: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Barycenter<T> {
    pub measure: T,
    pub telemetry: BarycenterTelemetry,
    /// Objective after each coupling solve (free support only).
    pub objective_history: Vec<f64>,
}

impl<T> Barycenter<T> {
    fn closed(measure: T) -> Self {
        Self {
            measure,
            telemetry: BarycenterTelemetry::default(),
            objective_history: Vec::new(),
        }
    }
}

/// `bar({(μ_j, λ_j)})`.
pub fn bar(problem: &BarycenterProblem, cfg: &SolverConfig, seed: u64) -> Result<Measure> {
    bar_with_telemetry(problem, cfg, seed).map(|b| b.measure)
}

/// [`bar`] together with solver statistics.
pub fn bar_with_telemetry(problem: &BarycenterProblem, cfg: &SolverConfig, seed: u64) -> Result<Barycenter<Measure>> {
    let first = &problem.measures[0];
    if problem.measures.iter().all(|m| m == first) {
        return Ok(Barycenter::closed(first.clone()));
    }
    let problem = problem.canonical();
    match first {
        Measure::Gaussian(_) => {
            let out = bar_gaussian(&problem, cfg)?;
            Ok(Barycenter {
                measure: out.measure.into(),
                telemetry: out.telemetry,
                objective_history: out.objective_history,
            })
        }
        Measure::Discrete(_) => {
            let exact = cfg.method != SolverMethod::Sinkhorn;
            if problem.dim() == 1 && exact {
                return Ok(Barycenter::closed(bar_1d(&problem)?.into()));
            }
            let support = match cfg.support_size {
                Some(k) => k,
                None => problem.discrete()?.iter().map(|m| m.len()).max().unwrap_or(1),
            };
            let out = bar_free_support(&problem, support, cfg, seed)?;
            Ok(Barycenter {
                measure: out.measure.into(),
                telemetry: out.telemetry,
                objective_history: out.objective_history,
            })
        }
    }
}

/// Gaussian barycenter: mean `Σλ_j m_j`, covariance the fixed point of
/// `S = Σλ_j (S^{1/2} Σ_j S^{1/2})^{1/2}`.
///
/// Iterates `S ← S^{-1/2} K(S)² S^{-1/2}` with `K(S)` the right-hand side,
/// starting from `Σλ_j Σ_j`, until
/// `‖S − K(S)‖_F ≤ fixed_point_tolerance · (1 + ‖S‖_F)`.
pub fn bar_gaussian(problem: &BarycenterProblem, cfg: &SolverConfig) -> Result<Barycenter<GaussianMeasure>> {
    let gs: Vec<&GaussianMeasure> = problem
        .measures
        .iter()
        .map(|m| m.as_gaussian().ok_or(Error::MixedTags))
        .collect::<Result<_>>()?;
    let d = problem.dim();
    let lam = &problem.weights;

    let mut mean = DVector::zeros(d);
    let mut s = DMatrix::zeros(d, d);
    for (g, &w) in gs.iter().zip(lam) {
        mean += g.mean() * w;
        s += g.cov() * w;
    }
    s = linalg::symmetrize(&s);
    if gs.len() == 1 {
        return Ok(Barycenter::closed(gs[0].clone()));
    }

    let mut residual = f64::INFINITY;
    for it in 0..cfg.fixed_point_max_iters {
        let root = linalg::sqrt_psd(&s)?;
        let mut k = DMatrix::zeros(d, d);
        for (g, &w) in gs.iter().zip(lam) {
            k += linalg::sqrt_psd(&linalg::symmetrize(&(&root * g.cov() * &root)))? * w;
        }
        let k = linalg::symmetrize(&k);
        residual = linalg::frobenius(&(&s - &k)) / (1.0 + linalg::frobenius(&s));
        if residual <= cfg.fixed_point_tolerance {
            return Ok(Barycenter {
                measure: GaussianMeasure::from_parts_unchecked(mean, s),
                telemetry: BarycenterTelemetry {
                    iterations: it,
                    residual,
                    restarts: 0,
                },
                objective_history: Vec::new(),
            });
        }
        let (_, inv_root) = linalg::sqrt_and_inv_sqrt_pd(&s)?;
        s = linalg::symmetrize(&(&inv_root * &k * &k * &inv_root));
    }
    Err(Error::NoConvergence {
        solver: "gaussian barycenter fixed point",
        iterations: cfg.fixed_point_max_iters,
        residual,
    })
}

/// 1-D barycenter: the measure whose quantile function is `Σλ_j F_j^{-1}`.
pub fn bar_1d(problem: &BarycenterProblem) -> Result<DiscreteMeasure> {
    let ms = problem.discrete()?;
    let fns: Vec<QuantileFunction> = ms.iter().map(|m| QuantileFunction::new(m)).collect::<Result<_>>()?;
    let refs: Vec<&QuantileFunction> = fns.iter().collect();
    let lam = &problem.weights;
    let mut atoms: Vec<f64> = Vec::new();
    let mut weights: Vec<f64> = Vec::new();
    for_each_quantile_cell(&refs, |width, q| {
        let x: f64 = q.iter().zip(lam).map(|(v, w)| v * w).sum();
        match atoms.last() {
            Some(&last) if last == x => *weights.last_mut().unwrap() += width,
            _ if width > 0.0 => {
                atoms.push(x);
                weights.push(width);
            }
            _ => {}
        }
    });
    let total = neumaier_sum(weights.iter().copied());
    for w in &mut weights {
        *w /= total;
    }
    Ok(DiscreteMeasure::from_parts_unchecked(1, atoms, weights))
}

/// Barycenter restricted to uniform measures on `support_size` atoms.
///
/// Alternates optimal couplings `γ_j ∈ Π(μ_j, ν)` with the barycentric
/// projection `y_k ← Σ_j λ_j (Σ_i γ_j[i,k] x_i) / γ_j[·,k]`. The returned
/// atoms are the projection of the last couplings, so each sweep and the
/// final answer can only lower the objective. Atoms that receive no mass
/// (possible under Sinkhorn) restart at the weighted mean of the input means.
///
/// The descent runs from several starts and keeps the lowest objective: a
/// seeded sample of the weighted mixture, and for each input an iterated
/// geodesic average `ν ← (1 − s)ν + s μ_j` (in projection form) anchored there.
pub fn bar_free_support(
    problem: &BarycenterProblem,
    support_size: usize,
    cfg: &SolverConfig,
    seed: u64,
) -> Result<Barycenter<DiscreteMeasure>> {
    if support_size == 0 {
        return Err(Error::Parameter("support_size must be at least 1".into()));
    }
    let ms = problem.discrete()?;
    let d = problem.dim();
    let lam = &problem.weights;
    let k = support_size;
    let uniform = vec![1.0 / k as f64; k];

    let mut fallback = vec![0.0; d];
    for (m, &w) in ms.iter().zip(lam) {
        for (f, x) in fallback.iter_mut().zip(m.mean()) {
            *f += w * x;
        }
    }

    let couple = |m: &DiscreteMeasure, atoms: &[f64]| -> Result<TransportPlan> {
        let nu = DiscreteMeasure::from_parts_unchecked(d, atoms.to_vec(), uniform.clone());
        Ok(match cfg.method {
            SolverMethod::Sinkhorn => sinkhorn(m, &nu, cfg)?.plan,
            SolverMethod::ExactLp | SolverMethod::ClosedForm => wp_discrete_exact(m, &nu, 2.0, cfg)?.1,
        })
    };
    // Plan-weighted mean of the mass each atom receives, `None` if it gets none.
    let targets = |plan: &TransportPlan, m: &DiscreteMeasure| -> Vec<Option<Vec<f64>>> {
        let mut mass = vec![0.0; k];
        let mut sums = vec![0.0; k * d];
        for &(i, c, g) in plan.entries() {
            mass[c] += g;
            for (s, x) in sums[c * d..(c + 1) * d].iter_mut().zip(m.atom(i)) {
                *s += g * x;
            }
        }
        (0..k)
            .map(|c| (mass[c] > 0.0).then(|| sums[c * d..(c + 1) * d].iter().map(|s| s / mass[c]).collect()))
            .collect()
    };
    let solve = |atoms: &[f64]| -> Result<(Vec<TransportPlan>, f64)> {
        let mut plans = Vec::with_capacity(ms.len());
        let mut objective = 0.0;
        for (m, &w) in ms.iter().zip(lam) {
            let plan = couple(m, atoms)?;
            objective += w * plan.cost_p;
            plans.push(plan);
        }
        Ok((plans, objective))
    };
    let project = |plans: &[TransportPlan], restarts: &mut usize| -> Vec<f64> {
        let mut y = vec![0.0; k * d];
        let mut empty = vec![false; k];
        for ((plan, m), &w) in plans.iter().zip(&ms).zip(lam) {
            for (c, t) in targets(plan, m).into_iter().enumerate() {
                match t {
                    Some(t) => {
                        for (a, x) in t.iter().enumerate() {
                            y[c * d + a] += w * x;
                        }
                    }
                    None => empty[c] = true,
                }
            }
        }
        for c in (0..k).filter(|&c| empty[c]) {
            y[c * d..(c + 1) * d].copy_from_slice(&fallback);
            *restarts += 1;
            debug!("free-support atom {c} received no mass; re-seeded at the mean");
        }
        y
    };
    let descend = |mut atoms: Vec<f64>| -> Result<Barycenter<DiscreteMeasure>> {
        let mut restarts = 0;
        let (mut plans, mut objective) = solve(&atoms)?;
        let mut history = vec![objective];
        let mut residual = f64::INFINITY;
        let mut iterations = 0;
        while iterations < cfg.free_support_max_iters {
            iterations += 1;
            atoms = project(&plans, &mut restarts);
            let (next_plans, next) = solve(&atoms)?;
            residual = (objective - next) / objective.max(f64::MIN_POSITIVE);
            plans = next_plans;
            objective = next;
            history.push(objective);
            if residual <= cfg.free_support_tolerance {
                break;
            }
        }
        if residual > cfg.free_support_tolerance {
            debug!("free-support barycenter stopped at the sweep cap with relative decrease {residual:e}");
        }
        atoms = project(&plans, &mut restarts);
        Ok(Barycenter {
            measure: DiscreteMeasure::from_parts_unchecked(d, atoms, uniform.clone()),
            telemetry: BarycenterTelemetry {
                iterations,
                residual,
                restarts,
            },
            objective_history: history,
        })
    };
    let geodesic_average = |anchor: usize| -> Result<Vec<f64>> {
        let mut atoms = initial_atoms(&ms[anchor..=anchor], &[1.0], k, seed);
        let mut acc = lam[anchor];
        for j in (0..ms.len()).filter(|&j| j != anchor) {
            acc += lam[j];
            let s = lam[j] / acc;
            let plan = couple(ms[j], &atoms)?;
            for (c, t) in targets(&plan, ms[j]).into_iter().enumerate() {
                if let Some(t) = t {
                    for (y, x) in atoms[c * d..(c + 1) * d].iter_mut().zip(t) {
                        *y += s * (x - *y);
                    }
                }
            }
        }
        Ok(atoms)
    };

    let mut best = descend(initial_atoms(&ms, lam, k, seed))?;
    if ms.len() > 1 {
        for anchor in 0..ms.len() {
            let run = descend(geodesic_average(anchor)?)?;
            if run.objective_history.last() < best.objective_history.last() {
                best = run;
            }
        }
    }
    Ok(best)
}

/// `k` atoms drawn from the mixture `Σλ_j μ_j`, without replacement while
/// distinct atoms remain (weighted reservoir keys `u^{1/w}`).
fn initial_atoms(ms: &[&DiscreteMeasure], lam: &[f64], k: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keyed: Vec<(f64, usize, usize)> = Vec::new();
    for (j, (m, &l)) in ms.iter().zip(lam).enumerate() {
        for (i, &w) in m.weights().iter().enumerate() {
            let u: f64 = rng.random();
            if w > 0.0 {
                keyed.push((u.powf(1.0 / (l * w)), j, i));
            }
        }
    }
    keyed.sort_by(|a, b| b.0.total_cmp(&a.0).then((a.1, a.2).cmp(&(b.1, b.2))));
    let d = ms[0].dim();
    let mut atoms = Vec::with_capacity(k * d);
    for &(_, j, i) in keyed.iter().take(k) {
        atoms.extend_from_slice(ms[j].atom(i));
    }
    while atoms.len() < k * d {
        let u: f64 = rng.random();
        let (_, j, i) = keyed[((u * keyed.len() as f64) as usize).min(keyed.len() - 1)];
        atoms.extend_from_slice(ms[j].atom(i));
    }
    atoms
}
