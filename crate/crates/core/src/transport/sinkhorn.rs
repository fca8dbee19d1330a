//! Log-domain entropic transport with ε-scaling and symmetric debiasing.

use nalgebra::{DMatrix, DVector};

use super::{ground_cost, SolverConfig, TransportPlan};
use crate::error::{Error, Result};
use crate::measures::DiscreteMeasure;

#[derive(Debug, Clone)]
pub struct SinkhornOutput {
    /// Debiased estimate of `W₂(μ, ν)`.
    pub estimate: f64,
    /// Entropic coupling between `μ` and `ν`.
    pub plan: TransportPlan,
    /// Largest iteration count among the three entropic solves.
    pub iterations: usize,
    /// Larger L1 violation of the two marginals of `plan`.
    pub marginal_residual: f64,
}

struct Entropic {
    value: f64,
    plan: Vec<f64>,
    iterations: usize,
    residual: f64,
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let top = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if top == f64::NEG_INFINITY {
        return top;
    }
    top + values.map(|v| (v - top).exp()).sum::<f64>().ln()
}

/// Residual below which the target-ε solve switches to Newton steps.
const NEWTON_SWITCH: f64 = 1e-1;
/// Largest potential change of one Newton step, in units of ε.
const NEWTON_MAX_LOG_STEP: f64 = 30.0;
/// Largest `m₁ + m₂` for which the dense Newton system is formed.
const NEWTON_MAX_SIZE: usize = 2000;

struct Problem<'a> {
    a: &'a [f64],
    b: &'a [f64],
    la: Vec<f64>,
    lb: Vec<f64>,
    cost: &'a [f64],
}

impl Problem<'_> {
    fn sweep(&self, f: &mut [f64], g: &mut [f64], eps: f64) {
        let (m1, m2) = (self.a.len(), self.b.len());
        for i in 0..m1 {
            let row = &self.cost[i * m2..(i + 1) * m2];
            f[i] = -eps * log_sum_exp((0..m2).map(|j| self.lb[j] + (g[j] - row[j]) / eps));
        }
        for j in 0..m2 {
            g[j] = -eps * log_sum_exp((0..m1).map(|i| self.la[i] + (f[i] - self.cost[i * m2 + j]) / eps));
        }
    }

    /// Fills `plan` for the given potentials and returns its row and column
    /// sums.
    fn plan(&self, f: &[f64], g: &[f64], eps: f64, plan: &mut [f64]) -> (Vec<f64>, Vec<f64>) {
        let m2 = self.b.len();
        let mut rows = vec![0.0; self.a.len()];
        let mut cols = vec![0.0; m2];
        for (i, r) in rows.iter_mut().enumerate() {
            for j in 0..m2 {
                let v = (self.la[i] + self.lb[j] + (f[i] + g[j] - self.cost[i * m2 + j]) / eps).exp();
                plan[i * m2 + j] = v;
                *r += v;
                cols[j] += v;
            }
        }
        (rows, cols)
    }

    /// Larger L1 violation of the two marginals.
    fn residual(&self, rows: &[f64], cols: &[f64]) -> f64 {
        let r: f64 = rows.iter().zip(self.a).map(|(x, w)| (x - w).abs()).sum();
        let c: f64 = cols.iter().zip(self.b).map(|(x, w)| (x - w).abs()).sum();
        r.max(c)
    }

    /// One damped Newton step on the marginal equations, with the last
    /// column potential held fixed to remove the additive gauge. Returns the
    /// new residual, or `None` if no step length reduced it.
    fn newton(&self, f: &mut [f64], g: &mut [f64], eps: f64, plan: &mut [f64], current: f64) -> Option<f64> {
        let (m1, m2) = (self.a.len(), self.b.len());
        let (rows, cols) = self.plan(f, g, eps, plan);
        let n = m1 + m2 - 1;
        let mut h = DMatrix::zeros(n, n);
        let mut rhs = DVector::zeros(n);
        for i in 0..m1 {
            h[(i, i)] = rows[i];
            rhs[i] = self.a[i] - rows[i];
            for j in 0..m2 - 1 {
                let v = plan[i * m2 + j];
                h[(i, m1 + j)] = v;
                h[(m1 + j, i)] = v;
            }
        }
        for j in 0..m2 - 1 {
            h[(m1 + j, m1 + j)] = cols[j];
            rhs[m1 + j] = self.b[j] - cols[j];
        }
        // Nearly decoupled kernel blocks make the system numerically
        // singular. Mass that must cross between blocks lives in exactly
        // those directions, so tiny eigenvalues are floored rather than
        // dropped and the step is capped in log units.
        let mut step = match h.clone().cholesky() {
            Some(ch) => ch.solve(&rhs),
            None => {
                let eig = h.symmetric_eigen();
                let floor = 1e-13 * eig.eigenvalues.amax();
                let proj = eig.eigenvectors.transpose() * &rhs;
                let scaled = DVector::from_fn(n, |k, _| proj[k] / eig.eigenvalues[k].max(floor));
                &eig.eigenvectors * scaled
            }
        };
        let largest = step.amax();
        if largest > NEWTON_MAX_LOG_STEP {
            step *= NEWTON_MAX_LOG_STEP / largest;
        }
        let (f0, g0) = (f.to_vec(), g.to_vec());
        let mut t = 1.0;
        for _ in 0..30 {
            for i in 0..m1 {
                f[i] = f0[i] + t * eps * step[i];
            }
            for j in 0..m2 - 1 {
                g[j] = g0[j] + t * eps * step[m1 + j];
            }
            let (r, c) = self.plan(f, g, eps, plan);
            let res = self.residual(&r, &c);
            if res < current {
                return Some(res);
            }
            t *= 0.5;
        }
        f.copy_from_slice(&f0);
        g.copy_from_slice(&g0);
        None
    }
}

/// Entropic OT `min ⟨γ,C⟩ + ε KL(γ | a⊗b)` for a row-major cost matrix.
///
/// Log-domain Sinkhorn sweeps with ε-scaling warm starts. Plain sweeps stall
/// on nearly block-diagonal kernels at small ε, so once the residual at the
/// target ε is moderate the solve finishes with Newton steps on the dual
/// (quadratic convergence), interleaving sweeps if a step fails.
fn entropic(a: &[f64], b: &[f64], cost: &[f64], eps: f64, cfg: &SolverConfig) -> Result<Entropic> {
    let (m1, m2) = (a.len(), b.len());
    let pb = Problem {
        a,
        b,
        la: a.iter().map(|w| w.ln()).collect(),
        lb: b.iter().map(|w| w.ln()).collect(),
        cost,
    };
    let mut f = vec![0.0; m1];
    let mut g = vec![0.0; m2];
    let mut plan = vec![0.0; m1 * m2];
    let c_max = cost.iter().copied().fold(0.0, f64::max);
    let newton_ok = m1 + m2 <= NEWTON_MAX_SIZE;

    let mut level = c_max.max(eps);
    let mut iterations = 0;
    let mut residual = f64::INFINITY;
    loop {
        let last = level <= eps;
        let target = if last {
            cfg.sinkhorn_tolerance
        } else {
            1e-2_f64.max(cfg.sinkhorn_tolerance)
        };
        let mut cooldown = 0usize;
        let mut fresh = true;
        loop {
            if iterations >= cfg.sinkhorn_max_iters {
                return Err(Error::NoConvergence {
                    solver: "sinkhorn",
                    iterations,
                    residual,
                });
            }
            iterations += 1;
            let newton = last && newton_ok && cooldown == 0 && !fresh && residual <= NEWTON_SWITCH;
            match newton.then(|| pb.newton(&mut f, &mut g, level, &mut plan, residual)).flatten() {
                Some(res) => residual = res,
                None => {
                    if newton {
                        cooldown = 10;
                    }
                    cooldown = cooldown.saturating_sub(1);
                    pb.sweep(&mut f, &mut g, level);
                    let (r, c) = pb.plan(&f, &g, level, &mut plan);
                    residual = pb.residual(&r, &c);
                }
            }
            fresh = false;
            if residual <= target {
                break;
            }
        }
        if last {
            break;
        }
        level = (level * 0.5).max(eps);
    }

    let value = a.iter().zip(&f).filter(|(w, _)| **w > 0.0).map(|(w, x)| w * x).sum::<f64>()
        + b.iter().zip(&g).filter(|(w, _)| **w > 0.0).map(|(w, x)| w * x).sum::<f64>();
    Ok(Entropic {
        value,
        plan,
        iterations,
        residual,
    })
}

/// Atoms with positive weight: indices and weights.
fn support(m: &DiscreteMeasure) -> (Vec<usize>, Vec<f64>) {
    (0..m.len()).filter(|&k| m.weights()[k] > 0.0).map(|k| (k, m.weights()[k])).unzip()
}

fn scaled_cost(x: &DiscreteMeasure, xs: &[usize], y: &DiscreteMeasure, ys: &[usize], inv_scale_sq: f64) -> Vec<f64> {
    let mut c = Vec::with_capacity(xs.len() * ys.len());
    for &i in xs {
        for &j in ys {
            c.push(ground_cost(x.atom(i), y.atom(j), 2.0) * inv_scale_sq);
        }
    }
    c
}

/// Debiased Sinkhorn estimate of `W₂(μ, ν)` and the entropic plan.
///
/// Coordinates are rescaled so the joint bounding box has unit diameter
/// before `cfg.sinkhorn_epsilon` is applied. The estimate is
/// `sqrt(OT_ε(μ,ν) − ½OT_ε(μ,μ) − ½OT_ε(ν,ν))` mapped back to the original
/// scale, which vanishes exactly when `μ = ν`.
pub fn sinkhorn(mu: &DiscreteMeasure, nu: &DiscreteMeasure, cfg: &SolverConfig) -> Result<SinkhornOutput> {
    if mu.dim() != nu.dim() {
        return Err(Error::DimensionMismatch {
            expected: mu.dim(),
            found: nu.dim(),
        });
    }
    let entries = mu.len().saturating_mul(nu.len().max(mu.len()));
    if entries > cfg.lp_max_entries {
        return Err(Error::SizeCap {
            entries,
            cap: cfg.lp_max_entries,
        });
    }
    let eps = cfg.sinkhorn_epsilon;
    let mut scale = super::exact::bounding_diameter(mu, nu);
    if scale <= 0.0 {
        scale = 1.0;
    }
    let inv = 1.0 / (scale * scale);

    // Zero-weight atoms carry no mass and would make the dual degenerate.
    let (xs, a) = support(mu);
    let (ys, b) = support(nu);
    let xy = entropic(&a, &b, &scaled_cost(mu, &xs, nu, &ys, inv), eps, cfg)?;
    let xx = entropic(&a, &a, &scaled_cost(mu, &xs, mu, &xs, inv), eps, cfg)?;
    let yy = entropic(&b, &b, &scaled_cost(nu, &ys, nu, &ys, inv), eps, cfg)?;
    let divergence = xy.value - 0.5 * xx.value - 0.5 * yy.value;

    let mut entries = Vec::new();
    let mut cost = 0.0;
    for (k, &v) in xy.plan.iter().enumerate() {
        if v > 0.0 {
            let (i, j) = (xs[k / ys.len()], ys[k % ys.len()]);
            cost += v * ground_cost(mu.atom(i), nu.atom(j), 2.0);
            entries.push((i, j, v));
        }
    }
    Ok(SinkhornOutput {
        estimate: scale * divergence.max(0.0).sqrt(),
        plan: TransportPlan::new(mu.len(), nu.len(), entries, cost, 2.0),
        iterations: xy.iterations.max(xx.iterations).max(yy.iterations),
        marginal_residual: xy.residual,
    })
}
