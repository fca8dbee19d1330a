//! Exact discrete transport as a linear program.

use rayon::prelude::*;

use super::network_simplex::TransportSimplex;
use super::{ground_cost, TransportPlan};
use crate::error::{Error, Result};
use crate::measures::{DiscreteMeasure, GaussianMeasure};

/// Problems with at most this many coupling entries are solved on the full
/// arc set; larger ones by column generation.
const DENSE_ARCS: usize = 200_000;
/// Initial arcs per source in column generation.
const SEED_ARCS: usize = 6;
/// Arcs added per source per pricing round.
const PRICE_ARCS: usize = 6;
/// Relative reduced-cost tolerance.
const OPT_TOL: f64 = 1e-12;

/// `W_p(μ, ν)` and an optimal coupling, by network simplex.
///
/// Small problems use every arc. Large ones start from a sparse candidate set
/// (nearest neighbours after an affine moment alignment) and add arcs whose
/// reduced cost under the current duals is negative, until the duals are
/// feasible for the full problem; the result is optimal for the full LP.
pub fn wp_discrete_exact(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    p: f64,
    cfg: &super::SolverConfig,
) -> Result<(f64, TransportPlan)> {
    if !(p >= 1.0) {
        return Err(Error::Parameter(format!("p must be at least 1, got {p}")));
    }
    if mu.dim() != nu.dim() {
        return Err(Error::DimensionMismatch {
            expected: mu.dim(),
            found: nu.dim(),
        });
    }
    let (m1, m2) = (mu.len(), nu.len());
    let entries = m1.saturating_mul(m2);
    if entries > cfg.lp_max_entries {
        return Err(Error::SizeCap {
            entries,
            cap: cfg.lp_max_entries,
        });
    }

    let scale = bounding_diameter(mu, nu).powf(p);
    let eps = OPT_TOL * scale.max(f64::MIN_POSITIVE);
    let max_pivots = 1000 * (m1 + m2) + 100 * entries.min(10_000_000) + 1000;

    let mut ns = TransportSimplex::new(mu.weights(), nu.weights());
    let cost = |i: usize, j: usize| ground_cost(mu.atom(i), nu.atom(j), p);
    if entries <= DENSE_ARCS {
        for i in 0..m1 {
            for j in 0..m2 {
                ns.add_arc(i, j, cost(i, j));
            }
        }
        ns.solve(eps, max_pivots)?;
    } else {
        for (i, j) in seed_arcs(mu, nu) {
            ns.add_arc(i, j, cost(i, j));
        }
        loop {
            ns.solve(eps, max_pivots)?;
            let new_arcs = price_out(&ns, mu, nu, p, eps);
            if new_arcs.is_empty() {
                break;
            }
            for (i, j) in new_arcs {
                ns.add_arc(i, j, cost(i, j));
            }
        }
    }

    let leftover = ns.artificial_flow();
    if leftover > 1e-9 {
        return Err(Error::InvalidMeasure(format!(
            "transport problem infeasible (unrouted mass {leftover:e})"
        )));
    }
    let mut plan_entries = Vec::new();
    let mut total = 0.0;
    for r in 0..ns.n_real_arcs() {
        let (i, j, f) = ns.real_arc(r);
        if f > 0.0 {
            total += f * cost(i, j);
            plan_entries.push((i, j, f));
        }
    }
    plan_entries.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
    let total = total.max(0.0);
    Ok((total.powf(1.0 / p), TransportPlan::new(m1, m2, plan_entries, total, p)))
}

pub(super) fn bounding_diameter(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> f64 {
    let d = mu.dim();
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for chunk in mu.atoms().chunks(d).chain(nu.atoms().chunks(d)) {
        for k in 0..d {
            lo[k] = lo[k].min(chunk[k]);
            hi[k] = hi[k].max(chunk[k]);
        }
    }
    lo.iter().zip(&hi).map(|(a, b)| (b - a) * (b - a)).sum::<f64>().sqrt()
}

fn moments(m: &DiscreteMeasure) -> (nalgebra::DVector<f64>, nalgebra::DMatrix<f64>) {
    let d = m.dim();
    let mean = nalgebra::DVector::from_vec(m.mean());
    let mut cov = nalgebra::DMatrix::zeros(d, d);
    for (k, &w) in m.weights().iter().enumerate() {
        let x = nalgebra::DVector::from_column_slice(m.atom(k)) - &mean;
        cov += w * &x * x.transpose();
    }
    (mean, cov)
}

/// Candidate arcs: each source's nearest sinks after mapping the sources by
/// the optimal affine map between the two moment-matched Gaussians, plus the
/// nearest source of every sink and a sorted north-west corner staircase.
fn seed_arcs(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Vec<(usize, usize)> {
    let d = mu.dim();
    let (m_mu, c_mu) = moments(mu);
    let (m_nu, c_nu) = moments(nu);
    let jitter = |c: nalgebra::DMatrix<f64>| {
        let bump = 1e-9 * (c.trace() / d as f64).max(1e-12);
        c + nalgebra::DMatrix::identity(d, d) * bump
    };
    let map = GaussianMeasure::new(m_mu.clone(), jitter(c_mu))
        .and_then(|a| GaussianMeasure::new(m_nu.clone(), jitter(c_nu.clone())).map(|b| (a, b)))
        .and_then(|(a, b)| super::gaussian_linear_map(&a, &b))
        .unwrap_or_else(|_| nalgebra::DMatrix::identity(d, d));
    let moved: Vec<f64> = (0..mu.len())
        .flat_map(|i| {
            let x = nalgebra::DVector::from_column_slice(mu.atom(i)) - &m_mu;
            let y = &m_nu + &map * x;
            y.iter().copied().collect::<Vec<_>>()
        })
        .collect();

    let rows: Vec<Vec<(f64, usize)>> = moved
        .par_chunks(d)
        .map(|z| {
            let mut best = TopK::new(SEED_ARCS);
            for j in 0..nu.len() {
                best.offer(ground_cost(z, nu.atom(j), 2.0), j);
            }
            best.items
        })
        .collect();
    let col_best: Vec<usize> = (0..nu.len())
        .into_par_iter()
        .map(|j| {
            let y = nu.atom(j);
            let mut best = (f64::INFINITY, 0);
            for (i, z) in moved.chunks(d).enumerate() {
                let c = ground_cost(z, y, 2.0);
                if c < best.0 {
                    best = (c, i);
                }
            }
            best.1
        })
        .collect();

    let mut arcs: Vec<(usize, usize)> = rows
        .into_iter()
        .enumerate()
        .flat_map(|(i, items)| items.into_iter().map(move |(_, j)| (i, j)))
        .chain(col_best.into_iter().enumerate().map(|(j, i)| (i, j)))
        .chain(staircase(mu, nu, &moved, &c_nu))
        .collect();
    arcs.sort_unstable();
    arcs.dedup();
    arcs
}

/// North-west corner arcs between the sources (already aligned) and the
/// sinks, both sorted along the leading principal axis of `ν`. In one
/// dimension this is the support of the optimal plan.
fn staircase(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    moved: &[f64],
    c_nu: &nalgebra::DMatrix<f64>,
) -> Vec<(usize, usize)> {
    let d = mu.dim();
    let eig = c_nu.clone().symmetric_eigen();
    let axis = eig.eigenvectors.column(eig.eigenvalues.imax()).into_owned();
    let project = |z: &[f64]| z.iter().zip(axis.iter()).map(|(a, b)| a * b).sum::<f64>();
    let order = |keys: Vec<f64>| {
        let mut idx: Vec<usize> = (0..keys.len()).collect();
        idx.sort_by(|&a, &b| keys[a].total_cmp(&keys[b]).then(a.cmp(&b)));
        idx
    };
    let src = order(moved.chunks(d).map(project).collect());
    let snk = order((0..nu.len()).map(|j| project(nu.atom(j))).collect());

    let (wa, wb) = (mu.weights(), nu.weights());
    let mut arcs = Vec::with_capacity(src.len() + snk.len());
    let (mut a, mut b) = (0, 0);
    let (mut ra, mut rb) = (wa[src[0]], wb[snk[0]]);
    loop {
        arcs.push((src[a], snk[b]));
        if a + 1 == src.len() && b + 1 == snk.len() {
            break;
        }
        if b + 1 == snk.len() || (a + 1 < src.len() && ra <= rb) {
            rb -= ra;
            a += 1;
            ra = wa[src[a]];
        } else {
            ra -= rb;
            b += 1;
            rb = wb[snk[b]];
        }
    }
    arcs
}

/// Arcs with negative reduced cost under the current duals, at most
/// `PRICE_ARCS` per source, most negative first.
fn price_out(ns: &TransportSimplex, mu: &DiscreteMeasure, nu: &DiscreteMeasure, p: f64, eps: f64) -> Vec<(usize, usize)> {
    let sink_prices: Vec<(i64, f64)> = (0..nu.len()).map(|j| ns.sink_price(j)).collect();
    let per_row: Vec<Vec<(usize, usize)>> = (0..mu.len())
        .into_par_iter()
        .map(|i| {
            let (ib, ifin) = ns.source_price(i);
            let x = mu.atom(i);
            let mut top = TopKPrice::new(PRICE_ARCS);
            for (j, &(jb, jfin)) in sink_prices.iter().enumerate() {
                let big = ib - jb;
                if big > 0 {
                    continue;
                }
                let fin = ground_cost(x, nu.atom(j), p) + ifin - jfin;
                if big < 0 || fin < -eps {
                    top.offer((big, fin), j);
                }
            }
            top.items.into_iter().map(|(_, j)| (i, j)).collect()
        })
        .collect();
    per_row.into_iter().flatten().collect()
}

struct TopK {
    cap: usize,
    items: Vec<(f64, usize)>,
}

impl TopK {
    fn new(cap: usize) -> Self {
        Self {
            cap,
            items: Vec::with_capacity(cap + 1),
        }
    }

    fn offer(&mut self, key: f64, j: usize) {
        if self.items.len() == self.cap && key >= self.items[self.cap - 1].0 {
            return;
        }
        let pos = self.items.partition_point(|&(k, _)| k <= key);
        self.items.insert(pos, (key, j));
        self.items.truncate(self.cap);
    }
}

struct TopKPrice {
    cap: usize,
    items: Vec<((i64, f64), usize)>,
}

impl TopKPrice {
    fn new(cap: usize) -> Self {
        Self {
            cap,
            items: Vec::with_capacity(cap + 1),
        }
    }

    fn offer(&mut self, key: (i64, f64), j: usize) {
        let le = |a: (i64, f64), b: (i64, f64)| a.0 < b.0 || (a.0 == b.0 && a.1 <= b.1);
        if self.items.len() == self.cap && le(self.items[self.cap - 1].0, key) {
            return;
        }
        let pos = self.items.partition_point(|&(k, _)| le(k, key));
        self.items.insert(pos, (key, j));
        self.items.truncate(self.cap);
    }
}
