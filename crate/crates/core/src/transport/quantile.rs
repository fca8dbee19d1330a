//! One-dimensional transport through quantile functions.

use crate::error::{Error, Result};
use crate::measures::DiscreteMeasure;

/// Breakpoints closer than this are treated as one.
const BREAKPOINT_TOL: f64 = 1e-14;

/// Left-continuous quantile function of a 1-D discrete measure: equal to
/// `values[k]` on `(levels[k-1], levels[k]]`.
#[derive(Debug, Clone)]
pub(crate) struct QuantileFunction {
    values: Vec<f64>,
    levels: Vec<f64>,
}

impl QuantileFunction {
    pub(crate) fn new(mu: &DiscreteMeasure) -> Result<Self> {
        if mu.dim() != 1 {
            return Err(Error::Unsupported(format!(
                "quantile transport needs d = 1, got d = {}",
                mu.dim()
            )));
        }
        let mut pairs: Vec<(f64, f64)> = mu
            .atoms()
            .iter()
            .zip(mu.weights())
            .filter(|(_, &w)| w > 0.0)
            .map(|(&x, &w)| (x, w))
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut values: Vec<f64> = Vec::with_capacity(pairs.len());
        let mut masses: Vec<f64> = Vec::with_capacity(pairs.len());
        for (x, w) in pairs {
            match values.last() {
                Some(&last) if last == x => *masses.last_mut().unwrap() += w,
                _ => {
                    values.push(x);
                    masses.push(w);
                }
            }
        }
        let mut levels = Vec::with_capacity(masses.len());
        let mut acc = 0.0;
        for w in masses {
            acc += w;
            levels.push(acc);
        }
        // The last level is 1 by definition; drop rounding drift.
        if let Some(last) = levels.last_mut() {
            *last = 1.0;
        }
        Ok(Self { values, levels })
    }
}

/// Sorted union of all quantile breakpoints in `(0, 1]`, ending at exactly 1.
fn merged_levels(fns: &[&QuantileFunction]) -> Vec<f64> {
    let mut all: Vec<f64> = fns.iter().flat_map(|f| f.levels.iter().copied()).collect();
    all.sort_by(f64::total_cmp);
    let mut out: Vec<f64> = Vec::with_capacity(all.len());
    for u in all {
        if u <= BREAKPOINT_TOL {
            continue;
        }
        match out.last() {
            Some(&last) if u - last <= BREAKPOINT_TOL => {}
            _ => out.push(u),
        }
    }
    if let Some(last) = out.last_mut() {
        if 1.0 - *last <= BREAKPOINT_TOL {
            *last = 1.0;
        } else {
            out.push(1.0);
        }
    }
    out
}

/// Walks the merged partition, calling `visit(width, quantile values)` once
/// per interval.
pub(crate) fn for_each_quantile_cell(fns: &[&QuantileFunction], mut visit: impl FnMut(f64, &[f64])) {
    let levels = merged_levels(fns);
    let mut cursor = vec![0usize; fns.len()];
    let mut current = vec![0.0; fns.len()];
    let mut lo = 0.0;
    for &hi in &levels {
        for (j, f) in fns.iter().enumerate() {
            while cursor[j] + 1 < f.levels.len() && f.levels[cursor[j]] < hi - BREAKPOINT_TOL {
                cursor[j] += 1;
            }
            current[j] = f.values[cursor[j]];
        }
        visit(hi - lo, &current);
        lo = hi;
    }
}

/// `W_p` between 1-D discrete measures, integrating `|F_μ^{-1} − F_ν^{-1}|^p`
/// over the merged quantile partition. Exact for discrete inputs.
pub fn wp_1d(mu: &DiscreteMeasure, nu: &DiscreteMeasure, p: f64) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(Error::Parameter(format!("p must be at least 1, got {p}")));
    }
    let fa = QuantileFunction::new(mu)?;
    let fb = QuantileFunction::new(nu)?;
    let mut total = 0.0;
    for_each_quantile_cell(&[&fa, &fb], |width, q| {
        let gap = (q[0] - q[1]).abs();
        total += width * if p == 2.0 { gap * gap } else { gap.powf(p) };
    });
    Ok(total.max(0.0).powf(1.0 / p))
}
