//! Wasserstein distances, optimal couplings and displacement interpolation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::Measure;

mod exact;
mod gaussian;
mod interpolate;
pub(crate) mod network_simplex;
mod quantile;
mod sinkhorn;

pub use exact::wp_discrete_exact;
pub use gaussian::{gaussian_linear_map, w2_gaussian};
pub use interpolate::displacement_interpolate;
pub use quantile::wp_1d;
pub(crate) use quantile::{for_each_quantile_cell, QuantileFunction};
pub use sinkhorn::{sinkhorn, SinkhornOutput};

/// Principal square root of a symmetric PSD matrix.
pub use crate::linalg::sqrt_psd as matrix_sqrt_psd;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SolverMethod {
    /// Exact linear program (network simplex); quantile formula in 1-D.
    #[default]
    ExactLp,
    /// Log-domain entropic transport with debiasing.
    Sinkhorn,
    /// Closed forms only: Gaussian (Bures) and 1-D quantile. Discrete inputs
    /// in higher dimension fall back to the exact LP.
    ClosedForm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub method: SolverMethod,
    pub sinkhorn_epsilon: f64,
    pub sinkhorn_max_iters: usize,
    pub sinkhorn_tolerance: f64,
    pub fixed_point_tolerance: f64,
    pub fixed_point_max_iters: usize,
    /// Largest `m₁·m₂` the exact solver accepts.
    pub lp_max_entries: usize,
    /// Atom count of free-support barycenters; `None` uses the largest input.
    pub support_size: Option<usize>,
    pub free_support_max_iters: usize,
    pub free_support_tolerance: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            method: SolverMethod::ExactLp,
            sinkhorn_epsilon: 1e-3,
            sinkhorn_max_iters: 10_000,
            sinkhorn_tolerance: 1e-8,
            fixed_point_tolerance: 1e-12,
            fixed_point_max_iters: 1_000,
            lp_max_entries: 1_000_000,
            support_size: None,
            free_support_max_iters: 100,
            free_support_tolerance: 1e-12,
        }
    }
}

impl SolverConfig {
    pub fn sinkhorn(epsilon: f64) -> Self {
        Self {
            method: SolverMethod::Sinkhorn,
            sinkhorn_epsilon: epsilon,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("sinkhorn_epsilon", self.sinkhorn_epsilon),
            ("sinkhorn_tolerance", self.sinkhorn_tolerance),
            ("fixed_point_tolerance", self.fixed_point_tolerance),
            ("free_support_tolerance", self.free_support_tolerance),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Parameter(format!("{name} must be a positive number")));
            }
        }
        let caps = [
            ("sinkhorn_max_iters", self.sinkhorn_max_iters),
            ("fixed_point_max_iters", self.fixed_point_max_iters),
            ("lp_max_entries", self.lp_max_entries),
            ("free_support_max_iters", self.free_support_max_iters),
        ];
        for (name, v) in caps {
            if v < 1 {
                return Err(Error::Parameter(format!("{name} must be at least 1")));
            }
        }
        if self.support_size == Some(0) {
            return Err(Error::Parameter("support_size must be at least 1".into()));
        }
        Ok(())
    }
}

/// A coupling between two discrete measures, stored as its nonzero entries.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    rows: usize,
    cols: usize,
    entries: Vec<(usize, usize, f64)>,
    /// `Σ γ_ij |x_i − y_j|^p`.
    pub cost_p: f64,
    pub p: f64,
}

impl TransportPlan {
    pub(crate) fn new(rows: usize, cols: usize, entries: Vec<(usize, usize, f64)>, cost_p: f64, p: f64) -> Self {
        Self {
            rows,
            cols,
            entries,
            cost_p,
            p,
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    pub fn row_sums(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.rows];
        for &(i, _, v) in &self.entries {
            s[i] += v;
        }
        s
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.cols];
        for &(_, j, v) in &self.entries {
            s[j] += v;
        }
        s
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(self.rows, self.cols);
        for &(i, j, v) in &self.entries {
            m[(i, j)] += v;
        }
        m
    }

    /// Largest deviation of either marginal from the given weights.
    pub fn marginal_violation(&self, source: &[f64], target: &[f64]) -> f64 {
        let r = self
            .row_sums()
            .iter()
            .zip(source)
            .map(|(s, w)| (s - w).abs())
            .fold(0.0, f64::max);
        let c = self
            .col_sums()
            .iter()
            .zip(target)
            .map(|(s, w)| (s - w).abs())
            .fold(0.0, f64::max);
        r.max(c)
    }
}

/// `|x − y|^p` with the usual fast paths.
#[inline]
pub(crate) fn ground_cost(x: &[f64], y: &[f64], p: f64) -> f64 {
    let sq: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    if p == 2.0 {
        sq
    } else if p == 1.0 {
        sq.sqrt()
    } else {
        sq.powf(0.5 * p)
    }
}

/// `W_p(μ, ν)` with the solver selected by `cfg`.
///
/// Gaussians always use the closed form (and only `p = 2`). Discrete inputs
/// use the quantile formula in 1-D (except under Sinkhorn), the exact LP
/// otherwise; Sinkhorn supports `p = 2` only.
pub fn wasserstein(mu: &Measure, nu: &Measure, p: f64, cfg: &SolverConfig) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(Error::Parameter(format!("p must be at least 1, got {p}")));
    }
    if mu.dim() != nu.dim() {
        return Err(Error::DimensionMismatch {
            expected: mu.dim(),
            found: nu.dim(),
        });
    }
    match (mu, nu) {
        (Measure::Gaussian(a), Measure::Gaussian(b)) => {
            if p != 2.0 {
                return Err(Error::Unsupported("gaussian closed form is available for p = 2 only".into()));
            }
            w2_gaussian(a, b)
        }
        (Measure::Discrete(a), Measure::Discrete(b)) => match cfg.method {
            SolverMethod::Sinkhorn => {
                if p != 2.0 {
                    return Err(Error::Unsupported("sinkhorn estimates W2 only".into()));
                }
                Ok(sinkhorn(a, b, cfg)?.estimate)
            }
            SolverMethod::ExactLp | SolverMethod::ClosedForm => {
                if a.dim() == 1 {
                    wp_1d(a, b, p)
                } else {
                    Ok(wp_discrete_exact(a, b, p, cfg)?.0)
                }
            }
        },
        _ => Err(Error::MixedTags),
    }
}

pub fn w2(mu: &Measure, nu: &Measure, cfg: &SolverConfig) -> Result<f64> {
    wasserstein(mu, nu, 2.0, cfg)
}
