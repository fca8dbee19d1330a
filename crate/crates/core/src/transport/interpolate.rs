//! McCann interpolation between two measures.

use nalgebra::DMatrix;

use super::{gaussian_linear_map, wp_discrete_exact, SolverConfig};
use crate::error::{Error, Result};
use crate::linalg;
use crate::measures::{neumaier_sum, DiscreteMeasure, GaussianMeasure, Measure};

/// Point at time `t` on the displacement geodesic from `mu` to `nu`.
///
/// Gaussians follow the optimal linear map, so the result is Gaussian with
/// mean `(1−t)m₀ + t m₁`. Discrete measures interpolate the exact optimal
/// coupling: each entry `γ_ij` becomes an atom at `(1−t)x_i + t y_j`, which
/// also covers plans that split mass.
pub fn displacement_interpolate(mu: &Measure, nu: &Measure, t: f64, cfg: &SolverConfig) -> Result<Measure> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::Parameter(format!("interpolation time must lie in [0, 1], got {t}")));
    }
    if mu.dim() != nu.dim() {
        return Err(Error::DimensionMismatch {
            expected: mu.dim(),
            found: nu.dim(),
        });
    }
    match (mu, nu) {
        (Measure::Gaussian(a), Measure::Gaussian(b)) => {
            // Validate Σ₀ even at the endpoints so the error contract holds.
            let map = gaussian_linear_map(a, b)?;
            if t == 0.0 {
                return Ok(mu.clone());
            }
            if t == 1.0 {
                return Ok(nu.clone());
            }
            Ok(Measure::Gaussian(gaussian_point(a, b, &map, t)))
        }
        (Measure::Discrete(a), Measure::Discrete(b)) => {
            if t == 0.0 {
                return Ok(mu.clone());
            }
            if t == 1.0 {
                return Ok(nu.clone());
            }
            discrete_point(a, b, t, cfg).map(Measure::Discrete)
        }
        _ => Err(Error::MixedTags),
    }
}

fn gaussian_point(a: &GaussianMeasure, b: &GaussianMeasure, map: &DMatrix<f64>, t: f64) -> GaussianMeasure {
    let d = a.dim();
    let m = DMatrix::identity(d, d) * (1.0 - t) + map * t;
    let cov = linalg::symmetrize(&(&m * a.cov() * &m));
    let mean = a.mean() * (1.0 - t) + b.mean() * t;
    GaussianMeasure::from_parts_unchecked(mean, cov)
}

fn discrete_point(a: &DiscreteMeasure, b: &DiscreteMeasure, t: f64, cfg: &SolverConfig) -> Result<DiscreteMeasure> {
    let (_, plan) = wp_discrete_exact(a, b, 2.0, cfg)?;
    let d = a.dim();
    let mut atoms = Vec::with_capacity(plan.entries().len() * d);
    let mut weights = Vec::with_capacity(plan.entries().len());
    for &(i, j, w) in plan.entries() {
        if w <= 0.0 {
            continue;
        }
        let (x, y) = (a.atom(i), b.atom(j));
        atoms.extend(x.iter().zip(y).map(|(x, y)| (1.0 - t) * x + t * y));
        weights.push(w);
    }
    let total = neumaier_sum(weights.iter().copied());
    for w in &mut weights {
        *w /= total;
    }
    Ok(DiscreteMeasure::from_parts_unchecked(d, atoms, weights))
}
