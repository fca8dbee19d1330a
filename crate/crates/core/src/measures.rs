//! Probability measures on `R^d`: Gaussians and finitely supported measures.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Tolerance on `|Σ weights − 1|`.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;

/// Compensated (Neumaier) summation.
pub fn neumaier_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0_f64;
    let mut comp = 0.0_f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMeasure {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

impl GaussianMeasure {
    /// Validates and symmetrizes the covariance.
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if d == 0 {
            return Err(Error::InvalidMeasure("dimension must be at least 1".into()));
        }
        if cov.nrows() != d || cov.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: cov.nrows().max(cov.ncols()),
            });
        }
        if mean.iter().chain(cov.iter()).any(|x| !x.is_finite()) {
            return Err(Error::InvalidMeasure("non-finite gaussian parameter".into()));
        }
        let asym = linalg::max_asymmetry(&cov);
        if asym > linalg::SYMMETRY_TOL * (1.0 + cov.amax()) {
            return Err(Error::NotSymmetric { max_asymmetry: asym });
        }
        let cov = linalg::symmetrize(&cov);
        let lo = linalg::min_eigenvalue(&cov);
        if lo < linalg::PSD_TOL {
            return Err(Error::NotPsd { min_eigenvalue: lo });
        }
        Ok(Self { mean, cov })
    }

    pub fn standard(d: usize) -> Self {
        Self {
            mean: DVector::zeros(d),
            cov: DMatrix::identity(d, d),
        }
    }

    /// Builds without re-validating; the caller guarantees symmetry and PSD.
    pub(crate) fn from_parts_unchecked(mean: DVector<f64>, cov: DMatrix<f64>) -> Self {
        Self { mean, cov }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }
}

/// A finitely supported measure `Σ_k w_k δ_{x_k}`. Atoms are stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    dim: usize,
    atoms: Vec<f64>,
    weights: Vec<f64>,
}

impl DiscreteMeasure {
    pub fn new(dim: usize, atoms: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidMeasure("dimension must be at least 1".into()));
        }
        if weights.is_empty() {
            return Err(Error::InvalidMeasure("at least one atom is required".into()));
        }
        if atoms.len() != dim * weights.len() {
            return Err(Error::InvalidMeasure(format!(
                "{} coordinates do not form {} atoms in dimension {dim}",
                atoms.len(),
                weights.len()
            )));
        }
        if atoms.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidMeasure("non-finite atom coordinate".into()));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidMeasure("weights must be finite and nonnegative".into()));
        }
        let total = neumaier_sum(weights.iter().copied());
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::InvalidMeasure(format!(
                "weights sum to {total:.17}, not 1"
            )));
        }
        Ok(Self { dim, atoms, weights })
    }

    pub fn from_rows(rows: &[Vec<f64>], weights: Vec<f64>) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::InvalidMeasure("atoms have inconsistent dimension".into()));
        }
        Self::new(dim, rows.concat(), weights)
    }

    /// Equal weights on every atom.
    pub fn uniform(dim: usize, atoms: Vec<f64>) -> Result<Self> {
        let m = if dim == 0 { 0 } else { atoms.len() / dim };
        Self::new(dim, atoms, vec![1.0 / m.max(1) as f64; m])
    }

    pub fn dirac(point: &[f64]) -> Result<Self> {
        Self::new(point.len(), point.to_vec(), vec![1.0])
    }

    /// Same as [`DiscreteMeasure::new`] but without the weight-sum check;
    /// used where weights come out of a solver that already normalizes them.
    pub(crate) fn from_parts_unchecked(dim: usize, atoms: Vec<f64>, weights: Vec<f64>) -> Self {
        Self { dim, atoms, weights }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn atom(&self, k: usize) -> &[f64] {
        &self.atoms[k * self.dim..(k + 1) * self.dim]
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for (k, w) in self.weights.iter().enumerate() {
            for (acc, x) in m.iter_mut().zip(self.atom(k)) {
                *acc += w * x;
            }
        }
        m
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Measure {
    Gaussian(GaussianMeasure),
    Discrete(DiscreteMeasure),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeasureKind {
    Gaussian,
    Discrete,
}

impl Measure {
    pub fn dim(&self) -> usize {
        match self {
            Measure::Gaussian(g) => g.dim(),
            Measure::Discrete(m) => m.dim(),
        }
    }

    pub fn kind(&self) -> MeasureKind {
        match self {
            Measure::Gaussian(_) => MeasureKind::Gaussian,
            Measure::Discrete(_) => MeasureKind::Discrete,
        }
    }

    pub fn mean(&self) -> Vec<f64> {
        match self {
            Measure::Gaussian(g) => g.mean().iter().copied().collect(),
            Measure::Discrete(m) => m.mean(),
        }
    }

    pub fn as_gaussian(&self) -> Option<&GaussianMeasure> {
        match self {
            Measure::Gaussian(g) => Some(g),
            Measure::Discrete(_) => None,
        }
    }

    pub fn as_discrete(&self) -> Option<&DiscreteMeasure> {
        match self {
            Measure::Discrete(m) => Some(m),
            Measure::Gaussian(_) => None,
        }
    }
}

impl From<GaussianMeasure> for Measure {
    fn from(g: GaussianMeasure) -> Self {
        Measure::Gaussian(g)
    }
}

impl From<DiscreteMeasure> for Measure {
    fn from(m: DiscreteMeasure) -> Self {
        Measure::Discrete(m)
    }
}

/// Checks that every measure shares the kind and dimension of the first.
pub fn check_homogeneous<'a>(measures: impl IntoIterator<Item = &'a Measure>) -> Result<()> {
    let mut iter = measures.into_iter();
    let Some(first) = iter.next() else {
        return Ok(());
    };
    for m in iter {
        if m.kind() != first.kind() {
            return Err(Error::MixedTags);
        }
        if m.dim() != first.dim() {
            return Err(Error::DimensionMismatch {
                expected: first.dim(),
                found: m.dim(),
            });
        }
    }
    Ok(())
}

fn sq_norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

/// `∫|x|² dμ`.
pub fn second_moment(mu: &Measure) -> f64 {
    match mu {
        Measure::Gaussian(g) => g.mean().norm_squared() + g.cov().trace(),
        Measure::Discrete(m) => (0..m.len()).map(|k| m.weights[k] * sq_norm(m.atom(k))).sum(),
    }
}

/// `∫(xᵀQx + b·x + c) dμ`, evaluated exactly.
pub fn quadratic_functional(mu: &Measure, q: &DMatrix<f64>, b: &DVector<f64>, c: f64) -> Result<f64> {
    let d = mu.dim();
    if q.nrows() != d || q.ncols() != d || b.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: if b.len() != d { b.len() } else { q.nrows() },
        });
    }
    let asym = linalg::max_asymmetry(q);
    if asym > linalg::SYMMETRY_TOL * (1.0 + q.amax()) {
        return Err(Error::NotSymmetric { max_asymmetry: asym });
    }
    Ok(match mu {
        Measure::Gaussian(g) => {
            let m = g.mean();
            (q * g.cov()).trace() + m.dot(&(q * m)) + b.dot(m) + c
        }
        Measure::Discrete(dm) => {
            let mut total = 0.0;
            for k in 0..dm.len() {
                let x = DVector::from_column_slice(dm.atom(k));
                total += dm.weights[k] * (x.dot(&(q * &x)) + b.dot(&x));
            }
            total + c
        }
    })
}

/// Uniform-weight empirical measure with `count` i.i.d. draws from `mu`.
pub fn sample(mu: &Measure, count: usize, seed: u64) -> Result<DiscreteMeasure> {
    if count == 0 {
        return Err(Error::Parameter("sample count must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = mu.dim();
    let mut atoms = Vec::with_capacity(count * d);
    match mu {
        Measure::Gaussian(g) => {
            let root = linalg::sqrt_psd(g.cov())?;
            let mut z = DVector::zeros(d);
            for _ in 0..count {
                for zi in z.iter_mut() {
                    *zi = rng.sample(StandardNormal);
                }
                let x = g.mean() + &root * &z;
                atoms.extend(x.iter());
            }
        }
        Measure::Discrete(m) => {
            let mut cdf = Vec::with_capacity(m.len());
            let mut acc = 0.0;
            for w in &m.weights {
                acc += w;
                cdf.push(acc);
            }
            for _ in 0..count {
                let u: f64 = rng.random::<f64>() * acc;
                let k = cdf.partition_point(|&c| c <= u).min(m.len() - 1);
                atoms.extend_from_slice(m.atom(k));
            }
        }
    }
    Ok(DiscreteMeasure::from_parts_unchecked(d, atoms, vec![1.0 / count as f64; count]))
}

/// Pushforward under `x ↦ Ax + v`.
pub fn push_affine(mu: &Measure, a: &DMatrix<f64>, v: &DVector<f64>) -> Result<Measure> {
    let d = mu.dim();
    if a.nrows() != d || a.ncols() != d || v.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: if v.len() != d { v.len() } else { a.nrows() },
        });
    }
    Ok(match mu {
        Measure::Gaussian(g) => {
            let cov = linalg::symmetrize(&(a * g.cov() * a.transpose()));
            Measure::Gaussian(GaussianMeasure::from_parts_unchecked(a * g.mean() + v, cov))
        }
        Measure::Discrete(m) => {
            let mut atoms = Vec::with_capacity(m.atoms.len());
            for k in 0..m.len() {
                let x = a * DVector::from_column_slice(m.atom(k)) + v;
                atoms.extend(x.iter());
            }
            Measure::Discrete(DiscreteMeasure::from_parts_unchecked(d, atoms, m.weights.clone()))
        }
    })
}

// JSON document form:
//   {"type":"gaussian","mean":[...],"cov":[[...]]}
//   {"type":"discrete","atoms":[[...]],"weights":[...]}
#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
enum MeasureDoc {
    Gaussian { mean: Vec<f64>, cov: Vec<Vec<f64>> },
    Discrete { atoms: Vec<Vec<f64>>, weights: Vec<f64> },
}

impl TryFrom<MeasureDoc> for Measure {
    type Error = Error;

    fn try_from(doc: MeasureDoc) -> Result<Self> {
        match doc {
            MeasureDoc::Gaussian { mean, cov } => {
                let d = mean.len();
                if cov.len() != d || cov.iter().any(|r| r.len() != d) {
                    return Err(Error::InvalidMeasure(format!("cov must be {d}×{d}")));
                }
                let cov = DMatrix::from_row_iterator(d, d, cov.into_iter().flatten());
                Ok(GaussianMeasure::new(DVector::from_vec(mean), cov)?.into())
            }
            MeasureDoc::Discrete { atoms, weights } => {
                if atoms.len() != weights.len() {
                    return Err(Error::InvalidMeasure(
                        "atoms and weights have different lengths".into(),
                    ));
                }
                Ok(DiscreteMeasure::from_rows(&atoms, weights)?.into())
            }
        }
    }
}

impl From<&Measure> for MeasureDoc {
    fn from(mu: &Measure) -> Self {
        match mu {
            Measure::Gaussian(g) => MeasureDoc::Gaussian {
                mean: g.mean().iter().copied().collect(),
                cov: g.cov().row_iter().map(|r| r.iter().copied().collect()).collect(),
            },
            Measure::Discrete(m) => MeasureDoc::Discrete {
                atoms: (0..m.len()).map(|k| m.atom(k).to_vec()).collect(),
                weights: m.weights.clone(),
            },
        }
    }
}

impl Serialize for Measure {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        MeasureDoc::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for Measure {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let doc = MeasureDoc::deserialize(d)?;
        Measure::try_from(doc).map_err(serde::de::Error::custom)
    }
}
