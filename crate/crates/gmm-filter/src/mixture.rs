//! Gaussian mixture value types.
//!
//! A mixture is an ordered list of weighted Gaussian components whose
//! covariances are carried exclusively as upper-triangular square-root
//! factors. Full covariance matrices appear only as derived values (moments,
//! exports, test oracles). Mixtures are immutable after construction; every
//! operation returns a new value.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngExt};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{half_logdet_from_factor, solve_upper_transposed, UpperTriangular};

const LN_2PI: f64 = 1.8378770664093453; // ln(2π)

/// One weighted Gaussian with covariance `cov_sqrtᵀ · cov_sqrt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ComponentRepr", into = "ComponentRepr")]
pub struct GaussianComponent {
    weight: f64,
    mean: DVector<f64>,
    cov_sqrt: UpperTriangular,
}

impl GaussianComponent {
    pub fn new(weight: f64, mean: DVector<f64>, cov_sqrt: UpperTriangular) -> Result<Self> {
        if !weight.is_finite() || weight < 0.0 {
            return Err(Error::Argument(format!(
                "component weight must be finite and nonnegative, got {weight}"
            )));
        }
        if mean.iter().any(|x| !x.is_finite()) {
            return Err(Error::Argument("component mean contains non-finite entries".into()));
        }
        if cov_sqrt.dim() != mean.len() {
            return Err(Error::Argument(format!(
                "cov_sqrt dimension {} does not match mean dimension {}",
                cov_sqrt.dim(),
                mean.len()
            )));
        }
        Ok(Self {
            weight,
            mean,
            cov_sqrt,
        })
    }

    /// Scalar component helper: `N(mean, std²)` with the given weight.
    pub fn scalar(weight: f64, mean: f64, std: f64) -> Result<Self> {
        Self::new(
            weight,
            DVector::from_row_slice(&[mean]),
            UpperTriangular::from_diagonal(&[std])?,
        )
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov_sqrt(&self) -> &UpperTriangular {
        &self.cov_sqrt
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Full covariance `RᵀR` (derived value).
    pub fn covariance(&self) -> DMatrix<f64> {
        self.cov_sqrt.to_covariance()
    }

    pub fn with_weight(&self, weight: f64) -> Result<Self> {
        Self::new(weight, self.mean.clone(), self.cov_sqrt.clone())
    }

    /// Log density of this component (ignoring its weight) at `x`.
    pub fn log_density(&self, x: &DVector<f64>) -> Result<f64> {
        gaussian_log_density(&self.mean, &self.cov_sqrt, x)
    }
}

/// Log of `N(x; mean, RᵀR)` evaluated through the square-root factor:
/// one transposed triangular solve plus the factor's half log-determinant.
pub fn gaussian_log_density(
    mean: &DVector<f64>,
    cov_sqrt: &UpperTriangular,
    x: &DVector<f64>,
) -> Result<f64> {
    if x.len() != mean.len() {
        return Err(Error::Argument(format!(
            "density point has dimension {}, expected {}",
            x.len(),
            mean.len()
        )));
    }
    let d = mean.len() as f64;
    let z = solve_upper_transposed(cov_sqrt, &(x - mean))?;
    Ok(-0.5 * z.norm_squared() - 0.5 * d * LN_2PI - half_logdet_from_factor(cov_sqrt)?)
}

/// `log Σ exp(xᵢ)` with the usual max shift.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let sum: f64 = values.iter().map(|v| (v - max).exp()).sum();
    max + sum.ln()
}

/// A Gaussian mixture: at least one component, weights summing to one after
/// [`GaussianMixture::normalize_weights`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MixtureRepr", into = "MixtureRepr")]
pub struct GaussianMixture {
    components: Vec<GaussianComponent>,
}

impl GaussianMixture {
    pub fn new(components: Vec<GaussianComponent>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::Argument("mixture needs at least one component".into()));
        }
        let dim = components[0].dim();
        if let Some(c) = components.iter().find(|c| c.dim() != dim) {
            return Err(Error::Argument(format!(
                "mixture components disagree on dimension: {} vs {}",
                dim,
                c.dim()
            )));
        }
        Ok(Self { components })
    }

    pub fn components(&self) -> &[GaussianComponent] {
        &self.components
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.components[0].dim()
    }

    pub fn weight_sum(&self) -> f64 {
        self.components.iter().map(|c| c.weight).sum()
    }

    /// Rescales weights to sum to one; means and covariances are untouched.
    pub fn normalize_weights(&self) -> Result<Self> {
        let sum = self.weight_sum();
        if sum <= 0.0 {
            return Err(Error::DegenerateWeights(format!(
                "weight sum is {sum}; cannot normalize"
            )));
        }
        let components = self
            .components
            .iter()
            .map(|c| GaussianComponent {
                weight: c.weight / sum,
                mean: c.mean.clone(),
                cov_sqrt: c.cov_sqrt.clone(),
            })
            .collect();
        Ok(Self { components })
    }

    /// Mixture density at `x`, accumulated in log space per component.
    pub fn evaluate_pdf(&self, x: &DVector<f64>) -> Result<f64> {
        let mut logs = Vec::with_capacity(self.len());
        for c in &self.components {
            if c.weight == 0.0 {
                continue;
            }
            logs.push(c.weight.ln() + c.log_density(x)?);
        }
        Ok(log_sum_exp(&logs).exp())
    }

    /// Whole-mixture mean and covariance.
    ///
    /// Weights are used as given; for a normalized mixture this is the law of
    /// total expectation/variance:
    /// mean `= Σ wᵢ μᵢ`, covariance `= Σ wᵢ (Pᵢ + (μᵢ−m)(μᵢ−m)ᵀ)`.
    pub fn moments(&self) -> (DVector<f64>, DMatrix<f64>) {
        let n = self.dim();
        let mut mean = DVector::zeros(n);
        for c in &self.components {
            mean += c.weight * &c.mean;
        }
        let mut cov = DMatrix::zeros(n, n);
        for c in &self.components {
            let d = &c.mean - &mean;
            cov += c.weight * (c.covariance() + &d * d.transpose());
        }
        (mean, cov)
    }

    /// Draws `n` samples: categorical component choice by weight, then
    /// `mean + cov_sqrtᵀ z` with `z` standard normal. The caller owns and
    /// seeds the random source.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<DVector<f64>> {
        (0..n).map(|_| self.sample_one(rng)).collect()
    }

    pub fn sample_one<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let c = &self.components[self.pick_component(rng)];
        let z = DVector::from_fn(c.dim(), |_, _| StandardNormal.sample(rng));
        &c.mean + c.cov_sqrt.transpose_mul_vec(&z)
    }

    /// Categorical draw over component weights.
    pub fn pick_component<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let total = self.weight_sum();
        let u: f64 = rng.random::<f64>() * total;
        let mut acc = 0.0;
        for (i, c) in self.components.iter().enumerate() {
            acc += c.weight;
            if u < acc {
                return i;
            }
        }
        self.components.len() - 1
    }
}

// ---------------------------------------------------------------------------
// Serialization: {"components": [{"weight", "mean": [...],
// "cov_sqrt": row-major upper-triangular [...]}]}
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize, Clone)]
struct ComponentRepr {
    weight: f64,
    mean: Vec<f64>,
    cov_sqrt: Vec<f64>,
}

impl From<GaussianComponent> for ComponentRepr {
    fn from(c: GaussianComponent) -> Self {
        let n = c.dim();
        let mut cov_sqrt = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                cov_sqrt.push(c.cov_sqrt.entry(i, j));
            }
        }
        Self {
            weight: c.weight,
            mean: c.mean.iter().cloned().collect(),
            cov_sqrt,
        }
    }
}

impl TryFrom<ComponentRepr> for GaussianComponent {
    type Error = Error;

    fn try_from(r: ComponentRepr) -> Result<Self> {
        let n = r.mean.len();
        if r.cov_sqrt.len() != n * n {
            return Err(Error::Argument(format!(
                "cov_sqrt has {} entries, expected {} for a {n}-dimensional mean",
                r.cov_sqrt.len(),
                n * n
            )));
        }
        let factor = UpperTriangular::new(DMatrix::from_row_slice(n, n, &r.cov_sqrt))?;
        GaussianComponent::new(r.weight, DVector::from_vec(r.mean), factor)
    }
}

#[derive(Serialize, Deserialize, Clone)]
struct MixtureRepr {
    components: Vec<ComponentRepr>,
}

impl From<GaussianMixture> for MixtureRepr {
    fn from(m: GaussianMixture) -> Self {
        Self {
            components: m.components.into_iter().map(Into::into).collect(),
        }
    }
}

impl TryFrom<MixtureRepr> for GaussianMixture {
    type Error = Error;

    fn try_from(r: MixtureRepr) -> Result<Self> {
        let components = r
            .components
            .into_iter()
            .enumerate()
            .map(|(i, c)| {
                GaussianComponent::try_from(c)
                    .map_err(|e| Error::Argument(format!("component {i}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        GaussianMixture::new(components)
    }
}
