//! Experiment and model configuration files (TOML or JSON) and their
//! conversion into model and filter types.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::{FilterConfig, SplitSites};
use crate::linalg::UpperTriangular;
use crate::mixture::{GaussianComponent, GaussianMixture};
use crate::model::{
    nonlinear_by_name, GmmStateSpaceModel, MeasurementComponent, Model, OffsetSignal,
    ProcessComponent, SplitConfig,
};
use crate::reduction::ReductionConfig;

/// One experiment: a model, a run length, a seed, filter settings, and the
/// comparison methods to run next to the mixture filter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub steps: usize,
    pub seed: u64,
    pub model: ModelSpec,
    /// Replacement prior for the mixture filter (and its covariance-form
    /// twin) only; simulation and baselines keep the model prior. Used to
    /// study recovery from a deliberately wrong prior.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filter_prior: Option<Vec<PriorComponentSpec>>,
    #[serde(default)]
    pub filter: FilterSpec,
    #[serde(default)]
    pub baselines: BaselineToggles,
    #[serde(default = "default_smc_particles")]
    pub smc_particles: usize,
    /// Evaluation grid for density exports; derived from the truth
    /// trajectory when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    /// Steps at which density grids are exported (none by default).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub density_steps: Vec<usize>,
    /// Measurements loaded from a CSV (`t,y_0,...`) instead of simulated;
    /// truth-dependent metrics are skipped in that case.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measurements_csv: Option<PathBuf>,
    /// Also export the full per-step mixtures of the mixture-filter run as
    /// JSON (large).
    #[serde(default)]
    pub export_mixtures: bool,
}

fn default_smc_particles() -> usize {
    10_000
}

/// The model is exactly one of: a reference to a model file, a registered
/// builtin nonlinear model, or an inline linear mixture model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub builtin: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub linear: Option<LinearModelSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearModelSpec {
    pub state_dim: usize,
    pub measurement_dim: usize,
    pub prior: Vec<PriorComponentSpec>,
    pub process: Vec<ProcessComponentSpec>,
    pub measurement: Vec<MeasurementComponentSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorComponentSpec {
    pub weight: f64,
    pub mean: Vec<f64>,
    /// Covariance, row-major.
    pub cov: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProcessComponentSpec {
    pub weight: f64,
    /// State matrix, row-major.
    pub a: Vec<f64>,
    #[serde(default)]
    pub offset: OffsetSpec,
    /// Process noise covariance, row-major.
    pub q: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasurementComponentSpec {
    pub weight: f64,
    /// Measurement matrix, row-major (`measurement_dim × state_dim`).
    pub c: Vec<f64>,
    #[serde(default)]
    pub offset: OffsetSpec,
    /// Measurement noise covariance, row-major.
    pub r: Vec<f64>,
}

/// Named offset signals. `gaussian-sequence` is realized by the runner as
/// an i.i.d. `N(0, std²)` sequence on one axis, drawn from a seed-derived
/// generator, and handed to the simulation and all filters as a known
/// input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OffsetSpec {
    /// "none" | "sin" | "cos" | "constant" | "gaussian-sequence"
    pub signal: String,
    #[serde(default)]
    pub axis: usize,
    #[serde(default)]
    pub amplitude: f64,
    #[serde(default)]
    pub angular_frequency: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub value: Vec<f64>,
    #[serde(default)]
    pub std: f64,
}

impl Default for OffsetSpec {
    fn default() -> Self {
        Self {
            signal: "none".into(),
            axis: 0,
            amplitude: 0.0,
            angular_frequency: 0.0,
            value: Vec::new(),
            std: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterSpec {
    pub filter_min: usize,
    pub filter_max: usize,
    pub filter_threshold: f64,
    pub prediction_min: usize,
    pub prediction_max: usize,
    pub prediction_threshold: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<SplitSpec>,
}

impl Default for FilterSpec {
    fn default() -> Self {
        Self {
            filter_min: 1,
            filter_max: 100,
            filter_threshold: 0.01,
            prediction_min: 1,
            prediction_max: 100,
            prediction_threshold: 0.01,
            split: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    pub count: usize,
    pub spread: f64,
    /// "measurement" or "both"
    pub sites: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct BaselineToggles {
    #[serde(default)]
    pub kalman: bool,
    #[serde(default)]
    pub smc: bool,
    #[serde(default)]
    pub naive: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub min: f64,
    pub max: f64,
    #[serde(default = "default_grid_points")]
    pub points: usize,
}

fn default_grid_points() -> usize {
    400
}

impl ExperimentConfig {
    /// Parses a TOML or JSON experiment file (by extension, TOML default).
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let cfg: ExperimentConfig = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        } else {
            toml::from_str(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps < 1 {
            return Err(Error::Config("steps must be at least 1".into()));
        }
        let set = [
            self.model.file.is_some(),
            self.model.builtin.is_some(),
            self.model.linear.is_some(),
        ]
        .iter()
        .filter(|b| **b)
        .count();
        if set != 1 {
            return Err(Error::Config(
                "model must set exactly one of `file`, `builtin`, `linear`".into(),
            ));
        }
        if let Some(g) = &self.grid {
            if !(g.min.is_finite() && g.max.is_finite() && g.max > g.min) || g.points < 2 {
                return Err(Error::Config(format!(
                    "grid must have finite min < max and at least 2 points, got {g:?}"
                )));
            }
        }
        Ok(())
    }

    /// Builds the runnable model; sequence-valued offsets are realized for
    /// `steps` steps from a generator derived from `seed`.
    pub fn build_model(&self, steps: usize, seed: u64) -> Result<Model> {
        self.model.build(steps, seed)
    }

    pub fn filter_config(&self) -> Result<FilterConfig> {
        let s = &self.filter;
        let split = match &s.split {
            None => None,
            Some(sp) => Some(SplitConfig::new(sp.count, sp.spread)?),
        };
        let split_sites = match s.split.as_ref().map(|sp| sp.sites.as_str()) {
            None | Some("measurement") => SplitSites::MeasurementOnly,
            Some("both") => SplitSites::BothUpdates,
            Some(other) => {
                return Err(Error::Config(format!(
                    "filter.split.sites must be \"measurement\" or \"both\", got {other:?}"
                )))
            }
        };
        Ok(FilterConfig {
            filter_reduction: ReductionConfig::new(
                s.filter_min,
                s.filter_max,
                s.filter_threshold,
            )
            .map_err(|e| Error::Config(format!("filter reduction bounds: {e}")))?,
            prediction_reduction: ReductionConfig::new(
                s.prediction_min,
                s.prediction_max,
                s.prediction_threshold,
            )
            .map_err(|e| Error::Config(format!("prediction reduction bounds: {e}")))?,
            split,
            split_sites,
        })
    }

    /// The mixture prior the filter starts from: `filter_prior` when given,
    /// otherwise the model prior.
    pub fn filter_prior_mixture(&self, model: &Model) -> Result<Option<GaussianMixture>> {
        match &self.filter_prior {
            None => Ok(None),
            Some(specs) => {
                let n = model.state_dim();
                let comps = specs
                    .iter()
                    .enumerate()
                    .map(|(i, s)| prior_component(s, n, &format!("filter_prior[{i}]")))
                    .collect::<Result<Vec<_>>>()?;
                Ok(Some(GaussianMixture::new(comps)?.normalize_weights()?))
            }
        }
    }
}

impl ModelSpec {
    fn build(&self, steps: usize, seed: u64) -> Result<Model> {
        if let Some(path) = &self.file {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read model file {}: {e}", path.display())))?;
            let inner: ModelSpec = if path.extension().is_some_and(|e| e == "json") {
                serde_json::from_str(&text)
                    .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
            } else {
                toml::from_str(&text)
                    .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
            };
            if inner.file.is_some() {
                return Err(Error::Config(
                    "model files may not reference further files".into(),
                ));
            }
            return inner.build(steps, seed);
        }
        if let Some(name) = &self.builtin {
            return Ok(Model::Nonlinear(nonlinear_by_name(name)?));
        }
        let Some(linear) = &self.linear else {
            return Err(Error::Config(
                "model must set one of `file`, `builtin`, `linear`".into(),
            ));
        };
        linear.build(steps, seed).map(Model::Gmm)
    }
}

impl LinearModelSpec {
    fn build(&self, steps: usize, seed: u64) -> Result<GmmStateSpaceModel> {
        let n = self.state_dim;
        let p = self.measurement_dim;
        let prior = GaussianMixture::new(
            self.prior
                .iter()
                .enumerate()
                .map(|(i, s)| prior_component(s, n, &format!("prior[{i}]")))
                .collect::<Result<Vec<_>>>()?,
        )?;
        // one derived generator shared by all realized input sequences, so a
        // config + seed pair pins the inputs exactly
        let mut offset_rng = ChaCha12Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
        let process = self
            .process
            .iter()
            .enumerate()
            .map(|(j, s)| {
                Ok(ProcessComponent {
                    weight: s.weight,
                    a: matrix_from(&s.a, n, n, &format!("process[{j}].a"))?,
                    offset: s.offset.build(n, steps, &mut offset_rng, &format!("process[{j}].offset"))?,
                    q_sqrt: factor_from_cov(&s.q, n, &format!("process[{j}].q"))?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let measurement = self
            .measurement
            .iter()
            .enumerate()
            .map(|(k, s)| {
                Ok(MeasurementComponent {
                    weight: s.weight,
                    c: matrix_from(&s.c, p, n, &format!("measurement[{k}].c"))?,
                    offset: s.offset.build(p, steps, &mut offset_rng, &format!("measurement[{k}].offset"))?,
                    r_sqrt: factor_from_cov(&s.r, p, &format!("measurement[{k}].r"))?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        GmmStateSpaceModel::new(prior, process, measurement)
    }
}

impl OffsetSpec {
    fn build(
        &self,
        dim: usize,
        steps: usize,
        rng: &mut ChaCha12Rng,
        field: &str,
    ) -> Result<OffsetSignal> {
        if self.axis >= dim && self.signal != "none" && self.signal != "constant" {
            return Err(Error::Config(format!(
                "{field}: axis {} out of range for dimension {dim}",
                self.axis
            )));
        }
        match self.signal.as_str() {
            "none" => Ok(OffsetSignal::None),
            "sin" => Ok(OffsetSignal::Sin {
                axis: self.axis,
                amplitude: self.amplitude,
                angular_frequency: self.angular_frequency,
            }),
            "cos" => Ok(OffsetSignal::Cos {
                axis: self.axis,
                amplitude: self.amplitude,
                angular_frequency: self.angular_frequency,
            }),
            "constant" => {
                if self.value.len() != dim {
                    return Err(Error::Config(format!(
                        "{field}: constant offset has {} entries, expected {dim}",
                        self.value.len()
                    )));
                }
                Ok(OffsetSignal::Constant(DVector::from_row_slice(&self.value)))
            }
            "gaussian-sequence" => {
                if self.std < 0.0 || !self.std.is_finite() {
                    return Err(Error::Config(format!(
                        "{field}: gaussian-sequence std must be nonnegative, got {}",
                        self.std
                    )));
                }
                let mut seq = Vec::with_capacity(steps);
                for _ in 0..steps {
                    let mut v = DVector::zeros(dim);
                    let z: f64 = StandardNormal.sample(rng);
                    v[self.axis] = self.std * z;
                    seq.push(v);
                }
                Ok(OffsetSignal::Samples(Arc::new(seq)))
            }
            other => Err(Error::Config(format!(
                "{field}: unknown signal {other:?} (expected none, sin, cos, constant, gaussian-sequence)"
            ))),
        }
    }
}

fn prior_component(s: &PriorComponentSpec, n: usize, field: &str) -> Result<GaussianComponent> {
    if s.mean.len() != n {
        return Err(Error::Config(format!(
            "{field}: mean has {} entries, expected {n}",
            s.mean.len()
        )));
    }
    let factor = factor_from_cov(&s.cov, n, &format!("{field}.cov"))?;
    GaussianComponent::new(s.weight, DVector::from_row_slice(&s.mean), factor)
}

fn matrix_from(entries: &[f64], rows: usize, cols: usize, field: &str) -> Result<DMatrix<f64>> {
    if entries.len() != rows * cols {
        return Err(Error::Config(format!(
            "{field}: has {} entries, expected {rows}×{cols} = {}",
            entries.len(),
            rows * cols
        )));
    }
    Ok(DMatrix::from_row_slice(rows, cols, entries))
}

/// Square-root factor of a covariance given row-major. Zero matrices map to
/// the zero factor (for noise-free models), diagonal matrices are factored
/// directly, anything else goes through Cholesky.
pub fn factor_from_cov(entries: &[f64], dim: usize, field: &str) -> Result<UpperTriangular> {
    let m = matrix_from(entries, dim, dim, field)?;
    if m.iter().all(|x| *x == 0.0) {
        return Ok(UpperTriangular::zeros(dim));
    }
    let off_diag_zero = (0..dim).all(|i| (0..dim).all(|j| i == j || m[(i, j)] == 0.0));
    if off_diag_zero {
        let diag: Vec<f64> = (0..dim)
            .map(|i| {
                let d = m[(i, i)];
                if d < 0.0 {
                    Err(Error::Config(format!(
                        "{field}: diagonal entry {i} is negative ({d})"
                    )))
                } else {
                    Ok(d.sqrt())
                }
            })
            .collect::<Result<Vec<_>>>()?;
        return UpperTriangular::from_diagonal(&diag);
    }
    UpperTriangular::from_covariance(&m)
        .map_err(|e| Error::Config(format!("{field}: {e}")))
}
