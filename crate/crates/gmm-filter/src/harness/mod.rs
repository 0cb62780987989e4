//! Experiment harness: builtin studies, end-to-end runs with artifact
//! export, mixture-file reduction, and metric computation.
//!
//! A run simulates (or loads) a measurement sequence, executes the enabled
//! methods, and writes plot-ready artifacts into the output directory:
//! `truth.csv`, one `trace_<method>.csv` per method, optional
//! `density_<method>_<kind>_step_<t>.csv` grids, `metrics.json`, and the
//! resolved configuration. Identical configuration and seed produce
//! byte-identical CSV artifacts.

pub mod config;
pub mod experiments;
pub mod export;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::{
    density_from_particles, kalman_filter_from_model, particle_filter, Grid1d, ParticleResult,
};
use crate::error::{Error, Result};
use crate::filter::{run_filter, run_filter_naive, FilterTrace, NaiveTrace};
use crate::mixture::{GaussianComponent, GaussianMixture};
use crate::model::{simulate, Model};
use crate::reduction::{reduce_with_report, ReductionConfig, ReductionReport};

pub use config::{
    BaselineToggles, ExperimentConfig, FilterSpec, GridSpec, LinearModelSpec,
    MeasurementComponentSpec, ModelSpec, OffsetSpec, PriorComponentSpec, ProcessComponentSpec,
    SplitSpec,
};
pub use experiments::{builtin_experiment, grid_prior_2d, BUILTIN_EXPERIMENT_NAMES};
pub use export::TraceRow;

/// Estimation methods a run can execute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Method {
    Gmmf,
    Kalman,
    Smc,
    Naive,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Gmmf => "gmmf",
            Method::Kalman => "kalman",
            Method::Smc => "smc",
            Method::Naive => "naive",
        }
    }

    pub fn parse_list(text: &str) -> Result<Vec<Method>> {
        text.split(',')
            .map(|m| match m.trim() {
                "gmmf" => Ok(Method::Gmmf),
                "kalman" => Ok(Method::Kalman),
                "smc" => Ok(Method::Smc),
                "naive" => Ok(Method::Naive),
                other => Err(Error::Config(format!(
                    "unknown method {other:?} (expected gmmf, kalman, smc, naive)"
                ))),
            })
            .collect()
    }
}

/// Command-line overrides applied on top of a configuration.
#[derive(Debug, Clone, Default)]
pub struct RunOverrides {
    pub seed: Option<u64>,
    pub steps: Option<usize>,
    pub out_dir: Option<PathBuf>,
    pub methods: Option<Vec<Method>>,
}

/// Per-method summary written into `metrics.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodMetrics {
    /// Root-mean-square Euclidean error of the predicted mean against the
    /// true state; absent when no truth is available.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rmse_predicted: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rmse_filtered: Option<f64>,
    pub components_max: usize,
    pub components_mean: f64,
    pub total_log_likelihood: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub runtime_seconds: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct MetricsReport {
    pub methods: BTreeMap<String, MethodMetrics>,
    pub density_files: Vec<String>,
}

/// Everything a run left on disk.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub out_dir: PathBuf,
    pub metrics: MetricsReport,
    pub trace_files: Vec<PathBuf>,
    /// The trace of the mixture-filter run, when it was executed.
    pub gmmf_trace: Option<FilterTrace>,
}

/// Resolves an experiment argument: a path to a TOML/JSON configuration, or
/// a builtin experiment name.
pub fn load_experiment(arg: &str) -> Result<ExperimentConfig> {
    let path = Path::new(arg);
    if path.exists() {
        ExperimentConfig::from_file(path)
    } else {
        builtin_experiment(arg)
    }
}

/// Runs one experiment end to end and writes its artifacts.
pub fn run_experiment(cfg: &ExperimentConfig, ov: &RunOverrides) -> Result<RunArtifacts> {
    cfg.validate()?;
    let seed = ov.seed.unwrap_or(cfg.seed);
    let steps = ov.steps.unwrap_or(cfg.steps);
    let out_dir = ov
        .out_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from("out").join(&cfg.name));
    std::fs::create_dir_all(&out_dir)?;

    let model = cfg.build_model(steps, seed)?;

    // data: simulate from the model, or load measurements
    let (truth, measurements) = match &cfg.measurements_csv {
        Some(path) => (None, export::read_measurements_csv(path)?),
        None => {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let sim = simulate(&model, steps, &mut rng)?;
            (Some(sim.states), sim.measurements)
        }
    };
    if let Some(states) = &truth {
        export::write_truth_csv(&out_dir.join("truth.csv"), states, &measurements)?;
    }

    let methods = ov.methods.clone().unwrap_or_else(|| {
        let mut ms = vec![Method::Gmmf];
        if cfg.baselines.kalman {
            ms.push(Method::Kalman);
        }
        if cfg.baselines.smc {
            ms.push(Method::Smc);
        }
        if cfg.baselines.naive {
            ms.push(Method::Naive);
        }
        ms
    });

    let filter_cfg = cfg.filter_config()?;
    let filter_model = match cfg.filter_prior_mixture(&model)? {
        Some(prior) => model.with_prior(prior)?,
        None => model.clone(),
    };

    let mut metrics = MetricsReport::default();
    let mut trace_files = Vec::new();
    let mut gmmf_trace = None;
    let mut smc_result: Option<ParticleResult> = None;

    for method in &methods {
        let started = Instant::now();
        let rows = match method {
            Method::Gmmf => {
                let trace = run_filter(&filter_model, &measurements, &filter_cfg)?;
                let rows = rows_from_trace(&trace, method.name());
                if cfg.export_mixtures {
                    write_step_mixtures(&out_dir.join("mixtures_gmmf.json"), &trace)?;
                }
                gmmf_trace = Some(trace);
                rows
            }
            Method::Naive => {
                let trace = run_filter_naive(&filter_model, &measurements, &filter_cfg)?;
                rows_from_naive_trace(&trace, method.name())
            }
            Method::Kalman => {
                let Model::Gmm(m) = &model else {
                    return Err(Error::Config(
                        "the kalman baseline needs a linear mixture model".into(),
                    ));
                };
                let r = kalman_filter_from_model(m, &measurements)?;
                rows_from_trace(&r.trace, method.name())
            }
            Method::Smc => {
                let mut rng = ChaCha12Rng::seed_from_u64(seed.wrapping_add(1));
                let r = particle_filter(
                    &model,
                    &measurements,
                    cfg.smc_particles,
                    &cfg.density_steps,
                    &mut rng,
                )?;
                let rows = rows_from_particles(&r, cfg.smc_particles, method.name());
                smc_result = Some(r);
                rows
            }
        };
        let runtime = started.elapsed().as_secs_f64();
        let path = out_dir.join(format!("trace_{}.csv", method.name()));
        export::write_trace_csv(&path, &rows)?;
        trace_files.push(path);
        metrics.methods.insert(
            method.name().to_string(),
            method_metrics(&rows, truth.as_deref(), Some(runtime)),
        );
    }

    // density grids
    if !cfg.density_steps.is_empty() {
        let grid = density_grid(cfg, truth.as_deref())?;
        let xs = grid.values();
        if let Some(trace) = &gmmf_trace {
            for &t in &cfg.density_steps {
                let Some(step) = trace.steps.get(t.wrapping_sub(1)) else {
                    continue;
                };
                for (kind, mixture) in [("pred", &step.predicted), ("filt", &step.filtered)] {
                    let d = marginal_density(mixture, 0, &xs)?;
                    let path = out_dir.join(format!("density_gmmf_{kind}_step_{t}.csv"));
                    export::write_density_csv(&path, &xs, &d)?;
                    metrics
                        .density_files
                        .push(path.file_name().unwrap().to_string_lossy().into_owned());
                }
            }
        }
        if let Some(pf) = &smc_result {
            for (t, cloud) in &pf.snapshots {
                let d = density_from_particles(cloud, 0, &grid)?;
                let path = out_dir.join(format!("density_smc_filt_step_{t}.csv"));
                export::write_density_csv(&path, &xs, &d)?;
                metrics
                    .density_files
                    .push(path.file_name().unwrap().to_string_lossy().into_owned());
            }
        }
    }

    let resolved = serde_json::to_string_pretty(cfg)?;
    std::fs::write(out_dir.join("config_resolved.json"), resolved)?;
    std::fs::write(
        out_dir.join("metrics.json"),
        serde_json::to_string_pretty(&metrics)?,
    )?;

    Ok(RunArtifacts {
        out_dir,
        metrics,
        trace_files,
        gmmf_trace,
    })
}

/// Density evaluation grid: configured, or the truth range of the first
/// coordinate padded by three of its standard deviations.
fn density_grid(cfg: &ExperimentConfig, truth: Option<&[DVector<f64>]>) -> Result<Grid1d> {
    if let Some(g) = &cfg.grid {
        return Grid1d::new(g.min, g.max, g.points);
    }
    let Some(states) = truth else {
        return Err(Error::Config(
            "density export needs either a grid or simulated truth".into(),
        ));
    };
    let xs: Vec<f64> = states.iter().map(|x| x[0]).collect();
    let (lo, hi) = xs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        });
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    let std = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / xs.len() as f64).sqrt();
    let pad = 3.0 * std.max(1e-3);
    Grid1d::new(lo - pad, hi + pad, 400)
}

/// Marginal density of one coordinate of a mixture on grid points. The
/// marginal of each component is the scalar Gaussian with the coordinate's
/// mean and the norm of the factor's column as standard deviation.
pub fn marginal_density(
    mixture: &GaussianMixture,
    coordinate: usize,
    xs: &[f64],
) -> Result<Vec<f64>> {
    marginal_density_smoothed(mixture, coordinate, xs, 0.0)
}

/// [`marginal_density`] convolved with a Gaussian kernel of the given
/// bandwidth (each component variance gains `bandwidth²`). Lets a mixture
/// density be compared against a kernel density estimate at matched
/// smoothing.
pub fn marginal_density_smoothed(
    mixture: &GaussianMixture,
    coordinate: usize,
    xs: &[f64],
    bandwidth: f64,
) -> Result<Vec<f64>> {
    let comps = mixture
        .components()
        .iter()
        .map(|c| {
            let var = c.cov_sqrt().as_matrix().column(coordinate).norm_squared();
            GaussianComponent::scalar(
                c.weight(),
                c.mean()[coordinate],
                (var + bandwidth * bandwidth).sqrt(),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let marginal = GaussianMixture::new(comps)?;
    xs.iter()
        .map(|&x| marginal.evaluate_pdf(&DVector::from_row_slice(&[x])))
        .collect()
}

pub fn rows_from_trace(trace: &FilterTrace, method: &str) -> Vec<TraceRow> {
    trace
        .steps
        .iter()
        .map(|s| TraceRow {
            method: method.to_string(),
            t: s.t,
            pred_count_pre: s.predicted_pre_count,
            pred_count_post: s.predicted_post_count,
            filt_count_pre: s.filtered_pre_count,
            filt_count_post: s.filtered_post_count,
            pred_mean: s.predicted_mean.iter().cloned().collect(),
            filt_mean: s.filtered_mean.iter().cloned().collect(),
            log_likelihood: s.log_likelihood,
        })
        .collect()
}

pub fn rows_from_naive_trace(trace: &NaiveTrace, method: &str) -> Vec<TraceRow> {
    trace
        .steps
        .iter()
        .map(|s| TraceRow {
            method: method.to_string(),
            t: s.t,
            pred_count_pre: s.predicted_pre_count,
            pred_count_post: s.predicted_post_count,
            filt_count_pre: s.filtered_pre_count,
            filt_count_post: s.filtered_post_count,
            pred_mean: s.predicted_mean.iter().cloned().collect(),
            filt_mean: s.filtered_mean.iter().cloned().collect(),
            log_likelihood: s.log_likelihood,
        })
        .collect()
}

pub fn rows_from_particles(r: &ParticleResult, n_particles: usize, method: &str) -> Vec<TraceRow> {
    (0..r.filtered_means.len())
        .map(|i| TraceRow {
            method: method.to_string(),
            t: i + 1,
            pred_count_pre: n_particles,
            pred_count_post: n_particles,
            filt_count_pre: n_particles,
            filt_count_post: n_particles,
            pred_mean: r.predicted_means[i].iter().cloned().collect(),
            filt_mean: r.filtered_means[i].iter().cloned().collect(),
            log_likelihood: r.log_likelihood[i],
        })
        .collect()
}

fn method_metrics(
    rows: &[TraceRow],
    truth: Option<&[DVector<f64>]>,
    runtime_seconds: Option<f64>,
) -> MethodMetrics {
    let (rmse_predicted, rmse_filtered) = match truth {
        Some(states) if states.len() == rows.len() => (
            Some(rmse(rows.iter().map(|r| r.pred_mean.as_slice()), states)),
            Some(rmse(rows.iter().map(|r| r.filt_mean.as_slice()), states)),
        ),
        _ => (None, None),
    };
    let counts: Vec<usize> = rows.iter().map(|r| r.filt_count_post).collect();
    MethodMetrics {
        rmse_predicted,
        rmse_filtered,
        components_max: counts.iter().copied().max().unwrap_or(0),
        components_mean: counts.iter().sum::<usize>() as f64 / counts.len().max(1) as f64,
        total_log_likelihood: rows.iter().map(|r| r.log_likelihood).sum(),
        runtime_seconds,
    }
}

fn rmse<'a>(estimates: impl Iterator<Item = &'a [f64]>, truth: &[DVector<f64>]) -> f64 {
    let mut sum = 0.0;
    let mut count = 0usize;
    for (est, x) in estimates.zip(truth) {
        sum += est
            .iter()
            .zip(x.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>();
        count += 1;
    }
    (sum / count as f64).sqrt()
}

fn write_step_mixtures(path: &Path, trace: &FilterTrace) -> Result<()> {
    #[derive(Serialize)]
    struct StepMixtures<'a> {
        t: usize,
        predicted: &'a GaussianMixture,
        filtered: &'a GaussianMixture,
    }
    let steps: Vec<StepMixtures> = trace
        .steps
        .iter()
        .map(|s| StepMixtures {
            t: s.t,
            predicted: &s.predicted,
            filtered: &s.filtered,
        })
        .collect();
    std::fs::write(path, serde_json::to_string(&steps)?)?;
    Ok(())
}

/// Reduces a JSON mixture file; weights are normalized before reduction.
pub fn reduce_mixture_file(
    input: &Path,
    output: &Path,
    min_components: usize,
    max_components: usize,
    threshold: f64,
) -> Result<ReductionReport> {
    let mixture = export::read_mixture_json(input)?.normalize_weights()?;
    let cfg = ReductionConfig::new(min_components, max_components, threshold)?;
    let (reduced, report) = reduce_with_report(&mixture, &cfg)?;
    export::write_mixture_json(output, &reduced)?;
    Ok(report)
}

/// Recomputes metrics from artifact files: a truth CSV and any number of
/// trace CSVs. Every trace must cover exactly the truth's steps.
pub fn compute_metrics(truth_path: &Path, trace_paths: &[PathBuf]) -> Result<MetricsReport> {
    let (states, _) = export::read_truth_csv(truth_path)?;
    let mut report = MetricsReport::default();
    for path in trace_paths {
        let rows = export::read_trace_csv(path)?;
        if rows.len() != states.len() {
            return Err(Error::Argument(format!(
                "{}: trace has {} steps, truth has {}",
                path.display(),
                rows.len(),
                states.len()
            )));
        }
        let method = rows
            .first()
            .map(|r| r.method.clone())
            .unwrap_or_else(|| "unknown".into());
        report
            .methods
            .insert(method, method_metrics(&rows, Some(&states), None));
    }
    Ok(report)
}
