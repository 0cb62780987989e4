//! Builtin experiment configurations.

use crate::error::{Error, Result};

use super::config::{
    BaselineToggles, ExperimentConfig, FilterSpec, LinearModelSpec,
    MeasurementComponentSpec, ModelSpec, OffsetSpec, PriorComponentSpec, ProcessComponentSpec,
    SplitSpec,
};

pub const BUILTIN_EXPERIMENT_NAMES: &[&str] = &[
    "linear-ssm",
    "gmm-switching",
    "bimodal",
    "nonlinear-benchmark",
];

/// Builtin experiments by name.
///
/// - `linear-ssm`: a near-constant-velocity linear Gaussian model with a
///   known random velocity input. The mixture filter is deliberately
///   started from a wrong 25-component grid prior over (−10, 10)² and
///   compared against a Kalman filter with the correct prior; the grid
///   collapses to a single component within a few steps.
/// - `gmm-switching`: a stochastically switching system (two process
///   branches, 99%/1%) with a two-branch measurement offset of ±12.5
///   (10%/90%), N = 200.
/// - `bimodal`: linear dynamics observed through `y = x² + e`; the filtered
///   density is bi-modal. Runs the mixture filter with component splitting
///   against a bootstrap particle filter with density exports.
/// - `nonlinear-benchmark`: the univariate growth model with nonlinear
///   drift and quadratic measurement, splitting at both updates, compared
///   against a bootstrap particle filter.
pub fn builtin_experiment(name: &str) -> Result<ExperimentConfig> {
    match name {
        "linear-ssm" => Ok(linear_ssm()),
        "gmm-switching" => Ok(gmm_switching()),
        "bimodal" => Ok(bimodal()),
        "nonlinear-benchmark" => Ok(nonlinear_benchmark()),
        other => Err(Error::Config(format!(
            "unknown experiment {other:?}; known experiments: {}",
            BUILTIN_EXPERIMENT_NAMES.join(", ")
        ))),
    }
}

/// Evenly spaced grid prior over (−10, 10) in both state coordinates,
/// `side²` components with covariance `var · I`.
pub fn grid_prior_2d(side: usize, var: f64) -> Vec<PriorComponentSpec> {
    let positions: Vec<f64> = (0..side)
        .map(|i| -10.0 + i as f64 * 20.0 / (side - 1) as f64)
        .collect();
    let w = 1.0 / (side * side) as f64;
    let mut comps = Vec::with_capacity(side * side);
    for &x0 in &positions {
        for &x1 in &positions {
            comps.push(PriorComponentSpec {
                weight: w,
                mean: vec![x0, x1],
                cov: vec![var, 0.0, 0.0, var],
            });
        }
    }
    comps
}

fn linear_ssm() -> ExperimentConfig {
    ExperimentConfig {
        name: "linear-ssm".into(),
        steps: 100,
        seed: 1,
        model: ModelSpec {
            linear: Some(LinearModelSpec {
                state_dim: 2,
                measurement_dim: 1,
                prior: vec![PriorComponentSpec {
                    weight: 1.0,
                    mean: vec![0.0, 0.0],
                    cov: vec![1.0, 0.0, 0.0, 1.0],
                }],
                process: vec![ProcessComponentSpec {
                    weight: 1.0,
                    a: vec![1.0, 0.01, 0.0, 1.0],
                    offset: OffsetSpec {
                        signal: "gaussian-sequence".into(),
                        axis: 1,
                        std: 0.2, // N(0, 0.04) known input on the velocity
                        ..OffsetSpec::default()
                    },
                    q: vec![0.01, 0.0, 0.0, 0.01],
                }],
                measurement: vec![MeasurementComponentSpec {
                    weight: 1.0,
                    c: vec![1.0, 0.0],
                    offset: OffsetSpec::default(),
                    r: vec![0.1],
                }],
            }),
            ..ModelSpec::default()
        },
        // wide, heavily overlapping grid components: the wrong prior is a
        // broad blanket over (-10, 10)² that the reduction can fold into one
        // component within a few steps, as the study expects
        filter_prior: Some(grid_prior_2d(5, 400.0)),
        filter: FilterSpec::default(),
        baselines: BaselineToggles {
            kalman: true,
            smc: false,
            naive: true,
        },
        smc_particles: 10_000,
        grid: None,
        density_steps: vec![],
        measurements_csv: None,
        export_mixtures: false,
    }
}

fn gmm_switching() -> ExperimentConfig {
    let steps = 200usize;
    let input = OffsetSpec {
        signal: "sin".into(),
        axis: 0,
        amplitude: 1.0,
        // sin(4πt/N) baked for the builtin run length
        angular_frequency: 4.0 * std::f64::consts::PI / steps as f64,
        ..OffsetSpec::default()
    };
    ExperimentConfig {
        name: "gmm-switching".into(),
        steps,
        seed: 2,
        model: ModelSpec {
            linear: Some(LinearModelSpec {
                state_dim: 2,
                measurement_dim: 1,
                prior: vec![PriorComponentSpec {
                    weight: 1.0,
                    mean: vec![0.0, 0.0],
                    cov: vec![1.0, 0.0, 0.0, 1.0],
                }],
                process: vec![
                    ProcessComponentSpec {
                        weight: 0.99,
                        a: vec![1.0, 0.1, 0.0, 1.0],
                        offset: input.clone(),
                        q: vec![0.01, 0.0, 0.0, 0.01],
                    },
                    ProcessComponentSpec {
                        weight: 0.01,
                        a: vec![0.1, 0.01, 0.0, 0.1],
                        offset: input,
                        q: vec![9e-6, 0.0, 0.0, 9e-6],
                    },
                ],
                measurement: vec![
                    MeasurementComponentSpec {
                        weight: 0.1,
                        c: vec![1.0, 0.0],
                        offset: OffsetSpec {
                            signal: "constant".into(),
                            value: vec![12.5],
                            ..OffsetSpec::default()
                        },
                        r: vec![0.1],
                    },
                    MeasurementComponentSpec {
                        weight: 0.9,
                        c: vec![1.0, 0.0],
                        offset: OffsetSpec {
                            signal: "constant".into(),
                            value: vec![-12.5],
                            ..OffsetSpec::default()
                        },
                        r: vec![0.1],
                    },
                ],
            }),
            ..ModelSpec::default()
        },
        filter_prior: None,
        filter: FilterSpec::default(),
        baselines: BaselineToggles {
            kalman: true,
            smc: false,
            naive: true,
        },
        smc_particles: 10_000,
        grid: None,
        density_steps: vec![],
        measurements_csv: None,
        export_mixtures: false,
    }
}

fn bimodal() -> ExperimentConfig {
    ExperimentConfig {
        name: "bimodal".into(),
        steps: 100,
        seed: 3,
        model: ModelSpec {
            builtin: Some("quadratic-measurement".into()),
            ..ModelSpec::default()
        },
        filter_prior: None,
        filter: FilterSpec {
            filter_min: 1,
            filter_max: 35,
            filter_threshold: 0.001,
            prediction_min: 1,
            prediction_max: 35,
            prediction_threshold: 0.001,
            split: Some(SplitSpec {
                count: 3,
                spread: 0.5,
                sites: "measurement".into(),
            }),
        },
        baselines: BaselineToggles {
            kalman: false,
            smc: true,
            naive: false,
        },
        smc_particles: 100_000,
        // grid derived from the truth trajectory; the cosine input walks the
        // state far outside the prior's range
        grid: None,
        density_steps: vec![1, 30, 50, 60],
        measurements_csv: None,
        export_mixtures: false,
    }
}

fn nonlinear_benchmark() -> ExperimentConfig {
    ExperimentConfig {
        name: "nonlinear-benchmark".into(),
        steps: 100,
        seed: 4,
        model: ModelSpec {
            builtin: Some("ucm-benchmark".into()),
            ..ModelSpec::default()
        },
        filter_prior: None,
        filter: FilterSpec {
            filter_min: 1,
            filter_max: 50,
            filter_threshold: 0.005,
            prediction_min: 1,
            prediction_max: 50,
            prediction_threshold: 0.005,
            split: Some(SplitSpec {
                count: 3,
                spread: 0.5,
                sites: "both".into(),
            }),
        },
        baselines: BaselineToggles {
            kalman: false,
            smc: true,
            naive: false,
        },
        smc_particles: 10_000,
        grid: None,
        density_steps: vec![1, 5, 50, 80],
        measurements_csv: None,
        export_mixtures: false,
    }
}
