//! The Gaussian mixture filter.
//!
//! Each step runs an exact mixture measurement update, a reduction of the
//! filtered mixture, an exact mixture time update, and a reduction of the
//! predicted mixture. Component counts grow multiplicatively through the
//! updates (`N_y`-fold and `N_x`-fold respectively); the reductions keep
//! them bounded. Nonlinear models are handled by re-linearizing about every
//! component mean before each update, optionally after splitting components
//! to keep the linearizations local.
//!
//! All covariance arithmetic happens on upper-triangular square-root
//! factors. The measurement update factors the stacked pre-array
//!
//! ```text
//! [ R^{1/2}        0       ]          [ R11  R12 ]
//! [ P^{1/2} Cᵀ   P^{1/2}   ]   = Q ·  [  0   R22 ]
//! ```
//!
//! whose triangular factor simultaneously yields the innovation factor
//! `R11`, the posterior factor `R22`, and the gain action `R12`. The time
//! update factors `[P^{1/2} Aᵀ; Q^{1/2}]`. The [`naive`] submodule carries
//! the same recursion in plain covariance form as an independent oracle;
//! the two must agree wherever the naive form does not break down.

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{qr_r_factor, solve_upper_transposed, UpperTriangular};
use crate::mixture::{log_sum_exp, GaussianComponent, GaussianMixture};
use crate::model::{
    linearize_measurement, linearize_process, split_mixture, MeasurementComponent, Model,
    ProcessComponent, SplitConfig,
};
use crate::reduction::{reduce, ReductionConfig};

const LN_2PI: f64 = 1.8378770664093453;

/// Where component splitting is applied inside a step, when enabled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitSites {
    /// Split the predicted mixture before the (linearized) measurement
    /// update only.
    MeasurementOnly,
    /// Split before the measurement update and again before the time
    /// update.
    BothUpdates,
}

/// Reduction bounds, thresholds, and splitting policy for a filter run.
#[derive(Debug, Clone)]
pub struct FilterConfig {
    /// Reduction applied to the filtered mixture (after the measurement
    /// update).
    pub filter_reduction: ReductionConfig,
    /// Reduction applied to the predicted mixture (after the time update).
    pub prediction_reduction: ReductionConfig,
    /// Component splitting for nonlinear runs; ignored for linear models.
    pub split: Option<SplitConfig>,
    pub split_sites: SplitSites,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            filter_reduction: ReductionConfig::new(1, 100, 0.01).unwrap(),
            prediction_reduction: ReductionConfig::new(1, 100, 0.01).unwrap(),
            split: None,
            split_sites: SplitSites::MeasurementOnly,
        }
    }
}

/// Per-step record of a filter run.
#[derive(Debug, Clone)]
pub struct StepRecord {
    /// 1-based step index.
    pub t: usize,
    /// Predicted component count before the prediction reduction (the prior
    /// count at `t = 1`).
    pub predicted_pre_count: usize,
    /// Predicted component count actually used by the measurement update.
    pub predicted_post_count: usize,
    /// Filtered component count straight out of the measurement update.
    pub filtered_pre_count: usize,
    /// Filtered component count after the filtering reduction.
    pub filtered_post_count: usize,
    /// Mean of `p(x_t | y_{1:t-1})`.
    pub predicted_mean: DVector<f64>,
    /// Mean of `p(x_t | y_{1:t})`.
    pub filtered_mean: DVector<f64>,
    /// Reduced predicted mixture `p(x_t | y_{1:t-1})`.
    pub predicted: GaussianMixture,
    /// Reduced filtered mixture `p(x_t | y_{1:t})`.
    pub filtered: GaussianMixture,
    /// `ln p(y_t | y_{1:t-1})`: log of the raw-weight sum of the
    /// measurement update.
    pub log_likelihood: f64,
    /// `p(y_t | y_{1:t-1})` in linear space.
    pub raw_weight_sum: f64,
    pub wall_time: Duration,
}

/// The whole history of a filter run.
#[derive(Debug, Clone, Default)]
pub struct FilterTrace {
    pub steps: Vec<StepRecord>,
}

impl FilterTrace {
    /// Total log-likelihood `ln p(y_{1:N})`.
    pub fn total_log_likelihood(&self) -> f64 {
        self.steps.iter().map(|s| s.log_likelihood).sum()
    }
}

/// Result of one mixture measurement update, before reduction.
#[derive(Debug, Clone)]
pub struct MeasurementUpdate {
    /// Posterior mixture with normalized weights, `N_pred · N_y`
    /// components ordered with the measurement index fastest.
    pub posterior: GaussianMixture,
    /// `ln Σ_s w̄_s = ln p(y_t | y_{1:t-1})`.
    pub log_likelihood: f64,
}

impl MeasurementUpdate {
    pub fn raw_weight_sum(&self) -> f64 {
        self.log_likelihood.exp()
    }
}

/// One (component, measurement-branch) update through the stacked QR.
/// Returns the posterior component parts and the log raw weight.
fn pair_update(
    comp: &GaussianComponent,
    y: &DVector<f64>,
    c: &DMatrix<f64>,
    v: &DVector<f64>,
    gamma: f64,
    r_sqrt: &UpperTriangular,
    component_index: usize,
) -> Result<(DVector<f64>, UpperTriangular, f64)> {
    let n = comp.dim();
    let p = y.len();

    let mut pre = DMatrix::zeros(p + n, p + n);
    pre.view_mut((0, 0), (p, p)).copy_from(r_sqrt.as_matrix());
    let p_sqrt = comp.cov_sqrt().as_matrix();
    pre.view_mut((p, 0), (n, p)).copy_from(&(p_sqrt * c.transpose()));
    pre.view_mut((p, p), (n, n)).copy_from(p_sqrt);

    let r_full = qr_r_factor(&pre)?;
    let r11 = UpperTriangular::new(r_full.as_matrix().view((0, 0), (p, p)).clone_owned())?;
    let r12 = r_full.as_matrix().view((0, p), (p, n)).clone_owned();
    let r22 = UpperTriangular::new(r_full.as_matrix().view((p, p), (n, n)).clone_owned())?;

    let innovation = y - c * comp.mean() - v;
    let whitened = solve_upper_transposed(&r11, &innovation).map_err(|e| {
        Error::SingularInnovation {
            component: component_index,
            source: Box::new(e),
        }
    })?;
    let mean = comp.mean() + r12.tr_mul(&whitened);

    // ln w̄ = ln w + ln γ − ½‖ẽ‖² − (p/2) ln 2π − Σ ln R11(i,i)
    let mut log_sigma = 0.0;
    for i in 0..p {
        log_sigma += r11.entry(i, i).abs().ln();
    }
    let log_raw = comp.weight().ln() + gamma.ln()
        - 0.5 * whitened.norm_squared()
        - 0.5 * p as f64 * LN_2PI
        - log_sigma;

    Ok((mean, r22, log_raw))
}

/// Exact mixture measurement update: every predicted component against
/// every measurement branch, `s = N_y(ℓ−1) + k` ordering, raw weights
/// normalized in log space.
pub fn measurement_update(
    pred: &GaussianMixture,
    y: &DVector<f64>,
    meas: &[MeasurementComponent],
    t: usize,
) -> Result<MeasurementUpdate> {
    if meas.is_empty() {
        return Err(Error::Argument("no measurement components".into()));
    }
    let p = meas[0].c.nrows();
    if y.len() != p {
        return Err(Error::Argument(format!(
            "measurement has dimension {}, model expects {p}",
            y.len()
        )));
    }
    let mut parts = Vec::with_capacity(pred.len() * meas.len());
    let mut log_raw = Vec::with_capacity(pred.len() * meas.len());
    for (l, comp) in pred.components().iter().enumerate() {
        for (k, mc) in meas.iter().enumerate() {
            let v = mc.offset.at(t, p);
            let s = l * meas.len() + k;
            let (mean, factor, lw) =
                pair_update(comp, y, &mc.c, &v, mc.weight, &mc.r_sqrt, s)?;
            parts.push((mean, factor));
            log_raw.push(lw);
        }
    }
    finish_measurement_update(parts, log_raw, t)
}

/// Measurement update for a nonlinear measurement map: the map is expanded
/// about each predicted component's mean, so every component sees its own
/// affine measurement model (one branch each, `N_y = 1`).
pub fn measurement_update_linearized(
    pred: &GaussianMixture,
    y: &DVector<f64>,
    nm: &crate::model::NonlinearModel,
    t: usize,
) -> Result<MeasurementUpdate> {
    let p = nm.measurement_dim();
    if y.len() != p {
        return Err(Error::Argument(format!(
            "measurement has dimension {}, model expects {p}",
            y.len()
        )));
    }
    let mut parts = Vec::with_capacity(pred.len());
    let mut log_raw = Vec::with_capacity(pred.len());
    for (l, comp) in pred.components().iter().enumerate() {
        let (c, v) = linearize_measurement(nm, comp.mean(), t)?;
        let (mean, factor, lw) = pair_update(comp, y, &c, &v, 1.0, &nm.r_sqrt, l)?;
        parts.push((mean, factor));
        log_raw.push(lw);
    }
    finish_measurement_update(parts, log_raw, t)
}

fn finish_measurement_update(
    parts: Vec<(DVector<f64>, UpperTriangular)>,
    log_raw: Vec<f64>,
    t: usize,
) -> Result<MeasurementUpdate> {
    let log_likelihood = log_sum_exp(&log_raw);
    if log_likelihood == f64::NEG_INFINITY {
        return Err(Error::ModelMismatch { step: t });
    }
    let comps = parts
        .into_iter()
        .zip(&log_raw)
        .map(|((mean, factor), lw)| {
            GaussianComponent::new((lw - log_likelihood).exp(), mean, factor)
        })
        .collect::<Result<Vec<_>>>()?;
    let posterior = GaussianMixture::new(comps)?.normalize_weights()?;
    Ok(MeasurementUpdate {
        posterior,
        log_likelihood,
    })
}

/// Exact mixture time update: every filtered component through every
/// process branch, `ℓ = N_x(s−1) + j` ordering, weights `w_s β_j`.
pub fn time_update(
    filt: &GaussianMixture,
    proc: &[ProcessComponent],
    t: usize,
) -> Result<GaussianMixture> {
    if proc.is_empty() {
        return Err(Error::Argument("no process components".into()));
    }
    let n = filt.dim();
    let mut comps = Vec::with_capacity(filt.len() * proc.len());
    for comp in filt.components() {
        for pc in proc {
            let u = pc.offset.at(t, n);
            comps.push(propagate_component(comp, &pc.a, &u, &pc.q_sqrt, pc.weight)?);
        }
    }
    GaussianMixture::new(comps)
}

/// Time update for a nonlinear process map, expanded about each filtered
/// component's mean (`N_x = 1`).
pub fn time_update_linearized(
    filt: &GaussianMixture,
    nm: &crate::model::NonlinearModel,
    t: usize,
) -> Result<GaussianMixture> {
    let mut comps = Vec::with_capacity(filt.len());
    for comp in filt.components() {
        let (a, u) = linearize_process(nm, comp.mean(), t)?;
        comps.push(propagate_component(comp, &a, &u, &nm.q_sqrt, 1.0)?);
    }
    GaussianMixture::new(comps)
}

fn propagate_component(
    comp: &GaussianComponent,
    a: &DMatrix<f64>,
    u: &DVector<f64>,
    q_sqrt: &UpperTriangular,
    beta: f64,
) -> Result<GaussianComponent> {
    let n = comp.dim();
    let mean = a * comp.mean() + u;
    let mut pre = DMatrix::zeros(2 * n, n);
    pre.view_mut((0, 0), (n, n))
        .copy_from(&(comp.cov_sqrt().as_matrix() * a.transpose()));
    pre.view_mut((n, 0), (n, n)).copy_from(q_sqrt.as_matrix());
    let factor = qr_r_factor(&pre)?;
    GaussianComponent::new(comp.weight() * beta, mean, factor)
}

/// Runs the full filter over a measurement sequence.
///
/// Per step: (optional split −) measurement update − filtering reduction −
/// (optional split −) time update − prediction reduction. The trace records
/// the reduced mixtures, their pre/post-reduction counts, and the per-step
/// likelihood increment.
pub fn run_filter(
    model: &Model,
    measurements: &[DVector<f64>],
    cfg: &FilterConfig,
) -> Result<FilterTrace> {
    if measurements.is_empty() {
        return Err(Error::Argument("measurement sequence is empty".into()));
    }
    let p = model.measurement_dim();
    if let Some(bad) = measurements.iter().find(|y| y.len() != p) {
        return Err(Error::Argument(format!(
            "measurement has dimension {}, model expects {p}",
            bad.len()
        )));
    }

    // splitting only applies to nonlinear runs; both policies split ahead of
    // the measurement update, and BothUpdates splits again ahead of the
    // time update
    let split_cfg: Option<&SplitConfig> = match (model, &cfg.split) {
        (Model::Nonlinear(_), Some(s)) => Some(s),
        _ => None,
    };

    let mut pred = model.prior().clone();
    let mut pred_pre_count = pred.len();
    let mut steps = Vec::with_capacity(measurements.len());

    for (idx, y) in measurements.iter().enumerate() {
        let t = idx + 1;
        let started = Instant::now();

        let predicted = pred.clone();
        let (predicted_mean, _) = predicted.moments();

        let pred_for_update = match split_cfg {
            Some(s) => split_mixture(&predicted, s).map_err(|e| attach(e, t))?,
            None => predicted.clone(),
        };

        let update = match model {
            Model::Gmm(m) => measurement_update(&pred_for_update, y, m.measurement(), t),
            Model::Nonlinear(m) => measurement_update_linearized(&pred_for_update, y, m, t),
        }
        .map_err(|e| attach(e, t))?;

        let filtered_pre_count = update.posterior.len();
        let filtered = reduce(&update.posterior, &cfg.filter_reduction)
            .map_err(|e| attach(e, t))?;
        let (filtered_mean, _) = filtered.moments();

        let filt_for_time = match (split_cfg, cfg.split_sites) {
            (Some(s), SplitSites::BothUpdates) => {
                split_mixture(&filtered, s).map_err(|e| attach(e, t))?
            }
            _ => filtered.clone(),
        };

        let predicted_next = match model {
            Model::Gmm(m) => time_update(&filt_for_time, m.process(), t),
            Model::Nonlinear(m) => time_update_linearized(&filt_for_time, m, t),
        }
        .map_err(|e| attach(e, t))?;
        let next_pre_count = predicted_next.len();
        let next_reduced = reduce(&predicted_next, &cfg.prediction_reduction)
            .map_err(|e| attach(e, t))?;

        steps.push(StepRecord {
            t,
            predicted_pre_count: pred_pre_count,
            predicted_post_count: predicted.len(),
            filtered_pre_count,
            filtered_post_count: filtered.len(),
            predicted_mean,
            filtered_mean,
            predicted,
            filtered,
            log_likelihood: update.log_likelihood,
            raw_weight_sum: update.raw_weight_sum(),
            wall_time: started.elapsed(),
        });

        pred = next_reduced;
        pred_pre_count = next_pre_count;
    }

    Ok(FilterTrace { steps })
}

fn attach(e: Error, t: usize) -> Error {
    match e {
        Error::ModelMismatch { .. } | Error::AtStep { .. } => e,
        other => other.at_step(t),
    }
}

pub mod naive {
    //! Covariance-form twin of the filter: plain textbook recursions with
    //! explicit symmetrization, LU-based determinants and solves, and the
    //! full-matrix reduction. Used to validate the square-root pipeline;
    //! non-positive-definite covariances are its expected failure mode.

    use std::time::{Duration, Instant};

    use nalgebra::{DMatrix, DVector};

    use super::{attach, FilterConfig, LN_2PI};
    use crate::error::{Error, Result};
    use crate::mixture::log_sum_exp;
    use crate::model::{
        linearize_measurement, linearize_process, MeasurementComponent, Model, ProcessComponent,
    };
    use crate::reduction::naive::{reduce_full, FullComponent};

    #[derive(Debug, Clone)]
    pub struct NaiveStepRecord {
        pub t: usize,
        pub predicted_pre_count: usize,
        pub predicted_post_count: usize,
        pub filtered_pre_count: usize,
        pub filtered_post_count: usize,
        pub predicted_mean: DVector<f64>,
        pub filtered_mean: DVector<f64>,
        pub predicted: Vec<FullComponent>,
        pub filtered: Vec<FullComponent>,
        pub log_likelihood: f64,
        pub raw_weight_sum: f64,
        pub wall_time: Duration,
    }

    #[derive(Debug, Clone, Default)]
    pub struct NaiveTrace {
        pub steps: Vec<NaiveStepRecord>,
    }

    fn mixture_mean(comps: &[FullComponent]) -> DVector<f64> {
        let mut mean = DVector::zeros(comps[0].mean.len());
        for c in comps {
            mean += c.weight * &c.mean;
        }
        mean
    }

    fn pair_update_full(
        comp: &FullComponent,
        y: &DVector<f64>,
        c: &DMatrix<f64>,
        v: &DVector<f64>,
        gamma: f64,
        r: &DMatrix<f64>,
    ) -> Result<(FullComponent, f64)> {
        let p = y.len();
        let sigma = c * &comp.cov * c.transpose() + r;
        let sigma = 0.5 * (&sigma + sigma.transpose());
        let det = sigma.determinant();
        if !det.is_finite() || det <= 0.0 {
            return Err(Error::CovarianceBreakdown(format!(
                "innovation covariance determinant is {det}"
            )));
        }
        let lu = sigma.clone().lu();
        let innovation = y - c * &comp.mean - v;
        let solved = lu.solve(&innovation).ok_or_else(|| {
            Error::CovarianceBreakdown("innovation covariance is not invertible".into())
        })?;
        let quad = innovation.dot(&solved);

        let gain_t = lu
            .solve(&(c * &comp.cov))
            .ok_or_else(|| Error::CovarianceBreakdown("gain solve failed".into()))?;
        let gain = gain_t.transpose();
        let mean = &comp.mean + &gain * &innovation;
        let cov = &comp.cov - &gain * sigma * gain.transpose();
        let cov = 0.5 * (&cov + cov.transpose());

        let log_raw = comp.weight.ln() + gamma.ln()
            - 0.5 * quad
            - 0.5 * p as f64 * LN_2PI
            - 0.5 * det.ln();
        Ok((
            FullComponent {
                weight: 0.0,
                mean,
                cov,
            },
            log_raw,
        ))
    }

    fn finish(parts: Vec<FullComponent>, log_raw: Vec<f64>, t: usize) -> Result<(Vec<FullComponent>, f64)> {
        let log_likelihood = log_sum_exp(&log_raw);
        if log_likelihood == f64::NEG_INFINITY {
            return Err(Error::ModelMismatch { step: t });
        }
        let mut comps = parts;
        let mut total = 0.0;
        for (c, lw) in comps.iter_mut().zip(&log_raw) {
            c.weight = (lw - log_likelihood).exp();
            total += c.weight;
        }
        for c in &mut comps {
            c.weight /= total;
        }
        Ok((comps, log_likelihood))
    }

    pub fn measurement_update_naive(
        pred: &[FullComponent],
        y: &DVector<f64>,
        meas: &[MeasurementComponent],
        t: usize,
    ) -> Result<(Vec<FullComponent>, f64)> {
        let p = y.len();
        let mut parts = Vec::with_capacity(pred.len() * meas.len());
        let mut log_raw = Vec::with_capacity(pred.len() * meas.len());
        for comp in pred {
            for mc in meas {
                let v = mc.offset.at(t, p);
                let r = mc.r_sqrt.to_covariance();
                let (out, lw) = pair_update_full(comp, y, &mc.c, &v, mc.weight, &r)?;
                parts.push(out);
                log_raw.push(lw);
            }
        }
        finish(parts, log_raw, t)
    }

    pub fn time_update_naive(
        filt: &[FullComponent],
        proc: &[ProcessComponent],
        t: usize,
    ) -> Result<Vec<FullComponent>> {
        let n = filt[0].mean.len();
        let mut out = Vec::with_capacity(filt.len() * proc.len());
        for comp in filt {
            for pc in proc {
                let u = pc.offset.at(t, n);
                let q = pc.q_sqrt.to_covariance();
                let cov = &pc.a * &comp.cov * pc.a.transpose() + q;
                out.push(FullComponent {
                    weight: comp.weight * pc.weight,
                    mean: &pc.a * &comp.mean + u,
                    cov: 0.5 * (&cov + cov.transpose()),
                });
            }
        }
        Ok(out)
    }

    /// The filter recursion propagated in full covariance form, with the
    /// same reduction schedule as [`super::run_filter`].
    pub fn run_filter_naive(
        model: &Model,
        measurements: &[DVector<f64>],
        cfg: &FilterConfig,
    ) -> Result<NaiveTrace> {
        if measurements.is_empty() {
            return Err(Error::Argument("measurement sequence is empty".into()));
        }
        let mut pred: Vec<FullComponent> = model
            .prior()
            .components()
            .iter()
            .map(|c| FullComponent {
                weight: c.weight(),
                mean: c.mean().clone(),
                cov: c.covariance(),
            })
            .collect();
        let mut pred_pre_count = pred.len();
        let mut steps = Vec::with_capacity(measurements.len());

        for (idx, y) in measurements.iter().enumerate() {
            let t = idx + 1;
            let started = Instant::now();
            let predicted = pred.clone();
            let predicted_mean = mixture_mean(&predicted);

            let (posterior, log_likelihood) = match model {
                Model::Gmm(m) => measurement_update_naive(&predicted, y, m.measurement(), t),
                Model::Nonlinear(m) => {
                    let mut parts = Vec::with_capacity(predicted.len());
                    let mut log_raw = Vec::with_capacity(predicted.len());
                    let r = m.r_sqrt.to_covariance();
                    for comp in &predicted {
                        let (c, v) = linearize_measurement(m, &comp.mean, t)?;
                        let (out, lw) = pair_update_full(comp, y, &c, &v, 1.0, &r)?;
                        parts.push(out);
                        log_raw.push(lw);
                    }
                    finish(parts, log_raw, t)
                }
            }
            .map_err(|e| attach(e, t))?;

            let filtered_pre_count = posterior.len();
            let filtered =
                reduce_full(&posterior, &cfg.filter_reduction).map_err(|e| attach(e, t))?;
            let filtered_mean = mixture_mean(&filtered);

            let predicted_next = match model {
                Model::Gmm(m) => time_update_naive(&filtered, m.process(), t),
                Model::Nonlinear(m) => {
                    let q = m.q_sqrt.to_covariance();
                    filtered
                        .iter()
                        .map(|comp| {
                            let (a, u) = linearize_process(m, &comp.mean, t)?;
                            let cov = &a * &comp.cov * a.transpose() + &q;
                            Ok(FullComponent {
                                weight: comp.weight,
                                mean: &a * &comp.mean + u,
                                cov: 0.5 * (&cov + cov.transpose()),
                            })
                        })
                        .collect::<Result<Vec<_>>>()
                }
            }
            .map_err(|e| attach(e, t))?;
            let next_pre_count = predicted_next.len();
            let next_reduced =
                reduce_full(&predicted_next, &cfg.prediction_reduction).map_err(|e| attach(e, t))?;

            steps.push(NaiveStepRecord {
                t,
                predicted_pre_count: pred_pre_count,
                predicted_post_count: predicted.len(),
                filtered_pre_count,
                filtered_post_count: filtered.len(),
                predicted_mean,
                filtered_mean,
                predicted,
                filtered,
                log_likelihood,
                raw_weight_sum: log_likelihood.exp(),
                wall_time: started.elapsed(),
            });

            pred = next_reduced;
            pred_pre_count = next_pre_count;
        }

        Ok(NaiveTrace { steps })
    }
}

pub use naive::{run_filter_naive, NaiveTrace};
