//! Reference estimators: a (square-root) Kalman filter and a bootstrap
//! particle filter, plus kernel density estimation over weighted particle
//! clouds for density comparisons.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngExt};

use crate::error::{Error, Result};
use crate::filter::{run_filter, FilterConfig, FilterTrace};
use crate::linalg::UpperTriangular;
use crate::mixture::{gaussian_log_density, log_sum_exp, GaussianComponent, GaussianMixture};
use crate::model::{
    pick_index, GmmStateSpaceModel, MeasurementComponent, Model, OffsetSignal, ProcessComponent,
};
use crate::reduction::ReductionConfig;

// ---------------------------------------------------------------------------
// Kalman filter
// ---------------------------------------------------------------------------

/// Per-step output of the Kalman baseline.
#[derive(Debug, Clone)]
pub struct KalmanResult {
    pub predicted_means: Vec<DVector<f64>>,
    pub predicted_covs: Vec<DMatrix<f64>>,
    pub filtered_means: Vec<DVector<f64>>,
    pub filtered_covs: Vec<DMatrix<f64>>,
    /// The prediction for the first step, i.e. the prior; this is all there
    /// is when the measurement sequence is empty.
    pub prior_predicted: (DVector<f64>, DMatrix<f64>),
    /// Underlying single-component filter trace (empty for an empty
    /// measurement sequence).
    pub trace: FilterTrace,
}

/// Standard Kalman recursion in square-root form. This is the mixture
/// filter run on a single-component model; with one prior, process, and
/// measurement component the reductions are no-ops and the recursion is
/// exactly the Kalman filter.
#[allow(clippy::too_many_arguments)]
pub fn kalman_filter(
    a: DMatrix<f64>,
    u: OffsetSignal,
    q_sqrt: UpperTriangular,
    c: DMatrix<f64>,
    v: OffsetSignal,
    r_sqrt: UpperTriangular,
    prior_mean: DVector<f64>,
    prior_cov_sqrt: UpperTriangular,
    measurements: &[DVector<f64>],
) -> Result<KalmanResult> {
    let prior_cov = prior_cov_sqrt.to_covariance();
    let prior = GaussianMixture::new(vec![GaussianComponent::new(
        1.0,
        prior_mean.clone(),
        prior_cov_sqrt,
    )?])?;
    let model = Model::Gmm(GmmStateSpaceModel::new(
        prior,
        vec![ProcessComponent {
            weight: 1.0,
            a,
            offset: u,
            q_sqrt,
        }],
        vec![MeasurementComponent {
            weight: 1.0,
            c,
            offset: v,
            r_sqrt,
        }],
    )?);
    if measurements.is_empty() {
        return Ok(KalmanResult {
            predicted_means: vec![],
            predicted_covs: vec![],
            filtered_means: vec![],
            filtered_covs: vec![],
            prior_predicted: (prior_mean, prior_cov),
            trace: FilterTrace::default(),
        });
    }
    let cfg = FilterConfig {
        filter_reduction: ReductionConfig::new(1, 1, 1e-9)?,
        prediction_reduction: ReductionConfig::new(1, 1, 1e-9)?,
        split: None,
        split_sites: crate::filter::SplitSites::MeasurementOnly,
    };
    let trace = run_filter(&model, measurements, &cfg)?;
    Ok(kalman_result_from_trace(trace, (prior_mean, prior_cov)))
}

fn kalman_result_from_trace(
    trace: FilterTrace,
    prior_predicted: (DVector<f64>, DMatrix<f64>),
) -> KalmanResult {
    let mut r = KalmanResult {
        predicted_means: Vec::with_capacity(trace.steps.len()),
        predicted_covs: Vec::with_capacity(trace.steps.len()),
        filtered_means: Vec::with_capacity(trace.steps.len()),
        filtered_covs: Vec::with_capacity(trace.steps.len()),
        prior_predicted,
        trace: FilterTrace::default(),
    };
    for step in &trace.steps {
        r.predicted_means.push(step.predicted_mean.clone());
        r.predicted_covs.push(step.predicted.components()[0].covariance());
        r.filtered_means.push(step.filtered_mean.clone());
        r.filtered_covs.push(step.filtered.components()[0].covariance());
    }
    r.trace = trace;
    r
}

/// Kalman baseline for a mixture model: runs on the most likely process and
/// measurement branches (largest weights) with the moment-matched prior.
/// For a single-component model this is exactly the model itself.
pub fn kalman_filter_from_model(
    model: &GmmStateSpaceModel,
    measurements: &[DVector<f64>],
) -> Result<KalmanResult> {
    let argmax = |it: &mut dyn Iterator<Item = (usize, f64)>| -> usize {
        it.fold((0, f64::NEG_INFINITY), |(bi, bw), (i, w)| {
            if w > bw {
                (i, w)
            } else {
                (bi, bw)
            }
        })
        .0
    };
    let j = argmax(&mut model.process().iter().map(|c| c.weight).enumerate());
    let k = argmax(&mut model.measurement().iter().map(|c| c.weight).enumerate());
    let pc = &model.process()[j];
    let mc = &model.measurement()[k];
    let (prior_mean, prior_cov) = model.prior().moments();
    let prior_cov_sqrt = UpperTriangular::from_covariance(&prior_cov)?;
    kalman_filter(
        pc.a.clone(),
        pc.offset.clone(),
        pc.q_sqrt.clone(),
        mc.c.clone(),
        mc.offset.clone(),
        mc.r_sqrt.clone(),
        prior_mean,
        prior_cov_sqrt,
        measurements,
    )
}

// ---------------------------------------------------------------------------
// Bootstrap particle filter
// ---------------------------------------------------------------------------

/// A weighted particle set with its effective sample size.
#[derive(Debug, Clone)]
pub struct ParticleCloud {
    pub particles: Vec<DVector<f64>>,
    pub weights: Vec<f64>,
    pub ess: f64,
}

#[derive(Debug, Clone, Default)]
pub struct ParticleResult {
    pub predicted_means: Vec<DVector<f64>>,
    pub filtered_means: Vec<DVector<f64>>,
    pub ess: Vec<f64>,
    /// Per-step estimate of `ln p(y_t | y_{1:t-1})`.
    pub log_likelihood: Vec<f64>,
    /// Filtered clouds (post weight update, pre resampling) at the requested
    /// steps.
    pub snapshots: Vec<(usize, ParticleCloud)>,
}

/// Bootstrap filter: particles are propagated through the process model
/// (sampling a mixture branch per particle), weighted by the full
/// measurement-mixture likelihood, and systematically resampled whenever
/// the effective sample size falls below half the particle count.
pub fn particle_filter<R: Rng + ?Sized>(
    model: &Model,
    measurements: &[DVector<f64>],
    n_particles: usize,
    snapshot_steps: &[usize],
    rng: &mut R,
) -> Result<ParticleResult> {
    if n_particles < 2 {
        return Err(Error::Argument("need at least 2 particles".into()));
    }
    if measurements.is_empty() {
        return Err(Error::Argument("measurement sequence is empty".into()));
    }
    let n = model.state_dim();
    let uniform = 1.0 / n_particles as f64;

    let mut particles: Vec<DVector<f64>> = Vec::new();
    let mut log_weights = vec![0.0_f64; n_particles];
    let mut weights = vec![uniform; n_particles];
    let mut out = ParticleResult::default();

    for (idx, y) in measurements.iter().enumerate() {
        let t = idx + 1;

        // propagate (draw from the prior at t = 1)
        if t == 1 {
            particles = model.prior().sample(rng, n_particles);
        } else {
            for x in particles.iter_mut() {
                *x = match model {
                    Model::Gmm(m) => {
                        let j = pick_index(rng, m.process().iter().map(|c| c.weight));
                        let pc = &m.process()[j];
                        let noise = sample_noise(rng, &pc.q_sqrt);
                        &pc.a * &*x + pc.offset.at(t - 1, n) + noise
                    }
                    Model::Nonlinear(m) => {
                        let noise = sample_noise(rng, &m.q_sqrt);
                        m.f(x, t - 1) + noise
                    }
                };
            }
        }
        out.predicted_means.push(weighted_mean(&particles, &weights));

        // weight by the measurement likelihood
        for (x, lw) in particles.iter().zip(log_weights.iter_mut()) {
            *lw += measurement_log_likelihood(model, x, y, t)?;
        }
        let lse = log_sum_exp(&log_weights);
        if lse == f64::NEG_INFINITY {
            return Err(Error::ParticleDegeneracy { step: t });
        }
        // incoming weights are normalized, so this is the likelihood increment
        out.log_likelihood.push(lse);
        for (w, lw) in weights.iter_mut().zip(log_weights.iter_mut()) {
            *lw -= lse;
            *w = lw.exp();
        }
        let ess = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();
        out.ess.push(ess);
        out.filtered_means.push(weighted_mean(&particles, &weights));

        if snapshot_steps.contains(&t) {
            out.snapshots.push((
                t,
                ParticleCloud {
                    particles: particles.clone(),
                    weights: weights.clone(),
                    ess,
                },
            ));
        }

        if ess < n_particles as f64 / 2.0 {
            particles = systematic_resample(&particles, &weights, rng)?;
            weights.fill(uniform);
            log_weights.fill(uniform.ln());
        }
    }
    Ok(out)
}

fn sample_noise<R: Rng + ?Sized>(rng: &mut R, factor: &UpperTriangular) -> DVector<f64> {
    use rand_distr::{Distribution, StandardNormal};
    let z = DVector::from_fn(factor.dim(), |_, _| StandardNormal.sample(rng));
    factor.transpose_mul_vec(&z)
}

fn weighted_mean(particles: &[DVector<f64>], weights: &[f64]) -> DVector<f64> {
    let mut mean = DVector::zeros(particles[0].len());
    for (x, w) in particles.iter().zip(weights) {
        mean += *w * x;
    }
    mean
}

/// `ln p(y_t | x)` under the model's measurement mixture.
fn measurement_log_likelihood(
    model: &Model,
    x: &DVector<f64>,
    y: &DVector<f64>,
    t: usize,
) -> Result<f64> {
    match model {
        Model::Gmm(m) => {
            let p = m.measurement_dim();
            let mut logs = Vec::with_capacity(m.measurement().len());
            for mc in m.measurement() {
                if mc.weight == 0.0 {
                    continue;
                }
                let mean = &mc.c * x + mc.offset.at(t, p);
                logs.push(mc.weight.ln() + gaussian_log_density(&mean, &mc.r_sqrt, y)?);
            }
            Ok(log_sum_exp(&logs))
        }
        Model::Nonlinear(m) => {
            let mean = m.h(x, t);
            gaussian_log_density(&mean, &m.r_sqrt, y)
        }
    }
}

/// Systematic resampling: one uniform offset, `n` evenly spaced selection
/// points against the weight cumsum. Returns the resampled particles; the
/// caller resets weights to uniform.
pub fn systematic_resample<R: Rng + ?Sized>(
    particles: &[DVector<f64>],
    weights: &[f64],
    rng: &mut R,
) -> Result<Vec<DVector<f64>>> {
    let n = particles.len();
    if n == 0 || weights.len() != n {
        return Err(Error::Argument("resampling needs a nonempty, aligned cloud".into()));
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::DegenerateWeights(format!(
            "resampling weight sum is {total}"
        )));
    }
    let step = total / n as f64;
    let start: f64 = rng.random::<f64>() * step;
    let mut resampled = Vec::with_capacity(n);
    let mut cum = weights[0];
    let mut i = 0;
    for k in 0..n {
        let u = start + k as f64 * step;
        while u >= cum && i + 1 < n {
            i += 1;
            cum += weights[i];
        }
        resampled.push(particles[i].clone());
    }
    Ok(resampled)
}

// ---------------------------------------------------------------------------
// Kernel density estimation
// ---------------------------------------------------------------------------

/// A regular 1-D evaluation grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid1d {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl Grid1d {
    pub fn new(min: f64, max: f64, points: usize) -> Result<Self> {
        if !(min.is_finite() && max.is_finite() && max > min) || points < 2 {
            return Err(Error::Argument(format!(
                "grid needs finite min < max and at least 2 points, got [{min}, {max}] with {points}"
            )));
        }
        Ok(Self { min, max, points })
    }

    pub fn step(&self) -> f64 {
        (self.max - self.min) / (self.points - 1) as f64
    }

    pub fn values(&self) -> Vec<f64> {
        let h = self.step();
        (0..self.points).map(|i| self.min + i as f64 * h).collect()
    }
}

/// Silverman's-rule bandwidth for a weighted sample of one coordinate:
/// `σ_w (4 / 3 n_eff)^{1/5}` with `n_eff = 1/Σw̃²`. Falls back to
/// `fallback_scale / 100` for zero-variance clouds.
pub fn silverman_bandwidth(
    cloud: &ParticleCloud,
    coordinate: usize,
    fallback_scale: f64,
) -> Result<f64> {
    if cloud.particles.is_empty() {
        return Err(Error::Argument("empty particle cloud".into()));
    }
    if coordinate >= cloud.particles[0].len() {
        return Err(Error::Argument(format!(
            "coordinate {coordinate} out of range for dimension {}",
            cloud.particles[0].len()
        )));
    }
    let total: f64 = cloud.weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::DegenerateWeights("cloud weight sum is zero".into()));
    }
    let xs: Vec<f64> = cloud.particles.iter().map(|p| p[coordinate]).collect();
    let ws: Vec<f64> = cloud.weights.iter().map(|w| w / total).collect();
    let mean: f64 = xs.iter().zip(&ws).map(|(x, w)| x * w).sum();
    let var: f64 = xs.iter().zip(&ws).map(|(x, w)| w * (x - mean).powi(2)).sum();
    let n_eff = 1.0 / ws.iter().map(|w| w * w).sum::<f64>();
    let sigma = var.sqrt();
    Ok(if sigma > 0.0 {
        sigma * (4.0 / (3.0 * n_eff)).powf(0.2)
    } else {
        fallback_scale / 100.0
    })
}

/// Weighted Gaussian kernel density of one state coordinate on a grid,
/// bandwidth by Silverman's rule on the weighted samples. Integrates to
/// roughly one when the cloud is interior to the grid.
pub fn density_from_particles(
    cloud: &ParticleCloud,
    coordinate: usize,
    grid: &Grid1d,
) -> Result<Vec<f64>> {
    let bandwidth = silverman_bandwidth(cloud, coordinate, grid.max - grid.min)?;
    let total: f64 = cloud.weights.iter().sum();
    let xs: Vec<f64> = cloud.particles.iter().map(|p| p[coordinate]).collect();
    let ws: Vec<f64> = cloud.weights.iter().map(|w| w / total).collect();

    let norm = 1.0 / (bandwidth * (2.0 * std::f64::consts::PI).sqrt());
    Ok(grid
        .values()
        .iter()
        .map(|&g| {
            xs.iter()
                .zip(&ws)
                .map(|(&x, &w)| {
                    let z = (g - x) / bandwidth;
                    w * norm * (-0.5 * z * z).exp()
                })
                .sum()
        })
        .collect())
}

/// Two-dimensional weighted KDE with a product Gaussian kernel and per-axis
/// Silverman bandwidths. Returned row-major: `out[i][j]` is the density at
/// `(gx[i], gy[j])`.
pub fn density_from_particles_2d(
    cloud: &ParticleCloud,
    coordinates: (usize, usize),
    gx: &Grid1d,
    gy: &Grid1d,
) -> Result<Vec<Vec<f64>>> {
    if cloud.particles.is_empty() {
        return Err(Error::Argument("empty particle cloud".into()));
    }
    let dim = cloud.particles[0].len();
    if coordinates.0 >= dim || coordinates.1 >= dim {
        return Err(Error::Argument(format!(
            "coordinates {coordinates:?} out of range for dimension {dim}"
        )));
    }
    let total: f64 = cloud.weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::DegenerateWeights("cloud weight sum is zero".into()));
    }
    let ws: Vec<f64> = cloud.weights.iter().map(|w| w / total).collect();
    let n_eff = 1.0 / ws.iter().map(|w| w * w).sum::<f64>();

    let axis = |coord: usize, grid: &Grid1d| -> (Vec<f64>, f64) {
        let xs: Vec<f64> = cloud.particles.iter().map(|p| p[coord]).collect();
        let mean: f64 = xs.iter().zip(&ws).map(|(x, w)| x * w).sum();
        let var: f64 = xs.iter().zip(&ws).map(|(x, w)| w * (x - mean).powi(2)).sum();
        let sigma = var.sqrt();
        let h = if sigma > 0.0 {
            sigma * n_eff.powf(-1.0 / 6.0)
        } else {
            (grid.max - grid.min) / 100.0
        };
        (xs, h)
    };
    let (xs, hx) = axis(coordinates.0, gx);
    let (ys, hy) = axis(coordinates.1, gy);

    let norm = 1.0 / (2.0 * std::f64::consts::PI * hx * hy);
    let gxv = gx.values();
    let gyv = gy.values();
    let mut out = vec![vec![0.0; gyv.len()]; gxv.len()];
    for (k, w) in ws.iter().enumerate() {
        for (i, &gxi) in gxv.iter().enumerate() {
            let zx = (gxi - xs[k]) / hx;
            let ex = (-0.5 * zx * zx).exp();
            if ex == 0.0 {
                continue;
            }
            for (j, &gyj) in gyv.iter().enumerate() {
                let zy = (gyj - ys[k]) / hy;
                out[i][j] += w * norm * ex * (-0.5 * zy * zy).exp();
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::simulate;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn scalar_model(
        a: f64,
        q_std: f64,
        c: f64,
        r_std: f64,
        prior_mean: f64,
        prior_std: f64,
    ) -> Model {
        Model::Gmm(
            GmmStateSpaceModel::new(
                GaussianMixture::new(vec![
                    GaussianComponent::scalar(1.0, prior_mean, prior_std).unwrap(),
                ])
                .unwrap(),
                vec![ProcessComponent {
                    weight: 1.0,
                    a: DMatrix::from_row_slice(1, 1, &[a]),
                    offset: OffsetSignal::None,
                    q_sqrt: UpperTriangular::from_diagonal(&[q_std]).unwrap(),
                }],
                vec![MeasurementComponent {
                    weight: 1.0,
                    c: DMatrix::from_row_slice(1, 1, &[c]),
                    offset: OffsetSignal::None,
                    r_sqrt: UpperTriangular::from_diagonal(&[r_std]).unwrap(),
                }],
            )
            .unwrap(),
        )
    }

    #[test]
    fn static_state_posterior_variance_is_conjugate() {
        // A = 1, Q = 0, C = 1, R = 1, unit prior: after k measurements the
        // posterior variance is 1/(k+1)
        let measurements: Vec<_> = (0..8).map(|i| DVector::from_row_slice(&[i as f64 * 0.1])).collect();
        let r = kalman_filter(
            DMatrix::identity(1, 1),
            OffsetSignal::None,
            UpperTriangular::zeros(1),
            DMatrix::identity(1, 1),
            OffsetSignal::None,
            UpperTriangular::identity(1),
            DVector::zeros(1),
            UpperTriangular::identity(1),
            &measurements,
        )
        .unwrap();
        for (k, cov) in r.filtered_covs.iter().enumerate() {
            let want = 1.0 / (k as f64 + 2.0);
            assert!((cov[(0, 0)] - want).abs() < 1e-10, "k = {k}");
        }
    }

    #[test]
    fn no_measurements_returns_the_prior() {
        let r = kalman_filter(
            DMatrix::identity(1, 1),
            OffsetSignal::None,
            UpperTriangular::identity(1),
            DMatrix::identity(1, 1),
            OffsetSignal::None,
            UpperTriangular::identity(1),
            DVector::from_row_slice(&[1.5]),
            UpperTriangular::from_diagonal(&[2.0]).unwrap(),
            &[],
        )
        .unwrap();
        assert!(r.predicted_means.is_empty());
        assert_eq!(r.prior_predicted.0[0], 1.5);
        assert_eq!(r.prior_predicted.1[(0, 0)], 4.0);
    }

    #[test]
    fn kalman_matches_mixture_filter_on_single_component_model() {
        let model = scalar_model(0.95, 0.2, 1.0, 0.4, 0.0, 1.0);
        let Model::Gmm(m) = &model else { unreachable!() };
        let mut rng = ChaCha12Rng::seed_from_u64(44);
        let sim = simulate(&model, 40, &mut rng).unwrap();
        let kalman = kalman_filter_from_model(m, &sim.measurements).unwrap();
        let trace = run_filter(&model, &sim.measurements, &FilterConfig::default()).unwrap();
        for (step, km) in trace.steps.iter().zip(&kalman.predicted_means) {
            assert!((step.predicted_mean[0] - km[0]).abs() < 1e-10);
        }
    }

    #[test]
    fn particle_filter_tracks_a_nearly_deterministic_system() {
        let model = scalar_model(1.0, 1e-3, 1.0, 0.05, 1.3, 0.5);
        let mut rng = ChaCha12Rng::seed_from_u64(50);
        let sim = simulate(&model, 10, &mut rng).unwrap();
        let pf = particle_filter(&model, &sim.measurements, 2000, &[], &mut rng).unwrap();
        for (mean, truth) in pf.filtered_means.iter().zip(&sim.states) {
            assert!((mean[0] - truth[0]).abs() < 0.1);
        }
    }

    #[test]
    fn particle_filter_agrees_with_kalman_on_linear_model() {
        let model = scalar_model(0.9, 0.3, 1.0, 0.5, 0.0, 1.0);
        let Model::Gmm(m) = &model else { unreachable!() };
        let mut rng = ChaCha12Rng::seed_from_u64(51);
        let sim = simulate(&model, 20, &mut rng).unwrap();
        let kalman = kalman_filter_from_model(m, &sim.measurements).unwrap();
        let n = 100_000;
        let pf = particle_filter(&model, &sim.measurements, n, &[], &mut rng).unwrap();
        for ((pf_mean, kf_mean), kf_cov) in pf
            .filtered_means
            .iter()
            .zip(&kalman.filtered_means)
            .zip(&kalman.filtered_covs)
        {
            // Monte-Carlo standard error of the posterior mean estimate
            let se = (kf_cov[(0, 0)] / n as f64).sqrt();
            assert!(
                (pf_mean[0] - kf_mean[0]).abs() < 4.0 * se,
                "pf {} vs kf {} (se {se})",
                pf_mean[0],
                kf_mean[0]
            );
        }
    }

    #[test]
    fn particle_filter_is_deterministic_for_fixed_seed() {
        let model = scalar_model(0.9, 0.3, 1.0, 0.5, 0.0, 1.0);
        let mut rng = ChaCha12Rng::seed_from_u64(52);
        let sim = simulate(&model, 15, &mut rng).unwrap();
        let a = particle_filter(
            &model,
            &sim.measurements,
            500,
            &[5, 10],
            &mut ChaCha12Rng::seed_from_u64(1000),
        )
        .unwrap();
        let b = particle_filter(
            &model,
            &sim.measurements,
            500,
            &[5, 10],
            &mut ChaCha12Rng::seed_from_u64(1000),
        )
        .unwrap();
        assert_eq!(a.filtered_means, b.filtered_means);
        assert_eq!(a.snapshots.len(), b.snapshots.len());
        for ((ta, ca), (tb, cb)) in a.snapshots.iter().zip(&b.snapshots) {
            assert_eq!(ta, tb);
            assert_eq!(ca.particles, cb.particles);
            assert_eq!(ca.weights, cb.weights);
        }
    }

    #[test]
    fn systematic_resampling_preserves_the_mean_on_average() {
        let mut rng = ChaCha12Rng::seed_from_u64(53);
        let particles: Vec<_> = (0..100)
            .map(|i| DVector::from_row_slice(&[i as f64 / 10.0]))
            .collect();
        let weights: Vec<f64> = (0..100).map(|i| i as f64 + 1.0).collect();
        let total: f64 = weights.iter().sum();
        let weights: Vec<f64> = weights.iter().map(|w| w / total).collect();
        let target: f64 = particles
            .iter()
            .zip(&weights)
            .map(|(p, w)| p[0] * w)
            .sum();

        let reps = 200;
        let mut means = Vec::with_capacity(reps);
        for _ in 0..reps {
            let resampled = systematic_resample(&particles, &weights, &mut rng).unwrap();
            means.push(resampled.iter().map(|p| p[0]).sum::<f64>() / resampled.len() as f64);
        }
        let avg: f64 = means.iter().sum::<f64>() / reps as f64;
        let var: f64 = means.iter().map(|m| (m - avg).powi(2)).sum::<f64>() / reps as f64;
        let se = (var / reps as f64).sqrt();
        assert!(
            (avg - target).abs() < 3.0 * se.max(1e-6),
            "avg {avg}, target {target}, se {se}"
        );
    }

    #[test]
    fn resampled_weights_become_uniform() {
        let model = scalar_model(0.9, 0.3, 1.0, 0.1, 0.0, 2.0);
        let mut rng = ChaCha12Rng::seed_from_u64(54);
        let sim = simulate(&model, 5, &mut rng).unwrap();
        // R is small and the prior wide, so the ESS collapses and forces
        // at least one resampling
        let pf = particle_filter(&model, &sim.measurements, 200, &[5], &mut rng).unwrap();
        assert!(pf.ess.iter().any(|&e| e < 100.0));
    }

    #[test]
    fn single_particle_density_is_a_bump_at_the_particle() {
        let cloud = ParticleCloud {
            particles: vec![DVector::from_row_slice(&[1.0])],
            weights: vec![1.0],
            ess: 1.0,
        };
        let grid = Grid1d::new(-3.0, 5.0, 401).unwrap();
        let density = density_from_particles(&cloud, 0, &grid).unwrap();
        let values = grid.values();
        let peak = density
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        assert!((values[peak] - 1.0).abs() <= grid.step());
    }

    #[test]
    fn kde_integrates_to_one() {
        let mut rng = ChaCha12Rng::seed_from_u64(55);
        let mixture = GaussianMixture::new(vec![
            GaussianComponent::scalar(0.5, -1.0, 0.5).unwrap(),
            GaussianComponent::scalar(0.5, 2.0, 1.0).unwrap(),
        ])
        .unwrap();
        let particles = mixture.sample(&mut rng, 5000);
        let cloud = ParticleCloud {
            weights: vec![1.0 / particles.len() as f64; particles.len()],
            particles,
            ess: 5000.0,
        };
        let grid = Grid1d::new(-10.0, 12.0, 1101).unwrap();
        let density = density_from_particles(&cloud, 0, &grid).unwrap();
        let integral: f64 = density.iter().sum::<f64>() * grid.step();
        assert!((integral - 1.0).abs() < 1e-2, "integral {integral}");
    }

    #[test]
    fn symmetric_cloud_gives_symmetric_density() {
        let particles: Vec<_> = (1..=10)
            .flat_map(|i| {
                [
                    DVector::from_row_slice(&[i as f64 / 2.0]),
                    DVector::from_row_slice(&[-(i as f64) / 2.0]),
                ]
            })
            .collect();
        let n = particles.len();
        let cloud = ParticleCloud {
            particles,
            weights: vec![1.0 / n as f64; n],
            ess: n as f64,
        };
        let grid = Grid1d::new(-8.0, 8.0, 161).unwrap();
        let density = density_from_particles(&cloud, 0, &grid).unwrap();
        for i in 0..density.len() {
            let mirror = density.len() - 1 - i;
            assert!((density[i] - density[mirror]).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_cloud_is_an_error() {
        let cloud = ParticleCloud {
            particles: vec![],
            weights: vec![],
            ess: 0.0,
        };
        let grid = Grid1d::new(0.0, 1.0, 11).unwrap();
        assert!(density_from_particles(&cloud, 0, &grid).is_err());
    }

    #[test]
    fn two_dimensional_kde_normalizes() {
        let mut rng = ChaCha12Rng::seed_from_u64(56);
        let p = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 0.5]);
        let mixture = GaussianMixture::new(vec![GaussianComponent::new(
            1.0,
            DVector::zeros(2),
            UpperTriangular::from_covariance(&p).unwrap(),
        )
        .unwrap()])
        .unwrap();
        let particles = mixture.sample(&mut rng, 3000);
        let n = particles.len();
        let cloud = ParticleCloud {
            particles,
            weights: vec![1.0 / n as f64; n],
            ess: n as f64,
        };
        let gx = Grid1d::new(-6.0, 6.0, 121).unwrap();
        let gy = Grid1d::new(-5.0, 5.0, 101).unwrap();
        let density = density_from_particles_2d(&cloud, (0, 1), &gx, &gy).unwrap();
        let integral: f64 = density
            .iter()
            .map(|row| row.iter().sum::<f64>() * gy.step())
            .sum::<f64>()
            * gx.step();
        assert!((integral - 1.0).abs() < 2e-2, "integral {integral}");
    }
}
