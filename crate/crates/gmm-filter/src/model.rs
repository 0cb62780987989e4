//! State-space model types: mixture priors, mixture process and measurement
//! models, nonlinear wrappers with per-component affine linearization,
//! component splitting, and trajectory simulation.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngExt};
use rand_distr::{Distribution, StandardNormal};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::linalg::{qr_r_factor, solve_upper_transposed, UpperTriangular};
use crate::mixture::{GaussianComponent, GaussianMixture};

/// Tolerance on weight sums of prior/process/measurement mixtures.
const WEIGHT_SUM_TOL: f64 = 1e-12;

/// A step-indexed mean offset (`u_t` on the process side, `v_t` on the
/// measurement side): known input signals that do not depend on the state.
/// Step indices are 1-based.
#[derive(Clone)]
pub enum OffsetSignal {
    None,
    Constant(DVector<f64>),
    /// `amplitude · sin(angular_frequency · t)` on one axis.
    Sin {
        axis: usize,
        amplitude: f64,
        angular_frequency: f64,
    },
    /// `amplitude · cos(angular_frequency · t)` on one axis.
    Cos {
        axis: usize,
        amplitude: f64,
        angular_frequency: f64,
    },
    /// A realized per-step sequence; step `t` reads entry `t − 1`, zero
    /// beyond the end.
    Samples(Arc<Vec<DVector<f64>>>),
    Custom(Arc<dyn Fn(usize) -> DVector<f64> + Send + Sync>),
}

impl OffsetSignal {
    pub fn at(&self, t: usize, dim: usize) -> DVector<f64> {
        match self {
            OffsetSignal::None => DVector::zeros(dim),
            OffsetSignal::Constant(v) => v.clone(),
            OffsetSignal::Sin {
                axis,
                amplitude,
                angular_frequency,
            } => {
                let mut v = DVector::zeros(dim);
                v[*axis] = amplitude * (angular_frequency * t as f64).sin();
                v
            }
            OffsetSignal::Cos {
                axis,
                amplitude,
                angular_frequency,
            } => {
                let mut v = DVector::zeros(dim);
                v[*axis] = amplitude * (angular_frequency * t as f64).cos();
                v
            }
            OffsetSignal::Samples(seq) => seq
                .get(t.wrapping_sub(1))
                .cloned()
                .unwrap_or_else(|| DVector::zeros(dim)),
            OffsetSignal::Custom(f) => f(t),
        }
    }
}

impl fmt::Debug for OffsetSignal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OffsetSignal::None => write!(f, "None"),
            OffsetSignal::Constant(v) => write!(f, "Constant({v:?})"),
            OffsetSignal::Sin {
                axis,
                amplitude,
                angular_frequency,
            } => write!(f, "Sin(axis {axis}, {amplitude} · sin({angular_frequency} t))"),
            OffsetSignal::Cos {
                axis,
                amplitude,
                angular_frequency,
            } => write!(f, "Cos(axis {axis}, {amplitude} · cos({angular_frequency} t))"),
            OffsetSignal::Samples(s) => write!(f, "Samples(len {})", s.len()),
            OffsetSignal::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

/// One process-mixture branch: `x' = A x + u_t + w`, `w ~ N(0, Q)`, chosen
/// with probability `weight`.
#[derive(Debug, Clone)]
pub struct ProcessComponent {
    pub weight: f64,
    pub a: DMatrix<f64>,
    pub offset: OffsetSignal,
    pub q_sqrt: UpperTriangular,
}

/// One measurement-mixture branch: `y = C x + v_t + e`, `e ~ N(0, R)`,
/// chosen with probability `weight`.
#[derive(Debug, Clone)]
pub struct MeasurementComponent {
    pub weight: f64,
    pub c: DMatrix<f64>,
    pub offset: OffsetSignal,
    pub r_sqrt: UpperTriangular,
}

/// A linear state-space model whose prior, process, and measurement are all
/// Gaussian mixtures.
#[derive(Debug, Clone)]
pub struct GmmStateSpaceModel {
    state_dim: usize,
    measurement_dim: usize,
    prior: GaussianMixture,
    process: Vec<ProcessComponent>,
    measurement: Vec<MeasurementComponent>,
}

impl GmmStateSpaceModel {
    pub fn new(
        prior: GaussianMixture,
        process: Vec<ProcessComponent>,
        measurement: Vec<MeasurementComponent>,
    ) -> Result<Self> {
        let n = prior.dim();
        if (prior.weight_sum() - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::Argument(format!(
                "prior weights sum to {}, expected 1",
                prior.weight_sum()
            )));
        }
        if process.is_empty() || measurement.is_empty() {
            return Err(Error::Argument(
                "need at least one process and one measurement component".into(),
            ));
        }
        let beta_sum: f64 = process.iter().map(|c| c.weight).sum();
        if (beta_sum - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::Argument(format!(
                "process weights sum to {beta_sum}, expected 1"
            )));
        }
        let gamma_sum: f64 = measurement.iter().map(|c| c.weight).sum();
        if (gamma_sum - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::Argument(format!(
                "measurement weights sum to {gamma_sum}, expected 1"
            )));
        }
        for (j, c) in process.iter().enumerate() {
            if c.weight < 0.0 || !c.weight.is_finite() {
                return Err(Error::Argument(format!(
                    "process component {j} has weight {}",
                    c.weight
                )));
            }
            if c.a.nrows() != n || c.a.ncols() != n || c.q_sqrt.dim() != n {
                return Err(Error::Argument(format!(
                    "process component {j} has inconsistent dimensions (state dim {n})"
                )));
            }
        }
        let p = measurement[0].c.nrows();
        for (k, c) in measurement.iter().enumerate() {
            if c.weight < 0.0 || !c.weight.is_finite() {
                return Err(Error::Argument(format!(
                    "measurement component {k} has weight {}",
                    c.weight
                )));
            }
            if c.c.nrows() != p || c.c.ncols() != n || c.r_sqrt.dim() != p {
                return Err(Error::Argument(format!(
                    "measurement component {k} has inconsistent dimensions (state dim {n}, measurement dim {p})"
                )));
            }
        }
        Ok(Self {
            state_dim: n,
            measurement_dim: p,
            prior,
            process,
            measurement,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn measurement_dim(&self) -> usize {
        self.measurement_dim
    }

    pub fn prior(&self) -> &GaussianMixture {
        &self.prior
    }

    pub fn process(&self) -> &[ProcessComponent] {
        &self.process
    }

    pub fn measurement(&self) -> &[MeasurementComponent] {
        &self.measurement
    }

    /// The same model with a different prior (e.g. a deliberately mismatched
    /// one for filter studies).
    pub fn with_prior(&self, prior: GaussianMixture) -> Result<Self> {
        Self::new(prior, self.process.clone(), self.measurement.clone())
    }
}

type StateFn = Arc<dyn Fn(&DVector<f64>, usize) -> DVector<f64> + Send + Sync>;
type JacobianFn = Arc<dyn Fn(&DVector<f64>, usize) -> DMatrix<f64> + Send + Sync>;

/// A nonlinear model `x' = f(x, t) + w`, `y = h(x, t) + e` with
/// user-supplied jacobians and additive Gaussian noise. The filter handles
/// it by linearizing about each mixture component's mean.
#[derive(Clone)]
pub struct NonlinearModel {
    state_dim: usize,
    measurement_dim: usize,
    prior: GaussianMixture,
    f: StateFn,
    f_jacobian: JacobianFn,
    h: StateFn,
    h_jacobian: JacobianFn,
    pub q_sqrt: UpperTriangular,
    pub r_sqrt: UpperTriangular,
}

impl fmt::Debug for NonlinearModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NonlinearModel")
            .field("state_dim", &self.state_dim)
            .field("measurement_dim", &self.measurement_dim)
            .field("prior_components", &self.prior.len())
            .finish_non_exhaustive()
    }
}

impl NonlinearModel {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        prior: GaussianMixture,
        measurement_dim: usize,
        f: StateFn,
        f_jacobian: JacobianFn,
        h: StateFn,
        h_jacobian: JacobianFn,
        q_sqrt: UpperTriangular,
        r_sqrt: UpperTriangular,
    ) -> Result<Self> {
        let n = prior.dim();
        if q_sqrt.dim() != n {
            return Err(Error::Argument(format!(
                "process noise factor has dimension {}, expected {n}",
                q_sqrt.dim()
            )));
        }
        if r_sqrt.dim() != measurement_dim {
            return Err(Error::Argument(format!(
                "measurement noise factor has dimension {}, expected {measurement_dim}",
                r_sqrt.dim()
            )));
        }
        if (prior.weight_sum() - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::Argument(format!(
                "prior weights sum to {}, expected 1",
                prior.weight_sum()
            )));
        }
        Ok(Self {
            state_dim: n,
            measurement_dim,
            prior,
            f,
            f_jacobian,
            h,
            h_jacobian,
            q_sqrt,
            r_sqrt,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn measurement_dim(&self) -> usize {
        self.measurement_dim
    }

    pub fn prior(&self) -> &GaussianMixture {
        &self.prior
    }

    pub fn with_prior(&self, prior: GaussianMixture) -> Result<Self> {
        let mut m = self.clone();
        if prior.dim() != self.state_dim {
            return Err(Error::Argument(format!(
                "prior has dimension {}, expected {}",
                prior.dim(),
                self.state_dim
            )));
        }
        if (prior.weight_sum() - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::Argument(format!(
                "prior weights sum to {}, expected 1",
                prior.weight_sum()
            )));
        }
        m.prior = prior;
        Ok(m)
    }

    pub fn f(&self, x: &DVector<f64>, t: usize) -> DVector<f64> {
        (self.f)(x, t)
    }

    pub fn f_jacobian(&self, x: &DVector<f64>, t: usize) -> DMatrix<f64> {
        (self.f_jacobian)(x, t)
    }

    pub fn h(&self, x: &DVector<f64>, t: usize) -> DVector<f64> {
        (self.h)(x, t)
    }

    pub fn h_jacobian(&self, x: &DVector<f64>, t: usize) -> DMatrix<f64> {
        (self.h_jacobian)(x, t)
    }
}

/// Either model family the filter and simulator accept.
#[derive(Debug, Clone)]
pub enum Model {
    Gmm(GmmStateSpaceModel),
    Nonlinear(NonlinearModel),
}

impl Model {
    pub fn state_dim(&self) -> usize {
        match self {
            Model::Gmm(m) => m.state_dim(),
            Model::Nonlinear(m) => m.state_dim(),
        }
    }

    pub fn measurement_dim(&self) -> usize {
        match self {
            Model::Gmm(m) => m.measurement_dim(),
            Model::Nonlinear(m) => m.measurement_dim(),
        }
    }

    pub fn prior(&self) -> &GaussianMixture {
        match self {
            Model::Gmm(m) => m.prior(),
            Model::Nonlinear(m) => m.prior(),
        }
    }

    pub fn with_prior(&self, prior: GaussianMixture) -> Result<Model> {
        Ok(match self {
            Model::Gmm(m) => Model::Gmm(m.with_prior(prior)?),
            Model::Nonlinear(m) => Model::Nonlinear(m.with_prior(prior)?),
        })
    }
}

/// Affine expansion of the process map about `x̂` at step `t`:
/// `A = ∂f/∂x |x̂`, `u = f(x̂) − A x̂`, so `A x + u` agrees with `f` at `x̂`
/// exactly.
pub fn linearize_process(
    nm: &NonlinearModel,
    x_hat: &DVector<f64>,
    t: usize,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let a = nm.f_jacobian(x_hat, t);
    let fx = nm.f(x_hat, t);
    affine_from_jacobian(a, fx, x_hat, "process")
}

/// Affine expansion of the measurement map about `x̂` at step `t`.
pub fn linearize_measurement(
    nm: &NonlinearModel,
    x_hat: &DVector<f64>,
    t: usize,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let c = nm.h_jacobian(x_hat, t);
    let hx = nm.h(x_hat, t);
    affine_from_jacobian(c, hx, x_hat, "measurement")
}

fn affine_from_jacobian(
    jac: DMatrix<f64>,
    value: DVector<f64>,
    x_hat: &DVector<f64>,
    what: &str,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    if jac.iter().any(|x| !x.is_finite()) || value.iter().any(|x| !x.is_finite()) {
        return Err(Error::Linearization(format!(
            "{what} map produced non-finite values at expansion point {x_hat:?}"
        )));
    }
    let offset = &value - &jac * x_hat;
    Ok((jac, offset))
}

/// How many pieces a component splits into and how widely the pieces spread
/// along the principal axis (as a fraction of the standard deviation).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitConfig {
    n_s: usize,
    spread_scale: f64,
}

impl SplitConfig {
    pub fn new(n_s: usize, spread_scale: f64) -> Result<Self> {
        if n_s < 1 {
            return Err(Error::Argument("split count must be at least 1".into()));
        }
        if !(spread_scale > 0.0 && spread_scale <= 1.0) {
            return Err(Error::Argument(format!(
                "spread scale must be in (0, 1], got {spread_scale}"
            )));
        }
        Ok(Self { n_s, spread_scale })
    }

    pub fn n_s(&self) -> usize {
        self.n_s
    }

    pub fn spread_scale(&self) -> f64 {
        self.spread_scale
    }
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            n_s: 3,
            spread_scale: 0.5,
        }
    }
}

/// Splits one component into `n_s` equally weighted pieces along the
/// principal axis of its covariance.
///
/// Piece means sit at quantile-spaced symmetric offsets along the axis and
/// the shared covariance is the original with the spread of the means
/// removed (a rank-one downdate performed in square-root form), so the
/// combined weight, mean, and covariance of the pieces reproduce the
/// original component. Degenerate components (no variance along any axis, or
/// a singular factor) are returned unsplit.
pub fn split_component(
    c: &GaussianComponent,
    cfg: &SplitConfig,
) -> Result<Vec<GaussianComponent>> {
    if cfg.n_s == 1 {
        return Ok(vec![c.clone()]);
    }
    let n = c.dim();
    let p = c.covariance();

    let Some(axis) = principal_axis(&p) else {
        return Ok(vec![c.clone()]);
    };
    let sigma2 = (axis.transpose() * &p * &axis)[(0, 0)];
    if sigma2 <= 0.0 {
        return Ok(vec![c.clone()]);
    }

    // transposed solve of the axis; needed for the square-root downdate
    let w_bar = match solve_upper_transposed(c.cov_sqrt(), &axis) {
        Ok(w) => w,
        Err(_) => return Ok(vec![c.clone()]),
    };

    // quantile-spaced placement, centered exactly
    let normal = Normal::standard();
    let mut q: Vec<f64> = (1..=cfg.n_s)
        .map(|m| normal.inverse_cdf((m as f64 - 0.5) / cfg.n_s as f64))
        .collect();
    let q_mean = q.iter().sum::<f64>() / cfg.n_s as f64;
    for v in &mut q {
        *v -= q_mean;
    }

    let sigma = sigma2.sqrt();
    let mut deltas: Vec<f64> = q.iter().map(|&qm| cfg.spread_scale * sigma * qm).collect();
    let mut spread =
        deltas.iter().map(|d| d * d).sum::<f64>() / cfg.n_s as f64;

    // the downdate needs spread · ‖w̄‖² < 1; shrink the placement if not
    let wn2 = w_bar.norm_squared();
    if spread * wn2 >= 1.0 {
        let shrink = (0.99 / (spread * wn2)).sqrt();
        for d in &mut deltas {
            *d *= shrink;
        }
        spread *= shrink * shrink;
    }

    // S = I − α w̄ w̄ᵀ with SᵀS = I − spread · w̄ w̄ᵀ, then retriangularize S·R
    let alpha = (1.0 - (1.0 - spread * wn2).sqrt()) / wn2;
    let s = DMatrix::identity(n, n) - alpha * &w_bar * w_bar.transpose();
    let shrunk = qr_r_factor(&(s * c.cov_sqrt().as_matrix()))?;

    let w_piece = c.weight() / cfg.n_s as f64;
    deltas
        .iter()
        .map(|&d| GaussianComponent::new(w_piece, c.mean() + d * &axis, shrunk.clone()))
        .collect()
}

/// Splits every component of a mixture; the total weight is unchanged.
pub fn split_mixture(m: &GaussianMixture, cfg: &SplitConfig) -> Result<GaussianMixture> {
    if cfg.n_s == 1 {
        return Ok(m.clone());
    }
    let mut out = Vec::with_capacity(m.len() * cfg.n_s);
    for c in m.components() {
        out.extend(split_component(c, cfg)?);
    }
    GaussianMixture::new(out)
}

/// Unit-norm dominant eigenvector of a PSD matrix by power iteration.
/// Deterministic: starts from the largest-norm column, fixed iteration
/// budget. `None` when the matrix is (numerically) zero.
fn principal_axis(p: &DMatrix<f64>) -> Option<DVector<f64>> {
    let n = p.nrows();
    let mut best = 0;
    let mut best_norm = 0.0;
    for j in 0..n {
        let cn = p.column(j).norm();
        if cn > best_norm {
            best_norm = cn;
            best = j;
        }
    }
    if best_norm < 1e-300 {
        return None;
    }
    let mut v = p.column(best).clone_owned() / best_norm;
    for _ in 0..200 {
        let next = p * &v;
        let norm = next.norm();
        if norm < 1e-300 {
            return None;
        }
        let next = next / norm;
        let delta = (&next - &v).norm().min((&next + &v).norm());
        v = next;
        if delta < 1e-14 {
            break;
        }
    }
    Some(v)
}

/// A simulated trajectory with its measurements, both 1-based in step index
/// (`states[t-1]` is `x_t`).
#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub states: Vec<DVector<f64>>,
    pub measurements: Vec<DVector<f64>>,
}

/// Draws one trajectory of length `n` from the model: `x₁` from the prior,
/// process/measurement mixture branches chosen by their weights at every
/// step.
pub fn simulate<R: Rng + ?Sized>(model: &Model, n: usize, rng: &mut R) -> Result<Simulation> {
    if n < 1 {
        return Err(Error::Argument("simulation length must be at least 1".into()));
    }
    let mut states = Vec::with_capacity(n);
    let mut measurements = Vec::with_capacity(n);
    let mut x = model.prior().sample_one(rng);
    for t in 1..=n {
        let y = match model {
            Model::Gmm(m) => {
                let k = pick_index(rng, m.measurement().iter().map(|c| c.weight));
                let mc = &m.measurement()[k];
                let e = noise_draw(rng, &mc.r_sqrt);
                &mc.c * &x + mc.offset.at(t, m.measurement_dim()) + e
            }
            Model::Nonlinear(m) => {
                let e = noise_draw(rng, &m.r_sqrt);
                m.h(&x, t) + e
            }
        };
        measurements.push(y);
        states.push(x.clone());
        if t < n {
            x = match model {
                Model::Gmm(m) => {
                    let j = pick_index(rng, m.process().iter().map(|c| c.weight));
                    let pc = &m.process()[j];
                    let w = noise_draw(rng, &pc.q_sqrt);
                    &pc.a * &x + pc.offset.at(t, m.state_dim()) + w
                }
                Model::Nonlinear(m) => {
                    let w = noise_draw(rng, &m.q_sqrt);
                    m.f(&x, t) + w
                }
            };
        }
    }
    Ok(Simulation {
        states,
        measurements,
    })
}

fn noise_draw<R: Rng + ?Sized>(rng: &mut R, factor: &UpperTriangular) -> DVector<f64> {
    let z = DVector::from_fn(factor.dim(), |_, _| StandardNormal.sample(rng));
    factor.transpose_mul_vec(&z)
}

/// Categorical draw over an ordered weight list.
pub fn pick_index<R: Rng + ?Sized>(rng: &mut R, weights: impl Iterator<Item = f64>) -> usize {
    let ws: Vec<f64> = weights.collect();
    let total: f64 = ws.iter().sum();
    let u: f64 = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (i, w) in ws.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    ws.len() - 1
}

/// Checks the supplied jacobians of a nonlinear model against central finite
/// differences at `n_points` random states, relative tolerance `tol`.
pub fn validate_jacobians<R: Rng + ?Sized>(
    nm: &NonlinearModel,
    n_points: usize,
    scale: f64,
    tol: f64,
    rng: &mut R,
) -> Result<()> {
    let n = nm.state_dim();
    for _ in 0..n_points {
        let x = DVector::from_fn(n, |_, _| {
            let z: f64 = StandardNormal.sample(rng);
            scale * z
        });
        let t = 1 + (rng.random::<f64>() * 100.0) as usize;
        check_jacobian(&x, t, n, |x, t| nm.f(x, t), |x, t| nm.f_jacobian(x, t), tol, "f")?;
        check_jacobian(&x, t, n, |x, t| nm.h(x, t), |x, t| nm.h_jacobian(x, t), tol, "h")?;
    }
    Ok(())
}

fn check_jacobian(
    x: &DVector<f64>,
    t: usize,
    n: usize,
    f: impl Fn(&DVector<f64>, usize) -> DVector<f64>,
    jac: impl Fn(&DVector<f64>, usize) -> DMatrix<f64>,
    tol: f64,
    what: &str,
) -> Result<()> {
    let j = jac(x, t);
    for i in 0..n {
        let h = 1e-6 * (1.0 + x[i].abs());
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[i] += h;
        xm[i] -= h;
        let fd = (f(&xp, t) - f(&xm, t)) / (2.0 * h);
        for r in 0..fd.len() {
            let denom = j[(r, i)].abs().max(1.0);
            if (fd[r] - j[(r, i)]).abs() / denom > tol {
                return Err(Error::Linearization(format!(
                    "{what} jacobian entry ({r},{i}) disagrees with finite differences at x = {x:?}, t = {t}: supplied {}, finite-difference {}",
                    j[(r, i)],
                    fd[r]
                )));
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Builtin nonlinear models
// ---------------------------------------------------------------------------

pub const NONLINEAR_MODEL_NAMES: &[&str] = &[
    "quadratic-measurement",
    "ucm-benchmark",
    "ucm-benchmark-printed",
];

/// Builtin nonlinear models by name.
///
/// - `quadratic-measurement`: linear dynamics `x' = x + 5 cos(0.1 t) + w`
///   observed through `y = x² + e`; 50-component evenly spaced prior on
///   (−10, 10). The squared measurement carries no sign information, so the
///   filtered density is bi-modal.
/// - `ucm-benchmark`: the univariate growth model
///   `x' = 0.5x + 25x/(1+x²) + 8 cos(1.2 t) + w`, `y = 0.05 x² + e`.
/// - `ucm-benchmark-printed`: variant with the affine drift
///   `x' = 25.5x + 8 cos(1.2 t) + w` (same measurement).
pub fn nonlinear_by_name(name: &str) -> Result<NonlinearModel> {
    match name {
        "quadratic-measurement" => {
            let n_p = 50;
            let comps = (1..=n_p)
                .map(|i| {
                    GaussianComponent::scalar(
                        1.0 / n_p as f64,
                        -10.0 + (i - 1) as f64 * 20.0 / 49.0,
                        0.1_f64.sqrt(),
                    )
                })
                .collect::<Result<Vec<_>>>()?;
            NonlinearModel::new(
                GaussianMixture::new(comps)?,
                1,
                Arc::new(|x: &DVector<f64>, t: usize| {
                    DVector::from_row_slice(&[x[0] + 5.0 * (0.1 * t as f64).cos()])
                }),
                Arc::new(|_: &DVector<f64>, _| DMatrix::from_row_slice(1, 1, &[1.0])),
                Arc::new(|x: &DVector<f64>, _| DVector::from_row_slice(&[x[0] * x[0]])),
                Arc::new(|x: &DVector<f64>, _| DMatrix::from_row_slice(1, 1, &[2.0 * x[0]])),
                UpperTriangular::from_diagonal(&[0.01_f64.sqrt()])?,
                UpperTriangular::from_diagonal(&[5.0])?,
            )
        }
        "ucm-benchmark" => ucm_model(false),
        "ucm-benchmark-printed" => ucm_model(true),
        other => Err(Error::Config(format!(
            "unknown nonlinear model {other:?}; known models: {}",
            NONLINEAR_MODEL_NAMES.join(", ")
        ))),
    }
}

fn ucm_model(printed_form: bool) -> Result<NonlinearModel> {
    let prior = GaussianMixture::new(vec![GaussianComponent::scalar(1.0, 0.0, 5.0_f64.sqrt())?])?;
    let (f, f_jacobian): (StateFn, JacobianFn) = if printed_form {
        (
            Arc::new(|x: &DVector<f64>, t: usize| {
                DVector::from_row_slice(&[25.5 * x[0] + 8.0 * (1.2 * t as f64).cos()])
            }),
            Arc::new(|_: &DVector<f64>, _| DMatrix::from_row_slice(1, 1, &[25.5])),
        )
    } else {
        (
            Arc::new(|x: &DVector<f64>, t: usize| {
                let v = x[0];
                DVector::from_row_slice(&[
                    0.5 * v + 25.0 * v / (1.0 + v * v) + 8.0 * (1.2 * t as f64).cos(),
                ])
            }),
            Arc::new(|x: &DVector<f64>, _| {
                let v = x[0];
                let s = 1.0 + v * v;
                DMatrix::from_row_slice(1, 1, &[0.5 + 25.0 * (1.0 - v * v) / (s * s)])
            }),
        )
    };
    NonlinearModel::new(
        prior,
        1,
        f,
        f_jacobian,
        Arc::new(|x: &DVector<f64>, _| DVector::from_row_slice(&[0.05 * x[0] * x[0]])),
        Arc::new(|x: &DVector<f64>, _| DMatrix::from_row_slice(1, 1, &[0.1 * x[0]])),
        UpperTriangular::identity(1),
        UpperTriangular::identity(1),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn linear_scalar_model(a: f64) -> NonlinearModel {
        NonlinearModel::new(
            GaussianMixture::new(vec![GaussianComponent::scalar(1.0, 0.0, 1.0).unwrap()]).unwrap(),
            1,
            Arc::new(move |x: &DVector<f64>, _| a * x),
            Arc::new(move |_: &DVector<f64>, _| DMatrix::from_row_slice(1, 1, &[a])),
            Arc::new(|x: &DVector<f64>, _| 3.0 * x),
            Arc::new(|_: &DVector<f64>, _| DMatrix::from_row_slice(1, 1, &[3.0])),
            UpperTriangular::identity(1),
            UpperTriangular::identity(1),
        )
        .unwrap()
    }

    fn quadratic_model() -> NonlinearModel {
        NonlinearModel::new(
            GaussianMixture::new(vec![GaussianComponent::scalar(1.0, 0.0, 1.0).unwrap()]).unwrap(),
            1,
            Arc::new(|x: &DVector<f64>, _| DVector::from_row_slice(&[x[0] * x[0]])),
            Arc::new(|x: &DVector<f64>, _| DMatrix::from_row_slice(1, 1, &[2.0 * x[0]])),
            Arc::new(|x: &DVector<f64>, _| DVector::from_row_slice(&[x[0] * x[0]])),
            Arc::new(|x: &DVector<f64>, _| DMatrix::from_row_slice(1, 1, &[2.0 * x[0]])),
            UpperTriangular::identity(1),
            UpperTriangular::identity(1),
        )
        .unwrap()
    }

    #[test]
    fn linearizing_a_linear_map_is_exact() {
        let m = linear_scalar_model(2.0);
        let x = DVector::from_row_slice(&[3.0]);
        let (a, u) = linearize_process(&m, &x, 1).unwrap();
        assert_eq!(a[(0, 0)], 2.0);
        assert_eq!(u[0], 0.0);
    }

    #[test]
    fn linearizing_a_quadratic_at_two() {
        let m = quadratic_model();
        let x = DVector::from_row_slice(&[2.0]);
        let (a, u) = linearize_process(&m, &x, 1).unwrap();
        assert_eq!(a[(0, 0)], 4.0);
        assert_eq!(u[0], -4.0);
        let (c, v) = linearize_measurement(&m, &x, 1).unwrap();
        assert_eq!(c[(0, 0)], 4.0);
        assert_eq!(v[0], -4.0);
    }

    #[test]
    fn quadratic_at_stationary_point_gives_zero_gain() {
        let m = quadratic_model();
        let x = DVector::from_row_slice(&[0.0]);
        let (c, v) = linearize_measurement(&m, &x, 1).unwrap();
        assert_eq!(c[(0, 0)], 0.0);
        assert_eq!(v[0], 0.0);
    }

    #[test]
    fn affine_map_agrees_at_expansion_point() {
        let m = quadratic_model();
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        for _ in 0..20 {
            let x = DVector::from_row_slice(&[4.0 * rng.random::<f64>() - 2.0]);
            let (a, u) = linearize_process(&m, &x, 1).unwrap();
            let resid = (m.f(&x, 1) - (&a * &x + &u)).norm();
            assert_eq!(resid, 0.0);
        }
    }

    #[test]
    fn split_of_one_is_identity() {
        let c = GaussianComponent::scalar(0.7, 1.0, 2.0).unwrap();
        let cfg = SplitConfig::new(1, 0.5).unwrap();
        assert_eq!(split_component(&c, &cfg).unwrap(), vec![c]);
    }

    #[test]
    fn split_preserves_weight_mean_and_covariance() {
        let c = GaussianComponent::scalar(1.0, 0.0, 1.0).unwrap();
        let cfg = SplitConfig::new(3, 0.5).unwrap();
        let pieces = split_component(&c, &cfg).unwrap();
        assert_eq!(pieces.len(), 3);

        let m = GaussianMixture::new(pieces.clone()).unwrap();
        assert!((m.weight_sum() - 1.0).abs() < 1e-15);
        let (mean, cov) = m.moments();
        assert!(mean[0].abs() < 1e-12);
        assert!((cov[(0, 0)] - 1.0).abs() / 1.0 < 0.05);
        // the downdate is exact, not just within the 5% budget
        assert!((cov[(0, 0)] - 1.0).abs() < 1e-9);
        // symmetric placement
        assert!((pieces[0].mean()[0] + pieces[2].mean()[0]).abs() < 1e-12);
        // narrower along the split axis
        for piece in &pieces {
            assert!(piece.covariance()[(0, 0)] < 1.0);
        }
    }

    #[test]
    fn split_follows_the_principal_axis() {
        let p = DMatrix::from_row_slice(2, 2, &[4.0, 0.0, 0.0, 0.25]);
        let c = GaussianComponent::new(
            1.0,
            DVector::zeros(2),
            UpperTriangular::from_covariance(&p).unwrap(),
        )
        .unwrap();
        let pieces = split_component(&c, &SplitConfig::default()).unwrap();
        // offsets land on the high-variance first axis
        for piece in &pieces {
            assert!(piece.mean()[1].abs() < 1e-9);
        }
        let m = GaussianMixture::new(pieces).unwrap();
        let (_, cov) = m.moments();
        assert!((cov - p).norm() < 1e-9);
    }

    #[test]
    fn simulate_noiseless_identity_is_constant() {
        let prior =
            GaussianMixture::new(vec![GaussianComponent::scalar(1.0, 2.5, 0.0).unwrap()]).unwrap();
        let model = Model::Gmm(
            GmmStateSpaceModel::new(
                prior,
                vec![ProcessComponent {
                    weight: 1.0,
                    a: DMatrix::identity(1, 1),
                    offset: OffsetSignal::None,
                    q_sqrt: UpperTriangular::zeros(1),
                }],
                vec![MeasurementComponent {
                    weight: 1.0,
                    c: DMatrix::identity(1, 1),
                    offset: OffsetSignal::None,
                    r_sqrt: UpperTriangular::zeros(1),
                }],
            )
            .unwrap(),
        );
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let sim = simulate(&model, 10, &mut rng).unwrap();
        assert_eq!(sim.states.len(), 10);
        assert_eq!(sim.measurements.len(), 10);
        for (x, y) in sim.states.iter().zip(&sim.measurements) {
            assert_eq!(x[0], 2.5);
            assert_eq!(y[0], 2.5);
        }
    }

    #[test]
    fn simulate_is_reproducible() {
        let model = Model::Nonlinear(nonlinear_by_name("ucm-benchmark").unwrap());
        let a = simulate(&model, 50, &mut ChaCha12Rng::seed_from_u64(8)).unwrap();
        let b = simulate(&model, 50, &mut ChaCha12Rng::seed_from_u64(8)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn simulate_respects_measurement_branch_weights() {
        // two measurement branches with offsets ±12.5 and weights 0.1/0.9:
        // the sampled offset signs recover the branch frequencies
        let prior =
            GaussianMixture::new(vec![GaussianComponent::scalar(1.0, 0.0, 1.0).unwrap()]).unwrap();
        let c = DMatrix::from_row_slice(1, 1, &[1.0]);
        let model = Model::Gmm(
            GmmStateSpaceModel::new(
                prior,
                vec![ProcessComponent {
                    weight: 1.0,
                    a: DMatrix::identity(1, 1),
                    offset: OffsetSignal::None,
                    q_sqrt: UpperTriangular::from_diagonal(&[0.1]).unwrap(),
                }],
                vec![
                    MeasurementComponent {
                        weight: 0.1,
                        c: c.clone(),
                        offset: OffsetSignal::Constant(DVector::from_row_slice(&[12.5])),
                        r_sqrt: UpperTriangular::from_diagonal(&[0.1_f64.sqrt()]).unwrap(),
                    },
                    MeasurementComponent {
                        weight: 0.9,
                        c,
                        offset: OffsetSignal::Constant(DVector::from_row_slice(&[-12.5])),
                        r_sqrt: UpperTriangular::from_diagonal(&[0.1_f64.sqrt()]).unwrap(),
                    },
                ],
            )
            .unwrap(),
        );
        let mut rng = ChaCha12Rng::seed_from_u64(10);
        let n = 10_000;
        let sim = simulate(&model, n, &mut rng).unwrap();
        let negative_branch = sim
            .states
            .iter()
            .zip(&sim.measurements)
            .filter(|(x, y)| y[0] - x[0] < 0.0)
            .count();
        let fraction = negative_branch as f64 / n as f64;
        assert!((fraction - 0.9).abs() < 0.02, "branch fraction {fraction}");
    }

    #[test]
    fn builtin_jacobians_pass_finite_difference_check() {
        let mut rng = ChaCha12Rng::seed_from_u64(12);
        for name in ["quadratic-measurement", "ucm-benchmark", "ucm-benchmark-printed"] {
            let m = nonlinear_by_name(name).unwrap();
            validate_jacobians(&m, 25, 5.0, 1e-5, &mut rng).unwrap();
        }
    }

    #[test]
    fn broken_jacobian_fails_validation() {
        let m = NonlinearModel::new(
            GaussianMixture::new(vec![GaussianComponent::scalar(1.0, 0.0, 1.0).unwrap()]).unwrap(),
            1,
            Arc::new(|x: &DVector<f64>, _| DVector::from_row_slice(&[x[0] * x[0]])),
            Arc::new(|x: &DVector<f64>, _| DMatrix::from_row_slice(1, 1, &[3.0 * x[0]])),
            Arc::new(|x: &DVector<f64>, _| x.clone()),
            Arc::new(|_: &DVector<f64>, _| DMatrix::identity(1, 1)),
            UpperTriangular::identity(1),
            UpperTriangular::identity(1),
        )
        .unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(14);
        assert!(validate_jacobians(&m, 10, 2.0, 1e-5, &mut rng).is_err());
    }

    #[test]
    fn offset_signals_evaluate_as_described() {
        let sin = OffsetSignal::Sin {
            axis: 0,
            amplitude: 2.0,
            angular_frequency: 0.5,
        };
        assert!((sin.at(3, 2)[0] - 2.0 * 1.5_f64.sin()).abs() < 1e-15);
        assert_eq!(sin.at(3, 2)[1], 0.0);
        let samples = OffsetSignal::Samples(Arc::new(vec![DVector::from_row_slice(&[7.0])]));
        assert_eq!(samples.at(1, 1)[0], 7.0);
        assert_eq!(samples.at(2, 1)[0], 0.0);
    }

    #[test]
    fn unknown_builtin_is_an_error() {
        let err = nonlinear_by_name("no-such-model").unwrap_err();
        assert!(err.to_string().contains("ucm-benchmark"));
    }

    #[test]
    fn model_weight_sums_are_validated() {
        let prior =
            GaussianMixture::new(vec![GaussianComponent::scalar(1.0, 0.0, 1.0).unwrap()]).unwrap();
        let proc = |weight| ProcessComponent {
            weight,
            a: DMatrix::identity(1, 1),
            offset: OffsetSignal::None,
            q_sqrt: UpperTriangular::identity(1),
        };
        let meas = |weight| MeasurementComponent {
            weight,
            c: DMatrix::identity(1, 1),
            offset: OffsetSignal::None,
            r_sqrt: UpperTriangular::identity(1),
        };
        let err =
            GmmStateSpaceModel::new(prior.clone(), vec![proc(0.7)], vec![meas(1.0)]).unwrap_err();
        assert!(err.to_string().contains("process weights"));
        let err =
            GmmStateSpaceModel::new(prior.clone(), vec![proc(1.0)], vec![meas(0.5), meas(0.4)])
                .unwrap_err();
        assert!(err.to_string().contains("measurement weights"));
        let bad_prior = GaussianMixture::new(vec![
            GaussianComponent::scalar(0.7, 0.0, 1.0).unwrap(),
        ])
        .unwrap();
        let err = GmmStateSpaceModel::new(bad_prior, vec![proc(1.0)], vec![meas(1.0)]).unwrap_err();
        assert!(err.to_string().contains("prior weights"));
    }

    #[test]
    fn model_dimensions_are_validated() {
        let prior =
            GaussianMixture::new(vec![GaussianComponent::scalar(1.0, 0.0, 1.0).unwrap()]).unwrap();
        let err = GmmStateSpaceModel::new(
            prior,
            vec![ProcessComponent {
                weight: 1.0,
                a: DMatrix::identity(2, 2),
                offset: OffsetSignal::None,
                q_sqrt: UpperTriangular::identity(2),
            }],
            vec![MeasurementComponent {
                weight: 1.0,
                c: DMatrix::identity(1, 1),
                offset: OffsetSignal::None,
                r_sqrt: UpperTriangular::identity(1),
            }],
        )
        .unwrap_err();
        assert!(err.to_string().contains("process component 0"));
    }
}
