//! Greedy Kullback-Leibler mixture reduction.
//!
//! Components are merged pairwise, moment-preservingly, choosing at each
//! iteration the pair whose merge has the smallest upper bound on the
//! Kullback-Leibler discrimination between the mixture before and after the
//! merge. Merging continues while the component count exceeds the hard cap,
//! or while it exceeds the floor and the smallest bound is still below the
//! threshold. Everything runs on square-root factors; the merged factor
//! comes from one QR of a stacked array, and the bound needs nothing beyond
//! factor diagonals.
//!
//! The [`naive`] submodule is a full-covariance twin of the same procedure.
//! It exists as an independent cross-check (and as the reduction used by the
//! covariance-form filter oracle); it must not share the square-root code
//! paths it is checking.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{half_logdet_from_factor, qr_r_factor, UpperTriangular};
use crate::mixture::{GaussianComponent, GaussianMixture};

/// Components lighter than this are dropped before the bound table is built;
/// the conditional weights of a merge would divide by their sum.
const WEIGHT_PRUNE_FLOOR: f64 = 1e-300;

/// Bounds for the reduced component count and the merge threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct ReductionConfig {
    min_components: usize,
    max_components: usize,
    threshold: f64,
}

impl ReductionConfig {
    pub fn new(min_components: usize, max_components: usize, threshold: f64) -> Result<Self> {
        if min_components < 1 || max_components < min_components {
            return Err(Error::Argument(format!(
                "need 1 <= min <= max, got min {min_components}, max {max_components}"
            )));
        }
        if threshold <= 0.0 || !threshold.is_finite() {
            return Err(Error::Argument(format!(
                "threshold must be positive and finite, got {threshold}"
            )));
        }
        Ok(Self {
            min_components,
            max_components,
            threshold,
        })
    }

    pub fn min_components(&self) -> usize {
        self.min_components
    }

    pub fn max_components(&self) -> usize {
        self.max_components
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }
}

/// Weight, mean, and square-root factor of the moment-preserving merge of a
/// component pair. The factor is the triangular QR factor of the stack
/// `[√w̃ᵢ Rᵢ; √w̃ⱼ Rⱼ; √(w̃ᵢw̃ⱼ)(μᵢ−μⱼ)ᵀ]`, whose Gram matrix is exactly the
/// merged covariance.
fn merged_parts(
    ci: &GaussianComponent,
    cj: &GaussianComponent,
) -> Result<(f64, DVector<f64>, UpperTriangular)> {
    let n = ci.dim();
    if cj.dim() != n {
        return Err(Error::Argument(format!(
            "cannot merge components of dimension {} and {}",
            n,
            cj.dim()
        )));
    }
    let w = ci.weight() + cj.weight();
    if w <= 0.0 {
        return Err(Error::DegenerateWeights(format!(
            "combined merge weight is {w}"
        )));
    }
    let wi = ci.weight() / w;
    let wj = cj.weight() / w;
    let mean = wi * ci.mean() + wj * cj.mean();

    let mut stack = DMatrix::zeros(2 * n + 1, n);
    let si = wi.sqrt();
    let sj = wj.sqrt();
    let sij = (wi * wj).sqrt();
    let diff = ci.mean() - cj.mean();
    for col in 0..n {
        for row in 0..n {
            stack[(row, col)] = si * ci.cov_sqrt().entry(row, col);
            stack[(n + row, col)] = sj * cj.cov_sqrt().entry(row, col);
        }
        stack[(2 * n, col)] = sij * diff[col];
    }
    let factor = qr_r_factor(&stack)?;
    Ok((w, mean, factor))
}

/// Moment-preserving merge of two components, entirely in square-root form.
pub fn merge_pair(
    ci: &GaussianComponent,
    cj: &GaussianComponent,
) -> Result<GaussianComponent> {
    let (w, mean, factor) = merged_parts(ci, cj)?;
    GaussianComponent::new(w, mean, factor)
}

/// Upper bound on the Kullback-Leibler discrimination incurred by merging
/// the pair: `½[w_ij log|P_ij| − wᵢ log|Pᵢ| − wⱼ log|Pⱼ|]`, evaluated from
/// factor diagonals. Nonnegative up to roundoff, zero for identical
/// components.
pub fn kl_bound(ci: &GaussianComponent, cj: &GaussianComponent) -> Result<f64> {
    let (w, _, merged) = merged_parts(ci, cj)?;
    Ok(w * half_logdet_from_factor(&merged)?
        - ci.weight() * half_logdet_from_factor(ci.cov_sqrt())?
        - cj.weight() * half_logdet_from_factor(cj.cov_sqrt())?)
}

/// What a [`reduce_with_report`] run did.
#[derive(Debug, Clone, PartialEq)]
pub struct ReductionReport {
    pub input_count: usize,
    pub output_count: usize,
    pub merges: usize,
    /// Smallest bound left on the table when the loop stopped; `None` when a
    /// single component remains.
    pub final_min_bound: Option<f64>,
}

/// Reduces a normalized mixture per the greedy merge loop.
pub fn reduce(mixture: &GaussianMixture, cfg: &ReductionConfig) -> Result<GaussianMixture> {
    reduce_with_report(mixture, cfg).map(|(m, _)| m)
}

/// [`reduce`], also reporting counts and the final minimum bound.
pub fn reduce_with_report(
    mixture: &GaussianMixture,
    cfg: &ReductionConfig,
) -> Result<(GaussianMixture, ReductionReport)> {
    let input_count = mixture.len();

    // Zero-weight components would make the conditional merge weights 0/0.
    let mut comps: Vec<GaussianComponent> = mixture
        .components()
        .iter()
        .filter(|c| c.weight() >= WEIGHT_PRUNE_FLOOR)
        .cloned()
        .collect();
    if comps.is_empty() {
        return Err(Error::DegenerateWeights(
            "all components fell below the weight floor".into(),
        ));
    }

    let n = comps.len();
    let mut alive = vec![true; n];
    let mut k = n;

    // Symmetric bound table over live indices; only the upper triangle is
    // stored and negative roundoff is clamped to zero.
    let mut bounds = vec![0.0_f64; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            bounds[i * n + j] = kl_bound(&comps[i], &comps[j])?.max(0.0);
        }
    }

    let mut merges = 0usize;
    while let Some((min_bound, i_star, j_star)) = scan_min(&bounds, &alive, n) {
        let must_merge = k > cfg.max_components;
        let may_merge = k > cfg.min_components && min_bound < cfg.threshold;
        if !must_merge && !may_merge {
            break;
        }

        comps[i_star] = merge_pair(&comps[i_star], &comps[j_star])?;
        alive[j_star] = false;
        k -= 1;
        merges += 1;

        // only the i*'th row and column of the table changed
        for m in (0..n).filter(|&m| m != i_star && alive[m]) {
            let (lo, hi) = (m.min(i_star), m.max(i_star));
            bounds[lo * n + hi] = kl_bound(&comps[lo], &comps[hi])?.max(0.0);
        }
    }

    let final_min = scan_min(&bounds, &alive, n).map(|(b, _, _)| b);
    let survivors: Vec<GaussianComponent> = comps
        .into_iter()
        .zip(alive)
        .filter_map(|(c, keep)| keep.then_some(c))
        .collect();
    let reduced = GaussianMixture::new(survivors)?.normalize_weights()?;
    let report = ReductionReport {
        input_count,
        output_count: reduced.len(),
        merges,
        final_min_bound: final_min,
    };
    Ok((reduced, report))
}

/// Smallest live bound and its pair; ties resolve to the smallest `(i, j)`.
fn scan_min(bounds: &[f64], alive: &[bool], n: usize) -> Option<(f64, usize, usize)> {
    let mut best: Option<(f64, usize, usize)> = None;
    for i in 0..n {
        if !alive[i] {
            continue;
        }
        for j in (i + 1)..n {
            if !alive[j] {
                continue;
            }
            let b = bounds[i * n + j];
            if best.is_none_or(|(bb, _, _)| b < bb) {
                best = Some((b, i, j));
            }
        }
    }
    best
}

pub mod naive {
    //! Full-covariance twin of the reduction, used as an independent oracle
    //! and by the covariance-form filter. Determinants come from LU, not
    //! from factor diagonals.

    use nalgebra::{DMatrix, DVector};

    use super::ReductionConfig;
    use crate::error::{Error, Result};

    /// A mixture component carried in moment form.
    #[derive(Debug, Clone, PartialEq)]
    pub struct FullComponent {
        pub weight: f64,
        pub mean: DVector<f64>,
        pub cov: DMatrix<f64>,
    }

    impl FullComponent {
        pub fn symmetrized(mut self) -> Self {
            let t = self.cov.transpose();
            self.cov = 0.5 * (&self.cov + t);
            self
        }
    }

    pub fn merge_full(a: &FullComponent, b: &FullComponent) -> Result<FullComponent> {
        let w = a.weight + b.weight;
        if w <= 0.0 {
            return Err(Error::DegenerateWeights(format!(
                "combined merge weight is {w}"
            )));
        }
        let wa = a.weight / w;
        let wb = b.weight / w;
        let mean = wa * &a.mean + wb * &b.mean;
        let d = &a.mean - &b.mean;
        let cov = wa * &a.cov + wb * &b.cov + (wa * wb) * (&d * d.transpose());
        Ok(FullComponent {
            weight: w,
            mean,
            cov,
        }
        .symmetrized())
    }

    pub fn kl_bound_full(a: &FullComponent, b: &FullComponent) -> Result<f64> {
        let merged = merge_full(a, b)?;
        let log_det = |c: &FullComponent| -> Result<f64> {
            let det = c.cov.determinant();
            if !det.is_finite() || det <= 0.0 {
                return Err(Error::CovarianceBreakdown(format!(
                    "covariance determinant is {det}"
                )));
            }
            Ok(det.ln())
        };
        Ok(0.5
            * (merged.weight * log_det(&merged)?
                - a.weight * log_det(a)?
                - b.weight * log_det(b)?))
    }

    /// Same greedy loop and tie-breaking as the square-root reduction.
    pub fn reduce_full(
        components: &[FullComponent],
        cfg: &ReductionConfig,
    ) -> Result<Vec<FullComponent>> {
        let mut comps: Vec<FullComponent> = components
            .iter()
            .filter(|c| c.weight >= super::WEIGHT_PRUNE_FLOOR)
            .cloned()
            .collect();
        if comps.is_empty() {
            return Err(Error::DegenerateWeights(
                "all components fell below the weight floor".into(),
            ));
        }
        let n = comps.len();
        let mut alive = vec![true; n];
        let mut k = n;
        let mut bounds = vec![0.0_f64; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                bounds[i * n + j] = kl_bound_full(&comps[i], &comps[j])?.max(0.0);
            }
        }
        while let Some((min_bound, i_star, j_star)) = super::scan_min(&bounds, &alive, n) {
            let must_merge = k > cfg.max_components();
            let may_merge = k > cfg.min_components() && min_bound < cfg.threshold();
            if !must_merge && !may_merge {
                break;
            }
            comps[i_star] = merge_full(&comps[i_star], &comps[j_star])?;
            alive[j_star] = false;
            k -= 1;
            for m in (0..n).filter(|&m| m != i_star && alive[m]) {
                let (lo, hi) = (m.min(i_star), m.max(i_star));
                bounds[lo * n + hi] = kl_bound_full(&comps[lo], &comps[hi])?.max(0.0);
            }
        }
        let mut survivors: Vec<FullComponent> = comps
            .into_iter()
            .zip(alive)
            .filter_map(|(c, keep)| keep.then_some(c))
            .collect();
        let total: f64 = survivors.iter().map(|c| c.weight).sum();
        if total <= 0.0 {
            return Err(Error::DegenerateWeights(format!("weight sum is {total}")));
        }
        for c in &mut survivors {
            c.weight /= total;
        }
        Ok(survivors)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha12Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn scalar(w: f64, mean: f64, var: f64) -> GaussianComponent {
        GaussianComponent::scalar(w, mean, var.sqrt()).unwrap()
    }

    fn randn(rng: &mut ChaCha12Rng) -> f64 {
        StandardNormal.sample(rng)
    }

    fn random_component(rng: &mut ChaCha12Rng, dim: usize, weight: f64) -> GaussianComponent {
        let mean = DVector::from_fn(dim, |_, _| 3.0 * randn(rng));
        let mut r = DMatrix::zeros(dim, dim);
        for i in 0..dim {
            for j in i..dim {
                r[(i, j)] = if i == j {
                    0.5 + rng.random::<f64>() * 1.5
                } else {
                    0.3 * randn(rng)
                };
            }
        }
        GaussianComponent::new(weight, mean, UpperTriangular::new(r).unwrap()).unwrap()
    }

    fn to_full(c: &GaussianComponent) -> naive::FullComponent {
        naive::FullComponent {
            weight: c.weight(),
            mean: c.mean().clone(),
            cov: c.covariance(),
        }
    }

    #[test]
    fn merging_identical_components_keeps_moments() {
        let a = scalar(0.5, 0.0, 1.0);
        let b = scalar(0.5, 0.0, 1.0);
        let m = merge_pair(&a, &b).unwrap();
        assert!((m.weight() - 1.0).abs() < 1e-15);
        assert!(m.mean()[0].abs() < 1e-15);
        assert!((m.covariance()[(0, 0)] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn hand_worked_merge() {
        let a = scalar(0.25, 1.0, 1.0);
        let b = scalar(0.25, -1.0, 1.0);
        let m = merge_pair(&a, &b).unwrap();
        assert!((m.weight() - 0.5).abs() < 1e-15);
        assert!(m.mean()[0].abs() < 1e-15);
        assert!((m.covariance()[(0, 0)] - 2.0).abs() < 1e-12);
        assert!((m.cov_sqrt().entry(0, 0) - 2.0_f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn merge_matches_full_covariance_route() {
        let mut rng = ChaCha12Rng::seed_from_u64(21);
        for _ in 0..50 {
            let a = random_component(&mut rng, 3, 0.4);
            let b = random_component(&mut rng, 3, 0.6);
            let m = merge_pair(&a, &b).unwrap();
            let full = naive::merge_full(&to_full(&a), &to_full(&b)).unwrap();
            assert!((m.weight() - full.weight).abs() < 1e-14);
            assert!((m.mean() - &full.mean).norm() < 1e-12);
            let diff = m.covariance() - &full.cov;
            assert!(diff.iter().all(|x| x.abs() < 1e-10));
        }
    }

    #[test]
    fn merge_rejects_zero_weights() {
        let a = scalar(0.0, 1.0, 1.0);
        let b = scalar(0.0, -1.0, 1.0);
        assert!(matches!(
            merge_pair(&a, &b),
            Err(Error::DegenerateWeights(_))
        ));
    }

    #[test]
    fn bound_of_identical_components_is_zero() {
        let a = scalar(0.3, 2.0, 1.5);
        let b = kl_bound(&a, &a.clone()).unwrap();
        assert!(b.abs() < 1e-12, "bound {b}");
    }

    #[test]
    fn hand_worked_bound() {
        let a = scalar(0.25, 1.0, 1.0);
        let b = scalar(0.25, -1.0, 1.0);
        let got = kl_bound(&a, &b).unwrap();
        let want = 0.25 * 2.0_f64.ln();
        assert!((got - want).abs() < 1e-12, "got {got}, want {want}");
    }

    #[test]
    fn bound_matches_full_determinant_route() {
        let mut rng = ChaCha12Rng::seed_from_u64(23);
        for _ in 0..50 {
            let a = random_component(&mut rng, 2, 0.3);
            let b = random_component(&mut rng, 2, 0.7);
            let sqrt_route = kl_bound(&a, &b).unwrap();
            let full_route = naive::kl_bound_full(&to_full(&a), &to_full(&b)).unwrap();
            assert!(
                (sqrt_route - full_route).abs() < 1e-9,
                "sqrt {sqrt_route}, full {full_route}"
            );
        }
    }

    #[test]
    fn single_component_mixture_is_untouched() {
        let m = GaussianMixture::new(vec![scalar(1.0, 0.5, 2.0)]).unwrap();
        let cfg = ReductionConfig::new(1, 10, 1e-6).unwrap();
        let out = reduce(&m, &cfg).unwrap();
        assert_eq!(out, m);
    }

    #[test]
    fn identical_pair_collapses_to_one() {
        let m = GaussianMixture::new(vec![scalar(0.5, 1.0, 1.0), scalar(0.5, 1.0, 1.0)]).unwrap();
        let cfg = ReductionConfig::new(1, 10, 1e-6).unwrap();
        let (out, report) = reduce_with_report(&m, &cfg).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(report.merges, 1);
        assert!((out.components()[0].weight() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn floor_blocks_merges_even_for_identical_components() {
        // with N <= min_components the loop guard never fires
        let m = GaussianMixture::new(vec![scalar(0.5, 1.0, 1.0), scalar(0.5, 1.0, 1.0)]).unwrap();
        let cfg = ReductionConfig::new(2, 10, 1e-6).unwrap();
        let out = reduce(&m, &cfg).unwrap();
        assert_eq!(out.len(), 2);
    }

    #[test]
    fn hard_cap_forces_merges_above_threshold() {
        let comps: Vec<_> = (0..6).map(|i| scalar(1.0 / 6.0, i as f64 * 50.0, 1.0)).collect();
        let m = GaussianMixture::new(comps).unwrap();
        // bounds are huge, but the cap still forces down to 3
        let cfg = ReductionConfig::new(1, 3, 1e-9).unwrap();
        let out = reduce(&m, &cfg).unwrap();
        assert_eq!(out.len(), 3);
    }

    #[test]
    fn reduce_preserves_whole_mixture_moments() {
        let mut rng = ChaCha12Rng::seed_from_u64(29);
        let comps: Vec<_> = (0..12)
            .map(|_| { let w = rng.random::<f64>() + 0.1; random_component(&mut rng, 2, w) })
            .collect();
        let m = GaussianMixture::new(comps).unwrap().normalize_weights().unwrap();
        let (mean_before, cov_before) = m.moments();
        let cfg = ReductionConfig::new(1, 4, 0.5).unwrap();
        let out = reduce(&m, &cfg).unwrap();
        assert!(out.len() <= 4);
        let (mean_after, cov_after) = out.moments();
        assert!((mean_before - mean_after).norm() < 1e-9);
        assert!((cov_before - cov_after).norm() < 1e-9);
    }

    #[test]
    fn reduce_is_deterministic() {
        let mut rng = ChaCha12Rng::seed_from_u64(31);
        let comps: Vec<_> = (0..10)
            .map(|_| { let w = rng.random::<f64>() + 0.05; random_component(&mut rng, 3, w) })
            .collect();
        let m = GaussianMixture::new(comps).unwrap().normalize_weights().unwrap();
        let cfg = ReductionConfig::new(2, 5, 0.3).unwrap();
        let a = reduce(&m, &cfg).unwrap();
        let b = reduce(&m, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn ties_break_toward_smallest_indices() {
        // three identical components: (0,1) merges first, then (0,2)
        let m = GaussianMixture::new(vec![
            scalar(1.0 / 3.0, 4.0, 1.0),
            scalar(1.0 / 3.0, 4.0, 1.0),
            scalar(1.0 / 3.0, 4.0, 1.0),
        ])
        .unwrap();
        let cfg = ReductionConfig::new(1, 10, 1e-3).unwrap();
        let (out, report) = reduce_with_report(&m, &cfg).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(report.merges, 2);
    }

    #[test]
    fn zero_weight_components_are_pruned_first() {
        let m = GaussianMixture::new(vec![
            scalar(0.5, 0.0, 1.0),
            GaussianComponent::scalar(0.0, 100.0, 1.0).unwrap(),
            scalar(0.5, 1.0, 1.0),
        ])
        .unwrap();
        let cfg = ReductionConfig::new(1, 10, 1e-12).unwrap();
        let out = reduce(&m, &cfg).unwrap();
        assert_eq!(out.len(), 2);
        assert!(out.components().iter().all(|c| c.mean()[0] < 50.0));
    }

    #[test]
    fn naive_reduction_agrees_with_square_root_reduction() {
        let mut rng = ChaCha12Rng::seed_from_u64(37);
        let comps: Vec<_> = (0..15)
            .map(|_| { let w = rng.random::<f64>() + 0.05; random_component(&mut rng, 2, w) })
            .collect();
        let m = GaussianMixture::new(comps).unwrap().normalize_weights().unwrap();
        let cfg = ReductionConfig::new(1, 6, 0.2).unwrap();
        let sqrt_out = reduce(&m, &cfg).unwrap();
        let full_in: Vec<_> = m.components().iter().map(to_full).collect();
        let full_out = naive::reduce_full(&full_in, &cfg).unwrap();
        assert_eq!(sqrt_out.len(), full_out.len());
        for (a, b) in sqrt_out.components().iter().zip(&full_out) {
            assert!((a.weight() - b.weight).abs() < 1e-9);
            assert!((a.mean() - &b.mean).norm() < 1e-8);
            let diff = a.covariance() - &b.cov;
            assert!(diff.iter().all(|x| x.abs() < 1e-7));
        }
    }
}
