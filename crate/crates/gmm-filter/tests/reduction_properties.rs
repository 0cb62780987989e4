//! Property tests for the mixture-reduction invariants.

use nalgebra::{DMatrix, DVector};
use proptest::collection::vec;
use proptest::prelude::*;

use gmm_filter::linalg::UpperTriangular;
use gmm_filter::mixture::{GaussianComponent, GaussianMixture};
use gmm_filter::reduction::{kl_bound, merge_pair, reduce, ReductionConfig};

#[derive(Debug, Clone)]
struct ComponentSpec {
    weight: f64,
    mean: Vec<f64>,
    diag: Vec<f64>,
    off: Vec<f64>,
}

fn component_strategy(dim: usize) -> impl Strategy<Value = ComponentSpec> {
    (
        0.05f64..2.0,
        vec(-5.0f64..5.0, dim),
        vec(0.3f64..2.0, dim),
        vec(-0.5f64..0.5, dim * dim),
    )
        .prop_map(|(weight, mean, diag, off)| ComponentSpec {
            weight,
            mean,
            diag,
            off,
        })
}

fn build(spec: &ComponentSpec) -> GaussianComponent {
    let dim = spec.mean.len();
    let mut r = DMatrix::zeros(dim, dim);
    for i in 0..dim {
        for j in i..dim {
            r[(i, j)] = if i == j {
                spec.diag[i]
            } else {
                spec.off[i * dim + j]
            };
        }
    }
    GaussianComponent::new(
        spec.weight,
        DVector::from_row_slice(&spec.mean),
        UpperTriangular::new(r).unwrap(),
    )
    .unwrap()
}

fn mixture_strategy() -> impl Strategy<Value = GaussianMixture> {
    (1usize..4).prop_flat_map(|dim| {
        vec(component_strategy(dim), 2..12).prop_map(|specs| {
            GaussianMixture::new(specs.iter().map(build).collect())
                .unwrap()
                .normalize_weights()
                .unwrap()
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn merges_preserve_pair_moments(m in mixture_strategy()) {
        let a = &m.components()[0];
        let b = &m.components()[1];
        let merged = merge_pair(a, b).unwrap();
        prop_assert!((merged.weight() - (a.weight() + b.weight())).abs() < 1e-15);
        let pair = GaussianMixture::new(vec![a.clone(), b.clone()])
            .unwrap()
            .normalize_weights()
            .unwrap();
        let (mean, cov) = pair.moments();
        prop_assert!((merged.mean() - mean).amax() < 1e-10);
        prop_assert!((merged.covariance() - cov).amax() < 1e-10);
    }

    #[test]
    fn bounds_are_symmetric_nonnegative_and_zero_on_the_diagonal(m in mixture_strategy()) {
        let a = &m.components()[0];
        let b = &m.components()[1];
        let b_ab = kl_bound(a, b).unwrap();
        let b_ba = kl_bound(b, a).unwrap();
        prop_assert!((b_ab - b_ba).abs() < 1e-10);
        prop_assert!(b_ab > -1e-12);
        prop_assert!(kl_bound(a, &a.clone()).unwrap().abs() < 1e-10);
    }

    #[test]
    fn reduction_respects_the_cap_and_preserves_moments(
        m in mixture_strategy(),
        m_u in 1usize..6,
        lambda in 1e-4f64..1.0,
    ) {
        let cfg = ReductionConfig::new(1, m_u, lambda).unwrap();
        let (mean_before, cov_before) = m.moments();
        let reduced = reduce(&m, &cfg).unwrap();
        prop_assert!(reduced.len() <= m_u);
        prop_assert!((reduced.weight_sum() - 1.0).abs() < 1e-12);
        let (mean_after, cov_after) = reduced.moments();
        prop_assert!((mean_before - mean_after).amax() < 1e-9);
        prop_assert!((cov_before - cov_after).amax() < 1e-9);
    }

    #[test]
    fn reduction_is_deterministic(m in mixture_strategy(), m_u in 1usize..6) {
        let cfg = ReductionConfig::new(1, m_u, 0.05).unwrap();
        let a = reduce(&m, &cfg).unwrap();
        let b = reduce(&m, &cfg).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn threshold_stops_only_above_the_floor(m in mixture_strategy()) {
        // with the floor at the input size no merge may happen at all
        let cfg = ReductionConfig::new(m.len(), m.len(), 1e6).unwrap();
        let reduced = reduce(&m, &cfg).unwrap();
        prop_assert_eq!(reduced.len(), m.len());
    }

    #[test]
    fn mixture_json_round_trips_exactly(m in mixture_strategy()) {
        let text = serde_json::to_string(&m).unwrap();
        let back: GaussianMixture = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(m, back);
    }
}
