//! Mixture reduction on its own: build a cluttered 40-component mixture,
//! reduce it under a component cap, and verify that the whole-mixture mean
//! and covariance are preserved (every merge is moment-preserving).
//!
//! ```text
//! cargo run --release --example mixture_reduction
//! ```

use nalgebra::DVector;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha12Rng;

use gmm_filter::linalg::UpperTriangular;
use gmm_filter::mixture::{GaussianComponent, GaussianMixture};
use gmm_filter::reduction::{kl_bound, reduce_with_report, ReductionConfig};

fn main() -> gmm_filter::Result<()> {
    let mut rng = ChaCha12Rng::seed_from_u64(7);

    // three clusters of near-duplicates plus scattered stragglers
    let mut comps = Vec::new();
    for center in [-6.0, 0.0, 5.0] {
        for _ in 0..12 {
            comps.push(GaussianComponent::new(
                rng.random::<f64>() + 0.2,
                DVector::from_row_slice(&[center + 0.3 * rng.random::<f64>()]),
                UpperTriangular::from_diagonal(&[0.8 + 0.2 * rng.random::<f64>()])?,
            )?);
        }
    }
    for _ in 0..4 {
        comps.push(GaussianComponent::new(
            0.05,
            DVector::from_row_slice(&[20.0 * rng.random::<f64>() - 10.0]),
            UpperTriangular::from_diagonal(&[2.0])?,
        )?);
    }
    let mixture = GaussianMixture::new(comps)?.normalize_weights()?;
    let (mean_before, cov_before) = mixture.moments();

    let cfg = ReductionConfig::new(1, 6, 0.05)?;
    let (reduced, report) = reduce_with_report(&mixture, &cfg)?;
    let (mean_after, cov_after) = reduced.moments();

    println!(
        "reduced {} -> {} components in {} merges",
        report.input_count, report.output_count, report.merges
    );
    if let Some(b) = report.final_min_bound {
        println!("smallest remaining merge bound: {b:.5}");
    }
    println!(
        "whole-mixture mean drift:       {:.2e}",
        (mean_before - mean_after).amax()
    );
    println!(
        "whole-mixture covariance drift: {:.2e}",
        (cov_before - cov_after).amax()
    );

    println!("surviving components:");
    for c in reduced.components() {
        println!(
            "  weight {:.3}  mean {:+.3}  std {:.3}",
            c.weight(),
            c.mean()[0],
            c.covariance()[(0, 0)].sqrt()
        );
    }

    // the bound that drives the greedy choice, on a worked pair
    let a = GaussianComponent::scalar(0.25, 1.0, 1.0)?;
    let b = GaussianComponent::scalar(0.25, -1.0, 1.0)?;
    println!(
        "bound for the (±1, unit variance, quarter weight) pair: {:.5} (= ¼ ln 2)",
        kl_bound(&a, &b)?
    );
    Ok(())
}
