//! Linear Gaussian study: recovery from a deliberately wrong prior.
//!
//! The mixture filter starts from a 25-component grid prior spread over
//! (-10, 10)² while the data comes from a standard-normal prior. The
//! reduction folds the grid into a single component within a few steps,
//! after which the filter is exactly a Kalman filter.
//!
//! ```text
//! cargo run --release --example linear_ssm
//! ```

use gmm_filter::harness::{builtin_experiment, run_experiment, RunOverrides};

fn main() -> gmm_filter::Result<()> {
    let cfg = builtin_experiment("linear-ssm")?;
    let artifacts = run_experiment(
        &cfg,
        &RunOverrides {
            out_dir: Some("out/linear-ssm".into()),
            ..RunOverrides::default()
        },
    )?;

    let trace = artifacts.gmmf_trace.as_ref().expect("gmmf ran");
    let collapse = trace
        .steps
        .iter()
        .find(|s| s.predicted_post_count == 1)
        .map(|s| s.t);
    println!("predicted component counts over the first 10 steps:");
    for step in trace.steps.iter().take(10) {
        println!(
            "  t = {:>2}: {:>2} components (filtered: {})",
            step.t, step.predicted_post_count, step.filtered_post_count
        );
    }
    match collapse {
        Some(t) => println!("collapsed to a single predicted component at t = {t}"),
        None => println!("never collapsed to a single component"),
    }

    for (name, m) in &artifacts.metrics.methods {
        println!(
            "{name:<8} rmse(pred) = {:.4}",
            m.rmse_predicted.unwrap_or(f64::NAN)
        );
    }
    println!("artifacts in {}", artifacts.out_dir.display());
    Ok(())
}
