//! Data-driven and model-based policy iteration on the same rollouts.

use perimeter_adp::experiments::training::{relative_difference, relative_difference_matrix, train, Method};
use perimeter_adp::experiments::ExperimentConfig;

fn main() -> perimeter_adp::Result<()> {
    let cfg = ExperimentConfig::load(concat!(env!("CARGO_MANIFEST_DIR"), "/configs/example1.toml").as_ref())?;
    let (mf, mb) = rayon::join(|| train(&cfg, Method::ModelFree), || train(&cfg, Method::ModelBased));
    let (mf, mb) = (mf?.outcome.require_converged()?, mb?.outcome.require_converged()?);
    println!("model-free:  {} iterations, |Wc| = {:.4e}", mf.log.len(), mf.weights.wc.norm());
    println!("model-based: {} iterations, |Wc| = {:.4e}", mb.log.len(), mb.weights.wc.norm());
    println!("critic difference {:.2}%", 100.0 * relative_difference(&mf.weights.wc, &mb.weights.wc));
    println!("actor difference  {:.2}%", 100.0 * relative_difference_matrix(&mf.weights.wa, &mb.weights.wa));
    Ok(())
}
